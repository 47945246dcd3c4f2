//! Runs experiments from configuration and writes their CSV output.

use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};

use log::{info, warn};
use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;

use crate::bath::NoiseScheme;
use crate::coefficients::{evolve_coefficients, CoeffParams, CoeffState};
use crate::config::{ConfigError, ExperimentConfig, Mode, Resolved, SweepConfig, SweepPoint};
use crate::error::Error;
use crate::master::{CoefficientModel, DensityMatrix, MasterOperators, PropagationConfig, Propagator};
use crate::observables::{
    moment_residuals, compute_moments, squeezing_parameter, summarize_squeezing, MomentOperators, MomentSet,
    SqueezingPoint, SqueezingSummary,
};
use crate::spin::build_collective_operators;
use crate::trajectory::{ensemble_expectation, ensemble_trace, run_trajectories, OracleConfig};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Marks the start of the configuration echo in a CSV header.
const CONFIG_MARKER: &str = "# config:";

#[derive(Debug)]
pub enum HarnessError {
    Config(ConfigError),
    Model(Error),
    Io { path: PathBuf, source: std::io::Error },
    Csv { path: PathBuf, message: String },
    SweepFailed { runs: usize },
    SelfcheckFailed { failed: usize },
}

impl HarnessError {
    /// 0 success, 1 configuration or I/O problem, 2 numerical divergence,
    /// 3 every run of a sweep failed. A failed selfcheck reports 2.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Model(Error::Divergence { .. }) | HarnessError::SelfcheckFailed { .. } => 2,
            HarnessError::SweepFailed { .. } => 3,
            _ => 1,
        }
    }
}

impl fmt::Display for HarnessError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            HarnessError::Config(e) => write!(f, "configuration error: {e}"),
            HarnessError::Model(Error::Divergence { time }) => write!(f, "numerical divergence at t = {time}"),
            HarnessError::Model(e) => write!(f, "{e}"),
            HarnessError::Io { path, source } => write!(f, "{}: {source}", path.display()),
            HarnessError::Csv { path, message } => write!(f, "{}: {message}", path.display()),
            HarnessError::SweepFailed { runs } => write!(f, "all {runs} sweep runs failed"),
            HarnessError::SelfcheckFailed { failed } => write!(f, "{failed} selfcheck invariants failed"),
        }
    }
}

impl std::error::Error for HarnessError {}

impl From<ConfigError> for HarnessError {
    fn from(e: ConfigError) -> Self {
        match e {
            ConfigError::Invalid(inner) => HarnessError::Model(inner),
            other => HarnessError::Config(other),
        }
    }
}

impl From<Error> for HarnessError {
    fn from(e: Error) -> Self {
        HarnessError::Model(e)
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> HarnessError + '_ {
    move |source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Tabular result of one run plus what the header and summaries need.
#[derive(Clone, Debug, PartialEq)]
pub struct RunOutput {
    pub mode: Mode,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
    pub metadata: Vec<(String, String)>,
    pub squeezing: Vec<SqueezingPoint>,
    pub summary: SqueezingSummary,
}

impl RunOutput {
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let k = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| r[k]).collect())
    }
}

/// Columns written by `master` and `markov` runs.
pub const OBSERVABLE_COLUMNS: [&str; 22] = [
    "t",
    "Jt",
    "xi2",
    "min_variance",
    "Jx",
    "Jy",
    "Jz",
    "Jy2",
    "Jz2",
    "JyJz_ss",
    "purity",
    "min_eig",
    "residual_Jm",
    "residual_Jz",
    "residual_Jm2",
    "residual_Jz2",
    "residual_JzJm",
    "trace_drift",
    "hermiticity",
    "casimir_error",
    "spin_angle",
    "Jx2",
];

pub const COEFFICIENT_COLUMNS: [&str; 10] = [
    "t", "Jt", "F11_re", "F11_im", "F12_re", "F12_im", "F21_re", "F21_im", "F22_re", "F22_im",
];

pub const ORACLE_COLUMNS: [&str; 14] = [
    "t",
    "Jt",
    "Jx",
    "Jx_se",
    "Jy",
    "Jy_se",
    "Jz",
    "Jz_se",
    "Jz2",
    "Jz2_se",
    "trace",
    "trace_se",
    "trace_im",
    "trace_im_se",
];

fn coeff_model(r: &Resolved) -> CoeffParams {
    CoeffParams::new(r.hamiltonian.a, r.hamiltonian.b, r.basis.twice_j(), r.bath)
}

/// Runs the configured experiment in memory.
pub fn simulate(r: &Resolved) -> Result<RunOutput, Error> {
    match r.mode {
        Mode::Master => run_density(r, CoefficientModel::Memory(coeff_model(r))),
        Mode::Markov => run_density(r, CoefficientModel::markov(&r.bath)),
        Mode::Coefficients => run_coefficients(r),
        Mode::Oracle => run_oracle(r),
    }
}

struct DensitySample {
    t: f64,
    moments: MomentSet,
    coeffs: CoeffState,
    purity: f64,
    min_eig: f64,
    trace_drift: f64,
    hermiticity: f64,
}

fn run_density(r: &Resolved, model: CoefficientModel) -> Result<RunOutput, Error> {
    let ops = build_collective_operators(&r.basis);
    let mops = MasterOperators::new(&r.hamiltonian, &ops);
    let moment_ops = MomentOperators::new(&ops);
    let config = PropagationConfig::new(r.t_max, r.dt, r.sample_stride)?;
    let propagator = Propagator::new(&mops, model, config)?;
    let mut samples = Vec::new();
    let summary = propagator.run(&DensityMatrix::from_state(&r.initial), |s| {
        samples.push(DensitySample {
            t: s.time,
            moments: compute_moments(&s.rho, &moment_ops),
            coeffs: s.coeffs,
            purity: s.rho.iter().map(|v| v.norm_sqr()).sum(),
            min_eig: s.diagnostics.min_eigenvalue,
            trace_drift: s.diagnostics.trace_drift,
            hermiticity: s.diagnostics.hermiticity_drift,
        })
    })?;
    let j = r.j();
    let n = r.basis.n();
    let times: Vec<f64> = samples.iter().map(|s| s.t).collect();
    let moments: Vec<MomentSet> = samples.iter().map(|s| s.moments).collect();
    let coeffs: Vec<CoeffState> = samples.iter().map(|s| s.coeffs).collect();
    let residuals = if samples.len() >= 3 {
        moment_residuals(&times, &moments, &coeffs, r.hamiltonian.a, r.hamiltonian.b, j)
    } else {
        Vec::new()
    };
    let squeezing: Vec<SqueezingPoint> = samples
        .iter()
        .map(|s| squeezing_parameter(&s.moments, n, s.t))
        .collect();
    let rows = samples
        .iter()
        .zip(&squeezing)
        .enumerate()
        .map(|(k, (s, q))| {
            let m = &s.moments;
            let res = |i: usize| {
                residuals
                    .get(i)
                    .and_then(|r| r.residuals.get(k))
                    .copied()
                    .unwrap_or(f64::NAN)
            };
            vec![
                s.t,
                j * s.t,
                q.xi2.unwrap_or(f64::NAN),
                q.min_variance,
                m.jx,
                m.jy,
                m.jz,
                m.jy2,
                m.jz2,
                m.jyjz_ss,
                s.purity,
                s.min_eig,
                res(0),
                res(1),
                res(2),
                res(3),
                res(4),
                s.trace_drift,
                s.hermiticity,
                m.casimir_error,
                q.spin_angle,
                m.jx2,
            ]
        })
        .collect();
    let mut metadata = vec![
        (
            "trusted_window".to_string(),
            format!("[0, {:e}]", summary.trusted_until),
        ),
        ("max_trace_drift".to_string(), format!("{:e}", summary.max_trace_drift)),
        (
            "max_hermiticity_drift".to_string(),
            format!("{:e}", summary.max_hermiticity_drift),
        ),
        ("min_eigenvalue".to_string(), format!("{:e}", summary.min_eigenvalue)),
    ];
    for res in &residuals {
        metadata.push((
            format!("max_residual_{}", res.equation.label()),
            format!("{:e}", res.max),
        ));
    }
    for w in &summary.warnings {
        warn!("{w}");
        metadata.push(("warning".to_string(), w.clone()));
    }
    Ok(RunOutput {
        mode: r.mode,
        columns: OBSERVABLE_COLUMNS.iter().map(|s| s.to_string()).collect(),
        rows,
        metadata,
        summary: summarize_squeezing(&squeezing),
        squeezing,
    })
}

fn run_coefficients(r: &Resolved) -> Result<RunOutput, Error> {
    let series = evolve_coefficients(&coeff_model(r), r.t_max, r.dt)?;
    let j = r.j();
    let last = series.len() - 1;
    let rows = series
        .times
        .iter()
        .zip(&series.values)
        .enumerate()
        .filter(|(k, _)| k % r.sample_stride == 0 || *k == last)
        .map(|(_, (t, f))| {
            let mut row = vec![*t, j * t];
            for c in f.as_array() {
                row.push(c.re);
                row.push(c.im);
            }
            row
        })
        .collect();
    Ok(RunOutput {
        mode: r.mode,
        columns: COEFFICIENT_COLUMNS.iter().map(|s| s.to_string()).collect(),
        rows,
        metadata: vec![("trusted_window".to_string(), format!("[0, {:e}]", series.times[last]))],
        squeezing: Vec::new(),
        summary: SqueezingSummary::default(),
    })
}

fn run_oracle(r: &Resolved) -> Result<RunOutput, Error> {
    let ops = build_collective_operators(&r.basis);
    let mops = MasterOperators::new(&r.hamiltonian, &ops);
    let config = OracleConfig {
        t_max: r.t_max,
        dt: r.dt,
        sample_stride: r.sample_stride,
        realizations: r.realizations,
        seed: r.seed,
        scheme: NoiseScheme::SignatureSplit,
    };
    let run = run_trajectories(&r.initial, &mops, &coeff_model(r), &config)?;
    let jz2: DMatrix<Complex64> = &ops.jz * &ops.jz;
    let jx = ensemble_expectation(&run, &ops.jx);
    let jy = ensemble_expectation(&run, &ops.jy);
    let jz = ensemble_expectation(&run, &ops.jz);
    let z2 = ensemble_expectation(&run, &jz2);
    let tr = ensemble_trace(&run);
    let j = r.j();
    let rows = run
        .sample_times
        .iter()
        .enumerate()
        .map(|(k, &t)| {
            vec![
                t,
                j * t,
                jx[k].mean.re,
                jx[k].se_re,
                jy[k].mean.re,
                jy[k].se_re,
                jz[k].mean.re,
                jz[k].se_re,
                z2[k].mean.re,
                z2[k].se_re,
                tr[k].mean.re,
                tr[k].se_re,
                tr[k].mean.im,
                tr[k].se_im,
            ]
        })
        .collect();
    Ok(RunOutput {
        mode: r.mode,
        columns: ORACLE_COLUMNS.iter().map(|s| s.to_string()).collect(),
        rows,
        metadata: vec![
            ("realizations".to_string(), r.realizations.to_string()),
            ("noise_scheme".to_string(), "signature-split".to_string()),
        ],
        squeezing: Vec::new(),
        summary: SqueezingSummary::default(),
    })
}

/// Canonical number format: 17 significant digits.
pub fn format_number(x: f64) -> String {
    format!("{x:.16e}")
}

/// Writes `contents` to `path` through a temporary file in the same directory.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<(), HarnessError> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    std::fs::create_dir_all(&dir).map_err(io_err(&dir))?;
    let mut tmp = tempfile::NamedTempFile::new_in(&dir).map_err(io_err(&dir))?;
    tmp.write_all(contents).map_err(io_err(path))?;
    tmp.persist(path).map_err(|e| HarnessError::Io {
        path: path.to_path_buf(),
        source: e.error,
    })?;
    Ok(())
}

fn header_lines(config_echo: &str, metadata: &[(String, String)]) -> String {
    let mut out = format!("# lmg-squeeze {VERSION}\n");
    for (k, v) in metadata {
        out.push_str(&format!("# {k} = {v}\n"));
    }
    out.push_str(CONFIG_MARKER);
    out.push('\n');
    for line in config_echo.lines() {
        out.push_str("# ");
        out.push_str(line);
        out.push('\n');
    }
    out
}

fn table_bytes(columns: &[String], rows: &[Vec<String>]) -> Result<Vec<u8>, String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(columns).map_err(|e| e.to_string())?;
    for row in rows {
        w.write_record(row).map_err(|e| e.to_string())?;
    }
    w.into_inner().map_err(|e| e.to_string())
}

/// Serialises a run: metadata and config echo as `#` lines, then the table.
pub fn render_csv(config: &ExperimentConfig, output: &RunOutput, path: &Path) -> Result<Vec<u8>, HarnessError> {
    let mut metadata = vec![("mode".to_string(), output.mode.name().to_string())];
    metadata.extend(output.metadata.iter().cloned());
    let mut bytes = header_lines(&config.to_toml(), &metadata).into_bytes();
    let rows: Vec<Vec<String>> = output
        .rows
        .iter()
        .map(|r| r.iter().map(|&x| format_number(x)).collect())
        .collect();
    bytes.extend(
        table_bytes(&output.columns, &rows).map_err(|message| HarnessError::Csv {
            path: path.to_path_buf(),
            message,
        })?,
    );
    Ok(bytes)
}

/// A CSV written by this harness, parsed back.
#[derive(Clone, Debug, PartialEq)]
pub struct CsvTable {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
    pub header: Vec<String>,
}

impl CsvTable {
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let k = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| r[k]).collect())
    }

    /// The configuration echoed in the header.
    pub fn config(&self) -> Option<Result<ExperimentConfig, ConfigError>> {
        let start = self.header.iter().position(|l| l == CONFIG_MARKER)?;
        let text: String = self.header[start + 1..]
            .iter()
            .map(|l| format!("{}\n", l.strip_prefix("# ").unwrap_or(l.trim_start_matches('#'))))
            .collect();
        Some(ExperimentConfig::from_str_with_path(&text, Path::new("header.toml")))
    }
}

pub fn read_csv(path: &Path) -> Result<CsvTable, HarnessError> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    let header: Vec<String> = text
        .lines()
        .take_while(|l| l.starts_with('#'))
        .map(str::to_string)
        .collect();
    let csv_err = |message: String| HarnessError::Csv {
        path: path.to_path_buf(),
        message,
    };
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let columns: Vec<String> = reader
        .headers()
        .map_err(|e| csv_err(e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| csv_err(e.to_string()))?;
        let row = record
            .iter()
            .map(|f| f.parse::<f64>().map_err(|e| csv_err(format!("`{f}`: {e}"))))
            .collect::<Result<Vec<_>, _>>()?;
        rows.push(row);
    }
    Ok(CsvTable { columns, rows, header })
}

/// Runs one experiment and writes its CSV atomically. Returns the output path.
pub fn run_single(config: &ExperimentConfig, out: &Path) -> Result<(PathBuf, RunOutput), HarnessError> {
    let pinned = config.pinned()?;
    let resolved = pinned.resolve()?;
    info!(
        "{} run: N={} a={} b={} Γ={} γ={} kT={} t_max={} dt={:e}",
        resolved.mode.name(),
        resolved.basis.n(),
        resolved.hamiltonian.a,
        resolved.hamiltonian.b,
        resolved.bath.damping(),
        resolved.bath.cutoff(),
        resolved.bath.kt(),
        resolved.t_max,
        resolved.dt
    );
    let output = simulate(&resolved)?;
    let path = match &config.run.output {
        Some(p) if p.is_absolute() => p.clone(),
        Some(p) => out.join(p),
        None => out.join(format!("{}.csv", resolved.mode.name())),
    };
    let mut echo = pinned.clone();
    echo.run.output = None;
    let bytes = render_csv(&echo, &output, &path)?;
    write_atomic(&path, &bytes)?;
    Ok((path, output))
}

/// Outcome of one sweep point.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepRun {
    pub point: SweepPoint,
    pub result: Result<RunOutput, String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepOutcome {
    pub runs: Vec<SweepRun>,
    pub long_path: PathBuf,
    pub summary_path: PathBuf,
}

impl SweepOutcome {
    pub fn failures(&self) -> usize {
        self.runs.iter().filter(|r| r.result.is_err()).count()
    }
}

/// Runs every point of a sweep (in parallel on the current rayon pool).
pub fn execute_sweep(sweep: &SweepConfig) -> Result<Vec<SweepRun>, HarnessError> {
    let points = sweep.expand()?;
    Ok(points
        .into_par_iter()
        .map(|point| {
            let result = point
                .config
                .pinned()
                .and_then(|c| c.resolve())
                .and_then(|r| simulate(&r))
                .map_err(|e| e.to_string());
            if let Err(e) = &result {
                warn!("sweep run {} failed: {e}", point.index);
            }
            SweepRun { point, result }
        })
        .collect())
}

fn opt(x: Option<f64>) -> String {
    format_number(x.unwrap_or(f64::NAN))
}

/// Runs a sweep and writes `<stem>_long.csv` and `<stem>_summary.csv` into `out`.
/// Individual failures are recorded in the summary; the sweep only fails as a
/// whole when every run fails.
pub fn run_sweep(sweep: &SweepConfig, out: &Path, stem: &str) -> Result<SweepOutcome, HarnessError> {
    let runs = execute_sweep(sweep)?;
    let names: Vec<String> = sweep.sweep.params.iter().map(|p| p.name.clone()).collect();
    let echo = toml::to_string(sweep).expect("sweep serialises");

    let mut long_rows = Vec::new();
    let mut long_columns: Option<Vec<String>> = None;
    let mut summary_rows = Vec::new();
    for run in &runs {
        let mut prefix = vec![run.point.index.to_string()];
        prefix.extend(run.point.assignments.iter().map(|(_, v)| format_number(*v)));
        match &run.result {
            Ok(output) => {
                if long_columns.is_none() {
                    let mut cols = vec!["run".to_string()];
                    cols.extend(names.iter().cloned());
                    cols.extend(output.columns.iter().cloned());
                    long_columns = Some(cols);
                }
                for row in &output.rows {
                    let mut r = prefix.clone();
                    r.extend(row.iter().map(|&x| format_number(x)));
                    long_rows.push(r);
                }
                let j = run.point.config.system.n as f64 / 2.0;
                let s = &output.summary;
                let mut r = prefix.clone();
                r.extend([
                    "ok".to_string(),
                    opt(s.min_xi2),
                    opt(s.argmin_t),
                    opt(s.argmin_t.map(|t| j * t)),
                    opt(s.onset_t),
                    opt(s.duration),
                    opt(s.duration.map(|d| j * d)),
                    (s.open_at_end as u8).to_string(),
                    String::new(),
                ]);
                summary_rows.push(r);
            }
            Err(message) => {
                let mut r = prefix.clone();
                r.extend(["failed".to_string()]);
                r.extend(std::iter::repeat_n(format_number(f64::NAN), 6));
                r.extend(["0".to_string(), message.replace(['\n', ','], " ")]);
                summary_rows.push(r);
            }
        }
    }

    let failures = runs.iter().filter(|r| r.result.is_err()).count();
    let meta = vec![
        ("runs".to_string(), runs.len().to_string()),
        ("failures".to_string(), failures.to_string()),
    ];
    let long_path = out.join(format!("{stem}_long.csv"));
    let summary_path = out.join(format!("{stem}_summary.csv"));
    let csv_err = |path: &Path| {
        let path = path.to_path_buf();
        move |message: String| HarnessError::Csv { path, message }
    };

    let mut long = header_lines(&echo, &meta).into_bytes();
    let long_columns = long_columns.unwrap_or_else(|| {
        let mut c = vec!["run".to_string()];
        c.extend(names.iter().cloned());
        c
    });
    long.extend(table_bytes(&long_columns, &long_rows).map_err(csv_err(&long_path))?);
    write_atomic(&long_path, &long)?;

    let mut summary_columns = vec!["run".to_string()];
    summary_columns.extend(names.iter().cloned());
    summary_columns.extend(
        [
            "status",
            "min_xi2",
            "argmin_t",
            "argmin_Jt",
            "onset_t",
            "duration",
            "duration_Jt",
            "window_open_at_end",
            "message",
        ]
        .map(String::from),
    );
    let mut summary = header_lines(&echo, &meta).into_bytes();
    summary.extend(table_bytes(&summary_columns, &summary_rows).map_err(csv_err(&summary_path))?);
    write_atomic(&summary_path, &summary)?;

    if failures == runs.len() {
        return Err(HarnessError::SweepFailed { runs: runs.len() });
    }
    Ok(SweepOutcome {
        runs,
        long_path,
        summary_path,
    })
}

/// Plotting scripts and the configs that produce their inputs.
pub const PLOT_FILES: [(&str, &str); 14] = [
    ("plot_common.py", include_str!("../plots/plot_common.py")),
    ("fig1.py", include_str!("../plots/fig1.py")),
    ("fig2a.py", include_str!("../plots/fig2a.py")),
    ("fig2b.py", include_str!("../plots/fig2b.py")),
    ("fig3.py", include_str!("../plots/fig3.py")),
    ("fig4a.py", include_str!("../plots/fig4a.py")),
    ("fig4b.py", include_str!("../plots/fig4b.py")),
    ("fig1.toml", include_str!("../configs/fig1.toml")),
    ("fig2a.toml", include_str!("../configs/fig2a.toml")),
    ("fig2b.toml", include_str!("../configs/fig2b.toml")),
    ("fig3_damping.toml", include_str!("../configs/fig3_damping.toml")),
    ("fig3_kt.toml", include_str!("../configs/fig3_kt.toml")),
    ("fig4a.toml", include_str!("../configs/fig4a.toml")),
    ("fig4b.toml", include_str!("../configs/fig4b.toml")),
];

/// Writes the plotting scripts (and their input configs) into `dir`.
pub fn emit_plot_scripts(dir: &Path) -> Result<Vec<PathBuf>, HarnessError> {
    PLOT_FILES
        .iter()
        .map(|(name, body)| {
            let path = dir.join(name);
            write_atomic(&path, body.as_bytes())?;
            Ok(path)
        })
        .collect()
}

/// One invariant checked by `selfcheck`.
#[derive(Clone, Debug, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub value: f64,
    pub tolerance: f64,
}

impl Check {
    pub fn passed(&self) -> bool {
        self.value.is_finite() && self.value <= self.tolerance
    }
}

fn max_series_deviation(a: &[CoeffState], b: &[CoeffState]) -> f64 {
    let scale = b.iter().map(|f| f.max_abs()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            x.as_array()
                .iter()
                .zip(y.as_array())
                .map(|(u, v)| (u - v).norm())
                .fold(0.0, f64::max)
        })
        .fold(0.0, f64::max)
        / scale
}

/// Fast invariant suite: state normalisation, closure against quadrature,
/// trace and hermiticity preservation, and the zero-coupling Markov limit.
pub fn selfcheck() -> Result<Vec<Check>, Error> {
    use crate::spin::{coherent_spin_state, DickeBasis};

    let mut checks = Vec::new();

    let mut worst = 0.0f64;
    for n in 1..=20 {
        let basis = DickeBasis::new(n)?;
        let ops = build_collective_operators(&basis);
        let psi = coherent_spin_state(&basis, 1.1, 0.4);
        let rho = DensityMatrix::from_state(&psi);
        let j2 = (&ops.j2 * &rho.rho).trace().re;
        worst = worst
            .max((psi.norm() - 1.0).abs())
            .max((j2 - basis.casimir()).abs() / basis.casimir());
    }
    checks.push(Check {
        name: "coherent state norm and Casimir",
        value: worst,
        tolerance: 1e-12,
    });

    let base = ExperimentConfig::operating_point(2.0);
    let r = base.resolve()?;
    let p = coeff_model(&r);
    let closed = evolve_coefficients(&p, 1.0, 0.002)?;
    let oracle = crate::coefficients::coefficient_quadrature_oracle(&p, 1.0, 0.002)?;
    checks.push(Check {
        name: "coefficient closure against quadrature",
        value: max_series_deviation(&closed.values, &oracle.values),
        tolerance: 1e-3,
    });

    let mut run = base.clone();
    run.system.n = 10;
    run.run.t_max = Some(0.2);
    let out = simulate(&run.resolve()?)?;
    let trace = out.column("trace_drift").unwrap_or_default();
    let herm = out.column("hermiticity").unwrap_or_default();
    checks.push(Check {
        name: "trace preserved",
        value: trace.iter().fold(0.0, |m, x| m.max(x.abs())),
        tolerance: 1e-10,
    });
    checks.push(Check {
        name: "hermiticity preserved",
        value: herm.iter().fold(0.0, |m, x| m.max(x.abs())),
        tolerance: 1e-10,
    });

    run.bath.damping = 0.0;
    let master = simulate(&run.resolve()?)?;
    run.run.mode = Mode::Markov;
    let markov = simulate(&run.resolve()?)?;
    let deviation = master
        .rows
        .iter()
        .zip(&markov.rows)
        .flat_map(|(x, y)| x.iter().zip(y).map(|(u, v)| (u - v).abs()))
        .filter(|d| !d.is_nan())
        .fold(0.0, f64::max);
    checks.push(Check {
        name: "memory and Markov runs agree without coupling",
        value: deviation,
        tolerance: 1e-10,
    });
    Ok(checks)
}
