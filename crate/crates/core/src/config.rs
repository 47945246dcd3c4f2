//! Experiment and sweep configuration.
//!
//! Files are TOML with `[system]`, `[bath]`, `[initial]` and `[run]` sections;
//! the same structure is accepted as JSON. Environment variables named
//! `LMG_<KEY>` (for example `LMG_KT`, `LMG_N`, `LMG_MODE`) override single keys.

use std::fmt;
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::bath::BathParams;
use crate::error::Error;
use crate::spin::{coherent_spin_state, lmg_reduction, DickeBasis, EffectiveHamiltonian, StateVector};

/// Prefix of environment overrides.
pub const ENV_PREFIX: &str = "LMG_";

/// Default sweep size limit.
pub const DEFAULT_RUN_CAP: usize = 10_000;

/// Target number of samples per run when `sample_stride` is not given.
const DEFAULT_SAMPLES: usize = 500;

#[derive(Debug)]
pub enum ConfigError {
    Io { path: PathBuf, source: std::io::Error },
    Parse { path: PathBuf, message: String },
    Invalid(Error),
    Override { key: String, message: String },
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConfigError::Io { path, source } => write!(f, "cannot read {}: {source}", path.display()),
            ConfigError::Parse { path, message } => write!(f, "cannot parse {}: {message}", path.display()),
            ConfigError::Invalid(e) => write!(f, "{e}"),
            ConfigError::Override { key, message } => write!(f, "bad override {key}: {message}"),
        }
    }
}

impl std::error::Error for ConfigError {}

impl From<Error> for ConfigError {
    fn from(e: Error) -> Self {
        ConfigError::Invalid(e)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    #[default]
    Master,
    Oracle,
    Markov,
    Coefficients,
}

impl Mode {
    pub fn name(&self) -> &'static str {
        match self {
            Mode::Master => "master",
            Mode::Oracle => "oracle",
            Mode::Markov => "markov",
            Mode::Coefficients => "coefficients",
        }
    }
}

impl std::str::FromStr for Mode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "master" => Ok(Mode::Master),
            "oracle" => Ok(Mode::Oracle),
            "markov" => Ok(Mode::Markov),
            "coefficients" => Ok(Mode::Coefficients),
            other => Err(format!(
                "unknown mode `{other}` (master | oracle | markov | coefficients)"
            )),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSection {
    pub n: i64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BathSection {
    /// Γ
    #[serde(alias = "Gamma")]
    pub damping: f64,
    /// γ
    #[serde(alias = "gamma")]
    pub cutoff: f64,
    pub kt: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct InitialSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phi: Option<f64>,
    /// Dicke amplitudes `[re, im]`, ordered from `m = J` down to `m = -J`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub amplitudes: Option<Vec<[f64; 2]>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    #[serde(default)]
    pub mode: Mode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_max: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sample_stride: Option<usize>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub realizations: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub system: SystemSection,
    pub bath: BathSection,
    #[serde(default)]
    pub initial: InitialSection,
    #[serde(default)]
    pub run: RunSection,
}

/// A validated configuration with every default filled in.
#[derive(Clone, Debug, PartialEq)]
pub struct Resolved {
    pub basis: DickeBasis,
    pub hamiltonian: EffectiveHamiltonian,
    pub bath: BathParams,
    pub initial: StateVector,
    pub mode: Mode,
    pub t_max: f64,
    pub dt: f64,
    pub sample_stride: usize,
    pub seed: u64,
    pub realizations: usize,
}

impl Resolved {
    pub fn j(&self) -> f64 {
        self.basis.j()
    }
}

/// `1e-3 / max(|a| + |b| N, γ, 1)`
pub fn default_dt(a: f64, b: f64, n: u32, cutoff: f64) -> f64 {
    1e-3 / (a.abs() + b.abs() * n as f64).max(cutoff).max(1.0)
}

fn parse_text(text: &str, path: &Path) -> Result<ExperimentConfig, ConfigError> {
    let json = path.extension().is_some_and(|e| e == "json") || text.trim_start().starts_with('{');
    let parsed = if json {
        serde_json::from_str(text).map_err(|e| e.to_string())
    } else {
        toml::from_str(text).map_err(|e| e.to_string())
    };
    parsed.map_err(|message| ConfigError::Parse {
        path: path.to_path_buf(),
        message,
    })
}

impl ExperimentConfig {
    /// The operating point of the figures: `N = 20`, `a = 1`, `b = -1`,
    /// `Γ = 0.01`, `kT = 10`, coherent state along `x`.
    pub fn operating_point(cutoff: f64) -> Self {
        ExperimentConfig {
            system: SystemSection {
                n: 20,
                a: Some(1.0),
                b: Some(-1.0),
                lambda: None,
                h: None,
            },
            bath: BathSection {
                damping: 0.01,
                cutoff,
                kt: 10.0,
            },
            initial: InitialSection::default(),
            run: RunSection::default(),
        }
    }

    pub fn from_str_with_path(text: &str, path: &Path) -> Result<Self, ConfigError> {
        parse_text(text, path)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        parse_text(&text, path)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serialises")
    }

    /// Sets one key by its flat name (as used by overrides and sweeps).
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let bad = |message: String| ConfigError::Override {
            key: key.to_string(),
            message,
        };
        let float = || value.parse::<f64>().map_err(|e| bad(e.to_string()));
        match key {
            "n" => self.system.n = value.parse::<i64>().map_err(|e| bad(e.to_string()))?,
            "a" => self.system.a = Some(float()?),
            "b" => self.system.b = Some(float()?),
            "lambda" => self.system.lambda = Some(float()?),
            "h" => self.system.h = Some(float()?),
            "damping" | "gamma_damping" => self.bath.damping = float()?,
            "cutoff" => self.bath.cutoff = float()?,
            "kt" => self.bath.kt = float()?,
            "theta" => self.initial.theta = Some(float()?),
            "phi" => self.initial.phi = Some(float()?),
            "mode" => self.run.mode = value.parse().map_err(bad)?,
            "t_max" => self.run.t_max = Some(float()?),
            "dt" => self.run.dt = Some(float()?),
            "sample_stride" => self.run.sample_stride = Some(value.parse::<usize>().map_err(|e| bad(e.to_string()))?),
            "seed" => self.run.seed = value.parse::<u64>().map_err(|e| bad(e.to_string()))?,
            "realizations" => self.run.realizations = Some(value.parse::<usize>().map_err(|e| bad(e.to_string()))?),
            "output" => self.run.output = Some(PathBuf::from(value)),
            other => return Err(bad(format!("unknown key `{other}`"))),
        }
        Ok(())
    }

    /// Applies `LMG_<KEY>` overrides from `vars`.
    pub fn apply_overrides<I, K, V>(&mut self, vars: I) -> Result<(), ConfigError>
    where
        I: IntoIterator<Item = (K, V)>,
        K: AsRef<str>,
        V: AsRef<str>,
    {
        for (k, v) in vars {
            if let Some(key) = k.as_ref().strip_prefix(ENV_PREFIX) {
                self.set(&key.to_ascii_lowercase(), v.as_ref())?;
            }
        }
        Ok(())
    }

    pub fn apply_env(&mut self) -> Result<(), ConfigError> {
        self.apply_overrides(std::env::vars())
    }

    pub fn hamiltonian(&self) -> Result<EffectiveHamiltonian, Error> {
        let s = &self.system;
        match (s.a, s.b, s.lambda, s.h) {
            (Some(a), Some(b), None, None) => {
                if !a.is_finite() || !b.is_finite() {
                    return Err(Error::param("a", "a and b must be finite"));
                }
                Ok(EffectiveHamiltonian::new(a, b))
            }
            (None, None, Some(lambda), Some(h)) => lmg_reduction(lambda, h, s.n),
            _ => Err(Error::param(
                "system",
                "give exactly one of the pairs (a, b) or (lambda, h)",
            )),
        }
    }

    fn initial_state(&self, basis: &DickeBasis) -> Result<StateVector, Error> {
        let init = &self.initial;
        match (&init.amplitudes, init.theta, init.phi) {
            (Some(_), Some(_), _) | (Some(_), _, Some(_)) => {
                Err(Error::param("initial", "give either theta/phi or amplitudes, not both"))
            }
            (Some(amps), None, None) => {
                if amps.len() != basis.dim() {
                    return Err(Error::param(
                        "amplitudes",
                        format!("expected {} amplitudes, got {}", basis.dim(), amps.len()),
                    ));
                }
                let v =
                    nalgebra::DVector::from_iterator(amps.len(), amps.iter().map(|[re, im]| Complex64::new(*re, *im)));
                StateVector::new(v).normalize()
            }
            (None, theta, phi) => {
                let theta = theta.unwrap_or(std::f64::consts::FRAC_PI_2);
                let phi = phi.unwrap_or(0.0);
                if !theta.is_finite() || !phi.is_finite() {
                    return Err(Error::param("theta", "angles must be finite"));
                }
                Ok(coherent_spin_state(basis, theta, phi))
            }
        }
    }

    /// Validates the configuration and fills in defaults: `t_max = 5/J`,
    /// `dt` from [`default_dt`], about 500 samples, 10⁴ realizations.
    pub fn resolve(&self) -> Result<Resolved, Error> {
        let basis = DickeBasis::new(self.system.n)?;
        let hamiltonian = self.hamiltonian()?;
        let bath = BathParams::new(self.bath.damping, self.bath.cutoff, self.bath.kt)?;
        let initial = self.initial_state(&basis)?;
        let t_max = self.run.t_max.unwrap_or(5.0 / basis.j());
        if !(t_max > 0.0 && t_max.is_finite()) {
            return Err(Error::param("t_max", format!("must be positive, got {t_max}")));
        }
        let dt = self
            .run
            .dt
            .unwrap_or_else(|| default_dt(hamiltonian.a, hamiltonian.b, basis.n(), bath.cutoff()));
        if !(dt > 0.0 && dt.is_finite() && dt <= t_max) {
            return Err(Error::param("dt", format!("must be in (0, t_max], got {dt}")));
        }
        let steps = (t_max / dt).round() as usize;
        let sample_stride = self.run.sample_stride.unwrap_or((steps / DEFAULT_SAMPLES).max(1));
        if sample_stride == 0 {
            return Err(Error::param("sample_stride", "must be at least 1"));
        }
        let realizations = self.run.realizations.unwrap_or(10_000);
        if self.run.mode == Mode::Oracle && realizations < 1 {
            return Err(Error::param("realizations", "must be at least 1"));
        }
        Ok(Resolved {
            basis,
            hamiltonian,
            bath,
            initial,
            mode: self.run.mode,
            t_max,
            dt,
            sample_stride,
            seed: self.run.seed,
            realizations,
        })
    }

    /// Copy with every defaulted run setting written out explicitly.
    pub fn pinned(&self) -> Result<ExperimentConfig, Error> {
        let r = self.resolve()?;
        let mut out = self.clone();
        out.run.t_max = Some(r.t_max);
        out.run.dt = Some(r.dt);
        out.run.sample_stride = Some(r.sample_stride);
        if r.mode == Mode::Oracle {
            out.run.realizations = Some(r.realizations);
        }
        Ok(out)
    }
}

/// Values taken by one swept parameter.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepParam {
    /// Any key accepted by [`ExperimentConfig::set`], or `a_over_b` (sets
    /// `a = ratio * b`) or `b_over_a` (sets `b = ratio * a`).
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub values: Option<Vec<f64>>,
    /// Evenly spaced `[start, stop]` with `count` points.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub range: Option<SweepRange>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepRange {
    pub start: f64,
    pub stop: f64,
    pub count: usize,
}

impl SweepParam {
    pub fn points(&self) -> Result<Vec<f64>, Error> {
        match (&self.values, &self.range) {
            (Some(v), None) if !v.is_empty() => Ok(v.clone()),
            (None, Some(r)) if r.count >= 1 => Ok(if r.count == 1 {
                vec![r.start]
            } else {
                (0..r.count)
                    .map(|k| r.start + (r.stop - r.start) * k as f64 / (r.count - 1) as f64)
                    .collect()
            }),
            _ => Err(Error::param(
                "sweep",
                format!("`{}` needs a non-empty `values` list or a `range`", self.name),
            )),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub params: Vec<SweepParam>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cap: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub system: SystemSection,
    pub bath: BathSection,
    #[serde(default)]
    pub initial: InitialSection,
    #[serde(default)]
    pub run: RunSection,
    pub sweep: SweepSection,
}

/// One point of a sweep: parameter assignments and the resulting config.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepPoint {
    pub index: usize,
    pub assignments: Vec<(String, f64)>,
    pub config: ExperimentConfig,
}

impl SweepConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let json = path.extension().is_some_and(|e| e == "json") || text.trim_start().starts_with('{');
        let parsed = if json {
            serde_json::from_str(&text).map_err(|e| e.to_string())
        } else {
            toml::from_str(&text).map_err(|e| e.to_string())
        };
        parsed.map_err(|message| ConfigError::Parse {
            path: path.to_path_buf(),
            message,
        })
    }

    pub fn base(&self) -> ExperimentConfig {
        ExperimentConfig {
            system: self.system.clone(),
            bath: self.bath.clone(),
            initial: self.initial.clone(),
            run: self.run.clone(),
        }
    }

    pub fn with_base(base: ExperimentConfig, params: Vec<SweepParam>) -> Self {
        SweepConfig {
            system: base.system,
            bath: base.bath,
            initial: base.initial,
            run: base.run,
            sweep: SweepSection { params, cap: None },
        }
    }

    /// Cartesian product of the swept values, first parameter slowest.
    pub fn expand(&self) -> Result<Vec<SweepPoint>, ConfigError> {
        let params = &self.sweep.params;
        if params.is_empty() || params.len() > 2 {
            return Err(Error::param("sweep", "sweep one or two parameters").into());
        }
        let grids = params.iter().map(|p| p.points()).collect::<Result<Vec<_>, _>>()?;
        let total: usize = grids.iter().map(|g| g.len()).product();
        let cap = self.sweep.cap.unwrap_or(DEFAULT_RUN_CAP);
        if total > cap {
            return Err(Error::param("sweep", format!("{total} runs exceed the cap of {cap}")).into());
        }
        let mut combos: Vec<Vec<f64>> = vec![Vec::new()];
        for g in &grids {
            combos = combos
                .into_iter()
                .flat_map(|c| {
                    g.iter().map(move |&v| {
                        let mut c = c.clone();
                        c.push(v);
                        c
                    })
                })
                .collect();
        }
        let base = self.base();
        combos
            .into_iter()
            .enumerate()
            .map(|(index, values)| {
                let mut config = base.clone();
                let assignments: Vec<(String, f64)> = params
                    .iter()
                    .map(|p| p.name.clone())
                    .zip(values.iter().copied())
                    .collect();
                for (name, v) in &assignments {
                    apply_sweep_value(&mut config, name, *v)?;
                }
                Ok(SweepPoint {
                    index,
                    assignments,
                    config,
                })
            })
            .collect()
    }
}

fn apply_sweep_value(config: &mut ExperimentConfig, name: &str, v: f64) -> Result<(), ConfigError> {
    let need = |x: Option<f64>, key: &str| {
        x.ok_or_else(|| {
            ConfigError::Invalid(Error::param(
                "sweep",
                format!("`{name}` needs `{key}` in the base config"),
            ))
        })
    };
    match name {
        "a_over_b" => {
            let b = need(config.system.b, "b")?;
            config.system.a = Some(v * b);
        }
        "b_over_a" => {
            let a = need(config.system.a, "a")?;
            config.system.b = Some(v * a);
        }
        "n" => {
            if v.fract() != 0.0 {
                return Err(Error::param("n", format!("must be an integer, got {v}")).into());
            }
            config.system.n = v as i64;
        }
        "seed" | "sample_stride" | "realizations" => config.set(name, &format!("{}", v as u64))?,
        _ => config.set(name, &format!("{v:e}"))?,
    }
    Ok(())
}
