//! Linear stochastic trajectories driven by the two coloured noises, and the
//! ensemble reconstruction of the density matrix.
//!
//! When the noise covariance is indefinite ([`NoiseScheme::SignatureSplit`]) the
//! ket is driven by one noise path and the bra by a partner path, and each
//! realization contributes `|ψ⟩⟨φ|` instead of `|ψ⟩⟨ψ|`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;

use crate::bath::{NoisePath, NoiseSampler, NoiseScheme, TimeGrid};
use crate::coefficients::{evolve_coefficients, CoeffParams, CoeffState};
use crate::error::{Error, Result};
use crate::master::{assemble_obar, MasterOperators, Obar};
use crate::spin::StateVector;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);
const MINUS_I: Complex64 = Complex64::new(0.0, -1.0);

/// `∂ψ = -iHψ + z L ψ - L†Ō₁ψ + w L†ψ - L Ō₂ψ` with `L = J-`.
/// `z`, `w` are the values of the conjugated noises at this instant.
pub fn trajectory_rhs(
    psi: &[Complex64],
    ops: &MasterOperators,
    obar: &Obar,
    z: Complex64,
    w: Complex64,
) -> Vec<Complex64> {
    let d = psi.len();
    let mut out = vec![ZERO; d];
    let mut tmp = vec![ZERO; d];
    ops.hamiltonian.apply(psi, MINUS_I, &mut out);
    ops.jm.apply(psi, z, &mut out);
    ops.jp.apply(psi, w, &mut out);
    obar.o1.apply(psi, ONE, &mut tmp);
    ops.jp.apply(&tmp, -ONE, &mut out);
    tmp.iter_mut().for_each(|v| *v = ZERO);
    obar.o2.apply(psi, ONE, &mut tmp);
    ops.jm.apply(&tmp, -ONE, &mut out);
    out
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OracleConfig {
    pub t_max: f64,
    pub dt: f64,
    pub sample_stride: usize,
    pub realizations: usize,
    pub seed: u64,
    pub scheme: NoiseScheme,
}

impl OracleConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::param("dt", format!("must be positive, got {}", self.dt)));
        }
        if !(self.t_max >= self.dt && self.t_max.is_finite()) {
            return Err(Error::param(
                "t_max",
                format!("must be at least dt, got {}", self.t_max),
            ));
        }
        if self.sample_stride == 0 {
            return Err(Error::param("sample_stride", "must be at least 1"));
        }
        if self.realizations == 0 {
            return Err(Error::param("realizations", "must be at least 1"));
        }
        Ok(())
    }

    pub fn steps(&self) -> usize {
        (self.t_max / self.dt).round() as usize
    }
}

/// Sampled ket (and bra, if different) states of one realization.
#[derive(Clone, Debug, PartialEq)]
pub struct RealizationSeries {
    pub index: usize,
    pub kets: Vec<StateVector>,
    pub bras: Option<Vec<StateVector>>,
}

impl RealizationSeries {
    pub fn bras(&self) -> &[StateVector] {
        self.bras.as_deref().unwrap_or(&self.kets)
    }

    /// `|ψ⟩⟨φ|` at sample `k`.
    pub fn outer(&self, k: usize) -> DMatrix<Complex64> {
        let ket = &self.kets[k].amplitudes;
        let bra = &self.bras()[k].amplitudes;
        ket * bra.adjoint()
    }

    /// `⟨φ|A|ψ⟩ = tr(A |ψ⟩⟨φ|)` at sample `k`.
    pub fn estimate(&self, k: usize, op: &DMatrix<Complex64>) -> Complex64 {
        let ket = &self.kets[k].amplitudes;
        let bra = &self.bras()[k].amplitudes;
        bra.dotc(&(op * ket))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryRun {
    pub config: OracleConfig,
    /// Noise grid, spacing `dt/2`.
    pub grid: TimeGrid,
    pub sample_times: Vec<f64>,
    pub realizations: Vec<RealizationSeries>,
}

impl TrajectoryRun {
    pub fn seed(&self) -> u64 {
        self.config.seed
    }

    pub fn count(&self) -> usize {
        self.realizations.len()
    }
}

struct Integrator<'a> {
    ops: &'a MasterOperators,
    /// `Ō` on the half-step grid.
    obars: Vec<Obar>,
    dt: f64,
    steps: usize,
    stride: usize,
}

impl Integrator<'_> {
    fn evolve(&self, psi0: &[Complex64], z: &[Complex64], w: &[Complex64]) -> Vec<StateVector> {
        let d = psi0.len();
        let mut psi = psi0.to_vec();
        let mut out = vec![StateVector::new(DVector::from_column_slice(&psi))];
        let dt = self.dt;
        let shifted = |psi: &[Complex64], k: &[Complex64], h: f64| -> Vec<Complex64> {
            psi.iter().zip(k).map(|(p, k)| p + k * h).collect()
        };
        for n in 0..self.steps {
            let (i0, ih, i1) = (2 * n, 2 * n + 1, 2 * n + 2);
            let k1 = trajectory_rhs(&psi, self.ops, &self.obars[i0], z[i0], w[i0]);
            let k2 = trajectory_rhs(&shifted(&psi, &k1, 0.5 * dt), self.ops, &self.obars[ih], z[ih], w[ih]);
            let k3 = trajectory_rhs(&shifted(&psi, &k2, 0.5 * dt), self.ops, &self.obars[ih], z[ih], w[ih]);
            let k4 = trajectory_rhs(&shifted(&psi, &k3, dt), self.ops, &self.obars[i1], z[i1], w[i1]);
            for i in 0..d {
                psi[i] += (k1[i] + k2[i] * 2.0 + k3[i] * 2.0 + k4[i]) * (dt / 6.0);
            }
            let step = n + 1;
            if step % self.stride == 0 || step == self.steps {
                out.push(StateVector::new(DVector::from_column_slice(&psi)));
            }
        }
        out
    }

    fn realization(&self, index: usize, psi0: &[Complex64], path: &NoisePath) -> RealizationSeries {
        let kets = self.evolve(psi0, &path.z, &path.w);
        let bras = path.is_split().then(|| self.evolve(psi0, path.z_bra(), path.w_bra()));
        RealizationSeries { index, kets, bras }
    }
}

/// Runs `config.realizations` trajectories from `psi0`. Realizations are
/// simulated in parallel; the result is ordered by realization index and does
/// not depend on the number of worker threads.
pub fn run_trajectories(
    psi0: &StateVector,
    ops: &MasterOperators,
    coeff_params: &CoeffParams,
    config: &OracleConfig,
) -> Result<TrajectoryRun> {
    config.validate()?;
    if psi0.amplitudes.len() != ops.dim() {
        return Err(Error::DimensionMismatch {
            expected: ops.dim(),
            got: psi0.amplitudes.len(),
        });
    }
    let steps = config.steps();
    let half = 0.5 * config.dt;
    let grid = TimeGrid::new(half, 2 * steps + 1)?;
    let coeffs = evolve_coefficients(coeff_params, 2.0 * steps as f64 * half, half)?;
    let obars = coeffs
        .values
        .iter()
        .map(|f| assemble_obar(f, ops))
        .collect::<Result<Vec<_>>>()?;
    let sampler = NoiseSampler::new(&coeff_params.bath, grid, config.scheme, config.seed)?;
    let integrator = Integrator {
        ops,
        obars,
        dt: config.dt,
        steps,
        stride: config.sample_stride,
    };
    let mut sample_times: Vec<f64> = (0..=steps)
        .filter(|s| s % config.sample_stride == 0)
        .map(|s| s as f64 * config.dt)
        .collect();
    if !steps.is_multiple_of(config.sample_stride) {
        sample_times.push(steps as f64 * config.dt);
    }
    let psi0 = psi0.amplitudes.as_slice();
    let realizations: Vec<RealizationSeries> = (0..config.realizations)
        .into_par_iter()
        .map(|i| integrator.realization(i, psi0, &sampler.realization(i as u64)))
        .collect();
    Ok(TrajectoryRun {
        config: *config,
        grid,
        sample_times,
        realizations,
    })
}

/// Sample mean and standard error of a complex scalar.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Estimate {
    pub mean: Complex64,
    /// Standard error of the real part.
    pub se_re: f64,
    /// Standard error of the imaginary part.
    pub se_im: f64,
}

impl Estimate {
    /// Mean and standard errors accumulated in the order given.
    pub fn from_samples(values: impl IntoIterator<Item = Complex64>) -> Self {
        let values: Vec<Complex64> = values.into_iter().collect();
        let n = values.len() as f64;
        let mean = values.iter().sum::<Complex64>() / n;
        let (mut vr, mut vi) = (0.0, 0.0);
        for v in &values {
            vr += (v.re - mean.re).powi(2);
            vi += (v.im - mean.im).powi(2);
        }
        let denom = (n - 1.0).max(1.0) * n;
        Estimate {
            mean,
            se_re: (vr / denom).sqrt(),
            se_im: (vi / denom).sqrt(),
        }
    }
}

/// Per-sample-time ensemble mean of `|ψ⟩⟨φ|` with entrywise standard errors
/// (`sqrt(se_re² + se_im²)`).
#[derive(Clone, Debug, PartialEq)]
pub struct EnsembleDensity {
    pub times: Vec<f64>,
    pub mean: Vec<DMatrix<Complex64>>,
    pub standard_error: Vec<DMatrix<f64>>,
}

pub fn ensemble_density(run: &TrajectoryRun) -> EnsembleDensity {
    let n = run.count() as f64;
    let d = run.realizations.first().map_or(0, |r| r.kets[0].amplitudes.len());
    let mut mean = Vec::with_capacity(run.sample_times.len());
    let mut standard_error = Vec::with_capacity(run.sample_times.len());
    for k in 0..run.sample_times.len() {
        let mut sum = DMatrix::<Complex64>::zeros(d, d);
        for r in &run.realizations {
            sum += r.outer(k);
        }
        let m = sum / Complex64::new(n, 0.0);
        let mut var = DMatrix::<f64>::zeros(d, d);
        for r in &run.realizations {
            let o = r.outer(k);
            for (v, (x, mu)) in var.iter_mut().zip(o.iter().zip(m.iter())) {
                *v += (x - mu).norm_sqr();
            }
        }
        let denom = (n - 1.0).max(1.0) * n;
        standard_error.push(var.map(|v| (v / denom).sqrt()));
        mean.push(m);
    }
    EnsembleDensity {
        times: run.sample_times.clone(),
        mean,
        standard_error,
    }
}

/// Ensemble estimate of `⟨A⟩` at every sample time.
pub fn ensemble_expectation(run: &TrajectoryRun, op: &DMatrix<Complex64>) -> Vec<Estimate> {
    (0..run.sample_times.len())
        .map(|k| Estimate::from_samples(run.realizations.iter().map(|r| r.estimate(k, op))))
        .collect()
}

/// Ensemble estimate of the trace `⟨φ|ψ⟩`.
pub fn ensemble_trace(run: &TrajectoryRun) -> Vec<Estimate> {
    let d = run.realizations.first().map_or(0, |r| r.kets[0].amplitudes.len());
    ensemble_expectation(run, &DMatrix::identity(d, d))
}

/// Zero coefficients, used to check that `F = 0`, `z = w = 0` reduces to `-iHψ`.
pub const NO_COEFFS: CoeffState = CoeffState::ZERO;

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bath::BathParams;
    use crate::spin::{build_collective_operators, coherent_spin_state, DickeBasis, EffectiveHamiltonian};

    fn setup(n: i64, a: f64, b: f64) -> (DickeBasis, MasterOperators) {
        let basis = DickeBasis::new(n).unwrap();
        let ops = build_collective_operators(&basis);
        (basis, MasterOperators::new(&EffectiveHamiltonian::new(a, b), &ops))
    }

    fn inner(x: &[Complex64], y: &[Complex64]) -> Complex64 {
        x.iter().zip(y).map(|(a, b)| a.conj() * b).sum()
    }

    #[test]
    fn reduces_to_schrodinger() {
        let (basis, mops) = setup(5, 0.7, -0.3);
        let obar = assemble_obar(&NO_COEFFS, &mops).unwrap();
        let psi = coherent_spin_state(&basis, 0.9, 0.2).amplitudes;
        let rhs = trajectory_rhs(psi.as_slice(), &mops, &obar, ZERO, ZERO);
        let h = EffectiveHamiltonian::new(0.7, -0.3).matrix(&basis);
        let expected = &h * &psi * MINUS_I;
        for (x, y) in rhs.iter().zip(expected.iter()) {
            assert!((x - y).norm() < 1e-13);
        }
    }

    #[test]
    fn norm_rate_identity() {
        let (basis, mops) = setup(4, 1.0, -1.0);
        let f = CoeffState::new(
            Complex64::new(0.03, -0.01),
            Complex64::new(0.002, 0.001),
            Complex64::new(0.02, 0.0),
            Complex64::new(-0.001, 0.003),
        );
        let obar = assemble_obar(&f, &mops).unwrap();
        let psi: Vec<Complex64> = coherent_spin_state(&basis, 1.3, 0.5)
            .amplitudes
            .iter()
            .cloned()
            .collect();
        let (z, w) = (Complex64::new(0.4, -0.2), Complex64::new(-0.1, 0.3));
        let rhs = trajectory_rhs(&psi, &mops, &obar, z, w);
        let predicted = 2.0 * inner(&psi, &rhs).re;
        let h = 1e-5;
        let norm_at = |s: f64| {
            let shifted: Vec<Complex64> = psi.iter().zip(&rhs).map(|(p, r)| p + r * s).collect();
            inner(&shifted, &shifted).re
        };
        // the quadratic term cancels in the symmetric difference
        let fd = (norm_at(h) - norm_at(-h)) / (2.0 * h);
        assert!((fd - predicted).abs() < 1e-8, "{fd} vs {predicted}");
    }

    fn small_config(realizations: usize, seed: u64) -> OracleConfig {
        OracleConfig {
            t_max: 0.2,
            dt: 1e-2,
            sample_stride: 5,
            realizations,
            seed,
            scheme: NoiseScheme::SignatureSplit,
        }
    }

    #[test]
    fn unitary_without_bath() {
        let (basis, mops) = setup(4, 1.0, -1.0);
        let p = CoeffParams::new(1.0, -1.0, 4, BathParams::new(0.0, 1.0, 10.0).unwrap());
        let psi0 = coherent_spin_state(&basis, 1.0, 0.0);
        let run = run_trajectories(&psi0, &mops, &p, &small_config(100, 3)).unwrap();
        for r in &run.realizations {
            for s in &r.kets {
                assert!((s.norm() - 1.0).abs() < 1e-10);
            }
        }
        let ens = ensemble_density(&run);
        let last = run.realizations[0].outer(run.sample_times.len() - 1);
        assert!((ens.mean.last().unwrap() - last).iter().all(|v| v.norm() < 1e-14));
        assert!(ens.standard_error.last().unwrap().iter().all(|v| *v < 1e-14));
    }

    #[test]
    fn sample_times_include_the_end() {
        let (basis, mops) = setup(2, 1.0, 0.0);
        let p = CoeffParams::new(1.0, 0.0, 2, BathParams::new(0.0, 1.0, 1.0).unwrap());
        let mut cfg = small_config(2, 0);
        cfg.sample_stride = 7;
        let run = run_trajectories(&coherent_spin_state(&basis, 0.3, 0.0), &mops, &p, &cfg).unwrap();
        assert_eq!(run.sample_times.len(), 4);
        assert!((run.sample_times[3] - 0.2).abs() < 1e-15);
        assert_eq!(run.realizations[0].kets.len(), 4);
    }

    #[test]
    fn independent_of_thread_count() {
        let (basis, mops) = setup(3, 1.0, -1.0);
        let p = CoeffParams::new(1.0, -1.0, 3, BathParams::new(0.01, 1.0, 10.0).unwrap());
        let psi0 = coherent_spin_state(&basis, 1.1, 0.0);
        let cfg = small_config(64, 11);
        let run_with = |threads: usize| {
            let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
            pool.install(|| run_trajectories(&psi0, &mops, &p, &cfg).unwrap())
        };
        let one = ensemble_density(&run_with(1));
        let four = ensemble_density(&run_with(4));
        assert_eq!(one, four);
    }

    #[test]
    fn rejects_mismatched_state() {
        let (basis, _) = setup(3, 1.0, -1.0);
        let (_, mops) = setup(4, 1.0, -1.0);
        let p = CoeffParams::new(1.0, -1.0, 4, BathParams::new(0.01, 1.0, 10.0).unwrap());
        let psi0 = coherent_spin_state(&basis, 1.1, 0.0);
        assert!(matches!(
            run_trajectories(&psi0, &mops, &p, &small_config(4, 0)),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn estimate_statistics() {
        let e = Estimate::from_samples([1.0, 3.0].map(|x| Complex64::new(x, 0.0)));
        assert_eq!(e.mean, Complex64::new(2.0, 0.0));
        assert!((e.se_re - 1.0).abs() < 1e-15);
        assert_eq!(e.se_im, 0.0);
    }
}
