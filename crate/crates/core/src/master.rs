//! Time-local master equation with memory-integrated `Ō` operators, and a
//! Lindblad reference with constant rates.
//!
//! ```text
//! dρ/dt = -i[H, ρ] + [L, ρ Ō₁†] + [Ō₁ ρ, L†] + [L†, ρ Ō₂†] + [Ō₂ ρ, L],   L = J-
//! Ō₁ = F₁₁ J- + F₁₂ Jz J-        Ō₁† = F₁₁* J+ + F₁₂* J+ Jz
//! Ō₂ = F₂₁ J+ + F₂₂ J+ Jz        Ō₂† = F₂₁* J- + F₂₂* Jz J-
//! ```

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;

use crate::band::Band;
use crate::bath::{BathParams, CorrelationKernel};
use crate::coefficients::{coeff_rhs, CoeffParams, CoeffState};
use crate::error::{Error, Result};
use crate::spin::{CollectiveOps, EffectiveHamiltonian, StateVector};

const ONE: Complex64 = Complex64::new(1.0, 0.0);
const MINUS_ONE: Complex64 = Complex64::new(-1.0, 0.0);
const MINUS_I: Complex64 = Complex64::new(0.0, -1.0);

/// Positivity threshold defining the trusted window.
pub const TRUST_EIGENVALUE: f64 = -1e-6;
/// Trace drift above which a warning is recorded.
pub const TRACE_WARNING: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq)]
pub struct DensityMatrix {
    pub rho: DMatrix<Complex64>,
    pub time: f64,
}

impl DensityMatrix {
    pub fn new(rho: DMatrix<Complex64>, time: f64) -> Self {
        DensityMatrix { rho, time }
    }

    pub fn from_state(state: &StateVector) -> Self {
        DensityMatrix::new(state.projector(), 0.0)
    }

    pub fn maximally_mixed(dim: usize) -> Self {
        DensityMatrix::new(DMatrix::identity(dim, dim) / Complex64::new(dim as f64, 0.0), 0.0)
    }

    pub fn dim(&self) -> usize {
        self.rho.nrows()
    }

    pub fn trace(&self) -> Complex64 {
        self.rho.trace()
    }

    pub fn purity(&self) -> f64 {
        // tr ρ² = Σ |ρ_ij|² for Hermitian ρ
        self.rho.iter().map(|v| v.norm_sqr()).sum()
    }

    pub fn hermiticity_deviation(&self) -> f64 {
        hermiticity_deviation(&self.rho)
    }

    pub fn min_eigenvalue(&self) -> f64 {
        let herm = (&self.rho + self.rho.adjoint()) * Complex64::new(0.5, 0.0);
        SymmetricEigen::new(herm)
            .eigenvalues
            .iter()
            .cloned()
            .fold(f64::INFINITY, f64::min)
    }

    pub fn validate(&self) -> Result<()> {
        if self.rho.nrows() != self.rho.ncols() {
            return Err(Error::DimensionMismatch {
                expected: self.rho.nrows(),
                got: self.rho.ncols(),
            });
        }
        let herm = self.hermiticity_deviation();
        if herm > 1e-10 {
            return Err(Error::param("rho", format!("not Hermitian (deviation {herm:e})")));
        }
        let tr = self.trace();
        if (tr - ONE).norm() > 1e-8 {
            return Err(Error::param("rho", format!("trace is {tr}, expected 1")));
        }
        Ok(())
    }
}

pub fn hermiticity_deviation(m: &DMatrix<Complex64>) -> f64 {
    let n = m.nrows();
    let mut worst = 0.0_f64;
    for r in 0..n {
        for c in r..n {
            worst = worst.max((m[(r, c)] - m[(c, r)].conj()).norm());
        }
    }
    worst
}

/// Banded operators used by the right-hand side.
#[derive(Clone, Debug)]
pub struct MasterOperators {
    pub hamiltonian: Band,
    pub jz: Band,
    pub jp: Band,
    pub jm: Band,
    pub jz_jm: Band,
    pub jp_jz: Band,
}

impl MasterOperators {
    pub fn new(h: &EffectiveHamiltonian, ops: &CollectiveOps) -> Self {
        let l = &ops.ladder;
        MasterOperators {
            hamiltonian: h.band(&ops.basis),
            jz: l.jz.clone(),
            jp: l.jp.clone(),
            jm: l.jm.clone(),
            jz_jm: l.jz.mul(&l.jm),
            jp_jz: l.jp.mul(&l.jz),
        }
    }

    pub fn dim(&self) -> usize {
        self.jz.dim()
    }
}

/// The four `Ō` operators at one instant.
#[derive(Clone, Debug, PartialEq)]
pub struct Obar {
    pub o1: Band,
    pub o2: Band,
    pub o1_dag: Band,
    pub o2_dag: Band,
}

impl Obar {
    pub fn to_dense(&self) -> [DMatrix<Complex64>; 4] {
        [
            self.o1.to_dense(),
            self.o2.to_dense(),
            self.o1_dag.to_dense(),
            self.o2_dag.to_dense(),
        ]
    }
}

/// Builds `Ō₁, Ō₂` and their daggers from their explicit expressions and checks
/// the daggers against the numerical conjugate transposes.
pub fn assemble_obar(f: &CoeffState, ops: &MasterOperators) -> Result<Obar> {
    let o1 = ops.jm.scale(f.f11).add(&ops.jz_jm.scale(f.f12));
    let o2 = ops.jp.scale(f.f21).add(&ops.jp_jz.scale(f.f22));
    let o1_dag = ops.jp.scale(f.f11.conj()).add(&ops.jp_jz.scale(f.f12.conj()));
    let o2_dag = ops.jm.scale(f.f21.conj()).add(&ops.jz_jm.scale(f.f22.conj()));
    let tol = 1e-12 * (1.0 + f.max_abs() * ops.dim() as f64 * ops.dim() as f64);
    for (which, explicit, built) in [(1u8, &o1_dag, &o1), (2u8, &o2_dag, &o2)] {
        let deviation = explicit.max_abs_diff(&built.adjoint());
        if deviation.is_nan() || deviation > tol {
            return Err(Error::DaggerMismatch { which, deviation });
        }
    }
    Ok(Obar { o1, o2, o1_dag, o2_dag })
}

/// Right-hand side of the master equation, O(d²) using the band structure.
pub fn master_rhs(rho: &DMatrix<Complex64>, ops: &MasterOperators, obar: &Obar) -> DMatrix<Complex64> {
    let d = rho.nrows();
    let mut out = DMatrix::zeros(d, d);
    master_rhs_into(rho, ops, obar, &mut out);
    out
}

fn master_rhs_into(rho: &DMatrix<Complex64>, ops: &MasterOperators, obar: &Obar, out: &mut DMatrix<Complex64>) {
    let d = rho.nrows();
    out.fill(Complex64::new(0.0, 0.0));
    let (l, ld) = (&ops.jm, &ops.jp);

    // -i[H, ρ]
    ops.hamiltonian.add_left_mul_to(MINUS_I, rho, out);
    ops.hamiltonian.add_right_mul_to(-MINUS_I, rho, out);

    let mut tmp = DMatrix::zeros(d, d);
    let mut sandwich = |left: &Band, right: &Band, out: &mut DMatrix<Complex64>| {
        tmp.fill(Complex64::new(0.0, 0.0));
        left.add_left_mul_to(ONE, rho, &mut tmp);
        right.add_right_mul_to(ONE, &tmp, out);
    };
    // [L, ρŌ₁†] + [Ō₁ρ, L†]
    sandwich(l, &obar.o1_dag, out);
    obar.o1_dag.mul(l).add_right_mul_to(MINUS_ONE, rho, out);
    sandwich(&obar.o1, ld, out);
    ld.mul(&obar.o1).add_left_mul_to(MINUS_ONE, rho, out);
    // [L†, ρŌ₂†] + [Ō₂ρ, L]
    sandwich(ld, &obar.o2_dag, out);
    obar.o2_dag.mul(ld).add_right_mul_to(MINUS_ONE, rho, out);
    sandwich(&obar.o2, l, out);
    l.mul(&obar.o2).add_left_mul_to(MINUS_ONE, rho, out);
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PropagationConfig {
    pub t_max: f64,
    pub dt: f64,
    pub sample_stride: usize,
}

impl PropagationConfig {
    pub fn new(t_max: f64, dt: f64, sample_stride: usize) -> Result<Self> {
        let cfg = PropagationConfig {
            t_max,
            dt,
            sample_stride,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.dt <= 0.0 || !self.dt.is_finite() {
            return Err(Error::param("dt", format!("must be positive, got {}", self.dt)));
        }
        if self.t_max < self.dt || !self.t_max.is_finite() {
            return Err(Error::param(
                "t_max",
                format!("must be at least dt, got {}", self.t_max),
            ));
        }
        if self.sample_stride < 1 {
            return Err(Error::param("sample_stride", "must be at least 1"));
        }
        Ok(())
    }

    pub fn steps(&self) -> usize {
        (self.t_max / self.dt).round() as usize
    }
}

/// Where the coefficients `F_ij(t)` come from.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum CoefficientModel {
    /// Co-integrated memory coefficients.
    Memory(CoeffParams),
    /// Fixed coefficients (Markov limit).
    Constant(CoeffState),
}

impl CoefficientModel {
    fn derivative(&self, f: &CoeffState) -> CoeffState {
        match self {
            CoefficientModel::Memory(p) => coeff_rhs(f, p),
            CoefficientModel::Constant(_) => CoeffState::ZERO,
        }
    }

    fn initial(&self) -> CoeffState {
        match self {
            CoefficientModel::Memory(_) => CoeffState::ZERO,
            CoefficientModel::Constant(f) => *f,
        }
    }

    /// Markov/Caldeira-Leggett limit: `F₁₁ = Γ(kT - iγ)/2`, `F₂₁ = ΓkT/2`.
    pub fn markov(bath: &BathParams) -> Self {
        CoefficientModel::Constant(CoeffState::new(
            CorrelationKernel::emission(*bath).markov_rate(),
            Complex64::new(0.0, 0.0),
            CorrelationKernel::absorption(*bath).markov_rate(),
            Complex64::new(0.0, 0.0),
        ))
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SampleDiagnostics {
    pub trace_drift: f64,
    pub hermiticity_drift: f64,
    pub min_eigenvalue: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub step: usize,
    pub time: f64,
    pub rho: DMatrix<Complex64>,
    pub coeffs: CoeffState,
    pub diagnostics: SampleDiagnostics,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PropagationSummary {
    pub samples: usize,
    pub final_time: f64,
    pub max_trace_drift: f64,
    pub max_hermiticity_drift: f64,
    pub min_eigenvalue: f64,
    /// `[0, t]`: last sample time before the minimum eigenvalue first drops below
    /// [`TRUST_EIGENVALUE`].
    pub trusted_until: f64,
    pub warnings: Vec<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub samples: Vec<Sample>,
    pub summary: PropagationSummary,
}

impl Trajectory {
    pub fn times(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.time).collect()
    }
}

fn is_finite(m: &DMatrix<Complex64>) -> bool {
    m.iter().all(|v| v.re.is_finite() && v.im.is_finite())
}

/// Integrator driving the coupled `(F, ρ)` system with shared RK4 stages.
pub struct Propagator<'a> {
    ops: &'a MasterOperators,
    model: CoefficientModel,
    config: PropagationConfig,
}

impl<'a> Propagator<'a> {
    pub fn new(ops: &'a MasterOperators, model: CoefficientModel, config: PropagationConfig) -> Result<Self> {
        config.validate()?;
        Ok(Propagator { ops, model, config })
    }

    fn stage(&self, f: &CoeffState, rho: &DMatrix<Complex64>, out: &mut DMatrix<Complex64>) -> Result<CoeffState> {
        let obar = assemble_obar(f, self.ops)?;
        master_rhs_into(rho, self.ops, &obar, out);
        Ok(self.model.derivative(f))
    }

    /// Runs the propagation, handing each sample to `observer` as it is produced.
    pub fn run(&self, rho0: &DensityMatrix, mut observer: impl FnMut(&Sample)) -> Result<PropagationSummary> {
        rho0.validate()?;
        if rho0.dim() != self.ops.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.ops.dim(),
                got: rho0.dim(),
            });
        }
        let dt = self.config.dt;
        let steps = self.config.steps();
        let d = rho0.dim();
        let mut rho = rho0.rho.clone();
        let mut f = self.model.initial();
        let mut summary = PropagationSummary {
            samples: 0,
            final_time: 0.0,
            max_trace_drift: 0.0,
            max_hermiticity_drift: 0.0,
            min_eigenvalue: f64::INFINITY,
            trusted_until: 0.0,
            warnings: Vec::new(),
        };
        let mut trusted = true;
        let mut warned_trace = false;

        let mut emit = |step: usize, rho: &DMatrix<Complex64>, f: &CoeffState, summary: &mut PropagationSummary| {
            let time = step as f64 * dt;
            let dm = DensityMatrix::new(rho.clone(), time);
            let diagnostics = SampleDiagnostics {
                trace_drift: (dm.trace() - ONE).norm(),
                hermiticity_drift: dm.hermiticity_deviation(),
                min_eigenvalue: dm.min_eigenvalue(),
            };
            summary.samples += 1;
            summary.final_time = time;
            summary.max_trace_drift = summary.max_trace_drift.max(diagnostics.trace_drift);
            summary.max_hermiticity_drift = summary.max_hermiticity_drift.max(diagnostics.hermiticity_drift);
            summary.min_eigenvalue = summary.min_eigenvalue.min(diagnostics.min_eigenvalue);
            if trusted {
                if diagnostics.min_eigenvalue >= TRUST_EIGENVALUE {
                    summary.trusted_until = time;
                } else {
                    trusted = false;
                }
            }
            if diagnostics.trace_drift > TRACE_WARNING && !warned_trace {
                warned_trace = true;
                summary.warnings.push(format!(
                    "trace drift {:e} exceeds {:e} at t = {time}",
                    diagnostics.trace_drift, TRACE_WARNING
                ));
            }
            observer(&Sample {
                step,
                time,
                rho: dm.rho,
                coeffs: *f,
                diagnostics,
            });
        };

        emit(0, &rho, &f, &mut summary);
        let (mut k1, mut k2, mut k3, mut k4) = (
            DMatrix::zeros(d, d),
            DMatrix::zeros(d, d),
            DMatrix::zeros(d, d),
            DMatrix::zeros(d, d),
        );
        let half = Complex64::new(0.5 * dt, 0.0);
        let full = Complex64::new(dt, 0.0);
        for n in 0..steps {
            let g1 = self.stage(&f, &rho, &mut k1)?;
            let g2 = self.stage(&(f + g1 * (0.5 * dt)), &(&rho + &k1 * half), &mut k2)?;
            let g3 = self.stage(&(f + g2 * (0.5 * dt)), &(&rho + &k2 * half), &mut k3)?;
            let g4 = self.stage(&(f + g3 * dt), &(&rho + &k3 * full), &mut k4)?;
            f = f + (g1 + g2 * 2.0 + g3 * 2.0 + g4) * (dt / 6.0);
            let sixth = Complex64::new(dt / 6.0, 0.0);
            let two = Complex64::new(2.0, 0.0);
            rho += (&k1 + &k2 * two + &k3 * two + &k4) * sixth;
            let step = n + 1;
            if !f.is_finite() || !is_finite(&rho) {
                return Err(Error::Divergence { time: step as f64 * dt });
            }
            if step % self.config.sample_stride == 0 || step == steps {
                emit(step, &rho, &f, &mut summary);
            }
        }
        Ok(summary)
    }
}

/// Propagates `ρ` under the memory master equation with co-integrated `F_ij`.
pub fn propagate(
    rho0: &DensityMatrix,
    h: &EffectiveHamiltonian,
    ops: &CollectiveOps,
    coeff_params: &CoeffParams,
    config: &PropagationConfig,
) -> Result<Trajectory> {
    run_collect(rho0, h, ops, CoefficientModel::Memory(*coeff_params), config)
}

/// Lindblad evolution with the constant Markov-limit coefficients.
pub fn markov_reference(
    rho0: &DensityMatrix,
    h: &EffectiveHamiltonian,
    ops: &CollectiveOps,
    bath: &BathParams,
    config: &PropagationConfig,
) -> Result<Trajectory> {
    run_collect(rho0, h, ops, CoefficientModel::markov(bath), config)
}

fn run_collect(
    rho0: &DensityMatrix,
    h: &EffectiveHamiltonian,
    ops: &CollectiveOps,
    model: CoefficientModel,
    config: &PropagationConfig,
) -> Result<Trajectory> {
    let mops = MasterOperators::new(h, ops);
    let prop = Propagator::new(&mops, model, *config)?;
    let mut samples = Vec::new();
    let summary = prop.run(rho0, |s| samples.push(s.clone()))?;
    Ok(Trajectory { samples, summary })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spin::{build_collective_operators, coherent_spin_state, DickeBasis};
    use std::f64::consts::FRAC_PI_2;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn setup(n: i64, a: f64, b: f64) -> (CollectiveOps, EffectiveHamiltonian, MasterOperators) {
        let basis = DickeBasis::new(n).unwrap();
        let ops = build_collective_operators(&basis);
        let h = EffectiveHamiltonian::new(a, b);
        let mops = MasterOperators::new(&h, &ops);
        (ops, h, mops)
    }

    /// Dense transcription of the master equation, used as an oracle.
    fn dense_rhs(
        rho: &DMatrix<Complex64>,
        h: &DMatrix<Complex64>,
        l: &DMatrix<Complex64>,
        obar: &[DMatrix<Complex64>; 4],
    ) -> DMatrix<Complex64> {
        let ld = l.adjoint();
        let [o1, o2, o1d, o2d] = obar;
        let comm = |x: &DMatrix<Complex64>, y: &DMatrix<Complex64>| x * y - y * x;
        comm(h, rho) * c(0.0, -1.0)
            + comm(l, &(rho * o1d))
            + comm(&(o1 * rho), &ld)
            + comm(&ld, &(rho * o2d))
            + comm(&(o2 * rho), l)
    }

    fn pseudo_random_rho(d: usize, seed: u64) -> DMatrix<Complex64> {
        let mut s = seed;
        let mut next = move || {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((s >> 11) as f64 / (1u64 << 53) as f64) - 0.5
        };
        let a = DMatrix::from_fn(d, d, |_, _| c(next(), next()));
        let m = &a * a.adjoint();
        let tr = m.trace();
        m / tr
    }

    fn random_coeffs(seed: f64) -> CoeffState {
        CoeffState::new(
            c(0.3 * seed, -0.2),
            c(-0.05, 0.07 * seed),
            c(0.11, 0.02),
            c(0.01 * seed, -0.03),
        )
    }

    #[test]
    fn zero_coefficients_give_zero_obar() {
        let (_, _, mops) = setup(3, 1.0, 1.0);
        let obar = assemble_obar(&CoeffState::ZERO, &mops).unwrap();
        for m in obar.to_dense() {
            assert_eq!(m, DMatrix::zeros(4, 4));
        }
    }

    #[test]
    fn single_term_obar_is_lowering() {
        let (ops, _, mops) = setup(2, 1.0, 1.0);
        let f = CoeffState::new(c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(0.0, 0.0));
        let obar = assemble_obar(&f, &mops).unwrap();
        assert_eq!(obar.o1.to_dense(), ops.jm);
    }

    #[test]
    fn explicit_daggers_are_adjoints() {
        let (_, _, mops) = setup(5, 1.0, 1.0);
        for k in 0..5 {
            let obar = assemble_obar(&random_coeffs(k as f64), &mops).unwrap();
            let [o1, o2, o1d, o2d] = obar.to_dense();
            assert!((o1.adjoint() - o1d).camax() < 1e-14);
            assert!((o2.adjoint() - o2d).camax() < 1e-14);
        }
    }

    #[test]
    fn banded_rhs_matches_dense_oracle() {
        for n in [1, 2, 5, 8] {
            let (ops, h, mops) = setup(n, 0.8, -1.3);
            let hd = h.matrix(&ops.basis);
            for k in 0..20 {
                let rho = pseudo_random_rho(ops.dim(), k + 17 * n as u64);
                let obar = assemble_obar(&random_coeffs(k as f64 * 0.3), &mops).unwrap();
                let fast = master_rhs(&rho, &mops, &obar);
                let slow = dense_rhs(&rho, &hd, &ops.jm, &obar.to_dense());
                assert!((fast - slow).camax() < 1e-12);
            }
        }
    }

    #[test]
    fn rhs_is_traceless_and_hermitian() {
        let (ops, _, mops) = setup(6, 1.0, -1.0);
        for k in 0..100 {
            let rho = pseudo_random_rho(ops.dim(), 1000 + k);
            let obar = assemble_obar(&random_coeffs((k % 7) as f64 - 3.0), &mops).unwrap();
            let d = master_rhs(&rho, &mops, &obar);
            assert!(d.trace().norm() < 1e-12);
            assert!(hermiticity_deviation(&d) < 1e-12);
        }
    }

    #[test]
    fn diagonal_state_is_stationary_without_coupling() {
        let (ops, _, mops) = setup(4, 1.0, -1.0);
        let rho = DensityMatrix::maximally_mixed(ops.dim()).rho;
        let obar = assemble_obar(&CoeffState::ZERO, &mops).unwrap();
        assert_eq!(master_rhs(&rho, &mops, &obar), DMatrix::zeros(5, 5));
    }

    #[test]
    fn free_precession() {
        let (ops, h, _) = setup(6, 1.0, 0.0);
        let basis = ops.basis;
        let rho0 = DensityMatrix::from_state(&coherent_spin_state(&basis, FRAC_PI_2, 0.0));
        let p = CoeffParams::new(1.0, 0.0, 6, BathParams::new(0.0, 1.0, 1.0).unwrap());
        let cfg = PropagationConfig::new(3.0, 1e-3, 100).unwrap();
        let traj = propagate(&rho0, &h, &ops, &p, &cfg).unwrap();
        for s in &traj.samples {
            let jx = (&ops.jx * &s.rho).trace().re;
            let jp = (&ops.jp * &s.rho).trace();
            // H = a Jz rotates the mean spin about z: ⟨Jx⟩ = J cos(at)
            assert!((jx - 3.0 * s.time.cos()).abs() < 1e-10, "t={}", s.time);
            assert!((jp.norm() - 3.0).abs() < 1e-10);
            assert!((DensityMatrix::new(s.rho.clone(), s.time).purity() - 1.0).abs() < 1e-10);
        }
        assert_eq!(traj.summary.samples, 31);
    }

    #[test]
    fn unitary_markov_and_memory_agree_bitwise() {
        let (ops, h, _) = setup(5, 1.0, -1.0);
        let rho0 = DensityMatrix::from_state(&coherent_spin_state(&ops.basis, 1.0, 0.3));
        let bath = BathParams::new(0.0, 2.0, 10.0).unwrap();
        let p = CoeffParams::new(1.0, -1.0, 5, bath);
        let cfg = PropagationConfig::new(1.0, 1e-3, 50).unwrap();
        let a = propagate(&rho0, &h, &ops, &p, &cfg).unwrap();
        let b = markov_reference(&rho0, &h, &ops, &bath, &cfg).unwrap();
        for (x, y) in a.samples.iter().zip(&b.samples) {
            assert_eq!(x.rho, y.rho);
        }
    }

    #[test]
    fn lindblad_reference_stays_positive() {
        let (ops, h, _) = setup(6, 1.0, -1.0);
        let rho0 = DensityMatrix::from_state(&coherent_spin_state(&ops.basis, FRAC_PI_2, 0.0));
        let bath = BathParams::new(0.01, 5.0, 10.0).unwrap();
        let cfg = PropagationConfig::new(5.0, 1e-3, 100).unwrap();
        let traj = markov_reference(&rho0, &h, &ops, &bath, &cfg).unwrap();
        for s in &traj.samples {
            assert!(
                s.diagnostics.min_eigenvalue >= -1e-10,
                "t={}: {}",
                s.time,
                s.diagnostics.min_eigenvalue
            );
        }
        assert_eq!(traj.summary.trusted_until, 5.0);
    }

    #[test]
    fn rejects_invalid_initial_state() {
        let (ops, h, _) = setup(2, 1.0, -1.0);
        let p = CoeffParams::new(1.0, -1.0, 2, BathParams::new(0.01, 1.0, 1.0).unwrap());
        let cfg = PropagationConfig::new(1.0, 0.1, 1).unwrap();
        let bad = DensityMatrix::new(DMatrix::identity(3, 3), 0.0);
        assert!(propagate(&bad, &h, &ops, &p, &cfg).is_err());
        let wrong_dim = DensityMatrix::maximally_mixed(4);
        assert!(matches!(
            propagate(&wrong_dim, &h, &ops, &p, &cfg),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(PropagationConfig::new(1.0, 0.1, 0).is_err());
        assert!(PropagationConfig::new(1.0, -0.1, 1).is_err());
    }

    #[test]
    fn divergence_is_reported_with_time() {
        let (ops, h, _) = setup(2, 0.0, 0.0);
        let rho0 = DensityMatrix::maximally_mixed(3);
        let p = CoeffParams::new(0.0, 0.0, 2, BathParams::new(10.0, 0.1, 1e3).unwrap());
        let cfg = PropagationConfig::new(50.0, 1e-3, 1000).unwrap();
        match propagate(&rho0, &h, &ops, &p, &cfg) {
            Err(Error::Divergence { time }) => assert!(time > 0.0 && time < 50.0),
            other => panic!("expected divergence, got {:?}", other.map(|t| t.summary)),
        }
    }
}
