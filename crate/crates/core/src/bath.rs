//! Thermal bath: Lorentz-Drude spectral density, high-temperature
//! Ornstein-Uhlenbeck correlation kernels and colored-noise sampling.

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Bath parameters: damping rate `Γ`, cutoff `γ` (inverse memory time) and `k_B T`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BathParams {
    damping: f64,
    cutoff: f64,
    kt: f64,
}

impl BathParams {
    pub fn new(damping: f64, cutoff: f64, kt: f64) -> Result<Self> {
        if damping < 0.0 || !damping.is_finite() {
            return Err(Error::param(
                "damping",
                format!("must be finite and >= 0, got {damping}"),
            ));
        }
        if cutoff <= 0.0 || !cutoff.is_finite() {
            return Err(Error::param("cutoff", format!("must be finite and > 0, got {cutoff}")));
        }
        if kt < 0.0 || !kt.is_finite() {
            return Err(Error::param("kt", format!("must be finite and >= 0, got {kt}")));
        }
        Ok(BathParams { damping, cutoff, kt })
    }

    pub fn damping(&self) -> f64 {
        self.damping
    }

    pub fn cutoff(&self) -> f64 {
        self.cutoff
    }

    pub fn kt(&self) -> f64 {
        self.kt
    }

    /// `J(ω) = (Γ/π) ω / (1 + ω²/γ²)`
    pub fn spectral_density(&self, omega: f64) -> f64 {
        let g = self.cutoff;
        self.damping / PI * omega / (1.0 + omega * omega / (g * g))
    }

    /// Ornstein-Uhlenbeck envelope `Λ(t,s) = (γ/2) e^(-γ|t-s|)`.
    pub fn ou_envelope(&self, t: f64, s: f64) -> f64 {
        0.5 * self.cutoff * (-self.cutoff * (t - s).abs()).exp()
    }
}

pub fn spectral_density(omega: f64, params: &BathParams) -> f64 {
    params.spectral_density(omega)
}

/// Which of the two finite-temperature correlation functions.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum KernelKind {
    /// `α₁`, weighted by `n̄ + 1`; drives the `J-` channel.
    Emission,
    /// `α₂`, weighted by `n̄`; drives the `J+` channel.
    Absorption,
}

impl KernelKind {
    pub fn name(&self) -> &'static str {
        match self {
            KernelKind::Emission => "emission",
            KernelKind::Absorption => "absorption",
        }
    }
}

/// High-temperature correlation kernel
/// `α₂ = kT Γ Λ`, `α₁ = kT Γ Λ + i Γ ∂ₜΛ`.
///
/// At `t = s` the `∂ₜΛ` term is taken as zero (symmetric limit) so that the
/// equal-time covariance is real. Memory integrals use [`Self::memory_weight`],
/// the one-sided value for `s < t`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CorrelationKernel {
    pub kind: KernelKind,
    pub params: BathParams,
}

impl CorrelationKernel {
    pub fn emission(params: BathParams) -> Self {
        CorrelationKernel {
            kind: KernelKind::Emission,
            params,
        }
    }

    pub fn absorption(params: BathParams) -> Self {
        CorrelationKernel {
            kind: KernelKind::Absorption,
            params,
        }
    }

    pub fn value(&self, t: f64, s: f64) -> Complex64 {
        let p = &self.params;
        let lambda = p.ou_envelope(t, s);
        let real = p.kt * p.damping * lambda;
        match self.kind {
            KernelKind::Absorption => Complex64::new(real, 0.0),
            KernelKind::Emission => {
                let sign = if t > s {
                    1.0
                } else if t < s {
                    -1.0
                } else {
                    0.0
                };
                // i Γ ∂ₜΛ with ∂ₜΛ = -γ sign(t-s) Λ
                Complex64::new(real, -p.damping * p.cutoff * sign * lambda)
            }
        }
    }

    /// `α(t, t-τ)` for `τ > 0`, including the limit `τ → 0⁺`:
    /// `Γ(γ/2)(kT - iγ) e^(-γτ)` for emission, `Γ(γ/2) kT e^(-γτ)` for absorption.
    pub fn memory_weight(&self, tau: f64) -> Complex64 {
        self.equal_time_limit() * (-self.params.cutoff * tau).exp()
    }

    /// One-sided limit `α(t, t⁻)`.
    pub fn equal_time_limit(&self) -> Complex64 {
        let p = &self.params;
        let pre = 0.5 * p.damping * p.cutoff;
        match self.kind {
            KernelKind::Emission => Complex64::new(pre * p.kt, -pre * p.cutoff),
            KernelKind::Absorption => Complex64::new(pre * p.kt, 0.0),
        }
    }

    /// `∫₀^∞ α(t, t-τ) dτ`: `Γ(kT - iγ)/2` or `ΓkT/2`.
    pub fn markov_rate(&self) -> Complex64 {
        self.equal_time_limit() / self.params.cutoff
    }
}

pub fn correlation_value(kernel: &CorrelationKernel, t: f64, s: f64) -> Complex64 {
    kernel.value(t, s)
}

/// Diagnostic: the finite-temperature correlation function at lag `τ = t - s`
/// from the thermal frequency integral, truncated at `50γ` and evaluated by
/// adaptive Simpson quadrature to relative tolerance `1e-6`.
///
/// Only for inspection; the dynamics always use the high-temperature kernels.
pub fn thermal_correlation_quadrature(kind: KernelKind, params: &BathParams, tau: f64) -> Complex64 {
    let upper = 50.0 * params.cutoff;
    let kt = params.kt;
    let weight = move |omega: f64| -> f64 {
        let j = params.spectral_density(omega);
        match kind {
            KernelKind::Emission => {
                if kt == 0.0 {
                    j
                } else if omega == 0.0 {
                    kt * params.damping / PI
                } else {
                    // (n̄ + 1) J = J / (1 - e^(-ω/kT))
                    -j / (-omega / kt).exp_m1()
                }
            }
            KernelKind::Absorption => {
                if kt == 0.0 {
                    0.0
                } else if omega == 0.0 {
                    kt * params.damping / PI
                } else {
                    j / (omega / kt).exp_m1()
                }
            }
        }
    };
    let phase_sign = match kind {
        KernelKind::Emission => -1.0,
        KernelKind::Absorption => 1.0,
    };
    let re = adaptive_simpson(&|w| weight(w) * (w * tau).cos(), 0.0, upper, 1e-6);
    let im = adaptive_simpson(&|w| phase_sign * weight(w) * (w * tau).sin(), 0.0, upper, 1e-6);
    Complex64::new(re, im)
}

fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, rel_tol: f64) -> f64 {
    fn simpson(fa: f64, fm: f64, fb: f64, a: f64, b: f64) -> f64 {
        (b - a) / 6.0 * (fa + 4.0 * fm + fb)
    }
    #[allow(clippy::too_many_arguments)]
    fn recurse(
        f: &dyn Fn(f64) -> f64,
        a: f64,
        b: f64,
        fa: f64,
        fm: f64,
        fb: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = simpson(fa, flm, fm, a, m);
        let right = simpson(fm, frm, fb, m, b);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            left + right + delta / 15.0
        } else {
            recurse(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
                + recurse(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
        }
    }
    // coarse pass for an absolute scale
    let pieces = 64;
    let h = (b - a) / pieces as f64;
    let mut scale = 0.0;
    for k in 0..pieces {
        let (x0, x1) = (a + k as f64 * h, a + (k + 1) as f64 * h);
        scale += simpson(f(x0), f(0.5 * (x0 + x1)), f(x1), x0, x1).abs();
    }
    let tol = (rel_tol * scale).max(1e-300);
    let mut total = 0.0;
    for k in 0..pieces {
        let (x0, x1) = (a + k as f64 * h, a + (k + 1) as f64 * h);
        let (f0, fm, f1) = (f(x0), f(0.5 * (x0 + x1)), f(x1));
        total += recurse(
            f,
            x0,
            x1,
            f0,
            fm,
            f1,
            simpson(f0, fm, f1, x0, x1),
            tol / pieces as f64,
            40,
        );
    }
    total
}

/// Uniform grid `t_k = k * step`, `k = 0..len`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TimeGrid {
    pub step: f64,
    pub len: usize,
}

impl TimeGrid {
    pub fn new(step: f64, len: usize) -> Result<Self> {
        if step <= 0.0 || !step.is_finite() {
            return Err(Error::param("step", "grid step must be positive"));
        }
        if len < 2 {
            return Err(Error::param("len", "grid needs at least two nodes"));
        }
        Ok(TimeGrid { step, len })
    }

    pub fn time(&self, k: usize) -> f64 {
        k as f64 * self.step
    }
}

/// Kernel matrix `C[j][k] = α(t_j, t_k)` on a grid.
pub fn covariance_matrix(kernel: &CorrelationKernel, grid: &TimeGrid) -> DMatrix<Complex64> {
    DMatrix::from_fn(grid.len, grid.len, |j, k| kernel.value(grid.time(j), grid.time(k)))
}

/// How a grid covariance is turned into noise paths.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum NoiseScheme {
    /// `C = L L†`, with a bounded diagonal jitter; fails on indefinite kernels.
    Cholesky,
    /// Hermitian eigendecomposition `C = V Λ V†`. The ket is driven by
    /// `V|Λ|^½ ζ`, the bra by `V|Λ|^½ sign(Λ) ζ`, so that
    /// `M[x_t ȳ_s] = C_ts` and `M[x x] = M[ȳ ȳ] = 0` hold exactly even
    /// when `C` is indefinite. Reduces to a single path when `C ⪰ 0`.
    SignatureSplit,
}

#[derive(Clone, Debug)]
enum Factor {
    Zero,
    Single(DMatrix<Complex64>),
    Split {
        ket: DMatrix<Complex64>,
        bra: DMatrix<Complex64>,
    },
}

/// A factorised covariance for one kernel on one grid.
#[derive(Clone, Debug)]
pub struct CovarianceFactor {
    kind: KernelKind,
    factor: Factor,
    /// Jitter (relative to max diagonal) that was needed; 0 for exact factorisations.
    pub jitter: f64,
    /// Most negative eigenvalue relative to the largest, for split factors.
    pub negative_weight: f64,
}

/// Complex Cholesky that rejects non-positive pivots. nalgebra takes complex
/// square roots of the pivots, so an indefinite input still "succeeds" with
/// imaginary diagonal entries.
fn checked_cholesky(m: DMatrix<Complex64>) -> Option<DMatrix<Complex64>> {
    let l = Cholesky::new(m)?.unpack();
    let positive = l.diagonal().iter().all(|p| p.re > 0.0 && p.im.abs() <= 1e-12 * p.re);
    positive.then_some(l)
}

const JITTER_SCHEDULE: [f64; 5] = [1e-12, 1e-11, 1e-10, 1e-9, 1e-8];

impl CovarianceFactor {
    pub fn new(kernel: &CorrelationKernel, grid: &TimeGrid, scheme: NoiseScheme) -> Result<Self> {
        Self::from_matrix(kernel.kind, covariance_matrix(kernel, grid), scheme)
    }

    /// Factorises an explicit Hermitian covariance matrix.
    pub fn from_matrix(kind: KernelKind, cov: DMatrix<Complex64>, scheme: NoiseScheme) -> Result<Self> {
        let len = cov.nrows();
        let max_diag = (0..len).map(|k| cov[(k, k)].re).fold(0.0, f64::max);
        if cov.iter().all(|v| v.norm() == 0.0) {
            return Ok(CovarianceFactor {
                kind,
                factor: Factor::Zero,
                jitter: 0.0,
                negative_weight: 0.0,
            });
        }
        match scheme {
            NoiseScheme::Cholesky => {
                if let Some(l) = checked_cholesky(cov.clone()) {
                    return Ok(CovarianceFactor {
                        kind,
                        factor: Factor::Single(l),
                        jitter: 0.0,
                        negative_weight: 0.0,
                    });
                }
                for &eps in &JITTER_SCHEDULE {
                    let mut shifted = cov.clone();
                    for k in 0..len {
                        shifted[(k, k)] += Complex64::new(eps * max_diag, 0.0);
                    }
                    if let Some(l) = checked_cholesky(shifted) {
                        return Ok(CovarianceFactor {
                            kind,
                            factor: Factor::Single(l),
                            jitter: eps,
                            negative_weight: 0.0,
                        });
                    }
                }
                Err(Error::KernelNotPositive {
                    kernel: kind.name(),
                    jitter: *JITTER_SCHEDULE.last().unwrap(),
                })
            }
            NoiseScheme::SignatureSplit => {
                let eig = SymmetricEigen::new(cov);
                let largest = eig.eigenvalues.iter().fold(0.0_f64, |m, &l| m.max(l.abs()));
                let most_negative = eig.eigenvalues.iter().fold(0.0_f64, |m, &l| m.min(l));
                let roots = DVector::from_iterator(
                    len,
                    eig.eigenvalues.iter().map(|&l| Complex64::new(l.abs().sqrt(), 0.0)),
                );
                let ket = &eig.eigenvectors * DMatrix::from_diagonal(&roots);
                let factor = if most_negative < 0.0 {
                    let signed = DVector::from_iterator(
                        len,
                        eig.eigenvalues
                            .iter()
                            .map(|&l| Complex64::new(l.abs().sqrt() * l.signum(), 0.0)),
                    );
                    let bra = &eig.eigenvectors * DMatrix::from_diagonal(&signed);
                    Factor::Split { ket, bra }
                } else {
                    Factor::Single(ket)
                };
                Ok(CovarianceFactor {
                    kind,
                    factor,
                    jitter: 0.0,
                    negative_weight: most_negative / largest,
                })
            }
        }
    }

    pub fn kind(&self) -> KernelKind {
        self.kind
    }

    pub fn is_zero(&self) -> bool {
        matches!(self.factor, Factor::Zero)
    }

    /// True when bra and ket paths differ.
    pub fn is_split(&self) -> bool {
        matches!(self.factor, Factor::Split { .. })
    }

    /// Applies the factor to white noise: `(ket path, bra path if different)`.
    fn apply(&self, white: &DVector<Complex64>) -> (Vec<Complex64>, Option<Vec<Complex64>>) {
        match &self.factor {
            Factor::Zero => (vec![Complex64::new(0.0, 0.0); white.len()], None),
            Factor::Single(l) => ((l * white).as_slice().to_vec(), None),
            Factor::Split { ket, bra } => (
                (ket * white).as_slice().to_vec(),
                Some((bra * white).as_slice().to_vec()),
            ),
        }
    }
}

/// One realization of the two noises on the grid. Values are the conjugated
/// processes `z*_t`, `w*_t` that enter the ket equation, with
/// `M[z_t z*_s] = α₁(t,s)` and `M[w_t w*_s] = α₂(t,s)`. This ordering is the one
/// for which the memory operators `Ō = ∫ α O ds` reproduce the noise average.
#[derive(Clone, Debug, PartialEq)]
pub struct NoisePath {
    pub z: Vec<Complex64>,
    pub w: Vec<Complex64>,
    /// Noises driving the bra state when they differ from the ket ones
    /// (indefinite kernels under [`NoiseScheme::SignatureSplit`]).
    pub z_bra: Option<Vec<Complex64>>,
    pub w_bra: Option<Vec<Complex64>>,
}

impl NoisePath {
    pub fn z_bra(&self) -> &[Complex64] {
        self.z_bra.as_deref().unwrap_or(&self.z)
    }

    pub fn w_bra(&self) -> &[Complex64] {
        self.w_bra.as_deref().unwrap_or(&self.w)
    }

    pub fn is_split(&self) -> bool {
        self.z_bra.is_some() || self.w_bra.is_some()
    }
}

/// Deterministic generator of noise realizations keyed by `(seed, index)`.
#[derive(Clone, Debug)]
pub struct NoiseSampler {
    pub grid: TimeGrid,
    pub seed: u64,
    emission: CovarianceFactor,
    absorption: CovarianceFactor,
}

/// Standard complex normal: `E|ζ|² = 1`, `E ζ² = 0`.
fn white_noise(rng: &mut ChaCha8Rng, len: usize) -> DVector<Complex64> {
    let scale = std::f64::consts::FRAC_1_SQRT_2;
    DVector::from_iterator(
        len,
        (0..len).map(|_| {
            let re: f64 = StandardNormal.sample(rng);
            let im: f64 = StandardNormal.sample(rng);
            Complex64::new(re * scale, im * scale)
        }),
    )
}

impl NoiseSampler {
    pub fn new(params: &BathParams, grid: TimeGrid, scheme: NoiseScheme, seed: u64) -> Result<Self> {
        let factor = |kernel: CorrelationKernel| {
            let cov = covariance_matrix(&kernel, &grid).map(|c| c.conj());
            CovarianceFactor::from_matrix(kernel.kind, cov, scheme)
        };
        let emission = factor(CorrelationKernel::emission(*params))?;
        let absorption = factor(CorrelationKernel::absorption(*params))?;
        Ok(NoiseSampler {
            grid,
            seed,
            emission,
            absorption,
        })
    }

    pub fn emission_factor(&self) -> &CovarianceFactor {
        &self.emission
    }

    pub fn absorption_factor(&self) -> &CovarianceFactor {
        &self.absorption
    }

    /// Realization `index`: an independent ChaCha stream selected by the index,
    /// so results do not depend on the order in which realizations are drawn.
    pub fn realization(&self, index: u64) -> NoisePath {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(index);
        let wz = white_noise(&mut rng, self.grid.len);
        let ww = white_noise(&mut rng, self.grid.len);
        let (z, z_bra) = self.emission.apply(&wz);
        let (w, w_bra) = self.absorption.apply(&ww);
        NoisePath { z, w, z_bra, w_bra }
    }
}

/// A finite ensemble of noise realizations, generated on demand.
#[derive(Clone, Debug)]
pub struct NoisePathEnsemble {
    pub sampler: NoiseSampler,
    pub count: usize,
}

impl NoisePathEnsemble {
    pub fn path(&self, index: usize) -> NoisePath {
        assert!(index < self.count);
        self.sampler.realization(index as u64)
    }

    pub fn iter(&self) -> impl Iterator<Item = NoisePath> + '_ {
        (0..self.count).map(move |i| self.path(i))
    }
}

/// Samples `count` realizations of `(z*, w*)` with Cholesky factorisation.
pub fn sample_noise_ensemble(
    params: &BathParams,
    grid: TimeGrid,
    count: usize,
    seed: u64,
) -> Result<NoisePathEnsemble> {
    sample_noise_ensemble_with(params, grid, count, seed, NoiseScheme::Cholesky)
}

pub fn sample_noise_ensemble_with(
    params: &BathParams,
    grid: TimeGrid,
    count: usize,
    seed: u64,
    scheme: NoiseScheme,
) -> Result<NoisePathEnsemble> {
    if count < 1 {
        return Err(Error::param("count", "need at least one realization"));
    }
    Ok(NoisePathEnsemble {
        sampler: NoiseSampler::new(params, grid, scheme, seed)?,
        count,
    })
}
