//! Spin moments, the squeezing parameter and moment-equation residuals.
//!
//! `ξ² = N ⟨ΔJ²_min⟩ / ⟨Jx⟩²` with
//! `⟨ΔJ²_min⟩ = ½(⟨Jy² + Jz²⟩ - sqrt(⟨Jy² - Jz²⟩² + 4⟨JyJz⟩²_ss))` and
//! `⟨JyJz⟩_ss = ⟨JyJz + JzJy⟩/2`. The mean spin is assumed to lie along `x`;
//! [`SqueezingPoint::spin_angle`] reports how far it has tilted away.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::coefficients::CoeffState;
use crate::error::Result;
use crate::master::{assemble_obar, master_rhs, MasterOperators};
use crate::spin::CollectiveOps;

const I: Complex64 = Complex64::new(0.0, 1.0);

/// Dense operators whose expectations make up a [`MomentSet`].
#[derive(Clone, Debug)]
pub struct MomentOperators {
    jx: DMatrix<Complex64>,
    jy: DMatrix<Complex64>,
    jz: DMatrix<Complex64>,
    jx2: DMatrix<Complex64>,
    jy2: DMatrix<Complex64>,
    jz2: DMatrix<Complex64>,
    jyjz_ss: DMatrix<Complex64>,
    jz3: DMatrix<Complex64>,
    jz4: DMatrix<Complex64>,
    jm: DMatrix<Complex64>,
    jm2: DMatrix<Complex64>,
    jz_jm: DMatrix<Complex64>,
    jz2_jm: DMatrix<Complex64>,
    jz3_jm: DMatrix<Complex64>,
    jz_jm2: DMatrix<Complex64>,
    jz2_jm2: DMatrix<Complex64>,
    casimir: f64,
}

impl MomentOperators {
    pub fn new(ops: &CollectiveOps) -> Self {
        let jz2 = &ops.jz * &ops.jz;
        let jz3 = &jz2 * &ops.jz;
        let jm2 = &ops.jm * &ops.jm;
        MomentOperators {
            jx2: &ops.jx * &ops.jx,
            jy2: &ops.jy * &ops.jy,
            jyjz_ss: (&ops.jy * &ops.jz + &ops.jz * &ops.jy) * Complex64::new(0.5, 0.0),
            jz4: &jz3 * &ops.jz,
            jz_jm: &ops.jz * &ops.jm,
            jz2_jm: &jz2 * &ops.jm,
            jz3_jm: &jz3 * &ops.jm,
            jz_jm2: &ops.jz * &jm2,
            jz2_jm2: &jz2 * &jm2,
            jx: ops.jx.clone(),
            jy: ops.jy.clone(),
            jz: ops.jz.clone(),
            jm: ops.jm.clone(),
            jz2,
            jz3,
            jm2,
            casimir: ops.basis.casimir(),
        }
    }
}

/// `tr(ρ A)` in O(d²).
pub fn expectation(rho: &DMatrix<Complex64>, op: &DMatrix<Complex64>) -> Complex64 {
    let d = rho.nrows();
    let mut acc = Complex64::new(0.0, 0.0);
    for c in 0..d {
        for r in 0..d {
            acc += rho[(c, r)] * op[(r, c)];
        }
    }
    acc
}

/// Expectation values entering the squeezing parameter and the moment equations.
/// Hermitian observables are stored as real numbers; `hermitian_imag` keeps the
/// largest imaginary part that was discarded.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MomentSet {
    pub jx: f64,
    pub jy: f64,
    pub jz: f64,
    pub jx2: f64,
    pub jy2: f64,
    pub jz2: f64,
    pub jyjz_ss: f64,
    pub jz3: f64,
    pub jz4: f64,
    pub jm: Complex64,
    pub jm2: Complex64,
    pub jz_jm: Complex64,
    pub jz2_jm: Complex64,
    pub jz3_jm: Complex64,
    pub jz_jm2: Complex64,
    pub jz2_jm2: Complex64,
    pub hermitian_imag: f64,
    /// `⟨Jx²⟩ + ⟨Jy²⟩ + ⟨Jz²⟩ - J(J+1)`
    pub casimir_error: f64,
}

pub fn compute_moments(rho: &DMatrix<Complex64>, ops: &MomentOperators) -> MomentSet {
    let ex = |op: &DMatrix<Complex64>| expectation(rho, op);
    let herm = [
        ex(&ops.jx),
        ex(&ops.jy),
        ex(&ops.jz),
        ex(&ops.jx2),
        ex(&ops.jy2),
        ex(&ops.jz2),
        ex(&ops.jyjz_ss),
        ex(&ops.jz3),
        ex(&ops.jz4),
    ];
    let hermitian_imag = herm.iter().map(|v| v.im.abs()).fold(0.0, f64::max);
    let [jx, jy, jz, jx2, jy2, jz2, jyjz_ss, jz3, jz4] = herm.map(|v| v.re);
    MomentSet {
        jx,
        jy,
        jz,
        jx2,
        jy2,
        jz2,
        jyjz_ss,
        jz3,
        jz4,
        jm: ex(&ops.jm),
        jm2: ex(&ops.jm2),
        jz_jm: ex(&ops.jz_jm),
        jz2_jm: ex(&ops.jz2_jm),
        jz3_jm: ex(&ops.jz3_jm),
        jz_jm2: ex(&ops.jz_jm2),
        jz2_jm2: ex(&ops.jz2_jm2),
        hermitian_imag,
        casimir_error: jx2 + jy2 + jz2 - ops.casimir,
    }
}

/// Mean-spin threshold below which `ξ²` is reported as undefined.
pub const MIN_MEAN_SPIN_SQ: f64 = 1e-20;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SqueezingPoint {
    pub t: f64,
    /// `None` when `⟨Jx⟩² <= 1e-20`.
    pub xi2: Option<f64>,
    pub min_variance: f64,
    pub mean_spin_x: f64,
    /// Angle between the mean spin and the `+x` axis, radians.
    pub spin_angle: f64,
}

impl SqueezingPoint {
    pub fn is_squeezed(&self) -> bool {
        self.xi2.is_some_and(|x| x < SQUEEZED_BELOW)
    }
}

/// `ξ²` must fall below this to count as squeezed; the margin keeps rounding
/// noise around the coherent-state value 1 from registering.
pub const SQUEEZED_BELOW: f64 = 1.0 - 1e-9;

pub fn squeezing_parameter(m: &MomentSet, n: u32, t: f64) -> SqueezingPoint {
    let sum = m.jy2 + m.jz2;
    let diff = m.jy2 - m.jz2;
    let min_variance = 0.5 * (sum - (diff * diff + 4.0 * m.jyjz_ss * m.jyjz_ss).sqrt());
    let jx_sq = m.jx * m.jx;
    let xi2 = (jx_sq > MIN_MEAN_SPIN_SQ).then(|| n as f64 * min_variance / jx_sq);
    SqueezingPoint {
        t,
        xi2,
        min_variance,
        mean_spin_x: m.jx,
        spin_angle: (m.jy * m.jy + m.jz * m.jz).sqrt().atan2(m.jx),
    }
}

/// Squeezing figures of merit for one run.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct SqueezingSummary {
    pub min_xi2: Option<f64>,
    pub argmin_t: Option<f64>,
    /// First sample time with `ξ² <` [`SQUEEZED_BELOW`].
    pub onset_t: Option<f64>,
    /// Length of the first squeezed interval; its end is interpolated linearly
    /// to the crossing of `ξ² = 1`.
    pub duration: Option<f64>,
    /// The first squeezed interval is still open at the last sample, so
    /// `duration` is a lower bound.
    pub open_at_end: bool,
}

pub fn summarize_squeezing(points: &[SqueezingPoint]) -> SqueezingSummary {
    let mut out = SqueezingSummary::default();
    for p in points {
        if let Some(x) = p.xi2 {
            if out.min_xi2.is_none_or(|m| x < m) {
                out.min_xi2 = Some(x);
                out.argmin_t = Some(p.t);
            }
        }
    }
    let Some(start) = points.iter().position(|p| p.is_squeezed()) else {
        return out;
    };
    out.onset_t = Some(points[start].t);
    match points[start..].iter().position(|p| !p.is_squeezed()) {
        Some(off) => {
            let (prev, next) = (&points[start + off - 1], &points[start + off]);
            let end = match (prev.xi2, next.xi2) {
                (Some(x0), Some(x1)) if x1 > x0 => prev.t + (next.t - prev.t) * (1.0 - x0) / (x1 - x0),
                _ => next.t,
            };
            out.duration = Some(end.min(next.t) - points[start].t);
        }
        None => {
            out.duration = Some(points.last().unwrap().t - points[start].t);
            out.open_at_end = true;
        }
    }
    out
}

/// Closed-form rate equations for five low moments, kept term for term in
/// their reference form (including its known defects, see README).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum MomentEquation {
    /// `d⟨J-⟩/dt`
    Lowering,
    /// `d⟨Jz⟩/dt`
    Inversion,
    /// `d⟨J-²⟩/dt`
    LoweringSquared,
    /// `d⟨Jz²⟩/dt`
    InversionSquared,
    /// `d⟨Jz J-⟩/dt`
    InversionLowering,
}

impl MomentEquation {
    pub const ALL: [MomentEquation; 5] = [
        MomentEquation::Lowering,
        MomentEquation::Inversion,
        MomentEquation::LoweringSquared,
        MomentEquation::InversionSquared,
        MomentEquation::InversionLowering,
    ];

    pub fn label(&self) -> &'static str {
        match self {
            MomentEquation::Lowering => "Jm",
            MomentEquation::Inversion => "Jz",
            MomentEquation::LoweringSquared => "Jm2",
            MomentEquation::InversionSquared => "Jz2",
            MomentEquation::InversionLowering => "JzJm",
        }
    }

    pub fn observable(&self) -> &'static str {
        match self {
            MomentEquation::Lowering => "J-",
            MomentEquation::Inversion => "Jz",
            MomentEquation::LoweringSquared => "J-^2",
            MomentEquation::InversionSquared => "Jz^2",
            MomentEquation::InversionLowering => "Jz J-",
        }
    }

    /// The moment whose time derivative this equation gives.
    pub fn measured(&self, m: &MomentSet) -> Complex64 {
        match self {
            MomentEquation::Lowering => m.jm,
            MomentEquation::Inversion => Complex64::new(m.jz, 0.0),
            MomentEquation::LoweringSquared => m.jm2,
            MomentEquation::InversionSquared => Complex64::new(m.jz2, 0.0),
            MomentEquation::InversionLowering => m.jz_jm,
        }
    }

    /// Operator `A` with `d⟨A⟩/dt = tr(A dρ/dt)`.
    pub fn operator(&self, ops: &MomentOperators) -> DMatrix<Complex64> {
        match self {
            MomentEquation::Lowering => ops.jm.clone(),
            MomentEquation::Inversion => ops.jz.clone(),
            MomentEquation::LoweringSquared => ops.jm2.clone(),
            MomentEquation::InversionSquared => ops.jz2.clone(),
            MomentEquation::InversionLowering => ops.jz_jm.clone(),
        }
    }

    /// Reference right-hand side, evaluated from measured moments and `F(t)`.
    pub fn reference_rate(&self, m: &MomentSet, f: &CoeffState, a: f64, b: f64, j: f64) -> Complex64 {
        let jj = j * (j + 1.0);
        let (f11, f12, f21, f22) = (f.f11, f.f12, f.f21, f.f22);
        let (c11, c12, c21, c22) = (f11.conj(), f12.conj(), f21.conj(), f22.conj());
        let re = |x: f64| Complex64::new(x, 0.0);
        let (jz, jz2, jz3, jz4) = (re(m.jz), re(m.jz2), re(m.jz3), re(m.jz4));
        match self {
            MomentEquation::Lowering => {
                -I * (a + b) * m.jm - I * (2.0 * b) * m.jz_jm
                    + (f11 * 2.0 * m.jz_jm - c21 * 2.0 * (m.jz_jm + m.jm) - c22 * 2.0 * (m.jz_jm + m.jz2_jm))
            }
            MomentEquation::Inversion => {
                let inner = -c11 * (re(jj) - jz2 + jz) - c12 * (re(-jj) + jz * (jj - 1.0) + jz2 * 2.0 - jz3)
                    + c21 * (re(jj) - jz2 - jz)
                    + c22 * (re(jj) + jz * (jj - 1.0) - jz2 * 2.0 - jz3);
                re(2.0 * inner.re)
            }
            MomentEquation::LoweringSquared => {
                -I * (2.0 * a + 4.0 * b) * m.jm2 - I * (4.0 * b) * m.jz_jm2
                    + f11 * (m.jz_jm2 * 4.0 + m.jm2 * 2.0)
                    + f12 * (m.jz2_jm2 * 4.0 + m.jz_jm2 * 6.0 + m.jm2 * 2.0)
                    - c21 * (m.jz_jm2 * 4.0 + m.jm2 * 6.0)
                    - c22 * (m.jz2_jm2 * 4.0 + m.jz_jm2 * 6.0)
            }
            MomentEquation::InversionSquared => {
                let inner = -c11 * (re(-jj) + jz * (2.0 * jj - 1.0) + jz2 * 3.0 - jz3 * 2.0)
                    - c12 * (re(jj) - jz * (3.0 * jj - 1.0) + jz2 * (2.0 * jj - 4.0) + jz3 * 5.0 - jz4 * 2.0)
                    + c21 * (re(jj) + jz * (2.0 * jj - 1.0) - jz2 * 3.0 - jz3 * 2.0)
                    + c22 * (jz * jj + jz2 * (2.0 * jj - 1.0) - jz3 * 3.0 - jz4 * 2.0);
                re(2.0 * inner.re)
            }
            MomentEquation::InversionLowering => {
                let (jm, zjm, z2jm, z3jm) = (m.jm, m.jz_jm, m.jz2_jm, m.jz3_jm);
                -I * a * zjm - I * b * (zjm + z2jm * 2.0)
                    + (-f11 * (jm * jj + zjm - z2jm * 3.0)
                        - c11 * (jm * jj + zjm - z2jm)
                        - f12 * (zjm * jj + z2jm - z3jm * 3.0)
                        - c12 * (-jm * jj + zjm * (jj - 1.0) + z2jm * 2.0 - z3jm)
                        + f21 * (jm * (jj - 2.0) - zjm * 3.0 - z2jm)
                        + c21 * (jm * (jj - 2.0) - zjm * 5.0 - z2jm * 3.0)
                        + f22 * (jm * (jj - 2.0) + zjm * (jj - 5.0) - z2jm * 4.0 - z3jm)
                        + c22 * (zjm * (jj - 2.0) - z2jm * 5.0 - z3jm * 3.0))
            }
        }
    }

    /// `tr(A dρ/dt)` from the master equation itself.
    pub fn exact_rate(
        &self,
        rho: &DMatrix<Complex64>,
        f: &CoeffState,
        master_ops: &MasterOperators,
        moment_ops: &MomentOperators,
    ) -> Result<Complex64> {
        let obar = assemble_obar(f, master_ops)?;
        let drho = master_rhs(rho, master_ops, &obar);
        Ok(expectation(&drho, &self.operator(moment_ops)))
    }
}

/// Residual of one moment equation along a trajectory.
#[derive(Clone, Debug, PartialEq)]
pub struct ResidualSeries {
    pub equation: MomentEquation,
    pub times: Vec<f64>,
    pub residuals: Vec<f64>,
    pub max: f64,
    pub mean: f64,
}

/// Second-order finite-difference derivative on a uniform grid; one-sided
/// three-point stencils at the ends.
pub fn finite_difference(values: &[Complex64], h: f64) -> Vec<Complex64> {
    let n = values.len();
    assert!(n >= 3, "need at least three samples");
    (0..n)
        .map(|k| {
            if k == 0 {
                (values[0] * -3.0 + values[1] * 4.0 - values[2]) / (2.0 * h)
            } else if k == n - 1 {
                (values[n - 1] * 3.0 - values[n - 2] * 4.0 + values[n - 3]) / (2.0 * h)
            } else {
                (values[k + 1] - values[k - 1]) / (2.0 * h)
            }
        })
        .collect()
}

/// Length of the uniformly spaced prefix of `times`.
fn uniform_prefix(times: &[f64]) -> usize {
    if times.len() < 2 {
        return times.len();
    }
    let h = times[1] - times[0];
    let mut n = 2;
    while n < times.len() && ((times[n] - times[n - 1]) - h).abs() <= 1e-9 * h.abs().max(1e-300) {
        n += 1;
    }
    n
}

/// Compares a finite-difference derivative of each measured moment with the
/// reference right-hand side evaluated from the measured moments and `F(t)`.
pub fn moment_residuals(
    times: &[f64],
    moments: &[MomentSet],
    coeffs: &[CoeffState],
    a: f64,
    b: f64,
    j: f64,
) -> Vec<ResidualSeries> {
    assert_eq!(times.len(), moments.len());
    assert_eq!(times.len(), coeffs.len());
    let n = uniform_prefix(times);
    if n < 3 {
        return Vec::new();
    }
    let h = times[1] - times[0];
    MomentEquation::ALL
        .iter()
        .map(|eq| {
            let measured: Vec<Complex64> = moments[..n].iter().map(|m| eq.measured(m)).collect();
            let fd = finite_difference(&measured, h);
            let residuals: Vec<f64> = (0..n)
                .map(|k| (fd[k] - eq.reference_rate(&moments[k], &coeffs[k], a, b, j)).norm())
                .collect();
            let max = residuals.iter().cloned().fold(0.0, f64::max);
            let mean = residuals.iter().sum::<f64>() / n as f64;
            ResidualSeries {
                equation: *eq,
                times: times[..n].to_vec(),
                residuals,
                max,
                mean,
            }
        })
        .collect()
}
