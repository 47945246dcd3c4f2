//! Memory-integrated O-operator coefficients `F_ij(t)`.
//!
//! The O operators are truncated to
//! `O₁ = f₁₁ J- + f₁₂ Jz J-` and `O₂ = f₂₁ J+ + f₂₂ J+ Jz`, whose two-time
//! coefficients obey linear equations in `t` with brackets that depend on
//! the integrated coefficients `F_ij(t) = ∫₀ᵗ α_i(t,s) f_ij(t,s) ds`:
//!
//! ```text
//! ∂ₜf₁₁ =  f₁₁ P₁₁ + f₁₂ P₁₂        ∂ₜf₁₂ =  f₁₁ Q   + f₁₂ P₂₂
//! ∂ₜf₂₁ = -f₂₁ W                    ∂ₜf₂₂ = -f₂₁ Q   - f₂₂ W
//! ```
//!
//! Transcription of the brackets (`JJ = J(J+1)`, `K = 3(3J/2 - 1/2)`):
//!
//! | bracket | expression |
//! |---------|------------|
//! | `P₁₁`   | `ia + ib + J(J-½) F₁₂ - 2F₂₁ + (J(J-½) - 2) F₂₂` |
//! | `P₁₂`   | `ibJ - J F₁₁ + (J/2) F₁₂ - J F₂₁ - (5J/2) F₂₂` |
//! | `Q`     | `2ib - 2F₁₁ + F₁₂ - 2F₂₁ - 5F₂₂` |
//! | `P₂₂`   | `ia + ib + (JJ - K) F₁₂ - 2F₂₁ + (JJ - 2 - K) F₂₂` |
//! | `W`     | `ia + ib + JJ F₁₂ - 2F₂₁ + (JJ - 2) F₂₂` |
//!
//! Boundary values: `f₁₁(s,s) = f₂₁(s,s) = 1`, `f₁₂(s,s) = f₂₂(s,s) = 0`.
//!
//! Because every `α_i(t,s)` is `α_i(t,t⁻) e^(-γ(t-s))` for `s < t` and the
//! brackets depend on `t` only, differentiating `F_ij` gives the closed system
//!
//! ```text
//! dF_ij/dt = α_i(t,t⁻) f_ij(t,t) - γ F_ij + (bracket combination with f → F)
//! ```
//!
//! which [`evolve_coefficients`] integrates. [`coefficient_quadrature_oracle`]
//! integrates the two-time functions directly and is used to certify it.

use num_complex::Complex64;
use std::ops::{Add, Mul, Sub};

use crate::bath::{BathParams, CorrelationKernel};
use crate::error::{Error, Result};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const I: Complex64 = Complex64::new(0.0, 1.0);

/// The four coefficients at one instant.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct CoeffState {
    pub f11: Complex64,
    pub f12: Complex64,
    pub f21: Complex64,
    pub f22: Complex64,
}

impl CoeffState {
    pub const ZERO: CoeffState = CoeffState {
        f11: ZERO,
        f12: ZERO,
        f21: ZERO,
        f22: ZERO,
    };

    pub fn new(f11: Complex64, f12: Complex64, f21: Complex64, f22: Complex64) -> Self {
        CoeffState { f11, f12, f21, f22 }
    }

    pub fn as_array(&self) -> [Complex64; 4] {
        [self.f11, self.f12, self.f21, self.f22]
    }

    pub fn is_finite(&self) -> bool {
        self.as_array().iter().all(|v| v.re.is_finite() && v.im.is_finite())
    }

    pub fn max_abs(&self) -> f64 {
        self.as_array().iter().map(|v| v.norm()).fold(0.0, f64::max)
    }
}

impl Add for CoeffState {
    type Output = CoeffState;
    fn add(self, o: CoeffState) -> CoeffState {
        CoeffState::new(self.f11 + o.f11, self.f12 + o.f12, self.f21 + o.f21, self.f22 + o.f22)
    }
}

impl Sub for CoeffState {
    type Output = CoeffState;
    fn sub(self, o: CoeffState) -> CoeffState {
        CoeffState::new(self.f11 - o.f11, self.f12 - o.f12, self.f21 - o.f21, self.f22 - o.f22)
    }
}

impl Mul<f64> for CoeffState {
    type Output = CoeffState;
    fn mul(self, k: f64) -> CoeffState {
        CoeffState::new(self.f11 * k, self.f12 * k, self.f21 * k, self.f22 * k)
    }
}

/// Parameters of the coefficient equations.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CoeffParams {
    pub a: f64,
    pub b: f64,
    /// `2J = N`.
    pub twice_j: u32,
    pub bath: BathParams,
}

impl CoeffParams {
    pub fn new(a: f64, b: f64, twice_j: u32, bath: BathParams) -> Self {
        CoeffParams { a, b, twice_j, bath }
    }

    pub fn j(&self) -> f64 {
        self.twice_j as f64 / 2.0
    }

    /// Source terms `α₁(t,t⁻)` and `α₂(t,t⁻)`.
    pub fn sources(&self) -> (Complex64, Complex64) {
        (
            CorrelationKernel::emission(self.bath).equal_time_limit(),
            CorrelationKernel::absorption(self.bath).equal_time_limit(),
        )
    }
}

/// Bracket coefficients of the two-time equations, evaluated from `F(t)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Brackets {
    pub p11: Complex64,
    pub p12: Complex64,
    pub q: Complex64,
    pub p22: Complex64,
    pub w: Complex64,
}

impl Brackets {
    pub fn new(f: &CoeffState, p: &CoeffParams) -> Self {
        let j = p.j();
        let jj = j * (j + 1.0);
        let jh = j * (j - 0.5);
        let k = 3.0 * (1.5 * j - 0.5);
        let iab = I * (p.a + p.b);
        let (f11, f12, f21, f22) = (f.f11, f.f12, f.f21, f.f22);
        Brackets {
            p11: iab + f12 * jh - f21 * 2.0 + f22 * (jh - 2.0),
            p12: I * (p.b * j) - f11 * j + f12 * (j / 2.0) - f21 * j - f22 * (2.5 * j),
            q: I * (2.0 * p.b) - f11 * 2.0 + f12 - f21 * 2.0 - f22 * 5.0,
            p22: iab + f12 * (jj - k) - f21 * 2.0 + f22 * (jj - 2.0 - k),
            w: iab + f12 * jj - f21 * 2.0 + f22 * (jj - 2.0),
        }
    }

    /// `∂ₜ f` for a two-time state `f(t, s)` at fixed `s`.
    pub fn apply(&self, f: &CoeffState) -> CoeffState {
        CoeffState {
            f11: f.f11 * self.p11 + f.f12 * self.p12,
            f12: f.f11 * self.q + f.f12 * self.p22,
            f21: -f.f21 * self.w,
            f22: -f.f21 * self.q - f.f22 * self.w,
        }
    }
}

/// Boundary value `f(s, s)`.
pub const BOUNDARY: CoeffState = CoeffState {
    f11: Complex64::new(1.0, 0.0),
    f12: ZERO,
    f21: Complex64::new(1.0, 0.0),
    f22: ZERO,
};

/// Time derivative of `F` under the exponential-kernel closure.
pub fn coeff_rhs(f: &CoeffState, p: &CoeffParams) -> CoeffState {
    let (src1, src2) = p.sources();
    let gamma = p.bath.cutoff();
    let mut d = Brackets::new(f, p).apply(f) - *f * gamma;
    d.f11 += src1;
    d.f21 += src2;
    d
}

/// Time series of the coefficients on a uniform grid.
#[derive(Clone, Debug, PartialEq)]
pub struct CoeffSeries {
    pub times: Vec<f64>,
    pub values: Vec<CoeffState>,
}

impl CoeffSeries {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn last(&self) -> Option<&CoeffState> {
        self.values.last()
    }
}

fn step_count(t_max: f64, dt: f64) -> Result<usize> {
    if dt <= 0.0 || !dt.is_finite() {
        return Err(Error::param("dt", format!("must be positive, got {dt}")));
    }
    if t_max < dt || !t_max.is_finite() {
        return Err(Error::param("t_max", format!("must be at least dt, got {t_max}")));
    }
    Ok((t_max / dt).round() as usize)
}

/// One classical RK4 step of the closed coefficient system.
pub fn rk4_coeff_step(f: &CoeffState, p: &CoeffParams, dt: f64) -> CoeffState {
    let k1 = coeff_rhs(f, p);
    let k2 = coeff_rhs(&(*f + k1 * (0.5 * dt)), p);
    let k3 = coeff_rhs(&(*f + k2 * (0.5 * dt)), p);
    let k4 = coeff_rhs(&(*f + k3 * dt), p);
    *f + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0)
}

/// Fixed-step RK4 integration of the closed coefficient system from `F = 0`.
pub fn evolve_coefficients(p: &CoeffParams, t_max: f64, dt: f64) -> Result<CoeffSeries> {
    let steps = step_count(t_max, dt)?;
    let mut times = Vec::with_capacity(steps + 1);
    let mut values = Vec::with_capacity(steps + 1);
    let mut f = CoeffState::ZERO;
    times.push(0.0);
    values.push(f);
    for n in 0..steps {
        f = rk4_coeff_step(&f, p, dt);
        let t = (n + 1) as f64 * dt;
        if !f.is_finite() {
            return Err(Error::Divergence { time: t });
        }
        times.push(t);
        values.push(f);
    }
    Ok(CoeffSeries { times, values })
}

/// Brute-force reference for [`evolve_coefficients`].
///
/// Stores the two-time functions `f_ij(t, s_k)` on a triangular grid, advances
/// every column in `t` with RK4 (the brackets at each stage use `F` obtained by
/// trapezoidal quadrature of `α_i(t,s) f_ij(t,s)` over `s ∈ [0, t]`), and starts
/// a new column at `s = t` from the boundary values. Cost is O(n²).
pub fn coefficient_quadrature_oracle(p: &CoeffParams, t_max: f64, dt: f64) -> Result<CoeffSeries> {
    let steps = step_count(t_max, dt)?;
    let emission = CorrelationKernel::emission(p.bath);
    let absorption = CorrelationKernel::absorption(p.bath);

    // F(τ) from columns f(τ, s_k), k < columns.len(), with s_k = k dt, plus the
    // diagonal endpoint s = τ where f = BOUNDARY.
    let integrate = |tau: f64, columns: &[CoeffState]| -> CoeffState {
        let weight = |s: f64| (emission.memory_weight(tau - s), absorption.memory_weight(tau - s));
        let mut acc = CoeffState::ZERO;
        let mut add_segment = |s0: f64, f0: &CoeffState, s1: f64, f1: &CoeffState| {
            let h = 0.5 * (s1 - s0);
            let (e0, a0) = weight(s0);
            let (e1, a1) = weight(s1);
            acc.f11 += (e0 * f0.f11 + e1 * f1.f11) * h;
            acc.f12 += (e0 * f0.f12 + e1 * f1.f12) * h;
            acc.f21 += (a0 * f0.f21 + a1 * f1.f21) * h;
            acc.f22 += (a0 * f0.f22 + a1 * f1.f22) * h;
        };
        for k in 1..columns.len() {
            add_segment((k - 1) as f64 * dt, &columns[k - 1], k as f64 * dt, &columns[k]);
        }
        if let Some(last) = columns.last() {
            let s_last = (columns.len() - 1) as f64 * dt;
            if tau > s_last {
                add_segment(s_last, last, tau, &BOUNDARY);
            }
        }
        acc
    };

    let mut columns: Vec<CoeffState> = vec![BOUNDARY];
    let mut times = Vec::with_capacity(steps + 1);
    let mut values = Vec::with_capacity(steps + 1);
    times.push(0.0);
    values.push(CoeffState::ZERO);

    let derivs = |tau: f64, cols: &[CoeffState]| -> Vec<CoeffState> {
        let big_f = integrate(tau, cols);
        let br = Brackets::new(&big_f, p);
        cols.iter().map(|c| br.apply(c)).collect()
    };
    let shifted = |cols: &[CoeffState], k: &[CoeffState], h: f64| -> Vec<CoeffState> {
        cols.iter().zip(k).map(|(c, d)| *c + *d * h).collect()
    };

    for n in 0..steps {
        let t = n as f64 * dt;
        let k1 = derivs(t, &columns);
        let k2 = derivs(t + 0.5 * dt, &shifted(&columns, &k1, 0.5 * dt));
        let k3 = derivs(t + 0.5 * dt, &shifted(&columns, &k2, 0.5 * dt));
        let k4 = derivs(t + dt, &shifted(&columns, &k3, dt));
        for (idx, c) in columns.iter_mut().enumerate() {
            *c = *c + (k1[idx] + k2[idx] * 2.0 + k3[idx] * 2.0 + k4[idx]) * (dt / 6.0);
        }
        columns.push(BOUNDARY);
        let t_next = (n + 1) as f64 * dt;
        let f = integrate(t_next, &columns);
        if !f.is_finite() {
            return Err(Error::Divergence { time: t_next });
        }
        times.push(t_next);
        values.push(f);
    }
    Ok(CoeffSeries { times, values })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(a: f64, b: f64, n: u32, damping: f64, cutoff: f64, kt: f64) -> CoeffParams {
        CoeffParams::new(a, b, n, BathParams::new(damping, cutoff, kt).unwrap())
    }

    #[test]
    fn derivative_at_origin() {
        let p = params(1.0, -1.0, 10, 0.0001, 5.0, 0.3);
        let d = coeff_rhs(&CoeffState::ZERO, &p);
        let pre = 0.0001 * 5.0 / 2.0;
        assert!((d.f11 - Complex64::new(pre * 0.3, -pre * 5.0)).norm() < 1e-18);
        assert!((d.f21 - Complex64::new(pre * 0.3, 0.0)).norm() < 1e-18);
        assert_eq!(d.f12, ZERO);
        assert_eq!(d.f22, ZERO);
    }

    #[test]
    fn no_damping_no_coefficients() {
        let p = params(1.0, -1.0, 6, 0.0, 2.0, 10.0);
        assert_eq!(coeff_rhs(&CoeffState::ZERO, &p), CoeffState::ZERO);
        let series = evolve_coefficients(&p, 2.0, 0.01).unwrap();
        assert!(series.values.iter().all(|v| *v == CoeffState::ZERO));
        let oracle = coefficient_quadrature_oracle(&p, 0.5, 0.01).unwrap();
        assert!(oracle.values.iter().all(|v| *v == CoeffState::ZERO));
    }

    #[test]
    fn zero_temperature_kills_absorption_channel() {
        let p = params(1.0, -1.0, 8, 0.01, 2.0, 0.0);
        let series = evolve_coefficients(&p, 3.0, 0.01).unwrap();
        assert!(series.values.iter().all(|v| v.f21 == ZERO && v.f22 == ZERO));
        assert!(series.last().unwrap().f11.norm() > 0.0);
    }

    #[test]
    fn short_time_slope() {
        let p = params(1.0, -1.0, 10, 0.01, 2.0, 10.0);
        let dt = 1e-4;
        let series = evolve_coefficients(&p, 10.0 * dt, dt).unwrap();
        let slope = p.sources().0;
        for (t, v) in series.times.iter().zip(&series.values).skip(1) {
            // O(t²) remainder bounded by |slope| (γ + |a| + |b|) t² / 2 up to a safety factor
            let bound = slope.norm() * (2.0 + 2.0) * t * t;
            assert!((v.f11 - slope * *t).norm() <= bound, "t={t}");
        }
    }

    #[test]
    fn second_derivative_at_origin() {
        // linearised closure: F₁₁'' (0) = (i(a+b) - γ) α₁(t,t⁻)
        let p = params(0.7, 0.4, 6, 0.02, 3.0, 5.0);
        let h = 1e-3;
        let series = evolve_coefficients(&p, 2.0 * h, h).unwrap();
        let (f0, f1, f2) = (series.values[0].f11, series.values[1].f11, series.values[2].f11);
        // one-sided second difference, O(h) accurate
        let second = (f2 - f1 * 2.0 + f0) / (h * h);
        let expected = (I * (p.a + p.b) - p.bath.cutoff()) * p.sources().0;
        assert!(
            (second - expected).norm() < 0.01 * expected.norm(),
            "{second} vs {expected}"
        );
    }

    #[test]
    fn oracle_reproduces_diagonal_boundary() {
        // the first oracle step from the boundary matches the closure to O(dt²)
        let p = params(1.0, -1.0, 4, 0.01, 1.0, 10.0);
        let dt = 1e-3;
        let a = evolve_coefficients(&p, 0.05, dt).unwrap();
        let b = coefficient_quadrature_oracle(&p, 0.05, dt).unwrap();
        for (x, y) in a.values.iter().zip(&b.values).skip(1) {
            assert!((*x - *y).max_abs() < 1e-6 * x.max_abs());
        }
    }

    #[test]
    fn rejects_bad_steps() {
        let p = params(1.0, -1.0, 4, 0.01, 1.0, 10.0);
        assert!(evolve_coefficients(&p, 1.0, 0.0).is_err());
        assert!(evolve_coefficients(&p, 0.001, 0.01).is_err());
    }

    #[test]
    fn divergence_reports_time() {
        // huge absorption source: the Riccati term 2F₂₁² outruns the decay
        let p = params(0.0, 0.0, 2, 10.0, 0.1, 1e3);
        match evolve_coefficients(&p, 100.0, 0.01) {
            Err(Error::Divergence { time }) => assert!(time > 0.0 && time < 100.0),
            other => panic!("expected divergence, got {other:?}"),
        }
    }
}
