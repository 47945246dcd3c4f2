//! Collective spin operators on the fixed-J Dicke subspace.
//!
//! Basis convention: index `k = 0..=N` labels `|J, m⟩` with `m = J - k`, so the
//! extremal state `|J, J⟩` comes first and `J-` is strictly lower triangular.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::band::Band;
use crate::error::{Error, Result};

/// The `(N+1)`-dimensional symmetric subspace with total spin `J = N/2`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DickeBasis {
    n: u32,
}

impl DickeBasis {
    pub fn new(n: i64) -> Result<Self> {
        if n < 1 || n > u32::MAX as i64 {
            return Err(Error::InvalidDimension(n));
        }
        Ok(DickeBasis { n: n as u32 })
    }

    /// Total spin number `N`.
    pub fn n(&self) -> u32 {
        self.n
    }

    /// `2J`, which equals `N` and is always an integer.
    pub fn twice_j(&self) -> u32 {
        self.n
    }

    pub fn j(&self) -> f64 {
        self.n as f64 / 2.0
    }

    pub fn dim(&self) -> usize {
        self.n as usize + 1
    }

    /// `2m` of basis index `k`.
    pub fn twice_m(&self, k: usize) -> i64 {
        self.n as i64 - 2 * k as i64
    }

    pub fn m(&self, k: usize) -> f64 {
        self.twice_m(k) as f64 / 2.0
    }

    /// `J(J+1) = N(N+2)/4`.
    pub fn casimir(&self) -> f64 {
        let n = self.n as f64;
        n * (n + 2.0) / 4.0
    }

    pub fn m_values(&self) -> Vec<f64> {
        (0..self.dim()).map(|k| self.m(k)).collect()
    }
}

/// Structured (single-diagonal) forms of `Jz`, `J+`, `J-`.
#[derive(Clone, Debug)]
pub struct Ladder {
    pub jz: Band,
    pub jp: Band,
    pub jm: Band,
}

impl Ladder {
    pub fn new(basis: &DickeBasis) -> Self {
        let dim = basis.dim();
        let cas = basis.casimir();
        // J+ |J,m⟩ = sqrt(J(J+1) - m(m+1)) |J,m+1⟩ ; m+1 sits at index k-1
        let raising: Vec<Complex64> = (0..dim - 1)
            .map(|k| {
                let m = basis.m(k + 1);
                Complex64::new((cas - m * (m + 1.0)).max(0.0).sqrt(), 0.0)
            })
            .collect();
        let jp = Band::from_values(dim, 1, raising);
        Ladder {
            jz: Band::real_diagonal(&basis.m_values()),
            jm: jp.adjoint(),
            jp,
        }
    }

    /// `Jz^power` as a diagonal band.
    pub fn jz_pow(&self, power: i32) -> Band {
        Band::diagonal(self.jz.values().iter().map(|m| m.powi(power)).collect())
    }
}

/// Dense collective operators.
#[derive(Clone, Debug)]
pub struct CollectiveOps {
    pub basis: DickeBasis,
    pub ladder: Ladder,
    pub jz: DMatrix<Complex64>,
    pub jp: DMatrix<Complex64>,
    pub jm: DMatrix<Complex64>,
    pub jx: DMatrix<Complex64>,
    pub jy: DMatrix<Complex64>,
    pub j2: DMatrix<Complex64>,
}

impl CollectiveOps {
    pub fn dim(&self) -> usize {
        self.basis.dim()
    }
}

pub fn build_collective_operators(basis: &DickeBasis) -> CollectiveOps {
    let ladder = Ladder::new(basis);
    let jz = ladder.jz.to_dense();
    let jp = ladder.jp.to_dense();
    let jm = ladder.jm.to_dense();
    let half = Complex64::new(0.5, 0.0);
    let jx = (&jp + &jm) * half;
    let jy = (&jp - &jm) * Complex64::new(0.0, -0.5);
    let j2 = &jx * &jx + &jy * &jy + &jz * &jz;
    CollectiveOps {
        basis: *basis,
        ladder,
        jz,
        jp,
        jm,
        jx,
        jy,
        j2,
    }
}

/// `H = a Jz + b Jz²`, diagonal in the Dicke basis.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EffectiveHamiltonian {
    pub a: f64,
    pub b: f64,
    /// Constant dropped from the full LMG Hamiltonian; never affects dynamics.
    pub energy_shift: f64,
}

impl EffectiveHamiltonian {
    pub fn new(a: f64, b: f64) -> Self {
        EffectiveHamiltonian {
            a,
            b,
            energy_shift: 0.0,
        }
    }

    pub fn diagonal(&self, basis: &DickeBasis) -> Vec<f64> {
        basis
            .m_values()
            .into_iter()
            .map(|m| self.a * m + self.b * m * m)
            .collect()
    }

    pub fn band(&self, basis: &DickeBasis) -> Band {
        Band::real_diagonal(&self.diagonal(basis))
    }

    pub fn matrix(&self, basis: &DickeBasis) -> DMatrix<Complex64> {
        self.band(basis).to_dense()
    }
}

/// Maps the isotropic LMG couplings `(λ, h)` to `a = -2h`, `b = 2λ/N`.
pub fn lmg_reduction(lambda: f64, h: f64, n: i64) -> Result<EffectiveHamiltonian> {
    let basis = DickeBasis::new(n)?;
    let nf = basis.n() as f64;
    let b = 2.0 * lambda / nf;
    Ok(EffectiveHamiltonian {
        a: -2.0 * h,
        b,
        energy_shift: -b * basis.casimir() + lambda,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct StateVector {
    pub amplitudes: DVector<Complex64>,
    pub normalized: bool,
}

impl StateVector {
    pub fn new(amplitudes: DVector<Complex64>) -> Self {
        StateVector {
            amplitudes,
            normalized: false,
        }
    }

    pub fn norm(&self) -> f64 {
        self.amplitudes.norm()
    }

    pub fn normalize(mut self) -> Result<Self> {
        let norm = self.norm();
        if norm <= 0.0 || !norm.is_finite() {
            return Err(Error::param("amplitudes", "state has zero or non-finite norm"));
        }
        self.amplitudes /= Complex64::new(norm, 0.0);
        self.normalized = true;
        Ok(self)
    }

    pub fn projector(&self) -> DMatrix<Complex64> {
        &self.amplitudes * self.amplitudes.adjoint()
    }
}

/// Coherent spin state pointing along `(sinθ cosφ, sinθ sinφ, cosθ)`.
///
/// Amplitude of index `k` is `sqrt(C(N,k)) cos^(N-k)(θ/2) sin^k(θ/2) e^(ikφ)`,
/// with the global phase chosen so the `m = J` amplitude is real and nonnegative.
pub fn coherent_spin_state(basis: &DickeBasis, theta: f64, phi: f64) -> StateVector {
    let n = basis.n() as usize;
    let (s, c) = (theta / 2.0).sin_cos();
    let mut ln_binom = 0.0_f64;
    let mut amps = Vec::with_capacity(n + 1);
    for k in 0..=n {
        if k > 0 {
            ln_binom += ((n - k + 1) as f64).ln() - (k as f64).ln();
        }
        let cos_pow = (n - k) as i32;
        let sin_pow = k as i32;
        let magnitude = if (c == 0.0 && cos_pow > 0) || (s == 0.0 && sin_pow > 0) {
            0.0
        } else {
            let mut ln_mag = 0.5 * ln_binom;
            if cos_pow > 0 {
                ln_mag += cos_pow as f64 * c.abs().ln();
            }
            if sin_pow > 0 {
                ln_mag += sin_pow as f64 * s.abs().ln();
            }
            ln_mag.exp()
        };
        let sign = c.signum().powi(cos_pow) * s.signum().powi(sin_pow);
        amps.push(Complex64::from_polar(magnitude * sign, k as f64 * phi));
    }
    if amps[0].re < 0.0 {
        for a in &mut amps {
            *a = -*a;
        }
    }
    let state = StateVector::new(DVector::from_vec(amps));
    // already unit norm up to rounding; renormalise to pin it exactly
    state.normalize().expect("coherent state has unit norm")
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::SymmetricEigen;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    #[test]
    fn rejects_empty_system() {
        assert_eq!(DickeBasis::new(0), Err(Error::InvalidDimension(0)));
        assert_eq!(DickeBasis::new(-3), Err(Error::InvalidDimension(-3)));
    }

    #[test]
    fn single_spin_jz() {
        let ops = build_collective_operators(&DickeBasis::new(1).unwrap());
        assert_eq!(ops.jz[(0, 0)], c(0.5));
        assert_eq!(ops.jz[(1, 1)], c(-0.5));
        assert_eq!(ops.jz[(0, 1)], c(0.0));
    }

    #[test]
    fn lowering_from_top_state() {
        let basis = DickeBasis::new(2).unwrap();
        let ops = build_collective_operators(&basis);
        let top = DVector::from_vec(vec![c(1.0), c(0.0), c(0.0)]);
        let lowered = &ops.jm * top;
        assert!((lowered[1] - c(2f64.sqrt())).norm() < 1e-15);
        assert_eq!(lowered[0], c(0.0));
        assert_eq!(lowered[2], c(0.0));
    }

    #[test]
    fn casimir_for_ten_spins() {
        let ops = build_collective_operators(&DickeBasis::new(10).unwrap());
        let expected = DMatrix::<Complex64>::identity(11, 11) * c(30.0);
        assert!((ops.j2.clone() - expected).camax() < 1e-10);
    }

    #[test]
    fn algebra_holds_up_to_64_spins() {
        let i = Complex64::new(0.0, 1.0);
        for n in 1..=64 {
            let basis = DickeBasis::new(n).unwrap();
            let ops = build_collective_operators(&basis);
            let comm = &ops.jx * &ops.jy - &ops.jy * &ops.jx;
            assert!((comm - &ops.jz * i).camax() < 1e-12, "N={n}");
            let cas = DMatrix::<Complex64>::identity(basis.dim(), basis.dim()) * c(basis.casimir());
            assert!((ops.j2.clone() - cas).camax() < 1e-10, "N={n}");
            let pm = &ops.jp * &ops.jm - &ops.jm * &ops.jp;
            assert!((pm - &ops.jz * c(2.0)).camax() < 1e-11, "N={n}");
            assert_eq!(ops.jp.adjoint(), ops.jm);
        }
    }

    #[test]
    fn lowering_is_strictly_lower_triangular() {
        let ops = build_collective_operators(&DickeBasis::new(5).unwrap());
        for r in 0..6 {
            for col in 0..6 {
                if ops.jm[(r, col)] != c(0.0) {
                    assert_eq!(r, col + 1);
                }
            }
        }
    }

    #[test]
    fn lmg_mapping() {
        let h = lmg_reduction(1.0, 0.0, 4).unwrap();
        assert_eq!((h.a, h.b), (0.0, 0.5));
        let h = lmg_reduction(0.0, -0.5, 7).unwrap();
        assert_eq!((h.a, h.b), (1.0, 0.0));
        let h = lmg_reduction(-10.0, -0.5, 20).unwrap();
        assert_eq!((h.a, h.b), (1.0, -1.0));
        // -(2λ/N) J(J+1) + λ = 1 * 110 - 10
        assert!((h.energy_shift - 100.0).abs() < 1e-12);
        assert!(lmg_reduction(1.0, 1.0, 0).is_err());
    }

    #[test]
    fn hamiltonian_is_real_diagonal() {
        let basis = DickeBasis::new(4).unwrap();
        let h = EffectiveHamiltonian::new(1.0, -1.0).matrix(&basis);
        assert_eq!(h, h.adjoint());
        assert_eq!(h[(0, 0)], c(2.0 - 4.0));
        assert_eq!(h[(0, 1)], c(0.0));
    }

    #[test]
    fn css_at_pole_is_top_state() {
        let basis = DickeBasis::new(6).unwrap();
        let psi = coherent_spin_state(&basis, 0.0, 1.3);
        assert_eq!(psi.amplitudes[0], c(1.0));
        assert!(psi.amplitudes.iter().skip(1).all(|a| a.norm() == 0.0));
    }

    #[test]
    fn css_along_x_has_mean_spin_j() {
        for n in [1, 2, 5, 20, 51] {
            let basis = DickeBasis::new(n).unwrap();
            let ops = build_collective_operators(&basis);
            let psi = coherent_spin_state(&basis, std::f64::consts::FRAC_PI_2, 0.0);
            assert!(psi.normalized);
            assert!((psi.norm() - 1.0).abs() < 1e-12);
            let v = &psi.amplitudes;
            let ex = |op: &DMatrix<Complex64>| (v.adjoint() * op * v)[(0, 0)];
            assert!((ex(&ops.jx) - c(basis.j())).norm() < 1e-12);
            assert!(ex(&ops.jy).norm() < 1e-12);
            assert!(ex(&ops.jz).norm() < 1e-12);
        }
    }

    /// Rotation oracle: exp(-iθ(Jy cosφ - Jx sinφ)) |J,J⟩ via Hermitian eigendecomposition.
    fn rotated_top_state(ops: &CollectiveOps, theta: f64, phi: f64) -> DVector<Complex64> {
        let gen = &ops.jy * c(phi.cos()) - &ops.jx * c(phi.sin());
        let eig = SymmetricEigen::new(gen);
        let phases = DMatrix::from_diagonal(&DVector::from_iterator(
            eig.eigenvalues.len(),
            eig.eigenvalues.iter().map(|&l| Complex64::from_polar(1.0, -theta * l)),
        ));
        let u = &eig.eigenvectors * phases * eig.eigenvectors.adjoint();
        let mut top = DVector::zeros(ops.dim());
        top[0] = c(1.0);
        u * top
    }

    #[test]
    fn css_matches_rotation_oracle() {
        let angles = [
            (0.3, 0.0),
            (1.1, 0.7),
            (2.0, -2.2),
            (std::f64::consts::FRAC_PI_2, 0.0),
            (2.9, 4.0),
        ];
        for n in 1..=10 {
            let basis = DickeBasis::new(n).unwrap();
            let ops = build_collective_operators(&basis);
            for &(theta, phi) in &angles {
                let closed = coherent_spin_state(&basis, theta, phi).amplitudes;
                let mut oracle = rotated_top_state(&ops, theta, phi);
                // align the global phase through the overlap, which stays
                // well conditioned when the m = J amplitude is tiny
                let overlap = oracle.dotc(&closed);
                oracle *= overlap / overlap.norm();
                let diff = (&closed - oracle).camax();
                assert!(diff < 1e-12, "N={n} θ={theta} φ={phi}: {diff}");
                assert!(closed[0].im == 0.0 && closed[0].re >= 0.0);
            }
        }
    }

    #[test]
    fn css_phase_convention_past_south_pole() {
        let basis = DickeBasis::new(3).unwrap();
        let psi = coherent_spin_state(&basis, 4.0, 0.2);
        assert!(psi.amplitudes[0].re >= 0.0);
        assert_eq!(psi.amplitudes[0].im, 0.0);
    }
}
