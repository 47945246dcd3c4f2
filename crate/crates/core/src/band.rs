//! Single-diagonal sparse matrices.
//!
//! Every operator the dynamics touches (`Jz`, `J±`, products like `Jz J-`)
//! has exactly one nonzero diagonal in the Dicke basis, so products with a
//! dense density matrix cost O(d²) instead of O(d³).

use nalgebra::DMatrix;
use num_complex::Complex64;

/// A square matrix whose only nonzero entries sit on the diagonal
/// `column - row = offset`.
#[derive(Clone, Debug, PartialEq)]
pub struct Band {
    dim: usize,
    offset: isize,
    values: Vec<Complex64>,
}

impl Band {
    pub fn zeros(dim: usize, offset: isize) -> Self {
        let len = dim.saturating_sub(offset.unsigned_abs());
        Band {
            dim,
            offset,
            values: vec![Complex64::new(0.0, 0.0); len],
        }
    }

    /// Builds a band from its stored values. `values[k]` is the entry at
    /// `(k, k + offset)` for nonnegative offsets and `(k - offset, k)` otherwise.
    pub fn from_values(dim: usize, offset: isize, values: Vec<Complex64>) -> Self {
        assert_eq!(
            values.len(),
            dim.saturating_sub(offset.unsigned_abs()),
            "band length does not match dimension and offset"
        );
        Band { dim, offset, values }
    }

    pub fn diagonal(values: Vec<Complex64>) -> Self {
        let dim = values.len();
        Band::from_values(dim, 0, values)
    }

    pub fn real_diagonal(values: &[f64]) -> Self {
        Band::diagonal(values.iter().map(|&v| Complex64::new(v, 0.0)).collect())
    }

    pub fn identity(dim: usize) -> Self {
        Band::diagonal(vec![Complex64::new(1.0, 0.0); dim])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn offset(&self) -> isize {
        self.offset
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    #[inline]
    fn row(&self, k: usize) -> usize {
        if self.offset >= 0 {
            k
        } else {
            k + self.offset.unsigned_abs()
        }
    }

    #[inline]
    fn col(&self, k: usize) -> usize {
        if self.offset >= 0 {
            k + self.offset as usize
        } else {
            k
        }
    }

    /// Entry `(row, col)`; zero off the band.
    pub fn get(&self, row: usize, col: usize) -> Complex64 {
        if col as isize - row as isize != self.offset {
            return Complex64::new(0.0, 0.0);
        }
        self.values[row.min(col)]
    }

    pub fn scale(&self, factor: Complex64) -> Band {
        Band {
            dim: self.dim,
            offset: self.offset,
            values: self.values.iter().map(|v| v * factor).collect(),
        }
    }

    /// Sum of two bands on the same diagonal.
    pub fn add(&self, other: &Band) -> Band {
        assert_eq!(self.dim, other.dim);
        assert_eq!(self.offset, other.offset, "bands must share an offset");
        Band {
            dim: self.dim,
            offset: self.offset,
            values: self.values.iter().zip(&other.values).map(|(a, b)| a + b).collect(),
        }
    }

    /// Matrix product `self * other`.
    pub fn mul(&self, other: &Band) -> Band {
        assert_eq!(self.dim, other.dim);
        let offset = self.offset + other.offset;
        let mut out = Band::zeros(self.dim, offset);
        for k in 0..out.values.len() {
            let r = out.row(k);
            let inner = r as isize + self.offset;
            if inner < 0 || inner as usize >= self.dim {
                continue;
            }
            let inner = inner as usize;
            out.values[k] = self.get(r, inner) * other.get(inner, out.col(k));
        }
        out
    }

    pub fn adjoint(&self) -> Band {
        Band {
            dim: self.dim,
            offset: -self.offset,
            values: self.values.iter().map(|v| v.conj()).collect(),
        }
    }

    pub fn to_dense(&self) -> DMatrix<Complex64> {
        let mut m = DMatrix::zeros(self.dim, self.dim);
        for (k, v) in self.values.iter().enumerate() {
            m[(self.row(k), self.col(k))] = *v;
        }
        m
    }

    /// `out += coeff * self * m`
    pub fn add_left_mul_to(&self, coeff: Complex64, m: &DMatrix<Complex64>, out: &mut DMatrix<Complex64>) {
        let ncols = m.ncols();
        for (k, v) in self.values.iter().enumerate() {
            let w = v * coeff;
            if w == Complex64::new(0.0, 0.0) {
                continue;
            }
            let (r, inner) = (self.row(k), self.col(k));
            for c in 0..ncols {
                out[(r, c)] += w * m[(inner, c)];
            }
        }
    }

    /// `out += coeff * m * self`
    pub fn add_right_mul_to(&self, coeff: Complex64, m: &DMatrix<Complex64>, out: &mut DMatrix<Complex64>) {
        let nrows = m.nrows();
        for (k, v) in self.values.iter().enumerate() {
            let w = v * coeff;
            if w == Complex64::new(0.0, 0.0) {
                continue;
            }
            let (inner, c) = (self.row(k), self.col(k));
            let src = m.column(inner);
            let mut dst = out.column_mut(c);
            for r in 0..nrows {
                dst[r] += w * src[r];
            }
        }
    }

    /// `self * m` as a new dense matrix.
    pub fn left_mul(&self, m: &DMatrix<Complex64>) -> DMatrix<Complex64> {
        let mut out = DMatrix::zeros(self.dim, m.ncols());
        self.add_left_mul_to(Complex64::new(1.0, 0.0), m, &mut out);
        out
    }

    /// `m * self` as a new dense matrix.
    pub fn right_mul(&self, m: &DMatrix<Complex64>) -> DMatrix<Complex64> {
        let mut out = DMatrix::zeros(m.nrows(), self.dim);
        self.add_right_mul_to(Complex64::new(1.0, 0.0), m, &mut out);
        out
    }

    /// `self * v` for a state vector given as a slice.
    pub fn apply(&self, v: &[Complex64], coeff: Complex64, out: &mut [Complex64]) {
        for (k, a) in self.values.iter().enumerate() {
            out[self.row(k)] += coeff * a * v[self.col(k)];
        }
    }

    /// `tr(rho * self)`
    pub fn expectation(&self, rho: &DMatrix<Complex64>) -> Complex64 {
        self.values
            .iter()
            .enumerate()
            .map(|(k, v)| rho[(self.col(k), self.row(k))] * v)
            .sum()
    }

    pub fn max_abs_diff(&self, other: &Band) -> f64 {
        assert_eq!(self.offset, other.offset);
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn sample_band(dim: usize, offset: isize, seed: f64) -> Band {
        let len = dim - offset.unsigned_abs();
        Band::from_values(
            dim,
            offset,
            (0..len).map(|k| c(seed + k as f64, 0.5 * k as f64 - seed)).collect(),
        )
    }

    fn sample_dense(dim: usize) -> DMatrix<Complex64> {
        DMatrix::from_fn(dim, dim, |r, col| c((r * 3 + col) as f64 * 0.1, r as f64 - col as f64))
    }

    #[test]
    fn products_match_dense() {
        let dim = 5;
        for a in -2..=2 {
            for b in -2..=2 {
                let x = sample_band(dim, a, 1.0);
                let y = sample_band(dim, b, -0.5);
                let dense = x.to_dense() * y.to_dense();
                let diff = (x.mul(&y).to_dense() - dense).camax();
                assert!(diff < 1e-12, "offsets {a} {b}: {diff}");
            }
        }
    }

    #[test]
    fn dense_multiplication_matches() {
        let dim = 6;
        let m = sample_dense(dim);
        for off in -3..=3 {
            let x = sample_band(dim, off, 0.3);
            assert!((x.left_mul(&m) - x.to_dense() * &m).camax() < 1e-12);
            assert!((x.right_mul(&m) - &m * x.to_dense()).camax() < 1e-12);
            let tr = (&m * x.to_dense()).trace();
            assert!((x.expectation(&m) - tr).norm() < 1e-12);
        }
    }

    #[test]
    fn adjoint_is_conjugate_transpose() {
        let x = sample_band(4, -1, 2.0);
        assert_eq!(x.adjoint().to_dense(), x.to_dense().adjoint());
    }

    #[test]
    fn out_of_range_product_is_empty() {
        let x = sample_band(3, 2, 1.0);
        let p = x.mul(&x);
        assert!(p.values().is_empty());
        assert_eq!(p.to_dense(), DMatrix::zeros(3, 3));
    }
}
