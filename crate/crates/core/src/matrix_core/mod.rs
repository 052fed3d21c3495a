//! Dense square complex matrices: resolvents, operator norms, a Hermitian
//! eigensolver, test-matrix synthesis with known spectra and the spectral
//! functional calculus.

mod linalg;
mod spectral;

use std::ops::Index;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

pub use linalg::{operator_norm, operator_norm_with, resolvent, resolvent_neumann, LuFactors};
pub use spectral::{
    check_resolvent_norm_identity, hermitian_eig, random_unitary_basis, spectral_apply,
    synth_hermitian, synth_normal, synth_unitary, NormIdentity, SpectralDecomposition,
};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MatrixError {
    #[error("matrix of dimension {n} needs {expected} entries, got {got}")]
    BadShape { n: usize, expected: usize, got: usize },
    #[error("matrix entry ({row}, {col}) is not finite")]
    NonFinite { row: usize, col: usize },
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("zI - M is numerically singular at z = {z}")]
    Singular { z: Complex64 },
    #[error("matrix is not Hermitian: defect {defect:e} exceeds {tol:e}")]
    NotHermitian { defect: f64, tol: f64 },
    #[error("matrix is not unitary: defect {defect:e} exceeds {tol:e}")]
    NotUnitary { defect: f64, tol: f64 },
    #[error("{solver} did not converge in {iterations} iterations (best estimate {estimate:e})")]
    NoConvergence {
        solver: &'static str,
        iterations: usize,
        estimate: f64,
    },
    #[error("Neumann series needs ||z| - 1| >= {min}, got {dist:e} at z = {z}")]
    NeumannRadius { z: Complex64, dist: f64, min: f64 },
    #[error("Neumann series not converged after {terms} terms")]
    SlowConvergence { terms: usize },
    #[error("z = {z} lies within {dist:e} of the spectrum")]
    InSpectrum { z: Complex64, dist: f64 },
    #[error("spectral function failed at eigenvalue {eigenvalue}: {msg}")]
    SpectralFunction { eigenvalue: Complex64, msg: String },
}

/// Solver tolerances shared by this module.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ToleranceConfig {
    pub hermiticity_tol: f64,
    pub unitarity_tol: f64,
    /// Relative off-diagonal Frobenius mass at which Jacobi stops.
    pub eig_tol: f64,
    pub power_iter_tol: f64,
    pub max_iterations: usize,
}

impl Default for ToleranceConfig {
    fn default() -> Self {
        ToleranceConfig {
            hermiticity_tol: 1e-10,
            unitarity_tol: 1e-10,
            eig_tol: 1e-14,
            power_iter_tol: 1e-10,
            max_iterations: 100,
        }
    }
}

/// Square complex matrix stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexMatrix {
    n: usize,
    data: Vec<Complex64>,
}

impl ComplexMatrix {
    pub fn new(n: usize, data: Vec<Complex64>) -> Result<Self, MatrixError> {
        if n == 0 || data.len() != n * n {
            return Err(MatrixError::BadShape {
                n,
                expected: n * n,
                got: data.len(),
            });
        }
        if let Some(k) = data.iter().position(|v| !(v.re.is_finite() && v.im.is_finite())) {
            return Err(MatrixError::NonFinite {
                row: k / n,
                col: k % n,
            });
        }
        Ok(ComplexMatrix { n, data })
    }

    pub fn zeros(n: usize) -> Self {
        ComplexMatrix {
            n,
            data: vec![Complex64::new(0.0, 0.0); n * n],
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_diag(&vec![Complex64::new(1.0, 0.0); n])
    }

    pub fn from_diag(diag: &[Complex64]) -> Self {
        let mut m = Self::zeros(diag.len());
        for (i, d) in diag.iter().enumerate() {
            m.data[i * m.n + i] = *d;
        }
        m
    }

    pub fn from_real_diag(diag: &[f64]) -> Self {
        let d: Vec<Complex64> = diag.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        Self::from_diag(&d)
    }

    pub fn from_fn(n: usize, f: impl Fn(usize, usize) -> Complex64) -> Self {
        let data = (0..n * n).map(|k| f(k / n, k % n)).collect();
        ComplexMatrix { n, data }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Row-major entries.
    pub fn entries(&self) -> &[Complex64] {
        &self.data
    }

    pub fn diagonal(&self) -> Vec<Complex64> {
        (0..self.n).map(|i| self[(i, i)]).collect()
    }

    pub fn adjoint(&self) -> Self {
        Self::from_fn(self.n, |i, j| self[(j, i)].conj())
    }

    fn check_dim(&self, other: &Self) -> Result<(), MatrixError> {
        if self.n != other.n {
            return Err(MatrixError::DimensionMismatch {
                left: self.n,
                right: other.n,
            });
        }
        Ok(())
    }

    pub fn matmul(&self, other: &Self) -> Result<Self, MatrixError> {
        self.check_dim(other)?;
        let n = self.n;
        let mut out = Self::zeros(n);
        for i in 0..n {
            for k in 0..n {
                let a = self.data[i * n + k];
                if a == Complex64::new(0.0, 0.0) {
                    continue;
                }
                let row = &other.data[k * n..(k + 1) * n];
                let dst = &mut out.data[i * n..(i + 1) * n];
                for (d, b) in dst.iter_mut().zip(row) {
                    *d += a * b;
                }
            }
        }
        Ok(out)
    }

    pub fn mul_vec(&self, v: &[Complex64]) -> Vec<Complex64> {
        (0..self.n)
            .map(|i| {
                self.data[i * self.n..(i + 1) * self.n]
                    .iter()
                    .zip(v)
                    .map(|(a, b)| a * b)
                    .sum()
            })
            .collect()
    }

    pub fn add(&self, other: &Self) -> Result<Self, MatrixError> {
        self.check_dim(other)?;
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect();
        Ok(ComplexMatrix { n: self.n, data })
    }

    pub fn sub(&self, other: &Self) -> Result<Self, MatrixError> {
        self.check_dim(other)?;
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect();
        Ok(ComplexMatrix { n: self.n, data })
    }

    pub fn scale(&self, c: Complex64) -> Self {
        ComplexMatrix {
            n: self.n,
            data: self.data.iter().map(|a| a * c).collect(),
        }
    }

    /// `self += c * other`.
    pub fn add_scaled(&mut self, c: Complex64, other: &Self) -> Result<(), MatrixError> {
        self.check_dim(other)?;
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += c * b;
        }
        Ok(())
    }

    /// `zI - self`.
    pub fn shifted(&self, z: Complex64) -> Self {
        let mut m = self.scale(Complex64::new(-1.0, 0.0));
        for i in 0..self.n {
            m.data[i * self.n + i] += z;
        }
        m
    }

    /// Largest entry modulus.
    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.norm()))
    }

    pub fn frobenius(&self) -> f64 {
        self.data.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
    }

    /// `||self - self*||_max`.
    pub fn hermiticity_defect(&self) -> f64 {
        let n = self.n;
        let mut d = 0.0f64;
        for i in 0..n {
            for j in i..n {
                d = d.max((self[(i, j)] - self[(j, i)].conj()).norm());
            }
        }
        d
    }

    /// `||self* self - I||_max`.
    pub fn unitarity_defect(&self) -> f64 {
        let g = self.adjoint().matmul(self).expect("same dimension");
        g.sub(&Self::identity(self.n)).expect("same dimension").max_abs()
    }
}

impl Index<(usize, usize)> for ComplexMatrix {
    type Output = Complex64;

    fn index(&self, (i, j): (usize, usize)) -> &Complex64 {
        &self.data[i * self.n + j]
    }
}
