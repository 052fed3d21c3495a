use std::fmt::Display;

use num_complex::Complex64;
use rand_distr::{Distribution, StandardNormal};

use super::linalg::{operator_norm_with, resolvent};
use super::{ComplexMatrix, MatrixError, ToleranceConfig};
use crate::rng::named_rng;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// `M = V diag(eigenvalues) V*` with orthonormal columns in `V`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralDecomposition {
    pub eigenvalues: Vec<Complex64>,
    pub v: ComplexMatrix,
}

impl SpectralDecomposition {
    pub fn reconstruct(&self) -> ComplexMatrix {
        apply_diag(&self.v, &self.eigenvalues)
    }

    /// `||V* V - I||_max`.
    pub fn orthonormality_defect(&self) -> f64 {
        self.v.unitarity_defect()
    }

    /// Distance from `z` to the eigenvalues.
    pub fn distance(&self, z: Complex64) -> f64 {
        self.eigenvalues
            .iter()
            .fold(f64::INFINITY, |m, l| m.min((z - l).norm()))
    }
}

/// `V diag(d) V*`.
fn apply_diag(v: &ComplexMatrix, d: &[Complex64]) -> ComplexMatrix {
    let n = v.dim();
    ComplexMatrix::from_fn(n, |i, j| {
        (0..n).map(|k| v[(i, k)] * d[k] * v[(j, k)].conj()).sum()
    })
}

/// Cyclic complex Jacobi rotations until the off-diagonal Frobenius mass is at
/// most `eig_tol` times the total. Eigenvalues are returned in ascending order.
pub fn hermitian_eig(
    h: &ComplexMatrix,
    tol: &ToleranceConfig,
) -> Result<SpectralDecomposition, MatrixError> {
    let n = h.dim();
    let defect = h.hermiticity_defect();
    let htol = tol.hermiticity_tol * h.max_abs().max(1.0);
    if defect > htol {
        return Err(MatrixError::NotHermitian { defect, tol: htol });
    }
    let mut a: Vec<Complex64> = ComplexMatrix::from_fn(n, |i, j| 0.5 * (h[(i, j)] + h[(j, i)].conj()))
        .entries()
        .to_vec();
    for i in 0..n {
        a[i * n + i].im = 0.0;
    }
    let mut v = ComplexMatrix::identity(n).entries().to_vec();
    let total = h.frobenius();
    let off = |a: &[Complex64]| -> f64 {
        let mut s = 0.0;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    s += a[i * n + j].norm_sqr();
                }
            }
        }
        s.sqrt()
    };
    let mut converged = off(&a) <= tol.eig_tol * total;
    let mut sweeps = 0;
    while !converged && sweeps < tol.max_iterations {
        sweeps += 1;
        for p in 0..n {
            for q in p + 1..n {
                rotate(&mut a, &mut v, n, p, q);
            }
        }
        converged = off(&a) <= tol.eig_tol * total;
    }
    if !converged {
        return Err(MatrixError::NoConvergence {
            solver: "Jacobi",
            iterations: sweeps,
            estimate: off(&a),
        });
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[i * n + i].re.total_cmp(&a[j * n + j].re));
    let eigenvalues = order.iter().map(|&k| Complex64::new(a[k * n + k].re, 0.0)).collect();
    let v = ComplexMatrix::from_fn(n, |i, j| v[i * n + order[j]]);
    Ok(SpectralDecomposition { eigenvalues, v })
}

/// Zeroes `a[p][q]` with `U = [[c, s], [-s e^{-i phi}, c e^{-i phi}]]`, where
/// `a[p][q] = r e^{i phi}`: `A <- U* A U`, `V <- V U`.
fn rotate(a: &mut [Complex64], v: &mut [Complex64], n: usize, p: usize, q: usize) {
    let h = a[p * n + q];
    let r = h.norm();
    if r == 0.0 {
        return;
    }
    let phase = (h / r).conj();
    let tau = (a[q * n + q].re - a[p * n + p].re) / (2.0 * r);
    let t = if tau >= 0.0 {
        1.0 / (tau + (1.0 + tau * tau).sqrt())
    } else {
        -1.0 / (-tau + (1.0 + tau * tau).sqrt())
    };
    let c = 1.0 / (1.0 + t * t).sqrt();
    let s = t * c;
    let (upp, upq, uqp, uqq) = (
        Complex64::new(c, 0.0),
        Complex64::new(s, 0.0),
        -s * phase,
        c * phase,
    );
    let cols = |m: &mut [Complex64], rows: usize| {
        for k in 0..rows {
            let (x, y) = (m[k * n + p], m[k * n + q]);
            m[k * n + p] = x * upp + y * uqp;
            m[k * n + q] = x * upq + y * uqq;
        }
    };
    cols(a, n);
    cols(v, n);
    for k in 0..n {
        let (x, y) = (a[p * n + k], a[q * n + k]);
        a[p * n + k] = upp.conj() * x + uqp.conj() * y;
        a[q * n + k] = upq.conj() * x + uqq.conj() * y;
    }
    a[p * n + q] = ZERO;
    a[q * n + p] = ZERO;
    a[p * n + p].im = 0.0;
    a[q * n + q].im = 0.0;
}

/// Orthonormalized complex Gaussian matrix (modified Gram-Schmidt, two passes).
pub fn random_unitary_basis(n: usize, seed: u64) -> ComplexMatrix {
    let mut rng = named_rng(seed, "synth-basis");
    let mut cols: Vec<Vec<Complex64>> = (0..n)
        .map(|_| {
            (0..n)
                .map(|_| {
                    let re: f64 = StandardNormal.sample(&mut rng);
                    let im: f64 = StandardNormal.sample(&mut rng);
                    Complex64::new(re, im)
                })
                .collect()
        })
        .collect();
    for j in 0..n {
        for _ in 0..2 {
            for k in 0..j {
                let proj: Complex64 = cols[k].iter().zip(&cols[j]).map(|(a, b)| a.conj() * b).sum();
                let (done, rest) = cols.split_at_mut(j);
                for (x, b) in rest[0].iter_mut().zip(&done[k]) {
                    *x -= proj * b;
                }
            }
        }
        let norm = cols[j].iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
        cols[j].iter_mut().for_each(|x| *x /= norm);
    }
    ComplexMatrix::from_fn(n, |i, j| cols[j][i])
}

/// `V diag(eigenvalues) V*` for a given orthonormal `V`.
pub fn synth_normal(eigenvalues: &[Complex64], v: ComplexMatrix) -> (ComplexMatrix, SpectralDecomposition) {
    let decomp = SpectralDecomposition {
        eigenvalues: eigenvalues.to_vec(),
        v,
    };
    (decomp.reconstruct(), decomp)
}

/// Unitary with eigenvalues `e^{i theta_j}` in a seeded random basis.
pub fn synth_unitary(thetas: &[f64], seed: u64) -> (ComplexMatrix, SpectralDecomposition) {
    let eig: Vec<Complex64> = thetas.iter().map(|&t| Complex64::from_polar(1.0, t)).collect();
    synth_normal(&eig, random_unitary_basis(thetas.len(), seed))
}

/// Hermitian with eigenvalues `lambdas` in a seeded random basis.
pub fn synth_hermitian(lambdas: &[f64], seed: u64) -> (ComplexMatrix, SpectralDecomposition) {
    let eig: Vec<Complex64> = lambdas.iter().map(|&l| Complex64::new(l, 0.0)).collect();
    let (m, d) = synth_normal(&eig, random_unitary_basis(lambdas.len(), seed));
    // exact Hermitian symmetry
    let n = m.dim();
    let sym = ComplexMatrix::from_fn(n, |i, j| {
        if i == j {
            Complex64::new(m[(i, i)].re, 0.0)
        } else if i < j {
            m[(i, j)]
        } else {
            m[(j, i)].conj()
        }
    });
    (sym, d)
}

/// `V diag(phi(lambda_j)) V*`.
pub fn spectral_apply<F, E>(decomp: &SpectralDecomposition, phi: F) -> Result<ComplexMatrix, MatrixError>
where
    F: Fn(Complex64) -> Result<Complex64, E>,
    E: Display,
{
    let d = decomp
        .eigenvalues
        .iter()
        .map(|&l| {
            phi(l).map_err(|e| MatrixError::SpectralFunction {
                eigenvalue: l,
                msg: e.to_string(),
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(apply_diag(&decomp.v, &d))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormIdentity {
    pub lhs: f64,
    pub rhs: f64,
    pub rel_err: f64,
}

/// Compares `||(z - M)^{-1}||` with `1 / d(z, spectrum)`.
pub fn check_resolvent_norm_identity(
    decomp: &SpectralDecomposition,
    z: Complex64,
) -> Result<NormIdentity, MatrixError> {
    let dist = decomp.distance(z);
    if dist <= 1e-8 {
        return Err(MatrixError::InSpectrum { z, dist });
    }
    let m = decomp.reconstruct();
    let lhs = operator_norm_with(&resolvent(&m, z)?, &ToleranceConfig::default())?;
    let rhs = 1.0 / dist;
    Ok(NormIdentity {
        lhs,
        rhs,
        rel_err: (lhs - rhs).abs() / rhs,
    })
}
