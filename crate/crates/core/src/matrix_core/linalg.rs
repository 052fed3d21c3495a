use num_complex::Complex64;
use rand_distr::{Distribution, StandardNormal};

use super::{ComplexMatrix, MatrixError, ToleranceConfig};
use crate::rng::named_rng;

/// Relative pivot magnitude below which a matrix is declared singular.
pub const PIVOT_THRESHOLD: f64 = 1e-14;

/// Minimal `||z| - 1|` accepted by the Neumann resolvent.
pub const NEUMANN_MIN_GAP: f64 = 0.05;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// `PA = LU` with unit lower `L`, stored packed.
#[derive(Debug, Clone)]
pub struct LuFactors {
    n: usize,
    lu: Vec<Complex64>,
    perm: Vec<usize>,
}

impl LuFactors {
    pub fn factor(m: &ComplexMatrix) -> Result<Self, MatrixError> {
        let n = m.dim();
        let mut lu = m.entries().to_vec();
        let scale = m.max_abs();
        let mut perm: Vec<usize> = (0..n).collect();
        for k in 0..n {
            let (p, pmag) = (k..n)
                .map(|i| (i, lu[i * n + k].norm()))
                .fold((k, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
            if pmag <= PIVOT_THRESHOLD * scale || pmag == 0.0 {
                return Err(MatrixError::Singular { z: ZERO });
            }
            if p != k {
                for j in 0..n {
                    lu.swap(k * n + j, p * n + j);
                }
                perm.swap(k, p);
            }
            let inv = ONE / lu[k * n + k];
            for i in k + 1..n {
                let l = lu[i * n + k] * inv;
                lu[i * n + k] = l;
                if l == ZERO {
                    continue;
                }
                for j in k + 1..n {
                    let u = lu[k * n + j];
                    lu[i * n + j] -= l * u;
                }
            }
        }
        Ok(LuFactors { n, lu, perm })
    }

    pub fn solve(&self, b: &[Complex64]) -> Vec<Complex64> {
        let n = self.n;
        let mut x: Vec<Complex64> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            let mut s = x[i];
            for j in 0..i {
                s -= self.lu[i * n + j] * x[j];
            }
            x[i] = s;
        }
        for i in (0..n).rev() {
            let mut s = x[i];
            for j in i + 1..n {
                s -= self.lu[i * n + j] * x[j];
            }
            x[i] = s / self.lu[i * n + i];
        }
        x
    }

    pub fn inverse(&self) -> ComplexMatrix {
        let n = self.n;
        let mut data = vec![ZERO; n * n];
        let mut e = vec![ZERO; n];
        for j in 0..n {
            e.iter_mut().for_each(|v| *v = ZERO);
            e[j] = ONE;
            for (i, v) in self.solve(&e).into_iter().enumerate() {
                data[i * n + j] = v;
            }
        }
        ComplexMatrix { n, data }
    }
}

/// `(zI - M)^{-1}` by LU with partial pivoting.
pub fn resolvent(m: &ComplexMatrix, z: Complex64) -> Result<ComplexMatrix, MatrixError> {
    match LuFactors::factor(&m.shifted(z)) {
        Ok(lu) => Ok(lu.inverse()),
        Err(MatrixError::Singular { .. }) => Err(MatrixError::Singular { z }),
        Err(e) => Err(e),
    }
}

pub fn operator_norm(m: &ComplexMatrix) -> Result<f64, MatrixError> {
    operator_norm_with(m, &ToleranceConfig::default())
}

/// Largest singular value: power iteration on `M* M` with repeated squaring of
/// the iteration matrix, from three seeded random starts.
pub fn operator_norm_with(m: &ComplexMatrix, tol: &ToleranceConfig) -> Result<f64, MatrixError> {
    let b = m.adjoint().matmul(m)?;
    let bmax = b.max_abs();
    if bmax == 0.0 {
        return Ok(0.0);
    }
    let n = m.dim();
    let mut rng = named_rng(0, "operator-norm");
    let mut best = 0.0f64;
    let mut all_converged = true;
    for _ in 0..3 {
        let mut v: Vec<Complex64> = (0..n)
            .map(|_| {
                let re: f64 = StandardNormal.sample(&mut rng);
                let im: f64 = StandardNormal.sample(&mut rng);
                Complex64::new(re, im)
            })
            .collect();
        normalize(&mut v);
        let mut p = b.scale(Complex64::new(1.0 / bmax, 0.0));
        let mut rho_prev = f64::NAN;
        let mut stable = 0;
        let mut converged = false;
        let mut rho = 0.0;
        for _ in 0..tol.max_iterations {
            v = p.mul_vec(&v);
            if normalize(&mut v) == 0.0 {
                break;
            }
            rho = rayleigh(&b, &v);
            if (rho - rho_prev).abs() <= tol.power_iter_tol * rho {
                stable += 1;
                if stable >= 2 {
                    converged = true;
                    break;
                }
            } else {
                stable = 0;
            }
            rho_prev = rho;
            p = p.matmul(&p)?;
            let pmax = p.max_abs();
            if pmax == 0.0 {
                break;
            }
            p = p.scale(Complex64::new(1.0 / pmax, 0.0));
        }
        all_converged &= converged;
        best = best.max(rho);
    }
    if !all_converged {
        return Err(MatrixError::NoConvergence {
            solver: "power iteration",
            iterations: tol.max_iterations,
            estimate: best.sqrt(),
        });
    }
    Ok(best.sqrt())
}

fn normalize(v: &mut [Complex64]) -> f64 {
    let norm = v.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    }
    norm
}

fn rayleigh(b: &ComplexMatrix, v: &[Complex64]) -> f64 {
    b.mul_vec(v)
        .iter()
        .zip(v)
        .map(|(bv, x)| (x.conj() * bv).re)
        .sum()
}

/// `(zI - U)^{-1}` for unitary `U` by the geometric series in `z^{-1}U` (outside
/// the circle) or `zU*` (inside), stopped once the tail bound drops below `tol`.
pub fn resolvent_neumann(
    u: &ComplexMatrix,
    z: Complex64,
    tol: f64,
    max_terms: usize,
) -> Result<ComplexMatrix, MatrixError> {
    let defect = u.unitarity_defect();
    let utol = ToleranceConfig::default().unitarity_tol;
    if defect > utol {
        return Err(MatrixError::NotUnitary { defect, tol: utol });
    }
    let r = z.norm();
    let dist = (r - 1.0).abs();
    if dist < NEUMANN_MIN_GAP {
        return Err(MatrixError::NeumannRadius {
            z,
            dist,
            min: NEUMANN_MIN_GAP,
        });
    }
    let n = u.dim();
    // outside: z^{-1} sum (z^{-1} U)^k; inside: -U* sum (z U*)^k
    let (step, prefactor, q) = if r > 1.0 {
        (u.scale(ONE / z), ComplexMatrix::identity(n).scale(ONE / z), 1.0 / r)
    } else {
        let ua = u.adjoint();
        (ua.scale(z), ua.scale(-ONE), r)
    };
    let pref_norm = if r > 1.0 { 1.0 / r } else { 1.0 };
    let mut term = ComplexMatrix::identity(n);
    let mut sum = ComplexMatrix::identity(n);
    let mut qk = 1.0;
    for _ in 0..max_terms {
        term = term.matmul(&step)?;
        qk *= q;
        sum = sum.add(&term)?;
        if pref_norm * qk * q / (1.0 - q) <= tol {
            return prefactor.matmul(&sum);
        }
    }
    Err(MatrixError::SlowConvergence { terms: max_terms })
}
