//! Area quadrature of `(2 i pi)^{-1} int dbar F(z) (z - A)^{-1} dz ^ dzbar`
//! over graded meshes that exclude a band of half-width `epsilon` around the
//! real line (self-adjoint case) or the unit circle (unitary case).
//!
//! `dz ^ dzbar = -2i dx dy`, so every cell contributes
//! `-(1/pi) dbar F(z) (z - A)^{-1} |cell|`.

mod cauchy;
mod convergence;
mod sum;

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::almost_analytic::AlmostAnalyticExtension;
use crate::cayley::{CayleyError, CircleExtension};
use crate::function_model::FunctionError;
use crate::matrix_core::{operator_norm, resolvent, ComplexMatrix, MatrixError, ToleranceConfig};

pub use cauchy::{cauchy_pompeiu_check, CauchyPompeiu, Rect};
pub use convergence::{convergence_study, ConvergenceRow, ConvergenceTable, Problem, Sweep};
use sum::Accumulator;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum IntegratorError {
    #[error("invalid quadrature spec: {0}")]
    BadSpec(String),
    #[error("epsilon = {epsilon} must be below {limit}")]
    EpsilonTooLarge { epsilon: f64, limit: f64 },
    #[error("point lies {dist:e} from the boundary, need at least {need:e}")]
    TooCloseToBoundary { dist: f64, need: f64 },
    #[error("sweep needs at least 4 values spanning a decade")]
    SweepTooShort,
    #[error(transparent)]
    Function(#[from] FunctionError),
    #[error(transparent)]
    Matrix(#[from] MatrixError),
    #[error(transparent)]
    Cayley(#[from] CayleyError),
}

/// Midpoint quadrature on a mesh graded dyadically toward the exclusion band.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct QuadratureSpec {
    /// Columns along the band (x for the strip, angle for the annulus).
    pub base_cells_x: usize,
    /// Rows across the band before refinement; must be even.
    pub base_cells_y: usize,
    pub refinement_levels: usize,
    pub epsilon: f64,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        QuadratureSpec {
            base_cells_x: 256,
            base_cells_y: 256,
            refinement_levels: 6,
            epsilon: 1e-3,
        }
    }
}

impl QuadratureSpec {
    pub fn validate(&self) -> Result<(), IntegratorError> {
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(IntegratorError::BadSpec(format!(
                "epsilon must be positive, got {}",
                self.epsilon
            )));
        }
        if self.base_cells_x < 8 || self.base_cells_y < 8 {
            return Err(IntegratorError::BadSpec("at least 8 cells per direction".into()));
        }
        if !self.base_cells_y.is_multiple_of(2) {
            return Err(IntegratorError::BadSpec("base_cells_y must be even".into()));
        }
        if self.refinement_levels > 12 {
            return Err(IntegratorError::BadSpec("at most 12 refinement levels".into()));
        }
        Ok(())
    }

    /// The same spec with both base cell counts doubled.
    pub fn halved_grid(&self) -> Self {
        QuadratureSpec {
            base_cells_x: 2 * self.base_cells_x,
            base_cells_y: 2 * self.base_cells_y,
            ..*self
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IntegralResult {
    pub value: ComplexMatrix,
    /// Cells in the mesh, including those skipped because `dbar F` vanishes.
    pub n_cells: usize,
    /// Cells where the integrand was evaluated.
    pub n_active: usize,
    /// Largest compensation term carried by the summation.
    pub sum_compensation: f64,
    /// `sum |dbar F| ||(z - A)^{-1}||_F |cell|`.
    pub bound_integral: f64,
    pub epsilon_used: f64,
    pub truncation_n: usize,
    pub seed: Option<u64>,
}

impl IntegralResult {
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self
    }
}

/// One mesh row: midpoint and height.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Band {
    pub mid: f64,
    pub width: f64,
}

/// Rows over `[lo, hi]` graded toward `lo`: `levels` dyadic bands of
/// `base / 2` rows each, then `base` rows in the final band at `lo`.
pub(crate) fn graded_rows(lo: f64, hi: f64, base: usize, levels: usize) -> Vec<Band> {
    let h = hi - lo;
    let mut out = Vec::with_capacity(base / 2 * levels + base);
    let mut push = |from: f64, to: f64, count: usize| {
        let w = (to - from) / count as f64;
        for k in 0..count {
            out.push(Band {
                mid: from + (k as f64 + 0.5) * w,
                width: w,
            });
        }
    };
    let tail = lo + h * 0.5f64.powi(levels as i32);
    push(lo, tail, base);
    for k in (0..levels).rev() {
        let from = lo + h * 0.5f64.powi(k as i32 + 1);
        let to = lo + h * 0.5f64.powi(k as i32);
        push(from, to, base / 2);
    }
    out
}

pub(crate) fn uniform_cols(lo: f64, hi: f64, count: usize) -> Vec<Band> {
    let w = (hi - lo) / count as f64;
    (0..count)
        .map(|k| Band {
            mid: lo + (k as f64 + 0.5) * w,
            width: w,
        })
        .collect()
}

/// Strip rows `epsilon <= |y| <= c`, negative heights first.
pub(crate) fn strip_rows(spec: &QuadratureSpec, c: f64) -> Vec<Band> {
    let upper = graded_rows(spec.epsilon, c, spec.base_cells_y, spec.refinement_levels);
    let mut rows: Vec<Band> = upper
        .iter()
        .rev()
        .map(|b| Band {
            mid: -b.mid,
            width: b.width,
        })
        .collect();
    rows.extend(upper);
    rows
}

fn check_hermitian(a: &ComplexMatrix) -> Result<(), IntegratorError> {
    let defect = a.hermiticity_defect();
    let tol = ToleranceConfig::default().hermiticity_tol * a.max_abs().max(1.0);
    if defect > tol {
        return Err(MatrixError::NotHermitian { defect, tol }.into());
    }
    Ok(())
}

/// Shared cell loop: rows run in parallel, each row sums its columns in order,
/// and row sums are merged in a fixed pairwise tree.
fn integrate<F>(
    n: usize,
    rows: &[Band],
    n_cols: usize,
    a: &ComplexMatrix,
    cell: F,
) -> Result<Accumulator, IntegratorError>
where
    F: Fn(usize, &Band) -> Result<Option<(Complex64, Complex64, f64)>, IntegratorError> + Sync,
{
    let partials = rows
        .par_iter()
        .map(|row| {
            let mut acc = Accumulator::new(n);
            for j in 0..n_cols {
                let Some((z, dbar, area)) = cell(j, row)? else {
                    continue;
                };
                let r = resolvent(a, z)?;
                acc.add(-dbar * area / PI, &r);
                acc.add_bound(dbar.norm() * r.frobenius() * area);
            }
            Ok(acc)
        })
        .collect::<Result<Vec<_>, IntegratorError>>()?;
    Ok(Accumulator::tree_reduce(partials, n))
}

fn finish(acc: Accumulator, n: usize, n_cells: usize, epsilon: f64, truncation: usize) -> IntegralResult {
    let (value, comp, bound, active) = acc.finish();
    IntegralResult {
        value: ComplexMatrix::new(n, value).expect("finite sums"),
        n_cells,
        n_active: active,
        sum_compensation: comp,
        bound_integral: bound,
        epsilon_used: epsilon,
        truncation_n: truncation,
        seed: None,
    }
}

/// Helffer-Sjostrand quadrature for a Hermitian matrix over
/// `supp f x {epsilon <= |y| <= C}`.
pub fn hs_apply_selfadjoint(
    ext: &AlmostAnalyticExtension,
    a: &ComplexMatrix,
    spec: &QuadratureSpec,
) -> Result<IntegralResult, IntegratorError> {
    spec.validate()?;
    check_hermitian(a)?;
    let c = ext.half_height();
    if spec.epsilon >= c {
        return Err(IntegratorError::EpsilonTooLarge {
            epsilon: spec.epsilon,
            limit: c,
        });
    }
    let (lo, hi) = ext.function().support();
    let cols = uniform_cols(lo, hi, spec.base_cells_x);
    let jets = cols
        .par_iter()
        .map(|col| ext.column_jet(col.mid))
        .collect::<Result<Vec<_>, FunctionError>>()?;
    let rows = strip_rows(spec, c);
    let acc = integrate(a.dim(), &rows, cols.len(), a, |j, row| {
        let d = ext.dbar_from_jet(&jets[j], row.mid);
        if d == Complex64::new(0.0, 0.0) {
            return Ok(None);
        }
        let col = &cols[j];
        Ok(Some((Complex64::new(col.mid, row.mid), d, col.width * row.width)))
    })?;
    Ok(finish(acc, a.dim(), rows.len() * cols.len(), spec.epsilon, ext.truncation()))
}

/// Scalar case: approximates `f(xi)` through the Cauchy kernel `1 / (z - xi)`.
pub fn scalar_hs_eval(
    ext: &AlmostAnalyticExtension,
    xi: f64,
    spec: &QuadratureSpec,
) -> Result<Complex64, IntegratorError> {
    let a = ComplexMatrix::from_real_diag(&[xi]);
    Ok(hs_apply_selfadjoint(ext, &a, spec)?.value[(0, 0)])
}

/// Polar annulus `[r_lo, r_hi] x [phi_lo, phi_hi]` covering the support of a
/// circle extension, widened slightly beyond the sampled extremes.
fn annulus(ce: &CircleExtension) -> (f64, f64, f64, f64) {
    let reg = ce.support_region();
    let pad = 0.01 * (reg.phi_max - reg.phi_min).max(1e-3);
    (
        reg.r_min * 0.99,
        reg.d_omega * 1.01,
        (reg.phi_min - pad).max(0.0),
        (reg.phi_max + pad).min(2.0 * PI),
    )
}

/// Radial rows `r_lo <= r <= 1 - epsilon` and `1 + epsilon <= r <= r_hi`,
/// graded toward the circle.
pub(crate) fn annulus_rows(spec: &QuadratureSpec, r_lo: f64, r_hi: f64) -> Vec<Band> {
    let (base, levels, eps) = (spec.base_cells_y, spec.refinement_levels, spec.epsilon);
    let mut rows = Vec::new();
    if r_lo < 1.0 - eps {
        let inner = graded_rows(0.0, 1.0 - eps - r_lo, base, levels);
        rows.extend(inner.iter().rev().map(|b| Band {
            mid: 1.0 - eps - b.mid,
            width: b.width,
        }));
    }
    if r_hi > 1.0 + eps {
        rows.extend(graded_rows(1.0 + eps, r_hi, base, levels));
    }
    rows
}

/// Helffer-Sjostrand quadrature for a unitary matrix over the polar annulus
/// bounding `Omega_0` with the band `||z| - 1| < epsilon` removed.
pub fn hs_apply_unitary(
    ce: &CircleExtension,
    u: &ComplexMatrix,
    spec: &QuadratureSpec,
) -> Result<IntegralResult, IntegratorError> {
    spec.validate()?;
    let defect = u.unitarity_defect();
    let utol = ToleranceConfig::default().unitarity_tol;
    if defect > utol {
        return Err(MatrixError::NotUnitary { defect, tol: utol }.into());
    }
    let (r_lo, r_hi, phi_lo, phi_hi) = annulus(ce);
    let limit = (r_hi - 1.0).max(1.0 - r_lo);
    if spec.epsilon >= limit {
        return Err(IntegratorError::EpsilonTooLarge {
            epsilon: spec.epsilon,
            limit,
        });
    }
    let cols = uniform_cols(phi_lo, phi_hi, spec.base_cells_x);
    let rows = annulus_rows(spec, r_lo, r_hi);
    let acc = integrate(u.dim(), &rows, cols.len(), u, |j, row| {
        let col = &cols[j];
        let xi = Complex64::from_polar(row.mid, col.mid);
        if !ce.in_support(xi) {
            return Ok(None);
        }
        let d = ce.eval_dbar(xi)?;
        if d == Complex64::new(0.0, 0.0) {
            return Ok(None);
        }
        Ok(Some((xi, d, row.mid * row.width * col.width)))
    })?;
    Ok(finish(acc, u.dim(), rows.len() * cols.len(), spec.epsilon, ce.base().truncation()))
}

/// `||result - oracle||_op / max(1, sup |f|)`.
pub fn oracle_error(
    result: &ComplexMatrix,
    oracle: &ComplexMatrix,
    sup_f: f64,
) -> Result<f64, IntegratorError> {
    Ok(operator_norm(&result.sub(oracle)?)? / sup_f.max(1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::almost_analytic::ExtensionConfig;
    use crate::cayley::CircleFunction;
    use crate::function_model::{SmoothCompactFunction, DEFAULT_MAX_ORDER};
    use crate::matrix_core::{spectral_apply, synth_hermitian, synth_unitary};

    fn bump_ext() -> AlmostAnalyticExtension {
        let f = SmoothCompactFunction::parse("bump(x)", (-1.0, 1.0), DEFAULT_MAX_ORDER).unwrap();
        AlmostAnalyticExtension::build(f, ExtensionConfig::default()).unwrap()
    }

    fn coarse() -> QuadratureSpec {
        QuadratureSpec {
            base_cells_x: 128,
            base_cells_y: 64,
            refinement_levels: 4,
            epsilon: 1e-3,
        }
    }

    #[test]
    fn graded_rows_tile_the_interval() {
        let rows = graded_rows(0.1, 1.1, 8, 3);
        assert_eq!(rows.len(), 8 + 3 * 4);
        let total: f64 = rows.iter().map(|b| b.width).sum();
        assert!((total - 1.0).abs() < 1e-14);
        assert!(rows.windows(2).all(|w| w[0].mid < w[1].mid));
        assert!((rows[0].mid - rows[0].width / 2.0 - 0.1).abs() < 1e-15);
        assert!(rows[0].width < rows.last().unwrap().width);
        let strip = strip_rows(&coarse(), 0.5);
        assert!(strip.iter().all(|b| b.mid.abs() > 1e-3));
        assert!(strip.windows(2).all(|w| w[0].mid < w[1].mid));
    }

    #[test]
    fn annulus_rows_avoid_band() {
        let spec = coarse();
        let rows = annulus_rows(&spec, 0.3, 2.0);
        assert!(rows.windows(2).all(|w| w[0].mid < w[1].mid));
        for b in &rows {
            assert!((b.mid - 1.0).abs() >= spec.epsilon + b.width / 2.0 - 1e-15);
        }
        let total: f64 = rows.iter().map(|b| b.width).sum();
        assert!((total - (1.7 - 2.0 * spec.epsilon)).abs() < 1e-12);
    }

    #[test]
    fn spec_validation() {
        assert!(QuadratureSpec::default().validate().is_ok());
        let bad = [
            QuadratureSpec { epsilon: 0.0, ..Default::default() },
            QuadratureSpec { base_cells_x: 4, ..Default::default() },
            QuadratureSpec { base_cells_y: 9, ..Default::default() },
            QuadratureSpec { refinement_levels: 13, ..Default::default() },
        ];
        for s in bad {
            assert!(s.validate().is_err(), "{:?}", s);
        }
        let ext = bump_ext();
        let s = QuadratureSpec { epsilon: 0.6, ..coarse() };
        assert!(matches!(
            scalar_hs_eval(&ext, 0.0, &s),
            Err(IntegratorError::EpsilonTooLarge { .. })
        ));
    }

    #[test]
    fn zero_function_integrates_to_zero() {
        let f = SmoothCompactFunction::parse("0*bump(x)", (-1.0, 1.0), DEFAULT_MAX_ORDER).unwrap();
        let ext = AlmostAnalyticExtension::build(f, ExtensionConfig::default()).unwrap();
        let v = scalar_hs_eval(&ext, 0.2, &coarse()).unwrap();
        assert_eq!(v, Complex64::new(0.0, 0.0));
    }

    #[test]
    fn scalar_bump_at_origin() {
        let ext = bump_ext();
        let v = scalar_hs_eval(&ext, 0.0, &QuadratureSpec::default()).unwrap();
        let f0 = (-1.0f64).exp();
        assert!((v - f0).norm() <= 1e-3, "{} vs {}", v, f0);
    }

    #[test]
    fn diagonal_matches_scalar() {
        let ext = bump_ext();
        let diag = [-0.6, 0.1, 0.45];
        let r = hs_apply_selfadjoint(&ext, &ComplexMatrix::from_real_diag(&diag), &coarse()).unwrap();
        for (i, &x) in diag.iter().enumerate() {
            let s = scalar_hs_eval(&ext, x, &coarse()).unwrap();
            assert!((r.value[(i, i)] - s).norm() <= 1e-12);
        }
        assert!(r.value[(0, 1)].norm() <= 1e-15);
        assert!(r.bound_integral.is_finite() && r.bound_integral > 0.0);
        assert!(r.n_active <= r.n_cells);
    }

    #[test]
    fn hermitian_against_oracle() {
        let ext = bump_ext();
        let (h, d) = synth_hermitian(&[-0.7, -0.2, 0.3, 0.8], 7);
        let r = hs_apply_selfadjoint(&ext, &h, &QuadratureSpec::default()).unwrap();
        let oracle = spectral_apply(&d, |z| ext.function().value(z.re).map(Complex64::from)).unwrap();
        assert!(oracle_error(&r.value, &oracle, 1.0).unwrap() <= 1e-3);
    }

    #[test]
    fn disjoint_support_gives_zero() {
        let f = SmoothCompactFunction::new(
            crate::function_model::Expr::shifted_bump(3.0, 0.5),
            (2.5, 3.5),
            DEFAULT_MAX_ORDER,
        )
        .unwrap();
        let ext = AlmostAnalyticExtension::build(f, ExtensionConfig::default()).unwrap();
        let (h, _) = synth_hermitian(&[-0.5, 0.0, 0.5], 1);
        let r = hs_apply_selfadjoint(&ext, &h, &coarse()).unwrap();
        assert!(operator_norm(&r.value).unwrap() <= 1e-6);
    }

    #[test]
    fn not_hermitian_rejected() {
        let m = ComplexMatrix::new(
            2,
            vec![
                Complex64::new(0.0, 0.0),
                Complex64::new(1.0, 0.0),
                Complex64::new(0.0, 0.0),
                Complex64::new(0.0, 0.0),
            ],
        )
        .unwrap();
        assert!(matches!(
            hs_apply_selfadjoint(&bump_ext(), &m, &coarse()),
            Err(IntegratorError::Matrix(MatrixError::NotHermitian { .. }))
        ));
    }

    fn circle_bump() -> CircleExtension {
        let h = SmoothCompactFunction::parse("bump(x)", (-1.0, 1.0), DEFAULT_MAX_ORDER).unwrap();
        CircleExtension::build(&CircleFunction::from_pullback(h), ExtensionConfig::default()).unwrap()
    }

    #[test]
    fn unitary_diagonal_and_oracle() {
        let ce = circle_bump();
        let thetas = [2.0, 2.9, PI, 3.8];
        let eig: Vec<Complex64> = thetas.iter().map(|&t| Complex64::from_polar(1.0, t)).collect();
        let u = ComplexMatrix::from_diag(&eig);
        let r = hs_apply_unitary(&ce, &u, &QuadratureSpec::default()).unwrap();
        let cf = CircleFunction::from_pullback(ce.base().function().clone());
        for (i, &t) in thetas.iter().enumerate() {
            let want = cf.value_at_angle(t).unwrap();
            assert!((r.value[(i, i)] - want).norm() <= 1e-3, "{} {} {}", t, r.value[(i, i)], want);
        }
        let (u, d) = synth_unitary(&thetas, 3);
        let r = hs_apply_unitary(&ce, &u, &QuadratureSpec::default()).unwrap();
        let oracle = spectral_apply(&d, |z| cf.value(z).map(Complex64::from)).unwrap();
        assert!(oracle_error(&r.value, &oracle, 1.0).unwrap() <= 1e-3);
    }

    #[test]
    fn unitary_far_from_support_is_zero() {
        let ce = circle_bump();
        let (u, _) = synth_unitary(&[0.2, 0.4, 5.9], 2);
        let r = hs_apply_unitary(&ce, &u, &QuadratureSpec::default()).unwrap();
        assert!(operator_norm(&r.value).unwrap() <= 1e-6);
        let not_unitary = ComplexMatrix::from_real_diag(&[2.0]);
        assert!(hs_apply_unitary(&ce, &not_unitary, &coarse()).is_err());
    }

    #[test]
    fn thread_count_does_not_change_bits() {
        let ext = bump_ext();
        let (h, _) = synth_hermitian(&[-0.4, 0.2, 0.5], 5);
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| hs_apply_selfadjoint(&ext, &h, &coarse()).unwrap())
        };
        let (a, b) = (run(1), run(4));
        assert_eq!(a, b);
        assert_eq!(a.bound_integral.to_bits(), b.bound_integral.to_bits());
    }
}
