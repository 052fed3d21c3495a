use std::time::Instant;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{hs_apply_selfadjoint, hs_apply_unitary, oracle_error, IntegratorError, QuadratureSpec};
use crate::almost_analytic::{least_squares, AlmostAnalyticExtension};
use crate::cayley::CircleExtension;
use crate::matrix_core::ComplexMatrix;

/// A quadrature problem with a known exact answer.
#[derive(Debug, Clone, Copy)]
pub enum Problem<'a> {
    /// `f(xi)` through the scalar Cauchy kernel.
    Scalar {
        ext: &'a AlmostAnalyticExtension,
        xi: f64,
    },
    SelfAdjoint {
        ext: &'a AlmostAnalyticExtension,
        a: &'a ComplexMatrix,
        oracle: &'a ComplexMatrix,
    },
    Unitary {
        ce: &'a CircleExtension,
        u: &'a ComplexMatrix,
        oracle: &'a ComplexMatrix,
    },
}

impl Problem<'_> {
    fn evaluate(&self, spec: &QuadratureSpec) -> Result<ComplexMatrix, IntegratorError> {
        Ok(match self {
            Problem::Scalar { ext, xi } => {
                hs_apply_selfadjoint(ext, &ComplexMatrix::from_real_diag(&[*xi]), spec)?.value
            }
            Problem::SelfAdjoint { ext, a, .. } => hs_apply_selfadjoint(ext, a, spec)?.value,
            Problem::Unitary { ce, u, .. } => hs_apply_unitary(ce, u, spec)?.value,
        })
    }

    fn error(&self, value: &ComplexMatrix) -> Result<f64, IntegratorError> {
        match self {
            Problem::Scalar { ext, xi } => {
                let exact = Complex64::from(ext.function().value(*xi)?);
                Ok((value[(0, 0)] - exact).norm())
            }
            Problem::SelfAdjoint { oracle, .. } | Problem::Unitary { oracle, .. } => {
                Ok(oracle_error(value, oracle, 0.0)?)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Sweep {
    Epsilon(Vec<f64>),
    /// Base cell counts, applied to both directions.
    Cells(Vec<usize>),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub param: f64,
    pub error: f64,
    pub runtime_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceTable {
    /// Sorted by `param`, ascending.
    pub rows: Vec<ConvergenceRow>,
    /// Log-log slope of error against `epsilon`, or against `1 / cells`.
    pub fitted_rate: f64,
    /// Change under one grid halving at the finest sweep point.
    pub grid_error: f64,
}

impl ConvergenceTable {
    pub fn strictly_decreasing_in_epsilon(&self) -> bool {
        // rows ascend in epsilon, so errors must ascend too
        self.rows.windows(2).all(|w| w[0].error < w[1].error)
    }
}

/// Runs `problem` at every sweep value on top of `base`.
pub fn convergence_study(
    problem: Problem<'_>,
    base: &QuadratureSpec,
    sweep: &Sweep,
) -> Result<ConvergenceTable, IntegratorError> {
    let specs: Vec<(f64, QuadratureSpec)> = match sweep {
        Sweep::Epsilon(eps) => eps
            .iter()
            .map(|&e| (e, QuadratureSpec { epsilon: e, ..*base }))
            .collect(),
        Sweep::Cells(cells) => cells
            .iter()
            .map(|&c| {
                (
                    c as f64,
                    QuadratureSpec {
                        base_cells_x: c,
                        base_cells_y: c,
                        ..*base
                    },
                )
            })
            .collect(),
    };
    let params: Vec<f64> = specs.iter().map(|s| s.0).collect();
    let lo = params.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = params.iter().cloned().fold(0.0, f64::max);
    if specs.len() < 4 || !(hi >= 10.0 * lo) {
        return Err(IntegratorError::SweepTooShort);
    }

    let mut rows = Vec::with_capacity(specs.len());
    let mut finest: Option<(f64, QuadratureSpec, ComplexMatrix)> = None;
    for (param, spec) in &specs {
        let start = Instant::now();
        let value = problem.evaluate(spec)?;
        let runtime_ms = start.elapsed().as_secs_f64() * 1e3;
        rows.push(ConvergenceRow {
            param: *param,
            error: problem.error(&value)?,
            runtime_ms,
        });
        let is_finest = match sweep {
            Sweep::Epsilon(_) => *param == lo,
            Sweep::Cells(_) => *param == hi,
        };
        if is_finest && finest.is_none() {
            finest = Some((*param, *spec, value));
        }
    }
    rows.sort_by(|a, b| a.param.total_cmp(&b.param));

    let pts: Vec<(f64, f64)> = rows
        .iter()
        .map(|r| (r.param.ln(), r.error.max(f64::MIN_POSITIVE).ln()))
        .collect();
    let (slope, _) = least_squares(&pts);
    let fitted_rate = match sweep {
        Sweep::Epsilon(_) => slope,
        Sweep::Cells(_) => -slope,
    };

    let (_, spec, value) = finest.expect("nonempty sweep");
    let refined = problem.evaluate(&spec.halved_grid())?;
    let grid_error = match problem {
        Problem::Scalar { .. } => (refined[(0, 0)] - value[(0, 0)]).norm(),
        _ => oracle_error(&refined, &value, 0.0)?,
    };
    Ok(ConvergenceTable {
        rows,
        fitted_rate,
        grid_error,
    })
}
