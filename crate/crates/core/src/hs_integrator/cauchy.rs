use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::sum::Accumulator;
use super::{uniform_cols, IntegratorError};
use crate::function_model::FunctionError;
use crate::matrix_core::ComplexMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub x0: f64,
    pub x1: f64,
    pub y0: f64,
    pub y1: f64,
}

impl Rect {
    /// Corners in counterclockwise order from the lower left.
    fn corners(&self) -> [Complex64; 4] {
        [
            Complex64::new(self.x0, self.y0),
            Complex64::new(self.x1, self.y0),
            Complex64::new(self.x1, self.y1),
            Complex64::new(self.x0, self.y1),
        ]
    }

    fn boundary_distance(&self, z: Complex64) -> f64 {
        (z.re - self.x0)
            .min(self.x1 - z.re)
            .min(z.im - self.y0)
            .min(self.y1 - z.im)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CauchyPompeiu {
    /// `(2 i pi)^{-1} oint u / (z - xi) dz`.
    pub boundary: Complex64,
    /// `-(1/pi) int dbar u / (z - xi) dx dy`.
    pub area: Complex64,
    pub reconstructed: Complex64,
    pub reference: Complex64,
    pub abs_err: f64,
}

/// Reconstructs `u(xi)` from its boundary values and `dbar u` with composite
/// midpoint rules: `nodes_per_edge` per side, `area_cells` squared cells inside.
pub fn cauchy_pompeiu_check<U, D>(
    u: U,
    dbar_u: D,
    rect: Rect,
    xi: Complex64,
    nodes_per_edge: usize,
    area_cells: usize,
) -> Result<CauchyPompeiu, IntegratorError>
where
    U: Fn(Complex64) -> Result<Complex64, FunctionError> + Sync,
    D: Fn(Complex64) -> Result<Complex64, FunctionError> + Sync,
{
    if !(rect.x0 < rect.x1 && rect.y0 < rect.y1) || nodes_per_edge == 0 || area_cells == 0 {
        return Err(IntegratorError::BadSpec("empty rectangle or grid".into()));
    }
    let hx = (rect.x1 - rect.x0) / area_cells as f64;
    let hy = (rect.y1 - rect.y0) / area_cells as f64;
    let need = 2.0 * hx.max(hy);
    let dist = rect.boundary_distance(xi);
    if dist < need {
        return Err(IntegratorError::TooCloseToBoundary { dist, need });
    }

    let corners = rect.corners();
    let mut boundary = Accumulator::new(1);
    let one = ComplexMatrix::identity(1);
    for k in 0..4 {
        let (p, q) = (corners[k], corners[(k + 1) % 4]);
        let step = (q - p) / nodes_per_edge as f64;
        for j in 0..nodes_per_edge {
            let z = p + step * (j as f64 + 0.5);
            boundary.add(u(z)? / (z - xi) * step, &one);
        }
    }
    let boundary = boundary.finish().0[0] / Complex64::new(0.0, 2.0 * PI);

    let cols = uniform_cols(rect.x0, rect.x1, area_cells);
    let rows = uniform_cols(rect.y0, rect.y1, area_cells);
    let parts = rows
        .par_iter()
        .map(|row| {
            let mut acc = Accumulator::new(1);
            for col in &cols {
                let z = Complex64::new(col.mid, row.mid);
                let d = dbar_u(z)?;
                if d != Complex64::new(0.0, 0.0) {
                    acc.add(-d / (z - xi) * (hx * hy / PI), &one);
                }
            }
            Ok(acc)
        })
        .collect::<Result<Vec<_>, FunctionError>>()?;
    let area = Accumulator::tree_reduce(parts, 1).finish().0[0];

    let reference = u(xi)?;
    let reconstructed = boundary + area;
    Ok(CauchyPompeiu {
        boundary,
        area,
        reconstructed,
        reference,
        abs_err: (reconstructed - reference).norm(),
    })
}
