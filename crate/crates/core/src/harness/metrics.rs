//! Error metrics and run diagnostics.

use crate::assembly::{assemble_stiffness, integrate_field, CoefficientField};
use crate::error::{invalid, Result};
use crate::grid::StructuredGrid2D;
use crate::sparse::CsrMatrix;

/// Relative errors `(ε₀, ε₁)` in the `M`- and `A`-norms, `e = u_ref − u_ms`.
pub fn compute_errors(u_ref: &[f64], u_ms: &[f64], mass: &CsrMatrix, a_diff: &CsrMatrix) -> Result<(f64, f64)> {
    if u_ref.len() != u_ms.len() || u_ref.len() != mass.nrows() || u_ref.len() != a_diff.nrows() {
        return invalid("error vectors and operators disagree in size");
    }
    let e: Vec<f64> = u_ref.iter().zip(u_ms).map(|(a, b)| a - b).collect();
    let (r0, r1) = (mass.bilinear(u_ref, u_ref), a_diff.bilinear(u_ref, u_ref));
    if !(r0 > 0.0) || !(r1 > 0.0) {
        return invalid("reference solution has zero norm");
    }
    let e0 = mass.bilinear(&e, &e).max(0.0);
    let e1 = a_diff.bilinear(&e, &e).max(0.0);
    Ok(((e0 / r0).sqrt(), (e1 / r1).sqrt()))
}

/// `|ln ε_k − ln ε_{k+1}| / ln 2` for consecutive entries; `None` where undefined.
pub fn convergence_rate(errors: &[f64]) -> Vec<Option<f64>> {
    errors
        .windows(2)
        .map(|w| {
            if w[0] > 0.0 && w[1] > 0.0 && w[0].is_finite() && w[1].is_finite() {
                Some((w[0].ln() - w[1].ln()).abs() / std::f64::consts::LN_2)
            } else {
                None
            }
        })
        .collect()
}

/// Allen-Cahn energy `∫ ½|∇u|² + (u² − 1)²/(4ε²)`, with the unweighted gradient.
#[derive(Clone, Debug)]
pub struct AllenCahnEnergy {
    grid: StructuredGrid2D,
    laplace: CsrMatrix,
    eps: f64,
}

impl AllenCahnEnergy {
    pub fn new(grid: &StructuredGrid2D, eps: f64) -> Result<Self> {
        if !(eps > 0.0) {
            return invalid("energy needs eps > 0");
        }
        let unit = CoefficientField::constant(grid, 1.0)?;
        Ok(Self { grid: grid.clone(), laplace: assemble_stiffness(grid, &unit)?, eps })
    }

    /// Energy of a full fine-node field.
    pub fn eval(&self, u: &[f64]) -> f64 {
        let c = 1.0 / (4.0 * self.eps * self.eps);
        0.5 * self.laplace.bilinear(u, u) + integrate_field(&self.grid, u, |_, _, v| c * (v * v - 1.0).powi(2))
    }
}

/// Energy of each field in a trajectory.
pub fn energy_trace(fields: &[Vec<f64>], energy: &AllenCahnEnergy) -> Vec<f64> {
    fields.iter().map(|u| energy.eval(u)).collect()
}

/// `max |u|` of each field.
pub fn max_norm_trace(fields: &[Vec<f64>]) -> Vec<f64> {
    fields.iter().map(|u| u.iter().fold(0.0f64, |m, v| m.max(v.abs()))).collect()
}
