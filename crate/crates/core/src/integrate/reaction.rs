//! Nodewise semilinear terms `R_s(x, u₁, …, u_S)`.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::exec::{map_range, Threading};
use crate::grid::StructuredGrid2D;

fn one() -> usize {
    1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum ReactionModel {
    /// `(u − u³)/ε²`
    AllenCahn { eps: f64 },
    /// `γ(a − u₁ + u₁²u₂)`, `γ(b − u₁²u₂)`
    Schnakenberg { gamma: f64, a: f64, b: f64 },
    /// `u₂(1 − u₁)`, `u₁(1 − u₂²)`
    SchnakenbergHetero,
    /// `Σ_k c_k u^k`, applied to each of `species` uncoupled species.
    CustomPolynomial {
        #[serde(default)]
        coeffs: Vec<f64>,
        #[serde(default = "one")]
        species: usize,
    },
}

impl ReactionModel {
    pub fn zero(species: usize) -> Self {
        ReactionModel::CustomPolynomial { coeffs: Vec::new(), species }
    }

    pub fn num_species(&self) -> usize {
        match self {
            ReactionModel::AllenCahn { .. } => 1,
            ReactionModel::Schnakenberg { .. } | ReactionModel::SchnakenbergHetero => 2,
            ReactionModel::CustomPolynomial { species, .. } => *species,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            ReactionModel::AllenCahn { eps } if !(*eps > 0.0 && eps.is_finite()) => {
                invalid(format!("Allen-Cahn needs eps > 0, got {eps}"))
            }
            ReactionModel::Schnakenberg { gamma, a, b }
                if ![gamma, a, b].iter().all(|v| v.is_finite()) || (a + b) == 0.0 =>
            {
                invalid("Schnakenberg parameters must be finite with a + b != 0")
            }
            ReactionModel::CustomPolynomial { coeffs, species } => {
                if !(1..=2).contains(species) {
                    return invalid(format!("custom polynomial supports 1 or 2 species, got {species}"));
                }
                if coeffs.iter().any(|c| !c.is_finite()) {
                    return invalid("non-finite polynomial coefficient");
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    /// `R_s(u)`
    #[inline]
    pub fn eval(&self, s: usize, u: &[f64]) -> f64 {
        match *self {
            ReactionModel::AllenCahn { eps } => (u[0] - u[0].powi(3)) / (eps * eps),
            ReactionModel::Schnakenberg { gamma, a, b } => {
                let q = u[0] * u[0] * u[1];
                if s == 0 {
                    gamma * (a - u[0] + q)
                } else {
                    gamma * (b - q)
                }
            }
            ReactionModel::SchnakenbergHetero => {
                if s == 0 {
                    u[1] * (1.0 - u[0])
                } else {
                    u[0] * (1.0 - u[1] * u[1])
                }
            }
            ReactionModel::CustomPolynomial { ref coeffs, .. } => {
                coeffs.iter().rev().fold(0.0, |acc, c| acc * u[s] + c)
            }
        }
    }

    /// `∂R_s/∂u_s`
    #[inline]
    pub fn diag_derivative(&self, s: usize, u: &[f64]) -> f64 {
        match *self {
            ReactionModel::AllenCahn { eps } => (1.0 - 3.0 * u[0] * u[0]) / (eps * eps),
            ReactionModel::Schnakenberg { gamma, .. } => {
                if s == 0 {
                    gamma * (2.0 * u[0] * u[1] - 1.0)
                } else {
                    -gamma * u[0] * u[0]
                }
            }
            ReactionModel::SchnakenbergHetero => {
                if s == 0 {
                    -u[1]
                } else {
                    -2.0 * u[0] * u[1]
                }
            }
            ReactionModel::CustomPolynomial { ref coeffs, .. } => coeffs
                .iter()
                .enumerate()
                .skip(1)
                .rev()
                .fold(0.0, |acc, (k, c)| acc * u[s] + k as f64 * c),
        }
    }

    /// Homogeneous steady state, where one is known in closed form.
    pub fn steady_state(&self) -> Option<Vec<f64>> {
        match *self {
            ReactionModel::Schnakenberg { a, b, .. } => Some(vec![a + b, b / ((a + b) * (a + b))]),
            ReactionModel::AllenCahn { .. } => Some(vec![1.0]),
            _ => None,
        }
    }
}

/// Space-time source added to `R_s`: `f(species, x, y, t)`.
pub type SourceFn = Arc<dyn Fn(usize, f64, f64, f64) -> f64 + Send + Sync>;

/// A reaction model plus an optional source term.
#[derive(Clone)]
pub struct Reaction {
    pub model: ReactionModel,
    pub source: Option<SourceFn>,
}

impl fmt::Debug for Reaction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Reaction")
            .field("model", &self.model)
            .field("source", &self.source.is_some())
            .finish()
    }
}

impl From<ReactionModel> for Reaction {
    fn from(model: ReactionModel) -> Self {
        Self { model, source: None }
    }
}

impl Reaction {
    pub fn with_source(model: ReactionModel, source: SourceFn) -> Self {
        Self { model, source: Some(source) }
    }

    pub fn num_species(&self) -> usize {
        self.model.num_species()
    }

    /// Evaluates every species at every fine node; `u[s]` are full-node vectors.
    pub fn eval_nodes(&self, grid: &StructuredGrid2D, t: f64, u: &[Vec<f64>], threading: Threading) -> Vec<Vec<f64>> {
        let ns = u.len();
        let n = grid.num_nodes();
        let per_node = map_range(threading, n, |k| {
            let mut local = [0.0; 2];
            for s in 0..ns {
                local[s] = u[s][k];
            }
            let (x, y) = grid.node_coords(k);
            let mut out = [0.0; 2];
            for s in 0..ns {
                out[s] = self.model.eval(s, &local[..ns]);
                if let Some(f) = &self.source {
                    out[s] += f(s, x, y, t);
                }
            }
            out
        });
        (0..ns).map(|s| per_node.iter().map(|r| r[s]).collect()).collect()
    }

    /// `∂R_s/∂u_s` at every node.
    pub fn diag_derivative_nodes(&self, u: &[Vec<f64>], threading: Threading) -> Vec<Vec<f64>> {
        let ns = u.len();
        let per_node = map_range(threading, u[0].len(), |k| {
            let mut local = [0.0; 2];
            for s in 0..ns {
                local[s] = u[s][k];
            }
            let mut out = [0.0; 2];
            for s in 0..ns {
                out[s] = self.model.diag_derivative(s, &local[..ns]);
            }
            out
        });
        (0..ns).map(|s| per_node.iter().map(|r| r[s]).collect()).collect()
    }
}
