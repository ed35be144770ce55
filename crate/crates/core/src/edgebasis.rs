//! Hierarchical hat bases on `[0,1]` and the edge spaces on `∂ω_i \ ∂D`.

use std::collections::BTreeMap;

use faer::prelude::*;
use faer::{Mat, Side};

use crate::error::{invalid, Error, Result};
use crate::grid::{CoarseDecomposition, Neighborhood};

/// Whether `j` belongs to the index set `B_m`.
pub fn in_index_set(m: u32, j: u32) -> bool {
    if m == 0 {
        j <= 1
    } else {
        j % 2 == 1 && j < (1u32 << m)
    }
}

/// Hat `ψ_{m,j}(x) = max(0, 1 − |x·2^m − j|)` on `[0,1]`.
pub fn basis_1d_eval(m: u32, j: u32, x: f64) -> Result<f64> {
    if !in_index_set(m, j) {
        return invalid(format!("index {j} is not in B_{m}"));
    }
    if !(0.0..=1.0).contains(&x) {
        return invalid(format!("evaluation point {x} outside [0, 1]"));
    }
    Ok(hat(m, j, x))
}

#[inline]
fn hat(m: u32, j: u32, x: f64) -> f64 {
    (1.0 - (x * f64::from(1u32 << m) - f64::from(j)).abs()).max(0.0)
}

/// The level-ℓ hierarchical basis `{ψ_{m,j} : m ≤ ℓ, j ∈ B_m}`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct HierarchicalBasis1D {
    pub level: u32,
}

impl HierarchicalBasis1D {
    pub fn new(level: u32) -> Self {
        Self { level }
    }

    /// `2^ℓ + 1`
    pub fn dim(&self) -> usize {
        self.indices().len()
    }

    /// All `(m, j)` pairs in level order.
    pub fn indices(&self) -> Vec<(u32, u32)> {
        let mut out = vec![(0, 0), (0, 1)];
        for m in 1..=self.level {
            out.extend((1..(1u32 << m)).step_by(2).map(|j| (m, j)));
        }
        out
    }

    pub fn eval(&self, k: usize, x: f64) -> f64 {
        let (m, j) = self.indices()[k];
        hat(m, j, x)
    }
}

#[derive(Clone, Debug)]
struct SegmentTrace {
    /// Positions in `EdgeSpace::trace` of the segment nodes, in order.
    slots: Vec<usize>,
    edge_length: f64,
}

/// Where an edge-space function lives.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EdgeDof {
    /// Level-0 hat at a segment endpoint, merged across a shared corner.
    Vertex { node: usize },
    /// Interior hierarchical hat `ψ_{m,j}` on segment `segment`.
    Interior { segment: usize, m: u32, j: u32 },
}

/// `E_{i,ℓ}`: continuous piecewise-linear hierarchical functions on the
/// segments of `∂ω_i \ ∂D`, sampled on the fine trace nodes.
#[derive(Clone, Debug)]
pub struct EdgeSpace {
    pub node: usize,
    pub level: u32,
    /// Global fine nodes of the closed segments, each once.
    pub trace: Vec<usize>,
    pub dofs: Vec<EdgeDof>,
    /// `functions[d][t]` is dof `d` at trace node `t`.
    pub functions: Vec<Vec<f64>>,
    segments: Vec<SegmentTrace>,
    gram: Mat<f64>,
}

impl EdgeSpace {
    pub fn build(decomp: &CoarseDecomposition, i: usize, level: u32) -> Result<Self> {
        if level > decomp.max_level() {
            return invalid(format!(
                "level {level} exceeds log2(H/h) = {} for refinement ratio {}",
                decomp.max_level(),
                decomp.ratio
            ));
        }
        let nb = decomp
            .neighborhoods
            .get(i)
            .ok_or_else(|| Error::InvalidArgument(format!("no coarse node {i}")))?;
        Ok(Self::from_neighborhood(nb, level))
    }

    fn from_neighborhood(nb: &Neighborhood, level: u32) -> Self {
        let mut trace = Vec::new();
        let mut slot_of = BTreeMap::new();
        let mut segments = Vec::with_capacity(nb.segments.len());
        for seg in &nb.segments {
            let slots = seg
                .nodes
                .iter()
                .map(|&n| {
                    *slot_of.entry(n).or_insert_with(|| {
                        trace.push(n);
                        trace.len() - 1
                    })
                })
                .collect();
            segments.push(SegmentTrace { slots, edge_length: seg.edge_length });
        }

        let mut dofs = Vec::new();
        let mut functions: Vec<Vec<f64>> = Vec::new();
        let mut vertex_dof = BTreeMap::new();
        for (s, seg) in nb.segments.iter().enumerate() {
            for (end, j) in [(0usize, 0u32), (seg.nodes.len() - 1, 1)] {
                let node = seg.nodes[end];
                let d = *vertex_dof.entry(node).or_insert_with(|| {
                    dofs.push(EdgeDof::Vertex { node });
                    functions.push(vec![0.0; trace.len()]);
                    dofs.len() - 1
                });
                // assignment, not accumulation: the shared corner gets 1 from both sides
                for (k, &slot) in segments[s].slots.iter().enumerate() {
                    let v = hat(0, j, seg.reference_coord(k));
                    if v != 0.0 {
                        functions[d][slot] = v;
                    }
                }
            }
        }
        for m in 1..=level {
            for (s, seg) in nb.segments.iter().enumerate() {
                for j in (1..(1u32 << m)).step_by(2) {
                    let mut f = vec![0.0; trace.len()];
                    for (k, &slot) in segments[s].slots.iter().enumerate() {
                        f[slot] = hat(m, j, seg.reference_coord(k));
                    }
                    dofs.push(EdgeDof::Interior { segment: s, m, j });
                    functions.push(f);
                }
            }
        }
        // members vanish on ∂ω_i ∩ ∂D
        for seg in &nb.segments {
            for (&n, &bnd) in seg.nodes.iter().zip(&seg.on_boundary) {
                if bnd {
                    let slot = slot_of[&n];
                    functions.iter_mut().for_each(|f| f[slot] = 0.0);
                }
            }
        }

        let mut space = Self { node: nb.node, level, trace, dofs, functions, segments, gram: Mat::zeros(0, 0) };
        let dim = space.dim();
        space.gram = Mat::from_fn(dim, dim, |a, b| space.inner(&space.functions[a], &space.functions[b]));
        space
    }

    pub fn dim(&self) -> usize {
        self.dofs.len()
    }

    /// Exact `L²(∂ω_i)` inner product of two piecewise-linear traces.
    pub fn inner(&self, u: &[f64], v: &[f64]) -> f64 {
        let mut acc = 0.0;
        for seg in &self.segments {
            let w = seg.edge_length / 6.0;
            for e in seg.slots.windows(2) {
                let (p, q) = (e[0], e[1]);
                acc += w * (2.0 * u[p] * v[p] + u[p] * v[q] + u[q] * v[p] + 2.0 * u[q] * v[q]);
            }
        }
        acc
    }

    pub fn norm(&self, u: &[f64]) -> f64 {
        self.inner(u, u).max(0.0).sqrt()
    }

    pub fn gram(&self) -> &Mat<f64> {
        &self.gram
    }

    /// Coefficients of the L² projection of a trace (indexed like `self.trace`).
    pub fn project(&self, trace_values: &[f64]) -> Result<Vec<f64>> {
        assert_eq!(trace_values.len(), self.trace.len());
        let dim = self.dim();
        let rhs = Mat::from_fn(dim, 1, |a, _| self.inner(&self.functions[a], trace_values));
        let llt = self
            .gram
            .llt(Side::Lower)
            .map_err(|_| Error::Singular(format!("edge Gram matrix of node {} is not SPD", self.node)))?;
        let c = llt.solve(&rhs);
        Ok((0..dim).map(|a| c[(a, 0)]).collect())
    }

    /// Trace of `Σ_d c_d ψ_d`.
    pub fn eval(&self, coeffs: &[f64]) -> Vec<f64> {
        assert_eq!(coeffs.len(), self.dim());
        let mut out = vec![0.0; self.trace.len()];
        for (c, f) in coeffs.iter().zip(&self.functions) {
            for (o, v) in out.iter_mut().zip(f) {
                *o += c * v;
            }
        }
        out
    }

    /// Samples `f(segment, s)` at every trace node, `s ∈ [0,1]` the segment
    /// reference coordinate. Shared corners take the value of the first segment.
    pub fn sample(&self, f: impl Fn(usize, f64) -> f64) -> Vec<f64> {
        let mut out = vec![f64::NAN; self.trace.len()];
        for (s, seg) in self.segments.iter().enumerate() {
            let n = seg.slots.len() - 1;
            for (k, &slot) in seg.slots.iter().enumerate() {
                if out[slot].is_nan() {
                    out[slot] = f(s, k as f64 / n as f64);
                }
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{Rect, StructuredGrid2D};

    fn decomp(n: usize, r: usize) -> CoarseDecomposition {
        CoarseDecomposition::new(StructuredGrid2D::new(Rect::unit(), n, n).unwrap(), r).unwrap()
    }

    #[test]
    fn hat_values() {
        assert_eq!(basis_1d_eval(0, 0, 0.0).unwrap(), 1.0);
        assert_eq!(basis_1d_eval(0, 0, 1.0).unwrap(), 0.0);
        assert_eq!(basis_1d_eval(0, 0, 0.5).unwrap(), 0.5);
        assert_eq!(basis_1d_eval(1, 1, 0.5).unwrap(), 1.0);
        assert_eq!(basis_1d_eval(1, 1, 0.0).unwrap(), 0.0);
        assert_eq!(basis_1d_eval(2, 1, 0.125).unwrap(), 0.5);
        assert!(basis_1d_eval(2, 2, 0.5).is_err());
    }

    #[test]
    fn one_d_dimension() {
        for l in 0..6 {
            assert_eq!(HierarchicalBasis1D::new(l).dim(), (1 << l) + 1);
        }
    }

    #[test]
    fn dimension_law() {
        let d = decomp(4, 8);
        let interior = d.coarse.node_index(2, 2);
        for l in 0..=3 {
            assert_eq!(EdgeSpace::build(&d, interior, l).unwrap().dim(), 1 << (l + 2));
        }
        // side node: 3 segments, 2 shared corners; corner node: 2 segments, 1 corner
        let side = d.coarse.node_index(2, 0);
        let corner = d.coarse.node_index(0, 0);
        assert_eq!(EdgeSpace::build(&d, side, 2).unwrap().dim(), 3 * 5 - 2);
        assert_eq!(EdgeSpace::build(&d, corner, 2).unwrap().dim(), 2 * 5 - 1);
        assert!(EdgeSpace::build(&d, interior, 4).is_err());
    }

    #[test]
    fn constants_are_reproduced() {
        let d = decomp(4, 8);
        let space = EdgeSpace::build(&d, d.coarse.node_index(2, 2), 1).unwrap();
        let ones = vec![1.0; space.trace.len()];
        let mut sum = vec![0.0; ones.len()];
        for (f, dof) in space.functions.iter().zip(&space.dofs) {
            if matches!(dof, EdgeDof::Interior { .. }) {
                continue;
            }
            sum.iter_mut().zip(f).for_each(|(s, v)| *s += v);
        }
        assert!(sum.iter().all(|v| (v - 1.0).abs() < 1e-15));
        let back = space.eval(&space.project(&ones).unwrap());
        assert!(back.iter().all(|v| (v - 1.0).abs() < 1e-12));
    }

    #[test]
    fn boundary_trace_nodes_vanish() {
        let d = decomp(4, 4);
        let space = EdgeSpace::build(&d, d.coarse.node_index(0, 2), 2).unwrap();
        for (t, &n) in space.trace.iter().enumerate() {
            if d.fine.is_boundary_node(n) {
                assert!(space.functions.iter().all(|f| f[t] == 0.0));
            }
        }
    }
}
