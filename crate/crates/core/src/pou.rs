//! Multiscale partition of unity: κ-harmonic extensions of affine corner data
//! on each coarse element, stitched into one function per coarse node.

use crate::assembly::{CoefficientField, FineBlock, OperatorTerms, PatchSolver};
use crate::error::{Error, Result};
use crate::exec::{try_map_range, Threading};
use crate::grid::{CoarseDecomposition, Neighborhood, StructuredGrid2D};

/// Values on a rectangular block of fine nodes, zero outside.
#[derive(Clone, Debug, PartialEq)]
pub struct LocalField {
    pub i0: usize,
    pub j0: usize,
    /// Node counts of the block.
    pub ni: usize,
    pub nj: usize,
    pub values: Vec<f64>,
}

impl LocalField {
    pub fn zeros(fine_i: (usize, usize), fine_j: (usize, usize)) -> Self {
        let ni = fine_i.1 - fine_i.0 + 1;
        let nj = fine_j.1 - fine_j.0 + 1;
        Self { i0: fine_i.0, j0: fine_j.0, ni, nj, values: vec![0.0; ni * nj] }
    }

    pub fn on_neighborhood(nb: &Neighborhood) -> Self {
        Self::zeros(nb.fine_i, nb.fine_j)
    }

    #[inline]
    pub fn contains(&self, i: usize, j: usize) -> bool {
        i >= self.i0 && j >= self.j0 && i < self.i0 + self.ni && j < self.j0 + self.nj
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        if self.contains(i, j) {
            self.values[(j - self.j0) * self.ni + (i - self.i0)]
        } else {
            0.0
        }
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        debug_assert!(self.contains(i, j));
        self.values[(j - self.j0) * self.ni + (i - self.i0)] = v;
    }

    /// Value at a global fine node.
    pub fn at_node(&self, fine: &StructuredGrid2D, node: usize) -> f64 {
        let (i, j) = fine.node_ij(node);
        self.get(i, j)
    }

    /// Scatter into a full fine-node vector.
    pub fn to_full(&self, fine: &StructuredGrid2D) -> Vec<f64> {
        let mut out = vec![0.0; fine.num_nodes()];
        for lj in 0..self.nj {
            for li in 0..self.ni {
                out[fine.node_index(self.i0 + li, self.j0 + lj)] = self.values[lj * self.ni + li];
            }
        }
        out
    }
}

/// Element-local solutions for the four corners of one coarse element,
/// in corner order lower-left, lower-right, upper-right, upper-left.
pub fn solve_pou_element(
    decomp: &CoarseDecomposition,
    k: usize,
    kappa: &CoefficientField,
) -> Result<[LocalField; 4]> {
    let r = decomp.ratio;
    let (ci, cj) = decomp.coarse.element_ij(k);
    let block = FineBlock { i0: ci * r, j0: cj * r, ni: r, nj: r };
    let solver = PatchSolver::new(&decomp.fine, block, OperatorTerms { kappa: Some(kappa), ..Default::default() })
        .map_err(|e| Error::LocalSolve { node: k, reason: e.to_string() })?;
    let range_i = (block.i0, block.i0 + r);
    let range_j = (block.j0, block.j0 + r);
    let corner_fn = |c: usize, xi: f64, eta: f64| match c {
        0 => (1.0 - xi) * (1.0 - eta),
        1 => xi * (1.0 - eta),
        2 => xi * eta,
        _ => (1.0 - xi) * eta,
    };
    let solve_corner = |c: usize| {
        let data: Vec<f64> = (0..block.num_nodes())
            .map(|l| {
                let (li, lj) = block.local_ij(l);
                corner_fn(c, li as f64 / r as f64, lj as f64 / r as f64)
            })
            .collect();
        let mut field = LocalField::zeros(range_i, range_j);
        field.values = solver.solve(&data);
        field
    };
    Ok([solve_corner(0), solve_corner(1), solve_corner(2), solve_corner(3)])
}

/// One multiscale partition-of-unity function per coarse node.
#[derive(Clone, Debug)]
pub struct PartitionOfUnity {
    pub chi: Vec<LocalField>,
}

impl PartitionOfUnity {
    pub fn len(&self) -> usize {
        self.chi.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chi.is_empty()
    }

    /// `Σ_i χ_i` at every fine node.
    pub fn sum(&self, fine: &StructuredGrid2D) -> Vec<f64> {
        let mut out = vec![0.0; fine.num_nodes()];
        for f in &self.chi {
            for lj in 0..f.nj {
                for li in 0..f.ni {
                    out[fine.node_index(f.i0 + li, f.j0 + lj)] += f.values[lj * f.ni + li];
                }
            }
        }
        out
    }
}

pub fn assemble_pou(
    decomp: &CoarseDecomposition,
    kappa: &CoefficientField,
    threading: Threading,
) -> Result<PartitionOfUnity> {
    let per_element = try_map_range(threading, decomp.coarse.num_elements(), |k| {
        solve_pou_element(decomp, k, kappa)
    })?;
    let coarse = &decomp.coarse;
    let mut chi: Vec<LocalField> = decomp.neighborhoods.iter().map(LocalField::on_neighborhood).collect();
    for (k, locals) in per_element.iter().enumerate() {
        let corners = coarse.element_nodes(k);
        for (c, &node) in corners.iter().enumerate() {
            let src = &locals[c];
            let dst = &mut chi[node];
            for lj in 0..src.nj {
                for li in 0..src.ni {
                    dst.set(src.i0 + li, src.j0 + lj, src.values[lj * src.ni + li]);
                }
            }
        }
    }
    Ok(PartitionOfUnity { chi })
}
