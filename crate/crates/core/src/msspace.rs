//! Global edge multiscale space `span{χ_i · L_i⁻¹ ψ_{i,ℓ}^j}` and its Galerkin operators.

use faer::linalg::solvers::Llt;
use faer::prelude::*;
use faer::{Mat, Side};

use crate::assembly::{CoefficientField, FineBlock, FineOperators, OperatorTerms, PatchSolver, VelocityField};
use crate::edgebasis::{EdgeDof, EdgeSpace};
use crate::error::{Error, Result};
use crate::exec::{try_map_range, Threading};
use crate::grid::{CoarseDecomposition, Neighborhood};
use crate::pou::{LocalField, PartitionOfUnity};
use crate::sparse::CsrMatrix;

/// Origin of one basis column.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Provenance {
    /// Coarse node `i`.
    pub node: usize,
    /// Index of the edge dof within `E_{i,ℓ}`.
    pub dof_index: usize,
    pub dof: EdgeDof,
}

/// Discrete harmonic extension of an edge function into `ω_i`.
///
/// `trace_values` is indexed like `edge.trace`; nodes on `∂D` are forced to zero.
/// Returns values on the block nodes of `ω_i`.
pub fn harmonic_extension(
    decomp: &CoarseDecomposition,
    i: usize,
    kappa: &CoefficientField,
    velocity: Option<(&VelocityField, f64)>,
    edge: &EdgeSpace,
    trace_values: &[f64],
) -> Result<LocalField> {
    let nb = &decomp.neighborhoods[i];
    let solver = local_solver(decomp, nb, kappa, velocity)?;
    Ok(extend_with(decomp, nb, &solver, edge, trace_values))
}

fn local_solver(
    decomp: &CoarseDecomposition,
    nb: &Neighborhood,
    kappa: &CoefficientField,
    velocity: Option<(&VelocityField, f64)>,
) -> Result<PatchSolver> {
    let block = FineBlock::from_node_ranges(nb.fine_i, nb.fine_j);
    PatchSolver::new(&decomp.fine, block, OperatorTerms { mass: 0.0, kappa: Some(kappa), velocity })
        .map_err(|e| Error::LocalSolve { node: nb.node, reason: e.to_string() })
}

fn extend_with(
    decomp: &CoarseDecomposition,
    nb: &Neighborhood,
    solver: &PatchSolver,
    edge: &EdgeSpace,
    trace_values: &[f64],
) -> LocalField {
    let block = solver.block();
    let mut data = vec![0.0; block.num_nodes()];
    for (&n, &v) in edge.trace.iter().zip(trace_values) {
        if decomp.fine.is_boundary_node(n) {
            continue;
        }
        let (gi, gj) = decomp.fine.node_ij(n);
        data[block.local_node(gi - block.i0, gj - block.j0)] = v;
    }
    let mut field = LocalField::on_neighborhood(nb);
    field.values = solver.solve(&data);
    field
}

/// Coarse Galerkin operators in dense form.
#[derive(Clone, Debug)]
pub struct CoarseOperators {
    pub mass: Mat<f64>,
    pub stiffness: Mat<f64>,
    /// Unmodulated convection `Bᵀ C₀ B`.
    pub convection: Mat<f64>,
}

/// Options of [`build_multiscale_space`].
#[derive(Clone, Copy, Debug)]
pub struct SpaceOptions {
    pub level: u32,
    /// Velocity scale `g(0)` used in the local problems.
    pub g0: f64,
    /// Relative pivot threshold of the pruning Cholesky.
    pub prune_tol: f64,
    pub threading: Threading,
}

impl SpaceOptions {
    pub fn new(level: u32) -> Self {
        Self { level, g0: 1.0, prune_tol: 1e-12, threading: Threading::default() }
    }
}

/// The edge multiscale space with its projected operators.
#[derive(Clone, Debug)]
pub struct MultiscaleSpace {
    pub level: u32,
    /// Basis operator `B` on fine free nodes (`n_free × m`).
    pub basis: CsrMatrix,
    basis_t: CsrMatrix,
    pub provenance: Vec<Provenance>,
    /// Columns removed by pruning.
    pub pruned: Vec<Provenance>,
    pub ops: CoarseOperators,
    mass_ff: CsrMatrix,
    mass_llt: Llt<f64>,
}

/// Computes all columns `χ_i · L_i⁻¹ψ_{i,ℓ}^j` (restricted to free nodes) in
/// neighborhood order.
pub fn basis_columns(
    decomp: &CoarseDecomposition,
    ops: &FineOperators,
    kappa: &CoefficientField,
    velocity: &VelocityField,
    pou: &PartitionOfUnity,
    opts: &SpaceOptions,
) -> Result<Vec<(Provenance, Vec<(usize, f64)>)>> {
    if opts.level > decomp.max_level() {
        return Err(Error::InvalidArgument(format!(
            "level {} exceeds log2(H/h) = {}",
            opts.level,
            decomp.max_level()
        )));
    }
    let vel = (!velocity.is_zero()).then_some((velocity, opts.g0));
    let per_node = try_map_range(opts.threading, decomp.neighborhoods.len(), |i| {
        let nb = &decomp.neighborhoods[i];
        let edge = EdgeSpace::build(decomp, i, opts.level)?;
        let solver = local_solver(decomp, nb, kappa, vel)?;
        let chi = &pou.chi[i];
        let mut cols = Vec::with_capacity(edge.dim());
        for (d, f) in edge.functions.iter().enumerate() {
            let ext = extend_with(decomp, nb, &solver, &edge, f);
            let mut entries = Vec::new();
            for lj in 0..ext.nj {
                for li in 0..ext.ni {
                    let (gi, gj) = (ext.i0 + li, ext.j0 + lj);
                    let node = decomp.fine.node_index(gi, gj);
                    if let Some(k) = ops.free.free_index(node) {
                        let v = chi.get(gi, gj) * ext.values[lj * ext.ni + li];
                        if v != 0.0 {
                            entries.push((k, v));
                        }
                    }
                }
            }
            entries.sort_unstable_by_key(|e| e.0);
            if !entries.iter().all(|e| e.1.is_finite()) {
                return Err(Error::LocalSolve { node: i, reason: "non-finite basis values".into() });
            }
            cols.push((Provenance { node: i, dof_index: d, dof: edge.dofs[d] }, entries));
        }
        Ok(cols)
    })?;
    Ok(per_node.into_iter().flatten().collect())
}

/// Greedy Cholesky that skips columns whose pivot is at most `tol`.
/// Returns the kept column indices.
pub fn greedy_independent_columns(gram: &Mat<f64>, tol: f64) -> Vec<usize> {
    let m = gram.nrows();
    let mut keep: Vec<usize> = Vec::new();
    // rows of the Cholesky factor restricted to kept columns
    let mut l_rows: Vec<Vec<f64>> = Vec::new();
    for k in 0..m {
        let mut w = Vec::with_capacity(keep.len() + 1);
        for (r, &c) in keep.iter().enumerate() {
            let row = &l_rows[r];
            let s: f64 = row[..r].iter().zip(&w).map(|(a, b)| a * b).sum();
            w.push((gram[(c, k)] - s) / row[r]);
        }
        let pivot = gram[(k, k)] - w.iter().map(|v| v * v).sum::<f64>();
        if pivot > tol {
            w.push(pivot.sqrt());
            l_rows.push(w);
            keep.push(k);
        }
    }
    keep
}

fn symmetrize(x: &mut Mat<f64>, name: &str) {
    let n = x.nrows();
    let mut defect = 0.0f64;
    let mut scale = 0.0f64;
    for i in 0..n {
        for j in 0..i {
            let (a, b) = (x[(i, j)], x[(j, i)]);
            defect = defect.max((a - b).abs());
            scale = scale.max(a.abs());
            let s = 0.5 * (a + b);
            x[(i, j)] = s;
            x[(j, i)] = s;
        }
    }
    if defect > 1e-12 * scale.max(1.0) {
        log::warn!("{name}: symmetry defect {defect:e} before symmetrization");
    } else {
        log::debug!("{name}: symmetry defect {defect:e}");
    }
}

fn select(x: &Mat<f64>, keep: &[usize]) -> Mat<f64> {
    Mat::from_fn(keep.len(), keep.len(), |a, b| x[(keep[a], keep[b])])
}

fn galerkin(bt: &CsrMatrix, op: &CsrMatrix, b: &CsrMatrix, threading: Threading) -> Mat<f64> {
    bt.matmul_dense(&op.matmul(b), threading)
}

/// Builds `V_ms,ℓ`, prunes near-dependent columns and projects the fine operators.
pub fn build_multiscale_space(
    decomp: &CoarseDecomposition,
    ops: &FineOperators,
    kappa: &CoefficientField,
    velocity: &VelocityField,
    pou: &PartitionOfUnity,
    opts: &SpaceOptions,
) -> Result<MultiscaleSpace> {
    let columns = basis_columns(decomp, ops, kappa, velocity, pou, opts)?;
    from_columns(ops, columns, opts)
}

/// Assembles a space from explicit columns (free-node sparse vectors).
pub fn from_columns(
    ops: &FineOperators,
    columns: Vec<(Provenance, Vec<(usize, f64)>)>,
    opts: &SpaceOptions,
) -> Result<MultiscaleSpace> {
    let n = ops.num_free();
    let m_raw = columns.len();
    let mut triplets = Vec::new();
    let mut provenance = Vec::with_capacity(m_raw);
    for (c, (p, entries)) in columns.into_iter().enumerate() {
        provenance.push(p);
        triplets.extend(entries.into_iter().map(|(r, v)| (r, c, v)));
    }
    let mut basis = CsrMatrix::from_triplets(n, m_raw, &triplets);
    let mut basis_t = basis.transpose();
    let mut mass = galerkin(&basis_t, &ops.mass_ff, &basis, opts.threading);
    symmetrize(&mut mass, "M_ms");

    let trace: f64 = (0..m_raw).map(|k| mass[(k, k)]).sum();
    let tol = opts.prune_tol * trace / m_raw.max(1) as f64;
    let full_rank = match mass.llt(Side::Lower) {
        Ok(llt) => {
            let l = llt.L();
            (0..m_raw).all(|k| l[(k, k)] * l[(k, k)] > tol)
        }
        Err(_) => false,
    };
    let mut pruned = Vec::new();
    if !full_rank {
        let keep = greedy_independent_columns(&mass, tol);
        let mut kept = vec![false; m_raw];
        keep.iter().for_each(|&k| kept[k] = true);
        pruned = (0..m_raw).filter(|&k| !kept[k]).map(|k| provenance[k]).collect();
        log::info!("pruned {} of {m_raw} multiscale columns", pruned.len());
        provenance = keep.iter().map(|&k| provenance[k]).collect();
        basis = basis.select_columns(&keep);
        basis_t = basis.transpose();
        mass = select(&mass, &keep);
    }
    let mut stiffness = galerkin(&basis_t, &ops.stiffness_ff, &basis, opts.threading);
    symmetrize(&mut stiffness, "A_ms");
    let convection = galerkin(&basis_t, &ops.convection_ff, &basis, opts.threading);
    let mass_llt = mass
        .llt(Side::Lower)
        .map_err(|_| Error::Config("coarse mass matrix is not positive definite after pruning".into()))?;
    Ok(MultiscaleSpace {
        level: opts.level,
        basis,
        basis_t,
        provenance,
        pruned,
        ops: CoarseOperators { mass, stiffness, convection },
        mass_ff: ops.mass_ff.clone(),
        mass_llt,
    })
}

impl MultiscaleSpace {
    /// Dimension `m`.
    pub fn dim(&self) -> usize {
        self.provenance.len()
    }

    pub fn num_free(&self) -> usize {
        self.basis.nrows()
    }

    pub fn mass_llt(&self) -> &Llt<f64> {
        &self.mass_llt
    }

    /// `B c` on fine free nodes.
    pub fn prolongate(&self, c: &[f64]) -> Vec<f64> {
        self.basis.mul_vec(c)
    }

    /// `Bᵀ b` for a fine load vector on free nodes.
    pub fn restrict_load(&self, b: &[f64]) -> Vec<f64> {
        self.basis_t.mul_vec(b)
    }

    /// `M_ms⁻¹ v`
    pub fn solve_mass(&self, v: &[f64]) -> Vec<f64> {
        let mut rhs = Mat::from_fn(v.len(), 1, |i, _| v[i]);
        self.mass_llt.solve_in_place(rhs.as_mut());
        (0..v.len()).map(|i| rhs[(i, 0)]).collect()
    }

    /// Coarse L² projection of a free-node function: `M_ms⁻¹ Bᵀ M u`.
    pub fn project(&self, u_free: &[f64]) -> Vec<f64> {
        self.solve_mass(&self.restrict_load(&self.mass_ff.mul_vec(u_free)))
    }

    /// Same as [`project`](Self::project); the initial-value projection `I_ℓ u₀`.
    pub fn project_initial(&self, u0_free: &[f64]) -> Vec<f64> {
        self.project(u0_free)
    }

    /// Dense column `k` of `B` on free nodes.
    pub fn column(&self, k: usize) -> Vec<f64> {
        let mut e = vec![0.0; self.dim()];
        e[k] = 1.0;
        self.prolongate(&e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{Rect, StructuredGrid2D};
    use crate::pou::assemble_pou;

    fn setup(n: usize, r: usize) -> (CoarseDecomposition, CoefficientField, FineOperators, PartitionOfUnity) {
        let d = CoarseDecomposition::new(StructuredGrid2D::new(Rect::unit(), n, n).unwrap(), r).unwrap();
        let k = CoefficientField::constant(&d.fine, 1.0).unwrap();
        let ops = FineOperators::assemble(&d.fine, &k, &VelocityField::zero()).unwrap();
        let pou = assemble_pou(&d, &k, Threading::Sequential).unwrap();
        (d, k, ops, pou)
    }

    #[test]
    fn pruning_drops_duplicate() {
        let (_, _, ops, _) = setup(2, 2);
        let v: Vec<(usize, f64)> = (0..ops.num_free()).map(|k| (k, 1.0 + k as f64)).collect();
        let w: Vec<(usize, f64)> = vec![(0, 1.0), (3, -1.0)];
        let p = Provenance { node: 0, dof_index: 0, dof: EdgeDof::Vertex { node: 0 } };
        let cols = vec![(p, v.clone()), (p, w), (p, v)];
        let space = from_columns(&ops, cols, &SpaceOptions::new(0)).unwrap();
        assert_eq!(space.dim(), 2);
        assert_eq!(space.pruned.len(), 1);
    }

    #[test]
    fn pou_functions_are_in_level_zero_span() {
        let (d, k, ops, pou) = setup(4, 4);
        let space =
            build_multiscale_space(&d, &ops, &k, &VelocityField::zero(), &pou, &SpaceOptions::new(0)).unwrap();
        for i in 0..d.coarse.num_nodes() {
            if !d.neighborhoods[i].is_interior() {
                continue;
            }
            let chi = ops.free.restrict(&pou.chi[i].to_full(&d.fine));
            let back = space.prolongate(&space.project(&chi));
            let err = back.iter().zip(&chi).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            assert!(err < 1e-10, "node {i}: {err}");
        }
    }

    #[test]
    fn round_trip_identity() {
        let (d, k, ops, pou) = setup(4, 4);
        let space =
            build_multiscale_space(&d, &ops, &k, &VelocityField::zero(), &pou, &SpaceOptions::new(1)).unwrap();
        let c: Vec<f64> = (0..space.dim()).map(|i| (i as f64 * 0.37).sin()).collect();
        let back = space.project(&space.prolongate(&c));
        assert!(c.iter().zip(&back).all(|(a, b)| (a - b).abs() < 1e-10));
    }
}
