//! Bilinear (Q1) finite element operators on uniform rectangular grids.
//!
//! Element node order follows [`StructuredGrid2D::element_nodes`]: lower-left,
//! lower-right, upper-right, upper-left. Mass and stiffness use 2×2 Gauss
//! quadrature, convection uses 3×3 Gauss. The diffusion coefficient is
//! constant on each fine element.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::exec::{map_range, Threading};
use crate::grid::StructuredGrid2D;
use crate::sparse::{conjugate_gradient, BandedLu, CsrMatrix};

type Local = [[f64; 4]; 4];

const GAUSS2: [(f64, f64); 2] = [
    (0.211_324_865_405_187_1, 0.5),
    (0.788_675_134_594_812_9, 0.5),
];

fn gauss3() -> [(f64, f64); 3] {
    let d = 0.5 * (0.6f64).sqrt();
    [(0.5 - d, 5.0 / 18.0), (0.5, 4.0 / 9.0), (0.5 + d, 5.0 / 18.0)]
}

/// Q1 shape values on the reference square `[0,1]²`.
#[inline]
fn shape(xi: f64, eta: f64) -> [f64; 4] {
    [(1.0 - xi) * (1.0 - eta), xi * (1.0 - eta), xi * eta, (1.0 - xi) * eta]
}

/// Reference derivatives `(∂ξ, ∂η)` of the Q1 shape functions.
#[inline]
fn shape_grad(xi: f64, eta: f64) -> [[f64; 2]; 4] {
    [
        [-(1.0 - eta), -(1.0 - xi)],
        [1.0 - eta, -xi],
        [eta, xi],
        [-eta, 1.0 - xi],
    ]
}

/// Element mass and unit-coefficient stiffness of a `hx × hy` rectangle.
#[derive(Clone, Copy, Debug)]
pub struct ElementMatrices {
    pub mass: Local,
    pub stiffness: Local,
}

impl ElementMatrices {
    pub fn new(hx: f64, hy: f64) -> Self {
        let mut mass = [[0.0; 4]; 4];
        let mut stiffness = [[0.0; 4]; 4];
        for &(xi, wx) in &GAUSS2 {
            for &(eta, wy) in &GAUSS2 {
                let w = wx * wy * hx * hy;
                let n = shape(xi, eta);
                let g = shape_grad(xi, eta);
                for a in 0..4 {
                    for b in 0..4 {
                        mass[a][b] += w * n[a] * n[b];
                        stiffness[a][b] +=
                            w * (g[a][0] * g[b][0] / (hx * hx) + g[a][1] * g[b][1] / (hy * hy));
                    }
                }
            }
        }
        Self { mass, stiffness }
    }
}

/// Piecewise-constant diffusion coefficient, one value per fine element.
#[derive(Clone, Debug, PartialEq)]
pub struct CoefficientField {
    nx: usize,
    ny: usize,
    values: Vec<f64>,
}

impl CoefficientField {
    pub fn constant(grid: &StructuredGrid2D, value: f64) -> Result<Self> {
        Self::from_values(grid, vec![value; grid.num_elements()])
    }

    /// Wraps per-element values; all must be finite and positive.
    pub fn from_values(grid: &StructuredGrid2D, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.num_elements() {
            return invalid(format!(
                "coefficient has {} values but the grid has {} elements",
                values.len(),
                grid.num_elements()
            ));
        }
        if let Some(k) = values.iter().position(|v| !(v.is_finite() && *v > 0.0)) {
            return invalid(format!("coefficient value {} at element {k} is not positive", values[k]));
        }
        let field = Self { nx: grid.nx(), ny: grid.ny(), values };
        if field.min() < 1.0 {
            log::warn!("coefficient minimum {} is below 1", field.min());
        }
        Ok(field)
    }

    /// Samples `f` at element centroids.
    pub fn from_fn(grid: &StructuredGrid2D, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        let values = (0..grid.num_elements())
            .map(|e| {
                let (x, y) = grid.element_centroid(e);
                f(x, y)
            })
            .collect();
        Self::from_values(grid, values)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn get(&self, e: usize) -> f64 {
        self.values[e]
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.nx, self.ny)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }

    pub fn contrast(&self) -> f64 {
        self.max() / self.min()
    }

    fn check(&self, grid: &StructuredGrid2D) -> Result<()> {
        if (self.nx, self.ny) != (grid.nx(), grid.ny()) {
            return invalid(format!(
                "coefficient is {}x{} but the grid is {}x{}",
                self.nx,
                self.ny,
                grid.nx(),
                grid.ny()
            ));
        }
        Ok(())
    }
}

/// Divergence-free velocity shapes `β₀(x)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "preset", rename_all = "snake_case")]
pub enum VelocityPreset {
    Zero,
    /// `(bx, by)`
    Constant { bx: f64, by: f64 },
    /// `(cos 2πy, cos 2πx)`
    ExpRot,
    /// `α (cos kπy · sin kπx, −cos kπx · sin kπy)`
    Cellular { alpha: f64, k: f64 },
    /// `(y − ½, ½ − x)`
    RigidRotation,
}

/// Scalar time factor `g(t)` of a separable velocity `β(x,t) = g(t)·β₀(x)`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Modulation {
    #[default]
    Constant,
    /// `g(t) = e^{−t}`
    ExpDecay,
}

impl Modulation {
    pub fn eval(self, t: f64) -> f64 {
        match self {
            Modulation::Constant => 1.0,
            Modulation::ExpDecay => (-t).exp(),
        }
    }

    pub fn is_constant(self) -> bool {
        self == Modulation::Constant
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VelocityField {
    #[serde(flatten)]
    pub preset: VelocityPreset,
    #[serde(default)]
    pub modulation: Modulation,
}

impl VelocityField {
    pub fn zero() -> Self {
        Self::steady(VelocityPreset::Zero)
    }

    pub fn steady(preset: VelocityPreset) -> Self {
        Self { preset, modulation: Modulation::Constant }
    }

    /// `β₀(x, y)`
    pub fn eval(&self, x: f64, y: f64) -> [f64; 2] {
        match self.preset {
            VelocityPreset::Zero => [0.0, 0.0],
            VelocityPreset::Constant { bx, by } => [bx, by],
            VelocityPreset::ExpRot => [(2.0 * PI * y).cos(), (2.0 * PI * x).cos()],
            VelocityPreset::Cellular { alpha, k } => [
                alpha * (k * PI * y).cos() * (k * PI * x).sin(),
                -alpha * (k * PI * x).cos() * (k * PI * y).sin(),
            ],
            VelocityPreset::RigidRotation => [y - 0.5, 0.5 - x],
        }
    }

    pub fn g(&self, t: f64) -> f64 {
        self.modulation.eval(t)
    }

    pub fn is_zero(&self) -> bool {
        self.preset == VelocityPreset::Zero
    }

    /// Sup norm of `β₀` sampled on the grid nodes.
    pub fn max_norm(&self, grid: &StructuredGrid2D) -> f64 {
        (0..grid.num_nodes())
            .map(|n| {
                let (x, y) = grid.node_coords(n);
                let b = self.eval(x, y);
                b[0].hypot(b[1])
            })
            .fold(0.0, f64::max)
    }
}

fn element_convection(grid: &StructuredGrid2D, e: usize, velocity: &VelocityField) -> Local {
    let (hx, hy) = (grid.hx(), grid.hy());
    let (x0, y0) = grid.element_origin(e);
    let mut c = [[0.0; 4]; 4];
    let q = gauss3();
    for &(xi, wx) in &q {
        for &(eta, wy) in &q {
            let w = wx * wy * hx * hy;
            let beta = velocity.eval(x0 + xi * hx, y0 + eta * hy);
            let n = shape(xi, eta);
            let g = shape_grad(xi, eta);
            for b in 0..4 {
                let adv = beta[0] * g[b][0] / hx + beta[1] * g[b][1] / hy;
                for a in 0..4 {
                    c[a][b] += w * n[a] * adv;
                }
            }
        }
    }
    c
}

/// Rectangular block of fine elements with its own lexicographic node numbering.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FineBlock {
    /// Lower-left element index.
    pub i0: usize,
    pub j0: usize,
    /// Element counts.
    pub ni: usize,
    pub nj: usize,
}

impl FineBlock {
    pub fn whole(grid: &StructuredGrid2D) -> Self {
        Self { i0: 0, j0: 0, ni: grid.nx(), nj: grid.ny() }
    }

    /// Block spanning the inclusive fine-node ranges.
    pub fn from_node_ranges(fine_i: (usize, usize), fine_j: (usize, usize)) -> Self {
        Self { i0: fine_i.0, j0: fine_j.0, ni: fine_i.1 - fine_i.0, nj: fine_j.1 - fine_j.0 }
    }

    pub fn num_nodes(&self) -> usize {
        (self.ni + 1) * (self.nj + 1)
    }

    #[inline]
    pub fn local_node(&self, li: usize, lj: usize) -> usize {
        lj * (self.ni + 1) + li
    }

    #[inline]
    pub fn local_ij(&self, l: usize) -> (usize, usize) {
        (l % (self.ni + 1), l / (self.ni + 1))
    }

    pub fn global_node(&self, grid: &StructuredGrid2D, l: usize) -> usize {
        let (li, lj) = self.local_ij(l);
        grid.node_index(self.i0 + li, self.j0 + lj)
    }

    pub fn is_block_boundary(&self, l: usize) -> bool {
        let (li, lj) = self.local_ij(l);
        li == 0 || lj == 0 || li == self.ni || lj == self.nj
    }
}

/// Weights of the terms combined into one assembled operator.
#[derive(Clone, Copy, Default)]
pub struct OperatorTerms<'a> {
    pub mass: f64,
    pub kappa: Option<&'a CoefficientField>,
    /// Velocity with its scalar factor.
    pub velocity: Option<(&'a VelocityField, f64)>,
}

/// Assembles `mass·M + K(κ) + g·C(β₀)` over a block in block-local numbering.
pub fn assemble_block(
    grid: &StructuredGrid2D,
    block: FineBlock,
    terms: OperatorTerms<'_>,
    threading: Threading,
) -> Result<CsrMatrix> {
    if block.i0 + block.ni > grid.nx() || block.j0 + block.nj > grid.ny() {
        return invalid("block exceeds the grid");
    }
    if let Some(k) = terms.kappa {
        k.check(grid)?;
    }
    let reference = ElementMatrices::new(grid.hx(), grid.hy());
    let velocity = terms.velocity.filter(|(v, g)| !v.is_zero() && *g != 0.0);
    let locals = map_range(threading, block.ni * block.nj, |k| {
        let (li, lj) = (k % block.ni, k / block.ni);
        let e = grid.element_index(block.i0 + li, block.j0 + lj);
        let mut m = [[0.0; 4]; 4];
        for a in 0..4 {
            for b in 0..4 {
                m[a][b] = terms.mass * reference.mass[a][b];
            }
        }
        if let Some(kappa) = terms.kappa {
            let kv = kappa.get(e);
            for a in 0..4 {
                for b in 0..4 {
                    m[a][b] += kv * reference.stiffness[a][b];
                }
            }
        }
        if let Some((v, g)) = velocity {
            let c = element_convection(grid, e, v);
            for a in 0..4 {
                for b in 0..4 {
                    m[a][b] += g * c[a][b];
                }
            }
        }
        m
    });
    let mut triplets = Vec::with_capacity(16 * locals.len());
    for (k, m) in locals.iter().enumerate() {
        let (li, lj) = (k % block.ni, k / block.ni);
        let nodes = [
            block.local_node(li, lj),
            block.local_node(li + 1, lj),
            block.local_node(li + 1, lj + 1),
            block.local_node(li, lj + 1),
        ];
        for a in 0..4 {
            for b in 0..4 {
                triplets.push((nodes[a], nodes[b], m[a][b]));
            }
        }
    }
    let n = block.num_nodes();
    Ok(CsrMatrix::from_triplets(n, n, &triplets))
}

pub fn assemble_mass(grid: &StructuredGrid2D) -> CsrMatrix {
    let terms = OperatorTerms { mass: 1.0, ..Default::default() };
    assemble_block(grid, FineBlock::whole(grid), terms, Threading::default())
        .expect("whole-grid block is valid")
}

pub fn assemble_stiffness(grid: &StructuredGrid2D, kappa: &CoefficientField) -> Result<CsrMatrix> {
    let terms = OperatorTerms { kappa: Some(kappa), ..Default::default() };
    assemble_block(grid, FineBlock::whole(grid), terms, Threading::default())
}

/// Unmodulated convection `C_pq = ∫ (β₀·∇φ_q) φ_p`.
pub fn assemble_convection(grid: &StructuredGrid2D, velocity: &VelocityField) -> CsrMatrix {
    let terms = OperatorTerms { velocity: Some((velocity, 1.0)), ..Default::default() };
    let c = assemble_block(grid, FineBlock::whole(grid), terms, Threading::default())
        .expect("whole-grid block is valid");
    if velocity.is_zero() {
        // keep the sparsity pattern of the other operators
        return CsrMatrix::from_triplets(c.nrows(), c.ncols(), &[]);
    }
    c
}

/// Map between all grid nodes and the free (non-Dirichlet) unknowns.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FreeDofs {
    to_free: Vec<Option<usize>>,
    to_node: Vec<usize>,
}

impl FreeDofs {
    pub fn new(num_nodes: usize, boundary: &[usize]) -> Self {
        let mut is_bnd = vec![false; num_nodes];
        for &b in boundary {
            is_bnd[b] = true;
        }
        let mut to_free = vec![None; num_nodes];
        let mut to_node = Vec::new();
        for n in 0..num_nodes {
            if !is_bnd[n] {
                to_free[n] = Some(to_node.len());
                to_node.push(n);
            }
        }
        Self { to_free, to_node }
    }

    /// Interior nodes of the grid are free.
    pub fn interior(grid: &StructuredGrid2D) -> Self {
        Self::new(grid.num_nodes(), &grid.boundary_nodes())
    }

    pub fn len(&self) -> usize {
        self.to_node.len()
    }

    pub fn is_empty(&self) -> bool {
        self.to_node.is_empty()
    }

    pub fn num_nodes(&self) -> usize {
        self.to_free.len()
    }

    #[inline]
    pub fn free_index(&self, node: usize) -> Option<usize> {
        self.to_free[node]
    }

    pub fn node(&self, k: usize) -> usize {
        self.to_node[k]
    }

    pub fn nodes(&self) -> &[usize] {
        &self.to_node
    }

    pub fn map(&self) -> &[Option<usize>] {
        &self.to_free
    }

    pub fn restrict(&self, full: &[f64]) -> Vec<f64> {
        self.to_node.iter().map(|&n| full[n]).collect()
    }

    /// Full-node vector with `boundary_value` on constrained nodes.
    pub fn extend(&self, free: &[f64], boundary_value: f64) -> Vec<f64> {
        let mut out = vec![boundary_value; self.to_free.len()];
        for (k, &n) in self.to_node.iter().enumerate() {
            out[n] = free[k];
        }
        out
    }

    /// `op[free, free]`
    pub fn reduce(&self, op: &CsrMatrix) -> CsrMatrix {
        op.select(&self.to_node, &self.to_free, self.len())
    }

    /// Rows of `op` at free nodes, all columns.
    pub fn reduce_rows(&self, op: &CsrMatrix) -> CsrMatrix {
        let all: Vec<_> = (0..op.ncols()).map(Some).collect();
        op.select(&self.to_node, &all, op.ncols())
    }
}

/// Strong Dirichlet elimination: returns `op[F,F]` and `rhs[F] − op[F,B]·g[B]`.
///
/// `boundary_values` is a full-node vector whose free entries are ignored.
pub fn apply_dirichlet(
    op: &CsrMatrix,
    rhs: &[f64],
    boundary_values: &[f64],
    free: &FreeDofs,
) -> (CsrMatrix, Vec<f64>) {
    let reduced = free.reduce(op);
    let mut b = free.restrict(rhs);
    for (k, &n) in free.nodes().iter().enumerate() {
        let (cols, vals) = op.row(n);
        for (&c, &v) in cols.iter().zip(vals) {
            if free.free_index(c).is_none() {
                b[k] -= v * boundary_values[c];
            }
        }
    }
    (reduced, b)
}

/// Consistent load vector `b_p = ∫ f φ_p` with 3×3 Gauss quadrature.
pub fn load_vector(grid: &StructuredGrid2D, f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
    let mut b = vec![0.0; grid.num_nodes()];
    let (hx, hy) = (grid.hx(), grid.hy());
    let q = gauss3();
    for e in 0..grid.num_elements() {
        let (x0, y0) = grid.element_origin(e);
        let nodes = grid.element_nodes(e);
        for &(xi, wx) in &q {
            for &(eta, wy) in &q {
                let fv = f(x0 + xi * hx, y0 + eta * hy) * wx * wy * hx * hy;
                let n = shape(xi, eta);
                for a in 0..4 {
                    b[nodes[a]] += fv * n[a];
                }
            }
        }
    }
    b
}

/// `∫ g(x, y, u_h(x, y))` for a nodal field `u`, 3×3 Gauss per element.
pub fn integrate_field(grid: &StructuredGrid2D, u: &[f64], g: impl Fn(f64, f64, f64) -> f64) -> f64 {
    assert_eq!(u.len(), grid.num_nodes());
    let (hx, hy) = (grid.hx(), grid.hy());
    let q = gauss3();
    let mut acc = 0.0;
    for e in 0..grid.num_elements() {
        let (x0, y0) = grid.element_origin(e);
        let nodes = grid.element_nodes(e);
        for &(xi, wx) in &q {
            for &(eta, wy) in &q {
                let n = shape(xi, eta);
                let uh: f64 = (0..4).map(|a| n[a] * u[nodes[a]]).sum();
                acc += g(x0 + xi * hx, y0 + eta * hy, uh) * wx * wy * hx * hy;
            }
        }
    }
    acc
}

/// Fine-grid L² projection onto all nodal hats: solves `M c = b`.
pub fn l2_project_fine(grid: &StructuredGrid2D, f: impl Fn(f64, f64) -> f64) -> Result<Vec<f64>> {
    let m = assemble_mass(grid);
    let b = load_vector(grid, f);
    let mut c = vec![0.0; b.len()];
    conjugate_gradient(&m, &b, &mut c, 1e-14, 10 * b.len() + 100)?;
    Ok(c)
}

/// Nodal interpolant on all grid nodes.
pub fn interpolate(grid: &StructuredGrid2D, f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
    (0..grid.num_nodes())
        .map(|n| {
            let (x, y) = grid.node_coords(n);
            f(x, y)
        })
        .collect()
}

/// Direct solver for Dirichlet problems on a fine block.
///
/// Block-boundary nodes are constrained, everything inside is solved for.
/// The factorization is computed once and reused for every boundary datum.
#[derive(Clone, Debug)]
pub struct PatchSolver {
    block: FineBlock,
    interior: FreeDofs,
    coupling: CsrMatrix,
    lu: Option<BandedLu>,
}

impl PatchSolver {
    pub fn new(grid: &StructuredGrid2D, block: FineBlock, terms: OperatorTerms<'_>) -> Result<Self> {
        let op = assemble_block(grid, block, terms, Threading::Sequential)?;
        let boundary: Vec<usize> =
            (0..block.num_nodes()).filter(|&l| block.is_block_boundary(l)).collect();
        let interior = FreeDofs::new(block.num_nodes(), &boundary);
        let coupling = interior.reduce_rows(&op);
        let lu = if interior.is_empty() { None } else { Some(BandedLu::factor(&interior.reduce(&op))?) };
        Ok(Self { block, interior, coupling, lu })
    }

    pub fn block(&self) -> FineBlock {
        self.block
    }

    /// Solution on all block nodes for the given block-boundary values
    /// (a block-local vector; interior entries are ignored).
    pub fn solve(&self, boundary_values: &[f64]) -> Vec<f64> {
        assert_eq!(boundary_values.len(), self.block.num_nodes());
        let mut g = boundary_values.to_vec();
        for &l in self.interior.nodes() {
            g[l] = 0.0;
        }
        let Some(lu) = &self.lu else {
            return g;
        };
        let mut rhs = self.coupling.mul_vec(&g);
        rhs.iter_mut().for_each(|v| *v = -*v);
        lu.solve_in_place(&mut rhs);
        for (k, &l) in self.interior.nodes().iter().enumerate() {
            g[l] = rhs[k];
        }
        g
    }
}

/// Fine operators for one species on the whole grid.
#[derive(Clone, Debug)]
pub struct FineOperators {
    pub grid: StructuredGrid2D,
    pub free: FreeDofs,
    /// Full-node operators.
    pub mass: CsrMatrix,
    pub stiffness: CsrMatrix,
    pub convection: CsrMatrix,
    /// Free-node restrictions.
    pub mass_ff: CsrMatrix,
    pub stiffness_ff: CsrMatrix,
    pub convection_ff: CsrMatrix,
    /// Free rows, all columns of the mass matrix.
    pub mass_fa: CsrMatrix,
}

impl FineOperators {
    pub fn assemble(
        grid: &StructuredGrid2D,
        kappa: &CoefficientField,
        velocity: &VelocityField,
    ) -> Result<Self> {
        let mass = assemble_mass(grid);
        let stiffness = assemble_stiffness(grid, kappa)?;
        let convection = assemble_convection(grid, velocity);
        let free = FreeDofs::interior(grid);
        if free.is_empty() {
            return Err(Error::InvalidArgument("grid has no interior nodes".into()));
        }
        Ok(Self {
            grid: grid.clone(),
            mass_ff: free.reduce(&mass),
            stiffness_ff: free.reduce(&stiffness),
            convection_ff: free.reduce(&convection),
            mass_fa: free.reduce_rows(&mass),
            free,
            mass,
            stiffness,
            convection,
        })
    }

    pub fn num_free(&self) -> usize {
        self.free.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Rect;

    fn unit(n: usize) -> StructuredGrid2D {
        StructuredGrid2D::new(Rect::unit(), n, n).unwrap()
    }

    #[test]
    fn reference_mass_entries() {
        let m = assemble_mass(&unit(1));
        assert!((m.get(0, 0) - 1.0 / 9.0).abs() < 1e-15);
        assert!((m.get(0, 1) - 1.0 / 18.0).abs() < 1e-15);
        // lexicographic: node 2 is above node 0, node 3 is the opposite corner
        assert!((m.get(0, 2) - 1.0 / 18.0).abs() < 1e-15);
        assert!((m.get(0, 3) - 1.0 / 36.0).abs() < 1e-15);
    }

    #[test]
    fn mass_sums_to_area() {
        let g = StructuredGrid2D::new(Rect::new(-1.0, 2.0, 0.0, 0.5).unwrap(), 5, 3).unwrap();
        let total: f64 = assemble_mass(&g).values().iter().sum();
        assert!((total - 1.5).abs() < 1e-13);
    }

    #[test]
    fn stiffness_center_entry_and_kernel() {
        let g = unit(2);
        let k = CoefficientField::constant(&g, 1.0).unwrap();
        let a = assemble_stiffness(&g, &k).unwrap();
        assert!((a.get(4, 4) - 8.0 / 3.0).abs() < 1e-14);
        assert!(a.mul_vec(&vec![1.0; 9]).iter().all(|v| v.abs() < 1e-14));
    }

    #[test]
    fn one_unknown_poisson() {
        let g = unit(2);
        let k = CoefficientField::constant(&g, 1.0).unwrap();
        let a = assemble_stiffness(&g, &k).unwrap();
        let b = load_vector(&g, |_, _| 1.0);
        let free = FreeDofs::interior(&g);
        let (ar, br) = apply_dirichlet(&a, &b, &vec![0.0; 9], &free);
        assert_eq!(ar.nrows(), 1);
        assert!((br[0] / ar.get(0, 0) - 3.0 / 32.0).abs() < 1e-15);
    }

    #[test]
    fn constant_velocity_is_skew_on_zero_trace() {
        let g = unit(8);
        let c = assemble_convection(&g, &VelocityField::steady(VelocityPreset::Constant { bx: 1.0, by: 0.0 }));
        let free = FreeDofs::interior(&g);
        let cf = free.reduce(&c);
        let skew = cf.lin_comb(1.0, &cf.transpose(), 1.0);
        assert!(skew.values().iter().all(|v| v.abs() < 1e-14));
    }

    #[test]
    fn patch_solver_reproduces_bilinear() {
        let g = unit(8);
        let k = CoefficientField::constant(&g, 1.0).unwrap();
        let block = FineBlock { i0: 2, j0: 1, ni: 4, nj: 5 };
        let solver =
            PatchSolver::new(&g, block, OperatorTerms { kappa: Some(&k), ..Default::default() }).unwrap();
        let f = |x: f64, y: f64| 1.0 + 2.0 * x - y + 3.0 * x * y;
        let exact: Vec<f64> = (0..block.num_nodes())
            .map(|l| {
                let (x, y) = g.node_coords(block.global_node(&g, l));
                f(x, y)
            })
            .collect();
        let u = solver.solve(&exact);
        for (a, b) in u.iter().zip(&exact) {
            assert!((a - b).abs() < 1e-13);
        }
    }
}
