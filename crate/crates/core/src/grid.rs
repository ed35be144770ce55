//! Uniform quadrilateral meshes, coarse neighborhoods and their edge segments.
//!
//! Nodes and elements are numbered lexicographically with `x` running fastest.
//! Element corners are listed counterclockwise starting at the lower-left node.

use crate::error::{invalid, Result};

/// Axis-aligned rectangle `[x0, x1] × [y0, y1]`.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Rect {
    pub x0: f64,
    pub x1: f64,
    pub y0: f64,
    pub y1: f64,
}

impl Rect {
    pub fn new(x0: f64, x1: f64, y0: f64, y1: f64) -> Result<Self> {
        if !(x0.is_finite() && x1.is_finite() && y0.is_finite() && y1.is_finite()) {
            return invalid("rectangle bounds must be finite");
        }
        if x1 <= x0 || y1 <= y0 {
            return invalid(format!("degenerate rectangle [{x0}, {x1}] x [{y0}, {y1}]"));
        }
        Ok(Self { x0, x1, y0, y1 })
    }

    pub fn unit() -> Self {
        Self { x0: 0.0, x1: 1.0, y0: 0.0, y1: 1.0 }
    }

    pub fn width(&self) -> f64 {
        self.x1 - self.x0
    }

    pub fn height(&self) -> f64 {
        self.y1 - self.y0
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }
}

/// Uniform `nx × ny` quadrilateral mesh of a rectangle.
#[derive(Clone, Debug, PartialEq)]
pub struct StructuredGrid2D {
    bounds: Rect,
    nx: usize,
    ny: usize,
    hx: f64,
    hy: f64,
}

impl StructuredGrid2D {
    pub fn new(bounds: Rect, nx: usize, ny: usize) -> Result<Self> {
        if nx == 0 || ny == 0 {
            return invalid(format!("cell counts must be positive, got {nx} x {ny}"));
        }
        let bounds = Rect::new(bounds.x0, bounds.x1, bounds.y0, bounds.y1)?;
        Ok(Self {
            bounds,
            nx,
            ny,
            hx: bounds.width() / nx as f64,
            hy: bounds.height() / ny as f64,
        })
    }

    pub fn bounds(&self) -> Rect {
        self.bounds
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    pub fn hx(&self) -> f64 {
        self.hx
    }

    pub fn hy(&self) -> f64 {
        self.hy
    }

    pub fn num_nodes(&self) -> usize {
        (self.nx + 1) * (self.ny + 1)
    }

    pub fn num_elements(&self) -> usize {
        self.nx * self.ny
    }

    #[inline]
    pub fn node_index(&self, i: usize, j: usize) -> usize {
        debug_assert!(i <= self.nx && j <= self.ny);
        j * (self.nx + 1) + i
    }

    #[inline]
    pub fn node_ij(&self, node: usize) -> (usize, usize) {
        (node % (self.nx + 1), node / (self.nx + 1))
    }

    #[inline]
    pub fn x(&self, i: usize) -> f64 {
        self.bounds.x0 + i as f64 * self.hx
    }

    #[inline]
    pub fn y(&self, j: usize) -> f64 {
        self.bounds.y0 + j as f64 * self.hy
    }

    pub fn node_coords(&self, node: usize) -> (f64, f64) {
        let (i, j) = self.node_ij(node);
        (self.x(i), self.y(j))
    }

    #[inline]
    pub fn element_index(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    #[inline]
    pub fn element_ij(&self, e: usize) -> (usize, usize) {
        (e % self.nx, e / self.nx)
    }

    /// Corner node ids of element `e`: lower-left, lower-right, upper-right, upper-left.
    pub fn element_nodes(&self, e: usize) -> [usize; 4] {
        let (i, j) = self.element_ij(e);
        [
            self.node_index(i, j),
            self.node_index(i + 1, j),
            self.node_index(i + 1, j + 1),
            self.node_index(i, j + 1),
        ]
    }

    /// Lower-left corner of element `e`.
    pub fn element_origin(&self, e: usize) -> (f64, f64) {
        let (i, j) = self.element_ij(e);
        (self.x(i), self.y(j))
    }

    pub fn element_centroid(&self, e: usize) -> (f64, f64) {
        let (x, y) = self.element_origin(e);
        (x + 0.5 * self.hx, y + 0.5 * self.hy)
    }

    #[inline]
    pub fn is_boundary_ij(&self, i: usize, j: usize) -> bool {
        i == 0 || j == 0 || i == self.nx || j == self.ny
    }

    #[inline]
    pub fn is_boundary_node(&self, node: usize) -> bool {
        let (i, j) = self.node_ij(node);
        self.is_boundary_ij(i, j)
    }

    pub fn boundary_nodes(&self) -> Vec<usize> {
        (0..self.num_nodes()).filter(|&n| self.is_boundary_node(n)).collect()
    }

    pub fn interior_nodes(&self) -> Vec<usize> {
        (0..self.num_nodes()).filter(|&n| !self.is_boundary_node(n)).collect()
    }
}

/// Side of a rectangular neighborhood.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Side {
    Bottom,
    Right,
    Top,
    Left,
}

/// One straight piece `Γ_i^k` of `∂ω_i \ ∂D`.
///
/// `nodes` runs in the direction of increasing physical coordinate, so the
/// reference coordinate of `nodes[k]` is `k / (nodes.len() - 1)`.
#[derive(Clone, Debug)]
pub struct EdgeSegment {
    pub side: Side,
    pub nodes: Vec<usize>,
    /// Corner ownership: a segment owns its counterclockwise-first endpoint.
    pub owned: Vec<bool>,
    pub on_boundary: Vec<bool>,
    /// Physical length of one fine edge along the segment.
    pub edge_length: f64,
}

impl EdgeSegment {
    pub fn num_edges(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn reference_coord(&self, k: usize) -> f64 {
        k as f64 / self.num_edges() as f64
    }

    /// Fine nodes this segment contributes to the trace partition of `∂ω_i \ ∂D`.
    pub fn trace_nodes(&self) -> impl Iterator<Item = usize> + '_ {
        self.nodes
            .iter()
            .zip(self.owned.iter().zip(&self.on_boundary))
            .filter(|(_, (&own, &bnd))| own && !bnd)
            .map(|(&n, _)| n)
    }
}

/// Coarse neighborhood `ω_i`: the union of coarse elements sharing coarse node `i`.
#[derive(Clone, Debug)]
pub struct Neighborhood {
    pub node: usize,
    pub coarse_ij: (usize, usize),
    pub elements: Vec<usize>,
    /// Inclusive fine-node index ranges of the block covering `ω̄_i`.
    pub fine_i: (usize, usize),
    pub fine_j: (usize, usize),
    pub segments: Vec<EdgeSegment>,
}

impl Neighborhood {
    pub fn block_dims(&self) -> (usize, usize) {
        (self.fine_i.1 - self.fine_i.0 + 1, self.fine_j.1 - self.fine_j.0 + 1)
    }

    pub fn contains_ij(&self, i: usize, j: usize) -> bool {
        (self.fine_i.0..=self.fine_i.1).contains(&i) && (self.fine_j.0..=self.fine_j.1).contains(&j)
    }

    pub fn is_interior(&self) -> bool {
        self.segments.len() == 4 && self.segments.iter().all(|s| !s.on_boundary.iter().any(|&b| b))
    }

    /// Fine node ids of the block, row by row.
    pub fn fine_nodes(&self, fine: &StructuredGrid2D) -> Vec<usize> {
        let mut out = Vec::new();
        for j in self.fine_j.0..=self.fine_j.1 {
            for i in self.fine_i.0..=self.fine_i.1 {
                out.push(fine.node_index(i, j));
            }
        }
        out
    }

    /// All fine trace nodes of `∂ω_i \ ∂D` in segment order.
    pub fn trace_nodes(&self) -> Vec<usize> {
        self.segments.iter().flat_map(|s| s.trace_nodes()).collect()
    }
}

/// Coarse mesh, its dyadic fine refinement and the coarse neighborhoods.
#[derive(Clone, Debug)]
pub struct CoarseDecomposition {
    pub coarse: StructuredGrid2D,
    pub fine: StructuredGrid2D,
    pub ratio: usize,
    pub neighborhoods: Vec<Neighborhood>,
    pub overlap_constant: usize,
}

impl CoarseDecomposition {
    pub fn new(coarse: StructuredGrid2D, ratio: usize) -> Result<Self> {
        if ratio < 2 || !ratio.is_power_of_two() {
            return invalid(format!("refinement ratio must be a power of two >= 2, got {ratio}"));
        }
        let fine = StructuredGrid2D::new(coarse.bounds(), coarse.nx() * ratio, coarse.ny() * ratio)?;
        let neighborhoods = (0..coarse.num_nodes())
            .map(|n| build_neighborhood(&coarse, &fine, ratio, n))
            .collect::<Vec<_>>();

        let mut count = vec![0usize; coarse.num_elements()];
        for nb in &neighborhoods {
            for &e in &nb.elements {
                count[e] += 1;
            }
        }
        let overlap_constant = count.into_iter().max().unwrap_or(0);
        Ok(Self { coarse, fine, ratio, neighborhoods, overlap_constant })
    }

    /// Coarse element containing fine element `e`.
    pub fn coarse_element_of(&self, e: usize) -> usize {
        let (i, j) = self.fine.element_ij(e);
        self.coarse.element_index(i / self.ratio, j / self.ratio)
    }

    /// Fine elements inside coarse element `k`, row by row.
    pub fn fine_elements_of(&self, k: usize) -> Vec<usize> {
        let (ci, cj) = self.coarse.element_ij(k);
        let mut out = Vec::with_capacity(self.ratio * self.ratio);
        for j in cj * self.ratio..(cj + 1) * self.ratio {
            for i in ci * self.ratio..(ci + 1) * self.ratio {
                out.push(self.fine.element_index(i, j));
            }
        }
        out
    }

    /// Largest hierarchical level whose nodes coincide with fine nodes.
    pub fn max_level(&self) -> u32 {
        self.ratio.trailing_zeros()
    }
}

fn build_neighborhood(
    coarse: &StructuredGrid2D,
    fine: &StructuredGrid2D,
    ratio: usize,
    node: usize,
) -> Neighborhood {
    let (ci, cj) = coarse.node_ij(node);
    let mut elements = Vec::with_capacity(4);
    for (di, dj) in [(0usize, 0usize), (1, 0), (0, 1), (1, 1)] {
        // element with lower-left corner (ci - 1 + di, cj - 1 + dj)
        if ci + di >= 1 && cj + dj >= 1 && ci + di <= coarse.nx() && cj + dj <= coarse.ny() {
            elements.push(coarse.element_index(ci + di - 1, cj + dj - 1));
        }
    }
    elements.sort_unstable();

    let ci0 = ci.saturating_sub(1);
    let ci1 = (ci + 1).min(coarse.nx());
    let cj0 = cj.saturating_sub(1);
    let cj1 = (cj + 1).min(coarse.ny());
    let (i0, i1, j0, j1) = (ci0 * ratio, ci1 * ratio, cj0 * ratio, cj1 * ratio);

    let mut segments = Vec::with_capacity(4);
    let make = |side: Side, nodes: Vec<usize>, owns_first: bool, edge_length: f64| {
        let n = nodes.len();
        let owned = (0..n)
            .map(|k| if owns_first { k != n - 1 } else { k != 0 })
            .collect();
        let on_boundary = nodes.iter().map(|&v| fine.is_boundary_node(v)).collect();
        EdgeSegment { side, nodes, owned, on_boundary, edge_length }
    };
    // counterclockwise-first endpoints: bottom→lower-left, right→lower-right,
    // top→upper-right, left→upper-left
    if j0 != 0 {
        let nodes = (i0..=i1).map(|i| fine.node_index(i, j0)).collect();
        segments.push(make(Side::Bottom, nodes, true, fine.hx()));
    }
    if i1 != fine.nx() {
        let nodes = (j0..=j1).map(|j| fine.node_index(i1, j)).collect();
        segments.push(make(Side::Right, nodes, true, fine.hy()));
    }
    if j1 != fine.ny() {
        let nodes = (i0..=i1).map(|i| fine.node_index(i, j1)).collect();
        segments.push(make(Side::Top, nodes, false, fine.hx()));
    }
    if i0 != 0 {
        let nodes = (j0..=j1).map(|j| fine.node_index(i0, j)).collect();
        segments.push(make(Side::Left, nodes, false, fine.hy()));
    }

    Neighborhood {
        node,
        coarse_ij: (ci, cj),
        elements,
        fine_i: (i0, i1),
        fine_j: (j0, j1),
        segments,
    }
}
