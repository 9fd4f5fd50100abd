//! Uniform rectangular grids, node classification by interface side, and
//! discovery of the finite-difference stencils that straddle an interface.

use crate::geom::{Point, Rect};
use crate::{Error, Result};

/// Region label of a grid node. Two-phase level-set problems use
/// [`REGION_MINUS`]/[`REGION_PLUS`]; multi-region problems use small integers
/// with the convention that the correction between regions `(lo, hi)` is
/// `u_hi − u_lo`.
pub type RegionId = u8;

/// `φ < 0` side of a level set.
pub const REGION_MINUS: RegionId = 0;
/// `φ ≥ 0` side of a level set (ties classify as plus).
pub const REGION_PLUS: RegionId = 1;

/// Uniform node-centered grid on a rectangle. Node `(i, j)` sits at
/// `(x_lo + i·hx, y_lo + j·hy)` with `0 ≤ i < nx`, `0 ≤ j < ny`.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    nx: usize,
    ny: usize,
    domain: Rect,
    hx: f64,
    hy: f64,
}

impl Grid {
    pub fn new(nx: usize, ny: usize, domain: Rect) -> Result<Grid> {
        if nx < 3 || ny < 3 {
            return Err(Error::invalid(format!("grid needs at least 3x3 nodes, got {nx}x{ny}")));
        }
        if domain.is_degenerate() {
            return Err(Error::invalid("degenerate grid domain"));
        }
        let hx = domain.width() / (nx - 1) as f64;
        let hy = domain.height() / (ny - 1) as f64;
        Ok(Grid { nx, ny, domain, hx, hy })
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

    pub fn domain(&self) -> Rect {
        self.domain
    }

    pub fn n_nodes(&self) -> usize {
        self.nx * self.ny
    }

    #[inline]
    pub fn idx(&self, i: usize, j: usize) -> usize {
        debug_assert!(i < self.nx && j < self.ny);
        j * self.nx + i
    }

    #[inline]
    pub fn node(&self, i: usize, j: usize) -> Point {
        Point::new(self.domain.x_lo + i as f64 * self.hx, self.domain.y_lo + j as f64 * self.hy)
    }

    pub fn is_boundary(&self, i: usize, j: usize) -> bool {
        i == 0 || j == 0 || i == self.nx - 1 || j == self.ny - 1
    }

    /// Iterate over all `(i, j)` node indices, row-major.
    pub fn nodes(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.ny).flat_map(move |j| (0..self.nx).map(move |i| (i, j)))
    }

    /// Iterate over interior node indices.
    pub fn interior_nodes(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (1..self.ny - 1).flat_map(move |j| (1..self.nx - 1).map(move |i| (i, j)))
    }

    /// Index of the cell containing `p`, clamped to the grid.
    pub fn cell_of(&self, p: Point) -> (usize, usize) {
        let fi = ((p.x - self.domain.x_lo) / self.hx).floor();
        let fj = ((p.y - self.domain.y_lo) / self.hy).floor();
        let ci = (fi.max(0.0) as usize).min(self.nx - 2);
        let cj = (fj.max(0.0) as usize).min(self.ny - 2);
        (ci, cj)
    }
}

/// Assigns a region to any point of the domain. Implemented by the interface
/// representations; node classification is a pure function of it.
pub trait RegionClassifier {
    fn region_of(&self, p: Point) -> RegionId;
}

/// Per-node region labels.
#[derive(Debug, Clone, PartialEq)]
pub struct SideMap {
    nx: usize,
    labels: Vec<RegionId>,
}

impl SideMap {
    #[inline]
    pub fn region(&self, i: usize, j: usize) -> RegionId {
        self.labels[j * self.nx + i]
    }

    pub fn labels(&self) -> &[RegionId] {
        &self.labels
    }
}

/// Classify every node of the grid. For level sets this is the sign of the
/// nodal value with ties going to the plus side.
pub fn classify_nodes(grid: &Grid, rep: &impl RegionClassifier) -> SideMap {
    let labels = grid.nodes().map(|(i, j)| rep.region_of(grid.node(i, j))).collect();
    SideMap { nx: grid.nx(), labels }
}

/// Which finite-difference stencil a scheme uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StencilKind {
    FivePoint,
    NinePoint,
}

impl StencilKind {
    /// Offsets of the stencil nodes other than the center.
    pub fn neighbor_offsets(&self) -> &'static [(isize, isize)] {
        match self {
            StencilKind::FivePoint => &[(1, 0), (-1, 0), (0, 1), (0, -1)],
            StencilKind::NinePoint => &[
                (1, 0),
                (-1, 0),
                (0, 1),
                (0, -1),
                (1, 1),
                (1, -1),
                (-1, 1),
                (-1, -1),
            ],
        }
    }
}

/// A stencil that straddles the interface: one or more of its nodes lies in a
/// region different from the center's. The listed nodes are exactly those
/// for which a correction value is needed; their association with a specific
/// interface piece is resolved later, once the geometry is available.
#[derive(Debug, Clone, PartialEq)]
pub struct IrregularStencil {
    pub center: (usize, usize),
    pub kind: StencilKind,
    /// Stencil nodes whose region differs from the center's, in a fixed
    /// (offset-table) order.
    pub opposite: Vec<(usize, usize)>,
}

/// Find every interior stencil with at least one opposite-side node. Each
/// qualifying center appears exactly once.
pub fn irregular_stencils(grid: &Grid, sides: &SideMap, kind: StencilKind) -> Vec<IrregularStencil> {
    let mut out = Vec::new();
    for (i, j) in grid.interior_nodes() {
        let center_region = sides.region(i, j);
        let mut opposite = Vec::new();
        for &(di, dj) in kind.neighbor_offsets() {
            let ni = (i as isize + di) as usize;
            let nj = (j as isize + dj) as usize;
            if sides.region(ni, nj) != center_region {
                opposite.push((ni, nj));
            }
        }
        if !opposite.is_empty() {
            out.push(IrregularStencil { center: (i, j), kind, opposite });
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    struct LevelSetFn<F: Fn(Point) -> f64>(F);

    impl<F: Fn(Point) -> f64> RegionClassifier for LevelSetFn<F> {
        fn region_of(&self, p: Point) -> RegionId {
            if (self.0)(p) < 0.0 {
                REGION_MINUS
            } else {
                REGION_PLUS
            }
        }
    }

    #[test]
    fn grid_spacings() {
        let g = Grid::new(3, 3, Rect::new(0.0, 1.0, 0.0, 1.0)).unwrap();
        assert_eq!(g.hx(), 0.5);
        assert_eq!(g.hy(), 0.5);
        assert_eq!(g.node(2, 2), Point::new(1.0, 1.0));

        let g = Grid::new(193, 193, Rect::new(0.0, 1.0, 0.0, 1.0)).unwrap();
        assert_abs_diff_eq!(g.hx(), 1.0 / 192.0);

        let g = Grid::new(161, 161, Rect::new(-1.0, 1.0, -1.0, 1.0)).unwrap();
        assert_abs_diff_eq!(g.hx(), 0.0125);
    }

    #[test]
    fn grid_rejects_bad_input() {
        assert!(Grid::new(2, 5, Rect::new(0.0, 1.0, 0.0, 1.0)).is_err());
        assert!(Grid::new(5, 5, Rect::new(0.0, 0.0, 0.0, 1.0)).is_err());
    }

    fn circle_phi(p: Point) -> f64 {
        (p.x - 0.5).powi(2) + (p.y - 0.5).powi(2) - 0.01
    }

    #[test]
    fn classify_circle_nodes() {
        let g = Grid::new(11, 11, Rect::new(0.0, 1.0, 0.0, 1.0)).unwrap();
        let sides = classify_nodes(&g, &LevelSetFn(circle_phi));
        // center node (0.5, 0.5): phi = -0.01 < 0
        assert_eq!(sides.region(5, 5), REGION_MINUS);
        // node (0.9, 0.5): phi = 0.15 > 0
        assert_eq!(sides.region(9, 5), REGION_PLUS);
    }

    #[test]
    fn classify_tie_breaks_to_plus() {
        let g = Grid::new(5, 5, Rect::new(0.0, 1.0, 0.0, 1.0)).unwrap();
        // phi = y - 0.5 vanishes exactly on the middle row
        let sides = classify_nodes(&g, &LevelSetFn(|p: Point| p.y - 0.5));
        assert_eq!(sides.region(2, 2), REGION_PLUS);
    }

    #[test]
    fn flat_interface_stencil_count() {
        let g = Grid::new(5, 5, Rect::new(0.0, 1.0, 0.0, 1.0)).unwrap();
        let sides = classify_nodes(&g, &LevelSetFn(|p: Point| p.y - 0.45));
        let st = irregular_stencils(&g, &sides, StencilKind::NinePoint);
        assert_eq!(st.len(), 6);
        for s in &st {
            assert!(s.center.1 == 1 || s.center.1 == 2);
            assert!((1..=3).contains(&s.center.0));
            assert!(!s.opposite.is_empty());
        }
    }

    #[test]
    fn no_interface_gives_no_stencils() {
        let g = Grid::new(9, 9, Rect::new(0.0, 1.0, 0.0, 1.0)).unwrap();
        let sides = classify_nodes(&g, &LevelSetFn(|_| 1.0));
        assert!(irregular_stencils(&g, &sides, StencilKind::NinePoint).is_empty());
    }

    /// Independent enumeration oracle: every interior node within one stencil
    /// width of the circle and with a sign change among its neighbors must be
    /// listed, and nothing else.
    #[test]
    fn circle_stencils_match_bruteforce() {
        let g = Grid::new(33, 33, Rect::new(0.0, 1.0, 0.0, 1.0)).unwrap();
        let sides = classify_nodes(&g, &LevelSetFn(circle_phi));
        let st = irregular_stencils(&g, &sides, StencilKind::NinePoint);

        let mut expected = Vec::new();
        for j in 1..32 {
            for i in 1..32 {
                let c = circle_phi(g.node(i, j)) >= 0.0;
                let mut mixed = false;
                for dj in -1isize..=1 {
                    for di in -1isize..=1 {
                        if di == 0 && dj == 0 {
                            continue;
                        }
                        let q = g.node((i as isize + di) as usize, (j as isize + dj) as usize);
                        if (circle_phi(q) >= 0.0) != c {
                            mixed = true;
                        }
                    }
                }
                if mixed {
                    expected.push((i, j));
                }
            }
        }
        let got: Vec<_> = st.iter().map(|s| s.center).collect();
        assert_eq!(got, expected);

        // every listed center is within one stencil width of the interface
        let width = (2.0f64 * g.hx() * g.hx() + 2.0 * g.hy() * g.hy()).sqrt();
        for s in &st {
            let p = g.node(s.center.0, s.center.1);
            let dist = ((p.x - 0.5).hypot(p.y - 0.5) - 0.1).abs();
            assert!(dist <= width, "center {:?} too far from interface: {dist}", s.center);
        }
    }

    #[test]
    fn opposite_nodes_are_strictly_opposite_side() {
        let g = Grid::new(21, 21, Rect::new(0.0, 1.0, 0.0, 1.0)).unwrap();
        let sides = classify_nodes(&g, &LevelSetFn(circle_phi));
        for s in irregular_stencils(&g, &sides, StencilKind::FivePoint) {
            let c = sides.region(s.center.0, s.center.1);
            for &(i, j) in &s.opposite {
                assert_ne!(sides.region(i, j), c);
            }
        }
    }
}
