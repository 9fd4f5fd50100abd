//! Local Cauchy solves for the correction function.
//!
//! Around every stencil that straddles the interface, a small rectangle
//! `Ω_Γ` is built (four construction strategies of increasing robustness) and
//! the correction function `D` is recovered on it by minimizing the penalized
//! least-squares functional
//!
//! ```text
//! J_P = ℓ_c³ ∫_Ω (∇²D − f_D)² dV
//!     + c_P ∫_{Γ∩Ω} (D − a)² dS
//!     + c_P ℓ_c² ∫_{Γ∩Ω} (D_n − b)² dS
//! ```
//!
//! with `D` represented by a 12-parameter bicubic (fourth order) or a
//! modified/standard bilinear (second order). The minimization produces a
//! small self-adjoint system per box; its solution is evaluated at the
//! stencil nodes that need corrections.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::geom::{gauss_square, Bicubic, ConvexPolygon, Frame, ModifiedBilinear, Point, Rect, Vec2};
use crate::grid::{Grid, IrregularStencil, RegionId, SideMap, StencilKind};
use crate::interface::{InterfaceRep, InterfaceSegment, PiecePath};
use crate::{Error, Result};

/// How `Ω_Γ` is constructed around a stencil (or node).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Strategy {
    /// The fixed `2hx × 2hy` stencil box. Simple but ill-posed when the
    /// contained interface piece is small; kept as a conditioning baseline.
    Naive,
    /// Smallest grid-aligned rectangle enclosing the stencil's interface
    /// piece and the nodes needing corrections.
    Compact,
    /// Same as `Compact` but in a frame rotated by `θ_Γ − π/4`, which keeps
    /// the box nearly square when the interface aligns with the grid.
    Free,
    /// One square per node needing a correction, centered at the closest
    /// interface point with diagonals along the tangent and normal.
    NodeCentered,
}

/// Basis used to represent `D` on one box.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BasisKind {
    Bicubic12,
    ModifiedBilinear5,
    StandardBilinear4,
}

impl BasisKind {
    pub fn n_dofs(&self) -> usize {
        match self {
            BasisKind::Bicubic12 => 12,
            BasisKind::ModifiedBilinear5 => 5,
            BasisKind::StandardBilinear4 => 4,
        }
    }
}

/// Configuration of the local solves.
#[derive(Debug, Clone, Copy)]
pub struct CauchyConfig {
    /// Penalization coefficient `c_P` of the interface terms.
    pub penalty: f64,
    pub basis: BasisKind,
    pub strategy: Strategy,
    /// Per-axis Gauss count of the area rule (total points = n²).
    pub n_area_1d: usize,
    /// Gauss count of the line rule per interface segment.
    pub n_line: usize,
}

impl CauchyConfig {
    /// Defaults of the fourth-order scheme: bicubic basis, 36 area and 6 line
    /// points, compact boxes, `c_P = 50`.
    pub fn fourth_order() -> Self {
        CauchyConfig {
            penalty: 50.0,
            basis: BasisKind::Bicubic12,
            strategy: Strategy::Compact,
            n_area_1d: 6,
            n_line: 6,
        }
    }

    /// Defaults of the second-order scheme: modified bilinear basis, 16 area
    /// and 4 line points, node-centered boxes (uniform squares along the
    /// interface, which keeps the error constants steady from grid to grid),
    /// `c_P = 50`.
    pub fn second_order() -> Self {
        CauchyConfig {
            penalty: 50.0,
            basis: BasisKind::ModifiedBilinear5,
            strategy: Strategy::NodeCentered,
            n_area_1d: 4,
            n_line: 4,
        }
    }
}

/// Problem data needed by the local solves: jump in value `a`, jump in normal
/// derivative `b`, and the source jump `f_D`, each per interface id and in
/// the `u_hi − u_lo` orientation of the interface's region pair.
pub trait JumpData: Sync {
    fn jump_value(&self, interface_id: usize, p: Point) -> f64;
    fn jump_normal_deriv(&self, interface_id: usize, p: Point, normal: Vec2) -> f64;
    fn jump_source(&self, interface_id: usize, p: Point) -> f64;
}

/// Who a box belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoxOwner {
    Stencil((usize, usize)),
    Node((usize, usize)),
}

/// A possibly rotated rectangle `Ω_Γ` with the interface piece(s) of its
/// target interface and the nodes whose correction values it must provide.
#[derive(Debug, Clone)]
pub struct OmegaBox {
    frame: Frame,
    half: (f64, f64),
    pub interface_id: usize,
    pub owner: BoxOwner,
    pub d_nodes: Vec<(usize, usize)>,
    pub segments: Vec<InterfaceSegment>,
}

impl OmegaBox {
    pub fn center(&self) -> Point {
        self.frame.origin
    }

    pub fn theta(&self) -> f64 {
        self.frame.theta()
    }

    pub fn half_extents(&self) -> (f64, f64) {
        self.half
    }

    /// Characteristic length: the shortest side.
    pub fn ell_c(&self) -> f64 {
        2.0 * self.half.0.min(self.half.1)
    }

    pub fn aspect_ratio(&self) -> f64 {
        let (a, b) = self.half;
        a.max(b) / a.min(b)
    }

    pub fn contains(&self, p: Point, tol: f64) -> bool {
        let l = self.frame.to_local(p);
        l.x.abs() <= self.half.0 + tol && l.y.abs() <= self.half.1 + tol
    }

    pub fn polygon(&self) -> ConvexPolygon {
        let (a, b) = self.half;
        ConvexPolygon::new(vec![
            self.frame.to_world(Point::new(-a, -b)),
            self.frame.to_world(Point::new(a, -b)),
            self.frame.to_world(Point::new(a, b)),
            self.frame.to_world(Point::new(-a, b)),
        ])
    }

    /// The box as a cell in local coordinates, origin at the lower-left corner.
    fn local_cell(&self) -> Rect {
        Rect::new(0.0, 2.0 * self.half.0, 0.0, 2.0 * self.half.1)
    }

    /// Map a world point into local cell coordinates.
    fn to_cell(&self, p: Point) -> Point {
        let l = self.frame.to_local(p);
        Point::new(l.x + self.half.0, l.y + self.half.1)
    }

    fn cell_to_world(&self, c: Point) -> Point {
        self.frame.to_world(Point::new(c.x - self.half.0, c.y - self.half.1))
    }
}

/// The convex region whose interface content a stencil-centered strategy
/// must enclose: the full stencil box for the grid-aligned strategies, the
/// stencil's extreme-point quadrilateral for the rotated one.
pub fn stencil_extraction_region(
    strategy: Strategy,
    kind: StencilKind,
    grid: &Grid,
    center: (usize, usize),
) -> ConvexPolygon {
    let c = grid.node(center.0, center.1);
    let (hx, hy) = (grid.hx(), grid.hy());
    match (strategy, kind) {
        (Strategy::Free, StencilKind::FivePoint) => ConvexPolygon::new(vec![
            Point::new(c.x + hx, c.y),
            Point::new(c.x, c.y + hy),
            Point::new(c.x - hx, c.y),
            Point::new(c.x, c.y - hy),
        ]),
        _ => ConvexPolygon::from_rect(&Rect::new(c.x - hx, c.x + hx, c.y - hy, c.y + hy)),
    }
}

/// Lower bound on a box half extent, to keep degenerate (line-like) boxes
/// representable when the interface aligns exactly with a grid line.
fn min_half(grid: &Grid) -> f64 {
    0.05 * grid.hx().min(grid.hy())
}

/// Padding added to each side of a bounding-box construction. The smallest
/// enclosing rectangle puts the interface piece exactly on the box boundary,
/// where the re-extraction root finding cannot bracket it.
fn box_pad(grid: &Grid) -> f64 {
    0.05 * grid.hx().min(grid.hy())
}

/// Build `Ω_Γ` for one stencil (or node) and extract the contained piece(s)
/// of its target interface with quadrature samples.
pub fn build_omega(
    strategy: Strategy,
    owner: BoxOwner,
    rep: &InterfaceRep,
    interface_id: usize,
    piece: Option<&PiecePath>,
    d_nodes: &[(usize, usize)],
    grid: &Grid,
    cfg: &CauchyConfig,
) -> Result<OmegaBox> {
    let node_pts: Vec<Point> = d_nodes.iter().map(|&(i, j)| grid.node(i, j)).collect();
    let (frame, half) = match (strategy, owner) {
        (Strategy::Naive, BoxOwner::Stencil(c)) => {
            (Frame::axis_aligned(grid.node(c.0, c.1)), (grid.hx(), grid.hy()))
        }
        (Strategy::Compact, BoxOwner::Stencil(_)) => {
            let piece = piece.ok_or_else(|| Error::invalid("compact strategy needs a piece"))?;
            if d_nodes.is_empty() {
                return Err(Error::invalid("compact strategy needs correction nodes"));
            }
            let bb = piece.bbox().union(&Rect::bounding(node_pts.iter().copied()));
            let pad = box_pad(grid);
            let half = (0.5 * bb.width() + pad, 0.5 * bb.height() + pad);
            (Frame::axis_aligned(bb.center()), half)
        }
        (Strategy::Free, BoxOwner::Stencil(_)) => {
            let piece = piece.ok_or_else(|| Error::invalid("free strategy needs a piece"))?;
            if d_nodes.is_empty() {
                return Err(Error::invalid("free strategy needs correction nodes"));
            }
            let theta_r = rep.tangent_angle_of(piece)? - std::f64::consts::FRAC_PI_4;
            let rot = Frame::new(Point::new(0.0, 0.0), theta_r);
            let local_pts = piece
                .points
                .iter()
                .chain(node_pts.iter())
                .map(|&p| rot.to_local(p));
            let bb = Rect::bounding(local_pts);
            let pad = box_pad(grid);
            let half = (0.5 * bb.width() + pad, 0.5 * bb.height() + pad);
            (Frame::new(rot.to_world(bb.center()), theta_r), half)
        }
        (Strategy::NodeCentered, BoxOwner::Node(n)) => {
            let p = grid.node(n.0, n.1);
            let p0 = rep.closest_point(interface_id, p)?;
            let normal = match rep {
                InterfaceRep::Exact(ex) => ex.circles()[interface_id].normal(p0),
                InterfaceRep::LevelSet(_) => rep.normal_at(p0)?,
            };
            let tangent = normal.perp();
            let theta_r = tangent.y.atan2(tangent.x) - std::f64::consts::FRAC_PI_4;
            let side = 2.0 * (grid.hx() * grid.hx() + grid.hy() * grid.hy()).sqrt();
            (Frame::new(p0, theta_r), (0.5 * side, 0.5 * side))
        }
        (s, o) => {
            return Err(Error::invalid(format!("strategy {s:?} incompatible with owner {o:?}")))
        }
    };

    let floor = min_half(grid);
    let half = (half.0.max(floor), half.1.max(floor));
    let mut omega = OmegaBox {
        frame,
        half,
        interface_id,
        owner,
        d_nodes: d_nodes.to_vec(),
        segments: Vec::new(),
    };

    let tol = 1e-9 * (grid.hx() + grid.hy());
    for &(i, j) in d_nodes {
        debug_assert!(
            omega.contains(grid.node(i, j), tol),
            "constructed box must contain its correction nodes"
        );
    }

    let pieces = rep.pieces_in(interface_id, &omega.polygon())?;
    for p in &pieces {
        omega.segments.push(rep.piece_quadrature(p, cfg.n_line)?);
    }
    if omega.segments.iter().all(|s| s.arc_length <= 0.0) {
        return Err(Error::geometry(format!(
            "box for {owner:?} contains no piece of interface {interface_id}"
        )));
    }
    Ok(omega)
}

// ---------------------------------------------------------------------------
// Local basis
// ---------------------------------------------------------------------------

enum BasisFns {
    Cubic(Vec<Bicubic>),
    Bilinear(Vec<ModifiedBilinear>),
}

struct LocalBasis {
    fns: BasisFns,
}

impl LocalBasis {
    fn build(kind: BasisKind, cell: Rect) -> LocalBasis {
        match kind {
            BasisKind::Bicubic12 => {
                let fns = (0..12).map(|slot| Bicubic::unit_basis(cell, slot)).collect();
                LocalBasis { fns: BasisFns::Cubic(fns) }
            }
            BasisKind::ModifiedBilinear5 | BasisKind::StandardBilinear4 => {
                let n = kind.n_dofs();
                let fns = (0..n)
                    .map(|slot| {
                        let mut corners = [0.0; 4];
                        let mut kappa = 0.0;
                        if slot < 4 {
                            corners[slot] = 1.0;
                        } else {
                            kappa = 1.0;
                        }
                        ModifiedBilinear::new(cell, corners, kappa)
                            .expect("local cell is nondegenerate")
                    })
                    .collect();
                LocalBasis { fns: BasisFns::Bilinear(fns) }
            }
        }
    }

    fn value(&self, m: usize, p: Point) -> f64 {
        match &self.fns {
            BasisFns::Cubic(v) => v[m].eval(p),
            BasisFns::Bilinear(v) => v[m].eval(p),
        }
    }

    fn grad(&self, m: usize, p: Point) -> Vec2 {
        match &self.fns {
            BasisFns::Cubic(v) => v[m].grad(p),
            BasisFns::Bilinear(v) => v[m].grad(p),
        }
    }

    fn laplacian(&self, m: usize, p: Point) -> f64 {
        match &self.fns {
            BasisFns::Cubic(v) => v[m].laplacian(p),
            BasisFns::Bilinear(v) => v[m].laplacian(p),
        }
    }
}

// ---------------------------------------------------------------------------
// Assembly and solve
// ---------------------------------------------------------------------------

/// One quadratic form `βᵀAβ − 2βᵀr + c` (a single term of the discrete `J_P`).
#[derive(Debug, Clone)]
struct QuadForm {
    a: DMatrix<f64>,
    r: DVector<f64>,
    c: f64,
}

impl QuadForm {
    fn zeros(n: usize) -> Self {
        QuadForm { a: DMatrix::zeros(n, n), r: DVector::zeros(n), c: 0.0 }
    }

    fn add_sample(&mut self, basis_vals: &[f64], data: f64, w: f64) {
        let n = basis_vals.len();
        for m in 0..n {
            for k in 0..n {
                self.a[(m, k)] += w * basis_vals[m] * basis_vals[k];
            }
            self.r[m] += w * data * basis_vals[m];
        }
        self.c += w * data * data;
    }

    fn value_at(&self, beta: &DVector<f64>) -> f64 {
        (beta.transpose() * &self.a * beta)[(0, 0)] - 2.0 * beta.dot(&self.r) + self.c
    }
}

/// The discrete normal equations of `J_P` on one box.
pub struct LocalSystem {
    terms: [QuadForm; 3],
    pub matrix: DMatrix<f64>,
    pub rhs: DVector<f64>,
    pub constant: f64,
    basis: BasisKind,
    omega: OmegaBox,
}

impl LocalSystem {
    /// Value of the discrete functional at a coefficient vector.
    pub fn jp_value(&self, coeffs: &[f64]) -> f64 {
        self.jp_terms(coeffs).iter().sum()
    }

    /// The three terms (PDE residual, value mismatch, normal-derivative
    /// mismatch) of the discrete functional at a coefficient vector.
    pub fn jp_terms(&self, coeffs: &[f64]) -> [f64; 3] {
        let beta = DVector::from_column_slice(coeffs);
        [
            self.terms[0].value_at(&beta),
            self.terms[1].value_at(&beta),
            self.terms[2].value_at(&beta),
        ]
    }

    pub fn omega(&self) -> &OmegaBox {
        &self.omega
    }
}

/// Discretize `J_P` on the box with the configured Gauss rules. The result is
/// a symmetric positive semi-definite `n × n` system (n = 12, 5, or 4).
pub fn assemble_local_system(
    omega: &OmegaBox,
    data: &impl JumpData,
    cfg: &CauchyConfig,
) -> Result<LocalSystem> {
    let n = cfg.basis.n_dofs();
    let basis = LocalBasis::build(cfg.basis, omega.local_cell());
    let ell = omega.ell_c();
    let id = omega.interface_id;

    let n_line_samples: usize = omega.segments.iter().map(|s| s.samples.len()).sum();
    if n_line_samples * 2 + cfg.n_area_1d * cfg.n_area_1d < n {
        return Err(Error::SingularSystem {
            cond: f64::INFINITY,
            context: "fewer quadrature constraints than unknowns".into(),
        });
    }

    let mut area = QuadForm::zeros(n);
    let mut value = QuadForm::zeros(n);
    let mut normal = QuadForm::zeros(n);
    let mut vals = vec![0.0; n];

    // volume term: ℓ³ ∫ (∇²D − f_D)²
    let square = gauss_square(cfg.n_area_1d);
    let cell = omega.local_cell();
    let jac = cell.width() * cell.height();
    let w_area = ell.powi(3) * jac;
    for (q, &wq) in square.nodes.iter().zip(&square.weights) {
        let p_cell = Point::new(q.x * cell.width(), q.y * cell.height());
        for m in 0..n {
            vals[m] = basis.laplacian(m, p_cell);
        }
        let f_d = data.jump_source(id, omega.cell_to_world(p_cell));
        area.add_sample(&vals, f_d, wq * w_area);
    }

    // interface terms: c_P ∫ (D − a)² and c_P ℓ² ∫ (D_n − b)²
    for seg in &omega.segments {
        for s in &seg.samples {
            let p_cell = omega.to_cell(s.pos);
            for m in 0..n {
                vals[m] = basis.value(m, p_cell);
            }
            value.add_sample(&vals, data.jump_value(id, s.pos), cfg.penalty * s.weight);

            // gradient in world coordinates = rotate local gradient
            for m in 0..n {
                let g = omega.frame.vec_to_world(basis.grad(m, p_cell));
                vals[m] = g.dot(s.normal);
            }
            normal.add_sample(
                &vals,
                data.jump_normal_deriv(id, s.pos, s.normal),
                cfg.penalty * ell * ell * s.weight,
            );
        }
    }

    let matrix = &area.a + &value.a + &normal.a;
    let rhs = &area.r + &value.r + &normal.r;
    let constant = area.c + value.c + normal.c;
    Ok(LocalSystem {
        terms: [area, value, normal],
        matrix,
        rhs,
        constant,
        basis: cfg.basis,
        omega: omega.clone(),
    })
}

/// Correction field on one box: the minimizer of the discrete `J_P`.
#[derive(Debug, Clone)]
pub struct CorrectionField {
    pub coeffs: Vec<f64>,
    interp: FieldInterp,
    omega: OmegaBox,
    pub diagnostics: BoxDiagnostics,
}

#[derive(Debug, Clone)]
enum FieldInterp {
    Cubic(Bicubic),
    Bilinear(ModifiedBilinear),
}

/// Per-box diagnostic record.
#[derive(Debug, Clone, Copy)]
pub struct BoxDiagnostics {
    pub cond_estimate: f64,
    pub jp_residual: f64,
    pub ell_c: f64,
    pub aspect_ratio: f64,
    /// Aspect ratio beyond 10; elongated boxes can degrade the local fit.
    pub elongated: bool,
}

/// Minimize the assembled quadratic form. Solved through diagonally
/// equilibrated Cholesky with an eigendecomposition fallback; the condition
/// estimate of the raw matrix is recorded in the diagnostics.
pub fn solve_local(sys: &LocalSystem) -> Result<CorrectionField> {
    let n = sys.matrix.nrows();
    let eig = sys.matrix.clone().symmetric_eigen();
    let lam_max = eig.eigenvalues.iter().cloned().fold(0.0f64, |a, b| a.max(b.abs()));
    let lam_min = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, |a, b| a.min(b.abs()));
    let cond = if lam_min > 0.0 { lam_max / lam_min } else { f64::INFINITY };

    // diagonal equilibration
    let mut scale = DVector::zeros(n);
    for i in 0..n {
        let d = sys.matrix[(i, i)];
        if !(d > 0.0) {
            return Err(Error::SingularSystem {
                cond,
                context: format!("nonpositive diagonal entry {d:.3e} in local system"),
            });
        }
        scale[i] = 1.0 / d.sqrt();
    }
    let mut eq = sys.matrix.clone();
    for i in 0..n {
        for j in 0..n {
            eq[(i, j)] *= scale[i] * scale[j];
        }
    }
    let rhs_eq = DVector::from_fn(n, |i, _| sys.rhs[i] * scale[i]);

    let beta = match eq.clone().cholesky() {
        Some(chol) => {
            let y = chol.solve(&rhs_eq);
            DVector::from_fn(n, |i, _| y[i] * scale[i])
        }
        None => {
            // semi-definite to round-off: solve through the eigensystem of
            // the equilibrated matrix, dropping negligible modes
            let eig_eq = eq.symmetric_eigen();
            let lmax = eig_eq.eigenvalues.iter().cloned().fold(0.0f64, f64::max);
            if !(lmax > 0.0) {
                return Err(Error::SingularSystem { cond, context: "zero local system".into() });
            }
            let mut y = DVector::zeros(n);
            for k in 0..n {
                let lam = eig_eq.eigenvalues[k];
                if lam > 1e-14 * lmax {
                    let v = eig_eq.eigenvectors.column(k);
                    y += v * (v.dot(&rhs_eq) / lam);
                }
            }
            DVector::from_fn(n, |i, _| y[i] * scale[i])
        }
    };

    let coeffs: Vec<f64> = beta.iter().cloned().collect();
    let jp_residual = sys.jp_value(&coeffs);
    let omega = sys.omega.clone();
    let cell = omega.local_cell();
    let interp = match sys.basis {
        BasisKind::Bicubic12 => {
            let values = [coeffs[0], coeffs[1], coeffs[2], coeffs[3]];
            let (dx, dy) = (cell.width(), cell.height());
            let grads = [
                Point::new(coeffs[4] / dx, coeffs[8] / dy),
                Point::new(coeffs[5] / dx, coeffs[9] / dy),
                Point::new(coeffs[6] / dx, coeffs[10] / dy),
                Point::new(coeffs[7] / dx, coeffs[11] / dy),
            ];
            FieldInterp::Cubic(Bicubic::from_cell_data(cell, values, grads)?)
        }
        BasisKind::ModifiedBilinear5 => FieldInterp::Bilinear(ModifiedBilinear::new(
            cell,
            [coeffs[0], coeffs[1], coeffs[2], coeffs[3]],
            coeffs[4],
        )?),
        BasisKind::StandardBilinear4 => FieldInterp::Bilinear(ModifiedBilinear::new(
            cell,
            [coeffs[0], coeffs[1], coeffs[2], coeffs[3]],
            0.0,
        )?),
    };
    let aspect = omega.aspect_ratio();
    let diagnostics = BoxDiagnostics {
        cond_estimate: cond,
        jp_residual,
        ell_c: omega.ell_c(),
        aspect_ratio: aspect,
        elongated: aspect > 10.0,
    };
    Ok(CorrectionField { coeffs, interp, omega, diagnostics })
}

impl CorrectionField {
    pub fn omega(&self) -> &OmegaBox {
        &self.omega
    }

    /// Evaluate `D` at a world point inside the box.
    pub fn eval(&self, p: Point) -> f64 {
        let c = self.omega.to_cell(p);
        match &self.interp {
            FieldInterp::Cubic(b) => b.eval(c),
            FieldInterp::Bilinear(b) => b.eval(c),
        }
    }
}

/// Evaluate the field at grid nodes; nodes must lie inside the box.
pub fn correction_at_nodes(
    field: &CorrectionField,
    grid: &Grid,
    nodes: &[(usize, usize)],
) -> Result<BTreeMap<(usize, usize), f64>> {
    let tol = 1e-9 * (grid.hx() + grid.hy());
    let mut out = BTreeMap::new();
    for &(i, j) in nodes {
        let p = grid.node(i, j);
        if !field.omega.contains(p, tol) {
            return Err(Error::invalid(format!("node ({i},{j}) outside its correction box")));
        }
        out.insert((i, j), field.eval(p));
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Region composition
// ---------------------------------------------------------------------------

/// Signed traversal of interfaces expressing `u_to − u_from` as a sum of
/// primary corrections: each entry is `(interface_id, sign)` with sign `+1`
/// when the interface pair `(lo, hi)` is crossed from `lo` to `hi`.
pub fn composition_path(
    pairs: &[(RegionId, RegionId)],
    from: RegionId,
    to: RegionId,
) -> Result<Vec<(usize, f64)>> {
    if from == to {
        return Ok(Vec::new());
    }
    // breadth-first search in the region adjacency graph
    let mut frontier = vec![from];
    let mut back: BTreeMap<RegionId, (RegionId, usize, f64)> = BTreeMap::new();
    let mut seen = std::collections::BTreeSet::new();
    seen.insert(from);
    while !frontier.is_empty() {
        let mut next = Vec::new();
        for &r in &frontier {
            for (id, &(lo, hi)) in pairs.iter().enumerate() {
                let step = if r == lo {
                    Some((hi, 1.0))
                } else if r == hi {
                    Some((lo, -1.0))
                } else {
                    None
                };
                if let Some((other, sign)) = step {
                    if seen.insert(other) {
                        back.insert(other, (r, id, sign));
                        next.push(other);
                    }
                }
            }
        }
        if seen.contains(&to) {
            break;
        }
        frontier = next;
    }
    if !seen.contains(&to) {
        return Err(Error::invalid(format!(
            "regions {from} and {to} are not connected by any interface"
        )));
    }
    let mut path = Vec::new();
    let mut cur = to;
    while cur != from {
        let (prev, id, sign) = back[&cur];
        path.push((id, sign));
        cur = prev;
    }
    path.reverse();
    Ok(path)
}

// ---------------------------------------------------------------------------
// Correction computation over all irregular stencils
// ---------------------------------------------------------------------------

/// Correction values for one irregular stencil: per opposite node, the value
/// of `D = u_hi − u_lo` for the node's region pair `{region(node),
/// region(center)}`, evaluated at the node.
#[derive(Debug, Clone)]
pub struct StencilCorrectionData {
    pub center: (usize, usize),
    pub d_values: BTreeMap<(usize, usize), f64>,
}

/// Geometry and conditioning record of one solved box.
#[derive(Debug, Clone)]
pub struct BoxReport {
    pub owner: BoxOwner,
    pub interface_id: usize,
    pub center: Point,
    pub half: (f64, f64),
    pub theta: f64,
    pub diagnostics: BoxDiagnostics,
}

/// All correction data for a solve: per-stencil node values plus per-box
/// diagnostics, in deterministic stencil order.
#[derive(Debug, Clone)]
pub struct CorrectionSet {
    pub per_stencil: Vec<StencilCorrectionData>,
    pub boxes: Vec<BoxReport>,
}

fn report_of(field: &CorrectionField) -> BoxReport {
    BoxReport {
        owner: field.omega.owner,
        interface_id: field.omega.interface_id,
        center: field.omega.center(),
        half: field.omega.half_extents(),
        theta: field.omega.theta(),
        diagnostics: field.diagnostics,
    }
}

/// Solve the local Cauchy problems for every irregular stencil and evaluate
/// the correction values its nodes need. Local solves are independent and run
/// in parallel; results are merged in stencil order.
pub fn compute_corrections(
    grid: &Grid,
    sides: &SideMap,
    rep: &InterfaceRep,
    data: &impl JumpData,
    stencils: &[IrregularStencil],
    cfg: &CauchyConfig,
) -> Result<CorrectionSet> {
    let pairs = rep.interface_pairs();
    if cfg.strategy == Strategy::NodeCentered {
        return compute_corrections_node_centered(grid, sides, rep, data, stencils, cfg, &pairs);
    }

    let results: Vec<Result<(StencilCorrectionData, Vec<BoxReport>)>> = stencils
        .par_iter()
        .map(|st| stencil_corrections(grid, sides, rep, data, st, cfg, &pairs))
        .collect();

    let mut per_stencil = Vec::with_capacity(stencils.len());
    let mut boxes = Vec::new();
    for r in results {
        let (sc, mut br) = r?;
        per_stencil.push(sc);
        boxes.append(&mut br);
    }
    Ok(CorrectionSet { per_stencil, boxes })
}

/// Per-node needs of one stencil: for each opposite node, the signed list of
/// primary interfaces whose corrections compose to `u_hi − u_lo` of the
/// node's region pair.
fn node_needs(
    sides: &SideMap,
    st: &IrregularStencil,
    pairs: &[(RegionId, RegionId)],
) -> Result<Vec<((usize, usize), Vec<(usize, f64)>)>> {
    let r_c = sides.region(st.center.0, st.center.1);
    st.opposite
        .iter()
        .map(|&(i, j)| {
            let r_k = sides.region(i, j);
            let (lo, hi) = (r_k.min(r_c), r_k.max(r_c));
            let path = composition_path(pairs, lo, hi)?;
            Ok(((i, j), path))
        })
        .collect()
}

fn stencil_corrections(
    grid: &Grid,
    sides: &SideMap,
    rep: &InterfaceRep,
    data: &impl JumpData,
    st: &IrregularStencil,
    cfg: &CauchyConfig,
    pairs: &[(RegionId, RegionId)],
) -> Result<(StencilCorrectionData, Vec<BoxReport>)> {
    let needs = node_needs(sides, st, pairs)?;

    // interface ids required by this stencil
    let mut needed_ids: Vec<usize> = needs
        .iter()
        .flat_map(|(_, path)| path.iter().map(|&(id, _)| id))
        .collect();
    needed_ids.sort_unstable();
    needed_ids.dedup();

    let region = stencil_extraction_region(cfg.strategy, st.kind, grid, st.center);

    // per interface id: pieces in the stencil region, and per piece the node
    // list (each node goes to its closest piece; all nodes whose composition
    // path uses this interface are included)
    let mut node_values: BTreeMap<(usize, usize), BTreeMap<usize, f64>> = BTreeMap::new();
    let mut reports = Vec::new();
    for id in needed_ids {
        let mut pieces = rep.pieces_in(id, &region)?;
        if pieces.is_empty() {
            // the rotated-frame hull can miss an interface that only grazes
            // it; retry with the full stencil box
            let full = stencil_extraction_region(Strategy::Compact, st.kind, grid, st.center);
            pieces = rep.pieces_in(id, &full)?;
        }
        if pieces.is_empty() {
            // the interface touches the stencil in a single point (a node
            // lying exactly on it); node-centered squares around the needy
            // nodes always contain a proper segment
            for (node, path) in &needs {
                if !path.iter().any(|&(pid, _)| pid == id) {
                    continue;
                }
                let omega = build_omega(
                    Strategy::NodeCentered,
                    BoxOwner::Node(*node),
                    rep,
                    id,
                    None,
                    &[*node],
                    grid,
                    cfg,
                )?;
                let sys = assemble_local_system(&omega, data, cfg)?;
                let field = solve_local(&sys)?;
                reports.push(report_of(&field));
                let v = field.eval(grid.node(node.0, node.1));
                node_values.entry(*node).or_default().insert(id, v);
            }
            continue;
        }
        let mut nodes_for_piece: Vec<Vec<(usize, usize)>> = vec![Vec::new(); pieces.len()];
        for (node, path) in &needs {
            if !path.iter().any(|&(pid, _)| pid == id) {
                continue;
            }
            let p = grid.node(node.0, node.1);
            let closest = (0..pieces.len())
                .min_by(|&a, &b| {
                    pieces[a].min_dist_to(p).partial_cmp(&pieces[b].min_dist_to(p)).unwrap()
                })
                .expect("at least one piece");
            nodes_for_piece[closest].push(*node);
        }
        for (piece, nodes) in pieces.iter().zip(nodes_for_piece) {
            if nodes.is_empty() {
                continue;
            }
            let omega = build_omega(
                cfg.strategy,
                BoxOwner::Stencil(st.center),
                rep,
                id,
                Some(piece),
                &nodes,
                grid,
                cfg,
            )?;
            let sys = assemble_local_system(&omega, data, cfg)?;
            let field = solve_local(&sys)?;
            reports.push(report_of(&field));
            for (node, v) in correction_at_nodes(&field, grid, &nodes)? {
                node_values.entry(node).or_default().insert(id, v);
            }
        }
    }

    // compose per-node values along the interface paths
    let mut d_values = BTreeMap::new();
    for (node, path) in needs {
        let mut d = 0.0;
        for (id, sign) in path {
            let v = node_values
                .get(&node)
                .and_then(|m| m.get(&id))
                .ok_or_else(|| Error::invalid("missing correction value for node"))?;
            d += sign * v;
        }
        d_values.insert(node, d);
    }
    Ok((StencilCorrectionData { center: st.center, d_values }, reports))
}

/// Node-centered flow: one box (and one correction value) per node and
/// interface, shared by every stencil that references the node.
fn compute_corrections_node_centered(
    grid: &Grid,
    sides: &SideMap,
    rep: &InterfaceRep,
    data: &impl JumpData,
    stencils: &[IrregularStencil],
    cfg: &CauchyConfig,
    pairs: &[(RegionId, RegionId)],
) -> Result<CorrectionSet> {
    // unique (node, interface) pairs over all stencils
    let mut needs_per_stencil = Vec::with_capacity(stencils.len());
    let mut wanted: std::collections::BTreeSet<((usize, usize), usize)> = Default::default();
    for st in stencils {
        let needs = node_needs(sides, st, pairs)?;
        for (node, path) in &needs {
            for &(id, _) in path {
                wanted.insert((*node, id));
            }
        }
        needs_per_stencil.push(needs);
    }
    let wanted: Vec<((usize, usize), usize)> = wanted.into_iter().collect();

    let solved: Vec<Result<(((usize, usize), usize), f64, BoxReport)>> = wanted
        .par_iter()
        .map(|&(node, id)| {
            let omega = build_omega(
                Strategy::NodeCentered,
                BoxOwner::Node(node),
                rep,
                id,
                None,
                &[node],
                grid,
                cfg,
            )?;
            let sys = assemble_local_system(&omega, data, cfg)?;
            let field = solve_local(&sys)?;
            let v = field.eval(grid.node(node.0, node.1));
            Ok(((node, id), v, report_of(&field)))
        })
        .collect();

    let mut values: BTreeMap<((usize, usize), usize), f64> = BTreeMap::new();
    let mut boxes = Vec::new();
    for r in solved {
        let (key, v, report) = r?;
        values.insert(key, v);
        boxes.push(report);
    }

    let mut per_stencil = Vec::with_capacity(stencils.len());
    for (st, needs) in stencils.iter().zip(needs_per_stencil) {
        let mut d_values = BTreeMap::new();
        for (node, path) in needs {
            let mut d = 0.0;
            for (id, sign) in path {
                d += sign * values[&(node, id)];
            }
            d_values.insert(node, d);
        }
        per_stencil.push(StencilCorrectionData { center: st.center, d_values });
    }
    Ok(CorrectionSet { per_stencil, boxes })
}
