//! Interface representation and geometric queries.
//!
//! Two representations are supported: a gradient-augmented level set sampled
//! at the grid nodes (values and gradients, reconstructed cell-by-cell with
//! the 12-parameter bicubic), and exact parametric circles with a region
//! topology description. Both answer the same queries: which region a point
//! belongs to, normals, closest interface points, and the pieces of interface
//! contained in a convex region together with curve quadrature samples.

use crate::geom::{gauss_1d, Bicubic, ConvexPolygon, Point, Rect, Vec2};
use crate::grid::{Grid, RegionClassifier, RegionId, REGION_MINUS, REGION_PLUS};
use crate::{Error, Result};

/// Maximum iterations for projection-type root finding.
const MAX_PROJECT_ITER: usize = 50;

// ---------------------------------------------------------------------------
// Gradient-augmented level set
// ---------------------------------------------------------------------------

/// Level set sampled at grid nodes: per-node `φ` and `∇φ`, evaluated anywhere
/// through per-cell bicubics built with the cell-based construction. The cell
/// interpolants match the nodal data at corners and are continuous across
/// edges.
#[derive(Debug, Clone)]
pub struct LevelSetField {
    grid: Grid,
    phi: Vec<f64>,
    grad: Vec<Vec2>,
    /// Gradient-augmented (bicubic) cells; `None` for the plain second-order
    /// representation that interpolates bilinearly.
    cells: Option<Vec<Bicubic>>,
}

impl LevelSetField {
    /// Sample an analytic level set (value and gradient) onto the grid. Only
    /// the sampled representation is used downstream.
    pub fn from_analytic(grid: &Grid, formula: impl Fn(Point) -> (f64, Vec2)) -> LevelSetField {
        let mut phi = Vec::with_capacity(grid.n_nodes());
        let mut grad = Vec::with_capacity(grid.n_nodes());
        for (i, j) in grid.nodes() {
            let (v, g) = formula(grid.node(i, j));
            phi.push(v);
            grad.push(g);
        }
        let ncx = grid.nx() - 1;
        let ncy = grid.ny() - 1;
        let mut cells = Vec::with_capacity(ncx * ncy);
        for cj in 0..ncy {
            for ci in 0..ncx {
                let corners = [(ci, cj), (ci + 1, cj), (ci, cj + 1), (ci + 1, cj + 1)];
                let mut values = [0.0; 4];
                let mut grads = [Point::default(); 4];
                for (v, &(i, j)) in corners.iter().enumerate() {
                    values[v] = phi[grid.idx(i, j)];
                    grads[v] = grad[grid.idx(i, j)];
                }
                let a = grid.node(ci, cj);
                let b = grid.node(ci + 1, cj + 1);
                let cell = Rect::new(a.x, b.x, a.y, b.y);
                cells.push(
                    Bicubic::from_cell_data(cell, values, grads)
                        .expect("grid cells are nondegenerate"),
                );
            }
        }
        LevelSetField { grid: grid.clone(), phi, grad, cells: Some(cells) }
    }

    /// Standard (non-augmented) second-order representation: only nodal
    /// values are sampled; evaluation interpolates bilinearly and normals
    /// come from bilinearly interpolated centered differences of the values.
    pub fn from_analytic_bilinear(grid: &Grid, formula: impl Fn(Point) -> f64) -> LevelSetField {
        let phi: Vec<f64> = grid.nodes().map(|(i, j)| formula(grid.node(i, j))).collect();
        let (nx, ny) = (grid.nx(), grid.ny());
        let (hx, hy) = (grid.hx(), grid.hy());
        let at = |i: usize, j: usize| phi[grid.idx(i, j)];
        let mut grad = Vec::with_capacity(grid.n_nodes());
        for (i, j) in grid.nodes() {
            // centered differences inside, second-order one-sided at the rim
            let gx = if i == 0 {
                (-3.0 * at(0, j) + 4.0 * at(1, j) - at(2, j)) / (2.0 * hx)
            } else if i == nx - 1 {
                (3.0 * at(i, j) - 4.0 * at(i - 1, j) + at(i - 2, j)) / (2.0 * hx)
            } else {
                (at(i + 1, j) - at(i - 1, j)) / (2.0 * hx)
            };
            let gy = if j == 0 {
                (-3.0 * at(i, 0) + 4.0 * at(i, 1) - at(i, 2)) / (2.0 * hy)
            } else if j == ny - 1 {
                (3.0 * at(i, j) - 4.0 * at(i, j - 1) + at(i, j - 2)) / (2.0 * hy)
            } else {
                (at(i, j + 1) - at(i, j - 1)) / (2.0 * hy)
            };
            grad.push(Point::new(gx, gy));
        }
        LevelSetField { grid: grid.clone(), phi, grad, cells: None }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn phi_node(&self, i: usize, j: usize) -> f64 {
        self.phi[self.grid.idx(i, j)]
    }

    pub fn grad_node(&self, i: usize, j: usize) -> Vec2 {
        self.grad[self.grid.idx(i, j)]
    }

    /// Bilinear interpolation of per-node data over the cell containing `p`.
    fn bilinear<T: Copy + std::ops::Add<Output = T> + std::ops::Mul<f64, Output = T>>(
        &self,
        p: Point,
        data: impl Fn(usize, usize) -> T,
    ) -> T {
        let (ci, cj) = self.grid.cell_of(p);
        let a = self.grid.node(ci, cj);
        let xb = ((p.x - a.x) / self.grid.hx()).clamp(0.0, 1.0);
        let yb = ((p.y - a.y) / self.grid.hy()).clamp(0.0, 1.0);
        data(ci, cj) * ((1.0 - xb) * (1.0 - yb))
            + data(ci + 1, cj) * (xb * (1.0 - yb))
            + data(ci, cj + 1) * ((1.0 - xb) * yb)
            + data(ci + 1, cj + 1) * (xb * yb)
    }

    pub fn eval(&self, p: Point) -> f64 {
        match &self.cells {
            Some(cells) => {
                let (ci, cj) = self.grid.cell_of(p);
                cells[cj * (self.grid.nx() - 1) + ci].eval(p)
            }
            None => self.bilinear(p, |i, j| self.phi[self.grid.idx(i, j)]),
        }
    }

    pub fn grad(&self, p: Point) -> Vec2 {
        match &self.cells {
            Some(cells) => {
                let (ci, cj) = self.grid.cell_of(p);
                cells[cj * (self.grid.nx() - 1) + ci].grad(p)
            }
            None => self.bilinear(p, |i, j| self.grad[self.grid.idx(i, j)]),
        }
    }

    fn min_h(&self) -> f64 {
        self.grid.hx().min(self.grid.hy())
    }

    /// Newton projection onto `φ = 0` along `∇φ`, to `|φ| ≤ 1e-12` relative
    /// to the local level-set scale `|∇φ|·h`.
    fn project_to_zero(&self, start: Point) -> Result<Point> {
        let mut p = start;
        for _ in 0..MAX_PROJECT_ITER {
            let v = self.eval(p);
            let g = self.grad(p);
            let g2 = g.dot(g);
            if g2 < 1e-300 {
                return Err(Error::geometry("vanishing level-set gradient during projection"));
            }
            let scale = g2.sqrt() * self.min_h();
            if v.abs() <= 1e-12 * scale {
                return Ok(p);
            }
            p = p - g * (v / g2);
        }
        Err(Error::geometry("level-set projection did not converge"))
    }

    /// Roots of `φ` along the segment `a → b`, as curve parameters in `[0, 1]`.
    fn crossings_on_segment(&self, a: Point, b: Point) -> Vec<f64> {
        let len = a.dist(b);
        if len == 0.0 {
            return Vec::new();
        }
        let n = ((len / (0.25 * self.min_h())).ceil() as usize).clamp(8, 1024);
        let at = |t: f64| a + (b - a) * t;
        let mut roots = Vec::new();
        let mut t_prev = 0.0;
        let mut v_prev = self.eval(a);
        for k in 1..=n {
            let t = k as f64 / n as f64;
            let v = self.eval(at(t));
            // sign convention: φ = 0 counts as the plus side
            if (v_prev < 0.0) != (v < 0.0) {
                let (mut lo, mut hi) = (t_prev, t);
                let mut v_lo = v_prev;
                for _ in 0..80 {
                    let mid = 0.5 * (lo + hi);
                    let vm = self.eval(at(mid));
                    if (v_lo < 0.0) != (vm < 0.0) {
                        hi = mid;
                    } else {
                        lo = mid;
                        v_lo = vm;
                    }
                    if hi - lo < 1e-16 {
                        break;
                    }
                }
                roots.push(0.5 * (lo + hi));
            }
            t_prev = t;
            v_prev = v;
        }
        roots
    }
}

impl RegionClassifier for LevelSetField {
    fn region_of(&self, p: Point) -> RegionId {
        if self.eval(p) < 0.0 {
            REGION_MINUS
        } else {
            REGION_PLUS
        }
    }
}

// ---------------------------------------------------------------------------
// Exact circles
// ---------------------------------------------------------------------------

/// One circular interface between a region pair `(lo, hi)`; the unit normal
/// points toward the `hi` region, which lies outside the circle when
/// `hi_is_outside` is set.
#[derive(Debug, Clone, Copy)]
pub struct CircleInterface {
    pub center: Point,
    pub radius: f64,
    pub pair: (RegionId, RegionId),
    pub hi_is_outside: bool,
}

impl CircleInterface {
    pub fn signed_dist(&self, p: Point) -> f64 {
        p.dist(self.center) - self.radius
    }

    pub fn normal(&self, p: Point) -> Vec2 {
        let radial = (p - self.center).normalized();
        if self.hi_is_outside {
            radial
        } else {
            -radial
        }
    }

    pub fn at_angle(&self, theta: f64) -> Point {
        self.center + Point::new(theta.cos(), theta.sin()) * self.radius
    }
}

/// Exact interface representation: a set of circles plus a containment
/// priority that maps points to regions (the first listed circle strictly
/// containing the point wins; points on a circle count as outside it).
#[derive(Debug, Clone)]
pub struct ExactInterface {
    circles: Vec<CircleInterface>,
    priority: Vec<(usize, RegionId)>,
    fallback: RegionId,
}

impl ExactInterface {
    pub fn new(
        circles: Vec<CircleInterface>,
        priority: Vec<(usize, RegionId)>,
        fallback: RegionId,
    ) -> Self {
        ExactInterface { circles, priority, fallback }
    }

    pub fn circles(&self) -> &[CircleInterface] {
        &self.circles
    }
}

impl RegionClassifier for ExactInterface {
    fn region_of(&self, p: Point) -> RegionId {
        for &(k, region) in &self.priority {
            if self.circles[k].signed_dist(p) < 0.0 {
                return region;
            }
        }
        self.fallback
    }
}

// ---------------------------------------------------------------------------
// Unified representation
// ---------------------------------------------------------------------------

/// Interface representation used by the solver pipeline.
#[derive(Debug, Clone)]
pub enum InterfaceRep {
    LevelSet(LevelSetField),
    Exact(ExactInterface),
}

impl RegionClassifier for InterfaceRep {
    fn region_of(&self, p: Point) -> RegionId {
        match self {
            InterfaceRep::LevelSet(ls) => ls.region_of(p),
            InterfaceRep::Exact(ex) => ex.region_of(p),
        }
    }
}

// ---------------------------------------------------------------------------
// Pieces, segments, and quadrature
// ---------------------------------------------------------------------------

/// One quadrature sample on the interface.
#[derive(Debug, Clone, Copy)]
pub struct GammaSample {
    pub pos: Point,
    /// Unit normal pointing toward the `hi` region of the interface pair.
    pub normal: Vec2,
    /// Arc-length weight.
    pub weight: f64,
}

/// A connected piece of `Γ ∩ box` with curve quadrature samples.
#[derive(Debug, Clone)]
pub struct InterfaceSegment {
    pub interface_id: usize,
    pub samples: Vec<GammaSample>,
    pub chord: (Point, Point),
    pub arc_length: f64,
}

/// Exact description of a circular arc piece.
#[derive(Debug, Clone, Copy)]
struct ArcInfo {
    center: Point,
    radius: f64,
    t0: f64,
    /// `t1 > t0`; may exceed 2π when the arc wraps the angle cut.
    t1: f64,
}

/// A connected piece of one interface inside a convex region: an ordered
/// polyline, plus the exact angle range for circular arcs.
#[derive(Debug, Clone)]
pub struct PiecePath {
    pub interface_id: usize,
    pub points: Vec<Point>,
    pub closed: bool,
    arc: Option<ArcInfo>,
}

impl PiecePath {
    pub fn chord(&self) -> (Point, Point) {
        (self.points[0], *self.points.last().unwrap())
    }

    pub fn polyline_length(&self) -> f64 {
        self.points.windows(2).map(|w| w[0].dist(w[1])).sum()
    }

    /// Point at half the polyline arc length.
    pub fn midpoint(&self) -> Point {
        let half = 0.5 * self.polyline_length();
        let mut acc = 0.0;
        for w in self.points.windows(2) {
            let seg = w[0].dist(w[1]);
            if acc + seg >= half && seg > 0.0 {
                let t = (half - acc) / seg;
                return w[0] + (w[1] - w[0]) * t;
            }
            acc += seg;
        }
        *self.points.last().unwrap()
    }

    /// Axis-aligned bounding box; exact for circular arcs.
    pub fn bbox(&self) -> Rect {
        if let Some(arc) = self.arc {
            let mut pts = vec![
                arc.center + Point::new(arc.t0.cos(), arc.t0.sin()) * arc.radius,
                arc.center + Point::new(arc.t1.cos(), arc.t1.sin()) * arc.radius,
            ];
            let half_pi = std::f64::consts::FRAC_PI_2;
            let mut k = (arc.t0 / half_pi).ceil();
            while k * half_pi <= arc.t1 {
                let ang = k * half_pi;
                pts.push(arc.center + Point::new(ang.cos(), ang.sin()) * arc.radius);
                k += 1.0;
            }
            return Rect::bounding(pts);
        }
        Rect::bounding(self.points.iter().copied())
    }

    /// Distance from `p` to the sampled polyline.
    pub fn min_dist_to(&self, p: Point) -> f64 {
        self.points.iter().map(|&q| q.dist(p)).fold(f64::INFINITY, f64::min)
    }
}

impl InterfaceRep {
    /// Region pairs `(lo, hi)` per interface id; normals point toward `hi`.
    pub fn interface_pairs(&self) -> Vec<(RegionId, RegionId)> {
        match self {
            InterfaceRep::LevelSet(_) => vec![(REGION_MINUS, REGION_PLUS)],
            InterfaceRep::Exact(ex) => ex.circles.iter().map(|c| c.pair).collect(),
        }
    }

    pub fn n_interfaces(&self) -> usize {
        match self {
            InterfaceRep::LevelSet(_) => 1,
            InterfaceRep::Exact(ex) => ex.circles.len(),
        }
    }

    /// Unit normal (toward the `hi` region) at a point on the interface. For
    /// exact representations the nearest circle is used.
    pub fn normal_at(&self, p: Point) -> Result<Vec2> {
        match self {
            InterfaceRep::LevelSet(ls) => {
                let g = ls.grad(p);
                let n = g.norm();
                if n < 1e-300 {
                    return Err(Error::geometry("vanishing gradient: normal undefined"));
                }
                Ok(g * (1.0 / n))
            }
            InterfaceRep::Exact(ex) => {
                let c = ex
                    .circles
                    .iter()
                    .min_by(|a, b| {
                        a.signed_dist(p).abs().partial_cmp(&b.signed_dist(p).abs()).unwrap()
                    })
                    .ok_or_else(|| Error::geometry("empty exact interface"))?;
                Ok(c.normal(p))
            }
        }
    }

    /// Closest point of interface `interface_id` to `p`.
    ///
    /// Exact circles project radially in closed form. Level sets project onto
    /// `φ = 0` and then slide the foot point along the curve until `p − P₀` is
    /// parallel to the normal within an angular tolerance of 1e-6.
    pub fn closest_point(&self, interface_id: usize, p: Point) -> Result<Point> {
        match self {
            InterfaceRep::Exact(ex) => {
                let c = &ex.circles[interface_id];
                let d = p - c.center;
                let n = d.norm();
                if n < 1e-300 {
                    return Ok(c.at_angle(0.0));
                }
                Ok(c.center + d * (c.radius / n))
            }
            InterfaceRep::LevelSet(ls) => {
                if let Ok(x) = foot_point(ls, p, ls.project_to_zero(p)?, MAX_PROJECT_ITER) {
                    return Ok(x);
                }
                // The foot-point iteration converges at rate ~ curvature ×
                // distance and can stall near strongly curved sections. Seed
                // it from the nearest point of the traced pieces around `p`
                // instead, which lands on the correct branch.
                let r = 2.5 * ls.min_h().max(ls.grid().hx().max(ls.grid().hy()));
                let poly = ConvexPolygon::from_rect(&Rect::new(p.x - r, p.x + r, p.y - r, p.y + r));
                let pieces = level_set_pieces(ls, &poly)?;
                let seed = pieces
                    .iter()
                    .flat_map(|piece| piece.points.iter().copied())
                    .min_by(|a, b| a.dist(p).partial_cmp(&b.dist(p)).unwrap())
                    .ok_or_else(|| {
                        Error::geometry("no interface near the closest-point query")
                    })?;
                foot_point(ls, p, seed, 4 * MAX_PROJECT_ITER)
            }
        }
    }

    /// Closest interface point over all interfaces; returns the interface id.
    pub fn closest_point_any(&self, p: Point) -> Result<(usize, Point)> {
        let mut best: Option<(usize, Point, f64)> = None;
        for id in 0..self.n_interfaces() {
            let q = self.closest_point(id, p)?;
            let d = q.dist(p);
            if best.map_or(true, |(_, _, bd)| d < bd) {
                best = Some((id, q, d));
            }
        }
        best.map(|(id, q, _)| (id, q)).ok_or_else(|| Error::geometry("no interfaces"))
    }

    /// Connected pieces of interface `interface_id` inside a convex region.
    pub fn pieces_in(&self, interface_id: usize, poly: &ConvexPolygon) -> Result<Vec<PiecePath>> {
        match self {
            InterfaceRep::LevelSet(ls) => {
                debug_assert_eq!(interface_id, 0);
                level_set_pieces(ls, poly)
            }
            InterfaceRep::Exact(ex) => circle_pieces(&ex.circles[interface_id], interface_id, poly),
        }
    }

    /// Curve quadrature with `n_q` Gauss samples on one piece.
    pub fn piece_quadrature(&self, piece: &PiecePath, n_q: usize) -> Result<InterfaceSegment> {
        match self {
            InterfaceRep::Exact(_) => arc_quadrature(self, piece, n_q),
            InterfaceRep::LevelSet(ls) => chord_quadrature(ls, piece, n_q),
        }
    }

    /// All interface pieces inside a box, each with `n_q` Gauss samples.
    pub fn interface_in_box(&self, poly: &ConvexPolygon, n_q: usize) -> Result<Vec<InterfaceSegment>> {
        let mut out = Vec::new();
        for id in 0..self.n_interfaces() {
            for piece in self.pieces_in(id, poly)? {
                out.push(self.piece_quadrature(&piece, n_q)?);
            }
        }
        Ok(out)
    }

    /// Tangent direction angle at the arc-length midpoint of the piece of
    /// interface contained in the region, folded into `(-π/2, π/2]`. When
    /// several pieces are present the longest one is used.
    pub fn tangent_angle(&self, poly: &ConvexPolygon) -> Result<f64> {
        let mut best: Option<PiecePath> = None;
        for id in 0..self.n_interfaces() {
            for piece in self.pieces_in(id, poly)? {
                if best.as_ref().map_or(true, |b| piece.polyline_length() > b.polyline_length()) {
                    best = Some(piece);
                }
            }
        }
        let piece = best.ok_or_else(|| Error::invalid("no interface piece in region"))?;
        self.tangent_angle_of(&piece)
    }

    /// Tangent angle at the midpoint of a specific piece.
    pub fn tangent_angle_of(&self, piece: &PiecePath) -> Result<f64> {
        let mid = piece.midpoint();
        let n = match self {
            InterfaceRep::LevelSet(_) => self.normal_at(mid)?,
            InterfaceRep::Exact(ex) => ex.circles[piece.interface_id].normal(mid),
        };
        let t = n.perp();
        let mut theta = t.y.atan2(t.x);
        while theta <= -std::f64::consts::FRAC_PI_2 {
            theta += std::f64::consts::PI;
        }
        while theta > std::f64::consts::FRAC_PI_2 {
            theta -= std::f64::consts::PI;
        }
        Ok(theta)
    }
}

/// Slide a point on the zero set along the curve until `p − x` is parallel to
/// the normal within an angular tolerance of 1e-6. The sampled gradient
/// jumps across cell edges (O(h³) relative, larger where the curvature is
/// barely resolved), so near an edge the iteration settles into a flip-flop
/// at that floor instead of meeting the tolerance; the best iterate is then
/// accepted up to an angle of 1e-2, which shifts the foot point along the
/// curve by at most a percent of the query distance — far below what the
/// patch construction is sensitive to.
fn foot_point(ls: &LevelSetField, p: Point, start: Point, max_iter: usize) -> Result<Point> {
    let mut x = start;
    let mut best: Option<(f64, Point)> = None;
    for _ in 0..max_iter {
        let d = p - x;
        let dist = d.norm();
        if dist <= 1e-14 * ls.min_h() {
            return Ok(x);
        }
        let t = ls.grad(x).perp();
        let t_n = t.norm();
        if t_n < 1e-300 {
            return Err(Error::geometry("vanishing gradient in closest-point search"));
        }
        let t_hat = t * (1.0 / t_n);
        let slide = d.dot(t_hat);
        let rel = slide.abs() / dist;
        if rel <= 1e-6 {
            return Ok(x);
        }
        if best.map_or(true, |(b, _)| rel < b) {
            best = Some((rel, x));
        }
        x = ls.project_to_zero(x + t_hat * slide)?;
    }
    match best {
        Some((rel, x)) if rel <= 1e-2 => Ok(x),
        _ => Err(Error::geometry("closest-point iteration did not converge")),
    }
}

// ---------------------------------------------------------------------------
// Level-set piece extraction (trace and pair)
// ---------------------------------------------------------------------------

/// Crossings of the zero set with the polygon boundary, deduplicated.
fn boundary_crossings(ls: &LevelSetField, poly: &ConvexPolygon) -> Vec<Point> {
    let mut pts: Vec<Point> = Vec::new();
    let dedupe_tol = 1e-9 * poly.diameter();
    for (a, b) in poly.edges() {
        for t in ls.crossings_on_segment(a, b) {
            let p = a + (b - a) * t;
            if pts.iter().all(|&q| q.dist(p) > dedupe_tol) {
                pts.push(p);
            }
        }
    }
    pts
}

fn level_set_pieces(ls: &LevelSetField, poly: &ConvexPolygon) -> Result<Vec<PiecePath>> {
    let crossings = boundary_crossings(ls, poly);
    let diam = poly.diameter();
    let step = (ls.min_h() / 6.0).min(diam / 16.0);

    if crossings.is_empty() {
        return match find_interior_loop(ls, poly, step) {
            Some(loop_pts) => Ok(vec![PiecePath {
                interface_id: 0,
                points: loop_pts,
                closed: true,
                arc: None,
            }]),
            None => Ok(Vec::new()),
        };
    }

    // The traces are authoritative; boundary crossings only seed them and
    // terminate them (the march snaps onto the partner crossing as soon as it
    // comes within a step of it). A near-tangential graze can hide a crossing
    // pair from the edge sampling, in which case the traced exit has no
    // crossing to pair with and is refined onto the boundary instead.
    let mut consumed = vec![false; crossings.len()];
    let mut pieces: Vec<PiecePath> = Vec::new();
    for k in 0..crossings.len() {
        if consumed[k] {
            continue;
        }
        consumed[k] = true;
        let targets: Vec<(usize, Point)> = crossings
            .iter()
            .copied()
            .enumerate()
            .filter(|&(m, _)| !consumed[m])
            .collect();
        let (mut pts, snapped) = trace_from(ls, poly, crossings[k], step, &targets)?;
        match snapped {
            Some(m) => consumed[m] = true,
            None => {
                let exit = *pts.last().unwrap();
                let near = targets
                    .iter()
                    .map(|&(m, c)| (m, c.dist(exit)))
                    .min_by(|a, b| a.1.partial_cmp(&b.1).unwrap());
                match near {
                    Some((m, d)) if d <= 4.0 * step => {
                        consumed[m] = true;
                        *pts.last_mut().unwrap() = crossings[m];
                    }
                    _ => refine_exit_to_boundary(ls, poly, &mut pts, step)?,
                }
            }
        }
        // guard against tracing one piece from both of its endpoints
        let piece = PiecePath { interface_id: 0, points: pts, closed: false, arc: None };
        if pieces.iter().all(|p| p.midpoint().dist(piece.midpoint()) > 2.0 * step) {
            pieces.push(piece);
        }
    }
    Ok(pieces)
}

/// Replace the final (outside) trace point with the boundary intersection of
/// the curve, found by bisection along the last projected sub-step.
fn refine_exit_to_boundary(
    ls: &LevelSetField,
    poly: &ConvexPolygon,
    pts: &mut [Point],
    step: f64,
) -> Result<()> {
    let n = pts.len();
    if n < 2 {
        return Ok(());
    }
    let inside_tol = 0.25 * step;
    let p = pts[n - 2];
    let d = (pts[n - 1] - p).normalized();
    let mut lo = 0.0;
    let mut hi = p.dist(pts[n - 1]);
    for _ in 0..50 {
        let mid = 0.5 * (lo + hi);
        let q = ls.project_to_zero(p + d * mid)?;
        if poly.contains(q, inside_tol) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    pts[n - 1] = ls.project_to_zero(p + d * (0.5 * (lo + hi)))?;
    Ok(())
}

/// March along the zero set from a boundary point into the polygon until the
/// curve leaves it or reaches one of the `targets` (other boundary crossings).
/// Returns the ordered polyline including the endpoint, and the index of the
/// target reached, if any.
fn trace_from(
    ls: &LevelSetField,
    poly: &ConvexPolygon,
    start: Point,
    step: f64,
    targets: &[(usize, Point)],
) -> Result<(Vec<Point>, Option<usize>)> {
    let diam = poly.diameter();
    let max_steps = ((8.0 * diam / step).ceil() as usize).max(64);
    let inside_tol = 0.25 * step;

    let tangent = |p: Point, prev: Option<Vec2>| -> Result<Vec2> {
        let g = ls.grad(p);
        let n = g.norm();
        if n < 1e-300 {
            return Err(Error::geometry("vanishing gradient while tracing"));
        }
        let mut t = g.perp() * (1.0 / n);
        if let Some(d) = prev {
            if t.dot(d) < 0.0 {
                t = -t;
            }
        }
        Ok(t)
    };

    // initial direction: the tangent sign that moves into the polygon
    let t0 = tangent(start, None)?;
    let probe = step.min(0.05 * diam);
    let dir = if poly.contains(start + t0 * probe, inside_tol) { t0 } else { -t0 };

    let mut pts = vec![start];
    let mut p = start;
    let mut d = dir;
    for _ in 0..max_steps {
        let pred = p + d * step;
        let q = ls.project_to_zero(pred)?;
        if let Some(&(m, c)) = targets
            .iter()
            .find(|&&(_, c)| c.dist(q) <= step && (c - p).dot(d) > 0.0)
        {
            pts.push(c);
            return Ok((pts, Some(m)));
        }
        let t = tangent(q, Some(d))?;
        pts.push(q);
        if !poly.contains(q, inside_tol) {
            return Ok((pts, None));
        }
        d = t;
        p = q;
    }
    Err(Error::geometry("interface trace did not leave the region"))
}

/// Detect a closed loop of the zero set fully inside the polygon by scanning
/// a coarse lattice for a sign different from the boundary's.
fn find_interior_loop(ls: &LevelSetField, poly: &ConvexPolygon, step: f64) -> Option<Vec<Point>> {
    let bb = Rect::bounding(poly.vertices().iter().copied());
    let boundary_sign = ls.eval(poly.vertices()[0]) >= 0.0;
    let mut seed = None;
    'scan: for j in 0..8 {
        for i in 0..8 {
            let p = Point::new(
                bb.x_lo + bb.width() * (i as f64 + 0.5) / 8.0,
                bb.y_lo + bb.height() * (j as f64 + 0.5) / 8.0,
            );
            if poly.contains(p, 0.0) && (ls.eval(p) >= 0.0) != boundary_sign {
                seed = Some(p);
                break 'scan;
            }
        }
    }
    let seed = seed?;
    let start = ls.project_to_zero(seed).ok()?;
    // trace around the loop until we come back to the start
    let mut pts = vec![start];
    let mut p = start;
    let mut d = {
        let g = ls.grad(p);
        g.perp() * (1.0 / g.norm())
    };
    let max_steps = ((16.0 * poly.diameter() / step).ceil() as usize).max(64);
    for k in 0..max_steps {
        let q = ls.project_to_zero(p + d * step).ok()?;
        let g = ls.grad(q);
        let mut t = g.perp() * (1.0 / g.norm());
        if t.dot(d) < 0.0 {
            t = -t;
        }
        pts.push(q);
        if k > 3 && q.dist(start) < 0.75 * step {
            pts.push(start);
            return Some(pts);
        }
        p = q;
        d = t;
    }
    None
}

// ---------------------------------------------------------------------------
// Exact circle piece extraction
// ---------------------------------------------------------------------------

fn circle_pieces(c: &CircleInterface, interface_id: usize, poly: &ConvexPolygon) -> Result<Vec<PiecePath>> {
    use std::f64::consts::TAU;
    let mut angles: Vec<f64> = Vec::new();
    for (a, b) in poly.edges() {
        // |a + t (b-a) - center|^2 = r^2
        let d = b - a;
        let m = a - c.center;
        let qa = d.dot(d);
        let qb = 2.0 * m.dot(d);
        let qc = m.dot(m) - c.radius * c.radius;
        let disc = qb * qb - 4.0 * qa * qc;
        if disc <= 0.0 || qa == 0.0 {
            continue;
        }
        let sq = disc.sqrt();
        for t in [(-qb - sq) / (2.0 * qa), (-qb + sq) / (2.0 * qa)] {
            if (0.0..=1.0).contains(&t) {
                let p = a + d * t;
                let rel = p - c.center;
                angles.push(rel.y.atan2(rel.x).rem_euclid(TAU));
            }
        }
    }
    angles.sort_by(|x, y| x.partial_cmp(y).unwrap());
    angles.dedup_by(|x, y| (*x - *y).abs() < 1e-12);
    if angles.len() >= 2 && (angles[angles.len() - 1] - angles[0] - TAU).abs() < 1e-12 {
        angles.pop();
    }

    let mut out = Vec::new();
    if angles.is_empty() {
        // either fully inside, fully outside, or no overlap
        if poly.contains(c.at_angle(0.0), 0.0) {
            out.push(arc_piece(c, interface_id, 0.0, TAU, true));
        }
        return Ok(out);
    }
    let n = angles.len();
    for k in 0..n {
        let t0 = angles[k];
        let t1 = if k + 1 < n { angles[k + 1] } else { angles[0] + TAU };
        if t1 - t0 < 1e-12 {
            continue;
        }
        let mid = c.at_angle(0.5 * (t0 + t1));
        if poly.contains(mid, 0.0) {
            out.push(arc_piece(c, interface_id, t0, t1, false));
        }
    }
    Ok(out)
}

fn arc_piece(c: &CircleInterface, interface_id: usize, t0: f64, t1: f64, closed: bool) -> PiecePath {
    let n = (((t1 - t0) / 0.05).ceil() as usize).clamp(16, 512);
    let points = (0..=n)
        .map(|k| c.at_angle(t0 + (t1 - t0) * k as f64 / n as f64))
        .collect();
    PiecePath {
        interface_id,
        points,
        closed,
        arc: Some(ArcInfo { center: c.center, radius: c.radius, t0, t1 }),
    }
}

// ---------------------------------------------------------------------------
// Curve quadrature
// ---------------------------------------------------------------------------

/// Exact Gauss rule in the arc angle for circular pieces.
fn arc_quadrature(rep: &InterfaceRep, piece: &PiecePath, n_q: usize) -> Result<InterfaceSegment> {
    let arc = piece.arc.expect("exact pieces carry arc data");
    let circle = match rep {
        InterfaceRep::Exact(ex) => &ex.circles()[piece.interface_id],
        _ => unreachable!("arc quadrature is only used for exact interfaces"),
    };
    let rule = gauss_1d(n_q);
    let span = arc.t1 - arc.t0;
    let mut samples = Vec::with_capacity(n_q);
    for (&t, &w) in rule.nodes.iter().zip(&rule.weights) {
        let theta = arc.t0 + span * t;
        let pos = circle.at_angle(theta);
        samples.push(GammaSample { pos, normal: circle.normal(pos), weight: w * span * arc.radius });
    }
    Ok(InterfaceSegment {
        interface_id: piece.interface_id,
        samples,
        chord: piece.chord(),
        arc_length: span * arc.radius,
    })
}

/// Level-set quadrature: Gauss nodes on the chord, projected onto `φ = 0`
/// along `∇φ`; arc-length weights from a finite-difference Jacobian of the
/// chord-to-curve map. Pieces too strongly bent for their chord to
/// parameterize them (arc/chord above 1.05, or closed loops) are split at the
/// arc-length midpoint and the halves integrated recursively.
fn chord_quadrature(ls: &LevelSetField, piece: &PiecePath, n_q: usize) -> Result<InterfaceSegment> {
    let mut samples = Vec::new();
    chord_panels(ls, &piece.points, n_q, 0, &mut samples)?;
    let arc_length = samples.iter().map(|s: &GammaSample| s.weight).sum();
    Ok(InterfaceSegment {
        interface_id: piece.interface_id,
        samples,
        chord: piece.chord(),
        arc_length,
    })
}

fn polyline_len(pts: &[Point]) -> f64 {
    pts.windows(2).map(|w| w[0].dist(w[1])).sum()
}

fn chord_panels(
    ls: &LevelSetField,
    pts: &[Point],
    n_q: usize,
    depth: usize,
    out: &mut Vec<GammaSample>,
) -> Result<()> {
    let a = pts[0];
    let b = *pts.last().unwrap();
    let chord_len = a.dist(b);
    let arc_len = polyline_len(pts);
    if arc_len < 1e-13 * ls.min_h() {
        return Ok(()); // degenerate graze contributes nothing
    }
    if (arc_len > 1.05 * chord_len) && depth < 6 && pts.len() >= 3 {
        // split at the vertex nearest to half the arc length
        let half = 0.5 * arc_len;
        let mut acc = 0.0;
        let mut cut = 1;
        for (k, w) in pts.windows(2).enumerate() {
            acc += w[0].dist(w[1]);
            if acc >= half {
                cut = (k + 1).min(pts.len() - 2).max(1);
                break;
            }
        }
        chord_panels(ls, &pts[..=cut], n_q, depth + 1, out)?;
        chord_panels(ls, &pts[cut..], n_q, depth + 1, out)?;
        return Ok(());
    }

    let rule = gauss_1d(n_q);
    let map = |s: f64| ls.project_to_zero(a + (b - a) * s);
    let ds = 1e-5;
    for (&s, &w) in rule.nodes.iter().zip(&rule.weights) {
        let pos = map(s)?;
        let s_m = (s - ds).max(0.0);
        let s_p = (s + ds).min(1.0);
        let x_m = map(s_m)?;
        let x_p = map(s_p)?;
        let jac = x_p.dist(x_m) / (s_p - s_m);
        let normal = ls.grad(pos).normalized();
        out.push(GammaSample { pos, normal, weight: w * jac });
    }
    Ok(())
}
