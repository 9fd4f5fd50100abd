//! Polynomial bases and quadrature.
//!
//! Houses the 1D Hermite cubics, the cell-based bicubic interpolant (12
//! degrees of freedom: corner values and gradients, with mixed derivatives
//! synthesized from the gradients), the modified bilinear interpolant used by
//! the second-order scheme, Gauss–Legendre rules, and a few small geometric
//! primitives (points, rectangles, rotated frames, convex polygons) shared by
//! the rest of the crate.

use crate::{Error, Result};

// ---------------------------------------------------------------------------
// Basic geometry
// ---------------------------------------------------------------------------

/// A point in the plane. Also used as a 2D vector.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

/// Alias used where a value is a direction or displacement rather than a location.
pub type Vec2 = Point;

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    pub fn dot(self, o: Point) -> f64 {
        self.x * o.x + self.y * o.y
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    /// Counterclockwise perpendicular (rotation by +90 degrees).
    pub fn perp(self) -> Point {
        Point::new(-self.y, self.x)
    }

    pub fn normalized(self) -> Point {
        let n = self.norm();
        Point::new(self.x / n, self.y / n)
    }

    pub fn dist(self, o: Point) -> f64 {
        (self - o).norm()
    }
}

impl std::ops::Add for Point {
    type Output = Point;
    fn add(self, o: Point) -> Point {
        Point::new(self.x + o.x, self.y + o.y)
    }
}

impl std::ops::Sub for Point {
    type Output = Point;
    fn sub(self, o: Point) -> Point {
        Point::new(self.x - o.x, self.y - o.y)
    }
}

impl std::ops::Mul<f64> for Point {
    type Output = Point;
    fn mul(self, s: f64) -> Point {
        Point::new(self.x * s, self.y * s)
    }
}

impl std::ops::Neg for Point {
    type Output = Point;
    fn neg(self) -> Point {
        Point::new(-self.x, -self.y)
    }
}

/// Axis-aligned rectangle `[x_lo, x_hi] × [y_lo, y_hi]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rect {
    pub x_lo: f64,
    pub x_hi: f64,
    pub y_lo: f64,
    pub y_hi: f64,
}

impl Rect {
    pub fn new(x_lo: f64, x_hi: f64, y_lo: f64, y_hi: f64) -> Self {
        Rect { x_lo, x_hi, y_lo, y_hi }
    }

    pub fn width(&self) -> f64 {
        self.x_hi - self.x_lo
    }

    pub fn height(&self) -> f64 {
        self.y_hi - self.y_lo
    }

    pub fn center(&self) -> Point {
        Point::new(0.5 * (self.x_lo + self.x_hi), 0.5 * (self.y_lo + self.y_hi))
    }

    pub fn contains(&self, p: Point, tol: f64) -> bool {
        p.x >= self.x_lo - tol && p.x <= self.x_hi + tol && p.y >= self.y_lo - tol && p.y <= self.y_hi + tol
    }

    pub fn is_degenerate(&self) -> bool {
        !(self.width() > 0.0 && self.height() > 0.0)
    }

    /// Smallest rectangle containing `self` and `other`.
    pub fn union(&self, other: &Rect) -> Rect {
        Rect::new(
            self.x_lo.min(other.x_lo),
            self.x_hi.max(other.x_hi),
            self.y_lo.min(other.y_lo),
            self.y_hi.max(other.y_hi),
        )
    }

    /// Bounding box of a point set. Panics on an empty iterator.
    pub fn bounding(points: impl IntoIterator<Item = Point>) -> Rect {
        let mut it = points.into_iter();
        let first = it.next().expect("bounding box of an empty point set");
        let mut r = Rect::new(first.x, first.x, first.y, first.y);
        for p in it {
            r.x_lo = r.x_lo.min(p.x);
            r.x_hi = r.x_hi.max(p.x);
            r.y_lo = r.y_lo.min(p.y);
            r.y_hi = r.y_hi.max(p.y);
        }
        r
    }
}

/// A rotated orthonormal frame: local coordinates are obtained by translating
/// to `origin` and rotating by `-theta`.
#[derive(Debug, Clone, Copy)]
pub struct Frame {
    pub origin: Point,
    cos_t: f64,
    sin_t: f64,
    theta: f64,
}

impl Frame {
    pub fn new(origin: Point, theta: f64) -> Self {
        Frame { origin, cos_t: theta.cos(), sin_t: theta.sin(), theta }
    }

    pub fn axis_aligned(origin: Point) -> Self {
        Frame { origin, cos_t: 1.0, sin_t: 0.0, theta: 0.0 }
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn to_local(&self, p: Point) -> Point {
        let d = p - self.origin;
        Point::new(self.cos_t * d.x + self.sin_t * d.y, -self.sin_t * d.x + self.cos_t * d.y)
    }

    pub fn to_world(&self, p: Point) -> Point {
        Point::new(
            self.origin.x + self.cos_t * p.x - self.sin_t * p.y,
            self.origin.y + self.sin_t * p.x + self.cos_t * p.y,
        )
    }

    /// Rotate a local vector into world coordinates (no translation).
    pub fn vec_to_world(&self, v: Vec2) -> Vec2 {
        Point::new(self.cos_t * v.x - self.sin_t * v.y, self.sin_t * v.x + self.cos_t * v.y)
    }
}

/// Convex polygon with counterclockwise vertices.
#[derive(Debug, Clone)]
pub struct ConvexPolygon {
    verts: Vec<Point>,
}

impl ConvexPolygon {
    pub fn new(verts: Vec<Point>) -> Self {
        debug_assert!(verts.len() >= 3);
        ConvexPolygon { verts }
    }

    pub fn from_rect(r: &Rect) -> Self {
        ConvexPolygon::new(vec![
            Point::new(r.x_lo, r.y_lo),
            Point::new(r.x_hi, r.y_lo),
            Point::new(r.x_hi, r.y_hi),
            Point::new(r.x_lo, r.y_hi),
        ])
    }

    pub fn vertices(&self) -> &[Point] {
        &self.verts
    }

    pub fn edges(&self) -> impl Iterator<Item = (Point, Point)> + '_ {
        let n = self.verts.len();
        (0..n).map(move |k| (self.verts[k], self.verts[(k + 1) % n]))
    }

    /// Signed inclusion test: `tol > 0` accepts points slightly outside.
    pub fn contains(&self, p: Point, tol: f64) -> bool {
        self.edges().all(|(a, b)| {
            let e = b - a;
            let cross = e.x * (p.y - a.y) - e.y * (p.x - a.x);
            cross >= -tol * e.norm()
        })
    }

    pub fn diameter(&self) -> f64 {
        let mut d: f64 = 0.0;
        for (i, &a) in self.verts.iter().enumerate() {
            for &b in &self.verts[i + 1..] {
                d = d.max(a.dist(b));
            }
        }
        d
    }
}

// ---------------------------------------------------------------------------
// Hermite cubic basis
// ---------------------------------------------------------------------------

/// Value of the 1D Hermite cubic `w_α^v` on the unit interval.
///
/// `alpha` selects value (0) or derivative (1) interpolation, `v` the endpoint.
/// With `f(x) = 1 - 3x² + 2x³` and `g(x) = x(1-x)²`:
/// `w_0^0 = f(x)`, `w_0^1 = f(1-x)`, `w_1^0 = g(x)`, `w_1^1 = -g(1-x)`.
pub fn hermite_w(alpha: u8, v: u8, x: f64) -> f64 {
    hermite_w_deriv(alpha, v, x, 0)
}

/// `deriv`-th derivative (0..=2) of `w_α^v` at `x`.
pub fn hermite_w_deriv(alpha: u8, v: u8, x: f64, deriv: u8) -> f64 {
    debug_assert!(alpha < 2 && v < 2 && deriv <= 2);
    fn f(x: f64, d: u8) -> f64 {
        match d {
            0 => 1.0 + x * x * (2.0 * x - 3.0),
            1 => 6.0 * x * (x - 1.0),
            _ => 12.0 * x - 6.0,
        }
    }
    fn g(x: f64, d: u8) -> f64 {
        match d {
            0 => x * (1.0 - x) * (1.0 - x),
            1 => 1.0 - 4.0 * x + 3.0 * x * x,
            _ => 6.0 * x - 4.0,
        }
    }
    let sign = if deriv % 2 == 1 { -1.0 } else { 1.0 };
    match (alpha, v) {
        (0, 0) => f(x, deriv),
        (0, 1) => sign * f(1.0 - x, deriv),
        (1, 0) => g(x, deriv),
        (1, 1) => -sign * g(1.0 - x, deriv),
        _ => unreachable!(),
    }
}

// ---------------------------------------------------------------------------
// Bicubic interpolant
// ---------------------------------------------------------------------------

/// Bicubic Hermite interpolant on a rectangular cell.
///
/// The 16 nodal parameters are stored in the scaled-derivative convention:
/// parameter `(v, α)` is `Δx^{α₁} Δy^{α₂} ∂^α φ` at corner `v`, so every entry
/// carries the units of `φ` and the local systems built on top stay well
/// scaled. Corners are indexed `v = v₁ + 2 v₂`, multi-indices `α = α₁ + 2 α₂`.
#[derive(Debug, Clone)]
pub struct Bicubic {
    origin: Point,
    dx: f64,
    dy: f64,
    /// `coef[v][alpha]`, scaled-derivative convention.
    coef: [[f64; 4]; 4],
}

/// Synthesize the scaled mixed derivatives from the 12 cell data.
///
/// At corner `(v₁, v₂)` the physical mixed derivative is estimated from the
/// gradient differences across the cell and the cross difference of the
/// corner values; in scaled form
/// `m[v] = (s_y(1,v₂) - s_y(0,v₂)) + (s_x(v₁,1) - s_x(v₁,0)) - (p₁₁ - p₁₀ - p₀₁ + p₀₀)`.
/// The estimate is exact for every cubic polynomial (and for `x³y`, `x y³`),
/// so the 12-parameter interpolant retains the full fourth-order accuracy of
/// the 16-parameter bicubic while using only local cell data.
fn cell_based_mixed(values: &[f64; 4], sx: &[f64; 4], sy: &[f64; 4]) -> [f64; 4] {
    let idx = |v1: usize, v2: usize| v1 + 2 * v2;
    let cross = values[idx(1, 1)] - values[idx(1, 0)] - values[idx(0, 1)] + values[idx(0, 0)];
    let mut m = [0.0; 4];
    for v1 in 0..2 {
        for v2 in 0..2 {
            m[idx(v1, v2)] =
                (sy[idx(1, v2)] - sy[idx(0, v2)]) + (sx[idx(v1, 1)] - sx[idx(v1, 0)]) - cross;
        }
    }
    m
}

impl Bicubic {
    /// Build the 12-parameter cell-based interpolant from corner values and
    /// physical gradients. Corner order: `(0,0), (1,0), (0,1), (1,1)`.
    pub fn from_cell_data(cell: Rect, values: [f64; 4], gradients: [Vec2; 4]) -> Result<Bicubic> {
        if cell.is_degenerate() {
            return Err(Error::invalid("degenerate bicubic cell"));
        }
        let (dx, dy) = (cell.width(), cell.height());
        let mut sx = [0.0; 4];
        let mut sy = [0.0; 4];
        for v in 0..4 {
            sx[v] = dx * gradients[v].x;
            sy[v] = dy * gradients[v].y;
        }
        let m = cell_based_mixed(&values, &sx, &sy);
        Ok(Self::from_scaled(cell, values, sx, sy, m))
    }

    /// Build from full corner data including physical mixed derivatives.
    pub fn from_full_data(
        cell: Rect,
        values: [f64; 4],
        gradients: [Vec2; 4],
        mixed: [f64; 4],
    ) -> Result<Bicubic> {
        if cell.is_degenerate() {
            return Err(Error::invalid("degenerate bicubic cell"));
        }
        let (dx, dy) = (cell.width(), cell.height());
        let mut sx = [0.0; 4];
        let mut sy = [0.0; 4];
        let mut m = [0.0; 4];
        for v in 0..4 {
            sx[v] = dx * gradients[v].x;
            sy[v] = dy * gradients[v].y;
            m[v] = dx * dy * mixed[v];
        }
        Ok(Self::from_scaled(cell, values, sx, sy, m))
    }

    /// Build directly from scaled parameters (values, scaled gradients, scaled
    /// mixed derivatives).
    pub fn from_scaled(cell: Rect, values: [f64; 4], sx: [f64; 4], sy: [f64; 4], m: [f64; 4]) -> Bicubic {
        let mut coef = [[0.0; 4]; 4];
        for v in 0..4 {
            coef[v][0] = values[v];
            coef[v][1] = sx[v];
            coef[v][2] = sy[v];
            coef[v][3] = m[v];
        }
        Bicubic { origin: Point::new(cell.x_lo, cell.y_lo), dx: cell.width(), dy: cell.height(), coef }
    }

    /// The 12-parameter basis interpolant with a one in the given slot.
    /// `slot < 4` is a corner value, `slot in 4..8` a scaled x-derivative,
    /// `slot in 8..12` a scaled y-derivative; mixed derivatives follow from
    /// the cell-based rule.
    pub fn unit_basis(cell: Rect, slot: usize) -> Bicubic {
        debug_assert!(slot < 12);
        let mut values = [0.0; 4];
        let mut sx = [0.0; 4];
        let mut sy = [0.0; 4];
        match slot / 4 {
            0 => values[slot % 4] = 1.0,
            1 => sx[slot % 4] = 1.0,
            _ => sy[slot % 4] = 1.0,
        }
        let m = cell_based_mixed(&values, &sx, &sy);
        Self::from_scaled(cell, values, sx, sy, m)
    }

    pub fn cell(&self) -> Rect {
        Rect::new(self.origin.x, self.origin.x + self.dx, self.origin.y, self.origin.y + self.dy)
    }

    /// Evaluate `∂^(dx_order, dy_order) H` at `p` (physical derivatives).
    /// Evaluation outside the cell extrapolates the polynomial.
    pub fn eval_deriv(&self, p: Point, dx_order: u8, dy_order: u8) -> Result<f64> {
        if dx_order > 2 || dy_order > 2 {
            return Err(Error::invalid(format!(
                "bicubic derivative order ({dx_order},{dy_order}) exceeds (2,2)"
            )));
        }
        let xb = (p.x - self.origin.x) / self.dx;
        let yb = (p.y - self.origin.y) / self.dy;
        let mut wx = [[0.0; 2]; 2]; // [alpha][v]
        let mut wy = [[0.0; 2]; 2];
        for a in 0..2u8 {
            for v in 0..2u8 {
                wx[a as usize][v as usize] = hermite_w_deriv(a, v, xb, dx_order);
                wy[a as usize][v as usize] = hermite_w_deriv(a, v, yb, dy_order);
            }
        }
        let mut acc = 0.0;
        for v2 in 0..2 {
            for v1 in 0..2 {
                let v = v1 + 2 * v2;
                for a2 in 0..2 {
                    for a1 in 0..2 {
                        acc += self.coef[v][a1 + 2 * a2] * wx[a1][v1] * wy[a2][v2];
                    }
                }
            }
        }
        Ok(acc / self.dx.powi(dx_order as i32) / self.dy.powi(dy_order as i32))
    }

    pub fn eval(&self, p: Point) -> f64 {
        self.eval_deriv(p, 0, 0).expect("order (0,0) is always valid")
    }

    pub fn grad(&self, p: Point) -> Vec2 {
        Point::new(
            self.eval_deriv(p, 1, 0).expect("order (1,0) is always valid"),
            self.eval_deriv(p, 0, 1).expect("order (0,1) is always valid"),
        )
    }

    pub fn laplacian(&self, p: Point) -> f64 {
        self.eval_deriv(p, 2, 0).expect("order (2,0) is always valid")
            + self.eval_deriv(p, 0, 2).expect("order (0,2) is always valid")
    }
}

// ---------------------------------------------------------------------------
// Bilinear interpolants
// ---------------------------------------------------------------------------

/// Bilinear interpolant augmented with a quadratic term whose Laplacian equals
/// the stored mean-Laplacian parameter:
/// `H_m = H_s - ¼ [w⁰(x̄)w¹(x̄)Δx² + w⁰(ȳ)w¹(ȳ)Δy²] · κ`, with `∇²H_m ≡ κ`.
/// A zero `mean_laplacian` recovers the standard bilinear interpolant.
#[derive(Debug, Clone)]
pub struct ModifiedBilinear {
    origin: Point,
    dx: f64,
    dy: f64,
    /// Corner values, order `(0,0), (1,0), (0,1), (1,1)`.
    corners: [f64; 4],
    /// Mean Laplacian κ (units of φ per length squared).
    mean_laplacian: f64,
}

impl ModifiedBilinear {
    pub fn new(cell: Rect, corners: [f64; 4], mean_laplacian: f64) -> Result<ModifiedBilinear> {
        if cell.is_degenerate() {
            return Err(Error::invalid("degenerate bilinear cell"));
        }
        Ok(ModifiedBilinear {
            origin: Point::new(cell.x_lo, cell.y_lo),
            dx: cell.width(),
            dy: cell.height(),
            corners,
            mean_laplacian,
        })
    }

    pub fn eval_deriv(&self, p: Point, dx_order: u8, dy_order: u8) -> Result<f64> {
        if dx_order > 2 || dy_order > 2 {
            return Err(Error::invalid(format!(
                "bilinear derivative order ({dx_order},{dy_order}) exceeds (2,2)"
            )));
        }
        // 1D linear hat factors and the quadratic bump q(t) = t(1-t), with
        // derivatives taken in the unit variable.
        fn lin(v: usize, t: f64, d: u8) -> f64 {
            match (v, d) {
                (0, 0) => 1.0 - t,
                (0, 1) => -1.0,
                (1, 0) => t,
                (1, 1) => 1.0,
                _ => 0.0,
            }
        }
        fn bump(t: f64, d: u8) -> f64 {
            match d {
                0 => t * (1.0 - t),
                1 => 1.0 - 2.0 * t,
                _ => -2.0,
            }
        }
        let xb = (p.x - self.origin.x) / self.dx;
        let yb = (p.y - self.origin.y) / self.dy;
        let mut acc = 0.0;
        for v2 in 0..2 {
            for v1 in 0..2 {
                acc += self.corners[v1 + 2 * v2] * lin(v1, xb, dx_order) * lin(v2, yb, dy_order);
            }
        }
        // The x-bump depends on x alone, so it only contributes when all the
        // requested y-derivatives are zero (and symmetrically for y).
        let mut quad = 0.0;
        if dy_order == 0 {
            quad += bump(xb, dx_order) * self.dx * self.dx;
        }
        if dx_order == 0 {
            quad += bump(yb, dy_order) * self.dy * self.dy;
        }
        acc -= 0.25 * self.mean_laplacian * quad;
        Ok(acc / self.dx.powi(dx_order as i32) / self.dy.powi(dy_order as i32))
    }

    pub fn eval(&self, p: Point) -> f64 {
        self.eval_deriv(p, 0, 0).expect("order (0,0) is always valid")
    }

    pub fn grad(&self, p: Point) -> Vec2 {
        Point::new(
            self.eval_deriv(p, 1, 0).expect("order (1,0) is always valid"),
            self.eval_deriv(p, 0, 1).expect("order (0,1) is always valid"),
        )
    }

    pub fn laplacian(&self, p: Point) -> f64 {
        self.eval_deriv(p, 2, 0).expect("order (2,0) is always valid")
            + self.eval_deriv(p, 0, 2).expect("order (0,2) is always valid")
    }
}

// ---------------------------------------------------------------------------
// Gauss-Legendre quadrature
// ---------------------------------------------------------------------------

/// Gauss–Legendre rule on the reference interval `[0, 1]`.
#[derive(Debug, Clone)]
pub struct Quad1 {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

/// Tensor Gauss–Legendre rule on the reference square `[0, 1]²` (n × n points).
#[derive(Debug, Clone)]
pub struct Quad2 {
    pub nodes: Vec<Point>,
    pub weights: Vec<f64>,
}

/// Reference geometry selector for [`gauss_rule`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QuadGeometry {
    LineSegment,
    Rectangle,
}

/// Either flavor of reference rule.
#[derive(Debug, Clone)]
pub enum QuadratureRule {
    Line(Quad1),
    Square(Quad2),
}

/// n-point Gauss–Legendre nodes/weights on `[0, 1]`.
///
/// Roots of the Legendre polynomial by Newton iteration from the Chebyshev
/// initial guesses; exact for polynomials of degree `2n - 1`.
pub fn gauss_1d(n: usize) -> Quad1 {
    assert!(n >= 1);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            // Legendre recurrence for P_n(x) and P_n'(x).
            let mut p0 = 1.0;
            let mut p1 = x;
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let step = p1 / dp;
            x -= step;
            if step.abs() < 1e-16 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        // map [-1,1] -> [0,1]; roots come out in decreasing order
        nodes[i] = 0.5 * (1.0 - x);
        nodes[n - 1 - i] = 0.5 * (1.0 + x);
        weights[i] = 0.5 * w;
        weights[n - 1 - i] = 0.5 * w;
    }
    Quad1 { nodes, weights }
}

/// n × n tensor rule on the unit square.
pub fn gauss_square(n: usize) -> Quad2 {
    let q = gauss_1d(n);
    let mut nodes = Vec::with_capacity(n * n);
    let mut weights = Vec::with_capacity(n * n);
    for j in 0..n {
        for i in 0..n {
            nodes.push(Point::new(q.nodes[i], q.nodes[j]));
            weights.push(q.weights[i] * q.weights[j]);
        }
    }
    Quad2 { nodes, weights }
}

/// Reference rule for the requested geometry: `n` points on a segment, or the
/// `n × n` tensor rule on a rectangle. Map affinely to the actual domain.
pub fn gauss_rule(n: usize, geometry: QuadGeometry) -> QuadratureRule {
    match geometry {
        QuadGeometry::LineSegment => QuadratureRule::Line(gauss_1d(n)),
        QuadGeometry::Rectangle => QuadratureRule::Square(gauss_square(n)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn hermite_endpoint_values() {
        assert_eq!(hermite_w(0, 0, 0.0), 1.0);
        assert_eq!(hermite_w(0, 0, 1.0), 0.0);
        assert_abs_diff_eq!(hermite_w(0, 0, 0.5), 0.5);
        assert_abs_diff_eq!(hermite_w(1, 0, 0.5), 0.125);
        // Hermite derivative conditions at both endpoints
        assert_abs_diff_eq!(hermite_w_deriv(1, 0, 0.0, 1), 1.0);
        assert_abs_diff_eq!(hermite_w_deriv(1, 1, 1.0, 1), 1.0);
        assert_abs_diff_eq!(hermite_w_deriv(0, 0, 0.0, 1), 0.0);
        assert_abs_diff_eq!(hermite_w_deriv(0, 1, 1.0, 1), 0.0);
    }

    fn sample_corners(cell: &Rect, f: impl Fn(f64, f64) -> (f64, f64, f64)) -> ([f64; 4], [Vec2; 4]) {
        let xs = [cell.x_lo, cell.x_hi, cell.x_lo, cell.x_hi];
        let ys = [cell.y_lo, cell.y_lo, cell.y_hi, cell.y_hi];
        let mut values = [0.0; 4];
        let mut grads = [Point::default(); 4];
        for v in 0..4 {
            let (val, gx, gy) = f(xs[v], ys[v]);
            values[v] = val;
            grads[v] = Point::new(gx, gy);
        }
        (values, grads)
    }

    #[test]
    fn bicubic_reproduces_xy_exactly() {
        let cell = Rect::new(0.0, 1.0, 0.0, 1.0);
        let (values, grads) = sample_corners(&cell, |x, y| (x * y, y, x));
        let b = Bicubic::from_cell_data(cell, values, grads).unwrap();
        for &(x, y) in &[(0.3, 0.7), (0.05, 0.95), (0.5, 0.5), (1.0, 0.25)] {
            assert_abs_diff_eq!(b.eval(Point::new(x, y)), x * y, epsilon = 1e-14);
        }
    }

    #[test]
    fn bicubic_partition_of_unity() {
        let cell = Rect::new(-0.2, 0.9, 0.4, 1.3);
        let (values, grads) = sample_corners(&cell, |_, _| (1.0, 0.0, 0.0));
        let b = Bicubic::from_cell_data(cell, values, grads).unwrap();
        for &(x, y) in &[(-0.2, 0.4), (0.3, 0.7), (0.85, 1.29), (0.1, 1.0)] {
            assert_abs_diff_eq!(b.eval(Point::new(x, y)), 1.0, epsilon = 1e-14);
        }
    }

    #[test]
    fn bicubic_corner_interpolation() {
        let cell = Rect::new(0.0, 0.5, 0.0, 0.25);
        let f = |x: f64, y: f64| ((x + 2.0 * y).sin(), (x + 2.0 * y).cos(), 2.0 * (x + 2.0 * y).cos());
        let (values, grads) = sample_corners(&cell, f);
        let b = Bicubic::from_cell_data(cell, values, grads).unwrap();
        let corners = [
            Point::new(0.0, 0.0),
            Point::new(0.5, 0.0),
            Point::new(0.0, 0.25),
            Point::new(0.5, 0.25),
        ];
        for (v, &c) in corners.iter().enumerate() {
            assert_abs_diff_eq!(b.eval(c), values[v], epsilon = 1e-13);
            assert_abs_diff_eq!(b.eval_deriv(c, 1, 0).unwrap(), grads[v].x, epsilon = 1e-12);
            assert_abs_diff_eq!(b.eval_deriv(c, 0, 1).unwrap(), grads[v].y, epsilon = 1e-12);
        }
    }

    #[test]
    fn bicubic_laplacian_of_quadratic_is_constant() {
        // x² + y² has zero mixed derivative, so exact corner data (including
        // the mixed slot) lies in the cell-based span.
        let cell = Rect::new(0.3, 1.1, -0.4, 0.9);
        let (values, grads) = sample_corners(&cell, |x, y| (x * x + y * y, 2.0 * x, 2.0 * y));
        let b = Bicubic::from_cell_data(cell, values, grads).unwrap();
        for &(x, y) in &[(0.4, 0.0), (0.9, 0.5), (0.31, 0.89), (0.7, -0.39)] {
            assert_abs_diff_eq!(b.laplacian(Point::new(x, y)), 4.0, epsilon = 1e-11);
        }
    }

    #[test]
    fn bicubic_interpolation_is_fourth_order() {
        use std::f64::consts::PI;
        let f = |x: f64, y: f64| {
            (
                (PI * x).sin() * (PI * y).sin(),
                PI * (PI * x).cos() * (PI * y).sin(),
                PI * (PI * x).sin() * (PI * y).cos(),
            )
        };
        let max_err = |h: f64| -> f64 {
            let cell = Rect::new(0.3, 0.3 + h, 0.4, 0.4 + h);
            let (values, grads) = sample_corners(&cell, f);
            let b = Bicubic::from_cell_data(cell, values, grads).unwrap();
            let mut err: f64 = 0.0;
            for i in 0..=8 {
                for j in 0..=8 {
                    let p = Point::new(cell.x_lo + h * i as f64 / 8.0, cell.y_lo + h * j as f64 / 8.0);
                    err = err.max((b.eval(p) - f(p.x, p.y).0).abs());
                }
            }
            err
        };
        let e1 = max_err(0.2);
        let e2 = max_err(0.1);
        let e3 = max_err(0.05);
        let r1 = (e1 / e2).log2();
        let r2 = (e2 / e3).log2();
        assert!(r1 > 3.5 && r2 > 3.5, "observed orders {r1:.2}, {r2:.2}");
    }

    #[test]
    fn bicubic_rejects_high_derivatives_and_degenerate_cells() {
        let cell = Rect::new(0.0, 1.0, 0.0, 1.0);
        let b = Bicubic::from_cell_data(cell, [0.0; 4], [Point::default(); 4]).unwrap();
        assert!(b.eval_deriv(Point::new(0.5, 0.5), 3, 0).is_err());
        let bad = Rect::new(0.0, 0.0, 0.0, 1.0);
        assert!(Bicubic::from_cell_data(bad, [0.0; 4], [Point::default(); 4]).is_err());
    }

    #[test]
    fn modified_bilinear_quadratic_term() {
        let cell = Rect::new(0.0, 1.0, 0.0, 1.0);
        let m = ModifiedBilinear::new(cell, [0.0; 4], 4.0).unwrap();
        assert_abs_diff_eq!(m.eval(Point::new(0.5, 0.5)), -0.5, epsilon = 1e-15);
        // Laplacian equals the stored parameter everywhere.
        for k in 0..20 {
            let p = Point::new((k as f64 * 0.37) % 1.0, (k as f64 * 0.61) % 1.0);
            assert_abs_diff_eq!(m.laplacian(p), 4.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn modified_bilinear_reduces_to_bilinear() {
        let cell = Rect::new(0.0, 2.0, 0.0, 1.0);
        let m = ModifiedBilinear::new(cell, [1.0, 3.0, 2.0, 4.0], 0.0).unwrap();
        // bilinear interpolation of corner data at the midpoint
        assert_abs_diff_eq!(m.eval(Point::new(1.0, 0.5)), 2.5, epsilon = 1e-15);
        assert_abs_diff_eq!(m.eval(Point::new(2.0, 1.0)), 4.0, epsilon = 1e-15);
    }

    #[test]
    fn gauss_two_point_rule() {
        let q = gauss_1d(2);
        let d = 1.0 / (2.0 * 3.0_f64.sqrt());
        assert_abs_diff_eq!(q.nodes[0], 0.5 - d, epsilon = 1e-15);
        assert_abs_diff_eq!(q.nodes[1], 0.5 + d, epsilon = 1e-15);
        assert_abs_diff_eq!(q.weights[0], 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(q.weights[1], 0.5, epsilon = 1e-15);
    }

    #[test]
    fn gauss_six_integrates_degree_eleven() {
        let q = gauss_1d(6);
        let val: f64 = q.nodes.iter().zip(&q.weights).map(|(&x, &w)| w * x.powi(11)).sum();
        assert!((val - 1.0 / 12.0).abs() / (1.0 / 12.0) <= 1e-13);
    }

    #[test]
    fn gauss_square_integrates_x5y5() {
        let q = gauss_square(6);
        assert_eq!(q.nodes.len(), 36);
        let val: f64 = q
            .nodes
            .iter()
            .zip(&q.weights)
            .map(|(p, &w)| w * p.x.powi(5) * p.y.powi(5))
            .sum();
        assert!((val - 1.0 / 36.0).abs() / (1.0 / 36.0) <= 1e-13);
    }

    #[test]
    fn gauss_weights_positive_and_normalized() {
        for n in 1..=12 {
            let q = gauss_1d(n);
            assert!(q.weights.iter().all(|&w| w > 0.0));
            let s: f64 = q.weights.iter().sum();
            assert_abs_diff_eq!(s, 1.0, epsilon = 1e-14);
        }
    }

    /// Full 16-parameter span: every monomial x^a y^b with a, b <= 3 is
    /// reproduced exactly from exact corner data including mixed derivatives.
    #[test]
    fn full_bicubic_spans_all_cubics() {
        let cell = Rect::new(0.2, 1.1, -0.3, 0.5);
        for a in 0..=3u32 {
            for b in 0..=3u32 {
                let f = |x: f64, y: f64| x.powi(a as i32) * y.powi(b as i32);
                let fx = |x: f64, y: f64| {
                    if a == 0 { 0.0 } else { a as f64 * x.powi(a as i32 - 1) * y.powi(b as i32) }
                };
                let fy = |x: f64, y: f64| {
                    if b == 0 { 0.0 } else { b as f64 * x.powi(a as i32) * y.powi(b as i32 - 1) }
                };
                let fxy = |x: f64, y: f64| {
                    if a == 0 || b == 0 {
                        0.0
                    } else {
                        (a * b) as f64 * x.powi(a as i32 - 1) * y.powi(b as i32 - 1)
                    }
                };
                let xs = [cell.x_lo, cell.x_hi, cell.x_lo, cell.x_hi];
                let ys = [cell.y_lo, cell.y_lo, cell.y_hi, cell.y_hi];
                let mut values = [0.0; 4];
                let mut grads = [Point::default(); 4];
                let mut mixed = [0.0; 4];
                for v in 0..4 {
                    values[v] = f(xs[v], ys[v]);
                    grads[v] = Point::new(fx(xs[v], ys[v]), fy(xs[v], ys[v]));
                    mixed[v] = fxy(xs[v], ys[v]);
                }
                let interp = Bicubic::from_full_data(cell, values, grads, mixed).unwrap();
                for k in 0..9 {
                    let p = Point::new(
                        cell.x_lo + cell.width() * (k as f64 * 0.37 % 1.0),
                        cell.y_lo + cell.height() * (k as f64 * 0.61 % 1.0),
                    );
                    let want = f(p.x, p.y);
                    assert!(
                        (interp.eval(p) - want).abs() <= 1e-12 * (1.0 + want.abs()),
                        "x^{a} y^{b} not reproduced at {p:?}"
                    );
                }
            }
        }
    }

    /// Cell-based span (mixed derivatives synthesized from the 12 data):
    /// all cubics remain exact.
    #[test]
    fn cell_based_bicubic_spans_cubics() {
        let cell = Rect::new(0.0, 0.7, 0.0, 1.3);
        for (a, b) in [(0, 0), (1, 0), (0, 1), (1, 1), (2, 0), (0, 2), (3, 0), (0, 3), (2, 1), (1, 2)] {
            let f = |x: f64, y: f64| x.powi(a) * y.powi(b);
            let fx = |x: f64, y: f64| {
                if a == 0 { 0.0 } else { a as f64 * x.powi(a - 1) * y.powi(b) }
            };
            let fy = |x: f64, y: f64| {
                if b == 0 { 0.0 } else { b as f64 * x.powi(a) * y.powi(b - 1) }
            };
            let xs = [cell.x_lo, cell.x_hi, cell.x_lo, cell.x_hi];
            let ys = [cell.y_lo, cell.y_lo, cell.y_hi, cell.y_hi];
            let mut values = [0.0; 4];
            let mut grads = [Point::default(); 4];
            for v in 0..4 {
                values[v] = f(xs[v], ys[v]);
                grads[v] = Point::new(fx(xs[v], ys[v]), fy(xs[v], ys[v]));
            }
            let interp = Bicubic::from_cell_data(cell, values, grads).unwrap();
            for k in 0..9 {
                let p = Point::new(
                    cell.x_lo + cell.width() * (k as f64 * 0.37 % 1.0),
                    cell.y_lo + cell.height() * (k as f64 * 0.61 % 1.0),
                );
                let want = f(p.x, p.y);
                assert!(
                    (interp.eval(p) - want).abs() <= 1e-12 * (1.0 + want.abs()),
                    "x^{a} y^{b} not reproduced at {p:?}"
                );
            }
        }
    }

    proptest! {
        // Derivatives of the interpolant agree with centered differences of
        // its values at interior points.
        #[test]
        fn bicubic_derivative_consistency(x in 0.1f64..0.9, y in 0.1f64..0.9) {
            let cell = Rect::new(0.0, 1.0, 0.0, 1.0);
            let f = |x: f64, y: f64| ((2.0*x + y).sin(), 2.0*(2.0*x + y).cos(), (2.0*x + y).cos());
            let (values, grads) = sample_corners(&cell, f);
            let b = Bicubic::from_cell_data(cell, values, grads).unwrap();
            let eps = 1e-6;
            let p = Point::new(x, y);
            let fd_x = (b.eval(Point::new(x + eps, y)) - b.eval(Point::new(x - eps, y))) / (2.0 * eps);
            let fd_y = (b.eval(Point::new(x, y + eps)) - b.eval(Point::new(x, y - eps))) / (2.0 * eps);
            prop_assert!((b.eval_deriv(p, 1, 0).unwrap() - fd_x).abs() < 1e-8);
            prop_assert!((b.eval_deriv(p, 0, 1).unwrap() - fd_y).abs() < 1e-8);
        }

        // Value-slot basis functions sum to one; derivative slots vanish at corners.
        #[test]
        fn basis_partition_of_unity(x in 0.0f64..1.0, y in 0.0f64..1.0) {
            let cell = Rect::new(0.0, 1.0, 0.0, 1.0);
            let p = Point::new(x, y);
            let sum: f64 = (0..4).map(|s| Bicubic::unit_basis(cell, s).eval(p)).sum();
            prop_assert!((sum - 1.0).abs() < 1e-13);
        }
    }
}
