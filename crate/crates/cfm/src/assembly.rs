//! Global finite-difference assembly and solve.
//!
//! The Poisson equation is discretized with the standard 5-point (second
//! order) or compact 9-point (fourth order) stencil. Interface jumps enter
//! exclusively through correction terms on the right-hand side: the matrix is
//! identical to the one of a problem without an interface, so any standard
//! solver applies. The default path is a banded Cholesky factorization of the
//! negated (positive definite) operator, with a Jacobi-preconditioned
//! conjugate-gradient fallback.

use std::collections::BTreeMap;

use rayon::prelude::*;

use crate::cauchy::StencilCorrectionData;
use crate::geom::Point;
use crate::grid::{Grid, IrregularStencil, RegionId, SideMap, StencilKind};
use crate::{Error, Result};

/// Discretization order of the scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    /// 5-point stencil, second order.
    SecondOrder,
    /// Compact 9-point stencil with source-derivative right-hand side
    /// corrections, fourth order.
    FourthOrder,
}

impl Scheme {
    pub fn stencil_kind(&self) -> StencilKind {
        match self {
            Scheme::SecondOrder => StencilKind::FivePoint,
            Scheme::FourthOrder => StencilKind::NinePoint,
        }
    }

    /// Left-hand-side coefficient of the stencil node at `offset` from the
    /// center.
    pub fn coefficient(&self, offset: (isize, isize), hx: f64, hy: f64) -> f64 {
        let (dx2, dy2) = (hx * hx, hy * hy);
        match self {
            Scheme::SecondOrder => match (offset.0.abs(), offset.1.abs()) {
                (0, 0) => -2.0 / dx2 - 2.0 / dy2,
                (1, 0) => 1.0 / dx2,
                (0, 1) => 1.0 / dy2,
                _ => 0.0,
            },
            Scheme::FourthOrder => {
                let kxy = (dx2 + dy2) / (12.0 * dx2 * dy2);
                match (offset.0.abs(), offset.1.abs()) {
                    (0, 0) => -2.0 / dx2 - 2.0 / dy2 + 4.0 * kxy,
                    (1, 0) => 1.0 / dx2 - 2.0 * kxy,
                    (0, 1) => 1.0 / dy2 - 2.0 * kxy,
                    (1, 1) => kxy,
                    _ => 0.0,
                }
            }
        }
    }
}

/// Problem data the assembly needs: the source per region (with derivatives
/// where the scheme requires them) and Dirichlet data on the outer boundary.
pub trait ProblemData: Sync {
    fn source(&self, region: RegionId, p: Point) -> f64;
    /// `(f_xx, f_yy)`; `None` makes the fourth-order assembly fail.
    fn source_second(&self, region: RegionId, p: Point) -> Option<(f64, f64)>;
    /// `(f_x, f_y)`; `None` makes fourth-order gradient recovery fail.
    fn source_grad(&self, region: RegionId, p: Point) -> Option<(f64, f64)>;
    fn boundary(&self, p: Point) -> f64;
}

// ---------------------------------------------------------------------------
// Banded symmetric storage
// ---------------------------------------------------------------------------

/// Symmetric banded matrix, lower band stored row-major: entry `(i, d)` holds
/// `A[i][i-d]` for `d ≤ bandwidth`.
#[derive(Debug, Clone, PartialEq)]
pub struct BandMatrix {
    n: usize,
    bw: usize,
    data: Vec<f64>,
}

impl BandMatrix {
    fn zeros(n: usize, bw: usize) -> Self {
        BandMatrix { n, bw, data: vec![0.0; n * (bw + 1)] }
    }

    #[inline]
    fn get(&self, i: usize, d: usize) -> f64 {
        self.data[i * (self.bw + 1) + d]
    }

    #[inline]
    fn set(&mut self, i: usize, d: usize, v: f64) {
        self.data[i * (self.bw + 1) + d] = v;
    }

    pub fn entries(&self) -> &[f64] {
        &self.data
    }

    /// In-place banded Cholesky (`A = L Lᵀ`), then two triangular solves.
    fn cholesky_solve(mut self, b: &[f64]) -> Result<Vec<f64>> {
        let (n, bw) = (self.n, self.bw);
        for i in 0..n {
            let j0 = i.saturating_sub(bw);
            for j in j0..i {
                let k0 = j0.max(j.saturating_sub(bw));
                let mut s = self.get(i, i - j);
                for k in k0..j {
                    s -= self.get(i, i - k) * self.get(j, j - k);
                }
                let d = self.get(j, 0);
                self.set(i, i - j, s / d);
            }
            let mut s = self.get(i, 0);
            for k in j0..i {
                let l = self.get(i, i - k);
                s -= l * l;
            }
            if s <= 0.0 {
                return Err(Error::SolverFailure(format!(
                    "matrix not positive definite at row {i} (pivot {s:.3e})"
                )));
            }
            self.set(i, 0, s.sqrt());
        }
        // forward substitution L y = b
        let mut x = b.to_vec();
        for i in 0..n {
            let j0 = i.saturating_sub(bw);
            let mut s = x[i];
            for k in j0..i {
                s -= self.get(i, i - k) * x[k];
            }
            x[i] = s / self.get(i, 0);
        }
        // back substitution Lᵀ x = y
        for i in (0..n).rev() {
            let mut s = x[i];
            let hi = (i + bw).min(n - 1);
            for k in i + 1..=hi {
                s -= self.get(k, k - i) * x[k];
            }
            x[i] = s / self.get(i, 0);
        }
        Ok(x)
    }
}

// ---------------------------------------------------------------------------
// Poisson system
// ---------------------------------------------------------------------------

/// Assembled discrete Poisson problem over the interior nodes. Only the
/// right-hand side carries interface information; the matrix is that of the
/// problem without jumps.
#[derive(Debug, Clone)]
pub struct PoissonSystem {
    grid: Grid,
    scheme: Scheme,
    /// Negated operator (positive definite).
    pub matrix: BandMatrix,
    /// Negated right-hand side, boundary values eliminated.
    pub rhs: Vec<f64>,
    /// Dirichlet values at boundary nodes (zero at interior slots).
    boundary: Vec<f64>,
}

impl PoissonSystem {
    fn n_interior(&self) -> usize {
        (self.grid.nx() - 2) * (self.grid.ny() - 2)
    }

    #[inline]
    fn interior_index(&self, i: usize, j: usize) -> usize {
        (j - 1) * (self.grid.nx() - 2) + (i - 1)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn scheme(&self) -> Scheme {
        self.scheme
    }

    /// Apply the (un-negated) stencil operator to a full nodal field.
    pub fn apply_operator(&self, u: &[f64]) -> Vec<f64> {
        let g = &self.grid;
        let (hx, hy) = (g.hx(), g.hy());
        let mut out = vec![0.0; self.n_interior()];
        for (i, j) in g.interior_nodes() {
            let mut acc = self.scheme.coefficient((0, 0), hx, hy) * u[g.idx(i, j)];
            for &(di, dj) in self.scheme.stencil_kind().neighbor_offsets() {
                let c = self.scheme.coefficient((di, dj), hx, hy);
                acc += c * u[g.idx((i as isize + di) as usize, (j as isize + dj) as usize)];
            }
            out[self.interior_index(i, j)] = acc;
        }
        out
    }

    /// Apply the negated operator restricted to the interior unknowns
    /// (boundary columns eliminated), matching the assembled matrix.
    fn apply_negated_interior(&self, x: &[f64], out: &mut [f64]) {
        let g = &self.grid;
        let w = g.nx() - 2;
        let (hx, hy) = (g.hx(), g.hy());
        let diag = -self.scheme.coefficient((0, 0), hx, hy);
        let offsets = self.scheme.stencil_kind().neighbor_offsets();
        out.par_iter_mut().enumerate().for_each(|(row, o)| {
            let i = row % w + 1;
            let j = row / w + 1;
            let mut acc = diag * x[row];
            for &(di, dj) in offsets {
                let (ni, nj) = ((i as isize + di) as usize, (j as isize + dj) as usize);
                if !g.is_boundary(ni, nj) {
                    let col = (nj - 1) * w + (ni - 1);
                    acc -= self.scheme.coefficient((di, dj), hx, hy) * x[col];
                }
            }
            *o = acc;
        });
    }
}

/// Assemble the interior equations of the scheme with `f` (and, for the
/// fourth-order scheme, its second derivatives) evaluated on each node's own
/// side, and the Dirichlet data eliminated into the right-hand side.
pub fn assemble_system(
    grid: &Grid,
    sides: &SideMap,
    data: &impl ProblemData,
    scheme: Scheme,
) -> Result<PoissonSystem> {
    let (nx, ny) = (grid.nx(), grid.ny());
    let (hx, hy) = (grid.hx(), grid.hy());
    let w = nx - 2;
    let bw = w + 1;
    let n = w * (ny - 2);
    let mut matrix = BandMatrix::zeros(n, bw);
    let mut rhs = vec![0.0; n];
    let mut boundary = vec![0.0; grid.n_nodes()];
    for (i, j) in grid.nodes() {
        if grid.is_boundary(i, j) {
            boundary[grid.idx(i, j)] = data.boundary(grid.node(i, j));
        }
    }

    for (i, j) in grid.interior_nodes() {
        let row = (j - 1) * w + (i - 1);
        let p = grid.node(i, j);
        let region = sides.region(i, j);

        // negated right-hand side of the scheme
        let mut f_val = data.source(region, p);
        if scheme == Scheme::FourthOrder {
            let (fxx, fyy) = data.source_second(region, p).ok_or_else(|| {
                Error::invalid("fourth-order scheme requires second derivatives of the source")
            })?;
            f_val += (hx * hx * fxx + hy * hy * fyy) / 12.0;
        }
        rhs[row] -= f_val;

        // negated operator: diagonal and lower neighbors in the band,
        // boundary values eliminated
        matrix.set(row, 0, -scheme.coefficient((0, 0), hx, hy));
        for &(di, dj) in scheme.stencil_kind().neighbor_offsets() {
            let c = scheme.coefficient((di, dj), hx, hy);
            let (ni, nj) = ((i as isize + di) as usize, (j as isize + dj) as usize);
            if grid.is_boundary(ni, nj) {
                rhs[row] += c * boundary[grid.idx(ni, nj)];
            } else {
                let col = (nj - 1) * w + (ni - 1);
                if col < row {
                    matrix.set(row, row - col, -c);
                }
            }
        }
    }
    Ok(PoissonSystem { grid: grid.clone(), scheme, matrix, rhs, boundary })
}

/// Correction term of one irregular stencil: the value added to the
/// right-hand side, with the contributing nodes and their signed weights.
#[derive(Debug, Clone)]
pub struct StencilCorrection {
    pub center: (usize, usize),
    pub value: f64,
    /// `(node, signed stencil coefficient, correction value)` triples.
    pub contributions: Vec<((usize, usize), f64, f64)>,
}

/// Sign with which a stored correction value `D = u_hi − u_lo` converts the
/// stored solution at `node` into the branch of the stencil `center`:
/// `u_center_region(node) = u(node) + sign · D(node)`.
fn conversion_sign(sides: &SideMap, center: (usize, usize), node: (usize, usize)) -> f64 {
    if sides.region(center.0, center.1) > sides.region(node.0, node.1) {
        1.0
    } else {
        -1.0
    }
}

/// Build the correction term `C` of one irregular stencil from the correction
/// values at its opposite-side nodes. Ghost substitution moves `sign · D` to
/// the right-hand side with the node's stencil coefficient:
/// `C = −Σ coeff(node) · sign(node) · D(node)`.
pub fn correction_term(
    stencil: &IrregularStencil,
    d_values: &BTreeMap<(usize, usize), f64>,
    sides: &SideMap,
    scheme: Scheme,
    grid: &Grid,
) -> Result<StencilCorrection> {
    let (ci, cj) = stencil.center;
    let mut value = 0.0;
    let mut contributions = Vec::with_capacity(stencil.opposite.len());
    for &(i, j) in &stencil.opposite {
        let d = *d_values
            .get(&(i, j))
            .ok_or_else(|| Error::invalid(format!("missing correction value at node ({i},{j})")))?;
        let offset = (i as isize - ci as isize, j as isize - cj as isize);
        let c = scheme.coefficient(offset, grid.hx(), grid.hy());
        let sign = conversion_sign(sides, stencil.center, (i, j));
        value -= c * sign * d;
        contributions.push(((i, j), -c * sign, d));
    }
    Ok(StencilCorrection { center: stencil.center, value, contributions })
}

/// Add correction terms to the right-hand side (the matrix is untouched).
pub fn apply_corrections(system: &mut PoissonSystem, corrections: &[StencilCorrection]) {
    let w = system.grid.nx() - 2;
    for c in corrections {
        let row = (c.center.1 - 1) * w + (c.center.0 - 1);
        // the stored right-hand side is negated
        system.rhs[row] -= c.value;
    }
}

/// Convenience: correction terms for a whole set of solved stencils.
pub fn correction_terms(
    stencils: &[IrregularStencil],
    solved: &[StencilCorrectionData],
    sides: &SideMap,
    scheme: Scheme,
    grid: &Grid,
) -> Result<Vec<StencilCorrection>> {
    stencils
        .iter()
        .zip(solved)
        .map(|(st, sc)| {
            debug_assert_eq!(st.center, sc.center);
            correction_term(st, &sc.d_values, sides, scheme, grid)
        })
        .collect()
}

/// Solve the assembled system. The banded Cholesky path verifies a relative
/// residual of 1e-11; the conjugate-gradient fallback iterates to 1e-12.
/// Returns the full nodal field (Dirichlet values at boundary nodes).
pub fn solve_linear(system: &PoissonSystem) -> Result<Vec<f64>> {
    let interior = match system.matrix.clone().cholesky_solve(&system.rhs) {
        Ok(x) => x,
        // the operator is positive definite by construction, so a factorization
        // failure can only be numerical; fall back to conjugate gradients,
        // whose iteration count scales with the grid diameter
        Err(_) => {
            let cap = 100 * (system.rhs.len() as f64).sqrt() as usize + 1000;
            return solve_linear_cg(system, 1e-12, cap);
        }
    };

    let mut ax = vec![0.0; interior.len()];
    system.apply_negated_interior(&interior, &mut ax);
    let mut res2 = 0.0;
    let mut rhs2 = 0.0;
    for (row, &b) in system.rhs.iter().enumerate() {
        let r = ax[row] - b;
        res2 += r * r;
        rhs2 += b * b;
    }
    let rel = (res2 / rhs2.max(1e-300)).sqrt();
    if rel > 1e-11 {
        return Err(Error::SolverFailure(format!(
            "direct solve residual {rel:.3e} exceeds 1e-11"
        )));
    }

    let mut u = system.boundary.clone();
    let g = &system.grid;
    for (i, j) in g.interior_nodes() {
        u[g.idx(i, j)] = interior[system.interior_index(i, j)];
    }
    Ok(u)
}

/// Jacobi-preconditioned conjugate gradients on the same system; used as a
/// fallback and for cross-checking the direct path.
pub fn solve_linear_cg(system: &PoissonSystem, tol: f64, max_iter: usize) -> Result<Vec<f64>> {
    let n = system.rhs.len();
    let g = &system.grid;
    let diag = -system.scheme.coefficient((0, 0), g.hx(), g.hy());
    let apply = |x: &[f64], out: &mut [f64]| system.apply_negated_interior(x, out);

    let b = &system.rhs;
    let b_norm = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    let mut x = vec![0.0; n];
    let mut r = b.clone();
    let mut z: Vec<f64> = r.iter().map(|v| v / diag).collect();
    let mut p = z.clone();
    let mut rz: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
    let mut ap = vec![0.0; n];
    for _ in 0..max_iter {
        apply(&p, &mut ap);
        let pap: f64 = p.iter().zip(&ap).map(|(a, b)| a * b).sum();
        let alpha = rz / pap;
        for k in 0..n {
            x[k] += alpha * p[k];
            r[k] -= alpha * ap[k];
        }
        let r_norm = r.iter().map(|v| v * v).sum::<f64>().sqrt();
        if r_norm <= tol * b_norm {
            let mut u = system.boundary.clone();
            for (i, j) in g.interior_nodes() {
                u[g.idx(i, j)] = x[system.interior_index(i, j)];
            }
            return Ok(u);
        }
        for k in 0..n {
            z[k] = r[k] / diag;
        }
        let rz_new: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
        let beta = rz_new / rz;
        rz = rz_new;
        for k in 0..n {
            p[k] = z[k] + beta * p[k];
        }
    }
    Err(Error::SolverFailure(format!(
        "conjugate gradients did not reach {tol:.1e} in {max_iter} iterations"
    )))
}

// ---------------------------------------------------------------------------
// Gradient recovery
// ---------------------------------------------------------------------------

/// Nodal solution together with its recovered gradient.
#[derive(Debug, Clone)]
pub struct FieldPair {
    pub u: Vec<f64>,
    /// Gradient at interior nodes; boundary slots are zero.
    pub grad: Option<Vec<(f64, f64)>>,
}

/// Recover the nodal gradient with the same stencil nodes the Poisson solve
/// used, so the same correction values complete the differences across the
/// interface. The fourth-order operator is the centered difference plus the
/// deferred third-derivative correction
/// `u_x = ∂x u + h²/6 (∂yy ∂x u − f_x)` (symmetrically in y); the
/// second-order operator is the plain centered difference.
pub fn gradient_field(
    grid: &Grid,
    u: &[f64],
    corrections: &[StencilCorrectionData],
    data: &impl ProblemData,
    sides: &SideMap,
    scheme: Scheme,
) -> Result<Vec<(f64, f64)>> {
    let by_center: BTreeMap<(usize, usize), &StencilCorrectionData> =
        corrections.iter().map(|c| (c.center, c)).collect();
    let (hx, hy) = (grid.hx(), grid.hy());
    let mut out = vec![(0.0, 0.0); grid.n_nodes()];

    for (i, j) in grid.interior_nodes() {
        // 3x3 patch of the solution, ghost-extended to the center's region
        let mut patch = [[0.0; 3]; 3];
        let correction = by_center.get(&(i, j));
        for dj in -1isize..=1 {
            for di in -1isize..=1 {
                let (ni, nj) = ((i as isize + di) as usize, (j as isize + dj) as usize);
                let mut v = u[grid.idx(ni, nj)];
                if let Some(c) = correction {
                    if let Some(&d) = c.d_values.get(&(ni, nj)) {
                        v += conversion_sign(sides, (i, j), (ni, nj)) * d;
                    }
                }
                patch[(dj + 1) as usize][(di + 1) as usize] = v;
            }
        }
        let dx = |r: usize| (patch[r][2] - patch[r][0]) / (2.0 * hx);
        let dy = |c: usize| (patch[2][c] - patch[0][c]) / (2.0 * hy);
        let mut gx = dx(1);
        let mut gy = dy(1);
        if scheme == Scheme::FourthOrder {
            let region = sides.region(i, j);
            let p = grid.node(i, j);
            let (fx, fy) = data.source_grad(region, p).ok_or_else(|| {
                Error::invalid("fourth-order gradient recovery requires source derivatives")
            })?;
            let dyy_dx = (dx(2) - 2.0 * dx(1) + dx(0)) / (hy * hy);
            let dxx_dy = (dy(2) - 2.0 * dy(1) + dy(0)) / (hx * hx);
            gx += hx * hx / 6.0 * (dyy_dx - fx);
            gy += hy * hy / 6.0 * (dxx_dy - fy);
        }
        out[grid.idx(i, j)] = (gx, gy);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::Rect;
    use crate::grid::{classify_nodes, RegionClassifier};
    use approx::assert_abs_diff_eq;
    use std::f64::consts::PI;

    /// Single-region problem from plain function pointers.
    struct Smooth {
        f: fn(Point) -> f64,
        fxx: fn(Point) -> f64,
        fyy: fn(Point) -> f64,
        fx: fn(Point) -> f64,
        fy: fn(Point) -> f64,
        g: fn(Point) -> f64,
    }

    impl ProblemData for Smooth {
        fn source(&self, _r: RegionId, p: Point) -> f64 {
            (self.f)(p)
        }
        fn source_second(&self, _r: RegionId, p: Point) -> Option<(f64, f64)> {
            Some(((self.fxx)(p), (self.fyy)(p)))
        }
        fn source_grad(&self, _r: RegionId, p: Point) -> Option<(f64, f64)> {
            Some(((self.fx)(p), (self.fy)(p)))
        }
        fn boundary(&self, p: Point) -> f64 {
            (self.g)(p)
        }
    }

    struct AllPlus;
    impl RegionClassifier for AllPlus {
        fn region_of(&self, _p: Point) -> RegionId {
            crate::grid::REGION_PLUS
        }
    }

    fn unit_grid(n: usize) -> Grid {
        Grid::new(n, n, Rect::new(0.0, 1.0, 0.0, 1.0)).unwrap()
    }

    fn quadratic() -> Smooth {
        Smooth {
            f: |_| 4.0,
            fxx: |_| 0.0,
            fyy: |_| 0.0,
            fx: |_| 0.0,
            fy: |_| 0.0,
            g: |p| p.x * p.x + p.y * p.y,
        }
    }

    #[test]
    fn nine_point_scheme_exact_on_quadratics() {
        let grid = unit_grid(17);
        let sides = classify_nodes(&grid, &AllPlus);
        let sys = assemble_system(&grid, &sides, &quadratic(), Scheme::FourthOrder).unwrap();
        let exact: Vec<f64> = grid
            .nodes()
            .map(|(i, j)| {
                let p = grid.node(i, j);
                p.x * p.x + p.y * p.y
            })
            .collect();
        // the scheme is exact on quadratics: the exact field solves the system
        let u = solve_linear(&sys).unwrap();
        for (k, (&a, &b)) in u.iter().zip(&exact).enumerate() {
            assert!((a - b).abs() <= 1e-12, "node {k}: {a} vs {b}");
        }
    }

    #[test]
    fn smooth_solve_is_fourth_order() {
        let data = Smooth {
            f: |p| -2.0 * PI * PI * (PI * p.x).sin() * (PI * p.y).sin(),
            fxx: |p| 2.0 * PI.powi(4) * (PI * p.x).sin() * (PI * p.y).sin(),
            fyy: |p| 2.0 * PI.powi(4) * (PI * p.x).sin() * (PI * p.y).sin(),
            fx: |p| -2.0 * PI.powi(3) * (PI * p.x).cos() * (PI * p.y).sin(),
            fy: |p| -2.0 * PI.powi(3) * (PI * p.x).sin() * (PI * p.y).cos(),
            g: |_| 0.0,
        };
        let mut errs = Vec::new();
        for n in [17usize, 33, 65] {
            let grid = unit_grid(n);
            let sides = classify_nodes(&grid, &AllPlus);
            let sys = assemble_system(&grid, &sides, &data, Scheme::FourthOrder).unwrap();
            let u = solve_linear(&sys).unwrap();
            let mut e: f64 = 0.0;
            for (i, j) in grid.nodes() {
                let p = grid.node(i, j);
                e = e.max((u[grid.idx(i, j)] - (PI * p.x).sin() * (PI * p.y).sin()).abs());
            }
            errs.push(e);
        }
        let r1 = (errs[0] / errs[1]).log2();
        let r2 = (errs[1] / errs[2]).log2();
        assert!(r1 > 3.6 && r2 > 3.6, "orders {r1:.2}, {r2:.2}; errors {errs:?}");
    }

    #[test]
    fn second_order_scheme_missing_derivatives_is_fine() {
        struct NoDerivs;
        impl ProblemData for NoDerivs {
            fn source(&self, _r: RegionId, _p: Point) -> f64 {
                4.0
            }
            fn source_second(&self, _r: RegionId, _p: Point) -> Option<(f64, f64)> {
                None
            }
            fn source_grad(&self, _r: RegionId, _p: Point) -> Option<(f64, f64)> {
                None
            }
            fn boundary(&self, p: Point) -> f64 {
                p.x * p.x + p.y * p.y
            }
        }
        let grid = unit_grid(9);
        let sides = classify_nodes(&grid, &AllPlus);
        assert!(assemble_system(&grid, &sides, &NoDerivs, Scheme::SecondOrder).is_ok());
        assert!(matches!(
            assemble_system(&grid, &sides, &NoDerivs, Scheme::FourthOrder),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn matrix_is_independent_of_jumps() {
        // classify by a circle: f is then evaluated per side, but the matrix
        // must be bit-identical to the no-interface one
        struct Circle;
        impl RegionClassifier for Circle {
            fn region_of(&self, p: Point) -> RegionId {
                if (p.x - 0.5).powi(2) + (p.y - 0.5).powi(2) < 0.04 {
                    crate::grid::REGION_MINUS
                } else {
                    crate::grid::REGION_PLUS
                }
            }
        }
        struct TwoSided;
        impl ProblemData for TwoSided {
            fn source(&self, r: RegionId, _p: Point) -> f64 {
                if r == crate::grid::REGION_PLUS {
                    3.0
                } else {
                    -17.0
                }
            }
            fn source_second(&self, _r: RegionId, _p: Point) -> Option<(f64, f64)> {
                Some((0.0, 0.0))
            }
            fn source_grad(&self, _r: RegionId, _p: Point) -> Option<(f64, f64)> {
                Some((0.0, 0.0))
            }
            fn boundary(&self, _p: Point) -> f64 {
                0.0
            }
        }
        let grid = unit_grid(21);
        let plain = classify_nodes(&grid, &AllPlus);
        let jumpy = classify_nodes(&grid, &Circle);
        for scheme in [Scheme::SecondOrder, Scheme::FourthOrder] {
            let a = assemble_system(&grid, &plain, &TwoSided, scheme).unwrap();
            let mut b = assemble_system(&grid, &jumpy, &TwoSided, scheme).unwrap();
            assert_eq!(a.matrix, b.matrix, "matrix must not depend on the interface");
            // corrections only ever touch the right-hand side
            let snapshot = b.matrix.clone();
            apply_corrections(
                &mut b,
                &[StencilCorrection { center: (10, 10), value: 1.5, contributions: vec![] }],
            );
            assert_eq!(snapshot, b.matrix);
        }
    }

    fn stencil_at(center: (usize, usize), kind: StencilKind, opposite: Vec<(usize, usize)>) -> IrregularStencil {
        IrregularStencil { center, kind, opposite }
    }

    /// Hand-march a side map for a single stencil test.
    fn sides_from(grid: &Grid, minus: &[(usize, usize)]) -> SideMap {
        struct Marked<'a>(&'a [(usize, usize)], &'a Grid);
        impl RegionClassifier for Marked<'_> {
            fn region_of(&self, p: Point) -> RegionId {
                for &(i, j) in self.0 {
                    if self.1.node(i, j).dist(p) < 1e-12 {
                        return crate::grid::REGION_MINUS;
                    }
                }
                crate::grid::REGION_PLUS
            }
        }
        classify_nodes(grid, &Marked(minus, grid))
    }

    #[test]
    fn correction_term_matches_nine_point_reference_case() {
        // h = 1, corner value 12, others zero: C = -(1/12)·2·12 = -2
        let grid = Grid::new(3, 3, Rect::new(0.0, 2.0, 0.0, 2.0)).unwrap();
        assert_eq!(grid.hx(), 1.0);
        let st = stencil_at((1, 1), StencilKind::NinePoint, vec![(2, 1), (1, 2), (2, 2)]);
        let sides = sides_from(&grid, &[(2, 1), (1, 2), (2, 2)]);
        let mut d = BTreeMap::new();
        d.insert((2, 1), 0.0);
        d.insert((1, 2), 0.0);
        d.insert((2, 2), 12.0);
        let c = correction_term(&st, &d, &sides, Scheme::FourthOrder, &grid).unwrap();
        assert_abs_diff_eq!(c.value, -2.0, epsilon = 1e-13);

        // the general coefficients of the reference arrangement with unit D
        // at an edge node: [1/6 (hx²+hy²)/(hx hy)² − 1/hx²] per the ghost
        // substitution; equals -2/3 at h = 1
        let mut d = BTreeMap::new();
        d.insert((2, 1), 1.0);
        d.insert((1, 2), 0.0);
        d.insert((2, 2), 0.0);
        let c = correction_term(&st, &d, &sides, Scheme::FourthOrder, &grid).unwrap();
        assert_abs_diff_eq!(c.value, -2.0 / 3.0, epsilon = 1e-13);
    }

    #[test]
    fn correction_term_matches_five_point_reference_case() {
        let grid = Grid::new(11, 11, Rect::new(0.0, 1.0, 0.0, 1.0)).unwrap();
        assert_abs_diff_eq!(grid.hx(), 0.1);
        let st = stencil_at((5, 5), StencilKind::FivePoint, vec![(6, 5), (5, 6)]);
        let sides = sides_from(&grid, &[(6, 5), (5, 6)]);
        let mut d = BTreeMap::new();
        d.insert((6, 5), 1.0);
        d.insert((5, 6), 1.0);
        let c = correction_term(&st, &d, &sides, Scheme::SecondOrder, &grid).unwrap();
        assert_abs_diff_eq!(c.value, -200.0, epsilon = 1e-10);
    }

    /// Ghost-substitution oracle over every side pattern of the 9-point
    /// stencil: applying the correction to the right-hand side must equal
    /// evaluating the uncorrected stencil on the ghost-extended field.
    #[test]
    fn correction_matches_ghost_substitution_for_all_patterns() {
        ghost_substitution_oracle(Grid::new(5, 5, Rect::new(0.0, 4.0, 0.0, 4.0)).unwrap());
    }

    /// The same oracle with unequal spacings, which would expose any mix-up
    /// of the x and y coefficients in the correction terms.
    #[test]
    fn correction_matches_ghost_substitution_on_rectangular_grids() {
        ghost_substitution_oracle(Grid::new(5, 5, Rect::new(0.0, 4.0, 0.0, 2.8)).unwrap());
    }

    fn ghost_substitution_oracle(grid: Grid) {
        let center = (2, 2);
        let offsets = StencilKind::NinePoint.neighbor_offsets();
        // deterministic pseudo-random values
        let mut seed = 0x9e3779b97f4a7c15u64;
        let mut rand = move || {
            seed = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (seed >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        };
        for center_minus in [false, true] {
            for pattern in 0u32..256 {
                let mut minus_nodes = Vec::new();
                if center_minus {
                    minus_nodes.push(center);
                }
                let mut opposite = Vec::new();
                for (bit, &(di, dj)) in offsets.iter().enumerate() {
                    let node = ((2 + di) as usize, (2 + dj) as usize);
                    let node_minus = pattern & (1 << bit) != 0;
                    if node_minus {
                        minus_nodes.push(node);
                    }
                    if node_minus != center_minus {
                        opposite.push(node);
                    }
                }
                if opposite.is_empty() {
                    continue;
                }
                let sides = sides_from(&grid, &minus_nodes);
                let st = stencil_at(center, StencilKind::NinePoint, opposite.clone());
                let mut d = BTreeMap::new();
                let mut u = vec![0.0; grid.n_nodes()];
                for (i, j) in grid.nodes() {
                    u[grid.idx(i, j)] = 10.0 * rand();
                }
                for &node in &opposite {
                    d.insert(node, 10.0 * rand());
                }
                let c = correction_term(&st, &d, &sides, Scheme::FourthOrder, &grid).unwrap();

                // oracle: stencil on the ghost-extended field minus stencil on
                // the raw field equals -C
                let mut lhs_ghost = 0.0;
                let mut lhs_raw = 0.0;
                for &(di, dj) in offsets.iter().chain(std::iter::once(&(0, 0))) {
                    let node = ((2 + di) as usize, (2 + dj) as usize);
                    let coeff = Scheme::FourthOrder.coefficient((di, dj), grid.hx(), grid.hy());
                    let raw = u[grid.idx(node.0, node.1)];
                    let ghost = if let Some(&dv) = d.get(&node) {
                        raw + conversion_sign(&sides, center, node) * dv
                    } else {
                        raw
                    };
                    lhs_ghost += coeff * ghost;
                    lhs_raw += coeff * raw;
                }
                let diff = lhs_ghost - lhs_raw;
                assert!(
                    (diff + c.value).abs() <= 1e-13 * (1.0 + diff.abs()),
                    "pattern {pattern:#b} center_minus={center_minus}: ghost {diff} vs -C {}",
                    -c.value
                );
            }
        }
    }

    #[test]
    fn identity_solve_recovers_nodal_field() {
        let grid = unit_grid(33);
        let sides = classify_nodes(&grid, &AllPlus);
        let mut sys = assemble_system(&grid, &sides, &quadratic(), Scheme::FourthOrder).unwrap();
        // manufacture the rhs from a known field through the operator
        let mut seed = 12345u64;
        let mut rand = move || {
            seed = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (seed >> 11) as f64 / (1u64 << 53) as f64
        };
        let mut truth = vec![0.0; grid.n_nodes()];
        for v in truth.iter_mut() {
            *v = rand();
        }
        for (i, j) in grid.nodes() {
            if grid.is_boundary(i, j) {
                truth[grid.idx(i, j)] = 0.0;
            }
        }
        sys.boundary = vec![0.0; grid.n_nodes()];
        let op = sys.apply_operator(&truth);
        for (row, v) in op.iter().enumerate() {
            sys.rhs[row] = -v;
        }
        let u = solve_linear(&sys).unwrap();
        let mut err: f64 = 0.0;
        for k in 0..u.len() {
            err = err.max((u[k] - truth[k]).abs());
        }
        assert!(err <= 1e-11, "identity solve error {err:.3e}");

        let u_cg = solve_linear_cg(&sys, 1e-12, 20_000).unwrap();
        let mut err: f64 = 0.0;
        for k in 0..u.len() {
            err = err.max((u_cg[k] - truth[k]).abs());
        }
        assert!(err <= 1e-9, "cg solve error {err:.3e}");
    }

    #[test]
    fn gradient_exact_on_quadratic() {
        let grid = unit_grid(17);
        let sides = classify_nodes(&grid, &AllPlus);
        let data = Smooth {
            f: |_| 2.0,
            fxx: |_| 0.0,
            fyy: |_| 0.0,
            fx: |_| 0.0,
            fy: |_| 0.0,
            g: |p| p.x * p.x,
        };
        let u: Vec<f64> = grid.nodes().map(|(i, j)| grid.node(i, j).x.powi(2)).collect();
        let grad = gradient_field(&grid, &u, &[], &data, &sides, Scheme::FourthOrder).unwrap();
        for (i, j) in grid.interior_nodes() {
            let p = grid.node(i, j);
            let (gx, gy) = grad[grid.idx(i, j)];
            assert_abs_diff_eq!(gx, 2.0 * p.x, epsilon = 1e-12);
            assert_abs_diff_eq!(gy, 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn gradient_is_fourth_order_on_smooth_fields() {
        let data = Smooth {
            f: |p| -2.0 * PI * PI * (PI * p.x).sin() * (PI * p.y).sin(),
            fxx: |p| 2.0 * PI.powi(4) * (PI * p.x).sin() * (PI * p.y).sin(),
            fyy: |p| 2.0 * PI.powi(4) * (PI * p.x).sin() * (PI * p.y).sin(),
            fx: |p| -2.0 * PI.powi(3) * (PI * p.x).cos() * (PI * p.y).sin(),
            fy: |p| -2.0 * PI.powi(3) * (PI * p.x).sin() * (PI * p.y).cos(),
            g: |_| 0.0,
        };
        let mut errs = Vec::new();
        for n in [17usize, 33, 65] {
            let grid = unit_grid(n);
            let sides = classify_nodes(&grid, &AllPlus);
            let u: Vec<f64> = grid
                .nodes()
                .map(|(i, j)| {
                    let p = grid.node(i, j);
                    (PI * p.x).sin() * (PI * p.y).sin()
                })
                .collect();
            let grad = gradient_field(&grid, &u, &[], &data, &sides, Scheme::FourthOrder).unwrap();
            let mut e: f64 = 0.0;
            for (i, j) in grid.interior_nodes() {
                let p = grid.node(i, j);
                let (gx, gy) = grad[grid.idx(i, j)];
                let tx = PI * (PI * p.x).cos() * (PI * p.y).sin();
                let ty = PI * (PI * p.x).sin() * (PI * p.y).cos();
                e = e.max((gx - tx).abs().max((gy - ty).abs()));
            }
            errs.push(e);
        }
        let r1 = (errs[0] / errs[1]).log2();
        let r2 = (errs[1] / errs[2]).log2();
        assert!(r1 > 3.6 && r2 > 3.6, "orders {r1:.2}, {r2:.2}; errors {errs:?}");
    }
}
