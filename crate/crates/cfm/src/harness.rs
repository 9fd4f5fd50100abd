//! Built-in benchmark problems, error norms, and convergence studies.
//!
//! Each case bundles the analytic data of one benchmark: per-region source
//! terms (with the derivatives the fourth-order scheme needs), jump data per
//! interface, Dirichlet boundary data, and the exact solution used to measure
//! errors. The jumps are transcribed independently of the exact solutions and
//! cross-checked by [`CaseDefinition::validate`], which compares them against
//! `u_hi − u_lo` along each interface.

use std::collections::BTreeMap;
use std::f64::consts::{E, PI, TAU};
use std::sync::Arc;
use std::time::Instant;

use crate::assembly::{
    apply_corrections, assemble_system, correction_terms, gradient_field, solve_linear,
    FieldPair, ProblemData, Scheme,
};
use crate::cauchy::{compute_corrections, BoxReport, CauchyConfig, JumpData};
use crate::geom::{Point, Rect, Vec2};
use crate::grid::{classify_nodes, irregular_stencils, Grid, RegionId, SideMap};
use crate::interface::{CircleInterface, ExactInterface, InterfaceRep, LevelSetField};
use crate::{Error, Result};

pub type ScalarFn = Arc<dyn Fn(Point) -> f64 + Send + Sync>;
pub type NormalJumpFn = Arc<dyn Fn(Point, Vec2) -> f64 + Send + Sync>;
pub type LevelSetFn = Arc<dyn Fn(Point) -> (f64, Vec2) + Send + Sync>;
/// Parametric interface sampler: `t ∈ [0, 1)` to a point on the curve and the
/// unit normal pointing toward the `hi` region.
pub type CurveFn = Arc<dyn Fn(f64) -> (Point, Vec2) + Send + Sync>;

fn sf(f: impl Fn(Point) -> f64 + Send + Sync + 'static) -> ScalarFn {
    Arc::new(f)
}

/// Exact solution and source data of one region.
#[derive(Clone)]
pub struct RegionFields {
    pub u: ScalarFn,
    pub ux: ScalarFn,
    pub uy: ScalarFn,
    pub f: ScalarFn,
    pub fx: ScalarFn,
    pub fy: ScalarFn,
    pub fxx: ScalarFn,
    pub fyy: ScalarFn,
}

/// Prescribed jumps across one interface, in the `u_hi − u_lo` orientation.
#[derive(Clone)]
pub struct JumpPair {
    pub a: ScalarFn,
    pub b: NormalJumpFn,
}

/// How the interface is described.
#[derive(Clone)]
pub enum InterfaceSpec {
    /// Analytic level set, sampled into the gradient-augmented representation
    /// on each grid before use.
    LevelSet(LevelSetFn),
    /// Exact circles with a containment-priority region map.
    Circles {
        circles: Vec<CircleInterface>,
        priority: Vec<(usize, RegionId)>,
        fallback: RegionId,
    },
}

/// A complete analytic benchmark problem.
#[derive(Clone)]
pub struct CaseDefinition {
    pub name: &'static str,
    pub domain: Rect,
    pub interface: InterfaceSpec,
    /// Indexed by region id.
    pub regions: Vec<RegionFields>,
    /// Region pair `(lo, hi)` per interface id.
    pub pairs: Vec<(RegionId, RegionId)>,
    /// Indexed by interface id, aligned with `pairs`.
    pub jumps: Vec<JumpPair>,
    /// The region containing the outer boundary (the interfaces stay away
    /// from it in every benchmark).
    pub boundary_region: RegionId,
    /// Parametric samplers per interface, for validation and tests.
    pub curves: Vec<CurveFn>,
}

impl CaseDefinition {
    /// Interface representation on a given grid. Level sets are sampled to
    /// match the scheme: the fourth-order scheme uses the gradient-augmented
    /// (bicubic) representation, the second-order scheme the plain bilinear
    /// one with finite-difference normals, as each scheme's accuracy demands.
    /// Exact circles pass through unchanged.
    pub fn build_interface(&self, grid: &Grid, scheme: Scheme) -> InterfaceRep {
        match &self.interface {
            InterfaceSpec::LevelSet(f) => {
                let f = f.clone();
                let field = match scheme {
                    Scheme::FourthOrder => LevelSetField::from_analytic(grid, move |p| f(p)),
                    Scheme::SecondOrder => {
                        LevelSetField::from_analytic_bilinear(grid, move |p| f(p).0)
                    }
                };
                InterfaceRep::LevelSet(field)
            }
            InterfaceSpec::Circles { circles, priority, fallback } => InterfaceRep::Exact(
                ExactInterface::new(circles.clone(), priority.clone(), *fallback),
            ),
        }
    }

    pub fn exact_u(&self, region: RegionId, p: Point) -> f64 {
        (self.regions[region as usize].u)(p)
    }

    pub fn exact_grad(&self, region: RegionId, p: Point) -> Vec2 {
        let r = &self.regions[region as usize];
        Point::new((r.ux)(p), (r.uy)(p))
    }

    /// Consistency audit: at interface samples the prescribed jumps must
    /// match the exact solutions, `a = u_hi − u_lo` and
    /// `b = (∇u_hi − ∇u_lo)·n̂`, to transcription accuracy.
    pub fn validate(&self) -> Result<()> {
        for (id, curve) in self.curves.iter().enumerate() {
            let (lo, hi) = self.pairs[id];
            for k in 0..200 {
                let t = k as f64 / 200.0;
                let (p, n) = curve(t);
                let a = (self.jumps[id].a)(p);
                let b = (self.jumps[id].b)(p, n);
                let du = self.exact_u(hi, p) - self.exact_u(lo, p);
                let dg = self.exact_grad(hi, p) - self.exact_grad(lo, p);
                let scale = 1.0 + a.abs().max(b.abs());
                if (a - du).abs() > 1e-12 * scale || (b - dg.dot(n)).abs() > 1e-12 * scale {
                    return Err(Error::invalid(format!(
                        "case {}: jump data inconsistent with the exact solution on interface \
                         {id} at t={t:.3}: |Δa|={:.2e}, |Δb|={:.2e}",
                        self.name,
                        (a - du).abs(),
                        (b - dg.dot(n)).abs()
                    )));
                }
            }
        }
        Ok(())
    }
}

impl JumpData for CaseDefinition {
    fn jump_value(&self, interface_id: usize, p: Point) -> f64 {
        (self.jumps[interface_id].a)(p)
    }

    fn jump_normal_deriv(&self, interface_id: usize, p: Point, normal: Vec2) -> f64 {
        (self.jumps[interface_id].b)(p, normal)
    }

    fn jump_source(&self, interface_id: usize, p: Point) -> f64 {
        let (lo, hi) = self.pairs[interface_id];
        (self.regions[hi as usize].f)(p) - (self.regions[lo as usize].f)(p)
    }
}

impl ProblemData for CaseDefinition {
    fn source(&self, region: RegionId, p: Point) -> f64 {
        (self.regions[region as usize].f)(p)
    }

    fn source_second(&self, region: RegionId, p: Point) -> Option<(f64, f64)> {
        let r = &self.regions[region as usize];
        Some(((r.fxx)(p), (r.fyy)(p)))
    }

    fn source_grad(&self, region: RegionId, p: Point) -> Option<(f64, f64)> {
        let r = &self.regions[region as usize];
        Some(((r.fx)(p), (r.fy)(p)))
    }

    fn boundary(&self, p: Point) -> f64 {
        self.exact_u(self.boundary_region, p)
    }
}

// ---------------------------------------------------------------------------
// Shared analytic building blocks
// ---------------------------------------------------------------------------

/// Fields with `u = sin(πx) sin(πy) + shift`, `f = −2π² sin sin`.
fn region_sinsin(shift: f64) -> RegionFields {
    RegionFields {
        u: sf(move |p| (PI * p.x).sin() * (PI * p.y).sin() + shift),
        ux: sf(|p| PI * (PI * p.x).cos() * (PI * p.y).sin()),
        uy: sf(|p| PI * (PI * p.x).sin() * (PI * p.y).cos()),
        f: sf(|p| -2.0 * PI * PI * (PI * p.x).sin() * (PI * p.y).sin()),
        fx: sf(|p| -2.0 * PI.powi(3) * (PI * p.x).cos() * (PI * p.y).sin()),
        fy: sf(|p| -2.0 * PI.powi(3) * (PI * p.x).sin() * (PI * p.y).cos()),
        fxx: sf(|p| 2.0 * PI.powi(4) * (PI * p.x).sin() * (PI * p.y).sin()),
        fyy: sf(|p| 2.0 * PI.powi(4) * (PI * p.x).sin() * (PI * p.y).sin()),
    }
}

/// Fields with `u = sin(πx) (sin(πy) − exp(πy))`; the extra term is harmonic,
/// so the source matches `region_sinsin`.
fn region_sinsin_minus_exp() -> RegionFields {
    let base = region_sinsin(0.0);
    RegionFields {
        u: sf(|p| (PI * p.x).sin() * ((PI * p.y).sin() - (PI * p.y).exp())),
        ux: sf(|p| PI * (PI * p.x).cos() * ((PI * p.y).sin() - (PI * p.y).exp())),
        uy: sf(|p| PI * (PI * p.x).sin() * ((PI * p.y).cos() - (PI * p.y).exp())),
        ..base
    }
}

/// Fields with `u = exp(x) (x² sin y + y²)`.
fn region_exp_poly() -> RegionFields {
    RegionFields {
        u: sf(|p| p.x.exp() * (p.x * p.x * p.y.sin() + p.y * p.y)),
        ux: sf(|p| p.x.exp() * ((p.x * p.x + 2.0 * p.x) * p.y.sin() + p.y * p.y)),
        uy: sf(|p| p.x.exp() * (p.x * p.x * p.y.cos() + 2.0 * p.y)),
        f: sf(|p| p.x.exp() * (2.0 + p.y * p.y + (2.0 + 4.0 * p.x) * p.y.sin())),
        fx: sf(|p| p.x.exp() * (2.0 + p.y * p.y + (6.0 + 4.0 * p.x) * p.y.sin())),
        fy: sf(|p| p.x.exp() * (2.0 * p.y + (2.0 + 4.0 * p.x) * p.y.cos())),
        fxx: sf(|p| p.x.exp() * (2.0 + p.y * p.y + (10.0 + 4.0 * p.x) * p.y.sin())),
        fyy: sf(|p| p.x.exp() * (2.0 - (2.0 + 4.0 * p.x) * p.y.sin())),
    }
}

/// Fields with `u = exp(x) cos(y)` (harmonic).
fn region_exp_cos() -> RegionFields {
    RegionFields {
        u: sf(|p| p.x.exp() * p.y.cos()),
        ux: sf(|p| p.x.exp() * p.y.cos()),
        uy: sf(|p| -p.x.exp() * p.y.sin()),
        f: sf(|_| 0.0),
        fx: sf(|_| 0.0),
        fy: sf(|_| 0.0),
        fxx: sf(|_| 0.0),
        fyy: sf(|_| 0.0),
    }
}

/// Fields with `u = 0`.
fn region_zero() -> RegionFields {
    RegionFields {
        u: sf(|_| 0.0),
        ux: sf(|_| 0.0),
        uy: sf(|_| 0.0),
        f: sf(|_| 0.0),
        fx: sf(|_| 0.0),
        fy: sf(|_| 0.0),
        fxx: sf(|_| 0.0),
        fyy: sf(|_| 0.0),
    }
}

/// Level set of a circle in the squared form `(x−x₀)² + (y−y₀)² − r₀²`.
fn circle_level_set(center: Point, r: f64) -> LevelSetFn {
    Arc::new(move |p: Point| {
        let d = p - center;
        (d.dot(d) - r * r, d * 2.0)
    })
}

/// Parametric circle sampler with an outward or inward `hi` normal.
fn circle_curve(center: Point, r: f64, outward: bool) -> CurveFn {
    Arc::new(move |t: f64| {
        let theta = TAU * t;
        let radial = Point::new(theta.cos(), theta.sin());
        (center + radial * r, if outward { radial } else { -radial })
    })
}

/// Five-petal radius `r(θ) = r₀ + ε sin 5θ` about `(x₀, y₀)`.
const PETAL: (f64, f64, f64, f64) = (0.5, 0.5, 0.25, 0.05);

fn petal_radius(theta: f64) -> (f64, f64) {
    let (_, _, r0, eps) = PETAL;
    (r0 + eps * (5.0 * theta).sin(), 5.0 * eps * (5.0 * theta).cos())
}

/// Petal level set in the squared form `ρ² − r(θ)²`.
fn petal_level_set_squared() -> LevelSetFn {
    Arc::new(|p: Point| {
        let (x0, y0, r0, _) = PETAL;
        let d = p - Point::new(x0, y0);
        let rho2 = d.dot(d);
        if rho2 < 1e-30 {
            return (-r0 * r0, Point::new(0.0, 0.0));
        }
        let theta = d.y.atan2(d.x);
        let (r, dr) = petal_radius(theta);
        let g = d * 2.0 - Point::new(-d.y, d.x) * (2.0 * r * dr / rho2);
        (rho2 - r * r, g)
    })
}

/// Petal level set in the distance form `ρ − r(θ)`.
fn petal_level_set_distance() -> LevelSetFn {
    Arc::new(|p: Point| {
        let (x0, y0, r0, _) = PETAL;
        let d = p - Point::new(x0, y0);
        let rho = d.norm();
        if rho < 1e-15 {
            return (-r0, Point::new(0.0, 0.0));
        }
        let theta = d.y.atan2(d.x);
        let (_, dr) = petal_radius(theta);
        let g = d * (1.0 / rho) - Point::new(-d.y, d.x) * (dr / (rho * rho));
        (rho - petal_radius(theta).0, g)
    })
}

/// Petal curve sampler (normal toward the outside, which is the plus side).
fn petal_curve() -> CurveFn {
    Arc::new(|t: f64| {
        let (x0, y0, _, _) = PETAL;
        let theta = TAU * t;
        let (r, dr) = petal_radius(theta);
        let radial = Point::new(theta.cos(), theta.sin());
        let p = Point::new(x0, y0) + radial * r;
        // tangent of (r(θ) cos θ, r(θ) sin θ); normal = −perp(tangent),
        // oriented outward
        let tangent = radial * dr + radial.perp() * r;
        let n = -tangent.perp().normalized();
        (p, n)
    })
}

// ---------------------------------------------------------------------------
// The benchmark problems
// ---------------------------------------------------------------------------

fn case_ex1() -> CaseDefinition {
    CaseDefinition {
        name: "ex1",
        domain: Rect::new(0.0, 1.0, 0.0, 1.0),
        interface: InterfaceSpec::LevelSet(circle_level_set(Point::new(0.5, 0.5), 0.1)),
        regions: vec![region_sinsin_minus_exp(), region_sinsin(0.0)],
        pairs: vec![(0, 1)],
        jumps: vec![JumpPair {
            a: sf(|p| (PI * p.x).sin() * (PI * p.y).exp()),
            b: Arc::new(|p: Point, n: Vec2| {
                PI * ((PI * p.x).cos() * (PI * p.y).exp() * n.x
                    + (PI * p.x).sin() * (PI * p.y).exp() * n.y)
            }),
        }],
        boundary_region: 1,
        curves: vec![circle_curve(Point::new(0.5, 0.5), 0.1, true)],
    }
}

fn case_ex2() -> CaseDefinition {
    CaseDefinition {
        name: "ex2",
        domain: Rect::new(0.0, 1.0, 0.0, 1.0),
        interface: InterfaceSpec::LevelSet(petal_level_set_squared()),
        regions: vec![region_exp_cos(), region_zero()],
        pairs: vec![(0, 1)],
        jumps: vec![JumpPair {
            a: sf(|p| -p.x.exp() * p.y.cos()),
            b: Arc::new(|p: Point, n: Vec2| {
                -p.x.exp() * p.y.cos() * n.x + p.x.exp() * p.y.sin() * n.y
            }),
        }],
        boundary_region: 1,
        curves: vec![petal_curve()],
    }
}

fn case_ex3() -> CaseDefinition {
    let two_circles: LevelSetFn = Arc::new(|p: Point| {
        let d1 = p - Point::new(0.25, 0.25);
        let d2 = p - Point::new(0.75, 0.75);
        let g1 = d1.dot(d1) - 0.15 * 0.15;
        let g2 = d2.dot(d2) - 0.1 * 0.1;
        (g1 * g2, d1 * (2.0 * g2) + d2 * (2.0 * g1))
    });
    // region 0 = inside either circle (u⁻ = 10(x²+y²)), region 1 = outside
    let inside = RegionFields {
        u: sf(|p| 10.0 * (p.x * p.x + p.y * p.y)),
        ux: sf(|p| 20.0 * p.x),
        uy: sf(|p| 20.0 * p.y),
        f: sf(|_| 40.0),
        fx: sf(|_| 0.0),
        fy: sf(|_| 0.0),
        fxx: sf(|_| 0.0),
        fyy: sf(|_| 0.0),
    };
    CaseDefinition {
        name: "ex3",
        domain: Rect::new(0.0, 1.0, 0.0, 1.0),
        interface: InterfaceSpec::LevelSet(two_circles),
        regions: vec![inside, region_exp_poly()],
        pairs: vec![(0, 1)],
        jumps: vec![JumpPair {
            a: sf(|p| {
                p.x.exp() * (p.x * p.x * p.y.sin() + p.y * p.y)
                    - 10.0 * (p.x * p.x + p.y * p.y)
            }),
            b: Arc::new(|p: Point, n: Vec2| {
                (p.x.exp() * ((p.x * p.x + 2.0 * p.x) * p.y.sin() + p.y * p.y) - 20.0 * p.x)
                    * n.x
                    + (p.x.exp() * (p.x * p.x * p.y.cos() + 2.0 * p.y) - 20.0 * p.y) * n.y
            }),
        }],
        boundary_region: 1,
        // both circles belong to the same level-set interface (id 0); the
        // audit samples them through two half-ranges of a single curve
        curves: vec![Arc::new(|t: f64| {
            let (c, r) = if t < 0.5 {
                (Point::new(0.25, 0.25), 0.15)
            } else {
                (Point::new(0.75, 0.75), 0.1)
            };
            let theta = TAU * (2.0 * t);
            let radial = Point::new(theta.cos(), theta.sin());
            (c + radial * r, radial)
        })],
    }
}

/// Contact angle of the tangent circles in examples 4 and 5.
fn contact_angle() -> f64 {
    PI / (E * E)
}

fn case_ex4() -> CaseDefinition {
    let theta = contact_angle();
    let (r_b, r_s) = (0.3, 0.1);
    let c_b = Point::new(0.5, 0.5);
    // small circle externally tangent at polar angle θ on the big circle:
    // x_s = x_b + r_B cos θ − r_S cos(θ + π), and likewise in y
    let c_s = Point::new(
        c_b.x + r_b * theta.cos() - r_s * (theta + PI).cos(),
        c_b.y + r_b * theta.sin() - r_s * (theta + PI).sin(),
    );
    let big = CircleInterface { center: c_b, radius: r_b, pair: (1, 2), hi_is_outside: true };
    let small = CircleInterface { center: c_s, radius: r_s, pair: (2, 3), hi_is_outside: false };
    let u1 = region_sinsin(5.0);
    let u2 = region_exp_poly();
    let u3 = region_sinsin_minus_exp();
    CaseDefinition {
        name: "ex4",
        domain: Rect::new(0.0, 1.0, 0.0, 1.0),
        interface: InterfaceSpec::Circles {
            circles: vec![big, small],
            priority: vec![(0, 1), (1, 3)],
            fallback: 2,
        },
        // region 0 is unused; regions are numbered 1..3 as in the problem
        regions: vec![region_zero(), u1, u2, u3],
        pairs: vec![(1, 2), (2, 3)],
        jumps: vec![
            JumpPair {
                a: sf(|p| {
                    p.x.exp() * (p.x * p.x * p.y.sin() + p.y * p.y)
                        - (PI * p.x).sin() * (PI * p.y).sin()
                        - 5.0
                }),
                b: Arc::new(|p: Point, n: Vec2| {
                    (p.x.exp() * ((p.x * p.x + 2.0 * p.x) * p.y.sin() + p.y * p.y)
                        - PI * (PI * p.x).cos() * (PI * p.y).sin())
                        * n.x
                        + (p.x.exp() * (p.x * p.x * p.y.cos() + 2.0 * p.y)
                            - PI * (PI * p.x).sin() * (PI * p.y).cos())
                            * n.y
                }),
            },
            JumpPair {
                a: sf(|p| {
                    (PI * p.x).sin() * ((PI * p.y).sin() - (PI * p.y).exp())
                        - p.x.exp() * (p.x * p.x * p.y.sin() + p.y * p.y)
                }),
                b: Arc::new(|p: Point, n: Vec2| {
                    (PI * (PI * p.x).cos() * ((PI * p.y).sin() - (PI * p.y).exp())
                        - p.x.exp() * ((p.x * p.x + 2.0 * p.x) * p.y.sin() + p.y * p.y))
                        * n.x
                        + (PI * (PI * p.x).sin() * ((PI * p.y).cos() - (PI * p.y).exp())
                            - p.x.exp() * (p.x * p.x * p.y.cos() + 2.0 * p.y))
                            * n.y
                }),
            },
        ],
        boundary_region: 2,
        curves: vec![circle_curve(c_b, r_b, true), circle_curve(c_s, r_s, false)],
    }
}

fn case_ex5() -> CaseDefinition {
    let theta = contact_angle();
    let (r_b, r_s) = (0.3, 0.1);
    let c_b = Point::new(0.5, 0.5);
    // small circle internally tangent: centers separated by r_B − r_S
    let c_s = Point::new(
        c_b.x + (r_b - r_s) * theta.cos(),
        c_b.y + (r_b - r_s) * theta.sin(),
    );
    let small = CircleInterface { center: c_s, radius: r_s, pair: (1, 2), hi_is_outside: true };
    let big = CircleInterface { center: c_b, radius: r_b, pair: (2, 3), hi_is_outside: true };
    CaseDefinition {
        name: "ex5",
        domain: Rect::new(0.0, 1.0, 0.0, 1.0),
        interface: InterfaceSpec::Circles {
            circles: vec![small, big],
            priority: vec![(0, 1), (1, 2)],
            fallback: 3,
        },
        regions: vec![region_zero(), region_sinsin(5.0), region_sinsin_minus_exp(), region_exp_poly()],
        pairs: vec![(1, 2), (2, 3)],
        jumps: vec![
            JumpPair {
                a: sf(|p| -((PI * p.x).sin() * (PI * p.y).exp() + 5.0)),
                b: Arc::new(|p: Point, n: Vec2| {
                    -PI * ((PI * p.x).cos() * (PI * p.y).exp() * n.x
                        + (PI * p.x).sin() * (PI * p.y).exp() * n.y)
                }),
            },
            JumpPair {
                a: sf(|p| {
                    p.x.exp() * (p.x * p.x * p.y.sin() + p.y * p.y)
                        - (PI * p.x).sin() * ((PI * p.y).sin() - (PI * p.y).exp())
                }),
                b: Arc::new(|p: Point, n: Vec2| {
                    (p.x.exp() * ((p.x * p.x + 2.0 * p.x) * p.y.sin() + p.y * p.y)
                        - PI * (PI * p.x).cos() * ((PI * p.y).sin() - (PI * p.y).exp()))
                        * n.x
                        + (p.x.exp() * (p.x * p.x * p.y.cos() + 2.0 * p.y)
                            - PI * (PI * p.x).sin() * ((PI * p.y).cos() - (PI * p.y).exp()))
                            * n.y
                }),
            },
        ],
        boundary_region: 3,
        curves: vec![circle_curve(c_s, r_s, true), circle_curve(c_b, r_b, true)],
    }
}

fn case_ex1s() -> CaseDefinition {
    let quadratic = RegionFields {
        u: sf(|p| p.x * p.x + p.y * p.y),
        ux: sf(|p| 2.0 * p.x),
        uy: sf(|p| 2.0 * p.y),
        f: sf(|_| 4.0),
        fx: sf(|_| 0.0),
        fy: sf(|_| 0.0),
        fxx: sf(|_| 0.0),
        fyy: sf(|_| 0.0),
    };
    CaseDefinition {
        name: "ex1s",
        domain: Rect::new(0.0, 1.0, 0.0, 1.0),
        interface: InterfaceSpec::LevelSet(petal_level_set_distance()),
        regions: vec![region_exp_cos(), quadratic],
        pairs: vec![(0, 1)],
        jumps: vec![JumpPair {
            a: sf(|p| p.x * p.x + p.y * p.y - p.x.exp() * p.y.cos()),
            b: Arc::new(|p: Point, n: Vec2| {
                (2.0 * p.x - p.x.exp() * p.y.cos()) * n.x
                    + (2.0 * p.y + p.x.exp() * p.y.sin()) * n.y
            }),
        }],
        boundary_region: 1,
        curves: vec![petal_curve()],
    }
}

fn case_ex2s() -> CaseDefinition {
    let log_field = RegionFields {
        u: sf(|p| 1.0 + (2.0 * p.norm()).ln()),
        ux: sf(|p| p.x / p.dot(p)),
        uy: sf(|p| p.y / p.dot(p)),
        f: sf(|_| 0.0),
        fx: sf(|_| 0.0),
        fy: sf(|_| 0.0),
        fxx: sf(|_| 0.0),
        fyy: sf(|_| 0.0),
    };
    let constant = RegionFields {
        u: sf(|_| 1.0),
        ux: sf(|_| 0.0),
        uy: sf(|_| 0.0),
        f: sf(|_| 0.0),
        fx: sf(|_| 0.0),
        fy: sf(|_| 0.0),
        fxx: sf(|_| 0.0),
        fyy: sf(|_| 0.0),
    };
    let circle: LevelSetFn = Arc::new(|p: Point| {
        let rho = p.norm();
        if rho < 1e-15 {
            return (-0.5, Point::new(0.0, 0.0));
        }
        (rho - 0.5, p * (1.0 / rho))
    });
    CaseDefinition {
        name: "ex2s",
        domain: Rect::new(-1.0, 1.0, -1.0, 1.0),
        interface: InterfaceSpec::LevelSet(circle),
        regions: vec![constant, log_field],
        pairs: vec![(0, 1)],
        jumps: vec![JumpPair {
            a: sf(|p| (2.0 * (p.x * p.x + p.y * p.y).sqrt()).ln()),
            b: Arc::new(|p: Point, n: Vec2| (p.x * n.x + p.y * n.y) / (p.x * p.x + p.y * p.y)),
        }],
        boundary_region: 1,
        curves: vec![circle_curve(Point::new(0.0, 0.0), 0.5, true)],
    }
}

fn case_ex3s() -> CaseDefinition {
    let circle: LevelSetFn = Arc::new(|p: Point| {
        let rho = p.norm();
        if rho < 1e-15 {
            return (-0.5, Point::new(0.0, 0.0));
        }
        (rho - 0.5, p * (1.0 / rho))
    });
    CaseDefinition {
        name: "ex3s",
        domain: Rect::new(-1.0, 1.0, -1.0, 1.0),
        interface: InterfaceSpec::LevelSet(circle),
        regions: vec![region_exp_cos(), region_zero()],
        pairs: vec![(0, 1)],
        jumps: vec![JumpPair {
            a: sf(|p| -p.x.exp() * p.y.cos()),
            b: Arc::new(|p: Point, n: Vec2| {
                p.x.exp() * (-p.y.cos() * n.x + p.y.sin() * n.y)
            }),
        }],
        boundary_region: 1,
        curves: vec![circle_curve(Point::new(0.0, 0.0), 0.5, true)],
    }
}

/// All built-in benchmark problems by name. Every case is audited against
/// its exact solution on construction.
pub fn builtin_cases() -> BTreeMap<&'static str, CaseDefinition> {
    [
        case_ex1(),
        case_ex2(),
        case_ex3(),
        case_ex4(),
        case_ex5(),
        case_ex1s(),
        case_ex2s(),
        case_ex3s(),
    ]
    .into_iter()
    .map(|c| {
        c.validate().expect("built-in case data is consistent");
        (c.name, c)
    })
    .collect()
}

// ---------------------------------------------------------------------------
// Pipeline driver
// ---------------------------------------------------------------------------

/// Options of one solve.
#[derive(Debug, Clone, Copy)]
pub struct RunOptions {
    pub scheme: Scheme,
    pub cauchy: CauchyConfig,
}

impl RunOptions {
    pub fn fourth_order() -> Self {
        RunOptions { scheme: Scheme::FourthOrder, cauchy: CauchyConfig::fourth_order() }
    }

    pub fn second_order() -> Self {
        RunOptions { scheme: Scheme::SecondOrder, cauchy: CauchyConfig::second_order() }
    }
}

/// Discrete error norms: maximum and root-mean-square over nodes.
#[derive(Debug, Clone, Copy, Default)]
pub struct ErrorNorms {
    pub l2_u: f64,
    pub linf_u: f64,
    pub l2_grad: f64,
    pub linf_grad: f64,
}

/// Result of one solve.
pub struct SolveOutput {
    pub grid: Grid,
    pub sides: SideMap,
    pub field: FieldPair,
    pub norms: ErrorNorms,
    pub boxes: Vec<BoxReport>,
    pub seconds: f64,
}

impl SolveOutput {
    pub fn u(&self) -> &[f64] {
        &self.field.u
    }

    pub fn grad(&self) -> &[(f64, f64)] {
        self.field.grad.as_deref().unwrap_or(&[])
    }
}

/// Run the full pipeline for one case on one grid.
pub fn solve_case(case: &CaseDefinition, nx: usize, ny: usize, opts: &RunOptions) -> Result<SolveOutput> {
    let start = Instant::now();
    let grid = Grid::new(nx, ny, case.domain)?;
    let rep = case.build_interface(&grid, opts.scheme);
    let sides = classify_nodes(&grid, &rep);
    let stencils = irregular_stencils(&grid, &sides, opts.scheme.stencil_kind());
    let set = compute_corrections(&grid, &sides, &rep, case, &stencils, &opts.cauchy)?;
    let mut system = assemble_system(&grid, &sides, case, opts.scheme)?;
    let terms = correction_terms(&stencils, &set.per_stencil, &sides, opts.scheme, &grid)?;
    apply_corrections(&mut system, &terms);
    let u = solve_linear(&system)?;
    let grad = gradient_field(&grid, &u, &set.per_stencil, case, &sides, opts.scheme)?;
    let norms = error_norms(case, &grid, &sides, &u, Some(&grad));
    Ok(SolveOutput {
        grid,
        sides,
        field: FieldPair { u, grad: Some(grad) },
        norms,
        boxes: set.boxes,
        seconds: start.elapsed().as_secs_f64(),
    })
}

/// Max and RMS errors of the field over all nodes, and of the gradient over
/// the interior nodes where it is defined.
pub fn error_norms(
    case: &CaseDefinition,
    grid: &Grid,
    sides: &SideMap,
    u: &[f64],
    grad: Option<&[(f64, f64)]>,
) -> ErrorNorms {
    let mut n = ErrorNorms::default();
    let mut sum2 = 0.0;
    for (i, j) in grid.nodes() {
        let p = grid.node(i, j);
        let e = (u[grid.idx(i, j)] - case.exact_u(sides.region(i, j), p)).abs();
        n.linf_u = n.linf_u.max(e);
        sum2 += e * e;
    }
    n.l2_u = (sum2 / grid.n_nodes() as f64).sqrt();

    if let Some(grad) = grad {
        let mut sum2 = 0.0;
        let mut count = 0usize;
        for (i, j) in grid.interior_nodes() {
            let p = grid.node(i, j);
            let t = case.exact_grad(sides.region(i, j), p);
            let (gx, gy) = grad[grid.idx(i, j)];
            let e = (gx - t.x).hypot(gy - t.y);
            n.linf_grad = n.linf_grad.max(e);
            sum2 += e * e;
            count += 1;
        }
        n.l2_grad = (sum2 / count as f64).sqrt();
    }
    n
}

// ---------------------------------------------------------------------------
// Convergence studies
// ---------------------------------------------------------------------------

/// One grid row of a convergence study.
#[derive(Debug, Clone)]
pub struct ConvergenceRow {
    pub nx: usize,
    pub ny: usize,
    pub h: f64,
    pub norms: ErrorNorms,
    pub seconds: f64,
}

/// Errors per grid plus fitted convergence slopes.
#[derive(Debug, Clone)]
pub struct ConvergenceReport {
    pub case: String,
    pub scheme: Scheme,
    pub strategy: crate::cauchy::Strategy,
    pub basis: crate::cauchy::BasisKind,
    pub rows: Vec<ConvergenceRow>,
}

/// Least-squares slope of `log e` against `log h`.
pub fn fit_slope(hs: &[f64], errs: &[f64]) -> f64 {
    let n = hs.len() as f64;
    let xs: Vec<f64> = hs.iter().map(|h| h.ln()).collect();
    let ys: Vec<f64> = errs.iter().map(|e| e.max(1e-300).ln()).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

/// Fitted slopes of the four error columns.
#[derive(Debug, Clone, Copy)]
pub struct Slopes {
    pub l2_u: f64,
    pub linf_u: f64,
    pub l2_grad: f64,
    pub linf_grad: f64,
}

impl ConvergenceReport {
    pub fn slopes(&self) -> Slopes {
        let hs: Vec<f64> = self.rows.iter().map(|r| r.h).collect();
        let col = |f: fn(&ErrorNorms) -> f64| -> f64 {
            let errs: Vec<f64> = self.rows.iter().map(|r| f(&r.norms)).collect();
            fit_slope(&hs, &errs)
        };
        Slopes {
            l2_u: col(|n| n.l2_u),
            linf_u: col(|n| n.linf_u),
            l2_grad: col(|n| n.l2_grad),
            linf_grad: col(|n| n.linf_grad),
        }
    }

    pub fn scheme_label(&self) -> &'static str {
        match self.scheme {
            Scheme::SecondOrder => "order2",
            Scheme::FourthOrder => "order4",
        }
    }

    pub fn strategy_label(&self) -> &'static str {
        match self.strategy {
            crate::cauchy::Strategy::Naive => "naive",
            crate::cauchy::Strategy::Compact => "compact",
            crate::cauchy::Strategy::Free => "free",
            crate::cauchy::Strategy::NodeCentered => "node",
        }
    }

    pub fn basis_label(&self) -> &'static str {
        match self.basis {
            crate::cauchy::BasisKind::Bicubic12 => "bicubic",
            crate::cauchy::BasisKind::ModifiedBilinear5 => "mb",
            crate::cauchy::BasisKind::StandardBilinear4 => "sb",
        }
    }

    /// CSV with one header row; floats in round-trip scientific notation.
    pub fn to_csv(&self) -> String {
        let mut out =
            String::from("case,scheme,strategy,basis,nx,ny,h,L2_u,Linf_u,L2_grad,Linf_grad,seconds\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{},{:e},{:e},{:e},{:e},{:e},{:e}\n",
                self.case,
                self.scheme_label(),
                self.strategy_label(),
                self.basis_label(),
                r.nx,
                r.ny,
                r.h,
                r.norms.l2_u,
                r.norms.linf_u,
                r.norms.l2_grad,
                r.norms.linf_grad,
                r.seconds
            ));
        }
        out
    }
}

/// Run the pipeline over a list of square grids and fit convergence slopes.
pub fn convergence_study(
    case: &CaseDefinition,
    grids: &[usize],
    opts: &RunOptions,
) -> Result<ConvergenceReport> {
    if grids.len() < 3 {
        return Err(Error::invalid("a convergence study needs at least 3 grids"));
    }
    let mut rows = Vec::with_capacity(grids.len());
    for &n in grids {
        let out = solve_case(case, n, n, opts)?;
        rows.push(ConvergenceRow {
            nx: n,
            ny: n,
            h: out.grid.hx(),
            norms: out.norms,
            seconds: out.seconds,
        });
    }
    Ok(ConvergenceReport {
        case: case.name.to_string(),
        scheme: opts.scheme,
        strategy: opts.cauchy.strategy,
        basis: opts.cauchy.basis,
        rows,
    })
}
