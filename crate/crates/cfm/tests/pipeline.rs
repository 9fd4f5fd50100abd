//! End-to-end invariants of the solve pipeline beyond the acceptance
//! criteria: sharp capture of the discontinuity, bounded convergence
//! oscillations, determinism, and interface-sample sanity.

use cfm::cauchy::{
    assemble_local_system, build_omega, solve_local, stencil_extraction_region, BoxOwner,
    CauchyConfig, JumpData, Strategy,
};
use cfm::geom::{Point, Rect, Vec2};
use cfm::grid::{classify_nodes, irregular_stencils, Grid, StencilKind};
use cfm::harness::{builtin_cases, convergence_study, fit_slope, solve_case, RunOptions};
use cfm::interface::{InterfaceRep, LevelSetField};

fn bench_options() -> RunOptions {
    let mut opts = RunOptions::fourth_order();
    opts.cauchy.strategy = Strategy::Free;
    opts
}

/// The error next to the interface obeys the same fourth-order decay as the
/// bulk: no smeared band forms around the discontinuity.
#[test]
fn interface_band_error_converges_at_full_order() {
    let cases = builtin_cases();
    let case = &cases["ex1"];
    let mut hs = Vec::new();
    let mut band_errs = Vec::new();
    for n in [33usize, 65, 129] {
        let out = solve_case(case, n, n, &bench_options()).unwrap();
        let grid = &out.grid;
        let band = (grid.hx() * grid.hx() + grid.hy() * grid.hy()).sqrt();
        let mut band_err: f64 = 0.0;
        for (i, j) in grid.nodes() {
            let p = grid.node(i, j);
            let dist = ((p.x - 0.5).hypot(p.y - 0.5) - 0.1).abs();
            if dist <= band {
                let e = (out.u()[grid.idx(i, j)]
                    - case.exact_u(out.sides.region(i, j), p))
                .abs();
                band_err = band_err.max(e);
            }
        }
        hs.push(grid.hx());
        band_errs.push(band_err);
    }
    let slope = fit_slope(&hs, &band_errs);
    assert!(slope >= 3.3, "near-interface error slope {slope:.2} below fourth order");
}

/// Per-grid deviations from the fitted convergence line stay within half a
/// decade.
#[test]
fn convergence_oscillations_are_bounded() {
    let cases = builtin_cases();
    let report =
        convergence_study(&cases["ex1"], &[33, 65, 97, 129, 193], &bench_options()).unwrap();
    let hs: Vec<f64> = report.rows.iter().map(|r| r.h).collect();
    let es: Vec<f64> = report.rows.iter().map(|r| r.norms.linf_u).collect();
    let slope = fit_slope(&hs, &es);
    // intercept of the least-squares line in log-log space
    let mean_x = hs.iter().map(|h| h.ln()).sum::<f64>() / hs.len() as f64;
    let mean_y = es.iter().map(|e| e.ln()).sum::<f64>() / es.len() as f64;
    for (h, e) in hs.iter().zip(&es) {
        let fitted = mean_y + slope * (h.ln() - mean_x);
        let dev = (e.ln() - fitted).abs() / std::f64::consts::LN_10;
        assert!(dev <= 0.5, "deviation of {dev:.2} decades from the fitted line");
    }
}

#[test]
fn pipeline_is_deterministic() {
    let cases = builtin_cases();
    let case = &cases["ex2"];
    let a = solve_case(case, 49, 49, &RunOptions::fourth_order()).unwrap();
    let b = solve_case(case, 49, 49, &RunOptions::fourth_order()).unwrap();
    assert_eq!(a.sides, b.sides);
    assert_eq!(a.u(), b.u(), "reruns must produce identical nodal solutions");
    assert_eq!(a.grad(), b.grad());
    assert_eq!(a.boxes.len(), b.boxes.len());
}

#[test]
fn stencil_lists_are_deterministic_and_partitioned() {
    let cases = builtin_cases();
    let case = &cases["ex3"];
    let grid = Grid::new(65, 65, case.domain).unwrap();
    let rep = case.build_interface(&grid, cfm::assembly::Scheme::FourthOrder);
    let sides_a = classify_nodes(&grid, &rep);
    let sides_b = classify_nodes(&grid, &rep);
    assert_eq!(sides_a, sides_b);
    let st_a = irregular_stencils(&grid, &sides_a, StencilKind::NinePoint);
    let st_b = irregular_stencils(&grid, &sides_b, StencilKind::NinePoint);
    assert_eq!(st_a, st_b);
    // each center appears exactly once
    let mut centers: Vec<_> = st_a.iter().map(|s| s.center).collect();
    centers.dedup();
    assert_eq!(centers.len(), st_a.len());
}

/// Quadrature samples returned for the petal case sit on the discrete zero
/// set with positive weights summing to the segment arc lengths.
#[test]
fn interface_samples_are_consistent() {
    let cases = builtin_cases();
    let case = &cases["ex2"];
    let grid = Grid::new(65, 65, case.domain).unwrap();
    let rep = case.build_interface(&grid, cfm::assembly::Scheme::FourthOrder);
    let sides = classify_nodes(&grid, &rep);
    let stencils = irregular_stencils(&grid, &sides, StencilKind::NinePoint);
    let cfg = CauchyConfig::fourth_order();
    let mut n_samples = 0;
    for st in stencils.iter().step_by(5) {
        let region = stencil_extraction_region(cfg.strategy, st.kind, &grid, st.center);
        let pieces = rep.pieces_in(0, &region).unwrap();
        for piece in &pieces {
            let omega = build_omega(
                cfg.strategy,
                BoxOwner::Stencil(st.center),
                &rep,
                0,
                Some(piece),
                &st.opposite,
                &grid,
                &cfg,
            )
            .unwrap();
            for seg in &omega.segments {
                let total: f64 = seg.samples.iter().map(|s| s.weight).sum();
                assert!((total - seg.arc_length).abs() <= 1e-12 * (1.0 + seg.arc_length));
                for s in &seg.samples {
                    assert!(s.weight >= 0.0);
                    assert!((s.normal.norm() - 1.0).abs() <= 1e-12);
                    if let InterfaceRep::LevelSet(ls) = &rep {
                        let scale = ls.grad(s.pos).norm() * grid.hx();
                        assert!(
                            ls.eval(s.pos).abs() <= 1e-9 * scale.max(1e-12),
                            "sample off the zero set"
                        );
                    }
                    n_samples += 1;
                }
            }
        }
    }
    assert!(n_samples > 50);
}

struct LinearJump;
impl JumpData for LinearJump {
    fn jump_value(&self, _id: usize, p: Point) -> f64 {
        p.x + p.y
    }
    fn jump_normal_deriv(&self, _id: usize, _p: Point, n: Vec2) -> f64 {
        n.x + n.y
    }
    fn jump_source(&self, _id: usize, _p: Point) -> f64 {
        0.0
    }
}

/// Hermite corner interpolation: the solved field evaluated at a box corner
/// equals the corresponding corner coefficient.
#[test]
fn correction_field_corner_evaluation() {
    let grid = Grid::new(33, 33, Rect::new(0.0, 1.0, 0.0, 1.0)).unwrap();
    let rep = InterfaceRep::LevelSet(LevelSetField::from_analytic(&grid, |p| {
        let d = p - Point::new(0.5, 0.5);
        (d.dot(d) - 0.01, d * 2.0)
    }));
    let sides = classify_nodes(&grid, &rep);
    let stencils = irregular_stencils(&grid, &sides, StencilKind::NinePoint);
    let cfg = CauchyConfig::fourth_order();
    let st = &stencils[0];
    let region = stencil_extraction_region(cfg.strategy, st.kind, &grid, st.center);
    let pieces = rep.pieces_in(0, &region).unwrap();
    let omega = build_omega(
        cfg.strategy,
        BoxOwner::Stencil(st.center),
        &rep,
        0,
        Some(&pieces[0]),
        &st.opposite,
        &grid,
        &cfg,
    )
    .unwrap();
    let sys = assemble_local_system(&omega, &LinearJump, &cfg).unwrap();
    let field = solve_local(&sys).unwrap();
    let (a, b) = omega.half_extents();
    let corner = omega.center() - Point::new(a, b); // compact boxes are axis-aligned
    assert!((field.eval(corner) - field.coeffs[0]).abs() <= 1e-12 * (1.0 + field.coeffs[0].abs()));
}
/// The petal case must keep exercising stencils crossed twice by the same
/// interface, which get one box per piece.
#[test]
fn petal_produces_multi_piece_stencils() {
    let cases = builtin_cases();
    let case = &cases["ex2"];
    let grid = Grid::new(65, 65, case.domain).unwrap();
    let rep = case.build_interface(&grid, cfm::assembly::Scheme::FourthOrder);
    let sides = classify_nodes(&grid, &rep);
    let stencils = irregular_stencils(&grid, &sides, StencilKind::NinePoint);
    let cfg = CauchyConfig::fourth_order();
    let mut multi = 0;
    for st in &stencils {
        let region = stencil_extraction_region(cfg.strategy, st.kind, &grid, st.center);
        if rep.pieces_in(0, &region).unwrap().len() > 1 {
            multi += 1;
        }
    }
    assert!(multi >= 2, "expected multi-piece stencils in the petal case, found {multi}");
}

/// The pipeline supports unequal spacings end-to-end.
#[test]
fn rectangular_grids_work_end_to_end() {
    let cases = builtin_cases();
    let case = &cases["ex1"];
    let mut hs = Vec::new();
    let mut errs = Vec::new();
    for (nx, ny) in [(49usize, 65usize), (97, 129), (145, 193)] {
        let out = solve_case(case, nx, ny, &RunOptions::fourth_order()).unwrap();
        assert!(out.grid.hx() != out.grid.hy());
        hs.push(out.grid.hx());
        errs.push(out.norms.linf_u);
    }
    // three grids give a noisy fit (convergence oscillates realization to
    // realization); the headline asymptotics are pinned by the acceptance
    // suite on five grids, so this checks functionality and scale
    let order = fit_slope(&hs, &errs);
    assert!(order > 2.5, "rectangular-grid refinement order {order:.2} (errors {errs:?})");
    assert!(errs[2] < 1e-7, "rectangular-grid error {:.3e} too large", errs[2]);
    // desk-scale bound: a 33x33 solve finishes promptly
    let t = std::time::Instant::now();
    solve_case(case, 33, 33, &RunOptions::fourth_order()).unwrap();
    assert!(t.elapsed().as_secs_f64() < 1.0, "33x33 solve exceeded one second");
}

/// The node-centered construction must handle nodes on symmetry lines, where
/// the closest-point iteration rides the sampled gradient's cell-edge jumps.
#[test]
fn node_centered_strategy_runs_on_level_set_cases() {
    let cases = builtin_cases();
    let mut opts = RunOptions::fourth_order();
    opts.cauchy.strategy = Strategy::NodeCentered;
    for name in ["ex2", "ex3"] {
        let out = solve_case(&cases[name], 33, 33, &opts)
            .unwrap_or_else(|e| panic!("{name} with node-centered boxes: {e}"));
        assert!(out.norms.linf_u < 1e-3, "{name}: error {:.3e}", out.norms.linf_u);
    }
}
