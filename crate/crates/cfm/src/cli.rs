//! Command-line entry point: single solves, convergence studies, and
//! diagnostic dumps over the built-in benchmark problems.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};

use crate::assembly::Scheme;
use crate::cauchy::{BasisKind, CauchyConfig, Strategy};
use crate::harness::{builtin_cases, convergence_study, solve_case, RunOptions};
use crate::Result;

#[derive(Parser)]
#[command(
    name = "cfm",
    about = "Poisson solver with sharp interface jumps via correction functions",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a convergence study over one benchmark case and report fitted
    /// slopes.
    Solve(SolveArgs),
    /// List the built-in benchmark cases.
    Cases,
}

#[derive(Args, Default)]
struct SolveArgs {
    /// Benchmark case name (see `cfm cases`).
    #[arg(long)]
    case: Option<String>,
    /// Discretization order: 2 (5-point stencil) or 4 (9-point stencil).
    #[arg(long)]
    order: Option<u8>,
    /// Correction basis: bicubic, mb (modified bilinear), sb (standard bilinear).
    #[arg(long)]
    basis: Option<String>,
    /// Patch construction: naive, compact, free, node.
    #[arg(long)]
    strategy: Option<String>,
    /// Penalization coefficient of the interface terms.
    #[arg(long)]
    cp: Option<f64>,
    /// Comma-separated grid sizes, e.g. 33,65,97,129,193.
    #[arg(long)]
    grids: Option<String>,
    /// Write the convergence table as CSV.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write the finest-grid nodal fields (x, y, region, u, exact, error,
    /// gradient) as CSV.
    #[arg(long)]
    dump_fields: Option<PathBuf>,
    /// Write the finest-grid patch diagnostics (center, extents, rotation,
    /// characteristic length, condition estimate, J_P residual) as CSV.
    #[arg(long)]
    dump_boxes: Option<PathBuf>,
    /// Read key=value defaults from a file; explicit flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
}

/// Run the command line. Returns the process exit code: 0 on success, 1 on
/// solver failure, 2 on usage errors.
pub fn run(args: impl IntoIterator<Item = String>) -> i32 {
    let argv: Vec<String> = std::iter::once("cfm".to_string()).chain(args).collect();
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 2,
            };
            let _ = e.print();
            return code;
        }
    };

    if let Ok(threads) = std::env::var("CFM_THREADS") {
        if let Ok(n) = threads.parse::<usize>() {
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
    }

    match cli.command {
        Command::Cases => {
            for name in builtin_cases().keys() {
                println!("{name}");
            }
            0
        }
        Command::Solve(args) => match solve_command(args) {
            Ok(()) => 0,
            Err(CliError::Usage(msg)) => {
                eprintln!("error: {msg}");
                eprintln!("run `cfm solve --help` for usage");
                2
            }
            Err(CliError::Run(e)) => {
                eprintln!("error: {e}");
                1
            }
        },
    }
}

enum CliError {
    Usage(String),
    Run(crate::Error),
}

impl From<crate::Error> for CliError {
    fn from(e: crate::Error) -> Self {
        CliError::Run(e)
    }
}

/// Key=value file with the same keys as the long flags.
fn load_config(path: &Path) -> std::result::Result<BTreeMap<String, String>, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
    let mut map = BTreeMap::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("config line {} is not key=value", lineno + 1)))?;
        map.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(map)
}

fn solve_command(args: SolveArgs) -> std::result::Result<(), CliError> {
    let config = match &args.config {
        Some(path) => load_config(path)?,
        None => BTreeMap::new(),
    };
    let pick = |flag: &Option<String>, key: &str| -> Option<String> {
        flag.clone().or_else(|| config.get(key).cloned())
    };

    let case_name = pick(&args.case, "case").unwrap_or_else(|| "ex1".to_string());
    let cases = builtin_cases();
    let case = cases.get(case_name.as_str()).ok_or_else(|| {
        let names: Vec<&str> = cases.keys().copied().collect();
        CliError::Usage(format!("unknown case `{case_name}`; available: {}", names.join(", ")))
    })?;

    let order = match pick(&args.order.map(|o| o.to_string()), "order").as_deref() {
        None | Some("4") => Scheme::FourthOrder,
        Some("2") => Scheme::SecondOrder,
        Some(o) => return Err(CliError::Usage(format!("order must be 2 or 4, got {o}"))),
    };
    // unspecified basis/strategy/quadrature resolve against the scheme
    let mut cauchy = match order {
        Scheme::FourthOrder => CauchyConfig::fourth_order(),
        Scheme::SecondOrder => CauchyConfig::second_order(),
    };
    if order == Scheme::FourthOrder {
        cauchy.strategy = Strategy::Compact;
    }
    if let Some(b) = pick(&args.basis, "basis") {
        cauchy.basis = match b.as_str() {
            "bicubic" => BasisKind::Bicubic12,
            "mb" => BasisKind::ModifiedBilinear5,
            "sb" => BasisKind::StandardBilinear4,
            other => return Err(CliError::Usage(format!("unknown basis `{other}`"))),
        };
    }
    if let Some(s) = pick(&args.strategy, "strategy") {
        cauchy.strategy = match s.as_str() {
            "naive" => Strategy::Naive,
            "compact" => Strategy::Compact,
            "free" => Strategy::Free,
            "node" => Strategy::NodeCentered,
            other => return Err(CliError::Usage(format!("unknown strategy `{other}`"))),
        };
    }
    if let Some(cp) = pick(&args.cp.map(|c| c.to_string()), "cp") {
        let cp: f64 = cp.parse().map_err(|_| CliError::Usage(format!("bad cp value `{cp}`")))?;
        if !(cp > 0.0) {
            return Err(CliError::Usage("cp must be positive".into()));
        }
        cauchy.penalty = cp;
    }
    let grids: Vec<usize> = match pick(&args.grids, "grids") {
        None => vec![33, 65, 97, 129, 193],
        Some(g) => g
            .split(',')
            .map(|t| t.trim().parse::<usize>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| CliError::Usage(format!("bad grid list `{g}`")))?,
    };
    if grids.iter().any(|&n| n < 3) {
        return Err(CliError::Usage("grids must have at least 3 nodes per side".into()));
    }

    let opts = RunOptions { scheme: order, cauchy };
    let report = if grids.len() >= 3 {
        let report = convergence_study(case, &grids, &opts)?;
        print_report(&report);
        report
    } else {
        // fewer than 3 grids: run them, print the rows, skip the fit
        let mut rows = Vec::new();
        for &n in &grids {
            let out = solve_case(case, n, n, &opts)?;
            rows.push(crate::harness::ConvergenceRow {
                nx: n,
                ny: n,
                h: out.grid.hx(),
                norms: out.norms,
                seconds: out.seconds,
            });
        }
        let report = crate::harness::ConvergenceReport {
            case: case.name.to_string(),
            scheme: opts.scheme,
            strategy: opts.cauchy.strategy,
            basis: opts.cauchy.basis,
            rows,
        };
        print_rows(&report);
        report
    };

    if let Some(path) = args.out.or_else(|| config.get("out").map(PathBuf::from)) {
        std::fs::write(&path, report.to_csv()).map_err(crate::Error::from)?;
        println!("wrote {}", path.display());
    }

    let dump_fields = args.dump_fields.or_else(|| config.get("dump-fields").map(PathBuf::from));
    let dump_boxes = args.dump_boxes.or_else(|| config.get("dump-boxes").map(PathBuf::from));
    if dump_fields.is_some() || dump_boxes.is_some() {
        let &n = grids.last().expect("grids nonempty");
        let out = solve_case(case, n, n, &opts)?;
        if let Some(path) = dump_fields {
            write_fields(&path, case, &out)?;
            println!("wrote {}", path.display());
        }
        if let Some(path) = dump_boxes {
            write_boxes(&path, &out)?;
            println!("wrote {}", path.display());
        }
    }
    Ok(())
}

fn print_rows(report: &crate::harness::ConvergenceReport) {
    println!(
        "case={} scheme={} basis={} strategy={}",
        report.case,
        report.scheme_label(),
        report.basis_label(),
        report.strategy_label()
    );
    println!(
        "{:>6} {:>12} {:>12} {:>12} {:>12} {:>12} {:>9}",
        "nx", "h", "L2_u", "Linf_u", "L2_grad", "Linf_grad", "seconds"
    );
    for r in &report.rows {
        println!(
            "{:>6} {:>12.5e} {:>12.5e} {:>12.5e} {:>12.5e} {:>12.5e} {:>9.3}",
            r.nx, r.h, r.norms.l2_u, r.norms.linf_u, r.norms.l2_grad, r.norms.linf_grad, r.seconds
        );
    }
}

fn print_report(report: &crate::harness::ConvergenceReport) {
    print_rows(report);
    let s = report.slopes();
    println!(
        "fitted slopes: L2_u {:.3}  Linf_u {:.3}  L2_grad {:.3}  Linf_grad {:.3}",
        s.l2_u, s.linf_u, s.l2_grad, s.linf_grad
    );
}

fn write_fields(
    path: &Path,
    case: &crate::harness::CaseDefinition,
    out: &crate::harness::SolveOutput,
) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "x,y,region,u_num,u_exact,error,u_x,u_y")?;
    for (i, j) in out.grid.nodes() {
        let p = out.grid.node(i, j);
        let region = out.sides.region(i, j);
        let u = out.u()[out.grid.idx(i, j)];
        let exact = case.exact_u(region, p);
        let (gx, gy) = out.grad()[out.grid.idx(i, j)];
        writeln!(
            w,
            "{:e},{:e},{},{:e},{:e},{:e},{:e},{:e}",
            p.x,
            p.y,
            region,
            u,
            exact,
            u - exact,
            gx,
            gy
        )?;
    }
    Ok(())
}

fn write_boxes(path: &Path, out: &crate::harness::SolveOutput) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(
        w,
        "center_x,center_y,half_p,half_q,theta_r,ell_c,aspect,elongated,cond_estimate,jp_residual"
    )?;
    for b in &out.boxes {
        let d = &b.diagnostics;
        writeln!(
            w,
            "{:e},{:e},{:e},{:e},{:e},{:e},{:e},{},{:e},{:e}",
            b.center.x,
            b.center.y,
            b.half.0,
            b.half.1,
            b.theta,
            d.ell_c,
            d.aspect_ratio,
            d.elongated,
            d.cond_estimate,
            d.jp_residual
        )?;
    }
    Ok(())
}
