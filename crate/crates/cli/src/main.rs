//! `slag`: command-line front end for the slag-core library.
//!
//! Exit codes: 0 success, 1 failed verification, 2 invalid input, 3 numerical or
//! convergence failure.

mod config;
mod expr;

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use slag_core::angles::{lifted_angle, scaled_angle, spacetime_angle_direct, spacetime_lifted_angle};
use slag_core::dsl::{diagnose, diagnose_family, read_solution_csv, solve_dsl, verify_boundary_match};
use slag_core::solvers::{dirichlet_with, envelope_with, membership_margins, EnvelopeProblem};
use slag_core::subeq::{in_calfc, in_dual_calfc, in_fc, sample_calfc_member, sample_fc_member};
use slag_core::{Phase, SymMatrix};

use config::RunConfig;
use expr::Expr;

#[derive(Parser)]
#[command(name = "slag", version, about = "Lagrangian angles, subequation checks and DSL solves")]
struct Cli {
    /// Worker threads for the dual-slope sweep (results do not depend on it).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Lifted angle of a matrix, or the space-time angle with --spacetime.
    Angle(AngleArgs),
    /// Membership of a matrix in F_c, the space-time set, or its dual.
    Check(CheckArgs),
    /// Obstacle envelope on a grid; writes a grid CSV.
    Envelope(GridArgs),
    /// Dirichlet solution of the angle equation; writes a grid CSV.
    Dirichlet(GridArgs),
    /// Solve the degenerate equation from boundary data; writes a solution CSV.
    DslSolve(DslArgs),
    /// Run the checks on a solution CSV.
    Verify(VerifyArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum AngleMethodArg {
    Block,
    Direct,
    Limit,
}

#[derive(Args)]
struct AngleArgs {
    /// Matrix JSON {"dim": m, "rows": [...]}; `-` reads stdin.
    #[arg(long)]
    matrix: PathBuf,
    #[arg(long)]
    spacetime: bool,
    #[arg(long, value_enum, default_value = "block")]
    method: AngleMethodArg,
    /// Scale for --method limit.
    #[arg(long, default_value_t = 1e3)]
    p: f64,
}

#[derive(Args)]
struct CheckArgs {
    /// Matrix JSON; omit together with --sample.
    #[arg(long)]
    matrix: Option<PathBuf>,
    /// Phase in radians or a constant expression like "1*pi/2+0.25".
    #[arg(long, allow_hyphen_values = true)]
    phase: String,
    #[arg(long)]
    spacetime: bool,
    /// Dual of the space-time set (implies --spacetime).
    #[arg(long)]
    dual: bool,
    /// Half-width of the boundary band.
    #[arg(long, default_value_t = 1e-9)]
    tol_band: f64,
    /// Draw a member for the phase instead of reading a matrix.
    #[arg(long, requires = "n")]
    sample: bool,
    /// Space dimension for --sample.
    #[arg(long)]
    n: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct GridArgs {
    #[arg(long)]
    config: PathBuf,
    /// Grid CSV path; overrides output.solution.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    tol_sweep: Option<f64>,
    #[arg(long)]
    tol_newton: Option<f64>,
}

#[derive(Args)]
struct Overrides {
    #[arg(long)]
    tol_min_principle: Option<f64>,
    #[arg(long)]
    tol_residual: Option<f64>,
    #[arg(long)]
    tol_boundary: Option<f64>,
}

#[derive(Args)]
struct DslArgs {
    #[arg(long)]
    config: PathBuf,
    /// Solution CSV path; overrides output.solution.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Report JSON path; overrides output.report.
    #[arg(long)]
    report: Option<PathBuf>,
    #[arg(long)]
    tau_samples: Option<usize>,
    #[arg(long)]
    tol_sweep: Option<f64>,
    #[command(flatten)]
    tol: Overrides,
}

#[derive(Args)]
struct VerifyArgs {
    /// Solution CSV with header t,x[,y],u.
    #[arg(long)]
    solution: PathBuf,
    /// Phase c; taken from --config when omitted.
    #[arg(long, allow_hyphen_values = true)]
    phase: Option<String>,
    /// Run config; adds the boundary match against its data.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Report JSON path.
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    tol: Overrides,
}

fn read_matrix(path: &Path) -> Result<SymMatrix> {
    let text = if path == Path::new("-") {
        io::read_to_string(io::stdin())?
    } else {
        std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?
    };
    let m: SymMatrix = serde_json::from_str(&text)
        .with_context(|| format!("matrix JSON in {}", path.display()))?;
    Ok(m)
}

fn print_json(v: &Value) -> Result<()> {
    let mut out = io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, v)?;
    writeln!(out)?;
    Ok(())
}

fn angle(args: AngleArgs) -> Result<()> {
    let a = read_matrix(&args.matrix)?;
    if !args.spacetime {
        return print_json(&json!({ "angle": lifted_angle(&a)? }));
    }
    let report = match args.method {
        AngleMethodArg::Block => {
            let r = spacetime_lifted_angle(&a)?;
            json!({
                "angle": r.angle,
                "on_degenerate_locus": r.on_degenerate_locus,
                "method": r.method,
            })
        }
        AngleMethodArg::Direct => json!({
            "angle": spacetime_angle_direct(&a)?,
            "on_degenerate_locus": false,
            "method": "direct-eigensolve",
        }),
        AngleMethodArg::Limit => json!({
            "angle": scaled_angle(&a, args.p)?,
            "method": "limit",
            "p": args.p,
        }),
    };
    print_json(&report)
}

fn check(args: CheckArgs) -> Result<()> {
    let c = Expr::constant(&args.phase).context("--phase")?;
    let spacetime = args.spacetime || args.dual;
    let (a, sampled) = match (&args.matrix, args.sample) {
        (Some(_), true) => bail!("--matrix and --sample are exclusive"),
        (None, false) => bail!("need --matrix or --sample"),
        (Some(path), false) => (read_matrix(path)?, false),
        (None, true) => {
            let n = args.n.unwrap_or(1);
            let phase = Phase::new(if args.dual { -c } else { c }, n)?;
            let m = if spacetime {
                sample_calfc_member(phase, args.seed)?
            } else {
                sample_fc_member(phase, args.seed)?
            };
            (m, true)
        }
    };
    let membership = if spacetime {
        if a.dim() < 2 {
            bail!("space-time membership needs a matrix of dim >= 2");
        }
        let phase = Phase::new(c, a.dim() - 1)?;
        if args.dual {
            in_dual_calfc(&a, phase, args.tol_band)?
        } else {
            in_calfc(&a, phase, args.tol_band)?
        }
    } else {
        in_fc(&a, Phase::new(c, a.dim())?, args.tol_band)?
    };
    let mut out = serde_json::to_value(membership)?;
    if sampled {
        out["matrix"] = serde_json::to_value(&a)?;
        out["seed"] = json!(args.seed);
    }
    writeln!(io::stdout().lock(), "{}", serde_json::to_string(&out)?)?;
    Ok(())
}

/// Writes CSV through `write` to `path`, or to stdout when `path` is `None`.
fn emit_csv(
    path: Option<&str>,
    write: impl FnOnce(&mut dyn Write) -> io::Result<()>,
) -> Result<()> {
    match path {
        Some(p) => {
            let file = File::create(p).with_context(|| format!("cannot create {p}"))?;
            let mut w = BufWriter::new(file);
            write(&mut w)?;
            w.flush()?;
        }
        None => {
            let mut out = io::stdout().lock();
            write(&mut out)?;
        }
    }
    Ok(())
}

/// Report goes to `report` if set, to stdout when the CSV went to a file, else stderr.
fn emit_report(report: &Value, path: Option<&str>, csv_on_stdout: bool) -> Result<()> {
    let text = serde_json::to_string_pretty(report)?;
    if let Some(p) = path {
        std::fs::write(p, format!("{text}\n")).with_context(|| format!("cannot write {p}"))?;
    }
    if csv_on_stdout {
        eprintln!("{text}");
    } else if path.is_none() {
        writeln!(io::stdout().lock(), "{text}")?;
    }
    Ok(())
}

fn load(path: &Path) -> Result<RunConfig> {
    RunConfig::load(path)
}

fn grid_command(args: GridArgs, dirichlet: bool) -> Result<()> {
    let mut cfg = load(&args.config)?;
    if let Some(out) = &args.out {
        cfg.output.solution = Some(out.display().to_string());
    }
    if let Some(t) = args.tol_sweep {
        cfg.tolerances.sweep = Some(t);
    }
    if let Some(t) = args.tol_newton {
        cfg.tolerances.newton = Some(t);
    }
    let cfg = cfg.resolve()?;
    let grid = cfg.space_grid()?;
    let a = cfg.phase_value()?;
    let (u, stats) = if dirichlet {
        let trace = cfg.trace(&grid, None)?;
        dirichlet_with(&grid, &trace, a, &cfg.dirichlet_options())?
    } else {
        let obstacle = cfg.obstacle(&grid)?;
        let trace = cfg.trace(&grid, cfg.boundary.obstacle.as_ref())?;
        let problem = EnvelopeProblem::new(obstacle, trace, a)?;
        envelope_with(&problem, &cfg.envelope_options())?
    };
    let residual = membership_margins(&u, a)
        .into_iter()
        .map(|(_, m)| if dirichlet { m.abs() } else { (-m).max(0.0) })
        .fold(0.0, f64::max);
    let path = cfg.output.solution.clone();
    emit_csv(path.as_deref(), |w| u.write_csv(w))?;
    let report = json!({
        "config": cfg,
        "phase": a,
        "iterations": stats.sweeps,
        "lastChange": stats.last_change,
        "relaxation": stats.relaxation,
        "residual": residual,
    });
    emit_report(&report, cfg.output.report.as_deref(), path.is_none())
}

fn apply_overrides(cfg: &mut RunConfig, tol: &Overrides) {
    if let Some(t) = tol.tol_min_principle {
        cfg.tolerances.min_principle = Some(t);
    }
    if let Some(t) = tol.tol_residual {
        cfg.tolerances.residual = Some(t);
    }
    if let Some(t) = tol.tol_boundary {
        cfg.tolerances.boundary = Some(t);
    }
}

fn all_pass(diag: &slag_core::dsl::Diagnostics) -> bool {
    diag.values().all(|r| r.pass)
}

fn dsl_solve(args: DslArgs) -> Result<()> {
    let mut cfg = load(&args.config)?;
    if let Some(out) = &args.out {
        cfg.output.solution = Some(out.display().to_string());
    }
    if let Some(r) = &args.report {
        cfg.output.report = Some(r.display().to_string());
    }
    if let Some(n) = args.tau_samples {
        cfg.grid.ntau = Some(n);
    }
    if let Some(t) = args.tol_sweep {
        cfg.tolerances.sweep = Some(t);
    }
    apply_overrides(&mut cfg, &args.tol);
    let cfg = cfg.resolve()?;
    let data = cfg.boundary_data()?;
    let sol = solve_dsl(&data, &cfg.dsl_options())?;
    let diag = diagnose(&data, &sol, &cfg.verify_options())?;
    let path = cfg.output.solution.clone();
    emit_csv(path.as_deref(), |w| sol.write_csv(w))?;
    let taus = sol.tau_grid();
    let report = json!({
        "config": cfg,
        "phase": data.phase(),
        "tauRange": [taus[0], taus[taus.len() - 1]],
        "warnings": data.warnings(),
        "pass": all_pass(&diag),
        "diagnostics": diag,
    });
    emit_report(&report, cfg.output.report.as_deref(), path.is_none())
}

fn verify(args: VerifyArgs) -> Result<bool> {
    let file = File::open(&args.solution)
        .with_context(|| format!("cannot open {}", args.solution.display()))?;
    let (grid, u) = read_solution_csv(BufReader::new(file))
        .with_context(|| format!("solution CSV {}", args.solution.display()))?;
    let cfg = match &args.config {
        Some(path) => {
            let mut cfg = load(path)?;
            apply_overrides(&mut cfg, &args.tol);
            Some(cfg.resolve()?)
        }
        None => None,
    };
    let c = match (&args.phase, &cfg) {
        (Some(p), _) => Expr::constant(p).context("--phase")?,
        (None, Some(cfg)) => cfg.phase_value()?,
        (None, None) => bail!("need --phase or --config"),
    };
    let mut opts = cfg.as_ref().map(|c| c.verify_options()).unwrap_or_default();
    if let Some(t) = args.tol.tol_min_principle {
        opts.min_principle_tol = t;
    }
    if let Some(t) = args.tol.tol_residual {
        opts.residual_tol = t;
    }
    let mut diag = diagnose_family(&grid, &u, c, &opts)?;
    if let Some(cfg) = &cfg {
        let data = cfg.boundary_data()?;
        if data.grid().shape() != grid.shape() {
            bail!(
                "solution grid {:?} does not match the config grid {:?}",
                grid.shape(),
                data.grid().shape()
            );
        }
        let tol = match opts.boundary_tol.or(args.tol.tol_boundary) {
            Some(t) => t,
            None => {
                let (lo, hi) = match cfg.boundary.tau_range {
                    Some([lo, hi]) => (lo, hi),
                    None => data.slope_range(),
                };
                let ntau = cfg.grid.ntau.unwrap_or(401);
                5.0 * (grid.max_spacing() + (hi - lo) / (ntau - 1) as f64)
            }
        };
        diag.insert("boundaryMatch".into(), verify_boundary_match(&data, &u, tol)?);
    }
    let pass = all_pass(&diag);
    let report = json!({ "phase": c, "pass": pass, "diagnostics": diag });
    let path = args.out.as_ref().map(|p| p.display().to_string());
    emit_report(&report, path.as_deref(), false)?;
    Ok(pass)
}

/// Maps library errors to exit codes; anything else is an input problem.
fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<slag_core::Error>() {
            return match e {
                slag_core::Error::Numerical(_)
                | slag_core::Error::Convergence { .. }
                | slag_core::Error::Sampling { .. } => 3,
                _ => 2,
            };
        }
    }
    2
}

/// A closed stdout (e.g. piped into `head`) is not an error.
fn broken_pipe(err: &anyhow::Error) -> bool {
    err.chain().any(|c| {
        c.downcast_ref::<io::Error>()
            .is_some_and(|e| e.kind() == io::ErrorKind::BrokenPipe)
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: --threads: {e}");
            return ExitCode::from(2);
        }
    }
    let result = match cli.command {
        Command::Angle(a) => angle(a).map(|_| true),
        Command::Check(a) => check(a).map(|_| true),
        Command::Envelope(a) => grid_command(a, false).map(|_| true),
        Command::Dirichlet(a) => grid_command(a, true).map(|_| true),
        Command::DslSolve(a) => dsl_solve(a).map(|_| true),
        Command::Verify(a) => verify(a),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) if broken_pipe(&e) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
