//! `hessq`: command-line front end for the Hessian quotient laboratory.
//!
//! Exit codes: 0 when every contract passes, 2 on a contract violation (the witness is
//! printed to stderr), 1 on usage or configuration errors.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use hessq_core::error::{Error, Result};
use hessq_core::experiment::{emit_report, run_experiment, ExperimentConfig, ExperimentKind, ReportFormat};
use hessq_core::geometry::{fit_urbas_barrier, radius_estimate_check, urbas_barrier, BarrierKind, SubsolutionFrame};
use hessq_core::grid::{write_atomic, Domain, GridFunction};
use hessq_core::inequalities::{estimate_constants, superadditivity_scan, zhang_verify, ConstantKind, MarginReport};
use hessq_core::legendre::{discrete_legendre, dual_checks, DEFAULT_DELTA};
use hessq_core::sampling::{run_sharded, SampleConfig};
use hessq_core::solver::{grid_solve_in, radial_solve, DataSource, DirichletProblem};
use hessq_core::symcalc::{verify_sigma_identities, Spectrum};

/// Relative tolerance for the symmetric-function identities.
const IDENTITY_TOL: f64 = 1e-10;

#[derive(Parser, Debug)]
#[command(name = "hessq", version, about = "Numerical laboratory for sigma_n/sigma_k(D^2 u) = f")]
struct Cli {
    /// JSON configuration file for the subcommand.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Random seed.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Output directory for result files.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Only print failures.
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Sample positive spectra and check the symmetric-function identities.
    Identities(IdentitiesArgs),
    /// Run a sampled inequality scan.
    Scan(ScanArgs),
    /// Integrate the radial ODE.
    SolveRadial(RadialArgs),
    /// Solve a Dirichlet problem on a lattice (problem JSON via --config).
    SolveGrid,
    /// Discrete Legendre transform and duality residuals.
    LegendreCheck(LegendreArgs),
    /// Fit and verify the explicit slab barriers.
    Barrier(BarrierArgs),
    /// Section, inscribed ellipsoid and radius estimate.
    Geometry(GeometryArgs),
    /// Run an experiment (experiment JSON via --config, or --kind with defaults).
    Experiment(ExperimentArgs),
}

#[derive(Args, Debug)]
struct IdentitiesArgs {
    #[arg(long)]
    n: usize,
    #[arg(long)]
    k: usize,
    #[arg(long, default_value_t = 10_000)]
    count: u64,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ScanWhich {
    ZhangThreshold,
    GuanSrokaC,
    Superadditivity,
}

#[derive(Args, Debug)]
struct ScanArgs {
    #[arg(long, value_enum)]
    which: ScanWhich,
    #[arg(long)]
    n: usize,
    #[arg(long)]
    k: usize,
    #[arg(long, default_value_t = 100_000)]
    count: u64,
}

#[derive(Args, Debug)]
struct RadialArgs {
    #[arg(long)]
    n: usize,
    #[arg(long)]
    k: usize,
    /// Right-hand side as an expression in `r`.
    #[arg(long, default_value = "1.0")]
    f: String,
    #[arg(long, default_value_t = 1.0)]
    radius: f64,
    #[arg(long, default_value_t = 1e-10)]
    tol: f64,
}

#[derive(Args, Debug)]
struct LegendreArgs {
    /// Primal field; a built-in uniformly convex 2D field when absent.
    #[arg(long)]
    grid: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    k: usize,
    /// Dual nodes along the longest side; the primal resolution when absent.
    #[arg(long)]
    resolution: Option<usize>,
    /// Largest accepted duality residual.
    #[arg(long, default_value_t = 0.05)]
    tol: f64,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum KindArg {
    Case1,
    Case2,
    Both,
}

#[derive(Args, Debug)]
struct BarrierArgs {
    /// Convex field; a built-in 4D convex quartic when absent.
    #[arg(long)]
    grid: Option<PathBuf>,
    /// Base point; the origin when absent.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    x0: Option<Vec<f64>>,
    #[arg(long, default_value_t = 0.25)]
    rho: f64,
    #[arg(long, default_value_t = 0.9)]
    alpha: f64,
    #[arg(long, default_value_t = 1)]
    k: usize,
    #[arg(long, value_enum, default_value = "both")]
    kind: KindArg,
    #[arg(long, default_value_t = 600)]
    samples: usize,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum FrameArg {
    AsIs,
    ScaleValues,
    ScaleCoordinates,
}

#[derive(Args, Debug)]
struct GeometryArgs {
    /// Convex field; the built-in quadratic (x² + 2y² + 3z²)/2 when absent.
    #[arg(long)]
    grid: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    x0: Option<Vec<f64>>,
    /// Section height.
    #[arg(long, default_value_t = 0.1)]
    level: f64,
    #[arg(long, default_value_t = 1)]
    k: usize,
    #[arg(long, value_enum, default_value = "as-is")]
    frame: FrameArg,
    /// Allowed shortfall of the subsolution condition in the as-is frame.
    #[arg(long, default_value_t = 1e-3)]
    sub_tol: f64,
}

#[derive(Args, Debug)]
struct ExperimentArgs {
    /// Experiment to run with default settings when no --config is given.
    #[arg(long)]
    kind: Option<String>,
    /// Report formats.
    #[arg(long, value_delimiter = ',', default_value = "json,csv,svg")]
    formats: Vec<String>,
}

/// Result of a subcommand: contract outcome plus the witness printed on failure.
struct Outcome {
    passed: bool,
    witness: Option<String>,
}

impl Outcome {
    fn pass() -> Self {
        Self {
            passed: true,
            witness: None,
        }
    }

    fn from_flag(passed: bool, witness: impl FnOnce() -> String) -> Self {
        Self {
            passed,
            witness: (!passed).then(witness),
        }
    }
}

struct Ctx {
    config: Option<PathBuf>,
    seed: u64,
    out: Option<PathBuf>,
    quiet: bool,
}

impl Ctx {
    fn say(&self, line: impl AsRef<str>) {
        if !self.quiet {
            println!("{}", line.as_ref());
        }
    }

    fn write_json(&self, name: &str, value: &serde_json::Value) -> Result<()> {
        if let Some(dir) = &self.out {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
            let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::Config(e.to_string()))?;
            text.push('\n');
            write_atomic(&dir.join(format!("{name}.json")), text.as_bytes())?;
        }
        Ok(())
    }

    fn require_config(&self) -> Result<&Path> {
        self.config.as_deref().ok_or_else(|| Error::Config("this subcommand needs --config FILE".into()))
    }
}

fn to_json<T: serde::Serialize>(v: &T) -> serde_json::Value {
    serde_json::to_value(v).unwrap_or(serde_json::Value::Null)
}

fn identities(ctx: &Ctx, a: &IdentitiesArgs) -> Result<Outcome> {
    let cfg = SampleConfig::new(ctx.seed, a.count, a.n, a.k);
    cfg.validate().map_err(usage)?;
    if a.k > a.n {
        return Err(Error::Config(format!("need k <= n, got n={}, k={}", a.n, a.k)));
    }
    // (worst identity residual, its spectrum, worst Newton-Maclaurin margin, its spectrum)
    type Worst = (f64, Vec<f64>, f64, Vec<f64>);
    let parts: Vec<Result<Worst>> = run_sharded(ctx.seed, a.count, |rng, m| {
        let mut w: Worst = (0.0, Vec::new(), f64::INFINITY, Vec::new());
        for _ in 0..m {
            let lam = cfg.spectrum(rng);
            let r = verify_sigma_identities(&Spectrum::new(lam.clone())?, a.k)?;
            if r.max_residual() > w.0 {
                w.0 = r.max_residual();
                w.1 = lam.clone();
            }
            if r.newton_maclaurin < w.2 {
                w.2 = r.newton_maclaurin;
                w.3 = lam;
            }
        }
        Ok(w)
    });
    let mut worst: Worst = (0.0, Vec::new(), f64::INFINITY, Vec::new());
    for p in parts {
        let p = p?;
        if p.0 > worst.0 {
            (worst.0, worst.1) = (p.0, p.1);
        }
        if p.2 < worst.2 {
            (worst.2, worst.3) = (p.2, p.3);
        }
    }
    let ok_id = worst.0 <= IDENTITY_TOL;
    let ok_nm = worst.2 >= -IDENTITY_TOL;
    ctx.say(format!(
        "identities n={} k={} count={}: max relative residual {:.3e} (tol {IDENTITY_TOL:.0e}), min Newton-Maclaurin margin {:.3e}",
        a.n, a.k, a.count, worst.0, worst.2
    ));
    ctx.write_json(
        "identities",
        &json!({"n": a.n, "k": a.k, "count": a.count, "seed": ctx.seed, "max_residual": worst.0, "min_newton_maclaurin": worst.2}),
    )?;
    Ok(Outcome::from_flag(ok_id && ok_nm, || {
        if ok_id {
            format!("Newton-Maclaurin margin {:.3e} at lambda = {:?}", worst.2, worst.3)
        } else {
            format!("identity residual {:.3e} at lambda = {:?}", worst.0, worst.1)
        }
    }))
}

/// Invalid numeric arguments are usage errors at the command line.
fn usage(e: Error) -> Error {
    match e {
        Error::Argument(m) | Error::Domain(m) => Error::Config(m),
        other => other,
    }
}

fn print_margin(ctx: &Ctx, r: &MarginReport) {
    ctx.say(MarginReport::CSV_HEADER.join(","));
    ctx.say(r.csv_row().join(","));
}

fn margin_outcome(r: &MarginReport) -> Outcome {
    Outcome::from_flag(r.passed(), || {
        format!(
            "{} violations, min margin {:.3e}, witness {}",
            r.violation_count,
            r.min_margin,
            r.witness.as_ref().map(|w| w.compact()).unwrap_or_default()
        )
    })
}

fn scan(ctx: &Ctx, a: &ScanArgs) -> Result<Outcome> {
    let cfg = SampleConfig::new(ctx.seed, a.count, a.n, a.k);
    match a.which {
        ScanWhich::ZhangThreshold => {
            let est = estimate_constants(&cfg, ConstantKind::ZhangThreshold).map_err(usage)?;
            print_margin(ctx, &est);
            let threshold = est.empirical_constant.unwrap_or(f64::NAN);
            let ver = zhang_verify(&SampleConfig::new(ctx.seed.wrapping_add(1), a.count, a.n, a.k), threshold)?;
            print_margin(ctx, &ver);
            ctx.say(format!("threshold {threshold}"));
            ctx.write_json("scan", &json!({"estimate": to_json(&est), "verify": to_json(&ver)}))?;
            Ok(margin_outcome(&ver))
        }
        ScanWhich::GuanSrokaC => {
            let r = estimate_constants(&cfg, ConstantKind::GuanSrokaC).map_err(usage)?;
            print_margin(ctx, &r);
            ctx.write_json("scan", &to_json(&r))?;
            Ok(margin_outcome(&r))
        }
        ScanWhich::Superadditivity => {
            let r = superadditivity_scan(ctx.seed, a.count, a.n, a.k).map_err(usage)?;
            print_margin(ctx, &r);
            ctx.write_json("scan", &to_json(&r))?;
            Ok(margin_outcome(&r))
        }
    }
}

fn solve_radial(ctx: &Ctx, a: &RadialArgs) -> Result<Outcome> {
    let f = DataSource::Expr(a.f.clone()).compile(None)?;
    f.eval(&[0.0])?;
    let rhs = |r: f64| f.eval(&[r]).unwrap_or(f64::NAN);
    let p = radial_solve(a.n, a.k, &rhs, a.radius, a.tol).map_err(usage)?;
    let scale = p.f.iter().copied().fold(1.0, f64::max);
    let ok = p.max_residual <= 1e-8 * scale;
    ctx.say(format!(
        "radial n={} k={} radius={} steps={}: phi(R) = {:.12}, phi'(R) = {:.12}, max residual {:.3e}, ill-conditioned steps {}",
        a.n,
        a.k,
        a.radius,
        p.r.len() - 1,
        p.phi.last().copied().unwrap_or(f64::NAN),
        p.dphi.last().copied().unwrap_or(f64::NAN),
        p.max_residual,
        p.ill_conditioned_steps
    ));
    ctx.write_json("radial", &to_json(&p))?;
    Ok(Outcome::from_flag(ok, || format!("ODE residual {:.3e} exceeds {:.1e}", p.max_residual, 1e-8 * scale)))
}

fn solve_grid(ctx: &Ctx) -> Result<Outcome> {
    let path = ctx.require_config()?;
    let problem = DirichletProblem::load(path)?;
    problem.validate()?;
    let (u, rep) = grid_solve_in(&problem, path.parent()).map_err(usage)?;
    ctx.say(format!(
        "grid n={} k={} h={} unknowns={}: converged {} in {} iterations, residual {:.3e}, min eigenvalue {:.4}",
        problem.n, problem.k, problem.spacing, rep.unknowns, rep.converged, rep.iterations, rep.final_residual, rep.min_hessian_eigenvalue
    ));
    if let Some(dir) = &ctx.out {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        u.write(&dir.join("solution.grid"), json!({"problem": to_json(&problem), "report": to_json(&rep)}))?;
        ctx.write_json("solve-report", &to_json(&rep))?;
    }
    Ok(Outcome::from_flag(rep.converged, || {
        format!("Newton did not converge: residual history {:?}", rep.residual_history)
    }))
}

fn read_grid(path: &Path) -> Result<GridFunction> {
    GridFunction::read(path)
}

fn legendre_check(ctx: &Ctx, a: &LegendreArgs) -> Result<Outcome> {
    let u = match &a.grid {
        Some(p) => read_grid(p)?,
        None => GridFunction::from_fn(Domain::cube(2, 1.0), 1.0 / 32.0, |x| {
            0.5 * (x[0] * x[0] + 2.0 * x[1] * x[1]) + 0.05 * x[0].powi(4) + 0.1 * x[0] * x[1]
        })?,
    };
    let res = a.resolution.unwrap_or(u.dims()[0]);
    let pair = discrete_legendre(&u, res).map_err(usage)?;
    let probes: Vec<Vec<f64>> = (0..u.len())
        .filter(|&i| u.has_stencil(i, 2))
        .map(|i| u.point(i))
        .filter(|x| {
            let (lo, hi) = u.domain().bounds();
            x.iter().zip(lo.iter().zip(&hi)).all(|(v, (l, h))| (v - 0.5 * (l + h)).abs() <= 0.25 * (h - l))
        })
        .collect();
    let r = dual_checks(&pair, a.k, &probes, DEFAULT_DELTA).map_err(usage)?;
    let worst = r.max_inverse.max(r.max_quotient);
    ctx.say(format!(
        "legendre n={} probes={} skipped={}: |D²w D²u - I| {:.3e}, |sigma_(n-k)(D²w) F(D²u) - 1| {:.3e}, dual coefficients {:.3e}",
        u.n(),
        r.probes.len(),
        r.skipped,
        r.max_inverse,
        r.max_quotient,
        r.max_dual_coefficients
    ));
    ctx.write_json("legendre", &to_json(&r))?;
    Ok(Outcome::from_flag(worst <= a.tol, || {
        let p = r
            .probes
            .iter()
            .filter(|p| p.flag.is_none())
            .max_by(|a, b| a.inverse.max(a.quotient).total_cmp(&b.inverse.max(b.quotient)));
        format!("duality residual {worst:.3e} > {} at x = {:?}", a.tol, p.map(|p| p.x.clone()))
    }))
}

fn barrier(ctx: &Ctx, a: &BarrierArgs) -> Result<Outcome> {
    let u = match &a.grid {
        Some(p) => read_grid(p)?,
        None => GridFunction::from_fn(Domain::cube(4, 1.0), 0.125, |x| {
            0.5 * (x[0] * x[0] + 2.0 * x[1] * x[1] + x[2] * x[2] + 1.5 * x[3] * x[3]) + 0.1 * x[0].powi(4)
        })?,
    };
    let x0 = a.x0.clone().unwrap_or_else(|| vec![0.0; u.n()]);
    let kinds: &[BarrierKind] = match a.kind {
        KindArg::Case1 => &[BarrierKind::Case1],
        KindArg::Case2 => &[BarrierKind::Case2],
        KindArg::Both => &[BarrierKind::Case1, BarrierKind::Case2],
    };
    let mut out = Outcome::pass();
    let mut results = Vec::new();
    for &kind in kinds {
        let fit = fit_urbas_barrier(&u, &x0, a.rho, a.alpha, a.k, kind, ctx.seed).map_err(usage)?;
        let v = urbas_barrier(&fit.spec, &u, &fit.placement, a.samples, ctx.seed.wrapping_add(1))?;
        ctx.say(format!(
            "{kind:?}: A = {:.4}, lambda {:.4e} >= bound {:.4e}: {}, boundary excess {:.3e}, interior excess {:.3e} (allowance {:.3e}), passed {}",
            v.spec.big_a, v.lambda_measured, v.lambda_bound, v.bound_holds, v.boundary_excess, v.interior_excess, v.tolerance, v.passed
        ));
        if !v.passed && out.passed {
            let failed: Vec<&str> = v.conditions.iter().filter(|c| !c.holds).map(|c| c.name.as_str()).collect();
            out = Outcome::from_flag(false, || {
                format!(
                    "{kind:?} barrier fails at x0 = {:?}: operator ok {}, boundary excess {:.3e}, interior excess {:.3e}, failed conditions {failed:?}",
                    fit.placement.x0, v.operator_ok, v.boundary_excess, v.interior_excess
                )
            });
        }
        results.push(json!({"kind": format!("{kind:?}"), "big_m": fit.big_m, "verification": to_json(&v)}));
    }
    ctx.write_json("barrier", &json!(results))?;
    Ok(out)
}

fn geometry(ctx: &Ctx, a: &GeometryArgs) -> Result<Outcome> {
    let u = match &a.grid {
        Some(p) => read_grid(p)?,
        None => GridFunction::from_fn(Domain::cube(3, 1.0), 1.0 / 24.0, |x| {
            0.5 * (x[0] * x[0] + 2.0 * x[1] * x[1] + 3.0 * x[2] * x[2])
        })?,
    };
    let x0 = a.x0.clone().unwrap_or_else(|| vec![0.0; u.n()]);
    let frame = match a.frame {
        FrameArg::AsIs => SubsolutionFrame::AsIs,
        FrameArg::ScaleValues => SubsolutionFrame::ScaleValues,
        FrameArg::ScaleCoordinates => SubsolutionFrame::ScaleCoordinates,
    };
    let r = match radius_estimate_check(&u, &x0, a.level, a.k, frame, a.sub_tol) {
        Ok(r) => r,
        Err(Error::Precondition(m)) => {
            return Ok(Outcome::from_flag(false, || m));
        }
        Err(e) => return Err(usage(e)),
    };
    ctx.say(format!(
        "section h={} semi-axes {:?}: margin {:.4e} (eps_geom {:.3e}), John dilation {:.3} (C(n) = {}), passed {}",
        a.level,
        r.semi_axes,
        r.margin,
        r.eps_geom,
        r.john.dilation,
        r.john.john_constant,
        r.passed()
    ));
    ctx.write_json("geometry", &to_json(&r))?;
    Ok(Outcome::from_flag(r.passed(), || {
        format!("radius margin {:.4e} below -{:.3e} with semi-axes {:?}", r.margin, r.eps_geom, r.semi_axes)
    }))
}

fn experiment(ctx: &Ctx, a: &ExperimentArgs) -> Result<Outcome> {
    let mut cfg = match (&ctx.config, &a.kind) {
        (Some(p), _) => ExperimentConfig::load(p)?,
        (None, Some(k)) => {
            let kind: ExperimentKind =
                serde_json::from_value(json!(k)).map_err(|_| Error::Config(format!("unknown experiment '{k}'")))?;
            ExperimentConfig::new(kind)
        }
        (None, None) => return Err(Error::Config("experiment needs --config FILE or --kind NAME".into())),
    };
    if ctx.seed != 0 {
        cfg.seed = ctx.seed;
    }
    let formats = a.formats.iter().map(|f| f.parse()).collect::<Result<Vec<ReportFormat>>>()?;
    let report = run_experiment(&cfg)?;
    for c in &report.checks {
        if !ctx.quiet || !c.passed {
            println!("[{}] {}: {}", if c.passed { "pass" } else { "FAIL" }, c.name, c.detail);
        }
    }
    let dir = ctx.out.clone().or_else(|| cfg.output.clone()).unwrap_or_else(|| PathBuf::from("reports"));
    for p in emit_report(&report, &dir, &formats)? {
        ctx.say(format!("wrote {}", p.display()));
    }
    let failed: Vec<String> = report.failed_checks().map(|c| format!("{}: {}", c.name, c.detail)).collect();
    Ok(Outcome::from_flag(report.passed(), || {
        if failed.is_empty() {
            "report is partial".into()
        } else {
            failed.join("; ")
        }
    }))
}

fn run(cli: Cli) -> Result<Outcome> {
    let ctx = Ctx {
        config: cli.config,
        seed: cli.seed,
        out: cli.out,
        quiet: cli.quiet,
    };
    if let Some(p) = &ctx.config {
        if !p.exists() {
            return Err(Error::Config(format!("configuration file {} does not exist", p.display())));
        }
    }
    match &cli.command {
        Command::Identities(a) => identities(&ctx, a),
        Command::Scan(a) => scan(&ctx, a),
        Command::SolveRadial(a) => solve_radial(&ctx, a),
        Command::SolveGrid => solve_grid(&ctx),
        Command::LegendreCheck(a) => legendre_check(&ctx, a),
        Command::Barrier(a) => barrier(&ctx, a),
        Command::Geometry(a) => geometry(&ctx, a),
        Command::Experiment(a) => experiment(&ctx, a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    match run(cli) {
        Ok(o) if o.passed => ExitCode::SUCCESS,
        Ok(o) => {
            eprintln!("contract violation: {}", o.witness.unwrap_or_default());
            ExitCode::from(2)
        }
        Err(e) if e.is_usage() || matches!(e, Error::Argument(_)) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("contract violation: {e}");
            ExitCode::from(2)
        }
    }
}
