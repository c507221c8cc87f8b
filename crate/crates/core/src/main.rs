//! Command-line front end: loads a JSON run configuration, orchestrates the
//! solve → optimize → value → simulate pipeline and emits CSV/JSON files.
//!
//! Exit codes: 0 success, 1 configuration error, 2 numeric-quality failure,
//! 3 verification failure. Errors are mirrored as JSON on stderr so CI can
//! gate on them.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use omega_dividends::levy::LevyModel;
use omega_dividends::omega::{solve_h, BankruptcyRate, OmegaScaleTable};
use omega_dividends::optimizer;
use omega_dividends::policy::{self, ValueFunction, ValueTable};
use omega_dividends::sim::{simulate_value, SimConfig, SimMode};
use omega_dividends::{config::SimulationConfig, Error, RunConfig};

/// Residual gate for cmd solve: tables whose Simpson-recheck defect exceeds
/// this are flagged as numeric-quality failures.
const RESIDUAL_THRESHOLD: f64 = 1e-8;
/// Verification tolerances for cmd value.
const C1_FIT_TOL: f64 = 1e-3;
const TRANSACTION_TOL: f64 = -1e-9;
const GENERATOR_BELOW_TOL: f64 = 1e-3;
const GENERATOR_ABOVE_TOL: f64 = 1e-4;
/// Pairs sampled for the transaction-bound check.
const TRANSACTION_PAIRS: usize = 100_000;

#[derive(Parser)]
#[command(name = "omega-dividends", about = "Double-barrier impulse dividend solver")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the scale-function table and report the equation residual.
    Solve(CommonArgs),
    /// Compute the optimal barrier pair and the g0/g1 curves.
    Optimize(CommonArgs),
    /// Evaluate the value function at the optimum and verify it.
    Value(CommonArgs),
    /// Monte Carlo cross-validation of the analytic value.
    Simulate(CommonArgs),
    /// Re-optimize across a grid of transaction costs.
    SweepBeta(SweepArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// Path to the JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory (overrides `output_dir` from the config).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override the simulation seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the simulation path count.
    #[arg(long)]
    paths: Option<usize>,
    /// Override the grid step.
    #[arg(long, allow_hyphen_values = true)]
    h: Option<f64>,
    /// Override the transaction cost.
    #[arg(long, allow_hyphen_values = true)]
    beta: Option<f64>,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Comma list ("0.001,0.002") or range ("start:stop:step") of betas.
    #[arg(long)]
    betas: Option<String>,
}

fn main() {
    let cli = Cli::parse();
    let code = match run(cli) {
        Ok(code) => code,
        Err(e) => {
            let code = exit_code(&e);
            let payload = json!({
                "error": error_kind(&e),
                "message": e.to_string(),
                "exit_code": code,
            });
            eprintln!("{payload}");
            code
        }
    };
    std::process::exit(code);
}

fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) | Error::Io(_) | Error::Parse(_) | Error::Model(_) | Error::Domain(_) => 1,
        Error::GridTooCoarse(_)
        | Error::DegenerateSpectrum(_)
        | Error::XMaxTooSmall(_)
        | Error::Optimizer(_)
        | Error::Simulation(_) => 2,
        Error::Verification(_) => 3,
    }
}

fn error_kind(e: &Error) -> &'static str {
    match e {
        Error::Config(_) => "config",
        Error::Io(_) => "io",
        Error::Parse(_) => "parse",
        Error::Model(_) => "model",
        Error::Domain(_) => "domain",
        Error::GridTooCoarse(_) => "grid_too_coarse",
        Error::DegenerateSpectrum(_) => "degenerate_spectrum",
        Error::XMaxTooSmall(_) => "x_max_too_small",
        Error::Optimizer(_) => "optimizer",
        Error::Simulation(_) => "simulation",
        Error::Verification(_) => "verification",
    }
}

struct Runtime {
    cfg: RunConfig,
    model: LevyModel,
    omega: BankruptcyRate,
    out: PathBuf,
    hash: String,
}

fn prepare(common: &CommonArgs) -> omega_dividends::Result<Runtime> {
    let mut cfg = RunConfig::from_path(&common.config)?;
    if let Some(h) = common.h {
        cfg.grid.h = h;
    }
    if let Some(beta) = common.beta {
        cfg.beta = beta;
    }
    if common.seed.is_some() || common.paths.is_some() {
        let sim = cfg.simulation.get_or_insert_with(default_sim_block);
        if let Some(seed) = common.seed {
            sim.seed = seed;
        }
        if let Some(paths) = common.paths {
            sim.n_paths = paths;
        }
    }
    cfg.validate()?;
    let out = common
        .out
        .clone()
        .or_else(|| cfg.output_dir.as_ref().map(PathBuf::from))
        .ok_or_else(|| Error::Config("no output directory: pass --out or set output_dir".into()))?;
    std::fs::create_dir_all(&out)?;
    let model = cfg.build_model()?;
    let omega = cfg.build_omega()?;
    let hash = cfg.hash();
    Ok(Runtime {
        cfg,
        model,
        omega,
        out,
        hash,
    })
}

fn default_sim_block() -> SimulationConfig {
    SimulationConfig {
        n_paths: 100_000,
        dt: 1e-3,
        t_max: 560.0,
        seed: 42,
        mode: SimMode::KillingClock,
        x0: None,
    }
}

fn run(cli: Cli) -> omega_dividends::Result<i32> {
    match cli.command {
        Command::Solve(args) => cmd_solve(&prepare(&args)?),
        Command::Optimize(args) => cmd_optimize(&prepare(&args)?),
        Command::Value(args) => cmd_value(&prepare(&args)?),
        Command::Simulate(args) => cmd_simulate(&prepare(&args)?),
        Command::SweepBeta(args) => {
            let rt = prepare(&args.common)?;
            let betas = parse_betas(args.betas.as_deref(), rt.cfg.beta)?;
            cmd_sweep_beta(&rt, &betas)
        }
    }
}

fn solve_table(rt: &Runtime) -> omega_dividends::Result<(OmegaScaleTable, u128)> {
    let t0 = Instant::now();
    let table = solve_h(
        &rt.model,
        rt.cfg.q,
        &rt.omega,
        rt.cfg.grid.x_max,
        rt.cfg.grid.h,
    )?;
    Ok((table, t0.elapsed().as_millis()))
}

fn write_json(path: &Path, value: &serde_json::Value) -> omega_dividends::Result<()> {
    let mut f = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut f, value).map_err(|e| Error::Parse(e.to_string()))?;
    writeln!(f)?;
    Ok(())
}

fn cmd_solve(rt: &Runtime) -> omega_dividends::Result<i32> {
    let (table, elapsed_ms) = solve_table(rt)?;
    let csv_path = rt.out.join("omega_scale.csv");
    {
        let mut f = BufWriter::new(File::create(&csv_path)?);
        writeln!(f, "# config = {}", rt.hash)?;
        table.write_csv(&mut f)?;
    }
    let passed = table.residual_sup() <= RESIDUAL_THRESHOLD;
    let report = json!({
        "residual_sup": table.residual_sup(),
        "residual_threshold": RESIDUAL_THRESHOLD,
        "passed": passed,
        "h": table.h(),
        "x_max": table.x_max(),
        "n_points": table.grid().len(),
        "elapsed_ms": elapsed_ms,
        "config": rt.hash,
        "warnings": table.warnings(),
    });
    write_json(&rt.out.join("solve_report.json"), &report)?;
    if !passed {
        return Err(Error::GridTooCoarse(format!(
            "residual_sup = {:.3e} exceeds {RESIDUAL_THRESHOLD:.0e}; retry with h = {}",
            table.residual_sup(),
            table.h() / 2.0
        )));
    }
    Ok(0)
}

fn cmd_optimize(rt: &Runtime) -> omega_dividends::Result<i32> {
    let (table, _) = solve_table(rt)?;
    let beta = rt.cfg.beta;
    let (barriers, diag) = optimizer::optimize(&table, beta)?;
    let mut report = serde_json::to_value(&diag).map_err(|e| Error::Parse(e.to_string()))?;
    report["beta"] = json!(beta);
    report["config"] = json!(rt.hash);
    write_json(&rt.out.join("optimum.json"), &report)?;

    // Curve data for plotting g0 / g1 against H'.
    {
        let mut f = BufWriter::new(File::create(rt.out.join("g0_curve.csv"))?);
        writeln!(f, "# config = {}", rt.hash)?;
        writeln!(f, "# beta = {}", fmt(beta))?;
        writeln!(f, "c2,g0,hprime")?;
        let h0 = table.h_at(0.0);
        let upper = (3.0 * barriers.c2).max(2.0).min(table.x_max());
        let lower = beta + (upper - beta) * 1e-4;
        for i in 0..512 {
            let c = lower + (upper - lower) * i as f64 / 511.0;
            let g0 = (table.h_at(c) - h0) / (c - beta);
            writeln!(f, "{},{},{}", fmt(c), fmt(g0), fmt(table.h_prime_at(c)))?;
        }
    }
    if diag.case == optimizer::OptimizerCase::Interior {
        let cmax = optimizer::c1_max(&table, beta)?;
        let mut f = BufWriter::new(File::create(rt.out.join("g1_curve.csv"))?);
        writeln!(f, "# config = {}", rt.hash)?;
        writeln!(f, "# beta = {}", fmt(beta))?;
        writeln!(f, "c1,g1,hprime")?;
        for i in 1..512 {
            let c = cmax * i as f64 / 512.0;
            let z = optimizer::zeta(&table, c)?;
            let g1 = (table.h_at(z) - table.h_at(c)) / (z - c - beta);
            writeln!(f, "{},{},{}", fmt(c), fmt(g1), fmt(table.h_prime_at(c)))?;
        }
    }
    Ok(0)
}

fn cmd_value(rt: &Runtime) -> omega_dividends::Result<i32> {
    let (table, _) = solve_table(rt)?;
    let (barriers, diag) = optimizer::optimize(&table, rt.cfg.beta)?;
    let vf = ValueFunction::new(&table, barriers)?;
    let vtab = vf.to_table();
    {
        let mut f = BufWriter::new(File::create(rt.out.join("value.csv"))?);
        writeln!(f, "# config = {}", rt.hash)?;
        vtab.write_csv(&mut f)?;
    }

    let c1_fit = policy::check_c1_fit(&vf);
    let seed = rt.cfg.simulation.as_ref().map_or(42, |s| s.seed);
    let transaction_worst = policy::check_transaction_bound(&vf, TRANSACTION_PAIRS, seed);
    let (below, above) = generator_summary(rt, &table, &vf)?;

    let passed = c1_fit < C1_FIT_TOL
        && transaction_worst >= TRANSACTION_TOL
        && below.1 < GENERATOR_BELOW_TOL
        && above.1 <= GENERATOR_ABOVE_TOL;
    let report = json!({
        "c1_star": barriers.c1,
        "c2_star": barriers.c2,
        "case": diag.case,
        "checks": {
            "c1_fit_residual": c1_fit,
            "transaction_bound_worst": transaction_worst,
            "transaction_pairs": TRANSACTION_PAIRS,
            "generator_below_c2": {"points": below.0, "max_rel_residual": below.1},
            "generator_above_c2": {"points": above.0, "max_signed_residual": above.1},
        },
        "passed": passed,
        "config": rt.hash,
    });
    write_json(&rt.out.join("value_report.json"), &report)?;
    if !passed {
        return Err(Error::Verification(format!(
            "value checks failed: c1_fit={c1_fit:.3e}, transaction_worst={transaction_worst:.3e}, \
             generator_below={:.3e}, generator_above={:.3e}",
            below.1, above.1
        )));
    }
    Ok(0)
}

/// Samples the generator residual off the kinks: rel-normalised max below
/// c₂*, signed max above.
fn generator_summary(
    rt: &Runtime,
    table: &OmegaScaleTable,
    vf: &ValueFunction,
) -> omega_dividends::Result<((usize, f64), (usize, f64))> {
    let h = table.h();
    let c2 = vf.barriers().c2;
    let a = table.a();
    let mut kinks = rt.omega.breakpoints();
    kinks.push(c2);
    let clear = |x: f64| kinks.iter().all(|&b| (x - b).abs() > 5.0 * h);

    let mut below = (0usize, 0.0f64);
    let lo = a - 1.0;
    let hi = c2 - 10.0 * h;
    for i in 0..40 {
        let x = lo + (hi - lo) * i as f64 / 39.0;
        if !clear(x) {
            continue;
        }
        let r = policy::generator_residual(&rt.model, &rt.omega, rt.cfg.q, vf, x)?;
        let rel = r.abs() / (1.0 + vf.value(x).abs());
        below.0 += 1;
        below.1 = below.1.max(rel);
    }
    let mut above = (0usize, f64::NEG_INFINITY);
    for i in 0..20 {
        let x = c2 + 10.0 * h + (2.0 - 10.0 * h) * i as f64 / 19.0;
        if !clear(x) {
            continue;
        }
        let r = policy::generator_residual(&rt.model, &rt.omega, rt.cfg.q, vf, x)?;
        above.0 += 1;
        above.1 = above.1.max(r);
    }
    Ok((below, above))
}

fn cmd_simulate(rt: &Runtime) -> omega_dividends::Result<i32> {
    let (table, _) = solve_table(rt)?;
    let (barriers, _) = optimizer::optimize(&table, rt.cfg.beta)?;
    let sim_cfg = rt.cfg.simulation.clone().unwrap_or_else(default_sim_block);
    let x0_list: Vec<f64> = sim_cfg.x0.clone().unwrap_or_else(|| {
        vec![
            table.a() / 2.0,
            0.0,
            barriers.c1,
            0.5 * (barriers.c1 + barriers.c2),
            barriers.c2 + 1.0,
        ]
    });
    // z-scores against the analytic values when cmd value already ran.
    let analytic = {
        let path = rt.out.join("value.csv");
        if path.exists() {
            let f = std::io::BufReader::new(File::open(&path)?);
            Some(ValueTable::read_csv(f)?)
        } else {
            None
        }
    };

    let mut runs = Vec::new();
    let mut mode_equiv_ok = true;
    for &x0 in &x0_list {
        let mk = |mode: SimMode| SimConfig {
            n_paths: sim_cfg.n_paths,
            dt: sim_cfg.dt,
            t_max: sim_cfg.t_max,
            seed: sim_cfg.seed,
            mode,
        };
        let kill = simulate_value(&rt.model, &rt.omega, rt.cfg.q, &barriers, x0, &mk(SimMode::KillingClock))?;
        let weight = simulate_value(&rt.model, &rt.omega, rt.cfg.q, &barriers, x0, &mk(SimMode::DiscountWeight))?;
        let combined = (kill.stderr * kill.stderr + weight.stderr * weight.stderr).sqrt();
        let mode_z = (kill.estimate - weight.estimate).abs() / combined;
        if mode_z > 3.0 {
            mode_equiv_ok = false;
        }
        let primary = if sim_cfg.mode == SimMode::KillingClock {
            &kill
        } else {
            &weight
        };
        let mut entry = json!({
            "x0": x0,
            "killing_clock": kill,
            "discount_weight": weight,
            "mode_z": mode_z,
            "estimate": primary.estimate,
            "stderr": primary.stderr,
        });
        if let Some(v) = &analytic {
            let va = v.value_at(x0);
            entry["analytic"] = json!(va);
            entry["analytic_z"] = json!((primary.estimate - va).abs() / primary.stderr);
        }
        runs.push(entry);
    }
    let report = json!({
        "timestamp": timestamp(),
        "config": rt.hash,
        "n_paths": sim_cfg.n_paths,
        "dt": sim_cfg.dt,
        "t_max": sim_cfg.t_max,
        "seed": sim_cfg.seed,
        "mode": sim_cfg.mode,
        "c1_star": barriers.c1,
        "c2_star": barriers.c2,
        "mode_equivalence_passed": mode_equiv_ok,
        "runs": runs,
    });
    write_json(&rt.out.join("mc_report.json"), &report)?;
    if !mode_equiv_ok {
        return Err(Error::Verification(
            "killing-clock and discount-weight estimates disagree by more than 3 sigma".into(),
        ));
    }
    Ok(0)
}

fn cmd_sweep_beta(rt: &Runtime, betas: &[f64]) -> omega_dividends::Result<i32> {
    let (table, _) = solve_table(rt)?;
    let bmax = optimizer::beta_max(&table)?;
    let mut f = BufWriter::new(File::create(rt.out.join("beta_sweep.csv"))?);
    writeln!(f, "# config = {}", rt.hash)?;
    if let Some(bm) = bmax.value() {
        writeln!(f, "# beta_max = {}", fmt(bm))?;
    }
    writeln!(f, "beta,c1_star,c2_star,case")?;
    for &beta in betas {
        let (barriers, diag) = optimizer::optimize(&table, beta)?;
        let case = serde_json::to_value(diag.case).map_err(|e| Error::Parse(e.to_string()))?;
        writeln!(
            f,
            "{},{},{},{}",
            fmt(beta),
            fmt(barriers.c1),
            fmt(barriers.c2),
            case.as_str().unwrap_or("unknown")
        )?;
    }
    Ok(0)
}

fn parse_betas(spec: Option<&str>, config_beta: f64) -> omega_dividends::Result<Vec<f64>> {
    let Some(spec) = spec else {
        // default sweep: 20 steps of the config beta
        return Ok((1..=20).map(|i| config_beta * i as f64).collect());
    };
    let parse = |s: &str| -> omega_dividends::Result<f64> {
        s.trim()
            .parse()
            .map_err(|e| Error::Config(format!("bad beta `{s}`: {e}")))
    };
    if spec.contains(':') {
        let parts: Vec<&str> = spec.split(':').collect();
        if parts.len() != 3 {
            return Err(Error::Config("range syntax is start:stop:step".into()));
        }
        let (start, stop, step) = (parse(parts[0])?, parse(parts[1])?, parse(parts[2])?);
        if !(step > 0.0) || stop < start {
            return Err(Error::Config("need stop >= start and step > 0".into()));
        }
        let mut out = Vec::new();
        let mut k = 0;
        loop {
            let b = start + k as f64 * step;
            if b > stop + 0.5 * step {
                break;
            }
            out.push(b);
            k += 1;
        }
        Ok(out)
    } else {
        spec.split(',').map(parse).collect()
    }
}

fn fmt(v: f64) -> String {
    format!("{v:.16e}")
}

fn timestamp() -> String {
    let now = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    now.to_string()
}
