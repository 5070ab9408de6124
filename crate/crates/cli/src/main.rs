use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use fmfd_core::harness::{
    self, compare_config, run_compare, run_evolve, run_sweep, Config, RunConfig, SweepConfig,
};
use fmfd_core::{Error, Result, Sign};

/// Fermionic mean-field dynamics on the periodic box.
#[derive(Debug, Parser)]
#[command(name = "fmfd", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Single Hartree / free-with-phase trajectory.
    Evolve(EvolveArgs),
    /// Trajectories over a list of particle numbers with fitted slopes.
    Sweep(SweepArgs),
    /// Exact two-body evolution against the mean-field families.
    Compare2(CompareArgs),
    /// Invariant and inequality suite; exit code 0 iff every check passes.
    Check(CheckArgs),
}

#[derive(Debug, Args)]
struct EvolveArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Particle number N.
    #[arg(long)]
    n: Option<usize>,
    /// Grid points per axis.
    #[arg(long)]
    grid: Option<usize>,
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long)]
    t_final: Option<f64>,
    /// Observation stride in steps.
    #[arg(long)]
    every: Option<usize>,
    #[arg(long)]
    sign: Option<Sign>,
    #[arg(long)]
    exchange: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct CompareArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Grid points per axis (at most 12, or 16 with --opt-in-large).
    #[arg(long)]
    grid: Option<usize>,
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long)]
    t_final: Option<f64>,
    #[arg(long)]
    every: Option<usize>,
    #[arg(long)]
    sign: Option<Sign>,
    /// Run all dynamics without interaction.
    #[arg(long)]
    zero_coupling: bool,
    /// Allow n = 16 (about 2 GB of memory).
    #[arg(long)]
    opt_in_large: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct CheckArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn load_config(path: &Option<PathBuf>) -> Result<Config> {
    path.as_deref().map(Config::load).transpose().map(Option::unwrap_or_default)
}

fn init_threads() -> Result<()> {
    let Ok(raw) = std::env::var("THREADS") else {
        return Ok(());
    };
    let threads: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|t| *t > 0)
        .ok_or_else(|| Error::Config(format!("THREADS must be a positive integer, got {raw:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| Error::Config(format!("cannot start {threads} worker threads: {e}")))
}

fn evolve(args: EvolveArgs) -> Result<ExitCode> {
    let cfg = load_config(&args.config)?;
    let mut run = RunConfig::from_config(&cfg)?;
    run.n_particles = args.n.unwrap_or(run.n_particles);
    run.grid = args.grid.unwrap_or(run.grid);
    run.eps = args.eps.unwrap_or(run.eps);
    run.dt = args.dt.unwrap_or(run.dt);
    run.t_final = args.t_final.unwrap_or(run.t_final);
    run.every = args.every.unwrap_or(run.every);
    run.sign = args.sign.unwrap_or(run.sign);
    run.exchange |= args.exchange;
    let out = args
        .out
        .or_else(|| cfg.get("evolve", "out").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("evolve_out"));
    let res = run_evolve(&run, &out)?;
    let last = res.records.last().expect("at least the initial record");
    println!("{} rows -> {}", res.records.len(), res.csv.display());
    println!("final orbitals -> {}", res.checkpoint.display());
    for (k, v) in &last.metrics {
        println!("  {k} = {v:.6e}");
    }
    Ok(ExitCode::SUCCESS)
}

fn sweep(args: SweepArgs) -> Result<ExitCode> {
    let mut cfg = SweepConfig::from_config(&load_config(&args.config)?)?;
    if let Some(out) = args.out {
        cfg.out = out;
    }
    let summary = run_sweep(&cfg)?;
    for r in &summary.runs {
        match &r.error {
            None => println!("{}: ok, {} rows", r.run_id, r.rows),
            Some(e) => println!("{}: {e}", r.run_id),
        }
    }
    for s in &summary.slopes {
        match (&s.fit, &s.error) {
            (Some(f), _) => println!("slope {} (t = {}): {:.4} (r2 {:.4})", s.name, s.t, f.slope, f.r2),
            (None, Some(e)) => println!("slope {} (t = {}): {e}", s.name, s.t),
            (None, None) => {}
        }
    }
    println!("summary -> {}", cfg.out.join("summary.json").display());
    Ok(match summary.failure() {
        None => ExitCode::SUCCESS,
        Some(class) => ExitCode::from(match class {
            fmfd_core::ErrorClass::Validation => 1,
            fmfd_core::ErrorClass::Numerical => 2,
            fmfd_core::ErrorClass::Io => 3,
        }),
    })
}

fn compare2(args: CompareArgs) -> Result<ExitCode> {
    let (mut c, out) = compare_config(&load_config(&args.config)?)?;
    c.n = args.grid.unwrap_or(c.n);
    c.eps = args.eps.unwrap_or(c.eps);
    c.dt = args.dt.unwrap_or(c.dt);
    c.t_final = args.t_final.unwrap_or(c.t_final);
    c.every = args.every.unwrap_or(c.every);
    c.sign = args.sign.unwrap_or(c.sign);
    c.zero_coupling |= args.zero_coupling;
    c.allow_large |= args.opt_in_large;
    let out = args.out.or(out).unwrap_or_else(|| PathBuf::from("compare2_out"));
    let rows = run_compare(&c, &out)?;
    println!("t d_hartree d_free_phase d_free");
    for r in &rows {
        println!("{:.3} {:.6e} {:.6e} {:.6e}", r.t, r.distance[0], r.distance[1], r.distance[2]);
    }
    println!("tables -> {}", out.display());
    Ok(ExitCode::SUCCESS)
}

fn check(args: CheckArgs) -> Result<ExitCode> {
    let outcomes = harness::run_all(args.seed);
    for o in &outcomes {
        println!("{} {}: {}", if o.passed { "PASS" } else { "FAIL" }, o.name, o.detail);
    }
    let failed = outcomes.iter().filter(|o| !o.passed).count();
    println!("{} of {} checks passed", outcomes.len() - failed, outcomes.len());
    Ok(if failed == 0 { ExitCode::SUCCESS } else { ExitCode::from(2) })
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    let result = init_threads().and_then(|()| match cli.command {
        Command::Evolve(a) => evolve(a),
        Command::Sweep(a) => sweep(a),
        Command::Compare2(a) => compare2(a),
        Command::Check(a) => check(a),
    });
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("fmfd: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
