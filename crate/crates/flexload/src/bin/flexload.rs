//! Command-line entry point: compile threshold tables, roll out policies,
//! run fleet simulations, cross-check against the brute-force oracle and
//! benchmark the compiler. Every run validates its inputs before writing
//! anything and emits a manifest recording input/output digests.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand_chacha::rand_core::SeedableRng;

use flexload::io::{self, FileDigest, RunManifest};
use flexload::oracle;
use flexload::thresholds::{self, GridConfig};
use flexload::{bench, fleet, policy, Error, Result};

#[derive(Parser)]
#[command(
    name = "flexload",
    version,
    about = "Threshold policies for flexible loads buying energy and selling reserve capacity"
)]
struct Cli {
    /// Master seed for all randomness in the run.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Worker threads (0 = machine parallelism). Never affects results.
    #[arg(long, global = true, default_value_t = 0)]
    workers: usize,
    /// Suppress the human-readable summary on stdout.
    #[arg(long, global = true, default_value_t = false)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compile a threshold table from a load spec and a price model.
    Thresholds(ThresholdsArgs),
    /// Roll the optimal policy over a realized price path.
    Policy(PolicyArgs),
    /// Monte Carlo fleet simulation.
    Simulate(SimulateArgs),
    /// Differential check of the compiler and policy against brute-force DP.
    OracleCheck(OracleCheckArgs),
    /// Time the independent compiler across horizons and fit the growth
    /// exponent.
    Bench(BenchArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Mode {
    Independent,
    Correlated,
    Deterministic,
}

#[derive(Args)]
struct ThresholdsArgs {
    /// Load spec JSON (demand, capacity, horizon, shortfall_penalty).
    #[arg(long)]
    spec: PathBuf,
    /// Price model JSON (required for independent/correlated mode).
    #[arg(long)]
    model: Option<PathBuf>,
    /// Price CSV (deterministic path or empirical innovations).
    #[arg(long)]
    prices: Option<PathBuf>,
    #[arg(long, value_enum)]
    mode: Mode,
    /// State-grid resolution for correlated mode.
    #[arg(long, default_value_t = 0.01)]
    grid_delta: f64,
    /// State-grid lower bound for correlated mode.
    #[arg(long, allow_negative_numbers = true)]
    grid_lo: Option<f64>,
    /// State-grid upper bound for correlated mode.
    #[arg(long, allow_negative_numbers = true)]
    grid_hi: Option<f64>,
    /// Optional CSV dump of the correlated coefficient grid (t,i,psi,m).
    #[arg(long)]
    out_grid: Option<PathBuf>,
    /// Output table CSV.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PolicyArgs {
    /// Compiled table CSV.
    #[arg(long)]
    table: PathBuf,
    /// Realized price path CSV (stage,pi_e,pi_r).
    #[arg(long)]
    prices: PathBuf,
    /// Load spec JSON.
    #[arg(long)]
    spec: PathBuf,
    /// Output rollout CSV.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SimulateArgs {
    /// Simulation config JSON; the documented synthetic default when absent.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory for costs.csv, diurnal.csv, summary.json,
    /// manifest.json.
    #[arg(long)]
    out_dir: PathBuf,
    /// Write the effective config (after defaults) next to the outputs.
    #[arg(long, default_value_t = false)]
    dump_config: bool,
}

#[derive(Args)]
struct OracleCheckArgs {
    /// Number of random instances.
    #[arg(long, default_value_t = 100)]
    instances: usize,
    /// Largest horizon to draw.
    #[arg(long, default_value_t = 6)]
    max_horizon: usize,
    /// Output report CSV.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long, default_value_t = 800)]
    max_horizon: usize,
    #[arg(long, default_value_t = 100)]
    step: usize,
    /// Minimum repetitions per horizon.
    #[arg(long, default_value_t = 3)]
    reps: usize,
    /// Output timing CSV.
    #[arg(long)]
    out: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(e) = install_pool(cli.workers) {
        eprintln!("error: {e}");
        return ExitCode::from(2);
    }
    let outcome = match &cli.command {
        Command::Thresholds(args) => run_thresholds(&cli, args),
        Command::Policy(args) => run_policy(&cli, args),
        Command::Simulate(args) => run_simulate(&cli, args),
        Command::OracleCheck(args) => run_oracle_check(&cli, args),
        Command::Bench(args) => run_bench(&cli, args),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn install_pool(workers: usize) -> Result<()> {
    if workers == 0 {
        return Ok(());
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build_global()
        .map_err(|e| Error::invalid(format!("worker pool: {e}")))
}

fn say(cli: &Cli, msg: impl AsRef<str>) {
    if !cli.quiet {
        println!("{}", msg.as_ref());
    }
}

/// Write all outputs and the manifest after computation has fully succeeded,
/// so a failed run never leaves partial files behind.
fn finish_run(
    subcommand: &str,
    seed: u64,
    params: String,
    inputs: Vec<FileDigest>,
    outputs: Vec<(PathBuf, String)>,
    manifest_path: &Path,
) -> Result<()> {
    let mut manifest = RunManifest::new(subcommand, seed, &params, inputs);
    for (path, content) in &outputs {
        if let Some(parent) = path.parent() {
            if !parent.as_os_str().is_empty() {
                fs::create_dir_all(parent)
                    .map_err(|e| Error::invalid(format!("creating {}: {e}", parent.display())))?;
            }
        }
        fs::write(path, content)
            .map_err(|e| Error::invalid(format!("writing {}: {e}", path.display())))?;
        manifest.record_output(path)?;
    }
    manifest.write(manifest_path)
}

fn manifest_beside(out: &Path) -> PathBuf {
    let mut name = out.file_name().unwrap_or_default().to_os_string();
    name.push(".manifest.json");
    out.with_file_name(name)
}

fn run_thresholds(cli: &Cli, args: &ThresholdsArgs) -> Result<()> {
    let spec = io::read_load_spec(&args.spec)?;
    let mut inputs = vec![io::file_digest(&args.spec)?];

    let model =
        match (&args.model, &args.prices, args.mode) {
            (Some(path), None, Mode::Independent | Mode::Correlated) => {
                inputs.push(io::file_digest(path)?);
                io::read_price_model(path)?
            }
            (None, Some(path), Mode::Deterministic | Mode::Independent) => {
                inputs.push(io::file_digest(path)?);
                io::read_price_csv(path)?
            }
            _ => return Err(Error::invalid(
                "pass --model with independent/correlated mode or --prices with deterministic mode",
            )),
        };

    let mut outputs: Vec<(PathBuf, String)> = Vec::new();
    let params;
    match args.mode {
        Mode::Independent | Mode::Deterministic => {
            let table = thresholds::compile_independent(&spec, &model)?;
            params = format!("mode=independent horizon={}", spec.horizon);
            outputs.push((args.out.clone(), io::table_to_csv(&table)));
            say(
                cli,
                format!(
                    "compiled {}x{} thresholds -> {}",
                    spec.horizon + 1,
                    spec.horizon,
                    args.out.display()
                ),
            );
        }
        Mode::Correlated => {
            let (lo, hi) =
                match (args.grid_lo, args.grid_hi) {
                    (Some(lo), Some(hi)) => (lo, hi),
                    _ => return Err(Error::invalid(
                        "correlated mode needs --grid-lo and --grid-hi covering the state support",
                    )),
                };
            let grid = GridConfig { lo, hi, delta: args.grid_delta };
            let compiled = thresholds::compile_correlated(&spec, &model, &grid)?;
            params = format!(
                "mode=correlated horizon={} grid=[{lo},{hi}]@{}",
                spec.horizon, args.grid_delta
            );
            outputs.push((args.out.clone(), io::table_to_csv(&compiled.thresholds)));
            if let Some(grid_out) = &args.out_grid {
                let mut text = String::from("t,i,psi,m\n");
                let g = &compiled.coefficients;
                for t in 0..=g.horizon() {
                    for i in 1..=g.horizon() {
                        for &psi in g.nodes() {
                            text.push_str(&format!(
                                "{t},{i},{},{}\n",
                                flexload::numeric::fmt_sig12(psi),
                                flexload::numeric::fmt_sig12(g.eval(t, i, psi))
                            ));
                        }
                    }
                }
                outputs.push((grid_out.clone(), text));
            }
            say(cli, format!("compiled correlated thresholds -> {}", args.out.display()));
        }
    }
    finish_run("thresholds", cli.seed, params, inputs, outputs, &manifest_beside(&args.out))
}

fn run_policy(cli: &Cli, args: &PolicyArgs) -> Result<()> {
    let spec = io::read_load_spec(&args.spec)?;
    let table = io::read_table_csv(&args.table, &spec)?;
    let path = io::read_price_path(&args.prices)?;
    let inputs = vec![
        io::file_digest(&args.spec)?,
        io::file_digest(&args.table)?,
        io::file_digest(&args.prices)?,
    ];
    let rollout = policy::rollout_optimal(&table, spec.demand, &path)?;
    say(
        cli,
        format!(
            "rollout: total cost {:.6}, shortfall {:.6} -> {}",
            rollout.total_cost,
            rollout.shortfall,
            args.out.display()
        ),
    );
    let outputs = vec![(args.out.clone(), io::rollout_to_csv(&rollout))];
    finish_run(
        "policy",
        cli.seed,
        format!("demand={} horizon={}", spec.demand, spec.horizon),
        inputs,
        outputs,
        &manifest_beside(&args.out),
    )
}

fn run_simulate(cli: &Cli, args: &SimulateArgs) -> Result<()> {
    let (mut config, mut inputs) = match &args.config {
        Some(path) => (io::read_sim_config(path)?, vec![io::file_digest(path)?]),
        None => (fleet::SimConfig::synthetic_default(), Vec::new()),
    };
    if cli.seed != 0 {
        config.seed = cli.seed;
    }
    inputs.sort_by(|a, b| a.path.cmp(&b.path));

    let result = fleet::run(&config)?;
    let summary = io::sim_summary(&result);
    let summary_json = serde_json::to_string_pretty(&summary)
        .map_err(|e| Error::invalid(format!("serializing summary: {e}")))?;

    let mut outputs = vec![
        (args.out_dir.join("costs.csv"), io::costs_to_csv(&result)),
        (args.out_dir.join("diurnal.csv"), io::diurnal_to_csv(&result)),
        (args.out_dir.join("summary.json"), summary_json),
    ];
    if args.dump_config {
        let cfg_json = serde_json::to_string_pretty(&config)
            .map_err(|e| Error::invalid(format!("serializing config: {e}")))?;
        outputs.push((args.out_dir.join("config.json"), cfg_json));
    }

    for s in &result.stats {
        say(
            cli,
            format!(
                "{:>22}: mean cost {:>10.4} +/- {:<8.4} normalized {:>7} PAR {:>7}",
                s.policy.label(),
                s.mean_cost,
                s.ci_halfwidth,
                s.normalized.map_or("n/a".into(), |v| format!("{v:.4}")),
                s.par.map_or("n/a".into(), |v| format!("{v:.3}")),
            ),
        );
    }
    say(
        cli,
        format!(
            "{} sessions, dominance violations: {}, conservation violations: {}",
            result.sessions, result.dominance_violations, result.conservation_violations
        ),
    );

    finish_run(
        "simulate",
        config.seed,
        format!(
            "scenarios={} fleet={} slots={}",
            config.n_scenarios,
            config.fleet_size,
            config.slots()
        ),
        inputs,
        outputs,
        &args.out_dir.join("manifest.json"),
    )
}

fn run_oracle_check(cli: &Cli, args: &OracleCheckArgs) -> Result<()> {
    if args.instances == 0 {
        return Err(Error::invalid("need at least one instance"));
    }
    if args.max_horizon == 0 || args.max_horizon > 8 {
        return Err(Error::invalid("max horizon must be in 1..=8"));
    }
    let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(cli.seed);
    let mut csv = String::from("instance,horizon,demand,max_value_dev,action_misses,pass\n");
    let mut failures = 0usize;
    let mut worst = 0.0f64;
    for k in 0..args.instances {
        let inst = oracle::random_instance(&mut rng, args.max_horizon);
        let solution = oracle::solve_dp(&inst)?;
        let table = thresholds::compile_independent(&inst.spec, &oracle::instance_model(&inst))?;
        let report = oracle::compare(&solution, &table)?;
        let pass = report.passes(1e-9);
        if !pass {
            failures += 1;
        }
        worst = worst.max(report.max_value_dev);
        csv.push_str(&format!(
            "{k},{},{},{:.3e},{},{}\n",
            inst.spec.horizon,
            inst.spec.demand,
            report.max_value_dev,
            report.action_misses,
            if pass { "pass" } else { "fail" }
        ));
    }
    say(
        cli,
        format!(
            "{} instances checked, {} failures, worst value deviation {:.3e}",
            args.instances, failures, worst
        ),
    );
    finish_run(
        "oracle-check",
        cli.seed,
        format!("instances={} max_horizon={}", args.instances, args.max_horizon),
        Vec::new(),
        vec![(args.out.clone(), csv)],
        &manifest_beside(&args.out),
    )?;
    if failures > 0 {
        return Err(Error::OracleMismatch(format!("{failures} instances failed")));
    }
    Ok(())
}

fn run_bench(cli: &Cli, args: &BenchArgs) -> Result<()> {
    let report = bench::run(args.max_horizon, args.step, args.reps.max(1))?;
    for p in &report.points {
        say(cli, format!("T={:<5} {:>12.6} s ({} reps)", p.horizon, p.seconds, p.reps));
    }
    say(cli, format!("fitted growth exponent: {:.3}", report.exponent));
    finish_run(
        "bench",
        cli.seed,
        format!(
            "max_horizon={} step={} exponent={:.6}",
            args.max_horizon, args.step, report.exponent
        ),
        Vec::new(),
        vec![(args.out.clone(), bench::to_csv(&report))],
        &manifest_beside(&args.out),
    )
}
