//! `soids`: run experiments, check lemmas, plot results, print instances.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sparse_ids::env::make_paper_instance;
use sparse_ids::exec::with_workers;
use sparse_ids::harness::{emit_plot, run_experiment, ExperimentConfig};
use sparse_ids::verify::{run_checks, Lemma};
use sparse_ids::Execution;

#[derive(Parser, Debug)]
#[command(name = "soids", version, about = "Sparse optimistic information-directed sampling experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run the regret experiment and write CSV, manifest and plot files.
    Run(RunArgs),
    /// Numerically check the supporting lemmas and print a JSON report.
    Verify(VerifyArgs),
    /// Plot aggregate CSV files (or the aggregate/ folder of a results directory) as SVG.
    Plot(PlotArgs),
    /// Print a generated problem instance as JSON.
    Instance(InstanceArgs),
}

#[derive(Args, Debug)]
struct RunArgs {
    /// TOML experiment config.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed, overrides the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Concurrent runs (0 = all cores).
    #[arg(long)]
    workers: Option<usize>,
    /// Write per-round SOIDS logs and info-level progress.
    #[arg(long)]
    verbose: bool,
    /// Output directory, overrides the config.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Skip the SVG plot.
    #[arg(long)]
    no_plot: bool,
    /// Dotted config overrides such as soids.sampler.M=200.
    #[arg(value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Args, Debug)]
struct VerifyArgs {
    /// Restrict to the named check; repeatable.
    #[arg(long = "lemma", value_name = "NAME")]
    lemmas: Vec<String>,
    #[arg(long, default_value_t = 2024)]
    seed: u64,
    #[arg(long, default_value_t = 0)]
    workers: usize,
    #[arg(long)]
    verbose: bool,
}

#[derive(Args, Debug)]
struct PlotArgs {
    /// Aggregate CSV files or result directories.
    #[arg(required = true)]
    inputs: Vec<PathBuf>,
    /// SVG file to write.
    #[arg(long, default_value = "regret.svg")]
    output: PathBuf,
    #[arg(long)]
    verbose: bool,
}

#[derive(Args, Debug)]
struct InstanceArgs {
    #[arg(long, default_value_t = 20)]
    dim: usize,
    #[arg(long, default_value_t = 200)]
    actions: usize,
    #[arg(long, default_value_t = 2024)]
    seed: u64,
    #[arg(long)]
    verbose: bool,
}

fn init_logging(verbose: bool) {
    let level = if verbose { "info" } else { "warn" };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .target(env_logger::Target::Stderr)
        .try_init();
}

fn fail(msg: impl std::fmt::Display) -> ExitCode {
    eprintln!("error: {msg}");
    ExitCode::from(1)
}

fn cmd_run(a: RunArgs) -> ExitCode {
    init_logging(a.verbose);
    let mut cfg = match ExperimentConfig::load(a.config.as_deref(), &a.overrides) {
        Ok(c) => c,
        Err(e) => return fail(e),
    };
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if let Some(w) = a.workers {
        cfg.workers = w;
    }
    if let Some(o) = a.output {
        cfg.output_dir = o;
    }
    cfg.verbose |= a.verbose;
    let result = match run_experiment(&cfg, Execution::default()) {
        Ok(r) => r,
        Err(e) => return fail(e),
    };
    for agg in &result.aggregates {
        eprintln!(
            "d={:<4} {:<7} final regret {:.2} ± {:.2}",
            agg.d,
            agg.algorithm.name(),
            agg.final_mean(),
            agg.final_std()
        );
    }
    if !a.no_plot {
        if let Err(e) = emit_plot(&result.aggregate_paths, &cfg.output_dir.join("regret.svg")) {
            return fail(e);
        }
    }
    println!("{}", result.manifest_path.display());
    ExitCode::SUCCESS
}

fn cmd_verify(a: VerifyArgs) -> ExitCode {
    init_logging(a.verbose);
    let mut lemmas = Vec::new();
    for name in &a.lemmas {
        match Lemma::from_id(name) {
            Some(l) => lemmas.push(l),
            None => {
                let known: Vec<&str> = Lemma::ALL.iter().map(|l| l.id()).collect();
                eprintln!("error: unknown lemma '{name}'; known: {}", known.join(", "));
                return ExitCode::from(2);
            }
        }
    }
    let reports = match with_workers(a.workers, || run_checks(&lemmas, a.seed, Execution::default())) {
        Ok(r) => r,
        Err(e) => return fail(e),
    };
    match serde_json::to_string_pretty(&reports) {
        Ok(s) => println!("{s}"),
        Err(e) => return fail(e),
    }
    let failed: Vec<&str> = reports.iter().filter(|r| !r.pass).map(|r| r.lemma.as_str()).collect();
    if failed.is_empty() {
        ExitCode::SUCCESS
    } else {
        fail(format!("checks failed: {}", failed.join(", ")))
    }
}

fn collect_csvs(input: &Path) -> std::io::Result<Vec<PathBuf>> {
    if !input.is_dir() {
        return Ok(vec![input.to_path_buf()]);
    }
    let dir = if input.join("aggregate").is_dir() { input.join("aggregate") } else { input.to_path_buf() };
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .collect();
    files.sort();
    Ok(files)
}

fn cmd_plot(a: PlotArgs) -> ExitCode {
    init_logging(a.verbose);
    let mut paths = Vec::new();
    for input in &a.inputs {
        match collect_csvs(input) {
            Ok(mut v) => paths.append(&mut v),
            Err(e) => return fail(format!("{}: {e}", input.display())),
        }
    }
    match emit_plot(&paths, &a.output) {
        Ok(()) => {
            println!("{}", a.output.display());
            ExitCode::SUCCESS
        }
        Err(e) => fail(e),
    }
}

fn cmd_instance(a: InstanceArgs) -> ExitCode {
    init_logging(a.verbose);
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    match make_paper_instance(a.dim, a.actions, &mut rng).and_then(|i| i.to_json()) {
        Ok(json) => {
            println!("{json}");
            ExitCode::SUCCESS
        }
        Err(e) => fail(e),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Verify(a) => cmd_verify(a),
        Command::Plot(a) => cmd_plot(a),
        Command::Instance(a) => cmd_instance(a),
    }
}
