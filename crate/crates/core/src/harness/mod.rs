//! Experiment runner: seeded runs over (dimension, algorithm, repetition),
//! per-run and aggregate CSV files, a manifest and an SVG plot.

mod config;
mod plot;

pub use config::{apply_override, Algorithm, ExperimentConfig};
pub use plot::{emit_plot, read_aggregate, AggregateRow};

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::baselines::{default_exploration_length, estc_run_with, linucb_run, otcs_run, EstcExploration};
use crate::env::{make_paper_instance, Instance, RegretTrace};
use crate::error::{Error, Result};
use crate::exec::{with_workers, Execution};
use crate::policy::exploratory_design;
use crate::soids::{run_soids_with, RoundLog};

/// The splitmix64 finalizer, a bijection on `u64`.
pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

const INSTANCE_SLOT: u64 = 0xFF;

fn pack(d: usize, slot: u64, rep: usize) -> u64 {
    ((d as u64) << 40) | (slot << 32) | rep as u64
}

/// Seed of one run. Injective in `(d, algorithm, rep)` for `d < 2^24` and `rep < 2^32`.
pub fn run_seed(master: u64, d: usize, alg: Algorithm, rep: usize) -> u64 {
    splitmix64(master.wrapping_add(pack(d, alg.code(), rep)))
}

/// Seed of the problem instance shared by all algorithms at `(d, rep)`.
pub fn instance_seed(master: u64, d: usize, rep: usize) -> u64 {
    splitmix64(master.wrapping_add(pack(d, INSTANCE_SLOT, rep)))
}

pub fn build_instance(cfg: &ExperimentConfig, d: usize, rep: usize) -> Result<Instance> {
    let mut rng = ChaCha8Rng::seed_from_u64(instance_seed(cfg.seed, d, rep));
    make_paper_instance(d, cfg.num_actions, &mut rng)
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub d: usize,
    pub algorithm: Algorithm,
    pub repetition: usize,
    pub seed: u64,
    pub trace: RegretTrace,
    pub logs: Vec<RoundLog>,
}

/// Runs one algorithm on the instance for `(d, rep)`.
pub fn run_single(cfg: &ExperimentConfig, d: usize, alg: Algorithm, rep: usize, exec: Execution) -> Result<RunOutput> {
    let instance = build_instance(cfg, d, rep)?;
    let seed = run_seed(cfg.seed, d, alg, rep);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let t = cfg.horizon;
    let (trace, logs) = match alg {
        Algorithm::Soids => {
            let run = run_soids_with(&instance, t, &cfg.soids, &mut rng, exec)?;
            (run.trace, run.logs)
        }
        Algorithm::Otcs => (otcs_run(&instance, t, &cfg.otcs, &mut rng)?, Vec::new()),
        Algorithm::Estc => {
            let t1 = cfg.estc.exploration_length.unwrap_or_else(|| default_exploration_length(d)).min(t);
            let design = match cfg.estc.exploration {
                EstcExploration::Uniform => None,
                EstcExploration::Design => Some(exploratory_design(instance.actions())?.mu),
            };
            (estc_run_with(&instance, t, t1, design.as_ref(), &mut rng)?, Vec::new())
        }
        Algorithm::Linucb => (linucb_run(&instance, t, &cfg.linucb, &mut rng)?, Vec::new()),
    };
    Ok(RunOutput { d, algorithm: alg, repetition: rep, seed, trace, logs })
}

/// Per-round mean and sample standard deviation (zero for a single run).
#[derive(Debug, Clone, PartialEq)]
pub struct Aggregate {
    pub d: usize,
    pub algorithm: Algorithm,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Aggregate {
    pub fn from_traces(d: usize, algorithm: Algorithm, traces: &[&RegretTrace]) -> Result<Self> {
        let n = traces.len();
        let len = traces.first().map_or(0, |t| t.len());
        if n == 0 || traces.iter().any(|t| t.len() != len) {
            return Err(Error::Internal("aggregation needs equally long traces".into()));
        }
        let mut mean = vec![0.0; len];
        let mut std = vec![0.0; len];
        for r in 0..len {
            let m = traces.iter().map(|t| t.cumulative[r]).sum::<f64>() / n as f64;
            mean[r] = m;
            if n > 1 {
                let ss: f64 = traces.iter().map(|t| (t.cumulative[r] - m).powi(2)).sum();
                std[r] = (ss / (n - 1) as f64).sqrt();
            }
        }
        Ok(Self { d, algorithm, mean, std })
    }

    pub fn final_mean(&self) -> f64 {
        self.mean.last().copied().unwrap_or(0.0)
    }

    pub fn final_std(&self) -> f64 {
        self.std.last().copied().unwrap_or(0.0)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("d,algorithm,round,mean,std\n");
        for r in 0..self.mean.len() {
            let _ = writeln!(out, "{},{},{},{},{}", self.d, self.algorithm.name(), r + 1, self.mean[r], self.std[r]);
        }
        out
    }
}

pub fn trace_csv(trace: &RegretTrace) -> String {
    let mut out = String::from("round,gap,cumulative_regret\n");
    for r in 0..trace.len() {
        let _ = writeln!(out, "{},{},{}", r + 1, trace.gaps[r], trace.cumulative[r]);
    }
    out
}

#[derive(Debug, Clone, Serialize)]
pub struct RunRecord {
    pub d: usize,
    pub algorithm: Algorithm,
    pub repetition: usize,
    pub seed: u64,
    pub instance_seed: u64,
    pub csv: PathBuf,
    pub final_regret: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub config_hash: String,
    pub version: String,
    pub started_unix: f64,
    pub finished_unix: f64,
    pub master_seed: u64,
    pub config: ExperimentConfig,
    pub runs: Vec<RunRecord>,
}

pub fn config_hash(cfg: &ExperimentConfig) -> Result<String> {
    let json = serde_json::to_string(cfg)?;
    let digest = Sha256::digest(json.as_bytes());
    Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
}

#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub aggregates: Vec<Aggregate>,
    pub aggregate_paths: Vec<PathBuf>,
    pub manifest_path: PathBuf,
    pub runs: Vec<RunOutput>,
}

impl ExperimentResult {
    pub fn aggregate(&self, d: usize, alg: Algorithm) -> Option<&Aggregate> {
        self.aggregates.iter().find(|a| a.d == d && a.algorithm == alg)
    }
}

fn now_unix() -> f64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0.0, |d| d.as_secs_f64())
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    let mut f = fs::File::create(path)?;
    f.write_all(text.as_bytes())?;
    Ok(())
}

pub fn run_file_name(d: usize, alg: Algorithm, rep: usize) -> String {
    format!("d{d}_{}_rep{rep}.csv", alg.name())
}

pub fn aggregate_file_name(d: usize, alg: Algorithm) -> String {
    format!("d{d}_{}.csv", alg.name())
}

/// Runs every `(d, algorithm, repetition)` job and writes all result files.
/// Output directories are created before any run starts.
pub fn run_experiment(cfg: &ExperimentConfig, exec: Execution) -> Result<ExperimentResult> {
    cfg.validate()?;
    let started = now_unix();
    let root = &cfg.output_dir;
    let runs_dir = root.join("runs");
    let agg_dir = root.join("aggregate");
    let logs_dir = root.join("logs");
    fs::create_dir_all(&runs_dir)?;
    fs::create_dir_all(&agg_dir)?;
    if cfg.verbose {
        fs::create_dir_all(&logs_dir)?;
    }

    let mut jobs = Vec::new();
    for &d in &cfg.dims {
        for &alg in &cfg.algorithms {
            for rep in 0..cfg.repetitions {
                jobs.push((d, alg, rep));
            }
        }
    }
    let results: Vec<Result<RunOutput>> = with_workers(cfg.workers, || {
        exec.map(jobs.len(), |i| {
            let (d, alg, rep) = jobs[i];
            let out = run_single(cfg, d, alg, rep, exec);
            if let Ok(o) = &out {
                log::info!("d={d} {} rep={rep}: regret {:.2}", alg.name(), o.trace.final_regret());
            }
            out
        })
    });
    let runs: Vec<RunOutput> = results.into_iter().collect::<Result<_>>()?;

    let mut records = Vec::with_capacity(runs.len());
    for run in &runs {
        let name = run_file_name(run.d, run.algorithm, run.repetition);
        write_file(&runs_dir.join(&name), &trace_csv(&run.trace))?;
        if cfg.verbose && !run.logs.is_empty() {
            let mut text = String::new();
            for l in &run.logs {
                text.push_str(&serde_json::to_string(l)?);
                text.push('\n');
            }
            let log_name = format!("d{}_{}_rep{}.jsonl", run.d, run.algorithm.name(), run.repetition);
            write_file(&logs_dir.join(log_name), &text)?;
        }
        records.push(RunRecord {
            d: run.d,
            algorithm: run.algorithm,
            repetition: run.repetition,
            seed: run.seed,
            instance_seed: instance_seed(cfg.seed, run.d, run.repetition),
            csv: PathBuf::from("runs").join(name),
            final_regret: run.trace.final_regret(),
        });
    }

    let mut aggregates = Vec::new();
    let mut aggregate_paths = Vec::new();
    for &d in &cfg.dims {
        for &alg in &cfg.algorithms {
            let traces: Vec<&RegretTrace> = runs
                .iter()
                .filter(|r| r.d == d && r.algorithm == alg)
                .map(|r| &r.trace)
                .collect();
            let agg = Aggregate::from_traces(d, alg, &traces)?;
            let path = agg_dir.join(aggregate_file_name(d, alg));
            write_file(&path, &agg.to_csv())?;
            aggregate_paths.push(path);
            aggregates.push(agg);
        }
    }

    let manifest = RunManifest {
        config_hash: config_hash(cfg)?,
        version: env!("CARGO_PKG_VERSION").to_string(),
        started_unix: started,
        finished_unix: now_unix(),
        master_seed: cfg.seed,
        config: cfg.clone(),
        runs: records,
    };
    let manifest_path = root.join("manifest.json");
    write_file(&manifest_path, &serde_json::to_string_pretty(&manifest)?)?;
    Ok(ExperimentResult { aggregates, aggregate_paths, manifest_path, runs })
}
