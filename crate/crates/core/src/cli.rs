//! Command-line front end. Every subcommand reads a run manifest, writes its
//! outputs under `--out` together with `run_metadata.txt`, and fails with a
//! single `ErrorClass: message` line on stderr.

use std::fmt::Write as _;
use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};
use thiserror::Error;

use crate::augment::{smote_regression, AugmentError, SmoteAmount, SmoteConfig};
use crate::dataset::{save_feature_table, DataError, MeasurementRecord};
use crate::ensemble::{fingerprint, fit_ensemble, save_ensemble, train_val_split, EnsembleError};
use crate::evaluation::{
    cross_env_matrix, run_scenario, write_heatmap, write_results, EnvData, EvalError, MatrixMode, ResultRow,
    Scenario,
};
use crate::features::FEATURE_NAMES;
use crate::learner::{fit_with_history, LearnerError};
use crate::manifest::{ManifestError, RunManifest};
use crate::metrics::{mae, Metric, MetricError};
use crate::pipeline::{environment_data, link_records, process_environment, Environment, PipelineError, SimSettings};
use crate::raster::RasterError;
use crate::reference::write_baseline_report;

pub const METADATA_FILE: &str = "run_metadata.txt";

#[derive(Debug, Parser)]
#[command(name = "pathloss", version, about = "Terrain-aware path loss prediction from scarce measurements")]
pub struct Cli {
    /// Run manifest (key = value).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Seed; overrides PATHLOSS_SEED and the manifest.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory; defaults to the manifest's `output` key.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads; results do not depend on it.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Source {
    Real,
    Synthetic,
    Combined,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Validate measurements against rasters and the station registry.
    Ingest {
        /// Environments to process; all by default.
        #[arg(long, value_delimiter = ',')]
        env: Vec<String>,
    },
    /// Estimate downtilts and per-site reference baselines.
    Baseline {
        #[arg(long, value_delimiter = ',')]
        env: Vec<String>,
    },
    /// Write the real ΔRSRP feature table.
    Features {
        #[arg(long, value_delimiter = ',')]
        env: Vec<String>,
    },
    /// Generate synthetic ΔRSRP samples on a grid.
    Simulate {
        #[arg(long, value_delimiter = ',')]
        env: Vec<String>,
    },
    /// Oversample real samples with SMOTE.
    Augment {
        #[arg(long, value_delimiter = ',')]
        env: Vec<String>,
    },
    /// Train one boosted-tree model.
    Train {
        #[arg(long, value_delimiter = ',')]
        env: Vec<String>,
        /// Training data.
        #[arg(long, value_enum, default_value = "real")]
        source: Source,
    },
    /// Fit the real/synthetic/combined ensemble and its weights.
    Ensemble {
        #[arg(long, value_delimiter = ',')]
        env: Vec<String>,
    },
    /// Run one scarcity scenario.
    Evaluate {
        /// One of sim, 5pct_real, 5pct_real_smote, 5pct_real_sim, 5pct_real_smote_sim.
        #[arg(long)]
        scenario: String,
        /// Environment to test on; all by default.
        #[arg(long)]
        test_env: Option<String>,
    },
    /// Cross-environment train/test matrix.
    Matrix {
        /// real_only or ensemble.
        #[arg(long, default_value = "ensemble")]
        mode: String,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Ingest { .. } => "ingest",
            Command::Baseline { .. } => "baseline",
            Command::Features { .. } => "features",
            Command::Simulate { .. } => "simulate",
            Command::Augment { .. } => "augment",
            Command::Train { .. } => "train",
            Command::Ensemble { .. } => "ensemble",
            Command::Evaluate { .. } => "evaluate",
            Command::Matrix { .. } => "matrix",
        }
    }
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Compute(String),
}

impl CliError {
    pub fn class(&self) -> &'static str {
        match self {
            CliError::Config(_) => "ConfigError",
            CliError::Data(_) => "DataError",
            CliError::Compute(_) => "ComputeError",
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Compute(_) => 4,
        }
    }
}

impl From<ManifestError> for CliError {
    fn from(e: ManifestError) -> Self {
        match e {
            ManifestError::Data(e) => e.into(),
            ManifestError::Raster(e) => e.into(),
            e => CliError::Config(e.to_string()),
        }
    }
}

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<RasterError> for CliError {
    fn from(e: RasterError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::UnknownStation { .. } | PipelineError::Channel { .. } => CliError::Data(e.to_string()),
            e => CliError::Compute(e.to_string()),
        }
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::MissingDataset(_) => CliError::Data(e.to_string()),
            EvalError::UnknownScenario(_) | EvalError::InvalidFraction(_) | EvalError::TooFewEnvironments(_) => {
                CliError::Config(e.to_string())
            }
            EvalError::Ensemble(e) => e.into(),
            e => CliError::Compute(e.to_string()),
        }
    }
}

impl From<EnsembleError> for CliError {
    fn from(e: EnsembleError) -> Self {
        match e {
            EnsembleError::Data(e) => e.into(),
            EnsembleError::InvalidStep(_) => CliError::Config(e.to_string()),
            e => CliError::Compute(e.to_string()),
        }
    }
}

macro_rules! compute_error {
    ($($t:ty),*) => {$(
        impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                CliError::Compute(e.to_string())
            }
        }
    )*};
}

compute_error!(AugmentError, LearnerError, MetricError);

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Data(format!("{}: {e}", path.display()))
}

/// Per-run state shared by the subcommands.
struct Run {
    manifest: RunManifest,
    out: PathBuf,
    seed: u64,
    timings: Vec<(String, f64)>,
}

impl Run {
    fn timed<T>(&mut self, stage: &str, f: impl FnOnce(&Self) -> Result<T, CliError>) -> Result<T, CliError> {
        let t = Instant::now();
        let r = f(self)?;
        self.timings.push((stage.to_string(), t.elapsed().as_secs_f64()));
        Ok(r)
    }

    fn create(&self, name: &str) -> Result<BufWriter<File>, CliError> {
        let path = self.out.join(name);
        File::create(&path).map(BufWriter::new).map_err(|e| io_err(&path, e))
    }

    fn sim_settings(&self) -> SimSettings {
        SimSettings {
            spacing: self.manifest.sim_spacing,
            margin: self.manifest.sim_margin,
            model: self.manifest.sim_model,
        }
    }

    fn env_data(&self, envs: &[Environment], records: &[MeasurementRecord]) -> Result<Vec<EnvData>, CliError> {
        envs.iter()
            .map(|e| Ok(environment_data(e, records, &self.manifest.reference, &self.sim_settings())?))
            .collect()
    }
}

/// Keeps the environments named in `wanted`, in manifest order; all when empty.
fn select(envs: Vec<Environment>, wanted: &[String]) -> Result<Vec<Environment>, CliError> {
    if let Some(missing) = wanted.iter().find(|w| !envs.iter().any(|e| &e.name == *w)) {
        return Err(CliError::Config(format!("unknown environment {missing:?}")));
    }
    Ok(envs.into_iter().filter(|e| wanted.is_empty() || wanted.contains(&e.name)).collect())
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return 0;
            }
            let msg = e.to_string();
            let first = msg.lines().next().unwrap_or("invalid arguments").trim_start_matches("error: ");
            eprintln!("ConfigError: {first}");
            return 2;
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{}: {}", e.class(), e.to_string().replace('\n', " "));
            e.exit_code()
        }
    }
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    let started = Instant::now();
    let config = cli
        .config
        .as_ref()
        .ok_or_else(|| CliError::Config("--config is required".into()))?;
    let manifest = RunManifest::load(config)?.with_env_seed()?;
    let seed = cli.seed.unwrap_or(manifest.seed);
    let out = cli
        .out
        .clone()
        .or_else(|| manifest.output.clone())
        .ok_or_else(|| CliError::Config("no output directory: pass --out or set output".into()))?;
    std::fs::create_dir_all(&out).map_err(|e| io_err(&out, e))?;
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            return Err(CliError::Config("--jobs must be at least 1".into()));
        }
        // A second initialization in the same process keeps the first pool.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global();
    }
    let mut run = Run {
        manifest,
        out,
        seed,
        timings: Vec::new(),
    };
    let (envs, records) = run.timed("load", |r| Ok(r.manifest.load_inputs()?))?;
    match &cli.command {
        Command::Ingest { env } => ingest(&mut run, select(envs, env)?, &records)?,
        Command::Baseline { env } => baseline(&mut run, select(envs, env)?, &records)?,
        Command::Features { env } => features(&mut run, select(envs, env)?, &records)?,
        Command::Simulate { env } => simulate(&mut run, select(envs, env)?, &records)?,
        Command::Augment { env } => augment(&mut run, select(envs, env)?, &records)?,
        Command::Train { env, source } => train(&mut run, select(envs, env)?, &records, *source)?,
        Command::Ensemble { env } => ensemble(&mut run, select(envs, env)?, &records)?,
        Command::Evaluate { scenario, test_env } => {
            let scenario: Scenario = scenario.parse()?;
            let wanted: Vec<String> = test_env.iter().cloned().collect();
            evaluate(&mut run, select(envs, &wanted)?, &records, scenario)?
        }
        Command::Matrix { mode } => {
            let mode: MatrixMode = mode.parse().map_err(CliError::Config)?;
            matrix(&mut run, envs, &records, mode)?
        }
    }
    write_metadata(&run, cli.command.name(), cli.jobs, started.elapsed().as_secs_f64())
}

fn write_metadata(run: &Run, command: &str, jobs: Option<usize>, total_s: f64) -> Result<(), CliError> {
    let mut s = String::new();
    let _ = writeln!(s, "command = {command}");
    let _ = writeln!(s, "version = {}", env!("CARGO_PKG_VERSION"));
    let _ = writeln!(s, "config_hash = {}", run.manifest.config_hash);
    let _ = writeln!(s, "seed = {}", run.seed);
    let _ = writeln!(s, "jobs = {}", jobs.map_or("default".to_string(), |j| j.to_string()));
    for (stage, t) in &run.timings {
        let _ = writeln!(s, "time.{stage}_s = {t:.3}");
    }
    let _ = writeln!(s, "time.total_s = {total_s:.3}");
    let path = run.out.join(METADATA_FILE);
    std::fs::write(&path, s).map_err(|e| io_err(&path, e))
}

fn ingest(run: &mut Run, envs: Vec<Environment>, records: &[MeasurementRecord]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_writer(run.create("ingest.csv")?);
    w.write_record(["env", "records", "stations", "los", "nlos"])?;
    for env in &envs {
        let linked = run.timed(&format!("link.{}", env.name), |r| {
            let cfg = crate::pipeline::reference_config_for(env, &r.manifest.reference);
            Ok(link_records(env, records, &cfg)?)
        })?;
        let los = linked.iter().filter(|l| l.measured.is_los).count();
        w.write_record([
            env.name.clone(),
            linked.len().to_string(),
            env.stations.len().to_string(),
            los.to_string(),
            (linked.len() - los).to_string(),
        ])?;
    }
    w.flush().map_err(|e| io_err(&run.out.join("ingest.csv"), e))
}

fn baseline(run: &mut Run, envs: Vec<Environment>, records: &[MeasurementRecord]) -> Result<(), CliError> {
    for env in &envs {
        let data = run.timed(&format!("baseline.{}", env.name), |r| {
            Ok(process_environment(env, records, &r.manifest.reference)?)
        })?;
        for (bs, e) in &data.skipped_sites {
            log::warn!("{}: site {bs} skipped: {e}", env.name);
        }
        let baselines: Vec<_> = data.baselines.into_values().collect();
        write_baseline_report(&baselines, run.create(&format!("baselines_{}.csv", env.name))?)?;
    }
    Ok(())
}

fn features(run: &mut Run, envs: Vec<Environment>, records: &[MeasurementRecord]) -> Result<(), CliError> {
    for env in &envs {
        let data = run.timed(&format!("features.{}", env.name), |r| {
            Ok(process_environment(env, records, &r.manifest.reference)?)
        })?;
        save_feature_table(&data.samples, &run.out.join(format!("features_{}.csv", env.name)))?;
    }
    Ok(())
}

fn simulate(run: &mut Run, envs: Vec<Environment>, records: &[MeasurementRecord]) -> Result<(), CliError> {
    for env in &envs {
        let data = run.timed(&format!("simulate.{}", env.name), |r| {
            Ok(environment_data(env, records, &r.manifest.reference, &r.sim_settings())?)
        })?;
        save_feature_table(&data.synth, &run.out.join(format!("synthetic_{}.csv", env.name)))?;
    }
    Ok(())
}

fn augment(run: &mut Run, envs: Vec<Environment>, records: &[MeasurementRecord]) -> Result<(), CliError> {
    for env in &envs {
        let out = run.timed(&format!("augment.{}", env.name), |r| {
            let data = process_environment(env, records, &r.manifest.reference)?;
            let cfg = SmoteConfig {
                k_neighbors: r.manifest.eval.smote_k,
                amount: SmoteAmount::Multiplier(r.manifest.eval.smote_multiplier),
                seed: r.seed,
            };
            Ok(smote_regression(&data.samples, &cfg)?)
        })?;
        for (e, los, n) in &out.skipped_groups {
            log::warn!("{e}: group is_los={los} has {n} samples, too few for SMOTE");
        }
        save_feature_table(&out.samples, &run.out.join(format!("smote_{}.csv", env.name)))?;
    }
    Ok(())
}

fn train(run: &mut Run, envs: Vec<Environment>, records: &[MeasurementRecord], source: Source) -> Result<(), CliError> {
    let data = run.timed("data", |r| r.env_data(&envs, records))?;
    let mut summary = csv::Writer::from_writer(run.create("train_summary.csv")?);
    summary.write_record(["env", "source", "n_train", "n_val", "train_mse", "val_mae_db"])?;
    let tag = match source {
        Source::Real => "real",
        Source::Synthetic => "synthetic",
        Source::Combined => "combined",
    };
    for d in &data {
        let samples = match source {
            Source::Real => d.real.clone(),
            Source::Synthetic => d.synth.clone(),
            Source::Combined => d.real.iter().chain(&d.synth).cloned().collect(),
        };
        let mut train_cfg = run.manifest.eval.ensemble.train.clone();
        train_cfg.seed = run.seed;
        let (train, val) = train_val_split(&samples, run.manifest.eval.ensemble.val_fraction, run.seed);
        let (model, history) = run.timed(&format!("train.{}", d.name), |_| {
            let rows: Vec<_> = train.iter().map(|s| s.features.to_array()).collect();
            let refs: Vec<&[f64]> = rows.iter().map(|r| r.as_slice()).collect();
            let y: Vec<f64> = train.iter().map(|s| s.target).collect();
            let names = FEATURE_NAMES.iter().map(|n| n.to_string()).collect();
            Ok(fit_with_history(&refs, &y, names, &train_cfg)?)
        })?;
        let model_path = run.out.join(format!("model_{}_{tag}.model", d.name));
        std::fs::write(&model_path, model.serialize()).map_err(|e| io_err(&model_path, e))?;
        let mut h = csv::Writer::from_writer(run.create(&format!("history_{}_{tag}.csv", d.name))?);
        h.write_record(["iteration", "train_mse"])?;
        for (i, m) in history.iter().enumerate() {
            h.write_record([i.to_string(), m.to_string()])?;
        }
        h.flush().map_err(|e| io_err(&run.out, e))?;
        let val_mae = if val.is_empty() {
            String::new()
        } else {
            let truth: Vec<f64> = val.iter().map(|s| s.target).collect();
            mae(&model.predict_samples(&val)?, &truth)?.to_string()
        };
        summary.write_record([
            d.name.clone(),
            tag.to_string(),
            train.len().to_string(),
            val.len().to_string(),
            history.last().map(|m| m.to_string()).unwrap_or_default(),
            val_mae,
        ])?;
    }
    summary.flush().map_err(|e| io_err(&run.out, e))
}

fn ensemble(run: &mut Run, envs: Vec<Environment>, records: &[MeasurementRecord]) -> Result<(), CliError> {
    let data = run.timed("data", |r| r.env_data(&envs, records))?;
    let mut summary = csv::Writer::from_writer(run.create("ensemble_summary.csv")?);
    summary.write_record([
        "env", "metric", "w_real", "w_synth", "w_combined", "val_loss", "loss_real", "loss_synth", "loss_combined", "n_val",
    ])?;
    for d in &data {
        let mut cfg = run.manifest.eval.ensemble.clone();
        cfg.seed = run.seed;
        cfg.train.seed = run.seed;
        let fit = run.timed(&format!("ensemble.{}", d.name), |_| Ok(fit_ensemble(&d.real, &d.synth, &cfg)?))?;
        let dir = run.out.join(format!("ensemble_{}", d.name));
        save_ensemble(&fit.model, &fingerprint(&d.real)?, &fingerprint(&d.synth)?, &dir)?;
        let metric: Metric = cfg.metric;
        let mut row = vec![d.name.clone(), metric.to_string()];
        row.extend(fit.model.w.iter().map(|w| w.to_string()));
        row.push(fit.val_loss.to_string());
        row.extend(fit.corner_losses.iter().map(|l| l.to_string()));
        row.push(fit.n_val.to_string());
        summary.write_record(&row)?;
    }
    summary.flush().map_err(|e| io_err(&run.out, e))
}

fn evaluate(
    run: &mut Run,
    envs: Vec<Environment>,
    records: &[MeasurementRecord],
    scenario: Scenario,
) -> Result<(), CliError> {
    let data = run.timed("data", |r| r.env_data(&envs, records))?;
    let mut rows: Vec<ResultRow> = Vec::new();
    for d in &data {
        let r = run.timed(&format!("evaluate.{}", d.name), |r| {
            Ok(run_scenario(scenario, &d.name, &data, r.seed, &r.manifest.eval)?)
        })?;
        rows.push(r.row);
    }
    write_results(&rows, run.create(&format!("results_{}.csv", scenario.key()))?)?;
    Ok(())
}

fn matrix(run: &mut Run, envs: Vec<Environment>, records: &[MeasurementRecord], mode: MatrixMode) -> Result<(), CliError> {
    let data = run.timed("data", |r| r.env_data(&envs, records))?;
    let runs = run.timed("matrix", |r| Ok(cross_env_matrix(&data, mode, r.seed, &r.manifest.eval)?))?;
    let rows: Vec<ResultRow> = runs.into_iter().map(|r| r.row).collect();
    write_results(&rows, run.create(&format!("matrix_{mode}.csv"))?)?;
    for metric in [Metric::Mae, Metric::Rmse] {
        let name = format!("heatmap_{mode}_{}.csv", metric.to_string().to_ascii_lowercase());
        write_heatmap(&rows, metric, run.create(&name)?)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_parse() {
        let cli = Cli::try_parse_from([
            "pathloss", "--config", "m.cfg", "evaluate", "--scenario", "5pct_real_smote_sim", "--test-env", "rural",
            "--seed", "7",
        ])
        .unwrap();
        assert_eq!(cli.seed, Some(7));
        assert!(matches!(cli.command, Command::Evaluate { ref scenario, .. } if scenario == "5pct_real_smote_sim"));
        let cli = Cli::try_parse_from(["pathloss", "train", "--env", "a,b", "--source", "synthetic"]).unwrap();
        assert!(matches!(cli.command, Command::Train { ref env, source: Source::Synthetic } if env.len() == 2));
    }

    #[test]
    fn unknown_flag_is_config_error() {
        assert_eq!(main_with_args(["pathloss", "matrix", "--colour", "red"]), 2);
        assert_eq!(main_with_args(["pathloss", "--config", "/nonexistent/m.cfg", "ingest"]), 2);
    }

    #[test]
    fn error_classes() {
        let e: CliError = EvalError::MissingDataset("x".into()).into();
        assert_eq!((e.class(), e.exit_code()), ("DataError", 3));
        let e: CliError = EvalError::UnknownScenario("x".into()).into();
        assert_eq!((e.class(), e.exit_code()), ("ConfigError", 2));
        let e: CliError = EnsembleError::EmptyValidation.into();
        assert_eq!((e.class(), e.exit_code()), ("ComputeError", 4));
    }
}
