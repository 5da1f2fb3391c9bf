//! Splits, the data-scarcity scenarios and the cross-environment matrix.

use std::collections::BTreeSet;
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::augment::{smote_regression, AugmentError, SmoteAmount, SmoteConfig};
use crate::dataset::LinkSample;
use crate::ensemble::{fit_ensemble, train_val_split, EnsembleConfig, EnsembleError};
use crate::learner::{fit_samples, LearnerError};
use crate::metrics::{mae, rmse, MetricError};

pub use crate::metrics::Metric;

pub const DEFAULT_SCARCITY_FRACTION: f64 = 0.05;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("missing dataset: {0}")]
    MissingDataset(String),
    #[error("fraction must lie in (0, 1], got {0}")]
    InvalidFraction(f64),
    #[error("{0} test records also appear in training inputs")]
    Leakage(usize),
    #[error("need at least two environments, got {0}")]
    TooFewEnvironments(usize),
    #[error("unknown scenario {0:?}")]
    UnknownScenario(String),
    #[error(transparent)]
    Augment(#[from] AugmentError),
    #[error(transparent)]
    Ensemble(#[from] EnsembleError),
    #[error(transparent)]
    Learner(#[from] LearnerError),
    #[error(transparent)]
    Metric(#[from] MetricError),
}

/// Seeded shuffle of `items` sorted by id, so the result depends only on the
/// id set and the seed.
fn shuffled<'a>(items: &'a [LinkSample], seed: u64) -> Vec<&'a LinkSample> {
    let mut v: Vec<&LinkSample> = items.iter().collect();
    v.sort_by(|a, b| a.id.cmp(&b.id));
    v.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    v
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Split {
    pub test: Vec<LinkSample>,
    pub train_pool: Vec<LinkSample>,
}

/// Uniform 50/50 split per environment; the test half gets `floor(n/2)`.
pub fn split_dataset(samples: &[LinkSample], seed: u64) -> Split {
    let envs: BTreeSet<&str> = samples.iter().map(|s| s.env.as_str()).collect();
    let mut out = Split::default();
    for env in envs {
        let members: Vec<LinkSample> = samples.iter().filter(|s| s.env == env).cloned().collect();
        let order = shuffled(&members, seed);
        let n_test = members.len() / 2;
        out.test.extend(order[..n_test].iter().map(|s| (*s).clone()));
        out.train_pool.extend(order[n_test..].iter().map(|s| (*s).clone()));
    }
    out
}

/// Seeded draw of `round(fraction·n)` samples from the training pool.
pub fn scarcity_sample(pool: &[LinkSample], fraction: f64, seed: u64) -> Result<Vec<LinkSample>, EvalError> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(EvalError::InvalidFraction(fraction));
    }
    let n = (fraction * pool.len() as f64).round() as usize;
    Ok(shuffled(pool, seed).into_iter().take(n).cloned().collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Scenario {
    Sim,
    Real,
    RealSmote,
    RealSim,
    RealSmoteSim,
}

impl Scenario {
    pub const ALL: [Scenario; 5] = [
        Scenario::Sim,
        Scenario::Real,
        Scenario::RealSmote,
        Scenario::RealSim,
        Scenario::RealSmoteSim,
    ];

    pub fn key(self) -> &'static str {
        match self {
            Scenario::Sim => "sim",
            Scenario::Real => "5pct_real",
            Scenario::RealSmote => "5pct_real_smote",
            Scenario::RealSim => "5pct_real_sim",
            Scenario::RealSmoteSim => "5pct_real_smote_sim",
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Scenario::Sim => "SIM",
            Scenario::Real => "5% Real",
            Scenario::RealSmote => "5% Real + SMOTE",
            Scenario::RealSim => "5% Real + SIM",
            Scenario::RealSmoteSim => "5% Real + SMOTE + SIM",
        }
    }

    fn uses_real(self) -> bool {
        self != Scenario::Sim
    }

    fn uses_smote(self) -> bool {
        matches!(self, Scenario::RealSmote | Scenario::RealSmoteSim)
    }

    fn uses_sim(self) -> bool {
        matches!(self, Scenario::Sim | Scenario::RealSim | Scenario::RealSmoteSim)
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.key())
    }
}

impl FromStr for Scenario {
    type Err = EvalError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let t = s.trim();
        Scenario::ALL
            .into_iter()
            .find(|c| c.key().eq_ignore_ascii_case(t) || c.label().eq_ignore_ascii_case(t))
            .ok_or_else(|| EvalError::UnknownScenario(s.to_string()))
    }
}

/// Measured and simulated samples of one environment.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvData {
    pub name: String,
    pub real: Vec<LinkSample>,
    pub synth: Vec<LinkSample>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalConfig {
    pub fraction: f64,
    /// SMOTE output size as a multiple of the scarce real set.
    pub smote_multiplier: f64,
    pub smote_k: usize,
    pub ensemble: EnsembleConfig,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            fraction: DEFAULT_SCARCITY_FRACTION,
            smote_multiplier: 2.0,
            smote_k: crate::augment::DEFAULT_K_NEIGHBORS,
            ensemble: EnsembleConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub label: String,
    pub train_env: String,
    pub test_env: String,
    pub mae_db: f64,
    pub rmse_db: f64,
    pub n_test: usize,
    pub n_train: usize,
    /// Ensemble weights when the mixed-source path ran.
    pub weights: Option<[f64; 3]>,
}

/// A finished run with the id sets the leakage guard compared.
#[derive(Debug, Clone, PartialEq)]
pub struct Run {
    pub row: ResultRow,
    pub test_ids: BTreeSet<String>,
    /// Ids of every training input, SMOTE parents included.
    pub train_ids: BTreeSet<String>,
}

fn input_ids<'a>(sets: impl IntoIterator<Item = &'a [LinkSample]>) -> BTreeSet<String> {
    let mut ids = BTreeSet::new();
    for s in sets.into_iter().flatten() {
        ids.insert(s.id.clone());
        ids.extend(s.parents.iter().cloned());
    }
    ids
}

/// Trains either one model (single source) or the weighted ensemble (real and
/// synthetic both present) and scores it on `test`.
fn train_and_score(
    label: String,
    train_env: &str,
    real: &[LinkSample],
    synth: &[LinkSample],
    test: &[LinkSample],
    config: &EvalConfig,
) -> Result<Run, EvalError> {
    let test_ids: BTreeSet<String> = test.iter().map(|s| s.id.clone()).collect();
    let train_ids = input_ids([real, synth]);
    let leaked = test_ids.intersection(&train_ids).count();
    if leaked > 0 {
        return Err(EvalError::Leakage(leaked));
    }
    let truth: Vec<f64> = test.iter().map(|s| s.target).collect();
    let (pred, weights) = if !real.is_empty() && !synth.is_empty() {
        let fit = fit_ensemble(real, synth, &config.ensemble)?;
        (fit.model.predict_samples(test)?, Some(fit.model.w))
    } else {
        // Same split seeds as the matching ensemble member, so a corner-weight
        // ensemble reproduces the single-source model exactly.
        let (data, split_seed) = if real.is_empty() {
            (synth, config.ensemble.seed.wrapping_add(1))
        } else {
            (real, config.ensemble.seed)
        };
        if data.is_empty() {
            return Err(EvalError::MissingDataset(format!("{label}: no training data")));
        }
        let (train, _) = train_val_split(data, config.ensemble.val_fraction, split_seed);
        let model = fit_samples(&train, &config.ensemble.train)?;
        (model.predict_samples(test)?, None)
    };
    Ok(Run {
        row: ResultRow {
            label,
            train_env: train_env.to_string(),
            test_env: test.first().map(|s| s.env.clone()).unwrap_or_default(),
            mae_db: mae(&pred, &truth)?,
            rmse_db: rmse(&pred, &truth)?,
            n_test: test.len(),
            n_train: real.len() + synth.len(),
            weights,
        },
        test_ids,
        train_ids,
    })
}

fn find<'a>(envs: &'a [EnvData], name: &str) -> Result<&'a EnvData, EvalError> {
    envs.iter()
        .find(|e| e.name == name)
        .ok_or_else(|| EvalError::MissingDataset(format!("environment {name}")))
}

fn seeded(config: &EvalConfig, seed: u64) -> EvalConfig {
    let mut c = config.clone();
    c.ensemble.seed = seed.wrapping_add(3);
    c.ensemble.train.seed = seed.wrapping_add(4);
    c
}

/// One scarcity scenario on `test_env`, evaluated on its held-out half.
pub fn run_scenario(
    scenario: Scenario,
    test_env: &str,
    envs: &[EnvData],
    seed: u64,
    config: &EvalConfig,
) -> Result<Run, EvalError> {
    let env = find(envs, test_env)?;
    let config = seeded(config, seed);
    let split = split_dataset(&env.real, seed);
    let mut real = Vec::new();
    if scenario.uses_real() {
        real = scarcity_sample(&split.train_pool, config.fraction, seed.wrapping_add(1))?;
        if real.is_empty() {
            return Err(EvalError::MissingDataset(format!("{test_env}: empty scarce real set")));
        }
    }
    if scenario.uses_smote() {
        let smote = smote_regression(
            &real,
            &SmoteConfig {
                k_neighbors: config.smote_k,
                amount: SmoteAmount::Multiplier(config.smote_multiplier),
                seed: seed.wrapping_add(2),
            },
        )?;
        real.extend(smote.samples);
    }
    let synth: &[LinkSample] = if scenario.uses_sim() {
        if env.synth.is_empty() {
            return Err(EvalError::MissingDataset(format!("{test_env}: no synthetic data")));
        }
        &env.synth
    } else {
        &[]
    };
    train_and_score(scenario.label().to_string(), test_env, &real, synth, &split.test, &config)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatrixMode {
    RealOnly,
    Ensemble,
}

impl fmt::Display for MatrixMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MatrixMode::RealOnly => "real_only",
            MatrixMode::Ensemble => "ensemble",
        })
    }
}

impl FromStr for MatrixMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "real_only" => Ok(MatrixMode::RealOnly),
            "ensemble" => Ok(MatrixMode::Ensemble),
            other => Err(format!("unknown matrix mode {other:?}")),
        }
    }
}

/// Every (train, test) environment pair. Training uses the train
/// environment's real training half; the ensemble mode adds the test
/// environment's synthetic data. All cells score the test environment's
/// held-out half. Rows are ordered by train then test environment.
pub fn cross_env_matrix(
    envs: &[EnvData],
    mode: MatrixMode,
    seed: u64,
    config: &EvalConfig,
) -> Result<Vec<Run>, EvalError> {
    if envs.len() < 2 {
        return Err(EvalError::TooFewEnvironments(envs.len()));
    }
    let config = seeded(config, seed);
    let splits: Vec<Split> = envs.iter().map(|e| split_dataset(&e.real, seed)).collect();
    let mut runs = Vec::new();
    for (i, train) in envs.iter().enumerate() {
        for (j, test) in envs.iter().enumerate() {
            let synth: &[LinkSample] = match mode {
                MatrixMode::RealOnly => &[],
                MatrixMode::Ensemble => &test.synth,
            };
            let label = format!("{}(R){}", train.name, if synth.is_empty() { String::new() } else { format!("+{}(S)", test.name) });
            runs.push(train_and_score(label, &train.name, &splits[i].train_pool, synth, &splits[j].test, &config)?);
        }
    }
    Ok(runs)
}

pub fn write_results(rows: &[ResultRow], writer: impl Write) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["scenario", "train_env", "test_env", "mae_db", "rmse_db", "n_test", "n_train", "w_real", "w_synth", "w_combined"])?;
    for r in rows {
        let w3 = r.weights.map(|w| w.map(|x| x.to_string())).unwrap_or_default();
        w.write_record([
            r.label.clone(),
            r.train_env.clone(),
            r.test_env.clone(),
            format!("{:.6}", r.mae_db),
            format!("{:.6}", r.rmse_db),
            r.n_test.to_string(),
            r.n_train.to_string(),
            w3[0].clone(),
            w3[1].clone(),
            w3[2].clone(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// E×E grid of one metric: rows are training environments, columns test
/// environments.
pub fn write_heatmap(rows: &[ResultRow], metric: Metric, writer: impl Write) -> Result<(), csv::Error> {
    let mut envs: Vec<&str> = rows.iter().map(|r| r.train_env.as_str()).collect();
    envs.sort_unstable();
    envs.dedup();
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec![format!("train\\test ({metric})")];
    header.extend(envs.iter().map(|e| e.to_string()));
    w.write_record(&header)?;
    for tr in &envs {
        let mut rec = vec![tr.to_string()];
        for te in &envs {
            let cell = rows
                .iter()
                .find(|r| r.train_env == *tr && r.test_env == *te)
                .map(|r| match metric {
                    Metric::Mae => format!("{:.6}", r.mae_db),
                    Metric::Rmse => format!("{:.6}", r.rmse_db),
                })
                .unwrap_or_default();
            rec.push(cell);
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}
