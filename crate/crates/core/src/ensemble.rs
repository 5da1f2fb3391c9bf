//! Weighted real / synthetic / combined model ensemble.
//!
//! Three boosted models are trained on real data, synthetic data and their
//! union. Blend weights on the probability simplex are chosen by exhaustive
//! grid search on pooled validation predictions.

use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::dataset::{write_feature_table, DataError, LinkSample};
use crate::learner::{fit_samples, GbdtModel, LearnerError, TrainConfig};
use crate::metrics::{Metric, MetricError};

pub const DEFAULT_WEIGHT_STEP: f64 = 0.01;
pub const DEFAULT_VALIDATION_FRACTION: f64 = 0.2;

#[derive(Debug, Error)]
pub enum EnsembleError {
    #[error("validation set is empty")]
    EmptyValidation,
    #[error("weight step {0} does not divide 1")]
    InvalidStep(f64),
    #[error("{0} training set is empty")]
    EmptyDataset(&'static str),
    #[error("prediction vectors have different lengths")]
    LengthMismatch,
    #[error(transparent)]
    Learner(#[from] LearnerError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error("ensemble manifest: {0}")]
    Manifest(String),
}

/// Blend `w·p` with exact corners: a unit weight returns that model's
/// prediction unchanged, and identical predictors blend to themselves.
pub fn blend(w: [f64; 3], p: [f64; 3]) -> f64 {
    if w[0] == 1.0 {
        p[0]
    } else if w[1] == 1.0 {
        p[1]
    } else {
        p[2] + w[0] * (p[0] - p[2]) + w[1] * (p[1] - p[2])
    }
}

/// Simplex grid in scan order: `w1` ascending, then `w2` ascending, so the
/// first minimum found is the lexicographically smallest weight triple.
pub fn simplex_grid(step: f64) -> Result<Vec<[f64; 3]>, EnsembleError> {
    let n = (1.0 / step).round();
    if !(step > 0.0) || n < 1.0 || (n * step - 1.0).abs() > 1e-9 {
        return Err(EnsembleError::InvalidStep(step));
    }
    let n = n as usize;
    let mut grid = Vec::with_capacity((n + 1) * (n + 2) / 2);
    for i in 0..=n {
        for j in 0..=n - i {
            let k = n - i - j;
            grid.push([i as f64 / n as f64, j as f64 / n as f64, k as f64 / n as f64]);
        }
    }
    Ok(grid)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightFit {
    pub w: [f64; 3],
    pub loss: f64,
}

/// Exhaustive simplex search minimizing `metric` of the blended predictions.
pub fn optimize_weights(
    preds: [&[f64]; 3],
    truth: &[f64],
    metric: Metric,
    step: f64,
) -> Result<WeightFit, EnsembleError> {
    if truth.is_empty() {
        return Err(EnsembleError::EmptyValidation);
    }
    if preds.iter().any(|p| p.len() != truth.len()) {
        return Err(EnsembleError::LengthMismatch);
    }
    let grid = simplex_grid(step)?;
    let losses: Vec<f64> = grid
        .par_iter()
        .map(|&w| {
            let blended: Vec<f64> = (0..truth.len())
                .map(|i| blend(w, [preds[0][i], preds[1][i], preds[2][i]]))
                .collect();
            metric.score(&blended, truth).expect("lengths checked")
        })
        .collect();
    let best = losses
        .iter()
        .enumerate()
        .fold(0, |b, (i, l)| if *l < losses[b] { i } else { b });
    Ok(WeightFit {
        w: grid[best],
        loss: losses[best],
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleModel {
    pub m_real: GbdtModel,
    pub m_synth: GbdtModel,
    pub m_combined: GbdtModel,
    pub w: [f64; 3],
    pub metric: Metric,
}

impl EnsembleModel {
    pub fn predict(&self, x: &[f64]) -> Result<f64, LearnerError> {
        Ok(blend(
            self.w,
            [self.m_real.predict(x)?, self.m_synth.predict(x)?, self.m_combined.predict(x)?],
        ))
    }

    pub fn predict_samples(&self, samples: &[LinkSample]) -> Result<Vec<f64>, LearnerError> {
        samples.iter().map(|s| self.predict(&s.features.to_array())).collect()
    }
}

/// Real-only, synthetic-only and pooled models with one shared config.
pub fn train_triplet(
    real: &[LinkSample],
    synth: &[LinkSample],
    config: &TrainConfig,
) -> Result<[GbdtModel; 3], EnsembleError> {
    if real.is_empty() {
        return Err(EnsembleError::EmptyDataset("real"));
    }
    if synth.is_empty() {
        return Err(EnsembleError::EmptyDataset("synthetic"));
    }
    let combined: Vec<LinkSample> = real.iter().chain(synth).cloned().collect();
    let (m_real, (m_synth, m_combined)) = rayon::join(
        || fit_samples(real, config),
        || rayon::join(|| fit_samples(synth, config), || fit_samples(&combined, config)),
    );
    Ok([m_real?, m_synth?, m_combined?])
}

/// Seeded split into `(train, validation)` with `round(fraction·n)` rows held
/// out. Sorting by id first makes membership independent of input order.
pub fn train_val_split(samples: &[LinkSample], fraction: f64, seed: u64) -> (Vec<LinkSample>, Vec<LinkSample>) {
    let mut sorted: Vec<&LinkSample> = samples.iter().collect();
    sorted.sort_by(|a, b| a.id.cmp(&b.id));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    sorted.shuffle(&mut rng);
    let n_val = (fraction * samples.len() as f64).round() as usize;
    let (val, train) = sorted.split_at(n_val.min(samples.len()));
    (train.iter().map(|s| (*s).clone()).collect(), val.iter().map(|s| (*s).clone()).collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleConfig {
    pub train: TrainConfig,
    pub metric: Metric,
    pub step: f64,
    pub val_fraction: f64,
    pub seed: u64,
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        Self {
            train: TrainConfig::default(),
            metric: Metric::Mae,
            step: DEFAULT_WEIGHT_STEP,
            val_fraction: DEFAULT_VALIDATION_FRACTION,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleFit {
    pub model: EnsembleModel,
    pub val_loss: f64,
    /// Validation loss of the real, synthetic and combined models alone.
    pub corner_losses: [f64; 3],
    pub n_val: usize,
}

/// The full procedure: 80/20 splits of both sources, the model triplet on the
/// training parts, and weights fit on the pooled validation parts.
pub fn fit_ensemble(
    real: &[LinkSample],
    synth: &[LinkSample],
    config: &EnsembleConfig,
) -> Result<EnsembleFit, EnsembleError> {
    let (real_train, real_val) = train_val_split(real, config.val_fraction, config.seed);
    let (synth_train, synth_val) = train_val_split(synth, config.val_fraction, config.seed.wrapping_add(1));
    let [m_real, m_synth, m_combined] = train_triplet(&real_train, &synth_train, &config.train)?;
    let val: Vec<LinkSample> = real_val.into_iter().chain(synth_val).collect();
    if val.is_empty() {
        return Err(EnsembleError::EmptyValidation);
    }
    let truth: Vec<f64> = val.iter().map(|s| s.target).collect();
    let p = [
        m_real.predict_samples(&val)?,
        m_synth.predict_samples(&val)?,
        m_combined.predict_samples(&val)?,
    ];
    let fit = optimize_weights([&p[0], &p[1], &p[2]], &truth, config.metric, config.step)?;
    let corner_losses = [
        config.metric.score(&p[0], &truth)?,
        config.metric.score(&p[1], &truth)?,
        config.metric.score(&p[2], &truth)?,
    ];
    Ok(EnsembleFit {
        model: EnsembleModel {
            m_real,
            m_synth,
            m_combined,
            w: fit.w,
            metric: config.metric,
        },
        val_loss: fit.loss,
        corner_losses,
        n_val: val.len(),
    })
}

/// SHA-256 of the feature-table CSV encoding of `samples`.
pub fn fingerprint(samples: &[LinkSample]) -> Result<String, DataError> {
    let mut buf = Vec::new();
    write_feature_table(samples, &mut buf)?;
    Ok(hex::encode(Sha256::digest(&buf)))
}

const MODEL_FILES: [&str; 3] = ["m_real.model", "m_synth.model", "m_combined.model"];

/// Writes the three model files and `ensemble.cfg` (weights, metric, data
/// fingerprints) into `dir`.
pub fn save_ensemble(
    model: &EnsembleModel,
    real_fingerprint: &str,
    synth_fingerprint: &str,
    dir: &Path,
) -> Result<(), EnsembleError> {
    std::fs::create_dir_all(dir).map_err(|e| DataError::io(dir, e))?;
    let models = [&model.m_real, &model.m_synth, &model.m_combined];
    for (name, m) in MODEL_FILES.iter().zip(models) {
        let path = dir.join(name);
        std::fs::write(&path, m.serialize()).map_err(|e| DataError::io(&path, e))?;
    }
    let mut cfg = String::new();
    let _ = writeln!(cfg, "m_real = {}", MODEL_FILES[0]);
    let _ = writeln!(cfg, "m_synth = {}", MODEL_FILES[1]);
    let _ = writeln!(cfg, "m_combined = {}", MODEL_FILES[2]);
    let _ = writeln!(cfg, "w = {:?},{:?},{:?}", model.w[0], model.w[1], model.w[2]);
    let _ = writeln!(cfg, "metric = {}", model.metric);
    let _ = writeln!(cfg, "real_sha256 = {real_fingerprint}");
    let _ = writeln!(cfg, "synth_sha256 = {synth_fingerprint}");
    let path = dir.join("ensemble.cfg");
    std::fs::write(&path, cfg).map_err(|e| DataError::io(&path, e))?;
    Ok(())
}

pub fn load_ensemble(dir: &Path) -> Result<EnsembleModel, EnsembleError> {
    let path = dir.join("ensemble.cfg");
    let text = std::fs::read_to_string(&path).map_err(|e| DataError::io(&path, e))?;
    let mut kv = std::collections::BTreeMap::new();
    for line in text.lines().filter(|l| !l.trim().is_empty()) {
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| EnsembleError::Manifest(format!("bad line {line:?}")))?;
        kv.insert(k.trim().to_string(), v.trim().to_string());
    }
    let get = |k: &str| kv.get(k).ok_or_else(|| EnsembleError::Manifest(format!("missing {k}")));
    let load = |k: &str| -> Result<GbdtModel, EnsembleError> {
        let p = dir.join(get(k)?);
        let text = std::fs::read_to_string(&p).map_err(|e| DataError::io(&p, e))?;
        Ok(GbdtModel::deserialize(&text)?)
    };
    let w: Vec<f64> = get("w")?
        .split(',')
        .map(|v| v.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|e| EnsembleError::Manifest(format!("weights: {e}")))?;
    let w: [f64; 3] = w
        .try_into()
        .map_err(|_| EnsembleError::Manifest("expected three weights".into()))?;
    if w.iter().any(|x| !(0.0..=1.0).contains(x)) || (w.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(EnsembleError::Manifest("weights are not on the simplex".into()));
    }
    Ok(EnsembleModel {
        m_real: load("m_real")?,
        m_synth: load("m_synth")?,
        m_combined: load("m_combined")?,
        w,
        metric: get("metric")?.parse().map_err(EnsembleError::Manifest)?,
    })
}
