//! Gradient-boosted regression trees under squared loss.
//!
//! Splits are exact: every boundary between consecutive distinct values of
//! every feature is scored by variance reduction. Rows are put in a canonical
//! order before fitting, so the model does not depend on input row order.

use std::cmp::Ordering;
use std::fmt::Write as _;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::dataset::LinkSample;
use crate::features::FEATURE_NAMES;

pub const MODEL_HEADER: &str = "MODEL v1";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LearnerError {
    #[error("need at least {need} samples, got {got}")]
    TooFewSamples { need: usize, got: usize },
    #[error("row {row}, feature {feature}: value is not finite")]
    NonFiniteFeature { row: usize, feature: usize },
    #[error("row {0}: target is not finite")]
    NonFiniteTarget(usize),
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("expected {expected} features, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("unsupported model version {0:?}")]
    VersionMismatch(String),
    #[error("corrupt model: {0}")]
    CorruptModel(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub n_trees: usize,
    pub max_depth: usize,
    pub learning_rate: f64,
    pub min_samples_leaf: usize,
    /// Fraction of rows drawn without replacement for each tree.
    pub subsample: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            n_trees: 300,
            max_depth: 6,
            learning_rate: 0.1,
            min_samples_leaf: 20,
            subsample: 1.0,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), LearnerError> {
        let bad = |m: &str| Err(LearnerError::InvalidConfig(m.to_string()));
        if self.max_depth == 0 || self.min_samples_leaf == 0 {
            return bad("max_depth and min_samples_leaf must be positive");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return bad("learning_rate must lie in (0, 1]");
        }
        if !(self.subsample > 0.0 && self.subsample <= 1.0) {
            return bad("subsample must lie in (0, 1]");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Node {
    /// `x[feature] <= threshold` goes to `left`.
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf { value: f64 },
}

/// Nodes in preorder; node 0 is the root.
#[derive(Debug, Clone, PartialEq)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn leaf(value: f64) -> Self {
        Self {
            nodes: vec![Node::Leaf { value }],
        }
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Leaf { value } => return value,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if x[feature] <= threshold { left } else { right },
            }
        }
    }

    pub fn leaves(&self) -> impl Iterator<Item = f64> + '_ {
        self.nodes.iter().filter_map(|n| match n {
            Node::Leaf { value } => Some(*value),
            Node::Split { .. } => None,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GbdtModel {
    pub base_prediction: f64,
    pub trees: Vec<Tree>,
    pub feature_names: Vec<String>,
    pub config: TrainConfig,
}

/// Column-major training data in canonical row order.
struct Columns {
    cols: Vec<Vec<f64>>,
    y: Vec<f64>,
}

fn canonical(rows: &[&[f64]], y: &[f64]) -> Columns {
    let mut order: Vec<usize> = (0..rows.len()).collect();
    order.sort_by(|&a, &b| {
        rows[a]
            .iter()
            .zip(rows[b].iter())
            .map(|(p, q)| p.total_cmp(q))
            .find(|o| *o != Ordering::Equal)
            .unwrap_or(Ordering::Equal)
            .then(y[a].total_cmp(&y[b]))
    });
    let d = rows.first().map_or(0, |r| r.len());
    Columns {
        cols: (0..d).map(|j| order.iter().map(|&i| rows[i][j]).collect()).collect(),
        y: order.iter().map(|&i| y[i]).collect(),
    }
}

#[derive(Debug, Clone, Copy)]
struct Candidate {
    gain: f64,
    feature: usize,
    threshold: f64,
}

struct Builder<'a> {
    data: &'a Columns,
    residual: &'a [f64],
    config: &'a TrainConfig,
    nodes: Vec<Node>,
}

impl Builder<'_> {
    /// Best split of `sorted[j]` (member rows sorted by feature j).
    fn best_split(&self, sorted: &[Vec<usize>]) -> Option<Candidate> {
        let n = sorted[0].len();
        let m = self.config.min_samples_leaf;
        if n < 2 * m {
            return None;
        }
        let total: f64 = sorted[0].iter().map(|&i| self.residual[i]).sum();
        let parent = total * total / n as f64;
        let per_feature: Vec<Option<Candidate>> = sorted
            .par_iter()
            .enumerate()
            .map(|(j, idx)| {
                let col = &self.data.cols[j];
                let mut left = 0.0;
                let mut best: Option<Candidate> = None;
                for k in 0..n - 1 {
                    left += self.residual[idx[k]];
                    let (a, b) = (col[idx[k]], col[idx[k + 1]]);
                    let nl = k + 1;
                    if a == b || nl < m || n - nl < m {
                        continue;
                    }
                    let right = total - left;
                    let gain = left * left / nl as f64 + right * right / (n - nl) as f64 - parent;
                    if best.is_none_or(|c| gain > c.gain) {
                        let mid = a + (b - a) / 2.0;
                        let threshold = if mid < b { mid } else { a };
                        best = Some(Candidate {
                            gain,
                            feature: j,
                            threshold,
                        });
                    }
                }
                best
            })
            .collect();
        // first feature wins ties; within a feature the lowest threshold does
        let best = per_feature
            .into_iter()
            .flatten()
            .fold(None, |acc: Option<Candidate>, c| match acc {
                Some(a) if a.gain >= c.gain => Some(a),
                _ => Some(c),
            })?;
        let scale = self.residual.iter().map(|r| r * r).sum::<f64>().max(f64::MIN_POSITIVE);
        (best.gain > 1e-12 * scale).then_some(best)
    }

    fn grow(&mut self, sorted: Vec<Vec<usize>>, depth: usize) -> usize {
        let id = self.nodes.len();
        let members = &sorted[0];
        let mean = members.iter().map(|&i| self.residual[i]).sum::<f64>() / members.len() as f64;
        self.nodes.push(Node::Leaf { value: mean });
        if depth >= self.config.max_depth {
            return id;
        }
        let Some(split) = self.best_split(&sorted) else {
            return id;
        };
        let col = &self.data.cols[split.feature];
        let (mut left, mut right) = (Vec::with_capacity(sorted.len()), Vec::with_capacity(sorted.len()));
        for idx in sorted {
            let (l, r): (Vec<usize>, Vec<usize>) = idx.into_iter().partition(|&i| col[i] <= split.threshold);
            left.push(l);
            right.push(r);
        }
        let l = self.grow(left, depth + 1);
        let r = self.grow(right, depth + 1);
        self.nodes[id] = Node::Split {
            feature: split.feature,
            threshold: split.threshold,
            left: l,
            right: r,
        };
        id
    }
}

fn check_inputs(rows: &[&[f64]], y: &[f64], config: &TrainConfig) -> Result<usize, LearnerError> {
    config.validate()?;
    if rows.len() != y.len() {
        return Err(LearnerError::DimensionMismatch {
            expected: rows.len(),
            got: y.len(),
        });
    }
    let need = 2 * config.min_samples_leaf;
    if rows.len() < need {
        return Err(LearnerError::TooFewSamples { need, got: rows.len() });
    }
    let d = rows[0].len();
    for (row, r) in rows.iter().enumerate() {
        if r.len() != d {
            return Err(LearnerError::DimensionMismatch { expected: d, got: r.len() });
        }
        if let Some(feature) = r.iter().position(|v| !v.is_finite()) {
            return Err(LearnerError::NonFiniteFeature { row, feature });
        }
    }
    if let Some(i) = y.iter().position(|v| !v.is_finite()) {
        return Err(LearnerError::NonFiniteTarget(i));
    }
    Ok(d)
}

fn mse(f: &[f64], y: &[f64]) -> f64 {
    f.iter().zip(y).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / y.len() as f64
}

/// Fits the model and returns the training MSE after each tree (index 0 is
/// the constant base prediction).
pub fn fit_with_history(
    rows: &[&[f64]],
    y: &[f64],
    feature_names: Vec<String>,
    config: &TrainConfig,
) -> Result<(GbdtModel, Vec<f64>), LearnerError> {
    let d = check_inputs(rows, y, config)?;
    if feature_names.len() != d {
        return Err(LearnerError::DimensionMismatch {
            expected: d,
            got: feature_names.len(),
        });
    }
    let data = canonical(rows, y);
    let n = data.y.len();
    let base = data.y.iter().sum::<f64>() / n as f64;
    let mut f = vec![base; n];
    let mut history = vec![mse(&f, &data.y)];
    let presorted: Vec<Vec<usize>> = data
        .cols
        .iter()
        .map(|col| {
            let mut idx: Vec<usize> = (0..n).collect();
            idx.sort_by(|&a, &b| col[a].total_cmp(&col[b]).then(a.cmp(&b)));
            idx
        })
        .collect();
    let mut trees = Vec::with_capacity(config.n_trees);
    let n_sub = ((config.subsample * n as f64).round() as usize).clamp(1, n);
    for t in 0..config.n_trees {
        let residual: Vec<f64> = data.y.iter().zip(&f).map(|(y, f)| y - f).collect();
        let sorted = if n_sub == n {
            presorted.clone()
        } else {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(t as u64));
            let mut keep = vec![false; n];
            for i in sample(&mut rng, n, n_sub) {
                keep[i] = true;
            }
            presorted
                .iter()
                .map(|idx| idx.iter().copied().filter(|&i| keep[i]).collect())
                .collect()
        };
        let mut builder = Builder {
            data: &data,
            residual: &residual,
            config,
            nodes: Vec::new(),
        };
        builder.grow(sorted, 0);
        let tree = Tree { nodes: builder.nodes };
        let mut row = vec![0.0; d];
        for (i, fi) in f.iter_mut().enumerate() {
            for (j, c) in data.cols.iter().enumerate() {
                row[j] = c[i];
            }
            *fi += config.learning_rate * tree.predict(&row);
        }
        history.push(mse(&f, &data.y));
        trees.push(tree);
    }
    Ok((
        GbdtModel {
            base_prediction: base,
            trees,
            feature_names,
            config: config.clone(),
        },
        history,
    ))
}

pub fn fit(
    rows: &[&[f64]],
    y: &[f64],
    feature_names: Vec<String>,
    config: &TrainConfig,
) -> Result<GbdtModel, LearnerError> {
    fit_with_history(rows, y, feature_names, config).map(|(m, _)| m)
}

/// Fits on the feature vectors and ΔRSRP targets of `samples`.
pub fn fit_samples(samples: &[LinkSample], config: &TrainConfig) -> Result<GbdtModel, LearnerError> {
    let rows: Vec<[f64; FEATURE_NAMES.len()]> = samples.iter().map(|s| s.features.to_array()).collect();
    let refs: Vec<&[f64]> = rows.iter().map(|r| r.as_slice()).collect();
    let y: Vec<f64> = samples.iter().map(|s| s.target).collect();
    fit(&refs, &y, FEATURE_NAMES.iter().map(|s| s.to_string()).collect(), config)
}

impl GbdtModel {
    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    pub fn predict(&self, x: &[f64]) -> Result<f64, LearnerError> {
        if x.len() != self.n_features() {
            return Err(LearnerError::DimensionMismatch {
                expected: self.n_features(),
                got: x.len(),
            });
        }
        Ok(self.predict_unchecked(x))
    }

    fn predict_unchecked(&self, x: &[f64]) -> f64 {
        let lr = self.config.learning_rate;
        self.trees.iter().fold(self.base_prediction, |acc, t| acc + lr * t.predict(x))
    }

    pub fn predict_samples(&self, samples: &[LinkSample]) -> Result<Vec<f64>, LearnerError> {
        samples.iter().map(|s| self.predict(&s.features.to_array())).collect()
    }

    /// Versioned text form; floats use shortest round-trip notation.
    pub fn serialize(&self) -> String {
        let c = &self.config;
        let mut s = String::new();
        let _ = writeln!(s, "{MODEL_HEADER}");
        let _ = writeln!(s, "n_trees {}", c.n_trees);
        let _ = writeln!(s, "max_depth {}", c.max_depth);
        let _ = writeln!(s, "learning_rate {:?}", c.learning_rate);
        let _ = writeln!(s, "min_samples_leaf {}", c.min_samples_leaf);
        let _ = writeln!(s, "subsample {:?}", c.subsample);
        let _ = writeln!(s, "seed {}", c.seed);
        let _ = writeln!(s, "base_prediction {:?}", self.base_prediction);
        let _ = writeln!(s, "features {}", self.feature_names.join(","));
        let _ = writeln!(s, "trees {}", self.trees.len());
        for (t, tree) in self.trees.iter().enumerate() {
            let _ = writeln!(s, "tree {t} {}", tree.nodes.len());
            for (i, node) in tree.nodes.iter().enumerate() {
                let _ = match node {
                    Node::Split {
                        feature,
                        threshold,
                        left,
                        right,
                    } => writeln!(s, "{i} split {feature} {threshold:?} {left} {right}"),
                    Node::Leaf { value } => writeln!(s, "{i} leaf {value:?}"),
                };
            }
        }
        s.push_str("end\n");
        s
    }

    pub fn deserialize(text: &str) -> Result<Self, LearnerError> {
        let mut lines = text.lines();
        let header = lines.next().unwrap_or("");
        if header != MODEL_HEADER {
            return match header.strip_prefix("MODEL ") {
                Some(v) => Err(LearnerError::VersionMismatch(v.to_string())),
                None => Err(corrupt("missing header")),
            };
        }
        let config = TrainConfig {
            n_trees: parse(&field(&mut lines, "n_trees")?)?,
            max_depth: parse(&field(&mut lines, "max_depth")?)?,
            learning_rate: parse(&field(&mut lines, "learning_rate")?)?,
            min_samples_leaf: parse(&field(&mut lines, "min_samples_leaf")?)?,
            subsample: parse(&field(&mut lines, "subsample")?)?,
            seed: parse(&field(&mut lines, "seed")?)?,
        };
        let base_prediction: f64 = parse(&field(&mut lines, "base_prediction")?)?;
        let feature_names: Vec<String> = field(&mut lines, "features")?.split(',').map(str::to_string).collect();
        let n_trees: usize = parse(&field(&mut lines, "trees")?)?;
        let d = feature_names.len();
        let mut trees = Vec::with_capacity(n_trees);
        for t in 0..n_trees {
            let head = field(&mut lines, "tree")?;
            let mut parts = head.split(' ');
            if parts.next() != Some(&t.to_string()) {
                return Err(corrupt(&format!("tree {t} out of order")));
            }
            let n_nodes: usize = parse(parts.next().unwrap_or(""))?;
            if n_nodes == 0 {
                return Err(corrupt("empty tree"));
            }
            let mut nodes = Vec::with_capacity(n_nodes);
            for i in 0..n_nodes {
                let line = lines.next().ok_or_else(|| corrupt("truncated tree"))?;
                let p: Vec<&str> = line.split(' ').collect();
                if p.first() != Some(&i.to_string().as_str()) {
                    return Err(corrupt(&format!("bad node line {line:?}")));
                }
                let node = match (p.get(1).copied(), p.len()) {
                    (Some("leaf"), 3) => Node::Leaf { value: parse(p[2])? },
                    (Some("split"), 6) => Node::Split {
                        feature: parse(p[2])?,
                        threshold: parse(p[3])?,
                        left: parse(p[4])?,
                        right: parse(p[5])?,
                    },
                    _ => return Err(corrupt(&format!("bad node line {line:?}"))),
                };
                match node {
                    Node::Leaf { value } if !value.is_finite() => return Err(corrupt("non-finite leaf")),
                    Node::Split {
                        feature,
                        threshold,
                        left,
                        right,
                    } if feature >= d
                        || !threshold.is_finite()
                        || left <= i
                        || right <= i
                        || left >= n_nodes
                        || right >= n_nodes =>
                    {
                        return Err(corrupt(&format!("invalid split at node {i}")))
                    }
                    _ => {}
                }
                nodes.push(node);
            }
            trees.push(Tree { nodes });
        }
        if lines.next() != Some("end") {
            return Err(corrupt("missing end marker"));
        }
        Ok(Self {
            base_prediction,
            trees,
            feature_names,
            config,
        })
    }
}

fn field<'a>(lines: &mut impl Iterator<Item = &'a str>, key: &str) -> Result<String, LearnerError> {
    let line = lines.next().ok_or_else(|| corrupt(&format!("missing {key}")))?;
    line.strip_prefix(key)
        .and_then(|r| r.strip_prefix(' '))
        .map(str::to_string)
        .ok_or_else(|| corrupt(&format!("expected {key}, found {line:?}")))
}

fn corrupt(m: &str) -> LearnerError {
    LearnerError::CorruptModel(m.to_string())
}

fn parse<T: std::str::FromStr>(s: &str) -> Result<T, LearnerError> {
    s.trim().parse().map_err(|_| corrupt(&format!("cannot parse {s:?}")))
}
