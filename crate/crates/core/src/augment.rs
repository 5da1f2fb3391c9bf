//! SMOTE adapted to regression: new samples on segments between a measured
//! sample and one of its nearest neighbors of the same environment and LoS
//! class, with the target interpolated by the same weight.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::dataset::{LinkSample, SourceTag};
use crate::features::{FeatureVector, FREQ_INDEX, IS_LOS_INDEX, N_FEATURES};

pub const DEFAULT_K_NEIGHBORS: usize = 5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AugmentError {
    #[error("need at least {need} samples, got {got}")]
    TooFewSamples { need: usize, got: usize },
    #[error("k_neighbors must be at least 1")]
    InvalidK,
    #[error("no group has more than {k} samples")]
    NoEligibleGroup { k: usize },
}

/// Per-feature mean and standard deviation. `is_los` passes through
/// unscaled and is ignored by [`Scaler::distance`].
#[derive(Debug, Clone, PartialEq)]
pub struct Scaler {
    pub mean: [f64; N_FEATURES],
    pub std: [f64; N_FEATURES],
}

impl Scaler {
    pub fn transform(&self, x: &[f64; N_FEATURES]) -> [f64; N_FEATURES] {
        std::array::from_fn(|j| (x[j] - self.mean[j]) / self.std[j])
    }

    pub fn inverse(&self, z: &[f64; N_FEATURES]) -> [f64; N_FEATURES] {
        std::array::from_fn(|j| z[j] * self.std[j] + self.mean[j])
    }

    /// Squared Euclidean distance over the continuous standardized features.
    pub fn distance(a: &[f64; N_FEATURES], b: &[f64; N_FEATURES]) -> f64 {
        (0..N_FEATURES)
            .filter(|&j| j != IS_LOS_INDEX)
            .map(|j| (a[j] - b[j]).powi(2))
            .sum()
    }
}

/// Z-scores with the population standard deviation, so two samples map to
/// exactly ±1. Zero-variance columns get std 1.
pub fn standardize(rows: &[[f64; N_FEATURES]]) -> Result<(Vec<[f64; N_FEATURES]>, Scaler), AugmentError> {
    let n = rows.len();
    if n < 2 {
        return Err(AugmentError::TooFewSamples { need: 2, got: n });
    }
    let mut mean = [0.0; N_FEATURES];
    let mut std = [1.0; N_FEATURES];
    for j in (0..N_FEATURES).filter(|&j| j != IS_LOS_INDEX) {
        let m = rows.iter().map(|r| r[j]).sum::<f64>() / n as f64;
        let var = rows.iter().map(|r| (r[j] - m).powi(2)).sum::<f64>() / n as f64;
        mean[j] = m;
        std[j] = if var > 0.0 { var.sqrt() } else { 1.0 };
    }
    let scaler = Scaler { mean, std };
    Ok((rows.iter().map(|r| scaler.transform(r)).collect(), scaler))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SmoteAmount {
    Count(usize),
    /// Multiple of the number of input samples, rounded.
    Multiplier(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SmoteConfig {
    pub k_neighbors: usize,
    pub amount: SmoteAmount,
    pub seed: u64,
}

impl Default for SmoteConfig {
    fn default() -> Self {
        Self {
            k_neighbors: DEFAULT_K_NEIGHBORS,
            amount: SmoteAmount::Multiplier(1.0),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SmoteOutput {
    pub samples: Vec<LinkSample>,
    /// `(env, is_los, size)` of groups too small for `k` neighbors.
    pub skipped_groups: Vec<(String, bool, usize)>,
}

/// `(1-λ)a + λb`, clamped to the segment so rounding never leaves it.
pub fn lerp(a: f64, b: f64, lambda: f64) -> f64 {
    if a == b {
        return a;
    }
    ((1.0 - lambda) * a + lambda * b).clamp(a.min(b), a.max(b))
}

/// Interpolated sample between `base` and `neighbor`. Carrier frequency and
/// LoS flag come from `base`.
pub fn interpolate(base: &LinkSample, neighbor: &LinkSample, lambda: f64, id: String) -> LinkSample {
    let a = base.features.to_array();
    let b = neighbor.features.to_array();
    let mut x: [f64; N_FEATURES] = std::array::from_fn(|j| lerp(a[j], b[j], lambda));
    x[FREQ_INDEX] = a[FREQ_INDEX];
    x[IS_LOS_INDEX] = a[IS_LOS_INDEX];
    LinkSample {
        id,
        bs_id: base.bs_id.clone(),
        env: base.env.clone(),
        lat: lerp(base.lat, neighbor.lat, lambda),
        lon: lerp(base.lon, neighbor.lon, lambda),
        source: SourceTag::Smote,
        features: FeatureVector::from_array(x),
        target: lerp(base.target, neighbor.target, lambda),
        parents: vec![base.id.clone(), neighbor.id.clone()],
    }
}

/// Indices of the `k` nearest rows to `i` among `members` (ties by index).
fn nearest(z: &[[f64; N_FEATURES]], members: &[usize], i: usize, k: usize) -> Vec<usize> {
    let mut d: Vec<(f64, usize)> = members
        .iter()
        .filter(|&&m| m != i)
        .map(|&m| (Scaler::distance(&z[i], &z[m]), m))
        .collect();
    d.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    d.truncate(k);
    d.into_iter().map(|(_, m)| m).collect()
}

pub fn smote_regression(samples: &[LinkSample], config: &SmoteConfig) -> Result<SmoteOutput, AugmentError> {
    let k = config.k_neighbors;
    if k == 0 {
        return Err(AugmentError::InvalidK);
    }
    let rows: Vec<[f64; N_FEATURES]> = samples.iter().map(|s| s.features.to_array()).collect();
    let (z, _) = standardize(&rows)?;

    let mut groups: BTreeMap<(&str, bool), Vec<usize>> = BTreeMap::new();
    for (i, s) in samples.iter().enumerate() {
        groups.entry((s.env.as_str(), s.features.is_los())).or_default().push(i);
    }
    let mut skipped_groups = Vec::new();
    let mut eligible = Vec::new();
    let mut neighbors: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for ((env, los), members) in &groups {
        if members.len() <= k {
            log::warn!("smote: group ({env}, los={los}) has {} samples, needs > {k}", members.len());
            skipped_groups.push((env.to_string(), *los, members.len()));
            continue;
        }
        for &i in members {
            neighbors.insert(i, nearest(&z, members, i, k));
            eligible.push(i);
        }
    }
    if eligible.is_empty() {
        return Err(AugmentError::NoEligibleGroup { k });
    }
    eligible.sort_unstable();

    let n_out = match config.amount {
        SmoteAmount::Count(n) => n,
        SmoteAmount::Multiplier(m) => (m * samples.len() as f64).round().max(0.0) as usize,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let out = (0..n_out)
        .map(|j| {
            let base = eligible[rng.random_range(0..eligible.len())];
            let nb = &neighbors[&base];
            let neighbor = nb[rng.random_range(0..nb.len())];
            let lambda: f64 = rng.random();
            let b = &samples[base];
            interpolate(b, &samples[neighbor], lambda, format!("{}/smote/{j}", b.env))
        })
        .collect();
    Ok(SmoteOutput {
        samples: out,
        skipped_groups,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::{prop_assert, proptest, ProptestConfig};

    fn sample(id: usize, env: &str, los: bool, rng: &mut ChaCha8Rng) -> LinkSample {
        let mut x: [f64; N_FEATURES] = std::array::from_fn(|_| rng.random_range(-50.0..50.0));
        x[FREQ_INDEX] = if rng.random_bool(0.5) { 739e6 } else { 2120e6 };
        x[IS_LOS_INDEX] = f64::from(u8::from(los));
        LinkSample {
            id: format!("{env}/m{id}"),
            bs_id: "bs".into(),
            env: env.into(),
            lat: rng.random_range(40.0..40.01),
            lon: rng.random_range(-86.01..-86.0),
            source: SourceTag::Real,
            features: FeatureVector::from_array(x),
            target: rng.random_range(-30.0..10.0),
            parents: vec![],
        }
    }

    fn population(seed: u64) -> Vec<LinkSample> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut v = Vec::new();
        for i in 0..40 {
            v.push(sample(i, "a", i % 3 != 0, &mut rng));
        }
        for i in 0..25 {
            v.push(sample(100 + i, "b", i % 2 == 0, &mut rng));
        }
        v.push(sample(999, "c", true, &mut rng));
        v
    }

    #[test]
    fn constant_column_standardizes_to_zero() {
        let rows = vec![[3.0; N_FEATURES], [3.0; N_FEATURES], [3.0; N_FEATURES]];
        let (z, s) = standardize(&rows).unwrap();
        assert!(z.iter().flatten().enumerate().all(|(k, v)| k % N_FEATURES == IS_LOS_INDEX || *v == 0.0));
        assert_eq!(s.std[4], 1.0);
    }

    #[test]
    fn two_samples_map_to_plus_minus_one() {
        let a = [0.0; N_FEATURES];
        let b: [f64; N_FEATURES] = std::array::from_fn(|j| j as f64 + 1.0);
        let (z, _) = standardize(&[a, b]).unwrap();
        for j in (0..N_FEATURES).filter(|&j| j != IS_LOS_INDEX) {
            assert_eq!(z[0][j], -1.0);
            assert_eq!(z[1][j], 1.0);
        }
        assert!(standardize(&[a]).is_err());
    }

    #[test]
    fn standardize_round_trips() {
        let rows: Vec<_> = population(1).iter().map(|s| s.features.to_array()).collect();
        let (z, s) = standardize(&rows).unwrap();
        for (r, zr) in rows.iter().zip(&z) {
            let back = s.inverse(zr);
            for j in 0..N_FEATURES {
                assert!((back[j] - r[j]).abs() <= 1e-9 * r[j].abs().max(1.0));
            }
        }
    }

    #[test]
    fn lambda_endpoints_copy_parents() {
        let pop = population(2);
        let (a, b) = (&pop[0], &pop[3]);
        let at0 = interpolate(a, b, 0.0, "x".into());
        assert_eq!(at0.features, a.features);
        assert_eq!(at0.target, a.target);
        let at1 = interpolate(a, b, 1.0, "y".into());
        let mut expect = b.features.to_array();
        expect[FREQ_INDEX] = a.features.freq_hz;
        expect[IS_LOS_INDEX] = a.features.is_los;
        assert_eq!(at1.features.to_array(), expect);
        assert_eq!(at1.target, b.target);
    }

    #[test]
    fn every_output_lies_on_its_parent_segment() {
        let pop = population(3);
        let by_id: BTreeMap<_, _> = pop.iter().map(|s| (s.id.clone(), s)).collect();
        let out = smote_regression(
            &pop,
            &SmoteConfig {
                amount: SmoteAmount::Count(500),
                seed: 9,
                ..SmoteConfig::default()
            },
        )
        .unwrap();
        assert_eq!(out.samples.len(), 500);
        assert_eq!(out.skipped_groups, vec![("c".to_string(), true, 1)]);
        for s in &out.samples {
            assert_eq!(s.source, SourceTag::Smote);
            let (a, b) = (by_id[&s.parents[0]], by_id[&s.parents[1]]);
            assert_ne!(a.id, b.id);
            assert_eq!(a.env, b.env);
            assert_eq!(a.features.is_los, b.features.is_los);
            assert_eq!(s.features.is_los, a.features.is_los);
            assert_eq!(s.features.freq_hz, a.features.freq_hz);
            let (x, xa, xb) = (s.features.to_array(), a.features.to_array(), b.features.to_array());
            for j in 0..N_FEATURES {
                assert!(x[j] >= xa[j].min(xb[j]) && x[j] <= xa[j].max(xb[j]), "feature {j}");
            }
            assert!(s.target >= a.target.min(b.target) && s.target <= a.target.max(b.target));
            // one shared weight for every non-degenerate coordinate and the target
            let lambda = (s.target - a.target) / (b.target - a.target);
            for j in (0..N_FEATURES).filter(|&j| j != FREQ_INDEX && j != IS_LOS_INDEX) {
                if (xb[j] - xa[j]).abs() > 1.0 {
                    assert!(((x[j] - xa[j]) / (xb[j] - xa[j]) - lambda).abs() < 1e-6);
                }
            }
        }
    }

    #[test]
    fn neighbors_are_among_the_k_nearest() {
        let pop = population(4);
        let rows: Vec<_> = pop.iter().map(|s| s.features.to_array()).collect();
        let (z, _) = standardize(&rows).unwrap();
        let out = smote_regression(&pop, &SmoteConfig { seed: 1, ..SmoteConfig::default() }).unwrap();
        let idx: BTreeMap<_, _> = pop.iter().enumerate().map(|(i, s)| (s.id.clone(), i)).collect();
        for s in &out.samples {
            let (i, n) = (idx[&s.parents[0]], idx[&s.parents[1]]);
            let dn = Scaler::distance(&z[i], &z[n]);
            let closer = pop
                .iter()
                .enumerate()
                .filter(|(m, o)| {
                    *m != i && o.env == pop[i].env && o.features.is_los == pop[i].features.is_los
                })
                .filter(|(m, _)| Scaler::distance(&z[i], &z[*m]) < dn)
                .count();
            assert!(closer < DEFAULT_K_NEIGHBORS);
        }
    }

    #[test]
    fn seed_determinism_and_errors() {
        let pop = population(5);
        let c = SmoteConfig { seed: 3, ..SmoteConfig::default() };
        assert_eq!(smote_regression(&pop, &c).unwrap(), smote_regression(&pop, &c).unwrap());
        let other = smote_regression(&pop, &SmoteConfig { seed: 4, ..c.clone() }).unwrap();
        assert_ne!(other, smote_regression(&pop, &c).unwrap());
        assert_eq!(
            smote_regression(&pop, &SmoteConfig { k_neighbors: 0, ..c.clone() }),
            Err(AugmentError::InvalidK)
        );
        assert_eq!(
            smote_regression(&pop, &SmoteConfig { k_neighbors: 100, ..c }),
            Err(AugmentError::NoEligibleGroup { k: 100 })
        );
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]
        #[test]
        fn lerp_stays_on_segment(a in -1e6f64..1e6, b in -1e6f64..1e6, l in 0.0f64..=1.0) {
            let v = lerp(a, b, l);
            prop_assert!(v >= a.min(b) && v <= a.max(b));
        }
    }
}
