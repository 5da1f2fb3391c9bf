//! ΔRSRP normalization: LoS reference candidates, effective downtilt,
//! per-site baselines and the relative targets.
//!
//! Baselines are stored relative to an anchor (the first subset member), and
//! every Δ is formed as `(value - anchor) - mean(subset - anchor)`. A uniform
//! offset applied to a site's values then drops out of every term before any
//! averaging happens, so Δ is bit-identical whenever the offset addition
//! itself is exact.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::dataset::MeasurementRecord;
use crate::empirical::{EmpiricalModelId, EnvironmentClass, ModelParams};
use crate::features::{BaseStation, FeatureConfig, LinkGeometry};

pub const DEFAULT_RSRP_THRESHOLD_DBM: f64 = -80.0;
pub const DEFAULT_N_MIN: usize = 10;
pub const MAX_TILT_DEG: u32 = 15;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ReferenceError {
    #[error("site {bs_id}: no tilt has at least {n_min} reference points (best: {best})")]
    InsufficientReferencePoints { bs_id: String, n_min: usize, best: usize },
    #[error("record served by {record} cannot use the baseline of {baseline}")]
    BaselineMismatch { record: String, baseline: String },
    #[error("baseline has no reference for {0}")]
    UnknownModelBaseline(String),
    #[error("site {0} has no measured RSRP reference")]
    MissingRsrpReference(String),
    #[error("vertical beamwidth must be positive, got {0}")]
    InvalidBeamwidth(f64),
}

/// A path loss predictor whose per-site reference can be stored.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum PathLossSource {
    /// Closed-form model on its own.
    Empirical(EmpiricalModelId),
    /// Closed-form model plus Deygout diffraction over the lidar profile.
    Terrain(EmpiricalModelId),
}

impl PathLossSource {
    pub fn consensus() -> Vec<PathLossSource> {
        EmpiricalModelId::CONSENSUS.iter().map(|&m| PathLossSource::Empirical(m)).collect()
    }

    /// Path loss of this source for a computed link.
    pub fn path_loss(self, link: &LinkGeometry, bs: &BaseStation, config: &ReferenceConfig) -> f64 {
        let budget = link.budget(bs.tower_height_agl, config.features.rx_h_agl, config.environment);
        match self {
            PathLossSource::Empirical(m) => config.params.path_loss(m, &budget).loss_db,
            PathLossSource::Terrain(m) => {
                config.params.path_loss(m, &budget).loss_db + link.features.diffraction_loss_db
            }
        }
    }
}

impl fmt::Display for PathLossSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PathLossSource::Empirical(m) => write!(f, "{m}"),
            PathLossSource::Terrain(m) => write!(f, "{m}+TERRAIN"),
        }
    }
}

impl FromStr for PathLossSource {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        let upper = s.to_ascii_uppercase();
        let (model, terrain) = match upper.strip_suffix("+TERRAIN") {
            Some(m) => (m, true),
            None => (upper.as_str(), false),
        };
        let id: EmpiricalModelId = model.parse().map_err(|e: crate::empirical::ModelError| e.to_string())?;
        Ok(if terrain {
            PathLossSource::Terrain(id)
        } else {
            PathLossSource::Empirical(id)
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceConfig {
    pub threshold_dbm: f64,
    pub n_min: usize,
    /// Overrides the per-station beamwidth when set.
    pub vbw_deg: Option<f64>,
    pub tilts_deg: Vec<f64>,
    /// Models averaged in the downtilt objective.
    pub consensus: Vec<PathLossSource>,
    /// Sources that receive a stored baseline.
    pub baseline_sources: Vec<PathLossSource>,
    pub params: ModelParams,
    pub environment: EnvironmentClass,
    pub features: FeatureConfig,
}

impl Default for ReferenceConfig {
    fn default() -> Self {
        let consensus = PathLossSource::consensus();
        let mut baseline_sources = consensus.clone();
        baseline_sources.push(PathLossSource::Terrain(EmpiricalModelId::Fspl));
        Self {
            threshold_dbm: DEFAULT_RSRP_THRESHOLD_DBM,
            n_min: DEFAULT_N_MIN,
            vbw_deg: None,
            tilts_deg: (0..=MAX_TILT_DEG).map(f64::from).collect(),
            consensus,
            baseline_sources,
            params: ModelParams::default(),
            environment: EnvironmentClass::default(),
            features: FeatureConfig::default(),
        }
    }
}

/// A measurement with the link quantities the reference stage needs.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasuredLink {
    pub id: String,
    pub bs_id: String,
    pub rsrp_dbm: f64,
    /// Downward look angle from the BS antenna, degrees.
    pub elevation_deg: f64,
    pub is_los: bool,
    pub sector: Option<usize>,
    pub pl_db: BTreeMap<PathLossSource, f64>,
}

impl MeasuredLink {
    pub fn new(
        record: &MeasurementRecord,
        link: &LinkGeometry,
        bs: &BaseStation,
        sources: &[PathLossSource],
        config: &ReferenceConfig,
    ) -> Self {
        let pl_db = sources
            .iter()
            .map(|&s| (s, s.path_loss(link, bs, config)))
            .collect();
        Self {
            id: record.id.clone(),
            bs_id: record.bs_id.clone(),
            rsrp_dbm: record.rsrp_dbm,
            elevation_deg: link.elevation_deg,
            is_los: link.features.is_los(),
            sector: bs.serving_sector(link.bearing_deg),
            pl_db,
        }
    }
}

/// LoS links with RSRP at or above the threshold.
pub fn select_los_candidates(links: &[MeasuredLink], threshold_dbm: f64) -> Vec<MeasuredLink> {
    links
        .iter()
        .filter(|l| l.is_los && l.rsrp_dbm >= threshold_dbm)
        .cloned()
        .collect()
}

/// Candidates whose elevation angle lies in the closed window `theta ± vbw/2`.
pub fn mainlobe_subset<'a>(candidates: &'a [MeasuredLink], theta: f64, vbw: f64) -> Vec<&'a MeasuredLink> {
    let (lo, hi) = (theta - vbw / 2.0, theta + vbw / 2.0);
    candidates
        .iter()
        .filter(|c| (lo..=hi).contains(&c.elevation_deg))
        .collect()
}

/// Subset mean expressed relative to an anchor value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnchoredMean {
    pub anchor: f64,
    /// Mean of `value - anchor` over the subset.
    pub offset: f64,
}

impl AnchoredMean {
    /// Two-stage mean over `(sector, value)` pairs: per-sector means first,
    /// then their average. A single group reduces to the plain mean.
    pub fn of(items: &[(Option<usize>, f64)]) -> Option<Self> {
        let anchor = items.first()?.1;
        let mut groups: BTreeMap<Option<usize>, (f64, usize)> = BTreeMap::new();
        for &(sector, v) in items {
            let g = groups.entry(sector).or_insert((0.0, 0));
            g.0 += v - anchor;
            g.1 += 1;
        }
        let offset = if groups.len() == 1 {
            let (sum, n) = groups.values().next().copied().unwrap_or((0.0, 1));
            sum / n as f64
        } else {
            groups.values().map(|(s, n)| s / *n as f64).sum::<f64>() / groups.len() as f64
        };
        Some(Self { anchor, offset })
    }

    pub fn value(&self) -> f64 {
        self.anchor + self.offset
    }

    /// `v - mean`, evaluated through the anchor.
    pub fn deviation(&self, v: f64) -> f64 {
        (v - self.anchor) - self.offset
    }
}

/// Objective of one candidate tilt.
#[derive(Debug, Clone, PartialEq)]
pub struct TiltScore {
    pub theta_deg: f64,
    pub n_points: usize,
    /// MAE per consensus model; empty when the subset was too small.
    pub per_model_mae: Vec<f64>,
    /// Equal-weight mean of the per-model MAEs.
    pub mean_mae: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DowntiltEstimate {
    pub theta_est_deg: f64,
    pub scores: Vec<TiltScore>,
}

/// Argmin over the averaged MAE; ties go to the earlier (smaller) tilt.
pub fn select_tilt(scores: &[TiltScore]) -> Option<f64> {
    let mut best: Option<(f64, f64)> = None;
    for s in scores {
        if let Some(m) = s.mean_mae {
            if best.is_none_or(|(_, b)| m < b) {
                best = Some((s.theta_deg, m));
            }
        }
    }
    best.map(|(t, _)| t)
}

fn mae(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>() / a.len() as f64
}

/// Scores every tilt and picks the consensus effective downtilt.
pub fn estimate_downtilt(
    bs_id: &str,
    candidates: &[MeasuredLink],
    consensus: &[PathLossSource],
    vbw: f64,
    n_min: usize,
    tilts_deg: &[f64],
) -> Result<DowntiltEstimate, ReferenceError> {
    if !(vbw > 0.0) {
        return Err(ReferenceError::InvalidBeamwidth(vbw));
    }
    let mut scores = Vec::with_capacity(tilts_deg.len());
    let mut best_count = 0;
    for &theta in tilts_deg {
        let subset = mainlobe_subset(candidates, theta, vbw);
        best_count = best_count.max(subset.len());
        if subset.len() < n_min.max(1) {
            scores.push(TiltScore {
                theta_deg: theta,
                n_points: subset.len(),
                per_model_mae: Vec::new(),
                mean_mae: None,
            });
            continue;
        }
        let rsrp: Vec<(Option<usize>, f64)> = subset.iter().map(|c| (c.sector, c.rsrp_dbm)).collect();
        let rsrp_mean = AnchoredMean::of(&rsrp).expect("nonempty subset");
        let delta_real: Vec<f64> = rsrp.iter().map(|&(_, v)| rsrp_mean.deviation(v)).collect();
        let mut per_model = Vec::with_capacity(consensus.len());
        for source in consensus {
            let pl: Vec<(Option<usize>, f64)> = subset
                .iter()
                .map(|c| {
                    let v = c.pl_db.get(source).copied().ok_or_else(|| {
                        ReferenceError::UnknownModelBaseline(source.to_string())
                    })?;
                    Ok((c.sector, v))
                })
                .collect::<Result<_, ReferenceError>>()?;
            let pl_mean = AnchoredMean::of(&pl).expect("nonempty subset");
            let delta_model: Vec<f64> = pl.iter().map(|&(_, v)| -pl_mean.deviation(v)).collect();
            per_model.push(mae(&delta_model, &delta_real));
        }
        let mean = per_model.iter().sum::<f64>() / per_model.len() as f64;
        scores.push(TiltScore {
            theta_deg: theta,
            n_points: subset.len(),
            per_model_mae: per_model,
            mean_mae: Some(mean),
        });
    }
    let theta_est_deg = select_tilt(&scores).ok_or_else(|| ReferenceError::InsufficientReferencePoints {
        bs_id: bs_id.to_string(),
        n_min,
        best: best_count,
    })?;
    Ok(DowntiltEstimate { theta_est_deg, scores })
}

/// Per-site reference: estimated tilt, subset and anchored baselines.
#[derive(Debug, Clone, PartialEq)]
pub struct SiteBaseline {
    pub bs_id: String,
    pub theta_est_deg: f64,
    pub vbw_deg: f64,
    pub subset_ids: Vec<String>,
    pub n_ref: usize,
    /// Absent for purely simulated sites.
    pub rsrp_ref: Option<AnchoredMean>,
    pub pl_ref: BTreeMap<PathLossSource, AnchoredMean>,
    pub tilt_scores: Vec<TiltScore>,
}

impl SiteBaseline {
    pub fn rsrp_ref_dbm(&self) -> Option<f64> {
        self.rsrp_ref.map(|r| r.value())
    }

    pub fn pl_ref_db(&self, source: PathLossSource) -> Option<f64> {
        self.pl_ref.get(&source).map(AnchoredMean::value)
    }
}

/// Builds the baselines from a reference subset.
pub fn compute_baselines(
    bs_id: &str,
    subset: &[&MeasuredLink],
    sources: &[PathLossSource],
    n_min: usize,
    with_rsrp: bool,
) -> Result<SiteBaseline, ReferenceError> {
    if subset.len() < n_min.max(1) {
        return Err(ReferenceError::InsufficientReferencePoints {
            bs_id: bs_id.to_string(),
            n_min,
            best: subset.len(),
        });
    }
    let rsrp_ref = if with_rsrp {
        let items: Vec<_> = subset.iter().map(|c| (c.sector, c.rsrp_dbm)).collect();
        AnchoredMean::of(&items)
    } else {
        None
    };
    let mut pl_ref = BTreeMap::new();
    for &source in sources {
        let items = subset
            .iter()
            .map(|c| {
                c.pl_db
                    .get(&source)
                    .map(|&v| (c.sector, v))
                    .ok_or_else(|| ReferenceError::UnknownModelBaseline(source.to_string()))
            })
            .collect::<Result<Vec<_>, _>>()?;
        pl_ref.insert(source, AnchoredMean::of(&items).expect("nonempty subset"));
    }
    Ok(SiteBaseline {
        bs_id: bs_id.to_string(),
        theta_est_deg: f64::NAN,
        vbw_deg: f64::NAN,
        subset_ids: subset.iter().map(|c| c.id.clone()).collect(),
        n_ref: subset.len(),
        rsrp_ref,
        pl_ref,
        tilt_scores: Vec::new(),
    })
}

/// Full per-site pipeline: candidates, downtilt, reference subset, baselines.
pub fn build_site_baseline(
    bs: &BaseStation,
    links: &[MeasuredLink],
    config: &ReferenceConfig,
) -> Result<SiteBaseline, ReferenceError> {
    let vbw = config.vbw_deg.unwrap_or(bs.vbw_deg);
    let candidates = select_los_candidates(links, config.threshold_dbm);
    let tilt = estimate_downtilt(&bs.id, &candidates, &config.consensus, vbw, config.n_min, &config.tilts_deg)?;
    let subset = mainlobe_subset(&candidates, tilt.theta_est_deg, vbw);
    let mut baseline = compute_baselines(&bs.id, &subset, &config.baseline_sources, config.n_min, true)?;
    baseline.theta_est_deg = tilt.theta_est_deg;
    baseline.vbw_deg = vbw;
    baseline.tilt_scores = tilt.scores;
    Ok(baseline)
}

/// Measured ΔRSRP of one record against its site reference.
pub fn delta_rsrp_real(record: &MeasurementRecord, baseline: &SiteBaseline) -> Result<f64, ReferenceError> {
    if record.bs_id != baseline.bs_id {
        return Err(ReferenceError::BaselineMismatch {
            record: record.bs_id.clone(),
            baseline: baseline.bs_id.clone(),
        });
    }
    let r = baseline
        .rsrp_ref
        .ok_or_else(|| ReferenceError::MissingRsrpReference(baseline.bs_id.clone()))?;
    Ok(r.deviation(record.rsrp_dbm))
}

/// Model ΔRSRP `-PL + PL_ref`.
pub fn delta_rsrp_model(pl_db: f64, source: PathLossSource, baseline: &SiteBaseline) -> Result<f64, ReferenceError> {
    let r = baseline
        .pl_ref
        .get(&source)
        .ok_or_else(|| ReferenceError::UnknownModelBaseline(source.to_string()))?;
    Ok(-r.deviation(pl_db))
}

/// Writes one row per site with the tilt objective table flattened into
/// `mae_theta_<k>` columns (empty when the tilt was skipped).
pub fn write_baseline_report(
    baselines: &[SiteBaseline],
    writer: impl std::io::Write,
) -> Result<(), csv::Error> {
    let sources: Vec<PathLossSource> = baselines
        .iter()
        .flat_map(|b| b.pl_ref.keys().copied())
        .collect::<std::collections::BTreeSet<_>>()
        .into_iter()
        .collect();
    let tilts: Vec<f64> = baselines
        .first()
        .map(|b| b.tilt_scores.iter().map(|s| s.theta_deg).collect())
        .unwrap_or_default();
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec![
        "bs_id".to_string(),
        "theta_est_deg".into(),
        "vbw_deg".into(),
        "n_ref".into(),
        "rsrp_ref_dbm".into(),
    ];
    header.extend(sources.iter().map(|s| format!("pl_ref_{s}")));
    header.extend(tilts.iter().map(|t| format!("mae_theta_{t}")));
    w.write_record(&header)?;
    for b in baselines {
        let mut row = vec![
            b.bs_id.clone(),
            b.theta_est_deg.to_string(),
            b.vbw_deg.to_string(),
            b.n_ref.to_string(),
            b.rsrp_ref_dbm().map(|v| v.to_string()).unwrap_or_default(),
        ];
        row.extend(sources.iter().map(|s| b.pl_ref_db(*s).map(|v| v.to_string()).unwrap_or_default()));
        row.extend(tilts.iter().map(|t| {
            b.tilt_scores
                .iter()
                .find(|s| s.theta_deg == *t)
                .and_then(|s| s.mean_mae)
                .map(|v| v.to_string())
                .unwrap_or_default()
        }));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}
