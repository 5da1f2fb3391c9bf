//! Measurement ingestion: records to links, per-site baselines and real
//! ΔRSRP samples for one environment.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::dataset::{LinkSample, MeasurementRecord, SourceTag};
use crate::earfcn::{self, UnknownEarfcn};
use crate::empirical::{EmpiricalModelId, EnvironmentClass};
use crate::evaluation::EnvData;
use crate::features::{compute_link, BaseStation, FeatureError, LinkGeometry, SiteContext};
use crate::raster::Terrain;
use crate::reference::{
    build_site_baseline, delta_rsrp_real, MeasuredLink, PathLossSource, ReferenceConfig, ReferenceError, SiteBaseline,
};
use crate::simulator::{simulate_links, SimConfig, SimError};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("record {record}: unknown base station {bs_id}")]
    UnknownStation { record: String, bs_id: String },
    #[error("record {record}: {source}")]
    Channel { record: String, source: UnknownEarfcn },
    #[error("record {record}: {source}")]
    Link { record: String, source: FeatureError },
    #[error("site {bs_id}: {source}")]
    Site { bs_id: String, source: FeatureError },
    #[error(transparent)]
    Reference(#[from] ReferenceError),
    #[error(transparent)]
    Sim(#[from] SimError),
}

/// One surveyed area: its rasters, class and deployed stations.
#[derive(Debug, Clone)]
pub struct Environment {
    pub name: String,
    pub class: EnvironmentClass,
    pub terrain: Terrain,
    pub stations: Vec<BaseStation>,
}

impl Environment {
    pub fn station(&self, id: &str) -> Option<&BaseStation> {
        self.stations.iter().find(|s| s.id == id)
    }
}

/// A measurement paired with its computed link.
#[derive(Debug, Clone)]
pub struct LinkedRecord {
    pub record: MeasurementRecord,
    pub link: LinkGeometry,
    pub measured: MeasuredLink,
}

#[derive(Debug, Clone, Default)]
pub struct RealDataset {
    pub samples: Vec<LinkSample>,
    pub baselines: BTreeMap<String, SiteBaseline>,
    /// Sites without enough reference points; their records are dropped.
    pub skipped_sites: Vec<(String, ReferenceError)>,
}

/// The reference configuration specialised to an environment's class.
pub fn reference_config_for(env: &Environment, base: &ReferenceConfig) -> ReferenceConfig {
    ReferenceConfig {
        environment: env.class,
        ..base.clone()
    }
}

/// Computes the link of every record of `env`, in input order.
pub fn link_records(
    env: &Environment,
    records: &[MeasurementRecord],
    config: &ReferenceConfig,
) -> Result<Vec<LinkedRecord>, PipelineError> {
    let mut sites: BTreeMap<&str, SiteContext> = BTreeMap::new();
    let mut out = Vec::with_capacity(records.len());
    for r in records.iter().filter(|r| r.env == env.name) {
        let bs = env.station(&r.bs_id).ok_or_else(|| PipelineError::UnknownStation {
            record: r.id.clone(),
            bs_id: r.bs_id.clone(),
        })?;
        if !sites.contains_key(bs.id.as_str()) {
            let site = SiteContext::new(bs, &env.terrain, &config.features).map_err(|source| {
                PipelineError::Site {
                    bs_id: bs.id.clone(),
                    source,
                }
            })?;
            sites.insert(&bs.id, site);
        }
        let site = &sites[bs.id.as_str()];
        let freq = earfcn::downlink_hz(r.earfcn).map_err(|source| PipelineError::Channel {
            record: r.id.clone(),
            source,
        })?;
        let link = compute_link(site, r.rx, &env.terrain, freq, &config.features).map_err(|source| {
            PipelineError::Link {
                record: r.id.clone(),
                source,
            }
        })?;
        let measured = MeasuredLink::new(r, &link, bs, &config.baseline_sources, config);
        out.push(LinkedRecord {
            record: r.clone(),
            link,
            measured,
        });
    }
    Ok(out)
}

/// Baselines per site from already linked records.
pub fn site_baselines(
    env: &Environment,
    linked: &[LinkedRecord],
    config: &ReferenceConfig,
) -> (BTreeMap<String, SiteBaseline>, Vec<(String, ReferenceError)>) {
    let mut by_site: BTreeMap<&str, Vec<MeasuredLink>> = BTreeMap::new();
    for l in linked {
        by_site.entry(l.record.bs_id.as_str()).or_default().push(l.measured.clone());
    }
    let mut baselines = BTreeMap::new();
    let mut skipped = Vec::new();
    for (bs_id, links) in by_site {
        let bs = env.station(bs_id).expect("linked records reference known stations");
        match build_site_baseline(bs, &links, config) {
            Ok(b) => {
                baselines.insert(bs_id.to_string(), b);
            }
            Err(e) => {
                log::warn!("{}: site {bs_id} skipped: {e}", env.name);
                skipped.push((bs_id.to_string(), e));
            }
        }
    }
    (baselines, skipped)
}

/// Real ΔRSRP samples for every record whose site has a baseline.
pub fn real_samples(linked: &[LinkedRecord], baselines: &BTreeMap<String, SiteBaseline>) -> Vec<LinkSample> {
    linked
        .iter()
        .filter_map(|l| {
            let baseline = baselines.get(&l.record.bs_id)?;
            let target = delta_rsrp_real(&l.record, baseline).ok()?;
            Some(LinkSample {
                id: l.record.id.clone(),
                bs_id: l.record.bs_id.clone(),
                env: l.record.env.clone(),
                lat: l.record.rx.lat,
                lon: l.record.rx.lon,
                source: SourceTag::Real,
                features: l.link.features,
                target,
                parents: Vec::new(),
            })
        })
        .collect()
}

/// The whole real-data path for one environment.
pub fn process_environment(
    env: &Environment,
    records: &[MeasurementRecord],
    base: &ReferenceConfig,
) -> Result<RealDataset, PipelineError> {
    let config = reference_config_for(env, base);
    let linked = link_records(env, records, &config)?;
    let (baselines, skipped_sites) = site_baselines(env, &linked, &config);
    Ok(RealDataset {
        samples: real_samples(&linked, &baselines),
        baselines,
        skipped_sites,
    })
}

/// Synthetic grid settings for [`environment_data`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimSettings {
    pub spacing: f64,
    /// Inset from the raster edges, meters.
    pub margin: f64,
    pub model: EmpiricalModelId,
}

impl Default for SimSettings {
    fn default() -> Self {
        Self {
            spacing: 25.0,
            margin: 20.0,
            model: EmpiricalModelId::Fspl,
        }
    }
}

/// Real samples plus synthetic samples on a grid covering the rasters,
/// normalized by the measured baselines. Stations without a measured
/// baseline are left out of the grid run.
pub fn environment_data(
    env: &Environment,
    records: &[MeasurementRecord],
    base: &ReferenceConfig,
    sim: &SimSettings,
) -> Result<EnvData, PipelineError> {
    let mut base = base.clone();
    let source = PathLossSource::Terrain(sim.model);
    if !base.baseline_sources.contains(&source) {
        base.baseline_sources.push(source);
    }
    let real = process_environment(env, records, &base)?;
    let mut cfg = SimConfig::covering(env, sim.spacing, sim.margin);
    cfg.sim_model = sim.model;
    cfg.rx_h_agl = base.features.rx_h_agl;
    cfg.bs_ids.retain(|id| real.baselines.contains_key(id));
    let synth = simulate_links(&cfg, env, &real.baselines)?.samples;
    Ok(EnvData {
        name: env.name.clone(),
        real: real.samples,
        synth,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::toy::{ToyConfig, ToyWorld};

    fn world() -> ToyWorld {
        ToyWorld::generate(&ToyConfig {
            size_m: 800.0,
            measurements_per_env: 800,
            ..ToyConfig::default()
        })
        .unwrap()
    }

    #[test]
    fn toy_environments_produce_real_samples() {
        let w = world();
        for toy in &w.environments {
            let env = toy.environment();
            let data = process_environment(&env, &toy.measurements, &ReferenceConfig::default()).unwrap();
            assert!(data.skipped_sites.is_empty(), "{:?}", data.skipped_sites);
            assert_eq!(data.baselines.len(), 2);
            assert_eq!(data.samples.len(), toy.measurements.len());
            for s in &data.samples {
                assert!(s.features.check_invariants());
                assert_eq!(s.source, SourceTag::Real);
            }
        }
    }

    #[test]
    fn sector_weighted_mean_of_reference_deltas_vanishes() {
        let w = world();
        let toy = &w.environments[1];
        let env = toy.environment();
        let config = reference_config_for(&env, &ReferenceConfig::default());
        let linked = link_records(&env, &toy.measurements, &config).unwrap();
        let (baselines, _) = site_baselines(&env, &linked, &config);
        let samples = real_samples(&linked, &baselines);
        for b in baselines.values() {
            let items: Vec<_> = linked
                .iter()
                .zip(&samples)
                .filter(|(l, _)| b.subset_ids.contains(&l.record.id))
                .map(|(l, s)| (l.measured.sector, s.target))
                .collect();
            assert_eq!(items.len(), b.n_ref);
            let m = crate::reference::AnchoredMean::of(&items).unwrap();
            assert!(m.value().abs() < 1e-12, "{}", m.value());
        }
    }

    #[test]
    fn unknown_station_is_reported() {
        let w = world();
        let toy = &w.environments[0];
        let mut recs = toy.measurements[..3].to_vec();
        recs[1].bs_id = "nowhere".into();
        let err = process_environment(&toy.environment(), &recs, &ReferenceConfig::default()).unwrap_err();
        assert!(matches!(err, PipelineError::UnknownStation { .. }));
    }

    #[test]
    fn records_of_other_environments_are_ignored() {
        let w = world();
        let env = w.environments[0].environment();
        let other = &w.environments[1].measurements;
        let linked = link_records(&env, other, &ReferenceConfig::default()).unwrap();
        assert!(linked.is_empty());
    }
}
