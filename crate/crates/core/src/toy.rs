//! Procedurally generated "toy worlds": lidar-like rasters, base stations and
//! drive-test measurements with a known propagation truth.
//!
//! Truth path loss is FSPL plus Deygout diffraction over the lidar profile
//! with Gaussian (dB) shadowing on top. A tilted vertical antenna pattern can
//! be layered in to give the truth structure the simulator does not model.
//! RSRP is rounded to whole dBm like handset reports.

use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::dataset::{self, DataError, MeasurementRecord, RSRP_WINDOW_DBM};
use crate::earfcn;
use crate::empirical::{EmpiricalModelId, EnvironmentClass, LinkBudgetInput, ModelParams};
use crate::features::{compute_link_xy, BaseStation, FeatureConfig, FeatureError, SiteContext};
use crate::geodesy::{self, GeoPoint, LocalXY};
use crate::pipeline::Environment;
use crate::raster::{Raster, Terrain};
use crate::reference::{MeasuredLink, PathLossSource};

/// Carrier channels deployed at every toy site (739 MHz and 2120 MHz).
pub const TOY_EARFCNS: [u32; 2] = [5110, 66536];

/// Reference-signal transmit power, dBm.
pub const TOY_RS_POWER_DBM: f64 = 18.0;

/// Vertical pattern: a cosine main lobe with 3 dB points at `±vbw/2` and
/// nulls at `±vbw`. Gains are floored at `floor_db`, which is also the gain
/// everywhere outside the main lobe.
pub fn vertical_gain_db(alpha: f64, tilt: f64, vbw: f64, floor_db: f64) -> f64 {
    let off = (alpha - tilt).abs();
    if off >= vbw {
        return floor_db;
    }
    (20.0 * (std::f64::consts::PI / (2.0 * vbw) * off).cos().log10()).max(floor_db)
}

/// LoS candidates around one hilly site whose RSRP carries a planted
/// antenna tilt. Truth path loss is the mean of the consensus models.
///
/// Receiver ground ranges from 40 m below to 80 m above the BS base, so
/// look angles span -4..20 degrees and every tilt window is populated.
pub fn planted_downtilt_site(theta_star: f64, vbw: f64, n: usize, sigma: f64, seed: u64) -> Vec<MeasuredLink> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, sigma).expect("finite sigma");
    let params = ModelParams::default();
    let h_bs = 30.0;
    let h_ue = 1.5;
    (0..n)
        .map(|i| {
            let alpha: f64 = rng.random_range(-4.0..20.0);
            let d = loop {
                let d = 10f64.powf(rng.random_range(1.8..3.5));
                let dz = h_bs - h_ue - d * alpha.to_radians().tan();
                if (-40.0..=80.0).contains(&dz) {
                    break d;
                }
            };
            let input = LinkBudgetInput::new(1.9e9, d, h_bs, h_ue, EnvironmentClass::Suburban)
                .expect("valid planted geometry");
            let pl_db: BTreeMap<_, _> = EmpiricalModelId::CONSENSUS
                .iter()
                .map(|&m| (PathLossSource::Empirical(m), params.path_loss(m, &input).loss_db))
                .collect();
            let truth = pl_db.values().sum::<f64>() / pl_db.len() as f64;
            let gain = vertical_gain_db(alpha, theta_star, vbw, -60.0);
            MeasuredLink {
                id: format!("p{i}"),
                bs_id: "planted".into(),
                rsrp_dbm: 43.0 + gain - truth + noise.sample(&mut rng),
                elevation_deg: alpha,
                is_los: true,
                sector: None,
                pl_db,
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ToyTerrainKind {
    /// Gently sloping farmland with scattered tree stands.
    Flat,
    /// Rolling hills with housing blocks and woodland.
    Hilly,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToyConfig {
    pub seed: u64,
    /// Side length of the square world, meters.
    pub size_m: f64,
    pub cellsize: f64,
    pub measurements_per_env: usize,
    pub shadowing_sigma_db: f64,
    /// Floor of the vertical antenna pattern; `None` leaves the pattern out.
    pub pattern_floor_db: Option<f64>,
}

impl Default for ToyConfig {
    fn default() -> Self {
        Self {
            seed: 2024,
            size_m: 1200.0,
            cellsize: 10.0,
            measurements_per_env: 3000,
            shadowing_sigma_db: 4.0,
            pattern_floor_db: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ToyEnvironment {
    pub name: String,
    pub class: EnvironmentClass,
    pub terrain: Terrain,
    pub stations: Vec<BaseStation>,
    /// Planted downtilt per station, same order as `stations`.
    pub tilts_deg: Vec<f64>,
    pub measurements: Vec<MeasurementRecord>,
}

#[derive(Debug, Clone)]
pub struct ToyWorld {
    pub config: ToyConfig,
    pub environments: Vec<ToyEnvironment>,
}

struct Bump {
    x: f64,
    y: f64,
    radius: f64,
    height: f64,
}

fn bumps(rng: &mut ChaCha8Rng, n: usize, size: f64, radius: (f64, f64), height: (f64, f64)) -> Vec<Bump> {
    (0..n)
        .map(|_| Bump {
            x: rng.random_range(0.0..size),
            y: rng.random_range(0.0..size),
            radius: rng.random_range(radius.0..radius.1),
            height: rng.random_range(height.0..height.1),
        })
        .collect()
}

fn gaussian_field(b: &[Bump], x: f64, y: f64) -> f64 {
    b.iter()
        .map(|b| {
            let r2 = (x - b.x).powi(2) + (y - b.y).powi(2);
            b.height * (-r2 / (2.0 * b.radius * b.radius)).exp()
        })
        .sum()
}

/// Flat-topped patches (buildings, tree stands) within `radius` of a center.
fn patch_field(b: &[Bump], x: f64, y: f64) -> f64 {
    b.iter()
        .filter(|b| (x - b.x).hypot(y - b.y) <= b.radius)
        .map(|b| b.height)
        .fold(0.0, f64::max)
}

fn make_terrain(kind: ToyTerrainKind, config: &ToyConfig, rng: &mut ChaCha8Rng, origin: GeoPoint) -> Terrain {
    let size = config.size_m;
    let n = (size / config.cellsize).round() as usize;
    let (hills, patches, base, slope) = match kind {
        ToyTerrainKind::Flat => (
            bumps(rng, 6, size, (150.0, 300.0), (-2.0, 3.0)),
            bumps(rng, 45, size, (10.0, 30.0), (6.0, 16.0)),
            230.0,
            0.004,
        ),
        ToyTerrainKind::Hilly => (
            bumps(rng, 14, size, (80.0, 200.0), (-25.0, 45.0)),
            bumps(rng, 160, size, (8.0, 25.0), (5.0, 14.0)),
            200.0,
            0.0,
        ),
    };
    let round = |v: f64| (v * 10.0).round() / 10.0;
    let ground = |x: f64, y: f64| base + slope * x + gaussian_field(&hills, x, y);
    let clutter = |x: f64, y: f64| round(patch_field(&patches, x, y));
    let dhm = Raster::from_fn(n, n, 0.0, 0.0, config.cellsize, clutter);
    let dsm = Raster::from_fn(n, n, 0.0, 0.0, config.cellsize, |x, y| round(ground(x, y)) + clutter(x, y));
    Terrain::new(dsm, dhm, origin)
}

fn station(origin: GeoPoint, id: &str, x: f64, y: f64, sectors: [f64; 3]) -> BaseStation {
    let carriers = TOY_EARFCNS
        .iter()
        .map(|&e| earfcn::downlink_hz(e).expect("toy channels are valid"))
        .collect();
    BaseStation {
        id: id.to_string(),
        location: geodesy::unproject(&LocalXY::new(x, y, origin)),
        tower_height_agl: 30.0,
        vbw_deg: 7.0,
        sector_azimuths: sectors.to_vec(),
        carriers,
    }
}

impl ToyEnvironment {
    pub fn environment(&self) -> Environment {
        Environment {
            name: self.name.clone(),
            class: self.class,
            terrain: self.terrain.clone(),
            stations: self.stations.clone(),
        }
    }
}

impl ToyWorld {
    /// The two-environment world: `flat` (rural) and `hilly` (suburban).
    pub fn generate(config: &ToyConfig) -> Result<Self, FeatureError> {
        let specs = [
            ("flat", ToyTerrainKind::Flat, EnvironmentClass::Rural, (40.42, -86.91), [4.0, 6.0]),
            ("hilly", ToyTerrainKind::Hilly, EnvironmentClass::Suburban, (39.17, -86.52), [6.0, 3.0]),
        ];
        let mut environments = Vec::new();
        for (k, (name, kind, class, (lat, lon), tilts)) in specs.into_iter().enumerate() {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(k as u64 * 7919));
            let origin = GeoPoint::new(lat, lon).expect("valid origin");
            let terrain = make_terrain(kind, config, &mut rng, origin);
            let s = config.size_m;
            let stations = vec![
                station(origin, &format!("{name}-bs1"), 0.3 * s, 0.35 * s, [0.0, 120.0, 240.0]),
                station(origin, &format!("{name}-bs2"), 0.7 * s, 0.65 * s, [30.0, 150.0, 270.0]),
            ];
            let mut env = ToyEnvironment {
                name: name.to_string(),
                class,
                terrain,
                stations,
                tilts_deg: tilts.to_vec(),
                measurements: Vec::new(),
            };
            env.measurements = drive_test(&env, config, &mut rng)?;
            environments.push(env);
        }
        Ok(Self {
            config: config.clone(),
            environments,
        })
    }

    pub fn environment(&self, name: &str) -> Option<&ToyEnvironment> {
        self.environments.iter().find(|e| e.name == name)
    }

    /// Writes rasters, registry, measurements and a run manifest into `dir`.
    pub fn write_to(&self, dir: &Path) -> Result<(), DataError> {
        std::fs::create_dir_all(dir).map_err(|e| DataError::io(dir, e))?;
        let write = |name: &str, text: String| {
            let path = dir.join(name);
            std::fs::write(&path, text).map_err(|e| DataError::io(&path, e))
        };
        let mut manifest = String::from("# toy world: two generated environments\n");
        manifest.push_str("measurements = measurements.csv\nregistry = registry.csv\n");
        manifest.push_str(&format!("seed = {}\n", self.config.seed));
        let mut stations = Vec::new();
        let mut records = Vec::new();
        for env in &self.environments {
            write(&format!("{}_dsm.asc", env.name), env.terrain.dsm.to_ascii_grid(1))?;
            write(&format!("{}_dhm.asc", env.name), env.terrain.dhm.to_ascii_grid(1))?;
            let n = &env.name;
            manifest.push_str(&format!(
                "env.{n}.dsm = {n}_dsm.asc\nenv.{n}.dhm = {n}_dhm.asc\nenv.{n}.units = meters\n\
                 env.{n}.origin_lat = {}\nenv.{n}.origin_lon = {}\nenv.{n}.class = {}\n",
                env.terrain.origin.lat, env.terrain.origin.lon, env.class
            ));
            stations.extend(env.stations.iter().cloned());
            records.extend(env.measurements.iter().cloned());
        }
        let mut buf = Vec::new();
        dataset::write_registry(&stations, &mut buf)?;
        write("registry.csv", String::from_utf8(buf).expect("utf8 csv"))?;
        let mut buf = Vec::new();
        dataset::write_measurements(&records, &mut buf)?;
        write("measurements.csv", String::from_utf8(buf).expect("utf8 csv"))?;
        write("manifest.cfg", manifest)
    }
}

/// Truth path loss of one link: FSPL over the 3D distance plus Deygout loss.
fn truth_path_loss(budget: &LinkBudgetInput, diffraction_db: f64) -> f64 {
    ModelParams::default().path_loss(EmpiricalModelId::Fspl, budget).loss_db + diffraction_db
}

fn drive_test(
    env: &ToyEnvironment,
    config: &ToyConfig,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<MeasurementRecord>, FeatureError> {
    let feature_config = FeatureConfig::default();
    let sites = env
        .stations
        .iter()
        .map(|bs| SiteContext::new(bs, &env.terrain, &feature_config))
        .collect::<Result<Vec<_>, _>>()?;
    let noise = Normal::new(0.0, config.shadowing_sigma_db).expect("finite sigma");
    // candidate positions on a 10 m lattice, away from the world edge
    let margin = 20.0;
    let spacing = 10.0;
    let per_axis = ((config.size_m - 2.0 * margin) / spacing) as usize;
    let total = per_axis * per_axis;
    let picks = sample(rng, total, config.measurements_per_env.min(total)).into_vec();
    let mut chosen: Vec<usize> = picks;
    chosen.sort_unstable();
    let mut records = Vec::with_capacity(chosen.len());
    for idx in chosen {
        let x = margin + spacing * (idx % per_axis) as f64 + spacing / 2.0;
        let y = margin + spacing * (idx / per_axis) as f64 + spacing / 2.0;
        let rx = LocalXY::new(x, y, env.terrain.origin);
        let (k, site) = sites
            .iter()
            .enumerate()
            .min_by(|a, b| {
                let da = geodesy::horizontal_distance(&a.1.xy, &rx).unwrap_or(f64::INFINITY);
                let db = geodesy::horizontal_distance(&b.1.xy, &rx).unwrap_or(f64::INFINITY);
                da.total_cmp(&db)
            })
            .expect("at least one station");
        if geodesy::horizontal_distance(&site.xy, &rx)? < 30.0 {
            continue;
        }
        let channel = TOY_EARFCNS[rng.random_range(0..TOY_EARFCNS.len())];
        let freq = earfcn::downlink_hz(channel).expect("toy channels are valid");
        let link = compute_link_xy(site, rx, &env.terrain, freq, &feature_config)?;
        let budget = link.budget(site.bs.tower_height_agl, feature_config.rx_h_agl, env.class);
        let pl = truth_path_loss(&budget, link.features.diffraction_loss_db);
        let gain = config
            .pattern_floor_db
            .map_or(0.0, |floor| vertical_gain_db(link.elevation_deg, env.tilts_deg[k], site.bs.vbw_deg, floor));
        let rsrp = (TOY_RS_POWER_DBM + gain - pl + noise.sample(rng))
            .round()
            .clamp(RSRP_WINDOW_DBM.0, RSRP_WINDOW_DBM.1);
        let sector = site.bs.serving_sector(link.bearing_deg).unwrap_or(0);
        records.push(MeasurementRecord {
            id: format!("{}/m{}", env.name, records.len()),
            rx: geodesy::unproject(&rx),
            rsrp_dbm: rsrp,
            earfcn: channel,
            cell_id: format!("{}-s{sector}", site.bs.id),
            bs_id: site.bs.id.clone(),
            env: env.name.clone(),
            timestamp: Some(records.len() as f64),
        });
    }
    Ok(records)
}
