//! Engineered link features from the BS/receiver geometry and the lidar
//! terrain and clutter rasters.

use std::fmt;

use thiserror::Error;

use crate::diffraction::{self, DiffractionError, DEFAULT_MAX_EDGES};
use crate::empirical::{EnvironmentClass, LinkBudgetInput, SuiTerrain};
use crate::geodesy::{self, GeoError, GeoPoint, LocalXY};
use crate::raster::{Profile, RasterError, Terrain};

pub const DEFAULT_RX_HEIGHT_M: f64 = 1.5;
pub const DEFAULT_NEIGHBORHOOD_RADIUS_M: f64 = 50.0;
/// Vertical beamwidth assumed when no datasheet value is available.
pub const DEFAULT_VBW_DEG: f64 = 7.0;

pub const N_FEATURES: usize = 19;

pub const FEATURE_NAMES: [&str; N_FEATURES] = [
    "freq_hz",
    "d_bs_m",
    "rel_bs_height_m",
    "avg_clutter_height_m",
    "terrain_roughness_m",
    "tx_haat_m",
    "ratio_alpha",
    "ratio_beta",
    "azimuth_aoa_deg",
    "tilt_aoa_deg",
    "d_diff_first_m",
    "d_diff_last_m",
    "mean_terrain_m",
    "terrain_p25_m",
    "terrain_p50_m",
    "terrain_p75_m",
    "blockage_pct",
    "diffraction_loss_db",
    "is_los",
];

/// Column index of `is_los` in [`FEATURE_NAMES`].
pub const IS_LOS_INDEX: usize = 18;
/// Column index of `freq_hz` in [`FEATURE_NAMES`].
pub const FREQ_INDEX: usize = 0;

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("profile needs at least {min} samples, got {got}")]
    DegenerateProfile { min: usize, got: usize },
    #[error("invalid base station {id}: {reason}")]
    InvalidBaseStation { id: String, reason: String },
    #[error(transparent)]
    Raster(#[from] RasterError),
    #[error(transparent)]
    Geo(#[from] GeoError),
    #[error(transparent)]
    Diffraction(#[from] DiffractionError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct BaseStation {
    pub id: String,
    pub location: GeoPoint,
    pub tower_height_agl: f64,
    /// Vertical 3 dB beamwidth, degrees.
    pub vbw_deg: f64,
    /// Sector boresights, degrees clockwise from north. Empty for unsectored sites.
    pub sector_azimuths: Vec<f64>,
    pub carriers: Vec<f64>,
}

impl BaseStation {
    pub fn validate(&self) -> Result<(), FeatureError> {
        let bad = |reason: &str| {
            Err(FeatureError::InvalidBaseStation {
                id: self.id.clone(),
                reason: reason.to_string(),
            })
        };
        if !(self.tower_height_agl > 0.0) {
            return bad("tower height must be positive");
        }
        if !(self.vbw_deg > 0.0 && self.vbw_deg <= 30.0) {
            return bad("vertical beamwidth must lie in (0, 30]");
        }
        if self.carriers.iter().any(|f| !(*f > 0.0)) {
            return bad("carrier frequencies must be positive");
        }
        Ok(())
    }

    /// Index of the sector whose boresight is angularly closest to `bearing`
    /// (degrees from the BS toward the receiver). Ties go to the lower index.
    pub fn serving_sector(&self, bearing: f64) -> Option<usize> {
        let mut best: Option<(usize, f64)> = None;
        for (i, az) in self.sector_azimuths.iter().enumerate() {
            let diff = (bearing - az).rem_euclid(360.0);
            let sep = diff.min(360.0 - diff);
            if best.is_none_or(|(_, s)| sep < s) {
                best = Some((i, sep));
            }
        }
        best.map(|(i, _)| i)
    }
}

/// The 19 link features in their fixed column order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureVector {
    pub freq_hz: f64,
    pub d_bs_m: f64,
    pub rel_bs_height_m: f64,
    pub avg_clutter_height_m: f64,
    pub terrain_roughness_m: f64,
    pub tx_haat_m: f64,
    pub ratio_alpha: f64,
    pub ratio_beta: f64,
    pub azimuth_aoa_deg: f64,
    pub tilt_aoa_deg: f64,
    pub d_diff_first_m: f64,
    pub d_diff_last_m: f64,
    pub mean_terrain_m: f64,
    pub terrain_p25_m: f64,
    pub terrain_p50_m: f64,
    pub terrain_p75_m: f64,
    pub blockage_pct: f64,
    pub diffraction_loss_db: f64,
    pub is_los: f64,
}

impl FeatureVector {
    pub fn to_array(&self) -> [f64; N_FEATURES] {
        [
            self.freq_hz,
            self.d_bs_m,
            self.rel_bs_height_m,
            self.avg_clutter_height_m,
            self.terrain_roughness_m,
            self.tx_haat_m,
            self.ratio_alpha,
            self.ratio_beta,
            self.azimuth_aoa_deg,
            self.tilt_aoa_deg,
            self.d_diff_first_m,
            self.d_diff_last_m,
            self.mean_terrain_m,
            self.terrain_p25_m,
            self.terrain_p50_m,
            self.terrain_p75_m,
            self.blockage_pct,
            self.diffraction_loss_db,
            self.is_los,
        ]
    }

    pub fn from_array(a: [f64; N_FEATURES]) -> Self {
        Self {
            freq_hz: a[0],
            d_bs_m: a[1],
            rel_bs_height_m: a[2],
            avg_clutter_height_m: a[3],
            terrain_roughness_m: a[4],
            tx_haat_m: a[5],
            ratio_alpha: a[6],
            ratio_beta: a[7],
            azimuth_aoa_deg: a[8],
            tilt_aoa_deg: a[9],
            d_diff_first_m: a[10],
            d_diff_last_m: a[11],
            mean_terrain_m: a[12],
            terrain_p25_m: a[13],
            terrain_p50_m: a[14],
            terrain_p75_m: a[15],
            blockage_pct: a[16],
            diffraction_loss_db: a[17],
            is_los: a[18],
        }
    }

    pub fn is_los(&self) -> bool {
        self.is_los != 0.0
    }

    /// Checks the structural invariants every emitted vector satisfies.
    pub fn check_invariants(&self) -> bool {
        let finite = self.to_array().iter().all(|v| v.is_finite());
        let ordered = self.terrain_p25_m <= self.terrain_p50_m && self.terrain_p50_m <= self.terrain_p75_m;
        let blockage = (0.0..=1.0).contains(&self.blockage_pct);
        let los_flag = self.is_los == 0.0 || self.is_los == 1.0;
        let los_consistent =
            !self.is_los() || (self.blockage_pct == 0.0 && self.d_diff_first_m == self.d_bs_m);
        finite && ordered && blockage && los_flag && los_consistent
    }
}

impl fmt::Display for FeatureVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, (name, v)) in FEATURE_NAMES.iter().zip(self.to_array()).enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{name}={v}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureConfig {
    pub rx_h_agl: f64,
    pub neighborhood_radius: f64,
    /// Profile sampling step; `None` uses the terrain default.
    pub profile_step: Option<f64>,
    pub max_edges: usize,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            rx_h_agl: DEFAULT_RX_HEIGHT_M,
            neighborhood_radius: DEFAULT_NEIGHBORHOOD_RADIUS_M,
            profile_step: None,
            max_edges: DEFAULT_MAX_EDGES,
        }
    }
}

/// Linear-interpolation percentile (`p` in [0, 100]) of unsorted values.
pub fn percentile(values: &[f64], p: f64) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    percentile_sorted(&sorted, p)
}

fn percentile_sorted(sorted: &[f64], p: f64) -> f64 {
    let pos = p / 100.0 * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    if frac == 0.0 {
        sorted[lo]
    } else {
        sorted[lo] + (sorted[hi] - sorted[lo]) * frac
    }
}

fn require(profile: &Profile, min: usize) -> Result<(), FeatureError> {
    if profile.len() < min {
        return Err(FeatureError::DegenerateProfile {
            min,
            got: profile.len(),
        });
    }
    Ok(())
}

/// P90 - P10 of the bare-ground heights along the profile.
pub fn terrain_roughness(profile: &Profile) -> Result<f64, FeatureError> {
    require(profile, 2)?;
    let mut g = profile.ground.clone();
    g.sort_by(f64::total_cmp);
    Ok(percentile_sorted(&g, 90.0) - percentile_sorted(&g, 10.0))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TerrainPercentiles {
    pub p25: f64,
    pub p50: f64,
    pub p75: f64,
}

pub fn terrain_percentiles(profile: &Profile) -> Result<TerrainPercentiles, FeatureError> {
    require(profile, 2)?;
    let mut g = profile.ground.clone();
    g.sort_by(f64::total_cmp);
    Ok(TerrainPercentiles {
        p25: percentile_sorted(&g, 25.0),
        p50: percentile_sorted(&g, 50.0),
        p75: percentile_sorted(&g, 75.0),
    })
}

/// Direct-ray height at each profile sample.
fn ray_heights(profile: &Profile, tx_h_agl: f64, rx_h_agl: f64) -> Vec<f64> {
    let n = profile.len();
    let h_tx = profile.ground[0] + tx_h_agl;
    let h_rx = profile.ground[n - 1] + rx_h_agl;
    let length = profile.length();
    profile
        .distances
        .iter()
        .map(|d| h_tx + (h_rx - h_tx) * d / length)
        .collect()
}

/// Interior sample indices where the surface is strictly above the ray.
fn obstructed(profile: &Profile, tx_h_agl: f64, rx_h_agl: f64) -> Vec<usize> {
    let ray = ray_heights(profile, tx_h_agl, rx_h_agl);
    (1..profile.len() - 1)
        .filter(|&i| profile.surface[i] > ray[i])
        .collect()
}

/// Fraction of interior samples whose surface is above the direct ray.
pub fn blockage_fraction(profile: &Profile, tx_h_agl: f64, rx_h_agl: f64) -> Result<f64, FeatureError> {
    require(profile, 3)?;
    let interior = (profile.len() - 2) as f64;
    Ok(obstructed(profile, tx_h_agl, rx_h_agl).len() as f64 / interior)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiffractionPoints {
    pub d_first: f64,
    pub d_last: f64,
    pub any: bool,
}

/// 3D distances from the BS antenna to the first and last obstructing surface
/// points. Without obstructions both equal the path length.
pub fn diffraction_points(
    profile: &Profile,
    tx_h_agl: f64,
    rx_h_agl: f64,
) -> Result<DiffractionPoints, FeatureError> {
    require(profile, 3)?;
    let blocked = obstructed(profile, tx_h_agl, rx_h_agl);
    let antenna = profile.ground[0] + tx_h_agl;
    let dist3 = |i: usize| profile.distances[i].hypot(profile.surface[i] - antenna);
    Ok(match (blocked.first(), blocked.last()) {
        (Some(&first), Some(&last)) => DiffractionPoints {
            d_first: dist3(first),
            d_last: dist3(last),
            any: true,
        },
        _ => DiffractionPoints {
            d_first: profile.length(),
            d_last: profile.length(),
            any: false,
        },
    })
}

/// True when no interior surface sample rises strictly above the direct ray.
pub fn los_classify(profile: &Profile, tx_h_agl: f64, rx_h_agl: f64) -> Result<bool, FeatureError> {
    require(profile, 3)?;
    Ok(obstructed(profile, tx_h_agl, rx_h_agl).is_empty())
}

/// Per-site quantities shared by every link from one base station.
#[derive(Debug, Clone, PartialEq)]
pub struct SiteContext {
    pub bs: BaseStation,
    pub xy: LocalXY,
    pub ground_asl: f64,
    pub antenna_asl: f64,
    /// Antenna height above the mean bare ground within the neighborhood radius.
    pub tx_haat: f64,
    /// Mean clutter height within the neighborhood radius.
    pub clutter_mean: f64,
}

impl SiteContext {
    pub fn new(bs: &BaseStation, terrain: &Terrain, config: &FeatureConfig) -> Result<Self, FeatureError> {
        bs.validate()?;
        let xy = terrain.project(bs.location)?;
        let ground_asl = terrain.ground(xy.x, xy.y)?;
        let antenna_asl = ground_asl + bs.tower_height_agl;
        let r = config.neighborhood_radius;
        let dsm = terrain.dsm.neighborhood_stats(xy.x, xy.y, r)?;
        let dhm = terrain.dhm.neighborhood_stats(xy.x, xy.y, r)?;
        Ok(Self {
            bs: bs.clone(),
            xy,
            ground_asl,
            antenna_asl,
            tx_haat: antenna_asl - (dsm.mean - dhm.mean),
            clutter_mean: dhm.mean,
        })
    }
}

/// Everything computed for one link: the feature vector plus the geometry the
/// baseline and simulator stages reuse.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkGeometry {
    pub features: FeatureVector,
    pub profile: Profile,
    pub rx_xy: LocalXY,
    pub rx_antenna_asl: f64,
    /// Downward look angle from the BS antenna to the receiver, degrees.
    pub elevation_deg: f64,
    /// Bearing from the BS toward the receiver, degrees.
    pub bearing_deg: f64,
    pub diffraction_edges: usize,
}

impl LinkGeometry {
    /// Link budget for the empirical models, heights above local ground.
    pub fn budget(&self, tower_height_agl: f64, rx_h_agl: f64, env: EnvironmentClass) -> LinkBudgetInput {
        let d2d = self.features.d_bs_m;
        let dh = self.features.rel_bs_height_m;
        LinkBudgetInput {
            freq: self.features.freq_hz,
            d3d: d2d.hypot(dh),
            d2d,
            h_bs_agl: tower_height_agl,
            h_ue_agl: rx_h_agl,
            environment: env,
            terrain_category: SuiTerrain::default_for(env),
            los: self.features.is_los(),
            diffraction_db: self.features.diffraction_loss_db,
        }
    }
}

/// Computes the full link description for a receiver served by `site`.
pub fn compute_link(
    site: &SiteContext,
    rx: GeoPoint,
    terrain: &Terrain,
    freq: f64,
    config: &FeatureConfig,
) -> Result<LinkGeometry, FeatureError> {
    let rx_xy = terrain.project(rx)?;
    compute_link_xy(site, rx_xy, terrain, freq, config)
}

pub fn compute_link_xy(
    site: &SiteContext,
    rx_xy: LocalXY,
    terrain: &Terrain,
    freq: f64,
    config: &FeatureConfig,
) -> Result<LinkGeometry, FeatureError> {
    let step = config.profile_step.unwrap_or_else(|| terrain.default_step());
    let profile = terrain.extract_profile(&site.xy, &rx_xy, step)?;
    let n = profile.len();
    let d_bs = profile.length();
    let tx_h = site.bs.tower_height_agl;
    let rx_h = config.rx_h_agl;
    let rx_antenna_asl = profile.ground[n - 1] + rx_h;

    let r = config.neighborhood_radius;
    let rx_surface = terrain.dsm.neighborhood_stats(rx_xy.x, rx_xy.y, r)?;
    let rx_clutter = terrain.dhm.neighborhood_stats(rx_xy.x, rx_xy.y, r)?;

    let mut ground_sorted = profile.ground.clone();
    ground_sorted.sort_by(f64::total_cmp);
    let blocked = obstructed(&profile, tx_h, rx_h);
    let points = diffraction_points(&profile, tx_h, rx_h)?;
    let diffraction = diffraction::deygout_loss(&profile, freq, tx_h, rx_h, config.max_edges)?;
    let dh = site.antenna_asl - rx_antenna_asl;

    let features = FeatureVector {
        freq_hz: freq,
        d_bs_m: d_bs,
        rel_bs_height_m: dh,
        avg_clutter_height_m: rx_clutter.mean,
        terrain_roughness_m: percentile_sorted(&ground_sorted, 90.0) - percentile_sorted(&ground_sorted, 10.0),
        tx_haat_m: site.tx_haat,
        ratio_alpha: (site.antenna_asl - rx_surface.mean) / d_bs,
        ratio_beta: site.clutter_mean / d_bs,
        azimuth_aoa_deg: geodesy::azimuth_aoa(&site.xy, &rx_xy)?,
        tilt_aoa_deg: geodesy::elevation_angle(d_bs, -dh)?,
        d_diff_first_m: points.d_first,
        d_diff_last_m: points.d_last,
        mean_terrain_m: profile.ground.iter().sum::<f64>() / n as f64,
        terrain_p25_m: percentile_sorted(&ground_sorted, 25.0),
        terrain_p50_m: percentile_sorted(&ground_sorted, 50.0),
        terrain_p75_m: percentile_sorted(&ground_sorted, 75.0),
        blockage_pct: blocked.len() as f64 / (n - 2) as f64,
        diffraction_loss_db: diffraction.loss_db,
        is_los: if blocked.is_empty() { 1.0 } else { 0.0 },
    };
    Ok(LinkGeometry {
        features,
        profile,
        rx_xy,
        rx_antenna_asl,
        elevation_deg: geodesy::elevation_angle(d_bs, dh)?,
        bearing_deg: geodesy::azimuth_aoa(&rx_xy, &site.xy)?,
        diffraction_edges: diffraction.edges.len(),
    })
}

/// Feature vector for one link with default configuration.
pub fn compute_features(
    bs: &BaseStation,
    rx: GeoPoint,
    terrain: &Terrain,
    freq: f64,
) -> Result<FeatureVector, FeatureError> {
    let config = FeatureConfig::default();
    let site = SiteContext::new(bs, terrain, &config)?;
    Ok(compute_link(&site, rx, terrain, freq, &config)?.features)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::Raster;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn origin() -> GeoPoint {
        GeoPoint::new(40.0, -86.0).unwrap()
    }

    fn terrain(dsm: Raster, dhm: Raster) -> Terrain {
        Terrain::new(dsm, dhm, origin())
    }

    fn flat_world() -> Terrain {
        terrain(
            Raster::constant(300, 60, -500.0, -150.0, 5.0, 200.0),
            Raster::constant(300, 60, -500.0, -150.0, 5.0, 0.0),
        )
    }

    fn bs_at(terrain: &Terrain, x: f64, y: f64) -> BaseStation {
        let mut loc = geodesy::unproject(&LocalXY::new(x, y, terrain.origin));
        loc.h_asl = None;
        BaseStation {
            id: "bs1".into(),
            location: loc,
            tower_height_agl: 30.0,
            vbw_deg: 7.0,
            sector_azimuths: vec![],
            carriers: vec![1e9],
        }
    }

    fn link_xy(t: &Terrain, bs: &BaseStation, x: f64, y: f64) -> LinkGeometry {
        let config = FeatureConfig::default();
        let site = SiteContext::new(bs, t, &config).unwrap();
        compute_link_xy(&site, LocalXY::new(x, y, t.origin), t, 1e9, &config).unwrap()
    }

    #[test]
    fn flat_world_features() {
        let t = flat_world();
        let bs = bs_at(&t, 0.0, 0.0);
        let link = link_xy(&t, &bs, 1000.0, 0.0);
        let f = link.features;
        assert_abs_diff_eq!(f.d_bs_m, 1000.0, epsilon = 1e-6);
        assert_abs_diff_eq!(f.rel_bs_height_m, 28.5, epsilon = 1e-9);
        assert_eq!(f.terrain_roughness_m, 0.0);
        assert_eq!(f.blockage_pct, 0.0);
        assert_eq!(f.is_los, 1.0);
        assert_eq!(f.diffraction_loss_db, 0.0);
        assert_abs_diff_eq!(f.ratio_alpha, 30.0 / 1000.0, epsilon = 1e-9);
        assert_eq!(f.ratio_beta, 0.0);
        assert_abs_diff_eq!(f.tx_haat_m, 30.0, epsilon = 1e-9);
        assert_abs_diff_eq!(f.azimuth_aoa_deg, 270.0, epsilon = 1e-6);
        assert!(f.tilt_aoa_deg < 0.0);
        assert_eq!(f.d_diff_first_m, f.d_bs_m);
        assert!(f.check_invariants());
        assert_abs_diff_eq!(link.elevation_deg, (28.5f64 / 1000.0).atan().to_degrees(), epsilon = 1e-9);
    }

    #[test]
    fn wall_at_midpath() {
        let dsm = Raster::from_fn(300, 60, -500.0, -150.0, 5.0, |x, _| {
            if (495.0..=505.0).contains(&x) {
                250.0
            } else {
                200.0
            }
        });
        let dhm = Raster::from_fn(300, 60, -500.0, -150.0, 5.0, |x, _| {
            if (495.0..=505.0).contains(&x) {
                50.0
            } else {
                0.0
            }
        });
        let t = terrain(dsm, dhm);
        let bs = bs_at(&t, 0.0, 0.0);
        let f = link_xy(&t, &bs, 1000.0, 0.0).features;
        assert_eq!(f.is_los, 0.0);
        assert!(f.blockage_pct > 0.0);
        assert!(f.diffraction_loss_db > 0.0);
        assert_abs_diff_eq!(f.d_diff_first_m, 500.0, epsilon = 10.0);
        assert_abs_diff_eq!(f.d_diff_last_m, 500.0, epsilon = 10.0);
        assert!(f.check_invariants());
    }

    #[test]
    fn short_clear_link_uses_sentinel() {
        let t = flat_world();
        let bs = bs_at(&t, 0.0, 0.0);
        let f = link_xy(&t, &bs, 0.0, 50.0).features;
        assert_eq!(f.is_los, 1.0);
        assert_eq!(f.d_diff_first_m, f.d_bs_m);
        assert_eq!(f.d_diff_last_m, f.d_bs_m);
    }

    #[test]
    fn roughness_examples() {
        let n = 100;
        let flat = Profile::from_heights(1000.0, vec![7.0; n], vec![0.0; n]);
        assert_eq!(terrain_roughness(&flat).unwrap(), 0.0);
        let ramp: Vec<f64> = (0..n).map(|i| 100.0 * i as f64 / (n - 1) as f64).collect();
        let p = Profile::from_heights(1000.0, ramp, vec![0.0; n]);
        assert_abs_diff_eq!(terrain_roughness(&p).unwrap(), 80.0, epsilon = 1.0);
        let mut spike = vec![10.0; n];
        spike[40] = 90.0;
        let p = Profile::from_heights(1000.0, spike, vec![0.0; n]);
        assert_abs_diff_eq!(terrain_roughness(&p).unwrap(), 0.0, epsilon = 1e-12);
        let single = Profile::from_heights(1.0, vec![1.0], vec![0.0]);
        assert!(terrain_roughness(&single).is_err());
    }

    #[test]
    fn percentile_examples() {
        let p = Profile::from_heights(10.0, vec![7.0; 5], vec![0.0; 5]);
        let t = terrain_percentiles(&p).unwrap();
        assert_eq!((t.p25, t.p50, t.p75), (7.0, 7.0, 7.0));
        let p = Profile::from_heights(10.0, vec![5.0, 1.0, 3.0, 2.0, 4.0], vec![0.0; 5]);
        assert_eq!(terrain_percentiles(&p).unwrap().p50, 3.0);
        // independent numpy evaluation over linspace(0, 100, 100)
        let v: Vec<f64> = (0..100).map(|i| 100.0 * i as f64 / 99.0).collect();
        assert_abs_diff_eq!(percentile(&v, 25.0), 25.0, epsilon = 1e-9);
        assert_abs_diff_eq!(percentile(&v, 50.0), 50.0, epsilon = 1e-9);
        assert_abs_diff_eq!(percentile(&v, 75.0), 75.0, epsilon = 1e-9);
        assert_abs_diff_eq!(percentile(&v, 10.0), 10.0, epsilon = 1e-9);
    }

    fn flat_profile(n: usize) -> Profile {
        Profile::from_heights(1000.0, vec![100.0; n], vec![0.0; n])
    }

    #[test]
    fn blockage_examples() {
        assert_eq!(blockage_fraction(&flat_profile(65), 30.0, 1.5).unwrap(), 0.0);
        let n = 65;
        let p = Profile::from_heights(1000.0, vec![100.0; n], vec![200.0; n]);
        assert_eq!(blockage_fraction(&p, 30.0, 1.5).unwrap(), 1.0);
        // wall over the middle half of the interior samples
        let clutter: Vec<f64> = (0..n).map(|i| if (17..=48).contains(&i) { 60.0 } else { 0.0 }).collect();
        let p = Profile::from_heights(1000.0, vec![100.0; n], clutter);
        assert_abs_diff_eq!(blockage_fraction(&p, 30.0, 1.5).unwrap(), 0.5, epsilon = 1.0 / n as f64);
    }

    #[test]
    fn diffraction_point_examples() {
        let p = flat_profile(11);
        let d = diffraction_points(&p, 30.0, 30.0).unwrap();
        assert!(!d.any);
        assert_eq!((d.d_first, d.d_last), (1000.0, 1000.0));

        let mut clutter = vec![0.0; 11];
        clutter[3] = 40.0;
        let p = Profile::from_heights(1000.0, vec![100.0; 11], clutter.clone());
        let d = diffraction_points(&p, 30.0, 30.0).unwrap();
        assert!(d.any);
        // antenna at 130 m, apex at 140 m, 300 m out
        assert_abs_diff_eq!(d.d_first, 300f64.hypot(10.0), epsilon = 1e-9);
        assert_eq!(d.d_first, d.d_last);

        clutter[8] = 40.0;
        clutter[3] = 40.0;
        clutter[2] = 0.0;
        let p = Profile::from_heights(1000.0, vec![100.0; 11], {
            let mut c = vec![0.0; 11];
            c[2] = 40.0;
            c[8] = 40.0;
            c
        });
        let d = diffraction_points(&p, 30.0, 30.0).unwrap();
        assert_abs_diff_eq!(d.d_first, 200f64.hypot(10.0), epsilon = 1e-9);
        assert_abs_diff_eq!(d.d_last, 800f64.hypot(10.0), epsilon = 1e-9);
    }

    #[test]
    fn los_boundary_is_strict() {
        assert!(los_classify(&flat_profile(65), 30.0, 1.5).unwrap());
        let mut clutter = vec![0.0; 5];
        clutter[2] = 30.0;
        let touching = Profile::from_heights(1000.0, vec![100.0; 5], clutter.clone());
        assert!(los_classify(&touching, 30.0, 30.0).unwrap());
        clutter[2] = 30.5;
        let above = Profile::from_heights(1000.0, vec![100.0; 5], clutter);
        assert!(!los_classify(&above, 30.0, 30.0).unwrap());
    }

    #[test]
    fn array_round_trip() {
        let a: [f64; N_FEATURES] = std::array::from_fn(|i| i as f64 * 1.5);
        assert_eq!(FeatureVector::from_array(a).to_array(), a);
        assert_eq!(FEATURE_NAMES[IS_LOS_INDEX], "is_los");
        assert_eq!(FEATURE_NAMES[FREQ_INDEX], "freq_hz");
    }

    #[test]
    fn serving_sector_picks_nearest_boresight() {
        let t = flat_world();
        let mut bs = bs_at(&t, 0.0, 0.0);
        assert_eq!(bs.serving_sector(10.0), None);
        bs.sector_azimuths = vec![0.0, 120.0, 240.0];
        assert_eq!(bs.serving_sector(350.0), Some(0));
        assert_eq!(bs.serving_sector(100.0), Some(1));
        assert_eq!(bs.serving_sector(60.0), Some(0));
        assert_eq!(bs.serving_sector(200.0), Some(2));
    }

    fn hilly(shift_x: f64, shift_y: f64) -> Terrain {
        let h = |x: f64, y: f64| {
            let (x, y) = (x - shift_x, y - shift_y);
            200.0 + 15.0 * (x / 90.0).sin() * (y / 70.0).cos() + 0.01 * x
        };
        let c = |x: f64, y: f64| {
            let (x, y) = (x - shift_x, y - shift_y);
            (8.0 * (x / 40.0).cos() * (y / 55.0).sin()).max(0.0)
        };
        let dsm = Raster::from_fn(100, 100, shift_x, shift_y, 10.0, move |x, y| h(x, y) + c(x, y));
        let dhm = Raster::from_fn(100, 100, shift_x, shift_y, 10.0, c);
        terrain(dsm, dhm)
    }

    #[test]
    fn consistency_between_los_blockage_and_points() {
        let t = hilly(0.0, 0.0);
        let bs = bs_at(&t, 120.0, 130.0);
        for k in 0..40 {
            let x = 150.0 + 20.0 * k as f64;
            let y = 900.0 - 17.0 * k as f64;
            let link = link_xy(&t, &bs, x, y);
            let p = &link.profile;
            let los = los_classify(p, 30.0, 1.5).unwrap();
            let block = blockage_fraction(p, 30.0, 1.5).unwrap();
            let pts = diffraction_points(p, 30.0, 1.5).unwrap();
            assert_eq!(los, block == 0.0);
            assert_eq!(los, !pts.any);
            assert_eq!(los, link.features.is_los());
            assert!(link.features.check_invariants());
        }
    }

    #[test]
    fn ratios_match_independent_recomputation() {
        let t = hilly(0.0, 0.0);
        let bs = bs_at(&t, 400.0, 400.0);
        let f = link_xy(&t, &bs, 750.0, 120.0).features;
        // brute-force neighborhood means over cell centers
        let mean_within = |r: &Raster, cx: f64, cy: f64| {
            let (mut s, mut n) = (0.0, 0.0);
            for row in 0..r.nrows {
                for col in 0..r.ncols {
                    let (x, y) = r.cell_center(col, row);
                    if (x - cx).hypot(y - cy) <= 50.0 {
                        s += r.get(col, row);
                        n += 1.0;
                    }
                }
            }
            s / n
        };
        let bs_ground = t.dsm.sample_bilinear(400.0, 400.0).unwrap() - t.dhm.sample_bilinear(400.0, 400.0).unwrap();
        let h_bs = bs_ground + 30.0;
        let d = 350f64.hypot(280.0);
        let alpha = (h_bs - mean_within(&t.dsm, 750.0, 120.0)) / d;
        let beta = mean_within(&t.dhm, 400.0, 400.0) / d;
        assert_abs_diff_eq!(f.ratio_alpha, alpha, epsilon = 1e-9);
        assert_abs_diff_eq!(f.ratio_beta, beta, epsilon = 1e-9);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn translation_invariant(
            sx in -2000.0f64..2000.0, sy in -2000.0f64..2000.0,
            rx in 200.0f64..900.0, ry in 200.0f64..900.0,
        ) {
            let base = hilly(0.0, 0.0);
            let moved = hilly(sx, sy);
            let a = link_xy(&base, &bs_at(&base, 100.0, 150.0), rx, ry).features.to_array();
            let b = link_xy(&moved, &bs_at(&moved, 100.0 + sx, 150.0 + sy), rx + sx, ry + sy)
                .features
                .to_array();
            for (i, (u, v)) in a.iter().zip(&b).enumerate() {
                prop_assert!((u - v).abs() <= 1e-6, "{} differs: {} vs {}", FEATURE_NAMES[i], u, v);
            }
        }
    }
}
