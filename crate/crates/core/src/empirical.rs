//! Closed-form median path loss models.
//!
//! Every model clamps out-of-range inputs to its nominal validity window and
//! reports that through [`PathLossOutput::clamped`] instead of failing: field
//! carriers routinely sit outside the calibration ranges of these models.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::diffraction::{self, DiffractionError, DEFAULT_MAX_EDGES, SPEED_OF_LIGHT};
use crate::raster::Profile;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("unsupported model {0:?}")]
    UnsupportedModel(String),
    #[error("invalid link budget input: {0}")]
    InvalidInput(String),
    #[error(transparent)]
    Diffraction(#[from] DiffractionError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum EmpiricalModelId {
    Fspl,
    Cost231Hata,
    Sui,
    TgppUma,
    Spm,
}

impl EmpiricalModelId {
    /// The five models averaged for the downtilt consensus.
    pub const CONSENSUS: [EmpiricalModelId; 5] = [
        EmpiricalModelId::Fspl,
        EmpiricalModelId::Cost231Hata,
        EmpiricalModelId::Sui,
        EmpiricalModelId::TgppUma,
        EmpiricalModelId::Spm,
    ];

    pub fn name(self) -> &'static str {
        match self {
            EmpiricalModelId::Fspl => "FSPL",
            EmpiricalModelId::Cost231Hata => "COST231_HATA",
            EmpiricalModelId::Sui => "SUI",
            EmpiricalModelId::TgppUma => "TGPP_UMA",
            EmpiricalModelId::Spm => "SPM",
        }
    }
}

impl fmt::Display for EmpiricalModelId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EmpiricalModelId {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let id = match s.trim().to_ascii_uppercase().replace('-', "_").as_str() {
            "FSPL" => EmpiricalModelId::Fspl,
            "COST231_HATA" | "COST231" | "HATA" => EmpiricalModelId::Cost231Hata,
            "SUI" => EmpiricalModelId::Sui,
            "TGPP_UMA" | "3GPP_UMA" | "UMA" => EmpiricalModelId::TgppUma,
            "SPM" => EmpiricalModelId::Spm,
            _ => return Err(ModelError::UnsupportedModel(s.to_string())),
        };
        Ok(id)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum EnvironmentClass {
    Urban,
    #[default]
    Suburban,
    Rural,
}

impl FromStr for EnvironmentClass {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "urban" => Ok(EnvironmentClass::Urban),
            "suburban" => Ok(EnvironmentClass::Suburban),
            "rural" => Ok(EnvironmentClass::Rural),
            other => Err(ModelError::InvalidInput(format!("unknown environment class {other:?}"))),
        }
    }
}

impl fmt::Display for EnvironmentClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EnvironmentClass::Urban => "urban",
            EnvironmentClass::Suburban => "suburban",
            EnvironmentClass::Rural => "rural",
        })
    }
}

/// SUI terrain category: A = hilly/dense trees, C = flat/light trees.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SuiTerrain {
    A,
    B,
    C,
}

impl SuiTerrain {
    pub fn default_for(env: EnvironmentClass) -> Self {
        match env {
            EnvironmentClass::Urban => SuiTerrain::A,
            EnvironmentClass::Suburban => SuiTerrain::B,
            EnvironmentClass::Rural => SuiTerrain::C,
        }
    }

    fn constants(self) -> (f64, f64, f64) {
        match self {
            SuiTerrain::A => (4.6, 0.0075, 12.6),
            SuiTerrain::B => (4.0, 0.0065, 17.1),
            SuiTerrain::C => (3.6, 0.005, 20.0),
        }
    }
}

impl FromStr for SuiTerrain {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_uppercase().as_str() {
            "A" => Ok(SuiTerrain::A),
            "B" => Ok(SuiTerrain::B),
            "C" => Ok(SuiTerrain::C),
            other => Err(ModelError::InvalidInput(format!("unknown SUI terrain {other:?}"))),
        }
    }
}

/// Geometry and radio parameters of one link.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkBudgetInput {
    pub freq: f64,
    pub d3d: f64,
    pub d2d: f64,
    pub h_bs_agl: f64,
    pub h_ue_agl: f64,
    pub environment: EnvironmentClass,
    pub terrain_category: SuiTerrain,
    /// Selects the 3GPP UMa LOS or NLOS branch.
    pub los: bool,
    /// Diffraction loss fed to the SPM diffraction term.
    pub diffraction_db: f64,
}

impl LinkBudgetInput {
    pub fn new(
        freq: f64,
        d2d: f64,
        h_bs_agl: f64,
        h_ue_agl: f64,
        environment: EnvironmentClass,
    ) -> Result<Self, ModelError> {
        let dh = h_bs_agl - h_ue_agl;
        let input = Self {
            freq,
            d3d: d2d.hypot(dh),
            d2d,
            h_bs_agl,
            h_ue_agl,
            environment,
            terrain_category: SuiTerrain::default_for(environment),
            los: true,
            diffraction_db: 0.0,
        };
        input.validate()?;
        Ok(input)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: &str| Err(ModelError::InvalidInput(m.to_string()));
        if !(self.freq > 0.0) {
            return bad("frequency must be positive");
        }
        if !(self.h_bs_agl > 0.0 && self.h_ue_agl > 0.0) {
            return bad("antenna heights must be positive");
        }
        if !(self.d2d >= 0.0 && self.d3d > 0.0) || self.d2d > self.d3d * (1.0 + 1e-12) {
            return bad("distances must satisfy 0 <= d2d <= d3d, d3d > 0");
        }
        Ok(())
    }
}

/// Standard Propagation Model coefficients.
///
/// `PL = K1 + K2 log d + K3 log Heff + K4 Ldiff + K5 log d log Heff + K6 Hue + Kclutter`
/// with `d` in meters and `Heff` the BS antenna height above ground.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpmCoefficients {
    pub k1: f64,
    pub k2: f64,
    pub k3: f64,
    pub k4: f64,
    pub k5: f64,
    pub k6: f64,
    pub k_clutter: f64,
}

impl Default for SpmCoefficients {
    fn default() -> Self {
        Self {
            k1: 23.5,
            k2: 44.9,
            k3: 5.83,
            k4: 0.0,
            k5: 0.0,
            k6: 0.0,
            k_clutter: 0.0,
        }
    }
}

/// Tunable model parameters; defaults reproduce the published forms.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub spm: SpmCoefficients,
    /// SUI terrain category override; `None` uses the environment mapping.
    pub sui_terrain: Option<SuiTerrain>,
    pub uma_street_width: f64,
    pub uma_building_height: f64,
}

impl Default for ModelParams {
    fn default() -> Self {
        Self {
            spm: SpmCoefficients::default(),
            sui_terrain: None,
            uma_street_width: 20.0,
            uma_building_height: 20.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathLossOutput {
    pub loss_db: f64,
    /// At least one input was moved into the model's validity window.
    pub clamped: bool,
}

#[derive(Default)]
struct Clamp(bool);

impl Clamp {
    fn apply(&mut self, v: f64, lo: f64, hi: f64) -> f64 {
        let c = v.clamp(lo, hi);
        if c != v {
            self.0 = true;
        }
        c
    }
}

impl ModelParams {
    pub fn path_loss(&self, model: EmpiricalModelId, input: &LinkBudgetInput) -> PathLossOutput {
        match model {
            EmpiricalModelId::Fspl => fspl(input),
            EmpiricalModelId::Cost231Hata => cost231_hata(input),
            EmpiricalModelId::Sui => sui(input, self.sui_terrain.unwrap_or(input.terrain_category)),
            EmpiricalModelId::TgppUma => {
                tgpp_uma(input, self.uma_street_width, self.uma_building_height)
            }
            EmpiricalModelId::Spm => spm(input, &self.spm),
        }
    }

    /// Empirical loss plus Deygout diffraction over the surface profile.
    pub fn path_loss_over_profile(
        &self,
        model: EmpiricalModelId,
        input: &LinkBudgetInput,
        profile: &Profile,
        freq: f64,
    ) -> Result<f64, ModelError> {
        let base = self.path_loss(model, input).loss_db;
        let diff = diffraction::deygout_loss(
            profile,
            freq,
            input.h_bs_agl,
            input.h_ue_agl,
            DEFAULT_MAX_EDGES,
        )?;
        Ok(base + diff.loss_db)
    }
}

/// Median path loss with default parameters, dB.
pub fn path_loss(model: EmpiricalModelId, input: &LinkBudgetInput) -> f64 {
    ModelParams::default().path_loss(model, input).loss_db
}

pub fn path_loss_over_profile(
    model: EmpiricalModelId,
    input: &LinkBudgetInput,
    profile: &Profile,
    freq: f64,
) -> Result<f64, ModelError> {
    ModelParams::default().path_loss_over_profile(model, input, profile, freq)
}

fn fspl(input: &LinkBudgetInput) -> PathLossOutput {
    let mut clamp = Clamp::default();
    let d = clamp.apply(input.d3d, 1.0, f64::INFINITY);
    PathLossOutput {
        loss_db: 20.0 * (4.0 * std::f64::consts::PI * d * input.freq / SPEED_OF_LIGHT).log10(),
        clamped: clamp.0,
    }
}

fn cost231_hata(input: &LinkBudgetInput) -> PathLossOutput {
    let mut clamp = Clamp::default();
    let f = clamp.apply(input.freq / 1e6, 1500.0, 2000.0);
    let hb = clamp.apply(input.h_bs_agl, 30.0, 200.0);
    let hm = clamp.apply(input.h_ue_agl, 1.0, 10.0);
    // Distance floor of 100 m rather than the nominal 1 km; see README.
    let d = clamp.apply(input.d2d / 1000.0, 0.1, 20.0);
    let lf = f.log10();
    let a_hm = (1.1 * lf - 0.7) * hm - (1.56 * lf - 0.8);
    let mut loss = 46.3 + 33.9 * lf - 13.82 * hb.log10() - a_hm + (44.9 - 6.55 * hb.log10()) * d.log10();
    match input.environment {
        EnvironmentClass::Urban => loss += 3.0,
        EnvironmentClass::Suburban => {}
        EnvironmentClass::Rural => loss -= 4.78 * lf * lf - 18.33 * lf + 40.94,
    }
    PathLossOutput {
        loss_db: loss,
        clamped: clamp.0,
    }
}

fn sui(input: &LinkBudgetInput, terrain: SuiTerrain) -> PathLossOutput {
    const D0: f64 = 100.0;
    let mut clamp = Clamp::default();
    let d = clamp.apply(input.d3d, D0, 10_000.0);
    let hb = clamp.apply(input.h_bs_agl, 10.0, 80.0);
    let hr = clamp.apply(input.h_ue_agl, 2.0, 10.0);
    let f_mhz = input.freq / 1e6;
    let wavelength = SPEED_OF_LIGHT / input.freq;
    let (a, b, c) = terrain.constants();
    let gamma = a - b * hb + c / hb;
    let intercept = 20.0 * (4.0 * std::f64::consts::PI * D0 / wavelength).log10();
    let xf = 6.0 * (f_mhz / 2000.0).log10();
    let xh = match terrain {
        SuiTerrain::A | SuiTerrain::B => -10.8 * (hr / 2.0).log10(),
        SuiTerrain::C => -20.0 * (hr / 2.0).log10(),
    };
    PathLossOutput {
        loss_db: intercept + 10.0 * gamma * (d / D0).log10() + xf + xh,
        clamped: clamp.0,
    }
}

fn tgpp_uma(input: &LinkBudgetInput, street_width: f64, building_height: f64) -> PathLossOutput {
    const H_E: f64 = 1.0;
    let mut clamp = Clamp::default();
    let fc = clamp.apply(input.freq / 1e9, 0.5, 6.0);
    let h_bs = clamp.apply(input.h_bs_agl, H_E + 1.0, 150.0);
    let h_ut = clamp.apply(input.h_ue_agl, 1.5, 22.5);
    let d2d = clamp.apply(input.d2d, 10.0, 5000.0);
    let d3d = d2d.hypot(h_bs - h_ut);
    let d_bp = 4.0 * (h_bs - H_E) * (h_ut - H_E) * fc * 1e9 / SPEED_OF_LIGHT;
    let los = if d2d < d_bp {
        22.0 * d3d.log10() + 28.0 + 20.0 * fc.log10()
    } else {
        40.0 * d3d.log10() + 28.0 + 20.0 * fc.log10()
            - 9.0 * (d_bp * d_bp + (h_bs - h_ut).powi(2)).log10()
    };
    let loss = if input.los {
        los
    } else {
        let (w, h) = (street_width, building_height);
        let nlos = 161.04 - 7.1 * w.log10() + 7.5 * h.log10()
            - (24.37 - 3.7 * (h / h_bs).powi(2)) * h_bs.log10()
            + (43.42 - 3.1 * h_bs.log10()) * (d3d.log10() - 3.0)
            + 20.0 * fc.log10()
            - (3.2 * 17.625f64.log10().powi(2) - 4.97)
            - 0.6 * (h_ut - 1.5);
        nlos.max(los)
    };
    PathLossOutput {
        loss_db: loss,
        clamped: clamp.0,
    }
}

fn spm(input: &LinkBudgetInput, k: &SpmCoefficients) -> PathLossOutput {
    let mut clamp = Clamp::default();
    let d = clamp.apply(input.d3d, 1.0, f64::INFINITY);
    let h_eff = clamp.apply(input.h_bs_agl, 1.0, f64::INFINITY);
    let (ld, lh) = (d.log10(), h_eff.log10());
    PathLossOutput {
        loss_db: k.k1
            + k.k2 * ld
            + k.k3 * lh
            + k.k4 * input.diffraction_db
            + k.k5 * ld * lh
            + k.k6 * input.h_ue_agl
            + k.k_clutter,
        clamped: clamp.0,
    }
}
