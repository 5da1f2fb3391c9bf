//! LTE downlink EARFCN to carrier frequency.
//!
//! `F_DL = F_DL_low + 0.1 (N_DL - N_Offs_DL)` MHz for the bands deployed in
//! the North American field data. Unknown channel numbers are an error: a
//! guessed frequency would silently corrupt every frequency-dependent feature.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("EARFCN {0} is not in any supported LTE downlink band")]
pub struct UnknownEarfcn(pub u32);

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LteBand {
    pub band: u8,
    pub f_dl_low_mhz: f64,
    pub n_offs_dl: u32,
    pub n_dl_max: u32,
}

pub const BANDS: [LteBand; 11] = [
    LteBand { band: 2, f_dl_low_mhz: 1930.0, n_offs_dl: 600, n_dl_max: 1199 },
    LteBand { band: 4, f_dl_low_mhz: 2110.0, n_offs_dl: 1950, n_dl_max: 2399 },
    LteBand { band: 5, f_dl_low_mhz: 869.0, n_offs_dl: 2400, n_dl_max: 2649 },
    LteBand { band: 12, f_dl_low_mhz: 729.0, n_offs_dl: 5010, n_dl_max: 5179 },
    LteBand { band: 13, f_dl_low_mhz: 746.0, n_offs_dl: 5180, n_dl_max: 5279 },
    LteBand { band: 17, f_dl_low_mhz: 734.0, n_offs_dl: 5730, n_dl_max: 5849 },
    LteBand { band: 25, f_dl_low_mhz: 1930.0, n_offs_dl: 8040, n_dl_max: 8689 },
    LteBand { band: 26, f_dl_low_mhz: 859.0, n_offs_dl: 8690, n_dl_max: 9039 },
    LteBand { band: 41, f_dl_low_mhz: 2496.0, n_offs_dl: 39650, n_dl_max: 41589 },
    LteBand { band: 66, f_dl_low_mhz: 2110.0, n_offs_dl: 66436, n_dl_max: 67335 },
    LteBand { band: 71, f_dl_low_mhz: 617.0, n_offs_dl: 68586, n_dl_max: 68935 },
];

pub fn band_of(earfcn: u32) -> Result<&'static LteBand, UnknownEarfcn> {
    BANDS
        .iter()
        .find(|b| (b.n_offs_dl..=b.n_dl_max).contains(&earfcn))
        .ok_or(UnknownEarfcn(earfcn))
}

/// Downlink carrier frequency in Hz.
pub fn downlink_hz(earfcn: u32) -> Result<f64, UnknownEarfcn> {
    let band = band_of(earfcn)?;
    // whole multiples of 100 kHz, computed in integer kHz to stay exact
    let khz = (band.f_dl_low_mhz * 1000.0).round() as u64 + 100 * u64::from(earfcn - band.n_offs_dl);
    Ok(khz as f64 * 1e3)
}
