//! Knife-edge diffraction: Fresnel-Kirchhoff parameter, single-edge loss
//! approximation and the Deygout multiple-edge construction.

use std::collections::VecDeque;

use thiserror::Error;

use crate::raster::Profile;

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Below this Fresnel parameter the edge is considered clear (0 dB).
pub const NU_CLEARANCE: f64 = -0.78;

pub const DEFAULT_MAX_EDGES: usize = 3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DiffractionError {
    #[error("distances and frequency must be positive (d1={d1}, d2={d2}, f={freq})")]
    NonPositiveGeometry { d1: f64, d2: f64, freq: f64 },
    #[error("profile needs at least 3 samples, got {0}")]
    DegenerateProfile(usize),
    #[error("max_edges must be at least 1")]
    InvalidEdgeBudget,
}

/// Fresnel parameter for an obstruction `h` meters above the ray at
/// distances `d1`/`d2` from the terminals.
pub fn fresnel_nu(h: f64, d1: f64, d2: f64, freq: f64) -> Result<f64, DiffractionError> {
    if !(d1 > 0.0 && d2 > 0.0 && freq > 0.0) {
        return Err(DiffractionError::NonPositiveGeometry { d1, d2, freq });
    }
    let wavelength = SPEED_OF_LIGHT / freq;
    Ok(h * ((2.0 / wavelength) * (1.0 / d1 + 1.0 / d2)).sqrt())
}

/// Single knife-edge loss J(nu) in dB.
pub fn knife_edge_loss(nu: f64) -> f64 {
    if nu <= NU_CLEARANCE {
        return 0.0;
    }
    let v = nu - 0.1;
    6.9 + 20.0 * ((v * v + 1.0).sqrt() + v).log10()
}

/// One diffracting edge selected by the Deygout recursion.
///
/// `d1`/`d2` are measured within the sub-path the edge was selected from, so
/// for the principal edge they sum to the full path length.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EdgeObstruction {
    pub index: usize,
    pub d1: f64,
    pub d2: f64,
    /// Height of the surface above the (sub-)path ray, signed.
    pub h: f64,
    pub nu: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiffractionResult {
    pub loss_db: f64,
    /// Principal edge first, then breadth-first through the sub-paths.
    pub edges: Vec<EdgeObstruction>,
}

struct Segment {
    start: usize,
    start_h: f64,
    end: usize,
    end_h: f64,
}

/// Deygout multiple knife-edge loss over the surface profile.
///
/// Terminal heights are taken above the bare ground at each profile end. At
/// most `max_edges` edges are accumulated; sub-paths are explored
/// breadth-first so the budget is spent on the most significant edges.
pub fn deygout_loss(
    profile: &Profile,
    freq: f64,
    tx_h_agl: f64,
    rx_h_agl: f64,
    max_edges: usize,
) -> Result<DiffractionResult, DiffractionError> {
    let n = profile.len();
    if n < 3 {
        return Err(DiffractionError::DegenerateProfile(n));
    }
    if max_edges == 0 {
        return Err(DiffractionError::InvalidEdgeBudget);
    }
    if !(freq > 0.0) {
        return Err(DiffractionError::NonPositiveGeometry {
            d1: profile.length(),
            d2: profile.length(),
            freq,
        });
    }
    let mut edges = Vec::new();
    let mut queue = VecDeque::from([Segment {
        start: 0,
        start_h: profile.ground[0] + tx_h_agl,
        end: n - 1,
        end_h: profile.ground[n - 1] + rx_h_agl,
    }]);
    while let Some(seg) = queue.pop_front() {
        if edges.len() >= max_edges {
            break;
        }
        let Some(edge) = principal_edge(profile, &seg, freq)? else {
            continue;
        };
        edges.push(edge);
        let apex = profile.surface[edge.index];
        queue.push_back(Segment {
            start: seg.start,
            start_h: seg.start_h,
            end: edge.index,
            end_h: apex,
        });
        queue.push_back(Segment {
            start: edge.index,
            start_h: apex,
            end: seg.end,
            end_h: seg.end_h,
        });
    }
    let loss_db = edges.iter().map(|e| knife_edge_loss(e.nu)).sum();
    Ok(DiffractionResult { loss_db, edges })
}

fn principal_edge(
    profile: &Profile,
    seg: &Segment,
    freq: f64,
) -> Result<Option<EdgeObstruction>, DiffractionError> {
    if seg.end <= seg.start + 1 {
        return Ok(None);
    }
    let d_start = profile.distances[seg.start];
    let span = profile.distances[seg.end] - d_start;
    let mut best: Option<EdgeObstruction> = None;
    for i in seg.start + 1..seg.end {
        let d1 = profile.distances[i] - d_start;
        let d2 = profile.distances[seg.end] - profile.distances[i];
        let ray = seg.start_h + (seg.end_h - seg.start_h) * d1 / span;
        let h = profile.surface[i] - ray;
        let nu = fresnel_nu(h, d1, d2, freq)?;
        if best.is_none_or(|b| nu > b.nu) {
            best = Some(EdgeObstruction {
                index: i,
                d1,
                d2,
                h,
                nu,
            });
        }
    }
    Ok(best.filter(|e| e.nu > NU_CLEARANCE))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn nu_examples() {
        assert_eq!(fresnel_nu(0.0, 500.0, 500.0, 1e9).unwrap(), 0.0);
        // independent evaluation: 10 * sqrt(2/0.299792458 * (2/500)) = 1.63356
        assert_abs_diff_eq!(fresnel_nu(10.0, 500.0, 500.0, 1e9).unwrap(), 1.633, epsilon = 0.005);
        assert_abs_diff_eq!(fresnel_nu(-10.0, 500.0, 500.0, 1e9).unwrap(), -1.633, epsilon = 0.005);
        assert!(fresnel_nu(1.0, 0.0, 5.0, 1e9).is_err());
    }

    #[test]
    fn nu_scales_with_sqrt_frequency() {
        let a = fresnel_nu(7.0, 300.0, 900.0, 7e8).unwrap();
        let b = fresnel_nu(7.0, 300.0, 900.0, 2.8e9).unwrap();
        assert_abs_diff_eq!(b / a, 2.0, epsilon = 1e-12);
    }

    #[test]
    fn loss_examples() {
        assert_abs_diff_eq!(knife_edge_loss(0.0), 6.03, epsilon = 0.02);
        assert_eq!(knife_edge_loss(-0.78), 0.0);
        assert_eq!(knife_edge_loss(-5.0), 0.0);
    }

    #[test]
    fn loss_monotone_on_dense_grid() {
        let mut prev = knife_edge_loss(-0.78);
        for i in 1..=10_780 {
            let nu = -0.78 + i as f64 * 1e-3;
            let j = knife_edge_loss(nu);
            assert!(j >= prev, "J decreased at nu={nu}");
            prev = j;
        }
    }

    fn flat(n: usize, len: f64) -> Profile {
        Profile::from_heights(len, vec![100.0; n], vec![0.0; n])
    }

    #[test]
    fn flat_profile_is_clear() {
        let r = deygout_loss(&flat(65, 1000.0), 1e9, 30.0, 30.0, 3).unwrap();
        assert_eq!(r.loss_db, 0.0);
        assert!(r.edges.is_empty());
    }

    #[test]
    fn grazing_edge_costs_six_db() {
        // ray at 130 m end to end; apex at the midpoint touches it
        let mut p = flat(5, 1000.0);
        p.clutter[2] = 30.0;
        p.surface[2] = 130.0;
        let r = deygout_loss(&p, 1e9, 30.0, 30.0, 3).unwrap();
        assert_eq!(r.edges.len(), 1);
        assert_abs_diff_eq!(r.loss_db, 6.03, epsilon = 0.05);
        assert_abs_diff_eq!(r.edges[0].d1 + r.edges[0].d2, 1000.0);
    }

    #[test]
    fn two_obstacles_not_less_than_one() {
        let mk = |idx: &[usize]| {
            let mut p = flat(5, 1000.0);
            for &i in idx {
                p.clutter[i] = 40.0;
                p.surface[i] = 140.0;
            }
            deygout_loss(&p, 1e9, 30.0, 30.0, 3).unwrap().loss_db
        };
        let both = mk(&[1, 3]);
        assert!(both >= mk(&[1]));
        assert!(both >= mk(&[3]));
        // hand evaluation: principal edge at index 1 (tie -> lower index),
        // h=10, d1=250, d2=750
        let nu1 = fresnel_nu(10.0, 250.0, 750.0, 1e9).unwrap();
        // sub-path apex(140 @250) -> rx(130 @1000): edge 3 at 750, ray 140-10*500/750
        let nu3 = fresnel_nu(140.0 - (140.0 - 10.0 * 500.0 / 750.0), 500.0, 250.0, 1e9).unwrap();
        assert_abs_diff_eq!(both, knife_edge_loss(nu1) + knife_edge_loss(nu3), epsilon = 1e-9);
    }

    #[test]
    fn degenerate_inputs() {
        let p = flat(2, 10.0);
        assert_eq!(
            deygout_loss(&p, 1e9, 1.0, 1.0, 3),
            Err(DiffractionError::DegenerateProfile(2))
        );
        assert_eq!(
            deygout_loss(&flat(5, 10.0), 1e9, 1.0, 1.0, 0),
            Err(DiffractionError::InvalidEdgeBudget)
        );
    }

    #[test]
    fn edge_budget_is_respected() {
        let n = 33;
        let ground: Vec<f64> = (0..n).map(|i| 100.0 + if i % 4 == 2 { 25.0 } else { 0.0 }).collect();
        let p = Profile::from_heights(3200.0, ground, vec![0.0; n]);
        for budget in 1..=6 {
            let r = deygout_loss(&p, 2e9, 10.0, 1.5, budget).unwrap();
            assert!(r.edges.len() <= budget);
        }
    }

    fn bumpy(bumps: &[f64]) -> Profile {
        let ground: Vec<f64> = (0..bumps.len()).map(|i| 150.0 + 5.0 * ((i as f64) * 0.4).sin()).collect();
        Profile::from_heights(2000.0, ground, bumps.to_vec())
    }

    #[test]
    fn multi_edge_loss_is_not_monotone_in_clutter() {
        // Raising index 12 promotes it to principal edge; the re-partitioned
        // sub-paths then diffract less. Inherent to the Deygout construction.
        let mut bumps = vec![0.0; 31];
        bumps[6] = 36.03303733341053;
        bumps[12] = 36.949123491483185;
        bumps[24] = 39.843067881782545;
        bumps[29] = 29.772483244677357;
        let before = deygout_loss(&bumpy(&bumps), 9e8, 25.0, 1.5, 3).unwrap().loss_db;
        bumps[12] += 16.39882352227693;
        let after = deygout_loss(&bumpy(&bumps), 9e8, 25.0, 1.5, 3).unwrap().loss_db;
        assert!(after < before);
    }

    proptest! {
        #[test]
        fn loss_nonnegative(bumps in proptest::collection::vec(0.0f64..40.0, 31)) {
            let l = deygout_loss(&bumpy(&bumps), 9e8, 25.0, 1.5, DEFAULT_MAX_EDGES).unwrap().loss_db;
            prop_assert!(l >= 0.0);
        }

        #[test]
        fn principal_edge_loss_monotone_in_clutter(
            bumps in proptest::collection::vec(0.0f64..40.0, 31),
            idx in 1usize..30,
            extra in 0.0f64..30.0,
        ) {
            let l0 = deygout_loss(&bumpy(&bumps), 9e8, 25.0, 1.5, 1).unwrap().loss_db;
            let mut raised = bumps;
            raised[idx] += extra;
            let l1 = deygout_loss(&bumpy(&raised), 9e8, 25.0, 1.5, 1).unwrap().loss_db;
            prop_assert!(l1 >= l0, "loss fell from {} to {}", l0, l1);
        }
    }
}
