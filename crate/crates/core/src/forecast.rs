//! Short-term forecasts of the uncontrollable injections over the residual
//! horizon of the current 5-minute slot.
//!
//! Demand: the day-ahead 5-minute profile is upsampled to 30 seconds by
//! linear interpolation, then the entry at the current step is replaced by
//! the latest power measurement (persistence). PV: the latest irradiance and
//! air temperature measurements are held constant over the horizon and mapped
//! through a rated-power plant model.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::{slot_end, SLOTS_PER_DAY, STEPS_PER_DAY, STEPS_PER_SLOT};

#[derive(Debug, Error)]
pub enum ForecastError {
    #[error("day-ahead profile has {0} entries, expected {SLOTS_PER_DAY}")]
    ProfileLength(usize),
    #[error("step index {0} outside the day (0..{STEPS_PER_DAY})")]
    StepOutOfRange(usize),
}

/// PV plant parameters for the irradiance-to-power model.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PvPlant {
    pub id: String,
    pub bus: String,
    /// Rated power at standard test conditions, kW.
    pub rating_kw: f64,
    /// Nominal operating cell temperature, degrees C.
    pub noct_c: f64,
    /// Power temperature coefficient per degree C (negative).
    pub gamma_per_c: f64,
}

impl PvPlant {
    pub fn defaults(id: &str, bus: &str, rating_kw: f64) -> Self {
        Self {
            id: id.into(),
            bus: bus.into(),
            rating_kw,
            noct_c: 45.0,
            gamma_per_c: -0.004,
        }
    }
}

/// Forecasts over the residual horizon `k..=slot_end(k)`, aligned with the
/// scenario's load and PV rosters.
#[derive(Debug, Clone, PartialEq)]
pub struct ForecastSet {
    /// Step the forecast was issued at.
    pub issued_at: usize,
    /// `[load][offset]` demand, kW (consumption positive).
    pub load_p_kw: Vec<Vec<f64>>,
    /// `[load][offset]` reactive demand, kVAr.
    pub load_q_kvar: Vec<Vec<f64>>,
    /// `[plant][offset]` PV production, kW (nonnegative; negated when
    /// composed into nodal injections).
    pub pv_p_kw: Vec<Vec<f64>>,
    /// `[plant][offset]` PV reactive power, kVAr (zero: PV runs at unity).
    pub pv_q_kvar: Vec<Vec<f64>>,
}

impl ForecastSet {
    pub fn horizon_len(&self) -> usize {
        self.load_p_kw
            .first()
            .or(self.pv_p_kw.first())
            .map(|s| s.len())
            .unwrap_or(0)
    }
}

/// Latest measurements available to the forecaster.
#[derive(Debug, Clone)]
pub struct MeasurementSnapshot {
    /// Per-load active power, kW (consumption positive).
    pub load_p_kw: Vec<f64>,
    /// Per-load reactive power, kVAr.
    pub load_q_kvar: Vec<f64>,
    pub ghi_wm2: f64,
    pub t_air_c: f64,
}

/// Upsample a 288-entry day-ahead profile to the 30-second grid and slice
/// out the residual horizon of the slot containing `k`. Interior points are
/// linearly interpolated between consecutive 5-minute anchors; after the last
/// anchor the profile is held flat.
pub fn upsample_day_ahead(profile_5min: &[f64], k: usize) -> Result<Vec<f64>, ForecastError> {
    if profile_5min.len() != SLOTS_PER_DAY {
        return Err(ForecastError::ProfileLength(profile_5min.len()));
    }
    if k >= STEPS_PER_DAY {
        return Err(ForecastError::StepOutOfRange(k));
    }
    let k_bar = slot_end(k);
    Ok((k..=k_bar).map(|j| interp_at(profile_5min, j)).collect())
}

fn interp_at(profile: &[f64], j: usize) -> f64 {
    let y = j / STEPS_PER_SLOT;
    let frac = (j % STEPS_PER_SLOT) as f64 / STEPS_PER_SLOT as f64;
    if y + 1 < profile.len() {
        profile[y] + (profile[y + 1] - profile[y]) * frac
    } else {
        profile[y]
    }
}

/// Replace the entry at the current step with the latest measurement. The
/// rest of the horizon is left to the day-ahead model.
pub fn persist_correct(horizon: &mut [f64], latest_meas: f64) {
    assert!(!horizon.is_empty(), "horizon must be non-empty");
    horizon[0] = latest_meas;
}

/// PV production (kW) for a given irradiance and air temperature: rated-power
/// scaling by irradiance with a cell-temperature correction, clipped to the
/// plant rating.
pub fn pv_power(ghi_wm2: f64, t_air_c: f64, plant: &PvPlant) -> f64 {
    assert!(ghi_wm2 >= 0.0, "irradiance must be nonnegative");
    let t_cell = t_air_c + ghi_wm2 * (plant.noct_c - 20.0) / 800.0;
    let p = plant.rating_kw * (ghi_wm2 / 1000.0) * (1.0 + plant.gamma_per_c * (t_cell - 25.0));
    p.clamp(0.0, plant.rating_kw)
}

/// Assemble the full forecast set at step `k` from day-ahead demand profiles
/// and the latest measurements. `load_power_factor` gives the per-load
/// (lagging) power factor used to derive reactive demand.
pub fn forecast_all(
    day_ahead_load_kw: &[Vec<f64>],
    load_power_factor: &[f64],
    pv_plants: &[PvPlant],
    k: usize,
    meas: &MeasurementSnapshot,
) -> Result<ForecastSet, ForecastError> {
    let mut load_p = Vec::with_capacity(day_ahead_load_kw.len());
    let mut load_q = Vec::with_capacity(day_ahead_load_kw.len());
    for (li, profile) in day_ahead_load_kw.iter().enumerate() {
        let mut horizon = upsample_day_ahead(profile, k)?;
        persist_correct(&mut horizon, meas.load_p_kw[li]);
        let tan_phi = tan_from_power_factor(load_power_factor[li]);
        let mut q: Vec<f64> = horizon.iter().map(|p| p * tan_phi).collect();
        persist_correct(&mut q, meas.load_q_kvar[li]);
        load_p.push(horizon);
        load_q.push(q);
    }
    let horizon_len = slot_end(k) - k + 1;
    let mut pv_p = Vec::with_capacity(pv_plants.len());
    let mut pv_q = Vec::with_capacity(pv_plants.len());
    for plant in pv_plants {
        let p = pv_power(meas.ghi_wm2.max(0.0), meas.t_air_c, plant);
        pv_p.push(vec![p; horizon_len]);
        pv_q.push(vec![0.0; horizon_len]);
    }
    Ok(ForecastSet {
        issued_at: k,
        load_p_kw: load_p,
        load_q_kvar: load_q,
        pv_p_kw: pv_p,
        pv_q_kvar: pv_q,
    })
}

/// Perfect-foresight forecast: the true trace slice over the residual
/// horizon. Used to isolate controller behavior from forecast error.
pub fn forecast_from_truth(
    trace: &crate::resources::UncontrollableTrace,
    k: usize,
) -> Result<ForecastSet, ForecastError> {
    if k >= STEPS_PER_DAY {
        return Err(ForecastError::StepOutOfRange(k));
    }
    let k_bar = slot_end(k);
    let slice = |s: &Vec<f64>| s[k..=k_bar].to_vec();
    Ok(ForecastSet {
        issued_at: k,
        load_p_kw: trace.load_p_kw.iter().map(slice).collect(),
        load_q_kvar: trace.load_q_kvar.iter().map(slice).collect(),
        pv_p_kw: trace.pv_p_kw.iter().map(slice).collect(),
        pv_q_kvar: trace
            .pv_p_kw
            .iter()
            .map(|s| vec![0.0; s[k..=k_bar].len()])
            .collect(),
    })
}

pub fn tan_from_power_factor(pf: f64) -> f64 {
    debug_assert!(pf > 0.0 && pf <= 1.0);
    (pf.acos()).tan()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_profile_upsampled_is_constant() {
        let profile = vec![7.5; SLOTS_PER_DAY];
        let h = upsample_day_ahead(&profile, 123).unwrap();
        assert_eq!(h.len(), 7); // 123..=129
        assert!(h.iter().all(|v| (*v - 7.5).abs() < 1e-12));
    }

    #[test]
    fn linear_ramp_between_anchors() {
        let mut profile = vec![0.0; SLOTS_PER_DAY];
        profile[1] = 10.0;
        // slot 0 anchors 0 kW at step 0, 10 kW at step 10
        let h = upsample_day_ahead(&profile, 0).unwrap();
        let expected: Vec<f64> = (0..10).map(|i| i as f64).collect();
        for (got, want) in h.iter().zip(&expected) {
            assert!((got - want).abs() < 1e-12);
        }
    }

    #[test]
    fn upsampling_hits_anchor_points() {
        let profile: Vec<f64> = (0..SLOTS_PER_DAY).map(|y| (y as f64 * 0.37).sin()).collect();
        for y in (0..SLOTS_PER_DAY).step_by(13) {
            let h = upsample_day_ahead(&profile, y * STEPS_PER_SLOT).unwrap();
            assert!((h[0] - profile[y]).abs() < 1e-12);
        }
    }

    #[test]
    fn last_slot_held_flat() {
        let mut profile = vec![1.0; SLOTS_PER_DAY];
        profile[SLOTS_PER_DAY - 1] = 4.0;
        let h = upsample_day_ahead(&profile, 2875).unwrap();
        assert_eq!(h.len(), 5); // 2875..=2879
        assert!(h.iter().all(|v| (*v - 4.0).abs() < 1e-12));
    }

    #[test]
    fn step_out_of_range_rejected() {
        let profile = vec![0.0; SLOTS_PER_DAY];
        assert!(upsample_day_ahead(&profile, STEPS_PER_DAY).is_err());
        assert!(matches!(
            upsample_day_ahead(&profile[..100], 0),
            Err(ForecastError::ProfileLength(100))
        ));
    }

    #[test]
    fn persistence_replaces_only_first_entry() {
        let mut h = vec![5.0, 5.0, 5.0];
        persist_correct(&mut h, 7.0);
        assert_eq!(h, vec![7.0, 5.0, 5.0]);
        // idempotent when the measurement matches
        let mut h2 = vec![5.0, 6.0];
        persist_correct(&mut h2, 5.0);
        assert_eq!(h2, vec![5.0, 6.0]);
        let mut single = vec![3.0];
        persist_correct(&mut single, 9.0);
        assert_eq!(single, vec![9.0]);
    }

    #[test]
    fn pv_power_zero_irradiance() {
        let plant = PvPlant::defaults("PV1", "B14", 13.0);
        assert_eq!(pv_power(0.0, -10.0, &plant), 0.0);
        assert_eq!(pv_power(0.0, 45.0, &plant), 0.0);
    }

    #[test]
    fn pv_power_rated_at_standard_cell_conditions() {
        let plant = PvPlant::defaults("PV1", "B14", 13.0);
        // t_cell = t_air + 1000 * 25/800 = t_air + 31.25 = 25 => t_air = -6.25
        let p = pv_power(1000.0, -6.25, &plant);
        assert!((p - 13.0).abs() < 1e-12);
    }

    #[test]
    fn pv_power_matches_formula() {
        let plant = PvPlant::defaults("PV1", "B14", 13.0);
        let (ghi, t_air) = (800.0, 20.0);
        // independent evaluation of the stated model
        let t_cell = 20.0 + 800.0 * 25.0 / 800.0;
        let expected = 13.0 * 0.8 * (1.0 - 0.004 * (t_cell - 25.0));
        assert!((pv_power(ghi, t_air, &plant) - expected).abs() < 1e-12);
        assert!((expected - 9.568).abs() < 1e-12);
    }

    #[test]
    fn pv_power_monotone_in_irradiance_until_clip() {
        let plant = PvPlant::defaults("PV1", "B14", 13.0);
        let mut last = 0.0;
        for g in (0..=1200).step_by(10) {
            let p = pv_power(g as f64, 15.0, &plant);
            assert!(p >= last - 1e-12);
            last = p;
        }
    }

    #[test]
    fn forecast_all_composes_horizon() {
        let day_ahead = vec![vec![10.0; SLOTS_PER_DAY]];
        let meas = MeasurementSnapshot {
            load_p_kw: vec![11.5],
            load_q_kvar: vec![3.0],
            ghi_wm2: 500.0,
            t_air_c: 15.0,
        };
        let plants = vec![PvPlant::defaults("PV1", "B14", 13.0)];
        let f = forecast_all(&day_ahead, &[0.95], &plants, 0, &meas).unwrap();
        assert_eq!(f.horizon_len(), 10); // midnight: steps 0..=9
        assert!((f.load_p_kw[0][0] - 11.5).abs() < 1e-12);
        assert!((f.load_p_kw[0][1] - 10.0).abs() < 1e-12);
        assert!((f.load_q_kvar[0][0] - 3.0).abs() < 1e-12);
        let tan_phi = tan_from_power_factor(0.95);
        assert!((f.load_q_kvar[0][1] - 10.0 * tan_phi).abs() < 1e-12);
        let expected_pv = pv_power(500.0, 15.0, &plants[0]);
        assert!(f.pv_p_kw[0].iter().all(|p| (*p - expected_pv).abs() < 1e-12));
        assert!(f.pv_q_kvar[0].iter().all(|q| *q == 0.0));

        let f_end = forecast_all(&day_ahead, &[0.95], &plants, 2875, &meas).unwrap();
        assert_eq!(f_end.horizon_len(), 5); // 2875..=2879
    }

    #[test]
    fn perfect_foresight_equals_trace_slice() {
        let trace = crate::resources::UncontrollableTrace {
            load_p_kw: vec![(0..STEPS_PER_DAY).map(|k| k as f64 * 0.01).collect()],
            load_q_kvar: vec![vec![1.0; STEPS_PER_DAY]],
            pv_p_kw: vec![vec![2.0; STEPS_PER_DAY]],
            ghi_wm2: vec![0.0; STEPS_PER_DAY],
            t_air_c: vec![10.0; STEPS_PER_DAY],
        };
        let f = forecast_from_truth(&trace, 47).unwrap();
        assert_eq!(f.horizon_len(), 3); // 47..=49
        assert_eq!(f.load_p_kw[0], trace.load_p_kw[0][47..=49].to_vec());
    }
}
