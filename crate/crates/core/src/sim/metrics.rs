//! Day-level tracking error statistics over the 5-minute-averaged error
//! series: root-mean-square error, maximum absolute error, absolute energy
//! error, and the error distribution.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::mpc::DispatchPlan;
use crate::STEPS_PER_SLOT;

use super::record::RunRecord;
use super::SimError;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Metrics {
    pub version: u32,
    /// Root-mean-square of the slot-mean errors, kW.
    pub rmse_kw: f64,
    /// Largest absolute slot-mean error, kW.
    pub mae_kw: f64,
    /// Sum of absolute slot energy errors, kWh.
    pub aee_kwh: f64,
    /// Slot-mean error per slot, kW.
    pub slot_mean_error_kw: Vec<f64>,
    /// Sorted slot-mean errors (the empirical error distribution), kW.
    pub cdf_kw: Vec<f64>,
}

impl Metrics {
    /// Absolute error at a percentile of the slot-error distribution
    /// (nearest-rank on |e|).
    pub fn abs_error_percentile_kw(&self, pct: f64) -> f64 {
        assert!((0.0..=100.0).contains(&pct));
        if self.cdf_kw.is_empty() {
            return 0.0;
        }
        let mut abs: Vec<f64> = self.cdf_kw.iter().map(|e| e.abs()).collect();
        abs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let rank = ((pct / 100.0) * abs.len() as f64).ceil() as usize;
        abs[rank.saturating_sub(1).min(abs.len() - 1)]
    }

    pub fn write_json(&self, path: &Path) -> Result<(), SimError> {
        let text = serde_json::to_string_pretty(self).map_err(|e| SimError::Parse {
            path: path.to_path_buf(),
            detail: e.to_string(),
        })?;
        fs::write(path, text + "\n").map_err(|e| SimError::Io {
            path: path.to_path_buf(),
            detail: e.to_string(),
        })
    }

    pub fn read_json(path: &Path) -> Result<Self, SimError> {
        let text = fs::read_to_string(path).map_err(|e| SimError::Io {
            path: path.to_path_buf(),
            detail: e.to_string(),
        })?;
        serde_json::from_str(&text).map_err(|e| SimError::Parse {
            path: path.to_path_buf(),
            detail: e.to_string(),
        })
    }
}

/// Compute metrics from a completed run record. The plan values embedded in
/// the record are used, so a record file is self-contained.
pub fn compute_metrics(record: &RunRecord) -> Metrics {
    let n_slots = record.num_slots();
    let slot_errors: Vec<f64> = (0..n_slots)
        .map(|y| record.slot_mean_error_kw(y))
        .collect();
    metrics_from_slot_errors(&slot_errors)
}

/// Metrics for an externally supplied plan (e.g. recomputing against an
/// alternative plan file).
pub fn compute_metrics_with_plan(record: &RunRecord, plan: &DispatchPlan) -> Metrics {
    let n_slots = record.num_slots();
    let slot_errors: Vec<f64> = (0..n_slots)
        .map(|y| {
            let start = y * STEPS_PER_SLOT;
            record.steps[start..start + STEPS_PER_SLOT]
                .iter()
                .map(|s| plan.at_slot(y) - s.p0_kw)
                .sum::<f64>()
                / STEPS_PER_SLOT as f64
        })
        .collect();
    metrics_from_slot_errors(&slot_errors)
}

fn metrics_from_slot_errors(slot_errors: &[f64]) -> Metrics {
    let n = slot_errors.len().max(1) as f64;
    let rmse = (slot_errors.iter().map(|e| e * e).sum::<f64>() / n).sqrt();
    let mae = slot_errors.iter().fold(0.0f64, |acc, e| acc.max(e.abs()));
    // each slot-mean error sustained over 5 minutes is e/12 kWh
    let aee = slot_errors.iter().map(|e| e.abs() / 12.0).sum::<f64>();
    let mut cdf = slot_errors.to_vec();
    cdf.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Metrics {
        version: super::scenario::SCHEMA_VERSION,
        rmse_kw: rmse,
        mae_kw: mae,
        aee_kwh: aee,
        slot_mean_error_kw: slot_errors.to_vec(),
        cdf_kw: cdf,
    }
}

#[cfg(test)]
mod tests {
    use super::super::record::{RunRecord, StepRecord};
    use super::*;
    use crate::{SLOTS_PER_DAY, STEPS_PER_DAY};

    fn record_with_errors(errors: &[f64]) -> RunRecord {
        // plan 10 kW; realized = plan - error for every step of the slot
        let mut rec = RunRecord::default();
        for k in 0..STEPS_PER_DAY {
            let e = errors[k / STEPS_PER_SLOT];
            rec.steps.push(StepRecord {
                k,
                plan_kw: 10.0,
                p0_kw: 10.0 - e,
                q0_kvar: 0.0,
                p0_meas_kw: 10.0 - e,
                bess: vec![],
                ev: vec![],
                solver: None,
                events: vec![],
            });
        }
        rec
    }

    #[test]
    fn zero_error_series() {
        let m = compute_metrics(&record_with_errors(&vec![0.0; SLOTS_PER_DAY]));
        assert_eq!(m.rmse_kw, 0.0);
        assert_eq!(m.mae_kw, 0.0);
        assert_eq!(m.aee_kwh, 0.0);
    }

    #[test]
    fn constant_one_kw_error_all_day() {
        let m = compute_metrics(&record_with_errors(&vec![1.0; SLOTS_PER_DAY]));
        assert!((m.rmse_kw - 1.0).abs() < 1e-12);
        assert!((m.mae_kw - 1.0).abs() < 1e-12);
        assert!((m.aee_kwh - 24.0).abs() < 1e-9);
    }

    #[test]
    fn single_hot_slot() {
        let mut errors = vec![0.0; SLOTS_PER_DAY];
        errors[100] = 10.0;
        let m = compute_metrics(&record_with_errors(&errors));
        assert!((m.mae_kw - 10.0).abs() < 1e-12);
        assert!((m.rmse_kw - 10.0 / (SLOTS_PER_DAY as f64).sqrt()).abs() < 1e-12);
        assert!((m.aee_kwh - 10.0 / 12.0).abs() < 1e-12);
    }

    #[test]
    fn invariants_hold() {
        let errors: Vec<f64> = (0..SLOTS_PER_DAY)
            .map(|y| ((y * 37 % 17) as f64 - 8.0) * 0.3)
            .collect();
        let m = compute_metrics(&record_with_errors(&errors));
        assert!(m.rmse_kw <= m.mae_kw + 1e-12);
        assert!(m.aee_kwh >= 0.0);
        for w in m.cdf_kw.windows(2) {
            assert!(w[0] <= w[1]);
        }
    }

    #[test]
    fn percentile_of_abs_errors() {
        let mut errors = vec![0.0; SLOTS_PER_DAY];
        errors[0] = -5.0;
        let m = compute_metrics(&record_with_errors(&errors));
        assert!(m.abs_error_percentile_kw(95.0) < 5.0);
        assert!((m.abs_error_percentile_kw(100.0) - 5.0).abs() < 1e-12);
    }
}
