//! Within-slot accounting of the dispatch energy error.
//!
//! The ledger holds the gcp power measurements of the steps already elapsed
//! in the current 5-minute slot. The energy not delivered so far (incurred
//! error) plus the anticipated error over the residual horizon is what the
//! controller drives to zero by slot end.

use serde::{Deserialize, Serialize};

use crate::{slot_end, slot_start, DispatchPlan, STEPS_PER_SLOT, STEP_HOURS};

/// How the energy-error sums are scaled. `PerStep` weights every elapsed or
/// residual step by the step energy (30/3600 h), which is the physically
/// consistent reading. `HorizonScaled` reproduces the alternative where the
/// whole sum is multiplied by the elapsed/residual interval length; it is
/// kept for comparison only.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PrefactorConvention {
    #[default]
    PerStep,
    HorizonScaled,
}

/// Measurement memory for the current slot.
#[derive(Debug, Clone, Default)]
pub struct TrackingLedger {
    k: usize,
    /// gcp power measurements for steps `slot_start(k) ..= k-1`, kW.
    meas_kw: Vec<f64>,
}

impl TrackingLedger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn slot_start(&self) -> usize {
        slot_start(self.k)
    }

    pub fn slot_end(&self) -> usize {
        slot_end(self.k)
    }

    pub fn measurements(&self) -> &[f64] {
        &self.meas_kw
    }

    /// Record the measured gcp power of the step just completed and move to
    /// the next step. Crossing a slot boundary clears the memory.
    pub fn advance(&mut self, p0_meas_kw: f64) {
        self.meas_kw.push(p0_meas_kw);
        self.k += 1;
        if self.k % STEPS_PER_SLOT == 0 {
            self.meas_kw.clear();
        }
    }

    /// Energy (kWh) the slot is short so far: sum of per-step differences
    /// between the plan and the measured gcp power over the elapsed steps.
    pub fn incurred_error(&self, plan: &DispatchPlan, convention: PrefactorConvention) -> f64 {
        let start = self.slot_start();
        let sum_kw: f64 = self
            .meas_kw
            .iter()
            .enumerate()
            .map(|(off, meas)| plan.at_step(start + off) - meas)
            .sum();
        match convention {
            PrefactorConvention::PerStep => STEP_HOURS * sum_kw,
            PrefactorConvention::HorizonScaled => {
                let elapsed = (self.k + 1 - start) as f64;
                STEP_HOURS * elapsed * sum_kw
            }
        }
    }
}

/// Coefficient applied to each residual-step difference `plan_j - p0_j` in
/// the anticipated-error expression, in kWh per kW.
pub fn anticipated_error_coefficients(k: usize, convention: PrefactorConvention) -> f64 {
    match convention {
        PrefactorConvention::PerStep => STEP_HOURS,
        PrefactorConvention::HorizonScaled => STEP_HOURS * (slot_end(k) - k) as f64,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::SLOTS_PER_DAY;

    fn flat_plan(kw: f64) -> DispatchPlan {
        DispatchPlan::new(vec![kw; SLOTS_PER_DAY], 1000.0).unwrap()
    }

    #[test]
    fn empty_slot_has_zero_incurred_error() {
        let ledger = TrackingLedger::new();
        assert_eq!(
            ledger.incurred_error(&flat_plan(10.0), PrefactorConvention::PerStep),
            0.0
        );
    }

    #[test]
    fn five_short_steps_sum_per_step_energy() {
        // plan 10 kW, measured 4 kW for 5 steps: 6 kW * 5 * 30/3600 h
        let mut ledger = TrackingLedger::new();
        for _ in 0..5 {
            ledger.advance(4.0);
        }
        let eps = ledger.incurred_error(&flat_plan(10.0), PrefactorConvention::PerStep);
        assert!((eps - 0.25).abs() < 1e-12);
    }

    #[test]
    fn alternating_errors_cancel() {
        let mut ledger = TrackingLedger::new();
        for i in 0..6 {
            ledger.advance(if i % 2 == 0 { 14.0 } else { 6.0 });
        }
        let eps = ledger.incurred_error(&flat_plan(10.0), PrefactorConvention::PerStep);
        assert!(eps.abs() < 1e-12);
    }

    #[test]
    fn slot_boundary_resets_memory() {
        let mut ledger = TrackingLedger::new();
        for _ in 0..STEPS_PER_SLOT {
            ledger.advance(0.0);
        }
        assert_eq!(ledger.k(), 10);
        assert!(ledger.measurements().is_empty());
        assert_eq!(
            ledger.incurred_error(&flat_plan(10.0), PrefactorConvention::PerStep),
            0.0
        );
    }

    #[test]
    fn horizon_scaled_convention_multiplies_by_elapsed_interval() {
        let mut ledger = TrackingLedger::new();
        for _ in 0..5 {
            ledger.advance(4.0);
        }
        // same sum, scaled by (k + 1 - slot_start) = 6
        let eps = ledger.incurred_error(&flat_plan(10.0), PrefactorConvention::HorizonScaled);
        assert!((eps - 0.25 * 6.0).abs() < 1e-12);
    }

    #[test]
    fn anticipated_coefficient_is_step_energy() {
        assert_eq!(
            anticipated_error_coefficients(3, PrefactorConvention::PerStep),
            STEP_HOURS
        );
        // residual length k̄ - k = 6 at k = 3
        assert_eq!(
            anticipated_error_coefficients(3, PrefactorConvention::HorizonScaled),
            STEP_HOURS * 6.0
        );
    }
}
