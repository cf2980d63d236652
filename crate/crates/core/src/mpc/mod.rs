//! Receding-horizon tracking controller: every 30 seconds an LP over the
//! residual horizon of the current 5-minute slot trades the slot's energy
//! error against EV charging goals and battery usage, subject to linearized
//! grid constraints and resource dynamics.

mod assemble;
mod ledger;

pub use assemble::{
    assemble, solve, AssembleInputs, MpcProblem, MpcSolution, ObjectiveTerms, PlugSession,
    SolverOutcome,
};
pub use ledger::{anticipated_error_coefficients, PrefactorConvention, TrackingLedger};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::{SLOTS_PER_DAY, STEPS_PER_SLOT};

#[derive(Debug, Error)]
pub enum MpcError {
    #[error("dispatch plan has {0} entries, expected {SLOTS_PER_DAY}")]
    PlanLength(usize),
    #[error("dispatch plan slot {slot} is {value} kW, beyond the {limit} kVA gcp limit")]
    PlanBeyondCapacity { slot: usize, value: f64, limit: f64 },
    #[error("dimension mismatch between linearization and network: {0}")]
    Dimension(String),
    #[error("lp backend failed: {0}")]
    Backend(#[from] crate::lp::LpError),
    #[error("problem infeasible even with relaxed grid constraints at step {0}")]
    HardInfeasible(usize),
    #[error("solution violates {what} by {amount:.3e} at step {step}")]
    SolutionBound {
        what: String,
        amount: f64,
        step: usize,
    },
}

/// Day-ahead committed power profile at the grid connection point:
/// one value per 5-minute slot, kW, import positive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DispatchPlan {
    values_kw: Vec<f64>,
}

impl DispatchPlan {
    pub fn new(values_kw: Vec<f64>, s_max_kva: f64) -> Result<Self, MpcError> {
        if values_kw.len() != SLOTS_PER_DAY {
            return Err(MpcError::PlanLength(values_kw.len()));
        }
        for (slot, v) in values_kw.iter().enumerate() {
            if v.abs() > s_max_kva {
                return Err(MpcError::PlanBeyondCapacity {
                    slot,
                    value: *v,
                    limit: s_max_kva,
                });
            }
        }
        Ok(Self { values_kw })
    }

    /// Plan value for the slot containing control step `k`.
    pub fn at_step(&self, k: usize) -> f64 {
        self.values_kw[k / STEPS_PER_SLOT]
    }

    pub fn at_slot(&self, y: usize) -> f64 {
        self.values_kw[y]
    }

    pub fn values(&self) -> &[f64] {
        &self.values_kw
    }
}

/// Controller configuration knobs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MpcConfig {
    /// Segments of the inscribed polygons standing in for capability and
    /// gcp circles.
    pub polygon_segments: usize,
    /// Power terms of the objective (battery usage, EV wear) are expressed
    /// in units of this many kW, so the kWh-valued tracking term dominates.
    pub objective_power_scale_kw: f64,
    /// Penalty per p.u. of violation slack when grid constraints have to be
    /// relaxed to restore feasibility.
    pub grid_slack_penalty_per_pu: f64,
    /// Energy-error prefactor convention.
    pub prefactor: PrefactorConvention,
}

impl Default for MpcConfig {
    fn default() -> Self {
        Self {
            polygon_segments: 12,
            objective_power_scale_kw: 1000.0,
            grid_slack_penalty_per_pu: 1e4,
            prefactor: PrefactorConvention::PerStep,
        }
    }
}
