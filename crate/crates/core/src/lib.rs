//! Core library for tracking a day-ahead dispatch plan at the grid connection
//! point of an active distribution network.
//!
//! The pieces, bottom up:
//!
//! - [`grid`]: static network model, nonlinear AC power flow (the simulation
//!   ground truth), and its first-order linearization around an operating
//!   point (the constraint data used by the controller).
//! - [`resources`]: battery storage and EV charging station state models,
//!   converter capability polygons, and SoC-target interpolation.
//! - [`forecast`]: 5-minute-horizon forecasts of uncontrollable demand and PV
//!   at 30-second resolution (day-ahead upsampling, persistence correction,
//!   irradiance-to-power conversion).
//! - [`lp`]: a self-contained dense two-phase primal simplex solver with
//!   Bland's rule, behind a backend trait.
//! - [`mpc`]: assembles and solves the per-step tracking LP over the residual
//!   horizon of the current 5-minute slot.
//! - [`sim`]: the closed-loop day simulator, scenario file formats, bundled
//!   synthetic scenarios, and tracking metrics.
//!
//! Power sign convention used throughout: nodal powers are injections into
//! the grid, so generation is positive and consumption (loads, EV charging)
//! is negative. Grid-connection-point power `p0` is the import from the
//! upstream grid (positive when the network consumes).

pub mod forecast;
pub mod grid;
pub(crate) mod linalg;
pub mod lp;
pub mod mpc;
pub mod resources;
pub mod sim;

pub use forecast::ForecastSet;
pub use grid::{Linearization, NetworkModel, NodalInjections, OperatingPoint};
pub use lp::{LpBackend, LpResult, LpStatus, SimplexBackend, StandardFormLp};
pub use mpc::{DispatchPlan, MpcProblem, MpcSolution, TrackingLedger};
pub use resources::{BessState, EvSession, EvcsState, UncontrollableTrace};
pub use sim::{Metrics, RunRecord, Scenario};

/// Real-time control step length in seconds.
pub const STEP_SECONDS: f64 = 30.0;
/// Number of 30-second control steps per simulated day.
pub const STEPS_PER_DAY: usize = 2880;
/// Number of control steps per 5-minute dispatch slot.
pub const STEPS_PER_SLOT: usize = 10;
/// Number of 5-minute dispatch slots per day.
pub const SLOTS_PER_DAY: usize = 288;
/// Energy (kWh) contributed by 1 kW sustained over one control step.
pub const STEP_HOURS: f64 = STEP_SECONDS / 3600.0;

/// First step index of the 5-minute slot containing step `k`.
pub fn slot_start(k: usize) -> usize {
    (k / STEPS_PER_SLOT) * STEPS_PER_SLOT
}

/// Last step index of the 5-minute slot containing step `k`.
pub fn slot_end(k: usize) -> usize {
    slot_start(k) + STEPS_PER_SLOT - 1
}
