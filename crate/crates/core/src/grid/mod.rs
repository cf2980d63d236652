//! Static network model, AC power flow, and its first-order linearization.

mod linearization;
mod network;
mod power_flow;

pub use linearization::{linearize, Linearization};
pub use network::{
    build_network, Bus, BusDescription, BusId, BusKind, Line, LineDescription,
    NetworkDescription, NetworkModel, PerUnitBase,
};
pub use power_flow::{solve_power_flow, NodalInjections, OperatingPoint, PowerFlowOptions};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum GridError {
    #[error("network has no slack bus")]
    MissingSlack,
    #[error("network has more than one slack bus ({0} and {1})")]
    MultipleSlack(String, String),
    #[error("duplicate bus id {0}")]
    DuplicateBus(String),
    #[error("duplicate line between {0} and {1}")]
    DuplicateLine(String, String),
    #[error("line references unknown bus {0}")]
    UnknownBus(String),
    #[error("line {0}-{1} has zero series impedance")]
    ZeroImpedance(String, String),
    #[error("network graph is disconnected: bus {0} unreachable from slack")]
    Disconnected(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error(
        "power flow did not converge within {iterations} iterations \
         (final max mismatch {mismatch:.3e} p.u.)"
    )]
    NonConvergence { iterations: usize, mismatch: f64 },
    #[error("injection vector has wrong dimension: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("injections contain a non-finite value at bus {0}")]
    NonFiniteInjection(String),
    #[error("Jacobian is singular at the operating point near bus {bus} ({quantity})")]
    SingularJacobian { bus: String, quantity: &'static str },
}
