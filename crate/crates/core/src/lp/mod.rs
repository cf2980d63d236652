//! Self-contained dense linear-programming solver.
//!
//! The model is `min c'x` subject to dense rows `a'x {<=,=,>=} b` and
//! per-variable bounds (finite or infinite). The bundled backend is a
//! two-phase primal simplex on the full tableau with Bland's rule, handling
//! variable bounds implicitly (nonbasic variables may sit at either bound or,
//! for free/interior starts, at a fixed value). Problem sizes here are a few
//! hundred rows, so a dense tableau is the right tool.

mod lp_format;
mod simplex;

pub use lp_format::write_lp_format;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RowSense {
    Le,
    Eq,
    Ge,
}

#[derive(Debug, Clone)]
pub struct LpRow {
    /// Dense coefficients, one per structural variable.
    pub coeffs: Vec<f64>,
    pub sense: RowSense,
    pub rhs: f64,
}

/// A linear program in the solver's standard input form.
#[derive(Debug, Clone, Default)]
pub struct StandardFormLp {
    pub objective: Vec<f64>,
    pub rows: Vec<LpRow>,
    /// Per-variable lower bounds; `f64::NEG_INFINITY` for unbounded.
    pub lower: Vec<f64>,
    /// Per-variable upper bounds; `f64::INFINITY` for unbounded.
    pub upper: Vec<f64>,
    /// Optional warm values. Each must lie within its variable's bounds; the
    /// solver starts nonbasic variables there, which usually makes the
    /// all-slack basis primal feasible and skips phase one entirely.
    pub initial: Option<Vec<f64>>,
}

impl StandardFormLp {
    pub fn new(num_vars: usize) -> Self {
        Self {
            objective: vec![0.0; num_vars],
            rows: Vec::new(),
            lower: vec![f64::NEG_INFINITY; num_vars],
            upper: vec![f64::INFINITY; num_vars],
            initial: None,
        }
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn validate(&self) -> Result<(), LpError> {
        let n = self.num_vars();
        if self.lower.len() != n || self.upper.len() != n {
            return Err(LpError::Shape(
                "bounds vectors must match the objective length".into(),
            ));
        }
        if self.objective.iter().any(|c| !c.is_finite()) {
            return Err(LpError::NonFinite("objective".into()));
        }
        for (i, row) in self.rows.iter().enumerate() {
            if row.coeffs.len() != n {
                return Err(LpError::Shape(format!(
                    "row {i} has {} coefficients, expected {n}",
                    row.coeffs.len()
                )));
            }
            if row.coeffs.iter().any(|c| !c.is_finite()) || !row.rhs.is_finite() {
                return Err(LpError::NonFinite(format!("row {i}")));
            }
        }
        for j in 0..n {
            if self.lower[j].is_nan() || self.upper[j].is_nan() {
                return Err(LpError::NonFinite(format!("bounds of variable {j}")));
            }
            if self.lower[j] > self.upper[j] {
                return Err(LpError::Shape(format!(
                    "variable {j} has lower bound {} above upper bound {}",
                    self.lower[j], self.upper[j]
                )));
            }
        }
        if let Some(init) = &self.initial {
            if init.len() != n {
                return Err(LpError::Shape("initial point length mismatch".into()));
            }
            for (j, v) in init.iter().enumerate() {
                if !v.is_finite() || *v < self.lower[j] - 1e-9 || *v > self.upper[j] + 1e-9 {
                    return Err(LpError::Shape(format!(
                        "initial value {v} of variable {j} violates its bounds"
                    )));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
    IterationLimit,
}

#[derive(Debug, Clone)]
pub struct LpResult {
    pub status: LpStatus,
    /// Structural variable values (best iterate when not optimal).
    pub x: Vec<f64>,
    pub objective: f64,
    /// One dual multiplier per row (empty unless phase two completed).
    pub duals: Vec<f64>,
    pub iterations: usize,
    /// Largest primal constraint/bound violation of `x`.
    pub feasibility_residual: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct SolveOptions {
    /// Pivot/reduced-cost tolerance used during pivoting.
    pub pivot_tol: f64,
    /// Feasibility tolerance on the reported solution.
    pub feas_tol: f64,
    /// Iteration cap; defaults to `10 * (rows + columns)`.
    pub max_iterations: Option<usize>,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            pivot_tol: 1e-9,
            feas_tol: 1e-7,
            max_iterations: None,
        }
    }
}

#[derive(Debug, Error)]
pub enum LpError {
    #[error("malformed LP: {0}")]
    Shape(String),
    #[error("non-finite data in {0}")]
    NonFinite(String),
}

/// Solver backend interface; the bundled implementation is
/// [`SimplexBackend`], external solvers can be swapped in behind it.
pub trait LpBackend {
    fn solve_lp(&self, lp: &StandardFormLp, opts: &SolveOptions) -> Result<LpResult, LpError>;
}

/// Bundled dense two-phase primal simplex with Bland's rule.
#[derive(Debug, Clone, Copy, Default)]
pub struct SimplexBackend;

impl LpBackend for SimplexBackend {
    fn solve_lp(&self, lp: &StandardFormLp, opts: &SolveOptions) -> Result<LpResult, LpError> {
        lp.validate()?;
        Ok(simplex::solve(lp, opts))
    }
}

/// Solve with the bundled backend.
pub fn solve_lp(lp: &StandardFormLp, opts: &SolveOptions) -> Result<LpResult, LpError> {
    SimplexBackend.solve_lp(lp, opts)
}
