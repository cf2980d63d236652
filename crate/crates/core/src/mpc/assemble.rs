//! Per-step LP construction and solution extraction.
//!
//! Decision variables are the EV plug powers and battery active/reactive
//! powers over the residual horizon, plus epigraph auxiliaries for the
//! absolute-value and hinge terms. Grid quantities enter through the affine
//! sensitivity model evaluated at the forecast injections; rows that cannot
//! be violated for any admissible setpoint are dropped up front, which keeps
//! the tableau small enough for the 30-second control deadline.

use crate::forecast::ForecastSet;
use crate::grid::{Linearization, NetworkModel};
use crate::lp::{LpBackend, LpResult, LpRow, LpStatus, RowSense, SolveOptions, StandardFormLp};
use crate::resources::{bess_capability_polygon, interpolate_soc_target, BessState, EvSession};
use crate::{slot_end, STEP_HOURS};

use super::ledger::anticipated_error_coefficients;
use super::{MpcConfig, MpcError};

/// A plug with a currently connected EV, as seen by the controller at the
/// assembly step. Sessions that have not arrived yet are not anticipated.
#[derive(Debug, Clone)]
pub struct PlugSession<'a> {
    pub station_idx: usize,
    pub plug: usize,
    pub session: &'a EvSession,
    /// Measured SoC at the assembly step.
    pub soc: f64,
    /// Last actuated setpoint, kW (0 at session start): anchors the wear term.
    pub last_p_kw: f64,
}

/// Everything the assembler needs for one control step.
pub struct AssembleInputs<'a> {
    pub k: usize,
    pub plan: &'a super::DispatchPlan,
    /// Incurred slot energy error so far, kWh.
    pub incurred_kwh: f64,
    pub forecasts: &'a ForecastSet,
    pub lin: &'a Linearization,
    pub net: &'a NetworkModel,
    pub bess: &'a [BessState],
    /// Non-slack bus index per battery.
    pub bess_bus: &'a [usize],
    pub sessions: &'a [PlugSession<'a>],
    /// Non-slack bus index per station.
    pub evcs_bus: &'a [usize],
    /// Plug count per station.
    pub evcs_plug_count: &'a [usize],
    /// Non-slack bus index per load, aligned with the forecast roster.
    pub load_bus: &'a [usize],
    /// Non-slack bus index per PV plant.
    pub pv_bus: &'a [usize],
    pub config: &'a MpcConfig,
}

/// Assembled LP plus the metadata needed to read a solution back out.
pub struct MpcProblem {
    pub lp: StandardFormLp,
    pub k: usize,
    pub horizon: usize,
    n_bess: usize,
    n_sessions: usize,
    session_meta: Vec<SessionMeta>,
    wear_terms: usize,
    /// Affine gcp power per step: constant plus sparse coefficients.
    p0_const: Vec<f64>,
    p0_coeffs: Vec<Vec<(usize, f64)>>,
    q0_const: Vec<f64>,
    q0_coeffs: Vec<Vec<(usize, f64)>>,
    eps_coef: f64,
    incurred_kwh: f64,
    power_scale: f64,
    /// Index of the first grid-relaxation slack column, when present.
    slack_start: Option<usize>,
    /// Grid rows discarded by the interval pre-check.
    pub dropped_rows: usize,
    plan_cache: Vec<f64>,
    plug_counts: Vec<usize>,
}

#[derive(Debug, Clone)]
struct SessionMeta {
    station_idx: usize,
    energy_kwh: f64,
    last_p_kw: f64,
    soc: f64,
    target_kbar: f64,
    mu: Vec<bool>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolverOutcome {
    Optimal,
    IterationLimit,
}

/// Objective value split into its physical terms. `dispatch_kwh` is the
/// absolute slot energy error; `evcs` and `bess_kw` are reported in their
/// natural units, before the power scaling that folds them into the LP
/// objective.
#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize, PartialEq)]
pub struct ObjectiveTerms {
    pub total: f64,
    pub dispatch_kwh: f64,
    pub evcs: f64,
    pub bess_kw: f64,
}

#[derive(Debug, Clone)]
pub struct MpcSolution {
    pub outcome: SolverOutcome,
    /// `[battery][offset]` active power, kW.
    pub bess_p_kw: Vec<Vec<f64>>,
    pub bess_q_kvar: Vec<Vec<f64>>,
    /// `[session][offset]` plug power, kW.
    pub ev_p_kw: Vec<Vec<f64>>,
    /// Predicted gcp power per offset, kW (affine model).
    pub p0_kw: Vec<f64>,
    pub q0_kvar: Vec<f64>,
    /// Anticipated residual-horizon error at the solution, kWh.
    pub anticipated_kwh: f64,
    pub objective: ObjectiveTerms,
    pub iterations: usize,
    /// Total grid relaxation slack (p.u.); zero unless the fallback ran.
    pub grid_slack_pu: f64,
}

impl MpcSolution {
    /// First-step setpoints for actuation: per-battery `(p, q)` and
    /// per-session plug power.
    pub fn first_step(&self) -> (Vec<(f64, f64)>, Vec<f64>) {
        let bess = self
            .bess_p_kw
            .iter()
            .zip(&self.bess_q_kvar)
            .map(|(p, q)| (p[0], q[0]))
            .collect();
        let ev = self.ev_p_kw.iter().map(|p| p[0]).collect();
        (bess, ev)
    }
}

struct VarLayout {
    h: usize,
    n_bess: usize,
    n_ses: usize,
    wear_terms: usize,
}

impl VarLayout {
    fn bess_p(&self, b: usize, t: usize) -> usize {
        b * self.h + t
    }
    fn bess_q(&self, b: usize, t: usize) -> usize {
        (self.n_bess + b) * self.h + t
    }
    fn ev_p(&self, s: usize, t: usize) -> usize {
        (2 * self.n_bess + s) * self.h + t
    }
    fn t_disp(&self) -> usize {
        (2 * self.n_bess + self.n_ses) * self.h
    }
    fn bess_u(&self, b: usize, t: usize) -> usize {
        self.t_disp() + 1 + b * self.h + t
    }
    fn hinge(&self, s: usize) -> usize {
        self.t_disp() + 1 + self.n_bess * self.h + s
    }
    fn wear(&self, s: usize, w: usize) -> usize {
        self.t_disp() + 1 + self.n_bess * self.h + self.n_ses + s * self.wear_terms + w
    }
    fn n_core(&self) -> usize {
        self.t_disp() + 1 + self.n_bess * self.h + self.n_ses + self.n_ses * self.wear_terms
    }
}

/// Interval of an affine expression over the variable boxes.
fn expression_range(coeffs: &[(usize, f64)], lower: &[f64], upper: &[f64]) -> (f64, f64) {
    let mut lo = 0.0;
    let mut hi = 0.0;
    for &(col, c) in coeffs {
        let (a, b) = (c * lower[col], c * upper[col]);
        lo += a.min(b);
        hi += a.max(b);
    }
    (lo, hi)
}

/// Build the tracking LP at step `k`. With `grid_slack` set, voltage and
/// ampacity rows get penalized violation slacks so the problem stays
/// feasible when the forecast pushes the grid model out of bounds.
pub fn assemble(inputs: &AssembleInputs, grid_slack: bool) -> Result<MpcProblem, MpcError> {
    let k = inputs.k;
    let k_bar = slot_end(k);
    let h = k_bar - k + 1;
    let net = inputs.net;
    let m = net.non_slack().len();
    let lin = inputs.lin;
    let cfg = inputs.config;

    if lin.voltage_sens.rows != m || lin.voltage_sens.cols != 2 * m {
        return Err(MpcError::Dimension(format!(
            "voltage sensitivities are {}x{}, expected {}x{}",
            lin.voltage_sens.rows,
            lin.voltage_sens.cols,
            m,
            2 * m
        )));
    }
    if inputs.forecasts.horizon_len() != h {
        return Err(MpcError::Dimension(format!(
            "forecast horizon {} does not cover the residual horizon {h}",
            inputs.forecasts.horizon_len()
        )));
    }
    if inputs.forecasts.load_p_kw.len() != inputs.load_bus.len()
        || inputs.forecasts.pv_p_kw.len() != inputs.pv_bus.len()
        || inputs.bess.len() != inputs.bess_bus.len()
    {
        return Err(MpcError::Dimension("resource roster mismatch".into()));
    }

    let n_bess = inputs.bess.len();
    let n_ses = inputs.sessions.len();
    let wear_terms = if h >= 2 { h } else { 0 };
    let layout = VarLayout {
        h,
        n_bess,
        n_ses,
        wear_terms,
    };
    let n_core = layout.n_core();

    // fixed nodal injections per step from the forecasts (stacked [p; q])
    let mut fixed = vec![vec![0.0; 2 * m]; h];
    for t in 0..h {
        for (li, &bus) in inputs.load_bus.iter().enumerate() {
            fixed[t][bus] -= inputs.forecasts.load_p_kw[li][t];
            fixed[t][m + bus] -= inputs.forecasts.load_q_kvar[li][t];
        }
        for (pi, &bus) in inputs.pv_bus.iter().enumerate() {
            fixed[t][bus] += inputs.forecasts.pv_p_kw[pi][t];
            fixed[t][m + bus] += inputs.forecasts.pv_q_kvar[pi][t];
        }
    }

    // session metadata: connection flags and interpolated targets
    let session_meta: Vec<SessionMeta> = inputs
        .sessions
        .iter()
        .map(|ps| SessionMeta {
            station_idx: ps.station_idx,
            energy_kwh: ps.session.capacity_kwh,
            last_p_kw: ps.last_p_kw,
            soc: ps.soc,
            target_kbar: interpolate_soc_target(ps.session, ps.soc, k, k_bar),
            mu: (0..h).map(|t| ps.session.connected_at(k + t)).collect(),
        })
        .collect();

    let mut lp = StandardFormLp::new(n_core);
    let mut hints = vec![0.0; n_core];

    for (b, bess) in inputs.bess.iter().enumerate() {
        for t in 0..h {
            let (pc, qc) = (layout.bess_p(b, t), layout.bess_q(b, t));
            lp.lower[pc] = -bess.rating_kva;
            lp.upper[pc] = bess.rating_kva;
            lp.lower[qc] = -bess.rating_kva;
            lp.upper[qc] = bess.rating_kva;
            let uc = layout.bess_u(b, t);
            lp.lower[uc] = 0.0;
            lp.upper[uc] = bess.rating_kva;
            lp.objective[uc] = 1.0 / cfg.objective_power_scale_kw;
        }
    }
    for (s, (ps, meta)) in inputs.sessions.iter().zip(&session_meta).enumerate() {
        for t in 0..h {
            let col = layout.ev_p(s, t);
            if meta.mu[t] {
                lp.lower[col] = ps.session.p_min_kw;
                lp.upper[col] = ps.session.p_max_kw;
            } else {
                lp.lower[col] = 0.0;
                lp.upper[col] = 0.0;
            }
            hints[col] = 0.0f64.clamp(lp.lower[col], lp.upper[col]);
        }
        let hc = layout.hinge(s);
        lp.lower[hc] = 0.0;
        let plugs = inputs.evcs_plug_count[ps.station_idx] as f64;
        lp.objective[hc] =
            (3600.0 / (crate::STEP_SECONDS * plugs)) / cfg.objective_power_scale_kw;
        for w in 0..wear_terms {
            let wc = layout.wear(s, w);
            lp.lower[wc] = 0.0;
            lp.objective[wc] = 1.0 / ((h - 1) as f64 * plugs * cfg.objective_power_scale_kw);
        }
    }
    let t_col = layout.t_disp();
    lp.lower[t_col] = 0.0;
    lp.objective[t_col] = 1.0;

    // affine gcp power per step
    let mut p0_const = Vec::with_capacity(h);
    let mut q0_const = Vec::with_capacity(h);
    let mut p0_coeffs: Vec<Vec<(usize, f64)>> = Vec::with_capacity(h);
    let mut q0_coeffs: Vec<Vec<(usize, f64)>> = Vec::with_capacity(h);
    for t in 0..h {
        let gp = lin.gcp_sens.row(0);
        let gq = lin.gcp_sens.row(1);
        let cp: f64 = gp.iter().zip(&fixed[t]).map(|(a, b)| a * b).sum::<f64>()
            + lin.gcp_offset[0];
        let cq: f64 = gq.iter().zip(&fixed[t]).map(|(a, b)| a * b).sum::<f64>()
            + lin.gcp_offset[1];
        let mut pc = Vec::new();
        let mut qc = Vec::new();
        for (b, &bus) in inputs.bess_bus.iter().enumerate() {
            pc.push((layout.bess_p(b, t), gp[bus]));
            pc.push((layout.bess_q(b, t), gp[m + bus]));
            qc.push((layout.bess_p(b, t), gq[bus]));
            qc.push((layout.bess_q(b, t), gq[m + bus]));
        }
        for (s, meta) in session_meta.iter().enumerate() {
            let bus = inputs.evcs_bus[meta.station_idx];
            pc.push((layout.ev_p(s, t), gp[bus]));
            qc.push((layout.ev_p(s, t), gq[bus]));
        }
        p0_const.push(cp);
        q0_const.push(cq);
        p0_coeffs.push(pc);
        q0_coeffs.push(qc);
    }

    // anticipated error: eps = coef * sum_t (plan_j - p0_j)
    let eps_coef = anticipated_error_coefficients(k, cfg.prefactor);
    let mut eps_const = 0.0;
    let mut eps_lin: Vec<f64> = vec![0.0; n_core];
    for t in 0..h {
        eps_const += eps_coef * (inputs.plan.at_step(k + t) - p0_const[t]);
        for &(col, c) in &p0_coeffs[t] {
            eps_lin[col] -= eps_coef * c;
        }
    }

    let mut rows: Vec<LpRow> = Vec::new();
    let mut grid_row_idx: Vec<usize> = Vec::new();
    let mut dropped = 0usize;

    // |incurred + eps| epigraph
    {
        let mut up = vec![0.0; n_core];
        up[t_col] = 1.0;
        for (c, v) in up.iter_mut().zip(&eps_lin) {
            *c -= v;
        }
        rows.push(LpRow {
            coeffs: up,
            sense: RowSense::Ge,
            rhs: inputs.incurred_kwh + eps_const,
        });
        let mut dn = vec![0.0; n_core];
        dn[t_col] = 1.0;
        for (c, v) in dn.iter_mut().zip(&eps_lin) {
            *c += v;
        }
        rows.push(LpRow {
            coeffs: dn,
            sense: RowSense::Ge,
            rhs: -(inputs.incurred_kwh + eps_const),
        });
    }

    // grid rows, pre-screened by interval evaluation over the variable boxes
    let push_grid_row = |rows: &mut Vec<LpRow>,
                             grid_row_idx: &mut Vec<usize>,
                             dropped: &mut usize,
                             sparse: &[(usize, f64)],
                             sense: RowSense,
                             rhs: f64| {
        let (lo, hi) = expression_range(sparse, &lp.lower, &lp.upper);
        let margin = 1e-9;
        let needed = match sense {
            RowSense::Le => hi > rhs - margin,
            RowSense::Ge => lo < rhs + margin,
            RowSense::Eq => true,
        };
        if !needed {
            *dropped += 1;
            return;
        }
        let mut coeffs = vec![0.0; n_core];
        for &(col, c) in sparse {
            coeffs[col] += c;
        }
        grid_row_idx.push(rows.len());
        rows.push(LpRow { coeffs, sense, rhs });
    };

    let gcp_polygon = bess_capability_polygon(net.s_max_kva, cfg.polygon_segments);
    for t in 0..h {
        // controllable coefficient template per bus quantity
        let mut var_cols: Vec<(usize, usize)> = Vec::new(); // (col, stacked bus index)
        for (b, &bus) in inputs.bess_bus.iter().enumerate() {
            var_cols.push((layout.bess_p(b, t), bus));
            var_cols.push((layout.bess_q(b, t), m + bus));
        }
        for (s, meta) in session_meta.iter().enumerate() {
            var_cols.push((layout.ev_p(s, t), inputs.evcs_bus[meta.station_idx]));
        }

        // voltage magnitude bounds
        for i in 0..m {
            let row_sens = lin.voltage_sens.row(i);
            let cst: f64 = row_sens.iter().zip(&fixed[t]).map(|(a, b)| a * b).sum::<f64>()
                + lin.voltage_offset[i];
            let sparse: Vec<(usize, f64)> = var_cols
                .iter()
                .map(|&(col, sb)| (col, row_sens[sb]))
                .collect();
            push_grid_row(
                &mut rows,
                &mut grid_row_idx,
                &mut dropped,
                &sparse,
                RowSense::Le,
                net.v_max_pu - cst,
            );
            push_grid_row(
                &mut rows,
                &mut grid_row_idx,
                &mut dropped,
                &sparse,
                RowSense::Ge,
                net.v_min_pu - cst,
            );
        }
        // line ampacities
        for (li, line) in net.lines.iter().enumerate() {
            let row_sens = lin.current_sens.row(li);
            let cst: f64 = row_sens.iter().zip(&fixed[t]).map(|(a, b)| a * b).sum::<f64>()
                + lin.current_offset[li];
            let sparse: Vec<(usize, f64)> = var_cols
                .iter()
                .map(|&(col, sb)| (col, row_sens[sb]))
                .collect();
            push_grid_row(
                &mut rows,
                &mut grid_row_idx,
                &mut dropped,
                &sparse,
                RowSense::Le,
                line.ampacity_pu - cst,
            );
            push_grid_row(
                &mut rows,
                &mut grid_row_idx,
                &mut dropped,
                &sparse,
                RowSense::Ge,
                -cst,
            );
        }
        // transformer capacity on (p0, q0), polygonized like the converter
        // capability circles; kept exact for post-hoc feasibility checks
        for hp in &gcp_polygon {
            let mut sparse: Vec<(usize, f64)> = Vec::new();
            for &(col, c) in &p0_coeffs[t] {
                sparse.push((col, hp.a_p * c));
            }
            for &(col, c) in &q0_coeffs[t] {
                sparse.push((col, hp.a_q * c));
            }
            let cst = hp.a_p * p0_const[t] + hp.a_q * q0_const[t];
            // not a relaxable row: the transformer limit is physical
            let (lo, hi) = expression_range(&sparse, &lp.lower, &lp.upper);
            let _ = lo;
            if hi > hp.rhs - cst - 1e-9 {
                let mut coeffs = vec![0.0; n_core];
                for &(col, c) in &sparse {
                    coeffs[col] += c;
                }
                rows.push(LpRow {
                    coeffs,
                    sense: RowSense::Le,
                    rhs: hp.rhs - cst,
                });
            } else {
                dropped += 1;
            }
        }
    }

    // battery SoC corridor and capability polygon
    for (b, bess) in inputs.bess.iter().enumerate() {
        let c_b = STEP_HOURS / bess.energy_kwh;
        let polygon = bess_capability_polygon(bess.rating_kva, cfg.polygon_segments);
        for t in 0..h {
            let mut le = vec![0.0; n_core];
            for tau in 0..=t {
                le[layout.bess_p(b, tau)] = -c_b;
            }
            let mut ge = le.clone();
            rows.push(LpRow {
                coeffs: std::mem::take(&mut le),
                sense: RowSense::Le,
                rhs: bess.soc_max - bess.soc,
            });
            rows.push(LpRow {
                coeffs: std::mem::take(&mut ge),
                sense: RowSense::Ge,
                rhs: bess.soc_min - bess.soc,
            });
            for hp in &polygon {
                let mut coeffs = vec![0.0; n_core];
                coeffs[layout.bess_p(b, t)] = hp.a_p;
                coeffs[layout.bess_q(b, t)] = hp.a_q;
                rows.push(LpRow {
                    coeffs,
                    sense: RowSense::Le,
                    rhs: hp.rhs,
                });
            }
            // |p| epigraph for the usage term
            let mut up = vec![0.0; n_core];
            up[layout.bess_u(b, t)] = 1.0;
            up[layout.bess_p(b, t)] = -1.0;
            rows.push(LpRow {
                coeffs: up,
                sense: RowSense::Ge,
                rhs: 0.0,
            });
            let mut dn = vec![0.0; n_core];
            dn[layout.bess_u(b, t)] = 1.0;
            dn[layout.bess_p(b, t)] = 1.0;
            rows.push(LpRow {
                coeffs: dn,
                sense: RowSense::Ge,
                rhs: 0.0,
            });
        }
    }

    // EV SoC corridor, wear epigraphs, and SoC-target hinge
    for (s, meta) in session_meta.iter().enumerate() {
        let c_s = STEP_HOURS / meta.energy_kwh;
        for t in 0..h {
            if !meta.mu[t] {
                continue;
            }
            let mut le = vec![0.0; n_core];
            for tau in 0..=t {
                le[layout.ev_p(s, tau)] = -c_s;
            }
            let ge = le.clone();
            rows.push(LpRow {
                coeffs: le,
                sense: RowSense::Le,
                rhs: 1.0 - meta.soc,
            });
            rows.push(LpRow {
                coeffs: ge,
                sense: RowSense::Ge,
                rhs: -meta.soc,
            });
        }
        if wear_terms > 0 {
            for w in 0..wear_terms {
                let wc = layout.wear(s, w);
                let (cur, prev_col, anchor) = if w == 0 {
                    (layout.ev_p(s, 0), None, meta.last_p_kw)
                } else {
                    (layout.ev_p(s, w), Some(layout.ev_p(s, w - 1)), 0.0)
                };
                let mut up = vec![0.0; n_core];
                up[wc] = 1.0;
                up[cur] = -1.0;
                if let Some(p) = prev_col {
                    up[p] = 1.0;
                }
                rows.push(LpRow {
                    coeffs: up,
                    sense: RowSense::Ge,
                    rhs: -anchor,
                });
                let mut dn = vec![0.0; n_core];
                dn[wc] = 1.0;
                dn[cur] = 1.0;
                if let Some(p) = prev_col {
                    dn[p] = -1.0;
                }
                rows.push(LpRow {
                    coeffs: dn,
                    sense: RowSense::Ge,
                    rhs: anchor,
                });
            }
        }
        let mut hinge_row = vec![0.0; n_core];
        hinge_row[layout.hinge(s)] = 1.0;
        for t in 0..h {
            if meta.mu[t] {
                hinge_row[layout.ev_p(s, t)] = -c_s;
            }
        }
        rows.push(LpRow {
            coeffs: hinge_row,
            sense: RowSense::Ge,
            rhs: meta.target_kbar - meta.soc,
        });
    }

    // optional violation slacks on the grid rows
    let mut slack_start = None;
    if grid_slack && !grid_row_idx.is_empty() {
        let n_slack = grid_row_idx.len();
        let base = n_core;
        slack_start = Some(base);
        lp.objective.resize(n_core + n_slack, 0.0);
        lp.lower.resize(n_core + n_slack, 0.0);
        lp.upper.resize(n_core + n_slack, f64::INFINITY);
        hints.resize(n_core + n_slack, 0.0);
        for row in &mut rows {
            row.coeffs.resize(n_core + n_slack, 0.0);
        }
        for (i, &ri) in grid_row_idx.iter().enumerate() {
            let col = base + i;
            lp.objective[col] = inputs.config.grid_slack_penalty_per_pu;
            match rows[ri].sense {
                RowSense::Le => rows[ri].coeffs[col] = -1.0,
                RowSense::Ge => rows[ri].coeffs[col] = 1.0,
                RowSense::Eq => {}
            }
        }
    }

    lp.rows = rows;

    // warm values: start from "do nothing" so the all-slack basis is
    // feasible and phase one is skipped in the common case
    let eps_at_hint = eps_const
        + eps_lin
            .iter()
            .zip(&hints)
            .map(|(c, v)| c * v)
            .sum::<f64>();
    hints[t_col] = (inputs.incurred_kwh + eps_at_hint).abs();
    for (s, meta) in session_meta.iter().enumerate() {
        let mut charge = 0.0;
        for t in 0..h {
            if meta.mu[t] {
                charge += hints[layout.ev_p(s, t)];
            }
        }
        let c_s = STEP_HOURS / meta.energy_kwh;
        hints[layout.hinge(s)] = (meta.target_kbar - meta.soc + c_s * charge).max(0.0);
        if wear_terms > 0 {
            hints[layout.wear(s, 0)] = (hints[layout.ev_p(s, 0)] - meta.last_p_kw).abs();
            for w in 1..wear_terms {
                hints[layout.wear(s, w)] =
                    (hints[layout.ev_p(s, w)] - hints[layout.ev_p(s, w - 1)]).abs();
            }
        }
    }
    if let Some(base) = slack_start {
        for (i, &ri) in grid_row_idx.iter().enumerate() {
            let row = &lp.rows[ri];
            let lhs: f64 = row
                .coeffs
                .iter()
                .take(n_core)
                .zip(&hints)
                .map(|(c, v)| c * v)
                .sum();
            hints[base + i] = match row.sense {
                RowSense::Le => (lhs - row.rhs).max(0.0),
                RowSense::Ge => (row.rhs - lhs).max(0.0),
                RowSense::Eq => 0.0,
            };
        }
    }
    lp.initial = Some(hints);

    Ok(MpcProblem {
        lp,
        k,
        horizon: h,
        n_bess,
        n_sessions: n_ses,
        session_meta,
        wear_terms,
        p0_const,
        p0_coeffs,
        q0_const,
        q0_coeffs,
        eps_coef,
        incurred_kwh: inputs.incurred_kwh,
        power_scale: cfg.objective_power_scale_kw,
        slack_start,
        dropped_rows: dropped,
        plan_cache: (0..h).map(|t| inputs.plan.at_step(k + t)).collect(),
        plug_counts: inputs.evcs_plug_count.to_vec(),
    })
}

impl MpcProblem {
    /// Decision variables: plug and battery powers over the horizon
    /// (auxiliaries excluded).
    pub fn num_decision_vars(&self) -> usize {
        self.horizon * (self.n_sessions + 2 * self.n_bess)
    }

    pub fn num_vars(&self) -> usize {
        self.lp.num_vars()
    }

    pub fn num_rows(&self) -> usize {
        self.lp.num_rows()
    }

    /// Predicted gcp active power at step offset `t` for a variable vector.
    pub fn p0_at(&self, t: usize, x: &[f64]) -> f64 {
        self.p0_const[t]
            + self.p0_coeffs[t]
                .iter()
                .map(|&(col, c)| c * x[col])
                .sum::<f64>()
    }

    pub fn q0_at(&self, t: usize, x: &[f64]) -> f64 {
        self.q0_const[t]
            + self.q0_coeffs[t]
                .iter()
                .map(|&(col, c)| c * x[col])
                .sum::<f64>()
    }

    /// Forecast-implied gcp power with all controllables at zero.
    pub fn p0_uncontrolled(&self, t: usize) -> f64 {
        self.p0_const[t]
    }

    fn layout(&self) -> VarLayout {
        VarLayout {
            h: self.horizon,
            n_bess: self.n_bess,
            n_ses: self.n_sessions,
            wear_terms: self.wear_terms,
        }
    }

    /// Extract and validate a solution. Setpoints are clamped onto their
    /// bounds when within tolerance; larger violations are an error.
    pub fn extract(&self, result: &LpResult) -> Result<MpcSolution, MpcError> {
        const TOL: f64 = 1e-7;
        let outcome = match result.status {
            LpStatus::Optimal => SolverOutcome::Optimal,
            LpStatus::IterationLimit => SolverOutcome::IterationLimit,
            LpStatus::Infeasible | LpStatus::Unbounded => {
                return Err(MpcError::HardInfeasible(self.k))
            }
        };
        let layout = self.layout();
        let mut x = result.x.clone();
        for (j, v) in x.iter_mut().enumerate() {
            let (lo, hi) = (self.lp.lower[j], self.lp.upper[j]);
            if *v < lo || *v > hi {
                let over = (lo - *v).max(*v - hi);
                if over > TOL {
                    return Err(MpcError::SolutionBound {
                        what: format!("variable {j}"),
                        amount: over,
                        step: self.k,
                    });
                }
                *v = v.clamp(lo, hi);
            }
        }

        let h = self.horizon;
        let bess_p_kw: Vec<Vec<f64>> = (0..self.n_bess)
            .map(|b| (0..h).map(|t| x[layout.bess_p(b, t)]).collect())
            .collect();
        let bess_q_kvar: Vec<Vec<f64>> = (0..self.n_bess)
            .map(|b| (0..h).map(|t| x[layout.bess_q(b, t)]).collect())
            .collect();
        let ev_p_kw: Vec<Vec<f64>> = (0..self.n_sessions)
            .map(|s| (0..h).map(|t| x[layout.ev_p(s, t)]).collect())
            .collect();
        let p0_kw: Vec<f64> = (0..h).map(|t| self.p0_at(t, &x)).collect();
        let q0_kvar: Vec<f64> = (0..h).map(|t| self.q0_at(t, &x)).collect();

        let anticipated_kwh: f64 = (0..h)
            .map(|t| self.eps_coef * (self.plan_at(t) - p0_kw[t]))
            .sum();

        // physical objective terms, recomputed from the setpoints
        let f_disp = (self.incurred_kwh + anticipated_kwh).abs();
        let mut f_evcs = 0.0;
        for (s, meta) in self.session_meta.iter().enumerate() {
            let plugs = self.plug_counts[meta.station_idx] as f64;
            let c_s = STEP_HOURS / meta.energy_kwh;
            let charged: f64 = (0..h)
                .filter(|&t| meta.mu[t])
                .map(|t| ev_p_kw[s][t])
                .sum();
            let soc_end = meta.soc - c_s * charged;
            f_evcs += (3600.0 / (crate::STEP_SECONDS * plugs))
                * (meta.target_kbar - soc_end).max(0.0);
            if h >= 2 {
                let mut wear = (ev_p_kw[s][0] - meta.last_p_kw).abs();
                for t in 1..h {
                    wear += (ev_p_kw[s][t] - ev_p_kw[s][t - 1]).abs();
                }
                f_evcs += wear / ((h - 1) as f64 * plugs);
            }
        }
        let f_bess: f64 = bess_p_kw
            .iter()
            .flat_map(|ps| ps.iter())
            .map(|p| p.abs())
            .sum();

        let grid_slack_pu = match self.slack_start {
            Some(base) => x[base..].iter().sum(),
            None => 0.0,
        };
        let total = f_disp + (f_evcs + f_bess) / self.power_scale;

        Ok(MpcSolution {
            outcome,
            bess_p_kw,
            bess_q_kvar,
            ev_p_kw,
            p0_kw,
            q0_kvar,
            anticipated_kwh,
            objective: ObjectiveTerms {
                total,
                dispatch_kwh: f_disp,
                evcs: f_evcs,
                bess_kw: f_bess,
            },
            iterations: result.iterations,
            grid_slack_pu,
        })
    }

    fn plan_at(&self, t: usize) -> f64 {
        self.plan_cache[t]
    }
}

/// Solve an assembled problem with the given backend.
pub fn solve(
    problem: &MpcProblem,
    backend: &dyn LpBackend,
    opts: &SolveOptions,
) -> Result<MpcSolution, MpcError> {
    let result = backend.solve_lp(&problem.lp, opts)?;
    problem.extract(&result)
}
