//! Closed-loop day simulator.
//!
//! Each 30-second step of a controlled run: read the dispatch setpoint,
//! take measurements (power flow of the previous step's realized injections
//! plus noise), update the error ledger and resource states, forecast the
//! residual horizon, rebuild the grid linearization at the measured
//! operating point, solve the tracking LP, and actuate the first-step
//! setpoints. The controller only ever sees measurements; ground truth stays
//! inside the simulator.

use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::forecast::{forecast_all, forecast_from_truth, MeasurementSnapshot};
use crate::grid::{linearize, solve_power_flow, NodalInjections, PowerFlowOptions};
use crate::lp::{SimplexBackend, SolveOptions};
use crate::mpc::{
    assemble, solve as solve_mpc, AssembleInputs, MpcError, PlugSession, SolverOutcome,
    TrackingLedger,
};
use crate::resources::{bess_soc_step, evcs_soc_step};
use crate::{STEPS_PER_DAY, STEP_SECONDS};

use super::record::{BessRecord, EvRecord, Event, RunRecord, SolverRecord, StepRecord};
use super::scenario::{Roster, Scenario};
use super::SimError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunMode {
    WithControl,
    WithoutControl,
}

/// How the counterfactual run drives the charging stations.
#[derive(Debug, Clone, Default)]
pub enum CounterfactualEvcs {
    /// Charge every connected EV at full admissible power until its target.
    #[default]
    Uncoordinated,
    /// Replay EV powers from a recorded run (by station and plug).
    FromRecord(RunRecord),
}

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub mode: RunMode,
    pub seed_override: Option<u64>,
    pub evcs_counterfactual: CounterfactualEvcs,
    pub lp_options: SolveOptions,
}

impl RunOptions {
    pub fn with_control() -> Self {
        Self {
            mode: RunMode::WithControl,
            seed_override: None,
            evcs_counterfactual: CounterfactualEvcs::Uncoordinated,
            lp_options: SolveOptions::default(),
        }
    }

    pub fn without_control() -> Self {
        Self {
            mode: RunMode::WithoutControl,
            ..Self::with_control()
        }
    }
}

/// Wall-clock observations of a run; kept out of the serialized record so
/// repeated runs stay byte-identical.
#[derive(Debug, Clone, Default)]
pub struct RunStats {
    pub total_wall: Duration,
    pub max_step_wall: Duration,
    pub lp_iterations: usize,
    pub relaxed_steps: usize,
    /// Final battery SoC per unit, in roster order.
    pub final_bess_soc: Vec<f64>,
}

struct Measured {
    p0_kw: f64,
    load_p: Vec<f64>,
    load_q: Vec<f64>,
    pv_p: Vec<f64>,
    ghi: f64,
    t_air: f64,
}

struct NoiseSource {
    rng: ChaCha8Rng,
    power: Normal<f64>,
    ghi: Normal<f64>,
    temp: Normal<f64>,
}

impl NoiseSource {
    fn new(seed: u64, spec: &super::scenario::NoiseSpec) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
            power: Normal::new(0.0, spec.power_std_kw.max(0.0)).expect("finite std"),
            ghi: Normal::new(0.0, spec.ghi_std_wm2.max(0.0)).expect("finite std"),
            temp: Normal::new(0.0, spec.temp_std_c.max(0.0)).expect("finite std"),
        }
    }

    /// Measurement of the true state at step `k`. Channel order is fixed:
    /// gcp power, per-load p and q, per-plant pv, irradiance, temperature.
    fn measure(&mut self, scenario: &Scenario, k: usize, p0_true: f64) -> Measured {
        let t = &scenario.trace;
        let p0_kw = p0_true + self.power.sample(&mut self.rng);
        let load_p: Vec<f64> = t
            .load_p_kw
            .iter()
            .map(|s| s[k] + self.power.sample(&mut self.rng))
            .collect();
        let load_q: Vec<f64> = t
            .load_q_kvar
            .iter()
            .map(|s| s[k] + self.power.sample(&mut self.rng))
            .collect();
        let pv_p: Vec<f64> = t
            .pv_p_kw
            .iter()
            .map(|s| s[k] + self.power.sample(&mut self.rng))
            .collect();
        let ghi = (t.ghi_wm2[k] + self.ghi.sample(&mut self.rng)).max(0.0);
        let t_air = t.t_air_c[k] + self.temp.sample(&mut self.rng);
        Measured {
            p0_kw,
            load_p,
            load_q,
            pv_p,
            ghi,
            t_air,
        }
    }
}

/// Sum of per-plug setpoints per station plus battery setpoints, composed
/// with (possibly measured) uncontrollables into nodal injections.
fn compose_injections(
    scenario: &Scenario,
    roster: &Roster,
    load_p: &[f64],
    load_q: &[f64],
    pv_p: &[f64],
    bess_pq: &[(f64, f64)],
    station_p: &[f64],
) -> NodalInjections {
    let net = &scenario.network;
    let mut inj = NodalInjections::zeros(net);
    for (li, &bus) in roster.load_bus.iter().enumerate() {
        inj.p_kw[bus] -= load_p[li];
        inj.q_kvar[bus] -= load_q[li];
    }
    for (pi, &bus) in roster.pv_bus.iter().enumerate() {
        inj.p_kw[bus] += pv_p[pi];
    }
    for (b, &bus) in roster.bess_bus.iter().enumerate() {
        inj.p_kw[bus] += bess_pq[b].0;
        inj.q_kvar[bus] += bess_pq[b].1;
    }
    for (e, &bus) in roster.evcs_bus.iter().enumerate() {
        inj.p_kw[bus] += station_p[e];
    }
    inj
}

/// Run one simulated day. `initial_bess_soc` overrides the scenario's
/// initial SoC (used when chaining days).
pub fn run_day_from(
    scenario: &Scenario,
    opts: &RunOptions,
    initial_bess_soc: Option<&[f64]>,
) -> Result<(RunRecord, RunStats), SimError> {
    scenario.validate()?;
    let net = &scenario.network;
    let roster = scenario.roster();
    let pf_opts = PowerFlowOptions::default();
    let seed = opts.seed_override.unwrap_or(scenario.seed);
    let mut noise = NoiseSource::new(seed, &scenario.noise);
    let backend = SimplexBackend;
    let mpc_config = scenario.control.mpc_config();

    let mut bess = scenario.bess.clone();
    if let Some(socs) = initial_bess_soc {
        if socs.len() != bess.len() {
            return Err(SimError::Validation(
                "chained SoC vector does not match the battery roster".into(),
            ));
        }
        for (b, &soc) in bess.iter_mut().zip(socs) {
            b.soc = soc;
        }
    }
    let session_station: Vec<usize> = scenario
        .sessions
        .iter()
        .map(|s| scenario.station_index(&s.station).expect("validated"))
        .collect();
    let mut ev_soc: Vec<f64> = scenario.sessions.iter().map(|s| s.soc_arrival).collect();
    let mut ev_last_p: Vec<f64> = vec![0.0; scenario.sessions.len()];

    let mut ledger = TrackingLedger::new();
    let mut prev_meas: Option<Measured> = None;
    let mut prev_bess_pq: Vec<(f64, f64)> = vec![(0.0, 0.0); bess.len()];
    let mut prev_station_p: Vec<f64> = vec![0.0; scenario.evcs.len()];

    let mut record = RunRecord::default();
    let mut stats = RunStats::default();
    let run_start = Instant::now();

    for k in 0..STEPS_PER_DAY {
        let step_start = Instant::now();
        let mut events: Vec<Event> = Vec::new();

        // measurement snapshot available to the controller at this step: the
        // previous realized state, or a fresh uncontrollables reading at boot
        let meas = match prev_meas.take() {
            Some(m) => m,
            None => noise.measure(scenario, 0, 0.0),
        };

        let (bess_setpoints, ev_powers, solver_rec) = match opts.mode {
            RunMode::WithControl => {
                let (setpoints, ev_p, solver) = control_step(
                    scenario,
                    &roster,
                    &mpc_config,
                    &backend,
                    &opts.lp_options,
                    k,
                    &ledger,
                    &meas,
                    &bess,
                    &ev_soc,
                    &ev_last_p,
                    &session_station,
                    &prev_bess_pq,
                    &prev_station_p,
                    &mut events,
                    &mut stats,
                )?;
                (setpoints, ev_p, Some(solver))
            }
            RunMode::WithoutControl => {
                let ev_p = counterfactual_ev_powers(
                    scenario,
                    k,
                    &ev_soc,
                    &opts.evcs_counterfactual,
                )?;
                (vec![(0.0, 0.0); bess.len()], ev_p, None)
            }
        };

        // audit against hard resource limits before actuating
        for (b, state) in bess.iter().enumerate() {
            let (p, q) = bess_setpoints[b];
            let apparent = (p * p + q * q).sqrt();
            if apparent > state.rating_kva * (1.0 + 1e-7) {
                events.push(Event::CapabilityViolation {
                    resource: state.id.clone(),
                    excess_kva: apparent - state.rating_kva,
                });
            }
        }
        for (si, session) in scenario.sessions.iter().enumerate() {
            if !session.connected_at(k) {
                continue;
            }
            let p = ev_powers[si];
            if p < session.p_min_kw - 1e-7 || p > session.p_max_kw + 1e-7 {
                events.push(Event::PowerBoundViolation {
                    resource: format!("{} plug {}", session.station, session.plug),
                    excess_kw: (session.p_min_kw - p).max(p - session.p_max_kw),
                });
            }
        }

        // realize: true uncontrollables plus actuated setpoints
        let mut station_p = vec![0.0; scenario.evcs.len()];
        for (si, &p) in ev_powers.iter().enumerate() {
            station_p[session_station[si]] += p;
        }
        let true_load_p: Vec<f64> = scenario.trace.load_p_kw.iter().map(|s| s[k]).collect();
        let true_load_q: Vec<f64> = scenario.trace.load_q_kvar.iter().map(|s| s[k]).collect();
        let true_pv_p: Vec<f64> = scenario.trace.pv_p_kw.iter().map(|s| s[k]).collect();
        let inj = compose_injections(
            scenario,
            &roster,
            &true_load_p,
            &true_load_q,
            &true_pv_p,
            &bess_setpoints,
            &station_p,
        );
        let op = solve_power_flow(net, &inj, &pf_opts).map_err(|e| SimError::Abort {
            step: k,
            cause: format!("power flow diverged on realized injections: {e}"),
        })?;

        // advance resource states with the realized powers
        for (b, state) in bess.iter_mut().enumerate() {
            let (p, _) = bess_setpoints[b];
            *state = bess_soc_step(state, p, STEP_SECONDS, k).map_err(|e| SimError::Abort {
                step: k,
                cause: e.to_string(),
            })?;
        }
        for (si, session) in scenario.sessions.iter().enumerate() {
            if session.connected_at(k) {
                ev_soc[si] = evcs_soc_step(session, ev_soc[si], ev_powers[si], STEP_SECONDS, k)
                    .map_err(|e| SimError::Abort {
                        step: k,
                        cause: e.to_string(),
                    })?;
                ev_last_p[si] = ev_powers[si];
            }
        }

        let measured = noise.measure(scenario, k, op.p0_kw);
        ledger.advance(measured.p0_kw);

        record.steps.push(StepRecord {
            k,
            plan_kw: scenario.plan.at_step(k),
            p0_kw: op.p0_kw,
            q0_kvar: op.q0_kvar,
            p0_meas_kw: measured.p0_kw,
            bess: bess
                .iter()
                .enumerate()
                .map(|(b, s)| BessRecord {
                    id: s.id.clone(),
                    p_kw: bess_setpoints[b].0,
                    q_kvar: bess_setpoints[b].1,
                    soc: s.soc,
                })
                .collect(),
            ev: scenario
                .sessions
                .iter()
                .enumerate()
                .filter(|(_, s)| s.connected_at(k))
                .map(|(si, s)| EvRecord {
                    station: s.station.clone(),
                    plug: s.plug,
                    p_kw: ev_powers[si],
                    soc: ev_soc[si],
                })
                .collect(),
            solver: solver_rec,
            events,
        });

        prev_meas = Some(measured);
        prev_bess_pq = bess_setpoints;
        prev_station_p = station_p;

        let elapsed = step_start.elapsed();
        if elapsed > stats.max_step_wall {
            stats.max_step_wall = elapsed;
        }
    }

    stats.total_wall = run_start.elapsed();
    stats.final_bess_soc = bess.iter().map(|b| b.soc).collect();
    Ok((record, stats))
}

pub fn run_day(scenario: &Scenario, opts: &RunOptions) -> Result<(RunRecord, RunStats), SimError> {
    run_day_from(scenario, opts, None)
}

/// Run several days back to back, carrying each battery's final SoC into
/// the next day.
pub fn run_chain(
    scenarios: &[Scenario],
    opts: &RunOptions,
) -> Result<Vec<(RunRecord, RunStats)>, SimError> {
    let mut out = Vec::with_capacity(scenarios.len());
    let mut carry: Option<Vec<f64>> = None;
    for scenario in scenarios {
        let (rec, stats) = run_day_from(scenario, opts, carry.as_deref())?;
        carry = Some(stats.final_bess_soc.clone());
        out.push((rec, stats));
    }
    Ok(out)
}

#[allow(clippy::too_many_arguments)]
fn control_step(
    scenario: &Scenario,
    roster: &Roster,
    mpc_config: &crate::mpc::MpcConfig,
    backend: &SimplexBackend,
    lp_options: &SolveOptions,
    k: usize,
    ledger: &TrackingLedger,
    meas: &Measured,
    bess: &[crate::resources::BessState],
    ev_soc: &[f64],
    ev_last_p: &[f64],
    session_station: &[usize],
    prev_bess_pq: &[(f64, f64)],
    prev_station_p: &[f64],
    events: &mut Vec<Event>,
    stats: &mut RunStats,
) -> Result<(Vec<(f64, f64)>, Vec<f64>, SolverRecord), SimError> {
    let net = &scenario.network;
    let incurred = ledger.incurred_error(&scenario.plan, scenario.control.prefactor);

    let forecasts = if scenario.control.perfect_foresight {
        forecast_from_truth(&scenario.trace, k).map_err(SimError::Forecast)?
    } else {
        let snapshot = MeasurementSnapshot {
            load_p_kw: meas.load_p.clone(),
            load_q_kvar: meas.load_q.clone(),
            ghi_wm2: meas.ghi,
            t_air_c: meas.t_air,
        };
        let pf: Vec<f64> = scenario.loads.iter().map(|l| l.power_factor).collect();
        forecast_all(&scenario.day_ahead_load_kw, &pf, &scenario.pv, k, &snapshot)
            .map_err(SimError::Forecast)?
    };

    // reconstruct the operating point from measured channels and the
    // previously actuated setpoints, then linearize there
    let inj_meas = compose_injections(
        scenario,
        roster,
        &meas.load_p,
        &meas.load_q,
        &meas.pv_p,
        prev_bess_pq,
        prev_station_p,
    );
    let op_meas =
        solve_power_flow(net, &inj_meas, &PowerFlowOptions::default()).map_err(|e| {
            SimError::Abort {
                step: k,
                cause: format!("power flow diverged on measured injections: {e}"),
            }
        })?;
    let lin = linearize(net, &op_meas).map_err(SimError::Grid)?;

    let live_sessions: Vec<PlugSession> = scenario
        .sessions
        .iter()
        .enumerate()
        .filter(|(_, s)| s.connected_at(k))
        .map(|(si, s)| PlugSession {
            station_idx: session_station[si],
            plug: s.plug,
            session: s,
            soc: ev_soc[si],
            last_p_kw: ev_last_p[si],
        })
        .collect();
    let live_index: Vec<usize> = scenario
        .sessions
        .iter()
        .enumerate()
        .filter(|(_, s)| s.connected_at(k))
        .map(|(si, _)| si)
        .collect();

    let plug_counts: Vec<usize> = scenario.evcs.iter().map(|e| e.plugs).collect();
    let inputs = AssembleInputs {
        k,
        plan: &scenario.plan,
        incurred_kwh: incurred,
        forecasts: &forecasts,
        lin: &lin,
        net,
        bess,
        bess_bus: &roster.bess_bus,
        sessions: &live_sessions,
        evcs_bus: &roster.evcs_bus,
        evcs_plug_count: &plug_counts,
        load_bus: &roster.load_bus,
        pv_bus: &roster.pv_bus,
        config: mpc_config,
    };

    let problem = assemble(&inputs, false).map_err(|e| SimError::Abort {
        step: k,
        cause: e.to_string(),
    })?;
    let solution = match solve_mpc(&problem, backend, lp_options) {
        Ok(sol) => sol,
        Err(MpcError::HardInfeasible(_)) => {
            // relax voltage/ampacity rows with penalized slack and retry
            let relaxed = assemble(&inputs, true).map_err(|e| SimError::Abort {
                step: k,
                cause: e.to_string(),
            })?;
            let sol = solve_mpc(&relaxed, backend, lp_options).map_err(|e| SimError::Abort {
                step: k,
                cause: format!("infeasible even after grid relaxation: {e}"),
            })?;
            stats.relaxed_steps += 1;
            events.push(Event::GridSlack {
                total_pu: sol.grid_slack_pu,
            });
            sol
        }
        Err(e) => {
            return Err(SimError::Abort {
                step: k,
                cause: e.to_string(),
            })
        }
    };
    if solution.outcome == SolverOutcome::IterationLimit {
        events.push(Event::SolverIterationLimit {
            iterations: solution.iterations,
        });
    }
    stats.lp_iterations += solution.iterations;

    let (bess_setpoints, live_ev_p) = solution.first_step();
    let mut ev_powers = vec![0.0; scenario.sessions.len()];
    for (pos, &si) in live_index.iter().enumerate() {
        ev_powers[si] = live_ev_p[pos];
    }

    Ok((
        bess_setpoints,
        ev_powers,
        SolverRecord {
            status: match solution.outcome {
                SolverOutcome::Optimal => "optimal".into(),
                SolverOutcome::IterationLimit => "iteration-limit".into(),
            },
            iterations: solution.iterations,
            objective: solution.objective,
            incurred_kwh: incurred,
            anticipated_kwh: solution.anticipated_kwh,
        },
    ))
}

fn counterfactual_ev_powers(
    scenario: &Scenario,
    k: usize,
    ev_soc: &[f64],
    policy: &CounterfactualEvcs,
) -> Result<Vec<f64>, SimError> {
    let mut powers = vec![0.0; scenario.sessions.len()];
    match policy {
        CounterfactualEvcs::Uncoordinated => {
            for (si, session) in scenario.sessions.iter().enumerate() {
                if !session.connected_at(k) {
                    continue;
                }
                let need_kwh = (session.soc_target - ev_soc[si]).max(0.0) * session.capacity_kwh;
                if need_kwh <= 0.0 {
                    continue;
                }
                let full = session.p_min_kw; // most negative: full charging
                let exact = -(need_kwh / crate::STEP_HOURS);
                powers[si] = full.max(exact).min(session.p_max_kw);
            }
        }
        CounterfactualEvcs::FromRecord(rec) => {
            let step = rec.steps.get(k).ok_or_else(|| SimError::Validation(
                "replay record is shorter than the day".into(),
            ))?;
            for (si, session) in scenario.sessions.iter().enumerate() {
                if !session.connected_at(k) {
                    continue;
                }
                if let Some(ev) = step
                    .ev
                    .iter()
                    .find(|e| e.station == session.station && e.plug == session.plug)
                {
                    powers[si] = ev.p_kw;
                }
            }
        }
    }
    Ok(powers)
}
