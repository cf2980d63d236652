//! Bundled synthetic scenarios.
//!
//! Two single-day scenarios shaped after qualitatively different day types
//! (a cloudy weekday with several charging sessions, and a rainy weekend day
//! with little PV and two sessions on one station), plus two variants to
//! form a four-day chain. All traces are synthetic and generated
//! deterministically from fixed seeds.
//!
//! The dispatch plan of each day is self-consistent with the day-ahead
//! expectations: it is the power-flow gcp power of the expected injections
//! (day-ahead demand and PV, scheduled EV charging, idle batteries), so the
//! controller's work is exactly the intra-day deviation.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::forecast::{pv_power, tan_from_power_factor, PvPlant};
use crate::grid::{
    build_network, solve_power_flow, BusDescription, BusKind, LineDescription,
    NetworkDescription, NodalInjections, PerUnitBase, PowerFlowOptions,
};
use crate::mpc::DispatchPlan;
use crate::resources::{BessState, EvSession, UncontrollableTrace};
use crate::{SLOTS_PER_DAY, STEPS_PER_DAY, STEPS_PER_SLOT, STEP_HOURS};

use super::scenario::{
    write_scenario_bundle, ChainFile, ControlSpec, EvcsSpec, LoadSpec, NoiseSpec, Scenario,
    SCHEMA_VERSION,
};
use super::SimError;

/// The bundled network: one MV slack bus feeding three LV feeders that host
/// two charging stations, two batteries, two building loads, and three PV
/// plants.
pub fn ell_network() -> NetworkDescription {
    let bus = |id: &str, kind: BusKind| BusDescription {
        id: id.into(),
        kind,
    };
    let line = |from: &str, to: &str, r: f64, x: f64, amp: f64| LineDescription {
        from: from.into(),
        to: to.into(),
        r_pu: r,
        x_pu: x,
        ampacity_pu: amp,
    };
    NetworkDescription {
        version: SCHEMA_VERSION,
        base: PerUnitBase {
            s_kva: 250.0,
            v_base_v: 400.0,
            slack_v_pu: 1.0,
        },
        s_max_kva: 630.0,
        v_bounds_pu: [0.95, 1.05],
        buses: vec![
            bus("B01", BusKind::Slack),
            bus("B02", BusKind::Pq),
            bus("B03", BusKind::Pq),
            bus("B05", BusKind::Pq),
            bus("B04", BusKind::Pq),
            bus("B06", BusKind::Pq),
            bus("B20", BusKind::Pq),
            bus("B08", BusKind::Pq),
            bus("B21", BusKind::Pq),
            bus("B10", BusKind::Pq),
            bus("B14", BusKind::Pq),
            bus("B16", BusKind::Pq),
        ],
        lines: vec![
            line("B01", "B02", 0.004, 0.016, 2.5),
            line("B01", "B03", 0.006, 0.018, 2.0),
            line("B01", "B05", 0.004, 0.016, 2.5),
            line("B02", "B04", 0.008, 0.006, 1.5),
            line("B02", "B06", 0.006, 0.005, 1.8),
            line("B02", "B20", 0.010, 0.007, 1.2),
            line("B03", "B08", 0.008, 0.006, 1.2),
            line("B03", "B21", 0.012, 0.008, 1.0),
            line("B05", "B10", 0.006, 0.005, 1.8),
            line("B05", "B14", 0.010, 0.007, 1.0),
            line("B05", "B16", 0.010, 0.007, 1.0),
        ],
    }
}

fn bess_roster() -> Vec<BessState> {
    vec![
        BessState {
            id: "BESS1".into(),
            bus: "B04".into(),
            soc: 0.5,
            soc_min: 0.2,
            soc_max: 0.9,
            energy_kwh: 25.0,
            rating_kva: 25.0,
        },
        BessState {
            id: "BESS2".into(),
            bus: "B10".into(),
            soc: 0.5,
            soc_min: 0.2,
            soc_max: 0.9,
            energy_kwh: 300.0,
            rating_kva: 150.0,
        },
    ]
}

fn evcs_roster() -> Vec<EvcsSpec> {
    vec![
        EvcsSpec {
            id: "EVCS1".into(),
            bus: "B06".into(),
            plugs: 5,
            concurrency_cap: 2,
            plug_rating_kw: vec![43.0, 22.0, 150.0, 150.0, 150.0],
        },
        EvcsSpec {
            id: "EVCS2".into(),
            bus: "B08".into(),
            plugs: 3,
            concurrency_cap: 2,
            plug_rating_kw: vec![22.0, 22.0, 10.0],
        },
    ]
}

fn pv_roster() -> Vec<PvPlant> {
    vec![
        PvPlant::defaults("PV1", "B14", 13.0),
        PvPlant::defaults("PV2", "B16", 16.0),
        PvPlant::defaults("PV3", "B16", 13.2),
    ]
}

fn load_roster() -> Vec<LoadSpec> {
    vec![
        LoadSpec {
            id: "L1".into(),
            bus: "B20".into(),
            power_factor: 0.95,
        },
        LoadSpec {
            id: "L2".into(),
            bus: "B21".into(),
            power_factor: 0.95,
        },
    ]
}

/// Weather and demand shape parameters of a synthetic day.
#[derive(Debug, Clone)]
pub struct DayShape {
    pub name: String,
    /// Seed for the synthetic processes (clouds, demand deviations).
    pub synth_seed: u64,
    /// Seed for measurement noise during runs.
    pub run_seed: u64,
    pub ghi_peak_wm2: f64,
    /// Mean cloud transmission assumed day-ahead.
    pub cloud_expectation: f64,
    /// Volatile broken-cloud process when true; smooth overcast otherwise.
    pub volatile_clouds: bool,
    /// Peak of the main building load above its night base, kW.
    pub load_peak_kw: f64,
    pub weekend: bool,
    pub sessions: Vec<EvSession>,
}

fn smoothstep(e0: f64, e1: f64, x: f64) -> f64 {
    let t = ((x - e0) / (e1 - e0)).clamp(0.0, 1.0);
    t * t * (3.0 - 2.0 * t)
}

/// Office-style demand shape over slots, in [0, 1].
fn demand_shape(y: usize, weekend: bool) -> f64 {
    let hour = y as f64 * 24.0 / SLOTS_PER_DAY as f64;
    if weekend {
        0.35 * smoothstep(8.0, 11.0, hour) * (1.0 - smoothstep(15.0, 20.0, hour))
    } else {
        let up = smoothstep(6.5, 9.0, hour);
        let down = 1.0 - smoothstep(16.5, 19.5, hour);
        let lunch_dip = 1.0 - 0.15 * smoothstep(11.5, 12.2, hour) * (1.0 - smoothstep(12.8, 13.6, hour));
        up * down * lunch_dip
    }
}

fn clear_sky(k: usize, peak: f64) -> f64 {
    let sunrise = 780.0; // 06:30
    let sunset = 2400.0; // 20:00
    let x = (k as f64 - sunrise) / (sunset - sunrise);
    if !(0.0..=1.0).contains(&x) {
        return 0.0;
    }
    peak * (PI * x).sin().max(0.0).powf(1.15)
}

fn air_temperature(k: usize, base: f64, swing: f64) -> f64 {
    base + swing * (PI * (k as f64 - 840.0) / 1800.0).sin().max(-0.3)
}

/// First-order autoregressive deviation process.
fn ou_series(rng: &mut ChaCha8Rng, n: usize, sigma: f64, corr_steps: f64) -> Vec<f64> {
    let rho = (-1.0 / corr_steps).exp();
    let normal = Normal::new(0.0, 1.0).unwrap();
    let mut x = 0.0;
    (0..n)
        .map(|_| {
            x = rho * x + sigma * (1.0 - rho * rho).sqrt() * normal.sample(rng);
            x
        })
        .collect()
}

/// Two-state appliance cycling: off, or on at a per-event power level.
fn appliance_series(
    rng: &mut ChaCha8Rng,
    n: usize,
    amp_range: (f64, f64),
    p_on: f64,
    p_off: f64,
) -> Vec<f64> {
    let mut on = false;
    let mut level = 0.0;
    (0..n)
        .map(|_| {
            if on {
                if rng.gen::<f64>() < p_off {
                    on = false;
                }
            } else if rng.gen::<f64>() < p_on {
                on = true;
                level = rng.gen_range(amp_range.0..amp_range.1);
            }
            if on {
                level
            } else {
                0.0
            }
        })
        .collect()
}

/// Broken-cloud transmission process with the given stationary expectation
/// structure: clear spells at full transmission, cloudy spells at a dip
/// level drawn per event.
fn cloud_series(rng: &mut ChaCha8Rng, n: usize, volatile: bool) -> Vec<f64> {
    if !volatile {
        // overcast: slow smooth wander around a low transmission
        let wander = ou_series(rng, n, 0.05, 120.0);
        return (0..n)
            .map(|k| (0.13 + 0.06 * (k as f64 / 400.0).sin() + wander[k]).clamp(0.02, 0.35))
            .collect();
    }
    let mut cloudy = false;
    let mut dip = 0.4;
    (0..n)
        .map(|_| {
            if cloudy {
                if rng.gen::<f64>() < 1.0 / 20.0 {
                    cloudy = false;
                }
            } else if rng.gen::<f64>() < 1.0 / 40.0 {
                cloudy = true;
                dip = rng.gen_range(0.2..0.6);
            }
            if cloudy {
                dip
            } else {
                1.0
            }
        })
        .collect()
}

/// Build one synthetic day from its shape parameters.
pub fn synth_day(shape: &DayShape) -> Scenario {
    let mut rng = ChaCha8Rng::seed_from_u64(shape.synth_seed);
    let network_desc = ell_network();
    let network = build_network(&network_desc).expect("bundled network is valid");
    let loads = load_roster();
    let pv = pv_roster();

    // day-ahead demand profiles (slots)
    let night_base = [if shape.weekend { 3.5 } else { 5.5 }, 1.4];
    let peaks = [shape.load_peak_kw, shape.load_peak_kw * 0.22];
    let day_ahead_load: Vec<Vec<f64>> = (0..loads.len())
        .map(|li| {
            (0..SLOTS_PER_DAY)
                .map(|y| night_base[li] + peaks[li] * demand_shape(y, shape.weekend))
                .collect()
        })
        .collect();

    // true demand: upsampled day-ahead plus autoregressive deviations and
    // appliance cycling unknown to the day-ahead stage
    let dev1 = ou_series(&mut rng, STEPS_PER_DAY, if shape.weekend { 0.4 } else { 0.55 }, 30.0);
    let dev2 = ou_series(&mut rng, STEPS_PER_DAY, 0.15, 30.0);
    let appl1 = appliance_series(&mut rng, STEPS_PER_DAY, (1.4, 2.8), 1.0 / 80.0, 1.0 / 50.0);
    let appl2 = appliance_series(&mut rng, STEPS_PER_DAY, (0.4, 0.9), 1.0 / 90.0, 1.0 / 60.0);
    let tan_phi = tan_from_power_factor(0.95);
    let mut load_p = vec![Vec::with_capacity(STEPS_PER_DAY); 2];
    let mut load_q = vec![Vec::with_capacity(STEPS_PER_DAY); 2];
    for k in 0..STEPS_PER_DAY {
        let y = k / STEPS_PER_SLOT;
        let frac = (k % STEPS_PER_SLOT) as f64 / STEPS_PER_SLOT as f64;
        for li in 0..2 {
            let da = &day_ahead_load[li];
            let base = if y + 1 < SLOTS_PER_DAY {
                da[y] + (da[y + 1] - da[y]) * frac
            } else {
                da[y]
            };
            let dev = if li == 0 { dev1[k] + appl1[k] } else { dev2[k] + appl2[k] };
            let p = (base + dev).max(0.2);
            load_p[li].push(p);
            load_q[li].push(p * tan_phi);
        }
    }

    // weather: clear-sky envelope scaled by the cloud transmission process
    let clouds = cloud_series(&mut rng, STEPS_PER_DAY, shape.volatile_clouds);
    let ghi: Vec<f64> = (0..STEPS_PER_DAY)
        .map(|k| clear_sky(k, shape.ghi_peak_wm2) * clouds[k])
        .collect();
    let temp_base = if shape.weekend { 7.0 } else { 11.0 };
    let t_air: Vec<f64> = (0..STEPS_PER_DAY)
        .map(|k| air_temperature(k, temp_base, 7.0))
        .collect();
    let pv_p: Vec<Vec<f64>> = pv
        .iter()
        .map(|plant| {
            (0..STEPS_PER_DAY)
                .map(|k| pv_power(ghi[k], t_air[k], plant))
                .collect()
        })
        .collect();

    let trace = UncontrollableTrace {
        load_p_kw: load_p,
        load_q_kvar: load_q,
        pv_p_kw: pv_p,
        ghi_wm2: ghi,
        t_air_c: t_air,
    };

    // dispatch plan: power flow of the day-ahead expected injections,
    // scheduled EV charging placed at its station's bus
    let roster_bus = |bus: &str| {
        network
            .non_slack_index(network.bus_by_name(bus).unwrap())
            .unwrap()
    };
    let plan_values: Vec<f64> = (0..SLOTS_PER_DAY)
        .map(|y| {
            let k_mid = y * STEPS_PER_SLOT;
            let mut inj = NodalInjections::zeros(&network);
            for (li, l) in loads.iter().enumerate() {
                let p = day_ahead_load[li][y];
                let bus = roster_bus(&l.bus);
                inj.p_kw[bus] -= p;
                inj.q_kvar[bus] -= p * tan_phi;
            }
            let ghi_da = clear_sky(k_mid, shape.ghi_peak_wm2) * shape.cloud_expectation;
            let t_da = air_temperature(k_mid, temp_base, 7.0);
            for plant in &pv {
                let bus = roster_bus(&plant.bus);
                inj.p_kw[bus] += pv_power(ghi_da, t_da, plant);
            }
            for s in &shape.sessions {
                let bus = roster_bus(if s.station == "EVCS1" { "B06" } else { "B08" });
                inj.p_kw[bus] -= station_slot_demand(s, y);
            }
            let op = solve_power_flow(&network, &inj, &PowerFlowOptions::default())
                .expect("day-ahead power flow converges");
            op.p0_kw
        })
        .collect();
    let plan = DispatchPlan::new(plan_values, network.s_max_kva).expect("plan within capacity");

    Scenario {
        name: shape.name.clone(),
        network_desc,
        network,
        plan,
        trace,
        day_ahead_load_kw: day_ahead_load,
        sessions: shape.sessions.clone(),
        bess: bess_roster(),
        evcs: evcs_roster(),
        pv,
        loads,
        noise: NoiseSpec::default(),
        seed: shape.run_seed,
        control: ControlSpec::default(),
    }
}

/// Per-slot scheduled charging demand of one session (kW, positive).
fn station_slot_demand(s: &EvSession, y: usize) -> f64 {
    let need_kwh = (s.soc_target - s.soc_arrival).max(0.0) * s.capacity_kwh;
    let full_kw = -s.p_min_kw;
    if full_kw <= 0.0 || need_kwh <= 0.0 {
        return 0.0;
    }
    let full_steps = (need_kwh / (full_kw * STEP_HOURS)).floor() as usize;
    let rem_kw = (need_kwh - full_steps as f64 * full_kw * STEP_HOURS) / STEP_HOURS;
    let slot_range = (y * STEPS_PER_SLOT)..((y + 1) * STEPS_PER_SLOT);
    let mut total = 0.0;
    for (i, k) in (s.arrival_k..s.departure_k).enumerate() {
        if !slot_range.contains(&k) {
            continue;
        }
        if i < full_steps {
            total += full_kw;
        } else if i == full_steps {
            total += rem_kw;
        }
    }
    total / STEPS_PER_SLOT as f64
}

fn session(
    station: &str,
    plug: usize,
    arrival_k: usize,
    departure_k: usize,
    soc_arrival: f64,
    soc_target: f64,
    capacity_kwh: f64,
    full_power_kw: f64,
) -> EvSession {
    EvSession {
        station: station.into(),
        plug,
        arrival_k,
        departure_k,
        soc_arrival,
        soc_target,
        capacity_kwh,
        p_min_kw: -full_power_kw,
        p_max_kw: 0.0,
    }
}

/// Cloudy weekday with several charging sessions on both stations.
pub fn day1_shape() -> DayShape {
    DayShape {
        name: "day1".into(),
        synth_seed: 1001,
        run_seed: 42,
        ghi_peak_wm2: 850.0,
        cloud_expectation: 0.8,
        volatile_clouds: true,
        load_peak_kw: 13.0,
        weekend: false,
        sessions: vec![
            session("EVCS1", 0, 980, 1380, 0.30, 0.80, 60.0, 40.0),
            session("EVCS1", 1, 1080, 1500, 0.45, 0.80, 52.0, 20.0),
            session("EVCS1", 2, 1560, 1700, 0.40, 0.70, 70.0, 60.0),
            session("EVCS1", 0, 1800, 2160, 0.25, 0.70, 48.0, 35.0),
            session("EVCS2", 0, 1020, 2040, 0.55, 0.85, 40.0, 11.0),
            session("EVCS2", 1, 1200, 1920, 0.60, 0.90, 35.0, 7.0),
        ],
    }
}

/// Rainy weekend day: low irradiance and two sessions on EVCS1 only.
pub fn day2_shape() -> DayShape {
    DayShape {
        name: "day2".into(),
        synth_seed: 1002,
        run_seed: 43,
        ghi_peak_wm2: 850.0,
        cloud_expectation: 0.13,
        volatile_clouds: false,
        load_peak_kw: 6.0,
        weekend: true,
        sessions: vec![
            session("EVCS1", 0, 1200, 1560, 0.50, 0.80, 45.0, 20.0),
            session("EVCS1", 1, 1680, 1980, 0.35, 0.75, 50.0, 18.0),
        ],
    }
}

fn day3_shape() -> DayShape {
    let mut shape = day1_shape();
    shape.name = "day3".into();
    shape.synth_seed = 1003;
    shape.run_seed = 44;
    shape.ghi_peak_wm2 = 800.0;
    shape.load_peak_kw = 14.0;
    shape.sessions = vec![
        session("EVCS1", 0, 900, 1350, 0.35, 0.85, 55.0, 35.0),
        session("EVCS1", 1, 1500, 1900, 0.40, 0.80, 62.0, 22.0),
        session("EVCS2", 0, 1100, 2000, 0.50, 0.85, 38.0, 11.0),
    ];
    shape
}

fn day4_shape() -> DayShape {
    let mut shape = day2_shape();
    shape.name = "day4".into();
    shape.synth_seed = 1004;
    shape.run_seed = 45;
    shape.load_peak_kw = 5.0;
    shape.sessions = vec![session("EVCS1", 0, 1300, 1700, 0.45, 0.75, 48.0, 18.0)];
    shape
}

pub fn day1() -> Scenario {
    synth_day(&day1_shape())
}

pub fn day2() -> Scenario {
    synth_day(&day2_shape())
}

/// The four contiguous days of the chained run.
pub fn chain_days() -> Vec<Scenario> {
    vec![
        synth_day(&day1_shape()),
        synth_day(&day2_shape()),
        synth_day(&day3_shape()),
        synth_day(&day4_shape()),
    ]
}

/// Write all bundled scenarios (and the chain manifest) under `root`.
pub fn write_bundles(root: &Path) -> Result<Vec<PathBuf>, SimError> {
    let days = chain_days();
    let mut written = Vec::new();
    for day in &days {
        let path = write_scenario_bundle(&root.join(&day.name), day)?;
        written.push(path);
    }
    let chain = ChainFile {
        version: SCHEMA_VERSION,
        days: days
            .iter()
            .map(|d| format!("{}/scenario.json", d.name))
            .collect(),
    };
    let chain_path = root.join("chain.json");
    std::fs::write(
        &chain_path,
        format!(
            "{:#}\n",
            serde_json::to_value(&chain).expect("serializable")
        ),
    )
    .map_err(|e| SimError::Io {
        path: chain_path.clone(),
        detail: e.to_string(),
    })?;
    written.push(chain_path);
    Ok(written)
}

/// Minimal scenario for tests and benches: the bundled network with constant
/// demand, no PV, no sessions, and a plan equal to the uncontrolled gcp
/// power (so a perfect controller leaves the batteries idle).
pub fn micro_flat(load_kw: f64) -> Scenario {
    let network_desc = ell_network();
    let network = build_network(&network_desc).expect("valid");
    let loads = load_roster();
    let tan_phi = tan_from_power_factor(0.95);
    let split = [0.8, 0.2];
    let trace = UncontrollableTrace {
        load_p_kw: (0..2)
            .map(|li| vec![load_kw * split[li]; STEPS_PER_DAY])
            .collect(),
        load_q_kvar: (0..2)
            .map(|li| vec![load_kw * split[li] * tan_phi; STEPS_PER_DAY])
            .collect(),
        pv_p_kw: vec![vec![0.0; STEPS_PER_DAY]; 3],
        ghi_wm2: vec![0.0; STEPS_PER_DAY],
        t_air_c: vec![10.0; STEPS_PER_DAY],
    };
    let day_ahead: Vec<Vec<f64>> = (0..2)
        .map(|li| vec![load_kw * split[li]; SLOTS_PER_DAY])
        .collect();
    let mut inj = NodalInjections::zeros(&network);
    for (li, l) in loads.iter().enumerate() {
        let bus = network
            .non_slack_index(network.bus_by_name(&l.bus).unwrap())
            .unwrap();
        inj.p_kw[bus] -= load_kw * split[li];
        inj.q_kvar[bus] -= load_kw * split[li] * tan_phi;
    }
    let op = solve_power_flow(&network, &inj, &PowerFlowOptions::default()).unwrap();
    let plan = DispatchPlan::new(vec![op.p0_kw; SLOTS_PER_DAY], network.s_max_kva).unwrap();
    Scenario {
        name: "micro-flat".into(),
        network_desc,
        network,
        plan,
        trace,
        day_ahead_load_kw: day_ahead,
        sessions: vec![],
        bess: bess_roster(),
        evcs: evcs_roster(),
        pv: pv_roster(),
        loads,
        noise: NoiseSpec {
            power_std_kw: 0.0,
            ghi_std_wm2: 0.0,
            temp_std_c: 0.0,
        },
        seed: 7,
        control: ControlSpec::default(),
    }
}
