//! Scenario bundles: the network, dispatch plan, true uncontrollable traces,
//! day-ahead profiles, EV sessions, resource rosters, and run configuration.
//!
//! On disk a scenario is a directory holding `scenario.json` plus the files
//! it references (network JSON, plan / traces / day-ahead CSV, sessions
//! JSON). All schemas carry a `version` field.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::forecast::PvPlant;
use crate::grid::{build_network, NetworkDescription, NetworkModel};
use crate::mpc::{DispatchPlan, MpcConfig, PrefactorConvention};
use crate::resources::{validate_session_schedule, BessState, EvSession, UncontrollableTrace};
use crate::{SLOTS_PER_DAY, STEPS_PER_DAY};

use super::SimError;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvcsSpec {
    pub id: String,
    pub bus: String,
    pub plugs: usize,
    pub concurrency_cap: usize,
    /// Per-plug peak power, kW.
    pub plug_rating_kw: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LoadSpec {
    pub id: String,
    pub bus: String,
    /// Lagging power factor used to derive reactive demand forecasts.
    pub power_factor: f64,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct NoiseSpec {
    /// Std dev of the gaussian noise on every power measurement channel, kW.
    pub power_std_kw: f64,
    pub ghi_std_wm2: f64,
    pub temp_std_c: f64,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        Self {
            power_std_kw: 0.1,
            ghi_std_wm2: 0.0,
            temp_std_c: 0.0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ControlSpec {
    pub polygon_segments: usize,
    pub objective_power_scale_kw: f64,
    pub grid_slack_penalty_per_pu: f64,
    /// Replace forecasts with the true trace slice (testing aid).
    pub perfect_foresight: bool,
    pub prefactor: PrefactorConvention,
}

impl Default for ControlSpec {
    fn default() -> Self {
        let mpc = MpcConfig::default();
        Self {
            polygon_segments: mpc.polygon_segments,
            objective_power_scale_kw: mpc.objective_power_scale_kw,
            grid_slack_penalty_per_pu: mpc.grid_slack_penalty_per_pu,
            perfect_foresight: false,
            prefactor: mpc.prefactor,
        }
    }
}

impl ControlSpec {
    pub fn mpc_config(&self) -> MpcConfig {
        MpcConfig {
            polygon_segments: self.polygon_segments,
            objective_power_scale_kw: self.objective_power_scale_kw,
            grid_slack_penalty_per_pu: self.grid_slack_penalty_per_pu,
            prefactor: self.prefactor,
        }
    }
}

/// `scenario.json` schema: all paths are relative to the file's directory.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScenarioFile {
    pub version: u32,
    pub name: String,
    pub network: String,
    pub plan: String,
    pub traces: String,
    pub day_ahead: String,
    pub sessions: String,
    pub bess: Vec<BessState>,
    pub evcs: Vec<EvcsSpec>,
    pub pv: Vec<PvPlant>,
    pub loads: Vec<LoadSpec>,
    #[serde(default)]
    pub noise: NoiseSpec,
    pub seed: u64,
    #[serde(default)]
    pub control: ControlSpec,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SessionsFile {
    pub version: u32,
    pub sessions: Vec<EvSession>,
}

/// A chain of scenario days run back to back with battery SoC carried over.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChainFile {
    pub version: u32,
    pub days: Vec<String>,
}

/// Fully loaded and validated scenario.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: String,
    pub network_desc: NetworkDescription,
    pub network: NetworkModel,
    pub plan: DispatchPlan,
    pub trace: UncontrollableTrace,
    /// `[load][slot]` day-ahead demand, kW.
    pub day_ahead_load_kw: Vec<Vec<f64>>,
    pub sessions: Vec<EvSession>,
    pub bess: Vec<BessState>,
    pub evcs: Vec<EvcsSpec>,
    pub pv: Vec<PvPlant>,
    pub loads: Vec<LoadSpec>,
    pub noise: NoiseSpec,
    pub seed: u64,
    pub control: ControlSpec,
}

/// Bus indices of every resource, resolved once against the network.
#[derive(Debug, Clone)]
pub struct Roster {
    pub bess_bus: Vec<usize>,
    pub evcs_bus: Vec<usize>,
    pub load_bus: Vec<usize>,
    pub pv_bus: Vec<usize>,
}

impl Scenario {
    pub fn validate(&self) -> Result<(), SimError> {
        let check_bus = |name: &str, owner: &str| -> Result<usize, SimError> {
            let id = self
                .network
                .bus_by_name(name)
                .ok_or_else(|| SimError::Validation(format!("{owner} references unknown bus {name}")))?;
            self.network.non_slack_index(id).ok_or_else(|| {
                SimError::Validation(format!("{owner} cannot sit on the slack bus {name}"))
            })
        };
        for b in &self.bess {
            b.validate().map_err(SimError::Resource)?;
            check_bus(&b.bus, &b.id)?;
        }
        for e in &self.evcs {
            check_bus(&e.bus, &e.id)?;
            if e.plug_rating_kw.len() != e.plugs {
                return Err(SimError::Validation(format!(
                    "{}: {} plug ratings for {} plugs",
                    e.id,
                    e.plug_rating_kw.len(),
                    e.plugs
                )));
            }
            if e.concurrency_cap == 0 || e.concurrency_cap > e.plugs {
                return Err(SimError::Validation(format!(
                    "{}: concurrency cap {} invalid for {} plugs",
                    e.id, e.concurrency_cap, e.plugs
                )));
            }
        }
        for l in &self.loads {
            check_bus(&l.bus, &l.id)?;
            if !(l.power_factor > 0.0 && l.power_factor <= 1.0) {
                return Err(SimError::Validation(format!(
                    "{}: power factor must be in (0, 1]",
                    l.id
                )));
            }
        }
        for p in &self.pv {
            check_bus(&p.bus, &p.id)?;
        }
        self.trace.validate().map_err(SimError::Resource)?;
        if self.trace.load_p_kw.len() != self.loads.len()
            || self.trace.pv_p_kw.len() != self.pv.len()
        {
            return Err(SimError::Validation(
                "trace columns do not match the load/pv roster".into(),
            ));
        }
        if self.day_ahead_load_kw.len() != self.loads.len() {
            return Err(SimError::Validation(
                "day-ahead columns do not match the load roster".into(),
            ));
        }
        for p in &self.day_ahead_load_kw {
            if p.len() != SLOTS_PER_DAY {
                return Err(SimError::Validation(format!(
                    "day-ahead profile has {} slots, expected {SLOTS_PER_DAY}",
                    p.len()
                )));
            }
        }
        let stations: Vec<(String, usize, usize)> = self
            .evcs
            .iter()
            .map(|e| (e.id.clone(), e.plugs, e.concurrency_cap))
            .collect();
        validate_session_schedule(&self.sessions, &stations).map_err(SimError::Resource)?;
        for s in &self.sessions {
            if s.departure_k > STEPS_PER_DAY {
                return Err(SimError::Validation(format!(
                    "session on {} departs at {} beyond the day",
                    s.station, s.departure_k
                )));
            }
            let station = self.evcs.iter().find(|e| e.id == s.station).unwrap();
            if -s.p_min_kw > station.plug_rating_kw[s.plug] + 1e-9 {
                return Err(SimError::Validation(format!(
                    "session on {} plug {} asks {} kW beyond the plug rating {}",
                    s.station, s.plug, -s.p_min_kw, station.plug_rating_kw[s.plug]
                )));
            }
        }
        Ok(())
    }

    pub fn roster(&self) -> Roster {
        let idx = |bus: &str| {
            self.network
                .non_slack_index(self.network.bus_by_name(bus).expect("validated"))
                .expect("validated")
        };
        Roster {
            bess_bus: self.bess.iter().map(|b| idx(&b.bus)).collect(),
            evcs_bus: self.evcs.iter().map(|e| idx(&e.bus)).collect(),
            load_bus: self.loads.iter().map(|l| idx(&l.bus)).collect(),
            pv_bus: self.pv.iter().map(|p| idx(&p.bus)).collect(),
        }
    }

    pub fn station_index(&self, id: &str) -> Option<usize> {
        self.evcs.iter().position(|e| e.id == id)
    }
}

fn read_to_string(path: &Path) -> Result<String, SimError> {
    fs::read_to_string(path).map_err(|e| SimError::Io {
        path: path.to_path_buf(),
        detail: e.to_string(),
    })
}

fn parse_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, SimError> {
    let text = read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| SimError::Parse {
        path: path.to_path_buf(),
        detail: format!("line {}, column {}: {e}", e.line(), e.column()),
    })
}

/// Read a single-column CSV of `SLOTS_PER_DAY` plan values.
pub fn read_plan_csv(path: &Path, s_max_kva: f64) -> Result<DispatchPlan, SimError> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| SimError::Io {
        path: path.to_path_buf(),
        detail: e.to_string(),
    })?;
    let mut values = Vec::with_capacity(SLOTS_PER_DAY);
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        let v: f64 = rec
            .get(1)
            .ok_or_else(|| parse_line_err(path, i + 2, "missing p_disp_kw column"))?
            .trim()
            .parse()
            .map_err(|e| parse_line_err(path, i + 2, &format!("bad number: {e}")))?;
        values.push(v);
    }
    DispatchPlan::new(values, s_max_kva).map_err(|e| SimError::Validation(e.to_string()))
}

pub fn write_plan_csv(path: &Path, plan: &DispatchPlan) -> Result<(), SimError> {
    let mut out = String::from("slot,p_disp_kw\n");
    for (y, v) in plan.values().iter().enumerate() {
        out.push_str(&format!("{y},{v}\n"));
    }
    fs::write(path, out).map_err(|e| SimError::Io {
        path: path.to_path_buf(),
        detail: e.to_string(),
    })
}

fn csv_err(path: &Path, e: csv::Error) -> SimError {
    let detail = match e.position() {
        Some(pos) => format!("line {}: {e}", pos.line()),
        None => e.to_string(),
    };
    SimError::Parse {
        path: path.to_path_buf(),
        detail,
    }
}

fn parse_line_err(path: &Path, line: usize, detail: &str) -> SimError {
    SimError::Parse {
        path: path.to_path_buf(),
        detail: format!("line {line}: {detail}"),
    }
}

/// Read the true-trace CSV. Column names are `ghi_wm2`, `t_air_c`,
/// `load_p_kw:<id>`, `load_q_kvar:<id>`, and `pv_p_kw:<id>`, matched against
/// the rosters.
pub fn read_traces_csv(
    path: &Path,
    loads: &[LoadSpec],
    pv: &[PvPlant],
) -> Result<UncontrollableTrace, SimError> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| SimError::Io {
        path: path.to_path_buf(),
        detail: e.to_string(),
    })?;
    let headers = rdr
        .headers()
        .map_err(|e| csv_err(path, e))?
        .clone();
    let col = |name: &str| -> Result<usize, SimError> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| parse_line_err(path, 1, &format!("missing column {name}")))
    };
    let ghi_col = col("ghi_wm2")?;
    let t_col = col("t_air_c")?;
    let load_p_cols: Vec<usize> = loads
        .iter()
        .map(|l| col(&format!("load_p_kw:{}", l.id)))
        .collect::<Result<_, _>>()?;
    let load_q_cols: Vec<usize> = loads
        .iter()
        .map(|l| col(&format!("load_q_kvar:{}", l.id)))
        .collect::<Result<_, _>>()?;
    let pv_cols: Vec<usize> = pv
        .iter()
        .map(|p| col(&format!("pv_p_kw:{}", p.id)))
        .collect::<Result<_, _>>()?;

    let mut trace = UncontrollableTrace {
        load_p_kw: vec![Vec::with_capacity(STEPS_PER_DAY); loads.len()],
        load_q_kvar: vec![Vec::with_capacity(STEPS_PER_DAY); loads.len()],
        pv_p_kw: vec![Vec::with_capacity(STEPS_PER_DAY); pv.len()],
        ghi_wm2: Vec::with_capacity(STEPS_PER_DAY),
        t_air_c: Vec::with_capacity(STEPS_PER_DAY),
    };
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        let get = |c: usize| -> Result<f64, SimError> {
            rec.get(c)
                .ok_or_else(|| parse_line_err(path, i + 2, "short row"))?
                .trim()
                .parse()
                .map_err(|e| parse_line_err(path, i + 2, &format!("bad number: {e}")))
        };
        trace.ghi_wm2.push(get(ghi_col)?);
        trace.t_air_c.push(get(t_col)?);
        for (li, &c) in load_p_cols.iter().enumerate() {
            trace.load_p_kw[li].push(get(c)?);
        }
        for (li, &c) in load_q_cols.iter().enumerate() {
            trace.load_q_kvar[li].push(get(c)?);
        }
        for (pi, &c) in pv_cols.iter().enumerate() {
            trace.pv_p_kw[pi].push(get(c)?);
        }
    }
    trace.validate().map_err(SimError::Resource)?;
    Ok(trace)
}

pub fn write_traces_csv(
    path: &Path,
    trace: &UncontrollableTrace,
    loads: &[LoadSpec],
    pv: &[PvPlant],
) -> Result<(), SimError> {
    let mut header = String::from("k,ghi_wm2,t_air_c");
    for l in loads {
        header.push_str(&format!(",load_p_kw:{},load_q_kvar:{}", l.id, l.id));
    }
    for p in pv {
        header.push_str(&format!(",pv_p_kw:{}", p.id));
    }
    let mut out = header;
    out.push('\n');
    for k in 0..STEPS_PER_DAY {
        out.push_str(&format!(
            "{k},{},{}",
            trace.ghi_wm2[k], trace.t_air_c[k]
        ));
        for li in 0..loads.len() {
            out.push_str(&format!(
                ",{},{}",
                trace.load_p_kw[li][k], trace.load_q_kvar[li][k]
            ));
        }
        for pi in 0..pv.len() {
            out.push_str(&format!(",{}", trace.pv_p_kw[pi][k]));
        }
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| SimError::Io {
        path: path.to_path_buf(),
        detail: e.to_string(),
    })
}

pub fn read_day_ahead_csv(path: &Path, loads: &[LoadSpec]) -> Result<Vec<Vec<f64>>, SimError> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| SimError::Io {
        path: path.to_path_buf(),
        detail: e.to_string(),
    })?;
    let headers = rdr.headers().map_err(|e| csv_err(path, e))?.clone();
    let cols: Vec<usize> = loads
        .iter()
        .map(|l| {
            headers
                .iter()
                .position(|h| h == format!("load_p_kw:{}", l.id))
                .ok_or_else(|| parse_line_err(path, 1, &format!("missing column for {}", l.id)))
        })
        .collect::<Result<_, _>>()?;
    let mut profiles = vec![Vec::with_capacity(SLOTS_PER_DAY); loads.len()];
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        for (li, &c) in cols.iter().enumerate() {
            let v: f64 = rec
                .get(c)
                .ok_or_else(|| parse_line_err(path, i + 2, "short row"))?
                .trim()
                .parse()
                .map_err(|e| parse_line_err(path, i + 2, &format!("bad number: {e}")))?;
            profiles[li].push(v);
        }
    }
    Ok(profiles)
}

pub fn write_day_ahead_csv(
    path: &Path,
    profiles: &[Vec<f64>],
    loads: &[LoadSpec],
) -> Result<(), SimError> {
    let mut out = String::from("slot");
    for l in loads {
        out.push_str(&format!(",load_p_kw:{}", l.id));
    }
    out.push('\n');
    for y in 0..SLOTS_PER_DAY {
        out.push_str(&format!("{y}"));
        for p in profiles {
            out.push_str(&format!(",{}", p[y]));
        }
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| SimError::Io {
        path: path.to_path_buf(),
        detail: e.to_string(),
    })
}

/// Load a scenario bundle from its `scenario.json`.
pub fn load_scenario(path: &Path) -> Result<Scenario, SimError> {
    let file: ScenarioFile = parse_json(path)?;
    if file.version != SCHEMA_VERSION {
        return Err(SimError::Validation(format!(
            "unsupported scenario schema version {}",
            file.version
        )));
    }
    let dir = path.parent().unwrap_or(Path::new("."));
    let rel = |p: &str| -> PathBuf { dir.join(p) };

    let network_desc: NetworkDescription = parse_json(&rel(&file.network))?;
    let network = build_network(&network_desc).map_err(SimError::Grid)?;
    let plan = read_plan_csv(&rel(&file.plan), network.s_max_kva)?;
    let trace = read_traces_csv(&rel(&file.traces), &file.loads, &file.pv)?;
    let day_ahead = read_day_ahead_csv(&rel(&file.day_ahead), &file.loads)?;
    let sessions_file: SessionsFile = parse_json(&rel(&file.sessions))?;

    let scenario = Scenario {
        name: file.name,
        network_desc,
        network,
        plan,
        trace,
        day_ahead_load_kw: day_ahead,
        sessions: sessions_file.sessions,
        bess: file.bess,
        evcs: file.evcs,
        pv: file.pv,
        loads: file.loads,
        noise: file.noise,
        seed: file.seed,
        control: file.control,
    };
    scenario.validate()?;
    Ok(scenario)
}

/// Write a scenario as a bundle directory (creates it if needed).
pub fn write_scenario_bundle(dir: &Path, scenario: &Scenario) -> Result<PathBuf, SimError> {
    fs::create_dir_all(dir).map_err(|e| SimError::Io {
        path: dir.to_path_buf(),
        detail: e.to_string(),
    })?;
    let write_json = |name: &str, value: serde_json::Value| -> Result<(), SimError> {
        let path = dir.join(name);
        fs::write(&path, format!("{:#}\n", value)).map_err(|e| SimError::Io {
            path,
            detail: e.to_string(),
        })
    };
    write_json(
        "network.json",
        serde_json::to_value(&scenario.network_desc).expect("serializable"),
    )?;
    write_plan_csv(&dir.join("plan.csv"), &scenario.plan)?;
    write_traces_csv(
        &dir.join("traces.csv"),
        &scenario.trace,
        &scenario.loads,
        &scenario.pv,
    )?;
    write_day_ahead_csv(
        &dir.join("day_ahead.csv"),
        &scenario.day_ahead_load_kw,
        &scenario.loads,
    )?;
    write_json(
        "sessions.json",
        serde_json::to_value(SessionsFile {
            version: SCHEMA_VERSION,
            sessions: scenario.sessions.clone(),
        })
        .expect("serializable"),
    )?;
    let scenario_file = ScenarioFile {
        version: SCHEMA_VERSION,
        name: scenario.name.clone(),
        network: "network.json".into(),
        plan: "plan.csv".into(),
        traces: "traces.csv".into(),
        day_ahead: "day_ahead.csv".into(),
        sessions: "sessions.json".into(),
        bess: scenario.bess.clone(),
        evcs: scenario.evcs.clone(),
        pv: scenario.pv.clone(),
        loads: scenario.loads.clone(),
        noise: scenario.noise,
        seed: scenario.seed,
        control: scenario.control.clone(),
    };
    let path = dir.join("scenario.json");
    write_json(
        "scenario.json",
        serde_json::to_value(&scenario_file).expect("serializable"),
    )?;
    Ok(path)
}
