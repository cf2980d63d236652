//! Per-step run records and their line-delimited JSON serialization.

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::mpc::ObjectiveTerms;
use crate::{STEPS_PER_SLOT, STEP_HOURS};

use super::SimError;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum Event {
    /// Grid rows had to be relaxed; total slack in p.u.
    GridSlack { total_pu: f64 },
    SolverIterationLimit { iterations: usize },
    /// A setpoint violated a hard bound at actuation (audit failure).
    PowerBoundViolation { resource: String, excess_kw: f64 },
    CapabilityViolation { resource: String, excess_kva: f64 },
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct BessRecord {
    pub id: String,
    pub p_kw: f64,
    pub q_kvar: f64,
    pub soc: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct EvRecord {
    pub station: String,
    pub plug: usize,
    pub p_kw: f64,
    pub soc: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SolverRecord {
    pub status: String,
    pub iterations: usize,
    pub objective: ObjectiveTerms,
    /// Slot energy error carried into this step, kWh.
    pub incurred_kwh: f64,
    /// Anticipated residual error at the solution, kWh.
    pub anticipated_kwh: f64,
}

/// One 30-second step of a run.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct StepRecord {
    pub k: usize,
    pub plan_kw: f64,
    /// Realized gcp power (ground truth), kW.
    pub p0_kw: f64,
    pub q0_kvar: f64,
    /// Measured gcp power (truth plus noise), kW.
    pub p0_meas_kw: f64,
    pub bess: Vec<BessRecord>,
    pub ev: Vec<EvRecord>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub solver: Option<SolverRecord>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub events: Vec<Event>,
}

/// Full day of step records.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunRecord {
    pub steps: Vec<StepRecord>,
}

impl RunRecord {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn num_slots(&self) -> usize {
        self.steps.len() / STEPS_PER_SLOT
    }

    /// Mean tracking error of slot `y`: plan minus realized gcp power, kW.
    pub fn slot_mean_error_kw(&self, y: usize) -> f64 {
        let start = y * STEPS_PER_SLOT;
        let steps = &self.steps[start..start + STEPS_PER_SLOT];
        steps
            .iter()
            .map(|s| s.plan_kw - s.p0_kw)
            .sum::<f64>()
            / STEPS_PER_SLOT as f64
    }

    /// Energy error of slot `y`, kWh.
    pub fn slot_energy_error_kwh(&self, y: usize) -> f64 {
        let start = y * STEPS_PER_SLOT;
        self.steps[start..start + STEPS_PER_SLOT]
            .iter()
            .map(|s| (s.plan_kw - s.p0_kw) * STEP_HOURS)
            .sum()
    }

    pub fn events(&self) -> impl Iterator<Item = (usize, &Event)> {
        self.steps
            .iter()
            .flat_map(|s| s.events.iter().map(move |e| (s.k, e)))
    }

    pub fn write_jsonl(&self, path: &Path) -> Result<(), SimError> {
        let mut buf = Vec::new();
        for step in &self.steps {
            serde_json::to_writer(&mut buf, step).map_err(|e| SimError::Parse {
                path: path.to_path_buf(),
                detail: e.to_string(),
            })?;
            buf.push(b'\n');
        }
        let mut file = fs::File::create(path).map_err(|e| SimError::Io {
            path: path.to_path_buf(),
            detail: e.to_string(),
        })?;
        file.write_all(&buf).map_err(|e| SimError::Io {
            path: path.to_path_buf(),
            detail: e.to_string(),
        })
    }

    pub fn read_jsonl(path: &Path) -> Result<Self, SimError> {
        let file = fs::File::open(path).map_err(|e| SimError::Io {
            path: path.to_path_buf(),
            detail: e.to_string(),
        })?;
        let mut steps = Vec::new();
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| SimError::Io {
                path: path.to_path_buf(),
                detail: e.to_string(),
            })?;
            if line.trim().is_empty() {
                continue;
            }
            let step: StepRecord =
                serde_json::from_str(&line).map_err(|e| SimError::Parse {
                    path: path.to_path_buf(),
                    detail: format!("line {}: {e}", i + 1),
                })?;
            steps.push(step);
        }
        Ok(Self { steps })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn step(k: usize, plan: f64, p0: f64) -> StepRecord {
        StepRecord {
            k,
            plan_kw: plan,
            p0_kw: p0,
            q0_kvar: 0.0,
            p0_meas_kw: p0,
            bess: vec![],
            ev: vec![],
            solver: None,
            events: vec![],
        }
    }

    #[test]
    fn slot_aggregation() {
        let mut rec = RunRecord::default();
        for k in 0..STEPS_PER_SLOT {
            rec.steps.push(step(k, 10.0, 4.0));
        }
        assert!((rec.slot_mean_error_kw(0) - 6.0).abs() < 1e-12);
        assert!((rec.slot_energy_error_kwh(0) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn jsonl_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.jsonl");
        let mut rec = RunRecord::default();
        for k in 0..20 {
            let mut s = step(k, 5.0, 5.0 - 0.1 * k as f64);
            if k == 3 {
                s.events.push(Event::GridSlack { total_pu: 0.01 });
            }
            rec.steps.push(s);
        }
        rec.write_jsonl(&path).unwrap();
        let back = RunRecord::read_jsonl(&path).unwrap();
        assert_eq!(rec, back);
    }
}
