//! Static network data: buses, lines, per-unit bases, and operating bounds.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::GridError;

/// Index of a bus in [`NetworkModel::buses`].
pub type BusId = usize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BusKind {
    Slack,
    Pq,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Bus {
    pub name: String,
    pub kind: BusKind,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Line {
    pub from: BusId,
    pub to: BusId,
    /// Series resistance in per-unit.
    pub r_pu: f64,
    /// Series reactance in per-unit.
    pub x_pu: f64,
    /// Current magnitude limit in per-unit.
    pub ampacity_pu: f64,
}

impl Line {
    pub fn impedance(&self) -> Complex64 {
        Complex64::new(self.r_pu, self.x_pu)
    }

    pub fn admittance(&self) -> Complex64 {
        1.0 / self.impedance()
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct PerUnitBase {
    /// Base apparent power in kVA.
    pub s_kva: f64,
    /// Base voltage in V.
    pub v_base_v: f64,
    /// Slack bus voltage magnitude in per-unit.
    pub slack_v_pu: f64,
}

/// Declarative network description as read from a network file. Bus
/// references are by name; [`build_network`] resolves and validates them.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NetworkDescription {
    pub version: u32,
    pub base: PerUnitBase,
    /// Transformer capacity at the grid connection point, kVA.
    pub s_max_kva: f64,
    /// Voltage magnitude bounds `[v_min, v_max]` in per-unit.
    pub v_bounds_pu: [f64; 2],
    pub buses: Vec<BusDescription>,
    pub lines: Vec<LineDescription>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BusDescription {
    pub id: String,
    pub kind: BusKind,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LineDescription {
    pub from: String,
    pub to: String,
    pub r_pu: f64,
    pub x_pu: f64,
    pub ampacity_pu: f64,
}

/// Validated static grid. Immutable after construction.
#[derive(Debug, Clone)]
pub struct NetworkModel {
    pub buses: Vec<Bus>,
    pub lines: Vec<Line>,
    pub base: PerUnitBase,
    pub s_max_kva: f64,
    pub v_min_pu: f64,
    pub v_max_pu: f64,
    slack: BusId,
    /// Non-slack bus ids in file order; defines the injection vector layout.
    non_slack: Vec<BusId>,
}

impl NetworkModel {
    pub fn slack(&self) -> BusId {
        self.slack
    }

    /// Non-slack buses in the order used by injection vectors and
    /// sensitivity matrix columns.
    pub fn non_slack(&self) -> &[BusId] {
        &self.non_slack
    }

    pub fn n_buses(&self) -> usize {
        self.buses.len()
    }

    pub fn n_lines(&self) -> usize {
        self.lines.len()
    }

    pub fn bus_by_name(&self, name: &str) -> Option<BusId> {
        self.buses.iter().position(|b| b.name == name)
    }

    /// Position of bus `id` within the non-slack ordering, if it is not the
    /// slack bus.
    pub fn non_slack_index(&self, id: BusId) -> Option<usize> {
        self.non_slack.iter().position(|&b| b == id)
    }

    /// Nodal admittance matrix (dense, per-unit).
    pub fn admittance_matrix(&self) -> Vec<Complex64> {
        let n = self.buses.len();
        let mut y = vec![Complex64::new(0.0, 0.0); n * n];
        for line in &self.lines {
            let adm = line.admittance();
            y[line.from * n + line.from] += adm;
            y[line.to * n + line.to] += adm;
            y[line.from * n + line.to] -= adm;
            y[line.to * n + line.from] -= adm;
        }
        y
    }
}

/// Validate a declarative description and produce a [`NetworkModel`].
pub fn build_network(desc: &NetworkDescription) -> Result<NetworkModel, GridError> {
    if desc.base.s_kva <= 0.0 || desc.base.v_base_v <= 0.0 {
        return Err(GridError::InvalidParameter(
            "per-unit bases must be strictly positive".into(),
        ));
    }
    if desc.base.slack_v_pu <= 0.0 {
        return Err(GridError::InvalidParameter(
            "slack voltage must be strictly positive".into(),
        ));
    }
    if desc.s_max_kva <= 0.0 {
        return Err(GridError::InvalidParameter(
            "transformer capacity must be strictly positive".into(),
        ));
    }
    let [v_min, v_max] = desc.v_bounds_pu;
    if !(v_min < v_max) {
        return Err(GridError::InvalidParameter(format!(
            "voltage bounds must satisfy v_min < v_max (got [{v_min}, {v_max}])"
        )));
    }

    let mut buses = Vec::with_capacity(desc.buses.len());
    for b in &desc.buses {
        if buses.iter().any(|x: &Bus| x.name == b.id) {
            return Err(GridError::DuplicateBus(b.id.clone()));
        }
        buses.push(Bus {
            name: b.id.clone(),
            kind: b.kind,
        });
    }

    let mut slack: Option<usize> = None;
    for (i, b) in buses.iter().enumerate() {
        if b.kind == BusKind::Slack {
            if let Some(first) = slack {
                return Err(GridError::MultipleSlack(
                    buses[first].name.clone(),
                    b.name.clone(),
                ));
            }
            slack = Some(i);
        }
    }
    let slack: BusId = slack.ok_or(GridError::MissingSlack)?;

    let find = |name: &str| -> Result<BusId, GridError> {
        buses
            .iter()
            .position(|b| b.name == name)
            .ok_or_else(|| GridError::UnknownBus(name.to_string()))
    };

    let mut lines = Vec::with_capacity(desc.lines.len());
    for l in &desc.lines {
        let from = find(&l.from)?;
        let to = find(&l.to)?;
        if from == to {
            return Err(GridError::InvalidParameter(format!(
                "line {}-{} connects a bus to itself",
                l.from, l.to
            )));
        }
        if l.r_pu.abs() < 1e-12 && l.x_pu.abs() < 1e-12 {
            return Err(GridError::ZeroImpedance(l.from.clone(), l.to.clone()));
        }
        if !(l.ampacity_pu > 0.0) {
            return Err(GridError::InvalidParameter(format!(
                "line {}-{} ampacity must be strictly positive",
                l.from, l.to
            )));
        }
        if lines.iter().any(|x: &Line| {
            (x.from == from && x.to == to) || (x.from == to && x.to == from)
        }) {
            return Err(GridError::DuplicateLine(l.from.clone(), l.to.clone()));
        }
        lines.push(Line {
            from,
            to,
            r_pu: l.r_pu,
            x_pu: l.x_pu,
            ampacity_pu: l.ampacity_pu,
        });
    }

    // connectivity from the slack bus
    let n = buses.len();
    let mut seen = vec![false; n];
    let mut stack = vec![slack];
    seen[slack] = true;
    while let Some(b) = stack.pop() {
        for l in &lines {
            let other = if l.from == b {
                l.to
            } else if l.to == b {
                l.from
            } else {
                continue;
            };
            if !seen[other] {
                seen[other] = true;
                stack.push(other);
            }
        }
    }
    if let Some(unreached) = seen.iter().position(|s| !s) {
        return Err(GridError::Disconnected(buses[unreached].name.clone()));
    }

    let non_slack = (0..n).filter(|&b| b != slack).collect();
    Ok(NetworkModel {
        buses,
        lines,
        base: desc.base,
        s_max_kva: desc.s_max_kva,
        v_min_pu: v_min,
        v_max_pu: v_max,
        slack,
        non_slack,
    })
}

#[cfg(test)]
pub(crate) fn two_bus_description(r_pu: f64, x_pu: f64) -> NetworkDescription {
    NetworkDescription {
        version: 1,
        base: PerUnitBase {
            s_kva: 100.0,
            v_base_v: 400.0,
            slack_v_pu: 1.0,
        },
        s_max_kva: 200.0,
        v_bounds_pu: [0.9, 1.1],
        buses: vec![
            BusDescription {
                id: "B1".into(),
                kind: BusKind::Slack,
            },
            BusDescription {
                id: "B2".into(),
                kind: BusKind::Pq,
            },
        ],
        lines: vec![LineDescription {
            from: "B1".into(),
            to: "B2".into(),
            r_pu,
            x_pu,
            ampacity_pu: 2.0,
        }],
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_two_bus_network() {
        let net = build_network(&two_bus_description(0.01, 0.01)).unwrap();
        assert_eq!(net.n_buses(), 2);
        assert_eq!(net.n_lines(), 1);
        assert_eq!(net.slack(), 0);
        assert_eq!(net.non_slack(), &[1]);
    }

    #[test]
    fn zero_impedance_line_rejected() {
        let err = build_network(&two_bus_description(0.0, 0.0)).unwrap_err();
        assert!(matches!(err, GridError::ZeroImpedance(..)));
    }

    #[test]
    fn missing_slack_rejected() {
        let mut desc = two_bus_description(0.01, 0.01);
        desc.buses[0].kind = BusKind::Pq;
        assert!(matches!(
            build_network(&desc).unwrap_err(),
            GridError::MissingSlack
        ));
    }

    #[test]
    fn duplicate_line_rejected() {
        let mut desc = two_bus_description(0.01, 0.01);
        let mut dup = desc.lines[0].clone();
        // reversed orientation still counts as the same line
        std::mem::swap(&mut dup.from, &mut dup.to);
        desc.lines.push(dup);
        assert!(matches!(
            build_network(&desc).unwrap_err(),
            GridError::DuplicateLine(..)
        ));
    }

    #[test]
    fn disconnected_graph_rejected() {
        let mut desc = two_bus_description(0.01, 0.01);
        desc.buses.push(BusDescription {
            id: "B3".into(),
            kind: BusKind::Pq,
        });
        let err = build_network(&desc).unwrap_err();
        assert!(matches!(err, GridError::Disconnected(name) if name == "B3"));
    }
}
