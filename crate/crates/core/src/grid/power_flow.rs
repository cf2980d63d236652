//! Newton-Raphson AC power flow in polar form. This is the simulation ground
//! truth; the controller only ever sees a linearization of it.

use num_complex::Complex64;

use super::network::{BusId, NetworkModel};
use super::GridError;
use crate::linalg::{lu_factor, DMat};

/// Nodal active/reactive injections for every non-slack bus, in kW/kVAr,
/// ordered like [`NetworkModel::non_slack`]. Injections are positive for
/// generation, negative for consumption.
#[derive(Debug, Clone, PartialEq)]
pub struct NodalInjections {
    pub p_kw: Vec<f64>,
    pub q_kvar: Vec<f64>,
}

impl NodalInjections {
    pub fn zeros(net: &NetworkModel) -> Self {
        let n = net.non_slack().len();
        Self {
            p_kw: vec![0.0; n],
            q_kvar: vec![0.0; n],
        }
    }

    /// Add an injection at a bus identified by id. No-op amount may be
    /// negative (consumption).
    pub fn add(&mut self, net: &NetworkModel, bus: BusId, p_kw: f64, q_kvar: f64) {
        let idx = net
            .non_slack_index(bus)
            .expect("injections can only be placed on non-slack buses");
        self.p_kw[idx] += p_kw;
        self.q_kvar[idx] += q_kvar;
    }

    fn validate(&self, net: &NetworkModel) -> Result<(), GridError> {
        let expected = net.non_slack().len();
        if self.p_kw.len() != expected || self.q_kvar.len() != expected {
            return Err(GridError::DimensionMismatch {
                expected,
                got: self.p_kw.len().max(self.q_kvar.len()),
            });
        }
        for (i, &bus) in net.non_slack().iter().enumerate() {
            if !self.p_kw[i].is_finite() || !self.q_kvar[i].is_finite() {
                return Err(GridError::NonFiniteInjection(net.buses[bus].name.clone()));
            }
        }
        Ok(())
    }
}

/// A converged power-flow solution.
#[derive(Debug, Clone)]
pub struct OperatingPoint {
    /// Injections this point was solved at (kW/kVAr, non-slack order).
    pub injections: NodalInjections,
    /// Complex nodal voltages in per-unit, for all buses in bus order.
    pub voltages: Vec<Complex64>,
    /// Line current magnitudes in per-unit, in line order.
    pub current_mag_pu: Vec<f64>,
    /// Active power drawn from the upstream grid at the connection point, kW.
    pub p0_kw: f64,
    /// Reactive power drawn from the upstream grid, kVAr.
    pub q0_kvar: f64,
    /// Series losses, kW.
    pub losses_kw: f64,
    /// Worst power mismatch at convergence, p.u.
    pub mismatch_pu: f64,
    pub iterations: usize,
}

impl OperatingPoint {
    /// Voltage magnitudes (p.u.) of non-slack buses, in non-slack order.
    pub fn non_slack_voltage_mags(&self, net: &NetworkModel) -> Vec<f64> {
        net.non_slack()
            .iter()
            .map(|&b| self.voltages[b].norm())
            .collect()
    }
}

#[derive(Debug, Clone, Copy)]
pub struct PowerFlowOptions {
    /// Convergence threshold on the worst power mismatch, p.u.
    pub tolerance_pu: f64,
    pub max_iterations: usize,
}

impl Default for PowerFlowOptions {
    fn default() -> Self {
        Self {
            tolerance_pu: 1e-8,
            max_iterations: 50,
        }
    }
}

/// Solve the AC power flow for the given injections. Deterministic: the
/// iteration always starts from a flat profile, so identical inputs produce
/// bit-identical outputs.
pub fn solve_power_flow(
    net: &NetworkModel,
    injections: &NodalInjections,
    opts: &PowerFlowOptions,
) -> Result<OperatingPoint, GridError> {
    injections.validate(net)?;
    let n = net.n_buses();
    let non_slack = net.non_slack();
    let m = non_slack.len();
    let y = net.admittance_matrix();
    let s_base = net.base.s_kva;

    // specified injections in per-unit
    let p_spec: Vec<f64> = injections.p_kw.iter().map(|p| p / s_base).collect();
    let q_spec: Vec<f64> = injections.q_kvar.iter().map(|q| q / s_base).collect();

    let mut vm = vec![net.base.slack_v_pu; n];
    let mut va = vec![0.0_f64; n];

    let calc_power = |vm: &[f64], va: &[f64], bus: usize| -> (f64, f64) {
        let mut p = 0.0;
        let mut q = 0.0;
        for j in 0..n {
            let yij = y[bus * n + j];
            if yij.norm_sqr() == 0.0 && bus != j {
                continue;
            }
            let theta = va[bus] - va[j];
            let (sin, cos) = theta.sin_cos();
            p += vm[bus] * vm[j] * (yij.re * cos + yij.im * sin);
            q += vm[bus] * vm[j] * (yij.re * sin - yij.im * cos);
        }
        (p, q)
    };

    let mut mismatch = f64::INFINITY;
    let mut iterations = 0;
    for it in 0..=opts.max_iterations {
        iterations = it;
        // mismatch vector [dP; dQ] over non-slack buses
        let mut dp = vec![0.0; m];
        let mut dq = vec![0.0; m];
        let mut worst: f64 = 0.0;
        for (i, &bus) in non_slack.iter().enumerate() {
            let (p, q) = calc_power(&vm, &va, bus);
            dp[i] = p_spec[i] - p;
            dq[i] = q_spec[i] - q;
            worst = worst.max(dp[i].abs()).max(dq[i].abs());
        }
        mismatch = worst;
        if mismatch < opts.tolerance_pu {
            return Ok(finish(net, injections, &y, &vm, &va, mismatch, iterations));
        }
        if it == opts.max_iterations {
            break;
        }

        let jac = jacobian(&y, &vm, &va, non_slack, n);
        let lu = lu_factor(&jac).map_err(|piv| pivot_to_error(net, piv.0))?;
        let rhs: Vec<f64> = dp.iter().chain(dq.iter()).copied().collect();
        let delta = lu.solve(&rhs);
        for (i, &bus) in non_slack.iter().enumerate() {
            va[bus] += delta[i];
            vm[bus] += delta[m + i];
        }
    }
    Err(GridError::NonConvergence {
        iterations,
        mismatch,
    })
}

/// Power-flow Jacobian d[P;Q]/d[theta;V] over non-slack buses (p.u.).
pub(super) fn jacobian(
    y: &[Complex64],
    vm: &[f64],
    va: &[f64],
    non_slack: &[BusId],
    n: usize,
) -> DMat {
    let m = non_slack.len();
    let mut jac = DMat::zeros(2 * m, 2 * m);
    for (row, &i) in non_slack.iter().enumerate() {
        // P_i and Q_i at the current point (needed for diagonal terms)
        let mut p_i = 0.0;
        let mut q_i = 0.0;
        for j in 0..n {
            let yij = y[i * n + j];
            let theta = va[i] - va[j];
            let (sin, cos) = theta.sin_cos();
            p_i += vm[i] * vm[j] * (yij.re * cos + yij.im * sin);
            q_i += vm[i] * vm[j] * (yij.re * sin - yij.im * cos);
        }
        let yii = y[i * n + i];
        for (col, &j) in non_slack.iter().enumerate() {
            let yij = y[i * n + j];
            let theta = va[i] - va[j];
            let (sin, cos) = theta.sin_cos();
            if i == j {
                // dP/dtheta, dP/dV, dQ/dtheta, dQ/dV diagonals
                *jac.at_mut(row, col) = -q_i - yii.im * vm[i] * vm[i];
                *jac.at_mut(row, m + col) = p_i / vm[i] + yii.re * vm[i];
                *jac.at_mut(m + row, col) = p_i - yii.re * vm[i] * vm[i];
                *jac.at_mut(m + row, m + col) = q_i / vm[i] - yii.im * vm[i];
            } else {
                let vivj = vm[i] * vm[j];
                *jac.at_mut(row, col) = vivj * (yij.re * sin - yij.im * cos);
                *jac.at_mut(row, m + col) = vm[i] * (yij.re * cos + yij.im * sin);
                *jac.at_mut(m + row, col) = -vivj * (yij.re * cos + yij.im * sin);
                *jac.at_mut(m + row, m + col) = vm[i] * (yij.re * sin - yij.im * cos);
            }
        }
    }
    jac
}

pub(super) fn pivot_to_error(net: &NetworkModel, pivot: usize) -> GridError {
    let m = net.non_slack().len();
    let (idx, quantity) = if pivot < m {
        (pivot, "voltage angle")
    } else {
        (pivot - m, "voltage magnitude")
    };
    GridError::SingularJacobian {
        bus: net.buses[net.non_slack()[idx]].name.clone(),
        quantity,
    }
}

fn finish(
    net: &NetworkModel,
    injections: &NodalInjections,
    y: &[Complex64],
    vm: &[f64],
    va: &[f64],
    mismatch: f64,
    iterations: usize,
) -> OperatingPoint {
    let n = net.n_buses();
    let voltages: Vec<Complex64> = (0..n)
        .map(|i| Complex64::from_polar(vm[i], va[i]))
        .collect();
    let current_mag_pu: Vec<f64> = net
        .lines
        .iter()
        .map(|l| ((voltages[l.from] - voltages[l.to]) * l.admittance()).norm())
        .collect();
    let slack = net.slack();
    let mut i_slack = Complex64::new(0.0, 0.0);
    for j in 0..n {
        i_slack += y[slack * n + j] * voltages[j];
    }
    let s0 = voltages[slack] * i_slack.conj() * net.base.s_kva;
    let losses_kw: f64 = net
        .lines
        .iter()
        .zip(&current_mag_pu)
        .map(|(l, i)| i * i * l.r_pu * net.base.s_kva)
        .sum();
    OperatingPoint {
        injections: injections.clone(),
        voltages,
        current_mag_pu,
        p0_kw: s0.re,
        q0_kvar: s0.im,
        losses_kw,
        mismatch_pu: mismatch,
        iterations,
    }
}

/// Closed-form solution of the single-line two-bus case: slack voltage `vs`,
/// series impedance `z`, complex power `s_recv` (p.u.) delivered to the far
/// bus (consumption positive). Returns the far bus voltage.
#[cfg(test)]
pub(crate) fn two_bus_voltage(vs: f64, z: Complex64, s_recv: Complex64) -> Complex64 {
    let b = 2.0 * (z.re * s_recv.re + z.im * s_recv.im) - vs * vs;
    let c = z.norm_sqr() * s_recv.norm_sqr();
    let u = (-b + (b * b - 4.0 * c).sqrt()) / 2.0;
    (u + z.conj() * s_recv) / vs
}

#[cfg(test)]
mod tests {
    use super::super::network::two_bus_description;
    use super::super::{build_network, GridError};
    use super::*;

    fn two_bus_net() -> NetworkModel {
        build_network(&two_bus_description(0.01, 0.01)).unwrap()
    }

    #[test]
    fn no_load_gives_flat_profile() {
        let net = two_bus_net();
        let op = solve_power_flow(&net, &NodalInjections::zeros(&net), &Default::default())
            .unwrap();
        for v in &op.voltages {
            assert!((v.norm() - 1.0).abs() < 1e-12);
        }
        assert!(op.current_mag_pu.iter().all(|i| i.abs() < 1e-12));
        assert!(op.p0_kw.abs() < 1e-9);
        assert!(op.q0_kvar.abs() < 1e-9);
    }

    #[test]
    fn two_bus_load_matches_closed_form() {
        let net = two_bus_net();
        // 0.1 p.u. load at bus 2 = -10 kW injection on the 100 kVA base
        let mut inj = NodalInjections::zeros(&net);
        inj.add(&net, 1, -10.0, 0.0);
        let op = solve_power_flow(&net, &inj, &Default::default()).unwrap();
        let v2 = two_bus_voltage(
            1.0,
            Complex64::new(0.01, 0.01),
            Complex64::new(0.1, 0.0),
        );
        assert!((op.voltages[1].norm() - v2.norm()).abs() < 1e-8);
        assert!((op.voltages[1].arg() - v2.arg()).abs() < 1e-8);
        // frozen value from the closed-form quadratic
        assert!((v2.norm() - 0.998_998_496_489_339).abs() < 1e-12);
        assert!((op.voltages[1].norm() - 0.998_998_496_489_339).abs() < 1e-8);
    }

    #[test]
    fn energy_balance_holds() {
        let net = two_bus_net();
        let mut inj = NodalInjections::zeros(&net);
        inj.add(&net, 1, -25.0, -5.0);
        let op = solve_power_flow(&net, &inj, &Default::default()).unwrap();
        assert!(op.losses_kw >= 0.0);
        // p0 = total consumption - total generation + losses
        let total_injection: f64 = inj.p_kw.iter().sum();
        assert!((op.p0_kw - (-total_injection + op.losses_kw)).abs() < 1e-6);
    }

    #[test]
    fn power_flow_is_deterministic() {
        let net = two_bus_net();
        let mut inj = NodalInjections::zeros(&net);
        inj.add(&net, 1, -13.7, 2.9);
        let a = solve_power_flow(&net, &inj, &Default::default()).unwrap();
        let b = solve_power_flow(&net, &inj, &Default::default()).unwrap();
        assert_eq!(a.voltages, b.voltages);
        assert_eq!(a.p0_kw.to_bits(), b.p0_kw.to_bits());
    }

    #[test]
    fn non_finite_injection_rejected() {
        let net = two_bus_net();
        let mut inj = NodalInjections::zeros(&net);
        inj.p_kw[0] = f64::NAN;
        let err = solve_power_flow(&net, &inj, &Default::default()).unwrap_err();
        assert!(matches!(err, GridError::NonFiniteInjection(_)));
    }
}
