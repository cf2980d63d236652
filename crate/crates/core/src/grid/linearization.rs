//! First-order sensitivity model around a power-flow operating point.
//!
//! Voltage magnitudes, line current magnitudes, and the grid-connection-point
//! power are expressed as affine functions of the stacked nodal injection
//! vector `[p; q]` (kW/kVAr, non-slack order). Sensitivities come from one LU
//! factorization of the power-flow Jacobian at the operating point; the
//! offsets are set so each affine map is exact at that point.

use num_complex::Complex64;

use super::network::NetworkModel;
use super::power_flow::{jacobian, pivot_to_error, OperatingPoint};
use super::GridError;
use crate::linalg::{lu_factor, DMat};

/// Affine grid model at an operating point. Row layouts:
/// voltage rows follow the non-slack bus order, current rows follow the line
/// order, and the two gcp rows are active then reactive power.
#[derive(Debug, Clone)]
pub struct Linearization {
    /// d|v| / d[p;q], (n_b-1) x 2(n_b-1), p.u. per kW (or kVAr).
    pub voltage_sens: DMat,
    /// Offsets such that `voltage_sens * [p;q] + voltage_offset = |v|`, p.u.
    pub voltage_offset: Vec<f64>,
    /// d|i| / d[p;q], n_l x 2(n_b-1), p.u. per kW.
    pub current_sens: DMat,
    pub current_offset: Vec<f64>,
    /// d[p0;q0] / d[p;q], 2 x 2(n_b-1), kW per kW.
    pub gcp_sens: DMat,
    /// Offsets in kW/kVAr.
    pub gcp_offset: [f64; 2],
    /// The operating point the model was computed at.
    pub operating_point: OperatingPoint,
}

impl Linearization {
    /// Stacked `[p; q]` vector of an injection pair in kW/kVAr.
    pub fn stack(p_kw: &[f64], q_kvar: &[f64]) -> Vec<f64> {
        p_kw.iter().chain(q_kvar.iter()).copied().collect()
    }

    /// Predicted voltage magnitudes (p.u.) at the given injections.
    pub fn predict_voltages(&self, p_kw: &[f64], q_kvar: &[f64]) -> Vec<f64> {
        let x = Self::stack(p_kw, q_kvar);
        self.voltage_sens
            .mul_vec(&x)
            .iter()
            .zip(&self.voltage_offset)
            .map(|(s, o)| s + o)
            .collect()
    }

    /// Predicted line current magnitudes (p.u.).
    pub fn predict_currents(&self, p_kw: &[f64], q_kvar: &[f64]) -> Vec<f64> {
        let x = Self::stack(p_kw, q_kvar);
        self.current_sens
            .mul_vec(&x)
            .iter()
            .zip(&self.current_offset)
            .map(|(s, o)| s + o)
            .collect()
    }

    /// Predicted grid-connection-point power `(p0_kw, q0_kvar)`.
    pub fn predict_gcp(&self, p_kw: &[f64], q_kvar: &[f64]) -> (f64, f64) {
        let x = Self::stack(p_kw, q_kvar);
        let s = self.gcp_sens.mul_vec(&x);
        (s[0] + self.gcp_offset[0], s[1] + self.gcp_offset[1])
    }
}

/// Compute the affine grid model at a converged operating point.
pub fn linearize(net: &NetworkModel, op: &OperatingPoint) -> Result<Linearization, GridError> {
    let n = net.n_buses();
    let non_slack = net.non_slack();
    let m = non_slack.len();
    let y = net.admittance_matrix();
    let s_base = net.base.s_kva;

    let vm: Vec<f64> = op.voltages.iter().map(|v| v.norm()).collect();
    let va: Vec<f64> = op.voltages.iter().map(|v| v.arg()).collect();

    let jac = jacobian(&y, &vm, &va, non_slack, n);
    let lu = lu_factor(&jac).map_err(|piv| pivot_to_error(net, piv.0))?;

    // state sensitivity d[theta;V]/d[P;Q] in p.u.: columns of the Jacobian
    // inverse, obtained by solving against unit vectors.
    let dim = 2 * m;
    let mut state_sens = DMat::zeros(dim, dim);
    let mut e = vec![0.0; dim];
    for col in 0..dim {
        e[col] = 1.0;
        let x = lu.solve(&e);
        e[col] = 0.0;
        for row in 0..dim {
            *state_sens.at_mut(row, col) = x[row];
        }
    }

    // voltage magnitude sensitivities: V-block rows, rescaled to per-kW.
    let mut voltage_sens = DMat::zeros(m, dim);
    for i in 0..m {
        for col in 0..dim {
            *voltage_sens.at_mut(i, col) = state_sens.at(m + i, col) / s_base;
        }
    }

    // current magnitudes: chain rule through the line current phasor.
    // |I| = |y_l| * |V_f - V_t|; d|D|/d(state) with D the voltage difference.
    let mut current_sens = DMat::zeros(net.n_lines(), dim);
    for (li, line) in net.lines.iter().enumerate() {
        let f = line.from;
        let t = line.to;
        let d = op.voltages[f] - op.voltages[t];
        let dn = d.norm();
        if dn < 1e-9 {
            // current is (numerically) zero at the operating point; the
            // magnitude is not differentiable there, keep a zero row.
            continue;
        }
        let y_abs = line.admittance().norm();
        let cos_ft = (va[f] - va[t]).cos();
        let sin_ft = (va[f] - va[t]).sin();
        // partials of |D| wrt magnitudes/angles of the two endpoint buses
        let dd_dvf = (vm[f] - vm[t] * cos_ft) / dn;
        let dd_dvt = (vm[t] - vm[f] * cos_ft) / dn;
        let dd_daf = vm[f] * vm[t] * sin_ft / dn;
        let dd_dat = -dd_daf;
        let mut row_state = vec![0.0; dim];
        if let Some(fi) = net.non_slack_index(f) {
            row_state[fi] += dd_daf;
            row_state[m + fi] += dd_dvf;
        }
        if let Some(ti) = net.non_slack_index(t) {
            row_state[ti] += dd_dat;
            row_state[m + ti] += dd_dvt;
        }
        for col in 0..dim {
            let mut acc = 0.0;
            for s in 0..dim {
                acc += row_state[s] * state_sens.at(s, col);
            }
            *current_sens.at_mut(li, col) = y_abs * acc / s_base;
        }
    }

    // gcp power: S0 = V0 * conj(sum_j Y0j Vj). V0 is fixed, so only the
    // neighbor states enter. Partials in p.u., then p0_kw = p0_pu * s_base
    // while injections scale the same way, so the kW/kW matrix needs no
    // rescaling.
    let slack = net.slack();
    let v0 = op.voltages[slack];
    let mut dp0 = vec![0.0; dim];
    let mut dq0 = vec![0.0; dim];
    for (ji, &j) in non_slack.iter().enumerate() {
        let y0j = y[slack * n + j];
        if y0j.norm_sqr() == 0.0 {
            continue;
        }
        let phase = Complex64::from_polar(1.0, -va[j]);
        // dS0/dVj and dS0/dthetaj
        let ds_dv = v0 * y0j.conj() * phase;
        let ds_da = v0 * y0j.conj() * Complex64::new(0.0, -1.0) * vm[j] * phase;
        dp0[ji] = ds_da.re;
        dp0[m + ji] = ds_dv.re;
        dq0[ji] = ds_da.im;
        dq0[m + ji] = ds_dv.im;
    }
    let mut gcp_sens = DMat::zeros(2, dim);
    for col in 0..dim {
        let mut p_acc = 0.0;
        let mut q_acc = 0.0;
        for s in 0..dim {
            p_acc += dp0[s] * state_sens.at(s, col);
            q_acc += dq0[s] * state_sens.at(s, col);
        }
        *gcp_sens.at_mut(0, col) = p_acc;
        *gcp_sens.at_mut(1, col) = q_acc;
    }

    // offsets anchor each affine map exactly at the operating point
    let x_op = Linearization::stack(&op.injections.p_kw, &op.injections.q_kvar);
    let v_pred = voltage_sens.mul_vec(&x_op);
    let voltage_offset: Vec<f64> = non_slack
        .iter()
        .enumerate()
        .map(|(i, &b)| vm[b] - v_pred[i])
        .collect();
    let i_pred = current_sens.mul_vec(&x_op);
    let current_offset: Vec<f64> = op
        .current_mag_pu
        .iter()
        .zip(&i_pred)
        .map(|(i_op, pred)| i_op - pred)
        .collect();
    let gcp_pred = gcp_sens.mul_vec(&x_op);
    let gcp_offset = [op.p0_kw - gcp_pred[0], op.q0_kvar - gcp_pred[1]];

    Ok(Linearization {
        voltage_sens,
        voltage_offset,
        current_sens,
        current_offset,
        gcp_sens,
        gcp_offset,
        operating_point: op.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::super::network::two_bus_description;
    use super::super::power_flow::{solve_power_flow, NodalInjections};
    use super::super::build_network;
    use super::*;

    fn loaded_two_bus() -> (NetworkModel, OperatingPoint) {
        let net = build_network(&two_bus_description(0.01, 0.01)).unwrap();
        let mut inj = NodalInjections::zeros(&net);
        inj.add(&net, 1, -10.0, -3.0);
        let op = solve_power_flow(&net, &inj, &Default::default()).unwrap();
        (net, op)
    }

    #[test]
    fn affine_maps_are_exact_at_operating_point() {
        let (net, op) = loaded_two_bus();
        let lin = linearize(&net, &op).unwrap();
        let v = lin.predict_voltages(&op.injections.p_kw, &op.injections.q_kvar);
        for (pred, truth) in v.iter().zip(op.non_slack_voltage_mags(&net)) {
            assert!((pred - truth).abs() < 1e-8);
        }
        let i = lin.predict_currents(&op.injections.p_kw, &op.injections.q_kvar);
        for (pred, truth) in i.iter().zip(&op.current_mag_pu) {
            assert!((pred - truth).abs() < 1e-8);
        }
        let (p0, q0) = lin.predict_gcp(&op.injections.p_kw, &op.injections.q_kvar);
        assert!((p0 - op.p0_kw).abs() < 1e-8);
        assert!((q0 - op.q0_kvar).abs() < 1e-8);
    }

    #[test]
    fn voltage_sensitivity_matches_finite_differences() {
        let (net, op) = loaded_two_bus();
        let lin = linearize(&net, &op).unwrap();
        // central difference, 1e-4 p.u. perturbation on the 100 kVA base
        let h_kw = 1e-4 * net.base.s_kva;
        for col in 0..2 {
            let mut up = op.injections.clone();
            let mut dn = op.injections.clone();
            if col == 0 {
                up.p_kw[0] += h_kw;
                dn.p_kw[0] -= h_kw;
            } else {
                up.q_kvar[0] += h_kw;
                dn.q_kvar[0] -= h_kw;
            }
            let vu = solve_power_flow(&net, &up, &Default::default()).unwrap();
            let vd = solve_power_flow(&net, &dn, &Default::default()).unwrap();
            let fd = (vu.voltages[1].norm() - vd.voltages[1].norm()) / (2.0 * h_kw);
            let analytic = lin.voltage_sens.at(0, col);
            assert!(
                (analytic - fd).abs() <= 1e-3 * fd.abs().max(1e-9),
                "col {col}: analytic {analytic:.6e} vs fd {fd:.6e}"
            );
        }
    }

    #[test]
    fn injecting_active_power_raises_voltage() {
        let (_, op) = loaded_two_bus();
        let net = build_network(&two_bus_description(0.01, 0.01)).unwrap();
        let lin = linearize(&net, &op).unwrap();
        assert!(lin.voltage_sens.at(0, 0) > 0.0);
    }

    #[test]
    fn relinearizing_at_reconstructed_point_is_stable() {
        let (net, op) = loaded_two_bus();
        let lin = linearize(&net, &op).unwrap();
        let op2 = solve_power_flow(&net, &op.injections, &Default::default()).unwrap();
        let lin2 = linearize(&net, &op2).unwrap();
        for (a, b) in lin
            .voltage_sens
            .data
            .iter()
            .zip(&lin2.voltage_sens.data)
        {
            assert!((a - b).abs() < 1e-6);
        }
        for (a, b) in lin.gcp_sens.data.iter().zip(&lin2.gcp_sens.data) {
            assert!((a - b).abs() < 1e-6);
        }
    }
}
