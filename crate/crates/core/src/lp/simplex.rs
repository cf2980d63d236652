//! Two-phase primal simplex on the full dense tableau, with implicit
//! variable bounds and Bland's rule throughout (anti-cycling and fully
//! deterministic pivoting).
//!
//! Column layout: structural variables, then one slack per row, then any
//! artificial columns created for rows whose initial slack value is out of
//! bounds. Phase one minimizes the sum of artificial values; phase two the
//! real objective with artificials fixed at zero.

use super::{LpResult, LpStatus, RowSense, SolveOptions, StandardFormLp};

#[derive(Debug, Clone, Copy, PartialEq)]
enum VarState {
    Basic(usize),
    AtLower,
    AtUpper,
    /// Nonbasic at a fixed interior value (free variables and warm starts).
    AtValue(f64),
}

struct Tableau {
    m: usize,
    width: usize,
    art_start: usize,
    /// Row-major `m x width` tableau, kept equal to B^-1 * A_full.
    a: Vec<f64>,
    /// Current value of the basic variable of each row.
    x_basic: Vec<f64>,
    basis: Vec<usize>,
    state: Vec<VarState>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    /// Reduced-cost rows for phase one and phase two.
    cost1: Vec<f64>,
    cost2: Vec<f64>,
    iterations: usize,
}

enum StepOutcome {
    Pivoted,
    PhaseOptimal,
    Unbounded,
}

impl Tableau {
    fn value(&self, j: usize) -> f64 {
        match self.state[j] {
            VarState::Basic(r) => self.x_basic[r],
            VarState::AtLower => self.lower[j],
            VarState::AtUpper => self.upper[j],
            VarState::AtValue(v) => v,
        }
    }

    fn row(&self, r: usize) -> &[f64] {
        &self.a[r * self.width..(r + 1) * self.width]
    }

    fn phase1_objective(&self) -> f64 {
        self.basis
            .iter()
            .enumerate()
            .filter(|(_, &j)| j >= self.art_start)
            .map(|(r, _)| self.x_basic[r])
            .sum()
    }

    /// One simplex step under the given cost row. Bland's rule: the entering
    /// variable is the smallest-index eligible column; on ratio ties the
    /// leaving variable is the smallest-index basic variable.
    fn step(&mut self, phase_one: bool, tol: f64) -> StepOutcome {
        let cost = if phase_one { &self.cost1 } else { &self.cost2 };
        let mut entering = None;
        for j in 0..self.width {
            if matches!(self.state[j], VarState::Basic(_)) {
                continue;
            }
            if self.lower[j] == self.upper[j] {
                continue;
            }
            if !phase_one && j >= self.art_start {
                continue;
            }
            let rc = cost[j];
            let dir = match self.state[j] {
                VarState::AtLower => {
                    if rc < -tol {
                        1.0
                    } else {
                        continue;
                    }
                }
                VarState::AtUpper => {
                    if rc > tol {
                        -1.0
                    } else {
                        continue;
                    }
                }
                VarState::AtValue(_) => {
                    if rc < -tol {
                        1.0
                    } else if rc > tol {
                        -1.0
                    } else {
                        continue;
                    }
                }
                VarState::Basic(_) => unreachable!(),
            };
            entering = Some((j, dir));
            break;
        }
        let Some((enter, dir)) = entering else {
            return StepOutcome::PhaseOptimal;
        };

        // distance the entering variable itself can move
        let own_limit = if dir > 0.0 {
            self.upper[enter] - self.value(enter)
        } else {
            self.value(enter) - self.lower[enter]
        };

        // ratio test over basic variables
        let mut t_best = f64::INFINITY;
        let mut leave: Option<(usize, bool)> = None; // (row, hits_upper)
        for r in 0..self.m {
            let g = self.a[r * self.width + enter];
            if g.abs() <= tol {
                continue;
            }
            let rate = -dir * g; // d x_basic[r] / d t
            let b = self.basis[r];
            let (t_r, hits_upper) = if rate > 0.0 {
                if self.upper[b].is_finite() {
                    (((self.upper[b] - self.x_basic[r]) / rate).max(0.0), true)
                } else {
                    continue;
                }
            } else if self.lower[b].is_finite() {
                (((self.lower[b] - self.x_basic[r]) / rate).max(0.0), false)
            } else {
                continue;
            };
            let better = t_r < t_best - 1e-12
                || (t_r < t_best + 1e-12
                    && leave.map(|(lr, _)| self.basis[lr]).unwrap_or(usize::MAX) > b);
            if better {
                t_best = t_r;
                leave = Some((r, hits_upper));
            }
        }

        if own_limit <= t_best {
            // bound flip (or unbounded if nothing limits the move)
            if own_limit.is_infinite() {
                return StepOutcome::Unbounded;
            }
            let delta = dir * own_limit;
            for r in 0..self.m {
                self.x_basic[r] -= delta * self.a[r * self.width + enter];
            }
            self.state[enter] = if dir > 0.0 {
                VarState::AtUpper
            } else {
                VarState::AtLower
            };
            self.iterations += 1;
            return StepOutcome::Pivoted;
        }
        let (leave_row, hits_upper) = leave.expect("t_best finite implies a leaving row");

        let enter_val = self.value(enter) + dir * t_best;
        let delta = dir * t_best;
        for r in 0..self.m {
            self.x_basic[r] -= delta * self.a[r * self.width + enter];
        }
        let out_var = self.basis[leave_row];
        self.state[out_var] = if hits_upper {
            VarState::AtUpper
        } else {
            VarState::AtLower
        };
        self.pivot(leave_row, enter, enter_val);
        self.iterations += 1;
        StepOutcome::Pivoted
    }

    /// Exchange `enter` into the basis at `row` and eliminate its column.
    fn pivot(&mut self, row: usize, enter: usize, enter_val: f64) {
        let w = self.width;
        let pivot = self.a[row * w + enter];
        debug_assert!(pivot.abs() > 1e-12);
        let inv = 1.0 / pivot;
        for c in 0..w {
            self.a[row * w + c] *= inv;
        }
        let pivot_row: Vec<f64> = self.row(row).to_vec();
        for r in 0..self.m {
            if r == row {
                continue;
            }
            let f = self.a[r * w + enter];
            if f == 0.0 {
                continue;
            }
            let dst = &mut self.a[r * w..(r + 1) * w];
            for (d, p) in dst.iter_mut().zip(&pivot_row) {
                *d -= f * p;
            }
        }
        for cost in [&mut self.cost1, &mut self.cost2] {
            let f = cost[enter];
            if f != 0.0 {
                for (c, p) in cost.iter_mut().zip(&pivot_row) {
                    *c -= f * p;
                }
            }
        }
        self.basis[row] = enter;
        self.state[enter] = VarState::Basic(row);
        self.x_basic[row] = enter_val;
    }

    /// After phase one: pivot still-basic artificials out where possible.
    /// Rows whose tableau coefficients vanish over the real columns are
    /// redundant; their artificial stays basic at zero and never moves.
    fn drive_out_artificials(&mut self, tol: f64) {
        for r in 0..self.m {
            if self.basis[r] < self.art_start {
                continue;
            }
            let replacement = (0..self.art_start).find(|&j| {
                !matches!(self.state[j], VarState::Basic(_))
                    && self.a[r * self.width + j].abs() > tol
            });
            if let Some(j) = replacement {
                let val = self.value(j);
                self.pivot(r, j, val);
            }
        }
        // artificials can never re-enter
        for j in self.art_start..self.width {
            self.lower[j] = 0.0;
            self.upper[j] = 0.0;
        }
    }
}

fn initial_state(lower: f64, upper: f64, hint: Option<f64>) -> VarState {
    let v = match hint {
        Some(h) => h.clamp(lower, upper),
        None => 0.0f64.clamp(lower, upper),
    };
    if !v.is_finite() {
        // both bounds infinite on one side; fall back to zero
        return VarState::AtValue(0.0);
    }
    if v <= lower + 1e-12 && lower.is_finite() {
        VarState::AtLower
    } else if v >= upper - 1e-12 && upper.is_finite() {
        VarState::AtUpper
    } else {
        VarState::AtValue(v)
    }
}

pub(super) fn solve(lp: &StandardFormLp, opts: &SolveOptions) -> LpResult {
    let n = lp.num_vars();
    let m = lp.num_rows();
    let tol = opts.pivot_tol;

    // slack bounds by row sense: a'x + s = b
    let mut lower = lp.lower.clone();
    let mut upper = lp.upper.clone();
    for row in &lp.rows {
        match row.sense {
            RowSense::Le => {
                lower.push(0.0);
                upper.push(f64::INFINITY);
            }
            RowSense::Ge => {
                lower.push(f64::NEG_INFINITY);
                upper.push(0.0);
            }
            RowSense::Eq => {
                lower.push(0.0);
                upper.push(0.0);
            }
        }
    }

    let mut state: Vec<VarState> = (0..n)
        .map(|j| {
            initial_state(
                lp.lower[j],
                lp.upper[j],
                lp.initial.as_ref().map(|init| init[j]),
            )
        })
        .collect();

    // residuals decide which rows need an artificial
    let mut residuals = Vec::with_capacity(m);
    for row in &lp.rows {
        let mut acc = row.rhs;
        for (j, c) in row.coeffs.iter().enumerate() {
            if *c != 0.0 {
                let v = match state[j] {
                    VarState::AtLower => lp.lower[j],
                    VarState::AtUpper => lp.upper[j],
                    VarState::AtValue(v) => v,
                    VarState::Basic(_) => unreachable!(),
                };
                acc -= c * v;
            }
        }
        residuals.push(acc);
    }

    let mut art_rows: Vec<(usize, f64)> = Vec::new(); // (row, sign)
    for (r, &res) in residuals.iter().enumerate() {
        let (lo, hi) = (lower[n + r], upper[n + r]);
        if res < lo - tol || res > hi + tol {
            let clamped = res.clamp(lo, hi);
            art_rows.push((r, (res - clamped).signum()));
        }
    }

    let art_start = n + m;
    let width = art_start + art_rows.len();
    let mut a = vec![0.0; m * width];
    for (r, row) in lp.rows.iter().enumerate() {
        a[r * width..r * width + n].copy_from_slice(&row.coeffs);
        a[r * width + n + r] = 1.0;
    }

    let mut basis = Vec::with_capacity(m);
    let mut x_basic = Vec::with_capacity(m);
    state.resize(width, VarState::AtLower);
    lower.resize(width, 0.0);
    upper.resize(width, f64::INFINITY);

    let mut art_of_row = vec![None; m];
    for (idx, &(r, _)) in art_rows.iter().enumerate() {
        art_of_row[r] = Some(art_start + idx);
    }
    for r in 0..m {
        if let Some(art_col) = art_of_row[r] {
            let res = residuals[r];
            let clamped = res.clamp(lower[n + r], upper[n + r]);
            let sigma = (res - clamped).signum();
            // flip the row so the artificial column is a unit vector
            if sigma < 0.0 {
                for c in 0..width {
                    a[r * width + c] = -a[r * width + c];
                }
            }
            a[r * width + art_col] = 1.0;
            state[n + r] = if clamped <= lower[n + r] + 1e-12 && lower[n + r].is_finite() {
                VarState::AtLower
            } else {
                VarState::AtUpper
            };
            basis.push(art_col);
            x_basic.push((res - clamped).abs());
            state[art_col] = VarState::Basic(r);
        } else {
            basis.push(n + r);
            x_basic.push(residuals[r]);
            state[n + r] = VarState::Basic(r);
        }
    }

    // phase-one reduced costs: unit cost on artificials, eliminated against
    // the starting basis
    let mut cost1 = vec![0.0; width];
    for j in art_start..width {
        cost1[j] = 1.0;
    }
    for r in 0..m {
        if basis[r] >= art_start {
            for c in 0..width {
                cost1[c] -= a[r * width + c];
            }
        }
    }
    let mut cost2 = vec![0.0; width];
    cost2[..n].copy_from_slice(&lp.objective);

    let mut t = Tableau {
        m,
        width,
        art_start,
        a,
        x_basic,
        basis,
        state,
        lower,
        upper,
        cost1,
        cost2,
        iterations: 0,
    };

    let max_iterations = opts
        .max_iterations
        .unwrap_or(10 * (m + width).max(10));

    // phase one
    let mut status = LpStatus::Optimal;
    if art_start < width {
        loop {
            if t.iterations >= max_iterations {
                status = LpStatus::IterationLimit;
                break;
            }
            match t.step(true, tol) {
                StepOutcome::Pivoted => continue,
                StepOutcome::PhaseOptimal => break,
                StepOutcome::Unbounded => {
                    // cannot happen: the phase-one objective is bounded below
                    status = LpStatus::Unbounded;
                    break;
                }
            }
        }
        if status == LpStatus::Optimal {
            if t.phase1_objective() > opts.feas_tol {
                status = LpStatus::Infeasible;
            } else {
                t.drive_out_artificials(tol);
            }
        }
    }

    // phase two
    let mut phase2_complete = false;
    if status == LpStatus::Optimal {
        loop {
            if t.iterations >= max_iterations {
                status = LpStatus::IterationLimit;
                break;
            }
            match t.step(false, tol) {
                StepOutcome::Pivoted => continue,
                StepOutcome::PhaseOptimal => {
                    phase2_complete = true;
                    break;
                }
                StepOutcome::Unbounded => {
                    status = LpStatus::Unbounded;
                    break;
                }
            }
        }
    }

    let x: Vec<f64> = (0..n).map(|j| t.value(j)).collect();
    let objective = lp
        .objective
        .iter()
        .zip(&x)
        .map(|(c, v)| c * v)
        .sum::<f64>();
    let duals = if phase2_complete {
        (0..m).map(|r| -t.cost2[n + r]).collect()
    } else {
        Vec::new()
    };
    let feasibility_residual = primal_residual(lp, &x);

    LpResult {
        status,
        x,
        objective,
        duals,
        iterations: t.iterations,
        feasibility_residual,
    }
}

fn primal_residual(lp: &StandardFormLp, x: &[f64]) -> f64 {
    let mut worst: f64 = 0.0;
    for (j, v) in x.iter().enumerate() {
        if lp.lower[j].is_finite() {
            worst = worst.max(lp.lower[j] - v);
        }
        if lp.upper[j].is_finite() {
            worst = worst.max(v - lp.upper[j]);
        }
    }
    for row in &lp.rows {
        let lhs: f64 = row.coeffs.iter().zip(x).map(|(c, v)| c * v).sum();
        let viol = match row.sense {
            RowSense::Le => lhs - row.rhs,
            RowSense::Ge => row.rhs - lhs,
            RowSense::Eq => (lhs - row.rhs).abs(),
        };
        worst = worst.max(viol);
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::super::{solve_lp, LpStatus, LpRow, RowSense, SolveOptions, StandardFormLp};

    fn le(coeffs: Vec<f64>, rhs: f64) -> LpRow {
        LpRow {
            coeffs,
            sense: RowSense::Le,
            rhs,
        }
    }

    fn ge(coeffs: Vec<f64>, rhs: f64) -> LpRow {
        LpRow {
            coeffs,
            sense: RowSense::Ge,
            rhs,
        }
    }

    #[test]
    fn one_variable_lp() {
        let mut lp = StandardFormLp::new(1);
        lp.objective = vec![-1.0];
        lp.lower = vec![0.0];
        lp.rows.push(le(vec![1.0], 1.0));
        let res = solve_lp(&lp, &SolveOptions::default()).unwrap();
        assert_eq!(res.status, LpStatus::Optimal);
        assert!((res.x[0] - 1.0).abs() < 1e-9);
        assert!((res.objective + 1.0).abs() < 1e-9);
    }

    #[test]
    fn contradictory_rows_are_infeasible() {
        let mut lp = StandardFormLp::new(1);
        lp.rows.push(ge(vec![1.0], 2.0));
        lp.rows.push(le(vec![1.0], 1.0));
        let res = solve_lp(&lp, &SolveOptions::default()).unwrap();
        assert_eq!(res.status, LpStatus::Infeasible);
    }

    #[test]
    fn unbounded_direction_detected() {
        let mut lp = StandardFormLp::new(1);
        lp.objective = vec![-1.0];
        lp.lower = vec![0.0];
        let res = solve_lp(&lp, &SolveOptions::default()).unwrap();
        assert_eq!(res.status, LpStatus::Unbounded);
    }

    #[test]
    fn equality_rows_respected() {
        // min x + y  s.t. x + y = 2, x - y <= 0, 0 <= x,y <= 5
        let mut lp = StandardFormLp::new(2);
        lp.objective = vec![1.0, 1.0];
        lp.lower = vec![0.0, 0.0];
        lp.upper = vec![5.0, 5.0];
        lp.rows.push(LpRow {
            coeffs: vec![1.0, 1.0],
            sense: RowSense::Eq,
            rhs: 2.0,
        });
        lp.rows.push(le(vec![1.0, -1.0], 0.0));
        let res = solve_lp(&lp, &SolveOptions::default()).unwrap();
        assert_eq!(res.status, LpStatus::Optimal);
        assert!((res.objective - 2.0).abs() < 1e-9);
        assert!(res.feasibility_residual < 1e-9);
    }

    #[test]
    fn beale_degenerate_instance_terminates_optimal() {
        // classic cycling example for unprotected pivoting; Bland's rule
        // must terminate at objective -0.05
        let mut lp = StandardFormLp::new(4);
        lp.objective = vec![-0.75, 150.0, -0.02, 6.0];
        lp.lower = vec![0.0; 4];
        lp.rows.push(le(vec![0.25, -60.0, -0.04, 9.0], 0.0));
        lp.rows.push(le(vec![0.5, -90.0, -0.02, 3.0], 0.0));
        lp.rows.push(le(vec![0.0, 0.0, 1.0, 0.0], 1.0));
        let res = solve_lp(&lp, &SolveOptions::default()).unwrap();
        assert_eq!(res.status, LpStatus::Optimal);
        assert!((res.objective + 0.05).abs() < 1e-9, "objective {}", res.objective);
    }

    #[test]
    fn iteration_limit_reported() {
        let mut lp = StandardFormLp::new(2);
        lp.objective = vec![-1.0, -1.0];
        lp.lower = vec![0.0, 0.0];
        lp.rows.push(le(vec![1.0, 2.0], 4.0));
        lp.rows.push(le(vec![2.0, 1.0], 4.0));
        let res = solve_lp(
            &lp,
            &SolveOptions {
                max_iterations: Some(1),
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(res.status, LpStatus::IterationLimit);
    }

    #[test]
    fn warm_value_hint_skips_phase_one() {
        // equality row through an interior point: a cold start needs an
        // artificial, a warm start on the row does not
        let mut lp = StandardFormLp::new(2);
        lp.objective = vec![1.0, 2.0];
        lp.lower = vec![-10.0, -10.0];
        lp.upper = vec![10.0, 10.0];
        lp.rows.push(LpRow {
            coeffs: vec![1.0, 1.0],
            sense: RowSense::Eq,
            rhs: 4.0,
        });
        let cold = solve_lp(&lp, &SolveOptions::default()).unwrap();
        lp.initial = Some(vec![2.0, 2.0]);
        let warm = solve_lp(&lp, &SolveOptions::default()).unwrap();
        assert_eq!(cold.status, LpStatus::Optimal);
        assert_eq!(warm.status, LpStatus::Optimal);
        assert!((cold.objective - warm.objective).abs() < 1e-9);
        assert!(warm.iterations <= cold.iterations);
    }

    #[test]
    fn determinism_identical_inputs_identical_outputs() {
        let mut lp = StandardFormLp::new(3);
        lp.objective = vec![1.0, -2.0, 0.5];
        lp.lower = vec![0.0, 0.0, -1.0];
        lp.upper = vec![4.0, 3.0, 1.0];
        lp.rows.push(le(vec![1.0, 1.0, 1.0], 5.0));
        lp.rows.push(ge(vec![0.5, -1.0, 2.0], -1.0));
        let a = solve_lp(&lp, &SolveOptions::default()).unwrap();
        let b = solve_lp(&lp, &SolveOptions::default()).unwrap();
        assert_eq!(a.x, b.x);
        assert_eq!(a.objective.to_bits(), b.objective.to_bits());
        assert_eq!(a.iterations, b.iterations);
    }

    #[test]
    fn scaling_objective_keeps_argmin() {
        let mut lp = StandardFormLp::new(3);
        lp.objective = vec![-1.0, -0.5, 2.0];
        lp.lower = vec![0.0; 3];
        lp.upper = vec![2.0; 3];
        lp.rows.push(le(vec![1.0, 2.0, 1.0], 3.0));
        let base = solve_lp(&lp, &SolveOptions::default()).unwrap();
        for scale in [0.5, 3.0, 40.0] {
            let mut scaled = lp.clone();
            for c in &mut scaled.objective {
                *c *= scale;
            }
            let res = solve_lp(&scaled, &SolveOptions::default()).unwrap();
            assert_eq!(res.x, base.x, "scale {scale}");
        }
    }

    #[test]
    fn duals_satisfy_complementary_slackness() {
        let mut lp = StandardFormLp::new(2);
        lp.objective = vec![-3.0, -5.0];
        lp.lower = vec![0.0, 0.0];
        lp.rows.push(le(vec![1.0, 0.0], 4.0));
        lp.rows.push(le(vec![0.0, 2.0], 12.0));
        lp.rows.push(le(vec![3.0, 2.0], 18.0));
        let res = solve_lp(&lp, &SolveOptions::default()).unwrap();
        assert_eq!(res.status, LpStatus::Optimal);
        assert!((res.objective + 36.0).abs() < 1e-9);
        for (row, &y) in lp.rows.iter().zip(&res.duals) {
            let lhs: f64 = row.coeffs.iter().zip(&res.x).map(|(c, v)| c * v).sum();
            let slack = row.rhs - lhs;
            assert!(
                (y * slack).abs() < 1e-6,
                "complementary slackness violated: y={y}, slack={slack}"
            );
        }
    }
}
