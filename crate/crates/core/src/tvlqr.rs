//! Time-varying LQR along a nominal trajectory, used to re-anchor secondary
//! policy modes to the robot's actual state.
//!
//! Gains follow the feedback convention `u = u_ref + K (x - x_ref)`, so each
//! `K` already carries the stabilizing negative sign.

use nalgebra::{Matrix2, Matrix2x5, Matrix5, SMatrix};
use serde::{Deserialize, Serialize};

use crate::dynamics::{linearize, step, Control, DynamicsParams, State, Trajectory, STATE_DIM};
use crate::error::{PlanError, Result};

pub type Gain = Matrix2x5<f64>;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LqrWeights {
    pub state: [f64; STATE_DIM],
    pub control: [f64; 2],
    pub terminal: [f64; STATE_DIM],
}

impl Default for LqrWeights {
    fn default() -> Self {
        Self {
            state: [10.0, 10.0, 1.0, 1.0, 1.0],
            control: [1.0, 1.0],
            terminal: [100.0, 100.0, 10.0, 10.0, 10.0],
        }
    }
}

impl LqrWeights {
    pub fn validate(&self) -> Result<()> {
        if self.state.iter().chain(&self.terminal).any(|w| !(*w >= 0.0)) {
            return Err(PlanError::InvalidParam("LQR state weights must be non-negative".into()));
        }
        if self.control.iter().any(|w| !(*w > 0.0)) {
            return Err(PlanError::InvalidParam("LQR control weights must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GainSchedule {
    pub gains: Vec<Gain>,
    /// Cost-to-go matrices `P_0 ..= P_N`, where `P_N` is the terminal weight.
    pub cost_to_go: Vec<Matrix5<f64>>,
}

fn diag<const N: usize>(w: &[f64; N]) -> SMatrix<f64, N, N> {
    SMatrix::<f64, N, N>::from_diagonal(&SMatrix::<f64, N, 1>::from_column_slice(w))
}

/// Backward Riccati recursion over per-step `(A_t, B_t)` pairs.
pub fn riccati_sequence(
    jacobians: &[(Matrix5<f64>, SMatrix<f64, 5, 2>)],
    weights: &LqrWeights,
) -> Result<GainSchedule> {
    let q = diag(&weights.state);
    let r = diag(&weights.control);
    let n = jacobians.len();
    let mut p = diag(&weights.terminal);
    let mut gains = vec![Gain::zeros(); n];
    let mut cost_to_go = vec![Matrix5::zeros(); n + 1];
    cost_to_go[n] = p;
    for t in (0..n).rev() {
        let (a, b) = &jacobians[t];
        let bt_p = b.transpose() * p;
        let s: Matrix2<f64> = r + bt_p * b;
        let s_inv = s.try_inverse().ok_or(PlanError::Singular(t))?;
        let k = -(s_inv * bt_p * a);
        let next = q + a.transpose() * p * (a + b * k);
        // Symmetrize against round-off drift.
        p = (next + next.transpose()) * 0.5;
        gains[t] = k;
        cost_to_go[t] = p;
    }
    Ok(GainSchedule { gains, cost_to_go })
}

/// Gains along `nominal`, linearizing at every `(x_t, u_t)`.
pub fn riccati_gains(nominal: &Trajectory, weights: &LqrWeights, params: &DynamicsParams) -> Result<GainSchedule> {
    let jac: Vec<_> = nominal
        .states
        .iter()
        .zip(&nominal.controls)
        .map(|(x, u)| linearize(x, u, params))
        .collect();
    riccati_sequence(&jac, weights)
}

fn wrap_angle(a: f64) -> f64 {
    let two_pi = std::f64::consts::TAU;
    let w = (a + std::f64::consts::PI).rem_euclid(two_pi) - std::f64::consts::PI;
    if w == -std::f64::consts::PI {
        std::f64::consts::PI
    } else {
        w
    }
}

fn tracking_error(x: &State, reference: &State) -> SMatrix<f64, 5, 1> {
    SMatrix::<f64, 5, 1>::new(
        x.px - reference.px,
        x.py - reference.py,
        wrap_angle(x.theta - reference.theta),
        x.v - reference.v,
        x.delta_s - reference.delta_s,
    )
}

/// Tracks `nominal` from `x0` with the given gains on the noise-free model and
/// returns the clamped controls applied.
pub fn track(nominal: &Trajectory, gains: &[Gain], x0: &State, params: &DynamicsParams) -> Result<Vec<Control>> {
    let mut x = *x0;
    let mut out = Vec::with_capacity(nominal.controls.len());
    for ((reference, u_ref), k) in nominal.states.iter().zip(&nominal.controls).zip(gains) {
        let du = k * tracking_error(&x, reference);
        let u = params.clamp_control(Control::new(u_ref.accel + du[0], u_ref.steer_rate + du[1]));
        x = step(&x, &u, params, None)?;
        out.push(u);
    }
    Ok(out)
}

/// Control sequence that steers the robot from its actual state `x0` back onto
/// a mode's nominal trajectory.
pub fn warm_start_secondary(
    nominal: &Trajectory,
    x0: &State,
    weights: &LqrWeights,
    params: &DynamicsParams,
) -> Result<Vec<Control>> {
    let schedule = riccati_gains(nominal, weights, params)?;
    track(nominal, &schedule.gains, x0, &params.noise_free())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::rollout_nominal;
    use crate::rng;
    use nalgebra::{DMatrix, SymmetricEigen};
    use rand::Rng;

    fn params() -> DynamicsParams {
        DynamicsParams::default().noise_free()
    }

    /// Textbook finite-horizon LQR on time-invariant (A, B) using dynamic
    /// matrices and the `P = Q + A'PA - A'PB (R + B'PB)^-1 B'PA` form.
    fn textbook_lqr(a: &DMatrix<f64>, b: &DMatrix<f64>, q: &DMatrix<f64>, r: &DMatrix<f64>, qf: &DMatrix<f64>, n: usize) -> Vec<DMatrix<f64>> {
        let mut p = qf.clone();
        let mut gains = Vec::new();
        for _ in 0..n {
            let s = r + b.transpose() * &p * b;
            let k = s.clone().lu().solve(&(b.transpose() * &p * a)).unwrap();
            let pn = q + a.transpose() * &p * a - a.transpose() * &p * b * &k;
            gains.push(-k);
            p = pn;
        }
        gains.reverse();
        gains
    }

    fn dm<const R: usize, const C: usize>(m: &SMatrix<f64, R, C>) -> DMatrix<f64> {
        DMatrix::from_column_slice(R, C, m.as_slice())
    }

    #[test]
    fn static_nominal_matches_textbook_lqr() {
        let w = LqrWeights::default();
        let x = State::default();
        let nominal = rollout_nominal(&x, &[Control::ZERO; 30], &params()).unwrap();
        let ours = riccati_gains(&nominal, &w, &params()).unwrap();
        let (a, b) = linearize(&x, &Control::ZERO, &params());
        let oracle = textbook_lqr(&dm(&a), &dm(&b), &dm(&diag(&w.state)), &dm(&diag(&w.control)), &dm(&diag(&w.terminal)), 30);
        for (k, o) in ours.gains.iter().zip(&oracle) {
            let diff = (dm(k) - o).abs().max();
            assert!(diff <= 1e-8 * o.abs().max().max(1.0), "{diff}");
        }
    }

    #[test]
    fn zero_state_weights_give_zero_gains() {
        let w = LqrWeights { state: [0.0; 5], terminal: [0.0; 5], control: [1.0, 1.0] };
        let nominal = rollout_nominal(&State::new(0.0, 0.0, 0.3, 1.0, 0.1), &[Control::new(0.2, 0.1); 10], &params()).unwrap();
        let s = riccati_gains(&nominal, &w, &params()).unwrap();
        assert!(s.gains.iter().all(|k| k.iter().all(|&g| g == 0.0)));
    }

    #[test]
    fn one_step_gain_by_hand() {
        let w = LqrWeights::default();
        let x = State::new(0.5, 0.2, 0.4, 1.2, 0.1);
        let u = Control::new(0.3, -0.2);
        let nominal = rollout_nominal(&x, &[u], &params()).unwrap();
        let s = riccati_gains(&nominal, &w, &params()).unwrap();
        let (a, b) = linearize(&x, &u, &params());
        let qf = diag(&w.terminal);
        let r = diag(&w.control);
        let expected = -((r + b.transpose() * qf * b).try_inverse().unwrap() * b.transpose() * qf * a);
        assert_eq!(s.gains.len(), 1);
        assert!((s.gains[0] - expected).abs().max() < 1e-12);
    }

    #[test]
    fn cost_to_go_is_symmetric_psd() {
        let mut r = rng::stream(2);
        let controls: Vec<Control> = (0..41).map(|_| Control::new(r.random_range(-1.0..1.0), r.random_range(-1.0..1.0))).collect();
        let nominal = rollout_nominal(&State::new(0.0, 0.0, 0.0, 1.0, 0.0), &controls, &params()).unwrap();
        let s = riccati_gains(&nominal, &LqrWeights::default(), &params()).unwrap();
        for p in &s.cost_to_go {
            assert!((p - p.transpose()).abs().max() <= 1e-9);
            let eig = SymmetricEigen::new(*p).eigenvalues;
            assert!(eig.min() >= -1e-9);
        }
    }

    fn nominal_curve() -> Trajectory {
        let controls: Vec<Control> = (0..41).map(|t| Control::new(0.5, if t < 20 { 0.4 } else { -0.4 })).collect();
        rollout_nominal(&State::new(0.0, 0.0, 0.0, 1.0, 0.0), &controls, &params()).unwrap()
    }

    #[test]
    fn exact_start_reproduces_nominal_controls() {
        let nominal = nominal_curve();
        let u = warm_start_secondary(&nominal, nominal.initial(), &LqrWeights::default(), &params()).unwrap();
        assert_eq!(u, nominal.controls);
    }

    #[test]
    fn zero_gains_replay_nominal() {
        let nominal = nominal_curve();
        let gains = vec![Gain::zeros(); nominal.steps()];
        let x0 = State::new(0.3, -0.2, 0.1, 0.8, 0.0);
        assert_eq!(track(&nominal, &gains, &x0, &params()).unwrap(), nominal.controls);
    }

    #[test]
    fn tracking_beats_open_loop_replay() {
        let nominal = nominal_curve();
        let target = nominal.terminal();
        let mut r = rng::stream(9);
        let (mut closed, mut open) = (0.0, 0.0);
        for _ in 0..100 {
            let mut x0 = *nominal.initial();
            let ang: f64 = r.random_range(0.0..std::f64::consts::TAU);
            let mag: f64 = r.random_range(0.0..0.1);
            x0.px += mag * ang.cos();
            x0.py += mag * ang.sin();
            let u = warm_start_secondary(&nominal, &x0, &LqrWeights::default(), &params()).unwrap();
            closed += rollout_nominal(&x0, &u, &params()).unwrap().terminal().distance(target);
            open += rollout_nominal(&x0, &nominal.controls, &params()).unwrap().terminal().distance(target);
        }
        assert!(closed <= open, "closed {closed} open {open}");
    }

    #[test]
    fn wraps_heading_error() {
        assert!((wrap_angle(3.0 * std::f64::consts::PI) - std::f64::consts::PI).abs() < 1e-12);
        assert!((wrap_angle(-0.5) + 0.5).abs() < 1e-15);
        assert!((wrap_angle(2.0 * std::f64::consts::PI + 0.1) - 0.1).abs() < 1e-12);
    }
}
