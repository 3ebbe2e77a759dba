//! Stochastic kinematic bicycle model.
//!
//! State `[px, py, theta, v, delta_s]`, control `[accel, steer_rate]`, and the
//! Euler update `x' = x + (f(x, u) + w) dt` with `w ~ N(0, diag(noise))`.

use nalgebra::{Matrix5, Matrix5x2};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{PlanError, Result};

pub const STATE_DIM: usize = 5;
pub const CONTROL_DIM: usize = 2;

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct State {
    pub px: f64,
    pub py: f64,
    pub theta: f64,
    pub v: f64,
    pub delta_s: f64,
}

impl State {
    pub const fn new(px: f64, py: f64, theta: f64, v: f64, delta_s: f64) -> Self {
        Self { px, py, theta, v, delta_s }
    }

    pub const fn at(px: f64, py: f64) -> Self {
        Self::new(px, py, 0.0, 0.0, 0.0)
    }

    pub fn to_array(&self) -> [f64; STATE_DIM] {
        [self.px, self.py, self.theta, self.v, self.delta_s]
    }

    pub fn from_array(a: [f64; STATE_DIM]) -> Self {
        Self::new(a[0], a[1], a[2], a[3], a[4])
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|x| x.is_finite())
    }

    /// Planar distance to another state.
    pub fn distance(&self, other: &State) -> f64 {
        (self.px - other.px).hypot(self.py - other.py)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Control {
    pub accel: f64,
    pub steer_rate: f64,
}

impl Control {
    pub const ZERO: Control = Control { accel: 0.0, steer_rate: 0.0 };

    pub const fn new(accel: f64, steer_rate: f64) -> Self {
        Self { accel, steer_rate }
    }

    pub fn is_finite(&self) -> bool {
        self.accel.is_finite() && self.steer_rate.is_finite()
    }
}

/// Model constants and actuation limits.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DynamicsParams {
    pub wheelbase: f64,
    pub dt: f64,
    /// Variances of the derivative noise, one per state component.
    pub process_noise: [f64; STATE_DIM],
    pub velocity_limits: [f64; 2],
    pub steering_limits: [f64; 2],
    pub accel_limits: [f64; 2],
    pub steer_rate_limits: [f64; 2],
}

impl Default for DynamicsParams {
    fn default() -> Self {
        Self {
            wheelbase: 0.33,
            dt: 0.05,
            process_noise: [0.001, 0.001, 0.012, 0.1, 0.006],
            velocity_limits: [-0.5, 2.0],
            steering_limits: [-0.4, 0.4],
            accel_limits: [-1.0, 1.0],
            steer_rate_limits: [-1.0, 1.0],
        }
    }
}

impl DynamicsParams {
    /// Same model with the process noise switched off.
    pub fn noise_free(&self) -> Self {
        Self { process_noise: [0.0; STATE_DIM], ..self.clone() }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(PlanError::InvalidParam(m.to_string()));
        if !(self.wheelbase > 0.0) {
            return bad("wheelbase must be positive");
        }
        if !(self.dt > 0.0) {
            return bad("dt must be positive");
        }
        if self.process_noise.iter().any(|&n| !(n >= 0.0) || !n.is_finite()) {
            return bad("process noise variances must be finite and non-negative");
        }
        for (name, [lo, hi]) in [
            ("velocity", self.velocity_limits),
            ("steering", self.steering_limits),
            ("accel", self.accel_limits),
            ("steer_rate", self.steer_rate_limits),
        ] {
            if !(lo < hi) {
                return Err(PlanError::InvalidParam(format!("{name} limits: lower must be < upper")));
            }
        }
        if self.steering_limits[0] <= -std::f64::consts::FRAC_PI_2
            || self.steering_limits[1] >= std::f64::consts::FRAC_PI_2
        {
            return bad("steering limits must stay inside (-pi/2, pi/2)");
        }
        Ok(())
    }

    pub fn clamp_control(&self, u: Control) -> Control {
        Control {
            accel: u.accel.clamp(self.accel_limits[0], self.accel_limits[1]),
            steer_rate: u.steer_rate.clamp(self.steer_rate_limits[0], self.steer_rate_limits[1]),
        }
    }

    /// Clamps an interleaved `[accel, steer_rate, ...]` sequence in place.
    pub fn clamp_stacked(&self, xi: &mut [f64]) {
        for pair in xi.chunks_exact_mut(CONTROL_DIM) {
            pair[0] = pair[0].clamp(self.accel_limits[0], self.accel_limits[1]);
            pair[1] = pair[1].clamp(self.steer_rate_limits[0], self.steer_rate_limits[1]);
        }
    }

    pub fn has_noise(&self) -> bool {
        self.process_noise.iter().any(|&n| n > 0.0)
    }

    /// Draws one derivative-noise vector `w ~ N(0, diag(process_noise))`.
    pub fn sample_noise<R: Rng + ?Sized>(&self, rng: &mut R) -> [f64; STATE_DIM] {
        let mut w = [0.0; STATE_DIM];
        for (wi, &var) in w.iter_mut().zip(&self.process_noise) {
            let z: f64 = rng.sample(StandardNormal);
            *wi = z * var.sqrt();
        }
        w
    }
}

/// Continuous-time vector field `f(x, u)`.
#[inline]
fn vector_field(x: &State, u: &Control, wheelbase: f64) -> [f64; STATE_DIM] {
    let (s, c) = x.theta.sin_cos();
    [x.v * c, x.v * s, x.v * x.delta_s.tan() / wheelbase, u.accel, u.steer_rate]
}

/// One Euler step. Controls are clamped before integration, velocity and
/// steering angle after it.
pub fn step(
    state: &State,
    control: &Control,
    params: &DynamicsParams,
    noise: Option<&[f64; STATE_DIM]>,
) -> Result<State> {
    if !state.is_finite() {
        return Err(PlanError::NonFinite("state"));
    }
    if !control.is_finite() {
        return Err(PlanError::NonFinite("control"));
    }
    let u = params.clamp_control(*control);
    let f = vector_field(state, &u, params.wheelbase);
    let x = state.to_array();
    let mut next = [0.0; STATE_DIM];
    for i in 0..STATE_DIM {
        let w = noise.map_or(0.0, |n| n[i]);
        next[i] = x[i] + (f[i] + w) * params.dt;
    }
    next[3] = next[3].clamp(params.velocity_limits[0], params.velocity_limits[1]);
    next[4] = next[4].clamp(params.steering_limits[0], params.steering_limits[1]);
    let next = State::from_array(next);
    if !next.is_finite() {
        return Err(PlanError::NonFinite("integrated state"));
    }
    Ok(next)
}

/// A rolled-out trajectory: `states.len() == controls.len() + 1`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub states: Vec<State>,
    pub controls: Vec<Control>,
    pub cost: Option<f64>,
    pub violations: Option<u32>,
}

impl Trajectory {
    pub fn new(states: Vec<State>, controls: Vec<Control>) -> Self {
        debug_assert_eq!(states.len(), controls.len() + 1);
        Self { states, controls, cost: None, violations: None }
    }

    /// Number of control steps.
    pub fn steps(&self) -> usize {
        self.controls.len()
    }

    pub fn initial(&self) -> &State {
        &self.states[0]
    }

    pub fn terminal(&self) -> &State {
        self.states.last().expect("trajectory has at least one state")
    }

    pub fn is_feasible(&self) -> bool {
        self.violations == Some(0)
    }
}

/// Applies `step` along `controls`. With `rng` present, each step draws fresh
/// process noise; otherwise the rollout is the deterministic nominal.
pub fn rollout<R: Rng + ?Sized>(
    x0: &State,
    controls: &[Control],
    params: &DynamicsParams,
    mut rng: Option<&mut R>,
) -> Result<Trajectory> {
    if !x0.is_finite() {
        return Err(PlanError::NonFinite("initial state"));
    }
    let mut states = Vec::with_capacity(controls.len() + 1);
    let mut clamped = Vec::with_capacity(controls.len());
    states.push(*x0);
    let mut x = *x0;
    for u in controls {
        let u = params.clamp_control(*u);
        let noise = rng.as_deref_mut().map(|r| params.sample_noise(r));
        x = step(&x, &u, params, noise.as_ref())?;
        states.push(x);
        clamped.push(u);
    }
    Ok(Trajectory::new(states, clamped))
}

/// Noise-free rollout.
pub fn rollout_nominal(x0: &State, controls: &[Control], params: &DynamicsParams) -> Result<Trajectory> {
    rollout::<rand_chacha::ChaCha8Rng>(x0, controls, params, None)
}

/// Discrete-time Jacobians of the noise-free Euler map:
/// `A = I + df/dx dt`, `B = df/du dt`.
pub fn linearize(state: &State, control: &Control, params: &DynamicsParams) -> (Matrix5<f64>, Matrix5x2<f64>) {
    let _ = control; // f is affine in u
    let dt = params.dt;
    let l = params.wheelbase;
    let (s, c) = state.theta.sin_cos();
    let cos_d = state.delta_s.cos();
    let mut a = Matrix5::<f64>::identity();
    a[(0, 2)] = -state.v * s * dt;
    a[(0, 3)] = c * dt;
    a[(1, 2)] = state.v * c * dt;
    a[(1, 3)] = s * dt;
    a[(2, 3)] = state.delta_s.tan() / l * dt;
    a[(2, 4)] = state.v / (l * cos_d * cos_d) * dt;
    let mut b = Matrix5x2::<f64>::zeros();
    b[(3, 0)] = dt;
    b[(4, 1)] = dt;
    (a, b)
}
