//! Gaussian-mixture policy over stacked control sequences.
//!
//! A control sequence of `steps` controls is stored interleaved as
//! `[accel_0, steer_rate_0, accel_1, steer_rate_1, ...]`. Each mode is a
//! diagonal Gaussian over that vector.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dynamics::{Control, DynamicsParams, CONTROL_DIM};
use crate::error::{PlanError, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolicyMode {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
    pub weight: f64,
}

impl PolicyMode {
    /// Zero-mean mode with the given per-dimension variance over `steps` controls.
    pub fn cold(steps: usize, initial_var: [f64; CONTROL_DIM], weight: f64) -> Self {
        let var = (0..steps).flat_map(|_| initial_var).collect();
        Self { mean: vec![0.0; steps * CONTROL_DIM], var, weight }
    }

    pub fn from_controls(controls: &[Control], initial_var: [f64; CONTROL_DIM], weight: f64) -> Self {
        let mean = controls.iter().flat_map(|u| [u.accel, u.steer_rate]).collect();
        let var = (0..controls.len()).flat_map(|_| initial_var).collect();
        Self { mean, var, weight }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn steps(&self) -> usize {
        self.mean.len() / CONTROL_DIM
    }

    /// Draws `xi ~ N(mean, diag(var))` and clamps it to the actuation limits.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, params: &DynamicsParams) -> Vec<f64> {
        let mut xi: Vec<f64> = self
            .mean
            .iter()
            .zip(&self.var)
            .map(|(&m, &v)| {
                let z: f64 = rng.sample(StandardNormal);
                m + z * v.sqrt()
            })
            .collect();
        params.clamp_stacked(&mut xi);
        xi
    }

    pub fn with_variance(mut self, initial_var: [f64; CONTROL_DIM]) -> Self {
        for pair in self.var.chunks_exact_mut(CONTROL_DIM) {
            pair.copy_from_slice(&initial_var);
        }
        self
    }

    /// Diagonal Gaussian log-density of `xi` under this mode.
    pub fn log_likelihood(&self, xi: &[f64]) -> f64 {
        self.mean
            .iter()
            .zip(&self.var)
            .zip(xi)
            .map(|((&m, &v), &x)| -0.5 * ((x - m).powi(2) / v + v.ln() + (2.0 * std::f64::consts::PI).ln()))
            .sum()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MultimodalPolicy {
    pub modes: Vec<PolicyMode>,
    /// Number of control steps per sequence (horizon + 1).
    pub steps: usize,
}

impl MultimodalPolicy {
    pub fn cold_start(num_modes: usize, steps: usize, initial_var: [f64; CONTROL_DIM]) -> Self {
        let w = 1.0 / num_modes as f64;
        Self { modes: (0..num_modes).map(|_| PolicyMode::cold(steps, initial_var, w)).collect(), steps }
    }

    pub fn from_modes(mut modes: Vec<PolicyMode>) -> Result<Self> {
        let steps = modes.first().ok_or(PlanError::Empty("policy modes"))?.steps();
        if modes.iter().any(|m| m.dim() != steps * CONTROL_DIM || m.var.len() != m.dim()) {
            return Err(PlanError::InvalidParam("policy modes differ in dimension".into()));
        }
        let w = 1.0 / modes.len() as f64;
        modes.iter_mut().for_each(|m| m.weight = w);
        Ok(Self { modes, steps })
    }

    pub fn num_modes(&self) -> usize {
        self.modes.len()
    }

    pub fn horizon(&self) -> usize {
        self.steps.saturating_sub(1)
    }

    /// Flat numeric encoding: `[K, N_T, N_u, (weight, mean.., var..) * K]`.
    pub fn to_flat(&self) -> Vec<f64> {
        let d = self.steps * CONTROL_DIM;
        let mut out = Vec::with_capacity(3 + self.modes.len() * (1 + 2 * d));
        out.extend([self.modes.len() as f64, self.horizon() as f64, CONTROL_DIM as f64]);
        for m in &self.modes {
            out.push(m.weight);
            out.extend_from_slice(&m.mean);
            out.extend_from_slice(&m.var);
        }
        out
    }

    pub fn from_flat(data: &[f64]) -> Result<Self> {
        let header = data.get(..3).ok_or_else(|| PlanError::Malformed("missing header".into()))?;
        let as_count = |x: f64, what: &str| -> Result<usize> {
            if x.is_finite() && x >= 0.0 && x.fract() == 0.0 {
                Ok(x as usize)
            } else {
                Err(PlanError::Malformed(format!("bad {what} field {x}")))
            }
        };
        let k = as_count(header[0], "K")?;
        let horizon = as_count(header[1], "N_T")?;
        let nu = as_count(header[2], "N_u")?;
        if nu != CONTROL_DIM || k == 0 {
            return Err(PlanError::Malformed(format!("unsupported K={k}, N_u={nu}")));
        }
        let steps = horizon + 1;
        let d = steps * CONTROL_DIM;
        let body = &data[3..];
        if body.len() != k * (1 + 2 * d) {
            return Err(PlanError::Malformed(format!("expected {} values, got {}", k * (1 + 2 * d), body.len())));
        }
        let modes = body
            .chunks_exact(1 + 2 * d)
            .map(|c| PolicyMode { weight: c[0], mean: c[1..1 + d].to_vec(), var: c[1 + d..].to_vec() })
            .collect();
        Ok(Self { modes, steps })
    }
}

/// Stratified allocation: each mode gets `m / k` samples, the remainder goes to
/// the first mode.
pub fn allocate(num_samples: usize, num_modes: usize) -> Vec<usize> {
    let base = num_samples / num_modes;
    let mut counts = vec![base; num_modes];
    counts[0] += num_samples - base * num_modes;
    counts
}

/// Mode index of the `j`-th sample under [`allocate`]. Samples of one mode are
/// contiguous.
pub fn mode_of_sample(j: usize, counts: &[usize]) -> usize {
    let mut acc = 0;
    for (k, &c) in counts.iter().enumerate() {
        acc += c;
        if j < acc {
            return k;
        }
    }
    counts.len() - 1
}

/// Maximum-likelihood diagonal Gaussian fit: sample mean and divide-by-n
/// variance, floored at `var_floor`.
pub fn mle_update<S: AsRef<[f64]>>(elites: &[S], var_floor: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    let first = elites.first().ok_or(PlanError::Empty("elite set"))?.as_ref();
    let d = first.len();
    let n = elites.len() as f64;
    let mut mean = vec![0.0; d];
    for e in elites {
        let e = e.as_ref();
        if e.len() != d {
            return Err(PlanError::InvalidParam("elite sequences differ in length".into()));
        }
        mean.iter_mut().zip(e).for_each(|(m, x)| *m += x);
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut var = vec![0.0; d];
    for e in elites {
        var.iter_mut().zip(e.as_ref()).zip(&mean).for_each(|((v, x), m)| *v += (x - m) * (x - m));
    }
    var.iter_mut().for_each(|v| *v = (*v / n).max(var_floor));
    Ok((mean, var))
}

/// The mode's most likely control sequence: its mean, clamped.
pub fn nominal_controls(mode: &PolicyMode, params: &DynamicsParams) -> Vec<Control> {
    mode.mean
        .chunks_exact(CONTROL_DIM)
        .map(|c| params.clamp_control(Control::new(c[0], c[1])))
        .collect()
}

/// Shifts the mode forward by `executed_steps` controls. Vacated tail slots get
/// a zero mean and the initial sampling variance.
pub fn shift_primary(mode: &PolicyMode, executed_steps: usize, initial_var: [f64; CONTROL_DIM]) -> PolicyMode {
    let steps = mode.steps();
    let s = executed_steps.min(steps) * CONTROL_DIM;
    let mut mean = mode.mean[s..].to_vec();
    let mut var = mode.var[s..].to_vec();
    for _ in 0..executed_steps.min(steps) {
        mean.extend([0.0; CONTROL_DIM]);
        var.extend(initial_var);
    }
    PolicyMode { mean, var, weight: mode.weight }
}
