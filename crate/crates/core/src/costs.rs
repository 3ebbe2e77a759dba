//! Trajectory cost and constraint indicators.

use serde::{Deserialize, Serialize};

use crate::dynamics::{State, Trajectory, STATE_DIM};
use crate::error::{PlanError, Result};

/// Quadratic tracking cost toward `goal` with diagonal weights.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CostParams {
    pub stage: [f64; STATE_DIM],
    pub terminal: [f64; STATE_DIM],
    pub control: [f64; 2],
    pub goal: State,
}

impl Default for CostParams {
    fn default() -> Self {
        Self {
            stage: [1.0, 1.0, 0.0, 0.0, 0.0],
            terminal: [40.0, 40.0, 0.0, 0.0, 0.0],
            control: [0.1, 0.1],
            goal: State::default(),
        }
    }
}

impl CostParams {
    pub fn validate(&self) -> Result<()> {
        let all = self.stage.iter().chain(&self.terminal).chain(&self.control);
        if all.clone().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err(PlanError::InvalidParam("cost weights must be finite and non-negative".into()));
        }
        Ok(())
    }

    #[inline]
    fn weighted_error(&self, x: &State, w: &[f64; STATE_DIM]) -> f64 {
        let e = x.to_array();
        let g = self.goal.to_array();
        (0..STATE_DIM).map(|i| w[i] * (e[i] - g[i]) * (e[i] - g[i])).sum()
    }
}

/// Running cost over every `(x_t, u_t)` pair plus the terminal cost on the last
/// state.
pub fn trajectory_cost(traj: &Trajectory, params: &CostParams) -> f64 {
    let mut j = 0.0;
    for (x, u) in traj.states.iter().zip(&traj.controls) {
        j += params.weighted_error(x, &params.stage);
        j += params.control[0] * u.accel * u.accel + params.control[1] * u.steer_rate * u.steer_rate;
    }
    j + params.weighted_error(traj.terminal(), &params.terminal)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Obstacle {
    pub x: f64,
    pub y: f64,
    pub radius: f64,
}

impl Obstacle {
    pub const fn new(x: f64, y: f64, radius: f64) -> Self {
        Self { x, y, radius }
    }

    /// Strictly inside the collision radius.
    #[inline]
    pub fn contains(&self, px: f64, py: f64) -> bool {
        let dx = px - self.x;
        let dy = py - self.y;
        dx * dx + dy * dy < self.radius * self.radius
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ConstraintParams {
    pub workspace_min: [f64; 2],
    pub workspace_max: [f64; 2],
    pub obstacles: Vec<Obstacle>,
    /// Inter-robot collision distance `L`.
    pub collision_radius: f64,
    /// Chance level `P`.
    pub chance_level: f64,
}

impl Default for ConstraintParams {
    fn default() -> Self {
        Self {
            workspace_min: [-1.0, -6.0],
            workspace_max: [11.0, 6.0],
            obstacles: Vec::new(),
            collision_radius: 0.5,
            chance_level: 0.5,
        }
    }
}

impl ConstraintParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.workspace_min[0] < self.workspace_max[0] && self.workspace_min[1] < self.workspace_max[1]) {
            return Err(PlanError::InvalidParam("workspace lower bound must be below upper bound".into()));
        }
        if !(self.collision_radius > 0.0) {
            return Err(PlanError::InvalidParam("collision radius must be positive".into()));
        }
        if !(self.chance_level > 0.0 && self.chance_level < 1.0) {
            return Err(PlanError::InvalidParam("chance level must lie in (0, 1)".into()));
        }
        if self.obstacles.iter().any(|o| !(o.radius > 0.0)) {
            return Err(PlanError::InvalidParam("obstacle radius must be positive".into()));
        }
        Ok(())
    }

    #[inline]
    pub fn out_of_bounds(&self, px: f64, py: f64) -> bool {
        px < self.workspace_min[0] || px > self.workspace_max[0] || py < self.workspace_min[1] || py > self.workspace_max[1]
    }
}

const GRID_CELL: f64 = 0.5;

/// Uniform bucket grid over circular obstacles for fast point queries.
#[derive(Clone, Debug)]
pub struct StaticConstraints {
    params: ConstraintParams,
    origin: [f64; 2],
    dims: [usize; 2],
    buckets: Vec<Vec<u32>>,
}

impl StaticConstraints {
    pub fn new(params: ConstraintParams) -> Self {
        if params.obstacles.is_empty() {
            return Self { params, origin: [0.0; 2], dims: [0, 0], buckets: Vec::new() };
        }
        let mut lo = [f64::INFINITY; 2];
        let mut hi = [f64::NEG_INFINITY; 2];
        for o in &params.obstacles {
            lo[0] = lo[0].min(o.x - o.radius);
            lo[1] = lo[1].min(o.y - o.radius);
            hi[0] = hi[0].max(o.x + o.radius);
            hi[1] = hi[1].max(o.y + o.radius);
        }
        let dims = [
            ((hi[0] - lo[0]) / GRID_CELL).ceil().max(1.0) as usize,
            ((hi[1] - lo[1]) / GRID_CELL).ceil().max(1.0) as usize,
        ];
        let mut buckets = vec![Vec::new(); dims[0] * dims[1]];
        for (idx, o) in params.obstacles.iter().enumerate() {
            let cx0 = (((o.x - o.radius - lo[0]) / GRID_CELL).floor() as usize).min(dims[0] - 1);
            let cx1 = (((o.x + o.radius - lo[0]) / GRID_CELL).floor() as usize).min(dims[0] - 1);
            let cy0 = (((o.y - o.radius - lo[1]) / GRID_CELL).floor() as usize).min(dims[1] - 1);
            let cy1 = (((o.y + o.radius - lo[1]) / GRID_CELL).floor() as usize).min(dims[1] - 1);
            for cy in cy0..=cy1 {
                for cx in cx0..=cx1 {
                    buckets[cy * dims[0] + cx].push(idx as u32);
                }
            }
        }
        Self { params, origin: lo, dims, buckets }
    }

    pub fn params(&self) -> &ConstraintParams {
        &self.params
    }

    pub fn obstacles(&self) -> &[Obstacle] {
        &self.params.obstacles
    }

    /// True when the point lies inside any obstacle.
    #[inline]
    pub fn in_obstacle(&self, px: f64, py: f64) -> bool {
        if self.buckets.is_empty() {
            return false;
        }
        let fx = (px - self.origin[0]) / GRID_CELL;
        let fy = (py - self.origin[1]) / GRID_CELL;
        if fx < 0.0 || fy < 0.0 || fx >= self.dims[0] as f64 || fy >= self.dims[1] as f64 {
            return false;
        }
        let cell = fy as usize * self.dims[0] + fx as usize;
        self.buckets[cell].iter().any(|&i| self.params.obstacles[i as usize].contains(px, py))
    }

    #[inline]
    pub fn violated(&self, x: &State) -> bool {
        self.params.out_of_bounds(x.px, x.py) || self.in_obstacle(x.px, x.py)
    }

    /// Number of stored states that leave the workspace or enter an obstacle.
    pub fn count(&self, traj: &Trajectory) -> u32 {
        traj.states.iter().filter(|x| self.violated(x)).count() as u32
    }
}

/// Convenience wrapper building the index on the fly.
pub fn static_violations(traj: &Trajectory, params: &ConstraintParams) -> u32 {
    StaticConstraints::new(params.clone()).count(traj)
}

/// Predicted sample trajectories of one neighbor mode, stored as planar
/// positions with a per-timestep bounding box for early rejection.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModeSamples {
    /// Number of stored states per sample.
    pub len: usize,
    /// Sample-major positions: `positions[m * len + t]`.
    pub positions: Vec<[f64; 2]>,
    bbox: Vec<[f64; 4]>,
}

impl ModeSamples {
    pub fn from_trajectories(samples: &[Trajectory]) -> Result<Self> {
        let len = samples.first().ok_or(PlanError::Empty("neighbor sample set"))?.states.len();
        let mut positions = Vec::with_capacity(len * samples.len());
        for s in samples {
            if s.states.len() != len {
                return Err(PlanError::HorizonMismatch { expected: len, actual: s.states.len() });
            }
            positions.extend(s.states.iter().map(|x| [x.px, x.py]));
        }
        Ok(Self::from_positions(len, positions))
    }

    pub fn from_positions(len: usize, positions: Vec<[f64; 2]>) -> Self {
        let mut bbox = vec![[f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY]; len];
        for chunk in positions.chunks_exact(len) {
            for (b, p) in bbox.iter_mut().zip(chunk) {
                b[0] = b[0].min(p[0]);
                b[1] = b[1].min(p[1]);
                b[2] = b[2].max(p[0]);
                b[3] = b[3].max(p[1]);
            }
        }
        Self { len, positions, bbox }
    }

    pub fn num_samples(&self) -> usize {
        self.positions.len() / self.len.max(1)
    }

    fn check_len(&self, traj: &Trajectory) -> Result<()> {
        if traj.states.len() != self.len {
            return Err(PlanError::HorizonMismatch { expected: self.len, actual: traj.states.len() });
        }
        Ok(())
    }

    /// Timesteps where the trajectory comes within `l` of any sample's bounding box.
    fn near_steps(&self, traj: &Trajectory, l: f64) -> Vec<usize> {
        traj.states
            .iter()
            .zip(&self.bbox)
            .enumerate()
            .filter(|(_, (x, b))| x.px > b[0] - l && x.px < b[2] + l && x.py > b[1] - l && x.py < b[3] + l)
            .map(|(t, _)| t)
            .collect()
    }

    #[inline]
    fn sample_collides(&self, m: usize, traj: &Trajectory, steps: &[usize], l2: f64) -> bool {
        let base = m * self.len;
        steps.iter().any(|&t| {
            let p = self.positions[base + t];
            let x = &traj.states[t];
            let dx = x.px - p[0];
            let dy = x.py - p[1];
            dx * dx + dy * dy < l2
        })
    }

    /// Fraction of samples that come closer than `l` to `traj` at some shared
    /// timestep.
    pub fn collision_fraction(&self, traj: &Trajectory, l: f64) -> Result<f64> {
        self.check_len(traj)?;
        let steps = self.near_steps(traj, l);
        let n = self.num_samples();
        if steps.is_empty() || n == 0 {
            return Ok(0.0);
        }
        let hits = (0..n).filter(|&m| self.sample_collides(m, traj, &steps, l * l)).count();
        Ok(hits as f64 / n as f64)
    }

    /// `collision_fraction(traj, l) >= p`, with early termination.
    pub fn fraction_at_least(&self, traj: &Trajectory, l: f64, p: f64) -> Result<bool> {
        self.check_len(traj)?;
        let n = self.num_samples();
        if n == 0 {
            return Ok(false);
        }
        let steps = self.near_steps(traj, l);
        if steps.is_empty() {
            return Ok(0.0 >= p);
        }
        let nf = n as f64;
        let mut hits = 0usize;
        for m in 0..n {
            if self.sample_collides(m, traj, &steps, l * l) {
                hits += 1;
                if hits as f64 / nf >= p {
                    return Ok(true);
                }
            }
            if ((hits + n - m - 1) as f64 / nf) < p {
                return Ok(false);
            }
        }
        Ok(hits as f64 / nf >= p)
    }
}

/// Predicted sample sets for every mode of one neighbor.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NeighborPrediction {
    pub robot_id: usize,
    pub modes: Vec<ModeSamples>,
}

/// Estimated probability that `traj` collides with a neighbor following one of
/// its modes: the fraction of the mode's samples that come within `l` at any
/// timestep.
pub fn interrobot_collision_prob(traj: &Trajectory, neighbor_samples: &[Trajectory], l: f64) -> Result<f64> {
    ModeSamples::from_trajectories(neighbor_samples)?.collision_fraction(traj, l)
}

/// A trajectory is unsafe with respect to a neighbor only when its collision
/// probability reaches `p` in every one of the neighbor's modes.
pub fn chance_unsafe(traj: &Trajectory, neighbor: &NeighborPrediction, l: f64, p: f64) -> Result<bool> {
    if neighbor.modes.is_empty() {
        return Ok(false);
    }
    for mode in &neighbor.modes {
        if !mode.fraction_at_least(traj, l, p)? {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Number of neighbors for which `traj` is chance-unsafe.
pub fn unsafe_neighbor_count(traj: &Trajectory, neighbors: &[NeighborPrediction], l: f64, p: f64) -> Result<u32> {
    let mut n = 0;
    for nb in neighbors {
        if chance_unsafe(traj, nb, l, p)? {
            n += 1;
        }
    }
    Ok(n)
}
