//! Scenario generation: U-shaped traps built from overlapping circles, random
//! trap fields, single-trap trials and antipodal team swaps.

use std::collections::VecDeque;
use std::f64::consts::{FRAC_PI_8, PI, TAU};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::costs::{ConstraintParams, CostParams, Obstacle};
use crate::dynamics::State;
use crate::error::{PlanError, Result};
use crate::planner::Problem;
use crate::dynamics::DynamicsParams;

pub const TRAP_CIRCLE_RADIUS: f64 = 0.25;
pub const MIN_TRAP_SEPARATION: f64 = 7.0;
pub const DEFAULT_TIME_LIMIT: f64 = 10.0;
pub const DEFAULT_GOAL_RADIUS: f64 = 0.5;
pub const FIELD_TRAPS: usize = 12;
pub const FILTER_CELL: f64 = 0.1;
pub const FILTER_ROBOT_RADIUS: f64 = 0.2;

/// A U-shaped obstacle. `position` is the middle of the back wall and
/// `orientation` points from the back wall out through the open side.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrapSpec {
    pub width: f64,
    pub depth: f64,
    pub position: [f64; 2],
    pub orientation: f64,
    pub circle_radius: f64,
}

impl TrapSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.width >= 0.0 && self.depth >= 0.0) {
            return Err(PlanError::InvalidParam("trap width and depth must be non-negative".into()));
        }
        if !(self.circle_radius > 0.0) {
            return Err(PlanError::InvalidParam("trap circle radius must be positive".into()));
        }
        if !(self.position.iter().all(|p| p.is_finite()) && self.orientation.is_finite()) {
            return Err(PlanError::NonFinite("trap pose"));
        }
        Ok(())
    }

    /// Circle centers in the trap frame: back wall on x = 0, arms along +x.
    fn local_centers(&self) -> Vec<[f64; 2]> {
        let r = self.circle_radius;
        let half = self.width / 2.0;
        let n_back = (self.width / r).ceil() as usize;
        let mut out: Vec<[f64; 2]> = (0..=n_back)
            .map(|i| {
                let t = if n_back == 0 { 0.5 } else { i as f64 / n_back as f64 };
                [0.0, -half + t * self.width]
            })
            .collect();
        let n_arm = (self.depth / r).ceil() as usize;
        let arms: &[f64] = if self.width == 0.0 { &[0.0] } else { &[-half, half] };
        for &y in arms {
            for i in 1..=n_arm {
                out.push([self.depth * i as f64 / n_arm as f64, y]);
            }
        }
        out
    }

    /// Rotates a trap-frame point into the world frame.
    pub fn to_world(&self, p: [f64; 2]) -> [f64; 2] {
        let (s, c) = self.orientation.sin_cos();
        [self.position[0] + c * p[0] - s * p[1], self.position[1] + s * p[0] + c * p[1]]
    }

    pub fn to_local(&self, p: [f64; 2]) -> [f64; 2] {
        let (s, c) = self.orientation.sin_cos();
        let dx = p[0] - self.position[0];
        let dy = p[1] - self.position[1];
        [c * dx + s * dy, -s * dx + c * dy]
    }
}

/// Circles of `spec.circle_radius` laid along the U with center spacing of at
/// most one radius.
pub fn make_u_trap(spec: &TrapSpec) -> Vec<Obstacle> {
    spec.local_centers()
        .into_iter()
        .map(|p| {
            let w = spec.to_world(p);
            Obstacle::new(w[0], w[1], spec.circle_radius)
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RobotTask {
    pub start: State,
    pub goal: State,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub robots: Vec<RobotTask>,
    pub obstacles: Vec<Obstacle>,
    pub traps: Vec<TrapSpec>,
    pub workspace_min: [f64; 2],
    pub workspace_max: [f64; 2],
    pub time_limit: f64,
    pub goal_radius: f64,
    /// Trap circles dropped because their centers fell outside the workspace.
    pub clipped_circles: usize,
}

impl ScenarioSpec {
    pub fn num_robots(&self) -> usize {
        self.robots.len()
    }

    pub fn in_workspace(&self, px: f64, py: f64) -> bool {
        px >= self.workspace_min[0] && px <= self.workspace_max[0] && py >= self.workspace_min[1] && py <= self.workspace_max[1]
    }

    /// `base` with this scenario's workspace and obstacles.
    pub fn constraints(&self, base: &ConstraintParams) -> ConstraintParams {
        ConstraintParams {
            workspace_min: self.workspace_min,
            workspace_max: self.workspace_max,
            obstacles: self.obstacles.clone(),
            ..base.clone()
        }
    }

    pub fn problem(&self, robot: usize, dynamics: &DynamicsParams, cost: &CostParams, base: &ConstraintParams) -> Problem {
        let cost = CostParams { goal: self.robots[robot].goal, ..cost.clone() };
        Problem::new(dynamics.clone(), cost, self.constraints(base))
    }

    pub fn validate(&self) -> Result<()> {
        if self.robots.is_empty() {
            return Err(PlanError::Empty("scenario robots"));
        }
        if !(self.time_limit > 0.0 && self.goal_radius > 0.0) {
            return Err(PlanError::InvalidParam("time limit and goal radius must be positive".into()));
        }
        for t in &self.robots {
            if !(t.start.is_finite() && t.goal.is_finite()) {
                return Err(PlanError::NonFinite("scenario start or goal"));
            }
            if !self.in_workspace(t.start.px, t.start.py) || !self.in_workspace(t.goal.px, t.goal.py) {
                return Err(PlanError::InvalidParam("start and goal must lie inside the workspace".into()));
            }
        }
        Ok(())
    }
}

/// Adds a trap's circles, dropping those centered outside the workspace.
fn place_trap(scenario: &mut ScenarioSpec, trap: TrapSpec) {
    for o in make_u_trap(&trap) {
        if scenario.in_workspace(o.x, o.y) {
            scenario.obstacles.push(o);
        } else {
            scenario.clipped_circles += 1;
        }
    }
    scenario.traps.push(trap);
}

fn heading(from: [f64; 2], to: [f64; 2]) -> f64 {
    (to[1] - from[1]).atan2(to[0] - from[0])
}

fn empty_scenario(robots: Vec<RobotTask>, workspace_min: [f64; 2], workspace_max: [f64; 2]) -> ScenarioSpec {
    ScenarioSpec {
        robots,
        obstacles: Vec::new(),
        traps: Vec::new(),
        workspace_min,
        workspace_max,
        time_limit: DEFAULT_TIME_LIMIT,
        goal_radius: DEFAULT_GOAL_RADIUS,
        clipped_circles: 0,
    }
}

/// Single-trap trial with a given start and goal: the trap sits two thirds of
/// the way along the line with its opening toward the start. Initial speed
/// and steering are left as given.
pub fn trap_trial_between(width: f64, depth: f64, start: State, goal: [f64; 2]) -> ScenarioSpec {
    let defaults = ConstraintParams::default();
    let s = [start.px, start.py];
    let trap = TrapSpec {
        width,
        depth,
        position: [s[0] + 2.0 / 3.0 * (goal[0] - s[0]), s[1] + 2.0 / 3.0 * (goal[1] - s[1])],
        orientation: heading(goal, s),
        circle_radius: TRAP_CIRCLE_RADIUS,
    };
    let task = RobotTask { start, goal: State::at(goal[0], goal[1]) };
    let mut sc = empty_scenario(vec![task], defaults.workspace_min, defaults.workspace_max);
    place_trap(&mut sc, trap);
    sc
}

/// Random single-trap trial in the default workspace: start and goal at least
/// 7 m apart, start heading at the goal with random speed and steering.
pub fn sample_trap_trial<R: Rng + ?Sized>(width: f64, depth: f64, rng: &mut R) -> ScenarioSpec {
    let ws = ConstraintParams::default();
    let point = |r: &mut R| [r.random_range(ws.workspace_min[0]..=ws.workspace_max[0]), r.random_range(ws.workspace_min[1]..=ws.workspace_max[1])];
    let (s, g) = loop {
        let s = point(rng);
        let g = point(rng);
        if ((g[0] - s[0]).powi(2) + (g[1] - s[1]).powi(2)).sqrt() >= MIN_TRAP_SEPARATION {
            break (s, g);
        }
    };
    let v = rng.random_range(-0.5..=2.0);
    let delta = rng.random_range(-0.1..=0.1);
    trap_trial_between(width, depth, State::new(s[0], s[1], heading(s, g), v, delta), g)
}

/// Ranges for trap geometry in random fields.
pub const FIELD_WIDTH_RANGE: (f64, f64) = (0.25, 1.5);
pub const FIELD_DEPTH_RANGE: (f64, f64) = (0.0, 2.0);
/// Trap centers stay this far from the start and goal.
const FIELD_CLEARANCE: f64 = 1.0;

/// Twelve random traps between a start on the left edge and a goal on the
/// right edge, each opening toward the start within ±π/8.
pub fn sample_trap_field<R: Rng + ?Sized>(rng: &mut R) -> ScenarioSpec {
    let ws = ConstraintParams::default();
    let s = [rng.random_range(-1.0..=0.0), rng.random_range(-6.0..=6.0)];
    let g = [rng.random_range(10.0..=11.0), rng.random_range(-6.0..=6.0)];
    let task = RobotTask { start: State::new(s[0], s[1], heading(s, g), 0.0, 0.0), goal: State::at(g[0], g[1]) };
    let mut sc = empty_scenario(vec![task], ws.workspace_min, ws.workspace_max);
    let reach = |p: [f64; 2], q: [f64; 2]| ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)).sqrt();
    while sc.traps.len() < FIELD_TRAPS {
        let width = rng.random_range(FIELD_WIDTH_RANGE.0..=FIELD_WIDTH_RANGE.1);
        let depth = rng.random_range(FIELD_DEPTH_RANGE.0..=FIELD_DEPTH_RANGE.1);
        let position = [rng.random_range(1.0..=9.0), rng.random_range(-6.0..=6.0)];
        let jitter = rng.random_range(-FRAC_PI_8..=FRAC_PI_8);
        let trap = TrapSpec { width, depth, position, orientation: heading(position, s) + jitter, circle_radius: TRAP_CIRCLE_RADIUS };
        let clear = make_u_trap(&trap)
            .iter()
            .all(|o| reach([o.x, o.y], s) > FIELD_CLEARANCE + o.radius && reach([o.x, o.y], g) > FIELD_CLEARANCE + o.radius);
        if clear {
            place_trap(&mut sc, trap);
        }
    }
    sc
}

/// Whether every robot can reach its goal on an 8-connected grid of
/// `FILTER_CELL` cells with obstacles inflated by `robot_radius`.
pub fn feasibility_filter(spec: &ScenarioSpec, robot_radius: f64) -> bool {
    let nx = ((spec.workspace_max[0] - spec.workspace_min[0]) / FILTER_CELL).floor() as usize + 1;
    let ny = ((spec.workspace_max[1] - spec.workspace_min[1]) / FILTER_CELL).floor() as usize + 1;
    let center = |i: usize, j: usize| (spec.workspace_min[0] + i as f64 * FILTER_CELL, spec.workspace_min[1] + j as f64 * FILTER_CELL);
    let mut free = vec![true; nx * ny];
    for o in &spec.obstacles {
        let rr = o.radius + robot_radius;
        let lo_i = (((o.x - rr - spec.workspace_min[0]) / FILTER_CELL).floor().max(0.0)) as usize;
        let hi_i = ((((o.x + rr - spec.workspace_min[0]) / FILTER_CELL).ceil()) as usize).min(nx - 1);
        let lo_j = (((o.y - rr - spec.workspace_min[1]) / FILTER_CELL).floor().max(0.0)) as usize;
        let hi_j = ((((o.y + rr - spec.workspace_min[1]) / FILTER_CELL).ceil()) as usize).min(ny - 1);
        for i in lo_i..=hi_i {
            for j in lo_j..=hi_j {
                let (x, y) = center(i, j);
                if (x - o.x).powi(2) + (y - o.y).powi(2) < rr * rr {
                    free[i * ny + j] = false;
                }
            }
        }
    }
    let cell = |s: &State| {
        let i = ((s.px - spec.workspace_min[0]) / FILTER_CELL).round().clamp(0.0, (nx - 1) as f64) as usize;
        let j = ((s.py - spec.workspace_min[1]) / FILTER_CELL).round().clamp(0.0, (ny - 1) as f64) as usize;
        (i, j)
    };
    spec.robots.iter().all(|task| {
        let (si, sj) = cell(&task.start);
        let goal = cell(&task.goal);
        if !free[si * ny + sj] || !free[goal.0 * ny + goal.1] {
            return false;
        }
        let mut seen = vec![false; nx * ny];
        let mut queue = VecDeque::from([(si, sj)]);
        seen[si * ny + sj] = true;
        while let Some((i, j)) = queue.pop_front() {
            if (i, j) == goal {
                return true;
            }
            for di in -1i64..=1 {
                for dj in -1i64..=1 {
                    let (a, b) = (i as i64 + di, j as i64 + dj);
                    if (di, dj) == (0, 0) || a < 0 || b < 0 || a >= nx as i64 || b >= ny as i64 {
                        continue;
                    }
                    let idx = a as usize * ny + b as usize;
                    if free[idx] && !seen[idx] {
                        seen[idx] = true;
                        queue.push_back((a as usize, b as usize));
                    }
                }
            }
        }
        false
    })
}

pub const ANTIPODAL_MARGIN: f64 = 1.5;

/// `n` robots evenly spaced on a circle, each heading to the opposite point.
pub fn antipodal_scenario(n: usize, radius: f64) -> Result<ScenarioSpec> {
    if !(2..=8).contains(&n) {
        return Err(PlanError::InvalidParam(format!("antipodal team size {n} outside 2..=8")));
    }
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(PlanError::InvalidParam("antipodal radius must be positive".into()));
    }
    let robots = (0..n)
        .map(|i| {
            let a = TAU * i as f64 / n as f64;
            let (s, c) = a.sin_cos();
            let inward = a + PI;
            RobotTask {
                start: State::new(radius * c, radius * s, inward.sin().atan2(inward.cos()), 0.0, 0.0),
                goal: State::at(-radius * c, -radius * s),
            }
        })
        .collect();
    let e = radius + ANTIPODAL_MARGIN;
    Ok(empty_scenario(robots, [-e, -e], [e, e]))
}
