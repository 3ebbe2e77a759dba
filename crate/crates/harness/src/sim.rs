//! Closed-loop simulation of one trial.

use std::time::Instant;

use mmce_core::costs::StaticConstraints;
use mmce_core::dynamics::step;
use mmce_core::multirobot::{Team, TeamMember};
use mmce_core::rng;
use mmce_core::{PlannerConfig, ScenarioSpec, State};
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Success,
    Collision,
    Timeout,
    Error,
}

impl Outcome {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Success => "success",
            Self::Collision => "collision",
            Self::Timeout => "timeout",
            Self::Error => "error",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub outcome: Outcome,
    /// Simulated time when the last robot reached its goal.
    pub time_to_goal: Option<f64>,
    /// Simulated time when the trial ended.
    pub elapsed: f64,
    /// Smallest center distance between any two robots (teams only).
    pub min_distance: Option<f64>,
    pub cycles: usize,
    pub seed: u64,
    pub error: Option<String>,
}

/// Wall-clock planning statistics, kept apart from the deterministic result.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub cycles: usize,
    pub total_plan_ms: f64,
    pub max_plan_ms: f64,
}

impl Timing {
    pub fn mean_plan_ms(&self) -> f64 {
        if self.cycles == 0 {
            0.0
        } else {
            self.total_plan_ms / self.cycles as f64
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub cycle: usize,
    pub robot: usize,
    pub time: f64,
    pub state: [f64; 5],
    pub mode: Option<usize>,
    pub feasible_samples: Option<usize>,
    pub relaxed: Option<bool>,
    /// Pairwise violations left in the team's joint selection.
    pub joint_violations: u64,
}

#[derive(Clone, Debug)]
pub struct TrialRun {
    pub result: TrialResult,
    pub timing: Timing,
    pub trace: Vec<TraceRow>,
}

/// Everything a trial needs besides the scenario.
#[derive(Clone, Debug)]
pub struct TrialSettings {
    pub cfg: ExperimentConfig,
    pub planner: PlannerConfig,
    pub trace: bool,
}

impl TrialSettings {
    pub fn new(cfg: &ExperimentConfig, planner: PlannerConfig) -> Self {
        Self { planner, trace: cfg.traces, cfg: cfg.clone() }
    }
}

fn min_pair_distance(states: &[State]) -> Option<f64> {
    let mut best: Option<f64> = None;
    for i in 0..states.len() {
        for j in i + 1..states.len() {
            let d = states[i].distance(&states[j]);
            best = Some(best.map_or(d, |b| b.min(d)));
        }
    }
    best
}

struct Monitor<'a> {
    statics: &'a StaticConstraints,
    robot_distance: f64,
    goal_radius: f64,
    goals: Vec<State>,
    min_distance: Option<f64>,
}

impl Monitor<'_> {
    /// Updates the distance record and reports a collision.
    fn collided(&mut self, states: &[State]) -> bool {
        let d = min_pair_distance(states);
        if let Some(d) = d {
            self.min_distance = Some(self.min_distance.map_or(d, |m| m.min(d)));
        }
        states.iter().any(|x| self.statics.violated(x)) || d.is_some_and(|d| d < self.robot_distance)
    }

    fn at_goal(&self, i: usize, x: &State) -> bool {
        x.distance(&self.goals[i]) <= self.goal_radius
    }
}

/// Runs the receding-horizon loop on the noisy simulator until every robot
/// reaches its goal, something collides, or time runs out. Robots that reach
/// their goal stop and stay put as obstacles for the rest of the team.
pub fn run_trial(scenario: &ScenarioSpec, settings: &TrialSettings, seed: u64) -> TrialRun {
    let cfg = &settings.cfg;
    let planner = &settings.planner;
    let n = scenario.num_robots();
    let problems: Vec<_> = (0..n).map(|i| scenario.problem(i, &cfg.dynamics, &cfg.cost, &cfg.constraints)).collect();
    let statics = problems[0].constraints.clone();
    let mut monitor = Monitor {
        statics: &statics,
        robot_distance: cfg.robot_collision_distance(),
        goal_radius: scenario.goal_radius,
        goals: scenario.robots.iter().map(|r| r.goal).collect(),
        min_distance: None,
    };
    let mut states: Vec<State> = scenario.robots.iter().map(|r| r.start).collect();
    let mut timing = Timing::default();
    let mut trace = Vec::new();
    let dt = cfg.dynamics.dt;
    let team_size = (n > 1).then_some(());

    let finish = |outcome: Outcome, time: f64, cycles: usize, monitor: &Monitor, error: Option<String>| TrialResult {
        outcome,
        time_to_goal: (outcome == Outcome::Success).then_some(time),
        elapsed: time,
        min_distance: team_size.and(monitor.min_distance),
        cycles,
        seed,
        error,
    };

    if monitor.collided(&states) {
        return TrialRun { result: finish(Outcome::Collision, 0.0, 0, &monitor, None), timing, trace };
    }

    let members = problems
        .into_iter()
        .enumerate()
        .map(|(i, p)| TeamMember::new(i, states[i], planner.cold_start(), p))
        .collect();
    let mut team = Team::new(members, planner.clone(), cfg.coordination.clone(), cfg.simulation.prediction_samples);
    for i in 0..n {
        if monitor.at_goal(i, &states[i]) {
            team.deactivate(i);
        }
    }

    let max_steps = (scenario.time_limit / dt + 1e-9).floor() as usize;
    let mut steps_done = 0usize;
    let mut cycle = 0usize;
    loop {
        if team.members.iter().all(|m| !m.active) {
            return TrialRun { result: finish(Outcome::Success, steps_done as f64 * dt, cycle, &monitor, None), timing, trace };
        }
        if steps_done >= max_steps {
            return TrialRun { result: finish(Outcome::Timeout, steps_done as f64 * dt, cycle, &monitor, None), timing, trace };
        }
        let cycle_seed = rng::derive_path(seed, &[cycle as u64]);
        let started = Instant::now();
        let plan = match team.plan(cycle_seed) {
            Ok(p) => p,
            Err(e) => {
                let r = finish(Outcome::Error, steps_done as f64 * dt, cycle, &monitor, Some(e.to_string()));
                return TrialRun { result: r, timing, trace };
            }
        };
        let ms = started.elapsed().as_secs_f64() * 1e3;
        timing.cycles += 1;
        timing.total_plan_ms += ms;
        timing.max_plan_ms = timing.max_plan_ms.max(ms);

        if settings.trace {
            for (i, x) in states.iter().enumerate() {
                let p = plan.plans[i].as_ref();
                trace.push(TraceRow {
                    cycle,
                    robot: i,
                    time: steps_done as f64 * dt,
                    state: x.to_array(),
                    mode: p.map(|_| plan.selected_mode(i)),
                    feasible_samples: p.map(|p| p.optimized.report.feasible_count),
                    relaxed: p.map(|p| p.optimized.report.relaxed),
                    joint_violations: plan.selection.total_violations,
                });
            }
        }

        let mut noise = rng::stream(rng::derive_path(seed, &[cycle as u64, u64::MAX]));
        for k in 0..planner.executed_steps {
            for i in 0..n {
                let Some(p) = plan.plans[i].as_ref().filter(|_| team.members[i].active) else { continue };
                let u = p.controls_for(plan.selected_mode(i), planner)[k];
                let w = cfg.dynamics.sample_noise(&mut noise);
                match step(&states[i], &u, &cfg.dynamics, Some(&w)) {
                    Ok(x) => states[i] = x,
                    Err(e) => {
                        let r = finish(Outcome::Error, steps_done as f64 * dt, cycle + 1, &monitor, Some(e.to_string()));
                        return TrialRun { result: r, timing, trace };
                    }
                }
            }
            steps_done += 1;
            let t = steps_done as f64 * dt;
            if monitor.collided(&states) {
                return TrialRun { result: finish(Outcome::Collision, t, cycle + 1, &monitor, None), timing, trace };
            }
            for i in 0..n {
                if team.members[i].active && monitor.at_goal(i, &states[i]) {
                    states[i].v = 0.0;
                    team.deactivate(i);
                }
            }
            if team.members.iter().all(|m| !m.active) || steps_done >= max_steps {
                break;
            }
        }
        if let Err(e) = team.commit(&plan, &states, cycle_seed) {
            let r = finish(Outcome::Error, steps_done as f64 * dt, cycle + 1, &monitor, Some(e.to_string()));
            return TrialRun { result: r, timing, trace };
        }
        cycle += 1;
    }
}
