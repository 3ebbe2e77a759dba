//! Decoupled multi-robot planning.
//!
//! Each cycle runs in three phases separated by barriers:
//! 1. every robot optimizes its own multimodal policy, treating the sample
//!    predictions its teammates published last cycle as chance constraints;
//! 2. a centralized coordinator enumerates one mode per robot and picks the
//!    combination with the lowest cost plus `lambda` times the number of
//!    pairwise proximity violations between nominal trajectories;
//! 3. robots execute their selected modes, warm-start their next priors and
//!    publish state, policy and fresh predictions to the message board.
//!
//! On the first cycle the board is empty, so no inter-robot constraints apply
//! during optimization; coordination still separates the nominals.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::costs::{ModeSamples, NeighborPrediction};
use crate::dynamics::{rollout, Control, DynamicsParams, State, Trajectory};
use crate::error::{PlanError, Result};
use crate::planner::{plan_cycle, CyclePlan, PlannerConfig, Problem};
use crate::policy::MultimodalPolicy;
use crate::rng;

pub const MAX_JOINT_COMBINATIONS: u128 = 1_000_000;

/// What a robot publishes at the end of a cycle.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SharedRobotInfo {
    pub robot_id: usize,
    pub current_state: State,
    pub policy: MultimodalPolicy,
    pub prediction: NeighborPrediction,
}

impl SharedRobotInfo {
    pub fn publish(
        robot_id: usize,
        current_state: State,
        policy: MultimodalPolicy,
        samples_per_mode: usize,
        dynamics: &DynamicsParams,
        seed: u64,
    ) -> Result<Self> {
        let sets = predict_neighbor_samples(&current_state, &policy, samples_per_mode, dynamics, seed)?;
        let modes = sets.iter().map(|s| ModeSamples::from_trajectories(s)).collect::<Result<Vec<_>>>()?;
        Ok(Self { robot_id, current_state, policy, prediction: NeighborPrediction { robot_id, modes } })
    }

    /// Flat numeric encoding: `[robot_id, state(5), policy...]`. Predictions
    /// are regenerated by the receiver.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = vec![self.robot_id as f64];
        out.extend(self.current_state.to_array());
        out.extend(self.policy.to_flat());
        out
    }
}

/// For each mode, `samples_per_mode` control sequences drawn from that mode and
/// rolled out with process noise from `state`.
pub fn predict_neighbor_samples(
    state: &State,
    policy: &MultimodalPolicy,
    samples_per_mode: usize,
    dynamics: &DynamicsParams,
    seed: u64,
) -> Result<Vec<Vec<Trajectory>>> {
    if samples_per_mode == 0 {
        return Err(PlanError::InvalidParam("need at least one predicted sample per mode".into()));
    }
    policy
        .modes
        .iter()
        .enumerate()
        .map(|(k, mode)| {
            (0..samples_per_mode)
                .map(|m| {
                    let mut r = rng::stream(rng::derive_path(seed, &[k as u64, m as u64]));
                    let xi = mode.sample(&mut r, dynamics);
                    let controls: Vec<Control> = xi.chunks_exact(2).map(|c| Control::new(c[0], c[1])).collect();
                    rollout(state, &controls, dynamics, Some(&mut r))
                })
                .collect()
        })
        .collect()
}

/// One candidate mode of one robot for coordination.
#[derive(Clone, Debug, PartialEq)]
pub struct Candidate {
    pub trajectory: Trajectory,
    pub cost: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CoordinationParams {
    /// Shared separation distance used when per-robot radii are absent.
    pub collision_radius: f64,
    /// Optional per-robot radii; a pair conflicts below `r_i + r_j`.
    pub robot_radii: Option<Vec<f64>>,
    pub lambda: f64,
}

impl Default for CoordinationParams {
    fn default() -> Self {
        Self { collision_radius: 0.5, robot_radii: None, lambda: 1e6 }
    }
}

impl CoordinationParams {
    fn threshold(&self, i: usize, j: usize) -> f64 {
        match &self.robot_radii {
            Some(r) => r[i] + r[j],
            None => self.collision_radius,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JointSelection {
    pub mode_indices: Vec<usize>,
    pub total_cost: f64,
    pub total_violations: u64,
    pub objective: f64,
}

/// Timesteps at which two trajectories are closer than `threshold`.
pub fn pair_violations(a: &Trajectory, b: &Trajectory, threshold: f64) -> u64 {
    let t2 = threshold * threshold;
    a.states
        .iter()
        .zip(&b.states)
        .filter(|(x, y)| {
            let dx = x.px - y.px;
            let dy = x.py - y.py;
            dx * dx + dy * dy < t2
        })
        .count() as u64
}

/// Exhaustive joint mode selection minimizing
/// `sum of costs + lambda * pairwise violations`. Ties keep the
/// lexicographically first combination.
pub fn coordinate(candidates: &[Vec<Candidate>], params: &CoordinationParams) -> Result<JointSelection> {
    let n = candidates.len();
    if n == 0 || candidates.iter().any(|c| c.is_empty()) {
        return Err(PlanError::Empty("candidate modes"));
    }
    if let Some(r) = &params.robot_radii {
        if r.len() != n {
            return Err(PlanError::InvalidParam(format!("{} robot radii for {n} robots", r.len())));
        }
    }
    let combos = candidates.iter().try_fold(1u128, |acc, c| acc.checked_mul(c.len() as u128)).unwrap_or(u128::MAX);
    if combos > MAX_JOINT_COMBINATIONS {
        return Err(PlanError::EnumerationTooLarge { combos, limit: MAX_JOINT_COMBINATIONS });
    }

    // violations[i][j][a][b] for i < j
    let mut pair = vec![vec![Vec::<Vec<u64>>::new(); n]; n];
    for i in 0..n {
        for j in i + 1..n {
            let thr = params.threshold(i, j);
            pair[i][j] = candidates[i]
                .iter()
                .map(|a| candidates[j].iter().map(|b| pair_violations(&a.trajectory, &b.trajectory, thr)).collect())
                .collect();
        }
    }

    let mut idx = vec![0usize; n];
    let mut best: Option<JointSelection> = None;
    loop {
        let total_cost: f64 = idx.iter().enumerate().map(|(i, &k)| candidates[i][k].cost).sum();
        let mut total_violations = 0u64;
        for i in 0..n {
            for j in i + 1..n {
                total_violations += pair[i][j][idx[i]][idx[j]];
            }
        }
        let objective = total_cost + params.lambda * total_violations as f64;
        if best.as_ref().is_none_or(|b| objective < b.objective) {
            best = Some(JointSelection { mode_indices: idx.clone(), total_cost, total_violations, objective });
        }
        // Odometer increment, last robot fastest.
        let mut pos = n;
        loop {
            if pos == 0 {
                return Ok(best.expect("at least one combination"));
            }
            pos -= 1;
            idx[pos] += 1;
            if idx[pos] < candidates[pos].len() {
                break;
            }
            idx[pos] = 0;
        }
    }
}

pub struct TeamMember {
    pub id: usize,
    pub state: State,
    pub prior: MultimodalPolicy,
    pub problem: Problem,
    /// Inactive robots (parked at their goal) do not plan; teammates see them
    /// as stationary.
    pub active: bool,
}

impl TeamMember {
    pub fn new(id: usize, state: State, prior: MultimodalPolicy, problem: Problem) -> Self {
        Self { id, state, prior, problem, active: true }
    }
}

fn stationary(state: &State, steps: usize) -> Trajectory {
    let parked = State { v: 0.0, ..*state };
    Trajectory::new(vec![parked; steps + 1], vec![Control::ZERO; steps])
}

/// Robots sharing a synchronous cycle clock and an in-process message board.
pub struct Team {
    pub members: Vec<TeamMember>,
    pub cfg: PlannerConfig,
    pub coordination: CoordinationParams,
    /// Predicted samples published per mode.
    pub samples_per_mode: usize,
    board: Vec<Option<SharedRobotInfo>>,
}

#[derive(Clone, Debug)]
pub struct TeamPlan {
    /// `None` for inactive robots.
    pub plans: Vec<Option<CyclePlan>>,
    pub selection: JointSelection,
}

impl TeamPlan {
    pub fn selected_mode(&self, robot: usize) -> usize {
        self.selection.mode_indices[robot]
    }
}

impl Team {
    pub fn new(members: Vec<TeamMember>, cfg: PlannerConfig, coordination: CoordinationParams, samples_per_mode: usize) -> Self {
        let board = vec![None; members.len()];
        Self { members, cfg, coordination, samples_per_mode, board }
    }

    pub fn board(&self) -> &[Option<SharedRobotInfo>] {
        &self.board
    }

    fn neighbors_of(&self, i: usize) -> Vec<NeighborPrediction> {
        self.board
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != i)
            .filter_map(|(_, info)| info.as_ref().map(|s| s.prediction.clone()))
            .collect()
    }

    /// Phases 1 and 2: per-robot optimization against last cycle's board,
    /// then joint mode selection over the fresh nominals.
    pub fn plan(&self, seed: u64) -> Result<TeamPlan> {
        let plans = (0..self.members.len())
            .into_par_iter()
            .map(|i| {
                let m = &self.members[i];
                if !m.active {
                    return Ok(None);
                }
                let neighbors = self.neighbors_of(i);
                plan_cycle(&m.state, &m.prior, &m.problem, &neighbors, &self.cfg, rng::derive(seed, i as u64)).map(Some)
            })
            .collect::<Result<Vec<_>>>()?;
        let selection = match plans.as_slice() {
            [Some(only)] => {
                let k = only.executed_mode;
                let cost = only.nominals()[k].cost();
                JointSelection { mode_indices: vec![k], total_cost: cost, total_violations: 0, objective: cost }
            }
            _ => {
                let candidates: Vec<Vec<Candidate>> = plans
                    .iter()
                    .zip(&self.members)
                    .map(|(plan, m)| match plan {
                        Some(plan) => plan
                            .nominals()
                            .iter()
                            .map(|n| Candidate {
                                cost: n.cost() + self.cfg.violation_penalty * m.problem.constraints.count(&n.trajectory) as f64,
                                trajectory: n.trajectory.clone(),
                            })
                            .collect(),
                        None => vec![Candidate { trajectory: stationary(&m.state, self.cfg.steps()), cost: 0.0 }],
                    })
                    .collect();
                coordinate(&candidates, &self.coordination)?
            }
        };
        Ok(TeamPlan { plans, selection })
    }

    /// Phase 3: adopt post-execution states, warm-start priors around the
    /// executed modes and publish to the board.
    pub fn commit(&mut self, plan: &TeamPlan, new_states: &[State], seed: u64) -> Result<()> {
        if new_states.len() != self.members.len() {
            return Err(PlanError::InvalidParam("one post-execution state per robot required".into()));
        }
        for (i, m) in self.members.iter_mut().enumerate() {
            if let (true, Some(p)) = (m.active, &plan.plans[i]) {
                m.prior = p.next_prior(plan.selected_mode(i), &new_states[i], &m.problem, &self.cfg)?;
            }
            m.state = new_states[i];
        }
        if self.members.len() > 1 {
            for (i, m) in self.members.iter().enumerate() {
                let info = if m.active {
                    SharedRobotInfo::publish(
                        m.id,
                        m.state,
                        m.prior.clone(),
                        self.samples_per_mode,
                        &m.problem.dynamics,
                        rng::derive_path(seed, &[i as u64, 0x5eed]),
                    )?
                } else {
                    let parked = stationary(&m.state, self.cfg.steps());
                    SharedRobotInfo {
                        robot_id: m.id,
                        current_state: m.state,
                        policy: m.prior.clone(),
                        prediction: NeighborPrediction { robot_id: m.id, modes: vec![ModeSamples::from_trajectories(&[parked])?] },
                    }
                };
                self.board[i] = Some(info);
            }
        }
        Ok(())
    }

    /// Parks robot `i`: it stops planning and stays where it is.
    pub fn deactivate(&mut self, i: usize) {
        self.members[i].active = false;
    }

    /// Full cycle. `execute(robot, controls)` applies the selected controls to
    /// the real system and returns the robot's new state.
    pub fn run_cycle<F>(&mut self, seed: u64, mut execute: F) -> Result<TeamPlan>
    where
        F: FnMut(usize, &[Control]) -> Result<State>,
    {
        let plan = self.plan(seed)?;
        let mut states = Vec::with_capacity(self.members.len());
        for i in 0..self.members.len() {
            let next = match &plan.plans[i] {
                Some(p) => execute(i, p.controls_for(plan.selected_mode(i), &self.cfg))?,
                None => self.members[i].state,
            };
            states.push(next);
        }
        self.commit(&plan, &states, seed)?;
        Ok(plan)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::rollout_nominal;
    use crate::policy::PolicyMode;
    use rand::Rng;

    fn traj_at(points: &[(f64, f64)]) -> Trajectory {
        Trajectory::new(points.iter().map(|&(x, y)| State::at(x, y)).collect(), vec![Control::ZERO; points.len() - 1])
    }

    fn cand(points: &[(f64, f64)], cost: f64) -> Candidate {
        Candidate { trajectory: traj_at(points), cost }
    }

    #[test]
    fn min_sum_when_all_combinations_are_free() {
        let a = vec![cand(&[(0.0, 0.0), (1.0, 0.0)], 1.0), cand(&[(0.0, 1.0), (1.0, 1.0)], 2.0)];
        let b = vec![cand(&[(0.0, 5.0), (1.0, 5.0)], 1.0), cand(&[(0.0, 6.0), (1.0, 6.0)], 3.0)];
        let sel = coordinate(&[a, b], &CoordinationParams::default()).unwrap();
        assert_eq!(sel.mode_indices, vec![0, 0]);
        assert_eq!(sel.total_cost, 2.0);
        assert_eq!(sel.total_violations, 0);
    }

    #[test]
    fn penalty_prefers_costlier_free_pair() {
        let a = vec![cand(&[(0.0, 0.0), (1.0, 0.0)], 1.0), cand(&[(0.0, 2.0), (1.0, 2.0)], 10.0)];
        let b = vec![cand(&[(3.0, 0.0), (1.1, 0.0)], 1.0)];
        let sel = coordinate(&[a, b], &CoordinationParams::default()).unwrap();
        assert_eq!(sel.mode_indices, vec![1, 0]);
        assert_eq!(sel.total_violations, 0);
    }

    #[test]
    fn per_robot_radii_replace_shared_distance() {
        let a = vec![cand(&[(0.0, 0.0)], 1.0)];
        let b = vec![cand(&[(0.8, 0.0)], 1.0)];
        let shared = coordinate(&[a.clone(), b.clone()], &CoordinationParams::default()).unwrap();
        assert_eq!(shared.total_violations, 0);
        let radii = CoordinationParams { robot_radii: Some(vec![0.5, 0.5]), ..Default::default() };
        assert_eq!(coordinate(&[a, b], &radii).unwrap().total_violations, 1);
    }

    #[test]
    fn enumeration_guard() {
        let many: Vec<Vec<Candidate>> = (0..7).map(|_| (0..8).map(|_| cand(&[(0.0, 0.0)], 0.0)).collect()).collect();
        assert!(matches!(
            coordinate(&many, &CoordinationParams::default()),
            Err(PlanError::EnumerationTooLarge { .. })
        ));
    }

    /// Independent recursive enumerator over all joint selections.
    fn oracle(cands: &[Vec<Candidate>], l: f64, lambda: f64) -> f64 {
        fn rec(cands: &[Vec<Candidate>], chosen: &mut Vec<usize>, l: f64, lambda: f64, best: &mut f64) {
            if chosen.len() == cands.len() {
                let mut cost = 0.0;
                let mut viol = 0.0;
                for (i, &a) in chosen.iter().enumerate() {
                    cost += cands[i][a].cost;
                    for (j, &b) in chosen.iter().enumerate().skip(i + 1) {
                        let ta = &cands[i][a].trajectory.states;
                        let tb = &cands[j][b].trajectory.states;
                        for t in 0..ta.len().min(tb.len()) {
                            if ta[t].distance(&tb[t]) < l {
                                viol += 1.0;
                            }
                        }
                    }
                }
                *best = best.min(cost + lambda * viol);
                return;
            }
            for k in 0..cands[chosen.len()].len() {
                chosen.push(k);
                rec(cands, chosen, l, lambda, best);
                chosen.pop();
            }
        }
        let mut best = f64::INFINITY;
        rec(cands, &mut Vec::new(), l, lambda, &mut best);
        best
    }

    fn random_fixture(r: &mut impl Rng) -> Vec<Vec<Candidate>> {
        let n = r.random_range(1..=4);
        (0..n)
            .map(|_| {
                (0..r.random_range(1..=3))
                    .map(|_| {
                        let pts: Vec<(f64, f64)> = (0..6).map(|_| (r.random_range(-1.5..1.5), r.random_range(-1.5..1.5))).collect();
                        cand(&pts, r.random_range(0.0..100.0))
                    })
                    .collect()
            })
            .collect()
    }

    #[test]
    fn matches_recursive_oracle() {
        let mut r = rng::stream(77);
        for _ in 0..200 {
            let fx = random_fixture(&mut r);
            let params = CoordinationParams { lambda: 1e6, ..Default::default() };
            let sel = coordinate(&fx, &params).unwrap();
            assert!((sel.objective - oracle(&fx, 0.5, 1e6)).abs() <= 1e-9 * sel.objective.abs().max(1.0));
        }
    }

    #[test]
    fn zero_violation_selection_when_available() {
        // Costs are bounded by 100 per robot, far below lambda.
        let mut r = rng::stream(78);
        for _ in 0..100 {
            let fx = random_fixture(&mut r);
            let sel = coordinate(&fx, &CoordinationParams::default()).unwrap();
            let free_exists = oracle(&fx, 0.5, 1e6) < 1e6;
            assert_eq!(sel.total_violations == 0, free_exists);
        }
    }

    #[test]
    fn permuting_robots_permutes_selection() {
        let mut r = rng::stream(79);
        for _ in 0..50 {
            let fx = random_fixture(&mut r);
            let sel = coordinate(&fx, &CoordinationParams::default()).unwrap();
            let rev: Vec<Vec<Candidate>> = fx.iter().rev().cloned().collect();
            let sel_rev = coordinate(&rev, &CoordinationParams::default()).unwrap();
            assert!((sel.objective - sel_rev.objective).abs() < 1e-9 * sel.objective.abs().max(1.0));
            // With continuous random costs the optimum is unique.
            let mut back = sel_rev.mode_indices.clone();
            back.reverse();
            assert_eq!(back, sel.mode_indices);
        }
    }

    #[test]
    fn zero_variance_predictions_follow_the_nominal() {
        let dynamics = DynamicsParams::default().noise_free();
        let controls: Vec<Control> = (0..11).map(|t| Control::new(0.5, if t < 5 { 0.3 } else { -0.3 })).collect();
        let mode = PolicyMode::from_controls(&controls, [0.0, 0.0], 1.0);
        let policy = MultimodalPolicy { modes: vec![mode], steps: 11 };
        let x0 = State::new(1.0, 2.0, 0.3, 0.5, 0.0);
        let sets = predict_neighbor_samples(&x0, &policy, 8, &dynamics, 3).unwrap();
        let nominal = rollout_nominal(&x0, &controls, &dynamics).unwrap();
        assert!(sets[0].iter().all(|t| t.states == nominal.states));
        let again = predict_neighbor_samples(&x0, &policy, 8, &DynamicsParams::default(), 3).unwrap();
        assert_eq!(again, predict_neighbor_samples(&x0, &policy, 8, &DynamicsParams::default(), 3).unwrap());
    }

    #[test]
    fn predicted_terminal_mean_matches_nominal() {
        let dynamics = DynamicsParams::default();
        let controls = vec![Control::new(0.3, 0.0); 11];
        let mode = PolicyMode::from_controls(&controls, [1e-4, 1e-4], 1.0);
        let policy = MultimodalPolicy { modes: vec![mode], steps: 11 };
        let x0 = State::new(0.0, 0.0, 0.0, 1.0, 0.0);
        let sets = predict_neighbor_samples(&x0, &policy, 10_000, &dynamics, 21).unwrap();
        let nominal = rollout_nominal(&x0, &controls, &dynamics.noise_free()).unwrap();
        for (c, target) in [(0usize, nominal.terminal().px), (1, nominal.terminal().py)] {
            let xs: Vec<f64> = sets[0].iter().map(|t| if c == 0 { t.terminal().px } else { t.terminal().py }).collect();
            let mean = xs.iter().sum::<f64>() / xs.len() as f64;
            let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / xs.len() as f64;
            let se = (var / xs.len() as f64).sqrt();
            assert!((mean - target).abs() <= 3.0 * se, "component {c}: {mean} vs {target} (se {se})");
        }
    }
}
