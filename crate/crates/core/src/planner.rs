//! Multimodal cross-entropy optimization and the receding-horizon cycle.
//!
//! One optimization round draws `M` control sequences stratified across the
//! policy's modes, rolls each out through the stochastic model, scores it, and
//! keeps only constraint-free rollouts. The feasible set is clustered by state
//! sequence and every cluster refits its own Gaussian from its top-`rho`
//! elites, so a cheap solution class cannot absorb a costlier one. When no
//! rollout is feasible, each mode instead refits from its own samples ranked
//! by cost plus a violation-count penalty.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::clustering::{featurize, kmeans};
use crate::costs::{trajectory_cost, unsafe_neighbor_count, ConstraintParams, CostParams, NeighborPrediction, StaticConstraints};
use crate::dynamics::{rollout, rollout_nominal, Control, DynamicsParams, State, Trajectory, CONTROL_DIM};
use crate::error::{PlanError, Result};
use crate::policy::{allocate, mle_update, mode_of_sample, nominal_controls, shift_primary, MultimodalPolicy, PolicyMode};
use crate::rng;
use crate::tvlqr::{warm_start_secondary, LqrWeights};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlannerConfig {
    pub num_samples: usize,
    pub elite_fraction: f64,
    pub num_modes: usize,
    pub ce_iterations: usize,
    pub executed_steps: usize,
    /// Horizon `N_T`; sequences hold `N_T + 1` controls.
    pub horizon: usize,
    pub var_floor: f64,
    pub initial_variance: [f64; CONTROL_DIM],
    pub violation_penalty: f64,
    pub tvlqr_warm_start: bool,
    pub kmeans_max_iters: usize,
    pub lqr: LqrWeights,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        Self {
            num_samples: 1024,
            elite_fraction: 0.1,
            num_modes: 2,
            ce_iterations: 1,
            executed_steps: 4,
            horizon: 40,
            var_floor: 1e-4,
            initial_variance: [0.25, 0.25],
            violation_penalty: 1000.0,
            tvlqr_warm_start: true,
            kmeans_max_iters: crate::clustering::DEFAULT_MAX_ITERS,
            lqr: LqrWeights::default(),
        }
    }
}

impl PlannerConfig {
    pub fn steps(&self) -> usize {
        self.horizon + 1
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(PlanError::InvalidParam(m.to_string()));
        if self.num_samples < 1 {
            return bad("num_samples must be at least 1");
        }
        if self.num_modes < 1 {
            return bad("num_modes must be at least 1");
        }
        if self.num_samples < self.num_modes {
            return bad("num_samples must be at least num_modes");
        }
        if !(self.elite_fraction > 0.0 && self.elite_fraction < 1.0) {
            return bad("elite_fraction must lie in (0, 1)");
        }
        if self.ce_iterations < 1 {
            return bad("ce_iterations must be at least 1");
        }
        if self.horizon < 1 {
            return bad("horizon must be at least 1");
        }
        if self.executed_steps < 1 || self.executed_steps > self.steps() {
            return bad("executed_steps must lie in [1, horizon + 1]");
        }
        if !(self.var_floor > 0.0) {
            return bad("var_floor must be positive");
        }
        if self.initial_variance.iter().any(|&v| !(v >= self.var_floor)) {
            return bad("initial_variance must be at least var_floor");
        }
        if !(self.violation_penalty >= 0.0) {
            return bad("violation_penalty must be non-negative");
        }
        self.lqr.validate()
    }

    pub fn cold_start(&self) -> MultimodalPolicy {
        MultimodalPolicy::cold_start(self.num_modes, self.steps(), self.initial_variance)
    }
}

/// Everything the planner needs to know about one robot's task.
#[derive(Clone, Debug)]
pub struct Problem {
    pub dynamics: DynamicsParams,
    pub cost: CostParams,
    pub constraints: StaticConstraints,
}

impl Problem {
    pub fn new(dynamics: DynamicsParams, cost: CostParams, constraints: ConstraintParams) -> Self {
        Self { dynamics, cost, constraints: StaticConstraints::new(constraints) }
    }

    pub fn collision_radius(&self) -> f64 {
        self.constraints.params().collision_radius
    }

    pub fn chance_level(&self) -> f64 {
        self.constraints.params().chance_level
    }

    /// Cost and violation count (static timesteps plus chance-unsafe
    /// neighbors), cached on the trajectory.
    pub fn evaluate(&self, traj: &mut Trajectory, neighbors: &[NeighborPrediction]) -> Result<()> {
        let cost = trajectory_cost(traj, &self.cost);
        let mut violations = self.constraints.count(traj);
        if !neighbors.is_empty() {
            violations += unsafe_neighbor_count(traj, neighbors, self.collision_radius(), self.chance_level())?;
        }
        traj.cost = Some(cost);
        traj.violations = Some(violations);
        Ok(())
    }
}

/// Indices of the `ceil(rho * n)` lowest costs (at least one), ties broken by
/// lower index.
pub fn select_elites(costs: &[f64], rho: f64) -> Vec<usize> {
    if costs.is_empty() {
        return Vec::new();
    }
    let n = costs.len();
    let count = ((rho * n as f64).ceil() as usize).clamp(1, n);
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| costs[a].total_cmp(&costs[b]).then(a.cmp(&b)));
    idx.truncate(count);
    idx
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModeProvenance {
    /// Refit from a cluster of feasible rollouts.
    Clustered,
    /// Refit from its own penalized samples because nothing was feasible.
    Relaxed,
    /// Copy of the best mode with reset variance, filling a missing slot.
    Spawned,
}

/// Noise-free rollout of a mode's nominal controls with cached cost and
/// violations.
#[derive(Clone, Debug, PartialEq)]
pub struct ModeNominal {
    pub trajectory: Trajectory,
    pub penalized_cost: f64,
    pub provenance: ModeProvenance,
}

impl ModeNominal {
    pub fn cost(&self) -> f64 {
        self.trajectory.cost.unwrap_or(f64::INFINITY)
    }

    pub fn violations(&self) -> u32 {
        self.trajectory.violations.unwrap_or(u32::MAX)
    }

    pub fn is_feasible(&self) -> bool {
        self.trajectory.is_feasible()
    }

    pub fn controls(&self) -> &[Control] {
        &self.trajectory.controls
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationStats {
    /// Lowest penalized sample cost.
    pub best_cost: f64,
    /// Mean penalized cost over all elites used in the update.
    pub elite_mean_cost: f64,
    pub feasible_count: usize,
    pub clusters: usize,
    pub relaxed: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModeSummary {
    pub provenance: ModeProvenance,
    pub nominal_cost: f64,
    pub nominal_violations: u32,
    pub terminal: [f64; 2],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimizationReport {
    pub iterations: Vec<IterationStats>,
    pub modes: Vec<ModeSummary>,
    /// Feasible sample count of the final round.
    pub feasible_count: usize,
    /// Whether the final round took the penalty branch.
    pub relaxed: bool,
    /// Sample indices of the elites behind each mode of the final round, in
    /// the returned mode order. Spawned modes have none.
    pub elite_indices: Vec<Vec<usize>>,
}

#[derive(Clone, Debug)]
pub struct Optimized {
    pub policy: MultimodalPolicy,
    /// One nominal per policy mode, same order.
    pub nominals: Vec<ModeNominal>,
    pub report: OptimizationReport,
}

struct Sample {
    xi: Vec<f64>,
    mode: usize,
    traj: Trajectory,
    penalized: f64,
}

fn to_controls(xi: &[f64]) -> Vec<Control> {
    xi.chunks_exact(CONTROL_DIM).map(|c| Control::new(c[0], c[1])).collect()
}

fn draw_samples(
    policy: &MultimodalPolicy,
    x0: &State,
    problem: &Problem,
    neighbors: &[NeighborPrediction],
    cfg: &PlannerConfig,
    seed: u64,
) -> Result<Vec<Sample>> {
    let counts = allocate(cfg.num_samples, policy.num_modes());
    (0..cfg.num_samples)
        .into_par_iter()
        .map(|j| {
            let mut r = rng::stream(rng::derive(seed, j as u64));
            let mode = mode_of_sample(j, &counts);
            let xi = policy.modes[mode].sample(&mut r, &problem.dynamics);
            let mut traj = rollout(x0, &to_controls(&xi), &problem.dynamics, Some(&mut r))?;
            problem.evaluate(&mut traj, neighbors)?;
            let penalized = traj.cost.unwrap_or(f64::INFINITY) + cfg.violation_penalty * traj.violations.unwrap_or(0) as f64;
            Ok(Sample { xi, mode, traj, penalized })
        })
        .collect()
}

/// Nominal rollout of a mode from `x0`.
pub fn mode_nominal(
    mode: &PolicyMode,
    x0: &State,
    problem: &Problem,
    neighbors: &[NeighborPrediction],
    cfg: &PlannerConfig,
    provenance: ModeProvenance,
) -> Result<ModeNominal> {
    let mut trajectory = rollout_nominal(x0, &nominal_controls(mode, &problem.dynamics), &problem.dynamics)?;
    problem.evaluate(&mut trajectory, neighbors)?;
    let penalized_cost = trajectory.cost.unwrap_or(f64::INFINITY) + cfg.violation_penalty * trajectory.violations.unwrap_or(0) as f64;
    Ok(ModeNominal { trajectory, penalized_cost, provenance })
}

/// Refits one mode from the samples in `group` using their penalized costs.
fn refit(samples: &[Sample], group: &[usize], cfg: &PlannerConfig) -> Result<(PolicyMode, Vec<usize>, f64)> {
    let costs: Vec<f64> = group.iter().map(|&i| samples[i].penalized).collect();
    let elites: Vec<usize> = select_elites(&costs, cfg.elite_fraction).into_iter().map(|e| group[e]).collect();
    let seqs: Vec<&[f64]> = elites.iter().map(|&i| samples[i].xi.as_slice()).collect();
    let (mean, var) = mle_update(&seqs, cfg.var_floor)?;
    let elite_cost: f64 = elites.iter().map(|&i| samples[i].penalized).sum();
    Ok((PolicyMode { mean, var, weight: 0.0 }, elites, elite_cost))
}

/// Multimodal CE optimization of `prior` from state `x0`.
pub fn optimize(
    prior: &MultimodalPolicy,
    x0: &State,
    problem: &Problem,
    neighbors: &[NeighborPrediction],
    cfg: &PlannerConfig,
    seed: u64,
) -> Result<Optimized> {
    cfg.validate()?;
    if !x0.is_finite() {
        return Err(PlanError::NonFinite("initial state"));
    }
    if prior.steps != cfg.steps() {
        return Err(PlanError::InvalidParam(format!(
            "prior has {} control steps, config expects {}",
            prior.steps,
            cfg.steps()
        )));
    }
    if prior.num_modes() == 0 || prior.num_modes() > cfg.num_modes {
        return Err(PlanError::InvalidParam(format!("prior has {} modes, limit is {}", prior.num_modes(), cfg.num_modes)));
    }

    let mut policy = prior.clone();
    let mut iterations = Vec::with_capacity(cfg.ce_iterations);
    let mut last: Option<(Vec<ModeNominal>, Vec<Vec<usize>>)> = None;

    for iter in 0..cfg.ce_iterations {
        let round_seed = rng::derive_path(seed, &[iter as u64]);
        let samples = draw_samples(&policy, x0, problem, neighbors, cfg, round_seed)?;
        let feasible: Vec<usize> = (0..samples.len()).filter(|&i| samples[i].traj.is_feasible()).collect();
        let relaxed = feasible.is_empty();

        let groups: Vec<Vec<usize>> = if relaxed {
            (0..policy.num_modes())
                .map(|k| (0..samples.len()).filter(|&i| samples[i].mode == k).collect::<Vec<_>>())
                .filter(|g| !g.is_empty())
                .collect()
        } else {
            let features: Vec<Vec<f64>> = feasible.iter().map(|&i| featurize(&samples[i].traj)).collect();
            let mut r = rng::stream(rng::derive(round_seed, u64::MAX));
            let clusters = kmeans(&features, cfg.num_modes, &mut r, cfg.kmeans_max_iters)?;
            clusters
                .members()
                .into_iter()
                .map(|m| m.into_iter().map(|i| feasible[i]).collect::<Vec<_>>())
                .filter(|g| !g.is_empty())
                .collect()
        };

        let provenance = if relaxed { ModeProvenance::Relaxed } else { ModeProvenance::Clustered };
        let mut refit_modes = Vec::with_capacity(groups.len());
        let mut elite_total = 0.0;
        let mut elite_count = 0usize;
        for g in &groups {
            let (mode, elites, cost) = refit(&samples, g, cfg)?;
            elite_total += cost;
            elite_count += elites.len();
            let nominal = mode_nominal(&mode, x0, problem, neighbors, cfg, provenance)?;
            refit_modes.push((mode, nominal, elites));
        }
        refit_modes.sort_by(|a, b| a.1.penalized_cost.total_cmp(&b.1.penalized_cost));

        // Keep K modes: missing slots restart from the best mean.
        while refit_modes.len() < cfg.num_modes {
            let best = refit_modes[0].0.clone().with_variance(cfg.initial_variance);
            let mut nominal = refit_modes[0].1.clone();
            nominal.provenance = ModeProvenance::Spawned;
            refit_modes.push((best, nominal, Vec::new()));
        }

        iterations.push(IterationStats {
            best_cost: samples.iter().map(|s| s.penalized).fold(f64::INFINITY, f64::min),
            elite_mean_cost: elite_total / elite_count.max(1) as f64,
            feasible_count: feasible.len(),
            clusters: groups.len(),
            relaxed,
        });

        let mut modes = Vec::with_capacity(refit_modes.len());
        let mut nominals = Vec::with_capacity(refit_modes.len());
        let mut elites = Vec::with_capacity(refit_modes.len());
        for (m, n, e) in refit_modes {
            modes.push(m);
            nominals.push(n);
            elites.push(e);
        }
        policy = MultimodalPolicy::from_modes(modes)?;
        last = Some((nominals, elites));
    }

    let (nominals, elite_indices) = last.expect("at least one CE iteration");
    let final_round = iterations.last().expect("at least one CE iteration");
    let report = OptimizationReport {
        feasible_count: final_round.feasible_count,
        relaxed: final_round.relaxed,
        modes: nominals
            .iter()
            .map(|n| ModeSummary {
                provenance: n.provenance,
                nominal_cost: n.cost(),
                nominal_violations: n.violations(),
                terminal: [n.trajectory.terminal().px, n.trajectory.terminal().py],
            })
            .collect(),
        iterations,
        elite_indices,
    };
    Ok(Optimized { policy, nominals, report })
}

/// Mode to execute: the cheapest feasible nominal, or failing that the one
/// with fewest violations, then lowest cost.
pub fn select_executed_mode(nominals: &[ModeNominal]) -> usize {
    let feasible = nominals
        .iter()
        .enumerate()
        .filter(|(_, n)| n.is_feasible())
        .min_by(|a, b| a.1.penalized_cost.total_cmp(&b.1.penalized_cost).then(a.0.cmp(&b.0)));
    if let Some((i, _)) = feasible {
        return i;
    }
    nominals
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.violations().cmp(&b.1.violations()).then(a.1.cost().total_cmp(&b.1.cost())).then(a.0.cmp(&b.0)))
        .map(|(i, _)| i)
        .unwrap_or(0)
}

/// Result of one receding-horizon planning cycle.
#[derive(Clone, Debug)]
pub struct CyclePlan {
    pub optimized: Optimized,
    pub executed_mode: usize,
}

impl CyclePlan {
    pub fn nominals(&self) -> &[ModeNominal] {
        &self.optimized.nominals
    }

    pub fn policy(&self) -> &MultimodalPolicy {
        &self.optimized.policy
    }

    /// First `executed_steps` controls of `mode`'s nominal.
    pub fn controls_for(&self, mode: usize, cfg: &PlannerConfig) -> &[Control] {
        let c = self.optimized.nominals[mode].controls();
        &c[..cfg.executed_steps.min(c.len())]
    }

    pub fn executed_controls(&self, cfg: &PlannerConfig) -> &[Control] {
        self.controls_for(self.executed_mode, cfg)
    }

    /// Prior for the next cycle once `executed_mode` has run for
    /// `cfg.executed_steps` steps and the robot sits at `x_now`.
    ///
    /// The executed mode is shifted forward and becomes mode 0. Every other
    /// mode's nominal is shifted the same way and then tracked from `x_now`
    /// with TVLQR, or just shifted when warm starts are disabled. Non-executed
    /// modes restart from the initial sampling variance.
    pub fn next_prior(&self, executed_mode: usize, x_now: &State, problem: &Problem, cfg: &PlannerConfig) -> Result<MultimodalPolicy> {
        let shift = cfg.executed_steps;
        let policy = &self.optimized.policy;
        let mut modes = Vec::with_capacity(policy.num_modes());
        modes.push(shift_primary(&policy.modes[executed_mode], shift, cfg.initial_variance));
        for (k, mode) in policy.modes.iter().enumerate() {
            if k == executed_mode {
                continue;
            }
            let next = if cfg.tvlqr_warm_start {
                let nominal = &self.optimized.nominals[k].trajectory;
                let s = shift.min(nominal.steps());
                let mut controls = nominal.controls[s..].to_vec();
                controls.resize(nominal.steps(), Control::ZERO);
                let reference = rollout_nominal(&nominal.states[s], &controls, &problem.dynamics)?;
                let tracked = warm_start_secondary(&reference, x_now, &cfg.lqr, &problem.dynamics)?;
                PolicyMode::from_controls(&tracked, cfg.initial_variance, 0.0)
            } else {
                shift_primary(mode, shift, cfg.initial_variance).with_variance(cfg.initial_variance)
            };
            modes.push(next);
        }
        MultimodalPolicy::from_modes(modes)
    }
}

/// Optimizes from `state` and picks the mode to execute.
pub fn plan_cycle(
    state: &State,
    prior: &MultimodalPolicy,
    problem: &Problem,
    neighbors: &[NeighborPrediction],
    cfg: &PlannerConfig,
    seed: u64,
) -> Result<CyclePlan> {
    let optimized = optimize(prior, state, problem, neighbors, cfg, seed)?;
    let executed_mode = select_executed_mode(&optimized.nominals);
    Ok(CyclePlan { optimized, executed_mode })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::costs::Obstacle;

    #[test]
    fn elite_counts() {
        let costs: Vec<f64> = (0..1024).map(|i| ((i * 37) % 1024) as f64).collect();
        assert_eq!(select_elites(&costs, 0.10).len(), 103);
        assert_eq!(select_elites(&[5.0, 2.0, 9.0], 0.10), vec![1]);
        assert_eq!(select_elites(&[3.0, 1.0, 2.0], 0.6), vec![1, 2]);
        // ceil(0.67 * 3) = 3
        assert_eq!(select_elites(&[3.0, 1.0, 2.0], 0.67), vec![1, 2, 0]);
        assert_eq!(select_elites(&[1.0, 1.0, 0.5, 1.0], 0.5), vec![2, 0]);
        assert!(select_elites(&[], 0.5).is_empty());
    }

    fn nominal(cost: f64, violations: u32) -> ModeNominal {
        let mut trajectory = Trajectory::new(vec![State::default(); 2], vec![Control::ZERO]);
        trajectory.cost = Some(cost);
        trajectory.violations = Some(violations);
        ModeNominal { trajectory, penalized_cost: cost + 1000.0 * violations as f64, provenance: ModeProvenance::Clustered }
    }

    #[test]
    fn executed_mode_prefers_feasible() {
        assert_eq!(select_executed_mode(&[nominal(1.0, 2), nominal(50.0, 0)]), 1);
        assert_eq!(select_executed_mode(&[nominal(5.0, 0), nominal(3.0, 0)]), 1);
        assert_eq!(select_executed_mode(&[nominal(1.0, 3), nominal(5000.0, 1), nominal(2.0, 1)]), 2);
    }

    fn config(k: usize) -> PlannerConfig {
        PlannerConfig { num_modes: k, num_samples: 128, ..Default::default() }
    }

    #[test]
    fn config_validation() {
        assert!(config(2).validate().is_ok());
        assert!(PlannerConfig { num_samples: 0, ..config(1) }.validate().is_err());
        assert!(PlannerConfig { num_samples: 1, ..config(2) }.validate().is_err());
        assert!(PlannerConfig { elite_fraction: 1.0, ..config(1) }.validate().is_err());
        assert!(PlannerConfig { ce_iterations: 0, ..config(1) }.validate().is_err());
    }

    #[test]
    fn rejects_bad_inputs() {
        let problem = Problem::new(DynamicsParams::default(), CostParams::default(), ConstraintParams::default());
        let cfg = config(1);
        let bad = State::new(f64::NAN, 0.0, 0.0, 0.0, 0.0);
        assert!(optimize(&cfg.cold_start(), &bad, &problem, &[], &cfg, 0).is_err());
        let wrong = MultimodalPolicy::cold_start(1, 5, [0.25, 0.25]);
        assert!(optimize(&wrong, &State::default(), &problem, &[], &cfg, 0).is_err());
        let too_many = config(3).cold_start();
        assert!(optimize(&too_many, &State::default(), &problem, &[], &cfg, 0).is_err());
    }

    #[test]
    fn infeasible_start_takes_penalty_branch() {
        let constraints = ConstraintParams { obstacles: vec![Obstacle::new(0.0, 0.0, 1.0)], ..Default::default() };
        let problem = Problem::new(DynamicsParams::default(), CostParams { goal: State::at(5.0, 0.0), ..Default::default() }, constraints);
        let cfg = config(2);
        let out = optimize(&cfg.cold_start(), &State::default(), &problem, &[], &cfg, 3).unwrap();
        assert_eq!(out.report.feasible_count, 0);
        assert!(out.report.relaxed);
        assert_eq!(out.policy.num_modes(), 2);
        assert!(out.nominals.iter().all(|n| n.provenance == ModeProvenance::Relaxed));
    }

    #[test]
    fn nominal_cost_matches_rollout() {
        let problem = Problem::new(DynamicsParams::default(), CostParams { goal: State::at(2.0, 1.0), ..Default::default() }, ConstraintParams::default());
        let cfg = config(2);
        let out = optimize(&cfg.cold_start(), &State::default(), &problem, &[], &cfg, 1).unwrap();
        for (mode, nominal) in out.policy.modes.iter().zip(&out.nominals) {
            let t = rollout_nominal(&State::default(), &nominal_controls(mode, &problem.dynamics), &problem.dynamics).unwrap();
            assert_eq!(trajectory_cost(&t, &problem.cost), nominal.cost());
            assert_eq!(nominal.trajectory.states, t.states);
        }
        assert!(out.report.modes.windows(2).all(|w| w[0].nominal_cost <= w[1].nominal_cost));
    }

    #[test]
    fn optimization_is_seed_deterministic() {
        let problem = Problem::new(DynamicsParams::default(), CostParams { goal: State::at(2.0, 1.0), ..Default::default() }, ConstraintParams::default());
        let cfg = PlannerConfig { ce_iterations: 2, ..config(2) };
        let a = optimize(&cfg.cold_start(), &State::default(), &problem, &[], &cfg, 9).unwrap();
        let b = optimize(&cfg.cold_start(), &State::default(), &problem, &[], &cfg, 9).unwrap();
        assert_eq!(a.policy, b.policy);
        assert_eq!(a.report, b.report);
    }

    #[test]
    fn next_prior_without_warm_start_shifts_every_mode() {
        let problem = Problem::new(DynamicsParams::default(), CostParams { goal: State::at(3.0, 0.0), ..Default::default() }, ConstraintParams::default());
        let cfg = PlannerConfig { tvlqr_warm_start: false, ..config(2) };
        let plan = plan_cycle(&State::default(), &cfg.cold_start(), &problem, &[], &cfg, 4).unwrap();
        let next = plan.next_prior(plan.executed_mode, &State::default(), &problem, &cfg).unwrap();
        let s = cfg.executed_steps * CONTROL_DIM;
        let exec = &plan.policy().modes[plan.executed_mode];
        assert_eq!(&next.modes[0].mean[..exec.mean.len() - s], &exec.mean[s..]);
        assert_eq!(&next.modes[0].var[..exec.var.len() - s], &exec.var[s..]);
        let other = &plan.policy().modes[1 - plan.executed_mode];
        assert_eq!(&next.modes[1].mean[..other.mean.len() - s], &other.mean[s..]);
        assert!(next.modes[1].var.iter().all(|&v| v == 0.25));
        assert_eq!(next.steps, cfg.steps());
    }
}
