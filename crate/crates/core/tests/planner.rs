use mmce_core::costs::{trajectory_cost, ConstraintParams, CostParams, Obstacle};
use mmce_core::dynamics::{rollout, rollout_nominal, Control, DynamicsParams, State, Trajectory};
use mmce_core::planner::{optimize, plan_cycle, select_elites, PlannerConfig, Problem};
use mmce_core::policy::{mle_update, MultimodalPolicy};
use mmce_core::rng;

fn free_problem(goal: State) -> Problem {
    Problem::new(DynamicsParams::default(), CostParams { goal, ..Default::default() }, ConstraintParams::default())
}

/// Noise-free direct shooting by finite-difference gradient descent with
/// backtracking, independent of the sampling planner.
fn shooting_oracle(x0: &State, problem: &Problem, steps: usize) -> Trajectory {
    let params = problem.dynamics.noise_free();
    let cost_of = |u: &[f64]| {
        let controls: Vec<Control> = u.chunks_exact(2).map(|c| params.clamp_control(Control::new(c[0], c[1]))).collect();
        trajectory_cost(&rollout_nominal(x0, &controls, &params).unwrap(), &problem.cost)
    };
    let mut u = vec![0.0; steps * 2];
    let mut c = cost_of(&u);
    let mut lr = 0.5;
    for _ in 0..300 {
        let h = 1e-6;
        let grad: Vec<f64> = (0..u.len())
            .map(|i| {
                let mut p = u.clone();
                p[i] += h;
                (cost_of(&p) - c) / h
            })
            .collect();
        loop {
            let cand: Vec<f64> = u.iter().zip(&grad).map(|(x, g)| (x - lr * g).clamp(-1.0, 1.0)).collect();
            let cc = cost_of(&cand);
            if cc < c {
                u = cand;
                c = cc;
                lr *= 1.5;
                break;
            }
            lr *= 0.5;
            if lr < 1e-9 {
                break;
            }
        }
    }
    let controls: Vec<Control> = u.chunks_exact(2).map(|c| Control::new(c[0], c[1])).collect();
    rollout_nominal(x0, &controls, &params).unwrap()
}

#[test]
fn straight_line_reaches_goal_like_shooting() {
    let goal = State::at(2.0, 0.0);
    let problem = free_problem(goal);
    let x0 = State::new(0.0, 0.0, 0.0, 1.0, 0.0);
    let cfg = PlannerConfig { num_modes: 1, num_samples: 512, ce_iterations: 30, ..Default::default() };
    let out = optimize(&cfg.cold_start(), &x0, &problem, &[], &cfg, 17).unwrap();
    let ce = &out.nominals[0];
    let oracle = shooting_oracle(&x0, &problem, cfg.steps());
    let oracle_cost = trajectory_cost(&oracle, &problem.cost);
    assert!(oracle.terminal().distance(&goal) < 0.2, "oracle misses: {:?}", oracle.terminal());
    assert!(ce.trajectory.terminal().distance(&goal) < 0.2, "terminal {:?}", ce.trajectory.terminal());
    assert!(ce.cost() <= 1.5 * oracle_cost, "ce {} oracle {oracle_cost}", ce.cost());
}

fn crossing_y(t: &Trajectory, x: f64) -> f64 {
    t.states
        .iter()
        .min_by(|a, b| (a.px - x).abs().total_cmp(&(b.px - x).abs()))
        .map(|s| s.py)
        .unwrap()
}

#[test]
fn bimodal_gap_keeps_both_openings() {
    let constraints = ConstraintParams {
        workspace_min: [-1.0, -2.5],
        workspace_max: [8.0, 2.5],
        obstacles: vec![Obstacle::new(2.0, 0.0, 0.6)],
        ..Default::default()
    };
    let problem = Problem::new(DynamicsParams::default(), CostParams { goal: State::at(4.5, 0.0), ..Default::default() }, constraints);
    let x0 = State::new(0.0, 0.0, 0.0, 1.0, 0.0);
    let cfg = PlannerConfig { num_modes: 2, ce_iterations: 3, ..Default::default() };
    let mut split = 0;
    for seed in 0..20 {
        let out = optimize(&cfg.cold_start(), &x0, &problem, &[], &cfg, seed).unwrap();
        let a = crossing_y(&out.nominals[0].trajectory, 2.0);
        let b = crossing_y(&out.nominals[1].trajectory, 2.0);
        split += (a * b < 0.0) as usize;
    }
    assert!(split >= 16, "{split}/20 seeds kept both sides");
}

#[test]
fn single_mode_matches_reference_ce_step() {
    let problem = free_problem(State::at(3.0, 1.0));
    let x0 = State::new(0.0, 0.0, 0.0, 0.5, 0.0);
    let cfg = PlannerConfig { num_modes: 1, num_samples: 300, ..Default::default() };
    let prior = cfg.cold_start();
    for seed in [1u64, 2, 3] {
        let out = optimize(&prior, &x0, &problem, &[], &cfg, seed).unwrap();

        // Unimodal CE written out directly: sample, roll out, keep the
        // top-rho costs, refit.
        let round = rng::derive_path(seed, &[0]);
        let mut samples = Vec::new();
        let mut costs = Vec::new();
        for j in 0..cfg.num_samples {
            let mut r = rng::stream(rng::derive(round, j as u64));
            let xi = prior.modes[0].sample(&mut r, &problem.dynamics);
            let controls: Vec<Control> = xi.chunks_exact(2).map(|c| Control::new(c[0], c[1])).collect();
            let t = rollout(&x0, &controls, &problem.dynamics, Some(&mut r)).unwrap();
            costs.push(trajectory_cost(&t, &problem.cost));
            samples.push(xi);
        }
        let mut order: Vec<usize> = (0..costs.len()).collect();
        order.sort_by(|&a, &b| costs[a].total_cmp(&costs[b]).then(a.cmp(&b)));
        let count = (cfg.elite_fraction * cfg.num_samples as f64).ceil() as usize;
        let mut expected: Vec<usize> = order[..count].to_vec();
        let mut got = out.report.elite_indices[0].clone();
        expected.sort_unstable();
        got.sort_unstable();
        assert_eq!(got, expected);
        assert_eq!(select_elites(&costs, cfg.elite_fraction).len(), count);

        let elites: Vec<&[f64]> = order[..count].iter().map(|&i| samples[i].as_slice()).collect();
        let (mean, var) = mle_update(&elites, cfg.var_floor).unwrap();
        for (a, b) in out.policy.modes[0].mean.iter().zip(&mean) {
            assert!((a - b).abs() < 1e-12);
        }
        for (a, b) in out.policy.modes[0].var.iter().zip(&var) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}

#[test]
fn elite_mean_cost_mostly_descends() {
    let problem = free_problem(State::at(2.5, 0.8));
    let x0 = State::default();
    let cfg = PlannerConfig { num_modes: 1, num_samples: 512, ce_iterations: 10, ..Default::default() };
    let (mut down, mut total) = (0, 0);
    for seed in 0..20 {
        let out = optimize(&cfg.cold_start(), &x0, &problem, &[], &cfg, 100 + seed).unwrap();
        for w in out.report.iterations.windows(2) {
            total += 1;
            down += (w[1].elite_mean_cost <= w[0].elite_mean_cost) as usize;
        }
    }
    assert!(down as f64 >= 0.9 * total as f64, "{down}/{total}");
}

#[test]
fn at_goal_robot_stays_put() {
    let goal = State::at(1.0, 1.0);
    let problem = free_problem(goal);
    let cfg = PlannerConfig { num_modes: 2, ce_iterations: 3, ..Default::default() };
    let plan = plan_cycle(&goal, &cfg.cold_start(), &problem, &[], &cfg, 8).unwrap();
    let nominal = &plan.nominals()[plan.executed_mode].trajectory;
    assert!(nominal.states.iter().all(|s| s.distance(&goal) < 0.1), "{:?}", nominal.terminal());
    for u in plan.executed_controls(&cfg) {
        assert!(u.accel.abs() < 0.5 && u.steer_rate.abs() < 0.5, "{u:?}");
    }
}

#[test]
fn shift_carries_executed_tail() {
    let problem = Problem::new(
        DynamicsParams::default().noise_free(),
        CostParams { goal: State::at(3.0, 0.0), ..Default::default() },
        ConstraintParams::default(),
    );
    let cfg = PlannerConfig { num_modes: 2, num_samples: 256, tvlqr_warm_start: false, ..Default::default() };
    let x0 = State::new(0.0, 0.0, 0.0, 0.5, 0.0);
    let plan = plan_cycle(&x0, &cfg.cold_start(), &problem, &[], &cfg, 2).unwrap();
    let executed = plan.executed_controls(&cfg).to_vec();
    let x1 = rollout_nominal(&x0, &executed, &problem.dynamics).unwrap().terminal().to_owned();
    let prior = plan.next_prior(plan.executed_mode, &x1, &problem, &cfg).unwrap();
    let mean = &plan.policy().modes[plan.executed_mode].mean;
    let s = cfg.executed_steps * 2;
    assert_eq!(&prior.modes[0].mean[..mean.len() - s], &mean[s..]);
    // The next cycle plans from that prior without error.
    plan_cycle(&x1, &prior, &problem, &[], &cfg, 3).unwrap();
}

#[test]
fn returned_nominals_respect_bounds() {
    let constraints = ConstraintParams { obstacles: vec![Obstacle::new(1.5, 0.0, 0.4)], ..Default::default() };
    let problem = Problem::new(DynamicsParams::default(), CostParams { goal: State::at(4.0, 0.0), ..Default::default() }, constraints);
    let cfg = PlannerConfig { num_modes: 3, ce_iterations: 2, ..Default::default() };
    let x0 = State::new(0.0, 0.0, 0.0, 1.8, 0.0);
    let out = optimize(&cfg.cold_start(), &x0, &problem, &[], &cfg, 4).unwrap();
    assert_eq!(out.policy.num_modes(), 3);
    for n in &out.nominals {
        for s in &n.trajectory.states {
            assert!((-0.5..=2.0).contains(&s.v) && (-0.4..=0.4).contains(&s.delta_s));
        }
        for u in &n.trajectory.controls {
            assert!(u.accel.abs() <= 1.0 && u.steer_rate.abs() <= 1.0);
        }
    }
    let flat = out.policy.to_flat();
    assert_eq!(MultimodalPolicy::from_flat(&flat).unwrap(), out.policy);
}
