//! Monte Carlo experiment drivers. Every trial is an independent job; results
//! come back in job order whatever the thread count.

use anyhow::Context;
use mmce_core::environments::{antipodal_scenario, feasibility_filter, sample_trap_field, sample_trap_trial};
use mmce_core::rng;
use mmce_core::{PlannerConfig, ScenarioSpec};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::config::{ExperimentConfig, ExperimentKind, Variant};
use crate::sim::{run_trial, Outcome, Timing, TraceRow, TrialResult, TrialSettings};

/// Identifies the experiment cell a trial belongs to.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub variant: String,
    pub width: Option<f64>,
    pub depth: Option<f64>,
    pub samples: usize,
    pub modes: usize,
    pub agents: usize,
}

impl Cell {
    pub fn key(&self) -> String {
        let mut k = self.variant.clone();
        if let (Some(w), Some(d)) = (self.width, self.depth) {
            k += &format!("/w{w:.2}/d{d:.2}");
        }
        k + &format!("/m{}/k{}/n{}", self.samples, self.modes, self.agents)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub cell: Cell,
    /// Scenario index within the cell (trap field index for sweeps).
    pub scenario: usize,
    pub trial: usize,
    /// Trap circles clipped from the scenario at the workspace boundary.
    pub clipped: usize,
    pub result: TrialResult,
}

#[derive(Clone, Debug)]
pub struct ExperimentResults {
    pub kind: ExperimentKind,
    pub seed: u64,
    pub records: Vec<TrialRecord>,
    pub timings: Vec<Timing>,
    /// Per-trial traces, empty unless tracing was requested.
    pub traces: Vec<Vec<TraceRow>>,
    /// Experiment-specific tables and bookkeeping.
    pub tables: Value,
}

struct Job {
    cell: Cell,
    scenario: usize,
    trial: usize,
    spec: ScenarioSpec,
    planner: PlannerConfig,
    seed: u64,
}

fn execute(cfg: &ExperimentConfig, jobs: Vec<Job>) -> anyhow::Result<(Vec<TrialRecord>, Vec<Timing>, Vec<Vec<TraceRow>>)> {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(cfg.jobs).build().context("building worker pool")?;
    let runs: Vec<_> = pool.install(|| {
        jobs.par_iter()
            .map(|job| {
                let settings = TrialSettings::new(cfg, job.planner.clone());
                run_trial(&job.spec, &settings, job.seed)
            })
            .collect()
    });
    let mut records = Vec::with_capacity(jobs.len());
    let mut timings = Vec::with_capacity(jobs.len());
    let mut traces = Vec::new();
    for (job, run) in jobs.into_iter().zip(runs) {
        records.push(TrialRecord { cell: job.cell, scenario: job.scenario, trial: job.trial, clipped: job.spec.clipped_circles, result: run.result });
        timings.push(run.timing);
        if cfg.traces {
            traces.push(run.trace);
        }
    }
    Ok((records, timings, traces))
}

const SCENARIO_STREAM: u64 = 0;
const TRIAL_STREAM: u64 = 1;

/// Success rate per variant on the (width, depth) grid. Each trial's scenario
/// and simulator noise are shared by all variants.
pub fn run_heatmap(cfg: &ExperimentConfig) -> anyhow::Result<ExperimentResults> {
    let h = &cfg.heatmap;
    let mut jobs = Vec::new();
    for (wi, &width) in h.widths.iter().enumerate() {
        for (di, &depth) in h.depths.iter().enumerate() {
            for t in 0..cfg.trials {
                let path = [wi as u64, di as u64, t as u64];
                let scenario_seed = rng::derive_path(cfg.seed, &[SCENARIO_STREAM, path[0], path[1], path[2]]);
                let spec = sample_trap_trial(width, depth, &mut rng::stream(scenario_seed));
                let seed = rng::derive_path(cfg.seed, &[TRIAL_STREAM, path[0], path[1], path[2]]);
                for v in &h.variants {
                    let planner = v.apply(&cfg.planner);
                    let cell = Cell {
                        variant: v.name.clone(),
                        width: Some(width),
                        depth: Some(depth),
                        samples: planner.num_samples,
                        modes: planner.num_modes,
                        agents: 1,
                    };
                    jobs.push(Job { cell, scenario: t, trial: t, spec: spec.clone(), planner, seed });
                }
            }
        }
    }
    let (records, timings, traces) = execute(cfg, jobs)?;
    let grids: serde_json::Map<String, Value> = h
        .variants
        .iter()
        .map(|v| {
            let grid: Vec<Vec<f64>> = h
                .depths
                .iter()
                .map(|&d| {
                    h.widths
                        .iter()
                        .map(|&w| success_rate(records.iter().filter(|r| r.cell.variant == v.name && r.cell.width == Some(w) && r.cell.depth == Some(d))))
                        .collect()
                })
                .collect();
            (v.name.clone(), json!(grid))
        })
        .collect();
    let tables = json!({ "widths": h.widths, "depths": h.depths, "success_rate_by_depth_then_width": grids });
    Ok(ExperimentResults { kind: cfg.kind, seed: cfg.seed, records, timings, traces, tables })
}

/// Retained random trap fields with the index they were generated at.
pub fn generate_fields(cfg: &ExperimentConfig) -> (Vec<(usize, ScenarioSpec)>, usize) {
    let m = &cfg.mode_sweep;
    let mut kept = Vec::new();
    let mut generated = 0;
    while kept.len() < m.fields && generated < m.max_generated {
        let spec = sample_trap_field(&mut rng::stream(rng::derive_path(cfg.seed, &[SCENARIO_STREAM, generated as u64])));
        if feasibility_filter(&spec, m.filter_robot_radius) {
            kept.push((generated, spec));
        }
        generated += 1;
    }
    (kept, generated)
}

/// Success by (samples, modes) over one shared set of retained trap fields.
pub fn run_mode_sweep(cfg: &ExperimentConfig) -> anyhow::Result<ExperimentResults> {
    let m = &cfg.mode_sweep;
    let (fields, generated) = generate_fields(cfg);
    let mut jobs = Vec::new();
    for &(field, ref spec) in &fields {
        for t in 0..m.trials_per_field {
            let seed = rng::derive_path(cfg.seed, &[TRIAL_STREAM, field as u64, t as u64]);
            for &samples in &m.samples {
                for &modes in &m.modes {
                    if m.absent.contains(&(samples, modes)) {
                        continue;
                    }
                    let v = Variant { samples: Some(samples), ..Variant::new(&format!("m{samples}_k{modes}"), modes, true) };
                    let planner = v.apply(&cfg.planner);
                    let cell = Cell { variant: v.name, width: None, depth: None, samples, modes, agents: 1 };
                    jobs.push(Job { cell, scenario: field, trial: t, spec: spec.clone(), planner, seed });
                }
            }
        }
    }
    let (records, timings, traces) = execute(cfg, jobs)?;
    let rows: Vec<Value> = m
        .samples
        .iter()
        .map(|&s| {
            let rates: Vec<Value> = m
                .modes
                .iter()
                .map(|&k| {
                    if m.absent.contains(&(s, k)) {
                        Value::Null
                    } else {
                        json!(success_rate(records.iter().filter(|r| r.cell.samples == s && r.cell.modes == k)))
                    }
                })
                .collect();
            json!({ "samples": s, "success_rate": rates })
        })
        .collect();
    let tables = json!({
        "modes": m.modes,
        "rows": rows,
        "fields_generated": generated,
        "fields_retained": fields.len(),
        "clipped_circles": fields.iter().map(|(_, s)| s.clipped_circles).sum::<usize>(),
    });
    Ok(ExperimentResults { kind: cfg.kind, seed: cfg.seed, records, timings, traces, tables })
}

/// Team swap success by (team size, modes).
pub fn run_antipodal(cfg: &ExperimentConfig) -> anyhow::Result<ExperimentResults> {
    let a = &cfg.antipodal;
    let mut jobs = Vec::new();
    for &n in &a.agents {
        let spec = antipodal_scenario(n, a.radius)?;
        for t in 0..cfg.trials {
            let seed = rng::derive_path(cfg.seed, &[TRIAL_STREAM, n as u64, t as u64]);
            for &k in &a.modes {
                let v = Variant::new(&format!("k{k}"), k, true);
                let planner = v.apply(&cfg.planner);
                let cell = Cell { variant: v.name, width: None, depth: None, samples: planner.num_samples, modes: k, agents: n };
                jobs.push(Job { cell, scenario: 0, trial: t, spec: spec.clone(), planner, seed });
            }
        }
    }
    let (records, timings, traces) = execute(cfg, jobs)?;
    let rows: Vec<Value> = a
        .modes
        .iter()
        .map(|&k| {
            let rates: Vec<f64> = a.agents.iter().map(|&n| success_rate(records.iter().filter(|r| r.cell.modes == k && r.cell.agents == n))).collect();
            json!({ "modes": k, "success_rate": rates })
        })
        .collect();
    let tables = json!({ "agents": a.agents, "radius": a.radius, "rows": rows });
    Ok(ExperimentResults { kind: cfg.kind, seed: cfg.seed, records, timings, traces, tables })
}

/// Repeated trials of one scenario under each configured variant.
pub fn run_single(cfg: &ExperimentConfig) -> anyhow::Result<ExperimentResults> {
    let spec = cfg.load_scenario()?;
    let mut jobs = Vec::new();
    for t in 0..cfg.trials {
        let seed = rng::derive_path(cfg.seed, &[TRIAL_STREAM, t as u64]);
        for v in &cfg.scenario.variants {
            let planner = v.apply(&cfg.planner);
            let cell = Cell {
                variant: v.name.clone(),
                width: None,
                depth: None,
                samples: planner.num_samples,
                modes: planner.num_modes,
                agents: spec.num_robots(),
            };
            jobs.push(Job { cell, scenario: 0, trial: t, spec: spec.clone(), planner, seed });
        }
    }
    let (records, timings, traces) = execute(cfg, jobs)?;
    let tables = json!({ "robots": spec.num_robots(), "obstacles": spec.obstacles.len() });
    Ok(ExperimentResults { kind: cfg.kind, seed: cfg.seed, records, timings, traces, tables })
}

pub fn run_experiment(cfg: &ExperimentConfig) -> anyhow::Result<ExperimentResults> {
    cfg.validate()?;
    match cfg.kind {
        ExperimentKind::TrapHeatmap => run_heatmap(cfg),
        ExperimentKind::TrapFieldSweep => run_mode_sweep(cfg),
        ExperimentKind::Antipodal => run_antipodal(cfg),
        ExperimentKind::SingleScenario => run_single(cfg),
    }
}

pub fn success_rate<'a>(records: impl Iterator<Item = &'a TrialRecord>) -> f64 {
    let (mut n, mut ok) = (0usize, 0usize);
    for r in records {
        n += 1;
        ok += (r.result.outcome == Outcome::Success) as usize;
    }
    if n == 0 {
        0.0
    } else {
        ok as f64 / n as f64
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub cell: Cell,
    pub trials: usize,
    pub success: usize,
    pub collision: usize,
    pub timeout: usize,
    pub error: usize,
    pub success_rate: f64,
    pub mean_time_to_goal: Option<f64>,
    pub mean_min_distance: Option<f64>,
    pub min_min_distance: Option<f64>,
}

fn mean(xs: &[f64]) -> Option<f64> {
    (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64)
}

/// Per-cell counts in order of first appearance.
pub fn summarize(records: &[TrialRecord]) -> Vec<CellSummary> {
    let mut keys: Vec<String> = Vec::new();
    let mut groups: Vec<Vec<&TrialRecord>> = Vec::new();
    for r in records {
        let k = r.cell.key();
        match keys.iter().position(|x| *x == k) {
            Some(i) => groups[i].push(r),
            None => {
                keys.push(k);
                groups.push(vec![r]);
            }
        }
    }
    groups
        .into_iter()
        .map(|g| {
            let count = |o: Outcome| g.iter().filter(|r| r.result.outcome == o).count();
            let times: Vec<f64> = g.iter().filter_map(|r| r.result.time_to_goal).collect();
            let dists: Vec<f64> = g.iter().filter_map(|r| r.result.min_distance).collect();
            CellSummary {
                cell: g[0].cell.clone(),
                trials: g.len(),
                success: count(Outcome::Success),
                collision: count(Outcome::Collision),
                timeout: count(Outcome::Timeout),
                error: count(Outcome::Error),
                success_rate: count(Outcome::Success) as f64 / g.len() as f64,
                mean_time_to_goal: mean(&times),
                mean_min_distance: mean(&dists),
                min_min_distance: dists.iter().copied().reduce(f64::min),
            }
        })
        .collect()
}
