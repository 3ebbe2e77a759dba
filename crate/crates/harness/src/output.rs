//! Result files. `trials.csv` and `summary.json` depend only on the config and
//! seed; wall-clock numbers go to `timing.json`.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::Serialize;
use serde_json::json;

use crate::experiments::{summarize, ExperimentResults};
use crate::sim::Timing;

pub const TRIALS_FILE: &str = "trials.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const TIMING_FILE: &str = "timing.json";
pub const TRACES_FILE: &str = "traces.jsonl";

pub const TRIALS_HEADER: [&str; 17] = [
    "experiment",
    "variant",
    "width",
    "depth",
    "samples",
    "modes",
    "agents",
    "scenario",
    "trial",
    "seed",
    "outcome",
    "time_to_goal",
    "elapsed",
    "min_distance",
    "cycles",
    "clipped",
    "error",
];

/// Creates the output directory and checks it is writable, so a bad path
/// fails before any trial runs.
pub fn preflight(dir: &Path) -> anyhow::Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating output directory {}", dir.display()))?;
    let probe = dir.join(".write-check");
    File::create(&probe).with_context(|| format!("output directory {} is not writable", dir.display()))?;
    fs::remove_file(&probe)?;
    Ok(())
}

fn opt(x: Option<f64>, digits: usize) -> String {
    x.map(|v| format!("{v:.digits$}")).unwrap_or_default()
}

pub fn write_trials_csv<W: Write>(results: &ExperimentResults, out: W) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(TRIALS_HEADER)?;
    for r in &results.records {
        let c = &r.cell;
        w.write_record([
            results.kind.name().to_string(),
            c.variant.clone(),
            opt(c.width, 2),
            opt(c.depth, 2),
            c.samples.to_string(),
            c.modes.to_string(),
            c.agents.to_string(),
            r.scenario.to_string(),
            r.trial.to_string(),
            r.result.seed.to_string(),
            r.result.outcome.as_str().to_string(),
            opt(r.result.time_to_goal, 2),
            format!("{:.2}", r.result.elapsed),
            opt(r.result.min_distance, 6),
            r.result.cycles.to_string(),
            r.clipped.to_string(),
            r.result.error.clone().unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn summary_json(results: &ExperimentResults) -> serde_json::Value {
    json!({
        "experiment": results.kind.name(),
        "seed": results.seed,
        "trials": results.records.len(),
        "cells": summarize(&results.records),
        "tables": results.tables,
    })
}

#[derive(Serialize)]
struct TimingSummary {
    cycles: usize,
    mean_plan_ms: f64,
    max_plan_ms: f64,
    per_trial_mean_plan_ms: Vec<f64>,
}

fn timing_summary(timings: &[Timing]) -> TimingSummary {
    let cycles: usize = timings.iter().map(|t| t.cycles).sum();
    let total: f64 = timings.iter().map(|t| t.total_plan_ms).sum();
    TimingSummary {
        cycles,
        mean_plan_ms: if cycles == 0 { 0.0 } else { total / cycles as f64 },
        max_plan_ms: timings.iter().map(|t| t.max_plan_ms).fold(0.0, f64::max),
        per_trial_mean_plan_ms: timings.iter().map(Timing::mean_plan_ms).collect(),
    }
}

/// Writes every result file into `dir` and returns their paths.
pub fn emit_results(results: &ExperimentResults, dir: &Path) -> anyhow::Result<Vec<PathBuf>> {
    preflight(dir)?;
    let mut written = Vec::new();

    let path = dir.join(TRIALS_FILE);
    write_trials_csv(results, BufWriter::new(File::create(&path)?))?;
    written.push(path);

    let path = dir.join(SUMMARY_FILE);
    let mut text = serde_json::to_string_pretty(&summary_json(results))?;
    text.push('\n');
    fs::write(&path, text)?;
    written.push(path);

    let path = dir.join(TIMING_FILE);
    fs::write(&path, serde_json::to_string_pretty(&timing_summary(&results.timings))? + "\n")?;
    written.push(path);

    if !results.traces.is_empty() {
        let path = dir.join(TRACES_FILE);
        let mut f = BufWriter::new(File::create(&path)?);
        for (record, trace) in results.records.iter().zip(&results.traces) {
            let line = json!({ "variant": record.cell.variant, "cell": record.cell.key(), "trial": record.trial, "cycles": trace });
            writeln!(f, "{line}")?;
        }
        f.flush()?;
        written.push(path);
    }
    Ok(written)
}
