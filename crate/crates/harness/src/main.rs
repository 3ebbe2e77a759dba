use std::path::PathBuf;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use mmce_harness::{emit_results, preflight, run_experiment, ExperimentConfig, ExperimentKind};

#[derive(Parser)]
#[command(name = "mmce", version, about = "Monte Carlo experiments for multimodal cross-entropy planning")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Single-trap success grid over trap width and depth.
    Heatmap(Common),
    /// Random trap fields across sample and mode counts.
    ModeSweep(Common),
    /// Antipodal team swaps across team sizes.
    Antipodal(Common),
    /// Repeated trials of one scenario file.
    Run {
        #[command(flatten)]
        common: Common,
        /// JSON scenario, overriding the config's scenario section.
        #[arg(long)]
        scenario: Option<PathBuf>,
    },
    /// Parse and validate a config file without running anything.
    ValidateConfig {
        #[arg(long)]
        config: PathBuf,
    },
}

#[derive(Args)]
struct Common {
    /// TOML config; defaults are used when absent.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Trials per cell (trap-field sweeps: retained fields).
    #[arg(long)]
    trials: Option<usize>,
    /// Worker threads, 0 for all cores.
    #[arg(long)]
    jobs: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write per-cycle traces.
    #[arg(long)]
    traces: bool,
}

impl Common {
    fn resolve(&self, kind: ExperimentKind) -> anyhow::Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => ExperimentConfig::for_kind(kind),
        };
        cfg.kind = kind;
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(t) = self.trials {
            if kind == ExperimentKind::TrapFieldSweep {
                cfg.mode_sweep.fields = t;
            } else {
                cfg.trials = t;
            }
        }
        if let Some(j) = self.jobs {
            cfg.jobs = j;
        }
        if let Some(o) = &self.out {
            cfg.out = o.clone();
        }
        cfg.traces |= self.traces;
        Ok(cfg)
    }
}

fn run(cfg: ExperimentConfig) -> anyhow::Result<()> {
    cfg.validate()?;
    preflight(&cfg.out)?;
    let results = run_experiment(&cfg)?;
    let files = emit_results(&results, &cfg.out)?;
    for summary in mmce_harness::experiments::summarize(&results.records) {
        println!(
            "{:<40} success {:>3}/{:<3} collision {:>3} timeout {:>3} error {:>3}",
            summary.cell.key(),
            summary.success,
            summary.trials,
            summary.collision,
            summary.timeout,
            summary.error
        );
    }
    for f in files {
        println!("wrote {}", f.display());
    }
    Ok(())
}

fn main() -> anyhow::Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::Heatmap(c) => run(c.resolve(ExperimentKind::TrapHeatmap)?),
        Command::ModeSweep(c) => run(c.resolve(ExperimentKind::TrapFieldSweep)?),
        Command::Antipodal(c) => run(c.resolve(ExperimentKind::Antipodal)?),
        Command::Run { common, scenario } => {
            let mut cfg = common.resolve(ExperimentKind::SingleScenario)?;
            if let Some(s) = scenario {
                cfg.scenario.file = Some(s);
                cfg.scenario.inline = None;
            }
            run(cfg)
        }
        Command::ValidateConfig { config } => {
            let cfg = ExperimentConfig::load(&config)?;
            cfg.validate().with_context(|| format!("{} is invalid", config.display()))?;
            println!("{}: valid {} config", config.display(), cfg.kind.name());
            Ok(())
        }
    }
}
