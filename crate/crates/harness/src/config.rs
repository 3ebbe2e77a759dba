//! Experiment configuration, loaded from a TOML document.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use mmce_core::environments::{ScenarioSpec, FILTER_ROBOT_RADIUS};
use mmce_core::{ConstraintParams, CoordinationParams, CostParams, DynamicsParams, PlannerConfig};
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    TrapHeatmap,
    TrapFieldSweep,
    Antipodal,
    SingleScenario,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::TrapHeatmap => "trap_heatmap",
            Self::TrapFieldSweep => "trap_field_sweep",
            Self::Antipodal => "antipodal",
            Self::SingleScenario => "single_scenario",
        }
    }
}

/// A planner variant compared within an experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Variant {
    pub name: String,
    pub modes: usize,
    #[serde(default = "yes")]
    pub tvlqr: bool,
    /// Overrides `planner.num_samples` when set.
    #[serde(default)]
    pub samples: Option<usize>,
}

fn yes() -> bool {
    true
}

impl Variant {
    pub fn new(name: &str, modes: usize, tvlqr: bool) -> Self {
        Self { name: name.into(), modes, tvlqr, samples: None }
    }

    pub fn apply(&self, base: &PlannerConfig) -> PlannerConfig {
        PlannerConfig {
            num_modes: self.modes,
            tvlqr_warm_start: self.tvlqr,
            num_samples: self.samples.unwrap_or(base.num_samples),
            ..base.clone()
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HeatmapConfig {
    pub widths: Vec<f64>,
    pub depths: Vec<f64>,
    pub variants: Vec<Variant>,
}

impl Default for HeatmapConfig {
    fn default() -> Self {
        Self {
            widths: (1..=6).map(|i| 0.25 * i as f64).collect(),
            depths: (0..=8).map(|i| 0.25 * i as f64).collect(),
            variants: vec![Variant::new("k1", 1, true), Variant::new("k2", 2, true), Variant::new("k2_no_tvlqr", 2, false)],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModeSweepConfig {
    /// Retained fields to evaluate.
    pub fields: usize,
    /// Trials per retained field in each cell.
    pub trials_per_field: usize,
    /// Give up after generating this many candidate fields.
    pub max_generated: usize,
    pub samples: Vec<usize>,
    pub modes: Vec<usize>,
    /// `(samples, modes)` cells that are not run.
    pub absent: Vec<(usize, usize)>,
    pub filter_robot_radius: f64,
}

impl Default for ModeSweepConfig {
    fn default() -> Self {
        Self {
            fields: 10,
            trials_per_field: 1,
            max_generated: 10_000,
            samples: vec![1024, 2048],
            modes: vec![1, 2, 3, 4],
            absent: vec![(1024, 3), (1024, 4)],
            filter_robot_radius: FILTER_ROBOT_RADIUS,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AntipodalConfig {
    pub agents: Vec<usize>,
    pub modes: Vec<usize>,
    pub radius: f64,
}

impl Default for AntipodalConfig {
    fn default() -> Self {
        Self { agents: (2..=8).collect(), modes: vec![1, 2], radius: 3.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioConfig {
    /// JSON scenario file, resolved relative to the config file.
    pub file: Option<PathBuf>,
    pub inline: Option<ScenarioSpec>,
    pub variants: Vec<Variant>,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self { file: None, inline: None, variants: vec![Variant::new("k2", 2, true)] }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimulationConfig {
    /// Predicted rollouts per mode published to teammates.
    pub prediction_samples: usize,
    /// Center distance below which two robots have collided: two robot
    /// bodies of 0.2 m radius. `None` uses the planner's collision radius.
    pub robot_collision_distance: Option<f64>,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self { prediction_samples: 64, robot_collision_distance: Some(2.0 * FILTER_ROBOT_RADIUS) }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    pub seed: u64,
    /// Trials per cell.
    pub trials: usize,
    /// Worker threads; 0 uses every core.
    pub jobs: usize,
    pub out: PathBuf,
    /// Write per-cycle traces.
    pub traces: bool,
    pub planner: PlannerConfig,
    pub dynamics: DynamicsParams,
    pub cost: CostParams,
    /// Collision radius, chance level and default workspace; scenarios
    /// supply obstacles.
    pub constraints: ConstraintParams,
    pub coordination: CoordinationParams,
    pub simulation: SimulationConfig,
    pub heatmap: HeatmapConfig,
    pub mode_sweep: ModeSweepConfig,
    pub antipodal: AntipodalConfig,
    pub scenario: ScenarioConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            kind: ExperimentKind::TrapHeatmap,
            seed: 0,
            trials: 10,
            jobs: 0,
            out: PathBuf::from("results"),
            traces: false,
            planner: PlannerConfig::default(),
            dynamics: DynamicsParams::default(),
            cost: CostParams::default(),
            constraints: ConstraintParams::default(),
            coordination: CoordinationParams::default(),
            simulation: SimulationConfig::default(),
            heatmap: HeatmapConfig::default(),
            mode_sweep: ModeSweepConfig::default(),
            antipodal: AntipodalConfig::default(),
            scenario: ScenarioConfig::default(),
        }
    }
}

impl ExperimentConfig {
    /// Defaults with the given experiment kind.
    pub fn for_kind(kind: ExperimentKind) -> Self {
        Self { kind, ..Default::default() }
    }

    pub fn from_toml(text: &str) -> anyhow::Result<Self> {
        Ok(toml::from_str(text)?)
    }

    /// Loads a config file; a relative scenario file is resolved against the
    /// config's directory.
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let mut cfg = Self::from_toml(&text).with_context(|| format!("parsing {}", path.display()))?;
        if let (Some(file), Some(dir)) = (&cfg.scenario.file, path.parent()) {
            if file.is_relative() {
                cfg.scenario.file = Some(dir.join(file));
            }
        }
        Ok(cfg)
    }

    pub fn robot_collision_distance(&self) -> f64 {
        self.simulation.robot_collision_distance.unwrap_or(self.constraints.collision_radius)
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        if self.trials < 1 {
            bail!("trials must be at least 1");
        }
        self.planner.validate()?;
        self.dynamics.validate()?;
        self.cost.validate()?;
        self.constraints.validate()?;
        if !(self.coordination.lambda >= 0.0) {
            bail!("coordination lambda must be non-negative");
        }
        if self.simulation.prediction_samples < 1 {
            bail!("simulation.prediction_samples must be at least 1");
        }
        if !(self.robot_collision_distance() > 0.0) {
            bail!("robot collision distance must be positive");
        }
        let check_variants = |vs: &[Variant]| -> anyhow::Result<()> {
            if vs.is_empty() {
                bail!("at least one planner variant is required");
            }
            for v in vs {
                v.apply(&self.planner).validate().with_context(|| format!("variant {}", v.name))?;
            }
            Ok(())
        };
        match self.kind {
            ExperimentKind::TrapHeatmap => {
                let h = &self.heatmap;
                if h.widths.is_empty() || h.depths.is_empty() {
                    bail!("heatmap needs at least one width and one depth");
                }
                if h.widths.iter().chain(&h.depths).any(|x| !(*x >= 0.0)) {
                    bail!("trap widths and depths must be non-negative");
                }
                check_variants(&h.variants)?;
            }
            ExperimentKind::TrapFieldSweep => {
                let m = &self.mode_sweep;
                if m.fields < 1 || m.trials_per_field < 1 || m.samples.is_empty() || m.modes.is_empty() {
                    bail!("mode sweep needs fields, sample counts and mode counts");
                }
                for &s in &m.samples {
                    for &k in &m.modes {
                        PlannerConfig { num_samples: s, num_modes: k, ..self.planner.clone() }.validate()?;
                    }
                }
            }
            ExperimentKind::Antipodal => {
                let a = &self.antipodal;
                if a.agents.is_empty() || a.agents.iter().any(|n| !(2..=8).contains(n)) {
                    bail!("antipodal team sizes must lie in 2..=8");
                }
                if a.modes.is_empty() || a.modes.iter().any(|&k| k < 1) {
                    bail!("antipodal mode counts must be at least 1");
                }
                if !(a.radius > 0.0) {
                    bail!("antipodal radius must be positive");
                }
            }
            ExperimentKind::SingleScenario => {
                self.load_scenario()?.validate()?;
                check_variants(&self.scenario.variants)?;
            }
        }
        Ok(())
    }

    pub fn load_scenario(&self) -> anyhow::Result<ScenarioSpec> {
        match (&self.scenario.inline, &self.scenario.file) {
            (Some(s), None) => Ok(s.clone()),
            (None, Some(f)) => {
                let text = std::fs::read_to_string(f).with_context(|| format!("reading scenario {}", f.display()))?;
                Ok(serde_json::from_str(&text).with_context(|| format!("parsing scenario {}", f.display()))?)
            }
            (Some(_), Some(_)) => bail!("give either scenario.file or scenario.inline, not both"),
            (None, None) => bail!("single scenario runs need scenario.file or scenario.inline"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid_for_generated_experiments() {
        for kind in [ExperimentKind::TrapHeatmap, ExperimentKind::TrapFieldSweep, ExperimentKind::Antipodal] {
            ExperimentConfig::for_kind(kind).validate().unwrap();
        }
        assert!(ExperimentConfig::for_kind(ExperimentKind::SingleScenario).validate().is_err());
    }

    #[test]
    fn zero_trials_rejected() {
        let cfg = ExperimentConfig::from_toml("trials = 0").unwrap();
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn nested_fields_parse() {
        let cfg = ExperimentConfig::from_toml(
            r#"
            kind = "antipodal"
            seed = 7
            [planner]
            num_samples = 256
            num_modes = 2
            [antipodal]
            agents = [2, 3]
            radius = 1.7
            [constraints]
            collision_radius = 0.4
            "#,
        )
        .unwrap();
        assert_eq!(cfg.kind, ExperimentKind::Antipodal);
        assert_eq!(cfg.planner.num_samples, 256);
        assert_eq!(cfg.planner.elite_fraction, 0.1);
        assert_eq!(cfg.antipodal.agents, vec![2, 3]);
        assert_eq!(cfg.robot_collision_distance(), 0.4);
        cfg.validate().unwrap();
    }

    #[test]
    fn unknown_kind_rejected() {
        assert!(ExperimentConfig::from_toml("kind = \"maze\"").is_err());
    }

    #[test]
    fn default_grid_is_six_by_nine() {
        let h = HeatmapConfig::default();
        assert_eq!((h.widths.len(), h.depths.len()), (6, 9));
        assert_eq!(h.widths[0], 0.25);
        assert_eq!(*h.depths.last().unwrap(), 2.0);
    }
}
