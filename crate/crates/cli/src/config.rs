//! Versioned JSON experiment configuration.

use std::path::{Path, PathBuf};

use serde::Deserialize;
use sigfree_core::analytics::ServiceParams;
use sigfree_core::{
    ApproachSpec, CrossingTimeDist, DemandProfile, HeadwayMatrix, IntersectionSpec, OdClass, PolicyKind,
};

use crate::CliError;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub version: u32,
    /// `Θ[leader][follower]` in seconds.
    pub theta: [[f64; 2]; 2],
    pub crossing_time: CrossingTimeConfig,
    /// Point demand `[λ₁, λ₂]` in veh/s.
    #[serde(default)]
    pub demand: Option<[f64; 2]>,
    #[serde(default)]
    pub grid: Option<GridConfig>,
    #[serde(default = "default_policies")]
    pub policies: Vec<PolicyKind>,
    /// LQF weight used by the bounds report.
    #[serde(default = "default_beta")]
    pub beta: f64,
    #[serde(default)]
    pub sim: SimSection,
    #[serde(default)]
    pub approach: ApproachSpec,
    #[serde(default)]
    pub micro_sim: MicroSimSection,
    #[serde(default)]
    pub region: RegionSection,
    #[serde(default)]
    pub drift: DriftSection,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case", deny_unknown_fields)]
pub enum CrossingTimeConfig {
    Deterministic { r: f64 },
    Uniform { a: f64, b: f64 },
    Discrete { values: Vec<f64>, probs: Vec<f64> },
    /// `mean ± √variance` with equal weights.
    TwoPoint { mean: f64, variance: f64 },
}

/// Demand grid: either explicit `points` or the product of two axes.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    #[serde(default)]
    pub points: Option<Vec<[f64; 2]>>,
    #[serde(default)]
    pub lambda1: Option<AxisConfig>,
    #[serde(default)]
    pub lambda2: Option<AxisConfig>,
}

/// `steps` evenly spaced values from `start` to `stop` inclusive.
#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AxisConfig {
    pub start: f64,
    pub stop: f64,
    pub steps: usize,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSection {
    #[serde(default = "default_horizon")]
    pub horizon: f64,
    #[serde(default)]
    pub warmup: Option<f64>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_replications")]
    pub replications: usize,
    /// Also write per-policy event logs from `simulate`.
    #[serde(default)]
    pub record_events: bool,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MicroSimSection {
    #[serde(default = "default_micro_horizon")]
    pub horizon: f64,
    #[serde(default)]
    pub record_trajectories: bool,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegionSection {
    #[serde(default = "default_rays")]
    pub rays: usize,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DriftSection {
    /// States to probe; when empty, `random_states` states are drawn.
    #[serde(default)]
    pub states: Vec<DriftStateConfig>,
    #[serde(default = "default_random_states")]
    pub random_states: usize,
    /// Largest `‖x‖₁` of a drawn state.
    #[serde(default = "default_max_workload")]
    pub max_workload: f64,
    #[serde(default = "default_samples")]
    pub samples: usize,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DriftStateConfig {
    pub x: [f64; 2],
    pub y: OdClass,
}

fn default_policies() -> Vec<PolicyKind> {
    vec![PolicyKind::FIFO, PolicyKind::MS, PolicyKind::lqf(1.0)]
}
fn default_beta() -> f64 {
    1.0
}
fn default_horizon() -> f64 {
    1e4
}
fn default_replications() -> usize {
    1
}
fn default_micro_horizon() -> f64 {
    600.0
}
fn default_rays() -> usize {
    101
}
fn default_random_states() -> usize {
    100
}
fn default_max_workload() -> f64 {
    50.0
}
fn default_samples() -> usize {
    10_000
}

impl Default for SimSection {
    fn default() -> Self {
        Self {
            horizon: default_horizon(),
            warmup: None,
            seed: 0,
            replications: default_replications(),
            record_events: false,
        }
    }
}

impl Default for MicroSimSection {
    fn default() -> Self {
        Self {
            horizon: default_micro_horizon(),
            record_trajectories: false,
        }
    }
}

impl Default for RegionSection {
    fn default() -> Self {
        Self { rays: default_rays() }
    }
}

impl Default for DriftSection {
    fn default() -> Self {
        Self {
            states: Vec::new(),
            random_states: default_random_states(),
            max_workload: default_max_workload(),
            samples: default_samples(),
        }
    }
}

impl CrossingTimeConfig {
    pub fn build(&self) -> sigfree_core::Result<CrossingTimeDist> {
        match self {
            CrossingTimeConfig::Deterministic { r } => CrossingTimeDist::deterministic(*r),
            CrossingTimeConfig::Uniform { a, b } => CrossingTimeDist::uniform(*a, *b),
            CrossingTimeConfig::Discrete { values, probs } => CrossingTimeDist::discrete(values.clone(), probs.clone()),
            CrossingTimeConfig::TwoPoint { mean, variance } => CrossingTimeDist::two_point(*mean, *variance),
        }
    }
}

impl AxisConfig {
    fn values(&self) -> Vec<f64> {
        match self.steps {
            1 => vec![self.start],
            n => (0..n)
                .map(|i| self.start + (self.stop - self.start) * i as f64 / (n - 1) as f64)
                .collect(),
        }
    }
}

/// Validated model objects derived from the configuration.
#[derive(Debug, Clone)]
pub struct Model {
    pub theta: HeadwayMatrix,
    pub crossing_time: CrossingTimeDist,
    pub params: ServiceParams,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Validation(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: ExperimentConfig = serde_path_to_error::deserialize(de)
            .map_err(|e| CliError::Validation(format!("config field `{}`: {}", e.path(), e.inner())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<(), CliError> {
        let invalid = |field: &str, msg: String| Err(CliError::Validation(format!("config field `{field}`: {msg}")));
        if self.version != SCHEMA_VERSION {
            return invalid("version", format!("unsupported schema version {} (expected {SCHEMA_VERSION})", self.version));
        }
        self.model()?;
        if let Some(d) = self.demand {
            DemandProfile::new(d).map_err(|e| CliError::Validation(format!("config field `demand`: {e}")))?;
        }
        if self.policies.is_empty() {
            return invalid("policies", "at least one policy is required".into());
        }
        for (i, p) in self.policies.iter().enumerate() {
            p.validate().map_err(|e| CliError::Validation(format!("config field `policies[{i}]`: {e}")))?;
        }
        if !(self.beta.is_finite() && self.beta > 0.0) {
            return invalid("beta", format!("must be positive, got {}", self.beta));
        }
        if self.sim.replications == 0 {
            return invalid("sim.replications", "must be at least 1".into());
        }
        if !(self.sim.horizon.is_finite() && self.sim.horizon > 0.0) {
            return invalid("sim.horizon", format!("must be positive, got {}", self.sim.horizon));
        }
        self.approach
            .validate()
            .map_err(|e| CliError::Validation(format!("config field `approach`: {e}")))?;
        if !(self.micro_sim.horizon.is_finite() && self.micro_sim.horizon > 0.0) {
            return invalid("micro_sim.horizon", format!("must be positive, got {}", self.micro_sim.horizon));
        }
        if self.region.rays < 2 {
            return invalid("region.rays", format!("need at least 2 rays, got {}", self.region.rays));
        }
        if self.drift.samples == 0 {
            return invalid("drift.samples", "must be at least 1".into());
        }
        if !(self.drift.max_workload.is_finite() && self.drift.max_workload >= 0.0) {
            return invalid("drift.max_workload", format!("must be nonnegative, got {}", self.drift.max_workload));
        }
        if let Some(grid) = &self.grid {
            match (&grid.points, grid.lambda1, grid.lambda2) {
                (Some(points), None, None) => {
                    for (i, p) in points.iter().enumerate() {
                        DemandProfile::new(*p)
                            .map_err(|e| CliError::Validation(format!("config field `grid.points[{i}]`: {e}")))?;
                    }
                }
                (None, Some(l1), Some(l2)) => {
                    for (name, axis) in [("lambda1", l1), ("lambda2", l2)] {
                        let ok = axis.steps >= 1
                            && axis.start.is_finite()
                            && axis.stop.is_finite()
                            && axis.start >= 0.0
                            && axis.stop >= 0.0;
                        if !ok {
                            return invalid(
                                &format!("grid.{name}"),
                                "need steps ≥ 1 and finite, nonnegative start and stop".into(),
                            );
                        }
                    }
                }
                _ => return invalid("grid", "give either `points` or both `lambda1` and `lambda2`".into()),
            }
        }
        Ok(())
    }

    pub fn model(&self) -> Result<Model, CliError> {
        let theta =
            HeadwayMatrix::new(self.theta).map_err(|e| CliError::Validation(format!("config field `theta`: {e}")))?;
        let crossing_time = self
            .crossing_time
            .build()
            .map_err(|e| CliError::Validation(format!("config field `crossing_time`: {e}")))?;
        let params = ServiceParams::from_dist(theta, &crossing_time)
            .map_err(|e| CliError::Validation(format!("config field `crossing_time`: {e}")))?;
        Ok(Model {
            theta,
            crossing_time,
            params,
        })
    }

    pub fn point_demand(&self, command: &str) -> Result<DemandProfile, CliError> {
        let d = self
            .demand
            .ok_or_else(|| CliError::Validation(format!("`{command}` needs a point demand: set `demand`")))?;
        DemandProfile::new(d).map_err(|e| CliError::Validation(format!("config field `demand`: {e}")))
    }

    pub fn spec(&self, demand: DemandProfile) -> Result<IntersectionSpec, CliError> {
        let m = self.model()?;
        IntersectionSpec::new(m.theta, m.crossing_time, demand).map_err(|e| CliError::Validation(e.to_string()))
    }

    /// Grid points in row order: `λ₁` outer, `λ₂` inner.
    pub fn grid_points(&self) -> Result<Vec<[f64; 2]>, CliError> {
        let grid = self
            .grid
            .as_ref()
            .ok_or_else(|| CliError::Validation("`sweep` needs a demand grid: set `grid`".into()))?;
        if let Some(points) = &grid.points {
            return Ok(points.clone());
        }
        let (l1, l2) = grid.lambda1.zip(grid.lambda2).expect("validated grid has both axes");
        let l2 = l2.values();
        Ok(l1.values().into_iter().flat_map(|a| l2.iter().map(move |&b| [a, b])).collect())
    }
}
