//! Run configuration: a human-editable TOML file describing the model, the
//! dose space, the problems to solve, optimizer overrides, efficiency
//! references, and output options. Unknown keys are rejected and parse
//! errors carry line/column positions.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use lord_core::pso::DEFAULT_SEED;
use lord_core::scenarios::{standard_grid, Scenario};
use lord_core::{Criterion, MinEdDefinition, PsoConfig, Restriction, ThetaParams};

/// Environment variable supplying the default seed when neither the config
/// file nor the command line sets one.
pub const SEED_ENV_VAR: &str = "LORD_SEED";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Scenario preset name (A, B, C, D); mutually exclusive with `theta`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scenario: Option<String>,
    /// Explicit model parameters `[theta1, theta2, theta3, theta4]`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta: Option<[f64; 4]>,
    #[serde(default = "default_level")]
    pub gamma: f64,
    /// Doses below are natural-log scale when true; raw scale otherwise.
    #[serde(default = "default_true")]
    pub log_scale: bool,
    /// Dose grid; defaults to the standard nine-dose grid.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<Vec<f64>>,
    /// Continuous dose interval; defaults to the grid's range.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub interval: Option<[f64; 2]>,
    #[serde(default)]
    pub mined: MinedConfig,
    #[serde(default)]
    pub problems: Vec<ProblemConfig>,
    #[serde(default)]
    pub pso: PsoOverrides,
    #[serde(default)]
    pub references: ReferencesConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

fn default_level() -> f64 {
    0.2
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MinedKind {
    /// Dose where the neutral-outcome probability equals `level`.
    NeutralProbability,
    /// Dose where the conditional efficacy given no toxicity equals `level`.
    ConditionalEfficacy,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MinedConfig {
    #[serde(default = "default_mined_kind")]
    pub definition: MinedKind,
    #[serde(default = "default_level")]
    pub level: f64,
}

fn default_mined_kind() -> MinedKind {
    MinedKind::NeutralProbability
}

impl Default for MinedConfig {
    fn default() -> Self {
        MinedConfig { definition: MinedKind::NeutralProbability, level: default_level() }
    }
}

impl MinedConfig {
    pub fn to_definition(self) -> MinEdDefinition {
        match self.definition {
            MinedKind::NeutralProbability => MinEdDefinition::NeutralProbability(self.level),
            MinedKind::ConditionalEfficacy => MinEdDefinition::ConditionalEfficacy(self.level),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CriterionConfig {
    D,
    C,
}

impl From<CriterionConfig> for Criterion {
    fn from(c: CriterionConfig) -> Criterion {
        match c {
            CriterionConfig::D => Criterion::D,
            CriterionConfig::C => Criterion::C,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RestrictionConfig {
    MtdCap,
    TherapeuticWindow,
}

impl From<RestrictionConfig> for Restriction {
    fn from(r: RestrictionConfig) -> Restriction {
        match r {
            RestrictionConfig::MtdCap => Restriction::MtdCap,
            RestrictionConfig::TherapeuticWindow => Restriction::TherapeuticWindow,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SpaceKind {
    Continuous,
    Discrete,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    pub criterion: CriterionConfig,
    pub restriction: RestrictionConfig,
    pub space: SpaceKind,
}

impl ProblemConfig {
    /// The conventional label: I/II for D under cap/window, III/IV for c,
    /// primed on a discrete space.
    pub fn label(&self) -> String {
        let base = match (self.criterion, self.restriction) {
            (CriterionConfig::D, RestrictionConfig::MtdCap) => "I",
            (CriterionConfig::D, RestrictionConfig::TherapeuticWindow) => "II",
            (CriterionConfig::C, RestrictionConfig::MtdCap) => "III",
            (CriterionConfig::C, RestrictionConfig::TherapeuticWindow) => "IV",
        };
        match self.space {
            SpaceKind::Continuous => base.to_string(),
            SpaceKind::Discrete => format!("{base}'"),
        }
    }

    /// All eight problems in presentation order.
    pub fn all() -> Vec<ProblemConfig> {
        let mut out = Vec::new();
        for criterion in [CriterionConfig::D, CriterionConfig::C] {
            for restriction in [RestrictionConfig::MtdCap, RestrictionConfig::TherapeuticWindow] {
                for space in [SpaceKind::Continuous, SpaceKind::Discrete] {
                    out.push(ProblemConfig { criterion, restriction, space });
                }
            }
        }
        // Reorder to I, I', II, II', III, III', IV, IV'.
        out.sort_by_key(|p| {
            let base = match (p.criterion, p.restriction) {
                (CriterionConfig::D, RestrictionConfig::MtdCap) => 0,
                (CriterionConfig::D, RestrictionConfig::TherapeuticWindow) => 1,
                (CriterionConfig::C, RestrictionConfig::MtdCap) => 2,
                (CriterionConfig::C, RestrictionConfig::TherapeuticWindow) => 3,
            };
            (base, p.space == SpaceKind::Discrete)
        });
        out
    }
}

/// Optimizer overrides; unset fields take the standard defaults.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct PsoOverrides {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub swarm_size: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_iters: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cognitive: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub social: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub w_start: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub w_end: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub relaxation: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub restarts: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stall_iters: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rel_tol: Option<f64>,
}

impl PsoOverrides {
    /// Materializes a full optimizer configuration. Seed precedence:
    /// explicit override argument, then the config file, then the
    /// `LORD_SEED` environment variable, then the built-in default.
    pub fn to_config(self, seed_override: Option<u64>) -> Result<PsoConfig> {
        let mut cfg = PsoConfig::default();
        if let Some(v) = self.swarm_size {
            cfg.swarm_size = v;
        }
        if let Some(v) = self.max_iters {
            cfg.max_iters = v;
        }
        if let Some(v) = self.cognitive {
            cfg.cognitive = v;
        }
        if let Some(v) = self.social {
            cfg.social = v;
        }
        if let Some(v) = self.w_start {
            cfg.inertia.w_start = v;
        }
        if let Some(v) = self.w_end {
            cfg.inertia.w_end = v;
        }
        if let Some(v) = self.relaxation {
            cfg.inertia.relaxation = v;
        }
        if let Some(v) = self.restarts {
            cfg.restarts = v;
        }
        if let Some(v) = self.stall_iters {
            cfg.stall_iters = v;
        }
        if let Some(v) = self.rel_tol {
            cfg.rel_tol = v;
        }
        cfg.seed = match (seed_override, self.seed) {
            (Some(s), _) => s,
            (None, Some(s)) => s,
            (None, None) => match std::env::var(SEED_ENV_VAR) {
                Ok(raw) => raw
                    .trim()
                    .parse::<u64>()
                    .with_context(|| format!("{SEED_ENV_VAR} must be an unsigned integer"))?,
                Err(_) => DEFAULT_SEED,
            },
        };
        cfg.validate().map_err(|e| anyhow::anyhow!("{e}"))?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReferencesConfig {
    /// Space of the D-efficiency anchor (the MTD-capped D-optimal problem).
    #[serde(default = "default_ref_space")]
    pub d: SpaceKind,
    /// Space of the c-efficiency anchor (the MTD-capped c-optimal problem).
    #[serde(default = "default_ref_space")]
    pub c: SpaceKind,
}

fn default_ref_space() -> SpaceKind {
    SpaceKind::Continuous
}

impl Default for ReferencesConfig {
    fn default() -> Self {
        ReferencesConfig { d: SpaceKind::Continuous, c: SpaceKind::Continuous }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OutputFormat {
    Json,
    Csv,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "default_output_dir")]
    pub dir: PathBuf,
    #[serde(default = "default_formats")]
    pub formats: Vec<OutputFormat>,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("reports")
}

fn default_formats() -> Vec<OutputFormat> {
    vec![OutputFormat::Json]
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig { dir: PathBuf::from("reports"), formats: vec![OutputFormat::Json] }
    }
}

/// A validated, fully resolved run plan.
#[derive(Debug, Clone)]
pub struct ResolvedRun {
    pub scenario: Option<Scenario>,
    pub theta: ThetaParams,
    pub gamma: f64,
    pub mined: MinedConfig,
    pub grid: Vec<f64>,
    pub interval: (f64, f64),
    pub problems: Vec<ProblemConfig>,
    pub pso: PsoConfig,
    pub references: ReferencesConfig,
    pub output: OutputConfig,
}

impl RunConfig {
    /// Reads and fully validates a configuration file.
    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("in config {}", path.display()))
    }

    /// Parses configuration text; parse errors include line/column.
    pub fn parse(text: &str) -> Result<RunConfig> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| anyhow::anyhow!("{e}"))?;
        Ok(cfg)
    }

    /// Serializes back to TOML; `parse(write(c))` equals `c`.
    pub fn write(&self) -> Result<String> {
        toml::to_string_pretty(self).context("serializing config")
    }

    /// Validates and resolves defaults into a run plan.
    pub fn resolve(&self, seed_override: Option<u64>) -> Result<ResolvedRun> {
        let (scenario, theta) = match (&self.scenario, &self.theta) {
            (Some(_), Some(_)) => bail!("specify either `scenario` or `theta`, not both"),
            (None, None) => bail!("one of `scenario` or `theta` is required"),
            (Some(name), None) => {
                let s: Scenario = name.parse().map_err(|e| anyhow::anyhow!("{e}"))?;
                (Some(s), s.theta())
            }
            (None, Some(a)) => {
                (None, ThetaParams::from_array(*a).map_err(|e| anyhow::anyhow!("{e}"))?)
            }
        };
        if !(self.gamma.is_finite() && self.gamma > 0.0 && self.gamma < 1.0) {
            bail!("gamma = {} must lie strictly inside (0, 1)", self.gamma);
        }
        self.mined.to_definition().validate().map_err(|e| anyhow::anyhow!("{e}"))?;

        let to_log = |doses: &[f64]| -> Result<Vec<f64>> {
            if self.log_scale {
                return Ok(doses.to_vec());
            }
            doses
                .iter()
                .map(|&d| {
                    if d <= 0.0 {
                        bail!("raw-scale dose {d} must be positive to take its logarithm")
                    } else {
                        Ok(d.ln())
                    }
                })
                .collect()
        };
        let grid = to_log(self.grid.as_deref().unwrap_or(&standard_grid()))?;
        lord_core::DoseSpace::grid(grid.clone()).map_err(|e| anyhow::anyhow!("{e}"))?;
        let interval = match &self.interval {
            Some([lo, hi]) => {
                let v = to_log(&[*lo, *hi])?;
                (v[0], v[1])
            }
            None => (grid[0], *grid.last().unwrap()),
        };
        lord_core::DoseSpace::interval(interval.0, interval.1)
            .map_err(|e| anyhow::anyhow!("{e}"))?;

        Ok(ResolvedRun {
            scenario,
            theta,
            gamma: self.gamma,
            mined: self.mined,
            grid,
            interval,
            problems: self.problems.clone(),
            pso: self.pso.to_config(seed_override)?,
            references: self.references,
            output: self.output.clone(),
        })
    }
}
