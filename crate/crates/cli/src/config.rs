//! Run configuration schema.

use serde::{Deserialize, Serialize};

use nelson_fk::analysis::RefinementRule;
use nelson_fk::fock::OneBosonVector;
use nelson_fk::model::{Model, ModelSpec};
use nelson_fk::pathint::{Schedule, TimeProfile, TimeScale};

use crate::error::CliError;

/// Top-level JSON document accepted by `run` and the variant subcommands.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelSpec,
    pub max_bosons: usize,
    pub experiment: Experiment,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_workers")]
    pub workers: usize,
    #[serde(default = "default_output")]
    pub output_dir: String,
    #[serde(default)]
    pub limits: Limits,
}

fn default_workers() -> usize {
    1
}

fn default_output() -> String {
    "out".into()
}

/// Resource caps checked before any computation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Limits {
    #[serde(default = "default_basis_cap")]
    pub max_basis: usize,
    #[serde(default = "default_memory")]
    pub max_memory_bytes: u64,
}

fn default_basis_cap() -> usize {
    nelson_fk::fock::DEFAULT_BASIS_CAP
}

fn default_memory() -> u64 {
    4 << 30
}

impl Default for Limits {
    fn default() -> Self {
        Self { max_basis: default_basis_cap(), max_memory_bytes: default_memory() }
    }
}

/// Time profile of the propagator in flow and evolution checks.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ProfileConfig {
    /// `f(t) = t`, `g± = −v`.
    #[default]
    Nelson,
    /// `g±(t) = −(1 + ramp±·t)·v` with the given time scale.
    Ramped { scale: TimeScale, minus_ramp: f64, plus_ramp: f64 },
    /// Explicit schedules.
    Custom { scale: TimeScale, g_minus: Schedule, g_plus: Schedule },
}

impl ProfileConfig {
    pub fn build(&self, model: &Model) -> Result<TimeProfile, CliError> {
        let minus_v = || OneBosonVector::new(model.coupling_vector().as_slice().iter().map(|c| -c).collect());
        let p = match self {
            ProfileConfig::Nelson => TimeProfile::nelson(model),
            ProfileConfig::Ramped { scale, minus_ramp, plus_ramp } => TimeProfile::new(
                *scale,
                Schedule { base: minus_v(), ramp: *minus_ramp },
                Schedule { base: minus_v(), ramp: *plus_ramp },
            )?,
            ProfileConfig::Custom { scale, g_minus, g_plus } => TimeProfile::new(*scale, g_minus.clone(), g_plus.clone())?,
        };
        if p.g_minus.base.len() != model.num_modes() {
            return Err(CliError::Usage(format!(
                "experiment.profile: schedules have {} modes, the model has {}",
                p.g_minus.base.len(),
                model.num_modes()
            )));
        }
        Ok(p)
    }
}

/// Source of the operator audited by `positivity-audit`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AuditSource {
    Oracle,
    Mc,
}

/// Estimator used by `renorm-scan`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum RenormEstimatorConfig {
    Dense,
    VacuumMc { n_paths: usize, steps: usize },
}

/// Mode of `flow-check`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FlowModeConfig {
    Oracle,
    Mc,
}

/// Experiment variant and its parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Experiment {
    ValidateLevy {
        ks: Vec<Vec<f64>>,
        times: Vec<f64>,
        n_samples: usize,
        #[serde(default = "z_four")]
        z_max: f64,
    },
    BuildHamiltonian {
        momentum: Vec<f64>,
    },
    McRun {
        momentum: Vec<f64>,
        window: [f64; 2],
        n_paths: usize,
        steps: usize,
        #[serde(default)]
        profile: ProfileConfig,
    },
    FkVsOracle {
        momentum: Vec<f64>,
        t: f64,
        n_paths: usize,
        steps: usize,
        #[serde(default = "extra_default")]
        extra_bosons: usize,
        #[serde(default)]
        negative_control: bool,
        #[serde(default = "z_four")]
        z_max: f64,
    },
    PositivityAudit {
        momentum: Vec<f64>,
        t: f64,
        source: AuditSource,
        #[serde(default = "tol_default")]
        tolerance: f64,
        #[serde(default)]
        n_paths: Option<usize>,
        #[serde(default)]
        steps: Option<usize>,
        /// Expected classification; a mismatch exits with status 2.
        #[serde(default)]
        expect: Option<nelson_fk::analysis::Positivity>,
    },
    DispersionScan {
        momenta: Vec<Vec<f64>>,
        #[serde(default)]
        t_power: Option<f64>,
    },
    RenormScan {
        cutoffs: Vec<f64>,
        refinement: RefinementRule,
        momentum: Vec<f64>,
        t: f64,
        estimator: RenormEstimatorConfig,
    },
    TrotterCheck {
        p1: Vec<f64>,
        p2: Vec<f64>,
        theta1: Vec<usize>,
        theta2: Vec<usize>,
        window: [f64; 2],
        n_list: Vec<usize>,
    },
    FlowCheck {
        momentum: Vec<f64>,
        times: [f64; 3],
        mode: FlowModeConfig,
        #[serde(default)]
        profile: ProfileConfig,
        #[serde(default)]
        n_paths: Option<usize>,
        #[serde(default)]
        steps: Option<usize>,
        #[serde(default = "extra_default")]
        extra_bosons: usize,
    },
    EvolutionCheck {
        momentum: Vec<f64>,
        window: [f64; 2],
        deltas: Vec<f64>,
        #[serde(default)]
        profile: ProfileConfig,
        #[serde(default = "order_default")]
        min_order: f64,
    },
}

fn z_four() -> f64 {
    4.0
}

fn extra_default() -> usize {
    6
}

fn tol_default() -> f64 {
    1e-12
}

fn order_default() -> f64 {
    0.9
}

/// Variant names in kebab case, in schema order.
pub const VARIANTS: [&str; 10] = [
    "validate-levy",
    "build-hamiltonian",
    "mc-run",
    "fk-vs-oracle",
    "positivity-audit",
    "dispersion-scan",
    "renorm-scan",
    "trotter-check",
    "flow-check",
    "evolution-check",
];

impl Experiment {
    pub fn kind(&self) -> &'static str {
        match self {
            Experiment::ValidateLevy { .. } => VARIANTS[0],
            Experiment::BuildHamiltonian { .. } => VARIANTS[1],
            Experiment::McRun { .. } => VARIANTS[2],
            Experiment::FkVsOracle { .. } => VARIANTS[3],
            Experiment::PositivityAudit { .. } => VARIANTS[4],
            Experiment::DispersionScan { .. } => VARIANTS[5],
            Experiment::RenormScan { .. } => VARIANTS[6],
            Experiment::TrotterCheck { .. } => VARIANTS[7],
            Experiment::FlowCheck { .. } => VARIANTS[8],
            Experiment::EvolutionCheck { .. } => VARIANTS[9],
        }
    }
}

impl RunConfig {
    /// Parses and validates a JSON document; errors carry the field path.
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: RunConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            CliError::Usage(format!("config field `{path}`: {}", e.into_inner()))
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Checks that need more than the type structure.
    pub fn validate(&self) -> Result<(), CliError> {
        let usage = |m: String| Err(CliError::Usage(m));
        if self.workers == 0 {
            return usage("workers: must be at least 1".into());
        }
        match &self.experiment {
            Experiment::TrotterCheck { theta1, theta2, n_list, .. } => {
                if let Some(i) = theta1.iter().find(|i| theta2.contains(i)) {
                    return usage(format!(
                        "experiment.theta1 and experiment.theta2 overlap at mode {i}; the split must be disjoint"
                    ));
                }
                if n_list.is_empty() {
                    return usage("experiment.n_list: must not be empty".into());
                }
            }
            Experiment::FlowCheck { mode: FlowModeConfig::Mc, n_paths, steps, .. } if n_paths.is_none() || steps.is_none() => {
                return usage("experiment: flow-check in mc mode needs n_paths and steps".into());
            }
            Experiment::PositivityAudit { source: AuditSource::Mc, n_paths, steps, .. }
                if n_paths.is_none() || steps.is_none() =>
            {
                return usage("experiment: positivity-audit from mc needs n_paths and steps".into());
            }
            _ => {}
        }
        Ok(())
    }
}
