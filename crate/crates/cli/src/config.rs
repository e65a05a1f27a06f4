use std::path::{Path, PathBuf};

use diffcontact::contact::ContactVariant;
use diffcontact::learn::FitOptions;
use diffcontact::plan::PlanOptions;
use diffcontact::sim::{DatasetOptions, SimOptions, SCHEMA_VERSION};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

/// Settings shared by every command. Loaded from `--config`, then overridden
/// by command-line flags. `sim` is copied into the dataset, fit and plan
/// sections so one set of integrator settings drives every stage.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    pub preset: Option<String>,
    pub seed: u64,
    pub out: PathBuf,
    /// Standard deviation of Gaussian noise added to a dataset before fitting.
    pub noise_sigma: f64,
    pub sim: SimOptions,
    pub dataset: DatasetOptions,
    pub fit: FitOptions,
    pub plan: PlanOptions,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            schema_version: SCHEMA_VERSION,
            preset: None,
            seed: 0,
            out: PathBuf::from("out"),
            noise_sigma: 0.0,
            sim: SimOptions::default(),
            dataset: DatasetOptions::default(),
            fit: FitOptions::default(),
            plan: PlanOptions::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::MissingInput(format!("cannot read config {}: {e}", path.display())))?;
        let c: RunConfig = serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("config {}: {e}", path.display())))?;
        if c.schema_version != SCHEMA_VERSION {
            return Err(CliError::Config(format!(
                "config schema {} is not supported (expected {SCHEMA_VERSION})",
                c.schema_version
            )));
        }
        Ok(c)
    }

    /// Pushes the shared simulation settings into every stage.
    pub fn sync_sim(&mut self) {
        self.dataset.sim = self.sim;
        self.fit.sim = self.sim;
        self.plan.sim = self.sim;
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.sim.validate()?;
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(CliError::Config(format!("noise sigma must be nonnegative, got {}", self.noise_sigma)));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum VariantArg {
    Cm,
    Cmr,
}

/// Contact variant from `--variant` and `--epsilon`. An epsilon on its own
/// selects CMr; an epsilon with `cm` is rejected.
pub fn variant(current: ContactVariant, v: Option<VariantArg>, epsilon: Option<f64>) -> Result<ContactVariant, CliError> {
    let current_eps = match current {
        ContactVariant::Cmr { epsilon } => Some(epsilon),
        ContactVariant::Cm => None,
    };
    match (v, epsilon) {
        (None, None) => Ok(current),
        (Some(VariantArg::Cm), None) => Ok(ContactVariant::Cm),
        (Some(VariantArg::Cm), Some(_)) => Err(CliError::Config("--epsilon only applies to --variant cmr".into())),
        (Some(VariantArg::Cmr), eps) | (None, eps @ Some(_)) => Ok(ContactVariant::Cmr {
            epsilon: eps.or(current_eps).unwrap_or(ContactVariant::DEFAULT_EPSILON),
        }),
    }
}
