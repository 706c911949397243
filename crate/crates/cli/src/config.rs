use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use conserv_core::engine::{Granularity, Mode, DEFAULT_GAMMA};
use conserv_core::problems::{ProblemKind, ProblemParams};

use crate::{CliError, Result};

/// Everything that determines a run. Read from a JSON document; command-line
/// flags override individual fields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub problem: ProblemKind,
    pub instance: ProblemParams,
    pub mode: Mode,
    /// Trigger probability of each delay register in async mode.
    pub p: f64,
    pub granularity: Granularity,
    pub gamma: f64,
    pub seed: u64,
    pub tol: f64,
    pub max_iters: u64,
    /// Fill the oracle-residual column (needs a reference fixed point).
    pub reference: bool,
    /// Fill the objective column.
    pub objective: bool,
    pub out: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            problem: ProblemKind::LassoHuber,
            instance: ProblemParams::default(),
            mode: Mode::Sync,
            p: 0.1,
            granularity: Granularity::Coordinate,
            gamma: DEFAULT_GAMMA,
            seed: 0,
            tol: 1e-9,
            max_iters: 1_000_000,
            reference: false,
            objective: false,
            out: PathBuf::from("out"),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
            path: path.to_owned(),
            source,
        })?;
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.p > 0.0 && self.p <= 1.0) {
            return Err(CliError::Config(format!("`p` must lie in (0, 1], got {}", self.p)));
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(CliError::Config(format!("`gamma` must lie in (0, 1], got {}", self.gamma)));
        }
        if !(self.tol > 0.0 && self.tol.is_finite()) {
            return Err(CliError::Config(format!("`tol` must be finite and > 0, got {}", self.tol)));
        }
        Ok(())
    }
}
