//! TOML run configuration.
//!
//! ```toml
//! schema_version = 1
//! seed = 2024
//!
//! [chain]
//! antennas = [4, 4, 4, 4]     # source, relays..., destination
//! streams = 4
//! alpha = 0.4                 # transmit-side correlation, one value or one per hop
//! beta = 0.0                  # receive-side correlation, one value or one per hop
//! sigma_e_sq = 0.004
//! noise_var = 1.0             # optional, default 1
//!
//! [design]
//! snr_db = 20.0
//! objectives = ["sum-mse", "mutual-info", "max-mse"]
//! kind = "robust"             # optional: robust | estimated-only
//!
//! [sweep]
//! snr_db = [15.0, 20.0, 25.0, 30.0]
//! trials = 500
//! symbols_per_trial = 2000    # payload bits per stream per trial
//! output = "ber.csv"          # optional
//! designs = [
//!     { kind = "robust", objective = "sum-mse" },
//!     { kind = "estimated-only", objective = "mutual-info" },
//! ]
//! ```

use std::path::{Path, PathBuf};

use af_relay::sim::{ChainTemplate, DesignKind, DesignSpec, SimConfig};
use af_relay::Objective;
use serde::{Deserialize, Serialize};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    pub seed: u64,
    pub chain: ChainSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub design: Option<DesignSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSection>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainSection {
    pub antennas: Vec<usize>,
    pub streams: usize,
    pub alpha: PerHop,
    pub beta: PerHop,
    pub sigma_e_sq: f64,
    #[serde(default = "unit_noise")]
    pub noise_var: f64,
}

fn unit_noise() -> f64 {
    1.0
}

/// A value shared by all hops or listed hop by hop.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged, expecting = "a number or a list with one number per hop")]
pub enum PerHop {
    Same(f64),
    Each(Vec<f64>),
}

impl PerHop {
    fn expand(&self, hops: usize, key: &str) -> Result<Vec<f64>, String> {
        match self {
            PerHop::Same(v) => Ok(vec![*v; hops]),
            PerHop::Each(v) if v.len() == hops => Ok(v.clone()),
            PerHop::Each(v) => Err(format!("{key}: expected {hops} entries (one per hop), got {}", v.len())),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DesignSection {
    pub snr_db: f64,
    pub objectives: Vec<Objective>,
    #[serde(default = "robust")]
    pub kind: DesignKind,
}

fn robust() -> DesignKind {
    DesignKind::Robust
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub snr_db: Vec<f64>,
    pub trials: usize,
    pub symbols_per_trial: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    pub designs: Vec<DesignEntry>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DesignEntry {
    pub kind: DesignKind,
    pub objective: Objective,
}

impl RunConfig {
    /// Parses and validates a configuration document.
    pub fn parse(text: &str) -> Result<Self, String> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| e.to_string())?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("cannot read {}: {e}", path.display()))?;
        Self::parse(&text).map_err(|e| format!("{}: {e}", path.display()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration is always serializable")
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(format!(
                "schema_version: unsupported version {} (this build reads {SCHEMA_VERSION})",
                self.schema_version
            ));
        }
        let chain = &self.chain;
        if chain.antennas.len() < 2 {
            return Err("chain.antennas: need at least a source and a destination".into());
        }
        if chain.antennas.contains(&0) {
            return Err("chain.antennas: every node needs at least one antenna".into());
        }
        let min_antennas = *chain.antennas.iter().min().unwrap();
        if chain.streams == 0 || chain.streams > min_antennas {
            return Err(format!("chain.streams: must be between 1 and {min_antennas}, got {}", chain.streams));
        }
        if !(0.0..1.0).contains(&chain.sigma_e_sq) {
            return Err(format!("chain.sigma_e_sq: must lie in [0, 1), got {}", chain.sigma_e_sq));
        }
        if !(chain.noise_var > 0.0 && chain.noise_var.is_finite()) {
            return Err(format!("chain.noise_var: must be positive, got {}", chain.noise_var));
        }
        self.template()?;
        if let Some(d) = &self.design {
            if d.objectives.is_empty() {
                return Err("design.objectives: list is empty".into());
            }
            if !d.snr_db.is_finite() {
                return Err("design.snr_db: must be finite".into());
            }
        }
        if let Some(s) = &self.sweep {
            if s.snr_db.is_empty() || s.snr_db.iter().any(|v| !v.is_finite()) {
                return Err("sweep.snr_db: need at least one finite value".into());
            }
            if s.trials == 0 {
                return Err("sweep.trials: must be at least 1".into());
            }
            if s.symbols_per_trial == 0 || !s.symbols_per_trial.is_multiple_of(2) {
                return Err(format!("sweep.symbols_per_trial: must be positive and even, got {}", s.symbols_per_trial));
            }
            if s.designs.is_empty() {
                return Err("sweep.designs: list is empty".into());
            }
        }
        Ok(())
    }

    pub fn template(&self) -> Result<ChainTemplate, String> {
        let c = &self.chain;
        let hops = c.antennas.len() - 1;
        let alpha = c.alpha.expand(hops, "chain.alpha")?;
        let beta = c.beta.expand(hops, "chain.beta")?;
        for (key, values) in [("chain.alpha", &alpha), ("chain.beta", &beta)] {
            if let Some(v) = values.iter().find(|v| !(0.0..1.0).contains(*v)) {
                return Err(format!("{key}: correlation must lie in [0, 1), got {v}"));
            }
        }
        Ok(ChainTemplate {
            antennas: c.antennas.clone(),
            n_streams: c.streams,
            corr_alpha: alpha,
            corr_beta: beta,
            sigma_e_sq: c.sigma_e_sq,
            noise_var: c.noise_var,
        })
    }

    pub fn sim_config(&self) -> Result<SimConfig, String> {
        let sweep = self.sweep.as_ref().ok_or("missing [sweep] section")?;
        Ok(SimConfig {
            template: self.template()?,
            snr_grid_db: sweep.snr_db.clone(),
            trials: sweep.trials,
            symbols_per_trial: sweep.symbols_per_trial,
            seed: self.seed,
            designs: sweep.designs.iter().map(|d| DesignSpec::new(d.kind, d.objective)).collect(),
        })
    }
}
