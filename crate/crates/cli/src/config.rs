//! Run configuration (TOML) and the fitted-model file (JSON).

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use ergm_vi::inference::PathConfig;
use ergm_vi::vi::{FitConfig, FitResult};
use ergm_vi::{CovariateTable, ModelSpec};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CliError;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    #[serde(default)]
    pub seed: u64,
    pub data: DataConfig,
    pub model: ModelSpec,
    #[serde(default)]
    pub fit: FitConfig,
    #[serde(default)]
    pub inference: InferenceConfig,
    #[serde(default)]
    pub oracle: OracleConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    /// Edge list with header `src,dst`.
    pub edges: PathBuf,
    /// Optional node list with header `node`; row order defines indices.
    #[serde(default)]
    pub nodes: Option<PathBuf>,
    /// Nodal covariates: a `node` column plus one numeric column per attribute.
    #[serde(default)]
    pub nodal_covariates: Option<PathBuf>,
    /// Attribute name to a `src,dst,value` file.
    #[serde(default)]
    pub dyadic_covariates: BTreeMap<String, PathBuf>,
    #[serde(default)]
    pub directed: bool,
    /// Network size when nodes are integer indices and isolates exist.
    #[serde(default)]
    pub n_nodes: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InferenceConfig {
    /// Networks simulated for the covariance correction.
    pub b_sims: usize,
    pub level: f64,
    /// Path-sampling grid intervals.
    pub grid: usize,
    /// Networks per path-sampling node.
    pub draws_per_node: usize,
    /// Posterior predictive networks for `gof`.
    pub gof_sims: usize,
}

impl Default for InferenceConfig {
    fn default() -> Self {
        Self {
            b_sims: 500,
            level: 0.95,
            grid: 20,
            draws_per_node: 20,
            gof_sims: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleConfig {
    pub half_width: f64,
    pub cells: usize,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            half_width: 12.0,
            cells: 200,
        }
    }
}

impl InferenceConfig {
    pub fn path_config(&self, fit: &FitConfig) -> PathConfig {
        PathConfig {
            grid: self.grid,
            draws_per_node: self.draws_per_node,
            sampler: fit.sampler.clone(),
        }
    }
}

/// A parsed configuration together with the SHA-256 of its bytes.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: RunConfig,
    pub hash: String,
    pub base_dir: PathBuf,
}

impl LoadedConfig {
    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }
}

pub fn load_config(path: &Path, seed_override: Option<u64>) -> Result<LoadedConfig, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
    let mut config: RunConfig =
        toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    if config.schema_version != SCHEMA_VERSION {
        return Err(CliError::Config(format!(
            "unsupported schema_version {} (expected {SCHEMA_VERSION})",
            config.schema_version
        )));
    }
    if let Some(s) = seed_override {
        config.seed = s;
    }
    config.fit.seed = config.seed;
    config.fit.sampler.seed = config.seed;
    config
        .fit
        .validate()
        .map_err(|e| CliError::Config(e.to_string()))?;
    let inf = &config.inference;
    if !(0.0..1.0).contains(&inf.level) {
        return Err(CliError::Config(format!(
            "inference.level {} outside [0, 1)",
            inf.level
        )));
    }
    if inf.b_sims < 2 || inf.grid == 0 || inf.draws_per_node < 2 || inf.gof_sims == 0 {
        return Err(CliError::Config(
            "inference requires b_sims >= 2, grid >= 1, draws_per_node >= 2 and gof_sims >= 1"
                .into(),
        ));
    }
    if !(config.oracle.half_width > 0.0) || config.oracle.cells == 0 {
        return Err(CliError::Config(
            "oracle grid must have positive width and cells".into(),
        ));
    }
    let hash = hex::encode(Sha256::digest(text.as_bytes()));
    let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
    Ok(LoadedConfig {
        config,
        hash,
        base_dir,
    })
}

/// Everything needed to reuse a fit without the original inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FittedModelFile {
    pub schema_version: u32,
    pub config_hash: String,
    pub seed: u64,
    pub directed: bool,
    pub node_names: Vec<String>,
    pub edges: Vec<(usize, usize)>,
    pub spec: ModelSpec,
    pub covariates: CovariateTable,
    pub inference: InferenceConfig,
    pub fit: FitResult,
}

impl FittedModelFile {
    pub fn to_json(&self) -> Result<String, CliError> {
        let mut s =
            serde_json::to_string_pretty(self).map_err(|e| CliError::Output(e.to_string()))?;
        s.push('\n');
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            CliError::Data(format!("cannot read fitted model {}: {e}", path.display()))
        })?;
        let f: Self = serde_json::from_str(&text).map_err(|e| {
            CliError::Data(format!("malformed fitted model {}: {e}", path.display()))
        })?;
        if f.schema_version != SCHEMA_VERSION {
            return Err(CliError::Data(format!(
                "fitted model {} has schema_version {} (expected {SCHEMA_VERSION})",
                path.display(),
                f.schema_version
            )));
        }
        Ok(f)
    }
}
