//! TOML run configuration.
//!
//! Every numeric default lives in `[defaults]`; command sections only name
//! what they run and may override the grid or replicate count.

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use evclt_core::{
    ConditionId, DesignSequence, EVModelSpec, ExperimentConfig, TestKind, Thresholds, VarianceSource, Verdict,
    VerdictRule,
};

pub const SEED_ENV: &str = "EVCLT_SEED";

fn default_seed() -> u64 {
    42
}
fn default_grid() -> Vec<usize> {
    vec![50, 100, 200, 500, 1000, 2000, 5000, 10000]
}
fn default_replicates() -> usize {
    1000
}
fn default_variance_source() -> VarianceSource {
    VarianceSource::True
}
fn default_mc_draws() -> u64 {
    1_000_000
}
fn default_r() -> Vec<f64> {
    vec![0.1, 0.5, 1.0]
}
fn default_agreement_se() -> f64 {
    4.0
}
fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Defaults {
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_grid")]
    pub n_grid: Vec<usize>,
    #[serde(default = "default_replicates")]
    pub replicates: usize,
    #[serde(default = "default_variance_source")]
    pub variance_source: VarianceSource,
    #[serde(default = "default_mc_draws")]
    pub mc_draws: u64,
    #[serde(default = "default_r")]
    pub lindeberg_r: Vec<f64>,
    #[serde(default = "default_agreement_se")]
    pub agreement_se: f64,
    #[serde(default)]
    pub thresholds: Thresholds,
    #[serde(default)]
    pub verdict: VerdictRule,
}

impl Default for Defaults {
    fn default() -> Self {
        Self {
            seed: default_seed(),
            n_grid: default_grid(),
            replicates: default_replicates(),
            variance_source: default_variance_source(),
            mc_draws: default_mc_draws(),
            lindeberg_r: default_r(),
            agreement_se: default_agreement_se(),
            thresholds: Thresholds::default(),
            verdict: VerdictRule::default(),
        }
    }
}

fn default_conditions() -> Vec<ConditionId> {
    vec![
        ConditionId::LiuChenBeta,
        ConditionId::C6,
        ConditionId::C7,
        ConditionId::ThetaConsistency,
        ConditionId::C17,
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiagnoseSection {
    #[serde(default = "default_conditions")]
    pub conditions: Vec<ConditionId>,
    #[serde(default = "default_true")]
    pub hierarchy: bool,
    #[serde(default)]
    pub petrov: bool,
    #[serde(default)]
    pub n_grid: Option<Vec<usize>>,
    /// Expected verdicts; any mismatch makes the command fail.
    #[serde(default)]
    pub expect: BTreeMap<ConditionId, Verdict>,
}

impl Default for DiagnoseSection {
    fn default() -> Self {
        Self {
            conditions: default_conditions(),
            hierarchy: true,
            petrov: false,
            n_grid: None,
            expect: BTreeMap::new(),
        }
    }
}

fn default_tests() -> Vec<TestKind> {
    vec![TestKind::BetaClt]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateSection {
    #[serde(default = "default_tests")]
    pub tests: Vec<TestKind>,
    #[serde(default)]
    pub n_grid: Option<Vec<usize>>,
    #[serde(default)]
    pub replicates: Option<usize>,
    #[serde(default)]
    pub variance_source: Option<VarianceSource>,
}

impl Default for SimulateSection {
    fn default() -> Self {
        Self {
            tests: default_tests(),
            n_grid: None,
            replicates: None,
            variance_source: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum LindebergChoice {
    #[default]
    Quadrature,
    MonteCarlo,
    Both,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct LindebergSection {
    #[serde(default)]
    pub r: Option<Vec<f64>>,
    #[serde(default)]
    pub method: LindebergChoice,
    #[serde(default)]
    pub n_grid: Option<Vec<usize>>,
    #[serde(default)]
    pub mc_draws: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct CounterexampleSection {
    #[serde(default)]
    pub n_grid: Option<Vec<usize>>,
    #[serde(default)]
    pub replicates: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub defaults: Defaults,
    pub design: DesignSequence,
    #[serde(default)]
    pub model: Option<EVModelSpec>,
    #[serde(default)]
    pub diagnose: DiagnoseSection,
    #[serde(default)]
    pub simulate: SimulateSection,
    #[serde(default)]
    pub lindeberg: LindebergSection,
    #[serde(default)]
    pub counterexample: CounterexampleSection,
}

impl RunConfig {
    /// Reads and parses the file, then applies the seed override.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let mut cfg: RunConfig = toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        if let Ok(v) = std::env::var(SEED_ENV) {
            cfg.defaults.seed = v
                .trim()
                .parse()
                .with_context(|| format!("{SEED_ENV}={v:?} is not an unsigned 64-bit integer"))?;
        }
        Ok(cfg)
    }

    pub fn model(&self) -> Result<&EVModelSpec> {
        match &self.model {
            Some(m) => Ok(m),
            None => bail!("this command needs a [model] section"),
        }
    }

    pub fn experiment(&self, tests: Vec<TestKind>, n_grid: &Option<Vec<usize>>, replicates: Option<usize>) -> Result<ExperimentConfig> {
        let d = &self.defaults;
        Ok(ExperimentConfig {
            design: self.design,
            model: *self.model()?,
            n_grid: n_grid.clone().unwrap_or_else(|| d.n_grid.clone()),
            replicates: replicates.unwrap_or(d.replicates),
            seed: d.seed,
            variance_source: self.simulate.variance_source.unwrap_or(d.variance_source),
            tests,
            thresholds: d.thresholds,
            verdict_rule: d.verdict,
        })
    }

    /// Canonical JSON of the resolved configuration and its SHA-256.
    pub fn canonical(&self) -> Result<(String, String)> {
        let json = serde_json::to_string(self)?;
        let hash = hex::encode(Sha256::digest(json.as_bytes()));
        Ok((json, hash))
    }
}
