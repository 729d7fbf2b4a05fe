//! Run configuration: a TOML document whose every dotted key can be
//! overridden from the command line.

use crate::error::{Error, Result};
use crate::hyper::HyperConfig;
use crate::model::Model;
use crate::predictive::PredictiveMode;
use crate::prior::Decay;
use crate::proposals::{FixedDimStrategy, ParamFamily, ProposalConfig};
use crate::rjmcmc::LinkStrategy;
use crate::trace::Schedule;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::PathBuf;

/// Environment variable naming the default output directory.
pub const OUTPUT_DIR_ENV: &str = "DDCRP_OUTPUT_DIR";
const FALLBACK_OUTPUT_DIR: &str = "ddcrp-out";

/// Preliminary-run grid for proposal standard deviations.
pub const DEFAULT_TUNING_GRID: [f64; 6] = [0.05, 0.10, 0.25, 0.50, 1.0, 2.0];

fn one() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    #[serde(default = "one")]
    pub chains: usize,
    pub data: DataConfig,
    pub model: Model,
    pub prior: PriorConfig,
    pub sampler: SamplerConfig,
    #[serde(default)]
    pub hyper: HyperConfig,
    #[serde(default)]
    pub tune: TuneConfig,
    #[serde(default)]
    pub predict: PredictConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

/// Where observations and distances come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DataConfig {
    /// CSV with a `y` column and optionally an `x` covariate column, plus
    /// optionally a headerless square distance CSV. Exactly one distance
    /// source must be present.
    Csv {
        path: PathBuf,
        #[serde(default)]
        distances: Option<PathBuf>,
    },
    /// Poisson mixture with Gaussian covariates.
    Simulate(Scenario),
    /// A dataset shipped with the crate.
    Bundled { name: String },
}

/// Poisson clustering scenario: equal-sized groups with covariates
/// `Normal(means[k], sd^2)` and counts `Poisson(rates[k])`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub n: usize,
    pub means: Vec<f64>,
    pub sd: f64,
    pub rates: Vec<f64>,
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        if self.means.is_empty() || self.means.len() != self.rates.len() {
            return Err(Error::Config(format!(
                "scenario needs matching non-empty means and rates, got {} and {}",
                self.means.len(),
                self.rates.len()
            )));
        }
        if self.n == 0 || !(self.sd >= 0.0) || self.rates.iter().any(|r| !(*r > 0.0)) {
            return Err(Error::Config(
                "scenario needs n > 0, sd >= 0 and positive rates".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriorConfig {
    pub decay: Decay,
    /// Initial (or fixed) concentration.
    pub alpha: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SamplerKind {
    Gibbs,
    Rjmcmc,
}

/// Initial link configuration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitKind {
    /// A draw from the ddCRP prior.
    #[default]
    Prior,
    /// Every point in its own cluster.
    SelfLinks,
}

fn default_link() -> LinkStrategy {
    LinkStrategy::Prior
}

fn default_birth() -> ProposalConfig {
    ProposalConfig::new(ParamFamily::PriorDraw)
}

fn default_fixed_dim() -> FixedDimStrategy {
    FixedDimStrategy::NoUpdate
}

fn default_param_step() -> f64 {
    0.5
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplerConfig {
    pub kind: SamplerKind,
    pub iterations: usize,
    pub burn_in: usize,
    #[serde(default = "one")]
    pub thinning: usize,
    #[serde(default)]
    pub init: InitKind,
    /// Gibbs: visit observations in a random order each sweep.
    #[serde(default)]
    pub random_scan: bool,
    #[serde(default = "default_link")]
    pub link: LinkStrategy,
    #[serde(default = "default_birth")]
    pub birth: ProposalConfig,
    #[serde(default = "default_fixed_dim")]
    pub fixed_dim: FixedDimStrategy,
    #[serde(default = "default_param_step")]
    pub param_step: f64,
    #[serde(default = "default_true")]
    pub adapt_param_step: bool,
}

impl SamplerConfig {
    pub fn schedule(&self) -> Schedule {
        Schedule {
            iterations: self.iterations,
            burn_in: self.burn_in,
            thinning: self.thinning,
        }
    }
}

fn default_grid() -> Vec<f64> {
    DEFAULT_TUNING_GRID.to_vec()
}

fn default_tune_samples() -> usize {
    50_000
}

fn default_tune_burn_in() -> usize {
    5_000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TuneConfig {
    /// Birth proposal standard deviations.
    #[serde(default = "default_grid")]
    pub grid: Vec<f64>,
    /// Resample proposal standard deviations; defaults to `grid`.
    #[serde(default)]
    pub resample_grid: Option<Vec<f64>>,
    /// Post-burn-in iterations of each preliminary chain.
    #[serde(default = "default_tune_samples")]
    pub samples: usize,
    #[serde(default = "default_tune_burn_in")]
    pub burn_in: usize,
}

impl Default for TuneConfig {
    fn default() -> Self {
        Self {
            grid: default_grid(),
            resample_grid: None,
            samples: default_tune_samples(),
            burn_in: default_tune_burn_in(),
        }
    }
}

fn default_mode() -> PredictiveMode {
    PredictiveMode::Sequential
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredictConfig {
    #[serde(default = "default_mode")]
    pub mode: PredictiveMode,
    /// Covariate values of the new points (needs an `x` column).
    #[serde(default)]
    pub x_new: Vec<f64>,
    /// Headerless CSV of `m` rows of `n + m` distances, in place of `x_new`.
    #[serde(default)]
    pub distances_new: Option<PathBuf>,
    #[serde(default = "one")]
    pub draws_per_sample: usize,
}

impl Default for PredictConfig {
    fn default() -> Self {
        Self {
            mode: default_mode(),
            x_new: Vec::new(),
            distances_new: None,
            draws_per_sample: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default)]
    pub dir: Option<PathBuf>,
}

impl RunConfig {
    /// Parse TOML text, apply `key = value` overrides, and validate.
    pub fn from_toml_with_overrides(text: &str, overrides: &[(String, String)]) -> Result<Self> {
        let mut table: toml::Table =
            toml::from_str(text).map_err(|e| Error::Config(format!("invalid TOML: {}", e.message())))?;
        for (key, value) in overrides {
            apply_override(&mut table, key, value)?;
        }
        let cfg: RunConfig = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        Self::from_toml_with_overrides(text, &[])
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(format!("cannot serialise config: {e}")))
    }

    pub fn validate(&self) -> Result<()> {
        if self.chains == 0 {
            return Err(Error::Config("chains must be at least 1".into()));
        }
        let s = &self.sampler;
        if s.iterations == 0 {
            return Err(Error::Config("iterations must be positive".into()));
        }
        if s.burn_in >= s.iterations {
            return Err(Error::Config(format!(
                "burn_in {} must be less than iterations {}",
                s.burn_in, s.iterations
            )));
        }
        s.schedule().validate()?;
        self.model.validate()?;
        self.prior.decay.validate()?;
        if !(self.prior.alpha > 0.0 && self.prior.alpha.is_finite()) {
            return Err(Error::Config(format!(
                "concentration must be positive, got {}",
                self.prior.alpha
            )));
        }
        self.hyper.validate(&self.prior.decay)?;
        if s.kind == SamplerKind::Rjmcmc {
            s.birth.validate()?;
            s.fixed_dim.validate()?;
            if !(s.param_step >= 0.0 && s.param_step.is_finite()) {
                return Err(Error::Config(format!(
                    "param_step must be non-negative, got {}",
                    s.param_step
                )));
            }
        }
        if let DataConfig::Simulate(sc) = &self.data {
            sc.validate()?;
        }
        if self.tune.grid.is_empty() || self.tune.resample_grid.as_ref().is_some_and(|g| g.is_empty()) {
            return Err(Error::Config("tuning grid must be non-empty".into()));
        }
        if self.tune.samples == 0 {
            return Err(Error::Config("tune.samples must be positive".into()));
        }
        if self.predict.draws_per_sample == 0 {
            return Err(Error::Config("predict.draws_per_sample must be at least 1".into()));
        }
        Ok(())
    }

    /// Hex SHA-256 of the canonical JSON form, excluding the output
    /// location.
    pub fn digest(&self) -> String {
        let mut c = self.clone();
        c.output = OutputConfig::default();
        let bytes = serde_json::to_vec(&c).expect("config serialises");
        hex::encode(Sha256::digest(&bytes))
    }

    /// Output directory: the configured one, else the environment default,
    /// else `ddcrp-out`.
    pub fn output_dir(&self) -> PathBuf {
        self.output.dir.clone().unwrap_or_else(|| {
            std::env::var_os(OUTPUT_DIR_ENV)
                .map(PathBuf::from)
                .unwrap_or_else(|| PathBuf::from(FALLBACK_OUTPUT_DIR))
        })
    }
}

/// Set `key` (dotted path) in `table`. The value is parsed as a TOML value
/// and taken as a string if that fails.
pub fn apply_override(table: &mut toml::Table, key: &str, value: &str) -> Result<()> {
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(Error::Config(format!("invalid override key '{key}'")));
    }
    let parsed = toml::from_str::<toml::Table>(&format!("v = {value}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(value.to_string()));
    let mut cur = table;
    for p in &parts[..parts.len() - 1] {
        let entry = cur
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("override '{key}': '{p}' is not a table")))?;
    }
    cur.insert(parts[parts.len() - 1].to_string(), parsed);
    Ok(())
}
