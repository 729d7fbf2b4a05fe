//! Parameter proposals for birth moves and fixed-dimensional resampling.
//!
//! Every family returns the drawn parameters together with the log density
//! of the draw in the space it was sampled in (`log_q`) and the log Jacobian
//! of the map from that space to parameter space. The parameter-space
//! density is `log_q - log_jacobian`.
//!
//! Moment-matched families fall back to a prior draw when the cluster data
//! are too few or degenerate. The fallback decision depends only on the
//! cluster statistics and the configuration, so the reverse move replays it
//! exactly.

use crate::error::{Error, Result};
use crate::math::{
    gamma_log_pdf, inverse_gamma_log_pdf, lognormal_log_pdf, normal_log_pdf, sample_gamma,
    sample_inverse_gamma, sample_normal,
};
use crate::model::{ClusterModel, ClusterStats, Params};
use rand::Rng;
use serde::{Deserialize, Serialize};

/// A fixed distribution for the independence proposal, applied to every
/// parameter component.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "dist", rename_all = "kebab-case")]
pub enum FixedDist {
    Gamma { shape: f64, rate: f64 },
    InverseGamma { shape: f64, scale: f64 },
    LogNormal { mu: f64, sigma: f64 },
    Normal { mean: f64, sd: f64 },
}

impl FixedDist {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            FixedDist::Gamma { shape, rate } => shape > 0.0 && rate > 0.0,
            FixedDist::InverseGamma { shape, scale } => shape > 0.0 && scale > 0.0,
            FixedDist::LogNormal { mu, sigma } => mu.is_finite() && sigma > 0.0,
            FixedDist::Normal { mean, sd } => mean.is_finite() && sd > 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid independence distribution {self:?}")))
        }
    }

    pub fn log_pdf(&self, x: f64) -> f64 {
        match *self {
            FixedDist::Gamma { shape, rate } => gamma_log_pdf(x, shape, rate),
            FixedDist::InverseGamma { shape, scale } => inverse_gamma_log_pdf(x, shape, scale),
            FixedDist::LogNormal { mu, sigma } => lognormal_log_pdf(x, mu, sigma),
            FixedDist::Normal { mean, sd } => normal_log_pdf(x, mean, sd),
        }
    }

    pub fn sample<R: Rng>(&self, rng: &mut R) -> f64 {
        match *self {
            FixedDist::Gamma { shape, rate } => sample_gamma(shape, rate, rng),
            FixedDist::InverseGamma { shape, scale } => sample_inverse_gamma(shape, scale, rng),
            FixedDist::LogNormal { mu, sigma } => sample_normal(mu, sigma, rng).exp(),
            FixedDist::Normal { mean, sd } => sample_normal(mean, sd, rng),
        }
    }
}

/// Proposal family for new cluster parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum ParamFamily {
    /// Draw from the model prior.
    #[serde(alias = "prior")]
    PriorDraw,
    /// Draw from a fixed distribution.
    Independence { dist: FixedDist },
    /// `Normal(rho_hat, sigma^2)` around the moment estimate.
    #[serde(alias = "nmm")]
    NormalMm { sigma: f64 },
    /// Inverse gamma fitted to the mean and variance of the cluster data.
    #[serde(alias = "igmm")]
    InverseGammaMm,
    /// `exp(Normal(log rho_hat, sigma^2))`.
    #[serde(alias = "lnmm")]
    LogNormalMm { sigma: f64 },
}

impl ParamFamily {
    pub fn validate(&self) -> Result<()> {
        match *self {
            ParamFamily::NormalMm { sigma } | ParamFamily::LogNormalMm { sigma }
                if !(sigma > 0.0 && sigma.is_finite()) =>
            {
                Err(Error::Config(format!("proposal sigma must be positive, got {sigma}")))
            }
            ParamFamily::Independence { dist } => dist.validate(),
            _ => Ok(()),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            ParamFamily::PriorDraw => "prior",
            ParamFamily::Independence { .. } => "independence",
            ParamFamily::NormalMm { .. } => "nmm",
            ParamFamily::InverseGammaMm => "igmm",
            ParamFamily::LogNormalMm { .. } => "lnmm",
        }
    }

    pub fn sigma(&self) -> Option<f64> {
        match *self {
            ParamFamily::NormalMm { sigma } | ParamFamily::LogNormalMm { sigma } => Some(sigma),
            _ => None,
        }
    }

    /// Copy with the dispersion replaced (no-op for families without one).
    pub fn with_sigma(self, s: f64) -> Self {
        match self {
            ParamFamily::NormalMm { .. } => ParamFamily::NormalMm { sigma: s },
            ParamFamily::LogNormalMm { .. } => ParamFamily::LogNormalMm { sigma: s },
            other => other,
        }
    }
}

pub const DEFAULT_FALLBACK_MIN_SIZE: usize = 2;

fn default_min_size() -> usize {
    DEFAULT_FALLBACK_MIN_SIZE
}

/// A proposal family with its small-sample fallback threshold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProposalConfig {
    #[serde(flatten)]
    pub family: ParamFamily,
    #[serde(default = "default_min_size")]
    pub fallback_min_size: usize,
}

impl ProposalConfig {
    pub fn new(family: ParamFamily) -> Self {
        Self {
            family,
            fallback_min_size: DEFAULT_FALLBACK_MIN_SIZE,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.family.validate()
    }
}

/// What happens to cluster parameters on a fixed-dimensional transfer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "strategy", rename_all = "kebab-case")]
pub enum FixedDimStrategy {
    /// Keep both clusters' parameters; the proposal ratio is one.
    NoUpdate,
    /// Redraw both affected clusters' parameters from moment-matched
    /// families on their new memberships.
    Resample(ProposalConfig),
}

impl FixedDimStrategy {
    pub fn validate(&self) -> Result<()> {
        match self {
            FixedDimStrategy::NoUpdate => Ok(()),
            FixedDimStrategy::Resample(cfg) => match cfg.family {
                ParamFamily::NormalMm { .. }
                | ParamFamily::InverseGammaMm
                | ParamFamily::LogNormalMm { .. } => cfg.validate(),
                other => Err(Error::Config(format!(
                    "resampling needs a moment-matched family, got {}",
                    other.name()
                ))),
            },
        }
    }
}

/// The family that actually produced (or evaluates) a draw after fallback.
#[derive(Debug, Clone, PartialEq)]
pub enum Resolved {
    Prior,
    Independence(FixedDist),
    Normal { centre: Params, sigma: f64 },
    InverseGamma { shape: f64, scale: f64 },
    LogNormal { log_centre: Params, sigma: f64 },
}

impl Resolved {
    pub fn is_fallback(&self) -> bool {
        matches!(self, Resolved::Prior)
    }
}

/// Inverse gamma `(shape, scale)` matched to a data mean and variance:
/// `shape = 2 + mean^2 / var`, `scale = mean (shape - 1)`. `None` when the
/// fit is infeasible.
pub fn inverse_gamma_mm(mean: f64, var: f64) -> Option<(f64, f64)> {
    if !(var > 0.0) {
        return None;
    }
    let shape = 2.0 + mean * mean / var;
    let scale = mean * (shape - 1.0);
    (shape > 2.0 && scale > 0.0 && shape.is_finite() && scale.is_finite()).then_some((shape, scale))
}

/// Resolve the configured family against cluster data, applying fallbacks.
pub fn resolve<M: ClusterModel + ?Sized>(
    model: &M,
    stats: &ClusterStats,
    config: &ProposalConfig,
) -> Resolved {
    match config.family {
        ParamFamily::PriorDraw => Resolved::Prior,
        ParamFamily::Independence { dist } => Resolved::Independence(dist),
        _ if stats.n < config.fallback_min_size => Resolved::Prior,
        ParamFamily::NormalMm { sigma } => match model.moment_estimate(stats) {
            Some(centre) => Resolved::Normal { centre, sigma },
            None => Resolved::Prior,
        },
        ParamFamily::LogNormalMm { sigma } => match model.moment_estimate(stats) {
            Some(est) if est.iter().all(|&v| v > 0.0) => Resolved::LogNormal {
                log_centre: est.iter().map(|v| v.ln()).collect(),
                sigma,
            },
            _ => Resolved::Prior,
        },
        ParamFamily::InverseGammaMm => match (stats.mean(), stats.variance()) {
            (Some(m), Some(v)) => inverse_gamma_mm(m, v)
                .map_or(Resolved::Prior, |(shape, scale)| Resolved::InverseGamma { shape, scale }),
            _ => Resolved::Prior,
        },
    }
}

/// A proposed parameter vector with its density terms.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamDraw {
    pub value: Params,
    /// Log density in the space the draw was made in.
    pub log_q: f64,
    pub log_jacobian: f64,
    pub fired: Resolved,
}

impl ParamDraw {
    /// Log density of `value` in parameter space.
    pub fn log_density(&self) -> f64 {
        self.log_q - self.log_jacobian
    }
}

pub fn sample_resolved<M: ClusterModel + ?Sized, R: Rng>(
    model: &M,
    resolved: Resolved,
    rng: &mut R,
) -> ParamDraw {
    let dim = model.param_dim();
    let value: Params = match &resolved {
        Resolved::Prior => model.prior_sample(rng),
        Resolved::Independence(dist) => (0..dim).map(|_| dist.sample(rng)).collect(),
        Resolved::Normal { centre, sigma } => {
            centre.iter().map(|&c| sample_normal(c, *sigma, rng)).collect()
        }
        Resolved::InverseGamma { shape, scale } => {
            (0..dim).map(|_| sample_inverse_gamma(*shape, *scale, rng)).collect()
        }
        Resolved::LogNormal { log_centre, sigma } => log_centre
            .iter()
            .map(|&c| sample_normal(c, *sigma, rng).exp())
            .collect(),
    };
    let (log_q, log_jacobian) = resolved_log_density(model, &resolved, &value);
    ParamDraw {
        value,
        log_q,
        log_jacobian,
        fired: resolved,
    }
}

/// `(log_q, log_jacobian)` of `rho` under a resolved family.
pub fn resolved_log_density<M: ClusterModel + ?Sized>(
    model: &M,
    resolved: &Resolved,
    rho: &[f64],
) -> (f64, f64) {
    match resolved {
        Resolved::Prior => (model.prior_log_density(rho), 0.0),
        Resolved::Independence(dist) => (rho.iter().map(|&x| dist.log_pdf(x)).sum(), 0.0),
        Resolved::Normal { centre, sigma } => (
            rho.iter()
                .zip(centre)
                .map(|(&x, &c)| point_normal_log_pdf(x, c, *sigma))
                .sum(),
            0.0,
        ),
        Resolved::InverseGamma { shape, scale } => (
            rho.iter()
                .map(|&x| inverse_gamma_log_pdf(x, *shape, *scale))
                .sum(),
            0.0,
        ),
        Resolved::LogNormal { log_centre, sigma } => {
            if rho.iter().any(|&x| !(x > 0.0)) {
                return (f64::NEG_INFINITY, 0.0);
            }
            let log_q = rho
                .iter()
                .zip(log_centre)
                .map(|(&x, &c)| point_normal_log_pdf(x.ln(), c, *sigma))
                .sum();
            (log_q, rho.iter().map(|x| x.ln()).sum())
        }
    }
}

// A zero-width normal is a point mass; its log density is 0 at the centre.
fn point_normal_log_pdf(x: f64, mean: f64, sd: f64) -> f64 {
    if sd == 0.0 {
        if x == mean {
            0.0
        } else {
            f64::NEG_INFINITY
        }
    } else {
        normal_log_pdf(x, mean, sd)
    }
}

/// Propose parameters for a cluster formed from data with statistics `stats`.
pub fn propose_birth_params<M: ClusterModel + ?Sized, R: Rng>(
    model: &M,
    stats: &ClusterStats,
    config: &ProposalConfig,
    rng: &mut R,
) -> ParamDraw {
    sample_resolved(model, resolve(model, stats, config), rng)
}

/// `(log_q, log_jacobian)` of `rho` under the birth proposal for `stats`,
/// with the same fallback as [`propose_birth_params`].
pub fn birth_log_density<M: ClusterModel + ?Sized>(
    model: &M,
    stats: &ClusterStats,
    config: &ProposalConfig,
    rho: &[f64],
) -> (f64, f64) {
    resolved_log_density(model, &resolve(model, stats, config), rho)
}

fn param_space_log_density<M: ClusterModel + ?Sized>(
    model: &M,
    stats: &ClusterStats,
    config: &ProposalConfig,
    rho: &[f64],
) -> f64 {
    let (q, j) = birth_log_density(model, stats, config, rho);
    q - j
}

/// Parameters redrawn for the two clusters touched by a transfer.
#[derive(Debug, Clone, PartialEq)]
pub struct Resampled {
    /// For the cluster the moving set left.
    pub rho_remaining: Params,
    /// For the cluster the moving set joined.
    pub rho_target: Params,
    /// Joint parameter-space log density of the pair.
    pub log_q: f64,
}

/// Draw fresh parameters for the remaining and target clusters from their
/// new memberships.
pub fn propose_resample<M: ClusterModel + ?Sized, R: Rng>(
    model: &M,
    remaining_new: &ClusterStats,
    target_new: &ClusterStats,
    config: &ProposalConfig,
    rng: &mut R,
) -> Resampled {
    let r = propose_birth_params(model, remaining_new, config, rng);
    let t = propose_birth_params(model, target_new, config, rng);
    Resampled {
        log_q: r.log_density() + t.log_density(),
        rho_remaining: r.value,
        rho_target: t.value,
    }
}

/// Parameter-space log density of the reverse resample: the current
/// parameters of the original and target clusters under the families
/// fitted to their current memberships.
pub fn evaluate_resample<M: ClusterModel + ?Sized>(
    model: &M,
    original_old: &ClusterStats,
    target_old: &ClusterStats,
    config: &ProposalConfig,
    rho_original: &[f64],
    rho_target: &[f64],
) -> f64 {
    param_space_log_density(model, original_old, config, rho_original)
        + param_space_log_density(model, target_old, config, rho_target)
}
