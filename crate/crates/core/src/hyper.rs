//! Updates for the concentration `alpha` and the exponential decay scale `s`.
//!
//! `alpha` is drawn exactly by data augmentation: with `V_i ~ Exp(alpha + R_i)`
//! the normalisers `1 / (alpha + R_i)` cancel and
//!
//! ```text
//! alpha | c, V ~ Gamma(a + n_self, b + sum V_i)      (shape, rate)
//! ```
//!
//! `s` takes a log-normal random-walk Metropolis step. When auxiliaries are
//! supplied the ratio uses them in place of the normalisers.

use crate::error::{Error, Result};
use crate::math::{sample_exponential, sample_gamma, sample_normal};
use crate::partition::Assignments;
use crate::prior::{DdcrpPrior, Decay};
use rand::Rng;
use serde::{Deserialize, Serialize};

/// `Gamma(shape, rate)` prior.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GammaPrior {
    pub shape: f64,
    pub rate: f64,
}

impl GammaPrior {
    pub fn new(shape: f64, rate: f64) -> Self {
        Self { shape, rate }
    }

    pub fn validate(&self, what: &str) -> Result<()> {
        if self.shape > 0.0 && self.rate > 0.0 && self.shape.is_finite() && self.rate.is_finite() {
            Ok(())
        } else {
            Err(Error::Config(format!(
                "{what} prior needs positive shape and rate, got ({}, {})",
                self.shape, self.rate
            )))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HyperConfig {
    pub infer_alpha: bool,
    pub alpha_prior: GammaPrior,
    pub infer_scale: bool,
    pub scale_prior: GammaPrior,
    /// Standard deviation of the log-scale random walk on `s`.
    pub scale_step: f64,
    /// Reuse the `alpha` auxiliaries in the `s` ratio when both are inferred.
    pub joint: bool,
}

impl Default for HyperConfig {
    fn default() -> Self {
        Self {
            infer_alpha: true,
            alpha_prior: GammaPrior::new(1.0, 1.0),
            infer_scale: false,
            scale_prior: GammaPrior::new(1.0, 1.0),
            scale_step: 0.2,
            joint: true,
        }
    }
}

impl HyperConfig {
    /// Both parameters held fixed.
    pub fn fixed() -> Self {
        Self {
            infer_alpha: false,
            ..Self::default()
        }
    }

    pub fn validate(&self, decay: &Decay) -> Result<()> {
        if self.infer_alpha {
            self.alpha_prior.validate("concentration")?;
        }
        if self.infer_scale {
            self.scale_prior.validate("decay scale")?;
            if !(self.scale_step > 0.0 && self.scale_step.is_finite()) {
                return Err(Error::Config(format!(
                    "scale step must be positive, got {}",
                    self.scale_step
                )));
            }
            if decay.scale().is_none() {
                return Err(Error::Unsupported(
                    "decay-scale inference needs exponential decay".into(),
                ));
            }
        }
        Ok(())
    }
}

/// `V_i ~ Exp(alpha + R_i)` for every observation.
pub fn sample_auxiliaries<R: Rng>(prior: &DdcrpPrior, rng: &mut R) -> Vec<f64> {
    prior
        .row_weights()
        .iter()
        .map(|&r| sample_exponential(prior.alpha() + r, rng))
        .collect()
}

/// Result of the augmented `alpha` update.
#[derive(Debug, Clone, PartialEq)]
pub struct AlphaDraw {
    pub alpha: f64,
    pub aux: Vec<f64>,
    /// Posterior shape `a + n_self`.
    pub shape: f64,
    /// Posterior rate `b + sum V`.
    pub rate: f64,
}

/// Draw auxiliaries at the current `alpha`, then a new `alpha` given them.
/// The prior is left unchanged.
pub fn alpha_gibbs_update<R: Rng>(
    c: &Assignments,
    prior: &DdcrpPrior,
    alpha_prior: GammaPrior,
    rng: &mut R,
) -> AlphaDraw {
    let aux = sample_auxiliaries(prior, rng);
    let shape = alpha_prior.shape + c.n_self() as f64;
    let rate = alpha_prior.rate + aux.iter().sum::<f64>();
    AlphaDraw {
        alpha: sample_gamma(shape, rate, rng),
        aux,
        shape,
        rate,
    }
}

/// Log acceptance ratio for moving the decay scale from the prior's current
/// value to `s_new`. With `aux` the augmented ratio is used, otherwise the
/// exact normalisers at the prior's `alpha`.
pub fn scale_log_ratio(
    c: &Assignments,
    prior: &DdcrpPrior,
    s_new: f64,
    scale_prior: GammaPrior,
    aux: Option<&[f64]>,
) -> Result<f64> {
    let s = prior.decay().scale().ok_or_else(|| {
        Error::Unsupported("decay-scale update needs exponential decay".into())
    })?;
    if s_new == s {
        return Ok(0.0);
    }
    let d_sum = prior.linked_distance_sum(c);
    let r_old = prior.row_weights();
    let r_new = prior.row_weights_for(&Decay::Exponential { scale: s_new });
    let base = scale_prior.shape * (s_new / s).ln() - (scale_prior.rate + d_sum) * (s_new - s);
    let normalisers: f64 = match aux {
        Some(v) => -v
            .iter()
            .zip(r_old.iter().zip(&r_new))
            .map(|(vi, (ro, rn))| vi * (rn - ro))
            .sum::<f64>(),
        None => {
            let a = prior.alpha();
            -r_old
                .iter()
                .zip(&r_new)
                .map(|(ro, rn)| ((a + rn) / (a + ro)).ln())
                .sum::<f64>()
        }
    };
    Ok(base + normalisers)
}

/// One log-normal random-walk step on `s`. Returns whether it was accepted;
/// on acceptance the prior's caches are rebuilt.
pub fn scale_mh_update<R: Rng>(
    c: &Assignments,
    prior: &mut DdcrpPrior,
    scale_prior: GammaPrior,
    step: f64,
    aux: Option<&[f64]>,
    rng: &mut R,
) -> Result<bool> {
    let s = prior.decay().scale().ok_or_else(|| {
        Error::Unsupported("decay-scale update needs exponential decay".into())
    })?;
    let s_new = s * sample_normal(0.0, step, rng).exp();
    let log_r = scale_log_ratio(c, prior, s_new, scale_prior, aux)?;
    if log_r >= 0.0 || rng.random::<f64>().ln() < log_r {
        if s_new != s {
            prior.set_scale(s_new)?;
        }
        Ok(true)
    } else {
        Ok(false)
    }
}

/// Apply the configured hyperparameter updates for one iteration:
/// auxiliaries and `alpha`, then `s`.
pub fn update_hypers<R: Rng>(
    c: &Assignments,
    prior: &mut DdcrpPrior,
    cfg: &HyperConfig,
    rng: &mut R,
) -> Result<()> {
    let mut aux = None;
    if cfg.infer_alpha {
        let draw = alpha_gibbs_update(c, prior, cfg.alpha_prior, rng);
        prior.set_alpha(draw.alpha.max(f64::MIN_POSITIVE))?;
        aux = Some(draw.aux);
    }
    if cfg.infer_scale {
        let v = if cfg.joint { aux.as_deref() } else { None };
        scale_mh_update(c, prior, cfg.scale_prior, cfg.scale_step, v, rng)?;
    }
    Ok(())
}
