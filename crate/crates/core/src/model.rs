//! Cluster observation models.
//!
//! A model scores the observations of one cluster given that cluster's
//! parameter vector `rho_k`, supplies a prior over `rho_k`, and (when the
//! prior is conjugate) the closed-form marginal likelihood with `rho_k`
//! integrated out. Models only see a cluster through its [`ClusterStats`].
//!
//! Shipped models:
//!
//! * [`PoissonGamma`]: Poisson counts with a Gamma(a, b) prior on the rate.
//!   Has both the explicit-rate likelihood (for reversible jump) and the
//!   conjugate marginal (for the collapsed Gibbs sampler).
//! * [`GammaShape`]: Gamma(shape, rate) observations with the rate
//!   integrated out analytically; the per-cluster parameter is the shape.

use crate::error::{Error, Result};
use crate::math::{gamma_log_pdf, ln_gamma, sample_gamma, sample_poisson};
use rand::RngCore;
use serde::{Deserialize, Serialize};

/// Per-cluster parameter vector `rho_k`.
pub type Params = Vec<f64>;

/// Additive sufficient statistics of a set of observations.
///
/// `sum_ln` accumulates `ln y` over strictly positive values only and
/// `sum_ln_factorial` accumulates `ln Γ(y + 1)` over non-negative values;
/// models that need either validate their data up front.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ClusterStats {
    pub n: usize,
    pub sum: f64,
    pub sum_sq: f64,
    pub sum_ln: f64,
    pub sum_ln_factorial: f64,
}

impl ClusterStats {
    pub fn from_values(y: &[f64]) -> Self {
        let mut s = Self::default();
        for &v in y {
            s.push(&Observation::new(v));
        }
        s
    }

    pub fn push(&mut self, o: &Observation) {
        self.n += 1;
        self.sum += o.value;
        self.sum_sq += o.value * o.value;
        self.sum_ln += o.ln_value;
        self.sum_ln_factorial += o.ln_factorial;
    }

    pub fn merged(&self, other: &Self) -> Self {
        Self {
            n: self.n + other.n,
            sum: self.sum + other.sum,
            sum_sq: self.sum_sq + other.sum_sq,
            sum_ln: self.sum_ln + other.sum_ln,
            sum_ln_factorial: self.sum_ln_factorial + other.sum_ln_factorial,
        }
    }

    /// Statistics of `self` with the (contained) set `other` removed.
    pub fn without(&self, other: &Self) -> Self {
        debug_assert!(other.n <= self.n);
        Self {
            n: self.n - other.n,
            sum: self.sum - other.sum,
            sum_sq: self.sum_sq - other.sum_sq,
            sum_ln: self.sum_ln - other.sum_ln,
            sum_ln_factorial: self.sum_ln_factorial - other.sum_ln_factorial,
        }
    }

    pub fn mean(&self) -> Option<f64> {
        (self.n > 0).then(|| self.sum / self.n as f64)
    }

    /// Unbiased sample variance; `None` below two observations. Values
    /// within rounding of zero are reported as exactly zero.
    pub fn variance(&self) -> Option<f64> {
        if self.n < 2 {
            return None;
        }
        let n = self.n as f64;
        let centred = self.sum_sq - self.sum * self.sum / n;
        let var = centred / (n - 1.0);
        if var <= 1e-12 * (self.sum_sq / n) {
            Some(0.0)
        } else {
            Some(var)
        }
    }
}

/// One observed value with its precomputed log terms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation {
    pub value: f64,
    ln_value: f64,
    ln_factorial: f64,
}

impl Observation {
    pub fn new(value: f64) -> Self {
        Self {
            value,
            ln_value: if value > 0.0 { value.ln() } else { 0.0 },
            ln_factorial: if value >= 0.0 { ln_gamma(value + 1.0) } else { 0.0 },
        }
    }
}

/// The response vector. Entries may be missing (points whose outcome is to
/// be predicted); missing entries contribute nothing to cluster statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct Observations {
    obs: Vec<Option<Observation>>,
}

impl Observations {
    pub fn new(y: &[f64]) -> Self {
        Self {
            obs: y.iter().map(|&v| Some(Observation::new(v))).collect(),
        }
    }

    /// Observed values followed by `missing` unobserved slots.
    pub fn with_missing(y: &[f64], missing: usize) -> Self {
        let mut s = Self::new(y);
        s.obs.extend(std::iter::repeat_n(None, missing));
        s
    }

    pub fn len(&self) -> usize {
        self.obs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.obs.is_empty()
    }

    pub fn is_observed(&self, i: usize) -> bool {
        self.obs[i].is_some()
    }

    pub fn value(&self, i: usize) -> Option<f64> {
        self.obs[i].map(|o| o.value)
    }

    pub fn stats_of(&self, members: &[usize]) -> ClusterStats {
        let mut s = ClusterStats::default();
        for &i in members {
            if let Some(o) = &self.obs[i] {
                s.push(o);
            }
        }
        s
    }

    /// Observed values only, in index order.
    pub fn observed_values(&self) -> Vec<f64> {
        self.obs.iter().flatten().map(|o| o.value).collect()
    }
}

/// Pluggable per-cluster observation model.
pub trait ClusterModel: Send + Sync {
    fn name(&self) -> &'static str;

    /// Number of scalar components of `rho_k`.
    fn param_dim(&self) -> usize;

    /// Which components of `rho_k` are constrained positive.
    fn positive_mask(&self) -> &[bool];

    fn validate_observations(&self, y: &[f64]) -> Result<()>;

    /// `log f(y_k | rho_k)`; zero for an empty cluster, `-inf` outside the
    /// parameter support.
    fn log_lik(&self, stats: &ClusterStats, rho: &[f64]) -> f64;

    /// `log ∫ f(y_k | rho) π(rho) d rho` when available in closed form.
    fn marginal_log_lik(&self, _stats: &ClusterStats) -> Option<f64> {
        None
    }

    fn prior_log_density(&self, rho: &[f64]) -> f64;

    fn prior_sample(&self, rng: &mut dyn RngCore) -> Params;

    /// Method-of-moments estimate of `rho_k`, or `None` when the data cannot
    /// support one.
    fn moment_estimate(&self, stats: &ClusterStats) -> Option<Params>;

    /// Exact draw from `π(rho_k | y_k)` for conjugate models.
    fn posterior_sample(&self, _stats: &ClusterStats, _rng: &mut dyn RngCore) -> Option<Params> {
        None
    }

    /// Draw a fresh observation from a cluster with parameters `rho` whose
    /// current members have statistics `stats` (models with analytically
    /// integrated parameters draw those from their conditional first).
    fn sample_observation(&self, stats: &ClusterStats, rho: &[f64], rng: &mut dyn RngCore) -> f64;

    fn cluster_log_lik(&self, y: &[f64], rho: &[f64]) -> f64 {
        self.log_lik(&ClusterStats::from_values(y), rho)
    }
}

/// Poisson counts, Gamma(a, b) prior (shape, rate) on each cluster's rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoissonGamma {
    pub a: f64,
    pub b: f64,
}

impl PoissonGamma {
    pub fn new(a: f64, b: f64) -> Result<Self> {
        let m = Self { a, b };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        positive("poisson prior shape a", self.a)?;
        positive("poisson prior rate b", self.b)
    }

    fn marginal(&self, s: &ClusterStats) -> f64 {
        if s.n == 0 {
            return 0.0;
        }
        let shape = s.sum + self.a;
        ln_gamma(shape) - shape * (s.n as f64 + self.b).ln() + self.a * self.b.ln() - ln_gamma(self.a)
            - s.sum_ln_factorial
    }
}

const ONE_POSITIVE: [bool; 1] = [true];

impl ClusterModel for PoissonGamma {
    fn name(&self) -> &'static str {
        "poisson-gamma"
    }

    fn param_dim(&self) -> usize {
        1
    }

    fn positive_mask(&self) -> &[bool] {
        &ONE_POSITIVE
    }

    fn validate_observations(&self, y: &[f64]) -> Result<()> {
        for (i, &v) in y.iter().enumerate() {
            if !(v >= 0.0 && v.is_finite() && v.fract() == 0.0) {
                return Err(Error::Data(format!(
                    "poisson model needs non-negative integer counts; y[{i}] = {v}"
                )));
            }
        }
        Ok(())
    }

    fn log_lik(&self, s: &ClusterStats, rho: &[f64]) -> f64 {
        if s.n == 0 {
            return 0.0;
        }
        let lambda = rho[0];
        if !(lambda > 0.0) {
            return f64::NEG_INFINITY;
        }
        s.sum * lambda.ln() - s.n as f64 * lambda - s.sum_ln_factorial
    }

    fn marginal_log_lik(&self, s: &ClusterStats) -> Option<f64> {
        Some(self.marginal(s))
    }

    fn prior_log_density(&self, rho: &[f64]) -> f64 {
        gamma_log_pdf(rho[0], self.a, self.b)
    }

    fn prior_sample(&self, rng: &mut dyn RngCore) -> Params {
        vec![sample_gamma(self.a, self.b, rng)]
    }

    fn moment_estimate(&self, s: &ClusterStats) -> Option<Params> {
        match moment_estimate_poisson_stats(s) {
            MomentEstimate::Value(v) => Some(vec![v]),
            MomentEstimate::Fallback => None,
        }
    }

    fn posterior_sample(&self, s: &ClusterStats, rng: &mut dyn RngCore) -> Option<Params> {
        Some(vec![sample_gamma(self.a + s.sum, self.b + s.n as f64, rng)])
    }

    fn sample_observation(&self, _s: &ClusterStats, rho: &[f64], rng: &mut dyn RngCore) -> f64 {
        sample_poisson(rho[0], rng)
    }
}

/// Gamma(shape_k, rate_k) observations. The rate has a conjugate
/// Gamma(`rate_shape`, `rate_rate`) prior and is integrated out; the shape
/// has a Gamma(`shape_shape`, `shape_rate`) prior and is the cluster
/// parameter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GammaShape {
    pub shape_shape: f64,
    pub shape_rate: f64,
    pub rate_shape: f64,
    pub rate_rate: f64,
}

impl GammaShape {
    pub fn new(shape_shape: f64, shape_rate: f64, rate_shape: f64, rate_rate: f64) -> Result<Self> {
        let m = Self {
            shape_shape,
            shape_rate,
            rate_shape,
            rate_rate,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        positive("shape prior shape", self.shape_shape)?;
        positive("shape prior rate", self.shape_rate)?;
        positive("rate prior shape", self.rate_shape)?;
        positive("rate prior rate", self.rate_rate)
    }

    fn shape_log_lik(&self, s: &ClusterStats, shape: f64) -> f64 {
        if s.n == 0 {
            return 0.0;
        }
        if !(shape > 0.0) {
            return f64::NEG_INFINITY;
        }
        let n = s.n as f64;
        let post_shape = n * shape + self.rate_shape;
        (shape - 1.0) * s.sum_ln - n * ln_gamma(shape) + self.rate_shape * self.rate_rate.ln()
            - ln_gamma(self.rate_shape)
            + ln_gamma(post_shape)
            - post_shape * (self.rate_rate + s.sum).ln()
    }
}

impl ClusterModel for GammaShape {
    fn name(&self) -> &'static str {
        "gamma-shape"
    }

    fn param_dim(&self) -> usize {
        1
    }

    fn positive_mask(&self) -> &[bool] {
        &ONE_POSITIVE
    }

    fn validate_observations(&self, y: &[f64]) -> Result<()> {
        for (i, &v) in y.iter().enumerate() {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Data(format!(
                    "gamma model needs strictly positive observations; y[{i}] = {v}"
                )));
            }
        }
        Ok(())
    }

    fn log_lik(&self, s: &ClusterStats, rho: &[f64]) -> f64 {
        self.shape_log_lik(s, rho[0])
    }

    fn prior_log_density(&self, rho: &[f64]) -> f64 {
        gamma_log_pdf(rho[0], self.shape_shape, self.shape_rate)
    }

    fn prior_sample(&self, rng: &mut dyn RngCore) -> Params {
        vec![sample_gamma(self.shape_shape, self.shape_rate, rng)]
    }

    fn moment_estimate(&self, s: &ClusterStats) -> Option<Params> {
        match moment_estimate_gamma_shape_stats(s) {
            MomentEstimate::Value(v) => Some(vec![v]),
            MomentEstimate::Fallback => None,
        }
    }

    fn sample_observation(&self, s: &ClusterStats, rho: &[f64], rng: &mut dyn RngCore) -> f64 {
        let shape = rho[0];
        let rate = sample_gamma(
            self.rate_shape + s.n as f64 * shape,
            self.rate_rate + s.sum,
            rng,
        );
        sample_gamma(shape, rate, rng)
    }
}

/// The shipped models behind one type, for configuration-driven dispatch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Model {
    PoissonGamma(PoissonGamma),
    GammaShape(GammaShape),
}

impl Model {
    pub fn validate(&self) -> Result<()> {
        match self {
            Model::PoissonGamma(m) => m.validate(),
            Model::GammaShape(m) => m.validate(),
        }
    }

    fn inner(&self) -> &dyn ClusterModel {
        match self {
            Model::PoissonGamma(m) => m,
            Model::GammaShape(m) => m,
        }
    }
}

impl ClusterModel for Model {
    fn name(&self) -> &'static str {
        self.inner().name()
    }
    fn param_dim(&self) -> usize {
        self.inner().param_dim()
    }
    fn positive_mask(&self) -> &[bool] {
        self.inner().positive_mask()
    }
    fn validate_observations(&self, y: &[f64]) -> Result<()> {
        self.inner().validate_observations(y)
    }
    fn log_lik(&self, stats: &ClusterStats, rho: &[f64]) -> f64 {
        self.inner().log_lik(stats, rho)
    }
    fn marginal_log_lik(&self, stats: &ClusterStats) -> Option<f64> {
        self.inner().marginal_log_lik(stats)
    }
    fn prior_log_density(&self, rho: &[f64]) -> f64 {
        self.inner().prior_log_density(rho)
    }
    fn prior_sample(&self, rng: &mut dyn RngCore) -> Params {
        self.inner().prior_sample(rng)
    }
    fn moment_estimate(&self, stats: &ClusterStats) -> Option<Params> {
        self.inner().moment_estimate(stats)
    }
    fn posterior_sample(&self, stats: &ClusterStats, rng: &mut dyn RngCore) -> Option<Params> {
        self.inner().posterior_sample(stats, rng)
    }
    fn sample_observation(&self, stats: &ClusterStats, rho: &[f64], rng: &mut dyn RngCore) -> f64 {
        self.inner().sample_observation(stats, rho, rng)
    }
}

fn positive(what: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("{what} must be positive, got {v}")))
    }
}

/// Outcome of a method-of-moments estimator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MomentEstimate {
    Value(f64),
    /// Too few observations or degenerate moments; callers fall back to
    /// the prior.
    Fallback,
}

/// `log ∫ Poisson(y | λ) Gamma(λ | a, b) dλ`, including the `b^a / Γ(a)`
/// prior constant.
pub fn poisson_marginal_cluster_log_lik(y: &[f64], a: f64, b: f64) -> Result<f64> {
    let m = PoissonGamma::new(a, b)?;
    m.validate_observations(y)?;
    Ok(m.marginal(&ClusterStats::from_values(y)))
}

pub fn poisson_cluster_log_lik(y: &[f64], lambda: f64) -> Result<f64> {
    positive("poisson rate", lambda)?;
    let m = PoissonGamma { a: 1.0, b: 1.0 };
    m.validate_observations(y)?;
    Ok(m.log_lik(&ClusterStats::from_values(y), &[lambda]))
}

/// Gamma likelihood with the rate integrated against Gamma(`rate_shape`,
/// `rate_rate`), as a function of the shape.
pub fn gamma_marginal_shape_log_lik(
    y: &[f64],
    shape: f64,
    rate_shape: f64,
    rate_rate: f64,
) -> Result<f64> {
    positive("gamma shape", shape)?;
    let m = GammaShape::new(1.0, 1.0, rate_shape, rate_rate)?;
    m.validate_observations(y)?;
    Ok(m.shape_log_lik(&ClusterStats::from_values(y), shape))
}

fn moment_estimate_poisson_stats(s: &ClusterStats) -> MomentEstimate {
    match s.mean() {
        Some(m) if s.n >= 2 && m > 0.0 => MomentEstimate::Value(m),
        _ => MomentEstimate::Fallback,
    }
}

fn moment_estimate_gamma_shape_stats(s: &ClusterStats) -> MomentEstimate {
    match (s.mean(), s.variance()) {
        (Some(m), Some(v)) if v > 0.0 && m > 0.0 => MomentEstimate::Value(m * m / v),
        _ => MomentEstimate::Fallback,
    }
}

/// Sample mean as a rate estimate (needs at least two values, mean > 0).
pub fn moment_estimate_poisson(y: &[f64]) -> MomentEstimate {
    moment_estimate_poisson_stats(&ClusterStats::from_values(y))
}

/// `ȳ² / s²` with the unbiased variance (needs two values, `s² > 0`).
pub fn moment_estimate_gamma_shape(y: &[f64]) -> MomentEstimate {
    moment_estimate_gamma_shape_stats(&ClusterStats::from_values(y))
}
