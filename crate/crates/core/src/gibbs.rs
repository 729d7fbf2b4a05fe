//! Collapsed Gibbs sampler for conjugate cluster models.
//!
//! Cluster parameters are integrated out, so the state is the link vector
//! alone. Each update removes `i`'s link, which leaves the moving set `M` as
//! its own component, and redraws `c_i` from
//!
//! ```text
//! log w(i)        = log alpha
//! log w(j in M)   = log f(d_ij)
//! log w(j not M)  = log f(d_ij) + ML(M u C_j) - ML(M) - ML(C_j)
//! ```
//!
//! where `C_j` is `j`'s component once `i`'s link is removed.

use crate::chain::ClusterState;
use crate::error::{Error, Result};
use crate::hyper::{update_hypers, HyperConfig};
use crate::model::{ClusterModel, ClusterStats, Observations};
use crate::partition::{Assignments, MoveClass};
use crate::prior::DdcrpPrior;
use crate::trace::{MoveKind, MoveTally, Sample, Schedule, TraceMeta, TraceStore};
use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GibbsConfig {
    pub schedule: Schedule,
    #[serde(default)]
    pub hyper: HyperConfig,
    /// Visit observations in random order instead of `0..n`.
    #[serde(default)]
    pub random_scan: bool,
}

pub struct GibbsSampler<M: ClusterModel> {
    prior: DdcrpPrior,
    model: M,
    state: ClusterState,
    slot_ml: Vec<f64>,
    log_prior: f64,
    // Per-update scratch.
    weights: Vec<f64>,
    slot_weight: Vec<f64>,
}

fn marginal<M: ClusterModel>(model: &M, s: &ClusterStats) -> f64 {
    model
        .marginal_log_lik(s)
        .expect("conjugate model checked at construction")
}

impl<M: ClusterModel> GibbsSampler<M> {
    pub fn new(prior: DdcrpPrior, model: M, obs: Observations, init: &Assignments) -> Result<Self> {
        if model.marginal_log_lik(&ClusterStats::default()).is_none() {
            return Err(Error::Unsupported(format!(
                "collapsed Gibbs needs a closed-form marginal; {} has none",
                model.name()
            )));
        }
        if obs.len() != prior.n() || init.len() != prior.n() {
            return Err(Error::InvalidInput(format!(
                "{} observations and {} links for {} distances",
                obs.len(),
                init.len(),
                prior.n()
            )));
        }
        model.validate_observations(&obs.observed_values())?;
        let log_prior = prior.assignment_log_prior(init);
        if log_prior == f64::NEG_INFINITY {
            return Err(Error::InvalidInput(
                "initial links have zero prior probability".into(),
            ));
        }
        let n = prior.n();
        let mut s = Self {
            prior,
            model,
            state: ClusterState::new(obs, init),
            slot_ml: Vec::new(),
            log_prior,
            weights: vec![0.0; n],
            slot_weight: Vec::new(),
        };
        s.refresh_marginals();
        Ok(s)
    }

    fn refresh_marginals(&mut self) {
        let cap = self.state.links.slot_capacity();
        self.slot_ml.resize(cap, 0.0);
        for slot in 0..cap {
            self.slot_ml[slot] = if self.state.links.is_live(slot) {
                marginal(&self.model, &self.state.stats[slot])
            } else {
                0.0
            };
        }
    }

    pub fn prior(&self) -> &DdcrpPrior {
        &self.prior
    }

    pub fn model(&self) -> &M {
        &self.model
    }

    pub fn assignments(&self) -> Assignments {
        self.state.links.assignments()
    }

    pub fn num_clusters(&self) -> usize {
        self.state.links.num_clusters()
    }

    /// Cached unnormalised log posterior.
    pub fn log_post(&self) -> f64 {
        self.log_prior
            + self
                .state
                .links
                .live_slots()
                .map(|s| self.slot_ml[s])
                .sum::<f64>()
    }

    /// Log posterior recomputed from scratch.
    pub fn recompute_log_post(&self) -> f64 {
        let c = self.assignments();
        let part = crate::partition::partition_from_assignments(&c);
        self.prior.assignment_log_prior(&c)
            + part
                .members()
                .iter()
                .map(|m| marginal(&self.model, &self.state.obs.stats_of(m)))
                .sum::<f64>()
    }

    /// Redraw `c_i` from its full conditional. Returns the class of the
    /// change relative to the previous link.
    pub fn update_link<R: Rng>(&mut self, i: usize, rng: &mut R) -> MoveClass {
        let n = self.prior.n();
        let moving = self.state.links.moving_set(i);
        let origin = self.state.links.slot_of(i);
        let stats_m = self.state.stats_of(&moving);
        let stats_r = self.state.stats[origin].without(&stats_m);
        let has_remaining = moving.len() < self.state.links.members(origin).len();
        let ml_m = marginal(&self.model, &stats_m);

        // Per-component log gain from joining M, relative to the max.
        let cap = self.state.links.slot_capacity();
        self.slot_weight.clear();
        self.slot_weight.resize(cap, f64::NEG_INFINITY);
        let mut max = 0.0f64;
        for slot in self.state.links.live_slots() {
            let delta = if slot == origin {
                if !has_remaining {
                    continue;
                }
                marginal(&self.model, &stats_m.merged(&stats_r))
                    - ml_m
                    - marginal(&self.model, &stats_r)
            } else {
                let st = &self.state.stats[slot];
                marginal(&self.model, &stats_m.merged(st)) - ml_m - self.slot_ml[slot]
            };
            self.slot_weight[slot] = delta;
            max = max.max(delta);
        }
        for w in self.slot_weight.iter_mut() {
            *w = (*w - max).exp();
        }
        let base = (-max).exp();

        let f_row = self.prior.decay_row(i);
        let mut total = self.prior.alpha() * base;
        for (j, &f) in f_row.iter().enumerate() {
            let w = if j == i {
                0.0
            } else if self.state.links.is_marked(j) {
                f * base
            } else {
                f * self.slot_weight[self.state.links.slot_of(j)]
            };
            self.weights[j] = w;
            total += w;
        }

        let mut u = rng.random::<f64>() * total;
        let mut pick = i;
        if u >= self.prior.alpha() * base {
            u -= self.prior.alpha() * base;
            for j in 0..n {
                let w = self.weights[j];
                if w > 0.0 {
                    pick = j;
                    if u < w {
                        break;
                    }
                    u -= w;
                }
            }
        }

        let old = self.state.links.link(i);
        if pick == old {
            return MoveClass::FixedSame;
        }
        self.log_prior += self.prior.link_log_prob(i, pick) - self.prior.link_log_prob(i, old);
        let plan = self.state.links.plan(i, pick);
        let born = self.state.apply(&plan, &stats_m);
        if self.slot_ml.len() < self.state.links.slot_capacity() {
            self.slot_ml.resize(self.state.links.slot_capacity(), 0.0);
        }
        match plan.class {
            MoveClass::FixedSame => {}
            MoveClass::Birth => {
                self.slot_ml[plan.origin] = marginal(&self.model, &self.state.stats[plan.origin]);
                self.slot_ml[born.expect("birth slot")] = ml_m;
            }
            MoveClass::Death | MoveClass::FixedTransfer => {
                let joined = plan.joined.expect("joined slot");
                self.slot_ml[joined] = marginal(&self.model, &self.state.stats[joined]);
                self.slot_ml[plan.origin] = if plan.class == MoveClass::Death {
                    0.0
                } else {
                    marginal(&self.model, &self.state.stats[plan.origin])
                };
            }
        }
        plan.class
    }

    /// One pass over all observations.
    pub fn sweep<R: Rng>(&mut self, random_scan: bool, tally: Option<&mut MoveTally>, rng: &mut R) {
        let n = self.prior.n();
        let mut local = MoveTally::default();
        for t in 0..n {
            let i = if random_scan { rng.random_range(0..n) } else { t };
            let class = self.update_link(i, rng);
            local.record(MoveKind::from(class), true);
        }
        if let Some(tally) = tally {
            tally.merge(&local);
        }
        self.state.refresh_stats();
        self.refresh_marginals();
    }

    /// Apply hyperparameter updates and refresh the prior term.
    pub fn update_hypers<R: Rng>(&mut self, cfg: &HyperConfig, rng: &mut R) -> Result<()> {
        if !cfg.infer_alpha && !cfg.infer_scale {
            return Ok(());
        }
        let c = self.assignments();
        update_hypers(&c, &mut self.prior, cfg, rng)?;
        self.log_prior = self.prior.assignment_log_prior(&c);
        Ok(())
    }

    pub fn sample(&self, iteration: usize) -> Sample {
        let c = self.assignments();
        Sample {
            iteration,
            k: self.num_clusters(),
            alpha: self.prior.alpha(),
            scale: self.prior.decay().scale(),
            log_post: self.log_post(),
            assignments: c,
            params: Vec::new(),
            imputed: Vec::new(),
        }
    }
}

/// Run a collapsed Gibbs chain and collect its trace.
pub fn run_gibbs<M: ClusterModel, R: Rng>(
    prior: DdcrpPrior,
    model: M,
    obs: Observations,
    init: &Assignments,
    cfg: &GibbsConfig,
    meta: TraceMeta,
    rng: &mut R,
) -> Result<TraceStore> {
    cfg.schedule.validate()?;
    cfg.hyper.validate(&prior.decay())?;
    let mut sampler = GibbsSampler::new(prior, model, obs, init)?;
    let mut trace = TraceStore::new(TraceMeta {
        iterations: cfg.schedule.iterations,
        burn_in: cfg.schedule.burn_in,
        thinning: cfg.schedule.thinning,
        n: sampler.prior.n(),
        model: sampler.model.name().to_string(),
        sampler: "gibbs".to_string(),
        collapsed: true,
        distance_digest: sampler.prior.distances().digest(),
        ..meta
    });
    for t in 0..cfg.schedule.iterations {
        let tally = (t >= cfg.schedule.burn_in).then_some(&mut trace.tally);
        sampler.sweep(cfg.random_scan, tally, rng);
        sampler.update_hypers(&cfg.hyper, rng)?;
        if cfg.schedule.keeps(t) {
            let s = sampler.sample(t);
            if !s.log_post.is_finite() {
                return Err(Error::Numeric(format!("log posterior became {} at iteration {t}", s.log_post)));
            }
            trace.samples.push(s);
        }
    }
    Ok(trace)
}
