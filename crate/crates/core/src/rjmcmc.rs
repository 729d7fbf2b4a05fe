//! Reversible-jump sampler over links and explicit cluster parameters.
//!
//! Each link update proposes `c_i -> c*` and classifies the change:
//!
//! * birth: the moving set `M` becomes a new cluster with freshly proposed
//!   parameters; the remaining set keeps the old cluster's parameters;
//! * death: `M` was a whole cluster and merges into another, which keeps its
//!   parameters; `M`'s parameters become the reverse auxiliaries;
//! * fixed transfer: `M` moves between clusters, optionally redrawing both
//!   clusters' parameters;
//! * fixed same: the partition does not change.
//!
//! The acceptance log ratio is the target ratio plus the link proposal
//! ratio, the parameter proposal ratio and the log Jacobian.
//!
//! Moving sets that carry no observed data (only unobserved points, in joint
//! prediction) always use prior birth draws and keep parameters on
//! transfers, which makes those moves exact Gibbs steps from the prior.

use crate::chain::ClusterState;
use crate::error::{Error, Result};
use crate::hyper::{update_hypers, HyperConfig};
use crate::math::sample_normal;
use crate::model::{ClusterModel, ClusterStats, Observations, Params};
use crate::partition::{partition_from_assignments, Assignments, LinkPlan, MoveClass};
use crate::prior::DdcrpPrior;
use crate::proposals::{
    birth_log_density, evaluate_resample, propose_birth_params, propose_resample, FixedDimStrategy,
    ProposalConfig,
};
use crate::trace::{MoveKind, MoveOutcome, MoveTally, Sample, Schedule, TraceMeta, TraceStore};
use rand::Rng;
use serde::{Deserialize, Serialize};

/// How the new link target is proposed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LinkStrategy {
    /// `c*` uniform on all observations.
    Uniform,
    /// `c*` from the ddCRP link prior of `i`.
    Prior,
}

const ADAPT_BATCH: usize = 50;
const ADAPT_TARGET: f64 = 0.35;

fn default_param_step() -> f64 {
    0.5
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RjConfig {
    pub schedule: Schedule,
    #[serde(default)]
    pub hyper: HyperConfig,
    pub link: LinkStrategy,
    pub birth: ProposalConfig,
    pub fixed_dim: FixedDimStrategy,
    /// Initial standard deviation of the parameter random walk.
    #[serde(default = "default_param_step")]
    pub param_step: f64,
    /// Tune `param_step` towards a fixed acceptance rate during burn-in.
    #[serde(default = "default_true")]
    pub adapt_param_step: bool,
    /// Drops the birth / death log Jacobian. Only for mutation testing.
    #[doc(hidden)]
    #[serde(skip)]
    pub omit_jacobian: bool,
}

impl RjConfig {
    pub fn new(schedule: Schedule, link: LinkStrategy, birth: ProposalConfig, fixed_dim: FixedDimStrategy) -> Self {
        Self {
            schedule,
            hyper: HyperConfig::default(),
            link,
            birth,
            fixed_dim,
            param_step: default_param_step(),
            adapt_param_step: true,
            omit_jacobian: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.schedule.validate()?;
        self.birth.validate()?;
        self.fixed_dim.validate()?;
        if !(self.param_step >= 0.0 && self.param_step.is_finite()) {
            return Err(Error::Config(format!(
                "parameter step must be non-negative, got {}",
                self.param_step
            )));
        }
        Ok(())
    }
}

/// Parameter changes carried by a proposal.
#[derive(Debug, Clone, PartialEq)]
pub enum ParamAction {
    None,
    Birth { rho_new: Params, log_q: f64, log_jacobian: f64 },
    Death { rho_removed: Params, log_q: f64, log_jacobian: f64 },
    Resample { rho_remaining: Params, rho_target: Params, log_q_fwd: f64, log_q_rev: f64 },
}

/// A fully specified link move, ready to be scored and applied.
#[derive(Debug, Clone, PartialEq)]
pub struct MoveProposal {
    pub plan: LinkPlan,
    pub link_log_ratio: f64,
    pub action: ParamAction,
    moving_stats: ClusterStats,
}

impl MoveProposal {
    pub fn class(&self) -> MoveClass {
        self.plan.class
    }
}

pub struct RjChain<M: ClusterModel> {
    prior: DdcrpPrior,
    model: M,
    state: ClusterState,
    /// Parameters per slot; entries of free slots are stale.
    params: Vec<Params>,
    log_prior: f64,
    param_step: f64,
}

impl<M: ClusterModel> RjChain<M> {
    /// Start from `init`, drawing every cluster's parameters from the prior.
    pub fn new<R: Rng>(
        prior: DdcrpPrior,
        model: M,
        obs: Observations,
        init: &Assignments,
        param_step: f64,
        rng: &mut R,
    ) -> Result<Self> {
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
        let state = ClusterState::new(obs, init);
        let params = (0..state.links.slot_capacity())
            .map(|_| model.prior_sample(rng))
            .collect();
        Ok(Self {
            prior,
            model,
            state,
            params,
            log_prior,
            param_step,
        })
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

    pub fn param_step(&self) -> f64 {
        self.param_step
    }

    /// Parameters of `i`'s cluster.
    pub fn params_of(&self, i: usize) -> &[f64] {
        &self.params[self.state.links.slot_of(i)]
    }

    /// Cluster parameters in canonical label order.
    pub fn canonical_params(&self) -> Vec<Params> {
        self.state
            .links
            .partition()
            .members()
            .iter()
            .map(|m| self.params[self.state.links.slot_of(m[0])].clone())
            .collect()
    }

    /// Replace the parameters of `i`'s cluster.
    pub fn set_params_of(&mut self, i: usize, rho: Params) {
        let slot = self.state.links.slot_of(i);
        self.params[slot] = rho;
    }

    fn cluster_term(&self, stats: &ClusterStats, rho: &[f64]) -> f64 {
        self.model.log_lik(stats, rho) + self.model.prior_log_density(rho)
    }

    /// Cached unnormalised log posterior.
    pub fn log_post(&self) -> f64 {
        self.log_prior
            + self
                .state
                .links
                .live_slots()
                .map(|s| self.cluster_term(&self.state.stats[s], &self.params[s]))
                .sum::<f64>()
    }

    /// Log posterior recomputed from the links, data and parameters.
    pub fn recompute_log_post(&self) -> f64 {
        let c = self.assignments();
        let part = partition_from_assignments(&c);
        self.prior.assignment_log_prior(&c)
            + part
                .members()
                .iter()
                .map(|m| {
                    let rho = &self.params[self.state.links.slot_of(m[0])];
                    self.cluster_term(&self.state.obs.stats_of(m), rho)
                })
                .sum::<f64>()
    }

    /// Propose a new link target for `i` and the log ratio
    /// `log r(c* -> c_i) - log r(c_i -> c*)`.
    pub fn propose_link<R: Rng>(&self, i: usize, strategy: LinkStrategy, rng: &mut R) -> (usize, f64) {
        match strategy {
            LinkStrategy::Uniform => (rng.random_range(0..self.prior.n()), 0.0),
            LinkStrategy::Prior => {
                let c_star = self.prior.sample_link(i, rng);
                let cur = self.state.links.link(i);
                if c_star == cur {
                    (c_star, 0.0)
                } else {
                    (c_star, self.prior.link_log_prob(i, cur) - self.prior.link_log_prob(i, c_star))
                }
            }
        }
    }

    /// Build the full proposal for `c_i -> c_star`, drawing any new
    /// parameters it needs.
    pub fn build_proposal<R: Rng>(
        &mut self,
        i: usize,
        c_star: usize,
        link_log_ratio: f64,
        cfg: &RjConfig,
        rng: &mut R,
    ) -> MoveProposal {
        let plan = self.state.links.plan(i, c_star);
        let moving_stats = self.state.stats_of(&plan.moving);
        let birth = if moving_stats.n == 0 {
            ProposalConfig::new(crate::proposals::ParamFamily::PriorDraw)
        } else {
            cfg.birth
        };
        let action = match plan.class {
            MoveClass::FixedSame => ParamAction::None,
            MoveClass::Birth => {
                let d = propose_birth_params(&self.model, &moving_stats, &birth, rng);
                ParamAction::Birth {
                    rho_new: d.value,
                    log_q: d.log_q,
                    log_jacobian: d.log_jacobian,
                }
            }
            MoveClass::Death => {
                let rho = self.params[plan.origin].clone();
                let (log_q, log_jacobian) = birth_log_density(&self.model, &moving_stats, &birth, &rho);
                ParamAction::Death {
                    rho_removed: rho,
                    log_q,
                    log_jacobian,
                }
            }
            MoveClass::FixedTransfer => match cfg.fixed_dim {
                FixedDimStrategy::Resample(rc) if moving_stats.n > 0 => {
                    let joined = plan.joined.expect("transfer joins a slot");
                    let origin_old = self.state.stats[plan.origin];
                    let target_old = self.state.stats[joined];
                    let remaining_new = origin_old.without(&moving_stats);
                    let target_new = target_old.merged(&moving_stats);
                    let fwd = propose_resample(&self.model, &remaining_new, &target_new, &rc, rng);
                    let log_q_rev = evaluate_resample(
                        &self.model,
                        &origin_old,
                        &target_old,
                        &rc,
                        &self.params[plan.origin],
                        &self.params[joined],
                    );
                    ParamAction::Resample {
                        rho_remaining: fwd.rho_remaining,
                        rho_target: fwd.rho_target,
                        log_q_fwd: fwd.log_q,
                        log_q_rev,
                    }
                }
                _ => ParamAction::None,
            },
        };
        MoveProposal {
            plan,
            link_log_ratio,
            action,
            moving_stats,
        }
    }

    /// Log acceptance ratio of a proposal built on the current state.
    pub fn log_acceptance(&self, p: &MoveProposal, omit_jacobian: bool) -> f64 {
        let plan = &p.plan;
        let i = plan.i;
        let old = self.state.links.link(i);
        if plan.c_star == old {
            return 0.0;
        }
        let links = self.prior.link_log_prob(i, plan.c_star) - self.prior.link_log_prob(i, old);
        let ll = |s: &ClusterStats, rho: &[f64]| self.model.log_lik(s, rho);
        let pi = |rho: &[f64]| self.model.prior_log_density(rho);
        let jac = |j: f64| if omit_jacobian { 0.0 } else { j };
        let origin = plan.origin;
        let rho_o = &self.params[origin];
        let stats_o = &self.state.stats[origin];
        let m = &p.moving_stats;
        let params = match (&p.action, plan.class) {
            (ParamAction::None, MoveClass::FixedSame) => 0.0,
            (ParamAction::Birth { rho_new, log_q, log_jacobian }, MoveClass::Birth) => {
                let remaining = stats_o.without(m);
                ll(m, rho_new) + pi(rho_new) + ll(&remaining, rho_o) - ll(stats_o, rho_o) - log_q
                    + jac(*log_jacobian)
            }
            (ParamAction::Death { rho_removed, log_q, log_jacobian }, MoveClass::Death) => {
                let joined = plan.joined.expect("death joins a slot");
                let rho_t = &self.params[joined];
                let stats_t = &self.state.stats[joined];
                ll(&stats_t.merged(m), rho_t) - ll(stats_t, rho_t) - ll(m, rho_removed) - pi(rho_removed)
                    + log_q
                    - jac(*log_jacobian)
            }
            (ParamAction::None, MoveClass::FixedTransfer) => {
                let joined = plan.joined.expect("transfer joins a slot");
                let rho_t = &self.params[joined];
                let stats_t = &self.state.stats[joined];
                ll(&stats_o.without(m), rho_o) + ll(&stats_t.merged(m), rho_t)
                    - ll(stats_o, rho_o)
                    - ll(stats_t, rho_t)
            }
            (
                ParamAction::Resample { rho_remaining, rho_target, log_q_fwd, log_q_rev },
                MoveClass::FixedTransfer,
            ) => {
                let joined = plan.joined.expect("transfer joins a slot");
                let rho_t = &self.params[joined];
                let stats_t = &self.state.stats[joined];
                ll(&stats_o.without(m), rho_remaining) + pi(rho_remaining)
                    + ll(&stats_t.merged(m), rho_target)
                    + pi(rho_target)
                    - ll(stats_o, rho_o)
                    - pi(rho_o)
                    - ll(stats_t, rho_t)
                    - pi(rho_t)
                    + log_q_rev
                    - log_q_fwd
            }
            (action, class) => panic!("parameter action {action:?} does not match move class {class:?}"),
        };
        let r = links + p.link_log_ratio + params;
        if r.is_nan() {
            f64::NEG_INFINITY
        } else {
            r
        }
    }

    /// Apply an accepted proposal.
    pub fn commit(&mut self, p: MoveProposal) {
        let plan = &p.plan;
        let old = self.state.links.link(plan.i);
        if plan.c_star == old {
            return;
        }
        self.log_prior += self.prior.link_log_prob(plan.i, plan.c_star) - self.prior.link_log_prob(plan.i, old);
        let born = self.state.apply(plan, &p.moving_stats);
        if self.params.len() < self.state.links.slot_capacity() {
            let dim = self.model.param_dim();
            self.params.resize(self.state.links.slot_capacity(), vec![f64::NAN; dim]);
        }
        match p.action {
            ParamAction::Birth { rho_new, .. } => {
                self.params[born.expect("birth allocates a slot")] = rho_new;
            }
            ParamAction::Resample { rho_remaining, rho_target, .. } => {
                self.params[plan.origin] = rho_remaining;
                self.params[plan.joined.expect("transfer joins a slot")] = rho_target;
            }
            ParamAction::None | ParamAction::Death { .. } => {}
        }
    }

    /// One reversible-jump link update for observation `i`.
    pub fn step<R: Rng>(&mut self, i: usize, cfg: &RjConfig, rng: &mut R) -> MoveOutcome {
        let strategy = if self.state.obs.is_observed(i) {
            cfg.link
        } else {
            LinkStrategy::Prior
        };
        let (c_star, link_ratio) = self.propose_link(i, strategy, rng);
        let proposal = self.build_proposal(i, c_star, link_ratio, cfg, rng);
        let log_r = self.log_acceptance(&proposal, cfg.omit_jacobian);
        let accepted = log_r >= 0.0 || rng.random::<f64>().ln() < log_r;
        let kind = MoveKind::from(proposal.class());
        if accepted {
            self.commit(proposal);
        }
        MoveOutcome {
            kind,
            accepted,
            log_ratio: log_r,
        }
    }

    /// Log-scale random walk on positive components and plain random walk
    /// on the rest, one component at a time, for the cluster in `slot`.
    /// Returns the number of accepted component updates.
    fn update_slot_params<R: Rng>(&mut self, slot: usize, sigma: f64, rng: &mut R) -> (usize, usize) {
        let stats = self.state.stats[slot];
        let mask = self.model.positive_mask().to_vec();
        let mut accepted = 0;
        for (p, positive) in mask.iter().copied().enumerate() {
            let cur = self.params[slot].clone();
            let mut prop = cur.clone();
            let z = sample_normal(0.0, sigma, rng);
            let log_jacobian = if z == 0.0 {
                0.0
            } else if positive {
                prop[p] = cur[p] * z.exp();
                z
            } else {
                prop[p] = cur[p] + z;
                0.0
            };
            let log_r = if prop[p] == cur[p] {
                0.0
            } else {
                self.cluster_term(&stats, &prop) - self.cluster_term(&stats, &cur) + log_jacobian
            };
            if log_r >= 0.0 || rng.random::<f64>().ln() < log_r {
                self.params[slot] = prop;
                accepted += 1;
            }
        }
        (accepted, mask.len())
    }

    /// Parameter MH update for the cluster containing observation `i`.
    pub fn update_cluster_params_mh<R: Rng>(&mut self, i: usize, sigma: f64, rng: &mut R) -> (usize, usize) {
        let slot = self.state.links.slot_of(i);
        self.update_slot_params(slot, sigma, rng)
    }

    /// Parameter MH over every cluster, in slot order.
    pub fn update_all_params<R: Rng>(&mut self, tally: Option<&mut MoveTally>, rng: &mut R) -> (usize, usize) {
        let slots: Vec<usize> = self.state.links.live_slots().collect();
        let sigma = self.param_step;
        let (mut acc, mut tot) = (0, 0);
        let mut local = MoveTally::default();
        for slot in slots {
            let (a, t) = self.update_slot_params(slot, sigma, rng);
            for k in 0..t {
                local.record(MoveKind::ParamMh, k < a);
            }
            acc += a;
            tot += t;
        }
        if let Some(tally) = tally {
            tally.merge(&local);
        }
        (acc, tot)
    }

    /// One sweep of link updates over `0..n`.
    pub fn sweep<R: Rng>(&mut self, cfg: &RjConfig, mut tally: Option<&mut MoveTally>, rng: &mut R) {
        for i in 0..self.prior.n() {
            let o = self.step(i, cfg, rng);
            if let Some(t) = tally.as_deref_mut() {
                t.record_outcome(&o);
            }
        }
        self.state.refresh_stats();
    }

    pub fn update_hypers<R: Rng>(&mut self, cfg: &HyperConfig, rng: &mut R) -> Result<()> {
        if !cfg.infer_alpha && !cfg.infer_scale {
            return Ok(());
        }
        let c = self.assignments();
        update_hypers(&c, &mut self.prior, cfg, rng)?;
        self.log_prior = self.prior.assignment_log_prior(&c);
        Ok(())
    }

    /// Draw a fresh outcome for every unobserved point from its cluster.
    pub fn impute<R: Rng>(&self, rng: &mut R) -> Vec<f64> {
        (0..self.prior.n())
            .filter(|&i| !self.state.obs.is_observed(i))
            .map(|i| {
                let slot = self.state.links.slot_of(i);
                self.model
                    .sample_observation(&self.state.stats[slot], &self.params[slot], rng)
            })
            .collect()
    }

    pub fn sample(&self, iteration: usize) -> Sample {
        Sample {
            iteration,
            k: self.num_clusters(),
            alpha: self.prior.alpha(),
            scale: self.prior.decay().scale(),
            log_post: self.log_post(),
            assignments: self.assignments(),
            params: self.canonical_params(),
            imputed: Vec::new(),
        }
    }
}

/// Run a reversible-jump chain from `init` and collect its trace. Unobserved
/// points in `obs` get imputed outcomes in every retained sample.
pub fn run_rjmcmc<M: ClusterModel, R: Rng>(
    prior: DdcrpPrior,
    model: M,
    obs: Observations,
    init: &Assignments,
    cfg: &RjConfig,
    meta: TraceMeta,
    rng: &mut R,
) -> Result<TraceStore> {
    cfg.validate()?;
    cfg.hyper.validate(&prior.decay())?;
    let has_missing = (0..obs.len()).any(|i| !obs.is_observed(i));
    let mut chain = RjChain::new(prior, model, obs, init, cfg.param_step, rng)?;
    let mut trace = TraceStore::new(TraceMeta {
        iterations: cfg.schedule.iterations,
        burn_in: cfg.schedule.burn_in,
        thinning: cfg.schedule.thinning,
        n: chain.prior.n(),
        model: chain.model.name().to_string(),
        sampler: "rjmcmc".to_string(),
        collapsed: false,
        distance_digest: chain.prior.distances().digest(),
        augmented: has_missing || meta.augmented,
        ..meta
    });
    let (mut batch_acc, mut batch_tot, mut batches) = (0usize, 0usize, 0usize);
    for t in 0..cfg.schedule.iterations {
        let post_burn = t >= cfg.schedule.burn_in;
        chain.sweep(cfg, post_burn.then_some(&mut trace.tally), rng);
        let (a, n) = chain.update_all_params(post_burn.then_some(&mut trace.tally), rng);
        if cfg.adapt_param_step && !post_burn {
            batch_acc += a;
            batch_tot += n;
            if (t + 1) % ADAPT_BATCH == 0 && batch_tot > 0 {
                batches += 1;
                let rate = batch_acc as f64 / batch_tot as f64;
                let gain = 1.0 / (batches as f64).sqrt();
                chain.param_step = (chain.param_step.ln() + gain * (rate - ADAPT_TARGET)).exp();
                batch_acc = 0;
                batch_tot = 0;
            }
        }
        chain.update_hypers(&cfg.hyper, rng)?;
        if cfg.schedule.keeps(t) {
            let mut s = chain.sample(t);
            if !s.log_post.is_finite() {
                return Err(Error::Numeric(format!(
                    "log posterior became {} at iteration {t}",
                    s.log_post
                )));
            }
            if has_missing {
                s.imputed = chain.impute(rng);
            }
            trace.samples.push(s);
        }
    }
    Ok(trace)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{GammaShape, PoissonGamma};
    use crate::prior::{Decay, DistanceMatrix};
    use crate::proposals::{FixedDist, ParamFamily};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn schedule() -> Schedule {
        Schedule {
            iterations: 10,
            burn_in: 0,
            thinning: 1,
        }
    }

    fn chain(x: &[f64], y: &[f64], c: &[usize], seed: u64) -> RjChain<PoissonGamma> {
        let prior = DdcrpPrior::new(
            DistanceMatrix::from_covariate(x).unwrap(),
            Decay::Exponential { scale: 0.5 },
            1.0,
        )
        .unwrap();
        RjChain::new(
            prior,
            PoissonGamma::new(1.0, 0.1).unwrap(),
            Observations::new(y),
            &Assignments::new(c.to_vec()).unwrap(),
            0.5,
            &mut ChaCha8Rng::seed_from_u64(seed),
        )
        .unwrap()
    }

    fn config(family: ParamFamily, fixed: FixedDimStrategy) -> RjConfig {
        RjConfig::new(schedule(), LinkStrategy::Prior, ProposalConfig::new(family), fixed)
    }

    #[test]
    fn uniform_link_frequencies() {
        let ch = chain(&[0.0; 5], &[1.0; 5], &[0, 1, 2, 3, 4], 0);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let draws = 100_000;
        let mut counts = [0usize; 5];
        for _ in 0..draws {
            let (j, r) = ch.propose_link(2, LinkStrategy::Uniform, &mut rng);
            assert_eq!(r, 0.0);
            counts[j] += 1;
        }
        let p = 0.2;
        let sd = (p * (1.0 - p) / draws as f64).sqrt();
        for c in counts {
            assert!((c as f64 / draws as f64 - p).abs() < 3.0 * sd);
        }
    }

    #[test]
    fn prior_link_ratio_cancels_prior() {
        let ch = chain(&[0.0, 0.4, 1.0, 3.0], &[1.0, 2.0, 3.0, 4.0], &[1, 1, 2, 3], 0);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..200 {
            let (j, r) = ch.propose_link(0, LinkStrategy::Prior, &mut rng);
            if j == 1 {
                assert_eq!(r, 0.0);
            }
            let p = ch.prior();
            let identity = r + p.link_log_prob(0, j) - p.link_log_prob(0, 1);
            assert!(identity.abs() < 1e-12);
        }
    }

    #[test]
    fn identical_link_always_accepted() {
        let mut ch = chain(&[0.0, 0.4, 1.0], &[1.0, 2.0, 3.0], &[1, 1, 2], 0);
        let cfg = config(ParamFamily::PriorDraw, FixedDimStrategy::NoUpdate);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = ch.build_proposal(0, 1, 0.0, &cfg, &mut rng);
        assert_eq!(p.class(), MoveClass::FixedSame);
        assert_eq!(ch.log_acceptance(&p, false), 0.0);
    }

    #[test]
    fn birth_and_matching_death_are_exact_negatives() {
        for family in [
            ParamFamily::PriorDraw,
            ParamFamily::NormalMm { sigma: 0.7 },
            ParamFamily::LogNormalMm { sigma: 0.4 },
            ParamFamily::InverseGammaMm,
            ParamFamily::Independence {
                dist: FixedDist::Gamma { shape: 2.0, rate: 0.5 },
            },
        ] {
            // 0 <- 1 <- 2 -> 2 with 3 alone; relinking 1 to itself splits {0,1}.
            let mut ch = chain(&[0.0, 0.4, 1.0, 3.0], &[1.0, 2.0, 4.0, 9.0], &[1, 2, 2, 3], 3);
            let cfg = config(family, FixedDimStrategy::NoUpdate);
            let mut rng = ChaCha8Rng::seed_from_u64(2);
            let birth = ch.build_proposal(1, 1, 0.0, &cfg, &mut rng);
            assert_eq!(birth.class(), MoveClass::Birth);
            let fwd = ch.log_acceptance(&birth, false);
            let before = ch.log_post();
            ch.commit(birth);
            let death = ch.build_proposal(1, 2, 0.0, &cfg, &mut rng);
            assert_eq!(death.class(), MoveClass::Death);
            let rev = ch.log_acceptance(&death, false);
            assert!((fwd + rev).abs() < 1e-10, "{family:?}: {fwd} vs {rev}");
            // The target part of the ratio is the change in log posterior.
            let after = ch.log_post();
            assert!((after - before - (ch.recompute_log_post() - before)).abs() < 1e-10);
            ch.commit(death);
            assert!((ch.log_post() - before).abs() < 1e-10);
        }
    }

    #[test]
    fn resample_with_round_trip_is_reversible() {
        let mut ch = chain(&[0.0, 0.4, 1.0, 3.0, 3.5], &[1.0, 2.0, 4.0, 9.0, 8.0], &[1, 2, 2, 4, 4], 5);
        let cfg = config(
            ParamFamily::PriorDraw,
            FixedDimStrategy::Resample(ProposalConfig::new(ParamFamily::NormalMm { sigma: 0.5 })),
        );
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let p = ch.build_proposal(0, 3, 0.0, &cfg, &mut rng);
        assert_eq!(p.class(), MoveClass::FixedTransfer);
        let fwd = ch.log_acceptance(&p, false);
        let (rho_o, rho_t) = (ch.params_of(1).to_vec(), ch.params_of(3).to_vec());
        ch.commit(p);
        let back = ch.build_proposal(0, 1, 0.0, &cfg, &mut rng);
        assert_eq!(back.class(), MoveClass::FixedTransfer);
        // Force the reverse draw onto the original parameters.
        let back = match back.action {
            ParamAction::Resample { log_q_rev, .. } => {
                let log_q_fwd = {
                    let stats_o = ch.state.stats_of(&[0, 1, 2]);
                    let stats_t = ch.state.stats_of(&[3, 4]);
                    let rc = match cfg.fixed_dim {
                        FixedDimStrategy::Resample(rc) => rc,
                        _ => unreachable!(),
                    };
                    evaluate_resample(&ch.model, &stats_o, &stats_t, &rc, &rho_o, &rho_t)
                };
                MoveProposal {
                    action: ParamAction::Resample {
                        rho_remaining: rho_t.clone(),
                        rho_target: rho_o.clone(),
                        log_q_fwd,
                        log_q_rev,
                    },
                    ..back
                }
            }
            other => panic!("unexpected {other:?}"),
        };
        let rev = ch.log_acceptance(&back, false);
        assert!((fwd + rev).abs() < 1e-9, "{fwd} vs {rev}");
    }

    #[test]
    fn rejection_leaves_state_unchanged_and_counts_conserve() {
        let x = [0.0, 0.2, 0.5, 2.0, 2.4, 5.0];
        let y = [1.0, 0.0, 2.0, 6.0, 7.0, 3.0];
        let mut ch = chain(&x, &y, &[0, 1, 2, 3, 4, 5], 7);
        let cfg = config(ParamFamily::NormalMm { sigma: 0.5 }, FixedDimStrategy::NoUpdate);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let k0 = ch.num_clusters() as i64;
        let (mut births, mut deaths) = (0i64, 0i64);
        for step in 0..20_000 {
            let i = step % x.len();
            let before = (ch.assignments(), ch.canonical_params());
            let o = ch.step(i, &cfg, &mut rng);
            if !o.accepted {
                assert_eq!((ch.assignments(), ch.canonical_params()), before);
            }
            if o.accepted && o.kind == MoveKind::Birth {
                births += 1;
            }
            if o.accepted && o.kind == MoveKind::Death {
                deaths += 1;
            }
            let live = ch.state.links.live_slots().count();
            assert_eq!(live, ch.num_clusters());
            if step % 1000 == 0 {
                assert!((ch.log_post() - ch.recompute_log_post()).abs() < 1e-8);
            }
        }
        assert_eq!(births - deaths, ch.num_clusters() as i64 - k0);
    }

    #[test]
    fn zero_step_param_update_is_identity() {
        let mut ch = chain(&[0.0, 1.0], &[1.0, 2.0], &[1, 1], 0);
        let before = ch.canonical_params();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (acc, tot) = ch.update_cluster_params_mh(0, 0.0, &mut rng);
        assert_eq!(acc, tot);
        assert_eq!(ch.canonical_params(), before);
    }

    #[test]
    fn shape_posterior_mean_matches_quadrature() {
        // One fixed cluster: only the shape moves.
        let y = [1.2, 2.3, 1.9, 3.1, 2.2, 2.8];
        let model = GammaShape::new(2.0, 0.5, 2.0, 0.5).unwrap();
        let prior = DdcrpPrior::new(
            DistanceMatrix::from_covariate(&[0.0; 6]).unwrap(),
            Decay::Identity,
            1.0,
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let mut ch = RjChain::new(
            prior,
            model,
            Observations::new(&y),
            &Assignments::new(vec![1, 2, 3, 4, 5, 5]).unwrap(),
            0.6,
            &mut rng,
        )
        .unwrap();
        let stats = ClusterStats::from_values(&y);
        let log_post = |a: f64| model.log_lik(&stats, &[a]) + model.prior_log_density(&[a]);
        let h = 1e-3;
        let grid: Vec<f64> = (1..60_000).map(|k| k as f64 * h).collect();
        let m = grid.iter().map(|&a| log_post(a)).fold(f64::NEG_INFINITY, f64::max);
        let w: Vec<f64> = grid.iter().map(|&a| (log_post(a) - m).exp()).collect();
        let z: f64 = w.iter().sum();
        let mean: f64 = grid.iter().zip(&w).map(|(a, w)| a * w).sum::<f64>() / z;
        let var: f64 = grid.iter().zip(&w).map(|(a, w)| (a - mean).powi(2) * w).sum::<f64>() / z;

        let draws = 200_000;
        let mut xs = Vec::with_capacity(draws);
        for _ in 0..draws {
            ch.update_cluster_params_mh(0, 0.6, &mut rng);
            xs.push(ch.params_of(0)[0]);
        }
        let est = xs.iter().sum::<f64>() / draws as f64;
        // Batch-means standard error.
        let batch = 2_000;
        let means: Vec<f64> = xs.chunks(batch).map(|c| c.iter().sum::<f64>() / batch as f64).collect();
        let bm = means.iter().sum::<f64>() / means.len() as f64;
        let bvar = means.iter().map(|v| (v - bm).powi(2)).sum::<f64>() / (means.len() - 1) as f64;
        let se = (bvar / means.len() as f64).sqrt();
        assert!(se < var.sqrt());
        assert!((est - mean).abs() < 2.0 * se + 1e-3 * mean, "{est} vs {mean} (se {se})");
    }
}
