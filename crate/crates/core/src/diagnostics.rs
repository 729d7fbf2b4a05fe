//! Chain-quality statistics and posterior summaries computed from traces.
//!
//! Every function here is a pure function of its inputs.

use crate::error::{Error, Result};
use crate::hyper::GammaPrior;
use crate::partition::Assignments;
use crate::trace::{MoveKind, MoveOutcome, MoveTally, TraceStore};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Gamma};
use std::collections::BTreeMap;

/// Mean squared jump of `K` between successive retained samples.
pub fn esjd_k(trace: &TraceStore) -> Result<f64> {
    esjd(&trace.k_series())
}

/// Mean of `(x[t+1] - x[t])^2`.
pub fn esjd(series: &[f64]) -> Result<f64> {
    if series.len() < 2 {
        return Err(Error::UndefinedStatistic(format!(
            "ESJD needs at least 2 samples, got {}",
            series.len()
        )));
    }
    let sum: f64 = series.windows(2).map(|w| (w[1] - w[0]).powi(2)).sum();
    Ok(sum / (series.len() - 1) as f64)
}

/// Effective sample size estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ess {
    pub value: f64,
    /// The series had zero variance; `value` is the sample count by
    /// convention.
    pub constant: bool,
}

/// Effective sample size with autocorrelations truncated by Geyer's initial
/// monotone positive sequence.
pub fn ess(series: &[f64]) -> Result<Ess> {
    let n = series.len();
    if n < 10 {
        return Err(Error::UndefinedStatistic(format!(
            "ESS needs at least 10 samples, got {n}"
        )));
    }
    let nf = n as f64;
    let mean = series.iter().sum::<f64>() / nf;
    let centred: Vec<f64> = series.iter().map(|x| x - mean).collect();
    let c0 = centred.iter().map(|x| x * x).sum::<f64>() / nf;
    if !(c0 > 0.0) || c0 <= f64::EPSILON * mean * mean {
        return Ok(Ess {
            value: nf,
            constant: true,
        });
    }
    let acf = |lag: usize| -> f64 {
        centred[..n - lag]
            .iter()
            .zip(&centred[lag..])
            .map(|(a, b)| a * b)
            .sum::<f64>()
            / nf
            / c0
    };
    // Pair sums Gamma_m = rho_{2m} + rho_{2m+1}, kept while positive and
    // forced non-increasing.
    let mut sum_pairs = 0.0;
    let mut prev = f64::INFINITY;
    let mut m = 0;
    while 2 * m + 1 < n {
        let g = acf(2 * m) + acf(2 * m + 1);
        if g <= 0.0 {
            break;
        }
        let g = g.min(prev);
        sum_pairs += g;
        prev = g;
        m += 1;
    }
    // tau = -1 + 2 * sum_m Gamma_m, since Gamma_0 includes rho_0 = 1.
    let tau = (2.0 * sum_pairs - 1.0).max(1.0 / nf);
    Ok(Ess {
        value: (nf / tau).min(nf),
        constant: false,
    })
}

/// The maximum a posteriori partition among samples with the modal `K`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapPartition {
    pub assignments: Assignments,
    pub k: usize,
    pub log_post: f64,
    pub iteration: usize,
}

/// Modal `K` (smaller `K` on ties), then the highest log posterior among
/// those samples (earliest on ties).
pub fn map_partition(trace: &TraceStore) -> Result<MapPartition> {
    let k_star = k_mode(trace)?;
    let best = trace
        .samples
        .iter()
        .filter(|s| s.k == k_star)
        .fold(None, |best: Option<&crate::trace::Sample>, s| match best {
            Some(b) if b.log_post >= s.log_post => Some(b),
            _ => Some(s),
        })
        .expect("modal K has a sample");
    Ok(MapPartition {
        assignments: best.assignments.clone(),
        k: best.k,
        log_post: best.log_post,
        iteration: best.iteration,
    })
}

/// Normalised histogram of `K`.
pub fn k_posterior(trace: &TraceStore) -> Result<BTreeMap<usize, f64>> {
    if trace.is_empty() {
        return Err(Error::UndefinedStatistic("K posterior of an empty trace".into()));
    }
    let mut counts = BTreeMap::new();
    for s in &trace.samples {
        *counts.entry(s.k).or_insert(0usize) += 1;
    }
    let n = trace.len() as f64;
    Ok(counts.into_iter().map(|(k, c)| (k, c as f64 / n)).collect())
}

/// Posterior mode of `K`; the smallest `K` wins ties.
pub fn k_mode(trace: &TraceStore) -> Result<usize> {
    let post = k_posterior(trace)?;
    let mut best = (0, f64::NEG_INFINITY);
    for (k, p) in post {
        if p > best.1 {
            best = (k, p);
        }
    }
    Ok(best.0)
}

/// Posterior mean of `K`.
pub fn k_mean(trace: &TraceStore) -> Result<f64> {
    if trace.is_empty() {
        return Err(Error::UndefinedStatistic("K mean of an empty trace".into()));
    }
    Ok(trace.k_series().iter().sum::<f64>() / trace.len() as f64)
}

/// Total variation distance between two distributions over `K`.
pub fn tv_distance(p: &BTreeMap<usize, f64>, q: &BTreeMap<usize, f64>) -> f64 {
    let mut keys: Vec<usize> = p.keys().chain(q.keys()).copied().collect();
    keys.sort_unstable();
    keys.dedup();
    0.5 * keys
        .iter()
        .map(|k| (p.get(k).unwrap_or(&0.0) - q.get(k).unwrap_or(&0.0)).abs())
        .sum::<f64>()
}

/// Empirical `P(c_i = j)` over all samples, or over those with
/// `K = condition_on_k`. Row `i` sums to one.
pub fn link_probabilities(trace: &TraceStore, condition_on_k: Option<usize>) -> Result<Vec<Vec<f64>>> {
    let selected: Vec<&Assignments> = trace
        .samples
        .iter()
        .filter(|s| condition_on_k.is_none_or(|k| s.k == k))
        .map(|s| &s.assignments)
        .collect();
    if selected.is_empty() {
        return Err(Error::UndefinedStatistic(match condition_on_k {
            Some(k) => format!("no samples with K = {k}"),
            None => "link probabilities of an empty trace".into(),
        }));
    }
    let n = selected[0].len();
    let mut m = vec![vec![0.0; n]; n];
    for c in &selected {
        for (i, &j) in c.as_slice().iter().enumerate() {
            m[i][j] += 1.0;
        }
    }
    let total = selected.len() as f64;
    for row in &mut m {
        for v in row.iter_mut() {
            *v /= total;
        }
    }
    Ok(m)
}

/// Proposed and accepted counts for one move kind.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AcceptanceRow {
    pub kind: MoveKind,
    pub proposed: u64,
    pub accepted: u64,
    /// `None` when nothing was proposed.
    pub rate: Option<f64>,
}

pub type AcceptanceReport = Vec<AcceptanceRow>;

/// Acceptance counts and rates by move kind.
pub fn acceptance_report(outcomes: &[MoveOutcome]) -> AcceptanceReport {
    let mut tally = MoveTally::default();
    for o in outcomes {
        tally.record_outcome(o);
    }
    acceptance_from_tally(&tally)
}

pub fn acceptance_from_tally(tally: &MoveTally) -> AcceptanceReport {
    MoveKind::ALL
        .iter()
        .map(|&kind| {
            let proposed = tally.proposed(kind);
            let accepted = tally.accepted(kind);
            AcceptanceRow {
                kind,
                proposed,
                accepted,
                rate: (proposed > 0).then(|| accepted as f64 / proposed as f64),
            }
        })
        .collect()
}

/// Combined acceptance rate of the given kinds.
pub fn combined_rate(report: &AcceptanceReport, kinds: &[MoveKind]) -> Option<f64> {
    let (p, a) = report
        .iter()
        .filter(|r| kinds.contains(&r.kind))
        .fold((0, 0), |(p, a), r| (p + r.proposed, a + r.accepted));
    (p > 0).then(|| a as f64 / p as f64)
}

/// Default total-variation threshold below which the decay-scale posterior
/// is reported as weakly identified.
pub const SCALE_OVERLAP_THRESHOLD: f64 = 0.1;

/// Prior-versus-posterior comparison for the decay scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScaleOverlap {
    /// Total variation between the histogram of posterior draws and the
    /// prior's mass on the same bins.
    pub tv: f64,
    pub weakly_identified: bool,
}

/// Compare posterior draws of `s` with its Gamma prior on an equal-width
/// grid spanning the draws, with the prior's tails as two extra bins.
pub fn scale_overlap(draws: &[f64], prior: GammaPrior, bins: usize, threshold: f64) -> Result<ScaleOverlap> {
    if draws.len() < 10 || bins == 0 {
        return Err(Error::UndefinedStatistic(format!(
            "scale overlap needs at least 10 draws and one bin, got {} draws",
            draws.len()
        )));
    }
    let g = Gamma::new(prior.shape, prior.rate)
        .map_err(|e| Error::Config(format!("decay scale prior: {e}")))?;
    let lo = draws.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = draws.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let width = if hi > lo { (hi - lo) / bins as f64 } else { lo.max(1e-12) * 1e-6 };
    let mut post = vec![0.0; bins];
    for &d in draws {
        let b = (((d - lo) / width) as usize).min(bins - 1);
        post[b] += 1.0 / draws.len() as f64;
    }
    let edge = |b: usize| lo + width * b as f64;
    let mut tv = g.cdf(lo) + (1.0 - g.cdf(edge(bins)));
    for (b, p) in post.iter().enumerate() {
        tv += (p - (g.cdf(edge(b + 1)) - g.cdf(edge(b)))).abs();
    }
    let tv = 0.5 * tv;
    Ok(ScaleOverlap {
        tv,
        weakly_identified: tv < threshold,
    })
}

/// Summary statistics of one chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainSummary {
    pub samples: usize,
    pub k_posterior: BTreeMap<usize, f64>,
    pub k_mean: f64,
    pub k_mode: usize,
    pub p_k_mode: f64,
    pub esjd_k: Option<f64>,
    pub ess_k: Option<Ess>,
    pub ess_log_post: Option<Ess>,
    pub acceptance: AcceptanceReport,
    pub map: MapPartition,
}

/// Collect the standard summaries; statistics that need more samples than
/// the trace holds are left empty.
pub fn summarize(trace: &TraceStore) -> Result<ChainSummary> {
    let k_posterior = k_posterior(trace)?;
    let k_mode = k_mode(trace)?;
    Ok(ChainSummary {
        samples: trace.len(),
        p_k_mode: k_posterior[&k_mode],
        k_mean: k_mean(trace)?,
        k_posterior,
        k_mode,
        esjd_k: esjd_k(trace).ok(),
        ess_k: ess(&trace.k_series()).ok(),
        ess_log_post: ess(&trace.log_post_series()).ok(),
        acceptance: acceptance_from_tally(&trace.tally),
        map: map_partition(trace)?,
    })
}
