//! Posterior predictive draws at unobserved covariate locations.
//!
//! Sequential mode reuses a fitted trace: each new point links to an
//! observed point or to itself under the ddCRP weights of the stored sample,
//! and new points never link to each other. Joint mode runs a fresh chain on
//! the augmented distance matrix with the unobserved outcomes integrated out
//! and imputes them at every retained iteration.

use crate::error::{Error, Result};
use crate::model::{ClusterModel, Observations, Params};
use crate::partition::{partition_from_assignments, Assignments};
use crate::prior::{DdcrpPrior, Decay, DistanceMatrix};
use crate::rjmcmc::{run_rjmcmc, RjConfig};
use crate::trace::{TraceMeta, TraceStore};
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PredictiveMode {
    Sequential,
    JointImputation,
}

/// Unobserved points to predict.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictiveTask {
    pub mode: PredictiveMode,
    /// Row `l` holds the distances from new point `l` to all `n + m` points,
    /// observed first.
    pub d_new: Vec<Vec<f64>>,
    /// Draws per stored sample and new point (sequential mode).
    pub draws_per_sample: usize,
}

impl PredictiveTask {
    pub fn m(&self) -> usize {
        self.d_new.len()
    }

    /// Check the rows against `n` observed points.
    pub fn validate(&self, n: usize) -> Result<()> {
        let m = self.m();
        for (l, row) in self.d_new.iter().enumerate() {
            if row.len() != n + m {
                return Err(Error::InvalidInput(format!(
                    "distance row for new point {l} has {} entries, expected {}",
                    row.len(),
                    n + m
                )));
            }
            if let Some(v) = row.iter().find(|v| !v.is_finite() || **v < 0.0) {
                return Err(Error::InvalidInput(format!(
                    "distance {v} for new point {l} must be finite and non-negative"
                )));
            }
        }
        if self.mode == PredictiveMode::Sequential && self.draws_per_sample == 0 {
            return Err(Error::Config("draws per sample must be at least 1".into()));
        }
        Ok(())
    }
}

/// Assemble the `(n + m)`-point distance matrix from the observed matrix
/// and the new points' rows.
pub fn augmented_distances(observed: &DistanceMatrix, d_new: &[Vec<f64>]) -> Result<DistanceMatrix> {
    let n = observed.n();
    let m = d_new.len();
    let mut rows: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let mut r = observed.row(i).to_vec();
            r.extend(d_new.iter().map(|row| row.get(i).copied().unwrap_or(f64::NAN)));
            r
        })
        .collect();
    rows.extend(d_new.iter().cloned());
    if rows.iter().any(|r| r.len() != n + m) {
        return Err(Error::InvalidInput(format!(
            "new distance rows must have {} entries",
            n + m
        )));
    }
    DistanceMatrix::from_rows(&rows)
}

/// Where a predictive draw's cluster came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DrawSource {
    /// Existing cluster, by canonical label within its sample.
    Cluster(usize),
    /// A new cluster opened by a self-link.
    New,
}

impl fmt::Display for DrawSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DrawSource::Cluster(k) => write!(f, "{k}"),
            DrawSource::New => f.write_str("new"),
        }
    }
}

impl Serialize for DrawSource {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for DrawSource {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        if s == "new" {
            Ok(DrawSource::New)
        } else {
            s.parse().map(DrawSource::Cluster).map_err(serde::de::Error::custom)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictiveDraw {
    /// Index of the stored sample the draw came from.
    pub sample: usize,
    /// New point index `l` in `0..m`.
    pub point: usize,
    /// Observation the new point linked to, or `None` for a self-link.
    pub link: Option<usize>,
    pub source: DrawSource,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictiveOutput {
    pub mode: PredictiveMode,
    pub draws: Vec<PredictiveDraw>,
    /// Cluster parameters were drawn from their conjugate posterior because
    /// the trace stored none.
    pub conjugate_augmented: bool,
}

/// Per-point summary of predictive draws.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointSummary {
    pub point: usize,
    pub draws: usize,
    pub mean: f64,
    pub q05: f64,
    pub q50: f64,
    pub q95: f64,
}

impl PredictiveOutput {
    pub fn values_for(&self, point: usize) -> Vec<f64> {
        self.draws.iter().filter(|d| d.point == point).map(|d| d.value).collect()
    }

    pub fn summarize(&self, m: usize) -> Vec<PointSummary> {
        (0..m)
            .filter_map(|l| {
                let mut v = self.values_for(l);
                if v.is_empty() {
                    return None;
                }
                v.sort_by(f64::total_cmp);
                let q = |p: f64| v[((v.len() - 1) as f64 * p).round() as usize];
                Some(PointSummary {
                    point: l,
                    draws: v.len(),
                    mean: v.iter().sum::<f64>() / v.len() as f64,
                    q05: q(0.05),
                    q50: q(0.5),
                    q95: q(0.95),
                })
            })
            .collect()
    }
}

/// Sequential predictive draws from a trace fitted on `y` alone.
///
/// `decay` gives the decay form; a stored decay scale in a sample overrides
/// its scale.
pub fn predict_sequential<M: ClusterModel, R: Rng>(
    trace: &TraceStore,
    y: &[f64],
    task: &PredictiveTask,
    model: &M,
    decay: Decay,
    rng: &mut R,
) -> Result<PredictiveOutput> {
    if trace.meta.augmented {
        return Err(Error::InvalidInput(
            "sequential prediction needs a trace fitted on observed points only".into(),
        ));
    }
    if task.mode != PredictiveMode::Sequential {
        return Err(Error::Config("task mode is not sequential".into()));
    }
    let n = y.len();
    task.validate(n)?;
    if trace.meta.n != 0 && trace.meta.n != n {
        return Err(Error::InvalidInput(format!(
            "trace has {} observations but {n} values were supplied",
            trace.meta.n
        )));
    }
    let obs = Observations::new(y);
    let mut conjugate_augmented = false;
    let mut draws = Vec::with_capacity(trace.len() * task.m() * task.draws_per_sample);
    for (si, s) in trace.samples.iter().enumerate() {
        if s.assignments.len() != n {
            return Err(Error::InvalidInput(format!(
                "sample {si} has {} links, expected {n}",
                s.assignments.len()
            )));
        }
        let decay = match (decay, s.scale) {
            (Decay::Exponential { .. }, Some(scale)) => Decay::Exponential { scale },
            (d, _) => d,
        };
        let part = partition_from_assignments(&s.assignments);
        let stats: Vec<_> = part.members().iter().map(|m| obs.stats_of(m)).collect();
        let params: Vec<Params> = if s.params.len() == part.num_clusters() {
            s.params.clone()
        } else {
            conjugate_augmented = true;
            stats
                .iter()
                .map(|st| {
                    model.posterior_sample(st, rng).ok_or_else(|| {
                        Error::Unsupported(format!(
                            "trace stores no cluster parameters and the {} model has no conjugate posterior",
                            model.name()
                        ))
                    })
                })
                .collect::<Result<_>>()?
        };
        for (l, row) in task.d_new.iter().enumerate() {
            let weights: Vec<f64> = row[..n].iter().map(|&d| decay.eval(d)).collect();
            let total = s.alpha + weights.iter().sum::<f64>();
            for _ in 0..task.draws_per_sample {
                let mut u = rng.random::<f64>() * total;
                let mut link = None;
                if u >= s.alpha {
                    u -= s.alpha;
                    link = Some(n - 1);
                    for (j, w) in weights.iter().enumerate() {
                        if u < *w {
                            link = Some(j);
                            break;
                        }
                        u -= w;
                    }
                    // Round-off past the last weight falls on the last
                    // reachable point.
                    if let Some(j) = link {
                        if weights[j] == 0.0 {
                            link = weights.iter().rposition(|w| *w > 0.0);
                        }
                    }
                }
                let (source, value) = match link {
                    Some(j) => {
                        let k = part.label_of(j);
                        (DrawSource::Cluster(k), model.sample_observation(&stats[k], &params[k], rng))
                    }
                    None => {
                        let rho = model.prior_sample(rng);
                        (DrawSource::New, model.sample_observation(&Default::default(), &rho, rng))
                    }
                };
                draws.push(PredictiveDraw {
                    sample: si,
                    point: l,
                    link,
                    source,
                    value,
                });
            }
        }
    }
    Ok(PredictiveOutput {
        mode: PredictiveMode::Sequential,
        draws,
        conjugate_augmented,
    })
}

/// Joint-imputation prediction: a fresh reversible-jump chain on the
/// augmented points, started from `init` (one link per point, observed
/// points first, or `None` for all self-links). Returns the predictive draws
/// (one per retained iteration and new point) and the full trace.
#[allow(clippy::too_many_arguments)]
pub fn predict_joint<M: ClusterModel, R: Rng>(
    y: &[f64],
    prior: DdcrpPrior,
    task: &PredictiveTask,
    model: M,
    init: Option<&Assignments>,
    cfg: &RjConfig,
    meta: TraceMeta,
    rng: &mut R,
) -> Result<(PredictiveOutput, TraceStore)> {
    if task.mode != PredictiveMode::JointImputation {
        return Err(Error::Config("task mode is not joint imputation".into()));
    }
    let n = y.len();
    task.validate(n)?;
    let m = task.m();
    if prior.n() != n + m {
        return Err(Error::InvalidInput(format!(
            "{n} observations and {m} new points but a {}-point prior",
            prior.n()
        )));
    }
    let self_links = Assignments::self_links(n + m);
    let init = init.unwrap_or(&self_links);
    let obs = Observations::with_missing(y, m);
    let trace = run_rjmcmc(prior, model, obs, init, cfg, meta, rng)?;
    let mut draws = Vec::with_capacity(trace.len() * m);
    for (si, s) in trace.samples.iter().enumerate() {
        let part = partition_from_assignments(&s.assignments);
        for (l, &value) in s.imputed.iter().enumerate() {
            let i = n + l;
            let link = s.assignments.link(i);
            draws.push(PredictiveDraw {
                sample: si,
                point: l,
                link: (link != i).then_some(link),
                source: DrawSource::Cluster(part.label_of(i)),
                value,
            });
        }
    }
    Ok((
        PredictiveOutput {
            mode: PredictiveMode::JointImputation,
            draws,
            conjugate_augmented: false,
        },
        trace,
    ))
}
