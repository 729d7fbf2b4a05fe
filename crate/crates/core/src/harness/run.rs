//! Experiment pipelines behind the CLI subcommands.

use super::config::{InitKind, RunConfig, SamplerKind};
use super::data::{load_dataset, read_rows, substream, Dataset};
use super::persist;
use crate::diagnostics::{
    acceptance_from_tally, combined_rate, esjd_k, k_mean, k_mode, scale_overlap, summarize, tv_distance,
    ChainSummary, ScaleOverlap, SCALE_OVERLAP_THRESHOLD,
};
use crate::error::{Error, Result};
use crate::gibbs::{run_gibbs, GibbsConfig};
use crate::model::Observations;
use crate::partition::Assignments;
use crate::predictive::{
    augmented_distances, predict_joint, predict_sequential, PointSummary, PredictiveMode, PredictiveOutput,
    PredictiveTask,
};
use crate::prior::DdcrpPrior;
use crate::proposals::FixedDimStrategy;
use crate::rjmcmc::{run_rjmcmc, RjConfig};
use crate::trace::{MoveKind, MoveTally, TraceMeta, TraceStore};
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

/// Summary written to `report.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub config_digest: String,
    pub sampler: String,
    pub model: String,
    pub n: usize,
    pub chains: Vec<ChainSummary>,
    /// `K` posterior pooled over chains.
    pub k_posterior: BTreeMap<usize, f64>,
    pub k_mode: usize,
    /// Birth and death moves combined.
    pub birth_death_acceptance: Option<f64>,
    pub param_acceptance: Option<f64>,
    pub scale_overlap: Option<ScaleOverlap>,
    pub warnings: Vec<String>,
}

pub struct FitOutput {
    pub dataset: Dataset,
    pub traces: Vec<TraceStore>,
    pub report: Report,
}

/// RJ sampler settings from a run configuration.
pub fn rj_config(cfg: &RunConfig) -> RjConfig {
    let s = &cfg.sampler;
    RjConfig {
        hyper: cfg.hyper,
        param_step: s.param_step,
        adapt_param_step: s.adapt_param_step,
        ..RjConfig::new(s.schedule(), s.link, s.birth, s.fixed_dim)
    }
}

fn initial_links<R: Rng>(prior: &DdcrpPrior, kind: InitKind, rng: &mut R) -> Assignments {
    match kind {
        InitKind::Prior => prior.sample_assignments(rng),
        InitKind::SelfLinks => Assignments::self_links(prior.n()),
    }
}

fn chain_meta(cfg: &RunConfig, chain: usize) -> TraceMeta {
    TraceMeta {
        seed: cfg.seed,
        chain,
        config_digest: cfg.digest(),
        ..TraceMeta::default()
    }
}

/// Run chain `chain` of the configured sampler on `ds`.
pub fn run_chain(cfg: &RunConfig, ds: &Dataset, chain: usize) -> Result<TraceStore> {
    let mut rng = substream(cfg.seed, &format!("chain/{chain}"));
    let prior = DdcrpPrior::new(ds.distances.clone(), cfg.prior.decay, cfg.prior.alpha)?;
    let init = initial_links(&prior, cfg.sampler.init, &mut rng);
    let obs = Observations::new(&ds.y);
    let meta = chain_meta(cfg, chain);
    match cfg.sampler.kind {
        SamplerKind::Gibbs => {
            let g = GibbsConfig {
                schedule: cfg.sampler.schedule(),
                hyper: cfg.hyper,
                random_scan: cfg.sampler.random_scan,
            };
            run_gibbs(prior, cfg.model, obs, &init, &g, meta, &mut rng)
        }
        SamplerKind::Rjmcmc => run_rjmcmc(prior, cfg.model, obs, &init, &rj_config(cfg), meta, &mut rng),
    }
}

/// Run `jobs` closures on up to the available cores, keeping result order.
fn parallel<T: Send>(jobs: usize, f: impl Fn(usize) -> T + Sync) -> Vec<T> {
    let workers = std::thread::available_parallelism().map_or(1, |n| n.get()).min(jobs.max(1));
    let next = AtomicUsize::new(0);
    let out: Mutex<Vec<Option<T>>> = Mutex::new((0..jobs).map(|_| None).collect());
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let j = next.fetch_add(1, Ordering::Relaxed);
                if j >= jobs {
                    break;
                }
                let r = f(j);
                out.lock().expect("worker panicked")[j] = Some(r);
            });
        }
    });
    out.into_inner()
        .expect("worker panicked")
        .into_iter()
        .map(|r| r.expect("every job ran"))
        .collect()
}

/// Build the report for a set of chains.
pub fn report(cfg: &RunConfig, traces: &[TraceStore]) -> Result<Report> {
    let chains = traces.iter().map(summarize).collect::<Result<Vec<_>>>()?;
    let pooled = TraceStore {
        samples: traces.iter().flat_map(|t| t.samples.iter().cloned()).collect(),
        ..TraceStore::default()
    };
    let mut tally = MoveTally::default();
    for t in traces {
        tally.merge(&t.tally);
    }
    let acc = acceptance_from_tally(&tally);
    let mut warnings = Vec::new();
    let overlap = if cfg.hyper.infer_scale {
        let o = scale_overlap(&pooled.scale_series(), cfg.hyper.scale_prior, 30, SCALE_OVERLAP_THRESHOLD)?;
        if o.weakly_identified {
            warnings.push(format!(
                "decay scale is weakly identified: posterior is within TV {:.3} of its prior",
                o.tv
            ));
        }
        Some(o)
    } else {
        None
    };
    let first = &traces[0].meta;
    Ok(Report {
        config_digest: first.config_digest.clone(),
        sampler: first.sampler.clone(),
        model: first.model.clone(),
        n: first.n,
        chains,
        k_posterior: crate::diagnostics::k_posterior(&pooled)?,
        k_mode: k_mode(&pooled)?,
        birth_death_acceptance: combined_rate(&acc, &[MoveKind::Birth, MoveKind::Death]),
        param_acceptance: combined_rate(&acc, &[MoveKind::ParamMh]),
        scale_overlap: overlap,
        warnings,
    })
}

/// Load data and run every chain in parallel.
pub fn fit(cfg: &RunConfig) -> Result<FitOutput> {
    let dataset = load_dataset(&cfg.data, &cfg.model, cfg.seed)?;
    let traces = parallel(cfg.chains, |i| run_chain(cfg, &dataset, i))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let report = report(cfg, &traces)?;
    Ok(FitOutput {
        dataset,
        traces,
        report,
    })
}

/// Fit and write traces, `report.json` and the resolved `config.toml`.
pub fn fit_to_dir(cfg: &RunConfig, dir: &Path) -> Result<FitOutput> {
    let out = fit(cfg)?;
    for (i, t) in out.traces.iter().enumerate() {
        persist::write_trace(dir, i, t)?;
    }
    persist::write_json(&dir.join("report.json"), &out.report)?;
    std::fs::write(dir.join("config.toml"), cfg.to_toml()?)?;
    Ok(out)
}

/// One preliminary run of the tuning grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TuneRow {
    pub sigma_b: Option<f64>,
    pub sigma_r: Option<f64>,
    /// `None` when the chain kept fewer than two samples.
    pub esjd_k: Option<f64>,
    pub k_mean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneResult {
    pub best: TuneRow,
    pub rows: Vec<TuneRow>,
}

/// The configuration with the given proposal standard deviations.
pub fn with_sigmas(cfg: &RunConfig, sigma_b: Option<f64>, sigma_r: Option<f64>) -> RunConfig {
    let mut c = cfg.clone();
    if let Some(s) = sigma_b {
        c.sampler.birth.family = c.sampler.birth.family.with_sigma(s);
    }
    if let (Some(s), FixedDimStrategy::Resample(rc)) = (sigma_r, &mut c.sampler.fixed_dim) {
        rc.family = rc.family.with_sigma(s);
    }
    c
}

/// Grid search over proposal standard deviations scored by ESJD of `K`.
/// Only families with a standard deviation contribute a grid axis; ties go
/// to the smaller birth and then resample value.
pub fn tune(cfg: &RunConfig) -> Result<TuneResult> {
    let dataset = load_dataset(&cfg.data, &cfg.model, cfg.seed)?;
    let birth_axis: Vec<Option<f64>> = if cfg.sampler.birth.family.sigma().is_some() {
        cfg.tune.grid.iter().copied().map(Some).collect()
    } else {
        vec![None]
    };
    let resample_axis: Vec<Option<f64>> = match cfg.sampler.fixed_dim {
        FixedDimStrategy::Resample(rc) if rc.family.sigma().is_some() => cfg
            .tune
            .resample_grid
            .as_ref()
            .unwrap_or(&cfg.tune.grid)
            .iter()
            .copied()
            .map(Some)
            .collect(),
        _ => vec![None],
    };
    let mut points: Vec<(Option<f64>, Option<f64>)> = birth_axis
        .iter()
        .flat_map(|&b| resample_axis.iter().map(move |&r| (b, r)))
        .collect();
    points.sort_by(|a, b| {
        let key = |x: Option<f64>| x.unwrap_or(0.0);
        key(a.0).total_cmp(&key(b.0)).then(key(a.1).total_cmp(&key(b.1)))
    });
    points.dedup();
    let mut base = cfg.clone();
    base.chains = 1;
    base.sampler.burn_in = cfg.tune.burn_in;
    base.sampler.iterations = cfg.tune.burn_in + cfg.tune.samples;
    let rows = parallel(points.len(), |j| -> Result<TuneRow> {
        let (b, r) = points[j];
        let c = with_sigmas(&base, b, r);
        c.validate()?;
        let trace = run_chain(&c, &dataset, 0)?;
        Ok(TuneRow {
            sigma_b: b,
            sigma_r: r,
            esjd_k: esjd_k(&trace).ok(),
            k_mean: k_mean(&trace)?,
        })
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let mut best = rows[0];
    for r in &rows[1..] {
        if r.esjd_k.unwrap_or(f64::NEG_INFINITY) > best.esjd_k.unwrap_or(f64::NEG_INFINITY) {
            best = *r;
        }
    }
    Ok(TuneResult { best, rows })
}

/// Tune and write `tune_scores.csv` and `tune.json`.
pub fn tune_to_dir(cfg: &RunConfig, dir: &Path) -> Result<TuneResult> {
    let result = tune(cfg)?;
    std::fs::create_dir_all(dir)?;
    let mut w = csv::Writer::from_path(dir.join("tune_scores.csv"))?;
    w.write_record(["sigma_b", "sigma_r", "esjd_k", "k_mean"])?;
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for r in &result.rows {
        w.write_record([opt(r.sigma_b), opt(r.sigma_r), opt(r.esjd_k), r.k_mean.to_string()])?;
    }
    w.flush()?;
    persist::write_json(&dir.join("tune.json"), &result)?;
    Ok(result)
}

/// Distance rows for the configured new points, `m x (n + m)`.
pub fn new_point_distances(cfg: &RunConfig, ds: &Dataset) -> Result<Vec<Vec<f64>>> {
    if let Some(p) = &cfg.predict.distances_new {
        let f = std::fs::File::open(p).map_err(|e| Error::Data(format!("cannot open {}: {e}", p.display())))?;
        return read_rows(f);
    }
    if cfg.predict.x_new.is_empty() {
        return Ok(Vec::new());
    }
    let x = ds.x.as_ref().ok_or_else(|| {
        Error::Data("predict.x_new needs an 'x' covariate column in the data".into())
    })?;
    let all: Vec<f64> = x.iter().chain(&cfg.predict.x_new).copied().collect();
    Ok(cfg
        .predict
        .x_new
        .iter()
        .map(|&xl| all.iter().map(|&xj| (xl - xj).abs()).collect())
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictReport {
    pub mode: PredictiveMode,
    pub conjugate_augmented: bool,
    pub points: Vec<PointSummary>,
}

/// Predictive draws for the configured new points. Sequential mode reads
/// the traces in `trace_dir` (after a digest check) or fits afresh.
pub fn predict(cfg: &RunConfig, trace_dir: Option<&Path>) -> Result<(PredictiveOutput, Option<TraceStore>)> {
    let ds = load_dataset(&cfg.data, &cfg.model, cfg.seed)?;
    let task = PredictiveTask {
        mode: cfg.predict.mode,
        d_new: new_point_distances(cfg, &ds)?,
        draws_per_sample: cfg.predict.draws_per_sample,
    };
    match cfg.predict.mode {
        PredictiveMode::Sequential => {
            let traces = match trace_dir {
                Some(dir) => {
                    let t = persist::read_all(dir)?;
                    check_digest(cfg, &t)?;
                    t
                }
                None => parallel(cfg.chains, |i| run_chain(cfg, &ds, i))
                    .into_iter()
                    .collect::<Result<Vec<_>>>()?,
            };
            let mut rng = substream(cfg.seed, "predictive");
            let mut out: Option<PredictiveOutput> = None;
            for t in &traces {
                let o = predict_sequential(t, &ds.y, &task, &cfg.model, cfg.prior.decay, &mut rng)?;
                match out.as_mut() {
                    None => out = Some(o),
                    Some(acc) => {
                        let offset = acc.draws.last().map_or(0, |d| d.sample + 1);
                        acc.conjugate_augmented |= o.conjugate_augmented;
                        acc.draws.extend(o.draws.into_iter().map(|mut d| {
                            d.sample += offset;
                            d
                        }));
                    }
                }
            }
            Ok((out.expect("at least one chain"), None))
        }
        PredictiveMode::JointImputation => {
            if cfg.sampler.kind != SamplerKind::Rjmcmc {
                return Err(Error::Config(
                    "joint-imputation prediction runs the reversible-jump sampler; set sampler.kind = \"rjmcmc\"".into(),
                ));
            }
            let d = if task.m() == 0 {
                ds.distances.clone()
            } else {
                augmented_distances(&ds.distances, &task.d_new)?
            };
            let mut rng = substream(cfg.seed, "chain/0");
            let prior = DdcrpPrior::new(d, cfg.prior.decay, cfg.prior.alpha)?;
            let init = initial_links(&prior, cfg.sampler.init, &mut rng);
            let (out, trace) = predict_joint(
                &ds.y,
                prior,
                &task,
                cfg.model,
                Some(&init),
                &rj_config(cfg),
                chain_meta(cfg, 0),
                &mut rng,
            )?;
            Ok((out, Some(trace)))
        }
    }
}

/// Predict and write `predictive.csv` and `predictive.json`.
pub fn predict_to_dir(cfg: &RunConfig, trace_dir: Option<&Path>, dir: &Path) -> Result<PredictReport> {
    let (out, trace) = predict(cfg, trace_dir)?;
    std::fs::create_dir_all(dir)?;
    let mut w = csv::Writer::from_path(dir.join("predictive.csv"))?;
    w.write_record(["sample", "point", "link", "source", "value"])?;
    for d in &out.draws {
        w.write_record([
            d.sample.to_string(),
            d.point.to_string(),
            d.link.map(|l| l.to_string()).unwrap_or_default(),
            d.source.to_string(),
            d.value.to_string(),
        ])?;
    }
    w.flush()?;
    if let Some(t) = &trace {
        persist::write_trace(&dir.join("joint"), 0, t)?;
    }
    let m = out.draws.iter().map(|d| d.point + 1).max().unwrap_or(0);
    let rep = PredictReport {
        mode: out.mode,
        conjugate_augmented: out.conjugate_augmented,
        points: out.summarize(m),
    };
    persist::write_json(&dir.join("predictive.json"), &rep)?;
    Ok(rep)
}

/// Refuse traces produced under a different configuration.
pub fn check_digest(cfg: &RunConfig, traces: &[TraceStore]) -> Result<()> {
    let want = cfg.digest();
    for t in traces {
        if t.meta.config_digest != want {
            return Err(Error::Config(format!(
                "config digest mismatch for chain {}: trace has {}, config gives {want}",
                t.meta.chain, t.meta.config_digest
            )));
        }
    }
    Ok(())
}

/// Recompute the report of stored traces after checking their digest.
pub fn diagnose(cfg: &RunConfig, dir: &Path) -> Result<Report> {
    let traces = persist::read_all(dir)?;
    check_digest(cfg, &traces)?;
    report(cfg, &traces)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub a: BTreeMap<usize, f64>,
    pub b: BTreeMap<usize, f64>,
    pub tv: f64,
}

/// Pooled `K` posteriors of two stored runs and their total variation.
pub fn compare(dir_a: &Path, dir_b: &Path) -> Result<Comparison> {
    let pooled = |dir: &Path| -> Result<BTreeMap<usize, f64>> {
        let traces = persist::read_all(dir)?;
        let all = TraceStore {
            samples: traces.into_iter().flat_map(|t| t.samples).collect(),
            ..TraceStore::default()
        };
        crate::diagnostics::k_posterior(&all)
    };
    let a = pooled(dir_a)?;
    let b = pooled(dir_b)?;
    Ok(Comparison {
        tv: tv_distance(&a, &b),
        a,
        b,
    })
}
