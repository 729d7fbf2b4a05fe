//! Acceptance suite: every criterion at its stated tolerance, one
//! `criterion N: PASS|FAIL` line each. Exits non-zero if any fails.

#[path = "../common/mod.rs"]
mod common;

use common::*;
use ddcrp::diagnostics::{ess, tv_distance};
use ddcrp::harness::{self, presets, RunConfig};
use ddcrp::hyper::{alpha_gibbs_update, sample_auxiliaries, scale_mh_update, GammaPrior};
use ddcrp::model::{gamma_marginal_shape_log_lik, poisson_marginal_cluster_log_lik};
use ddcrp::partition::{classify_move, LinkState};
use ddcrp::predictive::{predict_joint, predict_sequential, PredictiveMode, PredictiveTask};
use ddcrp::proposals::{
    birth_log_density, evaluate_resample, propose_birth_params, propose_resample, FixedDist,
    ParamFamily, ProposalConfig,
};
use ddcrp::rjmcmc::{run_rjmcmc, LinkStrategy, RjChain, RjConfig};
use ddcrp::gibbs::GibbsSampler;
use ddcrp::hyper::HyperConfig;
use ddcrp::proposals::FixedDimStrategy;
use ddcrp::trace::{Schedule, TraceMeta};
use ddcrp::{
    Assignments, ClusterStats, DdcrpPrior, Decay, DistanceMatrix, GammaShape, Observations,
    PoissonGamma,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::function::gamma::ln_gamma;
use std::process::ExitCode;
use std::time::Instant;

struct Outcome {
    pass: bool,
    detail: String,
}

impl Outcome {
    fn new(pass: bool, detail: String) -> Self {
        Self { pass, detail }
    }
}

const ENUM_SWEEPS: usize = 200_000;

fn enum_decays() -> [Decay; 2] {
    [Decay::Identity, Decay::Exponential { scale: 0.5 }]
}

fn criterion_1() -> Outcome {
    let inst = enum_instance();
    let mut worst: f64 = 0.0;
    let mut lines = Vec::new();
    for decay in enum_decays() {
        let exact = exact_posterior(&inst.x, decay, 1.0, inst.model_a(), inst.model_b(), &inst.y);
        let g = tv(&empirical(&run_enum_gibbs(&inst, decay, ENUM_SWEEPS, 11), 5), &exact);
        worst = worst.max(g);
        let mut row = format!("{}: gibbs {g:.4}", decay_name(decay));
        for (k, v) in rj_variants().into_iter().enumerate() {
            let t = run_enum_rj(&inst, decay, v, false, ENUM_SWEEPS, 20 + k as u64);
            let d = tv(&empirical(&t, 5), &exact);
            worst = worst.max(d);
            row.push_str(&format!(", {} {d:.4}", v.name));
        }
        lines.push(row);
    }
    Outcome::new(worst < 0.03, format!("max TV {worst:.4} < 0.03; {}", lines.join("; ")))
}

fn decay_name(d: Decay) -> &'static str {
    match d {
        Decay::Identity => "identity",
        Decay::Exponential { .. } => "exponential(0.5)",
        Decay::Window { .. } => "window",
    }
}

fn poisson_config(overrides: &[(&str, &str)]) -> RunConfig {
    let o: Vec<(String, String)> = overrides
        .iter()
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect();
    RunConfig::from_toml_with_overrides(presets::toml("poisson-overlapping").unwrap(), &o).unwrap()
}

fn criterion_2() -> Outcome {
    let nmm = r#"{family="normal-mm", sigma=1.0}"#;
    let lnmm = r#"{family="log-normal-mm", sigma=0.3}"#;
    let rs_nmm = r#"{strategy="resample", family="normal-mm", sigma=1.0}"#;
    let rs_lnmm = r#"{strategy="resample", family="log-normal-mm", sigma=0.3}"#;
    let rj = ("sampler.kind", "rjmcmc");
    let configs: Vec<(&str, Vec<(&str, &str)>)> = vec![
        ("gibbs", vec![]),
        ("prior/no-update", vec![rj]),
        ("prior/resample", vec![rj, ("sampler.fixed_dim", rs_nmm)]),
        ("nmm/no-update", vec![rj, ("sampler.birth", nmm)]),
        ("nmm/resample", vec![rj, ("sampler.birth", nmm), ("sampler.fixed_dim", rs_nmm)]),
        ("lnmm/no-update", vec![rj, ("sampler.birth", lnmm)]),
        ("lnmm/resample", vec![rj, ("sampler.birth", lnmm), ("sampler.fixed_dim", rs_lnmm)]),
    ];
    let mut pass = true;
    let mut details = Vec::new();
    let mut posts = Vec::new();
    let mut esses = Vec::new();
    for (name, o) in &configs {
        let out = match harness::fit(&poisson_config(o)) {
            Ok(out) => out,
            Err(e) => return Outcome::new(false, format!("{name}: {e}")),
        };
        let r = &out.report;
        let ess_k = r.chains[0].ess_k.map_or(0.0, |e| e.value);
        let samples = r.chains[0].samples;
        pass &= r.k_mode == 3 && ess_k > 200.0 && samples == 20_000;
        details.push(format!("{name} mode {} ESS(K) {ess_k:.0}", r.k_mode));
        posts.push(r.k_posterior.clone());
        esses.push(ess_k);
    }
    let tv_gibbs_rj = tv_distance(&posts[0], &posts[1]);
    let gibbs_largest = esses[1..].iter().all(|&e| esses[0] > e);
    pass &= tv_gibbs_rj < 0.05 && gibbs_largest;
    Outcome::new(
        pass,
        format!(
            "TV(gibbs, prior/no-update) {tv_gibbs_rj:.4} < 0.05, gibbs ESS largest {gibbs_largest}; {}",
            details.join(", ")
        ),
    )
}

/// `R_i` computed directly from the covariate.
fn row_weights(x: &[f64], decay: Decay) -> Vec<f64> {
    (0..x.len())
        .map(|i| {
            (0..x.len())
                .filter(|&j| j != i)
                .map(|j| decay.eval((x[i] - x[j]).abs()))
                .sum()
        })
        .collect()
}

fn criterion_3() -> Outcome {
    let x = [0.0, 0.4, 1.1, 2.0, 3.2];
    let decay = Decay::Exponential { scale: 0.7 };
    let c = Assignments::new(vec![0, 0, 1, 3, 3]).unwrap();
    let gp = GammaPrior::new(2.0, 1.0);
    let mut prior = DdcrpPrior::new(DistanceMatrix::from_covariate(&x).unwrap(), decay, 1.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let draws = 100_000;
    let mut alphas = Vec::with_capacity(draws);
    for t in 0..draws + 1_000 {
        let d = alpha_gibbs_update(&c, &prior, gp, &mut rng);
        prior.set_alpha(d.alpha).unwrap();
        if t >= 1_000 {
            alphas.push(d.alpha);
        }
    }
    let r = row_weights(&x, decay);
    let n_self = 2.0;
    let log_density = |a: f64| {
        if a <= 0.0 {
            return f64::NEG_INFINITY;
        }
        (gp.shape - 1.0 + n_self) * a.ln() - gp.rate * a - r.iter().map(|ri| (a + ri).ln()).sum::<f64>()
    };
    let (grid, cdf) = grid_cdf(log_density, 0.0, 40.0, 400_001);
    let ks = ks_statistic(&alphas, |a| interp_cdf(&grid, &cdf, a));
    Outcome::new(ks < 0.02, format!("KS {ks:.4} < 0.02 over {draws} draws"))
}

fn scale_chain(joint: bool, seed: u64) -> Vec<f64> {
    let x = [0.0, 0.8, 1.5, 3.0];
    let c = Assignments::new(vec![1, 1, 1, 3]).unwrap();
    let sp = GammaPrior::new(2.0, 1.0);
    let mut prior = DdcrpPrior::new(
        DistanceMatrix::from_covariate(&x).unwrap(),
        Decay::Exponential { scale: 1.0 },
        0.8,
    )
    .unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (burn, draws, thin) = (2_000, 100_000, 5);
    let mut out = Vec::with_capacity(draws);
    for t in 0..burn + draws * thin {
        let aux = joint.then(|| sample_auxiliaries(&prior, &mut rng));
        scale_mh_update(&c, &mut prior, sp, 0.8, aux.as_deref(), &mut rng).unwrap();
        if t >= burn && (t - burn) % thin == 0 {
            out.push(prior.decay().scale().unwrap());
        }
    }
    out
}

fn criterion_4() -> Outcome {
    let x = [0.0f64, 0.8, 1.5, 3.0];
    let links = [1usize, 1, 1, 3];
    let (a, b, alpha) = (2.0, 1.0, 0.8);
    let linked: f64 = links
        .iter()
        .enumerate()
        .filter(|&(i, &j)| i != j)
        .map(|(i, &j)| (x[i] - x[j]).abs())
        .sum();
    let log_density = |s: f64| {
        if s <= 0.0 {
            return f64::NEG_INFINITY;
        }
        let r = row_weights(&x, Decay::Exponential { scale: s });
        (a - 1.0) * s.ln() - (b + linked) * s - r.iter().map(|ri| (alpha + ri).ln()).sum::<f64>()
    };
    let (grid, cdf) = grid_cdf(log_density, 0.0, 30.0, 300_001);
    let ks_joint = ks_statistic(&scale_chain(true, 41), |s| interp_cdf(&grid, &cdf, s));
    let ks_plain = ks_statistic(&scale_chain(false, 42), |s| interp_cdf(&grid, &cdf, s));
    Outcome::new(
        ks_joint < 0.03 && ks_plain < 0.03,
        format!("KS joint {ks_joint:.4}, non-joint {ks_plain:.4} < 0.03"),
    )
}

/// `log ∫ exp(g(u)) du` by Simpson's rule over the region where `g` is
/// within 80 nats of its maximum, located on a coarse scan of `[lo, hi]`.
fn log_integral(g: impl Fn(f64) -> f64, lo: f64, hi: f64) -> f64 {
    let scan = 20_000;
    let h = (hi - lo) / scan as f64;
    let vals: Vec<f64> = (0..=scan).map(|k| g(lo + k as f64 * h)).collect();
    let gmax = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let first = vals.iter().position(|&v| v > gmax - 80.0).unwrap();
    let last = vals.iter().rposition(|&v| v > gmax - 80.0).unwrap();
    let a = lo + first.saturating_sub(1) as f64 * h;
    let b = lo + (last + 1).min(scan) as f64 * h;
    gmax + simpson(|u| (g(u) - gmax).exp(), a, b, 20_000).ln()
}

fn criterion_5() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst_pg: f64 = 0.0;
    let mut worst_gs: f64 = 0.0;
    for _ in 0..50 {
        let n = rng.random_range(1..=10);
        let y: Vec<f64> = (0..n).map(|_| f64::from(rng.random_range(0u32..30))).collect();
        let (a, b) = (rng.random_range(0.5..5.0), rng.random_range(0.05..3.0));
        let closed = poisson_marginal_cluster_log_lik(&y, a, b).unwrap();
        // Integrate over u = ln(lambda).
        let g = |u: f64| {
            let l = u.exp();
            y.iter().map(|&v| v * u - l - ln_gamma(v + 1.0)).sum::<f64>()
                + a * b.ln() - ln_gamma(a) + a * u - b * l
        };
        let quad = log_integral(g, -40.0, 8.0);
        worst_pg = worst_pg.max(((closed - quad).exp() - 1.0).abs());
    }
    for _ in 0..50 {
        let n = rng.random_range(1..=10);
        let y: Vec<f64> = (0..n).map(|_| rng.random_range(0.05..8.0)).collect();
        let shape = rng.random_range(0.3..10.0);
        let (rs, rr) = (rng.random_range(0.5..5.0), rng.random_range(0.1..3.0));
        let closed = gamma_marginal_shape_log_lik(&y, shape, rs, rr).unwrap();
        // Integrate the rate out over u = ln(beta).
        let g = |u: f64| {
            let beta = u.exp();
            y.iter()
                .map(|&v| shape * u - ln_gamma(shape) + (shape - 1.0) * v.ln() - beta * v)
                .sum::<f64>()
                + rs * rr.ln() - ln_gamma(rs) + rs * u - rr * beta
        };
        let quad = log_integral(g, -40.0, 10.0);
        worst_gs = worst_gs.max(((closed - quad).exp() - 1.0).abs());
    }
    Outcome::new(
        worst_pg < 1e-6 && worst_gs < 1e-6,
        format!("max relative error poisson-gamma {worst_pg:.2e}, gamma-shape {worst_gs:.2e} < 1e-6"),
    )
}

fn criterion_6() -> Outcome {
    let inst = enum_instance();
    let mut least = f64::INFINITY;
    let mut parts = Vec::new();
    for decay in enum_decays() {
        let exact = exact_posterior(&inst.x, decay, 1.0, inst.model_a(), inst.model_b(), &inst.y);
        for (k, v) in rj_variants().into_iter().enumerate().filter(|(_, v)| v.name.starts_with("lnmm")) {
            let t = run_enum_rj(&inst, decay, v, true, ENUM_SWEEPS, 60 + k as u64);
            let d = tv(&empirical(&t, 5), &exact);
            least = least.min(d);
            parts.push(format!("{} {} {d:.4}", decay_name(decay), v.name));
        }
    }
    Outcome::new(
        least > 0.05,
        format!("LNMM without log|J|: min TV {least:.4} > 0.05; {}", parts.join(", ")),
    )
}

fn criterion_7() -> Outcome {
    let cfg = RunConfig::from_toml(presets::toml("old-faithful").unwrap()).unwrap();
    let out = match harness::fit(&cfg) {
        Ok(out) => out,
        Err(e) => return Outcome::new(false, e.to_string()),
    };
    let r = &out.report;
    let bd = r.birth_death_acceptance.unwrap_or(f64::NAN);
    let pa = r.param_acceptance.unwrap_or(f64::NAN);
    let ess_lp = r.chains[0].ess_log_post.map_or(0.0, |e| e.value);
    let pass = r.k_mode == 2
        && (0.001..=0.05).contains(&bd)
        && (0.10..=0.60).contains(&pa)
        && ess_lp > 500.0;
    Outcome::new(
        pass,
        format!(
            "K mode {} (P {:.3}), birth+death acceptance {:.2}%, parameter acceptance {:.1}%, ESS(log post) {ess_lp:.0}",
            r.k_mode,
            r.k_posterior.get(&2).copied().unwrap_or(0.0),
            100.0 * bd,
            100.0 * pa
        ),
    )
}

fn criterion_8() -> Outcome {
    // (a) joint imputation with no new points reproduces the fit.
    let cfg = poisson_config(&[
        ("sampler.kind", "rjmcmc"),
        ("sampler.iterations", "3000"),
        ("sampler.burn_in", "500"),
        ("predict.mode", "joint-imputation"),
    ]);
    let fitted = harness::fit(&cfg).unwrap();
    let (_, joint_trace) = harness::predict(&cfg, None).unwrap();
    let identical = joint_trace.as_ref() == Some(&fitted.traces[0]);

    // (b) sequential link categorical on n = 3.
    let model = PoissonGamma::new(1.0, 0.1).unwrap();
    let y3 = [1.0, 2.0, 3.0];
    let decay = Decay::Exponential { scale: 0.5 };
    let x3 = [0.0, 1.0, 2.0];
    let prior3 = DdcrpPrior::new(DistanceMatrix::from_covariate(&x3).unwrap(), decay, 0.7).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let short = RjConfig {
        hyper: HyperConfig::fixed(),
        ..RjConfig::new(
            Schedule { iterations: 200, burn_in: 100, thinning: 100 },
            LinkStrategy::Prior,
            ProposalConfig::new(ParamFamily::PriorDraw),
            FixedDimStrategy::NoUpdate,
        )
    };
    let trace3 = run_rjmcmc(
        prior3,
        model,
        Observations::new(&y3),
        &Assignments::self_links(3),
        &short,
        TraceMeta::default(),
        &mut rng,
    )
    .unwrap();
    let row = vec![0.2, 1.0, 2.5, 0.0];
    let draws = 100_000;
    let task = PredictiveTask { mode: PredictiveMode::Sequential, d_new: vec![row.clone()], draws_per_sample: draws };
    let out = predict_sequential(&trace3, &y3, &task, &model, decay, &mut rng).unwrap();
    let w: Vec<f64> = row[..3].iter().map(|&d| (-0.5 * d).exp()).collect();
    let z = 0.7 + w.iter().sum::<f64>();
    let want: Vec<f64> = std::iter::once(0.7 / z).chain(w.iter().map(|v| v / z)).collect();
    let mut counts = [0usize; 4];
    for d in &out.draws {
        counts[d.link.map_or(0, |j| j + 1)] += 1;
    }
    let n_draws = out.draws.len() as f64;
    let worst_z = counts
        .iter()
        .zip(&want)
        .map(|(&c, &p)| (c as f64 / n_draws - p).abs() / (p * (1.0 - p) / n_draws).sqrt())
        .fold(0.0, f64::max);

    // (c) sequential and joint means agree when the new point is isolated.
    let y4 = [2.0, 3.0, 8.0, 9.0];
    let x4 = [0.0, 0.5, 1.0, 1.5];
    let decay4 = Decay::Exponential { scale: 1.0 };
    let prior4 = DdcrpPrior::new(DistanceMatrix::from_covariate(&x4).unwrap(), decay4, 1.0).unwrap();
    let d_new = vec![vec![60.0, 60.0, 60.0, 60.0, 0.0]];
    let long = RjConfig {
        hyper: HyperConfig::fixed(),
        ..RjConfig::new(
            Schedule { iterations: 42_000, burn_in: 2_000, thinning: 2 },
            LinkStrategy::Prior,
            ProposalConfig::new(ParamFamily::NormalMm { sigma: 1.0 }),
            FixedDimStrategy::NoUpdate,
        )
    };
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let trace4 = run_rjmcmc(
        prior4.clone(),
        model,
        Observations::new(&y4),
        &Assignments::self_links(4),
        &long,
        TraceMeta::default(),
        &mut rng,
    )
    .unwrap();
    let seq_task = PredictiveTask { mode: PredictiveMode::Sequential, d_new: d_new.clone(), draws_per_sample: 1 };
    let seq = predict_sequential(&trace4, &y4, &seq_task, &model, decay4, &mut rng).unwrap();
    let aug = ddcrp::predictive::augmented_distances(prior4.distances(), &d_new).unwrap();
    let prior5 = DdcrpPrior::new(aug, decay4, 1.0).unwrap();
    let joint_task = PredictiveTask { mode: PredictiveMode::JointImputation, d_new, draws_per_sample: 1 };
    let (joint, _) = predict_joint(&y4, prior5, &joint_task, model, None, &long, TraceMeta::default(), &mut rng).unwrap();
    let (ms, ses) = mean_and_se(&seq.values_for(0));
    let (mj, sej) = mean_and_se(&joint.values_for(0));
    let se = (ses * ses + sej * sej).sqrt();
    let agree = (ms - mj).abs() < 3.0 * se;

    Outcome::new(
        identical && worst_z < 3.0 && agree,
        format!(
            "m=0 joint identical to fit {identical}; link categorical max |z| {worst_z:.2} < 3; \
             means sequential {ms:.3} vs joint {mj:.3} (3 SE = {:.3})",
            3.0 * se
        ),
    )
}

/// Mean and its Monte Carlo standard error from the ESS of the series.
fn mean_and_se(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let e = ess(v).map(|e| e.value).unwrap_or(n).min(n);
    (mean, (var / e).sqrt())
}

fn random_prior(rng: &mut ChaCha8Rng, n: usize) -> DdcrpPrior {
    let x: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..5.0)).collect();
    let decay = match rng.random_range(0..3) {
        0 => Decay::Identity,
        1 => Decay::Exponential { scale: rng.random_range(0.1..3.0) },
        _ => Decay::Window { width: rng.random_range(0.5..3.0) },
    };
    DdcrpPrior::new(DistanceMatrix::from_covariate(&x).unwrap(), decay, rng.random_range(0.1..5.0)).unwrap()
}

fn criterion_9() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let cases = 10_000;

    // Link probabilities of every row sum to one.
    let mut norm_err: f64 = 0.0;
    for _ in 0..cases {
        let n = rng.random_range(1..=12);
        let p = random_prior(&mut rng, n);
        for i in 0..n {
            let s: f64 = (0..n).map(|j| p.link_log_prob(i, j).exp()).sum();
            norm_err = norm_err.max((s - 1.0).abs());
        }
    }

    // Move classification agrees with the change in component count.
    let mut k_mismatch = 0;
    for _ in 0..cases {
        let n = rng.random_range(1..=12);
        let links: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
        let (i, c_star) = (rng.random_range(0..n), rng.random_range(0..n));
        let before = components(&links).len() as isize;
        let mut after_links = links.clone();
        after_links[i] = c_star;
        let delta = components(&after_links).len() as isize - before;
        let c = Assignments::new(links).unwrap();
        let class = classify_move(&c, i, c_star).unwrap().class;
        let planned = LinkState::new(&c).plan(i, c_star).class;
        if class.k_delta() != delta || planned != class {
            k_mismatch += 1;
        }
    }

    // Proposal densities evaluated after the fact equal those at draw time.
    let mut round_trip_err: f64 = 0.0;
    let pg = PoissonGamma::new(1.0, 0.1).unwrap();
    let gs = GammaShape::new(2.0, 0.5, 2.0, 0.5).unwrap();
    for k in 0..cases {
        let family = match rng.random_range(0..5) {
            0 => ParamFamily::PriorDraw,
            1 => ParamFamily::Independence { dist: FixedDist::Gamma { shape: 2.0, rate: 0.5 } },
            2 => ParamFamily::NormalMm { sigma: rng.random_range(0.05..2.0) },
            3 => ParamFamily::InverseGammaMm,
            _ => ParamFamily::LogNormalMm { sigma: rng.random_range(0.05..2.0) },
        };
        let cfg = ProposalConfig::new(family);
        let len = rng.random_range(0..7);
        let err = if k % 2 == 0 {
            let y: Vec<f64> = (0..len).map(|_| f64::from(rng.random_range(0u32..20))).collect();
            proposal_round_trip(&pg, &y, &cfg, &mut rng)
        } else {
            let y: Vec<f64> = (0..len).map(|_| rng.random_range(0.1..6.0)).collect();
            proposal_round_trip(&gs, &y, &cfg, &mut rng)
        };
        round_trip_err = round_trip_err.max(err);
    }

    // Cached log posteriors stay within 1e-8 of a full recomputation.
    let mut drift: f64 = 0.0;
    for case in 0..40 {
        let n = rng.random_range(3..=12);
        let p = random_prior(&mut rng, n);
        let init = p.sample_assignments(&mut rng);
        if case % 2 == 0 {
            let y: Vec<f64> = (0..n).map(|_| f64::from(rng.random_range(0u32..15))).collect();
            let mut g = GibbsSampler::new(p.clone(), pg, Observations::new(&y), &init).unwrap();
            let mut rj = RjChain::new(p, pg, Observations::new(&y), &init, 0.5, &mut rng).unwrap();
            let cfg = drift_config(ParamFamily::NormalMm { sigma: 1.0 });
            for _ in 0..200 {
                g.sweep(false, None, &mut rng);
                rj.sweep(&cfg, None, &mut rng);
                rj.update_all_params(None, &mut rng);
                drift = drift.max((g.log_post() - g.recompute_log_post()).abs());
                drift = drift.max((rj.log_post() - rj.recompute_log_post()).abs());
            }
        } else {
            let y: Vec<f64> = (0..n).map(|_| rng.random_range(0.2..6.0)).collect();
            let mut rj = RjChain::new(p, gs, Observations::new(&y), &init, 0.5, &mut rng).unwrap();
            let cfg = drift_config(ParamFamily::InverseGammaMm);
            for _ in 0..200 {
                rj.sweep(&cfg, None, &mut rng);
                rj.update_all_params(None, &mut rng);
                drift = drift.max((rj.log_post() - rj.recompute_log_post()).abs());
            }
        }
    }

    let pass = norm_err < 1e-12 && k_mismatch == 0 && round_trip_err == 0.0 && drift < 1e-8;
    Outcome::new(
        pass,
        format!(
            "normalisation error {norm_err:.1e}; K-delta mismatches {k_mismatch}/{cases}; \
             proposal round-trip error {round_trip_err:.1e} over {cases}; log-post drift {drift:.1e} < 1e-8"
        ),
    )
}

fn drift_config(family: ParamFamily) -> RjConfig {
    RjConfig::new(
        Schedule { iterations: 1, burn_in: 0, thinning: 1 },
        LinkStrategy::Uniform,
        ProposalConfig::new(family),
        FixedDimStrategy::Resample(ProposalConfig::new(family)),
    )
}

/// Largest discrepancy between the densities recorded with a draw and the
/// same densities evaluated afterwards, for a birth and a resample pair.
fn proposal_round_trip<M: ddcrp::ClusterModel>(model: &M, y: &[f64], cfg: &ProposalConfig, rng: &mut ChaCha8Rng) -> f64 {
    let s = ClusterStats::from_values(y);
    let d = propose_birth_params(model, &s, cfg, rng);
    let (q, j) = birth_log_density(model, &s, cfg, &d.value);
    let mut err = gap(q, d.log_q).max(gap(j, d.log_jacobian));
    if cfg.family.sigma().is_some() || cfg.family == ParamFamily::InverseGammaMm {
        let split = y.len() / 2;
        let (sa, sb) = (ClusterStats::from_values(&y[..split]), ClusterStats::from_values(&y[split..]));
        let r = propose_resample(model, &sa, &sb, cfg, rng);
        let back = evaluate_resample(model, &sa, &sb, cfg, &r.rho_remaining, &r.rho_target);
        err = err.max(gap(back, r.log_q));
    }
    err
}

// Equal infinities count as agreement.
fn gap(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs()
    }
}

fn main() -> ExitCode {
    let criteria: [(u32, fn() -> Outcome); 9] = [
        (1, criterion_1),
        (2, criterion_2),
        (3, criterion_3),
        (4, criterion_4),
        (5, criterion_5),
        (6, criterion_6),
        (7, criterion_7),
        (8, criterion_8),
        (9, criterion_9),
    ];
    let only: Option<u32> = std::env::var("ACCEPTANCE_ONLY").ok().and_then(|s| s.parse().ok());
    let mut failed = 0;
    for (id, f) in criteria {
        if only.is_some_and(|o| o != id) {
            continue;
        }
        let start = Instant::now();
        let o = f();
        let verdict = if o.pass { "PASS" } else { "FAIL" };
        println!("criterion {id}: {verdict} ({}) [{:.1}s]", o.detail, start.elapsed().as_secs_f64());
        if !o.pass {
            failed += 1;
        }
    }
    if failed > 0 {
        println!("acceptance: {failed} criterion(s) failed");
        ExitCode::FAILURE
    } else {
        println!("acceptance: all criteria passed");
        ExitCode::SUCCESS
    }
}
