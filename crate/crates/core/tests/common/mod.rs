//! Independent oracles shared by the integration tests: brute-force
//! enumeration of link vectors, grid quadrature and Kolmogorov-Smirnov
//! distances.
#![allow(dead_code)]

use ddcrp::gibbs::{run_gibbs, GibbsConfig};
use ddcrp::hyper::HyperConfig;
use ddcrp::proposals::{FixedDimStrategy, ParamFamily, ProposalConfig};
use ddcrp::rjmcmc::{run_rjmcmc, LinkStrategy, RjConfig};
use ddcrp::trace::{Schedule, TraceMeta, TraceStore};
use ddcrp::{Assignments, DdcrpPrior, Decay, DistanceMatrix, Observations, PoissonGamma};
use rand::SeedableRng;
use statrs::function::gamma::ln_gamma;
use rand_chacha::ChaCha8Rng;

/// Index of `c` among the `n^n` link vectors (base-`n` digits, `c_0` most
/// significant).
pub fn encode(c: &[usize]) -> usize {
    let n = c.len();
    c.iter().fold(0, |acc, &j| acc * n + j)
}

pub fn decode(mut code: usize, n: usize) -> Vec<usize> {
    let mut c = vec![0; n];
    for i in (0..n).rev() {
        c[i] = code % n;
        code /= n;
    }
    c
}

/// Connected components of the undirected link graph, by union-find.
pub fn components(c: &[usize]) -> Vec<Vec<usize>> {
    fn find(p: &mut [usize], i: usize) -> usize {
        let mut r = i;
        while p[r] != r {
            r = p[r];
        }
        p[i] = r;
        r
    }
    let n = c.len();
    let mut parent: Vec<usize> = (0..n).collect();
    for (i, &j) in c.iter().enumerate() {
        let (a, b) = (find(&mut parent, i), find(&mut parent, j));
        parent[a] = b;
    }
    let mut groups: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
    for i in 0..n {
        let r = find(&mut parent, i);
        groups.entry(r).or_default().push(i);
    }
    groups.into_values().collect()
}

/// Poisson-Gamma(a, b) cluster marginal written out from the gamma
/// integral.
pub fn poisson_gamma_marginal(ys: &[f64], a: f64, b: f64) -> f64 {
    let s: f64 = ys.iter().sum();
    let n = ys.len() as f64;
    a * b.ln() - ln_gamma(a) + ln_gamma(a + s) - (a + s) * (b + n).ln()
        - ys.iter().map(|&v| ln_gamma(v + 1.0)).sum::<f64>()
}

/// ddCRP log prior of the link vector `c`, from the covariate directly.
pub fn oracle_log_prior(x: &[f64], decay: Decay, alpha: f64, c: &[usize]) -> f64 {
    let n = x.len();
    let f = |i: usize, j: usize| -> f64 {
        if i == j {
            alpha
        } else {
            let d = (x[i] - x[j]).abs();
            match decay {
                Decay::Exponential { scale } => (-scale * d).exp(),
                Decay::Window { width } => f64::from(u8::from(d < width)),
                Decay::Identity => 1.0,
            }
        }
    };
    (0..n)
        .map(|i| (f(i, c[i]) / (0..n).map(|j| f(i, j)).sum::<f64>()).ln())
        .sum()
}

/// Exact posterior over every link vector of a Poisson-Gamma ddCRP with
/// covariate `x`, by enumeration. Uses neither the library prior nor its
/// partition code.
pub fn exact_posterior(x: &[f64], decay: Decay, alpha: f64, a: f64, b: f64, y: &[f64]) -> Vec<f64> {
    let n = y.len();
    let logp: Vec<f64> = (0..n.pow(n as u32))
        .map(|code| {
            let c = decode(code, n);
            let lp = oracle_log_prior(x, decay, alpha, &c);
            if lp == f64::NEG_INFINITY {
                return lp;
            }
            lp + components(&c)
                .iter()
                .map(|m| {
                    let ys: Vec<f64> = m.iter().map(|&i| y[i]).collect();
                    poisson_gamma_marginal(&ys, a, b)
                })
                .sum::<f64>()
        })
        .collect();
    let max = logp.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = logp.iter().map(|l| (l - max).exp()).collect();
    let z: f64 = w.iter().sum();
    w.into_iter().map(|v| v / z).collect()
}

/// Empirical distribution of link vectors in a trace.
pub fn empirical(trace: &TraceStore, n: usize) -> Vec<f64> {
    let mut p = vec![0.0; n.pow(n as u32)];
    for s in &trace.samples {
        p[encode(s.assignments.as_slice())] += 1.0;
    }
    let total = trace.len() as f64;
    p.iter_mut().for_each(|v| *v /= total);
    p
}

pub fn tv(p: &[f64], q: &[f64]) -> f64 {
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

/// Composite Simpson rule with `2 * half` panels.
pub fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, half: usize) -> f64 {
    let m = 2 * half;
    let h = (b - a) / m as f64;
    let mut s = f(a) + f(b);
    for k in 1..m {
        s += f(a + k as f64 * h) * if k % 2 == 1 { 4.0 } else { 2.0 };
    }
    s * h / 3.0
}

/// CDF of an unnormalised log density tabulated on a uniform grid over
/// `[a, b]`, by the trapezoid rule. Returns `(grid, cdf)`.
pub fn grid_cdf(log_density: impl Fn(f64) -> f64, a: f64, b: f64, points: usize) -> (Vec<f64>, Vec<f64>) {
    let h = (b - a) / (points - 1) as f64;
    let grid: Vec<f64> = (0..points).map(|k| a + k as f64 * h).collect();
    let lv: Vec<f64> = grid.iter().map(|&x| log_density(x)).collect();
    let max = lv.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let dens: Vec<f64> = lv.iter().map(|l| (l - max).exp()).collect();
    let mut cdf = vec![0.0; points];
    for k in 1..points {
        cdf[k] = cdf[k - 1] + 0.5 * h * (dens[k] + dens[k - 1]);
    }
    let z = cdf[points - 1];
    cdf.iter_mut().for_each(|v| *v /= z);
    (grid, cdf)
}

/// Linear interpolation of a tabulated CDF.
pub fn interp_cdf(grid: &[f64], cdf: &[f64], x: f64) -> f64 {
    if x <= grid[0] {
        return 0.0;
    }
    if x >= grid[grid.len() - 1] {
        return 1.0;
    }
    let h = grid[1] - grid[0];
    let k = ((x - grid[0]) / h) as usize;
    let t = (x - grid[k]) / h;
    cdf[k] + t * (cdf[k + 1] - cdf[k])
}

/// Kolmogorov-Smirnov distance between samples and a CDF.
pub fn ks_statistic(samples: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut xs = samples.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    xs.iter()
        .enumerate()
        .map(|(k, &x)| {
            let f = cdf(x);
            (f - k as f64 / n).abs().max(((k + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

/// The small conjugate instance used by the enumeration checks.
pub struct EnumInstance {
    pub y: Vec<f64>,
    pub x: Vec<f64>,
    pub model: PoissonGamma,
}

impl EnumInstance {
    pub fn model_a(&self) -> f64 {
        self.model.a
    }

    pub fn model_b(&self) -> f64 {
        self.model.b
    }
}

pub fn enum_instance() -> EnumInstance {
    EnumInstance {
        y: vec![0.0, 0.0, 30.0, 30.0, 60.0],
        x: vec![0.0, 0.5, 1.0, 3.0, 3.5],
        model: PoissonGamma::new(1.0, 0.1).unwrap(),
    }
}

pub fn enum_prior(inst: &EnumInstance, decay: Decay) -> DdcrpPrior {
    DdcrpPrior::new(DistanceMatrix::from_covariate(&inst.x).unwrap(), decay, 1.0).unwrap()
}

/// Birth family and fixed-dimensional strategy of one RJ configuration.
#[derive(Debug, Clone, Copy)]
pub struct RjVariant {
    pub name: &'static str,
    pub birth: ParamFamily,
    pub fixed_dim: FixedDimStrategy,
}

/// The six RJ configurations: prior, normal and log-normal moment-matched
/// births, each with and without resampling on transfers.
pub fn rj_variants() -> Vec<RjVariant> {
    let nmm = ParamFamily::NormalMm { sigma: 1.0 };
    let lnmm = ParamFamily::LogNormalMm { sigma: 0.3 };
    let mut v = Vec::new();
    for (bname, birth, resample) in [("prior", ParamFamily::PriorDraw, nmm), ("nmm", nmm, nmm), ("lnmm", lnmm, lnmm)] {
        v.push(RjVariant {
            name: Box::leak(format!("{bname}/no-update").into_boxed_str()),
            birth,
            fixed_dim: FixedDimStrategy::NoUpdate,
        });
        v.push(RjVariant {
            name: Box::leak(format!("{bname}/resample").into_boxed_str()),
            birth,
            fixed_dim: FixedDimStrategy::Resample(ProposalConfig::new(resample)),
        });
    }
    v
}

pub fn enum_schedule(sweeps: usize) -> Schedule {
    Schedule {
        iterations: sweeps + 1_000,
        burn_in: 1_000,
        thinning: 1,
    }
}

pub fn run_enum_gibbs(inst: &EnumInstance, decay: Decay, sweeps: usize, seed: u64) -> TraceStore {
    let cfg = GibbsConfig {
        schedule: enum_schedule(sweeps),
        hyper: HyperConfig::fixed(),
        random_scan: false,
    };
    run_gibbs(
        enum_prior(inst, decay),
        inst.model,
        Observations::new(&inst.y),
        &Assignments::self_links(inst.y.len()),
        &cfg,
        TraceMeta::default(),
        &mut ChaCha8Rng::seed_from_u64(seed),
    )
    .unwrap()
}

pub fn run_enum_rj(
    inst: &EnumInstance,
    decay: Decay,
    variant: RjVariant,
    omit_jacobian: bool,
    sweeps: usize,
    seed: u64,
) -> TraceStore {
    let mut cfg = RjConfig::new(
        enum_schedule(sweeps),
        LinkStrategy::Prior,
        ProposalConfig::new(variant.birth),
        variant.fixed_dim,
    );
    cfg.hyper = HyperConfig::fixed();
    cfg.omit_jacobian = omit_jacobian;
    run_rjmcmc(
        enum_prior(inst, decay),
        inst.model,
        Observations::new(&inst.y),
        &Assignments::self_links(inst.y.len()),
        &cfg,
        TraceMeta::default(),
        &mut ChaCha8Rng::seed_from_u64(seed),
    )
    .unwrap()
}
