//! Bundled experiment presets and datasets.

pub const NAMES: [&str; 2] = ["poisson-overlapping", "old-faithful"];

/// Poisson counts in three overlapping covariate groups, collapsed Gibbs
/// with final-run lengths (20,000 retained samples at thinning 5).
pub const POISSON_OVERLAPPING: &str = r#"
seed = 20240601
chains = 1

[data]
source = "simulate"
n = 150
means = [-3.0, 0.0, 3.0]
sd = 1.5
rates = [1.0, 4.0, 7.0]

[model]
kind = "poisson-gamma"
a = 1.0
b = 0.1

[prior]
alpha = 1.0
decay = { form = "exponential", scale = 0.5 }

[sampler]
kind = "gibbs"
iterations = 110000
burn_in = 10000
thinning = 5
link = "prior"
birth = { family = "prior-draw" }
fixed_dim = { strategy = "no-update" }

[hyper]
infer_alpha = true
alpha_prior = { shape = 1.0, rate = 1.0 }
infer_scale = false
"#;

/// Gamma eruption durations with waiting-time distances.
pub const OLD_FAITHFUL: &str = r#"
seed = 1872
chains = 1

[data]
source = "bundled"
name = "old-faithful"

[model]
kind = "gamma-shape"
shape_shape = 2.0
shape_rate = 0.5
rate_shape = 2.0
rate_rate = 0.5

[prior]
alpha = 1.0
decay = { form = "exponential", scale = 0.2 }

[sampler]
kind = "rjmcmc"
iterations = 20000
burn_in = 5000
thinning = 1
link = "prior"
birth = { family = "inverse-gamma-mm" }
fixed_dim = { strategy = "resample", family = "inverse-gamma-mm" }
param_step = 0.5
adapt_param_step = true

[hyper]
infer_alpha = true
alpha_prior = { shape = 1.0, rate = 0.01 }
infer_scale = false
"#;

/// The preset's TOML text.
pub fn toml(name: &str) -> Option<&'static str> {
    match name {
        "poisson-overlapping" => Some(POISSON_OVERLAPPING),
        "old-faithful" => Some(OLD_FAITHFUL),
        _ => None,
    }
}

/// Bundled datasets as CSV text.
pub fn dataset(name: &str) -> Option<&'static str> {
    match name {
        "old-faithful" => Some(include_str!("../../data/old_faithful.csv")),
        _ => None,
    }
}
