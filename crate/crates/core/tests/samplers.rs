//! Short-run agreement of every sampler with the enumerated posterior on
//! the five-point instance. The full-length check lives in the acceptance
//! suite; these runs use fewer sweeps and a tolerance scaled to match.

mod common;

use common::*;
use ddcrp::Decay;

const SWEEPS: usize = 50_000;
const TOLERANCE: f64 = 0.05;

#[test]
fn gibbs_matches_enumeration() {
    let inst = enum_instance();
    for decay in [Decay::Identity, Decay::Exponential { scale: 0.5 }] {
        let exact = exact_posterior(&inst.x, decay, 1.0, inst.model_a(), inst.model_b(), &inst.y);
        let d = tv(&empirical(&run_enum_gibbs(&inst, decay, SWEEPS, 1), 5), &exact);
        assert!(d < TOLERANCE, "{decay:?}: TV {d}");
    }
}

#[test]
fn rjmcmc_matches_enumeration() {
    let inst = enum_instance();
    let decay = Decay::Exponential { scale: 0.5 };
    let exact = exact_posterior(&inst.x, decay, 1.0, inst.model_a(), inst.model_b(), &inst.y);
    for (k, v) in rj_variants().into_iter().enumerate() {
        let d = tv(&empirical(&run_enum_rj(&inst, decay, v, false, SWEEPS, k as u64), 5), &exact);
        assert!(d < TOLERANCE, "{}: TV {d}", v.name);
    }
}

#[test]
fn missing_lognormal_jacobian_is_detected() {
    let inst = enum_instance();
    let decay = Decay::Identity;
    let exact = exact_posterior(&inst.x, decay, 1.0, inst.model_a(), inst.model_b(), &inst.y);
    let lnmm = rj_variants().into_iter().find(|v| v.name == "lnmm/no-update").unwrap();
    let d = tv(&empirical(&run_enum_rj(&inst, decay, lnmm, true, SWEEPS, 7), 5), &exact);
    assert!(d > 0.1, "mutated sampler TV {d}");
}

#[test]
fn oracle_agrees_with_library_log_prior() {
    let inst = enum_instance();
    for decay in [Decay::Identity, Decay::Exponential { scale: 0.5 }, Decay::Window { width: 1.2 }] {
        let prior = enum_prior(&inst, decay);
        for code in 0..3125 {
            let c = decode(code, 5);
            let lib = prior.assignment_log_prior(&ddcrp::Assignments::new(c.clone()).unwrap());
            let oracle = oracle_log_prior(&inst.x, decay, 1.0, &c);
            assert!(lib == oracle || (lib - oracle).abs() < 1e-12, "{c:?}: {lib} vs {oracle}");
        }
    }
}
