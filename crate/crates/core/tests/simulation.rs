//! Generator fidelity and study-level properties.

use cpsurv::comparators::ComparatorFamily;
use cpsurv::data::write_dataset;
use cpsurv::mcmc::SamplerConfig;
use cpsurv::simstudy::{
    derive_seed, log_rank, run_study, simulate_dataset, ScenarioKind, SimScenario, StudyModel,
};

#[test]
fn log_rank_p_values_are_uniform_under_equal_arms() {
    let sc = SimScenario::new(ScenarioKind::TreatmentDelay, 1.3, 1.0, 1.0, 100, 3.0);
    let mut p: Vec<f64> = (0..200)
        .map(|rep| {
            let ds = simulate_dataset(&sc, derive_seed(77, rep)).unwrap();
            log_rank(&ds, "trt").unwrap().p_value
        })
        .collect();
    p.sort_by(f64::total_cmp);
    let n = p.len() as f64;
    let d = p
        .iter()
        .enumerate()
        .map(|(i, &v)| ((i as f64 + 1.0) / n - v).max(v - i as f64 / n))
        .fold(0.0, f64::max);
    // Kolmogorov–Smirnov critical value at α = 0.001.
    assert!(d < 1.949 / n.sqrt(), "KS distance {d}");
}

#[test]
fn generator_is_deterministic_in_bytes() {
    let sc = SimScenario::new(ScenarioKind::ConvergingEffect, 0.75, 0.5, 2.0, 50, 5.0);
    let bytes = |seed| {
        let mut out = Vec::new();
        write_dataset(&simulate_dataset(&sc, seed).unwrap(), &mut out).unwrap();
        out
    };
    assert_eq!(bytes(5), bytes(5));
    assert_ne!(bytes(5), bytes(6));
}

#[test]
fn true_model_beats_exponential_on_strong_delay() {
    let sc = SimScenario {
        replicates: 4,
        seed: 21,
        ..SimScenario::new(ScenarioKind::TreatmentDelay, 1.3, 0.25, 1.0, 500, 3.0)
    };
    let models = [
        StudyModel::truth(ScenarioKind::TreatmentDelay),
        StudyModel::comparator(ComparatorFamily::Exponential),
    ];
    let cfg = SamplerConfig::simulation(0).with_lengths(6000, 1500, 3);
    let res = run_study(&[sc], &models, &cfg).unwrap();
    let scores = &res.scenarios[0].models;
    let (cp, ex) = (scores[0].err_diff.unwrap(), scores[1].err_diff.unwrap());
    assert!(cp <= ex, "change-point {cp} vs exponential {ex}");
    assert_eq!(scores[0].n_errors, 0);
}
