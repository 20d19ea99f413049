//! Comparator families fit end to end with the shared sampler.

use cpsurv::comparators::{comparator_rmst_diff, fit_comparator, ComparatorFamily, ComparatorSpec};
use cpsurv::mcmc::{SamplerConfig, Target};
use cpsurv::simstudy::{simulate_dataset, ScenarioKind, SimScenario};
use std::collections::BTreeMap;

fn exponential_data(seed: u64) -> cpsurv::data::Dataset {
    // Shape 1 with HR applied throughout: exponential with a PH treatment effect.
    let sc = SimScenario::new(ScenarioKind::LossOfEffect, 1.0, 0.5, 40.0, 150, 4.0);
    simulate_dataset(&sc, seed).unwrap()
}

fn short() -> SamplerConfig {
    SamplerConfig::simulation(3).with_lengths(4000, 1000, 3)
}

#[test]
fn every_family_fits_with_monotone_cumulative_hazard() {
    let ds = exponential_data(1);
    for family in ComparatorFamily::ALL {
        let spec = ComparatorSpec::new(family, &["trt"]);
        let (model, fit) = fit_comparator(&spec, &ds, &short()).unwrap();
        assert!(fit.waic.waic.is_finite(), "{family:?}");
        for d in (0..fit.draws.n_draws()).step_by(50) {
            let x = fit.draws.draw(d);
            for z in [[0.0], [1.0]] {
                let mut prev = 0.0;
                for i in 1..=60 {
                    let h = model.cumulative_hazard(x, &z, i as f64 * 0.25).unwrap();
                    assert!(h >= prev && h >= 0.0, "{family:?} draw {d}");
                    prev = h;
                }
            }
        }
        let diff = comparator_rmst_diff(&model, &fit, 15.0, [0.0, 1.0], &BTreeMap::new()).unwrap();
        assert!(diff.median.is_finite());
    }
}

#[test]
fn nested_exponential_waic_is_close_to_weibull() {
    let ds = exponential_data(2);
    let waic = |family| {
        fit_comparator(&ComparatorSpec::new(family, &["trt"]), &ds, &short())
            .unwrap()
            .1
            .waic
            .waic
    };
    let (e, w) = (waic(ComparatorFamily::Exponential), waic(ComparatorFamily::Weibull));
    assert!((e - w).abs() < 2.0, "exponential {e} vs weibull {w}");
}

#[test]
fn spline_hazard_ratio_is_constant_only_under_ph() {
    let ds = exponential_data(3);
    let log_hr = |model: &cpsurv::comparators::ComparatorModel, x: &[f64], t: f64| {
        let h = |z: f64| {
            let (lf, ls) = model.terms(x, &[z], t, t.ln()).unwrap();
            lf - ls
        };
        h(1.0) - h(0.0)
    };
    for (family, varies) in [
        (ComparatorFamily::RoystonParmarPh, false),
        (ComparatorFamily::RoystonParmarNph, true),
    ] {
        let (model, fit) = fit_comparator(&ComparatorSpec::new(family, &["trt"]), &ds, &short()).unwrap();
        assert_eq!(model.names().last().unwrap().contains("gamma1"), varies);
        for d in (0..fit.draws.n_draws()).step_by(100) {
            let x = fit.draws.draw(d);
            let spread = [0.2, 1.0, 3.0]
                .iter()
                .map(|&t| log_hr(&model, x, t))
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
            let range = spread.1 - spread.0;
            if varies {
                assert!(range > 1e-6, "draw {d}");
            } else {
                assert!(range < 1e-10, "draw {d}");
            }
        }
    }
}
