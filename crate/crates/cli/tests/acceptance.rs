//! Acceptance suite. Prints one PASS/FAIL/SKIP line per criterion and exits
//! nonzero when any criterion fails. Pass criterion numbers as arguments to
//! run a subset, e.g. `cargo test --test acceptance -- 1 3`.

use std::io::Write;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::Instant;

use cpsurv::comparators::{fit_comparator, ComparatorFamily, ComparatorSpec};
use cpsurv::data::{split_counting_process, write_dataset, Dataset, SubjectRecord};
use cpsurv::hazard::{
    cte_cum_hazard_increment, cte_hazard_ratio, link_segment_params, segment_cum_hazard_increment,
    weibull_hazard, CteParams, SegmentParams,
};
use cpsurv::likelihood::{log_prior_changepoints, ChangePointModel, ParamKind};
use cpsurv::mcmc::{effective_sample_size, fit_changepoint, SamplerConfig};
use cpsurv::scenario::{expand_preset, Constraint, Family, ModelSpec, ScenarioPreset};
use cpsurv::simstudy::{
    derive_seed, km_sup_distance, run_study, simulate_dataset, ScenarioKind, SimScenario, StudyModel,
};
use cpsurv::special::{integrate_adaptive, regularized_upper_gamma};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

enum Status {
    Pass,
    Fail,
    Skip,
}

struct Outcome {
    status: Status,
    detail: String,
}

fn verdict(ok: bool, detail: String) -> Outcome {
    Outcome {
        status: if ok { Status::Pass } else { Status::Fail },
        detail,
    }
}

type Check = (u32, &'static str, fn() -> Outcome);

fn main() -> ExitCode {
    let checks: [Check; 10] = [
        (1, "likelihood splitting oracle", likelihood_splitting),
        (2, "converging-effect closed form", cte_closed_form),
        (3, "change-point prior normalization", prior_normalization),
        (4, "conjugate exponential recovery", conjugate_recovery),
        (5, "treatment-delay parameter recovery", delay_recovery),
        (6, "error decreases with sample size", monotone_in_n),
        (7, "WAIC prefers loss-of-effect model", waic_discrimination),
        (8, "generator fidelity", generator_fidelity),
        (9, "fit determinism", fit_determinism),
        (10, "real-data WAIC ordering", real_data_ordering),
    ];
    let selected: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    let mut out = std::io::stdout().lock();
    for (n, name, check) in checks {
        if !selected.is_empty() && !selected.contains(&n) {
            continue;
        }
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            verdict(false, format!("panicked: {msg}"))
        });
        let tag = match outcome.status {
            Status::Pass => "PASS",
            Status::Fail => {
                failed += 1;
                "FAIL"
            }
            Status::Skip => "SKIP",
        };
        writeln!(
            out,
            "criterion {n:>2} {tag}: {name}: {} [{:.1} s]",
            outcome.detail,
            start.elapsed().as_secs_f64()
        )
        .unwrap();
    }
    if failed > 0 {
        writeln!(out, "acceptance: {failed} criterion(s) failed").unwrap();
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}

fn random_dataset(rng: &mut ChaCha8Rng, n: usize) -> Dataset {
    let recs = (0..n)
        .map(|i| SubjectRecord {
            id: i as i64 + 1,
            time: rng.random_range(0.01..6.0),
            status: u8::from(rng.random_bool(0.6)),
            covariates: vec![f64::from(u8::from(rng.random_bool(0.5))), rng.random_range(-2.0..2.0)],
        })
        .collect();
    Dataset::new(vec!["trt".into(), "age_scale".into()], recs).unwrap()
}

fn likelihood_splitting() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let presets = [
        ScenarioPreset::StepHrA,
        ScenarioPreset::StepHrB,
        ScenarioPreset::StepHrC,
        ScenarioPreset::StepHrD,
        ScenarioPreset::TreatmentDelay,
        ScenarioPreset::LossOfEffect,
    ];
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let k = rng.random_range(1..=2);
        let preset = presets[rng.random_range(0..presets.len())];
        let family = if rng.random_bool(0.3) { Family::Exponential } else { Family::Weibull };
        let covs: &[&str] = if rng.random_bool(0.5) { &["trt", "age_scale"] } else { &["trt"] };
        let spec = expand_preset(preset, family, covs, k).unwrap();
        let n = rng.random_range(20..80);
        let ds = random_dataset(&mut rng, n);
        let model = ChangePointModel::new(&spec, &ds).unwrap();
        let mut taus: Vec<f64> = (0..k).map(|_| rng.random_range(0.2..5.0)).collect();
        taus.sort_by(f64::total_cmp);
        let mut ti = 0;
        let x: Vec<f64> = model
            .layout()
            .kinds
            .iter()
            .map(|kind| match kind {
                ParamKind::ChangePoint(_) => {
                    ti += 1;
                    taus[ti - 1]
                }
                _ => rng.random_range(-0.8..0.5),
            })
            .collect();
        let state = model.layout().to_state(&x);
        let total = model.log_likelihood(&state).unwrap().total;
        let rows = split_counting_process(&ds, &state.taus, &spec.covariates).unwrap();
        let oracle: f64 = rows
            .iter()
            .map(|r| {
                let p = link_segment_params(&r.design_row, &state.beta_scale, &state.beta_shape, r.interval)
                    .unwrap();
                let ev = if r.status == 1 { weibull_hazard(r.tstop, p).unwrap().ln() } else { 0.0 };
                ev - segment_cum_hazard_increment(r.tstart, r.tstop, p).unwrap()
            })
            .sum();
        worst = worst.max((total - oracle).abs());
    }
    let secs = start.elapsed().as_secs_f64();
    verdict(
        worst <= 1e-10 && secs < 10.0,
        format!("100 triples, max |diff| {worst:.2e} (tol 1e-10), {secs:.2} s (limit 10 s)"),
    )
}

fn cte_closed_form() -> Outcome {
    let start = Instant::now();
    // Additive recurrence (Kronecker) grid over the parameter box.
    let alphas = [0.754_877_666_246_692_7, 0.569_840_290_998_053_3, 0.438_030_120_520_415_6];
    let mut worst: f64 = 0.0;
    let mut quadrature_fallbacks = 0;
    for i in 0..200 {
        let u: Vec<f64> = alphas.iter().map(|a| (0.5 + a * i as f64).fract()).collect();
        let a = 0.5 + 1.5 * u[0];
        let omega = 0.2 + 4.8 * u[1];
        let hr = 0.1 + 0.8 * u[2];
        let tau_w = 0.25 + 2.0 * (0.3 + 0.618_034 * i as f64).fract();
        let t = tau_w + 0.05 + 6.0 * (0.7 + 0.414_213_56 * i as f64).fract();
        let base = SegmentParams::new(a, 0.4).unwrap();
        let c = CteParams::new(hr, omega, tau_w).unwrap();
        let closed = cte_cum_hazard_increment(t, base, c).unwrap();
        quadrature_fallbacks += usize::from(closed.used_quadrature);
        let quad = integrate_adaptive(
            |s| cte_hazard_ratio(s, c).unwrap() * weibull_hazard(s, base).unwrap(),
            tau_w,
            t,
            1e-13,
        )
        .unwrap()
        .value;
        worst = worst.max(((closed.value - quad) / quad).abs());
    }
    let secs = start.elapsed().as_secs_f64();
    verdict(
        worst <= 1e-8 && secs < 30.0,
        format!(
            "200 points, max rel err {worst:.2e} (tol 1e-8), {quadrature_fallbacks} fallbacks, {secs:.2} s (limit 30 s)"
        ),
    )
}

fn prior_normalization() -> Outcome {
    let mut parts = Vec::new();
    let mut ok = true;
    for tau_max in [1.0, 3.0, 10.0] {
        let mass = integrate_adaptive(
            |t| log_prior_changepoints(&[t], tau_max, 1).exp(),
            0.0,
            tau_max,
            1e-12,
        )
        .unwrap()
        .value;
        ok &= (mass - 1.0).abs() <= 1e-6;
        parts.push(format!("tau_max {tau_max}: {mass:.9}"));
    }
    verdict(ok, format!("{} (tol 1e-6)", parts.join(", ")))
}

fn conjugate_recovery() -> Outcome {
    let spec = ModelSpec::from_json(
        r#"{"family":"exponential","k":0,"covariates":["Intercept"],
            "scale_mask":[["free"]],"shape_mask":[["zero"]]}"#,
    )
    .unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let recs: Vec<SubjectRecord> = (0..120)
        .map(|i| {
            let t = -(1.0 - rng.random::<f64>()).ln() / 0.6;
            SubjectRecord {
                id: i + 1,
                time: t.min(2.0),
                status: u8::from(t < 2.0),
                covariates: Vec::new(),
            }
        })
        .collect();
    let ds = Dataset::new(Vec::new(), recs).unwrap();
    let d = ds.n_events() as f64;
    let exposure: f64 = ds.records.iter().map(|r| r.time).sum();
    let upper = spec.priors.intercept_upper;
    // Posterior of λ = e^β is Gamma(D + 1, T) truncated to (0, upper).
    let p = |shape: f64| 1.0 - regularized_upper_gamma(shape, upper * exposure).unwrap();
    let truth = (d + 1.0) / exposure * p(d + 2.0) / p(d + 1.0);

    let mut within = 0;
    let (mut sum_mean, mut sum_var) = (0.0, 0.0);
    for seed in 0..10u64 {
        let fit = fit_changepoint(&spec, &ds, &SamplerConfig::simulation(seed)).unwrap();
        let j = fit.draws.names.iter().position(|n| n == "scale.Intercept.1").unwrap();
        let chains: Vec<Vec<f64>> = (0..fit.draws.n_chains)
            .map(|c| fit.draws.chain_column(c, j).iter().map(|b| b.exp()).collect())
            .collect();
        let all: Vec<f64> = chains.concat();
        let n = all.len() as f64;
        let mean = all.iter().sum::<f64>() / n;
        let var = all.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        let mcse = (var / effective_sample_size(&chains).unwrap()).sqrt();
        within += usize::from((mean - truth).abs() <= 2.0 * mcse);
        sum_mean += mean;
        sum_var += mcse * mcse;
    }
    let pooled = sum_mean / 10.0;
    let pooled_se = sum_var.sqrt() / 10.0;
    let ok = (pooled - truth).abs() <= 2.0 * pooled_se && within >= 8;
    verdict(
        ok,
        format!(
            "analytic mean {truth:.6}, pooled {pooled:.6} (|diff| {:.2e} vs 2 MCSE {:.2e}), {within}/10 seeds within 2 MCSE",
            (pooled - truth).abs(),
            2.0 * pooled_se
        ),
    )
}

fn delay_recovery() -> Outcome {
    let sc = SimScenario {
        seed: 501,
        replicates: 20,
        ..SimScenario::new(ScenarioKind::TreatmentDelay, 1.3, 0.25, 1.0, 500, 5.0)
    };
    let res = run_study(
        &[sc],
        &[StudyModel::truth(ScenarioKind::TreatmentDelay)],
        &SamplerConfig::simulation(0),
    )
    .unwrap();
    let score = &res.scenarios[0].models[0];
    let err = score.err_diff.unwrap_or(f64::INFINITY);
    let in_range = score
        .replicates
        .iter()
        .filter(|r| r.medians.get("tau.1").is_some_and(|t| (0.7..=1.3).contains(t)))
        .count();
    let frac = in_range as f64 / sc.replicates as f64;
    verdict(
        err <= 0.15 && frac >= 0.8,
        format!(
            "Err_diff {err:.3} (limit 0.15), median tau in [0.7, 1.3] for {in_range}/20 (need 80%), {} fit errors, {} with R-hat > 1.1",
            score.n_errors, score.n_nonconverged
        ),
    )
}

fn monotone_in_n() -> Outcome {
    let err = |n: usize, seed: u64| {
        let sc = SimScenario {
            seed,
            replicates: 20,
            ..SimScenario::new(ScenarioKind::TreatmentDelay, 1.3, 0.25, 1.0, n, 3.0)
        };
        run_study(
            &[sc],
            &[StudyModel::truth(ScenarioKind::TreatmentDelay)],
            &SamplerConfig::simulation(0),
        )
        .unwrap()
        .scenarios[0]
            .models[0]
            .err_diff
            .unwrap_or(f64::INFINITY)
    };
    let (small, large) = (err(100, 601), err(500, 602));
    verdict(large < small, format!("Err_diff n=100: {small:.3}, n=500: {large:.3}"))
}

fn waic_discrimination() -> Outcome {
    let sc = SimScenario::new(ScenarioKind::LossOfEffect, 1.3, 0.25, 1.0, 500, 3.0);
    let lte = expand_preset(ScenarioPreset::LossOfEffect, Family::Weibull, &["trt"], 1).unwrap();
    let weibull = ComparatorSpec::new(ComparatorFamily::Weibull, &["trt"]);
    let mut wins = 0;
    let mut gaps = Vec::new();
    for s in 0..10u64 {
        let seed = derive_seed(701, s);
        let ds = simulate_dataset(&sc, seed).unwrap();
        let cfg = SamplerConfig::simulation(seed);
        let cp = fit_changepoint(&lte, &ds, &cfg).unwrap().waic.waic;
        let wb = fit_comparator(&weibull, &ds, &cfg).unwrap().1.waic.waic;
        wins += usize::from(cp < wb);
        gaps.push(format!("{:.1}", wb - cp));
    }
    verdict(
        wins >= 8,
        format!("change-point lower in {wins}/10 seeds (need 8); Weibull minus change-point: {}", gaps.join(" ")),
    )
}

fn generator_fidelity() -> Outcome {
    let mut parts = Vec::new();
    let mut ok = true;
    for kind in [ScenarioKind::TreatmentDelay, ScenarioKind::LossOfEffect, ScenarioKind::ConvergingEffect] {
        let sc = SimScenario::new(kind, 1.3, 0.25, 1.0, 5000, 5.0);
        let ds = simulate_dataset(&sc, 801).unwrap();
        let d = km_sup_distance(&sc, &ds, false)
            .unwrap()
            .max(km_sup_distance(&sc, &ds, true).unwrap());
        ok &= d <= 0.03;
        parts.push(format!("{} {d:.4}", kind.code()));
    }
    verdict(ok, format!("KM sup distance {} (limit 0.03)", parts.join(", ")))
}

fn fit_determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let sc = SimScenario::new(ScenarioKind::TreatmentDelay, 1.3, 0.5, 1.0, 100, 3.0);
    let data = dir.path().join("data.csv");
    let mut buf = Vec::new();
    write_dataset(&simulate_dataset(&sc, 901).unwrap(), &mut buf).unwrap();
    std::fs::write(&data, buf).unwrap();
    let run = |threads: &str, name: &str| {
        let out = dir.path().join(name);
        let status = Command::new(env!("CARGO_BIN_EXE_cpsurv"))
            .args(["--threads", threads, "fit", "--preset", "treatment_delay", "--seed", "7"])
            .arg("--data")
            .arg(&data)
            .arg("--out")
            .arg(&out)
            .status()
            .unwrap();
        assert!(status.success(), "fit exited with {status}");
        out
    };
    let runs = [run("1", "a"), run("1", "b"), run("4", "c")];
    let read = |d: &Path, f: &str| std::fs::read(d.join(f)).unwrap();
    let mut identical = true;
    for f in ["draws.csv", "summary.json", "model.json"] {
        identical &= read(&runs[0], f) == read(&runs[1], f) && read(&runs[0], f) == read(&runs[2], f);
    }
    let hash = |d: &Path| {
        let m: serde_json::Value = serde_json::from_slice(&read(d, "manifest.json")).unwrap();
        (m["config_hash"].clone(), m["outputs"].clone())
    };
    identical &= hash(&runs[0]) == hash(&runs[1]) && hash(&runs[0]) == hash(&runs[2]);
    verdict(
        identical,
        "draws.csv, summary.json, model.json and manifest digests identical across two runs and --threads 1/4"
            .to_string(),
    )
}

/// WAIC values reported for the pooled E1684 and E1690 trials.
const PUBLISHED_WAIC: [(&str, f64); 5] = [
    ("royston-parmar-nph", 2003.03),
    ("royston-parmar-ph", 2006.70),
    ("converging hazards", 2009.18),
    ("equal final hazards", 2009.35),
    ("step HR", 2011.09),
];
const WAIC_TOL: f64 = 4.0;
const REAL_DATA_ENV: &str = "CPSURV_E1684_E1690_CSV";

/// Change-point spec with interval-specific baselines.
fn varying_baseline(preset: ScenarioPreset) -> ModelSpec {
    let mut spec = expand_preset(preset, Family::Weibull, &["trt"], 1).unwrap();
    spec.scale_mask[0] = vec![Constraint::Free; 2];
    spec.shape_mask[0] = vec![Constraint::Free; 2];
    spec.preset = None;
    spec.validate().unwrap();
    spec
}

fn real_data_ordering() -> Outcome {
    let Some(path) = std::env::var_os(REAL_DATA_ENV) else {
        return Outcome {
            status: Status::Skip,
            detail: format!("set {REAL_DATA_ENV} to a CSV with columns time,status,trt to run"),
        };
    };
    let mapping = cpsurv::data::ColumnMapping::new("time", "status", &["trt"]);
    let ds = cpsurv::data::load_dataset(&path, &mapping).unwrap();
    let cfg = SamplerConfig::application(1);
    let comparator = |f| fit_comparator(&ComparatorSpec::new(f, &["trt"]), &ds, &cfg).unwrap().1.waic.waic;
    let changepoint = |spec: &ModelSpec| fit_changepoint(spec, &ds, &cfg).unwrap().waic.waic;
    let waic = [
        comparator(ComparatorFamily::RoystonParmarNph),
        comparator(ComparatorFamily::RoystonParmarPh),
        changepoint(&varying_baseline(ScenarioPreset::ConvergingHazards)),
        changepoint(&varying_baseline(ScenarioPreset::LossOfEffect)),
        changepoint(&varying_baseline(ScenarioPreset::StepHrC)),
    ];
    let mut ok = true;
    let mut parts = Vec::new();
    for (i, ((name, published), w)) in PUBLISHED_WAIC.iter().zip(waic).enumerate() {
        ok &= (w - published).abs() <= WAIC_TOL;
        if i > 0 {
            // Orderings hold up to the per-model tolerance.
            ok &= waic[i - 1] <= w + WAIC_TOL;
        }
        parts.push(format!("{name} {w:.2} (published {published:.2})"));
    }
    verdict(ok, format!("{} (tol {WAIC_TOL})", parts.join(", ")))
}
