//! Simulation harness: datasets from treatment-delay, loss-of-effect and
//! converging-effect truths, model fits, and extrapolation error scoring.
//!
//! The control arm is Weibull with `H_0(t) = m t^a`. The treated arm's hazard
//! is `HR · h_0` on the effect period and `h_0` elsewhere:
//!
//! * treatment delay: effect after `τ`;
//! * loss of effect: effect before `τ`;
//! * converging effect: `HR` before `τ`, then `1 − (1 − HR)e^{−ω(t−τ)}`.

use std::collections::BTreeMap;
use std::io::Write;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::comparators::{comparator_rmst_diff, fit_comparator, ComparatorFamily, ComparatorSpec};
use crate::data::{Dataset, SubjectRecord};
use crate::error::{Error, Result};
use crate::hazard::{cte_cum_hazard_increment, CteParams, SegmentParams};
use crate::mcmc::{fit_changepoint, quantile_sorted, FitResult, SamplerConfig};
use crate::predict::{rmst_diff, CurveRequest};
use crate::scenario::{expand_preset, Family, ScenarioPreset, DEFAULT_TREATMENT};
use crate::special::{bisect_root, integrate_with_breaks, regularized_upper_gamma};

pub const DEFAULT_SCALE: f64 = 0.3;
pub const DEFAULT_T_MAX: f64 = 15.0;
pub const DEFAULT_REPLICATES: usize = 20;
pub const SHAPE_GRID: [f64; 2] = [0.75, 1.3];
pub const HR_GRID: [f64; 3] = [0.25, 0.5, 0.75];
pub const N_GRID: [usize; 3] = [100, 300, 500];
pub const T_CENS_GRID: [f64; 2] = [3.0, 5.0];

const ROOT_TOL: f64 = 1e-10;
const TRUTH_TOL: f64 = 1e-10;
/// Fits with a larger split-R̂ count as non-converged.
pub const RHAT_LIMIT: f64 = 1.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ScenarioKind {
    #[serde(rename = "TD")]
    TreatmentDelay,
    #[serde(rename = "LTE")]
    LossOfEffect,
    #[serde(rename = "CTE")]
    ConvergingEffect,
}

impl ScenarioKind {
    pub fn code(&self) -> &'static str {
        match self {
            ScenarioKind::TreatmentDelay => "TD",
            ScenarioKind::LossOfEffect => "LTE",
            ScenarioKind::ConvergingEffect => "CTE",
        }
    }

    /// Change-point preset matching the generating truth.
    pub fn true_preset(&self) -> ScenarioPreset {
        match self {
            ScenarioKind::TreatmentDelay => ScenarioPreset::TreatmentDelay,
            ScenarioKind::LossOfEffect => ScenarioPreset::LossOfEffect,
            ScenarioKind::ConvergingEffect => ScenarioPreset::ConvergingHazards,
        }
    }
}

fn default_scale() -> f64 {
    DEFAULT_SCALE
}
fn default_omega() -> f64 {
    1.0
}
fn default_t_max() -> f64 {
    DEFAULT_T_MAX
}
fn default_replicates() -> usize {
    DEFAULT_REPLICATES
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimScenario {
    pub kind: ScenarioKind,
    #[serde(default = "default_scale")]
    pub scale: f64,
    pub shape: f64,
    pub hr: f64,
    pub tau: f64,
    #[serde(default = "default_omega")]
    pub omega: f64,
    pub n_per_arm: usize,
    pub t_cens: f64,
    #[serde(default = "default_t_max")]
    pub t_max: f64,
    #[serde(default = "default_replicates")]
    pub replicates: usize,
    pub seed: u64,
}

impl SimScenario {
    pub fn new(kind: ScenarioKind, shape: f64, hr: f64, tau: f64, n_per_arm: usize, t_cens: f64) -> Self {
        Self {
            kind,
            scale: DEFAULT_SCALE,
            shape,
            hr,
            tau,
            omega: 1.0,
            n_per_arm,
            t_cens,
            t_max: DEFAULT_T_MAX,
            replicates: DEFAULT_REPLICATES,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("scale", self.scale),
            ("shape", self.shape),
            ("tau", self.tau),
            ("omega", self.omega),
            ("t_cens", self.t_cens),
            ("t_max", self.t_max),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::validation(format!("scenario {name} must be positive, got {v}")));
            }
        }
        if !(self.hr > 0.0 && self.hr <= 1.0) {
            return Err(Error::validation(format!("scenario HR must lie in (0, 1], got {}", self.hr)));
        }
        if self.n_per_arm == 0 {
            return Err(Error::validation("scenario needs at least one subject per arm"));
        }
        Ok(())
    }

    fn control(&self) -> SegmentParams {
        SegmentParams {
            shape: self.shape,
            scale: self.scale,
        }
    }

    fn cte(&self) -> CteParams {
        CteParams {
            hr_initial: self.hr,
            omega: self.omega,
            tau_wane: self.tau,
        }
    }

    /// True cumulative hazard of arm `0` (control) or `1` (treated).
    pub fn cum_hazard(&self, treated: bool, t: f64) -> f64 {
        if t <= 0.0 {
            return 0.0;
        }
        let (m, a) = (self.scale, self.shape);
        let h0 = |s: f64| m * s.powf(a);
        if !treated {
            return h0(t);
        }
        let tau = self.tau;
        match self.kind {
            ScenarioKind::TreatmentDelay if t <= tau => h0(t),
            ScenarioKind::TreatmentDelay => h0(tau) + self.hr * (h0(t) - h0(tau)),
            ScenarioKind::LossOfEffect if t <= tau => self.hr * h0(t),
            ScenarioKind::LossOfEffect => self.hr * h0(tau) + h0(t) - h0(tau),
            ScenarioKind::ConvergingEffect if t <= tau => self.hr * h0(t),
            ScenarioKind::ConvergingEffect => {
                self.hr * h0(tau)
                    + cte_cum_hazard_increment(t, self.control(), self.cte())
                        .expect("validated scenario")
                        .value
            }
        }
    }

    pub fn survival(&self, treated: bool, t: f64) -> f64 {
        (-self.cum_hazard(treated, t)).exp()
    }

    /// Solves `H(t) = e`; `None` when the event falls at or after `t_cens`.
    fn invert(&self, treated: bool, e: f64) -> Result<Option<f64>> {
        let (m, a) = (self.scale, self.shape);
        let inv = |h: f64, rate: f64| (h / rate).powf(1.0 / a);
        let tau = self.tau;
        let t = if !treated {
            inv(e, m)
        } else {
            let h_tau = self.cum_hazard(true, tau);
            match self.kind {
                ScenarioKind::TreatmentDelay if e <= h_tau => inv(e, m),
                ScenarioKind::TreatmentDelay => inv(m * tau.powf(a) + (e - h_tau) / self.hr, m),
                ScenarioKind::LossOfEffect | ScenarioKind::ConvergingEffect if e <= h_tau => {
                    inv(e, self.hr * m)
                }
                ScenarioKind::LossOfEffect => inv(m * tau.powf(a) + (e - h_tau), m),
                ScenarioKind::ConvergingEffect => {
                    if tau >= self.t_cens || self.cum_hazard(true, self.t_cens) <= e {
                        return Ok(None);
                    }
                    bisect_root(|s| self.cum_hazard(true, s) - e, tau, self.t_cens, ROOT_TOL)?
                }
            }
        };
        Ok((t < self.t_cens).then_some(t))
    }
}

/// Independent seed for replicate `rep` of a scenario seeded with `seed`.
pub fn derive_seed(seed: u64, rep: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(rep);
    rng.next_u64()
}

/// Control subjects first (`trt = 0`), then treated; censoring at `t_cens` only.
pub fn simulate_dataset(sc: &SimScenario, rep_seed: u64) -> Result<Dataset> {
    sc.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(rep_seed);
    let mut records = Vec::with_capacity(2 * sc.n_per_arm);
    for i in 0..2 * sc.n_per_arm {
        let treated = i >= sc.n_per_arm;
        let u: f64 = rng.sample(rand::distr::Open01);
        let (time, status) = match sc.invert(treated, -u.ln())? {
            Some(t) => (t, 1),
            None => (sc.t_cens, 0),
        };
        records.push(SubjectRecord {
            id: i as i64 + 1,
            time,
            status,
            covariates: vec![f64::from(u8::from(treated))],
        });
    }
    Dataset::new(vec![DEFAULT_TREATMENT.to_string()], records)
}

/// `∫_0^{t_max} S_treated − S_control` under the generating model.
pub fn true_rmst_diff(sc: &SimScenario) -> Result<f64> {
    sc.validate()?;
    let q = integrate_with_breaks(
        |t| sc.survival(true, t) - sc.survival(false, t),
        0.0,
        sc.t_max,
        &[sc.tau],
        TRUTH_TOL,
    )?;
    Ok(q.value)
}

/// Kaplan–Meier estimate as `(time, S(time))` at each distinct event time.
pub fn kaplan_meier(times: &[f64], status: &[u8]) -> Vec<(f64, f64)> {
    let mut idx: Vec<usize> = (0..times.len()).collect();
    idx.sort_by(|&i, &j| times[i].total_cmp(&times[j]));
    let mut at_risk = times.len() as f64;
    let mut s = 1.0;
    let mut out = Vec::new();
    let mut i = 0;
    while i < idx.len() {
        let t = times[idx[i]];
        let (mut d, mut n) = (0.0, 0.0);
        while i < idx.len() && times[idx[i]] == t {
            d += f64::from(status[idx[i]]);
            n += 1.0;
            i += 1;
        }
        if d > 0.0 {
            s *= 1.0 - d / at_risk;
            out.push((t, s));
        }
        at_risk -= n;
    }
    out
}

/// Largest gap between the Kaplan–Meier curve of one arm and its true survival.
pub fn km_sup_distance(sc: &SimScenario, ds: &Dataset, treated: bool) -> Result<f64> {
    let arm = ds.covariate(DEFAULT_TREATMENT)?;
    let (mut times, mut status) = (Vec::new(), Vec::new());
    for (r, z) in ds.records.iter().zip(arm) {
        if (z == 1.0) == treated {
            times.push(r.time);
            status.push(r.status);
        }
    }
    let mut prev = 1.0;
    let mut sup: f64 = 0.0;
    for (t, s) in kaplan_meier(&times, &status) {
        let truth = sc.survival(treated, t);
        // The step is right-continuous: compare both the left limit and the value.
        sup = sup.max((prev - truth).abs()).max((s - truth).abs());
        prev = s;
    }
    Ok(sup)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogRank {
    pub statistic: f64,
    pub p_value: f64,
}

/// Two-sample log-rank test on a 0/1 group covariate.
pub fn log_rank(ds: &Dataset, group: &str) -> Result<LogRank> {
    let g = ds.covariate(group)?;
    let mut idx: Vec<usize> = (0..ds.len()).collect();
    idx.sort_by(|&i, &j| ds.records[i].time.total_cmp(&ds.records[j].time));
    let mut n = [0.0f64; 2];
    for &z in &g {
        n[usize::from(z == 1.0)] += 1.0;
    }
    let (mut o_minus_e, mut var) = (0.0, 0.0);
    let mut i = 0;
    while i < idx.len() {
        let t = ds.records[idx[i]].time;
        let (mut d, mut removed) = ([0.0f64; 2], [0.0f64; 2]);
        while i < idx.len() && ds.records[idx[i]].time == t {
            let arm = usize::from(g[idx[i]] == 1.0);
            d[arm] += f64::from(ds.records[idx[i]].status);
            removed[arm] += 1.0;
            i += 1;
        }
        let (dt, nt) = (d[0] + d[1], n[0] + n[1]);
        if dt > 0.0 && nt > 1.0 {
            o_minus_e += d[1] - dt * n[1] / nt;
            var += dt * (n[1] / nt) * (n[0] / nt) * (nt - dt) / (nt - 1.0);
        }
        n[0] -= removed[0];
        n[1] -= removed[1];
    }
    if var <= 0.0 {
        return Err(Error::DegenerateData("log-rank variance is zero".to_string()));
    }
    let statistic = o_minus_e * o_minus_e / var;
    Ok(LogRank {
        statistic,
        p_value: regularized_upper_gamma(0.5, 0.5 * statistic)?,
    })
}

/// A model fit in the study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum StudyModel {
    ChangePoint {
        preset: ScenarioPreset,
        family: Family,
        k: usize,
    },
    Comparator {
        family: ComparatorFamily,
        knots: usize,
    },
}

impl StudyModel {
    /// The change-point model matching a scenario's truth (`k = 1`, Weibull).
    pub fn truth(kind: ScenarioKind) -> Self {
        StudyModel::ChangePoint {
            preset: kind.true_preset(),
            family: Family::Weibull,
            k: 1,
        }
    }

    pub fn comparator(family: ComparatorFamily) -> Self {
        let spec = ComparatorSpec::new(family, &[]);
        StudyModel::Comparator {
            family,
            knots: spec.knots,
        }
    }

    pub fn label(&self) -> String {
        match self {
            StudyModel::ChangePoint { preset, family, k } => {
                let fam = match family {
                    Family::Weibull => "",
                    Family::Exponential => ":exponential",
                };
                format!("changepoint:{}:k{k}{fam}", preset.name())
            }
            StudyModel::Comparator { family, knots } => {
                if family.is_spline() {
                    format!("{}:{knots}knots", family.name())
                } else {
                    family.name().to_string()
                }
            }
        }
    }

    /// Fits the model with `trt` as the only covariate; returns the fit and
    /// its posterior-median RMST difference over `[0, t_max]`.
    pub fn evaluate(&self, ds: &Dataset, cfg: &SamplerConfig, t_max: f64) -> Result<(FitResult, f64)> {
        match self {
            StudyModel::ChangePoint { preset, family, k } => {
                let spec = expand_preset(*preset, *family, &[DEFAULT_TREATMENT], *k)?;
                let fit = fit_changepoint(&spec, ds, cfg)?;
                let diff = rmst_diff(&fit.draws, &spec, &CurveRequest::new(t_max))?;
                Ok((fit, diff.median))
            }
            StudyModel::Comparator { family, knots } => {
                let spec = ComparatorSpec::new(*family, &[DEFAULT_TREATMENT]).with_knots(*knots);
                let (model, fit) = fit_comparator(&spec, ds, cfg)?;
                let diff = comparator_rmst_diff(&model, &fit, t_max, [0.0, 1.0], &BTreeMap::new())?;
                Ok((fit, diff.median))
            }
        }
    }
}

impl std::fmt::Display for StudyModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.label())
    }
}

impl From<StudyModel> for String {
    fn from(m: StudyModel) -> Self {
        m.label()
    }
}

impl TryFrom<String> for StudyModel {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl std::str::FromStr for StudyModel {
    type Err = Error;

    /// `changepoint:<preset>[:k<k>][:exponential]` or a comparator family
    /// name with an optional `:<n>knots` suffix.
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.trim().split(':').collect();
        if matches!(parts[0], "changepoint" | "cp") {
            let preset: ScenarioPreset = parts
                .get(1)
                .ok_or_else(|| Error::validation(format!("model `{s}` lacks a preset")))?
                .parse()?;
            let (mut family, mut k) = (Family::Weibull, 1);
            for p in &parts[2..] {
                if let Some(n) = p.strip_prefix('k') {
                    k = n
                        .parse()
                        .map_err(|_| Error::validation(format!("bad change-point count in `{s}`")))?;
                } else if *p == "exponential" {
                    family = Family::Exponential;
                } else if *p != "weibull" {
                    return Err(Error::validation(format!("unknown model option `{p}` in `{s}`")));
                }
            }
            return Ok(StudyModel::ChangePoint { preset, family, k });
        }
        let family: ComparatorFamily = parts[0].parse()?;
        let mut model = StudyModel::comparator(family);
        if let (Some(p), StudyModel::Comparator { knots, .. }) = (parts.get(1), &mut model) {
            *knots = p
                .strip_suffix("knots")
                .and_then(|n| n.parse().ok())
                .ok_or_else(|| Error::validation(format!("bad knot option in `{s}`")))?;
        }
        if parts.len() > 2 {
            return Err(Error::validation(format!("unrecognised model `{s}`")));
        }
        Ok(model)
    }
}

/// Grid of scenarios for one truth kind, expanded in lexicographic order of
/// `(n_per_arm, t_cens, hr, shape, tau, omega)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyGrid {
    pub kind: ScenarioKind,
    #[serde(default = "default_scale")]
    pub scale: f64,
    pub shape: Vec<f64>,
    pub hr: Vec<f64>,
    pub tau: Vec<f64>,
    #[serde(default = "default_omegas")]
    pub omega: Vec<f64>,
    pub n_per_arm: Vec<usize>,
    pub t_cens: Vec<f64>,
    #[serde(default = "default_t_max")]
    pub t_max: f64,
    #[serde(default = "default_replicates")]
    pub replicates: usize,
    pub seed: u64,
}

fn default_omegas() -> Vec<f64> {
    vec![1.0]
}

impl StudyGrid {
    pub fn scenarios(&self) -> Vec<SimScenario> {
        let mut out = Vec::new();
        for &n in &self.n_per_arm {
            for &tc in &self.t_cens {
                for &hr in &self.hr {
                    for &shape in &self.shape {
                        for &tau in &self.tau {
                            for &omega in &self.omega {
                                let idx = out.len() as u64;
                                out.push(SimScenario {
                                    kind: self.kind,
                                    scale: self.scale,
                                    shape,
                                    hr,
                                    tau,
                                    omega,
                                    n_per_arm: n,
                                    t_cens: tc,
                                    t_max: self.t_max,
                                    replicates: self.replicates,
                                    seed: derive_seed(self.seed, idx),
                                });
                            }
                        }
                    }
                }
            }
        }
        out
    }
}

/// Study configuration file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyConfig {
    pub grid: StudyGrid,
    /// Defaults to the true change-point model and the Weibull comparator.
    #[serde(default)]
    pub models: Vec<StudyModel>,
    #[serde(default)]
    pub sampler: Option<SamplerConfig>,
}

impl StudyConfig {
    pub fn models(&self) -> Vec<StudyModel> {
        if self.models.is_empty() {
            vec![
                StudyModel::truth(self.grid.kind),
                StudyModel::comparator(ComparatorFamily::Weibull),
            ]
        } else {
            self.models.clone()
        }
    }

    pub fn sampler(&self) -> SamplerConfig {
        self.sampler.unwrap_or_else(|| SamplerConfig::simulation(0))
    }
}

/// Outcome of one model on one replicate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateOutcome {
    pub replicate: usize,
    pub seed: u64,
    pub rmst_diff_median: Option<f64>,
    pub abs_error: Option<f64>,
    pub max_rhat: Option<f64>,
    /// Posterior medians per parameter, plus `hr…` entries for treatment
    /// effects on the scale.
    pub medians: BTreeMap<String, f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanSd {
    pub mean: f64,
    pub sd: f64,
}

impl MeanSd {
    fn from_values(v: &[f64]) -> Self {
        let n = v.len() as f64;
        let mean = v.iter().sum::<f64>() / n;
        let sd = if v.len() > 1 {
            (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        Self { mean, sd }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelScore {
    pub model: String,
    /// Mean absolute RMST-difference error over successful fits.
    pub err_diff: Option<f64>,
    pub n_ok: usize,
    /// Fits that errored; excluded from `err_diff`.
    pub n_errors: usize,
    /// Successful fits with split-R̂ above the limit; included in `err_diff`.
    pub n_nonconverged: usize,
    pub failure_rate: f64,
    pub medians: BTreeMap<String, MeanSd>,
    pub replicates: Vec<ReplicateOutcome>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioResult {
    pub scenario: SimScenario,
    pub true_rmst_diff: f64,
    pub models: Vec<ModelScore>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyResult {
    pub scenarios: Vec<ScenarioResult>,
}

fn hr_key(name: &str) -> Option<String> {
    let rest = name.strip_prefix("scale.")?.strip_prefix(DEFAULT_TREATMENT)?;
    (rest.is_empty() || rest.starts_with('.')).then(|| format!("hr{rest}"))
}

fn run_replicate(
    sc: &SimScenario,
    rep: usize,
    models: &[StudyModel],
    cfg: &SamplerConfig,
    truth: f64,
) -> Vec<ReplicateOutcome> {
    let seed = derive_seed(sc.seed, rep as u64);
    let ds = simulate_dataset(sc, seed);
    models
        .iter()
        .map(|model| {
            let mut out = ReplicateOutcome {
                replicate: rep,
                seed,
                rmst_diff_median: None,
                abs_error: None,
                max_rhat: None,
                medians: BTreeMap::new(),
                error: None,
            };
            let fitted = match &ds {
                Ok(ds) => model.evaluate(ds, &SamplerConfig { seed, ..*cfg }, sc.t_max),
                Err(e) => Err(Error::DegenerateData(format!("simulation failed: {e}"))),
            };
            match fitted {
                Ok((fit, diff)) => {
                    out.rmst_diff_median = Some(diff);
                    out.abs_error = Some((diff - truth).abs());
                    out.max_rhat = fit.diagnostics.max_rhat();
                    for (j, name) in fit.draws.names.iter().enumerate() {
                        let mut col = fit.draws.column(j);
                        col.sort_by(f64::total_cmp);
                        let med = quantile_sorted(&col, 0.5);
                        if let Some(key) = hr_key(name) {
                            out.medians.insert(key, med.exp());
                        }
                        out.medians.insert(name.clone(), med);
                    }
                }
                Err(e) => out.error = Some(e.to_string()),
            }
            out
        })
        .collect()
}

fn score(model: &StudyModel, reps: Vec<ReplicateOutcome>) -> ModelScore {
    let errors: Vec<f64> = reps.iter().filter_map(|r| r.abs_error).collect();
    let n_ok = errors.len();
    let n_errors = reps.len() - n_ok;
    let n_nonconverged = reps
        .iter()
        .filter(|r| r.abs_error.is_some() && r.max_rhat.is_none_or(|v| v > RHAT_LIMIT))
        .count();
    let mut pooled: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for r in &reps {
        for (k, v) in &r.medians {
            pooled.entry(k.clone()).or_default().push(*v);
        }
    }
    ModelScore {
        model: model.label(),
        err_diff: (n_ok > 0).then(|| errors.iter().sum::<f64>() / n_ok as f64),
        n_ok,
        n_errors,
        n_nonconverged,
        failure_rate: (n_errors + n_nonconverged) as f64 / reps.len() as f64,
        medians: pooled.into_iter().map(|(k, v)| (k, MeanSd::from_values(&v))).collect(),
        replicates: reps,
    }
}

/// Simulates, fits and scores every scenario. Replicates run in parallel;
/// results do not depend on the thread count.
pub fn run_study(grid: &[SimScenario], models: &[StudyModel], cfg: &SamplerConfig) -> Result<StudyResult> {
    if grid.is_empty() {
        return Err(Error::validation("study grid has no scenarios"));
    }
    if models.is_empty() {
        return Err(Error::validation("study needs at least one model"));
    }
    cfg.validate()?;
    let mut scenarios = Vec::with_capacity(grid.len());
    for sc in grid {
        sc.validate()?;
        if sc.replicates == 0 {
            return Err(Error::validation("study scenarios need at least one replicate"));
        }
        let truth = true_rmst_diff(sc)?;
        let per_rep: Vec<Vec<ReplicateOutcome>> = (0..sc.replicates)
            .into_par_iter()
            .map(|rep| run_replicate(sc, rep, models, cfg, truth))
            .collect();
        let scores = models
            .iter()
            .enumerate()
            .map(|(m, model)| score(model, per_rep.iter().map(|r| r[m].clone()).collect()))
            .collect();
        scenarios.push(ScenarioResult {
            scenario: *sc,
            true_rmst_diff: truth,
            models: scores,
        });
    }
    Ok(StudyResult { scenarios })
}

impl StudyResult {
    /// Table layout: `n_samp, t_cens, HR, shape`, then `tau`, `omega` and
    /// `kind` when they vary, then one `Err_diff` column per model.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let varies = |f: &dyn Fn(&SimScenario) -> String| {
            let first = self.scenarios.first().map(|s| f(&s.scenario));
            self.scenarios.iter().any(|s| Some(f(&s.scenario)) != first)
        };
        let with_tau = varies(&|s| s.tau.to_string());
        let with_omega = self
            .scenarios
            .iter()
            .any(|s| s.scenario.kind == ScenarioKind::ConvergingEffect);
        let with_kind = varies(&|s| s.kind.code().to_string());
        let mut w = csv::Writer::from_writer(writer);
        let mut header: Vec<String> = Vec::new();
        if with_kind {
            header.push("kind".into());
        }
        header.extend(["n_samp", "t_cens", "HR", "shape"].map(String::from));
        if with_tau {
            header.push("tau".into());
        }
        if with_omega {
            header.push("omega".into());
        }
        let labels: Vec<String> = self
            .scenarios
            .first()
            .map(|s| s.models.iter().map(|m| m.model.clone()).collect())
            .unwrap_or_default();
        header.extend(labels.iter().cloned());
        w.write_record(&header)?;
        for s in &self.scenarios {
            let sc = &s.scenario;
            let mut row: Vec<String> = Vec::new();
            if with_kind {
                row.push(sc.kind.code().to_string());
            }
            row.push((2 * sc.n_per_arm).to_string());
            row.push(sc.t_cens.to_string());
            row.push(sc.hr.to_string());
            row.push(sc.shape.to_string());
            if with_tau {
                row.push(sc.tau.to_string());
            }
            if with_omega {
                row.push(sc.omega.to_string());
            }
            for m in &s.models {
                row.push(m.err_diff.map_or_else(|| "NA".to_string(), |v| v.to_string()));
            }
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}
