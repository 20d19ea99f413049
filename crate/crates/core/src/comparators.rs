//! Standard parametric and Royston–Parmar spline comparators, fit with the
//! same sampler as the change-point models.
//!
//! Parameterizations (covariate effects `βz` enter the first, location-type
//! parameter; every parameter is unconstrained with a `Normal(0, sd)` prior):
//!
//! | family | parameters | survival |
//! |---|---|---|
//! | exponential | `log λ` | `exp(−λt)`, `λ = e^{log λ + βz}` |
//! | weibull | `log m`, `log a` | `exp(−m t^a)`, `m = e^{log m + βz}` |
//! | gamma | `log rate`, `log shape` | `Q(k, rt)`, `r = e^{log rate + βz}` |
//! | gompertz | `log rate`, `η` | `exp(−b(e^{ηt} − 1)/η)`, `b = e^{log rate + βz}` |
//! | log-logistic | `log scale`, `log shape` | `1/(1 + (t/α)^b)`, `α = e^{log scale + βz}` |
//! | log-normal | `μ`, `log σ` | `Φ(−(log t − μ − βz)/σ)` |
//! | generalized gamma | `μ`, `log σ`, `Q` | Prentice form; log-normal at `Q = 0` |
//! | Royston–Parmar | `γ_0 … γ_{m+1}` | `exp(−e^{s(log t) + βz})` |
//!
//! The Royston–Parmar log cumulative hazard `s` is a natural cubic spline in
//! `log t` with boundary knots at the extreme log event times and interior
//! knots at equally spaced quantiles of the log event times. The non-PH
//! variant adds a treatment effect on `γ_1`.

use std::io::Write;

use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::likelihood::{normal_log_density, LogLikBreakdown};
use crate::mcmc::{fit_target, FitResult, SamplerConfig, Target, Transform};
use crate::predict::PosteriorSummary;
use crate::scenario::PriorConfig;
use crate::special::{incomplete_gamma_log, integrate_adaptive, log_gamma};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ComparatorFamily {
    Exponential,
    Weibull,
    Gamma,
    Gompertz,
    LogLogistic,
    LogNormal,
    GeneralizedGamma,
    RoystonParmarPh,
    RoystonParmarNph,
}

impl ComparatorFamily {
    pub const ALL: [ComparatorFamily; 9] = [
        ComparatorFamily::Exponential,
        ComparatorFamily::Weibull,
        ComparatorFamily::Gamma,
        ComparatorFamily::Gompertz,
        ComparatorFamily::LogLogistic,
        ComparatorFamily::LogNormal,
        ComparatorFamily::GeneralizedGamma,
        ComparatorFamily::RoystonParmarPh,
        ComparatorFamily::RoystonParmarNph,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            ComparatorFamily::Exponential => "exponential",
            ComparatorFamily::Weibull => "weibull",
            ComparatorFamily::Gamma => "gamma",
            ComparatorFamily::Gompertz => "gompertz",
            ComparatorFamily::LogLogistic => "log-logistic",
            ComparatorFamily::LogNormal => "log-normal",
            ComparatorFamily::GeneralizedGamma => "generalized-gamma",
            ComparatorFamily::RoystonParmarPh => "royston-parmar-ph",
            ComparatorFamily::RoystonParmarNph => "royston-parmar-nph",
        }
    }

    pub fn is_spline(&self) -> bool {
        matches!(
            self,
            ComparatorFamily::RoystonParmarPh | ComparatorFamily::RoystonParmarNph
        )
    }

    fn base_names(&self) -> &'static [&'static str] {
        match self {
            ComparatorFamily::Exponential => &["log_rate"],
            ComparatorFamily::Weibull => &["log_scale", "log_shape"],
            ComparatorFamily::Gamma => &["log_rate", "log_shape"],
            ComparatorFamily::Gompertz => &["log_rate", "shape"],
            ComparatorFamily::LogLogistic => &["log_scale", "log_shape"],
            ComparatorFamily::LogNormal => &["meanlog", "log_sdlog"],
            ComparatorFamily::GeneralizedGamma => &["mu", "log_sigma", "Q"],
            ComparatorFamily::RoystonParmarPh | ComparatorFamily::RoystonParmarNph => &[],
        }
    }
}

impl std::str::FromStr for ComparatorFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.trim().to_ascii_lowercase().replace('_', "-");
        let alias = match norm.as_str() {
            "exp" => "exponential",
            "loglogistic" | "llogis" => "log-logistic",
            "lognormal" | "lnorm" => "log-normal",
            "gengamma" | "gen-gamma" => "generalized-gamma",
            "rp-ph" => "royston-parmar-ph",
            "rp-nph" | "rp-nonph" => "royston-parmar-nph",
            other => other,
        };
        ComparatorFamily::ALL
            .iter()
            .find(|f| f.name() == alias)
            .copied()
            .ok_or_else(|| Error::validation(format!("unknown comparator family `{s}`")))
    }
}

pub const DEFAULT_KNOTS: usize = 2;

fn default_knots() -> usize {
    DEFAULT_KNOTS
}

fn default_treatment() -> String {
    crate::scenario::DEFAULT_TREATMENT.to_string()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparatorSpec {
    pub family: ComparatorFamily,
    /// Covariates on the location parameter (no intercept).
    pub covariates: Vec<String>,
    /// Interior knots for spline families.
    #[serde(default = "default_knots")]
    pub knots: usize,
    #[serde(default = "default_treatment")]
    pub treatment: String,
    #[serde(default)]
    pub priors: PriorConfig,
}

impl ComparatorSpec {
    pub fn new(family: ComparatorFamily, covariates: &[&str]) -> Self {
        Self {
            family,
            covariates: covariates.iter().map(|c| c.to_string()).collect(),
            knots: if family.is_spline() { DEFAULT_KNOTS } else { 0 },
            treatment: default_treatment(),
            priors: PriorConfig::default(),
        }
    }

    pub fn with_knots(mut self, knots: usize) -> Self {
        self.knots = knots;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !self.family.is_spline() && self.knots != 0 {
            return Err(Error::validation(format!(
                "knots apply only to spline families, not {}",
                self.family.name()
            )));
        }
        if self.family == ComparatorFamily::RoystonParmarNph
            && !self.covariates.contains(&self.treatment)
        {
            return Err(Error::validation(format!(
                "non-PH spline model requires treatment covariate `{}`",
                self.treatment
            )));
        }
        if self.covariates.iter().any(|c| c == crate::data::INTERCEPT) {
            return Err(Error::validation("comparator covariates exclude the intercept"));
        }
        Ok(())
    }

    pub fn label(&self) -> String {
        if self.family.is_spline() {
            format!("{}:{}knots", self.family.name(), self.knots)
        } else {
            self.family.name().to_string()
        }
    }
}

/// Natural cubic spline basis in Royston–Parmar form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplineBasis {
    /// Boundary knots first and last.
    pub knots: Vec<f64>,
}

impl SplineBasis {
    /// Knots at the extreme log event times and equally spaced interior quantiles.
    pub fn from_event_times(event_times: &[f64], interior: usize) -> Result<Self> {
        let mut logs: Vec<f64> = event_times.iter().map(|t| t.ln()).collect();
        logs.sort_by(f64::total_cmp);
        if logs.len() < 2 || logs[0] == logs[logs.len() - 1] {
            return Err(Error::DegenerateData(
                "spline knots need at least two distinct event times".to_string(),
            ));
        }
        let mut knots = vec![logs[0]];
        for j in 1..=interior {
            let p = j as f64 / (interior + 1) as f64;
            knots.push(crate::mcmc::quantile_sorted(&logs, p));
        }
        knots.push(logs[logs.len() - 1]);
        Ok(Self { knots })
    }

    /// Number of spline coefficients `γ_0 … γ_{m+1}`.
    pub fn n_coef(&self) -> usize {
        self.knots.len()
    }

    /// `(s(x), s'(x))` for coefficients `g`.
    pub fn eval(&self, g: &[f64], x: f64) -> (f64, f64) {
        let kmin = self.knots[0];
        let kmax = self.knots[self.knots.len() - 1];
        let mut s = g[0] + g[1] * x;
        let mut ds = g[1];
        let cube = |u: f64| if u > 0.0 { u * u * u } else { 0.0 };
        let dcube = |u: f64| if u > 0.0 { 3.0 * u * u } else { 0.0 };
        for (j, &kj) in self.knots[1..self.knots.len() - 1].iter().enumerate() {
            let lam = (kmax - kj) / (kmax - kmin);
            let v = cube(x - kj) - lam * cube(x - kmin) - (1.0 - lam) * cube(x - kmax);
            let dv = dcube(x - kj) - lam * dcube(x - kmin) - (1.0 - lam) * dcube(x - kmax);
            s += g[j + 2] * v;
            ds += g[j + 2] * dv;
        }
        (s, ds)
    }
}

// Below this |Q| the generalized gamma is evaluated as its log-normal limit.
const GENGAMMA_Q_EPS: f64 = 1e-3;
// Large shape parameters need many continued-fraction terms.
const GENGAMMA_MAX_ITER: usize = 200_000;

fn ln_std_normal_sf(z: f64) -> f64 {
    if z < 30.0 {
        (0.5 * erfc(z / std::f64::consts::SQRT_2)).ln()
    } else {
        // Mills-ratio asymptotic series.
        let z2 = z * z;
        -0.5 * z2 - (z * (2.0 * std::f64::consts::PI).sqrt()).ln()
            + (1.0 - 1.0 / z2 + 3.0 / (z2 * z2) - 15.0 / (z2 * z2 * z2)).ln()
    }
}

fn lognormal_terms(ln_t: f64, mu: f64, sigma: f64) -> (f64, f64) {
    let w = (ln_t - mu) / sigma;
    let log_f = -ln_t - sigma.ln() - 0.5 * (2.0 * std::f64::consts::PI).ln() - 0.5 * w * w;
    (log_f, ln_std_normal_sf(w))
}

/// `ln(1 + e^x)` without overflow.
fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Per-observation `(log f(t), log S(t))` for parametric families.
///
/// `p` holds the family parameters with covariate effects already added to
/// the first one.
fn parametric_terms(family: ComparatorFamily, p: &[f64], t: f64, ln_t: f64) -> Result<(f64, f64)> {
    Ok(match family {
        ComparatorFamily::Exponential => {
            let rate = p[0].exp();
            (p[0] - rate * t, -rate * t)
        }
        ComparatorFamily::Weibull => {
            let a = p[1].exp();
            let h = (p[0] + a * ln_t).exp();
            (p[0] + p[1] + (a - 1.0) * ln_t - h, -h)
        }
        ComparatorFamily::Gamma => {
            let (rate, k) = (p[0].exp(), p[1].exp());
            let ig = incomplete_gamma_log(k, rate * t, GENGAMMA_MAX_ITER)?;
            let log_f = k * p[0] + (k - 1.0) * ln_t - rate * t - ig.ln_gamma_a;
            (log_f, ig.ln_q())
        }
        ComparatorFamily::Gompertz => {
            let (lb, eta) = (p[0], p[1]);
            let x = eta * t;
            // (e^{ηt} − 1)/η, continuous at η = 0
            let growth = if x.abs() < 1e-12 { t } else { x.exp_m1() / eta };
            let cum = lb.exp() * growth;
            (lb + x - cum, -cum)
        }
        ComparatorFamily::LogLogistic => {
            let b = p[1].exp();
            let u = b * (ln_t - p[0]);
            let log_f = p[1] - p[0] + (b - 1.0) * (ln_t - p[0]) - 2.0 * softplus(u);
            (log_f, -softplus(u))
        }
        ComparatorFamily::LogNormal => lognormal_terms(ln_t, p[0], p[1].exp()),
        ComparatorFamily::GeneralizedGamma => {
            let (mu, sigma, q) = (p[0], p[1].exp(), p[2]);
            if q.abs() < GENGAMMA_Q_EPS {
                lognormal_terms(ln_t, mu, sigma)
            } else {
                let w = (ln_t - mu) / sigma;
                let qi = 1.0 / (q * q);
                let qw = q * w;
                let log_f = -sigma.ln() + q.abs().ln() + qi * qi.ln() + qi * (qw - qw.exp())
                    - ln_t
                    - log_gamma(qi)?;
                let ig = incomplete_gamma_log(qi, qi * qw.exp(), GENGAMMA_MAX_ITER)?;
                let log_s = if q > 0.0 { ig.ln_q() } else { ig.ln_p() };
                (log_f, log_s)
            }
        }
        ComparatorFamily::RoystonParmarPh | ComparatorFamily::RoystonParmarNph => {
            unreachable!("spline families are handled separately")
        }
    })
}

/// A comparator bound to a dataset.
#[derive(Debug, Clone)]
pub struct ComparatorModel {
    spec: ComparatorSpec,
    names: Vec<String>,
    basis: Option<SplineBasis>,
    /// Covariate values per subject (no intercept).
    z: Vec<Vec<f64>>,
    trt_col: Option<usize>,
    ids: Vec<i64>,
    time: Vec<f64>,
    ln_time: Vec<f64>,
    event: Vec<bool>,
}

impl ComparatorModel {
    pub fn new(spec: &ComparatorSpec, ds: &Dataset) -> Result<Self> {
        spec.validate()?;
        ds.validate()?;
        let z = if spec.covariates.is_empty() {
            vec![Vec::new(); ds.len()]
        } else {
            ds.design_matrix(&spec.covariates)?
        };
        let event_times: Vec<f64> = ds
            .records
            .iter()
            .filter(|r| r.status == 1)
            .map(|r| r.time)
            .collect();
        let basis = if spec.family.is_spline() {
            Some(SplineBasis::from_event_times(&event_times, spec.knots)?)
        } else {
            None
        };
        let mut names: Vec<String> = match &basis {
            Some(b) => (0..b.n_coef()).map(|j| format!("gamma{j}")).collect(),
            None => spec.family.base_names().iter().map(|s| s.to_string()).collect(),
        };
        names.extend(spec.covariates.iter().cloned());
        let trt_col = spec.covariates.iter().position(|c| *c == spec.treatment);
        if spec.family == ComparatorFamily::RoystonParmarNph {
            names.push(format!("{}:gamma1", spec.treatment));
        }
        Ok(Self {
            spec: spec.clone(),
            names,
            basis,
            z,
            trt_col,
            ids: ds.records.iter().map(|r| r.id).collect(),
            time: ds.records.iter().map(|r| r.time).collect(),
            ln_time: ds.records.iter().map(|r| r.time.ln()).collect(),
            event: ds.records.iter().map(|r| r.status == 1).collect(),
        })
    }

    pub fn spec(&self) -> &ComparatorSpec {
        &self.spec
    }

    pub fn basis(&self) -> Option<&SplineBasis> {
        self.basis.as_ref()
    }

    fn n_base(&self) -> usize {
        match &self.basis {
            Some(b) => b.n_coef(),
            None => self.spec.family.base_names().len(),
        }
    }

    /// `(log f(t), log S(t))` for covariates `z` at time `t > 0`.
    pub fn terms(&self, x: &[f64], z: &[f64], t: f64, ln_t: f64) -> Result<(f64, f64)> {
        let nb = self.n_base();
        let lp: f64 = z.iter().zip(&x[nb..nb + z.len()]).map(|(a, b)| a * b).sum();
        match &self.basis {
            Some(basis) => {
                let mut g = x[..nb].to_vec();
                g[0] += lp;
                if self.spec.family == ComparatorFamily::RoystonParmarNph {
                    let trt = self.trt_col.expect("validated spec");
                    g[1] += z[trt] * x[nb + z.len()];
                }
                let (s, ds) = basis.eval(&g, ln_t);
                if !(ds > 0.0) {
                    return Err(Error::Evaluation(format!(
                        "spline cumulative hazard decreases at t = {t}"
                    )));
                }
                let cum = s.exp();
                Ok((-ln_t + ds.ln() + s - cum, -cum))
            }
            None => {
                let mut p = x[..nb].to_vec();
                p[0] += lp;
                parametric_terms(self.spec.family, &p, t, ln_t)
            }
        }
    }

    pub fn survival(&self, x: &[f64], z: &[f64], t: f64) -> Result<f64> {
        if t <= 0.0 {
            return Ok(1.0);
        }
        Ok(self.terms(x, z, t, t.ln())?.1.exp())
    }

    pub fn cumulative_hazard(&self, x: &[f64], z: &[f64], t: f64) -> Result<f64> {
        if t <= 0.0 {
            return Ok(0.0);
        }
        Ok(-self.terms(x, z, t, t.ln())?.1)
    }

    fn loglik_into(&self, x: &[f64], mut per: Option<&mut [f64]>) -> Result<f64> {
        let mut total = 0.0;
        for i in 0..self.time.len() {
            let (log_f, log_s) = self.terms(x, &self.z[i], self.time[i], self.ln_time[i])?;
            let li = if self.event[i] { log_f } else { log_s };
            if !li.is_finite() {
                return Err(Error::Evaluation(format!(
                    "non-finite log-likelihood for subject {} (t = {})",
                    self.ids[i], self.time[i]
                )));
            }
            if let Some(p) = per.as_deref_mut() {
                p[i] = li;
            }
            total += li;
        }
        Ok(total)
    }

    fn exposure_rate(&self) -> f64 {
        let d = self.event.iter().filter(|e| **e).count().max(1) as f64;
        d / self.time.iter().sum::<f64>()
    }
}

impl Target for ComparatorModel {
    fn names(&self) -> Vec<String> {
        self.names.clone()
    }

    fn transforms(&self) -> Vec<Transform> {
        vec![Transform::Identity; self.names.len()]
    }

    fn n_obs(&self) -> usize {
        self.time.len()
    }

    fn n_events(&self) -> usize {
        self.event.iter().filter(|e| **e).count()
    }

    fn initial(&self) -> Vec<f64> {
        let rate = self.exposure_rate();
        let mut x = vec![0.0; self.names.len()];
        match self.spec.family {
            ComparatorFamily::Exponential
            | ComparatorFamily::Weibull
            | ComparatorFamily::Gamma
            | ComparatorFamily::Gompertz => x[0] = rate.ln(),
            ComparatorFamily::LogLogistic | ComparatorFamily::LogNormal => x[0] = -rate.ln(),
            ComparatorFamily::GeneralizedGamma => {
                x[0] = -rate.ln();
                x[2] = 0.5;
            }
            ComparatorFamily::RoystonParmarPh | ComparatorFamily::RoystonParmarNph => {
                x[0] = rate.ln();
                x[1] = 1.0;
            }
        }
        x
    }

    fn log_prior(&self, x: &[f64]) -> f64 {
        x.iter().map(|v| normal_log_density(*v, self.spec.priors.coef_sd)).sum()
    }

    fn log_likelihood(&self, x: &[f64], per_obs: Option<&mut [f64]>) -> Result<f64> {
        self.loglik_into(x, per_obs)
    }
}

/// Pointwise `v·log f(t) + (1 − v)·log S(t)`.
pub fn comparator_loglik(spec: &ComparatorSpec, params: &[f64], ds: &Dataset) -> Result<LogLikBreakdown> {
    let model = ComparatorModel::new(spec, ds)?;
    if params.len() != model.names.len() {
        return Err(Error::validation(format!(
            "{} expects {} parameters, got {}",
            spec.label(),
            model.names.len(),
            params.len()
        )));
    }
    let mut per = vec![0.0; model.n_obs()];
    let total = model.loglik_into(params, Some(&mut per))?;
    Ok(LogLikBreakdown {
        total,
        per_observation: per,
    })
}

/// Fits a comparator with the shared sampler.
pub fn fit_comparator(spec: &ComparatorSpec, ds: &Dataset, cfg: &SamplerConfig) -> Result<(ComparatorModel, FitResult)> {
    let model = ComparatorModel::new(spec, ds)?;
    let fit = fit_target(&model, cfg, &spec.label(), spec.priors, None)?;
    Ok((model, fit))
}

const RMST_TOL: f64 = 1e-8;

/// Per-draw RMST difference between `arms[1]` and `arms[0]` of the treatment
/// covariate; other covariates are set from `profile` (missing ones are 0).
pub fn comparator_rmst_diff(
    model: &ComparatorModel,
    fit: &FitResult,
    t_max: f64,
    arms: [f64; 2],
    profile: &std::collections::BTreeMap<String, f64>,
) -> Result<PosteriorSummary> {
    let row = |arm: f64| -> Vec<f64> {
        model
            .spec
            .covariates
            .iter()
            .map(|c| {
                if *c == model.spec.treatment {
                    arm
                } else {
                    profile.get(c).copied().unwrap_or(0.0)
                }
            })
            .collect()
    };
    let (z0, z1) = (row(arms[0]), row(arms[1]));
    let rmst = |x: &[f64], z: &[f64]| -> Result<f64> {
        let mut err = None;
        let q = integrate_adaptive(
            |t| match model.survival(x, z, t) {
                Ok(s) => s,
                Err(e) => {
                    err.get_or_insert(e);
                    0.0
                }
            },
            0.0,
            t_max,
            RMST_TOL,
        )?;
        err.map_or(Ok(q.value), Err)
    };
    let values = (0..fit.draws.n_draws())
        .map(|i| {
            let x = fit.draws.draw(i);
            Ok(rmst(x, &z1)? - rmst(x, &z0)?)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(PosteriorSummary::from_values(values))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeagueRow {
    pub model: String,
    pub rmst_diff_median: f64,
    pub waic: f64,
}

/// Sorts rows by WAIC, best (lowest) first.
pub fn league_table(mut rows: Vec<LeagueRow>) -> Vec<LeagueRow> {
    rows.sort_by(|a, b| a.waic.total_cmp(&b.waic).then_with(|| a.model.cmp(&b.model)));
    rows
}

/// Writes `model, rmst_diff_median, waic`.
pub fn write_league_csv<W: Write>(rows: &[LeagueRow], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["model", "rmst_diff_median", "waic"])?;
    for r in rows {
        w.write_record([r.model.clone(), r.rmst_diff_median.to_string(), r.waic.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::SubjectRecord;
    use crate::likelihood::ChangePointModel;
    use crate::scenario::{expand_preset, Family, ScenarioPreset};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn data(seed: u64, n: usize) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let recs = (0..n)
            .map(|i| {
                let trt = (i % 2) as f64;
                let t: f64 = -(1.0 - rng.random::<f64>()).ln() / (0.4 * (-0.5 * trt).exp());
                SubjectRecord {
                    id: i as i64 + 1,
                    time: t.clamp(1e-3, 4.0),
                    status: u8::from(t < 4.0),
                    covariates: vec![trt],
                }
            })
            .collect();
        Dataset::new(vec!["trt".into()], recs).unwrap()
    }

    #[test]
    fn weibull_matches_changepoint_k0() {
        let ds = data(1, 120);
        let spec = ComparatorSpec::new(ComparatorFamily::Weibull, &["trt"]);
        // comparator: log_scale, log_shape, trt; change-point: Intercept, trt, shape
        let ll = comparator_loglik(&spec, &[-0.9, 0.15, -0.4], &ds).unwrap();
        let cp_spec = expand_preset(ScenarioPreset::StepHrA, Family::Weibull, &["trt"], 0).unwrap();
        let cp = ChangePointModel::new(&cp_spec, &ds).unwrap();
        let state = cp.layout().to_state(&[-0.9, -0.4, 0.15]);
        let want = cp.log_likelihood(&state).unwrap();
        assert!((ll.total - want.total).abs() < 1e-12);
        for (a, b) in ll.per_observation.iter().zip(&want.per_observation) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn spline_without_interior_knots_is_weibull() {
        let ds = data(2, 100);
        let rp = ComparatorSpec::new(ComparatorFamily::RoystonParmarPh, &["trt"]).with_knots(0);
        let wb = ComparatorSpec::new(ComparatorFamily::Weibull, &["trt"]);
        // log H = γ0 + γ1 log t + βz  ⇔  m = e^{γ0}, a = γ1
        let (g0, g1, b) = (-0.8, 1.3, -0.35);
        let a = comparator_loglik(&rp, &[g0, g1, b], &ds).unwrap();
        let w = comparator_loglik(&wb, &[g0, g1.ln(), b], &ds).unwrap();
        assert!((a.total - w.total).abs() < 1e-10);
    }

    #[test]
    fn gompertz_small_shape_is_exponential() {
        let ds = data(3, 80);
        let g = comparator_loglik(
            &ComparatorSpec::new(ComparatorFamily::Gompertz, &["trt"]),
            &[-0.7, 1e-8, -0.5],
            &ds,
        )
        .unwrap();
        let e = comparator_loglik(
            &ComparatorSpec::new(ComparatorFamily::Exponential, &["trt"]),
            &[-0.7, -0.5],
            &ds,
        )
        .unwrap();
        assert!((g.total - e.total).abs() < 1e-6);
    }

    #[test]
    fn gamma_shape_one_is_exponential() {
        let ds = data(4, 60);
        let g = comparator_loglik(
            &ComparatorSpec::new(ComparatorFamily::Gamma, &["trt"]),
            &[-0.7, 0.0, -0.5],
            &ds,
        )
        .unwrap();
        let e = comparator_loglik(
            &ComparatorSpec::new(ComparatorFamily::Exponential, &["trt"]),
            &[-0.7, -0.5],
            &ds,
        )
        .unwrap();
        assert!((g.total - e.total).abs() < 1e-10);
    }

    #[test]
    fn gengamma_special_cases() {
        let ds = data(5, 60);
        let gg = ComparatorSpec::new(ComparatorFamily::GeneralizedGamma, &["trt"]);
        let ln = ComparatorSpec::new(ComparatorFamily::LogNormal, &["trt"]);
        let wb = ComparatorSpec::new(ComparatorFamily::Weibull, &["trt"]);
        let (mu, ls, b) = (0.6, -0.2, 0.3);
        let at_zero = comparator_loglik(&gg, &[mu, ls, 0.0, b], &ds).unwrap();
        let lnorm = comparator_loglik(&ln, &[mu, ls, b], &ds).unwrap();
        assert_eq!(at_zero.total, lnorm.total);
        // Q = 1 is Weibull with shape 1/σ and log scale −μ/σ.
        let sigma = f64::exp(ls);
        let at_one = comparator_loglik(&gg, &[mu, ls, 1.0, b], &ds).unwrap();
        let weib = comparator_loglik(&wb, &[-mu / sigma, -ls, -b / sigma], &ds).unwrap();
        assert!((at_one.total - weib.total).abs() < 1e-9);
        // Q = σ is gamma with shape σ⁻² and rate σ⁻² e^{−μ}.
        let gm = ComparatorSpec::new(ComparatorFamily::Gamma, &["trt"]);
        let at_sigma = comparator_loglik(&gg, &[mu, ls, sigma, b], &ds).unwrap();
        let gamma = comparator_loglik(&gm, &[-2.0 * ls - mu, -2.0 * ls, -b], &ds).unwrap();
        assert!((at_sigma.total - gamma.total).abs() < 1e-9);
    }

    #[test]
    fn density_integrates_to_cdf() {
        let ds = data(6, 40);
        let cases: [(ComparatorFamily, &[f64]); 7] = [
            (ComparatorFamily::Gamma, &[-0.3, 0.8, 0.2]),
            (ComparatorFamily::Gompertz, &[-1.0, -0.4, 0.2]),
            (ComparatorFamily::LogLogistic, &[0.3, 0.5, 0.2]),
            (ComparatorFamily::LogNormal, &[0.3, -0.5, 0.2]),
            (ComparatorFamily::GeneralizedGamma, &[0.3, -0.5, -0.6, 0.2]),
            (ComparatorFamily::GeneralizedGamma, &[0.3, -0.5, 0.7, 0.2]),
            (ComparatorFamily::RoystonParmarPh, &[-1.0, 1.2, 0.05, -0.02, 0.2]),
        ];
        for (family, x) in cases {
            let model = ComparatorModel::new(&ComparatorSpec::new(family, &["trt"]), &ds).unwrap();
            let z = [1.0];
            let f = |t: f64| model.terms(x, &z, t, t.ln()).unwrap().0.exp();
            for t in [0.3, 1.0, 2.5] {
                let q = integrate_adaptive(f, 1e-12, t, 1e-11).unwrap();
                let s = model.survival(x, &z, t).unwrap();
                assert!((q.value - (1.0 - s)).abs() < 1e-7, "{family:?} t={t}: {} vs {}", q.value, 1.0 - s);
            }
        }
    }

    #[test]
    fn cumulative_hazard_monotone() {
        let ds = data(7, 40);
        for family in ComparatorFamily::ALL {
            let spec = ComparatorSpec::new(family, &["trt"]);
            let model = ComparatorModel::new(&spec, &ds).unwrap();
            let x = model.initial();
            let mut prev = 0.0;
            for i in 1..200 {
                let t = i as f64 * 0.05;
                let h = model.cumulative_hazard(&x, &[1.0], t).unwrap();
                assert!(h >= prev, "{family:?} at {t}");
                prev = h;
            }
        }
    }

    #[test]
    fn family_names_round_trip() {
        for f in ComparatorFamily::ALL {
            assert_eq!(f.name().parse::<ComparatorFamily>().unwrap(), f);
        }
        assert_eq!("gengamma".parse::<ComparatorFamily>().unwrap(), ComparatorFamily::GeneralizedGamma);
        assert!("cox".parse::<ComparatorFamily>().is_err());
    }

    #[test]
    fn league_sorted_by_waic() {
        let rows = league_table(vec![
            LeagueRow { model: "b".into(), rmst_diff_median: 0.1, waic: 12.0 },
            LeagueRow { model: "a".into(), rmst_diff_median: 0.2, waic: 10.0 },
        ]);
        assert_eq!(rows[0].model, "a");
        let mut buf = Vec::new();
        write_league_csv(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("model,rmst_diff_median,waic\na,0.2,10\n"));
    }

    #[test]
    fn fit_exponential_recovers_rate() {
        let ds = data(8, 300);
        let spec = ComparatorSpec::new(ComparatorFamily::Exponential, &["trt"]);
        let cfg = SamplerConfig { n_chains: 2, ..SamplerConfig::default() }.with_lengths(3000, 1000, 2);
        let (_, fit) = fit_comparator(&spec, &ds, &cfg).unwrap();
        assert!((fit.median("log_rate").unwrap() - 0.4f64.ln()).abs() < 0.25);
        assert!((fit.median("trt").unwrap() + 0.5).abs() < 0.35);
    }
}
