//! Posterior survival, hazard-ratio and RMST summaries at a covariate profile.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::likelihood::{ParamLayout, ParameterState, RowParams};
use crate::mcmc::{Interval95, PosteriorDraws};
use crate::scenario::ModelSpec;
use crate::special::integrate_with_breaks;

pub const DEFAULT_GRID_POINTS: usize = 200;
const RMST_TOL: f64 = 1e-8;

/// Which covariate profile and arms to predict for.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveRequest {
    /// Covariate values; names ending in `_scale` default to 0.
    #[serde(default)]
    pub profile: BTreeMap<String, f64>,
    /// Treatment values to contrast; the first is the reference arm.
    #[serde(default = "default_arms")]
    pub arms: Vec<f64>,
    /// Prediction grid; defaults to evenly spaced points on `[0, t_max]`.
    #[serde(default)]
    pub times: Vec<f64>,
    pub t_max: f64,
}

fn default_arms() -> Vec<f64> {
    vec![0.0, 1.0]
}

impl CurveRequest {
    pub fn new(t_max: f64) -> Self {
        Self {
            profile: BTreeMap::new(),
            arms: default_arms(),
            times: Vec::new(),
            t_max,
        }
    }

    pub fn grid(&self) -> Vec<f64> {
        if !self.times.is_empty() {
            return self.times.clone();
        }
        let n = DEFAULT_GRID_POINTS;
        (0..n).map(|i| self.t_max * i as f64 / (n - 1) as f64).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.t_max > 0.0 && self.t_max.is_finite()) {
            return Err(Error::validation(format!("t_max must be positive, got {}", self.t_max)));
        }
        if self.arms.is_empty() {
            return Err(Error::validation("at least one arm is required"));
        }
        let grid = self.grid();
        if grid.iter().any(|t| !(*t >= 0.0 && *t <= self.t_max)) {
            return Err(Error::validation("time grid must lie within [0, t_max]"));
        }
        if grid.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::validation("time grid must be strictly increasing"));
        }
        Ok(())
    }

    /// Design row (leading intercept) for the given treatment value.
    pub fn design_row(&self, spec: &ModelSpec, arm: f64) -> Result<Vec<f64>> {
        spec.covariates
            .iter()
            .enumerate()
            .map(|(r, name)| {
                if r == 0 {
                    Ok(1.0)
                } else if *name == spec.treatment {
                    Ok(arm)
                } else if let Some(v) = self.profile.get(name) {
                    Ok(*v)
                } else if name.ends_with("_scale") {
                    Ok(0.0)
                } else {
                    Err(Error::validation(format!(
                        "covariate profile is missing `{name}`"
                    )))
                }
            })
            .collect()
    }
}

/// Pointwise posterior summary of one arm's curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmCurve {
    pub arm: f64,
    pub median: Vec<f64>,
    pub lo95: Vec<f64>,
    pub hi95: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveSummary {
    pub times: Vec<f64>,
    pub curves: Vec<ArmCurve>,
    /// Set for hazard-ratio curves when treatment also enters the shape.
    #[serde(default)]
    pub non_constant_within_interval: bool,
}

impl CurveSummary {
    /// Writes `time, arm, median, lo95, hi95`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["time", "arm", "median", "lo95", "hi95"])?;
        for c in &self.curves {
            for (i, t) in self.times.iter().enumerate() {
                w.write_record([
                    t.to_string(),
                    c.arm.to_string(),
                    c.median[i].to_string(),
                    c.lo95[i].to_string(),
                    c.hi95[i].to_string(),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Per-draw values of a scalar functional with their summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorSummary {
    pub mean: f64,
    pub median: f64,
    pub lo95: f64,
    pub hi95: f64,
    #[serde(skip)]
    pub values: Vec<f64>,
}

impl PosteriorSummary {
    pub fn from_values(values: Vec<f64>) -> Self {
        let q = Interval95::from_values(&values);
        Self {
            mean: values.iter().sum::<f64>() / values.len() as f64,
            median: q.median,
            lo95: q.lo95,
            hi95: q.hi95,
            values,
        }
    }
}

fn states(draws: &PosteriorDraws, spec: &ModelSpec) -> Vec<ParameterState> {
    let layout = ParamLayout::new(spec);
    (0..draws.n_draws()).map(|i| layout.to_state(draws.draw(i))).collect()
}

fn summarize_pointwise(arm: f64, per_draw: &[Vec<f64>], n_times: usize) -> ArmCurve {
    let mut curve = ArmCurve {
        arm,
        median: Vec::with_capacity(n_times),
        lo95: Vec::with_capacity(n_times),
        hi95: Vec::with_capacity(n_times),
    };
    for i in 0..n_times {
        let col: Vec<f64> = per_draw.iter().map(|d| d[i]).collect();
        let q = Interval95::from_values(&col);
        curve.median.push(q.median);
        curve.lo95.push(q.lo95);
        curve.hi95.push(q.hi95);
    }
    curve
}

/// Survival `S(t) = exp(−H(t))` for one state and design row.
pub fn survival_at(spec: &ModelSpec, state: &ParameterState, z: &[f64], t: f64) -> Result<f64> {
    Ok((-RowParams::new(z, state, spec)?.cum_hazard(t, &state.taus)?).exp())
}

/// Pointwise posterior survival for every requested arm.
pub fn survival_curve(
    draws: &PosteriorDraws,
    spec: &ModelSpec,
    req: &CurveRequest,
) -> Result<CurveSummary> {
    req.validate()?;
    let times = req.grid();
    let states = states(draws, spec);
    let mut curves = Vec::new();
    for &arm in &req.arms {
        let z = req.design_row(spec, arm)?;
        let per_draw = states
            .iter()
            .map(|s| {
                let rp = RowParams::new(&z, s, spec)?;
                times
                    .iter()
                    .map(|&t| Ok((-rp.cum_hazard(t, &s.taus)?).exp()))
                    .collect::<Result<Vec<f64>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        curves.push(summarize_pointwise(arm, &per_draw, times.len()));
    }
    Ok(CurveSummary {
        times,
        curves,
        non_constant_within_interval: false,
    })
}

// Hazards at t = 0 can be 0 or ∞ for non-unit shapes; the ratio is taken just above.
const HR_T_FLOOR: f64 = 1e-9;

/// Posterior hazard ratio of every non-reference arm against the first arm.
pub fn hr_curve(draws: &PosteriorDraws, spec: &ModelSpec, req: &CurveRequest) -> Result<CurveSummary> {
    req.validate()?;
    if req.arms.len() < 2 {
        return Err(Error::validation("a hazard ratio needs a reference and a contrast arm"));
    }
    let trt = spec.treatment_row().ok_or_else(|| {
        Error::validation(format!("model has no treatment covariate `{}`", spec.treatment))
    })?;
    let times = req.grid();
    let states = states(draws, spec);
    let z0 = req.design_row(spec, req.arms[0])?;
    let mut curves = Vec::new();
    for &arm in &req.arms[1..] {
        let z1 = req.design_row(spec, arm)?;
        let per_draw = states
            .iter()
            .map(|s| {
                let r0 = RowParams::new(&z0, s, spec)?;
                let r1 = RowParams::new(&z1, s, spec)?;
                times
                    .iter()
                    .map(|&t| {
                        let t = t.max(HR_T_FLOOR);
                        let (l1, _) = r1.eval(t, t.ln(), &s.taus)?;
                        let (l0, _) = r0.eval(t, t.ln(), &s.taus)?;
                        Ok((l1 - l0).exp())
                    })
                    .collect::<Result<Vec<f64>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        curves.push(summarize_pointwise(arm, &per_draw, times.len()));
    }
    let non_ph = spec.shape_mask[trt]
        .iter()
        .any(|c| *c != crate::scenario::Constraint::Zero);
    Ok(CurveSummary {
        times,
        curves,
        non_constant_within_interval: non_ph,
    })
}

fn rmst_one(spec: &ModelSpec, s: &ParameterState, z: &[f64], t_max: f64) -> Result<f64> {
    let rp = RowParams::new(z, s, spec)?;
    let mut err = None;
    let q = integrate_with_breaks(
        |t| match rp.cum_hazard(t, &s.taus) {
            Ok(h) => (-h).exp(),
            Err(e) => {
                err.get_or_insert(e);
                0.0
            }
        },
        0.0,
        t_max,
        &s.taus,
        RMST_TOL,
    )?;
    match err {
        Some(e) => Err(e),
        None => Ok(q.value),
    }
}

/// Restricted mean survival time `∫_0^{t_max} S(t) dt` for one arm.
pub fn rmst(
    draws: &PosteriorDraws,
    spec: &ModelSpec,
    req: &CurveRequest,
    arm: f64,
) -> Result<PosteriorSummary> {
    req.validate()?;
    let z = req.design_row(spec, arm)?;
    let values = states(draws, spec)
        .iter()
        .map(|s| rmst_one(spec, s, &z, req.t_max))
        .collect::<Result<Vec<f64>>>()?;
    Ok(PosteriorSummary::from_values(values))
}

/// Per-draw `RMST(second arm) − RMST(first arm)`.
pub fn rmst_diff(
    draws: &PosteriorDraws,
    spec: &ModelSpec,
    req: &CurveRequest,
) -> Result<PosteriorSummary> {
    req.validate()?;
    if req.arms.len() < 2 {
        return Err(Error::validation("RMST difference needs two arms"));
    }
    let z0 = req.design_row(spec, req.arms[0])?;
    let z1 = req.design_row(spec, req.arms[1])?;
    let values = states(draws, spec)
        .iter()
        .map(|s| Ok(rmst_one(spec, s, &z1, req.t_max)? - rmst_one(spec, s, &z0, req.t_max)?))
        .collect::<Result<Vec<f64>>>()?;
    Ok(PosteriorSummary::from_values(values))
}

/// Gaussian kernel density of the pooled change-point draws over `times`
/// (Silverman bandwidth). Empty when the model has no change-points.
pub fn changepoint_density(draws: &PosteriorDraws, spec: &ModelSpec, times: &[f64]) -> Vec<f64> {
    let layout = ParamLayout::new(spec);
    let taus: Vec<f64> = (0..spec.k)
        .filter_map(|j| layout.change_point_index(j))
        .flat_map(|idx| draws.column(idx))
        .collect();
    if taus.is_empty() {
        return Vec::new();
    }
    let n = taus.len() as f64;
    let mean = taus.iter().sum::<f64>() / n;
    let sd = (taus.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0)).sqrt();
    let mut sorted = taus.clone();
    sorted.sort_by(f64::total_cmp);
    let iqr = crate::mcmc::quantile_sorted(&sorted, 0.75) - crate::mcmc::quantile_sorted(&sorted, 0.25);
    let spread = if iqr > 0.0 { sd.min(iqr / 1.34) } else { sd };
    let bw = (0.9 * spread * n.powf(-0.2)).max(1e-6);
    let norm = 1.0 / (n * bw * (2.0 * std::f64::consts::PI).sqrt());
    times
        .iter()
        .map(|&t| norm * taus.iter().map(|x| (-0.5 * ((t - x) / bw).powi(2)).exp()).sum::<f64>())
        .collect()
}

/// Writes `time, density`.
pub fn write_density_csv<W: Write>(times: &[f64], density: &[f64], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["time", "density"])?;
    for (t, d) in times.iter().zip(density) {
        w.write_record([t.to_string(), d.to_string()])?;
    }
    w.flush()?;
    Ok(())
}
