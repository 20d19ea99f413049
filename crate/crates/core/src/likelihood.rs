//! Change-point log-likelihood, priors and the unnormalized log-posterior.
//!
//! Each subject contributes `v·log h(t) − H(t)`, where `H` accumulates the
//! full earlier intervals plus the partial accrual in the interval holding
//! `t`. Coefficient priors: the intercepts imply `m, a ~ U(0, upper)` on the
//! natural scale; every other coefficient and `log ω` is `Normal(0, sd)`.
//! The change-point prior is the density of the even order statistics of
//! `2k+1` uniform points on `(0, τ_max)`.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::data::{interval_index, Dataset};
use crate::error::{Error, Result};
use crate::hazard::{cte_cum_hazard_increment, cte_hazard_ratio_unchecked, CteParams, SegmentParams};
use crate::scenario::{Constraint, ModelSpec, PriorConfig, MAX_CHANGEPOINTS};

const MAX_COLS: usize = MAX_CHANGEPOINTS + 1;

/// Dense row-major `rows × cols` matrix (covariates × intervals).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct CoefficientMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl CoefficientMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_rows<const N: usize>(rows: &[[f64; N]]) -> Self {
        Self {
            rows: rows.len(),
            cols: N,
            data: rows.iter().flatten().copied().collect(),
        }
    }

    pub fn from_nested(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::validation("coefficient matrix rows differ in length"));
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data: rows.iter().flatten().copied().collect(),
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn column(&self, c: usize) -> impl Iterator<Item = f64> + '_ {
        (0..self.rows).map(move |r| self.get(r, c))
    }

    pub fn to_nested(&self) -> Vec<Vec<f64>> {
        self.data.chunks(self.cols.max(1)).map(<[f64]>::to_vec).collect()
    }
}

impl TryFrom<Vec<Vec<f64>>> for CoefficientMatrix {
    type Error = Error;
    fn try_from(v: Vec<Vec<f64>>) -> Result<Self> {
        Self::from_nested(&v)
    }
}

impl From<CoefficientMatrix> for Vec<Vec<f64>> {
    fn from(m: CoefficientMatrix) -> Self {
        m.to_nested()
    }
}

/// A point in the parameter space of a [`ModelSpec`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterState {
    pub taus: Vec<f64>,
    pub beta_scale: CoefficientMatrix,
    pub beta_shape: CoefficientMatrix,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub omega: Option<f64>,
}

impl ParameterState {
    /// Checks dimensions, change-point ordering and every mask constraint.
    pub fn validate(&self, spec: &ModelSpec) -> Result<()> {
        let (p, cols) = (spec.p(), spec.n_intervals());
        for (name, m) in [("beta_scale", &self.beta_scale), ("beta_shape", &self.beta_shape)] {
            if m.rows() != p || m.cols() != cols {
                return Err(Error::validation(format!("{name} must be {p} x {cols}")));
            }
        }
        if self.taus.len() != spec.k {
            return Err(Error::validation(format!(
                "expected {} change-points, got {}",
                spec.k,
                self.taus.len()
            )));
        }
        crate::data::validate_taus(&self.taus)?;
        for (name, mask, m) in [
            ("scale", &spec.scale_mask, &self.beta_scale),
            ("shape", &spec.shape_mask, &self.beta_shape),
        ] {
            let mut groups: HashMap<u32, f64> = HashMap::new();
            for (r, row) in mask.iter().enumerate() {
                for (c, con) in row.iter().enumerate() {
                    let v = m.get(r, c);
                    if !v.is_finite() {
                        return Err(Error::validation(format!("{name}[{r},{c}] is not finite")));
                    }
                    match con {
                        Constraint::Zero | Constraint::CteLink if v != 0.0 => {
                            return Err(Error::validation(format!(
                                "{name}[{r},{c}] is constrained to zero"
                            )))
                        }
                        Constraint::Shared(g)
                            if *groups.entry(*g).or_insert(v) != v => {
                                return Err(Error::validation(format!(
                                    "{name} shared group {g} has unequal entries"
                                )));
                            }
                        _ => {}
                    }
                }
            }
        }
        match (spec.is_cte(), self.omega) {
            (true, Some(w)) if w > 0.0 && w.is_finite() => Ok(()),
            (true, _) => Err(Error::validation("converging hazards requires a positive omega")),
            (false, Some(_)) => Err(Error::validation("omega is only used by converging hazards")),
            (false, None) => Ok(()),
        }
    }
}

/// Log-likelihood with pointwise contributions in dataset order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogLikBreakdown {
    pub total: f64,
    pub per_observation: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoefMatrix {
    Scale,
    Shape,
}

/// What one entry of the sampled parameter vector controls.
#[derive(Debug, Clone, PartialEq)]
pub enum ParamKind {
    Coefficient {
        matrix: CoefMatrix,
        cells: Vec<(usize, usize)>,
        intercept: bool,
    },
    /// 0-based change-point index.
    ChangePoint(usize),
    Omega,
}

/// Mapping between the flat parameter vector and [`ParameterState`].
///
/// Order: scale coefficients, shape coefficients (each by first appearance in
/// row-major order), change-points, then `ω`.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamLayout {
    pub names: Vec<String>,
    pub kinds: Vec<ParamKind>,
    rows: usize,
    cols: usize,
}

impl ParamLayout {
    pub fn new(spec: &ModelSpec) -> Self {
        let mut names = Vec::new();
        let mut kinds = Vec::new();
        for (matrix, mask, label) in [
            (CoefMatrix::Scale, &spec.scale_mask, "scale"),
            (CoefMatrix::Shape, &spec.shape_mask, "shape"),
        ] {
            let mut group_slot: HashMap<u32, usize> = HashMap::new();
            for (r, row) in mask.iter().enumerate() {
                for (c, con) in row.iter().enumerate() {
                    match con {
                        Constraint::Free => {
                            names.push(format!("{label}.{}.{}", spec.covariates[r], c + 1));
                            kinds.push(ParamKind::Coefficient {
                                matrix,
                                cells: vec![(r, c)],
                                intercept: r == 0,
                            });
                        }
                        Constraint::Shared(g) => match group_slot.get(g) {
                            Some(&slot) => {
                                if let ParamKind::Coefficient { cells, intercept, .. } =
                                    &mut kinds[slot]
                                {
                                    cells.push((r, c));
                                    *intercept |= r == 0;
                                }
                            }
                            None => {
                                group_slot.insert(*g, kinds.len());
                                names.push(String::new());
                                kinds.push(ParamKind::Coefficient {
                                    matrix,
                                    cells: vec![(r, c)],
                                    intercept: r == 0,
                                });
                            }
                        },
                        Constraint::Zero | Constraint::CteLink => {}
                    }
                }
            }
            // Shared groups are named after their row when they stay on one row.
            for (g, slot) in group_slot {
                if let ParamKind::Coefficient { cells, .. } = &kinds[slot] {
                    let r0 = cells[0].0;
                    names[slot] = if cells.iter().all(|(r, _)| *r == r0) {
                        format!("{label}.{}", spec.covariates[r0])
                    } else {
                        format!("{label}.shared{g}")
                    };
                }
            }
        }
        for j in 0..spec.k {
            names.push(format!("tau.{}", j + 1));
            kinds.push(ParamKind::ChangePoint(j));
        }
        if spec.is_cte() {
            names.push("omega".to_string());
            kinds.push(ParamKind::Omega);
        }
        Self {
            names,
            kinds,
            rows: spec.p(),
            cols: spec.n_intervals(),
        }
    }

    pub fn len(&self) -> usize {
        self.kinds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.kinds.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn change_point_index(&self, j: usize) -> Option<usize> {
        self.kinds.iter().position(|k| *k == ParamKind::ChangePoint(j))
    }

    pub fn to_state(&self, x: &[f64]) -> ParameterState {
        let mut scale = CoefficientMatrix::zeros(self.rows, self.cols);
        let mut shape = CoefficientMatrix::zeros(self.rows, self.cols);
        let mut taus = Vec::new();
        let mut omega = None;
        for (kind, &v) in self.kinds.iter().zip(x) {
            match kind {
                ParamKind::Coefficient { matrix, cells, .. } => {
                    let m = match matrix {
                        CoefMatrix::Scale => &mut scale,
                        CoefMatrix::Shape => &mut shape,
                    };
                    for &(r, c) in cells {
                        m.set(r, c, v);
                    }
                }
                ParamKind::ChangePoint(_) => taus.push(v),
                ParamKind::Omega => omega = Some(v),
            }
        }
        ParameterState {
            taus,
            beta_scale: scale,
            beta_shape: shape,
            omega,
        }
    }

    pub fn from_state(&self, state: &ParameterState) -> Vec<f64> {
        self.kinds
            .iter()
            .map(|kind| match kind {
                ParamKind::Coefficient { matrix, cells, .. } => {
                    let (r, c) = cells[0];
                    match matrix {
                        CoefMatrix::Scale => state.beta_scale.get(r, c),
                        CoefMatrix::Shape => state.beta_shape.get(r, c),
                    }
                }
                ParamKind::ChangePoint(j) => state.taus[*j],
                ParamKind::Omega => state.omega.unwrap_or(f64::NAN),
            })
            .collect()
    }
}

pub(crate) fn normal_log_density(x: f64, sd: f64) -> f64 {
    let z = x / sd;
    -0.5 * z * z - (sd * (2.0 * std::f64::consts::PI).sqrt()).ln()
}

/// Log density of `β` when `exp(β) ~ U(0, upper)`.
pub(crate) fn log_uniform_link_density(beta: f64, upper: f64) -> f64 {
    if beta.exp() < upper {
        beta - upper.ln()
    } else {
        f64::NEG_INFINITY
    }
}

fn ln_factorial(n: usize) -> f64 {
    (1..=n).map(|i| (i as f64).ln()).sum()
}

/// `log[(2k+1)! Π_{j=1}^{k+1} (τ_j − τ_{j−1}) / τ_max^{2k+1}]` with `τ_0 = 0`,
/// `τ_{k+1} = τ_max`; `−∞` outside the ordered support.
pub fn log_prior_changepoints(taus: &[f64], tau_max: f64, k: usize) -> f64 {
    if taus.len() != k || !(tau_max > 0.0 && tau_max.is_finite()) {
        return f64::NEG_INFINITY;
    }
    let mut prev = 0.0;
    let mut acc = ln_factorial(2 * k + 1) - (2 * k + 1) as f64 * tau_max.ln();
    for &t in taus.iter().chain(std::iter::once(&tau_max)) {
        let gap = t - prev;
        if !(gap > 0.0) {
            return f64::NEG_INFINITY;
        }
        acc += gap.ln();
        prev = t;
    }
    acc
}

/// Sum of coefficient log-priors, one term per sampled coefficient, plus the
/// normal log-density of `log ω` for converging hazards.
pub fn log_prior_coefficients(state: &ParameterState, spec: &ModelSpec) -> f64 {
    let layout = ParamLayout::new(spec);
    coefficient_prior(&layout, &layout.from_state(state), &spec.priors)
}

fn coefficient_prior(layout: &ParamLayout, x: &[f64], priors: &PriorConfig) -> f64 {
    let mut acc = 0.0;
    for (kind, &v) in layout.kinds.iter().zip(x) {
        acc += match kind {
            ParamKind::Coefficient { intercept: true, .. } => {
                log_uniform_link_density(v, priors.intercept_upper)
            }
            ParamKind::Coefficient { .. } => normal_log_density(v, priors.coef_sd),
            ParamKind::Omega if v > 0.0 => normal_log_density(v.ln(), priors.coef_sd),
            ParamKind::Omega => f64::NEG_INFINITY,
            ParamKind::ChangePoint(_) => 0.0,
        };
    }
    acc
}

/// Segment parameters for one design row, cached across its intervals.
#[derive(Debug, Clone)]
pub(crate) struct RowParams {
    /// Final interval index (0-based); equals the number of change-points.
    k: usize,
    /// False for the arm left unsplit by an arm restriction.
    split: bool,
    ln_m: [f64; MAX_COLS],
    ln_a: [f64; MAX_COLS],
    m: [f64; MAX_COLS],
    a: [f64; MAX_COLS],
    /// Cumulative hazard at `τ_c`; `cum[0] = 0`.
    cum: [f64; MAX_COLS],
    /// `τ_{c−1}^{a_c}`, zero for the first interval.
    lo_pow: [f64; MAX_COLS],
    cte: Option<CteParams>,
}

impl RowParams {
    pub(crate) fn new(z: &[f64], state: &ParameterState, spec: &ModelSpec) -> Result<Self> {
        let k = spec.k;
        let mut rp = RowParams {
            k,
            split: true,
            ln_m: [0.0; MAX_COLS],
            ln_a: [0.0; MAX_COLS],
            m: [0.0; MAX_COLS],
            a: [0.0; MAX_COLS],
            cum: [0.0; MAX_COLS],
            lo_pow: [0.0; MAX_COLS],
            cte: None,
        };
        for c in 0..=k {
            let dot = |m: &CoefficientMatrix| -> f64 {
                z.iter().zip(m.column(c)).map(|(zi, b)| zi * b).sum()
            };
            rp.ln_m[c] = dot(&state.beta_scale);
            rp.ln_a[c] = dot(&state.beta_shape);
            rp.m[c] = rp.ln_m[c].exp();
            rp.a[c] = rp.ln_a[c].exp();
            if !(rp.m[c].is_finite() && rp.m[c] > 0.0 && rp.a[c].is_finite() && rp.a[c] > 0.0) {
                return Err(Error::Evaluation(format!(
                    "segment parameters overflow in interval {} (log scale {}, log shape {})",
                    c + 1,
                    rp.ln_m[c],
                    rp.ln_a[c]
                )));
            }
        }
        if let Some(arm) = &spec.arm_restriction {
            let row = spec.covariate_row(arm).expect("validated spec");
            rp.split = z[row] != 0.0;
        }
        if spec.is_cte() {
            let trt = spec.treatment_row().expect("validated spec");
            if z[trt] != 0.0 {
                let omega = state.omega.unwrap_or(f64::NAN);
                let hr0 = (z[trt] * state.beta_scale.get(trt, k - 1)).exp();
                rp.cte = Some(CteParams::new(hr0, omega, state.taus[k - 1]).map_err(|e| {
                    Error::Evaluation(format!("invalid waning parameters: {e}"))
                })?);
            }
        }
        for c in 1..=k {
            rp.lo_pow[c] = state.taus[c - 1].powf(rp.a[c]);
        }
        for c in 0..k {
            let hi = state.taus[c].powf(rp.a[c]);
            rp.cum[c + 1] = rp.cum[c] + rp.m[c] * (hi - rp.lo_pow[c]);
        }
        Ok(rp)
    }

    /// `(log h(t), H(t))` for `t > 0`; `ln_t = ln t`.
    pub(crate) fn eval(&self, t: f64, ln_t: f64, taus: &[f64]) -> Result<(f64, f64)> {
        if !self.split {
            let c = self.k;
            let h = self.m[c] * (self.a[c] * ln_t).exp();
            return Ok((self.ln_m[c] + self.ln_a[c] + (self.a[c] - 1.0) * ln_t, h));
        }
        let c = interval_index(t, taus) - 1;
        let log_h = self.ln_m[c] + self.ln_a[c] + (self.a[c] - 1.0) * ln_t;
        if c == self.k {
            if let Some(cte) = self.cte {
                let base = SegmentParams {
                    shape: self.a[c],
                    scale: self.m[c],
                };
                let inc = cte_cum_hazard_increment(t, base, cte)?.value;
                return Ok((
                    log_h + cte_hazard_ratio_unchecked(t, cte).ln(),
                    self.cum[c] + inc,
                ));
            }
        }
        let pow = if self.a[c] == 1.0 { t } else { (self.a[c] * ln_t).exp() };
        Ok((log_h, self.cum[c] + self.m[c] * (pow - self.lo_pow[c])))
    }

    pub(crate) fn cum_hazard(&self, t: f64, taus: &[f64]) -> Result<f64> {
        if t <= 0.0 {
            return Ok(0.0);
        }
        Ok(self.eval(t, t.ln(), taus)?.1)
    }

    pub(crate) fn hazard(&self, t: f64, taus: &[f64]) -> Result<f64> {
        if t <= 0.0 {
            return Err(Error::domain(format!("hazard requires t > 0, got {t}")));
        }
        Ok(self.eval(t, t.ln(), taus)?.0.exp())
    }
}

/// Cumulative hazard at `t` for design row `z` (leading intercept included).
pub fn cumulative_hazard_at(
    spec: &ModelSpec,
    state: &ParameterState,
    z: &[f64],
    t: f64,
) -> Result<f64> {
    RowParams::new(z, state, spec)?.cum_hazard(t, &state.taus)
}

/// Hazard at `t > 0` for design row `z`.
pub fn hazard_at(spec: &ModelSpec, state: &ParameterState, z: &[f64], t: f64) -> Result<f64> {
    RowParams::new(z, state, spec)?.hazard(t, &state.taus)
}

/// Dataset preprocessed for repeated likelihood evaluation under one spec.
#[derive(Debug, Clone)]
pub struct ChangePointModel {
    spec: ModelSpec,
    layout: ParamLayout,
    tau_max: f64,
    ids: Vec<i64>,
    time: Vec<f64>,
    ln_time: Vec<f64>,
    event: Vec<bool>,
    /// Index into `rows` for every subject.
    row_of: Vec<usize>,
    rows: Vec<Vec<f64>>,
}

impl ChangePointModel {
    pub fn new(spec: &ModelSpec, ds: &Dataset) -> Result<Self> {
        spec.validate()?;
        ds.validate()?;
        let design = ds.design_matrix(&spec.covariates)?;
        for name in spec.arm_restriction.iter().chain(spec.is_cte().then_some(&spec.treatment)) {
            let r = spec.covariate_row(name).expect("validated spec");
            if design.iter().any(|z| z[r] != 0.0 && z[r] != 1.0) {
                return Err(Error::validation(format!(
                    "covariate `{name}` must be coded 0/1 for this model"
                )));
            }
        }
        let tau_max = spec.tau_max.unwrap_or_else(|| ds.max_time());
        if spec.k > 0 && !(tau_max > 0.0) {
            return Err(Error::validation("tau_max must be positive"));
        }
        let mut index: HashMap<Vec<u64>, usize> = HashMap::new();
        let mut rows = Vec::new();
        let mut row_of = Vec::with_capacity(design.len());
        for z in design {
            let key: Vec<u64> = z.iter().map(|v| v.to_bits()).collect();
            let next = rows.len();
            let slot = *index.entry(key).or_insert(next);
            if slot == next {
                rows.push(z);
            }
            row_of.push(slot);
        }
        Ok(Self {
            spec: spec.clone(),
            layout: ParamLayout::new(spec),
            tau_max,
            ids: ds.records.iter().map(|r| r.id).collect(),
            time: ds.records.iter().map(|r| r.time).collect(),
            ln_time: ds.records.iter().map(|r| r.time.ln()).collect(),
            event: ds.records.iter().map(|r| r.status == 1).collect(),
            row_of,
            rows,
        })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn layout(&self) -> &ParamLayout {
        &self.layout
    }

    pub fn tau_max(&self) -> f64 {
        self.tau_max
    }

    pub fn n_obs(&self) -> usize {
        self.time.len()
    }

    pub fn n_events(&self) -> usize {
        self.event.iter().filter(|e| **e).count()
    }

    pub fn event_times(&self) -> Vec<f64> {
        self.time
            .iter()
            .zip(&self.event)
            .filter(|(_, e)| **e)
            .map(|(t, _)| *t)
            .collect()
    }

    pub fn log_likelihood(&self, state: &ParameterState) -> Result<LogLikBreakdown> {
        state.validate(&self.spec)?;
        let mut per = vec![0.0; self.n_obs()];
        let total = self.log_likelihood_into(state, Some(&mut per))?;
        Ok(LogLikBreakdown {
            total,
            per_observation: per,
        })
    }

    /// Total log-likelihood, optionally writing pointwise terms. The state is
    /// assumed to satisfy the spec.
    pub(crate) fn log_likelihood_into(
        &self,
        state: &ParameterState,
        mut per: Option<&mut [f64]>,
    ) -> Result<f64> {
        let params = self
            .rows
            .iter()
            .map(|z| RowParams::new(z, state, &self.spec))
            .collect::<Result<Vec<_>>>()?;
        let mut total = 0.0;
        for i in 0..self.time.len() {
            let rp = &params[self.row_of[i]];
            let (log_h, cum) = rp.eval(self.time[i], self.ln_time[i], &state.taus)?;
            let li = if self.event[i] { log_h - cum } else { -cum };
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

    /// Change-point plus coefficient log-prior (density in `β` and `log ω`).
    pub fn log_prior(&self, state: &ParameterState) -> f64 {
        let x = self.layout.from_state(state);
        self.log_prior_vector(&x)
    }

    pub(crate) fn log_prior_vector(&self, x: &[f64]) -> f64 {
        let taus: Vec<f64> = self
            .layout
            .kinds
            .iter()
            .zip(x)
            .filter(|(k, _)| matches!(k, ParamKind::ChangePoint(_)))
            .map(|(_, v)| *v)
            .collect();
        let cp = if self.spec.k == 0 {
            0.0
        } else {
            log_prior_changepoints(&taus, self.tau_max, self.spec.k)
        };
        if cp == f64::NEG_INFINITY {
            return cp;
        }
        cp + coefficient_prior(&self.layout, x, &self.spec.priors)
    }

    pub fn log_posterior(&self, state: &ParameterState) -> f64 {
        let prior = self.log_prior(state);
        if prior == f64::NEG_INFINITY || state.validate(&self.spec).is_err() {
            return f64::NEG_INFINITY;
        }
        match self.log_likelihood_into(state, None) {
            Ok(ll) => prior + ll,
            Err(_) => f64::NEG_INFINITY,
        }
    }

    /// Crude starting point: constant hazard at the event rate, change-points
    /// at evenly spaced event-time quantiles, `ω = 1`.
    pub(crate) fn initial_vector(&self) -> Vec<f64> {
        let exposure: f64 = self.time.iter().sum();
        let rate = (self.n_events().max(1) as f64 / exposure).min(0.5 * self.spec.priors.intercept_upper);
        let mut events = self.event_times();
        events.sort_by(f64::total_cmp);
        let k = self.spec.k;
        self.layout
            .kinds
            .iter()
            .map(|kind| match kind {
                ParamKind::Coefficient {
                    matrix: CoefMatrix::Scale,
                    intercept: true,
                    ..
                } => rate.ln(),
                ParamKind::Coefficient { .. } => 0.0,
                ParamKind::ChangePoint(j) => {
                    let q = (j + 1) as f64 / (k + 1) as f64;
                    let guess = if events.is_empty() {
                        q * self.tau_max
                    } else {
                        events[((events.len() - 1) as f64 * q) as usize]
                    };
                    guess.clamp(self.tau_max * q * 0.5, self.tau_max * (0.5 + 0.5 * q))
                }
                ParamKind::Omega => 1.0,
            })
            .collect()
    }
}

/// Log-likelihood of `state` under `spec` on `ds`.
pub fn log_likelihood(
    state: &ParameterState,
    spec: &ModelSpec,
    ds: &Dataset,
) -> Result<LogLikBreakdown> {
    ChangePointModel::new(spec, ds)?.log_likelihood(state)
}

/// Sum of the log-likelihood and both priors; `−∞` outside the support.
pub fn log_posterior(state: &ParameterState, spec: &ModelSpec, ds: &Dataset) -> Result<f64> {
    Ok(ChangePointModel::new(spec, ds)?.log_posterior(state))
}
