//! Declarative change-point model specifications.
//!
//! A [`ModelSpec`] fixes the number of change-points `k`, the segment family
//! and two constraint masks (scale and shape), each `p × (k+1)` with rows for
//! the design columns and columns for the intervals. Presets expand the
//! treatment-effect scenarios into masks.
//!
//! JSON layout (the loss-of-effect model with an age covariate):
//!
//! ```json
//! {
//!   "family": "weibull",
//!   "k": 1,
//!   "covariates": ["Intercept", "trt", "age_scale"],
//!   "scale_mask": [["shared:0", "shared:0"], ["free", "zero"], ["shared:2", "shared:2"]],
//!   "shape_mask": [["shared:0", "shared:0"], ["zero", "zero"], ["zero", "zero"]],
//!   "preset": "loss_of_effect"
//! }
//! ```

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::INTERCEPT;
use crate::error::{Error, Result};

pub const MAX_CHANGEPOINTS: usize = 2;
pub const DEFAULT_TREATMENT: &str = "trt";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Weibull,
    Exponential,
}

/// Constraint tag for one coefficient entry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Constraint {
    Free,
    Zero,
    /// Equal to every other entry carrying the same group id (within one matrix).
    Shared(u32),
    /// Treatment effect in the final interval replaced by the waning hazard ratio.
    CteLink,
}

impl fmt::Display for Constraint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Constraint::Free => write!(f, "free"),
            Constraint::Zero => write!(f, "zero"),
            Constraint::Shared(g) => write!(f, "shared:{g}"),
            Constraint::CteLink => write!(f, "cte"),
        }
    }
}

impl FromStr for Constraint {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "free" => Ok(Constraint::Free),
            "zero" => Ok(Constraint::Zero),
            "cte" => Ok(Constraint::CteLink),
            other => other
                .strip_prefix("shared:")
                .and_then(|g| g.parse().ok())
                .map(Constraint::Shared)
                .ok_or_else(|| Error::validation(format!("unknown constraint tag `{other}`"))),
        }
    }
}

impl TryFrom<String> for Constraint {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Constraint> for String {
    fn from(c: Constraint) -> Self {
        c.to_string()
    }
}

/// Rows are design columns, columns are intervals.
pub type Mask = Vec<Vec<Constraint>>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioPreset {
    /// Common baseline across intervals; treatment effect changes.
    StepHrA,
    /// Scale intercept varies by interval.
    StepHrB,
    /// Scale and shape intercepts vary by interval.
    StepHrC,
    /// As C, with treatment on the shape after the first change-point.
    StepHrD,
    TreatmentDelay,
    LossOfEffect,
    ConvergingHazards,
    /// Change-point in the treated arm only, common hazard afterwards.
    OneArmCommonAfter,
}

impl ScenarioPreset {
    pub const ALL: [ScenarioPreset; 8] = [
        ScenarioPreset::StepHrA,
        ScenarioPreset::StepHrB,
        ScenarioPreset::StepHrC,
        ScenarioPreset::StepHrD,
        ScenarioPreset::TreatmentDelay,
        ScenarioPreset::LossOfEffect,
        ScenarioPreset::ConvergingHazards,
        ScenarioPreset::OneArmCommonAfter,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            ScenarioPreset::StepHrA => "step_hr_a",
            ScenarioPreset::StepHrB => "step_hr_b",
            ScenarioPreset::StepHrC => "step_hr_c",
            ScenarioPreset::StepHrD => "step_hr_d",
            ScenarioPreset::TreatmentDelay => "treatment_delay",
            ScenarioPreset::LossOfEffect => "loss_of_effect",
            ScenarioPreset::ConvergingHazards => "converging_hazards",
            ScenarioPreset::OneArmCommonAfter => "one_arm_common_after",
        }
    }
}

impl FromStr for ScenarioPreset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.trim().to_ascii_lowercase().replace('-', "_");
        let alias = match norm.as_str() {
            "td" => "treatment_delay",
            "lte" => "loss_of_effect",
            "cte" => "converging_hazards",
            other => other,
        };
        ScenarioPreset::ALL
            .iter()
            .find(|p| p.name() == alias)
            .copied()
            .ok_or_else(|| Error::validation(format!("unknown preset `{s}`")))
    }
}

/// Weak-prior settings; recorded with every fit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PriorConfig {
    /// Upper bound of the uniform prior on intercept-implied scale and shape.
    pub intercept_upper: f64,
    /// SD of the normal prior on non-intercept coefficients and `log ω`.
    pub coef_sd: f64,
}

impl Default for PriorConfig {
    fn default() -> Self {
        Self {
            intercept_upper: 10.0,
            coef_sd: 10.0,
        }
    }
}

fn default_treatment() -> String {
    DEFAULT_TREATMENT.to_string()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub family: Family,
    pub k: usize,
    /// Design columns; the first must be `Intercept`.
    pub covariates: Vec<String>,
    pub scale_mask: Mask,
    pub shape_mask: Mask,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<ScenarioPreset>,
    /// Covariate whose `1` arm alone is split by the change-points.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub arm_restriction: Option<String>,
    #[serde(default = "default_treatment")]
    pub treatment: String,
    /// Upper support of the change-point prior; the maximum observed time when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau_max: Option<f64>,
    #[serde(default)]
    pub priors: PriorConfig,
}

impl ModelSpec {
    pub fn n_intervals(&self) -> usize {
        self.k + 1
    }

    pub fn p(&self) -> usize {
        self.covariates.len()
    }

    pub fn treatment_row(&self) -> Option<usize> {
        self.covariates.iter().position(|c| c == &self.treatment)
    }

    pub fn covariate_row(&self, name: &str) -> Option<usize> {
        self.covariates.iter().position(|c| c == name)
    }

    pub fn is_cte(&self) -> bool {
        self.scale_mask.iter().flatten().any(|c| *c == Constraint::CteLink)
            || self.shape_mask.iter().flatten().any(|c| *c == Constraint::CteLink)
    }

    /// True when no non-intercept covariate enters the shape.
    pub fn is_proportional_hazards(&self) -> bool {
        self.shape_mask
            .iter()
            .skip(1)
            .flatten()
            .all(|c| *c == Constraint::Zero)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let spec: ModelSpec = serde_json::from_str(text)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.k > MAX_CHANGEPOINTS {
            return Err(Error::validation(format!(
                "k = {} exceeds the supported maximum of {MAX_CHANGEPOINTS} change-points",
                self.k
            )));
        }
        if self.covariates.first().map(String::as_str) != Some(INTERCEPT) {
            return Err(Error::validation("first covariate must be `Intercept`"));
        }
        let mut seen = BTreeSet::new();
        for c in &self.covariates {
            if !seen.insert(c) {
                return Err(Error::validation(format!("duplicate covariate `{c}`")));
            }
        }
        let (p, cols) = (self.p(), self.n_intervals());
        for (name, mask) in [("scale_mask", &self.scale_mask), ("shape_mask", &self.shape_mask)] {
            if mask.len() != p || mask.iter().any(|r| r.len() != cols) {
                return Err(Error::validation(format!(
                    "{name} must be {p} x {cols} (covariates x intervals)"
                )));
            }
        }
        if self.family == Family::Exponential
            && self.shape_mask.iter().flatten().any(|c| *c != Constraint::Zero)
        {
            return Err(Error::validation(
                "exponential family requires an all-zero shape mask",
            ));
        }
        if self.shape_mask.iter().flatten().any(|c| *c == Constraint::CteLink) {
            return Err(Error::validation("the waning link may only appear in the scale mask"));
        }
        let cte_cells: Vec<(usize, usize)> = cells(&self.scale_mask)
            .filter(|(_, _, c)| *c == Constraint::CteLink)
            .map(|(r, j, _)| (r, j))
            .collect();
        if cte_cells.len() > 1 {
            return Err(Error::validation("at most one waning link is permitted"));
        }
        if let Some(&(row, col)) = cte_cells.first() {
            let trt = self.treatment_row().ok_or_else(|| {
                Error::validation(format!(
                    "converging hazards requires treatment covariate `{}`",
                    self.treatment
                ))
            })?;
            if self.k < 1 {
                return Err(Error::validation("converging hazards requires k >= 1"));
            }
            if row != trt || col != self.k {
                return Err(Error::validation(
                    "the waning link must sit on the treatment row in the final interval",
                ));
            }
            if !matches!(
                self.scale_mask[trt][self.k - 1],
                Constraint::Free | Constraint::Shared(_)
            ) {
                return Err(Error::validation(
                    "converging hazards requires an estimated treatment effect before waning",
                ));
            }
            if self.shape_mask[trt][self.k] != Constraint::Zero {
                return Err(Error::validation(
                    "converging hazards requires a common shape across arms after waning onset",
                ));
            }
            if self.arm_restriction.is_some() {
                return Err(Error::validation(
                    "arm restriction cannot be combined with converging hazards",
                ));
            }
        }
        if let Some(arm) = &self.arm_restriction {
            let row = self.covariate_row(arm).ok_or_else(|| {
                Error::validation(format!("arm restriction covariate `{arm}` is not in the model"))
            })?;
            if self.k < 1 {
                return Err(Error::validation("arm restriction requires k >= 1"));
            }
            if self.scale_mask[row][self.k] != Constraint::Zero
                || self.shape_mask[row][self.k] != Constraint::Zero
            {
                return Err(Error::validation(format!(
                    "arm restriction requires `{arm}` to be zero in the final interval of both masks"
                )));
            }
        }
        if let Some(tm) = self.tau_max {
            if !(tm > 0.0 && tm.is_finite()) {
                return Err(Error::validation(format!("tau_max must be positive, got {tm}")));
            }
        }
        if !(self.priors.intercept_upper > 0.0 && self.priors.coef_sd > 0.0) {
            return Err(Error::validation("prior settings must be positive"));
        }
        Ok(())
    }
}

fn cells(mask: &Mask) -> impl Iterator<Item = (usize, usize, Constraint)> + '_ {
    mask.iter()
        .enumerate()
        .flat_map(|(r, row)| row.iter().enumerate().map(move |(j, c)| (r, j, *c)))
}

/// Number of sampled quantities: free entries, one per shared group,
/// the change-points and `ω` for converging hazards.
pub fn count_free_parameters(spec: &ModelSpec) -> usize {
    let per_mask = |mask: &Mask| {
        let free = cells(mask).filter(|(_, _, c)| *c == Constraint::Free).count();
        let groups: BTreeSet<u32> = cells(mask)
            .filter_map(|(_, _, c)| match c {
                Constraint::Shared(g) => Some(g),
                _ => None,
            })
            .collect();
        free + groups.len()
    };
    per_mask(&spec.scale_mask) + per_mask(&spec.shape_mask) + spec.k + usize::from(spec.is_cte())
}

/// Expands a scenario preset into a validated specification.
///
/// `covariates` may omit `Intercept`; it is prepended. Covariates other than
/// the treatment enter the scale with a coefficient shared across intervals.
pub fn expand_preset(
    preset: ScenarioPreset,
    family: Family,
    covariates: &[&str],
    k: usize,
) -> Result<ModelSpec> {
    if k > MAX_CHANGEPOINTS {
        return Err(Error::validation(format!(
            "k = {k} exceeds the supported maximum of {MAX_CHANGEPOINTS}"
        )));
    }
    let mut names = vec![INTERCEPT.to_string()];
    names.extend(covariates.iter().filter(|c| **c != INTERCEPT).map(|c| c.to_string()));
    let trt = names
        .iter()
        .position(|c| c == DEFAULT_TREATMENT)
        .ok_or_else(|| Error::validation("preset requires a `trt` covariate"))?;
    let cols = k + 1;
    let p = names.len();
    let shared = |row: usize| vec![Constraint::Shared(row as u32); cols];
    let zero = || vec![Constraint::Zero; cols];
    let weibull = family == Family::Weibull;

    let mut scale: Mask = (0..p).map(shared).collect();
    let mut shape: Mask = (0..p).map(|_| zero()).collect();
    if weibull {
        shape[0] = shared(0);
    }
    let mut arm_restriction = None;

    if k == 0 {
        // Single interval: a standard PH parametric model.
        for row in scale.iter_mut() {
            row[0] = Constraint::Free;
        }
        if weibull {
            shape[0][0] = Constraint::Free;
        }
    } else {
        let free_all = vec![Constraint::Free; cols];
        match preset {
            ScenarioPreset::StepHrA => scale[trt] = free_all,
            ScenarioPreset::StepHrB => {
                scale[0] = free_all.clone();
                scale[trt] = free_all;
            }
            ScenarioPreset::StepHrC => {
                scale[0] = free_all.clone();
                scale[trt] = free_all.clone();
                if weibull {
                    shape[0] = free_all;
                }
            }
            ScenarioPreset::StepHrD => {
                scale[0] = free_all.clone();
                scale[trt] = free_all.clone();
                if weibull {
                    shape[0] = free_all;
                    shape[trt][1..].fill(Constraint::Free);
                }
            }
            ScenarioPreset::TreatmentDelay => {
                scale[trt] = free_all;
                scale[trt][0] = Constraint::Zero;
            }
            ScenarioPreset::LossOfEffect => {
                scale[trt] = free_all;
                scale[trt][k] = Constraint::Zero;
            }
            ScenarioPreset::ConvergingHazards => {
                scale[trt] = free_all;
                scale[trt][k] = Constraint::CteLink;
            }
            ScenarioPreset::OneArmCommonAfter => {
                scale[trt] = free_all.clone();
                scale[trt][k] = Constraint::Zero;
                if weibull {
                    shape[trt] = free_all;
                    shape[trt][k] = Constraint::Zero;
                }
                arm_restriction = Some(DEFAULT_TREATMENT.to_string());
            }
        }
    }
    let spec = ModelSpec {
        family,
        k,
        covariates: names,
        scale_mask: scale,
        shape_mask: shape,
        preset: Some(preset),
        arm_restriction,
        treatment: DEFAULT_TREATMENT.to_string(),
        tau_max: None,
        priors: PriorConfig::default(),
    };
    spec.validate()?;
    Ok(spec)
}
