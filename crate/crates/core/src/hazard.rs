//! Weibull segment hazards and the converging-hazard-ratio machinery.
//!
//! Segments use `h(t) = a·m·t^{a-1}` and `H(t) = m·t^a` on absolute time,
//! where `m` is the scale and `a` the shape. The exponential segment is
//! `a = 1`.
//!
//! After the waning onset `τ_w` the treated hazard is `HR(t)·h_base(t)` with
//! `HR(t) = 1 − (1 − HR₀)·exp(−ω(t − τ_w))`. Its integral from `τ_w` to `t` is
//!
//! ```text
//! m(t^a − τ_w^a) − (1 − HR₀)·a·m·ω^{−a}·e^{ωτ_w}·[Γ(a, ωτ_w) − Γ(a, ωt)]
//! ```
//!
//! which is the difference of the antiderivative
//! `a·m·t^a·(1/a − Γ(a, ωt)(HR₀ − 1)e^{ωτ_w}/(ωt)^a)` at both endpoints.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::special::{integrate_adaptive, upper_incomplete_gamma_scaled};

/// Weibull segment parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SegmentParams {
    pub shape: f64,
    pub scale: f64,
}

impl SegmentParams {
    pub fn new(shape: f64, scale: f64) -> Result<Self> {
        if !(shape > 0.0 && shape.is_finite() && scale > 0.0 && scale.is_finite()) {
            return Err(Error::domain(format!(
                "segment parameters must be positive and finite (shape={shape}, scale={scale})"
            )));
        }
        Ok(Self { shape, scale })
    }

    pub fn exponential(rate: f64) -> Result<Self> {
        Self::new(1.0, rate)
    }
}

/// Waning parameters for the converging-hazards scenario.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CteParams {
    pub hr_initial: f64,
    pub omega: f64,
    pub tau_wane: f64,
}

impl CteParams {
    pub fn new(hr_initial: f64, omega: f64, tau_wane: f64) -> Result<Self> {
        if !(hr_initial > 0.0 && hr_initial.is_finite()) {
            return Err(Error::domain(format!("HR_initial must be positive, got {hr_initial}")));
        }
        if !(omega > 0.0 && omega.is_finite()) {
            return Err(Error::domain(format!("omega must be positive, got {omega}")));
        }
        if !(tau_wane > 0.0 && tau_wane.is_finite()) {
            return Err(Error::domain(format!("tau_wane must be positive, got {tau_wane}")));
        }
        Ok(Self {
            hr_initial,
            omega,
            tau_wane,
        })
    }
}

/// `exp(row · coef)`, failing on overflow.
pub(crate) fn exp_linear(row: &[f64], coef: impl Iterator<Item = f64>) -> Result<f64> {
    let eta: f64 = row.iter().zip(coef).map(|(z, b)| z * b).sum();
    let v = eta.exp();
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(Error::Evaluation(format!(
            "linear predictor {eta} overflows the log link"
        )))
    }
}

/// Segment parameters for one design row in one interval.
///
/// `beta_scale` and `beta_shape` are `p × (k+1)` row-major matrices
/// (rows are covariates, columns are intervals); `interval` is 1-based.
pub fn link_segment_params(
    design_row: &[f64],
    beta_scale: &crate::likelihood::CoefficientMatrix,
    beta_shape: &crate::likelihood::CoefficientMatrix,
    interval: usize,
) -> Result<SegmentParams> {
    if design_row.len() != beta_scale.rows() || design_row.len() != beta_shape.rows() {
        return Err(Error::validation(format!(
            "design row has {} entries but coefficient matrices have {} rows",
            design_row.len(),
            beta_scale.rows()
        )));
    }
    if interval == 0 || interval > beta_scale.cols() {
        return Err(Error::validation(format!(
            "interval {interval} outside 1..={}",
            beta_scale.cols()
        )));
    }
    let col = interval - 1;
    let scale = exp_linear(design_row, beta_scale.column(col))?;
    let shape = exp_linear(design_row, beta_shape.column(col))?;
    Ok(SegmentParams { shape, scale })
}

pub fn weibull_hazard(t: f64, p: SegmentParams) -> Result<f64> {
    if !(t > 0.0) {
        return Err(Error::domain(format!("hazard requires t > 0, got {t}")));
    }
    Ok(weibull_hazard_unchecked(t, p))
}

#[inline]
pub(crate) fn weibull_hazard_unchecked(t: f64, p: SegmentParams) -> f64 {
    if p.shape == 1.0 {
        p.scale
    } else {
        p.shape * p.scale * t.powf(p.shape - 1.0)
    }
}

pub fn weibull_cum_hazard(t: f64, p: SegmentParams) -> Result<f64> {
    if !(t >= 0.0) {
        return Err(Error::domain(format!("cumulative hazard requires t >= 0, got {t}")));
    }
    Ok(weibull_cum_hazard_unchecked(t, p))
}

#[inline]
pub(crate) fn weibull_cum_hazard_unchecked(t: f64, p: SegmentParams) -> f64 {
    if t == 0.0 {
        0.0
    } else if p.shape == 1.0 {
        p.scale * t
    } else {
        p.scale * t.powf(p.shape)
    }
}

/// `H(t1) − H(t0)` on absolute time.
pub fn segment_cum_hazard_increment(t0: f64, t1: f64, p: SegmentParams) -> Result<f64> {
    if !(t0 >= 0.0) || !(t1 >= t0) {
        return Err(Error::domain(format!(
            "increment requires 0 <= t0 <= t1, got ({t0}, {t1}]"
        )));
    }
    Ok(segment_increment_unchecked(t0, t1, p))
}

#[inline]
pub(crate) fn segment_increment_unchecked(t0: f64, t1: f64, p: SegmentParams) -> f64 {
    if t1 == t0 {
        0.0
    } else if p.shape == 1.0 {
        p.scale * (t1 - t0)
    } else {
        p.scale * (t1.powf(p.shape) - t0.powf(p.shape))
    }
}

pub fn cte_hazard_ratio(t: f64, c: CteParams) -> Result<f64> {
    if !(t >= c.tau_wane) {
        return Err(Error::domain(format!(
            "HR(t) is defined for t >= tau_wane = {}, got {t}",
            c.tau_wane
        )));
    }
    Ok(cte_hazard_ratio_unchecked(t, c))
}

#[inline]
pub(crate) fn cte_hazard_ratio_unchecked(t: f64, c: CteParams) -> f64 {
    1.0 - (1.0 - c.hr_initial) * (-c.omega * (t - c.tau_wane)).exp()
}

/// Value of a treated-arm cumulative hazard increment after waning onset.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CteIncrement {
    pub value: f64,
    /// Set when the closed form was numerically unreliable and quadrature was used.
    pub used_quadrature: bool,
}

// Closed form is abandoned when the two terms cancel beyond this ratio.
const CANCELLATION_LIMIT: f64 = 1e6;
const QUADRATURE_TOL: f64 = 1e-12;

/// Treated-arm cumulative hazard accrued on `(τ_w, t]`.
pub fn cte_cum_hazard_increment(t: f64, base: SegmentParams, c: CteParams) -> Result<CteIncrement> {
    if !(t >= c.tau_wane) {
        return Err(Error::domain(format!(
            "CTE increment requires t >= tau_wane = {}, got {t}",
            c.tau_wane
        )));
    }
    if t == c.tau_wane {
        return Ok(CteIncrement {
            value: 0.0,
            used_quadrature: false,
        });
    }
    let (a, m, w, tw) = (base.shape, base.scale, c.omega, c.tau_wane);
    let base_inc = segment_increment_unchecked(tw, t, base);
    let waned = 1.0 - c.hr_initial;
    if waned == 0.0 {
        return Ok(CteIncrement {
            value: base_inc,
            used_quadrature: false,
        });
    }
    let dt = t - tw;
    // `magnitude` bounds the size of the terms that cancel in the closed form.
    let (reduction, magnitude) = if a == 1.0 {
        let r = m * (-(-w * dt).exp_m1()) / w;
        (r, base_inc + waned.abs() * r)
    } else if w * tw >= 1e-8 {
        // e^{ωτ_w}[Γ(a, ωτ_w) − Γ(a, ωt)] = S(ωτ_w) − e^{−ω(t−τ_w)} S(ωt), S(x) = e^x Γ(a, x)
        let s0 = upper_incomplete_gamma_scaled(a, w * tw)?;
        let s1 = (-w * dt).exp() * upper_incomplete_gamma_scaled(a, w * t)?;
        let factor = a * m * w.powf(-a);
        (
            factor * (s0 - s1),
            m * t.powf(a) + waned.abs() * factor * (s0 + s1),
        )
    } else {
        (f64::NAN, f64::NAN)
    };
    let value = base_inc - waned * reduction;
    if value.is_finite() && value >= 0.0 && magnitude <= CANCELLATION_LIMIT * value {
        return Ok(CteIncrement {
            value,
            used_quadrature: false,
        });
    }
    let q = integrate_adaptive(
        |s| cte_hazard_ratio_unchecked(s, c) * weibull_hazard_unchecked(s, base),
        tw,
        t,
        QUADRATURE_TOL,
    );
    let q = match q {
        Ok(q) => q.value,
        // Integrable singularity at s = 0 when a < 1 and τ_w is tiny.
        Err(_) => integrate_adaptive(
            |u| {
                // s = u^{1/a}; h(s) ds = m·du
                let s = u.powf(1.0 / a);
                cte_hazard_ratio_unchecked(s, c) * m
            },
            tw.powf(a),
            t.powf(a),
            QUADRATURE_TOL,
        )?
        .value,
    };
    Ok(CteIncrement {
        value: q.max(0.0),
        used_quadrature: true,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::likelihood::CoefficientMatrix;

    fn rel(a: f64, b: f64) -> f64 {
        ((a - b) / b).abs()
    }

    #[test]
    fn link_reproduces_example_rows() {
        let scale = CoefficientMatrix::from_rows(&[[-0.5, -0.5], [-0.2, 0.0], [0.1, 0.1]]);
        let shape = CoefficientMatrix::from_rows(&[[-0.4, -0.4], [0.0, 0.0], [0.0, 0.0]]);
        let p = link_segment_params(&[1.0, 1.0, 1.14], &scale, &shape, 1).unwrap();
        assert!((p.scale - (-0.586f64).exp()).abs() < 1e-12);
        assert!((p.scale - 0.56).abs() < 0.005);
        assert!((p.shape - 0.67).abs() < 0.005);
        let p = link_segment_params(&[1.0, 0.0, -0.13], &scale, &shape, 2).unwrap();
        assert!((p.scale - 0.60).abs() < 0.005);
        let p = link_segment_params(&[1.0, 1.0, -1.52], &scale, &shape, 2).unwrap();
        assert!((p.scale - 0.52).abs() < 0.005);
        let zero = CoefficientMatrix::zeros(3, 2);
        let p = link_segment_params(&[1.0, 1.0, 0.3], &zero, &zero, 2).unwrap();
        assert_eq!((p.scale, p.shape), (1.0, 1.0));
        assert!(link_segment_params(&[1.0, 1.0, 0.3], &zero, &zero, 3).is_err());
        let huge = CoefficientMatrix::from_rows(&[[1000.0]]);
        assert!(matches!(
            link_segment_params(&[1.0], &huge, &CoefficientMatrix::zeros(1, 1), 1),
            Err(Error::Evaluation(_))
        ));
    }

    #[test]
    fn weibull_values() {
        let e = SegmentParams::new(1.0, 0.3).unwrap();
        assert_eq!(weibull_hazard(7.0, e).unwrap(), 0.3);
        let p = SegmentParams::new(1.3, 0.3).unwrap();
        assert!((weibull_hazard(1.0, p).unwrap() - 0.39).abs() < 1e-15);
        let p = SegmentParams::new(0.75, 0.3).unwrap();
        assert!(rel(weibull_hazard(2.0, p).unwrap(), 0.189_201_693_432_085_73) < 1e-14);
        assert!(weibull_hazard(0.0, p).is_err());
        assert_eq!(weibull_cum_hazard(0.0, p).unwrap(), 0.0);
        assert!((weibull_cum_hazard(5.0, e).unwrap() - 1.5).abs() < 1e-15);
        let p = SegmentParams::new(1.3, 0.3).unwrap();
        assert!(rel(weibull_cum_hazard(2.0, p).unwrap(), 0.738_686_648_006_949_7) < 1e-14);
        assert!(SegmentParams::new(0.0, 1.0).is_err());
    }

    #[test]
    fn cum_hazard_matches_quadrature_of_hazard() {
        let p = SegmentParams::new(1.3, 0.3).unwrap();
        let q = integrate_adaptive(|t| weibull_hazard_unchecked(t, p), 0.0, 2.0, 1e-13).unwrap();
        assert!(rel(weibull_cum_hazard(2.0, p).unwrap(), q.value) < 1e-10);
        let p = SegmentParams::new(0.75, 0.3).unwrap();
        let q = integrate_adaptive(|t| weibull_hazard_unchecked(t, p), 1.0, 3.0, 1e-13).unwrap();
        let inc = segment_cum_hazard_increment(1.0, 3.0, p).unwrap();
        assert!(rel(inc, q.value) < 1e-10);
        assert!(rel(inc, 0.383_852_117_086_433_24) < 1e-13);
    }

    #[test]
    fn increments_telescope() {
        let p = SegmentParams::new(0.75, 0.3).unwrap();
        assert_eq!(segment_cum_hazard_increment(1.0, 1.0, p).unwrap(), 0.0);
        let sum = segment_cum_hazard_increment(0.0, 1.0, p).unwrap()
            + segment_cum_hazard_increment(1.0, 2.0, p).unwrap();
        assert!((sum - weibull_cum_hazard(2.0, p).unwrap()).abs() < 1e-15);
        assert!(segment_cum_hazard_increment(2.0, 1.0, p).is_err());
    }

    #[test]
    fn derivative_of_cum_hazard_is_hazard() {
        for &(a, m) in &[(1.0, 0.3), (1.3, 0.3), (0.75, 0.8), (2.2, 0.05)] {
            let p = SegmentParams::new(a, m).unwrap();
            for &t in &[0.5, 1.0, 2.0, 5.0] {
                let h = 1e-5 * t;
                let fd = (weibull_cum_hazard_unchecked(t + h, p)
                    - weibull_cum_hazard_unchecked(t - h, p))
                    / (2.0 * h);
                assert!(rel(fd, weibull_hazard_unchecked(t, p)) < 1e-6);
            }
        }
        let base = SegmentParams::new(1.3, 0.3).unwrap();
        let c = CteParams::new(0.4, 0.7, 0.25).unwrap();
        for &t in &[0.5, 1.0, 2.0, 5.0] {
            let h = 1e-5 * t;
            let up = cte_cum_hazard_increment(t + h, base, c).unwrap().value;
            let dn = cte_cum_hazard_increment(t - h, base, c).unwrap().value;
            let hz = cte_hazard_ratio_unchecked(t, c) * weibull_hazard_unchecked(t, base);
            assert!(rel((up - dn) / (2.0 * h), hz) < 1e-6, "t={t}");
        }
    }

    #[test]
    fn hazard_ratio_values() {
        let c = CteParams::new(0.5, 1.0, 1.0).unwrap();
        assert_eq!(cte_hazard_ratio(1.0, c).unwrap(), 0.5);
        assert!((cte_hazard_ratio(2.0, c).unwrap() - (1.0 - 0.5 * (-1f64).exp())).abs() < 1e-15);
        assert!((cte_hazard_ratio(2.0, c).unwrap() - 0.816_060_279_414_278_8).abs() < 1e-12);
        assert!(cte_hazard_ratio(0.5, c).is_err());
        let one = CteParams::new(1.0, 2.0, 1.0).unwrap();
        assert_eq!(cte_hazard_ratio(9.0, one).unwrap(), 1.0);
        for &t in &[1.01, 2.0, 5.0, 30.0] {
            let hr = cte_hazard_ratio(t, c).unwrap();
            assert!(hr > 0.5 && hr < 1.0);
        }
        let above = CteParams::new(1.6, 0.5, 1.0).unwrap();
        for &t in &[1.01, 2.0, 5.0, 30.0] {
            let hr = cte_hazard_ratio(t, above).unwrap();
            assert!(hr > 1.0 && hr < 1.6);
        }
        assert!(CteParams::new(0.5, 0.0, 1.0).is_err());
    }

    #[test]
    fn cte_increment_special_cases() {
        let base = SegmentParams::new(1.3, 0.3).unwrap();
        let same = CteParams::new(1.0, 1.0, 1.0).unwrap();
        let v = cte_cum_hazard_increment(3.0, base, same).unwrap();
        assert!((v.value - segment_cum_hazard_increment(1.0, 3.0, base).unwrap()).abs() < 1e-14);

        let expo = SegmentParams::new(1.0, 1.0).unwrap();
        let c = CteParams { hr_initial: 0.5, omega: 1.0, tau_wane: 0.0 };
        let v = cte_cum_hazard_increment(1.0, expo, c).unwrap();
        assert!((v.value - 0.683_939_720_585_721_2).abs() < 1e-14);
        assert!(!v.used_quadrature);
        let q = integrate_adaptive(|s| cte_hazard_ratio_unchecked(s, c), 0.0, 1.0, 1e-14).unwrap();
        assert!(rel(v.value, q.value) < 1e-12);
    }

    #[test]
    fn cte_increment_matches_quadrature() {
        let base = SegmentParams::new(1.3, 0.3).unwrap();
        let c = CteParams::new(0.5, 1.0, 1.0).unwrap();
        let v = cte_cum_hazard_increment(3.0, base, c).unwrap();
        assert!(!v.used_quadrature);
        // 40-digit quadrature reference.
        assert!(rel(v.value, 0.756_015_435_777_952_839_5) < 1e-8);
        let q = integrate_adaptive(
            |s| cte_hazard_ratio_unchecked(s, c) * weibull_hazard_unchecked(s, base),
            1.0,
            3.0,
            1e-13,
        )
        .unwrap();
        assert!(rel(v.value, q.value) < 1e-8);
    }

    #[test]
    fn cte_increment_is_bounded_and_monotone() {
        let base = SegmentParams::new(0.8, 0.4).unwrap();
        let c = CteParams::new(0.3, 0.6, 1.5).unwrap();
        let mut prev = 0.0;
        for i in 1..200 {
            let t = 1.5 + 0.05 * i as f64;
            let v = cte_cum_hazard_increment(t, base, c).unwrap().value;
            let full = segment_cum_hazard_increment(1.5, t, base).unwrap();
            assert!(v >= prev);
            assert!(v <= full * (1.0 + 1e-12) && v >= c.hr_initial * full * (1.0 - 1e-12));
            prev = v;
        }
    }

    #[test]
    fn cte_tiny_intervals_fall_back() {
        let base = SegmentParams::new(1.7, 0.3).unwrap();
        let c = CteParams::new(0.5, 2.0, 1.0).unwrap();
        let t = 1.0 + 1e-9;
        let v = cte_cum_hazard_increment(t, base, c).unwrap();
        let approx = 0.5 * weibull_hazard_unchecked(1.0, base) * 1e-9;
        assert!(rel(v.value, approx) < 1e-6);
        // Small ω·τ_w disables the gamma route.
        let c = CteParams::new(0.5, 1e-9, 1e-2).unwrap();
        let v = cte_cum_hazard_increment(2.0, base, c).unwrap();
        assert!(v.used_quadrature);
        let full = segment_cum_hazard_increment(1e-2, 2.0, base).unwrap();
        assert!(rel(v.value, 0.5 * full) < 1e-6);
    }
}
