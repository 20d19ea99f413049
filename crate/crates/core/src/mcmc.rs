//! Adaptive random-walk Metropolis-within-Gibbs, convergence diagnostics and
//! WAIC.
//!
//! Every scalar parameter is its own block, updated on a transformed scale:
//! identity for coefficients, log for positive rates, and logit onto the
//! interval between neighbouring change-points. Step sizes follow a
//! Robbins–Monro recursion toward the target acceptance rate during the
//! adaptation window and are frozen afterwards.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::likelihood::{ChangePointModel, ParamKind};
use crate::scenario::{ModelSpec, PriorConfig};

/// Where one end of an interval-transformed parameter sits.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Bound {
    Fixed(f64),
    /// The current value of another parameter.
    Param(usize),
}

/// Sampling scale of one parameter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Transform {
    Identity,
    Log,
    Interval { lower: Bound, upper: Bound },
}

impl Transform {
    fn bounds(&self, x: &[f64]) -> (f64, f64) {
        let get = |b: &Bound| match b {
            Bound::Fixed(v) => *v,
            Bound::Param(i) => x[*i],
        };
        match self {
            Transform::Interval { lower, upper } => (get(lower), get(upper)),
            _ => (f64::NEG_INFINITY, f64::INFINITY),
        }
    }

    fn forward(&self, v: f64, lo: f64, hi: f64) -> f64 {
        match self {
            Transform::Identity => v,
            Transform::Log => v.ln(),
            Transform::Interval { .. } => {
                let u = (v - lo) / (hi - lo);
                (u / (1.0 - u)).ln()
            }
        }
    }

    fn inverse(&self, y: f64, lo: f64, hi: f64) -> f64 {
        match self {
            Transform::Identity => y,
            Transform::Log => y.exp(),
            Transform::Interval { .. } => lo + (hi - lo) / (1.0 + (-y).exp()),
        }
    }

    /// `log |dx/dy|` at natural value `v`.
    fn log_jacobian(&self, v: f64, lo: f64, hi: f64) -> f64 {
        match self {
            Transform::Identity => 0.0,
            Transform::Log => v.ln(),
            Transform::Interval { .. } => (v - lo).ln() + (hi - v).ln() - (hi - lo).ln(),
        }
    }
}

/// A posterior the sampler can explore.
pub trait Target: Sync {
    fn names(&self) -> Vec<String>;
    fn transforms(&self) -> Vec<Transform>;
    fn n_obs(&self) -> usize;
    fn n_events(&self) -> usize;
    /// Deterministic starting point with finite posterior density.
    fn initial(&self) -> Vec<f64>;
    /// Log prior density in natural coordinates; `−∞` outside the support.
    fn log_prior(&self, x: &[f64]) -> f64;
    /// Total log-likelihood, writing pointwise terms when `per_obs` is given.
    fn log_likelihood(&self, x: &[f64], per_obs: Option<&mut [f64]>) -> Result<f64>;
}

/// Drops the likelihood of the wrapped target; used to check prior recovery.
pub struct PriorOnly<'a, T: Target>(pub &'a T);

impl<T: Target> Target for PriorOnly<'_, T> {
    fn names(&self) -> Vec<String> {
        self.0.names()
    }
    fn transforms(&self) -> Vec<Transform> {
        self.0.transforms()
    }
    fn n_obs(&self) -> usize {
        self.0.n_obs()
    }
    fn n_events(&self) -> usize {
        self.0.n_events()
    }
    fn initial(&self) -> Vec<f64> {
        self.0.initial()
    }
    fn log_prior(&self, x: &[f64]) -> f64 {
        self.0.log_prior(x)
    }
    fn log_likelihood(&self, _x: &[f64], per_obs: Option<&mut [f64]>) -> Result<f64> {
        if let Some(p) = per_obs {
            p.fill(0.0);
        }
        Ok(0.0)
    }
}

impl Target for ChangePointModel {
    fn names(&self) -> Vec<String> {
        self.layout().names.clone()
    }

    fn transforms(&self) -> Vec<Transform> {
        let layout = self.layout();
        let k = self.spec().k;
        layout
            .kinds
            .iter()
            .map(|kind| match kind {
                ParamKind::Coefficient { .. } => Transform::Identity,
                ParamKind::Omega => Transform::Log,
                ParamKind::ChangePoint(j) => Transform::Interval {
                    lower: if *j == 0 {
                        Bound::Fixed(0.0)
                    } else {
                        Bound::Param(layout.change_point_index(j - 1).expect("layout"))
                    },
                    upper: if j + 1 == k {
                        Bound::Fixed(self.tau_max())
                    } else {
                        Bound::Param(layout.change_point_index(j + 1).expect("layout"))
                    },
                },
            })
            .collect()
    }

    fn n_obs(&self) -> usize {
        ChangePointModel::n_obs(self)
    }

    fn n_events(&self) -> usize {
        ChangePointModel::n_events(self)
    }

    fn initial(&self) -> Vec<f64> {
        self.initial_vector()
    }

    fn log_prior(&self, x: &[f64]) -> f64 {
        // The stored prior is on log ω; convert to a density in ω.
        let omega_jac: f64 = self
            .layout()
            .kinds
            .iter()
            .zip(x)
            .filter(|(k, _)| **k == ParamKind::Omega)
            .map(|(_, w)| w.ln())
            .sum();
        self.log_prior_vector(x) - omega_jac
    }

    fn log_likelihood(&self, x: &[f64], per_obs: Option<&mut [f64]>) -> Result<f64> {
        let state = self.layout().to_state(x);
        self.log_likelihood_into(&state, per_obs)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub n_chains: usize,
    /// Total iterations per chain, burn-in included.
    pub iterations: usize,
    pub burnin: usize,
    pub thin: usize,
    pub seed: u64,
    /// Burn-in iterations during which step sizes adapt.
    pub adapt_window: usize,
    pub target_accept: f64,
    /// Keep the full draws × observations log-likelihood matrix.
    #[serde(default)]
    pub keep_loglik: bool,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self::application(0)
    }
}

impl SamplerConfig {
    /// 2 × 55,000 iterations, 5,000 burn-in, thin 5.
    pub fn application(seed: u64) -> Self {
        Self {
            n_chains: 2,
            iterations: 55_000,
            burnin: 5_000,
            thin: 5,
            seed,
            adapt_window: 5_000,
            target_accept: 0.44,
            keep_loglik: false,
        }
    }

    /// 2 × 20,000 iterations, 2,000 burn-in, thin 4.
    pub fn simulation(seed: u64) -> Self {
        Self {
            n_chains: 2,
            iterations: 20_000,
            burnin: 2_000,
            thin: 4,
            seed,
            adapt_window: 2_000,
            target_accept: 0.44,
            keep_loglik: false,
        }
    }

    pub fn with_lengths(mut self, iterations: usize, burnin: usize, thin: usize) -> Self {
        self.iterations = iterations;
        self.burnin = burnin;
        self.thin = thin;
        self.adapt_window = burnin;
        self
    }

    pub fn retained_per_chain(&self) -> usize {
        (self.iterations - self.burnin) / self.thin
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_chains == 0 {
            return Err(Error::validation("at least one chain is required"));
        }
        if self.iterations <= self.burnin {
            return Err(Error::validation(format!(
                "iterations ({}) must exceed burn-in ({})",
                self.iterations, self.burnin
            )));
        }
        if self.thin == 0 {
            return Err(Error::validation("thin must be at least 1"));
        }
        if self.retained_per_chain() == 0 {
            return Err(Error::validation("configuration retains no draws"));
        }
        if self.adapt_window > self.burnin {
            return Err(Error::validation("adaptation window must lie within burn-in"));
        }
        if !(self.target_accept > 0.0 && self.target_accept < 1.0) {
            return Err(Error::validation("target acceptance must lie in (0, 1)"));
        }
        Ok(())
    }
}

/// Streaming per-observation moments for WAIC: Welford mean/variance and a
/// running log-sum-exp of the pointwise log-likelihood.
#[derive(Debug, Clone, PartialEq)]
pub struct WaicAccumulator {
    n: usize,
    mean: Vec<f64>,
    m2: Vec<f64>,
    lse_max: Vec<f64>,
    lse_sum: Vec<f64>,
}

impl WaicAccumulator {
    pub fn new(n_obs: usize) -> Self {
        Self {
            n: 0,
            mean: vec![0.0; n_obs],
            m2: vec![0.0; n_obs],
            lse_max: vec![f64::NEG_INFINITY; n_obs],
            lse_sum: vec![0.0; n_obs],
        }
    }

    pub fn n_draws(&self) -> usize {
        self.n
    }

    pub fn push(&mut self, ll: &[f64]) {
        self.n += 1;
        let n = self.n as f64;
        for (i, &v) in ll.iter().enumerate() {
            let d = v - self.mean[i];
            self.mean[i] += d / n;
            self.m2[i] += d * (v - self.mean[i]);
            if v > self.lse_max[i] {
                self.lse_sum[i] = self.lse_sum[i] * (self.lse_max[i] - v).exp() + 1.0;
                self.lse_max[i] = v;
            } else {
                self.lse_sum[i] += (v - self.lse_max[i]).exp();
            }
        }
    }

    /// Combines two accumulators (Chan et al. pairwise update).
    pub fn merge(&mut self, other: &WaicAccumulator) {
        if other.n == 0 {
            return;
        }
        if self.n == 0 {
            *self = other.clone();
            return;
        }
        let (na, nb) = (self.n as f64, other.n as f64);
        let n = na + nb;
        for i in 0..self.mean.len() {
            let d = other.mean[i] - self.mean[i];
            self.mean[i] += d * nb / n;
            self.m2[i] += other.m2[i] + d * d * na * nb / n;
            let mx = self.lse_max[i].max(other.lse_max[i]);
            self.lse_sum[i] = self.lse_sum[i] * (self.lse_max[i] - mx).exp()
                + other.lse_sum[i] * (other.lse_max[i] - mx).exp();
            self.lse_max[i] = mx;
        }
        self.n += other.n;
    }

    pub fn finish(&self) -> Result<Waic> {
        if self.n < 2 {
            return Err(Error::validation("WAIC requires at least 2 draws"));
        }
        let n = self.n as f64;
        let mut lppd = 0.0;
        let mut p_waic = 0.0;
        for i in 0..self.mean.len() {
            if !self.lse_max[i].is_finite() || !self.m2[i].is_finite() {
                return Err(Error::Evaluation(format!(
                    "non-finite log-likelihood for observation {}",
                    i + 1
                )));
            }
            lppd += self.lse_max[i] + self.lse_sum[i].ln() - n.ln();
            p_waic += self.m2[i] / (n - 1.0);
        }
        Ok(Waic::new(lppd, p_waic))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Waic {
    pub waic: f64,
    pub lppd: f64,
    pub p_waic: f64,
}

impl Waic {
    fn new(lppd: f64, p_waic: f64) -> Self {
        Self {
            waic: -2.0 * (lppd - p_waic),
            lppd,
            p_waic,
        }
    }
}

/// WAIC from a draws × observations log-likelihood matrix.
pub fn compute_waic(loglik: &[Vec<f64>]) -> Result<Waic> {
    if loglik.len() < 2 {
        return Err(Error::validation("WAIC requires at least 2 draws"));
    }
    let n_obs = loglik[0].len();
    if loglik.iter().any(|r| r.len() != n_obs) {
        return Err(Error::validation("log-likelihood rows differ in length"));
    }
    let s = loglik.len() as f64;
    let mut lppd = 0.0;
    let mut p_waic = 0.0;
    for i in 0..n_obs {
        let col: Vec<f64> = loglik.iter().map(|r| r[i]).collect();
        if let Some(bad) = col.iter().position(|v| !v.is_finite()) {
            return Err(Error::Evaluation(format!(
                "non-finite log-likelihood for observation {} at draw {}",
                i + 1,
                bad + 1
            )));
        }
        let mx = col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        lppd += mx + (col.iter().map(|v| (v - mx).exp()).sum::<f64>() / s).ln();
        let mean = col.iter().sum::<f64>() / s;
        p_waic += col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (s - 1.0);
    }
    Ok(Waic::new(lppd, p_waic))
}

/// Retained posterior draws in natural coordinates.
#[derive(Debug, Clone)]
pub struct PosteriorDraws {
    pub names: Vec<String>,
    pub n_chains: usize,
    pub draws_per_chain: usize,
    /// Row-major draws, chains stacked in order.
    pub values: Vec<f64>,
    pub n_obs: usize,
    /// Row-major draws × observations, when requested.
    pub loglik: Option<Vec<f64>>,
    /// Post-burn-in acceptance rate per chain and parameter.
    pub acceptance: Vec<Vec<f64>>,
    pub warnings: Vec<String>,
    pub waic_acc: WaicAccumulator,
}

impl PosteriorDraws {
    pub fn n_params(&self) -> usize {
        self.names.len()
    }

    pub fn n_draws(&self) -> usize {
        self.n_chains * self.draws_per_chain
    }

    pub fn draw(&self, i: usize) -> &[f64] {
        let d = self.n_params();
        &self.values[i * d..(i + 1) * d]
    }

    pub fn chain_of(&self, i: usize) -> usize {
        i / self.draws_per_chain
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.n_draws()).map(|i| self.draw(i)[j]).collect()
    }

    pub fn column_by_name(&self, name: &str) -> Option<Vec<f64>> {
        self.names.iter().position(|n| n == name).map(|j| self.column(j))
    }

    pub fn chain_column(&self, chain: usize, j: usize) -> Vec<f64> {
        let start = chain * self.draws_per_chain;
        (start..start + self.draws_per_chain).map(|i| self.draw(i)[j]).collect()
    }

    pub fn loglik_matrix(&self) -> Option<Vec<Vec<f64>>> {
        self.loglik
            .as_ref()
            .map(|l| l.chunks(self.n_obs).map(<[f64]>::to_vec).collect())
    }

    /// Writes `draw, chain, <parameters>` with 1-based draw and chain indices.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["draw".to_string(), "chain".to_string()];
        header.extend(self.names.iter().cloned());
        w.write_record(&header)?;
        for i in 0..self.n_draws() {
            let mut rec = vec![(i + 1).to_string(), (self.chain_of(i) + 1).to_string()];
            rec.extend(self.draw(i).iter().map(|v| v.to_string()));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Reads draws written by [`PosteriorDraws::write_csv`]. Log-likelihood and
/// acceptance information is not stored in the file and comes back empty.
pub fn read_draws_csv<R: std::io::Read>(reader: R) -> Result<PosteriorDraws> {
    let mut r = csv::Reader::from_reader(reader);
    let header = r.headers()?.clone();
    if header.len() < 2 || &header[0] != "draw" || &header[1] != "chain" {
        return Err(Error::Schema {
            row: 0,
            column: "draw".to_string(),
            message: "draws file must start with `draw,chain`".to_string(),
        });
    }
    let names: Vec<String> = header.iter().skip(2).map(str::to_string).collect();
    let mut values = Vec::new();
    let mut chain_sizes: Vec<usize> = Vec::new();
    for (row, rec) in r.records().enumerate() {
        let rec = rec?;
        let parse = |col: usize| -> Result<f64> {
            rec.get(col)
                .and_then(|v| v.trim().parse::<f64>().ok())
                .ok_or_else(|| Error::Schema {
                    row: row + 1,
                    column: header.get(col).unwrap_or("?").to_string(),
                    message: "expected a number".to_string(),
                })
        };
        let chain = parse(1)? as usize;
        if chain == 0 || chain < chain_sizes.len() || chain > chain_sizes.len() + 1 {
            return Err(Error::Schema {
                row: row + 1,
                column: "chain".to_string(),
                message: "chains must be contiguous and numbered from 1".to_string(),
            });
        }
        if chain > chain_sizes.len() {
            chain_sizes.push(0);
        }
        chain_sizes[chain - 1] += 1;
        for j in 0..names.len() {
            values.push(parse(j + 2)?);
        }
    }
    let per_chain = chain_sizes.first().copied().unwrap_or(0);
    if per_chain == 0 || chain_sizes.iter().any(|&c| c != per_chain) {
        return Err(Error::validation("draws file needs equal, nonempty chains"));
    }
    Ok(PosteriorDraws {
        n_chains: chain_sizes.len(),
        draws_per_chain: per_chain,
        acceptance: vec![Vec::new(); chain_sizes.len()],
        names,
        values,
        n_obs: 0,
        loglik: None,
        warnings: Vec::new(),
        waic_acc: WaicAccumulator::new(0),
    })
}

struct ChainOutput {
    values: Vec<f64>,
    loglik: Option<Vec<f64>>,
    acceptance: Vec<f64>,
    warnings: Vec<String>,
    waic: WaicAccumulator,
}

fn log_target<T: Target>(t: &T, x: &[f64]) -> (f64, f64) {
    let prior = t.log_prior(x);
    if !prior.is_finite() {
        return (f64::NEG_INFINITY, f64::NEG_INFINITY);
    }
    match t.log_likelihood(x, None) {
        Ok(ll) if ll.is_finite() => (prior, ll),
        _ => (f64::NEG_INFINITY, f64::NEG_INFINITY),
    }
}

fn jittered_start<T: Target>(
    target: &T,
    transforms: &[Transform],
    rng: &mut ChaCha8Rng,
) -> Result<Vec<f64>> {
    let base = target.initial();
    let (p, l) = log_target(target, &base);
    if !(p + l).is_finite() {
        return Err(Error::Convergence(
            "initial values have zero posterior density".to_string(),
        ));
    }
    for attempt in 0..50 {
        let sd = 0.5 / (1.0 + attempt as f64);
        let mut x = base.clone();
        for (j, tr) in transforms.iter().enumerate() {
            let (lo, hi) = tr.bounds(&x);
            let y = tr.forward(x[j], lo, hi) + sd * rng.sample::<f64, _>(StandardNormal);
            x[j] = tr.inverse(y, lo, hi);
        }
        let (p, l) = log_target(target, &x);
        if (p + l).is_finite() {
            return Ok(x);
        }
    }
    Ok(base)
}

fn run_chain<T: Target>(target: &T, cfg: &SamplerConfig, chain: usize) -> Result<ChainOutput> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(chain as u64);
    let transforms = target.transforms();
    let d = transforms.len();
    let n_obs = target.n_obs();
    let mut x = jittered_start(target, &transforms, &mut rng)?;
    let (mut prior, mut ll) = log_target(target, &x);
    let mut log_step = vec![(0.1f64).ln(); d];
    for (j, tr) in transforms.iter().enumerate() {
        if matches!(tr, Transform::Interval { .. }) {
            log_step[j] = 0.5f64.ln();
        }
    }
    let retained = cfg.retained_per_chain();
    let mut values = Vec::with_capacity(retained * d);
    let mut loglik = cfg.keep_loglik.then(|| Vec::with_capacity(retained * n_obs));
    let mut pointwise = vec![0.0; n_obs];
    let mut waic = WaicAccumulator::new(n_obs);
    let mut accepted_adapt = vec![0usize; d];
    let mut accepted_post = vec![0usize; d];
    for it in 0..cfg.iterations {
        let adapting = it < cfg.adapt_window;
        for j in 0..d {
            let tr = transforms[j];
            let (lo, hi) = tr.bounds(&x);
            let y = tr.forward(x[j], lo, hi);
            let y_new = y + log_step[j].exp() * rng.sample::<f64, _>(StandardNormal);
            let old = x[j];
            let new = tr.inverse(y_new, lo, hi);
            let u: f64 = rng.random();
            let mut accept = false;
            if new.is_finite() && (!matches!(tr, Transform::Interval { .. }) || (new > lo && new < hi))
            {
                x[j] = new;
                let (p_new, l_new) = log_target(target, &x);
                let log_ratio = (p_new + l_new + tr.log_jacobian(new, lo, hi))
                    - (prior + ll + tr.log_jacobian(old, lo, hi));
                accept = u.ln() < log_ratio;
                if accept {
                    prior = p_new;
                    ll = l_new;
                } else {
                    x[j] = old;
                }
            }
            if adapting {
                accepted_adapt[j] += usize::from(accept);
                let gamma = (it as f64 + 1.0).powf(-0.6);
                log_step[j] += gamma * (f64::from(u8::from(accept)) - cfg.target_accept);
                log_step[j] = log_step[j].clamp(-12.0, 3.0);
            } else if it >= cfg.burnin {
                accepted_post[j] += usize::from(accept);
            }
        }
        if it >= cfg.burnin && (it - cfg.burnin + 1).is_multiple_of(cfg.thin) {
            values.extend_from_slice(&x);
            target.log_likelihood(&x, Some(&mut pointwise))?;
            waic.push(&pointwise);
            if let Some(l) = loglik.as_mut() {
                l.extend_from_slice(&pointwise);
            }
        }
    }
    let names = target.names();
    let mut warnings = Vec::new();
    if cfg.adapt_window > 0 {
        for (j, &a) in accepted_adapt.iter().enumerate() {
            if a == 0 {
                warnings.push(format!(
                    "chain {}: sampler stuck, no proposals for `{}` accepted during adaptation",
                    chain + 1,
                    names[j]
                ));
            }
        }
    }
    let post = (cfg.iterations - cfg.burnin) as f64;
    let acceptance: Vec<f64> = accepted_post.iter().map(|&a| a as f64 / post).collect();
    for (j, &r) in acceptance.iter().enumerate() {
        if !(0.05..=0.95).contains(&r) {
            warnings.push(format!(
                "chain {}: acceptance rate {r:.3} for `{}` outside (0.05, 0.95)",
                chain + 1,
                names[j]
            ));
        }
    }
    Ok(ChainOutput {
        values,
        loglik,
        acceptance,
        warnings,
        waic,
    })
}

/// Runs all chains (in parallel on the current rayon pool). Output is
/// independent of the number of threads.
pub fn run_sampler<T: Target>(target: &T, cfg: &SamplerConfig) -> Result<PosteriorDraws> {
    cfg.validate()?;
    if target.n_events() == 0 {
        return Err(Error::DegenerateData(
            "the dataset contains no events".to_string(),
        ));
    }
    let chains: Vec<ChainOutput> = (0..cfg.n_chains)
        .into_par_iter()
        .map(|c| run_chain(target, cfg, c))
        .collect::<Result<_>>()?;
    let mut values = Vec::new();
    let mut loglik = cfg.keep_loglik.then(Vec::new);
    let mut acceptance = Vec::new();
    let mut warnings = Vec::new();
    let mut waic_acc = WaicAccumulator::new(target.n_obs());
    for c in chains {
        values.extend(c.values);
        if let (Some(all), Some(l)) = (loglik.as_mut(), c.loglik) {
            all.extend(l);
        }
        acceptance.push(c.acceptance);
        warnings.extend(c.warnings);
        waic_acc.merge(&c.waic);
    }
    Ok(PosteriorDraws {
        names: target.names(),
        n_chains: cfg.n_chains,
        draws_per_chain: cfg.retained_per_chain(),
        values,
        n_obs: target.n_obs(),
        loglik,
        acceptance,
        warnings,
        waic_acc,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    /// Split-R̂; `None` when the parameter does not vary.
    pub rhat: Vec<Option<f64>>,
    /// Multi-chain effective sample size; `None` when the parameter does not vary.
    pub ess: Vec<Option<f64>>,
    /// Mean post-burn-in acceptance rate across chains.
    pub acceptance: Vec<f64>,
    pub warnings: Vec<String>,
}

impl Diagnostics {
    pub fn max_rhat(&self) -> Option<f64> {
        self.rhat.iter().flatten().copied().reduce(f64::max)
    }
}

fn mean_var(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    (m, x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0))
}

/// Split-R̂ over `chains` (each a sequence of equal length).
pub fn split_rhat(chains: &[Vec<f64>]) -> Option<f64> {
    let n = chains.first()?.len() / 2;
    if n < 2 {
        return None;
    }
    let halves: Vec<&[f64]> = chains
        .iter()
        .flat_map(|c| [&c[..n], &c[c.len() - n..]])
        .collect();
    let stats: Vec<(f64, f64)> = halves.iter().map(|h| mean_var(h)).collect();
    let w = stats.iter().map(|s| s.1).sum::<f64>() / stats.len() as f64;
    let means: Vec<f64> = stats.iter().map(|s| s.0).collect();
    let (_, b_over_n) = mean_var(&means);
    let nf = n as f64;
    let var_plus = (nf - 1.0) / nf * w + b_over_n;
    if !(w > 0.0) {
        return if var_plus > 0.0 { Some(f64::INFINITY) } else { None };
    }
    Some((var_plus / w).sqrt())
}

/// Multi-chain ESS with Geyer's initial monotone sequence, capped at the
/// number of draws.
pub fn effective_sample_size(chains: &[Vec<f64>]) -> Option<f64> {
    let m = chains.len();
    let n = chains.first()?.len();
    if n < 4 || chains.iter().any(|c| c.len() != n) {
        return None;
    }
    let stats: Vec<(f64, f64)> = chains.iter().map(|c| mean_var(c)).collect();
    let w = stats.iter().map(|s| s.1).sum::<f64>() / m as f64;
    let nf = n as f64;
    let b_over_n = if m > 1 {
        mean_var(&stats.iter().map(|s| s.0).collect::<Vec<_>>()).1
    } else {
        0.0
    };
    let var_plus = (nf - 1.0) / nf * w + b_over_n;
    if !(var_plus > 0.0) || !(w > 0.0) {
        return None;
    }
    let acov = |lag: usize| -> f64 {
        chains
            .iter()
            .zip(&stats)
            .map(|(c, (mean, _))| {
                (0..n - lag).map(|i| (c[i] - mean) * (c[i + lag] - mean)).sum::<f64>() / nf
            })
            .sum::<f64>()
            / m as f64
    };
    let rho = |lag: usize| 1.0 - (w - acov(lag)) / var_plus;
    let mut tau_sum = 0.0;
    let mut prev_pair = f64::INFINITY;
    let mut t = 0;
    while t + 1 < n {
        let mut pair = rho(t) + rho(t + 1);
        if pair <= 0.0 {
            break;
        }
        pair = pair.min(prev_pair);
        tau_sum += pair;
        prev_pair = pair;
        t += 2;
    }
    let tau = (2.0 * tau_sum - 1.0).max(1.0 / ((m * n) as f64).log10().max(1.0));
    Some(((m * n) as f64 / tau).min((m * n) as f64))
}

/// Split-R̂ and ESS per parameter.
pub fn compute_rhat_ess(draws: &PosteriorDraws) -> Result<Diagnostics> {
    if draws.n_chains < 2 {
        return Err(Error::validation("diagnostics require at least 2 chains"));
    }
    if draws.draws_per_chain < 100 {
        return Err(Error::validation(format!(
            "diagnostics require at least 100 retained draws per chain, got {}",
            draws.draws_per_chain
        )));
    }
    let mut rhat = Vec::new();
    let mut ess = Vec::new();
    for j in 0..draws.n_params() {
        let chains: Vec<Vec<f64>> = (0..draws.n_chains).map(|c| draws.chain_column(c, j)).collect();
        rhat.push(split_rhat(&chains));
        ess.push(effective_sample_size(&chains));
    }
    let acceptance = (0..draws.n_params())
        .map(|j| draws.acceptance.iter().map(|a| a[j]).sum::<f64>() / draws.n_chains as f64)
        .collect();
    Ok(Diagnostics {
        rhat,
        ess,
        acceptance,
        warnings: draws.warnings.clone(),
    })
}

/// Sample quantile with linear interpolation between order statistics.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let h = (sorted.len() - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Median and 95% percentile interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval95 {
    pub median: f64,
    pub lo95: f64,
    pub hi95: f64,
}

impl Interval95 {
    pub fn from_values(values: &[f64]) -> Self {
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        Self {
            median: quantile_sorted(&v, 0.5),
            lo95: quantile_sorted(&v, 0.025),
            hi95: quantile_sorted(&v, 0.975),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSummary {
    pub name: String,
    pub mean: f64,
    pub sd: f64,
    pub median: f64,
    pub lo95: f64,
    pub hi95: f64,
    pub rhat: Option<f64>,
    pub ess: Option<f64>,
    pub acceptance: f64,
}

/// Settings recorded with every fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitMetadata {
    pub model: String,
    pub sampler: SamplerConfig,
    pub priors: PriorConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau_max: Option<f64>,
    pub n_obs: usize,
    pub n_events: usize,
}

#[derive(Debug, Clone)]
pub struct FitResult {
    pub draws: PosteriorDraws,
    pub diagnostics: Diagnostics,
    pub waic: Waic,
    pub metadata: FitMetadata,
}

/// Serializable digest of a fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitSummary {
    pub metadata: FitMetadata,
    pub parameters: Vec<ParamSummary>,
    pub waic: Waic,
    pub max_rhat: Option<f64>,
    pub warnings: Vec<String>,
}

impl FitResult {
    pub fn summary(&self) -> FitSummary {
        let parameters = (0..self.draws.n_params())
            .map(|j| {
                let col = self.draws.column(j);
                let (mean, sd) = if col.len() > 1 {
                    let (m, v) = mean_var(&col);
                    (m, v.sqrt())
                } else {
                    (col[0], 0.0)
                };
                let q = Interval95::from_values(&col);
                ParamSummary {
                    name: self.draws.names[j].clone(),
                    mean,
                    sd,
                    median: q.median,
                    lo95: q.lo95,
                    hi95: q.hi95,
                    rhat: self.diagnostics.rhat[j],
                    ess: self.diagnostics.ess[j],
                    acceptance: self.diagnostics.acceptance[j],
                }
            })
            .collect();
        FitSummary {
            metadata: self.metadata.clone(),
            parameters,
            waic: self.waic,
            max_rhat: self.diagnostics.max_rhat(),
            warnings: self.diagnostics.warnings.clone(),
        }
    }

    pub fn median(&self, name: &str) -> Option<f64> {
        self.draws
            .column_by_name(name)
            .map(|c| Interval95::from_values(&c).median)
    }
}

/// Runs the sampler on any target and assembles diagnostics and WAIC.
pub fn fit_target<T: Target>(
    target: &T,
    cfg: &SamplerConfig,
    model: &str,
    priors: PriorConfig,
    tau_max: Option<f64>,
) -> Result<FitResult> {
    let draws = run_sampler(target, cfg)?;
    let diagnostics = compute_rhat_ess(&draws)?;
    let waic = draws.waic_acc.finish()?;
    Ok(FitResult {
        diagnostics,
        waic,
        metadata: FitMetadata {
            model: model.to_string(),
            sampler: *cfg,
            priors,
            tau_max,
            n_obs: draws.n_obs,
            n_events: target.n_events(),
        },
        draws,
    })
}

/// Fits a change-point model.
pub fn fit_changepoint(spec: &ModelSpec, ds: &Dataset, cfg: &SamplerConfig) -> Result<FitResult> {
    let model = ChangePointModel::new(spec, ds)?;
    let label = spec
        .preset
        .map_or_else(|| "custom".to_string(), |p| p.name().to_string());
    let tau_max = (spec.k > 0).then(|| model.tau_max());
    fit_target(&model, cfg, &format!("changepoint:{label}:k{}", spec.k), spec.priors, tau_max)
}
