//! Adaptive random-walk Metropolis building blocks.
//!
//! Every scalar that lacks a conjugate full conditional gets its own
//! [`AdaptiveScale`]. During burn-in the log proposal scale is nudged after each
//! batch towards the target acceptance rate, with a step that shrinks as
//! `1/sqrt(batch)`. After burn-in the scale is frozen so the retained chain is a
//! plain Metropolis chain.

use rand::Rng;

use super::McmcConfig;
use crate::error::{Error, Result};
use crate::stats::standard_normal;

#[derive(Debug, Clone)]
pub struct AdaptiveScale {
    log_scale: f64,
    target: f64,
    batch_len: u32,
    batch_accepts: u32,
    batch_tries: u32,
    batches: u32,
    frozen: bool,
    accepts: u64,
    tries: u64,
}

impl AdaptiveScale {
    pub fn new(initial: f64, cfg: &McmcConfig) -> Self {
        Self {
            log_scale: initial.ln(),
            target: cfg.target_accept,
            batch_len: cfg.adapt_batch.max(1) as u32,
            batch_accepts: 0,
            batch_tries: 0,
            batches: 0,
            frozen: false,
            accepts: 0,
            tries: 0,
        }
    }

    #[inline]
    pub fn scale(&self) -> f64 {
        self.log_scale.exp()
    }

    #[inline]
    pub fn record(&mut self, accepted: bool) {
        if self.frozen {
            self.tries += 1;
            self.accepts += accepted as u64;
            return;
        }
        self.batch_tries += 1;
        self.batch_accepts += accepted as u32;
        if self.batch_tries == self.batch_len {
            self.batches += 1;
            let rate = self.batch_accepts as f64 / self.batch_len as f64;
            let step = (1.0 / (self.batches as f64).sqrt()).min(0.5);
            if rate > self.target {
                self.log_scale += step;
            } else {
                self.log_scale -= step;
            }
            self.log_scale = self.log_scale.clamp(-20.0, 10.0);
            self.batch_tries = 0;
            self.batch_accepts = 0;
        }
    }

    /// Stops adaptation and resets the acceptance counters.
    pub fn freeze(&mut self) {
        self.frozen = true;
        self.accepts = 0;
        self.tries = 0;
    }

    /// Acceptance rate since [`freeze`](Self::freeze).
    pub fn acceptance_rate(&self) -> f64 {
        if self.tries == 0 {
            f64::NAN
        } else {
            self.accepts as f64 / self.tries as f64
        }
    }
}

/// Named proposal scales of one model.
#[derive(Debug, Clone, Default)]
pub struct ScaleSet {
    pub names: Vec<String>,
    pub scales: Vec<AdaptiveScale>,
}

impl ScaleSet {
    pub fn push(&mut self, name: impl Into<String>, scale: AdaptiveScale) -> usize {
        self.names.push(name.into());
        self.scales.push(scale);
        self.scales.len() - 1
    }

    pub fn freeze(&mut self) {
        self.scales.iter_mut().for_each(AdaptiveScale::freeze);
    }

    /// Acceptance rates of the blocks that made random-walk proposals.
    pub fn acceptance(&self) -> Vec<(String, f64)> {
        self.names
            .iter()
            .cloned()
            .zip(self.scales.iter().map(AdaptiveScale::acceptance_rate))
            .filter(|(_, a)| !a.is_nan())
            .collect()
    }
}

#[inline]
pub(crate) fn metropolis_accept<R: Rng + ?Sized>(log_ratio: f64, rng: &mut R) -> bool {
    if log_ratio >= 0.0 {
        return true;
    }
    if log_ratio.is_nan() {
        return false;
    }
    rng.random::<f64>().ln() < log_ratio
}

/// One random-walk step on a positive quantity through its logarithm.
///
/// `ln_target` is the log density of the quantity itself; the Jacobian of the
/// log transform is added here.
#[inline]
pub(crate) fn log_scale_step<R: Rng + ?Sized>(
    value: &mut f64,
    scale: &mut AdaptiveScale,
    rng: &mut R,
    mut ln_target: impl FnMut(f64) -> f64,
) -> bool {
    let cur = *value;
    let prop = (cur.ln() + scale.scale() * standard_normal(rng)).exp();
    let ratio = if prop > 0.0 && prop.is_finite() {
        ln_target(prop) + prop.ln() - ln_target(cur) - cur.ln()
    } else {
        f64::NEG_INFINITY
    };
    let ok = metropolis_accept(ratio, rng);
    if ok {
        *value = prop;
    }
    scale.record(ok);
    ok
}

/// A log density on `R^d`, possibly unnormalized.
pub trait Target {
    fn dim(&self) -> usize;
    fn log_density(&self, x: &[f64]) -> f64;
}

/// Adapts a closure into a [`Target`].
pub struct FnTarget<F> {
    pub dim: usize,
    pub f: F,
}

impl<F: Fn(&[f64]) -> f64> Target for FnTarget<F> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn log_density(&self, x: &[f64]) -> f64 {
        (self.f)(x)
    }
}

#[derive(Debug, Clone)]
pub struct Chain {
    pub dim: usize,
    /// Retained states, row-major `keep × dim`.
    pub draws: Vec<f64>,
    pub acceptance: Vec<f64>,
}

impl Chain {
    pub fn column(&self, j: usize) -> impl Iterator<Item = f64> + '_ {
        self.draws.iter().skip(j).step_by(self.dim).copied()
    }

    pub fn mean(&self, j: usize) -> f64 {
        let n = self.draws.len() / self.dim;
        self.column(j).sum::<f64>() / n as f64
    }
}

/// Component-wise adaptive random-walk Metropolis on a generic target.
pub fn run_mcmc<T: Target, R: Rng + ?Sized>(
    target: &T,
    init: &[f64],
    cfg: &McmcConfig,
    rng: &mut R,
) -> Result<Chain> {
    let dim = target.dim();
    if init.len() != dim {
        return Err(Error::Argument(format!("init has {} entries, target {}", init.len(), dim)));
    }
    cfg.validate()?;
    let mut x = init.to_vec();
    let mut cur = target.log_density(&x);
    if !cur.is_finite() {
        return Err(Error::Init(format!("log density at the initial state is {cur}")));
    }
    let mut scales: Vec<AdaptiveScale> = (0..dim).map(|_| AdaptiveScale::new(1.0, cfg)).collect();
    let mut draws = Vec::with_capacity(cfg.keep * dim);
    for it in 0..(cfg.burn_in + cfg.keep) {
        if it == cfg.burn_in {
            scales.iter_mut().for_each(AdaptiveScale::freeze);
        }
        for j in 0..dim {
            let old = x[j];
            x[j] = old + scales[j].scale() * standard_normal(rng);
            let lp = target.log_density(&x);
            let ok = metropolis_accept(lp - cur, rng);
            if ok {
                cur = lp;
            } else {
                x[j] = old;
            }
            scales[j].record(ok);
        }
        if !cur.is_finite() {
            return Err(Error::ChainFailure("log density became non-finite".into()));
        }
        if it >= cfg.burn_in {
            draws.extend_from_slice(&x);
        }
    }
    Ok(Chain {
        dim,
        draws,
        acceptance: scales.iter().map(AdaptiveScale::acceptance_rate).collect(),
    })
}

/// Split-chain potential scale reduction of one scalar trace.
pub fn split_rhat(trace: &[f64]) -> f64 {
    let half = trace.len() / 2;
    if half < 2 {
        return f64::NAN;
    }
    let parts = [&trace[..half], &trace[half..2 * half]];
    let stats: Vec<(f64, f64)> = parts
        .iter()
        .map(|p| {
            let m = p.iter().sum::<f64>() / half as f64;
            let v = p.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (half - 1) as f64;
            (m, v)
        })
        .collect();
    let n = half as f64;
    let w = 0.5 * (stats[0].1 + stats[1].1);
    let grand = 0.5 * (stats[0].0 + stats[1].0);
    let b = n * ((stats[0].0 - grand).powi(2) + (stats[1].0 - grand).powi(2));
    if w == 0.0 {
        return if b == 0.0 { 1.0 } else { f64::INFINITY };
    }
    let var_plus = (n - 1.0) / n * w + b / n;
    (var_plus / w).sqrt()
}


/// Random-walk update of one log-odds parameter with a cached binomial log-likelihood.
#[inline]
#[allow(clippy::too_many_arguments)]
pub(crate) fn theta_step<R: Rng + ?Sized>(
    theta: &mut f64,
    loglik: &mut f64,
    n: f64,
    r: f64,
    scale: &mut AdaptiveScale,
    rng: &mut R,
    ln_prior: impl Fn(f64) -> f64,
) -> bool {
    let cur = *theta;
    let prop = cur + scale.scale() * standard_normal(rng);
    let ll = crate::stats::binomial_loglik_logit(prop, n, r);
    let ok = metropolis_accept(ll - *loglik + ln_prior(prop) - ln_prior(cur), rng);
    if ok {
        *theta = prop;
        *loglik = ll;
    }
    scale.record(ok);
    ok
}

/// Updates a variance given `count` normal residuals with sum of squares `ss`.
///
/// Inverse-gamma priors are conjugate and drawn exactly; other priors take a
/// random-walk step on the log scale.
pub(crate) fn update_variance<R: Rng + ?Sized>(
    value: &mut f64,
    prior: &super::VariancePrior,
    count: f64,
    ss: f64,
    scale: &mut AdaptiveScale,
    rng: &mut R,
) {
    match *prior {
        super::VariancePrior::InvGamma { shape, rate } => {
            let v = crate::stats::sample_inv_gamma(rng, shape + 0.5 * count, rate + 0.5 * ss);
            if v > 0.0 && v.is_finite() {
                *value = v;
            }
        }
        _ => {
            log_scale_step(value, scale, rng, |v| {
                -0.5 * count * v.ln() - 0.5 * ss / v + prior.ln_density(v)
            });
        }
    }
}

/// Draw from `N(mean, var)`.
#[inline]
pub(crate) fn normal_draw<R: Rng + ?Sized>(rng: &mut R, mean: f64, var: f64) -> f64 {
    mean + var.sqrt() * standard_normal(rng)
}

/// `ln(e^a + e^b)`.
#[inline]
pub(crate) fn log_add_exp(a: f64, b: f64) -> f64 {
    let m = a.max(b);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + ((a - m).exp() + (b - m).exp()).ln()
}
