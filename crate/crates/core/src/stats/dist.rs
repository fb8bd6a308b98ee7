use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};

use super::special::{log_beta_unchecked, regularized_beta_pair};
use crate::error::{Error, Result};

pub const LN_2PI: f64 = 1.837_877_066_409_345_5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BetaParams {
    alpha: f64,
    beta: f64,
}

impl BetaParams {
    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha.is_finite()) || !(beta > 0.0 && beta.is_finite()) {
            return Err(Error::Domain(format!(
                "beta shapes must be positive, got ({alpha}, {beta})"
            )));
        }
        Ok(Self { alpha, beta })
    }

    /// The flat Beta(1, 1) prior.
    pub fn uniform() -> Self {
        Self {
            alpha: 1.0,
            beta: 1.0,
        }
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn mean(&self) -> f64 {
        self.alpha / (self.alpha + self.beta)
    }

    pub fn variance(&self) -> f64 {
        let s = self.alpha + self.beta;
        self.alpha * self.beta / (s * s * (s + 1.0))
    }

    pub fn ln_pdf(&self, p: f64) -> f64 {
        if !(0.0..=1.0).contains(&p) {
            return f64::NEG_INFINITY;
        }
        (self.alpha - 1.0) * p.ln() + (self.beta - 1.0) * (-p).ln_1p()
            - log_beta_unchecked(self.alpha, self.beta)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let x: f64 = Gamma::new(self.alpha, 1.0).unwrap().sample(rng);
        let y: f64 = Gamma::new(self.beta, 1.0).unwrap().sample(rng);
        x / (x + y)
    }
}

/// Conjugate update of a beta prior with `r` responders out of `n`.
pub fn beta_posterior(n: f64, r: f64, prior: BetaParams) -> Result<BetaParams> {
    if !(r >= 0.0) || !(n >= 0.0) || r > n {
        return Err(Error::Argument(format!(
            "responders must satisfy 0 <= r <= n, got r={r}, n={n}"
        )));
    }
    BetaParams::new(prior.alpha + r, prior.beta + n - r)
}

/// `Pr(X > threshold)` for `X ~ Beta(params)`.
pub fn beta_tail_prob(params: BetaParams, threshold: f64) -> Result<f64> {
    let (_, upper) = regularized_beta_pair(params.alpha, params.beta, threshold)?;
    Ok(upper)
}

pub fn logit(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::Domain(format!("logit requires 0 < p < 1, got {p}")));
    }
    Ok((p / (1.0 - p)).ln())
}

pub fn inv_logit(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^x)` without overflow.
#[inline]
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Binomial log-likelihood of `r` out of `n` in the log-odds parameter, without the
/// binomial coefficient.
#[inline]
pub fn binomial_loglik_logit(theta: f64, n: f64, r: f64) -> f64 {
    r * theta - n * softplus(theta)
}

#[inline]
pub fn normal_ln_pdf(x: f64, mean: f64, var: f64) -> f64 {
    let d = x - mean;
    -0.5 * (LN_2PI + var.ln() + d * d / var)
}

pub fn inv_gamma_ln_pdf(x: f64, shape: f64, rate: f64) -> f64 {
    if !(x > 0.0) {
        return f64::NEG_INFINITY;
    }
    shape * rate.ln() - super::special::ln_gamma(shape).unwrap_or(f64::NAN) - (shape + 1.0) * x.ln()
        - rate / x
}

pub fn gamma_ln_pdf(x: f64, shape: f64, rate: f64) -> f64 {
    if !(x > 0.0) {
        return f64::NEG_INFINITY;
    }
    shape * rate.ln() - super::special::ln_gamma(shape).unwrap_or(f64::NAN) + (shape - 1.0) * x.ln()
        - rate * x
}

#[inline]
pub fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

/// Draw from IG(shape, rate), i.e. the reciprocal of a Gamma(shape, rate) draw.
pub fn sample_inv_gamma<R: Rng + ?Sized>(rng: &mut R, shape: f64, rate: f64) -> f64 {
    let g: f64 = Gamma::new(shape, 1.0 / rate).unwrap().sample(rng);
    1.0 / g
}
