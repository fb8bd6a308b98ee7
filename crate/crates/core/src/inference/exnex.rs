//! Exchangeability-nonexchangeability mixture.
//!
//! Each log-odds `θ_i` is drawn from the exchangeable component `N(μ0, σ0²)`
//! with probability `π_i` and otherwise from its own component `N(m_i, s_i²)`.
//! The log-odds step marginalizes the indicator, which is then drawn exactly.

use rand::Rng;

use super::mcmc::{log_add_exp, normal_draw, theta_step, update_variance, AdaptiveScale, ScaleSet};
use super::{drive, Binomials, ExnexSpec, ExnexWeights, McmcConfig, PosteriorSamples, Rates, Sweeper};
use crate::divergence::IndicationData;
use crate::error::Result;
use crate::stats::{logit, normal_ln_pdf, BetaParams};

struct Exnex {
    y: Binomials,
    theta: Vec<f64>,
    loglik: Vec<f64>,
    exchangeable: Vec<bool>,
    pi: Vec<f64>,
    mu0: f64,
    sigma0_2: f64,
    nex_mean: Vec<f64>,
    spec: ExnexSpec,
    scales: ScaleSet,
    sigma_scale: usize,
}

impl Sweeper for Exnex {
    fn sweep<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<()> {
        let (mu0, s0, nex_var) = (self.mu0, self.sigma0_2, self.spec.nex_var);
        let (c_ex, c_nex) = (normal_ln_pdf(mu0, mu0, s0), normal_ln_pdf(0.0, 0.0, nex_var));
        let (h_ex, h_nex) = (0.5 / s0, 0.5 / nex_var);
        for i in 0..self.theta.len() {
            let (ln_pi, ln_1m) = (self.pi[i].ln(), (1.0 - self.pi[i]).ln());
            let m = self.nex_mean[i];
            let ln_ex = |t: f64| ln_pi + c_ex - h_ex * (t - mu0) * (t - mu0);
            let ln_nex = |t: f64| ln_1m + c_nex - h_nex * (t - m) * (t - m);
            theta_step(
                &mut self.theta[i],
                &mut self.loglik[i],
                self.y.n[i],
                self.y.r[i],
                &mut self.scales.scales[i],
                rng,
                |t| log_add_exp(ln_ex(t), ln_nex(t)),
            );
            let t = self.theta[i];
            let p_ex = 1.0 / (1.0 + (ln_nex(t) - ln_ex(t)).exp());
            self.exchangeable[i] = rng.random::<f64>() < p_ex;
        }

        let mut k = 0.0;
        let mut sum = 0.0;
        for (t, &ex) in self.theta.iter().zip(&self.exchangeable) {
            if ex {
                k += 1.0;
                sum += t;
            }
        }
        let prec = 1.0 / self.spec.mu0_var + k / self.sigma0_2;
        let mean = (self.spec.mu0_mean / self.spec.mu0_var + sum / self.sigma0_2) / prec;
        self.mu0 = normal_draw(rng, mean, 1.0 / prec);

        let mu0 = self.mu0;
        let ss: f64 = self
            .theta
            .iter()
            .zip(&self.exchangeable)
            .filter(|(_, &ex)| ex)
            .map(|(t, _)| (t - mu0) * (t - mu0))
            .sum();
        update_variance(
            &mut self.sigma0_2,
            &self.spec.sigma0_2,
            k,
            ss,
            &mut self.scales.scales[self.sigma_scale],
            rng,
        );

        if let ExnexWeights::Dirichlet { lambda1, lambda2 } = self.spec.weights {
            for (p, &ex) in self.pi.iter_mut().zip(&self.exchangeable) {
                let e = ex as u8 as f64;
                *p = sample_beta(lambda1 + e, lambda2 + 1.0 - e, rng)?;
            }
        }
        Ok(())
    }

    fn theta(&self) -> &[f64] {
        &self.theta
    }

    fn scales(&mut self) -> &mut ScaleSet {
        &mut self.scales
    }
}

/// Beta draw with closed forms when either shape is one.
fn sample_beta<R: Rng + ?Sized>(a: f64, b: f64, rng: &mut R) -> Result<f64> {
    if b == 1.0 {
        Ok(rng.random::<f64>().powf(1.0 / a))
    } else if a == 1.0 {
        Ok(1.0 - rng.random::<f64>().powf(1.0 / b))
    } else {
        Ok(BetaParams::new(a, b)?.sample(rng))
    }
}

pub fn fit_exnex<R: Rng + ?Sized>(
    data: &[IndicationData],
    rates: &Rates,
    spec: &ExnexSpec,
    cfg: &McmcConfig,
    rng: &mut R,
) -> Result<PosteriorSamples> {
    rates.validate(data.len())?;
    super::ModelSpec::Exnex(*spec).validate()?;
    let y = Binomials::new(data)?;
    let dim = y.dim();
    let theta = y.init_theta();
    let loglik = (0..dim)
        .map(|i| crate::stats::binomial_loglik_logit(theta[i], y.n[i], y.r[i]))
        .collect();
    let nex_mean = match spec.nex_mean {
        Some(m) => vec![m; dim],
        None => rates.q0.iter().map(|&q| logit(q)).collect::<Result<_>>()?,
    };
    let pi = match spec.weights {
        ExnexWeights::Dirichlet { lambda1, lambda2 } => vec![lambda1 / (lambda1 + lambda2); dim],
        ExnexWeights::Fixed { pi } => vec![pi; dim],
    };
    let mut scales = ScaleSet::default();
    for i in 0..dim {
        scales.push(format!("theta[{}]", i + 1), AdaptiveScale::new(1.0, cfg));
    }
    let sigma_scale = scales.push("sigma0_2", AdaptiveScale::new(1.0, cfg));
    let mut model = Exnex {
        mu0: theta.iter().sum::<f64>() / dim as f64,
        y,
        theta,
        loglik,
        exchangeable: pi.iter().map(|&p| p > 0.0).collect(),
        pi,
        sigma0_2: spec.sigma0_2.initial(),
        nex_mean,
        spec: *spec,
        scales,
        sigma_scale,
    };
    drive(&mut model, cfg, rng)
}
