//! Normal hierarchical model on the log-odds with a common mean and variance.

use rand::Rng;

use super::mcmc::{normal_draw, theta_step, update_variance, AdaptiveScale, ScaleSet};
use super::{drive, BhmSpec, Binomials, McmcConfig, PosteriorSamples, Rates, Sweeper};
use crate::divergence::IndicationData;
use crate::error::Result;

struct Bhm {
    y: Binomials,
    theta: Vec<f64>,
    loglik: Vec<f64>,
    theta0: f64,
    sigma2: f64,
    g0: f64,
    spec: BhmSpec,
    scales: ScaleSet,
    sigma2_scale: usize,
}

impl Sweeper for Bhm {
    fn sweep<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<()> {
        let (t0, s2) = (self.theta0, self.sigma2);
        for i in 0..self.theta.len() {
            theta_step(
                &mut self.theta[i],
                &mut self.loglik[i],
                self.y.n[i],
                self.y.r[i],
                &mut self.scales.scales[i],
                rng,
                |t| -0.5 * (t - t0) * (t - t0) / s2,
            );
        }
        let k = self.theta.len() as f64;
        let prec = 1.0 / self.spec.mean_prior_var + k / self.sigma2;
        let sum: f64 = self.theta.iter().sum();
        let mean = (self.g0 / self.spec.mean_prior_var + sum / self.sigma2) / prec;
        self.theta0 = normal_draw(rng, mean, 1.0 / prec);
        let t0 = self.theta0;
        let ss: f64 = self.theta.iter().map(|t| (t - t0) * (t - t0)).sum();
        update_variance(
            &mut self.sigma2,
            &self.spec.sigma2,
            k,
            ss,
            &mut self.scales.scales[self.sigma2_scale],
            rng,
        );
        Ok(())
    }

    fn theta(&self) -> &[f64] {
        &self.theta
    }

    fn scales(&mut self) -> &mut ScaleSet {
        &mut self.scales
    }
}

pub fn fit_bhm<R: Rng + ?Sized>(
    data: &[IndicationData],
    rates: &Rates,
    spec: &BhmSpec,
    cfg: &McmcConfig,
    rng: &mut R,
) -> Result<PosteriorSamples> {
    rates.validate(data.len())?;
    spec.sigma2.validate()?;
    let y = Binomials::new(data)?;
    let theta = y.init_theta();
    let loglik = (0..y.dim())
        .map(|i| crate::stats::binomial_loglik_logit(theta[i], y.n[i], y.r[i]))
        .collect();
    let mut scales = ScaleSet::default();
    for i in 0..y.dim() {
        scales.push(format!("theta[{}]", i + 1), AdaptiveScale::new(1.0, cfg));
    }
    let sigma2_scale = scales.push("sigma2", AdaptiveScale::new(1.0, cfg));
    let theta0 = theta.iter().sum::<f64>() / theta.len() as f64;
    let mut model = Bhm {
        y,
        theta,
        loglik,
        theta0,
        sigma2: spec.sigma2.initial(),
        g0: spec.mean_prior_mean.unwrap_or_else(|| rates.mean_logit_q0()),
        spec: *spec,
        scales,
        sigma2_scale,
    };
    drive(&mut model, cfg, rng)
}
