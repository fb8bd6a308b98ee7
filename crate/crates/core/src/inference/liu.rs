//! Two-component normal mixture on the log-odds, with component means and
//! variances learned from the data.

use rand::Rng;

use super::mcmc::{log_add_exp, normal_draw, theta_step, update_variance, AdaptiveScale, ScaleSet};
use super::{drive, Binomials, LiuSpec, McmcConfig, PosteriorSamples, Rates, Sweeper, VariancePrior};
use crate::divergence::IndicationData;
use crate::error::Result;
use crate::stats::{logit, normal_ln_pdf};

struct Liu {
    y: Binomials,
    theta: Vec<f64>,
    loglik: Vec<f64>,
    /// `true` when the indication belongs to the null-centred component.
    first: Vec<bool>,
    mu: [f64; 2],
    var: [f64; 2],
    g: [f64; 2],
    tau2: [f64; 2],
    var_prior: [VariancePrior; 2],
    pi: f64,
    scales: ScaleSet,
    var_scales: [usize; 2],
}

impl Sweeper for Liu {
    fn sweep<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<()> {
        let (mu, var) = (self.mu, self.var);
        let (ln_pi, ln_1m) = (self.pi.ln(), (1.0 - self.pi).ln());
        let (ca, cb) = (ln_pi + normal_ln_pdf(0.0, 0.0, var[0]), ln_1m + normal_ln_pdf(0.0, 0.0, var[1]));
        let (ha, hb) = (0.5 / var[0], 0.5 / var[1]);
        let ln_a = |t: f64| ca - ha * (t - mu[0]) * (t - mu[0]);
        let ln_b = |t: f64| cb - hb * (t - mu[1]) * (t - mu[1]);
        for i in 0..self.theta.len() {
            theta_step(
                &mut self.theta[i],
                &mut self.loglik[i],
                self.y.n[i],
                self.y.r[i],
                &mut self.scales.scales[i],
                rng,
                |t| log_add_exp(ln_a(t), ln_b(t)),
            );
            let t = self.theta[i];
            let p_first = 1.0 / (1.0 + (ln_b(t) - ln_a(t)).exp());
            self.first[i] = rng.random::<f64>() < p_first;
        }
        for c in 0..2 {
            let member = |f: bool| f == (c == 0);
            let mut k = 0.0;
            let mut sum = 0.0;
            for (t, &f) in self.theta.iter().zip(&self.first) {
                if member(f) {
                    k += 1.0;
                    sum += t;
                }
            }
            let prec = 1.0 / self.tau2[c] + k / self.var[c];
            let mean = (self.g[c] / self.tau2[c] + sum / self.var[c]) / prec;
            self.mu[c] = normal_draw(rng, mean, 1.0 / prec);
            let m = self.mu[c];
            let ss: f64 = self
                .theta
                .iter()
                .zip(&self.first)
                .filter(|(_, &f)| member(f))
                .map(|(t, _)| (t - m) * (t - m))
                .sum();
            let prior = self.var_prior[c];
            update_variance(
                &mut self.var[c],
                &prior,
                k,
                ss,
                &mut self.scales.scales[self.var_scales[c]],
                rng,
            );
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

pub fn fit_liu_bhmm<R: Rng + ?Sized>(
    data: &[IndicationData],
    rates: &Rates,
    spec: &LiuSpec,
    cfg: &McmcConfig,
    rng: &mut R,
) -> Result<PosteriorSamples> {
    rates.validate(data.len())?;
    super::ModelSpec::Liu(*spec).validate()?;
    let y = Binomials::new(data)?;
    let dim = y.dim();
    let mean_logit = |v: &[f64]| -> Result<f64> {
        Ok(v.iter().map(|&q| logit(q)).collect::<Result<Vec<_>>>()?.iter().sum::<f64>()
            / v.len() as f64)
    };
    let g = [
        spec.g1.map_or_else(|| mean_logit(&rates.q0), Ok)?,
        spec.g2.map_or_else(|| mean_logit(&rates.q1), Ok)?,
    ];
    let theta = y.init_theta();
    let loglik = (0..dim)
        .map(|i| crate::stats::binomial_loglik_logit(theta[i], y.n[i], y.r[i]))
        .collect();
    let mid = 0.5 * (g[0] + g[1]);
    let first = theta.iter().map(|&t| t < mid).collect();
    let mut scales = ScaleSet::default();
    for i in 0..dim {
        scales.push(format!("theta[{}]", i + 1), AdaptiveScale::new(1.0, cfg));
    }
    let var_scales = [
        scales.push("sigma1_2", AdaptiveScale::new(1.0, cfg)),
        scales.push("sigma2_2", AdaptiveScale::new(1.0, cfg)),
    ];
    let mut model = Liu {
        y,
        theta,
        loglik,
        first,
        mu: g,
        var: [spec.sigma1_2.initial(), spec.sigma2_2.initial()],
        g,
        tau2: [spec.tau1_2, spec.tau2_2],
        var_prior: [spec.sigma1_2, spec.sigma2_2],
        pi: spec.pi,
        scales,
        var_scales,
    };
    drive(&mut model, cfg, rng)
}
