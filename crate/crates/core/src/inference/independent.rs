use rand::Rng;

use super::{IndependentSpec, PosteriorSamples};
use crate::divergence::IndicationData;
use crate::error::Result;
use crate::stats::{beta_posterior, BetaParams};

/// Conjugate posteriors `Beta(α + r_i, β + n_i − r_i)`.
pub fn fit_independent(data: &[IndicationData], spec: &IndependentSpec) -> Result<Vec<BetaParams>> {
    let prior = BetaParams::new(spec.prior_alpha, spec.prior_beta)?;
    data.iter()
        .map(|d| beta_posterior(d.n() as f64, d.r() as f64, prior))
        .collect()
}

/// I.i.d. draws from the conjugate posteriors, for parity with the MCMC models.
pub fn sample_independent<R: Rng + ?Sized>(
    data: &[IndicationData],
    spec: &IndependentSpec,
    draws: usize,
    rng: &mut R,
) -> Result<PosteriorSamples> {
    let post = fit_independent(data, spec)?;
    let mut out = Vec::with_capacity(draws * post.len());
    for _ in 0..draws {
        for b in &post {
            out.push(super::to_rate(crate::stats::logit(b.sample(rng).clamp(1e-300, 1.0 - 1e-16))?));
        }
    }
    PosteriorSamples::new(post.len(), out)
}
