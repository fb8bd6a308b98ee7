//! Special functions, elementary distributions, link functions and random streams.

mod dist;
mod rng;
mod special;

pub use dist::{
    beta_posterior, beta_tail_prob, binomial_loglik_logit, gamma_ln_pdf, inv_gamma_ln_pdf,
    inv_logit, logit, normal_ln_pdf, sample_inv_gamma, softplus, standard_normal, BetaParams,
    LN_2PI,
};
pub use rng::{mix_seed, RngStream};
pub use special::{
    chi_square_sf, digamma, ln_gamma, log_beta_fn, regularized_beta_pair, regularized_gamma_q,
};

pub(crate) use special::{digamma_unchecked, log_beta_unchecked};
