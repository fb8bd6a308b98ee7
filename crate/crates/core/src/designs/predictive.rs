use rand::Rng;
use rand_distr::{Binomial, Distribution};

use crate::error::{Error, Result};
use crate::stats::{log_beta_fn, ln_gamma, BetaParams};

/// Bayesian predictive probability that the end-of-trial response rate exceeds `q0`.
///
/// Stage-1 data `(n1, r1)` update a `Beta(0.5, 0.5)` prior; `n2` further patients
/// are predicted from the beta-binomial. With `draws = 0` the predictive mass is
/// summed exactly; otherwise `draws` Monte Carlo draws are used.
pub fn predictive_power<R: Rng + ?Sized>(
    n1: u32,
    r1: u32,
    n2: u32,
    n: u32,
    q0: f64,
    draws: usize,
    rng: &mut R,
) -> Result<f64> {
    if n != n1 + n2 {
        return Err(Error::Argument(format!("n = {n} must equal n1 + n2 = {}", n1 + n2)));
    }
    if r1 > n1 {
        return Err(Error::Argument(format!("r1 = {r1} exceeds n1 = {n1}")));
    }
    if draws == 0 {
        return predictive_power_exact(n1, r1, n2, q0);
    }
    let post = BetaParams::new(r1 as f64 + 0.5, (n1 - r1) as f64 + 0.5)?;
    let mut hits = 0usize;
    for _ in 0..draws {
        let p = post.sample(rng).clamp(0.0, 1.0);
        let r2 = Binomial::new(n2 as u64, p)
            .map_err(|e| Error::Numerical(e.to_string()))?
            .sample(rng) as u32;
        if (r1 + r2) as f64 / n as f64 > q0 {
            hits += 1;
        }
    }
    Ok(hits as f64 / draws as f64)
}

/// Exact beta-binomial summation behind [`predictive_power`].
pub fn predictive_power_exact(n1: u32, r1: u32, n2: u32, q0: f64) -> Result<f64> {
    if r1 > n1 {
        return Err(Error::Argument(format!("r1 = {r1} exceeds n1 = {n1}")));
    }
    let (a, b) = (r1 as f64 + 0.5, (n1 - r1) as f64 + 0.5);
    let n = (n1 + n2) as f64;
    let ln_b0 = log_beta_fn(a, b)?;
    let ln_fact = |k: u32| ln_gamma(k as f64 + 1.0);
    let ln_n2 = ln_fact(n2)?;
    let mut total = 0.0;
    for r2 in 0..=n2 {
        if (r1 + r2) as f64 / n <= q0 {
            continue;
        }
        let ln_choose = ln_n2 - ln_fact(r2)? - ln_fact(n2 - r2)?;
        let ln_mass =
            ln_choose + log_beta_fn(a + r2 as f64, b + (n2 - r2) as f64)? - ln_b0;
        total += ln_mass.exp();
    }
    Ok(total.min(1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::RngStream;

    #[test]
    fn all_responders() {
        assert!(predictive_power_exact(14, 14, 10, 0.2).unwrap() >= 0.999);
    }

    #[test]
    fn no_responders_is_futile() {
        assert!(predictive_power_exact(14, 0, 10, 0.2).unwrap() < 0.5);
    }

    #[test]
    fn monotone_in_stage_one_responders() {
        let mut last = 0.0;
        for r1 in 0..=14 {
            let pp = predictive_power_exact(14, r1, 10, 0.2).unwrap();
            assert!(pp >= last - 1e-12, "{r1}: {pp} < {last}");
            last = pp;
        }
    }

    #[test]
    fn predictive_mass_sums_to_one() {
        // threshold below every attainable rate counts all outcomes
        let pp = predictive_power_exact(14, 3, 10, -1.0).unwrap();
        assert!((pp - 1.0).abs() < 1e-12);
    }

    #[test]
    fn monte_carlo_matches_exact() {
        let exact = predictive_power_exact(14, 3, 10, 0.2).unwrap();
        let mut rng = RngStream::new(11, 0);
        let m = 40_000;
        let mc = predictive_power(14, 3, 10, 24, 0.2, m, &mut rng).unwrap();
        let se = (exact * (1.0 - exact) / m as f64).sqrt();
        assert!((mc - exact).abs() < 4.0 * se, "{mc} vs {exact}");
    }

    #[test]
    fn size_mismatch_rejected() {
        let mut rng = RngStream::new(0, 0);
        assert!(predictive_power(14, 3, 10, 25, 0.2, 0, &mut rng).is_err());
    }
}
