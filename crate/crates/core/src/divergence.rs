//! Distances between the beta posteriors of two indications.
//!
//! Each indication's response rate has posterior `Beta(1 + r, 1 + n - r)` under
//! the flat prior. Three measures are provided:
//!
//! * Bhattacharyya: `-ln ∫ sqrt(f_i f_j)`
//! * Hellinger: `sqrt(1 - ∫ sqrt(f_i f_j))`
//! * symmetrized Kullback-Leibler: the mean of the two directed divergences
//!
//! All three have closed forms in terms of `ln B` and digamma. A quadrature
//! oracle evaluates the defining integrals directly for verification.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats::{digamma_unchecked, log_beta_unchecked, BetaParams};

/// Enrollment and responder counts of one indication.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct IndicationData {
    n: u32,
    r: u32,
}

impl IndicationData {
    pub fn new(n: u32, r: u32) -> Result<Self> {
        if r > n {
            return Err(Error::Argument(format!("responders {r} exceed enrolled {n}")));
        }
        Ok(Self { n, r })
    }

    pub fn n(&self) -> u32 {
        self.n
    }

    pub fn r(&self) -> u32 {
        self.r
    }
}

/// Counts with a possibly non-integer responder count (after tie-breaking).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResponseCounts {
    pub n: f64,
    pub r: f64,
}

impl ResponseCounts {
    pub fn new(n: f64, r: f64) -> Result<Self> {
        if !(n >= 0.0) || !(r >= 0.0) || r > n || !n.is_finite() {
            return Err(Error::Argument(format!("invalid counts n={n}, r={r}")));
        }
        Ok(Self { n, r })
    }

    pub fn rate(&self) -> f64 {
        if self.n > 0.0 {
            self.r / self.n
        } else {
            0.0
        }
    }

    pub fn posterior(&self, prior: BetaParams) -> BetaParams {
        BetaParams::new(prior.alpha() + self.r, prior.beta() + self.n - self.r)
            .expect("validated counts give positive shapes")
    }

    fn flat_posterior(&self) -> BetaParams {
        self.posterior(BetaParams::uniform())
    }
}

impl From<IndicationData> for ResponseCounts {
    fn from(d: IndicationData) -> Self {
        Self {
            n: d.n as f64,
            r: d.r as f64,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistanceMeasure {
    Bhattacharyya,
    Hellinger,
    SymmetrizedKl,
}

impl DistanceMeasure {
    pub const ALL: [DistanceMeasure; 3] = [
        DistanceMeasure::Bhattacharyya,
        DistanceMeasure::Hellinger,
        DistanceMeasure::SymmetrizedKl,
    ];

    pub fn short_name(&self) -> &'static str {
        match self {
            DistanceMeasure::Bhattacharyya => "b",
            DistanceMeasure::Hellinger => "h",
            DistanceMeasure::SymmetrizedKl => "kl",
        }
    }
}

impl fmt::Display for DistanceMeasure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.short_name())
    }
}

impl FromStr for DistanceMeasure {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "b" | "bhattacharyya" => Ok(DistanceMeasure::Bhattacharyya),
            "h" | "hellinger" => Ok(DistanceMeasure::Hellinger),
            "kl" | "symmetrized_kl" | "kullback_leibler" => Ok(DistanceMeasure::SymmetrizedKl),
            other => Err(Error::Argument(format!("unknown distance measure `{other}`"))),
        }
    }
}

/// Log of the Bhattacharyya coefficient between two beta densities.
pub fn ln_bhattacharyya_coefficient(p: BetaParams, q: BetaParams) -> f64 {
    log_beta_unchecked(0.5 * (p.alpha() + q.alpha()), 0.5 * (p.beta() + q.beta()))
        - 0.5 * (log_beta_unchecked(p.alpha(), p.beta()) + log_beta_unchecked(q.alpha(), q.beta()))
}

pub fn beta_b_distance(p: BetaParams, q: BetaParams) -> f64 {
    (-ln_bhattacharyya_coefficient(p, q)).max(0.0)
}

pub fn beta_h_distance(p: BetaParams, q: BetaParams) -> f64 {
    (-(-beta_b_distance(p, q)).exp_m1()).max(0.0).sqrt()
}

/// Directed divergence `KL(p ‖ q)`.
pub fn beta_kl(p: BetaParams, q: BetaParams) -> f64 {
    let (a1, b1, a2, b2) = (p.alpha(), p.beta(), q.alpha(), q.beta());
    log_beta_unchecked(a2, b2) - log_beta_unchecked(a1, b1)
        + (a1 - a2) * digamma_unchecked(a1)
        + (b1 - b2) * digamma_unchecked(b1)
        + (a2 - a1 + b2 - b1) * digamma_unchecked(a1 + b1)
}

pub fn beta_symmetrized_kl(p: BetaParams, q: BetaParams) -> f64 {
    (0.5 * (beta_kl(p, q) + beta_kl(q, p))).max(0.0)
}

pub fn beta_distance(measure: DistanceMeasure, p: BetaParams, q: BetaParams) -> f64 {
    match measure {
        DistanceMeasure::Bhattacharyya => beta_b_distance(p, q),
        DistanceMeasure::Hellinger => beta_h_distance(p, q),
        DistanceMeasure::SymmetrizedKl => beta_symmetrized_kl(p, q),
    }
}

pub fn b_distance(di: ResponseCounts, dj: ResponseCounts) -> f64 {
    beta_b_distance(di.flat_posterior(), dj.flat_posterior())
}

pub fn h_distance(di: ResponseCounts, dj: ResponseCounts) -> f64 {
    beta_h_distance(di.flat_posterior(), dj.flat_posterior())
}

pub fn kl_distance(di: ResponseCounts, dj: ResponseCounts) -> f64 {
    beta_symmetrized_kl(di.flat_posterior(), dj.flat_posterior())
}

pub fn distance(measure: DistanceMeasure, di: ResponseCounts, dj: ResponseCounts) -> f64 {
    beta_distance(measure, di.flat_posterior(), dj.flat_posterior())
}

pub const MIN_ORACLE_POINTS: usize = 10_000;

/// Evaluates the defining integral of `measure` by quadrature, under the flat prior.
pub fn numeric_distance_oracle(
    measure: DistanceMeasure,
    di: ResponseCounts,
    dj: ResponseCounts,
    grid_points: usize,
) -> Result<f64> {
    numeric_beta_distance(measure, di.flat_posterior(), dj.flat_posterior(), grid_points)
}

/// Quadrature evaluation of a distance between two beta densities.
///
/// Uses the double-exponential substitution `p = logistic(π sinh t)` with the
/// trapezoid rule on `t ∈ [-4, 4]`. Nodes never touch the endpoints and the
/// substitution damps the endpoint singularities of `ln f`. Normalizing
/// constants are integrated numerically rather than taken from `ln B`.
pub fn numeric_beta_distance(
    measure: DistanceMeasure,
    p: BetaParams,
    q: BetaParams,
    grid_points: usize,
) -> Result<f64> {
    if grid_points < MIN_ORACLE_POINTS {
        return Err(Error::Argument(format!(
            "quadrature oracle needs at least {MIN_ORACLE_POINTS} points, got {grid_points}"
        )));
    }
    const HALF_WIDTH: f64 = 4.0;
    let h = 2.0 * HALF_WIDTH / (grid_points - 1) as f64;
    let mut lf_p = Vec::with_capacity(grid_points);
    let mut lf_q = Vec::with_capacity(grid_points);
    let mut ln_w = Vec::with_capacity(grid_points);
    for k in 0..grid_points {
        let t = -HALF_WIDTH + k as f64 * h;
        let x = std::f64::consts::PI * t.sinh();
        let ln_p = -crate::stats::softplus(-x);
        let ln_1mp = -crate::stats::softplus(x);
        // dp/dt = π cosh t · p (1 - p)
        ln_w.push((std::f64::consts::PI * t.cosh() * h).ln() + ln_p + ln_1mp);
        lf_p.push((p.alpha() - 1.0) * ln_p + (p.beta() - 1.0) * ln_1mp);
        lf_q.push((q.alpha() - 1.0) * ln_p + (q.beta() - 1.0) * ln_1mp);
    }
    let shift = |lf: &[f64]| -> f64 {
        lf.iter()
            .zip(&ln_w)
            .map(|(f, w)| f + w)
            .fold(f64::NEG_INFINITY, f64::max)
    };
    let (sp, sq) = (shift(&lf_p), shift(&lf_q));
    let mut z_p = 0.0;
    let mut z_q = 0.0;
    for k in 0..grid_points {
        z_p += (lf_p[k] + ln_w[k] - sp).exp();
        z_q += (lf_q[k] + ln_w[k] - sq).exp();
    }
    let (ln_zp, ln_zq) = (z_p.ln() + sp, z_q.ln() + sq);

    let value = match measure {
        DistanceMeasure::Bhattacharyya => {
            let mut bc = 0.0;
            for k in 0..grid_points {
                bc += (0.5 * (lf_p[k] - ln_zp) + 0.5 * (lf_q[k] - ln_zq) + ln_w[k]).exp();
            }
            (-bc.ln()).max(0.0)
        }
        DistanceMeasure::Hellinger => {
            // ½∫(√f − √g)² directly; 1 − BC would cancel near the diagonal
            let mut h2 = 0.0;
            for k in 0..grid_points {
                let d = (0.5 * (lf_p[k] - ln_zp + ln_w[k])).exp() - (0.5 * (lf_q[k] - ln_zq + ln_w[k])).exp();
                h2 += 0.5 * d * d;
            }
            h2.sqrt()
        }
        DistanceMeasure::SymmetrizedKl => {
            let mut kl_pq = 0.0;
            let mut kl_qp = 0.0;
            for k in 0..grid_points {
                let lp = lf_p[k] - ln_zp;
                let lq = lf_q[k] - ln_zq;
                let wp = (lp + ln_w[k]).exp();
                let wq = (lq + ln_w[k]).exp();
                if wp > 0.0 {
                    kl_pq += wp * (lp - lq);
                }
                if wq > 0.0 {
                    kl_qp += wq * (lq - lp);
                }
            }
            (0.5 * (kl_pq + kl_qp)).max(0.0)
        }
    };
    if !value.is_finite() {
        return Err(Error::Numerical(format!(
            "quadrature for {measure} produced a non-finite value"
        )));
    }
    Ok(value)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(n: u32, r: u32) -> ResponseCounts {
        IndicationData::new(n, r).unwrap().into()
    }

    #[test]
    fn identical_inputs_have_zero_distance() {
        for m in DistanceMeasure::ALL {
            assert_eq!(distance(m, c(24, 10), c(24, 10)), 0.0);
        }
        let h = numeric_distance_oracle(DistanceMeasure::Hellinger, c(24, 10), c(24, 10), 20_000)
            .unwrap();
        assert_eq!(h, 0.0);
    }

    #[test]
    fn closed_forms_agree_with_quadrature() {
        let b = b_distance(c(24, 10), c(24, 0));
        let bo =
            numeric_distance_oracle(DistanceMeasure::Bhattacharyya, c(24, 10), c(24, 0), 200_000)
                .unwrap();
        assert!((b - bo).abs() < 1e-8, "{b} vs {bo}");

        let kl = kl_distance(c(24, 10), c(24, 12));
        let klo =
            numeric_distance_oracle(DistanceMeasure::SymmetrizedKl, c(24, 10), c(24, 12), 200_000)
                .unwrap();
        assert!((kl - klo).abs() < 1e-6, "{kl} vs {klo}");

        let kl = kl_distance(c(24, 10), c(24, 20));
        let klo =
            numeric_distance_oracle(DistanceMeasure::SymmetrizedKl, c(24, 10), c(24, 20), 200_000)
                .unwrap();
        assert!((kl - klo).abs() < 1e-6, "{kl} vs {klo}");
    }

    #[test]
    fn hellinger_is_function_of_bhattacharyya() {
        let (x, y) = (c(24, 3), c(14, 9));
        let bc = (-b_distance(x, y)).exp();
        assert!((h_distance(x, y) - (1.0 - bc).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn oracle_rejects_coarse_grids() {
        assert!(matches!(
            numeric_distance_oracle(DistanceMeasure::Hellinger, c(4, 1), c(4, 2), 100),
            Err(Error::Argument(_))
        ));
    }

    #[test]
    fn non_flat_priors_are_injectable() {
        let j = BetaParams::new(0.5, 0.5).unwrap();
        let p = c(14, 5).posterior(j);
        let q = c(14, 0).posterior(j);
        let closed = beta_b_distance(p, q);
        let numeric =
            numeric_beta_distance(DistanceMeasure::Bhattacharyya, p, q, 200_000).unwrap();
        assert!((closed - numeric).abs() < 1e-8);
    }

    #[test]
    fn measure_parsing() {
        assert_eq!("B".parse::<DistanceMeasure>().unwrap(), DistanceMeasure::Bhattacharyya);
        assert_eq!("kl".parse::<DistanceMeasure>().unwrap(), DistanceMeasure::SymmetrizedKl);
        assert!("x".parse::<DistanceMeasure>().is_err());
    }
}
