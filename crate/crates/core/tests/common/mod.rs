//! Quadrature oracles and small helpers shared by the integration tests.
#![allow(dead_code)]

use basket_core::stats::{binomial_loglik_logit, inv_logit, ln_gamma};

/// Composite Simpson rule with `n` (even) intervals.
pub fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    assert!(n % 2 == 0);
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for k in 1..n {
        let w = if k % 2 == 1 { 4.0 } else { 2.0 };
        s += w * f(a + k as f64 * h);
    }
    s * h / 3.0
}

fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Log density (up to a constant shared by all `x`) of `x ~ N(mean, v0 + s)`
/// with `s ~ IG(shape, rate)`, integrated over `u = ln s` on a fine grid.
pub struct ScaleMixture {
    mean: f64,
    v0: f64,
    ln_w: Vec<f64>,
    var: Vec<f64>,
}

impl ScaleMixture {
    pub fn inv_gamma(mean: f64, v0: f64, shape: f64, rate: f64) -> Self {
        let (lo, hi, k) = (-30.0, 80.0, 4400);
        let h = (hi - lo) / k as f64;
        let norm = shape * rate.ln() - ln_gamma(shape).unwrap();
        let mut ln_w = Vec::with_capacity(k + 1);
        let mut var = Vec::with_capacity(k + 1);
        for j in 0..=k {
            let u = lo + j as f64 * h;
            // IG density in u, including the Jacobian e^u, times the rule weight
            let simpson = if j == 0 || j == k { 1.0 } else if j % 2 == 1 { 4.0 } else { 2.0 };
            ln_w.push(norm - shape * u - rate * (-u).exp() + (simpson * h / 3.0f64).ln());
            var.push(v0 + u.exp());
        }
        Self { mean, v0, ln_w, var }
    }

    pub fn ln_pdf(&self, x: f64) -> f64 {
        let d2 = (x - self.mean) * (x - self.mean);
        let terms: Vec<f64> = self
            .ln_w
            .iter()
            .zip(&self.var)
            .map(|(w, v)| w - 0.5 * (2.0 * std::f64::consts::PI * v).ln() - 0.5 * d2 / v)
            .collect();
        log_sum_exp(&terms)
    }
}

/// Posterior mean of `p = logistic(θ)` for one binomial observation under the
/// log-odds prior `ln_prior`.
pub fn posterior_mean_p(n: f64, r: f64, ln_prior: impl Fn(f64) -> f64) -> f64 {
    let (a, b, k) = (-25.0, 25.0, 5000);
    let h = (b - a) / k as f64;
    let ln_post: Vec<f64> = (0..=k)
        .map(|j| {
            let t = a + j as f64 * h;
            binomial_loglik_logit(t, n, r) + ln_prior(t)
        })
        .collect();
    let m = ln_post.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let (mut num, mut den) = (0.0, 0.0);
    for (j, lp) in ln_post.iter().enumerate() {
        let w = if j == 0 || j == k { 1.0 } else if j % 2 == 1 { 4.0 } else { 2.0 };
        let d = w * (lp - m).exp();
        den += d;
        num += d * inv_logit(a + j as f64 * h);
    }
    num / den
}

/// Mean of per-chain estimates and its standard error.
pub fn mean_and_se(x: &[f64]) -> (f64, f64) {
    let k = x.len() as f64;
    let m = x.iter().sum::<f64>() / k;
    let var = x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (k - 1.0);
    (m, (var / k).sqrt())
}

/// One line of the acceptance report.
pub fn report(id: &str, pass: bool, detail: &str) {
    println!("[{}] criterion {id}: {detail}", if pass { "PASS" } else { "FAIL" });
}

/// MCMC estimate of a posterior mean over independent chains, next to its oracle.
#[derive(Debug, Clone)]
pub struct LimitCheck {
    pub name: String,
    pub estimate: f64,
    pub se: f64,
    pub oracle: f64,
    /// Standard error of the oracle when it is itself a Monte Carlo estimate.
    pub oracle_se: f64,
}

impl LimitCheck {
    pub fn passes(&self) -> bool {
        let se = (self.se * self.se + self.oracle_se * self.oracle_se).sqrt();
        (self.estimate - self.oracle).abs() < 3.0 * se
    }
}

impl std::fmt::Display for LimitCheck {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{}: {:.5} (se {:.5}) vs {:.5}",
            self.name, self.estimate, self.se, self.oracle
        )
    }
}

pub mod limits {
    use super::{mean_and_se, posterior_mean_p, LimitCheck, ScaleMixture};
    use basket_core::divergence::IndicationData;
    use basket_core::inference::{
        fit_bhm, fit_exnex, fit_independent, fit_liu_bhmm, sample_independent, BhmSpec, ExnexSpec, ExnexWeights,
        IndependentSpec, LiuSpec, McmcConfig, Rates,
    };
    use basket_core::stats::{logit, normal_ln_pdf, RngStream};

    const CHAINS: u64 = 10;

    fn data(pairs: &[(u32, u32)]) -> Vec<IndicationData> {
        pairs.iter().map(|&(n, r)| IndicationData::new(n, r).unwrap()).collect()
    }

    /// Per-chain posterior means, one row per chain.
    fn chains(seed: u64, mut f: impl FnMut(&mut RngStream) -> Vec<f64>) -> Vec<Vec<f64>> {
        (0..CHAINS).map(|s| f(&mut RngStream::new(seed + s, 0))).collect()
    }

    fn summary(runs: &[Vec<f64>], i: usize) -> (f64, f64) {
        mean_and_se(&runs.iter().map(|r| r[i]).collect::<Vec<_>>())
    }

    pub fn independent() -> Vec<LimitCheck> {
        let d = data(&[(24, 10), (14, 2)]);
        let spec = IndependentSpec::default();
        let exact = fit_independent(&d, &spec).unwrap();
        let runs = chains(900, |rng| {
            let s = sample_independent(&d, &spec, 10_000, rng).unwrap();
            (0..2).map(|i| s.mean(i)).collect()
        });
        (0..2)
            .map(|i| {
                let (estimate, se) = summary(&runs, i);
                LimitCheck {
                    name: format!("independent analytic, indication {}", i + 1),
                    estimate,
                    se,
                    oracle: exact[i].mean(),
                    oracle_se: 0.0,
                }
            })
            .collect()
    }

    pub fn bhm_single() -> Vec<LimitCheck> {
        let d = data(&[(24, 10)]);
        let rates = Rates::common(0.2, 0.4, 1);
        let prior = ScaleMixture::inv_gamma(logit(0.2).unwrap(), 1000.0, 0.001, 0.001);
        let oracle = posterior_mean_p(24.0, 10.0, |t| prior.ln_pdf(t));
        let runs = chains(910, |rng| {
            vec![fit_bhm(&d, &rates, &BhmSpec::default(), &McmcConfig::default(), rng).unwrap().mean(0)]
        });
        let (estimate, se) = summary(&runs, 0);
        vec![LimitCheck {
            name: "BHM single indication vs quadrature".into(),
            estimate,
            se,
            oracle,
            oracle_se: 0.0,
        }]
    }

    pub fn exnex_nex() -> Vec<LimitCheck> {
        let d = data(&[(24, 10), (24, 3), (14, 1)]);
        let rates = Rates::common(0.2, 0.4, 3);
        let spec = ExnexSpec {
            weights: ExnexWeights::Fixed { pi: 0.0 },
            ..ExnexSpec::default()
        };
        let m0 = logit(0.2).unwrap();
        let runs = chains(920, |rng| {
            let s = fit_exnex(&d, &rates, &spec, &McmcConfig::default(), rng).unwrap();
            (0..3).map(|i| s.mean(i)).collect()
        });
        d.iter()
            .enumerate()
            .map(|(i, y)| {
                let (estimate, se) = summary(&runs, i);
                LimitCheck {
                    name: format!("EXNEX all-NEX vs quadrature, indication {}", i + 1),
                    estimate,
                    se,
                    oracle: posterior_mean_p(y.n() as f64, y.r() as f64, |t| normal_ln_pdf(t, m0, 1.0 / 0.15)),
                    oracle_se: 0.0,
                }
            })
            .collect()
    }

    pub fn exnex_ex() -> Vec<LimitCheck> {
        let d = data(&[(24, 10), (24, 3), (24, 6)]);
        let rates = Rates::common(0.2, 0.4, 3);
        let ex = ExnexSpec {
            weights: ExnexWeights::Fixed { pi: 1.0 },
            ..ExnexSpec::default()
        };
        let bhm = BhmSpec {
            mean_prior_mean: Some(ex.mu0_mean),
            mean_prior_var: ex.mu0_var,
            sigma2: ex.sigma0_2,
        };
        let cfg = McmcConfig::default();
        let a = chains(930, |rng| {
            let s = fit_exnex(&d, &rates, &ex, &cfg, rng).unwrap();
            (0..3).map(|i| s.mean(i)).collect()
        });
        let b = chains(940, |rng| {
            let s = fit_bhm(&d, &rates, &bhm, &cfg, rng).unwrap();
            (0..3).map(|i| s.mean(i)).collect()
        });
        (0..3)
            .map(|i| {
                let (estimate, se) = summary(&a, i);
                let (oracle, oracle_se) = summary(&b, i);
                LimitCheck {
                    name: format!("EXNEX all-EX vs matched BHM, indication {}", i + 1),
                    estimate,
                    se,
                    oracle,
                    oracle_se,
                }
            })
            .collect()
    }

    pub fn liu_single() -> Vec<LimitCheck> {
        let d = data(&[(24, 7)]);
        let rates = Rates::common(0.2, 0.4, 1);
        let spec = LiuSpec::default();
        let c1 = ScaleMixture::inv_gamma(logit(0.2).unwrap(), spec.tau1_2, 0.1, 0.1);
        let c2 = ScaleMixture::inv_gamma(logit(0.4).unwrap(), spec.tau2_2, 0.1, 0.1);
        let ln_prior = |t: f64| {
            let (a, b) = (spec.pi.ln() + c1.ln_pdf(t), (1.0 - spec.pi).ln() + c2.ln_pdf(t));
            let m = a.max(b);
            m + ((a - m).exp() + (b - m).exp()).ln()
        };
        let oracle = posterior_mean_p(24.0, 7.0, ln_prior);
        let runs = chains(950, |rng| {
            vec![fit_liu_bhmm(&d, &rates, &spec, &McmcConfig::default(), rng).unwrap().mean(0)]
        });
        let (estimate, se) = summary(&runs, 0);
        vec![LimitCheck {
            name: "mixture model single indication vs quadrature".into(),
            estimate,
            se,
            oracle,
            oracle_se: 0.0,
        }]
    }
}
