//! Hierarchical model whose log-odds share a correlated prior.
//!
//! `θ = θ0·1 + η + ε` with `η ~ MVN(0, σ²R(φ))` and `ε ~ N(0, τ²I)`. The
//! sampler works with `θ ~ MVN(θ0·1, Σ)`, `Σ = σ²R(φ) + τ²I`, and caches the
//! precision `P = Σ⁻¹` together with `P(θ − θ0·1)` and `P·1`, so each log-odds
//! update costs `O(I)`. Hyperparameters that change `Σ` are proposed on the log
//! scale and need a fresh Cholesky factorization; a proposal whose covariance
//! cannot be factorized even after jitter is rejected.

use rand::Rng;

use super::mcmc::{
    metropolis_accept, normal_draw, theta_step, update_variance, AdaptiveScale, ScaleSet,
};
use super::{drive, Binomials, CbhmSpec, McmcConfig, PosteriorSamples, Rates, Sweeper};
use crate::divergence::{IndicationData, ResponseCounts};
use crate::error::{Error, Result};
use crate::kernel::{preprocess_ties, DistanceMatrix};
use crate::linalg::Cholesky;
use crate::stats::{logit, standard_normal};

/// Full parameter state of the correlated model (with `η` marginalized).
#[derive(Debug, Clone, PartialEq)]
pub struct CbhmState {
    pub theta: Vec<f64>,
    pub theta0: f64,
    pub sigma2: f64,
    pub tau2: f64,
    pub sigma0_2: f64,
    pub phi: f64,
}

struct Cbhm {
    y: Binomials,
    state: CbhmState,
    loglik: Vec<f64>,
    mu0: f64,
    spec: CbhmSpec,
    jitter: Vec<f64>,
    /// `d_ij` or `d_ij²`, depending on the kernel.
    dpow: Vec<f64>,
    corr: Vec<f64>,
    corr_prop: Vec<f64>,
    cov: Vec<f64>,
    chol: Cholesky,
    chol_prop: Cholesky,
    scratch: Vec<f64>,
    work: Vec<f64>,
    prec: Vec<f64>,
    pu: Vec<f64>,
    p1: Vec<f64>,
    s1: f64,
    logdet: f64,
    scales: ScaleSet,
    hyper: [usize; 3],
    sigma0_scale: usize,
    singular: usize,
    attempts: usize,
}

impl Cbhm {
    fn dim(&self) -> usize {
        self.state.theta.len()
    }

    fn fill_corr(dpow: &[f64], dim: usize, phi: f64, out: &mut [f64]) {
        for i in 0..dim {
            out[i * dim + i] = 1.0;
            for j in (i + 1)..dim {
                let v = (-phi * dpow[i * dim + j]).exp();
                out[i * dim + j] = v;
                out[j * dim + i] = v;
            }
        }
    }

    /// Factorizes `σ²R + τ²I` into `chol_prop`, with `R` taken from `corr_prop`
    /// when `use_prop` is set.
    fn factor_proposal(&mut self, sigma2: f64, tau2: f64, use_prop: bool) -> bool {
        let dim = self.dim();
        let corr = if use_prop { &self.corr_prop } else { &self.corr };
        for (c, r) in self.cov.iter_mut().zip(corr) {
            *c = sigma2 * r;
        }
        for i in 0..dim {
            self.cov[i * dim + i] += tau2;
        }
        self.attempts += 1;
        let ok = self.chol_prop.refactor(&self.cov, &self.jitter).is_ok();
        if !ok {
            self.singular += 1;
        }
        ok
    }

    /// Makes `chol_prop` the current factor and refreshes the cached products.
    fn accept_proposal(&mut self) {
        std::mem::swap(&mut self.chol, &mut self.chol_prop);
        let dim = self.dim();
        self.chol.inverse_into(&mut self.prec, &mut self.work);
        self.logdet = self.chol.log_det();
        let t0 = self.state.theta0;
        for i in 0..dim {
            let row = &self.prec[i * dim..(i + 1) * dim];
            let mut a = 0.0;
            let mut b = 0.0;
            for (p, t) in row.iter().zip(&self.state.theta) {
                a += p * (t - t0);
                b += p;
            }
            self.pu[i] = a;
            self.p1[i] = b;
        }
        self.s1 = self.p1.iter().sum();
    }

    fn quad_current(&self) -> f64 {
        self.state
            .theta
            .iter()
            .zip(&self.pu)
            .map(|(t, p)| (t - self.state.theta0) * p)
            .sum()
    }

    /// Metropolis step on one of σ², τ², φ; `which` indexes `hyper`.
    fn hyper_step<R: Rng + ?Sized>(&mut self, which: usize, rng: &mut R) {
        let spec = self.spec;
        let ln_prior = |v: f64| match which {
            0 => spec.sigma2.ln_density(v),
            1 => spec.tau2.ln_density(v),
            _ => spec.phi.ln_density(v),
        };
        let cur = match which {
            0 => self.state.sigma2,
            1 => self.state.tau2,
            _ => self.state.phi,
        };
        let k = self.hyper[which];
        let prop = (cur.ln() + self.scales.scales[k].scale() * standard_normal(rng)).exp();
        let prior_prop = ln_prior(prop);
        if !(prop > 0.0 && prop.is_finite()) || prior_prop == f64::NEG_INFINITY {
            self.scales.scales[k].record(false);
            return;
        }
        let (s2, t2) = match which {
            0 => (prop, self.state.tau2),
            1 => (self.state.sigma2, prop),
            _ => (self.state.sigma2, self.state.tau2),
        };
        if which == 2 {
            let dim = self.dim();
            Self::fill_corr(&self.dpow, dim, prop, &mut self.corr_prop);
        }
        if !self.factor_proposal(s2, t2, which == 2) {
            self.scales.scales[k].record(false);
            return;
        }
        let t0 = self.state.theta0;
        for (s, t) in self.scratch.iter_mut().zip(&self.state.theta) {
            *s = t - t0;
        }
        self.chol_prop.forward(&mut self.scratch);
        let quad_new: f64 = self.scratch.iter().map(|v| v * v).sum();
        let lt_new = -0.5 * (self.chol_prop.log_det() + quad_new) + prior_prop + prop.ln();
        let lt_cur = -0.5 * (self.logdet + self.quad_current()) + ln_prior(cur) + cur.ln();
        let ok = metropolis_accept(lt_new - lt_cur, rng);
        if ok {
            match which {
                0 => self.state.sigma2 = prop,
                1 => self.state.tau2 = prop,
                _ => {
                    self.state.phi = prop;
                    std::mem::swap(&mut self.corr, &mut self.corr_prop);
                }
            }
            self.accept_proposal();
        }
        self.scales.scales[k].record(ok);
    }
}

impl Sweeper for Cbhm {
    fn sweep<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<()> {
        let dim = self.dim();
        for i in 0..dim {
            let cur = self.state.theta[i];
            let (pu, pii) = (self.pu[i], self.prec[i * dim + i]);
            let ok = theta_step(
                &mut self.state.theta[i],
                &mut self.loglik[i],
                self.y.n[i],
                self.y.r[i],
                &mut self.scales.scales[i],
                rng,
                |t| {
                    let d = t - cur;
                    -d * pu - 0.5 * d * d * pii
                },
            );
            if ok {
                let d = self.state.theta[i] - cur;
                for j in 0..dim {
                    self.pu[j] += d * self.prec[j * dim + i];
                }
            }
        }

        let v0 = self.state.sigma0_2;
        let prec0 = 1.0 / v0 + self.s1;
        let lin: f64 = self.p1.iter().zip(&self.state.theta).map(|(a, t)| a * t).sum();
        let new0 = normal_draw(rng, (self.mu0 / v0 + lin) / prec0, 1.0 / prec0);
        let d0 = new0 - self.state.theta0;
        self.state.theta0 = new0;
        for j in 0..dim {
            self.pu[j] -= d0 * self.p1[j];
        }

        let dev = self.state.theta0 - self.mu0;
        let prior = self.spec.sigma0_2;
        update_variance(
            &mut self.state.sigma0_2,
            &prior,
            1.0,
            dev * dev,
            &mut self.scales.scales[self.sigma0_scale],
            rng,
        );

        for which in 0..3 {
            self.hyper_step(which, rng);
        }
        Ok(())
    }

    fn theta(&self) -> &[f64] {
        &self.state.theta
    }

    fn scales(&mut self) -> &mut ScaleSet {
        &mut self.scales
    }

    fn covariance_counts(&self) -> (usize, usize) {
        (self.singular, self.attempts)
    }
}

/// Distance matrix used by the correlated prior: ties are separated first.
pub fn cbhm_distances(data: &[IndicationData], rates: &Rates, spec: &CbhmSpec) -> Result<DistanceMatrix> {
    let counts: Vec<ResponseCounts> = data.iter().map(|&d| d.into()).collect();
    if counts.len() < 2 {
        return DistanceMatrix::from_vec(counts.len(), vec![0.0; counts.len() * counts.len()]);
    }
    let tb = preprocess_ties(&counts, &rates.q0, &rates.q1)?;
    Ok(DistanceMatrix::from_counts(spec.measure, &tb.counts))
}

pub fn fit_cbhm<R: Rng + ?Sized>(
    data: &[IndicationData],
    rates: &Rates,
    spec: &CbhmSpec,
    cfg: &McmcConfig,
    rng: &mut R,
) -> Result<PosteriorSamples> {
    rates.validate(data.len())?;
    let dist = cbhm_distances(data, rates, spec)?;
    fit_cbhm_with_distances(data, &dist, rates, spec, cfg, None, rng)
}

/// Fits with an explicit distance matrix and optional starting state.
pub fn fit_cbhm_with_distances<R: Rng + ?Sized>(
    data: &[IndicationData],
    dist: &DistanceMatrix,
    rates: &Rates,
    spec: &CbhmSpec,
    cfg: &McmcConfig,
    init: Option<CbhmState>,
    rng: &mut R,
) -> Result<PosteriorSamples> {
    rates.validate(data.len())?;
    cfg.validate()?;
    super::ModelSpec::Cbhm(*spec).validate()?;
    let y = Binomials::new(data)?;
    let dim = y.dim();
    if dist.dim() != dim {
        return Err(Error::Argument(format!(
            "distance matrix is {0}×{0}, data has {dim} indications",
            dist.dim()
        )));
    }
    let mu0 = match spec.mu0 {
        Some(m) => m,
        None => {
            let mid = rates.q0.iter().zip(&rates.q1).map(|(a, b)| 0.5 * (a + b)).sum::<f64>()
                / dim as f64;
            logit(mid)?
        }
    };
    let state = init.unwrap_or_else(|| {
        let theta = y.init_theta();
        CbhmState {
            theta0: theta.iter().sum::<f64>() / dim as f64,
            theta,
            sigma2: spec.sigma2.initial(),
            tau2: spec.tau2.initial(),
            sigma0_2: spec.sigma0_2.initial(),
            phi: spec.phi.initial(),
        }
    });
    if state.theta.len() != dim {
        return Err(Error::Init("initial state has the wrong dimension".into()));
    }
    let loglik = (0..dim)
        .map(|i| crate::stats::binomial_loglik_logit(state.theta[i], y.n[i], y.r[i]))
        .collect();
    let dpow = dist.as_slice().iter().map(|&d| spec.corr.transform(d)).collect();

    let mut scales = ScaleSet::default();
    for i in 0..dim {
        scales.push(format!("theta[{}]", i + 1), AdaptiveScale::new(1.0, cfg));
    }
    let hyper = [
        scales.push("sigma2", AdaptiveScale::new(1.0, cfg)),
        scales.push("tau2", AdaptiveScale::new(1.0, cfg)),
        scales.push("phi", AdaptiveScale::new(1.0, cfg)),
    ];
    let sigma0_scale = scales.push("sigma0_2", AdaptiveScale::new(1.0, cfg));

    let mut model = Cbhm {
        y,
        state,
        loglik,
        mu0,
        spec: *spec,
        jitter: cfg.jitter_schedule.clone(),
        dpow,
        corr: vec![0.0; dim * dim],
        corr_prop: vec![0.0; dim * dim],
        cov: vec![0.0; dim * dim],
        chol: Cholesky::zeros(dim),
        chol_prop: Cholesky::zeros(dim),
        scratch: vec![0.0; dim],
        work: vec![0.0; dim * dim],
        prec: vec![0.0; dim * dim],
        pu: vec![0.0; dim],
        p1: vec![0.0; dim],
        s1: 0.0,
        logdet: 0.0,
        scales,
        hyper,
        sigma0_scale,
        singular: 0,
        attempts: 0,
    };
    let phi = model.state.phi;
    Cbhm::fill_corr(&model.dpow, dim, phi, &mut model.corr);
    if !model.factor_proposal(model.state.sigma2, model.state.tau2, false) {
        return Err(Error::Init("initial covariance is not positive definite".into()));
    }
    model.accept_proposal();
    model.singular = 0;
    model.attempts = 0;

    let samples = drive(&mut model, cfg, rng)?;
    if 2 * model.singular > model.attempts {
        return Err(Error::ChainFailure(format!(
            "{} of {} covariance proposals were singular",
            model.singular, model.attempts
        )));
    }
    Ok(samples)
}
