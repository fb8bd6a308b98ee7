//! Posterior computation for the five analysis models.

mod bhm;
mod cbhm;
mod exnex;
mod independent;
mod liu;
pub mod mcmc;
mod priors;

use rand::Rng;
use serde::{Deserialize, Serialize};

pub use bhm::fit_bhm;
pub use cbhm::{cbhm_distances, fit_cbhm, fit_cbhm_with_distances, CbhmState};
pub use exnex::fit_exnex;
pub use independent::{fit_independent, sample_independent};
pub use liu::fit_liu_bhmm;
pub use mcmc::{run_mcmc, split_rhat, AdaptiveScale, Chain, FnTarget, Target};
pub use priors::{PhiPrior, VariancePrior};

use crate::divergence::{DistanceMeasure, IndicationData};
use crate::error::{Error, Result};
use crate::kernel::CorrelationKind;
use crate::linalg::DEFAULT_JITTER;
use crate::stats::{beta_tail_prob, inv_logit, logit, BetaParams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct McmcConfig {
    pub burn_in: usize,
    pub keep: usize,
    /// Proposals per adaptation batch.
    pub adapt_batch: usize,
    pub target_accept: f64,
    /// Multiples of the mean diagonal tried when a covariance fails to factorize.
    pub jitter_schedule: Vec<f64>,
}

impl Default for McmcConfig {
    fn default() -> Self {
        Self {
            burn_in: 5000,
            keep: 10_000,
            adapt_batch: 50,
            target_accept: 0.44,
            jitter_schedule: DEFAULT_JITTER.to_vec(),
        }
    }
}

impl McmcConfig {
    pub fn validate(&self) -> Result<()> {
        if self.keep == 0 {
            return Err(Error::Config("mcmc.keep must be at least 1".into()));
        }
        if !(self.target_accept > 0.0 && self.target_accept < 1.0) {
            return Err(Error::Config("mcmc.target_accept must lie in (0, 1)".into()));
        }
        if self.adapt_batch == 0 {
            return Err(Error::Config("mcmc.adapt_batch must be positive".into()));
        }
        if self.jitter_schedule.iter().any(|&j| !(j > 0.0)) {
            return Err(Error::Config("mcmc.jitter_schedule entries must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ChainDiagnostics {
    /// Post-adaptation acceptance rate of every random-walk block.
    pub acceptance: Vec<(String, f64)>,
    /// Split R-hat of each indication's log-odds.
    pub rhat: Vec<f64>,
    /// Hyperparameter proposals whose covariance could not be factorized.
    pub singular_proposals: usize,
    pub covariance_proposals: usize,
}

/// Retained draws of the response rates, `draws × dim`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorSamples {
    dim: usize,
    draws: Vec<f64>,
    pub diagnostics: ChainDiagnostics,
}

/// Largest double below one; draws are clamped into `[MIN_POSITIVE, P_MAX]`.
const P_MAX: f64 = 1.0 - f64::EPSILON / 2.0;

pub(crate) fn to_rate(theta: f64) -> f64 {
    inv_logit(theta).clamp(f64::MIN_POSITIVE, P_MAX)
}

impl PosteriorSamples {
    pub fn new(dim: usize, draws: Vec<f64>) -> Result<Self> {
        if dim == 0 || draws.is_empty() || draws.len() % dim != 0 {
            return Err(Error::Argument("posterior draws must form a non-empty S × I matrix".into()));
        }
        if draws.iter().any(|&p| !(p > 0.0 && p < 1.0)) {
            return Err(Error::Argument("response-rate draws must lie in (0, 1)".into()));
        }
        Ok(Self {
            dim,
            draws,
            diagnostics: ChainDiagnostics::default(),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_draws(&self) -> usize {
        self.draws.len() / self.dim
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.draws
    }

    pub fn column(&self, i: usize) -> impl Iterator<Item = f64> + '_ {
        self.draws.iter().skip(i).step_by(self.dim).copied()
    }

    pub fn mean(&self, i: usize) -> f64 {
        self.column(i).sum::<f64>() / self.n_draws() as f64
    }

    pub fn sd(&self, i: usize) -> f64 {
        let m = self.mean(i);
        let s = self.n_draws();
        if s < 2 {
            return 0.0;
        }
        (self.column(i).map(|p| (p - m) * (p - m)).sum::<f64>() / (s - 1) as f64).sqrt()
    }

    pub fn prob_exceeds(&self, i: usize, t: f64) -> f64 {
        self.column(i).filter(|&p| p > t).count() as f64 / self.n_draws() as f64
    }
}

pub fn posterior_prob_exceeds(samples: &PosteriorSamples, i: usize, t: f64) -> Result<f64> {
    if i >= samples.dim {
        return Err(Error::Argument(format!(
            "indication {i} out of range for {} indications",
            samples.dim
        )));
    }
    Ok(samples.prob_exceeds(i, t))
}

/// Posterior of the response rates, either as draws or in closed form.
#[derive(Debug, Clone, PartialEq)]
pub enum Posterior {
    Samples(PosteriorSamples),
    Beta(Vec<BetaParams>),
}

impl Posterior {
    pub fn dim(&self) -> usize {
        match self {
            Posterior::Samples(s) => s.dim(),
            Posterior::Beta(b) => b.len(),
        }
    }

    pub fn mean(&self, i: usize) -> f64 {
        match self {
            Posterior::Samples(s) => s.mean(i),
            Posterior::Beta(b) => b[i].mean(),
        }
    }

    pub fn sd(&self, i: usize) -> f64 {
        match self {
            Posterior::Samples(s) => s.sd(i),
            Posterior::Beta(b) => b[i].variance().sqrt(),
        }
    }

    pub fn prob_exceeds(&self, i: usize, t: f64) -> f64 {
        match self {
            Posterior::Samples(s) => s.prob_exceeds(i, t),
            Posterior::Beta(b) => beta_tail_prob(b[i], t.clamp(0.0, 1.0)).unwrap_or(f64::NAN),
        }
    }

    pub fn samples(&self) -> Option<&PosteriorSamples> {
        match self {
            Posterior::Samples(s) => Some(s),
            Posterior::Beta(_) => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IndependentSpec {
    pub prior_alpha: f64,
    pub prior_beta: f64,
}

impl Default for IndependentSpec {
    fn default() -> Self {
        Self {
            prior_alpha: 1.0,
            prior_beta: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BhmSpec {
    /// Prior mean of the common mean; `None` takes the mean of `logit(q0,i)`.
    pub mean_prior_mean: Option<f64>,
    pub mean_prior_var: f64,
    pub sigma2: VariancePrior,
}

impl Default for BhmSpec {
    fn default() -> Self {
        Self {
            mean_prior_mean: None,
            mean_prior_var: 1000.0,
            sigma2: VariancePrior::inv_gamma(0.001, 0.001),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ExnexWeights {
    /// `(π_i, 1 − π_i) ~ Dir(λ1, λ2)`, sampled.
    Dirichlet { lambda1: f64, lambda2: f64 },
    /// Fixed exchangeability probability.
    Fixed { pi: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExnexSpec {
    pub mu0_mean: f64,
    pub mu0_var: f64,
    pub sigma0_2: VariancePrior,
    /// NEX means; `None` uses `logit(q0,i)` per indication.
    pub nex_mean: Option<f64>,
    pub nex_var: f64,
    pub weights: ExnexWeights,
}

impl Default for ExnexSpec {
    fn default() -> Self {
        Self {
            mu0_mean: 0.0,
            mu0_var: 5.0,
            // the printed "TrN(0, 100)" is a precision, as in JAGS `dnorm(0, 100)`
            sigma0_2: VariancePrior::TruncatedNormal {
                mean: 0.0,
                var: 0.01,
                lower: 0.001,
            },
            nex_mean: None,
            nex_var: 1.0 / 0.15,
            weights: ExnexWeights::Dirichlet {
                lambda1: 1.0,
                lambda2: 1.0,
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LiuSpec {
    /// Prior mean of the null component; `None` uses `logit(q0)`.
    pub g1: Option<f64>,
    /// Prior mean of the target component; `None` uses `logit(q1)`.
    pub g2: Option<f64>,
    pub tau1_2: f64,
    pub tau2_2: f64,
    pub sigma1_2: VariancePrior,
    pub sigma2_2: VariancePrior,
    /// Prior probability of the null component.
    pub pi: f64,
}

impl Default for LiuSpec {
    fn default() -> Self {
        Self {
            g1: None,
            g2: None,
            tau1_2: 1.0 / 0.42,
            tau2_2: 1.0 / 0.57,
            sigma1_2: VariancePrior::inv_gamma(0.1, 0.1),
            sigma2_2: VariancePrior::inv_gamma(0.1, 0.1),
            pi: 0.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CbhmSpec {
    pub measure: DistanceMeasure,
    pub corr: CorrelationKind,
    pub phi: PhiPrior,
    pub sigma2: VariancePrior,
    pub tau2: VariancePrior,
    pub sigma0_2: VariancePrior,
    /// Prior mean of `θ0`; `None` uses `logit((q0 + q1)/2)` averaged over indications.
    pub mu0: Option<f64>,
}

impl Default for CbhmSpec {
    fn default() -> Self {
        Self::bhattacharyya()
    }
}

impl CbhmSpec {
    /// B distance, exponential kernel, `φ ~ G(1, 1)`.
    pub fn bhattacharyya() -> Self {
        Self {
            measure: DistanceMeasure::Bhattacharyya,
            corr: CorrelationKind::Exponential,
            phi: PhiPrior::Gamma {
                shape: 1.0,
                rate: 1.0,
            },
            sigma2: VariancePrior::inv_gamma(0.01, 0.01),
            tau2: VariancePrior::inv_gamma(0.01, 0.01),
            sigma0_2: VariancePrior::inv_gamma(0.1, 0.1),
            mu0: None,
        }
    }

    /// H distance, exponential kernel, `φ ~ G(1.5, 1)`.
    pub fn hellinger() -> Self {
        Self {
            measure: DistanceMeasure::Hellinger,
            phi: PhiPrior::Gamma {
                shape: 1.5,
                rate: 1.0,
            },
            ..Self::bhattacharyya()
        }
    }

    /// KL distance with the squared-exponential kernel and bounded uniform priors.
    pub fn kullback_leibler() -> Self {
        Self {
            measure: DistanceMeasure::SymmetrizedKl,
            corr: CorrelationKind::SquaredExponential,
            phi: PhiPrior::Uniform {
                lower: 0.189,
                upper: 0.5,
            },
            sigma2: VariancePrior::Uniform {
                lower: 2.0,
                upper: 3.0,
            },
            tau2: VariancePrior::Uniform {
                lower: 2.0,
                upper: 4.0,
            },
            sigma0_2: VariancePrior::inv_gamma(0.1, 0.1),
            mu0: None,
        }
    }

    /// Sensitivity prior settings 1 to 4 for the B-distance model.
    pub fn prior_setting(k: u8) -> Result<Self> {
        let (ig, a) = match k {
            1 => (0.1, 1.0),
            2 => (0.01, 1.0),
            3 => (0.001, 1.0),
            4 => (0.01, 0.7),
            _ => return Err(Error::Argument(format!("prior setting must be 1..=4, got {k}"))),
        };
        Ok(Self {
            sigma2: VariancePrior::inv_gamma(ig, ig),
            tau2: VariancePrior::inv_gamma(ig, ig),
            phi: PhiPrior::Gamma {
                shape: a,
                rate: 1.0,
            },
            ..Self::bhattacharyya()
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum ModelSpec {
    Independent(IndependentSpec),
    Bhm(BhmSpec),
    Exnex(ExnexSpec),
    Liu(LiuSpec),
    Cbhm(CbhmSpec),
}

impl ModelSpec {
    pub fn name(&self) -> &'static str {
        match self {
            ModelSpec::Independent(_) => "independent",
            ModelSpec::Bhm(_) => "bhm",
            ModelSpec::Exnex(_) => "exnex",
            ModelSpec::Liu(_) => "liu",
            ModelSpec::Cbhm(_) => "cbhm",
        }
    }

    /// Default specification for a model name (`cbhm` is the B-distance variant).
    pub fn from_name(name: &str) -> Result<Self> {
        Ok(match name.to_ascii_lowercase().as_str() {
            "independent" | "ind" => ModelSpec::Independent(IndependentSpec::default()),
            "bhm" => ModelSpec::Bhm(BhmSpec::default()),
            "exnex" => ModelSpec::Exnex(ExnexSpec::default()),
            "liu" | "liu_bhmm" => ModelSpec::Liu(LiuSpec::default()),
            "cbhm" | "cbhm_b" => ModelSpec::Cbhm(CbhmSpec::bhattacharyya()),
            "cbhm_h" => ModelSpec::Cbhm(CbhmSpec::hellinger()),
            "cbhm_kl" => ModelSpec::Cbhm(CbhmSpec::kullback_leibler()),
            other => return Err(Error::Argument(format!("unknown model `{other}`"))),
        })
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |x: f64, what: &str| {
            if x > 0.0 && x.is_finite() {
                Ok(())
            } else {
                Err(Error::Config(format!("{what} must be positive, got {x}")))
            }
        };
        match self {
            ModelSpec::Independent(s) => {
                positive(s.prior_alpha, "prior_alpha")?;
                positive(s.prior_beta, "prior_beta")
            }
            ModelSpec::Bhm(s) => {
                positive(s.mean_prior_var, "mean_prior_var")?;
                s.sigma2.validate()
            }
            ModelSpec::Exnex(s) => {
                positive(s.mu0_var, "mu0_var")?;
                positive(s.nex_var, "nex_var")?;
                s.sigma0_2.validate()?;
                match s.weights {
                    ExnexWeights::Dirichlet { lambda1, lambda2 } => {
                        positive(lambda1, "lambda1")?;
                        positive(lambda2, "lambda2")
                    }
                    ExnexWeights::Fixed { pi } if (0.0..=1.0).contains(&pi) => Ok(()),
                    ExnexWeights::Fixed { pi } => {
                        Err(Error::Config(format!("pi must lie in [0, 1], got {pi}")))
                    }
                }
            }
            ModelSpec::Liu(s) => {
                positive(s.tau1_2, "tau1_2")?;
                positive(s.tau2_2, "tau2_2")?;
                s.sigma1_2.validate()?;
                s.sigma2_2.validate()?;
                if (0.0..=1.0).contains(&s.pi) {
                    Ok(())
                } else {
                    Err(Error::Config(format!("pi must lie in [0, 1], got {}", s.pi)))
                }
            }
            ModelSpec::Cbhm(s) => {
                s.phi.validate()?;
                s.sigma2.validate()?;
                s.tau2.validate()?;
                s.sigma0_2.validate()
            }
        }
    }
}

/// Null and target response rates of each indication.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rates {
    pub q0: Vec<f64>,
    pub q1: Vec<f64>,
}

impl Rates {
    pub fn common(q0: f64, q1: f64, dim: usize) -> Self {
        Self {
            q0: vec![q0; dim],
            q1: vec![q1; dim],
        }
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        if self.q0.len() != dim || self.q1.len() != dim {
            return Err(Error::Argument(format!(
                "rates given for {} / {} indications, data has {dim}",
                self.q0.len(),
                self.q1.len()
            )));
        }
        for (a, b) in self.q0.iter().zip(&self.q1) {
            if !(*a > 0.0 && *b < 1.0 && a < b) {
                return Err(Error::Config(format!("need 0 < q0 < q1 < 1, got ({a}, {b})")));
            }
        }
        Ok(())
    }

    pub fn subset(&self, idx: &[usize]) -> Self {
        Self {
            q0: idx.iter().map(|&i| self.q0[i]).collect(),
            q1: idx.iter().map(|&i| self.q1[i]).collect(),
        }
    }

    pub(crate) fn mean_logit_q0(&self) -> f64 {
        self.q0.iter().map(|&q| logit(q).unwrap_or(f64::NAN)).sum::<f64>() / self.q0.len() as f64
    }
}

/// Counts as floats plus a log-odds starting point per indication.
#[derive(Debug, Clone)]
pub(crate) struct Binomials {
    pub n: Vec<f64>,
    pub r: Vec<f64>,
}

impl Binomials {
    pub fn new(data: &[IndicationData]) -> Result<Self> {
        if data.is_empty() {
            return Err(Error::Argument("no indications to fit".into()));
        }
        Ok(Self {
            n: data.iter().map(|d| d.n() as f64).collect(),
            r: data.iter().map(|d| d.r() as f64).collect(),
        })
    }

    pub fn dim(&self) -> usize {
        self.n.len()
    }

    pub fn init_theta(&self) -> Vec<f64> {
        self.n
            .iter()
            .zip(&self.r)
            .map(|(n, r)| ((r + 0.5) / (n - r + 0.5)).ln())
            .collect()
    }
}

/// Fits `spec` to the data. The independent model is returned in closed form.
pub fn fit<R: Rng + ?Sized>(
    spec: &ModelSpec,
    data: &[IndicationData],
    rates: &Rates,
    cfg: &McmcConfig,
    rng: &mut R,
) -> Result<Posterior> {
    rates.validate(data.len())?;
    match spec {
        ModelSpec::Independent(s) => Ok(Posterior::Beta(fit_independent(data, s)?)),
        ModelSpec::Bhm(s) => fit_bhm(data, rates, s, cfg, rng).map(Posterior::Samples),
        ModelSpec::Exnex(s) => fit_exnex(data, rates, s, cfg, rng).map(Posterior::Samples),
        ModelSpec::Liu(s) => fit_liu_bhmm(data, rates, s, cfg, rng).map(Posterior::Samples),
        ModelSpec::Cbhm(s) => fit_cbhm(data, rates, s, cfg, rng).map(Posterior::Samples),
    }
}

/// Model-specific part of a Metropolis-within-Gibbs sampler.
pub(crate) trait Sweeper {
    fn sweep<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<()>;
    fn theta(&self) -> &[f64];
    fn scales(&mut self) -> &mut mcmc::ScaleSet;
    fn covariance_counts(&self) -> (usize, usize) {
        (0, 0)
    }
}

pub(crate) fn drive<S: Sweeper, R: Rng + ?Sized>(
    model: &mut S,
    cfg: &McmcConfig,
    rng: &mut R,
) -> Result<PosteriorSamples> {
    cfg.validate()?;
    for _ in 0..cfg.burn_in {
        model.sweep(rng)?;
    }
    model.scales().freeze();
    let dim = model.theta().len();
    let mut draws = Vec::with_capacity(cfg.keep * dim);
    for _ in 0..cfg.keep {
        model.sweep(rng)?;
        for &t in model.theta() {
            if !t.is_finite() {
                return Err(Error::ChainFailure("log-odds draw became non-finite".into()));
            }
            draws.push(to_rate(t));
        }
    }
    let rhat = (0..dim)
        .map(|i| {
            let trace: Vec<f64> = draws
                .iter()
                .skip(i)
                .step_by(dim)
                .map(|&p| (p / (1.0 - p)).ln())
                .collect();
            split_rhat(&trace)
        })
        .collect();
    let (bad, total) = model.covariance_counts();
    Ok(PosteriorSamples {
        dim,
        draws,
        diagnostics: ChainDiagnostics {
            acceptance: model.scales().acceptance(),
            rhat,
            singular_proposals: bad,
            covariance_proposals: total,
        },
    })
}
