//! Trial state machines.

mod cochran;
mod liu;
mod predictive;
mod simon;
mod two_stage;

use rand::Rng;
use serde::{Deserialize, Serialize};

pub use cochran::cochran_q;
pub use liu::{run_liu_trial, run_liu_with_outcomes, LiuDesign};
pub use predictive::{predictive_power, predictive_power_exact};
pub use simon::{simon_minimax, simon_operating, SimonDesign};
pub use two_stage::{run_two_stage_trial, run_two_stage_with_outcomes, TwoStageDesign};

use crate::divergence::IndicationData;
use crate::error::{Error, Result};
use crate::inference::{McmcConfig, ModelSpec, Rates};

/// Individual patient responses, drawn before any design runs so that every
/// method sees the same patients.
#[derive(Debug, Clone, PartialEq)]
pub struct PatientOutcomes {
    responses: Vec<Vec<bool>>,
}

impl PatientOutcomes {
    pub fn draw<R: Rng + ?Sized>(truth: &[f64], max_n: &[u32], rng: &mut R) -> Result<Self> {
        if truth.len() != max_n.len() {
            return Err(Error::Argument("truth and sample sizes differ in length".into()));
        }
        if let Some(p) = truth.iter().find(|p| !(**p >= 0.0 && **p <= 1.0)) {
            return Err(Error::Argument(format!("true response rate {p} outside [0, 1]")));
        }
        let responses = truth
            .iter()
            .zip(max_n)
            .map(|(&p, &n)| (0..n).map(|_| rng.random::<f64>() < p).collect())
            .collect();
        Ok(Self { responses })
    }

    pub fn from_responses(responses: Vec<Vec<bool>>) -> Self {
        Self { responses }
    }

    pub fn dim(&self) -> usize {
        self.responses.len()
    }

    /// Responders among the first `n` patients of indication `i`.
    pub fn responders(&self, i: usize, n: u32) -> Result<u32> {
        let row = &self.responses[i];
        if n as usize > row.len() {
            return Err(Error::Argument(format!(
                "indication {} has {} simulated patients, {n} requested",
                i + 1,
                row.len()
            )));
        }
        Ok(row[..n as usize].iter().filter(|&&b| b).count() as u32)
    }

    pub fn data(&self, i: usize, n: u32) -> Result<IndicationData> {
        IndicationData::new(n, self.responders(i, n)?)
    }
}

/// How an indication's final decision is reached.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum Verdict {
    /// Stopped for futility; never declared sensitive.
    Stopped,
    /// Final posterior probability `Pr(p_i > q0,i | D)`, compared against `Q`.
    Posterior(f64),
    /// Decision fixed without a posterior (Simon path).
    Fixed(bool),
}

impl Verdict {
    pub fn rejects(&self, q: f64) -> bool {
        match *self {
            Verdict::Stopped => false,
            Verdict::Posterior(p) => p > q,
            Verdict::Fixed(b) => b,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LiuPath {
    Heterogeneous,
    Homogeneous,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialResult {
    pub enrolled: Vec<u32>,
    pub responders: Vec<u32>,
    pub stopped_early: Vec<bool>,
    pub rejected: Vec<bool>,
    pub verdicts: Vec<Verdict>,
    /// Point estimate of each response rate (posterior mean, or the observed
    /// rate where no posterior is computed).
    pub estimates: Vec<f64>,
    pub path: Option<LiuPath>,
}

impl TrialResult {
    pub fn dim(&self) -> usize {
        self.enrolled.len()
    }

    pub fn total_enrolled(&self) -> u32 {
        self.enrolled.iter().sum()
    }

    /// Decisions under a different final cutoff.
    pub fn rejections_at(&self, q: f64) -> Vec<bool> {
        self.verdicts.iter().map(|v| v.rejects(q)).collect()
    }
}

/// A complete trial procedure: a model inside the two-stage design, or the
/// two-path design with its own mixture model.
#[derive(Debug, Clone, PartialEq)]
pub enum Method {
    TwoStage { model: ModelSpec, design: TwoStageDesign },
    Liu(LiuDesign),
}

impl Method {
    pub fn dim(&self) -> usize {
        match self {
            Method::TwoStage { design, .. } => design.dim(),
            Method::Liu(d) => d.dim(),
        }
    }

    pub fn rates(&self) -> &Rates {
        match self {
            Method::TwoStage { design, .. } => &design.rates,
            Method::Liu(d) => &d.rates,
        }
    }

    /// Patients to simulate per indication.
    pub fn max_n(&self) -> Vec<u32> {
        match self {
            Method::TwoStage { design, .. } => design.n.clone(),
            Method::Liu(d) => vec![d.simon.n; d.dim()],
        }
    }

    pub fn q(&self) -> f64 {
        match self {
            Method::TwoStage { design, .. } => design.q,
            Method::Liu(d) => d.q,
        }
    }

    pub fn with_q(&self, q: f64) -> Self {
        match self {
            Method::TwoStage { model, design } => Method::TwoStage {
                model: *model,
                design: design.with_q(q),
            },
            Method::Liu(d) => Method::Liu(d.with_q(q)),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Method::TwoStage { model, design } => {
                model.validate()?;
                design.validate()
            }
            Method::Liu(d) => d.validate(),
        }
    }

    pub fn run<R: Rng + ?Sized>(
        &self,
        outcomes: &PatientOutcomes,
        mcmc: &McmcConfig,
        rng: &mut R,
    ) -> Result<TrialResult> {
        match self {
            Method::TwoStage { model, design } => {
                run_two_stage_with_outcomes(outcomes, model, design, mcmc, rng)
            }
            Method::Liu(d) => run_liu_with_outcomes(outcomes, d, mcmc, rng),
        }
    }
}
