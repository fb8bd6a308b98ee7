//! Two-path design: a homogeneity test after stage 1 routes the trial either
//! to independent Simon two-stage decisions or to predictive-power futility
//! followed by a two-component mixture model.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{cochran_q, predictive_power, LiuPath, PatientOutcomes, SimonDesign, TrialResult, Verdict};
use crate::divergence::IndicationData;
use crate::error::{Error, Result};
use crate::inference::{fit_liu_bhmm, LiuSpec, McmcConfig, Rates};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LiuDesign {
    /// Heterogeneity is declared when the homogeneity p-value is below `gamma`.
    pub gamma: f64,
    /// Futility threshold on predictive power.
    pub c: f64,
    pub q: f64,
    /// Stage sizes of both paths and the heterogeneous-path thresholds.
    pub simon: SimonDesign,
    /// Monte Carlo draws for predictive power; zero means exact summation.
    pub predictive_draws: usize,
    pub rates: Rates,
    pub model: LiuSpec,
}

impl LiuDesign {
    pub fn new(dim: usize, simon: SimonDesign, q: f64, q0: f64, q1: f64) -> Self {
        Self {
            gamma: 0.2,
            c: 0.5,
            q,
            simon,
            predictive_draws: 0,
            rates: Rates::common(q0, q1, dim),
            model: LiuSpec::default(),
        }
    }

    pub fn dim(&self) -> usize {
        self.rates.q0.len()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma < 1.0) || !(self.c > 0.0 && self.c < 1.0) {
            return Err(Error::Config("gamma and C must lie in (0, 1)".into()));
        }
        if !(0.0..=1.0).contains(&self.q) {
            return Err(Error::Config("Q must lie in [0, 1]".into()));
        }
        SimonDesign::new(self.simon.r1, self.simon.n1, self.simon.r, self.simon.n)?;
        self.rates.validate(self.dim())
    }

    pub fn with_q(&self, q: f64) -> Self {
        Self { q, ..self.clone() }
    }
}

pub fn run_liu_trial<R: Rng + ?Sized>(
    truth: &[f64],
    design: &LiuDesign,
    mcmc: &McmcConfig,
    rng: &mut R,
) -> Result<TrialResult> {
    design.validate()?;
    let outcomes = PatientOutcomes::draw(truth, &vec![design.simon.n; design.dim()], rng)?;
    run_liu_with_outcomes(&outcomes, design, mcmc, rng)
}

pub fn run_liu_with_outcomes<R: Rng + ?Sized>(
    outcomes: &PatientOutcomes,
    design: &LiuDesign,
    mcmc: &McmcConfig,
    rng: &mut R,
) -> Result<TrialResult> {
    design.validate()?;
    let dim = design.dim();
    if outcomes.dim() != dim {
        return Err(Error::Argument("outcomes and design differ in indications".into()));
    }
    let (n1, n) = (design.simon.n1, design.simon.n);
    let stage1: Vec<IndicationData> =
        (0..dim).map(|i| outcomes.data(i, n1)).collect::<Result<_>>()?;
    let (_, p_value) = cochran_q(&stage1)?;

    if p_value < design.gamma {
        let mut res = TrialResult {
            enrolled: vec![n1; dim],
            responders: vec![0; dim],
            stopped_early: vec![true; dim],
            rejected: vec![false; dim],
            verdicts: vec![Verdict::Stopped; dim],
            estimates: vec![0.0; dim],
            path: Some(LiuPath::Heterogeneous),
        };
        for i in 0..dim {
            if design.simon.continues(stage1[i].r()) {
                let total = outcomes.responders(i, n)?;
                res.enrolled[i] = n;
                res.stopped_early[i] = false;
                res.verdicts[i] = Verdict::Fixed(design.simon.rejects(total));
            }
            res.responders[i] = outcomes.responders(i, res.enrolled[i])?;
            res.estimates[i] = res.responders[i] as f64 / res.enrolled[i] as f64;
            res.rejected[i] = res.verdicts[i].rejects(design.q);
        }
        return Ok(res);
    }

    let mut stopped = vec![false; dim];
    for i in 0..dim {
        let pp = predictive_power(
            n1,
            stage1[i].r(),
            n - n1,
            n,
            design.rates.q0[i],
            design.predictive_draws,
            rng,
        )?;
        stopped[i] = pp < design.c;
    }
    let enrolled: Vec<u32> = stopped.iter().map(|&s| if s { n1 } else { n }).collect();
    let data: Vec<IndicationData> = (0..dim)
        .map(|i| outcomes.data(i, enrolled[i]))
        .collect::<Result<_>>()?;
    let post = fit_liu_bhmm(&data, &design.rates, &design.model, mcmc, rng)?;
    let verdicts: Vec<Verdict> = (0..dim)
        .map(|i| {
            if stopped[i] {
                Verdict::Stopped
            } else {
                Verdict::Posterior(post.prob_exceeds(i, design.rates.q0[i]))
            }
        })
        .collect();
    Ok(TrialResult {
        responders: data.iter().map(|d| d.r()).collect(),
        enrolled,
        stopped_early: stopped,
        rejected: verdicts.iter().map(|v| v.rejects(design.q)).collect(),
        verdicts,
        estimates: (0..dim).map(|i| post.mean(i)).collect(),
        path: Some(LiuPath::Homogeneous),
    })
}
