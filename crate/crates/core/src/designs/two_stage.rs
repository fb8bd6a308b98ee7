use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{PatientOutcomes, TrialResult, Verdict};
use crate::divergence::IndicationData;
use crate::error::{Error, Result};
use crate::inference::{fit, McmcConfig, ModelSpec, Rates};

/// Two-stage design with a Bayesian futility look after stage 1.
///
/// After `n1_i` patients, indication `i` stops if
/// `Pr(p_i > (q0,i + q1,i)/2 | D1) < Qf`. Continuing indications enroll to
/// `n_i` and are declared sensitive if `Pr(p_i > q0,i | D) > Q`, where `D`
/// holds the continuing indications only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwoStageDesign {
    pub n1: Vec<u32>,
    pub n: Vec<u32>,
    pub qf: f64,
    pub q: f64,
    pub rates: Rates,
}

impl TwoStageDesign {
    pub fn uniform(dim: usize, n1: u32, n: u32, qf: f64, q: f64, q0: f64, q1: f64) -> Result<Self> {
        let d = Self {
            n1: vec![n1; dim],
            n: vec![n; dim],
            qf,
            q,
            rates: Rates::common(q0, q1, dim),
        };
        d.validate()?;
        Ok(d)
    }

    pub fn dim(&self) -> usize {
        self.n.len()
    }

    pub fn validate(&self) -> Result<()> {
        let dim = self.n.len();
        if dim == 0 || self.n1.len() != dim {
            return Err(Error::Config("stage sizes must be given for every indication".into()));
        }
        self.rates.validate(dim)?;
        for (a, b) in self.n1.iter().zip(&self.n) {
            if !(*a > 0 && a <= b) {
                return Err(Error::Config(format!("need 0 < n1 <= n, got ({a}, {b})")));
            }
        }
        if !(0.0..=1.0).contains(&self.qf) || !(0.0..=1.0).contains(&self.q) {
            return Err(Error::Config("Qf and Q must lie in [0, 1]".into()));
        }
        Ok(())
    }

    pub fn with_q(&self, q: f64) -> Self {
        Self { q, ..self.clone() }
    }
}

/// Simulates patients from `truth` and runs the design.
pub fn run_two_stage_trial<R: Rng + ?Sized>(
    truth: &[f64],
    method: &ModelSpec,
    design: &TwoStageDesign,
    mcmc: &McmcConfig,
    rng: &mut R,
) -> Result<TrialResult> {
    design.validate()?;
    if let Some(p) = truth.iter().find(|p| !(**p > 0.0 && **p < 1.0)) {
        return Err(Error::Argument(format!("true response rate {p} outside (0, 1)")));
    }
    let outcomes = PatientOutcomes::draw(truth, &design.n, rng)?;
    run_two_stage_with_outcomes(&outcomes, method, design, mcmc, rng)
}

/// Runs the design on pre-drawn patients; `rng` drives the posterior sampler only.
pub fn run_two_stage_with_outcomes<R: Rng + ?Sized>(
    outcomes: &PatientOutcomes,
    method: &ModelSpec,
    design: &TwoStageDesign,
    mcmc: &McmcConfig,
    rng: &mut R,
) -> Result<TrialResult> {
    design.validate()?;
    let dim = design.dim();
    if outcomes.dim() != dim {
        return Err(Error::Argument("outcomes and design differ in indications".into()));
    }
    let stage1: Vec<IndicationData> = (0..dim)
        .map(|i| outcomes.data(i, design.n1[i]))
        .collect::<Result<_>>()?;
    let mut stopped = vec![false; dim];
    let mut estimates = vec![f64::NAN; dim];
    // with Qf = 0 nothing can stop, so the interim fit is skipped
    if design.qf > 0.0 {
        let interim = fit(method, &stage1, &design.rates, mcmc, rng)?;
        for i in 0..dim {
            let mid = 0.5 * (design.rates.q0[i] + design.rates.q1[i]);
            stopped[i] = interim.prob_exceeds(i, mid) < design.qf;
            estimates[i] = interim.mean(i);
        }
    }
    let cont: Vec<usize> = (0..dim).filter(|&i| !stopped[i]).collect();
    let mut verdicts = vec![Verdict::Stopped; dim];
    let mut enrolled = design.n1.clone();
    for &i in &cont {
        enrolled[i] = design.n[i];
    }
    let responders: Vec<u32> = (0..dim)
        .map(|i| outcomes.responders(i, enrolled[i]))
        .collect::<Result<_>>()?;
    if !cont.is_empty() {
        let data: Vec<IndicationData> = cont
            .iter()
            .map(|&i| IndicationData::new(enrolled[i], responders[i]))
            .collect::<Result<_>>()?;
        let rates = design.rates.subset(&cont);
        let post = fit(method, &data, &rates, mcmc, rng)?;
        for (j, &i) in cont.iter().enumerate() {
            verdicts[i] = Verdict::Posterior(post.prob_exceeds(j, design.rates.q0[i]));
            estimates[i] = post.mean(j);
        }
    }
    Ok(TrialResult {
        rejected: verdicts.iter().map(|v| v.rejects(design.q)).collect(),
        enrolled,
        responders,
        stopped_early: stopped,
        verdicts,
        estimates,
        path: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::RngStream;

    fn independent() -> ModelSpec {
        ModelSpec::from_name("independent").unwrap()
    }

    #[test]
    fn stopped_indications_enroll_stage_one_only() {
        let design = TwoStageDesign::uniform(4, 14, 24, 0.05, 0.9, 0.2, 0.4).unwrap();
        let mut rng = RngStream::new(3, 0);
        for _ in 0..50 {
            let t = run_two_stage_trial(
                &[0.05, 0.2, 0.4, 0.6],
                &independent(),
                &design,
                &McmcConfig::default(),
                &mut rng,
            )
            .unwrap();
            for i in 0..4 {
                if t.stopped_early[i] {
                    assert_eq!(t.enrolled[i], 14);
                    assert!(!t.rejected[i]);
                } else {
                    assert_eq!(t.enrolled[i], 24);
                }
            }
        }
    }

    #[test]
    fn zero_futility_cutoff_never_stops() {
        let design = TwoStageDesign::uniform(3, 14, 24, 0.0, 0.9, 0.2, 0.4).unwrap();
        let mut rng = RngStream::new(4, 0);
        for _ in 0..100 {
            let t = run_two_stage_trial(&[0.01, 0.02, 0.2], &independent(), &design, &McmcConfig::default(), &mut rng)
                .unwrap();
            assert!(t.stopped_early.iter().all(|s| !s));
        }
    }

    #[test]
    fn unit_cutoff_never_rejects() {
        let design = TwoStageDesign::uniform(3, 14, 24, 0.05, 1.0, 0.2, 0.4).unwrap();
        let mut rng = RngStream::new(5, 0);
        for _ in 0..100 {
            let t = run_two_stage_trial(&[0.9, 0.95, 0.99], &independent(), &design, &McmcConfig::default(), &mut rng)
                .unwrap();
            assert!(t.rejected.iter().all(|r| !r));
        }
    }

    #[test]
    fn invalid_designs_rejected() {
        assert!(TwoStageDesign::uniform(3, 0, 24, 0.05, 0.9, 0.2, 0.4).is_err());
        assert!(TwoStageDesign::uniform(3, 30, 24, 0.05, 0.9, 0.2, 0.4).is_err());
        assert!(TwoStageDesign::uniform(3, 14, 24, 0.05, 0.9, 0.4, 0.2).is_err());
    }
}
