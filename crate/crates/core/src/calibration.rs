//! Prior calibration for the correlation range and final-cutoff calibration.

use rand::Rng;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};

use crate::designs::{Method, Verdict};
use crate::divergence::{distance, DistanceMeasure, ResponseCounts};
use crate::error::{Error, Result};
use crate::harness::{in_pool, run_method};
use crate::inference::McmcConfig;
use crate::kernel::CorrelationKind;
use crate::stats::RngStream;

/// Settings for choosing the shape `a` of the `G(a, 1)` prior on `φ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhiPriorCalib {
    /// Simulated distances per pair and homogeneous scenario.
    pub m: usize,
    /// The upper `alpha_q` quantile of the pooled distances is used.
    pub alpha_q: f64,
    pub rho_lb: f64,
    pub rho_ub: f64,
    pub measure: DistanceMeasure,
    pub corr: CorrelationKind,
    pub n: Vec<u32>,
    pub q0: Vec<f64>,
    pub q1: Vec<f64>,
    /// Draw `a` uniformly from the interval instead of using the default.
    #[serde(default)]
    pub draw: bool,
    /// Explicit value of `a`, taking precedence over everything else.
    #[serde(default)]
    pub a_override: Option<f64>,
}

impl PhiPriorCalib {
    pub fn new(measure: DistanceMeasure, corr: CorrelationKind, dim: usize, n: u32, q0: f64, q1: f64) -> Self {
        Self {
            m: 5000,
            alpha_q: 0.05,
            rho_lb: 0.3,
            rho_ub: 0.5,
            measure,
            corr,
            n: vec![n; dim],
            q0: vec![q0; dim],
            q1: vec![q1; dim],
            draw: false,
            a_override: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let dim = self.n.len();
        if dim < 2 || self.q0.len() != dim || self.q1.len() != dim {
            return Err(Error::Config("need at least two indications with matching n, q0, q1".into()));
        }
        if self.m < 1000 {
            return Err(Error::Config(format!("M must be at least 1000, got {}", self.m)));
        }
        if !(self.alpha_q > 0.0 && self.alpha_q < 1.0) {
            return Err(Error::Config("alpha_q must lie in (0, 1)".into()));
        }
        if !(0.0 < self.rho_lb && self.rho_lb <= self.rho_ub && self.rho_ub < 1.0) {
            return Err(Error::Config("need 0 < rho_lb <= rho_ub < 1".into()));
        }
        if self.n.contains(&0) {
            return Err(Error::Config("sample sizes must be positive".into()));
        }
        for (a, b) in self.q0.iter().zip(&self.q1) {
            if !(*a > 0.0 && a < b && *b < 1.0) {
                return Err(Error::Config(format!("need 0 < q0 < q1 < 1, got ({a}, {b})")));
            }
        }
        if let Some(a) = self.a_override {
            if !(a > 0.0 && a.is_finite()) {
                return Err(Error::Config(format!("a must be positive, got {a}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhiCalibration {
    pub d_t: f64,
    pub a_lb: f64,
    pub a_ub: f64,
    pub a: f64,
}

/// Type-7 quantile (linear interpolation between order statistics) of sorted data.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty() && (0.0..=1.0).contains(&p));
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Pooled distances between every pair under both homogeneous scenarios.
///
/// Pairs are visited in a canonical order of their `(n, q)` contents and each
/// gets its own stream, so the pooled sample does not depend on how the
/// indications are ordered.
pub fn simulate_homogeneous_distances(calib: &PhiPriorCalib, seed: u64) -> Result<Vec<f64>> {
    calib.validate()?;
    let dim = calib.n.len();
    let mut keys: Vec<[(u32, u64); 2]> = Vec::new();
    for i in 0..dim {
        for j in i + 1..dim {
            for (qi, qj) in [(calib.q0[i], calib.q0[j]), (calib.q1[i], calib.q1[j])] {
                let mut k = [(calib.n[i], qi.to_bits()), (calib.n[j], qj.to_bits())];
                k.sort();
                keys.push(k);
            }
        }
    }
    keys.sort();
    let mut out = Vec::with_capacity(keys.len() * calib.m);
    for (s, k) in keys.iter().enumerate() {
        let mut rng = RngStream::new(seed, s as u64);
        let bin = |(n, q): (u32, u64)| {
            Binomial::new(n as u64, f64::from_bits(q)).map_err(|e| Error::Numerical(e.to_string()))
        };
        let (bi, bj) = (bin(k[0])?, bin(k[1])?);
        for _ in 0..calib.m {
            let ri = bi.sample(&mut rng) as f64;
            let rj = bj.sample(&mut rng) as f64;
            let ci = ResponseCounts::new(k[0].0 as f64, ri)?;
            let cj = ResponseCounts::new(k[1].0 as f64, rj)?;
            out.push(distance(calib.measure, ci, cj));
        }
    }
    Ok(out)
}

/// Chooses the `φ` prior shape so that the correlation at the typical largest
/// homogeneous distance `d_t` lies between `rho_lb` and `rho_ub`.
///
/// The returned `a` is `a_override` if set, a uniform draw from `[a_lb, a_ub]`
/// if `draw` is set, and otherwise the documented shape for the measure
/// (1 for B, 1.5 for H) or the interval midpoint when none is documented.
pub fn calibrate_phi_prior<R: Rng + ?Sized>(calib: &PhiPriorCalib, rng: &mut R) -> Result<PhiCalibration> {
    let seed = rng.random::<u64>();
    let mut d = simulate_homogeneous_distances(calib, seed)?;
    if d.iter().all(|&x| x == 0.0) {
        return Err(Error::Calibration("all simulated distances are zero".into()));
    }
    d.sort_by(f64::total_cmp);
    let d_t = quantile_sorted(&d, 1.0 - calib.alpha_q);
    if !(d_t > 0.0) {
        return Err(Error::Calibration(format!(
            "the {} quantile of the distances is zero",
            1.0 - calib.alpha_q
        )));
    }
    let scale = match calib.corr {
        CorrelationKind::Exponential => d_t,
        CorrelationKind::SquaredExponential => d_t * d_t,
    };
    let a_lb = -calib.rho_ub.ln() / scale;
    let a_ub = -calib.rho_lb.ln() / scale;
    let a = if let Some(a) = calib.a_override {
        a
    } else if calib.draw {
        if a_ub > a_lb {
            rng.random_range(a_lb..a_ub)
        } else {
            a_lb
        }
    } else {
        match (calib.measure, calib.corr) {
            (DistanceMeasure::Bhattacharyya, CorrelationKind::Exponential) => 1.0,
            (DistanceMeasure::Hellinger, CorrelationKind::Exponential) => 1.5,
            _ => 0.5 * (a_lb + a_ub),
        }
    };
    Ok(PhiCalibration { d_t, a_lb, a_ub, a })
}

/// Which summary of the per-indication null rejection rates is held at alpha.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorTarget {
    #[default]
    Max,
    Mean,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CutoffCalib {
    pub alpha: f64,
    pub replicates: usize,
    pub target: ErrorTarget,
    pub seed: u64,
    pub threads: Option<usize>,
}

impl Default for CutoffCalib {
    fn default() -> Self {
        Self {
            alpha: 0.10,
            replicates: 2000,
            target: ErrorTarget::Max,
            seed: 20_240_601,
            threads: None,
        }
    }
}

impl CutoffCalib {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(Error::Config(format!("alpha must lie in (0, 1], got {}", self.alpha)));
        }
        if self.replicates == 0 {
            return Err(Error::Config("calibration needs at least one replicate".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CutoffResult {
    pub q: f64,
    /// Per-indication null rejection rate at `q` over the calibration replicates.
    pub rejection: Vec<f64>,
    pub replicates: usize,
    pub failed: usize,
}

/// Final verdicts of the global-null trials (every true rate at `q0,i`).
pub fn null_verdicts(method: &Method, mcmc: &McmcConfig, calib: &CutoffCalib) -> Result<(Vec<Vec<Verdict>>, usize)> {
    method.validate()?;
    calib.validate()?;
    let truth = method.rates().q0.clone();
    let runs = in_pool(calib.threads, || {
        run_method(method, &truth, calib.replicates, mcmc, calib.seed, 0)
    })??;
    let failed = runs.iter().filter(|r| r.is_none()).count();
    if failed == runs.len() {
        return Err(Error::ChainFailure("every calibration replicate failed".into()));
    }
    Ok((runs.into_iter().flatten().map(|t| t.verdicts).collect(), failed))
}

/// Smallest cutoff whose null rejection summary is at most `alpha`, found
/// exactly over the cached verdicts.
///
/// Rejection at `Q` counts fixed rejections plus posteriors strictly above
/// `Q`, so it only drops at observed posterior values and the optimum is one
/// of them (or 0).
pub fn cutoff_from_verdicts(verdicts: &[Vec<Verdict>], alpha: f64, target: ErrorTarget) -> Result<CutoffResult> {
    let reps = verdicts.len();
    let Some(dim) = verdicts.first().map(Vec::len) else {
        return Err(Error::Calibration("no replicates to calibrate on".into()));
    };
    let mut post: Vec<Vec<f64>> = vec![Vec::new(); dim];
    let mut fixed = vec![0usize; dim];
    for row in verdicts {
        if row.len() != dim {
            return Err(Error::Argument("replicates differ in indications".into()));
        }
        for (i, v) in row.iter().enumerate() {
            match *v {
                Verdict::Posterior(p) => post[i].push(p),
                Verdict::Fixed(true) => fixed[i] += 1,
                _ => {}
            }
        }
    }
    for p in &mut post {
        p.sort_by(f64::total_cmp);
    }
    let rates_at = |q: f64| -> Vec<f64> {
        (0..dim)
            .map(|i| {
                let above = post[i].len() - post[i].partition_point(|&p| p <= q);
                (fixed[i] + above) as f64 / reps as f64
            })
            .collect()
    };
    let summary = |r: &[f64]| match target {
        ErrorTarget::Max => r.iter().cloned().fold(0.0, f64::max),
        ErrorTarget::Mean => r.iter().sum::<f64>() / r.len() as f64,
    };
    let mut candidates: Vec<f64> = post.iter().flatten().cloned().filter(|p| (0.0..1.0).contains(p)).collect();
    candidates.push(0.0);
    candidates.sort_by(f64::total_cmp);
    candidates.dedup();
    let mut last = f64::INFINITY;
    for &q in &candidates {
        let r = rates_at(q);
        let s = summary(&r);
        assert!(s <= last, "null rejection rate rose with the cutoff");
        last = s;
        if s <= alpha {
            return Ok(CutoffResult {
                q,
                rejection: r,
                replicates: reps,
                failed: 0,
            });
        }
    }
    let floor = summary(&rates_at(1.0));
    if floor <= alpha {
        return Ok(CutoffResult {
            q: 1.0,
            rejection: rates_at(1.0),
            replicates: reps,
            failed: 0,
        });
    }
    Err(Error::Calibration(format!(
        "no cutoff reaches alpha = {alpha}; the lowest achievable null rejection rate is {floor:.4}"
    )))
}

/// Calibrates the final cutoff `Q` under the global null.
pub fn calibrate_final_cutoff(method: &Method, mcmc: &McmcConfig, calib: &CutoffCalib) -> Result<CutoffResult> {
    let (verdicts, failed) = null_verdicts(method, mcmc, calib)?;
    let mut res = cutoff_from_verdicts(&verdicts, calib.alpha, calib.target)?;
    res.failed = failed;
    Ok(res)
}
