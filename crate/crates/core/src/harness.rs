//! Monte Carlo scenario runner and operating-characteristics summaries.
//!
//! Replicate `k` draws its patients from a stream keyed by `(seed, k)` alone,
//! so every method in a scenario sees the same patients. Posterior sampling
//! uses a separate stream keyed by `(seed, method, k)`. Replicates run on a
//! rayon pool and are collected in replicate order, which makes results
//! independent of the thread count.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::designs::{Method, PatientOutcomes, TrialResult};
use crate::error::{Error, Result};
use crate::inference::McmcConfig;
use crate::stats::RngStream;

const OUTCOME_SALT: u64 = 0x6f75_7463_6f6d_6573;
const SAMPLER_SALT: u64 = 0x7361_6d70_6c65_7200;

/// A method with its display label.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledMethod {
    pub label: String,
    pub method: Method,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub name: String,
    pub truth: Vec<f64>,
    pub methods: Vec<LabeledMethod>,
    pub replicates: usize,
    pub mcmc: McmcConfig,
    pub seed: u64,
    /// Worker threads; `None` uses the global rayon pool.
    pub threads: Option<usize>,
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        if self.replicates == 0 {
            return Err(Error::Config("replicates must be at least 1".into()));
        }
        if self.truth.is_empty() {
            return Err(Error::Config("truth vector is empty".into()));
        }
        if let Some(p) = self.truth.iter().find(|p| !(**p > 0.0 && **p < 1.0)) {
            return Err(Error::Config(format!("true response rate {p} outside (0, 1)")));
        }
        if self.methods.is_empty() {
            return Err(Error::Config("no methods to run".into()));
        }
        let first = &self.methods[0].method;
        for m in &self.methods {
            m.method.validate()?;
            if m.method.dim() != self.truth.len() {
                return Err(Error::Config(format!(
                    "method `{}` has {} indications, truth has {}",
                    m.label,
                    m.method.dim(),
                    self.truth.len()
                )));
            }
            if m.method.rates() != first.rates() || m.method.max_n() != first.max_n() {
                return Err(Error::Config(format!(
                    "method `{}` uses different rates or sample sizes",
                    m.label
                )));
            }
        }
        self.mcmc.validate()
    }
}

/// Per-replicate results of one method, in replicate order; `None` marks a
/// replicate whose sampler failed.
#[derive(Debug, Clone, PartialEq)]
pub struct MethodRun {
    pub label: String,
    pub results: Vec<Option<TrialResult>>,
}

impl MethodRun {
    pub fn failed(&self) -> usize {
        self.results.iter().filter(|r| r.is_none()).count()
    }

    pub fn successes(&self) -> impl Iterator<Item = &TrialResult> {
        self.results.iter().flatten()
    }
}

/// Patients of replicate `k`; the same for every method.
pub fn replicate_outcomes(seed: u64, k: usize, truth: &[f64], max_n: &[u32]) -> Result<PatientOutcomes> {
    let mut rng = RngStream::derived(seed, OUTCOME_SALT, k as u64);
    PatientOutcomes::draw(truth, max_n, &mut rng)
}

fn recoverable(e: &Error) -> bool {
    matches!(e, Error::ChainFailure(_) | Error::SingularCovariance { .. } | Error::Numerical(_))
}

/// Runs `replicates` trials of one method. Sampler failures are recorded as
/// `None`; any other error aborts the run.
pub fn run_method(
    method: &Method,
    truth: &[f64],
    replicates: usize,
    mcmc: &McmcConfig,
    seed: u64,
    method_index: usize,
) -> Result<Vec<Option<TrialResult>>> {
    let max_n = method.max_n();
    let one = |k: usize| -> Result<Option<TrialResult>> {
        let outcomes = replicate_outcomes(seed, k, truth, &max_n)?;
        let mut rng = RngStream::derived(seed, SAMPLER_SALT ^ method_index as u64, k as u64);
        match method.run(&outcomes, mcmc, &mut rng) {
            Ok(t) => Ok(Some(t)),
            Err(e) if recoverable(&e) => Ok(None),
            Err(e) => Err(e),
        }
    };
    (0..replicates).into_par_iter().map(one).collect()
}

pub(crate) fn in_pool<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match threads {
        None => Ok(f()),
        Some(t) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(t)
                .build()
                .map_err(|e| Error::Config(format!("cannot build thread pool: {e}")))?;
            Ok(pool.install(f))
        }
    }
}

/// Runs every method of the scenario on shared patients.
pub fn simulate_scenario(cfg: &ScenarioConfig) -> Result<Vec<MethodRun>> {
    cfg.validate()?;
    in_pool(cfg.threads, || {
        cfg.methods
            .iter()
            .enumerate()
            .map(|(j, m)| {
                let results = run_method(&m.method, &cfg.truth, cfg.replicates, &cfg.mcmc, cfg.seed, j)?;
                Ok(MethodRun {
                    label: m.label.clone(),
                    results,
                })
            })
            .collect()
    })?
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperatingCharacteristics {
    pub label: String,
    pub truth: Vec<f64>,
    pub replicates: usize,
    pub failed: usize,
    pub reject_pct: Vec<f64>,
    pub stop_pct: Vec<f64>,
    /// Mean total enrollment over indications.
    pub sample_size: f64,
    pub perfect_pct: f64,
    pub mean_tp: f64,
    pub mean_tn: f64,
    pub abs_bias: Vec<f64>,
    pub rmse: Vec<f64>,
}

impl OperatingCharacteristics {
    pub fn dim(&self) -> usize {
        self.truth.len()
    }
}

/// Aggregates trial results. An indication counts as sensitive when its true
/// rate exceeds its null rate. Metrics are averaged over successful replicates.
pub fn summarize<'a>(
    label: &str,
    truth: &[f64],
    q0: &[f64],
    results: impl IntoIterator<Item = Option<&'a TrialResult>>,
) -> Result<OperatingCharacteristics> {
    let dim = truth.len();
    if q0.len() != dim {
        return Err(Error::Argument("truth and null rates differ in length".into()));
    }
    let sensitive: Vec<bool> = truth.iter().zip(q0).map(|(t, q)| t > q).collect();
    let mut reject = vec![0usize; dim];
    let mut stop = vec![0usize; dim];
    let mut bias = vec![0.0; dim];
    let mut sq = vec![0.0; dim];
    let (mut total_n, mut perfect, mut tp, mut tn) = (0u64, 0usize, 0usize, 0usize);
    let (mut ok, mut failed) = (0usize, 0usize);
    for res in results {
        let Some(t) = res else {
            failed += 1;
            continue;
        };
        if t.dim() != dim {
            return Err(Error::Argument("trial result has the wrong number of indications".into()));
        }
        ok += 1;
        total_n += t.total_enrolled() as u64;
        let mut all_right = true;
        for i in 0..dim {
            reject[i] += t.rejected[i] as usize;
            stop[i] += t.stopped_early[i] as usize;
            let e = t.estimates[i] - truth[i];
            bias[i] += e;
            sq[i] += e * e;
            match (sensitive[i], t.rejected[i]) {
                (true, true) => tp += 1,
                (false, false) => tn += 1,
                _ => all_right = false,
            }
        }
        perfect += all_right as usize;
    }
    let pct = |c: usize| if ok == 0 { f64::NAN } else { 100.0 * c as f64 / ok as f64 };
    let mean = |x: f64| if ok == 0 { f64::NAN } else { x / ok as f64 };
    Ok(OperatingCharacteristics {
        label: label.to_string(),
        truth: truth.to_vec(),
        replicates: ok + failed,
        failed,
        reject_pct: reject.into_iter().map(pct).collect(),
        stop_pct: stop.into_iter().map(pct).collect(),
        sample_size: mean(total_n as f64),
        perfect_pct: pct(perfect),
        mean_tp: mean(tp as f64),
        mean_tn: mean(tn as f64),
        abs_bias: bias.into_iter().map(|b| mean(b).abs()).collect(),
        rmse: sq.into_iter().map(|s| mean(s).sqrt()).collect(),
    })
}

/// Runs the scenario and summarizes each method.
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<Vec<OperatingCharacteristics>> {
    let runs = simulate_scenario(cfg)?;
    let q0 = &cfg.methods[0].method.rates().q0;
    runs.iter()
        .map(|r| summarize(&r.label, &cfg.truth, q0, r.results.iter().map(Option::as_ref)))
        .collect()
}

/// Side-by-side table: one row per method and metric, one column per indication.
pub fn compare_methods<W: Write>(ocs: &[OperatingCharacteristics], out: W) -> Result<()> {
    let Some(first) = ocs.first() else {
        return Err(Error::Config("nothing to compare".into()));
    };
    if ocs.iter().any(|o| o.truth != first.truth) {
        return Err(Error::Config("methods were run on different scenarios".into()));
    }
    let dim = first.dim();
    let mut w = csv::Writer::from_writer(out);
    let io = |e: csv::Error| Error::Config(format!("cannot write table: {e}"));
    let mut header = vec!["Method".to_string(), "Metric".to_string()];
    header.extend((1..=dim).map(|i| i.to_string()));
    header.extend(
        ["Sample Size", "% Perfect", "# TP", "# TN", "Replicates", "Failed"]
            .iter()
            .map(|s| s.to_string()),
    );
    w.write_record(&header).map_err(io)?;
    let blank = || vec![String::new(); 6];
    let mut truth_row = vec![String::new(), "True RRs".to_string()];
    truth_row.extend(first.truth.iter().map(|t| format!("{t}")));
    truth_row.extend(blank());
    w.write_record(&truth_row).map_err(io)?;
    for oc in ocs {
        let rows: [(&str, &Vec<f64>, usize); 4] = [
            ("% reject", &oc.reject_pct, 1),
            ("% stop", &oc.stop_pct, 1),
            ("abs bias", &oc.abs_bias, 3),
            ("RMSE", &oc.rmse, 3),
        ];
        for (k, (metric, vals, dp)) in rows.iter().enumerate() {
            let mut row = vec![oc.label.clone(), metric.to_string()];
            row.extend(vals.iter().map(|v| format!("{v:.dp$}", dp = *dp)));
            if k == 0 {
                row.extend([
                    format!("{:.1}", oc.sample_size),
                    format!("{:.1}", oc.perfect_pct),
                    format!("{:.2}", oc.mean_tp),
                    format!("{:.2}", oc.mean_tn),
                    oc.replicates.to_string(),
                    oc.failed.to_string(),
                ]);
            } else {
                row.extend(blank());
            }
            w.write_record(&row).map_err(io)?;
        }
    }
    w.flush().map_err(|e| Error::Config(format!("cannot write table: {e}")))?;
    Ok(())
}

/// Long-format per-replicate records for plotting.
pub fn write_replicates<W: Write>(runs: &[MethodRun], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let io = |e: csv::Error| Error::Config(format!("cannot write replicates: {e}"));
    w.write_record(["method", "replicate", "indication", "enrolled", "responders", "stopped", "rejected", "estimate"])
        .map_err(io)?;
    for run in runs {
        for (k, res) in run.results.iter().enumerate() {
            let Some(t) = res else { continue };
            for i in 0..t.dim() {
                w.write_record([
                    run.label.clone(),
                    k.to_string(),
                    (i + 1).to_string(),
                    t.enrolled[i].to_string(),
                    t.responders[i].to_string(),
                    (t.stopped_early[i] as u8).to_string(),
                    (t.rejected[i] as u8).to_string(),
                    format!("{:.6}", t.estimates[i]),
                ])
                .map_err(io)?;
            }
        }
    }
    w.flush().map_err(|e| Error::Config(format!("cannot write replicates: {e}")))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::designs::{TwoStageDesign, Verdict};
    use crate::inference::ModelSpec;

    fn independent(dim: usize, q: f64) -> LabeledMethod {
        LabeledMethod {
            label: "Independent".into(),
            method: Method::TwoStage {
                model: ModelSpec::from_name("independent").unwrap(),
                design: TwoStageDesign::uniform(dim, 14, 24, 0.05, q, 0.2, 0.4).unwrap(),
            },
        }
    }

    fn scenario(truth: Vec<f64>, reps: usize) -> ScenarioConfig {
        ScenarioConfig {
            name: "t".into(),
            methods: vec![independent(truth.len(), 0.9)],
            truth,
            replicates: reps,
            mcmc: McmcConfig::default(),
            seed: 17,
            threads: None,
        }
    }

    #[test]
    fn thread_count_does_not_change_results() {
        let mut cfg = scenario(vec![0.2, 0.4, 0.3], 200);
        cfg.threads = Some(1);
        let a = run_scenario(&cfg).unwrap();
        cfg.threads = Some(3);
        let b = run_scenario(&cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn perfect_bounded_by_each_indication() {
        let oc = &run_scenario(&scenario(vec![0.2, 0.4, 0.3], 300)).unwrap()[0];
        for i in 0..3 {
            let correct = if oc.truth[i] > 0.2 {
                oc.reject_pct[i]
            } else {
                100.0 - oc.reject_pct[i]
            };
            assert!(oc.perfect_pct <= correct + 1e-9);
        }
        assert!(oc.mean_tp <= 2.0 && oc.mean_tn <= 1.0);
    }

    #[test]
    fn single_replicate_gives_whole_percentages() {
        let oc = &run_scenario(&scenario(vec![0.2, 0.4], 1)).unwrap()[0];
        for v in oc.reject_pct.iter().chain(&oc.stop_pct) {
            assert!(*v == 0.0 || *v == 100.0);
        }
    }

    #[test]
    fn failed_replicates_are_counted_not_averaged() {
        let t = TrialResult {
            enrolled: vec![24],
            responders: vec![10],
            stopped_early: vec![false],
            rejected: vec![true],
            verdicts: vec![Verdict::Posterior(0.99)],
            estimates: vec![0.4],
            path: None,
        };
        let oc = summarize("x", &[0.4], &[0.2], [Some(&t), None, Some(&t)]).unwrap();
        assert_eq!(oc.failed, 1);
        assert_eq!(oc.replicates, 3);
        assert_eq!(oc.reject_pct, vec![100.0]);
        assert_eq!(oc.sample_size, 24.0);
    }

    #[test]
    fn compare_rejects_mismatched_scenarios() {
        let a = run_scenario(&scenario(vec![0.2, 0.4], 5)).unwrap().remove(0);
        let mut b = a.clone();
        b.truth = vec![0.2, 0.2];
        assert!(compare_methods(&[a.clone(), b], Vec::new()).is_err());
        let mut buf = Vec::new();
        compare_methods(&[a], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("Method,Metric,1,2,Sample Size"));
    }
}
