//! Acceptance suite. Runs every criterion at full tolerance and prints one
//! `[PASS]`/`[FAIL]` line per check, then exits nonzero if any check failed.
//!
//! Pass a substring as the first argument to run only the matching criteria,
//! e.g. `cargo test --test acceptance -- calibration`.

mod common;

use std::collections::{BTreeMap, HashMap};
use std::time::Instant;

use basket_core::calibration::{
    calibrate_phi_prior, cutoff_from_verdicts, null_verdicts, CutoffCalib, ErrorTarget, PhiCalibration, PhiPriorCalib,
};
use basket_core::config::RunConfig;
use basket_core::designs::{simon_minimax, LiuDesign, Method, SimonDesign, TwoStageDesign};
use basket_core::divergence::{distance, numeric_distance_oracle, DistanceMeasure, ResponseCounts};
use basket_core::harness::{compare_methods, run_method, run_scenario, summarize, OperatingCharacteristics};
use basket_core::inference::{CbhmSpec, McmcConfig, ModelSpec};
use basket_core::kernel::{correlation, CorrelationFn, CorrelationKind};
use basket_core::stats::RngStream;
use common::{limits, report, LimitCheck};

const Q0: f64 = 0.2;
const Q1: f64 = 0.4;
const I: usize = 6;
const ALPHA: f64 = 0.10;
const CALIB_SEED: u64 = 20_240_601;
const FRESH_SEED: u64 = 424_242;
const NULL_REPS: usize = 2000;
const SCENARIO_REPS: usize = 1000;
const MEASURES: [DistanceMeasure; 3] = [
    DistanceMeasure::Bhattacharyya,
    DistanceMeasure::Hellinger,
    DistanceMeasure::SymmetrizedKl,
];

/// Calibrated cutoffs and operating characteristics shared between criteria.
struct Study {
    mcmc: McmcConfig,
    cutoffs: HashMap<String, f64>,
    runs: HashMap<String, OperatingCharacteristics>,
}

impl Study {
    fn new() -> Self {
        Self {
            mcmc: McmcConfig::default(),
            cutoffs: HashMap::new(),
            runs: HashMap::new(),
        }
    }

    /// Final cutoff holding the mean null rejection rate at alpha.
    fn cutoff(&mut self, method: &Method, reps: usize) -> f64 {
        let key = format!("{:?}|{reps}", method.with_q(0.5));
        if let Some(q) = self.cutoffs.get(&key) {
            return *q;
        }
        let calib = CutoffCalib {
            alpha: ALPHA,
            replicates: reps,
            target: ErrorTarget::Mean,
            seed: CALIB_SEED,
            threads: None,
        };
        let (verdicts, _) = null_verdicts(method, &self.mcmc, &calib).unwrap();
        let q = cutoff_from_verdicts(&verdicts, ALPHA, ErrorTarget::Mean).unwrap().q;
        self.cutoffs.insert(key, q);
        q
    }

    /// Operating characteristics of `method` calibrated on `calib_reps` null
    /// trials, then run on `reps` fresh trials under `truth`.
    fn oc(&mut self, label: &str, method: &Method, calib_reps: usize, truth: &[f64], reps: usize) -> OperatingCharacteristics {
        let q = self.cutoff(method, calib_reps);
        let method = method.with_q(q);
        let key = format!("{method:?}|{truth:?}|{reps}");
        if let Some(oc) = self.runs.get(&key) {
            return OperatingCharacteristics {
                label: label.into(),
                ..oc.clone()
            };
        }
        let results = run_method(&method, truth, reps, &self.mcmc, FRESH_SEED, 0).unwrap();
        let oc = summarize(label, truth, &method.rates().q0, results.iter().map(Option::as_ref)).unwrap();
        self.runs.insert(key, oc.clone());
        oc
    }
}

fn truth(dim: usize, sensitive: usize) -> Vec<f64> {
    (0..dim).map(|i| if i < sensitive { Q1 } else { Q0 }).collect()
}

fn simon() -> SimonDesign {
    simon_minimax(Q0, Q1, 0.10, 0.20).unwrap()
}

fn method(name: &str, dim: usize) -> Method {
    match ModelSpec::from_name(name).unwrap() {
        ModelSpec::Liu(model) => Method::Liu(LiuDesign {
            model,
            ..LiuDesign::new(dim, simon(), 0.5, Q0, Q1)
        }),
        model => two_stage(model, dim),
    }
}

fn two_stage(model: ModelSpec, dim: usize) -> Method {
    Method::TwoStage {
        model,
        design: TwoStageDesign::uniform(dim, 14, 24, 0.05, 0.5, Q0, Q1).unwrap(),
    }
}

fn within(x: f64, target: f64, tol: f64) -> bool {
    (x - target).abs() <= tol
}

fn fmt_pct(v: &[f64]) -> String {
    let s: Vec<String> = v.iter().map(|x| format!("{x:.1}")).collect();
    format!("[{}]", s.join(", "))
}

/// Collects check outcomes so the run can finish before reporting failure.
#[derive(Default)]
struct Tally {
    passed: usize,
    failed: Vec<String>,
}

impl Tally {
    fn check(&mut self, id: &str, pass: bool, detail: &str) {
        report(id, pass, detail);
        if pass {
            self.passed += 1;
        } else {
            self.failed.push(id.to_string());
        }
    }
}

fn distances_match_quadrature(t: &mut Tally, _: &mut Study) {
    let n = 24.0;
    for m in MEASURES {
        let tol = if m == DistanceMeasure::SymmetrizedKl { 1e-6 } else { 1e-8 };
        let mut worst: f64 = 0.0;
        for ri in 0..=24 {
            for rj in 0..=24 {
                let a = ResponseCounts::new(n, ri as f64).unwrap();
                let b = ResponseCounts::new(n, rj as f64).unwrap();
                let oracle = numeric_distance_oracle(m, a, b, 20_001).unwrap();
                worst = worst.max((distance(m, a, b) - oracle).abs());
            }
        }
        t.check(
            &format!("1 {} closed form vs quadrature", m.short_name().to_uppercase()),
            worst <= tol,
            &format!("max error {worst:.2e} over 625 pairs (tolerance {tol:.0e})"),
        );
    }
}

fn phi_calibration(measure: DistanceMeasure, corr: CorrelationKind) -> PhiCalibration {
    let mut calib = PhiPriorCalib::new(measure, corr, 2, 24, Q0, Q1);
    calib.m = 10_000;
    calibrate_phi_prior(&calib, &mut RngStream::new(7, 0)).unwrap()
}

fn phi_constants_b_h(t: &mut Tally, _: &mut Study) {
    for (measure, d_target, (lb, ub)) in [
        (DistanceMeasure::Bhattacharyya, 0.995, (0.70, 1.21)),
        (DistanceMeasure::Hellinger, 0.793, (0.87, 1.52)),
    ] {
        let c = phi_calibration(measure, CorrelationKind::Exponential);
        let name = measure.short_name().to_uppercase();
        t.check(
            &format!("2 {name} d_t"),
            within(c.d_t, d_target, 0.02),
            &format!("d_t = {:.4}, expected {d_target} +/- 0.02", c.d_t),
        );
        // a = -ln(rho)/d_t moves by a * dd/d_t; 0.005 covers two-decimal rounding
        let tol = |a: f64| a * 0.02 / d_target + 0.005;
        t.check(
            &format!("2 {name} phi interval"),
            within(c.a_lb, lb, tol(lb)) && within(c.a_ub, ub, tol(ub)),
            &format!(
                "[{:.4}, {:.4}], expected [{lb}, {ub}] +/- [{:.3}, {:.3}]",
                c.a_lb,
                c.a_ub,
                tol(lb),
                tol(ub)
            ),
        );
    }
}

fn phi_constant_kl(t: &mut Tally, _: &mut Study) {
    let c = phi_calibration(DistanceMeasure::SymmetrizedKl, CorrelationKind::SquaredExponential);
    t.check(
        "2 KL d_t",
        within(c.d_t, 2.710, 0.08),
        &format!("d_t = {:.4}, expected 2.710 +/- 0.08", c.d_t),
    );
}

/// Binomial pmf by the multiplicative recurrence, independent of the library's log-space version.
fn pmf(n: u32, p: f64) -> Vec<f64> {
    let mut f = vec![(1.0 - p).powi(n as i32)];
    for k in 1..=n {
        let prev = f[k as usize - 1];
        f.push(prev * (n - k + 1) as f64 / k as f64 * p / (1.0 - p));
    }
    f
}

fn simon_reject_prob(d: &SimonDesign, p: f64) -> f64 {
    let (f1, f2) = (pmf(d.n1, p), pmf(d.n - d.n1, p));
    let mut total = 0.0;
    for (x1, a) in f1.iter().enumerate().skip(d.r1 as usize + 1) {
        for (x2, b) in f2.iter().enumerate() {
            if (x1 + x2) as u32 > d.r {
                total += a * b;
            }
        }
    }
    total
}

fn simon_design(t: &mut Tally, _: &mut Study) {
    let d = simon();
    let (alpha, power) = (simon_reject_prob(&d, Q0), simon_reject_prob(&d, Q1));
    t.check(
        "3 Simon minimax",
        d.n1 == 14 && d.n == 24 && alpha <= 0.10 && power >= 0.80,
        &format!(
            "r1/n1 = {}/{}, r/n = {}/{}, type I {alpha:.4}, power {power:.4}",
            d.r1, d.n1, d.r, d.n
        ),
    );
}

fn conjugate_limits(t: &mut Tally, _: &mut Study) {
    let groups: [(&str, fn() -> Vec<LimitCheck>); 5] = [
        ("independent", limits::independent),
        ("BHM", limits::bhm_single),
        ("EXNEX NEX", limits::exnex_nex),
        ("EXNEX EX", limits::exnex_ex),
        ("mixture", limits::liu_single),
    ];
    for (name, f) in groups {
        let checks = f();
        let detail: Vec<String> = checks.iter().map(|c| c.to_string()).collect();
        t.check(
            &format!("4 {name} limit"),
            checks.iter().all(LimitCheck::passes),
            &detail.join("; "),
        );
    }
}

const TABLE_METHODS: [(&str, &str); 5] = [
    ("Independent", "independent"),
    ("BHM", "bhm"),
    ("EXNEX", "exnex"),
    ("Liu's", "liu"),
    ("CBHM", "cbhm"),
];

fn null_calibration(t: &mut Tally, s: &mut Study) {
    let null = truth(I, 0);
    for (label, name) in TABLE_METHODS {
        let m = method(name, I);
        let oc = s.oc(label, &m, NULL_REPS, &null, NULL_REPS);
        let q = s.cutoff(&m, NULL_REPS);
        t.check(
            &format!("5 {label} null reject"),
            oc.reject_pct.iter().all(|r| (7.5..=12.5).contains(r)),
            &format!("Q = {q:.4}, reject % {} (each in [7.5, 12.5])", fmt_pct(&oc.reject_pct)),
        );
    }
}

fn scenario_oc(s: &mut Study, label: &str, name: &str, sensitive: usize) -> OperatingCharacteristics {
    s.oc(label, &method(name, I), NULL_REPS, &truth(I, sensitive), SCENARIO_REPS)
}

fn all_within(v: &[f64], lo: f64, hi: f64) -> bool {
    v.iter().all(|x| (lo..=hi).contains(x))
}

fn headline_table(t: &mut Tally, s: &mut Study) {
    let tol = 3.5;

    let cbhm = scenario_oc(s, "CBHM", "cbhm", 1);
    let bhm = scenario_oc(s, "BHM", "bhm", 1);
    t.check(
        "6 scenario 2 CBHM sensitive",
        within(cbhm.reject_pct[0], 79.1, tol),
        &format!("{:.1}, expected 79.1 +/- {tol}", cbhm.reject_pct[0]),
    );
    t.check(
        "6 scenario 2 BHM sensitive",
        within(bhm.reject_pct[0], 71.3, tol),
        &format!("{:.1}, expected 71.3 +/- {tol}", bhm.reject_pct[0]),
    );

    let cbhm = scenario_oc(s, "CBHM", "cbhm", 3);
    let bhm = scenario_oc(s, "BHM", "bhm", 3);
    t.check(
        "6 scenario 4 CBHM sensitive",
        all_within(&cbhm.reject_pct[..3], 88.5 - tol, 88.9 + tol),
        &format!("{}, expected 88.5-88.9 +/- {tol}", fmt_pct(&cbhm.reject_pct[..3])),
    );
    t.check(
        "6 scenario 4 CBHM insensitive",
        all_within(&cbhm.reject_pct[3..], 18.8 - tol, 20.2 + tol),
        &format!("{}, expected 18.8-20.2 +/- {tol}", fmt_pct(&cbhm.reject_pct[3..])),
    );
    t.check(
        "6 scenario 4 BHM insensitive",
        all_within(&bhm.reject_pct[3..], 35.0 - tol, 36.3 + tol),
        &format!("{}, expected 35.0-36.3 +/- {tol}", fmt_pct(&bhm.reject_pct[3..])),
    );

    let last = I - 1;
    let cbhm = scenario_oc(s, "CBHM", "cbhm", 5).reject_pct[last];
    let bhm = scenario_oc(s, "BHM", "bhm", 5).reject_pct[last];
    let exnex = scenario_oc(s, "EXNEX", "exnex", 5).reject_pct[last];
    for (label, got, target) in [("CBHM", cbhm, 25.6), ("BHM", bhm, 63.1), ("EXNEX", exnex, 33.6)] {
        t.check(
            &format!("6 scenario 6 {label} insensitive"),
            within(got, target, tol),
            &format!("{got:.1}, expected {target} +/- {tol}"),
        );
    }
    t.check(
        "6 scenario 6 ordering",
        bhm > exnex && exnex > cbhm,
        &format!("BHM {bhm:.1} > EXNEX {exnex:.1} > CBHM {cbhm:.1}"),
    );

    let null = truth(I, 0);
    for (label, name, target) in [("Independent", "independent", 132.0), ("BHM", "bhm", 115.6), ("CBHM", "cbhm", 119.9)] {
        let oc = s.oc(label, &method(name, I), NULL_REPS, &null, NULL_REPS);
        t.check(
            &format!("6 scenario 1 {label} sample size"),
            within(oc.sample_size, target, 2.5),
            &format!("{:.1}, expected {target} +/- 2.5", oc.sample_size),
        );
    }
}

fn prior_sensitivity(t: &mut Tally, s: &mut Study) {
    for k in 1..=4u8 {
        let m = two_stage(ModelSpec::Cbhm(CbhmSpec::prior_setting(k).unwrap()), I);
        let label = format!("CBHM-P{k}");
        let null = s.oc(&label, &m, NULL_REPS, &truth(I, 0), NULL_REPS);
        let six = s.oc(&label, &m, NULL_REPS, &truth(I, 5), SCENARIO_REPS);
        let insensitive = six.reject_pct[I - 1];
        t.check(
            &format!("7 prior setting {k}"),
            all_within(&null.reject_pct, 7.5, 12.5) && (22.0..=33.0).contains(&insensitive),
            &format!(
                "scenario 1 reject % {} (each in [7.5, 12.5]), scenario 6 insensitive {insensitive:.1} (in [22, 33])",
                fmt_pct(&null.reject_pct)
            ),
        );
    }
}

fn quick_mcmc() -> McmcConfig {
    McmcConfig {
        burn_in: 500,
        keep: 1000,
        ..McmcConfig::default()
    }
}

fn properties(t: &mut Tally, _: &mut Study) {
    let mut ok = true;
    let mut count = 0;
    for m in MEASURES {
        for (ni, nj) in [(24.0, 24.0), (14.0, 24.0)] {
            for ri in 0..=ni as u32 {
                for rj in 0..=nj as u32 {
                    let a = ResponseCounts::new(ni, ri as f64).unwrap();
                    let b = ResponseCounts::new(nj, rj as f64).unwrap();
                    let (ab, ba, aa) = (distance(m, a, b), distance(m, b, a), distance(m, a, a));
                    ok &= ab == ba && aa.abs() < 1e-12 && ab >= 0.0;
                    ok &= !(ni == nj && ri != rj) || ab > 0.0;
                    count += 1;
                }
            }
        }
    }
    t.check(
        "8 distance symmetry and identity",
        ok,
        &format!("{count} pairs, symmetric, zero on the diagonal, positive off it"),
    );

    let mut ok = true;
    for kind in [CorrelationKind::Exponential, CorrelationKind::SquaredExponential] {
        for phi in [0.01, 0.1, 0.5, 1.0, 2.0, 10.0] {
            let f = CorrelationFn::new(kind, phi).unwrap();
            let mut last = correlation(f, 0.0);
            ok &= last == 1.0;
            for k in 1..=400 {
                let c = correlation(f, k as f64 * 0.025);
                ok &= c <= last && c >= 0.0;
                last = c;
            }
            let steeper = CorrelationFn::new(kind, phi * 2.0).unwrap();
            ok &= correlation(steeper, 0.7) <= correlation(f, 0.7);
        }
    }
    t.check("8 kernel monotonicity", ok, "non-increasing in d and in phi over both kernels");

    let mcmc = quick_mcmc();
    let mut stops = Vec::new();
    let mut rejects = Vec::new();
    for name in ["independent", "bhm", "exnex", "cbhm"] {
        let Method::TwoStage { model, design } = method(name, 4) else {
            unreachable!()
        };
        let no_futility = Method::TwoStage {
            model,
            design: TwoStageDesign { qf: 0.0, ..design.clone() },
        };
        let never = Method::TwoStage {
            model,
            design: design.with_q(1.0),
        };
        let a = run_method(&no_futility, &[0.2; 4], 40, &mcmc, 3, 0).unwrap();
        let b = run_method(&never, &[0.4; 4], 40, &mcmc, 3, 0).unwrap();
        stops.push(a.iter().flatten().map(|r| r.stopped_early.iter().filter(|s| **s).count()).sum::<usize>());
        rejects.push(b.iter().flatten().map(|r| r.rejected.iter().filter(|s| **s).count()).sum::<usize>());
    }
    t.check(
        "8 trial invariants",
        stops.iter().all(|s| *s == 0) && rejects.iter().all(|r| *r == 0),
        &format!("stops with Qf = 0: {stops:?}; rejections with Q = 1: {rejects:?}"),
    );

    let text = r#"
name = "repro"
indications = 4
sensitive = 2
replicates = 30
seed = 5

[[methods]]
name = "bhm"
q = 0.9

[[methods]]
name = "exnex"
q = 0.9

[[methods]]
name = "liu"
q = 0.9

[[methods]]
name = "cbhm"
q = 0.9

[mcmc]
burn_in = 500
keep = 1000
"#;
    let csv = |cfg: &RunConfig| {
        let ocs = run_scenario(&cfg.scenario(&BTreeMap::new()).unwrap()).unwrap();
        let mut out = Vec::new();
        compare_methods(&ocs, &mut out).unwrap();
        out
    };
    let cfg = RunConfig::from_toml(text).unwrap().effective().unwrap();
    let echoed = RunConfig::from_toml(&cfg.to_toml().unwrap()).unwrap();
    let (a, b) = (csv(&cfg), csv(&echoed));
    t.check(
        "8 bit reproducibility",
        a == b && !a.is_empty(),
        &format!("{} CSV bytes, identical from the echoed config", a.len()),
    );
}

fn twelve_indications(t: &mut Tally, s: &mut Study) {
    let dim = 12;
    let (calib_reps, reps) = (1000, 500);
    let truth = truth(dim, 10);
    let mut insensitive = Vec::new();
    for (label, name) in [("BHM", "bhm"), ("EXNEX", "exnex"), ("CBHM", "cbhm")] {
        let oc = s.oc(label, &method(name, dim), calib_reps, &truth, reps);
        insensitive.push(oc.reject_pct[10..].iter().sum::<f64>() / 2.0);
    }
    let (bhm, exnex, cbhm) = (insensitive[0], insensitive[1], insensitive[2]);
    t.check(
        "figure ordering at 12 indications",
        cbhm < exnex && exnex < bhm,
        &format!("10 of 12 sensitive, mean insensitive reject: CBHM {cbhm:.1} < EXNEX {exnex:.1} < BHM {bhm:.1}"),
    );
}

type Criterion = fn(&mut Tally, &mut Study);

fn main() {
    let criteria: [(&str, Criterion); 10] = [
        ("1 distances", distances_match_quadrature),
        ("2 calibration constants B H", phi_constants_b_h),
        ("2 calibration constants KL", phi_constant_kl),
        ("3 simon", simon_design),
        ("4 conjugate limits", conjugate_limits),
        ("5 null calibration", null_calibration),
        ("6 headline table", headline_table),
        ("7 prior sensitivity", prior_sensitivity),
        ("8 properties", properties),
        ("figure ordering", twelve_indications),
    ];
    // libtest flags such as --nocapture may be passed through; only a bare word filters
    let filter = std::env::args().skip(1).find(|a| !a.starts_with('-'));
    let mut tally = Tally::default();
    let mut study = Study::new();
    for (name, run) in criteria {
        if filter.as_deref().is_some_and(|f| !name.contains(f)) {
            continue;
        }
        let start = Instant::now();
        run(&mut tally, &mut study);
        println!("    ({name}: {:.1} s)", start.elapsed().as_secs_f64());
    }
    println!(
        "\nacceptance: {} passed, {} failed{}",
        tally.passed,
        tally.failed.len(),
        if tally.failed.is_empty() {
            String::new()
        } else {
            format!(" ({})", tally.failed.join(", "))
        }
    );
    if !tally.failed.is_empty() {
        std::process::exit(1);
    }
}
