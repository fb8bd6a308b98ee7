use std::collections::BTreeMap;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use basket_core::calibration::{calibrate_final_cutoff, calibrate_phi_prior, PhiPriorCalib};
use basket_core::config::{CutoffFile, MethodConfig, RunConfig};
use basket_core::designs::PatientOutcomes;
use basket_core::divergence::{distance, DistanceMeasure, ResponseCounts};
use basket_core::harness::{compare_methods, simulate_scenario, summarize, write_replicates, OperatingCharacteristics};
use basket_core::inference::{fit, McmcConfig, Rates};
use basket_core::kernel::CorrelationKind;
use basket_core::stats::RngStream;
use basket_core::Error;
use clap::{Args, Parser, Subcommand};

const EXIT_FAILURE: u8 = 1;
const EXIT_CONFIG: u8 = 3;
const EXIT_CALIBRATION: u8 = 4;
const EXIT_CHAIN: u8 = 5;

#[derive(Parser)]
#[command(name = "basket", version, about = "Bayesian basket-trial analysis and simulation")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Distances between the beta posteriors of indications.
    Distance {
        /// Sample size, one value or one per indication.
        #[arg(long, value_delimiter = ',', default_value = "24")]
        n: Vec<u32>,
        /// Responders per indication.
        #[arg(long, value_delimiter = ',', required = true)]
        r: Vec<u32>,
        /// b, h, kl or all.
        #[arg(long, default_value = "all")]
        measure: String,
    },
    /// Fit one model to observed counts.
    Fit {
        #[arg(long)]
        model: String,
        #[arg(long, value_delimiter = ',', default_value = "24")]
        n: Vec<u32>,
        #[arg(long, value_delimiter = ',', required = true)]
        r: Vec<u32>,
        #[arg(long, default_value_t = 0.2)]
        q0: f64,
        #[arg(long, default_value_t = 0.4)]
        q1: f64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        burn_in: Option<usize>,
        #[arg(long)]
        keep: Option<usize>,
    },
    /// Run a single simulated trial for each configured method.
    Trial {
        #[command(flatten)]
        run: RunArgs,
        /// True response rates, overriding the config.
        #[arg(long, value_delimiter = ',')]
        truth: Option<Vec<f64>>,
        /// Final cutoff for methods without one in the config.
        #[arg(long)]
        q: Option<f64>,
    },
    /// Calibrate the shape of the gamma prior on the correlation range.
    CalibratePhi {
        #[arg(long, default_value = "b")]
        measure: DistanceMeasure,
        #[arg(long, default_value = "exp")]
        corr: CorrelationKind,
        #[arg(long, default_value_t = 6)]
        indications: usize,
        #[arg(long, default_value_t = 24)]
        n: u32,
        #[arg(long, default_value_t = 0.2)]
        q0: f64,
        #[arg(long, default_value_t = 0.4)]
        q1: f64,
        #[arg(long, default_value_t = 5000)]
        m: usize,
        #[arg(long, default_value_t = 0.05)]
        alpha_q: f64,
        #[arg(long, default_value_t = 0.3)]
        rho_lb: f64,
        #[arg(long, default_value_t = 0.5)]
        rho_ub: f64,
        /// Draw `a` uniformly from the interval.
        #[arg(long)]
        draw: bool,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Also write the result to this file.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Calibrate the final cutoff Q of every configured method under the global null.
    CalibrateQ {
        #[command(flatten)]
        run: RunArgs,
        /// Cutoff file to write; defaults to `<output_dir>/cutoffs_<name>.toml`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Simulate a scenario and write its operating characteristics.
    Simulate {
        #[command(flatten)]
        run: RunArgs,
        /// Calibrated cutoffs written by `calibrate-q`.
        #[arg(long)]
        cutoffs: Option<PathBuf>,
        /// Calibrate missing cutoffs before simulating.
        #[arg(long)]
        calibrate: bool,
    },
    /// Run several configs on one scenario and write a side-by-side table.
    Compare {
        #[arg(long = "config", required = true)]
        configs: Vec<PathBuf>,
        #[arg(long)]
        cutoffs: Option<PathBuf>,
        #[arg(long)]
        threads: Option<usize>,
        /// Output file; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    replicates: Option<usize>,
    #[arg(long)]
    threads: Option<usize>,
    /// Full-scale run with 5000 replicates.
    #[arg(long)]
    full: bool,
}

impl RunArgs {
    fn load(&self) -> Result<RunConfig, Error> {
        let mut cfg = RunConfig::from_path(&self.config)?;
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if self.full {
            cfg.replicates = 5000;
        }
        if let Some(r) = self.replicates {
            cfg.replicates = r;
        }
        if self.threads.is_some() {
            cfg.threads = self.threads;
        }
        cfg.effective()
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.cmd) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                Error::Config(_) => EXIT_CONFIG,
                Error::Calibration(_) => EXIT_CALIBRATION,
                Error::ChainFailure(_) => EXIT_CHAIN,
                _ => EXIT_FAILURE,
            })
        }
    }
}

fn io_err(path: &Path) -> impl Fn(io::Error) -> Error + '_ {
    move |e| Error::Config(format!("cannot write {}: {e}", path.display()))
}

fn write_file(path: &Path, text: &str) -> Result<(), Error> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    fs::write(path, text).map_err(io_err(path))
}

fn counts(n: &[u32], r: &[u32]) -> Result<Vec<(u32, u32)>, Error> {
    let n = match n.len() {
        1 => vec![n[0]; r.len()],
        k if k == r.len() => n.to_vec(),
        _ => return Err(Error::Argument("--n needs one value or one per indication".into())),
    };
    Ok(n.into_iter().zip(r.iter().copied()).collect())
}

fn run(cmd: Cmd) -> Result<u8, Error> {
    let stdout = io::stdout();
    let mut out = stdout.lock();
    let w = |e: io::Error| Error::Config(format!("cannot write output: {e}"));
    match cmd {
        Cmd::Distance { n, r, measure } => {
            let measures: Vec<DistanceMeasure> = if measure == "all" {
                DistanceMeasure::ALL.to_vec()
            } else {
                vec![measure.parse()?]
            };
            let c: Vec<ResponseCounts> = counts(&n, &r)?
                .into_iter()
                .map(|(n, r)| ResponseCounts::new(n as f64, r as f64))
                .collect::<Result<_, _>>()?;
            writeln!(out, "i,j,measure,distance").map_err(w)?;
            for i in 0..c.len() {
                for j in i + 1..c.len() {
                    for m in &measures {
                        let d = distance(*m, c[i], c[j]);
                        writeln!(out, "{},{},{},{d:.10}", i + 1, j + 1, m.short_name()).map_err(w)?;
                    }
                }
            }
        }
        Cmd::Fit { model, n, r, q0, q1, seed, burn_in, keep } => {
            let spec = MethodConfig::named(&model).resolved()?.spec.expect("resolved");
            let data = counts(&n, &r)?
                .into_iter()
                .map(|(n, r)| basket_core::divergence::IndicationData::new(n, r))
                .collect::<Result<Vec<_>, _>>()?;
            let mut mcmc = McmcConfig::default();
            mcmc.burn_in = burn_in.unwrap_or(mcmc.burn_in);
            mcmc.keep = keep.unwrap_or(mcmc.keep);
            let rates = Rates::common(q0, q1, data.len());
            let post = fit(&spec, &data, &rates, &mcmc, &mut RngStream::new(seed, 0))?;
            writeln!(out, "indication,n,r,mean,sd,prob_above_q0").map_err(w)?;
            for (i, d) in data.iter().enumerate() {
                writeln!(
                    out,
                    "{},{},{},{:.6},{:.6},{:.6}",
                    i + 1,
                    d.n(),
                    d.r(),
                    post.mean(i),
                    post.sd(i),
                    post.prob_exceeds(i, q0)
                )
                .map_err(w)?;
            }
        }
        Cmd::Trial { run, truth, q } => {
            let mut cfg = run.load()?;
            if let Some(t) = truth {
                cfg.truth = Some(t);
                cfg = cfg.effective()?;
            }
            let truth = cfg.truth()?;
            let mut cutoffs = BTreeMap::new();
            if let Some(q) = q {
                for m in cfg.methods.iter().filter(|m| m.q.is_none()) {
                    cutoffs.insert(m.label(), q);
                }
            }
            let methods = cfg.labeled_methods(&cutoffs)?;
            let max_n = methods[0].method.max_n();
            let outcomes = PatientOutcomes::draw(&truth, &max_n, &mut RngStream::new(cfg.seed, 0))?;
            writeln!(out, "method,indication,enrolled,responders,stopped,rejected,estimate").map_err(w)?;
            for (j, m) in methods.iter().enumerate() {
                let t = m.method.run(&outcomes, &cfg.mcmc, &mut RngStream::new(cfg.seed, 1 + j as u64))?;
                for i in 0..t.dim() {
                    writeln!(
                        out,
                        "{},{},{},{},{},{},{:.4}",
                        m.label,
                        i + 1,
                        t.enrolled[i],
                        t.responders[i],
                        t.stopped_early[i] as u8,
                        t.rejected[i] as u8,
                        t.estimates[i]
                    )
                    .map_err(w)?;
                }
            }
        }
        Cmd::CalibratePhi {
            measure,
            corr,
            indications,
            n,
            q0,
            q1,
            m,
            alpha_q,
            rho_lb,
            rho_ub,
            draw,
            seed,
            out: path,
        } => {
            let mut calib = PhiPriorCalib::new(measure, corr, indications, n, q0, q1);
            calib.m = m;
            calib.alpha_q = alpha_q;
            calib.rho_lb = rho_lb;
            calib.rho_ub = rho_ub;
            calib.draw = draw;
            let res = calibrate_phi_prior(&calib, &mut RngStream::new(seed, 0))?;
            let text = format!(
                "measure = \"{}\"\ncorr = \"{}\"\nd_t = {:?}\na_lb = {:?}\na_ub = {:?}\na = {:?}\n",
                measure.short_name(),
                match corr {
                    CorrelationKind::Exponential => "exp",
                    CorrelationKind::SquaredExponential => "sqexp",
                },
                res.d_t,
                res.a_lb,
                res.a_ub,
                res.a
            );
            write!(out, "{text}").map_err(w)?;
            if let Some(p) = path {
                write_file(&p, &text)?;
            }
        }
        Cmd::CalibrateQ { run, out: path } => {
            let cfg = run.load()?;
            let cutoffs = calibrate_all(&cfg, &mut out)?;
            let path = path.unwrap_or_else(|| cfg.output_dir.join(format!("cutoffs_{}.toml", cfg.name)));
            write_file(&path, &CutoffFile { cutoffs }.to_toml()?)?;
            writeln!(out, "wrote {}", path.display()).map_err(w)?;
        }
        Cmd::Simulate { run, cutoffs, calibrate } => {
            let mut cfg = run.load()?;
            let mut given = match &cutoffs {
                Some(p) => CutoffFile::read(p)?.cutoffs,
                None => BTreeMap::new(),
            };
            if calibrate {
                let missing: Vec<MethodConfig> = cfg
                    .methods
                    .iter()
                    .filter(|m| m.q.is_none() && !given.contains_key(&m.label()))
                    .cloned()
                    .collect();
                if !missing.is_empty() {
                    let sub = RunConfig {
                        methods: missing,
                        ..cfg.clone()
                    };
                    given.extend(calibrate_all(&sub, &mut out)?);
                }
            }
            // the echoed config carries the cutoffs actually used
            for m in &mut cfg.methods {
                if let Some(q) = given.get(&m.label()) {
                    m.q = Some(*q);
                }
            }
            let scenario = cfg.scenario(&BTreeMap::new())?;
            let runs = simulate_scenario(&scenario)?;
            let q0 = cfg.rates()?.q0;
            let ocs: Vec<OperatingCharacteristics> = runs
                .iter()
                .map(|r| summarize(&r.label, &scenario.truth, &q0, r.results.iter().map(Option::as_ref)))
                .collect::<Result<_, _>>()?;
            let dir = &cfg.output_dir;
            let oc_path = dir.join(format!("oc_{}.csv", cfg.name));
            let mut buf = Vec::new();
            compare_methods(&ocs, &mut buf)?;
            write_file(&oc_path, &String::from_utf8_lossy(&buf))?;
            write_file(&dir.join(format!("{}.effective.toml", cfg.name)), &cfg.to_toml()?)?;
            if cfg.write_replicates {
                let mut buf = Vec::new();
                write_replicates(&runs, &mut buf)?;
                write_file(&dir.join(format!("replicates_{}.csv", cfg.name)), &String::from_utf8_lossy(&buf))?;
            }
            out.write_all(&buf_or_table(&ocs)?).map_err(w)?;
            writeln!(out, "wrote {}", oc_path.display()).map_err(w)?;
            if ocs.iter().any(|o| 2 * o.failed > o.replicates) {
                eprintln!("error: more than half of the replicates of a method failed");
                return Ok(EXIT_CHAIN);
            }
        }
        Cmd::Compare { configs, cutoffs, threads, out: path } => {
            let given = match &cutoffs {
                Some(p) => CutoffFile::read(p)?.cutoffs,
                None => BTreeMap::new(),
            };
            let mut first: Option<RunConfig> = None;
            let mut ocs = Vec::new();
            for p in &configs {
                let mut cfg = RunConfig::from_path(p)?;
                if threads.is_some() {
                    cfg.threads = threads;
                }
                if let Some(f) = &first {
                    let same = f.truth == cfg.truth
                        && f.q0 == cfg.q0
                        && f.q1 == cfg.q1
                        && (f.n1, f.n, f.qf, f.replicates, f.seed) == (cfg.n1, cfg.n, cfg.qf, cfg.replicates, cfg.seed);
                    if !same {
                        return Err(Error::Config(format!(
                            "{} defines a different scenario than {}",
                            p.display(),
                            configs[0].display()
                        )));
                    }
                } else {
                    first = Some(cfg.clone());
                }
                let scenario = cfg.scenario(&given)?;
                let q0 = cfg.rates()?.q0;
                for r in simulate_scenario(&scenario)? {
                    ocs.push(summarize(&r.label, &scenario.truth, &q0, r.results.iter().map(Option::as_ref))?);
                }
            }
            let table = buf_or_table(&ocs)?;
            match path {
                Some(p) => write_file(&p, &String::from_utf8_lossy(&table))?,
                None => out.write_all(&table).map_err(w)?,
            }
            if ocs.iter().any(|o| 2 * o.failed > o.replicates) {
                eprintln!("error: more than half of the replicates of a method failed");
                return Ok(EXIT_CHAIN);
            }
        }
    }
    Ok(0)
}

fn buf_or_table(ocs: &[OperatingCharacteristics]) -> Result<Vec<u8>, Error> {
    let mut buf = Vec::new();
    compare_methods(ocs, &mut buf)?;
    Ok(buf)
}

fn calibrate_all(cfg: &RunConfig, out: &mut impl Write) -> Result<BTreeMap<String, f64>, Error> {
    let mut calib = cfg.calibration.clone();
    if calib.threads.is_none() {
        calib.threads = cfg.threads;
    }
    let mut cutoffs = BTreeMap::new();
    for m in &cfg.methods {
        let method = cfg.build_method(m, 0.5)?;
        let res = calibrate_final_cutoff(&method, &cfg.mcmc, &calib)?;
        let rej: Vec<String> = res.rejection.iter().map(|r| format!("{:.1}", 100.0 * r)).collect();
        writeln!(
            out,
            "{}: Q = {:.6} (null reject % {}; {} failed)",
            m.label(),
            res.q,
            rej.join(" "),
            res.failed
        )
        .map_err(|e| Error::Config(format!("cannot write output: {e}")))?;
        cutoffs.insert(m.label(), res.q);
    }
    Ok(cutoffs)
}
