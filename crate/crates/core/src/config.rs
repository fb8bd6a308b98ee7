//! TOML run configuration.
//!
//! Every key is optional; omitted keys take the defaults of the simulation
//! study (six indications, `q0 = 0.2`, `q1 = 0.4`, `n1 = 14`, `n = 24`,
//! `Qf = 0.05`, 5000 burn-in and 10000 kept iterations). Unknown keys are
//! errors. [`RunConfig::effective`] fills every default so the echoed file
//! reproduces a run exactly.
//!
//! ```toml
//! name = "null"
//! indications = 6
//! sensitive = 0          # or: truth = [0.4, 0.2, ...]
//! replicates = 1000
//! seed = 1
//!
//! [[methods]]
//! name = "cbhm"
//! q = 0.93               # calibrated final cutoff
//!
//! [[methods]]
//! name = "bhm"
//! spec = { model = "bhm", mean_prior_var = 100.0 }
//! ```

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::calibration::CutoffCalib;
use crate::designs::{simon_minimax, LiuDesign, Method, SimonDesign, TwoStageDesign};
use crate::error::{Error, Result};
use crate::harness::{LabeledMethod, ScenarioConfig};
use crate::inference::{CbhmSpec, LiuSpec, McmcConfig, ModelSpec, Rates};

/// A rate given once for all indications or once per indication.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RateInput {
    Common(f64),
    Each(Vec<f64>),
}

impl RateInput {
    fn expand(&self, dim: usize, what: &str) -> Result<Vec<f64>> {
        match self {
            RateInput::Common(x) => Ok(vec![*x; dim]),
            RateInput::Each(v) if v.len() == dim => Ok(v.clone()),
            RateInput::Each(v) => Err(Error::Config(format!(
                "`{what}` has {} entries for {dim} indications",
                v.len()
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LiuConfig {
    pub gamma: f64,
    pub c: f64,
    pub predictive_draws: usize,
    /// Heterogeneous-path design; searched as the minimax design when absent.
    pub simon: Option<SimonDesign>,
    pub simon_alpha: f64,
    pub simon_power: f64,
}

impl Default for LiuConfig {
    fn default() -> Self {
        Self {
            gamma: 0.2,
            c: 0.5,
            predictive_draws: 0,
            simon: None,
            simon_alpha: 0.10,
            simon_power: 0.80,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MethodConfig {
    /// Preset: independent, bhm, exnex, liu, cbhm (= cbhm_b), cbhm_h, cbhm_kl,
    /// or cbhm_prior1 to cbhm_prior4.
    pub name: String,
    #[serde(default)]
    pub label: Option<String>,
    /// Full model specification, overriding the preset's hyperparameters.
    #[serde(default)]
    pub spec: Option<ModelSpec>,
    /// Final cutoff; required by `simulate` unless supplied by calibration.
    #[serde(default)]
    pub q: Option<f64>,
}

impl MethodConfig {
    pub fn named(name: &str) -> Self {
        Self {
            name: name.to_string(),
            label: None,
            spec: None,
            q: None,
        }
    }

    fn preset(&self) -> Result<(ModelSpec, &'static str)> {
        let lower = self.name.to_ascii_lowercase();
        Ok(match lower.as_str() {
            "independent" | "ind" => (ModelSpec::from_name("independent")?, "Independent"),
            "bhm" => (ModelSpec::from_name("bhm")?, "BHM"),
            "exnex" => (ModelSpec::from_name("exnex")?, "EXNEX"),
            "liu" => (ModelSpec::Liu(LiuSpec::default()), "Liu's"),
            "cbhm" | "cbhm_b" => (ModelSpec::Cbhm(CbhmSpec::bhattacharyya()), "CBHM"),
            "cbhm_h" => (ModelSpec::Cbhm(CbhmSpec::hellinger()), "CBHM-H"),
            "cbhm_kl" => (ModelSpec::Cbhm(CbhmSpec::kullback_leibler()), "CBHM-KL"),
            "cbhm_prior1" => (ModelSpec::Cbhm(CbhmSpec::prior_setting(1)?), "CBHM-P1"),
            "cbhm_prior2" => (ModelSpec::Cbhm(CbhmSpec::prior_setting(2)?), "CBHM-P2"),
            "cbhm_prior3" => (ModelSpec::Cbhm(CbhmSpec::prior_setting(3)?), "CBHM-P3"),
            "cbhm_prior4" => (ModelSpec::Cbhm(CbhmSpec::prior_setting(4)?), "CBHM-P4"),
            _ => return Err(Error::Config(format!("unknown method `{}`", self.name))),
        })
    }

    /// Copy with label and spec filled from the preset.
    pub fn resolved(&self) -> Result<Self> {
        let (spec, label) = self.preset()?;
        let spec = self.spec.unwrap_or(spec);
        spec.validate()?;
        if let Some(q) = self.q {
            if !(0.0..=1.0).contains(&q) {
                return Err(Error::Config(format!("method `{}`: Q = {q} outside [0, 1]", self.name)));
            }
        }
        Ok(Self {
            name: self.name.clone(),
            label: Some(self.label.clone().unwrap_or_else(|| label.to_string())),
            spec: Some(spec),
            q: self.q,
        })
    }

    pub fn label(&self) -> String {
        self.label.clone().unwrap_or_else(|| self.name.clone())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub name: String,
    pub indications: usize,
    pub q0: RateInput,
    pub q1: RateInput,
    /// True response rates; when absent the first `sensitive` indications are
    /// at `q1` and the rest at `q0`.
    pub truth: Option<Vec<f64>>,
    pub sensitive: usize,
    pub n1: u32,
    pub n: u32,
    pub qf: f64,
    pub replicates: usize,
    pub seed: u64,
    pub threads: Option<usize>,
    /// Shorthand for a single entry in `methods`.
    pub method: Option<String>,
    pub methods: Vec<MethodConfig>,
    pub liu: LiuConfig,
    pub mcmc: McmcConfig,
    pub calibration: CutoffCalib,
    pub output_dir: PathBuf,
    /// Also write per-replicate records.
    pub write_replicates: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            name: "scenario".into(),
            indications: 6,
            q0: RateInput::Common(0.2),
            q1: RateInput::Common(0.4),
            truth: None,
            sensitive: 0,
            n1: 14,
            n: 24,
            qf: 0.05,
            replicates: 1000,
            seed: 1,
            threads: None,
            method: None,
            methods: Vec::new(),
            liu: LiuConfig::default(),
            mcmc: McmcConfig::default(),
            calibration: CutoffCalib::default(),
            output_dir: PathBuf::from("."),
            write_replicates: false,
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.effective()
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(format!("cannot serialize config: {e}")))
    }

    /// Validates and fills every default: explicit truth and rate vectors,
    /// resolved method specs and the heterogeneous-path Simon design.
    pub fn effective(&self) -> Result<Self> {
        let dim = self.indications;
        if dim == 0 {
            return Err(Error::Config("indications must be at least 1".into()));
        }
        let q0 = self.q0.expand(dim, "q0")?;
        let q1 = self.q1.expand(dim, "q1")?;
        Rates {
            q0: q0.clone(),
            q1: q1.clone(),
        }
        .validate(dim)?;
        let truth = match &self.truth {
            Some(t) if t.len() != dim => {
                return Err(Error::Config(format!("`truth` has {} entries for {dim} indications", t.len())))
            }
            Some(t) => t.clone(),
            None if self.sensitive > dim => {
                return Err(Error::Config(format!("{} sensitive of {dim} indications", self.sensitive)))
            }
            None => (0..dim).map(|i| if i < self.sensitive { q1[i] } else { q0[i] }).collect(),
        };
        if let Some(p) = truth.iter().find(|p| !(**p > 0.0 && **p < 1.0)) {
            return Err(Error::Config(format!("true response rate {p} outside (0, 1)")));
        }
        if !(self.n1 > 0 && self.n1 <= self.n) {
            return Err(Error::Config(format!("need 0 < n1 <= n, got ({}, {})", self.n1, self.n)));
        }
        if !(0.0..=1.0).contains(&self.qf) {
            return Err(Error::Config(format!("Qf = {} outside [0, 1]", self.qf)));
        }
        if self.replicates == 0 {
            return Err(Error::Config("replicates must be at least 1".into()));
        }
        if self.threads == Some(0) {
            return Err(Error::Config("threads must be at least 1".into()));
        }
        self.mcmc.validate()?;
        self.calibration.validate()?;
        let mut methods = self.methods.clone();
        if let Some(m) = &self.method {
            methods.insert(0, MethodConfig::named(m));
        }
        let methods: Vec<MethodConfig> = methods.iter().map(MethodConfig::resolved).collect::<Result<_>>()?;
        let mut labels: Vec<String> = methods.iter().map(MethodConfig::label).collect();
        labels.sort();
        if labels.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Config("method labels must be unique".into()));
        }
        let mut liu = self.liu.clone();
        if liu.simon.is_none() && methods.iter().any(|m| matches!(m.spec, Some(ModelSpec::Liu(_)))) {
            if q0.iter().any(|&q| q != q0[0]) || q1.iter().any(|&q| q != q1[0]) {
                return Err(Error::Config(
                    "the Simon design must be given explicitly when rates differ by indication".into(),
                ));
            }
            liu.simon = Some(simon_minimax(q0[0], q1[0], liu.simon_alpha, 1.0 - liu.simon_power)?);
        }
        if let Some(s) = liu.simon {
            SimonDesign::new(s.r1, s.n1, s.r, s.n)?;
        }
        Ok(Self {
            q0: RateInput::Each(q0),
            q1: RateInput::Each(q1),
            truth: Some(truth),
            method: None,
            methods,
            liu,
            ..self.clone()
        })
    }

    fn vectors(&self) -> Result<(Vec<f64>, Vec<f64>)> {
        Ok((self.q0.expand(self.indications, "q0")?, self.q1.expand(self.indications, "q1")?))
    }

    pub fn rates(&self) -> Result<Rates> {
        let (q0, q1) = self.vectors()?;
        Ok(Rates { q0, q1 })
    }

    pub fn truth(&self) -> Result<Vec<f64>> {
        Ok(self.effective()?.truth.unwrap_or_default())
    }

    /// The trial procedure of one resolved method entry with cutoff `q`.
    pub fn build_method(&self, entry: &MethodConfig, q: f64) -> Result<Method> {
        let entry = entry.resolved()?;
        let rates = self.rates()?;
        let spec = entry.spec.expect("resolved");
        Ok(match spec {
            ModelSpec::Liu(model) => {
                let simon = match self.liu.simon {
                    Some(s) => s,
                    None => simon_minimax(rates.q0[0], rates.q1[0], self.liu.simon_alpha, 1.0 - self.liu.simon_power)?,
                };
                Method::Liu(LiuDesign {
                    gamma: self.liu.gamma,
                    c: self.liu.c,
                    q,
                    simon,
                    predictive_draws: self.liu.predictive_draws,
                    rates,
                    model,
                })
            }
            model => Method::TwoStage {
                model,
                design: TwoStageDesign {
                    n1: vec![self.n1; self.indications],
                    n: vec![self.n; self.indications],
                    qf: self.qf,
                    q,
                    rates,
                },
            },
        })
    }

    /// Methods with their cutoffs, taken from `cutoffs` (by label) or the
    /// method entries. A method without a cutoff is a configuration error.
    pub fn labeled_methods(&self, cutoffs: &BTreeMap<String, f64>) -> Result<Vec<LabeledMethod>> {
        let eff = self.effective()?;
        if eff.methods.is_empty() {
            return Err(Error::Config("no methods configured".into()));
        }
        eff.methods
            .iter()
            .map(|m| {
                let label = m.label();
                let q = cutoffs.get(&label).copied().or(m.q).ok_or_else(|| {
                    Error::Config(format!("method `{label}` has no calibrated cutoff Q"))
                })?;
                Ok(LabeledMethod {
                    method: eff.build_method(m, q)?,
                    label,
                })
            })
            .collect()
    }

    pub fn scenario(&self, cutoffs: &BTreeMap<String, f64>) -> Result<ScenarioConfig> {
        let eff = self.effective()?;
        let cfg = ScenarioConfig {
            name: eff.name.clone(),
            truth: eff.truth.clone().unwrap_or_default(),
            methods: eff.labeled_methods(cutoffs)?,
            replicates: eff.replicates,
            mcmc: eff.mcmc.clone(),
            seed: eff.seed,
            threads: eff.threads,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Calibrated cutoffs by method label, as written by `calibrate-q`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CutoffFile {
    pub cutoffs: BTreeMap<String, f64>,
}

impl CutoffFile {
    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(format!("cannot serialize cutoffs: {e}")))
    }
}
