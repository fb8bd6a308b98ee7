use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Prior on a variance hyperparameter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "dist", rename_all = "snake_case", deny_unknown_fields)]
pub enum VariancePrior {
    /// Inverse gamma with shape and rate.
    InvGamma { shape: f64, rate: f64 },
    /// Normal with the given mean and variance, truncated to `(lower, ∞)`.
    TruncatedNormal { mean: f64, var: f64, lower: f64 },
    Uniform { lower: f64, upper: f64 },
}

impl VariancePrior {
    pub fn inv_gamma(shape: f64, rate: f64) -> Self {
        VariancePrior::InvGamma { shape, rate }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            VariancePrior::InvGamma { shape, rate } => shape > 0.0 && rate > 0.0,
            VariancePrior::TruncatedNormal { var, lower, .. } => var > 0.0 && lower >= 0.0,
            VariancePrior::Uniform { lower, upper } => lower >= 0.0 && upper > lower,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid variance prior {self:?}")))
        }
    }

    /// Log density up to an additive constant.
    pub fn ln_density(&self, v: f64) -> f64 {
        if !(v > 0.0) {
            return f64::NEG_INFINITY;
        }
        match *self {
            VariancePrior::InvGamma { shape, rate } => -(shape + 1.0) * v.ln() - rate / v,
            VariancePrior::TruncatedNormal { mean, var, lower } => {
                if v <= lower {
                    f64::NEG_INFINITY
                } else {
                    -0.5 * (v - mean) * (v - mean) / var
                }
            }
            VariancePrior::Uniform { lower, upper } => {
                if v > lower && v < upper {
                    0.0
                } else {
                    f64::NEG_INFINITY
                }
            }
        }
    }

    /// A point inside the support used to start chains.
    pub fn initial(&self) -> f64 {
        match *self {
            VariancePrior::InvGamma { .. } => 1.0,
            VariancePrior::TruncatedNormal { lower, .. } => lower.max(1.0),
            VariancePrior::Uniform { lower, upper } => 0.5 * (lower + upper),
        }
    }
}

/// Prior on the correlation range parameter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "dist", rename_all = "snake_case", deny_unknown_fields)]
pub enum PhiPrior {
    Gamma { shape: f64, rate: f64 },
    Uniform { lower: f64, upper: f64 },
}

impl PhiPrior {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            PhiPrior::Gamma { shape, rate } => shape > 0.0 && rate > 0.0,
            PhiPrior::Uniform { lower, upper } => lower >= 0.0 && upper > lower,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid range prior {self:?}")))
        }
    }

    pub fn ln_density(&self, phi: f64) -> f64 {
        if !(phi > 0.0) {
            return f64::NEG_INFINITY;
        }
        match *self {
            PhiPrior::Gamma { shape, rate } => (shape - 1.0) * phi.ln() - rate * phi,
            PhiPrior::Uniform { lower, upper } => {
                if phi > lower && phi < upper {
                    0.0
                } else {
                    f64::NEG_INFINITY
                }
            }
        }
    }

    pub fn initial(&self) -> f64 {
        match *self {
            PhiPrior::Gamma { shape, rate } => shape / rate,
            PhiPrior::Uniform { lower, upper } => 0.5 * (lower + upper),
        }
    }
}
