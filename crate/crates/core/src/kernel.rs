//! Correlation functions over statistical distances and the tie-breaking preprocessor.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::divergence::{distance, DistanceMeasure, ResponseCounts};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorrelationKind {
    Exponential,
    SquaredExponential,
}

impl CorrelationKind {
    /// `d` or `d²`, the quantity multiplied by φ inside the exponent.
    #[inline]
    pub fn transform(&self, d: f64) -> f64 {
        match self {
            CorrelationKind::Exponential => d,
            CorrelationKind::SquaredExponential => d * d,
        }
    }
}

impl fmt::Display for CorrelationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CorrelationKind::Exponential => "exp",
            CorrelationKind::SquaredExponential => "sqexp",
        })
    }
}

impl FromStr for CorrelationKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "exp" | "exponential" => Ok(CorrelationKind::Exponential),
            "sqexp" | "squared_exponential" | "gaussian" => Ok(CorrelationKind::SquaredExponential),
            other => Err(Error::Argument(format!("unknown correlation kind `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorrelationFn {
    kind: CorrelationKind,
    phi: f64,
}

impl CorrelationFn {
    pub fn new(kind: CorrelationKind, phi: f64) -> Result<Self> {
        if !(phi > 0.0) || phi.is_nan() {
            return Err(Error::Domain(format!("range parameter must be positive, got {phi}")));
        }
        Ok(Self { kind, phi })
    }

    pub fn kind(&self) -> CorrelationKind {
        self.kind
    }

    pub fn phi(&self) -> f64 {
        self.phi
    }

    #[inline]
    pub fn eval(&self, d: f64) -> f64 {
        (-self.phi * self.kind.transform(d)).exp()
    }
}

pub fn correlation(f: CorrelationFn, d: f64) -> f64 {
    f.eval(d)
}

/// Symmetric matrix stored row-major.
macro_rules! square_matrix {
    ($name:ident) => {
        impl $name {
            pub fn dim(&self) -> usize {
                self.dim
            }

            #[inline]
            pub fn get(&self, i: usize, j: usize) -> f64 {
                self.data[i * self.dim + j]
            }

            pub fn as_slice(&self) -> &[f64] {
                &self.data
            }

            pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
                self.data.chunks(self.dim.max(1))
            }
        }
    };
}

#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    dim: usize,
    data: Vec<f64>,
}

square_matrix!(DistanceMatrix);

impl DistanceMatrix {
    pub fn from_counts(measure: DistanceMeasure, counts: &[ResponseCounts]) -> Self {
        let dim = counts.len();
        let mut data = vec![0.0; dim * dim];
        for i in 0..dim {
            for j in (i + 1)..dim {
                let d = distance(measure, counts[i], counts[j]);
                data[i * dim + j] = d;
                data[j * dim + i] = d;
            }
        }
        Self { dim, data }
    }

    pub fn from_vec(dim: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != dim * dim {
            return Err(Error::Argument(format!(
                "distance matrix needs {} entries, got {}",
                dim * dim,
                data.len()
            )));
        }
        for i in 0..dim {
            if data[i * dim + i] != 0.0 {
                return Err(Error::Argument("distance matrix diagonal must be zero".into()));
            }
            for j in 0..dim {
                let d = data[i * dim + j];
                if !(d >= 0.0) || d != data[j * dim + i] {
                    return Err(Error::Argument(format!(
                        "distance matrix must be symmetric and nonnegative (entry {i},{j})"
                    )));
                }
            }
        }
        Ok(Self { dim, data })
    }

    pub fn min_off_diagonal(&self) -> Option<f64> {
        let mut best: Option<f64> = None;
        for i in 0..self.dim {
            for j in (i + 1)..self.dim {
                let d = self.get(i, j);
                best = Some(best.map_or(d, |b| b.min(d)));
            }
        }
        best
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationMatrix {
    dim: usize,
    data: Vec<f64>,
}

square_matrix!(CorrelationMatrix);

pub fn build_corr_matrix(dist: &DistanceMatrix, f: CorrelationFn) -> CorrelationMatrix {
    let dim = dist.dim;
    let mut data = vec![0.0; dim * dim];
    for i in 0..dim {
        data[i * dim + i] = 1.0;
        for j in (i + 1)..dim {
            let c = f.eval(dist.get(i, j));
            data[i * dim + j] = c;
            data[j * dim + i] = c;
        }
    }
    CorrelationMatrix { dim, data }
}

/// Output of [`preprocess_ties`].
#[derive(Debug, Clone, PartialEq)]
pub struct TieBreak {
    pub counts: Vec<ResponseCounts>,
    pub epsilon: f64,
    /// One line per adjusted or clamped indication.
    pub log: Vec<String>,
}

fn same_rate(a: &ResponseCounts, b: &ResponseCounts) -> bool {
    a.r * b.n == b.r * a.n
}

/// Separates indications with equal observed response rates.
///
/// Within each group of `k ≥ 2` tied indications (in index order) the responder
/// counts become `r + ε·i` for `i = 1..k`, where `ε = 3(q1 − q0)/I` and `I` is the
/// number of indications passed in. Per-indication null and target rates enter
/// through their means. A shifted count above `n` is clamped to
/// `n − δ·(k − i + 1)` with `δ = ε/10`, which keeps clamped members distinct.
pub fn preprocess_ties(data: &[ResponseCounts], q0: &[f64], q1: &[f64]) -> Result<TieBreak> {
    let dim = data.len();
    if dim < 2 {
        return Err(Error::Argument("tie preprocessing needs at least two indications".into()));
    }
    if q0.is_empty() || q1.is_empty() {
        return Err(Error::Argument("null and target rates are required".into()));
    }
    if let Some(c) = data.iter().find(|c| !(c.n > 0.0)) {
        return Err(Error::Argument(format!(
            "every indication needs enrolled patients, got n={}",
            c.n
        )));
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let epsilon = 3.0 * (mean(q1) - mean(q0)) / dim as f64;
    if !(epsilon > 0.0) {
        return Err(Error::Argument("tie-break requires q1 > q0".into()));
    }
    let delta = epsilon / 10.0;

    let mut counts = data.to_vec();
    let mut log = Vec::new();
    for pass in 0..8 {
        let mut changed = false;
        let mut grouped = vec![false; dim];
        for a in 0..dim {
            if grouped[a] {
                continue;
            }
            let group: Vec<usize> = (a..dim)
                .filter(|&b| !grouped[b] && same_rate(&counts[a], &counts[b]))
                .collect();
            if group.len() < 2 {
                continue;
            }
            let k = group.len();
            for (pos, &idx) in group.iter().enumerate() {
                grouped[idx] = true;
                let i = (pos + 1) as f64;
                let c = counts[idx];
                let mut r = c.r + epsilon * i;
                if r > c.n {
                    let clamped = c.n - delta * (k - pos) as f64;
                    log.push(format!(
                        "indication {}: r {} + {:.6} exceeds n {}, clamped to {:.6}",
                        idx + 1,
                        c.r,
                        epsilon * i,
                        c.n,
                        clamped
                    ));
                    r = clamped;
                } else {
                    log.push(format!(
                        "indication {}: tied rate {:.6}, r {} -> {:.6}",
                        idx + 1,
                        c.rate(),
                        c.r,
                        r
                    ));
                }
                counts[idx] = ResponseCounts::new(c.n, r.max(0.0))?;
                changed = true;
            }
        }
        if !changed {
            return Ok(TieBreak {
                counts,
                epsilon,
                log,
            });
        }
        if pass > 0 {
            log.push(format!("tie-break pass {} needed", pass + 1));
        }
    }
    Err(Error::Numerical("tie-break did not separate all response rates".into()))
}
