use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats::ln_gamma;

/// Simon two-stage design: continue past stage 1 iff more than `r1` of `n1`
/// respond; declare activity iff more than `r` of `n` respond in total.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimonDesign {
    pub r1: u32,
    pub n1: u32,
    pub r: u32,
    pub n: u32,
}

impl SimonDesign {
    pub fn new(r1: u32, n1: u32, r: u32, n: u32) -> Result<Self> {
        if !(r1 <= n1 && n1 <= n && r1 <= r && r <= n && n1 > 0) {
            return Err(Error::Config(format!(
                "invalid Simon design r1={r1}, n1={n1}, r={r}, n={n}"
            )));
        }
        Ok(Self { r1, n1, r, n })
    }

    pub fn continues(&self, x1: u32) -> bool {
        x1 > self.r1
    }

    pub fn rejects(&self, total: u32) -> bool {
        total > self.r
    }
}

fn binom_pmf(n: u32, p: f64) -> Vec<f64> {
    let lf = |k: u32| ln_gamma(k as f64 + 1.0).expect("positive argument");
    let (lp, lq) = (p.ln(), (-p).ln_1p());
    (0..=n)
        .map(|k| (lf(n) - lf(k) - lf(n - k) + k as f64 * lp + (n - k) as f64 * lq).exp())
        .collect()
}

/// Exact `(Pr(reject), Pr(early termination))` of a design at true rate `p`.
pub fn simon_operating(design: &SimonDesign, p: f64) -> (f64, f64) {
    let f1 = binom_pmf(design.n1, p);
    let f2 = binom_pmf(design.n - design.n1, p);
    let mut upper2 = vec![0.0; f2.len() + 1];
    for k in (0..f2.len()).rev() {
        upper2[k] = upper2[k + 1] + f2[k];
    }
    let mut reject = 0.0;
    let mut pet = 0.0;
    for (x1, &m) in f1.iter().enumerate() {
        let x1 = x1 as u32;
        if !design.continues(x1) {
            pet += m;
            continue;
        }
        // need x2 > r - x1
        let need = (design.r as i64 - x1 as i64 + 1).max(0) as usize;
        if need < upper2.len() {
            reject += m * upper2[need];
        }
    }
    (reject, pet)
}

/// Minimax Simon design by exhaustive search over `n ≤ 100`.
///
/// Among designs with exact type I error `≤ alpha` at `q0` and power
/// `≥ 1 − beta` at `q1`, returns the one with the smallest maximum sample size,
/// breaking ties by the expected sample size under `q0`.
pub fn simon_minimax(q0: f64, q1: f64, alpha: f64, beta: f64) -> Result<SimonDesign> {
    if !(q0 > 0.0 && q1 < 1.0 && q0 < q1) {
        return Err(Error::Argument(format!("need 0 < q0 < q1 < 1, got ({q0}, {q1})")));
    }
    if !(alpha > 0.0 && alpha < 1.0 && beta > 0.0 && beta < 1.0) {
        return Err(Error::Argument("alpha and beta must lie in (0, 1)".into()));
    }
    const MAX_N: u32 = 100;
    for n in 2..=MAX_N {
        let mut best: Option<(f64, SimonDesign)> = None;
        for n1 in 1..n {
            for r1 in 0..n1 {
                // type I error and power both fall as r grows; take the smallest
                // r meeting the error constraint
                for r in r1..n {
                    let d = SimonDesign { r1, n1, r, n };
                    let (type1, pet0) = simon_operating(&d, q0);
                    if type1 > alpha {
                        continue;
                    }
                    let (power, _) = simon_operating(&d, q1);
                    if power >= 1.0 - beta {
                        let en = n1 as f64 + (1.0 - pet0) * (n - n1) as f64;
                        if best.is_none_or(|(b, _)| en < b) {
                            best = Some((en, d));
                        }
                    }
                    break;
                }
            }
        }
        if let Some((_, d)) = best {
            return Ok(d);
        }
    }
    Err(Error::InfeasibleDesign(format!(
        "no design with n <= {MAX_N} meets alpha={alpha}, power={}",
        1.0 - beta
    )))
}
