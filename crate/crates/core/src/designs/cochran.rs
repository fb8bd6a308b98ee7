use crate::divergence::IndicationData;
use crate::error::{Error, Result};
use crate::stats::chi_square_sf;

/// Cochran's test for equality of `I` binomial proportions.
///
/// `Q = Σ n_i (p̂_i − p̄)² / (p̄(1 − p̄))` with the pooled rate `p̄`, referred to a
/// chi-square on `I − 1` degrees of freedom. Returns `(Q, upper-tail p-value)`.
/// When every patient responded or none did the proportions are trivially
/// equal and `(0, 1)` is returned.
pub fn cochran_q(data: &[IndicationData]) -> Result<(f64, f64)> {
    if data.len() < 2 {
        return Err(Error::Argument("homogeneity test needs at least two indications".into()));
    }
    if data.iter().any(|d| d.n() == 0) {
        return Err(Error::Argument("every indication needs enrolled patients".into()));
    }
    let n: f64 = data.iter().map(|d| d.n() as f64).sum();
    let r: f64 = data.iter().map(|d| d.r() as f64).sum();
    if r == 0.0 || r == n {
        return Ok((0.0, 1.0));
    }
    let pbar = r / n;
    let q: f64 = data
        .iter()
        .map(|d| {
            let diff = d.r() as f64 / d.n() as f64 - pbar;
            d.n() as f64 * diff * diff
        })
        .sum::<f64>()
        / (pbar * (1.0 - pbar));
    let p = chi_square_sf(q, (data.len() - 1) as f64)?;
    Ok((q, p))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn d(n: u32, r: u32) -> IndicationData {
        IndicationData::new(n, r).unwrap()
    }

    #[test]
    fn identical_groups() {
        let (q, p) = cochran_q(&[d(24, 7), d(24, 7), d(24, 7)]).unwrap();
        assert_eq!(q, 0.0);
        assert!((p - 1.0).abs() < 1e-15);
    }

    #[test]
    fn extreme_split() {
        let (q, p) = cochran_q(&[d(20, 2), d(20, 18)]).unwrap();
        assert!((q - 25.6).abs() < 1e-12);
        assert!(p < 1e-4);
        assert!((p - 4.200_393_976_022_008e-7).abs() < 1e-15);
    }

    #[test]
    fn degenerate_all_or_none() {
        assert_eq!(cochran_q(&[d(14, 0), d(14, 0)]).unwrap(), (0.0, 1.0));
        assert_eq!(cochran_q(&[d(14, 14), d(10, 10)]).unwrap(), (0.0, 1.0));
    }

    #[test]
    fn p_value_falls_as_one_group_departs() {
        let mut last = 1.0 + 1e-12;
        for r in 5..=14 {
            let (_, p) = cochran_q(&[d(14, 3), d(14, 3), d(14, 3), d(14, r)]).unwrap();
            assert!(p < last, "r = {r}");
            last = p;
        }
    }
}
