//! Dense symmetric positive-definite algebra for the small matrices used here.
//!
//! Matrices are row-major `&[f64]` of dimension `n × n`; `n` is the number of
//! indications, so everything is cubic in a number that rarely exceeds a dozen.

use crate::error::{Error, Result};
use crate::stats::LN_2PI;

/// Multiples of the mean diagonal added before giving up on a factorization.
pub const DEFAULT_JITTER: [f64; 3] = [1e-10, 1e-8, 1e-6];

/// Lower-triangular Cholesky factor.
#[derive(Debug, Clone, PartialEq)]
pub struct Cholesky {
    n: usize,
    l: Vec<f64>,
    jitter: f64,
}

/// Factorizes into `out` (row-major lower triangle, upper part zeroed).
/// Returns `false` if a pivot is not strictly positive.
pub fn cholesky_into(a: &[f64], n: usize, shift: f64, out: &mut [f64]) -> bool {
    assert!(a.len() == n * n && out.len() == n * n);
    for i in 0..n {
        let (done, rest) = out.split_at_mut(i * n);
        let row_i = &mut rest[..n];
        for j in 0..i {
            let row_j = &done[j * n..j * n + j];
            let dot: f64 = row_i[..j].iter().zip(row_j).map(|(x, y)| x * y).sum();
            row_i[j] = (a[i * n + j] - dot) / done[j * n + j];
        }
        let dot: f64 = row_i[..i].iter().map(|x| x * x).sum();
        let d = a[i * n + i] + shift - dot;
        if !(d > 0.0) || !d.is_finite() {
            return false;
        }
        row_i[i] = d.sqrt();
        row_i[i + 1..].iter_mut().for_each(|x| *x = 0.0);
    }
    true
}

impl Cholesky {
    /// Plain factorization, then each `schedule` multiple of the mean diagonal in turn.
    pub fn with_jitter(a: &[f64], n: usize, schedule: &[f64]) -> Result<Self> {
        let mut c = Self::zeros(n);
        c.refactor(a, schedule)?;
        Ok(c)
    }

    /// Placeholder factor of the given dimension, to be filled by [`refactor`](Self::refactor).
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            l: vec![0.0; n * n],
            jitter: 0.0,
        }
    }

    /// Factorizes `a` into the existing storage. On failure the contents are unspecified.
    pub fn refactor(&mut self, a: &[f64], schedule: &[f64]) -> Result<()> {
        let n = self.n;
        if a.len() != n * n {
            return Err(Error::Argument(format!("expected {} entries, got {}", n * n, a.len())));
        }
        if cholesky_into(a, n, 0.0, &mut self.l) {
            self.jitter = 0.0;
            return Ok(());
        }
        let mean_diag = (0..n).map(|i| a[i * n + i]).sum::<f64>() / n.max(1) as f64;
        let mut last = 0.0;
        for &m in schedule {
            last = m * mean_diag;
            if cholesky_into(a, n, last, &mut self.l) {
                self.jitter = last;
                return Ok(());
            }
        }
        Err(Error::SingularCovariance { jitter: last })
    }

    pub fn new(a: &[f64], n: usize) -> Result<Self> {
        Self::with_jitter(a, n, &DEFAULT_JITTER)
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Diagonal shift that was needed, zero when the plain factorization succeeded.
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn factor(&self) -> &[f64] {
        &self.l
    }

    pub fn log_det(&self) -> f64 {
        let prod: f64 = (0..self.n).map(|i| self.l[i * self.n + i]).product();
        if prod > 1e-280 && prod < 1e280 {
            2.0 * prod.ln()
        } else {
            2.0 * (0..self.n).map(|i| self.l[i * self.n + i].ln()).sum::<f64>()
        }
    }

    /// Solves `L y = b` in place.
    pub fn forward(&self, b: &mut [f64]) {
        let n = self.n;
        for i in 0..n {
            let mut s = b[i];
            for k in 0..i {
                s -= self.l[i * n + k] * b[k];
            }
            b[i] = s / self.l[i * n + i];
        }
    }

    /// Solves `Lᵀ x = y` in place.
    pub fn backward(&self, y: &mut [f64]) {
        let n = self.n;
        for i in (0..n).rev() {
            let mut s = y[i];
            for k in (i + 1)..n {
                s -= self.l[k * n + i] * y[k];
            }
            y[i] = s / self.l[i * n + i];
        }
    }

    /// Solves `A x = b` in place.
    pub fn solve(&self, b: &mut [f64]) {
        self.forward(b);
        self.backward(b);
    }

    pub fn inverse(&self) -> Vec<f64> {
        let mut inv = vec![0.0; self.n * self.n];
        self.inverse_into(&mut inv, &mut vec![0.0; self.n * self.n]);
        inv
    }

    /// Writes the inverse into `inv`, using `work` (length `n²`) as scratch.
    ///
    /// Computes `M = L⁻¹` by forward substitution, then `A⁻¹ = MᵀM`.
    pub fn inverse_into(&self, inv: &mut [f64], work: &mut [f64]) {
        let n = self.n;
        assert!(inv.len() == n * n && work.len() == n * n);
        let m = work;
        for i in 0..n {
            let lii = self.l[i * n + i];
            for j in 0..i {
                let mut s = 0.0;
                for k in j..i {
                    s += self.l[i * n + k] * m[k * n + j];
                }
                m[i * n + j] = -s / lii;
            }
            m[i * n + i] = 1.0 / lii;
            for j in (i + 1)..n {
                m[i * n + j] = 0.0;
            }
        }
        for i in 0..n {
            for j in 0..=i {
                let mut s = 0.0;
                for k in i..n {
                    s += m[k * n + i] * m[k * n + j];
                }
                inv[i * n + j] = s;
                inv[j * n + i] = s;
            }
        }
    }

    /// `L z`, used to draw correlated normals.
    pub fn mul_lower(&self, z: &[f64]) -> Vec<f64> {
        let n = self.n;
        (0..n)
            .map(|i| (0..=i).map(|k| self.l[i * n + k] * z[k]).sum())
            .collect()
    }
}

pub fn mvn_logpdf_chol(x: &[f64], mean: &[f64], chol: &Cholesky) -> f64 {
    let mut r: Vec<f64> = x.iter().zip(mean).map(|(a, b)| a - b).collect();
    chol.forward(&mut r);
    let quad: f64 = r.iter().map(|v| v * v).sum();
    -0.5 * (chol.n as f64 * LN_2PI + chol.log_det() + quad)
}

/// Multivariate normal log density, factorizing `cov` with the default jitter schedule.
pub fn mvn_logpdf(x: &[f64], mean: &[f64], cov: &[f64]) -> Result<f64> {
    let n = x.len();
    if mean.len() != n {
        return Err(Error::Argument("mean and point differ in dimension".into()));
    }
    let chol = Cholesky::new(cov, n)?;
    Ok(mvn_logpdf_chol(x, mean, &chol))
}
