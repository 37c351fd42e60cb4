use crate::error::{Error, Result};

/// Tridiagonal matrix. `lower[0]` and `upper[n - 1]` are ignored.
#[derive(Debug, Clone, PartialEq)]
pub struct Tridiagonal {
    pub lower: Vec<f64>,
    pub diag: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Tridiagonal {
    pub fn zeros(n: usize) -> Self {
        Tridiagonal {
            lower: vec![0.0; n],
            diag: vec![0.0; n],
            upper: vec![0.0; n],
        }
    }

    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    /// `out = M x`.
    pub fn apply(&self, x: &[f64], out: &mut [f64]) {
        let n = self.len();
        for k in 0..n {
            let mut s = self.diag[k] * x[k];
            if k > 0 {
                s += self.lower[k] * x[k - 1];
            }
            if k + 1 < n {
                s += self.upper[k] * x[k + 1];
            }
            out[k] = s;
        }
    }

    /// Thomas factorization of `I - c M`.
    pub fn factor_shifted(&self, c: f64) -> Result<ThomasFactor> {
        let n = self.len();
        let mut sub = vec![0.0; n];
        let mut sup = vec![0.0; n];
        let mut inv = vec![0.0; n];
        let mut prev_sup = 0.0;
        for k in 0..n {
            let a = if k > 0 { -c * self.lower[k] } else { 0.0 };
            let b = 1.0 - c * self.diag[k];
            let denom = b - a * prev_sup;
            if !(denom.is_finite() && denom.abs() > f64::MIN_POSITIVE) {
                return Err(Error::NotPositiveDefinite);
            }
            inv[k] = 1.0 / denom;
            sub[k] = a;
            sup[k] = if k + 1 < n { -c * self.upper[k] * inv[k] } else { 0.0 };
            prev_sup = sup[k];
        }
        Ok(ThomasFactor { sub, sup, inv })
    }
}

#[derive(Debug, Clone)]
pub struct ThomasFactor {
    sub: Vec<f64>,
    sup: Vec<f64>,
    inv: Vec<f64>,
}

impl ThomasFactor {
    /// Overwrites `rhs` with the solution.
    pub fn solve(&self, rhs: &mut [f64]) {
        let n = rhs.len();
        rhs[0] *= self.inv[0];
        for k in 1..n {
            rhs[k] = (rhs[k] - self.sub[k] * rhs[k - 1]) * self.inv[k];
        }
        for k in (0..n - 1).rev() {
            rhs[k] -= self.sup[k] * rhs[k + 1];
        }
    }
}
