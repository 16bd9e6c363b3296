//! LDL^T factorization of a symmetric tridiagonal matrix.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct SymTridiagLdl {
    /// Pivots of `D`.
    d: Vec<f64>,
    /// Sub-diagonal of the unit lower factor `L`.
    l: Vec<f64>,
}

impl SymTridiagLdl {
    /// Factor the matrix with main diagonal `diag` and off-diagonal `off`
    /// (`off.len() == diag.len() - 1`). Fails on a non-positive pivot.
    pub fn factor(diag: &[f64], off: &[f64]) -> Result<Self> {
        let n = diag.len();
        if n == 0 || off.len() + 1 != n {
            return Err(Error::InvalidParameter(format!(
                "tridiagonal shape mismatch: {} diagonal, {} off-diagonal",
                n,
                off.len()
            )));
        }
        let mut d = Vec::with_capacity(n);
        let mut l = Vec::with_capacity(n - 1);
        d.push(diag[0]);
        for k in 0..n - 1 {
            if !(d[k] > 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "matrix not positive definite: pivot {k} is {}",
                    d[k]
                )));
            }
            let lk = off[k] / d[k];
            l.push(lk);
            d.push(diag[k + 1] - lk * off[k]);
        }
        if !(d[n - 1] > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "matrix not positive definite: pivot {} is {}",
                n - 1,
                d[n - 1]
            )));
        }
        Ok(SymTridiagLdl { d, l })
    }

    pub fn len(&self) -> usize {
        self.d.len()
    }

    pub fn is_empty(&self) -> bool {
        self.d.is_empty()
    }

    /// Overwrite `rhs` with the solution of `A x = rhs`.
    pub fn solve_in_place(&self, rhs: &mut [f64]) {
        let n = self.d.len();
        debug_assert_eq!(rhs.len(), n);
        for k in 1..n {
            rhs[k] -= self.l[k - 1] * rhs[k - 1];
        }
        for k in 0..n {
            rhs[k] /= self.d[k];
        }
        for k in (0..n - 1).rev() {
            rhs[k] -= self.l[k] * rhs[k + 1];
        }
    }
}
