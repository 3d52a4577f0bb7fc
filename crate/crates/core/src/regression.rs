//! Laguerre regression bases and truncated-SVD least squares.

use nalgebra::{DMatrix, DVector};

use crate::error::{invalid, Error, Result};

/// Relative cutoff for singular values in the pseudo-inverse.
pub const SVD_CUTOFF: f64 = 1e-10;

/// Laguerre basis of size `size` on the standardized variable `(x - loc) / scale`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Basis {
    pub size: usize,
    pub loc: f64,
    pub scale: f64,
}

impl Basis {
    pub fn new(size: usize, loc: f64, scale: f64) -> Result<Self> {
        if size == 0 {
            return Err(invalid("basis_size", "must be at least 1"));
        }
        if !(scale > 0.0) || !loc.is_finite() {
            return Err(invalid("scale", "standardization needs finite loc and positive scale"));
        }
        Ok(Self { size, loc, scale })
    }

    /// Standardizes by the sample mean and standard deviation. A (near)
    /// constant sample, as at the initial time, gets an infinite scale so the
    /// fitted function is flat instead of an arbitrary extrapolation.
    pub fn fit(size: usize, sample: &[f64]) -> Result<Self> {
        if sample.is_empty() {
            return Err(invalid("sample", "cannot standardize an empty sample"));
        }
        let n = sample.len() as f64;
        let mean = sample.iter().sum::<f64>() / n;
        let var = sample.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
        let sd = var.sqrt();
        let scale = if sd > 1e-12 * mean.abs().max(1.0) { sd } else { f64::INFINITY };
        Self::new(size, mean, scale)
    }

    pub fn eval(&self, x: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.size];
        self.eval_into(x, &mut out);
        out
    }

    pub fn eval_into(&self, x: f64, out: &mut [f64]) {
        laguerre((x - self.loc) / self.scale, out);
    }

    pub fn dot(&self, coefficients: &[f64], x: f64) -> f64 {
        let mut q = [0.0; 16];
        if self.size <= q.len() {
            let q = &mut q[..self.size];
            self.eval_into(x, q);
            q.iter().zip(coefficients).map(|(a, b)| a * b).sum()
        } else {
            self.eval(x).iter().zip(coefficients).map(|(a, b)| a * b).sum()
        }
    }
}

/// `[L_0(z), ..., L_{K-1}(z)]` by the three-term recurrence.
pub fn laguerre(z: f64, out: &mut [f64]) {
    let k_max = out.len();
    if k_max == 0 {
        return;
    }
    out[0] = 1.0;
    if k_max > 1 {
        out[1] = 1.0 - z;
    }
    for k in 1..k_max.saturating_sub(1) {
        let kf = k as f64;
        out[k + 1] = ((2.0 * kf + 1.0 - z) * out[k] - kf * out[k - 1]) / (kf + 1.0);
    }
}

/// Basis value at an already standardized argument `z`.
pub fn eval_basis_standardized(size: usize, z: f64) -> Vec<f64> {
    let mut out = vec![0.0; size];
    laguerre(z, &mut out);
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct LsqFit {
    pub coefficients: Vec<f64>,
    pub residual_norm: f64,
    /// Smallest singular value kept in the pseudo-inverse.
    pub condition_diag: f64,
}

/// Pseudo-inverse of a fixed design, reusable across many targets.
#[derive(Debug, Clone)]
pub struct LsqProjector {
    design: DMatrix<f64>,
    pinv: DMatrix<f64>,
    condition_diag: f64,
}

impl LsqProjector {
    /// Thin QR of the design, then SVD of the small triangular factor with
    /// singular values below `SVD_CUTOFF * sigma_max` dropped.
    pub fn new(design: DMatrix<f64>) -> Result<Self> {
        let (rows, cols) = design.shape();
        if cols == 0 {
            return Err(invalid("design", "needs at least one column"));
        }
        if rows < cols {
            return Err(invalid("design", format!("{rows} rows cannot determine {cols} coefficients")));
        }
        let qr = design.clone().qr();
        let q = qr.q();
        let r = qr.r();
        let svd = r.svd(true, true);
        let u = svd.u.ok_or(Error::Singular("least squares"))?;
        let v_t = svd.v_t.ok_or(Error::Singular("least squares"))?;
        let s = &svd.singular_values;
        let s_max = s.iter().cloned().fold(0.0, f64::max);
        if !(s_max > 0.0) || !s_max.is_finite() {
            return Err(Error::Singular("least squares"));
        }
        let mut kept_min = f64::INFINITY;
        let mut s_inv = DMatrix::zeros(cols, cols);
        for (i, &sv) in s.iter().enumerate() {
            if sv > SVD_CUTOFF * s_max {
                s_inv[(i, i)] = 1.0 / sv;
                kept_min = kept_min.min(sv);
            }
        }
        let pinv = v_t.transpose() * s_inv * u.transpose() * q.transpose();
        Ok(Self {
            design,
            pinv,
            condition_diag: kept_min,
        })
    }

    pub fn condition_diag(&self) -> f64 {
        self.condition_diag
    }

    pub fn n_rows(&self) -> usize {
        self.design.nrows()
    }

    /// Coefficients only, without the residual.
    pub fn coefficients(&self, target: &[f64]) -> Result<Vec<f64>> {
        if target.len() != self.design.nrows() {
            return Err(Error::DimensionMismatch {
                context: "least-squares target",
                expected: self.design.nrows(),
                got: target.len(),
            });
        }
        let cols = self.pinv.nrows();
        // fixed summation order so results do not depend on threading
        let mut out = vec![0.0; cols];
        for (j, &y) in target.iter().enumerate() {
            for (i, o) in out.iter_mut().enumerate() {
                *o += self.pinv[(i, j)] * y;
            }
        }
        Ok(out)
    }

    pub fn solve(&self, target: &[f64]) -> Result<LsqFit> {
        let coefficients = self.coefficients(target)?;
        let fitted = &self.design * DVector::from_column_slice(&coefficients);
        let residual_norm = fitted
            .iter()
            .zip(target)
            .map(|(f, y)| (y - f).powi(2))
            .sum::<f64>()
            .sqrt();
        Ok(LsqFit {
            coefficients,
            residual_norm,
            condition_diag: self.condition_diag,
        })
    }
}

/// Least-squares solution of `design * c ~ target`.
pub fn lsq_solve(design: &DMatrix<f64>, target: &[f64]) -> Result<LsqFit> {
    if target.len() != design.nrows() {
        return Err(Error::DimensionMismatch {
            context: "least-squares target",
            expected: design.nrows(),
            got: target.len(),
        });
    }
    LsqProjector::new(design.clone())?.solve(target)
}
