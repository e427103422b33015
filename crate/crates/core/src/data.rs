//! Datasets for one arm and the least-squares summaries computed from them.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Arm {
    Historical,
    Current,
}

/// Responses for one arm plus an optional design matrix (intercept column first).
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub y: Vec<f64>,
    pub x: Option<DMatrix<f64>>,
    pub label: Arm,
}

impl Dataset {
    pub fn new(y: Vec<f64>, x: Option<DMatrix<f64>>, label: Arm) -> Result<Self> {
        let ds = Self { y, x, label };
        ds.validate()?;
        Ok(ds)
    }

    /// Responses only, no covariates.
    pub fn responses(y: Vec<f64>, label: Arm) -> Result<Self> {
        Self::new(y, None, label)
    }

    /// Build a design by prepending an intercept column to the given covariate rows.
    pub fn with_covariates(y: Vec<f64>, covariates: &[Vec<f64>], label: Arm) -> Result<Self> {
        if covariates.len() != y.len() {
            return domain(format!(
                "{} covariate rows for {} responses",
                covariates.len(),
                y.len()
            ));
        }
        let p = covariates.first().map_or(0, Vec::len) + 1;
        if covariates.iter().any(|row| row.len() + 1 != p) {
            return domain("covariate rows have differing lengths");
        }
        let x = DMatrix::from_fn(y.len(), p, |i, j| if j == 0 { 1.0 } else { covariates[i][j - 1] });
        Self::new(y, Some(x), label)
    }

    fn validate(&self) -> Result<()> {
        if self.y.len() < 2 {
            return domain(format!("{:?} data needs at least 2 responses", self.label));
        }
        if let Some(i) = self.y.iter().position(|v| !v.is_finite()) {
            return domain(format!("{:?} response {} is not finite", self.label, i + 1));
        }
        if let Some(x) = &self.x {
            if x.nrows() != self.y.len() {
                return domain(format!(
                    "{:?} design has {} rows but {} responses",
                    self.label,
                    x.nrows(),
                    self.y.len()
                ));
            }
            if x.ncols() == 0 {
                return domain("design matrix has no columns");
            }
            if x.iter().any(|v| !v.is_finite()) {
                return domain(format!("{:?} design contains non-finite entries", self.label));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn has_covariates(&self) -> bool {
        self.x.is_some()
    }

    pub fn design(&self) -> Result<&DMatrix<f64>> {
        self.x
            .as_ref()
            .ok_or_else(|| Error::Domain(format!("{:?} data has no design matrix", self.label)))
    }

    /// Design matrix, or a single intercept column when none is attached.
    pub fn design_or_intercept(&self) -> DMatrix<f64> {
        self.x
            .clone()
            .unwrap_or_else(|| DMatrix::from_element(self.y.len(), 1, 1.0))
    }

    pub fn mean(&self) -> f64 {
        self.y.iter().sum::<f64>() / self.y.len() as f64
    }

    /// Unbiased sample variance.
    pub fn sample_var(&self) -> f64 {
        let mean = self.mean();
        self.y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (self.y.len() - 1) as f64
    }

    /// Concatenate rows of `self` and `other`, keeping `self`'s label.
    pub fn stacked(&self, other: &Dataset) -> Result<Dataset> {
        let mut y = self.y.clone();
        y.extend_from_slice(&other.y);
        let x = match (&self.x, &other.x) {
            (None, None) => None,
            (Some(a), Some(b)) if a.ncols() == b.ncols() => {
                let mut x = DMatrix::zeros(a.nrows() + b.nrows(), a.ncols());
                x.rows_mut(0, a.nrows()).copy_from(a);
                x.rows_mut(a.nrows(), b.nrows()).copy_from(b);
                Some(x)
            }
            _ => return domain("cannot stack datasets with different designs"),
        };
        Dataset::new(y, x, self.label)
    }
}

/// Cholesky factor of a symmetric positive definite cross-product, or a rank error.
pub(crate) fn spd_cholesky(m: DMatrix<f64>, what: &str) -> Result<Cholesky<f64, Dyn>> {
    let scale = m.diagonal().iter().fold(0.0f64, |a, &b| a.max(b.abs()));
    let chol = Cholesky::new(m).ok_or_else(|| Error::Rank(format!("{what} is not positive definite")))?;
    // Cholesky succeeds on numerically singular matrices with tiny pivots.
    let min_pivot = chol.l_dirty().diagonal().iter().fold(f64::INFINITY, |a, &b| a.min(b));
    if !(min_pivot * min_pivot > scale * 1e-12) {
        return Err(Error::Rank(format!("{what} is numerically singular")));
    }
    Ok(chol)
}

/// Ordinary least squares summaries: β̂, σ̂² = SSE / (rows − p) and (XᵀX)⁻¹.
#[derive(Debug, Clone)]
pub struct OlsFit {
    pub beta: DVector<f64>,
    pub sse: f64,
    pub sigma2: f64,
    pub xtx_inv: DMatrix<f64>,
    pub rows: usize,
}

impl OlsFit {
    pub fn fit(ds: &Dataset) -> Result<Self> {
        let x = ds.design()?;
        let (rows, p) = x.shape();
        if rows <= p {
            return Err(Error::Rank(format!(
                "{:?} design needs more rows than columns ({rows} x {p})",
                ds.label
            )));
        }
        let y = DVector::from_column_slice(&ds.y);
        let chol = spd_cholesky(x.transpose() * x, &format!("{:?} cross-product XᵀX", ds.label))?;
        let beta = chol.solve(&(x.transpose() * &y));
        let resid = &y - x * &beta;
        let sse = resid.norm_squared();
        Ok(Self {
            beta,
            sse,
            sigma2: sse / (rows - p) as f64,
            xtx_inv: chol.inverse(),
            rows,
        })
    }

    /// 1 + xᵀ(XᵀX)⁻¹x for a row x.
    pub fn leverage_factor(&self, row: &DVector<f64>) -> f64 {
        1.0 + (row.transpose() * &self.xtx_inv * row)[(0, 0)]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn intercept_prepended() {
        let ds = Dataset::with_covariates(
            vec![1.0, 2.0, 3.0],
            &[vec![0.5, 1.0], vec![1.5, 0.0], vec![2.5, 1.0]],
            Arm::Current,
        )
        .unwrap();
        let x = ds.design().unwrap();
        assert_eq!(x.shape(), (3, 3));
        assert_eq!(x.column(0).iter().copied().collect::<Vec<_>>(), vec![1.0; 3]);
        assert_eq!(x[(1, 1)], 1.5);
    }

    #[test]
    fn rejects_short_or_mismatched() {
        assert!(Dataset::responses(vec![1.0], Arm::Historical).is_err());
        assert!(Dataset::new(vec![1.0, 2.0], Some(DMatrix::zeros(3, 1)), Arm::Current).is_err());
        assert!(Dataset::responses(vec![1.0, f64::NAN], Arm::Current).is_err());
    }

    #[test]
    fn ols_recovers_exact_line() {
        let covs: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64]).collect();
        let y: Vec<f64> = (0..10).map(|i| 2.0 + 0.5 * i as f64).collect();
        let ds = Dataset::with_covariates(y, &covs, Arm::Historical).unwrap();
        let fit = OlsFit::fit(&ds).unwrap();
        assert_abs_diff_eq!(fit.beta[0], 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(fit.beta[1], 0.5, epsilon = 1e-12);
        assert!(fit.sse < 1e-20);
    }

    #[test]
    fn ols_rank_deficiency_is_reported() {
        let covs: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64, 2.0 * i as f64]).collect();
        let y: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let ds = Dataset::with_covariates(y, &covs, Arm::Historical).unwrap();
        assert!(matches!(OlsFit::fit(&ds), Err(Error::Rank(_))));
        let ds = Dataset::with_covariates(vec![1.0, 2.0], &[vec![1.0], vec![2.0]], Arm::Current).unwrap();
        assert!(matches!(OlsFit::fit(&ds), Err(Error::Rank(_))));
    }

    #[test]
    fn stacking_keeps_row_order() {
        let a = Dataset::responses(vec![1.0, 2.0], Arm::Current).unwrap();
        let b = Dataset::responses(vec![3.0, 4.0, 5.0], Arm::Historical).unwrap();
        let s = a.stacked(&b).unwrap();
        assert_eq!(s.y, vec![1.0, 2.0, 3.0, 4.0, 5.0]);
        assert_eq!(s.label, Arm::Current);
    }
}
