use nalgebra::{DMatrix, DVector};
use rand::Rng;

use super::{beta_names, summarize, ParameterSummary, PosteriorDraws, PosteriorSummary, PowerAssignment, SamplerSettings};
use crate::data::{spd_cholesky, Dataset};
use crate::error::{domain, Error, Result};
use crate::stats::{sample_inverse_gamma, std_normal, RngStream};

/// Normal–inverse-gamma posterior from weighted least-squares sufficient statistics.
///
/// With row weights w_j, prior (σ²)^(−c) and flat prior on β:
/// σ² ~ IG(N_w/2 + c − p/2 − 1, SSE_w/2) and β | σ² ~ N(β̂_w, σ² A⁻¹),
/// where A = Σ w_j x_j x_jᵀ and N_w = Σ w_j.
#[derive(Debug, Clone)]
pub struct WeightedNig {
    pub beta_hat: DVector<f64>,
    pub sse: f64,
    pub weight_total: f64,
    pub shape: f64,
    pub a_inv: DMatrix<f64>,
    a_inv_chol: DMatrix<f64>,
}

impl WeightedNig {
    pub fn new(x: &DMatrix<f64>, y: &[f64], w: &[f64], prior_exponent: f64) -> Result<Self> {
        let (rows, p) = x.shape();
        if y.len() != rows || w.len() != rows {
            return domain("design, response and weight lengths differ");
        }
        let mut a = DMatrix::zeros(p, p);
        let mut b = DVector::zeros(p);
        for j in 0..rows {
            if w[j] == 0.0 {
                continue;
            }
            let xj = x.row(j).transpose();
            a += w[j] * &xj * xj.transpose();
            b += w[j] * y[j] * &xj;
        }
        let chol = spd_cholesky(a, "weighted cross-product matrix")?;
        let beta_hat = chol.solve(&b);
        let sse: f64 = (0..rows)
            .filter(|&j| w[j] != 0.0)
            .map(|j| w[j] * (y[j] - (x.row(j) * &beta_hat)[(0, 0)]).powi(2))
            .sum();
        let weight_total: f64 = w.iter().sum();
        let shape = weight_total / 2.0 + prior_exponent - p as f64 / 2.0 - 1.0;
        if !(shape > 0.0) {
            return Err(Error::Improper(format!(
                "effective sample size {weight_total:.4} too small for {p} coefficients"
            )));
        }
        if !(sse > 0.0) {
            return Err(Error::Degenerate(
                "weighted residual sum of squares is zero; the data are fitted exactly".into(),
            ));
        }
        let a_inv = chol.inverse();
        let a_inv_chol = spd_cholesky(a_inv.clone(), "posterior covariance")?.l();
        Ok(Self {
            beta_hat,
            sse,
            weight_total,
            shape,
            a_inv,
            a_inv_chol,
        })
    }

    /// One joint draw (β, σ²).
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<(DVector<f64>, f64)> {
        let sigma2 = sample_inverse_gamma(rng, self.shape, self.sse / 2.0)?;
        let z = DVector::from_fn(self.beta_hat.len(), |_, _| std_normal(rng));
        let beta = &self.beta_hat + (&self.a_inv_chol * z) * sigma2.sqrt();
        Ok((beta, sigma2))
    }

    fn draw_matrix(&self, settings: &SamplerSettings, stream: RngStream) -> Result<DMatrix<f64>> {
        settings.validate()?;
        let p = self.beta_hat.len();
        let n = settings.retained();
        let mut rng = stream.rng();
        let mut out = DMatrix::zeros(n, p + 1);
        for r in 0..n {
            let (beta, sigma2) = self.draw(&mut rng)?;
            for j in 0..p {
                out[(r, j)] = beta[j];
            }
            out[(r, p)] = sigma2;
        }
        Ok(out)
    }
}

fn stacked_with_weights(hist: &Dataset, curr: &Dataset, power: &PowerAssignment) -> Result<(DMatrix<f64>, Vec<f64>, Vec<f64>)> {
    let hw = power.weights(hist.len())?;
    let xh = hist.design_or_intercept();
    let xc = curr.design_or_intercept();
    if xh.ncols() != xc.ncols() {
        return domain(format!(
            "historical design has {} columns, current has {}",
            xh.ncols(),
            xc.ncols()
        ));
    }
    let n = curr.len();
    let mut x = DMatrix::zeros(n + hist.len(), xc.ncols());
    x.rows_mut(0, n).copy_from(&xc);
    x.rows_mut(n, hist.len()).copy_from(&xh);
    let mut y = curr.y.clone();
    y.extend_from_slice(&hist.y);
    let mut w = vec![1.0; n];
    w.extend(hw);
    Ok((x, y, w))
}

fn require_no_covariates(hist: &Dataset, curr: &Dataset) -> Result<()> {
    if hist.has_covariates() || curr.has_covariates() {
        return domain("normal endpoint fits take responses only; use the regression fit for covariates");
    }
    Ok(())
}

/// Exact posterior for μ with known variances and a flat initial prior.
pub fn fit_normal_known_var(
    hist: &Dataset,
    curr: &Dataset,
    sigma2_h: f64,
    sigma2_c: f64,
    power: &PowerAssignment,
) -> Result<PosteriorSummary> {
    require_no_covariates(hist, curr)?;
    if !(sigma2_h > 0.0 && sigma2_c > 0.0 && sigma2_h.is_finite() && sigma2_c.is_finite()) {
        return domain(format!("known variances must be positive, got ({sigma2_h}, {sigma2_c})"));
    }
    let alpha = power.as_global()?;
    let n = curr.len() as f64;
    let m = hist.len() as f64;
    let prec_c = n / sigma2_c;
    let prec_h = alpha * m / sigma2_h;
    let precision = prec_c + prec_h;
    let mean = (prec_c * curr.mean() + prec_h * hist.mean()) / precision;
    Ok(PosteriorSummary {
        parameters: vec![ParameterSummary::from_normal("mu", mean, precision.recip().sqrt())],
        draws: 0,
        acceptance_rate: None,
    })
}

/// Normal endpoint with unknown variance and prior 1/σ², by direct conjugate draws.
pub fn fit_normal_unknown_var(
    hist: &Dataset,
    curr: &Dataset,
    power: &PowerAssignment,
    settings: &SamplerSettings,
    stream: RngStream,
) -> Result<(PosteriorDraws, PosteriorSummary)> {
    require_no_covariates(hist, curr)?;
    let alpha = power.as_global()?;
    let effective = curr.len() as f64 + alpha * hist.len() as f64;
    if effective <= 1.0 {
        return Err(Error::Improper(format!(
            "n + αm = {effective} must exceed 1 for a proper posterior"
        )));
    }
    let (x, y, w) = stacked_with_weights(hist, curr, power)?;
    let nig = WeightedNig::new(&x, &y, &w, 1.0)?;
    let draws = PosteriorDraws {
        parameter_names: vec!["mu".into(), "sigma2".into()],
        draws: nig.draw_matrix(settings, stream)?,
        burn_in: settings.burn_in,
        acceptance_rate: None,
        stream,
    };
    let summary = summarize(&draws)?;
    Ok((draws, summary))
}

/// Linear regression with prior (σ²)^(−(p+2)/2), historical rows weighted by their powers.
pub fn fit_linear_regression(
    hist: &Dataset,
    curr: &Dataset,
    power: &PowerAssignment,
    settings: &SamplerSettings,
    stream: RngStream,
) -> Result<(PosteriorDraws, PosteriorSummary)> {
    let p = curr.design()?.ncols();
    hist.design()?;
    let (x, y, w) = stacked_with_weights(hist, curr, power)?;
    let nig = WeightedNig::new(&x, &y, &w, (p as f64 + 2.0) / 2.0)?;
    let mut names = beta_names(p);
    names.push("sigma2".into());
    let draws = PosteriorDraws {
        parameter_names: names,
        draws: nig.draw_matrix(settings, stream)?,
        burn_in: settings.burn_in,
        acceptance_rate: None,
        stream,
    };
    let summary = summarize(&draws)?;
    Ok((draws, summary))
}
