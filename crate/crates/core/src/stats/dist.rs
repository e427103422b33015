//! Univariate densities, CDFs and samplers.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use statrs::distribution::{ContinuousCDF, Normal, StudentsT};


use crate::error::{domain, Result};

pub fn norm_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x * FRAC_1_SQRT_2)
}

pub fn norm_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

pub fn norm_quantile(p: f64) -> f64 {
    Normal::standard().inverse_cdf(p)
}

/// Log density of N(mean, var) at x.
pub fn normal_logpdf(x: f64, mean: f64, var: f64) -> f64 {
    let z = x - mean;
    -0.5 * ((2.0 * PI * var).ln() + z * z / var)
}

pub fn t_cdf(x: f64, df: f64) -> Result<f64> {
    match StudentsT::new(0.0, 1.0, df) {
        Ok(t) => Ok(t.cdf(x)),
        Err(e) => domain(format!("student-t with df = {df}: {e}")),
    }
}

pub fn t_quantile(p: f64, df: f64) -> Result<f64> {
    match StudentsT::new(0.0, 1.0, df) {
        Ok(t) => Ok(t.inverse_cdf(p)),
        Err(e) => domain(format!("student-t with df = {df}: {e}")),
    }
}

pub fn std_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

pub fn sample_normal<R: Rng + ?Sized>(rng: &mut R, mean: f64, sd: f64) -> f64 {
    mean + sd * std_normal(rng)
}

/// Location-scale Student-t draw.
pub fn sample_t<R: Rng + ?Sized>(rng: &mut R, df: f64, loc: f64, scale: f64) -> Result<f64> {
    let chi = Gamma::new(df / 2.0, 2.0)
        .map_err(|e| crate::Error::Domain(format!("student-t df {df}: {e}")))?
        .sample(rng);
    Ok(loc + scale * std_normal(rng) / (chi / df).sqrt())
}

/// Draw from InvGamma(shape, scale), density ∝ x^{-shape-1} exp(-scale / x).
pub fn sample_inverse_gamma<R: Rng + ?Sized>(rng: &mut R, shape: f64, scale: f64) -> Result<f64> {
    if !(shape > 0.0 && scale > 0.0 && shape.is_finite() && scale.is_finite()) {
        return domain(format!("inverse gamma needs positive shape and scale, got ({shape}, {scale})"));
    }
    let g = Gamma::new(shape, 1.0 / scale)
        .map_err(|e| crate::Error::Domain(format!("inverse gamma: {e}")))?
        .sample(rng);
    Ok(1.0 / g)
}

/// Draw mean + L z with z standard normal, where `chol_lower` is the lower Cholesky factor.
pub fn sample_mvn<R: Rng + ?Sized>(
    rng: &mut R,
    mean: &DVector<f64>,
    chol_lower: &DMatrix<f64>,
) -> DVector<f64> {
    let z = DVector::from_fn(mean.len(), |_, _| std_normal(rng));
    mean + chol_lower * z
}

/// Poisson log pmf.
pub fn poisson_logpmf(y: f64, log_mu: f64) -> f64 {
    y * log_mu - log_mu.exp() - statrs::function::gamma::ln_gamma(y + 1.0)
}
