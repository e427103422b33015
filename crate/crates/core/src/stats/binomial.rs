//! Binomial confidence intervals and exact binomial expectations.

use serde::{Deserialize, Serialize};
use statrs::distribution::{Beta, ContinuousCDF};
use statrs::function::factorial::ln_binomial;

use super::dist::norm_quantile;
use crate::error::{domain, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum CiMethod {
    /// Normal-approximation interval, clipped to [0, 1].
    Wald,
    /// Exact interval from beta quantiles.
    #[default]
    ClopperPearson,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BinomialCi {
    pub lower: f64,
    pub upper: f64,
    pub method: CiMethod,
    pub n: u64,
    pub w: u64,
}

/// Two-sided binomial confidence interval for w successes out of n at the given level.
///
/// Wald at w ∈ {0, n} returns the zero-width interval at w/n.
pub fn binom_ci(n: u64, w: u64, level: f64, method: CiMethod) -> Result<BinomialCi> {
    if n == 0 {
        return domain("binomial interval needs n >= 1");
    }
    if w > n {
        return domain(format!("count w = {w} exceeds n = {n}"));
    }
    if !(level > 0.0 && level < 1.0) {
        return domain(format!("confidence level must lie in (0, 1), got {level}"));
    }
    let tail = (1.0 - level) / 2.0;
    let nf = n as f64;
    let wf = w as f64;
    let (lower, upper) = match method {
        CiMethod::Wald => {
            let p = wf / nf;
            let half = norm_quantile(1.0 - tail) * (p * (1.0 - p) / nf).sqrt();
            ((p - half).max(0.0), (p + half).min(1.0))
        }
        CiMethod::ClopperPearson => {
            let lower = if w == 0 {
                0.0
            } else if w == n {
                tail.powf(1.0 / nf)
            } else {
                beta_quantile(wf, nf - wf + 1.0, tail)?
            };
            let upper = if w == n {
                1.0
            } else if w == 0 {
                1.0 - tail.powf(1.0 / nf)
            } else {
                beta_quantile(wf + 1.0, nf - wf, 1.0 - tail)?
            };
            (lower, upper)
        }
    };
    Ok(BinomialCi {
        lower,
        upper,
        method,
        n,
        w,
    })
}

fn beta_quantile(a: f64, b: f64, p: f64) -> Result<f64> {
    let dist = Beta::new(a, b).map_err(|e| crate::Error::Domain(format!("beta({a}, {b}): {e}")))?;
    Ok(dist.inverse_cdf(p))
}

/// Binomial(n, p) probability mass at k.
pub fn binom_pmf(n: u64, k: u64, p: f64) -> f64 {
    if p <= 0.0 {
        return if k == 0 { 1.0 } else { 0.0 };
    }
    if p >= 1.0 {
        return if k == n { 1.0 } else { 0.0 };
    }
    let lp = ln_binomial(n, k) + k as f64 * p.ln() + (n - k) as f64 * (-p).ln_1p();
    lp.exp()
}

/// Exact E|W/n - 1/2| for W ~ Binomial(n, p).
pub fn binom_abs_dev_expectation(n: u64, p: f64) -> Result<f64> {
    if n == 0 {
        return domain("n must be at least 1");
    }
    if !(0.0..=1.0).contains(&p) {
        return domain(format!("p must lie in [0, 1], got {p}"));
    }
    let nf = n as f64;
    Ok((0..=n)
        .map(|k| binom_pmf(n, k, p) * (k as f64 / nf - 0.5).abs())
        .sum())
}
