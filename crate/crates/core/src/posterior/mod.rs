//! Power-prior posteriors: conjugate normal and linear-regression fits,
//! random-walk Metropolis for Poisson regression, and draw summaries.
//!
//! The power α scales each historical observation's log-likelihood; the
//! initial prior is never raised to α.

mod conjugate;
mod mh;
mod pointwise;

use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::stats::RngStream;

pub use conjugate::{
    fit_linear_regression, fit_normal_known_var, fit_normal_unknown_var, WeightedNig,
};
pub use mh::{
    fit_poisson_regression_mh, irls_poisson, poisson_posterior_draws, random_walk_metropolis,
    LogTarget, MetropolisOutput, PoissonTarget,
};
pub use pointwise::assign_pointwise_powers;

/// A global power or one power per historical observation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PowerAssignment {
    Global(f64),
    Pointwise(Vec<f64>),
}

impl PowerAssignment {
    /// Per-observation weights for `m` historical rows, after validation.
    pub fn weights(&self, m: usize) -> Result<Vec<f64>> {
        let w = match self {
            PowerAssignment::Global(a) => vec![*a; m],
            PowerAssignment::Pointwise(v) => {
                if v.len() != m {
                    return domain(format!(
                        "{} pointwise powers for {m} historical observations",
                        v.len()
                    ));
                }
                v.clone()
            }
        };
        if let Some(bad) = w.iter().find(|a| !(0.0..=1.0).contains(*a)) {
            return domain(format!("power parameter {bad} outside [0, 1]"));
        }
        Ok(w)
    }

    pub fn as_global(&self) -> Result<f64> {
        match self {
            PowerAssignment::Global(a) if (0.0..=1.0).contains(a) => Ok(*a),
            PowerAssignment::Global(a) => domain(format!("power parameter {a} outside [0, 1]")),
            PowerAssignment::Pointwise(_) => domain("this endpoint supports only a global power"),
        }
    }

    /// Mean power, the scalar reported for pointwise assignments.
    pub fn mean(&self) -> f64 {
        match self {
            PowerAssignment::Global(a) => *a,
            PowerAssignment::Pointwise(v) if v.is_empty() => 0.0,
            PowerAssignment::Pointwise(v) => v.iter().sum::<f64>() / v.len() as f64,
        }
    }

    /// (min, median, max) of the per-observation powers.
    pub fn spread(&self) -> (f64, f64, f64) {
        match self {
            PowerAssignment::Global(a) => (*a, *a, *a),
            PowerAssignment::Pointwise(v) => {
                let mut s = v.clone();
                s.sort_by(f64::total_cmp);
                (s[0], quantile_sorted(&s, 0.5), s[s.len() - 1])
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplerSettings {
    pub iters: usize,
    pub burn_in: usize,
}

impl Default for SamplerSettings {
    fn default() -> Self {
        Self {
            iters: 6500,
            burn_in: 1500,
        }
    }
}

impl SamplerSettings {
    pub fn retained(&self) -> usize {
        self.iters.saturating_sub(self.burn_in)
    }

    pub fn validate(&self) -> Result<()> {
        if self.burn_in >= self.iters {
            return domain(format!(
                "burn-in {} must be smaller than total iterations {}",
                self.burn_in, self.iters
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorDraws {
    pub parameter_names: Vec<String>,
    /// Retained draws, one row per iteration.
    pub draws: DMatrix<f64>,
    pub burn_in: usize,
    pub acceptance_rate: Option<f64>,
    pub stream: RngStream,
}

impl PosteriorDraws {
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let j = self.parameter_names.iter().position(|n| n == name)?;
        Some(self.draws.column(j).iter().copied().collect())
    }

    /// One column per parameter, header row of parameter names.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(csv_io)?;
        w.write_record(&self.parameter_names).map_err(csv_io)?;
        for row in self.draws.row_iter() {
            w.write_record(row.iter().map(|v| format!("{v:?}"))).map_err(csv_io)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn csv_io(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterSummary {
    pub name: String,
    pub mean: f64,
    pub sd: f64,
    pub ci95_lower: f64,
    pub ci95_upper: f64,
    pub interval_length: f64,
}

impl ParameterSummary {
    pub fn from_normal(name: &str, mean: f64, sd: f64) -> Self {
        let z = crate::stats::norm_quantile(0.975);
        Self {
            name: name.to_string(),
            mean,
            sd,
            ci95_lower: mean - z * sd,
            ci95_upper: mean + z * sd,
            interval_length: 2.0 * z * sd,
        }
    }

    pub fn covers(&self, truth: f64) -> bool {
        self.ci95_lower <= truth && truth <= self.ci95_upper
    }

    /// Mean, SD and interval endpoints rounded to `digits` decimals.
    pub fn rounded(&self, digits: i32) -> [f64; 4] {
        let f = 10f64.powi(digits);
        [self.mean, self.sd, self.ci95_lower, self.ci95_upper].map(|v| (v * f).round() / f)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorSummary {
    pub parameters: Vec<ParameterSummary>,
    /// Retained draws behind the summary; zero for analytic posteriors.
    pub draws: usize,
    pub acceptance_rate: Option<f64>,
}

impl PosteriorSummary {
    pub fn get(&self, name: &str) -> Option<&ParameterSummary> {
        self.parameters.iter().find(|p| p.name == name)
    }
}

/// Type-7 (linear interpolation) quantile of sorted data.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Per-parameter mean, SD (n − 1 divisor) and equal-tailed 95% interval.
///
/// Interval endpoints are type-7 sample quantiles at 2.5% and 97.5%, so draws
/// {1, 2, 3} give (1.05, 2.95).
pub fn summarize(draws: &PosteriorDraws) -> Result<PosteriorSummary> {
    let n = draws.draws.nrows();
    if n == 0 {
        return Err(Error::Degenerate("no posterior draws to summarize".into()));
    }
    let parameters = draws
        .parameter_names
        .iter()
        .enumerate()
        .map(|(j, name)| {
            let mut col: Vec<f64> = draws.draws.column(j).iter().copied().collect();
            let mean = col.iter().sum::<f64>() / n as f64;
            let sd = if n > 1 {
                (col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
            } else {
                0.0
            };
            col.sort_by(f64::total_cmp);
            let lower = quantile_sorted(&col, 0.025);
            let upper = quantile_sorted(&col, 0.975);
            ParameterSummary {
                name: name.clone(),
                mean,
                sd,
                ci95_lower: lower,
                ci95_upper: upper,
                interval_length: upper - lower,
            }
        })
        .collect();
    Ok(PosteriorSummary {
        parameters,
        draws: n,
        acceptance_rate: draws.acceptance_rate,
    })
}

/// Coefficient labels beta0..beta{p-1}.
pub(crate) fn beta_names(p: usize) -> Vec<String> {
    (0..p).map(|j| format!("beta{j}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn draws_of(values: Vec<f64>) -> PosteriorDraws {
        PosteriorDraws {
            parameter_names: vec!["theta".into()],
            draws: DMatrix::from_vec(values.len(), 1, values),
            burn_in: 0,
            acceptance_rate: None,
            stream: RngStream::new(0, 0),
        }
    }

    #[test]
    fn constant_draws() {
        let s = summarize(&draws_of(vec![2.5; 200])).unwrap();
        let p = &s.parameters[0];
        assert_eq!((p.mean, p.sd, p.ci95_lower, p.ci95_upper), (2.5, 0.0, 2.5, 2.5));
    }

    #[test]
    fn small_case_quantile_convention() {
        let s = summarize(&draws_of(vec![3.0, 1.0, 2.0])).unwrap();
        let p = &s.parameters[0];
        assert_abs_diff_eq!(p.ci95_lower, 1.05, epsilon = 1e-12);
        assert_abs_diff_eq!(p.ci95_upper, 2.95, epsilon = 1e-12);
        assert_abs_diff_eq!(p.interval_length, 1.9, epsilon = 1e-12);
    }

    #[test]
    fn empty_draws_rejected() {
        assert!(summarize(&draws_of(vec![])).is_err());
    }

    #[test]
    fn power_weights_validation() {
        assert_eq!(PowerAssignment::Global(0.3).weights(2).unwrap(), vec![0.3, 0.3]);
        assert!(PowerAssignment::Global(1.2).weights(2).is_err());
        assert!(PowerAssignment::Pointwise(vec![0.1]).weights(2).is_err());
        assert!(PowerAssignment::Pointwise(vec![0.1, -0.1]).weights(2).is_err());
        assert_eq!(PowerAssignment::Pointwise(vec![0.0, 1.0, 0.5]).spread(), (0.0, 0.5, 1.0));
    }
}
