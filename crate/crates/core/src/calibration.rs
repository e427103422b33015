//! Data-independent calibration of the sigmoid link between the congruence
//! distance S = |p_CM − 1/2| and the power parameter,
//! α(S) = 1 / (1 + exp(a + b·ln S)).
//!
//! The anchors g1 (full borrowing) and g2 (full discounting) come from
//! binomial confidence intervals for W ~ Binomial(n, 1/2) and Binomial(n, 1),
//! so the curve depends on the current sample size and configuration only.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::stats::{binom_abs_dev_expectation, binom_ci, CiMethod};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum CalibrationMode {
    /// Anchors widened by the interval half-widths k1, k2.
    #[default]
    KAdjusted,
    /// Anchors from the binomial distribution alone: g1 = E|W/n − 1/2|, g2 = 1/2.
    Unadjusted,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CalibrationConfig {
    pub n_current: u64,
    pub alpha_c: f64,
    pub alpha_ic: f64,
    pub tau: f64,
    pub ci_method: CiMethod,
    pub ci_level: f64,
    pub mode: CalibrationMode,
    /// Conservative variant: k1 = 0, floored at half a count, 1/(2nτ).
    pub zero_k1: bool,
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        Self {
            n_current: 50,
            alpha_c: 0.99,
            alpha_ic: 0.01,
            tau: 2.0,
            ci_method: CiMethod::ClopperPearson,
            ci_level: 0.95,
            mode: CalibrationMode::KAdjusted,
            zero_k1: false,
        }
    }
}

impl CalibrationConfig {
    pub fn new(n_current: u64) -> Self {
        Self {
            n_current,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_current < 2 {
            return domain(format!("current sample size must be at least 2, got {}", self.n_current));
        }
        let unit = |v: f64| v > 0.0 && v < 1.0;
        if !unit(self.alpha_c) || !unit(self.alpha_ic) {
            return domain(format!(
                "anchor powers must lie in (0, 1), got alpha_c = {}, alpha_ic = {}",
                self.alpha_c, self.alpha_ic
            ));
        }
        if self.alpha_ic >= self.alpha_c {
            return Err(Error::Infeasible(format!(
                "alpha_ic = {} must be below alpha_c = {}",
                self.alpha_ic, self.alpha_c
            )));
        }
        if !(self.tau >= 1.0 && self.tau.is_finite()) {
            return domain(format!("tau must be finite and at least 1, got {}", self.tau));
        }
        if !unit(self.ci_level) {
            return domain(format!("confidence level must lie in (0, 1), got {}", self.ci_level));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationCurve {
    pub a: f64,
    pub b: f64,
    pub g1: f64,
    pub g2: f64,
    pub k1: f64,
    pub k2: f64,
    pub config: CalibrationConfig,
}

/// Interval half-width factors k1 (at p = 1/2) and k2 (at p = 1), divided by τ.
///
/// Both intervals are evaluated at the expected count: w = round(n/2) and w = n.
pub fn compute_k_factors(config: &CalibrationConfig) -> Result<(f64, f64)> {
    config.validate()?;
    let n = config.n_current;
    let dev = |lo: f64, hi: f64| (lo - 0.5).abs().max((hi - 0.5).abs());
    let c1 = binom_ci(n, (n as f64 / 2.0).round() as u64, config.ci_level, config.ci_method)?;
    let c2 = binom_ci(n, n, config.ci_level, config.ci_method)?;
    Ok((dev(c1.lower, c1.upper) / config.tau, dev(c2.lower, c2.upper) / config.tau))
}

/// Closed-form (a, b) so that α(g1) = alpha_c and α(g2) = alpha_ic.
pub fn solve_from_anchors(alpha_c: f64, alpha_ic: f64, g1: f64, g2: f64) -> Result<(f64, f64)> {
    if g1 <= 0.0 {
        return Err(Error::Degenerate(
            "congruent anchor g1 is zero so ln g1 is undefined; use the k-adjusted mode".into(),
        ));
    }
    if !(g1 < g2) {
        return Err(Error::Infeasible(format!(
            "congruent anchor g1 = {g1} must lie below incongruent anchor g2 = {g2}"
        )));
    }
    if !(alpha_ic < alpha_c) {
        return Err(Error::Infeasible(format!(
            "alpha_ic = {alpha_ic} must be below alpha_c = {alpha_c}"
        )));
    }
    let b = (((1.0 - alpha_c) * alpha_ic) / ((1.0 - alpha_ic) * alpha_c)).ln() / (g1.ln() - g2.ln());
    let a = ((1.0 - alpha_c) / alpha_c).ln() - b * g1.ln();
    Ok((a, b))
}

pub fn solve_sigmoid(config: &CalibrationConfig) -> Result<CalibrationCurve> {
    let (k1, k2) = compute_k_factors(config)?;
    let (g1, g2) = match config.mode {
        CalibrationMode::KAdjusted => {
            let g1 = if config.zero_k1 {
                1.0 / (2.0 * config.n_current as f64 * config.tau)
            } else {
                k1
            };
            (g1, 0.5 - k2)
        }
        CalibrationMode::Unadjusted => (binom_abs_dev_expectation(config.n_current, 0.5)?, 0.5),
    };
    let (a, b) = solve_from_anchors(config.alpha_c, config.alpha_ic, g1, g2)?;
    Ok(CalibrationCurve {
        a,
        b,
        g1,
        g2,
        k1,
        k2,
        config: *config,
    })
}

impl CalibrationCurve {
    /// α(s), with α(0) = 1 as the left limit.
    pub fn power(&self, s: f64) -> f64 {
        if s <= 0.0 {
            return 1.0;
        }
        1.0 / (1.0 + (self.a + self.b * s.ln()).exp())
    }

    /// The distance at which the curve takes the value `alpha`.
    pub fn s_at(&self, alpha: f64) -> f64 {
        ((((1.0 - alpha) / alpha).ln() - self.a) / self.b).exp()
    }
}

/// α for distance `s`, optionally capped (e.g. at n/m for unequal sample sizes).
pub fn power_from_s(curve: &CalibrationCurve, s: f64, cap: Option<f64>) -> f64 {
    let alpha = curve.power(s);
    match cap {
        Some(c) => alpha.min(c),
        None => alpha,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveTable {
    pub s: Vec<f64>,
    pub alpha: Vec<f64>,
    /// Distance where α crosses alpha_c (equals g1).
    pub s_at_alpha_c: f64,
    /// Distance where α crosses alpha_ic (equals g2).
    pub s_at_alpha_ic: f64,
}

/// α on a uniform grid from the left limit s = 0 to s = 1/2.
pub fn emit_curve(curve: &CalibrationCurve, grid_points: usize) -> Result<CurveTable> {
    if grid_points < 2 {
        return domain("curve needs at least 2 grid points");
    }
    let s: Vec<f64> = (0..grid_points)
        .map(|k| 0.5 * k as f64 / (grid_points - 1) as f64)
        .collect();
    let alpha = s.iter().map(|&v| curve.power(v)).collect();
    Ok(CurveTable {
        s,
        alpha,
        s_at_alpha_c: curve.s_at(curve.config.alpha_c),
        s_at_alpha_ic: curve.s_at(curve.config.alpha_ic),
    })
}
