//! Congruence measure p_CM between historical and current data.
//!
//! p_CM is the probability that a posterior-predictive replicate drawn given
//! the historical data scores at least as high as a current observation under
//! a test statistic T. Two statistics are supported: the predictive
//! likelihood (`Lik`) and the observation itself (`Obs`). Congruent data give
//! p_CM near 1/2; the distance S = |p_CM − 1/2| drives calibration.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, OlsFit};
use crate::error::{domain, Error, Result};
use crate::posterior::{poisson_posterior_draws, PoissonTarget, SamplerSettings, WeightedNig};
use crate::stats::{norm_cdf, orthant_double, poisson_logpmf, std_normal, RngStream, SymmetricBvnSpec};

pub const DEFAULT_MC_DRAWS: usize = 5000;
/// Below this many draws the Monte Carlo estimate carries a warning.
pub const MIN_RECOMMENDED_DRAWS: usize = 100;
/// Burn-in used for the historical-only Poisson sampler inside the Monte Carlo estimator.
pub const POISSON_BURN_IN: usize = 1500;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EndpointModel {
    /// Normal responses with known variances; initial prior π(μ) ∝ 1.
    NormalKnownVar { sigma2_h: f64, sigma2_c: f64 },
    /// Normal responses; initial prior π(μ, σ²) ∝ 1/σ².
    NormalUnknownVar,
    /// Normal linear model; initial prior π(β, σ²) ∝ (σ²)^(−(p+2)/2).
    LinearRegression,
    /// Poisson log-linear model; flat prior on β.
    PoissonRegression,
}

impl EndpointModel {
    pub fn validate(&self) -> Result<()> {
        if let EndpointModel::NormalKnownVar { sigma2_h, sigma2_c } = *self {
            if !(sigma2_h > 0.0 && sigma2_c > 0.0 && sigma2_h.is_finite() && sigma2_c.is_finite()) {
                return domain(format!(
                    "known variances must be positive and finite, got ({sigma2_h}, {sigma2_c})"
                ));
            }
        }
        Ok(())
    }

    pub fn is_regression(&self) -> bool {
        matches!(self, EndpointModel::LinearRegression | EndpointModel::PoissonRegression)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Statistic {
    /// T(x) = predictive likelihood of x.
    #[default]
    Lik,
    /// T(x) = x.
    Obs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Estimator {
    /// Closed form.
    #[default]
    Thm,
    /// Monte Carlo over posterior draws.
    Sim,
}

/// Which dataset's rows are scored against the other's predictive distribution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegressionTarget {
    ScoreCurrentGivenHist,
    ScoreHistGivenCurrent,
}

/// Whole-vector statistic for the naive p_CM.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VectorStatistic {
    Max,
    Mean,
    Quantile(f64),
}

impl VectorStatistic {
    pub fn apply(&self, v: &[f64]) -> f64 {
        match *self {
            VectorStatistic::Max => v.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            VectorStatistic::Mean => v.iter().sum::<f64>() / v.len() as f64,
            VectorStatistic::Quantile(q) => {
                let mut s = v.to_vec();
                s.sort_by(f64::total_cmp);
                crate::posterior::quantile_sorted(&s, q)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CongruenceEstimate {
    /// Scalar p_CM; the mean of the pointwise values when those are present.
    pub p_cm: f64,
    pub distance_s: f64,
    pub pointwise: Option<Vec<f64>>,
    pub statistic: Statistic,
    pub estimator: Estimator,
    pub mc_draws: Option<usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl CongruenceEstimate {
    fn scalar(p: f64, statistic: Statistic, estimator: Estimator) -> Self {
        let p = p.clamp(0.0, 1.0);
        Self {
            p_cm: p,
            distance_s: (p - 0.5).abs(),
            pointwise: None,
            statistic,
            estimator,
            mc_draws: None,
            warnings: Vec::new(),
        }
    }

    fn from_pointwise(values: Vec<f64>, statistic: Statistic, estimator: Estimator) -> Self {
        let mean = values.iter().sum::<f64>() / values.len() as f64;
        Self {
            pointwise: Some(values),
            ..Self::scalar(mean, statistic, estimator)
        }
    }

    /// |p_CM,i − 1/2| for each pointwise value.
    pub fn pointwise_distances(&self) -> Option<Vec<f64>> {
        self.pointwise
            .as_ref()
            .map(|v| v.iter().map(|p| (p - 0.5).abs()).collect())
    }
}

fn require_responses_only(hist: &Dataset, curr: &Dataset) -> Result<()> {
    if hist.has_covariates() || curr.has_covariates() {
        return domain("normal-endpoint congruence takes responses only; use the regression endpoint");
    }
    Ok(())
}

/// Plug-in (mean difference ȳ^c − ȳ^h, σ_c², effective historical variance).
fn normal_plugins(hist: &Dataset, curr: &Dataset, model: &EndpointModel) -> Result<(f64, f64, f64)> {
    model.validate()?;
    require_responses_only(hist, curr)?;
    let delta = curr.mean() - hist.mean();
    match *model {
        EndpointModel::NormalKnownVar { sigma2_h, sigma2_c } => {
            let m = hist.len() as f64;
            Ok((delta, sigma2_c, (m + 1.0) / m * sigma2_h))
        }
        EndpointModel::NormalUnknownVar => {
            let (sc, sh) = (curr.sample_var(), hist.sample_var());
            if sc <= 0.0 || sh <= 0.0 {
                return Err(Error::Degenerate(
                    "a sample variance is zero (constant responses); supply known variances instead".into(),
                ));
            }
            Ok((delta, sc, sh))
        }
        _ => domain("closed-form normal congruence needs a normal endpoint model"),
    }
}

/// Likelihood-statistic closed form for normal endpoints.
pub fn pcm_closed_normal(hist: &Dataset, curr: &Dataset, model: &EndpointModel) -> Result<CongruenceEstimate> {
    let (delta, sc, sh) = normal_plugins(hist, curr, model)?;
    let p = orthant_double(&SymmetricBvnSpec::new(delta, sc + sh, sc - sh)?)?;
    Ok(CongruenceEstimate::scalar(p, Statistic::Lik, Estimator::Thm))
}

/// Observation-statistic closed form: Pr(y_rep − y_c ≥ 0).
pub fn pcm_closed_obs(hist: &Dataset, curr: &Dataset, model: &EndpointModel) -> Result<CongruenceEstimate> {
    let (delta, sc, sh) = normal_plugins(hist, curr, model)?;
    let p = norm_cdf(-delta / (sc + sh).sqrt());
    Ok(CongruenceEstimate::scalar(p, Statistic::Obs, Estimator::Thm))
}

/// Pointwise closed form for linear regression.
///
/// Each row x_i of the scored dataset is compared with the conditioning
/// dataset's predictive distribution at x_i, with leverage factor
/// H_i = 1 + x_iᵀ(X_condᵀX_cond)⁻¹x_i. The scalar `p_cm` is the mean of the
/// pointwise values.
pub fn pcm_closed_regression(
    hist: &Dataset,
    curr: &Dataset,
    target: RegressionTarget,
    statistic: Statistic,
) -> Result<CongruenceEstimate> {
    let (scored, cond) = match target {
        RegressionTarget::ScoreCurrentGivenHist => (curr, hist),
        RegressionTarget::ScoreHistGivenCurrent => (hist, curr),
    };
    let xs = scored.design()?;
    let xc = cond.design()?;
    if xs.ncols() != xc.ncols() {
        return domain(format!(
            "designs are not conformable: {} vs {} columns",
            xs.ncols(),
            xc.ncols()
        ));
    }
    let fs = OlsFit::fit(scored)?;
    let fc = OlsFit::fit(cond)?;
    let diff = &fs.beta - &fc.beta;
    let values = (0..xs.nrows())
        .map(|i| {
            let x: DVector<f64> = xs.row(i).transpose();
            let shift = (x.transpose() * &diff)[(0, 0)];
            let rep_var = fc.sigma2 * fc.leverage_factor(&x);
            match statistic {
                Statistic::Lik => orthant_double(&SymmetricBvnSpec::new(shift, fs.sigma2 + rep_var, fs.sigma2 - rep_var)?),
                Statistic::Obs => Ok(norm_cdf(-shift / (fs.sigma2 + rep_var).sqrt())),
            }
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(CongruenceEstimate::from_pointwise(values, statistic, Estimator::Thm))
}

/// Closed-form estimate for any normal model: scalar for responses-only
/// endpoints, current-scored pointwise mean for linear regression.
pub fn pcm_closed(hist: &Dataset, curr: &Dataset, model: &EndpointModel, statistic: Statistic) -> Result<CongruenceEstimate> {
    match (model, statistic) {
        (EndpointModel::PoissonRegression, _) => {
            domain("no closed form exists for the Poisson endpoint; use the Monte Carlo estimator")
        }
        (EndpointModel::LinearRegression, s) => {
            pcm_closed_regression(hist, curr, RegressionTarget::ScoreCurrentGivenHist, s)
        }
        (_, Statistic::Lik) => pcm_closed_normal(hist, curr, model),
        (_, Statistic::Obs) => pcm_closed_obs(hist, curr, model),
    }
}

/// Exact expectation of the known-variance Monte Carlo estimator given both
/// observed datasets.
///
/// With μ ~ N(ȳ^h, σ_h²/m) and one replicate per draw, the likelihood
/// indicator |y_rep − μ| ≤ |y_i − μ| has probability equal to a double
/// orthant with variance σ_h²(1 + 1/m) and covariance σ_h²(1/m − 1). The
/// observation indicator has probability Φ((ȳ^h − y_i)/(σ_h·sqrt(1 + 1/m))).
pub fn pcm_conditional_known_var(hist: &Dataset, curr: &Dataset, sigma2_h: f64, statistic: Statistic) -> Result<f64> {
    require_responses_only(hist, curr)?;
    if !(sigma2_h > 0.0 && sigma2_h.is_finite()) {
        return domain(format!("known variance must be positive, got {sigma2_h}"));
    }
    let m = hist.len() as f64;
    let ybar = hist.mean();
    let post_var = sigma2_h / m;
    let total: f64 = curr
        .y
        .iter()
        .map(|&y| match statistic {
            Statistic::Lik => orthant_double(&SymmetricBvnSpec::new(y - ybar, sigma2_h + post_var, post_var - sigma2_h)?),
            Statistic::Obs => Ok(norm_cdf((ybar - y) / (sigma2_h + post_var).sqrt())),
        })
        .sum::<Result<f64>>()?;
    Ok(total / curr.len() as f64)
}

/// Historical-only posterior draws θ = (β, σ²) with the rows at which current data are scored.
struct PredictiveSetup {
    draws: Vec<(Vec<f64>, f64)>,
    rows: Vec<Vec<f64>>,
    poisson: bool,
}

fn rows_of(x: &DMatrix<f64>) -> Vec<Vec<f64>> {
    x.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn predictive_setup(hist: &Dataset, curr: &Dataset, model: &EndpointModel, r: usize, stream: RngStream) -> Result<PredictiveSetup> {
    model.validate()?;
    if r == 0 {
        return domain("Monte Carlo p_CM needs at least one draw");
    }
    let mut rng = stream.child(0).rng();
    let nig_draws = |nig: WeightedNig, rng: &mut rand_chacha::ChaCha8Rng| -> Result<Vec<(Vec<f64>, f64)>> {
        (0..r)
            .map(|_| nig.draw(rng).map(|(b, s2)| (b.iter().copied().collect(), s2)))
            .collect()
    };
    let intercept = |ds: &Dataset| DMatrix::from_element(ds.len(), 1, 1.0);
    let ones = |k: usize| vec![1.0; k];
    match *model {
        EndpointModel::NormalKnownVar { sigma2_h, .. } => {
            require_responses_only(hist, curr)?;
            let (ybar, sd) = (hist.mean(), (sigma2_h / hist.len() as f64).sqrt());
            let draws = (0..r).map(|_| (vec![ybar + sd * std_normal(&mut rng)], sigma2_h)).collect();
            Ok(PredictiveSetup { draws, rows: vec![vec![1.0]; curr.len()], poisson: false })
        }
        EndpointModel::NormalUnknownVar => {
            require_responses_only(hist, curr)?;
            let nig = WeightedNig::new(&intercept(hist), &hist.y, &ones(hist.len()), 1.0)?;
            Ok(PredictiveSetup { draws: nig_draws(nig, &mut rng)?, rows: vec![vec![1.0]; curr.len()], poisson: false })
        }
        EndpointModel::LinearRegression => {
            let (xh, xc) = (hist.design()?, curr.design()?);
            if xh.ncols() != xc.ncols() {
                return domain("historical and current designs differ in column count");
            }
            let p = xh.ncols() as f64;
            let nig = WeightedNig::new(xh, &hist.y, &ones(hist.len()), (p + 2.0) / 2.0)?;
            Ok(PredictiveSetup { draws: nig_draws(nig, &mut rng)?, rows: rows_of(xc), poisson: false })
        }
        EndpointModel::PoissonRegression => {
            let (xh, xc) = (hist.design_or_intercept(), curr.design_or_intercept());
            if xh.ncols() != xc.ncols() {
                return domain("historical and current designs differ in column count");
            }
            let target = PoissonTarget::new(xh, hist.y.clone(), ones(hist.len()))?;
            let settings = SamplerSettings { iters: POISSON_BURN_IN + r, burn_in: POISSON_BURN_IN };
            let out = poisson_posterior_draws(&target, &settings, 1.0, stream.child(0))?;
            let draws = out.draws.row_iter().map(|b| (b.iter().copied().collect(), 0.0)).collect();
            Ok(PredictiveSetup { draws, rows: rows_of(&xc), poisson: true })
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn poisson_draw<R: Rng + ?Sized>(rng: &mut R, log_mu: f64) -> Result<f64> {
    let mu = log_mu.exp();
    Poisson::new(mu)
        .map(|d| d.sample(rng))
        .map_err(|e| Error::Degenerate(format!("Poisson mean {mu} from the historical posterior: {e}")))
}

/// Monte Carlo p_CM: (1/(nR)) Σ_r Σ_i I[T(y_rep,i(r); θ_r) ≥ T(y_c,i; θ_r)].
///
/// θ_r are draws from the historical-only posterior and each (i, r) pair gets
/// one fresh replicate. Ties count as successes.
pub fn pcm_monte_carlo(
    hist: &Dataset,
    curr: &Dataset,
    model: &EndpointModel,
    statistic: Statistic,
    r: usize,
    stream: RngStream,
) -> Result<CongruenceEstimate> {
    let setup = predictive_setup(hist, curr, model, r, stream)?;
    let mut rng = stream.child(1).rng();
    let mut hits: u64 = 0;
    for (beta, sigma2) in &setup.draws {
        let sd = sigma2.sqrt();
        for (x, &yc) in setup.rows.iter().zip(&curr.y) {
            let eta = dot(x, beta);
            let hit = if setup.poisson {
                let yrep = poisson_draw(&mut rng, eta)?;
                match statistic {
                    Statistic::Lik => poisson_logpmf(yrep, eta) >= poisson_logpmf(yc, eta),
                    Statistic::Obs => yrep >= yc,
                }
            } else {
                let z = sd * std_normal(&mut rng);
                match statistic {
                    // Normal density at θ_r is decreasing in the distance from the mean.
                    Statistic::Lik => z.abs() <= (yc - eta).abs(),
                    Statistic::Obs => eta + z >= yc,
                }
            };
            hits += hit as u64;
        }
    }
    let p = hits as f64 / (r as f64 * curr.len() as f64);
    let mut est = CongruenceEstimate::scalar(p, statistic, Estimator::Sim);
    est.mc_draws = Some(r);
    if r < MIN_RECOMMENDED_DRAWS {
        est.warnings.push(format!(
            "only {r} Monte Carlo draws; at least {MIN_RECOMMENDED_DRAWS} are recommended"
        ));
    }
    Ok(est)
}

/// Closed form when the model has one, otherwise Monte Carlo.
pub fn pcm(
    hist: &Dataset,
    curr: &Dataset,
    model: &EndpointModel,
    statistic: Statistic,
    estimator: Estimator,
    r: usize,
    stream: RngStream,
) -> Result<CongruenceEstimate> {
    match estimator {
        Estimator::Thm => pcm_closed(hist, curr, model, statistic),
        Estimator::Sim => pcm_monte_carlo(hist, curr, model, statistic, r, stream),
    }
}

/// Whole-vector p_CM, Pr(T(Y_rep) ≥ T(Y^c) | Y^h), over `r` replicate vectors.
///
/// Under congruence this is uniformly distributed, which is why the
/// per-observation measure is used for calibration instead.
pub fn pcm_naive_vector(
    hist: &Dataset,
    curr: &Dataset,
    model: &EndpointModel,
    t: VectorStatistic,
    r: usize,
    stream: RngStream,
) -> Result<f64> {
    let observed = t.apply(&curr.y);
    naive_vector_against(hist, curr, model, t, observed, r, stream)
}

pub(crate) fn naive_vector_against(
    hist: &Dataset,
    curr: &Dataset,
    model: &EndpointModel,
    t: VectorStatistic,
    observed: f64,
    r: usize,
    stream: RngStream,
) -> Result<f64> {
    if let VectorStatistic::Quantile(q) = t {
        if !(0.0..=1.0).contains(&q) {
            return domain(format!("quantile level {q} outside [0, 1]"));
        }
    }
    let setup = predictive_setup(hist, curr, model, r, stream)?;
    let mut rng = stream.child(1).rng();
    let mut rep = vec![0.0; curr.len()];
    let mut hits = 0usize;
    for (beta, sigma2) in &setup.draws {
        let sd = sigma2.sqrt();
        for (slot, x) in rep.iter_mut().zip(&setup.rows) {
            let eta = dot(x, beta);
            *slot = if setup.poisson {
                poisson_draw(&mut rng, eta)?
            } else {
                eta + sd * std_normal(&mut rng)
            };
        }
        hits += (t.apply(&rep) >= observed) as usize;
    }
    Ok(hits as f64 / r as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Arm;
    use approx::assert_abs_diff_eq;

    fn ds(y: Vec<f64>, label: Arm) -> Dataset {
        Dataset::responses(y, label).unwrap()
    }

    #[test]
    fn obs_ignores_variance_difference() {
        let h = ds(vec![-1.0, 1.0, -1.0, 1.0], Arm::Historical);
        let c = ds(vec![-10.0, 10.0, -10.0, 10.0], Arm::Current);
        let e = pcm_closed_obs(&h, &c, &EndpointModel::NormalUnknownVar).unwrap();
        assert_eq!(e.p_cm, 0.5);
        assert_eq!(e.distance_s, 0.0);
    }

    #[test]
    fn constant_data_is_degenerate_without_known_variance() {
        let h = ds(vec![2.0, 2.0, 2.0], Arm::Historical);
        let c = ds(vec![1.0, 3.0], Arm::Current);
        assert!(matches!(
            pcm_closed_normal(&h, &c, &EndpointModel::NormalUnknownVar),
            Err(Error::Degenerate(_))
        ));
        let known = EndpointModel::NormalKnownVar { sigma2_h: 1.0, sigma2_c: 1.0 };
        assert!(pcm_closed_normal(&h, &c, &known).is_ok());
    }

    #[test]
    fn poisson_has_no_closed_form() {
        let h = ds(vec![1.0, 2.0], Arm::Historical);
        let c = ds(vec![1.0, 2.0], Arm::Current);
        assert!(pcm_closed(&h, &c, &EndpointModel::PoissonRegression, Statistic::Obs).is_err());
    }

    #[test]
    fn single_draw_single_row_is_binary() {
        let h = ds(vec![0.0, 1.0, 2.0], Arm::Historical);
        let c = Dataset { y: vec![1.0], x: None, label: Arm::Current };
        let model = EndpointModel::NormalKnownVar { sigma2_h: 1.0, sigma2_c: 1.0 };
        for seed in 0..20 {
            let e = pcm_monte_carlo(&h, &c, &model, Statistic::Lik, 1, RngStream::new(seed, 0)).unwrap();
            assert!(e.p_cm == 0.0 || e.p_cm == 1.0);
            assert_eq!(e.warnings.len(), 1);
        }
    }

    #[test]
    fn naive_vector_sentinel_is_one() {
        let h = ds(vec![0.0, 1.0, 2.0], Arm::Historical);
        let c = ds(vec![1.0, 2.0], Arm::Current);
        let model = EndpointModel::NormalKnownVar { sigma2_h: 1.0, sigma2_c: 1.0 };
        let p = naive_vector_against(&h, &c, &model, VectorStatistic::Max, f64::NEG_INFINITY, 50, RngStream::new(1, 1)).unwrap();
        assert_eq!(p, 1.0);
    }

    #[test]
    fn conditional_target_matches_monte_carlo() {
        let h = ds((0..40).map(|i| (i as f64 * 0.37).sin()).collect(), Arm::Historical);
        let c = ds((0..10).map(|i| 0.3 + (i as f64 * 1.1).cos()).collect(), Arm::Current);
        let model = EndpointModel::NormalKnownVar { sigma2_h: 0.5, sigma2_c: 0.5 };
        for stat in [Statistic::Lik, Statistic::Obs] {
            let exact = pcm_conditional_known_var(&h, &c, 0.5, stat).unwrap();
            let mc = pcm_monte_carlo(&h, &c, &model, stat, 40_000, RngStream::new(5, 0)).unwrap();
            assert_abs_diff_eq!(mc.p_cm, exact, epsilon = 0.01);
        }
    }
}
