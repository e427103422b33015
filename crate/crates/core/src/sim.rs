//! Scenario-driven replication of the borrowing pipeline.
//!
//! Each replicate owns the random stream (seed, replicate index), so results do
//! not depend on thread scheduling. Every method and every sweep point reuses the
//! same replicate streams (common random numbers), which keeps curves smooth and
//! makes methods directly comparable.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calibration::{power_from_s, solve_sigmoid, CalibrationConfig, CalibrationCurve};
use crate::congruence::{pcm, pcm_closed_normal, pcm_naive_vector, EndpointModel, Estimator, Statistic, VectorStatistic};
use crate::data::{Arm, Dataset};
use crate::error::{domain, Error, Result};
use crate::posterior::{
    assign_pointwise_powers, fit_linear_regression, fit_normal_known_var, fit_normal_unknown_var, PosteriorSummary,
    PowerAssignment, SamplerSettings,
};
use crate::stats::{sample_normal, RngStream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    ThmLik,
    ThmObs,
    SimLik,
    SimObs,
    PwLik,
    PwObs,
    NoBorrow,
    Pool,
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::ThmLik => "thm_lik",
            Method::ThmObs => "thm_obs",
            Method::SimLik => "sim_lik",
            Method::SimObs => "sim_obs",
            Method::PwLik => "pw_lik",
            Method::PwObs => "pw_obs",
            Method::NoBorrow => "no_borrow",
            Method::Pool => "pool",
        }
    }

    fn statistic(&self) -> Statistic {
        match self {
            Method::ThmObs | Method::SimObs | Method::PwObs => Statistic::Obs,
            _ => Statistic::Lik,
        }
    }

    pub fn is_pointwise(&self) -> bool {
        matches!(self, Method::PwLik | Method::PwObs)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimEndpoint {
    NormalKnownVar,
    NormalUnknownVar,
    LinearRegression,
}

/// Data-generating process for both arms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Generator {
    Normal {
        mu_c: f64,
        mu_h: f64,
        sigma_c: f64,
        sigma_h: f64,
    },
    /// y = β0 + β1·x1 + β2·x2 + ε with x1 ~ Bernoulli(p), x2 ~ DiscreteUniform(x2_low, x2_high).
    Regression {
        beta_c: Vec<f64>,
        beta_h: Vec<f64>,
        sigma_c: f64,
        sigma_h: f64,
        #[serde(default = "half")]
        p_c: f64,
        #[serde(default = "half")]
        p_h: f64,
        #[serde(default = "x2_low")]
        x2_low: i64,
        #[serde(default = "x2_high")]
        x2_high: i64,
    },
}

fn half() -> f64 {
    0.5
}
fn x2_low() -> i64 {
    40
}
fn x2_high() -> i64 {
    70
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    /// Historical mean (or intercept) = current value + grid value.
    MeanDifference,
    /// Historical noise SD.
    SigmaH,
    /// Bernoulli probability of the historical binary covariate.
    BernoulliPH,
    /// Current sample size.
    N,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sweep {
    pub axis: SweepAxis,
    pub values: Vec<f64>,
}

/// Calibration settings shared by all sweep points; n is filled in per point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioCalibration {
    pub alpha_c: f64,
    pub alpha_ic: f64,
    pub tau: f64,
    pub ci_method: crate::stats::CiMethod,
    pub ci_level: f64,
    pub mode: crate::calibration::CalibrationMode,
    pub zero_k1: bool,
}

impl Default for ScenarioCalibration {
    fn default() -> Self {
        let c = CalibrationConfig::default();
        Self {
            alpha_c: c.alpha_c,
            alpha_ic: c.alpha_ic,
            tau: c.tau,
            ci_method: c.ci_method,
            ci_level: c.ci_level,
            mode: c.mode,
            zero_k1: c.zero_k1,
        }
    }
}

impl ScenarioCalibration {
    pub fn for_n(&self, n: usize) -> CalibrationConfig {
        CalibrationConfig {
            n_current: n as u64,
            alpha_c: self.alpha_c,
            alpha_ic: self.alpha_ic,
            tau: self.tau,
            ci_method: self.ci_method,
            ci_level: self.ci_level,
            mode: self.mode,
            zero_k1: self.zero_k1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    pub name: String,
    pub endpoint: SimEndpoint,
    pub generator: Generator,
    pub n: usize,
    pub m: usize,
    pub methods: Vec<Method>,
    #[serde(default = "default_replicates")]
    pub replicates: usize,
    #[serde(default)]
    pub calibration: ScenarioCalibration,
    /// Cap the power at n/m.
    #[serde(default)]
    pub cap: bool,
    #[serde(default = "default_mc_draws")]
    pub mc_draws: usize,
    #[serde(default)]
    pub sampler: SamplerSettings,
    #[serde(default)]
    pub sweep: Option<Sweep>,
    pub seed: u64,
}

fn default_replicates() -> usize {
    500
}
fn default_mc_draws() -> usize {
    crate::congruence::DEFAULT_MC_DRAWS
}

impl ScenarioSpec {
    pub fn validate(&self) -> Result<()> {
        if self.replicates == 0 {
            return domain("replicates must be at least 1");
        }
        if self.methods.is_empty() {
            return domain("at least one method is required");
        }
        if self.n < 2 || self.m < 2 {
            return domain("sample sizes n and m must be at least 2");
        }
        self.sampler.validate()?;
        let regression = self.endpoint == SimEndpoint::LinearRegression;
        match (&self.generator, regression) {
            (Generator::Normal { sigma_c, sigma_h, .. }, false) => {
                if !(*sigma_c > 0.0 && *sigma_h > 0.0) {
                    return domain("generator SDs must be positive");
                }
            }
            (Generator::Regression { beta_c, beta_h, sigma_c, sigma_h, p_c, p_h, x2_low, x2_high }, true) => {
                if beta_c.len() != 3 || beta_h.len() != 3 {
                    return domain("regression generator needs three coefficients (intercept, x1, x2)");
                }
                if !(*sigma_c > 0.0 && *sigma_h > 0.0) {
                    return domain("generator SDs must be positive");
                }
                if !((0.0..=1.0).contains(p_c) && (0.0..=1.0).contains(p_h)) {
                    return domain("Bernoulli probabilities must lie in [0, 1]");
                }
                if x2_low > x2_high {
                    return domain("x2_low must not exceed x2_high");
                }
            }
            _ => return domain("generator family does not match the endpoint"),
        }
        if !regression && self.methods.iter().any(Method::is_pointwise) {
            return domain("pointwise methods need the linear_regression endpoint");
        }
        if let Some(sweep) = &self.sweep {
            if sweep.values.is_empty() {
                return domain("sweep grid is empty");
            }
            if sweep.values.iter().any(|v| !v.is_finite()) || sweep.values.windows(2).any(|w| w[0] > w[1]) {
                return domain("sweep grid must be finite and sorted ascending");
            }
            match sweep.axis {
                SweepAxis::BernoulliPH if !regression => {
                    return domain("Bernoulli sweep needs the linear_regression endpoint")
                }
                SweepAxis::N if sweep.values.iter().any(|v| *v < 2.0 || v.fract() != 0.0) => {
                    return domain("sample-size grid values must be integers of at least 2")
                }
                SweepAxis::SigmaH if sweep.values.iter().any(|v| *v <= 0.0) => {
                    return domain("SD grid values must be positive")
                }
                _ => {}
            }
        }
        Ok(())
    }

    /// Concrete (generator, n) at one sweep value.
    fn at_point(&self, value: Option<f64>) -> (Generator, usize) {
        let mut gen = self.generator.clone();
        let mut n = self.n;
        if let (Some(sweep), Some(v)) = (&self.sweep, value) {
            match (sweep.axis, &mut gen) {
                (SweepAxis::MeanDifference, Generator::Normal { mu_c, mu_h, .. }) => *mu_h = *mu_c + v,
                (SweepAxis::MeanDifference, Generator::Regression { beta_c, beta_h, .. }) => beta_h[0] = beta_c[0] + v,
                (SweepAxis::SigmaH, Generator::Normal { sigma_h, .. }) => *sigma_h = v,
                (SweepAxis::SigmaH, Generator::Regression { sigma_h, .. }) => *sigma_h = v,
                (SweepAxis::BernoulliPH, Generator::Regression { p_h, .. }) => *p_h = v,
                (SweepAxis::N, _) => n = v as usize,
                _ => {}
            }
        }
        (gen, n)
    }
}

/// One replicate's data under `gen`. Current rows are drawn before historical
/// rows so the current arm does not depend on historical parameters.
pub fn generate_pair(gen: &Generator, n: usize, m: usize, stream: RngStream) -> Result<(Dataset, Dataset)> {
    let mut rng = stream.rng();
    match gen {
        Generator::Normal { mu_c, mu_h, sigma_c, sigma_h } => {
            let yc = (0..n).map(|_| sample_normal(&mut rng, *mu_c, *sigma_c)).collect();
            let yh = (0..m).map(|_| sample_normal(&mut rng, *mu_h, *sigma_h)).collect();
            Ok((Dataset::responses(yh, Arm::Historical)?, Dataset::responses(yc, Arm::Current)?))
        }
        Generator::Regression { beta_c, beta_h, sigma_c, sigma_h, p_c, p_h, x2_low, x2_high } => {
            let mut arm = |k: usize, beta: &[f64], sigma: f64, p: f64| {
                let mut cov = Vec::with_capacity(k);
                let mut y = Vec::with_capacity(k);
                for _ in 0..k {
                    let u: f64 = rng.random();
                    let x1 = if u < p { 1.0 } else { 0.0 };
                    let x2 = rng.random_range(*x2_low..=*x2_high) as f64;
                    y.push(sample_normal(&mut rng, beta[0] + beta[1] * x1 + beta[2] * x2, sigma));
                    cov.push(vec![x1, x2]);
                }
                (y, cov)
            };
            let (yc, xc) = arm(n, beta_c, *sigma_c, *p_c);
            let (yh, xh) = arm(m, beta_h, *sigma_h, *p_h);
            Ok((
                Dataset::with_covariates(yh, &xh, Arm::Historical)?,
                Dataset::with_covariates(yc, &xc, Arm::Current)?,
            ))
        }
    }
}

/// Per-replicate outcome for one method.
#[derive(Debug, Clone)]
struct Outcome {
    alpha: f64,
    spread: Option<(f64, f64, f64)>,
    p_cm: Option<f64>,
    params: Vec<(f64, f64, bool, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterMetrics {
    pub name: String,
    pub truth: f64,
    /// Mean |posterior mean − truth|.
    pub avg_bias: f64,
    pub avg_posterior_sd: f64,
    pub coverage_probability: f64,
    pub avg_interval_length: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateFailure {
    pub replicate: usize,
    pub kind: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodMetrics {
    pub method: Method,
    pub grid_value: Option<f64>,
    pub n: usize,
    pub m: usize,
    pub replicates_used: usize,
    pub avg_power: f64,
    /// Fraction of replicates with α > α^C.
    pub prob_complete_borrow: f64,
    /// Fraction of replicates with α < α^IC.
    pub prob_discard: f64,
    pub avg_pcm: Option<f64>,
    /// Replicate-averaged (min, median, max) of the pointwise powers.
    pub pointwise_summary: Option<(f64, f64, f64)>,
    pub parameters: Vec<ParameterMetrics>,
    pub failures: Vec<ReplicateFailure>,
    /// Per-replicate α (mean of α_i for pointwise methods).
    pub replicate_powers: Vec<f64>,
    /// Per-replicate median of α_i (pointwise methods only).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub replicate_medians: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub scenario: String,
    pub seed: u64,
    pub sweep_axis: Option<SweepAxis>,
    pub rows: Vec<MethodMetrics>,
}

impl MetricsReport {
    pub fn find(&self, method: Method, grid_value: Option<f64>) -> Option<&MethodMetrics> {
        self.rows.iter().find(|r| r.method == method && r.grid_value == grid_value)
    }
}

fn truths(gen: &Generator) -> Vec<(String, f64)> {
    match gen {
        Generator::Normal { mu_c, .. } => vec![("mu".into(), *mu_c)],
        Generator::Regression { beta_c, .. } => {
            beta_c.iter().enumerate().map(|(j, b)| (format!("beta{j}"), *b)).collect()
        }
    }
}

fn endpoint_model(endpoint: SimEndpoint, gen: &Generator) -> EndpointModel {
    match (endpoint, gen) {
        (SimEndpoint::NormalKnownVar, Generator::Normal { sigma_c, sigma_h, .. }) => EndpointModel::NormalKnownVar {
            sigma2_h: sigma_h * sigma_h,
            sigma2_c: sigma_c * sigma_c,
        },
        (SimEndpoint::LinearRegression, _) => EndpointModel::LinearRegression,
        _ => EndpointModel::NormalUnknownVar,
    }
}

struct PointContext<'a> {
    spec: &'a ScenarioSpec,
    model: EndpointModel,
    curve: CalibrationCurve,
    cap: Option<f64>,
    truths: Vec<(String, f64)>,
}

fn run_method(ctx: &PointContext, method: Method, hist: &Dataset, curr: &Dataset, rep: RngStream) -> Result<Outcome> {
    let spec = ctx.spec;
    let stat = method.statistic();
    let mut p_cm = None;
    let power = match method {
        Method::NoBorrow => PowerAssignment::Global(0.0),
        Method::Pool => PowerAssignment::Global(1.0),
        Method::PwLik | Method::PwObs => assign_pointwise_powers(hist, curr, &ctx.curve, stat, ctx.cap)?,
        _ => {
            let estimator = if matches!(method, Method::SimLik | Method::SimObs) { Estimator::Sim } else { Estimator::Thm };
            let est = pcm(hist, curr, &ctx.model, stat, estimator, spec.mc_draws, rep.child(1))?;
            p_cm = Some(est.p_cm);
            PowerAssignment::Global(power_from_s(&ctx.curve, est.distance_s, ctx.cap))
        }
    };
    let summary: PosteriorSummary = match ctx.model {
        EndpointModel::NormalKnownVar { sigma2_h, sigma2_c } => fit_normal_known_var(hist, curr, sigma2_h, sigma2_c, &power)?,
        EndpointModel::NormalUnknownVar => fit_normal_unknown_var(hist, curr, &power, &spec.sampler, rep.child(2))?.1,
        _ => fit_linear_regression(hist, curr, &power, &spec.sampler, rep.child(2))?.1,
    };
    let params = ctx
        .truths
        .iter()
        .map(|(name, truth)| {
            let p = summary
                .get(name)
                .ok_or_else(|| Error::Scenario(format!("posterior summary lacks parameter {name}")))?;
            Ok(((p.mean - truth).abs(), p.sd, p.covers(*truth), p.interval_length))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Outcome {
        alpha: power.mean(),
        spread: method.is_pointwise().then(|| power.spread()),
        p_cm,
        params,
    })
}

fn mean(v: impl Iterator<Item = f64>) -> f64 {
    let (s, k) = v.fold((0.0, 0usize), |(s, k), x| (s + x, k + 1));
    s / k as f64
}

fn aggregate(
    ctx: &PointContext,
    method: Method,
    grid_value: Option<f64>,
    n: usize,
    results: Vec<(usize, Result<Outcome>)>,
) -> Result<MethodMetrics> {
    let spec = ctx.spec;
    let mut ok = Vec::new();
    let mut failures = Vec::new();
    for (rep, r) in results {
        match r {
            Ok(o) => ok.push(o),
            Err(e) => failures.push(ReplicateFailure {
                replicate: rep,
                kind: e.kind().into(),
                message: e.to_string(),
            }),
        }
    }
    // Failed replicates may be dropped only while they stay under 1%.
    if failures.len() * 100 >= spec.replicates && !failures.is_empty() {
        return Err(Error::Scenario(format!(
            "{}: {} of {} replicates failed for {} (first: {})",
            spec.name,
            failures.len(),
            spec.replicates,
            method.name(),
            failures[0].message
        )));
    }
    let cfg = ctx.curve.config;
    let k = ok.len() as f64;
    let replicate_powers: Vec<f64> = ok.iter().map(|o| o.alpha).collect();
    let spread = method.is_pointwise().then(|| {
        let s: Vec<(f64, f64, f64)> = ok.iter().filter_map(|o| o.spread).collect();
        (mean(s.iter().map(|t| t.0)), mean(s.iter().map(|t| t.1)), mean(s.iter().map(|t| t.2)))
    });
    let parameters = ctx
        .truths
        .iter()
        .enumerate()
        .map(|(j, (name, truth))| ParameterMetrics {
            name: name.clone(),
            truth: *truth,
            avg_bias: mean(ok.iter().map(|o| o.params[j].0)),
            avg_posterior_sd: mean(ok.iter().map(|o| o.params[j].1)),
            coverage_probability: ok.iter().filter(|o| o.params[j].2).count() as f64 / k,
            avg_interval_length: mean(ok.iter().map(|o| o.params[j].3)),
        })
        .collect();
    Ok(MethodMetrics {
        method,
        grid_value,
        n,
        m: spec.m,
        replicates_used: ok.len(),
        avg_power: mean(replicate_powers.iter().copied()),
        prob_complete_borrow: replicate_powers.iter().filter(|a| **a > cfg.alpha_c).count() as f64 / k,
        prob_discard: replicate_powers.iter().filter(|a| **a < cfg.alpha_ic).count() as f64 / k,
        avg_pcm: ok.iter().all(|o| o.p_cm.is_some()).then(|| mean(ok.iter().filter_map(|o| o.p_cm))),
        pointwise_summary: spread,
        parameters,
        failures,
        replicate_powers,
        replicate_medians: ok.iter().filter_map(|o| o.spread.map(|s| s.1)).collect(),
    })
}

fn run_point(spec: &ScenarioSpec, grid_value: Option<f64>) -> Result<Vec<MethodMetrics>> {
    let (gen, n) = spec.at_point(grid_value);
    let curve = solve_sigmoid(&spec.calibration.for_n(n))?;
    let ctx = PointContext {
        spec,
        model: endpoint_model(spec.endpoint, &gen),
        curve,
        cap: spec.cap.then(|| (n as f64 / spec.m as f64).min(1.0)),
        truths: truths(&gen),
    };
    let per_rep: Vec<Vec<(usize, Result<Outcome>)>> = (0..spec.replicates)
        .into_par_iter()
        .map(|rep| {
            let stream = RngStream::new(spec.seed, rep as u64);
            match generate_pair(&gen, n, spec.m, stream.child(0)) {
                Ok((hist, curr)) => spec
                    .methods
                    .iter()
                    .map(|&m| (rep, run_method(&ctx, m, &hist, &curr, stream)))
                    .collect(),
                Err(e) => spec
                    .methods
                    .iter()
                    .map(|_| (rep, Err(Error::Scenario(format!("data generation: {e}")))))
                    .collect(),
            }
        })
        .collect();
    let mut by_method: BTreeMap<usize, Vec<(usize, Result<Outcome>)>> = BTreeMap::new();
    for rep_results in per_rep {
        for (j, r) in rep_results.into_iter().enumerate() {
            by_method.entry(j).or_default().push(r);
        }
    }
    by_method
        .into_iter()
        .map(|(j, results)| aggregate(&ctx, spec.methods[j], grid_value, n, results))
        .collect()
}

/// Run all replicates of a scenario at its base settings.
pub fn run_scenario(spec: &ScenarioSpec) -> Result<MetricsReport> {
    spec.validate()?;
    Ok(MetricsReport {
        scenario: spec.name.clone(),
        seed: spec.seed,
        sweep_axis: None,
        rows: run_point(spec, None)?,
    })
}

/// One set of method rows per sweep grid value.
pub fn run_sweep(spec: &ScenarioSpec) -> Result<MetricsReport> {
    spec.validate()?;
    let sweep = spec
        .sweep
        .as_ref()
        .ok_or_else(|| Error::Domain(format!("scenario {} has no sweep axis", spec.name)))?;
    let mut rows = Vec::new();
    for &v in &sweep.values {
        rows.extend(run_point(spec, Some(v))?);
    }
    Ok(MetricsReport {
        scenario: spec.name.clone(),
        seed: spec.seed,
        sweep_axis: Some(sweep.axis),
        rows,
    })
}

/// Sweep when the spec has one, otherwise a single run.
pub fn run(spec: &ScenarioSpec) -> Result<MetricsReport> {
    if spec.sweep.is_some() {
        run_sweep(spec)
    } else {
        run_scenario(spec)
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x}")).unwrap_or_default()
}

impl MetricsReport {
    /// Borrowing metrics, one row per (grid value, method).
    pub fn borrowing_csv(&self) -> String {
        let mut s = String::from(
            "grid,method,n,m,replicates_used,failures,avg_power,prob_complete_borrow,prob_discard,avg_pcm,pw_min,pw_median,pw_max\n",
        );
        for r in &self.rows {
            let (a, b, c) = match r.pointwise_summary {
                Some((a, b, c)) => (Some(a), Some(b), Some(c)),
                None => (None, None, None),
            };
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{},{},{},{},{},{}",
                fmt_opt(r.grid_value),
                r.method.name(),
                r.n,
                r.m,
                r.replicates_used,
                r.failures.len(),
                r.avg_power,
                r.prob_complete_borrow,
                r.prob_discard,
                fmt_opt(r.avg_pcm),
                fmt_opt(a),
                fmt_opt(b),
                fmt_opt(c)
            );
        }
        s
    }

    /// Estimation metrics, one row per (grid value, method, parameter).
    pub fn estimation_csv(&self) -> String {
        let mut s = String::from("grid,method,parameter,truth,avg_bias,avg_posterior_sd,coverage_probability,avg_interval_length\n");
        for r in &self.rows {
            for p in &r.parameters {
                let _ = writeln!(
                    s,
                    "{},{},{},{},{},{},{},{}",
                    fmt_opt(r.grid_value),
                    r.method.name(),
                    p.name,
                    p.truth,
                    p.avg_bias,
                    p.avg_posterior_sd,
                    p.coverage_probability,
                    p.avg_interval_length
                );
            }
        }
        s
    }

    /// Write `scenario-<name>-<seed>.csv`, `...-estimation.csv` and `.json` into `dir`.
    pub fn write_outputs(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir)?;
        let stem = format!("scenario-{}-{}", self.scenario, self.seed);
        let files = [
            (dir.join(format!("{stem}.csv")), self.borrowing_csv()),
            (dir.join(format!("{stem}-estimation.csv")), self.estimation_csv()),
            (
                dir.join(format!("{stem}.json")),
                serde_json::to_string_pretty(self).map_err(|e| Error::Schema(e.to_string()))?,
            ),
        ];
        for (path, body) in &files {
            std::fs::write(path, body)?;
        }
        Ok(files.into_iter().map(|(p, _)| p).collect())
    }

    /// One line per row: grid, method, power and first-parameter coverage.
    pub fn digest(&self) -> Vec<String> {
        self.rows
            .iter()
            .map(|r| {
                let cov = r
                    .parameters
                    .first()
                    .map(|p| format!(" coverage({})={:.3}", p.name, p.coverage_probability))
                    .unwrap_or_default();
                let grid = r.grid_value.map(|g| format!("grid={g} ")).unwrap_or_default();
                format!(
                    "{grid}{} avg_power={:.4} p_full={:.3} p_discard={:.3}{cov}",
                    r.method.name(),
                    r.avg_power,
                    r.prob_complete_borrow,
                    r.prob_discard
                )
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UniformitySpec {
    #[serde(default = "uniformity_name")]
    pub name: String,
    pub n: usize,
    pub m: usize,
    pub pairs: usize,
    #[serde(default = "default_mc_draws")]
    pub mc_draws: usize,
    #[serde(default = "default_mu")]
    pub mu: f64,
    #[serde(default = "default_sigma")]
    pub sigma: f64,
    #[serde(default = "default_vector_stat")]
    pub statistic: VectorStatistic,
    pub seed: u64,
}

fn uniformity_name() -> String {
    "uniformity".into()
}
fn default_mu() -> f64 {
    20.0
}
fn default_sigma() -> f64 {
    0.5
}
fn default_vector_stat() -> VectorStatistic {
    VectorStatistic::Mean
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UniformityReport {
    pub naive: Vec<f64>,
    pub marginal: Vec<f64>,
    pub ks_statistic: f64,
    pub ks_p_value: f64,
    pub naive_sd: f64,
    pub marginal_sd: f64,
    pub histogram: Vec<(f64, f64, usize)>,
}

impl UniformityReport {
    /// Write per-pair values, histogram counts and a JSON summary into `dir`.
    pub fn write_outputs(&self, spec: &UniformitySpec, dir: &Path) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir)?;
        let stem = format!("scenario-{}-{}", spec.name, spec.seed);
        let mut values = String::from("pair,naive_pcm,marginal_pcm\n");
        for (k, (a, b)) in self.naive.iter().zip(&self.marginal).enumerate() {
            let _ = writeln!(values, "{k},{a:?},{b:?}");
        }
        let mut hist = String::from("lower,upper,count\n");
        for (lo, hi, c) in &self.histogram {
            let _ = writeln!(hist, "{lo},{hi},{c}");
        }
        let files = [
            (dir.join(format!("{stem}.csv")), values),
            (dir.join(format!("{stem}-histogram.csv")), hist),
            (
                dir.join(format!("{stem}.json")),
                serde_json::to_string_pretty(&serde_json::json!({
                    "spec": spec,
                    "ks_statistic": self.ks_statistic,
                    "ks_p_value": self.ks_p_value,
                    "naive_sd": self.naive_sd,
                    "marginal_sd": self.marginal_sd,
                    "histogram": self.histogram,
                }))
                .map_err(|e| Error::Schema(e.to_string()))?,
            ),
        ];
        for (path, body) in &files {
            std::fs::write(path, body)?;
        }
        Ok(files.into_iter().map(|(p, _)| p).collect())
    }
}

/// A scenario file: replicated operating characteristics or the uniformity demo.
#[derive(Debug, Clone, PartialEq)]
pub enum ScenarioFile {
    Replicated(ScenarioSpec),
    Uniformity(UniformitySpec),
    Batch(ScenarioBatch),
}

/// Several scenarios reported as one table, one block of rows per scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioBatch {
    pub name: String,
    pub seed: u64,
    pub scenarios: Vec<ScenarioSpec>,
}

impl ScenarioBatch {
    /// Run every member scenario; member seeds are replaced by the batch seed
    /// so all rows share replicate streams.
    pub fn run(&self) -> Result<Vec<MetricsReport>> {
        self.scenarios
            .iter()
            .map(|s| run(&ScenarioSpec { seed: self.seed, ..s.clone() }))
            .collect()
    }

    /// Combined borrowing and estimation tables with a leading scenario column,
    /// written as `scenario-<name>-<seed>.csv` and `...-estimation.csv`.
    pub fn write_outputs(&self, reports: &[MetricsReport], dir: &Path) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir)?;
        let stem = format!("scenario-{}-{}", self.name, self.seed);
        let combine = |table: fn(&MetricsReport) -> String| {
            let mut out = String::new();
            for (k, r) in reports.iter().enumerate() {
                let body = table(r);
                let mut lines = body.lines();
                let header = lines.next().unwrap_or_default();
                if k == 0 {
                    let _ = writeln!(out, "scenario,{header}");
                }
                for line in lines {
                    let _ = writeln!(out, "{},{line}", r.scenario);
                }
            }
            out
        };
        let files = [
            (dir.join(format!("{stem}.csv")), combine(MetricsReport::borrowing_csv)),
            (dir.join(format!("{stem}-estimation.csv")), combine(MetricsReport::estimation_csv)),
            (
                dir.join(format!("{stem}.json")),
                serde_json::to_string_pretty(reports).map_err(|e| Error::Schema(e.to_string()))?,
            ),
        ];
        for (path, body) in &files {
            std::fs::write(path, body)?;
        }
        Ok(files.into_iter().map(|(p, _)| p).collect())
    }
}

/// Parse a scenario file. The optional `kind` field selects `replicated`
/// (default), `uniformity` or `batch`.
pub fn load_scenario(text: &str) -> Result<ScenarioFile> {
    let mut value: serde_json::Value = crate::io::parse_json(text, "scenario")?;
    let kind = match value.as_object_mut().and_then(|o| o.remove("kind")) {
        None => "replicated".to_string(),
        Some(serde_json::Value::String(k)) => k,
        Some(other) => return Err(Error::Schema(format!("scenario: at `kind`: expected a string, got {other}"))),
    };
    use crate::io::parse_value;
    match kind.as_str() {
        "replicated" => Ok(ScenarioFile::Replicated(parse_value(value, "scenario")?)),
        "uniformity" => Ok(ScenarioFile::Uniformity(parse_value(value, "scenario")?)),
        "batch" => Ok(ScenarioFile::Batch(parse_value(value, "scenario")?)),
        other => Err(Error::Schema(format!("scenario: at `kind`: unknown scenario kind `{other}`"))),
    }
}

/// One-sample Kolmogorov–Smirnov distance to Uniform(0, 1).
pub fn ks_uniform(sample: &[f64]) -> f64 {
    let mut s = sample.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len() as f64;
    s.iter()
        .enumerate()
        .map(|(i, &x)| ((i + 1) as f64 / n - x).max(x - i as f64 / n))
        .fold(0.0, f64::max)
}

/// Asymptotic KS p-value with Stephens' small-sample correction.
pub fn ks_p_value(d: f64, n: usize) -> f64 {
    let sn = (n as f64).sqrt();
    let lambda = (sn + 0.12 + 0.11 / sn) * d;
    if lambda < 1e-3 {
        return 1.0;
    }
    let p: f64 = (1..=100)
        .map(|k| {
            let k = k as f64;
            let sign = if k as u64 % 2 == 1 { 1.0 } else { -1.0 };
            sign * (-2.0 * k * k * lambda * lambda).exp()
        })
        .sum();
    (2.0 * p).clamp(0.0, 1.0)
}

fn sd(v: &[f64]) -> f64 {
    let m = mean(v.iter().copied());
    (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len().max(2) - 1) as f64).sqrt()
}

/// Naive whole-vector p_CM over congruent pairs from N(mu, sigma²), with
/// known variance, plus the per-observation measure on the same pairs.
pub fn run_uniformity_demo(spec: &UniformitySpec) -> Result<UniformityReport> {
    if spec.pairs == 0 {
        return domain("at least one pair is required");
    }
    let gen = Generator::Normal {
        mu_c: spec.mu,
        mu_h: spec.mu,
        sigma_c: spec.sigma,
        sigma_h: spec.sigma,
    };
    let model = EndpointModel::NormalKnownVar {
        sigma2_h: spec.sigma * spec.sigma,
        sigma2_c: spec.sigma * spec.sigma,
    };
    let values: Vec<(f64, f64)> = (0..spec.pairs)
        .into_par_iter()
        .map(|k| {
            let stream = RngStream::new(spec.seed, k as u64);
            let (hist, curr) = generate_pair(&gen, spec.n, spec.m, stream.child(0))?;
            let naive = pcm_naive_vector(&hist, &curr, &model, spec.statistic, spec.mc_draws, stream.child(1))?;
            let marginal = pcm_closed_normal(&hist, &curr, &model)?.p_cm;
            Ok((naive, marginal))
        })
        .collect::<Result<_>>()?;
    let (naive, marginal): (Vec<f64>, Vec<f64>) = values.into_iter().unzip();
    let ks = ks_uniform(&naive);
    let bins = 10;
    let histogram = (0..bins)
        .map(|b| {
            let (lo, hi) = (b as f64 / bins as f64, (b + 1) as f64 / bins as f64);
            let count = naive
                .iter()
                .filter(|&&v| v >= lo && (v < hi || (b == bins - 1 && v <= hi)))
                .count();
            (lo, hi, count)
        })
        .collect();
    Ok(UniformityReport {
        ks_statistic: ks,
        ks_p_value: ks_p_value(ks, naive.len()),
        naive_sd: sd(&naive),
        marginal_sd: sd(&marginal),
        naive,
        marginal,
        histogram,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn normal_spec() -> ScenarioSpec {
        ScenarioSpec {
            name: "t".into(),
            endpoint: SimEndpoint::NormalKnownVar,
            generator: Generator::Normal { mu_c: 20.0, mu_h: 20.0, sigma_c: 0.5, sigma_h: 0.5 },
            n: 20,
            m: 20,
            methods: vec![Method::ThmLik, Method::NoBorrow],
            replicates: 40,
            calibration: ScenarioCalibration::default(),
            cap: false,
            mc_draws: 200,
            sampler: SamplerSettings::default(),
            sweep: None,
            seed: 11,
        }
    }

    #[test]
    fn ks_reference_values() {
        // Perfectly spread sample: D = 1/n.
        let s: Vec<f64> = (1..=100).map(|i| i as f64 / 100.0).collect();
        assert_abs_diff_eq!(ks_uniform(&s), 0.01, epsilon = 1e-12);
        assert!(ks_p_value(0.01, 100) > 0.99);
        // Critical value near 1.36/sqrt(n) at the 5% level.
        assert_abs_diff_eq!(ks_p_value(1.358 / (100f64.sqrt() + 0.12 + 0.11 / 10.0), 100), 0.05, epsilon = 1e-3);
    }

    #[test]
    fn scenario_is_reproducible() {
        let spec = normal_spec();
        assert_eq!(run_scenario(&spec).unwrap(), run_scenario(&spec).unwrap());
    }

    #[test]
    fn no_borrow_ignores_historical_generator() {
        let mut a = normal_spec();
        a.methods = vec![Method::NoBorrow];
        let mut b = a.clone();
        b.generator = Generator::Normal { mu_c: 20.0, mu_h: 27.0, sigma_c: 0.5, sigma_h: 0.5 };
        let (ra, rb) = (run_scenario(&a).unwrap(), run_scenario(&b).unwrap());
        assert_eq!(ra.rows[0].parameters, rb.rows[0].parameters);
    }

    #[test]
    fn rejects_bad_specs() {
        let mut s = normal_spec();
        s.methods = vec![Method::PwLik];
        assert!(s.validate().is_err());
        let mut s = normal_spec();
        s.sweep = Some(Sweep { axis: SweepAxis::MeanDifference, values: vec![1.0, 0.0] });
        assert!(s.validate().is_err());
        let mut s = normal_spec();
        s.replicates = 0;
        assert!(s.validate().is_err());
    }

    #[test]
    fn csv_has_one_row_per_method() {
        let r = run_scenario(&normal_spec()).unwrap();
        assert_eq!(r.borrowing_csv().lines().count(), 3);
        assert_eq!(r.estimation_csv().lines().count(), 3);
    }
}
