use nalgebra::{DMatrix, DVector};
use rand::Rng;

use super::{beta_names, summarize, PosteriorDraws, PosteriorSummary, PowerAssignment, SamplerSettings};
use crate::data::{spd_cholesky, Dataset};
use crate::error::{domain, Error, Result};
use crate::stats::{std_normal, RngStream};

const TARGET_ACCEPTANCE: f64 = 0.3;
const ACCEPTANCE_BOUNDS: (f64, f64) = (0.05, 0.8);

/// Unnormalized log density on ℝ^d.
pub trait LogTarget {
    fn dim(&self) -> usize;
    fn log_density(&self, theta: &DVector<f64>) -> f64;
}

#[derive(Debug, Clone)]
pub struct MetropolisOutput {
    /// Retained draws, one row per iteration.
    pub draws: DMatrix<f64>,
    /// Acceptance rate over the retained iterations.
    pub acceptance_rate: f64,
    /// Per-component proposal SDs after adaptation.
    pub scales: DVector<f64>,
}

/// Gaussian random-walk Metropolis with a diagonal proposal.
///
/// A global multiplier on `scales` is adapted by Robbins–Monro toward 30%
/// acceptance during burn-in, then frozen. Fails if the post-burn-in
/// acceptance rate leaves (0.05, 0.8).
pub fn random_walk_metropolis<T: LogTarget, R: Rng + ?Sized>(
    target: &T,
    init: DVector<f64>,
    scales: DVector<f64>,
    settings: &SamplerSettings,
    rng: &mut R,
) -> Result<MetropolisOutput> {
    settings.validate()?;
    let d = target.dim();
    if init.len() != d || scales.len() != d {
        return domain("initial point or proposal scales do not match the target dimension");
    }
    if scales.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
        return domain("proposal scales must be positive and finite");
    }
    let mut current = init;
    let mut current_lp = target.log_density(&current);
    if !current_lp.is_finite() {
        return Err(Error::Degenerate("log density is not finite at the initial point".into()));
    }

    let mut log_mult = (2.38 / (d as f64).sqrt()).ln();
    let mut draws = DMatrix::zeros(settings.retained(), d);
    let mut accepted = 0usize;

    for t in 0..settings.iters {
        let step = log_mult.exp();
        let proposal = DVector::from_fn(d, |j, _| current[j] + step * scales[j] * std_normal(rng));
        let lp = target.log_density(&proposal);
        let accept_prob = if lp.is_finite() { (lp - current_lp).exp().min(1.0) } else { 0.0 };
        let u: f64 = rng.random();
        let accept = u < accept_prob;
        if accept {
            current = proposal;
            current_lp = lp;
        }
        if t < settings.burn_in {
            log_mult += (accept_prob - TARGET_ACCEPTANCE) / ((t + 1) as f64).powf(0.6);
        } else {
            accepted += accept as usize;
            draws.row_mut(t - settings.burn_in).copy_from(&current.transpose());
        }
    }

    let acceptance_rate = accepted as f64 / settings.retained() as f64;
    if !(ACCEPTANCE_BOUNDS.0 < acceptance_rate && acceptance_rate < ACCEPTANCE_BOUNDS.1) {
        return Err(Error::Sampler {
            acceptance: acceptance_rate,
            message: format!(
                "post-adaptation acceptance outside ({}, {}); try more burn-in or a different proposal scale",
                ACCEPTANCE_BOUNDS.0, ACCEPTANCE_BOUNDS.1
            ),
        });
    }
    Ok(MetropolisOutput {
        draws,
        acceptance_rate,
        scales: scales * log_mult.exp(),
    })
}

/// Weighted Poisson log-likelihood with log link and a flat prior on β.
#[derive(Debug, Clone)]
pub struct PoissonTarget {
    pub x: DMatrix<f64>,
    pub y: Vec<f64>,
    pub w: Vec<f64>,
}

impl PoissonTarget {
    pub fn new(x: DMatrix<f64>, y: Vec<f64>, w: Vec<f64>) -> Result<Self> {
        if x.nrows() != y.len() || w.len() != y.len() {
            return domain("design, response and weight lengths differ");
        }
        if let Some(bad) = y.iter().find(|v| !(**v >= 0.0 && v.fract() == 0.0)) {
            return domain(format!("Poisson responses must be nonnegative integers, got {bad}"));
        }
        Ok(Self { x, y, w })
    }
}

impl LogTarget for PoissonTarget {
    fn dim(&self) -> usize {
        self.x.ncols()
    }

    fn log_density(&self, beta: &DVector<f64>) -> f64 {
        let eta = &self.x * beta;
        // ln y! is constant in β and dropped.
        (0..self.y.len())
            .filter(|&j| self.w[j] != 0.0)
            .map(|j| self.w[j] * (self.y[j] * eta[j] - eta[j].exp()))
            .sum()
    }
}

/// Weighted Poisson maximum likelihood by Newton–Raphson (IRLS) with step halving.
///
/// Returns the estimate and the observed information matrix at it.
pub fn irls_poisson(target: &PoissonTarget) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let p = target.dim();
    let wsum: f64 = target.w.iter().sum();
    let ybar = target.y.iter().zip(&target.w).map(|(y, w)| y * w).sum::<f64>() / wsum;
    let mut beta = DVector::zeros(p);
    beta[0] = (ybar + 0.5).ln();
    let mut ll = target.log_density(&beta);

    for _ in 0..100 {
        let eta = &target.x * &beta;
        let mut grad = DVector::zeros(p);
        let mut info = DMatrix::zeros(p, p);
        for j in 0..target.y.len() {
            let w = target.w[j];
            if w == 0.0 {
                continue;
            }
            let mu = eta[j].exp();
            let xj = target.x.row(j).transpose();
            grad += w * (target.y[j] - mu) * &xj;
            info += w * mu * &xj * xj.transpose();
        }
        let step = spd_cholesky(info, "Poisson information matrix")?.solve(&grad);
        let mut t = 1.0;
        let mut next = &beta + &step * t;
        let mut next_ll = target.log_density(&next);
        while !(next_ll.is_finite() && next_ll >= ll - 1e-12) && t > 1e-8 {
            t /= 2.0;
            next = &beta + &step * t;
            next_ll = target.log_density(&next);
        }
        let converged = (&step * t).amax() < 1e-10 || (next_ll - ll).abs() < 1e-13 * (1.0 + ll.abs());
        beta = next;
        ll = next_ll;
        if converged {
            let info = poisson_information(target, &beta);
            if beta.iter().any(|b| b.abs() > 50.0) {
                return Err(Error::Degenerate(
                    "Poisson maximum likelihood diverges (e.g. all-zero counts in a group)".into(),
                ));
            }
            return Ok((beta, info));
        }
    }
    Err(Error::Degenerate("Poisson IRLS did not converge in 100 iterations".into()))
}

fn poisson_information(target: &PoissonTarget, beta: &DVector<f64>) -> DMatrix<f64> {
    let eta = &target.x * beta;
    let p = target.dim();
    let mut info = DMatrix::zeros(p, p);
    for j in 0..target.y.len() {
        let xj = target.x.row(j).transpose();
        info += target.w[j] * eta[j].exp() * &xj * xj.transpose();
    }
    info
}

/// Posterior draws for a weighted Poisson target, started at the MLE with
/// proposal scales sqrt(diag(I⁻¹)) times `proposal_scale`.
pub fn poisson_posterior_draws(
    target: &PoissonTarget,
    settings: &SamplerSettings,
    proposal_scale: f64,
    stream: RngStream,
) -> Result<MetropolisOutput> {
    if !(proposal_scale > 0.0 && proposal_scale.is_finite()) {
        return domain(format!("proposal scale must be positive, got {proposal_scale}"));
    }
    let (mle, info) = irls_poisson(target)?;
    let cov = spd_cholesky(info, "Poisson information matrix")?.inverse();
    let scales = DVector::from_fn(mle.len(), |j, _| cov[(j, j)].sqrt() * proposal_scale);
    random_walk_metropolis(target, mle, scales, settings, &mut stream.rng())
}

/// Poisson regression with log link: target ∝ L(β | curr) · L(β | hist)^α, flat prior.
pub fn fit_poisson_regression_mh(
    hist: &Dataset,
    curr: &Dataset,
    power: &PowerAssignment,
    settings: &SamplerSettings,
    proposal_scale: f64,
    stream: RngStream,
) -> Result<(PosteriorDraws, PosteriorSummary)> {
    let alpha = power.as_global()?;
    let xc = curr.design_or_intercept();
    let xh = hist.design_or_intercept();
    if xc.ncols() != xh.ncols() {
        return domain(format!(
            "historical design has {} columns, current has {}",
            xh.ncols(),
            xc.ncols()
        ));
    }
    let (n, m) = (curr.len(), hist.len());
    let mut x = DMatrix::zeros(n + m, xc.ncols());
    x.rows_mut(0, n).copy_from(&xc);
    x.rows_mut(n, m).copy_from(&xh);
    let mut y = curr.y.clone();
    y.extend_from_slice(&hist.y);
    let mut w = vec![1.0; n];
    w.extend(std::iter::repeat_n(alpha, m));
    let target = PoissonTarget::new(x, y, w)?;
    let out = poisson_posterior_draws(&target, settings, proposal_scale, stream)?;
    let draws = PosteriorDraws {
        parameter_names: beta_names(xc.ncols()),
        draws: out.draws,
        burn_in: settings.burn_in,
        acceptance_rate: Some(out.acceptance_rate),
        stream,
    };
    let summary = summarize(&draws)?;
    Ok((draws, summary))
}
