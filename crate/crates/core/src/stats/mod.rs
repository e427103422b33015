//! Numerical primitives shared by the congruence, calibration and posterior modules.

mod binomial;
mod bvn;
mod dist;
mod rng;

pub use binomial::{binom_abs_dev_expectation, binom_ci, binom_pmf, BinomialCi, CiMethod};
pub use bvn::{bvn_upper, orthant_double, SymmetricBvnSpec, DEGENERATE_RHO_GAP};
pub use dist::{
    norm_cdf, norm_pdf, norm_quantile, normal_logpdf, poisson_logpmf, sample_inverse_gamma,
    sample_mvn, sample_normal, sample_t, std_normal, t_cdf, t_quantile,
};
pub use rng::RngStream;
