use super::PowerAssignment;
use crate::calibration::{power_from_s, CalibrationCurve};
use crate::congruence::{pcm_closed_regression, RegressionTarget, Statistic};
use crate::data::Dataset;
use crate::error::Result;

/// One power per historical row: each row is scored against the current
/// data's predictive distribution and mapped through the calibrated curve.
pub fn assign_pointwise_powers(
    hist: &Dataset,
    curr: &Dataset,
    curve: &CalibrationCurve,
    statistic: Statistic,
    cap: Option<f64>,
) -> Result<PowerAssignment> {
    let est = pcm_closed_regression(hist, curr, RegressionTarget::ScoreHistGivenCurrent, statistic)?;
    let alphas = est
        .pointwise_distances()
        .unwrap_or_default()
        .into_iter()
        .map(|s| power_from_s(curve, s, cap))
        .collect();
    Ok(PowerAssignment::Pointwise(alphas))
}
