mod common;

use approx::assert_abs_diff_eq;
use nalgebra::DMatrix;
use powerprior::calibration::{solve_sigmoid, CalibrationConfig, CalibrationMode};
use powerprior::congruence::{pcm_closed, pcm_closed_regression, EndpointModel, RegressionTarget, Statistic};
use powerprior::io::{ingest_csv, write_dataset_csv, CsvSchema};
use powerprior::posterior::{fit_normal_known_var, WeightedNig};
use powerprior::stats::{orthant_double, CiMethod, SymmetricBvnSpec};
use powerprior::{Arm, Dataset, OlsFit, PowerAssignment};
use proptest::prelude::*;

fn responses(v: Vec<f64>, arm: Arm) -> Dataset {
    Dataset::responses(v, arm).unwrap()
}

prop_compose! {
    fn bvn_spec()(delta in -4.0f64..4.0, var in 0.05f64..6.0, rho in -0.995f64..0.995) -> (f64, f64, f64) {
        (delta, var, rho * var)
    }
}

prop_compose! {
    fn sample(len: std::ops::Range<usize>)(v in prop::collection::vec(-3.0f64..3.0, len)) -> Vec<f64> {
        v
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    #[test]
    fn orthant_matches_quadrature((delta, var, cov) in bvn_spec()) {
        let got = orthant_double(&SymmetricBvnSpec::new(delta, var, cov).unwrap()).unwrap();
        let want = common::orthant_quadrature_oracle(delta, var, cov);
        prop_assert!((got - want).abs() < 1e-7, "{got} vs {want}");
    }

    #[test]
    fn orthant_is_even_in_the_mean((delta, var, cov) in bvn_spec()) {
        let a = orthant_double(&SymmetricBvnSpec::new(delta, var, cov).unwrap()).unwrap();
        let b = orthant_double(&SymmetricBvnSpec::new(-delta, var, cov).unwrap()).unwrap();
        prop_assert!((a - b).abs() < 1e-12);
        prop_assert!((0.0..=1.0).contains(&a));
    }

    #[test]
    fn orthant_scale_invariant((delta, var, cov) in bvn_spec(), c in 0.1f64..10.0) {
        let a = orthant_double(&SymmetricBvnSpec::new(delta, var, cov).unwrap()).unwrap();
        let b = orthant_double(&SymmetricBvnSpec::new(c * delta, c * c * var, c * c * cov).unwrap()).unwrap();
        prop_assert!((a - b).abs() < 1e-10);
    }

    #[test]
    fn normal_pcm_is_location_invariant(h in sample(5..40), c in sample(5..40), shift in -50.0f64..50.0) {
        let model = EndpointModel::NormalUnknownVar;
        let base = pcm_closed(&responses(h.clone(), Arm::Historical), &responses(c.clone(), Arm::Current), &model, Statistic::Lik);
        prop_assume!(base.is_ok());
        let moved = pcm_closed(
            &responses(h.iter().map(|v| v + shift).collect(), Arm::Historical),
            &responses(c.iter().map(|v| v + shift).collect(), Arm::Current),
            &model,
            Statistic::Lik,
        ).unwrap();
        prop_assert!((base.unwrap().p_cm - moved.p_cm).abs() < 1e-9);
    }

    #[test]
    fn reflection_keeps_lik_and_mirrors_obs(h in sample(5..40), c in sample(5..40)) {
        let model = EndpointModel::NormalKnownVar { sigma2_h: 0.7, sigma2_c: 1.3 };
        let (hd, cd) = (responses(h.clone(), Arm::Historical), responses(c.clone(), Arm::Current));
        let (hr, cr) = (
            responses(h.iter().map(|v| -v).collect(), Arm::Historical),
            responses(c.iter().map(|v| -v).collect(), Arm::Current),
        );
        let lik = pcm_closed(&hd, &cd, &model, Statistic::Lik).unwrap().p_cm;
        let lik_r = pcm_closed(&hr, &cr, &model, Statistic::Lik).unwrap().p_cm;
        prop_assert!((lik - lik_r).abs() < 1e-12);
        let obs = pcm_closed(&hd, &cd, &model, Statistic::Obs).unwrap().p_cm;
        let obs_r = pcm_closed(&hr, &cr, &model, Statistic::Obs).unwrap().p_cm;
        prop_assert!((obs + obs_r - 1.0).abs() < 1e-12);
    }

    #[test]
    fn calibration_back_substitution(
        n in 5u64..20_000,
        alpha_c in 0.6f64..0.999,
        alpha_ic in 0.001f64..0.3,
        tau in 1.0f64..4.0,
        wald in any::<bool>(),
        unadjusted in any::<bool>(),
    ) {
        let cfg = CalibrationConfig {
            alpha_c,
            alpha_ic,
            tau,
            ci_method: if wald { CiMethod::Wald } else { CiMethod::ClopperPearson },
            mode: if unadjusted { CalibrationMode::Unadjusted } else { CalibrationMode::KAdjusted },
            ..CalibrationConfig::new(n)
        };
        let Ok(curve) = solve_sigmoid(&cfg) else { return Ok(()) };
        prop_assert!((curve.power(curve.g1) - alpha_c).abs() < 1e-10);
        prop_assert!((curve.power(curve.g2) - alpha_ic).abs() < 1e-10);
        // Decreasing in s and bounded.
        let grid: Vec<f64> = (0..=50).map(|k| k as f64 / 100.0).collect();
        let a: Vec<f64> = grid.iter().map(|&s| curve.power(s)).collect();
        prop_assert!(a.windows(2).all(|w| w[1] <= w[0]));
        prop_assert!(a.iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn known_variance_shrinks_between_arms(h in sample(3..30), c in sample(3..30), alpha in 0.0f64..=1.0) {
        let (hd, cd) = (responses(h, Arm::Historical), responses(c, Arm::Current));
        let post = fit_normal_known_var(&hd, &cd, 0.5, 0.5, &PowerAssignment::Global(alpha)).unwrap();
        let mu = post.parameters[0].mean;
        let (lo, hi) = if hd.mean() < cd.mean() { (hd.mean(), cd.mean()) } else { (cd.mean(), hd.mean()) };
        prop_assert!(mu >= lo - 1e-12 && mu <= hi + 1e-12);
        let sd0 = fit_normal_known_var(&hd, &cd, 0.5, 0.5, &PowerAssignment::Global(0.0)).unwrap().parameters[0].sd;
        prop_assert!(post.parameters[0].sd <= sd0 + 1e-15);
    }

    #[test]
    fn ols_is_affine_equivariant(
        rows in prop::collection::vec((-2.0f64..2.0, 0.0f64..30.0, -1.0f64..1.0), 8..40),
        scale in 0.2f64..5.0,
        offset in -10.0f64..10.0,
    ) {
        let y: Vec<f64> = rows.iter().map(|r| 1.0 + 0.5 * r.0 - 0.2 * r.1 + r.2).collect();
        let cov: Vec<Vec<f64>> = rows.iter().map(|r| vec![r.0, r.1]).collect();
        let ds = Dataset::with_covariates(y.clone(), &cov, Arm::Current).unwrap();
        let Ok(fit) = OlsFit::fit(&ds) else { return Ok(()) };
        let y2: Vec<f64> = y.iter().map(|v| scale * v + offset).collect();
        let fit2 = OlsFit::fit(&Dataset::with_covariates(y2, &cov, Arm::Current).unwrap()).unwrap();
        prop_assert!((fit2.beta[0] - (scale * fit.beta[0] + offset)).abs() < 1e-6 * (1.0 + fit2.beta[0].abs()));
        prop_assert!((fit2.beta[1] - scale * fit.beta[1]).abs() < 1e-6 * (1.0 + fit2.beta[1].abs()));
        prop_assert!((fit2.sigma2 - scale * scale * fit.sigma2).abs() < 1e-6 * (1.0 + fit2.sigma2));
    }

    #[test]
    fn regression_pcm_ignores_covariate_rescaling(
        rows in prop::collection::vec((0u8..2, 40.0f64..70.0, -1.0f64..1.0), 12..30),
        c in 0.1f64..10.0,
    ) {
        let make = |k: f64, arm: Arm, flip: f64| {
            let y: Vec<f64> = rows.iter().map(|r| 50.0 + 8.0 * r.0 as f64 + 0.5 * r.1 + flip * r.2).collect();
            let cov: Vec<Vec<f64>> = rows.iter().map(|r| vec![r.0 as f64, k * r.1]).collect();
            Dataset::with_covariates(y, &cov, arm).unwrap()
        };
        let base = pcm_closed_regression(&make(1.0, Arm::Historical, 1.0), &make(1.0, Arm::Current, -1.0),
            RegressionTarget::ScoreHistGivenCurrent, Statistic::Lik);
        prop_assume!(base.is_ok());
        let scaled = pcm_closed_regression(&make(c, Arm::Historical, 1.0), &make(c, Arm::Current, -1.0),
            RegressionTarget::ScoreHistGivenCurrent, Statistic::Lik).unwrap();
        let (a, b) = (base.unwrap().pointwise.unwrap(), scaled.pointwise.unwrap());
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).abs() < 1e-7);
        }
    }

    #[test]
    fn weighted_nig_reductions(
        rows in prop::collection::vec((-2.0f64..2.0, -1.0f64..1.0), 10..30),
        junk in prop::collection::vec((-5.0f64..5.0, -9.0f64..9.0), 2..10),
    ) {
        let mut x = DMatrix::zeros(rows.len() + junk.len(), 2);
        let mut y = Vec::new();
        for (i, r) in rows.iter().chain(&junk).enumerate() {
            x[(i, 0)] = 1.0;
            x[(i, 1)] = r.0;
            y.push(2.0 + r.0 + r.1);
        }
        let n = rows.len();
        let mut w = vec![1.0; n];
        w.extend(std::iter::repeat_n(0.0, junk.len()));
        let Ok(with_zero) = WeightedNig::new(&x, &y, &w, 1.5) else { return Ok(()) };
        let alone = WeightedNig::new(&x.rows(0, n).into_owned(), &y[..n], &vec![1.0; n], 1.5).unwrap();
        prop_assert_eq!(with_zero.beta_hat.clone(), alone.beta_hat.clone());
        prop_assert_eq!(with_zero.shape, alone.shape);
        prop_assert!((with_zero.sse - alone.sse).abs() < 1e-10);
    }

    #[test]
    fn csv_round_trip(
        rows in prop::collection::vec((any::<f64>(), any::<f64>()), 2..20),
    ) {
        let rows: Vec<(f64, f64)> = rows.into_iter().filter(|(a, b)| a.is_finite() && b.is_finite()).collect();
        prop_assume!(rows.len() >= 2);
        let y: Vec<f64> = rows.iter().map(|r| r.0).collect();
        let cov: Vec<Vec<f64>> = rows.iter().map(|r| vec![r.1]).collect();
        let ds = Dataset::with_covariates(y, &cov, Arm::Historical).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        let schema = CsvSchema::new("resp", &["x"]);
        write_dataset_csv(&ds, &schema, &path).unwrap();
        prop_assert_eq!(ingest_csv(&path, &schema, Arm::Historical).unwrap(), ds);
    }
}

#[test]
fn oracle_agrees_with_independence_and_sheppard() {
    // ρ = 0: product of marginals.
    let p = powerprior::stats::norm_cdf(0.7);
    assert_abs_diff_eq!(common::orthant_quadrature_oracle(0.7, 1.0, 0.0), p * p + (1.0 - p) * (1.0 - p), epsilon = 1e-12);
    // Zero mean: 1/2 + arcsin(ρ)/π.
    for rho in [-0.9, -0.3, 0.4, 0.95] {
        let want = 0.5 + f64::asin(rho) / std::f64::consts::PI;
        assert_abs_diff_eq!(common::orthant_quadrature_oracle(0.0, 2.0, 2.0 * rho), want, epsilon = 1e-11);
    }
}
