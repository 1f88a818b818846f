//! Bayesian analysis that adjusts for drift in the control response by
//! modelling a smooth time effect over fixed-size patient buckets.
//!
//! Patients are grouped backwards from the analysed arm's exit: the most
//! recent `bucket_size` patients form bucket 1, the previous `bucket_size`
//! bucket 2, and so on, with the oldest bucket absorbing any remainder.
//! Bucket 1 is the reference; earlier buckets get drift offsets under a
//! second-order random-walk smoothness prior whose precision τ is itself
//! estimated. The treatment effects are read off the same joint posterior.

pub mod gibbs;

pub use gibbs::{second_difference_matrix, DriftModel, DriftModelPrior, GibbsOptions, GibbsRun};

use crate::analysis::{McmcDiagnostics, McmcSettings, MethodTag, PosteriorSummary};
use crate::datagen::TrialDataset;
use crate::error::{Error, Result};
use crate::freq::validate_alpha;
use crate::stats::ess::effective_sample_size;
use crate::stats::root::brent;
use crate::stats::special::gamma_cdf;
use crate::stats::{mean, sample_variance};

use nalgebra::{DMatrix, DVector};

/// Hyperparameters of the drift analysis, plus the bucket width.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeMachinePrior {
    pub a_tau: f64,
    pub b_tau: f64,
    pub a_y: f64,
    pub b_y: f64,
    pub var_eta0: f64,
    pub var_theta: f64,
    pub bucket_size: usize,
}

impl TimeMachinePrior {
    /// Defaults everywhere except the drift-precision Gamma, which callers
    /// usually obtain from [`calibrate_drift_prior`].
    pub fn with_drift_gamma(a_tau: f64, b_tau: f64) -> Self {
        TimeMachinePrior {
            a_tau,
            b_tau,
            a_y: 0.001,
            b_y: 0.001,
            var_eta0: 1000.0,
            var_theta: 1000.0,
            bucket_size: 25,
        }
    }

    pub fn from_calibration(d_expected: f64, d_maximum: f64, iota: f64) -> Result<Self> {
        let (a_tau, b_tau) = calibrate_drift_prior(d_expected, d_maximum, iota)?;
        Ok(Self::with_drift_gamma(a_tau, b_tau))
    }
}

/// Solves for the Gamma(a, b) prior on the drift precision τ such that the
/// prior mean of τ is 1/d_expected² and the prior probability of a drift
/// standard deviation above d_maximum is iota:
///
///   a / b = 1 / d_expected²   and   P(τ < 1/d_maximum²) = iota.
///
/// Returns (a, b) in shape/rate form.
pub fn calibrate_drift_prior(d_expected: f64, d_maximum: f64, iota: f64) -> Result<(f64, f64)> {
    if !(d_expected > 0.0) || !(d_maximum > 0.0) {
        return Err(Error::InvalidArgument("drift magnitudes must be positive".into()));
    }
    if d_expected >= d_maximum {
        return Err(Error::InvalidArgument(format!(
            "expected drift {d_expected} must be below the maximum {d_maximum}"
        )));
    }
    if !(iota > 0.0 && iota < 1.0) {
        return Err(Error::InvalidArgument(format!("iota must lie in (0, 1), got {iota}")));
    }

    let quantile = 1.0 / (d_maximum * d_maximum);
    let mean_inv = d_expected * d_expected;
    // Holding the mean fixed at a/b = 1/d_expected², the tail probability is
    // a strictly decreasing function of the shape a: small shapes pile mass
    // near zero, large shapes concentrate at the (higher) mean.
    let objective =
        |a: f64| -> Result<f64> { Ok(gamma_cdf(quantile, a, a * mean_inv)? - iota) };

    let lo = 1e-8;
    let mut hi = 1.0;
    while objective(hi)? > 0.0 {
        hi *= 2.0;
        if hi > 1e12 {
            return Err(Error::Numerical(
                "drift-prior calibration failed to bracket a solution".into(),
            ));
        }
    }
    let a = brent(objective, lo, hi, 1e-13)?;
    let b = a * mean_inv;

    let residual = (gamma_cdf(quantile, a, b)? - iota).abs();
    if residual > 1e-6 {
        return Err(Error::Numerical(format!(
            "drift-prior calibration residual {residual:.2e} exceeds 1e-6"
        )));
    }
    Ok((a, b))
}

/// Assembles the drift model for analysing arm k: all patients recruited up
/// to arm k's exit, bucketed backwards from that exit. Returns the model and
/// the column index of arm k's effect.
pub fn build_drift_model(
    data: &TrialDataset,
    k: usize,
    prior: &TimeMachinePrior,
) -> Result<(DriftModel, usize)> {
    if k == 0 {
        return Err(Error::InvalidArgument("cannot analyse the control against itself".into()));
    }
    if prior.bucket_size == 0 {
        return Err(Error::InvalidArgument("bucket size must be positive".into()));
    }
    let t_k = data.exit_patient(k)?;
    let rows: Vec<usize> = (0..data.len()).filter(|&i| data.patient[i] <= t_k).collect();
    if !rows.iter().any(|&i| data.arm[i] == 0) {
        return Err(Error::InsufficientData(format!("no control observations up to patient {t_k}")));
    }
    let mut arms: Vec<usize> = rows.iter().map(|&i| data.arm[i]).filter(|&a| a > 0).collect();
    arms.sort_unstable();
    arms.dedup();

    let c_total = t_k.div_ceil(prior.bucket_size);
    let q = c_total - 1;
    let p = 1 + arms.len() + q;
    let m = rows.len();

    let mut x = DMatrix::<f64>::zeros(m, p);
    let mut y = DVector::<f64>::zeros(m);
    for (r, &i) in rows.iter().enumerate() {
        x[(r, 0)] = 1.0;
        if data.arm[i] > 0 {
            let pos = arms.binary_search(&data.arm[i]).unwrap();
            x[(r, 1 + pos)] = 1.0;
        }
        let bucket = (t_k - data.patient[i] + 1).div_ceil(prior.bucket_size);
        if bucket >= 2 {
            x[(r, 1 + arms.len() + bucket - 2)] = 1.0;
        }
        y[r] = data.y[i];
    }
    let track = 1 + arms.binary_search(&k).unwrap();
    let model = DriftModel {
        x,
        y,
        n_theta: arms.len(),
        prior: DriftModelPrior {
            var_eta0: prior.var_eta0,
            var_theta: prior.var_theta,
            a_tau: prior.a_tau,
            b_tau: prior.b_tau,
            a_y: prior.a_y,
            b_y: prior.b_y,
        },
    };
    Ok((model, track))
}

/// Declares a benefit when the posterior probability of a positive effect
/// exceeds 1 - alpha.
pub fn tm_decision(prob_positive: f64, alpha: f64) -> bool {
    prob_positive > 1.0 - alpha
}

/// Fits the drift model for arm k and summarizes its treatment effect.
pub fn fit_time_machine(
    data: &TrialDataset,
    k: usize,
    prior: &TimeMachinePrior,
    mcmc: &McmcSettings,
    alpha: f64,
) -> Result<PosteriorSummary> {
    validate_alpha(alpha)?;
    let (model, track) = build_drift_model(data, k, prior)?;
    let run = model.run(track, mcmc, &GibbsOptions::default())?;
    summarize_theta_draws(&run.theta_draws, MethodTag::TimeMachine, k, alpha, None)
}

pub(crate) fn summarize_theta_draws(
    draws: &[f64],
    method: MethodTag,
    arm: usize,
    alpha: f64,
    acceptance: Option<f64>,
) -> Result<PosteriorSummary> {
    if draws.len() < 2 {
        return Err(Error::InsufficientData("fewer than 2 posterior draws".into()));
    }
    let prob_positive = draws.iter().filter(|&&d| d > 0.0).count() as f64 / draws.len() as f64;
    Ok(PosteriorSummary {
        method,
        arm,
        theta_mean: mean(draws),
        theta_sd: sample_variance(draws).sqrt(),
        prob_positive,
        reject: tm_decision(prob_positive, alpha),
        diagnostics: McmcDiagnostics { ess: effective_sample_size(draws), acceptance },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::{generate_trial, ScenarioTruth, TimeTrendSpec};
    use crate::design::{build_schedule, ArmSpec};
    use approx::assert_relative_eq;

    #[test]
    fn calibration_matches_reference_solutions() {
        // Independently computed (shape, rate) pairs for iota = 0.01.
        let cases = [
            (10.0, 15.0, 11.56221339078896, 1156.221339078896),
            (5.0, 10.0, 4.8735559549643295, 121.83889887410824),
            (1.0, 1.5, 11.562213390788964, 11.562213390788964),
            (0.01, 0.15, 0.8331935565066013, 8.331935565066013e-5),
            (2.0, 3.0, 11.562213390788964, 46.248853563155855),
            (0.5, 2.0, 1.8403845073316243, 0.46009612683290607),
        ];
        for (de, dm, want_a, want_b) in cases {
            let (a, b) = calibrate_drift_prior(de, dm, 0.01).unwrap();
            assert_relative_eq!(a, want_a, max_relative = 1e-8);
            assert_relative_eq!(b, want_b, max_relative = 1e-8);
        }
    }

    #[test]
    fn calibration_satisfies_both_defining_conditions() {
        for (de, dm, iota) in [(1.0, 1.5, 0.01), (0.3, 2.0, 0.05), (4.0, 9.0, 0.001)] {
            let (a, b) = calibrate_drift_prior(de, dm, iota).unwrap();
            assert_relative_eq!(a / b, 1.0 / (de * de), max_relative = 1e-12);
            let tail = gamma_cdf(1.0 / (dm * dm), a, b).unwrap();
            assert!((tail - iota).abs() < 1e-6, "tail {tail} vs iota {iota}");
        }
    }

    #[test]
    fn calibration_shape_depends_only_on_the_ratio() {
        let (a1, b1) = calibrate_drift_prior(0.01, 0.15, 0.01).unwrap();
        let (a2, b2) = calibrate_drift_prior(0.001, 0.015, 0.01).unwrap();
        assert_relative_eq!(a1, a2, max_relative = 1e-9);
        assert_relative_eq!(b1, b2 * 100.0, max_relative = 1e-9);
    }

    #[test]
    fn calibration_rejects_bad_inputs() {
        assert!(calibrate_drift_prior(2.0, 1.0, 0.01).is_err());
        assert!(calibrate_drift_prior(1.0, 1.0, 0.01).is_err());
        assert!(calibrate_drift_prior(-1.0, 1.0, 0.01).is_err());
        assert!(calibrate_drift_prior(1.0, 2.0, 0.0).is_err());
        assert!(calibrate_drift_prior(1.0, 2.0, 1.0).is_err());
    }

    fn small_trial(theta: f64, seed: u64) -> TrialDataset {
        let arms = vec![
            ArmSpec { index: 1, n: 20, entry_threshold: 0 },
            ArmSpec { index: 2, n: 20, entry_threshold: 20 },
        ];
        let schedule = build_schedule(&arms, 3).unwrap();
        let truth = ScenarioTruth { eta0: 0.5, theta: vec![theta; 2], sd: 0.5 };
        generate_trial(&schedule, &truth, &TimeTrendSpec::flat(), seed).unwrap()
    }

    #[test]
    fn drift_model_shape_follows_buckets_and_arms() {
        let data = small_trial(0.0, 1);
        let prior = TimeMachinePrior::with_drift_gamma(1.0, 1.0);
        // Arm 2 finishes the trial: 70 patients, so ceil(70/25) = 3 buckets.
        let (model, track) = build_drift_model(&data, 2, &prior).unwrap();
        assert_eq!(model.x.nrows(), 70);
        assert_eq!(model.n_theta, 2);
        assert_eq!(model.drift_dim(), 2);
        assert_eq!(track, 2);
        // Patient 70 is in the reference bucket, patient 1 in the oldest.
        assert_eq!(model.x.row(69)[3], 0.0);
        assert_eq!(model.x.row(69)[4], 0.0);
        assert_eq!(model.x.row(0)[4], 1.0);
    }

    #[test]
    fn single_bucket_data_has_no_drift_columns() {
        let arms = vec![ArmSpec { index: 1, n: 5, entry_threshold: 0 }];
        let schedule = build_schedule(&arms, 3).unwrap();
        let data = generate_trial(
            &schedule,
            &ScenarioTruth::null(1),
            &TimeTrendSpec::flat(),
            9,
        )
        .unwrap();
        let prior = TimeMachinePrior::with_drift_gamma(1.0, 1.0);
        let (model, _) = build_drift_model(&data, 1, &prior).unwrap();
        assert_eq!(model.drift_dim(), 0);
        assert_eq!(model.n_coef(), 2);
    }

    #[test]
    fn strong_effects_are_detected_and_strong_harms_are_not() {
        let prior = TimeMachinePrior::with_drift_gamma(1.0, 1.0);
        let mcmc = McmcSettings { iterations: 800, burn_in: 200, ..Default::default() };
        let good = fit_time_machine(&small_trial(3.0, 7), 1, &prior, &mcmc, 0.025).unwrap();
        assert!(good.prob_positive > 0.99);
        assert!(good.reject);
        assert!(good.diagnostics.ess > 50.0);
        let bad = fit_time_machine(&small_trial(-3.0, 7), 1, &prior, &mcmc, 0.025).unwrap();
        assert!(bad.prob_positive < 0.01);
        assert!(!bad.reject);
    }

    #[test]
    fn decision_threshold_is_strict() {
        assert!(!tm_decision(0.975, 0.025));
        assert!(tm_decision(0.9751, 0.025));
        assert!(!tm_decision(0.9749, 0.025));
    }

    #[test]
    fn fit_is_deterministic_in_the_seed() {
        let data = small_trial(0.3, 11);
        let prior = TimeMachinePrior::with_drift_gamma(1.0, 1.0);
        let mcmc = McmcSettings { iterations: 300, burn_in: 100, seed: 5, ..Default::default() };
        let a = fit_time_machine(&data, 2, &prior, &mcmc, 0.025).unwrap();
        let b = fit_time_machine(&data, 2, &prior, &mcmc, 0.025).unwrap();
        assert_eq!(a, b);
    }
}
