//! Frequentist analyses: two-sample t-tests against concurrent or pooled
//! controls, and a period-adjusted linear regression.
//!
//! All tests are one-sided for a positive treatment effect at level alpha;
//! a result rejects when its p-value is strictly below alpha.

use nalgebra::{DMatrix, DVector};

use crate::analysis::{FreqResult, MethodTag};
use crate::datagen::TrialDataset;
use crate::error::{Error, Result};
use crate::stats::ols::ols;
use crate::stats::special::student_t_sf;
use crate::stats::{centered_ss, mean};

pub(crate) fn validate_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidArgument(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    Ok(())
}

/// Pooled-variance two-sample comparison; returns (estimate, se, t, df).
fn two_sample_pooled(treat: &[f64], ctrl: &[f64]) -> Result<(f64, f64, f64, f64)> {
    let (nt, nc) = (treat.len(), ctrl.len());
    if nt < 2 || nc < 2 {
        return Err(Error::InsufficientData(format!(
            "t-test needs at least 2 observations per group, got {nt} and {nc}"
        )));
    }
    let df = (nt + nc - 2) as f64;
    let sp2 = (centered_ss(treat) + centered_ss(ctrl)) / df;
    if sp2 <= 0.0 {
        return Err(Error::Numerical("pooled variance is zero".into()));
    }
    let se = (sp2 * (1.0 / nt as f64 + 1.0 / nc as f64)).sqrt();
    let estimate = mean(treat) - mean(ctrl);
    Ok((estimate, se, estimate / se, df))
}

fn ttest_result(
    method: MethodTag,
    arm: usize,
    alpha: f64,
    treat: &[f64],
    ctrl: &[f64],
) -> Result<FreqResult> {
    let (estimate, se, t, df) = two_sample_pooled(treat, ctrl)?;
    let p = student_t_sf(t, df)?;
    Ok(FreqResult {
        method,
        arm,
        estimate,
        se,
        t,
        df,
        p_one_sided: p,
        reject: p < alpha,
        dropped_columns: Vec::new(),
    })
}

/// t-test of arm k against its concurrent controls only.
pub fn separate_ttest(data: &TrialDataset, k: usize, alpha: f64) -> Result<FreqResult> {
    validate_alpha(alpha)?;
    let split = data.split_controls(k)?;
    let treat = data.arm_values(k);
    let ctrl = data.values_at(&split.concurrent);
    ttest_result(MethodTag::Separate, k, alpha, &treat, &ctrl)
}

/// t-test of arm k against every control recruited up to arm k's exit period,
/// concurrent and non-concurrent alike.
pub fn pooled_ttest(data: &TrialDataset, k: usize, alpha: f64) -> Result<FreqResult> {
    validate_alpha(alpha)?;
    let split = data.split_controls(k)?;
    let treat = data.arm_values(k);
    let mut positions = split.non_concurrent.clone();
    positions.extend_from_slice(&split.concurrent);
    let ctrl = data.values_at(&positions);
    ttest_result(MethodTag::Pooled, k, alpha, &treat, &ctrl)
}

/// Linear model of the response on arm indicators and period indicators,
/// fitted to all patients recruited up to arm k's exit period. The period
/// coefficients absorb shared shifts over time; the test is the one-sided t
/// on arm k's coefficient. Linearly dependent columns are dropped (earlier
/// columns win) and reported in `dropped_columns`.
pub fn regression_model(data: &TrialDataset, k: usize, alpha: f64) -> Result<FreqResult> {
    validate_alpha(alpha)?;
    if k == 0 {
        return Err(Error::InvalidArgument("cannot test the control against itself".into()));
    }
    let s_exit = data.exit_period(k)?;
    let rows: Vec<usize> = (0..data.len()).filter(|&i| data.period[i] <= s_exit).collect();
    let m = rows.len();

    let mut arms_present: Vec<usize> =
        rows.iter().map(|&i| data.arm[i]).filter(|&a| a > 0).collect();
    arms_present.sort_unstable();
    arms_present.dedup();
    if !rows.iter().any(|&i| data.arm[i] == 0) {
        return Err(Error::InsufficientData(format!(
            "no control observations up to period {s_exit}"
        )));
    }
    let mut periods_present: Vec<usize> = rows.iter().map(|&i| data.period[i]).collect();
    periods_present.sort_unstable();
    periods_present.dedup();
    let base_period = periods_present[0];

    let mut labels = vec!["intercept".to_string()];
    labels.extend(arms_present.iter().map(|a| format!("arm{a}")));
    labels.extend(periods_present.iter().skip(1).map(|s| format!("period{s}")));
    let p = labels.len();

    let mut x = DMatrix::<f64>::zeros(m, p);
    let mut y = Vec::with_capacity(m);
    for (r, &i) in rows.iter().enumerate() {
        x[(r, 0)] = 1.0;
        if data.arm[i] > 0 {
            let pos = arms_present.binary_search(&data.arm[i]).unwrap();
            x[(r, 1 + pos)] = 1.0;
        }
        if data.period[i] > base_period {
            let pos = periods_present.binary_search(&data.period[i]).unwrap();
            x[(r, arms_present.len() + pos)] = 1.0;
        }
        y.push(data.y[i]);
    }

    let fit = ols(&x, &DVector::from_vec(y))?;
    let target = 1 + arms_present.binary_search(&k).unwrap();
    let (estimate, se) = fit.coef_se(target).ok_or_else(|| {
        Error::Numerical(format!("arm {k} indicator is linearly dependent on earlier columns"))
    })?;
    let t = estimate / se;
    let df = fit.df as f64;
    let pval = student_t_sf(t, df)?;
    Ok(FreqResult {
        method: MethodTag::Regression,
        arm: k,
        estimate,
        se,
        t,
        df,
        p_one_sided: pval,
        reject: pval < alpha,
        dropped_columns: fit.dropped.iter().map(|&c| labels[c].clone()).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::{generate_trial, ScenarioTruth, TimeTrendSpec};
    use crate::design::{build_schedule, ArmSpec};
    use approx::assert_relative_eq;

    fn flat_dataset(arms: &[usize], periods: &[usize], y: &[f64]) -> TrialDataset {
        TrialDataset {
            patient: (1..=y.len()).collect(),
            arm: arms.to_vec(),
            period: periods.to_vec(),
            y: y.to_vec(),
        }
    }

    #[test]
    fn separate_matches_textbook_two_sample_test() {
        // Treatment {1,2,3} vs control {0,1,2}: t = sqrt(3/2), df = 4.
        let data = flat_dataset(
            &[1, 0, 1, 0, 1, 0],
            &[1, 1, 1, 1, 1, 1],
            &[1.0, 0.0, 2.0, 1.0, 3.0, 2.0],
        );
        let r = separate_ttest(&data, 1, 0.025).unwrap();
        assert_relative_eq!(r.estimate, 1.0, epsilon = 1e-12);
        assert_relative_eq!(r.t, 1.224744871391589, epsilon = 1e-12);
        assert_eq!(r.df, 4.0);
        assert_relative_eq!(r.p_one_sided, 0.1439320673633454, epsilon = 1e-12);
        assert!(!r.reject);
        assert!(r.reject == (r.p_one_sided < 0.025));
    }

    #[test]
    fn pooled_uses_earlier_controls_too() {
        // Arm 2 enters in period 2; its concurrent controls are the two
        // period-2 controls, while pooling adds the two from period 1.
        let data = flat_dataset(
            &[0, 1, 0, 1, 0, 2, 0, 2],
            &[1, 1, 1, 1, 2, 2, 2, 2],
            &[0.0, 1.0, 2.0, 1.5, 1.0, 2.0, 3.0, 2.5],
        );
        let sep = separate_ttest(&data, 2, 0.025).unwrap();
        let pol = pooled_ttest(&data, 2, 0.025).unwrap();
        assert_eq!(sep.df, 2.0);
        assert_eq!(pol.df, 4.0);
        assert_relative_eq!(sep.estimate, 2.25 - 2.0, epsilon = 1e-12);
        assert_relative_eq!(pol.estimate, 2.25 - 1.5, epsilon = 1e-12);
        assert!(pol.estimate > sep.estimate);
    }

    #[test]
    fn regression_matches_hand_computed_fit() {
        // Six observations over two periods, three arms; the normal-equation
        // solution is beta = (0, 1, 2, 1) with s^2 = 0.25 on 2 df.
        let data = flat_dataset(
            &[0, 1, 0, 0, 1, 2],
            &[1, 1, 2, 2, 2, 2],
            &[0.0, 1.0, 0.5, 1.5, 2.0, 3.0],
        );
        let r1 = regression_model(&data, 1, 0.025).unwrap();
        assert_relative_eq!(r1.estimate, 1.0, epsilon = 1e-10);
        assert_relative_eq!(r1.se, 0.4629100498862757, epsilon = 1e-10);
        assert_relative_eq!(r1.t, 2.1602468994692874, epsilon = 1e-10);
        assert_eq!(r1.df, 2.0);
        assert_relative_eq!(r1.p_one_sided, 0.08166998673296211, epsilon = 1e-10);
        assert!(!r1.reject);

        let r2 = regression_model(&data, 2, 0.025).unwrap();
        assert_relative_eq!(r2.estimate, 2.0, epsilon = 1e-10);
        assert_relative_eq!(r2.se, 0.5976143046671968, epsilon = 1e-10);
        assert_relative_eq!(r2.t, 3.3466401061363005, epsilon = 1e-10);
        assert_relative_eq!(r2.p_one_sided, 0.03943381352816178, epsilon = 1e-10);
        assert!(!r2.reject);
        assert!(r1.dropped_columns.is_empty());
    }

    #[test]
    fn regression_reports_aliased_period_column() {
        // Period 2 contains only arm 2, so the period-2 indicator equals the
        // arm-2 indicator and is dropped in favour of the earlier column.
        let data =
            flat_dataset(&[0, 1, 2, 2], &[1, 1, 2, 2], &[0.0, 1.0, 2.0, 3.0]);
        let r = regression_model(&data, 2, 0.025).unwrap();
        assert_eq!(r.dropped_columns, vec!["period2".to_string()]);
        assert_relative_eq!(r.estimate, 2.5, epsilon = 1e-10);
        assert_relative_eq!(r.se, 0.75_f64.sqrt(), epsilon = 1e-10);
        assert_eq!(r.df, 1.0);
    }

    #[test]
    fn single_period_trial_makes_all_three_tests_agree() {
        let arms = vec![ArmSpec { index: 1, n: 40, entry_threshold: 0 }];
        let schedule = build_schedule(&arms, 11).unwrap();
        let truth = ScenarioTruth { eta0: 0.0, theta: vec![0.3], sd: 1.0 };
        let data = generate_trial(&schedule, &truth, &TimeTrendSpec::flat(), 17).unwrap();

        let sep = separate_ttest(&data, 1, 0.025).unwrap();
        let pol = pooled_ttest(&data, 1, 0.025).unwrap();
        let reg = regression_model(&data, 1, 0.025).unwrap();
        assert_relative_eq!(sep.t, pol.t, epsilon = 1e-12);
        assert_relative_eq!(sep.t, reg.t, epsilon = 1e-10);
        assert_eq!(sep.df, reg.df);
        assert_relative_eq!(sep.p_one_sided, reg.p_one_sided, epsilon = 1e-10);
    }

    #[test]
    fn regression_ignores_patients_after_exit() {
        // Arm 1 exits at the end of period 1; the later period must not
        // contribute observations to its analysis.
        let data = flat_dataset(
            &[0, 1, 0, 1, 0, 2, 0, 2],
            &[1, 1, 1, 1, 2, 2, 2, 2],
            &[0.1, 1.0, -0.1, 1.2, 50.0, 60.0, 55.0, 58.0],
        );
        let r = regression_model(&data, 1, 0.025).unwrap();
        assert_eq!(r.df, 2.0);
        assert_relative_eq!(r.estimate, 1.1, epsilon = 1e-10);
    }

    #[test]
    fn missing_arm_is_an_error() {
        let data = flat_dataset(&[0, 1, 0, 1], &[1, 1, 1, 1], &[0.0, 1.0, 0.5, 1.5]);
        assert!(separate_ttest(&data, 2, 0.025).is_err());
        assert!(regression_model(&data, 2, 0.025).is_err());
    }

    #[test]
    fn invalid_alpha_is_rejected() {
        let data = flat_dataset(&[0, 1, 0, 1], &[1, 1, 1, 1], &[0.0, 1.0, 0.5, 1.5]);
        for bad in [0.0, 1.0, -0.1, f64::NAN] {
            assert!(separate_ttest(&data, 1, bad).is_err());
            assert!(pooled_ttest(&data, 1, bad).is_err());
            assert!(regression_model(&data, 1, bad).is_err());
        }
    }

    #[test]
    fn tiny_groups_are_rejected() {
        let data = flat_dataset(&[0, 1], &[1, 1], &[0.0, 1.0]);
        assert!(matches!(
            separate_ttest(&data, 1, 0.025),
            Err(Error::InsufficientData(_))
        ));
    }
}
