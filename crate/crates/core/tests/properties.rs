//! Randomized structural invariants of schedules, control splits, buckets,
//! trends, and the agreement of the frequentist tests in degenerate cases.

use proptest::prelude::*;

use platsim_core::datagen::{
    generate_trial, trend_value, ScenarioTruth, TimeTrendSpec, TrendPattern,
};
use platsim_core::design::{build_schedule, derive_buckets, split_controls, ArmSpec};
use platsim_core::freq::{pooled_ttest, regression_model, separate_ttest};

/// Between one and four arms of a common size with reachable, non-decreasing
/// entry thresholds (cumulative gaps of at most one arm size keep every
/// threshold below the running trial length).
fn arm_strategy() -> impl Strategy<Value = (Vec<ArmSpec>, u64)> {
    (1usize..=4, 2usize..=30, proptest::collection::vec(0.0f64..=1.0, 3), any::<u64>()).prop_map(
        |(k, n, gap_fracs, seed)| {
            let mut threshold = 0usize;
            let arms = (1..=k)
                .map(|index| {
                    if index > 1 {
                        threshold += (gap_fracs[index - 2] * n as f64) as usize;
                    }
                    ArmSpec { index, n, entry_threshold: threshold }
                })
                .collect();
            (arms, seed)
        },
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn schedules_are_complete_block_designs((arms, seed) in arm_strategy()) {
        let s = build_schedule(&arms, seed).unwrap();

        prop_assert_eq!(s.allocation.len(), s.n_total);
        prop_assert_eq!(s.period_index.len(), s.n_total);
        for a in &arms {
            let got = s.allocation.iter().filter(|&&k| k == a.index).count();
            prop_assert_eq!(got, a.n, "arm {} size", a.index);
        }

        // Periods partition the patients contiguously, agree with the
        // per-patient period indices, and adjacent active sets differ.
        prop_assert_eq!(s.periods[0].start, 1);
        prop_assert_eq!(s.periods.last().unwrap().end, s.n_total);
        for w in s.periods.windows(2) {
            prop_assert_eq!(w[1].start, w[0].end + 1);
            prop_assert_ne!(&w[1].active, &w[0].active);
        }
        for p in &s.periods {
            prop_assert_eq!(p.active[0], 0, "control active in every period");
            for j in p.start..=p.end {
                prop_assert_eq!(s.period_index[j - 1], p.index);
            }
            // Complete blocks: each block of |active| patients contains each
            // active arm exactly once.
            let width = p.active.len();
            prop_assert_eq!((p.end - p.start + 1) % width, 0);
            let mut j = p.start;
            while j <= p.end {
                let mut block: Vec<usize> = s.allocation[j - 1..j - 1 + width].to_vec();
                block.sort_unstable();
                prop_assert_eq!(&block, &p.active);
                j += width;
            }
        }

        // Arm k enters at the first block boundary with at least its
        // threshold enrolled, and its entry and exit close periods.
        for a in &arms {
            let e = s.entry_patient[a.index - 1];
            prop_assert!(e == 1 || e - 1 >= a.entry_threshold);
            if e > 1 {
                let prev = &s.periods[s.period_index[e - 2] - 1];
                prop_assert_eq!(prev.end, e - 1, "entry starts a period");
                prop_assert!(e - 1 - prev.active.len() < a.entry_threshold,
                    "arm {} entered later than the first eligible boundary", a.index);
            }
            let exit = s.exit_of(a.index).unwrap();
            let exit_period = &s.periods[s.period_index[exit - 1] - 1];
            prop_assert_eq!(exit_period.end, exit, "exit closes a period");
            // The arm is active in exactly the periods between entry and exit.
            for p in &s.periods {
                let should = p.start >= e && p.end <= exit;
                prop_assert_eq!(p.active.contains(&a.index), should);
            }
        }
    }

    #[test]
    fn splits_and_buckets_follow_their_definitions((arms, seed) in arm_strategy()) {
        let s = build_schedule(&arms, seed).unwrap();
        for a in &arms {
            let k = a.index;
            let split = split_controls(&s, k).unwrap();
            prop_assert_eq!(split.s_bar, s.s_bar(k).unwrap());
            prop_assert_eq!(split.s_exit, s.exit_period(k).unwrap());

            // Every control patient lands in exactly the set its period
            // dictates; controls after the exit period are in neither.
            let mut nc = 0usize;
            let mut cc = 0usize;
            for j in 1..=s.n_total {
                if s.allocation[j - 1] != 0 {
                    prop_assert!(!split.concurrent.contains(&j));
                    prop_assert!(!split.non_concurrent.contains(&j));
                    continue;
                }
                let p = s.period_index[j - 1];
                if p <= split.s_bar {
                    nc += 1;
                    prop_assert!(split.non_concurrent.contains(&j));
                } else if p <= split.s_exit {
                    cc += 1;
                    prop_assert!(split.concurrent.contains(&j));
                } else {
                    prop_assert!(!split.concurrent.contains(&j));
                    prop_assert!(!split.non_concurrent.contains(&j));
                }
            }
            prop_assert_eq!(split.non_concurrent.len(), nc);
            prop_assert_eq!(split.concurrent.len(), cc);
            // One control per block while the arm is active: the concurrent
            // control count equals the arm's sample size.
            prop_assert_eq!(cc, a.n);

            let t_k = s.exit_of(k).unwrap();
            for size in [1usize, 3, 7, 25] {
                let b = derive_buckets(&s, k, size).unwrap();
                prop_assert_eq!(b.bucket.len(), t_k);
                prop_assert_eq!(b.bucket[t_k - 1], 1, "most recent patient is bucket 1");
                prop_assert_eq!(b.bucket[0], b.count, "first patient is the oldest bucket");
                prop_assert_eq!(b.count, t_k.div_ceil(size));
                for j in 1..t_k {
                    let step = b.bucket[j - 1] - b.bucket[j];
                    prop_assert!(step <= 1, "buckets decrease by at most one");
                }
                let mut counts = vec![0usize; b.count + 1];
                for &c in &b.bucket {
                    counts[c] += 1;
                }
                for c in 1..b.count {
                    prop_assert_eq!(counts[c], size, "bucket {} is full", c);
                }
                prop_assert!(counts[b.count] >= 1 && counts[b.count] <= size);
            }
        }
    }

    #[test]
    fn linear_trend_is_monotone_and_hits_its_endpoints(
        lambda in 0.01f64..2.0,
        n in 4usize..400,
    ) {
        let spec = TimeTrendSpec::equal(TrendPattern::Linear, lambda, 1);
        let at = |j: usize| trend_value(&spec, j, 0, 1, n).unwrap();
        prop_assert_eq!(at(1), 0.0);
        prop_assert!((at(n) - lambda).abs() < 1e-12);
        for j in 2..=n {
            prop_assert!(at(j) > at(j - 1));
        }
    }

    #[test]
    fn inverted_u_trend_is_symmetric_about_its_peak(
        lambda in 0.01f64..2.0,
        n in 6usize..400,
        peak_frac in 0.0f64..=1.0,
    ) {
        let peak = 2 + (peak_frac * (n - 3) as f64) as usize;
        let spec =
            TimeTrendSpec { pattern: TrendPattern::InvertedU, lambda: vec![lambda], peak: Some(peak) };
        let at = |j: usize| trend_value(&spec, j, 0, 1, n).unwrap();
        for t in 1..peak.min(n - peak) {
            prop_assert!((at(peak + t) - at(peak - t)).abs() < 1e-12);
        }
        for j in 2..=peak {
            prop_assert!(at(j) > at(j - 1));
        }
        for j in peak + 1..=n {
            prop_assert!(at(j) < at(j - 1));
        }
    }

    #[test]
    fn all_methods_agree_on_a_single_period_trial(
        n in 3usize..25,
        seed in any::<u64>(),
    ) {
        let arms = vec![ArmSpec { index: 1, n, entry_threshold: 0 }];
        let s = build_schedule(&arms, seed).unwrap();
        let truth = ScenarioTruth { eta0: 0.1, theta: vec![0.3], sd: 1.0 };
        let data = generate_trial(&s, &truth, &TimeTrendSpec::flat(), seed ^ 1).unwrap();

        let sep = separate_ttest(&data, 1, 0.025).unwrap();
        let poo = pooled_ttest(&data, 1, 0.025).unwrap();
        let reg = regression_model(&data, 1, 0.025).unwrap();
        for other in [&poo, &reg] {
            prop_assert!((sep.estimate - other.estimate).abs() < 1e-9);
            prop_assert!((sep.t - other.t).abs() < 1e-9);
            prop_assert!((sep.p_one_sided - other.p_one_sided).abs() < 1e-9);
            prop_assert_eq!(sep.df, other.df);
        }
    }

    #[test]
    fn pooling_changes_nothing_for_the_first_arm((arms, seed) in arm_strategy()) {
        // Arm 1 has no non-concurrent controls, so the pooled and separate
        // analyses see identical data.
        let s = build_schedule(&arms, seed).unwrap();
        let truth = ScenarioTruth::null(arms.len());
        let data = generate_trial(&s, &truth, &TimeTrendSpec::flat(), seed ^ 2).unwrap();
        let sep = separate_ttest(&data, 1, 0.025).unwrap();
        let poo = pooled_ttest(&data, 1, 0.025).unwrap();
        prop_assert_eq!(sep.estimate, poo.estimate);
        prop_assert_eq!(sep.t, poo.t);
        prop_assert_eq!(sep.df, poo.df);
    }
}
