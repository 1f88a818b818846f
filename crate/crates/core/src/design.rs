//! Platform-trial skeleton: staggered arm entry and exit, per-period block
//! randomization, the period and time-bucket discretizations, and the
//! concurrent / non-concurrent control split.
//!
//! Patients are indexed 1..=N in enrolment order, one patient per calendar
//! time unit. Arm 0 is the shared control; it stays active until the last
//! experimental arm completes. Experimental arm k enters at the first block
//! boundary where cumulative enrolment reaches its threshold d_k and leaves
//! at the first block boundary where it has accrued its target size. Within
//! a period every complete block allocates one patient to each active arm in
//! uniformly random order, so entry and exit at block boundaries keep the
//! per-period allocation exactly balanced.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One experimental arm: its index (1..=K), target sample size, and the
/// total-enrolment threshold after which it may enter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArmSpec {
    pub index: usize,
    pub n: usize,
    pub entry_threshold: usize,
}

/// A maximal run of patients over which the active-arm set is constant.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Period {
    /// 1-based period index.
    pub index: usize,
    /// First patient of the period (1-based, inclusive).
    pub start: usize,
    /// Last patient of the period (inclusive).
    pub end: usize,
    /// Active arms during the period, sorted; includes the control 0.
    pub active: Vec<usize>,
}

/// Complete allocation skeleton of one simulated trial.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrialSchedule {
    /// Arm per patient, `allocation[j-1]` is k_j.
    pub allocation: Vec<usize>,
    /// Period per patient, `period_index[j-1]` is s_j.
    pub period_index: Vec<usize>,
    /// Period boundaries and active sets.
    pub periods: Vec<Period>,
    /// First patient index of each experimental arm, `entry_patient[k-1]`.
    pub entry_patient: Vec<usize>,
    /// Block boundary at which each experimental arm completed,
    /// `exit_patient[k-1]`. The control's exit is the trial end.
    pub exit_patient: Vec<usize>,
    /// Total number of patients.
    pub n_total: usize,
}

/// Patient-to-bucket assignment for one analysed arm: bucket indices count
/// backwards from the arm's exit, bucket 1 being the most recent.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BucketAssignment {
    /// `bucket[j-1]` is c_j for patients j = 1..=T_k.
    pub bucket: Vec<usize>,
    /// Number of buckets C_k.
    pub count: usize,
}

/// Concurrent / non-concurrent partition of the control patients relevant to
/// one analysed arm. Indices are 1-based patient indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ControlSplit {
    /// Controls enrolled while the analysed arm was active (periods
    /// s_bar+1..=s_exit).
    pub concurrent: Vec<usize>,
    /// Controls enrolled before the analysed arm entered (periods 1..=s_bar).
    pub non_concurrent: Vec<usize>,
    /// Last period before the analysed arm entered.
    pub s_bar: usize,
    /// Period in which the analysed arm finished.
    pub s_exit: usize,
}

impl TrialSchedule {
    pub fn num_arms(&self) -> usize {
        self.entry_patient.len()
    }

    pub fn num_periods(&self) -> usize {
        self.periods.len()
    }

    /// Exit patient index T_k; arm 0 exits when the trial ends.
    pub fn exit_of(&self, k: usize) -> Result<usize> {
        if k == 0 {
            Ok(self.n_total)
        } else {
            self.exit_patient
                .get(k - 1)
                .copied()
                .ok_or_else(|| Error::InvalidArgument(format!("no arm {k} in schedule")))
        }
    }

    /// First period containing arm k's data.
    pub fn entry_period(&self, k: usize) -> Result<usize> {
        if k == 0 {
            return Ok(1);
        }
        let entry = self
            .entry_patient
            .get(k - 1)
            .copied()
            .ok_or_else(|| Error::InvalidArgument(format!("no arm {k} in schedule")))?;
        Ok(self.period_index[entry - 1])
    }

    /// Period in which arm k finishes.
    pub fn exit_period(&self, k: usize) -> Result<usize> {
        Ok(self.period_index[self.exit_of(k)? - 1])
    }

    /// Last period before arm k enters (0 for arms active from the start).
    pub fn s_bar(&self, k: usize) -> Result<usize> {
        Ok(self.entry_period(k)? - 1)
    }
}

/// Builds a randomized schedule from experimental arm specifications.
///
/// `arms` must use contiguous indices 1..=K with non-decreasing entry
/// thresholds and d_1 = 0. The seed fixes every block permutation.
pub fn build_schedule(arms: &[ArmSpec], seed: u64) -> Result<TrialSchedule> {
    validate_arms(arms)?;
    let k_total = arms.len();
    let mut by_index = arms.to_vec();
    by_index.sort_by_key(|a| a.index);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut allocation: Vec<usize> = Vec::new();
    let mut period_index: Vec<usize> = Vec::new();
    let mut periods: Vec<Period> = Vec::new();
    let mut entry_patient = vec![0usize; k_total];
    let mut exit_patient = vec![0usize; k_total];
    let mut accrued = vec![0usize; k_total];

    // Arms not yet entered, ascending by (threshold, index).
    let mut pending: Vec<ArmSpec> = by_index.clone();
    let mut active: Vec<usize> = Vec::new();

    // Trial start is a block boundary: admit every arm with d_k = 0.
    let mut enrolled = 0usize;
    while let Some(first) = pending.first() {
        if first.entry_threshold <= enrolled {
            active.push(pending.remove(0).index);
        } else {
            break;
        }
    }
    if active.is_empty() {
        return Err(Error::InvalidDesign(
            "no experimental arm can enter at the trial start".into(),
        ));
    }
    for &k in &active {
        entry_patient[k - 1] = 1;
    }

    let mut period_start = 1usize;
    loop {
        // One complete block: the control plus each active experimental arm.
        let mut block: Vec<usize> = Vec::with_capacity(active.len() + 1);
        block.push(0);
        block.extend(active.iter().copied());
        block.shuffle(&mut rng);
        for &k in &block {
            allocation.push(k);
            period_index.push(periods.len() + 1);
            if k > 0 {
                accrued[k - 1] += 1;
            }
        }
        enrolled += block.len();

        // Resolve exits, then entries, at this block boundary.
        let mut changed = false;
        let before = active.clone();
        active.retain(|&k| {
            let done = accrued[k - 1] >= by_index[k - 1].n;
            if done {
                exit_patient[k - 1] = enrolled;
            }
            !done
        });
        while let Some(first) = pending.first() {
            if first.entry_threshold <= enrolled {
                let arm = pending.remove(0);
                entry_patient[arm.index - 1] = enrolled + 1;
                active.push(arm.index);
            } else {
                break;
            }
        }
        active.sort_unstable();
        if active != before {
            changed = true;
        }

        let trial_over = active.is_empty();
        if changed || trial_over {
            periods.push(Period {
                index: periods.len() + 1,
                start: period_start,
                end: enrolled,
                active: {
                    let mut a = vec![0];
                    a.extend(before.iter().copied());
                    a
                },
            });
            period_start = enrolled + 1;
        }
        if trial_over {
            if let Some(first) = pending.first() {
                return Err(Error::InvalidDesign(format!(
                    "arm {} has entry threshold {} but the trial ends after {} patients",
                    first.index, first.entry_threshold, enrolled
                )));
            }
            break;
        }
    }

    Ok(TrialSchedule {
        allocation,
        period_index,
        periods,
        entry_patient,
        exit_patient,
        n_total: enrolled,
    })
}

fn validate_arms(arms: &[ArmSpec]) -> Result<()> {
    if arms.is_empty() {
        return Err(Error::InvalidDesign("at least one experimental arm required".into()));
    }
    let mut sorted = arms.to_vec();
    sorted.sort_by_key(|a| a.index);
    for (i, arm) in sorted.iter().enumerate() {
        if arm.index != i + 1 {
            return Err(Error::InvalidDesign(format!(
                "arm indices must be contiguous 1..={}, found index {}",
                arms.len(),
                arm.index
            )));
        }
        if arm.n == 0 {
            return Err(Error::InvalidDesign(format!("arm {} has target size 0", arm.index)));
        }
    }
    if sorted[0].entry_threshold != 0 {
        return Err(Error::InvalidDesign(format!(
            "arm 1 must have entry threshold 0, found {}",
            sorted[0].entry_threshold
        )));
    }
    for w in sorted.windows(2) {
        if w[1].entry_threshold < w[0].entry_threshold {
            return Err(Error::InvalidDesign(format!(
                "entry thresholds must be non-decreasing, arm {} has {} after {}",
                w[1].index, w[1].entry_threshold, w[0].entry_threshold
            )));
        }
    }
    Ok(())
}

/// Bucket assignment for analysed arm k: c_j = ceil((T_k − j + 1) / size)
/// for j ≤ T_k. The oldest bucket absorbs any remainder.
pub fn derive_buckets(
    schedule: &TrialSchedule,
    k: usize,
    bucket_size: usize,
) -> Result<BucketAssignment> {
    let exit = schedule.exit_of(k)?;
    buckets_from_exit(exit, bucket_size)
}

/// Bucket assignment from an exit patient index alone.
pub(crate) fn buckets_from_exit(exit: usize, bucket_size: usize) -> Result<BucketAssignment> {
    if bucket_size == 0 {
        return Err(Error::InvalidArgument("bucket size must be at least 1".into()));
    }
    if exit == 0 {
        return Err(Error::InvalidArgument("arm never completes".into()));
    }
    let count = exit.div_ceil(bucket_size);
    let bucket = (1..=exit).map(|j| (exit - j + 1).div_ceil(bucket_size)).collect();
    Ok(BucketAssignment { bucket, count })
}

/// Splits the control patients relevant to arm k into concurrent and
/// non-concurrent sets.
pub fn split_controls(schedule: &TrialSchedule, k: usize) -> Result<ControlSplit> {
    if k == 0 || k > schedule.num_arms() {
        return Err(Error::InvalidArgument(format!("no experimental arm {k} in schedule")));
    }
    split_controls_from(
        &schedule.allocation,
        &schedule.period_index,
        schedule.s_bar(k)?,
        schedule.exit_period(k)?,
    )
}

/// Shared split implementation over raw allocation/period slices. Patient
/// indices in the result are positions + 1.
pub(crate) fn split_controls_from(
    arm: &[usize],
    period: &[usize],
    s_bar: usize,
    s_exit: usize,
) -> Result<ControlSplit> {
    let mut concurrent = Vec::new();
    let mut non_concurrent = Vec::new();
    for (pos, (&k_j, &s_j)) in arm.iter().zip(period).enumerate() {
        if k_j != 0 {
            continue;
        }
        if s_j <= s_bar {
            non_concurrent.push(pos + 1);
        } else if s_j <= s_exit {
            concurrent.push(pos + 1);
        }
    }
    Ok(ControlSplit { concurrent, non_concurrent, s_bar, s_exit })
}
