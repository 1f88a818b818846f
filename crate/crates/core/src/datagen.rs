//! Response generation under additive time trends.
//!
//! The mean model is y_j = η₀ + θ_k·I(k_j > 0) + f(j) + ε_j with i.i.d.
//! normal errors. The trend f depends on the pattern: stepwise trends jump
//! when a new experimental arm enters, linear trends grow affinely over the
//! trial, and inverted-U trends rise to a peak and fall symmetrically.

use std::io::{Read, Write};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::design::{buckets_from_exit, split_controls_from, BucketAssignment, ControlSplit, TrialSchedule};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrendPattern {
    None,
    Stepwise,
    Linear,
    InvertedU,
}

/// Trend pattern plus per-arm strengths λ_0..λ_K (index 0 is the control).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeTrendSpec {
    pub pattern: TrendPattern,
    pub lambda: Vec<f64>,
    /// Peak patient index for the inverted-U pattern; when absent the peak
    /// defaults to the middle of the trial, floor(N/2).
    pub peak: Option<usize>,
}

impl TimeTrendSpec {
    pub fn flat() -> Self {
        TimeTrendSpec { pattern: TrendPattern::None, lambda: Vec::new(), peak: None }
    }

    /// Equal strengths across control and all K experimental arms.
    pub fn equal(pattern: TrendPattern, lambda: f64, k_total: usize) -> Self {
        TimeTrendSpec { pattern, lambda: vec![lambda; k_total + 1], peak: None }
    }
}

/// True generating parameters: control response, per-arm effects, and the
/// residual standard deviation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioTruth {
    pub eta0: f64,
    pub theta: Vec<f64>,
    pub sd: f64,
}

impl ScenarioTruth {
    pub fn null(k_total: usize) -> Self {
        ScenarioTruth { eta0: 0.0, theta: vec![0.0; k_total], sd: 1.0 }
    }
}

/// One simulated trial: parallel per-patient vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialDataset {
    /// 1-based patient index j.
    pub patient: Vec<usize>,
    /// Arm k_j (0 = control).
    pub arm: Vec<usize>,
    /// Period s_j.
    pub period: Vec<usize>,
    /// Response y_j.
    pub y: Vec<f64>,
}

impl TrialDataset {
    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    /// Largest experimental arm index present.
    pub fn num_arms(&self) -> usize {
        self.arm.iter().copied().max().unwrap_or(0)
    }

    pub fn num_periods(&self) -> usize {
        self.period.iter().copied().max().unwrap_or(0)
    }

    /// Responses of one arm, in patient order.
    pub fn arm_values(&self, k: usize) -> Vec<f64> {
        self.arm
            .iter()
            .zip(&self.y)
            .filter_map(|(&a, &y)| (a == k).then_some(y))
            .collect()
    }

    /// Period in which arm k finishes.
    pub fn exit_period(&self, k: usize) -> Result<usize> {
        self.arm
            .iter()
            .zip(&self.period)
            .filter_map(|(&a, &s)| (a == k).then_some(s))
            .max()
            .ok_or_else(|| Error::InsufficientData(format!("no data for arm {k}")))
    }

    /// Last period before arm k entered.
    pub fn entry_period(&self, k: usize) -> Result<usize> {
        self.arm
            .iter()
            .zip(&self.period)
            .filter_map(|(&a, &s)| (a == k).then_some(s))
            .min()
            .ok_or_else(|| Error::InsufficientData(format!("no data for arm {k}")))
    }

    /// Exit patient index T_k: the last patient of arm k's exit period.
    pub fn exit_patient(&self, k: usize) -> Result<usize> {
        let s_exit = self.exit_period(k)?;
        self.period
            .iter()
            .zip(&self.patient)
            .filter_map(|(&s, &j)| (s == s_exit).then_some(j))
            .max()
            .ok_or_else(|| Error::InsufficientData(format!("no data in period {s_exit}")))
    }

    /// Concurrent / non-concurrent split of control patients for arm k.
    /// Returned indices are 1-based patient positions in this dataset.
    pub fn split_controls(&self, k: usize) -> Result<ControlSplit> {
        let s_bar = self.entry_period(k)? - 1;
        let s_exit = self.exit_period(k)?;
        split_controls_from(&self.arm, &self.period, s_bar, s_exit)
    }

    /// Bucket assignment (over patient indices 1..=T_k) for analysed arm k.
    pub fn buckets(&self, k: usize, bucket_size: usize) -> Result<BucketAssignment> {
        buckets_from_exit(self.exit_patient(k)?, bucket_size)
    }

    /// Responses at 1-based dataset positions.
    pub fn values_at(&self, positions: &[usize]) -> Vec<f64> {
        positions.iter().map(|&p| self.y[p - 1]).collect()
    }

    /// Writes the dataset as CSV with columns j, k, s, y.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["j", "k", "s", "y"])?;
        for i in 0..self.len() {
            w.write_record(&[
                self.patient[i].to_string(),
                self.arm[i].to_string(),
                self.period[i].to_string(),
                self.y[i].to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads a dataset written by [`TrialDataset::write_csv`].
    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(reader);
        let mut out = TrialDataset {
            patient: Vec::new(),
            arm: Vec::new(),
            period: Vec::new(),
            y: Vec::new(),
        };
        for record in r.records() {
            let record = record?;
            let field = |i: usize| -> Result<&str> {
                record
                    .get(i)
                    .ok_or_else(|| Error::Config(format!("dataset row missing column {i}")))
            };
            out.patient.push(
                field(0)?
                    .parse()
                    .map_err(|e| Error::Config(format!("bad patient index: {e}")))?,
            );
            out.arm
                .push(field(1)?.parse().map_err(|e| Error::Config(format!("bad arm: {e}")))?);
            out.period
                .push(field(2)?.parse().map_err(|e| Error::Config(format!("bad period: {e}")))?);
            out.y
                .push(field(3)?.parse().map_err(|e| Error::Config(format!("bad response: {e}")))?);
        }
        if out.is_empty() {
            return Err(Error::InsufficientData("dataset CSV has no rows".into()));
        }
        Ok(out)
    }
}

/// Trend contribution f(j) for a patient of arm `k`.
///
/// `c_entered` counts the experimental arms whose entry boundary lies at or
/// before j (used by the stepwise pattern), and `n_total` is the trial size.
pub fn trend_value(
    spec: &TimeTrendSpec,
    j: usize,
    k: usize,
    c_entered: usize,
    n_total: usize,
) -> Result<f64> {
    if matches!(spec.pattern, TrendPattern::None) {
        return Ok(0.0);
    }
    let lambda = *spec.lambda.get(k).ok_or_else(|| {
        Error::InvalidArgument(format!("no trend strength for arm {k} (lambda has {} entries)", spec.lambda.len()))
    })?;
    match spec.pattern {
        TrendPattern::None => Ok(0.0),
        TrendPattern::Stepwise => Ok(lambda * (c_entered.saturating_sub(1)) as f64),
        TrendPattern::Linear => {
            if n_total < 2 {
                return Err(Error::InvalidArgument("linear trend needs at least 2 patients".into()));
            }
            Ok(lambda * (j - 1) as f64 / (n_total - 1) as f64)
        }
        TrendPattern::InvertedU => {
            if n_total < 2 {
                return Err(Error::InvalidArgument(
                    "inverted-U trend needs at least 2 patients".into(),
                ));
            }
            let peak = spec.peak.unwrap_or(n_total / 2);
            if peak < 2 || peak > n_total - 1 {
                return Err(Error::InvalidArgument(format!(
                    "inverted-U peak {peak} outside 2..={}",
                    n_total - 1
                )));
            }
            let denom = (n_total - 1) as f64;
            if j <= peak {
                Ok(lambda * (j - 1) as f64 / denom)
            } else {
                Ok(-lambda * (j - peak) as f64 / denom + lambda * (peak - 1) as f64 / denom)
            }
        }
    }
}

/// Generates responses for every patient of a schedule.
pub fn generate_trial(
    schedule: &TrialSchedule,
    truth: &ScenarioTruth,
    trend: &TimeTrendSpec,
    seed: u64,
) -> Result<TrialDataset> {
    let n = schedule.n_total;
    if truth.theta.len() < schedule.num_arms() {
        return Err(Error::InvalidArgument(format!(
            "{} effect sizes for {} experimental arms",
            truth.theta.len(),
            schedule.num_arms()
        )));
    }
    if truth.sd < 0.0 {
        return Err(Error::InvalidArgument("residual sd must be non-negative".into()));
    }
    // Entry boundaries sorted ascending; c_entered(j) advances as j passes them.
    let mut entries: Vec<usize> = schedule.entry_patient.clone();
    entries.sort_unstable();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut dataset = TrialDataset {
        patient: Vec::with_capacity(n),
        arm: Vec::with_capacity(n),
        period: Vec::with_capacity(n),
        y: Vec::with_capacity(n),
    };
    let mut c_entered = 0usize;
    for j in 1..=n {
        while c_entered < entries.len() && entries[c_entered] <= j {
            c_entered += 1;
        }
        let k = schedule.allocation[j - 1];
        let mut mean = truth.eta0 + trend_value(trend, j, k, c_entered, n)?;
        if k > 0 {
            mean += truth.theta[k - 1];
        }
        let z: f64 = StandardNormal.sample(&mut rng);
        dataset.patient.push(j);
        dataset.arm.push(k);
        dataset.period.push(schedule.period_index[j - 1]);
        dataset.y.push(mean + truth.sd * z);
    }
    Ok(dataset)
}

/// Draws per-arm trend strengths: pinned arms (always including the control)
/// keep λ₀, the rest are sampled from N(λ₀, sd²) in arm order.
pub fn sample_arm_lambdas(
    lambda0: f64,
    sd: f64,
    pinned: &[usize],
    k_total: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    if sd < 0.0 {
        return Err(Error::InvalidArgument("lambda sd must be non-negative".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(k_total + 1);
    for k in 0..=k_total {
        if k == 0 || pinned.contains(&k) {
            out.push(lambda0);
        } else {
            let z: f64 = StandardNormal.sample(&mut rng);
            out.push(lambda0 + sd * z);
        }
    }
    Ok(out)
}
