//! Aggregation of per-replication decisions and output writers.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::analysis::{AnalysisResult, MethodTag};
use crate::error::{Error, Result};
use crate::harness::config::Hypothesis;

/// One test decision from one replication.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionRecord {
    pub replication: usize,
    pub arm: usize,
    pub method: MethodTag,
    pub reject: bool,
    /// t statistic or posterior probability of benefit.
    pub statistic: f64,
    /// One-sided p-value or posterior probability, method-dependent.
    pub p_or_prob: f64,
}

impl DecisionRecord {
    pub fn from_result(replication: usize, result: &AnalysisResult) -> Self {
        DecisionRecord {
            replication,
            arm: result.arm(),
            method: result.method(),
            reject: result.reject(),
            statistic: result.statistic(),
            p_or_prob: result.p_or_prob(),
        }
    }
}

/// Rejection rate of one method on one arm, with its Monte Carlo standard
/// error, the nominal level, and the 95% band around that level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmMethodSummary {
    pub arm: usize,
    pub method: MethodTag,
    pub nominal_alpha: f64,
    pub rejection_rate: f64,
    /// √(p̂(1−p̂)/R) of the observed rate.
    pub mc_se: f64,
    pub rejections: usize,
    pub completed: usize,
    pub band_low: f64,
    pub band_high: f64,
}

/// Whole-scenario summary, serialized as JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSummary {
    pub setting: String,
    pub hypothesis: Hypothesis,
    pub replications: usize,
    pub completed: usize,
    pub failed: usize,
    pub master_seed: u64,
    pub results: Vec<ArmMethodSummary>,
}

/// 95% interval for an observed rejection rate when the true rate is
/// `alpha`, over `replications` independent replications, clamped to [0, 1].
pub fn prediction_band(alpha: f64, replications: usize) -> (f64, f64) {
    let half = 1.96 * (alpha * (1.0 - alpha) / replications as f64).sqrt();
    ((alpha - half).max(0.0), (alpha + half).min(1.0))
}

/// Rejection rates per (arm, method) over the completed replications.
pub fn aggregate(
    decisions: &[DecisionRecord],
    plan: &[(usize, MethodTag, f64)],
    completed: usize,
) -> Vec<ArmMethodSummary> {
    plan.iter()
        .map(|&(arm, method, alpha)| {
            let rejections = decisions
                .iter()
                .filter(|d| d.arm == arm && d.method == method && d.reject)
                .count();
            let rate = if completed > 0 { rejections as f64 / completed as f64 } else { f64::NAN };
            let (band_low, band_high) = prediction_band(alpha, completed.max(1));
            ArmMethodSummary {
                arm,
                method,
                nominal_alpha: alpha,
                rejection_rate: rate,
                mc_se: (rate * (1.0 - rate) / completed.max(1) as f64).sqrt(),
                rejections,
                completed,
                band_low,
                band_high,
            }
        })
        .collect()
}

/// Aggregation over a bare decision log: the (arm, method) pairs and the
/// per-pair replication counts are taken from the records themselves. Used
/// to combine decision CSVs from sharded runs.
pub fn aggregate_decisions(decisions: &[DecisionRecord], alpha: f64) -> Vec<ArmMethodSummary> {
    let mut pairs: Vec<(usize, MethodTag)> =
        decisions.iter().map(|d| (d.arm, d.method)).collect();
    pairs.sort_by_key(|&(arm, method)| (arm, method.label()));
    pairs.dedup();
    pairs
        .into_iter()
        .map(|(arm, method)| {
            let mut rows = 0usize;
            let mut rejections = 0usize;
            for d in decisions.iter().filter(|d| d.arm == arm && d.method == method) {
                rows += 1;
                rejections += d.reject as usize;
            }
            let rate = rejections as f64 / rows as f64;
            let (band_low, band_high) = prediction_band(alpha, rows);
            ArmMethodSummary {
                arm,
                method,
                nominal_alpha: alpha,
                rejection_rate: rate,
                mc_se: (rate * (1.0 - rate) / rows as f64).sqrt(),
                rejections,
                completed: rows,
                band_low,
                band_high,
            }
        })
        .collect()
}

/// Writes decisions as CSV: replication, arm, method, reject, statistic,
/// p_or_prob.
pub fn write_decisions_csv<W: Write>(writer: W, decisions: &[DecisionRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["replication", "arm", "method", "reject", "statistic", "p_or_prob"])?;
    for d in decisions {
        w.write_record(&[
            d.replication.to_string(),
            d.arm.to_string(),
            d.method.label().to_string(),
            d.reject.to_string(),
            d.statistic.to_string(),
            d.p_or_prob.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn decisions_csv_bytes(decisions: &[DecisionRecord]) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    write_decisions_csv(&mut buf, decisions)?;
    Ok(buf)
}

/// Reads a decision CSV written by [`write_decisions_csv`].
pub fn read_decisions_csv<R: Read>(reader: R) -> Result<Vec<DecisionRecord>> {
    let mut r = csv::Reader::from_reader(reader);
    let bad = |row: usize, what: &str| Error::Harness(format!("decision CSV row {row}: {what}"));
    let mut out = Vec::new();
    for (i, record) in r.records().enumerate() {
        let row = i + 2; // 1-based, after the header
        let record = record.map_err(|e| bad(row, &e.to_string()))?;
        if record.len() != 6 {
            return Err(bad(row, &format!("expected 6 fields, found {}", record.len())));
        }
        let field = |j: usize| record.get(j).unwrap_or_default();
        out.push(DecisionRecord {
            replication: field(0).parse().map_err(|_| bad(row, "bad replication index"))?,
            arm: field(1).parse().map_err(|_| bad(row, "bad arm index"))?,
            method: MethodTag::from_label(field(2))
                .ok_or_else(|| bad(row, &format!("unknown method '{}'", field(2))))?,
            reject: field(3).parse().map_err(|_| bad(row, "bad reject flag"))?,
            statistic: field(4).parse().map_err(|_| bad(row, "bad statistic"))?,
            p_or_prob: field(5).parse().map_err(|_| bad(row, "bad p_or_prob"))?,
        });
    }
    Ok(out)
}

/// Writes aggregated rates in long format: setting, arm, method, metric,
/// value, replications, seed.
pub fn write_results_csv<W: Write>(writer: W, summary: &ScenarioSummary) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["setting", "arm", "method", "metric", "value", "replications", "seed"])?;
    for r in &summary.results {
        for (metric, value) in [
            ("rejection_rate", r.rejection_rate),
            ("mc_se", r.mc_se),
            ("band_low", r.band_low),
            ("band_high", r.band_high),
        ] {
            w.write_record(&[
                summary.setting.clone(),
                r.arm.to_string(),
                r.method.label().to_string(),
                metric.to_string(),
                value.to_string(),
                r.completed.to_string(),
                summary.master_seed.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn summary_json(summary: &ScenarioSummary) -> Result<String> {
    serde_json::to_string_pretty(summary)
        .map_err(|e| crate::error::Error::Harness(format!("summary serialization failed: {e}")))
}
