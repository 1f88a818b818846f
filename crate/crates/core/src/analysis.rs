//! Result types shared by all treatment-vs-control analysis methods.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Chain-length settings shared by the MCMC-based analyses.
///
/// `iterations` counts every sweep including warm-up; the first `burn_in`
/// sweeps are discarded and every `thinning`-th sweep after that is kept.
/// With more than one chain the retained draws are pooled.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct McmcSettings {
    pub iterations: usize,
    pub burn_in: usize,
    pub thinning: usize,
    pub chains: usize,
    pub seed: u64,
}

impl Default for McmcSettings {
    fn default() -> Self {
        McmcSettings { iterations: 4000, burn_in: 1000, thinning: 1, chains: 1, seed: 0 }
    }
}

impl McmcSettings {
    pub fn validate(&self) -> Result<()> {
        if self.thinning == 0 {
            return Err(Error::InvalidArgument("thinning must be at least 1".into()));
        }
        if self.chains == 0 {
            return Err(Error::InvalidArgument("at least one chain is required".into()));
        }
        if self.iterations <= self.burn_in {
            return Err(Error::InvalidArgument(format!(
                "iterations ({}) must exceed burn-in ({})",
                self.iterations, self.burn_in
            )));
        }
        if self.retained_per_chain() < 2 {
            return Err(Error::InvalidArgument(
                "fewer than 2 draws would be retained per chain".into(),
            ));
        }
        Ok(())
    }

    pub fn retained_per_chain(&self) -> usize {
        (self.iterations - self.burn_in).div_ceil(self.thinning)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MethodTag {
    Separate,
    Pooled,
    Regression,
    TimeMachine,
    MapPrior,
}

impl MethodTag {
    pub fn label(self) -> &'static str {
        match self {
            MethodTag::Separate => "separate",
            MethodTag::Pooled => "pooled",
            MethodTag::Regression => "regression",
            MethodTag::TimeMachine => "time_machine",
            MethodTag::MapPrior => "map",
        }
    }

    pub fn from_label(label: &str) -> Option<Self> {
        match label {
            "separate" => Some(MethodTag::Separate),
            "pooled" => Some(MethodTag::Pooled),
            "regression" => Some(MethodTag::Regression),
            "time_machine" => Some(MethodTag::TimeMachine),
            "map" => Some(MethodTag::MapPrior),
            _ => None,
        }
    }
}

/// Outcome of a frequentist test of one experimental arm against control.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FreqResult {
    pub method: MethodTag,
    pub arm: usize,
    /// Estimated treatment-control difference.
    pub estimate: f64,
    pub se: f64,
    pub t: f64,
    pub df: f64,
    pub p_one_sided: f64,
    pub reject: bool,
    /// Design-matrix columns removed as linearly dependent (regression only).
    pub dropped_columns: Vec<String>,
}

/// Sampler health indicators attached to Bayesian results.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McmcDiagnostics {
    /// Effective sample size of the retained treatment-effect draws.
    pub ess: f64,
    /// Metropolis acceptance rate, when a Metropolis step is involved.
    pub acceptance: Option<f64>,
}

/// Posterior summary of one experimental arm against control.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorSummary {
    pub method: MethodTag,
    pub arm: usize,
    pub theta_mean: f64,
    pub theta_sd: f64,
    /// Posterior probability that the treatment effect is positive.
    pub prob_positive: f64,
    pub reject: bool,
    pub diagnostics: McmcDiagnostics,
}

/// Either kind of per-arm analysis outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AnalysisResult {
    Frequentist(FreqResult),
    Bayesian(PosteriorSummary),
}

impl AnalysisResult {
    pub fn method(&self) -> MethodTag {
        match self {
            AnalysisResult::Frequentist(r) => r.method,
            AnalysisResult::Bayesian(r) => r.method,
        }
    }

    pub fn arm(&self) -> usize {
        match self {
            AnalysisResult::Frequentist(r) => r.arm,
            AnalysisResult::Bayesian(r) => r.arm,
        }
    }

    pub fn reject(&self) -> bool {
        match self {
            AnalysisResult::Frequentist(r) => r.reject,
            AnalysisResult::Bayesian(r) => r.reject,
        }
    }

    /// Test statistic: the t value or the posterior probability of benefit.
    pub fn statistic(&self) -> f64 {
        match self {
            AnalysisResult::Frequentist(r) => r.t,
            AnalysisResult::Bayesian(r) => r.prob_positive,
        }
    }

    /// One-sided p-value or posterior probability, depending on the method.
    pub fn p_or_prob(&self) -> f64 {
        match self {
            AnalysisResult::Frequentist(r) => r.p_one_sided,
            AnalysisResult::Bayesian(r) => r.prob_positive,
        }
    }

    pub fn estimate(&self) -> f64 {
        match self {
            AnalysisResult::Frequentist(r) => r.estimate,
            AnalysisResult::Bayesian(r) => r.theta_mean,
        }
    }
}
