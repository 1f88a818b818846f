//! Scenario configuration: TOML schema, validation, and loading.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::datagen::TrendPattern;
use crate::design::ArmSpec;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Hypothesis {
    /// All treatment effects are zero; rejection rates estimate type 1 error.
    Null,
    /// Treatment effects take their configured values; rates estimate power.
    Alternative,
}

/// Treatment effect sizes under the alternative: one shared value or one
/// value per experimental arm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ThetaSpec {
    Shared(f64),
    PerArm(Vec<f64>),
}

/// Trend strengths: one shared value, explicit per-arm values (control
/// first), or per-arm draws around a base value with some arms pinned to it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LambdaRule {
    Shared(f64),
    PerArm(Vec<f64>),
    Random {
        base: f64,
        sd: f64,
        #[serde(default)]
        pinned: Vec<usize>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrendConfig {
    pub pattern: TrendPattern,
    #[serde(default = "default_lambda")]
    pub lambda: LambdaRule,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub peak: Option<usize>,
}

fn default_lambda() -> LambdaRule {
    LambdaRule::Shared(0.0)
}

fn default_alpha() -> f64 {
    0.025
}
fn default_iota() -> f64 {
    0.01
}
fn default_bucket_size() -> usize {
    25
}
fn default_iterations() -> usize {
    4000
}
fn default_burn_in() -> usize {
    1000
}
fn default_thinning() -> usize {
    1
}
fn default_chains() -> usize {
    1
}
fn default_sigma2_beta() -> f64 {
    1000.0
}
fn default_sigma2_tau() -> f64 {
    500.0
}
fn default_robust_weight() -> f64 {
    0.1
}
fn default_components() -> usize {
    2
}
fn default_em_restarts() -> usize {
    5
}
fn default_prob_draws() -> usize {
    20_000
}
fn default_sd() -> f64 {
    1.0
}

/// One analysis method to run on every analysed arm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MethodConfig {
    Separate {
        #[serde(default = "default_alpha")]
        alpha: f64,
    },
    Pooled {
        #[serde(default = "default_alpha")]
        alpha: f64,
    },
    Regression {
        #[serde(default = "default_alpha")]
        alpha: f64,
    },
    TimeMachine {
        #[serde(default = "default_alpha")]
        alpha: f64,
        /// Drift-precision Gamma, either given directly...
        #[serde(default, skip_serializing_if = "Option::is_none")]
        a_tau: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        b_tau: Option<f64>,
        /// ...or calibrated from expected/maximum drift magnitudes.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        d_expected: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        d_maximum: Option<f64>,
        #[serde(default = "default_iota")]
        iota: f64,
        #[serde(default = "default_bucket_size")]
        bucket_size: usize,
        #[serde(default = "default_iterations")]
        iterations: usize,
        #[serde(default = "default_burn_in")]
        burn_in: usize,
        #[serde(default = "default_thinning")]
        thinning: usize,
        #[serde(default = "default_chains")]
        chains: usize,
    },
    Map {
        #[serde(default = "default_alpha")]
        alpha: f64,
        #[serde(default = "default_sigma2_beta")]
        sigma2_beta: f64,
        #[serde(default = "default_sigma2_tau")]
        sigma2_tau: f64,
        #[serde(default = "default_robust_weight")]
        robust_weight: f64,
        #[serde(default = "default_components")]
        components: usize,
        #[serde(default = "default_em_restarts")]
        em_restarts: usize,
        #[serde(default = "default_prob_draws")]
        prob_draws: usize,
        #[serde(default = "default_iterations")]
        iterations: usize,
        #[serde(default = "default_burn_in")]
        burn_in: usize,
        #[serde(default = "default_thinning")]
        thinning: usize,
        #[serde(default = "default_chains")]
        chains: usize,
    },
}

impl MethodConfig {
    pub fn tag(&self) -> crate::analysis::MethodTag {
        use crate::analysis::MethodTag;
        match self {
            MethodConfig::Separate { .. } => MethodTag::Separate,
            MethodConfig::Pooled { .. } => MethodTag::Pooled,
            MethodConfig::Regression { .. } => MethodTag::Regression,
            MethodConfig::TimeMachine { .. } => MethodTag::TimeMachine,
            MethodConfig::Map { .. } => MethodTag::MapPrior,
        }
    }

    pub fn alpha(&self) -> f64 {
        match *self {
            MethodConfig::Separate { alpha }
            | MethodConfig::Pooled { alpha }
            | MethodConfig::Regression { alpha }
            | MethodConfig::TimeMachine { alpha, .. }
            | MethodConfig::Map { alpha, .. } => alpha,
        }
    }

    fn validate(&self) -> Result<()> {
        let alpha = self.alpha();
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::Config(format!("method alpha must lie in (0, 1), got {alpha}")));
        }
        if let MethodConfig::TimeMachine {
            a_tau, b_tau, d_expected, d_maximum, bucket_size, ..
        } = self
        {
            let direct = a_tau.is_some() && b_tau.is_some();
            let calibrated = d_expected.is_some() && d_maximum.is_some();
            let partial = a_tau.is_some() != b_tau.is_some()
                || d_expected.is_some() != d_maximum.is_some();
            if partial || direct == calibrated {
                return Err(Error::Config(
                    "time_machine needs either a_tau and b_tau, or d_expected and d_maximum"
                        .into(),
                ));
            }
            if *bucket_size == 0 {
                return Err(Error::Config("bucket_size must be positive".into()));
            }
        }
        if let MethodConfig::Map { robust_weight, components, em_restarts, prob_draws, .. } = self
        {
            if !(*robust_weight >= 0.0 && *robust_weight < 1.0) {
                return Err(Error::Config(format!(
                    "robust_weight must lie in [0, 1), got {robust_weight}"
                )));
            }
            if *components == 0 || *em_restarts == 0 {
                return Err(Error::Config("components and em_restarts must be positive".into()));
            }
            if *prob_draws < 100 {
                return Err(Error::Config("prob_draws must be at least 100".into()));
            }
        }
        Ok(())
    }
}

/// Complete description of one simulation scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    /// Number of experimental arms.
    pub arms: usize,
    /// Patients per experimental arm.
    pub sample_size: usize,
    /// Entry thresholds: arm k starts once this many patients are enrolled.
    pub entry: Vec<usize>,
    pub hypothesis: Hypothesis,
    #[serde(default)]
    pub eta0: f64,
    pub theta: ThetaSpec,
    #[serde(default = "default_sd")]
    pub sd: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trend: Option<TrendConfig>,
    pub methods: Vec<MethodConfig>,
    pub replications: usize,
    pub master_seed: u64,
    /// Arms to analyse; all experimental arms when omitted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub analyse_arms: Option<Vec<usize>>,
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        if self.arms == 0 {
            return Err(Error::Config("arms must be at least 1".into()));
        }
        if self.sample_size == 0 {
            return Err(Error::Config("sample_size must be at least 1".into()));
        }
        if self.entry.len() != self.arms {
            return Err(Error::Config(format!(
                "entry has {} thresholds for {} arms",
                self.entry.len(),
                self.arms
            )));
        }
        if self.entry[0] != 0 {
            return Err(Error::Config("the first arm must enter at threshold 0".into()));
        }
        if self.entry.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::Config("entry thresholds must be non-decreasing".into()));
        }
        if !(self.sd >= 0.0) {
            return Err(Error::Config(format!("sd must be non-negative, got {}", self.sd)));
        }
        if let ThetaSpec::PerArm(t) = &self.theta {
            if t.len() != self.arms {
                return Err(Error::Config(format!(
                    "theta lists {} effects for {} arms",
                    t.len(),
                    self.arms
                )));
            }
        }
        if let Some(trend) = &self.trend {
            match &trend.lambda {
                LambdaRule::PerArm(l) if l.len() != self.arms + 1 => {
                    return Err(Error::Config(format!(
                        "trend lambda lists {} values; need {} (control plus each arm)",
                        l.len(),
                        self.arms + 1
                    )));
                }
                LambdaRule::Random { sd, pinned, .. } => {
                    if !(*sd >= 0.0) {
                        return Err(Error::Config("trend lambda sd must be non-negative".into()));
                    }
                    if pinned.iter().any(|&p| p > self.arms) {
                        return Err(Error::Config("pinned arm index out of range".into()));
                    }
                }
                _ => {}
            }
        }
        if self.methods.is_empty() {
            return Err(Error::Config("at least one method is required".into()));
        }
        for m in &self.methods {
            m.validate()?;
        }
        if self.replications == 0 {
            return Err(Error::Config("replications must be at least 1".into()));
        }
        if let Some(arms) = &self.analyse_arms {
            if arms.is_empty() {
                return Err(Error::Config("analyse_arms must not be empty".into()));
            }
            if arms.iter().any(|&a| a == 0 || a > self.arms) {
                return Err(Error::Config(format!(
                    "analyse_arms entries must lie in 1..={}",
                    self.arms
                )));
            }
        }
        Ok(())
    }

    pub fn arm_specs(&self) -> Vec<ArmSpec> {
        (1..=self.arms)
            .map(|k| ArmSpec {
                index: k,
                n: self.sample_size,
                entry_threshold: self.entry[k - 1],
            })
            .collect()
    }

    /// Effect sizes actually used in generation: zero under the null.
    pub fn effective_theta(&self) -> Vec<f64> {
        match self.hypothesis {
            Hypothesis::Null => vec![0.0; self.arms],
            Hypothesis::Alternative => match &self.theta {
                ThetaSpec::Shared(t) => vec![*t; self.arms],
                ThetaSpec::PerArm(t) => t.clone(),
            },
        }
    }

    pub fn arms_to_analyse(&self) -> Vec<usize> {
        self.analyse_arms.clone().unwrap_or_else(|| (1..=self.arms).collect())
    }
}

pub fn parse_config(text: &str) -> Result<ScenarioConfig> {
    let cfg: ScenarioConfig =
        toml::from_str(text).map_err(|e| Error::Config(format!("invalid scenario config: {e}")))?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_config(path: &Path) -> Result<ScenarioConfig> {
    let text = std::fs::read_to_string(path)?;
    parse_config(&text)
}
