//! Monte Carlo driver: per-replication seeding, parallel execution, and
//! aggregation into rejection rates.
//!
//! Seeding is hierarchical. Each replication derives its own seed from the
//! scenario master seed and splits it into independent streams for the
//! schedule, the trend draws, the noise, and each sampler. Replications never
//! share generator state, so results are identical for a given configuration
//! regardless of how many workers run them.

pub mod config;
pub mod results;
pub mod seed;

use std::fs::File;
use std::path::Path;

use rayon::prelude::*;

use crate::analysis::{AnalysisResult, McmcSettings, MethodTag};
use crate::datagen::{
    generate_trial, sample_arm_lambdas, ScenarioTruth, TimeTrendSpec, TrialDataset,
};
use crate::design::build_schedule;
use crate::error::{Error, Result};
use crate::freq::{pooled_ttest, regression_model, separate_ttest};
use crate::map_prior::{map_analysis, MapConfig};
use crate::timemachine::{fit_time_machine, TimeMachinePrior};

pub use config::{
    load_config, parse_config, Hypothesis, LambdaRule, MethodConfig, ScenarioConfig, ThetaSpec,
    TrendConfig,
};
pub use results::{
    aggregate, aggregate_decisions, decisions_csv_bytes, prediction_band, read_decisions_csv,
    summary_json, write_decisions_csv, write_results_csv, ArmMethodSummary, DecisionRecord,
    ScenarioSummary,
};
pub use seed::{
    derive_seed, STREAM_LAMBDA, STREAM_MAP, STREAM_NOISE, STREAM_SCHEDULE, STREAM_TIME_MACHINE,
};

/// A method with all scenario-level preparation already applied: calibrated
/// priors and chain settings, minus the per-replication seed.
#[derive(Debug, Clone)]
pub enum ResolvedMethod {
    Separate { alpha: f64 },
    Pooled { alpha: f64 },
    Regression { alpha: f64 },
    TimeMachine { alpha: f64, prior: TimeMachinePrior, mcmc: McmcSettings },
    Map { cfg: MapConfig },
}

impl ResolvedMethod {
    pub fn tag(&self) -> MethodTag {
        match self {
            ResolvedMethod::Separate { .. } => MethodTag::Separate,
            ResolvedMethod::Pooled { .. } => MethodTag::Pooled,
            ResolvedMethod::Regression { .. } => MethodTag::Regression,
            ResolvedMethod::TimeMachine { .. } => MethodTag::TimeMachine,
            ResolvedMethod::Map { .. } => MethodTag::MapPrior,
        }
    }

    pub fn alpha(&self) -> f64 {
        match self {
            ResolvedMethod::Separate { alpha }
            | ResolvedMethod::Pooled { alpha }
            | ResolvedMethod::Regression { alpha }
            | ResolvedMethod::TimeMachine { alpha, .. } => *alpha,
            ResolvedMethod::Map { cfg } => cfg.alpha,
        }
    }
}

/// Prepares one configured method: runs the drift-prior calibration once and
/// freezes the sampler settings.
pub fn resolve_method(method: &MethodConfig) -> Result<ResolvedMethod> {
    Ok(match method {
        MethodConfig::Separate { alpha } => ResolvedMethod::Separate { alpha: *alpha },
        MethodConfig::Pooled { alpha } => ResolvedMethod::Pooled { alpha: *alpha },
        MethodConfig::Regression { alpha } => ResolvedMethod::Regression { alpha: *alpha },
        MethodConfig::TimeMachine {
            alpha,
            a_tau,
            b_tau,
            d_expected,
            d_maximum,
            iota,
            bucket_size,
            iterations,
            burn_in,
            thinning,
            chains,
        } => {
            let mut prior = match (a_tau, b_tau) {
                (Some(a), Some(b)) => TimeMachinePrior::with_drift_gamma(*a, *b),
                _ => {
                    let (de, dm) = d_expected.zip(*d_maximum).ok_or_else(|| {
                        Error::Config(
                            "time_machine needs either a_tau and b_tau, or d_expected and d_maximum"
                                .into(),
                        )
                    })?;
                    TimeMachinePrior::from_calibration(de, dm, *iota)?
                }
            };
            prior.bucket_size = *bucket_size;
            let mcmc = McmcSettings {
                iterations: *iterations,
                burn_in: *burn_in,
                thinning: *thinning,
                chains: *chains,
                seed: 0,
            };
            mcmc.validate()?;
            ResolvedMethod::TimeMachine { alpha: *alpha, prior, mcmc }
        }
        MethodConfig::Map {
            alpha,
            sigma2_beta,
            sigma2_tau,
            robust_weight,
            components,
            em_restarts,
            prob_draws,
            iterations,
            burn_in,
            thinning,
            chains,
        } => {
            let cfg = MapConfig {
                sigma2_beta: *sigma2_beta,
                sigma2_tau: *sigma2_tau,
                robust_weight: *robust_weight,
                mcmc: McmcSettings {
                    iterations: *iterations,
                    burn_in: *burn_in,
                    thinning: *thinning,
                    chains: *chains,
                    seed: 0,
                },
                components: *components,
                em_restarts: *em_restarts,
                prob_draws: *prob_draws,
                alpha: *alpha,
                ..MapConfig::default()
            };
            cfg.mcmc.validate()?;
            ResolvedMethod::Map { cfg }
        }
    })
}

pub fn resolve_methods(cfg: &ScenarioConfig) -> Result<Vec<ResolvedMethod>> {
    cfg.methods.iter().map(resolve_method).collect()
}

/// Per-arm trend strengths for one replication; random rules redraw from the
/// replication's trend stream.
fn resolve_trend(cfg: &ScenarioConfig, rep_master: u64) -> Result<TimeTrendSpec> {
    let Some(trend) = &cfg.trend else {
        return Ok(TimeTrendSpec::flat());
    };
    let lambda = match &trend.lambda {
        LambdaRule::Shared(l) => vec![*l; cfg.arms + 1],
        LambdaRule::PerArm(l) => l.clone(),
        LambdaRule::Random { base, sd, pinned } => {
            sample_arm_lambdas(*base, *sd, pinned, cfg.arms, derive_seed(rep_master, STREAM_LAMBDA))?
        }
    };
    Ok(TimeTrendSpec { pattern: trend.pattern, lambda, peak: trend.peak })
}

/// Runs one resolved method on one arm. Sampler seeds are derived from the
/// replication seed and the arm index, so every (replication, arm, method)
/// triple draws from its own stream.
pub fn analyse_arm(
    data: &TrialDataset,
    arm: usize,
    method: &ResolvedMethod,
    rep_master: u64,
) -> Result<AnalysisResult> {
    Ok(match method {
        ResolvedMethod::Separate { alpha } => {
            AnalysisResult::Frequentist(separate_ttest(data, arm, *alpha)?)
        }
        ResolvedMethod::Pooled { alpha } => {
            AnalysisResult::Frequentist(pooled_ttest(data, arm, *alpha)?)
        }
        ResolvedMethod::Regression { alpha } => {
            AnalysisResult::Frequentist(regression_model(data, arm, *alpha)?)
        }
        ResolvedMethod::TimeMachine { alpha, prior, mcmc } => {
            let mut mcmc = mcmc.clone();
            mcmc.seed = derive_seed(derive_seed(rep_master, STREAM_TIME_MACHINE), arm as u64);
            AnalysisResult::Bayesian(fit_time_machine(data, arm, prior, &mcmc, *alpha)?)
        }
        ResolvedMethod::Map { cfg } => {
            let mut cfg = cfg.clone();
            cfg.mcmc.seed = derive_seed(derive_seed(rep_master, STREAM_MAP), arm as u64);
            AnalysisResult::Bayesian(map_analysis(data, arm, &cfg)?)
        }
    })
}

/// Simulates one trial and analyses every requested arm with every method.
pub fn run_replication(
    cfg: &ScenarioConfig,
    methods: &[ResolvedMethod],
    rep: usize,
) -> Result<Vec<DecisionRecord>> {
    let rep_master = derive_seed(cfg.master_seed, rep as u64);
    let schedule = build_schedule(&cfg.arm_specs(), derive_seed(rep_master, STREAM_SCHEDULE))?;
    let trend = resolve_trend(cfg, rep_master)?;
    let truth = ScenarioTruth { eta0: cfg.eta0, theta: cfg.effective_theta(), sd: cfg.sd };
    let data = generate_trial(&schedule, &truth, &trend, derive_seed(rep_master, STREAM_NOISE))?;

    let arms = cfg.arms_to_analyse();
    let mut out = Vec::with_capacity(arms.len() * methods.len());
    for &arm in &arms {
        for method in methods {
            let result = analyse_arm(&data, arm, method, rep_master)?;
            out.push(DecisionRecord::from_result(rep, &result));
        }
    }
    Ok(out)
}

/// Decisions of every completed replication plus their aggregation.
#[derive(Debug, Clone)]
pub struct ScenarioOutput {
    pub decisions: Vec<DecisionRecord>,
    pub summary: ScenarioSummary,
}

impl ScenarioOutput {
    /// Writes decisions.csv, results.csv, and summary.json into `dir`,
    /// creating it if needed.
    pub fn write_to_dir(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        write_decisions_csv(File::create(dir.join("decisions.csv"))?, &self.decisions)?;
        write_results_csv(File::create(dir.join("results.csv"))?, &self.summary)?;
        std::fs::write(dir.join("summary.json"), summary_json(&self.summary)?)?;
        Ok(())
    }
}

/// Runs all replications of a scenario on the current rayon pool.
///
/// Individual replications may fail (for example when a degenerate draw
/// leaves a method without enough data); those are dropped from the rates.
/// More than 1% failures abort the whole run.
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<ScenarioOutput> {
    cfg.validate()?;
    let methods = resolve_methods(cfg)?;

    let outcomes: Vec<Result<Vec<DecisionRecord>>> = (0..cfg.replications)
        .into_par_iter()
        .map(|rep| run_replication(cfg, &methods, rep))
        .collect();

    let mut decisions = Vec::new();
    let mut failures: Vec<(usize, String)> = Vec::new();
    for (rep, outcome) in outcomes.into_iter().enumerate() {
        match outcome {
            Ok(mut d) => decisions.append(&mut d),
            Err(e) => failures.push((rep, e.to_string())),
        }
    }
    let failed = failures.len();
    let completed = cfg.replications - failed;
    if failed as f64 > 0.01 * cfg.replications as f64 {
        let (rep, msg) = &failures[0];
        return Err(Error::Harness(format!(
            "{failed} of {} replications failed (more than 1%); first failure at replication \
             {rep}: {msg}",
            cfg.replications
        )));
    }

    let mut plan = Vec::new();
    for arm in cfg.arms_to_analyse() {
        for m in &methods {
            plan.push((arm, m.tag(), m.alpha()));
        }
    }
    let summary = ScenarioSummary {
        setting: cfg.name.clone(),
        hypothesis: cfg.hypothesis,
        replications: cfg.replications,
        completed,
        failed,
        master_seed: cfg.master_seed,
        results: aggregate(&decisions, &plan, completed),
    };
    Ok(ScenarioOutput { decisions, summary })
}

/// Like [`run_scenario`] but on a dedicated pool of `workers` threads;
/// 0 means the default pool.
pub fn run_scenario_with_workers(cfg: &ScenarioConfig, workers: usize) -> Result<ScenarioOutput> {
    if workers == 0 {
        return run_scenario(cfg);
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Harness(format!("failed to build worker pool: {e}")))?;
    pool.install(|| run_scenario(cfg))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn freq_config(replications: usize) -> ScenarioConfig {
        parse_config(&format!(
            r#"
                name = "unit"
                arms = 2
                sample_size = 40
                entry = [0, 40]
                hypothesis = "alternative"
                theta = 0.8
                replications = {replications}
                master_seed = 11

                [[methods]]
                kind = "separate"

                [[methods]]
                kind = "pooled"

                [[methods]]
                kind = "regression"
            "#
        ))
        .unwrap()
    }

    #[test]
    fn time_machine_resolution_calibrates_the_drift_prior() {
        let method = MethodConfig::TimeMachine {
            alpha: 0.025,
            a_tau: None,
            b_tau: None,
            d_expected: Some(1.0),
            d_maximum: Some(1.5),
            iota: 0.01,
            bucket_size: 10,
            iterations: 300,
            burn_in: 100,
            thinning: 1,
            chains: 1,
        };
        match resolve_method(&method).unwrap() {
            ResolvedMethod::TimeMachine { prior, mcmc, alpha } => {
                assert_relative_eq!(prior.a_tau, 11.562213390788964, max_relative = 1e-8);
                assert_relative_eq!(prior.b_tau, 11.562213390788964, max_relative = 1e-8);
                assert_eq!(prior.bucket_size, 10);
                assert_eq!(mcmc.iterations, 300);
                assert_eq!(alpha, 0.025);
            }
            other => panic!("resolved to {other:?}"),
        }
    }

    #[test]
    fn shared_and_random_trend_rules_resolve_per_arm() {
        let mut cfg = freq_config(1);
        cfg.trend = Some(TrendConfig {
            pattern: crate::datagen::TrendPattern::Linear,
            lambda: LambdaRule::Shared(0.15),
            peak: None,
        });
        let spec = resolve_trend(&cfg, 7).unwrap();
        assert_eq!(spec.lambda, vec![0.15; 3]);

        cfg.trend = Some(TrendConfig {
            pattern: crate::datagen::TrendPattern::Linear,
            lambda: LambdaRule::Random { base: 0.15, sd: 0.5, pinned: vec![2] },
            peak: None,
        });
        let a = resolve_trend(&cfg, 7).unwrap();
        let b = resolve_trend(&cfg, 7).unwrap();
        let c = resolve_trend(&cfg, 8).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.lambda[1], c.lambda[1]);
        assert_eq!(a.lambda[0], 0.15);
        assert_eq!(a.lambda[2], 0.15);
        assert_ne!(a.lambda[1], 0.15);
    }

    #[test]
    fn replications_are_deterministic_and_distinct() {
        let cfg = freq_config(2);
        let methods = resolve_methods(&cfg).unwrap();
        let a = run_replication(&cfg, &methods, 0).unwrap();
        let b = run_replication(&cfg, &methods, 0).unwrap();
        let c = run_replication(&cfg, &methods, 1).unwrap();
        assert_eq!(a, b);
        assert_ne!(a[0].statistic, c[0].statistic);
        // Arm-major, method-minor ordering.
        assert_eq!(a.len(), 6);
        assert_eq!((a[0].arm, a[0].method), (1, MethodTag::Separate));
        assert_eq!((a[1].arm, a[1].method), (1, MethodTag::Pooled));
        assert_eq!((a[5].arm, a[5].method), (2, MethodTag::Regression));
    }

    #[test]
    fn scenario_rates_aggregate_over_completed_replications() {
        let cfg = freq_config(20);
        let out = run_scenario(&cfg).unwrap();
        assert_eq!(out.summary.completed, 20);
        assert_eq!(out.summary.failed, 0);
        assert_eq!(out.decisions.len(), 20 * 6);
        assert_eq!(out.summary.results.len(), 6);
        for r in &out.summary.results {
            assert!((0.0..=1.0).contains(&r.rejection_rate));
            assert_eq!(r.completed, 20);
        }
        // A 0.8-sigma effect on 40-patient arms is detected most of the time.
        assert!(out.summary.results[0].rejection_rate > 0.5);
    }

    #[test]
    fn worker_count_does_not_change_decisions() {
        let cfg = freq_config(16);
        let one = run_scenario_with_workers(&cfg, 1).unwrap();
        let two = run_scenario_with_workers(&cfg, 2).unwrap();
        let default = run_scenario(&cfg).unwrap();
        let bytes = |o: &ScenarioOutput| decisions_csv_bytes(&o.decisions).unwrap();
        assert_eq!(bytes(&one), bytes(&two));
        assert_eq!(bytes(&one), bytes(&default));
        assert_eq!(one.summary, two.summary);
    }

    #[test]
    fn pervasive_failures_abort_the_run() {
        // One patient per arm: no method can form a two-sample test.
        let cfg = parse_config(
            r#"
                name = "degenerate"
                arms = 1
                sample_size = 1
                entry = [0]
                hypothesis = "null"
                theta = 0.25
                replications = 5
                master_seed = 3

                [[methods]]
                kind = "separate"
            "#,
        )
        .unwrap();
        let err = run_scenario(&cfg).unwrap_err().to_string();
        assert!(err.contains("5 of 5 replications failed"), "error was: {err}");
    }

    #[test]
    fn outputs_land_in_the_requested_directory() {
        let cfg = freq_config(3);
        let out = run_scenario(&cfg).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let target = dir.path().join("nested").join("run");
        out.write_to_dir(&target).unwrap();
        for name in ["decisions.csv", "results.csv", "summary.json"] {
            let path = target.join(name);
            assert!(path.is_file(), "{name} missing");
            assert!(std::fs::metadata(&path).unwrap().len() > 0);
        }
        let json = std::fs::read_to_string(target.join("summary.json")).unwrap();
        let back: ScenarioSummary = serde_json::from_str(&json).unwrap();
        assert_eq!(back, out.summary);
    }
}
