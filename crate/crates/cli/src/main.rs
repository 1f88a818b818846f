//! `platsim`: run platform-trial simulations and analyses from the shell.
//!
//! Subcommands mirror the library pipeline: `calibrate` solves for the drift
//! precision prior, `simulate` runs a configured Monte Carlo scenario,
//! `analyze` applies one method to one dataset, `aggregate` turns decision
//! logs into rejection rates, and `bands` prints the Monte Carlo prediction
//! interval for a nominal rate.

use std::fs::File;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use platsim_core::analysis::MethodTag;
use platsim_core::datagen::TrialDataset;
use platsim_core::harness::{
    aggregate_decisions, analyse_arm, load_config, prediction_band, read_decisions_csv,
    resolve_method, run_scenario_with_workers, summary_json, write_results_csv, MethodConfig,
};
use platsim_core::timemachine::calibrate_drift_prior;

#[derive(Parser)]
#[command(
    name = "platsim",
    version,
    about = "Platform-trial simulation engine: staggered arms, time trends, \
             and treatment-vs-control analyses that reuse non-concurrent controls"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Subcommand)]
enum Command {
    /// Solve for the Gamma(a_tau, b_tau) drift-precision prior from expected
    /// and maximum drift magnitudes.
    Calibrate {
        /// Anticipated drift magnitude between adjacent time buckets.
        #[arg(long)]
        d_expected: f64,
        /// Largest plausible drift magnitude between adjacent time buckets.
        #[arg(long)]
        d_maximum: f64,
        /// Tail probability assigned to drifts beyond the maximum.
        #[arg(long, default_value_t = 0.01)]
        iota: f64,
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
    },
    /// Run a scenario config over many replications and report rejection
    /// rates per arm and method.
    Simulate {
        /// Scenario description (TOML).
        #[arg(long)]
        config: PathBuf,
        /// Override the master seed in the config.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the replication count in the config.
        #[arg(long)]
        reps: Option<usize>,
        /// Directory for decisions.csv, results.csv, and summary.json;
        /// without it the results go to stdout.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Worker threads (0 = one per core).
        #[arg(long, default_value_t = 0)]
        workers: usize,
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
    },
    /// Apply one analysis method to one arm of a trial dataset CSV
    /// (columns j,k,s,y).
    Analyze {
        /// Dataset CSV with one row per patient.
        #[arg(long)]
        data: PathBuf,
        /// separate | pooled | regression | time_machine | map
        #[arg(long)]
        method: String,
        /// Experimental arm to test against control.
        #[arg(long)]
        arm: usize,
        /// One-sided test level / posterior decision threshold 1 - alpha.
        #[arg(long, default_value_t = 0.025)]
        alpha: f64,
        /// Seed for the Monte Carlo methods; fixed seed, fixed answer.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        tuning: MethodTuning,
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
    },
    /// Combine one or more decision CSVs into rejection rates per arm and
    /// method.
    Aggregate {
        /// decisions.csv files produced by `simulate`.
        #[arg(required = true)]
        files: Vec<PathBuf>,
        /// Nominal rate used for the prediction band.
        #[arg(long, default_value_t = 0.025)]
        alpha: f64,
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
    },
    /// 95% prediction interval for an observed rejection rate when the true
    /// rate is alpha.
    Bands {
        #[arg(long)]
        alpha: f64,
        #[arg(long)]
        replications: usize,
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
    },
}

/// Knobs for the Bayesian methods; ignored by the frequentist ones.
#[derive(Args)]
struct MethodTuning {
    /// Drift prior shape (with --b-tau; alternative to calibration).
    #[arg(long)]
    a_tau: Option<f64>,
    /// Drift prior rate (with --a-tau).
    #[arg(long)]
    b_tau: Option<f64>,
    /// Calibrate the drift prior from this expected drift (with --d-maximum).
    #[arg(long)]
    d_expected: Option<f64>,
    /// Calibrate the drift prior from this maximum drift (with --d-expected).
    #[arg(long)]
    d_maximum: Option<f64>,
    /// Tail probability for drift-prior calibration.
    #[arg(long, default_value_t = 0.01)]
    iota: f64,
    /// Patients per time bucket in the drift model.
    #[arg(long, default_value_t = 25)]
    bucket_size: usize,
    /// MCMC iterations per chain.
    #[arg(long, default_value_t = 4000)]
    iterations: usize,
    /// MCMC iterations discarded as burn-in.
    #[arg(long, default_value_t = 1000)]
    burn_in: usize,
    /// Keep every n-th retained draw.
    #[arg(long, default_value_t = 1)]
    thinning: usize,
    /// Independent MCMC chains to pool.
    #[arg(long, default_value_t = 1)]
    chains: usize,
    /// Monte Carlo draws behind the posterior probability of benefit
    /// (mixture-prior method only).
    #[arg(long, default_value_t = 20_000)]
    prob_draws: usize,
}

impl MethodTuning {
    fn to_method_config(&self, method: &str, alpha: f64) -> Result<MethodConfig> {
        let tag = MethodTag::from_label(method)
            .with_context(|| format!("unknown method '{method}'"))?;
        Ok(match tag {
            MethodTag::Separate => MethodConfig::Separate { alpha },
            MethodTag::Pooled => MethodConfig::Pooled { alpha },
            MethodTag::Regression => MethodConfig::Regression { alpha },
            MethodTag::TimeMachine => {
                // Default to the direct prior unless the user asked for
                // either route explicitly.
                let (a_tau, b_tau) = if self.a_tau.is_none()
                    && self.b_tau.is_none()
                    && self.d_expected.is_none()
                    && self.d_maximum.is_none()
                {
                    (Some(1.0), Some(1.0))
                } else {
                    (self.a_tau, self.b_tau)
                };
                MethodConfig::TimeMachine {
                    alpha,
                    a_tau,
                    b_tau,
                    d_expected: self.d_expected,
                    d_maximum: self.d_maximum,
                    iota: self.iota,
                    bucket_size: self.bucket_size,
                    iterations: self.iterations,
                    burn_in: self.burn_in,
                    thinning: self.thinning,
                    chains: self.chains,
                }
            }
            MethodTag::MapPrior => MethodConfig::Map {
                alpha,
                sigma2_beta: 1000.0,
                sigma2_tau: 500.0,
                robust_weight: 0.1,
                components: 2,
                em_restarts: 5,
                prob_draws: self.prob_draws,
                iterations: self.iterations,
                burn_in: self.burn_in,
                thinning: self.thinning,
                chains: self.chains,
            },
        })
    }
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Calibrate { d_expected, d_maximum, iota, format } => {
            let (a_tau, b_tau) = calibrate_drift_prior(d_expected, d_maximum, iota)?;
            match format {
                Format::Csv => println!("a_tau,b_tau\n{a_tau},{b_tau}"),
                Format::Json => println!(
                    "{}",
                    serde_json::json!({ "a_tau": a_tau, "b_tau": b_tau })
                ),
            }
        }
        Command::Simulate { config, seed, reps, out, workers, format } => {
            let mut cfg = load_config(&config)
                .with_context(|| format!("failed to load {}", config.display()))?;
            if let Some(seed) = seed {
                cfg.master_seed = seed;
            }
            if let Some(reps) = reps {
                cfg.replications = reps;
            }
            let output = run_scenario_with_workers(&cfg, workers)?;
            match out {
                Some(dir) => {
                    output.write_to_dir(&dir)?;
                    eprintln!(
                        "wrote decisions.csv, results.csv, summary.json to {}",
                        dir.display()
                    );
                }
                None => match format {
                    Format::Csv => {
                        write_results_csv(std::io::stdout().lock(), &output.summary)?
                    }
                    Format::Json => println!("{}", summary_json(&output.summary)?),
                },
            }
        }
        Command::Analyze { data, method, arm, alpha, seed, tuning, format } => {
            let file = File::open(&data)
                .with_context(|| format!("failed to open {}", data.display()))?;
            let dataset = TrialDataset::read_csv(file)?;
            let method_cfg = tuning.to_method_config(&method, alpha)?;
            let resolved = resolve_method(&method_cfg)?;
            let result = analyse_arm(&dataset, arm, &resolved, seed)?;
            match format {
                Format::Csv => {
                    println!("arm,method,estimate,statistic,p_or_prob,reject");
                    println!(
                        "{},{},{},{},{},{}",
                        result.arm(),
                        result.method().label(),
                        result.estimate(),
                        result.statistic(),
                        result.p_or_prob(),
                        result.reject()
                    );
                }
                Format::Json => println!("{}", serde_json::to_string_pretty(&result)?),
            }
        }
        Command::Aggregate { files, alpha, format } => {
            if !(alpha > 0.0 && alpha < 1.0) {
                bail!("alpha must lie in (0, 1), got {alpha}");
            }
            let mut decisions = Vec::new();
            for path in &files {
                let file = File::open(path)
                    .with_context(|| format!("failed to open {}", path.display()))?;
                decisions.extend(read_decisions_csv(file)?);
            }
            let metrics = aggregate_decisions(&decisions, alpha);
            match format {
                Format::Csv => {
                    println!(
                        "arm,method,rejection_rate,mc_se,band_low,band_high,replications"
                    );
                    for m in &metrics {
                        println!(
                            "{},{},{},{},{},{},{}",
                            m.arm,
                            m.method.label(),
                            m.rejection_rate,
                            m.mc_se,
                            m.band_low,
                            m.band_high,
                            m.completed
                        );
                    }
                }
                Format::Json => println!("{}", serde_json::to_string_pretty(&metrics)?),
            }
        }
        Command::Bands { alpha, replications, format } => {
            if !(0.0..=1.0).contains(&alpha) {
                bail!("alpha must lie in [0, 1], got {alpha}");
            }
            if replications == 0 {
                bail!("replications must be at least 1");
            }
            let (lo, hi) = prediction_band(alpha, replications);
            match format {
                Format::Csv => println!("band_low,band_high\n{lo},{hi}"),
                Format::Json => {
                    println!("{}", serde_json::json!({ "band_low": lo, "band_high": hi }))
                }
            }
        }
    }
    Ok(())
}
