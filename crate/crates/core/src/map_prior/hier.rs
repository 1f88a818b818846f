//! Hierarchical normal model over historical control periods.
//!
//! Each period s has its own mean η_s drawn around a common level β with
//! between-period standard deviation τ (half-normal prior); observations
//! within a period are normal with shared residual precision τ_Y (Gamma
//! prior). η_s, β, and τ_Y have conjugate full conditionals; τ is updated
//! by a random-walk Metropolis step on log τ whose step size is tuned
//! during burn-in toward a 20-50% acceptance rate. Each retained sweep also
//! draws the predictive mean of an unseen period, β + τ·z.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};

use crate::analysis::McmcSettings;
use crate::error::{Error, Result};

/// Pins used by validation tests; a pinned value removes its update step.
#[derive(Debug, Clone, Default)]
pub struct HierOptions {
    /// Fixed between-period standard deviation τ.
    pub fixed_tau_map: Option<f64>,
    /// Fixed residual precision τ_Y.
    pub fixed_tau_y: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct HierDraws {
    /// Predictive draws of a new period mean, pooled across chains.
    pub predictive: Vec<f64>,
    /// Draws of the common level β.
    pub beta: Vec<f64>,
    /// Posterior mean of each period mean η_s.
    pub eta_mean: Vec<f64>,
    /// Posterior variance of each period mean η_s.
    pub eta_var: Vec<f64>,
    /// Metropolis acceptance rate after burn-in; absent when τ is pinned.
    pub acceptance: Option<f64>,
}

struct GroupStats {
    n: f64,
    sum: f64,
    mean: f64,
    /// Centered sum of squares within the group.
    ss: f64,
}

pub fn sample_hierarchical(
    groups: &[Vec<f64>],
    sigma2_beta: f64,
    sigma2_tau: f64,
    a_y: f64,
    b_y: f64,
    mcmc: &McmcSettings,
    opts: &HierOptions,
) -> Result<HierDraws> {
    mcmc.validate()?;
    if groups.is_empty() {
        return Err(Error::InsufficientData("no historical periods".into()));
    }
    for (i, g) in groups.iter().enumerate() {
        if g.is_empty() {
            return Err(Error::InsufficientData(format!("historical period {i} has no data")));
        }
    }
    for (name, v) in [
        ("sigma2_beta", sigma2_beta),
        ("sigma2_tau", sigma2_tau),
        ("a_y", a_y),
        ("b_y", b_y),
    ] {
        if !(v > 0.0) {
            return Err(Error::InvalidArgument(format!("{name} must be positive, got {v}")));
        }
    }

    let s_count = groups.len();
    let stats: Vec<GroupStats> = groups
        .iter()
        .map(|g| {
            let n = g.len() as f64;
            let sum: f64 = g.iter().sum();
            let mean = sum / n;
            let ss = g.iter().map(|&y| (y - mean) * (y - mean)).sum();
            GroupStats { n, sum, mean, ss }
        })
        .collect();
    let total_n: f64 = stats.iter().map(|s| s.n).sum();
    let grand = stats.iter().map(|s| s.sum).sum::<f64>() / total_n;

    // Deterministic, data-driven starting values.
    let pooled_var = {
        let ss: f64 = stats.iter().map(|s| s.ss).sum();
        let df = total_n - s_count as f64;
        if df > 0.0 && ss > 0.0 {
            ss / df
        } else {
            1.0
        }
    };
    let between_sd = {
        let v = stats.iter().map(|s| (s.mean - grand) * (s.mean - grand)).sum::<f64>()
            / s_count as f64;
        v.sqrt().max(0.05)
    };

    // Log target of u = ln τ given the period means: the η likelihood, the
    // half-normal prior on τ, and the log-scale Jacobian.
    let log_target = |u: f64, sse: f64| -> f64 {
        let v = (2.0 * u).exp();
        -(s_count as f64) * u - sse / (2.0 * v) - v / (2.0 * sigma2_tau) + u
    };

    let retained_total = mcmc.chains * mcmc.retained_per_chain();
    let mut predictive = Vec::with_capacity(retained_total);
    let mut beta_draws = Vec::with_capacity(retained_total);
    let mut eta_mean = vec![0.0; s_count];
    let mut eta_m2 = vec![0.0; s_count];
    let mut kept = 0usize;
    let mut accepted = 0usize;
    let mut proposed = 0usize;

    for chain in 0..mcmc.chains {
        let chain_seed = mcmc.seed ^ (chain as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
        let mut rng = ChaCha8Rng::seed_from_u64(chain_seed);

        let mut beta = grand;
        let mut eta: Vec<f64> = stats.iter().map(|s| s.mean).collect();
        let mut tau_y = opts.fixed_tau_y.unwrap_or(1.0 / pooled_var);
        let mut u = opts.fixed_tau_map.unwrap_or(between_sd).ln();
        let mut step = 0.5;
        let mut window_acc = 0usize;
        let mut window_prop = 0usize;

        for it in 0..mcmc.iterations {
            let tau_map2 = (2.0 * u).exp();

            for (s, g) in stats.iter().enumerate() {
                let prec = g.n * tau_y + 1.0 / tau_map2;
                let mean = (tau_y * g.sum + beta / tau_map2) / prec;
                let z: f64 = StandardNormal.sample(&mut rng);
                eta[s] = mean + z / prec.sqrt();
            }

            let prec_b = s_count as f64 / tau_map2 + 1.0 / sigma2_beta;
            let mean_b = eta.iter().sum::<f64>() / tau_map2 / prec_b;
            let zb: f64 = StandardNormal.sample(&mut rng);
            beta = mean_b + zb / prec_b.sqrt();

            if opts.fixed_tau_y.is_none() {
                let rss: f64 = stats
                    .iter()
                    .zip(&eta)
                    .map(|(g, &e)| g.ss + g.n * (g.mean - e) * (g.mean - e))
                    .sum();
                let shape = a_y + 0.5 * total_n;
                let rate = b_y + 0.5 * rss;
                let gamma = Gamma::new(shape, 1.0 / rate)
                    .map_err(|e| Error::Numerical(format!("invalid gamma parameters: {e}")))?;
                tau_y = gamma.sample(&mut rng);
            }

            if opts.fixed_tau_map.is_none() {
                let sse: f64 = eta.iter().map(|&e| (e - beta) * (e - beta)).sum();
                let zu: f64 = StandardNormal.sample(&mut rng);
                let proposal = u + step * zu;
                let log_ratio = log_target(proposal, sse) - log_target(u, sse);
                let accept = rng.random::<f64>().ln() < log_ratio;
                if accept {
                    u = proposal;
                }
                if it < mcmc.burn_in {
                    window_prop += 1;
                    window_acc += accept as usize;
                    if window_prop == 50 {
                        let rate = window_acc as f64 / 50.0;
                        if rate < 0.20 {
                            step *= 0.7;
                        } else if rate > 0.50 {
                            step *= 1.4;
                        }
                        step = step.clamp(1e-3, 10.0);
                        window_acc = 0;
                        window_prop = 0;
                    }
                } else {
                    proposed += 1;
                    accepted += accept as usize;
                }
            }

            if it >= mcmc.burn_in && (it - mcmc.burn_in) % mcmc.thinning == 0 {
                kept += 1;
                for s in 0..s_count {
                    let d = eta[s] - eta_mean[s];
                    eta_mean[s] += d / kept as f64;
                    eta_m2[s] += d * (eta[s] - eta_mean[s]);
                }
                beta_draws.push(beta);
                let zp: f64 = StandardNormal.sample(&mut rng);
                predictive.push(beta + u.exp() * zp);
            }
        }
    }

    let eta_var = eta_m2.iter().map(|&s| s / (kept - 1) as f64).collect();
    let acceptance =
        opts.fixed_tau_map.is_none().then(|| accepted as f64 / proposed.max(1) as f64);
    Ok(HierDraws { predictive, beta: beta_draws, eta_mean, eta_var, acceptance })
}
