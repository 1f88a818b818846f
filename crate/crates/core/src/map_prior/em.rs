//! EM fitting of a normal mixture to posterior draws.

use rand::seq::index::sample as sample_indices;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::map_prior::NormalMixture;
use crate::stats::{mean, sample_variance};

const MAX_EM_ITER: usize = 500;
const REL_TOL: f64 = 1e-9;

fn log_normal_pdf(x: f64, mu: f64, sd: f64) -> f64 {
    let z = (x - mu) / sd;
    -0.5 * (2.0 * std::f64::consts::PI).ln() - sd.ln() - 0.5 * z * z
}

pub(crate) fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + values.iter().map(|&v| (v - max).exp()).sum::<f64>().ln()
}

struct EmState {
    weights: Vec<f64>,
    means: Vec<f64>,
    sds: Vec<f64>,
    log_lik: f64,
}

/// One E+M sweep. Returns the log-likelihood at the pre-update parameters.
fn em_step(draws: &[f64], state: &mut EmState, sd_floor: f64, resp: &mut [f64]) -> f64 {
    let n = draws.len();
    let k = state.weights.len();
    let mut terms = vec![0.0; k];
    let mut log_lik = 0.0;
    for (i, &x) in draws.iter().enumerate() {
        for c in 0..k {
            terms[c] = state.weights[c].ln() + log_normal_pdf(x, state.means[c], state.sds[c]);
        }
        let norm = log_sum_exp(&terms);
        log_lik += norm;
        for c in 0..k {
            resp[i * k + c] = (terms[c] - norm).exp();
        }
    }
    for c in 0..k {
        let total: f64 = (0..n).map(|i| resp[i * k + c]).sum();
        if total < 1e-300 {
            // Component lost every observation; starve it instead of
            // dividing by zero.
            state.weights[c] = 1e-12;
            continue;
        }
        let mu = (0..n).map(|i| resp[i * k + c] * draws[i]).sum::<f64>() / total;
        let var =
            (0..n).map(|i| resp[i * k + c] * (draws[i] - mu) * (draws[i] - mu)).sum::<f64>() / total;
        state.weights[c] = (total / n as f64).max(1e-12);
        state.means[c] = mu;
        state.sds[c] = var.sqrt().max(sd_floor);
    }
    let wsum: f64 = state.weights.iter().sum();
    for w in &mut state.weights {
        *w /= wsum;
    }
    log_lik
}

fn run_to_convergence(draws: &[f64], mut state: EmState, sd_floor: f64) -> EmState {
    let k = state.weights.len();
    let mut resp = vec![0.0; draws.len() * k];
    for _ in 0..MAX_EM_ITER {
        let log_lik = em_step(draws, &mut state, sd_floor, &mut resp);
        let converged = (log_lik - state.log_lik).abs() <= REL_TOL * (1.0 + log_lik.abs());
        state.log_lik = log_lik;
        if converged || !log_lik.is_finite() {
            break;
        }
    }
    state
}

/// Fits a `components`-component normal mixture to the draws by maximum
/// likelihood, restarting EM from `restarts` random initializations and
/// keeping the best fit. Components are returned sorted by mean.
pub fn fit_mixture(
    draws: &[f64],
    components: usize,
    restarts: usize,
    seed: u64,
) -> Result<NormalMixture> {
    if components == 0 {
        return Err(Error::InvalidArgument("at least one mixture component is required".into()));
    }
    if restarts == 0 {
        return Err(Error::InvalidArgument("at least one EM restart is required".into()));
    }
    if draws.len() < 2 * components.max(1) {
        return Err(Error::InsufficientData(format!(
            "{} draws are too few for {components} components",
            draws.len()
        )));
    }
    if draws.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("draws must be finite".into()));
    }

    let overall_mean = mean(draws);
    let overall_sd = sample_variance(draws).sqrt();
    if components == 1 || overall_sd == 0.0 {
        // Degenerate data or a single component: moments are the MLE (up to
        // the n/(n-1) factor, irrelevant downstream).
        return NormalMixture::new(
            vec![1.0],
            vec![overall_mean],
            vec![overall_sd.max(1e-12)],
        );
    }
    let sd_floor = (overall_sd * 1e-3).max(1e-12);

    let mut best: Option<EmState> = None;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..restarts {
        // Initialize means at randomly chosen draws, spread sds.
        let idx = sample_indices(&mut rng, draws.len(), components);
        let means: Vec<f64> = idx.iter().map(|i| draws[i]).collect();
        let state = EmState {
            weights: vec![1.0 / components as f64; components],
            means,
            sds: vec![overall_sd; components],
            log_lik: f64::NEG_INFINITY,
        };
        let fitted = run_to_convergence(draws, state, sd_floor);
        if best.as_ref().is_none_or(|b| fitted.log_lik > b.log_lik) {
            best = Some(fitted);
        }
    }
    let mut state = best.expect("at least one restart ran");

    // Sort components by mean for a canonical order.
    let mut order: Vec<usize> = (0..components).collect();
    order.sort_by(|&a, &b| state.means[a].total_cmp(&state.means[b]));
    state.weights = order.iter().map(|&i| state.weights[i]).collect();
    state.means = order.iter().map(|&i| state.means[i]).collect();
    state.sds = order.iter().map(|&i| state.sds[i]).collect();
    NormalMixture::new(state.weights, state.means, state.sds)
}
