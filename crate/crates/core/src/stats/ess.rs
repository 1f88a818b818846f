//! Effective sample size for autocorrelated MCMC draws.

/// Estimates the effective sample size of a chain using Geyer's initial
/// positive sequence: autocovariances are summed in adjacent pairs until a
/// pair sum turns non-positive.
///
/// Returns `draws.len()` for (near-)independent chains and degrades towards 1
/// as autocorrelation grows. A constant chain reports its full length.
pub fn effective_sample_size(draws: &[f64]) -> f64 {
    let n = draws.len();
    if n < 4 {
        return n as f64;
    }
    let nf = n as f64;
    let mean = draws.iter().sum::<f64>() / nf;
    let autocov = |lag: usize| -> f64 {
        draws[..n - lag]
            .iter()
            .zip(&draws[lag..])
            .map(|(a, b)| (a - mean) * (b - mean))
            .sum::<f64>()
            / nf
    };
    let gamma0 = autocov(0);
    if gamma0 <= 0.0 {
        return nf;
    }
    let mut sum_rho = 0.0;
    let mut lag = 1;
    while lag + 1 < n {
        let pair = autocov(lag) + autocov(lag + 1);
        if pair <= 0.0 {
            break;
        }
        sum_rho += pair / gamma0;
        lag += 2;
    }
    (nf / (1.0 + 2.0 * sum_rho)).clamp(1.0, nf)
}
