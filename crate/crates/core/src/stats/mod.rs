//! Numerical building blocks shared by the analysis methods.

pub mod ess;
pub mod ols;
pub mod root;
pub mod special;

pub use ess::effective_sample_size;
pub use ols::{ols, OlsFit};
pub use root::brent;
pub use special::{
    erf, erfc, gamma_cdf, ln_gamma, normal_cdf, reg_inc_beta, reg_inc_gamma_p, reg_inc_gamma_q,
    student_t_cdf, student_t_sf,
};

/// Sample mean; 0 for an empty slice.
pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        0.0
    } else {
        xs.iter().sum::<f64>() / xs.len() as f64
    }
}

/// Sum of squared deviations from the sample mean.
pub fn centered_ss(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum()
}

/// Unbiased sample variance; 0 when fewer than two values.
pub fn sample_variance(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        0.0
    } else {
        centered_ss(xs) / (xs.len() - 1) as f64
    }
}
