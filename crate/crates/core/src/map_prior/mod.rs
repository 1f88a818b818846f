//! Meta-analytic-predictive analysis: the non-concurrent controls are
//! summarized period by period into a predictive prior for the current
//! control mean, robustified with a vague component, updated with the
//! concurrent controls, and compared against the treatment posterior.

pub mod em;
pub mod hier;

pub use em::fit_mixture;
pub use hier::{sample_hierarchical, HierDraws, HierOptions};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::analysis::{McmcDiagnostics, McmcSettings, MethodTag, PosteriorSummary};
use crate::datagen::TrialDataset;
use crate::error::{Error, Result};
use crate::freq::validate_alpha;
use crate::map_prior::em::log_sum_exp;
use crate::stats::ess::effective_sample_size;
use crate::stats::special::normal_cdf;
use crate::stats::{mean, sample_variance};
use crate::timemachine::tm_decision;

/// Weighted mixture of normal densities.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalMixture {
    pub weights: Vec<f64>,
    pub means: Vec<f64>,
    pub sds: Vec<f64>,
}

impl NormalMixture {
    pub fn new(weights: Vec<f64>, means: Vec<f64>, sds: Vec<f64>) -> Result<Self> {
        let mix = NormalMixture { weights, means, sds };
        mix.validate()?;
        Ok(mix)
    }

    pub fn single(mean: f64, sd: f64) -> Result<Self> {
        Self::new(vec![1.0], vec![mean], vec![sd])
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.weights.len();
        if k == 0 {
            return Err(Error::InvalidArgument("mixture needs at least one component".into()));
        }
        if self.means.len() != k || self.sds.len() != k {
            return Err(Error::InvalidArgument(format!(
                "mixture component counts differ: {} weights, {} means, {} sds",
                k,
                self.means.len(),
                self.sds.len()
            )));
        }
        if self.weights.iter().any(|&w| !(w > 0.0)) {
            return Err(Error::InvalidArgument("mixture weights must be positive".into()));
        }
        let total: f64 = self.weights.iter().sum();
        if (total - 1.0).abs() > 1e-8 {
            return Err(Error::InvalidArgument(format!("mixture weights sum to {total}, not 1")));
        }
        if self.sds.iter().any(|&s| !(s > 0.0)) {
            return Err(Error::InvalidArgument("mixture sds must be positive".into()));
        }
        if self.means.iter().any(|m| !m.is_finite()) {
            return Err(Error::InvalidArgument("mixture means must be finite".into()));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn mean(&self) -> f64 {
        self.weights.iter().zip(&self.means).map(|(w, m)| w * m).sum()
    }

    pub fn variance(&self) -> f64 {
        let m = self.mean();
        self.weights
            .iter()
            .zip(&self.means)
            .zip(&self.sds)
            .map(|((w, mu), sd)| w * (mu * mu + sd * sd))
            .sum::<f64>()
            - m * m
    }

    /// One draw from the mixture.
    fn draw(&self, rng: &mut ChaCha8Rng) -> f64 {
        let u: f64 = rand::Rng::random(rng);
        let mut acc = 0.0;
        let mut idx = self.len() - 1;
        for (i, &w) in self.weights.iter().enumerate() {
            acc += w;
            if u < acc {
                idx = i;
                break;
            }
        }
        let z: f64 = StandardNormal.sample(rng);
        self.means[idx] + self.sds[idx] * z
    }
}

/// Settings of the whole analysis pipeline.
#[derive(Debug, Clone, PartialEq)]
pub struct MapConfig {
    /// Prior variance of the common historical level (and of the vague
    /// treatment prior).
    pub sigma2_beta: f64,
    /// Scale parameter (variance) of the half-normal prior on the
    /// between-period standard deviation.
    pub sigma2_tau: f64,
    /// Weight given to the vague component when robustifying.
    pub robust_weight: f64,
    /// Gamma prior on the residual precision of the historical model.
    pub a_y: f64,
    pub b_y: f64,
    pub mcmc: McmcSettings,
    /// Number of mixture components fitted to the predictive draws.
    pub components: usize,
    pub em_restarts: usize,
    /// Paired posterior draws used to estimate P(effect > 0).
    pub prob_draws: usize,
    pub alpha: f64,
}

impl Default for MapConfig {
    fn default() -> Self {
        MapConfig {
            sigma2_beta: 1000.0,
            sigma2_tau: 500.0,
            robust_weight: 0.1,
            a_y: 0.001,
            b_y: 0.001,
            mcmc: McmcSettings::default(),
            components: 2,
            em_restarts: 5,
            prob_draws: 20_000,
            alpha: 0.025,
        }
    }
}

impl MapConfig {
    fn validate(&self) -> Result<()> {
        validate_alpha(self.alpha)?;
        if !(self.robust_weight >= 0.0 && self.robust_weight < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "robust weight must lie in [0, 1), got {}",
                self.robust_weight
            )));
        }
        if self.prob_draws < 100 {
            return Err(Error::InvalidArgument("prob_draws must be at least 100".into()));
        }
        Ok(())
    }
}

/// Summarized predictive prior plus sampler diagnostics.
#[derive(Debug, Clone)]
pub struct MapPrior {
    pub mixture: NormalMixture,
    pub diagnostics: McmcDiagnostics,
}

/// Builds the predictive prior for a new control period from per-period
/// historical control data: hierarchical posterior draws of a new period
/// mean, condensed into a normal mixture by EM.
pub fn build_map_prior(groups: &[Vec<f64>], cfg: &MapConfig) -> Result<MapPrior> {
    cfg.validate()?;
    let draws = sample_hierarchical(
        groups,
        cfg.sigma2_beta,
        cfg.sigma2_tau,
        cfg.a_y,
        cfg.b_y,
        &cfg.mcmc,
        &HierOptions::default(),
    )?;
    let em_seed = cfg.mcmc.seed ^ 0x517C_C1B7_2722_0A95;
    let mixture = fit_mixture(&draws.predictive, cfg.components, cfg.em_restarts, em_seed)?;
    Ok(MapPrior {
        mixture,
        diagnostics: McmcDiagnostics {
            ess: effective_sample_size(&draws.predictive),
            acceptance: draws.acceptance,
        },
    })
}

/// Mixes a vague unit-information component into a prior: existing weights
/// shrink by (1 - weight) and the new component gets `weight`.
pub fn robustify(
    prior: &NormalMixture,
    weight: f64,
    unit_mean: f64,
    unit_variance: f64,
) -> Result<NormalMixture> {
    prior.validate()?;
    if !(weight >= 0.0 && weight < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "robust weight must lie in [0, 1), got {weight}"
        )));
    }
    if !(unit_variance > 0.0) {
        return Err(Error::InvalidArgument("unit-information variance must be positive".into()));
    }
    if weight == 0.0 {
        return Ok(prior.clone());
    }
    let mut weights: Vec<f64> = prior.weights.iter().map(|w| w * (1.0 - weight)).collect();
    let mut means = prior.means.clone();
    let mut sds = prior.sds.clone();
    weights.push(weight);
    means.push(unit_mean);
    sds.push(unit_variance.sqrt());
    NormalMixture::new(weights, means, sds)
}

/// Conjugate update of a normal-mixture prior for a normal mean with known
/// sampling standard deviation: `n` observations averaging `data_mean`.
/// Component means and variances update as in the single-normal case; the
/// weights are reweighted by each component's marginal likelihood of the
/// observed average.
pub fn posterior_update_mixture(
    prior: &NormalMixture,
    data_mean: f64,
    n: usize,
    known_sd: f64,
) -> Result<NormalMixture> {
    prior.validate()?;
    if n == 0 {
        return Err(Error::InsufficientData("no observations to update with".into()));
    }
    if !(known_sd > 0.0) {
        return Err(Error::InvalidArgument("known sd must be positive".into()));
    }
    if !data_mean.is_finite() {
        return Err(Error::InvalidArgument("data mean must be finite".into()));
    }
    let data_var = known_sd * known_sd / n as f64;
    let k = prior.len();
    let mut means = Vec::with_capacity(k);
    let mut sds = Vec::with_capacity(k);
    let mut log_w = Vec::with_capacity(k);
    for i in 0..k {
        let prior_var = prior.sds[i] * prior.sds[i];
        let post_var = 1.0 / (1.0 / prior_var + 1.0 / data_var);
        let post_mean = post_var * (prior.means[i] / prior_var + data_mean / data_var);
        means.push(post_mean);
        sds.push(post_var.sqrt());
        // Marginal density of the observed mean under component i.
        let marg_var = prior_var + data_var;
        let resid = data_mean - prior.means[i];
        log_w.push(prior.weights[i].ln() - 0.5 * marg_var.ln() - 0.5 * resid * resid / marg_var);
    }
    let norm = log_sum_exp(&log_w);
    let weights: Vec<f64> = log_w.iter().map(|&lw| (lw - norm).exp().max(1e-300)).collect();
    let total: f64 = weights.iter().sum();
    NormalMixture::new(weights.iter().map(|w| w / total).collect(), means, sds)
}

/// Exact P(T - C > 0) for a normal treatment posterior and a mixture
/// control posterior.
pub fn prob_positive_exact(
    treat_mean: f64,
    treat_sd: f64,
    control: &NormalMixture,
) -> Result<f64> {
    control.validate()?;
    if !(treat_sd > 0.0) {
        return Err(Error::InvalidArgument("treatment sd must be positive".into()));
    }
    Ok(control
        .weights
        .iter()
        .zip(&control.means)
        .zip(&control.sds)
        .map(|((w, m), s)| {
            w * normal_cdf((treat_mean - m) / (treat_sd * treat_sd + s * s).sqrt())
        })
        .sum())
}

/// Pooled within-cell standard deviation over the analysis groups: arm-k
/// patients per period and control patients per period, up to arm k's exit
/// period. Cells with fewer than two patients contribute nothing.
pub fn pooled_cell_sd(data: &TrialDataset, k: usize) -> Result<f64> {
    let s_exit = data.exit_period(k)?;
    let mut cells: std::collections::BTreeMap<(bool, usize), Vec<f64>> =
        std::collections::BTreeMap::new();
    for i in 0..data.len() {
        if data.period[i] > s_exit {
            continue;
        }
        if data.arm[i] == k {
            cells.entry((true, data.period[i])).or_default().push(data.y[i]);
        } else if data.arm[i] == 0 {
            cells.entry((false, data.period[i])).or_default().push(data.y[i]);
        }
    }
    let mut ss = 0.0;
    let mut df = 0usize;
    for values in cells.values() {
        if values.len() < 2 {
            continue;
        }
        let m = mean(values);
        ss += values.iter().map(|&v| (v - m) * (v - m)).sum::<f64>();
        df += values.len() - 1;
    }
    if df == 0 || ss <= 0.0 {
        return Err(Error::InsufficientData(
            "no within-cell variation to estimate the response sd".into(),
        ));
    }
    Ok((ss / df as f64).sqrt())
}

/// Full analysis of arm k: prior from non-concurrent controls, robustified,
/// updated with concurrent controls, compared with the treatment posterior
/// via paired draws.
///
/// Arms without any non-concurrent controls skip the historical stage and
/// use the vague N(0, sigma2_beta) control prior directly.
pub fn map_analysis(data: &TrialDataset, k: usize, cfg: &MapConfig) -> Result<PosteriorSummary> {
    cfg.validate()?;
    let split = data.split_controls(k)?;
    let treat = data.arm_values(k);
    let cc = data.values_at(&split.concurrent);
    if treat.len() < 2 || cc.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "arm {k} needs at least 2 treated and 2 concurrent-control patients"
        )));
    }
    let known_sd = pooled_cell_sd(data, k)?;

    // Historical per-period groups from the non-concurrent controls.
    let mut groups_by_period: std::collections::BTreeMap<usize, Vec<f64>> =
        std::collections::BTreeMap::new();
    for &pos in &split.non_concurrent {
        groups_by_period.entry(data.period[pos - 1]).or_default().push(data.y[pos - 1]);
    }
    let groups: Vec<Vec<f64>> = groups_by_period.into_values().collect();

    let (control_prior, diagnostics) = if groups.is_empty() {
        let vague = NormalMixture::single(0.0, cfg.sigma2_beta.sqrt())?;
        (vague, McmcDiagnostics { ess: cfg.prob_draws as f64, acceptance: None })
    } else {
        let built = build_map_prior(&groups, cfg)?;
        let robust = robustify(
            &built.mixture,
            cfg.robust_weight,
            built.mixture.mean(),
            known_sd * known_sd,
        )?;
        (robust, built.diagnostics)
    };

    let control_post = posterior_update_mixture(&control_prior, mean(&cc), cc.len(), known_sd)?;
    let treat_prior = NormalMixture::single(0.0, cfg.sigma2_beta.sqrt())?;
    let treat_post = posterior_update_mixture(&treat_prior, mean(&treat), treat.len(), known_sd)?;

    // Paired draws of treatment minus control.
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.mcmc.seed ^ 0xA5A5_5A5A_C3C3_3C3C);
    let diffs: Vec<f64> = (0..cfg.prob_draws)
        .map(|_| treat_post.draw(&mut rng) - control_post.draw(&mut rng))
        .collect();
    let prob_positive = diffs.iter().filter(|&&d| d > 0.0).count() as f64 / diffs.len() as f64;

    Ok(PosteriorSummary {
        method: MethodTag::MapPrior,
        arm: k,
        theta_mean: mean(&diffs),
        theta_sd: sample_variance(&diffs).sqrt(),
        prob_positive,
        reject: tm_decision(prob_positive, cfg.alpha),
        diagnostics,
    })
}
