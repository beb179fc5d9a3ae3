//! Closed-form conditional machinery of the normal-normal hierarchical model.
//!
//! For a fixed heterogeneity `tau`, the overall mean `mu` has a normal
//! posterior, every study effect `theta_i` has a normal posterior, and `mu`
//! can be integrated out of the likelihood analytically. Everything here is
//! conditional on `tau`; averaging over `tau` lives in [`crate::tau`] and
//! [`crate::mixture`].

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::Dataset;
use crate::normal::LN_SQRT_2PI;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("heterogeneity tau = {0} must be finite and non-negative")]
    InvalidTau(f64),
    #[error("study index {index} out of range for {len} studies")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("normal mu prior needs a finite mean and positive sd (got {mean}, {sd})")]
    InvalidMuPrior { mean: f64, sd: f64 },
    #[error("decomposition defined for uniform prior only")]
    WeightNeedsUniformPrior,
}

/// Prior for the overall mean `mu`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum MuPrior {
    #[default]
    ImproperUniform,
    Normal {
        mean: f64,
        sd: f64,
    },
}

impl MuPrior {
    pub fn normal(mean: f64, sd: f64) -> Result<Self, ModelError> {
        let p = MuPrior::Normal { mean, sd };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        match *self {
            MuPrior::ImproperUniform => Ok(()),
            MuPrior::Normal { mean, sd } if mean.is_finite() && sd.is_finite() && sd > 0.0 => Ok(()),
            MuPrior::Normal { mean, sd } => Err(ModelError::InvalidMuPrior { mean, sd }),
        }
    }

    pub fn is_uniform(&self) -> bool {
        matches!(self, MuPrior::ImproperUniform)
    }
}

/// Parses `uniform` or `normal:mean,sd`.
impl std::str::FromStr for MuPrior {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if s == "uniform" {
            return Ok(MuPrior::ImproperUniform);
        }
        let bad = || format!("mu prior `{s}` is not `uniform` or `normal:mean,sd`");
        let params = s.strip_prefix("normal:").ok_or_else(bad)?;
        let (m, sd) = params.split_once(',').ok_or_else(bad)?;
        let m: f64 = m.trim().parse().map_err(|_| bad())?;
        let sd: f64 = sd.trim().parse().map_err(|_| bad())?;
        MuPrior::normal(m, sd).map_err(|e| e.to_string())
    }
}

/// Normal posterior of `mu` given a fixed `tau`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionalMuPosterior {
    pub tau: f64,
    pub mu_hat: f64,
    pub sigma_hat: f64,
    /// Inverse marginal variances `1 / (sigma_i^2 + tau^2)`.
    pub weights: Vec<f64>,
    /// `weights` divided by their sum.
    pub normalized_weights: Vec<f64>,
}

fn check_tau(tau: f64) -> Result<(), ModelError> {
    if tau.is_finite() && tau >= 0.0 {
        Ok(())
    } else {
        Err(ModelError::InvalidTau(tau))
    }
}

fn check_index(data: &Dataset, i: usize) -> Result<(), ModelError> {
    if i < data.len() {
        Ok(())
    } else {
        Err(ModelError::IndexOutOfRange {
            index: i,
            len: data.len(),
        })
    }
}

pub fn mu_posterior_given_tau(
    data: &Dataset,
    prior: &MuPrior,
    tau: f64,
) -> Result<ConditionalMuPosterior, ModelError> {
    check_tau(tau)?;
    prior.validate()?;
    let tau2 = tau * tau;
    let weights: Vec<f64> = data.sigmas().map(|s| 1.0 / (s * s + tau2)).collect();
    let sum_w: f64 = weights.iter().sum();
    let sum_wy: f64 = weights.iter().zip(data.ys()).map(|(w, y)| w * y).sum();
    let (mu_hat, precision) = match *prior {
        MuPrior::ImproperUniform => (sum_wy / sum_w, sum_w),
        MuPrior::Normal { mean, sd } => {
            let prior_prec = 1.0 / (sd * sd);
            let prec = prior_prec + sum_w;
            ((mean * prior_prec + sum_wy) / prec, prec)
        }
    };
    let normalized_weights = weights.iter().map(|w| w / sum_w).collect();
    Ok(ConditionalMuPosterior {
        tau,
        mu_hat,
        sigma_hat: precision.sqrt().recip(),
        weights,
        normalized_weights,
    })
}

/// Conditional posterior moments of one study effect `theta_i`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShrinkageMoments {
    pub study_index: usize,
    pub tau: f64,
    pub mean: f64,
    pub sd: f64,
}

/// Fraction of study `i`'s own observation in its shrinkage mean, excluding
/// the share routed through `mu_hat`: `tau^2 / (tau^2 + sigma_i^2)`.
#[inline]
pub(crate) fn direct_weight(sigma: f64, tau: f64) -> f64 {
    let tau2 = tau * tau;
    tau2 / (tau2 + sigma * sigma)
}

/// Mean and sd of `theta_i | tau`. Written in terms of the direct weight so
/// that `tau = 0` and very large `tau` need no special casing of `1/tau^2`.
#[inline]
pub(crate) fn shrinkage_parts(y: f64, sigma: f64, tau: f64, mu_hat: f64, sigma_hat: f64) -> (f64, f64) {
    if tau == 0.0 {
        return (mu_hat, sigma_hat);
    }
    let direct = direct_weight(sigma, tau);
    let pooled = 1.0 - direct;
    let mean = direct * y + pooled * mu_hat;
    let var = direct * sigma * sigma + (pooled * sigma_hat).powi(2);
    (mean, var.sqrt())
}

pub fn shrinkage_given_tau(
    data: &Dataset,
    cond: &ConditionalMuPosterior,
    i: usize,
) -> Result<ShrinkageMoments, ModelError> {
    check_index(data, i)?;
    let s = &data.studies()[i];
    let (mean, sd) = shrinkage_parts(s.y, s.sigma, cond.tau, cond.mu_hat, cond.sigma_hat);
    Ok(ShrinkageMoments {
        study_index: i,
        tau: cond.tau,
        mean,
        sd,
    })
}

/// Decomposition of the coefficient of `y_i` in its own shrinkage mean.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShrinkageWeight {
    pub study_index: usize,
    pub tau: f64,
    pub direct: f64,
    pub indirect: f64,
    pub total: f64,
}

pub fn shrinkage_weight(
    data: &Dataset,
    prior: &MuPrior,
    i: usize,
    tau: f64,
) -> Result<ShrinkageWeight, ModelError> {
    if !prior.is_uniform() {
        return Err(ModelError::WeightNeedsUniformPrior);
    }
    check_index(data, i)?;
    check_tau(tau)?;
    let tau2 = tau * tau;
    let sigma_i = data.studies()[i].sigma;
    let direct = direct_weight(sigma_i, tau);
    // Normalized inverse-variance weight of study i, computed relative to
    // w_i so that tau = 1e300 stays finite.
    let var_i = sigma_i * sigma_i + tau2;
    let share = 1.0 / data.sigmas().map(|s| var_i / (s * s + tau2)).sum::<f64>();
    let indirect = (1.0 - direct) * share;
    Ok(ShrinkageWeight {
        study_index: i,
        tau,
        direct,
        indirect,
        total: direct + indirect,
    })
}

/// `log p(y | tau)` with `mu` integrated out.
///
/// For the improper uniform prior the additive constant is chosen so that a
/// single study has log-likelihood exactly zero (the integral of a normal
/// density over its mean), i.e. the constant is `-(k-1)/2 log(2 pi)`.
pub fn integrated_log_likelihood(data: &Dataset, prior: &MuPrior, tau: f64) -> Result<f64, ModelError> {
    check_tau(tau)?;
    prior.validate()?;
    Ok(log_marginal(data, prior, tau))
}

pub(crate) fn log_marginal(data: &Dataset, prior: &MuPrior, tau: f64) -> f64 {
    let tau2 = tau * tau;
    let k = data.len() as f64;
    let mut sum_w = 0.0;
    let mut sum_log_w = 0.0;
    let mut sum_wy = 0.0;
    for s in data.studies() {
        let w = 1.0 / (s.sigma * s.sigma + tau2);
        sum_w += w;
        sum_log_w += w.ln();
        sum_wy += w * s.y;
    }
    match *prior {
        MuPrior::ImproperUniform => {
            let mu = sum_wy / sum_w;
            let rss: f64 = data
                .studies()
                .iter()
                .map(|s| (s.y - mu).powi(2) / (s.sigma * s.sigma + tau2))
                .sum();
            0.5 * sum_log_w - 0.5 * sum_w.ln() - 0.5 * rss - (k - 1.0) * LN_SQRT_2PI
        }
        MuPrior::Normal { mean, sd } => {
            // Covariance diag(v) + sd^2 J, inverted by Sherman-Morrison.
            let sp2 = sd * sd;
            let mut sum_wr = 0.0;
            let mut sum_wr2 = 0.0;
            for s in data.studies() {
                let w = 1.0 / (s.sigma * s.sigma + tau2);
                let r = s.y - mean;
                sum_wr += w * r;
                sum_wr2 += w * r * r;
            }
            let denom = 1.0 + sp2 * sum_w;
            let quad = sum_wr2 - sp2 * sum_wr * sum_wr / denom;
            let log_det = -sum_log_w + denom.ln();
            -k * LN_SQRT_2PI - 0.5 * log_det - 0.5 * quad
        }
    }
}
