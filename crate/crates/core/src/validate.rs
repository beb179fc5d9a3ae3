//! Simulation and oracle harness.
//!
//! [`simulate_dataset`] draws datasets from the hierarchical model itself,
//! [`coverage_study`] measures how often the shortest credible intervals
//! cover the simulated truths, and [`dense_grid_oracle`] recomputes the
//! posteriors on a fixed uniform `tau` grid with its own numerical code so
//! that the adaptive pipeline can be checked against it.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::ingest::{Dataset, Study};
use crate::mixture::{map_predictive, marginal_mu, marginal_theta, IntervalSpec};
use crate::model::MuPrior;
use crate::tau::{tau_posterior, TauPrior};
use crate::Error;

/// How sampling standard deviations are assigned to simulated studies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SigmaLaw {
    /// One value for every study, or one value per study.
    Fixed { values: Vec<f64> },
    /// `log sigma` uniform on `[ln lower, ln upper]`.
    LogUniform { lower: f64, upper: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub k: usize,
    pub mu_true: f64,
    pub tau_true: f64,
    pub sigma_law: SigmaLaw,
    pub replications: usize,
    pub seed: u64,
    pub level: f64,
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), Error> {
        let bad = |m: String| Err(Error::Config(m));
        if self.k == 0 {
            return bad("k must be at least 1".into());
        }
        if self.replications == 0 {
            return bad("replications must be at least 1".into());
        }
        if !(self.tau_true.is_finite() && self.tau_true >= 0.0) || !self.mu_true.is_finite() {
            return bad("mu must be finite and tau non-negative".into());
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            return bad(format!("level {} is outside (0, 1)", self.level));
        }
        match &self.sigma_law {
            SigmaLaw::Fixed { values } => {
                if !(values.len() == 1 || values.len() == self.k) {
                    return bad(format!("need 1 or {} sigma values, got {}", self.k, values.len()));
                }
                if values.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
                    return bad("sigma values must be positive".into());
                }
            }
            SigmaLaw::LogUniform { lower, upper } => {
                if !(*lower > 0.0 && upper >= lower && upper.is_finite()) {
                    return bad(format!("need 0 < lower <= upper, got [{lower}, {upper}]"));
                }
            }
        }
        Ok(())
    }
}

/// A simulated dataset together with the true study effects. The last
/// study is flagged as the target.
#[derive(Debug, Clone, PartialEq)]
pub struct Simulated {
    pub dataset: Dataset,
    pub theta: Vec<f64>,
    /// A fresh draw from the population distribution, for predictive checks.
    pub theta_new: f64,
}

/// Each replication owns the ChaCha20 stream numbered `rep` under `seed`.
pub fn replication_rng(seed: u64, rep: usize) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(rep as u64);
    rng
}

pub fn simulate_dataset(cfg: &SimConfig, rep: usize) -> Result<Simulated, Error> {
    cfg.validate()?;
    let mut rng = replication_rng(cfg.seed, rep);
    let mut studies = Vec::with_capacity(cfg.k);
    let mut theta = Vec::with_capacity(cfg.k);
    for i in 0..cfg.k {
        let sigma = match &cfg.sigma_law {
            SigmaLaw::Fixed { values } => values[if values.len() == 1 { 0 } else { i }],
            SigmaLaw::LogUniform { lower, upper } => {
                let u: f64 = rng.random();
                (lower.ln() + u * (upper / lower).ln()).exp()
            }
        };
        let z1: f64 = rng.sample(StandardNormal);
        let z2: f64 = rng.sample(StandardNormal);
        let th = cfg.mu_true + cfg.tau_true * z1;
        let mut s = Study::new(format!("sim{}", i + 1), th + sigma * z2, sigma);
        s.is_target = i + 1 == cfg.k;
        studies.push(s);
        theta.push(th);
    }
    let z: f64 = rng.sample(StandardNormal);
    Ok(Simulated {
        dataset: Dataset::new(studies)?,
        theta,
        theta_new: cfg.mu_true + cfg.tau_true * z,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisSettings {
    pub mu_prior: MuPrior,
    pub tau_prior: TauPrior,
    pub tol: f64,
    pub interval: IntervalSpec,
}

impl Default for AnalysisSettings {
    fn default() -> Self {
        AnalysisSettings {
            mu_prior: MuPrior::ImproperUniform,
            tau_prior: TauPrior::default(),
            tol: 1e-6,
            interval: IntervalSpec::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Coverage {
    pub hits: usize,
    pub replications: usize,
    pub coverage: f64,
    /// Binomial standard error of `coverage`.
    pub se: f64,
    pub indicators: Vec<bool>,
}

impl Coverage {
    fn from_indicators(indicators: Vec<bool>) -> Self {
        let n = indicators.len();
        let hits = indicators.iter().filter(|&&b| b).count();
        let coverage = hits as f64 / n as f64;
        Coverage {
            hits,
            replications: n,
            coverage,
            se: (coverage * (1.0 - coverage) / n as f64).sqrt(),
            indicators,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub config: SimConfig,
    pub settings: AnalysisSettings,
    pub mu: Coverage,
    pub theta_target: Coverage,
    pub theta_new: Coverage,
}

pub fn coverage_study(cfg: &SimConfig, settings: &AnalysisSettings) -> Result<CoverageReport, Error> {
    cfg.validate()?;
    let spec = IntervalSpec {
        level: cfg.level,
        method: settings.interval.method,
    };
    let mut mu = Vec::with_capacity(cfg.replications);
    let mut target = Vec::with_capacity(cfg.replications);
    let mut new = Vec::with_capacity(cfg.replications);
    for rep in 0..cfg.replications {
        let sim = simulate_dataset(cfg, rep)?;
        let grid = tau_posterior(
            &sim.dataset,
            &settings.mu_prior,
            &settings.tau_prior,
            settings.tol,
        )?;
        let t = sim.dataset.len() - 1;
        mu.push(marginal_mu(&grid)?.interval(&spec)?.contains(cfg.mu_true));
        target.push(marginal_theta(&grid, t)?.interval(&spec)?.contains(sim.theta[t]));
        new.push(map_predictive(&grid)?.interval(&spec)?.contains(sim.theta_new));
    }
    Ok(CoverageReport {
        config: cfg.clone(),
        settings: settings.clone(),
        mu: Coverage::from_indicators(mu),
        theta_target: Coverage::from_indicators(target),
        theta_new: Coverage::from_indicators(new),
    })
}

/// Mixture produced by the oracle; evaluated with its own CDF code.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleMixture {
    pub weights: Vec<f64>,
    pub means: Vec<f64>,
    pub sds: Vec<f64>,
}

impl OracleMixture {
    pub fn cdf(&self, x: f64) -> f64 {
        let mut acc = 0.0;
        for ((w, m), s) in self.weights.iter().zip(&self.means).zip(&self.sds) {
            acc += w * 0.5 * statrs::function::erf::erfc((m - x) / (s * std::f64::consts::SQRT_2));
        }
        acc
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleResult {
    pub tau_hi: f64,
    pub tau_median: f64,
    pub tau_mean: f64,
    pub mu: OracleMixture,
    pub theta: Vec<OracleMixture>,
}

/// Log density of the `tau` prior, written out independently of
/// [`TauPrior::ln_density`]; constants are dropped.
fn oracle_log_prior(prior: &TauPrior, t: f64) -> f64 {
    match *prior {
        TauPrior::HalfNormal { scale } => -0.5 * (t / scale) * (t / scale),
        TauPrior::HalfCauchy { scale } => -(1.0 + (t / scale) * (t / scale)).ln(),
        TauPrior::Jeffreys { lower, upper } => {
            if t < lower || t > upper {
                f64::NEG_INFINITY
            } else {
                -t.ln()
            }
        }
        TauPrior::Uniform { lower, upper } => {
            if t < lower || t > upper {
                f64::NEG_INFINITY
            } else {
                0.0
            }
        }
        TauPrior::Improper => 0.0,
    }
}

/// Everything the oracle needs at one `tau`: log marginal likelihood (up
/// to a constant), conditional mean and sd of `mu`.
fn oracle_conditional(data: &Dataset, mu_prior: &MuPrior, t: f64) -> (f64, f64, f64) {
    // Direct dense formulation: Gaussian integral over mu of
    // prior(mu) * prod N(y_i | mu, s_i^2 + t^2), completing the square.
    let mut a = 0.0; // coefficient of mu^2 / 2
    let mut b = 0.0; // coefficient of mu
    let mut c = 0.0; // constant (negative half quadratic)
    let mut logdet = 0.0;
    for s in data.studies() {
        let v = s.sigma * s.sigma + t * t;
        a += 1.0 / v;
        b += s.y / v;
        c += s.y * s.y / v;
        logdet += v.ln();
    }
    let mut prior_const = 0.0;
    if let MuPrior::Normal { mean, sd } = *mu_prior {
        let v = sd * sd;
        a += 1.0 / v;
        b += mean / v;
        c += mean * mean / v;
        prior_const = -0.5 * v.ln();
    }
    let m = b / a;
    let loglik = -0.5 * logdet + prior_const - 0.5 * a.ln() - 0.5 * (c - b * b / a);
    (loglik, m, a.sqrt().recip())
}

/// Fixed uniform grid of `resolution` nodes on `[lower, tau_hi]`, trapezoid
/// weights. Shares only the [`Dataset`] (and the prior/config enums) with
/// the adaptive pipeline.
pub fn dense_grid_oracle(
    data: &Dataset,
    mu_prior: &MuPrior,
    tau_prior: &TauPrior,
    resolution: usize,
    tau_hi: f64,
) -> Result<OracleResult, Error> {
    if resolution < 10_000 {
        return Err(Error::Config(format!(
            "oracle resolution {resolution} is below 10^4"
        )));
    }
    let lower = match *tau_prior {
        TauPrior::Jeffreys { lower, .. } | TauPrior::Uniform { lower, .. } => lower,
        _ => 0.0,
    };
    let tau_hi = match *tau_prior {
        TauPrior::Jeffreys { upper, .. } | TauPrior::Uniform { upper, .. } => upper.min(tau_hi),
        _ => tau_hi,
    };
    if !(tau_hi > lower) {
        return Err(Error::Config(format!(
            "oracle range [{lower}, {tau_hi}] is empty"
        )));
    }
    let n = resolution;
    let h = (tau_hi - lower) / (n - 1) as f64;
    let mut logs = Vec::with_capacity(n);
    let mut conds = Vec::with_capacity(n);
    for j in 0..n {
        let t = lower + h * j as f64;
        let (ll, m, s) = oracle_conditional(data, mu_prior, t);
        logs.push(ll + oracle_log_prior(tau_prior, t));
        conds.push((t, m, s));
    }
    let top = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut w: Vec<f64> = logs
        .iter()
        .enumerate()
        .map(|(j, l)| {
            let edge = if j == 0 || j == n - 1 { 0.5 } else { 1.0 };
            edge * (l - top).exp()
        })
        .collect();
    let z: f64 = w.iter().sum();
    w.iter_mut().for_each(|x| *x /= z);

    let tau_mean = w.iter().zip(&conds).map(|(w, c)| w * c.0).sum();
    // Median from the piecewise-linear CDF of the trapezoid density.
    let dens: Vec<f64> = logs.iter().map(|l| (l - top).exp() / (z * h)).collect();
    let mut acc = 0.0;
    let mut tau_median = tau_hi;
    for j in 1..n {
        let piece = 0.5 * h * (dens[j - 1] + dens[j]);
        if acc + piece >= 0.5 {
            tau_median = lower + h * (j - 1) as f64 + (0.5 - acc) / piece * h;
            break;
        }
        acc += piece;
    }

    // Components below 1e-16 carry less than 1e-11 total mass.
    let keep: Vec<usize> = (0..n).filter(|&j| w[j] > 1e-16).collect();
    let weights: Vec<f64> = keep.iter().map(|&j| w[j]).collect();
    let mu = OracleMixture {
        weights: weights.clone(),
        means: keep.iter().map(|&j| conds[j].1).collect(),
        sds: keep.iter().map(|&j| conds[j].2).collect(),
    };
    let theta = data
        .studies()
        .iter()
        .map(|s| {
            let mut means = Vec::with_capacity(keep.len());
            let mut sds = Vec::with_capacity(keep.len());
            for &j in &keep {
                let (t, m, sm) = conds[j];
                // Precision-weighted form of the conditional shrinkage
                // posterior, with the tau = 0 limit taken explicitly.
                if t == 0.0 {
                    means.push(m);
                    sds.push(sm);
                } else {
                    let (ps, pt) = (1.0 / (s.sigma * s.sigma), 1.0 / (t * t));
                    means.push((s.y * ps + m * pt) / (ps + pt));
                    sds.push((1.0 / (ps + pt) + (pt / (ps + pt) * sm).powi(2)).sqrt());
                }
            }
            OracleMixture {
                weights: weights.clone(),
                means,
                sds,
            }
        })
        .collect();
    Ok(OracleResult {
        tau_hi,
        tau_median,
        tau_mean,
        mu,
        theta,
    })
}

/// Comparison of the adaptive pipeline with the dense-grid oracle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleComparison {
    pub tau_hi: f64,
    pub nodes: usize,
    pub mu_cdf_sup: f64,
    pub theta_cdf_sup: Vec<f64>,
    pub tau_median_adaptive: f64,
    pub tau_median_oracle: f64,
}

impl OracleComparison {
    pub fn max_cdf_distance(&self) -> f64 {
        self.theta_cdf_sup.iter().cloned().fold(self.mu_cdf_sup, f64::max)
    }

    pub fn tau_median_gap(&self) -> f64 {
        (self.tau_median_adaptive - self.tau_median_oracle).abs()
    }
}

/// Runs both pipelines and measures CDF sup-distances on `probes` points
/// placed at quantiles of the adaptive mixtures.
pub fn compare_with_oracle(
    data: &Dataset,
    settings: &AnalysisSettings,
    resolution: usize,
    probes: usize,
) -> Result<OracleComparison, Error> {
    let grid = tau_posterior(data, &settings.mu_prior, &settings.tau_prior, settings.tol)?;
    let tau_hi = *grid.nodes().last().expect("grid is non-empty");
    let oracle = dense_grid_oracle(data, &settings.mu_prior, &settings.tau_prior, resolution, tau_hi)?;
    let adaptive_median = crate::tau::tau_summaries(&grid, 0.95)?.median;
    let sup = |m: &crate::mixture::NormalMixture, o: &OracleMixture| -> Result<f64, Error> {
        let mut worst: f64 = 0.0;
        for j in 0..probes {
            let p = (j as f64 + 0.5) / probes as f64;
            let x = m.quantile(p)?;
            worst = worst.max((m.cdf(x) - o.cdf(x)).abs());
        }
        Ok(worst)
    };
    let mu_cdf_sup = sup(&marginal_mu(&grid)?, &oracle.mu)?;
    let theta_cdf_sup = (0..data.len())
        .map(|i| sup(&marginal_theta(&grid, i)?, &oracle.theta[i]))
        .collect::<Result<_, _>>()?;
    Ok(OracleComparison {
        tau_hi,
        nodes: grid.len(),
        mu_cdf_sup,
        theta_cdf_sup,
        tau_median_adaptive: adaptive_median,
        tau_median_oracle: oracle.tau_median,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(tau: f64, sigma: f64) -> SimConfig {
        SimConfig {
            k: 5,
            mu_true: 0.0,
            tau_true: tau,
            sigma_law: SigmaLaw::Fixed { values: vec![sigma] },
            replications: 10,
            seed: 42,
            level: 0.95,
        }
    }

    #[test]
    fn no_heterogeneity_means_equal_thetas() {
        let sim = simulate_dataset(&cfg(0.0, 0.3), 3).unwrap();
        assert!(sim.theta.iter().all(|&t| t == 0.0));
        assert_eq!(sim.theta_new, 0.0);
        let sim = simulate_dataset(&cfg(0.0, 1e-12), 3).unwrap();
        assert!(sim.dataset.studies().iter().all(|s| s.y.abs() < 1e-9));
        assert_eq!(sim.dataset.target_index(), Some(4));
    }

    #[test]
    fn simulation_is_deterministic() {
        let c = cfg(0.5, 0.3);
        assert_eq!(simulate_dataset(&c, 7).unwrap(), simulate_dataset(&c, 7).unwrap());
        assert_ne!(simulate_dataset(&c, 7).unwrap(), simulate_dataset(&c, 8).unwrap());
        let lu = SimConfig {
            sigma_law: SigmaLaw::LogUniform {
                lower: 0.1,
                upper: 1.0,
            },
            ..c
        };
        let d = simulate_dataset(&lu, 0).unwrap();
        assert!(d.dataset.studies().iter().all(|s| (0.1..=1.0).contains(&s.sigma)));
    }

    #[test]
    fn config_validation() {
        let mut c = cfg(0.5, 0.3);
        c.replications = 0;
        assert!(c.validate().is_err());
        let mut c = cfg(0.5, 0.3);
        c.sigma_law = SigmaLaw::Fixed {
            values: vec![0.1, 0.2],
        };
        assert!(c.validate().is_err());
    }

    #[test]
    fn single_replication_report() {
        let mut c = cfg(0.5, 0.3);
        c.replications = 1;
        let r = coverage_study(&c, &AnalysisSettings::default()).unwrap();
        for cov in [&r.mu, &r.theta_target, &r.theta_new] {
            assert_eq!(cov.indicators.len(), 1);
            assert_eq!(cov.replications, 1);
        }
        assert_eq!(r.config.seed, 42);
    }

    #[test]
    fn oracle_single_study_reproduces_prior() {
        let d = Dataset::new(vec![Study::new("a", 0.4, 0.3)]).unwrap();
        let prior = TauPrior::HalfNormal { scale: 1.0 };
        let o = dense_grid_oracle(&d, &MuPrior::ImproperUniform, &prior, 10_000, 10.0).unwrap();
        assert!((o.tau_median - 0.674_489_750_196_081_7).abs() < 1e-4);
        assert!((o.tau_mean - (2.0 / std::f64::consts::PI).sqrt()).abs() < 1e-4);
    }

    #[test]
    fn oracle_agrees_with_adaptive_on_small_dataset() {
        let d = Dataset::new(vec![
            Study::new("a", 0.3, 0.4),
            Study::new("b", 1.1, 0.2),
            Study::new("c", -0.5, 0.7),
        ])
        .unwrap();
        let cmp = compare_with_oracle(&d, &AnalysisSettings::default(), 20_000, 32).unwrap();
        assert!(cmp.max_cdf_distance() < 1e-4, "{cmp:?}");
        assert!(cmp.tau_median_gap() < 1e-4 * cmp.tau_hi);
    }

    #[test]
    fn oracle_rejects_low_resolution() {
        let d = Dataset::new(vec![Study::new("a", 0.4, 0.3)]).unwrap();
        assert!(dense_grid_oracle(&d, &MuPrior::ImproperUniform, &TauPrior::default(), 100, 1.0).is_err());
    }
}
