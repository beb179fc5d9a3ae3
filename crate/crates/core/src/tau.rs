//! Marginal posterior of the heterogeneity `tau` on an adaptive grid.
//!
//! The unnormalised log-posterior is the integrated likelihood plus the log
//! prior. It is evaluated on 64 starting nodes and refined by interval
//! bisection until the trapezoid mass of every interval agrees with its
//! bisected estimate to within `tol` (relative to the total mass). The
//! normalised trapezoid weights then serve as mixture weights for every
//! `tau`-averaged posterior.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::Dataset;
use crate::model::{log_marginal, mu_posterior_given_tau, ConditionalMuPosterior, ModelError, MuPrior};
use crate::normal::std_quantile;

const INITIAL_NODES: usize = 64;
const TAIL_BOUND: f64 = 1e-6;
const MAX_EXTENSIONS: usize = 60;
const MAX_NODES: usize = 1 << 16;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TauError {
    #[error("invalid tau prior: {0}")]
    InvalidPrior(String),
    #[error("improper posterior: {0}")]
    ImproperPosterior(String),
    #[error("tolerance {0} must be positive and finite")]
    InvalidTolerance(f64),
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("level {0} is outside (0, 1)")]
    InvalidLevel(f64),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Prior on the heterogeneity standard deviation `tau`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum TauPrior {
    HalfNormal {
        scale: f64,
    },
    HalfCauchy {
        scale: f64,
    },
    /// Density proportional to `1 / tau` on `[lower, upper]`.
    Jeffreys {
        lower: f64,
        upper: f64,
    },
    Uniform {
        lower: f64,
        upper: f64,
    },
    /// Flat on `[0, inf)`; only usable when the data make the posterior proper.
    Improper,
}

impl Default for TauPrior {
    fn default() -> Self {
        TauPrior::HalfNormal { scale: 1.0 }
    }
}

impl TauPrior {
    pub fn validate(&self) -> Result<(), TauError> {
        let bad = |m: String| Err(TauError::InvalidPrior(m));
        match *self {
            TauPrior::HalfNormal { scale } | TauPrior::HalfCauchy { scale } => {
                if !(scale.is_finite() && scale > 0.0) {
                    return bad(format!("scale {scale} must be positive"));
                }
            }
            TauPrior::Jeffreys { lower, upper } => {
                if !(lower.is_finite() && upper.is_finite() && lower > 0.0 && upper > lower) {
                    return bad(format!("need 0 < lower < upper, got [{lower}, {upper}]"));
                }
            }
            TauPrior::Uniform { lower, upper } => {
                if !(lower.is_finite() && upper.is_finite() && lower >= 0.0 && upper > lower) {
                    return bad(format!("need 0 <= lower < upper, got [{lower}, {upper}]"));
                }
            }
            TauPrior::Improper => {}
        }
        Ok(())
    }

    pub fn is_proper(&self) -> bool {
        !matches!(self, TauPrior::Improper)
    }

    /// Closed support `[lower, upper]`; `upper` may be infinite.
    pub fn support(&self) -> (f64, f64) {
        match *self {
            TauPrior::HalfNormal { .. } | TauPrior::HalfCauchy { .. } | TauPrior::Improper => {
                (0.0, f64::INFINITY)
            }
            TauPrior::Jeffreys { lower, upper } | TauPrior::Uniform { lower, upper } => (lower, upper),
        }
    }

    /// Normalised log density (zero for the improper prior).
    pub fn ln_density(&self, tau: f64) -> f64 {
        let (lo, hi) = self.support();
        if tau < lo || tau > hi {
            return f64::NEG_INFINITY;
        }
        match *self {
            TauPrior::HalfNormal { scale } => {
                let z = tau / scale;
                // 2 / (scale sqrt(2 pi))
                -0.5 * z * z - scale.ln() + 0.5 * (2.0 / std::f64::consts::PI).ln()
            }
            TauPrior::HalfCauchy { scale } => {
                let z = tau / scale;
                (2.0 / std::f64::consts::PI).ln() - scale.ln() - (z * z).ln_1p()
            }
            TauPrior::Jeffreys { lower, upper } => -tau.ln() - (upper / lower).ln().ln(),
            TauPrior::Uniform { lower, upper } => -(upper - lower).ln(),
            TauPrior::Improper => 0.0,
        }
    }

    /// Prior distribution function; `None` for the improper prior.
    pub fn cdf(&self, tau: f64) -> Option<f64> {
        let (lo, hi) = self.support();
        if !self.is_proper() {
            return None;
        }
        if tau <= lo {
            return Some(0.0);
        }
        if tau >= hi {
            return Some(1.0);
        }
        Some(match *self {
            TauPrior::HalfNormal { scale } => {
                statrs::function::erf::erf(tau / (scale * std::f64::consts::SQRT_2))
            }
            TauPrior::HalfCauchy { scale } => 2.0 / std::f64::consts::PI * (tau / scale).atan(),
            TauPrior::Jeffreys { lower, upper } => (tau / lower).ln() / (upper / lower).ln(),
            TauPrior::Uniform { lower, upper } => (tau - lower) / (upper - lower),
            TauPrior::Improper => unreachable!(),
        })
    }

    /// Prior quantile; `None` for the improper prior.
    pub fn quantile(&self, p: f64) -> Option<f64> {
        let p = p.clamp(0.0, 1.0);
        match *self {
            TauPrior::HalfNormal { scale } => {
                if p >= 1.0 {
                    Some(f64::INFINITY)
                } else if p <= 0.0 {
                    Some(0.0)
                } else {
                    Some(scale * std_quantile(0.5 * (1.0 + p)))
                }
            }
            TauPrior::HalfCauchy { scale } => Some(scale * (0.5 * std::f64::consts::PI * p).tan()),
            TauPrior::Jeffreys { lower, upper } => Some(lower * (upper / lower).powf(p)),
            TauPrior::Uniform { lower, upper } => Some(lower + p * (upper - lower)),
            TauPrior::Improper => None,
        }
    }
}

impl fmt::Display for TauPrior {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TauPrior::HalfNormal { scale } => write!(f, "half-normal:{scale}"),
            TauPrior::HalfCauchy { scale } => write!(f, "half-cauchy:{scale}"),
            TauPrior::Jeffreys { lower, upper } => write!(f, "jeffreys:{lower},{upper}"),
            TauPrior::Uniform { lower, upper } => write!(f, "uniform:{lower},{upper}"),
            TauPrior::Improper => f.write_str("improper"),
        }
    }
}

fn parse_params(kind: &str, params: Option<&str>) -> Result<Vec<f64>, TauError> {
    params
        .unwrap_or("")
        .split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| TauError::InvalidPrior(format!("{kind}: `{s}` is not a number")))
        })
        .collect()
}

/// Parses the `kind:param[,param]` grammar, e.g. `half-normal:1.0` or
/// `uniform:0,10`.
impl FromStr for TauPrior {
    type Err = TauError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (kind, params) = match s.split_once(':') {
            Some((k, p)) => (k.trim(), Some(p)),
            None => (s.trim(), None),
        };
        let v = parse_params(kind, params)?;
        let arity = |n: usize| {
            if v.len() == n {
                Ok(())
            } else {
                Err(TauError::InvalidPrior(format!(
                    "{kind} takes {n} parameter(s), got {}",
                    v.len()
                )))
            }
        };
        let prior = match kind {
            "half-normal" => {
                arity(1)?;
                TauPrior::HalfNormal { scale: v[0] }
            }
            "half-cauchy" => {
                arity(1)?;
                TauPrior::HalfCauchy { scale: v[0] }
            }
            "jeffreys" => {
                arity(2)?;
                TauPrior::Jeffreys {
                    lower: v[0],
                    upper: v[1],
                }
            }
            "uniform" if v.len() == 1 => TauPrior::Uniform {
                lower: 0.0,
                upper: v[0],
            },
            "uniform" => {
                arity(2)?;
                TauPrior::Uniform {
                    lower: v[0],
                    upper: v[1],
                }
            }
            "improper" | "improper-uniform" => {
                arity(0)?;
                TauPrior::Improper
            }
            other => return Err(TauError::InvalidPrior(format!("unknown kind `{other}`"))),
        };
        prior.validate()?;
        Ok(prior)
    }
}

/// Discretised, normalised marginal posterior of `tau`.
#[derive(Debug, Clone)]
pub struct TauPosteriorGrid {
    data: Dataset,
    mu_prior: MuPrior,
    nodes: Vec<f64>,
    /// Posterior density at each node, normalised so the trapezoid rule
    /// integrates it to one.
    density: Vec<f64>,
    masses: Vec<f64>,
    conditionals: Vec<ConditionalMuPosterior>,
    tail_bound: f64,
}

fn trapezoid_masses(nodes: &[f64], density: &[f64]) -> Vec<f64> {
    let n = nodes.len();
    let mut m = vec![0.0; n];
    for j in 0..n.saturating_sub(1) {
        let half = 0.5 * (nodes[j + 1] - nodes[j]);
        m[j] += half * density[j];
        m[j + 1] += half * density[j + 1];
    }
    m
}

impl TauPosteriorGrid {
    /// Builds a grid from an arbitrary (unnormalised) density on the given
    /// strictly increasing nodes.
    pub fn from_density(
        data: &Dataset,
        mu_prior: &MuPrior,
        nodes: Vec<f64>,
        density: Vec<f64>,
    ) -> Result<Self, TauError> {
        if nodes.len() < 2 || nodes.len() != density.len() {
            return Err(TauError::InvalidGrid(
                "need at least two nodes and one density value per node".into(),
            ));
        }
        if nodes[0] < 0.0 || nodes.windows(2).any(|w| !(w[1] > w[0])) || !nodes[nodes.len() - 1].is_finite() {
            return Err(TauError::InvalidGrid(
                "nodes must be finite, non-negative and strictly increasing".into(),
            ));
        }
        if density.iter().any(|d| !(d.is_finite() && *d >= 0.0)) {
            return Err(TauError::InvalidGrid(
                "density values must be finite and non-negative".into(),
            ));
        }
        let raw = trapezoid_masses(&nodes, &density);
        let total: f64 = raw.iter().sum();
        if !(total > 0.0) {
            return Err(TauError::InvalidGrid("density has zero mass".into()));
        }
        let masses = raw.iter().map(|m| m / total).collect();
        let density = density.iter().map(|d| d / total).collect();
        let conditionals = nodes
            .iter()
            .map(|&t| mu_posterior_given_tau(data, mu_prior, t))
            .collect::<Result<_, _>>()?;
        Ok(TauPosteriorGrid {
            data: data.clone(),
            mu_prior: *mu_prior,
            nodes,
            density,
            masses,
            conditionals,
            tail_bound: 0.0,
        })
    }

    /// A degenerate grid placing all mass at `tau`.
    pub fn point_mass(data: &Dataset, mu_prior: &MuPrior, tau: f64) -> Result<Self, TauError> {
        let cond = mu_posterior_given_tau(data, mu_prior, tau)?;
        Ok(TauPosteriorGrid {
            data: data.clone(),
            mu_prior: *mu_prior,
            nodes: vec![tau],
            density: vec![f64::INFINITY],
            masses: vec![1.0],
            conditionals: vec![cond],
            tail_bound: 0.0,
        })
    }

    /// The same nodes applied to another dataset, keeping only node `j`.
    pub fn restrict_to_node(&self, j: usize) -> Result<Self, TauError> {
        let tau = *self
            .nodes
            .get(j)
            .ok_or_else(|| TauError::InvalidGrid(format!("node {j} out of range")))?;
        Self::point_mass(&self.data, &self.mu_prior, tau)
    }

    pub fn data(&self) -> &Dataset {
        &self.data
    }

    pub fn mu_prior(&self) -> &MuPrior {
        &self.mu_prior
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    pub fn density(&self) -> &[f64] {
        &self.density
    }

    pub fn conditionals(&self) -> &[ConditionalMuPosterior] {
        &self.conditionals
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Estimated relative posterior mass beyond the last node.
    pub fn tail_bound(&self) -> f64 {
        self.tail_bound
    }

    /// Grid CDF at each node (trapezoid integral of the density).
    pub fn cdf_at_nodes(&self) -> Vec<f64> {
        let n = self.nodes.len();
        if n == 1 {
            return vec![1.0];
        }
        let mut out = Vec::with_capacity(n);
        let mut acc = 0.0;
        out.push(0.0);
        for j in 1..n {
            acc += 0.5 * (self.nodes[j] - self.nodes[j - 1]) * (self.density[j - 1] + self.density[j]);
            out.push(acc);
        }
        out
    }

    /// `tau` at posterior probability `p` by linear interpolation of the CDF.
    pub fn quantile(&self, p: f64) -> f64 {
        if self.nodes.len() == 1 {
            return self.nodes[0];
        }
        let cdf = self.cdf_at_nodes();
        let total = cdf[cdf.len() - 1];
        let target = p.clamp(0.0, 1.0) * total;
        let j = cdf.partition_point(|&c| c < target).clamp(1, cdf.len() - 1);
        let (c0, c1) = (cdf[j - 1], cdf[j]);
        let (t0, t1) = (self.nodes[j - 1], self.nodes[j]);
        if c1 > c0 {
            t0 + (target - c0) / (c1 - c0) * (t1 - t0)
        } else {
            t0
        }
    }

    /// Posterior-expectation of `f(tau, conditional)` under the grid masses.
    pub fn expect<F>(&self, mut f: F) -> f64
    where
        F: FnMut(f64, &ConditionalMuPosterior) -> f64,
    {
        self.nodes
            .iter()
            .zip(&self.conditionals)
            .zip(&self.masses)
            .map(|((&t, c), &m)| if m > 0.0 { m * f(t, c) } else { 0.0 })
            .sum()
    }
}

struct LogPosterior<'a> {
    data: &'a Dataset,
    mu_prior: &'a MuPrior,
    tau_prior: &'a TauPrior,
}

impl LogPosterior<'_> {
    fn eval(&self, tau: f64) -> f64 {
        log_marginal(self.data, self.mu_prior, tau) + self.tau_prior.ln_density(tau)
    }
}

/// Power of `tau` at which the integrated likelihood decays for large `tau`.
fn likelihood_decay_order(data: &Dataset, mu_prior: &MuPrior) -> usize {
    if mu_prior.is_uniform() {
        data.len() - 1
    } else {
        data.len()
    }
}

fn linspace(lo: f64, hi: f64, n: usize) -> impl Iterator<Item = f64> {
    let h = (hi - lo) / (n - 1) as f64;
    (0..n).map(move |j| if j + 1 == n { hi } else { lo + h * j as f64 })
}

pub fn tau_posterior(
    data: &Dataset,
    mu_prior: &MuPrior,
    tau_prior: &TauPrior,
    tol: f64,
) -> Result<TauPosteriorGrid, TauError> {
    mu_prior.validate()?;
    tau_prior.validate()?;
    if !(tol.is_finite() && tol > 0.0) {
        return Err(TauError::InvalidTolerance(tol));
    }
    let order = likelihood_decay_order(data, mu_prior);
    if !tau_prior.is_proper() && order < 2 {
        return Err(TauError::ImproperPosterior(format!(
            "with {} stud{} and a {} mu prior the likelihood decays no faster than 1/tau, \
             so an improper flat tau prior cannot be normalised; use a proper tau prior",
            data.len(),
            if data.len() == 1 { "y" } else { "ies" },
            if mu_prior.is_uniform() {
                "uniform"
            } else {
                "normal"
            },
        )));
    }

    let lp = LogPosterior {
        data,
        mu_prior,
        tau_prior,
    };
    let (lo, support_hi) = tau_prior.support();
    let spread = 10.0 * data.max_sigma();
    let (core, mut hi) = if support_hi.is_finite() {
        (support_hi, support_hi)
    } else {
        let q9999 = tau_prior.quantile(0.9999).unwrap_or(spread);
        let q99 = tau_prior.quantile(0.99).unwrap_or(spread);
        let hi = spread.max(q9999);
        (hi.min(spread.max(q99)), hi)
    };

    let mut nodes: Vec<f64> = linspace(lo, core, INITIAL_NODES).collect();
    if hi > core {
        nodes.extend(linspace(core, hi, INITIAL_NODES + 1).skip(1));
    }
    let mut logs: Vec<f64> = nodes.iter().map(|&t| lp.eval(t)).collect();

    // Extend outward until the mass beyond `hi` is negligible.
    let mut extensions = 0;
    loop {
        let top = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let dens: Vec<f64> = logs.iter().map(|l| (l - top).exp()).collect();
        let total: f64 = trapezoid_masses(&nodes, &dens).iter().sum();
        let tail = tail_mass(&lp, data, mu_prior, tau_prior, hi, order, top);
        if support_hi.is_finite() || tail <= TAIL_BOUND * total {
            break;
        }
        extensions += 1;
        if extensions > MAX_EXTENSIONS {
            return Err(TauError::ImproperPosterior(format!(
                "posterior tail mass beyond tau = {hi} does not vanish"
            )));
        }
        let new_hi = 2.0 * hi;
        for t in linspace(hi, new_hi, INITIAL_NODES + 1).skip(1) {
            nodes.push(t);
            logs.push(lp.eval(t));
        }
        hi = new_hi;
    }

    let (nodes, logs) = refine(&lp, nodes, logs, tol)?;
    let top = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !top.is_finite() {
        return Err(TauError::InvalidGrid(
            "log-posterior is not finite anywhere on the grid".into(),
        ));
    }
    let density: Vec<f64> = logs.iter().map(|l| (l - top).exp()).collect();
    let total: f64 = trapezoid_masses(&nodes, &density).iter().sum();
    let tail = if support_hi.is_finite() {
        0.0
    } else {
        tail_mass(&lp, data, mu_prior, tau_prior, hi, order, top) / total
    };
    let mut grid = TauPosteriorGrid::from_density(data, mu_prior, nodes, density)?;
    grid.tail_bound = tail;
    Ok(grid)
}

/// Upper bound on the unnormalised posterior mass beyond `hi`, on the same
/// `exp(log - top)` scale as the grid density.
fn tail_mass(
    lp: &LogPosterior<'_>,
    data: &Dataset,
    mu_prior: &MuPrior,
    tau_prior: &TauPrior,
    hi: f64,
    order: usize,
    top: f64,
) -> f64 {
    match tau_prior.cdf(hi) {
        Some(c) => {
            let sup = [1.0, 1.5, 2.0, 4.0, 8.0, 16.0]
                .iter()
                .map(|f| log_marginal(data, mu_prior, f * hi))
                .fold(f64::NEG_INFINITY, f64::max);
            (sup - top).exp() * (1.0 - c)
        }
        // Flat prior: likelihood ~ tau^-order, so the tail integral is
        // L(hi) hi / (order - 1).
        None => (lp.eval(hi) - top).exp() * hi / (order as f64 - 1.0),
    }
}

/// Bisects every cell whose trapezoid and two-panel trapezoid masses differ
/// by more than `tol * total * min(1, width / bulk)`, where `bulk` is the
/// width of the central 99.8% of the starting grid's mass. Over the bulk the
/// summed discrepancy is then below `tol` of the total mass.
fn refine(
    lp: &LogPosterior<'_>,
    nodes: Vec<f64>,
    logs: Vec<f64>,
    tol: f64,
) -> Result<(Vec<f64>, Vec<f64>), TauError> {
    let top = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let dens = |l: f64| (l - top).exp();
    let total: f64 = nodes
        .windows(2)
        .zip(logs.windows(2))
        .map(|(t, l)| 0.5 * (t[1] - t[0]) * (dens(l[0]) + dens(l[1])))
        .sum();
    let threshold = tol * total;
    let span = nodes[nodes.len() - 1] - nodes[0];
    let min_width = span * 1e-12;
    let bulk = {
        let (mut acc, mut lo, mut hi) = (0.0, None, nodes[nodes.len() - 1]);
        for (t, l) in nodes.windows(2).zip(logs.windows(2)) {
            let before = acc;
            acc += 0.5 * (t[1] - t[0]) * (dens(l[0]) + dens(l[1]));
            if lo.is_none() && acc > 1e-3 * total {
                lo = Some(t[0]);
            }
            if before < (1.0 - 1e-3) * total && acc >= (1.0 - 1e-3) * total {
                hi = t[1];
            }
        }
        (hi - lo.unwrap_or(nodes[0])).max(min_width)
    };

    let mut out: Vec<(f64, f64)> = Vec::with_capacity(nodes.len() * 4);
    let mut stack: Vec<(f64, f64, f64, f64)> = Vec::new();
    for j in (0..nodes.len() - 1).rev() {
        stack.push((nodes[j], logs[j], nodes[j + 1], logs[j + 1]));
    }
    let mut budget = MAX_NODES;
    while let Some((a, la, b, lb)) = stack.pop() {
        let m = 0.5 * (a + b);
        let lm = lp.eval(m);
        let (pa, pm, pb) = (dens(la), dens(lm), dens(lb));
        let coarse = 0.5 * (b - a) * (pa + pb);
        let fine = 0.25 * (b - a) * (pa + 2.0 * pm + pb);
        let split = (coarse - fine).abs() > threshold * ((b - a) / bulk).min(1.0);
        if split && (b - a) > min_width {
            budget = budget.checked_sub(1).ok_or_else(|| {
                TauError::InvalidGrid(format!(
                    "refinement needs more than {MAX_NODES} nodes at tol {tol:e}; loosen tol"
                ))
            })?;
            // Right half first so the left half is processed next.
            stack.push((m, lm, b, lb));
            stack.push((a, la, m, lm));
        } else {
            out.push((a, la));
            out.push((m, lm));
        }
    }
    out.push((nodes[nodes.len() - 1], logs[logs.len() - 1]));
    Ok(out.into_iter().unzip())
}

/// Point and interval summaries of the `tau` posterior.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TauSummary {
    pub median: f64,
    pub mode: f64,
    pub mean: f64,
    pub level: f64,
    pub lower: f64,
    pub upper: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TauEstimate {
    #[default]
    Median,
    Mode,
    Mean,
}

impl TauSummary {
    pub fn estimate(&self, which: TauEstimate) -> f64 {
        match which {
            TauEstimate::Median => self.median,
            TauEstimate::Mode => self.mode,
            TauEstimate::Mean => self.mean,
        }
    }
}

impl FromStr for TauEstimate {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "median" => Ok(TauEstimate::Median),
            "mode" => Ok(TauEstimate::Mode),
            "mean" => Ok(TauEstimate::Mean),
            other => Err(format!("unknown tau estimate `{other}` (median|mode|mean)")),
        }
    }
}

/// Mode of the interpolated density: best node (ties go to the smaller
/// `tau`), then the vertex of the parabola through it and its neighbours.
fn grid_mode(nodes: &[f64], density: &[f64]) -> f64 {
    let mut best = 0;
    for j in 1..density.len() {
        if density[j] > density[best] {
            best = j;
        }
    }
    if best == 0 || best + 1 == nodes.len() {
        return nodes[best];
    }
    let (x0, x1, x2) = (nodes[best - 1], nodes[best], nodes[best + 1]);
    let (y0, y1, y2) = (density[best - 1], density[best], density[best + 1]);
    let d01 = (y1 - y0) / (x1 - x0);
    let d12 = (y2 - y1) / (x2 - x1);
    let curv = (d12 - d01) / (x2 - x0);
    if !(curv < 0.0) {
        return x1;
    }
    // p(x) = y1 + d01 (x - x1) + curv (x - x0)(x - x1); p'(x) = 0.
    let vertex = 0.5 * (x0 + x1) - d01 / (2.0 * curv);
    vertex.clamp(x0, x2)
}

pub fn tau_summaries(grid: &TauPosteriorGrid, level: f64) -> Result<TauSummary, TauError> {
    if !(level > 0.0 && level < 1.0) {
        return Err(TauError::InvalidLevel(level));
    }
    let mean = grid.nodes.iter().zip(&grid.masses).map(|(t, m)| t * m).sum();
    let mode = if grid.len() == 1 {
        grid.nodes[0]
    } else {
        grid_mode(&grid.nodes, &grid.density)
    };
    let alpha = 1.0 - level;
    Ok(TauSummary {
        median: grid.quantile(0.5),
        mode,
        mean,
        level,
        lower: grid.quantile(0.5 * alpha),
        upper: grid.quantile(1.0 - 0.5 * alpha),
    })
}

/// Compact, serialisable view of a grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridRecord {
    pub nodes: Vec<f64>,
    pub masses: Vec<f64>,
}

impl From<&TauPosteriorGrid> for GridRecord {
    fn from(g: &TauPosteriorGrid) -> Self {
        GridRecord {
            nodes: g.nodes.clone(),
            masses: g.masses.clone(),
        }
    }
}
