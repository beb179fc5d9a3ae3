//! `tau`-averaged posteriors as finite mixtures of normals.
//!
//! Once `tau` is integrated out, the posteriors of `mu`, of each study
//! effect `theta_i` and of a new study's effect `theta_new` are mixtures with
//! one normal component per grid node. This module builds those mixtures and
//! answers density, distribution, quantile and interval queries on them.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{self, shrinkage_parts, ShrinkageWeight};
use crate::normal;
use crate::tau::TauPosteriorGrid;

const BRACKET_SDS: f64 = 40.0;
const SCAN_POINTS: usize = 4096;
const SCAN_TABLE: usize = 512;
const MAX_BASINS: usize = 3;
const COARSE_COMPONENTS: usize = 256;
const NEGLIGIBLE_MASS: f64 = 1e-30;
const TAIL_P: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MixtureError {
    #[error("mixture has no components")]
    Empty,
    #[error("component {index}: weight {weight} must be finite and non-negative")]
    InvalidWeight { index: usize, weight: f64 },
    #[error("weights sum to {0}, expected 1")]
    Unnormalized(f64),
    #[error("component {index}: sd {sd} must be positive and finite (mean {mean})")]
    DegenerateComponent { index: usize, mean: f64, sd: f64 },
    #[error("probability {0} is outside (0, 1)")]
    InvalidProbability(f64),
    #[error("interval level {0} is outside (0, 1)")]
    InvalidLevel(f64),
    #[error("observation sd {0} must be positive")]
    InvalidObservation(f64),
    #[error(transparent)]
    Model(#[from] model::ModelError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Component {
    pub weight: f64,
    pub mean: f64,
    pub sd: f64,
}

/// A weighted set of normal components. Zero-weight components are dropped
/// on construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Component>", into = "Vec<Component>")]
pub struct NormalMixture {
    components: Vec<Component>,
}

impl TryFrom<Vec<Component>> for NormalMixture {
    type Error = MixtureError;

    fn try_from(components: Vec<Component>) -> Result<Self, Self::Error> {
        NormalMixture::new(components)
    }
}

impl From<NormalMixture> for Vec<Component> {
    fn from(m: NormalMixture) -> Self {
        m.components
    }
}

impl NormalMixture {
    pub fn new(components: Vec<Component>) -> Result<Self, MixtureError> {
        let total = Self::check(&components)?;
        if (total - 1.0).abs() > 1e-10 {
            return Err(MixtureError::Unnormalized(total));
        }
        Ok(NormalMixture {
            components: components.into_iter().filter(|c| c.weight > 0.0).collect(),
        })
    }

    /// Like [`NormalMixture::new`] but rescales weights to sum to one.
    pub fn normalized(components: Vec<Component>) -> Result<Self, MixtureError> {
        let total = Self::check(&components)?;
        if !(total > 0.0 && total.is_finite()) {
            return Err(MixtureError::Unnormalized(total));
        }
        Ok(NormalMixture {
            components: components
                .into_iter()
                .filter(|c| c.weight > 0.0)
                .map(|c| Component {
                    weight: c.weight / total,
                    ..c
                })
                .collect(),
        })
    }

    pub fn single(mean: f64, sd: f64) -> Result<Self, MixtureError> {
        Self::new(vec![Component {
            weight: 1.0,
            mean,
            sd,
        }])
    }

    fn check(components: &[Component]) -> Result<f64, MixtureError> {
        if components.is_empty() {
            return Err(MixtureError::Empty);
        }
        let mut total = 0.0;
        for (index, c) in components.iter().enumerate() {
            if !(c.weight.is_finite() && c.weight >= 0.0) {
                return Err(MixtureError::InvalidWeight {
                    index,
                    weight: c.weight,
                });
            }
            if !(c.sd.is_finite() && c.sd > 0.0 && c.mean.is_finite()) {
                return Err(MixtureError::DegenerateComponent {
                    index,
                    mean: c.mean,
                    sd: c.sd,
                });
            }
            total += c.weight;
        }
        Ok(total)
    }

    pub fn components(&self) -> &[Component] {
        &self.components
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    pub fn pdf(&self, x: f64) -> f64 {
        self.components
            .iter()
            .map(|c| c.weight * normal::pdf(x, c.mean, c.sd))
            .sum()
    }

    pub fn cdf(&self, x: f64) -> f64 {
        self.components
            .iter()
            .map(|c| c.weight * normal::cdf(x, c.mean, c.sd))
            .sum()
    }

    /// Upper-tail probability `1 - cdf(x)`, accurate where `cdf` rounds to 1.
    pub fn sf(&self, x: f64) -> f64 {
        self.components
            .iter()
            .map(|c| c.weight * normal::cdf(-x, -c.mean, c.sd))
            .sum()
    }

    pub fn mean(&self) -> f64 {
        self.components.iter().map(|c| c.weight * c.mean).sum()
    }

    pub fn variance(&self) -> f64 {
        let m = self.mean();
        // Centred form avoids cancellation in sum w (s^2 + m^2) - mean^2.
        self.components
            .iter()
            .map(|c| c.weight * (c.sd * c.sd + (c.mean - m).powi(2)))
            .sum()
    }

    pub fn sd(&self) -> f64 {
        self.variance().sqrt()
    }

    fn bracket(&self) -> (f64, f64) {
        let lo = self
            .components
            .iter()
            .map(|c| c.mean - BRACKET_SDS * c.sd)
            .fold(f64::INFINITY, f64::min);
        let hi = self
            .components
            .iter()
            .map(|c| c.mean + BRACKET_SDS * c.sd)
            .fold(f64::NEG_INFINITY, f64::max);
        (lo, hi)
    }

    /// Quantile at probability `p`.
    pub fn quantile(&self, p: f64) -> Result<f64, MixtureError> {
        if !(p > 0.0 && p < 1.0) {
            return Err(MixtureError::InvalidProbability(p));
        }
        Ok(if p <= 0.5 {
            self.solve_lower(p, None)
        } else {
            self.solve_upper(1.0 - p, None)
        })
    }

    /// `x` with `cdf(x) = p`, solved with safeguarded Newton steps.
    fn solve_lower(&self, p: f64, guess: Option<f64>) -> f64 {
        let start = guess.unwrap_or_else(|| self.normal_guess(p));
        self.solve(
            start,
            |x| {
                let (c, d) = self.cdf_pdf(x);
                (c - p, d)
            },
            p,
        )
    }

    /// `x` with `sf(x) = q`.
    fn solve_upper(&self, q: f64, guess: Option<f64>) -> f64 {
        let start = guess.unwrap_or_else(|| 2.0 * self.mean() - self.normal_guess(q));
        self.solve(
            start,
            |x| {
                let (c, d) = self.sf_pdf(x);
                (q - c, d)
            },
            q,
        )
    }

    /// Lower-tail quantile of the moment-matched normal.
    fn normal_guess(&self, p: f64) -> f64 {
        let z = normal::std_quantile(p.clamp(1e-300, 0.5));
        self.mean() + self.sd() * z.max(-BRACKET_SDS)
    }

    /// `(cdf(x), pdf(x))` in one pass over the components.
    fn cdf_pdf(&self, x: f64) -> (f64, f64) {
        self.components.iter().fold((0.0, 0.0), |(c, d), k| {
            (
                c + k.weight * normal::cdf(x, k.mean, k.sd),
                d + k.weight * normal::pdf(x, k.mean, k.sd),
            )
        })
    }

    /// `(sf(x), pdf(x))` in one pass over the components.
    fn sf_pdf(&self, x: f64) -> (f64, f64) {
        self.components.iter().fold((0.0, 0.0), |(c, d), k| {
            (
                c + k.weight * normal::cdf(-x, -k.mean, k.sd),
                d + k.weight * normal::pdf(x, k.mean, k.sd),
            )
        })
    }

    /// Root of the increasing function `f`, which returns its value and
    /// derivative.
    /// Stops once the residual is below `1e-14 * scale` or the bracket
    /// collapses to a few ulps.
    fn solve<F: Fn(f64) -> (f64, f64)>(&self, start: f64, f: F, scale: f64) -> f64 {
        let (mut lo, mut hi) = self.bracket();
        let mut x = if start > lo && start < hi {
            start
        } else {
            0.5 * (lo + hi)
        };
        let eps = 1e-14 * scale;
        let unit = self.sd();
        let mut last = f64::INFINITY;
        for _ in 0..200 {
            let (r, d) = f(x);
            if r.abs() <= eps {
                return x;
            }
            if r < 0.0 {
                lo = x;
            } else {
                hi = x;
            }
            if hi - lo <= 4.0 * f64::EPSILON * lo.abs().max(hi.abs()).max(1e-300) {
                return 0.5 * (lo + hi);
            }
            let step = x - r / d;
            // Converged to rounding level even if the summed residual is not.
            if d > 0.0 && (step - x).abs() <= 4.0 * f64::EPSILON * x.abs().max(unit) {
                return step;
            }
            // Newton can bounce between the bracket ends on multimodal
            // densities; fall back to bisection unless it halves the residual.
            let newton_ok = d > 0.0 && step > lo && step < hi && r.abs() <= 0.5 * last;
            last = r.abs();
            x = if newton_ok { step } else { 0.5 * (lo + hi) };
        }
        x
    }

    pub fn interval(&self, spec: &IntervalSpec) -> Result<Interval, MixtureError> {
        spec.validate()?;
        let alpha = 1.0 - spec.level;
        let central = (
            self.solve_lower(0.5 * alpha, None),
            self.solve_upper(0.5 * alpha, None),
        );
        let (lower, upper) = match spec.method {
            IntervalMethod::Central => central,
            // For symmetric mixtures the basin search lands on the central
            // interval up to rounding; keep whichever is narrower.
            IntervalMethod::Shortest => {
                let s = self.shortest(alpha);
                if central.1 - central.0 <= s.1 - s.0 {
                    central
                } else {
                    s
                }
            }
        };
        Ok(Interval {
            lower,
            upper,
            level: spec.level,
            method: spec.method,
        })
    }

    /// Interval `[Q(p), Q(p + level)]` of minimal width over the lower-tail
    /// mass `p`. A scan over a tabulated CDF finds the candidate basins (the
    /// width can have several local minima); in each, the optimum is the
    /// root of `pdf(lower) - pdf(upper)`, found on the exact mixture.
    fn shortest(&self, alpha: f64) -> (f64, f64) {
        let p_lo = TAIL_P.min(0.25 * alpha);
        let p_hi = alpha - p_lo;
        let step = (p_hi - p_lo) / (SCAN_POINTS - 1) as f64;
        // Basins are located on a moment-matched compression; only the final
        // root search runs on the full mixture.
        let coarse = self.compressed(COARSE_COMPONENTS);
        let table = CdfTable::new(&coarse, p_lo);
        let widths: Vec<f64> = (0..SCAN_POINTS)
            .map(|j| {
                let p = p_lo + step * j as f64;
                table.quantile(p + 1.0 - alpha) - table.quantile(p)
            })
            .collect();
        let best = widths.iter().cloned().fold(f64::INFINITY, f64::min);
        // Table error is about one cell at each end.
        let slack = 2.0 * table.cell();
        let mut basins: Vec<usize> = (0..SCAN_POINTS)
            .filter(|&j| {
                let left = j == 0 || widths[j] <= widths[j - 1];
                let right = j + 1 == SCAN_POINTS || widths[j] < widths[j + 1];
                left && right && widths[j] <= best + slack
            })
            .collect();
        basins.sort_by(|&a, &b| widths[a].total_cmp(&widths[b]).then(a.cmp(&b)));
        basins.truncate(MAX_BASINS);

        let mut found: Option<(f64, f64)> = None;
        let mut seen: Vec<f64> = Vec::new();
        for j in basins {
            let a = p_lo + step * j.saturating_sub(1) as f64;
            let b = (p_lo + step * (j + 1) as f64).min(p_hi);
            let (_, _, pc) = coarse.basin_minimum(alpha, a, b, p_lo, p_hi);
            // Neighbouring scan minima often lead to the same optimum.
            if seen.iter().any(|&q| (q - pc).abs() <= step) {
                continue;
            }
            seen.push(pc);
            let d = 1e-6 * alpha;
            let (lo, hi, _) = self.basin_minimum(alpha, (pc - d).max(p_lo), (pc + d).min(p_hi), p_lo, p_hi);
            if found.is_none_or(|(l, h)| hi - lo < h - l) {
                found = Some((lo, hi));
            }
        }
        found.expect("scan always yields a basin")
    }

    /// Minimises the width near `[a, b]`, widening the bracket (within
    /// `[p_lo, p_hi]`) until the density gap changes sign.
    fn basin_minimum(&self, alpha: f64, a: f64, b: f64, p_lo: f64, p_hi: f64) -> (f64, f64, f64) {
        let mut hint = (None, None);
        let mut eval = |p: f64| {
            let lo = self.solve_lower(p, hint.0);
            let hi = self.solve_upper(alpha - p, hint.1);
            hint = (Some(lo), Some(hi));
            (self.pdf(lo) - self.pdf(hi), lo, hi)
        };
        let (mut a, mut b) = (a, b);
        let mut fa = eval(a);
        let mut fb = eval(b);
        // Width falls while the gap is negative, rises once it is positive.
        while fa.0 >= 0.0 && a > p_lo {
            let w = b - a;
            b = a;
            fb = fa;
            a = (a - 2.0 * w).max(p_lo);
            fa = eval(a);
        }
        while fb.0 <= 0.0 && b < p_hi {
            let w = b - a;
            a = b;
            fa = fb;
            b = (b + 2.0 * w).min(p_hi);
            fb = eval(b);
        }
        if fa.0 >= 0.0 {
            return (fa.1, fa.2, a);
        }
        if fb.0 <= 0.0 {
            return (fb.1, fb.2, b);
        }
        // Illinois false position on the gap.
        let mut side = 0;
        let mut last = (fa, a);
        for _ in 0..100 {
            let mut c = (a * fb.0 - b * fa.0) / (fb.0 - fa.0);
            if !(c > a && c < b) {
                c = 0.5 * (a + b);
            }
            let fc = eval(c);
            last = (fc, c);
            if fc.0 == 0.0 {
                break;
            }
            if fc.0 < 0.0 {
                a = c;
                fa = fc;
                if side == -1 {
                    fb.0 *= 0.5;
                }
                side = -1;
            } else {
                b = c;
                fb = fc;
                if side == 1 {
                    fa.0 *= 0.5;
                }
                side = 1;
            }
            if b - a <= 1e-15 * alpha {
                break;
            }
        }
        (last.0 .1, last.0 .2, last.1)
    }

    /// Merges runs of adjacent components into at most `n` moment-matched
    /// normals. Only used to locate interval basins.
    fn compressed(&self, n: usize) -> NormalMixture {
        let size = self.components.len().div_ceil(n);
        if size <= 1 {
            return self.clone();
        }
        let components = self
            .components
            .chunks(size)
            .filter_map(|run| {
                let w: f64 = run.iter().map(|c| c.weight).sum();
                if w <= 0.0 {
                    return None;
                }
                let mean = run.iter().map(|c| c.weight * c.mean).sum::<f64>() / w;
                let var = run
                    .iter()
                    .map(|c| c.weight * (c.sd * c.sd + (c.mean - mean).powi(2)))
                    .sum::<f64>()
                    / w;
                Some(Component {
                    weight: w,
                    mean,
                    sd: var.sqrt(),
                })
            })
            .collect();
        NormalMixture { components }
    }

    /// Mixture with every component shifted by `b`.
    pub fn shifted(&self, b: f64) -> NormalMixture {
        NormalMixture {
            components: self
                .components
                .iter()
                .map(|c| Component {
                    mean: c.mean + b,
                    ..*c
                })
                .collect(),
        }
    }
}

/// Tabulated CDF used for the coarse verification scan.
struct CdfTable {
    xs: Vec<f64>,
    ps: Vec<f64>,
}

impl CdfTable {
    fn new(m: &NormalMixture, tail: f64) -> Self {
        let lo = m.solve_lower(0.1 * tail, None);
        let hi = m.solve_upper(0.1 * tail, None);
        let h = (hi - lo) / (SCAN_TABLE - 1) as f64;
        let xs: Vec<f64> = (0..SCAN_TABLE).map(|j| lo + h * j as f64).collect();
        let ps = xs.iter().map(|&x| m.cdf(x)).collect();
        CdfTable { xs, ps }
    }

    fn cell(&self) -> f64 {
        self.xs[1] - self.xs[0]
    }

    fn quantile(&self, p: f64) -> f64 {
        let j = self.ps.partition_point(|&q| q < p).clamp(1, self.ps.len() - 1);
        let (p0, p1) = (self.ps[j - 1], self.ps[j]);
        let (x0, x1) = (self.xs[j - 1], self.xs[j]);
        if p1 > p0 {
            x0 + ((p - p0) / (p1 - p0)).clamp(0.0, 1.0) * (x1 - x0)
        } else {
            x0
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum IntervalMethod {
    Central,
    #[default]
    Shortest,
}

impl fmt::Display for IntervalMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            IntervalMethod::Central => "central",
            IntervalMethod::Shortest => "shortest",
        })
    }
}

impl FromStr for IntervalMethod {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "central" => Ok(IntervalMethod::Central),
            "shortest" => Ok(IntervalMethod::Shortest),
            other => Err(format!("unknown interval method `{other}` (central|shortest)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntervalSpec {
    pub level: f64,
    pub method: IntervalMethod,
}

impl Default for IntervalSpec {
    fn default() -> Self {
        IntervalSpec {
            level: 0.95,
            method: IntervalMethod::Shortest,
        }
    }
}

impl IntervalSpec {
    pub fn new(level: f64, method: IntervalMethod) -> Result<Self, MixtureError> {
        let s = IntervalSpec { level, method };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<(), MixtureError> {
        if self.level > 0.0 && self.level < 1.0 {
            Ok(())
        } else {
            Err(MixtureError::InvalidLevel(self.level))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lower: f64,
    pub upper: f64,
    pub level: f64,
    pub method: IntervalMethod,
}

impl Interval {
    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lower <= x && x <= self.upper
    }
}

/// One query against a mixture.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Query {
    Pdf(f64),
    Cdf(f64),
    Quantile(f64),
    Interval(IntervalSpec),
    Mean,
    Sd,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Answer {
    Value(f64),
    Interval(Interval),
}

pub fn mixture_query(m: &NormalMixture, q: Query) -> Result<Answer, MixtureError> {
    Ok(match q {
        Query::Pdf(x) => Answer::Value(m.pdf(x)),
        Query::Cdf(x) => Answer::Value(m.cdf(x)),
        Query::Quantile(p) => Answer::Value(m.quantile(p)?),
        Query::Interval(spec) => Answer::Interval(m.interval(&spec)?),
        Query::Mean => Answer::Value(m.mean()),
        Query::Sd => Answer::Value(m.sd()),
    })
}

fn from_grid<F>(grid: &TauPosteriorGrid, mut component: F) -> Result<NormalMixture, MixtureError>
where
    F: FnMut(f64, &model::ConditionalMuPosterior) -> (f64, f64),
{
    let comps = grid
        .nodes()
        .iter()
        .zip(grid.conditionals())
        .zip(grid.masses())
        // Far-tail nodes contribute nothing at double precision.
        .filter(|(_, &weight)| weight >= NEGLIGIBLE_MASS)
        .map(|((&tau, cond), &weight)| {
            let (mean, sd) = component(tau, cond);
            Component { weight, mean, sd }
        })
        .collect();
    NormalMixture::normalized(comps)
}

/// Posterior of the overall mean `mu`.
pub fn marginal_mu(grid: &TauPosteriorGrid) -> Result<NormalMixture, MixtureError> {
    from_grid(grid, |_, c| (c.mu_hat, c.sigma_hat))
}

/// Shrinkage posterior of study `i`'s true effect.
pub fn marginal_theta(grid: &TauPosteriorGrid, i: usize) -> Result<NormalMixture, MixtureError> {
    let data = grid.data();
    let s = data.studies().get(i).ok_or(model::ModelError::IndexOutOfRange {
        index: i,
        len: data.len(),
    })?;
    from_grid(grid, |tau, c| {
        shrinkage_parts(s.y, s.sigma, tau, c.mu_hat, c.sigma_hat)
    })
}

/// Meta-analytic-predictive distribution of a new study's true effect.
pub fn map_predictive(grid: &TauPosteriorGrid) -> Result<NormalMixture, MixtureError> {
    from_grid(grid, |tau, c| (c.mu_hat, c.sigma_hat.hypot(tau)))
}

/// Conjugate update of a mixture prior with one normal observation.
pub fn update_with_study(
    prior: &NormalMixture,
    y_new: f64,
    sigma_new: f64,
) -> Result<NormalMixture, MixtureError> {
    if !(sigma_new > 0.0) || sigma_new.is_nan() {
        return Err(MixtureError::InvalidObservation(sigma_new));
    }
    if sigma_new.is_infinite() {
        return Ok(prior.clone());
    }
    let obs_prec = sigma_new.powi(-2);
    let mut log_w = Vec::with_capacity(prior.len());
    let mut parts = Vec::with_capacity(prior.len());
    for c in prior.components() {
        let prec = c.sd.powi(-2) + obs_prec;
        let mean = (c.mean * c.sd.powi(-2) + y_new * obs_prec) / prec;
        parts.push((mean, prec.sqrt().recip()));
        log_w.push(c.weight.ln() + normal::ln_pdf(y_new, c.mean, c.sd.hypot(sigma_new)));
    }
    let top = log_w.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let comps = parts
        .into_iter()
        .zip(log_w)
        .map(|((mean, sd), lw)| Component {
            weight: (lw - top).exp(),
            mean,
            sd,
        })
        .collect();
    NormalMixture::normalized(comps)
}

/// Shrinkage-weight decomposition averaged over the `tau` posterior. The
/// `tau` field carries the posterior mean of `tau`.
pub fn averaged_shrinkage_weight(grid: &TauPosteriorGrid, i: usize) -> Result<ShrinkageWeight, MixtureError> {
    let data = grid.data();
    let mut acc = ShrinkageWeight {
        study_index: i,
        tau: 0.0,
        direct: 0.0,
        indirect: 0.0,
        total: 0.0,
    };
    for (&tau, &m) in grid.nodes().iter().zip(grid.masses()) {
        let w = model::shrinkage_weight(data, grid.mu_prior(), i, tau)?;
        acc.tau += m * tau;
        acc.direct += m * w.direct;
        acc.indirect += m * w.indirect;
        acc.total += m * w.total;
    }
    Ok(acc)
}
