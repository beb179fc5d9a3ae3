//! End-to-end analysis and its serialisable report.

use serde::{Deserialize, Serialize};

use crate::ingest::{Dataset, Study};
use crate::mixture::{
    averaged_shrinkage_weight, map_predictive, marginal_mu, marginal_theta, Interval, IntervalSpec,
};
use crate::model::{shrinkage_weight, MuPrior, ShrinkageWeight};
use crate::normal::two_sided_z;
use crate::tau::{tau_posterior, tau_summaries, GridRecord, TauEstimate, TauPrior, TauSummary};
use crate::Error;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisConfig {
    pub mu_prior: MuPrior,
    pub tau_prior: TauPrior,
    pub interval: IntervalSpec,
    pub tol: f64,
    pub tau_estimate: TauEstimate,
    /// Overrides the dataset's own target flag.
    #[serde(default)]
    pub target: Option<String>,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        AnalysisConfig {
            mu_prior: MuPrior::ImproperUniform,
            tau_prior: TauPrior::default(),
            interval: IntervalSpec::default(),
            tol: 1e-6,
            tau_estimate: TauEstimate::Median,
            target: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyRow {
    pub label: String,
    pub y: f64,
    pub sigma: f64,
    pub is_target: bool,
    /// `y -/+ z sigma` at the configured level.
    pub quoted: Bounds,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub lower: f64,
    pub upper: f64,
}

impl From<Interval> for Bounds {
    fn from(i: Interval) -> Self {
        Bounds {
            lower: i.lower,
            upper: i.upper,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorRow {
    pub mean: f64,
    pub sd: f64,
    pub interval: Bounds,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TauRow {
    pub estimate: f64,
    pub summary: TauSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetWeights {
    pub index: usize,
    pub label: String,
    /// Decomposition at the reported point estimate of `tau`.
    pub plug_in: ShrinkageWeight,
    /// Decomposition averaged over the `tau` posterior.
    pub posterior_averaged: ShrinkageWeight,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub schema_version: u32,
    pub config: AnalysisConfig,
    pub studies: Vec<StudyRow>,
    pub shrinkage: Vec<PosteriorRow>,
    pub mu: PosteriorRow,
    pub prediction: PosteriorRow,
    pub tau: TauRow,
    pub target: Option<TargetWeights>,
    pub warnings: Vec<String>,
    pub grid: GridRecord,
}

impl AnalysisReport {
    /// Rebuilds the analysed dataset from the study rows.
    pub fn dataset(&self) -> Result<Dataset, Error> {
        let studies = self
            .studies
            .iter()
            .map(|r| Study {
                label: r.label.clone(),
                y: r.y,
                sigma: r.sigma,
                is_target: r.is_target,
            })
            .collect();
        Ok(Dataset::new(studies)?)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serialises");
        s.push('\n');
        s
    }

    fn numbers(&self) -> Vec<f64> {
        let mut v = Vec::new();
        for s in &self.studies {
            v.extend([s.y, s.sigma, s.quoted.lower, s.quoted.upper]);
        }
        for r in self.shrinkage.iter().chain([&self.mu, &self.prediction]) {
            v.extend([r.mean, r.sd, r.interval.lower, r.interval.upper]);
        }
        let t = &self.tau.summary;
        v.extend([self.tau.estimate, t.median, t.mode, t.mean, t.lower, t.upper]);
        if let Some(w) = &self.target {
            for x in [&w.plug_in, &w.posterior_averaged] {
                v.extend([x.tau, x.direct, x.indirect, x.total]);
            }
        }
        v.extend(&self.grid.nodes);
        v.extend(&self.grid.masses);
        v
    }
}

fn row(m: &crate::mixture::NormalMixture, spec: &IntervalSpec) -> Result<PosteriorRow, Error> {
    Ok(PosteriorRow {
        mean: m.mean(),
        sd: m.sd(),
        interval: m.interval(spec)?.into(),
    })
}

pub fn run_analysis(dataset: &Dataset, config: &AnalysisConfig) -> Result<AnalysisReport, Error> {
    config.interval.validate()?;
    let data = match &config.target {
        Some(label) => dataset.clone().with_target(label)?,
        None => dataset.clone(),
    };
    let grid = tau_posterior(&data, &config.mu_prior, &config.tau_prior, config.tol)?;
    let spec = config.interval;
    let z = two_sided_z(spec.level);

    let studies = data
        .studies()
        .iter()
        .map(|s| StudyRow {
            label: s.label.clone(),
            y: s.y,
            sigma: s.sigma,
            is_target: s.is_target,
            quoted: Bounds {
                lower: s.y - z * s.sigma,
                upper: s.y + z * s.sigma,
            },
        })
        .collect();
    let shrinkage = (0..data.len())
        .map(|i| row(&marginal_theta(&grid, i)?, &spec))
        .collect::<Result<Vec<_>, _>>()?;
    let mu = row(&marginal_mu(&grid)?, &spec)?;
    let prediction = row(&map_predictive(&grid)?, &spec)?;
    let summary = tau_summaries(&grid, spec.level)?;
    let tau_hat = summary.estimate(config.tau_estimate);

    let mut warnings = Vec::new();
    let target = match data.target_index() {
        None => {
            warnings.push("no target study flagged; shrinkage weights omitted".to_owned());
            None
        }
        Some(_) if !config.mu_prior.is_uniform() => {
            warnings.push(
                "shrinkage-weight decomposition needs the uniform mu prior; weights omitted".to_owned(),
            );
            None
        }
        Some(i) => Some(TargetWeights {
            index: i,
            label: data.studies()[i].label.clone(),
            plug_in: shrinkage_weight(&data, &config.mu_prior, i, tau_hat)?,
            posterior_averaged: averaged_shrinkage_weight(&grid, i)?,
        }),
    };
    if grid.tail_bound() > 1e-6 {
        warnings.push(format!(
            "tau posterior tail mass bound {:.2e} exceeds 1e-6",
            grid.tail_bound()
        ));
    }

    let report = AnalysisReport {
        schema_version: SCHEMA_VERSION,
        config: config.clone(),
        studies,
        shrinkage,
        mu,
        prediction,
        tau: TauRow {
            estimate: tau_hat,
            summary,
        },
        target,
        warnings,
        grid: GridRecord::from(&grid),
    };
    if report.numbers().iter().any(|x| !x.is_finite()) {
        return Err(Error::Numeric("report contains non-finite values".into()));
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn data(target: bool) -> Dataset {
        let mut s = vec![
            Study::new("a", 0.3, 0.4),
            Study::new("b", 1.1, 0.2),
            Study::new("c", -0.5, 0.7),
        ];
        s[2].is_target = target;
        Dataset::new(s).unwrap()
    }

    #[test]
    fn single_study_keeps_its_estimate() {
        let d = Dataset::new(vec![Study::new("only", 0.8, 0.3).target()]).unwrap();
        let r = run_analysis(&d, &AnalysisConfig::default()).unwrap();
        let w = r.target.unwrap();
        assert!((w.plug_in.total - 1.0).abs() < 1e-12);
        assert!((w.posterior_averaged.total - 1.0).abs() < 1e-12);
        assert!((r.shrinkage[0].mean - 0.8).abs() < 1e-9);
        assert!((r.shrinkage[0].sd - 0.3).abs() < 1e-9);
    }

    #[test]
    fn missing_target_warns() {
        let r = run_analysis(&data(false), &AnalysisConfig::default()).unwrap();
        assert!(r.target.is_none());
        assert!(r.warnings.iter().any(|w| w.contains("no target")));
    }

    #[test]
    fn target_override_and_schema() {
        let cfg = AnalysisConfig {
            target: Some("a".into()),
            ..Default::default()
        };
        let r = run_analysis(&data(true), &cfg).unwrap();
        assert_eq!(r.schema_version, 1);
        assert_eq!(r.target.as_ref().unwrap().index, 0);
        assert!(r.studies[0].is_target && !r.studies[2].is_target);
        assert!(run_analysis(
            &data(true),
            &AnalysisConfig {
                target: Some("zz".into()),
                ..Default::default()
            }
        )
        .is_err());
    }

    #[test]
    fn json_round_trip_reproduces_report() {
        let r = run_analysis(&data(true), &AnalysisConfig::default()).unwrap();
        let text = r.to_json();
        let back: AnalysisReport = serde_json::from_str(&text).unwrap();
        assert_eq!(back, r);
        let rerun = run_analysis(&back.dataset().unwrap(), &back.config).unwrap();
        assert_eq!(rerun.to_json(), text);
    }

    #[test]
    fn averaged_weight_exceeds_fixed_effect_weight() {
        let r = run_analysis(&data(true), &AnalysisConfig::default()).unwrap();
        let w = r.target.unwrap();
        let fe = shrinkage_weight(&data(true), &MuPrior::ImproperUniform, 2, 0.0)
            .unwrap()
            .total;
        assert!(w.posterior_averaged.total >= fe);
        assert!(w.plug_in.total >= fe);
    }
}
