//! Full-Bayes random-effects meta-analysis under the normal-normal
//! hierarchical model.
//!
//! Studies report effects `y_i` with known sampling sds `sigma_i`; their
//! true effects vary as `theta_i ~ N(mu, tau^2)`. The crate integrates the
//! heterogeneity `tau` out numerically and reports posteriors for the
//! overall mean, shrinkage estimates for every study (with shortest credible
//! intervals), the predictive distribution of a new study's effect, and
//! forest plots.
//!
//! ```
//! use shrinkmeta::{run_analysis, AnalysisConfig, Dataset, Study};
//!
//! let data = Dataset::new(vec![
//!     Study::new("a", 0.3, 0.4),
//!     Study::new("b", 1.1, 0.2),
//!     Study::new("c", -0.5, 0.7).target(),
//! ])?;
//! let report = run_analysis(&data, &AnalysisConfig::default())?;
//! assert!(report.mu.interval.lower < report.mu.mean);
//! # Ok::<(), shrinkmeta::Error>(())
//! ```

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod forest;
pub mod ingest;
pub mod mixture;
pub mod model;
pub mod normal;
pub mod report;
pub mod tau;
pub mod validate;

use thiserror::Error;

pub use forest::{render_forest, ForestFormat};
pub use ingest::{
    log_odds_ratio, parse_csv, parse_dataset, parse_json, sigma_from_ci, ContinuityCorrection, Dataset,
    IngestError, ParseOptions, Study, TwoByTwo,
};
pub use mixture::{
    map_predictive, marginal_mu, marginal_theta, mixture_query, update_with_study, Interval, IntervalMethod,
    IntervalSpec, MixtureError, NormalMixture,
};
pub use model::{
    integrated_log_likelihood, mu_posterior_given_tau, shrinkage_given_tau, shrinkage_weight,
    ConditionalMuPosterior, ModelError, MuPrior, ShrinkageMoments, ShrinkageWeight,
};
pub use report::{run_analysis, AnalysisConfig, AnalysisReport};
pub use tau::{tau_posterior, tau_summaries, TauError, TauEstimate, TauPosteriorGrid, TauPrior, TauSummary};
pub use validate::{coverage_study, dense_grid_oracle, simulate_dataset, SigmaLaw, SimConfig};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("ingest: {0}")]
    Ingest(#[from] IngestError),
    #[error("model: {0}")]
    Model(#[from] ModelError),
    #[error("tau posterior: {0}")]
    Tau(#[from] TauError),
    #[error("mixture: {0}")]
    Mixture(#[from] MixtureError),
    #[error("configuration: {0}")]
    Config(String),
    #[error("numeric failure: {0}")]
    Numeric(String),
}

impl Error {
    /// True for failures of the numerics rather than of the inputs.
    pub fn is_numeric(&self) -> bool {
        matches!(self, Error::Numeric(_) | Error::Tau(TauError::InvalidGrid(_)))
    }
}
