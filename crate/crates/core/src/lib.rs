//! Two-stage meta-analysis of phase I dose-finding studies.
//!
//! Stage one fits a logistic dose-toxicity curve to each study (plain
//! maximum likelihood, Firth-penalized likelihood, or FLAC) and turns the
//! fit into a maximum-tolerated-dose estimate with a delta-method standard
//! error. Stage two combines those estimates under a normal-normal
//! hierarchical model, integrating the heterogeneity parameter on a
//! deterministic grid to produce combined, predictive and shrinkage
//! summaries. The [`trial_sim`] module generates synthetic studies from
//! 3+3, CRM and BLRM designs to evaluate the whole pipeline.
//!
//! ```text
//! examples/
//! ├── fit_studies.rs        per-study MTD estimates, all three fitters
//! ├── meta_sorafenib.rs     combined / prediction / shrinkage summaries
//! ├── meta_irinotecan.rs    second application data set
//! ├── sensitivity.rs        dropping imprecise studies
//! ├── bridging.rs           Western -> Japanese two-level shrinkage
//! ├── forest_plot.rs        SVG forest plot
//! ├── emax.rs               logistic <-> Emax parametrization
//! ├── design_operating.rs   3+3 / CRM / BLRM data characteristics
//! └── simulation_grid.rs    Monte-Carlo evaluation of the estimators
//! ```
//!
//! Run any of them with `cargo run --release -p dosemeta --example <name>`.

pub mod dose_response;
pub mod error;
pub mod meta_analysis;
pub mod report;
pub mod study_data;
pub mod trial_sim;

pub use error::{Error, Result};

/// Fixture data shipped with the crate.
pub mod fixtures {
    /// Sorafenib monotherapy studies; Japanese studies carry group tag `japanese`.
    pub const SORAFENIB_CSV: &str = include_str!("../data/sorafenib.csv");
    /// Irinotecan / S-1 combination studies.
    pub const IRINOTECAN_CSV: &str = include_str!("../data/irinotecan.csv");
}
