//! Sequential, privacy-aware algorithmic recourse.
//!
//! Given a trained classifier and a negatively classified instance, the
//! library finds a short sequence of feature changes that ends in the
//! positive class while staying in dense regions of the training data and
//! touching as few training points as possible.
//!
//! The search runs in three stages:
//!
//! * [`explore`]: a momentum-guided walk toward a counterfactual.
//! * [`exploit`]: a sparse local graph between the factual and the counterfactual.
//! * [`enhance`]: the minimum-weight path through that graph.
//!
//! [`pipeline::Explainer`] wires them together.

// failures carry their partial stage output by value
#![allow(clippy::result_large_err)]

pub mod cli;
pub mod density;
pub mod enhance;
pub mod error;
pub mod exploit;
pub mod explore;
pub mod geometry;
pub mod io;
pub mod model;
pub mod pipeline;
pub mod spatial;
pub mod types;

pub use error::{RecourseError, Result};
pub use pipeline::{privacy_report, ExplainFailure, Explainer, PrivacyReport, RecourseResult, Session};
pub use types::{Dataset, ExplainerConfig, FeatureSchema, Instance};
