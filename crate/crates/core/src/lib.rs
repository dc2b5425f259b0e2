//! Leakage and confound auditing for labeled social-media datasets.
//!
//! The crate is organised around the workflow of auditing a benchmark
//! before trusting numbers reported on it:
//!
//! - [`model`] loads and validates datasets (JSONL or CSV plus a manifest).
//! - [`snowflake`] decodes tweet ids into posting times and digit prefixes.
//! - [`forest`] is a small deterministic random forest plus the stratified
//!   random baseline.
//! - [`idleak`] runs the tweet-id digit test and grades the result.
//! - [`textleak`] finds keyword shortcuts and duplicated text.
//! - [`splits`] builds, exports and imports benchmark splits, and
//!   time-rebalances leaky datasets.
//! - [`metrics`] scores prediction files and aggregates tweet votes into
//!   article predictions.
//! - [`audit`] bundles everything into one report with a pass/fail gate.

pub mod audit;
pub mod forest;
pub mod idleak;
pub mod metrics;
pub mod model;
pub mod rng;
pub mod snowflake;
pub mod splits;
pub mod synth;
pub mod textleak;

pub use model::{Dataset, LabelSet, Manifest, Record};

/// Toolkit version echoed into every report and split file.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
