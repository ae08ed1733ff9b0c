//! Offline comparison of human annotators and machine classifiers.
//!
//! The crate ingests per-sample predictions and annotations into an immutable
//! [`ingest::EvalFrame`], derives confusion structure and difficulty scores
//! ([`metrics`]), runs the hypothesis tests behind those comparisons
//! ([`stats`]), and simulates post-hoc human/machine teaming ([`teaming`]).
//! [`synth`] generates populations with known ground truth so every estimator
//! can be checked against the quantity it estimates.
//!
//! All randomness is seeded and flows through [`rng`]; equal seeds give
//! byte-equal results.

pub mod ingest;
pub mod metrics;
pub mod rng;
pub mod stats;
pub mod synth;
pub mod teaming;
