//! Technology-space analytics for firm patent portfolios.
//!
//! The crate turns patent, firm and government-support tables into the
//! quantities used to study how firms diversify into new technologies:
//! revealed technological advantage, co-advantage proximity, relatedness
//! density, method-of-reflections complexity, entry events, and a
//! fixed-effects linear-probability panel built on top of them.
//!
//! Stages are exposed as plain functions over immutable tables so they can be
//! tested and recombined independently; [`atlas::run_pipeline`] wires them
//! together and writes a reproducible set of artifacts plus a manifest.
//!
//! With the default `parallel` feature the per-year, per-technology and
//! per-chunk loops run on rayon. Without it the same code runs sequentially
//! and produces bit-identical output.

// `!(x > t)` is deliberate: it also rejects NaN. Index loops mirror the
// matrix formulas they implement.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod advantage;
pub mod atlas;
pub mod complexity;
pub mod corpus;
pub mod econometrics;
pub mod error;
pub mod panel;
pub mod par;
pub mod relatedness;
pub mod synthlab;
pub mod table;

pub use error::{Error, Result};
