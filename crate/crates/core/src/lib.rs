//! Panorama stitching with per-image similarity priors read from vanishing points.

// negated float comparisons are deliberate: they also reject NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod error;
pub mod geom;
pub mod ingest;
pub mod metrics;
pub mod pipeline;
pub mod pose;
pub mod prior;
pub mod synth;
pub mod vp;
pub mod warp;

pub use error::{Error, Result};
