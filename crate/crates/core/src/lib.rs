//! Eye-tracking to scanpath processing over Java source code, plus the
//! dataset, baseline and scoring machinery used to evaluate scanpath
//! predictors.
//!
//! The pipeline runs gaze samples through [`fixation`] detection, maps the
//! resulting fixations onto token areas of interest built by [`stimulus`],
//! and extracts word-level [`scanpath`]s. [`dataset`] turns those into
//! leave-one-out splits and fine-tuning prompts, [`predictors`] supplies
//! baselines and external-prediction ingestion, and [`metrics`] scores
//! everything. [`synth`] generates gaze streams from scripted scanpaths so
//! the whole chain can be exercised without human data.

// `!(x > 0.0)` is used on purpose to reject NaN along with non-positive values
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod dataset;
pub mod error;
pub mod fixation;
pub mod gaze;
pub mod metrics;
pub mod pipeline;
pub mod predictors;
pub mod scanpath;
pub mod stimulus;
pub mod synth;
pub mod warning;

pub use error::{Error, Result};
pub use warning::{Warning, WarningKind};
