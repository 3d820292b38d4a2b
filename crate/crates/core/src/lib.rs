//! Core library for `modaprep`, a toolkit for preparing unpaired
//! cross-modality MR data for external translation and segmentation
//! models, and for scoring their outputs.
//!
//! The library is organized around a small set of file-interchange
//! contracts: volumes travel as single-file NIfTI-1, slice stacks as raw
//! float arrays (or 16-bit PNG) with a JSON sidecar, probability maps as
//! one NIfTI per channel with a JSON sidecar, and feature sets as CSV or
//! raw float matrices. External models never link against this code;
//! they only read and write these files.
//!
//! Modules map onto the stages of the workflow:
//!
//! - [`volume`] / [`nifti`]: volume data model and NIfTI-1 I/O
//! - [`pipeline`]: resample, normalize, center, crop, and slice volumes
//! - [`slice_io`]: slice-stack export/import for 2D translation models
//! - [`augment`]: tumor-signal augmentation and dataset doubling
//! - [`metrics`]: Dice, average symmetric surface distance, reports
//! - [`fid`]: Fréchet distance between Gaussian feature summaries
//! - [`ensemble`]: k-fold bookkeeping and softmax averaging
//! - [`manifest`]: dataset manifests and run configuration

pub mod augment;
pub mod edt;
pub mod ensemble;
pub mod error;
pub mod fid;
pub mod manifest;
pub mod metrics;
pub mod nifti;
pub mod pipeline;
pub mod slice_io;
pub mod volume;

pub use error::{Error, Result};
pub use volume::{LabelVolume, ScalarVolume, Volume};
