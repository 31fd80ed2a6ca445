//! Post-processing and evaluation toolkit for instance segmentation of
//! long, thin objects.
//!
//! The centerpiece is [`fusion`]: repairing fragmented instance masks by
//! merging them over a semantic pre-segmentation using IoU and containment
//! checks. Supporting modules provide the mask/polygon machinery
//! ([`raster`]), evaluation metrics ([`metrics`]), reference loss functions
//! and activations with analytic gradients ([`lossmath`]), a three-phase
//! learning-rate schedule ([`schedule`]), and a synthetic fiber-scene
//! generator for testing the whole pipeline without trained models
//! ([`synth`]).

pub mod error;
pub mod formats;
pub mod fusion;
pub mod lossmath;
pub mod metrics;
pub mod raster;
pub mod schedule;
pub mod synth;

pub use error::{Error, Result};
