//! Sharpness-aware training and loss-landscape flatness measurement for
//! continual-learning experiments on small dense networks.
//!
//! The crate is organised bottom-up:
//!
//! - [`nn`]: dense networks over a flat [`ParamVector`], exact backward pass
//!   and a finite-difference oracle.
//! - [`optim`]: SGD, AdamW and the two-pass SAM wrapper with pass accounting.
//! - [`landscape`]: 2D loss surfaces along random directions, and contour plots.
//! - [`flatness`]: curvature, average-gradient and mean-absolute-gradient scores.
//! - [`continual`]: synthetic task families, two-stage runs, Wise-FT merging,
//!   rehearsal and the sharpness/forgetting correlation.

pub mod continual;
pub mod error;
pub mod flatness;
pub mod landscape;
pub mod nn;
pub mod optim;

pub use continual::{RunReport, SequencePlan, SummaryRow, TaskSpec};
pub use error::{Error, Result};
pub use flatness::{flatness_report, FlatnessReport};
pub use landscape::{DirectionKind, DirectionPair, GridSpec, LossSurface};
pub use nn::{Activation, Batch, Gradient, LossKind, Matrix, ModelSpec, ParamVector};
pub use optim::{AdamWConfig, BaseOptimizer, OptimizerConfig, SamConfig, SgdConfig};
