//! Training-free segmentation by fusing dense class probabilities with
//! class-agnostic mask proposals, plus click-prompted referring segmentation
//! and click-supervision generation.

pub mod clicks;
pub mod config;
pub mod contrastive;
pub mod error;
pub mod eval;
pub mod io;
pub mod pipeline;
pub mod providers;
pub mod raster;
pub mod tiling;
pub mod viz;

pub use error::{Error, ProviderErrorKind, Result};
pub use raster::{iou, BinaryMask, LabelMap, ProbabilityMap, Rect};
