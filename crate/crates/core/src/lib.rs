//! Pedestrian detection with non-neighboring features over aggregated
//! channel features and boosted trees.
//!
//! Pipeline: [`channels`] turns an image into integral tables, [`featpool`]
//! defines and evaluates candidate features, [`boost`] and [`train`] learn a
//! soft-cascade forest, [`detect`] scans image pyramids and [`eval`] scores
//! detections. [`synth`] renders desk-scale data.

pub mod boost;
pub mod channels;
pub mod config;
pub mod detect;
pub mod error;
pub mod eval;
pub mod featpool;
pub mod image;
pub mod model;
pub mod synth;
pub mod train;

pub use boost::{DecisionTree, TreeNode};
pub use channels::{CellRect, ChannelConfig, IntegralStack, LuvScale};
pub use config::{Preset, RunConfig};
pub use detect::{detect, nms, DetectParams, Detection, PyramidParams};
pub use error::{Error, Result};
pub use eval::{EvalCurve, GroundTruthBox};
pub use featpool::{FeatureDescriptor, FeatureKind, FeaturePool, Patch, PoolConfig};
pub use image::RgbImage;
pub use model::{BoostedModel, PixelBox, Template};
pub use train::{AnnotatedImage, TrainConfig};
