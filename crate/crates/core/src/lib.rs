//! Unsupervised object discovery by fusing self-supervised attention with
//! monocular depth, plus class-agnostic evaluation (CorLoc, odAP).
//!
//! Inputs are float rasters in PFM format laid out per image stem (see
//! [`store::manifest`]). The per-image pipeline is
//!
//! 1. normalize depth, aggregate and resample attention ([`attention`]);
//! 2. split depth into layers at histogram valleys ([`depth_layers`]);
//! 3. weight and combine attention with each layer, then threshold ([`fusion`]);
//! 4. clean masks, label components and apply Soft-NMS ([`boxes`]).
//!
//! [`eval`] scores predictions against VOC annotations and [`synth`]
//! generates seeded scenes with planted objects.

pub mod attention;
pub mod boxes;
pub mod config;
pub mod depth_layers;
pub mod error;
pub mod eval;
pub mod fusion;
pub mod geometry;
pub mod par;
pub mod pipeline;
pub mod raster;
pub mod store;
pub mod synth;
pub mod viz;

pub use config::Config;
pub use error::{Error, Result};
pub use geometry::{iou, BBox};
pub use raster::Raster;
