//! Uncertain-point refinement for range-image LiDAR semantic segmentation.
//!
//! A scan is projected into a range image, per-pixel class probabilities (from a
//! backbone export or a noisy oracle) are turned into point labels by a windowed
//! KNN vote, and the points whose labels are least trustworthy are reclassified
//! by a small self-attention network trained on point features.
//!
//! ```text
//! cloud ─ project ─ coarse probs ─┬─ argmax ─ knn_refine ─────────── refined p_c ─┐
//!                                 └─ aggregate ─ build_pool ─ refine ─ refined p_u ┴─ merge
//! ```

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod coarse;
pub mod error;
pub mod kitti_io;
pub mod knn;
pub mod metrics;
pub mod pipeline;
pub mod ply;
pub mod projection;
pub mod refiner;
pub mod rng;
pub mod scene;
pub mod uncertainty;

pub use error::{Error, Result};
pub use kitti_io::{ClassId, ClassMap, Point, PointCloud};
pub use projection::{project, ProjectionConfig, RangeImage};
