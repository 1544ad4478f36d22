//! Dynamic pillar voxelization and heatmap-crop detection refinement for
//! LiDAR point clouds.
//!
//! The crate is organized around the pipeline stages:
//!
//! - [`cloudio`]: point-cloud model, KITTI/CSV ingestion, range filtering and
//!   synthetic scene/detection generation.
//! - [`scatter`]: deterministic segment reductions (sum, mean, max).
//! - [`fdv`]: the dynamic voxelizer and per-point feature encoding.
//! - [`rvbackbone`]: pillar feature nets with scatter-max reductions and the
//!   dense BEV pseudo-image.
//! - [`tinynn`]: dense NN kernels (linear, conv2d, relu, softmax cross
//!   entropy, Adam) with hand-wired backward passes.
//! - [`subhead`]: heatmap rendering, window crops, the classifier zoo, crop
//!   dataset construction, training and detection refinement.
//! - [`eval`]: rotated BEV IoU, greedy matching, precision reports and the
//!   point/score filtering baselines.
//!
//! Everything is deterministic: all randomness flows through explicit seeds
//! and results are bit-identical across runs and thread counts.

pub mod checkpoint;
pub mod cloudio;
pub mod config;
pub mod eval;
pub mod fdv;
pub mod rvbackbone;
pub mod scatter;
pub mod subhead;
pub mod tinynn;
