//! Ensemble post-processing for binary segmentation.
//!
//! Combines the score maps of several independently trained models either by
//! averaging scores before thresholding (MSM) or by thresholding each model
//! before averaging the masks (MBM, a majority vote for an odd ensemble), and
//! evaluates the results with the Dice similarity coefficient.
//!
//! Modules:
//!
//! * [`grid`]: score maps, binary masks, intensity slices and volumes
//! * [`fusion`]: thresholding and the MSM / MBM pipelines
//! * [`metrics`]: Dice, aggregation modes and summary statistics
//! * [`preprocess`]: crop/pad, z-score normalization, affine augmentation
//! * [`overlay`]: false-negative / false-positive overlays with zoom insets
//! * [`simulator`]: seeded synthetic cohorts of ground truth and model outputs
//! * [`codec`]: SGM volumes, PPM images, manifests and CSV reports
//! * [`cli`]: the `segfuse` command line

pub mod cli;
pub mod codec;
pub mod error;
pub mod fusion;
pub mod grid;
pub mod metrics;
pub mod overlay;
pub mod preprocess;
pub mod simulator;

pub use error::{Error, Result};
pub use fusion::{binarize, fuse_mbm, fuse_msm, fuse_volumes, mean_maps, FusionConfig, FusionMethod, Threshold};
pub use grid::{
    cast_mask_to_scores, count_foreground, overlap_count, BinaryMask, IntensityMap, Raster,
    ScoreMap, Shape, Volume, VolumeKind,
};
pub use metrics::{dsc, dsc_mode, summary_stats, DscMode, DscReport, SummaryStats};
