//! Gaussian prototype compression for 3D Gaussian splatting scenes.
//!
//! The crate is organised bottom-up:
//!
//! - [`gaussian`]: the primitive data model, covariance construction and the
//!   flattened attribute rows that clustering operates on.
//! - [`sh`]: real spherical-harmonic colour evaluation (degree 0..=3).
//! - [`render`]: a CPU differentiable splatting renderer (projection,
//!   front-to-back compositing, analytic backward pass, densification).
//! - [`anchor`]: anchor sampling from SfM points and nearest-anchor tiling.
//! - [`prototype`]: per-tile weighted K-means, the clustering objective and
//!   prototype replacement.
//! - [`optim`]: training configuration, Adam, the joint image/clustering loss
//!   and the training schedules.
//! - [`metrics`]: PSNR and SSIM (with gradient).
//! - [`io`]: PLY, COLMAP points, PNG, config files, scene directories and
//!   synthetic scene generation.

pub mod anchor;
pub mod camera;
pub mod error;
pub mod gaussian;
pub mod image;
pub mod io;
pub mod metrics;
pub mod optim;
pub mod prototype;
pub mod render;
pub mod sh;

pub use nalgebra;
pub use anchor::{assign_tiles, assign_tiles_brute_force, sample_anchors, AnchorBank, AnchorCount};
pub use camera::Camera;
pub use error::{Error, Result};
pub use gaussian::{GaussianPrimitive, ParamGroup, PrimitiveSet, RowLayout};
pub use image::Image;
pub use metrics::{psnr, ssim, MetricReport, SsimOutput};
pub use optim::{
    config::{MeanMode, TrainMode, TrainingConfig, Weighting},
    loss::{image_loss, LossTerms},
    train::{compress, train, train_two_stage, LogRow, TrainOutcome},
};
pub use prototype::{choose_k, clustering_loss, decay_ratio, kmeans_tile, replace_with_prototypes, PrototypeSet};
pub use render::{project, render, render_backward, render_image, RenderGradients, RenderOptions, Splat2D};
