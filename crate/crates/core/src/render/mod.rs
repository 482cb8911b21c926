//! CPU differentiable splatting renderer.
//!
//! Primitives are projected to 2D screen-space Gaussians (EWA splatting with
//! a low-pass floor), globally depth sorted, and alpha-composited front to
//! back per pixel:
//!
//! ```text
//! C = sum_i c_i a_i T_i + T_n * background
//! a_i = min(alpha_max, sigmoid(o_i) * exp(-1/2 d^T conic_i d))
//! T_i = prod_{j<i} (1 - a_j)
//! ```
//!
//! Compositing stops once `T` drops below `t_min`. The backward pass replays
//! the forward per pixel instead of storing per-pixel lists.

mod backward;
mod densify;
mod forward;
mod project;

use nalgebra::{Matrix2, Vector2, Vector3};

pub use backward::render_backward;
pub use densify::{densify_and_prune, DensifyConfig, DensifyStats, DensifyOutcome, RowOrigin};
pub use forward::{render, render_image, RenderedImage};
pub use project::project;

use crate::gaussian::{ParamGroup, RowLayout};

#[derive(Clone, Debug, PartialEq)]
pub struct RenderOptions {
    pub background: Vector3<f64>,
    /// Added to both diagonal entries of every 2D covariance (pixels^2).
    pub low_pass: f64,
    pub alpha_max: f64,
    /// Early termination threshold on transmittance.
    pub t_min: f64,
    /// Splat support half-width, in standard deviations.
    pub extent_sigma: f64,
    /// Primitives whose centre falls outside the image by more than this
    /// factor of the half field of view are culled.
    pub frustum_margin: f64,
}

impl Default for RenderOptions {
    fn default() -> Self {
        Self {
            background: Vector3::zeros(),
            low_pass: 0.3,
            alpha_max: 0.99,
            t_min: 1e-4,
            extent_sigma: 3.0,
            frustum_margin: 1.3,
        }
    }
}

/// A primitive projected to screen space.
#[derive(Clone, Debug, PartialEq)]
pub struct Splat2D {
    pub mean_px: Vector2<f64>,
    pub cov2d: Matrix2<f64>,
    /// Inverse of `cov2d`.
    pub conic: Matrix2<f64>,
    pub depth: f64,
    /// Colour after clamping to `>= 0`.
    pub color: Vector3<f64>,
    pub alpha: f64,
    pub source_index: usize,
    /// Half-width of the square support, in pixels.
    pub radius: f64,
}

impl Splat2D {
    /// Inclusive pixel index range along one axis covered by the support.
    fn pixel_span(center: f64, radius: f64, len: usize) -> Option<(usize, usize)> {
        // Pixel k has its centre at k + 0.5.
        let lo = (center - radius - 0.5).ceil().max(0.0);
        let hi = (center + radius - 0.5).floor().min(len as f64 - 1.0);
        (lo <= hi).then_some((lo as usize, hi as usize))
    }

    pub fn x_span(&self, width: usize) -> Option<(usize, usize)> {
        Self::pixel_span(self.mean_px.x, self.radius, width)
    }

    pub fn y_span(&self, height: usize) -> Option<(usize, usize)> {
        Self::pixel_span(self.mean_px.y, self.radius, height)
    }
}

/// Gradients of a scalar loss with respect to every primitive parameter,
/// stored as flattened rows matching [`crate::gaussian::PrimitiveSet::to_rows`].
#[derive(Clone, Debug, PartialEq)]
pub struct RenderGradients {
    pub sh_degree: usize,
    pub rows: Vec<f64>,
    /// `|dL/d mean_px|` per primitive (zero when culled), used for densification.
    pub mean2d_norm: Vec<f64>,
    pub visible: Vec<bool>,
}

impl RenderGradients {
    pub fn zeros(n: usize, sh_degree: usize) -> Self {
        Self {
            sh_degree,
            rows: vec![0.0; n * RowLayout::new(sh_degree).dim()],
            mean2d_norm: vec![0.0; n],
            visible: vec![false; n],
        }
    }

    pub fn len(&self) -> usize {
        self.visible.len()
    }

    pub fn is_empty(&self) -> bool {
        self.visible.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let d = RowLayout::new(self.sh_degree).dim();
        &self.rows[i * d..(i + 1) * d]
    }

    pub fn group(&self, i: usize, group: ParamGroup) -> &[f64] {
        &self.row(i)[RowLayout::new(self.sh_degree).columns(group)]
    }
}
