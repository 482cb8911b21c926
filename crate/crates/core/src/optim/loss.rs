use crate::error::{Error, Result};
use crate::image::Image;
use crate::metrics::ssim;

/// Image terms of the training loss and the gradient of their weighted sum
/// with respect to the rendered image.
#[derive(Clone, Debug)]
pub struct LossTerms {
    /// Mean absolute error over all pixels and channels.
    pub l1: f64,
    /// `1 - SSIM`.
    pub dssim: f64,
    /// `(1 - lambda) * l1 + lambda * dssim`.
    pub image: f64,
    pub grad: Image,
}

impl LossTerms {
    /// Full objective with the clustering term added.
    pub fn total(&self, lambda_c: f64, l_c: f64) -> f64 {
        self.image + lambda_c * l_c
    }
}

/// `(1 - lambda) L1 + lambda (1 - SSIM)` between ground truth and render.
pub fn image_loss(truth: &Image, rendered: &Image, lambda: f64) -> Result<LossTerms> {
    truth.check_same_shape(rendered)?;
    if !truth.is_finite() || !rendered.is_finite() {
        return Err(Error::InvalidArgument("non-finite pixel in loss input".into()));
    }
    let n = rendered.data.len() as f64;
    let mut grad = Image::new(rendered.width, rendered.height);
    let mut l1 = 0.0;
    for ((g, r), t) in grad.data.iter_mut().zip(&rendered.data).zip(&truth.data) {
        let diff = r - t;
        l1 += diff.abs();
        *g = (1.0 - lambda) * diff.signum() * f64::from(diff != 0.0) / n;
    }
    l1 /= n;
    let mut dssim = 0.0;
    if lambda > 0.0 {
        let s = ssim(truth, rendered)?;
        dssim = 1.0 - s.value;
        for (g, sg) in grad.data.iter_mut().zip(&s.grad.data) {
            *g -= lambda * sg;
        }
    }
    Ok(LossTerms {
        l1,
        dssim,
        image: (1.0 - lambda) * l1 + lambda * dssim,
        grad,
    })
}
