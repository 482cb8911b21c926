use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::gaussian::{GaussianPrimitive, PrimitiveSet};

/// Initial primitives from SfM points: isotropic, scale from the mean squared
/// distance to the three nearest neighbours, opacity 0.1, DC colour from the
/// point colour (grey when absent).
pub fn init_from_sfm(points: &[Vector3<f64>], colors: Option<&[Vector3<f64>]>, sh_degree: usize) -> Result<PrimitiveSet> {
    if points.is_empty() {
        return Err(Error::InvalidArgument("no SfM points to initialise from".into()));
    }
    let primitives = points
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let mut nearest = [f64::INFINITY; 3];
            for (j, q) in points.iter().enumerate() {
                if i == j {
                    continue;
                }
                let d2 = (p - q).norm_squared();
                if d2 < nearest[2] {
                    nearest[2] = d2;
                    nearest.sort_by(f64::total_cmp);
                }
            }
            let finite: Vec<f64> = nearest.into_iter().filter(|d| d.is_finite()).collect();
            let mean_d2 = if finite.is_empty() {
                1e-2
            } else {
                finite.iter().sum::<f64>() / finite.len() as f64
            };
            let scale = mean_d2.max(1e-7).sqrt();
            let rgb = colors.map_or(Vector3::repeat(0.5), |c| c[i]);
            GaussianPrimitive::isotropic(*p, scale, 0.1, rgb, sh_degree)
        })
        .collect();
    PrimitiveSet::new(primitives, sh_degree)
}
