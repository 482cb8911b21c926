//! Desk-scale synthetic scenes: random ground-truth primitives viewed by a
//! ring of cameras, with "SfM points" taken as jittered primitive centres.

use nalgebra::{UnitQuaternion, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::camera::Camera;
use crate::error::{Error, Result};
use crate::gaussian::{logit, sh_coeff_count, GaussianPrimitive, PrimitiveSet};
use crate::io::SceneBundle;
use crate::render::{render_image, RenderOptions};
use crate::sh::rgb_to_dc;

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticSpec {
    pub primitives: usize,
    /// Primitive centres lie in a ball of this radius around the origin.
    pub radius: f64,
    /// Per-axis scale range (world units).
    pub scale_range: (f64, f64),
    pub opacity_range: (f64, f64),
    pub sh_degree: usize,
    pub views: usize,
    pub width: usize,
    pub height: usize,
    pub camera_distance: f64,
    /// Elevation of the ring views alternates between +/- this angle.
    pub elevation: f64,
    pub fov_x: f64,
    pub holdout_fraction: f64,
    pub sfm_points: usize,
    pub sfm_noise: f64,
    pub background: Vector3<f64>,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            primitives: 500,
            radius: 0.5,
            scale_range: (0.03, 0.09),
            opacity_range: (0.5, 0.95),
            sh_degree: 0,
            views: 20,
            width: 64,
            height: 64,
            camera_distance: 2.2,
            elevation: 0.35,
            fov_x: 0.8,
            holdout_fraction: 0.1,
            sfm_points: 300,
            sfm_noise: 0.01,
            background: Vector3::zeros(),
        }
    }
}

/// A random, well-conditioned primitive: unit-ball position, log-scales in
/// `[-4, -1]`, opacity in `(0.05, 0.95)`, SH coefficients in `[-0.5, 0.5]`.
pub fn random_primitive(sh_degree: usize, rng: &mut impl Rng) -> GaussianPrimitive {
    let mut q = [0.0; 4];
    for v in &mut q {
        *v = rng.random_range(-1.0..1.0);
    }
    if q.iter().all(|v: &f64| v.abs() < 1e-3) {
        q[0] = 1.0;
    }
    GaussianPrimitive {
        position: Vector3::from_fn(|_, _| rng.random_range(-1.0..1.0)),
        rotation: q,
        log_scale: Vector3::from_fn(|_, _| rng.random_range(-4.0..-1.0)),
        opacity_raw: logit(rng.random_range(0.05..0.95)),
        sh_coeffs: (0..sh_coeff_count(sh_degree))
            .map(|_| Vector3::from_fn(|_, _| rng.random_range(-0.5..0.5)))
            .collect(),
    }
}

pub fn random_set(n: usize, sh_degree: usize, rng: &mut impl Rng) -> PrimitiveSet {
    PrimitiveSet {
        primitives: (0..n).map(|_| random_primitive(sh_degree, rng)).collect(),
        sh_degree,
    }
}

fn ground_truth(spec: &SyntheticSpec, rng: &mut ChaCha8Rng) -> PrimitiveSet {
    let (s0, s1) = (spec.scale_range.0.ln(), spec.scale_range.1.ln());
    let primitives = (0..spec.primitives)
        .map(|_| {
            // Uniform in the ball by rejection.
            let position = loop {
                let p = Vector3::from_fn(|_, _| rng.random_range(-1.0..1.0));
                if p.norm_squared() <= 1.0 {
                    break p * spec.radius;
                }
            };
            let axis = Vector3::from_fn(|_, _| rng.random_range(-1.0..1.0));
            let rot = UnitQuaternion::from_scaled_axis(axis * std::f64::consts::PI);
            let rgb = Vector3::from_fn(|_, _| rng.random_range(0.1..0.9));
            let mut sh_coeffs = vec![Vector3::zeros(); sh_coeff_count(spec.sh_degree)];
            sh_coeffs[0] = rgb_to_dc(rgb);
            for c in sh_coeffs.iter_mut().skip(1) {
                *c = Vector3::from_fn(|_, _| rng.random_range(-0.1..0.1));
            }
            GaussianPrimitive {
                position,
                rotation: [rot.w, rot.i, rot.j, rot.k],
                log_scale: Vector3::from_fn(|_, _| rng.random_range(s0..s1)),
                opacity_raw: logit(rng.random_range(spec.opacity_range.0..spec.opacity_range.1)),
                sh_coeffs,
            }
        })
        .collect();
    PrimitiveSet {
        primitives,
        sh_degree: spec.sh_degree,
    }
}

/// Evenly spaced holdout views, `round(fraction * views)` of them.
fn holdout_views(views: usize, fraction: f64) -> Vec<usize> {
    let h = ((fraction * views as f64).round() as usize).min(views.saturating_sub(1));
    (0..h).map(|k| ((2 * k + 1) * views) / (2 * h)).collect()
}

/// Ground-truth primitives and a rendered scene bundle, deterministic in
/// `seed`.
pub fn generate_synthetic_scene(spec: &SyntheticSpec, seed: u64) -> Result<(PrimitiveSet, SceneBundle)> {
    if spec.primitives == 0 || spec.views == 0 {
        return Err(Error::InvalidArgument("synthetic scene needs primitives and views".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let gt = ground_truth(spec, &mut rng);

    let cameras = (0..spec.views)
        .map(|i| {
            let az = std::f64::consts::TAU * i as f64 / spec.views as f64;
            let el = if i % 2 == 0 { spec.elevation } else { -0.5 * spec.elevation };
            let eye = spec.camera_distance * Vector3::new(el.cos() * az.cos(), el.cos() * az.sin(), el.sin());
            Camera::look_at(eye, Vector3::zeros(), Vector3::z(), spec.width, spec.height, spec.fov_x)
        })
        .collect::<Result<Vec<_>>>()?;
    let opts = RenderOptions {
        background: spec.background,
        ..RenderOptions::default()
    };
    let images = cameras
        .iter()
        .map(|c| render_image(&gt, c, &opts))
        .collect::<Result<Vec<_>>>()?;

    let holdout = holdout_views(spec.views, spec.holdout_fraction);
    let train = (0..spec.views).filter(|v| !holdout.contains(v)).collect();

    let noise = Normal::new(0.0, spec.sfm_noise.max(0.0)).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let picks: Vec<usize> = if spec.sfm_points <= gt.len() {
        rand::seq::index::sample(&mut rng, gt.len(), spec.sfm_points).into_vec()
    } else {
        (0..spec.sfm_points).map(|_| rng.random_range(0..gt.len())).collect()
    };
    let mut sfm_points = Vec::with_capacity(picks.len());
    let mut sfm_colors = Vec::with_capacity(picks.len());
    for i in picks {
        let p = &gt.primitives[i];
        sfm_points.push(p.position + Vector3::from_fn(|_, _| noise.sample(&mut rng)));
        sfm_colors.push(crate::sh::dc_to_rgb(p.sh_coeffs[0]).map(|c| c.clamp(0.0, 1.0)));
    }

    let bundle = SceneBundle {
        cameras,
        images,
        sfm_points,
        sfm_colors: Some(sfm_colors),
        train,
        holdout,
        background: spec.background,
    };
    bundle.validate()?;
    Ok((gt, bundle))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_primitive_single_view() {
        let spec = SyntheticSpec {
            primitives: 1,
            views: 1,
            width: 32,
            height: 32,
            sfm_points: 1,
            holdout_fraction: 0.0,
            ..Default::default()
        };
        let (gt, bundle) = generate_synthetic_scene(&spec, 0).unwrap();
        assert_eq!(gt.len(), 1);
        let img = &bundle.images[0];
        let lit: Vec<(usize, usize)> = (0..32)
            .flat_map(|y| (0..32).map(move |x| (x, y)))
            .filter(|&(x, y)| img.pixel(x, y).max() > 1e-3)
            .collect();
        assert!(!lit.is_empty());
        assert!(lit.len() < 32 * 32 / 2, "footprint should be localized: {}", lit.len());
    }

    #[test]
    fn holdout_split() {
        let (_, bundle) = generate_synthetic_scene(
            &SyntheticSpec {
                primitives: 10,
                width: 16,
                height: 16,
                sfm_points: 5,
                ..Default::default()
            },
            1,
        )
        .unwrap();
        assert_eq!(bundle.holdout.len(), 2);
        assert_eq!(bundle.train.len(), 18);
        assert_eq!(holdout_views(10, 0.5), vec![1, 3, 5, 7, 9]);
    }

    #[test]
    fn deterministic_in_seed() {
        let spec = SyntheticSpec {
            primitives: 30,
            views: 3,
            width: 16,
            height: 16,
            sfm_points: 40,
            ..Default::default()
        };
        let a = generate_synthetic_scene(&spec, 9).unwrap();
        let b = generate_synthetic_scene(&spec, 9).unwrap();
        assert_eq!(a, b);
        let c = generate_synthetic_scene(&spec, 10).unwrap();
        assert_ne!(a.0, c.0);
    }
}
