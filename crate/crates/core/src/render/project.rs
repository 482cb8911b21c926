use nalgebra::{Matrix2, Matrix2x3, Matrix3, Vector2, Vector3};
use rayon::prelude::*;

use super::{RenderOptions, Splat2D};
use crate::camera::Camera;
use crate::error::{Error, Result};
use crate::gaussian::{rotation_matrix, GaussianPrimitive, PrimitiveSet};
use crate::sh;

/// Intermediate values of one projection, kept for the backward pass.
pub(super) struct Projected {
    pub splat: Splat2D,
    pub t_cam: Vector3<f64>,
    pub jac: Matrix2x3<f64>,
    /// Covariance in camera space, `W Sigma W^T`.
    pub cov_cam: Matrix3<f64>,
    pub rot: Matrix3<f64>,
    pub scales: Vector3<f64>,
    /// Unclamped SH colour.
    pub raw_color: Vector3<f64>,
    /// Unnormalized view direction `p - camera_centre`.
    pub view_vec: Vector3<f64>,
}

pub(super) fn project_one(
    p: &GaussianPrimitive,
    index: usize,
    cam: &Camera,
    opts: &RenderOptions,
) -> Result<Option<Projected>> {
    if !p.is_finite() {
        return Err(Error::NonFinite { index });
    }
    let w = cam.rotation();
    let t = w * p.position + cam.translation();
    if t.z <= cam.near_clip {
        return Ok(None);
    }
    let lim_x = opts.frustum_margin * cam.cx.max(cam.width as f64 - cam.cx) / cam.fx;
    let lim_y = opts.frustum_margin * cam.cy.max(cam.height as f64 - cam.cy) / cam.fy;
    if (t.x / t.z).abs() > lim_x || (t.y / t.z).abs() > lim_y {
        return Ok(None);
    }

    let rot = rotation_matrix(p.rotation)?;
    let scales = p.scales();
    let l = rot * Matrix3::from_diagonal(&scales);
    let cov_world = l * l.transpose();
    let cov_cam = w * cov_world * w.transpose();

    let inv_z = 1.0 / t.z;
    let jac = Matrix2x3::new(
        cam.fx * inv_z,
        0.0,
        -cam.fx * t.x * inv_z * inv_z,
        0.0,
        cam.fy * inv_z,
        -cam.fy * t.y * inv_z * inv_z,
    );
    let mut cov2d: Matrix2<f64> = jac * cov_cam * jac.transpose();
    cov2d[(0, 0)] += opts.low_pass;
    cov2d[(1, 1)] += opts.low_pass;
    // Exact symmetry keeps the inverse symmetric too.
    let off = 0.5 * (cov2d[(0, 1)] + cov2d[(1, 0)]);
    cov2d[(0, 1)] = off;
    cov2d[(1, 0)] = off;
    let det = cov2d.determinant();
    if !(det > 0.0) || !det.is_finite() {
        return Ok(None);
    }
    let conic = Matrix2::new(cov2d[(1, 1)], -off, -off, cov2d[(0, 0)]) / det;

    let mid = 0.5 * (cov2d[(0, 0)] + cov2d[(1, 1)]);
    let lambda_max = mid + (mid * mid - det).max(0.0).sqrt();
    let radius = opts.extent_sigma * lambda_max.sqrt();
    let mean_px = Vector2::new(cam.fx * t.x * inv_z + cam.cx, cam.fy * t.y * inv_z + cam.cy);

    let view_vec = p.position - cam.center();
    let dir = view_vec / view_vec.norm().max(1e-300);
    let raw_color = sh::eval_color(&p.sh_coeffs, p.sh_degree(), &dir);

    let splat = Splat2D {
        mean_px,
        cov2d,
        conic,
        depth: t.z,
        color: raw_color.map(|c| c.max(0.0)),
        alpha: p.opacity(),
        source_index: index,
        radius,
    };
    if splat.x_span(cam.width).is_none() || splat.y_span(cam.height).is_none() {
        return Ok(None);
    }
    Ok(Some(Projected {
        splat,
        t_cam: t,
        jac,
        cov_cam,
        rot,
        scales,
        raw_color,
        view_vec,
    }))
}

pub(super) fn project_all(set: &PrimitiveSet, cam: &Camera, opts: &RenderOptions) -> Result<Vec<Projected>> {
    cam.validate()?;
    let projected: Vec<Option<Projected>> = set
        .primitives
        .par_iter()
        .enumerate()
        .map(|(i, p)| project_one(p, i, cam, opts))
        .collect::<Result<_>>()?;
    let mut out: Vec<Projected> = projected.into_iter().flatten().collect();
    // Canonical order: depth, then source index.
    out.sort_by(|a, b| {
        a.splat
            .depth
            .total_cmp(&b.splat.depth)
            .then(a.splat.source_index.cmp(&b.splat.source_index))
    });
    Ok(out)
}

/// Projects and culls every primitive, returning splats in front-to-back order.
pub fn project(set: &PrimitiveSet, cam: &Camera, opts: &RenderOptions) -> Result<Vec<Splat2D>> {
    Ok(project_all(set, cam, opts)?.into_iter().map(|p| p.splat).collect())
}
