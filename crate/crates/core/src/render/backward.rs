use nalgebra::{Matrix2, Matrix2x3, Matrix3, Vector3};
use rayon::prelude::*;

use super::forward::{composite_pixel, row_lists, x_spans, Contribution};
use super::project::{project_all, Projected};
use super::{RenderGradients, RenderOptions, Splat2D};
use crate::camera::Camera;
use crate::error::{Error, Result};
use crate::gaussian::{PrimitiveSet, RowLayout};
use crate::image::Image;
use crate::sh;

/// Row bands processed independently. Fixed so that the reduction order, and
/// hence the floating-point result, does not depend on the thread count.
const BANDS: usize = 16;

/// Screen-space gradient of one splat: mean (2), conic entries a, b, c (3),
/// colour (3), opacity (1).
#[derive(Clone, Copy, Default)]
struct SplatGrad {
    mean: [f64; 2],
    conic: [f64; 3],
    color: [f64; 3],
    alpha: f64,
}

impl SplatGrad {
    fn add(&mut self, o: &SplatGrad) {
        self.mean[0] += o.mean[0];
        self.mean[1] += o.mean[1];
        for k in 0..3 {
            self.conic[k] += o.conic[k];
            self.color[k] += o.color[k];
        }
        self.alpha += o.alpha;
    }
}

/// Gradient of a scalar loss with respect to every primitive parameter, given
/// `d_pixels = dL/d(rendered pixels)`.
pub fn render_backward(
    set: &PrimitiveSet,
    cam: &Camera,
    d_pixels: &Image,
    opts: &RenderOptions,
) -> Result<RenderGradients> {
    if d_pixels.width != cam.width || d_pixels.height != cam.height {
        return Err(Error::shape(
            format!("{}x{} gradient image", cam.width, cam.height),
            format!("{}x{}", d_pixels.width, d_pixels.height),
        ));
    }
    let projected = project_all(set, cam, opts)?;
    let splats: Vec<Splat2D> = projected.iter().map(|p| p.splat.clone()).collect();
    let screen = screen_space_grads(&splats, cam, d_pixels, opts);

    let layout = set.layout();
    let d = layout.dim();
    let mut out = RenderGradients::zeros(set.len(), set.sh_degree);
    for (proj, g) in projected.iter().zip(&screen) {
        let i = proj.splat.source_index;
        out.visible[i] = true;
        out.mean2d_norm[i] = (g.mean[0] * g.mean[0] + g.mean[1] * g.mean[1]).sqrt();
        let row = &mut out.rows[i * d..(i + 1) * d];
        primitive_grad(&set.primitives[i], proj, g, cam, row);
    }
    Ok(out)
}

fn screen_space_grads(splats: &[Splat2D], cam: &Camera, d_pixels: &Image, opts: &RenderOptions) -> Vec<SplatGrad> {
    let (w, h) = (cam.width, cam.height);
    let rows = row_lists(splats, w, h);
    let spans = x_spans(splats, w);
    let band_rows = h.div_ceil(BANDS);
    let partials: Vec<Vec<SplatGrad>> = (0..h.div_ceil(band_rows))
        .into_par_iter()
        .map(|band| {
            let mut acc = vec![SplatGrad::default(); splats.len()];
            let mut contribs: Vec<Contribution> = Vec::new();
            let y_end = ((band + 1) * band_rows).min(h);
            for y in band * band_rows..y_end {
                for x in 0..w {
                    let dc = d_pixels.pixel(x, y);
                    if dc == Vector3::zeros() {
                        continue;
                    }
                    contribs.clear();
                    composite_pixel(splats, &spans, &rows[y], x, y, opts, |c| contribs.push(c));
                    // Reverse scan of C = sum_i c_i a_i T_i + T_n bg; g_t holds dL/dT_{i+1}.
                    let mut g_t = dc.dot(&opts.background);
                    for c in contribs.iter().rev() {
                        let s = &splats[c.splat as usize];
                        let g = &mut acc[c.splat as usize];
                        let dc_dot_col = dc.dot(&s.color);
                        let w_color = c.a * c.t;
                        g.color[0] += dc.x * w_color;
                        g.color[1] += dc.y * w_color;
                        g.color[2] += dc.z * w_color;
                        let d_a = c.t * dc_dot_col - c.t * g_t;
                        g_t = c.a * dc_dot_col + (1.0 - c.a) * g_t;
                        if c.clamped {
                            continue;
                        }
                        g.alpha += d_a * c.falloff;
                        let d_power = d_a * s.alpha * c.falloff;
                        let cn = &s.conic;
                        g.mean[0] += d_power * (cn[(0, 0)] * c.dx + cn[(0, 1)] * c.dy);
                        g.mean[1] += d_power * (cn[(0, 1)] * c.dx + cn[(1, 1)] * c.dy);
                        g.conic[0] += d_power * (-0.5 * c.dx * c.dx);
                        g.conic[1] += d_power * (-c.dx * c.dy);
                        g.conic[2] += d_power * (-0.5 * c.dy * c.dy);
                    }
                }
            }
            acc
        })
        .collect();
    let mut total = vec![SplatGrad::default(); splats.len()];
    for part in &partials {
        for (t, p) in total.iter_mut().zip(part) {
            t.add(p);
        }
    }
    total
}

/// Chains a screen-space gradient back to the primitive's raw parameters.
fn primitive_grad(
    p: &crate::gaussian::GaussianPrimitive,
    proj: &Projected,
    g: &SplatGrad,
    cam: &Camera,
    row: &mut [f64],
) {
    let splat = &proj.splat;
    let layout = RowLayout::new(p.sh_degree());
    let mut d_pos = Vector3::zeros();

    // Opacity through the sigmoid.
    let a = splat.alpha;
    row[RowLayout::OPACITY] = g.alpha * a * (1.0 - a);

    // Colour: clamp mask, then SH coefficients and view direction.
    let d_raw = Vector3::new(
        if proj.raw_color.x >= 0.0 { g.color[0] } else { 0.0 },
        if proj.raw_color.y >= 0.0 { g.color[1] } else { 0.0 },
        if proj.raw_color.z >= 0.0 { g.color[2] } else { 0.0 },
    );
    let n_coeffs = p.sh_coeffs.len();
    let vnorm = proj.view_vec.norm().max(1e-300);
    let dir = proj.view_vec / vnorm;
    let mut basis = [0.0; 16];
    let mut basis_grad = [Vector3::zeros(); 16];
    sh::basis_with_grad(p.sh_degree(), &dir, &mut basis, &mut basis_grad);
    let sh_cols = &mut row[layout.sh()];
    let mut d_dir = Vector3::zeros();
    for k in 0..n_coeffs {
        sh_cols[3 * k] = basis[k] * d_raw.x;
        sh_cols[3 * k + 1] = basis[k] * d_raw.y;
        sh_cols[3 * k + 2] = basis[k] * d_raw.z;
        d_dir += basis_grad[k] * d_raw.dot(&p.sh_coeffs[k]);
    }
    d_pos += (d_dir - dir * dir.dot(&d_dir)) / vnorm;

    // Conic -> 2D covariance: d(S^-1) = -S^-1 dS S^-1.
    let conic = splat.conic;
    let g_conic = Matrix2::new(g.conic[0], 0.5 * g.conic[1], 0.5 * g.conic[1], g.conic[2]);
    let g_cov2d = -(conic * g_conic * conic);

    // cov2d = J M J^T + low_pass I.
    let jac: &Matrix2x3<f64> = &proj.jac;
    let m = &proj.cov_cam;
    let g_m: Matrix3<f64> = jac.transpose() * g_cov2d * jac;
    let g_jac: Matrix2x3<f64> = 2.0 * g_cov2d * jac * m;

    // M = W Sigma W^T, Sigma = L L^T, L = R S.
    let w = cam.rotation();
    let g_sigma = w.transpose() * g_m * w;
    let s = Matrix3::from_diagonal(&proj.scales);
    let l = proj.rot * s;
    let g_l = 2.0 * g_sigma * l;
    let g_rot = g_l * s;
    let g_s = proj.rot.transpose() * g_l;
    for k in 0..3 {
        row[RowLayout::LOG_SCALE.start + k] = g_s[(k, k)] * proj.scales[k];
    }
    let d_q = quaternion_grad(p.rotation, &g_rot);
    row[RowLayout::ROTATION].copy_from_slice(&d_q);

    // Jacobian and mean depend on the camera-space position.
    let t = proj.t_cam;
    let (fx, fy) = (cam.fx, cam.fy);
    let iz = 1.0 / t.z;
    let iz2 = iz * iz;
    let iz3 = iz2 * iz;
    let mut d_t = Vector3::new(
        g_jac[(0, 2)] * (-fx * iz2),
        g_jac[(1, 2)] * (-fy * iz2),
        g_jac[(0, 0)] * (-fx * iz2)
            + g_jac[(0, 2)] * (2.0 * fx * t.x * iz3)
            + g_jac[(1, 1)] * (-fy * iz2)
            + g_jac[(1, 2)] * (2.0 * fy * t.y * iz3),
    );
    d_t.x += g.mean[0] * fx * iz;
    d_t.y += g.mean[1] * fy * iz;
    d_t.z -= g.mean[0] * fx * t.x * iz2 + g.mean[1] * fy * t.y * iz2;
    d_pos += w.transpose() * d_t;
    row[RowLayout::POSITION].copy_from_slice(d_pos.as_slice());
}

/// Gradient with respect to the raw quaternion `(w, x, y, z)` of a loss whose
/// gradient with respect to the rotation matrix is `g`.
fn quaternion_grad(q: [f64; 4], g: &Matrix3<f64>) -> [f64; 4] {
    let norm = (q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3]).sqrt();
    let [w, x, y, z] = q.map(|v| v / norm);
    let gw = 2.0 * (-z * g[(0, 1)] + y * g[(0, 2)] + z * g[(1, 0)] - x * g[(1, 2)] - y * g[(2, 0)] + x * g[(2, 1)]);
    let gx = 2.0
        * (y * g[(0, 1)] + z * g[(0, 2)] + y * g[(1, 0)] - 2.0 * x * g[(1, 1)] - w * g[(1, 2)] + z * g[(2, 0)]
            + w * g[(2, 1)]
            - 2.0 * x * g[(2, 2)]);
    let gy = 2.0
        * (-2.0 * y * g[(0, 0)] + x * g[(0, 1)] + w * g[(0, 2)] + x * g[(1, 0)] + z * g[(1, 2)] - w * g[(2, 0)]
            + z * g[(2, 1)]
            - 2.0 * y * g[(2, 2)]);
    let gz = 2.0
        * (-2.0 * z * g[(0, 0)] - w * g[(0, 1)] + x * g[(0, 2)] + w * g[(1, 0)] - 2.0 * z * g[(1, 1)]
            + y * g[(1, 2)]
            + x * g[(2, 0)]
            + y * g[(2, 1)]);
    // Through the normalization q / |q|.
    let gn = [gw, gx, gy, gz];
    let qn = [w, x, y, z];
    let dot: f64 = gn.iter().zip(&qn).map(|(a, b)| a * b).sum();
    [0, 1, 2, 3].map(|k| (gn[k] - qn[k] * dot) / norm)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gaussian::rotation_matrix;

    #[test]
    fn quaternion_gradient_matches_finite_differences() {
        let q = [0.8, -0.3, 0.5, 0.2];
        let g = Matrix3::new(0.3, -1.0, 0.2, 0.7, 0.1, -0.4, 0.5, 0.9, -0.6);
        let f = |q: [f64; 4]| rotation_matrix(q).unwrap().component_mul(&g).sum();
        let an = quaternion_grad(q, &g);
        let h = 1e-6;
        for k in 0..4 {
            let mut qp = q;
            qp[k] += h;
            let mut qm = q;
            qm[k] -= h;
            let fd = (f(qp) - f(qm)) / (2.0 * h);
            assert!((fd - an[k]).abs() < 1e-8, "k={k}: {fd} vs {}", an[k]);
        }
    }
}
