//! Real spherical harmonics up to degree 3.
//!
//! Uses the basis and sign convention of the reference 3DGS implementation so
//! PLY files interoperate with community viewers. Colour is
//! `0.5 + sum_k Y_k(dir) * coeff_k` per channel.

use nalgebra::Vector3;

use crate::gaussian::{sh_coeff_count, GaussianPrimitive};

pub const SH_C0: f64 = 0.282_094_791_773_878_14;
pub const SH_C1: f64 = 0.488_602_511_902_919_9;
pub const SH_C2: [f64; 5] = [
    1.092_548_430_592_079_2,
    -1.092_548_430_592_079_2,
    0.315_391_565_252_520_05,
    -1.092_548_430_592_079_2,
    0.546_274_215_296_039_6,
];
pub const SH_C3: [f64; 7] = [
    -0.590_043_589_926_643_5,
    2.890_611_442_640_554,
    -0.457_045_799_464_465_8,
    0.373_176_332_590_115_4,
    -0.457_045_799_464_465_8,
    1.445_305_721_320_277,
    -0.590_043_589_926_643_5,
];

pub fn rgb_to_dc(rgb: Vector3<f64>) -> Vector3<f64> {
    (rgb - Vector3::repeat(0.5)) / SH_C0
}

pub fn dc_to_rgb(dc: Vector3<f64>) -> Vector3<f64> {
    dc * SH_C0 + Vector3::repeat(0.5)
}

/// Basis values `Y_k(d)` for `k < (L+1)^2`, written into `out`.
pub fn basis(sh_degree: usize, d: &Vector3<f64>, out: &mut [f64]) {
    basis_impl(sh_degree, d, out, None);
}

/// Basis values and their partials with respect to the (unnormalized)
/// direction components.
pub fn basis_with_grad(sh_degree: usize, d: &Vector3<f64>, out: &mut [f64], grad: &mut [Vector3<f64>]) {
    basis_impl(sh_degree, d, out, Some(grad));
}

fn basis_impl(sh_degree: usize, d: &Vector3<f64>, out: &mut [f64], mut grad: Option<&mut [Vector3<f64>]>) {
    let n = sh_coeff_count(sh_degree);
    debug_assert!(out.len() >= n);
    let (x, y, z) = (d.x, d.y, d.z);
    let mut set = |k: usize, v: f64, g: [f64; 3]| {
        out[k] = v;
        if let Some(gr) = grad.as_deref_mut() {
            gr[k] = Vector3::from(g);
        }
    };
    set(0, SH_C0, [0.0; 3]);
    if sh_degree < 1 {
        return;
    }
    set(1, -SH_C1 * y, [0.0, -SH_C1, 0.0]);
    set(2, SH_C1 * z, [0.0, 0.0, SH_C1]);
    set(3, -SH_C1 * x, [-SH_C1, 0.0, 0.0]);
    if sh_degree < 2 {
        return;
    }
    let (xx, yy, zz) = (x * x, y * y, z * z);
    let c = SH_C2;
    set(4, c[0] * x * y, [c[0] * y, c[0] * x, 0.0]);
    set(5, c[1] * y * z, [0.0, c[1] * z, c[1] * y]);
    set(6, c[2] * (2.0 * zz - xx - yy), [-2.0 * c[2] * x, -2.0 * c[2] * y, 4.0 * c[2] * z]);
    set(7, c[3] * x * z, [c[3] * z, 0.0, c[3] * x]);
    set(8, c[4] * (xx - yy), [2.0 * c[4] * x, -2.0 * c[4] * y, 0.0]);
    if sh_degree < 3 {
        return;
    }
    let c = SH_C3;
    set(
        9,
        c[0] * y * (3.0 * xx - yy),
        [6.0 * c[0] * x * y, c[0] * (3.0 * xx - 3.0 * yy), 0.0],
    );
    set(10, c[1] * x * y * z, [c[1] * y * z, c[1] * x * z, c[1] * x * y]);
    set(
        11,
        c[2] * y * (4.0 * zz - xx - yy),
        [-2.0 * c[2] * x * y, c[2] * (4.0 * zz - xx - 3.0 * yy), 8.0 * c[2] * y * z],
    );
    set(
        12,
        c[3] * z * (2.0 * zz - 3.0 * xx - 3.0 * yy),
        [-6.0 * c[3] * x * z, -6.0 * c[3] * y * z, c[3] * (6.0 * zz - 3.0 * xx - 3.0 * yy)],
    );
    set(
        13,
        c[4] * x * (4.0 * zz - xx - yy),
        [c[4] * (4.0 * zz - 3.0 * xx - yy), -2.0 * c[4] * x * y, 8.0 * c[4] * x * z],
    );
    set(14, c[5] * z * (xx - yy), [2.0 * c[5] * x * z, -2.0 * c[5] * y * z, c[5] * (xx - yy)]);
    set(
        15,
        c[6] * x * (xx - 3.0 * yy),
        [c[6] * (3.0 * xx - 3.0 * yy), -6.0 * c[6] * x * y, 0.0],
    );
}

/// Unclamped SH colour `0.5 + sum_k Y_k(dir) c_k`.
pub fn eval_color(sh_coeffs: &[Vector3<f64>], sh_degree: usize, dir: &Vector3<f64>) -> Vector3<f64> {
    let mut y = [0.0; 16];
    basis(sh_degree, dir, &mut y);
    sh_coeffs
        .iter()
        .zip(&y)
        .fold(Vector3::repeat(0.5), |acc, (c, yk)| acc + c * *yk)
}

/// View-dependent colour of a primitive seen along unit direction `view_dir`.
///
/// The result is not clamped; the renderer clamps each channel to `>= 0`.
pub fn evaluate_sh_color(p: &GaussianPrimitive, view_dir: &Vector3<f64>) -> Vector3<f64> {
    eval_color(&p.sh_coeffs, p.sh_degree(), view_dir)
}
