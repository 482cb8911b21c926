//! Image quality metrics: PSNR and SSIM (with analytic gradient).

use serde::Serialize;

use crate::error::{Error, Result};
use crate::image::Image;

/// PSNR reported for identical images.
pub const PSNR_CAP: f64 = 100.0;

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_C1: f64 = 0.01 * 0.01;
pub const SSIM_C2: f64 = 0.03 * 0.03;

/// Peak-1 PSNR in dB, capped at [`PSNR_CAP`].
pub fn psnr(a: &Image, b: &Image) -> Result<f64> {
    a.check_same_shape(b)?;
    let mse = mse(a, b);
    if mse <= 0.0 {
        return Ok(PSNR_CAP);
    }
    Ok((10.0 * (1.0 / mse).log10()).min(PSNR_CAP))
}

pub fn mse(a: &Image, b: &Image) -> f64 {
    let n = a.data.len().max(1) as f64;
    a.data.iter().zip(&b.data).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / n
}

#[derive(Clone, Debug)]
pub struct SsimOutput {
    pub value: f64,
    /// d SSIM / d b, same layout as the images.
    pub grad: Image,
}

fn gaussian_window() -> [f64; SSIM_WINDOW] {
    let mut w = [0.0; SSIM_WINDOW];
    let c = (SSIM_WINDOW / 2) as f64;
    for (i, v) in w.iter_mut().enumerate() {
        let x = i as f64 - c;
        *v = (-x * x / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
    }
    let s: f64 = w.iter().sum();
    w.map(|v| v / s)
}

/// Separable "valid" filtering of an `h x w` plane.
fn filter_valid(src: &[f64], w: usize, h: usize, k: &[f64; SSIM_WINDOW]) -> Vec<f64> {
    let ow = w - SSIM_WINDOW + 1;
    let oh = h - SSIM_WINDOW + 1;
    let mut tmp = vec![0.0; ow * h];
    for y in 0..h {
        let row = &src[y * w..(y + 1) * w];
        for x in 0..ow {
            tmp[y * ow + x] = k.iter().zip(&row[x..x + SSIM_WINDOW]).map(|(a, b)| a * b).sum();
        }
    }
    let mut out = vec![0.0; ow * oh];
    for y in 0..oh {
        for (j, kj) in k.iter().enumerate() {
            let src_row = &tmp[(y + j) * ow..(y + j + 1) * ow];
            let dst = &mut out[y * ow..(y + 1) * ow];
            for (d, s) in dst.iter_mut().zip(src_row) {
                *d += kj * s;
            }
        }
    }
    out
}

/// Adjoint of [`filter_valid`]: scatters an output-sized plane back to `h x w`.
fn filter_valid_adjoint(g: &[f64], w: usize, h: usize, k: &[f64; SSIM_WINDOW]) -> Vec<f64> {
    let ow = w - SSIM_WINDOW + 1;
    let oh = h - SSIM_WINDOW + 1;
    let mut tmp = vec![0.0; ow * h];
    for y in 0..oh {
        let src_row = &g[y * ow..(y + 1) * ow];
        for (j, kj) in k.iter().enumerate() {
            let dst = &mut tmp[(y + j) * ow..(y + j + 1) * ow];
            for (d, s) in dst.iter_mut().zip(src_row) {
                *d += kj * s;
            }
        }
    }
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        let row = &tmp[y * ow..(y + 1) * ow];
        let dst = &mut out[y * w..(y + 1) * w];
        for (x, &v) in row.iter().enumerate() {
            for (j, kj) in k.iter().enumerate() {
                dst[x + j] += kj * v;
            }
        }
    }
    out
}

/// Mean SSIM over all valid window positions and channels, and its gradient
/// with respect to `b`.
///
/// Uses an 11x11 Gaussian window (sigma 1.5), `C1 = 0.01^2`, `C2 = 0.03^2`
/// and no padding.
pub fn ssim(a: &Image, b: &Image) -> Result<SsimOutput> {
    a.check_same_shape(b)?;
    let (w, h) = (a.width, a.height);
    if w < SSIM_WINDOW || h < SSIM_WINDOW {
        return Err(Error::ImageTooSmall {
            width: w,
            height: h,
            window: SSIM_WINDOW,
        });
    }
    let k = gaussian_window();
    let n_out = ((w - SSIM_WINDOW + 1) * (h - SSIM_WINDOW + 1)) as f64;
    let norm = 1.0 / (3.0 * n_out);
    let mut total = 0.0;
    let mut grad = Image::new(w, h);

    for c in 0..3 {
        let pa = a.channel(c);
        let pb = b.channel(c);
        let mu_a = filter_valid(&pa, w, h, &k);
        let mu_b = filter_valid(&pb, w, h, &k);
        let sq = |p: &[f64], q: &[f64]| p.iter().zip(q).map(|(x, y)| x * y).collect::<Vec<_>>();
        let e_aa = filter_valid(&sq(&pa, &pa), w, h, &k);
        let e_bb = filter_valid(&sq(&pb, &pb), w, h, &k);
        let e_ab = filter_valid(&sq(&pa, &pb), w, h, &k);

        let m = mu_a.len();
        let (mut g_mu, mut g_bb, mut g_ab) = (vec![0.0; m], vec![0.0; m], vec![0.0; m]);
        for i in 0..m {
            let (ma, mb) = (mu_a[i], mu_b[i]);
            let var_a = e_aa[i] - ma * ma;
            let var_b = e_bb[i] - mb * mb;
            let cov = e_ab[i] - ma * mb;
            let a1 = 2.0 * ma * mb + SSIM_C1;
            let a2 = 2.0 * cov + SSIM_C2;
            let b1 = ma * ma + mb * mb + SSIM_C1;
            let b2 = var_a + var_b + SSIM_C2;
            let s = a1 * a2 / (b1 * b2);
            total += s;
            // Partials w.r.t. mu_b, E[b^2] and E[ab] (var_b and cov depend on mu_b).
            let inv = 1.0 / (b1 * b2);
            g_mu[i] = norm
                * (2.0 * ma * a2 * inv - 2.0 * ma * a1 * inv - s * 2.0 * mb / b1 + s * 2.0 * mb / b2);
            g_bb[i] = norm * (-s / b2);
            g_ab[i] = norm * 2.0 * a1 * inv;
        }
        let d_mu = filter_valid_adjoint(&g_mu, w, h, &k);
        let d_bb = filter_valid_adjoint(&g_bb, w, h, &k);
        let d_ab = filter_valid_adjoint(&g_ab, w, h, &k);
        for p in 0..w * h {
            grad.data[3 * p + c] = d_mu[p] + 2.0 * pb[p] * d_bb[p] + pa[p] * d_ab[p];
        }
    }

    Ok(SsimOutput {
        value: total * norm,
        grad,
    })
}

#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct ViewMetrics {
    pub view: usize,
    pub psnr: f64,
    pub ssim: f64,
}

/// Averages over a set of views. LPIPS is not computed.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricReport {
    pub psnr: f64,
    pub ssim: f64,
    pub per_view: Vec<ViewMetrics>,
}

impl MetricReport {
    /// Evaluates rendered/ground-truth pairs tagged with their view index.
    pub fn evaluate<'a>(pairs: impl IntoIterator<Item = (usize, &'a Image, &'a Image)>) -> Result<Self> {
        let mut per_view = Vec::new();
        for (view, rendered, truth) in pairs {
            per_view.push(ViewMetrics {
                view,
                psnr: psnr(truth, rendered)?,
                ssim: ssim(truth, rendered)?.value,
            });
        }
        let n = per_view.len().max(1) as f64;
        Ok(Self {
            psnr: per_view.iter().map(|v| v.psnr).sum::<f64>() / n,
            ssim: per_view.iter().map(|v| v.ssim).sum::<f64>() / n,
            per_view,
        })
    }
}
