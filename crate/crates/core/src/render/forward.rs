use nalgebra::Vector3;
use rayon::prelude::*;

use super::project::project_all;
use super::{RenderOptions, Splat2D};
use crate::camera::Camera;
use crate::error::Result;
use crate::gaussian::PrimitiveSet;
use crate::image::Image;

#[derive(Clone, Debug, PartialEq)]
pub struct RenderedImage {
    pub pixels: Image,
    /// Transmittance left for the background, per pixel.
    pub transmittance: Vec<f64>,
}

/// One splat's contribution to one pixel.
#[derive(Clone, Copy, Debug)]
pub(super) struct Contribution {
    /// Index into the sorted splat list.
    pub splat: u32,
    pub a: f64,
    /// Unscaled Gaussian falloff `exp(power)`.
    pub falloff: f64,
    /// Transmittance in front of this splat.
    pub t: f64,
    pub clamped: bool,
    pub dx: f64,
    pub dy: f64,
}

/// For each image row, indices of the sorted splats whose support covers it.
pub(super) fn row_lists(splats: &[Splat2D], width: usize, height: usize) -> Vec<Vec<u32>> {
    let mut rows = vec![Vec::new(); height];
    for (i, s) in splats.iter().enumerate() {
        if s.x_span(width).is_none() {
            continue;
        }
        if let Some((y0, y1)) = s.y_span(height) {
            for row in &mut rows[y0..=y1] {
                row.push(i as u32);
            }
        }
    }
    rows
}

/// Composites one pixel, calling `visit` for every splat that contributes.
/// Returns the accumulated colour (without background) and the final
/// transmittance.
#[inline]
pub(super) fn composite_pixel(
    splats: &[Splat2D],
    spans: &[(usize, usize)],
    list: &[u32],
    x: usize,
    y: usize,
    opts: &RenderOptions,
    mut visit: impl FnMut(Contribution),
) -> (Vector3<f64>, f64) {
    let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
    let mut color = Vector3::zeros();
    let mut t = 1.0;
    for &si in list {
        let (x0, x1) = spans[si as usize];
        if x < x0 || x > x1 {
            continue;
        }
        let s = &splats[si as usize];
        let dx = px - s.mean_px.x;
        let dy = py - s.mean_px.y;
        let c = &s.conic;
        let power = -0.5 * (c[(0, 0)] * dx * dx + 2.0 * c[(0, 1)] * dx * dy + c[(1, 1)] * dy * dy);
        let falloff = power.exp();
        let raw = s.alpha * falloff;
        let clamped = raw > opts.alpha_max;
        let a = if clamped { opts.alpha_max } else { raw };
        visit(Contribution {
            splat: si,
            a,
            falloff,
            t,
            clamped,
            dx,
            dy,
        });
        color += s.color * (a * t);
        t *= 1.0 - a;
        if t < opts.t_min {
            break;
        }
    }
    (color, t)
}

pub(super) fn x_spans(splats: &[Splat2D], width: usize) -> Vec<(usize, usize)> {
    splats
        .iter()
        .map(|s| s.x_span(width).unwrap_or((usize::MAX, 0)))
        .collect()
}

/// Renders `set` from `cam`. An empty set yields the background everywhere.
pub fn render(set: &PrimitiveSet, cam: &Camera, opts: &RenderOptions) -> Result<RenderedImage> {
    let projected = project_all(set, cam, opts)?;
    let splats: Vec<Splat2D> = projected.into_iter().map(|p| p.splat).collect();
    Ok(rasterize(&splats, cam.width, cam.height, opts))
}

/// Convenience wrapper returning only the pixels.
pub fn render_image(set: &PrimitiveSet, cam: &Camera, opts: &RenderOptions) -> Result<Image> {
    Ok(render(set, cam, opts)?.pixels)
}

pub(super) fn rasterize(splats: &[Splat2D], width: usize, height: usize, opts: &RenderOptions) -> RenderedImage {
    let rows = row_lists(splats, width, height);
    let spans = x_spans(splats, width);
    let mut pixels = Image::new(width, height);
    let mut transmittance = vec![0.0; width * height];
    pixels
        .data
        .par_chunks_mut(3 * width)
        .zip(transmittance.par_chunks_mut(width))
        .enumerate()
        .for_each(|(y, (row_px, row_t))| {
            for x in 0..width {
                let (c, t) = composite_pixel(splats, &spans, &rows[y], x, y, opts, |_| {});
                let c = c + opts.background * t;
                row_px[3 * x..3 * x + 3].copy_from_slice(c.as_slice());
                row_t[x] = t;
            }
        });
    RenderedImage { pixels, transmittance }
}
