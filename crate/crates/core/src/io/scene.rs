use std::fs;
use std::path::Path;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::colmap::{read_colmap_points, write_points3d_text, ColmapPoints};
use crate::camera::Camera;
use crate::error::{Error, Result};
use crate::gaussian::PrimitiveSet;
use crate::image::Image;
use crate::metrics::MetricReport;
use crate::render::{render_image, RenderOptions};

/// Cameras with their ground-truth images, SfM points and the train/holdout
/// split.
#[derive(Clone, Debug, PartialEq)]
pub struct SceneBundle {
    pub cameras: Vec<Camera>,
    pub images: Vec<Image>,
    pub sfm_points: Vec<Vector3<f64>>,
    /// Per-point colours in `[0, 1]`, when known.
    pub sfm_colors: Option<Vec<Vector3<f64>>>,
    pub train: Vec<usize>,
    pub holdout: Vec<usize>,
    pub background: Vector3<f64>,
}

#[derive(Serialize, Deserialize)]
struct SceneManifest {
    cameras: Vec<Camera>,
    train: Vec<usize>,
    holdout: Vec<usize>,
    background: [f64; 3],
}

impl SceneBundle {
    pub fn validate(&self) -> Result<()> {
        if self.cameras.len() != self.images.len() {
            return Err(Error::shape(
                format!("{} images", self.cameras.len()),
                self.images.len(),
            ));
        }
        for (i, (cam, img)) in self.cameras.iter().zip(&self.images).enumerate() {
            cam.validate()?;
            if cam.width != img.width || cam.height != img.height {
                return Err(Error::shape(
                    format!("{}x{} image for view {i}", cam.width, cam.height),
                    format!("{}x{}", img.width, img.height),
                ));
            }
        }
        let n = self.cameras.len();
        if let Some(&bad) = self.train.iter().chain(&self.holdout).find(|&&v| v >= n) {
            return Err(Error::InvalidArgument(format!("view index {bad} out of range for {n} views")));
        }
        if self.train.iter().any(|v| self.holdout.contains(v)) {
            return Err(Error::InvalidArgument("train and holdout views overlap".into()));
        }
        if let Some(c) = &self.sfm_colors {
            if c.len() != self.sfm_points.len() {
                return Err(Error::shape(format!("{} SfM colours", self.sfm_points.len()), c.len()));
            }
        }
        Ok(())
    }

    pub fn render_options(&self) -> RenderOptions {
        RenderOptions {
            background: self.background,
            ..RenderOptions::default()
        }
    }

    /// Radius of the camera centres around their mean, padded by 10%.
    pub fn scene_extent(&self) -> f64 {
        if self.cameras.is_empty() {
            return 1.0;
        }
        let centers: Vec<Vector3<f64>> = self.cameras.iter().map(Camera::center).collect();
        let mean = centers.iter().sum::<Vector3<f64>>() / centers.len() as f64;
        let radius = centers.iter().map(|c| (c - mean).norm()).fold(0.0, f64::max);
        if radius > 0.0 {
            1.1 * radius
        } else {
            1.0
        }
    }

    /// Renders `set` from `views` and compares against the ground truth.
    pub fn report(&self, set: &PrimitiveSet, views: &[usize]) -> Result<MetricReport> {
        let opts = self.render_options();
        let rendered = views
            .iter()
            .map(|&v| render_image(set, &self.cameras[v], &opts))
            .collect::<Result<Vec<_>>>()?;
        MetricReport::evaluate(views.iter().zip(&rendered).map(|(&v, r)| (v, r, &self.images[v])))
    }

    pub fn holdout_report(&self, set: &PrimitiveSet) -> Result<MetricReport> {
        self.report(set, &self.holdout)
    }

    /// Writes `cameras.json`, `images/NNN.png` and `sparse/points3D.txt`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        self.validate()?;
        let images_dir = dir.join("images");
        let sparse_dir = dir.join("sparse");
        for d in [dir, &images_dir, &sparse_dir] {
            fs::create_dir_all(d).map_err(|e| Error::io(d, e))?;
        }
        let manifest = SceneManifest {
            cameras: self.cameras.clone(),
            train: self.train.clone(),
            holdout: self.holdout.clone(),
            background: [self.background.x, self.background.y, self.background.z],
        };
        let path = dir.join("cameras.json");
        fs::write(&path, serde_json::to_string_pretty(&manifest)?).map_err(|e| Error::io(&path, e))?;
        for (i, img) in self.images.iter().enumerate() {
            write_png(&images_dir.join(format!("{i:03}.png")), img)?;
        }
        let points = ColmapPoints {
            ids: (1..=self.sfm_points.len() as u64).collect(),
            positions: self.sfm_points.clone(),
            colors: match &self.sfm_colors {
                Some(c) => c.iter().map(|v| v.map(|x| (x.clamp(0.0, 1.0) * 255.0).round() as u8).into()).collect(),
                None => vec![[128; 3]; self.sfm_points.len()],
            },
        };
        write_points3d_text(&sparse_dir.join("points3D.txt"), &points)
    }

    /// Loads a directory written by [`SceneBundle::save`]. The points file
    /// may be `points3D.txt` or `points3D.bin`.
    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join("cameras.json");
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let manifest: SceneManifest = serde_json::from_str(&text)?;
        let images = (0..manifest.cameras.len())
            .map(|i| read_png(&dir.join("images").join(format!("{i:03}.png"))))
            .collect::<Result<Vec<_>>>()?;
        let txt = dir.join("sparse").join("points3D.txt");
        let points_path = if txt.exists() { txt } else { dir.join("sparse").join("points3D.bin") };
        let points = read_colmap_points(&points_path)?;
        let bundle = Self {
            cameras: manifest.cameras,
            images,
            sfm_colors: Some(
                points
                    .colors
                    .iter()
                    .map(|c| Vector3::new(c[0] as f64, c[1] as f64, c[2] as f64) / 255.0)
                    .collect(),
            ),
            sfm_points: points.positions,
            train: manifest.train,
            holdout: manifest.holdout,
            background: Vector3::from(manifest.background),
        };
        bundle.validate()?;
        Ok(bundle)
    }
}

/// 8-bit RGB PNG, clamped to `[0, 1]`.
pub fn write_png(path: &Path, img: &Image) -> Result<()> {
    let buf = ::image::RgbImage::from_raw(img.width as u32, img.height as u32, img.to_rgb8())
        .ok_or_else(|| Error::shape("RGB buffer", img.data.len()))?;
    buf.save_with_format(path, ::image::ImageFormat::Png)?;
    Ok(())
}

pub fn read_png(path: &Path) -> Result<Image> {
    let img = ::image::open(path)?.to_rgb8();
    Image::from_rgb8(img.width() as usize, img.height() as usize, img.as_raw())
}
