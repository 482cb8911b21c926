//! Gaussian primitive data model.
//!
//! Parameters are stored pre-activation: scales as logs, opacity as a logit,
//! and the rotation as an unnormalized quaternion `(w, x, y, z)`. The flattened
//! row layout is
//!
//! ```text
//! [ x y z | qw qx qy qz | ls0 ls1 ls2 | opacity | sh[0].rgb sh[1].rgb ... ]
//! ```
//!
//! so `d = 11 + 3 (L+1)^2` and the position always occupies columns `0..3`.

use std::ops::Range;

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// Number of SH coefficient triples for degree `l`.
pub const fn sh_coeff_count(sh_degree: usize) -> usize {
    (sh_degree + 1) * (sh_degree + 1)
}

#[derive(Clone, Debug, PartialEq)]
pub struct GaussianPrimitive {
    pub position: Vector3<f64>,
    /// Quaternion `(w, x, y, z)`, normalized on use.
    pub rotation: [f64; 4],
    pub log_scale: Vector3<f64>,
    pub opacity_raw: f64,
    /// Real SH coefficients, one RGB triple per basis function.
    pub sh_coeffs: Vec<Vector3<f64>>,
}

impl GaussianPrimitive {
    /// An axis-aligned primitive with the DC colour band set so that it
    /// evaluates to `rgb`, and all higher bands zero.
    pub fn isotropic(position: Vector3<f64>, scale: f64, opacity: f64, rgb: Vector3<f64>, sh_degree: usize) -> Self {
        let mut sh_coeffs = vec![Vector3::zeros(); sh_coeff_count(sh_degree)];
        sh_coeffs[0] = crate::sh::rgb_to_dc(rgb);
        Self {
            position,
            rotation: [1.0, 0.0, 0.0, 0.0],
            log_scale: Vector3::repeat(scale.ln()),
            opacity_raw: logit(opacity),
            sh_coeffs,
        }
    }

    pub fn sh_degree(&self) -> usize {
        // (L+1)^2 coefficients; the constructors keep this a perfect square.
        ((self.sh_coeffs.len() as f64).sqrt().round() as usize).saturating_sub(1)
    }

    pub fn scales(&self) -> Vector3<f64> {
        self.log_scale.map(f64::exp)
    }

    pub fn opacity(&self) -> f64 {
        sigmoid(self.opacity_raw)
    }

    pub fn is_finite(&self) -> bool {
        self.position.iter().all(|v| v.is_finite())
            && self.rotation.iter().all(|v| v.is_finite())
            && self.log_scale.iter().all(|v| v.is_finite())
            && self.opacity_raw.is_finite()
            && self.sh_coeffs.iter().all(|c| c.iter().all(|v| v.is_finite()))
    }

    pub fn rotation_matrix(&self) -> Result<Matrix3<f64>> {
        rotation_matrix(self.rotation)
    }

    /// World-space covariance `R S S^T R^T`.
    pub fn covariance_3d(&self) -> Result<Matrix3<f64>> {
        let r = self.rotation_matrix()?;
        let s = Matrix3::from_diagonal(&self.scales());
        let l = r * s;
        Ok(l * l.transpose())
    }

    /// Unnormalized Gaussian density `exp(-1/2 (x-h)^T Sigma^-1 (x-h))`.
    pub fn evaluate(&self, x: &Vector3<f64>) -> Result<f64> {
        let cov = self.covariance_3d()?;
        let det = cov.determinant();
        let min_var = self.scales().iter().fold(f64::INFINITY, |a, &s| a.min(s * s));
        if !(det.is_finite() && det > 0.0 && min_var > 1e-300) {
            return Err(Error::SingularCovariance { det });
        }
        // The inverse via the factors is better conditioned than inverting cov.
        let r = self.rotation_matrix()?;
        let local = r.transpose() * (x - self.position);
        let s = self.scales();
        let m = (local.x / s.x).powi(2) + (local.y / s.y).powi(2) + (local.z / s.z).powi(2);
        Ok((-0.5 * m).exp())
    }

    pub fn flatten(&self) -> Vec<f64> {
        let mut row = Vec::with_capacity(RowLayout::new(self.sh_degree()).dim());
        self.flatten_into(&mut row);
        row
    }

    pub fn flatten_into(&self, row: &mut Vec<f64>) {
        row.extend_from_slice(self.position.as_slice());
        row.extend_from_slice(&self.rotation);
        row.extend_from_slice(self.log_scale.as_slice());
        row.push(self.opacity_raw);
        for c in &self.sh_coeffs {
            row.extend_from_slice(c.as_slice());
        }
    }

    pub fn unflatten(row: &[f64], sh_degree: usize) -> Result<Self> {
        let layout = RowLayout::new(sh_degree);
        if row.len() != layout.dim() {
            return Err(Error::shape(format!("row of length {}", layout.dim()), format!("length {}", row.len())));
        }
        Ok(Self {
            position: Vector3::new(row[0], row[1], row[2]),
            rotation: [row[3], row[4], row[5], row[6]],
            log_scale: Vector3::new(row[7], row[8], row[9]),
            opacity_raw: row[10],
            sh_coeffs: row[layout.sh()].chunks_exact(3).map(|c| Vector3::new(c[0], c[1], c[2])).collect(),
        })
    }
}

/// Rotation matrix of the normalized quaternion `(w, x, y, z)`.
pub fn rotation_matrix(q: [f64; 4]) -> Result<Matrix3<f64>> {
    let norm = (q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3]).sqrt();
    if !(norm > 0.0) || !norm.is_finite() {
        return Err(Error::DegenerateRotation);
    }
    let [w, x, y, z] = q.map(|v| v / norm);
    Ok(Matrix3::new(
        1.0 - 2.0 * (y * y + z * z),
        2.0 * (x * y - w * z),
        2.0 * (x * z + w * y),
        2.0 * (x * y + w * z),
        1.0 - 2.0 * (x * x + z * z),
        2.0 * (y * z - w * x),
        2.0 * (x * z - w * y),
        2.0 * (y * z + w * x),
        1.0 - 2.0 * (x * x + y * y),
    ))
}

pub fn covariance_3d(p: &GaussianPrimitive) -> Result<Matrix3<f64>> {
    p.covariance_3d()
}

pub fn evaluate_gaussian(p: &GaussianPrimitive, x: &Vector3<f64>) -> Result<f64> {
    p.evaluate(x)
}

/// Parameter groups, each with its own learning rate.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ParamGroup {
    Position,
    Rotation,
    Scale,
    Opacity,
    ShDc,
    ShRest,
}

impl ParamGroup {
    pub const ALL: [ParamGroup; 6] = [
        ParamGroup::Position,
        ParamGroup::Rotation,
        ParamGroup::Scale,
        ParamGroup::Opacity,
        ParamGroup::ShDc,
        ParamGroup::ShRest,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ParamGroup::Position => "position",
            ParamGroup::Rotation => "rotation",
            ParamGroup::Scale => "log_scale",
            ParamGroup::Opacity => "opacity",
            ParamGroup::ShDc => "sh_dc",
            ParamGroup::ShRest => "sh_rest",
        }
    }
}

/// Column layout of a flattened primitive row.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RowLayout {
    pub sh_degree: usize,
}

impl RowLayout {
    pub const POSITION: Range<usize> = 0..3;
    pub const ROTATION: Range<usize> = 3..7;
    pub const LOG_SCALE: Range<usize> = 7..10;
    pub const OPACITY: usize = 10;
    pub const SH_START: usize = 11;

    pub fn new(sh_degree: usize) -> Self {
        Self { sh_degree }
    }

    pub fn dim(&self) -> usize {
        Self::SH_START + 3 * sh_coeff_count(self.sh_degree)
    }

    pub fn sh(&self) -> Range<usize> {
        Self::SH_START..self.dim()
    }

    pub fn group_of(&self, col: usize) -> ParamGroup {
        match col {
            0..=2 => ParamGroup::Position,
            3..=6 => ParamGroup::Rotation,
            7..=9 => ParamGroup::Scale,
            10 => ParamGroup::Opacity,
            11..=13 => ParamGroup::ShDc,
            _ => ParamGroup::ShRest,
        }
    }

    pub fn columns(&self, group: ParamGroup) -> Range<usize> {
        match group {
            ParamGroup::Position => Self::POSITION,
            ParamGroup::Rotation => Self::ROTATION,
            ParamGroup::Scale => Self::LOG_SCALE,
            ParamGroup::Opacity => Self::OPACITY..Self::OPACITY + 1,
            ParamGroup::ShDc => Self::SH_START..Self::SH_START + 3,
            ParamGroup::ShRest => Self::SH_START + 3..self.dim(),
        }
    }
}

/// All primitives of a scene, sharing one SH degree.
#[derive(Clone, Debug, PartialEq)]
pub struct PrimitiveSet {
    pub primitives: Vec<GaussianPrimitive>,
    pub sh_degree: usize,
}

impl PrimitiveSet {
    pub fn new(primitives: Vec<GaussianPrimitive>, sh_degree: usize) -> Result<Self> {
        let want = sh_coeff_count(sh_degree);
        if sh_degree > 3 {
            return Err(Error::InvalidArgument(format!("SH degree {sh_degree} > 3")));
        }
        if let Some((i, p)) = primitives.iter().enumerate().find(|(_, p)| p.sh_coeffs.len() != want) {
            return Err(Error::shape(
                format!("{want} SH coefficients"),
                format!("{} on primitive {i}", p.sh_coeffs.len()),
            ));
        }
        Ok(Self { primitives, sh_degree })
    }

    pub fn empty(sh_degree: usize) -> Self {
        Self {
            primitives: Vec::new(),
            sh_degree,
        }
    }

    pub fn len(&self) -> usize {
        self.primitives.len()
    }

    pub fn is_empty(&self) -> bool {
        self.primitives.is_empty()
    }

    pub fn layout(&self) -> RowLayout {
        RowLayout::new(self.sh_degree)
    }

    /// Row-major `N x d` matrix of flattened primitives.
    pub fn to_rows(&self) -> Vec<f64> {
        let mut rows = Vec::with_capacity(self.len() * self.layout().dim());
        for p in &self.primitives {
            p.flatten_into(&mut rows);
        }
        rows
    }

    pub fn from_rows(rows: &[f64], sh_degree: usize) -> Result<Self> {
        let d = RowLayout::new(sh_degree).dim();
        if rows.len() % d != 0 {
            return Err(Error::shape(format!("multiple of {d}"), rows.len()));
        }
        let primitives = rows
            .chunks_exact(d)
            .map(|r| GaussianPrimitive::unflatten(r, sh_degree))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { primitives, sh_degree })
    }

    pub fn check_finite(&self) -> Result<()> {
        match self.primitives.iter().position(|p| !p.is_finite()) {
            Some(index) => Err(Error::NonFinite { index }),
            None => Ok(()),
        }
    }

    pub fn positions(&self) -> Vec<Vector3<f64>> {
        self.primitives.iter().map(|p| p.position).collect()
    }
}
