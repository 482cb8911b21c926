use nalgebra::Vector3;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::gaussian::PrimitiveSet;

#[derive(Clone, Debug, PartialEq)]
pub struct DensifyConfig {
    /// Mean screen-space positional gradient norm above which a primitive is
    /// densified.
    pub grad_threshold: f64,
    /// Primitives whose largest scale exceeds `percent_dense * scene_extent`
    /// are split, the others cloned.
    pub percent_dense: f64,
    pub scene_extent: f64,
    /// Primitives with `sigmoid(opacity_raw)` below this are removed.
    pub min_opacity: f64,
    /// Children of a split have their scales divided by this factor.
    pub split_scale_divisor: f64,
}

impl Default for DensifyConfig {
    fn default() -> Self {
        Self {
            grad_threshold: 2e-4,
            percent_dense: 0.01,
            scene_extent: 1.0,
            min_opacity: 0.005,
            split_scale_divisor: 1.6,
        }
    }
}

/// Running positional-gradient statistics between densification steps.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct DensifyStats {
    pub grad_accum: Vec<f64>,
    pub visible_count: Vec<u32>,
}

impl DensifyStats {
    pub fn new(n: usize) -> Self {
        Self {
            grad_accum: vec![0.0; n],
            visible_count: vec![0; n],
        }
    }

    pub fn accumulate(&mut self, mean2d_norm: &[f64], visible: &[bool]) {
        for i in 0..self.grad_accum.len() {
            if visible[i] {
                self.grad_accum[i] += mean2d_norm[i];
                self.visible_count[i] += 1;
            }
        }
    }

    pub fn mean(&self, i: usize) -> f64 {
        match self.visible_count[i] {
            0 => 0.0,
            c => self.grad_accum[i] / c as f64,
        }
    }
}

/// Where each row of a densified set came from, for carrying optimizer state.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RowOrigin {
    Kept(usize),
    New,
}

#[derive(Clone, Debug)]
pub struct DensifyOutcome {
    pub set: PrimitiveSet,
    pub origins: Vec<RowOrigin>,
    pub cloned: usize,
    pub split: usize,
    pub pruned: usize,
}

/// Clones small under-fitted primitives, splits large ones and prunes nearly
/// transparent ones. Survivors keep their relative order and come first; new
/// primitives are appended.
pub fn densify_and_prune(
    set: &PrimitiveSet,
    stats: &DensifyStats,
    cfg: &DensifyConfig,
    rng: &mut impl Rng,
) -> DensifyOutcome {
    let split_limit = cfg.percent_dense * cfg.scene_extent;
    let mut kept = Vec::with_capacity(set.len());
    let mut origins = Vec::with_capacity(set.len());
    let mut appended = Vec::new();
    let (mut cloned, mut split, mut pruned) = (0, 0, 0);

    for (i, p) in set.primitives.iter().enumerate() {
        let densify = stats.mean(i) >= cfg.grad_threshold && stats.visible_count[i] > 0;
        let max_scale = p.scales().max();
        if densify && max_scale > split_limit {
            split += 1;
            let rot = p.rotation_matrix().unwrap_or_else(|_| nalgebra::Matrix3::identity());
            let s = p.scales();
            for _ in 0..2 {
                let z = Vector3::from_fn(|_, _| StandardNormal.sample(rng));
                let mut child = p.clone();
                child.position = p.position + rot * s.component_mul(&z);
                child.log_scale = (s / cfg.split_scale_divisor).map(f64::ln);
                appended.push(child);
            }
            continue;
        }
        if p.opacity() < cfg.min_opacity {
            pruned += 1;
            continue;
        }
        if densify {
            cloned += 1;
            appended.push(p.clone());
        }
        kept.push(p.clone());
        origins.push(RowOrigin::Kept(i));
    }

    if kept.is_empty() && appended.is_empty() {
        // Never leave an empty scene: keep the most opaque primitive.
        if let Some((i, p)) = set
            .primitives
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.opacity_raw.total_cmp(&b.1.opacity_raw))
        {
            kept.push(p.clone());
            origins.push(RowOrigin::Kept(i));
            pruned -= 1;
        }
    }
    origins.extend(std::iter::repeat_n(RowOrigin::New, appended.len()));
    kept.extend(appended);
    DensifyOutcome {
        set: PrimitiveSet {
            primitives: kept,
            sh_degree: set.sh_degree,
        },
        origins,
        cloned,
        split,
        pruned,
    }
}
