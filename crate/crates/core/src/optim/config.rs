use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussian::{ParamGroup, RowLayout};
use crate::prototype::{ClusterOptions, WeightMode};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainMode {
    FitOnly,
    RenderingGuided,
    TwoStage,
}

impl std::str::FromStr for TrainMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fit_only" => Ok(TrainMode::FitOnly),
            "rendering_guided" => Ok(TrainMode::RenderingGuided),
            "two_stage" => Ok(TrainMode::TwoStage),
            other => Err(Error::Config(format!("unknown mode {other:?}"))),
        }
    }
}

/// How prototype means evolve between clustering refreshes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeanMode {
    /// Means stay the centroid of their members; members are optimized.
    CentroidLocked,
    /// Means are optimized as free parameters alongside the members.
    Free,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Weighting {
    Whiten,
    Unweighted,
}

/// All training hyperparameters. Iteration numbers are global: the fit
/// (warm-up) phase covers `0..warmup_iterations`, compression the rest up to
/// `total_iterations`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingConfig {
    pub mode: TrainMode,
    pub seed: u64,
    pub sh_degree: usize,

    pub lambda_dssim: f64,
    pub lambda_c: f64,
    pub interval_t: usize,
    pub decay_rate: f64,
    /// Iterations at which the compression ratio is multiplied by
    /// `decay_rate`. `None` means two halvings at 60% and 80% of the
    /// compression phase; an empty list disables decay.
    pub decay_schedule: Option<Vec<usize>>,
    /// Ratio used when prototypes are first derived. `two_stage` clusters
    /// once, directly at `final_ratio()`.
    pub compression_ratio: f64,
    pub anchor_fraction: f64,
    pub anchor_lr: f64,
    pub mean_mode: MeanMode,
    pub weighting: Weighting,
    pub position_weight: f64,

    pub total_iterations: usize,
    pub warmup_iterations: usize,

    pub lr_position_init: f64,
    pub lr_position_final: f64,
    pub lr_rotation: f64,
    pub lr_scale: f64,
    pub lr_opacity: f64,
    pub lr_sh_dc: f64,
    pub lr_sh_rest: f64,

    pub densify_from: usize,
    pub densify_until: usize,
    pub densify_interval: usize,
    pub densify_grad_threshold: f64,
    pub percent_dense: f64,
    pub min_opacity: f64,
    /// Cloning and splitting stop once the set reaches this size.
    pub max_primitives: Option<usize>,

    /// Holdout PSNR is logged every this many iterations (0 disables).
    pub eval_interval: usize,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            mode: TrainMode::RenderingGuided,
            seed: 0,
            sh_degree: 0,
            lambda_dssim: 0.2,
            lambda_c: 1e-4,
            interval_t: 100,
            decay_rate: 0.5,
            decay_schedule: None,
            compression_ratio: 1.0,
            anchor_fraction: 1.0,
            anchor_lr: 1e-4,
            mean_mode: MeanMode::CentroidLocked,
            weighting: Weighting::Whiten,
            position_weight: 1.0,
            total_iterations: 3000,
            warmup_iterations: 2000,
            lr_position_init: 1.6e-4,
            lr_position_final: 1.6e-6,
            lr_rotation: 1e-3,
            lr_scale: 5e-3,
            lr_opacity: 0.05,
            lr_sh_dc: 2.5e-3,
            lr_sh_rest: 2.5e-3 / 20.0,
            densify_from: 100,
            densify_until: 1000,
            densify_interval: 100,
            densify_grad_threshold: 2e-5,
            percent_dense: 0.01,
            min_opacity: 0.005,
            max_primitives: None,
            eval_interval: 0,
        }
    }
}

impl TrainingConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if !(0.0..=1.0).contains(&self.lambda_dssim) {
            return fail(format!("lambda_dssim = {} not in [0, 1]", self.lambda_dssim));
        }
        if !(self.lambda_c >= 0.0) {
            return fail(format!("lambda_c = {} must be >= 0", self.lambda_c));
        }
        if self.interval_t == 0 {
            return fail("interval_t must be >= 1".into());
        }
        if !(self.decay_rate > 0.0 && self.decay_rate < 1.0) {
            return fail(format!("decay_rate = {} not in (0, 1)", self.decay_rate));
        }
        if !(self.compression_ratio > 0.0 && self.compression_ratio <= 1.0) {
            return fail(format!("compression_ratio = {} not in (0, 1]", self.compression_ratio));
        }
        if !(self.anchor_fraction > 0.0 && self.anchor_fraction <= 1.0) {
            return fail(format!("anchor_fraction = {} not in (0, 1]", self.anchor_fraction));
        }
        if self.sh_degree > 3 {
            return fail(format!("sh_degree = {} exceeds 3", self.sh_degree));
        }
        if self.mode != TrainMode::FitOnly && self.warmup_iterations > self.total_iterations {
            return fail("warmup_iterations exceeds total_iterations".into());
        }
        if !(self.position_weight > 0.0) {
            return fail("position_weight must be > 0".into());
        }
        let lrs = [
            self.lr_position_init,
            self.lr_position_final,
            self.lr_rotation,
            self.lr_scale,
            self.lr_opacity,
            self.lr_sh_dc,
            self.lr_sh_rest,
        ];
        if lrs.iter().any(|lr| !(lr.is_finite() && *lr >= 0.0)) {
            return fail("learning rates must be finite and >= 0".into());
        }
        if self.densify_interval == 0 {
            return fail("densify_interval must be >= 1".into());
        }
        Ok(())
    }

    /// Decay iterations in ascending order, resolving the default.
    pub fn decay_iterations(&self) -> Vec<usize> {
        let mut its = match &self.decay_schedule {
            Some(list) => list.clone(),
            None => {
                let span = (self.total_iterations - self.warmup_iterations) as f64;
                [0.6, 0.8]
                    .iter()
                    .map(|f| self.warmup_iterations + (f * span).round() as usize)
                    .collect()
            }
        };
        its.sort_unstable();
        its
    }

    /// Ratio after all scheduled decays.
    pub fn final_ratio(&self) -> f64 {
        let n = self
            .decay_iterations()
            .iter()
            .filter(|&&it| it >= self.warmup_iterations && it < self.total_iterations)
            .count();
        self.compression_ratio * self.decay_rate.powi(n as i32)
    }

    /// Exponential decay of the position learning rate over the whole run.
    pub fn position_lr(&self, iteration: usize, scene_extent: f64) -> f64 {
        let t = (iteration as f64 / self.total_iterations.max(1) as f64).clamp(0.0, 1.0);
        let (a, b) = (self.lr_position_init, self.lr_position_final);
        let lr = if a > 0.0 && b > 0.0 {
            (a.ln() * (1.0 - t) + b.ln() * t).exp()
        } else {
            a * (1.0 - t) + b * t
        };
        lr * scene_extent
    }

    /// Per-column learning rates at `iteration`.
    pub fn column_lrs(&self, iteration: usize, scene_extent: f64) -> Vec<f64> {
        let layout = RowLayout::new(self.sh_degree);
        (0..layout.dim())
            .map(|c| match layout.group_of(c) {
                ParamGroup::Position => self.position_lr(iteration, scene_extent),
                ParamGroup::Rotation => self.lr_rotation,
                ParamGroup::Scale => self.lr_scale,
                ParamGroup::Opacity => self.lr_opacity,
                ParamGroup::ShDc => self.lr_sh_dc,
                ParamGroup::ShRest => self.lr_sh_rest,
            })
            .collect()
    }

    pub fn cluster_options(&self) -> ClusterOptions {
        ClusterOptions {
            weighting: match self.weighting {
                Weighting::Whiten => WeightMode::Whiten,
                Weighting::Unweighted => WeightMode::Unweighted,
            },
            position_weight: self.position_weight,
        }
    }
}
