//! Training schedules.
//!
//! All modes share the fit phase (`0..warmup_iterations`, with densification
//! inside its window). `fit_only` keeps fitting until `total_iterations`.
//! `rendering_guided` then derives prototypes per anchor tile and optimizes
//! the primitives through renders of the prototypes, refreshing the
//! clustering every `interval_t` iterations and at every decay point, and
//! finally replaces the primitives by the prototypes. `two_stage` clusters
//! once, replaces, and optimizes the merged primitives.

use nalgebra::Vector3;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::adam::Adam;
use super::config::{MeanMode, TrainMode, TrainingConfig};
use super::init::init_from_sfm;
use super::loss::{image_loss, LossTerms};
use crate::anchor::{assign_tiles, sample_anchors, AnchorBank, AnchorCount};
use crate::error::{Error, Result};
use crate::gaussian::{PrimitiveSet, RowLayout};
use crate::io::SceneBundle;
use crate::metrics::{psnr, MetricReport};
use crate::prototype::{decay_ratio, replace_with_prototypes, PrototypeSet};
use crate::render::{
    densify_and_prune, render_backward, render_image, DensifyConfig, DensifyStats, RenderGradients, RenderOptions,
};

/// One line of the training log.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LogRow {
    pub iteration: usize,
    pub l1: f64,
    pub dssim: f64,
    pub l_c: f64,
    pub total: f64,
    pub n_primitives: usize,
    pub n_prototypes: usize,
    pub holdout_psnr: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    /// Final primitives (the prototypes, after replacement, when compressing).
    pub set: PrimitiveSet,
    pub log: Vec<LogRow>,
    pub prototypes: Option<PrototypeSet>,
    pub anchors: Option<AnchorBank>,
    pub holdout: MetricReport,
}

// Independent random streams derived from the run seed.
const STREAM_VIEWS: u64 = 1;
const STREAM_DENSIFY: u64 = 2;
const STREAM_ANCHORS: u64 = 3;
const STREAM_KMEANS: u64 = 4;

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// Uniform view order without replacement within each epoch.
struct ViewSampler {
    pool: Vec<usize>,
    order: Vec<usize>,
    at: usize,
    rng: ChaCha8Rng,
}

impl ViewSampler {
    fn new(pool: Vec<usize>, rng: ChaCha8Rng) -> Self {
        Self {
            pool,
            order: Vec::new(),
            at: 0,
            rng,
        }
    }

    fn next(&mut self) -> usize {
        if self.at == self.order.len() {
            self.order = self.pool.clone();
            self.order.shuffle(&mut self.rng);
            self.at = 0;
        }
        self.at += 1;
        self.order[self.at - 1]
    }
}

struct Trainer<'a> {
    bundle: &'a SceneBundle,
    cfg: &'a TrainingConfig,
    opts: RenderOptions,
    extent: f64,
    d: usize,
    rows: Vec<f64>,
    adam: Adam,
    views: ViewSampler,
    densify_rng: ChaCha8Rng,
    kmeans_seed: u64,
    log: Vec<LogRow>,
}

fn diverged(iteration: usize, reason: String, rows: &[f64], sh_degree: usize) -> Error {
    let state = PrimitiveSet::from_rows(rows, sh_degree).unwrap_or_else(|_| PrimitiveSet::empty(sh_degree));
    Error::Diverged {
        iteration,
        reason,
        state: Box::new(state),
    }
}

impl<'a> Trainer<'a> {
    fn new(bundle: &'a SceneBundle, cfg: &'a TrainingConfig, initial: Option<PrimitiveSet>) -> Result<Self> {
        cfg.validate()?;
        bundle.validate()?;
        if bundle.train.is_empty() {
            return Err(Error::InvalidArgument("scene has no training views".into()));
        }
        let set = match initial {
            Some(s) => {
                if s.sh_degree != cfg.sh_degree {
                    return Err(Error::Config(format!(
                        "initial set has SH degree {} but sh_degree = {}",
                        s.sh_degree, cfg.sh_degree
                    )));
                }
                s
            }
            None => init_from_sfm(&bundle.sfm_points, bundle.sfm_colors.as_deref(), cfg.sh_degree)?,
        };
        if set.is_empty() {
            return Err(Error::InvalidArgument("cannot train an empty primitive set".into()));
        }
        set.check_finite()?;
        let d = RowLayout::new(cfg.sh_degree).dim();
        let rows = set.to_rows();
        Ok(Self {
            bundle,
            cfg,
            opts: bundle.render_options(),
            extent: bundle.scene_extent(),
            d,
            adam: Adam::new(set.len(), d),
            rows,
            views: ViewSampler::new(bundle.train.clone(), stream(cfg.seed, STREAM_VIEWS)),
            densify_rng: stream(cfg.seed, STREAM_DENSIFY),
            kmeans_seed: stream(cfg.seed, STREAM_KMEANS).random(),
            log: Vec::new(),
        })
    }

    fn n(&self) -> usize {
        self.rows.len() / self.d
    }

    fn set(&self) -> Result<PrimitiveSet> {
        PrimitiveSet::from_rows(&self.rows, self.cfg.sh_degree)
    }

    /// Renders `set` from the next training view and backpropagates the image
    /// loss.
    fn image_step(&mut self, it: usize, set: &PrimitiveSet) -> Result<(LossTerms, RenderGradients)> {
        let v = self.views.next();
        let cam = &self.bundle.cameras[v];
        let rendered = match render_image(set, cam, &self.opts) {
            Ok(img) => img,
            Err(Error::NonFinite { index }) => {
                return Err(diverged(it, format!("primitive {index} became non-finite"), &self.rows, self.cfg.sh_degree))
            }
            Err(e) => return Err(e),
        };
        if !rendered.is_finite() {
            return Err(diverged(it, "rendered image is non-finite".into(), &self.rows, self.cfg.sh_degree));
        }
        let terms = image_loss(&self.bundle.images[v], &rendered, self.cfg.lambda_dssim)?;
        if !terms.image.is_finite() {
            return Err(diverged(it, format!("loss is {}", terms.image), &self.rows, self.cfg.sh_degree));
        }
        let grads = render_backward(set, cam, &terms.grad, &self.opts)?;
        Ok((terms, grads))
    }

    fn check_params(&self, it: usize) -> Result<()> {
        match self.rows.iter().position(|v| !v.is_finite()) {
            Some(k) => Err(diverged(
                it,
                format!("parameter {} of primitive {} is non-finite after the update", k % self.d, k / self.d),
                &self.rows,
                self.cfg.sh_degree,
            )),
            None => Ok(()),
        }
    }

    fn holdout_psnr(&self, it: usize, rendered: impl FnOnce() -> Result<PrimitiveSet>) -> Result<Option<f64>> {
        let every = self.cfg.eval_interval;
        if every == 0 || (it + 1) % every != 0 || self.bundle.holdout.is_empty() {
            return Ok(None);
        }
        let set = rendered()?;
        let mut sum = 0.0;
        for &v in &self.bundle.holdout {
            let img = render_image(&set, &self.bundle.cameras[v], &self.opts)?;
            sum += psnr(&self.bundle.images[v], &img)?;
        }
        Ok(Some(sum / self.bundle.holdout.len() as f64))
    }

    fn push_log(&mut self, it: usize, terms: &LossTerms, l_c: f64, n_prototypes: usize, holdout: Option<f64>) {
        let lam = self.cfg.lambda_dssim;
        self.log.push(LogRow {
            iteration: it,
            l1: terms.l1,
            dssim: terms.dssim,
            l_c,
            total: (1.0 - lam) * terms.l1 + lam * terms.dssim + self.cfg.lambda_c * l_c,
            n_primitives: self.n(),
            n_prototypes,
            holdout_psnr: holdout,
        });
    }

    /// Plain optimization of the rows over `range`, with densification when
    /// `densify` is set and the iteration falls inside the window.
    /// `n_prototypes` is only copied into the log.
    fn fit(&mut self, range: std::ops::Range<usize>, densify: bool, n_prototypes: Option<usize>) -> Result<()> {
        let cfg = self.cfg;
        let mut stats = DensifyStats::new(self.n());
        for it in range {
            let set = self.set()?;
            let (terms, grads) = self.image_step(it, &set)?;
            if densify {
                stats.accumulate(&grads.mean2d_norm, &grads.visible);
            }
            let lrs = cfg.column_lrs(it, self.extent);
            self.adam.step(&mut self.rows, &grads.rows, &lrs)?;
            self.check_params(it)?;
            let holdout = self.holdout_psnr(it, || self.set())?;
            self.push_log(it, &terms, 0.0, n_prototypes.unwrap_or(0), holdout);

            let step = it + 1;
            if densify && step >= cfg.densify_from && step <= cfg.densify_until && step % cfg.densify_interval == 0 {
                let set = self.set()?;
                let mut dcfg = DensifyConfig {
                    grad_threshold: cfg.densify_grad_threshold,
                    percent_dense: cfg.percent_dense,
                    scene_extent: self.extent,
                    min_opacity: cfg.min_opacity,
                    ..DensifyConfig::default()
                };
                if cfg.max_primitives.is_some_and(|m| set.len() >= m) {
                    dcfg.grad_threshold = f64::INFINITY;
                }
                let out = densify_and_prune(&set, &stats, &dcfg, &mut self.densify_rng);
                self.rows = out.set.to_rows();
                self.adam.remap(&out.origins);
                stats = DensifyStats::new(self.n());
            }
        }
        Ok(())
    }

    fn anchors(&self) -> Result<AnchorBank> {
        let mut rng = stream(self.cfg.seed, STREAM_ANCHORS);
        let anchors = sample_anchors(
            &self.bundle.sfm_points,
            AnchorCount::Fraction(self.cfg.anchor_fraction),
            rng.random(),
        )?;
        assign_tiles(&self.positions(), &anchors)
    }

    fn positions(&self) -> Vec<Vector3<f64>> {
        self.rows.chunks_exact(self.d).map(|r| Vector3::new(r[0], r[1], r[2])).collect()
    }

    fn derive(&self, bank: &AnchorBank, ratio: f64, round: u64, previous: Option<&PrototypeSet>) -> Result<PrototypeSet> {
        PrototypeSet::derive(
            &self.rows,
            self.cfg.sh_degree,
            bank,
            ratio,
            self.cfg.cluster_options(),
            self.kmeans_seed.wrapping_add(round),
            previous,
        )
    }

    /// Compression phase of `rendering_guided` over `start..total`.
    fn rendering_guided(&mut self, start: usize) -> Result<(PrototypeSet, AnchorBank)> {
        let cfg = self.cfg;
        let end = cfg.total_iterations;
        let d = self.d;
        let decays: Vec<usize> = cfg
            .decay_iterations()
            .into_iter()
            .filter(|&it| it > start && it < end)
            .collect();
        let at_start = cfg.decay_iterations().iter().filter(|&&it| it == start).count();
        let mut ratio = cfg.compression_ratio * cfg.decay_rate.powi(at_start as i32);
        let mut bank = self.anchors()?;
        let mut round = 0;
        let mut protos = self.derive(&bank, ratio, round, None)?;
        let mut last_derive = start;
        self.adam.reset(self.n());
        let mut mean_adam = Adam::new(protos.total(), d);
        let mut pos_grads = vec![Vector3::zeros(); self.n()];

        for it in start..end {
            let n_decays = decays.iter().filter(|&&x| x == it).count();
            if n_decays > 0 || it - last_derive >= cfg.interval_t {
                for _ in 0..n_decays {
                    ratio = decay_ratio(ratio, cfg.decay_rate);
                }
                let tuned = bank.fine_tuned_anchors(&pos_grads, cfg.anchor_lr);
                bank = assign_tiles(&self.positions(), &tuned)?;
                round += 1;
                protos = self.derive(&bank, ratio, round, Some(&protos))?;
                mean_adam.reset(protos.total());
                last_derive = it;
            }

            let mu_set = match protos.to_primitive_set() {
                Ok(s) => s,
                Err(Error::NonFinite { index }) => {
                    return Err(diverged(it, format!("prototype {index} became non-finite"), &self.rows, cfg.sh_degree))
                }
                Err(e) => return Err(e),
            };
            let (terms, grads) = self.image_step(it, &mu_set)?;
            let (l_c, d_rows_c, d_means_c) = protos.loss_with_grad(&self.rows)?;

            // Straight-through: every member receives its prototype's gradient
            // divided by the cluster size, plus the clustering pull.
            let labels = protos.global_labels();
            let sizes = protos.sizes();
            let mut g = vec![0.0; self.rows.len()];
            for (i, &l) in labels.iter().enumerate() {
                let inv = 1.0 / sizes[l] as f64;
                for j in 0..d {
                    g[i * d + j] = grads.rows[l * d + j] * inv + cfg.lambda_c * d_rows_c[i * d + j];
                }
                pos_grads[i] = Vector3::new(g[i * d], g[i * d + 1], g[i * d + 2]);
            }
            let lrs = cfg.column_lrs(it, self.extent);
            self.adam.step(&mut self.rows, &g, &lrs)?;
            self.check_params(it)?;
            match cfg.mean_mode {
                MeanMode::CentroidLocked => protos.recenter(&self.rows)?,
                MeanMode::Free => {
                    let mut means = protos.means_rows();
                    let gm: Vec<f64> = grads
                        .rows
                        .iter()
                        .zip(&d_means_c)
                        .map(|(a, b)| a + cfg.lambda_c * b)
                        .collect();
                    mean_adam.step(&mut means, &gm, &lrs)?;
                    protos.set_means_rows(&means);
                }
            }
            let holdout = self.holdout_psnr(it, || protos.to_primitive_set())?;
            self.push_log(it, &terms, l_c, protos.total(), holdout);
        }
        Ok((protos, bank))
    }

    fn finish(self, set: PrimitiveSet, prototypes: Option<PrototypeSet>, anchors: Option<AnchorBank>) -> Result<TrainOutcome> {
        let holdout = self.bundle.holdout_report(&set)?;
        Ok(TrainOutcome {
            set,
            log: self.log,
            prototypes,
            anchors,
            holdout,
        })
    }
}

/// Runs the schedule selected by `cfg.mode`. Starts from `initial` when
/// given, otherwise from the scene's SfM points.
pub fn train(bundle: &SceneBundle, cfg: &TrainingConfig, initial: Option<PrimitiveSet>) -> Result<TrainOutcome> {
    let mut t = Trainer::new(bundle, cfg, initial)?;
    if cfg.mode == TrainMode::FitOnly {
        t.fit(0..cfg.total_iterations, true, None)?;
        let set = t.set()?;
        return t.finish(set, None, None);
    }
    t.fit(0..cfg.warmup_iterations, true, None)?;
    t.compress()
}

/// Fit, cluster once at `cfg.final_ratio()` without rendering feedback,
/// replace, then optimize the merged primitives with the image loss only.
pub fn train_two_stage(bundle: &SceneBundle, cfg: &TrainingConfig, initial: Option<PrimitiveSet>) -> Result<TrainOutcome> {
    let cfg = TrainingConfig {
        mode: TrainMode::TwoStage,
        ..cfg.clone()
    };
    train(bundle, &cfg, initial)
}

/// Runs only the compression phase (`warmup_iterations..total_iterations`)
/// of `cfg.mode` on an already fitted set.
pub fn compress(bundle: &SceneBundle, cfg: &TrainingConfig, fitted: PrimitiveSet) -> Result<TrainOutcome> {
    if cfg.mode == TrainMode::FitOnly {
        return Err(Error::Config("compress needs mode rendering_guided or two_stage".into()));
    }
    Trainer::new(bundle, cfg, Some(fitted))?.compress()
}

impl Trainer<'_> {
    fn compress(mut self) -> Result<TrainOutcome> {
        let cfg = self.cfg;
        let start = cfg.warmup_iterations.min(cfg.total_iterations);
        if cfg.mode == TrainMode::TwoStage {
            let bank = self.anchors()?;
            let protos = self.derive(&bank, cfg.final_ratio(), 0, None)?;
            let merged = replace_with_prototypes(&self.set()?, &protos)?;
            self.rows = merged.to_rows();
            self.adam.reset(merged.len());
            self.fit(start..cfg.total_iterations, false, Some(merged.len()))?;
            let set = self.set()?;
            return self.finish(set, Some(protos), Some(bank));
        }
        let (protos, bank) = self.rendering_guided(start)?;
        let set = replace_with_prototypes(&self.set()?, &protos)?;
        self.finish(set, Some(protos), Some(bank))
    }
}
