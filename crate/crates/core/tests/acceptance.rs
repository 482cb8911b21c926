//! End-to-end acceptance checks, one PASS/FAIL line per criterion.
//!
//! Runs as a plain binary (`harness = false`). Pass criterion numbers to run
//! a subset: `cargo test --test acceptance -- 1 7 8`.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use nalgebra::{UnitQuaternion, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use protogs::gaussian::{logit, sh_coeff_count};
use protogs::io::{
    generate_synthetic_scene, random_set, read_colmap_points, read_ply_bytes, write_ply_bytes, PlyPrecision,
    SceneBundle, SyntheticSpec,
};
use protogs::{
    assign_tiles, compress, image_loss, kmeans_tile, psnr, render_backward, render_image, ssim, train, Camera,
    GaussianPrimitive, Image, ParamGroup, PrimitiveSet, RenderOptions, TrainMode, TrainOutcome, TrainingConfig,
};

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

// ---------------------------------------------------------------------------
// 1. Renderer gradients against central differences.

fn gradient_scene(rng: &mut ChaCha8Rng, n: usize, sh_degree: usize) -> PrimitiveSet {
    let prims = (0..n)
        .map(|_| {
            let z = rng.random_range(2.0..4.0);
            let q = UnitQuaternion::from_scaled_axis(Vector3::from_fn(|_, _| rng.random_range(-2.0..2.0)));
            let mut sh = vec![Vector3::zeros(); sh_coeff_count(sh_degree)];
            sh[0] = Vector3::from_fn(|_, _| rng.random_range(-0.8..0.8));
            for c in sh.iter_mut().skip(1) {
                *c = Vector3::from_fn(|_, _| rng.random_range(-0.1..0.1));
            }
            GaussianPrimitive {
                position: Vector3::new(rng.random_range(-0.3..0.3) * z, rng.random_range(-0.3..0.3) * z, z),
                rotation: [q.w, q.i, q.j, q.k].map(|v| v * rng.random_range(0.5..2.0)),
                log_scale: Vector3::from_fn(|_, _| rng.random_range(-2.5..-1.5)),
                opacity_raw: logit(rng.random_range(0.15..0.7)),
                sh_coeffs: sh,
            }
        })
        .collect();
    PrimitiveSet::new(prims, sh_degree).unwrap()
}

/// Worst per-group relative error `|a - fd| / max(|a|, |fd|)` of one scene.
fn gradient_errors(set: &PrimitiveSet, cam: &Camera, truth: &Image, opts: &RenderOptions) -> Vec<(ParamGroup, f64)> {
    const LAMBDA: f64 = 0.2;
    let loss = |rows: &[f64]| {
        let s = PrimitiveSet::from_rows(rows, set.sh_degree).unwrap();
        image_loss(truth, &render_image(&s, cam, opts).unwrap(), LAMBDA).unwrap().image
    };
    let terms = image_loss(truth, &render_image(set, cam, opts).unwrap(), LAMBDA).unwrap();
    let analytic = render_backward(set, cam, &terms.grad, opts).unwrap().rows;

    let mut rows = set.to_rows();
    let layout = set.layout();
    let d = layout.dim();
    let eps = 1e-6;
    ParamGroup::ALL
        .iter()
        .filter(|&&g| !layout.columns(g).is_empty())
        .map(|&g| {
            let (mut diff, mut na, mut nf) = (0.0, 0.0, 0.0);
            for i in 0..set.len() {
                for c in layout.columns(g) {
                    let k = i * d + c;
                    let orig = rows[k];
                    rows[k] = orig + eps;
                    let lp = loss(&rows);
                    rows[k] = orig - eps;
                    let lm = loss(&rows);
                    rows[k] = orig;
                    let fd = (lp - lm) / (2.0 * eps);
                    diff += (analytic[k] - fd).powi(2);
                    na += analytic[k].powi(2);
                    nf += fd.powi(2);
                }
            }
            (g, diff.sqrt() / na.sqrt().max(nf.sqrt()).max(1e-300))
        })
        .collect()
}

fn criterion_1() -> Verdict {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    // Support widened to 8 sigma so the truncated footprint is smooth at the
    // scale of the finite-difference step.
    let opts = RenderOptions {
        background: Vector3::new(0.1, 0.2, 0.3),
        extent_sigma: 8.0,
        ..RenderOptions::default()
    };
    let cam = Camera::look_at(Vector3::zeros(), Vector3::z(), -Vector3::y(), 32, 32, 0.9).unwrap();
    let scenes = 20;
    let mut worst: Vec<(ParamGroup, f64)> = Vec::new();
    for s in 0..scenes {
        let n = rng.random_range(5..=20);
        let set = gradient_scene(&mut rng, n, s % 4);
        let truth = Image::from_data(32, 32, (0..32 * 32 * 3).map(|_| rng.random()).collect()).unwrap();
        for (g, e) in gradient_errors(&set, &cam, &truth, &opts) {
            match worst.iter_mut().find(|(w, _)| *w == g) {
                Some(slot) => slot.1 = slot.1.max(e),
                None => worst.push((g, e)),
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    let max = worst.iter().map(|w| w.1).fold(0.0, f64::max);
    let groups: Vec<String> = worst.iter().map(|(g, e)| format!("{}={e:.1e}", g.name())).collect();
    verdict(
        max <= 1e-3 && secs <= 300.0,
        format!("{scenes} scenes, worst relative error per group [{}], {secs:.0}s", groups.join(" ")),
    )
}

// ---------------------------------------------------------------------------
// 2. K-means against exhaustive partitions.

fn weighted_sse(x: &[f64], d: usize, w: &[f64], labels: &[usize], k: usize) -> f64 {
    let n = x.len() / d;
    let mut total = 0.0;
    for c in 0..k {
        let members: Vec<usize> = (0..n).filter(|&i| labels[i] == c).collect();
        if members.is_empty() {
            continue;
        }
        for j in 0..d {
            let mean = members.iter().map(|&i| x[i * d + j]).sum::<f64>() / members.len() as f64;
            total += members.iter().map(|&i| w[j] * w[j] * (x[i * d + j] - mean).powi(2)).sum::<f64>();
        }
    }
    total
}

/// Minimum objective over every labelling of the points into `k` groups.
fn exhaustive_optimum(x: &[f64], d: usize, w: &[f64], k: usize) -> f64 {
    let n = x.len() / d;
    let mut labels = vec![0; n];
    let mut best = f64::INFINITY;
    loop {
        best = best.min(weighted_sse(x, d, w, &labels, k));
        let mut i = 0;
        loop {
            if i == n {
                return best;
            }
            labels[i] += 1;
            if labels[i] < k {
                break;
            }
            labels[i] = 0;
            i += 1;
        }
    }
}

fn criterion_2() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let instances = 100;
    let (mut optimal, mut monotone) = (0, 0);
    for t in 0..instances {
        let d = [1, 1, 2, 3][t % 4];
        let k = rng.random_range(1..=3);
        let n = rng.random_range(k.max(2)..=8);
        let x: Vec<f64> = (0..n * d).map(|_| rng.random_range(-1.0..1.0)).collect();
        let w: Vec<f64> = (0..d).map(|_| rng.random_range(0.5..2.0)).collect();
        let res = kmeans_tile(&x, d, k, &w, rng.random(), None).unwrap();
        let got = weighted_sse(&x, d, &w, &res.labels, k);
        let best = exhaustive_optimum(&x, d, &w, k);
        if got <= best * (1.0 + 1e-9) + 1e-12 {
            optimal += 1;
        }
        if res.objective_history.windows(2).all(|p| p[1] <= p[0] * (1.0 + 1e-12) + 1e-15) {
            monotone += 1;
        }
    }
    verdict(
        optimal * 10 >= instances * 9 && monotone == instances,
        format!("optimum matched on {optimal}/{instances}, objective monotone on {monotone}/{instances}"),
    )
}

// ---------------------------------------------------------------------------
// Shared synthetic scene for criteria 3 to 6.

const SCENE_SEED: u64 = 0;
const FIT_ITERATIONS: usize = 3000;
const COMPRESS_ITERATIONS: usize = 2000;
const DECAYS: [usize; 2] = [100, 200];
const LAMBDA_C: f64 = 1e-7;
const POSITION_WEIGHT: f64 = 1.0;
const SEEDS: [u64; 5] = [0, 1, 2, 3, 4];

fn scene() -> SceneBundle {
    generate_synthetic_scene(&SyntheticSpec::default(), SCENE_SEED).unwrap().1
}

fn fit_config(seed: u64) -> TrainingConfig {
    TrainingConfig {
        mode: TrainMode::FitOnly,
        seed,
        total_iterations: FIT_ITERATIONS,
        max_primitives: Some(2000),
        ..TrainingConfig::default()
    }
}

/// Compression phase run on a fitted set with a fresh schedule. The initial
/// ratio is halved twice early in the phase.
fn compress_config(seed: u64, mode: TrainMode, final_ratio: f64, anchor_fraction: f64) -> TrainingConfig {
    TrainingConfig {
        mode,
        seed,
        warmup_iterations: 0,
        total_iterations: COMPRESS_ITERATIONS,
        decay_schedule: Some(DECAYS.to_vec()),
        compression_ratio: final_ratio * 4.0,
        anchor_fraction,
        lambda_c: LAMBDA_C,
        position_weight: POSITION_WEIGHT,
        ..TrainingConfig::default()
    }
}

fn criterion_3(bundle: &SceneBundle) -> Verdict {
    let base = TrainingConfig {
        seed: 11,
        total_iterations: 3000,
        warmup_iterations: 2000,
        decay_schedule: Some(vec![]),
        compression_ratio: 1.0,
        ..TrainingConfig::default()
    };
    let fit = train(bundle, &TrainingConfig { mode: TrainMode::FitOnly, ..base.clone() }, None).unwrap();
    let rg = train(bundle, &TrainingConfig { mode: TrainMode::RenderingGuided, ..base }, None).unwrap();
    let gap = rg.holdout.psnr - fit.holdout.psnr;
    verdict(
        gap.abs() <= 0.1 && rg.set.len() == fit.set.len(),
        format!(
            "fit_only {:.3} dB, rendering_guided at ratio 1 {:.3} dB (difference {gap:+.3}), {} primitives",
            fit.holdout.psnr,
            rg.holdout.psnr,
            rg.set.len()
        ),
    )
}

struct Fitted {
    seed: u64,
    set: PrimitiveSet,
    psnr: f64,
}

fn fit(bundle: &SceneBundle, seed: u64) -> Fitted {
    let out = train(bundle, &fit_config(seed), None).unwrap();
    Fitted {
        seed,
        psnr: out.holdout.psnr,
        set: out.set,
    }
}

fn run_compress(bundle: &SceneBundle, f: &Fitted, mode: TrainMode, ratio: f64, fraction: f64) -> TrainOutcome {
    compress(bundle, &compress_config(f.seed, mode, ratio, fraction), f.set.clone()).unwrap()
}

fn criterion_4(bundle: &SceneBundle, f: &Fitted, start: Instant) -> Verdict {
    let out = run_compress(bundle, f, TrainMode::RenderingGuided, 0.23, 0.2);
    let kept = out.set.len() as f64 / f.set.len() as f64;
    let loss = f.psnr - out.holdout.psnr;
    let secs = start.elapsed().as_secs_f64();
    verdict(
        f.psnr >= 30.0 && kept <= 0.25 && loss <= 1.5 && secs <= 1800.0,
        format!(
            "fit {} primitives at {:.2} dB; compressed to {} ({:.1}%) at {:.2} dB, loss {loss:.2} dB; {secs:.0}s",
            f.set.len(),
            f.psnr,
            out.set.len(),
            100.0 * kept,
            out.holdout.psnr
        ),
    )
}

fn criterion_5(bundle: &SceneBundle, fits: &[Fitted]) -> (Verdict, Vec<f64>) {
    let (mut rg, mut ts) = (Vec::new(), Vec::new());
    for f in fits {
        rg.push(run_compress(bundle, f, TrainMode::RenderingGuided, 0.25, 1.0).holdout.psnr);
        ts.push(run_compress(bundle, f, TrainMode::TwoStage, 0.25, 1.0).holdout.psnr);
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let gap = mean(&rg) - mean(&ts);
    let per_seed: Vec<String> = rg.iter().zip(&ts).map(|(a, b)| format!("{:+.2}", a - b)).collect();
    let v = verdict(
        gap > 0.0,
        format!(
            "{} seeds: rendering_guided {:.3} dB, two_stage {:.3} dB, gap {gap:+.3} dB (per seed {})",
            fits.len(),
            mean(&rg),
            mean(&ts),
            per_seed.join(" ")
        ),
    );
    (v, rg)
}

fn criterion_6(bundle: &SceneBundle, fits: &[Fitted], full: Option<&[f64]>) -> Verdict {
    let mut means = Vec::new();
    for fraction in [0.2, 0.5, 0.75, 1.0] {
        let psnrs: Vec<f64> = match full {
            Some(v) if fraction == 1.0 => v.to_vec(),
            _ => fits
                .iter()
                .map(|f| run_compress(bundle, f, TrainMode::RenderingGuided, 0.25, fraction).holdout.psnr)
                .collect(),
        };
        means.push((fraction, psnrs.iter().sum::<f64>() / psnrs.len() as f64));
    }
    let hi = means.iter().map(|m| m.1).fold(f64::MIN, f64::max);
    let lo = means.iter().map(|m| m.1).fold(f64::MAX, f64::min);
    let list: Vec<String> = means.iter().map(|(f, p)| format!("{f}: {p:.3}")).collect();
    verdict(
        hi - lo <= 0.5,
        format!("mean PSNR over {} seeds by anchor fraction [{}], spread {:.3} dB", fits.len(), list.join(", "), hi - lo),
    )
}

// ---------------------------------------------------------------------------
// 7. Formats and anchor assignment.

fn brute_force_tiles(positions: &[Vector3<f64>], anchors: &[Vector3<f64>]) -> Vec<usize> {
    positions
        .iter()
        .map(|p| {
            let mut best = (f64::INFINITY, 0);
            for (t, a) in anchors.iter().enumerate() {
                let d = (p - a).norm_squared();
                if d < best.0 {
                    best = (d, t);
                }
            }
            best.1
        })
        .collect()
}

fn criterion_7() -> Verdict {
    let mut notes = Vec::new();
    let mut pass = true;

    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for degree in 0..=3 {
        let set = random_set(1000, degree, &mut rng);
        let back = read_ply_bytes(&write_ply_bytes(&set, PlyPrecision::F64)).unwrap();
        let exact = back.sh_degree == degree
            && back.len() == set.len()
            && back.to_rows().iter().zip(set.to_rows()).all(|(a, b)| a.to_bits() == b.to_bits());
        pass &= exact;
        if !exact {
            notes.push(format!("PLY degree {degree} not bit-exact"));
        }
    }

    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures");
    let text = read_colmap_points(&dir.join("points3D.txt")).unwrap();
    let binary = read_colmap_points(&dir.join("points3D.bin")).unwrap();
    let same = text == binary && !text.is_empty();
    pass &= same;
    notes.push(format!("COLMAP text/binary {} ({} points)", if same { "identical" } else { "differ" }, text.len()));

    let mut mismatches = 0;
    let mut ties = 0;
    for c in 0..10_000 {
        // Integer lattice coordinates make exact ties common; every tenth
        // configuration also duplicates an anchor.
        let n_anchors = rng.random_range(1..=8);
        let mut anchors: Vec<Vector3<f64>> = (0..n_anchors)
            .map(|_| Vector3::from_fn(|_, _| rng.random_range(-3..=3) as f64))
            .collect();
        if c % 10 == 0 {
            let i = rng.random_range(0..anchors.len());
            anchors.push(anchors[i]);
        }
        let positions: Vec<Vector3<f64>> = (0..rng.random_range(1..=12))
            .map(|_| Vector3::from_fn(|_, _| rng.random_range(-6..=6) as f64 * 0.5))
            .collect();
        for p in &positions {
            let mut d: Vec<f64> = anchors.iter().map(|a| (p - a).norm_squared()).collect();
            d.sort_by(f64::total_cmp);
            if d.len() > 1 && d[0] == d[1] {
                ties += 1;
            }
        }
        let got = assign_tiles(&positions, &anchors).unwrap();
        if got.assignment != brute_force_tiles(&positions, &anchors) {
            mismatches += 1;
        }
    }
    pass &= mismatches == 0;
    notes.push(format!("assignment mismatches {mismatches}/10000 configurations ({ties} tied primitives)"));
    notes.insert(0, "PLY bit-exact for 1000 primitives at degrees 0-3".into());
    verdict(pass, notes.join("; "))
}

// ---------------------------------------------------------------------------
// 8. Metrics.

fn criterion_8() -> Verdict {
    let zero = Image::new(16, 16);
    let psnr_01 = psnr(&zero, &Image::filled(16, 16, Vector3::repeat(0.1))).unwrap();
    let psnr_05 = psnr(&zero, &Image::filled(16, 16, Vector3::repeat(0.5))).unwrap();
    let closed_form = (psnr_01 - 20.0).abs() < 1e-9 && (psnr_05 - 6.0206).abs() < 1e-4;

    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let random = |rng: &mut ChaCha8Rng| Image::from_data(16, 16, (0..16 * 16 * 3).map(|_| rng.random()).collect()).unwrap();
    let a = random(&mut rng);
    let self_ssim = ssim(&a, &a).unwrap().value;

    let mut b = random(&mut rng);
    let analytic = ssim(&a, &b).unwrap().grad;
    let eps = 1e-6;
    let mut worst: f64 = 0.0;
    for k in 0..b.data.len() {
        let orig = b.data[k];
        b.data[k] = orig + eps;
        let hi = ssim(&a, &b).unwrap().value;
        b.data[k] = orig - eps;
        let lo = ssim(&a, &b).unwrap().value;
        b.data[k] = orig;
        let fd = (hi - lo) / (2.0 * eps);
        worst = worst.max((fd - analytic.data[k]).abs() / analytic.data[k].abs().max(fd.abs()).max(1e-3));
    }
    verdict(
        closed_form && (self_ssim - 1.0).abs() < 1e-12 && worst <= 1e-4,
        format!("PSNR {psnr_01:.6} / {psnr_05:.6} dB, SSIM(a,a) = {self_ssim}, SSIM gradient worst relative error {worst:.1e}"),
    )
}

// ---------------------------------------------------------------------------

fn guarded(f: impl FnOnce() -> Verdict) -> Verdict {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(v) => v,
        Err(e) => {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            verdict(false, format!("panicked: {msg}"))
        }
    }
}

fn main() -> ExitCode {
    let wanted: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let on = |c: u32| wanted.is_empty() || wanted.contains(&c);
    let mut failed = 0;
    let mut report = |c: u32, v: Verdict| {
        println!("criterion {c}: {} {}", if v.pass { "PASS" } else { "FAIL" }, v.detail);
        if !v.pass {
            failed += 1;
        }
    };

    for (c, f) in [(1, criterion_1 as fn() -> Verdict), (2, criterion_2), (7, criterion_7), (8, criterion_8)] {
        if on(c) {
            report(c, guarded(f));
        }
    }

    if [3, 4, 5, 6].iter().any(|&c| on(c)) {
        let bundle = scene();
        if on(3) {
            report(3, guarded(|| criterion_3(&bundle)));
        }
        if [4, 5, 6].iter().any(|&c| on(c)) {
            let start = Instant::now();
            let seeds: &[u64] = if on(5) || on(6) { &SEEDS } else { &SEEDS[..1] };
            let fits: Vec<Fitted> = seeds.iter().map(|&s| fit(&bundle, s)).collect();
            if on(4) {
                report(4, guarded(|| criterion_4(&bundle, &fits[0], start)));
            }
            let mut full = None;
            if on(5) {
                let mut rg = Vec::new();
                report(
                    5,
                    guarded(|| {
                        let (v, r) = criterion_5(&bundle, &fits);
                        rg = r;
                        v
                    }),
                );
                full = Some(rg).filter(|v| v.len() == fits.len());
            }
            if on(6) {
                report(6, guarded(|| criterion_6(&bundle, &fits, full.as_deref())));
            }
        }
    }

    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
