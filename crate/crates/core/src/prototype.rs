//! Gaussian prototypes: per-tile weighted K-means over flattened primitive
//! rows, the clustering objective, and replacement of primitives by their
//! prototypes.
//!
//! Within tile `m` with members `G_{m,i}` and centres `mu_{m,k}` the objective is
//!
//! ```text
//! J^m = sum_i || w_m * (G_{m,i} - mu_{m, r(i)}) ||^2,   L_c = sum_m J^m
//! ```
//!
//! where `w_m` are per-dimension weights (inverse standard deviations of the
//! tile by default, or all ones).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::anchor::AnchorBank;
use crate::error::{Error, Result};
use crate::gaussian::{PrimitiveSet, RowLayout};

/// Upper bound on Lloyd iterations per tile.
pub const MAX_LLOYD_ITERATIONS: usize = 50;

/// K-means++ starts per cold derivation; the lowest objective wins.
pub const KMEANS_STARTS: usize = 4;

/// Standard deviations below this are treated as this when whitening.
const MIN_STD: f64 = 1e-3;

/// Number of clusters for a tile of `n` primitives at compression ratio
/// `ratio`: `max(1, ceil(ratio * n))`, never more than `n`.
pub fn choose_k(n: usize, ratio: f64) -> usize {
    if n == 0 {
        return 0;
    }
    // The epsilon keeps e.g. 0.1 * 30 = 3.0000000000000004 from rounding up.
    let k = (ratio * n as f64 - 1e-9).ceil();
    (k.max(1.0) as usize).min(n)
}

/// One progressive decay step. `choose_k` keeps every non-empty tile at one
/// cluster or more however small the ratio becomes.
pub fn decay_ratio(current_ratio: f64, decay_rate: f64) -> f64 {
    current_ratio * decay_rate
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum WeightMode {
    /// Per-dimension inverse standard deviation of the tile.
    Whiten,
    Unweighted,
}

/// Per-dimension clustering weights for a tile whose rows are `vectors`.
pub fn tile_weights(vectors: &[f64], d: usize, mode: WeightMode, position_weight: f64) -> Vec<f64> {
    let mut w = vec![1.0; d];
    let n = vectors.len() / d;
    if mode == WeightMode::Whiten && n > 1 {
        for (j, wj) in w.iter_mut().enumerate() {
            let mean = vectors.iter().skip(j).step_by(d).sum::<f64>() / n as f64;
            let var = vectors.iter().skip(j).step_by(d).map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
            *wj = 1.0 / var.sqrt().max(MIN_STD);
        }
    }
    for wj in &mut w[RowLayout::POSITION] {
        *wj *= position_weight;
    }
    w
}

#[inline]
fn weighted_dist2(a: &[f64], b: &[f64], w2: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .zip(w2)
        .map(|((x, y), w)| {
            let d = x - y;
            w * d * d
        })
        .sum()
}

#[derive(Clone, Debug, PartialEq)]
pub struct KMeansResult {
    /// `K x d`, row-major.
    pub means: Vec<f64>,
    pub labels: Vec<usize>,
    /// Objective after each assignment step.
    pub objective_history: Vec<f64>,
}

impl KMeansResult {
    pub fn objective(&self) -> f64 {
        self.objective_history.last().copied().unwrap_or(0.0)
    }
}

/// Nearest centre under the weighted metric, ties to the lowest index.
fn nearest(x: &[f64], means: &[f64], d: usize, w2: &[f64]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (k, m) in means.chunks_exact(d).enumerate() {
        let dist = weighted_dist2(x, m, w2);
        if dist < best.1 {
            best = (k, dist);
        }
    }
    best
}

/// K-means++ seeding, continuing from any centres already in `means`.
fn seed_plus_plus(vectors: &[f64], d: usize, k: usize, w2: &[f64], means: &mut Vec<f64>, rng: &mut impl Rng) {
    let n = vectors.len() / d;
    let mut chosen = vec![false; n];
    let mut d2: Vec<f64> = vectors
        .chunks_exact(d)
        .map(|x| if means.is_empty() { f64::INFINITY } else { nearest(x, means, d, w2).1 })
        .collect();
    while means.len() / d < k {
        let total: f64 = d2.iter().filter(|v| v.is_finite()).sum();
        let pick = if means.is_empty() {
            rng.random_range(0..n)
        } else if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut pick = n - 1;
            for (i, &v) in d2.iter().enumerate() {
                if v <= 0.0 {
                    continue;
                }
                if target < v {
                    pick = i;
                    break;
                }
                target -= v;
                pick = i;
            }
            pick
        } else {
            // All remaining points coincide with centres: take any unused one.
            let free: Vec<usize> = (0..n).filter(|&i| !chosen[i]).collect();
            free[rng.random_range(0..free.len())]
        };
        chosen[pick] = true;
        let c = &vectors[pick * d..(pick + 1) * d];
        means.extend_from_slice(c);
        for (i, x) in vectors.chunks_exact(d).enumerate() {
            let dist = weighted_dist2(x, c, w2);
            if dist < d2[i] {
                d2[i] = dist;
            }
        }
    }
}

/// Weighted Lloyd K-means on the rows of one tile.
///
/// `init` may carry up to `k` starting centres (warm start); the remainder
/// are seeded with K-means++. Unless the warm start covers all `k`, the
/// best of [`KMEANS_STARTS`] seeded runs is kept. With `k == n` every row is
/// its own centre.
pub fn kmeans_tile(
    vectors: &[f64],
    d: usize,
    k: usize,
    weights: &[f64],
    seed: u64,
    init: Option<&[f64]>,
) -> Result<KMeansResult> {
    if d == 0 || vectors.len() % d != 0 {
        return Err(Error::shape(format!("rows of length {d}"), vectors.len()));
    }
    let n = vectors.len() / d;
    if k == 0 || k > n {
        return Err(Error::InvalidArgument(format!("K = {k} must lie in 1..={n}")));
    }
    if weights.len() != d || weights.iter().any(|w| !(*w > 0.0)) {
        return Err(Error::InvalidArgument("weights must be positive, one per dimension".into()));
    }
    if k == n {
        return Ok(KMeansResult {
            means: vectors.to_vec(),
            labels: (0..n).collect(),
            objective_history: vec![0.0],
        });
    }
    let w2: Vec<f64> = weights.iter().map(|w| w * w).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let warm = init.map_or(0, |i| (i.len() / d).min(k));
    // A full warm start is deterministic, so one run suffices.
    let starts = if warm == k { 1 } else { KMEANS_STARTS };
    let mut best: Option<(f64, KMeansResult)> = None;
    for _ in 0..starts {
        let mut means = Vec::with_capacity(k * d);
        if let Some(init) = init {
            means.extend_from_slice(&init[..warm * d]);
        }
        seed_plus_plus(vectors, d, k, &w2, &mut means, &mut rng);
        let run = lloyd(vectors, d, k, &w2, means);
        let j = labelled_sse(vectors, d, &run.labels, &centroids(vectors, d, &run.labels, k), &w2);
        if best.as_ref().is_none_or(|(b, _)| j < *b) {
            best = Some((j, run));
        }
    }
    Ok(best.expect("at least one start").1)
}

fn labelled_sse(vectors: &[f64], d: usize, labels: &[usize], means: &[f64], w2: &[f64]) -> f64 {
    vectors
        .chunks_exact(d)
        .zip(labels)
        .map(|(x, &l)| weighted_dist2(x, &means[l * d..(l + 1) * d], w2))
        .sum()
}

fn lloyd(vectors: &[f64], d: usize, k: usize, w2: &[f64], mut means: Vec<f64>) -> KMeansResult {
    let n = vectors.len() / d;
    let mut labels = vec![usize::MAX; n];
    let mut dists = vec![0.0; n];
    let mut history = Vec::new();
    for _ in 0..MAX_LLOYD_ITERATIONS {
        let mut changed = false;
        for (i, x) in vectors.chunks_exact(d).enumerate() {
            let (best, dist) = nearest(x, &means, d, w2);
            changed |= labels[i] != best;
            labels[i] = best;
            dists[i] = dist;
        }
        // Reseed empty clusters at the point farthest from its centre.
        let mut counts = vec![0usize; k];
        for &l in &labels {
            counts[l] += 1;
        }
        for c in 0..k {
            if counts[c] > 0 {
                continue;
            }
            let far = (0..n)
                .filter(|&i| counts[labels[i]] > 1)
                .max_by(|&a, &b| dists[a].total_cmp(&dists[b]).then(b.cmp(&a)))
                .expect("k < n leaves a cluster with two members");
            counts[labels[far]] -= 1;
            labels[far] = c;
            counts[c] = 1;
            dists[far] = 0.0;
            means[c * d..(c + 1) * d].copy_from_slice(&vectors[far * d..(far + 1) * d]);
            changed = true;
        }
        history.push(dists.iter().sum());
        if !changed && history.len() > 1 {
            break;
        }
        means = centroids(vectors, d, &labels, k);
    }
    KMeansResult {
        means,
        labels,
        objective_history: history,
    }
}

/// Mean of the rows assigned to each of `k` clusters.
pub fn centroids(vectors: &[f64], d: usize, labels: &[usize], k: usize) -> Vec<f64> {
    let mut sums = vec![0.0; k * d];
    let mut counts = vec![0usize; k];
    for (x, &l) in vectors.chunks_exact(d).zip(labels) {
        counts[l] += 1;
        for (s, v) in sums[l * d..(l + 1) * d].iter_mut().zip(x) {
            *s += v;
        }
    }
    for (c, &n) in counts.iter().enumerate() {
        if n > 0 {
            for s in &mut sums[c * d..(c + 1) * d] {
                *s /= n as f64;
            }
        }
    }
    sums
}

/// Prototypes of one tile.
#[derive(Clone, Debug, PartialEq)]
pub struct TilePrototypes {
    /// `K^m x d`, row-major.
    pub means: Vec<f64>,
    pub weights: Vec<f64>,
    /// Number of members per cluster.
    pub sizes: Vec<usize>,
}

impl TilePrototypes {
    pub fn k(&self) -> usize {
        self.sizes.len()
    }
}

/// Prototype means per tile plus the one-hot assignment of every primitive.
#[derive(Clone, Debug, PartialEq)]
pub struct PrototypeSet {
    pub sh_degree: usize,
    pub tiles: Vec<TilePrototypes>,
    /// `(tile, cluster)` per primitive.
    pub assignment: Vec<(usize, usize)>,
    pub ratio: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ClusterOptions {
    pub weighting: WeightMode,
    pub position_weight: f64,
}

impl Default for ClusterOptions {
    fn default() -> Self {
        Self {
            weighting: WeightMode::Whiten,
            position_weight: 1.0,
        }
    }
}

fn tile_seed(seed: u64, tile: usize) -> u64 {
    seed ^ (tile as u64).wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

impl PrototypeSet {
    pub fn dim(&self) -> usize {
        RowLayout::new(self.sh_degree).dim()
    }

    pub fn k_per_tile(&self) -> Vec<usize> {
        self.tiles.iter().map(TilePrototypes::k).collect()
    }

    pub fn total(&self) -> usize {
        self.tiles.iter().map(TilePrototypes::k).sum()
    }

    /// Index of the first prototype of each tile in [`Self::means_rows`].
    pub fn offsets(&self) -> Vec<usize> {
        let mut acc = 0;
        self.tiles
            .iter()
            .map(|t| {
                let o = acc;
                acc += t.k();
                o
            })
            .collect()
    }

    /// Global prototype index of every primitive.
    pub fn global_labels(&self) -> Vec<usize> {
        let offsets = self.offsets();
        self.assignment.iter().map(|&(t, c)| offsets[t] + c).collect()
    }

    /// All means concatenated tile by tile, `sum K^m x d`.
    pub fn means_rows(&self) -> Vec<f64> {
        self.tiles.iter().flat_map(|t| t.means.iter().copied()).collect()
    }

    pub fn set_means_rows(&mut self, rows: &[f64]) {
        let d = self.dim();
        let mut at = 0;
        for t in &mut self.tiles {
            let len = t.k() * d;
            t.means.copy_from_slice(&rows[at..at + len]);
            at += len;
        }
    }

    /// Cluster sizes in global prototype order.
    pub fn sizes(&self) -> Vec<usize> {
        self.tiles.iter().flat_map(|t| t.sizes.iter().copied()).collect()
    }

    fn check(&self, n: usize) -> Result<()> {
        if self.assignment.len() != n {
            return Err(Error::StaleAssignment(format!(
                "{} assignments for {n} primitives",
                self.assignment.len()
            )));
        }
        for (i, &(t, c)) in self.assignment.iter().enumerate() {
            if t >= self.tiles.len() || c >= self.tiles[t].k() {
                return Err(Error::StaleAssignment(format!(
                    "primitive {i} points at tile {t} cluster {c}"
                )));
            }
        }
        Ok(())
    }

    /// Derives prototypes tile by tile. Tiles are clustered in parallel with
    /// per-tile seeds, so the result does not depend on scheduling.
    ///
    /// With `previous`, each tile warm-starts from the current centroids of
    /// its members' previous clusters, largest clusters first.
    pub fn derive(
        rows: &[f64],
        sh_degree: usize,
        bank: &AnchorBank,
        ratio: f64,
        opts: ClusterOptions,
        seed: u64,
        previous: Option<&PrototypeSet>,
    ) -> Result<Self> {
        let d = RowLayout::new(sh_degree).dim();
        let n = rows.len() / d;
        if bank.assignment.len() != n {
            return Err(Error::shape(format!("{n} tile assignments"), bank.assignment.len()));
        }
        if !(ratio > 0.0 && ratio <= 1.0) {
            return Err(Error::InvalidArgument(format!("compression ratio {ratio} not in (0, 1]")));
        }
        if let Some(prev) = previous {
            prev.check(n)?;
        }
        let members = bank.members();
        let prev_labels = previous.map(PrototypeSet::global_labels);
        let results: Vec<(TilePrototypes, Vec<usize>)> = members
            .par_iter()
            .enumerate()
            .map(|(t, idx)| -> Result<(TilePrototypes, Vec<usize>)> {
                if idx.is_empty() {
                    return Ok((
                        TilePrototypes {
                            means: Vec::new(),
                            weights: vec![1.0; d],
                            sizes: Vec::new(),
                        },
                        Vec::new(),
                    ));
                }
                let mut vectors = Vec::with_capacity(idx.len() * d);
                for &i in idx {
                    vectors.extend_from_slice(&rows[i * d..(i + 1) * d]);
                }
                let weights = tile_weights(&vectors, d, opts.weighting, opts.position_weight);
                let k = choose_k(idx.len(), ratio);
                let init = prev_labels.as_ref().map(|pl| warm_start(&vectors, d, idx, pl, k));
                let res = kmeans_tile(&vectors, d, k, &weights, tile_seed(seed, t), init.as_deref())?;
                let mut sizes = vec![0; k];
                for &l in &res.labels {
                    sizes[l] += 1;
                }
                Ok((
                    TilePrototypes {
                        means: res.means,
                        weights,
                        sizes,
                    },
                    res.labels,
                ))
            })
            .collect::<Result<_>>()?;

        let mut assignment = vec![(0, 0); n];
        let mut tiles = Vec::with_capacity(results.len());
        for (t, ((tile, labels), idx)) in results.into_iter().zip(&members).enumerate() {
            for (&i, &l) in idx.iter().zip(&labels) {
                assignment[i] = (t, l);
            }
            tiles.push(tile);
        }
        Ok(Self {
            sh_degree,
            tiles,
            assignment,
            ratio,
        })
    }

    /// Recomputes every mean as the centroid of its current members, keeping
    /// the assignment fixed.
    pub fn recenter(&mut self, rows: &[f64]) -> Result<()> {
        let d = self.dim();
        self.check(rows.len() / d)?;
        let mut sums: Vec<Vec<f64>> = self.tiles.iter().map(|t| vec![0.0; t.k() * d]).collect();
        for (i, &(t, c)) in self.assignment.iter().enumerate() {
            for (s, v) in sums[t][c * d..(c + 1) * d].iter_mut().zip(&rows[i * d..(i + 1) * d]) {
                *s += v;
            }
        }
        for (tile, sum) in self.tiles.iter_mut().zip(sums) {
            for (c, &size) in tile.sizes.iter().enumerate() {
                if size > 0 {
                    for (m, s) in tile.means[c * d..(c + 1) * d].iter_mut().zip(&sum[c * d..(c + 1) * d]) {
                        *m = s / size as f64;
                    }
                }
            }
        }
        Ok(())
    }

    /// Per-tile objectives `J^m`.
    pub fn tile_objectives(&self, rows: &[f64]) -> Result<Vec<f64>> {
        let d = self.dim();
        self.check(rows.len() / d)?;
        let mut j = vec![0.0; self.tiles.len()];
        for (i, &(t, c)) in self.assignment.iter().enumerate() {
            let tile = &self.tiles[t];
            let w2: Vec<f64> = tile.weights.iter().map(|w| w * w).collect();
            j[t] += weighted_dist2(&rows[i * d..(i + 1) * d], &tile.means[c * d..(c + 1) * d], &w2);
        }
        Ok(j)
    }

    /// `L_c` and its gradient with respect to the primitive rows (means held
    /// fixed) and with respect to the means.
    pub fn loss_with_grad(&self, rows: &[f64]) -> Result<(f64, Vec<f64>, Vec<f64>)> {
        let d = self.dim();
        self.check(rows.len() / d)?;
        let offsets = self.offsets();
        let mut d_rows = vec![0.0; rows.len()];
        let mut d_means = vec![0.0; self.total() * d];
        let mut total = 0.0;
        for (i, &(t, c)) in self.assignment.iter().enumerate() {
            let tile = &self.tiles[t];
            let mean = &tile.means[c * d..(c + 1) * d];
            let g = offsets[t] + c;
            for j in 0..d {
                let w2 = tile.weights[j] * tile.weights[j];
                let diff = rows[i * d + j] - mean[j];
                total += w2 * diff * diff;
                d_rows[i * d + j] = 2.0 * w2 * diff;
                d_means[g * d + j] -= 2.0 * w2 * diff;
            }
        }
        Ok((total, d_rows, d_means))
    }

    pub fn to_primitive_set(&self) -> Result<PrimitiveSet> {
        let set = PrimitiveSet::from_rows(&self.means_rows(), self.sh_degree)?;
        set.check_finite()?;
        Ok(set)
    }
}

/// Starting centres for a tile: centroids of the members' previous clusters,
/// largest first, at most `k` of them.
fn warm_start(vectors: &[f64], d: usize, members: &[usize], prev_labels: &[usize], k: usize) -> Vec<f64> {
    let mut groups: Vec<(usize, Vec<usize>)> = Vec::new();
    for (local, &i) in members.iter().enumerate() {
        let label = prev_labels[i];
        match groups.iter_mut().find(|(l, _)| *l == label) {
            Some((_, g)) => g.push(local),
            None => groups.push((label, vec![local])),
        }
    }
    // Stable: larger groups first, then previous label order.
    groups.sort_by(|a, b| b.1.len().cmp(&a.1.len()).then(a.0.cmp(&b.0)));
    let mut init = Vec::with_capacity(k * d);
    for (_, g) in groups.iter().take(k) {
        let mut c = vec![0.0; d];
        for &local in g {
            for (cj, v) in c.iter_mut().zip(&vectors[local * d..(local + 1) * d]) {
                *cj += v;
            }
        }
        init.extend(c.iter().map(|v| v / g.len() as f64));
    }
    init
}

/// `L_c = sum_m J^m` for the current rows of `set`.
pub fn clustering_loss(set: &PrimitiveSet, bank: &AnchorBank, protos: &PrototypeSet) -> Result<f64> {
    let rows = set.to_rows();
    if bank.assignment.len() != set.len() {
        return Err(Error::StaleAssignment(format!(
            "anchor bank covers {} primitives, set has {}",
            bank.assignment.len(),
            set.len()
        )));
    }
    protos.check(set.len())?;
    for (i, &(t, _)) in protos.assignment.iter().enumerate() {
        if bank.assignment[i] != t {
            return Err(Error::StaleAssignment(format!(
                "primitive {i} is in tile {} but its prototype is in tile {t}",
                bank.assignment[i]
            )));
        }
    }
    Ok(protos.tile_objectives(&rows)?.iter().sum())
}

/// A new set made of one primitive per prototype; `set` is left untouched.
pub fn replace_with_prototypes(set: &PrimitiveSet, protos: &PrototypeSet) -> Result<PrimitiveSet> {
    protos.check(set.len())?;
    if protos.sh_degree != set.sh_degree {
        return Err(Error::shape(format!("SH degree {}", set.sh_degree), protos.sh_degree));
    }
    protos.to_primitive_set()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn choose_k_examples() {
        assert_eq!(choose_k(100, 0.25), 25);
        assert_eq!(choose_k(3, 0.1), 1);
        assert_eq!(choose_k(17, 1.0), 17);
        assert_eq!(choose_k(30, 0.1), 3);
        assert_eq!(choose_k(1, 1e-6), 1);
    }

    #[test]
    fn decay_examples() {
        assert_eq!(decay_ratio(1.0, 0.5), 0.5);
        assert_eq!(decay_ratio(0.5, 0.5), 0.25);
        assert_eq!(choose_k(1, decay_ratio(decay_ratio(0.5, 0.5), 0.5)), 1);
    }

    #[test]
    fn kmeans_identity_when_k_equals_n() {
        let v = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        let r = kmeans_tile(&v, 2, 3, &[1.0, 1.0], 0, None).unwrap();
        assert_eq!(r.means, v);
        assert_eq!(r.labels, vec![0, 1, 2]);
        assert_eq!(r.objective(), 0.0);
    }

    #[test]
    fn kmeans_duplicate_points() {
        let v = [0.3, -1.0, 0.3, -1.0];
        let r = kmeans_tile(&v, 2, 1, &[1.0, 1.0], 5, None).unwrap();
        assert_eq!(r.means, vec![0.3, -1.0]);
        assert_eq!(r.objective(), 0.0);
    }

    #[test]
    fn kmeans_one_dimensional_pairs() {
        // Exhaustive oracle over all 2-partitions of {0, 1, 10, 11}.
        let pts = [0.0, 1.0, 10.0, 11.0];
        let mut best = f64::INFINITY;
        for mask in 1u32..(1 << 4) - 1 {
            let mut j = 0.0;
            for side in [true, false] {
                let g: Vec<f64> = (0..4).filter(|&i| ((mask >> i) & 1 == 1) == side).map(|i| pts[i]).collect();
                let m = g.iter().sum::<f64>() / g.len() as f64;
                j += g.iter().map(|x| (x - m) * (x - m)).sum::<f64>();
            }
            best = best.min(j);
        }
        assert_eq!(best, 1.0);
        for seed in 0..20 {
            let r = kmeans_tile(&pts, 1, 2, &[1.0], seed, None).unwrap();
            let mut m = r.means.clone();
            m.sort_by(f64::total_cmp);
            assert_eq!(m, vec![0.5, 10.5]);
            assert!((r.objective() - best).abs() < 1e-12);
        }
    }

    #[test]
    fn kmeans_rejects_bad_k() {
        assert!(kmeans_tile(&[1.0, 2.0], 1, 3, &[1.0], 0, None).is_err());
        assert!(kmeans_tile(&[1.0, 2.0], 1, 0, &[1.0], 0, None).is_err());
        assert!(kmeans_tile(&[1.0, 2.0], 1, 1, &[0.0], 0, None).is_err());
    }

    #[test]
    fn kmeans_invariants_random() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for trial in 0..50 {
            let d = rng.random_range(1..6);
            let n = rng.random_range(4..60);
            let k = rng.random_range(1..n);
            let v: Vec<f64> = (0..n * d).map(|_| rng.random_range(-3.0..3.0)).collect();
            let w: Vec<f64> = (0..d).map(|_| rng.random_range(0.2..2.0)).collect();
            let r = kmeans_tile(&v, d, k, &w, trial, None).unwrap();
            for pair in r.objective_history.windows(2) {
                assert!(pair[1] <= pair[0] * (1.0 + 1e-12) + 1e-12, "{:?}", r.objective_history);
            }
            let w2: Vec<f64> = w.iter().map(|x| x * x).collect();
            let cents = centroids(&v, d, &r.labels, k);
            for (a, b) in cents.iter().zip(&r.means) {
                assert!((a - b).abs() < 1e-9, "centroid condition");
            }
            for (i, x) in v.chunks_exact(d).enumerate() {
                let own = weighted_dist2(x, &r.means[r.labels[i] * d..(r.labels[i] + 1) * d], &w2);
                let (_, best) = nearest(x, &r.means, d, &w2);
                assert!(own <= best + 1e-12, "nearest-centre condition");
            }
            assert_eq!(r.labels.iter().copied().collect::<std::collections::BTreeSet<_>>().len(), k);
        }
    }

    #[test]
    fn closed_form_two_points() {
        let delta = 0.8;
        let rows = vec![
            0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.1, 0.2, 0.3, //
            delta, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.1, 0.2, 0.3,
        ];
        let set = PrimitiveSet::from_rows(&rows, 0).unwrap();
        let bank = AnchorBank::from_assignment(vec![nalgebra::Vector3::zeros()], vec![0, 0]);
        let opts = ClusterOptions {
            weighting: WeightMode::Unweighted,
            position_weight: 1.0,
        };
        let protos = PrototypeSet::derive(&rows, 0, &bank, 0.5, opts, 0, None).unwrap();
        assert_eq!(protos.total(), 1);
        let lc = clustering_loss(&set, &bank, &protos).unwrap();
        assert!((lc - delta * delta / 2.0).abs() < 1e-15);
    }
}
