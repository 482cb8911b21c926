//! SfM anchoring: anchors are sampled from the SfM points and every primitive
//! joins the tile of its nearest anchor.

use nalgebra::Vector3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};

/// How many anchors to draw.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum AnchorCount {
    /// Fraction of the available SfM points, rounded to nearest.
    Fraction(f64),
    Count(usize),
}

impl AnchorCount {
    pub fn resolve(self, available: usize) -> Result<usize> {
        let m = match self {
            AnchorCount::Fraction(f) => {
                if !(f > 0.0 && f <= 1.0) {
                    return Err(Error::InvalidArgument(format!("anchor fraction {f} not in (0, 1]")));
                }
                (f * available as f64).round() as usize
            }
            AnchorCount::Count(m) => m,
        };
        if m == 0 {
            return Err(Error::InvalidArgument(format!(
                "no anchors selected from {available} SfM points"
            )));
        }
        if m > available {
            return Err(Error::InvalidArgument(format!(
                "requested {m} anchors but only {available} SfM points"
            )));
        }
        Ok(m)
    }
}

/// Uniform sample of anchors without replacement, deterministic in `seed`.
pub fn sample_anchors(sfm_points: &[Vector3<f64>], count: AnchorCount, seed: u64) -> Result<Vec<Vector3<f64>>> {
    let m = count.resolve(sfm_points.len())?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let picked = rand::seq::index::sample(&mut rng, sfm_points.len(), m);
    Ok(picked.iter().map(|i| sfm_points[i]).collect())
}

/// Anchor positions and the primitive-to-tile partition.
#[derive(Clone, Debug, PartialEq)]
pub struct AnchorBank {
    pub anchors: Vec<Vector3<f64>>,
    pub assignment: Vec<usize>,
    pub tile_sizes: Vec<usize>,
}

impl AnchorBank {
    pub fn from_assignment(anchors: Vec<Vector3<f64>>, assignment: Vec<usize>) -> Self {
        let mut tile_sizes = vec![0; anchors.len()];
        for &t in &assignment {
            tile_sizes[t] += 1;
        }
        Self {
            anchors,
            assignment,
            tile_sizes,
        }
    }

    pub fn tile_count(&self) -> usize {
        self.anchors.len()
    }

    /// Member indices per tile, each list in ascending primitive order.
    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut out: Vec<Vec<usize>> = self.tile_sizes.iter().map(|&n| Vec::with_capacity(n)).collect();
        for (i, &t) in self.assignment.iter().enumerate() {
            out[t].push(i);
        }
        out
    }

    /// Anchors after one gradient step, each moved by the mean positional
    /// gradient of its tile members. Empty tiles stay put.
    pub fn fine_tuned_anchors(&self, position_grads: &[Vector3<f64>], lr: f64) -> Vec<Vector3<f64>> {
        let mut sum = vec![Vector3::zeros(); self.anchors.len()];
        for (g, &t) in position_grads.iter().zip(&self.assignment) {
            sum[t] += g;
        }
        self.anchors
            .iter()
            .zip(sum.iter().zip(&self.tile_sizes))
            .map(|(a, (s, &n))| if n == 0 { *a } else { a - s * (lr / n as f64) })
            .collect()
    }
}

#[inline]
fn dist2(a: &Vector3<f64>, b: &Vector3<f64>) -> f64 {
    let dx = a.x - b.x;
    let dy = a.y - b.y;
    let dz = a.z - b.z;
    dx * dx + dy * dy + dz * dz
}

fn nearest_brute(p: &Vector3<f64>, anchors: &[Vector3<f64>]) -> usize {
    let mut best = (f64::INFINITY, 0);
    for (j, a) in anchors.iter().enumerate() {
        let d = dist2(p, a);
        if d < best.0 {
            best = (d, j);
        }
    }
    best.1
}

/// Exhaustive `O(N M)` assignment; ties go to the smallest anchor index.
pub fn assign_tiles_brute_force(positions: &[Vector3<f64>], anchors: &[Vector3<f64>]) -> Result<AnchorBank> {
    if anchors.is_empty() {
        return Err(Error::InvalidArgument("at least one anchor is required".into()));
    }
    let assignment = positions.par_iter().map(|p| nearest_brute(p, anchors)).collect();
    Ok(AnchorBank::from_assignment(anchors.to_vec(), assignment))
}

/// Uniform grid over the anchors for exact nearest-anchor queries.
struct AnchorGrid<'a> {
    anchors: &'a [Vector3<f64>],
    origin: Vector3<f64>,
    cell: f64,
    dims: [usize; 3],
    /// Anchor indices per cell, ascending.
    cells: Vec<Vec<usize>>,
}

impl<'a> AnchorGrid<'a> {
    fn new(anchors: &'a [Vector3<f64>]) -> Self {
        let mut lo = anchors[0];
        let mut hi = anchors[0];
        for a in anchors {
            lo = lo.inf(a);
            hi = hi.sup(a);
        }
        let ext = hi - lo;
        let volume = ext.iter().map(|e| e.max(1e-9)).product::<f64>();
        // Roughly two anchors per cell.
        let mut cell = (2.0 * volume / anchors.len() as f64).cbrt();
        if !(cell.is_finite() && cell > 0.0) {
            cell = 1.0;
        }
        cell = cell.max(ext.max() / 256.0).max(1e-9);
        let dims = [0, 1, 2].map(|k| ((ext[k] / cell).floor() as usize + 1).min(256));
        let mut cells = vec![Vec::new(); dims[0] * dims[1] * dims[2]];
        let mut grid = Self {
            anchors,
            origin: lo,
            cell,
            dims,
            cells: Vec::new(),
        };
        for (j, a) in anchors.iter().enumerate() {
            let c = grid.cell_of(a);
            cells[grid.flat(c)].push(j);
        }
        grid.cells = cells;
        grid
    }

    fn cell_of(&self, p: &Vector3<f64>) -> [usize; 3] {
        [0, 1, 2].map(|k| {
            let f = ((p[k] - self.origin[k]) / self.cell).floor();
            if f.is_nan() || f < 0.0 {
                0
            } else {
                (f as usize).min(self.dims[k] - 1)
            }
        })
    }

    fn flat(&self, c: [usize; 3]) -> usize {
        (c[2] * self.dims[1] + c[1]) * self.dims[0] + c[0]
    }

    fn nearest(&self, p: &Vector3<f64>) -> usize {
        let c = self.cell_of(p);
        let max_ring = *self.dims.iter().max().unwrap();
        let mut best = (f64::INFINITY, usize::MAX);
        for r in 0..=max_ring {
            let lo = c.map(|v| v as isize - r as isize);
            let hi = c.map(|v| v as isize + r as isize);
            for z in lo[2].max(0)..=hi[2].min(self.dims[2] as isize - 1) {
                for y in lo[1].max(0)..=hi[1].min(self.dims[1] as isize - 1) {
                    for x in lo[0].max(0)..=hi[0].min(self.dims[0] as isize - 1) {
                        let on_shell = [x, y, z].iter().zip(lo.iter().zip(&hi)).any(|(v, (l, h))| v == l || v == h);
                        if !on_shell {
                            continue;
                        }
                        for &j in &self.cells[self.flat([x as usize, y as usize, z as usize])] {
                            let d = dist2(p, &self.anchors[j]);
                            if d < best.0 || (d == best.0 && j < best.1) {
                                best = (d, j);
                            }
                        }
                    }
                }
            }
            // Every anchor outside the searched block is at least `bound` away.
            let mut bound = f64::INFINITY;
            let mut covers_all = true;
            for k in 0..3 {
                if lo[k] > 0 {
                    covers_all = false;
                    let face = self.origin[k] + lo[k] as f64 * self.cell;
                    bound = bound.min((p[k] - face).max(0.0));
                }
                if hi[k] < self.dims[k] as isize - 1 {
                    covers_all = false;
                    let face = self.origin[k] + (hi[k] + 1) as f64 * self.cell;
                    bound = bound.min((face - p[k]).max(0.0));
                }
            }
            if covers_all {
                break;
            }
            // Strict comparison with slack: an anchor exactly at the bound could tie.
            if best.1 != usize::MAX && bound * bound * (1.0 - 1e-9) > best.0 {
                break;
            }
        }
        best.1
    }
}

/// Assigns every position to its nearest anchor (Euclidean), ties to the
/// smallest anchor index. Agrees exactly with [`assign_tiles_brute_force`].
pub fn assign_tiles(positions: &[Vector3<f64>], anchors: &[Vector3<f64>]) -> Result<AnchorBank> {
    if anchors.is_empty() {
        return Err(Error::InvalidArgument("at least one anchor is required".into()));
    }
    if anchors.len() <= 8 {
        return assign_tiles_brute_force(positions, anchors);
    }
    let grid = AnchorGrid::new(anchors);
    let assignment = positions.par_iter().map(|p| grid.nearest(p)).collect();
    Ok(AnchorBank::from_assignment(anchors.to_vec(), assignment))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    #[test]
    fn fraction_resolution() {
        assert_eq!(AnchorCount::Fraction(0.2).resolve(10).unwrap(), 2);
        assert_eq!(AnchorCount::Fraction(1.0).resolve(7).unwrap(), 7);
        assert!(AnchorCount::Count(11).resolve(10).is_err());
        assert!(AnchorCount::Count(0).resolve(10).is_err());
        assert!(AnchorCount::Fraction(0.01).resolve(10).is_err());
        assert!(AnchorCount::Count(1).resolve(0).is_err());
    }

    #[test]
    fn sampling_is_deterministic_subset() {
        let pts: Vec<_> = (0..10).map(|i| Vector3::new(i as f64, 0.0, 0.0)).collect();
        let a = sample_anchors(&pts, AnchorCount::Fraction(0.2), 7).unwrap();
        let b = sample_anchors(&pts, AnchorCount::Fraction(0.2), 7).unwrap();
        assert_eq!(a.len(), 2);
        assert_eq!(a, b);
        assert!(a.iter().all(|p| pts.contains(p)));
        let mut all = sample_anchors(&pts, AnchorCount::Fraction(1.0), 3).unwrap();
        all.sort_by(|p, q| p.x.total_cmp(&q.x));
        assert_eq!(all, pts);
    }

    #[test]
    fn assignment_examples() {
        let anchors = vec![Vector3::zeros(), Vector3::new(10.0, 0.0, 0.0)];
        let pos = vec![Vector3::new(1.0, 0.0, 0.0), Vector3::new(5.0, 0.0, 0.0), Vector3::new(9.0, 1.0, 0.0)];
        let bank = assign_tiles(&pos, &anchors).unwrap();
        assert_eq!(bank.assignment, vec![0, 0, 1]);
        assert_eq!(bank.tile_sizes, vec![2, 1]);
        assert!(assign_tiles(&pos, &[]).is_err());
    }

    #[test]
    fn single_anchor_takes_everything() {
        let pos: Vec<_> = (0..20).map(|i| Vector3::new(i as f64, -(i as f64), 0.5)).collect();
        let bank = assign_tiles(&pos, &[Vector3::new(3.0, 3.0, 3.0)]).unwrap();
        assert!(bank.assignment.iter().all(|&t| t == 0));
        assert_eq!(bank.tile_sizes, vec![20]);
    }

    #[test]
    fn grid_matches_brute_force_with_ties() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        // Integer lattice coordinates make exact ties common.
        let anchors: Vec<_> = (0..60)
            .map(|_| Vector3::new(rng.random_range(0..6) as f64, rng.random_range(0..6) as f64, rng.random_range(0..3) as f64))
            .collect();
        let pos: Vec<_> = (0..3000)
            .map(|_| Vector3::new(rng.random_range(-2..8) as f64 * 0.5, rng.random_range(-2..8) as f64 * 0.5, rng.random_range(-1..4) as f64 * 0.5))
            .collect();
        let a = assign_tiles(&pos, &anchors).unwrap();
        let b = assign_tiles_brute_force(&pos, &anchors).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn fine_tune_moves_by_mean_gradient() {
        let bank = AnchorBank::from_assignment(vec![Vector3::zeros(), Vector3::x()], vec![0, 0, 1]);
        let grads = vec![Vector3::new(1.0, 0.0, 0.0), Vector3::new(3.0, 0.0, 0.0), Vector3::new(0.0, 2.0, 0.0)];
        let moved = bank.fine_tuned_anchors(&grads, 0.5);
        assert_eq!(moved[0], Vector3::new(-1.0, 0.0, 0.0));
        assert_eq!(moved[1], Vector3::new(1.0, -1.0, 0.0));
    }

    proptest! {
        #[test]
        fn partition_and_rigid_invariance(
            seed in any::<u64>(),
            m in 1usize..40,
            angle in -3.0..3.0f64,
            shift in prop::array::uniform3(-5.0..5.0f64),
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let anchors: Vec<_> = (0..m).map(|_| Vector3::from_fn(|_, _| rng.random_range(-1.0..1.0))).collect();
            let pos: Vec<_> = (0..200).map(|_| Vector3::from_fn(|_, _| rng.random_range(-1.5..1.5))).collect();
            let bank = assign_tiles(&pos, &anchors).unwrap();
            prop_assert_eq!(bank.tile_sizes.iter().sum::<usize>(), pos.len());
            prop_assert!(bank.assignment.iter().all(|&t| t < m));
            let rot = nalgebra::Rotation3::from_axis_angle(&Vector3::z_axis(), angle);
            let t = Vector3::from(shift);
            let moved_a: Vec<_> = anchors.iter().map(|a| rot * a + t).collect();
            let moved_p: Vec<_> = pos.iter().map(|p| rot * p + t).collect();
            let moved = assign_tiles(&moved_p, &moved_a).unwrap();
            prop_assert_eq!(moved.assignment, bank.assignment);
        }
    }
}
