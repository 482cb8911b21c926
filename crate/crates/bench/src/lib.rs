//! Deterministic inputs shared by the benchmarks.

use protogs::io::random_set;
use protogs::nalgebra::Vector3;
use protogs::{Camera, Image, PrimitiveSet};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn scene(n: usize, size: usize, seed: u64) -> (PrimitiveSet, Camera) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let set = random_set(n, 0, &mut rng);
    let cam = Camera::look_at(
        Vector3::new(0.0, -2.2, 0.4),
        Vector3::zeros(),
        Vector3::z(),
        size,
        size,
        0.8,
    )
    .expect("valid camera");
    (set, cam)
}

pub fn noise_image(width: usize, height: usize, seed: u64) -> Image {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = (0..width * height * 3).map(|_| rng.random::<f64>()).collect();
    Image::from_data(width, height, data).expect("matching length")
}

/// `n` rows of dimension `d` drawn uniformly from the unit cube.
pub fn vectors(n: usize, d: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n * d).map(|_| rng.random::<f64>()).collect()
}

pub fn points(n: usize, seed: u64) -> Vec<Vector3<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| Vector3::new(rng.random(), rng.random(), rng.random()))
        .collect()
}
