#![allow(dead_code)]

use hevfl::dataset::{vertical_split, Dataset, VerticalSplit};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Uniform features in [-1, 1] with random +-1 labels.
pub fn random_dataset(n: usize, d: usize, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect())
        .collect();
    let y = (0..n).map(|_| if rng.gen_bool(0.5) { 1.0 } else { -1.0 }).collect();
    Dataset::from_rows(&rows, y).unwrap()
}

pub fn random_split(n: usize, d: usize, seed: u64) -> VerticalSplit {
    let data = random_dataset(n, d, seed);
    let d_a = 1 + (seed as usize % (d - 1));
    vertical_split(&data, d_a).unwrap()
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}
