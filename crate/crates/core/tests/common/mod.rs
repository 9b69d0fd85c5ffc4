#![allow(dead_code)]

use milpf::milhead::{BagFeatures, HeadParams, ParamLayout};
use ndarray::Array2;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn random_params(layout: ParamLayout, rng: &mut ChaCha8Rng, scale: f64) -> HeadParams {
    let values = (0..layout.len()).map(|_| rng.random_range(-scale..scale)).collect();
    HeadParams::from_values(layout, values).unwrap()
}

pub fn random_bag(rng: &mut ChaCha8Rng, d: usize, views: usize, tiles: usize, label: f64) -> BagFeatures {
    BagFeatures::new(
        Array2::from_shape_fn((views, d), |_| rng.random_range(-1.0..1.0)),
        Array2::from_shape_fn((tiles, d), |_| rng.random_range(-1.0..1.0)),
        label,
    )
    .unwrap()
}

pub fn rel_diff(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-300)
}
