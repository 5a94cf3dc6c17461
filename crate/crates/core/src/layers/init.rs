use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::Tensor;

/// Glorot-uniform matrix `[rows, cols]`: U(-l, l) with l = sqrt(6/(fan_in+fan_out)).
pub fn glorot_uniform(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Tensor {
    let limit = (6.0 / (rows + cols) as f64).sqrt();
    let data: Vec<f64> = (0..rows * cols).map(|_| rng.gen_range(-limit..limit)).collect();
    Tensor::raw(vec![rows, cols], data)
}

pub fn zeros_vec(n: usize) -> Tensor {
    Tensor::vector(vec![0.0; n])
}

pub fn ones_vec(n: usize) -> Tensor {
    Tensor::vector(vec![1.0; n])
}

pub fn filled_vec(n: usize, v: f64) -> Tensor {
    Tensor::vector(vec![v; n])
}
