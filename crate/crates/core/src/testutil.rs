use num_complex::Complex64;

use crate::random::{complex_gaussian_matrix, complex_gaussian_tensor, stream, StreamRng};
use crate::tensor::{ComplexMatrix, Tensor3};

pub fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

pub fn rng(seed: u64) -> StreamRng {
    stream(seed)
}

pub fn random_matrix(rng: &mut StreamRng, rows: usize, cols: usize) -> ComplexMatrix {
    complex_gaussian_matrix(rng, rows, cols)
}

pub fn random_tensor(rng: &mut StreamRng, d1: usize, d2: usize, d3: usize) -> Tensor3 {
    complex_gaussian_tensor(rng, d1, d2, d3)
}

pub fn max_abs(m: &ComplexMatrix) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}
