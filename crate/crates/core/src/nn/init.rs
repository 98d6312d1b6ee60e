//! Weight initializers.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::nn::tensor::Tensor;

/// `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`.
pub fn uniform_fan_in(rng: &mut impl Rng, shape: &[usize], fan_in: usize) -> Tensor {
    let bound = 1.0 / (fan_in.max(1) as f32).sqrt();
    let n = shape.iter().product();
    Tensor::from_vec(
        shape,
        (0..n).map(|_| rng.random_range(-bound..=bound)).collect(),
    )
}

/// `[rows, cols]` matrix with orthonormal columns (`rows >= cols`) or rows (`rows < cols`).
pub fn orthogonal(rng: &mut impl Rng, rows: usize, cols: usize) -> Tensor {
    let (tall, short) = (rows.max(cols), rows.min(cols));
    // `short` orthonormal vectors of length `tall`, by modified Gram-Schmidt in f64
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(short);
    while basis.len() < short {
        let mut v: Vec<f64> = (0..tall).map(|_| StandardNormal.sample(rng)).collect();
        for b in &basis {
            let dot: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
            v.iter_mut().zip(b).for_each(|(x, y)| *x -= dot * y);
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-6 {
            v.iter_mut().for_each(|x| *x /= norm);
            basis.push(v);
        }
    }
    let mut data = vec![0.0f32; rows * cols];
    for (k, b) in basis.iter().enumerate() {
        for (i, x) in b.iter().enumerate() {
            let (r, c) = if rows >= cols { (i, k) } else { (k, i) };
            data[r * cols + c] = *x as f32;
        }
    }
    Tensor::from_vec(&[rows, cols], data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn orthogonal_columns() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let q = orthogonal(&mut rng, 6, 4);
        for a in 0..4 {
            for b in 0..4 {
                let dot: f32 = (0..6)
                    .map(|i| q.data()[i * 4 + a] * q.data()[i * 4 + b])
                    .sum();
                let want = if a == b { 1.0 } else { 0.0 };
                assert!((dot - want).abs() < 1e-5);
            }
        }
    }

    #[test]
    fn uniform_bound() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let w = uniform_fan_in(&mut rng, &[10, 16], 16);
        assert!(w.data().iter().all(|v| v.abs() <= 0.25));
    }
}
