#![allow(dead_code)]

use kbr_core::classifiers::LabeledSample;
use kbr_core::kernels::ClassLabel;
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Jittered grid with spacing 2 in the plane: a well-conditioned Gaussian
/// Gram matrix at sigma = 1.
pub fn spread_points(rng: &mut ChaCha8Rng, n: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|i| {
            let (gx, gy) = ((i % 4) as f64, (i / 4) as f64);
            vec![
                2.0 * gx + rng.random_range(-0.3..0.3),
                2.0 * gy + rng.random_range(-0.3..0.3),
            ]
        })
        .collect()
}

/// Two classes with `n_per_class` points each, class 1 first, on spread
/// points.
pub fn spread_sample(rng: &mut ChaCha8Rng, n_per_class: usize) -> LabeledSample {
    let features = spread_points(rng, 2 * n_per_class);
    let labels = (0..2 * n_per_class).map(|i| ClassLabel(i / n_per_class)).collect();
    LabeledSample::new(labels, features, 2).unwrap()
}

pub fn random_matrix(rng: &mut ChaCha8Rng, m: usize, n: usize) -> DMatrix<f64> {
    DMatrix::from_fn(m, n, |_, _| rng.random_range(-1.0..1.0))
}

/// Random `m x n` matrix of rank at most `r`.
pub fn low_rank_matrix(rng: &mut ChaCha8Rng, m: usize, n: usize, r: usize) -> DMatrix<f64> {
    if r == 0 {
        return DMatrix::zeros(m, n);
    }
    random_matrix(rng, m, r) * random_matrix(rng, r, n)
}

/// Gauss-Jordan inverse with partial pivoting, independent of the library.
pub fn naive_inverse(a: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    let mut aug = vec![vec![0.0; 2 * n]; n];
    for i in 0..n {
        for j in 0..n {
            aug[i][j] = a[(i, j)];
        }
        aug[i][n + i] = 1.0;
    }
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&x, &y| aug[x][col].abs().total_cmp(&aug[y][col].abs()))
            .unwrap();
        aug.swap(col, pivot);
        let p = aug[col][col];
        assert!(p != 0.0, "singular matrix in oracle");
        for v in aug[col].iter_mut() {
            *v /= p;
        }
        for r in 0..n {
            if r != col {
                let f = aug[r][col];
                if f != 0.0 {
                    let pivot_row = aug[col].clone();
                    for (v, pv) in aug[r].iter_mut().zip(&pivot_row) {
                        *v -= f * pv;
                    }
                }
            }
        }
    }
    DMatrix::from_fn(n, n, |i, j| aug[i][n + j])
}

/// Triple-loop product.
pub fn naive_mul(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    assert_eq!(a.ncols(), b.nrows());
    let mut out = DMatrix::zeros(a.nrows(), b.ncols());
    for i in 0..a.nrows() {
        for j in 0..b.ncols() {
            let mut s = 0.0;
            for k in 0..a.ncols() {
                s += a[(i, k)] * b[(k, j)];
            }
            out[(i, j)] = s;
        }
    }
    out
}

/// Normalized Gaussian kernel written out directly.
pub fn naive_gaussian(x: &[f64], y: &[f64], sigma: f64) -> f64 {
    let d2: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
    (-d2 / (2.0 * sigma * sigma)).exp() / ((2.0 * std::f64::consts::PI).sqrt() * sigma)
}

pub fn naive_gram(points: &[Vec<f64>], sigma: f64) -> DMatrix<f64> {
    let n = points.len();
    DMatrix::from_fn(n, n, |i, j| naive_gaussian(&points[i], &points[j], sigma))
}

pub fn rel_err(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).norm() / b.norm().max(f64::MIN_POSITIVE)
}
