//! Seeded random generators for test instances and audits.

use crate::linalg::{Matrix, Vector};
use rand::Rng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};

pub type SeededRng = ChaCha20Rng;

pub fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

pub fn gaussian_vector<R: Rng + ?Sized>(rng: &mut R, d: usize) -> Vector {
    Vector::from_fn(d, |_, _| StandardNormal.sample(rng))
}

pub fn unit_vector<R: Rng + ?Sized>(rng: &mut R, d: usize) -> Vector {
    loop {
        let g = gaussian_vector(rng, d);
        let n = g.norm();
        if n > 1e-12 {
            return g / n;
        }
    }
}

/// Uniform sample from the Euclidean ball B(0, radius).
pub fn in_ball<R: Rng + ?Sized>(rng: &mut R, d: usize, radius: f64) -> Vector {
    let u: f64 = rng.random();
    unit_vector(rng, d) * (radius * u.powf(1.0 / d as f64))
}

/// Haar-distributed orthogonal matrix via QR of a Gaussian matrix.
pub fn orthogonal<R: Rng + ?Sized>(rng: &mut R, d: usize) -> Matrix {
    let g = Matrix::from_fn(d, d, |_, _| StandardNormal.sample(rng));
    let qr = g.qr();
    let q = qr.q();
    let r = qr.r();
    let mut q = q;
    for j in 0..d {
        if r[(j, j)] < 0.0 {
            for i in 0..d {
                q[(i, j)] = -q[(i, j)];
            }
        }
    }
    q
}

/// Symmetric matrix with eigenvalues drawn uniformly from [lo, hi].
pub fn spd_with_spectrum<R: Rng + ?Sized>(rng: &mut R, d: usize, lo: f64, hi: f64) -> Matrix {
    let q = orthogonal(rng, d);
    let diag = Vector::from_fn(d, |_, _| rng.random_range(lo..=hi));
    &q * Matrix::from_diagonal(&diag) * q.transpose()
}
