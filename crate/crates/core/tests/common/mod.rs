//! Test oracles shared by the integration tests. Each is computed independently of the library's
//! solvers.
#![allow(dead_code)]

use phieq::linalg::{Matrix, Vector};
use phieq::sampling::{self, SeededRng};
use rand::{Rng, SeedableRng};

pub fn rng(seed: u64) -> SeededRng {
    SeededRng::seed_from_u64(seed)
}

pub fn v(xs: &[f64]) -> Vector {
    Vector::from_vec(xs.to_vec())
}

/// max of b.x + x^T A x / 2 over the unit ball, exactly (trust-region subproblem).
pub fn ball_quadratic_max(a: &Matrix, b: &Vector) -> f64 {
    let d = b.len();
    let eig = nalgebra::SymmetricEigen::new(a.clone());
    let l: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    let beta = eig.eigenvectors.transpose() * b;
    let value = |x: &Vector| b.dot(x) + 0.5 * x.dot(&(a * x));
    let lmax = l.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut best = f64::NEG_INFINITY;
    if lmax < 0.0 {
        let y = Vector::from_fn(d, |i, _| -beta[i] / l[i]);
        if y.norm() <= 1.0 {
            best = value(&(&eig.eigenvectors * y));
        }
    }
    let norm_at = |lam: f64| (0..d).map(|i| (beta[i] / (lam - l[i])).powi(2)).sum::<f64>().sqrt();
    let imax = (0..d).max_by(|i, j| l[*i].total_cmp(&l[*j])).expect("nonempty");
    let near = lmax + 1e-14 * (1.0 + lmax.abs());
    let y = if norm_at(near) < 1.0 && beta[imax].abs() < 1e-12 {
        // Hard case: fill the top eigendirection.
        let mut y = Vector::from_fn(d, |i, _| if i == imax { 0.0 } else { beta[i] / (lmax - l[i]) });
        let rest = (1.0 - y.norm_squared()).max(0.0).sqrt();
        y[imax] = rest;
        y
    } else {
        let (mut lo, mut hi) = (lmax, lmax + 1.0 + b.norm());
        while norm_at(hi) > 1.0 {
            hi = lmax + 2.0 * (hi - lmax);
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if norm_at(mid) > 1.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Vector::from_fn(d, |i, _| beta[i] / (hi - l[i]))
    };
    best.max(value(&(&eig.eigenvectors * y)))
}

/// (min, max) of b.x + x^T A x / 2 over the unit ball.
pub fn ball_quadratic_range(a: &Matrix, b: &Vector) -> (f64, f64) {
    (-ball_quadratic_max(&(-a), &(-b)), ball_quadratic_max(a, b))
}

/// A random quadratic c + b.x + x^T A x / 2 whose range over the unit ball lies in [0, 1]; the
/// range is stretched to all of [0, 1] when `tight`.
pub fn random_unit_range_quadratic<R: Rng>(rng: &mut R, d: usize, tight: bool) -> (f64, Vector, Matrix) {
    let g = Matrix::from_fn(d, d, |_, _| sampling::standard_normal(rng));
    let a = (&g + g.transpose()) * 0.5;
    let b = sampling::gaussian_vector(rng, d);
    let (lo, hi) = ball_quadratic_range(&a, &b);
    let width = hi - lo;
    let s = if tight { 1.0 } else { rng.random_range(0.05..1.0) };
    let shift = rng.random_range(0.0..=(1.0 - s));
    let scale = s / width;
    (shift - lo * scale, b * scale, a * scale)
}

/// Symmetric A with 0 <= A <= 2I.
pub fn random_dual_matrix<R: Rng>(rng: &mut R, d: usize) -> Matrix {
    let q = sampling::orthogonal(rng, d);
    let l = Matrix::from_diagonal(&Vector::from_fn(d, |_, _| rng.random_range(0.0..=2.0)));
    let m = &q * l * q.transpose();
    (&m + m.transpose()) * 0.5
}

/// (x - c)^T A (x - c).
pub fn mahalanobis(a: &Matrix, c: &Vector, x: &Vector) -> f64 {
    let z = x - c;
    z.dot(&(a * &z))
}
