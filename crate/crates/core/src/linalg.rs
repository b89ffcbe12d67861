//! Dense linear-algebra helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

pub type Vector = DVector<f64>;
pub type Matrix = DMatrix<f64>;

pub fn sym(m: &Matrix) -> Matrix {
    (m + m.transpose()) * 0.5
}

/// Eigenvalues of the symmetric part of `m`, ascending.
pub fn sym_eigenvalues(m: &Matrix) -> Vec<f64> {
    let mut ev: Vec<f64> = SymmetricEigen::new(sym(m)).eigenvalues.iter().copied().collect();
    ev.sort_by(|a, b| a.total_cmp(b));
    ev
}

/// Sum of the magnitudes of the negative eigenvalues of sym(m).
pub fn negative_eigen_mass(m: &Matrix) -> f64 {
    sym_eigenvalues(m).iter().map(|&l| (-l).max(0.0)).sum()
}

/// Euclidean projection onto the probability simplex (sort-based).
pub fn project_simplex(v: &[f64]) -> Vec<f64> {
    let n = v.len();
    let mut u: Vec<f64> = v.to_vec();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut css = 0.0;
    let mut theta = 0.0;
    for (j, &uj) in u.iter().enumerate() {
        css += uj;
        let t = (css - 1.0) / (j as f64 + 1.0);
        if uj - t > 0.0 {
            theta = t;
        }
    }
    let mut out: Vec<f64> = v.iter().map(|&x| (x - theta).max(0.0)).collect();
    let s: f64 = out.iter().sum();
    if s > 0.0 {
        for x in &mut out {
            *x /= s;
        }
    } else {
        out = vec![1.0 / n as f64; n];
    }
    out
}

/// Row-major flattening of a d x k matrix.
pub fn flatten(m: &Matrix) -> Vector {
    let (r, c) = m.shape();
    Vector::from_iterator(r * c, (0..r).flat_map(|i| (0..c).map(move |j| m[(i, j)])))
}

pub fn unflatten(v: &Vector, rows: usize, cols: usize) -> Matrix {
    assert_eq!(v.len(), rows * cols);
    Matrix::from_fn(rows, cols, |i, j| v[i * cols + j])
}

/// Length of the isometric vectorization of a symmetric d x d matrix.
pub fn svec_len(d: usize) -> usize {
    d * (d + 1) / 2
}

/// Isometric vectorization: upper triangle, off-diagonals scaled by sqrt(2).
pub fn svec(a: &Matrix) -> Vector {
    let d = a.nrows();
    let s2 = std::f64::consts::SQRT_2;
    let mut out = Vec::with_capacity(svec_len(d));
    for i in 0..d {
        for j in i..d {
            if i == j {
                out.push(a[(i, i)]);
            } else {
                out.push(0.5 * (a[(i, j)] + a[(j, i)]) * s2);
            }
        }
    }
    Vector::from_vec(out)
}

pub fn smat(v: &[f64], d: usize) -> Matrix {
    assert_eq!(v.len(), svec_len(d));
    let s2 = std::f64::consts::SQRT_2;
    let mut a = Matrix::zeros(d, d);
    let mut idx = 0;
    for i in 0..d {
        for j in i..d {
            if i == j {
                a[(i, i)] = v[idx];
            } else {
                a[(i, j)] = v[idx] / s2;
                a[(j, i)] = v[idx] / s2;
            }
            idx += 1;
        }
    }
    a
}

pub fn concat(parts: &[&Vector]) -> Vector {
    let n: usize = parts.iter().map(|p| p.len()).sum();
    Vector::from_iterator(n, parts.iter().flat_map(|p| p.iter().copied()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn svec_is_isometric() {
        let a = Matrix::from_row_slice(3, 3, &[1.0, 2.0, 3.0, 2.0, 4.0, 5.0, 3.0, 5.0, 6.0]);
        let b = Matrix::from_row_slice(3, 3, &[0.5, -1.0, 0.0, -1.0, 2.0, 1.5, 0.0, 1.5, -3.0]);
        let frob: f64 = a.component_mul(&b).sum();
        assert!((svec(&a).dot(&svec(&b)) - frob).abs() < 1e-12);
        assert!((smat(svec(&a).as_slice(), 3) - &a).norm() < 1e-12);
    }

    #[test]
    fn simplex_projection_of_feasible_point_is_identity() {
        let p = project_simplex(&[0.2, 0.3, 0.5]);
        assert!((p[0] - 0.2).abs() < 1e-15 && (p[2] - 0.5).abs() < 1e-15);
        let q = project_simplex(&[2.0, 0.0, -1.0]);
        assert_eq!(q, vec![1.0, 0.0, 0.0]);
    }

    #[test]
    fn flatten_is_row_major() {
        let m = Matrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        assert_eq!(flatten(&m).as_slice(), &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        assert_eq!(unflatten(&flatten(&m), 2, 3), m);
    }
}
