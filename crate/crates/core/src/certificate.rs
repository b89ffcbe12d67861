//! Infeasibility certificates for ellipsoid-against-hope runs.
//!
//! Every dual search in this crate records hope cuts of the form "feasible z satisfy
//! <w_j, z> + c_j >= target". A certificate is a simplex weighting lambda with
//! F(lambda) = sup_{z in Z} <sum_j lambda_j w_j, z> + sum_j lambda_j c_j <= eps,
//! where Z is the dual feasible box. Cuts marked conic are valid halfspaces of the dual target
//! set; they enter with unbounded nonnegative multipliers instead of simplex weights. F is
//! minimized by accelerated gradient on a Nesterov-smoothed surrogate, over a working set grown
//! by column generation.

use crate::error::{Error, Result};
use crate::linalg::{self, Matrix, Vector};
use nalgebra::SymmetricEigen;

/// Compact convex dual set with closed-form support function and projection.
pub trait DualSet {
    fn dim(&self) -> usize;
    /// sup over the set of <v, z>, with a maximizer.
    fn support(&self, v: &Vector) -> (f64, Vector);
    fn project(&self, z: &Vector) -> Vector;
    /// Prox center of the smoothing term.
    fn anchor(&self) -> Vector;
    /// max over the set of |z - anchor|.
    fn radius(&self) -> f64;
    /// Radius of a ball around the anchor contained in the set.
    fn inner_radius(&self) -> f64;
    /// A halfspace (a, b) with a.z > b containing the set, or None if z is in the set.
    fn separate(&self, z: &Vector) -> Option<(Vector, f64)>;
}

/// Euclidean ball B(0, radius).
#[derive(Clone, Debug)]
pub struct DualBall {
    pub dim: usize,
    pub radius: f64,
}

impl DualSet for DualBall {
    fn dim(&self) -> usize {
        self.dim
    }

    fn support(&self, v: &Vector) -> (f64, Vector) {
        let n = v.norm();
        if n == 0.0 {
            (0.0, Vector::zeros(self.dim))
        } else {
            (self.radius * n, v * (self.radius / n))
        }
    }

    fn project(&self, z: &Vector) -> Vector {
        let n = z.norm();
        if n <= self.radius {
            z.clone()
        } else {
            z * (self.radius / n)
        }
    }

    fn anchor(&self) -> Vector {
        Vector::zeros(self.dim)
    }

    fn radius(&self) -> f64 {
        self.radius
    }

    fn inner_radius(&self) -> f64 {
        self.radius
    }

    fn separate(&self, z: &Vector) -> Option<(Vector, f64)> {
        let n = z.norm();
        (n > self.radius).then(|| (z / n, self.radius))
    }
}

/// {(A, b) : 0 <= A <= 2I, |b| <= 1} stored as (b, svec(A)).
#[derive(Clone, Debug)]
pub struct QuadraticDualBox {
    pub d: usize,
}

impl QuadraticDualBox {
    pub fn split(&self, z: &Vector) -> (Vector, Matrix) {
        let d = self.d;
        (z.rows(0, d).into_owned(), linalg::smat(z.rows(d, linalg::svec_len(d)).as_slice(), d))
    }

    pub fn join(&self, b: &Vector, a: &Matrix) -> Vector {
        linalg::concat(&[b, &linalg::svec(a)])
    }
}

fn clip_spectrum(a: &Matrix, lo: f64, hi: f64) -> Matrix {
    let eig = SymmetricEigen::new(linalg::sym(a));
    let clipped = eig.eigenvalues.map(|l| l.clamp(lo, hi));
    &eig.eigenvectors * Matrix::from_diagonal(&clipped) * eig.eigenvectors.transpose()
}

impl DualSet for QuadraticDualBox {
    fn dim(&self) -> usize {
        self.d + linalg::svec_len(self.d)
    }

    fn support(&self, v: &Vector) -> (f64, Vector) {
        let (vb, va) = self.split(v);
        let nb = vb.norm();
        let b = if nb > 0.0 { &vb / nb } else { Vector::zeros(self.d) };
        let eig = SymmetricEigen::new(va);
        let mut val = nb;
        let diag = eig.eigenvalues.map(|l| if l > 0.0 { 2.0 } else { 0.0 });
        for l in eig.eigenvalues.iter() {
            if *l > 0.0 {
                val += 2.0 * l;
            }
        }
        let a = &eig.eigenvectors * Matrix::from_diagonal(&diag) * eig.eigenvectors.transpose();
        (val, self.join(&b, &a))
    }

    fn project(&self, z: &Vector) -> Vector {
        let (b, a) = self.split(z);
        let nb = b.norm();
        let b = if nb > 1.0 { b / nb } else { b };
        self.join(&b, &clip_spectrum(&a, 0.0, 2.0))
    }

    fn anchor(&self) -> Vector {
        self.join(&Vector::zeros(self.d), &Matrix::identity(self.d, self.d))
    }

    fn radius(&self) -> f64 {
        (self.d as f64 + 1.0).sqrt()
    }

    fn inner_radius(&self) -> f64 {
        1.0
    }

    fn separate(&self, z: &Vector) -> Option<(Vector, f64)> {
        let (b, a) = self.split(z);
        let nb = b.norm();
        let eig = SymmetricEigen::new(a);
        let (mut imin, mut imax) = (0, 0);
        for i in 0..self.d {
            if eig.eigenvalues[i] < eig.eigenvalues[imin] {
                imin = i;
            }
            if eig.eigenvalues[i] > eig.eigenvalues[imax] {
                imax = i;
            }
        }
        let low = -eig.eigenvalues[imin];
        let high = eig.eigenvalues[imax] - 2.0;
        let radial = nb - 1.0;
        if low <= 0.0 && high <= 0.0 && radial <= 0.0 {
            return None;
        }
        let zero_b = Vector::zeros(self.d);
        if radial >= low && radial >= high {
            Some((self.join(&(&b / nb), &Matrix::zeros(self.d, self.d)), 1.0))
        } else if low >= high {
            // Keep <A, u u^T> >= 0.
            let u = eig.eigenvectors.column(imin).into_owned();
            Some((self.join(&zero_b, &(-(&u * u.transpose()))), 0.0))
        } else {
            // Keep <A, u u^T> <= 2.
            let u = eig.eigenvectors.column(imax).into_owned();
            Some((self.join(&zero_b, &(&u * u.transpose())), 2.0))
        }
    }
}

#[derive(Clone, Debug)]
pub struct CertificateOptions {
    /// Stop once F(lambda) <= target.
    pub target: f64,
    /// Total accelerated-gradient iterations across all column-generation rounds.
    pub max_iterations: usize,
    /// Initial working set: the last `initial_working_set` cuts.
    pub initial_working_set: usize,
    /// Columns added per pricing round.
    pub columns_per_round: usize,
}

impl CertificateOptions {
    pub fn new(target: f64, max_iterations: usize) -> Self {
        CertificateOptions { target, max_iterations, initial_working_set: 64, columns_per_round: 32 }
    }
}

#[derive(Clone, Debug)]
pub struct CertificateSolution {
    /// Weights over all cuts (zero outside the final working set); simplex weights on
    /// ordinary cuts, nonnegative multipliers on conic ones.
    pub lambda: Vec<f64>,
    /// F(lambda), evaluated exactly.
    pub value: f64,
    pub iterations: usize,
}

/// F(lambda) = sup_z <W lambda, z> + c.lambda, with the maximizing z.
pub fn certificate_objective<Z: DualSet>(set: &Z, w: &[Vector], c: &[f64], lambda: &[f64]) -> (f64, Vector) {
    let mut agg = Vector::zeros(set.dim());
    let mut lin = 0.0;
    for ((wj, cj), lj) in w.iter().zip(c).zip(lambda) {
        if *lj != 0.0 {
            agg.axpy(*lj, wj, 1.0);
            lin += lj * cj;
        }
    }
    let (s, z) = set.support(&agg);
    (s + lin, z)
}

/// Minimizes F over the simplex; succeeds once F <= options.target.
pub fn solve_certificate<Z: DualSet>(
    set: &Z,
    w: &[Vector],
    c: &[f64],
    conic: &[bool],
    options: &CertificateOptions,
    warm_start: Option<&[f64]>,
) -> Result<CertificateSolution> {
    let n = w.len();
    if c.len() != n || conic.len() != n {
        return Err(Error::Usage("certificate cuts, offsets and kinds differ in length".into()));
    }
    if conic.iter().all(|k| *k) {
        return Err(Error::Usage("certificate needs at least one non-conic cut".into()));
    }
    let mut active: Vec<usize> = Vec::new();
    let mut in_active = vec![false; n];
    let push = |j: usize, active: &mut Vec<usize>, in_active: &mut Vec<bool>| {
        if !in_active[j] {
            in_active[j] = true;
            active.push(j);
        }
    };
    if let Some(ws) = warm_start {
        for (j, l) in ws.iter().enumerate().take(n) {
            if *l > 0.0 {
                push(j, &mut active, &mut in_active);
            }
        }
    }
    let start = n.saturating_sub(options.initial_working_set);
    for j in start..n {
        push(j, &mut active, &mut in_active);
    }
    // Best single cut.
    let singles: Vec<f64> =
        (0..n).map(|j| if conic[j] { f64::INFINITY } else { set.support(&w[j]).0 + c[j] }).collect();
    let jbest = (0..n).min_by(|a, b| singles[*a].total_cmp(&singles[*b])).expect("nonempty");
    push(jbest, &mut active, &mut in_active);

    let mut best_full = vec![0.0; n];
    best_full[jbest] = 1.0;
    let mut best_val = singles[jbest];
    if let Some(ws) = warm_start {
        if ws.len() == n {
            let (v, _) = certificate_objective(set, w, c, ws);
            if v < best_val {
                best_val = v;
                best_full = ws.to_vec();
            }
        }
    }
    let mut iterations = 0usize;
    if best_val <= options.target {
        return Ok(CertificateSolution { lambda: best_full, value: best_val, iterations });
    }

    let r2 = set.radius().powi(2).max(1e-300);
    let mut mu = (options.target / (2.0 * r2)).max(1e-300);
    let mut lam: Vec<f64> = active.iter().map(|j| best_full[*j]).collect();
    let round_iters = (options.max_iterations / 8).max(200);
    while iterations < options.max_iterations {
        let ws: Vec<&Vector> = active.iter().map(|j| &w[*j]).collect();
        let cs: Vec<f64> = active.iter().map(|j| c[*j]).collect();
        let ks: Vec<bool> = active.iter().map(|j| conic[*j]).collect();
        let budget = round_iters.min(options.max_iterations - iterations);
        let (l_new, used) = fista(set, &ws, &cs, &ks, &lam, mu, budget, options.target, |lam| {
            let mut full = vec![0.0; n];
            for (k, j) in active.iter().enumerate() {
                full[*j] = lam[k];
            }
            certificate_objective(set, w, c, &full).0
        });
        iterations += used;
        let mut full = vec![0.0; n];
        for (k, j) in active.iter().enumerate() {
            full[*j] = l_new[k];
        }
        let (val, zstar) = certificate_objective(set, w, c, &full);
        if val < best_val {
            best_val = val;
            best_full = full.clone();
        }
        if best_val <= options.target {
            break;
        }
        // Pricing: cuts most favorable against the current worst-case dual point.
        let mut prices: Vec<(f64, usize)> =
            (0..n).filter(|j| !in_active[*j]).map(|j| (w[j].dot(&zstar) + c[j], j)).collect();
        prices.sort_by(|a, b| a.0.total_cmp(&b.0));
        let added: Vec<usize> = prices
            .iter()
            .filter(|(p, j)| if conic[*j] { *p < 0.0 } else { *p < val })
            .take(options.columns_per_round)
            .map(|(_, j)| *j)
            .collect();
        if added.is_empty() {
            // Working set already optimal for this smoothing level: sharpen it.
            mu *= 0.25;
        }
        for j in added {
            push(j, &mut active, &mut in_active);
        }
        lam = active.iter().map(|j| full[*j]).collect();
    }
    Ok(CertificateSolution { lambda: best_full, value: best_val, iterations })
}

/// Accelerated projected gradient with backtracking on the smoothed objective.
#[allow(clippy::too_many_arguments)]
fn fista<Z: DualSet>(
    set: &Z,
    w: &[&Vector],
    c: &[f64],
    conic: &[bool],
    lam0: &[f64],
    mu: f64,
    budget: usize,
    target: f64,
    mut exact: impl FnMut(&[f64]) -> f64,
) -> (Vec<f64>, usize) {
    let m = w.len();
    let z0 = set.anchor();
    let smooth = |lam: &[f64]| -> (f64, Vec<f64>) {
        let mut agg = Vector::zeros(set.dim());
        let mut lin = 0.0;
        for k in 0..m {
            if lam[k] != 0.0 {
                agg.axpy(lam[k], w[k], 1.0);
                lin += lam[k] * c[k];
            }
        }
        let z = set.project(&(&z0 + &agg / mu));
        let val = agg.dot(&z) - 0.5 * mu * (&z - &z0).norm_squared() + lin;
        let grad = (0..m).map(|k| w[k].dot(&z) + c[k]).collect();
        (val, grad)
    };
    let project = |v: &[f64]| -> Vec<f64> {
        let simplex: Vec<f64> = (0..m).filter(|k| !conic[*k]).map(|k| v[k]).collect();
        let mut p = linalg::project_simplex(&simplex).into_iter();
        (0..m).map(|k| if conic[k] { v[k].max(0.0) } else { p.next().expect("simplex part") }).collect()
    };
    let mut x = project(lam0);
    let mut y = x.clone();
    let mut t = 1.0f64;
    let mut lip = {
        let wmax = w.iter().map(|v| v.norm_squared()).fold(0.0, f64::max);
        (wmax / mu).max(1e-12) * 1e-3
    };
    let mut best = x.clone();
    let mut best_val = exact(&x);
    let check_every = 25;
    for it in 0..budget {
        let (fy, gy) = smooth(&y);
        let x_new = loop {
            let step: Vec<f64> = (0..m).map(|k| y[k] - gy[k] / lip).collect();
            let cand = project(&step);
            let (fc, _) = smooth(&cand);
            let diff: Vec<f64> = (0..m).map(|k| cand[k] - y[k]).collect();
            let lin: f64 = (0..m).map(|k| gy[k] * diff[k]).sum();
            let quad: f64 = diff.iter().map(|d| d * d).sum::<f64>() * 0.5 * lip;
            if fc <= fy + lin + quad + 1e-15 * fy.abs().max(1.0) || lip > 1e300 {
                break cand;
            }
            lip *= 2.0;
        };
        let t_new = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        let beta = (t - 1.0) / t_new;
        y = (0..m).map(|k| x_new[k] + beta * (x_new[k] - x[k])).collect();
        x = x_new;
        t = t_new;
        if (it + 1) % check_every == 0 || it + 1 == budget {
            let v = exact(&x);
            if v < best_val {
                best_val = v;
                best = x.clone();
            }
            if best_val <= target {
                return (best, it + 1);
            }
        }
    }
    (best, budget)
}
