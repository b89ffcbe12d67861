mod common;

use common::*;
use phieq::distributions::SupportDistribution;
use phieq::fixedpoint::PointMap;
use phieq::games::*;
use phieq::geometry::ConvexBody;
use phieq::linalg::{Matrix, Vector};
use phieq::phi::FeatureMap;
use phieq::sampling;
use proptest::prelude::*;
use rand::Rng;

fn random_game<R: Rng>(r: &mut R, dims: &[usize]) -> QuadraticGame {
    let n = dims.len();
    let bodies = dims.iter().map(|d| ConvexBody::unit_ball(*d)).collect();
    let own = dims.iter().map(|d| random_dual_matrix(r, *d)).collect();
    let linear = dims.iter().map(|d| sampling::gaussian_vector(r, *d)).collect();
    let cross = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| {
                    (i != j).then(|| Matrix::from_fn(dims[i], dims[j], |_, _| sampling::standard_normal(r)))
                })
                .collect()
        })
        .collect();
    QuadraticGame::polymatrix(bodies, own, linear, cross).unwrap()
}

fn random_profile<R: Rng>(r: &mut R, dims: &[usize]) -> Vec<Vector> {
    dims.iter().map(|d| sampling::in_ball(r, *d, 1.0)).collect()
}

fn random_mu<R: Rng>(r: &mut R, dims: &[usize], atoms: usize) -> SupportDistribution {
    let xs = (0..atoms).map(|_| Vector::from_iterator(dims.iter().sum(), random_profile(r, dims).into_iter().flat_map(|v| v.data.as_vec().clone()))).collect();
    let ws = (0..atoms).map(|_| r.random_range(0.1..1.0)).collect();
    SupportDistribution::from_weighted(xs, ws).unwrap()
}

/// Every player i: u_i = 2 c_i.x_i - |x_i|^2, maximized at c_i regardless of the others.
fn separable_game(centers: &[Vector]) -> QuadraticGame {
    let bodies = centers.iter().map(|c| ConvexBody::unit_ball(c.len())).collect();
    let own = centers.iter().map(|c| Matrix::identity(c.len(), c.len())).collect();
    let linear = centers.iter().map(|c| c * 2.0).collect();
    let n = centers.len();
    QuadraticGame::polymatrix(bodies, own, linear, vec![vec![None; n]; n]).unwrap()
}

#[test]
fn quadratic_and_concave_views_agree() {
    let mut r = rng(10);
    let dims = [2, 3, 1];
    let q = random_game(&mut r, &dims);
    let g = q.to_concave();
    for _ in 0..50 {
        let x = random_profile(&mut r, &dims);
        for i in 0..3 {
            let a = q.a(i, &x);
            let b = q.b(i, &x);
            let direct = b.dot(&x[i]) - x[i].dot(&(&a * &x[i]));
            assert!((q.utility(i, &x) - direct).abs() <= 1e-12);
            assert!((g.utility(i, &x) - direct).abs() <= 1e-12);
            let grad = &b - (&a * &x[i]) * 2.0;
            assert!((g.own_gradient(i, &x) - grad).norm() <= 1e-12);
        }
    }
}

#[test]
fn polymatrix_rejects_indefinite_own_terms() {
    let bodies = vec![ConvexBody::unit_ball(1), ConvexBody::unit_ball(1)];
    let own = vec![Matrix::from_element(1, 1, -1.0), Matrix::zeros(1, 1)];
    let linear = vec![Vector::zeros(1), Vector::zeros(1)];
    assert!(QuadraticGame::polymatrix(bodies, own, linear, vec![vec![None; 2]; 2]).is_err());
}

#[test]
fn split_and_join_roundtrip() {
    let mut r = rng(11);
    let dims = [2, 3];
    let g = random_game(&mut r, &dims).to_concave();
    let x = random_profile(&mut r, &dims);
    let joined = g.join(&x).unwrap();
    assert_eq!(joined.len(), 5);
    assert_eq!(g.split(&joined).unwrap(), x);
}

#[test]
fn identity_deviation_has_zero_benefit() {
    let mut r = rng(12);
    let dims = [2, 2];
    let g = random_game(&mut r, &dims).to_concave();
    let mu = random_mu(&mut r, &dims, 5);
    for i in 0..2 {
        let b = deviation_benefit(&g, i, &mu, &PointMap::identity(2)).unwrap();
        assert_eq!(b.value, 0.0);
        assert!(b.exit.is_none());
    }
}

#[test]
fn deviation_exit_is_reported() {
    let g = separable_game(&[Vector::zeros(2), Vector::zeros(1)]).to_concave();
    let mu = SupportDistribution::point_mass(Vector::from_vec(vec![0.5, 0.0, 0.1]));
    let b = deviation_benefit(&g, 0, &mu, &PointMap::new(2, |x| x * 3.0)).unwrap();
    assert_eq!(b.exit, Some(v(&[0.5, 0.0])));
}

#[test]
fn verify_equilibrium_pass_and_fail() {
    let centers = [v(&[0.3, -0.2]), v(&[0.1])];
    let g = separable_game(&centers).to_concave();
    let maps = [FeatureMap::affine(2, 1.0), FeatureMap::affine(1, 1.0)];
    let mut r = rng(13);
    let at_eq = SupportDistribution::point_mass(v(&[0.3, -0.2, 0.1]));
    let rep = verify_equilibrium(&g, &at_eq, &maps, 1e-3, 1e-4, 200, &mut r).unwrap();
    assert!(rep.pass, "{rep:?}");
    assert!(rep.max_benefit <= 1e-3 + 1e-4);
    // Off-equilibrium: player 1's best response gains |x - c|^2 = 0.25.
    let off = SupportDistribution::point_mass(v(&[0.3, -0.2, 0.6]));
    let rep = verify_equilibrium(&g, &off, &maps, 1e-3, 1e-4, 200, &mut r).unwrap();
    assert!(!rep.pass);
    assert!((rep.players[1].optimized_benefit - 0.25).abs() <= 1e-3, "{rep:?}");
    assert!(rep.summed_benefit >= rep.max_benefit);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn transform_benefit_is_concave_in_k(seed in 0u64..10_000) {
        let mut r = rng(seed);
        let dims = [2, 1];
        let g = random_game(&mut r, &dims).to_concave();
        let mu = random_mu(&mut r, &dims, 3);
        let m = FeatureMap::affine(2, 1.0);
        let k1 = Matrix::from_fn(2, 3, |_, _| sampling::standard_normal(&mut r));
        let k2 = Matrix::from_fn(2, 3, |_, _| sampling::standard_normal(&mut r));
        let f = |k: &Matrix| transform_benefit(&g, 0, &mu, k, &m).unwrap().0;
        let mid = f(&((&k1 + &k2) * 0.5));
        prop_assert!(mid >= 0.5 * (f(&k1) + f(&k2)) - 1e-12);
    }

    #[test]
    fn transform_gradient_matches_finite_differences(seed in 0u64..10_000) {
        let mut r = rng(seed);
        let dims = [2, 2];
        let g = random_game(&mut r, &dims).to_concave();
        let mu = random_mu(&mut r, &dims, 4);
        let m = FeatureMap::monomials(2, 2, 1.0);
        let k = Matrix::from_fn(2, m.out_dim(), |_, _| sampling::standard_normal(&mut r));
        let (_, grad) = transform_benefit(&g, 1, &mu, &k, &m).unwrap();
        let h = 1e-6;
        for a in 0..k.nrows() {
            for b in 0..k.ncols() {
                let mut kp = k.clone();
                kp[(a, b)] += h;
                let mut km = k.clone();
                km[(a, b)] -= h;
                let fd = (transform_benefit(&g, 1, &mu, &kp, &m).unwrap().0 - transform_benefit(&g, 1, &mu, &km, &m).unwrap().0) / (2.0 * h);
                prop_assert!((fd - grad[(a, b)]).abs() <= 1e-5 * (1.0 + fd.abs()), "{} vs {}", fd, grad[(a, b)]);
            }
        }
    }

    #[test]
    fn utility_is_concave_in_own_strategy(seed in 0u64..10_000) {
        let mut r = rng(seed);
        let dims = [3, 2];
        let g = random_game(&mut r, &dims).to_concave();
        let mut x = random_profile(&mut r, &dims);
        let y = sampling::in_ball(&mut r, 3, 1.0);
        let z = sampling::in_ball(&mut r, 3, 1.0);
        let mut at = |p: &Vector| { x[0] = p.clone(); g.utility(0, &x) };
        let mid = at(&((&y + &z) * 0.5));
        let ends = 0.5 * (at(&y) + at(&z));
        prop_assert!(mid >= ends - 1e-12);
    }
}
