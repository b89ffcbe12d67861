mod common;

use common::*;
use phieq::distributions::SupportDistribution;
use phieq::error::Error;
use phieq::fixedpoint::*;
use phieq::geometry::{ConvexBody, CutKind, CutRecord, Separation, Witness};
use phieq::linalg::{Matrix, Vector};
use phieq::sampling;
use proptest::prelude::*;
use rand::Rng;

fn certificate(r: FixedPointResult) -> SupportDistribution {
    match r {
        FixedPointResult::Certificate(mu) => mu,
        FixedPointResult::NotEndomorphism(x) => panic!("unexpected exit at {x:?}"),
    }
}

#[test]
fn ball_quadratic_oracle_dominates_samples() {
    let mut r = rng(1);
    for _ in 0..50 {
        let d = r.random_range(1..5);
        let g = Matrix::from_fn(d, d, |_, _| sampling::standard_normal(&mut r));
        let a = &g + g.transpose();
        let b = sampling::gaussian_vector(&mut r, d);
        let (lo, hi) = ball_quadratic_range(&a, &b);
        for _ in 0..500 {
            let x = sampling::in_ball(&mut r, d, 1.0);
            let val = b.dot(&x) + 0.5 * x.dot(&(&a * &x));
            assert!(val <= hi + 1e-9 && val >= lo - 1e-9);
        }
    }
}

#[test]
fn unit_range_quadratics_have_bounded_coefficients() {
    let mut r = rng(2);
    for t in 0..1000 {
        let d = 1 + t % 6;
        let (_, b, a) = random_unit_range_quadratic(&mut r, d, t % 2 == 0);
        assert!(b.norm() <= 1.0 + 1e-9, "|b| = {}", b.norm());
        let spec = phieq::linalg::sym_eigenvalues(&a);
        let op = spec.iter().fold(0.0f64, |m, l| m.max(l.abs()));
        assert!(op <= 2.0 + 1e-9, "|A| = {op}");
    }
}

#[test]
fn cefp_examples() {
    let body = ConvexBody::unit_ball(2);
    let x0 = v(&[0.3, -0.2]);
    let mu = certificate(cefp_fptas(&PointMap::identity(2), &body, 0.1, Some(x0.clone())).unwrap());
    assert_eq!(mu.atoms(), &[x0.clone()]);
    match cefp_fptas(&PointMap::constant(v(&[3.0, 0.0])), &body, 0.1, Some(x0.clone())).unwrap() {
        FixedPointResult::NotEndomorphism(x) => assert_eq!(x, x0),
        _ => panic!("expected an exit"),
    }
    let (c7, s7) = (0.7f64.cos(), 0.7f64.sin());
    let phi = PointMap::affine(Matrix::from_row_slice(2, 2, &[c7, -s7, s7, c7]), Vector::zeros(2));
    let run = cefp_run(&phi, &body, 0.1, Some(x0)).unwrap();
    let mu = certificate(run.result);
    assert_eq!(run.iterates.len(), 11);
    let mut r = rng(3);
    for _ in 0..50 {
        let (c, b, a) = random_unit_range_quadratic(&mut r, 2, true);
        let u = |x: &Vector| c + b.dot(x) + 0.5 * x.dot(&(&a * x));
        let res = mu.expect_scalar(|x| u(&phi.eval(x).unwrap()) - u(x)).unwrap();
        assert!(res <= 0.1 + 1e-12);
    }
}

#[test]
fn cefp_rejects_bad_inputs() {
    let body = ConvexBody::unit_ball(2);
    let id = PointMap::identity(2);
    assert!(matches!(cefp_fptas(&id, &body, 0.0, None), Err(Error::Usage(_))));
    assert!(matches!(cefp_fptas(&id, &body, 1.5, None), Err(Error::Usage(_))));
    assert!(matches!(cefp_fptas(&id, &body, 0.1, Some(v(&[2.0, 0.0]))), Err(Error::Usage(_))));
}

#[test]
fn efp_examples() {
    let body = ConvexBody::unit_ball(3);
    let mu = certificate(efp_solve(&PointMap::identity(3), &body, 1e-3).unwrap());
    assert_eq!(qefp_residual(&mu, &PointMap::identity(3), &body).unwrap().efp_norm, 0.0);
    let neg = PointMap::new(3, |x| -x);
    let eps = 1e-3;
    let mu = certificate(efp_solve(&neg, &body, eps).unwrap());
    assert!(2.0 * mu.mean().norm() <= eps * (1.0 + 1e-9));
    let shift = PointMap::new(3, |x| x + v(&[3.0, 0.0, 0.0]));
    match efp_solve(&shift, &body, eps).unwrap() {
        FixedPointResult::NotEndomorphism(x) => {
            assert!(matches!(body.separate(&shift.eval(&x).unwrap()).unwrap(), Separation::Outside(_)));
        }
        _ => panic!("expected an exit"),
    }
}

#[test]
fn qefp_examples() {
    let body = ConvexBody::unit_ball(3);
    let xs = v(&[0.2, -0.1, 0.4]);
    let mu = certificate(qefp_solve(&PointMap::constant(xs.clone()), &body, 1e-3).unwrap());
    let r = qefp_residual(&mu, &PointMap::constant(xs.clone()), &body).unwrap();
    assert!(r.quadratic_value() <= 1e-3);
    assert!((mu.mean() - &xs).norm() <= 1e-3);
}

#[test]
fn qefp_residual_examples() {
    let body = ConvexBody::unit_ball(2);
    let xs = v(&[0.1, 0.2]);
    let r = qefp_residual(&SupportDistribution::point_mass(xs.clone()), &PointMap::contraction(xs.clone(), 0.5), &body).unwrap();
    assert_eq!((r.efp_norm, r.psd_term, r.evi_residual), (0.0, 0.0, 0.0));
    let u = v(&[0.6, 0.8]);
    let shift = { let u = u.clone(); PointMap::new(2, move |x| x + &u) };
    let r = qefp_residual(&SupportDistribution::point_mass(xs.clone()), &shift, &body).unwrap();
    assert!((r.efp_norm - 1.0).abs() < 1e-15);
    // sup_v <u, v - x> over the unit ball = 1 - <u, x>.
    assert!((r.evi_residual - (1.0 - u.dot(&xs))).abs() < 1e-12);
}

#[test]
fn qefp_certificate_examples() {
    let id = PointMap::identity(2);
    let rec = |x: Vector| CutRecord::new(CutKind::Hope, v(&[1.0, 0.0, 0.0, 0.0, 0.0]), 0.0, Witness::Point(x)).unwrap();
    let mu = qefp_certificate(&[rec(v(&[0.3, 0.3]))], &id, 1e-3).unwrap();
    assert_eq!(mu.len(), 1);
    let mut r = rng(4);
    for _ in 0..20 {
        let u = sampling::unit_vector(&mut r, 2) * 0.1;
        let x1 = sampling::in_ball(&mut r, 2, 0.5);
        let x2 = sampling::in_ball(&mut r, 2, 0.5);
        let (p1, p2, uu) = (x1.clone(), x2.clone(), u.clone());
        let phi = PointMap::new(2, move |x| if *x == p1 { x + &uu } else if *x == p2 { x - &uu } else { x.clone() });
        let cuts = [rec(x1), rec(x2)];
        let eps = 0.02;
        match qefp_certificate(&cuts, &phi, eps) {
            Ok(mu) => {
                let res = qefp_residual(&mu, &phi, &ConvexBody::unit_ball(2)).unwrap();
                assert!(res.quadratic_value() <= eps * (1.0 + 1e-9));
                assert!(res.psd_term <= eps);
            }
            // Only possible when the PSD term cannot be cancelled on this pair.
            Err(Error::Certificate(_)) => {
                let m = |l: f64| {
                    let w1 = &u;
                    let s = (&cuts_point(&cuts[0]) * w1.transpose()) * l - (&cuts_point(&cuts[1]) * w1.transpose()) * (1.0 - l);
                    (w1 * (2.0 * l - 1.0)).norm() + 2.0 * phieq::linalg::negative_eigen_mass(&s)
                };
                let best = (0..=1000).map(|i| m(i as f64 / 1000.0)).fold(f64::INFINITY, f64::min);
                assert!(best > eps * 0.99, "a certificate of value {best} exists");
            }
            Err(e) => panic!("{e}"),
        }
    }
}

fn cuts_point(c: &CutRecord) -> Vector {
    match &c.witness {
        Witness::Point(x) => x.clone(),
        _ => unreachable!(),
    }
}

#[test]
fn mahalanobis_contraction_small() {
    let mut r = rng(5);
    let d = 3;
    let body = ConvexBody::ball(Vector::zeros(d), 2.0).unwrap();
    let xs = sampling::in_ball(&mut r, d, 0.5);
    let f = PointMap::contraction(xs.clone(), 0.25);
    let delta = 1e-3;
    let mu = mahalanobis_unkcontr(&f, &body, 0.25, delta).unwrap();
    for _ in 0..100 {
        let a = random_dual_matrix(&mut r, d);
        let q = mu.expect_scalar(|x| mahalanobis(&a, &xs, x)).unwrap();
        assert!(q <= delta, "E Q = {q}");
    }
}

#[test]
fn unkcontr_examples() {
    let body = ConvexBody::unit_ball(2);
    let xs = v(&[0.5, -0.25]);
    let mu = mahalanobis_unkcontr(&PointMap::constant(xs.clone()), &body, 1.0, 1e-3).unwrap();
    let q = mu.expect_scalar(|x| (x - &xs).norm_squared()).unwrap();
    assert!(q <= 1e-3);
    let f = PointMap::contraction(xs.clone(), 0.01);
    let mu = mahalanobis_unkcontr(&f, &body, 0.01, 0.1).unwrap();
    let q = mu.expect_scalar(|x| (x - &xs).norm_squared()).unwrap();
    assert!(q <= 0.1);
    let out = PointMap::constant(v(&[5.0, 0.0]));
    assert!(matches!(mahalanobis_unkcontr(&out, &body, 0.5, 0.1), Err(Error::Promise(_))));
}

#[test]
fn point_extract_examples() {
    let xs = v(&[0.1, 0.1]);
    let x = point_extract(&SupportDistribution::point_mass(xs.clone()), |_| unreachable!(), 0.1).unwrap();
    assert_eq!(x, xs);
    let body = ConvexBody::unit_ball(2);
    let f = PointMap::contraction(xs.clone(), 0.25);
    let delta = 1e-3;
    let mu = mahalanobis_unkcontr(&f, &body, 0.25, delta).unwrap();
    let x = point_extract(&mu, |p| mahalanobis_unkcontr(&f, &body, 0.25, p), delta).unwrap();
    assert!((x - xs).norm_squared() <= delta);
}

#[test]
fn not_endomorphism_witnesses_fail_separation() {
    let mut r = rng(6);
    for _ in 0..10 {
        let d = r.random_range(2..4);
        let body = ConvexBody::unit_ball(d);
        let c = sampling::unit_vector(&mut r, d) * r.random_range(1.2..3.0);
        let phi = { let c = c.clone(); PointMap::new(d, move |x| x * 0.5 + &c) };
        for res in [efp_solve(&phi, &body, 1e-2).unwrap(), qefp_solve(&phi, &body, 1e-2).unwrap(), cefp_fptas(&phi, &body, 0.1, None).unwrap()] {
            if let FixedPointResult::NotEndomorphism(x) = res {
                assert!(!body.contains(&phi.eval(&x).unwrap()));
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn cefp_telescoping_is_exact(seed in 0u64..1000, eps in 0.02f64..0.5) {
        let mut r = rng(seed);
        let d = 2 + (seed % 3) as usize;
        let body = ConvexBody::unit_ball(d);
        let q = sampling::orthogonal(&mut r, d);
        let s = r.random_range(0.3..1.0);
        let c = sampling::in_ball(&mut r, d, 1.0 - s);
        let phi = PointMap::affine(q * s, c);
        let x0 = sampling::in_ball(&mut r, d, 1.0);
        let run = cefp_run(&phi, &body, eps, Some(x0)).unwrap();
        let mu = certificate(run.result);
        let m = run.iterates.len() - 1;
        let (cc, b, a) = random_unit_range_quadratic(&mut r, d, false);
        let a = -(a.abs() + Matrix::identity(d, d));
        let u = |x: &Vector| cc + b.dot(x) + 0.5 * x.dot(&(&a * x));
        let lhs = mu.expect_scalar(|x| u(&phi.eval(x).unwrap()) - u(x)).unwrap();
        let rhs = (u(&run.iterates[m]) - u(&run.iterates[0])) / m as f64;
        prop_assert!((lhs - rhs).abs() <= 1e-9);
    }

    #[test]
    fn qefp_certificates_solve_efp_and_evi(seed in 0u64..1000) {
        let mut r = rng(seed);
        let d = 2 + (seed % 2) as usize;
        let radius = r.random_range(0.5..2.0);
        let body = ConvexBody::ball(Vector::zeros(d), radius).unwrap();
        let xs = sampling::in_ball(&mut r, d, radius);
        let gamma = r.random_range(0.1..0.9);
        let phi = PointMap::contraction(xs, gamma);
        let eps = 1e-2;
        let mu = certificate(qefp_solve(&phi, &body, eps).unwrap());
        let res = qefp_residual(&mu, &phi, &body).unwrap();
        prop_assert!(res.efp_norm <= eps * (1.0 + 1e-9));
        prop_assert!(res.evi_residual <= eps * radius * (1.0 + 1e-9));
    }
}
