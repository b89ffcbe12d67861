use phieq::geometry::*;
use phieq::linalg::{Matrix, Vector};
use phieq::sampling::{self, SeededRng};
use proptest::prelude::*;
use rand::SeedableRng;

fn analytic_bodies(d: usize) -> Vec<ConvexBody> {
    let ball = ConvexBody::ball(Vector::from_fn(d, |i, _| 0.1 * i as f64), 1.5).unwrap();
    let cube = ConvexBody::cube(Vector::from_fn(d, |i, _| -1.0 - 0.2 * i as f64), Vector::from_element(d, 0.7)).unwrap();
    let simplex = ConvexBody::simplex(d).unwrap();
    let m = Matrix::from_fn(d, d, |i, j| if i == j { 2.0 } else if j == i + 1 { 0.5 } else { 0.0 });
    let affine = ConvexBody::affine_image(ConvexBody::unit_ball(d), m.clone(), Vector::from_element(d, 0.3)).unwrap();
    let affine_box =
        ConvexBody::affine_image(ConvexBody::cube(Vector::from_element(d, -1.0), Vector::from_element(d, 1.0)).unwrap(), m, Vector::zeros(d))
            .unwrap();
    vec![ball, cube, simplex, affine, affine_box]
}

#[test]
fn exterior_cuts_exclude_query_and_contain_interior() {
    let mut rng = SeededRng::seed_from_u64(11);
    for body in analytic_bodies(4) {
        let interior: Vec<Vector> = (0..1000).map(|_| body.sample(&mut rng)).collect();
        for x in &interior {
            assert!(body.contains(x), "{body:?}");
        }
        let mut exterior = 0;
        while exterior < 1000 {
            let p = sampling::in_ball(&mut rng, 4, 3.0 * body.outer_radius());
            if let Separation::Outside(h) = body.separate(&p).unwrap() {
                exterior += 1;
                assert!(h.a.dot(&p) > h.b, "{body:?}: cut does not exclude query");
                for x in &interior {
                    assert!(h.a.dot(x) <= h.b + 1e-9, "{body:?}: cut removes an interior point");
                }
            }
        }
    }
}

#[test]
fn volume_decay_is_at_least_the_central_cut_bound() {
    let mut rng = SeededRng::seed_from_u64(5);
    for d in [2usize, 5, 9] {
        let mut e = Ellipsoid::ball(Vector::zeros(d), 3.0);
        let v0 = e.log_volume();
        for k in 1..=200 {
            let a = sampling::unit_vector(&mut rng, d);
            e.central_cut(&a).unwrap();
            let bound = v0 - k as f64 / (2.0 * (d as f64 + 1.0));
            assert!(e.log_volume() <= bound + 1e-12);
        }
        let direct = e.log_det_direct().unwrap();
        assert!((direct - e.log_det()).abs() <= 1e-9 * direct.abs().max(1.0));
    }
}

#[test]
fn concave_quadratic_matches_projection() {
    let mut rng = SeededRng::seed_from_u64(3);
    let body = ConvexBody::unit_ball(5);
    for _ in 0..20 {
        let c = sampling::in_ball(&mut rng, 5, 0.9);
        let r = maximize_concave(&body, |x| (-0.5 * (x - &c).norm_squared(), &c - x), 1e-8).unwrap();
        assert!((r.x - &c).norm() < 1e-3);
        assert!(r.value >= -1e-8);
    }
    // Exterior target: the maximizer is the Euclidean projection c / |c|.
    for _ in 0..20 {
        let c = sampling::unit_vector(&mut rng, 5) * 1.7;
        let r = maximize_concave(&body, |x| (-0.5 * (x - &c).norm_squared(), &c - x), 1e-8).unwrap();
        let proj = &c / c.norm();
        assert!((r.x - proj).norm() < 1e-3);
    }
}

#[test]
fn maximizer_is_first_order_optimal() {
    let mut rng = SeededRng::seed_from_u64(8);
    for body in analytic_bodies(3) {
        let a = sampling::spd_with_spectrum(&mut rng, 3, 0.0, 2.0);
        let b = sampling::unit_vector(&mut rng, 3);
        let tol = 1e-5;
        let r = maximize_concave(&body, |x| (b.dot(x) - 0.5 * x.dot(&(&a * x)), &b - &a * x), tol).unwrap();
        assert!(body.contains(&r.x));
        for _ in 0..1000 {
            let y = body.sample(&mut rng);
            assert!(r.grad.dot(&(y - &r.x)) <= tol + 1e-12);
        }
    }
}

#[test]
fn antipodal_halfspaces_exhaust_volume_within_bound() {
    // Feasible set {x1 >= 1} and {x1 <= -1} inside B(0, 2) is empty.
    let init = Ellipsoid::ball(Vector::zeros(2), 2.0);
    let log_v0 = init.log_volume();
    let log_thr = log_v0 - 4.0;
    let res = ellipsoid_feasibility::<()>(
        init,
        |c| {
            let (a, b) = if c[0] < 0.0 { (vec![-1.0, 0.0], -1.0) } else { (vec![1.0, 0.0], -1.0) };
            let a = Vector::from_vec(a);
            let b = if a.dot(c) >= b { b } else { a.dot(c) };
            Ok(CutterResponse::Cut(CutRecord::new(CutKind::Feasibility, a, b, Witness::Point(c.clone()))?))
        },
        log_thr,
    )
    .unwrap();
    match res {
        Feasibility::Infeasible { cuts } => {
            let bound = 2.0 * 2.0 * 3.0 * 4.0;
            assert!((cuts.len() as f64) <= bound);
            // Exact count from the per-cut decay.
            let per = -central_cut_log_decay(2);
            assert_eq!(cuts.len(), (4.0 / per).ceil() as usize);
        }
        _ => panic!("expected infeasible"),
    }
}

#[test]
fn ball_oracle_is_accepted_at_interior_point() {
    let inner = ConvexBody::ball(Vector::zeros(3), 0.5).unwrap();
    let init = Ellipsoid::ball(Vector::from_vec(vec![1.0, -1.2, 0.3]), 2.0 * 3f64.sqrt());
    let thr = log_ball_volume(3, 1e-6);
    let res = ellipsoid_feasibility(
        init,
        |c| match inner.separate(c)? {
            Separation::Inside => Ok(CutterResponse::Accept(())),
            Separation::Outside(h) => {
                Ok(CutterResponse::Cut(CutRecord::new(CutKind::Feasibility, h.a, h.b, Witness::Point(c.clone()))?))
            }
        },
        thr,
    )
    .unwrap();
    match res {
        Feasibility::Accepted { point, .. } => assert!(inner.contains(&point)),
        _ => panic!("expected acceptance"),
    }
}

proptest! {
    #[test]
    fn ball_cut_supports(px in -5.0f64..5.0, py in -5.0f64..5.0, pz in -5.0f64..5.0, r in 0.1f64..3.0) {
        let body = ConvexBody::ball(Vector::zeros(3), r).unwrap();
        let p = Vector::from_vec(vec![px, py, pz]);
        match body.separate(&p).unwrap() {
            Separation::Inside => prop_assert!(p.norm() <= r + 1e-9),
            Separation::Outside(h) => {
                prop_assert!(h.a.dot(&p) > h.b);
                // Support function of the ball equals the bound.
                prop_assert!((h.a.norm() * r - h.b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn simplex_cut_contains_vertices(p in proptest::collection::vec(-2.0f64..2.0, 4)) {
        let body = ConvexBody::simplex(4).unwrap();
        let p = Vector::from_vec(p);
        if let Separation::Outside(h) = body.separate(&p).unwrap() {
            prop_assert!(h.a.dot(&p) > h.b);
            prop_assert!(h.b >= -1e-15);
            for i in 0..4 {
                prop_assert!(h.a[i] <= h.b + 1e-15);
            }
        }
    }
}

#[test]
fn parallel_cuts_fail_loudly_on_conditioning() {
    let init = Ellipsoid::ball(Vector::zeros(2), 2.0);
    let thr = init.log_volume() - 40.0;
    let res = ellipsoid_feasibility::<()>(
        init,
        |c| {
            let a = Vector::from_vec(vec![if c[0] < 0.0 { -1.0 } else { 1.0 }, 0.0]);
            let b = a.dot(c);
            Ok(CutterResponse::Cut(CutRecord::new(CutKind::Feasibility, a, b, Witness::None)?))
        },
        thr,
    );
    match res {
        Err(phieq::Error::Numeric(msg)) => assert!(msg.contains("ill-conditioned")),
        other => panic!("expected a conditioning failure, got {other:?}"),
    }
}
