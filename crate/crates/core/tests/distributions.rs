use phieq::distributions::*;
use phieq::error::Error;
use phieq::linalg::Vector;
use proptest::prelude::*;

fn v(xs: &[f64]) -> Vector {
    Vector::from_vec(xs.to_vec())
}

#[test]
fn expect_examples() {
    let x = v(&[1.0, -2.0]);
    let y = v(&[0.5, 4.0]);
    let point = SupportDistribution::point_mass(x.clone());
    assert_eq!(point.expect(|z| z * 3.0).unwrap(), &x * 3.0);
    let sym = SupportDistribution::uniform(vec![x.clone(), -x.clone()]).unwrap();
    assert_eq!(sym.expect(|z| z.clone()).unwrap(), Vector::zeros(2));
    let two = SupportDistribution::new(vec![x.clone(), y.clone()], vec![0.3, 0.7]).unwrap();
    let m = two.expect(|z| z.clone()).unwrap();
    assert!((m - (&x * 0.3 + &y * 0.7)).norm() < 1e-15);
}

#[test]
fn expect_propagates_non_finite() {
    let mu = SupportDistribution::point_mass(v(&[1.0]));
    assert!(matches!(mu.expect(|_| v(&[f64::NAN])), Err(Error::Numeric(_))));
}

#[test]
fn invalid_weights_are_rejected() {
    assert!(SupportDistribution::new(vec![v(&[0.0]), v(&[1.0])], vec![0.5, 0.6]).is_err());
    assert!(SupportDistribution::new(vec![v(&[0.0]), v(&[1.0])], vec![1.0, 0.0]).is_err());
    assert!(SupportDistribution::new(vec![v(&[0.0]), v(&[1.0, 2.0])], vec![0.5, 0.5]).is_err());
    assert!(SupportDistribution::new(vec![], vec![]).is_err());
}

#[test]
fn mix_examples() {
    let x = v(&[1.0, 0.0]);
    let y = v(&[0.0, 1.0]);
    let mu = SupportDistribution::new(vec![x.clone(), y.clone()], vec![0.4, 0.6]).unwrap();
    assert_eq!(mix(&[1.0], &[mu.clone()]).unwrap(), mu);
    let px = SupportDistribution::point_mass(x.clone());
    let merged = mix(&[0.5, 0.5], &[px.clone(), px.clone()]).unwrap();
    assert_eq!(merged.len(), 1);
    assert_eq!(merged.weights(), &[1.0]);
    let py = SupportDistribution::point_mass(y.clone());
    let m = mix(&[0.25, 0.75], &[px, py]).unwrap();
    let recs = m.records();
    assert_eq!(recs.len(), 2);
    for r in recs {
        let expected = if r.point == vec![1.0, 0.0] { 0.25 } else { 0.75 };
        assert_eq!(r.weight, expected);
    }
    assert!(matches!(mix(&[], &[]), Err(Error::Usage(_))));
}

#[test]
fn product_examples() {
    let a = SupportDistribution::point_mass(v(&[1.0]));
    let b = SupportDistribution::point_mass(v(&[2.0, 3.0]));
    let p = product(&[a, b]).unwrap();
    assert_eq!(p.atoms(), &[v(&[1.0, 2.0, 3.0])]);
    let u1 = SupportDistribution::uniform(vec![v(&[0.0]), v(&[1.0])]).unwrap();
    let u2 = SupportDistribution::uniform(vec![v(&[5.0]), v(&[6.0])]).unwrap();
    let p = product(&[u1.clone(), u2]).unwrap();
    assert_eq!(p.len(), 4);
    assert!(p.weights().iter().all(|w| *w == 0.25));
    assert_eq!(product(&[u1.clone()]).unwrap(), u1);
}

#[test]
fn product_caps() {
    let u = SupportDistribution::uniform(vec![v(&[0.0]), v(&[1.0])]).unwrap();
    let five = vec![u.clone(); 5];
    assert!(matches!(product(&five), Err(Error::Resource(_))));
    let limits = ProductLimits { max_factors: 4, max_support: 3 };
    assert!(matches!(product_with_limits(&[u.clone(), u], limits), Err(Error::Resource(_))));
}

#[test]
fn top_atom_examples() {
    let x = v(&[1.0, 0.0]);
    let y = v(&[0.0, 1.0]);
    assert_eq!(SupportDistribution::point_mass(x.clone()).top_atom(), &x);
    let mu = SupportDistribution::new(vec![x.clone(), y.clone()], vec![0.6, 0.4]).unwrap();
    assert_eq!(mu.top_atom(), &x);
    let tie = SupportDistribution::uniform(vec![x, y.clone()]).unwrap();
    assert_eq!(tie.top_atom(), &y);
}

#[test]
fn json_roundtrip_is_bit_exact() {
    let atoms = vec![v(&[0.1, 1.0 / 3.0]), v(&[-2.5e-300, 7.0e12])];
    let mu = SupportDistribution::new(atoms, vec![1.0 / 3.0, 2.0 / 3.0]).unwrap();
    let back = SupportDistribution::from_json(&mu.to_json()).unwrap();
    for ((w1, a1), (w2, a2)) in mu.iter().zip(back.iter()) {
        assert_eq!(w1.to_bits(), w2.to_bits());
        for (p, q) in a1.iter().zip(a2.iter()) {
            assert_eq!(p.to_bits(), q.to_bits());
        }
    }
}

fn arb_distribution() -> impl Strategy<Value = SupportDistribution> {
    (1usize..4, 1usize..8).prop_flat_map(|(d, s)| {
        (prop::collection::vec(prop::collection::vec(-3.0f64..3.0, d), s), prop::collection::vec(0.01f64..1.0, s))
            .prop_map(|(atoms, ws)| {
                SupportDistribution::from_weighted(atoms.into_iter().map(Vector::from_vec).collect(), ws).unwrap()
            })
    })
}

proptest! {
    #[test]
    fn weights_are_normalized(mu in arb_distribution()) {
        let s: f64 = mu.weights().iter().sum();
        prop_assert!((s - 1.0).abs() <= WEIGHT_SUM_TOL);
        prop_assert!(mu.weights().iter().all(|w| *w > 0.0));
    }

    #[test]
    fn markov_bound_on_top_atom(mu in arb_distribution(), c in -2.0f64..2.0) {
        // g(x) = (x_0 - c)^2 is nonnegative.
        let g = |x: &Vector| (x[0] - c).powi(2);
        let eg = mu.expect_scalar(|x| g(x)).unwrap();
        prop_assert!(g(mu.top_atom()) <= mu.len() as f64 * eg + 1e-12);
    }

    #[test]
    fn expect_is_linear(mu in arb_distribution(), a in -3.0f64..3.0, b in -3.0f64..3.0) {
        let f = |x: &Vector| x.map(|t| t.sin());
        let g = |x: &Vector| x.map(|t| t * t - 1.0);
        let lhs = mu.expect(|x| f(x) * a + g(x) * b).unwrap();
        let rhs = mu.expect(|x| f(x)).unwrap() * a + mu.expect(|x| g(x)).unwrap() * b;
        prop_assert!((lhs - rhs).amax() <= 1e-12);
    }

    #[test]
    fn mixture_of_halves_preserves_means(mu in arb_distribution(), nu_shift in -1.0f64..1.0) {
        let nu = SupportDistribution::new(
            mu.atoms().iter().map(|x| x.add_scalar(nu_shift)).collect(),
            mu.weights().to_vec(),
        ).unwrap();
        let m = mix(&[0.5, 0.5], &[mu.clone(), nu.clone()]).unwrap();
        let expected = (mu.mean() + nu.mean()) * 0.5;
        prop_assert!((m.mean() - expected).amax() <= 1e-12);
    }
}
