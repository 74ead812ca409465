use approx::assert_abs_diff_eq;
use cuspcode::boundary_geometry::*;
use num_complex::Complex64;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn v1(x: f64) -> BoundaryPoint {
    BoundaryPoint::Finite(Vect::new1(x))
}

fn fin(p: BoundaryPoint) -> Vect {
    p.finite().expect("finite point")
}

// Exact rational evaluation of (ax+b)/(cx+d) for integer data.
fn rational_apply(m: [[i64; 2]; 2], num: i64, den: i64) -> (i64, i64) {
    let [[a, b], [c, d]] = m;
    (a * num + b * den, c * num + d * den)
}

fn random_map(rng: &mut ChaCha8Rng, dim: usize) -> MobiusMap {
    let rand_vec = |rng: &mut ChaCha8Rng| {
        Vect::from_slice(&(0..dim).map(|_| rng.random_range(-3.0..3.0)).collect::<Vec<_>>())
    };
    let a = if dim == 1 {
        Mat::from_rows(&[vec![if rng.random::<bool>() { 1.0 } else { -1.0 }]]).unwrap()
    } else {
        let r = Mat::rotation2(rng.random_range(0.0..6.28));
        if rng.random::<bool>() {
            r.mul(&Mat::reflection(&Vect::new2(1.0, 0.0)))
        } else {
            r
        }
    };
    if rng.random::<f64>() < 0.2 {
        MobiusMap::Affine { scale: rng.random_range(0.3..3.0), a, b: rand_vec(rng) }
    } else {
        MobiusMap::Inversive { p: rand_vec(rng), p_inv: rand_vec(rng), h: rng.random_range(0.1..4.0), a }
    }
}

fn random_point(rng: &mut ChaCha8Rng, dim: usize) -> Vect {
    Vect::from_slice(&(0..dim).map(|_| rng.random_range(-4.0..4.0)).collect::<Vec<_>>())
}

#[test]
fn identity_fixes_points_and_has_unit_distortion() {
    let id = MobiusMap::identity(1);
    for x in [-3.0, 0.0, 0.25, 7.5] {
        assert_eq!(apply(&id, &v1(x)), v1(x));
        assert_eq!(deriv(&id, &v1(x), Metric::Euclidean).unwrap(), 1.0);
        assert_abs_diff_eq!(deriv(&id, &v1(x), Metric::Spherical).unwrap(), 1.0, epsilon = 1e-15);
    }
    assert!(apply(&id, &BoundaryPoint::Infinity).is_infinity());
}

#[test]
fn pole_goes_to_infinity_and_infinity_to_p() {
    let m = MobiusMap::Inversive {
        p: Vect::new1(0.0),
        p_inv: Vect::new1(-2.0),
        h: 1.0,
        a: Mat::from_rows(&[vec![-1.0]]).unwrap(),
    };
    assert!(apply(&m, &v1(-2.0)).is_infinity());
    assert_eq!(apply(&m, &BoundaryPoint::Infinity), v1(0.0));
    assert!(matches!(deriv(&m, &v1(-2.0), Metric::Euclidean), Err(cuspcode::Error::Pole(_))));
}

#[test]
fn matrix_form_matches_rational_oracle() {
    // x -> -1/(x+2) = [[0,-1],[1,2]]
    let mat = [[0, -1], [1, 2]];
    let m = MobiusMap::from_real_matrix([[0.0, -1.0], [1.0, 2.0]]).unwrap();
    assert_eq!(fin(apply(&m, &v1(0.0))).get(0), -0.5);
    for num in -20..20i64 {
        for den in [1i64, 3, 7] {
            let (p, q) = rational_apply(mat, num, den);
            let x = num as f64 / den as f64;
            match apply(&m, &v1(x)) {
                BoundaryPoint::Infinity => assert_eq!(q, 0),
                BoundaryPoint::Finite(y) => assert_abs_diff_eq!(y.get(0), p as f64 / q as f64, epsilon = 1e-12),
            }
        }
    }
}

#[test]
fn derivative_matches_central_differences() {
    let m = MobiusMap::from_real_matrix([[0.0, -1.0], [1.0, 2.0]]).unwrap();
    let d = deriv(&m, &v1(0.0), Metric::Euclidean).unwrap();
    assert_abs_diff_eq!(d, 0.25, epsilon = 1e-15);
    let step = 1e-6;
    let fd = (fin(apply(&m, &v1(step))).get(0) - fin(apply(&m, &v1(-step))).get(0)) / (2.0 * step);
    assert_abs_diff_eq!(d, fd, epsilon = TOL_FINITE_DIFF);
}

#[test]
fn chain_rule_against_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst: f64 = 0.0;
    let mut tested = 0;
    while tested < 100 {
        let m1 = random_map(&mut rng, 1);
        let m2 = random_map(&mut rng, 1);
        let x = random_point(&mut rng, 1);
        let c = compose(&m1, &m2).unwrap();
        let y = match m2.apply_vec(&x) {
            Some(y) => y,
            None => continue,
        };
        let (Some(dc), Some(d1), Some(d2)) = (c.deriv_vec(&x), m1.deriv_vec(&y), m2.deriv_vec(&x)) else {
            continue;
        };
        if dc > 1e3 || dc < 1e-3 {
            continue;
        }
        // independent check of the composite's derivative by differences
        let h = 1e-6;
        let f = |t: f64| c.apply_vec(&Vect::new1(x.get(0) + t)).unwrap().get(0);
        let fd = ((f(h) - f(-h)) / (2.0 * h)).abs();
        assert!((fd - dc).abs() / dc < 1e-5, "fd {fd} vs {dc}");
        worst = worst.max((dc - d1 * d2).abs() / dc);
        tested += 1;
    }
    assert!(worst < TOL_ANALYTIC, "chain rule residual {worst}");
}

#[test]
fn composition_agrees_with_matrix_product() {
    let t = [[1.0, 2.0], [0.0, 1.0]];
    let s = [[0.0, -1.0], [1.0, 2.0]];
    let prod = [
        [t[0][0] * s[0][0] + t[0][1] * s[1][0], t[0][0] * s[0][1] + t[0][1] * s[1][1]],
        [t[1][0] * s[0][0] + t[1][1] * s[1][0], t[1][0] * s[0][1] + t[1][1] * s[1][1]],
    ];
    let c = compose(&MobiusMap::from_real_matrix(t).unwrap(), &MobiusMap::from_real_matrix(s).unwrap()).unwrap();
    let oracle = MobiusMap::from_real_matrix(prod).unwrap();
    for i in 0..50 {
        let x = -5.0 + 0.2 * i as f64 + 0.013;
        let a = fin(c.apply(&v1(x))).get(0);
        let b = fin(oracle.apply(&v1(x))).get(0);
        assert_abs_diff_eq!(a, b, epsilon = 1e-9);
    }
}

#[test]
fn complex_matrix_form_matches_complex_arithmetic() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..50 {
        let mut z = || Complex64::new(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0));
        let (a, b, c, d) = (z(), z(), z(), z());
        let m = MobiusMap::from_complex_matrix([[a, b], [c, d]]).unwrap();
        let w = z();
        let expect = (a * w + b) / (c * w + d);
        let got = m.apply_vec(&Vect::new2(w.re, w.im)).unwrap();
        assert_abs_diff_eq!(got.get(0), expect.re, epsilon = 1e-9 * (1.0 + expect.norm()));
        assert_abs_diff_eq!(got.get(1), expect.im, epsilon = 1e-9 * (1.0 + expect.norm()));
        let dexp = ((a * d - b * c) / ((c * w + d) * (c * w + d))).norm();
        assert!((m.deriv_vec(&Vect::new2(w.re, w.im)).unwrap() - dexp).abs() < 1e-9 * (1.0 + dexp));
    }
}

#[test]
fn inverse_swaps_bruhat_points() {
    let m = MobiusMap::from_real_matrix([[1.0, 0.0], [2.0, 1.0]]).unwrap();
    let MobiusMap::Inversive { p, p_inv, .. } = m else { panic!() };
    let MobiusMap::Inversive { p: q, p_inv: q_inv, .. } = invert(&m) else { panic!() };
    assert_eq!(p, q_inv);
    assert_eq!(p_inv, q);
    assert_eq!(invert(&MobiusMap::identity(2)), MobiusMap::identity(2));
}

#[test]
fn round_trip_inverse_on_random_maps() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for dim in [1, 2] {
        for _ in 0..100 {
            let m = random_map(&mut rng, dim);
            assert!(invert(&invert(&m)).distance(&m) < TOL_STRUCTURAL);
            let id = compose(&m, &invert(&m)).unwrap();
            assert!(id.distance(&MobiusMap::identity(dim)) < 1e-9, "{id:?}");
            assert!(compose(&MobiusMap::identity(dim), &m).unwrap().distance(&m) < 1e-12);
        }
    }
}

#[test]
fn group_laws_on_random_triples() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for dim in [1, 2] {
        for _ in 0..200 {
            let (a, b, c) = (random_map(&mut rng, dim), random_map(&mut rng, dim), random_map(&mut rng, dim));
            let l = compose(&compose(&a, &b).unwrap(), &c).unwrap();
            let r = compose(&a, &compose(&b, &c).unwrap()).unwrap();
            // compare pointwise: the Bruhat tuple is well conditioned only away from degenerations
            for _ in 0..5 {
                let x = random_point(&mut rng, dim);
                if let (Some(u), Some(v)) = (l.apply_vec(&x), r.apply_vec(&x)) {
                    assert!(u.dist(&v) < 1e-9 * (1.0 + u.norm2()), "{u:?} {v:?}");
                }
            }
        }
    }
}

#[test]
fn compose_rejects_dimension_mismatch() {
    assert!(matches!(
        compose(&MobiusMap::identity(1), &MobiusMap::identity(2)),
        Err(cuspcode::Error::Dimension(1, 2))
    ));
}

#[test]
fn derivative_formula_against_bruhat_data() {
    // deriv(g^{-1}, x) d(x, p)^2 = h
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for _ in 0..1000 {
        let dim = 1 + (rng.random::<u8>() % 2) as usize;
        let m = random_map(&mut rng, dim);
        let MobiusMap::Inversive { p, h, .. } = m else { continue };
        let x = random_point(&mut rng, dim);
        let d = invert(&m).deriv_vec(&x).unwrap();
        assert!((d * x.dist(&p).powi(2) - h).abs() < 1e-12 * h.max(1.0));
    }
}

#[test]
fn spherical_conversion_identity() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for _ in 0..500 {
        let m = random_map(&mut rng, 2);
        let x = random_point(&mut rng, 2);
        let gx = m.apply_vec(&x).unwrap();
        let e = deriv(&m, &BoundaryPoint::Finite(x), Metric::Euclidean).unwrap();
        let s = deriv(&m, &BoundaryPoint::Finite(x), Metric::Spherical).unwrap();
        assert!((s - (1.0 + x.norm2()) / (1.0 + gx.norm2()) * e).abs() < 1e-10 * s.max(1.0));
    }
}

#[test]
fn conformality_in_the_plane() {
    let mut rng = ChaCha8Rng::seed_from_u64(19);
    let h = 1e-6;
    let mut checked = 0;
    while checked < 200 {
        let m = random_map(&mut rng, 2);
        let x = random_point(&mut rng, 2);
        let Some(d) = m.deriv_vec(&x) else { continue };
        if !(0.01..100.0).contains(&d) {
            continue;
        }
        let dir = |e: Vect| {
            let a = m.apply_vec(&(x + e.scale(h))).unwrap();
            let b = m.apply_vec(&(x - e.scale(h))).unwrap();
            a.dist(&b) / (2.0 * h)
        };
        let t = rng.random_range(0.0..6.28f64);
        let (e1, e2) = (Vect::new2(t.cos(), t.sin()), Vect::new2(-t.sin(), t.cos()));
        assert!((dir(e1) - dir(e2)).abs() < TOL_FINITE_DIFF * d.max(1.0));
        assert!((dir(e1) - d).abs() < TOL_FINITE_DIFF * d.max(1.0));
        checked += 1;
    }
}

#[test]
fn busemann_closed_forms() {
    let o = HalfSpacePoint::origin(1);
    let z = HalfSpacePoint::new(Vect::new1(0.3), 0.7);
    assert_eq!(busemann(&BoundaryPoint::Infinity, &z, &z), 0.0);
    assert_abs_diff_eq!(busemann(&v1(0.4), &z, &z), 0.0);
    let h: f64 = 3.7;
    assert_abs_diff_eq!(
        busemann(&BoundaryPoint::Infinity, &o, &HalfSpacePoint::new(Vect::new1(0.0), h)),
        h.ln(),
        epsilon = 1e-15
    );
}

#[test]
fn busemann_matches_truncated_ray_limit() {
    // approximate lim d(z, x_t) - d(z', x_t) along the vertical-then-geodesic ray to x
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    for _ in 0..200 {
        let x = Vect::new2(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0));
        let z = HalfSpacePoint::new(random_point(&mut rng, 2), rng.random_range(0.2..3.0));
        let w = HalfSpacePoint::new(random_point(&mut rng, 2), rng.random_range(0.2..3.0));
        // points along the geodesic from (x, 1) down to x: (x, t) with t -> 0
        let xt = HalfSpacePoint::new(x, 1e-7);
        let approx = hyperbolic_distance(&z, &xt) - hyperbolic_distance(&w, &xt);
        let exact = busemann(&BoundaryPoint::Finite(x), &z, &w);
        assert!((approx - exact).abs() < 1e-5, "{approx} vs {exact}");
    }
}

#[test]
fn busemann_cocycle_and_antisymmetry() {
    let mut rng = ChaCha8Rng::seed_from_u64(29);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let x = if rng.random::<f64>() < 0.2 {
            BoundaryPoint::Infinity
        } else {
            BoundaryPoint::Finite(random_point(&mut rng, 2))
        };
        let mut hp = || HalfSpacePoint::new(random_point(&mut rng, 2), rng.random_range(0.05..5.0));
        let (a, b, c) = (hp(), hp(), hp());
        let r = busemann(&x, &a, &b) + busemann(&x, &b, &c) - busemann(&x, &a, &c);
        worst = worst.max(r.abs());
        assert!((busemann(&x, &a, &b) + busemann(&x, &b, &a)).abs() < 1e-12);
    }
    assert!(worst < TOL_ANALYTIC);
}

#[test]
fn spherical_distortion_is_busemann_exponential() {
    // |g'(x)|_S = exp(-beta_x(g^{-1} o, o))
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    for _ in 0..300 {
        let g = random_map(&mut rng, 2);
        let x = random_point(&mut rng, 2);
        let o = HalfSpacePoint::origin(2);
        let lhs = g.deriv_spherical(&BoundaryPoint::Finite(x));
        let rhs = (-busemann(&BoundaryPoint::Finite(x), &g.inverse().apply_half(&o), &o)).exp();
        assert!((lhs - rhs).abs() < 1e-9 * lhs.max(1.0), "{lhs} {rhs}");
    }
}

#[test]
fn grad_log_deriv_examples() {
    let m = MobiusMap::from_real_matrix([[0.0, -1.0], [1.0, 2.0]]).unwrap();
    assert_abs_diff_eq!(grad_log_deriv(&m, &v1(0.0), &Vect::new1(1.0)).unwrap(), -1.0, epsilon = 1e-15);
    assert!(grad_log_deriv(&m, &v1(-2.0), &Vect::new1(1.0)).is_err());
    let m2 = MobiusMap::Inversive {
        p: Vect::new2(0.0, 0.0),
        p_inv: Vect::new2(-1.0, 0.0),
        h: 1.0,
        a: Mat::identity(2),
    };
    let g = m2.grad_log_deriv(&Vect::new2(1.0, 0.0), &Vect::new2(0.0, 1.0)).unwrap();
    assert_eq!(g, 0.0);
}

#[test]
fn grad_log_deriv_bound_and_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(37);
    for _ in 0..1000 {
        let m = random_map(&mut rng, 2);
        let MobiusMap::Inversive { p_inv, .. } = m else { continue };
        let x = random_point(&mut rng, 2);
        let t = rng.random_range(0.0..6.28f64);
        let e = Vect::new2(t.cos(), t.sin());
        let g = m.grad_log_deriv(&x, &e).unwrap();
        assert!(g.abs() <= 2.0 / x.dist(&p_inv) + 1e-12);
        let h = 1e-6;
        let f = |s: f64| m.deriv_vec(&(x + e.scale(s))).unwrap().ln();
        let fd = (f(h) - f(-h)) / (2.0 * h);
        assert!((fd - g).abs() < 1e-4 * (1.0 + g.abs()), "{fd} {g}");
    }
}

#[test]
fn hyperbolic_distance_basics() {
    let o = HalfSpacePoint::origin(1);
    assert_eq!(hyperbolic_distance(&o, &o), 0.0);
    let e = HalfSpacePoint::new(Vect::new1(0.0), std::f64::consts::E);
    assert_abs_diff_eq!(hyperbolic_distance(&o, &e), 1.0, epsilon = 1e-14);
}

#[test]
fn isometry_invariance_and_triangle_inequality() {
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    for _ in 0..500 {
        let dim = 1 + (rng.random::<u8>() % 2) as usize;
        let g = random_map(&mut rng, dim);
        let mut hp = || HalfSpacePoint::new(random_point(&mut rng, dim), rng.random_range(0.1..3.0));
        let (x, y, z) = (hp(), hp(), hp());
        let d = hyperbolic_distance(&x, &y);
        let dg = hyperbolic_distance(&g.apply_half(&x), &g.apply_half(&y));
        assert!((d - dg).abs() < 1e-8, "{d} {dg}");
        assert!((d - hyperbolic_distance(&y, &x)).abs() < 1e-15);
        assert!(d <= hyperbolic_distance(&x, &z) + hyperbolic_distance(&z, &y) + 1e-9);
    }
}

#[test]
fn half_space_extension_keeps_height_positive() {
    let mut rng = ChaCha8Rng::seed_from_u64(43);
    for _ in 0..500 {
        let g = random_map(&mut rng, 2);
        let z = HalfSpacePoint::new(random_point(&mut rng, 2), rng.random_range(1e-6..10.0));
        assert!(g.apply_half(&z).height > 0.0);
    }
}

#[test]
fn serde_round_trip_of_maps_and_points() {
    let m = MobiusMap::from_real_matrix([[0.0, -1.0], [1.0, 2.0]]).unwrap();
    let s = serde_json::to_string(&m).unwrap();
    assert_eq!(serde_json::from_str::<MobiusMap>(&s).unwrap(), m);
    let inf = serde_json::to_string(&BoundaryPoint::Infinity).unwrap();
    assert_eq!(inf, "\"inf\"");
    assert!(serde_json::from_str::<BoundaryPoint>(&inf).unwrap().is_infinity());
    assert_eq!(serde_json::from_str::<BoundaryPoint>("[1.5]").unwrap(), v1(1.5));
    assert!(serde_json::from_str::<BoundaryPoint>("\"nope\"").is_err());
}

#[test]
fn chart_box_geometry() {
    let b = ChartBox::interval(0.0, 2.0).unwrap();
    assert!(b.contains(&Vect::new1(0.0)) && !b.contains(&Vect::new1(2.0)));
    assert_eq!(b.dist(&Vect::new1(-3.0)), 3.0);
    assert_eq!(b.dist(&Vect::new1(1.0)), 0.0);
    assert_eq!(b.dist_to_boundary(&Vect::new1(0.5)), 0.5);
    let (r, n) = b.reduce(&Vect::new1(-0.5));
    assert_eq!((r.get(0), n[0]), (1.5, -1));
    let sq = ChartBox::axis_box(&[-1.0, -1.0], &[2.0, 2.0]).unwrap();
    assert_abs_diff_eq!(sq.dist(&Vect::new2(4.0, 5.0)), 5.0, epsilon = 1e-12);
    assert_abs_diff_eq!(sq.dist(&Vect::new2(0.5, 3.0)), 2.0, epsilon = 1e-12);
    assert_abs_diff_eq!(sq.max_dist(&Vect::new2(0.0, 0.0)), 2f64.sqrt(), epsilon = 1e-12);
    // slanted lattice: brute-force distance oracle
    let sl = ChartBox::new(Vect::new2(0.0, 0.0), vec![Vect::new2(1.0, 0.0), Vect::new2(0.5, 1.0)], 0.0).unwrap();
    let x = Vect::new2(2.3, -0.7);
    let mut best = f64::INFINITY;
    for i in 0..=400 {
        for j in 0..=400 {
            let q = sl.point(&[i as f64 / 400.0, j as f64 / 400.0], &Vect::zeros(2));
            best = best.min(q.dist(&x));
        }
    }
    assert!((sl.dist(&x) - best).abs() < 5e-3);
    // rank one in the plane: strip of half-width y_radius
    let strip = ChartBox::new(Vect::new2(0.0, 0.0), vec![Vect::new2(2.0, 0.0)], 1.0).unwrap();
    assert!(strip.contains(&Vect::new2(1.0, 0.9)) && !strip.contains(&Vect::new2(1.0, 1.1)));
    assert_abs_diff_eq!(strip.dist(&Vect::new2(3.0, 2.0)), 2f64.sqrt(), epsilon = 1e-12);
}

proptest! {
    #[test]
    fn prop_inverse_is_two_sided(px in -5.0..5.0f64, qx in -5.0..5.0f64, h in 0.05..5.0f64, flip in any::<bool>(), x in -9.0..9.0f64) {
        let a = Mat::from_rows(&[vec![if flip { -1.0 } else { 1.0 }]]).unwrap();
        let m = MobiusMap::Inversive { p: Vect::new1(px), p_inv: Vect::new1(qx), h, a };
        let y = m.apply(&v1(x));
        let back = m.inverse().apply(&y);
        match back {
            BoundaryPoint::Finite(b) => prop_assert!((b.get(0) - x).abs() < 1e-7 * (1.0 + x.abs())),
            BoundaryPoint::Infinity => prop_assert!(false),
        }
    }

    #[test]
    fn prop_chain_rule_in_plane(a1 in 0.0..6.3f64, a2 in 0.0..6.3f64, h1 in 0.1..3.0f64, h2 in 0.1..3.0f64,
                                 p in prop::array::uniform4(-3.0..3.0f64), x in prop::array::uniform2(-4.0..4.0f64)) {
        let m1 = MobiusMap::Inversive { p: Vect::new2(p[0], p[1]), p_inv: Vect::new2(p[2], p[3]), h: h1, a: Mat::rotation2(a1) };
        let m2 = MobiusMap::Inversive { p: Vect::new2(p[3], p[0]), p_inv: Vect::new2(p[1], p[2]), h: h2, a: Mat::rotation2(a2) };
        let xv = Vect::new2(x[0], x[1]);
        let c = m1.compose(&m2).unwrap();
        if let (Some(y), Some(dc)) = (m2.apply_vec(&xv), c.deriv_vec(&xv)) {
            if let (Some(d1), Some(d2)) = (m1.deriv_vec(&y), m2.deriv_vec(&xv)) {
                prop_assert!((dc - d1 * d2).abs() <= 1e-8 * dc.max(1.0));
            }
        }
    }

    #[test]
    fn prop_busemann_cocycle(x in prop::array::uniform2(-3.0..3.0f64), z in prop::array::uniform3(0.1..3.0f64),
                             w in prop::array::uniform3(0.1..3.0f64), u in prop::array::uniform3(0.1..3.0f64)) {
        let xp = BoundaryPoint::Finite(Vect::new2(x[0], x[1]));
        let hp = |a: [f64; 3]| HalfSpacePoint::new(Vect::new2(a[0], a[1]), a[2]);
        let r = busemann(&xp, &hp(z), &hp(w)) + busemann(&xp, &hp(w), &hp(u)) - busemann(&xp, &hp(z), &hp(u));
        prop_assert!(r.abs() < 1e-10);
    }
}
