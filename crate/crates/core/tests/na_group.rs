use naheat::na_group::{
    ball_volume_q1, cosh_distance, estimate_cn, g_distance, g_distance_between, g_inverse, g_multiply, integrate_g,
    modular, poincare_distance, random_point, KernelField, PointG, QuadratureSpec,
};
use naheat::stratified_group::GroupDescriptor;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn distance_is_left_invariant() {
    let g = GroupDescriptor::heisenberg();
    let mut r = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..200 {
        let (a, x, y) = (random_point(&mut r, &g, 2.0, 1.0), random_point(&mut r, &g, 2.0, 1.0), random_point(&mut r, &g, 2.0, 1.0));
        let d1 = g_distance_between(&x, &y, &g).unwrap();
        let d2 = g_distance_between(&g_multiply(&a, &x, &g).unwrap(), &g_multiply(&a, &y, &g).unwrap(), &g).unwrap();
        assert!((d1 - d2).abs() < 1e-9 * (1.0 + d1));
    }
}

#[test]
fn q1_distance_is_hyperbolic() {
    let g = GroupDescriptor::abelian(1).unwrap();
    let x = PointG::q1(1.3, -0.4);
    assert!((g_distance(&x, &g).unwrap() - poincare_distance(1.3, -0.4)).abs() < 1e-13);
    assert!((cosh_distance(&PointG::q1(0.0, 2.0), &g).unwrap() - 2f64.cosh()).abs() < 1e-13);
}

#[test]
fn modular_function_is_a_character() {
    let g = GroupDescriptor::abelian(2).unwrap();
    let x = PointG::new(&[0.1, 0.2], 0.7).unwrap();
    let y = PointG::new(&[-1.0, 0.5], -0.3).unwrap();
    let m = modular(&g_multiply(&x, &y, &g).unwrap(), &g);
    assert!((m - modular(&x, &g) * modular(&y, &g)).abs() < 1e-14 * m);
    assert!((modular(&g_inverse(&x, &g), &g) * modular(&x, &g) - 1.0).abs() < 1e-14);
}

#[test]
fn ball_volume_growth() {
    let cn = estimate_cn(&GroupDescriptor::abelian(1).unwrap()).unwrap();
    for r in [0.5, 2.0, 5.0] {
        let ratio = ball_volume_q1(r) / (f64::cosh(r) - 1.0);
        assert!((ratio - cn).abs() < 1e-3 * cn);
    }
}

#[test]
fn gaussian_integral_over_q1() {
    // right Haar measure dz du; f = e^{-z^2 - u^2}
    let g = GroupDescriptor::abelian(1).unwrap();
    let f = KernelField::new("gauss", g, QuadratureSpec::for_radius(8.0, 8.0, 0.5), |x: &PointG| {
        (-x.z.coords()[0].powi(2) - x.u * x.u).exp()
    });
    let v = integrate_g(&f, |_| 1.0, true).unwrap().value;
    assert!((v - std::f64::consts::PI).abs() < 1e-8);
}

#[test]
fn tensor_quadrature_is_limited_to_low_dimension() {
    let g = GroupDescriptor::heisenberg();
    let f = KernelField::new("one", g, QuadratureSpec::for_radius(2.0, 2.0, 0.5), |_: &PointG| 1.0);
    assert!(matches!(integrate_g(&f, |_| 1.0, true), Err(naheat::Error::UnsupportedRegime(_))));
}
