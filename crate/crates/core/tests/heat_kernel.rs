use naheat::heat_kernel::{default_source, h, h_derivative, h_second_star, Kernel, Strategy};
use naheat::na_group::{fd_derivative, g_inverse, integrate_g, modular, PointG, QuadratureSpec};
use naheat::stratified_group::GroupDescriptor;
use naheat::Error;

#[test]
fn q1_mass_and_positivity() {
    let g = GroupDescriptor::abelian(1).unwrap();
    for t in [1.0, 4.0] {
        let src = default_source(&g, t).unwrap();
        let f = Kernel::new(&g, t, &src, &[], Strategy::Moments).unwrap().field(QuadratureSpec::for_time(t));
        let m = integrate_g(&f, |_| 1.0, true).unwrap().value;
        assert!((m - 1.0).abs() < 1e-6);
        assert!(f.eval(&PointG::q1(2.0, -1.0)) > 0.0);
    }
}

#[test]
fn small_time_uses_profile_on_q1() {
    let g = GroupDescriptor::abelian(1).unwrap();
    let v = h(&g, 0.05, &PointG::q1(0.1, 0.0)).unwrap().value;
    assert!(v > 0.0 && v.is_finite());
}

#[test]
fn heisenberg_small_time_is_unsupported() {
    let g = GroupDescriptor::heisenberg();
    let x = PointG::new(&[0.0, 0.0, 0.0], 0.0).unwrap();
    assert!(matches!(h(&g, 0.05, &x), Err(Error::UnsupportedRegime(_))));
}

#[test]
fn heisenberg_kernel_is_symmetric_and_positive() {
    let g = GroupDescriptor::heisenberg();
    for (z, u) in [([0.3, -0.2, 0.5], 0.4), ([1.0, 0.5, -1.0], -0.6)] {
        let x = PointG::new(&z, u).unwrap();
        let a = h(&g, 1.0, &x).unwrap().value;
        let b = modular(&x, &g) * h(&g, 1.0, &g_inverse(&x, &g)).unwrap().value;
        assert!(a > 0.0);
        assert!((a - b).abs() < 1e-9 * a);
    }
}

#[test]
fn heisenberg_derivatives_match_differences() {
    let g = GroupDescriptor::heisenberg();
    let x = PointG::new(&[0.4, -0.3, 0.2], 0.3).unwrap();
    let base = |y: &PointG| h(&g, 2.0, y).unwrap().value;
    for j in 0..=2 {
        let a = h_derivative(&g, j, 2.0, &x).unwrap().value;
        let fd = fd_derivative(base, &x, j, 1e-4, &g);
        assert!((a - fd).abs() < 1e-6 * a.abs().max(1e-3 * base(&x)), "j = {j}: {a} vs {fd}");
    }
}

#[test]
fn mixed_second_derivative_matches_differences() {
    let g = GroupDescriptor::abelian(1).unwrap();
    let x = PointG::q1(0.5, -0.2);
    let t = 2.0;
    // X_1 (X_1 h)^* with (X_1 h)^*(y) = m(y) X_1 h(y^{-1})
    let inner = |y: &PointG| modular(y, &g) * h_derivative(&g, 1, t, &g_inverse(y, &g)).unwrap().value;
    let fd = fd_derivative(inner, &x, 1, 1e-4, &g);
    let a = h_second_star(&g, 1, 1, t, &x).unwrap().value;
    assert!((a - fd).abs() < 1e-6 * a.abs());
}

#[test]
fn rejects_bad_time() {
    let g = GroupDescriptor::abelian(1).unwrap();
    assert!(matches!(h(&g, -1.0, &PointG::q1(0.0, 0.0)), Err(Error::InvalidParameter(_))));
}
