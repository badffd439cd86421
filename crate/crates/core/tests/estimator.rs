use naheat::estimator::{decay_fit, inner_integral, weighted_l1};
use naheat::heat_kernel::{default_source, Kernel, Strategy};
use naheat::na_group::QuadratureSpec;
use naheat::stratified_group::GroupDescriptor;

#[test]
fn decay_fit_recovers_power_law() {
    let pts: Vec<(f64, f64)> = [4.0, 8.0, 16.0, 32.0, 64.0].iter().map(|&t: &f64| (t, 3.0 * t.powf(-1.5))).collect();
    let (slope, c) = decay_fit(&pts).unwrap();
    assert!((slope + 1.5).abs() < 1e-12);
    assert!((c - 3.0).abs() < 1e-10);
    assert!(decay_fit(&pts[..3]).is_err());
    assert!(decay_fit(&[(1.0, 1.0); 4]).is_err());
}

#[test]
fn weighted_mass_exceeds_mass() {
    let g = GroupDescriptor::abelian(1).unwrap();
    let t = 4.0;
    let src = default_source(&g, t).unwrap();
    let f = Kernel::new(&g, t, &src, &[], Strategy::Moments).unwrap().field(QuadratureSpec::for_time(t));
    let plain = weighted_l1(&f, 0.0, t).unwrap().value;
    let w = weighted_l1(&f, 0.25, t).unwrap().value;
    assert!((plain - 1.0).abs() < 1e-6);
    assert!(w > 1.0 && w < 3.0);
    assert!(weighted_l1(&f, 2.0, t).is_err());
}

#[test]
fn inner_integral_at_zero() {
    // alpha = beta = theta = delta = 0: 2 * 2 int_0^inf (1 + cosh u)^{-1} du = 4
    let v = inner_integral(0.0, 0.0, 0.0, 0.0).unwrap();
    assert!((v - 4.0).abs() < 1e-9, "{v}");
}
