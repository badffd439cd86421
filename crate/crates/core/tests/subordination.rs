use naheat::subordination::{
    psi, psi_second_time_integrated, psi_time_integrated, psi_xi_derivative, psi_xi_derivative_time_partial,
    psi_with_tol,
};

#[test]
fn psi_is_positive_and_reports_error() {
    for t in [0.3, 1.0, 10.0, 100.0] {
        for xi in [0.01, 0.5, 2.0, 50.0] {
            let e = psi(t, xi).unwrap();
            assert!(e.value >= 0.0 && e.value.is_finite());
            assert!(e.est_abs_error <= 1e-9 * e.value + 1e-14);
        }
    }
}

#[test]
fn tolerance_is_respected() {
    let a = psi_with_tol(2.0, 1.5, 1e-6).unwrap().value;
    let b = psi(2.0, 1.5).unwrap().value;
    assert!((a - b).abs() < 1e-6 * b);
}

#[test]
fn xi_derivative_matches_differences() {
    for (t, xi) in [(1.0, 0.7), (5.0, 3.0)] {
        let d = psi_xi_derivative(t, xi).unwrap().value;
        let h = 1e-5 * xi;
        let fd = ((xi + h) * psi(t, xi + h).unwrap().value - (xi - h) * psi(t, xi - h).unwrap().value) / (2.0 * h);
        assert!((d - fd).abs() < 1e-6 * d.abs().max(1e-3));
    }
}

#[test]
fn time_integral_identity() {
    for xi in [0.5, 1.0, 2.0, 8.0] {
        let (partial, tail, _) = psi_xi_derivative_time_partial(xi, 200.0, 24).unwrap();
        let c = psi_time_integrated(xi).unwrap().value;
        assert!((partial + tail - c).abs() < 1e-5 * c.abs(), "xi = {xi}");
    }
}

#[test]
fn second_weight_is_xi_derivative_of_first() {
    let xi: f64 = 2.0;
    let h = 1e-4 * xi;
    let fd = ((xi + h) * psi_time_integrated(xi + h).unwrap().value
        - (xi - h) * psi_time_integrated(xi - h).unwrap().value)
        / (2.0 * h);
    let a = psi_second_time_integrated(xi).unwrap().value;
    assert!((fd - a).abs() < 1e-5 * a.abs());
}

#[test]
fn rejects_bad_arguments() {
    assert!(psi(0.0, 1.0).is_err());
    assert!(psi(1.0, -1.0).is_err());
    assert!(psi(f64::NAN, 1.0).is_err());
    assert!(psi_time_integrated(0.0).is_err());
}
