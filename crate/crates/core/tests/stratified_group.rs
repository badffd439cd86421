use std::f64::consts::PI;

use naheat::stratified_group::{
    dilate, heisenberg_cc_norm, n_unit_ball_volume, n_heat, n_inverse, n_multiply, n_norm, n_weighted_l1, n_weighted_l1_direct, GroupDescriptor, MultiIndex,
    PointN,
};
use naheat::quadrature::{composite, GaussLegendre};
use naheat::Error;

fn pt(c: &[f64]) -> PointN {
    PointN::new(c).unwrap()
}

#[test]
fn heisenberg_law_is_a_group() {
    let g = GroupDescriptor::heisenberg();
    let (a, b, c) = (pt(&[1.0, -2.0, 0.5]), pt(&[0.3, 0.7, -1.0]), pt(&[-1.5, 0.2, 2.0]));
    let l = n_multiply(&n_multiply(&a, &b, &g).unwrap(), &c, &g).unwrap();
    let r = n_multiply(&a, &n_multiply(&b, &c, &g).unwrap(), &g).unwrap();
    for (x, y) in l.coords().iter().zip(r.coords()) {
        assert!((x - y).abs() < 1e-14);
    }
    let e = n_multiply(&a, &n_inverse(&a), &g).unwrap();
    assert!(e.coords().iter().all(|x| x.abs() < 1e-15));
}

#[test]
fn norm_is_homogeneous() {
    let g = GroupDescriptor::heisenberg();
    let z = pt(&[0.4, -0.3, 1.1]);
    let n1 = n_norm(&z, &g).unwrap();
    let n2 = n_norm(&dilate(2.5, &z, &g).unwrap(), &g).unwrap();
    assert!((n2 - 2.5 * n1).abs() < 1e-9 * n2);
}

#[test]
fn heisenberg_heat_at_origin() {
    // int_0^inf tau / sinh tau = pi^2 / 4
    let g = GroupDescriptor::heisenberg();
    for s in [0.5, 1.0, 3.0] {
        let v = n_heat(s, &PointN::zero(3), &g).unwrap();
        let exact = 1.0 / (16.0 * s * s);
        assert!((v - exact).abs() < 1e-10 * exact, "s = {s}: {v} vs {exact}");
    }
}

#[test]
fn heisenberg_heat_scales() {
    let g = GroupDescriptor::heisenberg();
    let z = pt(&[0.6, -0.2, 0.9]);
    let r: f64 = 1.7;
    let a = n_heat(r * r, &dilate(r, &z, &g).unwrap(), &g).unwrap();
    let b = n_heat(1.0, &z, &g).unwrap() * r.powi(-4);
    assert!((a - b).abs() < 1e-10 * b);
}

#[test]
fn heisenberg_heat_has_unit_mass() {
    // radial in (x, y): 2 pi int_0^inf r dr int_R dw p_1(r, 0, w)
    let g = GroupDescriptor::heisenberg();
    let rule = GaussLegendre::new(20);
    let mut m = 0.0;
    for (r, wr) in composite(&rule, 0.0, 9.0, 18) {
        for (w, ww) in composite(&rule, 0.0, 30.0, 30) {
            m += wr * ww * 2.0 * r * n_heat(1.0, &pt(&[r, 0.0, w]), &g).unwrap();
        }
    }
    m *= 2.0 * PI;
    assert!((m - 1.0).abs() < 1e-4, "{m}");
}

#[test]
fn gaussian_gradient_l1() {
    // || d_x g_s ||_1 = 2 g_s(0)
    let g = GroupDescriptor::abelian(1).unwrap();
    let one = MultiIndex::new(&[1]).unwrap();
    for s in [0.25, 1.0, 4.0] {
        let v = n_weighted_l1(&one, &MultiIndex::empty(), 0.0, s, &g).unwrap();
        let exact = 2.0 / (4.0 * PI * s).sqrt();
        assert!((v - exact).abs() < 1e-8 * exact);
        let d = n_weighted_l1_direct(&one, &MultiIndex::empty(), 0.0, s, &g).unwrap();
        assert!((d - v).abs() < 1e-8 * v);
    }
}

#[test]
fn bad_inputs() {
    let g = GroupDescriptor::abelian(2).unwrap();
    assert!(matches!(n_heat(-1.0, &PointN::zero(2), &g), Err(Error::InvalidParameter(_))));
    assert!(matches!(n_heat(1.0, &PointN::zero(3), &g), Err(Error::DimensionMismatch { .. })));
    assert!(GroupDescriptor::parse("lie:3").is_err());
    assert!(MultiIndex::new(&[3]).is_ok());
    assert!(n_weighted_l1(&MultiIndex::new(&[3]).unwrap(), &MultiIndex::empty(), 0.0, 1.0, &g).is_err());
}

#[test]
fn unit_ball_volumes() {
    let v = |q| n_unit_ball_volume(&GroupDescriptor::abelian(q).unwrap());
    assert!((v(1) - 2.0).abs() < 1e-14);
    assert!((v(2) - PI).abs() < 1e-14);
    assert!((v(3) - 4.0 * PI / 3.0).abs() < 1e-14);

    // boundary w_max(r) of the CC ball by bisection on the norm itself
    let w_max = |r: f64| {
        // the sphere peaks at w = 1/(2 pi), above its height 1/(4 pi) on the axis
        let (mut lo, mut hi) = (0.0, 0.2);
        for _ in 0..60 {
            let m = 0.5 * (lo + hi);
            if heisenberg_cc_norm(r, m) < 1.0 {
                lo = m;
            } else {
                hi = m;
            }
        }
        lo
    };
    // r = 1 - v^2 smooths the endpoint
    let rule = GaussLegendre::new(20);
    let s: f64 = composite(&rule, 0.0, 1.0, 8)
        .into_iter()
        .map(|(v, w)| {
            let r = 1.0 - v * v;
            w * 2.0 * v * r * w_max(r)
        })
        .sum();
    let direct = 4.0 * PI * s;
    let h = n_unit_ball_volume(&GroupDescriptor::heisenberg());
    assert!((h - direct).abs() < 1e-6 * h, "{h} vs {direct}");
}
