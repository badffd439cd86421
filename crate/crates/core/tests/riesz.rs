use naheat::na_group::PointG;
use naheat::riesz::{
    convolution_of_halves, dyadic_kernel, tail_by_time_quadrature_auto, tail_kernel, Order, TailCase,
};
use naheat::heat_kernel::h_second_star;
use naheat::stratified_group::GroupDescriptor;

fn q1() -> GroupDescriptor {
    GroupDescriptor::abelian(1).unwrap()
}

#[test]
fn case_assignment() {
    let g = q1();
    assert_eq!(tail_kernel(&g, 1, 1).unwrap().case_tag, TailCase::I);
    assert_eq!(tail_kernel(&g, 1, 0).unwrap().case_tag, TailCase::II);
    assert_eq!(tail_kernel(&g, 0, 1).unwrap().case_tag, TailCase::III);
    assert_eq!(tail_kernel(&g, 0, 0).unwrap().case_tag, TailCase::IV);
}

#[test]
fn tail_matches_time_quadrature() {
    let g = q1();
    let x = PointG::q1(0.7, -0.4);
    for (j, l) in [(1, 1), (0, 0)] {
        let k = tail_kernel(&g, j, l).unwrap();
        let b = tail_by_time_quadrature_auto(&g, j, l, &x, 16).unwrap();
        let a = k.field.eval(&x);
        assert!((a - b.total()).abs() < 1e-3 * a.abs(), "({j},{l}): {a} vs {}", b.total());
    }
}

#[test]
fn halves_reproduce_mixed_kernel() {
    let g = q1();
    let x = PointG::q1(0.3, 0.2);
    let c = convolution_of_halves(&g, 1, 1, 2.0, &x).unwrap().value;
    let d = h_second_star(&g, 1, 1, 2.0, &x).unwrap().value;
    assert!((c - d).abs() < 1e-6 * d.abs());
}

#[test]
fn dyadic_second_order_needs_small_times() {
    let g = q1();
    assert!(dyadic_kernel(&g, -2, Order::Second { j: 1, l: 1 }).is_ok());
    assert!(dyadic_kernel(&g, 1, Order::Second { j: 1, l: 1 }).is_err());
    assert!(dyadic_kernel(&GroupDescriptor::heisenberg(), -3, Order::First { j: 1 }).is_err());
}
