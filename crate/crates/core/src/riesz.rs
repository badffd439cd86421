//! Riesz-transform kernels: dyadic pieces k_n of the first- and second-order
//! transforms, the tail kernel k^(inf) = int_1^inf X_j (X_l h_t)^* dt, and the
//! Calderon-Zygmund size, smoothness and integrability checks.

use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::heat_kernel::{ops_label, Kernel, Part, Profile, Source, Strategy};
use crate::na_group::{
    g_distance, integrate_g, involution, GIntegral, GOp, KernelField, PointG, QuadratureSpec,
};
use crate::stratified_group::{GroupDescriptor, GroupKind};
use crate::subordination::{WeightSet, XiGrid, T_MIN};

/// Gauss-Legendre nodes per dyadic time interval.
pub const DYADIC_NODES: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Order {
    /// int t^{-1/2} X_j h_t dt
    First { j: usize },
    /// int X_j (X_l h_t)^* dt
    Second { j: usize, l: usize },
}

impl Order {
    fn ops(&self) -> Vec<GOp> {
        match *self {
            Order::First { j } => vec![GOp::Deriv(j)],
            Order::Second { j, l } => vec![GOp::Deriv(j), GOp::Star, GOp::Deriv(l)],
        }
    }
}

/// Time-averaged heat kernel data for an interval, plus the derivative
/// program that turns it into the kernel.
#[derive(Clone)]
pub struct DyadicKernel {
    pub n: i32,
    pub order: Order,
    pub field: KernelField,
    pub t_interval: (f64, f64),
    pub g: GroupDescriptor,
    source: Source,
}

impl std::fmt::Debug for DyadicKernel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("DyadicKernel")
            .field("n", &self.n)
            .field("order", &self.order)
            .field("t_interval", &self.t_interval)
            .finish()
    }
}

fn strategy_for(g: &GroupDescriptor) -> Strategy {
    if g.is_abelian() {
        Strategy::Moments
    } else {
        Strategy::Direct
    }
}

/// Quadrature domain for kernels built from h_t, t in [a, b].
pub fn interval_spec(a: f64, b: f64) -> QuadratureSpec {
    let r_max = b + 9.0 * (2.0 * b).sqrt() + 2.0;
    QuadratureSpec::for_radius(r_max, (9.0 * (2.0 * b).sqrt() + 3.0).min(r_max), a.sqrt())
}

/// Source for int_a^b f(t) h_t dt. The profile route (N = R) is used below
/// t_min and, when `prefer_profile`, everywhere.
fn averaged_source<F: Fn(f64) -> f64 + Sync>(
    g: &GroupDescriptor,
    a: f64,
    b: f64,
    nodes: usize,
    f: F,
    prefer_profile: bool,
) -> Result<Source> {
    let q1 = g.kind == GroupKind::Abelian(1);
    if q1 && (prefer_profile || a < T_MIN) {
        Ok(Source::Profile(std::sync::Arc::new(Profile::time_average(a, b, nodes, f)?)))
    } else if a >= T_MIN {
        Ok(Source::Weights(std::sync::Arc::new(WeightSet::time_average(a, b, nodes, f, XiGrid::default())?)))
    } else {
        Err(Error::UnsupportedRegime(format!("t = {a} < {T_MIN} is only supported for N = R")))
    }
}

fn check_order(g: &GroupDescriptor, n: i32, order: Order) -> Result<()> {
    let idx = match order {
        Order::First { j } => vec![j],
        Order::Second { j, l } => vec![j, l],
    };
    if idx.iter().any(|&i| i > g.q) {
        return invalid(format!("derivative index above q = {}", g.q));
    }
    if let Order::Second { .. } = order {
        if n >= 0 {
            return invalid("second-order dyadic kernels are defined for n < 0");
        }
    }
    if !(-60..=20).contains(&n) {
        return invalid(format!("dyadic index {n} out of range"));
    }
    Ok(())
}

/// k_n over [2^n, 2^{n+1}] with `nodes` Gauss-Legendre nodes in t.
pub fn dyadic_kernel_with_nodes(g: &GroupDescriptor, n: i32, order: Order, nodes: usize) -> Result<DyadicKernel> {
    check_order(g, n, order)?;
    let a = 2f64.powi(n);
    let b = 2.0 * a;
    let source = match order {
        Order::First { .. } => averaged_source(g, a, b, nodes, |t| t.powf(-0.5), false)?,
        // three derivatives with two X_0 exceed the subordination route; the
        // profile handles every program on N = R
        Order::Second { .. } => averaged_source(g, a, b, nodes, |_| 1.0, true)?,
    };
    let k = Kernel::new(g, b, &source, &order.ops(), strategy_for(g))?;
    let mut field = k.field(interval_spec(a, b));
    field.label = format!("k_{n} {}", ops_label(&order.ops()));
    Ok(DyadicKernel { n, order, field, t_interval: (a, b), g: g.clone(), source })
}

/// k_n with the default 32 time nodes.
pub fn dyadic_kernel(g: &GroupDescriptor, n: i32, order: Order) -> Result<DyadicKernel> {
    dyadic_kernel_with_nodes(g, n, order, DYADIC_NODES)
}

impl DyadicKernel {
    /// X_i k_n^*, computed from the same time-averaged heat data.
    pub fn star_derivative(&self, i: usize) -> Result<Kernel> {
        let mut ops = vec![GOp::Deriv(i), GOp::Star];
        ops.extend(self.order.ops());
        Kernel::new(&self.g, self.t_interval.1, &self.source, &ops, strategy_for(&self.g))
    }

    /// k_n^* as a kernel.
    pub fn star(&self) -> Result<Kernel> {
        let mut ops = vec![GOp::Star];
        ops.extend(self.order.ops());
        Kernel::new(&self.g, self.t_interval.1, &self.source, &ops, strategy_for(&self.g))
    }

    /// |grad_H k_n^*| as a field on the kernel's domain.
    pub fn star_gradient_field(&self) -> Result<KernelField> {
        let ks = (0..=self.g.q).map(|i| self.star_derivative(i)).collect::<Result<Vec<_>>>()?;
        Ok(KernelField::new(
            format!("|grad_H ({})^*|", self.field.label),
            self.g.clone(),
            self.field.quadrature_spec,
            move |x| ks.iter().map(|k| k.value(x).powi(2)).sum::<f64>().sqrt(),
        ))
    }
}

/// Result of a Calderon-Zygmund check on one dyadic kernel.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CzCheck {
    pub label: String,
    pub n: i32,
    pub value: f64,
    /// Value divided by the bound's n-dependence (1 for size, 2^{-n/2} for smoothness).
    pub normalized: f64,
    pub est_abs_error: f64,
    pub trusted: bool,
    /// Set by [`cz_uniformity`].
    pub passed: bool,
}

/// int_G |k_n(x)| (1 + scale |x|) dmu(x).
pub fn cz_size_check(k: &DyadicKernel, scale: f64) -> Result<CzCheck> {
    if !(scale >= 0.0 && scale.is_finite()) {
        return invalid("scale must be nonnegative");
    }
    let g = k.g.clone();
    let r = integrate_g(&k.field, move |x| 1.0 + scale * g_distance(x, &g).unwrap_or(f64::NAN), false)?;
    Ok(CzCheck {
        label: format!("size {}", k.field.label),
        n: k.n,
        value: r.value,
        normalized: r.value,
        est_abs_error: r.est_abs_error,
        trusted: r.trusted,
        passed: r.trusted && r.value.is_finite(),
    })
}

/// int_G |grad_H k_n^*| dmu.
pub fn cz_smoothness_check(k: &DyadicKernel) -> Result<CzCheck> {
    let f = k.star_gradient_field()?;
    let r = integrate_g(&f, |_| 1.0, false)?;
    let c = 2f64.powf(-0.5 * k.n as f64);
    Ok(CzCheck {
        label: format!("smoothness {}", k.field.label),
        n: k.n,
        value: r.value,
        normalized: r.value / c,
        est_abs_error: r.est_abs_error,
        trusted: r.trusted,
        passed: r.trusted && r.value.is_finite(),
    })
}

/// Uniformity over a dyadic range: the bound B is the max of the normalized
/// values, and every check passes iff all are trusted and max / median < 2.
/// Returns (B, max / median, passed).
pub fn cz_uniformity(checks: &mut [CzCheck]) -> (f64, f64, bool) {
    if checks.is_empty() {
        return (f64::NAN, f64::NAN, false);
    }
    let mut v: Vec<f64> = checks.iter().map(|c| c.normalized).collect();
    v.sort_by(f64::total_cmp);
    let m = v.len();
    let med = if m % 2 == 1 { v[m / 2] } else { 0.5 * (v[m / 2 - 1] + v[m / 2]) };
    let b = v[m - 1];
    let ratio = b / med;
    let ok = checks.iter().all(|c| c.trusted && c.normalized.is_finite()) && ratio < 2.0;
    for c in checks.iter_mut() {
        c.passed = ok;
    }
    (b, ratio, ok)
}

/// ((X_j h_{t/2})^* * X_i h_{t/2})(x), which equals X_i (X_j h_t)^*(x).
pub fn convolution_of_halves(g: &GroupDescriptor, i: usize, j: usize, t: f64, x: &PointG) -> Result<GIntegral> {
    let s = 0.5 * t;
    let src = crate::heat_kernel::default_source(g, s)?;
    let spec = QuadratureSpec::for_time(s);
    let a = Kernel::new(g, s, &src, &[GOp::Star, GOp::Deriv(j)], strategy_for(g))?.field(spec);
    let b = Kernel::new(g, s, &src, &[GOp::Deriv(i)], strategy_for(g))?.field(spec);
    crate::na_group::convolve_at(&a, &b, x)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum TailCase {
    /// j, l >= 1
    I,
    /// j >= 1, l = 0
    II,
    /// j = 0, l >= 1
    III,
    /// j = l = 0
    IV,
}

/// k^(inf) = int_1^inf X_j (X_l h_t)^* dt with its named parts.
#[derive(Debug, Clone)]
pub struct TailKernel {
    pub j: usize,
    pub l: usize,
    pub case_tag: TailCase,
    pub field: KernelField,
    /// Sub-kernels whose sum is `field` (J2 enters with coefficient 2).
    pub parts: Vec<(String, f64, KernelField)>,
}

/// Quadrature domain for tail kernels: distance up to `r_max`, |u| up to
/// `r_max`.
pub fn tail_spec(r_max: f64) -> QuadratureSpec {
    QuadratureSpec::for_radius(r_max, r_max, 3.0)
}

pub const TAIL_RADIUS: f64 = 30.0;

fn tail_weights() -> Result<std::sync::Arc<WeightSet>> {
    static W: std::sync::OnceLock<std::sync::Arc<WeightSet>> = std::sync::OnceLock::new();
    if let Some(w) = W.get() {
        return Ok(w.clone());
    }
    let w = std::sync::Arc::new(WeightSet::tail(XiGrid::default())?);
    Ok(W.get_or_init(|| w).clone())
}

fn part_field(k: &Kernel, idx: usize, name: &str, spec: QuadratureSpec) -> KernelField {
    let kk = k.clone();
    KernelField::new(format!("{name} of {}", k.label), k.g.clone(), spec, move |x| kk.eval_parts(x).1[idx])
}

/// The tail kernel for (j, l). Cases I, II and IV come from the
/// time-integrated weights; case III is the involution of case II.
pub fn tail_kernel(g: &GroupDescriptor, j: usize, l: usize) -> Result<TailKernel> {
    tail_kernel_on(g, j, l, tail_spec(TAIL_RADIUS))
}

pub fn tail_kernel_on(g: &GroupDescriptor, j: usize, l: usize, spec: QuadratureSpec) -> Result<TailKernel> {
    if j > g.q || l > g.q {
        return invalid(format!("indices must lie in 0..={}", g.q));
    }
    let case_tag = match (j, l) {
        (0, 0) => TailCase::IV,
        (0, _) => TailCase::III,
        (_, 0) => TailCase::II,
        _ => TailCase::I,
    };
    if case_tag == TailCase::III {
        let base = tail_kernel_on(g, l, 0, spec)?;
        let parts = base.parts.iter().map(|(n, c, f)| (n.clone(), *c, involution(f))).collect();
        let mut field = involution(&base.field);
        field.label = format!("k_inf X0(X{l}h)^*");
        return Ok(TailKernel { j, l, case_tag, field, parts });
    }
    let src = Source::Weights(tail_weights()?);
    let k = Kernel::new(g, 1.0, &src, &[GOp::Deriv(j), GOp::Star, GOp::Deriv(l)], strategy_for(g))?;
    let mut field = k.field(spec);
    field.label = format!("k_inf {}", k.label);
    let parts = match case_tag {
        TailCase::I => vec![("k".to_string(), 1.0, part_field(&k, 0, "k", spec))],
        TailCase::II => vec![
            ("I1".to_string(), 1.0, part_field(&k, 0, "I1", spec)),
            ("I2".to_string(), 1.0, part_field(&k, 1, "I2", spec)),
        ],
        _ => {
            let j2 = part_field(&k, 1, "J2", spec).scaled(0.5);
            vec![
                ("J1".to_string(), 1.0, part_field(&k, 0, "J1", spec)),
                ("J2".to_string(), 2.0, j2),
                ("J3".to_string(), 1.0, part_field(&k, 2, "J3", spec)),
            ]
        }
    };
    Ok(TailKernel { j, l, case_tag, field, parts })
}

impl TailKernel {
    /// Same kernel on another quadrature domain.
    pub fn with_spec(&self, spec: QuadratureSpec) -> TailKernel {
        TailKernel {
            j: self.j,
            l: self.l,
            case_tag: self.case_tag,
            field: self.field.clone().with_spec(spec),
            parts: self.parts.iter().map(|(n, c, f)| (n.clone(), *c, f.clone().with_spec(spec))).collect(),
        }
    }

    pub fn eval_parts(&self, x: &PointG) -> Vec<Part> {
        self.parts.iter().map(|(n, _, f)| Part { name: n.clone(), value: f.eval(x) }).collect()
    }
}

/// int_G |k^(inf)| dmu and its error estimate (quadrature error plus the
/// mass on the outer panels, which bounds the truncated part only roughly).
pub fn tail_l1_norm(k: &TailKernel) -> Result<(f64, f64)> {
    let r = tail_l1(k)?;
    Ok((r.value, r.est_abs_error))
}

pub fn tail_l1(k: &TailKernel) -> Result<GIntegral> {
    integrate_g(&k.field, |_| 1.0, false)
}

/// Brute-force int_1^T X_j (X_l h_t)^*(x) dt by quadrature of the raw
/// t-integrand, plus the remainder int_T^inf from the large-time form
/// C t^{-3/2} + D t^{-5/2} fitted at T/2 and T.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TailQuadrature {
    pub partial: f64,
    pub remainder: f64,
    pub t_max: f64,
}

impl TailQuadrature {
    pub fn total(&self) -> f64 {
        self.partial + self.remainder
    }
}

pub const TAIL_T_MAX: f64 = 256.0;

pub fn tail_by_time_quadrature(g: &GroupDescriptor, j: usize, l: usize, x: &PointG, t_max: f64, nodes: usize) -> Result<TailQuadrature> {
    if !(t_max >= 4.0 && t_max.is_finite()) {
        return invalid("t_max must be at least 4");
    }
    let f = |t: f64| crate::heat_kernel::h_second_star(g, j, l, t, x).map(|e| e.value);
    let partial = crate::subordination::time_integral_tau(f, 1.0, t_max, nodes)?;
    let (a, b) = (0.5 * t_max, t_max);
    let (fa, fb) = (f(a)?, f(b)?);
    // f(t) = C t^{-3/2} + D t^{-5/2}
    let d = (fa * a.powf(1.5) - fb * b.powf(1.5)) / (1.0 / a - 1.0 / b);
    let c = fb * b.powf(1.5) - d / b;
    let remainder = 2.0 * c * t_max.powf(-0.5) + 2.0 / 3.0 * d * t_max.powf(-1.5);
    Ok(TailQuadrature { partial, remainder, t_max })
}

/// [`tail_by_time_quadrature`] starting from T = 256 and quadrupling T until
/// the remainder is below 1% of the partial integral (T at most 2^16).
pub fn tail_by_time_quadrature_auto(g: &GroupDescriptor, j: usize, l: usize, x: &PointG, nodes: usize) -> Result<TailQuadrature> {
    let mut t_max = TAIL_T_MAX;
    loop {
        let r = tail_by_time_quadrature(g, j, l, x, t_max, nodes)?;
        if r.remainder.abs() < 0.01 * r.partial.abs() || t_max >= 65536.0 {
            return Ok(r);
        }
        t_max *= 4.0;
    }
}
