//! The solvable extension G = N x R with (z,u)(z',u') = (z . e^{uD} z', u + u'),
//! right Haar measure dz du, modular function e^{-Qu}, and quadrature on G.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ad::{d3_coeff, d3_const, d3_seed, Scalar, D3};
use crate::error::{invalid, Error, Result};
use crate::quadrature::{composite, composite_breaks, GaussLegendre};
use crate::stratified_group::{
    dilate_exp_generic, mul_generic, n_norm, n_unit_ball_volume, GroupDescriptor, PointN,
};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointG {
    pub z: PointN,
    pub u: f64,
}

impl PointG {
    pub fn new(z: &[f64], u: f64) -> Result<Self> {
        if !u.is_finite() {
            return invalid("non-finite u");
        }
        Ok(PointG { z: PointN::new(z)?, u })
    }
    pub fn identity(g: &GroupDescriptor) -> Self {
        PointG { z: PointN::zero(g.dim()), u: 0.0 }
    }
    /// Q = 1 shorthand.
    pub fn q1(z: f64, u: f64) -> Self {
        PointG { z: PointN::new(&[z]).expect("finite"), u }
    }
}

impl Serialize for PointG {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        use serde::ser::SerializeStruct;
        let mut st = s.serialize_struct("PointG", 2)?;
        st.serialize_field("z", self.z.coords())?;
        st.serialize_field("u", &self.u)?;
        st.end()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum QuadMethod {
    TensorGauss,
    Adaptive,
    MonteCarlo { seed: u64, n_samples: usize },
}

/// Truncated domain and budget for integrals over G. The N-direction is
/// truncated in the rescaled variable v = delta_{e^{-u/2}} z, |v| <= n_radius.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadratureSpec {
    pub u_halfwidth: f64,
    pub n_radius: f64,
    pub nodes_per_dim: usize,
    pub rel_tol: f64,
    pub method: QuadMethod,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        QuadratureSpec {
            u_halfwidth: 40.0,
            n_radius: 1e8,
            nodes_per_dim: 640,
            rel_tol: 1e-4,
            method: QuadMethod::TensorGauss,
        }
    }
}

impl QuadratureSpec {
    /// Domain covering the bulk of a heat-type kernel at time t: distances up
    /// to t + 9 sqrt(2t) + 2 and |u| up to 9 sqrt(2t) + 3.
    pub fn for_time(t: f64) -> Self {
        let r_max = t + 9.0 * (2.0 * t).sqrt() + 2.0;
        Self::for_radius(r_max, (9.0 * (2.0 * t).sqrt() + 3.0).min(r_max), t.sqrt())
    }

    /// Domain of the distance ball of radius `r_max`, u-range `u_half`,
    /// with panels about `feature` wide (clamped to [0.02, 1]).
    pub fn for_radius(r_max: f64, u_half: f64, feature: f64) -> Self {
        let e = r_max.cosh().sqrt().asinh();
        let width = (feature / 3.0).clamp(0.02, 1.0);
        // even panel counts put a breakpoint on the symmetry axes
        let panels = (((2.0 * e.max(u_half)) / width / 2.0).ceil() as usize * 2).clamp(4, 160);
        QuadratureSpec {
            u_halfwidth: u_half,
            n_radius: std::f64::consts::SQRT_2 * e.sinh(),
            nodes_per_dim: 16 * panels,
            rel_tol: 1e-4,
            method: QuadMethod::TensorGauss,
        }
    }

    /// Doubles the truncations (in distance) keeping the node density.
    pub fn doubled_domain(&self) -> Self {
        let e = (self.n_radius / std::f64::consts::SQRT_2).asinh();
        let mut s = *self;
        s.u_halfwidth *= 2.0;
        s.n_radius = std::f64::consts::SQRT_2 * (2.0 * e).sinh();
        s.nodes_per_dim *= 2;
        s
    }

    pub fn refined(&self) -> Self {
        let mut s = *self;
        s.nodes_per_dim = (s.nodes_per_dim * 3 / 2).div_ceil(32) * 32;
        s
    }

    fn check(&self) -> Result<()> {
        if !(self.u_halfwidth > 0.0 && self.n_radius > 0.0) {
            return invalid("quadrature truncations must be positive");
        }
        if !(self.rel_tol > 0.0 && self.rel_tol < 1.0) {
            return invalid("rel_tol must lie in (0, 1)");
        }
        if self.nodes_per_dim < 2 {
            return invalid("nodes_per_dim too small");
        }
        Ok(())
    }
}

pub type FieldFn = Arc<dyn Fn(&PointG) -> f64 + Send + Sync>;

/// A scalar field on G with the budget used to integrate it.
#[derive(Clone)]
pub struct KernelField {
    pub evaluate: FieldFn,
    pub quadrature_spec: QuadratureSpec,
    pub descriptor: GroupDescriptor,
    pub label: String,
}

impl std::fmt::Debug for KernelField {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("KernelField")
            .field("label", &self.label)
            .field("quadrature_spec", &self.quadrature_spec)
            .field("descriptor", &self.descriptor)
            .finish()
    }
}

impl KernelField {
    pub fn new<F: Fn(&PointG) -> f64 + Send + Sync + 'static>(
        label: impl Into<String>,
        descriptor: GroupDescriptor,
        spec: QuadratureSpec,
        f: F,
    ) -> Self {
        KernelField { evaluate: Arc::new(f), quadrature_spec: spec, descriptor, label: label.into() }
    }

    pub fn eval(&self, x: &PointG) -> f64 {
        (self.evaluate)(x)
    }

    pub fn with_spec(mut self, spec: QuadratureSpec) -> Self {
        self.quadrature_spec = spec;
        self
    }

    pub fn scaled(&self, c: f64) -> Self {
        let f = self.evaluate.clone();
        KernelField::new(format!("{}*{c}", self.label), self.descriptor.clone(), self.quadrature_spec, move |x| {
            c * f(x)
        })
    }
}

fn same_dim(x: &PointG, y: &PointG) -> Result<()> {
    if x.z.dim() != y.z.dim() {
        return Err(Error::DimensionMismatch { expected: x.z.dim(), got: y.z.dim() });
    }
    Ok(())
}

pub fn g_multiply(x: &PointG, y: &PointG, g: &GroupDescriptor) -> Result<PointG> {
    same_dim(x, y)?;
    let d = g.dim();
    let mut zy = [0.0; 4];
    zy[..d].copy_from_slice(y.z.coords());
    dilate_exp_generic(&g.dilation_weights, x.u, &mut zy[..d]);
    let mut out = [0.0; 4];
    mul_generic(g.kind, x.z.coords(), &zy[..d], &mut out[..d]);
    PointG::new(&out[..d], x.u + y.u)
}

pub fn g_inverse(x: &PointG, g: &GroupDescriptor) -> PointG {
    let d = g.dim();
    let mut z = [0.0; 4];
    z[..d].copy_from_slice(x.z.coords());
    dilate_exp_generic(&g.dilation_weights, -x.u, &mut z[..d]);
    for v in z.iter_mut() {
        *v = -*v;
    }
    PointG { z: PointN::new(&z[..d]).expect("finite"), u: -x.u }
}

pub fn modular(x: &PointG, g: &GroupDescriptor) -> f64 {
    (-(g.big_q as f64) * x.u).exp()
}

/// cosh |x|_d = cosh u + e^{-u} |z|_N^2 / 2.
pub fn cosh_distance(x: &PointG, g: &GroupDescriptor) -> Result<f64> {
    let n = n_norm(&x.z, g)?;
    Ok(x.u.cosh() + 0.5 * (-x.u).exp() * n * n)
}

pub fn g_distance(x: &PointG, g: &GroupDescriptor) -> Result<f64> {
    let c = cosh_distance(x, g)?;
    acosh_clamped(c)
}

pub fn acosh_clamped(c: f64) -> Result<f64> {
    if c < 1.0 {
        if c > 1.0 - 1e-12 {
            return Ok(0.0);
        }
        return Err(Error::Quadrature(format!("arccosh argument {c} below 1")));
    }
    // acosh(1 + e) = ln(1 + e + sqrt(e (2 + e))) keeps accuracy near the identity
    let e = c - 1.0;
    Ok((e + (e * (2.0 + e)).sqrt()).ln_1p())
}

/// d(x, y) = |x^{-1} y|_d.
pub fn g_distance_between(x: &PointG, y: &PointG, g: &GroupDescriptor) -> Result<f64> {
    g_distance(&g_multiply(&g_inverse(x, g), y, g)?, g)
}

/// f^*(x) = m(x) f(x^{-1}).
pub fn involution(f: &KernelField) -> KernelField {
    let g = f.descriptor.clone();
    let inner = f.evaluate.clone();
    let gg = g.clone();
    KernelField::new(format!("({})^*", f.label), g, f.quadrature_spec, move |x| {
        modular(x, &gg) * inner(&g_inverse(x, &gg))
    })
}

/// Result of an integral over G.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GIntegral {
    pub value: f64,
    /// Share of the integral carried by the outermost panels.
    pub boundary_fraction: f64,
    pub est_abs_error: f64,
    pub trusted: bool,
    pub nodes: usize,
}

/// Node set for the tensor rule in (u, eta_1, ..., eta_d), with
/// v_i = kappa_i sinh(eta_i), z = delta_{e^{u/2}} v. Each node carries its
/// weight (Jacobian included) and whether it sits in a boundary panel.
struct TensorGrid {
    u: Vec<(f64, f64, bool)>,
    eta: Vec<(f64, f64, bool)>,
}

fn axis(rule: &GaussLegendre, half: f64, nodes: usize) -> Vec<(f64, f64, bool)> {
    let panels = (nodes / rule.len()).max(2);
    let pts = composite(rule, -half, half, panels);
    let per = rule.len();
    pts.into_iter()
        .enumerate()
        .map(|(i, (x, w))| (x, w, i < per || i >= (panels - 1) * per))
        .collect()
}

fn kappa(weight: u32) -> f64 {
    if weight == 1 {
        std::f64::consts::SQRT_2
    } else {
        2.0
    }
}

impl TensorGrid {
    fn new(spec: &QuadratureSpec, g: &GroupDescriptor) -> Self {
        let rule = GaussLegendre::new(16);
        // a common eta half-width; weight-2 coordinates use kappa = 2
        let e = (spec.n_radius / kappa(g.dilation_weights[0])).asinh();
        TensorGrid { u: axis(&rule, spec.u_halfwidth, spec.nodes_per_dim), eta: axis(&rule, e, spec.nodes_per_dim) }
    }
}

/// int_G weight(x) |f(x)| dmu (or the signed integral when `signed`).
pub fn integrate_g<W: Fn(&PointG) -> f64 + Sync>(
    f: &KernelField,
    weight: W,
    signed: bool,
) -> Result<GIntegral> {
    let spec = f.quadrature_spec;
    spec.check()?;
    let g = &f.descriptor;
    let d = g.dim();
    let qh = g.big_q as f64 / 2.0;
    let val = |x: &PointG| {
        let v = f.eval(x) * weight(x);
        if signed {
            v
        } else {
            v.abs()
        }
    };
    match spec.method {
        QuadMethod::TensorGauss | QuadMethod::Adaptive => {
            if d > 2 {
                return Err(Error::UnsupportedRegime(
                    "tensor quadrature on G is limited to dim N <= 2; use monte_carlo".into(),
                ));
            }
            let grid = TensorGrid::new(&spec, g);
            let ks: Vec<f64> = g.dilation_weights.iter().map(|&w| kappa(w)).collect();
            let rows: Vec<(f64, f64, f64)> = grid
                .u
                .par_iter()
                .map(|&(u, wu, bu)| {
                    let mut tot = 0.0;
                    let mut absum = 0.0;
                    let mut bnd = 0.0;
                    let scale = (qh * u).exp();
                    let mut z = [0.0; 4];
                    let mut visit = |etas: &[(f64, f64, bool)]| {
                        let mut w = wu * scale;
                        let mut edge = bu;
                        for (i, &(eta, we, be)) in etas.iter().enumerate() {
                            let dil = (0.5 * g.dilation_weights[i] as f64 * u).exp();
                            z[i] = dil * ks[i] * eta.sinh();
                            w *= we * ks[i] * eta.cosh();
                            edge |= be;
                        }
                        let x = PointG { z: PointN::new(&z[..d]).expect("finite"), u };
                        let v = val(&x) * w;
                        if v.is_finite() {
                            tot += v;
                            absum += v.abs();
                            if edge {
                                bnd += v.abs();
                            }
                        }
                    };
                    if d == 1 {
                        for e in &grid.eta {
                            visit(std::slice::from_ref(e));
                        }
                    } else {
                        for e1 in &grid.eta {
                            for e2 in &grid.eta {
                                visit(&[*e1, *e2]);
                            }
                        }
                    }
                    (tot, absum, bnd)
                })
                .collect();
            let (mut tot, mut absum, mut bnd) = (0.0, 0.0, 0.0);
            for (a, b, c) in rows {
                tot += a;
                absum += b;
                bnd += c;
            }
            let frac = if absum > 0.0 { bnd / absum } else { 0.0 };
            Ok(GIntegral {
                value: tot,
                boundary_fraction: frac,
                est_abs_error: bnd + 1e-12 * absum,
                trusted: frac < spec.rel_tol,
                nodes: grid.u.len() * grid.eta.len().pow(d as u32),
            })
        }
        QuadMethod::MonteCarlo { seed, n_samples } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let e = (spec.n_radius / kappa(g.dilation_weights[0])).asinh();
            let uh = spec.u_halfwidth;
            let vol = 2.0 * uh * (2.0 * e).powi(d as i32);
            let mut s1 = 0.0;
            let mut s2 = 0.0;
            let mut bnd = 0.0;
            let mut z = [0.0; 4];
            for _ in 0..n_samples {
                let u: f64 = rng.gen_range(-uh..uh);
                let mut w = vol * (qh * u).exp();
                let mut edge = u.abs() > 0.95 * uh;
                for (i, zi) in z.iter_mut().enumerate().take(d) {
                    let eta: f64 = rng.gen_range(-e..e);
                    let k = kappa(g.dilation_weights[i]);
                    *zi = (0.5 * g.dilation_weights[i] as f64 * u).exp() * k * eta.sinh();
                    w *= k * eta.cosh();
                    edge |= eta.abs() > 0.95 * e;
                }
                let x = PointG { z: PointN::new(&z[..d]).expect("finite"), u };
                let v = val(&x) * w;
                if v.is_finite() {
                    s1 += v;
                    s2 += v * v;
                    if edge {
                        bnd += v.abs();
                    }
                }
            }
            let n = n_samples.max(1) as f64;
            let mean = s1 / n;
            let sd = ((s2 / n - mean * mean).max(0.0) / n).sqrt();
            let frac = if s1.abs() > 0.0 { bnd / s1.abs().max(1e-300) } else { 0.0 };
            Ok(GIntegral {
                value: mean,
                boundary_fraction: frac,
                est_abs_error: 3.0 * sd,
                trusted: frac < spec.rel_tol.max(1e-2),
                nodes: n_samples,
            })
        }
    }
}

/// int_G |f| dmu.
pub fn l1_norm(f: &KernelField) -> Result<GIntegral> {
    integrate_g(f, |_| 1.0, false)
}

/// f * g(x) = int_G f(x y^{-1}) g(y) dmu(y), on the domain of `g`.
pub fn convolve_at(f: &KernelField, g: &KernelField, x: &PointG) -> Result<GIntegral> {
    let desc = f.descriptor.clone();
    let ff = f.evaluate.clone();
    let xx = *x;
    let d2 = desc.clone();
    let shifted = KernelField::new("conv", desc, g.quadrature_spec, move |y| {
        match g_multiply(&xx, &g_inverse(y, &d2), &d2) {
            Ok(p) => ff(&p),
            Err(_) => f64::NAN,
        }
    });
    let gg = g.evaluate.clone();
    integrate_g(&shifted, move |y| gg(y), true)
}

/// x . exp(eps X_j): j = 0 moves u, j >= 1 moves along X_j^N dilated by e^u.
pub fn flow(x: &PointG, j: usize, eps: f64, g: &GroupDescriptor) -> PointG {
    let mut e = [0.0; 4];
    let mut du = 0.0;
    if j == 0 {
        du = eps;
    } else {
        e[j - 1] = eps;
    }
    let y = PointG { z: PointN::new(&e[..g.dim()]).expect("finite"), u: du };
    g_multiply(x, &y, g).expect("dimensions match")
}

/// Central difference of f along the flow of X_j.
pub fn fd_derivative<F: Fn(&PointG) -> f64>(f: F, x: &PointG, j: usize, eps: f64, g: &GroupDescriptor) -> f64 {
    (f(&flow(x, j, eps, g)) - f(&flow(x, j, -eps, g))) / (2.0 * eps)
}

/// |grad_H f|(x) = sqrt(sum_j |X_j f(x)|^2), from supplied derivative
/// fields or by central differences with step 1e-5.
pub fn horizontal_gradient_norm(f: &KernelField, x: &PointG, derivatives: Option<&[KernelField]>) -> Result<f64> {
    let g = &f.descriptor;
    let mut s = 0.0;
    match derivatives {
        Some(ds) => {
            if ds.len() != g.q + 1 {
                return invalid(format!("expected {} derivative fields", g.q + 1));
            }
            for d in ds {
                let v = d.eval(x);
                s += v * v;
            }
        }
        None => {
            for j in 0..=g.q {
                let v = fd_derivative(|p| f.eval(p), x, j, 1e-5, g);
                s += v * v;
            }
        }
    }
    Ok(s.sqrt())
}

/// Operation in a derivative program on G, outermost first.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GOp {
    /// Left-invariant X_j, j = 0 for d/du.
    Deriv(usize),
    Star,
}

/// Evaluates a composition of left-invariant derivatives and involutions on
/// G applied to `base(z, u)`, exactly, by nested dual numbers (at most three
/// derivatives).
pub fn eval_g_program<F: Fn(&[D3], D3) -> D3>(g: &GroupDescriptor, ops: &[GOp], x: &PointG, base: F) -> f64 {
    let d = g.dim();
    let qf = g.big_q as f64;
    let mut z: Vec<D3> = x.z.coords().iter().map(|&c| d3_const(c)).collect();
    let mut u = d3_const(x.u);
    let mut factor = d3_const(1.0);
    let mut level = 0;
    let mut tmp = z.clone();
    for op in ops {
        match *op {
            GOp::Deriv(0) => {
                u = u + d3_seed(0.0, level);
                level += 1;
            }
            GOp::Deriv(j) => {
                let mut e = vec![d3_const(0.0); d];
                e[j - 1] = d3_seed(0.0, level);
                level += 1;
                dilate_exp_generic(&g.dilation_weights, u, &mut e);
                mul_generic(g.kind, &z, &e, &mut tmp);
                z.copy_from_slice(&tmp);
            }
            GOp::Star => {
                factor = factor * (u * (-qf)).exp();
                dilate_exp_generic(&g.dilation_weights, -u, &mut z);
                for v in z.iter_mut() {
                    *v = -*v;
                }
                u = -u;
            }
        }
    }
    d3_coeff(&(factor * base(&z, u)), level)
}

/// Radial integration: C_N int_0^R profile(r) sinh^Q r dr.
pub fn radial_integral<F: Fn(f64) -> f64>(profile: F, r_max: f64, g: &GroupDescriptor) -> Result<f64> {
    let c = estimate_cn(g)?;
    Ok(c * radial_part(&profile, r_max, g.big_q))
}

fn radial_part<F: Fn(f64) -> f64>(profile: &F, r_max: f64, q: usize) -> f64 {
    let rule = GaussLegendre::new(20);
    let panels = (r_max / 0.25).ceil().max(1.0) as usize;
    composite(&rule, 0.0, r_max, panels)
        .into_iter()
        .map(|(r, w)| w * profile(r) * r.sinh().powi(q as i32))
        .sum()
}

/// C_N from a direct quadrature of int_G e^{-|x|^2} dmu against its radial form.
pub fn estimate_cn(g: &GroupDescriptor) -> Result<f64> {
    let (direct, radial) = cn_ratio_parts(g, |r| (-r * r).exp())?;
    Ok(direct / radial)
}

/// (direct int_G f(|x|_d) dmu, int_0^inf f(r) sinh^Q r dr).
pub fn cn_ratio_parts<F: Fn(f64) -> f64 + Send + Sync + Clone + 'static>(
    g: &GroupDescriptor,
    profile: F,
) -> Result<(f64, f64)> {
    let r_max = 12.0;
    if g.dim() > 1 {
        return Ok((homogeneous_direct(g, &profile, r_max), radial_part(&profile, r_max, g.big_q)));
    }
    let mut spec = QuadratureSpec::for_radius(r_max, r_max, 0.5);
    spec.nodes_per_dim = 16 * 80;
    let gg = g.clone();
    let p2 = profile.clone();
    let field = KernelField::new("radial", g.clone(), spec, move |x| {
        let c = cosh_distance(x, &gg).unwrap_or(f64::INFINITY);
        p2(acosh_clamped(c).unwrap_or(0.0))
    });
    let direct = integrate_g(&field, |_| 1.0, true)?.value;
    Ok((direct, radial_part(&profile, r_max, g.big_q)))
}

/// int_G f(|x|_d) dmu through the homogeneity of |.|_N: the set
/// {|z|_N < rho} has volume V rho^Q, and z = e^{u/2} s leaves
/// Q V int e^{Qu/2} int s^{Q-1} f(acosh(cosh u + s^2/2)) ds du.
fn homogeneous_direct<F: Fn(f64) -> f64>(g: &GroupDescriptor, f: &F, r_max: f64) -> f64 {
    let rule = GaussLegendre::new(20);
    let q = g.big_q as f64;
    let mut total = 0.0;
    for (u, wu) in composite(&rule, -r_max, r_max, (2.0 * r_max / 0.25) as usize) {
        let s_max = (2.0 * (r_max.cosh() - u.cosh())).max(0.0).sqrt();
        let mut br = vec![0.0];
        let mut b = 0.25;
        while b < s_max {
            br.push(b);
            b *= 1.5;
        }
        br.push(s_max);
        let inner: f64 = composite_breaks(&rule, &br)
            .into_iter()
            .map(|(s, ws)| ws * s.powf(q - 1.0) * f(acosh_clamped(u.cosh() + 0.5 * s * s).unwrap_or(0.0)))
            .sum();
        total += wu * (0.5 * q * u).exp() * inner;
    }
    q * n_unit_ball_volume(g) * total
}

/// mu(B_R) by direct quadrature of the sublevel set, exact in eta:
/// for Q = 1 the ball is |u| <= R, sinh^2 eta <= cosh R - cosh u.
pub fn ball_volume_q1(r: f64) -> f64 {
    let rule = GaussLegendre::new(20);
    let panels = 64;
    let mut acc = 0.0;
    for (u, w) in composite(&rule, -r, r, panels) {
        // int_{|eta| <= E} sqrt2 e^{u/2} cosh eta d eta = 2 sqrt2 e^{u/2} sinh E
        let s = (r.cosh() - u.cosh()).max(0.0).sqrt();
        acc += w * 2.0 * std::f64::consts::SQRT_2 * (0.5 * u).exp() * s;
    }
    acc
}

/// Hyperbolic upper half-plane distance from (0, 1) to (z, e^u).
pub fn poincare_distance(z: f64, u: f64) -> f64 {
    let y = u.exp();
    let arg = 1.0 + (z * z + (y - 1.0) * (y - 1.0)) / (2.0 * y);
    acosh_clamped(arg).unwrap_or(0.0)
}

/// Uniform random point in a box, for property tests.
pub fn random_point<R: Rng>(rng: &mut R, g: &GroupDescriptor, zmax: f64, umax: f64) -> PointG {
    let mut z = [0.0; 4];
    for v in z.iter_mut().take(g.dim()) {
        *v = rng.gen_range(-zmax..zmax);
    }
    PointG { z: PointN::new(&z[..g.dim()]).expect("finite"), u: rng.gen_range(-umax..umax) }
}

/// Right-invariance check helper: int f(x y) dmu(y) with f given.
pub fn right_translate(f: &KernelField, y: &PointG) -> KernelField {
    let g = f.descriptor.clone();
    let inner = f.evaluate.clone();
    let yy = *y;
    let gg = g.clone();
    KernelField::new(format!("R_y {}", f.label), g, f.quadrature_spec, move |x| {
        g_multiply(x, &yy, &gg).map(|p| inner(&p)).unwrap_or(f64::NAN)
    })
}

/// Left translation x -> f(y x).
pub fn left_translate(f: &KernelField, y: &PointG) -> KernelField {
    let g = f.descriptor.clone();
    let inner = f.evaluate.clone();
    let yy = *y;
    let gg = g.clone();
    KernelField::new(format!("L_y {}", f.label), g, f.quadrature_spec, move |x| {
        g_multiply(&yy, x, &gg).map(|p| inner(&p)).unwrap_or(f64::NAN)
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn program_derivative_of_u() {
        let g = GroupDescriptor::abelian(1).unwrap();
        let x = PointG::q1(0.3, 0.7);
        // f = u: X_0 f = 1, X_1 f = 0
        let v = eval_g_program(&g, &[GOp::Deriv(0)], &x, |_, u| u);
        assert!((v - 1.0).abs() < 1e-15);
        let v = eval_g_program(&g, &[GOp::Deriv(1)], &x, |_, u| u);
        assert!(v.abs() < 1e-15);
        // f = z: X_1 f = e^u
        let v = eval_g_program(&g, &[GOp::Deriv(1)], &x, |z, _| z[0]);
        assert!((v - 0.7f64.exp()).abs() < 1e-14);
    }
}
