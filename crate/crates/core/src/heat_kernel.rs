//! The heat kernel h_t of the sub-Laplacian on G and its derivatives.
//!
//! Two independent evaluation routes:
//!
//! * subordination: h_t(z,u) = int Psi_t(xi) e^{-cosh u/xi} h^N_{e^u xi/2}(z) dxi,
//!   for t >= T_MIN and any N. Derivative programs are rewritten into sums of
//!   terms int W(xi) xi^{-p} a(u) e^{-cosh u/xi} (A h^N_{e^u xi/2})(z) dxi with
//!   W in {Psi, g, g2} and A a program of N-derivatives and involutions.
//! * profile (N = R only): h_t(z,u) = e^{-u/2} P_t(cosh |(z,u)|_d), with P_t
//!   from the hyperbolic plane heat kernel, for every t > 0. Derivatives are
//!   exact by nested dual numbers.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, Mutex, OnceLock};

use serde::Serialize;

use crate::ad::{Jet, Scalar, D3};
use crate::error::{invalid, Error, Result};
use crate::na_group::{acosh_clamped, eval_g_program, GOp, KernelField, PointG, QuadratureSpec};
use crate::quadrature::{composite_breaks, GaussLegendre};
use crate::stratified_group::{eval_n_program, gaveau, hermite_coeffs, GroupDescriptor, GroupKind, NOp};
use crate::subordination::{WeightKind, WeightSet, WeightTable, XiGrid, T_MIN};

/// Named part of a decomposed value.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Part {
    pub name: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HeatEval {
    pub t: f64,
    pub x: PointG,
    pub value: f64,
    pub decomposition: Option<Vec<Part>>,
    pub est_abs_error: f64,
}

/// One term int W(xi) xi^{-p} a(u) e^{-cosh u/xi} (A h^N_{e^u xi/2})(z) dxi,
/// with a(u) = sum c e^{m u} and A a program (outermost first).
#[derive(Debug, Clone, PartialEq)]
pub struct Term {
    pub w: WeightKind,
    pub p: i32,
    pub a: Vec<(f64, f64)>,
    pub prog: Vec<NOp>,
}

fn next_weight(w: WeightKind) -> Result<WeightKind> {
    match w {
        WeightKind::Psi => Ok(WeightKind::G),
        WeightKind::G => Ok(WeightKind::G2),
        WeightKind::G2 => Err(Error::UnsupportedRegime("more than two X_0 derivatives".into())),
    }
}

fn n_order(prog: &[NOp]) -> usize {
    prog.iter().filter(|o| matches!(o, NOp::Deriv(_))).count()
}

fn push_term(out: &mut Vec<Term>, t: Term) {
    if let Some(o) = out.iter_mut().find(|o| o.w == t.w && o.p == t.p && o.prog == t.prog) {
        for (c, m) in t.a {
            match o.a.iter_mut().find(|(_, mm)| *mm == m) {
                Some(e) => e.0 += c,
                None => o.a.push((c, m)),
            }
        }
    } else {
        out.push(t);
    }
}

fn tidy(terms: Vec<Term>) -> Vec<Term> {
    let mut out = Vec::new();
    for mut t in terms {
        t.a.retain(|(c, _)| *c != 0.0);
        t.a.sort_by(|x, y| x.1.total_cmp(&y.1));
        if !t.a.is_empty() {
            out.push(t);
        }
    }
    out
}

/// Rewrites a G-program applied to h_t into subordination terms.
///
/// With `ibp` the u-derivative of h^N_{e^u xi/2} is moved onto the weight by
/// integration by parts in xi (weights g, g2 appear); without it, it is
/// replaced by s d/ds h^N_s = s sum_i X_i^2 h^N_s (abelian N only).
pub fn compile(ops: &[GOp], g: &GroupDescriptor, ibp: bool) -> Result<Vec<Term>> {
    let mut terms = vec![Term { w: WeightKind::Psi, p: 0, a: vec![(1.0, 0.0)], prog: vec![] }];
    for op in ops.iter().rev() {
        let mut next = Vec::new();
        for t in terms {
            match *op {
                GOp::Deriv(0) => {
                    // d/du of the a(u) factor, with p a(u) folded in when integrating by parts
                    let da: Vec<(f64, f64)> = t
                        .a
                        .iter()
                        .map(|&(c, m)| (c * (m + if ibp { t.p as f64 } else { 0.0 }), m))
                        .collect();
                    push_term(&mut next, Term { a: da, ..t.clone() });
                    if ibp {
                        let ea = t.a.iter().map(|&(c, m)| (-c, m + 1.0)).collect();
                        push_term(&mut next, Term { p: t.p + 1, a: ea, ..t.clone() });
                        let na = t.a.iter().map(|&(c, m)| (-c, m)).collect();
                        push_term(&mut next, Term { w: next_weight(t.w)?, a: na, ..t.clone() });
                    } else {
                        if !g.is_abelian() {
                            return invalid("non-integrated-by-parts form needs abelian N");
                        }
                        // -sinh u / xi
                        let sa = t.a.iter().flat_map(|&(c, m)| [(-0.5 * c, m + 1.0), (0.5 * c, m - 1.0)]).collect();
                        push_term(&mut next, Term { p: t.p + 1, a: sa, ..t.clone() });
                        // s d/ds with s = e^u xi / 2
                        for i in 1..=g.q {
                            let la = t.a.iter().map(|&(c, m)| (0.5 * c, m + 1.0)).collect();
                            let mut prog = t.prog.clone();
                            prog.push(NOp::Deriv(i));
                            prog.push(NOp::Deriv(i));
                            push_term(&mut next, Term { w: t.w, p: t.p - 1, a: la, prog });
                        }
                    }
                }
                GOp::Deriv(j) => {
                    if j > g.q {
                        return invalid(format!("derivative index {j} above q = {}", g.q));
                    }
                    let a = t.a.iter().map(|&(c, m)| (c, m + 1.0)).collect();
                    let mut prog = vec![NOp::Deriv(j)];
                    prog.extend_from_slice(&t.prog);
                    push_term(&mut next, Term { a, prog, ..t });
                }
                GOp::Star => {
                    let k = n_order(&t.prog) as f64;
                    let a = t.a.iter().map(|&(c, m)| (c, -m + k)).collect();
                    let mut prog = vec![NOp::Star];
                    prog.extend_from_slice(&t.prog);
                    push_term(&mut next, Term { a, prog, ..t });
                }
            }
        }
        terms = tidy(next);
    }
    Ok(terms)
}

/// Abelian N: a program reduces to sign * d^k h^N_s(z).
fn abelian_reduce(prog: &[NOp], q: usize) -> (f64, Vec<usize>) {
    let mut sigma = 1.0;
    let mut tau = 1.0;
    let mut k = vec![0; q];
    for op in prog.iter().rev() {
        match *op {
            NOp::Deriv(j) => {
                sigma *= tau;
                k[j - 1] += 1;
            }
            NOp::Star => tau = -tau,
        }
    }
    let total: usize = k.iter().sum();
    if tau < 0.0 && total % 2 == 1 {
        sigma = -sigma;
    }
    (sigma, k)
}

/// (A h^N_s)(z) times e^{-extra}, the extra exponent folded in before exponentiating.
fn n_program_value(g: &GroupDescriptor, prog: &[NOp], s: f64, z: &[f64], extra: f64) -> Result<f64> {
    match g.kind {
        GroupKind::Abelian(q) => {
            let (sigma, k) = abelian_reduce(prog, q);
            let sc = (2.0 * s).sqrt();
            let mut v = sigma * (4.0 * PI * s).powf(-(q as f64) / 2.0);
            let mut r2 = 0.0;
            for i in 0..q {
                r2 += z[i] * z[i];
                if k[i] > 0 {
                    let x = z[i] / sc;
                    let hk: f64 = hermite_coeffs(k[i]).iter().rev().fold(0.0, |acc, &c| acc * x + c);
                    v *= (-1.0 / sc).powi(k[i] as i32) * hk;
                }
            }
            Ok(v * (-r2 / (4.0 * s) - extra).exp())
        }
        GroupKind::Heisenberg1 => {
            if n_order(prog) > 3 {
                return Err(Error::UnsupportedRegime("Heisenberg derivatives above order 3".into()));
            }
            let v = eval_n_program(g, prog, z, |c| gaveau(s, c[0], c[1], c[2]));
            Ok(v * (-extra).exp())
        }
    }
}

/// Moments M[W, b](c) = int W(xi) xi^{-b} e^{-c/xi} dxi, tabulated in l = ln c
/// with cubic Hermite interpolation.
#[derive(Debug, Clone)]
struct MomentTable {
    val: Vec<f64>,
    slope: Vec<f64>,
    err: Vec<f64>,
}

const L_STEP: f64 = 1.0 / 64.0;

/// Monomial coef * e^{mu u} * prod v_i^{pow_i} * M[w, b2/2](c), v = e^{-u/2} z.
#[derive(Debug, Clone, PartialEq)]
struct Mono {
    coef: f64,
    mu: f64,
    pow: [u8; 4],
    w: WeightKind,
    b2: i32,
    part: usize,
    idx: usize,
}

struct Moments {
    monos: Vec<Mono>,
    tables: Vec<MomentTable>,
    l_max: f64,
}

fn part_index(w: WeightKind) -> usize {
    match w {
        WeightKind::Psi => 0,
        WeightKind::G => 1,
        WeightKind::G2 => 2,
    }
}

impl Moments {
    fn new(terms: &[Term], q: usize, weights: &WeightSet) -> Self {
        let mut monos: Vec<Mono> = Vec::new();
        let norm = (2.0 * PI).powf(-(q as f64) / 2.0);
        for t in terms {
            let (sigma, k) = abelian_reduce(&t.prog, q);
            let ktot: usize = k.iter().sum();
            // expand prod_i (-1)^{k_i} He_{k_i}(v_i xi^{-1/2})
            let mut partial: Vec<(f64, [u8; 4], usize)> = vec![(1.0, [0; 4], 0)];
            for i in 0..q {
                let hc = hermite_coeffs(k[i]);
                let sgn = if k[i] % 2 == 1 { -1.0 } else { 1.0 };
                let mut np = Vec::new();
                for (c, pw, jt) in &partial {
                    for (j, &a) in hc.iter().enumerate() {
                        if a != 0.0 {
                            let mut p2 = *pw;
                            p2[i] = j as u8;
                            np.push((c * a * sgn, p2, jt + j));
                        }
                    }
                }
                partial = np;
            }
            for &(cm, m) in &t.a {
                for (c, pw, jt) in &partial {
                    let mono = Mono {
                        coef: sigma * norm * cm * c,
                        mu: m - (q + ktot) as f64 / 2.0,
                        pow: *pw,
                        w: t.w,
                        b2: 2 * t.p + q as i32 + (ktot + jt) as i32,
                        part: part_index(t.w),
                        idx: 0,
                    };
                    match monos.iter_mut().find(|o| {
                        o.mu == mono.mu && o.pow == mono.pow && o.w == mono.w && o.b2 == mono.b2
                    }) {
                        Some(o) => o.coef += mono.coef,
                        None => monos.push(mono),
                    }
                }
            }
        }
        monos.retain(|m| m.coef != 0.0);
        let mut keys: Vec<(WeightKind, i32)> = monos.iter().map(|m| (m.w, m.b2)).collect();
        keys.sort_by_key(|&(w, b)| (part_index(w), b));
        keys.dedup();
        for m in monos.iter_mut() {
            m.idx = keys.iter().position(|&k| k == (m.w, m.b2)).expect("key");
        }
        let l_max = weights.s_end() + 745f64.ln() + 0.5;
        let tables = build_moment_tables(&keys, weights, l_max);
        Moments { monos, tables, l_max }
    }

    /// (value, parts by weight, error estimate).
    fn eval(&self, z: &[f64], u: f64) -> (f64, [f64; 3], f64) {
        let v: Vec<f64> = z.iter().map(|&zi| (-0.5 * u).exp() * zi).collect();
        let r2: f64 = v.iter().map(|x| x * x).sum();
        let c = u.cosh() + 0.5 * r2;
        let l = c.ln().max(0.0);
        if l >= self.l_max {
            return (0.0, [0.0; 3], 0.0);
        }
        let pos = l / L_STEP;
        let i = (pos.floor() as usize).min(self.tables[0].val.len() - 2);
        let s = pos - i as f64;
        let h00 = (1.0 + 2.0 * s) * (1.0 - s) * (1.0 - s);
        let h10 = s * (1.0 - s) * (1.0 - s);
        let h01 = s * s * (3.0 - 2.0 * s);
        let h11 = -s * s * (1.0 - s);
        let interp: Vec<(f64, f64)> = self
            .tables
            .iter()
            .map(|t| {
                let m = h00 * t.val[i] + h01 * t.val[i + 1] + L_STEP * (h10 * t.slope[i] + h11 * t.slope[i + 1]);
                let e = (1.0 - s) * t.err[i] + s * t.err[i + 1];
                (m, e)
            })
            .collect();
        let mut parts = [0.0; 3];
        let mut err = 0.0;
        let mut mag = 0.0;
        for mono in &self.monos {
            let mut f = mono.coef * (mono.mu * u).exp();
            for (vi, &pw) in v.iter().zip(mono.pow.iter()) {
                if pw > 0 {
                    f *= vi.powi(pw as i32);
                }
            }
            let (m, e) = interp[mono.idx];
            parts[mono.part] += f * m;
            err += (f * e).abs();
            mag += (f * m).abs();
        }
        let value = parts.iter().sum();
        (value, parts, err + 1e-9 * mag)
    }
}

fn build_moment_tables(keys: &[(WeightKind, i32)], weights: &WeightSet, l_max: f64) -> Vec<MomentTable> {
    let n = (l_max / L_STEP).ceil() as usize + 2;
    let mut tables: Vec<MomentTable> = keys
        .iter()
        .map(|_| MomentTable { val: vec![0.0; n], slope: vec![0.0; n], err: vec![0.0; n] })
        .collect();
    let pows: Vec<(Vec<f64>, &WeightTable)> = keys
        .iter()
        .map(|&(w, b2)| {
            let tb = weights.table(w);
            let p = (0..tb.len()).map(|k| (-(b2 as f64) / 2.0 * tb.xi(k).ln()).exp()).collect();
            (p, tb)
        })
        .collect();
    let len = weights.psi.len().max(weights.g.len()).max(weights.g2.len());
    let xis: Vec<f64> = (0..len).map(|k| weights.psi.xi(k)).collect();
    for i in 0..n {
        let c = (i as f64 * L_STEP).exp();
        for (k, &xi) in xis.iter().enumerate() {
            let a = c / xi;
            if a > 745.0 {
                continue;
            }
            let e = (-a).exp();
            for (ti, (p, tb)) in pows.iter().enumerate() {
                if k >= tb.len() {
                    continue;
                }
                let base = p[k] * e;
                let tab = &mut tables[ti];
                tab.val[i] += tb.jac[k] * base;
                tab.slope[i] -= a * tb.jac[k] * base;
                tab.err[i] += tb.err[k] * base;
            }
        }
    }
    tables
}

/// The hyperbolic-plane profile P with h_t = e^{-u/2} P_t(c), c = cosh |x|_d,
/// and its c-derivatives, tabulated in r = arccosh c.
#[derive(Debug, Clone)]
pub struct Profile {
    pub r_step: f64,
    pub r_max: f64,
    /// P^{(k)}(cosh r_i), k = 0..4.
    pub d: Vec<[f64; 5]>,
}

/// F(sigma) = (s / sinh s) e^{-s^2/4t}, s = arccosh sigma, as a 5-jet in sigma.
fn f_jet(sigma: f64, t: f64) -> Jet<5> {
    let y0 = sigma - 1.0;
    let q = if y0 < 0.5 {
        // s^2 = 4 asinh(sqrt(y/2))^2 as a power series in y
        static COEF: OnceLock<Vec<f64>> = OnceLock::new();
        let a = COEF.get_or_init(|| {
            let mut v = vec![0.0, 2.0];
            for n in 1..44 {
                let nf = n as f64;
                let last = v[n];
                v.push(-last * 2.0 * nf * nf / ((2.0 * nf + 1.0) * (2.0 * nf + 2.0)));
            }
            v
        });
        Jet::<5>::var(y0).poly(a)
    } else {
        let x = Jet::<5>::var(sigma);
        let ds = (x * x + (-1.0)).sqrt().recip();
        let s = ds.integrate(sigma.acosh());
        s * s
    };
    // sinh s / s = sum q^n / (2n+1)!
    let shs = if q.c[0] < 4.0 {
        static SC: OnceLock<Vec<f64>> = OnceLock::new();
        let a = SC.get_or_init(|| {
            let mut v = vec![1.0];
            for n in 1..30 {
                let last = v[n - 1];
                v.push(last / ((2 * n) as f64 * (2 * n + 1) as f64));
            }
            v
        });
        q.poly(a)
    } else {
        let x = Jet::<5>::var(sigma);
        let s = (x * x + (-1.0)).sqrt().recip().integrate(sigma.acosh());
        // sinh s = sqrt(sigma^2 - 1)
        (x * x + (-1.0)).sqrt() / s
    };
    shs.recip() * q.scale(-1.0 / (4.0 * t)).exp()
}

impl Profile {
    fn r_max_for(t: f64) -> f64 {
        t + (t * t + 180.0 * t).sqrt() + 0.5
    }

    fn derivs_at(t: f64, c: f64, rule: &GaussLegendre) -> [f64; 5] {
        let r = c.acosh();
        let s_top = (r * r + 180.0 * t).sqrt();
        let w_max = (s_top.cosh() - c).max(1e-300).sqrt();
        let k = 2.0 * std::f64::consts::SQRT_2 * (4.0 * PI * t).powf(-1.5);
        // Gaussian scale in w near w = 0, then geometric panels for the heavy tail
        let w0 = if r > 1e-8 { (2.0 * t * r.sinh() / r).sqrt() } else { (2.0 * t).sqrt() };
        let mut breaks = vec![0.0];
        let mut b = 0.25 * w0;
        while b < w_max {
            breaks.push(b);
            b *= 2.0;
        }
        breaks.push(w_max);
        let mut out = [0.0; 5];
        for (w, wt) in composite_breaks(rule, &breaks) {
            let d = f_jet(c + w * w, t).derivatives();
            for i in 0..5 {
                out[i] += k * wt * d[i];
            }
        }
        out
    }

    fn grid(t_small: f64, t_large: f64) -> (f64, usize) {
        let r_max = Self::r_max_for(t_large);
        let step = (t_small.sqrt() / 64.0).min(1.0 / 64.0);
        (step, (r_max / step).ceil() as usize + 2)
    }

    pub fn at_time(t: f64) -> Result<Self> {
        Self::time_average(t, t, 1, |_| 1.0)
    }

    /// int_a^b f(t) P_t dt by Gauss-Legendre with `nodes` nodes (a single
    /// evaluation at t = a when a = b).
    pub fn time_average<F: Fn(f64) -> f64 + Sync>(a: f64, b: f64, nodes: usize, f: F) -> Result<Self> {
        if !(a > 0.0 && b >= a && b.is_finite()) {
            return invalid("profile times must satisfy 0 < a <= b");
        }
        let (step, n) = Self::grid(a, b);
        let rule = GaussLegendre::new(20);
        let times: Vec<(f64, f64)> =
            if a == b { vec![(a, 1.0)] } else { GaussLegendre::new(nodes).on(a, b).collect() };
        use rayon::prelude::*;
        let d: Vec<[f64; 5]> = (0..n)
            .into_par_iter()
            .map(|i| {
                let c = (i as f64 * step).cosh();
                let mut acc = [0.0; 5];
                for &(t, wt) in &times {
                    if i as f64 * step > Self::r_max_for(t) {
                        continue;
                    }
                    let v = Self::derivs_at(t, c, &rule);
                    let fw = wt * f(t);
                    for k in 0..5 {
                        acc[k] += fw * v[k];
                    }
                }
                acc
            })
            .collect();
        Ok(Profile { r_step: step, r_max: step * (n - 2) as f64, d })
    }

    /// P, P', P'', P''' at c >= 1.
    pub fn eval(&self, c: f64) -> [f64; 4] {
        let r = acosh_clamped(c.max(1.0)).unwrap_or(0.0);
        if r >= self.r_max {
            return [0.0; 4];
        }
        let pos = r / self.r_step;
        let i = pos.floor() as usize;
        let s = pos - i as f64;
        let h00 = (1.0 + 2.0 * s) * (1.0 - s) * (1.0 - s);
        let h10 = s * (1.0 - s) * (1.0 - s);
        let h01 = s * s * (3.0 - 2.0 * s);
        let h11 = -s * s * (1.0 - s);
        let sh0 = (i as f64 * self.r_step).sinh() * self.r_step;
        let sh1 = ((i + 1) as f64 * self.r_step).sinh() * self.r_step;
        let mut out = [0.0; 4];
        for k in 0..4 {
            out[k] = h00 * self.d[i][k]
                + h01 * self.d[i + 1][k]
                + h10 * self.d[i][k + 1] * sh0
                + h11 * self.d[i + 1][k + 1] * sh1;
        }
        out
    }
}

/// What a kernel is built from.
#[derive(Clone)]
pub enum Source {
    Weights(Arc<WeightSet>),
    Profile(Arc<Profile>),
}

static WEIGHT_CACHE: OnceLock<Mutex<HashMap<u64, Arc<WeightSet>>>> = OnceLock::new();
static PROFILE_CACHE: OnceLock<Mutex<HashMap<u64, Arc<Profile>>>> = OnceLock::new();

/// Psi, g, g2 tables at time t (cached).
pub fn weights_at_time(t: f64) -> Result<Arc<WeightSet>> {
    let cache = WEIGHT_CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    if let Some(w) = cache.lock().expect("cache").get(&t.to_bits()) {
        return Ok(w.clone());
    }
    let w = Arc::new(WeightSet::at_time(t, XiGrid::default())?);
    cache.lock().expect("cache").insert(t.to_bits(), w.clone());
    Ok(w)
}

/// Hyperbolic-plane profile at time t (cached).
pub fn profile_at_time(t: f64) -> Result<Arc<Profile>> {
    let cache = PROFILE_CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    if let Some(p) = cache.lock().expect("cache").get(&t.to_bits()) {
        return Ok(p.clone());
    }
    let p = Arc::new(Profile::at_time(t)?);
    cache.lock().expect("cache").insert(t.to_bits(), p.clone());
    Ok(p)
}

/// Default source at time t: subordination for t >= T_MIN, else the
/// profile for N = R.
pub fn default_source(g: &GroupDescriptor, t: f64) -> Result<Source> {
    if !(t > 0.0) || !t.is_finite() {
        return invalid(format!("t must be positive, got {t}"));
    }
    if t >= T_MIN {
        Ok(Source::Weights(weights_at_time(t)?))
    } else if g.kind == GroupKind::Abelian(1) {
        Ok(Source::Profile(profile_at_time(t)?))
    } else {
        Err(Error::UnsupportedRegime(format!(
            "t = {t} < {T_MIN} is only supported for N = R (Q = 1)"
        )))
    }
}

/// Evaluation strategy for subordinated kernels.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Strategy {
    /// Sum over the xi-grid at every point.
    Direct,
    /// Tabulated xi-moments (abelian N); fast for grids of points.
    Moments,
}

/// A derivative program applied to h_t (or to a time average of h_t),
/// ready for pointwise evaluation.
#[derive(Clone)]
pub struct Kernel {
    pub g: GroupDescriptor,
    pub ops: Vec<GOp>,
    pub label: String,
    pub t: f64,
    inner: Arc<Inner>,
}

enum Inner {
    Direct { terms: Vec<Term>, weights: Arc<WeightSet> },
    Moments(Moments),
    Profile(Arc<Profile>),
}

impl std::fmt::Debug for Kernel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Kernel").field("label", &self.label).field("ops", &self.ops).finish()
    }
}

fn check_ops(ops: &[GOp], g: &GroupDescriptor) -> Result<()> {
    let mut n = 0;
    for op in ops {
        if let GOp::Deriv(j) = op {
            if *j > g.q {
                return invalid(format!("derivative index {j} above q = {}", g.q));
            }
            n += 1;
        }
    }
    if n > 3 {
        return invalid("derivative programs are limited to order 3");
    }
    Ok(())
}

pub fn ops_label(ops: &[GOp]) -> String {
    let mut s = String::new();
    let mut open = 0;
    for op in ops {
        match op {
            GOp::Deriv(j) => s.push_str(&format!("X{j} ")),
            GOp::Star => {
                s.push('(');
                open += 1;
            }
        }
    }
    s.push('h');
    for _ in 0..open {
        s.push_str(")^*");
    }
    s.replace(" (", "(").replace(" h", "h")
}

impl Kernel {
    pub fn new(g: &GroupDescriptor, t: f64, source: &Source, ops: &[GOp], strategy: Strategy) -> Result<Self> {
        Self::build(g, t, source, ops, strategy, true)
    }

    /// As [`Kernel::new`], with the u-derivative handled by s d/ds instead of
    /// integration by parts (abelian N, subordination only).
    pub fn new_without_ibp(g: &GroupDescriptor, t: f64, source: &Source, ops: &[GOp], strategy: Strategy) -> Result<Self> {
        Self::build(g, t, source, ops, strategy, false)
    }

    fn build(
        g: &GroupDescriptor,
        t: f64,
        source: &Source,
        ops: &[GOp],
        strategy: Strategy,
        ibp: bool,
    ) -> Result<Self> {
        check_ops(ops, g)?;
        let inner = match source {
            Source::Weights(w) => {
                let terms = compile(ops, g, ibp)?;
                if strategy == Strategy::Moments && g.is_abelian() {
                    Inner::Moments(Moments::new(&terms, g.q, w))
                } else {
                    Inner::Direct { terms, weights: w.clone() }
                }
            }
            Source::Profile(p) => {
                if g.kind != GroupKind::Abelian(1) {
                    return Err(Error::UnsupportedRegime("profile route needs N = R".into()));
                }
                Inner::Profile(p.clone())
            }
        };
        Ok(Kernel { g: g.clone(), ops: ops.to_vec(), label: ops_label(ops), t, inner: Arc::new(inner) })
    }

    pub fn value(&self, x: &PointG) -> f64 {
        self.eval_parts(x).0
    }

    /// (value, parts by weight Psi / g / g2, error estimate).
    pub fn eval_parts(&self, x: &PointG) -> (f64, [f64; 3], f64) {
        let z = x.z.coords();
        match &*self.inner {
            Inner::Moments(m) => m.eval(z, x.u),
            Inner::Profile(p) => {
                let v = eval_g_program(&self.g, &self.ops, x, |zz: &[D3], u: D3| {
                    let c = u.cosh() + (-u).exp() * zz[0] * zz[0] * 0.5;
                    let d = p.eval(c.base());
                    (u * -0.5).exp() * c.compose(&d)
                });
                (v, [v, 0.0, 0.0], 1e-7 * v.abs())
            }
            Inner::Direct { terms, weights } => direct_eval(&self.g, terms, weights, z, x.u),
        }
    }

    /// Named decomposition, following the weight that carries each part:
    /// I1/I2 when g appears, J1/J2/J3 (value = J1 + 2 J2 + J3) when g2 appears.
    pub fn decomposition(&self, parts: [f64; 3]) -> Option<Vec<Part>> {
        let (has_g, has_g2) = match &*self.inner {
            Inner::Direct { terms, .. } => (
                terms.iter().any(|t| t.w == WeightKind::G),
                terms.iter().any(|t| t.w == WeightKind::G2),
            ),
            Inner::Moments(m) => (
                m.monos.iter().any(|t| t.w == WeightKind::G),
                m.monos.iter().any(|t| t.w == WeightKind::G2),
            ),
            Inner::Profile(_) => return None,
        };
        let p = |n: &str, v: f64| Part { name: n.into(), value: v };
        if has_g2 {
            Some(vec![p("J1", parts[0]), p("J2", 0.5 * parts[1]), p("J3", parts[2])])
        } else if has_g {
            Some(vec![p("I1", parts[0]), p("I2", parts[1])])
        } else {
            None
        }
    }

    pub fn eval(&self, x: &PointG) -> HeatEval {
        let (value, parts, err) = self.eval_parts(x);
        HeatEval { t: self.t, x: *x, value, decomposition: self.decomposition(parts), est_abs_error: err }
    }

    pub fn field(&self, spec: QuadratureSpec) -> KernelField {
        let k = self.clone();
        KernelField::new(format!("{} t={}", self.label, self.t), self.g.clone(), spec, move |x| k.value(x))
    }
}

fn direct_eval(g: &GroupDescriptor, terms: &[Term], weights: &WeightSet, z: &[f64], u: f64) -> (f64, [f64; 3], f64) {
    let cu = u.cosh();
    let mut parts = [0.0; 3];
    let mut err = 0.0;
    let mut mag = 0.0;
    let tb = &weights.psi;
    let start = tb.index_above(cu / 745.0);
    let len = weights.psi.len().max(weights.g.len()).max(weights.g2.len());
    for k in start..len {
        let xi = tb.xi(k);
        let s = 0.5 * u.exp() * xi;
        if !(s > 0.0 && s.is_finite()) {
            continue;
        }
        for t in terms {
            let w = weights.table(t.w);
            if k >= w.len() || w.jac[k] == 0.0 {
                continue;
            }
            let a: f64 = t.a.iter().map(|&(c, m)| c * (m * u).exp()).sum();
            let nf = match n_program_value(g, &t.prog, s, z, cu / xi) {
                Ok(v) => v,
                Err(_) => f64::NAN,
            };
            let f = xi.powi(-t.p) * a * nf;
            parts[part_index(t.w)] += w.jac[k] * f;
            err += (w.err[k] * f).abs();
            mag += (w.jac[k] * f).abs();
        }
    }
    (parts.iter().sum(), parts, err + 1e-14 * mag)
}

fn point_eval(g: &GroupDescriptor, t: f64, x: &PointG, ops: &[GOp]) -> Result<HeatEval> {
    if x.z.dim() != g.dim() {
        return Err(Error::DimensionMismatch { expected: g.dim(), got: x.z.dim() });
    }
    let src = default_source(g, t)?;
    let k = Kernel::new(g, t, &src, ops, Strategy::Direct)?;
    Ok(k.eval(x))
}

pub fn h(g: &GroupDescriptor, t: f64, x: &PointG) -> Result<HeatEval> {
    point_eval(g, t, x, &[])
}

/// X_j h_t(x); j = 0 carries the parts I1 (Psi term) and I2 (g term).
pub fn h_derivative(g: &GroupDescriptor, j: usize, t: f64, x: &PointG) -> Result<HeatEval> {
    point_eval(g, t, x, &[GOp::Deriv(j)])
}

/// (X_j h_t)^*(x).
pub fn h_star_derivative(g: &GroupDescriptor, j: usize, t: f64, x: &PointG) -> Result<HeatEval> {
    point_eval(g, t, x, &[GOp::Star, GOp::Deriv(j)])
}

/// X_j (X_l h_t)^*(x).
pub fn h_second_star(g: &GroupDescriptor, j: usize, l: usize, t: f64, x: &PointG) -> Result<HeatEval> {
    point_eval(g, t, x, &[GOp::Deriv(j), GOp::Star, GOp::Deriv(l)])
}

/// X_l X_k (X_j h_t)^*(x).
pub fn h_third(g: &GroupDescriptor, l: usize, k: usize, j: usize, t: f64, x: &PointG) -> Result<HeatEval> {
    point_eval(g, t, x, &[GOp::Deriv(l), GOp::Deriv(k), GOp::Star, GOp::Deriv(j)])
}

/// Fitted small-time Gaussian bound |X^alpha h_t(x)| <= C t^{-(Q+1+|alpha|)/2} e^{omega t} e^{-b |x|^2/t}.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SmallTimeFit {
    pub c: f64,
    pub b: f64,
    pub omega: f64,
    /// max over the data of |value| / bound; at most 1 for a valid fit.
    pub violation_ratio: f64,
}

/// Fits the small-time bound on N = R from the profile route. `alpha` is a
/// word over {0, 1} (left-invariant derivatives, outermost first).
pub fn small_time_bound_fit(alpha: &[usize], t_grid: &[f64], x_grid: &[PointG]) -> Result<SmallTimeFit> {
    let g = GroupDescriptor::abelian(1)?;
    if alpha.len() > 3 {
        return invalid("multi-index longer than 3");
    }
    if t_grid.len() < 2 || x_grid.is_empty() {
        return invalid("need at least two times and one point");
    }
    let ops: Vec<GOp> = alpha.iter().map(|&j| GOp::Deriv(j)).collect();
    let expo = (2.0 + alpha.len() as f64) / 2.0;
    // data: (t, |x|^2, ln|value| + expo ln t)
    let mut data = Vec::new();
    for &t in t_grid {
        let k = Kernel::new(&g, t, &Source::Profile(profile_at_time(t)?), &ops, Strategy::Direct)?;
        for x in x_grid {
            let v = k.value(x).abs();
            if v > 0.0 {
                let r = crate::na_group::g_distance(x, &g)?;
                data.push((t, r * r, v.ln() + expo * t.ln()));
            }
        }
    }
    if data.is_empty() {
        return Err(Error::Quadrature("all sampled values vanish".into()));
    }
    let fit_c = |b: f64, omega: f64| {
        data.iter().map(|&(t, r2, l)| l + b * r2 / t - omega * t).fold(f64::NEG_INFINITY, f64::max)
    };
    let best_omega = |b: f64| {
        // ln C(omega) is convex piecewise linear; golden section on [0, 10]
        let (mut lo, mut hi) = (0.0f64, 10.0f64);
        let gr = 0.5 * (5f64.sqrt() - 1.0);
        for _ in 0..80 {
            let m1 = hi - gr * (hi - lo);
            let m2 = lo + gr * (hi - lo);
            if fit_c(b, m1) <= fit_c(b, m2) {
                hi = m2;
            } else {
                lo = m1;
            }
        }
        let o = 0.5 * (lo + hi);
        (o, fit_c(b, o))
    };
    // largest Gaussian rate whose constant stays within a factor 10 of the b -> 0 one
    let (_, base) = best_omega(0.01);
    let mut chosen = (0.01, best_omega(0.01));
    for i in 1..=24 {
        let b = 0.01 * i as f64;
        let (o, lc) = best_omega(b);
        if lc <= base + 10f64.ln() {
            chosen = (b, (o, lc));
        }
    }
    let (b, (omega, lc)) = chosen;
    let ratio = data
        .iter()
        .map(|&(t, r2, l)| (l + b * r2 / t - omega * t - lc).exp())
        .fold(0.0, f64::max);
    Ok(SmallTimeFit { c: lc.exp(), b, omega, violation_ratio: ratio })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn compile_x0_star_x0() {
        let g = GroupDescriptor::abelian(1).unwrap();
        let t = compile(&[GOp::Deriv(0), GOp::Star, GOp::Deriv(0)], &g, true).unwrap();
        // Psi xi^-2 + g (e^u + e^-u)/xi + g2
        assert_eq!(t.len(), 3);
        assert!(t.iter().any(|x| x.w == WeightKind::Psi && x.p == 2 && x.a == vec![(1.0, 0.0)]));
        assert!(t.iter().any(|x| x.w == WeightKind::G && x.p == 1 && x.a == vec![(1.0, -1.0), (1.0, 1.0)]));
        assert!(t.iter().any(|x| x.w == WeightKind::G2 && x.p == 0 && x.a == vec![(1.0, 0.0)]));
    }

    #[test]
    fn abelian_program_sign() {
        // (d h)^*(z) = d h(-z) = -d h(z) for even h
        assert_eq!(abelian_reduce(&[NOp::Star, NOp::Deriv(1)], 1), (-1.0, vec![1]));
        assert_eq!(abelian_reduce(&[NOp::Deriv(1), NOp::Star, NOp::Deriv(1)], 1), (-1.0, vec![2]));
    }
}
