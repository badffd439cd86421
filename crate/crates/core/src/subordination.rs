//! The subordination weight Psi_t(xi) and its xi-derivative structure.
//!
//! h_t(z,u) = int_0^inf Psi_t(xi) exp(-cosh u / xi) h^N_{e^u xi / 2}(z) dxi, with
//! Psi_t(xi) = xi^-2 (4 pi^3 t)^-1/2 int_0^inf sinh th sin(pi th / 2t) exp((pi^2 - th^2)/4t - cosh th / xi) dth.
//!
//! `g` denotes d/dxi [xi Psi_t] and `g2` denotes d/dxi [xi g]. The
//! time-integrated weights are integrals over t in [1, inf).

use std::f64::consts::PI;
use std::sync::OnceLock;

use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::quadrature::{adaptive_gk_breaks, composite, GaussLegendre};

/// Smallest time for which the oscillatory representation is evaluated.
pub const T_MIN: f64 = 0.25;

/// Default relative tolerance of the theta quadrature.
pub const DEFAULT_REL_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PsiEval {
    pub t: f64,
    pub xi: f64,
    pub value: f64,
    pub est_abs_error: f64,
}

fn check(t: f64, xi: f64) -> Result<()> {
    if !(xi > 0.0) || !xi.is_finite() {
        return invalid(format!("xi must be positive, got {xi}"));
    }
    if !t.is_finite() || !(t > 0.0) {
        return invalid(format!("t must be positive, got {t}"));
    }
    if t < T_MIN {
        return Err(Error::UnsupportedRegime(format!(
            "t = {t} below t_min = {T_MIN}: oscillatory weight not evaluated"
        )));
    }
    Ok(())
}

/// ln(cosh x) without overflow.
fn ln_cosh(x: f64) -> f64 {
    let a = x.abs();
    a + (-2.0 * a).exp().ln_1p() - std::f64::consts::LN_2
}

/// cosh(x) - 1, accurate near 0.
fn cosh_m1(x: f64) -> f64 {
    let s = (0.5 * x).sinh();
    2.0 * s * s
}

/// Upper end of the theta range: walk until the log-envelope has dropped
/// `drop` below its running peak. Returns (theta_max, peak log-envelope).
fn theta_range<F: Fn(f64) -> f64>(log_env: F, step: f64, drop: f64) -> (f64, f64) {
    let mut peak = f64::NEG_INFINITY;
    let mut th = 0.0;
    loop {
        let l = log_env(th);
        if l > peak {
            peak = l;
        }
        if th > 0.0 && l < peak - drop {
            return (th, peak);
        }
        th += step;
        if th > 2000.0 {
            return (th, peak);
        }
    }
}

/// Psi_t, g_t and g2_t at one xi, by one adaptive pass over theta with
/// panels aligned to half-periods of sin(pi theta / 2t).
pub fn weights_at(t: f64, xi: f64, rel_tol: f64) -> Result<[PsiEval; 3]> {
    check(t, xi)?;
    let inv_xi = 1.0 / xi;
    let mk = |v: f64, e: f64| PsiEval { t, xi, value: v, est_abs_error: e };
    // overall factor e^{-1/xi} xi^{-2}
    let log_pref = -inv_xi - 2.0 * xi.ln();
    if log_pref < -740.0 {
        return Ok([mk(0.0, 0.0), mk(0.0, 0.0), mk(0.0, 0.0)]);
    }
    let a = PI / (2.0 * t);
    let c4 = 0.25 / t;
    let log_e = |th: f64| (PI * PI - th * th) * c4 - cosh_m1(th) * inv_xi;
    let (th_max, peak) = theta_range(
        |th| ln_cosh(th) + (1.0 + th).ln() + log_e(th),
        0.25,
        40.0,
    );
    let mut breaks = Vec::new();
    let half = 2.0 * t;
    let mut b = 0.0;
    while b < th_max {
        breaks.push(b);
        b += half;
    }
    breaks.push(th_max);
    let r = adaptive_gk_breaks(
        |th| {
            let e = log_e(th).exp();
            let (sn, cs) = (a * th).sin_cos();
            let ch = th.cosh();
            let psi = th.sinh() * sn * e;
            let g = ch * (PI * cs - th * sn) * e;
            [psi, g, g * (ch * inv_xi - 1.0)]
        },
        &breaks,
        // the integral may cancel far below the integrand scale; settle for
        // rounding level relative to the envelope peak
        1e-13 * peak.exp() * (1.0 + th_max),
        rel_tol,
        600,
    );
    let pref = log_pref.exp();
    let c0 = pref / (4.0 * PI.powi(3) * t).sqrt();
    let c1 = pref / (4.0 * (PI.powi(3) * t.powi(3)).sqrt());
    let rounding = 1e-16 * peak.exp() * th_max;
    Ok([
        mk(c0 * r.value[0], c0 * (r.abs_err[0] + rounding)),
        mk(c1 * r.value[1], c1 * (r.abs_err[1] + rounding)),
        mk(c1 * r.value[2], c1 * (r.abs_err[2] + rounding * (1.0 + th_max.cosh() * inv_xi))),
    ])
}

/// Psi_t(xi).
pub fn psi(t: f64, xi: f64) -> Result<PsiEval> {
    psi_with_tol(t, xi, DEFAULT_REL_TOL)
}

pub fn psi_with_tol(t: f64, xi: f64, rel_tol: f64) -> Result<PsiEval> {
    Ok(weights_at(t, xi, rel_tol)?[0])
}

/// d/dxi [xi Psi_t(xi)] from its closed theta-integral.
pub fn psi_xi_derivative(t: f64, xi: f64) -> Result<PsiEval> {
    Ok(weights_at(t, xi, DEFAULT_REL_TOL)?[1])
}

/// d/dxi [xi d/dxi [xi Psi_t(xi)]].
pub fn psi_xi_second(t: f64, xi: f64) -> Result<PsiEval> {
    Ok(weights_at(t, xi, DEFAULT_REL_TOL)?[2])
}

/// int_0^pi cos(s th / 2) exp((s^2 - th^2)/4) ds.
fn gamma_inner(th: f64) -> f64 {
    let panels = (th / 4.0).ceil() as usize + 2;
    let rule = gl20();
    let mut acc = 0.0;
    for (s, w) in composite(rule, 0.0, PI, panels) {
        acc += w * (0.5 * s * th).cos() * (0.25 * (s * s - th * th)).exp();
    }
    acc
}

/// int_1^inf t^{-1/2} sin(pi th / 2t) exp((pi^2 - th^2)/4t) dt, after
/// t = 1/w^2: int_0^1 2 w^-2 sin(pi th w^2 / 2) exp((pi^2 - th^2) w^2 / 4) dw.
pub fn phi_inner(th: f64) -> f64 {
    if th == 0.0 {
        return 0.0;
    }
    let rule = gl20();
    let reach = (12.0 / th).min(1.0);
    let panels = ((th * reach * reach).ceil() as usize).clamp(3, 64);
    let mut acc = 0.0;
    for (w, wt) in composite(rule, 0.0, reach, panels) {
        let w2 = w * w;
        let x = 0.5 * PI * th * w2;
        // sin(x)/w^2 without cancellation for tiny w
        let sinc = if x < 1e-8 { 0.5 * PI * th } else { x.sin() / w2 };
        acc += wt * 2.0 * sinc * (0.25 * (PI * PI - th * th) * w2).exp();
    }
    acc
}

/// Smooth function sampled on a uniform grid, read back by local
/// six-point Lagrange interpolation.
struct UniformTable {
    x0: f64,
    h: f64,
    v: Vec<f64>,
}

impl UniformTable {
    fn new<F: Fn(f64) -> f64>(x0: f64, x1: f64, h: f64, f: F) -> Self {
        let n = ((x1 - x0) / h).ceil() as usize + 1;
        UniformTable { x0, h, v: (0..n).map(|i| f(x0 + h * i as f64)).collect() }
    }

    fn get(&self, x: f64) -> Option<f64> {
        let p = (x - self.x0) / self.h;
        let i = p.floor() as isize - 2;
        if i < 0 || i as usize + 6 > self.v.len() {
            return None;
        }
        let i = i as usize;
        let mut acc = 0.0;
        for j in 0..6 {
            let mut l = 1.0;
            for m in 0..6 {
                if m != j {
                    l *= (p - (i + m) as f64) / (j as f64 - m as f64);
                }
            }
            acc += l * self.v[i + j];
        }
        Some(acc)
    }
}

fn phi_cached(th: f64) -> f64 {
    static T: OnceLock<UniformTable> = OnceLock::new();
    let tab = T.get_or_init(|| UniformTable::new(-0.25, 200.0, 1.0 / 64.0, phi_inner_signed));
    tab.get(th).unwrap_or_else(|| phi_inner(th))
}

fn gamma_cached(th: f64) -> f64 {
    static T: OnceLock<UniformTable> = OnceLock::new();
    let tab = T.get_or_init(|| UniformTable::new(-0.25, 60.0, 1.0 / 128.0, |x| gamma_inner(x.abs())));
    tab.get(th).unwrap_or_else(|| gamma_inner(th))
}

// odd extension keeps the interpolation stencil smooth across 0
fn phi_inner_signed(th: f64) -> f64 {
    if th < 0.0 {
        -phi_inner(-th)
    } else {
        phi_inner(th)
    }
}

fn gl20() -> &'static GaussLegendre {
    static R: OnceLock<GaussLegendre> = OnceLock::new();
    R.get_or_init(|| GaussLegendre::new(20))
}

/// Time-integrated weights over t in [1, inf):
/// [int Psi_t dt, int g_t dt, int g2_t dt].
pub fn time_integrated_at(xi: f64, rel_tol: f64) -> Result<[PsiEval; 3]> {
    if !(xi > 0.0) || !xi.is_finite() {
        return invalid(format!("xi must be positive, got {xi}"));
    }
    let inv_xi = 1.0 / xi;
    let mk = |v: f64, e: f64| PsiEval { t: f64::INFINITY, xi, value: v, est_abs_error: e };
    let log_pref = -inv_xi - 2.0 * xi.ln();
    if log_pref < -740.0 {
        return Ok([mk(0.0, 0.0), mk(0.0, 0.0), mk(0.0, 0.0)]);
    }
    // Psi part: Phi tends to pi^{3/2}, so the envelope is sinh th e^{-(cosh th - 1)/xi}.
    let (th_max_a, peak_a) = theta_range(|th| ln_cosh(th) - cosh_m1(th) * inv_xi, 0.25, 40.0);
    let mut breaks = vec![0.0];
    let mut b = 1.0;
    while b < th_max_a {
        breaks.push(b);
        b *= 2.0;
    }
    breaks.push(th_max_a);
    let ra = adaptive_gk_breaks(
        |th| [th.sinh() * phi_cached(th) * (-cosh_m1(th) * inv_xi).exp()],
        &breaks,
        1e-13 * peak_a.exp() * (1.0 + th_max_a),
        rel_tol,
        2000,
    );
    // g parts: Gamma carries e^{-th^2/4}.
    let (th_max_b, peak_b) = theta_range(
        |th| ln_cosh(th) + (1.0 + th).ln() - 0.25 * th * th - cosh_m1(th) * inv_xi,
        0.25,
        40.0,
    );
    let mut breaks = Vec::new();
    let mut b = 0.0;
    while b < th_max_b {
        breaks.push(b);
        b += 2.0;
    }
    breaks.push(th_max_b);
    let rb = adaptive_gk_breaks(
        |th| {
            let ch = th.cosh();
            let v = ch * gamma_cached(th) * (-cosh_m1(th) * inv_xi).exp();
            [v, v * (ch * inv_xi - 1.0)]
        },
        &breaks,
        1e-13 * peak_b.exp() * (1.0 + th_max_b),
        rel_tol,
        2000,
    );
    let c = log_pref.exp() / (4.0 * PI.powi(3)).sqrt();
    Ok([
        mk(c * ra.value[0], c * ra.abs_err[0]),
        mk(c * rb.value[0], c * rb.abs_err[0]),
        mk(c * rb.value[1], c * rb.abs_err[1]),
    ])
}

/// int_1^inf d/dxi [xi Psi_t(xi)] dt as the closed double integral.
pub fn psi_time_integrated(xi: f64) -> Result<PsiEval> {
    Ok(time_integrated_at(xi, DEFAULT_REL_TOL)?[1])
}

/// int_1^inf d/dxi [xi d/dxi [xi Psi_t(xi)]] dt.
pub fn psi_second_time_integrated(xi: f64) -> Result<PsiEval> {
    Ok(time_integrated_at(xi, DEFAULT_REL_TOL)?[2])
}

/// int_1^inf Psi_t(xi) dt.
pub fn psi_tail_integrated(xi: f64) -> Result<PsiEval> {
    Ok(time_integrated_at(xi, DEFAULT_REL_TOL)?[0])
}

/// int_a^b f(t) dt for integrands decaying like t^{-3/2}, in tau = t^{-1/2}
/// where the integrand 2 tau^{-3} f(1/tau^2) stays bounded as tau -> 0.
/// `b = inf` is allowed. Geometric panels in tau, `nodes` points each.
pub fn time_integral_tau<F: FnMut(f64) -> Result<f64>>(
    mut f: F,
    a: f64,
    b: f64,
    nodes: usize,
) -> Result<f64> {
    let rule = GaussLegendre::new(nodes);
    let tau_hi = a.powf(-0.5);
    let tau_lo = if b.is_infinite() { 0.0 } else { b.powf(-0.5) };
    let mut edges = vec![tau_hi];
    while *edges.last().unwrap() > 2.0 * tau_lo.max(tau_hi / 64.0) {
        let e = edges.last().unwrap() * 0.5;
        edges.push(e);
    }
    edges.push(tau_lo);
    let mut acc = 0.0;
    for w in edges.windows(2) {
        for (tau, wt) in rule.on(w[1], w[0]) {
            let t = 1.0 / (tau * tau);
            acc += wt * 2.0 / tau.powi(3) * f(t)?;
        }
    }
    Ok(acc)
}

/// int_1^T g_t(xi) dt and the remainder int_T^inf g_t(xi) dt, both by
/// quadrature of the raw t-integrand. Returns (partial, remainder,
/// remainder self-convergence error).
pub fn psi_xi_derivative_time_partial(xi: f64, t_max: f64, nodes: usize) -> Result<(f64, f64, f64)> {
    if !(t_max > 1.0) {
        return invalid("t_max must exceed 1");
    }
    let g = |t: f64| psi_xi_derivative(t, xi).map(|e| e.value);
    let partial = time_integral_tau(g, 1.0, t_max, nodes)?;
    let tail = time_integral_tau(g, t_max, f64::INFINITY, nodes)?;
    let tail_coarse = time_integral_tau(g, t_max, f64::INFINITY, nodes / 2)?;
    Ok((partial, tail, (tail - tail_coarse).abs()))
}

/// Which weight a table holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WeightKind {
    Psi,
    G,
    G2,
}

/// A weight tabulated on a uniform grid in s = ln xi. Values carry the
/// trapezoid Jacobian: `jac[k] = h * xi_k * W(xi_k)`.
#[derive(Debug, Clone)]
pub struct WeightTable {
    pub s0: f64,
    pub h: f64,
    pub jac: Vec<f64>,
    pub err: Vec<f64>,
}

impl WeightTable {
    pub fn xi(&self, k: usize) -> f64 {
        (self.s0 + self.h * k as f64).exp()
    }
    pub fn len(&self) -> usize {
        self.jac.len()
    }
    pub fn is_empty(&self) -> bool {
        self.jac.is_empty()
    }
    /// First index whose xi exceeds `xi`.
    pub fn index_above(&self, xi: f64) -> usize {
        let k = ((xi.ln() - self.s0) / self.h).ceil();
        if k < 0.0 {
            0
        } else {
            (k as usize).min(self.len())
        }
    }
    /// Sum of weights of two tables, `a * self + b * other` (same grid).
    pub fn axpy(&mut self, a: f64, other: &WeightTable) {
        if other.len() > self.len() {
            self.jac.resize(other.len(), 0.0);
            self.err.resize(other.len(), 0.0);
        }
        for k in 0..other.len() {
            self.jac[k] += a * other.jac[k];
            self.err[k] += a.abs() * other.err[k];
        }
    }
}

/// Grid parameters shared by all weight tables.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct XiGrid {
    pub s0: f64,
    pub h: f64,
    /// Hard upper end of the grid in s.
    pub s_cap: f64,
    pub rel_tol: f64,
}

impl Default for XiGrid {
    fn default() -> Self {
        // below s0, e^{-1/xi} underflows
        XiGrid { s0: -6.6, h: 0.125, s_cap: 120.0, rel_tol: 1e-11 }
    }
}

/// Psi, g and g2 as tables on a common grid.
#[derive(Debug, Clone)]
pub struct WeightSet {
    pub psi: WeightTable,
    pub g: WeightTable,
    pub g2: WeightTable,
    pub grid: XiGrid,
}

impl WeightSet {
    pub fn table(&self, k: WeightKind) -> &WeightTable {
        match k {
            WeightKind::Psi => &self.psi,
            WeightKind::G => &self.g,
            WeightKind::G2 => &self.g2,
        }
    }

    fn build<F: Fn(f64) -> Result<[PsiEval; 3]>>(grid: XiGrid, f: F) -> Result<Self> {
        let mut cols: [Vec<f64>; 3] = Default::default();
        let mut errs: [Vec<f64>; 3] = Default::default();
        let mut envelope_max = 0.0f64;
        let mut quiet = 0;
        let mut k = 0usize;
        loop {
            let s = grid.s0 + grid.h * k as f64;
            if s > grid.s_cap {
                break;
            }
            let xi = s.exp();
            let w = f(xi)?;
            let mut env = 0.0f64;
            for m in 0..3 {
                cols[m].push(grid.h * xi * w[m].value);
                errs[m].push(grid.h * xi * w[m].est_abs_error);
                env = env.max(w[m].value.abs() * xi * (1.0 + s.abs()));
            }
            envelope_max = envelope_max.max(env);
            // stop once xi W(xi) is negligible, including the log growth of int e^{-cosh u/xi} du
            if env < 1e-18 * envelope_max {
                quiet += 1;
                if quiet >= 16 {
                    break;
                }
            } else {
                quiet = 0;
            }
            k += 1;
        }
        let [p, g, g2] = cols;
        let [ep, eg, eg2] = errs;
        let mk = |jac, err| WeightTable { s0: grid.s0, h: grid.h, jac, err };
        Ok(WeightSet { psi: mk(p, ep), g: mk(g, eg), g2: mk(g2, eg2), grid })
    }

    /// Weights at a single time t >= t_min.
    pub fn at_time(t: f64, grid: XiGrid) -> Result<Self> {
        check(t, 1.0)?;
        Self::build(grid, |xi| weights_at(t, xi, grid.rel_tol))
    }

    /// int_a^b f(t) W_t dt by Gauss-Legendre in t with `nodes` nodes.
    pub fn time_average<F: Fn(f64) -> f64>(
        a: f64,
        b: f64,
        nodes: usize,
        f: F,
        grid: XiGrid,
    ) -> Result<Self> {
        check(a, 1.0)?;
        let rule = GaussLegendre::new(nodes);
        let mut out: Option<WeightSet> = None;
        for (t, w) in rule.on(a, b) {
            let ws = Self::at_time(t, grid)?;
            let c = w * f(t);
            match out.as_mut() {
                None => {
                    let mut z = ws.clone();
                    for tb in [&mut z.psi, &mut z.g, &mut z.g2] {
                        tb.jac.iter_mut().for_each(|v| *v *= c);
                        tb.err.iter_mut().for_each(|v| *v *= c.abs());
                    }
                    out = Some(z);
                }
                Some(o) => {
                    o.psi.axpy(c, &ws.psi);
                    o.g.axpy(c, &ws.g);
                    o.g2.axpy(c, &ws.g2);
                }
            }
        }
        Ok(out.expect("at least one node"))
    }

    /// Weights integrated over t in [1, inf).
    pub fn tail(grid: XiGrid) -> Result<Self> {
        Self::build(grid, |xi| time_integrated_at(xi, grid.rel_tol))
    }

    /// Largest s-grid end among the three tables.
    pub fn s_end(&self) -> f64 {
        self.grid.s0 + self.grid.h * self.psi.len() as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_small_t() {
        assert!(matches!(psi(0.1, 1.0), Err(Error::UnsupportedRegime(_))));
        assert!(psi(1.0, -1.0).is_err());
    }

    #[test]
    fn phi_limit() {
        // int_1^inf t^{-1/2} sin(pi th/2t) e^{...} dt -> pi^{3/2} for large theta
        let v = phi_inner(60.0);
        assert!((v - PI.powf(1.5)).abs() < 1e-2 * v, "{v}");
    }
}
