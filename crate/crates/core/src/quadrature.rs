//! One-dimensional quadrature rules: Gauss-Legendre, composite panels and
//! adaptive Gauss-Kronrod (21 point) for vector valued integrands.

use std::f64::consts::PI;

/// Gauss-Legendre rule on [-1, 1].
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussLegendre {
    /// Newton iteration on P_n starting from the Chebyshev-like guess.
    pub fn new(n: usize) -> Self {
        assert!(n >= 1);
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let m = (n + 1) / 2;
        for i in 0..m {
            let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre_with_derivative(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre_with_derivative(n, x);
            if d != 0.0 {
                dp = d;
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        if n % 2 == 1 {
            nodes[n / 2] = 0.0;
        }
        GaussLegendre { nodes, weights }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Nodes and weights mapped to [a, b].
    pub fn on(&self, a: f64, b: f64) -> impl Iterator<Item = (f64, f64)> + '_ {
        let c = 0.5 * (a + b);
        let h = 0.5 * (b - a);
        self.nodes
            .iter()
            .zip(self.weights.iter())
            .map(move |(&x, &w)| (c + h * x, h * w))
    }

    pub fn integrate<F: FnMut(f64) -> f64>(&self, a: f64, b: f64, mut f: F) -> f64 {
        self.on(a, b).map(|(x, w)| w * f(x)).sum()
    }
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let p = if n == 0 { 1.0 } else { p1 };
    let d = n as f64 * (x * p - p0) / (x * x - 1.0);
    (p, d)
}

/// Composite rule: `panels` equal panels on [a, b], `rule` on each.
pub fn composite(rule: &GaussLegendre, a: f64, b: f64, panels: usize) -> Vec<(f64, f64)> {
    let panels = panels.max(1);
    let h = (b - a) / panels as f64;
    let mut out = Vec::with_capacity(panels * rule.len());
    for p in 0..panels {
        let lo = a + h * p as f64;
        out.extend(rule.on(lo, lo + h));
    }
    out
}

/// Composite rule over explicit breakpoints.
pub fn composite_breaks(rule: &GaussLegendre, breaks: &[f64]) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(breaks.len() * rule.len());
    for w in breaks.windows(2) {
        out.extend(rule.on(w[0], w[1]));
    }
    out
}

// Kronrod 21 / Gauss 10 abscissae and weights (QUADPACK qk21).
const XGK: [f64; 11] = [
    0.995657163025808080735527280689003,
    0.973906528517171720077964012084452,
    0.930157491355708226001207180059508,
    0.865063366688984510732096688423493,
    0.780817726586416897063717578345042,
    0.679409568299024406234327365114874,
    0.562757134668604683339000099272694,
    0.433395394129247190799265943165784,
    0.294392862701460198131126603103866,
    0.148874338981631210884826001129720,
    0.000000000000000000000000000000000,
];
const WGK: [f64; 11] = [
    0.011694638867371874278064396062192,
    0.032558162307964727478818972459390,
    0.054755896574351996031381300244580,
    0.075039674810919952767043140916190,
    0.093125454583697605535065465083366,
    0.109387158802297641899210590325805,
    0.123491976262065851077958109831074,
    0.134709217311473325928054001771707,
    0.142775938577060080797094273138717,
    0.147739104901338491374841515972068,
    0.149445554002916905664936468389821,
];
const WG: [f64; 5] = [
    0.066671344308688137593568809893332,
    0.149451349150580593145776339657697,
    0.219086362515982043995534934228163,
    0.269266719309996355091226921569469,
    0.295524224714752870173892994651338,
];

/// Result of an adaptive integration of an `M`-component integrand.
#[derive(Debug, Clone, Copy)]
pub struct Adaptive<const M: usize> {
    pub value: [f64; M],
    pub abs_err: [f64; M],
    pub evals: usize,
    pub converged: bool,
}

fn gk21<const M: usize, F: FnMut(f64) -> [f64; M]>(
    f: &mut F,
    a: f64,
    b: f64,
) -> ([f64; M], [f64; M]) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut fv = [[[0.0; M]; 2]; 10];
    let mut rk = [0.0; M];
    let mut rg = [0.0; M];
    for m in 0..M {
        rk[m] = WGK[10] * fc[m];
    }
    for j in 0..10 {
        let dx = h * XGK[j];
        fv[j] = [f(c - dx), f(c + dx)];
        for m in 0..M {
            let s = fv[j][0][m] + fv[j][1][m];
            rk[m] += WGK[j] * s;
            if j % 2 == 1 {
                rg[m] += WG[j / 2] * s;
            }
        }
    }
    // QUADPACK-style rescaling of |K - G| by the absolute variation
    let mut err = [0.0; M];
    for m in 0..M {
        let mean = 0.5 * rk[m];
        let mut asc = WGK[10] * (fc[m] - mean).abs();
        for j in 0..10 {
            asc += WGK[j] * ((fv[j][0][m] - mean).abs() + (fv[j][1][m] - mean).abs());
        }
        asc *= h.abs();
        rk[m] *= h;
        rg[m] *= h;
        let mut e = (rk[m] - rg[m]).abs();
        if asc != 0.0 && e != 0.0 {
            e = asc * (200.0 * e / asc).powf(1.5).min(1.0);
        }
        err[m] = e.max(50.0 * f64::EPSILON * rk[m].abs());
    }
    (rk, err)
}

/// Adaptive Gauss-Kronrod on [a, b] by bisection of the worst panel.
/// Tolerances apply to the max-norm over components.
pub fn adaptive_gk<const M: usize, F: FnMut(f64) -> [f64; M]>(
    f: F,
    a: f64,
    b: f64,
    abs_tol: f64,
    rel_tol: f64,
    max_panels: usize,
) -> Adaptive<M> {
    adaptive_gk_breaks(f, &[a, b], abs_tol, rel_tol, max_panels)
}

/// As [`adaptive_gk`], starting from the panels given by `breaks`.
pub fn adaptive_gk_breaks<const M: usize, F: FnMut(f64) -> [f64; M]>(
    mut f: F,
    breaks: &[f64],
    abs_tol: f64,
    rel_tol: f64,
    max_panels: usize,
) -> Adaptive<M> {
    struct Panel<const M: usize> {
        a: f64,
        b: f64,
        v: [f64; M],
        e: [f64; M],
    }
    let norm = |e: &[f64; M]| e.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let mut panels = Vec::with_capacity(breaks.len() + 16);
    let mut evals = 0;
    for w in breaks.windows(2) {
        let (v, e) = gk21(&mut f, w[0], w[1]);
        evals += 21;
        panels.push(Panel { a: w[0], b: w[1], v, e });
    }
    loop {
        let mut tot = [0.0; M];
        let mut err = [0.0; M];
        for p in &panels {
            for m in 0..M {
                tot[m] += p.v[m];
                err[m] += p.e[m];
            }
        }
        let tol = abs_tol.max(rel_tol * norm(&tot));
        if norm(&err) <= tol || panels.len() >= max_panels {
            return Adaptive {
                value: tot,
                abs_err: err,
                evals,
                converged: norm(&err) <= tol,
            };
        }
        let (idx, _) = panels
            .iter()
            .enumerate()
            .fold((0, -1.0), |(bi, be), (i, p)| {
                let e = norm(&p.e);
                if e > be {
                    (i, e)
                } else {
                    (bi, be)
                }
            });
        let p = panels.swap_remove(idx);
        let mid = 0.5 * (p.a + p.b);
        let (v1, e1) = gk21(&mut f, p.a, mid);
        let (v2, e2) = gk21(&mut f, mid, p.b);
        evals += 42;
        panels.push(Panel { a: p.a, b: mid, v: v1, e: e1 });
        panels.push(Panel { a: mid, b: p.b, v: v2, e: e2 });
    }
}

/// Scalar convenience wrapper.
pub fn adaptive_gk_scalar<F: FnMut(f64) -> f64>(
    mut f: F,
    a: f64,
    b: f64,
    abs_tol: f64,
    rel_tol: f64,
) -> (f64, f64) {
    let r = adaptive_gk(|x| [f(x)], a, b, abs_tol, rel_tol, 2000);
    (r.value[0], r.abs_err[0])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gl_integrates_polynomials_exactly() {
        let r = GaussLegendre::new(8);
        let v = r.integrate(0.0, 2.0, |x| x.powi(15));
        assert!((v - 2f64.powi(16) / 16.0).abs() < 1e-9);
        let s: f64 = r.weights.iter().sum();
        assert!((s - 2.0).abs() < 1e-14);
    }

    #[test]
    fn gl_high_order_gaussian() {
        let r = GaussLegendre::new(64);
        let v: f64 = composite(&r, -12.0, 12.0, 4).iter().map(|(x, w)| w * (-x * x).exp()).sum();
        assert!((v - PI.sqrt()).abs() < 1e-13, "{}", v - PI.sqrt());
    }

    #[test]
    fn adaptive_oscillatory() {
        let r = adaptive_gk(|x| [(20.0 * x).sin() * x, x.exp()], 0.0, 3.0, 0.0, 1e-13, 500);
        let exact0 = ((20.0f64 * 3.0).sin() - 60.0 * (60.0f64).cos()) / 400.0;
        assert!((r.value[0] - exact0).abs() < 1e-12);
        assert!((r.value[1] - (3f64.exp() - 1.0)).abs() < 1e-12);
        assert!(r.converged);
    }
}
