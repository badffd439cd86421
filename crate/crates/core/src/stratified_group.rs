//! The stratified group N: abelian R^Q or the Heisenberg group H^1, in
//! exponential coordinates of the first kind with Lebesgue Haar measure.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::ad::{d3_coeff, d3_const, d3_seed, Scalar, D3};
use crate::error::{invalid, Error, Result};
use crate::quadrature::{composite, composite_breaks, GaussLegendre};

/// Largest coordinate dimension supported for N.
pub const MAX_DIM: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GroupKind {
    Abelian(usize),
    Heisenberg1,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupDescriptor {
    pub kind: GroupKind,
    /// Homogeneous dimension.
    pub big_q: usize,
    /// Horizontal rank.
    pub q: usize,
    pub step: usize,
    pub dilation_weights: Vec<u32>,
}

impl GroupDescriptor {
    pub fn abelian(q: usize) -> Result<Self> {
        if q == 0 || q > MAX_DIM {
            return invalid(format!("abelian dimension must be in 1..={MAX_DIM}, got {q}"));
        }
        Ok(GroupDescriptor {
            kind: GroupKind::Abelian(q),
            big_q: q,
            q,
            step: 1,
            dilation_weights: vec![1; q],
        })
    }

    pub fn heisenberg() -> Self {
        GroupDescriptor {
            kind: GroupKind::Heisenberg1,
            big_q: 4,
            q: 2,
            step: 2,
            dilation_weights: vec![1, 1, 2],
        }
    }

    /// Parses `abelian:Q` or `heisenberg`.
    pub fn parse(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        if s == "heisenberg" || s == "heisenberg1" || s == "h1" {
            return Ok(Self::heisenberg());
        }
        if let Some(q) = s.strip_prefix("abelian:") {
            let q: usize = q
                .parse()
                .map_err(|_| Error::InvalidParameter(format!("bad abelian dimension '{q}'")))?;
            return Self::abelian(q);
        }
        invalid(format!("unknown group '{s}'"))
    }

    pub fn dim(&self) -> usize {
        self.dilation_weights.len()
    }

    pub fn is_abelian(&self) -> bool {
        matches!(self.kind, GroupKind::Abelian(_))
    }

    pub fn name(&self) -> String {
        match self.kind {
            GroupKind::Abelian(q) => format!("abelian:{q}"),
            GroupKind::Heisenberg1 => "heisenberg".into(),
        }
    }
}

/// A point of N. Stored inline; only the first `dim` entries are used.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointN {
    c: [f64; MAX_DIM],
    dim: usize,
}

impl PointN {
    pub fn new(coords: &[f64]) -> Result<Self> {
        if coords.is_empty() || coords.len() > MAX_DIM {
            return invalid(format!("point dimension {} out of range", coords.len()));
        }
        if coords.iter().any(|x| !x.is_finite()) {
            return invalid("non-finite coordinate");
        }
        let mut c = [0.0; MAX_DIM];
        c[..coords.len()].copy_from_slice(coords);
        Ok(PointN { c, dim: coords.len() })
    }

    pub fn zero(dim: usize) -> Self {
        PointN { c: [0.0; MAX_DIM], dim }
    }

    pub fn coords(&self) -> &[f64] {
        &self.c[..self.dim]
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn neg(&self) -> Self {
        let mut p = *self;
        p.c.iter_mut().for_each(|x| *x = -*x);
        p
    }

    fn check(&self, g: &GroupDescriptor) -> Result<()> {
        if self.dim != g.dim() {
            return Err(Error::DimensionMismatch { expected: g.dim(), got: self.dim });
        }
        Ok(())
    }
}

/// A word over {1,...,q} (or {0,...,q} on G), at most three letters.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct MultiIndex {
    pub word: Vec<usize>,
}

impl MultiIndex {
    pub fn new(word: &[usize]) -> Result<Self> {
        if word.len() > 3 {
            return invalid("multi-index longer than 3");
        }
        Ok(MultiIndex { word: word.to_vec() })
    }
    pub fn empty() -> Self {
        MultiIndex { word: vec![] }
    }
    pub fn len(&self) -> usize {
        self.word.len()
    }
    pub fn is_empty(&self) -> bool {
        self.word.is_empty()
    }
}

/// Group law on generic scalars (abelian: addition; Heisenberg: BCH).
pub fn mul_generic<T: Scalar>(kind: GroupKind, a: &[T], b: &[T], out: &mut [T]) {
    match kind {
        GroupKind::Abelian(q) => {
            for i in 0..q {
                out[i] = a[i] + b[i];
            }
        }
        GroupKind::Heisenberg1 => {
            out[0] = a[0] + b[0];
            out[1] = a[1] + b[1];
            out[2] = a[2] + b[2] + (a[0] * b[1] - a[1] * b[0]) * 0.5;
        }
    }
}

pub fn n_multiply(a: &PointN, b: &PointN, g: &GroupDescriptor) -> Result<PointN> {
    a.check(g)?;
    b.check(g)?;
    let mut out = PointN::zero(g.dim());
    mul_generic(g.kind, a.coords(), b.coords(), &mut out.c[..g.dim()]);
    Ok(out)
}

/// Inverse in exponential coordinates is negation for both groups.
pub fn n_inverse(a: &PointN) -> PointN {
    a.neg()
}

pub fn dilate(t: f64, z: &PointN, g: &GroupDescriptor) -> Result<PointN> {
    if !(t > 0.0) {
        return invalid(format!("dilation factor must be positive, got {t}"));
    }
    z.check(g)?;
    let mut out = *z;
    for (i, w) in g.dilation_weights.iter().enumerate() {
        out.c[i] *= t.powi(*w as i32);
    }
    Ok(out)
}

/// Dilation on generic scalars, factor `e^u`.
pub fn dilate_exp_generic<T: Scalar>(weights: &[u32], u: T, z: &mut [T]) {
    let e = u.exp();
    let e2 = e * e;
    for (i, w) in weights.iter().enumerate() {
        z[i] = match w {
            1 => z[i] * e,
            2 => z[i] * e2,
            _ => z[i] * (u * *w as f64).exp(),
        };
    }
}

/// Carnot-Caratheodory norm.
pub fn n_norm(z: &PointN, g: &GroupDescriptor) -> Result<f64> {
    z.check(g)?;
    Ok(match g.kind {
        GroupKind::Abelian(_) => z.coords().iter().map(|x| x * x).sum::<f64>().sqrt(),
        GroupKind::Heisenberg1 => {
            let c = z.coords();
            heisenberg_cc_norm((c[0] * c[0] + c[1] * c[1]).sqrt(), c[2])
        }
    })
}

/// Length of the shortest horizontal curve from 0 to a point with horizontal
/// radius `r` and vertical coordinate `w`. Geodesics project to circular arcs;
/// `phi` is the turning angle, solving w/r^2 = (phi - sin phi)/(8 sin^2(phi/2)).
pub fn heisenberg_cc_norm(r: f64, w: f64) -> f64 {
    let w = w.abs();
    if w == 0.0 {
        return r;
    }
    if r == 0.0 {
        return (4.0 * PI * w).sqrt();
    }
    let target = w / (r * r);
    let phi = solve_turning_angle(target);
    let half = 0.5 * phi;
    if half < 1e-8 {
        return r * (1.0 + half * half / 6.0);
    }
    r * half / half.sin()
}

fn area_ratio(phi: f64) -> f64 {
    let s = (0.5 * phi).sin();
    if phi < 1e-3 {
        // (phi - sin phi)/(8 sin^2(phi/2)) = phi/12 + phi^3/360 + ...
        return phi / 12.0 + phi.powi(3) / 360.0;
    }
    (phi - phi.sin()) / (8.0 * s * s)
}

/// Lebesgue volume of the unit ball {|z|_N < 1}.
pub fn n_unit_ball_volume(g: &GroupDescriptor) -> f64 {
    match g.kind {
        GroupKind::Abelian(q) => {
            // pi^{q/2} / Gamma(q/2 + 1)
            let mut gamma = if q % 2 == 0 { 1.0 } else { PI.sqrt() / 2.0 };
            let mut a = if q % 2 == 0 { 1.0 } else { 1.5 };
            while a < q as f64 / 2.0 + 1.0 - 1e-9 {
                gamma *= a;
                a += 1.0;
            }
            PI.powf(q as f64 / 2.0) / gamma
        }
        GroupKind::Heisenberg1 => {
            // unit sphere by turning angle phi in [0, 2 pi]:
            // r = 2 sin(phi/2)/phi, w = (phi - sin phi)/(2 phi^2); volume = -4 pi int r w dr
            let rule = GaussLegendre::new(20);
            let s: f64 = composite(&rule, 0.0, 2.0 * PI, 16)
                .into_iter()
                .map(|(p, wt)| {
                    let r = 2.0 * (0.5 * p).sin() / p;
                    let w = (p - p.sin()) / (2.0 * p * p);
                    let dr = (0.5 * p).cos() / p - 2.0 * (0.5 * p).sin() / (p * p);
                    wt * r * w * dr
                })
                .sum();
            -4.0 * PI * s
        }
    }
}

fn solve_turning_angle(target: f64) -> f64 {
    let mut lo = 0.0;
    let mut hi = 2.0 * PI;
    let mut phi = (12.0 * target).min(PI);
    for _ in 0..200 {
        let f = area_ratio(phi) - target;
        if f > 0.0 {
            hi = phi;
        } else {
            lo = phi;
        }
        let h = 1e-7 * phi.max(1e-3);
        let d = (area_ratio(phi + h) - area_ratio(phi - h)) / (2.0 * h);
        let mut next = phi - f / d;
        if !(next > lo && next < hi) || !next.is_finite() {
            next = 0.5 * (lo + hi);
        }
        if (next - phi).abs() < 1e-15 * (1.0 + phi) || hi - lo < 1e-15 {
            return next;
        }
        phi = next;
    }
    phi
}

fn check_time(s: f64) -> Result<()> {
    if !(s > 0.0) || !s.is_finite() {
        return invalid(format!("time must be positive, got {s}"));
    }
    Ok(())
}

pub fn n_heat(s: f64, z: &PointN, g: &GroupDescriptor) -> Result<f64> {
    check_time(s)?;
    z.check(g)?;
    Ok(match g.kind {
        GroupKind::Abelian(q) => {
            let r2: f64 = z.coords().iter().map(|x| x * x).sum();
            (4.0 * PI * s).powf(-(q as f64) / 2.0) * (-r2 / (4.0 * s)).exp()
        }
        GroupKind::Heisenberg1 => {
            let c = z.coords();
            gaveau::<f64>(s, c[0], c[1], c[2])
        }
    })
}

/// Gaveau representation of the Heisenberg heat kernel for the sub-Laplacian
/// -(X_1^2 + X_2^2), X_1 = d_x - (y/2) d_w, X_2 = d_y + (x/2) d_w:
/// p_s = (4 pi^2 s^2)^{-1} int_0^inf (tau/sinh tau) exp(-tau coth tau |z|^2/4s) cos(tau w/s) dtau.
pub fn gaveau<T: Scalar>(s: f64, x: T, y: T, w: T) -> T {
    let a = (x * x + y * y) / (4.0 * s);
    let a0 = a.base();
    let om = (w.base() / s).abs();
    let mut tau_max: f64 = 40.0;
    if a0 > 1.0 {
        tau_max = tau_max.min((120.0 / a0).sqrt().max(40.0 / a0) + 1.0);
    }
    let width = (2.0f64).min(2.0 * PI / om.max(1e-300));
    let panels = (tau_max / width).ceil().max(4.0) as usize;
    let rule = gl16();
    let mut acc = T::cst(0.0);
    for (tau, wt) in composite(rule, 0.0, tau_max, panels) {
        // tau coth tau - 1, accurate near 0
        let k = if tau < 1e-3 {
            tau * tau / 3.0 - tau.powi(4) / 45.0
        } else {
            tau / tau.tanh() - 1.0
        };
        let ratio = if tau < 1e-8 { 1.0 } else { tau / tau.sinh() };
        acc = acc + (-(a * k)).exp() * (w * (tau / s)).cos() * (wt * ratio);
    }
    acc * (-a).exp() / (4.0 * PI * PI * s * s)
}

fn gl16() -> &'static GaussLegendre {
    use std::sync::OnceLock;
    static R: OnceLock<GaussLegendre> = OnceLock::new();
    R.get_or_init(|| GaussLegendre::new(16))
}

/// Probabilists' Hermite polynomial He_k.
pub fn hermite(k: usize, x: f64) -> f64 {
    let mut h0 = 1.0;
    if k == 0 {
        return h0;
    }
    let mut h1 = x;
    for n in 1..k {
        let h2 = x * h1 - n as f64 * h0;
        h0 = h1;
        h1 = h2;
    }
    h1
}

/// Coefficients of He_k, low order first.
pub fn hermite_coeffs(k: usize) -> Vec<f64> {
    match k {
        0 => vec![1.0],
        1 => vec![0.0, 1.0],
        2 => vec![-1.0, 0.0, 1.0],
        3 => vec![0.0, -3.0, 0.0, 1.0],
        4 => vec![3.0, 0.0, -6.0, 0.0, 1.0],
        5 => vec![0.0, 15.0, 0.0, -10.0, 0.0, 1.0],
        6 => vec![-15.0, 0.0, 45.0, 0.0, -15.0, 0.0, 1.0],
        _ => panic!("Hermite order above 6 not needed"),
    }
}

fn check_word(w: &MultiIndex, g: &GroupDescriptor) -> Result<()> {
    if w.word.iter().any(|&j| j == 0 || j > g.q) {
        return invalid(format!("multi-index entries must lie in 1..={}", g.q));
    }
    Ok(())
}

/// Per-coordinate derivative counts of alpha followed by beta (abelian N).
pub fn derivative_counts(alpha: &MultiIndex, beta: &MultiIndex, q: usize) -> Vec<usize> {
    let mut k = vec![0; q];
    for &j in alpha.word.iter().chain(beta.word.iter()) {
        k[j - 1] += 1;
    }
    k
}

/// X^alpha (X^beta h_s^N)^* at z.
pub fn n_heat_derivative(
    alpha: &MultiIndex,
    beta: &MultiIndex,
    s: f64,
    z: &PointN,
    g: &GroupDescriptor,
) -> Result<f64> {
    check_time(s)?;
    z.check(g)?;
    check_word(alpha, g)?;
    check_word(beta, g)?;
    if alpha.len() + beta.len() > 3 {
        return invalid("total derivative order above 3");
    }
    Ok(match g.kind {
        GroupKind::Abelian(q) => abelian_heat_derivative(alpha, beta, s, z.coords(), q),
        GroupKind::Heisenberg1 => {
            let ops: Vec<NOp> = alpha
                .word
                .iter()
                .map(|&j| NOp::Deriv(j))
                .chain(std::iter::once(NOp::Star))
                .chain(beta.word.iter().map(|&j| NOp::Deriv(j)))
                .collect();
            eval_n_program(g, &ops, z.coords(), |c| gaveau(s, c[0], c[1], c[2]))
        }
    })
}

/// Abelian closed form: (-1)^{|beta|} d^{alpha+beta} h_s, with Hermite factors.
pub fn abelian_heat_derivative(
    alpha: &MultiIndex,
    beta: &MultiIndex,
    s: f64,
    z: &[f64],
    q: usize,
) -> f64 {
    let k = derivative_counts(alpha, beta, q);
    let sc = (2.0 * s).sqrt();
    let mut v = (4.0 * PI * s).powf(-(q as f64) / 2.0);
    let mut r2 = 0.0;
    for i in 0..q {
        r2 += z[i] * z[i];
        if k[i] > 0 {
            v *= (-1.0 / sc).powi(k[i] as i32) * hermite(k[i], z[i] / sc);
        }
    }
    if beta.len() % 2 == 1 {
        v = -v;
    }
    v * (-r2 / (4.0 * s)).exp()
}

/// Operation in a derivative program on N, outermost first.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NOp {
    Deriv(usize),
    Star,
}

/// Evaluates a composition of left-invariant derivatives and involutions on
/// N applied to `base`, by nested dual numbers.
pub fn eval_n_program<F: Fn(&[D3]) -> D3>(
    g: &GroupDescriptor,
    ops: &[NOp],
    z: &[f64],
    base: F,
) -> f64 {
    let d = g.dim();
    let mut p: Vec<D3> = z.iter().map(|&x| d3_const(x)).collect();
    let mut level = 0;
    let mut tmp = p.clone();
    for op in ops {
        match *op {
            NOp::Deriv(j) => {
                let mut e = vec![d3_const(0.0); d];
                e[j - 1] = d3_seed(0.0, level);
                level += 1;
                mul_generic(g.kind, &p, &e, &mut tmp);
                p.copy_from_slice(&tmp);
            }
            NOp::Star => {
                for x in p.iter_mut() {
                    *x = -*x;
                }
            }
        }
    }
    d3_coeff(&base(&p), level)
}

/// || |.|_N^{2 gamma} X^alpha (X^beta h_s^N)^* ||_{L^1(N)}: one quadrature at
/// s = 1 and the homogeneity factor s^{gamma - (|alpha|+|beta|)/2}.
pub fn n_weighted_l1(
    alpha: &MultiIndex,
    beta: &MultiIndex,
    gamma: f64,
    s: f64,
    g: &GroupDescriptor,
) -> Result<f64> {
    check_time(s)?;
    if !(0.0..=0.5).contains(&gamma) {
        return invalid(format!("gamma must lie in [0, 1/2], got {gamma}"));
    }
    let unit = n_weighted_l1_direct(alpha, beta, gamma, 1.0, g)?;
    let order = (alpha.len() + beta.len()) as f64;
    Ok(unit * s.powf(gamma - order / 2.0))
}

/// Direct quadrature at time `s` (no scaling shortcut).
pub fn n_weighted_l1_direct(
    alpha: &MultiIndex,
    beta: &MultiIndex,
    gamma: f64,
    s: f64,
    g: &GroupDescriptor,
) -> Result<f64> {
    check_time(s)?;
    check_word(alpha, g)?;
    check_word(beta, g)?;
    let rule = GaussLegendre::new(20);
    match g.kind {
        GroupKind::Abelian(q) => {
            let k = derivative_counts(alpha, beta, q);
            let sc = (2.0 * s).sqrt();
            let reach = 16.0 * s.sqrt();
            // breakpoints at the zeros of each Hermite factor and at 0
            let axes: Vec<Vec<(f64, f64)>> = (0..q)
                .map(|i| {
                    let mut br = vec![-reach, 0.0, reach];
                    br.extend(hermite_zeros(k[i]).into_iter().map(|x| x * sc));
                    br.sort_by(|a, b| a.partial_cmp(b).unwrap());
                    br.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
                    let mut fine = Vec::new();
                    for w in br.windows(2) {
                        let n = ((w[1] - w[0]) / (0.5 * s.sqrt())).ceil().max(1.0) as usize;
                        for p in 0..=n {
                            fine.push(w[0] + (w[1] - w[0]) * p as f64 / n as f64);
                        }
                    }
                    fine.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
                    composite_breaks(&rule, &fine)
                })
                .collect();
            let mut idx = vec![0usize; q];
            let mut total = 0.0;
            let mut z = vec![0.0; q];
            loop {
                let mut w = 1.0;
                for i in 0..q {
                    z[i] = axes[i][idx[i]].0;
                    w *= axes[i][idx[i]].1;
                }
                let r2: f64 = z.iter().map(|x| x * x).sum();
                let v = abelian_heat_derivative(alpha, beta, s, &z, q).abs();
                total += w * v * if gamma > 0.0 { r2.powf(gamma) } else { 1.0 };
                let mut i = 0;
                loop {
                    if i == q {
                        return Ok(total);
                    }
                    idx[i] += 1;
                    if idx[i] < axes[i].len() {
                        break;
                    }
                    idx[i] = 0;
                    i += 1;
                }
            }
        }
        GroupKind::Heisenberg1 => {
            let rs = s.sqrt();
            let xs = composite(&rule, -9.0 * rs, 9.0 * rs, 12);
            let ws = composite(&rule, -24.0 * s, 24.0 * s, 24);
            let ops: Vec<NOp> = alpha
                .word
                .iter()
                .map(|&j| NOp::Deriv(j))
                .chain(std::iter::once(NOp::Star))
                .chain(beta.word.iter().map(|&j| NOp::Deriv(j)))
                .collect();
            let mut total = 0.0;
            for &(x, wx) in &xs {
                for &(y, wy) in &xs {
                    for &(w, ww) in &ws {
                        let v = eval_n_program(g, &ops, &[x, y, w], |c| {
                            gaveau(s, c[0], c[1], c[2])
                        });
                        let weight = if gamma > 0.0 {
                            heisenberg_cc_norm((x * x + y * y).sqrt(), w).powf(2.0 * gamma)
                        } else {
                            1.0
                        };
                        total += wx * wy * ww * v.abs() * weight;
                    }
                }
            }
            Ok(total)
        }
    }
}

fn hermite_zeros(k: usize) -> Vec<f64> {
    match k {
        0 => vec![],
        1 => vec![0.0],
        2 => vec![-1.0, 1.0],
        3 => vec![-(3f64.sqrt()), 0.0, 3f64.sqrt()],
        _ => vec![],
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn heisenberg_norm_limits() {
        assert!((heisenberg_cc_norm(0.0, 1.0) - (4.0 * PI).sqrt()).abs() < 1e-12);
        assert!((heisenberg_cc_norm(2.0, 0.0) - 2.0).abs() < 1e-15);
        // continuity at r -> 0
        let a = heisenberg_cc_norm(1e-6, 1.0);
        assert!((a - (4.0 * PI).sqrt()).abs() < 1e-5);
    }

    #[test]
    fn hermite_matches_coeffs() {
        for k in 0..=6 {
            let c = hermite_coeffs(k);
            let x: f64 = 0.37;
            let p: f64 = c.iter().enumerate().map(|(i, a)| a * x.powi(i as i32)).sum();
            assert!((p - hermite(k, x)).abs() < 1e-12);
        }
    }
}
