//! Forward-mode differentiation.
//!
//! `Dual<T>` nests, so `Dual<Dual<f64>>` carries mixed second derivatives and
//! field compositions like X_0 (X_1 f)^* are differentiated exactly.
//! `Jet<N>` is a truncated Taylor series in one variable.

use std::ops::{Add, Div, Mul, Neg, Sub};

pub trait Scalar:
    Copy
    + std::fmt::Debug
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + Add<f64, Output = Self>
    + Sub<f64, Output = Self>
    + Mul<f64, Output = Self>
    + Div<f64, Output = Self>
{
    fn cst(x: f64) -> Self;
    /// Value with every infinitesimal part dropped.
    fn base(&self) -> f64;
    fn exp(self) -> Self;
    fn ln(self) -> Self;
    fn sqrt(self) -> Self;
    fn sin(self) -> Self;
    fn cos(self) -> Self;
    /// Apply a univariate function given its derivatives at `self.base()`:
    /// `d[k] = f^{(k)}(x0)`. Needs `d.len() > depth`.
    fn compose(self, d: &[f64]) -> Self;

    fn sinh(self) -> Self {
        let e = self.exp();
        (e - Self::cst(1.0) / e) * 0.5
    }
    fn cosh(self) -> Self {
        let e = self.exp();
        (e + Self::cst(1.0) / e) * 0.5
    }
    fn powi(self, n: i32) -> Self {
        if n == 0 {
            return Self::cst(1.0);
        }
        let mut r = self;
        for _ in 1..n.abs() {
            r = r * self;
        }
        if n < 0 {
            Self::cst(1.0) / r
        } else {
            r
        }
    }
    fn sq(self) -> Self {
        self * self
    }
}

impl Scalar for f64 {
    fn cst(x: f64) -> Self {
        x
    }
    fn base(&self) -> f64 {
        *self
    }
    fn exp(self) -> Self {
        f64::exp(self)
    }
    fn ln(self) -> Self {
        f64::ln(self)
    }
    fn sqrt(self) -> Self {
        f64::sqrt(self)
    }
    fn sin(self) -> Self {
        f64::sin(self)
    }
    fn cos(self) -> Self {
        f64::cos(self)
    }
    fn sinh(self) -> Self {
        f64::sinh(self)
    }
    fn cosh(self) -> Self {
        f64::cosh(self)
    }
    fn compose(self, d: &[f64]) -> Self {
        d[0]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dual<T> {
    pub re: T,
    pub eps: T,
}

impl<T: Scalar> Dual<T> {
    pub fn new(re: T, eps: T) -> Self {
        Dual { re, eps }
    }
    pub fn var(re: T) -> Self {
        Dual { re, eps: T::cst(1.0) }
    }
    pub fn konst(re: T) -> Self {
        Dual { re, eps: T::cst(0.0) }
    }
}

impl<T: Scalar> Add for Dual<T> {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Dual::new(self.re + o.re, self.eps + o.eps)
    }
}
impl<T: Scalar> Sub for Dual<T> {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        Dual::new(self.re - o.re, self.eps - o.eps)
    }
}
impl<T: Scalar> Mul for Dual<T> {
    type Output = Self;
    fn mul(self, o: Self) -> Self {
        Dual::new(self.re * o.re, self.re * o.eps + self.eps * o.re)
    }
}
impl<T: Scalar> Div for Dual<T> {
    type Output = Self;
    fn div(self, o: Self) -> Self {
        let inv = T::cst(1.0) / o.re;
        let q = self.re * inv;
        Dual::new(q, (self.eps - q * o.eps) * inv)
    }
}
impl<T: Scalar> Neg for Dual<T> {
    type Output = Self;
    fn neg(self) -> Self {
        Dual::new(-self.re, -self.eps)
    }
}
impl<T: Scalar> Add<f64> for Dual<T> {
    type Output = Self;
    fn add(self, o: f64) -> Self {
        Dual::new(self.re + o, self.eps)
    }
}
impl<T: Scalar> Sub<f64> for Dual<T> {
    type Output = Self;
    fn sub(self, o: f64) -> Self {
        Dual::new(self.re - o, self.eps)
    }
}
impl<T: Scalar> Mul<f64> for Dual<T> {
    type Output = Self;
    fn mul(self, o: f64) -> Self {
        Dual::new(self.re * o, self.eps * o)
    }
}
impl<T: Scalar> Div<f64> for Dual<T> {
    type Output = Self;
    fn div(self, o: f64) -> Self {
        Dual::new(self.re / o, self.eps / o)
    }
}

impl<T: Scalar> Scalar for Dual<T> {
    fn cst(x: f64) -> Self {
        Dual::konst(T::cst(x))
    }
    fn base(&self) -> f64 {
        self.re.base()
    }
    fn exp(self) -> Self {
        let e = self.re.exp();
        Dual::new(e, e * self.eps)
    }
    fn ln(self) -> Self {
        Dual::new(self.re.ln(), self.eps / self.re)
    }
    fn sqrt(self) -> Self {
        let s = self.re.sqrt();
        Dual::new(s, self.eps / (s * 2.0))
    }
    fn sin(self) -> Self {
        Dual::new(self.re.sin(), self.re.cos() * self.eps)
    }
    fn cos(self) -> Self {
        Dual::new(self.re.cos(), -(self.re.sin() * self.eps))
    }
    fn sinh(self) -> Self {
        Dual::new(self.re.sinh(), self.re.cosh() * self.eps)
    }
    fn cosh(self) -> Self {
        Dual::new(self.re.cosh(), self.re.sinh() * self.eps)
    }
    fn compose(self, d: &[f64]) -> Self {
        Dual::new(self.re.compose(d), self.re.compose(&d[1..]) * self.eps)
    }
}

/// Truncated Taylor series: `c[k]` is the k-th Taylor coefficient.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Jet<const N: usize> {
    pub c: [f64; N],
}

impl<const N: usize> Jet<N> {
    pub fn cst(x: f64) -> Self {
        let mut c = [0.0; N];
        c[0] = x;
        Jet { c }
    }
    /// The independent variable at `x`.
    pub fn var(x: f64) -> Self {
        let mut c = [0.0; N];
        c[0] = x;
        if N > 1 {
            c[1] = 1.0;
        }
        Jet { c }
    }
    /// Derivatives f^{(k)} = k! c_k.
    pub fn derivatives(&self) -> [f64; N] {
        let mut out = self.c;
        let mut f = 1.0;
        for (k, v) in out.iter_mut().enumerate() {
            if k > 0 {
                f *= k as f64;
            }
            *v *= f;
        }
        out
    }
    pub fn scale(self, s: f64) -> Self {
        let mut c = self.c;
        c.iter_mut().for_each(|v| *v *= s);
        Jet { c }
    }
    pub fn recip(self) -> Self {
        let mut r = [0.0; N];
        r[0] = 1.0 / self.c[0];
        for k in 1..N {
            let mut s = 0.0;
            for j in 1..=k {
                s += self.c[j] * r[k - j];
            }
            r[k] = -s * r[0];
        }
        Jet { c: r }
    }
    pub fn exp(self) -> Self {
        let mut r = [0.0; N];
        r[0] = self.c[0].exp();
        for k in 1..N {
            let mut s = 0.0;
            for j in 1..=k {
                s += j as f64 * self.c[j] * r[k - j];
            }
            r[k] = s / k as f64;
        }
        Jet { c: r }
    }
    pub fn sqrt(self) -> Self {
        let mut r = [0.0; N];
        r[0] = self.c[0].sqrt();
        for k in 1..N {
            let mut s = self.c[k];
            for j in 1..k {
                s -= r[j] * r[k - j];
            }
            r[k] = s / (2.0 * r[0]);
        }
        Jet { c: r }
    }
    /// Antiderivative in the jet variable (valid when self is expanded in
    /// the independent variable), with constant term `c0`.
    pub fn integrate(self, c0: f64) -> Self {
        let mut r = [0.0; N];
        r[0] = c0;
        for k in 1..N {
            r[k] = self.c[k - 1] / k as f64;
        }
        Jet { c: r }
    }
    /// Evaluate a power series sum a_n x^n in jet arithmetic (Horner).
    pub fn poly(self, a: &[f64]) -> Self {
        let mut r = Self::cst(0.0);
        for &an in a.iter().rev() {
            r = r * self + an;
        }
        r
    }
}

impl<const N: usize> Add for Jet<N> {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        let mut c = self.c;
        for k in 0..N {
            c[k] += o.c[k];
        }
        Jet { c }
    }
}
impl<const N: usize> Sub for Jet<N> {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        let mut c = self.c;
        for k in 0..N {
            c[k] -= o.c[k];
        }
        Jet { c }
    }
}
impl<const N: usize> Mul for Jet<N> {
    type Output = Self;
    fn mul(self, o: Self) -> Self {
        let mut c = [0.0; N];
        for i in 0..N {
            for j in 0..N - i {
                c[i + j] += self.c[i] * o.c[j];
            }
        }
        Jet { c }
    }
}
impl<const N: usize> Div for Jet<N> {
    type Output = Self;
    fn div(self, o: Self) -> Self {
        self * o.recip()
    }
}
impl<const N: usize> Add<f64> for Jet<N> {
    type Output = Self;
    fn add(self, o: f64) -> Self {
        let mut c = self.c;
        c[0] += o;
        Jet { c }
    }
}
impl<const N: usize> Mul<f64> for Jet<N> {
    type Output = Self;
    fn mul(self, o: f64) -> Self {
        self.scale(o)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nested_dual_second_derivative() {
        // f(x) = exp(x) sin(x); f'' = 2 exp(x) cos(x)
        let x0 = 0.7;
        let x = Dual::new(Dual::var(x0), Dual::konst(1.0));
        let f = x.exp() * x.sin();
        assert!((f.eps.eps - 2.0 * x0.exp() * x0.cos()).abs() < 1e-13);
        assert!((f.re.eps - x0.exp() * (x0.sin() + x0.cos())).abs() < 1e-13);
    }

    #[test]
    fn compose_matches_direct() {
        let x0 = 1.3;
        let x = Dual::new(Dual::var(x0), Dual::konst(1.0));
        let d = [x0.exp(), x0.exp(), x0.exp()];
        let a = x.compose(&d);
        let b = x.exp();
        assert!((a.eps.eps - b.eps.eps).abs() < 1e-14);
        assert!((a.re.eps - b.re.eps).abs() < 1e-14);
    }

    #[test]
    fn jet_exp_sqrt() {
        let x = Jet::<5>::var(0.4);
        let e = (x * 2.0).exp().derivatives();
        for (k, v) in e.iter().enumerate() {
            assert!((v - 2f64.powi(k as i32) * 0.8f64.exp()).abs() < 1e-12);
        }
        let s = (x.sqrt() * x.sqrt() - x).c;
        assert!(s.iter().all(|v| v.abs() < 1e-14));
        let r = (x * x.recip() + (-1.0)).c;
        assert!(r.iter().all(|v| v.abs() < 1e-14));
    }
}

/// Three nested infinitesimal levels; level 0 is the outermost.
pub type D3 = Dual<Dual<Dual<f64>>>;

pub fn d3_const(x: f64) -> D3 {
    D3::cst(x)
}

/// `x + eps_level`.
pub fn d3_seed(x: f64, level: usize) -> D3 {
    let mut v = D3::cst(x);
    match level {
        0 => v.eps = Dual::cst(1.0),
        1 => v.re.eps = Dual::cst(1.0),
        2 => v.re.re.eps = 1.0,
        _ => panic!("at most three derivative levels"),
    }
    v
}

/// Coefficient of eps_0 * ... * eps_{levels-1}.
pub fn d3_coeff(v: &D3, levels: usize) -> f64 {
    match levels {
        0 => v.re.re.re,
        1 => v.eps.re.re,
        2 => v.eps.eps.re,
        3 => v.eps.eps.eps,
        _ => panic!("at most three derivative levels"),
    }
}

#[cfg(test)]
mod d3_tests {
    use super::*;

    #[test]
    fn mixed_third_derivative() {
        // f(x,y,z) = x y^2 exp(z); d_x d_y d_z at (1,2,0.5) = 2 y exp(z)
        let x = d3_seed(1.0, 0);
        let y = d3_seed(2.0, 1);
        let z = d3_seed(0.5, 2);
        let f = x * y * y * z.exp();
        assert!((d3_coeff(&f, 3) - 4.0 * 0.5f64.exp()).abs() < 1e-13);
    }
}
