//! Second-order forward-mode jets in two variables: value, gradient and
//! Hessian propagated through arithmetic, so Laplacians of closed-form
//! expressions come out exactly.

use std::ops::{Add, Div, Mul, Neg, Sub};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Jet2 {
    pub v: f64,
    pub g: [f64; 2],
    /// h11, h12, h22
    pub h: [f64; 3],
}

impl Jet2 {
    pub fn constant(v: f64) -> Self {
        Jet2 { v, g: [0.0; 2], h: [0.0; 3] }
    }

    pub fn vars(x: [f64; 2]) -> (Self, Self) {
        (
            Jet2 { v: x[0], g: [1.0, 0.0], h: [0.0; 3] },
            Jet2 { v: x[1], g: [0.0, 1.0], h: [0.0; 3] },
        )
    }

    pub fn laplacian(&self) -> f64 {
        self.h[0] + self.h[2]
    }

    /// Apply a scalar function given f, f', f'' at the current value.
    pub fn compose(self, f: f64, df: f64, d2f: f64) -> Self {
        let g = self.g;
        Jet2 {
            v: f,
            g: [df * g[0], df * g[1]],
            h: [
                d2f * g[0] * g[0] + df * self.h[0],
                d2f * g[0] * g[1] + df * self.h[1],
                d2f * g[1] * g[1] + df * self.h[2],
            ],
        }
    }

    pub fn ln(self) -> Self {
        let x = self.v;
        self.compose(x.ln(), 1.0 / x, -1.0 / (x * x))
    }

    pub fn exp(self) -> Self {
        let e = self.v.exp();
        self.compose(e, e, e)
    }

    pub fn sqrt(self) -> Self {
        let s = self.v.sqrt();
        self.compose(s, 0.5 / s, -0.25 / (s * self.v))
    }

    pub fn scale(self, c: f64) -> Self {
        Jet2 { v: c * self.v, g: [c * self.g[0], c * self.g[1]], h: [c * self.h[0], c * self.h[1], c * self.h[2]] }
    }
}

impl Add for Jet2 {
    type Output = Jet2;
    fn add(self, o: Jet2) -> Jet2 {
        Jet2 {
            v: self.v + o.v,
            g: [self.g[0] + o.g[0], self.g[1] + o.g[1]],
            h: [self.h[0] + o.h[0], self.h[1] + o.h[1], self.h[2] + o.h[2]],
        }
    }
}

impl Sub for Jet2 {
    type Output = Jet2;
    fn sub(self, o: Jet2) -> Jet2 {
        self + (-o)
    }
}

impl Neg for Jet2 {
    type Output = Jet2;
    fn neg(self) -> Jet2 {
        self.scale(-1.0)
    }
}

impl Mul for Jet2 {
    type Output = Jet2;
    fn mul(self, o: Jet2) -> Jet2 {
        let (a, b) = (self, o);
        Jet2 {
            v: a.v * b.v,
            g: [a.g[0] * b.v + a.v * b.g[0], a.g[1] * b.v + a.v * b.g[1]],
            h: [
                a.h[0] * b.v + 2.0 * a.g[0] * b.g[0] + a.v * b.h[0],
                a.h[1] * b.v + a.g[0] * b.g[1] + a.g[1] * b.g[0] + a.v * b.h[1],
                a.h[2] * b.v + 2.0 * a.g[1] * b.g[1] + a.v * b.h[2],
            ],
        }
    }
}

impl Div for Jet2 {
    type Output = Jet2;
    fn div(self, o: Jet2) -> Jet2 {
        let x = o.v;
        self * o.compose(1.0 / x, -1.0 / (x * x), 2.0 / (x * x * x))
    }
}

impl Add<f64> for Jet2 {
    type Output = Jet2;
    fn add(mut self, c: f64) -> Jet2 {
        self.v += c;
        self
    }
}

impl Mul<f64> for Jet2 {
    type Output = Jet2;
    fn mul(self, c: f64) -> Jet2 {
        self.scale(c)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn laplacian_of_log_radius_vanishes() {
        let (x, y) = Jet2::vars([0.3, -0.7]);
        let r2 = x * x + y * y;
        let f = r2.ln();
        assert!(f.laplacian().abs() < 1e-13);
    }

    #[test]
    fn product_and_quotient() {
        let (x, y) = Jet2::vars([1.2, 0.5]);
        let f = (x * y) / (x + y * y);
        let h = 1e-4;
        let e = |a: f64, b: f64| a * b / (a + b * b);
        let fd11 = (e(1.2 + h, 0.5) - 2.0 * e(1.2, 0.5) + e(1.2 - h, 0.5)) / (h * h);
        assert!((f.h[0] - fd11).abs() < 1e-6);
        let fd12 = (e(1.2 + h, 0.5 + h) - e(1.2 + h, 0.5 - h) - e(1.2 - h, 0.5 + h) + e(1.2 - h, 0.5 - h))
            / (4.0 * h * h);
        assert!((f.h[1] - fd12).abs() < 1e-6);
    }
}
