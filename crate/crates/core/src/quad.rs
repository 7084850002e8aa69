//! Adaptive Gauss–Kronrod (7/15) quadrature with QUADPACK-style error
//! estimates and a global bisection strategy.

use crate::error::{Error, Result};
use std::collections::BinaryHeap;

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_225,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_18,
    0.140_653_259_715_525_92,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_83,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_94,
    0.417_959_183_673_469_4,
];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub error: f64,
    pub evals: usize,
}

#[derive(Debug, Clone, Copy)]
pub struct Tol {
    pub abs: f64,
    pub rel: f64,
    pub max_intervals: usize,
}

impl Tol {
    pub fn abs(abs: f64) -> Self {
        Tol { abs, rel: 0.0, max_intervals: 4000 }
    }
    pub fn with_rel(mut self, rel: f64) -> Self {
        self.rel = rel;
        self
    }
    pub fn with_limit(mut self, n: usize) -> Self {
        self.max_intervals = n;
        self
    }
}

fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut rk = fc * WGK[7];
    let mut rg = fc * WG[3];
    let mut rabs = rk.abs();
    let mut fv1 = [0.0; 7];
    let mut fv2 = [0.0; 7];
    for j in 0..7 {
        let dx = h * XGK[j];
        let f1 = f(c - dx);
        let f2 = f(c + dx);
        fv1[j] = f1;
        fv2[j] = f2;
        rk += WGK[j] * (f1 + f2);
        rabs += WGK[j] * (f1.abs() + f2.abs());
        if j % 2 == 1 {
            rg += WG[j / 2] * (f1 + f2);
        }
    }
    let mean = 0.5 * rk;
    let mut rasc = WGK[7] * (fc - mean).abs();
    for j in 0..7 {
        rasc += WGK[j] * ((fv1[j] - mean).abs() + (fv2[j] - mean).abs());
    }
    let result = rk * h;
    let resabs = rabs * h.abs();
    let resasc = rasc * h.abs();
    let mut err = ((rk - rg) * h).abs();
    if resasc != 0.0 && err != 0.0 {
        err = resasc * (200.0 * err / resasc).powf(1.5).min(1.0);
    }
    let floor = 50.0 * f64::EPSILON * resabs;
    if resabs > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
        err = err.max(floor);
    }
    (result, err, floor)
}

struct Piece {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
    floor: f64,
}

impl PartialEq for Piece {
    fn eq(&self, o: &Self) -> bool {
        self.error == o.error
    }
}
impl Eq for Piece {}
impl PartialOrd for Piece {
    fn partial_cmp(&self, o: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(o))
    }
}
impl Ord for Piece {
    fn cmp(&self, o: &Self) -> std::cmp::Ordering {
        self.error.total_cmp(&o.error)
    }
}

/// Integrate `f` over `[a, b]` until the global error estimate meets `tol`.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: Tol) -> Result<Estimate> {
    if a == b {
        return Ok(Estimate { value: 0.0, error: 0.0, evals: 0 });
    }
    let (v, e, fl) = gk15(&f, a, b);
    let mut heap = BinaryHeap::new();
    heap.push(Piece { a, b, value: v, error: e, floor: fl });
    let mut floor = fl;
    let mut total = v;
    let mut err = e;
    let mut evals = 15;
    loop {
        let target = tol.abs.max(tol.rel * total.abs()).max(2.0 * floor);
        if !total.is_finite() {
            return Err(Error::NoConvergence(format!("non-finite integrand on [{a}, {b}]")));
        }
        if err <= target {
            // re-sum to shed accumulated rounding in the running totals
            let (mut v, mut e) = (0.0, 0.0);
            for p in heap.iter() {
                v += p.value;
                e += p.error;
            }
            return Ok(Estimate { value: v, error: e, evals });
        }
        if heap.len() >= tol.max_intervals {
            return Err(Error::NoConvergence(format!(
                "{} subintervals on [{a}, {b}], error {err:e} > {target:e}",
                heap.len()
            )));
        }
        let p = heap.pop().expect("non-empty");
        let m = 0.5 * (p.a + p.b);
        if m <= p.a.min(p.b) || m >= p.a.max(p.b) {
            return Err(Error::NoConvergence(format!("interval collapsed near {m}")));
        }
        let (v1, e1, f1) = gk15(&f, p.a, m);
        let (v2, e2, f2) = gk15(&f, m, p.b);
        floor += f1 + f2 - p.floor;
        evals += 30;
        total += v1 + v2 - p.value;
        err += e1 + e2 - p.error;
        heap.push(Piece { a: p.a, b: m, value: v1, error: e1, floor: f1 });
        heap.push(Piece { a: m, b: p.b, value: v2, error: e2, floor: f2 });
    }
}

/// Integrate over `[a, ∞)` through x = a + t/(1 − t).
pub fn integrate_to_infinity<F: Fn(f64) -> f64>(f: F, a: f64, tol: Tol) -> Result<Estimate> {
    integrate(
        |t: f64| {
            let om = 1.0 - t;
            let x = a + t / om;
            let y = f(x);
            if y == 0.0 { 0.0 } else { y / (om * om) }
        },
        0.0,
        1.0,
        tol,
    )
}

/// Fixed n-point Gauss–Legendre nodes and weights on [-1, 1].
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * z * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 0 { 1.0 } else if n == 1 { z } else { p1 };
            let pm = if n == 1 { 1.0 } else { p0 };
            dp = nf * (z * pn - pm) / (z * z - 1.0);
            let dz = pn / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    (x, w)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_exact() {
        let e = integrate(|x| x * x * x - 2.0 * x, 0.0, 3.0, Tol::abs(1e-13)).unwrap();
        assert!((e.value - (81.0 / 4.0 - 9.0)).abs() < 1e-12);
    }

    #[test]
    fn log_endpoint_singularity() {
        let e = integrate(|x: f64| x.ln(), 0.0, 1.0, Tol::abs(1e-12)).unwrap();
        assert!((e.value + 1.0).abs() < 1e-11, "{}", e.value);
    }

    #[test]
    fn half_line() {
        let e = integrate_to_infinity(|x: f64| (-x).exp(), 0.0, Tol::abs(1e-13)).unwrap();
        assert!((e.value - 1.0).abs() < 1e-12);
    }

    #[test]
    fn interval_limit_reports_no_convergence() {
        let r = integrate(|x: f64| (1.0 / x).sin() / x, 1e-9, 1.0, Tol::abs(1e-14).with_limit(20));
        assert!(matches!(r, Err(Error::NoConvergence(_))));
    }

    #[test]
    fn gauss_legendre_weights() {
        for n in [1, 2, 5, 8, 20] {
            let (x, w) = gauss_legendre(n);
            let s: f64 = w.iter().sum();
            assert!((s - 2.0).abs() < 1e-13);
            let m4: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(4)).sum();
            if n >= 3 {
                assert!((m4 - 0.4).abs() < 1e-13);
            }
        }
    }
}
