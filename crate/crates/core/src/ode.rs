//! Fixed-step classical Runge–Kutta for small autonomous-in-form systems,
//! and cubic Hermite interpolation on stored trajectories.

pub fn rk4_step<const N: usize, F>(f: &F, t: f64, y: &[f64; N], h: f64) -> [f64; N]
where
    F: Fn(f64, &[f64; N]) -> [f64; N],
{
    let k1 = f(t, y);
    let mut tmp = [0.0; N];
    for i in 0..N {
        tmp[i] = y[i] + 0.5 * h * k1[i];
    }
    let k2 = f(t + 0.5 * h, &tmp);
    for i in 0..N {
        tmp[i] = y[i] + 0.5 * h * k2[i];
    }
    let k3 = f(t + 0.5 * h, &tmp);
    for i in 0..N {
        tmp[i] = y[i] + h * k3[i];
    }
    let k4 = f(t + h, &tmp);
    let mut out = [0.0; N];
    for i in 0..N {
        out[i] = y[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    out
}

/// Cubic Hermite interpolation between (t0, y0, d0) and (t1, y1, d1).
#[inline]
pub fn hermite(t0: f64, t1: f64, y0: f64, y1: f64, d0: f64, d1: f64, t: f64) -> f64 {
    let h = t1 - t0;
    let s = (t - t0) / h;
    let s2 = s * s;
    let s3 = s2 * s;
    let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
    let h10 = s3 - 2.0 * s2 + s;
    let h01 = -2.0 * s3 + 3.0 * s2;
    let h11 = s3 - s2;
    h00 * y0 + h10 * h * d0 + h01 * y1 + h11 * h * d1
}

/// Derivative of the Hermite cubic.
#[inline]
pub fn hermite_deriv(t0: f64, t1: f64, y0: f64, y1: f64, d0: f64, d1: f64, t: f64) -> f64 {
    let h = t1 - t0;
    let s = (t - t0) / h;
    let s2 = s * s;
    let a = (6.0 * s2 - 6.0 * s) / h;
    let b = 3.0 * s2 - 4.0 * s + 1.0;
    let c = (-6.0 * s2 + 6.0 * s) / h;
    let d = 3.0 * s2 - 2.0 * s;
    a * y0 + b * d0 + c * y1 + d * d1
}

/// Index i with xs[i] <= x < xs[i+1], clamped to valid cells.
#[inline]
pub fn locate(xs: &[f64], x: f64) -> usize {
    let n = xs.len();
    if x <= xs[0] {
        return 0;
    }
    if x >= xs[n - 1] {
        return n - 2;
    }
    xs.partition_point(|&v| v <= x).saturating_sub(1).min(n - 2)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rk4_exponential() {
        let f = |_t: f64, y: &[f64; 1]| [y[0]];
        let mut y = [1.0];
        let h = 1e-3;
        for i in 0..1000 {
            y = rk4_step(&f, i as f64 * h, &y, h);
        }
        assert!((y[0] - 1f64.exp()).abs() < 1e-12);
    }

    #[test]
    fn hermite_reproduces_cubics() {
        let p = |x: f64| x * x * x - 2.0 * x + 1.0;
        let dp = |x: f64| 3.0 * x * x - 2.0;
        let (a, b) = (0.3, 1.1);
        for k in 0..=10 {
            let t = a + (b - a) * k as f64 / 10.0;
            assert!((hermite(a, b, p(a), p(b), dp(a), dp(b), t) - p(t)).abs() < 1e-14);
            assert!((hermite_deriv(a, b, p(a), p(b), dp(a), dp(b), t) - dp(t)).abs() < 1e-13);
        }
    }

    #[test]
    fn locate_cells() {
        let xs = [0.0, 1.0, 2.0, 3.0];
        assert_eq!(locate(&xs, -1.0), 0);
        assert_eq!(locate(&xs, 0.5), 0);
        assert_eq!(locate(&xs, 1.0), 1);
        assert_eq!(locate(&xs, 2.9), 2);
        assert_eq!(locate(&xs, 3.0), 2);
    }
}
