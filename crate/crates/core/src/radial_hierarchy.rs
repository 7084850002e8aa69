//! Radial solutions of -Δv - 2e^{2U}v = f on ℝ², the correction hierarchy
//! v₀ → k₀ → s₀, and the expansion constants built from it.
//!
//! For mode 0 the particular solution is written by variation of
//! parameters with the explicit pair u₀, u₁,
//!
//!   v(r) = u₀(r)∫₀^r u₁ t f dt − u₁(r)∫₀^r u₀ t f dt,
//!
//! which vanishes together with its derivative at the origin. The two
//! running integrals are accumulated cell by cell with Gauss–Legendre
//! rules on the profile grid.

use crate::error::{Error, Result};
use crate::jet::Jet2;
use crate::liouville_core::{bubble_radial, e2u_radial};
use crate::ode::{hermite, hermite_deriv, locate, rk4_step};
use crate::quad::{gauss_legendre, integrate, integrate_to_infinity, Tol};
use serde::Serialize;
use std::f64::consts::PI;

/// End of the uniform part of the grid.
pub const UNIFORM_END: f64 = 10.0;
pub const UNIFORM_STEP: f64 = 1e-3;
pub const POINTS_PER_DECADE: usize = 200;
pub const GRID_END: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GrowthBound {
    pub tau: f64,
    pub constant: f64,
    pub fitted_exponent: f64,
    /// Log-log slope over the last decade [r_max/10, r_max].
    pub terminal_exponent: f64,
    pub r_min: f64,
    pub r_max: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct RadialProfile {
    pub grid: Vec<f64>,
    pub values: Vec<f64>,
    /// ∂_r at the grid points.
    pub derivs: Vec<f64>,
    pub farfield_log_coeff: Option<f64>,
    pub farfield_offset: Option<f64>,
    pub derivative_asymptote: Option<f64>,
    /// Relative change of r·∂_r over the last decade of the grid.
    pub farfield_drift: Option<f64>,
    pub bound: Option<GrowthBound>,
    /// First index of the logarithmic part of the grid.
    log_start: usize,
}

/// r = 0, 1e-3, …, 10, then 200 points per decade up to 1e6.
pub fn standard_grid() -> (Vec<f64>, usize) {
    let n_uniform = (UNIFORM_END / UNIFORM_STEP).round() as usize;
    let mut g: Vec<f64> = (0..=n_uniform).map(|i| i as f64 * UNIFORM_STEP).collect();
    let log_start = n_uniform;
    let decades = (GRID_END / UNIFORM_END).log10().round() as usize;
    let n_log = decades * POINTS_PER_DECADE;
    let ds = 10f64.ln() / POINTS_PER_DECADE as f64;
    for k in 1..=n_log {
        g.push(UNIFORM_END * (ds * k as f64).exp());
    }
    (g, log_start)
}

impl RadialProfile {
    fn new(grid: Vec<f64>, values: Vec<f64>, derivs: Vec<f64>, log_start: usize) -> Self {
        RadialProfile {
            grid,
            values,
            derivs,
            farfield_log_coeff: None,
            farfield_offset: None,
            derivative_asymptote: None,
            farfield_drift: None,
            bound: None,
            log_start,
        }
    }

    /// Profile on positive radii, interpolated in log r throughout; below
    /// the first radius the first value is held.
    pub fn from_samples(grid: Vec<f64>, values: Vec<f64>, derivs: Vec<f64>) -> Self {
        assert!(grid.len() >= 2 && grid[0] > 0.0, "sampled profiles need positive radii");
        RadialProfile::new(grid, values, derivs, 0)
    }

    pub fn r_max(&self) -> f64 {
        *self.grid.last().unwrap()
    }

    /// Value at r, cubic Hermite in r on the uniform part and in log r on
    /// the graded part; beyond the grid the fitted a + b log r is used.
    pub fn eval(&self, r: f64) -> f64 {
        self.eval_with_deriv(r).0
    }

    /// (value, ∂_r value).
    pub fn eval_with_deriv(&self, r: f64) -> (f64, f64) {
        let rmax = self.r_max();
        if r > rmax {
            if let (Some(a), Some(b)) = (self.farfield_offset, self.farfield_log_coeff) {
                return (a + b * r.ln(), b / r);
            }
            let n = self.grid.len() - 1;
            return (self.values[n], 0.0);
        }
        let r = r.max(self.grid[0]);
        let i = locate(&self.grid, r);
        let (r0, r1) = (self.grid[i], self.grid[i + 1]);
        if i < self.log_start {
            let v = hermite(r0, r1, self.values[i], self.values[i + 1], self.derivs[i], self.derivs[i + 1], r);
            let d = hermite_deriv(r0, r1, self.values[i], self.values[i + 1], self.derivs[i], self.derivs[i + 1], r);
            (v, d)
        } else {
            let (s0, s1, s) = (r0.ln(), r1.ln(), r.ln());
            let (d0, d1) = (r0 * self.derivs[i], r1 * self.derivs[i + 1]);
            let v = hermite(s0, s1, self.values[i], self.values[i + 1], d0, d1, s);
            let ds = hermite_deriv(s0, s1, self.values[i], self.values[i + 1], d0, d1, s);
            (v, ds / r)
        }
    }

    /// Least-squares fit of a + b log r over r ∈ [r_lo, r_hi] on grid points.
    pub fn fit_log_law(&self, r_lo: f64, r_hi: f64) -> (f64, f64) {
        let pts: Vec<(f64, f64)> = self
            .grid
            .iter()
            .zip(&self.values)
            .filter(|(r, _)| **r >= r_lo * (1.0 - 1e-12) && **r <= r_hi * (1.0 + 1e-12))
            .map(|(r, v)| (r.ln(), *v))
            .collect();
        linear_fit(&pts)
    }

    /// Growth bound |v(r)| ≤ C(1+r)^τ on [r_min, r_max] with the log-log
    /// slope of |v| against 1+r, over the whole window and over its last
    /// decade.
    pub fn growth_bound(&self, tau: f64, r_min: f64, r_max: f64) -> GrowthBound {
        let mut c: f64 = 0.0;
        let mut pts = Vec::new();
        let mut tail = Vec::new();
        for (r, v) in self.grid.iter().zip(&self.values) {
            if *r < r_min || *r > r_max {
                continue;
            }
            c = c.max(v.abs() / (1.0 + r).powf(tau));
            if v.abs() > 0.0 {
                let p = ((1.0 + r).ln(), v.abs().ln());
                pts.push(p);
                if *r >= 0.1 * r_max {
                    tail.push(p);
                }
            }
        }
        let (_, slope) = linear_fit(&pts);
        let (_, terminal) = linear_fit(&tail);
        GrowthBound { tau, constant: c, fitted_exponent: slope, terminal_exponent: terminal, r_min, r_max }
    }

    /// Writes "r,value" rows.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("r,value\n");
        for (r, v) in self.grid.iter().zip(&self.values) {
            s.push_str(&format!("{r:.17e},{v:.17e}\n"));
        }
        s
    }
}

/// Ordinary least squares for y = a + b x; returns (a, b).
pub fn linear_fit(pts: &[(f64, f64)]) -> (f64, f64) {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    let b = sxy / sxx;
    (my - b * mx, b)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Fundamental {
    pub u0: f64,
    pub du0: f64,
    pub d2u0: f64,
    pub u1: f64,
    pub du1: f64,
    pub d2u1: f64,
}

/// u₀ = (4-r²)/(4+r²) and u₁ = ((4-r²)log r + 8)/(r²+4).
pub fn fundamental_solutions(r: f64) -> Result<(f64, f64)> {
    let f = fundamental_with_derivs(r)?;
    Ok((f.u0, f.u1))
}

pub fn fundamental_with_derivs(r: f64) -> Result<Fundamental> {
    if !(r > 1e-300) {
        return Err(Error::NonpositiveRadius(r));
    }
    let r2 = r * r;
    let q = 4.0 + r2;
    let q2 = q * q;
    let q3 = q2 * q;
    let l = r.ln();
    let n = (4.0 - r2) * l + 8.0;
    let dn = -2.0 * r * l + 4.0 / r - r;
    let d2n = -2.0 * l - 3.0 - 4.0 / r2;
    Ok(Fundamental {
        u0: (4.0 - r2) / q,
        du0: -16.0 * r / q2,
        d2u0: -16.0 / q2 + 64.0 * r2 / q3,
        u1: n / q,
        du1: dn / q - 2.0 * r * n / q2,
        d2u1: d2n / q - 4.0 * r * dn / q2 - 2.0 * n / q2 + 8.0 * r2 * n / q3,
    })
}

const GL_NODES: usize = 6;

/// Particular solution of -v'' - v'/r - 2e^{2U}v = f (mode 0) with
/// v(0) = v'(0) = 0, by variation of parameters.
fn vop_mode0<F: Fn(f64) -> f64>(f: &F) -> RadialProfile {
    let (grid, log_start) = standard_grid();
    let (xg, wg) = gauss_legendre(GL_NODES);
    let n = grid.len();
    let mut i0 = vec![0.0; n];
    let mut i1 = vec![0.0; n];
    let (mut a0, mut a1) = (0.0, 0.0);
    for k in 0..n - 1 {
        let (ra, rb) = (grid[k], grid[k + 1]);
        if k < log_start {
            let (c, h) = (0.5 * (ra + rb), 0.5 * (rb - ra));
            for j in 0..GL_NODES {
                let t = c + h * xg[j];
                let fu = fundamental_with_derivs(t).expect("t > 0");
                let tf = t * f(t);
                a0 += h * wg[j] * fu.u0 * tf;
                a1 += h * wg[j] * fu.u1 * tf;
            }
        } else {
            let (sa, sb) = (ra.ln(), rb.ln());
            let (c, h) = (0.5 * (sa + sb), 0.5 * (sb - sa));
            for j in 0..GL_NODES {
                let t = (c + h * xg[j]).exp();
                let fu = fundamental_with_derivs(t).expect("t > 0");
                let ttf = t * t * f(t);
                a0 += h * wg[j] * fu.u0 * ttf;
                a1 += h * wg[j] * fu.u1 * ttf;
            }
        }
        i0[k + 1] = a0;
        i1[k + 1] = a1;
    }
    let mut values = vec![0.0; n];
    let mut derivs = vec![0.0; n];
    for k in 1..n {
        let fu = fundamental_with_derivs(grid[k]).expect("r > 0");
        values[k] = fu.u0 * i1[k] - fu.u1 * i0[k];
        derivs[k] = fu.du0 * i1[k] - fu.du1 * i0[k];
    }
    RadialProfile::new(grid, values, derivs, log_start)
}

/// State (v, v_s) in s = log r for mode m, integrated with RK4 from
/// s = -12 onto the standard grid.
fn integrate_mode<F: Fn(f64) -> f64>(m: u32, f: &F, init: [f64; 2], s_start: f64) -> RadialProfile {
    let (grid, log_start) = standard_grid();
    let m2 = (m * m) as f64;
    let rhs = |s: f64, y: &[f64; 2]| {
        let r = s.exp();
        let r2 = r * r;
        [y[1], m2 * y[0] - r2 * (2.0 * e2u_radial(r) * y[0] + f(r))]
    };
    let n = grid.len();
    let mut values = vec![0.0; n];
    let mut derivs = vec![0.0; n];
    let mut y = init;
    let mut s = s_start;
    let max_ds = 2e-3;
    for k in 1..n {
        let target = grid[k].ln();
        let steps = ((target - s) / max_ds).ceil().max(1.0) as usize;
        let h = (target - s) / steps as f64;
        for _ in 0..steps {
            y = rk4_step(&rhs, s, &y, h);
            s += h;
        }
        s = target;
        values[k] = y[0];
        derivs[k] = y[1] / grid[k];
    }
    if m == 0 {
        // leading-order extrapolation of the initial data to r = 0
        values[0] = init[0];
    }
    RadialProfile::new(grid, values, derivs, log_start)
}

/// Regular homogeneous solution of mode m, normalized to r^m(1 + O(r²)).
pub fn regular_homogeneous(m: u32) -> RadialProfile {
    let s0: f64 = -12.0;
    let r = s0.exp();
    let mf = m as f64;
    let a = -1.0 / (2.0 * (mf + 1.0));
    let rm = r.powi(m as i32);
    let init = [rm * (1.0 + a * r * r), rm * (mf + (mf + 2.0) * a * r * r)];
    let mut p = integrate_mode(m, &|_r| 0.0, init, s0);
    if m == 0 {
        p.values[0] = 1.0;
    }
    p
}

fn attach_farfield(p: &mut RadialProfile, strict: bool) -> Result<()> {
    let rmax = p.r_max();
    let (a, b) = p.fit_log_law(rmax / 100.0, rmax);
    p.farfield_offset = Some(a);
    p.farfield_log_coeff = Some(b);
    let n = p.grid.len() - 1;
    let last = p.grid[n] * p.derivs[n];
    p.derivative_asymptote = Some(last);
    let k = p.grid.iter().position(|&r| r >= rmax / 10.0 * (1.0 - 1e-12)).unwrap();
    let prev = p.grid[k] * p.derivs[k];
    let drift = (last - prev).abs() / last.abs().max(1.0);
    p.farfield_drift = Some(drift);
    if strict && drift > 1e-4 {
        return Err(Error::GridTooShort(drift));
    }
    Ok(())
}

/// Checks ∫ t|log t||f(t)| dt < ∞ numerically: the weighted mass of the
/// last decade of the grid must be finite and well below that of the
/// decade before it.
fn check_integrable<F: Fn(f64) -> f64>(f: &F) -> Result<()> {
    let w = |s: f64| {
        let t = s.exp();
        t * t * s.abs() * f(t).abs()
    };
    let tol = Tol::abs(1e-14).with_rel(1e-8).with_limit(4000);
    let l10 = 10f64.ln();
    let end = GRID_END.ln();
    let last = integrate(w, end - l10, end, tol)?.value;
    let prev = integrate(w, end - 2.0 * l10, end - l10, tol)?.value;
    if !last.is_finite() || !prev.is_finite() || last > 0.5 * prev + 1e-300 {
        return Err(Error::NonintegrableForcing(format!(
            "weighted mass per decade {prev:e} then {last:e}"
        )));
    }
    Ok(())
}

/// Solves -v'' - v'/r + m²v/r² - 2e^{2U}v = f on [0, 10⁶]. The particular
/// solution has no regular homogeneous component at the origin;
/// `regular_coeff` adds that many copies of the regular solution
/// (normalized to value(0) = 1 for m = 0, to r^m near 0 otherwise).
pub fn solve_inhomogeneous_radial<F: Fn(f64) -> f64>(f: F, m: u32, regular_coeff: f64) -> Result<RadialProfile> {
    solve_radial(f, m, regular_coeff, true)
}

fn solve_radial<F: Fn(f64) -> f64>(f: F, m: u32, regular_coeff: f64, strict: bool) -> Result<RadialProfile> {
    check_integrable(&f)?;
    let mut p = if m == 0 { vop_mode0(&f) } else { integrate_mode(m, &f, [0.0, 0.0], -12.0) };
    if regular_coeff != 0.0 {
        let h = regular_homogeneous(m);
        for k in 0..p.values.len() {
            p.values[k] += regular_coeff * h.values[k];
            p.derivs[k] += regular_coeff * h.derivs[k];
        }
    }
    if m == 0 {
        attach_farfield(&mut p, strict)?;
    }
    Ok(p)
}

/// The log coefficient predicted by the far-field formula, evaluated in the
/// 2-rescaled variable where the equation reads Δw + 8w/(1+|y|²)² = f̃ and
/// f̃(t) = -4 f(2t).
pub fn predicted_log_coeff<F: Fn(f64) -> f64>(f: F) -> Result<f64> {
    let g = |t: f64| t * (t * t - 1.0) / (t * t + 1.0) * (-4.0 * f(2.0 * t));
    let tol = Tol::abs(1e-13).with_limit(10_000);
    Ok(integrate(g, 0.0, 1.0, tol)?.value + integrate_to_infinity(g, 1.0, tol)?.value)
}

/// Max of |−v'' − v'/r + m²v/r² − 2e^{2U}v − f|·(1+r)² over grid points in
/// (0, r_max]. v'' is a fourth-order difference of the stored derivative
/// (in r on the uniform part, in log r on the graded part).
pub fn ode_residual<F: Fn(f64) -> f64>(p: &RadialProfile, f: F, m: u32, r_max: f64) -> f64 {
    let g = &p.grid;
    let m2 = (m * m) as f64;
    let mut worst: f64 = 0.0;
    let n = g.len();
    for k in 2..n - 2 {
        let r = g[k];
        if r > r_max {
            break;
        }
        if (k as isize - p.log_start as isize).abs() <= 2 {
            continue;
        }
        let v = p.values[k];
        let d = p.derivs[k];
        let v2 = if k < p.log_start {
            let h = g[k + 1] - g[k];
            (p.derivs[k - 2] - 8.0 * p.derivs[k - 1] + 8.0 * p.derivs[k + 1] - p.derivs[k + 2]) / (12.0 * h)
        } else {
            let h = g[k + 1].ln() - g[k].ln();
            let ds = |j: usize| g[j] * p.derivs[j];
            let vss = (ds(k - 2) - 8.0 * ds(k - 1) + 8.0 * ds(k + 1) - ds(k + 2)) / (12.0 * h);
            (vss - r * d) / (r * r)
        };
        let res = -v2 - d / r + m2 * v / (r * r) - 2.0 * e2u_radial(r) * v - f(r);
        worst = worst.max(res.abs() * (1.0 + r) * (1.0 + r));
    }
    worst
}

#[derive(Debug, Clone, Serialize)]
pub struct Hierarchy {
    pub v0: RadialProfile,
    pub k0: RadialProfile,
    pub s0: RadialProfile,
}

pub fn forcing_v0(r: f64) -> f64 {
    let u = bubble_radial(r);
    e2u_radial(r) * (u * u + u)
}

pub fn forcing_k0(r: f64, v0: f64) -> f64 {
    let u = bubble_radial(r);
    let u2 = u * u;
    e2u_radial(r) * (0.5 * u2 * u2 + 2.0 * v0 * v0 + u2 * u + v0 * (2.0 * u2 + 4.0 * u + 1.0))
}

pub fn forcing_s0(r: f64, v0: f64, k0: f64) -> f64 {
    let u = bubble_radial(r);
    let u2 = u * u;
    let u3 = u2 * u;
    let u4 = u2 * u2;
    e2u_radial(r)
        * (0.5 * u4 * u + u4 * u2 / 6.0
            + (u4 + 4.0 * u3 + 3.0 * u2) * v0
            + (2.0 * u2 + 6.0 * u + 3.0) * v0 * v0
            + 4.0 / 3.0 * v0 * v0 * v0
            + (4.0 * v0 + 2.0 * u2 + 4.0 * u + 1.0) * k0)
}

/// v₀, k₀, s₀ with value(0) = 0 and ∂_r(0) = 0. The far field of s₀
/// carries log⁶r/r² corrections that are not settled to 1e-4 by r = 10⁶;
/// its drift is recorded instead of raising GRID_TOO_SHORT.
pub fn hierarchy_profiles() -> Result<Hierarchy> {
    let mut v0 = solve_inhomogeneous_radial(forcing_v0, 0, 0.0)?;
    v0.bound = Some(v0.growth_bound(0.5, 10.0, 1e4));
    let mut k0 = {
        let v0 = &v0;
        solve_inhomogeneous_radial(|r| forcing_k0(r, v0.eval(r)), 0, 0.0)?
    };
    k0.bound = Some(k0.growth_bound(0.5, 10.0, 1e4));
    let mut s0 = {
        let (v0, k0) = (&v0, &k0);
        solve_radial(|r| forcing_s0(r, v0.eval(r), k0.eval(r)), 0, 0.0, false)?
    };
    s0.bound = Some(s0.growth_bound(0.5, 10.0, 1e4));
    Ok(Hierarchy { v0, k0, s0 })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ExpansionConstants {
    pub a: [f64; 6],
    pub b: [f64; 3],
    pub c0: f64,
    pub a_errors: [f64; 6],
    pub robin_at_peak: f64,
}

impl ExpansionConstants {
    pub fn a1(&self) -> f64 { self.a[0] }
    pub fn a4(&self) -> f64 { self.a[3] }
    pub fn b1(&self) -> f64 { self.b[0] }
    pub fn b2(&self) -> f64 { self.b[1] }
    pub fn b3(&self) -> f64 { self.b[2] }

    /// Coefficients (e^{B₁/2}, (B₂/2)e^{-B₁/2}, ((4B₃-3B₂²)/8)e^{-3B₁/2}) of
    /// √λγ as a quadratic in λ.
    pub fn lambda_gamma_coeffs(&self) -> [f64; 3] {
        let (b1, b2, b3) = (self.b[0], self.b[1], self.b[2]);
        [
            (0.5 * b1).exp(),
            0.5 * b2 * (-0.5 * b1).exp(),
            (4.0 * b3 - 3.0 * b2 * b2) / 8.0 * (-1.5 * b1).exp(),
        ]
    }
}

/// Pieces of the A-integrands at radius r: (A1, A2, A3) integrands without
/// the log weight.
fn a_integrands(r: f64, h: &Hierarchy) -> [f64; 3] {
    let u = bubble_radial(r);
    let e = e2u_radial(r);
    let v = h.v0.eval(r);
    let k = h.k0.eval(r);
    let s = h.s0.eval(r);
    let (u2, u3) = (u * u, u * u * u);
    let u4 = u2 * u2;
    let i1 = u + u2 + 2.0 * v;
    let i2 = 2.0 * k + v + 4.0 * u * v + u3 + 2.0 * v * v + 2.0 * v * u2 + 0.5 * u4;
    let i3 = 2.0 * s + k + 3.0 * v * v + 4.0 * u * k + 4.0 * v * k + 6.0 * v * v * u + 2.0 * k * u2
        + 4.0 * u3 * v + 2.0 * v * v * u2 + v * u4 + 3.0 * v * u2 + 4.0 / 3.0 * v * v * v
        + u4 * u2 / 6.0 + 0.5 * u4 * u;
    [e * i1, e * i2, e * i3]
}

/// A₁…A₆ by composite Gauss–Legendre quadrature on the profile grid cells,
/// B₁…B₃ from their combinations with 𝓡(x₀) = `robin_at_peak`.
pub fn expansion_constants(robin_at_peak: f64, h: &Hierarchy) -> ExpansionConstants {
    let grid = &h.v0.grid;
    let rules = [gauss_legendre(8), gauss_legendre(5)];
    let mut sums = [[0.0f64; 6]; 2];
    for k in 0..grid.len() - 1 {
        let (ra, rb) = (grid[k], grid[k + 1]);
        let log_cell = k >= h.v0.log_start;
        for (ri, (xg, wg)) in rules.iter().enumerate() {
            let (a, b) = if log_cell { (ra.ln(), rb.ln()) } else { (ra, rb) };
            let (c, hh) = (0.5 * (a + b), 0.5 * (b - a));
            for j in 0..xg.len() {
                let t = c + hh * xg[j];
                let (r, jac) = if log_cell { let r = t.exp(); (r, r * r) } else { (t, t) };
                let w = hh * wg[j] * jac;
                let ig = a_integrands(r, h);
                let lr = r.ln();
                for q in 0..3 {
                    sums[ri][q] += w * ig[q];
                }
                let e = e2u_radial(r);
                sums[ri][3] += w * lr * e;
                sums[ri][4] += w * lr * ig[0];
                sums[ri][5] += w * lr * ig[1];
            }
        }
    }
    // beyond the grid the profiles follow their fitted a + b log r
    let tail_end = 1e12f64.ln();
    let tail_start = grid[grid.len() - 1].ln();
    let tol = Tol::abs(1e-16).with_rel(1e-12);
    for q in 0..6 {
        let g = |s: f64| {
            let r = s.exp();
            let ig = a_integrands(r, h);
            let v = match q {
                0..=2 => ig[q],
                3 => e2u_radial(r),
                _ => ig[q - 4],
            };
            let w = if q >= 3 { s } else { 1.0 };
            r * r * w * v
        };
        let t = integrate(g, tail_start, tail_end, tol).map(|e| e.value).unwrap_or(f64::NAN);
        sums[0][q] += t;
        sums[1][q] += t;
    }
    // (1/4π)∫_{ℝ²} = ½∫ r dr ; (1/2π)∫_{ℝ²} = ∫ r dr
    let scale = [0.5, 0.5, 0.5, 1.0, 1.0, 1.0];
    let mut a = [0.0; 6];
    let mut err = [0.0; 6];
    for q in 0..6 {
        a[q] = scale[q] * sums[0][q];
        err[q] = scale[q] * (sums[0][q] - sums[1][q]).abs();
    }
    let rr = 4.0 * PI * robin_at_peak;
    let (a1, a2, a3, a4, a5, a6) = (a[0], a[1], a[2], a[3], a[4], a[5]);
    let c1 = a1 - rr - a4;
    let c2 = a2 - rr * a1 - a5;
    let c3 = a3 - rr * a2 - a6;
    let b1 = -c1;
    let b2 = a1 * c1 - c2;
    let b3 = a1 * c2 + (a2 - a1 * a1) * c1 - c3;
    let c0 = -2.0 * PI * h.v0.derivative_asymptote.unwrap_or(f64::NAN);
    ExpansionConstants { a, b: [b1, b2, b3], c0, a_errors: err, robin_at_peak }
}

/// Residuals of the closed-form pieces used to split k₀ in the non-radial
/// case, evaluated on full two-dimensional expressions: returns the max
/// over `points` of the three identity residuals
///   L(∂ᵢv̄) = e^{2U}(2U²+4U+1)∂ᵢU + 4e^{2U}v̄∂ᵢU,
///   L(∂₁₂U) = 4e^{2U}∂₁U∂₂U,
///   L(½∂ᵢᵢU) = 2e^{2U}(∂ᵢU)²,
/// with L = -Δ - 2e^{2U}.
pub fn decomposition_residuals(v0: &RadialProfile, points: &[[f64; 2]]) -> [f64; 3] {
    let mut worst = [0.0f64; 3];
    for &x in points {
        let (x1, x2) = Jet2::vars(x);
        let q = x1 * x1 + x2 * x2 + 4.0;
        let q2 = q * q;
        let e2u = Jet2::constant(16.0) / q2;
        let r2v = x[0] * x[0] + x[1] * x[1];
        let q0 = 4.0 + r2v;
        let e = 16.0 / (q0 * q0);
        let u = -(0.25 * r2v).ln_1p();
        let du = [-2.0 * x[0] / q0, -2.0 * x[1] / q0];

        // ∂₁₂U = 4x₁x₂/q², ∂ᵢᵢU = -2/q + 4xᵢ²/q²
        let d12 = (x1 * x2).scale(4.0) / q2;
        let l12 = -d12.laplacian() - 2.0 * e * d12.v;
        worst[1] = worst[1].max((l12 - 4.0 * e * du[0] * du[1]).abs());
        for (i, xi) in [x1, x2].into_iter().enumerate() {
            let dii = (Jet2::constant(-2.0) / q + (xi * xi).scale(4.0) / q2).scale(0.5);
            let lii = -dii.laplacian() - 2.0 * e * dii.v;
            worst[2] = worst[2].max((lii - 2.0 * e * du[i] * du[i]).abs());
        }

        // ∂ᵢv̄ = v̄'(r) xᵢ/r, with v̄'' and v̄''' from the ODE
        let r = r2v.sqrt();
        let (v, dv) = v0.eval_with_deriv(r);
        let g = forcing_v0(r);
        let de = -64.0 * r / (q0 * q0 * q0);
        let ur = -2.0 * r / q0;
        let dg = de * (u * u + u) + e * (2.0 * u + 1.0) * ur;
        let d2v = -dv / r - 2.0 * e * v - g;
        let d3v = dv / (r * r) - d2v / r - 2.0 * de * v - 2.0 * e * dv - dg;
        let rj = (x1 * x1 + x2 * x2).sqrt();
        let dvj = rj.compose(dv, d2v, d3v);
        let _ = e2u;
        for (i, xi) in [x1, x2].into_iter().enumerate() {
            let w = dvj * xi / rj;
            let lw = -w.laplacian() - 2.0 * e * w.v;
            let rhs = e * (2.0 * u * u + 4.0 * u + 1.0) * du[i] + 4.0 * e * v * du[i];
            worst[0] = worst[0].max((lw - rhs).abs());
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fundamental_examples() {
        let (u0, _) = fundamental_solutions(2.0).unwrap();
        assert_eq!(u0, 0.0);
        let (_, u1) = fundamental_solutions(1.0).unwrap();
        assert!((u1 - 1.6).abs() < 1e-15);
        assert!(matches!(fundamental_solutions(0.0), Err(Error::NonpositiveRadius(_))));
    }

    #[test]
    fn fundamental_pair_solves_homogeneous_equation() {
        for &r in &[1e-3, 0.1, 0.9, 2.0, 7.5, 40.0, 1e3] {
            let f = fundamental_with_derivs(r).unwrap();
            let e = e2u_radial(r);
            let res0 = -f.d2u0 - f.du0 / r - 2.0 * e * f.u0;
            let res1 = -f.d2u1 - f.du1 / r - 2.0 * e * f.u1;
            assert!(res0.abs() < 1e-9 && res1.abs() < 1e-9 * (1.0 + 1.0 / (r * r)), "r={r} {res0} {res1}");
        }
    }

    #[test]
    fn wronskian_is_constant() {
        for &r in &[1e-4, 0.3, 1.0, 3.0, 50.0, 1e4] {
            let f = fundamental_with_derivs(r).unwrap();
            let w = r * (f.du0 * f.u1 - f.du1 * f.u0);
            assert!((w + 1.0).abs() < 1e-9, "r={r}: {w}");
        }
    }

    #[test]
    fn standard_grid_shape() {
        let (g, ls) = standard_grid();
        assert_eq!(g[0], 0.0);
        assert!((g[ls] - 10.0).abs() < 1e-12);
        assert!((g.last().unwrap() - 1e6).abs() < 1e-6);
        assert!(g.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn homogeneous_mode0_is_u0() {
        let p = solve_inhomogeneous_radial(|_| 0.0, 0, 1.0).unwrap();
        let mut worst: f64 = 0.0;
        for (r, v) in p.grid.iter().zip(&p.values) {
            if *r > 100.0 {
                break;
            }
            worst = worst.max((v - (4.0 - r * r) / (4.0 + r * r)).abs());
        }
        assert!(worst < 1e-9, "{worst}");
    }

    #[test]
    fn regular_mode1_is_translation_kernel() {
        let p = regular_homogeneous(1);
        for &r in &[0.5, 2.0, 10.0, 300.0] {
            let exact = 4.0 * r / (4.0 + r * r);
            assert!((p.eval(r) - exact).abs() < 1e-9 * (1.0 + exact.abs()), "r={r}");
        }
    }

    #[test]
    fn nonintegrable_forcing_rejected() {
        let r = solve_inhomogeneous_radial(|t| 1.0 / (1.0 + t * t), 0, 0.0);
        assert!(matches!(r, Err(Error::NonintegrableForcing(_))));
    }
}
