//! Boundary quadratic forms on circles ∂B_d(c):
//!
//!   P(u,v) = -2d∮ ∂_νu ∂_νv + d∮ ∇u·∇v
//!   Q_i(u,v) = -∮ ∂_νv ∂_iu - ∮ ∂_νu ∂_iv + ∮ ∇u·∇v ν_i
//!
//! and the identities they satisfy on Green functions and on solutions of
//! -Δu = λue^{u²}.

use crate::error::{Error, Result};
use crate::geometry_green::Domain;
use crate::radial_solver::BranchPoint;
use serde::Serialize;
use std::f64::consts::PI;

pub const DEFAULT_NODES: usize = 2048;

/// A field known through its gradient.
pub trait GradField {
    fn grad(&self, x: [f64; 2]) -> [f64; 2];
}

impl<F: Fn([f64; 2]) -> [f64; 2]> GradField for F {
    fn grad(&self, x: [f64; 2]) -> [f64; 2] {
        self(x)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FormSample {
    pub center: [f64; 2],
    pub radius: f64,
    pub value: f64,
    pub nodes: usize,
}

fn check_ball(domain: &Domain, center: [f64; 2], d: f64) -> Result<()> {
    if !(d > 0.0) || domain.boundary_distance(center) < 2.0 * d {
        return Err(Error::BallNotContained(d));
    }
    Ok(())
}

/// Trapezoid sum over n equispaced circle nodes of f(x, ν), times the
/// arc element.
fn circle_sum(center: [f64; 2], d: f64, n: usize, mut f: impl FnMut([f64; 2], [f64; 2]) -> f64) -> f64 {
    let mut acc = 0.0;
    for k in 0..n {
        let t = 2.0 * PI * k as f64 / n as f64;
        let nu = [t.cos(), t.sin()];
        acc += f([center[0] + d * nu[0], center[1] + d * nu[1]], nu);
    }
    acc * 2.0 * PI * d / n as f64
}

fn dot(a: [f64; 2], b: [f64; 2]) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

pub fn p_form_n(u: &dyn GradField, v: &dyn GradField, center: [f64; 2], d: f64, n: usize) -> f64 {
    circle_sum(center, d, n, |x, nu| {
        let (gu, gv) = (u.grad(x), v.grad(x));
        -2.0 * d * dot(gu, nu) * dot(gv, nu) + d * dot(gu, gv)
    })
}

pub fn q_form_n(u: &dyn GradField, v: &dyn GradField, center: [f64; 2], d: f64, axis: usize, n: usize) -> f64 {
    circle_sum(center, d, n, |x, nu| {
        let (gu, gv) = (u.grad(x), v.grad(x));
        -dot(gv, nu) * gu[axis] - dot(gu, nu) * gv[axis] + dot(gu, gv) * nu[axis]
    })
}

pub fn p_form(domain: &Domain, u: &dyn GradField, v: &dyn GradField, center: [f64; 2], d: f64) -> Result<FormSample> {
    check_ball(domain, center, d)?;
    let value = p_form_n(u, v, center, d, DEFAULT_NODES);
    Ok(FormSample { center, radius: d, value, nodes: DEFAULT_NODES })
}

pub fn q_form(domain: &Domain, u: &dyn GradField, v: &dyn GradField, center: [f64; 2], d: f64, axis: usize) -> Result<FormSample> {
    check_ball(domain, center, d)?;
    let value = q_form_n(u, v, center, d, axis, DEFAULT_NODES);
    Ok(FormSample { center, radius: d, value, nodes: DEFAULT_NODES })
}

/// Largest |Δf| over sample points, with Δf = div ∇f by fourth-order
/// differences of the gradient.
pub fn laplacian_residual(f: &dyn GradField, points: &[[f64; 2]], h: f64) -> f64 {
    let w = [1.0, -8.0, 8.0, -1.0];
    let o = [-2.0, -1.0, 1.0, 2.0];
    points
        .iter()
        .map(|x| {
            let mut lap = 0.0;
            for k in 0..4 {
                lap += w[k] * f.grad([x[0] + o[k] * h, x[1]])[0];
                lap += w[k] * f.grad([x[0], x[1] + o[k] * h])[1];
            }
            (lap / (12.0 * h)).abs()
        })
        .fold(0.0, f64::max)
}

pub const HARMONIC_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IndependenceReport {
    pub radii: Vec<f64>,
    pub p_values: Vec<f64>,
    pub q_values: Vec<[f64; 2]>,
    /// max |P(d₁) - P(d₂)|.
    pub p_deviation: f64,
    /// max |Q_i(d₁) - Q_i(d₂)| over both axes.
    pub q_deviation: f64,
    pub laplacian_residual: f64,
}

/// Evaluates P and Q at every radius and reports the spread. The fields
/// are first checked to be harmonic on the annulus spanned by the radii.
pub fn radius_independence_check(
    domain: &Domain,
    u: &dyn GradField,
    v: &dyn GradField,
    center: [f64; 2],
    radii: &[f64],
) -> Result<IndependenceReport> {
    let rmin = radii.iter().cloned().fold(f64::INFINITY, f64::min);
    let rmax = radii.iter().cloned().fold(0.0, f64::max);
    check_ball(domain, center, rmax)?;
    let mut pts = Vec::new();
    for i in 0..4 {
        let r = rmin + (rmax - rmin) * i as f64 / 3.0;
        for k in 0..8 {
            let t = 0.3 + 2.0 * PI * k as f64 / 8.0;
            pts.push([center[0] + r * t.cos(), center[1] + r * t.sin()]);
        }
    }
    let h = 1e-3 * rmin;
    let res = laplacian_residual(u, &pts, h).max(laplacian_residual(v, &pts, h));
    if res > HARMONIC_TOL {
        return Err(Error::NotHarmonic(res));
    }
    let p_values: Vec<f64> = radii.iter().map(|&d| p_form_n(u, v, center, d, DEFAULT_NODES)).collect();
    let q_values: Vec<[f64; 2]> = radii
        .iter()
        .map(|&d| [q_form_n(u, v, center, d, 0, DEFAULT_NODES), q_form_n(u, v, center, d, 1, DEFAULT_NODES)])
        .collect();
    let spread = |xs: &[f64]| {
        let lo = xs.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        hi - lo
    };
    let q0: Vec<f64> = q_values.iter().map(|q| q[0]).collect();
    let q1: Vec<f64> = q_values.iter().map(|q| q[1]).collect();
    Ok(IndependenceReport {
        radii: radii.to_vec(),
        p_deviation: spread(&p_values),
        q_deviation: spread(&q0).max(spread(&q1)),
        p_values,
        q_values,
        laplacian_residual: res,
    })
}

/// A computed single-peak solution of -Δu = λue^{u²}.
pub trait PeakSolution {
    fn peak(&self) -> [f64; 2];
    fn lambda(&self) -> f64;
    fn domain(&self) -> &Domain;
    fn value(&self, x: [f64; 2]) -> f64;
    fn gradient(&self, x: [f64; 2]) -> [f64; 2];
    /// λ∫_{B_d(peak)} e^{u²} by volume quadrature.
    fn ball_exp_mass(&self, d: f64) -> f64;
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IdentityCheck {
    pub id: String,
    pub lhs: f64,
    pub rhs: f64,
    pub gap: f64,
}

/// Both sides of
///   P(u,u) = dλ∮e^{u²} - 2λ∫_{B_d}e^{u²}
///   Q_i(u,u) = λ∮e^{u²}ν_i
/// on B_d(peak). The P gap is relative to |lhs| + |rhs|. The Q sides
/// vanish for symmetric solutions, so their gap is relative to the size of
/// the integrands, ∮(2|∂_νu ∂_iu| + |∇u|²|ν_i|) + λ∮e^{u²}|ν_i|.
pub fn solution_identity_check(sol: &dyn PeakSolution, d: f64) -> Result<Vec<IdentityCheck>> {
    let c = sol.peak();
    check_ball(sol.domain(), c, d)?;
    let n = DEFAULT_NODES;
    let g = |x: [f64; 2]| sol.gradient(x);
    let lam = sol.lambda();
    let p_lhs = p_form_n(&g, &g, c, d, n);
    let ring = circle_sum(c, d, n, |x, _| {
        let u = sol.value(x);
        (u * u).exp()
    });
    let p_rhs = d * lam * ring - 2.0 * sol.ball_exp_mass(d);
    let mut out = vec![IdentityCheck {
        id: "puu".into(),
        lhs: p_lhs,
        rhs: p_rhs,
        gap: (p_lhs - p_rhs).abs() / (p_lhs.abs() + p_rhs.abs()),
    }];
    for axis in 0..2 {
        let lhs = q_form_n(&g, &g, c, d, axis, n);
        let rhs = lam * circle_sum(c, d, n, |x, nu| {
            let u = sol.value(x);
            (u * u).exp() * nu[axis]
        });
        let scale = circle_sum(c, d, n, |x, nu| {
            let gu = sol.gradient(x);
            let u = sol.value(x);
            2.0 * (dot(gu, nu) * gu[axis]).abs() + dot(gu, gu) * nu[axis].abs() + lam * (u * u).exp() * nu[axis].abs()
        });
        out.push(IdentityCheck { id: format!("quu_{}", axis + 1), lhs, rhs, gap: (lhs - rhs).abs() / scale });
    }
    Ok(out)
}

/// A radial branch point viewed as a solution on the unit disk.
pub struct RadialSolution<'a> {
    pub bp: &'a BranchPoint,
    pub domain: Domain,
}

impl<'a> RadialSolution<'a> {
    pub fn new(bp: &'a BranchPoint) -> Self {
        RadialSolution { bp, domain: Domain::unit_disk() }
    }
}

impl PeakSolution for RadialSolution<'_> {
    fn peak(&self) -> [f64; 2] {
        [0.0, 0.0]
    }
    fn lambda(&self) -> f64 {
        self.bp.lambda
    }
    fn domain(&self) -> &Domain {
        &self.domain
    }
    fn value(&self, x: [f64; 2]) -> f64 {
        self.bp.u(x[0].hypot(x[1]))
    }
    fn gradient(&self, x: [f64; 2]) -> [f64; 2] {
        let r = x[0].hypot(x[1]);
        if r == 0.0 {
            return [0.0, 0.0];
        }
        let du = self.bp.du(r);
        [du * x[0] / r, du * x[1] / r]
    }
    fn ball_exp_mass(&self, d: f64) -> f64 {
        self.bp.exp_mass_within(d)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_field_gives_zero() {
        let z = |_: [f64; 2]| [0.0, 0.0];
        assert_eq!(p_form_n(&z, &z, [0.0, 0.0], 0.2, 64), 0.0);
        assert_eq!(q_form_n(&z, &z, [0.0, 0.0], 0.2, 0, 64), 0.0);
    }

    #[test]
    fn ball_must_fit() {
        let d = Domain::unit_disk();
        let z = |_: [f64; 2]| [1.0, 0.0];
        assert!(matches!(p_form(&d, &z, &z, [0.5, 0.0], 0.3), Err(Error::BallNotContained(_))));
        assert!(p_form(&d, &z, &z, [0.5, 0.0], 0.2).is_ok());
    }
}
