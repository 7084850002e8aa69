//! Radial branch on the unit disk, parametrized by the peak value γ.
//!
//! With u = γ + w/γ and x = θy, θ = (λγ²e^{γ²})^{-1/2}, the equation
//! becomes -Δw = (1 + εw)e^{2w + εw²}, ε = 1/γ², with w(0) = 0. The
//! profile w is marched outward in s = log|y| until w = -γ²; the radius
//! where this happens is 1/θ, which fixes λ without any search.

use crate::error::{Error, Result};
use crate::liouville_core::bubble_radial;
use crate::ode::{hermite, locate, rk4_step};
use crate::radial_hierarchy::RadialProfile;
use rayon::prelude::*;
use serde::Serialize;
use std::f64::consts::PI;

pub const GAMMA_MIN: f64 = 1e-3;
pub const GAMMA_MAX: f64 = 12.0;
pub const LAMBDA_MIN: f64 = 1e-12;
pub const LAMBDA_MAX: f64 = 1e2;
/// Radius of the ball used for C_λ and for the rescaled profiles.
pub const D0: f64 = 0.5;

const S_START: f64 = -15.0;
const H_DEFAULT: f64 = 1e-3;
const H_MIN: f64 = 1e-4;

#[derive(Debug, Clone, Serialize)]
pub struct BranchPoint {
    pub gamma: f64,
    pub lambda: f64,
    pub log_lambda: f64,
    pub theta: f64,
    /// log(1/θ): end of the rescaled trajectory.
    pub s_end: f64,
    pub residual_norm: f64,
    /// ∫|∇u|².
    pub energy: f64,
    pub j_value: f64,
    /// λ∫ e^{u²}.
    pub lambda_int_exp: f64,
    /// γλ∫ u e^{u²}; tends to 4π.
    pub mass_gamma: f64,
    /// γ·C_λ with C_λ = λ∫_{B_{1/2}} u e^{u²}.
    pub c_lambda_gamma: f64,
    pub step: f64,
    #[serde(skip)]
    traj: Trajectory,
}

#[derive(Debug, Clone, Default)]
struct Trajectory {
    s: Vec<f64>,
    w: Vec<f64>,
    ws: Vec<f64>,
}

fn source(w: f64, eps: f64) -> f64 {
    (1.0 + eps * w) * (2.0 * w + eps * w * w).exp()
}

/// State: w, w_s, ∫w_s² ds, ∫e^{2s}e^{2w+εw²} ds.
fn rhs(eps: f64) -> impl Fn(f64, &[f64; 4]) -> [f64; 4] {
    move |s: f64, y: &[f64; 4]| {
        let e2s = (2.0 * s).exp();
        let ex = (2.0 * y[0] + eps * y[0] * y[0]).exp();
        [y[1], -e2s * (1.0 + eps * y[0]) * ex, y[1] * y[1], e2s * ex]
    }
}

struct March {
    traj: Trajectory,
    s_end: f64,
    end_state: [f64; 4],
}

fn march(gamma: f64, h: f64) -> Result<March> {
    let eps = 1.0 / (gamma * gamma);
    let target = -gamma * gamma;
    let f = rhs(eps);
    let r0 = S_START.exp();
    let r2 = r0 * r0;
    // -Δw = 1 + O(r²) at the origin
    let mut y = [-0.25 * r2, -0.5 * r2, r2 * r2 / 16.0, 0.5 * r2];
    let mut s = S_START;
    let s_max = gamma * gamma + 60.0;
    let mut traj = Trajectory::default();
    traj.s.push(s);
    traj.w.push(y[0]);
    traj.ws.push(y[1]);
    loop {
        let yn = rk4_step(&f, s, &y, h);
        if !yn.iter().all(|v| v.is_finite()) {
            return Err(Error::Stiffness(s));
        }
        if yn[0] <= target {
            // Newton on the length of a partial step from the last node
            let mut dt = h * (y[0] - target) / (y[0] - yn[0]);
            for _ in 0..30 {
                let ye = rk4_step(&f, s, &y, dt);
                let corr = (ye[0] - target) / ye[1];
                dt -= corr;
                if corr.abs() < 1e-15 * (1.0 + s.abs()) {
                    break;
                }
            }
            let ye = rk4_step(&f, s, &y, dt);
            let s_end = s + dt;
            traj.s.push(s_end);
            traj.w.push(ye[0]);
            traj.ws.push(ye[1]);
            return Ok(March { traj, s_end, end_state: ye });
        }
        y = yn;
        s += h;
        traj.s.push(s);
        traj.w.push(y[0]);
        traj.ws.push(y[1]);
        if s > s_max {
            return Err(Error::NoBracket(format!("w stays above -γ² up to log|y| = {s_max}")));
        }
    }
}

impl Trajectory {
    fn eval(&self, s: f64, eps: f64) -> (f64, f64) {
        let i = locate(&self.s, s);
        let (s0, s1) = (self.s[i], self.s[i + 1]);
        let w = hermite(s0, s1, self.w[i], self.w[i + 1], self.ws[i], self.ws[i + 1], s);
        let wss = |k: usize| -(2.0 * self.s[k]).exp() * source(self.w[k], eps);
        let ws = hermite(s0, s1, self.ws[i], self.ws[i + 1], wss(i), wss(i + 1), s);
        (w, ws)
    }
}

/// Radial solution with u(0) = γ, u(1) = 0 on the unit disk.
pub fn solve_branch_point(gamma: f64, tol: f64) -> Result<BranchPoint> {
    if !(GAMMA_MIN..=GAMMA_MAX).contains(&gamma) {
        return Err(Error::Range { requested: gamma, limit: GAMMA_MAX });
    }
    let tol = tol.max(1e-12);
    let eps = 1.0 / (gamma * gamma);
    let mut h = H_DEFAULT;
    loop {
        let fine = march(gamma, h)?;
        let coarse = march(gamma, 2.0 * h)?;
        // step-doubling estimate of the error in u = γ + w/γ
        let mut est: f64 = 0.0;
        for k in (0..coarse.traj.s.len() - 1).step_by(8) {
            let (wf, _) = fine.traj.eval(coarse.traj.s[k], eps);
            est = est.max((wf - coarse.traj.w[k]).abs() / 15.0 / gamma);
        }
        est = est.max((fine.s_end - coarse.s_end).abs() / 15.0);
        if est > tol && h > H_MIN {
            h *= 0.5;
            continue;
        }
        if est > tol {
            return Err(Error::Stiffness(fine.s_end));
        }
        return finish(gamma, h, est, fine);
    }
}

fn finish(gamma: f64, h: f64, est: f64, m: March) -> Result<BranchPoint> {
    let g2 = gamma * gamma;
    let eps = 1.0 / g2;
    let s_end = m.s_end;
    let log_lambda = 2.0 * s_end - g2 - 2.0 * gamma.ln();
    let lambda = log_lambda.exp();
    if !(LAMBDA_MIN..=LAMBDA_MAX).contains(&lambda) {
        return Err(Error::NoBracket(format!("λ = {lambda:e} outside [{LAMBDA_MIN:e}, {LAMBDA_MAX:e}]")));
    }
    let theta = (-s_end).exp();
    let r0 = S_START.exp();
    let energy = 2.0 * PI / g2 * m.end_state[2];
    let lambda_int_exp = 2.0 * PI / g2 * m.end_state[3] + lambda * PI * r0 * r0 * theta * theta;
    let mass_gamma = -2.0 * PI * m.end_state[1];
    let (_, ws_half) = m.traj.eval(s_end + D0.ln(), eps);
    Ok(BranchPoint {
        gamma,
        lambda,
        log_lambda,
        theta,
        s_end,
        residual_norm: est,
        energy,
        j_value: 0.5 * energy - 0.5 * lambda_int_exp,
        lambda_int_exp,
        mass_gamma,
        c_lambda_gamma: -2.0 * PI * ws_half,
        step: h,
        traj: m.traj,
    })
}

/// Branch points for several amplitudes, solved in parallel.
pub fn solve_branch(gammas: &[f64], tol: f64) -> Vec<Result<BranchPoint>> {
    gammas.par_iter().map(|&g| solve_branch_point(g, tol)).collect()
}

impl BranchPoint {
    fn eps(&self) -> f64 {
        1.0 / (self.gamma * self.gamma)
    }

    /// w and ∂_s w at s = log|y|.
    pub fn w_at_log(&self, s: f64) -> (f64, f64) {
        let s0 = self.traj.s[0];
        if s <= s0 {
            let r2 = (2.0 * s).exp();
            return (-0.25 * r2, -0.5 * r2);
        }
        self.traj.eval(s.min(self.s_end), self.eps())
    }

    /// u at |x| = r ∈ [0, 1].
    pub fn u(&self, r: f64) -> f64 {
        if r <= 0.0 {
            return self.gamma;
        }
        let (w, _) = self.w_at_log((r / self.theta).ln());
        self.gamma + w / self.gamma
    }

    /// ∂_r u at |x| = r.
    pub fn du(&self, r: f64) -> f64 {
        if r <= 0.0 {
            return 0.0;
        }
        let (_, ws) = self.w_at_log((r / self.theta).ln());
        ws / (self.gamma * r)
    }

    /// λ∫_{B_r} e^{u²}, as (2π/γ²)∫ e^{2s}e^{2w+εw²} ds up to s = log(r/θ),
    /// by three-point Gauss–Legendre on each trajectory cell.
    pub fn exp_mass_within(&self, r: f64) -> f64 {
        let eps = self.eps();
        let t = &self.traj;
        let s_top = (r / self.theta).ln().min(self.s_end);
        let f = |s: f64| {
            let (w, _) = t.eval(s, eps);
            (2.0 * s).exp() * (2.0 * w + eps * w * w).exp()
        };
        let g = [(-(0.6f64).sqrt(), 5.0 / 9.0), (0.0, 8.0 / 9.0), ((0.6f64).sqrt(), 5.0 / 9.0)];
        // below the first node w ≈ 0
        let mut acc = 0.5 * (2.0 * t.s[0]).exp();
        for i in 0..t.s.len() - 1 {
            let (a, b) = (t.s[i], t.s[i + 1].min(s_top));
            if b <= a {
                break;
            }
            let (m, h) = (0.5 * (a + b), 0.5 * (b - a));
            acc += h * g.iter().map(|&(x, wt)| wt * f(m + h * x)).sum::<f64>();
        }
        2.0 * PI * acc * self.eps()
    }

    /// Samples (r, u) at the trajectory nodes mapped back to the disk.
    pub fn profile(&self) -> Vec<(f64, f64)> {
        let mut out = vec![(0.0, self.gamma)];
        for (s, w) in self.traj.s.iter().zip(&self.traj.w) {
            out.push((self.theta * s.exp(), self.gamma + w / self.gamma));
        }
        out
    }

    /// θ²λγ²e^{γ²} evaluated in log form.
    pub fn theta_identity(&self) -> f64 {
        (2.0 * self.theta.ln() + self.log_lambda + 2.0 * self.gamma.ln() + self.gamma * self.gamma).exp()
    }

    /// Residual of the rescaled equation w_ss = -e^{2s}(1+εw)e^{2w+εw²} at
    /// the uniform trajectory nodes, with w_ss from a fourth-order
    /// difference of the stored ∂_s w, relative to the sup of the
    /// right-hand side. Equivalent to the residual of -Δu = λue^{u²}
    /// relative to sup λue^{u²}.
    pub fn pde_residual(&self) -> f64 {
        let t = &self.traj;
        let eps = self.eps();
        let h = self.step;
        let n = t.s.len();
        let mut worst: f64 = 0.0;
        let mut scale: f64 = 0.0;
        // the last node sits at a partial step
        for i in 2..n.saturating_sub(3) {
            let wss = (t.ws[i - 2] - 8.0 * t.ws[i - 1] + 8.0 * t.ws[i + 1] - t.ws[i + 2]) / (12.0 * h);
            let rhs = (2.0 * t.s[i]).exp() * source(t.w[i], eps);
            worst = worst.max((wss + rhs).abs());
            scale = scale.max(rhs.abs());
        }
        worst / scale
    }
}

#[derive(Debug, Clone)]
pub struct RescaledProfiles {
    pub w: RadialProfile,
    pub v: RadialProfile,
    pub k: RadialProfile,
}

/// w(y) = γ(u(θy) - γ), v = γ²(w - U), k = γ²(v - v₀) sampled at the
/// trajectory nodes with |y| ≤ radius.
pub fn rescaled_profiles(bp: &BranchPoint, radius: f64, v0: &RadialProfile) -> Result<RescaledProfiles> {
    let limit = D0 / bp.theta;
    if radius > limit * (1.0 + 1e-12) {
        return Err(Error::Range { requested: radius, limit });
    }
    let g2 = bp.gamma * bp.gamma;
    let mut ys = Vec::new();
    let (mut w, mut dw) = (Vec::new(), Vec::new());
    let (mut v, mut dv) = (Vec::new(), Vec::new());
    let (mut k, mut dk) = (Vec::new(), Vec::new());
    for i in 0..bp.traj.s.len() {
        let y = bp.traj.s[i].exp();
        if y > radius {
            break;
        }
        let (wv, wr) = (bp.traj.w[i], bp.traj.ws[i] / y);
        let vv = g2 * (wv - bubble_radial(y));
        let vr = g2 * (wr + 2.0 * y / (4.0 + y * y));
        let (v0v, v0r) = v0.eval_with_deriv(y);
        ys.push(y);
        w.push(wv);
        dw.push(wr);
        v.push(vv);
        dv.push(vr);
        k.push(g2 * (vv - v0v));
        dk.push(g2 * (vr - v0r));
    }
    if ys.len() < 2 {
        return Err(Error::Range { requested: radius, limit });
    }
    Ok(RescaledProfiles {
        w: RadialProfile::from_samples(ys.clone(), w, dw),
        v: RadialProfile::from_samples(ys.clone(), v, dv),
        k: RadialProfile::from_samples(ys, k, dk),
    })
}

/// Stored fine-grid step for the eigenvalue discretization in s.
const EIG_H: f64 = 4e-3;
const EIG_CORE_MIN: usize = 50;

struct Pencil {
    /// diagonal and off-diagonal of K, lumped mass
    kd: Vec<f64>,
    ko: Vec<f64>,
    m: Vec<f64>,
}

impl Pencil {
    fn build(bp: &BranchPoint, mode: u32, h_target: f64) -> Result<Pencil> {
        let s_r = bp.s_end;
        let s_l = (-12.0f64).min(s_r - 12.0);
        let n = ((s_r - s_l) / h_target).ceil() as usize;
        let h = (s_r - s_l) / n as f64;
        let core = ((2.0 / h).floor() as usize).min(n);
        if core < EIG_CORE_MIN {
            return Err(Error::DiscretizationUnresolved(core));
        }
        let eps = bp.eps();
        let m2 = (mode * mode) as f64;
        // nodes 0..n-1 at s_l + i h; the node at s_r carries the Dirichlet
        // condition, the node at s_l is dropped for mode ≥ 1
        let first = if mode == 0 { 0 } else { 1 };
        let mut kd = Vec::with_capacity(n);
        let mut ko = Vec::with_capacity(n);
        let mut m = Vec::with_capacity(n);
        for i in first..n {
            let s = s_l + i as f64 * h;
            let (w, _) = bp.w_at_log(s);
            let q = (2.0 * s).exp() * (eps + 2.0 * (1.0 + eps * w).powi(2)) * (2.0 * w + eps * w * w).exp();
            let half = mode == 0 && i == 0;
            let wgt = if half { 0.5 } else { 1.0 };
            kd.push(wgt * (2.0 / h + m2 * h));
            m.push(wgt * h * q);
            if i + 1 < n {
                ko.push(-1.0 / h);
            }
        }
        Ok(Pencil { kd, ko, m })
    }

    /// Number of eigenvalues below σ (Sylvester inertia of K - σM).
    fn count_below(&self, sigma: f64) -> usize {
        let mut count = 0;
        let mut d_prev = 1.0;
        for i in 0..self.kd.len() {
            let a = self.kd[i] - sigma * self.m[i];
            let mut d = if i == 0 { a } else { a - self.ko[i - 1] * self.ko[i - 1] / d_prev };
            if d == 0.0 {
                d = -1e-300;
            }
            if d < 0.0 {
                count += 1;
            }
            d_prev = d;
        }
        count
    }

    /// k-th eigenvalue (0-based) by bisection on the inertia count.
    fn eigenvalue(&self, k: usize) -> f64 {
        let mut hi = 1.0;
        while self.count_below(hi) <= k {
            hi *= 2.0;
        }
        let mut lo = 0.0;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if self.count_below(mid) > k {
                hi = mid;
            } else {
                lo = mid;
            }
            if hi - lo <= 4.0 * f64::EPSILON * hi {
                break;
            }
        }
        0.5 * (lo + hi)
    }
}

/// Smallest `count` eigenvalues of -v'' - v'/r + m²v/r² = μλ(1+2u²)e^{u²}v
/// on (0, 1) with v(1) = 0, regular at 0. Second-order finite differences
/// in s = log|y| with lumped weight, Richardson-extrapolated over two
/// step sizes.
pub fn mode_eigenvalues(bp: &BranchPoint, mode: u32, count: usize) -> Result<Vec<f64>> {
    Ok(mode_eigenvalues_with_error(bp, mode, count)?.into_iter().map(|(mu, _)| mu).collect())
}

/// As [`mode_eigenvalues`], paired with an error estimate: the Richardson
/// correction |μ_h - μ_2h|/3, floored at a few ulps.
pub fn mode_eigenvalues_with_error(bp: &BranchPoint, mode: u32, count: usize) -> Result<Vec<(f64, f64)>> {
    if count == 0 || count > 6 {
        return Err(Error::ConfigInvalid { field: "count".into(), reason: format!("{count} not in 1..=6") });
    }
    let coarse = Pencil::build(bp, mode, 2.0 * EIG_H)?;
    let fine = Pencil::build(bp, mode, EIG_H)?;
    let mut out = Vec::with_capacity(count);
    for k in 0..count {
        let a = coarse.eigenvalue(k);
        let b = fine.eigenvalue(k);
        let mu = b + (b - a) / 3.0;
        out.push((mu, ((b - a) / 3.0).abs().max(8.0 * f64::EPSILON * mu.abs())));
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SpectrumEntry {
    /// Angular Fourier mode; `None` for spectra of 2-D discretizations.
    pub mode: Option<u32>,
    pub index: usize,
    pub mu: f64,
    /// 1 for mode 0, 2 for the cos/sin pair of mode ≥ 1.
    pub multiplicity: usize,
    pub near_one: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct SpectrumReport {
    pub entries: Vec<SpectrumEntry>,
    pub morse_index: usize,
    pub distance_to_one: f64,
    pub gap_tol: f64,
}

impl SpectrumReport {
    /// μ values with multiplicity, ascending.
    pub fn values(&self) -> Vec<f64> {
        let mut v = Vec::new();
        for e in &self.entries {
            for _ in 0..e.multiplicity {
                v.push(e.mu);
            }
        }
        v
    }
}

/// Spectrum across modes 0..=max_mode, `count` eigenvalues per mode.
pub fn spectrum(bp: &BranchPoint, max_mode: u32, count: usize, gap_tol: f64) -> Result<SpectrumReport> {
    let per_mode: Vec<Result<Vec<f64>>> = (0..=max_mode).into_par_iter().map(|m| mode_eigenvalues(bp, m, count)).collect();
    let mut entries = Vec::new();
    for (m, vals) in per_mode.into_iter().enumerate() {
        for (index, mu) in vals?.into_iter().enumerate() {
            entries.push(SpectrumEntry {
                mode: Some(m as u32),
                index,
                mu,
                multiplicity: if m == 0 { 1 } else { 2 },
                near_one: (mu - 1.0).abs() < gap_tol,
            });
        }
    }
    entries.sort_by(|a, b| a.mu.total_cmp(&b.mu));
    let morse_index = entries.iter().filter(|e| e.mu < 1.0).map(|e| e.multiplicity).sum();
    let distance_to_one = entries.iter().map(|e| (e.mu - 1.0).abs()).fold(f64::INFINITY, f64::min);
    Ok(SpectrumReport { entries, morse_index, distance_to_one, gap_tol })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_out_of_range_gamma() {
        assert!(matches!(solve_branch_point(20.0, 1e-10), Err(Error::Range { .. })));
    }

    #[test]
    fn theta_identity_holds() {
        let bp = solve_branch_point(3.0, 1e-10).unwrap();
        assert!((bp.theta_identity() - 1.0).abs() < 1e-13);
        assert!(bp.u(1.0).abs() < 1e-10);
        assert!((bp.u(0.0) - 3.0).abs() < 1e-15);
    }

    #[test]
    fn inertia_count_on_laplacian() {
        // -v'' = μ v on (0, π) with Neumann/Dirichlet: μ = (k + 1/2)²
        let n = 2000;
        let h = std::f64::consts::PI / n as f64;
        let mut p = Pencil { kd: vec![2.0 / h; n], ko: vec![-1.0 / h; n - 1], m: vec![h; n] };
        p.kd[0] *= 0.5;
        p.m[0] *= 0.5;
        assert!((p.eigenvalue(0) - 0.25).abs() < 1e-5);
        assert!((p.eigenvalue(1) - 2.25).abs() < 1e-4);
    }
}
