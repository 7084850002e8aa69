//! The standard Liouville bubble U(x) = -log(1 + |x|²/4), the kernel of
//! the operator -Δ - 2e^{2U}, and a catalog of exactly known moments.

use crate::error::Result;
use crate::quad::{integrate, integrate_to_infinity, Estimate, Tol};
use serde::Serialize;
use std::f64::consts::PI;

/// U at radius r.
#[inline]
pub fn bubble_radial(r: f64) -> f64 {
    -(0.25 * r * r).ln_1p()
}

/// e^{2U} at radius r, i.e. 16/(4 + r²)².
#[inline]
pub fn e2u_radial(r: f64) -> f64 {
    let q = 4.0 + r * r;
    16.0 / (q * q)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bubble {
    pub value: f64,
    pub grad: [f64; 2],
    pub e2u: f64,
}

pub fn bubble_u(x: [f64; 2]) -> Bubble {
    let r2 = x[0] * x[0] + x[1] * x[1];
    let q = 4.0 + r2;
    Bubble {
        value: -(0.25 * r2).ln_1p(),
        grad: [-2.0 * x[0] / q, -2.0 * x[1] / q],
        e2u: 16.0 / (q * q),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelFunction {
    Phi0,
    Phi1,
    Phi2,
}

impl KernelFunction {
    pub fn value(self, x: [f64; 2]) -> f64 {
        let q = 4.0 + x[0] * x[0] + x[1] * x[1];
        match self {
            KernelFunction::Phi0 => (8.0 - q) / q,
            KernelFunction::Phi1 => x[0] / q,
            KernelFunction::Phi2 => x[1] / q,
        }
    }

    /// Second partials (∂₁₁, ∂₂₂), assembled term by term.
    fn second_partials(self, x: [f64; 2]) -> [f64; 2] {
        let q = 4.0 + x[0] * x[0] + x[1] * x[1];
        let q2 = q * q;
        let q3 = q2 * q;
        // ∂ᵢᵢ(1/q) = -2/q² + 8xᵢ²/q³
        let inv_ii = |xi: f64| -2.0 / q2 + 8.0 * xi * xi / q3;
        match self {
            KernelFunction::Phi0 => [8.0 * inv_ii(x[0]), 8.0 * inv_ii(x[1])],
            KernelFunction::Phi1 | KernelFunction::Phi2 => {
                let (a, b) = if self == KernelFunction::Phi1 { (x[0], x[1]) } else { (x[1], x[0]) };
                // ∂_aa(a/q) = -6a/q² + 8a³/q³,  ∂_bb(a/q) = a(-2/q² + 8b²/q³)
                let daa = -6.0 * a / q2 + 8.0 * a * a * a / q3;
                let dbb = a * inv_ii(b);
                if self == KernelFunction::Phi1 { [daa, dbb] } else { [dbb, daa] }
            }
        }
    }

    /// Δφ + 2e^{2U}φ, which vanishes identically.
    pub fn residual(self, x: [f64; 2]) -> f64 {
        let d = self.second_partials(x);
        d[0] + d[1] + 2.0 * bubble_u(x).e2u * self.value(x)
    }
}

/// Fixed catalog of integrands over ℝ².
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum MomentTag {
    /// e^{2U}
    E2u,
    /// e^{2U}(4-r²)/(4+r²)
    E2uPhi0,
    /// e^{2U} r²/(4+r²)
    E2uR2Ratio,
    /// U e^{2U}(4-r²)/(4+r²)
    UE2uPhi0,
    /// U² e^{2U}(4-r²)/(4+r²)
    U2E2uPhi0,
    /// e^{2U}(x·∇U)
    E2uXGradU,
    /// 2e^{2U}(x·∇U)²
    TwoE2uXGradUSq,
    /// 2e^{2U}(∂₁U)²
    TwoE2uDx1USq,
    /// U e^{2U}
    UE2u,
    /// U² e^{2U}
    U2E2u,
    /// log|x| e^{2U}
    LogE2u,
    /// e^{2U} φ₁ φ₂
    E2uPhi1Phi2,
    /// e^{2U} φ₀ φ₁
    E2uPhi0Phi1,
}

impl MomentTag {
    pub const ALL: [MomentTag; 13] = [
        MomentTag::E2u,
        MomentTag::E2uPhi0,
        MomentTag::E2uR2Ratio,
        MomentTag::UE2uPhi0,
        MomentTag::U2E2uPhi0,
        MomentTag::E2uXGradU,
        MomentTag::TwoE2uXGradUSq,
        MomentTag::TwoE2uDx1USq,
        MomentTag::UE2u,
        MomentTag::U2E2u,
        MomentTag::LogE2u,
        MomentTag::E2uPhi1Phi2,
        MomentTag::E2uPhi0Phi1,
    ];

    pub fn name(self) -> &'static str {
        match self {
            MomentTag::E2u => "e2u",
            MomentTag::E2uPhi0 => "e2u_phi0",
            MomentTag::E2uR2Ratio => "e2u_r2_ratio",
            MomentTag::UE2uPhi0 => "u_e2u_phi0",
            MomentTag::U2E2uPhi0 => "u2_e2u_phi0",
            MomentTag::E2uXGradU => "e2u_x_grad_u",
            MomentTag::TwoE2uXGradUSq => "2e2u_x_grad_u_sq",
            MomentTag::TwoE2uDx1USq => "2e2u_dx1_u_sq",
            MomentTag::UE2u => "u_e2u",
            MomentTag::U2E2u => "u2_e2u",
            MomentTag::LogE2u => "log_e2u",
            MomentTag::E2uPhi1Phi2 => "e2u_phi1_phi2",
            MomentTag::E2uPhi0Phi1 => "e2u_phi0_phi1",
        }
    }

    /// Closed-form value where one is known.
    pub fn exact(self) -> Option<f64> {
        Some(match self {
            MomentTag::E2u => 4.0 * PI,
            MomentTag::E2uPhi0 => 0.0,
            MomentTag::E2uR2Ratio => 2.0 * PI,
            MomentTag::UE2uPhi0 => 2.0 * PI,
            MomentTag::U2E2uPhi0 => -6.0 * PI,
            MomentTag::E2uXGradU => -4.0 * PI,
            MomentTag::TwoE2uXGradUSq => 32.0 * PI / 3.0,
            MomentTag::TwoE2uDx1USq => 2.0 * PI / 3.0,
            MomentTag::UE2u => -4.0 * PI,
            MomentTag::U2E2u => 8.0 * PI,
            MomentTag::LogE2u => 4.0 * PI * 2f64.ln(),
            MomentTag::E2uPhi1Phi2 | MomentTag::E2uPhi0Phi1 => 0.0,
        })
    }

    /// Angular factor ∫₀^{2π} a(φ) dφ of the separable form g(r)·a(φ).
    fn angular(self) -> f64 {
        match self {
            MomentTag::TwoE2uDx1USq => PI,
            MomentTag::E2uPhi1Phi2 | MomentTag::E2uPhi0Phi1 => 0.0,
            _ => 2.0 * PI,
        }
    }

    fn has_log(self) -> bool {
        matches!(self, MomentTag::LogE2u)
    }

    /// Radial factor g(r).
    pub fn radial(self, r: f64) -> f64 {
        let q = 4.0 + r * r;
        let e = 16.0 / (q * q);
        let u = bubble_radial(r);
        let phi0 = (4.0 - r * r) / q;
        let xgu = -2.0 * r * r / q;
        match self {
            MomentTag::E2u => e,
            MomentTag::E2uPhi0 => e * phi0,
            MomentTag::E2uR2Ratio => e * r * r / q,
            MomentTag::UE2uPhi0 => u * e * phi0,
            MomentTag::U2E2uPhi0 => u * u * e * phi0,
            MomentTag::E2uXGradU => e * xgu,
            MomentTag::TwoE2uXGradUSq => 2.0 * e * xgu * xgu,
            // (∂₁U)² = cos²φ · 4r²/q²
            MomentTag::TwoE2uDx1USq => 2.0 * e * 4.0 * r * r / (q * q),
            MomentTag::UE2u => u * e,
            MomentTag::U2E2u => u * u * e,
            MomentTag::LogE2u => if r > 0.0 { r.ln() * e } else { 0.0 },
            MomentTag::E2uPhi1Phi2 => e * r * r / (q * q),
            MomentTag::E2uPhi0Phi1 => e * phi0 * r / q,
        }
    }

    /// The full integrand at a point, for the tensorized fallback.
    pub fn pointwise(self, x: [f64; 2]) -> f64 {
        let b = bubble_u(x);
        let r2 = x[0] * x[0] + x[1] * x[1];
        let q = 4.0 + r2;
        let phi0 = (4.0 - r2) / q;
        let xgu = x[0] * b.grad[0] + x[1] * b.grad[1];
        match self {
            MomentTag::E2u => b.e2u,
            MomentTag::E2uPhi0 => b.e2u * phi0,
            MomentTag::E2uR2Ratio => b.e2u * r2 / q,
            MomentTag::UE2uPhi0 => b.value * b.e2u * phi0,
            MomentTag::U2E2uPhi0 => b.value * b.value * b.e2u * phi0,
            MomentTag::E2uXGradU => b.e2u * xgu,
            MomentTag::TwoE2uXGradUSq => 2.0 * b.e2u * xgu * xgu,
            MomentTag::TwoE2uDx1USq => 2.0 * b.e2u * b.grad[0] * b.grad[0],
            MomentTag::UE2u => b.value * b.e2u,
            MomentTag::U2E2u => b.value * b.value * b.e2u,
            MomentTag::LogE2u => if r2 > 0.0 { 0.5 * r2.ln() * b.e2u } else { 0.0 },
            MomentTag::E2uPhi1Phi2 => b.e2u * KernelFunction::Phi1.value(x) * KernelFunction::Phi2.value(x),
            MomentTag::E2uPhi0Phi1 => b.e2u * KernelFunction::Phi0.value(x) * KernelFunction::Phi1.value(x),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BubbleMoment {
    pub tag: MomentTag,
    pub value: f64,
    pub error: f64,
}

/// ∫₀^∞ g(r) r dr through r = 2 tan s on [s0, π/2).
fn radial_tan<G: Fn(f64) -> f64>(g: &G, s0: f64, tol: Tol) -> Result<Estimate> {
    integrate(
        |s: f64| {
            let t = s.tan();
            let c = s.cos();
            let r = 2.0 * t;
            let v = g(r);
            if v == 0.0 || !r.is_finite() { 0.0 } else { v * r * 2.0 / (c * c) }
        },
        s0,
        0.5 * PI,
        tol,
    )
}

/// ∫₀^∞ g(r) r dr for a radial g. Log-weighted integrands are split at
/// r = 1 and the inner piece is mapped with r = e^{-t}.
pub fn radial_moment<G: Fn(f64) -> f64>(g: G, log_weighted: bool, tol: f64) -> Result<Estimate> {
    let t = Tol::abs(0.5 * tol).with_limit(10_000);
    if !log_weighted {
        return radial_tan(&g, 0.0, Tol::abs(tol).with_limit(10_000));
    }
    let inner = integrate_to_infinity(
        |t: f64| {
            let r = (-t).exp();
            g(r) * r * r
        },
        0.0,
        t,
    )?;
    let outer = radial_tan(&g, 0.5f64.atan(), t)?;
    Ok(Estimate {
        value: inner.value + outer.value,
        error: inner.error + outer.error,
        evals: inner.evals + outer.evals,
    })
}

pub fn moment(tag: MomentTag, tol: f64) -> Result<BubbleMoment> {
    let a = tag.angular();
    if a == 0.0 {
        return Ok(BubbleMoment { tag, value: 0.0, error: 0.0 });
    }
    let e = radial_moment(|r| tag.radial(r), tag.has_log(), tol / a)?;
    Ok(BubbleMoment { tag, value: a * e.value, error: a * e.error })
}

/// Truncated evaluation on [0, R] in decade panels, with the r⁻⁴ tail
/// added from its leading asymptotics. Returns (value, tail estimate).
pub fn moment_truncated(tag: MomentTag, radius: f64, tol: f64) -> Result<(f64, f64)> {
    let a = tag.angular();
    let mut edges = vec![0.0, 1.0];
    while *edges.last().unwrap() < radius {
        let next = (edges.last().unwrap() * 10.0).min(radius);
        edges.push(next);
    }
    let mut v = 0.0;
    let panels = (edges.len() - 1) as f64;
    for w in edges.windows(2) {
        let tol_p = Tol::abs(tol / (panels * a.max(1.0))).with_limit(10_000);
        v += integrate(|r| tag.radial(r) * r, w[0], w[1], tol_p)?.value;
    }
    let tail = tag.radial(radius) * radius * radius / 2.0;
    Ok((a * (v + tail), a * tail.abs()))
}

/// Tensorized nested adaptive quadrature of a general integrand over ℝ²,
/// in polar form with r = 2 tan s.
pub fn moment_tensor<F: Fn([f64; 2]) -> f64 + Sync>(f: F, tol: f64) -> Result<f64> {
    let inner_tol = Tol::abs(tol / (4.0 * PI)).with_limit(2000);
    let outer = integrate(
        |phi: f64| {
            let (sn, cs) = phi.sin_cos();
            radial_tan(&|r: f64| f([r * cs, r * sn]), 0.0, inner_tol)
                .map(|e| e.value)
                .unwrap_or(f64::NAN)
        },
        0.0,
        2.0 * PI,
        Tol::abs(tol).with_limit(2000),
    )?;
    Ok(outer.value)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum QuarterKind {
    Log,
    Log2,
}

/// ∫₀^∞ (t/(1+t²)² - 2t/(1+t²)³)·L(t) dt with L = log(1+t²) or its square.
pub fn scalar_integral_quarter(kind: QuarterKind) -> Result<f64> {
    scalar_integral_quarter_scaled(kind, 1.0)
}

pub fn scalar_integral_quarter_scaled(kind: QuarterKind, scale: f64) -> Result<f64> {
    let f = move |t: f64| {
        let p = 1.0 + t * t;
        let l = p.ln();
        let l = match kind {
            QuarterKind::Log => l,
            QuarterKind::Log2 => l * l,
        };
        scale * (t / (p * p) - 2.0 * t / (p * p * p)) * l
    };
    let tol = Tol::abs(1e-13).with_limit(10_000);
    let a = integrate(f, 0.0, 1.0, tol)?;
    let b = integrate_to_infinity(f, 1.0, tol)?;
    Ok(a.value + b.value)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bubble_values() {
        assert_eq!(bubble_u([0.0, 0.0]).value, 0.0);
        let b = bubble_u([2f64.sqrt(), 2f64.sqrt()]);
        assert!((b.value + 2f64.ln()).abs() < 1e-15);
        assert!((b.e2u - 0.25).abs() < 1e-15);
    }

    #[test]
    fn bubble_gradient_matches_finite_differences() {
        let x = [0.7, -1.3];
        let h = 1e-6;
        let b = bubble_u(x);
        let fd0 = (bubble_u([x[0] + h, x[1]]).value - bubble_u([x[0] - h, x[1]]).value) / (2.0 * h);
        let fd1 = (bubble_u([x[0], x[1] + h]).value - bubble_u([x[0], x[1] - h]).value) / (2.0 * h);
        assert!((b.grad[0] - fd0).abs() < 1e-9);
        assert!((b.grad[1] - fd1).abs() < 1e-9);
    }

    #[test]
    fn catalog_matches_exact_values() {
        for tag in MomentTag::ALL {
            let m = moment(tag, 1e-11).unwrap();
            let exact = tag.exact().unwrap();
            assert!((m.value - exact).abs() < 1e-9, "{}: {} vs {}", tag.name(), m.value, exact);
            assert!(m.error <= 1e-11);
        }
    }

    #[test]
    fn radial_and_pointwise_integrands_agree() {
        for tag in MomentTag::ALL {
            if tag.angular() != 2.0 * PI {
                continue;
            }
            for &(x, y) in &[(0.3, 0.4), (3.0, -4.0), (0.0, 0.01)] {
                let r = f64::hypot(x, y);
                let a = tag.radial(r);
                let b = tag.pointwise([x, y]);
                assert!((a - b).abs() <= 1e-13 * (1.0 + a.abs()), "{}", tag.name());
            }
        }
    }

    #[test]
    fn quarter_integrals() {
        assert!((scalar_integral_quarter(QuarterKind::Log).unwrap() - 0.25).abs() < 1e-10);
        assert!((scalar_integral_quarter(QuarterKind::Log2).unwrap() - 0.75).abs() < 1e-10);
        assert_eq!(scalar_integral_quarter_scaled(QuarterKind::Log, 0.0).unwrap(), 0.0);
    }

    #[test]
    fn kernel_residual_on_grid() {
        let mut worst: f64 = 0.0;
        for i in 0..500 {
            let t = i as f64 / 500.0;
            let r = 20.0 * t * t;
            let phi = 2.0 * PI * (i as f64 * 0.618_033_988_75).fract();
            let x = [r * phi.cos(), r * phi.sin()];
            for k in [KernelFunction::Phi0, KernelFunction::Phi1, KernelFunction::Phi2] {
                worst = worst.max(k.residual(x).abs());
            }
        }
        assert!(worst < 1e-10, "{worst}");
    }
}
