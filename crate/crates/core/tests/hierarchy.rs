use mtlab_core::liouville_core::{bubble_radial, e2u_radial};
use mtlab_core::radial_hierarchy::*;
use mtlab_core::Error;
use proptest::prelude::*;
use std::f64::consts::PI;
use std::sync::OnceLock;

fn hier() -> &'static Hierarchy {
    static H: OnceLock<Hierarchy> = OnceLock::new();
    H.get_or_init(|| hierarchy_profiles().unwrap())
}

fn consts() -> &'static ExpansionConstants {
    static C: OnceLock<ExpansionConstants> = OnceLock::new();
    C.get_or_init(|| expansion_constants(0.0, hier()))
}

/// Independent oracle: the three profiles and the six A-integrals carried
/// together as one ODE system in s = log r, started from zero data
/// at s = -20 and marched with RK4 to s = 30.
fn oracle_constants() -> [f64; 6] {
    fn rhs(s: f64, y: &[f64; 12]) -> [f64; 12] {
        let r = s.exp();
        let r2 = r * r;
        let u = bubble_radial(r);
        let e = e2u_radial(r);
        let (v, k, w) = (y[0], y[2], y[4]);
        let (u2, u3) = (u * u, u * u * u);
        let u4 = u2 * u2;
        let gv = e * (u2 + u);
        let gk = e * (0.5 * u4 + 2.0 * v * v + u3 + v * (2.0 * u2 + 4.0 * u + 1.0));
        let gs = e
            * (0.5 * u4 * u + u4 * u2 / 6.0 + (u4 + 4.0 * u3 + 3.0 * u2) * v
                + (2.0 * u2 + 6.0 * u + 3.0) * v * v + 4.0 / 3.0 * v * v * v
                + (4.0 * v + 2.0 * u2 + 4.0 * u + 1.0) * k);
        let i1 = e * (u + u2 + 2.0 * v);
        let i2 = e * (2.0 * k + v + 4.0 * u * v + u3 + 2.0 * v * v + 2.0 * v * u2 + 0.5 * u4);
        let i3 = e
            * (2.0 * w + k + 3.0 * v * v + 4.0 * u * k + 4.0 * v * k + 6.0 * v * v * u + 2.0 * k * u2
                + 4.0 * u3 * v + 2.0 * v * v * u2 + v * u4 + 3.0 * v * u2 + 4.0 / 3.0 * v * v * v
                + u4 * u2 / 6.0 + 0.5 * u4 * u);
        [
            y[1],
            -r2 * (2.0 * e * v + gv),
            y[3],
            -r2 * (2.0 * e * k + gk),
            y[5],
            -r2 * (2.0 * e * w + gs),
            0.5 * r2 * i1,
            0.5 * r2 * i2,
            0.5 * r2 * i3,
            r2 * s * e,
            r2 * s * i1,
            r2 * s * i2,
        ]
    }
    // the forcings vanish at the origin, so zero data at r = e^{-20} is
    // accurate to O(r⁴)
    let s0 = -20.0f64;
    let mut y = [0.0f64; 12];
    let h = 5e-4;
    let n = (50.0 / h) as usize;
    let mut s = s0;
    for _ in 0..n {
        y = mtlab_core::ode::rk4_step(&rhs, s, &y, h);
        s += h;
    }
    [y[6], y[7], y[8], y[9], y[10], y[11]]
}

#[test]
fn constants_match_ode_oracle() {
    let o = oracle_constants();
    let c = consts();
    for q in 0..6 {
        let tol = 1e-8 * (1.0 + o[q].abs());
        assert!((c.a[q] - o[q]).abs() < tol, "A{}: {} vs oracle {}", q + 1, c.a[q], o[q]);
    }
}

#[test]
fn frozen_constants() {
    let c = consts();
    let frozen = [1.0, 4.644934067, 40.93922131, 1.386294361, 5.031228428, 33.81105986];
    for q in 0..6 {
        assert!((c.a[q] - frozen[q]).abs() < 2e-8 * (1.0 + frozen[q].abs()), "A{} = {}", q + 1, c.a[q]);
    }
    assert!((c.b1() - (2.0 * 2f64.ln() - 1.0)).abs() < 1e-10);
    assert!(c.b2().abs() < 1e-8, "B2 = {}", c.b2());
    assert!((c.b3() + 8.922473285).abs() < 1e-7, "B3 = {}", c.b3());
}

#[test]
fn a1_is_one_and_a4_is_two_log_two() {
    let c = consts();
    assert!((c.a1() - 1.0).abs() < 1e-10);
    assert!((c.a4() - 2.0 * 2f64.ln()).abs() < 1e-9);
}

#[test]
fn a4_two_substitutions() {
    use mtlab_core::quad::{integrate, Tol};
    let tol = Tol::abs(1e-14);
    // r = 2 tan t
    let f1 = |t: f64| {
        let r = 2.0 * t.tan();
        let c = t.cos();
        r * r.ln() * e2u_radial(r) * 2.0 / (c * c)
    };
    let a = integrate(f1, 0.0, PI / 2.0, tol).unwrap().value;
    // r = e^t
    let f2 = |t: f64| {
        let r = t.exp();
        r * r * t * e2u_radial(r)
    };
    let b = integrate(f2, -40.0, 40.0, tol).unwrap().value;
    assert!((a - b).abs() < 1e-11);
    assert!((a - 2.0 * 2f64.ln()).abs() < 1e-11);
    assert!((consts().a4() - a).abs() < 1e-9);
}

#[test]
fn flux_constant_is_four_pi() {
    assert!((consts().c0 - 4.0 * PI).abs() < 1e-4);
}

#[test]
fn b1_with_zero_robin() {
    let c = consts();
    assert_eq!(c.b1(), -(c.a[0] - c.a[3]));
}

#[test]
fn v0_far_field_law() {
    let v0 = &hier().v0;
    let pred = predicted_log_coeff(forcing_v0).unwrap();
    assert!((pred + 2.0).abs() < 1e-9);
    let b = v0.farfield_log_coeff.unwrap();
    assert!((b - pred).abs() < 1e-5 * pred.abs(), "{b} vs {pred}");
    // r∂_r v₀ + 2 = O(log²r/r²)
    for &r in &[1e2, 1e3, 1e4] {
        let (_, d) = v0.eval_with_deriv(r);
        let dev = (r * d + 2.0).abs();
        let scale = r.ln().powi(2) / (r * r);
        assert!(dev < 40.0 * scale, "r={r}: {dev} vs {scale}");
    }
}

#[test]
fn profiles_vanish_at_origin() {
    let h = hier();
    for p in [&h.v0, &h.k0, &h.s0] {
        assert_eq!(p.values[0], 0.0);
        assert!(p.eval(1e-3).abs() < 1e-5);
        assert!(p.derivs[1].abs() < 1e-2);
    }
}

#[test]
fn residuals_below_threshold() {
    let h = hier();
    let rv = ode_residual(&h.v0, forcing_v0, 0, 1e3);
    let rk = ode_residual(&h.k0, |r| forcing_k0(r, h.v0.eval(r)), 0, 1e3);
    let rs = ode_residual(&h.s0, |r| forcing_s0(r, h.v0.eval(r), h.k0.eval(r)), 0, 1e3);
    assert!(rv < 1e-7 && rk < 1e-7 && rs < 1e-7, "{rv} {rk} {rs}");
}

#[test]
fn growth_bounds() {
    let h = hier();
    let bv = h.v0.growth_bound(0.5, 10.0, 1e4);
    assert!(bv.fitted_exponent < 0.5 && bv.constant < 1e3, "{bv:?}");
    let bk = h.k0.growth_bound(0.8, 10.0, 1e4);
    assert!(bk.fitted_exponent < 0.8 && bk.constant < 1e3, "{bk:?}");
    let bs = h.s0.growth_bound(0.95, 10.0, 1e4);
    assert!(bs.fitted_exponent < 0.95 && bs.constant < 1e3, "{bs:?}");
    let sup10 = |p: &RadialProfile| {
        p.grid.iter().zip(&p.values).filter(|(r, _)| **r <= 10.0).map(|(_, v)| v.abs()).fold(0.0, f64::max)
    };
    assert!(sup10(&h.k0) < 1e3 && sup10(&h.s0) < 1e3);
    for p in [&h.v0, &h.k0, &h.s0] {
        let b = p.growth_bound(0.5, 10.0, 1e4);
        assert!(b.terminal_exponent <= 0.5 && b.terminal_exponent < b.fitted_exponent, "{b:?}");
    }
}

#[test]
fn decomposition_identities() {
    let pts: Vec<[f64; 2]> = (0..40)
        .map(|i| {
            let t = i as f64 * 0.37 + 0.1;
            let r = 0.05 + 0.4 * i as f64;
            [r * t.cos(), r * t.sin()]
        })
        .collect();
    let res = decomposition_residuals(&hier().v0, &pts);
    assert!(res.iter().all(|&x| x < 1e-8), "{res:?}");
}

#[test]
fn csv_export() {
    let csv = hier().v0.to_csv();
    assert!(csv.starts_with("r,value\n"));
    assert_eq!(csv.lines().count(), hier().v0.grid.len() + 1);
}

#[test]
fn nonintegrable_and_bad_radius() {
    assert!(matches!(solve_inhomogeneous_radial(|t| 1.0 / (1.0 + t), 0, 0.0), Err(Error::NonintegrableForcing(_))));
    assert!(matches!(fundamental_solutions(-1.0), Err(Error::NonpositiveRadius(_))));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn wronskian_constant(logr in -8.0f64..10.0) {
        let r = logr.exp();
        let f = fundamental_with_derivs(r).unwrap();
        prop_assert!((r * (f.du0 * f.u1 - f.du1 * f.u0) + 1.0).abs() < 1e-9);
    }

    #[test]
    fn fundamental_residual(logr in -6.0f64..8.0) {
        let r = logr.exp();
        let f = fundamental_with_derivs(r).unwrap();
        let e = e2u_radial(r);
        let scale = 1.0 + f.d2u1.abs() + f.du1.abs() / r;
        prop_assert!((-f.d2u0 - f.du0 / r - 2.0 * e * f.u0).abs() < 1e-9);
        prop_assert!((-f.d2u1 - f.du1 / r - 2.0 * e * f.u1).abs() < 1e-12 * scale + 1e-10);
    }

    #[test]
    fn profile_interpolation_is_continuous(r in 0.0f64..1e6) {
        let v0 = &hier().v0;
        let d = 1e-9 * (1.0 + r);
        prop_assert!((v0.eval(r + d) - v0.eval(r)).abs() < 1e-6);
    }
}
