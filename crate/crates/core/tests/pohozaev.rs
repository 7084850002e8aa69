use mtlab_core::geometry_green::{Domain, GreenOracle};
use mtlab_core::pohozaev::*;
use mtlab_core::radial_solver::solve_branch_point;
use mtlab_core::Error;
use proptest::prelude::*;
use std::f64::consts::PI;

fn disk() -> (Domain, GreenOracle) {
    (Domain::unit_disk(), GreenOracle::new(Domain::unit_disk()).unwrap())
}

/// ∇ₓ of ∂G(y,x)/∂y_h at y = c, by fourth-order differences in y.
fn d_source_grad(g: &GreenOracle, c: [f64; 2], h: usize, x: [f64; 2]) -> [f64; 2] {
    let e = 1e-4;
    let w = [1.0, -8.0, 8.0, -1.0];
    let o = [-2.0, -1.0, 1.0, 2.0];
    let mut acc = [0.0; 2];
    for k in 0..4 {
        let mut y = c;
        y[h] += o[k] * e;
        let gr = g.green_grad(x, y).unwrap();
        acc[0] += w[k] * gr[0];
        acc[1] += w[k] * gr[1];
    }
    [acc[0] / (12.0 * e), acc[1] / (12.0 * e)]
}

#[test]
fn p_of_green_is_minus_one_over_two_pi() {
    let (d, g) = disk();
    for c in [[0.0, 0.0], [0.2, 0.1], [-0.3, 0.25]] {
        let u = |x: [f64; 2]| g.green_grad(x, c).unwrap();
        let p = p_form(&d, &u, &u, c, 0.2).unwrap();
        assert_eq!(p.nodes, 2048);
        assert!((p.value + 1.0 / (2.0 * PI)).abs() < 1e-6, "{c:?}: {}", p.value);
    }
}

#[test]
fn q_of_green_is_minus_robin_gradient() {
    let (d, g) = disk();
    let c = [0.2, 0.1];
    let u = |x: [f64; 2]| g.green_grad(x, c).unwrap();
    let gr = g.robin_grad(c).unwrap();
    for axis in 0..2 {
        let q = q_form(&d, &u, &u, c, 0.2, axis).unwrap();
        assert!((q.value + gr[axis]).abs() < 1e-5, "axis {axis}: {} vs {}", q.value, -gr[axis]);
    }
}

#[test]
fn mixed_forms_give_robin_derivatives() {
    let (d, g) = disk();
    let c = [0.25, -0.15];
    let u = |x: [f64; 2]| g.green_grad(x, c).unwrap();
    let gr = g.robin_grad(c).unwrap();
    let hs = g.robin_hess(c).unwrap();
    for h in 0..2 {
        let v = |x: [f64; 2]| d_source_grad(&g, c, h, x);
        let p = p_form(&d, &u, &v, c, 0.2).unwrap().value;
        assert!((p + 0.5 * gr[h]).abs() < 1e-6, "P h={h}: {p} vs {}", -0.5 * gr[h]);
        for i in 0..2 {
            let q = q_form(&d, &u, &v, c, 0.2, i).unwrap().value;
            assert!((q + 0.5 * hs[i][h]).abs() < 1e-6, "Q i={i} h={h}: {q} vs {}", -0.5 * hs[i][h]);
        }
    }
}

#[test]
fn green_forms_do_not_depend_on_radius() {
    let (d, g) = disk();
    let c = [0.1, 0.2];
    let u = |x: [f64; 2]| g.green_grad(x, c).unwrap();
    let rep = radius_independence_check(&d, &u, &u, c, &[0.1, 0.15, 0.2]).unwrap();
    assert!(rep.p_deviation <= 1e-8 && rep.q_deviation <= 1e-8, "{rep:?}");
    let v = |x: [f64; 2]| d_source_grad(&g, c, 0, x);
    let rep = radius_independence_check(&d, &u, &v, c, &[0.1, 0.15, 0.2]).unwrap();
    let target = -0.5 * g.robin_grad(c).unwrap()[0];
    assert!(rep.p_values.iter().all(|p| (p - target).abs() < 1e-6), "{rep:?}");
}

#[test]
fn harmonic_polynomials() {
    let d = Domain::unit_disk();
    let u = |_: [f64; 2]| [1.0, 0.0];
    let v = |_: [f64; 2]| [0.0, 1.0];
    let rep = radius_independence_check(&d, &u, &v, [0.0, 0.0], &[0.1, 0.2, 0.3, 0.4]).unwrap();
    assert!(rep.q_values.iter().all(|q| (q[0] - rep.q_values[0][0]).abs() < 1e-14));
}

#[test]
fn non_harmonic_field_rejected() {
    let d = Domain::unit_disk();
    let u = |x: [f64; 2]| [2.0 * x[0], 2.0 * x[1]];
    assert!(matches!(radius_independence_check(&d, &u, &u, [0.0, 0.0], &[0.1, 0.2]), Err(Error::NotHarmonic(_))));
}

#[test]
fn node_doubling_is_converged() {
    let (_, g) = disk();
    let c = [0.2, 0.1];
    let u = |x: [f64; 2]| g.green_grad(x, c).unwrap();
    let a = p_form_n(&u, &u, c, 0.2, 2048);
    let b = p_form_n(&u, &u, c, 0.2, 4096);
    assert!((a - b).abs() <= 1e-9);
    let a = q_form_n(&u, &u, c, 0.2, 1, 2048);
    let b = q_form_n(&u, &u, c, 0.2, 1, 4096);
    assert!((a - b).abs() <= 1e-9);
}

#[test]
fn radial_solution_identities() {
    let bp = solve_branch_point(5.0, 1e-10).unwrap();
    assert!((bp.exp_mass_within(1.0) - bp.lambda_int_exp).abs() < 1e-9 * bp.lambda_int_exp);
    let sol = RadialSolution::new(&bp);
    let checks = solution_identity_check(&sol, 0.3).unwrap();
    let puu = &checks[0];
    assert!(puu.gap <= 1e-6, "{puu:?}");
    for q in &checks[1..] {
        assert!(q.lhs.abs() <= 1e-10 && q.rhs.abs() <= 1e-10, "{q:?}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn forms_are_bilinear(a in -2.0f64..2.0, b in -2.0f64..2.0, c1 in -1.0f64..1.0, c2 in -1.0f64..1.0) {
        let u = move |x: [f64; 2]| [c1 + x[0] * x[1], c2 - x[0] * x[0]];
        let w = move |x: [f64; 2]| [x[1].sin(), c1 * x[0].cos()];
        let v = move |x: [f64; 2]| [x[0] + c2, x[1] * x[1]];
        let s = move |x: [f64; 2]| {
            let (p, q) = (u(x), w(x));
            [a * p[0] + b * q[0], a * p[1] + b * q[1]]
        };
        let c = [0.1, -0.2];
        let lhs = p_form_n(&s, &v, c, 0.3, 256);
        let rhs = a * p_form_n(&u, &v, c, 0.3, 256) + b * p_form_n(&w, &v, c, 0.3, 256);
        prop_assert!((lhs - rhs).abs() < 1e-12);
        let lhs = q_form_n(&s, &v, c, 0.3, 0, 256);
        let rhs = a * q_form_n(&u, &v, c, 0.3, 0, 256) + b * q_form_n(&w, &v, c, 0.3, 0, 256);
        prop_assert!((lhs - rhs).abs() < 1e-12);
    }
}
