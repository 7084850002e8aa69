use mtlab_core::asymptotics_reporter::*;
use mtlab_core::radial_hierarchy::{expansion_constants, hierarchy_profiles, ExpansionConstants};
use mtlab_core::radial_solver::{solve_branch, BranchPoint};
use mtlab_core::Error;
use proptest::prelude::*;
use std::f64::consts::PI;
use std::sync::OnceLock;

fn constants() -> &'static ExpansionConstants {
    static C: OnceLock<ExpansionConstants> = OnceLock::new();
    C.get_or_init(|| expansion_constants(0.0, &hierarchy_profiles().unwrap()))
}

fn branch() -> &'static Vec<BranchPoint> {
    static B: OnceLock<Vec<BranchPoint>> = OnceLock::new();
    B.get_or_init(|| {
        let gs: Vec<f64> = (3..=10).map(|g| g as f64).collect();
        solve_branch(&gs, 1e-10).into_iter().map(|r| r.unwrap()).collect()
    })
}

/// Branch samples lying exactly on √λγ = β₀ + β₁λ + β₂λ².
fn synthetic_lambda_gamma(beta: [f64; 3]) -> Vec<BranchSample> {
    (0..8)
        .map(|i| {
            let lambda = 0.015 + 0.01 * i as f64;
            let gamma = (beta[0] + beta[1] * lambda + beta[2] * lambda * lambda) / lambda.sqrt();
            BranchSample { gamma, lambda, c_lambda_gamma: 4.0 * PI }
        })
        .collect()
}

#[test]
fn lambda_gamma_round_trip() {
    let beta = [1.2, 0.3, -0.7];
    let s = synthetic_lambda_gamma(beta);
    assert!(s.iter().all(|p| (4.0..=10.0).contains(&p.gamma)), "{s:?}");
    let r = fit_lambda_gamma(&s, constants()).unwrap();
    for k in 0..3 {
        assert!((r.coefficients[k] - beta[k]).abs() < 1e-10, "{:?}", r.coefficients);
    }
    assert!(r.rss < 1e-24);
}

#[test]
fn c_lambda_exact_model_passes_and_nested_model_is_worse() {
    let s: Vec<BranchSample> = (4..=10)
        .map(|g| {
            let g = g as f64;
            BranchSample { gamma: g, lambda: 1.5 / (g * g), c_lambda_gamma: 4.0 * PI * (1.0 + 1.0 / (g * g)) }
        })
        .collect();
    let r = fit_c_lambda(&s).unwrap();
    assert_eq!(r.verdict, Verdict::Pass, "{r:?}");
    assert!(r.nested_rss.unwrap() >= 10.0 * r.rss);
    // no 1/γ² content: the nested model is as good, so the check fails
    let flat: Vec<BranchSample> = s.iter().map(|p| BranchSample { c_lambda_gamma: 4.0 * PI + 1e-3 * (p.gamma - 7.0), ..*p }).collect();
    assert_eq!(fit_c_lambda(&flat).unwrap().verdict, Verdict::Fail);
}

#[test]
fn too_few_points_in_window() {
    let s: Vec<BranchSample> = (0..5).map(|i| BranchSample { gamma: 4.0 + i as f64, lambda: 0.05, c_lambda_gamma: 13.0 }).collect();
    let err = fit_c_lambda(&s).unwrap_err();
    assert_eq!(err.code(), "INSUFFICIENT_POINTS");
    assert!(matches!(fit_lambda_gamma(&s, constants()), Err(Error::InsufficientPoints { need: 6, got: 5 })));
}

#[test]
fn radial_branch_fits_track_expansions() {
    let s: Vec<BranchSample> = branch().iter().map(BranchSample::from).collect();
    let c = fit_c_lambda(&s).unwrap();
    assert_eq!(c.n_points, 7);
    assert!((c.coefficients[0] / (4.0 * PI) - 1.0).abs() < 0.02, "{c:?}");
    assert!(c.nested_rss.unwrap() >= 10.0 * c.rss);
    let l = fit_lambda_gamma(&s, constants()).unwrap();
    let beta0 = constants().lambda_gamma_coeffs()[0];
    assert!((l.coefficients[0] / beta0 - 1.0).abs() < 0.03, "{l:?}");
    assert!(l.std_errors.iter().all(|e| e.is_finite() && *e > 0.0));
}

#[test]
fn eigen_trends_skip_unresolved_gaps() {
    let eig: Vec<EigenSample> = branch().iter().map(|b| EigenSample::compute(b).unwrap()).collect();
    let reps = eigenvalue_trends(&eig, &TrendTargets::default()).unwrap();
    let ids: Vec<&str> = reps.iter().map(|r| r.id.as_str()).collect();
    assert_eq!(ids, ["mu1_bound", "mu4_limit", "mu2_theta"]);
    let mu4 = &reps[1].comparisons[0];
    assert!((mu4.value / 3.0 - 1.0).abs() < 0.1, "{mu4:?}");
    // at γ = 8 the μ₂ gap is far below the solver error
    let late = TrendTargets { mu2_gamma: 8.0, ..Default::default() };
    let reps = eigenvalue_trends(&eig, &late).unwrap();
    assert_eq!(reps[2].verdict, Verdict::Skipped);
    assert!(reps[2].comparisons[0].note.as_ref().unwrap().contains("SIGNAL_BELOW_NOISE"));
    assert_eq!(reps[1].n_points, 8);
}

#[test]
fn render_table_has_a_line_per_check() {
    let s = synthetic_lambda_gamma([1.2, 0.3, -0.7]);
    let r = fit_lambda_gamma(&s, constants()).unwrap();
    let t = render_table(&[r]);
    assert_eq!(t.lines().count(), 1 + 2 + 1);
    assert!(t.contains("beta0") && t.contains("nested rss ratio"));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn least_squares_recovers_quadratics(c0 in -5.0f64..5.0, c1 in -5.0f64..5.0, c2 in -5.0f64..5.0, n in 3usize..12) {
        let rows: Vec<Vec<f64>> = (0..n).map(|i| { let x = i as f64 / n as f64; vec![1.0, x, x * x] }).collect();
        let y: Vec<f64> = rows.iter().map(|r| c0 + c1 * r[1] + c2 * r[2]).collect();
        let f = least_squares(&rows, &y).unwrap();
        prop_assert!((f.coefficients[0] - c0).abs() < 1e-9);
        prop_assert!((f.coefficients[1] - c1).abs() < 1e-8);
        prop_assert!((f.coefficients[2] - c2).abs() < 1e-8);
    }

    #[test]
    fn verdicts_are_deterministic(shift in -1.0f64..1.0) {
        let s: Vec<BranchSample> = (4..=10)
            .map(|g| { let g = g as f64; BranchSample { gamma: g, lambda: 1.5 / (g * g), c_lambda_gamma: 4.0 * PI + shift / (g * g) } })
            .collect();
        let a = fit_c_lambda(&s).unwrap();
        let b = fit_c_lambda(&s).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn adding_a_point_to_the_window_never_breaks_the_fit(extra in 4.0f64..10.0) {
        let mut s = synthetic_lambda_gamma([1.2, 0.3, -0.7]);
        let lambda = (0.015f64).max(1.0 / (extra * extra));
        s.push(BranchSample { gamma: (1.2 + 0.3 * lambda - 0.7 * lambda * lambda) / lambda.sqrt(), lambda, c_lambda_gamma: 4.0 * PI });
        let r = fit_lambda_gamma(&s, constants()).unwrap();
        prop_assert!((r.coefficients[0] - 1.2).abs() < 1e-9);
    }
}
