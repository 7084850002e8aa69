use mtlab_core::geometry_green::*;
use mtlab_core::mesh::{Mesh, RingOptions};
use mtlab_core::Error;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;

fn random_disk_point(rng: &mut ChaCha8Rng, rmax: f64) -> [f64; 2] {
    let r = rmax * rng.random::<f64>().sqrt();
    let t = 2.0 * PI * rng.random::<f64>();
    [r * t.cos(), r * t.sin()]
}

fn disk_fem(h: f64) -> GreenOracle {
    GreenOracle::fem(Domain::unit_disk(), h).unwrap()
}

#[test]
fn disk_green_examples() {
    let g = GreenOracle::new(Domain::unit_disk()).unwrap();
    assert_eq!(g.method, GreenMethod::ClosedFormDisk);
    let v = g.green([0.0, 0.0], [0.5, 0.0]).unwrap();
    assert!((v - 0.110318).abs() < 1e-6);
    assert!((v + 0.5f64.ln() / (2.0 * PI)).abs() < 1e-15);
    let a = g.green([0.3, 0.0], [0.0, 0.4]).unwrap();
    let b = g.green([0.0, 0.4], [0.3, 0.0]).unwrap();
    assert!((a - b).abs() < 1e-10);
    assert!(g.green([0.3, 0.0], [0.6, 0.8]).unwrap().abs() < 1e-15);
    assert_eq!(g.robin_grad([0.0, 0.0]).unwrap(), [0.0, 0.0]);
    let hs = g.robin_hess([0.0, 0.0]).unwrap();
    assert!((hs[0][0] - 0.318310).abs() < 1e-6 && (hs[1][1] - 0.318310).abs() < 1e-6 && hs[0][1] == 0.0);
}

#[test]
fn disk_fem_matches_images_at_second_order() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let pairs: Vec<([f64; 2], [f64; 2])> = (0..100)
        .map(|_| loop {
            let x = random_disk_point(&mut rng, 0.85);
            let y = random_disk_point(&mut rng, 0.85);
            if (x[0] - y[0]).hypot(x[1] - y[1]) > 0.05 {
                break (x, y);
            }
        })
        .collect();
    let exact = GreenOracle::new(Domain::unit_disk()).unwrap();
    let mut errs = Vec::new();
    for h in [0.08, 0.04] {
        let fem = disk_fem(h);
        let e = pairs
            .iter()
            .map(|&(x, y)| (fem.green(x, y).unwrap() - exact.green(x, y).unwrap()).abs())
            .fold(0.0, f64::max);
        assert!(e < 0.5 * h * h, "h={h}: {e}");
        errs.push(e);
    }
    assert!(errs[0] / errs[1] > 2.8, "{errs:?}");
}

#[test]
fn fem_robin_and_hessian_at_center() {
    let fem = disk_fem(0.03);
    assert!(fem.robin([0.0, 0.0]).unwrap().abs() < 2e-3);
    let h = fem.robin_hess([0.0, 0.0]).unwrap();
    for i in 0..2 {
        assert!((h[i][i] - 1.0 / PI).abs() < 1e-3, "{h:?}");
    }
    assert!(h[0][1].abs() < 1e-3);
    assert!(fem.harmonic_residual([0.1, 0.2]) < 1e-10);
}

#[test]
fn fem_regular_part_is_symmetric() {
    let fem = GreenOracle::fem(Domain::square(2.0), 0.04).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..20 {
        let x = [rng.random_range(-0.8..0.8), rng.random_range(-0.8..0.8)];
        let y = [rng.random_range(-0.8..0.8), rng.random_range(-0.8..0.8)];
        let a = fem.regular(x, y).unwrap();
        let b = fem.regular(y, x).unwrap();
        assert!((a - b).abs() < 2e-3, "{a} {b}");
    }
}

#[test]
fn square_fem_agrees_with_theta_formula() {
    let exact = GreenOracle::new(Domain::square(2.0)).unwrap();
    let fem = GreenOracle::fem(Domain::square(2.0), 0.03).unwrap();
    for x in [[0.0, 0.0], [0.3, -0.2], [-0.5, 0.5]] {
        let y = [0.1, 0.45];
        let e = (exact.green(x, y).unwrap() - fem.green(x, y).unwrap()).abs();
        assert!(e < 1e-3, "{x:?}: {e}");
    }
}

#[test]
fn polygon_uses_fem() {
    let d = Domain::new(Shape::Polygon { vertices: vec![[0.0, 0.0], [2.0, 0.0], [2.0, 1.0], [0.0, 2.0]] }).unwrap();
    let g = GreenOracle::new(d).unwrap();
    assert_eq!(g.method, GreenMethod::HarmonicFem);
    let v = g.green([0.6, 0.6], [1.2, 0.5]).unwrap();
    assert!(v > 0.0);
    assert!(g.green([0.6, 0.6], [1.0, 1.5]).unwrap().abs() < 1e-3);
}

#[test]
fn square_robin_multistart_converges_to_center() {
    let g = GreenOracle::new(Domain::square(2.0)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut found: Vec<[f64; 2]> = Vec::new();
    for _ in 0..20 {
        let x0 = [rng.random_range(-0.8..0.8), rng.random_range(-0.8..0.8)];
        let x = g.robin_descent(x0, 1e-12, 200).unwrap();
        if !found.iter().any(|p| (p[0] - x[0]).hypot(p[1] - x[1]) < 1e-6) {
            found.push(x);
        }
    }
    assert_eq!(found.len(), 1, "{found:?}");
    assert!(found[0][0].abs() < 1e-8 && found[0][1].abs() < 1e-8);
}

#[test]
fn rectangle_robin_minimum_is_strict() {
    let g = GreenOracle::new(Domain::new(Shape::Rectangle { width: 3.0, height: 1.0 }).unwrap()).unwrap();
    let h = g.robin_hess([0.0, 0.0]).unwrap();
    assert!(h[0][0] > 0.0 && h[1][1] > 0.0 && h[0][0] * h[1][1] > h[0][1] * h[0][1]);
    assert!(g.robin_grad([0.0, 0.0]).unwrap().iter().all(|v| v.abs() < 1e-13));
}

#[test]
fn error_codes() {
    let g = GreenOracle::new(Domain::unit_disk()).unwrap();
    assert_eq!(g.green([0.1, 0.0], [0.1, 0.0]).unwrap_err().code(), "COINCIDENT_POINTS");
    assert_eq!(g.green([0.1, 0.0], [2.0, 0.0]).unwrap_err().code(), "OUTSIDE_DOMAIN");
    assert!(matches!(g.robin([0.0, 0.99999]), Err(Error::TooCloseToBoundary { .. })));
    let fem = disk_fem(0.08);
    let h = fem.fd_step();
    assert!(fem.robin([1.0 - 4.0 * h, 0.0]).is_err());
}

#[test]
fn mesh_attachment_checks_boundary() {
    let d = Domain::unit_disk();
    let m = d.ring_mesh(RingOptions::uniform([0.0, 0.0], 0.2, 2.0)).unwrap();
    let text = m.to_text();
    let back = Mesh::from_text(&text).unwrap();
    assert!(Domain::unit_disk().with_mesh(back).is_ok());
    let mut nodes = m.nodes.clone();
    let b = m.boundary[0];
    nodes[b] = [nodes[b][0] * 0.99, nodes[b][1] * 0.99];
    let bad = Mesh::new(nodes, m.elements.clone(), m.boundary.clone()).unwrap();
    assert_eq!(Domain::unit_disk().with_mesh(bad).unwrap_err().code(), "INVALID_MESH");
}

#[test]
fn shape_json_round_trip() {
    let s = Shape::Punctured { base: Box::new(Shape::UnitDisk), center: [0.3, 0.0], radius: 0.05 };
    let j = serde_json::to_string(&s).unwrap();
    let back: Shape = serde_json::from_str(&j).unwrap();
    assert_eq!(s, back);
    let r: Shape = serde_json::from_str(r#"{"kind":"rectangle","width":2.0,"height":2.0}"#).unwrap();
    assert_eq!(r, Shape::Rectangle { width: 2.0, height: 2.0 });
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn closed_forms_are_symmetric(a in 0.0f64..0.9, t in 0.0f64..6.28, b in 0.0f64..0.9, s in 0.0f64..6.28) {
        let x = [a * t.cos(), a * t.sin()];
        let y = [b * s.cos(), b * s.sin()];
        prop_assume!((x[0] - y[0]).hypot(x[1] - y[1]) > 1e-3);
        let disk = GreenOracle::new(Domain::unit_disk()).unwrap();
        prop_assert!((disk.regular(x, y).unwrap() - disk.regular(y, x).unwrap()).abs() < 1e-12);
        let holed = GreenOracle::new(Domain::punctured_disk([0.3, 0.0], 0.05).unwrap()).unwrap();
        if holed.domain.contains(x) && holed.domain.contains(y) {
            prop_assert!((holed.regular(x, y).unwrap() - holed.regular(y, x).unwrap()).abs() < 1e-10);
        }
        let sq = GreenOracle::new(Domain::square(1.5)).unwrap();
        let (xs, ys) = ([x[0] * 0.75, x[1] * 0.75], [y[0] * 0.75, y[1] * 0.75]);
        if sq.domain.contains(xs) && sq.domain.contains(ys) {
            prop_assert!((sq.regular(xs, ys).unwrap() - sq.regular(ys, xs).unwrap()).abs() < 1e-10);
        }
    }

    #[test]
    fn rectangle_green_positive_inside(x in -0.9f64..0.9, y in -0.4f64..0.4, u in -0.9f64..0.9, v in -0.4f64..0.4) {
        prop_assume!((x - u).hypot(y - v) > 1e-3);
        let g = GreenOracle::new(Domain::new(Shape::Rectangle { width: 2.0, height: 1.0 }).unwrap()).unwrap();
        prop_assert!(g.green([x, y], [u, v]).unwrap() > 0.0);
    }
}
