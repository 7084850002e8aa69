//! Kirchhoff–Routh function
//!
//!   Φ(y, α) = Σ αᵢ² 𝓡(yᵢ) - Σ_{i≠j} αᵢαⱼ G(yᵢ, yⱼ) + ½Σ(αᵢ² - αᵢ² ln αᵢ)
//!
//! and a multistart Newton search for its critical points. For k = 1 the
//! weight is frozen at 1 and the search is over critical points of 𝓡.

use crate::error::{Error, Result};
use crate::geometry_green::GreenOracle;
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

pub const COLLISION_DIST: f64 = 1e-6;
pub const GRAD_TOL: f64 = 1e-8;
pub const DEDUP_RADIUS: f64 = 1e-4;
/// Iterates closer than this fraction of the inradius to ∂Ω are rejected.
pub const BOUNDARY_MARGIN: f64 = 0.02;
pub const MIN_SEEDS: usize = 50;
/// Admissible weights during the search. As α → 0 the gradient vanishes
/// with α and the configuration degenerates to fewer peaks.
pub const ALPHA_RANGE: (f64, f64) = (1e-3, 1e3);

#[derive(Debug, Clone, PartialEq)]
pub struct PhiValue {
    pub value: f64,
    /// ∂Φ/∂y₁, …, ∂Φ/∂y_k (two entries each), then ∂Φ/∂α₁, …, ∂Φ/∂α_k.
    pub grad: Vec<f64>,
}

fn check_config(oracle: &GreenOracle, points: &[[f64; 2]], alphas: &[f64]) -> Result<()> {
    if points.len() != alphas.len() || points.is_empty() {
        return Err(Error::InsufficientPoints { need: points.len().max(1), got: alphas.len() });
    }
    for (i, p) in points.iter().enumerate() {
        if !oracle.domain.contains(*p) {
            return Err(Error::OutsideDomain(p[0], p[1]));
        }
        for q in &points[i + 1..] {
            let d = (p[0] - q[0]).hypot(p[1] - q[1]);
            if d < COLLISION_DIST {
                return Err(Error::CollidingPoints(d));
            }
        }
    }
    if let Some(a) = alphas.iter().find(|a| !(**a > 0.0)) {
        return Err(Error::ConfigInvalid { field: "alphas".into(), reason: format!("weights must be positive, got {a}") });
    }
    Ok(())
}

/// Φ and its gradient in all locations and weights.
pub fn phi(oracle: &GreenOracle, points: &[[f64; 2]], alphas: &[f64]) -> Result<PhiValue> {
    check_config(oracle, points, alphas)?;
    let k = points.len();
    let mut value = 0.0;
    let mut grad = vec![0.0; 3 * k];
    for i in 0..k {
        let (a, y) = (alphas[i], points[i]);
        let r = oracle.robin(y)?;
        let gr = oracle.robin_grad(y)?;
        value += a * a * r + 0.5 * (a * a - a * a * a.ln());
        grad[2 * i] += a * a * gr[0];
        grad[2 * i + 1] += a * a * gr[1];
        grad[2 * k + i] += 2.0 * a * r + 0.5 * a - a * a.ln();
        for j in 0..k {
            if j == i {
                continue;
            }
            let g = oracle.green(y, points[j])?;
            let gg = oracle.green_grad(y, points[j])?;
            value -= a * alphas[j] * g;
            // the pair (i, j) appears twice in the sum
            grad[2 * i] -= 2.0 * a * alphas[j] * gg[0];
            grad[2 * i + 1] -= 2.0 * a * alphas[j] * gg[1];
            grad[2 * k + i] -= 2.0 * alphas[j] * g;
        }
    }
    Ok(PhiValue { value, grad })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CriticalPoint {
    pub points: Vec<[f64; 2]>,
    pub alphas: Vec<f64>,
    pub value: f64,
    pub grad_norm: f64,
    /// Eigenvalues of the Hessian in the searched variables, ascending.
    pub hessian_eigenvalues: Vec<f64>,
}

impl CriticalPoint {
    /// Number of negative Hessian eigenvalues.
    pub fn index(&self) -> usize {
        self.hessian_eigenvalues.iter().filter(|e| **e < 0.0).count()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CriticalPointSet {
    pub k: usize,
    pub points: Vec<CriticalPoint>,
    pub seeds: usize,
    pub rng_seed: u64,
    pub dedup_radius: f64,
    /// Number of seeds whose Newton run met the gradient tolerance.
    pub converged_runs: usize,
}

/// Search variables: locations, plus log-weights when k ≥ 2.
struct Problem<'a> {
    oracle: &'a GreenOracle,
    k: usize,
    margin: f64,
}

impl Problem<'_> {
    fn dim(&self) -> usize {
        if self.k == 1 { 2 } else { 3 * self.k }
    }

    fn unpack(&self, z: &[f64]) -> (Vec<[f64; 2]>, Vec<f64>) {
        let pts = (0..self.k).map(|i| [z[2 * i], z[2 * i + 1]]).collect();
        let al = if self.k == 1 { vec![1.0] } else { (0..self.k).map(|i| z[2 * self.k + i].exp()).collect() };
        (pts, al)
    }

    fn admissible(&self, z: &[f64]) -> bool {
        let (pts, al) = self.unpack(z);
        if al.iter().any(|a| !(ALPHA_RANGE.0..=ALPHA_RANGE.1).contains(a)) {
            return false;
        }
        for (i, p) in pts.iter().enumerate() {
            if self.oracle.domain.boundary_distance(*p) < self.margin {
                return false;
            }
            for q in &pts[i + 1..] {
                if (p[0] - q[0]).hypot(p[1] - q[1]) < 10.0 * COLLISION_DIST {
                    return false;
                }
            }
        }
        true
    }

    fn grad(&self, z: &[f64]) -> Option<Vec<f64>> {
        if !self.admissible(z) {
            return None;
        }
        let (pts, al) = self.unpack(z);
        let pv = phi(self.oracle, &pts, &al).ok()?;
        let mut g = pv.grad[..2 * self.k].to_vec();
        if self.k > 1 {
            // chain rule for α = e^a
            for i in 0..self.k {
                g.push(pv.grad[2 * self.k + i] * al[i]);
            }
        }
        Some(g)
    }

    fn hessian(&self, z: &[f64]) -> Option<DMatrix<f64>> {
        let n = self.dim();
        let e = 1e-4;
        let mut h = DMatrix::zeros(n, n);
        for j in 0..n {
            let mut zp = z.to_vec();
            let mut zm = z.to_vec();
            zp[j] += e;
            zm[j] -= e;
            let (gp, gm) = (self.grad(&zp)?, self.grad(&zm)?);
            for i in 0..n {
                h[(i, j)] = (gp[i] - gm[i]) / (2.0 * e);
            }
        }
        Some(0.5 * (&h + h.transpose()))
    }

    /// Newton on ∇Φ = 0 with backtracking on ½|∇Φ|², falling back to
    /// steepest descent of that merit when the Newton step stalls.
    fn newton(&self, mut z: Vec<f64>) -> Option<Vec<f64>> {
        let mut g = self.grad(&z)?;
        let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
        for _ in 0..100 {
            let gn = norm(&g);
            if gn <= 1e-2 * GRAD_TOL {
                return Some(z);
            }
            let h = self.hessian(&z)?;
            let gv = DVector::from_column_slice(&g);
            let newton = h.clone().lu().solve(&(-&gv));
            let descent = -(&h * &gv);
            let mut moved = false;
            for dir in newton.into_iter().chain(std::iter::once(descent)) {
                let mut t = 1.0;
                for _ in 0..40 {
                    let zn: Vec<f64> = z.iter().zip(dir.iter()).map(|(a, b)| a + t * b).collect();
                    if let Some(gn2) = self.grad(&zn) {
                        if norm(&gn2) < (1.0 - 1e-4 * t) * gn {
                            z = zn;
                            g = gn2;
                            moved = true;
                            break;
                        }
                    }
                    t *= 0.5;
                }
                if moved {
                    break;
                }
            }
            if !moved {
                return if gn <= GRAD_TOL { Some(z) } else { None };
            }
        }
        if norm(&g) <= GRAD_TOL { Some(z) } else { None }
    }

    fn seed(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let (lo, hi) = self.oracle.domain.bbox();
        let mut z = Vec::with_capacity(self.dim());
        for _ in 0..self.k {
            loop {
                let p = [rng.random_range(lo[0]..hi[0]), rng.random_range(lo[1]..hi[1])];
                if self.oracle.domain.boundary_distance(p) > 2.0 * self.margin {
                    z.extend_from_slice(&p);
                    break;
                }
            }
        }
        if self.k > 1 {
            for _ in 0..self.k {
                z.push(rng.random_range(-1.0..2.0));
            }
        }
        z
    }
}

fn same_configuration(a: &CriticalPoint, b: &CriticalPoint, radius: f64) -> bool {
    let close = |p: &[f64; 2], q: &[f64; 2]| (p[0] - q[0]).hypot(p[1] - q[1]) < radius;
    if a.points.len() != b.points.len() {
        return false;
    }
    // any matching permutation (k ≤ 2 in practice)
    let k = a.points.len();
    let direct = (0..k).all(|i| close(&a.points[i], &b.points[i]));
    let swapped = k == 2 && close(&a.points[0], &b.points[1]) && close(&a.points[1], &b.points[0]);
    direct || swapped
}

/// Multistart Newton search for critical points of Φ with k peaks.
pub fn find_critical_points(oracle: &GreenOracle, k: usize, seeds: usize, rng_seed: u64) -> Result<CriticalPointSet> {
    if !(1..=2).contains(&k) {
        return Err(Error::ConfigInvalid { field: "k".into(), reason: format!("must be 1 or 2, got {k}") });
    }
    if seeds < MIN_SEEDS {
        return Err(Error::ConfigInvalid { field: "seeds".into(), reason: format!("need at least {MIN_SEEDS}, got {seeds}") });
    }
    let prob = Problem { oracle, k, margin: BOUNDARY_MARGIN * oracle.domain.inradius() };
    let runs: Vec<Option<Vec<f64>>> = (0..seeds)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
            rng.set_stream(i as u64);
            let z0 = prob.seed(&mut rng);
            prob.newton(z0)
        })
        .collect();
    let converged_runs = runs.iter().filter(|r| r.is_some()).count();
    let mut found: Vec<CriticalPoint> = Vec::new();
    for z in runs.into_iter().flatten() {
        let (pts, al) = prob.unpack(&z);
        let pv = phi(oracle, &pts, &al)?;
        let g = prob.grad(&z).unwrap_or_default();
        let grad_norm = g.iter().map(|x| x * x).sum::<f64>().sqrt();
        let eig = match prob.hessian(&z) {
            Some(h) => {
                let mut e: Vec<f64> = SymmetricEigen::new(h).eigenvalues.iter().cloned().collect();
                e.sort_by(|a, b| a.total_cmp(b));
                e
            }
            None => Vec::new(),
        };
        let cp = CriticalPoint { points: pts, alphas: al, value: pv.value, grad_norm, hessian_eigenvalues: eig };
        if !found.iter().any(|f| same_configuration(f, &cp, DEDUP_RADIUS)) {
            found.push(cp);
        }
    }
    found.sort_by(|a, b| a.value.total_cmp(&b.value));
    Ok(CriticalPointSet { k, points: found, seeds, rng_seed, dedup_radius: DEDUP_RADIUS, converged_runs })
}
