//! P1 finite elements for -Δu = λue^{u²}, u = 0 on ∂Ω, continued in the
//! peak value γ. Each step solves the augmented system
//!
//!   K u - λ N(u) = 0,   u(x_peak) = γ
//!
//! by Newton in (u, λ); the column of the pinned node carries -N(u). The
//! linearized spectrum Kv = μ B v, B the weighted mass of
//! λ(1+2u²)e^{u²}, is computed by shift-invert subspace iteration.

use crate::error::{Error, Result};
use crate::geometry_green::{Domain, GreenOracle, Shape};
use crate::mesh::{Locator, Mesh, RingOptions, DEFAULT_GRADING, DUNAVANT6};
use crate::pohozaev::PeakSolution;
use crate::radial_solver::{solve_branch_point, SpectrumEntry, SpectrumReport};
use faer::linalg::solvers::Solve;
use faer::sparse::{SparseColMat, Triplet};
use faer::Mat;
use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;
use serde::Serialize;
use std::f64::consts::PI;
use std::sync::Arc;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FemOptions {
    /// Mesh refinement factor; all spacings scale with 1/resolution.
    pub resolution: f64,
    /// Element layers inside the radius θ around the peak at resolution 1.
    pub core_layers: f64,
    /// Relative Newton tolerance on the residual.
    pub newton_tol: f64,
    pub max_newton: usize,
    /// Amplitude increment between continuation steps.
    pub gamma_step: f64,
}

impl Default for FemOptions {
    fn default() -> Self {
        FemOptions { resolution: 1.0, core_layers: 16.0, newton_tol: 1e-9, max_newton: 40, gamma_step: 0.25 }
    }
}

/// Outer mesh spacing at resolution 1.
const OUTER_SPACING: f64 = 0.05;
/// Boundary polygon sector count at resolution 1.
const BASE_SECTORS: usize = 512;
const NEGATIVE_FLOOR: f64 = -1e-10;
/// Fan and ring triangles are not equilateral; heights up to this factor
/// over θ/layers still count as one layer.
const LAYER_SLACK: f64 = 1.1;

#[derive(Debug, Clone, Serialize)]
pub struct FemState {
    #[serde(skip)]
    pub domain: Domain,
    #[serde(skip)]
    pub mesh: Arc<Mesh>,
    #[serde(skip)]
    pub values: Vec<f64>,
    pub lambda: f64,
    pub gamma: f64,
    /// Robin critical point used to center the mesh.
    pub x0: [f64; 2],
    pub peak_node: usize,
    /// Peak from a quadratic fit over the 1-ring of the maximal node.
    pub x_lambda: [f64; 2],
    pub theta: f64,
    /// ∞-norm of K u - λN(u) relative to that of λN(u).
    pub residual_norm: f64,
    pub newton_iterations: usize,
    /// ∫|∇u|².
    pub energy: f64,
    pub n_nodes: usize,
    #[serde(skip)]
    locator: Arc<Locator>,
    #[serde(skip)]
    nodal_grads: Arc<Vec<[f64; 2]>>,
}

/// θ̂ = θ(γ)·ρ with ρ = e^{-2π𝓡(x₀)}: the unit-disk concentration scale
/// transplanted by the conformal radius at x₀.
pub fn predicted_theta(oracle: &GreenOracle, x0: [f64; 2], gamma: f64) -> Result<f64> {
    let bp = solve_branch_point(gamma, 1e-10)?;
    Ok(bp.theta * conformal_radius(oracle, x0)?)
}

fn conformal_radius(oracle: &GreenOracle, x0: [f64; 2]) -> Result<f64> {
    Ok((-2.0 * PI * oracle.robin(x0)?).exp())
}

/// Ring mesh around x₀ resolving the core of the γ-solution.
pub fn fem_mesh(domain: &Domain, x0: [f64; 2], theta: f64, opts: &FemOptions) -> Result<Mesh> {
    if matches!(domain.shape, Shape::Punctured { .. }) {
        return Err(Error::InvalidDomain("2-D branch solves need a domain star-shaped about the peak".into()));
    }
    let res = opts.resolution;
    let h0 = theta / (opts.core_layers * res);
    let sectors = ((BASE_SECTORS as f64 * res).round() as usize).next_power_of_two();
    let ro = RingOptions {
        center: x0,
        inner_radius: 0.0,
        core_spacing: h0,
        core_radius: 2.0 * theta,
        max_sectors: sectors,
        max_spacing: OUTER_SPACING / res,
        grading: DEFAULT_GRADING / res,
    };
    domain.ring_mesh(ro)
}

/// Largest element height (twice the area over the longest edge) among
/// elements meeting B_θ(x₀).
fn core_layer_thickness(mesh: &Mesh, x0: [f64; 2], theta: f64) -> f64 {
    let mut worst: f64 = 0.0;
    for k in 0..mesh.elements.len() {
        let e = mesh.elements[k];
        let near = e.iter().any(|&i| crate::mesh::dist(mesh.nodes[i], x0) <= theta);
        if near {
            let p = |a: usize| mesh.nodes[e[a]];
            let longest = crate::mesh::dist(p(0), p(1)).max(crate::mesh::dist(p(1), p(2))).max(crate::mesh::dist(p(2), p(0)));
            worst = worst.max(2.0 * mesh.geom(k).area / longest);
        }
    }
    worst
}

struct System {
    mesh: Arc<Mesh>,
    interior: Vec<usize>,
    slot: Vec<usize>,
    k: SparseColMat<usize, f64>,
}

/// Per-element quadrature of N_i = ∫f(u)φᵢ and M'_ij = ∫f'(u)φᵢφⱼ with
/// f(u) = ue^{u²}.
fn element_terms(mesh: &Mesh, k: usize, u: &[f64]) -> ([f64; 3], [[f64; 3]; 3]) {
    let e = mesh.elements[k];
    let area = mesh.geom(k).area;
    let mut n = [0.0; 3];
    let mut m = [[0.0; 3]; 3];
    for (l, w) in DUNAVANT6.iter() {
        let uq = l[0] * u[e[0]] + l[1] * u[e[1]] + l[2] * u[e[2]];
        let ex = (uq * uq).exp();
        let f = uq * ex;
        let fp = (1.0 + 2.0 * uq * uq) * ex;
        for a in 0..3 {
            n[a] += w * area * f * l[a];
            for b in 0..3 {
                m[a][b] += w * area * fp * l[a] * l[b];
            }
        }
    }
    (n, m)
}

const CHUNK: usize = 4096;

impl System {
    fn new(mesh: Arc<Mesh>) -> Result<System> {
        let n = mesh.n_nodes();
        let mut slot = vec![usize::MAX; n];
        let mut interior = Vec::new();
        for i in 0..n {
            if !mesh.is_boundary(i) {
                slot[i] = interior.len();
                interior.push(i);
            }
        }
        let trip = Self::assemble(&mesh, &slot, |k| {
            let g = mesh.geom(k);
            let mut a = [[0.0; 3]; 3];
            for i in 0..3 {
                for j in 0..3 {
                    a[i][j] = g.area * (g.grads[i][0] * g.grads[j][0] + g.grads[i][1] * g.grads[j][1]);
                }
            }
            a
        });
        let m = interior.len();
        let k = SparseColMat::try_new_from_triplets(m, m, &trip).map_err(|e| Error::InvalidMesh(format!("{e:?}")))?;
        Ok(System { mesh, interior, slot, k })
    }

    /// Interior-interior triplets of an element matrix, assembled in
    /// parallel over fixed chunks and concatenated in chunk order.
    fn assemble(mesh: &Mesh, slot: &[usize], elem: impl Fn(usize) -> [[f64; 3]; 3] + Sync) -> Vec<Triplet<usize, usize, f64>> {
        let ne = mesh.elements.len();
        let chunks: Vec<Vec<Triplet<usize, usize, f64>>> = (0..ne.div_ceil(CHUNK))
            .into_par_iter()
            .map(|c| {
                let mut t = Vec::new();
                for k in c * CHUNK..((c + 1) * CHUNK).min(ne) {
                    let e = mesh.elements[k];
                    let a = elem(k);
                    for i in 0..3 {
                        for j in 0..3 {
                            let (si, sj) = (slot[e[i]], slot[e[j]]);
                            if si != usize::MAX && sj != usize::MAX {
                                t.push(Triplet::new(si, sj, a[i][j]));
                            }
                        }
                    }
                }
                t
            })
            .collect();
        chunks.concat()
    }

    fn nonlinear(&self, u: &[f64]) -> Vec<f64> {
        let mesh = &self.mesh;
        let ne = mesh.elements.len();
        let parts: Vec<Vec<(usize, f64)>> = (0..ne.div_ceil(CHUNK))
            .into_par_iter()
            .map(|c| {
                let mut t = Vec::new();
                for k in c * CHUNK..((c + 1) * CHUNK).min(ne) {
                    let (n, _) = element_terms(mesh, k, u);
                    let e = mesh.elements[k];
                    for a in 0..3 {
                        if self.slot[e[a]] != usize::MAX {
                            t.push((self.slot[e[a]], n[a]));
                        }
                    }
                }
                t
            })
            .collect();
        let mut out = vec![0.0; self.interior.len()];
        for part in parts {
            for (i, v) in part {
                out[i] += v;
            }
        }
        out
    }

    fn weighted_mass(&self, u: &[f64], lambda: f64) -> Vec<Triplet<usize, usize, f64>> {
        Self::assemble(&self.mesh, &self.slot, |k| {
            let (_, m) = element_terms(&self.mesh, k, u);
            let mut a = m;
            for row in a.iter_mut() {
                for v in row.iter_mut() {
                    *v *= lambda;
                }
            }
            a
        })
    }

    fn k_times(&self, u: &[f64]) -> Vec<f64> {
        let m = self.interior.len();
        let mut out = vec![0.0; m];
        let (cp, ri, vals) = (self.k.col_ptr(), self.k.row_idx(), self.k.val());
        for j in 0..m {
            let uj = u[self.interior[j]];
            for p in cp[j]..cp[j + 1] {
                out[ri[p]] += vals[p] * uj;
            }
        }
        out
    }

    fn residual(&self, u: &[f64], lambda: f64) -> (Vec<f64>, f64) {
        let ku = self.k_times(u);
        let n = self.nonlinear(u);
        let scale = n.iter().fold(0.0f64, |a, v| a.max((lambda * v).abs()));
        (ku.iter().zip(&n).map(|(a, b)| a - lambda * b).collect(), scale)
    }
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |a, x| a.max(x.abs()))
}

/// û(s): the unit-disk solution for s ≤ 1, its harmonic log tail beyond.
fn disk_profile(bp: &crate::radial_solver::BranchPoint, c1: f64, s: f64) -> f64 {
    if s <= 1.0 { bp.u(s) } else { -c1 / (2.0 * PI) * s.ln() }
}

/// Initial guess at amplitude γ: the unit-disk solution rescaled by the
/// conformal radius ρ at x₀ and corrected by the regular part,
/// u = û(|x-x₀|/ρ) + C(𝓡(x₀) - H(x₀, x)), C = λ∫ue^{u²} on the disk.
fn ansatz(oracle: &GreenOracle, mesh: &Mesh, x0: [f64; 2], gamma: f64) -> Result<(Vec<f64>, f64)> {
    let bp = solve_branch_point(gamma, 1e-10)?;
    let rho = conformal_radius(oracle, x0)?;
    let c1 = bp.mass_gamma / gamma;
    let r0 = oracle.robin(x0)?;
    let mut u = vec![0.0; mesh.n_nodes()];
    for (i, p) in mesh.nodes.iter().enumerate() {
        if mesh.is_boundary(i) {
            continue;
        }
        let r = crate::mesh::dist(*p, x0);
        let h = if r == 0.0 { r0 } else { oracle.regular(x0, *p)? };
        u[i] = (disk_profile(&bp, c1, r / rho) + c1 * (r0 - h)).max(0.0);
    }
    Ok((u, bp.lambda / (rho * rho)))
}

struct NewtonOut {
    u: Vec<f64>,
    lambda: f64,
    residual: f64,
    iterations: usize,
}

fn newton(sys: &System, peak: usize, gamma: f64, mut u: Vec<f64>, mut lambda: f64, opts: &FemOptions) -> Result<NewtonOut> {
    let m = sys.interior.len();
    let ps = sys.slot[peak];
    u[peak] = gamma;
    let (mut r, mut scale) = sys.residual(&u, lambda);
    let mut rn = inf_norm(&r) / scale;
    for it in 0..opts.max_newton {
        if rn <= opts.newton_tol {
            return Ok(NewtonOut { u, lambda, residual: rn, iterations: it });
        }
        // Jacobian with the pinned column replaced by ∂/∂λ = -N(u)
        let n = sys.nonlinear(&u);
        let mut trip: Vec<Triplet<usize, usize, f64>> = Vec::new();
        let (cp, ri, vals) = (sys.k.col_ptr(), sys.k.row_idx(), sys.k.val());
        for j in 0..m {
            if j == ps {
                continue;
            }
            for p in cp[j]..cp[j + 1] {
                trip.push(Triplet::new(ri[p], j, vals[p]));
            }
        }
        for t in sys.weighted_mass(&u, lambda) {
            if t.col != ps {
                trip.push(Triplet::new(t.row, t.col, -t.val));
            }
        }
        for (i, v) in n.iter().enumerate() {
            trip.push(Triplet::new(i, ps, -v));
        }
        let jac = SparseColMat::<usize, f64>::try_new_from_triplets(m, m, &trip).map_err(|e| Error::InvalidMesh(format!("{e:?}")))?;
        let lu = jac.sp_lu().map_err(|_| Error::NewtonDiverged(rn))?;
        let mut rhs = Mat::<f64>::zeros(m, 1);
        for i in 0..m {
            rhs[(i, 0)] = -r[i];
        }
        lu.solve_in_place(rhs.as_mut());
        // damped update, halving until the residual drops
        let mut t = 1.0;
        loop {
            let mut un = u.clone();
            for (s, &i) in sys.interior.iter().enumerate() {
                if s != ps {
                    un[i] += t * rhs[(s, 0)];
                }
            }
            let ln = lambda + t * rhs[(ps, 0)];
            let (rr, sc) = sys.residual(&un, ln);
            let rnn = inf_norm(&rr) / sc;
            if rnn.is_finite() && ln > 0.0 && (rnn < rn || t < 1e-3) {
                u = un;
                lambda = ln;
                r = rr;
                scale = sc;
                rn = rnn;
                break;
            }
            t *= 0.5;
            if t < 1e-3 {
                return Err(Error::NewtonDiverged(rn));
            }
        }
        let _ = scale;
    }
    if rn <= opts.newton_tol {
        Ok(NewtonOut { u, lambda, residual: rn, iterations: opts.max_newton })
    } else {
        Err(Error::NewtonDiverged(rn))
    }
}

/// Nodal gradients from least-squares cubics over each node's 2-ring;
/// area-weighted element averages where the fit is singular.
fn recovered_gradients(mesh: &Mesh, u: &[f64]) -> Vec<[f64; 2]> {
    let adj = mesh.node_elements();
    let ring = |i: usize, r: &mut Vec<usize>| {
        for &k in &adj[i] {
            for &j in &mesh.elements[k] {
                if !r.contains(&j) {
                    r.push(j);
                }
            }
        }
    };
    let average = |i: usize| -> [f64; 2] {
        let (mut g, mut w) = ([0.0; 2], 0.0);
        for &k in &adj[i] {
            let geo = mesh.geom(k);
            let e = mesh.elements[k];
            for a in 0..3 {
                g[0] += geo.area * u[e[a]] * geo.grads[a][0];
                g[1] += geo.area * u[e[a]] * geo.grads[a][1];
            }
            w += geo.area;
        }
        [g[0] / w, g[1] / w]
    };
    (0..mesh.n_nodes())
        .into_par_iter()
        .map(|i| {
            let mut patch = vec![i];
            ring(i, &mut patch);
            for j in patch.clone() {
                ring(j, &mut patch);
            }
            if patch.len() < 14 {
                return average(i);
            }
            let c = mesh.nodes[i];
            let scale = patch.iter().map(|&j| crate::mesh::dist(mesh.nodes[j], c)).fold(0.0, f64::max);
            let mut ata = nalgebra::SMatrix::<f64, 10, 10>::zeros();
            let mut atb = nalgebra::SVector::<f64, 10>::zeros();
            for &j in &patch {
                let (x, y) = ((mesh.nodes[j][0] - c[0]) / scale, (mesh.nodes[j][1] - c[1]) / scale);
                let row = nalgebra::SVector::<f64, 10>::from([1.0, x, y, x * x, x * y, y * y, x * x * x, x * x * y, x * y * y, y * y * y]);
                ata += row * row.transpose();
                atb += row * u[j];
            }
            match ata.cholesky() {
                Some(ch) => {
                    let coef = ch.solve(&atb);
                    if coef.iter().all(|v| v.is_finite()) {
                        [coef[1] / scale, coef[2] / scale]
                    } else {
                        average(i)
                    }
                }
                None => average(i),
            }
        })
        .collect()
}

/// Maximizer of the least-squares quadratic through the maximal node and
/// its 1-ring.
fn peak_fit(mesh: &Mesh, u: &[f64]) -> (usize, [f64; 2]) {
    let imax = (0..u.len()).max_by(|&a, &b| u[a].total_cmp(&u[b])).unwrap();
    let mut ring: Vec<usize> = vec![imax];
    for e in &mesh.elements {
        if e.contains(&imax) {
            for &i in e {
                if !ring.contains(&i) {
                    ring.push(i);
                }
            }
        }
    }
    let c = mesh.nodes[imax];
    if ring.len() < 6 {
        return (imax, c);
    }
    let scale = ring.iter().map(|&i| crate::mesh::dist(mesh.nodes[i], c)).fold(0.0, f64::max);
    let mut a = DMatrix::zeros(ring.len(), 6);
    let mut b = nalgebra::DVector::zeros(ring.len());
    for (r, &i) in ring.iter().enumerate() {
        let (x, y) = ((mesh.nodes[i][0] - c[0]) / scale, (mesh.nodes[i][1] - c[1]) / scale);
        let row = [1.0, x, y, x * x, x * y, y * y];
        for (j, v) in row.iter().enumerate() {
            a[(r, j)] = *v;
        }
        b[r] = u[i];
    }
    let Ok(coef) = a.svd(true, true).solve(&b, 1e-12) else {
        return (imax, c);
    };
    let (bx, by, dxx, dxy, dyy) = (coef[1], coef[2], coef[3], coef[4], coef[5]);
    let det = 4.0 * dxx * dyy - dxy * dxy;
    if !(det > 0.0 && dxx < 0.0) {
        return (imax, c);
    }
    let x = (-2.0 * dyy * bx + dxy * by) / det;
    let y = (dxy * bx - 2.0 * dxx * by) / det;
    if x.hypot(y) > 1.0 {
        return (imax, c);
    }
    (imax, [c[0] + scale * x, c[1] + scale * y])
}

/// Continuation in γ up to `gamma_target` on a mesh graded around x₀ (a
/// Robin critical point; located by descent from the domain center when
/// not given). Returns one state per step, the last at `gamma_target`.
pub fn solve_2d_branch(domain: &Domain, x0: Option<[f64; 2]>, gamma_target: f64, steps: usize, opts: &FemOptions) -> Result<Vec<FemState>> {
    let oracle = GreenOracle::new(domain.clone())?;
    let x0 = match x0 {
        Some(p) => p,
        None => {
            let (lo, hi) = domain.bbox();
            oracle.robin_descent([0.5 * (lo[0] + hi[0]), 0.5 * (lo[1] + hi[1])], 1e-12, 200)?
        }
    };
    let theta = predicted_theta(&oracle, x0, gamma_target)?;
    let mesh = match &domain.mesh {
        Some(m) => {
            let t = core_layer_thickness(m, x0, theta);
            if t > LAYER_SLACK * theta / opts.core_layers {
                return Err(Error::MeshUnderresolved(format!("element layers of {t:e} inside θ = {theta:e}, need ≤ θ/{}", opts.core_layers)));
            }
            m.clone()
        }
        None => Arc::new(fem_mesh(domain, x0, theta, opts)?),
    };
    let steps = steps.max(1);
    let sys = System::new(mesh.clone())?;
    let peak = (0..mesh.n_nodes()).min_by(|&a, &b| crate::mesh::dist(mesh.nodes[a], x0).total_cmp(&crate::mesh::dist(mesh.nodes[b], x0))).unwrap();
    if mesh.is_boundary(peak) {
        return Err(Error::MeshUnderresolved("peak node lies on the boundary".into()));
    }
    let locator = Arc::new(Locator::new(&mesh));
    let mut states = Vec::with_capacity(steps);
    // predictor: the ansatz at the new amplitude plus the correction Newton
    // made to the previous ansatz
    let mut prev: Option<(Vec<f64>, f64)> = None;
    for k in 0..steps {
        let gamma = gamma_target - opts.gamma_step * (steps - 1 - k) as f64;
        let (a0, al) = ansatz(&oracle, &mesh, x0, gamma)?;
        let (u0, l0) = match &prev {
            None => (a0.clone(), al),
            Some((du, lr)) => (a0.iter().zip(du).map(|(a, b)| a + b).collect(), al * lr),
        };
        let out = newton(&sys, peak, gamma, u0, l0, opts)?;
        let min = out.u.iter().cloned().fold(f64::INFINITY, f64::min);
        if min < NEGATIVE_FLOOR {
            return Err(Error::NegativeSolution(min));
        }
        let (pn, xl) = peak_fit(&mesh, &out.u);
        let ku = sys.k_times(&out.u);
        let energy: f64 = sys.interior.iter().enumerate().map(|(s, &i)| out.u[i] * ku[s]).sum();
        let log_theta = -0.5 * (out.lambda.ln() + 2.0 * gamma.ln() + gamma * gamma);
        let grads = Arc::new(recovered_gradients(&mesh, &out.u));
        states.push(FemState {
            domain: domain.clone(),
            mesh: mesh.clone(),
            lambda: out.lambda,
            gamma,
            x0,
            peak_node: pn,
            x_lambda: xl,
            theta: log_theta.exp(),
            residual_norm: out.residual,
            newton_iterations: out.iterations,
            energy,
            n_nodes: mesh.n_nodes(),
            locator: locator.clone(),
            nodal_grads: grads,
            values: out.u.clone(),
        });
        prev = Some((out.u.iter().zip(&a0).map(|(a, b)| a - b).collect(), out.lambda / al));
    }
    Ok(states)
}

impl FemState {
    /// P1 interpolant at x (NaN outside the mesh).
    pub fn value_at(&self, x: [f64; 2]) -> f64 {
        self.locator.interpolate(&self.mesh, &self.values, x).unwrap_or(f64::NAN)
    }

    /// Recovered gradient interpolated at x.
    pub fn grad_at(&self, x: [f64; 2]) -> [f64; 2] {
        match self.locator.locate(&self.mesh, x) {
            Some((k, l)) => {
                let e = self.mesh.elements[k];
                let g = &self.nodal_grads;
                [
                    l[0] * g[e[0]][0] + l[1] * g[e[1]][0] + l[2] * g[e[2]][0],
                    l[0] * g[e[0]][1] + l[1] * g[e[1]][1] + l[2] * g[e[2]][1],
                ]
            }
            None => [f64::NAN; 2],
        }
    }

    /// ∫_{B_d(c)} F(u) dx with elements cut by the circle split
    /// recursively into four.
    pub fn ball_integral(&self, c: [f64; 2], d: f64, f: impl Fn(f64) -> f64 + Sync) -> f64 {
        let mesh = &self.mesh;
        let u = &self.values;
        (0..mesh.elements.len())
            .into_par_iter()
            .map(|k| {
                let e = mesh.elements[k];
                let p = [mesh.nodes[e[0]], mesh.nodes[e[1]], mesh.nodes[e[2]]];
                let vals = [u[e[0]], u[e[1]], u[e[2]]];
                sub_integral(&p, &vals, [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]], c, d, &f, 0)
            })
            .collect::<Vec<f64>>()
            .iter()
            .sum()
    }

    /// max |u(x) - u(Rx)| over nodes, R the reflection x_axis ↦ -x_axis
    /// about the peak center x₀.
    pub fn reflection_error(&self, axis: usize) -> f64 {
        let mut worst: f64 = 0.0;
        for (i, p) in self.mesh.nodes.iter().enumerate() {
            let mut q = *p;
            q[axis] = 2.0 * self.x0[axis] - q[axis];
            let v = self.value_at(q);
            if v.is_finite() {
                worst = worst.max((v - self.values[i]).abs());
            }
        }
        worst
    }

    /// λ∫_Ω e^{u²}.
    pub fn lambda_int_exp(&self) -> f64 {
        let mesh = &self.mesh;
        let mut acc = 0.0;
        for k in 0..mesh.elements.len() {
            let e = mesh.elements[k];
            let area = mesh.geom(k).area;
            for (l, w) in DUNAVANT6.iter() {
                let uq = l[0] * self.values[e[0]] + l[1] * self.values[e[1]] + l[2] * self.values[e[2]];
                acc += w * area * (uq * uq).exp();
            }
        }
        self.lambda * acc
    }
}

const SUBDIVISION_DEPTH: usize = 7;

/// Quadrature of F(u) over the part of a sub-triangle (barycentric
/// corners `b` in the parent) inside the disk B_d(c).
fn sub_integral(p: &[[f64; 2]; 3], vals: &[f64; 3], b: [[f64; 3]; 3], c: [f64; 2], d: f64, f: &(impl Fn(f64) -> f64 + Sync), depth: usize) -> f64 {
    let pt = |l: [f64; 3]| [l[0] * p[0][0] + l[1] * p[1][0] + l[2] * p[2][0], l[0] * p[0][1] + l[1] * p[1][1] + l[2] * p[2][1]];
    let corners = [pt(b[0]), pt(b[1]), pt(b[2])];
    let dist: Vec<f64> = corners.iter().map(|q| crate::mesh::dist(*q, c)).collect();
    let area = crate::mesh::signed_area(corners[0], corners[1], corners[2]).abs();
    let inside = dist.iter().all(|r| *r <= d);
    let size = crate::mesh::dist(corners[0], corners[1]).max(crate::mesh::dist(corners[1], corners[2])).max(crate::mesh::dist(corners[2], corners[0]));
    if !inside && dist.iter().all(|r| *r > d + size) {
        return 0.0;
    }
    let quad = || {
        let mut acc = 0.0;
        for (l, w) in DUNAVANT6.iter() {
            let mut lb = [0.0; 3];
            for a in 0..3 {
                for v in 0..3 {
                    lb[v] += l[a] * b[a][v];
                }
            }
            let u = lb[0] * vals[0] + lb[1] * vals[1] + lb[2] * vals[2];
            acc += w * f(u);
        }
        acc * area
    };
    if inside {
        return quad();
    }
    if depth == SUBDIVISION_DEPTH {
        let cen = pt([(b[0][0] + b[1][0] + b[2][0]) / 3.0, (b[0][1] + b[1][1] + b[2][1]) / 3.0, (b[0][2] + b[1][2] + b[2][2]) / 3.0]);
        return if crate::mesh::dist(cen, c) <= d { quad() } else { 0.0 };
    }
    let mid = |x: [f64; 3], y: [f64; 3]| [0.5 * (x[0] + y[0]), 0.5 * (x[1] + y[1]), 0.5 * (x[2] + y[2])];
    let (m01, m12, m20) = (mid(b[0], b[1]), mid(b[1], b[2]), mid(b[2], b[0]));
    [[b[0], m01, m20], [m01, b[1], m12], [m20, m12, b[2]], [m01, m12, m20]]
        .iter()
        .map(|s| sub_integral(p, vals, *s, c, d, f, depth + 1))
        .sum()
}

impl PeakSolution for FemState {
    fn peak(&self) -> [f64; 2] {
        self.x_lambda
    }
    fn lambda(&self) -> f64 {
        self.lambda
    }
    fn domain(&self) -> &Domain {
        &self.domain
    }
    fn value(&self, x: [f64; 2]) -> f64 {
        self.value_at(x)
    }
    fn gradient(&self, x: [f64; 2]) -> [f64; 2] {
        self.grad_at(x)
    }
    fn ball_exp_mass(&self, d: f64) -> f64 {
        self.lambda * self.ball_integral(self.x_lambda, d, |u| (u * u).exp())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FarField {
    /// Mean of u(x)/G(x_λ, x) over the samples.
    pub ratio: f64,
    /// C_λ = λ∫_{B_d(x_λ)} u e^{u²}.
    pub c_lambda: f64,
    pub d: f64,
}

/// Compares u with C_λG(x_λ, ·) away from the peak; d = inradius/4.
pub fn far_field_ratio(state: &FemState, samples: &[[f64; 2]]) -> Result<FarField> {
    let oracle = GreenOracle::new(state.domain.clone())?;
    let d = 0.25 * state.domain.inradius();
    let xl = state.x_lambda;
    let mut acc = 0.0;
    for &x in samples {
        let r = crate::mesh::dist(x, xl);
        if r < 2.0 * d {
            return Err(Error::SampleTooClose { dist: r, min: 2.0 * d });
        }
        acc += state.value_at(x) / oracle.green(xl, x)?;
    }
    if samples.is_empty() {
        return Err(Error::InsufficientPoints { need: 1, got: 0 });
    }
    let c_lambda = state.lambda * state.ball_integral(xl, d, |u| u * (u * u).exp());
    Ok(FarField { ratio: acc / samples.len() as f64, c_lambda, d })
}

/// Shift-invert block subspace iteration with Rayleigh–Ritz for the
/// eigenvalues of Kv = μBv nearest σ.
fn shift_invert(k: &SparseColMat<usize, f64>, b: &SparseColMat<usize, f64>, sigma: f64, block: usize, want: usize) -> Result<(Vec<f64>, f64)> {
    let n = k.nrows();
    let fail = |m: &str| Error::EigensolveFail(m.to_string());
    let mut trip = Vec::new();
    for (mat, s) in [(k, 1.0), (b, -sigma)] {
        let (cp, ri, v) = (mat.col_ptr(), mat.row_idx(), mat.val());
        for j in 0..n {
            for p in cp[j]..cp[j + 1] {
                trip.push(Triplet::new(ri[p], j, s * v[p]));
            }
        }
    }
    let a = SparseColMat::<usize, f64>::try_new_from_triplets(n, n, &trip).map_err(|e| fail(&format!("{e:?}")))?;
    let lu = a.sp_lu().map_err(|_| fail("shifted matrix is singular"))?;
    let spmm = |m: &SparseColMat<usize, f64>, x: &Mat<f64>| -> Mat<f64> {
        let mut y = Mat::<f64>::zeros(n, x.ncols());
        let (cp, ri, v) = (m.col_ptr(), m.row_idx(), m.val());
        for c in 0..x.ncols() {
            for j in 0..n {
                let xj = x[(j, c)];
                for p in cp[j]..cp[j + 1] {
                    y[(ri[p], c)] += v[p] * xj;
                }
            }
        }
        y
    };
    // deterministic start block
    let mut x = Mat::<f64>::from_fn(n, block, |i, j| (((i + 1) * (j + 7)) as f64 * 0.618_033_988_75).fract() - 0.5);
    let mut prev = vec![f64::NAN; want];
    let mut resid = f64::INFINITY;
    for _ in 0..300 {
        let mut y = spmm(b, &x);
        lu.solve_in_place(y.as_mut());
        let ky = spmm(k, &y);
        let by = spmm(b, &y);
        let kp = DMatrix::from_fn(block, block, |i, j| (0..n).map(|r| y[(r, i)] * ky[(r, j)]).sum::<f64>());
        let bp = DMatrix::from_fn(block, block, |i, j| (0..n).map(|r| y[(r, i)] * by[(r, j)]).sum::<f64>());
        let kp = 0.5 * (&kp + kp.transpose());
        let bp = 0.5 * (&bp + bp.transpose());
        let chol = bp.cholesky().ok_or_else(|| fail("Ritz basis lost rank"))?;
        let linv = chol.l().try_inverse().ok_or_else(|| fail("Ritz basis lost rank"))?;
        let c = &linv * kp * linv.transpose();
        let eig = SymmetricEigen::new(0.5 * (&c + c.transpose()));
        let mut order: Vec<usize> = (0..block).collect();
        order.sort_by(|&i, &j| (eig.eigenvalues[i] - sigma).abs().total_cmp(&(eig.eigenvalues[j] - sigma).abs()));
        let coeff = linv.transpose() * &eig.eigenvectors;
        let mut xn = Mat::<f64>::zeros(n, block);
        for (col, &o) in order.iter().enumerate() {
            for r in 0..n {
                let mut s = 0.0;
                for q in 0..block {
                    s += y[(r, q)] * coeff[(q, o)];
                }
                xn[(r, col)] = s;
            }
        }
        x = xn;
        let vals: Vec<f64> = order.iter().take(want).map(|&o| eig.eigenvalues[o]).collect();
        // residual ‖Kx - μBx‖/‖Kx‖ of the wanted Ritz pairs
        let kx = spmm(k, &x);
        let bx = spmm(b, &x);
        resid = 0.0f64;
        for (c, mu) in vals.iter().enumerate() {
            let (mut num, mut den) = (0.0, 0.0);
            for r in 0..n {
                num += (kx[(r, c)] - mu * bx[(r, c)]).powi(2);
                den += kx[(r, c)].powi(2);
            }
            resid = resid.max((num / den).sqrt());
        }
        let change = vals.iter().zip(&prev).map(|(a, b)| (a - b).abs() / a.abs().max(1e-300)).fold(0.0, f64::max);
        prev = vals;
        if resid < 1e-10 && change < 1e-13 {
            break;
        }
    }
    if !(resid < 1e-6) {
        return Err(fail(&format!("Ritz residual {resid:e} after 300 sweeps")));
    }
    Ok((prev, resid))
}

#[derive(Debug, Clone, Serialize)]
pub struct FemSpectrum {
    pub report: SpectrumReport,
    /// Largest relative Ritz residual among returned pairs.
    pub ritz_residual: f64,
}

/// Smallest `count` eigenvalues of Kv = μ λ(1+2u²)e^{u²} v: shift 0.5 for
/// μ₁, shift 1 for the cluster around 1.
pub fn spectrum_2d(state: &FemState, count: usize, gap_tol: f64) -> Result<FemSpectrum> {
    if count == 0 || count > 8 {
        return Err(Error::ConfigInvalid { field: "count".into(), reason: format!("{count} not in 1..=8") });
    }
    let sys = System::new(state.mesh.clone())?;
    let m = sys.interior.len();
    let bt = sys.weighted_mass(&state.values, state.lambda);
    let b = SparseColMat::<usize, f64>::try_new_from_triplets(m, m, &bt).map_err(|e| Error::EigensolveFail(format!("{e:?}")))?;
    let (low, r1) = shift_invert(&sys.k, &b, 0.5, 6, 1)?;
    let block = (count + 4).max(8);
    let (mut vals, r2) = shift_invert(&sys.k, &b, 1.0, block, count)?;
    vals.sort_by(f64::total_cmp);
    if (vals[0] - low[0]).abs() < 1e-6 * low[0].abs() || vals[0] > low[0] {
        vals[0] = low[0];
    }
    vals.sort_by(f64::total_cmp);
    let entries: Vec<SpectrumEntry> = vals
        .iter()
        .enumerate()
        .map(|(index, &mu)| SpectrumEntry { mode: None, index, mu, multiplicity: 1, near_one: (mu - 1.0).abs() < gap_tol })
        .collect();
    let morse_index = entries.iter().filter(|e| e.mu < 1.0).count();
    let distance_to_one = entries.iter().map(|e| (e.mu - 1.0).abs()).fold(f64::INFINITY, f64::min);
    Ok(FemSpectrum { report: SpectrumReport { entries, morse_index, distance_to_one, gap_tol }, ritz_residual: r1.max(r2) })
}

/// Mesh and nodal values as CSV (x,y,u).
pub fn solution_csv(state: &FemState) -> String {
    let mut s = String::from("x,y,u\n");
    for (p, u) in state.mesh.nodes.iter().zip(&state.values) {
        s.push_str(&format!("{:.17e},{:.17e},{:.17e}\n", p[0], p[1], u));
    }
    s
}
