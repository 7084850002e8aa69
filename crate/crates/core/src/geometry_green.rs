//! Domains, Green functions G = S - H with S = -(1/2π)log|x-y|, and the
//! Robin function 𝓡(x) = H(x,x) with derivatives.
//!
//! Closed forms: images on the unit disk; a Jacobi theta quotient on
//! rectangles; a Möbius map onto a concentric annulus plus the annulus
//! prime function for a disk with a circular hole. Other domains fall back
//! to one P1 Dirichlet solve per source point, all sharing one factored
//! stiffness matrix.

use crate::error::{Error, Result};
use crate::mesh::{ring_mesh, Locator, Mesh, RingOptions, StarBoundary};
use faer::linalg::solvers::Solve;
use faer::sparse::{SparseColMat, Triplet};
use faer::{Mat, Side};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, RwLock};

const INV_2PI: f64 = 0.5 / PI;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Shape {
    UnitDisk,
    /// Centered at the origin.
    Rectangle { width: f64, height: f64 },
    /// Counter-clockwise simple polygon.
    Polygon { vertices: Vec<[f64; 2]> },
    Punctured { base: Box<Shape>, center: [f64; 2], radius: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grading {
    pub center: [f64; 2],
    pub inner_scale: f64,
}

#[derive(Debug, Clone)]
pub struct Domain {
    pub shape: Shape,
    pub mesh: Option<Arc<Mesh>>,
    pub grading: Option<Grading>,
}

impl Domain {
    pub fn new(shape: Shape) -> Result<Domain> {
        validate(&shape)?;
        Ok(Domain { shape, mesh: None, grading: None })
    }

    pub fn unit_disk() -> Domain {
        Domain::new(Shape::UnitDisk).expect("valid")
    }

    /// The square [-s/2, s/2]².
    pub fn square(side: f64) -> Domain {
        Domain::new(Shape::Rectangle { width: side, height: side }).expect("valid")
    }

    pub fn punctured_disk(center: [f64; 2], radius: f64) -> Result<Domain> {
        Domain::new(Shape::Punctured { base: Box::new(Shape::UnitDisk), center, radius })
    }

    /// Attaches a triangulation; its boundary nodes must lie on ∂Ω.
    pub fn with_mesh(mut self, mesh: Mesh) -> Result<Domain> {
        for &b in &mesh.boundary {
            let p = mesh.nodes[b];
            let d = shape_distance(&self.shape, p);
            if d > 1e-12 {
                return Err(Error::InvalidMesh(format!("boundary node {b} is {d:e} off the boundary")));
            }
        }
        self.mesh = Some(Arc::new(mesh));
        Ok(self)
    }

    pub fn contains(&self, x: [f64; 2]) -> bool {
        shape_contains(&self.shape, x)
    }

    /// Distance to ∂Ω (positive inside).
    pub fn boundary_distance(&self, x: [f64; 2]) -> f64 {
        let d = shape_distance(&self.shape, x);
        if self.contains(x) { d } else { -d }
    }

    /// Radius of the largest inscribed disk.
    pub fn inradius(&self) -> f64 {
        match &self.shape {
            Shape::UnitDisk => 1.0,
            Shape::Rectangle { width, height } => 0.5 * width.min(*height),
            _ => {
                let (lo, hi) = self.bbox();
                let n = 200;
                let mut best: f64 = 0.0;
                for i in 0..=n {
                    for j in 0..=n {
                        let x = [lo[0] + (hi[0] - lo[0]) * i as f64 / n as f64, lo[1] + (hi[1] - lo[1]) * j as f64 / n as f64];
                        best = best.max(self.boundary_distance(x));
                    }
                }
                best
            }
        }
    }

    pub fn bbox(&self) -> ([f64; 2], [f64; 2]) {
        shape_bbox(&self.shape)
    }

    /// Ring mesh graded toward `center`, covering the domain.
    pub fn ring_mesh(&self, opts: RingOptions) -> Result<Mesh> {
        match &self.shape {
            Shape::Punctured { base, center, radius } => {
                let o = RingOptions { center: *center, inner_radius: *radius, ..opts };
                ring_mesh(base.as_ref(), o)
            }
            s => ring_mesh(s, opts),
        }
    }
}

fn polygon_of(shape: &Shape) -> Option<Vec<[f64; 2]>> {
    match shape {
        Shape::Rectangle { width, height } => {
            let (a, b) = (0.5 * width, 0.5 * height);
            Some(vec![[-a, -b], [a, -b], [a, b], [-a, b]])
        }
        Shape::Polygon { vertices } => Some(vertices.clone()),
        _ => None,
    }
}

fn validate(shape: &Shape) -> Result<()> {
    match shape {
        Shape::UnitDisk => Ok(()),
        Shape::Rectangle { width, height } => {
            if *width > 0.0 && *height > 0.0 {
                Ok(())
            } else {
                Err(Error::InvalidDomain("rectangle sides must be positive".into()))
            }
        }
        Shape::Polygon { vertices: v } => {
            if v.len() < 3 {
                return Err(Error::InvalidDomain("polygon needs at least 3 vertices".into()));
            }
            let n = v.len();
            let area: f64 = (0..n).map(|i| {
                let (a, b) = (v[i], v[(i + 1) % n]);
                a[0] * b[1] - b[0] * a[1]
            }).sum::<f64>() * 0.5;
            if !(area > 0.0) {
                return Err(Error::InvalidDomain("polygon must be positively oriented".into()));
            }
            for i in 0..n {
                for j in i + 1..n {
                    if j == i + 1 || (i == 0 && j == n - 1) {
                        continue;
                    }
                    if segments_cross(v[i], v[(i + 1) % n], v[j], v[(j + 1) % n]) {
                        return Err(Error::InvalidDomain(format!("edges {i} and {j} intersect")));
                    }
                }
            }
            Ok(())
        }
        Shape::Punctured { base, center, radius } => {
            validate(base)?;
            if matches!(**base, Shape::Punctured { .. }) {
                return Err(Error::InvalidDomain("nested punctures are not supported".into()));
            }
            if !(*radius > 0.0) || !shape_contains(base, *center) || shape_distance(base, *center) <= *radius {
                return Err(Error::InvalidDomain("hole closure must lie strictly inside the base domain".into()));
            }
            Ok(())
        }
    }
}

fn segments_cross(a: [f64; 2], b: [f64; 2], c: [f64; 2], d: [f64; 2]) -> bool {
    let o = |p: [f64; 2], q: [f64; 2], r: [f64; 2]| (q[0] - p[0]) * (r[1] - p[1]) - (q[1] - p[1]) * (r[0] - p[0]);
    let (d1, d2, d3, d4) = (o(c, d, a), o(c, d, b), o(a, b, c), o(a, b, d));
    (d1 * d2 < 0.0) && (d3 * d4 < 0.0)
}

fn shape_contains(shape: &Shape, x: [f64; 2]) -> bool {
    match shape {
        Shape::UnitDisk => x[0] * x[0] + x[1] * x[1] < 1.0,
        Shape::Punctured { base, center, radius } => {
            shape_contains(base, x) && (x[0] - center[0]).hypot(x[1] - center[1]) > *radius
        }
        s => {
            let v = polygon_of(s).unwrap();
            let n = v.len();
            let mut inside = false;
            for i in 0..n {
                let (a, b) = (v[i], v[(i + 1) % n]);
                if (a[1] > x[1]) != (b[1] > x[1]) {
                    let t = (x[1] - a[1]) / (b[1] - a[1]);
                    if x[0] < a[0] + t * (b[0] - a[0]) {
                        inside = !inside;
                    }
                }
            }
            inside && shape_distance(s, x) > 0.0
        }
    }
}

/// Unsigned distance to the boundary.
fn shape_distance(shape: &Shape, x: [f64; 2]) -> f64 {
    match shape {
        Shape::UnitDisk => (1.0 - x[0].hypot(x[1])).abs(),
        Shape::Punctured { base, center, radius } => {
            let dh = ((x[0] - center[0]).hypot(x[1] - center[1]) - radius).abs();
            shape_distance(base, x).min(dh)
        }
        s => {
            let v = polygon_of(s).unwrap();
            let n = v.len();
            (0..n).map(|i| seg_dist(x, v[i], v[(i + 1) % n])).fold(f64::INFINITY, f64::min)
        }
    }
}

fn seg_dist(p: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
    let t = (((p[0] - a[0]) * dx + (p[1] - a[1]) * dy) / (dx * dx + dy * dy)).clamp(0.0, 1.0);
    (p[0] - a[0] - t * dx).hypot(p[1] - a[1] - t * dy)
}

fn shape_bbox(shape: &Shape) -> ([f64; 2], [f64; 2]) {
    match shape {
        Shape::UnitDisk => ([-1.0, -1.0], [1.0, 1.0]),
        Shape::Punctured { base, .. } => shape_bbox(base),
        s => {
            let v = polygon_of(s).unwrap();
            let mut lo = [f64::INFINITY; 2];
            let mut hi = [f64::NEG_INFINITY; 2];
            for p in v {
                for d in 0..2 {
                    lo[d] = lo[d].min(p[d]);
                    hi[d] = hi[d].max(p[d]);
                }
            }
            (lo, hi)
        }
    }
}

impl StarBoundary for Shape {
    fn ray(&self, c: [f64; 2], phi: f64) -> f64 {
        let (dx, dy) = (phi.cos(), phi.sin());
        match self {
            Shape::UnitDisk => {
                let b = c[0] * dx + c[1] * dy;
                let cc = c[0] * c[0] + c[1] * c[1] - 1.0;
                -b + (b * b - cc).sqrt()
            }
            Shape::Punctured { base, .. } => base.ray(c, phi),
            s => {
                let v = polygon_of(s).unwrap();
                let n = v.len();
                let mut best = f64::INFINITY;
                for i in 0..n {
                    let (a, b) = (v[i], v[(i + 1) % n]);
                    let (ex, ey) = (b[0] - a[0], b[1] - a[1]);
                    let den = dx * ey - dy * ex;
                    if den.abs() < 1e-300 {
                        continue;
                    }
                    let (wx, wy) = (a[0] - c[0], a[1] - c[1]);
                    let t = (wx * ey - wy * ex) / den;
                    let s = (wx * dy - wy * dx) / den;
                    if t > 0.0 && (-1e-12..=1.0 + 1e-12).contains(&s) {
                        best = best.min(t);
                    }
                }
                best
            }
        }
    }

    fn corner_angles(&self, c: [f64; 2]) -> Vec<f64> {
        match polygon_of(self) {
            Some(v) => v.iter().map(|p| (p[1] - c[1]).atan2(p[0] - c[0])).collect(),
            None => Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GreenMethod {
    ClosedFormDisk,
    HarmonicFem,
    MethodOfImagesComposite,
}

/// Green function evaluator for one domain.
pub struct GreenOracle {
    pub domain: Domain,
    pub method: GreenMethod,
    /// Tolerance of the underlying evaluation; sets the difference step.
    pub tol: f64,
    kind: Kind,
}

enum Kind {
    Disk,
    Rect(ThetaRect),
    Holed(HoledDisk),
    Fem(FemGreen),
}

impl std::fmt::Debug for GreenOracle {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("GreenOracle").field("shape", &self.domain.shape).field("method", &self.method).finish()
    }
}

/// Mesh spacing used when a domain without a mesh needs the FEM path.
pub const DEFAULT_FEM_SPACING: f64 = 0.02;

impl GreenOracle {
    /// Closed form where available, otherwise the FEM path.
    pub fn new(domain: Domain) -> Result<GreenOracle> {
        match &domain.shape {
            Shape::UnitDisk => Ok(GreenOracle { domain, method: GreenMethod::ClosedFormDisk, tol: 1e-15, kind: Kind::Disk }),
            Shape::Rectangle { width, height } => {
                let k = Kind::Rect(ThetaRect::new(*width, *height));
                Ok(GreenOracle { domain, method: GreenMethod::MethodOfImagesComposite, tol: 1e-14, kind: k })
            }
            Shape::Punctured { base, center, radius } if **base == Shape::UnitDisk => {
                let k = Kind::Holed(HoledDisk::new(*center, *radius));
                Ok(GreenOracle { domain, method: GreenMethod::MethodOfImagesComposite, tol: 1e-14, kind: k })
            }
            _ => GreenOracle::fem(domain, DEFAULT_FEM_SPACING),
        }
    }

    /// P1 harmonic-extension oracle; uses the domain's mesh if present,
    /// otherwise a quasi-uniform ring mesh of spacing h.
    pub fn fem(domain: Domain, h: f64) -> Result<GreenOracle> {
        let mesh = match &domain.mesh {
            Some(m) => m.clone(),
            None => {
                let (lo, hi) = domain.bbox();
                let c = match &domain.shape {
                    Shape::Punctured { center, .. } => *center,
                    Shape::Polygon { vertices } => polygon_centroid(vertices),
                    _ => [0.5 * (lo[0] + hi[0]), 0.5 * (lo[1] + hi[1])],
                };
                let extent = (hi[0] - lo[0]).hypot(hi[1] - lo[1]);
                Arc::new(domain.ring_mesh(RingOptions::uniform(c, h, extent))?)
            }
        };
        let fem = FemGreen::new(mesh)?;
        let tol = 0.01 * fem.h * fem.h;
        Ok(GreenOracle { domain, method: GreenMethod::HarmonicFem, tol, kind: Kind::Fem(fem) })
    }

    /// Step of the centered differences for Robin derivatives.
    pub fn fd_step(&self) -> f64 {
        (10.0 * self.tol.sqrt()).max(1e-5)
    }

    fn check_point(&self, x: [f64; 2], allow_boundary: bool) -> Result<()> {
        let d = self.domain.boundary_distance(x);
        if d > 0.0 || (allow_boundary && d > -1e-12) {
            Ok(())
        } else {
            Err(Error::OutsideDomain(x[0], x[1]))
        }
    }

    /// G(x, y).
    pub fn green(&self, x: [f64; 2], y: [f64; 2]) -> Result<f64> {
        let r = (x[0] - y[0]).hypot(x[1] - y[1]);
        if r < 1e-14 {
            return Err(Error::CoincidentPoints(r));
        }
        self.check_point(x, false)?;
        self.check_point(y, true)?;
        Ok(-INV_2PI * r.ln() - self.regular_unchecked(x, y))
    }

    /// Regular part H(x, y).
    pub fn regular(&self, x: [f64; 2], y: [f64; 2]) -> Result<f64> {
        self.check_point(x, false)?;
        self.check_point(y, true)?;
        Ok(self.regular_unchecked(x, y))
    }

    fn regular_unchecked(&self, x: [f64; 2], y: [f64; 2]) -> f64 {
        match &self.kind {
            Kind::Disk => {
                let d = 1.0 - 2.0 * (x[0] * y[0] + x[1] * y[1]) + (x[0] * x[0] + x[1] * x[1]) * (y[0] * y[0] + y[1] * y[1]);
                -0.5 * INV_2PI * d.ln()
            }
            Kind::Rect(t) => t.regular(x, y),
            Kind::Holed(h) => h.regular(x, y),
            Kind::Fem(f) => f.regular(x, y),
        }
    }

    /// ∇ₓG(x, y).
    pub fn green_grad(&self, x: [f64; 2], y: [f64; 2]) -> Result<[f64; 2]> {
        let r = (x[0] - y[0]).hypot(x[1] - y[1]);
        if r < 1e-14 {
            return Err(Error::CoincidentPoints(r));
        }
        self.check_point(x, false)?;
        self.check_point(y, true)?;
        let r2 = r * r;
        let s = [-INV_2PI * (x[0] - y[0]) / r2, -INV_2PI * (x[1] - y[1]) / r2];
        let h = match &self.kind {
            Kind::Disk => {
                let y2 = y[0] * y[0] + y[1] * y[1];
                let d = 1.0 - 2.0 * (x[0] * y[0] + x[1] * y[1]) + (x[0] * x[0] + x[1] * x[1]) * y2;
                [-0.5 * INV_2PI * (-2.0 * y[0] + 2.0 * x[0] * y2) / d, -0.5 * INV_2PI * (-2.0 * y[1] + 2.0 * x[1] * y2) / d]
            }
            Kind::Rect(t) => t.regular_grad(x, y),
            _ => {
                let e = self.fd_step().min(0.2 * self.domain.boundary_distance(x));
                fd_grad4(|p| self.regular_unchecked(p, y), x, e)
            }
        };
        Ok([s[0] - h[0], s[1] - h[1]])
    }

    fn robin_unchecked(&self, x: [f64; 2]) -> f64 {
        match &self.kind {
            Kind::Disk => -INV_2PI * (1.0 - x[0] * x[0] - x[1] * x[1]).ln(),
            Kind::Rect(t) => t.robin(x),
            Kind::Holed(h) => h.robin(x),
            Kind::Fem(f) => f.robin(x, 0.5 * self.domain.boundary_distance(x)),
        }
    }

    fn check_robin(&self, x: [f64; 2]) -> Result<()> {
        self.check_point(x, false)?;
        let h = self.fd_step();
        let d = self.domain.boundary_distance(x);
        if d < 5.0 * h {
            return Err(Error::TooCloseToBoundary { dist: d, min: 5.0 * h });
        }
        Ok(())
    }

    /// 𝓡(x) = H(x, x).
    pub fn robin(&self, x: [f64; 2]) -> Result<f64> {
        self.check_robin(x)?;
        Ok(self.robin_unchecked(x))
    }

    pub fn robin_grad(&self, x: [f64; 2]) -> Result<[f64; 2]> {
        self.check_robin(x)?;
        Ok(self.robin_grad_unchecked(x))
    }

    fn robin_grad_unchecked(&self, x: [f64; 2]) -> [f64; 2] {
        match &self.kind {
            Kind::Disk => {
                let d = 1.0 - x[0] * x[0] - x[1] * x[1];
                [x[0] / (PI * d), x[1] / (PI * d)]
            }
            Kind::Rect(t) => t.robin_grad(x),
            _ => fd_grad4(|p| self.robin_unchecked(p), x, self.fd_step()),
        }
    }

    pub fn robin_hess(&self, x: [f64; 2]) -> Result<[[f64; 2]; 2]> {
        self.check_robin(x)?;
        match &self.kind {
            Kind::Disk => {
                let d = 1.0 - x[0] * x[0] - x[1] * x[1];
                let a = 1.0 / (PI * d);
                let b = 2.0 / (PI * d * d);
                Ok([[a + b * x[0] * x[0], b * x[0] * x[1]], [b * x[0] * x[1], a + b * x[1] * x[1]]])
            }
            Kind::Rect(_) => {
                // differences of the analytic gradient
                let h = self.fd_step();
                let g = |p: [f64; 2]| self.robin_grad_unchecked(p);
                let (gxp, gxm) = (g([x[0] + h, x[1]]), g([x[0] - h, x[1]]));
                let (gyp, gym) = (g([x[0], x[1] + h]), g([x[0], x[1] - h]));
                let hxx = (gxp[0] - gxm[0]) / (2.0 * h);
                let hyy = (gyp[1] - gym[1]) / (2.0 * h);
                let hxy = 0.5 * ((gxp[1] - gxm[1]) + (gyp[0] - gym[0])) / (2.0 * h);
                Ok([[hxx, hxy], [hxy, hyy]])
            }
            _ => Ok(fd_hess4(|p| self.robin_unchecked(p), x, self.fd_step())),
        }
    }

    /// Damped Newton descent on 𝓡 from `x0`; falls back to gradient steps
    /// where the Hessian is not positive definite. Returns the limit point.
    pub fn robin_descent(&self, x0: [f64; 2], gtol: f64, max_iter: usize) -> Result<[f64; 2]> {
        let mut x = x0;
        let mut f = self.robin(x)?;
        for _ in 0..max_iter {
            let g = self.robin_grad(x)?;
            let gn = g[0].hypot(g[1]);
            if gn <= gtol {
                return Ok(x);
            }
            let h = self.robin_hess(x)?;
            let det = h[0][0] * h[1][1] - h[0][1] * h[1][0];
            let mut d = if h[0][0] > 0.0 && det > 0.0 {
                [-(h[1][1] * g[0] - h[0][1] * g[1]) / det, -(h[0][0] * g[1] - h[1][0] * g[0]) / det]
            } else {
                [-g[0], -g[1]]
            };
            let mut accepted = false;
            for _ in 0..60 {
                let y = [x[0] + d[0], x[1] + d[1]];
                if let Ok(fy) = self.robin(y) {
                    if fy <= f + 1e-4 * (g[0] * d[0] + g[1] * d[1]) || fy <= f && gn < 1e-6 {
                        x = y;
                        f = fy;
                        accepted = true;
                        break;
                    }
                }
                d = [0.5 * d[0], 0.5 * d[1]];
            }
            if !accepted {
                return Ok(x);
            }
        }
        Ok(x)
    }

    /// Largest residual of the discrete Laplace equation for H(x, ·), FEM
    /// path only (zero for closed forms).
    pub fn harmonic_residual(&self, x: [f64; 2]) -> f64 {
        match &self.kind {
            Kind::Fem(f) => f.residual(x),
            _ => 0.0,
        }
    }
}

const D1: [f64; 4] = [1.0, -8.0, 8.0, -1.0];
const O1: [f64; 4] = [-2.0, -1.0, 1.0, 2.0];

/// Fourth-order centered gradient.
fn fd_grad4(f: impl Fn([f64; 2]) -> f64, x: [f64; 2], h: f64) -> [f64; 2] {
    let mut g = [0.0; 2];
    for k in 0..4 {
        g[0] += D1[k] * f([x[0] + O1[k] * h, x[1]]);
        g[1] += D1[k] * f([x[0], x[1] + O1[k] * h]);
    }
    [g[0] / (12.0 * h), g[1] / (12.0 * h)]
}

/// Fourth-order centered Hessian.
fn fd_hess4(f: impl Fn([f64; 2]) -> f64, x: [f64; 2], h: f64) -> [[f64; 2]; 2] {
    let d2 = [-1.0, 16.0, -30.0, 16.0, -1.0];
    let mut hxx = 0.0;
    let mut hyy = 0.0;
    for k in 0..5 {
        let o = (k as f64 - 2.0) * h;
        hxx += d2[k] * f([x[0] + o, x[1]]);
        hyy += d2[k] * f([x[0], x[1] + o]);
    }
    let mut hxy = 0.0;
    for i in 0..4 {
        for j in 0..4 {
            hxy += D1[i] * D1[j] * f([x[0] + O1[i] * h, x[1] + O1[j] * h]);
        }
    }
    let h2 = h * h;
    hxy /= 144.0 * h2;
    [[hxx / (12.0 * h2), hxy], [hxy, hyy / (12.0 * h2)]]
}

fn polygon_centroid(v: &[[f64; 2]]) -> [f64; 2] {
    let n = v.len();
    let (mut a, mut cx, mut cy) = (0.0, 0.0, 0.0);
    for i in 0..n {
        let (p, q) = (v[i], v[(i + 1) % n]);
        let c = p[0] * q[1] - q[0] * p[1];
        a += c;
        cx += (p[0] + q[0]) * c;
        cy += (p[1] + q[1]) * c;
    }
    [cx / (3.0 * a), cy / (3.0 * a)]
}

/// θ₁(v) = 2Σ(-1)ⁿ q^{(n+½)²} sin((2n+1)v) and its derivative.
fn theta1(v: Complex64, q: f64) -> (Complex64, Complex64) {
    let mut s = Complex64::new(0.0, 0.0);
    let mut d = Complex64::new(0.0, 0.0);
    for n in 0..60 {
        let k = (2 * n + 1) as f64;
        let c = q.powf((n as f64 + 0.5).powi(2));
        if c < 1e-300 {
            break;
        }
        let sign = if n % 2 == 0 { 2.0 } else { -2.0 };
        let arg = v * k;
        s += arg.sin() * (sign * c);
        d += arg.cos() * (sign * c * k);
        if c * (k * v.im.abs()).exp() < 1e-18 * s.norm() {
            break;
        }
    }
    (s, d)
}

/// Rectangle (0,a)×(0,b), stored in coordinates where a ≤ b so the theta
/// nome e^{-πb/a} is at most e^{-π}.
struct ThetaRect {
    a: f64,
    q: f64,
    swap: bool,
    shift: [f64; 2],
    log_c: f64,
}

impl ThetaRect {
    fn new(width: f64, height: f64) -> ThetaRect {
        let swap = width > height;
        let (a, b) = if swap { (height, width) } else { (width, height) };
        let q = (-PI * b / a).exp();
        let (_, d0) = theta1(Complex64::new(0.0, 0.0), q);
        ThetaRect { a, q, swap, shift: [0.5 * width, 0.5 * height], log_c: (d0.re * PI / (2.0 * a)).ln() }
    }

    fn to_local(&self, x: [f64; 2]) -> Complex64 {
        let p = [x[0] + self.shift[0], x[1] + self.shift[1]];
        if self.swap { Complex64::new(p[1], p[0]) } else { Complex64::new(p[0], p[1]) }
    }

    fn from_local_grad(&self, g: [f64; 2]) -> [f64; 2] {
        if self.swap { [g[1], g[0]] } else { g }
    }

    fn k(&self) -> f64 {
        PI / (2.0 * self.a)
    }

    /// log|θ₁(k z)| and (θ₁'/θ₁)(k z)·k.
    fn lt(&self, z: Complex64) -> (f64, Complex64) {
        let (t, d) = theta1(z * self.k(), self.q);
        (t.norm().ln(), d / t * self.k())
    }

    fn regular(&self, x: [f64; 2], y: [f64; 2]) -> f64 {
        let (z, w) = (self.to_local(x), self.to_local(y));
        let dz = z - w;
        // log|θ₁(k(z-w))| - log|z-w|, regularized near the diagonal
        let near = if dz.norm() < 1e-3 * self.a {
            let (_, d0) = theta1(Complex64::new(0.0, 0.0), self.q);
            let v = dz * self.k();
            // θ₁(v)/v = θ₁'(0)(1 + c v² + …); the series gives c
            let ratio = if v.norm() == 0.0 { d0 } else { theta1(v, self.q).0 / v };
            (ratio * self.k()).norm().ln()
        } else {
            self.lt(dz).0 - dz.norm().ln()
        };
        let l2 = self.lt(z + w).0;
        let l3 = self.lt(z - w.conj()).0;
        let l4 = self.lt(z + w.conj()).0;
        INV_2PI * (near + l2 - l3 - l4)
    }

    fn regular_grad(&self, x: [f64; 2], y: [f64; 2]) -> [f64; 2] {
        let (z, w) = (self.to_local(x), self.to_local(y));
        let dz = z - w;
        let f1 = self.lt(dz).1 - dz.inv();
        let f = f1 + self.lt(z + w).1 - self.lt(z - w.conj()).1 - self.lt(z + w.conj()).1;
        self.from_local_grad([INV_2PI * f.re, -INV_2PI * f.im])
    }

    fn robin(&self, x: [f64; 2]) -> f64 {
        let w = self.to_local(x);
        let l1 = self.lt(w * 2.0).0;
        let l2 = self.lt(Complex64::new(0.0, 2.0 * w.im)).0;
        let l3 = self.lt(Complex64::new(2.0 * w.re, 0.0)).0;
        INV_2PI * (self.log_c + l1 - l2 - l3)
    }

    fn robin_grad(&self, x: [f64; 2]) -> [f64; 2] {
        let w = self.to_local(x);
        let d1 = self.lt(w * 2.0).1 * 2.0;
        let d2 = self.lt(Complex64::new(0.0, 2.0 * w.im)).1 * 2.0;
        let d3 = self.lt(Complex64::new(2.0 * w.re, 0.0)).1 * 2.0;
        // ∂ₓlog|f(z)| = Re f'/f, ∂ᵧlog|f(z)| = -Im f'/f; the second term
        // depends on Im w only and the third on Re w only
        let gx = d1.re - d3.re;
        let gy = -d1.im - (Complex64::new(0.0, 1.0) * d2).re;
        self.from_local_grad([INV_2PI * gx, INV_2PI * gy])
    }
}

/// Unit disk minus the closed disk B_ε(P), mapped by a Möbius
/// automorphism onto the concentric annulus ρ < |ζ| < 1.
struct HoledDisk {
    /// rotation taking P onto the positive real axis
    rot: Complex64,
    a: f64,
    rho: f64,
    log_rho: f64,
}

impl HoledDisk {
    fn new(center: [f64; 2], eps: f64) -> HoledDisk {
        let p = center[0].hypot(center[1]);
        let rot = if p > 0.0 { Complex64::new(center[0], -center[1]) / p } else { Complex64::new(1.0, 0.0) };
        let (x1, x2) = (p - eps, p + eps);
        let s = x1 + x2;
        let a = if s.abs() < 1e-300 {
            0.0
        } else {
            let b = 1.0 + x1 * x2;
            (b - (b * b - s * s).sqrt()) / s
        };
        let rho = ((x2 - a) / (1.0 - a * x2)).abs();
        HoledDisk { rot, a, rho, log_rho: rho.ln() }
    }

    fn map(&self, x: [f64; 2]) -> (Complex64, f64) {
        let z = Complex64::new(x[0], x[1]) * self.rot;
        let den = Complex64::new(1.0, 0.0) - z * self.a;
        let t = (z - self.a) / den;
        let dt = (1.0 - self.a * self.a) / den.norm_sqr();
        (t, dt)
    }

    /// Π_k (1 - ρ^{2k}z)(1 - ρ^{2k}/z), the annulus prime function without
    /// its (1 - z) factor.
    fn prod(&self, z: Complex64) -> Complex64 {
        let mut p = Complex64::new(1.0, 0.0);
        let r2 = self.rho * self.rho;
        let mut rk = r2;
        for _ in 0..200 {
            p *= (Complex64::new(1.0, 0.0) - z * rk) * (Complex64::new(1.0, 0.0) - z.inv() * rk);
            rk *= r2;
            if rk < 1e-18 {
                break;
            }
        }
        p
    }

    /// H_A(ζ, η) = -(1/2π)log|ζ-η| - G_A(ζ, η) with
    /// G_A = -(1/2π)log| |η|P(ζ/η)/P(ζη̄) | + log|ζ|log|η|/(2π log ρ).
    fn regular_annulus(&self, z: Complex64, w: Complex64) -> f64 {
        let pz = self.prod(z / w);
        let full = Complex64::new(1.0, 0.0) - z * w.conj();
        let pw = full * self.prod(z * w.conj());
        INV_2PI * (pz.norm().ln() - pw.norm().ln()) - z.norm().ln() * w.norm().ln() / (2.0 * PI * self.log_rho)
    }

    fn regular(&self, x: [f64; 2], y: [f64; 2]) -> f64 {
        let (z, dz) = self.map(x);
        let (w, dw) = self.map(y);
        let d = (x[0] - y[0]).hypot(x[1] - y[1]);
        let dd = (z - w).norm();
        // log|ζ-η| - log|x-y| → log|T'(x)| on the diagonal
        let ratio = if d < 1e-8 { 0.5 * (dz * dw).ln() } else { (dd / d).ln() };
        INV_2PI * ratio + self.regular_annulus(z, w)
    }

    fn robin(&self, x: [f64; 2]) -> f64 {
        let (z, dz) = self.map(x);
        INV_2PI * dz.ln() + self.regular_annulus(z, z)
    }
}

/// One P1 Dirichlet solve per source point; the interior stiffness matrix
/// is factored once and the solutions are cached by source point.
struct FemGreen {
    mesh: Arc<Mesh>,
    locator: Locator,
    interior: Vec<usize>,
    slot: Vec<usize>,
    k_ib: Vec<(usize, usize, f64)>,
    k_ii: SparseColMat<usize, f64>,
    chol: faer::sparse::linalg::solvers::Llt<usize, f64>,
    h: f64,
    cache: RwLock<HashMap<(u64, u64), Arc<Vec<f64>>>>,
}

impl FemGreen {
    fn new(mesh: Arc<Mesh>) -> Result<FemGreen> {
        let n = mesh.n_nodes();
        let mut slot = vec![usize::MAX; n];
        let mut interior = Vec::new();
        for i in 0..n {
            if !mesh.is_boundary(i) {
                slot[i] = interior.len();
                interior.push(i);
            }
        }
        let mut trip = Vec::new();
        let mut k_ib = Vec::new();
        for k in 0..mesh.elements.len() {
            let e = mesh.elements[k];
            let g = mesh.geom(k);
            for a in 0..3 {
                for b in 0..3 {
                    let v = g.area * (g.grads[a][0] * g.grads[b][0] + g.grads[a][1] * g.grads[b][1]);
                    let (i, j) = (e[a], e[b]);
                    if slot[i] != usize::MAX {
                        if slot[j] != usize::MAX {
                            trip.push(Triplet::new(slot[i], slot[j], v));
                        } else {
                            k_ib.push((slot[i], j, v));
                        }
                    }
                }
            }
        }
        let m = interior.len();
        let k_ii = SparseColMat::<usize, f64>::try_new_from_triplets(m, m, &trip)
            .map_err(|e| Error::InvalidMesh(format!("stiffness assembly: {e:?}")))?;
        let chol = k_ii.sp_cholesky(Side::Lower).map_err(|e| Error::InvalidMesh(format!("stiffness factorization: {e:?}")))?;
        let h = mesh.max_edge();
        let locator = Locator::new(&mesh);
        Ok(FemGreen { mesh, locator, interior, slot, k_ib, k_ii, chol, h, cache: RwLock::new(HashMap::new()) })
    }

    fn solve(&self, x: [f64; 2]) -> Arc<Vec<f64>> {
        let key = (x[0].to_bits(), x[1].to_bits());
        if let Some(v) = self.cache.read().unwrap().get(&key) {
            return v.clone();
        }
        let n = self.mesh.n_nodes();
        let mut full = vec![0.0; n];
        for &b in &self.mesh.boundary {
            let y = self.mesh.nodes[b];
            full[b] = -INV_2PI * (x[0] - y[0]).hypot(x[1] - y[1]).ln();
        }
        let m = self.interior.len();
        let mut rhs = Mat::<f64>::zeros(m, 1);
        for &(i, j, v) in &self.k_ib {
            rhs[(i, 0)] -= v * full[j];
        }
        self.chol.solve_in_place(rhs.as_mut());
        for (s, &i) in self.interior.iter().enumerate() {
            full[i] = rhs[(s, 0)];
        }
        let arc = Arc::new(full);
        self.cache.write().unwrap().entry(key).or_insert_with(|| arc.clone()).clone()
    }

    fn regular(&self, x: [f64; 2], y: [f64; 2]) -> f64 {
        let h = self.solve(x);
        self.locator.interpolate(&self.mesh, &h, y).unwrap_or(f64::NAN)
    }

    /// H(x, x) as the mean of H(x, ·) over a circle around x, which by
    /// harmonicity equals the center value and averages out the P1 kinks.
    fn robin(&self, x: [f64; 2], max_radius: f64) -> f64 {
        let h = self.solve(x);
        let rho = (3.0 * self.h).min(max_radius);
        let n = 64;
        let mut acc = 0.0;
        for k in 0..n {
            let t = 2.0 * PI * (k as f64 + 0.5) / n as f64;
            let y = [x[0] + rho * t.cos(), x[1] + rho * t.sin()];
            acc += self.locator.interpolate(&self.mesh, &h, y).unwrap_or(f64::NAN);
        }
        acc / n as f64
    }

    fn residual(&self, x: [f64; 2]) -> f64 {
        let h = self.solve(x);
        let m = self.interior.len();
        let mut r = vec![0.0; m];
        for (j, col) in (0..m).map(|j| (j, self.k_ii.col_range(j))) {
            for p in col {
                let i = self.k_ii.row_idx()[p];
                r[i] += self.k_ii.val()[p] * h[self.interior[j]];
            }
        }
        for &(i, j, v) in &self.k_ib {
            r[i] += v * h[j];
        }
        let _ = &self.slot;
        r.iter().fold(0.0, |a, b| a.max(b.abs()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn disk_examples() {
        let g = GreenOracle::new(Domain::unit_disk()).unwrap();
        let v = g.green([0.0, 0.0], [0.5, 0.0]).unwrap();
        assert!((v + INV_2PI * 0.5f64.ln()).abs() < 1e-15);
        assert!(g.green([0.2, 0.1], [0.6, 0.8]).unwrap().abs() < 1e-15);
        assert_eq!(g.robin([0.0, 0.0]).unwrap(), 0.0);
        let h = g.robin_hess([0.0, 0.0]).unwrap();
        assert!((h[0][0] - 1.0 / PI).abs() < 1e-15 && h[0][1] == 0.0);
        assert!(matches!(g.green([0.1, 0.1], [0.1, 0.1]), Err(Error::CoincidentPoints(_))));
        assert!(matches!(g.green([1.1, 0.0], [0.1, 0.1]), Err(Error::OutsideDomain(..))));
        assert!(matches!(g.robin([0.99999, 0.0]), Err(Error::TooCloseToBoundary { .. })));
    }

    #[test]
    fn invalid_domains() {
        assert!(Domain::new(Shape::Polygon { vertices: vec![[0.0, 0.0], [0.0, 1.0], [1.0, 0.0]] }).is_err());
        assert!(Domain::new(Shape::Polygon { vertices: vec![[0.0, 0.0], [1.0, 1.0], [1.0, 0.0], [0.0, 1.0]] }).is_err());
        assert!(Domain::punctured_disk([0.9, 0.0], 0.2).is_err());
    }

    #[test]
    fn rectangle_vanishes_on_boundary_and_is_symmetric() {
        let d = Domain::new(Shape::Rectangle { width: 2.0, height: 1.2 }).unwrap();
        let g = GreenOracle::new(d).unwrap();
        let x = [0.3, -0.1];
        for y in [[1.0, 0.2], [-0.4, 0.6], [0.7, -0.6], [-1.0, -0.5]] {
            assert!(g.green(x, y).unwrap().abs() < 1e-13, "{y:?}");
        }
        let y = [-0.5, 0.35];
        assert!((g.green(x, y).unwrap() - g.green(y, x).unwrap()).abs() < 1e-13);
    }

    #[test]
    fn rectangle_regular_part_is_continuous_at_diagonal() {
        let g = GreenOracle::new(Domain::square(2.0)).unwrap();
        let x = [0.2, 0.1];
        let r = g.robin(x).unwrap();
        let h = g.regular(x, [0.2 + 1e-4, 0.1]).unwrap();
        let h2 = g.regular(x, [0.2 + 1e-6, 0.1]).unwrap();
        assert!((r - h).abs() < 1e-4 && (r - h2).abs() < 1e-6, "{r} {h} {h2}");
    }

    #[test]
    fn rectangle_gradients_match_differences() {
        let g = GreenOracle::new(Domain::new(Shape::Rectangle { width: 1.0, height: 1.7 }).unwrap()).unwrap();
        let x = [0.12, -0.31];
        let e = 1e-6;
        let gr = g.robin_grad(x).unwrap();
        let fx = (g.robin([x[0] + e, x[1]]).unwrap() - g.robin([x[0] - e, x[1]]).unwrap()) / (2.0 * e);
        let fy = (g.robin([x[0], x[1] + e]).unwrap() - g.robin([x[0], x[1] - e]).unwrap()) / (2.0 * e);
        assert!((gr[0] - fx).abs() < 1e-7 && (gr[1] - fy).abs() < 1e-7, "{gr:?} {fx} {fy}");
        let y = [-0.2, 0.5];
        let gg = g.green_grad(x, y).unwrap();
        let fx = (g.green([x[0] + e, x[1]], y).unwrap() - g.green([x[0] - e, x[1]], y).unwrap()) / (2.0 * e);
        let fy = (g.green([x[0], x[1] + e], y).unwrap() - g.green([x[0], x[1] - e], y).unwrap()) / (2.0 * e);
        assert!((gg[0] - fx).abs() < 1e-7 && (gg[1] - fy).abs() < 1e-7);
    }

    #[test]
    fn holed_disk_boundary_values() {
        let d = Domain::punctured_disk([0.3, 0.0], 0.05).unwrap();
        let g = GreenOracle::new(d).unwrap();
        let x = [-0.2, 0.4];
        for k in 0..8 {
            let t = k as f64 * 0.8;
            let outer = [t.cos(), t.sin()];
            let inner = [0.3 + 0.05 * t.cos(), 0.05 * t.sin()];
            assert!(g.green(x, outer).unwrap().abs() < 1e-12);
            assert!(g.green(x, inner).unwrap().abs() < 1e-12);
        }
        let y = [0.5, -0.3];
        assert!((g.green(x, y).unwrap() - g.green(y, x).unwrap()).abs() < 1e-12);
        let r = g.robin(x).unwrap();
        assert!((r - g.regular(x, [x[0] + 1e-7, x[1]]).unwrap()).abs() < 1e-6);
    }

    #[test]
    fn small_hole_capacity_correction() {
        // for a tiny hole at P, H_Ω(x,x) ≈ H_D(x,x) + G_D(x,P)²/(-(1/2π)log ε - H_D(P,P))
        let p = [0.2, -0.1];
        let eps = 1e-4;
        let g = GreenOracle::new(Domain::punctured_disk(p, eps).unwrap()).unwrap();
        let d = GreenOracle::new(Domain::unit_disk()).unwrap();
        let x = [-0.3, 0.4];
        let gp = d.green(x, p).unwrap();
        let cap = -INV_2PI * eps.ln() - d.robin(p).unwrap();
        let pred = d.robin(x).unwrap() + gp * gp / cap;
        let r = g.robin(x).unwrap();
        assert!((r - pred).abs() < 1e-5, "{r} vs {pred}");
    }
}
