//! Triangulations: the text format, a ring-structured ("O-grid") generator
//! with radial grading around a point, point location, and P1 element
//! helpers.

use crate::error::{Error, Result};
use std::f64::consts::PI;
use std::fmt::Write as _;

#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    pub nodes: Vec<[f64; 2]>,
    pub elements: Vec<[usize; 3]>,
    pub boundary: Vec<usize>,
    is_boundary: Vec<bool>,
}

/// Degree-4 six-point rule on the reference triangle: barycentric
/// coordinates and weights summing to 1.
pub const DUNAVANT6: [([f64; 3], f64); 6] = {
    const A: f64 = 0.445_948_490_915_965;
    const WA: f64 = 0.223_381_589_678_011;
    const B: f64 = 0.091_576_213_509_771;
    const WB: f64 = 0.109_951_743_655_322;
    [
        ([A, A, 1.0 - 2.0 * A], WA),
        ([A, 1.0 - 2.0 * A, A], WA),
        ([1.0 - 2.0 * A, A, A], WA),
        ([B, B, 1.0 - 2.0 * B], WB),
        ([B, 1.0 - 2.0 * B, B], WB),
        ([1.0 - 2.0 * B, B, B], WB),
    ]
};

#[derive(Debug, Clone, Copy)]
pub struct ElementGeom {
    pub area: f64,
    /// Gradients of the three barycentric basis functions.
    pub grads: [[f64; 2]; 3],
}

impl Mesh {
    pub fn new(nodes: Vec<[f64; 2]>, elements: Vec<[usize; 3]>, boundary: Vec<usize>) -> Result<Mesh> {
        let n = nodes.len();
        let mut is_boundary = vec![false; n];
        for &b in &boundary {
            if b >= n {
                return Err(Error::InvalidMesh(format!("boundary index {b} out of range")));
            }
            is_boundary[b] = true;
        }
        for (k, e) in elements.iter().enumerate() {
            if e.iter().any(|&i| i >= n) {
                return Err(Error::InvalidMesh(format!("element {k} references a missing node")));
            }
            let a = signed_area(nodes[e[0]], nodes[e[1]], nodes[e[2]]);
            if !(a > 0.0) {
                return Err(Error::InvalidMesh(format!("element {k} has non-positive area {a:e}")));
            }
        }
        Ok(Mesh { nodes, elements, boundary, is_boundary })
    }

    pub fn is_boundary(&self, i: usize) -> bool {
        self.is_boundary[i]
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn geom(&self, k: usize) -> ElementGeom {
        let [i, j, l] = self.elements[k];
        let (p0, p1, p2) = (self.nodes[i], self.nodes[j], self.nodes[l]);
        let area = signed_area(p0, p1, p2);
        let d = 2.0 * area;
        let grads = [
            [(p1[1] - p2[1]) / d, (p2[0] - p1[0]) / d],
            [(p2[1] - p0[1]) / d, (p0[0] - p2[0]) / d],
            [(p0[1] - p1[1]) / d, (p1[0] - p0[0]) / d],
        ];
        ElementGeom { area, grads }
    }

    /// Longest edge over all elements.
    pub fn max_edge(&self) -> f64 {
        self.elements
            .iter()
            .flat_map(|e| {
                let p = |i: usize| self.nodes[e[i]];
                [dist(p(0), p(1)), dist(p(1), p(2)), dist(p(2), p(0))]
            })
            .fold(0.0, f64::max)
    }

    /// Longest edge of the elements touching node `i`.
    pub fn local_size(&self, i: usize, adj: &[Vec<usize>]) -> f64 {
        let mut h: f64 = 0.0;
        for &k in &adj[i] {
            let e = self.elements[k];
            for a in 0..3 {
                h = h.max(dist(self.nodes[e[a]], self.nodes[e[(a + 1) % 3]]));
            }
        }
        h
    }

    /// Elements incident to each node.
    pub fn node_elements(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.nodes.len()];
        for (k, e) in self.elements.iter().enumerate() {
            for &i in e {
                adj[i].push(k);
            }
        }
        adj
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "nodes {} elements {} boundary {}", self.nodes.len(), self.elements.len(), self.boundary.len());
        for p in &self.nodes {
            let _ = writeln!(s, "{:.17e} {:.17e}", p[0], p[1]);
        }
        for e in &self.elements {
            let _ = writeln!(s, "{} {} {}", e[0], e[1], e[2]);
        }
        for b in &self.boundary {
            let _ = writeln!(s, "{b}");
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Mesh> {
        let bad = |m: &str| Error::InvalidMesh(m.to_string());
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let head: Vec<&str> = lines.next().ok_or_else(|| bad("empty file"))?.split_whitespace().collect();
        if head.len() != 6 || head[0] != "nodes" || head[2] != "elements" || head[4] != "boundary" {
            return Err(bad("header must read `nodes N elements M boundary B`"));
        }
        let num = |s: &str| s.parse::<usize>().map_err(|_| bad("bad count in header"));
        let (n, m, b) = (num(head[1])?, num(head[3])?, num(head[5])?);
        let mut nodes = Vec::with_capacity(n);
        for _ in 0..n {
            let l = lines.next().ok_or_else(|| bad("missing node line"))?;
            let v: Vec<f64> = l.split_whitespace().map(|t| t.parse::<f64>()).collect::<std::result::Result<_, _>>().map_err(|_| bad("bad node"))?;
            if v.len() != 2 {
                return Err(bad("node lines hold two numbers"));
            }
            nodes.push([v[0], v[1]]);
        }
        let mut elements = Vec::with_capacity(m);
        for _ in 0..m {
            let l = lines.next().ok_or_else(|| bad("missing element line"))?;
            let v: Vec<usize> = l.split_whitespace().map(|t| t.parse::<usize>()).collect::<std::result::Result<_, _>>().map_err(|_| bad("bad element"))?;
            if v.len() != 3 {
                return Err(bad("element lines hold three indices"));
            }
            elements.push([v[0], v[1], v[2]]);
        }
        let mut boundary = Vec::with_capacity(b);
        for _ in 0..b {
            let l = lines.next().ok_or_else(|| bad("missing boundary line"))?;
            boundary.push(l.trim().parse::<usize>().map_err(|_| bad("bad boundary index"))?);
        }
        Mesh::new(nodes, elements, boundary)
    }
}

pub fn signed_area(a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> f64 {
    0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]))
}

pub fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

/// Geometry the ring generator needs: distance from the center to the
/// outer boundary along each direction, and angles that must carry nodes.
pub trait StarBoundary {
    fn ray(&self, center: [f64; 2], phi: f64) -> f64;
    fn corner_angles(&self, center: [f64; 2]) -> Vec<f64>;
}

#[derive(Debug, Clone, Copy)]
pub struct RingOptions {
    pub center: [f64; 2],
    /// 0 for a filled core, otherwise the radius of a circular hole.
    pub inner_radius: f64,
    /// Radial spacing next to the center (or the hole).
    pub core_spacing: f64,
    /// Radius of the uniformly spaced core (filled case).
    pub core_radius: f64,
    /// Sector count of the outermost rings; a power of two.
    pub max_sectors: usize,
    /// Largest radial spacing, reached far from the center.
    pub max_spacing: f64,
    /// Outside the core the radial spacing grows by `grading` per unit
    /// radius (filled case) or is `grading` times the radius (holed case).
    pub grading: f64,
}

pub const DEFAULT_GRADING: f64 = 2.0 * PI / 64.0;

impl RingOptions {
    /// Quasi-uniform mesh of spacing h.
    pub fn uniform(center: [f64; 2], h: f64, outer_extent: f64) -> RingOptions {
        let sectors = (2.0 * PI * outer_extent / h).ceil().max(8.0) as usize;
        RingOptions {
            center,
            inner_radius: 0.0,
            core_spacing: h,
            core_radius: outer_extent,
            max_sectors: sectors.next_power_of_two(),
            max_spacing: h,
            grading: DEFAULT_GRADING,
        }
    }
}

/// Piecewise-linear angle map from [0, 1) onto [φ₀, φ₀ + 2π) whose knots
/// put every corner angle on a node of the outermost ring.
struct AngleMap {
    knots: Vec<(f64, f64)>,
}

impl AngleMap {
    fn new(corners: &[f64], sectors: usize) -> AngleMap {
        if corners.is_empty() {
            return AngleMap { knots: vec![(0.0, 0.0), (1.0, 2.0 * PI)] };
        }
        let mut c: Vec<f64> = corners.iter().map(|a| a.rem_euclid(2.0 * PI)).collect();
        c.sort_by(f64::total_cmp);
        c.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
        let phi0 = c[0];
        let rel: Vec<f64> = c.iter().map(|a| a - phi0).chain([2.0 * PI]).collect();
        let m = rel.len() - 1;
        // integer node counts per arc, proportional to arc length, each ≥ 1
        let mut counts: Vec<usize> = (0..m).map(|i| (((rel[i + 1] - rel[i]) / (2.0 * PI)) * sectors as f64).round().max(1.0) as usize).collect();
        let mut total: isize = counts.iter().sum::<usize>() as isize;
        while total != sectors as isize {
            let (mut best, mut score) = (0, f64::NEG_INFINITY);
            for i in 0..m {
                let share = (rel[i + 1] - rel[i]) / (2.0 * PI) * sectors as f64;
                let s = if total > sectors as isize { counts[i] as f64 - share } else { share - counts[i] as f64 };
                if s > score && (total < sectors as isize || counts[i] > 1) {
                    best = i;
                    score = s;
                }
            }
            if total > sectors as isize {
                counts[best] -= 1;
                total -= 1;
            } else {
                counts[best] += 1;
                total += 1;
            }
        }
        let mut knots = vec![(0.0, phi0)];
        let mut acc = 0;
        for i in 0..m {
            acc += counts[i];
            knots.push((acc as f64 / sectors as f64, phi0 + rel[i + 1]));
        }
        AngleMap { knots }
    }

    fn angle(&self, t: f64) -> f64 {
        let k = &self.knots;
        let i = k.partition_point(|p| p.0 <= t).clamp(1, k.len() - 1);
        let (t0, a0) = k[i - 1];
        let (t1, a1) = k[i];
        a0 + (a1 - a0) * (t - t0) / (t1 - t0)
    }
}

/// Ring-structured mesh around `opts.center`: circular rings up to 85% of
/// the shortest ray, then rings blended linearly onto the boundary. The
/// sector count doubles outward whenever arcs get longer than 1.5 radial
/// steps; three-triangle fans stitch a ring to its refined neighbor.
pub fn ring_mesh<B: StarBoundary>(boundary: &B, opts: RingOptions) -> Result<Mesh> {
    let c = opts.center;
    let nmax = opts.max_sectors.next_power_of_two();
    let probe: Vec<f64> = (0..4 * nmax).map(|j| boundary.ray(c, 2.0 * PI * j as f64 / (4 * nmax) as f64)).collect();
    let rho_min = probe.iter().cloned().fold(f64::INFINITY, f64::min);
    if !(rho_min > opts.inner_radius) {
        return Err(Error::InvalidMesh("center is not inside the outer boundary".into()));
    }
    let r_blend = opts.inner_radius + 0.85 * (rho_min - opts.inner_radius);
    let h0 = opts.core_spacing;

    // nominal radii, measured along the shortest ray
    let mut radii = Vec::new();
    let mut r = opts.inner_radius;
    if opts.inner_radius == 0.0 {
        r = h0;
    } else {
        // three boundary-layer rings of the core spacing around the hole
        radii.push(r);
        for _ in 0..3 {
            r += h0;
            radii.push(r);
        }
    }
    let kappa = opts.grading;
    while r < rho_min {
        radii.push(r);
        let step = if opts.inner_radius > 0.0 {
            (kappa * r).max(h0)
        } else {
            h0 + kappa * (r - opts.core_radius).max(0.0)
        };
        r += step.min(opts.max_spacing);
    }
    let last = *radii.last().unwrap();
    if rho_min - last < 0.3 * (last - radii[radii.len().saturating_sub(2)]).max(h0) {
        radii.pop();
    }
    radii.push(rho_min);
    radii.dedup_by(|a, b| (*a - *b).abs() < 1e-15);

    let amap = AngleMap::new(&boundary.corner_angles(c), nmax);
    let filled = opts.inner_radius == 0.0;
    let mut nodes: Vec<[f64; 2]> = Vec::new();
    let mut elements: Vec<[usize; 3]> = Vec::new();
    let mut bnd: Vec<usize> = Vec::new();

    let place = |rn: f64, t: f64| -> [f64; 2] {
        let phi = amap.angle(t);
        let rho = boundary.ray(c, phi);
        let rr = if rn <= r_blend { rn } else { r_blend + (rn - r_blend) / (rho_min - r_blend) * (rho - r_blend) };
        [c[0] + rr * phi.cos(), c[1] + rr * phi.sin()]
    };

    // sector count per ring
    let nr = radii.len();
    let mut sectors = vec![0usize; nr];
    let mut n = if filled { 8usize.min(nmax) } else { ((2.0 * PI * opts.inner_radius / h0).ceil() as usize).next_power_of_two().clamp(16, nmax) };
    for k in 0..nr {
        let rk = radii[k];
        let dr = if k + 1 < nr { radii[k + 1] - rk } else { rk - radii[k - 1] };
        let rings_left = nr - 1 - k;
        let must = (nmax / n).trailing_zeros() as usize >= rings_left && n < nmax;
        if k > 0 && n < nmax && (2.0 * PI * rk / n as f64 > 1.5 * dr || must) && sectors[k - 1] == n {
            n *= 2;
        }
        sectors[k] = n;
    }
    if sectors[nr - 1] != nmax {
        return Err(Error::InvalidMesh(format!("outer ring reached only {} of {nmax} sectors", sectors[nr - 1])));
    }

    let mut rings: Vec<Vec<usize>> = Vec::with_capacity(nr);
    if filled {
        nodes.push(c);
    }
    for k in 0..nr {
        let nk = sectors[k];
        let start = nodes.len();
        for j in 0..nk {
            nodes.push(place(radii[k], j as f64 / nk as f64));
        }
        rings.push((start..start + nk).collect());
    }
    let mut tri = |a: usize, b: usize, d: usize, nodes: &Vec<[f64; 2]>| {
        if signed_area(nodes[a], nodes[b], nodes[d]) > 0.0 {
            elements.push([a, b, d]);
        } else {
            elements.push([a, d, b]);
        }
    };
    if filled {
        let r0 = &rings[0];
        for j in 0..r0.len() {
            tri(0, r0[j], r0[(j + 1) % r0.len()], &nodes);
        }
    }
    for k in 0..nr - 1 {
        let (a, b) = (&rings[k], &rings[k + 1]);
        let (na, nb) = (a.len(), b.len());
        if na == nb {
            // alternating diagonals keep the mesh invariant under the
            // reflections that map ring nodes to ring nodes
            for j in 0..na {
                let j1 = (j + 1) % na;
                if j % 2 == 0 {
                    tri(a[j], b[j], b[j1], &nodes);
                    tri(a[j], b[j1], a[j1], &nodes);
                } else {
                    tri(a[j], b[j], a[j1], &nodes);
                    tri(a[j1], b[j], b[j1], &nodes);
                }
            }
        } else {
            for j in 0..na {
                let j1 = (j + 1) % na;
                let (f0, f1, f2) = (b[2 * j], b[2 * j + 1], b[(2 * j + 2) % nb]);
                tri(a[j], f0, f1, &nodes);
                tri(a[j], f1, a[j1], &nodes);
                tri(a[j1], f1, f2, &nodes);
            }
        }
    }
    bnd.extend(&rings[nr - 1]);
    if !filled {
        bnd.extend(&rings[0]);
    }
    Mesh::new(nodes, elements, bnd)
}

/// Bucket grid over element bounding boxes for point location.
#[derive(Debug, Clone)]
pub struct Locator {
    origin: [f64; 2],
    cell: f64,
    nx: usize,
    ny: usize,
    buckets: Vec<Vec<u32>>,
}

impl Locator {
    pub fn new(mesh: &Mesh) -> Locator {
        let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
        for p in &mesh.nodes {
            for d in 0..2 {
                lo[d] = lo[d].min(p[d]);
                hi[d] = hi[d].max(p[d]);
            }
        }
        let span = (hi[0] - lo[0]).max(hi[1] - lo[1]).max(1e-300);
        let side = ((mesh.elements.len() as f64).sqrt() / 2.0).ceil().clamp(1.0, 1024.0) as usize;
        let cell = span / side as f64 * (1.0 + 1e-9);
        let nx = ((hi[0] - lo[0]) / cell).floor() as usize + 1;
        let ny = ((hi[1] - lo[1]) / cell).floor() as usize + 1;
        let mut buckets = vec![Vec::new(); nx * ny];
        for (k, e) in mesh.elements.iter().enumerate() {
            let (mut a, mut b) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
            for &i in e {
                for d in 0..2 {
                    a[d] = a[d].min(mesh.nodes[i][d]);
                    b[d] = b[d].max(mesh.nodes[i][d]);
                }
            }
            let i0 = ((a[0] - lo[0]) / cell).floor() as usize;
            let i1 = (((b[0] - lo[0]) / cell).floor() as usize).min(nx - 1);
            let j0 = ((a[1] - lo[1]) / cell).floor() as usize;
            let j1 = (((b[1] - lo[1]) / cell).floor() as usize).min(ny - 1);
            for i in i0..=i1 {
                for j in j0..=j1 {
                    buckets[j * nx + i].push(k as u32);
                }
            }
        }
        Locator { origin: lo, cell, nx, ny, buckets }
    }

    /// Element containing x and its barycentric coordinates.
    pub fn locate(&self, mesh: &Mesh, x: [f64; 2]) -> Option<(usize, [f64; 3])> {
        let fi = (x[0] - self.origin[0]) / self.cell;
        let fj = (x[1] - self.origin[1]) / self.cell;
        if fi < -1e-9 || fj < -1e-9 {
            return None;
        }
        let (i, j) = ((fi.max(0.0) as usize).min(self.nx - 1), (fj.max(0.0) as usize).min(self.ny - 1));
        let mut best: Option<(usize, [f64; 3], f64)> = None;
        for &k in &self.buckets[j * self.nx + i] {
            let k = k as usize;
            let e = mesh.elements[k];
            let (p0, p1, p2) = (mesh.nodes[e[0]], mesh.nodes[e[1]], mesh.nodes[e[2]]);
            let a = signed_area(p0, p1, p2);
            let l0 = signed_area(x, p1, p2) / a;
            let l1 = signed_area(p0, x, p2) / a;
            let l2 = 1.0 - l0 - l1;
            let worst = l0.min(l1).min(l2);
            if worst >= -1e-12 {
                return Some((k, [l0, l1, l2]));
            }
            if best.as_ref().map_or(true, |b| worst > b.2) {
                best = Some((k, [l0, l1, l2], worst));
            }
        }
        // tolerate points a hair outside along curved boundaries
        best.filter(|b| b.2 > -1e-6).map(|b| (b.0, b.1))
    }

    /// P1 interpolation of nodal values at x.
    pub fn interpolate(&self, mesh: &Mesh, values: &[f64], x: [f64; 2]) -> Option<f64> {
        self.locate(mesh, x).map(|(k, l)| {
            let e = mesh.elements[k];
            l[0] * values[e[0]] + l[1] * values[e[1]] + l[2] * values[e[2]]
        })
    }
}
