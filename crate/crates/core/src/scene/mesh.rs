use std::collections::HashMap;
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::Vec3;

/// Closed (for primitives) triangle mesh in the object frame.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TriangleMesh {
    pub vertices: Vec<Vec3>,
    pub triangles: Vec<[u32; 3]>,
    /// Outward unit normal per triangle.
    pub normals: Vec<Vec3>,
}

/// Ray hit against a single mesh: distance along the ray and triangle index.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MeshHit {
    pub t: f64,
    pub triangle: usize,
}

impl TriangleMesh {
    pub fn new(vertices: Vec<Vec3>, triangles: Vec<[u32; 3]>) -> Result<Self> {
        let n = vertices.len() as u32;
        if triangles.iter().flatten().any(|&i| i >= n) {
            return Err(Error::Format("triangle index out of range".into()));
        }
        let mut normals = Vec::with_capacity(triangles.len());
        for t in &triangles {
            let [a, b, c] = t.map(|i| vertices[i as usize]);
            let n = (b - a).cross(&(c - a));
            let n = n
                .try_normalize(0.0)
                .ok_or_else(|| Error::Format("degenerate triangle".into()))?;
            normals.push(n);
        }
        Ok(Self { vertices, triangles, normals })
    }

    pub fn corners(&self, tri: usize) -> [Vec3; 3] {
        self.triangles[tri].map(|i| self.vertices[i as usize])
    }

    pub fn surface_area(&self) -> f64 {
        (0..self.triangles.len())
            .map(|i| {
                let [a, b, c] = self.corners(i);
                0.5 * (b - a).cross(&(c - a)).norm()
            })
            .sum()
    }

    /// Enclosed volume via the divergence theorem (signed tetrahedra).
    pub fn volume(&self) -> f64 {
        (0..self.triangles.len())
            .map(|i| {
                let [a, b, c] = self.corners(i);
                a.dot(&b.cross(&c)) / 6.0
            })
            .sum()
    }

    /// Every undirected edge shared by exactly two triangles, traversed in
    /// opposite directions (consistent winding).
    pub fn is_closed(&self) -> bool {
        let mut edges: HashMap<(u32, u32), i32> = HashMap::new();
        for t in &self.triangles {
            for k in 0..3 {
                let (a, b) = (t[k], t[(k + 1) % 3]);
                *edges.entry((a, b)).or_default() += 1;
            }
        }
        edges.iter().all(|(&(a, b), &c)| c == 1 && edges.get(&(b, a)) == Some(&1))
    }

    pub fn bounding_radius(&self) -> f64 {
        self.vertices.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    /// Parses ASCII OBJ restricted to `v` and triangular `f` records.
    pub fn from_obj(text: &str) -> Result<Self> {
        let mut vertices = Vec::new();
        let mut triangles = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            let mut parts = line.split_whitespace();
            match parts.next() {
                Some("v") => {
                    let c: Vec<f64> = parts
                        .take(3)
                        .map(|s| s.parse::<f64>())
                        .collect::<std::result::Result<_, _>>()
                        .map_err(|e| Error::Format(format!("line {}: {e}", lineno + 1)))?;
                    if c.len() != 3 {
                        return Err(Error::Format(format!("line {}: vertex needs 3 coordinates", lineno + 1)));
                    }
                    vertices.push(Vec3::new(c[0], c[1], c[2]));
                }
                Some("f") => {
                    let idx: Vec<u32> = parts
                        .map(|s| {
                            let first = s.split('/').next().unwrap_or("");
                            first.parse::<i64>().ok().filter(|&i| i >= 1).map(|i| (i - 1) as u32)
                        })
                        .collect::<Option<_>>()
                        .ok_or_else(|| Error::Format(format!("line {}: bad face index", lineno + 1)))?;
                    if idx.len() != 3 {
                        return Err(Error::Format(format!("line {}: only triangular faces are supported", lineno + 1)));
                    }
                    triangles.push([idx[0], idx[1], idx[2]]);
                }
                _ => {}
            }
        }
        Self::new(vertices, triangles)
    }

    /// Closest point on the mesh surface to `p` (brute force over triangles).
    pub fn closest_point(&self, p: &Vec3) -> Vec3 {
        let mut best = Vec3::zeros();
        let mut best_d = f64::INFINITY;
        for i in 0..self.triangles.len() {
            let [a, b, c] = self.corners(i);
            let q = closest_point_on_triangle(p, &a, &b, &c);
            let d = (q - p).norm_squared();
            if d < best_d {
                best_d = d;
                best = q;
            }
        }
        best
    }

    pub fn distance_to_point(&self, p: &Vec3) -> f64 {
        (self.closest_point(p) - p).norm()
    }
}

/// Two-sided Moller-Trumbore intersection; returns the ray parameter.
pub fn ray_triangle(origin: &Vec3, dir: &Vec3, a: &Vec3, b: &Vec3, c: &Vec3) -> Option<f64> {
    let e1 = b - a;
    let e2 = c - a;
    let p = dir.cross(&e2);
    let det = e1.dot(&p);
    if det.abs() < 1e-18 {
        return None;
    }
    let inv = 1.0 / det;
    let s = origin - a;
    // Barycentric slack keeps rays through shared edges from slipping
    // between both neighbors.
    const SLACK: f64 = 1e-9;
    let u = s.dot(&p) * inv;
    if !(-SLACK..=1.0 + SLACK).contains(&u) {
        return None;
    }
    let q = s.cross(&e1);
    let v = dir.dot(&q) * inv;
    if v < -SLACK || u + v > 1.0 + SLACK {
        return None;
    }
    let t = e2.dot(&q) * inv;
    (t > 1e-12).then_some(t)
}

/// Closest point on triangle `abc` to `p`, by Voronoi region.
pub fn closest_point_on_triangle(p: &Vec3, a: &Vec3, b: &Vec3, c: &Vec3) -> Vec3 {
    let ab = b - a;
    let ac = c - a;
    let ap = p - a;
    let d1 = ab.dot(&ap);
    let d2 = ac.dot(&ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return *a;
    }
    let bp = p - b;
    let d3 = ab.dot(&bp);
    let d4 = ac.dot(&bp);
    if d3 >= 0.0 && d4 <= d3 {
        return *b;
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        return a + ab * (d1 / (d1 - d3));
    }
    let cp = p - c;
    let d5 = ab.dot(&cp);
    let d6 = ac.dot(&cp);
    if d6 >= 0.0 && d5 <= d6 {
        return *c;
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        return a + ac * (d2 / (d2 - d6));
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        return b + (c - b) * ((d4 - d3) / ((d4 - d3) + (d5 - d6)));
    }
    let denom = 1.0 / (va + vb + vc);
    a + ab * (vb * denom) + ac * (vc * denom)
}

/// Primitive kinds available for synthetic scenes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PrimitiveKind {
    Box,
    Cylinder,
    Sphere,
}

/// Minimum tessellation for curved primitives.
pub const MIN_SEGMENTS: u32 = 8;

/// Builds a primitive mesh centered at the origin.
///
/// `dims` is `[x, y, z]` side lengths for a box, `[radius, height]` for a
/// z-axis cylinder and `[radius]` for a sphere. Curved primitives use
/// `segments` around the axis; spheres use `segments / 2` latitude bands.
pub fn make_primitive(kind: PrimitiveKind, dims: &[f64], segments: u32) -> Result<TriangleMesh> {
    if dims.iter().any(|d| !(*d > 0.0) || !d.is_finite()) {
        return Err(Error::Domain(format!("primitive dimensions must be positive, got {dims:?}")));
    }
    let need = match kind {
        PrimitiveKind::Box => 3,
        PrimitiveKind::Cylinder => 2,
        PrimitiveKind::Sphere => 1,
    };
    if dims.len() != need {
        return Err(Error::Domain(format!("{kind:?} needs {need} dimensions, got {}", dims.len())));
    }
    if kind != PrimitiveKind::Box && segments < MIN_SEGMENTS {
        return Err(Error::Domain(format!("need at least {MIN_SEGMENTS} segments, got {segments}")));
    }
    match kind {
        PrimitiveKind::Box => box_mesh(dims[0], dims[1], dims[2]),
        PrimitiveKind::Cylinder => cylinder_mesh(dims[0], dims[1], segments),
        PrimitiveKind::Sphere => sphere_mesh(dims[0], segments),
    }
}

fn box_mesh(x: f64, y: f64, z: f64) -> Result<TriangleMesh> {
    let (hx, hy, hz) = (0.5 * x, 0.5 * y, 0.5 * z);
    let v: Vec<Vec3> = (0..8)
        .map(|i| {
            Vec3::new(
                if i & 1 == 0 { -hx } else { hx },
                if i & 2 == 0 { -hy } else { hy },
                if i & 4 == 0 { -hz } else { hz },
            )
        })
        .collect();
    let t = vec![
        [0, 2, 3], [0, 3, 1], // -z
        [4, 5, 7], [4, 7, 6], // +z
        [0, 1, 5], [0, 5, 4], // -y
        [2, 6, 7], [2, 7, 3], // +y
        [0, 4, 6], [0, 6, 2], // -x
        [1, 3, 7], [1, 7, 5], // +x
    ];
    TriangleMesh::new(v, t)
}

fn cylinder_mesh(r: f64, h: f64, n: u32) -> Result<TriangleMesh> {
    let hz = 0.5 * h;
    let mut v = vec![Vec3::new(0.0, 0.0, -hz), Vec3::new(0.0, 0.0, hz)];
    for i in 0..n {
        let a = 2.0 * PI * i as f64 / n as f64;
        let (s, c) = a.sin_cos();
        v.push(Vec3::new(r * c, r * s, -hz));
        v.push(Vec3::new(r * c, r * s, hz));
    }
    let mut t = Vec::with_capacity(4 * n as usize);
    for i in 0..n {
        let j = (i + 1) % n;
        let (b0, t0, b1, t1) = (2 + 2 * i, 3 + 2 * i, 2 + 2 * j, 3 + 2 * j);
        t.push([0, b1, b0]);
        t.push([1, t0, t1]);
        t.push([b0, b1, t1]);
        t.push([b0, t1, t0]);
    }
    TriangleMesh::new(v, t)
}

fn sphere_mesh(r: f64, n: u32) -> Result<TriangleMesh> {
    let rings = (n / 2).max(2);
    let mut v = vec![Vec3::new(0.0, 0.0, -r), Vec3::new(0.0, 0.0, r)];
    for k in 1..rings {
        let phi = -PI / 2.0 + PI * k as f64 / rings as f64;
        let (sp, cp) = phi.sin_cos();
        for i in 0..n {
            let a = 2.0 * PI * i as f64 / n as f64;
            let (s, c) = a.sin_cos();
            v.push(Vec3::new(r * cp * c, r * cp * s, r * sp));
        }
    }
    let idx = |k: u32, i: u32| 2 + (k - 1) * n + (i % n);
    let mut t = Vec::new();
    for i in 0..n {
        t.push([0, idx(1, i + 1), idx(1, i)]);
        t.push([1, idx(rings - 1, i), idx(rings - 1, i + 1)]);
    }
    for k in 1..rings - 1 {
        for i in 0..n {
            let (a, b, c, d) = (idx(k, i), idx(k, i + 1), idx(k + 1, i + 1), idx(k + 1, i));
            t.push([a, b, c]);
            t.push([a, c, d]);
        }
    }
    TriangleMesh::new(v, t)
}
