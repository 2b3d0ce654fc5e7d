//! Median-split bounding volume hierarchy over mesh triangles.

use crate::geom::Vec3;

use super::mesh::{ray_triangle, MeshHit, TriangleMesh};

const LEAF_SIZE: usize = 4;

#[derive(Clone, Copy, Debug)]
struct Aabb {
    min: Vec3,
    max: Vec3,
}

impl Aabb {
    fn empty() -> Self {
        Self { min: Vec3::repeat(f64::INFINITY), max: Vec3::repeat(f64::NEG_INFINITY) }
    }

    fn grow(&mut self, p: &Vec3) {
        self.min = self.min.inf(p);
        self.max = self.max.sup(p);
    }

    fn merge(&mut self, o: &Aabb) {
        self.min = self.min.inf(&o.min);
        self.max = self.max.sup(&o.max);
    }

    /// Slab test; returns the entry distance when the box is hit before `t_max`.
    fn hit(&self, origin: &Vec3, inv_dir: &Vec3, t_max: f64) -> Option<f64> {
        let mut t0 = 0.0f64;
        let mut t1 = t_max;
        for i in 0..3 {
            if inv_dir[i].is_infinite() {
                // Parallel to the slab: inside or never.
                if origin[i] < self.min[i] || origin[i] > self.max[i] {
                    return None;
                }
                continue;
            }
            let a = (self.min[i] - origin[i]) * inv_dir[i];
            let b = (self.max[i] - origin[i]) * inv_dir[i];
            t0 = t0.max(a.min(b));
            t1 = t1.min(a.max(b));
            if t0 > t1 * (1.0 + 1e-9) + 1e-12 {
                return None;
            }
        }
        Some(t0)
    }
}

#[derive(Clone, Debug)]
enum Node {
    Leaf { bounds: Aabb, start: usize, end: usize },
    Inner { bounds: Aabb, left: usize, right: usize },
}

impl Node {
    fn bounds(&self) -> &Aabb {
        match self {
            Node::Leaf { bounds, .. } | Node::Inner { bounds, .. } => bounds,
        }
    }
}

/// Acceleration structure for nearest-hit queries on one mesh.
#[derive(Clone, Debug)]
pub struct Bvh {
    nodes: Vec<Node>,
    order: Vec<usize>,
}

impl Bvh {
    pub fn build(mesh: &TriangleMesh) -> Self {
        let n = mesh.triangles.len();
        let mut boxes = Vec::with_capacity(n);
        let mut centroids = Vec::with_capacity(n);
        for i in 0..n {
            let mut b = Aabb::empty();
            let c = mesh.corners(i);
            c.iter().for_each(|p| b.grow(p));
            boxes.push(b);
            centroids.push((c[0] + c[1] + c[2]) / 3.0);
        }
        let mut bvh = Bvh { nodes: Vec::new(), order: (0..n).collect() };
        if n > 0 {
            bvh.build_node(0, n, &boxes, &centroids);
        }
        bvh
    }

    fn build_node(&mut self, start: usize, end: usize, boxes: &[Aabb], centroids: &[Vec3]) -> usize {
        let mut bounds = Aabb::empty();
        for &i in &self.order[start..end] {
            bounds.merge(&boxes[i]);
        }
        let idx = self.nodes.len();
        if end - start <= LEAF_SIZE {
            self.nodes.push(Node::Leaf { bounds, start, end });
            return idx;
        }
        let mut cb = Aabb::empty();
        for &i in &self.order[start..end] {
            cb.grow(&centroids[i]);
        }
        let ext = cb.max - cb.min;
        let axis = if ext.x >= ext.y && ext.x >= ext.z {
            0
        } else if ext.y >= ext.z {
            1
        } else {
            2
        };
        let mid = (start + end) / 2;
        self.order[start..end].sort_by(|&a, &b| centroids[a][axis].total_cmp(&centroids[b][axis]).then(a.cmp(&b)));
        self.nodes.push(Node::Leaf { bounds, start, end });
        let left = self.build_node(start, mid, boxes, centroids);
        let right = self.build_node(mid, end, boxes, centroids);
        self.nodes[idx] = Node::Inner { bounds, left, right };
        idx
    }

    /// Nearest two-sided hit with `t < t_max`; ties resolve to the lowest
    /// triangle index.
    pub fn intersect(&self, mesh: &TriangleMesh, origin: &Vec3, dir: &Vec3, t_max: f64) -> Option<MeshHit> {
        if self.nodes.is_empty() {
            return None;
        }
        let inv = Vec3::new(1.0 / dir.x, 1.0 / dir.y, 1.0 / dir.z);
        let mut best: Option<MeshHit> = None;
        let mut limit = t_max;
        let mut stack = vec![0usize];
        while let Some(ni) = stack.pop() {
            let node = &self.nodes[ni];
            if node.bounds().hit(origin, &inv, limit).is_none() {
                continue;
            }
            match node {
                Node::Leaf { start, end, .. } => {
                    for &tri in &self.order[*start..*end] {
                        let [a, b, c] = mesh.corners(tri);
                        if let Some(t) = ray_triangle(origin, dir, &a, &b, &c) {
                            let better = match best {
                                None => t <= limit,
                                Some(h) => t < h.t || (t == h.t && tri < h.triangle),
                            };
                            if better {
                                best = Some(MeshHit { t, triangle: tri });
                                limit = t;
                            }
                        }
                    }
                }
                Node::Inner { left, right, .. } => {
                    stack.push(*right);
                    stack.push(*left);
                }
            }
        }
        best
    }
}

/// Brute-force nearest hit over all triangles, same tie rule as [`Bvh::intersect`].
pub fn intersect_brute_force(mesh: &TriangleMesh, origin: &Vec3, dir: &Vec3) -> Option<MeshHit> {
    let mut best: Option<MeshHit> = None;
    for tri in 0..mesh.triangles.len() {
        let [a, b, c] = mesh.corners(tri);
        if let Some(t) = ray_triangle(origin, dir, &a, &b, &c) {
            if best.is_none_or(|h| t < h.t) {
                best = Some(MeshHit { t, triangle: tri });
            }
        }
    }
    best
}
