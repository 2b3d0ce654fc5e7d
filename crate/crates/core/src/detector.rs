//! Region-focal grasp predictors: the interface a learned model implements,
//! a deterministic analytic baseline, and a codec-backed adapter for
//! exported network outputs.

use std::f64::consts::PI;

use nalgebra::{Matrix3, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::codec::{Codec, HeadOutputs};
use crate::error::{Error, Result};
use crate::geom::{angle_between, GraspPose, GripperModel, Vec3, OFFSET_LIMIT};
use crate::guidance::RegionPatch;

/// Predicts grasps for region patches (one list per patch, input order).
///
/// Every returned grasp center must lie inside the offset box around its
/// patch center.
pub trait GraspPredictor: Sync {
    fn name(&self) -> &str;
    fn predict(&self, patches: &[RegionPatch], k_per_patch: usize) -> Result<Vec<Vec<GraspPose>>>;
}

/// Per-point normals from the smallest eigenvector of the k-nearest-neighbor
/// covariance, oriented toward the camera origin. `None` marks neighborhoods
/// of rank below 2.
pub fn estimate_normals(points: &[Vec3], k_neighbors: usize) -> Result<Vec<Option<Vec3>>> {
    if k_neighbors < 3 || points.len() < k_neighbors {
        return Err(Error::Range(format!("need at least {k_neighbors} >= 3 points, got {}", points.len())));
    }
    let grid = CellGrid::new(points);
    let mut cands = Vec::new();
    Ok(points
        .iter()
        .map(|p| {
            grid.nearest(points, p, k_neighbors, &mut cands);
            fit_normal(points, cands.iter().map(|d| d.1), p)
        })
        .collect())
}

/// Uniform grid over the cloud's bounding box for exact k-nearest-neighbor
/// queries.
struct CellGrid {
    h: f64,
    lo: Vec3,
    dims: [i64; 3],
    /// Point indices grouped by cell, with `starts[cell]..starts[cell + 1]`.
    starts: Vec<usize>,
    members: Vec<usize>,
}

impl CellGrid {
    fn new(points: &[Vec3]) -> Self {
        let (lo, hi) = points.iter().fold((Vec3::repeat(f64::INFINITY), Vec3::repeat(f64::NEG_INFINITY)), |(lo, hi), p| (lo.inf(p), hi.sup(p)));
        let extent = (hi - lo).max();
        let h = if extent > 0.0 { 2.0 * extent / (points.len() as f64).sqrt() } else { 1.0 };
        let dims = [0, 1, 2].map(|a| ((hi[a] - lo[a]) / h).floor() as i64 + 1);
        let mut grid = Self { h, lo, dims, starts: vec![0; (dims[0] * dims[1] * dims[2]) as usize + 1], members: vec![0; points.len()] };
        let cells: Vec<usize> = points.iter().map(|p| grid.flat(grid.cell(p)).expect("point inside its own box")).collect();
        for &c in &cells {
            grid.starts[c + 1] += 1;
        }
        for c in 1..grid.starts.len() {
            grid.starts[c] += grid.starts[c - 1];
        }
        let mut fill = grid.starts.clone();
        for (j, &c) in cells.iter().enumerate() {
            grid.members[fill[c]] = j;
            fill[c] += 1;
        }
        grid
    }

    fn cell(&self, p: &Vec3) -> [i64; 3] {
        [0, 1, 2].map(|a| (((p[a] - self.lo[a]) / self.h).floor() as i64).clamp(0, self.dims[a] - 1))
    }

    fn flat(&self, c: [i64; 3]) -> Option<usize> {
        (0..3).all(|a| (0..self.dims[a]).contains(&c[a])).then(|| ((c[0] * self.dims[1] + c[1]) * self.dims[2] + c[2]) as usize)
    }

    /// The `k` nearest points to `p` as `(squared distance, index)`, sorted,
    /// ties broken by index.
    fn nearest(&self, points: &[Vec3], p: &Vec3, k: usize, out: &mut Vec<(f64, usize)>) {
        out.clear();
        let c0 = self.cell(p);
        let mut seen = 0;
        for r in 0i64.. {
            for dx in -r..=r {
                for dy in -r..=r {
                    for dz in -r..=r {
                        if dx.abs().max(dy.abs()).max(dz.abs()) != r {
                            continue;
                        }
                        if let Some(f) = self.flat([c0[0] + dx, c0[1] + dy, c0[2] + dz]) {
                            let idx = &self.members[self.starts[f]..self.starts[f + 1]];
                            seen += idx.len();
                            out.extend(idx.iter().map(|&j| ((points[j] - p).norm_squared(), j)));
                        }
                    }
                }
            }
            // Unvisited points are at least r * h away.
            let bound = (r as f64 * self.h).powi(2);
            if seen == points.len() || out.iter().filter(|d| d.0 < bound).count() >= k {
                break;
            }
        }
        let by = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
        out.select_nth_unstable_by(k - 1, by);
        out.truncate(k);
        out.sort_by(by);
    }
}

fn fit_normal<I: Iterator<Item = usize> + Clone>(points: &[Vec3], idx: I, at: &Vec3) -> Option<Vec3> {
    let n = idx.clone().count() as f64;
    let mean = idx.clone().map(|j| points[j]).sum::<Vec3>() / n;
    let mut cov = Matrix3::zeros();
    for j in idx {
        let d = points[j] - mean;
        cov += d * d.transpose();
    }
    let eig = SymmetricEigen::new(cov / n);
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let (l1, l2) = (eig.eigenvalues[order[1]], eig.eigenvalues[order[2]]);
    if !(l2 > 0.0) || l1 <= 1e-9 * l2 {
        return None;
    }
    let mut normal: Vec3 = eig.eigenvectors.column(order[0]).into_owned().normalize();
    if normal.dot(&-at) < 0.0 {
        normal = -normal;
    }
    Some(normal)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnalyticConfig {
    pub gripper: GripperModel,
    pub seeds: usize,
    pub seed_radius: f64,
    pub k_neighbors: usize,
    pub closing_directions: usize,
    /// Grasp depths below the seed point along the approach, meters.
    pub depths: Vec<f64>,
    pub width_margin: f64,
    /// March step along the closing axis, meters.
    pub step: f64,
    /// A free sample within this depth of the observed surface counts as a
    /// crossing through the visible surface rather than a silhouette.
    pub surface_tolerance: f64,
    /// Spacing of the parallel marches used to fit silhouette walls.
    pub side_offset: f64,
    /// Edge normals with `|n . view|` below this mark a smooth contour.
    pub smooth_contour_cos: f64,
    /// Depth step between neighboring samples that ends a visible surface.
    pub contour_jump: f64,
    /// How far past a crossing to look for the contour, meters.
    pub contour_reach: f64,
    /// Smallest closing-axis change worth a realignment pass, radians.
    pub realign_min: f64,
    /// Per-patch duplicate suppression thresholds (meters, radians).
    pub dedup_trans: f64,
    pub dedup_rot: f64,
}

impl Default for AnalyticConfig {
    fn default() -> Self {
        Self {
            gripper: GripperModel::default(),
            seeds: 16,
            seed_radius: 0.02,
            k_neighbors: 16,
            closing_directions: 8,
            depths: (1..=12).map(|i| 0.0025 * i as f64).collect(),
            width_margin: 0.01,
            step: 0.0005,
            surface_tolerance: 0.004,
            side_offset: 0.004,
            smooth_contour_cos: 0.5,
            contour_jump: 0.015,
            contour_reach: 0.01,
            realign_min: 0.5f64.to_radians(),
            dedup_trans: 0.01,
            dedup_rot: PI / 12.0,
        }
    }
}

/// Non-learned antipodal predictor working only from the patch contents.
#[derive(Clone, Debug, Default)]
pub struct AnalyticPredictor {
    pub config: AnalyticConfig,
}

pub const ANALYTIC_NAME: &str = "analytic-baseline";

impl GraspPredictor for AnalyticPredictor {
    fn name(&self) -> &str {
        ANALYTIC_NAME
    }

    fn predict(&self, patches: &[RegionPatch], k_per_patch: usize) -> Result<Vec<Vec<GraspPose>>> {
        Ok(patches.par_iter().map(|p| predict_analytic(p, k_per_patch, &self.config)).collect())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum Occupancy {
    Inside,
    Free,
    Unknown,
}

struct PatchGeometry<'a> {
    patch: &'a RegionPatch,
    /// Region-frame points and their normals, indexed by pixel.
    points: Vec<Option<Vec3>>,
    normals: Vec<Option<Vec3>>,
}

impl<'a> PatchGeometry<'a> {
    fn new(patch: &'a RegionPatch, k_neighbors: usize) -> Option<Self> {
        let n = patch.size;
        let mut points = vec![None; n * n];
        let mut list = Vec::new();
        let mut pixel_of = Vec::new();
        for (r, c, p) in patch.points() {
            points[r * n + c] = Some(p);
            list.push(p + patch.center3d);
            pixel_of.push(r * n + c);
        }
        let est = estimate_normals(&list, k_neighbors).ok()?;
        let mut normals = vec![None; n * n];
        for (j, nrm) in est.into_iter().enumerate() {
            normals[pixel_of[j]] = nrm;
        }
        Some(Self { patch, points, normals })
    }

    fn pixel(&self, q: &Vec3) -> Option<usize> {
        let (r, c) = self.patch.pixel_of(q)?;
        let n = self.patch.size as i64;
        let (r, c) = (round_half_away(r)?, round_half_away(c)?);
        (r >= 0 && c >= 0 && r < n && c < n).then(|| r as usize * self.patch.size + c as usize)
    }

    /// Observed surface depth offset (region frame z) at the pixel under `q`.
    fn observed(&self, q: &Vec3) -> Option<(usize, f64)> {
        let i = self.pixel(q)?;
        self.points[i].map(|p| (i, p.z))
    }

    fn occupancy(&self, q: &Vec3) -> Occupancy {
        match self.observed(q) {
            None => Occupancy::Unknown,
            Some((_, z)) if q.z >= z => Occupancy::Inside,
            Some(_) => Occupancy::Free,
        }
    }

    /// Distance along `dir` from `c` (inside) to the first free point, or
    /// `None` when the march meets unknown space or exceeds `limit`.
    fn march(&self, c: &Vec3, dir: &Vec3, step: f64, limit: f64) -> Option<f64> {
        let mut t_in = 0.0;
        let mut t = step;
        while t <= limit {
            match self.occupancy(&(c + dir * t)) {
                Occupancy::Inside => t_in = t,
                Occupancy::Unknown => return None,
                Occupancy::Free => {
                    let (mut lo, mut hi) = (t_in, t);
                    for _ in 0..12 {
                        let mid = 0.5 * (lo + hi);
                        match self.occupancy(&(c + dir * mid)) {
                            Occupancy::Inside => lo = mid,
                            _ => hi = mid,
                        }
                    }
                    return Some(hi);
                }
            }
            t += step;
        }
        None
    }

    /// Inward surface normal where the march along `dir` leaves the object.
    fn crossing_normal(&self, c: &Vec3, dir: &Vec3, t: f64, cfg: &AnalyticConfig, limit: f64) -> Option<Vec3> {
        let e = c + dir * t;
        let (i, z) = self.observed(&e)?;
        if z - e.z <= cfg.surface_tolerance {
            return self.normals[i].map(|n| -n);
        }
        // Silhouette: the hidden side wall's in-plane direction comes from two
        // parallel marches.
        let view = (e + self.patch.center3d).normalize();
        let side = view.cross(dir).try_normalize(1e-12)?;
        let flat = |v: Vec3| v - view * view.dot(&v);
        let mut outward = flat(*dir);
        // Least-squares slope of exit distance against side offset.
        let exits: Vec<(f64, f64)> = (-2..=2)
            .filter_map(|k| {
                let o = k as f64 * cfg.side_offset;
                if k == 0 {
                    return Some((0.0, t));
                }
                self.march(&(c + side * o), dir, cfg.step, limit).map(|tk| (o, tk))
            })
            .collect();
        if exits.len() >= 3 {
            let n = exits.len() as f64;
            let (mo, mt) = exits.iter().fold((0.0, 0.0), |acc, e| (acc.0 + e.0 / n, acc.1 + e.1 / n));
            let (sot, soo) = exits.iter().fold((0.0, 0.0), |acc, e| (acc.0 + (e.0 - mo) * (e.1 - mt), acc.1 + (e.0 - mo).powi(2)));
            if soo > 0.0 {
                if let Some(tn) = flat(side + dir * (sot / soo)).try_normalize(1e-12) {
                    outward -= tn * tn.dot(&outward);
                }
            }
        }
        let mut outward = outward.try_normalize(1e-12)?;
        // A smooth contour (edge normal nearly perpendicular to the view)
        // means the wall keeps curving past it. Model it with the sphere
        // through the contour that matches the chord, tilting the normal by
        // the depth of the crossing below the contour (negative above it).
        let inside = c + dir * (t - 0.5 * cfg.step).max(0.0);
        if let Some((j, z_edge)) = self.observed(&inside) {
            if let Some(m) = self.normals[j] {
                if m.dot(&view).abs() < cfg.smooth_contour_cos {
                    let depth = (e.z - self.contour_depth(&inside, z_edge, dir, cfg)) * view.z;
                    let rho = (t * t + depth * depth).sqrt();
                    let tilt = (depth / rho.max(1e-12)).clamp(-1.0, 1.0).asin();
                    outward = outward * tilt.cos() + view * tilt.sin();
                }
            }
        }
        Some(-outward)
    }

    /// Deepest observed depth on the visible surface continuing from `from`
    /// along `dir`, up to the first depth jump.
    fn contour_depth(&self, from: &Vec3, z_from: f64, dir: &Vec3, cfg: &AnalyticConfig) -> f64 {
        let (mut last, mut deepest) = (z_from, z_from);
        let mut s = cfg.step;
        while s <= cfg.contour_reach {
            match self.observed(&(from + dir * s)) {
                Some((_, z)) if (z - last).abs() < cfg.contour_jump => {
                    last = z;
                    deepest = deepest.max(z);
                }
                _ => break,
            }
            s += cfg.step;
        }
        deepest
    }
}

/// `f64::round` for moderate magnitudes without the libm call, which
/// dominates the march otherwise.
fn round_half_away(x: f64) -> Option<i64> {
    if !(x.abs() < 1e15) {
        return None;
    }
    let i = x as i64;
    let frac = x - i as f64;
    Some(if frac >= 0.5 {
        i + 1
    } else if frac <= -0.5 {
        i - 1
    } else {
        i
    })
}

fn clamp_to_box(p: &Vec3) -> Vec3 {
    p.map(|x| x.clamp(-OFFSET_LIMIT, OFFSET_LIMIT))
}

/// Unit vectors spanning the plane perpendicular to `n`.
fn tangent_basis(n: &Vec3) -> (Vec3, Vec3) {
    let helper = if n.x.abs() < 0.9 { Vec3::x() } else { Vec3::y() };
    let t1 = n.cross(&helper).normalize();
    (t1, n.cross(&t1))
}

struct Antipodal {
    c: Vec3,
    x: Vec3,
    width: f64,
    /// Inward normals where the `+x` and `-x` marches leave the object.
    np: Vec3,
    nm: Vec3,
}

impl Antipodal {
    fn worst(&self) -> f64 {
        angle_between(&self.x, &self.nm).max(angle_between(&-self.x, &self.np))
    }
}

impl PatchGeometry<'_> {
    /// Marches both ways along `x`, recenters on the chord midpoint and
    /// marches again, then reads the contact normals.
    fn antipodal(&self, c: &Vec3, x: &Vec3, cfg: &AnalyticConfig, limit: f64) -> Option<Antipodal> {
        let tp = self.march(c, x, cfg.step, limit)?;
        let tm = self.march(c, &-x, cfg.step, limit)?;
        let c = clamp_to_box(&(c + x * (0.5 * (tp - tm))));
        if self.occupancy(&c) != Occupancy::Inside {
            return None;
        }
        let tp = self.march(&c, x, cfg.step, limit)?;
        let tm = self.march(&c, &-x, cfg.step, limit)?;
        let width = 2.0 * tp.max(tm) + cfg.width_margin;
        if width > cfg.gripper.max_width {
            return None;
        }
        let np = self.crossing_normal(&c, x, tp, cfg, limit)?;
        let nm = self.crossing_normal(&c, &-x, tm, cfg, limit)?;
        Some(Antipodal { c, x: *x, width, np, nm })
    }
}

/// Analytic antipodal grasps for one patch, best first.
pub fn predict_analytic(patch: &RegionPatch, k: usize, cfg: &AnalyticConfig) -> Vec<GraspPose> {
    if k == 0 {
        return Vec::new();
    }
    let Some(geo) = PatchGeometry::new(patch, cfg.k_neighbors) else { return Vec::new() };
    let cloud: Vec<Vec3> = geo.points.iter().flatten().map(|p| p + patch.center3d).collect();
    let half_limit = 0.5 * cfg.gripper.max_width;

    let mut seeds: Vec<(f64, usize)> = geo
        .points
        .iter()
        .enumerate()
        .filter_map(|(i, p)| p.map(|p| (p.norm(), i)))
        .filter(|(d, i)| *d <= cfg.seed_radius && geo.normals[*i].is_some())
        .collect();
    seeds.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    seeds.truncate(cfg.seeds);

    let mut cands: Vec<GraspPose> = Vec::new();
    for &(_, si) in &seeds {
        let s = geo.points[si].expect("seed point");
        let n = geo.normals[si].expect("seed normal");
        let approach = -n;
        let (t1, t2) = tangent_basis(&n);
        for &depth in &cfg.depths {
            let c = clamp_to_box(&(s + approach * depth));
            if geo.occupancy(&c) != Occupancy::Inside {
                continue;
            }
            for d in 0..cfg.closing_directions {
                let ang = PI * d as f64 / cfg.closing_directions as f64;
                let x = t1 * ang.cos() + t2 * ang.sin();
                let Some(mut hit) = geo.antipodal(&c, &x, cfg, half_limit) else { continue };
                // Align the closing axis with the contact normals once.
                let along = hit.nm - hit.np;
                if let Some(x2) = (along - approach * approach.dot(&along)).try_normalize(1e-12) {
                    if angle_between(&x2, &hit.x) > cfg.realign_min {
                        if let Some(h2) = geo.antipodal(&hit.c, &x2, cfg, half_limit) {
                            if h2.worst() < hit.worst() {
                                hit = h2;
                            }
                        }
                    }
                }
                let Antipodal { c, x, width, np, nm, .. } = hit;
                // Contact at -x pushes along +x and vice versa.
                let worst = angle_between(&x, &nm).max(angle_between(&-x, &np));
                let mu = worst.tan();
                if !(worst < PI / 2.0) || mu > 1.1 {
                    continue;
                }
                let score = ((1.1 - mu) / 1.1).clamp(0.0, 1.0);
                let Ok(g) = GraspPose::from_axes(c + patch.center3d, x, approach, width, score) else { continue };
                cands.push(g);
            }
        }
    }
    let order = crate::eval::nms_order_where(&cands, cfg.dedup_trans, cfg.dedup_rot, k, |g| !cfg.gripper.collides(g, &cloud));
    order.into_iter().map(|i| cands[i].clone()).collect()
}

/// Decodes externally produced head outputs, one per patch.
#[derive(Clone, Debug, Default)]
pub struct CodecPredictor {
    pub codec: Codec,
    pub outputs: Vec<HeadOutputs>,
}

impl GraspPredictor for CodecPredictor {
    fn name(&self) -> &str {
        "codec-backed"
    }

    fn predict(&self, patches: &[RegionPatch], k_per_patch: usize) -> Result<Vec<Vec<GraspPose>>> {
        if patches.len() != self.outputs.len() {
            return Err(Error::Format(format!("{} head outputs for {} patches", self.outputs.len(), patches.len())));
        }
        patches.iter().zip(&self.outputs).map(|(p, o)| predict_codec_backed(p, o, k_per_patch, &self.codec)).collect()
    }
}

pub fn predict_codec_backed(patch: &RegionPatch, out: &HeadOutputs, k: usize, codec: &Codec) -> Result<Vec<GraspPose>> {
    codec.decode(out, &patch.center3d, k.max(1))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plane_normals_face_camera() {
        let pts: Vec<Vec3> = (0..100).map(|i| Vec3::new((i % 10) as f64 * 0.01, (i / 10) as f64 * 0.01, 0.5)).collect();
        for n in estimate_normals(&pts, 16).unwrap() {
            let n = n.unwrap();
            assert!((n - Vec3::new(0.0, 0.0, -1.0)).norm() < 1e-9);
        }
    }

    #[test]
    fn grid_neighbors_match_brute_force() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for n in [16, 100, 700] {
            // A curved sheet plus a few outliers, like a patch cloud.
            let pts: Vec<Vec3> = (0..n)
                .map(|_| {
                    let (x, y): (f64, f64) = (rng.random_range(-0.04..0.04), rng.random_range(-0.04..0.04));
                    let far = if rng.random_bool(0.05) { 0.05 } else { 0.0 };
                    Vec3::new(x, y, 0.5 + 10.0 * x * y + far)
                })
                .collect();
            let grid = CellGrid::new(&pts);
            let mut got = Vec::new();
            for p in &pts {
                grid.nearest(&pts, p, 16, &mut got);
                let mut want: Vec<(f64, usize)> = pts.iter().enumerate().map(|(j, q)| ((q - p).norm_squared(), j)).collect();
                want.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
                want.truncate(16);
                assert_eq!(got, want);
            }
        }
    }

    #[test]
    fn rounding_matches_std() {
        for x in [0.0, -0.0, 0.5, -0.5, 1.5, 2.5, -2.5, 0.49999999999999994, -0.3, 31.5, 1e9 + 0.5, -7.25] {
            assert_eq!(round_half_away(x), Some(x.round() as i64), "{x}");
        }
        assert_eq!(round_half_away(f64::NAN), None);
        assert_eq!(round_half_away(f64::INFINITY), None);
    }

    #[test]
    fn collinear_neighborhood_is_invalid() {
        let pts: Vec<Vec3> = (0..20).map(|i| Vec3::new(i as f64 * 0.01, 0.0, 0.5)).collect();
        assert!(estimate_normals(&pts, 5).unwrap().iter().all(Option::is_none));
    }
}
