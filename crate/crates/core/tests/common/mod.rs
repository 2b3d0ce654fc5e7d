//! Independent oracles shared by the integration and acceptance tests.
#![allow(dead_code)]

use std::f64::consts::PI;

use nalgebra::{DMatrix, Rotation3, UnitQuaternion, Vector3};
use regiongrasp::eval::ContactPair;
use regiongrasp::geom::{GraspPose, Vec3};

/// Dense two-phase simplex with Bland's rule:
/// maximize `c . x` subject to `a x = b`, `x >= 0`.
/// Returns `None` when infeasible and `+inf` when unbounded.
pub fn lp_maximize(a: &[Vec<f64>], b: &[f64], c: &[f64]) -> Option<f64> {
    const EPS: f64 = 1e-11;
    let m = a.len();
    let n = c.len();
    let cols = n + m + 1;
    let mut t = vec![vec![0.0; cols]; m];
    for i in 0..m {
        let sign = if b[i] < 0.0 { -1.0 } else { 1.0 };
        for j in 0..n {
            t[i][j] = sign * a[i][j];
        }
        t[i][n + i] = 1.0;
        t[i][cols - 1] = sign * b[i];
    }
    let mut basis: Vec<usize> = (n..n + m).collect();

    fn pivot(t: &mut [Vec<f64>], obj: &mut [f64], r: usize, col: usize) {
        let p = t[r][col];
        t[r].iter_mut().for_each(|x| *x /= p);
        let row = t[r].clone();
        for (i, ti) in t.iter_mut().enumerate() {
            if i != r && ti[col] != 0.0 {
                let f = ti[col];
                ti.iter_mut().zip(&row).for_each(|(x, y)| *x -= f * y);
            }
        }
        let f = obj[col];
        obj.iter_mut().zip(&row).for_each(|(x, y)| *x -= f * y);
    }

    // Reduced costs in `obj` (entering when negative); the last entry is
    // minus the objective value.
    fn run(t: &mut [Vec<f64>], obj: &mut [f64], basis: &mut [usize], allowed: usize) -> bool {
        loop {
            let Some(col) = (0..allowed).find(|&j| obj[j] < -EPS) else { return true };
            let last = obj.len() - 1;
            let mut best: Option<(f64, usize)> = None;
            for i in 0..t.len() {
                if t[i][col] > EPS {
                    let ratio = t[i][last] / t[i][col];
                    let better = match best {
                        None => true,
                        Some((r, bi)) => ratio < r - EPS || (ratio <= r + EPS && basis[i] < basis[bi]),
                    };
                    if better {
                        best = Some((ratio, i));
                    }
                }
            }
            let Some((_, r)) = best else { return false };
            pivot(t, obj, r, col);
            basis[r] = col;
        }
    }

    // Phase 1: maximize minus the sum of artificials.
    let mut obj = vec![0.0; cols];
    for row in &t {
        for j in 0..n {
            obj[j] -= row[j];
        }
        obj[cols - 1] -= row[cols - 1];
    }
    run(&mut t, &mut obj, &mut basis, n + m);
    if obj[cols - 1] < -1e-9 {
        return None;
    }
    for i in 0..m {
        if basis[i] >= n {
            if let Some(j) = (0..n).find(|&j| t[i][j].abs() > EPS) {
                let mut dummy = vec![0.0; cols];
                pivot(&mut t, &mut dummy, i, j);
                basis[i] = j;
            }
        }
    }

    // Phase 2 over the original columns only.
    let mut obj = vec![0.0; cols];
    for j in 0..n {
        obj[j] = -c[j];
    }
    for i in 0..m {
        if basis[i] < n {
            let cb = c[basis[i]];
            for j in 0..cols {
                obj[j] += cb * t[i][j];
            }
        }
    }
    if !run(&mut t, &mut obj, &mut basis, n) {
        return Some(f64::INFINITY);
    }
    Some(obj[cols - 1])
}

/// Primitive wrenches of two soft-finger contacts: 16-edge friction cones,
/// with the first edge in the plane of the normal and the contact line.
/// Every edge force comes with torsion `+/- TORSION * n` about the normal,
/// bounded by the normal force. Torques are taken about the midpoint.
pub fn contact_wrenches(c: &ContactPair, mu: f64) -> Vec<[f64; 6]> {
    const TORSION: f64 = 1e-6;
    let mid = 0.5 * (c.p1 + c.p2);
    let mut out = Vec::new();
    for (p, n, other) in [(c.p1, c.n1, c.p2), (c.p2, c.n2, c.p1)] {
        let n = n.normalize();
        let line = other - p;
        let u = (line - n * n.dot(&line))
            .try_normalize(1e-12)
            .unwrap_or_else(|| n.cross(&if n.x.abs() < 0.9 { Vec3::x() } else { Vec3::y() }).normalize());
        let v = n.cross(&u);
        for k in 0..16 {
            let a = 2.0 * PI * k as f64 / 16.0;
            let f = n + (u * a.cos() + v * a.sin()) * mu;
            for s in [1.0, -1.0] {
                let tau = (p - mid).cross(&f) + n * (TORSION * s);
                out.push([f.x, f.y, f.z, tau.x, tau.y, tau.z]);
            }
        }
    }
    out
}

/// Force closure as "the origin lies strictly inside the convex hull of the
/// primitive wrenches": full rank and a strictly positive null combination.
pub fn wrench_force_closure(c: &ContactPair, mu: f64) -> bool {
    let w = contact_wrenches(c, mu);
    let m = w.len();
    let mat = DMatrix::from_fn(6, m, |i, j| w[j][i]);
    let sv = mat.clone().svd(false, false).singular_values;
    let top = sv.max();
    if sv.iter().filter(|&&s| s > 1e-9 * top).count() < 6 {
        return false;
    }
    // lambda_i = mu_i + t: sum lambda_i w_i = 0, sum lambda_i = 1; maximize t.
    let mut a = vec![vec![0.0; m + 1]; 7];
    for i in 0..6 {
        for j in 0..m {
            a[i][j] = w[j][i];
            a[i][m] += w[j][i];
        }
    }
    for j in 0..m {
        a[6][j] = 1.0;
    }
    a[6][m] = m as f64;
    let mut b = vec![0.0; 7];
    b[6] = 1.0;
    let mut cost = vec![0.0; m + 1];
    cost[m] = 1.0;
    lp_maximize(&a, &b, &cost).is_some_and(|t| t > 1e-9)
}

/// Rotation built from axis-angle factors, `Rz(theta) Ry(beta) Rx(gamma)`.
pub fn rotation_oracle(theta: f64, beta: f64, gamma: f64) -> Rotation3<f64> {
    Rotation3::from_axis_angle(&Vector3::z_axis(), theta)
        * Rotation3::from_axis_angle(&Vector3::y_axis(), beta)
        * Rotation3::from_axis_angle(&Vector3::x_axis(), gamma)
}

/// Geodesic angle via unit quaternions.
pub fn rotation_angle_oracle(a: &GraspPose, b: &GraspPose) -> f64 {
    let qa = UnitQuaternion::from_rotation_matrix(&rotation_oracle(a.theta, a.beta, a.gamma));
    let qb = UnitQuaternion::from_rotation_matrix(&rotation_oracle(b.theta, b.beta, b.gamma));
    qa.angle_to(&qb)
}

/// Greedy NMS by repeated extraction of the best remaining grasp.
/// Returns kept indices in keep order.
pub fn nms_brute(grasps: &[GraspPose], d_trans: f64, d_rot: f64) -> Vec<usize> {
    let mut alive: Vec<bool> = vec![true; grasps.len()];
    let mut kept = Vec::new();
    loop {
        let mut best: Option<usize> = None;
        for i in 0..grasps.len() {
            if alive[i] && best.is_none_or(|b| grasps[i].score > grasps[b].score) {
                best = Some(i);
            }
        }
        let Some(b) = best else { break };
        kept.push(b);
        for i in 0..grasps.len() {
            if alive[i]
                && (grasps[i].center - grasps[b].center).norm() <= d_trans
                && rotation_angle_oracle(&grasps[i], &grasps[b]) <= d_rot
            {
                alive[i] = false;
            }
        }
    }
    kept
}

/// Direction of the best-fit line through points, by power iteration on
/// the scatter matrix, plus the centroid.
pub fn line_fit_oracle(points: &[Vec3]) -> (Vec3, Vec3) {
    let c = points.iter().sum::<Vec3>() / points.len() as f64;
    let mut s = nalgebra::Matrix3::zeros();
    for p in points {
        let d = p - c;
        s += d * d.transpose();
    }
    let mut v = (points[points.len() - 1] - points[0]).normalize();
    for _ in 0..500 {
        v = (s * v).normalize();
    }
    (c, v)
}

/// Two-pass mean and population variance.
pub fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    (mean, xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n)
}

/// Strict local maxima over the 8-neighborhood.
pub fn local_maxima(data: &[f64], w: usize, h: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for y in 0..h {
        for x in 0..w {
            let v = data[y * w + x];
            if v <= 0.0 {
                continue;
            }
            let mut is_max = true;
            for dy in -1i64..=1 {
                for dx in -1i64..=1 {
                    let (xx, yy) = (x as i64 + dx, y as i64 + dy);
                    if (dx, dy) != (0, 0) && xx >= 0 && yy >= 0 && xx < w as i64 && yy < h as i64 && data[yy as usize * w + xx as usize] >= v {
                        is_max = false;
                    }
                }
            }
            if is_max {
                out.push((x, y));
            }
        }
    }
    out
}

/// Time a closure.
pub fn timed<T>(f: impl FnOnce() -> T) -> (T, f64) {
    let start = std::time::Instant::now();
    let out = f();
    (out, start.elapsed().as_secs_f64())
}

/// Seeded contact pair whose normals lean away from the contact line by up
/// to 60 degrees, and a friction coefficient in `[0.1, 1.2]`.
pub fn random_contact_pair(rng: &mut impl rand::Rng) -> (ContactPair, f64) {
    use regiongrasp::scene::Surface;
    let p1 = Vec3::new(rng.random_range(-0.05..0.05), rng.random_range(-0.05..0.05), rng.random_range(0.4..0.6));
    let dir = loop {
        let d = Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        if d.norm() > 0.1 && d.norm() <= 1.0 {
            break d.normalize();
        }
    };
    let p2 = p1 + dir * rng.random_range(0.01..0.08);
    let mut tilt = |axis: Vec3| {
        let helper = if axis.x.abs() < 0.9 { Vec3::x() } else { Vec3::y() };
        let u = axis.cross(&helper).normalize();
        let v = axis.cross(&u);
        let a: f64 = rng.random_range(0.0..60f64.to_radians());
        let phi: f64 = rng.random_range(0.0..2.0 * PI);
        axis * a.cos() + (u * phi.cos() + v * phi.sin()) * a.sin()
    };
    let n1 = tilt(dir);
    let n2 = tilt(-dir);
    let mu = rng.random_range(0.1..1.2);
    (ContactPair { p1, p2, n1, n2, owner1: Surface::Plane, owner2: Surface::Plane }, mu)
}

/// Seeded grasps in a small volume with in-range angles and random scores.
pub fn random_grasps(rng: &mut impl rand::Rng, n: usize) -> Vec<GraspPose> {
    use std::f64::consts::FRAC_PI_2;
    (0..n)
        .map(|_| GraspPose {
            center: Vec3::new(rng.random_range(-0.06..0.06), rng.random_range(-0.06..0.06), rng.random_range(0.45..0.55)),
            theta: rng.random_range(-FRAC_PI_2..FRAC_PI_2),
            beta: rng.random_range(-FRAC_PI_2..FRAC_PI_2),
            gamma: rng.random_range(-FRAC_PI_2..FRAC_PI_2),
            width: rng.random_range(0.01..0.085),
            score: rng.random_range(0.0..1.0),
        })
        .collect()
}

/// Möller-Trumbore segment/triangle test, written independently of the
/// crate's ray code.
pub fn segment_hits_triangle(p: &Vec3, q: &Vec3, a: &Vec3, b: &Vec3, c: &Vec3) -> bool {
    let d = q - p;
    let e1 = b - a;
    let e2 = c - a;
    let h = d.cross(&e2);
    let det = e1.dot(&h);
    if det.abs() < 1e-15 {
        return false;
    }
    let s = p - a;
    let u = s.dot(&h) / det;
    let qv = s.cross(&e1);
    let v = d.dot(&qv) / det;
    let t = e2.dot(&qv) / det;
    u > 1e-9 && v > 1e-9 && u + v < 1.0 - 1e-9 && t > 1e-9 && t < 1.0 - 1e-9
}

/// Strictly inside a convex closed mesh: below every face plane.
pub fn inside_convex(p: &Vec3, tris: &[[Vec3; 3]]) -> bool {
    tris.iter().all(|[a, b, c]| (b - a).cross(&(c - a)).normalize().dot(&(p - a)) < -1e-9)
}

/// Separating-axis test between a triangle and an axis-aligned box.
pub fn triangle_overlaps_box(tri: &[Vec3; 3], min: &Vec3, max: &Vec3) -> bool {
    let c = (min + max) * 0.5;
    let h = (max - min) * 0.5;
    let v: Vec<Vec3> = tri.iter().map(|p| p - c).collect();
    let edges = [v[1] - v[0], v[2] - v[1], v[0] - v[2]];
    let mut axes = vec![Vec3::x(), Vec3::y(), Vec3::z(), edges[0].cross(&edges[1])];
    for e in &edges {
        for a in [Vec3::x(), Vec3::y(), Vec3::z()] {
            axes.push(e.cross(&a));
        }
    }
    axes.iter().filter(|a| a.norm() > 1e-14).all(|a| {
        let proj: Vec<f64> = v.iter().map(|p| p.dot(a)).collect();
        let lo = proj.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = proj.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let r = h.x * a.x.abs() + h.y * a.y.abs() + h.z * a.z.abs();
        hi >= -r && lo <= r
    })
}
