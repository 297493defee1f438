//! Gravity and wall alignment from an aggregated point cloud.
//!
//! [`estimate_axis_align`] recovers the rigid transform that puts a scene
//! into the canonical frame: floor on `z = 0` with `+z` up, the dominant
//! horizontal structure direction along `+x` (with a deterministic sign
//! rule), and the horizontal centroid at the origin.

use nalgebra::{Matrix3, Rotation3, SymmetricEigen, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{RigidTransform, SceneError, Vec3};

/// RANSAC iterations for the floor plane fit.
const RANSAC_ITERS: usize = 500;
/// RANSAC inlier threshold: distance to plane in meters.
const INLIER_THRESH_M: f64 = 0.02;
/// Fraction of the vertical extent (after pre-rotation) considered floor
/// candidates.
const FLOOR_SLAB_FRACTION: f64 = 0.3;
/// Fixed seed: alignment is a pure function of its input.
const RANSAC_SEED: u64 = 0x6F1A_5EED;

fn centroid(points: &[Vec3]) -> Vec3 {
    points.iter().sum::<Vec3>() / points.len() as f64
}

fn covariance(points: &[Vec3], center: &Vec3) -> Matrix3<f64> {
    let mut cov = Matrix3::zeros();
    for p in points {
        let d = p - center;
        cov += d * d.transpose();
    }
    cov / points.len() as f64
}

/// Eigenvalues ascending with matching eigenvectors.
fn sorted_eigen(cov: &Matrix3<f64>) -> [(f64, Vec3); 3] {
    let eig = SymmetricEigen::new(*cov);
    let mut idx = [0usize, 1, 2];
    idx.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    idx.map(|i| (eig.eigenvalues[i], Vec3::from(eig.eigenvectors.column(i))))
}

/// Flips `v` so its z-component is positive, breaking ties on y then x.
fn orient_up(mut v: Vec3) -> Vec3 {
    let flip = if v.z.abs() > 1e-12 {
        v.z < 0.0
    } else if v.y.abs() > 1e-12 {
        v.y < 0.0
    } else {
        v.x < 0.0
    };
    if flip {
        v = -v;
    }
    v
}

/// Minimal rotation taking unit vector `from` onto unit vector `to`.
fn rotation_taking(from: &Vec3, to: &Vec3) -> Matrix3<f64> {
    match Rotation3::rotation_between(from, to) {
        Some(r) => *r.matrix(),
        // Antiparallel: rotate half a turn about any perpendicular axis.
        None => Rotation3::from_axis_angle(&Vector3::x_axis(), std::f64::consts::PI).into_inner(),
    }
}

struct PlaneFit {
    point: Vec3,
    normal: Vec3,
}

/// Seeded RANSAC plane fit with a least-squares refit over the inliers.
fn ransac_plane(points: &[Vec3]) -> Result<PlaneFit, SceneError> {
    let mut rng = ChaCha8Rng::seed_from_u64(RANSAC_SEED);
    let mut best: Option<(usize, Vec3, Vec3)> = None; // (inliers, point, normal)
    for _ in 0..RANSAC_ITERS {
        let pick = rand::seq::index::sample(&mut rng, points.len(), 3);
        let (a, b, c) = (points[pick.index(0)], points[pick.index(1)], points[pick.index(2)]);
        let n = (b - a).cross(&(c - a));
        if n.norm() < 1e-12 {
            continue;
        }
        let n = n.normalize();
        let inliers = points
            .iter()
            .filter(|p| (n.dot(&(*p - a))).abs() < INLIER_THRESH_M)
            .count();
        if best.as_ref().is_none_or(|(count, _, _)| inliers > *count) {
            best = Some((inliers, a, n));
        }
    }
    let (_, anchor, normal) = best.ok_or_else(|| {
        SceneError::Degenerate("floor candidates are collinear; cannot fit a plane".into())
    })?;
    let inliers: Vec<Vec3> = points
        .iter()
        .filter(|p| (normal.dot(&(*p - anchor))).abs() < INLIER_THRESH_M)
        .copied()
        .collect();
    let center = centroid(&inliers);
    let eigen = sorted_eigen(&covariance(&inliers, &center));
    // Keep the sampled normal if the inliers do not span a stable plane.
    let refit_ok = eigen[1].0 > 1e-12 * eigen[2].0.max(1e-12);
    let normal = if refit_ok { eigen[0].1 } else { normal };
    Ok(PlaneFit {
        point: center,
        normal: normal.normalize(),
    })
}

/// Dominant horizontal direction (largest-eigenvalue eigenvector of the xy
/// covariance), sign-fixed: the larger-magnitude component is made positive.
fn dominant_xy(points: &[Vec3], center: &Vec3) -> Vec3 {
    let (mut xx, mut xy, mut yy) = (0.0, 0.0, 0.0);
    for p in points {
        let dx = p.x - center.x;
        let dy = p.y - center.y;
        xx += dx * dx;
        xy += dx * dy;
        yy += dy * dy;
    }
    let half_tr = (xx + yy) / 2.0;
    let det = xx * yy - xy * xy;
    let lambda = half_tr + (half_tr * half_tr - det).max(0.0).sqrt();
    let mut v = if xy.abs() > 1e-12 {
        Vec3::new(lambda - yy, xy, 0.0)
    } else if xx >= yy {
        Vec3::new(1.0, 0.0, 0.0)
    } else {
        Vec3::new(0.0, 1.0, 0.0)
    };
    v = v.normalize();
    let flip = if v.x.abs() >= v.y.abs() {
        v.x < 0.0
    } else {
        v.y < 0.0
    };
    if flip {
        -v
    } else {
        v
    }
}

/// Estimates the transform into the canonical axis-aligned frame.
///
/// The returned transform maps input points `x` to `R x + t` such that the
/// detected floor lies on `z = 0` with the scene above it, the dominant
/// horizontal direction runs along `+x`, and the horizontal centroid sits at
/// the origin. The estimate is deterministic (fixed internal RANSAC seed)
/// and idempotent: re-estimating on an already aligned cloud yields the
/// identity within numerical tolerance.
pub fn estimate_axis_align(points: &[Vec3]) -> Result<RigidTransform, SceneError> {
    if points.len() < 3 {
        return Err(SceneError::TooFewPoints {
            needed: 3,
            got: points.len(),
        });
    }
    let center = centroid(points);
    let eigen = sorted_eigen(&covariance(points, &center));
    if eigen[1].0 <= 1e-12 * eigen[2].0.max(1e-12) {
        return Err(SceneError::Degenerate(
            "points are collinear; axis alignment is underdetermined".into(),
        ));
    }

    // Pre-rotation: thinnest principal direction becomes vertical.
    let up0 = orient_up(eigen[0].1);
    let r0 = rotation_taking(&up0, &Vector3::z());
    let pts0: Vec<Vec3> = points.iter().map(|p| r0 * p).collect();

    // Floor candidates: lowest slab of the vertical extent.
    let zmin = pts0.iter().map(|p| p.z).fold(f64::INFINITY, f64::min);
    let zmax = pts0.iter().map(|p| p.z).fold(f64::NEG_INFINITY, f64::max);
    let cutoff = zmin + FLOOR_SLAB_FRACTION * (zmax - zmin);
    let slab: Vec<Vec3> = pts0.iter().filter(|p| p.z <= cutoff).copied().collect();
    let slab = if slab.len() >= 3 { slab } else { pts0.clone() };

    let plane = ransac_plane(&slab)?;
    // Point the floor normal toward the side holding the bulk of the scene.
    let mean0 = centroid(&pts0);
    let side = plane.normal.dot(&(mean0 - plane.point));
    let normal = if side < 0.0 {
        -plane.normal
    } else if side > 0.0 {
        plane.normal
    } else {
        orient_up(plane.normal)
    };
    let r1 = rotation_taking(&normal, &Vector3::z());
    let pts1: Vec<Vec3> = pts0.iter().map(|p| r1 * p).collect();
    let floor_z = (r1 * plane.point).z;

    // Wall alignment: dominant horizontal direction to +x.
    let center1 = centroid(&pts1);
    let v = dominant_xy(&pts1, &center1);
    let phi = v.y.atan2(v.x);
    let r2 = Rotation3::from_axis_angle(&Vector3::z_axis(), -phi).into_inner();

    let rotation = r2 * r1 * r0;
    let rotated_center = r2 * center1;
    let translation = Vec3::new(-rotated_center.x, -rotated_center.y, -floor_z);
    RigidTransform::new(rotation, translation)
}
