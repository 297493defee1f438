//! Room floor area via a 2D alpha shape.
//!
//! The aggregated cloud is projected onto the xy-plane, Delaunay
//! triangulated, and triangles whose circumradius is below `alpha` are kept;
//! the area is the sum of their areas. Small `alpha` follows concave room
//! outlines (an L-shaped room is not bridged across the notch); large
//! `alpha` degenerates to the convex hull area.

use delaunator::{triangulate, Point};

use super::{SceneError, Vec3};

/// Computes the alpha-shape area of the xy-projection of `points`.
///
/// `alpha` is the circumradius cutoff in meters and must be positive.
/// Needs at least 3 points; a fully collinear projection has zero area.
/// The result ignores z entirely and is invariant under xy rotation.
pub fn compute_room_area(points: &[Vec3], alpha: f64) -> Result<f64, SceneError> {
    if !(alpha.is_finite() && alpha > 0.0) {
        return Err(SceneError::Degenerate(format!(
            "alpha must be positive, got {alpha}"
        )));
    }
    if points.len() < 3 {
        return Err(SceneError::TooFewPoints {
            needed: 3,
            got: points.len(),
        });
    }
    let flat: Vec<Point> = points
        .iter()
        .map(|p| Point { x: p.x, y: p.y })
        .collect();
    let triangulation = triangulate(&flat);
    let mut area = 0.0;
    for tri in triangulation.triangles.chunks_exact(3) {
        let a = &flat[tri[0]];
        let b = &flat[tri[1]];
        let c = &flat[tri[2]];
        let (abx, aby) = (b.x - a.x, b.y - a.y);
        let (acx, acy) = (c.x - a.x, c.y - a.y);
        let cross = (abx * acy - aby * acx).abs();
        if cross < 1e-30 {
            continue; // degenerate sliver, infinite circumradius
        }
        let ab = (abx * abx + aby * aby).sqrt();
        let bc = ((c.x - b.x).powi(2) + (c.y - b.y).powi(2)).sqrt();
        let ca = (acx * acx + acy * acy).sqrt();
        let circumradius = ab * bc * ca / (2.0 * cross);
        if circumradius < alpha {
            area += cross / 2.0;
        }
    }
    Ok(area)
}
