//! Morton (Z-order) serialization of 3D points.
//!
//! Points are quantized to a voxel grid (21 bits per axis, so coordinates
//! span up to 2²¹ voxels) and their grid coordinates are bit-interleaved
//! into a single 63-bit code. Sorting by code linearizes the cloud along a
//! space-filling curve in which nearby points tend to stay nearby, which is
//! what the serialized attention stages group on.

use crate::scene::Vec3;

use super::PatchError;

/// Bits available per axis; codes use `3 * MORTON_BITS = 63` bits.
pub const MORTON_BITS: u32 = 21;

const AXIS_MASK: u64 = (1 << MORTON_BITS) - 1;

/// Spreads the low 21 bits of `v` so that bit `i` moves to bit `3i`.
fn spread(v: u64) -> u64 {
    let mut x = v & 0x1fffff;
    x = (x | (x << 32)) & 0x1f00000000ffff;
    x = (x | (x << 16)) & 0x1f0000ff0000ff;
    x = (x | (x << 8)) & 0x100f00f00f00f00f;
    x = (x | (x << 4)) & 0x10c30c30c30c30c3;
    x = (x | (x << 2)) & 0x1249249249249249;
    x
}

/// Inverse of [`spread`]: collects bits `0, 3, 6, …` into the low 21 bits.
fn compact(v: u64) -> u64 {
    let mut x = v & 0x1249249249249249;
    x = (x | (x >> 2)) & 0x10c30c30c30c30c3;
    x = (x | (x >> 4)) & 0x100f00f00f00f00f;
    x = (x | (x >> 8)) & 0x1f0000ff0000ff;
    x = (x | (x >> 16)) & 0x1f00000000ffff;
    x = (x | (x >> 32)) & 0x1fffff;
    x
}

/// Interleaves three 21-bit grid coordinates; x occupies bits `3i`,
/// y bits `3i + 1`, z bits `3i + 2`.
pub fn morton_encode(q: [u64; 3]) -> Result<u64, PatchError> {
    for (axis, &v) in q.iter().enumerate() {
        if v > AXIS_MASK {
            return Err(PatchError::QuantizeRange { axis, q: v });
        }
    }
    Ok(spread(q[0]) | (spread(q[1]) << 1) | (spread(q[2]) << 2))
}

/// Inverse of [`morton_encode`] for codes below `2^63`.
pub fn morton_decode(code: u64) -> [u64; 3] {
    [compact(code), compact(code >> 1), compact(code >> 2)]
}

/// Quantizes `p` against `min` on a grid of `voxel`-sized cells.
pub fn quantize(p: &Vec3, min: &Vec3, voxel: f64) -> Result<[u64; 3], PatchError> {
    debug_assert!(voxel > 0.0);
    let mut q = [0u64; 3];
    for axis in 0..3 {
        let f = ((p[axis] - min[axis]) / voxel).floor();
        if f < 0.0 || f > AXIS_MASK as f64 {
            return Err(PatchError::QuantizeRange {
                axis,
                q: if f < 0.0 { u64::MAX } else { f as u64 },
            });
        }
        q[axis] = f as u64;
    }
    Ok(q)
}

/// Morton code of `p` quantized against the cloud minimum `min`.
pub fn morton_code(p: &Vec3, min: &Vec3, voxel: f64) -> Result<u64, PatchError> {
    morton_encode(quantize(p, min, voxel)?)
}

/// Componentwise minimum of a non-empty cloud.
pub fn cloud_min(points: &[Vec3]) -> Result<Vec3, PatchError> {
    let first = *points.first().ok_or(PatchError::EmptyPoints)?;
    Ok(points.iter().fold(first, |acc, p| acc.inf(p)))
}

/// Indices of `points` sorted by Morton code at the given voxel size, ties
/// broken by original index (a stable order).
///
/// When every code is distinct the returned sequence of *points* does not
/// depend on the input order, which is what makes the serialized encoder
/// exactly permutation invariant on collision-free clouds.
pub fn morton_order(points: &[Vec3], voxel: f64) -> Result<Vec<usize>, PatchError> {
    if !(voxel.is_finite() && voxel > 0.0) {
        return Err(PatchError::BadConfig(format!(
            "voxel size must be positive, got {voxel}"
        )));
    }
    let min = cloud_min(points)?;
    let mut keyed: Vec<(u64, usize)> = Vec::with_capacity(points.len());
    for (i, p) in points.iter().enumerate() {
        keyed.push((morton_code(p, &min, voxel)?, i));
    }
    keyed.sort();
    Ok(keyed.into_iter().map(|(_, i)| i).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Bit-by-bit reference for the magic-mask interleave.
    fn naive_encode(q: [u64; 3]) -> u64 {
        let mut code = 0u64;
        for bit in 0..MORTON_BITS {
            for (axis, &v) in q.iter().enumerate() {
                code |= ((v >> bit) & 1) << (3 * bit + axis as u32);
            }
        }
        code
    }

    #[test]
    fn unit_cube_corner_codes() {
        assert_eq!(morton_encode([0, 0, 0]).unwrap(), 0);
        assert_eq!(morton_encode([1, 0, 0]).unwrap(), 1);
        assert_eq!(morton_encode([0, 1, 0]).unwrap(), 2);
        assert_eq!(morton_encode([0, 0, 1]).unwrap(), 4);
        assert_eq!(morton_encode([1, 1, 1]).unwrap(), 7);
    }

    #[test]
    fn magic_masks_match_bitwise_reference() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..500 {
            let q = [
                rng.random_range(0..1 << MORTON_BITS),
                rng.random_range(0..1 << MORTON_BITS),
                rng.random_range(0..1 << MORTON_BITS),
            ];
            assert_eq!(morton_encode(q).unwrap(), naive_encode(q), "{q:?}");
        }
    }

    #[test]
    fn encode_decode_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..500 {
            let q = [
                rng.random_range(0..1 << MORTON_BITS),
                rng.random_range(0..1 << MORTON_BITS),
                rng.random_range(0..1 << MORTON_BITS),
            ];
            assert_eq!(morton_decode(morton_encode(q).unwrap()), q);
        }
        let max = (1 << MORTON_BITS) - 1;
        assert_eq!(morton_decode(morton_encode([max; 3]).unwrap()), [max; 3]);
    }

    #[test]
    fn out_of_range_coordinates_are_rejected() {
        let err = morton_encode([1 << MORTON_BITS, 0, 0]).unwrap_err();
        assert!(matches!(err, PatchError::QuantizeRange { axis: 0, .. }));
        assert!(morton_encode([0, 0, (1 << MORTON_BITS) - 1]).is_ok());
    }

    #[test]
    fn quantize_uses_floor_against_the_minimum() {
        let min = Vec3::new(-1.0, 0.0, 0.0);
        assert_eq!(
            quantize(&Vec3::new(-1.0, 0.0, 0.0), &min, 0.5).unwrap(),
            [0, 0, 0]
        );
        assert_eq!(
            quantize(&Vec3::new(-0.75, 0.99, 0.0), &min, 0.5).unwrap(),
            [0, 1, 0]
        );
        assert_eq!(
            quantize(&Vec3::new(0.0, 1.0, 0.25), &min, 0.5).unwrap(),
            [2, 2, 0]
        );
    }

    #[test]
    fn unit_voxel_ordering_example() {
        // Codes 0, 7, 4 sort the three points as indices [0, 2, 1].
        let points = vec![
            Vec3::new(0.0, 0.0, 0.0),
            Vec3::new(1.0, 1.0, 1.0),
            Vec3::new(0.0, 0.0, 1.0),
        ];
        assert_eq!(morton_order(&points, 1.0).unwrap(), vec![0, 2, 1]);
    }

    #[test]
    fn ties_keep_input_order() {
        // Two coincident points share a code; stable order keeps 1 before 2.
        let points = vec![
            Vec3::new(5.0, 5.0, 5.0),
            Vec3::new(0.1, 0.1, 0.1),
            Vec3::new(0.1, 0.1, 0.1),
        ];
        assert_eq!(morton_order(&points, 1.0).unwrap(), vec![1, 2, 0]);
    }

    #[test]
    fn order_is_a_permutation() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let points: Vec<Vec3> = (0..200)
            .map(|_| {
                Vec3::new(
                    rng.random_range(-4.0..4.0),
                    rng.random_range(-4.0..4.0),
                    rng.random_range(0.0..3.0),
                )
            })
            .collect();
        let mut order = morton_order(&points, 0.05).unwrap();
        order.sort_unstable();
        assert_eq!(order, (0..200).collect::<Vec<_>>());
    }

    #[test]
    fn empty_cloud_and_bad_voxel_are_rejected() {
        assert!(matches!(
            morton_order(&[], 1.0),
            Err(PatchError::EmptyPoints)
        ));
        assert!(matches!(
            morton_order(&[Vec3::zeros()], 0.0),
            Err(PatchError::BadConfig(_))
        ));
    }

    #[test]
    fn far_apart_points_exceed_the_grid() {
        let points = vec![Vec3::zeros(), Vec3::new(3e6, 0.0, 0.0)];
        assert!(matches!(
            morton_order(&points, 1.0),
            Err(PatchError::QuantizeRange { axis: 0, .. })
        ));
    }
}
