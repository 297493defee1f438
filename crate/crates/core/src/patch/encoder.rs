//! Serialized-attention point encoder.
//!
//! The encoder turns a colored point cloud into one geometric feature per
//! point. It runs in two stages. Stage 0 embeds each point's position and
//! color, Morton-sorts the cloud at a fine voxel size, and applies
//! single-head scaled-dot attention with a residual connection inside
//! consecutive groups of the sorted sequence. The cloud is then pooled
//! onto a coarse voxel grid — each cell keeps the componentwise maximum of
//! its members' projected features and the mean of their positions — and
//! stage 1 repeats serialized attention on the pooled tokens. Finally each
//! original point's output is the concatenation of its fine feature and
//! its cell's coarse feature, so the full output width is the sum of the
//! two stage widths.
//!
//! All grouping decisions derive from Morton order with ties broken by
//! index, and every reduction iterates in that canonical order. As a
//! result the encoder is *exactly* permutation invariant whenever the
//! fine-stage Morton codes are pairwise distinct; coincident codes fall
//! back to input order and may straddle group boundaries differently.

use std::collections::BTreeMap;

use crate::scene::Vec3;

use super::dual_path::{dot, softmax};
use super::morton::{cloud_min, morton_order, quantize};
use super::weights::{Tensor, WeightStore};
use super::{EncoderConfig, PatchError};

/// Pooling result: per-cell features, per-cell positions, and the cell
/// index every input point was pooled into.
pub type PooledCells = (Vec<Vec<f64>>, Vec<Vec3>, Vec<usize>);

/// Scaled-dot single-head attention with residual, applied to consecutive
/// `group`-sized chunks of `order`. Features are updated in place.
pub(crate) fn attention_pass(
    features: &mut [Vec<f64>],
    order: &[usize],
    group: usize,
    wq: &Tensor,
    wk: &Tensor,
    wv: &Tensor,
    head_dim: usize,
) -> Result<(), PatchError> {
    let scale = 1.0 / (head_dim as f64).sqrt();
    for chunk in order.chunks(group) {
        let m = chunk.len();
        let mut q = Vec::with_capacity(m);
        let mut k = Vec::with_capacity(m);
        let mut v = Vec::with_capacity(m);
        for &i in chunk {
            q.push(wq.matvec(&features[i])?);
            k.push(wk.matvec(&features[i])?);
            v.push(wv.matvec(&features[i])?);
        }
        let mut updates = Vec::with_capacity(m);
        for qa in &q {
            let logits: Vec<f64> = k.iter().map(|kb| dot(qa, kb) * scale).collect();
            let alpha = softmax(&logits);
            let mut out = vec![0.0f64; v[0].len()];
            for (a, vb) in alpha.iter().zip(&v) {
                for (slot, value) in out.iter_mut().zip(vb) {
                    *slot += a * value;
                }
            }
            updates.push(out);
        }
        for (&i, update) in chunk.iter().zip(&updates) {
            for (slot, u) in features[i].iter_mut().zip(update) {
                *slot += u;
            }
        }
    }
    Ok(())
}

/// Pools per-point features onto a voxel grid.
///
/// Iterating points in `order` (normally Morton order, which makes the
/// reduction canonical), each occupied `voxel`-sized cell receives the
/// componentwise **maximum** of its members' features projected through
/// `u`, and the **mean** of their positions. Returns the pooled features,
/// pooled positions, and for every input point the index of its cell.
pub fn pool_cells(
    points: &[Vec3],
    features: &[Vec<f64>],
    voxel: f64,
    order: &[usize],
    u: &Tensor,
) -> Result<PooledCells, PatchError> {
    if points.is_empty() {
        return Err(PatchError::EmptyPoints);
    }
    if features.len() != points.len() || order.len() != points.len() {
        return Err(PatchError::DimensionMismatch {
            expected: points.len(),
            got: features.len().min(order.len()),
        });
    }
    let min = cloud_min(points)?;
    let mut cells: BTreeMap<[u64; 3], Vec<usize>> = BTreeMap::new();
    for &i in order {
        cells.entry(quantize(&points[i], &min, voxel)?).or_default().push(i);
    }
    let width_out = match u.dims() {
        [_, w] => *w,
        _ => {
            return Err(PatchError::BadConfig(format!(
                "pooling matrix must be rank 2, got {:?}",
                u.dims()
            )))
        }
    };
    let mut pooled_features = Vec::with_capacity(cells.len());
    let mut pooled_positions = Vec::with_capacity(cells.len());
    let mut parent = vec![0usize; points.len()];
    for (cell_index, members) in cells.values().enumerate() {
        let mut pooled = vec![f64::NEG_INFINITY; width_out];
        let mut sum = Vec3::zeros();
        for &j in members {
            let projected = u.matvec(&features[j])?;
            for (slot, value) in pooled.iter_mut().zip(projected) {
                *slot = slot.max(value);
            }
            sum += points[j];
            parent[j] = cell_index;
        }
        pooled_features.push(pooled);
        pooled_positions.push(sum / members.len() as f64);
    }
    Ok((pooled_features, pooled_positions, parent))
}

/// Encodes a colored cloud into one `widths[0] + widths[1]`-dimensional
/// feature per point. Color channels are expected in `[0, 1]`.
pub fn encode_points(
    points: &[Vec3],
    colors: &[[f64; 3]],
    store: &WeightStore,
    cfg: &EncoderConfig,
) -> Result<Vec<Vec<f64>>, PatchError> {
    cfg.validate()?;
    if points.is_empty() {
        return Err(PatchError::EmptyPoints);
    }
    if colors.len() != points.len() {
        return Err(PatchError::DimensionMismatch {
            expected: points.len(),
            got: colors.len(),
        });
    }
    let embed = store.get("embed.w")?;
    let mut fine: Vec<Vec<f64>> = Vec::with_capacity(points.len());
    for (p, c) in points.iter().zip(colors) {
        fine.push(embed.matvec(&[p.x, p.y, p.z, c[0], c[1], c[2]])?);
    }

    let order0 = morton_order(points, cfg.voxels[0])?;
    attention_pass(
        &mut fine,
        &order0,
        cfg.group_size,
        store.get("stage0.attn.wq")?,
        store.get("stage0.attn.wk")?,
        store.get("stage0.attn.wv")?,
        cfg.head_dim,
    )?;

    let (mut coarse, coarse_pos, parent) = pool_cells(
        points,
        &fine,
        cfg.voxels[1],
        &order0,
        store.get("pool0.u")?,
    )?;

    let order1 = morton_order(&coarse_pos, cfg.voxels[1])?;
    attention_pass(
        &mut coarse,
        &order1,
        cfg.group_size,
        store.get("stage1.attn.wq")?,
        store.get("stage1.attn.wk")?,
        store.get("stage1.attn.wv")?,
        cfg.head_dim,
    )?;

    Ok(fine
        .into_iter()
        .enumerate()
        .map(|(i, mut f)| {
            f.extend_from_slice(&coarse[parent[i]]);
            f
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn store_and_config() -> (WeightStore, EncoderConfig) {
        let cfg = EncoderConfig {
            seed: 31,
            ..EncoderConfig::default()
        };
        (WeightStore::seeded(&cfg).unwrap(), cfg)
    }

    /// Random cloud whose fine-voxel Morton codes are verified distinct;
    /// colliding draws regenerate deterministically from the next seed.
    fn distinct_cloud(n: usize, seed: u64, voxel: f64) -> (Vec<Vec3>, Vec<[f64; 3]>) {
        // n³ cells for n points keeps per-attempt collisions rare.
        let span = n as f64 * voxel;
        for attempt in 0..64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(attempt));
            let points: Vec<Vec3> = (0..n)
                .map(|_| {
                    Vec3::new(
                        rng.random_range(0.0..span),
                        rng.random_range(0.0..span),
                        rng.random_range(0.0..span),
                    )
                })
                .collect();
            let min = cloud_min(&points).unwrap();
            let mut codes: Vec<u64> = points
                .iter()
                .map(|p| super::super::morton::morton_code(p, &min, voxel).unwrap())
                .collect();
            codes.sort_unstable();
            codes.dedup();
            if codes.len() == n {
                let colors = (0..n)
                    .map(|_| {
                        [
                            rng.random_range(0.0..1.0),
                            rng.random_range(0.0..1.0),
                            rng.random_range(0.0..1.0),
                        ]
                    })
                    .collect();
                return (points, colors);
            }
        }
        panic!("no collision-free cloud after 64 attempts");
    }

    #[test]
    fn pooling_takes_projected_max_and_mean_position() {
        // Two points in one cell, identity projection: feature max is
        // componentwise, position is the mean.
        let points = vec![Vec3::new(0.1, 0.0, 0.0), Vec3::new(0.3, 0.0, 0.0)];
        let features = vec![vec![1.0, 5.0], vec![4.0, 2.0]];
        let identity = Tensor::new(vec![2, 2], vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let (pf, pp, parent) =
            pool_cells(&points, &features, 1.0, &[0, 1], &identity).unwrap();
        assert_eq!(pf, vec![vec![4.0, 5.0]]);
        assert_eq!(pp.len(), 1);
        assert_relative_eq!(pp[0].x, 0.2, epsilon = 1e-15);
        assert_eq!(parent, vec![0, 0]);

        // The projection happens before the max: a swap matrix swaps the
        // coordinates first, changing which values win.
        let swap = Tensor::new(vec![2, 2], vec![0.0, 1.0, 1.0, 0.0]).unwrap();
        let (pf, _, _) = pool_cells(&points, &features, 1.0, &[0, 1], &swap).unwrap();
        assert_eq!(pf, vec![vec![5.0, 4.0]]);
    }

    #[test]
    fn pooling_separates_distant_cells() {
        let points = vec![
            Vec3::new(0.1, 0.0, 0.0),
            Vec3::new(0.2, 0.0, 0.0),
            Vec3::new(5.0, 0.0, 0.0),
        ];
        let features = vec![vec![1.0], vec![2.0], vec![7.0]];
        let id1 = Tensor::new(vec![1, 1], vec![1.0]).unwrap();
        let (pf, pp, parent) =
            pool_cells(&points, &features, 1.0, &[0, 1, 2], &id1).unwrap();
        assert_eq!(pf, vec![vec![2.0], vec![7.0]]);
        assert_eq!(parent, vec![0, 0, 1]);
        assert_relative_eq!(pp[0].x, 0.15000000000000002, epsilon = 1e-15);
        assert_relative_eq!(pp[1].x, 5.0);
    }

    #[test]
    fn single_point_cloud_matches_the_closed_form() {
        // With one point every softmax is the scalar 1, so each stage adds
        // its value projection: fine = e + e·Wv0, coarse = u + u·Wv1 with
        // u = (fine)·U, and the output is their concatenation.
        let (store, cfg) = store_and_config();
        let p = Vec3::new(0.4, -0.2, 1.0);
        let color = [0.25, 0.5, 0.75];
        let out = encode_points(&[p], &[color], &store, &cfg).unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].len(), cfg.widths[0] + cfg.widths[1]);

        let e = store
            .get("embed.w")
            .unwrap()
            .matvec(&[p.x, p.y, p.z, color[0], color[1], color[2]])
            .unwrap();
        let ev = store.get("stage0.attn.wv").unwrap().matvec(&e).unwrap();
        let fine: Vec<f64> = e.iter().zip(&ev).map(|(a, b)| a + b).collect();
        let u = store.get("pool0.u").unwrap().matvec(&fine).unwrap();
        let uv = store.get("stage1.attn.wv").unwrap().matvec(&u).unwrap();
        let coarse: Vec<f64> = u.iter().zip(&uv).map(|(a, b)| a + b).collect();
        let expected: Vec<f64> = fine.into_iter().chain(coarse).collect();
        for (got, want) in out[0].iter().zip(&expected) {
            assert_relative_eq!(got, want, epsilon = 1e-12);
        }
    }

    #[test]
    fn same_coarse_cell_shares_the_coarse_half() {
        let (store, cfg) = store_and_config();
        // Two points 2 cm apart share the 0.2 m cell; one 10 m away does not.
        let points = vec![
            Vec3::new(0.01, 0.01, 0.01),
            Vec3::new(0.03, 0.01, 0.01),
            Vec3::new(10.0, 0.01, 0.01),
        ];
        let colors = vec![[0.2; 3], [0.8; 3], [0.5; 3]];
        let out = encode_points(&points, &colors, &store, &cfg).unwrap();
        let w0 = cfg.widths[0];
        assert_eq!(out[0][w0..], out[1][w0..]);
        assert_ne!(out[0][w0..], out[2][w0..]);
        // Fine halves still differ (different colors).
        assert_ne!(out[0][..w0], out[1][..w0]);
    }

    #[test]
    fn permutation_invariance_is_exact_on_collision_free_clouds() {
        let (store, cfg) = store_and_config();
        let (points, colors) = distinct_cloud(120, 77, cfg.voxels[0]);
        let baseline = encode_points(&points, &colors, &store, &cfg).unwrap();

        let mut perm: Vec<usize> = (0..points.len()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        use rand::seq::SliceRandom;
        perm.shuffle(&mut rng);
        let shuffled_points: Vec<Vec3> = perm.iter().map(|&i| points[i]).collect();
        let shuffled_colors: Vec<[f64; 3]> = perm.iter().map(|&i| colors[i]).collect();
        let shuffled = encode_points(&shuffled_points, &shuffled_colors, &store, &cfg).unwrap();

        for (slot, &src) in perm.iter().enumerate() {
            assert_eq!(shuffled[slot], baseline[src], "point {src} moved");
        }
    }

    #[test]
    fn coincident_codes_can_break_invariance_at_group_boundaries() {
        let (store, cfg) = store_and_config();
        // 17 points: 16 spaced 1 m apart along x (codes strictly
        // increasing), plus one exactly coincident with the last. The
        // tie-break decides which of the coincident pair shares a group
        // with the other sixteen.
        let mut points: Vec<Vec3> = (0..16)
            .map(|i| Vec3::new(i as f64, 0.0, 0.0))
            .collect();
        points.push(points[15]);
        let mut colors = vec![[0.5; 3]; 16];
        colors[15] = [0.1, 0.2, 0.3];
        colors.push([0.9, 0.8, 0.7]);

        let baseline = encode_points(&points, &colors, &store, &cfg).unwrap();

        let mut swapped_points = points.clone();
        swapped_points.swap(15, 16);
        let mut swapped_colors = colors.clone();
        swapped_colors.swap(15, 16);
        let swapped = encode_points(&swapped_points, &swapped_colors, &store, &cfg).unwrap();

        // The point that carried color [0.1, 0.2, 0.3] sat at index 15 and
        // now sits at index 16; its attention group changed.
        let diff: f64 = baseline[15]
            .iter()
            .zip(&swapped[16])
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(diff > 0.0, "group boundary should be observable");
    }

    #[test]
    fn group_size_changes_the_result() {
        let (store, cfg) = store_and_config();
        let (points, colors) = distinct_cloud(64, 3, cfg.voxels[0]);
        let grouped = encode_points(&points, &colors, &store, &cfg).unwrap();
        let wide = encode_points(
            &points,
            &colors,
            &store,
            &EncoderConfig {
                group_size: 64,
                ..cfg.clone()
            },
        )
        .unwrap();
        assert_ne!(grouped, wide);
    }

    #[test]
    fn uniform_attention_when_keys_are_zero() {
        // Zero wk makes every logit zero, so attention averages the values:
        // out_j = f_j + mean(v). Verified against a direct computation.
        let (store, cfg) = store_and_config();
        let n = 8;
        let (points, colors) = distinct_cloud(n, 15, cfg.voxels[0]);
        let embed = store.get("embed.w").unwrap();
        let mut features: Vec<Vec<f64>> = points
            .iter()
            .zip(&colors)
            .map(|(p, c)| embed.matvec(&[p.x, p.y, p.z, c[0], c[1], c[2]]).unwrap())
            .collect();
        let before = features.clone();
        let w0 = cfg.widths[0];
        let zero_k = Tensor::new(
            vec![w0, cfg.head_dim],
            vec![0.0; w0 * cfg.head_dim],
        )
        .unwrap();
        let order: Vec<usize> = (0..n).collect();
        attention_pass(
            &mut features,
            &order,
            n,
            store.get("stage0.attn.wq").unwrap(),
            &zero_k,
            store.get("stage0.attn.wv").unwrap(),
            cfg.head_dim,
        )
        .unwrap();
        let wv = store.get("stage0.attn.wv").unwrap();
        let values: Vec<Vec<f64>> = before.iter().map(|f| wv.matvec(f).unwrap()).collect();
        let mean: Vec<f64> = (0..w0)
            .map(|c| values.iter().map(|v| v[c]).sum::<f64>() / n as f64)
            .collect();
        for (f, b) in features.iter().zip(&before) {
            for c in 0..w0 {
                assert_relative_eq!(f[c], b[c] + mean[c], epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn mismatched_and_empty_inputs_are_rejected() {
        let (store, cfg) = store_and_config();
        assert!(matches!(
            encode_points(&[], &[], &store, &cfg),
            Err(PatchError::EmptyPoints)
        ));
        assert!(matches!(
            encode_points(&[Vec3::zeros()], &[], &store, &cfg),
            Err(PatchError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn encoding_is_deterministic() {
        let (store, cfg) = store_and_config();
        let (points, colors) = distinct_cloud(50, 21, cfg.voxels[0]);
        let a = encode_points(&points, &colors, &store, &cfg).unwrap();
        let b = encode_points(&points, &colors, &store, &cfg).unwrap();
        assert_eq!(a, b);
        assert!(a
            .iter()
            .flatten()
            .all(|v| v.is_finite()));
    }
}
