//! Dual-path aggregation of per-point geometric features into one patch
//! token, plus the positional encoding and the final fusion.
//!
//! A patch's sampled points reach the token along two complementary paths:
//!
//! * **semantic-aligned pooling** — cross-attention in which the patch's
//!   semantic embedding forms the single query and the sampled points'
//!   geometric features form keys and values, so appearance decides which
//!   geometry matters;
//! * **position-based interpolation** — inverse-distance interpolation of
//!   the raw geometric features at the patch center, so nearby geometry
//!   matters regardless of appearance.
//!
//! [`fuse`] projects the semantic embedding and the concatenated
//! geometric paths into the output width and adds a sinusoidal encoding
//! of the patch center.
//!
//! The cross-attention softmax comes with a forward-mode derivative
//! ([`semantic_aligned_pool_jvp`]) used by the tests to check the
//! numerics against central differences.

use crate::scene::Vec3;

use super::weights::Tensor;
use super::PatchError;

/// Neighbor count for the interpolation path (capped by sample count).
pub const IDW_NEIGHBORS: usize = 3;

/// Distance offset keeping interpolation weights finite.
pub const IDW_EPS: f64 = 1e-8;

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Numerically safe softmax (subtracts the maximum before exponentiating).
///
/// When every logit is equal the weights are exactly `1/n`, so with a
/// power-of-two `n` they sum to exactly `1.0`.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    assert!(!logits.is_empty(), "softmax of an empty slice");
    let max = logits.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    let exps: Vec<f64> = logits.iter().map(|&s| (s - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

fn check_uniform_width(feats: &[Vec<f64>]) -> Result<usize, PatchError> {
    let first = feats.first().ok_or(PatchError::EmptyPoints)?;
    for f in feats {
        if f.len() != first.len() {
            return Err(PatchError::DimensionMismatch {
                expected: first.len(),
                got: f.len(),
            });
        }
    }
    Ok(first.len())
}

/// Cross-attention pooling: the patch semantic embedding queries the
/// sampled geometric features.
///
/// `q = sem · wq`, `k_i = geo_i · wk`, `v_i = geo_i · wv`; logits are
/// `⟨q, k_i⟩ / sqrt(dim(q))` and the output is the softmax-weighted sum of
/// the values.
pub fn semantic_aligned_pool(
    sem: &[f64],
    geo: &[Vec<f64>],
    wq: &Tensor,
    wk: &Tensor,
    wv: &Tensor,
) -> Result<Vec<f64>, PatchError> {
    check_uniform_width(geo)?;
    let q = wq.matvec(sem)?;
    let scale = 1.0 / (q.len() as f64).sqrt();
    let mut logits = Vec::with_capacity(geo.len());
    let mut values = Vec::with_capacity(geo.len());
    for g in geo {
        logits.push(dot(&q, &wk.matvec(g)?) * scale);
        values.push(wv.matvec(g)?);
    }
    let alpha = softmax(&logits);
    let mut out = vec![0.0f64; values[0].len()];
    for (a, v) in alpha.iter().zip(&values) {
        for (slot, value) in out.iter_mut().zip(v) {
            *slot += a * value;
        }
    }
    Ok(out)
}

/// Forward-mode derivative of [`semantic_aligned_pool`].
///
/// Given input tangents `dsem` and `dgeo` (same shapes as `sem`/`geo`),
/// returns the primal output together with its tangent. The softmax
/// derivative is `dα_i = α_i (ds_i − Σ_l α_l ds_l)`.
pub fn semantic_aligned_pool_jvp(
    sem: &[f64],
    dsem: &[f64],
    geo: &[Vec<f64>],
    dgeo: &[Vec<f64>],
    wq: &Tensor,
    wk: &Tensor,
    wv: &Tensor,
) -> Result<(Vec<f64>, Vec<f64>), PatchError> {
    check_uniform_width(geo)?;
    if dsem.len() != sem.len() || dgeo.len() != geo.len() {
        return Err(PatchError::DimensionMismatch {
            expected: sem.len().max(geo.len()),
            got: dsem.len().min(dgeo.len()),
        });
    }
    let q = wq.matvec(sem)?;
    let dq = wq.matvec(dsem)?;
    let scale = 1.0 / (q.len() as f64).sqrt();
    let n = geo.len();
    let mut logits = Vec::with_capacity(n);
    let mut dlogits = Vec::with_capacity(n);
    let mut values = Vec::with_capacity(n);
    let mut dvalues = Vec::with_capacity(n);
    for (g, dg) in geo.iter().zip(dgeo) {
        let k = wk.matvec(g)?;
        let dk = wk.matvec(dg)?;
        logits.push(dot(&q, &k) * scale);
        dlogits.push((dot(&dq, &k) + dot(&q, &dk)) * scale);
        values.push(wv.matvec(g)?);
        dvalues.push(wv.matvec(dg)?);
    }
    let alpha = softmax(&logits);
    let mean_ds: f64 = alpha.iter().zip(&dlogits).map(|(a, ds)| a * ds).sum();
    let dalpha: Vec<f64> = alpha
        .iter()
        .zip(&dlogits)
        .map(|(a, ds)| a * (ds - mean_ds))
        .collect();
    let width = values[0].len();
    let mut out = vec![0.0f64; width];
    let mut dout = vec![0.0f64; width];
    for i in 0..n {
        for c in 0..width {
            out[c] += alpha[i] * values[i][c];
            dout[c] += dalpha[i] * values[i][c] + alpha[i] * dvalues[i][c];
        }
    }
    Ok((out, dout))
}

/// Inverse-distance interpolation of `feats` at `center` from the
/// `neighbors` nearest of `points` (ties broken by index).
///
/// Weights are `1 / (distance + eps)`. If the center coincides exactly
/// with a sampled point, that point's features are returned unchanged.
pub fn idw_interpolate(
    center: &Vec3,
    points: &[Vec3],
    feats: &[Vec<f64>],
    neighbors: usize,
    eps: f64,
) -> Result<Vec<f64>, PatchError> {
    let width = check_uniform_width(feats)?;
    if points.len() != feats.len() {
        return Err(PatchError::DimensionMismatch {
            expected: points.len(),
            got: feats.len(),
        });
    }
    if neighbors == 0 || !(eps.is_finite() && eps > 0.0) {
        return Err(PatchError::BadConfig(format!(
            "need neighbors >= 1 and eps > 0, got {neighbors} and {eps}"
        )));
    }
    let mut by_distance: Vec<(f64, usize)> = points
        .iter()
        .enumerate()
        .map(|(i, p)| ((p - center).norm(), i))
        .collect();
    by_distance.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    if by_distance[0].0 == 0.0 {
        return Ok(feats[by_distance[0].1].clone());
    }
    let m = neighbors.min(by_distance.len());
    let mut out = vec![0.0f64; width];
    let mut total = 0.0f64;
    for &(d, i) in &by_distance[..m] {
        let w = 1.0 / (d + eps);
        total += w;
        for (slot, value) in out.iter_mut().zip(&feats[i]) {
            *slot += w * value;
        }
    }
    for slot in &mut out {
        *slot /= total;
    }
    Ok(out)
}

/// Sinusoidal encoding of a 3D position into `dim` values.
///
/// `dim` must be a positive multiple of 6. Each axis contributes
/// `dim / 6` frequency pairs `sin(2^k π t), cos(2^k π t)` for
/// `k = 0 .. dim/6`, laid out axis-major (all x pairs, then y, then z).
pub fn positional_encode(p: &Vec3, dim: usize) -> Result<Vec<f64>, PatchError> {
    if dim == 0 || dim % 6 != 0 {
        return Err(PatchError::BadConfig(format!(
            "positional encoding width must be a positive multiple of 6, got {dim}"
        )));
    }
    let freqs = dim / 6;
    let mut out = Vec::with_capacity(dim);
    for axis in 0..3 {
        let t = p[axis];
        for k in 0..freqs {
            let arg = (1u64 << k) as f64 * std::f64::consts::PI * t;
            out.push(arg.sin());
            out.push(arg.cos());
        }
    }
    Ok(out)
}

/// Fuses one patch token: projected semantic embedding + positional
/// encoding + projected concatenation of the two geometric paths.
pub fn fuse(
    sem: &[f64],
    pe: &[f64],
    geo_sem: &[f64],
    geo_pos: &[f64],
    p_sem: &Tensor,
    p_geo: &Tensor,
) -> Result<Vec<f64>, PatchError> {
    let mut out = p_sem.matvec(sem)?;
    if pe.len() != out.len() {
        return Err(PatchError::DimensionMismatch {
            expected: out.len(),
            got: pe.len(),
        });
    }
    let concat: Vec<f64> = geo_sem.iter().chain(geo_pos).copied().collect();
    let geo_term = p_geo.matvec(&concat)?;
    for ((slot, a), b) in out.iter_mut().zip(pe).zip(&geo_term) {
        *slot += a + b;
    }
    Ok(out)
}

/// Jacobian-vector product of [`fuse`] along input tangents.
///
/// Fusion is linear with no bias, so the directional derivative along
/// `(dsem, dpe, dgeo_sem, dgeo_pos)` is fusion applied to the tangents
/// themselves. Returns `(primal, tangent)`.
#[allow(clippy::too_many_arguments)]
pub fn fuse_jvp(
    sem: &[f64],
    dsem: &[f64],
    pe: &[f64],
    dpe: &[f64],
    geo_sem: &[f64],
    dgeo_sem: &[f64],
    geo_pos: &[f64],
    dgeo_pos: &[f64],
    p_sem: &Tensor,
    p_geo: &Tensor,
) -> Result<(Vec<f64>, Vec<f64>), PatchError> {
    if dsem.len() != sem.len()
        || dpe.len() != pe.len()
        || dgeo_sem.len() != geo_sem.len()
        || dgeo_pos.len() != geo_pos.len()
    {
        return Err(PatchError::DimensionMismatch {
            expected: sem.len() + pe.len() + geo_sem.len() + geo_pos.len(),
            got: dsem.len() + dpe.len() + dgeo_sem.len() + dgeo_pos.len(),
        });
    }
    let primal = fuse(sem, pe, geo_sem, geo_pos, p_sem, p_geo)?;
    let tangent = fuse(dsem, dpe, dgeo_sem, dgeo_pos, p_sem, p_geo)?;
    Ok((primal, tangent))
}
