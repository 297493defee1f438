//! Per-patch semantic descriptors.
//!
//! Production systems would plug a learned image encoder in here; the
//! built-in encoder computes a deterministic 20-dimensional appearance
//! descriptor — quadrant color means plus an orientation histogram — and
//! projects it to the semantic width with the `semantic.proj` weight
//! matrix. The descriptor is cheap, rotation-sensitive, and distinguishes
//! flat from textured patches, which is all the downstream numerics need.

use crate::scene::RgbImage;

use super::weights::WeightStore;
use super::PatchError;

/// Raw descriptor width: 4 quadrants × RGB mean (12) + 8 orientation bins.
pub const DESCRIPTOR_DIM: usize = 20;

/// Maps a `patch`-sized RGB window to a semantic embedding.
pub trait SemanticEncoder {
    /// Embedding of the window with top-left corner `(u0, v0)` and side
    /// length `patch`. The window must lie inside the image.
    fn encode(
        &self,
        rgb: &RgbImage,
        u0: usize,
        v0: usize,
        patch: usize,
    ) -> Result<Vec<f64>, PatchError>;

    /// Embedding width.
    fn dim(&self) -> usize;
}

/// The built-in descriptor + projection encoder.
pub struct ProjectedDescriptorEncoder<'a> {
    store: &'a WeightStore,
    dim: usize,
}

impl<'a> ProjectedDescriptorEncoder<'a> {
    pub fn new(store: &'a WeightStore) -> Result<Self, PatchError> {
        let proj = store.get("semantic.proj")?;
        let [n_in, n_out] = proj.dims()[..] else {
            return Err(PatchError::BadConfig(format!(
                "semantic.proj must be rank 2, got {:?}",
                proj.dims()
            )));
        };
        if n_in != DESCRIPTOR_DIM {
            return Err(PatchError::ShapeMismatch {
                name: "semantic.proj".into(),
                expected: vec![DESCRIPTOR_DIM, n_out],
                got: vec![n_in, n_out],
            });
        }
        Ok(Self { store, dim: n_out })
    }
}

impl SemanticEncoder for ProjectedDescriptorEncoder<'_> {
    fn encode(
        &self,
        rgb: &RgbImage,
        u0: usize,
        v0: usize,
        patch: usize,
    ) -> Result<Vec<f64>, PatchError> {
        let d = descriptor(rgb, u0, v0, patch)?;
        self.store.get("semantic.proj")?.matvec(&d)
    }

    fn dim(&self) -> usize {
        self.dim
    }
}

fn check_window(
    rgb: &RgbImage,
    u0: usize,
    v0: usize,
    patch: usize,
) -> Result<(), PatchError> {
    if patch == 0 || u0 + patch > rgb.width() || v0 + patch > rgb.height() {
        return Err(PatchError::BadConfig(format!(
            "window {patch}x{patch} at ({u0}, {v0}) outside {}x{} image",
            rgb.width(),
            rgb.height()
        )));
    }
    Ok(())
}

/// The raw 20-dimensional appearance descriptor of one square window.
///
/// Layout: 12 quadrant-mean entries (quadrants in row-major order —
/// top-left, top-right, bottom-left, bottom-right — each contributing its
/// mean R, G, B scaled to `[0, 1]`), then 8 orientation-histogram entries.
///
/// The histogram pools central-difference luminance gradients over the
/// window interior into 8 equal angle bins, each gradient weighted by its
/// magnitude, and is normalized to sum to 1 when any gradient is present.
/// A perfectly flat window has an all-zero histogram.
pub fn descriptor(
    rgb: &RgbImage,
    u0: usize,
    v0: usize,
    patch: usize,
) -> Result<Vec<f64>, PatchError> {
    check_window(rgb, u0, v0, patch)?;
    let mut out = vec![0.0f64; DESCRIPTOR_DIM];

    // Quadrant color means. Quadrant boundaries use the ceiling split so a
    // 1x1 window degenerates to four copies of the single pixel's color.
    let half = patch.div_ceil(2);
    let quadrants: [(usize, usize); 4] = [(0, 0), (0, 1), (1, 0), (1, 1)];
    for (q, (qv, qu)) in quadrants.into_iter().enumerate() {
        let (mut sum, mut n) = ([0.0f64; 3], 0usize);
        for dv in 0..patch {
            for du in 0..patch {
                let in_q = usize::from(du >= half) == qu && usize::from(dv >= half) == qv;
                if !in_q {
                    continue;
                }
                let px = rgb.get(u0 + du, v0 + dv);
                for c in 0..3 {
                    sum[c] += f64::from(px[c]) / 255.0;
                }
                n += 1;
            }
        }
        for c in 0..3 {
            out[3 * q + c] = if n > 0 { sum[c] / n as f64 } else { 0.0 };
        }
    }

    // Orientation histogram over the interior (central differences).
    let gray = |du: usize, dv: usize| -> f64 {
        let px = rgb.get(u0 + du, v0 + dv);
        (f64::from(px[0]) + f64::from(px[1]) + f64::from(px[2])) / (3.0 * 255.0)
    };
    let mut hist = [0.0f64; 8];
    let mut total = 0.0f64;
    for dv in 1..patch.saturating_sub(1) {
        for du in 1..patch.saturating_sub(1) {
            let gx = (gray(du + 1, dv) - gray(du - 1, dv)) / 2.0;
            let gy = (gray(du, dv + 1) - gray(du, dv - 1)) / 2.0;
            let mag = gx.hypot(gy);
            if mag == 0.0 {
                continue;
            }
            let angle = gy.atan2(gx); // (-pi, pi]
            let bin = (((angle + std::f64::consts::PI) / (std::f64::consts::TAU / 8.0))
                .floor() as usize)
                .min(7);
            hist[bin] += mag;
            total += mag;
        }
    }
    if total > 0.0 {
        for (slot, h) in out[12..].iter_mut().zip(hist) {
            *slot = h / total;
        }
    }
    Ok(out)
}
