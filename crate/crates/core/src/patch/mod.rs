//! Hybrid patch representations of captured scenes.
//!
//! A scene's frames are divided into square pixel patches; every patch
//! becomes one token carrying an appearance (semantic) embedding fused
//! with aggregated 3D geometry:
//!
//! 1. every valid depth pixel is back-projected to a world point and the
//!    whole cloud runs through the serialized-attention point encoder
//!    ([`encoder`], Morton-ordered grouping from [`morton`]);
//! 2. each patch samples up to `k_samp` of its own points with a
//!    patch-indexed RNG stream and aggregates their encoded features
//!    along the two paths of [`dual_path`];
//! 3. the patch's semantic embedding ([`semantic`]), the two geometric
//!    aggregates, and a sinusoidal encoding of the patch center are fused
//!    into the final token.
//!
//! Patches with no valid depth keep only their projected semantic term
//! and a zero center, flagged invalid.
//!
//! Weights live in a [`WeightStore`] (`GSW1` files, seeded
//! initialization); encoded scenes serialize as `GSR1` files (see
//! [`SceneFeatures`]).

pub mod dual_path;
pub mod encoder;
mod export;
pub mod morton;
pub mod semantic;
pub mod weights;

pub use dual_path::{
    fuse, fuse_jvp, idw_interpolate, positional_encode, semantic_aligned_pool,
    semantic_aligned_pool_jvp, softmax, IDW_EPS, IDW_NEIGHBORS,
};
pub use encoder::{encode_points, pool_cells};
pub use morton::{morton_code, morton_decode, morton_encode, morton_order};
pub use semantic::{descriptor, ProjectedDescriptorEncoder, SemanticEncoder, DESCRIPTOR_DIM};
pub use weights::{Tensor, WeightStore};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scene::{back_project, SceneBundle, SceneError, Vec3};

#[derive(Debug, Error)]
pub enum PatchError {
    #[error(transparent)]
    Scene(#[from] SceneError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("axis {axis} quantizes to {q}, beyond the 21-bit grid")]
    QuantizeRange { axis: usize, q: u64 },
    #[error("no points to serialize")]
    EmptyPoints,
    #[error("expected {expected} entries, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid configuration: {0}")]
    BadConfig(String),
    #[error("weight store has no tensor {0:?}")]
    MissingTensor(String),
    #[error("tensor {name:?} has shape {got:?}, expected {expected:?}")]
    ShapeMismatch {
        name: String,
        expected: Vec<usize>,
        got: Vec<usize>,
    },
    #[error("bad magic: expected {expected:?}, got {got:?}")]
    BadMagic { expected: &'static str, got: [u8; 4] },
    #[error("malformed file: {0}")]
    BadHeader(String),
    #[error("frame {width}x{height} is not divisible into {patch}x{patch} patches")]
    BadPatchGrid {
        width: usize,
        height: usize,
        patch: usize,
    },
}

/// All tunables of the patch pipeline. [`EncoderConfig::default`] matches
/// the widths the weight catalogue documents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EncoderConfig {
    /// Patch side length in pixels; frames must divide evenly.
    pub patch_size: usize,
    /// Points sampled per patch for geometric aggregation.
    pub k_samp: usize,
    /// Widths of the two point-encoder stages.
    pub widths: [usize; 2],
    /// Group length for serialized attention.
    pub group_size: usize,
    /// Fine and coarse voxel sizes (meters) for the two stages.
    pub voxels: [f64; 2],
    /// Attention head width inside the point encoder.
    pub head_dim: usize,
    /// Semantic embedding width.
    pub d_sem: usize,
    /// Key width of the semantic-aligned cross attention.
    pub cross_dim: usize,
    /// Value width of the semantic-aligned cross attention.
    pub c_out: usize,
    /// Fused token width; must be a positive multiple of 6.
    pub d_out: usize,
    /// Seed for weight initialization and per-patch sampling streams.
    pub seed: u64,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            patch_size: 16,
            k_samp: 64,
            widths: [32, 64],
            group_size: 16,
            voxels: [0.05, 0.2],
            head_dim: 16,
            d_sem: 64,
            cross_dim: 32,
            c_out: 64,
            d_out: 96,
            seed: 0,
        }
    }
}

impl EncoderConfig {
    /// Width of the per-point geometric feature (both stages concatenated).
    pub fn geo_dim(&self) -> usize {
        self.widths[0] + self.widths[1]
    }

    pub fn validate(&self) -> Result<(), PatchError> {
        let positive = [
            ("patch_size", self.patch_size),
            ("k_samp", self.k_samp),
            ("widths[0]", self.widths[0]),
            ("widths[1]", self.widths[1]),
            ("group_size", self.group_size),
            ("head_dim", self.head_dim),
            ("d_sem", self.d_sem),
            ("cross_dim", self.cross_dim),
            ("c_out", self.c_out),
        ];
        for (what, v) in positive {
            if v == 0 {
                return Err(PatchError::BadConfig(format!("{what} must be >= 1")));
            }
        }
        if self.d_out == 0 || self.d_out % 6 != 0 {
            return Err(PatchError::BadConfig(format!(
                "d_out must be a positive multiple of 6, got {}",
                self.d_out
            )));
        }
        for v in self.voxels {
            if !(v.is_finite() && v > 0.0) {
                return Err(PatchError::BadConfig(format!(
                    "voxel sizes must be positive, got {:?}",
                    self.voxels
                )));
            }
        }
        Ok(())
    }
}

/// Row-major partition of a `width`x`height` frame into square patches.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PatchGrid {
    width: usize,
    height: usize,
    patch: usize,
    cols: usize,
    rows: usize,
}

impl PatchGrid {
    /// The frame must divide evenly into `patch`-sized squares.
    pub fn new(width: usize, height: usize, patch: usize) -> Result<Self, PatchError> {
        if patch == 0 || width == 0 || height == 0 || width % patch != 0 || height % patch != 0
        {
            return Err(PatchError::BadPatchGrid {
                width,
                height,
                patch,
            });
        }
        Ok(Self {
            width,
            height,
            patch,
            cols: width / patch,
            rows: height / patch,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn patch_size(&self) -> usize {
        self.patch
    }

    /// Patches per frame.
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Row-major patch index of `(row, col)`.
    pub fn index(&self, row: usize, col: usize) -> usize {
        assert!(row < self.rows && col < self.cols, "patch out of range");
        row * self.cols + col
    }

    /// Top-left pixel `(u0, v0)` of patch `index`.
    pub fn origin(&self, index: usize) -> (usize, usize) {
        assert!(index < self.len(), "patch out of range");
        let row = index / self.cols;
        let col = index % self.cols;
        (col * self.patch, row * self.patch)
    }
}

/// One fused patch token.
#[derive(Debug, Clone, PartialEq)]
pub struct HybridPatchFeature {
    /// Fused feature, `d_out` wide.
    pub feature: Vec<f32>,
    /// Mean world position of the sampled points (zeros when invalid).
    pub center: [f32; 3],
    /// Whether the patch contained any valid depth.
    pub valid: bool,
}

/// Every token of one encoded scene, frame-major then patch-row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneFeatures {
    pub patch_rows: usize,
    pub patch_cols: usize,
    pub dim: usize,
    pub tokens: Vec<HybridPatchFeature>,
}

impl SceneFeatures {
    pub(crate) fn check_consistent(&self) -> Result<(), PatchError> {
        let per_frame = self.patch_rows * self.patch_cols;
        if per_frame == 0 || self.tokens.is_empty() || self.tokens.len() % per_frame != 0 {
            return Err(PatchError::BadConfig(format!(
                "{} tokens do not fill a whole number of {}x{} frames",
                self.tokens.len(),
                self.patch_rows,
                self.patch_cols
            )));
        }
        if let Some(t) = self.tokens.iter().find(|t| t.feature.len() != self.dim) {
            return Err(PatchError::DimensionMismatch {
                expected: self.dim,
                got: t.feature.len(),
            });
        }
        Ok(())
    }

    pub fn n_frames(&self) -> usize {
        self.tokens.len() / (self.patch_rows * self.patch_cols)
    }

    /// Token of `frame`, patch row `row`, patch column `col`.
    pub fn token(&self, frame: usize, row: usize, col: usize) -> &HybridPatchFeature {
        assert!(
            frame < self.n_frames() && row < self.patch_rows && col < self.patch_cols,
            "token out of range"
        );
        &self.tokens[(frame * self.patch_rows + row) * self.patch_cols + col]
    }
}

/// Encodes a whole bundle into per-patch hybrid tokens.
///
/// Deterministic for fixed inputs: the point sampling of the patch with
/// flat index `i` (frame-major) draws from RNG stream `i` of
/// `cfg.seed`, independent of every other patch.
pub fn encode_bundle(
    bundle: &SceneBundle,
    store: &WeightStore,
    cfg: &EncoderConfig,
) -> Result<SceneFeatures, PatchError> {
    cfg.validate()?;
    store.validate_for(cfg)?;
    bundle.validate().map_err(PatchError::Scene)?;
    let (w, h) = (bundle.width(), bundle.height());
    let grid = PatchGrid::new(w, h, cfg.patch_size)?;
    let sem_enc = ProjectedDescriptorEncoder::new(store)?;

    // Back-project every frame into one shared cloud, remembering which
    // cloud index each pixel produced.
    let mut cloud: Vec<Vec3> = Vec::new();
    let mut cloud_colors: Vec<[f64; 3]> = Vec::new();
    let mut pixel_index: Vec<Vec<Option<usize>>> = Vec::with_capacity(bundle.frames.len());
    for frame in &bundle.frames {
        let pts = back_project(&frame.depth, &bundle.intrinsics, &frame.pose)?;
        let mut map = Vec::with_capacity(pts.len());
        for (pix, p) in pts.into_iter().enumerate() {
            match p {
                Some(world) => {
                    map.push(Some(cloud.len()));
                    cloud.push(world);
                    let color = match &frame.rgb {
                        Some(img) => {
                            let px = img.get(pix % w, pix / w);
                            [
                                f64::from(px[0]) / 255.0,
                                f64::from(px[1]) / 255.0,
                                f64::from(px[2]) / 255.0,
                            ]
                        }
                        None => [0.5; 3],
                    };
                    cloud_colors.push(color);
                }
                None => map.push(None),
            }
        }
        pixel_index.push(map);
    }
    let geo: Vec<Vec<f64>> = if cloud.is_empty() {
        Vec::new()
    } else {
        encode_points(&cloud, &cloud_colors, store, cfg)?
    };

    let wq = store.get("dual.wq")?;
    let wk = store.get("dual.wk")?;
    let wv = store.get("dual.wv")?;
    let p_sem = store.get("fuse.p_sem")?;
    let p_geo = store.get("fuse.p_geo")?;

    let mut tokens = Vec::with_capacity(bundle.frames.len() * grid.len());
    for (fi, frame) in bundle.frames.iter().enumerate() {
        for pi in 0..grid.len() {
            let (u0, v0) = grid.origin(pi);
            let sem = match &frame.rgb {
                Some(img) => sem_enc.encode(img, u0, v0, cfg.patch_size)?,
                None => vec![0.0; cfg.d_sem],
            };
            let mut candidates = Vec::new();
            for dv in 0..cfg.patch_size {
                for du in 0..cfg.patch_size {
                    if let Some(ci) = pixel_index[fi][(v0 + dv) * w + (u0 + du)] {
                        candidates.push(ci);
                    }
                }
            }
            let token = if candidates.is_empty() {
                HybridPatchFeature {
                    feature: p_sem.matvec(&sem)?.iter().map(|v| *v as f32).collect(),
                    center: [0.0; 3],
                    valid: false,
                }
            } else {
                let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
                rng.set_stream((fi * grid.len() + pi) as u64);
                let k = cfg.k_samp.min(candidates.len());
                let mut chosen: Vec<usize> =
                    rand::seq::index::sample(&mut rng, candidates.len(), k)
                        .into_iter()
                        .map(|i| candidates[i])
                        .collect();
                chosen.sort_unstable();
                let pts: Vec<Vec3> = chosen.iter().map(|&i| cloud[i]).collect();
                let feats: Vec<Vec<f64>> = chosen.iter().map(|&i| geo[i].clone()).collect();
                let center = pts.iter().fold(Vec3::zeros(), |a, p| a + p) / k as f64;
                let geo_sem = semantic_aligned_pool(&sem, &feats, wq, wk, wv)?;
                let geo_pos = idw_interpolate(&center, &pts, &feats, IDW_NEIGHBORS, IDW_EPS)?;
                let pe = positional_encode(&center, cfg.d_out)?;
                let fused = fuse(&sem, &pe, &geo_sem, &geo_pos, p_sem, p_geo)?;
                HybridPatchFeature {
                    feature: fused.iter().map(|v| *v as f32).collect(),
                    center: [center.x as f32, center.y as f32, center.z as f32],
                    valid: true,
                }
            };
            tokens.push(token);
        }
    }
    Ok(SceneFeatures {
        patch_rows: grid.rows(),
        patch_cols: grid.cols(),
        dim: cfg.d_out,
        tokens,
    })
}

#[cfg(test)]
mod tests;
