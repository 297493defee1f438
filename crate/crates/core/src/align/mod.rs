//! Metric alignment and geometric training augmentation.
//!
//! [`solve_scale`] recovers the uniform scale factor between corresponding
//! point sets (for example normalized reconstruction output against metric
//! reference geometry) by least squares, with an optional residual-trimmed
//! variant for outlier-contaminated correspondences.
//!
//! [`apply_augment`] applies one random rigid augmentation — a quarter
//! turn about the vertical axis, a uniform scale, and a translation — to
//! every geometric quantity of a scene bundle at once: depth maps, camera
//! poses, object boxes, and the room area. Quarter turns swap and negate
//! coordinates exactly, so augmented ground truth stays exact rather than
//! accumulating rotation error.

use nalgebra::Matrix3;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scene::{Aabb, AxisAlignment, Frame, Pose, SceneBundle, Vec3};

/// Smallest scale the solver will report after clamping a non-positive
/// least-squares optimum.
pub const MIN_SCALE: f64 = 1e-6;

/// Augmentation ranges: uniform scale and per-axis translation.
pub const SCALE_RANGE: (f64, f64) = (0.75, 1.25);
pub const TRANSLATION_RANGE: (f64, f64) = (-1.0, 1.0);

#[derive(Debug, Error, PartialEq)]
pub enum AlignError {
    #[error("at least one correspondence is required")]
    EmptyPairs,
    #[error("non-finite coordinate in correspondence {index}")]
    NonFinite { index: usize },
    #[error("all source points are at the origin; scale is unobservable")]
    DegenerateSource,
    #[error("{what} = {value} outside [{lo}, {hi}]")]
    OutOfRange {
        what: &'static str,
        value: f64,
        lo: f64,
        hi: f64,
    },
    #[error("trim fraction must lie in [0, 1), got {0}")]
    BadTrimFraction(f64),
}

/// One correspondence between a source point and its metric reference.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointPair {
    pub src: Vec3,
    pub reference: Vec3,
}

/// A validated, non-empty set of correspondences.
#[derive(Debug, Clone, PartialEq)]
pub struct PointPairSet {
    pairs: Vec<PointPair>,
}

impl PointPairSet {
    pub fn new(pairs: Vec<PointPair>) -> Result<Self, AlignError> {
        if pairs.is_empty() {
            return Err(AlignError::EmptyPairs);
        }
        for (index, p) in pairs.iter().enumerate() {
            let finite = p.src.iter().chain(p.reference.iter()).all(|v| v.is_finite());
            if !finite {
                return Err(AlignError::NonFinite { index });
            }
        }
        Ok(Self { pairs })
    }

    /// Pairs zipped from two equally long point slices.
    pub fn from_slices(src: &[Vec3], reference: &[Vec3]) -> Result<Self, AlignError> {
        if src.len() != reference.len() || src.is_empty() {
            return Err(AlignError::EmptyPairs);
        }
        Self::new(
            src.iter()
                .zip(reference)
                .map(|(s, r)| PointPair {
                    src: *s,
                    reference: *r,
                })
                .collect(),
        )
    }

    pub fn pairs(&self) -> &[PointPair] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    /// Always `false`: sets are non-empty by construction.
    pub fn is_empty(&self) -> bool {
        false
    }
}

/// Result of a scale fit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScaleSolution {
    pub scale: f64,
    /// Whether the least-squares optimum was non-positive and got clamped
    /// to [`MIN_SCALE`].
    pub clamped: bool,
    /// Root-mean-square of |scale · src − reference| over the pairs used.
    pub rms_residual: f64,
}

fn rms(pairs: &[PointPair], scale: f64) -> f64 {
    let sum: f64 = pairs
        .iter()
        .map(|p| (p.src * scale - p.reference).norm_squared())
        .sum();
    (sum / pairs.len() as f64).sqrt()
}

/// Least-squares uniform scale: minimizes Σ |s·src − reference|² in closed
/// form, s* = Σ⟨src, reference⟩ / Σ⟨src, src⟩.
///
/// A non-positive optimum (anti-correlated correspondences) is clamped to
/// [`MIN_SCALE`] and flagged rather than silently inverting geometry.
pub fn solve_scale(pairs: &PointPairSet) -> Result<ScaleSolution, AlignError> {
    let num: f64 = pairs.pairs().iter().map(|p| p.src.dot(&p.reference)).sum();
    let den: f64 = pairs.pairs().iter().map(|p| p.src.norm_squared()).sum();
    if den == 0.0 {
        return Err(AlignError::DegenerateSource);
    }
    let raw = num / den;
    let (scale, clamped) = if raw > 0.0 { (raw, false) } else { (MIN_SCALE, true) };
    Ok(ScaleSolution {
        scale,
        clamped,
        rms_residual: rms(pairs.pairs(), scale),
    })
}

/// Robust variant: fits once, drops the `trim_fraction` of pairs with the
/// largest residuals (at least one pair always survives), and re-fits on
/// the rest.
pub fn solve_scale_trimmed(
    pairs: &PointPairSet,
    trim_fraction: f64,
) -> Result<ScaleSolution, AlignError> {
    if !(0.0..1.0).contains(&trim_fraction) {
        return Err(AlignError::BadTrimFraction(trim_fraction));
    }
    let first = solve_scale(pairs)?;
    let n_drop = ((pairs.len() as f64) * trim_fraction).ceil() as usize;
    let n_keep = pairs.len().saturating_sub(n_drop).max(1);
    if n_keep == pairs.len() {
        return Ok(first);
    }
    let mut indexed: Vec<(f64, usize)> = pairs
        .pairs()
        .iter()
        .enumerate()
        .map(|(i, p)| ((p.src * first.scale - p.reference).norm_squared(), i))
        .collect();
    indexed.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let kept: Vec<PointPair> = indexed[..n_keep]
        .iter()
        .map(|&(_, i)| pairs.pairs()[i])
        .collect();
    solve_scale(&PointPairSet::new(kept).expect("n_keep >= 1"))
}

/// A rotation about the vertical axis by a multiple of 90°, applied by
/// coordinate swap/negate so results are exact.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuarterTurn {
    Deg0,
    Deg90,
    Deg180,
    Deg270,
}

impl QuarterTurn {
    pub const ALL: [QuarterTurn; 4] = [
        QuarterTurn::Deg0,
        QuarterTurn::Deg90,
        QuarterTurn::Deg180,
        QuarterTurn::Deg270,
    ];

    /// Counterclockwise (viewed from +z) rotation of a point.
    pub fn apply(self, v: &Vec3) -> Vec3 {
        match self {
            QuarterTurn::Deg0 => *v,
            QuarterTurn::Deg90 => Vec3::new(-v.y, v.x, v.z),
            QuarterTurn::Deg180 => Vec3::new(-v.x, -v.y, v.z),
            QuarterTurn::Deg270 => Vec3::new(v.y, -v.x, v.z),
        }
    }

    pub fn matrix(self) -> Matrix3<f64> {
        match self {
            QuarterTurn::Deg0 => Matrix3::identity(),
            QuarterTurn::Deg90 => {
                Matrix3::new(0.0, -1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0)
            }
            QuarterTurn::Deg180 => {
                Matrix3::new(-1.0, 0.0, 0.0, 0.0, -1.0, 0.0, 0.0, 0.0, 1.0)
            }
            QuarterTurn::Deg270 => {
                Matrix3::new(0.0, 1.0, 0.0, -1.0, 0.0, 0.0, 0.0, 0.0, 1.0)
            }
        }
    }

    /// Exact image of an axis-aligned box (still axis-aligned after any
    /// quarter turn).
    pub fn apply_box(self, b: &Aabb) -> Aabb {
        Aabb::from_corners(self.apply(&b.min()), self.apply(&b.max()))
            .expect("turn of a finite box is finite")
    }

    pub fn degrees(self) -> u16 {
        match self {
            QuarterTurn::Deg0 => 0,
            QuarterTurn::Deg90 => 90,
            QuarterTurn::Deg180 => 180,
            QuarterTurn::Deg270 => 270,
        }
    }

    pub fn from_degrees(deg: u16) -> Option<Self> {
        match deg {
            0 => Some(QuarterTurn::Deg0),
            90 => Some(QuarterTurn::Deg90),
            180 => Some(QuarterTurn::Deg180),
            270 => Some(QuarterTurn::Deg270),
            _ => None,
        }
    }
}

/// One sampled augmentation: p ↦ scale · R(rotation) · p + translation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AugmentParams {
    pub rotation: QuarterTurn,
    pub scale: f64,
    pub translation: [f64; 3],
}

impl AugmentParams {
    pub const IDENTITY: AugmentParams = AugmentParams {
        rotation: QuarterTurn::Deg0,
        scale: 1.0,
        translation: [0.0; 3],
    };

    /// Samples uniformly from the documented ranges.
    pub fn sample<R: Rng + ?Sized>(rng: &mut R) -> Self {
        let rotation = QuarterTurn::ALL[rng.random_range(0..4)];
        let scale = rng.random_range(SCALE_RANGE.0..=SCALE_RANGE.1);
        let translation = [
            rng.random_range(TRANSLATION_RANGE.0..=TRANSLATION_RANGE.1),
            rng.random_range(TRANSLATION_RANGE.0..=TRANSLATION_RANGE.1),
            rng.random_range(TRANSLATION_RANGE.0..=TRANSLATION_RANGE.1),
        ];
        Self {
            rotation,
            scale,
            translation,
        }
    }

    pub fn validate(&self) -> Result<(), AlignError> {
        if !(self.scale.is_finite()
            && (SCALE_RANGE.0..=SCALE_RANGE.1).contains(&self.scale))
        {
            return Err(AlignError::OutOfRange {
                what: "scale",
                value: self.scale,
                lo: SCALE_RANGE.0,
                hi: SCALE_RANGE.1,
            });
        }
        for &t in &self.translation {
            if !(t.is_finite() && (TRANSLATION_RANGE.0..=TRANSLATION_RANGE.1).contains(&t)) {
                return Err(AlignError::OutOfRange {
                    what: "translation",
                    value: t,
                    lo: TRANSLATION_RANGE.0,
                    hi: TRANSLATION_RANGE.1,
                });
            }
        }
        Ok(())
    }

    /// The world-point map p ↦ scale · R · p + translation.
    pub fn apply_point(&self, p: &Vec3) -> Vec3 {
        self.rotation.apply(p) * self.scale + Vec3::from(self.translation)
    }
}

/// Applies `params` to every geometric quantity of `bundle`, after range
/// validation. See [`apply_augment_unchecked`] for the transformation
/// rules.
pub fn apply_augment(bundle: &SceneBundle, params: &AugmentParams) -> Result<SceneBundle, AlignError> {
    params.validate()?;
    Ok(apply_augment_unchecked(bundle, params))
}

/// Applies `params` without range validation (useful in tests and for
/// deliberately extreme augmentation; the scale must still be finite and
/// positive):
///
/// * depth values scale by `scale`;
/// * camera poses become `R' = R_turn · R`, `t' = scale · R_turn · t + translation`,
///   so back-projection through the augmented pose equals augmenting
///   back-projected points;
/// * object boxes map corner-wise (exactly, since turns are axis
///   permutations);
/// * the room area scales by `scale²`;
/// * any recorded axis alignment is reset to unknown, since the transform
///   invalidates it.
pub fn apply_augment_unchecked(bundle: &SceneBundle, params: &AugmentParams) -> SceneBundle {
    let rot = params.rotation.matrix();
    let t_aug = Vec3::from(params.translation);
    let frames = bundle
        .frames
        .iter()
        .map(|f| {
            let new_r = rot * f.pose.rotation();
            let new_t = rot * f.pose.translation() * params.scale + t_aug;
            Frame {
                depth: f
                    .depth
                    .scaled(params.scale)
                    .expect("augmentation scale must be finite and positive"),
                rgb: f.rgb.clone(),
                pose: Pose::new(new_r, new_t).expect("turn of a rotation is a rotation"),
            }
        })
        .collect();
    let objects = bundle
        .objects
        .iter()
        .map(|o| {
            let mut o = o.clone();
            let turned = params.rotation.apply_box(&o.bbox);
            o.bbox = Aabb::from_corners(
                turned.min() * params.scale + t_aug,
                turned.max() * params.scale + t_aug,
            )
            .expect("scaled box stays finite and ordered");
            o
        })
        .collect();
    SceneBundle {
        scene_id: bundle.scene_id.clone(),
        intrinsics: bundle.intrinsics,
        frames,
        objects,
        room_area: bundle.room_area.map(|a| a * params.scale * params.scale),
        axis_align: AxisAlignment::Unknown,
    }
}
