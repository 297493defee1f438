//! Scene bundles and basic 3D geometry.
//!
//! A *scene bundle* is a posed RGB-D capture of one indoor scene: camera
//! intrinsics, per-frame depth maps and camera-to-world poses, optional RGB
//! frames, and object annotations (category + axis-aligned box). Bundles are
//! stored on disk in a plain-file layout (see [`bundle_io`]) and in memory as
//! [`SceneBundle`].
//!
//! Camera convention: `+z` forward, `+x` right, `+y` down; pixel `u` grows
//! along `+x` and `v` along `+y`. Depth is the `z`-coordinate in the camera
//! frame, in meters. World frames are right-handed; when a scene is axis
//! aligned, `+z` is up (against gravity), the floor sits at `z = 0`, and the
//! dominant wall direction runs along `+x`.

mod area;
mod axis_align;
pub mod bundle_io;
pub mod pnm;

pub use area::compute_room_area;
pub use axis_align::estimate_axis_align;
pub use bundle_io::BundleError;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// 3D vector/point type used throughout the toolkit.
pub type Vec3 = Vector3<f64>;

/// Errors produced by scene types and operations.
#[derive(Debug, Error)]
pub enum SceneError {
    #[error("invalid intrinsics: {0}")]
    InvalidIntrinsics(String),
    #[error(
        "principal point ({cx}, {cy}) outside depth image bounds {width}x{height}"
    )]
    PrincipalPointOutOfBounds {
        cx: f64,
        cy: f64,
        width: usize,
        height: usize,
    },
    #[error("invalid pose: {0}")]
    InvalidPose(String),
    #[error("invalid depth map: {0}")]
    InvalidDepth(String),
    #[error("invalid image: {0}")]
    InvalidImage(String),
    #[error("invalid box: {0}")]
    InvalidBox(String),
    #[error("invalid scene bundle: {0}")]
    InvalidBundle(String),
    #[error("stride must be >= 1, got {0}")]
    InvalidStride(usize),
    #[error("need at least {needed} points, got {got}")]
    TooFewPoints { needed: usize, got: usize },
    #[error("degenerate point configuration: {0}")]
    Degenerate(String),
}

/// Pinhole camera intrinsics shared by every frame of a bundle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

impl Intrinsics {
    /// Validates that focal lengths are positive and all entries finite.
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64) -> Result<Self, SceneError> {
        if !(fx.is_finite() && fy.is_finite() && cx.is_finite() && cy.is_finite()) {
            return Err(SceneError::InvalidIntrinsics(
                "non-finite intrinsics".into(),
            ));
        }
        if fx <= 0.0 || fy <= 0.0 {
            return Err(SceneError::InvalidIntrinsics(format!(
                "focal lengths must be positive, got fx={fx} fy={fy}"
            )));
        }
        Ok(Self { fx, fy, cx, cy })
    }

    /// Checks that the principal point lies inside a `width`x`height` image.
    pub fn check_bounds(&self, width: usize, height: usize) -> Result<(), SceneError> {
        if self.cx < 0.0 || self.cx >= width as f64 || self.cy < 0.0 || self.cy >= height as f64 {
            return Err(SceneError::PrincipalPointOutOfBounds {
                cx: self.cx,
                cy: self.cy,
                width,
                height,
            });
        }
        Ok(())
    }
}

/// Per-frame depth image in meters, row-major; `0` marks an invalid pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthMap {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl DepthMap {
    /// Builds a depth map from meters. Entries must be finite and `>= 0`;
    /// zero marks an invalid (missing) measurement.
    pub fn from_meters(width: usize, height: usize, data: Vec<f64>) -> Result<Self, SceneError> {
        if width == 0 || height == 0 {
            return Err(SceneError::InvalidDepth("empty depth map".into()));
        }
        if data.len() != width * height {
            return Err(SceneError::InvalidDepth(format!(
                "expected {} samples for {width}x{height}, got {}",
                width * height,
                data.len()
            )));
        }
        if let Some(d) = data.iter().find(|d| !d.is_finite() || **d < 0.0) {
            return Err(SceneError::InvalidDepth(format!(
                "depth values must be finite and >= 0, got {d}"
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    /// Builds a depth map from raw millimeter samples (`0` = invalid), the
    /// unit used by the on-disk 16-bit format.
    pub fn from_millimeters(width: usize, height: usize, mm: &[u16]) -> Result<Self, SceneError> {
        let data = mm.iter().map(|&v| f64::from(v) / 1000.0).collect();
        Self::from_meters(width, height, data)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// Depth at pixel `(u, v)` in meters, or `None` when invalid.
    ///
    /// Panics if the pixel is out of bounds.
    pub fn get(&self, u: usize, v: usize) -> Option<f64> {
        assert!(u < self.width && v < self.height, "pixel out of bounds");
        let d = self.data[v * self.width + u];
        (d > 0.0).then_some(d)
    }

    /// Number of valid (non-zero) pixels.
    pub fn valid_count(&self) -> usize {
        self.data.iter().filter(|d| **d > 0.0).count()
    }

    /// Raw row-major samples in meters (`0` = invalid).
    pub fn samples(&self) -> &[f64] {
        &self.data
    }

    /// Scales every valid depth by `s > 0` (used by training augmentation).
    pub fn scaled(&self, s: f64) -> Result<Self, SceneError> {
        if !(s.is_finite() && s > 0.0) {
            return Err(SceneError::InvalidDepth(format!(
                "depth scale must be positive, got {s}"
            )));
        }
        let data = self.data.iter().map(|d| d * s).collect();
        Self::from_meters(self.width, self.height, data)
    }
}

/// 8-bit RGB image, row-major, 3 bytes per pixel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RgbImage {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl RgbImage {
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Result<Self, SceneError> {
        if width == 0 || height == 0 {
            return Err(SceneError::InvalidImage("empty image".into()));
        }
        if data.len() != 3 * width * height {
            return Err(SceneError::InvalidImage(format!(
                "expected {} bytes for {width}x{height} RGB, got {}",
                3 * width * height,
                data.len()
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// RGB triple at pixel `(u, v)`. Panics if out of bounds.
    pub fn get(&self, u: usize, v: usize) -> [u8; 3] {
        assert!(u < self.width && v < self.height, "pixel out of bounds");
        let i = 3 * (v * self.width + u);
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }
}

/// Maximum deviation from orthonormality tolerated in a rotation matrix.
const ROTATION_TOL: f64 = 1e-6;

fn check_rotation(r: &Matrix3<f64>, what: &str) -> Result<(), SceneError> {
    if r.iter().any(|v| !v.is_finite()) {
        return Err(SceneError::InvalidPose(format!("{what}: non-finite rotation")));
    }
    let err = (r.transpose() * r - Matrix3::identity()).abs().max();
    if err > ROTATION_TOL {
        return Err(SceneError::InvalidPose(format!(
            "{what}: rotation not orthonormal (max deviation {err:.2e})"
        )));
    }
    if r.determinant() < 0.0 {
        return Err(SceneError::InvalidPose(format!(
            "{what}: rotation is a reflection (negative determinant)"
        )));
    }
    Ok(())
}

/// Camera-to-world pose: `p_world = rotation * p_cam + translation`.
#[derive(Debug, Clone, PartialEq)]
pub struct Pose {
    rotation: Matrix3<f64>,
    translation: Vec3,
}

impl Pose {
    /// Validates orthonormality (within `1e-6`) and positive determinant.
    pub fn new(rotation: Matrix3<f64>, translation: Vec3) -> Result<Self, SceneError> {
        check_rotation(&rotation, "camera pose")?;
        if translation.iter().any(|v| !v.is_finite()) {
            return Err(SceneError::InvalidPose("non-finite translation".into()));
        }
        Ok(Self {
            rotation,
            translation,
        })
    }

    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vec3::zeros(),
        }
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vec3 {
        &self.translation
    }

    /// Maps a camera-frame point to the world frame.
    pub fn transform_point(&self, p_cam: &Vec3) -> Vec3 {
        self.rotation * p_cam + self.translation
    }

    /// Maps a world point back into the camera frame.
    pub fn inverse_transform_point(&self, p_world: &Vec3) -> Vec3 {
        self.rotation.transpose() * (p_world - self.translation)
    }
}

/// Rigid transform `x' = rotation * x + translation` between world frames
/// (e.g. raw capture frame to axis-aligned frame).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RigidTransformRaw", into = "RigidTransformRaw")]
pub struct RigidTransform {
    rotation: Matrix3<f64>,
    translation: Vec3,
}

#[derive(Serialize, Deserialize)]
struct RigidTransformRaw {
    rotation: [[f64; 3]; 3],
    translation: [f64; 3],
}

impl TryFrom<RigidTransformRaw> for RigidTransform {
    type Error = SceneError;

    fn try_from(raw: RigidTransformRaw) -> Result<Self, SceneError> {
        let rotation = Matrix3::from_fn(|r, c| raw.rotation[r][c]);
        RigidTransform::new(rotation, Vec3::new(
            raw.translation[0],
            raw.translation[1],
            raw.translation[2],
        ))
    }
}

impl From<RigidTransform> for RigidTransformRaw {
    fn from(t: RigidTransform) -> Self {
        let rotation = std::array::from_fn(|r| std::array::from_fn(|c| t.rotation[(r, c)]));
        Self {
            rotation,
            translation: [t.translation.x, t.translation.y, t.translation.z],
        }
    }
}

impl RigidTransform {
    /// Validates the rotation part exactly like [`Pose::new`].
    pub fn new(rotation: Matrix3<f64>, translation: Vec3) -> Result<Self, SceneError> {
        check_rotation(&rotation, "rigid transform")?;
        if translation.iter().any(|v| !v.is_finite()) {
            return Err(SceneError::InvalidPose("non-finite translation".into()));
        }
        Ok(Self {
            rotation,
            translation,
        })
    }

    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vec3::zeros(),
        }
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vec3 {
        &self.translation
    }

    pub fn apply(&self, p: &Vec3) -> Vec3 {
        self.rotation * p + self.translation
    }

    /// Composes two transforms: `(self ∘ other)(x) = self(other(x))`.
    pub fn compose(&self, other: &RigidTransform) -> RigidTransform {
        RigidTransform {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    /// Rotation angle in radians (0..=pi), ignoring the translation.
    pub fn rotation_angle(&self) -> f64 {
        let trace = self.rotation.trace();
        ((trace - 1.0) / 2.0).clamp(-1.0, 1.0).acos()
    }
}

/// Whether a bundle's geometry is expressed in the axis-aligned frame.
///
/// Object boxes in a bundle are always stored in the same world frame as the
/// poses. `Pending` carries the transform that would align the scene without
/// asserting it has been applied; `Applied` asserts the stored geometry is
/// already aligned (floor at `z = 0`, walls along the axes).
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "snake_case")]
pub enum AxisAlignment {
    #[default]
    Unknown,
    Pending { transform: RigidTransform },
    Applied,
}

/// Axis-aligned bounding box with `min <= max` componentwise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "AabbRaw", into = "AabbRaw")]
pub struct Aabb {
    min: Vec3,
    max: Vec3,
}

#[derive(Serialize, Deserialize)]
struct AabbRaw {
    min: [f64; 3],
    max: [f64; 3],
}

impl TryFrom<AabbRaw> for Aabb {
    type Error = SceneError;

    fn try_from(raw: AabbRaw) -> Result<Self, SceneError> {
        Aabb::new(Vec3::from(raw.min), Vec3::from(raw.max))
    }
}

impl From<Aabb> for AabbRaw {
    fn from(b: Aabb) -> Self {
        Self {
            min: b.min.into(),
            max: b.max.into(),
        }
    }
}

impl Aabb {
    /// Validates `min <= max` componentwise and finiteness.
    pub fn new(min: Vec3, max: Vec3) -> Result<Self, SceneError> {
        if min.iter().chain(max.iter()).any(|v| !v.is_finite()) {
            return Err(SceneError::InvalidBox("non-finite coordinates".into()));
        }
        if min.x > max.x || min.y > max.y || min.z > max.z {
            return Err(SceneError::InvalidBox(format!(
                "min {:?} exceeds max {:?}",
                (min.x, min.y, min.z),
                (max.x, max.y, max.z)
            )));
        }
        Ok(Self { min, max })
    }

    /// Builds the box spanned by two opposite corners in any order.
    pub fn from_corners(a: Vec3, b: Vec3) -> Result<Self, SceneError> {
        Self::new(a.inf(&b), a.sup(&b))
    }

    pub fn min(&self) -> Vec3 {
        self.min
    }

    pub fn max(&self) -> Vec3 {
        self.max
    }

    pub fn center(&self) -> Vec3 {
        (self.min + self.max) / 2.0
    }

    pub fn extents(&self) -> Vec3 {
        self.max - self.min
    }

    /// Length of the box diagonal.
    pub fn diagonal(&self) -> f64 {
        (self.max - self.min).norm()
    }

    pub fn volume(&self) -> f64 {
        let e = self.extents();
        e.x * e.y * e.z
    }

    pub fn contains(&self, p: &Vec3) -> bool {
        (self.min.x..=self.max.x).contains(&p.x)
            && (self.min.y..=self.max.y).contains(&p.y)
            && (self.min.z..=self.max.z).contains(&p.z)
    }

    /// The eight corner points.
    pub fn corners(&self) -> [Vec3; 8] {
        let (a, b) = (self.min, self.max);
        [
            Vec3::new(a.x, a.y, a.z),
            Vec3::new(b.x, a.y, a.z),
            Vec3::new(a.x, b.y, a.z),
            Vec3::new(b.x, b.y, a.z),
            Vec3::new(a.x, a.y, b.z),
            Vec3::new(b.x, a.y, b.z),
            Vec3::new(a.x, b.y, b.z),
            Vec3::new(b.x, b.y, b.z),
        ]
    }

    /// Maps every corner through `f` and re-normalizes to an axis-aligned box.
    pub fn map_corners(&self, f: impl Fn(&Vec3) -> Vec3) -> Result<Aabb, SceneError> {
        let corners = self.corners();
        let mut min = f(&corners[0]);
        let mut max = min;
        for c in &corners[1..] {
            let q = f(c);
            min = min.inf(&q);
            max = max.sup(&q);
        }
        Aabb::new(min, max)
    }
}

/// One annotated object: category label plus world-frame bounding box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectRecord {
    pub id: u32,
    pub category: String,
    #[serde(flatten)]
    pub bbox: Aabb,
    /// Index of the first frame in which the object is visible, if known.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub first_visible_frame: Option<usize>,
}

/// Ordered 2D anchor positions of the capture path, used for route
/// planning questions. Consecutive anchors must be distinct.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    anchors: Vec<[f64; 2]>,
}

impl Trajectory {
    pub fn new(anchors: Vec<[f64; 2]>) -> Result<Self, SceneError> {
        if anchors.len() < 2 {
            return Err(SceneError::TooFewPoints {
                needed: 2,
                got: anchors.len(),
            });
        }
        if anchors.iter().flatten().any(|v| !v.is_finite()) {
            return Err(SceneError::Degenerate("non-finite anchor".into()));
        }
        for w in anchors.windows(2) {
            let d = ((w[1][0] - w[0][0]).powi(2) + (w[1][1] - w[0][1]).powi(2)).sqrt();
            if d < 1e-9 {
                return Err(SceneError::Degenerate(
                    "consecutive trajectory anchors coincide".into(),
                ));
            }
        }
        Ok(Self { anchors })
    }

    /// Builds a trajectory from the camera positions of a bundle, dropping
    /// consecutive positions closer than `min_step` in the xy-plane.
    pub fn from_poses(bundle: &SceneBundle, min_step: f64) -> Result<Self, SceneError> {
        let mut anchors: Vec<[f64; 2]> = Vec::new();
        for frame in &bundle.frames {
            let t = frame.pose.translation();
            let xy = [t.x, t.y];
            let keep = match anchors.last() {
                Some(prev) => {
                    let d = ((xy[0] - prev[0]).powi(2) + (xy[1] - prev[1]).powi(2)).sqrt();
                    d >= min_step
                }
                None => true,
            };
            if keep {
                anchors.push(xy);
            }
        }
        Self::new(anchors)
    }

    pub fn anchors(&self) -> &[[f64; 2]] {
        &self.anchors
    }
}

/// Binary per-object visibility mask for one frame.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ObjectMask {
    width: usize,
    height: usize,
    data: Vec<bool>,
}

impl ObjectMask {
    pub fn new(width: usize, height: usize, data: Vec<bool>) -> Result<Self, SceneError> {
        if data.len() != width * height {
            return Err(SceneError::InvalidImage(format!(
                "expected {} mask entries for {width}x{height}, got {}",
                width * height,
                data.len()
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// Number of in-mask pixels.
    pub fn area(&self) -> usize {
        self.data.iter().filter(|b| **b).count()
    }

    /// Row-major membership flags.
    pub fn samples(&self) -> &[bool] {
        &self.data
    }
}

/// One posed frame: depth (required), RGB (optional), camera-to-world pose.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub depth: DepthMap,
    pub rgb: Option<RgbImage>,
    pub pose: Pose,
}

/// A full scene in memory. See the module docs for the disk layout.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneBundle {
    pub scene_id: String,
    pub intrinsics: Intrinsics,
    pub frames: Vec<Frame>,
    pub objects: Vec<ObjectRecord>,
    /// Ground-truth room area in square meters, if annotated.
    pub room_area: Option<f64>,
    pub axis_align: AxisAlignment,
}

impl SceneBundle {
    /// Validates cross-field invariants: at least one frame, consistent
    /// image dimensions, principal point in bounds, unique object ids,
    /// non-empty categories.
    pub fn validate(&self) -> Result<(), SceneError> {
        if self.frames.is_empty() {
            return Err(SceneError::InvalidBundle("bundle has no frames".into()));
        }
        let (w, h) = (self.frames[0].depth.width(), self.frames[0].depth.height());
        for (i, f) in self.frames.iter().enumerate() {
            if f.depth.width() != w || f.depth.height() != h {
                return Err(SceneError::InvalidBundle(format!(
                    "frame {i} depth is {}x{}, expected {w}x{h}",
                    f.depth.width(),
                    f.depth.height()
                )));
            }
            if let Some(rgb) = &f.rgb {
                if rgb.width() != w || rgb.height() != h {
                    return Err(SceneError::InvalidBundle(format!(
                        "frame {i} rgb is {}x{}, expected {w}x{h}",
                        rgb.width(),
                        rgb.height()
                    )));
                }
            }
        }
        self.intrinsics.check_bounds(w, h)?;
        let mut ids: Vec<u32> = self.objects.iter().map(|o| o.id).collect();
        ids.sort_unstable();
        ids.dedup();
        if ids.len() != self.objects.len() {
            return Err(SceneError::InvalidBundle("duplicate object ids".into()));
        }
        for o in &self.objects {
            if o.category.trim().is_empty() {
                return Err(SceneError::InvalidBundle(format!(
                    "object {} has an empty category",
                    o.id
                )));
            }
            if let Some(first) = o.first_visible_frame {
                if first >= self.frames.len() {
                    return Err(SceneError::InvalidBundle(format!(
                        "object {} first visible in frame {first}, but bundle has {} frames",
                        o.id,
                        self.frames.len()
                    )));
                }
            }
        }
        if let Some(area) = self.room_area {
            if !(area.is_finite() && area > 0.0) {
                return Err(SceneError::InvalidBundle(format!(
                    "room area must be positive, got {area}"
                )));
            }
        }
        Ok(())
    }

    pub fn width(&self) -> usize {
        self.frames[0].depth.width()
    }

    pub fn height(&self) -> usize {
        self.frames[0].depth.height()
    }
}

/// Back-projects every valid depth pixel of one frame into the world frame.
///
/// Returns one entry per pixel in row-major order: `Some(world_point)` for
/// valid depths, `None` where depth is missing. The principal point must lie
/// inside the image.
pub fn back_project(
    depth: &DepthMap,
    intrinsics: &Intrinsics,
    pose: &Pose,
) -> Result<Vec<Option<Vec3>>, SceneError> {
    intrinsics.check_bounds(depth.width(), depth.height())?;
    let mut out = Vec::with_capacity(depth.width() * depth.height());
    for v in 0..depth.height() {
        for u in 0..depth.width() {
            out.push(depth.get(u, v).map(|d| {
                let p_cam = Vec3::new(
                    d * (u as f64 - intrinsics.cx) / intrinsics.fx,
                    d * (v as f64 - intrinsics.cy) / intrinsics.fy,
                    d,
                );
                pose.transform_point(&p_cam)
            }));
        }
    }
    Ok(out)
}

/// Concatenates valid back-projected points across frames.
///
/// Frames `0, frame_stride, 2*frame_stride, …` contribute pixels `(u, v)`
/// with `u % pixel_stride == 0 && v % pixel_stride == 0`. Output order is
/// deterministic: frames ascending, pixels row-major. Both strides must be
/// `>= 1`.
pub fn aggregate_points(
    bundle: &SceneBundle,
    frame_stride: usize,
    pixel_stride: usize,
) -> Result<Vec<Vec3>, SceneError> {
    if frame_stride == 0 {
        return Err(SceneError::InvalidStride(frame_stride));
    }
    if pixel_stride == 0 {
        return Err(SceneError::InvalidStride(pixel_stride));
    }
    bundle.validate()?;
    let mut out = Vec::new();
    for frame in bundle.frames.iter().step_by(frame_stride) {
        let intr = &bundle.intrinsics;
        for v in (0..frame.depth.height()).step_by(pixel_stride) {
            for u in (0..frame.depth.width()).step_by(pixel_stride) {
                if let Some(d) = frame.depth.get(u, v) {
                    let p_cam = Vec3::new(
                        d * (u as f64 - intr.cx) / intr.fx,
                        d * (v as f64 - intr.cy) / intr.fy,
                        d,
                    );
                    out.push(frame.pose.transform_point(&p_cam));
                }
            }
        }
    }
    Ok(out)
}
