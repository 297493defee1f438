//! Deterministic fixtures shared by the test suites and the `gst fixture`
//! subcommand: reference response texts, a hand-computed reasoning scene,
//! and a small synthetic RGB-D bundle rendered from analytic geometry.

use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::Matrix3;

use crate::gcot::bev::PALETTE;
use crate::gcot::SceneMeta;
use crate::scene::{
    bundle_io, Aabb, AxisAlignment, BundleError, DepthMap, Frame, Intrinsics, ObjectMask,
    ObjectRecord, Pose, RgbImage, SceneBundle, Trajectory, Vec3,
};

/// A grounded chain-of-thought response in canonical form: analysis
/// paragraph, grounding entries, step-by-step reasoning, final answer.
pub const COT_RESPONSE_EXAMPLE: &str = r#"<think>The question is asking for the relative direction of the telephone with respect to my position (at the radiator) while facing the table. To solve this, I can identify all relevant objects and their bounding boxes first.

radiator 1 <bbox>(-1.9165, -1.0266, 0.0798, -1.6415, 0.9513, 0.6104)</bbox>, table 1 <bbox>(-0.9128, -1.7861, 0.0150, -0.5043, -1.0341, 0.5050)</bbox>, telephone 1 <bbox>(-1.4182, 0.9637, 0.9736, -1.1277, 1.2378, 1.0825)</bbox>

To determine the telephone's position relative to the table, I analyze the spatial relationships step by step:
Step 1: Observer position and orientation
Standing at the radiator's centroid:
- x = (-1.9165 + -1.6415)/2 = -1.779
- y = (-1.0266 + 0.9513)/2 = -0.038
Facing the table, whose centroid is at approximately (-0.709, -1.410).
Step 2: Compute the facing and target vectors
Facing vector: (-0.709 - (-1.779), -1.410 - (-0.038)) = (1.070, -1.372)
Target vector to the telephone centroid at (-1.273, 1.101): (0.506, 1.139)
Step 3: Determine the side with the cross product
Cross product: 1.070 * 1.139 - (-1.372) * 0.506 = 1.913 > 0, so the target lies to the left.

The telephone lies to the left of the table. Option A is correct.</think>
<answer>A</answer>"#;

/// A direct (no chain-of-thought) response: analysis only, no groundings.
pub const DIRECT_RESPONSE_EXAMPLE: &str = r#"<think>The question is asking for the room size in square meters. To solve this, I can rely on the overall spatial information in the video without grounding any particular object.

From the video, the room size is about 11.0 m².</think>
<answer>11.0</answer>"#;

/// (category, box min, box max, first clearly visible frame) for the
/// hand-annotated reasoning scene. Object ids are the row indices. The
/// radiator, table, and telephone boxes are exactly those quoted in
/// [`COT_RESPONSE_EXAMPLE`].
const OBJECT_TABLE: [(&str, [f64; 3], [f64; 3], usize); 12] = [
    ("chair", [0.10, -1.40, 0.00], [0.50, -1.00, 0.45], 0),
    ("chair", [0.80, -1.40, 0.00], [1.20, -1.00, 0.45], 2),
    ("chair", [1.50, -0.40, 0.00], [1.90, 0.00, 0.45], 5),
    ("lamp", [-1.90, 1.40, 0.00], [-1.70, 1.60, 1.50], 1),
    ("lamp", [1.60, 1.40, 0.00], [1.80, 1.60, 1.50], 6),
    (
        "radiator",
        [-1.9165, -1.0266, 0.0798],
        [-1.6415, 0.9513, 0.6104],
        0,
    ),
    (
        "table",
        [-0.9128, -1.7861, 0.0150],
        [-0.5043, -1.0341, 0.5050],
        1,
    ),
    (
        "telephone",
        [-1.4182, 0.9637, 0.9736],
        [-1.1277, 1.2378, 1.0825],
        2,
    ),
    ("sofa", [0.40, 0.80, 0.00], [1.60, 1.40, 0.80], 4),
    ("bed", [-0.90, -0.20, 0.00], [0.30, 0.60, 0.55], 3),
    ("desk", [1.30, -1.90, 0.00], [1.90, -1.30, 0.75], 5),
    ("shelf", [-0.40, 1.30, 0.00], [0.20, 1.60, 1.80], 7),
];

/// The twelve annotated objects of the reasoning scene, boxes in the
/// axis-aligned frame (floor at z = 0). Three categories repeat (chair ×3,
/// lamp ×2); the seven remaining categories are unique and carry pairwise
/// distinct first-visible frames.
pub fn reasoning_objects() -> Vec<ObjectRecord> {
    OBJECT_TABLE
        .iter()
        .enumerate()
        .map(|(id, (category, min, max, first))| ObjectRecord {
            id: id as u32,
            category: (*category).to_string(),
            bbox: Aabb::new(Vec3::from(*min), Vec3::from(*max)).expect("fixture box"),
            first_visible_frame: Some(*first),
        })
        .collect()
}

/// Generation metadata for the reasoning scene. The room area rounds to
/// the 11.0 m² quoted in [`DIRECT_RESPONSE_EXAMPLE`].
pub fn reasoning_meta() -> SceneMeta {
    SceneMeta {
        scene_id: "apartment-0001".to_string(),
        objects: reasoning_objects(),
        room_area: Some(11.02),
    }
}

/// A camera path with two analytically known left turns:
/// (0,0) → (1,0) → (1,1) → (0,1). Its nearest unique landmarks are the bed
/// at the start and the shelf at the end.
pub fn reasoning_trajectory() -> Trajectory {
    Trajectory::new(vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]]).expect("fixture path")
}

const CAM_SIZE: usize = 64;
const CAM_FOCAL: f64 = 32.0;
const CAM_HEIGHT: f64 = 3.0;
const N_FRAMES: usize = 4;
const FLOOR_GRAY: [u8; 3] = [110, 110, 110];

fn camera_intrinsics() -> Intrinsics {
    Intrinsics::new(CAM_FOCAL, CAM_FOCAL, 32.0, 32.0).expect("fixture intrinsics")
}

/// Camera `k` hangs over the scene looking straight down (180° about x:
/// camera x stays world x, camera y and z flip), drifting slightly between
/// frames.
fn camera_pose(k: usize) -> Pose {
    let rotation = Matrix3::new(1.0, 0.0, 0.0, 0.0, -1.0, 0.0, 0.0, 0.0, -1.0);
    let position = Vec3::new(
        -0.2 + 0.1 * k as f64,
        0.2 - 0.05 * k as f64,
        CAM_HEIGHT,
    );
    Pose::new(rotation, position).expect("fixture pose")
}

/// First positive ray parameter at which `origin + t * dir` enters `bbox`,
/// by the slab method. `None` when the ray misses.
fn ray_box(origin: &Vec3, dir: &Vec3, bbox: &Aabb) -> Option<f64> {
    let mut tmin = 0.0f64;
    let mut tmax = f64::INFINITY;
    for axis in 0..3 {
        let (o, d) = (origin[axis], dir[axis]);
        let (lo, hi) = (bbox.min()[axis], bbox.max()[axis]);
        if d.abs() < 1e-12 {
            if o < lo || o > hi {
                return None;
            }
        } else {
            let (a, b) = ((lo - o) / d, (hi - o) / d);
            let (t1, t2) = if a <= b { (a, b) } else { (b, a) };
            tmin = tmin.max(t1);
            tmax = tmax.min(t2);
            if tmin > tmax {
                return None;
            }
        }
    }
    Some(tmin)
}

/// Renders one frame against the object boxes and the floor plane z = 0.
/// Returns depth (camera-frame z of the hit), RGB (objects take palette
/// colors, floor is gray), and the id of the object hit per pixel.
fn render_frame(k: usize, objects: &[ObjectRecord]) -> (DepthMap, RgbImage, Vec<Option<u32>>) {
    let pose = camera_pose(k);
    let origin = pose.translation();
    let rot = pose.rotation();
    let mut depth = vec![0.0f64; CAM_SIZE * CAM_SIZE];
    let mut rgb = vec![0u8; 3 * CAM_SIZE * CAM_SIZE];
    let mut hits: Vec<Option<u32>> = vec![None; CAM_SIZE * CAM_SIZE];
    for v in 0..CAM_SIZE {
        for u in 0..CAM_SIZE {
            let dir_cam = Vec3::new(
                (u as f64 - 32.0) / CAM_FOCAL,
                (v as f64 - 32.0) / CAM_FOCAL,
                1.0,
            );
            let dir = rot * dir_cam;
            // dir.z is exactly -1, so the floor plane z = 0 sits at
            // parameter CAM_HEIGHT and the parameter equals camera depth.
            let mut best = CAM_HEIGHT;
            let mut hit: Option<u32> = None;
            for o in objects {
                if let Some(t) = ray_box(origin, &dir, &o.bbox) {
                    if t < best {
                        best = t;
                        hit = Some(o.id);
                    }
                }
            }
            let idx = v * CAM_SIZE + u;
            depth[idx] = best;
            hits[idx] = hit;
            let color = match hit {
                Some(id) => PALETTE[id as usize % PALETTE.len()],
                None => FLOOR_GRAY,
            };
            rgb[3 * idx..3 * idx + 3].copy_from_slice(&color);
        }
    }
    let depth = DepthMap::from_meters(CAM_SIZE, CAM_SIZE, depth).expect("fixture depth");
    let rgb = RgbImage::new(CAM_SIZE, CAM_SIZE, rgb).expect("fixture rgb");
    (depth, rgb, hits)
}

/// A four-frame 64×64 RGB-D bundle of the reasoning scene, rendered
/// analytically so depth back-projection recovers exact surface points.
///
/// Frame 0 carves out two invalid-depth regions: the full 16×16 patch at
/// the top-left corner, and a partial 14×16 block inside the patch whose
/// corner is at (32, 32).
pub fn camera_bundle() -> SceneBundle {
    let objects: Vec<ObjectRecord> = reasoning_objects()
        .into_iter()
        .map(|mut o| {
            // The bundle has four frames; visibility metadata is derived
            // from masks during ingest rather than pre-annotated.
            o.first_visible_frame = None;
            o
        })
        .collect();
    let mut frames = Vec::with_capacity(N_FRAMES);
    for k in 0..N_FRAMES {
        let (depth, rgb, _) = render_frame(k, &objects);
        let depth = if k == 0 {
            let mut samples = depth.samples().to_vec();
            for v in 0..16 {
                for u in 0..16 {
                    samples[v * CAM_SIZE + u] = 0.0;
                }
            }
            for v in 32..48 {
                for u in 32..46 {
                    samples[v * CAM_SIZE + u] = 0.0;
                }
            }
            DepthMap::from_meters(CAM_SIZE, CAM_SIZE, samples).expect("fixture depth")
        } else {
            depth
        };
        frames.push(Frame {
            depth,
            rgb: Some(rgb),
            pose: camera_pose(k),
        });
    }
    SceneBundle {
        scene_id: "camera-0001".to_string(),
        intrinsics: camera_intrinsics(),
        frames,
        objects,
        room_area: None,
        axis_align: AxisAlignment::Unknown,
    }
}

/// Per-frame visibility masks for [`camera_bundle`], rendered from the same
/// geometry. Only objects with at least one visible pixel appear.
pub fn camera_masks() -> Vec<BTreeMap<u32, ObjectMask>> {
    let objects = reasoning_objects();
    let mut out = Vec::with_capacity(N_FRAMES);
    for k in 0..N_FRAMES {
        let (_, _, hits) = render_frame(k, &objects);
        let mut per_object: BTreeMap<u32, ObjectMask> = BTreeMap::new();
        for o in &objects {
            let data: Vec<bool> = hits.iter().map(|h| *h == Some(o.id)).collect();
            if data.iter().any(|&b| b) {
                per_object.insert(
                    o.id,
                    ObjectMask::new(CAM_SIZE, CAM_SIZE, data).expect("fixture mask"),
                );
            }
        }
        out.push(per_object);
    }
    out
}

/// Writes the camera bundle, its masks, and the reasoning trajectory as a
/// complete scene directory.
pub fn write_scene_dir(dir: &Path) -> Result<SceneBundle, BundleError> {
    let bundle = camera_bundle();
    bundle_io::save_bundle(dir, &bundle)?;
    bundle_io::save_masks(dir, &camera_masks())?;
    bundle_io::save_trajectory(dir, &reasoning_trajectory())?;
    Ok(bundle)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gcot::{rel_direction, Side};
    use crate::respond::parse_response;
    use crate::scene::{aggregate_points, back_project};

    #[test]
    fn reasoning_scene_has_the_advertised_shape() {
        let meta = reasoning_meta();
        assert_eq!(meta.objects.len(), 12);
        let singles = meta.singletons();
        assert_eq!(singles.len(), 7);
        let mut frames: Vec<usize> = singles
            .iter()
            .map(|o| o.first_visible_frame.unwrap())
            .collect();
        frames.sort_unstable();
        frames.dedup();
        assert_eq!(frames.len(), 7, "singleton appearance frames must differ");
        assert_eq!(meta.by_category()["chair"].len(), 3);
        assert_eq!(meta.by_category()["lamp"].len(), 2);
    }

    #[test]
    fn reference_response_boxes_match_the_annotated_objects() {
        let parsed = parse_response(COT_RESPONSE_EXAMPLE).unwrap();
        let objects = reasoning_objects();
        let by_name: BTreeMap<&str, &ObjectRecord> = objects
            .iter()
            .map(|o| (o.category.as_str(), o))
            .collect();
        for g in parsed.ast.groundings() {
            let obj = by_name[g.name.as_str()];
            assert_eq!(g.boxes, vec![obj.bbox], "box mismatch for {}", g.name);
        }
    }

    #[test]
    fn reference_direction_example_is_left() {
        let objects = reasoning_objects();
        let center_xy = |id: usize| {
            let c = objects[id].bbox.center();
            [c.x, c.y]
        };
        // Observer radiator (id 5), facing table (id 6), target telephone (id 7).
        let side = rel_direction(center_xy(5), center_xy(6), center_xy(7)).unwrap();
        assert_eq!(side, Side::Left);
    }

    #[test]
    fn trajectory_turns_left_twice() {
        use crate::gcot::turn_sequence;
        let traj = reasoning_trajectory();
        assert_eq!(
            turn_sequence(traj.anchors(), 15.0),
            vec!["turn left", "turn left"]
        );
    }

    #[test]
    fn camera_bundle_validates_and_has_the_advertised_layout() {
        let bundle = camera_bundle();
        bundle.validate().unwrap();
        assert_eq!(bundle.frames.len(), N_FRAMES);
        assert_eq!(bundle.width(), CAM_SIZE);
        assert_eq!(bundle.height(), CAM_SIZE);
        // Frame 0 carries the carved invalid regions.
        let d0 = &bundle.frames[0].depth;
        assert_eq!(d0.get(0, 0), None);
        assert_eq!(d0.get(15, 15), None);
        assert_eq!(d0.get(33, 33), None);
        assert_eq!(d0.get(45, 47), None);
        assert!(d0.get(46, 47).is_some(), "carve-out is 14 columns wide");
        assert!(d0.get(16, 0).is_some());
        // Later frames are fully valid.
        assert_eq!(
            bundle.frames[1].depth.valid_count(),
            CAM_SIZE * CAM_SIZE
        );
    }

    #[test]
    fn back_projected_floor_pixels_land_on_the_floor_plane() {
        let bundle = camera_bundle();
        let frame = &bundle.frames[1];
        let pts = back_project(&frame.depth, &bundle.intrinsics, &frame.pose).unwrap();
        let (_, _, hits) = render_frame(1, &bundle.objects);
        let mut floor_checked = 0;
        for (idx, p) in pts.iter().enumerate() {
            let p = p.expect("frame 1 has full depth");
            if hits[idx].is_none() {
                assert!(p.z.abs() < 1e-9, "floor pixel {idx} ended at z={}", p.z);
                floor_checked += 1;
            } else {
                assert!(p.z > 1e-9, "object pixel {idx} must sit above the floor");
            }
        }
        assert!(floor_checked > 1000, "most pixels see the floor");
    }

    #[test]
    fn back_projected_object_pixels_land_on_their_box_surface() {
        let bundle = camera_bundle();
        let frame = &bundle.frames[2];
        let pts = back_project(&frame.depth, &bundle.intrinsics, &frame.pose).unwrap();
        let (_, _, hits) = render_frame(2, &bundle.objects);
        let mut object_checked = 0;
        for (idx, hit) in hits.iter().enumerate() {
            let Some(id) = hit else { continue };
            let p = pts[idx].unwrap();
            let bbox = &bundle.objects[*id as usize].bbox;
            let eps = 1e-9;
            let inside = (bbox.min().x - eps..=bbox.max().x + eps).contains(&p.x)
                && (bbox.min().y - eps..=bbox.max().y + eps).contains(&p.y)
                && (bbox.min().z - eps..=bbox.max().z + eps).contains(&p.z);
            assert!(inside, "pixel {idx} of object {id} off its box: {p:?}");
            object_checked += 1;
        }
        assert!(object_checked > 100, "objects must cover many pixels");
    }

    #[test]
    fn masks_agree_with_rendered_hits_and_all_objects_show_up() {
        let masks = camera_masks();
        assert_eq!(masks.len(), N_FRAMES);
        // Every object is visible somewhere in the sequence.
        let mut seen: Vec<u32> = masks
            .iter()
            .flat_map(|m| m.keys().copied())
            .collect();
        seen.sort_unstable();
        seen.dedup();
        assert_eq!(seen, (0..12).collect::<Vec<u32>>());
        // Mask areas match the hit raster.
        let (_, _, hits) = render_frame(0, &reasoning_objects());
        for (id, mask) in &masks[0] {
            let expect = hits.iter().filter(|h| **h == Some(*id)).count();
            assert_eq!(mask.area(), expect);
        }
    }

    #[test]
    fn scene_dir_roundtrips_through_disk() {
        let dir = tempfile::tempdir().unwrap();
        let written = write_scene_dir(dir.path()).unwrap();
        let mut loaded = bundle_io::load_bundle(dir.path()).unwrap();
        // The loader names the scene after the directory.
        loaded.scene_id = written.scene_id.clone();
        // Depth quantizes to millimeters on disk.
        for (fw, fl) in written.frames.iter().zip(&loaded.frames) {
            for (dw, dl) in fw.depth.samples().iter().zip(fl.depth.samples()) {
                assert!((dw - dl).abs() <= 5e-4 + 1e-12);
            }
        }
        assert_eq!(written.objects, loaded.objects);
        let masks = bundle_io::load_masks(dir.path(), N_FRAMES).unwrap().unwrap();
        assert_eq!(masks, camera_masks());
        let traj = bundle_io::load_trajectory(dir.path()).unwrap().unwrap();
        assert_eq!(traj.anchors(), reasoning_trajectory().anchors());
    }

    #[test]
    fn aggregation_skips_carved_pixels() {
        let bundle = camera_bundle();
        let all = aggregate_points(&bundle, 1, 1).unwrap();
        let per_frame_valid: usize = bundle
            .frames
            .iter()
            .map(|f| f.depth.valid_count())
            .sum();
        assert_eq!(all.len(), per_frame_valid);
        let carved = 16 * 16 + 16 * 14;
        assert_eq!(all.len(), N_FRAMES * CAM_SIZE * CAM_SIZE - carved);
    }
}
