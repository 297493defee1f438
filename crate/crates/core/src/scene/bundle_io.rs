//! On-disk scene bundle layout: load, save, validate.
//!
//! ```text
//! <bundle>/
//!   intrinsics.txt     # one line: "fx fy cx cy" (ASCII floats)
//!   poses/0000.txt     # 4x4 camera-to-world matrix, row-major ASCII,
//!   poses/0001.txt     #   bottom row 0 0 0 1; one file per frame
//!   depth/0000.pgm     # binary P5, maxval 65535, big-endian millimeters,
//!   ...                #   0 = invalid; one file per frame
//!   rgb/0000.ppm       # binary P6; optional directory, all frames if present
//!   masks/0000_0007.pgm# optional: 8-bit mask of object id 7 in frame 0
//!   objects.json       # annotations: objects, room_area, axis_align
//!   trajectory.json    # optional: {"anchors": [[x, y], ...]}
//! ```
//!
//! Frame files are zero-padded four-digit indices starting at 0 with no
//! gaps. Loaders attach the offending file path — and a byte offset where
//! one is meaningful — to every diagnostic.

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use nalgebra::Matrix3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::pnm;
use super::{
    AxisAlignment, DepthMap, Frame, Intrinsics, ObjectMask, ObjectRecord, Pose, RgbImage,
    SceneBundle, SceneError, Trajectory, Vec3,
};

/// Errors raised while reading or writing a bundle directory.
#[derive(Debug, Error)]
pub enum BundleError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{}: {message} (byte offset {offset})", path.display())]
    ParseAt {
        path: PathBuf,
        offset: usize,
        message: String,
    },
    #[error("{}: {message}", path.display())]
    Parse { path: PathBuf, message: String },
    #[error("{}: {source}", path.display())]
    Invariant {
        path: PathBuf,
        #[source]
        source: SceneError,
    },
    #[error("bundle layout: {0}")]
    Layout(String),
}

fn io_err(path: &Path, source: io::Error) -> BundleError {
    BundleError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn parse_err(path: &Path, message: impl Into<String>) -> BundleError {
    BundleError::Parse {
        path: path.to_path_buf(),
        message: message.into(),
    }
}

fn invariant_err(path: &Path, source: SceneError) -> BundleError {
    BundleError::Invariant {
        path: path.to_path_buf(),
        source,
    }
}

/// Splits ASCII text into float tokens, remembering each token's byte offset.
fn parse_floats(path: &Path, text: &str) -> Result<Vec<(usize, f64)>, BundleError> {
    let mut out = Vec::new();
    let mut offset = 0;
    for token in text.split_whitespace() {
        // `split_whitespace` drops offsets, so recover them by searching
        // forward from the previous token (tokens are non-overlapping).
        let start = text[offset..]
            .find(token)
            .map(|i| offset + i)
            .unwrap_or(offset);
        let value: f64 = token.parse().map_err(|_| BundleError::ParseAt {
            path: path.to_path_buf(),
            offset: start,
            message: format!("expected a number, got {token:?}"),
        })?;
        out.push((start, value));
        offset = start + token.len();
    }
    Ok(out)
}

fn load_intrinsics(path: &Path) -> Result<Intrinsics, BundleError> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let floats = parse_floats(path, &text)?;
    if floats.len() != 4 {
        return Err(parse_err(
            path,
            format!("expected 4 values (fx fy cx cy), got {}", floats.len()),
        ));
    }
    Intrinsics::new(floats[0].1, floats[1].1, floats[2].1, floats[3].1)
        .map_err(|e| invariant_err(path, e))
}

fn load_pose(path: &Path) -> Result<Pose, BundleError> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let floats = parse_floats(path, &text)?;
    if floats.len() != 16 {
        return Err(parse_err(
            path,
            format!("expected 16 values for a 4x4 matrix, got {}", floats.len()),
        ));
    }
    let v: Vec<f64> = floats.iter().map(|(_, x)| *x).collect();
    let bottom = [v[12], v[13], v[14], v[15]];
    if (bottom[0]).abs() > 1e-9
        || (bottom[1]).abs() > 1e-9
        || (bottom[2]).abs() > 1e-9
        || (bottom[3] - 1.0).abs() > 1e-9
    {
        return Err(BundleError::ParseAt {
            path: path.to_path_buf(),
            offset: floats[12].0,
            message: format!("bottom row must be 0 0 0 1, got {bottom:?}"),
        });
    }
    let rotation = Matrix3::new(v[0], v[1], v[2], v[4], v[5], v[6], v[8], v[9], v[10]);
    let translation = Vec3::new(v[3], v[7], v[11]);
    Pose::new(rotation, translation).map_err(|e| invariant_err(path, e))
}

fn load_depth(path: &Path) -> Result<DepthMap, BundleError> {
    let data = fs::read(path).map_err(|e| io_err(path, e))?;
    let img = pnm::parse(&data).map_err(|e| BundleError::ParseAt {
        path: path.to_path_buf(),
        offset: e.offset,
        message: e.message,
    })?;
    if img.channels != 1 || img.maxval != 65535 {
        return Err(parse_err(
            path,
            format!(
                "depth must be 16-bit grayscale PGM (maxval 65535), got {} channel(s), maxval {}",
                img.channels, img.maxval
            ),
        ));
    }
    DepthMap::from_millimeters(img.width, img.height, &img.samples)
        .map_err(|e| invariant_err(path, e))
}

fn load_rgb(path: &Path) -> Result<RgbImage, BundleError> {
    let data = fs::read(path).map_err(|e| io_err(path, e))?;
    let img = pnm::parse(&data).map_err(|e| BundleError::ParseAt {
        path: path.to_path_buf(),
        offset: e.offset,
        message: e.message,
    })?;
    if img.channels != 3 || img.maxval != 255 {
        return Err(parse_err(
            path,
            format!(
                "rgb must be 8-bit PPM (maxval 255), got {} channel(s), maxval {}",
                img.channels, img.maxval
            ),
        ));
    }
    let bytes = img.samples.iter().map(|&s| s as u8).collect();
    RgbImage::new(img.width, img.height, bytes).map_err(|e| invariant_err(path, e))
}

/// Serialized form of `objects.json`.
#[derive(Debug, Serialize, Deserialize)]
struct ObjectsFile {
    objects: Vec<ObjectRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    room_area: Option<f64>,
    #[serde(default)]
    axis_align: AxisAlignment,
}

/// Translates a serde_json line/column location into a byte offset.
fn json_offset(text: &str, line: usize, column: usize) -> usize {
    let mut offset = 0;
    for (i, l) in text.split_inclusive('\n').enumerate() {
        if i + 1 == line {
            return offset + column.saturating_sub(1);
        }
        offset += l.len();
    }
    text.len()
}

fn load_objects(path: &Path) -> Result<ObjectsFile, BundleError> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    serde_json::from_str(&text).map_err(|e| BundleError::ParseAt {
        path: path.to_path_buf(),
        offset: json_offset(&text, e.line(), e.column()),
        message: e.to_string(),
    })
}

/// Lists `NNNN.<ext>` files in `dir` and checks they form 0..n contiguously.
fn frame_files(dir: &Path, ext: &str) -> Result<Vec<PathBuf>, BundleError> {
    let mut indices = Vec::new();
    let entries = fs::read_dir(dir).map_err(|e| io_err(dir, e))?;
    for entry in entries {
        let entry = entry.map_err(|e| io_err(dir, e))?;
        let name = entry.file_name();
        let name = name.to_string_lossy();
        if let Some(stem) = name.strip_suffix(&format!(".{ext}")) {
            if stem.len() == 4 && stem.bytes().all(|b| b.is_ascii_digit()) {
                indices.push(stem.parse::<usize>().unwrap());
            }
        }
    }
    indices.sort_unstable();
    for (want, got) in indices.iter().enumerate() {
        if want != *got {
            return Err(BundleError::Layout(format!(
                "{}: frame files must be contiguous from 0000, missing index {want:04}",
                dir.display()
            )));
        }
    }
    Ok(indices
        .iter()
        .map(|i| dir.join(format!("{i:04}.{ext}")))
        .collect())
}

/// Loads and validates a bundle directory into memory.
pub fn load_bundle(dir: &Path) -> Result<SceneBundle, BundleError> {
    let scene_id = dir
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "scene".to_string());
    let intrinsics = load_intrinsics(&dir.join("intrinsics.txt"))?;

    let pose_paths = frame_files(&dir.join("poses"), "txt")?;
    let depth_paths = frame_files(&dir.join("depth"), "pgm")?;
    if pose_paths.len() != depth_paths.len() {
        return Err(BundleError::Layout(format!(
            "{} pose file(s) but {} depth file(s)",
            pose_paths.len(),
            depth_paths.len()
        )));
    }
    if pose_paths.is_empty() {
        return Err(BundleError::Layout("bundle has no frames".into()));
    }
    let rgb_dir = dir.join("rgb");
    let rgb_paths = if rgb_dir.is_dir() {
        let paths = frame_files(&rgb_dir, "ppm")?;
        if paths.len() != pose_paths.len() {
            return Err(BundleError::Layout(format!(
                "rgb directory present but has {} file(s) for {} frames",
                paths.len(),
                pose_paths.len()
            )));
        }
        Some(paths)
    } else {
        None
    };

    let mut frames = Vec::with_capacity(pose_paths.len());
    for i in 0..pose_paths.len() {
        let pose = load_pose(&pose_paths[i])?;
        let depth = load_depth(&depth_paths[i])?;
        let rgb = match &rgb_paths {
            Some(paths) => Some(load_rgb(&paths[i])?),
            None => None,
        };
        frames.push(Frame { depth, rgb, pose });
    }

    let objects_path = dir.join("objects.json");
    let objects_file = if objects_path.exists() {
        load_objects(&objects_path)?
    } else {
        ObjectsFile {
            objects: Vec::new(),
            room_area: None,
            axis_align: AxisAlignment::Unknown,
        }
    };

    let bundle = SceneBundle {
        scene_id,
        intrinsics,
        frames,
        objects: objects_file.objects,
        room_area: objects_file.room_area,
        axis_align: objects_file.axis_align,
    };
    bundle.validate().map_err(|e| invariant_err(dir, e))?;
    Ok(bundle)
}

/// Writes a bundle to `dir`, creating the layout described in the module docs.
///
/// Depth is stored in millimeters; values above the 16-bit range (65.535 m)
/// are rejected rather than silently clamped.
pub fn save_bundle(dir: &Path, bundle: &SceneBundle) -> Result<(), BundleError> {
    bundle
        .validate()
        .map_err(|e| invariant_err(dir, e))?;
    fs::create_dir_all(dir.join("poses")).map_err(|e| io_err(dir, e))?;
    fs::create_dir_all(dir.join("depth")).map_err(|e| io_err(dir, e))?;
    let any_rgb = bundle.frames.iter().any(|f| f.rgb.is_some());
    if any_rgb {
        if bundle.frames.iter().any(|f| f.rgb.is_none()) {
            return Err(BundleError::Layout(
                "either all frames or no frames may carry rgb".into(),
            ));
        }
        fs::create_dir_all(dir.join("rgb")).map_err(|e| io_err(dir, e))?;
    }

    let intr = &bundle.intrinsics;
    let intr_path = dir.join("intrinsics.txt");
    fs::write(
        &intr_path,
        format!("{} {} {} {}\n", intr.fx, intr.fy, intr.cx, intr.cy),
    )
    .map_err(|e| io_err(&intr_path, e))?;

    for (i, frame) in bundle.frames.iter().enumerate() {
        let pose_path = dir.join("poses").join(format!("{i:04}.txt"));
        let r = frame.pose.rotation();
        let t = frame.pose.translation();
        let mut text = String::new();
        for row in 0..3 {
            text.push_str(&format!(
                "{} {} {} {}\n",
                r[(row, 0)],
                r[(row, 1)],
                r[(row, 2)],
                t[row]
            ));
        }
        text.push_str("0 0 0 1\n");
        fs::write(&pose_path, text).map_err(|e| io_err(&pose_path, e))?;

        let depth_path = dir.join("depth").join(format!("{i:04}.pgm"));
        let mut mm = Vec::with_capacity(frame.depth.samples().len());
        for &d in frame.depth.samples() {
            let v = (d * 1000.0).round();
            if v > 65535.0 {
                return Err(parse_err(
                    &depth_path,
                    format!("depth {d} m exceeds the 16-bit millimeter range"),
                ));
            }
            mm.push(v as u16);
        }
        let bytes = pnm::encode_pgm16(frame.depth.width(), frame.depth.height(), &mm);
        fs::write(&depth_path, bytes).map_err(|e| io_err(&depth_path, e))?;

        if let Some(rgb) = &frame.rgb {
            let rgb_path = dir.join("rgb").join(format!("{i:04}.ppm"));
            let bytes = pnm::encode_ppm(rgb.width(), rgb.height(), rgb.data());
            fs::write(&rgb_path, bytes).map_err(|e| io_err(&rgb_path, e))?;
        }
    }

    let objects_path = dir.join("objects.json");
    let objects_file = ObjectsFile {
        objects: bundle.objects.clone(),
        room_area: bundle.room_area,
        axis_align: bundle.axis_align.clone(),
    };
    let json = serde_json::to_string_pretty(&objects_file).expect("objects serialize");
    fs::write(&objects_path, json).map_err(|e| io_err(&objects_path, e))?;
    Ok(())
}

#[derive(Serialize, Deserialize)]
struct TrajectoryFile {
    anchors: Vec<[f64; 2]>,
}

/// Loads `trajectory.json` if present.
pub fn load_trajectory(dir: &Path) -> Result<Option<Trajectory>, BundleError> {
    let path = dir.join("trajectory.json");
    if !path.exists() {
        return Ok(None);
    }
    let text = fs::read_to_string(&path).map_err(|e| io_err(&path, e))?;
    let file: TrajectoryFile = serde_json::from_str(&text).map_err(|e| BundleError::ParseAt {
        path: path.clone(),
        offset: json_offset(&text, e.line(), e.column()),
        message: e.to_string(),
    })?;
    Trajectory::new(file.anchors)
        .map(Some)
        .map_err(|e| invariant_err(&path, e))
}

/// Writes `trajectory.json`.
pub fn save_trajectory(dir: &Path, trajectory: &Trajectory) -> Result<(), BundleError> {
    let path = dir.join("trajectory.json");
    let file = TrajectoryFile {
        anchors: trajectory.anchors().to_vec(),
    };
    let json = serde_json::to_string_pretty(&file).expect("trajectory serialize");
    fs::write(&path, json).map_err(|e| io_err(&path, e))
}

/// Loads per-frame object masks from `masks/NNNN_IIII.pgm` if the directory
/// exists. Nonzero pixels are in-mask. Returns one map per frame, keyed by
/// object id; frames without masks get an empty map.
pub fn load_masks(
    dir: &Path,
    n_frames: usize,
) -> Result<Option<Vec<BTreeMap<u32, ObjectMask>>>, BundleError> {
    let masks_dir = dir.join("masks");
    if !masks_dir.is_dir() {
        return Ok(None);
    }
    let mut per_frame: Vec<BTreeMap<u32, ObjectMask>> = vec![BTreeMap::new(); n_frames];
    let entries = fs::read_dir(&masks_dir).map_err(|e| io_err(&masks_dir, e))?;
    for entry in entries {
        let entry = entry.map_err(|e| io_err(&masks_dir, e))?;
        let name = entry.file_name();
        let name = name.to_string_lossy();
        let Some(stem) = name.strip_suffix(".pgm") else {
            continue;
        };
        let parts: Vec<&str> = stem.split('_').collect();
        if parts.len() != 2
            || parts[0].len() != 4
            || !parts[0].bytes().all(|b| b.is_ascii_digit())
            || !parts[1].bytes().all(|b| b.is_ascii_digit())
        {
            return Err(parse_err(
                &entry.path(),
                "mask files must be named NNNN_IIII.pgm (frame index, object id)",
            ));
        }
        let frame: usize = parts[0].parse().unwrap();
        let object_id: u32 = parts[1].parse().map_err(|_| {
            parse_err(&entry.path(), "object id out of range")
        })?;
        if frame >= n_frames {
            return Err(parse_err(
                &entry.path(),
                format!("mask frame {frame} out of range for {n_frames} frame(s)"),
            ));
        }
        let path = entry.path();
        let data = fs::read(&path).map_err(|e| io_err(&path, e))?;
        let img = pnm::parse(&data).map_err(|e| BundleError::ParseAt {
            path: path.clone(),
            offset: e.offset,
            message: e.message,
        })?;
        if img.channels != 1 {
            return Err(parse_err(&path, "masks must be grayscale PGM"));
        }
        let mask = ObjectMask::new(
            img.width,
            img.height,
            img.samples.iter().map(|&s| s > 0).collect(),
        )
        .map_err(|e| invariant_err(&path, e))?;
        per_frame[frame].insert(object_id, mask);
    }
    Ok(Some(per_frame))
}

/// Writes per-frame object masks as `masks/NNNN_IIII.pgm` (255 in-mask,
/// 0 outside).
pub fn save_masks(
    dir: &Path,
    masks: &[BTreeMap<u32, ObjectMask>],
) -> Result<(), BundleError> {
    let masks_dir = dir.join("masks");
    fs::create_dir_all(&masks_dir).map_err(|e| io_err(&masks_dir, e))?;
    for (frame, per_object) in masks.iter().enumerate() {
        for (id, mask) in per_object {
            let path = masks_dir.join(format!("{frame:04}_{id:04}.pgm"));
            let bytes: Vec<u8> = mask
                .samples()
                .iter()
                .map(|&b| if b { 255 } else { 0 })
                .collect();
            let pgm = pnm::encode_pgm8(mask.width(), mask.height(), &bytes);
            fs::write(&path, pgm).map_err(|e| io_err(&path, e))?;
        }
    }
    Ok(())
}
