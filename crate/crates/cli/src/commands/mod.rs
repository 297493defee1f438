//! One module per subcommand.

pub mod align;
pub mod bev;
pub mod encode;
pub mod eval;
pub mod fixture;
pub mod gen;
pub mod ingest;

use std::path::Path;

use gst_core::scene::{aggregate_points, SceneBundle, Vec3};

use crate::errors::{usage, CliResult};

/// Loads the aggregated world-space cloud of a bundle at the given pixel
/// stride (every frame, every `stride`-th pixel per axis).
pub fn bundle_points(bundle: &SceneBundle, stride: usize) -> CliResult<Vec<Vec3>> {
    if stride == 0 {
        return Err(usage!("--stride must be at least 1"));
    }
    aggregate_points(bundle, 1, stride).map_err(|e| usage!("{e}"))
}

/// Writes `bytes` to `path`, creating parent directories.
pub fn write_file(path: &Path, bytes: &[u8]) -> CliResult<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent).map_err(|e| crate::errors::io_at(parent, e))?;
        }
    }
    std::fs::write(path, bytes).map_err(|e| crate::errors::io_at(path, e))
}
