//! `gst bev`: render a bird's-eye view of a scene bundle as a PPM image.

use std::path::PathBuf;

use gst_core::gcot::render_bev;
use gst_core::scene::bundle_io;

use crate::commands::{bundle_points, write_file};
use crate::config::FileConfig;
use crate::errors::{usage, CliResult};

#[derive(Debug, clap::Args)]
pub struct BevArgs {
    /// Scene bundle directory.
    #[arg(value_name = "BUNDLE_DIR")]
    pub bundle: PathBuf,
    /// Output PPM image.
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
    /// Meters per pixel.
    #[arg(long)]
    pub resolution: Option<f64>,
    /// Back-project every n-th pixel per axis.
    #[arg(long, default_value_t = 1)]
    pub stride: usize,
}

pub fn run(args: &BevArgs, file: &FileConfig) -> CliResult<()> {
    let resolution = args
        .resolution
        .or(file.bev.resolution)
        .unwrap_or(0.05);
    if !(resolution.is_finite() && resolution > 0.0) {
        return Err(usage!("--resolution must be positive, got {resolution}"));
    }
    let bundle = bundle_io::load_bundle(&args.bundle)?;
    let points = bundle_points(&bundle, args.stride)?;
    let image = render_bev(&points, &bundle.objects, resolution).map_err(|e| usage!("{e}"))?;
    write_file(&args.out, &image.to_ppm())?;
    println!(
        "{}: {}x{} px at {} m/px, {} object box(es) -> {}",
        bundle.scene_id,
        image.width,
        image.height,
        resolution,
        bundle.objects.len(),
        args.out.display()
    );
    Ok(())
}
