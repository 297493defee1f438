//! `gst fixture`: write the built-in demo scene bundle.
//!
//! The bundle is a four-frame 64x64 RGB-D rendering of a twelve-object
//! room, with masks and a camera trajectory, suitable for exercising the
//! whole pipeline offline.

use std::path::PathBuf;

use gst_core::fixtures;

use crate::errors::{usage, CliResult};

#[derive(Debug, clap::Args)]
pub struct FixtureArgs {
    /// Directory to create the bundle in.
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
    /// Overwrite an existing directory.
    #[arg(long)]
    pub force: bool,
}

pub fn run(args: &FixtureArgs) -> CliResult<()> {
    if args.out.exists() && !args.force {
        return Err(usage!(
            "{} already exists; pass --force to overwrite",
            args.out.display()
        ));
    }
    std::fs::create_dir_all(&args.out).map_err(|e| crate::errors::io_at(&args.out, e))?;
    let bundle = fixtures::write_scene_dir(&args.out)?;
    println!(
        "{}: {} frame(s) {}x{}, {} object(s) -> {}",
        bundle.scene_id,
        bundle.frames.len(),
        bundle.width(),
        bundle.height(),
        bundle.objects.len(),
        args.out.display()
    );
    Ok(())
}
