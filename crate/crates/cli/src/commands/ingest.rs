//! `gst ingest`: validate scene bundles and print a summary.

use std::path::PathBuf;

use serde::Serialize;

use gst_core::scene::{bundle_io, AxisAlignment};

use crate::errors::{CliError, CliResult};

#[derive(Debug, clap::Args)]
pub struct IngestArgs {
    /// Scene bundle directories to validate.
    #[arg(required = true, value_name = "BUNDLE_DIR")]
    pub bundles: Vec<PathBuf>,
    /// Print one JSON object per bundle instead of text.
    #[arg(long)]
    pub json: bool,
}

#[derive(Serialize)]
struct Summary {
    scene_id: String,
    frames: usize,
    width: usize,
    height: usize,
    objects: usize,
    /// Total valid depth pixels, i.e. the aggregated point count.
    points: usize,
    axis_align: &'static str,
    has_rgb: bool,
    has_masks: bool,
    has_trajectory: bool,
}

fn summarize(dir: &std::path::Path) -> CliResult<Summary> {
    let bundle = bundle_io::load_bundle(dir)?;
    let masks = bundle_io::load_masks(dir, bundle.frames.len())?;
    let trajectory = bundle_io::load_trajectory(dir)?;
    let points = bundle
        .frames
        .iter()
        .map(|f| f.depth.valid_count())
        .sum::<usize>();
    Ok(Summary {
        scene_id: bundle.scene_id.clone(),
        frames: bundle.frames.len(),
        width: bundle.width(),
        height: bundle.height(),
        objects: bundle.objects.len(),
        points,
        axis_align: match bundle.axis_align {
            AxisAlignment::Unknown => "unknown",
            AxisAlignment::Pending { .. } => "pending",
            AxisAlignment::Applied => "applied",
        },
        has_rgb: bundle.frames.iter().all(|f| f.rgb.is_some()),
        has_masks: masks.is_some(),
        has_trajectory: trajectory.is_some(),
    })
}

pub fn run(args: &IngestArgs) -> CliResult<()> {
    let mut format_failures = 0usize;
    let mut runtime_failures = 0usize;
    for dir in &args.bundles {
        match summarize(dir) {
            Ok(s) => {
                if args.json {
                    println!("{}", serde_json::to_string(&s).expect("summary serializes"));
                } else {
                    println!(
                        "{}: {} frame(s) {}x{}, {} object(s), {} point(s), axis-align {}{}{}{}",
                        s.scene_id,
                        s.frames,
                        s.width,
                        s.height,
                        s.objects,
                        s.points,
                        s.axis_align,
                        if s.has_rgb { ", rgb" } else { "" },
                        if s.has_masks { ", masks" } else { "" },
                        if s.has_trajectory { ", trajectory" } else { "" },
                    );
                }
            }
            // Report every bundle's diagnostic, then fail once with the
            // most severe class: a format violation (exit 2) beats a
            // runtime I/O failure (exit 1), since catching format errors
            // is what ingest is for.
            Err(e) => {
                eprintln!("{}: {e}", dir.display());
                match e {
                    CliError::Usage(_) => format_failures += 1,
                    CliError::Runtime(_) => runtime_failures += 1,
                }
            }
        }
    }
    let failed = format_failures + runtime_failures;
    if failed == 0 {
        Ok(())
    } else {
        let err = anyhow::anyhow!(
            "{failed} of {} bundle(s) failed validation",
            args.bundles.len()
        );
        if format_failures > 0 {
            Err(CliError::Usage(err))
        } else {
            Err(CliError::Runtime(err))
        }
    }
}
