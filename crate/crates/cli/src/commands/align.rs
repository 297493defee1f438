//! `gst align`: solve the metric scale between two point sets.
//!
//! Input is a JSON file with two equal-length point lists:
//!
//! ```json
//! {
//!   "src": [[x, y, z], ...],
//!   "reference": [[x, y, z], ...]
//! }
//! ```
//!
//! `src` comes from the scale-free reconstruction, `reference` from the
//! metric scene; the i-th entries correspond.

use std::path::PathBuf;

use serde::Deserialize;

use gst_core::align::{solve_scale, solve_scale_trimmed, PointPairSet};
use gst_core::scene::Vec3;

use crate::errors::{usage, CliResult};

#[derive(Debug, clap::Args)]
pub struct AlignArgs {
    /// JSON file with "src" and "reference" point lists.
    #[arg(long, value_name = "FILE")]
    pub pairs: PathBuf,
    /// Drop this fraction of the worst-fitting pairs and re-solve.
    #[arg(long)]
    pub trim: Option<f64>,
    /// Print the solution as JSON instead of text.
    #[arg(long)]
    pub json: bool,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct PairsFile {
    src: Vec<[f64; 3]>,
    reference: Vec<[f64; 3]>,
}

pub fn run(args: &AlignArgs) -> CliResult<()> {
    let text =
        std::fs::read_to_string(&args.pairs).map_err(|e| crate::errors::io_at(&args.pairs, e))?;
    let file: PairsFile =
        serde_json::from_str(&text).map_err(|e| usage!("{}: {e}", args.pairs.display()))?;
    let src: Vec<Vec3> = file.src.iter().map(|p| Vec3::from(*p)).collect();
    let reference: Vec<Vec3> = file.reference.iter().map(|p| Vec3::from(*p)).collect();
    if src.len() != reference.len() {
        return Err(usage!(
            "{}: {} src point(s) but {} reference point(s)",
            args.pairs.display(),
            src.len(),
            reference.len()
        ));
    }
    let pairs = PointPairSet::from_slices(&src, &reference).map_err(|e| usage!("{e}"))?;
    let solution = match args.trim {
        Some(frac) => solve_scale_trimmed(&pairs, frac).map_err(|e| usage!("{e}"))?,
        None => solve_scale(&pairs).map_err(|e| usage!("{e}"))?,
    };
    if args.json {
        println!(
            "{}",
            serde_json::to_string(&solution).expect("solution serializes")
        );
    } else {
        println!(
            "scale {:.9} (rms residual {:.6} m over {} pair(s){}{})",
            solution.scale,
            solution.rms_residual,
            pairs.len(),
            match args.trim {
                Some(f) => format!(", trim {f}"),
                None => String::new(),
            },
            if solution.clamped { ", clamped" } else { "" },
        );
    }
    Ok(())
}
