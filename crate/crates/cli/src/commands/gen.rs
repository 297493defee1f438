//! `gst gen`: generate a grounded QA dataset from one or more bundles.
//!
//! Per scene: objects and room area come from the bundle annotations;
//! per-frame visibility is derived from masks when the bundle ships them;
//! a missing room area is estimated from the aggregated cloud with the
//! alpha-shape estimator; the optional trajectory enables route planning.
//! Scenes are processed in parallel under `--jobs`, and the output file
//! concatenates their samples in input order regardless of job count.

use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use gst_core::gcot::{
    build_frame_metadata, generate_dataset, render_bev, BevImage, CotBackend, GenConfig, QaSample,
    SceneMeta,
};
use gst_core::scene::{bundle_io, compute_room_area};

use crate::commands::{bundle_points, write_file};
use crate::config::{check_gen_config, FileConfig, GenTunables, LlmArgs};
use crate::errors::{usage, CliResult};

#[derive(Debug, clap::Args)]
pub struct GenArgs {
    /// Scene bundle directories.
    #[arg(required = true, value_name = "BUNDLE_DIR")]
    pub bundles: Vec<PathBuf>,
    /// Output dataset file, one JSON sample per line.
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
    /// Also write each scene's rendered bird's-eye view next to the
    /// dataset as `<scene_id>.bev.ppm`.
    #[arg(long)]
    pub save_bev: bool,
    /// Back-project every n-th pixel per axis when a cloud is needed.
    #[arg(long, default_value_t = 1)]
    pub stride: usize,
    #[command(flatten)]
    pub tunables: GenTunables,
    #[command(flatten)]
    pub llm: LlmArgs,
}

/// Everything generated for one scene.
struct SceneOutput {
    samples: Vec<QaSample>,
    bev: Option<(String, BevImage)>,
}

fn gen_scene(
    dir: &Path,
    cfg: &GenConfig,
    backend: &(dyn CotBackend + Sync),
    stride: usize,
    want_bev: bool,
) -> CliResult<SceneOutput> {
    let bundle = bundle_io::load_bundle(dir)?;
    let mut meta = SceneMeta::from_bundle(&bundle);

    // Visibility metadata from masks overrides any annotated values.
    if let Some(masks) = bundle_io::load_masks(dir, bundle.frames.len())? {
        let first = build_frame_metadata(&masks, cfg.visibility_area_px);
        for o in &mut meta.objects {
            o.first_visible_frame = first.get(&o.id).copied();
        }
    }

    // The cloud is needed for a missing room area and for the rendered
    // view; skip the back-projection when neither applies.
    let need_points = meta.room_area.is_none() || want_bev;
    let points = if need_points {
        bundle_points(&bundle, stride)?
    } else {
        Vec::new()
    };
    if meta.room_area.is_none() {
        let area = compute_room_area(&points, cfg.alpha).map_err(|e| usage!("{e}"))?;
        meta.room_area = Some(area);
    }
    let bev = if want_bev {
        let image = render_bev(&points, &meta.objects, 0.05).map_err(|e| usage!("{e}"))?;
        Some((meta.scene_id.clone(), image))
    } else {
        None
    };

    let trajectory = bundle_io::load_trajectory(dir)?;
    let samples = generate_dataset(
        &meta,
        trajectory.as_ref(),
        bev.as_ref().map(|(_, image)| image),
        cfg,
        backend,
    )
    .map_err(|e| usage!("{e}"))?;
    Ok(SceneOutput { samples, bev })
}

pub fn run(args: &GenArgs, file: &FileConfig) -> CliResult<()> {
    let cfg = args.tunables.resolve(&file.gen);
    check_gen_config(&cfg)?;
    let backend = args.llm.resolve(&file.llm)?;
    let backend: &(dyn CotBackend + Sync) = backend.as_ref();

    let outputs: Vec<CliResult<SceneOutput>> = args
        .bundles
        .par_iter()
        .map(|dir| gen_scene(dir, &cfg, backend, args.stride, args.save_bev))
        .collect();

    let mut lines = String::new();
    let mut n_samples = 0usize;
    for (dir, output) in args.bundles.iter().zip(outputs) {
        let output = output.map_err(|e| match e {
            crate::errors::CliError::Usage(e) => {
                crate::errors::CliError::Usage(e.context(dir.display().to_string()))
            }
            crate::errors::CliError::Runtime(e) => {
                crate::errors::CliError::Runtime(e.context(dir.display().to_string()))
            }
        })?;
        for sample in &output.samples {
            let line = serde_json::to_string(sample).expect("sample serializes");
            lines.push_str(&line);
            lines.push('\n');
            n_samples += 1;
        }
        if let Some((scene_id, image)) = &output.bev {
            let dir = args.out.parent().unwrap_or_else(|| Path::new("."));
            write_file(&dir.join(format!("{scene_id}.bev.ppm")), &image.to_ppm())?;
        }
    }
    write_file(&args.out, lines.as_bytes())?;
    let mut stdout = std::io::stdout().lock();
    writeln!(
        stdout,
        "{} sample(s) from {} scene(s), seed {} -> {}",
        n_samples,
        args.bundles.len(),
        cfg.seed,
        args.out.display()
    )?;
    Ok(())
}
