//! `gst encode`: turn a scene bundle into a patch-feature file.

use std::path::PathBuf;

use gst_core::patch::{encode_bundle, WeightStore};
use gst_core::scene::bundle_io;

use crate::config::{EncodeTunables, FileConfig};
use crate::errors::{usage, CliResult};

#[derive(Debug, clap::Args)]
pub struct EncodeArgs {
    /// Scene bundle directory.
    #[arg(value_name = "BUNDLE_DIR")]
    pub bundle: PathBuf,
    /// Output feature file.
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
    /// Weight file to encode with.
    #[arg(long, value_name = "FILE", conflicts_with = "seed_weights")]
    pub weights: Option<PathBuf>,
    /// Initialize weights deterministically from the seed instead of
    /// loading a file.
    #[arg(long)]
    pub seed_weights: bool,
    /// With --seed-weights, also write the generated weights here.
    #[arg(long, value_name = "FILE", requires = "seed_weights")]
    pub save_weights: Option<PathBuf>,
    #[command(flatten)]
    pub tunables: EncodeTunables,
}

pub fn run(args: &EncodeArgs, file: &FileConfig) -> CliResult<()> {
    let cfg = args.tunables.resolve(&file.encode);
    cfg.validate().map_err(|e| usage!("{e}"))?;

    let store = match (&args.weights, args.seed_weights) {
        (Some(path), false) => WeightStore::load(path)?,
        (None, true) => {
            let store = WeightStore::seeded(&cfg)?;
            if let Some(path) = &args.save_weights {
                store.save(path)?;
            }
            store
        }
        (None, false) => {
            return Err(usage!(
                "no weights: pass --weights FILE or --seed-weights"
            ))
        }
        (Some(_), true) => unreachable!("clap rejects --weights with --seed-weights"),
    };

    let bundle = bundle_io::load_bundle(&args.bundle)?;
    let features = encode_bundle(&bundle, &store, &cfg)?;
    features.save(&args.out)?;
    println!(
        "{}: {} token(s) ({} frame(s) x {}x{} patches, dim {}) -> {}",
        bundle.scene_id,
        features.tokens.len(),
        features.n_frames(),
        features.patch_rows,
        features.patch_cols,
        features.dim,
        args.out.display()
    );
    Ok(())
}
