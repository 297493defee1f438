//! Layered configuration: flags override environment variables, which
//! override the TOML config file, which overrides built-in defaults.
//!
//! The file format (all sections and keys optional):
//!
//! ```toml
//! [encode]                  # encoder tunables, same names as `--help`
//! patch_size = 16
//! k_samp = 64
//! seed = 0
//!
//! [gen]
//! seed = 0
//! per_task = 2
//! straight_thresh_deg = 15.0
//! visibility_area_px = 500
//! alpha = 0.5
//!
//! [llm]
//! backend = "mock"          # "mock" or "http"
//! url = "http://localhost:8080/cot"
//! key = "secret"
//!
//! [bev]
//! resolution = 0.05         # meters per pixel
//! ```
//!
//! Environment variables: `GST_LLM_URL` and `GST_LLM_KEY` sit between the
//! `--llm-url`/`--llm-key` flags and the `[llm]` section.

use std::path::Path;

use serde::Deserialize;

use gst_core::gcot::{CotBackend, GenConfig, HttpCotBackend, MockCotBackend};
use gst_core::patch::EncoderConfig;

use crate::errors::{usage, CliError, CliResult};

/// `[gen]` section; `None` falls through to the built-in default.
#[derive(Debug, Default, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenSection {
    pub seed: Option<u64>,
    pub per_task: Option<usize>,
    pub straight_thresh_deg: Option<f64>,
    pub visibility_area_px: Option<usize>,
    pub alpha: Option<f64>,
}

/// `[llm]` section.
#[derive(Debug, Default, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LlmSection {
    pub backend: Option<Backend>,
    pub url: Option<String>,
    pub key: Option<String>,
}

/// `[bev]` section.
#[derive(Debug, Default, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BevSection {
    pub resolution: Option<f64>,
}

/// The whole config file.
#[derive(Debug, Default, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    #[serde(default)]
    pub encode: EncoderConfig,
    #[serde(default)]
    pub gen: GenSection,
    #[serde(default)]
    pub llm: LlmSection,
    #[serde(default)]
    pub bev: BevSection,
}

impl FileConfig {
    /// Loads `path`, or returns defaults when no file was given.
    pub fn load(path: Option<&Path>) -> CliResult<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| crate::errors::io_at(path, e))?;
        toml::from_str(&text)
            .map_err(|e| usage!("{}: {e}", path.display()))
    }
}

/// Chain-of-thought backend choice.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Backend {
    /// Offline scaffold echo; fully deterministic.
    Mock,
    /// JSON-over-HTTP endpoint.
    Http,
}

/// Flag-level LLM selection shared by subcommands that generate text.
#[derive(Debug, Clone, clap::Args)]
pub struct LlmArgs {
    /// Chain-of-thought backend.
    #[arg(long = "llm", value_enum)]
    pub backend: Option<Backend>,
    /// Endpoint URL for the http backend (also `GST_LLM_URL`).
    #[arg(long)]
    pub llm_url: Option<String>,
    /// Bearer token for the http backend (also `GST_LLM_KEY`).
    #[arg(long)]
    pub llm_key: Option<String>,
}

impl LlmArgs {
    /// Resolves the backend with flag > env > file precedence.
    pub fn resolve(&self, file: &LlmSection) -> CliResult<Box<dyn CotBackend + Sync>> {
        let backend = self
            .backend
            .or(file.backend)
            .unwrap_or(Backend::Mock);
        match backend {
            Backend::Mock => Ok(Box::new(MockCotBackend)),
            Backend::Http => {
                let url = self
                    .llm_url
                    .clone()
                    .or_else(|| std::env::var("GST_LLM_URL").ok())
                    .or_else(|| file.url.clone())
                    .ok_or_else(|| {
                        usage!("--llm http needs a URL (--llm-url, GST_LLM_URL, or [llm].url)")
                    })?;
                let key = self
                    .llm_key
                    .clone()
                    .or_else(|| std::env::var("GST_LLM_KEY").ok())
                    .or_else(|| file.key.clone());
                Ok(Box::new(HttpCotBackend::new(url, key)))
            }
        }
    }
}

/// Generator tunables as flags; `None` falls back to the config file, then
/// to the built-in defaults.
#[derive(Debug, Clone, clap::Args)]
pub struct GenTunables {
    /// Generation seed; every run with the same seed and inputs produces
    /// identical output.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Samples to generate per task family.
    #[arg(long)]
    pub per_task: Option<usize>,
    /// Heading changes below this many degrees count as going straight.
    #[arg(long)]
    pub straight_thresh_deg: Option<f64>,
    /// Mask area (pixels) an object needs to count as visible in a frame.
    #[arg(long)]
    pub visibility_area_px: Option<usize>,
    /// Alpha radius in meters for room-area estimation.
    #[arg(long)]
    pub alpha: Option<f64>,
}

impl GenTunables {
    pub fn resolve(&self, file: &GenSection) -> GenConfig {
        let d = GenConfig::default();
        GenConfig {
            per_task: self.per_task.or(file.per_task).unwrap_or(d.per_task),
            seed: self.seed.or(file.seed).unwrap_or(d.seed),
            straight_thresh_deg: self
                .straight_thresh_deg
                .or(file.straight_thresh_deg)
                .unwrap_or(d.straight_thresh_deg),
            visibility_area_px: self
                .visibility_area_px
                .or(file.visibility_area_px)
                .unwrap_or(d.visibility_area_px),
            alpha: self.alpha.or(file.alpha).unwrap_or(d.alpha),
        }
    }
}

/// Encoder tunables as flags, layered over the `[encode]` section.
#[derive(Debug, Clone, clap::Args)]
pub struct EncodeTunables {
    /// Sampling / weight-initialization seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Patch side length in pixels; frames must divide evenly.
    #[arg(long)]
    pub patch_size: Option<usize>,
    /// Points sampled per patch.
    #[arg(long)]
    pub k_samp: Option<usize>,
    /// Output feature width (must be divisible by 6).
    #[arg(long)]
    pub d_out: Option<usize>,
}

impl EncodeTunables {
    pub fn resolve(&self, file: &EncoderConfig) -> EncoderConfig {
        let mut cfg = file.clone();
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(p) = self.patch_size {
            cfg.patch_size = p;
        }
        if let Some(k) = self.k_samp {
            cfg.k_samp = k;
        }
        if let Some(d) = self.d_out {
            cfg.d_out = d;
        }
        cfg
    }
}

/// Validates a GenConfig, mapping the core error onto a usage error.
pub fn check_gen_config(cfg: &GenConfig) -> CliResult<()> {
    // The generator validates on entry; surface the same failure early with
    // the usage exit class by running a cheap dry call. GenConfig keeps its
    // validation private, so re-state the two flag-reachable conditions.
    if cfg.per_task == 0 {
        return Err(usage!("--per-task must be at least 1"));
    }
    if !(cfg.straight_thresh_deg > 0.0 && cfg.straight_thresh_deg < 90.0) {
        return Err(usage!(
            "--straight-thresh-deg must lie in (0, 90), got {}",
            cfg.straight_thresh_deg
        ));
    }
    if !(cfg.alpha.is_finite() && cfg.alpha > 0.0) {
        return Err(usage!("--alpha must be positive, got {}", cfg.alpha));
    }
    Ok(())
}

/// Builds the global rayon pool honoring `--jobs`.
pub fn init_jobs(jobs: Option<usize>) -> CliResult<()> {
    if let Some(n) = jobs {
        if n == 0 {
            return Err(usage!("--jobs must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::runtime(anyhow::anyhow!("thread pool: {e}")))?;
    }
    Ok(())
}
