//! Core library of the grounded scene toolkit.
//!
//! The toolkit turns posed RGB-D captures of indoor scenes into compact
//! spatial representations and question/answer datasets for training and
//! evaluating spatially grounded language models. It is organised as six
//! largely independent modules plus a fixture generator used by the tests
//! and the `gst fixture` subcommand:
//!
//! * [`scene`] — scene bundles on disk, depth back-projection, point
//!   aggregation, gravity/wall axis alignment, and alpha-shape room area.
//! * [`patch`] — Morton-ordered point serialization, a small serialized
//!   attention point encoder, dual-path (semantic-aligned / position-aligned)
//!   pooling, positional encoding, and the fused hybrid patch
//!   representation together with its file formats.
//! * [`respond`] — the grounded response grammar: `<think>` bodies carrying
//!   named, counted bounding-box groundings and a final `<answer>`, with a
//!   canonical emitter and a diagnostic-producing parser.
//! * [`gcot`] — question/answer generators for eight spatial task families,
//!   chain-of-thought assembly, bird's-eye-view rendering, and the
//!   chain-of-thought backend abstraction (mock and HTTP).
//! * [`eval`] — 3D IoU, grounding accuracy/F1 with optimal matching, exact
//!   match, and tolerance-band numeric scoring.
//! * [`align`] — metric scale recovery between point sets and geometric
//!   training augmentation applied consistently to a whole scene bundle.
//!
//! Shared geometric types ([`Aabb`], [`RigidTransform`], …) live in
//! [`scene`] and are re-exported at the crate root.

pub mod align;
pub mod eval;
pub mod fixtures;
pub mod gcot;
pub mod patch;
pub mod respond;
pub mod scene;

pub use align::{AugmentParams, PointPair, PointPairSet, QuarterTurn, ScaleSolution};
pub use eval::{evaluate_records, EvalReport, EvalRecord};
pub use patch::{EncoderConfig, HybridPatchFeature, PatchGrid, SceneFeatures, WeightStore};
pub use respond::{Grounding, ParsedResponse, ResponseAst};
pub use scene::{
    Aabb, AxisAlignment, DepthMap, Intrinsics, ObjectRecord, Pose, RgbImage, RigidTransform,
    SceneBundle,
};
