//! Question/answer generation with grounded chain-of-thought.
//!
//! Eight task families are generated from annotated scene metadata:
//! object counting, absolute distance, object size, room size, relative
//! distance, relative direction, appearance order, and route planning.
//! Three of them — object counting, room size, and appearance order — are
//! answered from holistic scene context and carry no chain-of-thought or
//! groundings; the other five ground every referenced object with its 3D
//! box inside the `<think>` body and walk through the computation step by
//! step.
//!
//! Ground-truth answers are always computed analytically from the scene
//! annotations. A [`CotBackend`](llm::CotBackend) may rewrite the reasoning
//! text; its output is validated (it must parse, must keep the groundings,
//! and must agree with the known answer) and is discarded in favor of a
//! no-chain-of-thought fallback when invalid or unavailable.
//!
//! Generation is deterministic: the same scene, configuration, and seed
//! produce byte-identical samples.

pub mod bev;
mod generators;
pub mod llm;
pub mod templates;

pub use bev::{render_bev, BevImage};
pub use generators::{heading_changes, round_half_up, turn_sequence};
pub use llm::{CotBackend, CotError, CotRequest, HttpCotBackend, MockCotBackend};

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::respond::{parse_response, Grounding, ResponseAst};
use crate::scene::{ObjectMask, ObjectRecord, SceneBundle, Trajectory};

/// Errors raised during generation.
#[derive(Debug, Error)]
pub enum GcotError {
    #[error("invalid generator configuration: {0}")]
    InvalidConfig(String),
    #[error("cannot render a bird's-eye view of an empty point set")]
    EmptyPoints,
    #[error("degenerate geometry: {0}")]
    Degenerate(String),
    #[error("ambiguous spatial relation: {0}")]
    Ambiguous(String),
}

/// The eight task families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    ObjectCount,
    AbsDistance,
    ObjectSize,
    RoomSize,
    RelDistance,
    RelDirection,
    AppearanceOrder,
    RoutePlan,
}

impl Task {
    pub const ALL: [Task; 8] = [
        Task::ObjectCount,
        Task::AbsDistance,
        Task::ObjectSize,
        Task::RoomSize,
        Task::RelDistance,
        Task::RelDirection,
        Task::AppearanceOrder,
        Task::RoutePlan,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Task::ObjectCount => "object_count",
            Task::AbsDistance => "abs_distance",
            Task::ObjectSize => "object_size",
            Task::RoomSize => "room_size",
            Task::RelDistance => "rel_distance",
            Task::RelDirection => "rel_direction",
            Task::AppearanceOrder => "appearance_order",
            Task::RoutePlan => "route_plan",
        }
    }

    /// Whether samples of this family carry grounded chain-of-thought.
    /// Counting, room size, and appearance order are answered from holistic
    /// context instead.
    pub fn uses_cot(self) -> bool {
        !matches!(
            self,
            Task::ObjectCount | Task::RoomSize | Task::AppearanceOrder
        )
    }

    /// Whether the answer is a choice letter rather than a number.
    pub fn is_multiple_choice(self) -> bool {
        matches!(
            self,
            Task::RelDistance | Task::RelDirection | Task::AppearanceOrder | Task::RoutePlan
        )
    }
}

/// A question answer: a choice letter / free text, or a number.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Answer {
    Number(f64),
    Text(String),
}

impl Answer {
    /// The exact text that belongs in the `<answer>` tag.
    pub fn as_answer_text(&self, task: Task) -> String {
        match self {
            Answer::Text(s) => s.clone(),
            Answer::Number(v) => format_numeric_answer(task, *v),
        }
    }
}

/// Formats a numeric answer with the precision the task is scored at:
/// counts and sizes (cm) as integers, distances (m) and areas (m²) with one
/// decimal.
pub fn format_numeric_answer(task: Task, v: f64) -> String {
    match task {
        Task::ObjectCount | Task::ObjectSize => format!("{}", v.round() as i64),
        _ => format!("{v:.1}"),
    }
}

/// One generated QA sample, serialized as a JSON line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QaSample {
    pub id: String,
    pub scene_id: String,
    pub task: Task,
    pub question: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub options: Option<Vec<String>>,
    pub answer: Answer,
    /// Grounded objects referenced by the chain-of-thought (empty for
    /// holistic tasks).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub groundings: Vec<Grounding>,
    /// Reasoning text inside `<think>`, absent for holistic tasks and for
    /// samples whose chain-of-thought generation failed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cot: Option<String>,
    /// The full training response; always parses under the response grammar.
    pub response: String,
    /// Why the chain-of-thought fell back to a direct response, if it did.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cot_error: Option<String>,
}

/// The slice of a scene that generation needs: identity, annotated objects,
/// and optionally the room area. Object boxes are expected in the
/// axis-aligned frame (floor at z = 0).
#[derive(Debug, Clone, PartialEq)]
pub struct SceneMeta {
    pub scene_id: String,
    pub objects: Vec<ObjectRecord>,
    pub room_area: Option<f64>,
}

impl SceneMeta {
    pub fn from_bundle(bundle: &SceneBundle) -> Self {
        Self {
            scene_id: bundle.scene_id.clone(),
            objects: bundle.objects.clone(),
            room_area: bundle.room_area,
        }
    }

    /// Objects grouped by category, categories sorted, members in id order.
    pub fn by_category(&self) -> BTreeMap<&str, Vec<&ObjectRecord>> {
        let mut map: BTreeMap<&str, Vec<&ObjectRecord>> = BTreeMap::new();
        let mut ordered: Vec<&ObjectRecord> = self.objects.iter().collect();
        ordered.sort_by_key(|o| o.id);
        for o in ordered {
            map.entry(o.category.as_str()).or_default().push(o);
        }
        map
    }

    /// Categories with exactly one instance, sorted by category name.
    /// These can be referenced unambiguously in questions.
    pub fn singletons(&self) -> Vec<&ObjectRecord> {
        self.by_category()
            .into_values()
            .filter_map(|v| (v.len() == 1).then(|| v[0]))
            .collect()
    }
}

/// Which side a target lies on, seen from an observer with a facing
/// direction, in the xy-plane.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Left,
    Right,
}

/// Decides left/right via the 2D cross product of the facing vector and
/// the target vector, both anchored at the observer. A cross product with
/// magnitude below `1e-9` (target collinear with the gaze) or a degenerate
/// facing/target vector is an error rather than an arbitrary answer.
pub fn rel_direction(
    observer_xy: [f64; 2],
    facing_xy: [f64; 2],
    target_xy: [f64; 2],
) -> Result<Side, GcotError> {
    let f = [facing_xy[0] - observer_xy[0], facing_xy[1] - observer_xy[1]];
    let t = [target_xy[0] - observer_xy[0], target_xy[1] - observer_xy[1]];
    if (f[0] * f[0] + f[1] * f[1]).sqrt() < 1e-9 {
        return Err(GcotError::Degenerate(
            "observer and facing positions coincide".into(),
        ));
    }
    if (t[0] * t[0] + t[1] * t[1]).sqrt() < 1e-9 {
        return Err(GcotError::Degenerate(
            "observer and target positions coincide".into(),
        ));
    }
    let cross = f[0] * t[1] - f[1] * t[0];
    if cross.abs() < 1e-9 {
        return Err(GcotError::Ambiguous(
            "target is collinear with the gaze direction".into(),
        ));
    }
    Ok(if cross > 0.0 { Side::Left } else { Side::Right })
}

/// First frame index in which each object's mask exceeds `area_thresh_px`
/// pixels. Objects that never do are absent from the result.
pub fn build_frame_metadata(
    masks: &[BTreeMap<u32, ObjectMask>],
    area_thresh_px: usize,
) -> BTreeMap<u32, usize> {
    let mut first: BTreeMap<u32, usize> = BTreeMap::new();
    for (frame, per_object) in masks.iter().enumerate() {
        for (&id, mask) in per_object {
            if mask.area() > area_thresh_px && !first.contains_key(&id) {
                first.insert(id, frame);
            }
        }
    }
    first
}

/// Generator configuration. Defaults follow the toolkit conventions:
/// turns below 15° are straight, masks need more than 500 pixels to count
/// as an appearance, and room contours use a 0.5 m alpha radius.
#[derive(Debug, Clone, PartialEq)]
pub struct GenConfig {
    /// Target number of samples per task family.
    pub per_task: usize,
    pub seed: u64,
    /// Route planning: absolute heading changes below this many degrees are
    /// treated as going straight.
    pub straight_thresh_deg: f64,
    /// Visibility threshold for [`build_frame_metadata`], in pixels.
    pub visibility_area_px: usize,
    /// Alpha radius (meters) when the room area is computed from points.
    pub alpha: f64,
}

impl Default for GenConfig {
    fn default() -> Self {
        Self {
            per_task: 2,
            seed: 0,
            straight_thresh_deg: 15.0,
            visibility_area_px: 500,
            alpha: 0.5,
        }
    }
}

impl GenConfig {
    fn validate(&self) -> Result<(), GcotError> {
        if self.per_task == 0 {
            return Err(GcotError::InvalidConfig("per_task must be >= 1".into()));
        }
        if !(self.straight_thresh_deg > 0.0 && self.straight_thresh_deg < 90.0) {
            return Err(GcotError::InvalidConfig(format!(
                "straight_thresh_deg must lie in (0, 90), got {}",
                self.straight_thresh_deg
            )));
        }
        if !(self.alpha.is_finite() && self.alpha > 0.0) {
            return Err(GcotError::InvalidConfig(format!(
                "alpha must be positive, got {}",
                self.alpha
            )));
        }
        Ok(())
    }
}

/// Emits the canonical grounded response for the given parts. This is the
/// single path by which training responses are constructed, so everything
/// written to a dataset parses under the response grammar by construction.
pub fn assemble_answer(
    analysis: &str,
    groundings: &[Grounding],
    reasoning: &str,
    answer: &str,
) -> String {
    ResponseAst::new(analysis, groundings.to_vec(), reasoning, answer).emit()
}

/// FNV-1a, used to derive stable per-(scene, task) RNG streams and
/// per-tensor weight-initialization seeds.
pub(crate) fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

fn task_seed(seed: u64, scene_id: &str, task: Task) -> u64 {
    let mut key = Vec::with_capacity(scene_id.len() + 16);
    key.extend_from_slice(&seed.to_le_bytes());
    key.extend_from_slice(scene_id.as_bytes());
    key.push(0);
    key.extend_from_slice(task.name().as_bytes());
    fnv1a(&key)
}

/// A generator's output before response assembly.
pub(crate) struct QaDraft {
    pub question: String,
    pub options: Option<Vec<String>>,
    pub answer: Answer,
    pub groundings: Vec<Grounding>,
    /// Opening paragraph of the think body.
    pub analysis: String,
    /// Step-by-step reasoning (empty for holistic tasks, where the analysis
    /// paragraph already states the conclusion).
    pub reasoning: String,
}

/// Generates up to `cfg.per_task` samples for every task family.
///
/// `trajectory` enables route planning; without it that family is skipped.
/// For chain-of-thought families the `backend` may rewrite the reasoning;
/// see the module docs for the validation and fallback rules. Output order
/// is task families in [`Task::ALL`] order, samples in generation order.
pub fn generate_dataset(
    meta: &SceneMeta,
    trajectory: Option<&Trajectory>,
    bev: Option<&BevImage>,
    cfg: &GenConfig,
    backend: &dyn CotBackend,
) -> Result<Vec<QaSample>, GcotError> {
    use rand::SeedableRng;
    cfg.validate()?;
    let mut samples = Vec::new();
    for task in Task::ALL {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(task_seed(
            cfg.seed,
            &meta.scene_id,
            task,
        ));
        let mut seen: HashSet<String> = HashSet::new();
        let mut produced = 0usize;
        let mut attempts = 0usize;
        let max_attempts = cfg.per_task.saturating_mul(20).max(20);
        while produced < cfg.per_task && attempts < max_attempts {
            attempts += 1;
            let draft = generators::generate_one(task, meta, trajectory, cfg, &mut rng)?;
            let Some(draft) = draft else {
                // Family inapplicable to this scene; trying again cannot help
                // for deterministic preconditions, but some generators decline
                // only a specific random pick, so keep sampling.
                if attempts >= max_attempts {
                    break;
                }
                continue;
            };
            if !seen.insert(draft.question.clone()) {
                continue;
            }
            let id = format!("{}:{}:{}", meta.scene_id, task.name(), produced);
            samples.push(finish_sample(id, meta, task, draft, bev, backend));
            produced += 1;
        }
    }
    Ok(samples)
}

/// Assembles the final sample, consulting the chain-of-thought backend for
/// grounded families and validating its output.
fn finish_sample(
    id: String,
    meta: &SceneMeta,
    task: Task,
    mut draft: QaDraft,
    bev: Option<&BevImage>,
    backend: &dyn CotBackend,
) -> QaSample {
    // Quantize grounding boxes exactly as the response emitter will, so the
    // stored groundings and the stored response always agree bit for bit.
    draft.groundings = ResponseAst::new("", std::mem::take(&mut draft.groundings), "", "")
        .groundings()
        .to_vec();
    let answer_text = draft.answer.as_answer_text(task);
    let question_full = match &draft.options {
        Some(opts) => format!("{} {}", draft.question, templates::options_block(opts)),
        None => draft.question.clone(),
    };

    if !task.uses_cot() {
        let response = assemble_answer(&draft.analysis, &[], "", &answer_text);
        return QaSample {
            id,
            scene_id: meta.scene_id.clone(),
            task,
            question: question_full,
            options: draft.options,
            answer: draft.answer,
            groundings: Vec::new(),
            cot: None,
            response,
            cot_error: None,
        };
    }

    let scaffold = assemble_answer(
        &draft.analysis,
        &draft.groundings,
        &draft.reasoning,
        &answer_text,
    );
    let request = CotRequest {
        question: question_full.clone(),
        options: draft.options.clone(),
        answer: answer_text.clone(),
        groundings: draft.groundings.clone(),
        scaffold,
        bev,
    };
    let (response, cot, cot_error) = match backend.generate(&request) {
        Ok(text) => match validate_cot(&text, &request) {
            Ok(ast) => {
                let cot = ast.reasoning().to_string();
                (ast.emit(), Some(cot), None)
            }
            Err(why) => fallback_response(&draft, &answer_text, why),
        },
        Err(e) => fallback_response(&draft, &answer_text, e.to_string()),
    };
    QaSample {
        id,
        scene_id: meta.scene_id.clone(),
        task,
        question: question_full,
        options: draft.options,
        answer: draft.answer,
        groundings: draft.groundings,
        cot,
        response,
        cot_error,
    }
}

fn fallback_response(
    draft: &QaDraft,
    answer_text: &str,
    why: String,
) -> (String, Option<String>, Option<String>) {
    let response = assemble_answer(&draft.analysis, &draft.groundings, "", answer_text);
    (response, None, Some(why))
}

/// Accepts a backend response only if it parses, keeps every requested
/// grounding (same name, count, and boxes), and answers correctly.
fn validate_cot(text: &str, request: &CotRequest<'_>) -> Result<ResponseAst, String> {
    let parsed = parse_response(text).map_err(|e| format!("response does not parse: {e}"))?;
    let ast = parsed.ast;
    if ast.answer().trim() != request.answer.trim() {
        return Err(format!(
            "response answers {:?}, expected {:?}",
            ast.answer(),
            request.answer
        ));
    }
    let normalized: Vec<Grounding> = ResponseAst::new("", request.groundings.clone(), "", "")
        .groundings()
        .to_vec();
    for want in &normalized {
        let found = ast.groundings().iter().any(|g| g == want);
        if !found {
            return Err(format!("response drops or alters the grounding {:?}", want.name));
        }
    }
    Ok(ast)
}
