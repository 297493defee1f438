//! Dataset-level evaluation.
//!
//! An evaluation record is a QA sample plus an optional `prediction` — the
//! model's full response text. When `prediction` is absent the sample's own
//! `response` is scored instead, which turns evaluation of a freshly
//! generated dataset into a self-check that must come out perfect.
//!
//! Scoring rules:
//!
//! * A prediction that does not parse under the response grammar earns no
//!   answer credit and no grounding credit (its ground-truth boxes still
//!   count as misses).
//! * Multiple-choice answers score case-insensitive exact match.
//! * Numeric answers score the tolerance-band metric
//!   ([`numeric_score`](super::numeric_score)); an answer that is not a
//!   number scores 0.
//! * Groundings are compared box set against box set per sample under an
//!   optimal one-to-one matching; F1 is micro-averaged over samples.
//!   Samples whose ground truth has exactly one box additionally feed an
//!   accuracy figure.

use serde::{Deserialize, Serialize};

use super::{exact_match, iou3d, match_boxes, numeric_score, EvalError};
use crate::gcot::{Answer, QaSample, Task};
use crate::respond::parse_response;
use crate::scene::Aabb;

/// One line of an evaluation file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    #[serde(flatten)]
    pub sample: QaSample,
    /// Model response; falls back to `sample.response` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prediction: Option<String>,
}

impl EvalRecord {
    /// A record that scores the sample's own stored response.
    pub fn self_scoring(sample: QaSample) -> Self {
        Self {
            sample,
            prediction: None,
        }
    }
}

/// Aggregate answer quality.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnswerSummary {
    /// Mean exact match over multiple-choice samples.
    pub exact_match: f64,
    pub n_multiple_choice: usize,
    /// Mean tolerance-band score over numeric samples.
    pub numeric_score: f64,
    pub n_numeric: usize,
}

/// Aggregate grounding quality (micro-averaged over samples with
/// ground-truth boxes).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundingSummary {
    pub f1_at_25: f64,
    pub f1_at_50: f64,
    /// Accuracy over samples with exactly one ground-truth box.
    pub acc_at_25: f64,
    pub acc_at_50: f64,
    pub n_gt_boxes: usize,
    pub n_pred_boxes: usize,
    /// Samples feeding the accuracy figures.
    pub n_single_box_samples: usize,
}

/// Scores for one task family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskBreakdown {
    pub task: Task,
    pub n: usize,
    /// Mean answer score (exact match or tolerance bands, by task kind).
    pub answer_score: f64,
    /// Micro F1@0.25 of groundings; absent for families without boxes.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub f1_at_25: Option<f64>,
}

/// Full evaluation output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub n_samples: usize,
    pub n_parse_failures: usize,
    /// Mean answer score over all samples (parse failures score 0).
    pub mean_score: f64,
    pub answers: AnswerSummary,
    pub grounding: GroundingSummary,
    pub per_task: Vec<TaskBreakdown>,
}

/// Per-threshold micro counts.
#[derive(Default, Clone, Copy)]
struct MatchCounts {
    tp_25: usize,
    tp_50: usize,
    n_gt: usize,
    n_pred: usize,
}

impl MatchCounts {
    fn add(&mut self, preds: &[Aabb], gts: &[Aabb]) {
        self.n_gt += gts.len();
        self.n_pred += preds.len();
        self.tp_25 += match_boxes(preds, gts, 0.25).len();
        self.tp_50 += match_boxes(preds, gts, 0.5).len();
    }

    fn f1(tp: usize, n_pred: usize, n_gt: usize) -> f64 {
        if n_pred + n_gt == 0 {
            0.0
        } else {
            2.0 * tp as f64 / (n_pred + n_gt) as f64
        }
    }
}

fn flatten_boxes(groundings: &[crate::respond::Grounding]) -> Vec<Aabb> {
    groundings.iter().flat_map(|g| g.boxes.clone()).collect()
}

/// Scores a set of records. Errors only on structurally invalid input
/// (no records, or a numeric sample with a non-positive ground truth);
/// bad *predictions* score zero instead of failing.
pub fn evaluate_records(records: &[EvalRecord]) -> Result<EvalReport, EvalError> {
    if records.is_empty() {
        return Err(EvalError::Empty);
    }
    let mut n_parse_failures = 0usize;
    let mut score_sum = 0.0f64;
    let mut em_sum = 0.0f64;
    let mut n_mc = 0usize;
    let mut num_sum = 0.0f64;
    let mut n_num = 0usize;
    let mut counts = MatchCounts::default();
    let mut single_hits_25 = 0usize;
    let mut single_hits_50 = 0usize;
    let mut single_total = 0usize;
    let mut per_task: std::collections::BTreeMap<Task, (usize, f64, MatchCounts)> =
        std::collections::BTreeMap::new();

    for record in records {
        let sample = &record.sample;
        let text = record.prediction.as_deref().unwrap_or(&sample.response);
        let parsed = match parse_response(text) {
            Ok(p) => Some(p.ast),
            Err(_) => {
                n_parse_failures += 1;
                None
            }
        };

        // Answer credit.
        let gt_text = sample.answer.as_answer_text(sample.task);
        let score = match (&parsed, &sample.answer) {
            (None, _) => 0.0,
            (Some(ast), Answer::Text(_)) => {
                if exact_match(ast.answer(), &gt_text) {
                    1.0
                } else {
                    0.0
                }
            }
            (Some(ast), Answer::Number(gt)) => {
                if !(gt.is_finite() && *gt > 0.0) {
                    return Err(EvalError::BadRecord {
                        id: sample.id.clone(),
                        message: format!("numeric ground truth must be positive, got {gt}"),
                    });
                }
                match ast.answer().trim().parse::<f64>() {
                    Ok(pred) => numeric_score(pred, *gt)?,
                    Err(_) => 0.0,
                }
            }
        };
        score_sum += score;
        match &sample.answer {
            Answer::Text(_) => {
                em_sum += score;
                n_mc += 1;
            }
            Answer::Number(_) => {
                num_sum += score;
                n_num += 1;
            }
        }

        // Grounding credit.
        let gt_boxes = flatten_boxes(&sample.groundings);
        let pred_boxes = parsed
            .as_ref()
            .map(|ast| flatten_boxes(ast.groundings()))
            .unwrap_or_default();
        let entry = per_task
            .entry(sample.task)
            .or_insert((0, 0.0, MatchCounts::default()));
        entry.0 += 1;
        entry.1 += score;
        if !gt_boxes.is_empty() {
            counts.add(&pred_boxes, &gt_boxes);
            entry.2.add(&pred_boxes, &gt_boxes);
            if gt_boxes.len() == 1 {
                single_total += 1;
                let best = pred_boxes
                    .iter()
                    .map(|p| iou3d(p, &gt_boxes[0]))
                    .fold(0.0f64, f64::max);
                if best > 0.25 {
                    single_hits_25 += 1;
                }
                if best > 0.5 {
                    single_hits_50 += 1;
                }
            }
        }
    }

    let n = records.len();
    let report = EvalReport {
        n_samples: n,
        n_parse_failures,
        mean_score: score_sum / n as f64,
        answers: AnswerSummary {
            exact_match: if n_mc > 0 { em_sum / n_mc as f64 } else { 0.0 },
            n_multiple_choice: n_mc,
            numeric_score: if n_num > 0 { num_sum / n_num as f64 } else { 0.0 },
            n_numeric: n_num,
        },
        grounding: GroundingSummary {
            f1_at_25: MatchCounts::f1(counts.tp_25, counts.n_pred, counts.n_gt),
            f1_at_50: MatchCounts::f1(counts.tp_50, counts.n_pred, counts.n_gt),
            acc_at_25: if single_total > 0 {
                single_hits_25 as f64 / single_total as f64
            } else {
                0.0
            },
            acc_at_50: if single_total > 0 {
                single_hits_50 as f64 / single_total as f64
            } else {
                0.0
            },
            n_gt_boxes: counts.n_gt,
            n_pred_boxes: counts.n_pred,
            n_single_box_samples: single_total,
        },
        per_task: per_task
            .into_iter()
            .map(|(task, (count, sum, mc))| TaskBreakdown {
                task,
                n: count,
                answer_score: sum / count as f64,
                f1_at_25: (mc.n_gt > 0).then(|| MatchCounts::f1(mc.tp_25, mc.n_pred, mc.n_gt)),
            })
            .collect(),
    };
    Ok(report)
}
