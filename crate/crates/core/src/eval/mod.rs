//! Evaluation metrics for grounded spatial QA.
//!
//! Grounding quality is scored with 3D IoU between axis-aligned boxes:
//! [`acc_at`] for datasets with one designated box per sample, [`f1_at`]
//! for set-versus-set comparison under an optimal one-to-one matching.
//! Answers are scored with [`exact_match`] (case-insensitive string
//! equality) for multiple choice and [`numeric_score`] (mean of relative
//! tolerance bands) for numeric questions.

mod report;

pub use report::{
    evaluate_records, AnswerSummary, EvalRecord, EvalReport, GroundingSummary, TaskBreakdown,
};

use pathfinding::matrix::Matrix;
use pathfinding::prelude::kuhn_munkres;
use thiserror::Error;

use crate::scene::Aabb;

/// Errors produced by the metric functions.
#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("prediction and ground-truth counts differ: {preds} vs {gts}")]
    LengthMismatch { preds: usize, gts: usize },
    #[error("cannot aggregate over an empty sample set")]
    Empty,
    #[error("IoU threshold must lie in [0, 1), got {0}")]
    InvalidThreshold(f64),
    #[error("numeric ground truth must be positive and finite, got {0}")]
    NonPositiveGroundTruth(f64),
    #[error("invalid record {id}: {message}")]
    BadRecord { id: String, message: String },
}

/// Intersection-over-union of two axis-aligned 3D boxes.
///
/// Touching or disjoint boxes score 0, identical positive-volume boxes
/// score 1. A zero-volume union (two degenerate boxes) scores 0 by
/// convention. The result is symmetric and invariant under any shared
/// rigid transform or uniform scaling of both boxes.
pub fn iou3d(a: &Aabb, b: &Aabb) -> f64 {
    let lo = a.min().sup(&b.min());
    let hi = a.max().inf(&b.max());
    let inter = (hi.x - lo.x).max(0.0) * (hi.y - lo.y).max(0.0) * (hi.z - lo.z).max(0.0);
    let union = a.volume() + b.volume() - inter;
    if union <= 0.0 {
        0.0
    } else {
        inter / union
    }
}

fn check_threshold(thr: f64) -> Result<(), EvalError> {
    if !(0.0..1.0).contains(&thr) || thr.is_nan() {
        return Err(EvalError::InvalidThreshold(thr));
    }
    Ok(())
}

/// Fraction of samples whose predicted box exceeds `thr` IoU with its
/// aligned ground-truth box. Missing predictions (`None`) score zero.
pub fn acc_at(preds: &[Option<Aabb>], gts: &[Aabb], thr: f64) -> Result<f64, EvalError> {
    check_threshold(thr)?;
    if preds.len() != gts.len() {
        return Err(EvalError::LengthMismatch {
            preds: preds.len(),
            gts: gts.len(),
        });
    }
    if gts.is_empty() {
        return Err(EvalError::Empty);
    }
    let hits = preds
        .iter()
        .zip(gts)
        .filter(|(p, g)| p.as_ref().is_some_and(|p| iou3d(p, g) > thr))
        .count();
    Ok(hits as f64 / gts.len() as f64)
}

/// Optimal one-to-one matching between predicted and ground-truth boxes.
///
/// Returns `(pred_index, gt_index, iou)` triples for every matched pair
/// with IoU strictly above `thr`. Among all matchings the result maximizes
/// the number of pairs first and the total IoU second.
pub fn match_boxes(preds: &[Aabb], gts: &[Aabb], thr: f64) -> Vec<(usize, usize, f64)> {
    if preds.is_empty() || gts.is_empty() {
        return Vec::new();
    }
    let n = preds.len().max(gts.len());
    assert!(
        n <= 10_000,
        "match_boxes is sized for per-sample box sets (at most 10k boxes)"
    );
    // Integer weights: a large constant per valid pair makes cardinality
    // dominate, the scaled IoU breaks ties toward higher total overlap.
    const BASE: i64 = 1 << 48;
    const SCALE: f64 = 1e9;
    let mut ious = vec![vec![0.0f64; gts.len()]; preds.len()];
    let weights = Matrix::from_fn(n, n, |(r, c)| {
        if r < preds.len() && c < gts.len() {
            let iou = iou3d(&preds[r], &gts[c]);
            ious[r][c] = iou;
            if iou > thr {
                BASE + (iou * SCALE).round() as i64
            } else {
                0
            }
        } else {
            0
        }
    });
    let (_, assignment) = kuhn_munkres(&weights);
    let mut pairs = Vec::new();
    for (r, &c) in assignment.iter().enumerate() {
        if r < preds.len() && c < gts.len() && ious[r][c] > thr {
            pairs.push((r, c, ious[r][c]));
        }
    }
    pairs
}

/// Set-level grounding F1 at an IoU threshold, under the optimal matching
/// of [`match_boxes`]. When both sides are empty the score is 0 by
/// convention; when only one side is empty it is 0 because precision or
/// recall is 0.
pub fn f1_at(preds: &[Aabb], gts: &[Aabb], thr: f64) -> Result<f64, EvalError> {
    check_threshold(thr)?;
    if preds.is_empty() || gts.is_empty() {
        return Ok(0.0);
    }
    let tp = match_boxes(preds, gts, thr).len() as f64;
    if tp == 0.0 {
        return Ok(0.0);
    }
    let precision = tp / preds.len() as f64;
    let recall = tp / gts.len() as f64;
    Ok(2.0 * precision * recall / (precision + recall))
}

/// Case-insensitive, whitespace-trimmed string equality.
pub fn exact_match(pred: &str, gt: &str) -> bool {
    pred.trim().to_lowercase() == gt.trim().to_lowercase()
}

/// Tolerance-band score for a numeric answer against a positive ground
/// truth: the mean over confidence levels θ ∈ {0.50, 0.55, …, 0.95} of the
/// indicator `|pred - gt| / gt < 1 - θ`. An exact answer scores 1.0, an
/// answer off by a factor of two or worse scores 0.0, and a +20% error
/// scores 0.6. A non-finite prediction scores 0.0.
pub fn numeric_score(pred: f64, gt: f64) -> Result<f64, EvalError> {
    if !(gt.is_finite() && gt > 0.0) {
        return Err(EvalError::NonPositiveGroundTruth(gt));
    }
    let rel = (pred - gt).abs() / gt;
    let hits = (5..=50)
        .step_by(5)
        .filter(|j| rel < *j as f64 / 100.0)
        .count();
    Ok(hits as f64 / 10.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::Vec3;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cube(x: f64, y: f64, z: f64, side: f64) -> Aabb {
        Aabb::new(
            Vec3::new(x, y, z),
            Vec3::new(x + side, y + side, z + side),
        )
        .unwrap()
    }

    fn slab(x0: f64, x1: f64) -> Aabb {
        Aabb::new(Vec3::new(x0, 0.0, 0.0), Vec3::new(x1, 1.0, 1.0)).unwrap()
    }

    #[test]
    fn iou_identical_boxes_is_one() {
        let b = cube(0.0, 0.0, 0.0, 1.0);
        assert_relative_eq!(iou3d(&b, &b), 1.0);
    }

    #[test]
    fn iou_half_shifted_unit_cubes() {
        let a = cube(0.0, 0.0, 0.0, 1.0);
        let b = cube(0.5, 0.0, 0.0, 1.0);
        assert_relative_eq!(iou3d(&a, &b), 0.5 / 1.5, epsilon = 1e-12);
    }

    #[test]
    fn iou_disjoint_and_touching_are_zero() {
        let a = cube(0.0, 0.0, 0.0, 1.0);
        assert_relative_eq!(iou3d(&a, &cube(5.0, 5.0, 5.0, 1.0)), 0.0);
        assert_relative_eq!(iou3d(&a, &cube(1.0, 0.0, 0.0, 1.0)), 0.0);
    }

    #[test]
    fn iou_contained_box() {
        let outer = cube(0.0, 0.0, 0.0, 1.0);
        let inner = cube(0.25, 0.25, 0.25, 0.5);
        assert_relative_eq!(iou3d(&outer, &inner), 0.125, epsilon = 1e-12);
    }

    #[test]
    fn iou_zero_volume_union_is_zero() {
        let flat = Aabb::new(Vec3::zeros(), Vec3::new(1.0, 1.0, 0.0)).unwrap();
        assert_relative_eq!(iou3d(&flat, &flat), 0.0);
    }

    #[test]
    fn iou_symmetric_bounded_and_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..500 {
            let a = cube(
                rng.random_range(-2.0..2.0),
                rng.random_range(-2.0..2.0),
                rng.random_range(-2.0..2.0),
                rng.random_range(0.2..2.0),
            );
            let b = cube(
                rng.random_range(-2.0..2.0),
                rng.random_range(-2.0..2.0),
                rng.random_range(-2.0..2.0),
                rng.random_range(0.2..2.0),
            );
            let iou = iou3d(&a, &b);
            assert!((0.0..=1.0).contains(&iou));
            assert_relative_eq!(iou, iou3d(&b, &a));
            // Shared translation and uniform scaling do not change IoU.
            let t = Vec3::new(
                rng.random_range(-3.0..3.0),
                rng.random_range(-3.0..3.0),
                rng.random_range(-3.0..3.0),
            );
            let s: f64 = rng.random_range(0.5..2.0);
            let map = |b: &Aabb| {
                Aabb::new(s * (b.min() + t), s * (b.max() + t)).unwrap()
            };
            assert_relative_eq!(iou3d(&map(&a), &map(&b)), iou, epsilon = 1e-9);
        }
    }

    #[test]
    fn acc_counts_hits_above_threshold() {
        let gts = vec![cube(0.0, 0.0, 0.0, 1.0), cube(2.0, 0.0, 0.0, 1.0), cube(4.0, 0.0, 0.0, 1.0)];
        let preds = vec![
            Some(cube(0.0, 0.0, 0.0, 1.0)),       // IoU 1.0
            Some(cube(2.5, 0.0, 0.0, 1.0)),       // IoU 1/3
            None,
        ];
        assert_relative_eq!(acc_at(&preds, &gts, 0.25).unwrap(), 2.0 / 3.0);
        assert_relative_eq!(acc_at(&preds, &gts, 0.5).unwrap(), 1.0 / 3.0);
    }

    #[test]
    fn acc_validates_inputs() {
        let gts = vec![cube(0.0, 0.0, 0.0, 1.0)];
        assert_eq!(
            acc_at(&[], &gts, 0.5).unwrap_err(),
            EvalError::LengthMismatch { preds: 0, gts: 1 }
        );
        assert_eq!(acc_at(&[], &[], 0.5).unwrap_err(), EvalError::Empty);
        assert_eq!(
            acc_at(&[None], &gts, 1.5).unwrap_err(),
            EvalError::InvalidThreshold(1.5)
        );
    }

    #[test]
    fn f1_worked_example() {
        // Two predictions, three ground truths, exactly one valid pair:
        // precision 1/2, recall 1/3, F1 = 0.4.
        let gts = vec![slab(0.0, 1.0), slab(10.0, 11.0), slab(20.0, 21.0)];
        let preds = vec![slab(0.1, 1.1), slab(40.0, 41.0)];
        assert_relative_eq!(f1_at(&preds, &gts, 0.5).unwrap(), 0.4, epsilon = 1e-12);
    }

    #[test]
    fn f1_empty_side_conventions() {
        let b = vec![cube(0.0, 0.0, 0.0, 1.0)];
        assert_relative_eq!(f1_at(&[], &[], 0.5).unwrap(), 0.0);
        assert_relative_eq!(f1_at(&b, &[], 0.5).unwrap(), 0.0);
        assert_relative_eq!(f1_at(&[], &b, 0.5).unwrap(), 0.0);
    }

    #[test]
    fn f1_perfect_prediction_is_one() {
        let gts = vec![slab(0.0, 1.0), slab(5.0, 6.5), slab(9.0, 9.5)];
        assert_relative_eq!(f1_at(&gts, &gts, 0.5).unwrap(), 1.0);
    }

    #[test]
    fn matching_is_globally_optimal_not_greedy() {
        // P1 overlaps G1 (0.429) and G2 (0.333); P2 overlaps G1 strongly
        // (0.818) and G2 below threshold. Greedy in prediction order pairs
        // P1 with G1 and strands P2; the optimal matching keeps both.
        let gts = vec![slab(0.0, 1.0), slab(0.9, 1.9)];
        let preds = vec![slab(0.4, 1.4), slab(0.1, 1.1)];
        let pairs = match_boxes(&preds, &gts, 0.25);
        assert_eq!(pairs.len(), 2);
        assert_relative_eq!(f1_at(&preds, &gts, 0.25).unwrap(), 1.0);
    }

    #[test]
    fn matching_ties_break_toward_higher_iou() {
        // One prediction, two eligible ground truths; the higher-IoU pair
        // must win the tie on cardinality.
        let gts = vec![slab(0.0, 1.0), slab(0.55, 1.0)];
        let preds = vec![slab(0.0, 0.95)];
        let pairs = match_boxes(&preds, &gts, 0.3);
        assert_eq!(pairs.len(), 1);
        assert_eq!(pairs[0].1, 0, "should match the higher-IoU ground truth");
        assert!(pairs[0].2 > 0.9);
    }

    #[test]
    fn f1_monotone_in_threshold() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let gts: Vec<Aabb> = (0..4)
                .map(|_| {
                    cube(
                        rng.random_range(-2.0..2.0),
                        rng.random_range(-2.0..2.0),
                        0.0,
                        rng.random_range(0.5..1.5),
                    )
                })
                .collect();
            let preds: Vec<Aabb> = gts
                .iter()
                .map(|g| {
                    let jitter = rng.random_range(-0.4..0.4);
                    Aabb::new(
                        g.min() + Vec3::new(jitter, 0.0, 0.0),
                        g.max() + Vec3::new(jitter, 0.0, 0.0),
                    )
                    .unwrap()
                })
                .collect();
            let f25 = f1_at(&preds, &gts, 0.25).unwrap();
            let f50 = f1_at(&preds, &gts, 0.5).unwrap();
            assert!(f50 <= f25 + 1e-12, "f1@50 {f50} > f1@25 {f25}");
        }
    }

    #[test]
    fn exact_match_examples() {
        assert!(exact_match("Brown", "brown"));
        assert!(exact_match("  A ", "a"));
        assert!(!exact_match("brown", "browne"));
        assert!(!exact_match("", "a"));
    }

    #[test]
    fn numeric_score_examples() {
        assert_relative_eq!(numeric_score(5.0, 5.0).unwrap(), 1.0);
        assert_relative_eq!(numeric_score(10.0, 5.0).unwrap(), 0.0);
        assert_relative_eq!(numeric_score(6.0, 5.0).unwrap(), 0.6);
        assert_relative_eq!(numeric_score(0.0, 5.0).unwrap(), 0.0);
        assert_relative_eq!(numeric_score(f64::NAN, 5.0).unwrap(), 0.0);
    }

    #[test]
    fn numeric_score_rejects_bad_ground_truth() {
        assert!(numeric_score(1.0, 0.0).is_err());
        assert!(numeric_score(1.0, -2.0).is_err());
        assert!(numeric_score(1.0, f64::INFINITY).is_err());
    }

    #[test]
    fn numeric_score_monotone_in_error() {
        let gt = 7.0;
        let mut last = 1.0;
        for k in 0..30 {
            let pred = gt * (1.0 + 0.04 * k as f64);
            let s = numeric_score(pred, gt).unwrap();
            assert!(s <= last + 1e-12);
            last = s;
        }
    }
}
