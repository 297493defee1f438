//! Per-task sample generators.
//!
//! Every generator is a pure function of the scene metadata and the RNG
//! stream it is handed; an `Ok(None)` means the current pick (or the whole
//! family) is not applicable to the scene, and the driver simply moves on.
//! Ground-truth answers are computed analytically from the annotated boxes,
//! never sampled.

use nalgebra::Vector3;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::templates::{self, fill, option_letter};
use super::{Answer, GcotError, GenConfig, QaDraft, SceneMeta, Side, Task};
use crate::respond::Grounding;
use crate::scene::{ObjectRecord, Trajectory};

/// Rounds `x` to `k` decimal places with half-up tie-breaking (0.05 → 0.1
/// at one decimal), matching how reference answers are reported.
pub fn round_half_up(x: f64, k: u32) -> f64 {
    let scale = 10f64.powi(k as i32);
    (x * scale + 0.5).floor() / scale
}

fn center(o: &ObjectRecord) -> Vector3<f64> {
    o.bbox.center()
}

fn fmt_point(p: &Vector3<f64>) -> String {
    format!("({:.3}, {:.3}, {:.3})", p.x, p.y, p.z)
}

fn grounding_for(o: &ObjectRecord) -> Grounding {
    Grounding {
        name: o.category.clone(),
        count: 1,
        boxes: vec![o.bbox],
    }
}

pub(crate) fn generate_one(
    task: Task,
    meta: &SceneMeta,
    trajectory: Option<&Trajectory>,
    cfg: &GenConfig,
    rng: &mut ChaCha8Rng,
) -> Result<Option<QaDraft>, GcotError> {
    match task {
        Task::ObjectCount => gen_object_count(meta, rng),
        Task::AbsDistance => gen_abs_distance(meta, rng),
        Task::ObjectSize => gen_object_size(meta, rng),
        Task::RoomSize => gen_room_size(meta),
        Task::RelDistance => gen_rel_distance(meta, rng),
        Task::RelDirection => gen_rel_direction(meta, rng),
        Task::AppearanceOrder => gen_appearance_order(meta, rng),
        Task::RoutePlan => gen_route_plan(meta, trajectory, cfg, rng),
    }
}

/// Counting: asks about a category with at least two instances so the
/// answer is informative. Holistic (no chain-of-thought).
fn gen_object_count(meta: &SceneMeta, rng: &mut ChaCha8Rng) -> Result<Option<QaDraft>, GcotError> {
    let cats = meta.by_category();
    let eligible: Vec<(&str, usize)> = cats
        .iter()
        .filter(|(_, v)| v.len() >= 2)
        .map(|(c, v)| (*c, v.len()))
        .collect();
    if eligible.is_empty() {
        return Ok(None);
    }
    let (cat, n) = eligible[rng.random_range(0..eligible.len())];
    let question = fill(templates::OBJECT_COUNT_Q, &[("category", cat)]);
    let analysis = format!(
        "The question is asking how many {cat}(s) are in the room. To solve this, I can rely on the overall layout observed across the video rather than grounding one particular object.\n\nFrom the video, there are {n} {cat}(s) in the room."
    );
    Ok(Some(QaDraft {
        question,
        options: None,
        answer: Answer::Number(n as f64),
        groundings: Vec::new(),
        analysis,
        reasoning: String::new(),
    }))
}

/// Absolute distance between the box centers of two uniquely identifiable
/// objects, in meters rounded to one decimal.
fn gen_abs_distance(meta: &SceneMeta, rng: &mut ChaCha8Rng) -> Result<Option<QaDraft>, GcotError> {
    let singles = meta.singletons();
    if singles.len() < 2 {
        return Ok(None);
    }
    let picks = rand::seq::index::sample(rng, singles.len(), 2);
    let (a, b) = (singles[picks.index(0)], singles[picks.index(1)]);
    let (ca, cb) = (center(a), center(b));
    let d = (ca - cb).norm();
    let rounded = round_half_up(d, 1);
    if rounded <= 0.0 {
        return Ok(None);
    }
    let (an, bn) = (a.category.as_str(), b.category.as_str());
    let question = fill(templates::ABS_DISTANCE_Q, &[("a", an), ("b", bn)]);
    let ans_text = format!("{rounded:.1}");
    let delta = ca - cb;
    let analysis = format!(
        "The question is asking for the distance between the {an} and the {bn} in meters. To solve this, I can identify the two objects and their 3D bounding boxes first."
    );
    let reasoning = format!(
        "Step 1: Compute the center of each bounding box. The {an} center is {} and the {bn} center is {}.\nStep 2: Apply the distance formula. sqrt(({:.3})^2 + ({:.3})^2 + ({:.3})^2) = {:.3} m.\n\nRounded to one decimal place, the distance between the {an} and the {bn} is {ans_text} m.",
        fmt_point(&ca),
        fmt_point(&cb),
        delta.x,
        delta.y,
        delta.z,
        d,
    );
    Ok(Some(QaDraft {
        question,
        options: None,
        answer: Answer::Number(rounded),
        groundings: vec![grounding_for(a), grounding_for(b)],
        analysis,
        reasoning,
    }))
}

/// Size of a uniquely identifiable object: the diagonal of its 3D box, in
/// centimeters rounded to an integer.
fn gen_object_size(meta: &SceneMeta, rng: &mut ChaCha8Rng) -> Result<Option<QaDraft>, GcotError> {
    let singles = meta.singletons();
    if singles.is_empty() {
        return Ok(None);
    }
    let o = singles[rng.random_range(0..singles.len())];
    let e = o.bbox.extents();
    let diag_m = o.bbox.diagonal();
    let cm = round_half_up(diag_m * 100.0, 0);
    if cm < 1.0 {
        return Ok(None);
    }
    let cat = o.category.as_str();
    let question = fill(templates::OBJECT_SIZE_Q, &[("category", cat)]);
    let ans_text = format!("{}", cm as i64);
    let analysis = format!(
        "The question is asking for the size of the {cat} in centimeters. To solve this, I can identify the object and its 3D bounding box first."
    );
    let reasoning = format!(
        "Step 1: Read off the box extents. The {cat} measures {:.3} m by {:.3} m by {:.3} m.\nStep 2: Compute the diagonal. sqrt(({:.3})^2 + ({:.3})^2 + ({:.3})^2) = {:.3} m, which is {:.1} cm.\n\nRounded to the nearest centimeter, the size of the {cat} is {ans_text} cm.",
        e.x, e.y, e.z, e.x, e.y, e.z, diag_m, diag_m * 100.0,
    );
    Ok(Some(QaDraft {
        question,
        options: None,
        answer: Answer::Number(cm),
        groundings: vec![grounding_for(o)],
        analysis,
        reasoning,
    }))
}

/// Room floor area in square meters, one decimal. Holistic; requires the
/// metadata to carry an area (annotated or precomputed from points).
fn gen_room_size(meta: &SceneMeta) -> Result<Option<QaDraft>, GcotError> {
    let Some(area) = meta.room_area else {
        return Ok(None);
    };
    let rounded = round_half_up(area, 1);
    if rounded <= 0.0 {
        return Ok(None);
    }
    let question = templates::ROOM_SIZE_Q.to_string();
    let analysis = format!(
        "The question is asking for the size of the room in square meters. To solve this, I can rely on the overall extent of the floor seen across the video rather than grounding one particular object.\n\nFrom the video, the room size is about {rounded:.1} m²."
    );
    Ok(Some(QaDraft {
        question,
        options: None,
        answer: Answer::Number(rounded),
        groundings: Vec::new(),
        analysis,
        reasoning: String::new(),
    }))
}

/// Multiple choice: which candidate object is closest to an anchor object.
/// All referenced objects are uniquely identifiable; near-ties are skipped
/// so the key is unambiguous.
fn gen_rel_distance(meta: &SceneMeta, rng: &mut ChaCha8Rng) -> Result<Option<QaDraft>, GcotError> {
    let singles = meta.singletons();
    if singles.len() < 4 {
        return Ok(None);
    }
    let n_options = (singles.len() - 1).clamp(3, 4);
    let picks = rand::seq::index::sample(rng, singles.len(), n_options + 1);
    let anchor = singles[picks.index(0)];
    let candidates: Vec<&ObjectRecord> =
        (1..=n_options).map(|i| singles[picks.index(i)]).collect();
    let ca = center(anchor);
    let dists: Vec<f64> = candidates.iter().map(|o| (center(o) - ca).norm()).collect();
    let mut order: Vec<usize> = (0..dists.len()).collect();
    order.sort_by(|&i, &j| dists[i].total_cmp(&dists[j]));
    if dists[order[1]] - dists[order[0]] < 0.05 {
        return Ok(None);
    }
    let best = order[0];
    let anchor_name = anchor.category.as_str();
    let question = fill(templates::REL_DISTANCE_Q, &[("anchor", anchor_name)]);
    let options: Vec<String> = candidates.iter().map(|o| o.category.clone()).collect();
    let letter = option_letter(best);
    let analysis = format!(
        "The question is asking which of the listed objects is closest to the {anchor_name}. To solve this, I can identify all relevant objects and their 3D bounding boxes first."
    );
    let mut steps = format!(
        "Step 1: Locate the {anchor_name}; its bounding-box center is {}.\nStep 2: Compute the distance from the {anchor_name} to each candidate.",
        fmt_point(&ca)
    );
    for (o, d) in candidates.iter().zip(&dists) {
        steps.push_str(&format!(
            "\nThe {} center is {}, at a distance of {:.3} m.",
            o.category,
            fmt_point(&center(o)),
            d
        ));
    }
    steps.push_str(&format!(
        "\n\nThe smallest distance is {:.3} m, for the {}. Option {letter} is correct.",
        dists[best], candidates[best].category
    ));
    let mut groundings = vec![grounding_for(anchor)];
    groundings.extend(candidates.iter().map(|o| grounding_for(o)));
    Ok(Some(QaDraft {
        question,
        options: Some(options),
        answer: Answer::Text(letter),
        groundings,
        analysis,
        reasoning: steps,
    }))
}

/// Multiple choice left/right: stand at one object, face a second, decide
/// which side a third is on via the 2D cross product.
fn gen_rel_direction(meta: &SceneMeta, rng: &mut ChaCha8Rng) -> Result<Option<QaDraft>, GcotError> {
    let singles = meta.singletons();
    if singles.len() < 3 {
        return Ok(None);
    }
    let picks = rand::seq::index::sample(rng, singles.len(), 3);
    let observer = singles[picks.index(0)];
    let facing = singles[picks.index(1)];
    let target = singles[picks.index(2)];
    let (co, cf, ct) = (center(observer), center(facing), center(target));
    let side = match super::rel_direction([co.x, co.y], [cf.x, cf.y], [ct.x, ct.y]) {
        Ok(side) => side,
        Err(_) => return Ok(None),
    };
    let (on, fnm, tn) = (
        observer.category.as_str(),
        facing.category.as_str(),
        target.category.as_str(),
    );
    let question = fill(
        templates::REL_DIRECTION_Q,
        &[("observer", on), ("facing", fnm), ("target", tn)],
    );
    let options = vec!["left".to_string(), "right".to_string()];
    let (letter, word) = match side {
        Side::Left => ("A".to_string(), "left"),
        Side::Right => ("B".to_string(), "right"),
    };
    let fv = [cf.x - co.x, cf.y - co.y];
    let tv = [ct.x - co.x, ct.y - co.y];
    let cross = fv[0] * tv[1] - fv[1] * tv[0];
    let sign_word = if cross > 0.0 { "positive" } else { "negative" };
    let analysis = format!(
        "The question is asking for the relative direction of the {tn} with respect to my position at the {on} while facing the {fnm}. To solve this, I can identify all relevant objects and their 3D bounding boxes first."
    );
    let reasoning = format!(
        "Step 1: Determine my facing direction. Standing at the {on}, whose center is {}, and facing the {fnm}, whose center is {}, the facing vector on the floor plane is ({:.3}, {:.3}).\nStep 2: Locate the {tn}. Its center is {}, so the target vector from my position is ({:.3}, {:.3}).\nStep 3: The cross product of the facing vector and the target vector is {:.3}, which is {sign_word}, so the {tn} lies to my {word}.\n\nTherefore the {tn} is to the {word} of the {fnm}. Option {letter} is correct.",
        fmt_point(&co),
        fmt_point(&cf),
        fv[0],
        fv[1],
        fmt_point(&ct),
        tv[0],
        tv[1],
        cross,
    );
    Ok(Some(QaDraft {
        question,
        options: Some(options),
        answer: Answer::Text(letter),
        groundings: vec![grounding_for(observer), grounding_for(facing), grounding_for(target)],
        analysis,
        reasoning,
    }))
}

/// Multiple choice: the order in which four categories first become clearly
/// visible. Holistic (no chain-of-thought); requires visibility metadata.
fn gen_appearance_order(
    meta: &SceneMeta,
    rng: &mut ChaCha8Rng,
) -> Result<Option<QaDraft>, GcotError> {
    let singles: Vec<&ObjectRecord> = meta
        .singletons()
        .into_iter()
        .filter(|o| o.first_visible_frame.is_some())
        .collect();
    if singles.len() < 4 {
        return Ok(None);
    }
    let picks = rand::seq::index::sample(rng, singles.len(), 4);
    let chosen: Vec<&ObjectRecord> = (0..4).map(|i| singles[picks.index(i)]).collect();
    let mut frames: Vec<usize> = chosen
        .iter()
        .map(|o| o.first_visible_frame.expect("filtered above"))
        .collect();
    frames.sort_unstable();
    frames.dedup();
    if frames.len() < 4 {
        // Two picks surface in the same frame; the order would be arbitrary.
        return Ok(None);
    }
    let mut order: Vec<usize> = (0..4).collect();
    order.sort_by_key(|&i| chosen[i].first_visible_frame.expect("filtered above"));
    let correct: Vec<&str> = order.iter().map(|&i| chosen[i].category.as_str()).collect();
    let correct_text = correct.join(", ");

    let mut distractors: Vec<String> = Vec::new();
    let mut perm: Vec<&str> = correct.clone();
    let mut guard = 0;
    while distractors.len() < 3 && guard < 64 {
        guard += 1;
        perm.shuffle(rng);
        let text = perm.join(", ");
        if text != correct_text && !distractors.contains(&text) {
            distractors.push(text);
        }
    }
    if distractors.len() < 3 {
        return Ok(None);
    }
    let mut options = vec![correct_text.clone()];
    options.extend(distractors);
    options.shuffle(rng);
    let best = options.iter().position(|o| *o == correct_text).expect("present");
    let letter = option_letter(best);

    let list: Vec<&str> = chosen.iter().map(|o| o.category.as_str()).collect();
    let question = fill(templates::APPEARANCE_ORDER_Q, &[("list", &list.join(", "))]);
    let analysis = format!(
        "The question is asking in which order the listed categories first appear in the video. To solve this, I can rely on when each object first becomes clearly visible rather than grounding boxes.\n\nFrom the video, the {} appears first, then the {}, then the {}, and finally the {}. The order {correct_text} matches option {letter}.",
        correct[0], correct[1], correct[2], correct[3],
    );
    Ok(Some(QaDraft {
        question,
        options: Some(options),
        answer: Answer::Text(letter),
        groundings: Vec::new(),
        analysis,
        reasoning: String::new(),
    }))
}

/// The signed heading changes (degrees, in (-180, 180]) at the interior
/// anchors of a trajectory.
pub fn heading_changes(anchors: &[[f64; 2]]) -> Vec<f64> {
    let mut out = Vec::new();
    for i in 1..anchors.len().saturating_sub(1) {
        let v1 = [
            anchors[i][0] - anchors[i - 1][0],
            anchors[i][1] - anchors[i - 1][1],
        ];
        let v2 = [
            anchors[i + 1][0] - anchors[i][0],
            anchors[i + 1][1] - anchors[i][1],
        ];
        let cross = v1[0] * v2[1] - v1[1] * v2[0];
        let dot = v1[0] * v2[0] + v1[1] * v2[1];
        out.push(cross.atan2(dot).to_degrees());
    }
    out
}

/// Turn labels after applying the straightness threshold.
pub fn turn_sequence(anchors: &[[f64; 2]], straight_thresh_deg: f64) -> Vec<&'static str> {
    heading_changes(anchors)
        .into_iter()
        .filter_map(|deg| {
            if deg.abs() < straight_thresh_deg {
                None
            } else if deg.abs() > 180.0 - straight_thresh_deg {
                Some("turn back")
            } else if deg > 0.0 {
                Some("turn left")
            } else {
                Some("turn right")
            }
        })
        .collect()
}

/// Multiple choice: the sequence of turns along the recorded camera path
/// from a start landmark to a destination landmark.
fn gen_route_plan(
    meta: &SceneMeta,
    trajectory: Option<&Trajectory>,
    cfg: &GenConfig,
    rng: &mut ChaCha8Rng,
) -> Result<Option<QaDraft>, GcotError> {
    let Some(traj) = trajectory else {
        return Ok(None);
    };
    let singles = meta.singletons();
    if singles.len() < 2 {
        return Ok(None);
    }
    let anchors = traj.anchors();
    let turns = turn_sequence(anchors, cfg.straight_thresh_deg);
    if turns.is_empty() {
        return Ok(None);
    }
    let nearest = |p: [f64; 2], skip: Option<u32>| -> &ObjectRecord {
        singles
            .iter()
            .filter(|o| Some(o.id) != skip)
            .min_by(|a, b| {
                let da = {
                    let c = center(a);
                    (c.x - p[0]).hypot(c.y - p[1])
                };
                let db = {
                    let c = center(b);
                    (c.x - p[0]).hypot(c.y - p[1])
                };
                da.total_cmp(&db)
            })
            .expect("at least two singletons")
    };
    let start = nearest(anchors[0], None);
    let end = nearest(anchors[anchors.len() - 1], Some(start.id));
    let correct_text = turns.join(", ");

    // Distractors come from plausible left/right sequences of similar length.
    let mut pool: Vec<String> = Vec::new();
    for len in [turns.len().saturating_sub(1).max(1), turns.len(), turns.len() + 1] {
        for bits in 0..(1u32 << len.min(4)) {
            let seq: Vec<&str> = (0..len.min(4))
                .map(|i| {
                    if bits >> i & 1 == 1 {
                        "turn left"
                    } else {
                        "turn right"
                    }
                })
                .collect();
            let text = seq.join(", ");
            if text != correct_text && !pool.contains(&text) {
                pool.push(text);
            }
        }
    }
    if pool.len() < 3 {
        return Ok(None);
    }
    let picks = rand::seq::index::sample(rng, pool.len(), 3);
    let mut options = vec![correct_text.clone()];
    options.extend((0..3).map(|i| pool[picks.index(i)].clone()));
    options.shuffle(rng);
    let best = options.iter().position(|o| *o == correct_text).expect("present");
    let letter = option_letter(best);

    let (sn, en) = (start.category.as_str(), end.category.as_str());
    let question = fill(templates::ROUTE_PLAN_Q, &[("start", sn), ("end", en)]);
    let changes = heading_changes(anchors)
        .iter()
        .map(|d| format!("{d:.0}°"))
        .collect::<Vec<_>>()
        .join(", ");
    let analysis = format!(
        "The question is asking which turns I make while walking from the {sn} to the {en}. To solve this, I can identify the start and destination objects and their 3D bounding boxes first, then follow the camera path between them."
    );
    let reasoning = format!(
        "Step 1: Locate the start and the destination. The {sn} center is {} and the {en} center is {}.\nStep 2: Follow the camera path and measure the heading change at each waypoint: {changes}.\nStep 3: Keep only heading changes of at least {:.0}°. The resulting sequence is: {correct_text}.\n\nTherefore the turn sequence from the {sn} to the {en} is {correct_text}. Option {letter} is correct.",
        fmt_point(&center(start)),
        fmt_point(&center(end)),
        cfg.straight_thresh_deg,
    );
    Ok(Some(QaDraft {
        question,
        options: Some(options),
        answer: Answer::Text(letter),
        groundings: vec![grounding_for(start), grounding_for(end)],
        analysis,
        reasoning,
    }))
}
