//! `gst eval`: score predictions (or a dataset against itself).

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use gst_core::eval::{evaluate_records, EvalRecord, EvalReport};
use gst_core::gcot::QaSample;

use crate::errors::{usage, CliResult};

#[derive(Debug, clap::Args)]
pub struct EvalArgs {
    /// Dataset file produced by `gst gen` (JSON lines).
    #[arg(long, value_name = "FILE")]
    pub dataset: PathBuf,
    /// Model predictions: JSON lines of {"id": ..., "response": ...}.
    /// Every dataset id must appear exactly once. Without this flag the
    /// dataset's own responses are scored, which must come out perfect.
    #[arg(long, value_name = "FILE")]
    pub predictions: Option<PathBuf>,
    /// Print the full report as JSON instead of text.
    #[arg(long)]
    pub json: bool,
}

#[derive(Deserialize)]
struct PredictionLine {
    id: String,
    response: String,
}

/// Parses a JSON-lines file, tagging errors with path and line number.
fn read_jsonl<T: serde::de::DeserializeOwned>(path: &Path) -> CliResult<Vec<T>> {
    let text = std::fs::read_to_string(path).map_err(|e| crate::errors::io_at(path, e))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let value = serde_json::from_str(line)
            .map_err(|e| usage!("{}:{}: {e}", path.display(), i + 1))?;
        out.push(value);
    }
    Ok(out)
}

fn build_records(args: &EvalArgs) -> CliResult<Vec<EvalRecord>> {
    let samples: Vec<QaSample> = read_jsonl(&args.dataset)?;
    if samples.is_empty() {
        return Err(usage!("{}: dataset is empty", args.dataset.display()));
    }
    let Some(pred_path) = &args.predictions else {
        return Ok(samples.into_iter().map(EvalRecord::self_scoring).collect());
    };
    let lines: Vec<PredictionLine> = read_jsonl(pred_path)?;
    let mut by_id: HashMap<String, String> = HashMap::with_capacity(lines.len());
    for line in lines {
        if by_id.insert(line.id.clone(), line.response).is_some() {
            return Err(usage!(
                "{}: duplicate prediction for id {:?}",
                pred_path.display(),
                line.id
            ));
        }
    }
    let records = samples
        .into_iter()
        .map(|sample| {
            let prediction = by_id.remove(&sample.id).ok_or_else(|| {
                usage!("{}: no prediction for id {:?}", pred_path.display(), sample.id)
            })?;
            Ok(EvalRecord {
                sample,
                prediction: Some(prediction),
            })
        })
        .collect::<CliResult<Vec<_>>>()?;
    if let Some(stray) = by_id.keys().next() {
        return Err(usage!(
            "{}: prediction id {:?} matches no dataset sample",
            pred_path.display(),
            stray
        ));
    }
    Ok(records)
}

fn print_text(report: &EvalReport) {
    println!(
        "samples {}  parse failures {}  mean score {:.4}",
        report.n_samples, report.n_parse_failures, report.mean_score
    );
    let a = &report.answers;
    println!(
        "answers: exact match {:.4} over {} choice sample(s), numeric score {:.4} over {} numeric sample(s)",
        a.exact_match, a.n_multiple_choice, a.numeric_score, a.n_numeric
    );
    let g = &report.grounding;
    println!(
        "grounding: F1@25 {:.4}  F1@50 {:.4}  Acc@25 {:.4}  Acc@50 {:.4} ({} single-box sample(s), {} gt / {} predicted box(es))",
        g.f1_at_25, g.f1_at_50, g.acc_at_25, g.acc_at_50, g.n_single_box_samples, g.n_gt_boxes, g.n_pred_boxes
    );
    for t in &report.per_task {
        let f1 = match t.f1_at_25 {
            Some(v) => format!("{v:.4}"),
            None => "-".to_string(),
        };
        println!(
            "  {:<18} n {:<4} answer {:.4}  F1@25 {}",
            t.task.name(),
            t.n,
            t.answer_score,
            f1
        );
    }
}

pub fn run(args: &EvalArgs) -> CliResult<()> {
    let records = build_records(args)?;
    let report = evaluate_records(&records).map_err(|e| usage!("{e}"))?;
    if args.json {
        println!(
            "{}",
            serde_json::to_string_pretty(&report).expect("report serializes")
        );
    } else {
        print_text(&report);
    }
    Ok(())
}
