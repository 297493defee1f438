//! Grounded response grammar: parse and emit model answers.
//!
//! A grounded response has the shape
//!
//! ```text
//! <think>{analysis}
//!
//! {name count <bbox>(x1, y1, z1, x2, y2, z2)</bbox> ...}, {...}
//!
//! {reasoning}</think>
//! <answer>{answer}</answer>
//! ```
//!
//! The `<think>` body opens with free-form analysis, then lists grounding
//! entries — an object name, how many instances it has, and one 3D box per
//! instance — separated by `", "`, then continues with free-form reasoning.
//! Either free-form part may be empty, and a response without groundings is
//! just `<think>{analysis}</think>` plus the answer.
//!
//! [`emit_response`] produces the canonical form: coordinates with four
//! decimals, boxes separated by single spaces, entries by `", "`, paragraphs
//! by blank lines. [`parse_response`] is tolerant of model output: it
//! accepts comma- or space-separated box lists, normalizes corner order,
//! reports count/box mismatches as warnings rather than failures, and takes
//! the last complete `<answer>` block when several appear. Structural
//! problems (missing tags, malformed coordinate tuples) are hard errors
//! carrying the byte offset of the offending construct.
//!
//! Round-trip guarantees: `parse(emit(ast)) == ast` for every [`ResponseAst`]
//! (the constructor normalizes exactly as much as emission then parsing
//! would), and `emit(parse(text))` is a fixed point of `parse ∘ emit`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scene::{Aabb, Vec3};

/// One grounding entry: an object name, its stated instance count, and one
/// axis-aligned box per instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grounding {
    pub name: String,
    pub count: u32,
    pub boxes: Vec<Aabb>,
}

/// A structured grounded response.
///
/// Instances are normalized on construction so that emission followed by
/// parsing reproduces the value exactly:
///
/// * free-text fields are trimmed and names have whitespace runs collapsed;
/// * box coordinates are rounded to four decimals (the emitted precision);
/// * groundings with no boxes are dropped (the grammar cannot express them);
/// * when there are no groundings, the reasoning is folded into the
///   analysis, since the grammar cannot separate the two without a
///   grounding list between them.
#[derive(Debug, Clone, PartialEq)]
pub struct ResponseAst {
    analysis: String,
    groundings: Vec<Grounding>,
    reasoning: String,
    answer: String,
}

fn collapse_ws(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Rounds to the four-decimal grid used by the emitter.
fn quantize(x: f64) -> f64 {
    (x * 1e4).round() / 1e4
}

impl ResponseAst {
    pub fn new(
        analysis: impl Into<String>,
        groundings: Vec<Grounding>,
        reasoning: impl Into<String>,
        answer: impl Into<String>,
    ) -> Self {
        let mut analysis = analysis.into().trim().to_string();
        let mut reasoning = reasoning.into().trim().to_string();
        let groundings: Vec<Grounding> = groundings
            .into_iter()
            .filter(|g| !g.boxes.is_empty())
            .map(|g| Grounding {
                name: collapse_ws(&g.name),
                count: g.count,
                boxes: g
                    .boxes
                    .iter()
                    .map(|b| {
                        let min = b.min();
                        let max = b.max();
                        Aabb::from_corners(
                            Vec3::new(quantize(min.x), quantize(min.y), quantize(min.z)),
                            Vec3::new(quantize(max.x), quantize(max.y), quantize(max.z)),
                        )
                        .expect("quantization preserves ordering up to corner swap")
                    })
                    .collect(),
            })
            .collect();
        if groundings.is_empty() && !reasoning.is_empty() {
            if analysis.is_empty() {
                analysis = reasoning;
            } else {
                analysis = format!("{analysis}\n\n{reasoning}");
            }
            reasoning = String::new();
        }
        Self {
            analysis,
            groundings,
            reasoning,
            answer: answer.into().trim().to_string(),
        }
    }

    pub fn analysis(&self) -> &str {
        &self.analysis
    }

    pub fn groundings(&self) -> &[Grounding] {
        &self.groundings
    }

    pub fn reasoning(&self) -> &str {
        &self.reasoning
    }

    pub fn answer(&self) -> &str {
        &self.answer
    }

    /// Canonical text form; see [`emit_response`].
    pub fn emit(&self) -> String {
        emit_response(self)
    }
}

/// A non-fatal observation made while parsing, located by byte offset.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Diagnostic {
    pub offset: usize,
    pub message: String,
}

/// Parse result: the structured response plus any warnings.
#[derive(Debug, Clone, PartialEq)]
pub struct ParsedResponse {
    pub ast: ResponseAst,
    pub warnings: Vec<Diagnostic>,
}

/// Structural parse failures. Offsets are byte positions in the input.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum ParseError {
    #[error("missing {tag} tag (byte offset {offset})")]
    MissingTag { tag: &'static str, offset: usize },
    #[error("unterminated {tag} tag opened at byte offset {offset}")]
    Unterminated { tag: &'static str, offset: usize },
    #[error("malformed bounding box at byte offset {offset}: {detail}")]
    MalformedBox { offset: usize, detail: String },
}

/// Emits the canonical text form of a response.
pub fn emit_response(ast: &ResponseAst) -> String {
    let mut body = String::new();
    body.push_str(&ast.analysis);
    if !ast.groundings.is_empty() {
        if !ast.analysis.is_empty() {
            body.push_str("\n\n");
        }
        let entries: Vec<String> = ast.groundings.iter().map(emit_grounding).collect();
        body.push_str(&entries.join(", "));
        if !ast.reasoning.is_empty() {
            body.push_str("\n\n");
            body.push_str(&ast.reasoning);
        }
    }
    format!("<think>{body}</think>\n<answer>{}</answer>", ast.answer)
}

fn emit_grounding(g: &Grounding) -> String {
    let boxes: Vec<String> = g
        .boxes
        .iter()
        .map(|b| {
            let (a, z) = (b.min(), b.max());
            format!(
                "<bbox>({:.4}, {:.4}, {:.4}, {:.4}, {:.4}, {:.4})</bbox>",
                a.x, a.y, a.z, z.x, z.y, z.z
            )
        })
        .collect();
    format!("{} {} {}", g.name, g.count, boxes.join(" "))
}

/// Byte range of one parsed box within the think body, plus its value.
struct BoxSpan {
    open: usize,
    end: usize,
    bbox: Aabb,
}

/// Bytes that end a name run when scanning backwards.
fn is_name_terminator(b: u8) -> bool {
    matches!(
        b,
        b'\n' | b',' | b'>' | b'<' | b'.' | b':' | b';' | b'!' | b'?' | b'(' | b')'
    )
}

fn find_box_spans(body: &str, base: usize) -> Result<Vec<BoxSpan>, ParseError> {
    const OPEN: &str = "<bbox>";
    const CLOSE: &str = "</bbox>";
    let mut spans = Vec::new();
    let mut at = 0;
    while let Some(rel) = body[at..].find(OPEN) {
        let open = at + rel;
        let payload_start = open + OPEN.len();
        let Some(close_rel) = body[payload_start..].find(CLOSE) else {
            return Err(ParseError::Unterminated {
                tag: "<bbox>",
                offset: base + open,
            });
        };
        let payload = body[payload_start..payload_start + close_rel].trim();
        let inner = payload
            .strip_prefix('(')
            .and_then(|p| p.strip_suffix(')'))
            .ok_or_else(|| ParseError::MalformedBox {
                offset: base + open,
                detail: "expected a parenthesized coordinate tuple".to_string(),
            })?;
        let tokens: Vec<&str> = inner.split(',').map(str::trim).collect();
        if tokens.len() != 6 {
            return Err(ParseError::MalformedBox {
                offset: base + open,
                detail: format!("expected 6 coordinates, got {}", tokens.len()),
            });
        }
        let mut vals = [0.0f64; 6];
        for (i, tok) in tokens.iter().enumerate() {
            vals[i] = tok.parse().map_err(|_| ParseError::MalformedBox {
                offset: base + open,
                detail: format!("invalid coordinate {tok:?}"),
            })?;
        }
        let bbox = Aabb::from_corners(
            Vec3::new(vals[0], vals[1], vals[2]),
            Vec3::new(vals[3], vals[4], vals[5]),
        )
        .map_err(|e| ParseError::MalformedBox {
            offset: base + open,
            detail: e.to_string(),
        })?;
        let end = payload_start + close_rel + CLOSE.len();
        spans.push(BoxSpan { open, end, bbox });
        at = end;
    }
    Ok(spans)
}

/// True when `between` contains only whitespace and commas — i.e. it can
/// only be a separator inside one entry's box list, not a new entry header.
fn is_box_list_separator(between: &str) -> bool {
    between.bytes().all(|b| b == b',' || b.is_ascii_whitespace())
}

struct EntryDraft {
    name: String,
    count: Option<u32>,
    boxes: Vec<Aabb>,
    /// Byte offset (within the body) where the entry's text begins.
    start: usize,
    /// Byte offset just past the entry's last `</bbox>`.
    end: usize,
    head_offset: usize,
}

/// Scans backwards from an entry's first box for `NAME COUNT`.
fn scan_entry_head(body: &str, box_open: usize) -> (String, Option<u32>, usize) {
    let bytes = body.as_bytes();
    let mut i = box_open;
    while i > 0 && bytes[i - 1].is_ascii_whitespace() {
        i -= 1;
    }
    let int_end = i;
    while i > 0 && bytes[i - 1].is_ascii_digit() {
        i -= 1;
    }
    let count = if i < int_end {
        body[i..int_end].parse::<u32>().ok()
    } else {
        None
    };
    let after_int = i;
    while i > 0 && bytes[i - 1].is_ascii_whitespace() {
        i -= 1;
    }
    let name_end = i;
    while i > 0 && !is_name_terminator(bytes[i - 1]) {
        i -= 1;
    }
    let name = collapse_ws(&body[i..name_end]);
    let start = if name.is_empty() { after_int } else { i };
    (name, count, start)
}

/// Parses a grounded response. Returns the structured response plus
/// warnings, or a structural [`ParseError`].
pub fn parse_response(text: &str) -> Result<ParsedResponse, ParseError> {
    const THINK_OPEN: &str = "<think>";
    const THINK_CLOSE: &str = "</think>";
    const ANSWER_OPEN: &str = "<answer>";
    const ANSWER_CLOSE: &str = "</answer>";

    let think_start = text.find(THINK_OPEN).ok_or(ParseError::MissingTag {
        tag: "<think>",
        offset: 0,
    })?;
    let body_start = think_start + THINK_OPEN.len();
    let body_len = text[body_start..]
        .find(THINK_CLOSE)
        .ok_or(ParseError::Unterminated {
            tag: "<think>",
            offset: think_start,
        })?;
    let body = &text[body_start..body_start + body_len];
    let after_think = body_start + body_len + THINK_CLOSE.len();

    // Last complete <answer> block wins; models sometimes repeat themselves.
    let tail = &text[after_think..];
    let mut answer: Option<&str> = None;
    let mut first_open: Option<usize> = None;
    let mut at = 0;
    while let Some(rel) = tail[at..].find(ANSWER_OPEN) {
        let open = at + rel;
        first_open.get_or_insert(after_think + open);
        let payload_start = open + ANSWER_OPEN.len();
        match tail[payload_start..].find(ANSWER_CLOSE) {
            Some(close_rel) => {
                answer = Some(&tail[payload_start..payload_start + close_rel]);
                at = payload_start + close_rel + ANSWER_CLOSE.len();
            }
            None => break,
        }
    }
    let answer = match (answer, first_open) {
        (Some(a), _) => a,
        (None, Some(offset)) => {
            return Err(ParseError::Unterminated {
                tag: "<answer>",
                offset,
            })
        }
        (None, None) => {
            return Err(ParseError::MissingTag {
                tag: "<answer>",
                offset: after_think,
            })
        }
    };

    let spans = find_box_spans(body, body_start)?;
    let mut warnings = Vec::new();
    let mut entries: Vec<EntryDraft> = Vec::new();
    for span in spans {
        let continues = entries.last().is_some_and(|e: &EntryDraft| {
            is_box_list_separator(&body[e.end..span.open])
        });
        if continues {
            let entry = entries.last_mut().unwrap();
            entry.boxes.push(span.bbox);
            entry.end = span.end;
        } else {
            let (name, count, start) = scan_entry_head(body, span.open);
            entries.push(EntryDraft {
                name,
                count,
                boxes: vec![span.bbox],
                start,
                end: span.end,
                head_offset: body_start + start,
            });
        }
    }

    let mut groundings = Vec::new();
    for entry in &entries {
        if entry.name.is_empty() {
            warnings.push(Diagnostic {
                offset: entry.head_offset,
                message: "grounding entry has no name".to_string(),
            });
        }
        let count = match entry.count {
            Some(c) => c,
            None => {
                warnings.push(Diagnostic {
                    offset: entry.head_offset,
                    message: format!(
                        "grounding entry {:?} has no count; assuming the number of boxes",
                        entry.name
                    ),
                });
                entry.boxes.len() as u32
            }
        };
        if count as usize != entry.boxes.len() {
            warnings.push(Diagnostic {
                offset: entry.head_offset,
                message: format!(
                    "grounding entry {:?} declares {count} instance(s) but lists {} box(es)",
                    entry.name,
                    entry.boxes.len()
                ),
            });
        }
        groundings.push(Grounding {
            name: entry.name.clone(),
            count,
            boxes: entry.boxes.clone(),
        });
    }

    let (analysis, reasoning) = match (entries.first(), entries.last()) {
        (Some(first), Some(last)) => (&body[..first.start], &body[last.end..]),
        _ => (body, ""),
    };
    Ok(ParsedResponse {
        ast: ResponseAst::new(analysis, groundings, reasoning, answer),
        warnings,
    })
}

#[cfg(test)]
mod tests;
