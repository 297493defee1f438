use super::*;
use crate::fixtures::{COT_RESPONSE_EXAMPLE, DIRECT_RESPONSE_EXAMPLE};
use approx::assert_relative_eq;
use proptest::prelude::*;

fn bbox(x1: f64, y1: f64, z1: f64, x2: f64, y2: f64, z2: f64) -> Aabb {
    Aabb::from_corners(Vec3::new(x1, y1, z1), Vec3::new(x2, y2, z2)).unwrap()
}

#[test]
fn reference_cot_response_parses_cleanly() {
    let parsed = parse_response(COT_RESPONSE_EXAMPLE).unwrap();
    assert!(parsed.warnings.is_empty(), "{:?}", parsed.warnings);
    let ast = &parsed.ast;
    assert_eq!(ast.answer(), "A");
    assert_eq!(ast.groundings().len(), 3);
    let names: Vec<&str> = ast.groundings().iter().map(|g| g.name.as_str()).collect();
    assert_eq!(names, ["radiator", "table", "telephone"]);
    assert!(ast.groundings().iter().all(|g| g.count == 1));
    let radiator = &ast.groundings()[0].boxes[0];
    assert_relative_eq!(radiator.min().x, -1.9165);
    assert_relative_eq!(radiator.min().y, -1.0266);
    assert_relative_eq!(radiator.min().z, 0.0798);
    assert_relative_eq!(radiator.max().x, -1.6415);
    assert_relative_eq!(radiator.max().y, 0.9513);
    assert_relative_eq!(radiator.max().z, 0.6104);
    let telephone = &ast.groundings()[2].boxes[0];
    assert_relative_eq!(telephone.max().z, 1.0825);
    assert!(ast.analysis().starts_with("The question is asking"));
    assert!(ast.analysis().ends_with("bounding boxes first."));
    assert!(ast.reasoning().starts_with("To determine"));
    assert!(ast.reasoning().ends_with("Option A is correct."));
}

#[test]
fn reference_direct_response_parses_cleanly() {
    let parsed = parse_response(DIRECT_RESPONSE_EXAMPLE).unwrap();
    assert!(parsed.warnings.is_empty());
    let ast = &parsed.ast;
    assert_eq!(ast.answer(), "11.0");
    assert!(ast.groundings().is_empty());
    assert!(ast.reasoning().is_empty());
    assert!(ast.analysis().contains("room size is about 11.0"));
}

#[test]
fn reference_responses_are_emission_fixed_points() {
    for text in [COT_RESPONSE_EXAMPLE, DIRECT_RESPONSE_EXAMPLE] {
        let once = parse_response(text).unwrap().ast;
        let emitted = once.emit();
        assert_eq!(emitted, text, "canonical text should re-emit byte-identical");
        let twice = parse_response(&emitted).unwrap().ast;
        assert_eq!(twice, once);
        assert_eq!(twice.emit(), emitted);
    }
}

#[test]
fn canonical_box_emission() {
    let ast = ResponseAst::new(
        "",
        vec![Grounding {
            name: "box".into(),
            count: 1,
            boxes: vec![bbox(0.0, 0.0, 0.0, 1.0, 1.0, 1.0)],
        }],
        "",
        "A",
    );
    assert_eq!(
        ast.emit(),
        "<think>box 1 <bbox>(0.0000, 0.0000, 0.0000, 1.0000, 1.0000, 1.0000)</bbox></think>\n<answer>A</answer>"
    );
}

#[test]
fn grounding_line_matches_reference_bytes() {
    let ast = ResponseAst::new(
        "Analysis.",
        vec![Grounding {
            name: "radiator".into(),
            count: 1,
            boxes: vec![bbox(-1.9165, -1.0266, 0.0798, -1.6415, 0.9513, 0.6104)],
        }],
        "Reasoning.",
        "A",
    );
    let expected =
        "radiator 1 <bbox>(-1.9165, -1.0266, 0.0798, -1.6415, 0.9513, 0.6104)</bbox>";
    assert!(ast.emit().contains(expected), "{}", ast.emit());
}

#[test]
fn swapped_corners_are_normalized() {
    let text = "<think>a 1 <bbox>(1, 2, 3, 0, 0, 0)</bbox></think>\n<answer>x</answer>";
    let parsed = parse_response(text).unwrap();
    let b = &parsed.ast.groundings()[0].boxes[0];
    assert_relative_eq!(b.min().x, 0.0);
    assert_relative_eq!(b.max().x, 1.0);
    assert_relative_eq!(b.max().z, 3.0);
}

#[test]
fn count_mismatch_is_a_warning_not_an_error() {
    let text = "<think>chair 2 <bbox>(0, 0, 0, 1, 1, 1)</bbox></think>\n<answer>2</answer>";
    let parsed = parse_response(text).unwrap();
    assert_eq!(parsed.warnings.len(), 1);
    assert!(parsed.warnings[0].message.contains("declares 2"));
    assert_eq!(parsed.ast.groundings()[0].count, 2);
    assert_eq!(parsed.ast.groundings()[0].boxes.len(), 1);
}

#[test]
fn missing_count_warns_and_falls_back_to_box_count() {
    let text = "<think>sofa <bbox>(0, 0, 0, 1, 1, 1)</bbox> <bbox>(2, 2, 2, 3, 3, 3)</bbox></think>\n<answer>2</answer>";
    let parsed = parse_response(text).unwrap();
    assert!(parsed
        .warnings
        .iter()
        .any(|w| w.message.contains("no count")));
    let g = &parsed.ast.groundings()[0];
    assert_eq!(g.name, "sofa");
    assert_eq!(g.count, 2);
    assert_eq!(g.boxes.len(), 2);
}

#[test]
fn unnamed_entry_warns() {
    let text = "<think>Look.\n\n1 <bbox>(0, 0, 0, 1, 1, 1)</bbox></think>\n<answer>y</answer>";
    let parsed = parse_response(text).unwrap();
    assert!(parsed.warnings.iter().any(|w| w.message.contains("no name")));
    assert_eq!(parsed.ast.groundings()[0].name, "");
    assert_eq!(parsed.ast.analysis(), "Look.");
}

#[test]
fn malformed_tuple_is_a_hard_error_with_offset() {
    let text = "<think>chair 1 <bbox>(0, 0, 0, 1, 1)</bbox></think>\n<answer>1</answer>";
    let err = parse_response(text).unwrap_err();
    match err {
        ParseError::MalformedBox { offset, detail } => {
            assert_eq!(offset, text.find("<bbox>").unwrap());
            assert!(detail.contains("expected 6"), "{detail}");
        }
        other => panic!("expected MalformedBox, got {other}"),
    }
}

#[test]
fn non_numeric_coordinate_is_a_hard_error() {
    let text = "<think>chair 1 <bbox>(0, 0, zero, 1, 1, 1)</bbox></think>\n<answer>1</answer>";
    let err = parse_response(text).unwrap_err();
    assert!(matches!(err, ParseError::MalformedBox { .. }));
    assert!(err.to_string().contains("zero"));
}

#[test]
fn unterminated_bbox_is_a_hard_error() {
    let text = "<think>chair 1 <bbox>(0, 0, 0, 1, 1, 1)</think>\n<answer>1</answer>";
    let err = parse_response(text).unwrap_err();
    assert!(matches!(
        err,
        ParseError::Unterminated { tag: "<bbox>", .. }
    ));
}

#[test]
fn missing_and_unterminated_tags() {
    assert_eq!(
        parse_response("no tags here").unwrap_err(),
        ParseError::MissingTag {
            tag: "<think>",
            offset: 0
        }
    );
    assert_eq!(
        parse_response("..<think>abc").unwrap_err(),
        ParseError::Unterminated {
            tag: "<think>",
            offset: 2
        }
    );
    let text = "<think>abc</think>\ndone";
    assert_eq!(
        parse_response(text).unwrap_err(),
        ParseError::MissingTag {
            tag: "<answer>",
            offset: text.find("\ndone").unwrap()
        }
    );
    let text = "<think>abc</think>\n<answer>A";
    assert_eq!(
        parse_response(text).unwrap_err(),
        ParseError::Unterminated {
            tag: "<answer>",
            offset: text.find("<answer>").unwrap()
        }
    );
}

#[test]
fn last_complete_answer_block_wins() {
    let text = "<think>t</think>\n<answer>first</answer> noise <answer>second</answer>";
    let parsed = parse_response(text).unwrap();
    assert_eq!(parsed.ast.answer(), "second");
    // A trailing unterminated block does not shadow a complete one.
    let text = "<think>t</think>\n<answer>first</answer><answer>broken";
    let parsed = parse_response(text).unwrap();
    assert_eq!(parsed.ast.answer(), "first");
}

#[test]
fn space_and_comma_separated_box_lists_agree() {
    let spaced =
        "<think>chair 2 <bbox>(0, 0, 0, 1, 1, 1)</bbox> <bbox>(2, 0, 0, 3, 1, 1)</bbox></think>\n<answer>2</answer>";
    let commaed =
        "<think>chair 2 <bbox>(0, 0, 0, 1, 1, 1)</bbox>, <bbox>(2, 0, 0, 3, 1, 1)</bbox></think>\n<answer>2</answer>";
    let a = parse_response(spaced).unwrap().ast;
    let b = parse_response(commaed).unwrap().ast;
    assert_eq!(a, b);
    assert_eq!(a.groundings().len(), 1);
    assert_eq!(a.groundings()[0].boxes.len(), 2);
    // Canonical emission uses the space-separated form with fixed-point coordinates.
    let canonical = a.emit();
    assert!(canonical.contains("</bbox> <bbox>"), "{canonical}");
    assert!(canonical.contains("(0.0000, 0.0000, 0.0000, 1.0000, 1.0000, 1.0000)"));
    assert_eq!(parse_response(&canonical).unwrap().ast, a);
    assert_eq!(parse_response(&canonical).unwrap().ast.emit(), canonical);
}

#[test]
fn multi_word_names_and_sentence_boundaries() {
    let text = "<think>I will ground the objects first. coffee table 1 <bbox>(0, 0, 0, 1, 1, 0.5)</bbox></think>\n<answer>ok</answer>";
    let parsed = parse_response(text).unwrap();
    assert!(parsed.warnings.is_empty(), "{:?}", parsed.warnings);
    assert_eq!(parsed.ast.groundings()[0].name, "coffee table");
    assert_eq!(parsed.ast.analysis(), "I will ground the objects first.");
}

#[test]
fn entries_split_on_comma_plus_header() {
    let text = "<think>Intro.\n\nchair 1 <bbox>(0, 0, 0, 1, 1, 1)</bbox>, floor lamp 2 <bbox>(2, 0, 0, 3, 1, 1)</bbox> <bbox>(4, 0, 0, 5, 1, 1)</bbox>\n\nOutro.</think>\n<answer>B</answer>";
    let parsed = parse_response(text).unwrap();
    assert!(parsed.warnings.is_empty(), "{:?}", parsed.warnings);
    let gs = parsed.ast.groundings();
    assert_eq!(gs.len(), 2);
    assert_eq!(gs[0].name, "chair");
    assert_eq!(gs[1].name, "floor lamp");
    assert_eq!(gs[1].boxes.len(), 2);
    assert_eq!(parsed.ast.reasoning(), "Outro.");
    // Re-emission canonicalizes coordinates but preserves the structure.
    let emitted = parsed.ast.emit();
    let reparsed = parse_response(&emitted).unwrap();
    assert!(reparsed.warnings.is_empty());
    assert_eq!(reparsed.ast, parsed.ast);
    assert_eq!(reparsed.ast.emit(), emitted);
}

#[test]
fn empty_groundings_fold_reasoning_into_analysis() {
    let ast = ResponseAst::new("First part.", vec![], "Second part.", "42");
    assert_eq!(ast.analysis(), "First part.\n\nSecond part.");
    assert!(ast.reasoning().is_empty());
    let round = parse_response(&ast.emit()).unwrap().ast;
    assert_eq!(round, ast);
}

#[test]
fn groundings_without_boxes_are_dropped() {
    let ast = ResponseAst::new(
        "a",
        vec![Grounding {
            name: "ghost".into(),
            count: 1,
            boxes: vec![],
        }],
        "r",
        "x",
    );
    assert!(ast.groundings().is_empty());
    assert_eq!(ast.analysis(), "a\n\nr");
}

#[test]
fn constructor_quantizes_to_emitted_precision() {
    let ast = ResponseAst::new(
        "",
        vec![Grounding {
            name: "thing".into(),
            count: 1,
            boxes: vec![bbox(0.123456, -0.00004, 1.0, 0.2, 0.1, 2.0)],
        }],
        "",
        "k",
    );
    let b = &ast.groundings()[0].boxes[0];
    assert_relative_eq!(b.min().x, 0.1235);
    assert_relative_eq!(b.min().y, 0.0);
    let round = parse_response(&ast.emit()).unwrap().ast;
    assert_eq!(round, ast);
}

proptest! {
    #[test]
    fn parse_emit_roundtrip(
        analysis in "[a-zA-Z ]{0,40}",
        reasoning in "[a-zA-Z ]{0,40}",
        answer in "[A-Za-z0-9][A-Za-z0-9. ]{0,10}",
        entries in proptest::collection::vec(
            (
                "[a-z]{1,8}( [a-z]{1,8}){0,2}",
                0u32..4,
                proptest::collection::vec(
                    (
                        -10.0f64..10.0, -10.0f64..10.0, -10.0f64..10.0,
                        0.01f64..10.0, 0.01f64..10.0, 0.01f64..10.0,
                    ),
                    1..3,
                ),
            ),
            0..4,
        ),
    ) {
        let groundings: Vec<Grounding> = entries
            .into_iter()
            .map(|(name, count, boxes)| Grounding {
                name,
                count,
                boxes: boxes
                    .into_iter()
                    .map(|(x, y, z, dx, dy, dz)| bbox(x, y, z, x + dx, y + dy, z + dz))
                    .collect(),
            })
            .collect();
        let ast = ResponseAst::new(analysis, groundings, reasoning, answer);
        let emitted = ast.emit();
        let parsed = parse_response(&emitted).unwrap();
        prop_assert_eq!(&parsed.ast, &ast);
        // Emission is idempotent under re-parsing.
        prop_assert_eq!(parsed.ast.emit(), emitted);
    }
}
