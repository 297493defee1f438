//! Question and response text templates.
//!
//! Questions are deterministic fills of the constants below; multiple-choice
//! questions additionally carry an option block (`Options: A. … B. …`).
//! Keeping the wording centralized makes samples reproducible and lets the
//! documentation quote the exact phrasing.

pub const OBJECT_COUNT_Q: &str = "How many {category}(s) are in this room?";

pub const ABS_DISTANCE_Q: &str =
    "What is the distance between the {a} and the {b} (in meters), measured between the centers of their bounding boxes?";

pub const OBJECT_SIZE_Q: &str =
    "What is the size of the {category} (in centimeters), measured as the diagonal of its 3D bounding box?";

pub const ROOM_SIZE_Q: &str = "What is the size of this room (in square meters)?";

pub const REL_DISTANCE_Q: &str = "Which of these objects is the closest to the {anchor}?";

pub const REL_DIRECTION_Q: &str =
    "If I am standing by the {observer} and facing the {facing}, is the {target} to the left or the right of the {facing}?";

pub const APPEARANCE_ORDER_Q: &str =
    "What will be the first-time appearance order of the following categories in the video: {list}?";

pub const ROUTE_PLAN_Q: &str =
    "You are walking through the room, starting at the {start} and ending at the {end}. Which sequence of turns do you make along the way?";

/// Replaces `{placeholder}` markers in a template. Unknown markers are left
/// untouched so tests can spot an incomplete fill.
pub fn fill(template: &str, pairs: &[(&str, &str)]) -> String {
    let mut out = template.to_string();
    for (key, value) in pairs {
        out = out.replace(&format!("{{{key}}}"), value);
    }
    out
}

/// Formats the option block appended to multiple-choice questions:
/// `Options: A. first B. second …`.
pub fn options_block(options: &[String]) -> String {
    let mut out = String::from("Options:");
    for (i, opt) in options.iter().enumerate() {
        let letter = (b'A' + i as u8) as char;
        out.push_str(&format!(" {letter}. {opt}"));
    }
    out
}

/// The letter naming option `index`.
pub fn option_letter(index: usize) -> String {
    ((b'A' + index as u8) as char).to_string()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fill_replaces_all_occurrences() {
        let s = fill(
            REL_DIRECTION_Q,
            &[("observer", "radiator"), ("facing", "table"), ("target", "telephone")],
        );
        assert_eq!(
            s,
            "If I am standing by the radiator and facing the table, is the telephone to the left or the right of the table?"
        );
    }

    #[test]
    fn unknown_markers_survive() {
        assert_eq!(fill("{a} and {b}", &[("a", "x")]), "x and {b}");
    }

    #[test]
    fn options_block_letters() {
        let opts = vec!["left".to_string(), "right".to_string()];
        assert_eq!(options_block(&opts), "Options: A. left B. right");
    }

    #[test]
    fn option_letters_are_sequential() {
        assert_eq!(option_letter(0), "A");
        assert_eq!(option_letter(3), "D");
    }
}
