//! Property tests for the annotation text model: parsing is total,
//! recorded spans always own exactly their bytes, and inserting a
//! candidate then removing it restores the program byte-for-byte.

use proptest::prelude::*;
use scribe_core::text::{
    classify_annotation, enumerate_insertion_points, insert_annotation, parse, reinsert_all,
    remove_annotation, strip_all_annotations, AnnotationKind, SourceText,
};

const COUNT_UP: &str = "method countUp(n: nat) returns (i: nat)\n  ensures i == n\n{\n  i := 0;\n  while i < n\n  {\n    i := i + 1;\n  }\n}\n";

/// Arbitrary near-Dafny soup: enough structure to hit the scanner's
/// comment, string and brace handling, with no validity guarantee.
fn soup() -> impl Strategy<Value = String> {
    let atom = prop_oneof![
        Just("method m() {\n".to_string()),
        Just("}\n".to_string()),
        Just("while x < 3 {\n".to_string()),
        Just("invariant x <= 3\n".to_string()),
        Just("assert x > 0;\n".to_string()),
        Just("decreases 3 - x\n".to_string()),
        Just("// line comment invariant fake\n".to_string()),
        Just("/* block { */ x := 1;\n".to_string()),
        Just("var s := \"brace { in string\";\n".to_string()),
        Just("var c := '{';\n".to_string()),
        "[a-z ]{0,12}\n".prop_map(|s| s),
    ];
    prop::collection::vec(atom, 0..12).prop_map(|parts| parts.concat())
}

fn operand() -> impl Strategy<Value = String> {
    "[a-z][a-z0-9]{0,6}( [<>=+-] [a-z0-9]{1,4})?"
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn parse_is_total_and_spans_stay_in_bounds(src in soup()) {
        let source = SourceText::new(src);
        let unit = parse(&source);
        for inst in &unit.annotations {
            prop_assert!(inst.span.end <= source.content.len());
            prop_assert_eq!(&source.content[inst.span.clone()], &inst.owned_text);
        }
    }

    #[test]
    fn strip_then_reinsert_restores_any_input(src in soup()) {
        let source = SourceText::new(src);
        let (stripped, removed) = strip_all_annotations(&source);
        let rebuilt = reinsert_all(&stripped, &removed);
        prop_assert_eq!(rebuilt.content, source.content);
    }

    #[test]
    fn insert_then_remove_is_identity_at_every_point(
        text in operand(),
        kind in prop_oneof![
            Just(AnnotationKind::Invariant),
            Just(AnnotationKind::Assert),
            Just(AnnotationKind::Decreases),
        ],
        point_pick in any::<prop::sample::Index>(),
    ) {
        let source = SourceText::new(COUNT_UP);
        let unit = parse(&source);
        let points = enumerate_insertion_points(&unit, 0, kind).unwrap();
        prop_assert!(!points.is_empty());
        let point = &points[point_pick.index(points.len())];

        let ann = classify_annotation(&format!("{} {text}", kind.keyword()))
            .expect("keyword plus operand classifies");
        prop_assert_eq!(ann.kind, kind);
        let inserted = insert_annotation(&source, point, &ann).unwrap();

        // The insertion is visible to a re-parse with the same normalized
        // text, and removing it restores the original bytes.
        let again = parse(&inserted);
        let found = again
            .annotations
            .iter()
            .find(|i| i.annotation.normalized == ann.normalized)
            .expect("inserted annotation is re-discovered");
        let removed = remove_annotation(&inserted, found).unwrap();
        prop_assert_eq!(removed.content, source.content);
    }
}
