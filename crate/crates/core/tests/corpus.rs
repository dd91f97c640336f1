mod common;

use std::io::Write;

use citematch::corpus::{is_msc_code, load_corpus, Corpus, CorpusError};
use proptest::prelude::*;

/// Independent reading of the code shape: 2 digits, then optionally an
/// uppercase letter or '-', then optionally two alphanumerics.
fn shape_ok(code: &str) -> bool {
    let c: Vec<char> = code.chars().collect();
    let digits = c.len() >= 2 && c[0].is_ascii_digit() && c[1].is_ascii_digit();
    let third = |x: char| x.is_ascii_uppercase() || x == '-';
    digits
        && match c.len() {
            2 => true,
            3 => third(c[2]),
            5 => third(c[2]) && c[3].is_ascii_alphanumeric() && c[4].is_ascii_alphanumeric(),
            _ => false,
        }
}

fn fixture(lines: &[&str]) -> tempfile::NamedTempFile {
    let mut f = tempfile::NamedTempFile::new().unwrap();
    for l in lines {
        writeln!(f, "{l}").unwrap();
    }
    f
}

const R1: &str = r#"{"id":1,"title":"Zur Elektrodynamik bewegter Körper","authors":[{"surname":"Einstein","given":"A."}],"year":1905,"serial":"Ann. Phys.","volume":"17","pages":"891-921","msc":["83A05"]}"#;
const R2: &str = r#"{"id":2,"title":"Graph theory","msc":["05C"]}"#;
const R3: &str = r#"{"id":3,"title":"Numerical methods","msc":["65F10","11"],"abstract_redacted":true}"#;

#[test]
fn load_examples() {
    let empty = fixture(&[]);
    assert!(load_corpus(empty.path()).unwrap().is_empty());

    let three = fixture(&[R1, R2, R3]);
    let c = load_corpus(three.path()).unwrap();
    assert_eq!(c.len(), 3);
    let r = c.get_record(1).unwrap();
    assert_eq!(r.title, "Zur Elektrodynamik bewegter Körper");
    assert_eq!(r.authors[0].surname, "Einstein");
    assert_eq!(r.pages.as_deref(), Some("891-921"));
    assert_eq!(c.get_record(3).unwrap().msc, vec!["65F10", "11"]);
    assert!(c.get_record(4).is_none());

    let r7 = r#"{"id":7,"title":"Seven"}"#;
    let dup = fixture(&[R1, r7, R2, R3, r7]);
    assert!(matches!(load_corpus(dup.path()), Err(CorpusError::DuplicateId(7))));

    let broken = fixture(&[R1, "{not json"]);
    assert!(matches!(load_corpus(broken.path()), Err(CorpusError::Parse { line: 2, .. })));
    assert!(matches!(load_corpus(std::path::Path::new("/nonexistent/c.jsonl")), Err(CorpusError::Io(_))));
}

#[test]
fn add_and_get() {
    let mut c = Corpus::new();
    assert!(c.get_record(1).is_none());
    let r = common::simple_record(42, "Modular forms", "Zagier");
    c.add_record(r.clone()).unwrap();
    assert_eq!(c.get_record(42), Some(&r));
    let mut bad = common::simple_record(1, "   ", "X");
    assert!(matches!(c.add_record(bad.clone()), Err(CorpusError::InvalidRecord { field: "title", .. })));
    bad.title = "ok".into();
    bad.msc = vec!["65F10".into(), "11".into()];
    c.add_record(bad).unwrap();
    assert_eq!(c.len(), 2);
}

proptest! {
    #[test]
    fn jsonl_round_trip(c in common::corpus(20)) {
        let again = Corpus::from_jsonl(&c.to_jsonl()).unwrap();
        prop_assert_eq!(&again, &c);
        prop_assert_eq!(again.fingerprint(), c.fingerprint());
    }

    #[test]
    fn add_then_get_is_identity(r in common::record(17)) {
        let mut c = Corpus::new();
        c.add_record(r.clone()).unwrap();
        prop_assert_eq!(c.get_record(17), Some(&r));
    }

    #[test]
    fn valid_codes_accepted(code in common::msc_code()) {
        prop_assert!(is_msc_code(&code));
    }

    #[test]
    fn validator_matches_shape_rule(code in "[0-9A-Za-z -]{0,6}") {
        prop_assert_eq!(is_msc_code(&code), shape_ok(&code));
    }
}
