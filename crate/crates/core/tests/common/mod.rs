#![allow(dead_code)]

use citematch::corpus::{AuthorName, BibRecord, Corpus, RecordId};
use proptest::collection::{btree_set, vec};
use proptest::option;
use proptest::prelude::*;

pub const WORDS: &[&str] = &[
    "graph", "theory", "prime", "number", "theorem", "ring", "modular", "forms", "zeta", "function", "spectral",
    "operator", "elliptic", "curves", "hilbert", "space", "random", "walk", "lattice", "group", "algebra", "topology",
    "manifold", "körper", "bewegter", "équations", "differential", "integral", "series", "measure",
];

pub const SURNAMES: &[&str] = &["Euler", "Gauß", "Noether", "Erdős", "Hardy", "Weyl", "Riesz", "Łojasiewicz", "Tao", "Serre"];

pub fn msc_code() -> impl Strategy<Value = String> {
    prop_oneof![
        "[0-9]{2}",
        "[0-9]{2}[A-Z-]",
        "[0-9]{2}[A-Z-][0-9A-Za-z]{2}",
    ]
}

pub fn author() -> impl Strategy<Value = AuthorName> {
    (prop::sample::select(SURNAMES), option::of("[A-Z]\\."), option::of("[a-z]{3,6}")).prop_map(|(s, g, id)| {
        AuthorName { surname: s.to_string(), given: g, author_id: id }
    })
}

pub fn title() -> impl Strategy<Value = String> {
    vec(prop::sample::select(WORDS), 1..6).prop_map(|w| w.join(" "))
}

pub fn record(id: RecordId) -> impl Strategy<Value = BibRecord> {
    (
        title(),
        vec(author(), 0..4),
        option::of(1500i32..=2100),
        option::of(prop::sample::select(&["Ann. Phys.", "Math. Z.", "Invent. Math."][..])),
        option::of("[1-9][0-9]{0,2}"),
        option::of("[1-9][0-9]{0,2}-[1-9][0-9]{0,2}"),
        option::of("10\\.[0-9]{4}/[a-z0-9]{3,8}"),
        vec(msc_code(), 0..3),
        any::<bool>(),
    )
        .prop_map(move |(title, authors, year, serial, volume, pages, doi, msc, abstract_redacted)| BibRecord {
            id,
            title,
            authors,
            year,
            serial: serial.map(str::to_owned),
            volume,
            pages,
            doi,
            msc,
            abstract_redacted,
        })
}

/// Corpora with distinct, possibly sparse ids.
pub fn corpus(max: usize) -> impl Strategy<Value = Corpus> {
    btree_set(1u64..10_000, 0..=max).prop_flat_map(|ids| {
        ids.into_iter().map(record).collect::<Vec<_>>().prop_map(|rs| Corpus::from_records(rs).unwrap())
    })
}

pub fn simple_record(id: RecordId, title: &str, surname: &str) -> BibRecord {
    BibRecord {
        id,
        title: title.into(),
        authors: vec![AuthorName::new(surname, None)],
        year: None,
        serial: None,
        volume: None,
        pages: None,
        doi: None,
        msc: vec![],
        abstract_redacted: false,
    }
}
