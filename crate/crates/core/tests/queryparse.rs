mod common;

use std::collections::BTreeSet;

use citematch::corpus::{BibRecord, Corpus, RecordId};
use citematch::index::{fold, normalize};
use citematch::queryparse::{evaluate_query, parse_query, Field, Query, QueryError, Value};
use proptest::prelude::*;

/// Direct per-record reading of the field semantics.
fn holds(q: &Query, r: &BibRecord) -> bool {
    match q {
        Query::And(a, b) => holds(a, r) && holds(b, r),
        Query::Or(a, b) => holds(a, r) || holds(b, r),
        Query::Not(a) => !holds(a, r),
        Query::Term { field, value } => match (field, value) {
            (Field::Py, Value::Years { from, to }) => r.year.is_some_and(|y| *from <= y && y <= *to),
            (Field::An, Value::Id(id)) => r.id == *id,
            (Field::Au, Value::Text(s)) => {
                let want = fold(s.split(',').next().unwrap()).split_whitespace().collect::<Vec<_>>().join(" ");
                !want.is_empty()
                    && r.authors.iter().any(|a| fold(&a.surname).split_whitespace().collect::<Vec<_>>().join(" ") == want)
            }
            (Field::Ti, Value::Text(s)) => {
                let have = normalize(&r.title);
                let want = normalize(s);
                !want.is_empty() && want.iter().all(|w| have.contains(w))
            }
            (Field::So, Value::Text(s)) => {
                let have = normalize(r.serial.as_deref().unwrap_or(""));
                let want = normalize(s);
                !want.is_empty() && want.iter().all(|w| have.contains(w))
            }
            (Field::Cc, Value::Text(s)) => !s.trim().is_empty() && r.msc.iter().any(|c| c.starts_with(s.trim())),
            _ => false,
        },
    }
}

fn brute(q: &Query, c: &Corpus) -> BTreeSet<RecordId> {
    c.records().filter(|r| holds(q, r)).map(|r| r.id).collect()
}

fn leaf() -> impl Strategy<Value = Query> {
    let text = |f: Field, s: BoxedStrategy<String>| s.prop_map(move |v| Query::Term { field: f, value: Value::Text(v) });
    prop_oneof![
        text(Field::Ti, prop::sample::select(common::WORDS).prop_map(str::to_owned).boxed()),
        text(Field::Ti, "[a-z]{2,5}( [a-z]{2,5})?".boxed()),
        text(Field::Au, prop::sample::select(common::SURNAMES).prop_map(str::to_owned).boxed()),
        text(Field::So, prop::sample::select(&["math", "ann", "phys", "invent", "Math. Z."][..]).prop_map(str::to_owned).boxed()),
        text(Field::Cc, common::msc_code().prop_map(|c| c[..2].to_owned()).boxed()),
        (1500i32..2100, 0i32..80).prop_map(|(a, d)| Query::Term { field: Field::Py, value: Value::Years { from: a, to: a + d } }),
        (1u64..10_000).prop_map(|id| Query::Term { field: Field::An, value: Value::Id(id) }),
    ]
}

fn query() -> impl Strategy<Value = Query> {
    leaf().prop_recursive(3, 16, 2, |inner| {
        prop_oneof![
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Query::and(a, b)),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Query::or(a, b)),
            inner.prop_map(Query::not),
        ]
    })
}

fn ti(s: &str) -> Query {
    Query::Term { field: Field::Ti, value: Value::Text(s.into()) }
}

#[test]
fn precedence_goldens() {
    assert_eq!(parse_query("a | b & c").unwrap(), Query::or(ti("a"), Query::and(ti("b"), ti("c"))));
    assert_eq!(parse_query("!a & b").unwrap(), Query::and(Query::not(ti("a")), ti("b")));
    assert!(matches!(parse_query("xx:foo"), Err(QueryError::UnknownField { ref field, .. }) if field == "xx"));
}

#[test]
fn msc_and_year_fixture() {
    let mut records = Vec::new();
    for (i, (code, year)) in [("33C05", 1995), ("33B15", 1989), ("11M06", 1991), ("33", 1999), ("65D20", 1990)].iter().enumerate() {
        let mut r = common::simple_record(i as u64 + 1, "Record", "X");
        r.msc = vec![code.to_string()];
        r.year = Some(*year);
        records.push(r);
    }
    let c = Corpus::from_records(records).unwrap();
    let q = parse_query("cc:33 & py:1990-1999").unwrap();
    assert_eq!(evaluate_query(&q, &c), BTreeSet::from([1, 4]));
    assert_eq!(evaluate_query(&q, &c), brute(&q, &c));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn print_parse_fixpoint(q in query()) {
        prop_assert!(q.depth() <= 4);
        let printed = q.to_string();
        let back = parse_query(&printed).unwrap();
        prop_assert_eq!(&back, &q);
        prop_assert_eq!(back.to_string(), printed);
    }

    #[test]
    fn evaluation_equals_brute_force(q in query(), c in common::corpus(100)) {
        prop_assert_eq!(evaluate_query(&q, &c), brute(&q, &c));
    }

    #[test]
    fn de_morgan_and_complement(a in query(), b in query(), c in common::corpus(40)) {
        let lhs = evaluate_query(&Query::not(Query::and(a.clone(), b.clone())), &c);
        let rhs = evaluate_query(&Query::or(Query::not(a.clone()), Query::not(b)), &c);
        prop_assert_eq!(lhs, rhs);
        let all = evaluate_query(&Query::or(Query::not(a.clone()), a), &c);
        prop_assert_eq!(all, c.ids().collect::<BTreeSet<_>>());
    }

    #[test]
    fn parser_never_panics(s in "\\PC{0,40}") {
        let _ = parse_query(&s);
    }
}
