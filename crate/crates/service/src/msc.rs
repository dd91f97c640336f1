//! Top-level MSC section titles.

use std::collections::BTreeMap;
use std::sync::OnceLock;

const TABLE: &str = include_str!("msc_titles.tsv");

fn table() -> &'static BTreeMap<&'static str, &'static str> {
    static T: OnceLock<BTreeMap<&'static str, &'static str>> = OnceLock::new();
    T.get_or_init(|| {
        TABLE
            .lines()
            .filter_map(|l| l.split_once('\t'))
            .collect()
    })
}

/// Title of the two-digit section a code belongs to.
pub fn section_title(code: &str) -> Option<&'static str> {
    table().get(code.get(..2)?).copied()
}

pub fn sections() -> impl Iterator<Item = (&'static str, &'static str)> {
    table().iter().map(|(k, v)| (*k, *v))
}
