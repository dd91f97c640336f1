//! Flat `key = value` configuration files. `#` starts a comment line.

use std::collections::BTreeMap;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("config line {line}: {message}")]
pub struct KvError {
    pub line: usize,
    pub message: String,
}

pub fn parse_key_values(text: &str) -> Result<BTreeMap<String, String>, KvError> {
    let mut out = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let err = |message: &str| KvError { line: i + 1, message: message.to_owned() };
        let (k, v) = line.split_once('=').ok_or_else(|| err("expected `key = value`"))?;
        let k = k.trim();
        if k.is_empty() {
            return Err(err("empty key"));
        }
        if out.insert(k.to_owned(), v.trim().to_owned()).is_some() {
            return Err(err(&format!("duplicate key `{k}`")));
        }
    }
    Ok(out)
}
