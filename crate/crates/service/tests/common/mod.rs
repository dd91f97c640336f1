#![allow(dead_code)]

use quick_xml::events::Event;
use quick_xml::Reader;

/// Minimal element tree, enough to inspect OAI responses.
#[derive(Debug, Clone, Default)]
pub struct Elem {
    pub name: String,
    pub attrs: Vec<(String, String)>,
    pub text: String,
    pub children: Vec<Elem>,
}

impl Elem {
    pub fn attr(&self, key: &str) -> Option<&str> {
        self.attrs.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn child(&self, name: &str) -> Option<&Elem> {
        self.children.iter().find(|c| c.name == name)
    }

    /// Every descendant (depth first) with this qualified name.
    pub fn find_all<'a>(&'a self, name: &str) -> Vec<&'a Elem> {
        let mut out = Vec::new();
        let mut stack = vec![self];
        while let Some(e) = stack.pop() {
            if e.name == name {
                out.push(e);
            }
            stack.extend(e.children.iter().rev());
        }
        out
    }

    pub fn find(&self, name: &str) -> Option<&Elem> {
        self.find_all(name).into_iter().next()
    }

    pub fn texts(&self, name: &str) -> Vec<String> {
        self.find_all(name).into_iter().map(|e| e.text.clone()).collect()
    }
}

fn open(e: &quick_xml::events::BytesStart<'_>) -> Result<Elem, String> {
    let mut attrs = Vec::new();
    for a in e.attributes() {
        let a = a.map_err(|e| e.to_string())?;
        let v = a.unescape_value().map_err(|e| e.to_string())?;
        attrs.push((String::from_utf8_lossy(a.key.as_ref()).into_owned(), v.into_owned()));
    }
    Ok(Elem { name: String::from_utf8_lossy(e.name().as_ref()).into_owned(), attrs, ..Elem::default() })
}

/// Parses a whole document; any well-formedness error is returned.
pub fn parse_xml(xml: &str) -> Result<Elem, String> {
    let mut reader = Reader::from_str(xml);
    reader.config_mut().trim_text(true);
    let mut stack: Vec<Elem> = Vec::new();
    let mut root = None;
    loop {
        match reader.read_event().map_err(|e| e.to_string())? {
            Event::Start(e) => stack.push(open(&e)?),
            Event::Empty(e) => {
                let el = open(&e)?;
                match stack.last_mut() {
                    Some(p) => p.children.push(el),
                    None => root = Some(el),
                }
            }
            Event::End(_) => {
                let el = stack.pop().ok_or("unbalanced end tag")?;
                match stack.last_mut() {
                    Some(p) => p.children.push(el),
                    None if root.is_none() => root = Some(el),
                    None => return Err("multiple roots".into()),
                }
            }
            Event::Text(t) => {
                let s = t.unescape().map_err(|e| e.to_string())?;
                if let Some(p) = stack.last_mut() {
                    p.text.push_str(&s);
                } else if !s.trim().is_empty() {
                    return Err("text outside the root".into());
                }
            }
            Event::Eof => break,
            _ => {}
        }
    }
    if !stack.is_empty() {
        return Err("unclosed element".into());
    }
    root.ok_or_else(|| "empty document".into())
}
