#![allow(dead_code)]

pub mod oracle;

use cellguard::model::interchange::load_interchange;
use cellguard::model::{IngestConfig, Workbook};

pub fn figure4() -> Workbook {
    load_interchange(include_str!("../../fixtures/figure4.json"), IngestConfig::default()).expect("fixture loads")
}

pub fn reference() -> Workbook {
    load_interchange(include_str!("../../fixtures/reference.json"), IngestConfig::default()).expect("fixture loads")
}

/// Expected findings on the Figure 4 fixture: kind label, degree, location, current value.
pub const FIGURE4_ROWS: [(&str, &str, &str, &str); 8] = [
    ("Containing Fixed Numbers", "Low", "'Sao Paolo'!J4", "567"),
    ("Jealousy detected", "Medium", "'Sao Paolo'!C12", "1200"),
    ("Jealousy detected", "Medium", "'Sao Paolo'!C12:C18", ""),
    ("Copy-pasting", "Medium", "'Sao Paolo'!A22:K27", "5"),
    (
        "Circle Chain",
        "High",
        "'Mexico City'!B2; 'Mexico City'!H2; Mumbai!G5; Mumbai!F16; 'New York'!B3; 'New York'!T45",
        "",
    ),
    ("Referencing many different cell groups", "High", "'Mexico City'!H4", "3"),
    ("Empty reference", "Low", "'Mexico City'!J4", "765"),
    ("Containing Fixed Numbers", "Low", "'Mexico City'!J5", "45"),
];

/// Minimal grammar check for the DOT subset the emitter writes:
/// `digraph ID { stmt* }` where a statement is an attribute default, a node
/// or an edge, each with an optional `[k=v, ...]` list and a trailing `;`.
pub fn check_dot(text: &str) -> Result<(), String> {
    let mut t = Tokens::new(text);
    t.expect("digraph")?;
    t.id()?;
    t.expect("{")?;
    loop {
        if t.peek() == Some("}") {
            t.next();
            break;
        }
        let first = t.id()?;
        if t.peek() == Some("=") {
            t.next();
            t.id()?;
        } else {
            if matches!(first.as_str(), "graph" | "node" | "edge") {
                t.attrs()?;
            } else {
                if t.peek() == Some("->") {
                    t.next();
                    t.id()?;
                }
                if t.peek() == Some("[") {
                    t.attrs()?;
                }
            }
        }
        t.expect(";")?;
    }
    match t.next() {
        None => Ok(()),
        Some(extra) => Err(format!("trailing `{extra}`")),
    }
}

struct Tokens {
    toks: Vec<String>,
    at: usize,
}

impl Tokens {
    fn new(text: &str) -> Self {
        let mut toks = Vec::new();
        let chars: Vec<char> = text.chars().collect();
        let mut i = 0;
        while i < chars.len() {
            let c = chars[i];
            if c.is_whitespace() {
                i += 1;
            } else if c == '"' {
                let mut s = String::from('"');
                i += 1;
                while i < chars.len() && chars[i] != '"' {
                    if chars[i] == '\\' {
                        s.push(chars[i]);
                        i += 1;
                    }
                    s.push(chars[i]);
                    i += 1;
                }
                s.push('"');
                i += 1;
                toks.push(s);
            } else if c == '-' && chars.get(i + 1) == Some(&'>') {
                toks.push("->".into());
                i += 2;
            } else if "{}[];,=".contains(c) {
                toks.push(c.to_string());
                i += 1;
            } else {
                let mut s = String::new();
                while i < chars.len() && (chars[i].is_alphanumeric() || chars[i] == '_' || chars[i] == '.') {
                    s.push(chars[i]);
                    i += 1;
                }
                if s.is_empty() {
                    toks.push(format!("<bad {c}>"));
                    i += 1;
                } else {
                    toks.push(s);
                }
            }
        }
        Tokens { toks, at: 0 }
    }

    fn peek(&self) -> Option<&str> {
        self.toks.get(self.at).map(String::as_str)
    }

    fn next(&mut self) -> Option<String> {
        let t = self.toks.get(self.at).cloned();
        self.at += 1;
        t
    }

    fn expect(&mut self, want: &str) -> Result<(), String> {
        match self.next() {
            Some(t) if t == want => Ok(()),
            other => Err(format!("expected `{want}`, got {other:?}")),
        }
    }

    fn id(&mut self) -> Result<String, String> {
        match self.next() {
            Some(t) if t.starts_with('"') || t.chars().all(|c| c.is_alphanumeric() || c == '_' || c == '.') => Ok(t),
            other => Err(format!("expected an identifier, got {other:?}")),
        }
    }

    fn attrs(&mut self) -> Result<(), String> {
        self.expect("[")?;
        loop {
            self.id()?;
            self.expect("=")?;
            self.id()?;
            match self.next().as_deref() {
                Some(",") => continue,
                Some("]") => return Ok(()),
                other => return Err(format!("expected `,` or `]`, got {other:?}")),
            }
        }
    }
}
