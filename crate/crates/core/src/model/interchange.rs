//! JSON interchange format.
//!
//! ```json
//! {"name": "Book", "sheets": [{"name": "S", "visibility": "hidden",
//!   "cells": {"A1": {"v": 1.5}, "A2": {"f": "=A1*2", "v": 3}, "A3": {"v": {"err": "DIV0"}}}}],
//!  "external_values": {"[Budget.xlsx]Q1!A1": 10},
//!  "defined_names": {"Rate": "S!$A$1"}}
//! ```
//!
//! Unknown fields are rejected with a JSON pointer to the offending member.

use serde_json::{json, Map, Value as Json};

use super::{
    parse_a1, Content, ErrorCode, ExternalCell, IngestConfig, ModelError, Sheet, Value, Visibility, Workbook,
};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum InterchangeError {
    #[error("schema violation at `{pointer}`: {detail}")]
    SchemaViolation { pointer: String, detail: String },
}

fn violation(pointer: impl Into<String>, detail: impl Into<String>) -> InterchangeError {
    InterchangeError::SchemaViolation { pointer: pointer.into(), detail: detail.into() }
}

fn escape_pointer(key: &str) -> String {
    key.replace('~', "~0").replace('/', "~1")
}

pub fn load_interchange(doc: &str, cfg: IngestConfig) -> Result<Workbook, InterchangeError> {
    let root: Json = serde_json::from_str(doc).map_err(|e| violation("", format!("invalid JSON: {e}")))?;
    let obj = root.as_object().ok_or_else(|| violation("", "expected an object"))?;
    allow_keys(obj, "", &["name", "sheets", "external_values", "defined_names"])?;

    let name = match obj.get("name") {
        None | Some(Json::Null) => String::new(),
        Some(Json::String(s)) => s.clone(),
        Some(_) => return Err(violation("/name", "expected a string")),
    };
    let sheets_json = obj
        .get("sheets")
        .and_then(Json::as_array)
        .ok_or_else(|| violation("/sheets", "expected an array of sheets"))?;
    let mut sheets = Vec::with_capacity(sheets_json.len());
    for (i, s) in sheets_json.iter().enumerate() {
        sheets.push(load_sheet(s, &format!("/sheets/{i}"), cfg)?);
    }

    let mut wb = Workbook { name, sheets, ..Workbook::default() };
    if let Err(e) = wb.validate() {
        let pointer = match &e {
            ModelError::DuplicateSheet(n) => {
                let i = wb.sheets.iter().rposition(|s| &s.name == n).unwrap_or(0);
                format!("/sheets/{i}/name")
            }
            _ => "/sheets".to_string(),
        };
        return Err(violation(pointer, e.to_string()));
    }

    if let Some(ext) = obj.get("external_values") {
        let map = ext.as_object().ok_or_else(|| violation("/external_values", "expected an object"))?;
        for (k, v) in map {
            let pointer = format!("/external_values/{}", escape_pointer(k));
            let cell: ExternalCell =
                k.parse().map_err(|_| violation(&pointer, "expected a `[Book]Sheet!A1` key"))?;
            let value = value_from_json(v).ok_or_else(|| violation(&pointer, "expected a value"))?;
            wb.external_values.insert(cell, value);
        }
    }
    if let Some(names) = obj.get("defined_names") {
        let map = names.as_object().ok_or_else(|| violation("/defined_names", "expected an object"))?;
        for (k, v) in map {
            let target = v
                .as_str()
                .ok_or_else(|| violation(format!("/defined_names/{}", escape_pointer(k)), "expected a string"))?;
            wb.defined_names.insert(k.clone(), target.to_string());
        }
    }
    wb.refresh_external_sources();
    Ok(wb)
}

fn allow_keys(obj: &Map<String, Json>, pointer: &str, allowed: &[&str]) -> Result<(), InterchangeError> {
    for k in obj.keys() {
        if !allowed.contains(&k.as_str()) {
            return Err(violation(format!("{pointer}/{}", escape_pointer(k)), "unknown field"));
        }
    }
    Ok(())
}

fn load_sheet(s: &Json, pointer: &str, cfg: IngestConfig) -> Result<Sheet, InterchangeError> {
    let obj = s.as_object().ok_or_else(|| violation(pointer, "expected a sheet object"))?;
    allow_keys(obj, pointer, &["name", "visibility", "cells"])?;
    let name = obj
        .get("name")
        .and_then(Json::as_str)
        .filter(|n| !n.is_empty())
        .ok_or_else(|| violation(format!("{pointer}/name"), "expected a non-empty string"))?;
    let visibility = match obj.get("visibility") {
        None => Visibility::Visible,
        Some(v) => serde_json::from_value(v.clone()).map_err(|_| {
            violation(format!("{pointer}/visibility"), "expected visible, hidden or very_hidden")
        })?,
    };
    let mut sheet = Sheet::new(name).with_visibility(visibility);
    let cells = match obj.get("cells") {
        None => return Err(violation(format!("{pointer}/cells"), "missing cells object")),
        Some(c) => c.as_object().ok_or_else(|| violation(format!("{pointer}/cells"), "expected an object"))?,
    };
    for (key, entry) in cells {
        let cp = format!("{pointer}/cells/{}", escape_pointer(key));
        let pos = parse_a1(key).ok_or_else(|| violation(&cp, "expected an A1 cell key"))?;
        let content = content_from_json(entry, cfg).map_err(|detail| violation(&cp, detail))?;
        sheet.set(pos, content).map_err(|e| violation(&cp, e.to_string()))?;
    }
    Ok(sheet)
}

/// Decodes one cell entry (`{"v": ...}` or `{"f": "=...", "v": ...}`).
pub fn content_from_json(entry: &Json, cfg: IngestConfig) -> Result<Content, String> {
    let obj = entry.as_object().ok_or("expected a cell object")?;
    if let Some(k) = obj.keys().find(|k| !matches!(k.as_str(), "v" | "f")) {
        return Err(format!("unknown field `{k}`"));
    }
    let value = match obj.get("v") {
        None => None,
        Some(v) => Some(value_from_json(v).ok_or("expected a number, string, boolean, null or {\"err\": code}")?),
    };
    match obj.get("f") {
        None => Ok(Content::from_value(value.unwrap_or(Value::Blank))),
        Some(Json::String(f)) if f.starts_with('=') => {
            let cached = value.map(|v| match v {
                Value::Text(s) => cfg.parse_number(&s).map_or(Value::Text(s), Value::Number),
                other => other,
            });
            Ok(Content::formula(cfg.canonical_formula(f), cached.filter(|v| !v.is_blank())))
        }
        Some(_) => Err("formula must be a string starting with `=`".into()),
    }
}

pub fn content_to_json(content: &Content) -> Json {
    match content {
        Content::Formula { text, cached: Some(v) } => json!({"f": text, "v": value_to_json(v)}),
        Content::Formula { text, cached: None } => json!({ "f": text }),
        Content::Blank => json!({}),
        other => json!({ "v": value_to_json(&other.value()) }),
    }
}

pub fn value_from_json(v: &Json) -> Option<Value> {
    Some(match v {
        Json::Null => Value::Blank,
        Json::Bool(b) => Value::Bool(*b),
        Json::Number(n) => Value::Number(n.as_f64()?),
        Json::String(s) => Value::Text(s.clone()),
        Json::Object(o) if o.len() == 1 => Value::Error(ErrorCode::parse_any(o.get("err")?.as_str()?)?),
        _ => return None,
    })
}

pub fn value_to_json(v: &Value) -> Json {
    match v {
        Value::Number(n) => json!(n),
        Value::Text(s) => json!(s),
        Value::Bool(b) => json!(b),
        Value::Error(e) => json!({ "err": e.code() }),
        Value::Blank => Json::Null,
    }
}

/// Serializes a workbook; `load_interchange` of the result reproduces it.
pub fn save_interchange(wb: &Workbook) -> String {
    let mut root = Map::new();
    if !wb.name.is_empty() {
        root.insert("name".into(), json!(wb.name));
    }
    let sheets: Vec<Json> = wb
        .sheets
        .iter()
        .map(|s| {
            let mut obj = Map::new();
            obj.insert("name".into(), json!(s.name));
            if s.visibility != Visibility::Visible {
                obj.insert("visibility".into(), json!(s.visibility.as_str()));
            }
            let cells: Map<String, Json> = s.cells().map(|(p, c)| (p.to_a1(), content_to_json(c))).collect();
            obj.insert("cells".into(), Json::Object(cells));
            Json::Object(obj)
        })
        .collect();
    root.insert("sheets".into(), Json::Array(sheets));
    if !wb.external_values.is_empty() {
        let ext: Map<String, Json> =
            wb.external_values.iter().map(|(k, v)| (k.to_string(), value_to_json(v))).collect();
        root.insert("external_values".into(), Json::Object(ext));
    }
    if !wb.defined_names.is_empty() {
        let names: Map<String, Json> = wb.defined_names.iter().map(|(k, v)| (k.clone(), json!(v))).collect();
        root.insert("defined_names".into(), Json::Object(names));
    }
    let mut out = serde_json::to_string_pretty(&Json::Object(root)).expect("serializable");
    out.push('\n');
    out
}
