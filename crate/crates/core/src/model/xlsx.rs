//! XLSX ingestion (and a minimal writer for round trips and mutated output).
//!
//! Supported parts: workbook, relationships, shared strings, worksheets
//! (plain, shared and array formulas), sheet state and external links with
//! their cached values. Charts, pivot tables, styles and drawings are ignored.

use std::collections::{BTreeMap, HashMap};
use std::io::{Cursor, Read, Seek, Write};
use std::path::Path;

use quick_xml::escape::escape;
use quick_xml::events::Event;
use zip::write::SimpleFileOptions;
use zip::{ZipArchive, ZipWriter};

use crate::formula::{self, Expr, Locale};

use super::{
    parse_a1, Content, ErrorCode, ExternalCell, IngestConfig, Pos, Sheet, Value, Visibility, Workbook,
};

#[derive(Debug, thiserror::Error)]
pub enum XlsxError {
    #[error("not a ZIP archive: {0}")]
    NotAnArchive(String),
    #[error("malformed workbook part `{part}`: {detail}")]
    MalformedWorkbookXml { part: String, detail: String },
    #[error("unsupported feature: {0}")]
    UnsupportedFeature(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn malformed(part: &str, detail: impl Into<String>) -> XlsxError {
    XlsxError::MalformedWorkbookXml { part: part.to_string(), detail: detail.into() }
}

const MAIN_NS: &str = "http://schemas.openxmlformats.org/spreadsheetml/2006/main";
const STRICT_NS: &str = "http://purl.oclc.org/ooxml/spreadsheetml/main";
const REL_NS: &str = "http://schemas.openxmlformats.org/officeDocument/2006/relationships";

/// Minimal element tree; attribute keys are kept qualified.
#[derive(Debug, Default)]
struct Node {
    name: String,
    attrs: Vec<(String, String)>,
    children: Vec<Node>,
    text: String,
}

impl Node {
    /// Looks an attribute up by local name (`id` matches `r:id`).
    fn attr(&self, local: &str) -> Option<&str> {
        self.attrs.iter().find_map(|(k, v)| {
            let name = k.rsplit(':').next().unwrap_or(k);
            (name == local && (k == local || k.contains(':'))).then_some(v.as_str())
        })
    }

    /// Exact qualified attribute name.
    fn attr_exact(&self, key: &str) -> Option<&str> {
        self.attrs.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    fn child(&self, name: &str) -> Option<&Node> {
        self.children.iter().find(|c| c.name == name)
    }

    fn children_named<'a>(&'a self, name: &'a str) -> impl Iterator<Item = &'a Node> + 'a {
        self.children.iter().filter(move |c| c.name == name)
    }

    /// Concatenated text of every descendant `t` element, skipping phonetic runs.
    fn all_text(&self) -> String {
        let mut out = String::new();
        self.collect_t(&mut out);
        out
    }

    fn collect_t(&self, out: &mut String) {
        if self.name == "rPh" {
            return;
        }
        if self.name == "t" {
            out.push_str(&self.text);
        }
        for c in &self.children {
            c.collect_t(out);
        }
    }
}

fn local(qname: &[u8]) -> String {
    let s = String::from_utf8_lossy(qname);
    s.rsplit(':').next().unwrap_or(&s).to_string()
}

fn parse_xml(part: &str, bytes: &[u8]) -> Result<Node, XlsxError> {
    let mut reader = quick_xml::Reader::from_reader(bytes);
    let mut buf = Vec::new();
    let mut stack: Vec<Node> = vec![Node::default()];
    loop {
        let ev = reader.read_event_into(&mut buf).map_err(|e| malformed(part, e.to_string()))?;
        match ev {
            Event::Start(e) => stack.push(element(part, &e)?),
            Event::Empty(e) => {
                let node = element(part, &e)?;
                stack.last_mut().expect("root").children.push(node);
            }
            Event::End(_) => {
                let node = stack.pop().expect("balanced");
                let parent = stack.last_mut().ok_or_else(|| malformed(part, "unbalanced end tag"))?;
                parent.children.push(node);
            }
            Event::Text(t) => {
                let text = t.unescape().map_err(|e| malformed(part, e.to_string()))?;
                stack.last_mut().expect("root").text.push_str(&text);
            }
            Event::CData(t) => {
                stack.last_mut().expect("root").text.push_str(&String::from_utf8_lossy(&t));
            }
            Event::Eof => break,
            _ => {}
        }
        buf.clear();
    }
    if stack.len() != 1 {
        return Err(malformed(part, "unexpected end of document"));
    }
    let root = stack.pop().expect("root");
    root.children.into_iter().next().ok_or_else(|| malformed(part, "empty document"))
}

fn element(part: &str, e: &quick_xml::events::BytesStart<'_>) -> Result<Node, XlsxError> {
    let mut node = Node { name: local(e.name().as_ref()), ..Node::default() };
    for a in e.attributes() {
        let a = a.map_err(|err| malformed(part, err.to_string()))?;
        let key = String::from_utf8_lossy(a.key.as_ref()).to_string();
        let value = a.unescape_value().map_err(|err| malformed(part, err.to_string()))?.to_string();
        node.attrs.push((key, value));
    }
    Ok(node)
}

struct Package<R> {
    zip: ZipArchive<R>,
}

impl<R: Read + Seek> Package<R> {
    fn read(&mut self, part: &str) -> Result<Option<Vec<u8>>, XlsxError> {
        let mut f = match self.zip.by_name(part) {
            Ok(f) => f,
            Err(zip::result::ZipError::FileNotFound) => return Ok(None),
            Err(e) => return Err(malformed(part, e.to_string())),
        };
        let mut buf = Vec::new();
        f.read_to_end(&mut buf)?;
        Ok(Some(buf))
    }

    fn xml(&mut self, part: &str) -> Result<Option<Node>, XlsxError> {
        match self.read(part)? {
            Some(bytes) => parse_xml(part, &bytes).map(Some),
            None => Ok(None),
        }
    }

    /// Relationship id → (type suffix, resolved part path).
    fn rels(&mut self, owner: &str) -> Result<HashMap<String, (String, String)>, XlsxError> {
        let (dir, file) = owner.rsplit_once('/').unwrap_or(("", owner));
        let rels_part = if dir.is_empty() { format!("_rels/{file}.rels") } else { format!("{dir}/_rels/{file}.rels") };
        let mut out = HashMap::new();
        let Some(root) = self.xml(&rels_part)? else { return Ok(out) };
        for r in root.children_named("Relationship") {
            let (Some(id), Some(target)) = (r.attr_exact("Id"), r.attr_exact("Target")) else { continue };
            let kind = r.attr_exact("Type").unwrap_or_default();
            let kind = kind.rsplit('/').next().unwrap_or(kind).to_string();
            let external = r.attr_exact("TargetMode") == Some("External");
            let path = if external { target.to_string() } else { resolve(dir, target) };
            out.insert(id.to_string(), (kind, path));
        }
        Ok(out)
    }
}

fn resolve(dir: &str, target: &str) -> String {
    if let Some(abs) = target.strip_prefix('/') {
        return abs.to_string();
    }
    let mut parts: Vec<&str> = if dir.is_empty() { Vec::new() } else { dir.split('/').collect() };
    for seg in target.split('/') {
        match seg {
            ".." => {
                parts.pop();
            }
            "." | "" => {}
            s => parts.push(s),
        }
    }
    parts.join("/")
}

/// Book name from an external link target such as `file:///C:/x/Budget%20Q1.xlsx`.
fn book_name(target: &str) -> String {
    let last = target.rsplit(['/', '\\']).next().unwrap_or(target);
    let mut out = String::new();
    let bytes = last.as_bytes();
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] == b'%' && i + 2 < bytes.len() {
            if let Ok(b) = u8::from_str_radix(&last[i + 1..i + 3], 16) {
                out.push(b as char);
                i += 3;
                continue;
            }
        }
        out.push(bytes[i] as char);
        i += 1;
    }
    out
}

pub fn load_xlsx(path: &Path, cfg: IngestConfig) -> Result<Workbook, XlsxError> {
    let bytes = std::fs::read(path)?;
    let name = path.file_name().map(|n| n.to_string_lossy().to_string()).unwrap_or_default();
    load_xlsx_bytes(&bytes, &name, cfg)
}

pub fn load_xlsx_bytes(bytes: &[u8], name: &str, cfg: IngestConfig) -> Result<Workbook, XlsxError> {
    // OOXML formulas and values are locale-independent; `cfg` only matters for
    // text that was typed into cells as numbers-as-text, which we keep as text.
    let _ = cfg;
    let zip = ZipArchive::new(Cursor::new(bytes)).map_err(|e| XlsxError::NotAnArchive(e.to_string()))?;
    let mut pkg = Package { zip };

    let root_rels = pkg.rels("")?;
    let wb_part = root_rels
        .values()
        .find(|(kind, _)| kind == "officeDocument")
        .map(|(_, p)| p.clone())
        .unwrap_or_else(|| "xl/workbook.xml".to_string());
    let wb_xml = pkg.xml(&wb_part)?.ok_or_else(|| malformed(&wb_part, "missing workbook part"))?;
    if wb_xml.name != "workbook" {
        return Err(malformed(&wb_part, format!("root element is `{}`", wb_xml.name)));
    }
    if wb_xml.attrs.iter().any(|(_, v)| v == STRICT_NS) {
        return Err(XlsxError::UnsupportedFeature("strict OOXML".into()));
    }
    let rels = pkg.rels(&wb_part)?;

    let shared = match rels.values().find(|(k, _)| k == "sharedStrings") {
        Some((_, p)) => {
            let p = p.clone();
            match pkg.xml(&p)? {
                Some(sst) => sst.children_named("si").map(Node::all_text).collect(),
                None => Vec::new(),
            }
        }
        None => Vec::new(),
    };

    // External books, indexed 1.. in formula text as `[n]Sheet!A1`.
    let mut books: Vec<String> = Vec::new();
    let mut external_values = BTreeMap::new();
    if let Some(ext_refs) = wb_xml.child("externalReferences") {
        for (i, er) in ext_refs.children_named("externalReference").enumerate() {
            let rid = er.attr("id").unwrap_or_default();
            let Some((_, part)) = rels.get(rid).cloned() else {
                books.push(format!("external{}", i + 1));
                continue;
            };
            let link_rels = pkg.rels(&part)?;
            let target = link_rels
                .values()
                .find(|(k, _)| k.starts_with("externalLinkPath") || k == "xlExternalLinkPath/xlPathMissing")
                .map(|(_, t)| t.clone());
            let book = target.as_deref().map(book_name).unwrap_or_else(|| format!("external{}", i + 1));
            if let Some(link) = pkg.xml(&part)? {
                read_external_cache(&link, &book, &mut external_values);
            }
            books.push(book);
        }
    }

    let mut sheets = Vec::new();
    let sheets_node = wb_xml.child("sheets").ok_or_else(|| malformed(&wb_part, "missing <sheets>"))?;
    for s in sheets_node.children_named("sheet") {
        let sheet_name = s.attr_exact("name").ok_or_else(|| malformed(&wb_part, "sheet without name"))?;
        let visibility = match s.attr_exact("state") {
            None | Some("visible") => Visibility::Visible,
            Some("hidden") => Visibility::Hidden,
            Some("veryHidden") => Visibility::VeryHidden,
            Some(other) => return Err(malformed(&wb_part, format!("unknown sheet state `{other}`"))),
        };
        let rid = s.attr("id").ok_or_else(|| malformed(&wb_part, "sheet without r:id"))?;
        let (kind, part) = rels.get(rid).cloned().ok_or_else(|| malformed(&wb_part, format!("dangling relationship {rid}")))?;
        match kind.as_str() {
            "worksheet" => {}
            "chartsheet" => continue,
            other => return Err(XlsxError::UnsupportedFeature(other.to_string())),
        }
        let xml = pkg.xml(&part)?.ok_or_else(|| malformed(&part, "missing worksheet part"))?;
        let mut sheet = Sheet::new(sheet_name).with_visibility(visibility);
        read_sheet_data(&part, &xml, &shared, &books, &mut sheet)?;
        sheets.push(sheet);
    }

    let mut defined_names = BTreeMap::new();
    if let Some(dn) = wb_xml.child("definedNames") {
        for d in dn.children_named("definedName") {
            if let Some(n) = d.attr_exact("name") {
                defined_names.insert(n.to_string(), d.text.clone());
            }
        }
    }

    let stem = name.rsplit_once('.').map_or(name, |(s, _)| s).to_string();
    let mut wb = Workbook { name: stem, sheets, external_sources: Vec::new(), defined_names, external_values };
    wb.validate().map_err(|e| malformed(&wb_part, e.to_string()))?;
    wb.refresh_external_sources();
    Ok(wb)
}

fn read_external_cache(link: &Node, book: &str, out: &mut BTreeMap<ExternalCell, Value>) {
    let Some(eb) = link.child("externalBook") else { return };
    let names: Vec<String> = eb
        .child("sheetNames")
        .map(|n| n.children_named("sheetName").filter_map(|s| s.attr_exact("val")).map(str::to_string).collect())
        .unwrap_or_default();
    let Some(ds) = eb.child("sheetDataSet") else { return };
    for sd in ds.children_named("sheetData") {
        let idx: usize = sd.attr_exact("sheetId").and_then(|s| s.parse().ok()).unwrap_or(usize::MAX);
        let Some(sheet) = names.get(idx) else { continue };
        for row in sd.children_named("row") {
            for cell in row.children_named("cell") {
                let Some(pos) = cell.attr_exact("r").and_then(parse_a1) else { continue };
                let raw = cell.child("v").map(|v| v.text.clone()).unwrap_or_default();
                let value = typed_value(cell.attr_exact("t"), &raw, &[]);
                out.insert(ExternalCell { book: book.to_string(), sheet: sheet.clone(), pos }, value);
            }
        }
    }
}

fn typed_value(t: Option<&str>, raw: &str, shared: &[String]) -> Value {
    match t {
        Some("s") => raw
            .trim()
            .parse::<usize>()
            .ok()
            .and_then(|i| shared.get(i))
            .map_or(Value::Blank, |s| Value::Text(s.clone())),
        Some("str") | Some("inlineStr") | Some("d") => Value::Text(raw.to_string()),
        Some("b") => Value::Bool(raw.trim() == "1"),
        Some("e") => ErrorCode::parse_any(raw).map_or(Value::Error(ErrorCode::Value), Value::Error),
        _ if raw.trim().is_empty() => Value::Blank,
        _ => raw.trim().parse::<f64>().map_or(Value::Text(raw.to_string()), Value::Number),
    }
}

/// Rewrites `[n]` book indices to names and drops `_xlfn.` style prefixes.
fn normalize_formula(ast: &mut Expr, books: &[String]) {
    ast.walk_mut(&mut |e| match e {
        Expr::Ref(span) | Expr::Range(span) => {
            if let Some(book) = &span.external_book {
                if let Some(name) = book.parse::<usize>().ok().and_then(|i| books.get(i.wrapping_sub(1))) {
                    span.external_book = Some(name.clone());
                }
            }
        }
        Expr::Function { name, .. } => {
            for prefix in ["_XLFN._XLWS.", "_XLFN.", "_XLWS."] {
                if let Some(rest) = name.strip_prefix(prefix) {
                    *name = rest.to_string();
                }
            }
        }
        _ => {}
    });
}

fn read_sheet_data(
    part: &str,
    xml: &Node,
    shared: &[String],
    books: &[String],
    sheet: &mut Sheet,
) -> Result<(), XlsxError> {
    let Some(data) = xml.child("sheetData") else { return Ok(()) };
    let mut shared_formulas: HashMap<String, (Pos, Expr)> = HashMap::new();
    for row in data.children_named("row") {
        for c in row.children_named("c") {
            let r = c.attr_exact("r").ok_or_else(|| malformed(part, "cell without `r`"))?;
            let pos = parse_a1(r).ok_or_else(|| malformed(part, format!("bad cell reference `{r}`")))?;
            let t = c.attr_exact("t");
            let raw = match t {
                Some("inlineStr") => c.child("is").map(Node::all_text).unwrap_or_default(),
                _ => c.child("v").map(|v| v.text.clone()).unwrap_or_default(),
            };
            let value = typed_value(t, &raw, shared);
            let formula = match c.child("f") {
                Some(f) if f.attr_exact("t") == Some("shared") => {
                    let si = f.attr_exact("si").unwrap_or_default().to_string();
                    if !f.text.trim().is_empty() {
                        let text = format!("={}", f.text);
                        match formula::parse(&text, Locale::Point) {
                            Ok(mut ast) => {
                                normalize_formula(&mut ast, books);
                                shared_formulas.insert(si, (pos, ast.clone()));
                                Some(formula::print(&ast, Locale::Point))
                            }
                            Err(_) => Some(text),
                        }
                    } else {
                        let (origin, master) = shared_formulas
                            .get(&si)
                            .ok_or_else(|| malformed(part, format!("shared formula {si} used before its master")))?;
                        let dr = i64::from(pos.row) - i64::from(origin.row);
                        let dc = i64::from(pos.col) - i64::from(origin.col);
                        Some(formula::print(&formula::shift_refs(master, dr, dc, false), Locale::Point))
                    }
                }
                Some(f) if !f.text.trim().is_empty() => {
                    let text = format!("={}", f.text);
                    Some(match formula::parse(&text, Locale::Point) {
                        Ok(mut ast) => {
                            normalize_formula(&mut ast, books);
                            formula::print(&ast, Locale::Point)
                        }
                        Err(_) => text,
                    })
                }
                _ => None,
            };
            let content = match formula {
                Some(text) => Content::formula(text, (!value.is_blank()).then_some(value)),
                None => Content::from_value(value),
            };
            sheet.set(pos, content).map_err(|e| malformed(part, e.to_string()))?;
        }
    }
    Ok(())
}

/// Writes the supported subset back to an XLSX package.
pub fn save_xlsx(wb: &Workbook, path: &Path) -> Result<(), XlsxError> {
    std::fs::write(path, save_xlsx_bytes(wb)?)?;
    Ok(())
}

pub fn save_xlsx_bytes(wb: &Workbook) -> Result<Vec<u8>, XlsxError> {
    let books: Vec<String> = {
        let mut names: Vec<String> = wb.external_sources.iter().map(|e| e.name.clone()).collect();
        for k in wb.external_values.keys() {
            if !names.contains(&k.book) {
                names.push(k.book.clone());
            }
        }
        names
    };
    let mut parts: Vec<(String, String)> = Vec::new();

    let mut ct = String::from(
        r#"<?xml version="1.0" encoding="UTF-8" standalone="yes"?><Types xmlns="http://schemas.openxmlformats.org/package/2006/content-types"><Default Extension="rels" ContentType="application/vnd.openxmlformats-package.relationships+xml"/><Default Extension="xml" ContentType="application/xml"/><Override PartName="/xl/workbook.xml" ContentType="application/vnd.openxmlformats-officedocument.spreadsheetml.sheet.main+xml"/>"#,
    );
    for i in 1..=wb.sheets.len() {
        ct.push_str(&format!(
            r#"<Override PartName="/xl/worksheets/sheet{i}.xml" ContentType="application/vnd.openxmlformats-officedocument.spreadsheetml.worksheet+xml"/>"#
        ));
    }
    for i in 1..=books.len() {
        ct.push_str(&format!(
            r#"<Override PartName="/xl/externalLinks/externalLink{i}.xml" ContentType="application/vnd.openxmlformats-officedocument.spreadsheetml.externalLink+xml"/>"#
        ));
    }
    ct.push_str("</Types>");
    parts.push(("[Content_Types].xml".into(), ct));
    parts.push((
        "_rels/.rels".into(),
        format!(
            r#"<?xml version="1.0" encoding="UTF-8" standalone="yes"?><Relationships xmlns="http://schemas.openxmlformats.org/package/2006/relationships"><Relationship Id="rId1" Type="{REL_NS}/officeDocument" Target="xl/workbook.xml"/></Relationships>"#
        ),
    ));

    let mut wbx = format!(
        r#"<?xml version="1.0" encoding="UTF-8" standalone="yes"?><workbook xmlns="{MAIN_NS}" xmlns:r="{REL_NS}"><sheets>"#
    );
    let mut wrels = String::from(
        r#"<?xml version="1.0" encoding="UTF-8" standalone="yes"?><Relationships xmlns="http://schemas.openxmlformats.org/package/2006/relationships">"#,
    );
    for (i, s) in wb.sheets.iter().enumerate() {
        let n = i + 1;
        let state = match s.visibility {
            Visibility::Visible => String::new(),
            Visibility::Hidden => r#" state="hidden""#.into(),
            Visibility::VeryHidden => r#" state="veryHidden""#.into(),
        };
        wbx.push_str(&format!(r#"<sheet name="{}" sheetId="{n}"{state} r:id="rIdS{n}"/>"#, escape(&s.name)));
        wrels.push_str(&format!(
            r#"<Relationship Id="rIdS{n}" Type="{REL_NS}/worksheet" Target="worksheets/sheet{n}.xml"/>"#
        ));
        parts.push((format!("xl/worksheets/sheet{n}.xml"), sheet_xml(s, &books)));
    }
    wbx.push_str("</sheets>");
    if !books.is_empty() {
        wbx.push_str("<externalReferences>");
        for (i, book) in books.iter().enumerate() {
            let n = i + 1;
            wbx.push_str(&format!(r#"<externalReference r:id="rIdE{n}"/>"#));
            wrels.push_str(&format!(
                r#"<Relationship Id="rIdE{n}" Type="{REL_NS}/externalLink" Target="externalLinks/externalLink{n}.xml"/>"#
            ));
            parts.push((format!("xl/externalLinks/externalLink{n}.xml"), external_link_xml(wb, book)));
            parts.push((
                format!("xl/externalLinks/_rels/externalLink{n}.xml.rels"),
                format!(
                    r#"<?xml version="1.0" encoding="UTF-8" standalone="yes"?><Relationships xmlns="http://schemas.openxmlformats.org/package/2006/relationships"><Relationship Id="rId1" Type="{REL_NS}/externalLinkPath" Target="{}" TargetMode="External"/></Relationships>"#,
                    escape(book)
                ),
            ));
        }
        wbx.push_str("</externalReferences>");
    }
    if !wb.defined_names.is_empty() {
        wbx.push_str("<definedNames>");
        for (k, v) in &wb.defined_names {
            wbx.push_str(&format!(r#"<definedName name="{}">{}</definedName>"#, escape(k), escape(v)));
        }
        wbx.push_str("</definedNames>");
    }
    wbx.push_str("</workbook>");
    wrels.push_str("</Relationships>");
    parts.push(("xl/workbook.xml".into(), wbx));
    parts.push(("xl/_rels/workbook.xml.rels".into(), wrels));

    let mut zip = ZipWriter::new(Cursor::new(Vec::new()));
    let opts = SimpleFileOptions::default().compression_method(zip::CompressionMethod::Deflated);
    for (name, body) in parts {
        zip.start_file(name, opts).map_err(|e| malformed("package", e.to_string()))?;
        zip.write_all(body.as_bytes())?;
    }
    Ok(zip.finish().map_err(|e| malformed("package", e.to_string()))?.into_inner())
}

fn formula_for_file(text: &str, books: &[String]) -> String {
    let body = text.strip_prefix('=').unwrap_or(text);
    let Ok(mut ast) = formula::parse(text, Locale::Point) else { return body.to_string() };
    ast.walk_mut(&mut |e| {
        if let Expr::Ref(span) | Expr::Range(span) = e {
            if let Some(book) = &span.external_book {
                if let Some(i) = books.iter().position(|b| b == book) {
                    span.external_book = Some((i + 1).to_string());
                }
            }
        }
    });
    formula::print(&ast, Locale::Point)[1..].to_string()
}

fn value_attrs(v: &Value) -> (&'static str, String) {
    match v {
        Value::Number(n) => ("", format!("{n}")),
        Value::Text(s) => (r#" t="str""#, s.clone()),
        Value::Bool(b) => (r#" t="b""#, if *b { "1".into() } else { "0".into() }),
        Value::Error(e) => (r#" t="e""#, e.excel().to_string()),
        Value::Blank => ("", String::new()),
    }
}

fn sheet_xml(s: &Sheet, books: &[String]) -> String {
    let mut out = format!(r#"<?xml version="1.0" encoding="UTF-8" standalone="yes"?><worksheet xmlns="{MAIN_NS}"><sheetData>"#);
    let mut current_row = 0;
    for (pos, content) in s.cells() {
        if pos.row != current_row {
            if current_row != 0 {
                out.push_str("</row>");
            }
            out.push_str(&format!(r#"<row r="{}">"#, pos.row));
            current_row = pos.row;
        }
        let r = pos.to_a1();
        match content {
            Content::Formula { text, cached } => {
                let f = escape(formula_for_file(text, books)).to_string();
                match cached {
                    Some(v) => {
                        let (t, raw) = value_attrs(v);
                        out.push_str(&format!(r#"<c r="{r}"{t}><f>{f}</f><v>{}</v></c>"#, escape(&raw)));
                    }
                    None => out.push_str(&format!(r#"<c r="{r}"><f>{f}</f></c>"#)),
                }
            }
            Content::Text(s) => out.push_str(&format!(
                r#"<c r="{r}" t="inlineStr"><is><t xml:space="preserve">{}</t></is></c>"#,
                escape(s)
            )),
            other => {
                let (t, raw) = value_attrs(&other.value());
                out.push_str(&format!(r#"<c r="{r}"{t}><v>{}</v></c>"#, escape(&raw)));
            }
        }
    }
    if current_row != 0 {
        out.push_str("</row>");
    }
    out.push_str("</sheetData></worksheet>");
    out
}

fn external_link_xml(wb: &Workbook, book: &str) -> String {
    let mut by_sheet: BTreeMap<&str, Vec<(&Pos, &Value)>> = BTreeMap::new();
    for (k, v) in wb.external_values.iter().filter(|(k, _)| k.book == book) {
        by_sheet.entry(k.sheet.as_str()).or_default().push((&k.pos, v));
    }
    let mut out = format!(
        r#"<?xml version="1.0" encoding="UTF-8" standalone="yes"?><externalLink xmlns="{MAIN_NS}" xmlns:r="{REL_NS}"><externalBook r:id="rId1"><sheetNames>"#
    );
    for name in by_sheet.keys() {
        out.push_str(&format!(r#"<sheetName val="{}"/>"#, escape(*name)));
    }
    out.push_str("</sheetNames><sheetDataSet>");
    for (i, cells) in by_sheet.values().enumerate() {
        out.push_str(&format!(r#"<sheetData sheetId="{i}">"#));
        for (pos, v) in cells {
            let (t, raw) = value_attrs(v);
            out.push_str(&format!(r#"<row r="{}"><cell r="{}"{t}><v>{}</v></cell></row>"#, pos.row, pos.to_a1(), escape(&raw)));
        }
        out.push_str("</sheetData>");
    }
    out.push_str("</sheetDataSet></externalBook></externalLink>");
    out
}
