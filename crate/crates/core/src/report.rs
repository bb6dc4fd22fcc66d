//! Findings tables, sheet graphs and sheet heat maps.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::graph::{self, SheetGraph};
use crate::model::{Content, Pos, Sheet, Value, Visibility, Workbook};
use crate::par::{self, Execution};
use crate::risk::{self, AnalyzerConfig, RiskColor, RiskDegree, RiskFinding};
use crate::structure::{self, CellClass, ConsistentRange};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Column headers of the findings table, in order.
pub const FINDING_COLUMNS: [&str; 7] =
    ["Risk finding", "Risk degree", "Location", "Details", "Current value", "Refactoring suggestion", "Category"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FindingsFormat {
    #[default]
    Json,
    Csv,
    Html,
}

impl std::str::FromStr for FindingsFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "json" => Ok(FindingsFormat::Json),
            "csv" => Ok(FindingsFormat::Csv),
            "html" => Ok(FindingsFormat::Html),
            other => Err(format!("unknown format `{other}`")),
        }
    }
}

impl FindingsFormat {
    pub fn extension(self) -> &'static str {
        match self {
            FindingsFormat::Json => "json",
            FindingsFormat::Csv => "csv",
            FindingsFormat::Html => "html",
        }
    }
}

/// Display text of a cell value as it appears in a table.
pub fn value_text(v: &Value) -> String {
    match v {
        Value::Number(n) => format!("{n}"),
        Value::Text(s) => s.clone(),
        Value::Bool(b) => if *b { "TRUE" } else { "FALSE" }.to_string(),
        Value::Error(e) => e.excel().to_string(),
        Value::Blank => String::new(),
    }
}

fn row(f: &RiskFinding) -> [String; 7] {
    [
        f.kind.label().to_string(),
        f.degree.label().to_string(),
        f.location.to_string(),
        f.details.clone(),
        f.current_value.as_ref().map(value_text).unwrap_or_default(),
        f.suggestion.clone(),
        f.category.label().to_string(),
    ]
}

pub fn emit_findings(findings: &[RiskFinding], format: FindingsFormat) -> String {
    match format {
        FindingsFormat::Json => serde_json::to_string_pretty(findings).expect("findings serialize") + "\n",
        FindingsFormat::Csv => {
            let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::CRLF).from_writer(Vec::new());
            w.write_record(FINDING_COLUMNS).expect("in-memory write");
            for f in findings {
                w.write_record(row(f)).expect("in-memory write");
            }
            String::from_utf8(w.into_inner().expect("in-memory write")).expect("utf-8 input")
        }
        FindingsFormat::Html => findings_html(findings),
    }
}

pub fn parse_findings_json(text: &str) -> Result<Vec<RiskFinding>, serde_json::Error> {
    serde_json::from_str(text)
}

pub fn escape_html(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&#39;"),
            c => out.push(c),
        }
    }
    out
}

const FINDINGS_CSS: &str = "body{font-family:sans-serif}table{border-collapse:collapse}\
th,td{border:1px solid #999;padding:2px 6px;text-align:left;vertical-align:top}\
tr.low td:nth-child(2){background:#fff59d}tr.medium td:nth-child(2){background:#ffb74d}\
tr.high td:nth-child(2){background:#e57373}";

fn findings_html(findings: &[RiskFinding]) -> String {
    let mut out = String::new();
    out.push_str("<!DOCTYPE html>\n<html><head><meta charset=\"utf-8\"><title>Risk findings</title>\n");
    let _ = writeln!(out, "<style>{FINDINGS_CSS}</style></head><body>");
    out.push_str("<table class=\"findings\">\n<tr>");
    for h in FINDING_COLUMNS {
        let _ = write!(out, "<th>{}</th>", escape_html(h));
    }
    out.push_str("</tr>\n");
    for f in findings {
        let _ = write!(out, "<tr class=\"{}\">", f.degree.label().to_ascii_lowercase());
        for cell in row(f) {
            let _ = write!(out, "<td>{}</td>", escape_html(&cell));
        }
        out.push_str("</tr>\n");
    }
    out.push_str("</table>\n</body></html>\n");
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct DotOptions {
    /// Colour arrows grey when the dependent sheet lies to the right of the
    /// precedent in tab order, purple otherwise.
    pub legacy_arrow_colors: bool,
}

/// Pen width of an edge carrying `weight` references.
pub fn pen_width(weight: usize) -> f64 {
    1.0 + (weight as f64).ln_1p()
}

fn dot_id(s: &str) -> String {
    format!("\"{}\"", s.replace('\\', "\\\\").replace('"', "\\\""))
}

/// DOT text for a sheet graph. External sources are orange, hidden sheets
/// light blue, very hidden sheets grey, and visible sheets take their risk colour.
pub fn emit_workbook_graph(sg: &SheetGraph, opts: DotOptions) -> String {
    let mut out = String::from("digraph workbook {\n  rankdir=LR;\n  node [shape=box, style=filled];\n");
    for (i, n) in sg.nodes.iter().enumerate() {
        let (fill, shape, kind) = if n.is_external {
            ("orange", "folder", "external")
        } else {
            match n.visibility {
                Visibility::Hidden => ("lightblue", "box", "hidden"),
                Visibility::VeryHidden => ("grey", "box", "very_hidden"),
                Visibility::Visible => (n.risk_color.unwrap_or(RiskColor::Green).as_str(), "box", "sheet"),
            }
        };
        let _ = writeln!(
            out,
            "  n{i} [label={}, fillcolor={fill}, shape={shape}, class={kind}];",
            dot_id(&n.name)
        );
    }
    for e in &sg.edges {
        let mut attrs = format!("penwidth={:.3}, label=\"{}\"", pen_width(e.weight), e.weight);
        if opts.legacy_arrow_colors {
            let color = if e.to > e.from { "grey" } else { "purple" };
            let _ = write!(attrs, ", color={color}");
        }
        let _ = writeln!(out, "  n{} -> n{} [{attrs}];", e.from, e.to);
    }
    out.push_str("}\n");
    out
}

/// Sheet graph of `wb` with each workbook sheet coloured by its risk score.
pub fn risk_sheet_graph(wb: &Workbook, findings: &[RiskFinding], cfg: &AnalyzerConfig) -> SheetGraph {
    let g = graph::build_cell_graph(wb);
    let mut sg = graph::aggregate_sheet_graph(&g, wb);
    for node in sg.nodes.iter_mut().filter(|n| !n.is_external) {
        if let Some(sheet) = wb.sheet(&node.name) {
            node.risk_color = Some(risk::sheet_risk(findings, sheet, cfg).1);
        }
    }
    sg
}

pub fn sheet_classes(sheet: &Sheet) -> BTreeMap<Pos, CellClass> {
    sheet.cells().map(|(p, c)| (p, structure::classify_content(c))).collect()
}

const HEATMAP_CSS: &str = "body{font-family:sans-serif}\
table.grid{border-collapse:collapse}table.grid td,table.grid th{border:1px solid #ddd;padding:1px 4px;font-size:12px}\
table.grid th{background:#f0f0f0}\
#layer-classes:checked~table td.c-text{background:#ffcc80}\
#layer-classes:checked~table td.c-number{background:#fff59d}\
#layer-classes:checked~table td.c-formula{background:#90caf9}\
#layer-classes:checked~table td.cr-t{border-top:2px solid purple}\
#layer-classes:checked~table td.cr-b{border-bottom:2px solid purple}\
#layer-classes:checked~table td.cr-l{border-left:2px solid purple}\
#layer-classes:checked~table td.cr-r{border-right:2px solid purple}\
#layer-risk:checked~table td.r-low{background:yellow}\
#layer-risk:checked~table td.r-medium{background:orange}\
#layer-risk:checked~table td.r-high{background:red}";

/// Static HTML view of one sheet. Two layers can be switched with the
/// checkboxes at the top: cell classes with consistent-range outlines, and
/// the risk overlay coloured by the highest degree of the findings on a cell.
pub fn emit_heatmap(
    sheet: &Sheet,
    classes: &BTreeMap<Pos, CellClass>,
    ranges: &[ConsistentRange],
    findings: &[RiskFinding],
) -> String {
    let mut risk: BTreeMap<Pos, RiskDegree> = BTreeMap::new();
    for f in findings {
        for p in f.location.cells_on(&sheet.name) {
            let d = risk.entry(p).or_insert(f.degree);
            *d = (*d).max(f.degree);
        }
    }
    let mut edges: BTreeMap<Pos, [bool; 4]> = BTreeMap::new();
    for r in ranges {
        for p in r.rect.positions() {
            let e = edges.entry(p).or_default();
            e[0] |= p.row == r.rect.top;
            e[1] |= p.row == r.rect.bottom;
            e[2] |= p.col == r.rect.left;
            e[3] |= p.col == r.rect.right;
        }
    }

    let mut out = String::new();
    let _ = writeln!(
        out,
        "<!DOCTYPE html>\n<html><head><meta charset=\"utf-8\"><title>{}</title>",
        escape_html(&sheet.name)
    );
    let _ = writeln!(out, "<style>{HEATMAP_CSS}</style></head><body>");
    let _ = writeln!(out, "<h1>{}</h1>", escape_html(&sheet.name));
    out.push_str("<input type=\"checkbox\" id=\"layer-classes\" checked><label for=\"layer-classes\">cell classes</label>\n");
    out.push_str("<input type=\"checkbox\" id=\"layer-risk\" checked><label for=\"layer-risk\">risk</label>\n");
    out.push_str("<table class=\"grid\">\n");
    if let Some(used) = sheet.used_rect() {
        out.push_str("<tr><th></th>");
        for c in 1..=used.right {
            let _ = write!(out, "<th>{}</th>", crate::model::col_to_letters(c));
        }
        out.push_str("</tr>\n");
        for r in 1..=used.bottom {
            let _ = write!(out, "<tr><th>{r}</th>");
            for c in 1..=used.right {
                let p = Pos::new(r, c);
                let mut class = Vec::new();
                if let Some(k) = classes.get(&p).filter(|k| **k != CellClass::Blank) {
                    class.push(format!("c-{}", k.as_str()));
                }
                if let Some(e) = edges.get(&p) {
                    for (on, name) in e.iter().zip(["cr-t", "cr-b", "cr-l", "cr-r"]) {
                        if *on {
                            class.push(name.to_string());
                        }
                    }
                }
                if let Some(d) = risk.get(&p) {
                    class.push(format!("r-{}", d.label().to_ascii_lowercase()));
                }
                let content = sheet.content(p);
                out.push_str("<td");
                if !class.is_empty() {
                    let _ = write!(out, " class=\"{}\"", class.join(" "));
                }
                if let Content::Formula { text, .. } = content {
                    let _ = write!(out, " title=\"{}\"", escape_html(text));
                }
                let _ = write!(out, ">{}</td>", escape_html(&value_text(&content.value())));
            }
            out.push_str("</tr>\n");
        }
    }
    out.push_str("</table>\n</body></html>\n");
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportMeta {
    pub tool_version: String,
    pub config_hash: String,
    /// RFC 3339 time of the run; absent when pinned for reproducible output.
    pub timestamp: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportBundle {
    pub findings_doc: String,
    pub graph_doc: String,
    /// Keyed by sheet name.
    pub heatmaps: BTreeMap<String, String>,
    pub meta: ReportMeta,
}

impl ReportBundle {
    /// Everything needed for a full audit report of `wb`.
    pub fn build(
        wb: &Workbook,
        findings: &[RiskFinding],
        cfg: &AnalyzerConfig,
        format: FindingsFormat,
        timestamp: Option<String>,
        exec: Execution,
    ) -> ReportBundle {
        let sg = risk_sheet_graph(wb, findings, cfg);
        let sc = cfg.structure();
        let heatmaps = par::map(exec, &wb.sheets, |sheet| {
            let ranges = structure::consistent_ranges(&sheet.name, &structure::sheet_forms(sheet), &sc);
            (sheet.name.clone(), emit_heatmap(sheet, &sheet_classes(sheet), &ranges, findings))
        })
        .into_iter()
        .collect();
        ReportBundle {
            findings_doc: emit_findings(findings, format),
            graph_doc: emit_workbook_graph(&sg, DotOptions::default()),
            heatmaps,
            meta: ReportMeta { tool_version: TOOL_VERSION.to_string(), config_hash: cfg.hash(), timestamp },
        }
    }

    /// Writes `findings.<ext>`, `workbook.dot`, `meta.json` and one
    /// `heatmap-<n>.html` per sheet (numbered in workbook order) into `dir`.
    pub fn write_to(&self, dir: &Path, format: FindingsFormat) -> std::io::Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join(format!("findings.{}", format.extension())), &self.findings_doc)?;
        std::fs::write(dir.join("workbook.dot"), &self.graph_doc)?;
        let meta = serde_json::to_string_pretty(&self.meta).expect("meta serializes") + "\n";
        std::fs::write(dir.join("meta.json"), meta)?;
        for (i, html) in self.heatmaps.values().enumerate() {
            std::fs::write(dir.join(format!("heatmap-{}.html", i + 1)), html)?;
        }
        Ok(())
    }
}
