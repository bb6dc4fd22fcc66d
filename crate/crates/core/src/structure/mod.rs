//! Cell classification, consistent formula ranges and the cells that break them.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::formula::{self, Locale};
use crate::model::{Cell, CellAddr, Content, Pos, Rect, Sheet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CellClass {
    Text,
    Number,
    Formula,
    Boolean,
    Error,
    Blank,
}

impl CellClass {
    pub fn as_str(self) -> &'static str {
        match self {
            CellClass::Text => "text",
            CellClass::Number => "number",
            CellClass::Formula => "formula",
            CellClass::Boolean => "boolean",
            CellClass::Error => "error",
            CellClass::Blank => "blank",
        }
    }
}

pub fn classify_cell(cell: &Cell) -> CellClass {
    classify_content(&cell.content)
}

pub fn classify_content(content: &Content) -> CellClass {
    match content {
        Content::Blank => CellClass::Blank,
        Content::Text(_) => CellClass::Text,
        Content::Number(_) => CellClass::Number,
        Content::Bool(_) => CellClass::Boolean,
        Content::Error(_) => CellClass::Error,
        Content::Formula { .. } => CellClass::Formula,
    }
}

pub const DEFAULT_MIN_RUN: usize = 3;
pub const DEFAULT_MIN_RANGE: u64 = 2;
pub const DEFAULT_EXACT_LIMIT: usize = 50_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StructureConfig {
    /// Shortest run of equal formulas that gives context to an inconsistency.
    pub min_run: usize,
    /// Smallest area of a reported consistent range.
    pub min_range: u64,
    /// Above this many formula cells on a sheet, ranges come from row-run merging.
    pub exact_limit: usize,
}

impl Default for StructureConfig {
    fn default() -> Self {
        StructureConfig { min_run: DEFAULT_MIN_RUN, min_range: DEFAULT_MIN_RANGE, exact_limit: DEFAULT_EXACT_LIMIT }
    }
}

/// Relative normal form and skeleton of one formula cell. Unparseable
/// formulas get a form of their own built from the raw text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FormInfo {
    pub form: String,
    pub skeleton: String,
}

pub type SheetForms = BTreeMap<Pos, FormInfo>;

pub fn sheet_forms(sheet: &Sheet) -> SheetForms {
    sheet
        .cells()
        .filter_map(|(pos, content)| {
            let text = content.formula_text()?;
            let info = match formula::parse(text, Locale::Point) {
                Ok(ast) => FormInfo { form: formula::relative_normal_form(&ast, pos), skeleton: formula::skeleton(&ast) },
                Err(_) => FormInfo { form: format!("?{pos}{text}"), skeleton: format!("?{pos}{text}") },
            };
            Some((pos, info))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ConsistentRange {
    pub sheet: String,
    pub rect: Rect,
    pub normal_form: String,
    pub member_count: u64,
    /// Set when the sheet was too large for the exact search.
    pub approximate: bool,
}

pub fn find_consistent_ranges(sheet: &Sheet) -> Vec<ConsistentRange> {
    consistent_ranges(&sheet.name, &sheet_forms(sheet), &StructureConfig::default())
}

pub fn consistent_ranges(sheet: &str, forms: &SheetForms, cfg: &StructureConfig) -> Vec<ConsistentRange> {
    let mut groups: BTreeMap<&str, Vec<Pos>> = BTreeMap::new();
    for (pos, info) in forms {
        groups.entry(info.form.as_str()).or_default().push(*pos);
    }
    let approximate = forms.len() > cfg.exact_limit;
    let mut out = Vec::new();
    for (form, cells) in groups {
        if (cells.len() as u64) < cfg.min_range {
            continue;
        }
        let rows = row_runs(&cells);
        let rects = if approximate { greedy_rectangles(&rows) } else { maximal_rectangles(&rows) };
        out.extend(rects.into_iter().filter(|r| r.area() >= cfg.min_range).map(|rect| ConsistentRange {
            sheet: sheet.to_string(),
            rect,
            normal_form: form.to_string(),
            member_count: rect.area(),
            approximate,
        }));
    }
    out.sort_by(|a, b| {
        let ka = (a.rect.top, a.rect.left, a.rect.bottom, a.rect.right);
        let kb = (b.rect.top, b.rect.left, b.rect.bottom, b.rect.right);
        ka.cmp(&kb).then_with(|| a.normal_form.cmp(&b.normal_form))
    });
    out
}

/// Every maximal rectangle whose cells all belong to `cells`.
pub(crate) fn maximal_rects(cells: &[Pos]) -> Vec<Rect> {
    let mut sorted = cells.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    maximal_rectangles(&row_runs(&sorted))
}

/// Maximal runs of consecutive columns, per row. `cells` is row-major sorted.
fn row_runs(cells: &[Pos]) -> BTreeMap<u32, Vec<(u32, u32)>> {
    let mut out: BTreeMap<u32, Vec<(u32, u32)>> = BTreeMap::new();
    for p in cells {
        let runs = out.entry(p.row).or_default();
        match runs.last_mut() {
            Some(last) if last.1 + 1 == p.col => last.1 = p.col,
            _ => runs.push((p.col, p.col)),
        }
    }
    out
}

fn covers(runs: Option<&Vec<(u32, u32)>>, l: u32, r: u32) -> bool {
    let Some(runs) = runs else { return false };
    let i = runs.partition_point(|run| run.1 < r);
    runs.get(i).is_some_and(|run| run.0 <= l && r <= run.1)
}

fn intersect(a: &[(u32, u32)], b: &[(u32, u32)]) -> Vec<(u32, u32)> {
    let (mut i, mut j) = (0, 0);
    let mut out = Vec::new();
    while i < a.len() && j < b.len() {
        let l = a[i].0.max(b[j].0);
        let r = a[i].1.min(b[j].1);
        if l <= r {
            out.push((l, r));
        }
        if a[i].1 < b[j].1 {
            i += 1;
        } else {
            j += 1;
        }
    }
    out
}

/// Every maximal all-member rectangle. For each top row the column set is
/// narrowed row by row; a run is emitted once the next row cannot extend it,
/// and dropped as soon as the row above covers it (then a taller rectangle
/// already contains it).
fn maximal_rectangles(rows: &BTreeMap<u32, Vec<(u32, u32)>>) -> Vec<Rect> {
    let mut out = Vec::new();
    for (&top, top_runs) in rows {
        let above = top.checked_sub(1).and_then(|r| rows.get(&r));
        let mut live: Vec<(u32, u32)> = top_runs.iter().copied().filter(|&(l, r)| !covers(above, l, r)).collect();
        let mut bottom = top;
        while !live.is_empty() {
            let below = rows.get(&(bottom + 1));
            let mut next_live = Vec::new();
            for &(l, r) in &live {
                if !covers(below, l, r) {
                    out.push(Rect { top, left: l, bottom, right: r });
                }
                if let Some(below) = below {
                    for run in intersect(&[(l, r)], below) {
                        if !covers(above, run.0, run.1) {
                            next_live.push(run);
                        }
                    }
                }
            }
            live = next_live;
            bottom += 1;
        }
    }
    out
}

/// Row runs merged downward while the next row has the identical run.
fn greedy_rectangles(rows: &BTreeMap<u32, Vec<(u32, u32)>>) -> Vec<Rect> {
    let mut open: HashMap<(u32, u32), u32> = HashMap::new();
    let mut out = Vec::new();
    let mut prev_row = None;
    for (&row, runs) in rows {
        let contiguous = prev_row == Some(row - 1);
        let mut next_open = HashMap::new();
        for &(l, r) in runs {
            let top = if contiguous { open.remove(&(l, r)).unwrap_or(row) } else { row };
            next_open.insert((l, r), top);
        }
        for ((l, r), top) in open.drain() {
            out.push(Rect { top, left: l, bottom: prev_row.expect("open runs have a row"), right: r });
        }
        open = next_open;
        prev_row = Some(row);
    }
    for ((l, r), top) in open {
        out.push(Rect { top, left: l, bottom: prev_row.expect("open runs have a row"), right: r });
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InconsistencyKind {
    DifferentFormula,
    LiteralOverwrite,
    BlankGap,
}

impl fmt::Display for InconsistencyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            InconsistencyKind::DifferentFormula => "different formula",
            InconsistencyKind::LiteralOverwrite => "literal overwrite",
            InconsistencyKind::BlankGap => "blank gap",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Inconsistency {
    pub cell: CellAddr,
    pub expected_normal_form: String,
    pub actual: InconsistencyKind,
    /// Bounding segment of the run that the cell breaks.
    pub context: Rect,
}

pub fn find_inconsistencies(sheet: &Sheet, ranges: &[ConsistentRange]) -> Vec<Inconsistency> {
    inconsistencies(sheet, &sheet_forms(sheet), ranges, &StructureConfig::default())
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Axis {
    Row,
    Col,
}

/// Scans every row and column. Within a line, cells sharing a normal form
/// are clustered when at most one cell separates them; a cluster of at least
/// `min_run` members defines a segment. Every other cell inside the segment
/// is reported. A cell just past either end is reported when it is a number,
/// boolean or error literal, or a formula with the same skeleton but a
/// different form, unless it belongs to a consistent range spanning
/// `min_run` cells along that line.
pub fn inconsistencies(
    sheet: &Sheet,
    forms: &SheetForms,
    ranges: &[ConsistentRange],
    cfg: &StructureConfig,
) -> Vec<Inconsistency> {
    let mut lines: BTreeMap<(u8, u32), Vec<u32>> = BTreeMap::new();
    for pos in forms.keys() {
        lines.entry((0, pos.row)).or_default().push(pos.col);
        lines.entry((1, pos.col)).or_default().push(pos.row);
    }
    let mut found: BTreeMap<Pos, Inconsistency> = BTreeMap::new();
    for ((axis, line), mut idx) in lines {
        let axis = if axis == 0 { Axis::Row } else { Axis::Col };
        idx.sort_unstable();
        let at = |i: u32| if axis == Axis::Row { Pos::new(line, i) } else { Pos::new(i, line) };
        let mut by_form: BTreeMap<&str, Vec<u32>> = BTreeMap::new();
        for &i in &idx {
            by_form.entry(forms[&at(i)].form.as_str()).or_default().push(i);
        }
        for (form, members) in by_form {
            if members.len() < cfg.min_run {
                continue;
            }
            for cluster in clusters(&members) {
                if cluster.len() < cfg.min_run {
                    continue;
                }
                let (a, b) = (cluster[0], *cluster.last().expect("non-empty cluster"));
                let context = Rect::new(at(a), at(b));
                let skeleton = forms[&at(a)].skeleton.as_str();
                let mut report = |pos: Pos, actual: InconsistencyKind| {
                    found.entry(pos).or_insert_with(|| Inconsistency {
                        cell: CellAddr::at(sheet.name.clone(), pos),
                        expected_normal_form: form.to_string(),
                        actual,
                        context,
                    });
                };
                let member_set: BTreeSet<u32> = cluster.iter().copied().collect();
                for i in a..=b {
                    if member_set.contains(&i) {
                        continue;
                    }
                    let pos = at(i);
                    let kind = match sheet.content(pos) {
                        Content::Blank => InconsistencyKind::BlankGap,
                        Content::Formula { .. } => InconsistencyKind::DifferentFormula,
                        _ => InconsistencyKind::LiteralOverwrite,
                    };
                    report(pos, kind);
                }
                let ends = [a.checked_sub(1).filter(|&i| i >= 1), Some(b + 1)];
                for pos in ends.into_iter().flatten().map(at).filter(|p| p.in_bounds()) {
                    let kind = match sheet.content(pos) {
                        Content::Number(_) | Content::Bool(_) | Content::Error(_) => InconsistencyKind::LiteralOverwrite,
                        Content::Formula { .. } if forms.get(&pos).is_some_and(|f| f.skeleton == skeleton) => {
                            InconsistencyKind::DifferentFormula
                        }
                        _ => continue,
                    };
                    if in_long_range(ranges, pos, axis, cfg.min_run) {
                        continue;
                    }
                    report(pos, kind);
                }
            }
        }
    }
    found.into_values().collect()
}

fn clusters(members: &[u32]) -> Vec<Vec<u32>> {
    let mut out: Vec<Vec<u32>> = Vec::new();
    for &i in members {
        match out.last_mut() {
            Some(c) if i - c.last().expect("non-empty cluster") <= 2 => c.push(i),
            _ => out.push(vec![i]),
        }
    }
    out
}

fn in_long_range(ranges: &[ConsistentRange], pos: Pos, axis: Axis, min_run: usize) -> bool {
    ranges.iter().any(|r| {
        let span = if axis == Axis::Row { r.rect.width() } else { r.rect.height() };
        r.rect.contains(pos) && span as usize >= min_run
    })
}
