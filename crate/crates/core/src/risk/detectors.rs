use std::collections::{BTreeMap, BTreeSet, HashMap};

use crate::formula::{self, Expr};
use crate::graph::{self, Node};
use crate::model::{numbers_equal, quote_sheet, CellAddr, Content, Pos, Rect, Value, Workbook};
use crate::par::Execution;
use crate::structure::{self, InconsistencyKind};

use super::{
    AnalysisContext, AnalyzerConfig, DetectorKind, Location, RiskDegree, RiskFinding, LITERAL_OVERWRITE,
    REMOVE_REFERENCE,
};

fn body(text: &str) -> &str {
    text.strip_prefix('=').unwrap_or(text)
}

/// Every parsed formula as (sheet index, position, AST, stored content).
fn formulas<'c>(ctx: &'c AnalysisContext<'_>) -> impl Iterator<Item = (usize, Pos, &'c Expr, &'c Content)> + 'c {
    ctx.parsed.per_sheet.iter().enumerate().flat_map(move |(si, map)| {
        map.iter().map(move |(&pos, ast)| (si, pos, ast, ctx.wb.sheets[si].content(pos)))
    })
}

fn addr(ctx: &AnalysisContext<'_>, si: usize, pos: Pos) -> CellAddr {
    CellAddr::at(ctx.wb.sheets[si].name.clone(), pos)
}

fn run<F>(wb: &Workbook, cfg: &AnalyzerConfig, f: F) -> Vec<RiskFinding>
where
    F: Fn(&AnalysisContext<'_>) -> Vec<RiskFinding>,
{
    let ctx = AnalysisContext::new(wb, cfg, Execution::default());
    let mut out = f(&ctx);
    super::sort_findings(wb, &mut out);
    out
}

fn format_literal(n: f64) -> String {
    formula::print(&Expr::number(n), formula::Locale::Point)[1..].to_string()
}

pub(super) fn fixed_numbers(ctx: &AnalysisContext<'_>) -> Vec<RiskFinding> {
    let allow = &ctx.cfg.fixed_number_allowlist;
    formulas(ctx)
        .filter_map(|(si, pos, ast, content)| {
            let mut literals: Vec<f64> = Vec::new();
            for n in formula::metrics(ast).numeric_literals {
                if !allow.iter().any(|a| numbers_equal(*a, n)) && !literals.iter().any(|l| numbers_equal(*l, n)) {
                    literals.push(n);
                }
            }
            if literals.is_empty() {
                return None;
            }
            let names: Vec<String> = literals.iter().map(|n| format_literal(*n)).collect();
            let suggestion = if names.len() == 1 {
                format!("Consider placing {} in separate cell", names[0])
            } else {
                format!("Consider placing {} in separate cells", names.join(", "))
            };
            Some(ctx.finding(
                DetectorKind::FixedNumbers,
                RiskDegree::Low,
                Location::Cell(addr(ctx, si, pos)),
                body(content.formula_text()?).to_string(),
                Some(content.value()),
                suggestion,
            ))
        })
        .collect()
}

pub(super) fn unusual_ranges(ctx: &AnalysisContext<'_>) -> Vec<RiskFinding> {
    ctx.inconsistencies
        .iter()
        .flatten()
        .map(|inc| {
            let context = Location::range(inc.cell.sheet.clone(), inc.context);
            let (what, suggestion) = match inc.actual {
                InconsistencyKind::LiteralOverwrite => {
                    (LITERAL_OVERWRITE, format!("Restore the formula used in {context}"))
                }
                InconsistencyKind::DifferentFormula => {
                    ("different formula", format!("Check this formula against {context}"))
                }
                InconsistencyKind::BlankGap => ("blank gap", format!("Fill the gap in {context}")),
            };
            let content = ctx.wb.content(&inc.cell);
            ctx.finding(
                DetectorKind::UnusualRange,
                RiskDegree::Medium,
                Location::Cell(inc.cell.clone()),
                format!("{what}: expected {} as in {context}", inc.expected_normal_form),
                Some(content.value()),
                suggestion,
            )
        })
        .collect()
}

/// The foreign sheet a formula leans on, if it is jealous.
fn jealous_target(ctx: &AnalysisContext<'_>, home: &str, ast: &Expr) -> Option<String> {
    let refs = formula::extract_refs(ast, home);
    let total = refs.len();
    let mut per_sheet: BTreeMap<String, usize> = BTreeMap::new();
    for r in refs.iter().filter(|r| r.external_book.is_none()) {
        let sheet = r.sheet.as_deref().unwrap_or(home);
        let sheet = ctx.wb.canonical_sheet_name(sheet).unwrap_or(sheet);
        if !sheet.eq_ignore_ascii_case(home) {
            *per_sheet.entry(sheet.to_string()).or_default() += 1;
        }
    }
    let (sheet, count) = per_sheet.into_iter().max_by(|a, b| a.1.cmp(&b.1).then_with(|| b.0.cmp(&a.0)))?;
    let jealous = count >= ctx.cfg.jealousy_min_refs && count as f64 > ctx.cfg.jealousy_fraction * total as f64;
    jealous.then_some(sheet)
}

/// One finding per jealous cell, except that a run of adjacent cells with the
/// same normal form and target is reported as its lead cell plus one
/// range-located finding for the whole run.
pub(super) fn jealousy(ctx: &AnalysisContext<'_>) -> Vec<RiskFinding> {
    let mut groups: BTreeMap<(usize, String, String), Vec<Pos>> = BTreeMap::new();
    for (si, pos, ast, _) in formulas(ctx) {
        let home = &ctx.wb.sheets[si].name;
        if let Some(target) = jealous_target(ctx, home, ast) {
            let form = ctx.forms[si].get(&pos).map(|f| f.form.clone()).unwrap_or_default();
            groups.entry((si, form, target)).or_default().push(pos);
        }
    }
    let mut out = Vec::new();
    for ((si, _, target), cells) in groups {
        let suggestion = format!("Move this formula to {target}");
        for run in runs(&cells) {
            let lead = run.top_left();
            let content = ctx.wb.sheets[si].content(lead);
            out.push(ctx.finding(
                DetectorKind::Jealousy,
                RiskDegree::Medium,
                Location::Cell(addr(ctx, si, lead)),
                body(content.formula_text().unwrap_or_default()).to_string(),
                Some(content.value()),
                suggestion.clone(),
            ));
            if run.area() > 1 {
                out.push(ctx.finding(
                    DetectorKind::Jealousy,
                    RiskDegree::Medium,
                    Location::range(ctx.wb.sheets[si].name.clone(), run),
                    "Same formula".to_string(),
                    None,
                    suggestion.clone(),
                ));
            }
        }
    }
    out
}

/// Splits cells into vertical runs of at least two, then horizontal runs of
/// the remainder, then singletons.
fn runs(cells: &[Pos]) -> Vec<Rect> {
    let mut left: BTreeSet<Pos> = cells.iter().copied().collect();
    let mut out = Vec::new();
    let mut by_col: Vec<Pos> = cells.to_vec();
    by_col.sort_by_key(|p| (p.col, p.row));
    let mut i = 0;
    while i < by_col.len() {
        let mut j = i;
        while j + 1 < by_col.len() && by_col[j + 1].col == by_col[i].col && by_col[j + 1].row == by_col[j].row + 1 {
            j += 1;
        }
        if j > i {
            out.push(Rect::new(by_col[i], by_col[j]));
            for p in &by_col[i..=j] {
                left.remove(p);
            }
        }
        i = j + 1;
    }
    let rest: Vec<Pos> = left.into_iter().collect();
    let mut i = 0;
    while i < rest.len() {
        let mut j = i;
        while j + 1 < rest.len() && rest[j + 1].row == rest[i].row && rest[j + 1].col == rest[j].col + 1 {
            j += 1;
        }
        out.push(Rect::new(rest[i], rest[j]));
        i = j + 1;
    }
    out
}

pub(super) fn multi_function(ctx: &AnalysisContext<'_>) -> Vec<RiskFinding> {
    formulas(ctx)
        .filter_map(|(si, pos, ast, content)| {
            let n = formula::metrics(ast).function_count;
            (n >= ctx.cfg.multi_function_threshold).then(|| {
                ctx.finding(
                    DetectorKind::MultiFunction,
                    RiskDegree::Medium,
                    Location::Cell(addr(ctx, si, pos)),
                    body(content.formula_text().unwrap_or_default()).to_string(),
                    Some(content.value()),
                    format!("This formula calls {n} functions; split it into intermediate cells"),
                )
            })
        })
        .collect()
}

pub(super) fn many_ref_groups(ctx: &AnalysisContext<'_>) -> Vec<RiskFinding> {
    formulas(ctx)
        .filter_map(|(si, pos, ast, content)| {
            let n = formula::metrics(ast).distinct_ref_groups;
            (n >= ctx.cfg.many_ref_groups_threshold).then(|| {
                ctx.finding(
                    DetectorKind::ManyRefGroups,
                    RiskDegree::High,
                    Location::Cell(addr(ctx, si, pos)),
                    body(content.formula_text().unwrap_or_default()).to_string(),
                    Some(content.value()),
                    format!("This formula references {n} cell groups; consider splitting it"),
                )
            })
        })
        .collect()
}

pub(super) fn long_chain(ctx: &AnalysisContext<'_>) -> Vec<RiskFinding> {
    let g = &ctx.graph;
    let mut out = Vec::new();
    for (i, node) in g.nodes().iter().enumerate() {
        let Node::Cell(cell) = node else { continue };
        let Some(depth) = ctx.depths.depth(i) else { continue };
        if depth < ctx.cfg.long_chain_threshold {
            continue;
        }
        if g.succs_of(i).iter().any(|&s| ctx.depths.depth(s).is_some()) {
            continue;
        }
        let path = ctx.depths.path(i);
        let source = path.iter().find_map(|&p| g.node(p).as_cell()).unwrap_or(cell).clone();
        let content = ctx.wb.content(cell);
        out.push(ctx.finding(
            DetectorKind::LongChain,
            RiskDegree::Medium,
            Location::list(vec![source.clone(), cell.clone()]),
            format!("Chain of {depth} formulas from {} to {cell}", g.node(path[0])),
            Some(content.value()),
            "Shorten the chain by referencing inputs directly".to_string(),
        ));
    }
    out
}

/// Cached numbers are compared after rounding to this many units per 1.
const VALUE_QUANTUM: f64 = 1e9;
/// Values produced by more formula cells than this are too common to signal a copy.
const MAX_SOURCES_PER_VALUE: usize = 64;

fn value_key(n: f64) -> i128 {
    (n * VALUE_QUANTUM).round() as i128
}

/// Literal blocks whose values equal, cell for cell, the cached values of a
/// formula block at a fixed displacement.
pub(super) fn copy_paste(ctx: &AnalysisContext<'_>) -> Vec<RiskFinding> {
    let wb = ctx.wb;
    let mut sources: HashMap<i128, Vec<(usize, Pos)>> = HashMap::new();
    for (si, sheet) in wb.sheets.iter().enumerate() {
        for (pos, content) in sheet.cells() {
            if let Content::Formula { cached: Some(Value::Number(n)), .. } = content {
                sources.entry(value_key(*n)).or_default().push((si, pos));
            }
        }
    }
    // (target sheet, source sheet, dr, dc) -> literal cells matching there
    let mut shifts: BTreeMap<(usize, usize, i64, i64), Vec<Pos>> = BTreeMap::new();
    for (ti, sheet) in wb.sheets.iter().enumerate() {
        for (pos, content) in sheet.cells() {
            let Content::Number(n) = content else { continue };
            let Some(from) = sources.get(&value_key(*n)) else { continue };
            if from.len() > MAX_SOURCES_PER_VALUE {
                continue;
            }
            let literal = Node::Cell(CellAddr::at(sheet.name.clone(), pos));
            for &(si, q) in from {
                let formula_cell = CellAddr::at(wb.sheets[si].name.clone(), q);
                if ctx.graph.precedents(&formula_cell).contains(&&literal) {
                    continue;
                }
                let dr = i64::from(q.row) - i64::from(pos.row);
                let dc = i64::from(q.col) - i64::from(pos.col);
                shifts.entry((ti, si, dr, dc)).or_default().push(pos);
            }
        }
    }
    let min = ctx.cfg.copy_block_min_cells;
    let mut candidates: Vec<(Rect, usize, usize, Rect)> = Vec::new();
    for ((ti, si, dr, dc), cells) in shifts {
        if (cells.len() as u64) < min {
            continue;
        }
        for rect in structure::maximal_rects(&cells) {
            if rect.area() < min {
                continue;
            }
            let shift = |p: Pos| p.offset(dr, dc).expect("displacement comes from real cells");
            let source = Rect::new(shift(rect.top_left()), shift(rect.bottom_right()));
            if ti == si && source.intersects(&rect) {
                continue;
            }
            candidates.push((rect, ti, si, source));
        }
    }
    candidates.sort_by(|a, b| b.0.area().cmp(&a.0.area()).then_with(|| (a.1, a.0, a.2, a.3).cmp(&(b.1, b.0, b.2, b.3))));
    let mut taken: Vec<(usize, Rect)> = Vec::new();
    let mut out = Vec::new();
    for (rect, ti, si, source) in candidates {
        if taken.iter().any(|(t, r)| *t == ti && r.intersects(&rect)) {
            continue;
        }
        taken.push((ti, rect));
        let target = &wb.sheets[ti];
        out.push(ctx.finding(
            DetectorKind::CopyPaste,
            RiskDegree::Medium,
            Location::range(target.name.clone(), rect),
            Location::range(wb.sheets[si].name.clone(), source).to_string(),
            Some(target.content(rect.top_left()).value()),
            "Use references to avoid copy-pasting".to_string(),
        ));
    }
    out
}

pub(super) fn empty_reference(ctx: &AnalysisContext<'_>) -> Vec<RiskFinding> {
    graph::empty_references(ctx.wb, &ctx.graph)
        .into_iter()
        .map(|(cell, target)| {
            let content = ctx.wb.content(&cell);
            let target = match &target {
                Node::External(e) => format!("[{}]{}!{}", e.book, e.sheet, e.pos),
                other => other.to_string(),
            };
            ctx.finding(
                DetectorKind::EmptyReference,
                RiskDegree::Low,
                Location::Cell(cell),
                body(content.formula_text().unwrap_or_default()).to_string(),
                Some(content.value()),
                format!("{REMOVE_REFERENCE}{target}; Add a value to {target}"),
            )
        })
        .collect()
}

pub(super) fn excel_errors(ctx: &AnalysisContext<'_>) -> Vec<RiskFinding> {
    ctx.wb
        .cells()
        .filter_map(|(cell, content)| {
            let code = content.value().as_error()?;
            let referenced = ctx.graph.has_dependents(&Node::Cell(cell.clone()));
            let degree = if referenced { RiskDegree::High } else { RiskDegree::Medium };
            let details = match content.formula_text() {
                Some(text) => format!("{} evaluates to {}", body(text), code.excel()),
                None => code.excel().to_string(),
            };
            let suggestion = if referenced {
                format!("Resolve {}; other formulas depend on this cell", code.excel())
            } else {
                format!("Resolve {}", code.excel())
            };
            Some(ctx.finding(DetectorKind::ExcelError, degree, Location::Cell(cell), details, Some(content.value()), suggestion))
        })
        .collect()
}

pub(super) fn circle_chain(ctx: &AnalysisContext<'_>) -> Vec<RiskFinding> {
    graph::find_cycles(&ctx.graph)
        .into_iter()
        .map(|members| {
            let details: Vec<String> = members
                .iter()
                .filter_map(|c| Some(format!("{c} = {}", body(ctx.wb.content(c).formula_text()?))))
                .collect();
            let sheets: BTreeSet<&str> = members.iter().map(|c| c.sheet.as_str()).collect();
            let suggestion = if sheets.len() > 1 {
                format!("Break the circular reference across {}", sheets.iter().map(|s| quote_sheet(s)).collect::<Vec<_>>().join(", "))
            } else {
                "Break the circular reference".to_string()
            };
            ctx.finding(
                DetectorKind::CircleChain,
                RiskDegree::High,
                Location::list(members),
                details.join("; "),
                None,
                suggestion,
            )
        })
        .collect()
}

pub fn detect_fixed_numbers(wb: &Workbook, cfg: &AnalyzerConfig) -> Vec<RiskFinding> {
    run(wb, cfg, fixed_numbers)
}

pub fn detect_unusual_ranges(wb: &Workbook, cfg: &AnalyzerConfig) -> Vec<RiskFinding> {
    run(wb, cfg, unusual_ranges)
}

pub fn detect_jealousy(wb: &Workbook, cfg: &AnalyzerConfig) -> Vec<RiskFinding> {
    run(wb, cfg, jealousy)
}

pub fn detect_multi_function(wb: &Workbook, cfg: &AnalyzerConfig) -> Vec<RiskFinding> {
    run(wb, cfg, multi_function)
}

pub fn detect_many_ref_groups(wb: &Workbook, cfg: &AnalyzerConfig) -> Vec<RiskFinding> {
    run(wb, cfg, many_ref_groups)
}

pub fn detect_long_chain(wb: &Workbook, cfg: &AnalyzerConfig) -> Vec<RiskFinding> {
    run(wb, cfg, long_chain)
}

pub fn detect_circle_chain(wb: &Workbook, cfg: &AnalyzerConfig) -> Vec<RiskFinding> {
    run(wb, cfg, circle_chain)
}

pub fn detect_copy_paste(wb: &Workbook, cfg: &AnalyzerConfig) -> Vec<RiskFinding> {
    run(wb, cfg, copy_paste)
}

pub fn detect_empty_reference(wb: &Workbook, cfg: &AnalyzerConfig) -> Vec<RiskFinding> {
    run(wb, cfg, empty_reference)
}

pub fn detect_excel_errors(wb: &Workbook, cfg: &AnalyzerConfig) -> Vec<RiskFinding> {
    run(wb, cfg, excel_errors)
}
