use std::collections::BTreeMap;
use std::fmt::Write;

use crate::model::{ErrorCode, Pos, Value};

use super::printer::{write_expr, write_qualifier};
use super::{CellRef, Expr, Locale, RefSpan, UnaryOp};

/// Every reference in left-to-right source order, duplicates kept.
/// Unqualified references are resolved to `home_sheet`.
pub fn extract_refs(ast: &Expr, home_sheet: &str) -> Vec<RefSpan> {
    let mut out = Vec::new();
    ast.walk(&mut |e| {
        if let Expr::Ref(span) | Expr::Range(span) = e {
            let mut span = span.clone();
            if span.sheet.is_none() {
                span.sheet = Some(home_sheet.to_string());
            }
            out.push(span);
        }
    });
    out
}

/// Copy-fill invariant encoding: relative axes become offsets from `origin`
/// (`R[-1]C[2]`, `R` and `C` for zero), absolute axes keep their index
/// (`R1C1`). Two formulas are copy-fill equivalent iff their forms match.
pub fn relative_normal_form(ast: &Expr, origin: Pos) -> String {
    let mut out = String::new();
    write_expr(&mut out, ast, Locale::Point, &mut |out, span| {
        write_qualifier(out, span);
        write_r1c1(out, &span.start, origin);
        if let Some(end) = &span.end {
            out.push(':');
            write_r1c1(out, end, origin);
        }
    });
    out
}

/// The formula with every reference replaced by `_`; formulas that differ
/// only in where they point share a skeleton.
pub fn skeleton(ast: &Expr) -> String {
    let mut out = String::new();
    write_expr(&mut out, ast, Locale::Point, &mut |out, span| {
        out.push('_');
        if span.is_range() {
            out.push_str(":_");
        }
    });
    out
}

fn write_r1c1(out: &mut String, c: &CellRef, origin: Pos) {
    write_axis(out, 'R', c.row, c.row_abs, origin.row);
    write_axis(out, 'C', c.col, c.col_abs, origin.col);
}

fn write_axis(out: &mut String, tag: char, value: u32, abs: bool, origin: u32) {
    out.push(tag);
    if abs {
        let _ = write!(out, "{value}");
    } else {
        let d = i64::from(value) - i64::from(origin);
        if d != 0 {
            let _ = write!(out, "[{d}]");
        }
    }
}

/// Structural measurements of one formula.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FormulaMetrics {
    pub function_count: usize,
    /// Number of reference and range operands; a range counts once.
    pub distinct_ref_groups: usize,
    /// Numeric literals in source order. A minus sign applied directly to a
    /// literal is folded into it.
    pub numeric_literals: Vec<f64>,
    /// Deepest nesting of function calls (0 when there are none).
    pub max_nesting_depth: usize,
    /// Explicit sheet qualifiers with multiplicity; external ones as `[Book]Sheet`.
    pub sheets_referenced: BTreeMap<String, usize>,
}

pub fn metrics(ast: &Expr) -> FormulaMetrics {
    let mut m = FormulaMetrics::default();
    collect(ast, 0, &mut m);
    m
}

fn collect(e: &Expr, depth: usize, m: &mut FormulaMetrics) {
    match e {
        Expr::Literal(Value::Number(n)) => m.numeric_literals.push(*n),
        Expr::Literal(_) => {}
        Expr::Ref(span) | Expr::Range(span) => {
            m.distinct_ref_groups += 1;
            if let Some(sheet) = &span.sheet {
                let key = match &span.external_book {
                    Some(book) => format!("[{book}]{sheet}"),
                    None => sheet.clone(),
                };
                *m.sheets_referenced.entry(key).or_default() += 1;
            }
        }
        Expr::Function { args, .. } => {
            m.function_count += 1;
            m.max_nesting_depth = m.max_nesting_depth.max(depth + 1);
            for a in args {
                collect(a, depth + 1, m);
            }
        }
        Expr::Unary { op: UnaryOp::Minus, expr } if matches!(**expr, Expr::Literal(Value::Number(_))) => {
            if let Expr::Literal(Value::Number(n)) = **expr {
                m.numeric_literals.push(-n);
            }
        }
        Expr::Unary { expr, .. } | Expr::Paren(expr) => collect(expr, depth, m),
        Expr::Binary { lhs, rhs, .. } => {
            collect(lhs, depth, m);
            collect(rhs, depth, m);
        }
    }
}

/// Moves references by `(dr, dc)`. Absolute axes move only when
/// `include_absolute` is set (cut-and-paste); otherwise this is copy-fill.
/// References pushed off the grid become `#REF!`.
pub fn shift_refs(ast: &Expr, dr: i64, dc: i64, include_absolute: bool) -> Expr {
    let mut out = ast.clone();
    out.walk_mut(&mut |e| {
        let span = match e {
            Expr::Ref(span) | Expr::Range(span) => span,
            _ => return,
        };
        let start = shift_cell(span.start, dr, dc, include_absolute);
        let end = span.end.map(|c| shift_cell(c, dr, dc, include_absolute));
        match (start, end) {
            (Some(s), None) if span.end.is_none() => span.start = s,
            (Some(s), Some(Some(t))) => {
                let (a, b) = super::normalize_corners(s, t);
                span.start = a;
                span.end = Some(b);
            }
            _ => *e = Expr::Literal(Value::Error(ErrorCode::Ref)),
        }
    });
    out
}

fn shift_cell(c: CellRef, dr: i64, dc: i64, include_absolute: bool) -> Option<CellRef> {
    let row = if c.row_abs && !include_absolute { i64::from(c.row) } else { i64::from(c.row) + dr };
    let col = if c.col_abs && !include_absolute { i64::from(c.col) } else { i64::from(c.col) + dc };
    let shifted = CellRef { row: u32::try_from(row).ok()?, col: u32::try_from(col).ok()?, ..c };
    shifted.in_bounds().then_some(shifted)
}
