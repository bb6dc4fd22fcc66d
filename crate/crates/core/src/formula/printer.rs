use std::fmt::Write;

use crate::model::{col_to_letters, quote_sheet, Value};

use super::{CellRef, Expr, Locale, RefSpan, UnaryOp, PREC_PERCENT, PREC_UNARY};

/// Prints an AST back to formula text (with leading `=`). Parentheses are
/// added where precedence requires them even if the tree has no `Paren` node.
pub fn print(ast: &Expr, locale: Locale) -> String {
    let mut out = String::from("=");
    write_expr(&mut out, ast, locale, &mut |out, span| write_a1_span(out, span));
    out
}

pub(super) fn write_expr(
    out: &mut String,
    e: &Expr,
    locale: Locale,
    refs: &mut dyn FnMut(&mut String, &RefSpan),
) {
    match e {
        Expr::Literal(v) => write_literal(out, v, locale),
        Expr::Ref(span) | Expr::Range(span) => refs(out, span),
        Expr::Function { name, args } => {
            out.push_str(name);
            out.push('(');
            for (i, a) in args.iter().enumerate() {
                if i > 0 {
                    out.push(locale.separator());
                }
                write_expr(out, a, locale, refs);
            }
            out.push(')');
        }
        Expr::Paren(inner) => {
            out.push('(');
            write_expr(out, inner, locale, refs);
            out.push(')');
        }
        Expr::Unary { op: UnaryOp::Percent, expr } => {
            write_child(out, expr, expr.precedence() < PREC_PERCENT, locale, refs);
            out.push('%');
        }
        Expr::Unary { op, expr } => {
            out.push(if *op == UnaryOp::Minus { '-' } else { '+' });
            write_child(out, expr, expr.precedence() < PREC_UNARY, locale, refs);
        }
        Expr::Binary { op, lhs, rhs } => {
            let prec = op.precedence();
            write_child(out, lhs, lhs.precedence() < prec, locale, refs);
            out.push_str(op.symbol());
            write_child(out, rhs, rhs.precedence() <= prec, locale, refs);
        }
    }
}

fn write_child(
    out: &mut String,
    e: &Expr,
    wrap: bool,
    locale: Locale,
    refs: &mut dyn FnMut(&mut String, &RefSpan),
) {
    if wrap {
        out.push('(');
    }
    write_expr(out, e, locale, refs);
    if wrap {
        out.push(')');
    }
}

fn write_literal(out: &mut String, v: &Value, locale: Locale) {
    match v {
        Value::Number(n) => out.push_str(&format_number(*n, locale)),
        Value::Text(s) => {
            out.push('"');
            out.push_str(&s.replace('"', "\"\""));
            out.push('"');
        }
        Value::Bool(b) => out.push_str(if *b { "TRUE" } else { "FALSE" }),
        Value::Error(e) => out.push_str(e.excel()),
        Value::Blank => {}
    }
}

/// Shortest round-tripping decimal text of a number in the given locale.
pub fn format_number(n: f64, locale: Locale) -> String {
    let s = format!("{n}");
    match locale {
        Locale::Point => s,
        Locale::Comma => s.replace('.', ","),
    }
}

pub(super) fn write_qualifier(out: &mut String, span: &RefSpan) {
    match (&span.external_book, &span.sheet) {
        (Some(book), sheet) => {
            let inner = format!("[{}]{}", book, sheet.as_deref().unwrap_or_default());
            let _ = write!(out, "'{}'!", inner.replace('\'', "''"));
        }
        (None, Some(sheet)) => {
            out.push_str(&quote_sheet(sheet));
            out.push('!');
        }
        (None, None) => {}
    }
}

fn write_a1_cell(out: &mut String, c: &CellRef) {
    if c.col_abs {
        out.push('$');
    }
    out.push_str(&col_to_letters(c.col));
    if c.row_abs {
        out.push('$');
    }
    let _ = write!(out, "{}", c.row);
}

fn write_a1_span(out: &mut String, span: &RefSpan) {
    write_qualifier(out, span);
    write_a1_cell(out, &span.start);
    if let Some(end) = &span.end {
        out.push(':');
        write_a1_cell(out, end);
    }
}
