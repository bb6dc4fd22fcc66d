//! Excel formula subset: tokenizer, parser, printer and structural analysis.
//!
//! Operator precedence, loosest first:
//!
//! | level | operators            | associativity |
//! |-------|----------------------|---------------|
//! | 1     | `= <> < <= > >=`     | left          |
//! | 2     | `&`                  | left          |
//! | 3     | `+ -`                | left          |
//! | 4     | `* /`                | left          |
//! | 5     | `^`                  | left          |
//! | 6     | `%` (postfix)        |               |
//! | 7     | unary `-` `+`        |               |
//!
//! Excel quirks are kept on purpose: `=-2^2` is 4 and `=2^3^2` is 64.

mod analysis;
mod lexer;
mod parser;
mod printer;

use std::fmt;

use crate::model::{Value, MAX_COL, MAX_ROW};

pub use analysis::{extract_refs, metrics, relative_normal_form, shift_refs, skeleton, FormulaMetrics};
pub use parser::parse;
pub use printer::print;

/// Number and list-separator conventions of the text being parsed or printed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Locale {
    /// `1.5`, arguments separated by `,`.
    #[default]
    Point,
    /// `1,5`, arguments separated by `;`.
    Comma,
}

impl Locale {
    pub fn decimal(self) -> char {
        match self {
            Locale::Point => '.',
            Locale::Comma => ',',
        }
    }

    pub fn separator(self) -> char {
        match self {
            Locale::Point => ',',
            Locale::Comma => ';',
        }
    }
}

/// One corner of a reference.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CellRef {
    pub col: u32,
    pub row: u32,
    pub col_abs: bool,
    pub row_abs: bool,
}

impl CellRef {
    pub const fn relative(row: u32, col: u32) -> Self {
        CellRef { col, row, col_abs: false, row_abs: false }
    }

    pub const fn absolute(row: u32, col: u32) -> Self {
        CellRef { col, row, col_abs: true, row_abs: true }
    }

    pub fn pos(&self) -> crate::model::Pos {
        crate::model::Pos::new(self.row, self.col)
    }

    pub(crate) fn in_bounds(&self) -> bool {
        (1..=MAX_ROW).contains(&self.row) && (1..=MAX_COL).contains(&self.col)
    }
}

/// A cell or range reference, optionally qualified by sheet and external book.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RefSpan {
    pub sheet: Option<String>,
    pub external_book: Option<String>,
    pub start: CellRef,
    pub end: Option<CellRef>,
}

impl RefSpan {
    pub fn cell(start: CellRef) -> Self {
        RefSpan { sheet: None, external_book: None, start, end: None }
    }

    /// Builds a range with corners normalized so start ≤ end on both axes.
    pub fn range(a: CellRef, b: CellRef) -> Self {
        let (start, end) = normalize_corners(a, b);
        RefSpan { sheet: None, external_book: None, start, end: Some(end) }
    }

    pub fn on_sheet(mut self, sheet: impl Into<String>) -> Self {
        self.sheet = Some(sheet.into());
        self
    }

    pub fn in_book(mut self, book: impl Into<String>) -> Self {
        self.external_book = Some(book.into());
        self
    }

    pub fn is_range(&self) -> bool {
        self.end.is_some()
    }

    pub fn rect(&self) -> crate::model::Rect {
        crate::model::Rect::new(self.start.pos(), self.end.unwrap_or(self.start).pos())
    }
}

pub(crate) fn normalize_corners(a: CellRef, b: CellRef) -> (CellRef, CellRef) {
    let (c0, ca0, c1, ca1) =
        if a.col <= b.col { (a.col, a.col_abs, b.col, b.col_abs) } else { (b.col, b.col_abs, a.col, a.col_abs) };
    let (r0, ra0, r1, ra1) =
        if a.row <= b.row { (a.row, a.row_abs, b.row, b.row_abs) } else { (b.row, b.row_abs, a.row, a.row_abs) };
    (
        CellRef { col: c0, row: r0, col_abs: ca0, row_abs: ra0 },
        CellRef { col: c1, row: r1, col_abs: ca1, row_abs: ra1 },
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum UnaryOp {
    Plus,
    Minus,
    /// Postfix `%`.
    Percent,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
    Concat,
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
}

impl BinaryOp {
    pub fn symbol(self) -> &'static str {
        match self {
            BinaryOp::Add => "+",
            BinaryOp::Sub => "-",
            BinaryOp::Mul => "*",
            BinaryOp::Div => "/",
            BinaryOp::Pow => "^",
            BinaryOp::Concat => "&",
            BinaryOp::Eq => "=",
            BinaryOp::Ne => "<>",
            BinaryOp::Lt => "<",
            BinaryOp::Le => "<=",
            BinaryOp::Gt => ">",
            BinaryOp::Ge => ">=",
        }
    }

    pub(crate) fn precedence(self) -> u8 {
        match self {
            BinaryOp::Eq | BinaryOp::Ne | BinaryOp::Lt | BinaryOp::Le | BinaryOp::Gt | BinaryOp::Ge => 1,
            BinaryOp::Concat => 2,
            BinaryOp::Add | BinaryOp::Sub => 3,
            BinaryOp::Mul | BinaryOp::Div => 4,
            BinaryOp::Pow => 5,
        }
    }

    pub const ALL: [BinaryOp; 12] = [
        BinaryOp::Add,
        BinaryOp::Sub,
        BinaryOp::Mul,
        BinaryOp::Div,
        BinaryOp::Pow,
        BinaryOp::Concat,
        BinaryOp::Eq,
        BinaryOp::Ne,
        BinaryOp::Lt,
        BinaryOp::Le,
        BinaryOp::Gt,
        BinaryOp::Ge,
    ];
}

pub(crate) const PREC_PERCENT: u8 = 6;
pub(crate) const PREC_UNARY: u8 = 7;
pub(crate) const PREC_ATOM: u8 = 8;

/// Parsed formula tree.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    /// `Value::Blank` only appears as an omitted function argument.
    Literal(Value),
    Ref(RefSpan),
    Range(RefSpan),
    Function { name: String, args: Vec<Expr> },
    Unary { op: UnaryOp, expr: Box<Expr> },
    Binary { op: BinaryOp, lhs: Box<Expr>, rhs: Box<Expr> },
    Paren(Box<Expr>),
}

pub type FormulaAst = Expr;

impl Expr {
    pub fn number(n: f64) -> Expr {
        Expr::Literal(Value::Number(n))
    }

    pub fn binary(op: BinaryOp, lhs: Expr, rhs: Expr) -> Expr {
        Expr::Binary { op, lhs: Box::new(lhs), rhs: Box::new(rhs) }
    }

    pub fn unary(op: UnaryOp, expr: Expr) -> Expr {
        Expr::Unary { op, expr: Box::new(expr) }
    }

    pub fn function(name: &str, args: Vec<Expr>) -> Expr {
        Expr::Function { name: name.to_ascii_uppercase(), args }
    }

    pub(crate) fn precedence(&self) -> u8 {
        match self {
            Expr::Binary { op, .. } => op.precedence(),
            Expr::Unary { op: UnaryOp::Percent, .. } => PREC_PERCENT,
            Expr::Unary { .. } => PREC_UNARY,
            _ => PREC_ATOM,
        }
    }

    /// The same tree with every `Paren` node removed.
    pub fn without_parens(&self) -> Expr {
        match self {
            Expr::Paren(inner) => inner.without_parens(),
            Expr::Function { name, args } => Expr::Function {
                name: name.clone(),
                args: args.iter().map(Expr::without_parens).collect(),
            },
            Expr::Unary { op, expr } => Expr::unary(*op, expr.without_parens()),
            Expr::Binary { op, lhs, rhs } => Expr::binary(*op, lhs.without_parens(), rhs.without_parens()),
            other => other.clone(),
        }
    }

    /// Pre-order visit of every node.
    pub fn walk<'a>(&'a self, f: &mut impl FnMut(&'a Expr)) {
        f(self);
        match self {
            Expr::Function { args, .. } => args.iter().for_each(|a| a.walk(f)),
            Expr::Unary { expr, .. } | Expr::Paren(expr) => expr.walk(f),
            Expr::Binary { lhs, rhs, .. } => {
                lhs.walk(f);
                rhs.walk(f);
            }
            _ => {}
        }
    }

    /// Pre-order mutable visit.
    pub fn walk_mut(&mut self, f: &mut impl FnMut(&mut Expr)) {
        f(self);
        match self {
            Expr::Function { args, .. } => args.iter_mut().for_each(|a| a.walk_mut(f)),
            Expr::Unary { expr, .. } | Expr::Paren(expr) => expr.walk_mut(f),
            Expr::Binary { lhs, rhs, .. } => {
                lhs.walk_mut(f);
                rhs.walk_mut(f);
            }
            _ => {}
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&print(self, Locale::Point))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ParseError {
    #[error("syntax error at offset {offset}: expected {expected}")]
    SyntaxError { offset: usize, expected: String },
    #[error("unbalanced parentheses")]
    UnbalancedParens,
    #[error("empty formula")]
    EmptyFormula,
}

impl ParseError {
    pub(crate) fn syntax(offset: usize, expected: impl Into<String>) -> Self {
        ParseError::SyntaxError { offset, expected: expected.into() }
    }
}
