//! Workbook object model.
//!
//! A [`Workbook`] is immutable once loaded: analysis only reads it, and the
//! injection harness produces a modified copy. Numbers are `f64`; two numbers
//! compare equal in analysis when they differ by at most [`NUMBER_TOLERANCE`].

mod addr;
pub mod eval;
pub mod interchange;
pub mod xlsx;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use addr::{
    col_to_letters, is_bare_sheet_name, letters_to_col, parse_a1, quote_sheet, split_sheet_prefix,
    AddrError, CellAddr, Pos, Rect, MAX_COL, MAX_ROW,
};

use crate::formula;

/// Absolute tolerance used whenever two numbers are compared for equality.
pub const NUMBER_TOLERANCE: f64 = 1e-9;

pub fn numbers_equal(a: f64, b: f64) -> bool {
    a == b || (a - b).abs() <= NUMBER_TOLERANCE
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ErrorCode {
    #[serde(rename = "DIV0")]
    Div0,
    #[serde(rename = "NA")]
    Na,
    #[serde(rename = "NAME")]
    Name,
    #[serde(rename = "NULL")]
    Null,
    #[serde(rename = "NUM")]
    Num,
    #[serde(rename = "REF")]
    Ref,
    #[serde(rename = "VALUE")]
    Value,
}

impl ErrorCode {
    pub const ALL: [ErrorCode; 7] = [
        ErrorCode::Div0,
        ErrorCode::Na,
        ErrorCode::Name,
        ErrorCode::Null,
        ErrorCode::Num,
        ErrorCode::Ref,
        ErrorCode::Value,
    ];

    /// Canonical Excel spelling, e.g. `#DIV/0!`.
    pub fn excel(self) -> &'static str {
        match self {
            ErrorCode::Div0 => "#DIV/0!",
            ErrorCode::Na => "#N/A",
            ErrorCode::Name => "#NAME?",
            ErrorCode::Null => "#NULL!",
            ErrorCode::Num => "#NUM!",
            ErrorCode::Ref => "#REF!",
            ErrorCode::Value => "#VALUE!",
        }
    }

    /// Short identifier used by the interchange format.
    pub fn code(self) -> &'static str {
        match self {
            ErrorCode::Div0 => "DIV0",
            ErrorCode::Na => "NA",
            ErrorCode::Name => "NAME",
            ErrorCode::Null => "NULL",
            ErrorCode::Num => "NUM",
            ErrorCode::Ref => "REF",
            ErrorCode::Value => "VALUE",
        }
    }

    /// Accepts identifiers, canonical spellings and the Dutch, German and
    /// French localized spellings (case-insensitive).
    pub fn parse_any(s: &str) -> Option<ErrorCode> {
        let u = s.trim().to_uppercase();
        let code = match u.as_str() {
            "DIV0" | "#DIV/0!" | "#DEEL/0!" => ErrorCode::Div0,
            "NA" | "#N/A" | "#N/B" | "#NV" => ErrorCode::Na,
            "NAME" | "#NAME?" | "#NAAM?" | "#NOM?" => ErrorCode::Name,
            "NULL" | "#NULL!" | "#LEEG!" | "#NUL!" => ErrorCode::Null,
            "NUM" | "#NUM!" | "#GETAL!" | "#ZAHL!" | "#NOMBRE!" => ErrorCode::Num,
            "REF" | "#REF!" | "#VERW!" | "#BEZUG!" => ErrorCode::Ref,
            "VALUE" | "#VALUE!" | "#WAARDE!" | "#WERT!" | "#VALEUR!" => ErrorCode::Value,
            _ => return None,
        };
        Some(code)
    }
}

impl fmt::Display for ErrorCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.excel())
    }
}

/// A computed or literal value.
#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Number(f64),
    Text(String),
    Bool(bool),
    Error(ErrorCode),
    Blank,
}

impl Value {
    pub fn is_blank(&self) -> bool {
        matches!(self, Value::Blank)
    }

    pub fn as_error(&self) -> Option<ErrorCode> {
        match self {
            Value::Error(e) => Some(*e),
            _ => None,
        }
    }

    /// Equality with numeric tolerance; text is compared exactly.
    pub fn approx_eq(&self, other: &Value) -> bool {
        match (self, other) {
            (Value::Number(a), Value::Number(b)) => numbers_equal(*a, *b),
            _ => self == other,
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Number(n) => write!(f, "{n}"),
            Value::Text(s) => f.write_str(s),
            Value::Bool(b) => f.write_str(if *b { "TRUE" } else { "FALSE" }),
            Value::Error(e) => write!(f, "{e}"),
            Value::Blank => Ok(()),
        }
    }
}

/// What a cell holds.
#[derive(Debug, Clone, PartialEq)]
pub enum Content {
    Blank,
    Text(String),
    Number(f64),
    Bool(bool),
    Error(ErrorCode),
    /// Formula text (always starting with `=`) plus the value cached in the file.
    Formula { text: String, cached: Option<Value> },
}

impl Content {
    pub fn formula(text: impl Into<String>, cached: Option<Value>) -> Self {
        Content::Formula { text: text.into(), cached }
    }

    pub fn is_blank(&self) -> bool {
        matches!(self, Content::Blank)
    }

    pub fn is_formula(&self) -> bool {
        matches!(self, Content::Formula { .. })
    }

    pub fn formula_text(&self) -> Option<&str> {
        match self {
            Content::Formula { text, .. } => Some(text),
            _ => None,
        }
    }

    /// The value an observer sees: the literal, or the formula's cached value.
    pub fn value(&self) -> Value {
        match self {
            Content::Blank => Value::Blank,
            Content::Text(s) => Value::Text(s.clone()),
            Content::Number(n) => Value::Number(*n),
            Content::Bool(b) => Value::Bool(*b),
            Content::Error(e) => Value::Error(*e),
            Content::Formula { cached, .. } => cached.clone().unwrap_or(Value::Blank),
        }
    }

    /// Literal content built from a value.
    pub fn from_value(v: Value) -> Content {
        match v {
            Value::Number(n) => Content::Number(n),
            Value::Text(s) => Content::Text(s),
            Value::Bool(b) => Content::Bool(b),
            Value::Error(e) => Content::Error(e),
            Value::Blank => Content::Blank,
        }
    }
}

/// A cell with its address, as handed to per-cell operations.
#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub addr: CellAddr,
    pub content: Content,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Visibility {
    #[default]
    Visible,
    Hidden,
    VeryHidden,
}

impl Visibility {
    pub fn as_str(self) -> &'static str {
        match self {
            Visibility::Visible => "visible",
            Visibility::Hidden => "hidden",
            Visibility::VeryHidden => "very_hidden",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sheet {
    pub name: String,
    pub visibility: Visibility,
    cells: BTreeMap<Pos, Content>,
}

impl Sheet {
    pub fn new(name: impl Into<String>) -> Self {
        Sheet { name: name.into(), visibility: Visibility::Visible, cells: BTreeMap::new() }
    }

    pub fn with_visibility(mut self, visibility: Visibility) -> Self {
        self.visibility = visibility;
        self
    }

    /// Stores `content` at `pos`; blank content removes the cell.
    pub fn set(&mut self, pos: Pos, content: Content) -> Result<(), ModelError> {
        if !pos.in_bounds() {
            return Err(ModelError::OutOfBounds(pos));
        }
        if let Content::Formula { text, cached } = &content {
            if !text.starts_with('=') {
                return Err(ModelError::FormulaWithoutEquals(text.clone()));
            }
            if cached.as_ref().is_some_and(Value::is_blank) {
                // A blank cache carries no information.
                self.cells.insert(pos, Content::Formula { text: text.clone(), cached: None });
                return Ok(());
            }
        }
        if content.is_blank() {
            self.cells.remove(&pos);
        } else {
            self.cells.insert(pos, content);
        }
        Ok(())
    }

    /// Builder-style `set` for fixtures; panics on invalid addresses.
    pub fn with(mut self, a1: &str, content: Content) -> Self {
        let pos = parse_a1(a1).unwrap_or_else(|| panic!("bad address {a1}"));
        self.set(pos, content).expect("valid content");
        self
    }

    pub fn get(&self, pos: Pos) -> Option<&Content> {
        self.cells.get(&pos)
    }

    pub fn content(&self, pos: Pos) -> &Content {
        const BLANK: Content = Content::Blank;
        self.cells.get(&pos).unwrap_or(&BLANK)
    }

    /// Non-empty cells in row-major order.
    pub fn cells(&self) -> impl Iterator<Item = (Pos, &Content)> + '_ {
        self.cells.iter().map(|(p, c)| (*p, c))
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    /// Smallest rectangle covering every stored cell.
    pub fn used_rect(&self) -> Option<Rect> {
        let mut it = self.cells.keys();
        let first = *it.next()?;
        let mut r = Rect::single(first);
        for p in it {
            r.top = r.top.min(p.row);
            r.bottom = r.bottom.max(p.row);
            r.left = r.left.min(p.col);
            r.right = r.right.max(p.col);
        }
        Some(r)
    }
}

/// Another workbook referenced by formulas.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct ExternalSource {
    pub name: String,
    /// Whether cached values for the source are available.
    pub resolved: bool,
}

/// A cell in an external workbook.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ExternalCell {
    pub book: String,
    pub sheet: String,
    pub pos: Pos,
}

impl fmt::Display for ExternalCell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}]{}!{}", self.book, self.sheet, self.pos)
    }
}

impl FromStr for ExternalCell {
    type Err = AddrError;

    /// Parses `[Book]Sheet!A1`, optionally wrapped in quotes as `'[Book]Sheet'!A1`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = || AddrError(s.to_string());
        let (prefix, rest) = if s.starts_with('\'') {
            split_sheet_prefix(s).ok_or_else(err)?
        } else {
            let idx = s.rfind('!').ok_or_else(err)?;
            (s[..idx].to_string(), &s[idx + 1..])
        };
        let body = prefix.strip_prefix('[').ok_or_else(err)?;
        let (book, sheet) = body.split_once(']').ok_or_else(err)?;
        if book.is_empty() || sheet.is_empty() {
            return Err(err());
        }
        let pos = parse_a1(rest).ok_or_else(err)?;
        Ok(ExternalCell { book: book.to_string(), sheet: sheet.to_string(), pos })
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Workbook {
    pub name: String,
    pub sheets: Vec<Sheet>,
    pub external_sources: Vec<ExternalSource>,
    pub defined_names: BTreeMap<String, String>,
    /// Known values of external cells; an absent entry reads as empty.
    pub external_values: BTreeMap<ExternalCell, Value>,
}

impl Workbook {
    /// Builds a workbook and validates its invariants. External sources are
    /// derived from the formulas.
    pub fn new(name: impl Into<String>, sheets: Vec<Sheet>) -> Result<Self, ModelError> {
        let mut wb = Workbook { name: name.into(), sheets, ..Workbook::default() };
        wb.validate()?;
        wb.refresh_external_sources();
        Ok(wb)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.sheets.is_empty() {
            return Err(ModelError::NoSheets);
        }
        let mut seen = BTreeSet::new();
        for s in &self.sheets {
            if s.name.is_empty() {
                return Err(ModelError::EmptySheetName);
            }
            if !seen.insert(s.name.to_lowercase()) {
                return Err(ModelError::DuplicateSheet(s.name.clone()));
            }
        }
        Ok(())
    }

    pub fn sheet(&self, name: &str) -> Option<&Sheet> {
        self.sheets.iter().find(|s| s.name.eq_ignore_ascii_case(name))
    }

    pub fn sheet_mut(&mut self, name: &str) -> Option<&mut Sheet> {
        self.sheets.iter_mut().find(|s| s.name.eq_ignore_ascii_case(name))
    }

    pub fn sheet_index(&self, name: &str) -> Option<usize> {
        self.sheets.iter().position(|s| s.name.eq_ignore_ascii_case(name))
    }

    /// Canonical spelling of a sheet name as stored in the workbook.
    pub fn canonical_sheet_name(&self, name: &str) -> Option<&str> {
        self.sheet(name).map(|s| s.name.as_str())
    }

    pub fn content(&self, addr: &CellAddr) -> &Content {
        const BLANK: Content = Content::Blank;
        self.sheet(&addr.sheet).map_or(&BLANK, |s| s.content(addr.pos))
    }

    pub fn set(&mut self, addr: &CellAddr, content: Content) -> Result<(), ModelError> {
        let sheet = self
            .sheet_mut(&addr.sheet)
            .ok_or_else(|| ModelError::UnknownSheet(addr.sheet.clone()))?;
        sheet.set(addr.pos, content)
    }

    /// Every non-empty cell in sheet order, then row-major.
    pub fn cells(&self) -> impl Iterator<Item = (CellAddr, &Content)> + '_ {
        self.sheets
            .iter()
            .flat_map(|s| s.cells().map(move |(p, c)| (CellAddr::at(s.name.clone(), p), c)))
    }

    pub fn external_value(&self, cell: &ExternalCell) -> Option<&Value> {
        self.external_values.get(cell)
    }

    /// Recomputes `external_sources` from the books named by formulas.
    /// Formulas that fail to parse are ignored here.
    pub fn refresh_external_sources(&mut self) {
        let mut books = BTreeSet::new();
        for sheet in &self.sheets {
            for (_, content) in sheet.cells() {
                let Some(text) = content.formula_text() else { continue };
                let Ok(ast) = formula::parse(text, formula::Locale::default()) else { continue };
                for r in formula::extract_refs(&ast, &sheet.name) {
                    if let Some(book) = r.external_book {
                        books.insert(book);
                    }
                }
            }
        }
        let with_values: BTreeSet<&str> =
            self.external_values.keys().map(|k| k.book.as_str()).collect();
        self.external_sources = books
            .into_iter()
            .map(|name| {
                let resolved = with_values.contains(name.as_str());
                ExternalSource { name, resolved }
            })
            .collect();
    }
}

/// Decimal separator of the locale a file was authored in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecimalSeparator {
    #[default]
    Point,
    Comma,
}

/// Ingestion options shared by every loader.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct IngestConfig {
    pub decimal: DecimalSeparator,
}

impl IngestConfig {
    pub fn comma() -> Self {
        IngestConfig { decimal: DecimalSeparator::Comma }
    }

    pub fn locale(&self) -> formula::Locale {
        match self.decimal {
            DecimalSeparator::Point => formula::Locale::Point,
            DecimalSeparator::Comma => formula::Locale::Comma,
        }
    }

    /// Parses a number written in this locale. Under comma-decimal, `.` is
    /// accepted as a thousands separator (`1.200` → 1200).
    pub fn parse_number(&self, s: &str) -> Option<f64> {
        let s = s.trim();
        if s.is_empty() {
            return None;
        }
        let canonical = match self.decimal {
            DecimalSeparator::Point => s.to_string(),
            DecimalSeparator::Comma => s.replace('.', "").replace(',', "."),
        };
        let valid = canonical
            .chars()
            .all(|c| c.is_ascii_digit() || matches!(c, '.' | '-' | '+' | 'e' | 'E'));
        if !valid {
            return None;
        }
        canonical.parse::<f64>().ok().filter(|n| n.is_finite())
    }

    /// Rewrites a formula into canonical point-decimal text. Formulas that do
    /// not parse are kept verbatim and surface later as analysis warnings.
    pub fn canonical_formula(&self, text: &str) -> String {
        if self.decimal == DecimalSeparator::Point {
            return text.to_string();
        }
        match formula::parse(text, self.locale()) {
            Ok(ast) => formula::print(&ast, formula::Locale::Point),
            Err(_) => text.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ModelError {
    #[error("a workbook needs at least one sheet")]
    NoSheets,
    #[error("sheet name must not be empty")]
    EmptySheetName,
    #[error("duplicate sheet name `{0}`")]
    DuplicateSheet(String),
    #[error("unknown sheet `{0}`")]
    UnknownSheet(String),
    #[error("cell {0} is outside the sheet bounds")]
    OutOfBounds(Pos),
    #[error("formula `{0}` must start with `=`")]
    FormulaWithoutEquals(String),
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn localized_error_spellings() {
        assert_eq!(ErrorCode::parse_any("#DEEL/0!"), Some(ErrorCode::Div0));
        assert_eq!(ErrorCode::parse_any("#verw!"), Some(ErrorCode::Ref));
        assert_eq!(ErrorCode::parse_any("#WAARDE!"), Some(ErrorCode::Value));
        assert_eq!(ErrorCode::parse_any("#N/B"), Some(ErrorCode::Na));
        assert_eq!(ErrorCode::parse_any("DIV0"), Some(ErrorCode::Div0));
        assert_eq!(ErrorCode::parse_any("#OOPS"), None);
        for e in ErrorCode::ALL {
            assert_eq!(ErrorCode::parse_any(e.excel()), Some(e));
            assert_eq!(ErrorCode::parse_any(e.code()), Some(e));
        }
    }

    #[test]
    fn comma_locale_numbers() {
        let cfg = IngestConfig::comma();
        assert_eq!(cfg.parse_number("1,5"), Some(1.5));
        assert_eq!(cfg.parse_number("1.200"), Some(1200.0));
        assert_eq!(cfg.parse_number("0,0076"), Some(0.0076));
        assert_eq!(cfg.parse_number("abc"), None);
        assert_eq!(IngestConfig::default().parse_number("1.5"), Some(1.5));
    }

    #[test]
    fn duplicate_sheets_case_insensitive() {
        let err = Workbook::new("w", vec![Sheet::new("Data"), Sheet::new("DATA")]).unwrap_err();
        assert_eq!(err, ModelError::DuplicateSheet("DATA".into()));
        assert_eq!(Workbook::new("w", vec![]).unwrap_err(), ModelError::NoSheets);
    }

    #[test]
    fn blank_content_is_not_stored() {
        let mut s = Sheet::new("S");
        s.set(Pos::new(1, 1), Content::Number(1.0)).unwrap();
        s.set(Pos::new(1, 1), Content::Blank).unwrap();
        assert!(s.is_empty());
        assert!(s.set(Pos::new(0, 1), Content::Number(1.0)).is_err());
        assert!(s.set(Pos::new(1, MAX_COL + 1), Content::Number(1.0)).is_err());
    }

    #[test]
    fn external_cell_keys() {
        let c: ExternalCell = "[Budget.xlsx]Q1!A1".parse().unwrap();
        assert_eq!(c.book, "Budget.xlsx");
        assert_eq!(c.sheet, "Q1");
        assert_eq!(c.to_string(), "[Budget.xlsx]Q1!A1");
        let q: ExternalCell = "'[My Book.xlsx]Sheet 1'!B2".parse().unwrap();
        assert_eq!(q.sheet, "Sheet 1");
        assert!("Q1!A1".parse::<ExternalCell>().is_err());
    }

    #[test]
    fn external_sources_follow_formulas() {
        let s = Sheet::new("S")
            .with("A1", Content::formula("='[Budget.xlsx]Q1'!A1", None))
            .with("A2", Content::formula("=[Plan.xlsx]Q2!B1+'[Budget.xlsx]Q1'!A2", None));
        let wb = Workbook::new("w", vec![s]).unwrap();
        let names: Vec<_> = wb.external_sources.iter().map(|e| e.name.as_str()).collect();
        assert_eq!(names, ["Budget.xlsx", "Plan.xlsx"]);
        assert!(wb.external_sources.iter().all(|e| !e.resolved));
    }
}
