//! A1-notation addresses and sheet-name quoting.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

pub const MAX_ROW: u32 = 1_048_576;
pub const MAX_COL: u32 = 16_384;

/// A position inside one sheet, 1-based. Ordered row-major.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Pos {
    pub row: u32,
    pub col: u32,
}

impl Pos {
    pub const fn new(row: u32, col: u32) -> Self {
        Pos { row, col }
    }

    pub fn in_bounds(self) -> bool {
        (1..=MAX_ROW).contains(&self.row) && (1..=MAX_COL).contains(&self.col)
    }

    /// Offset by a signed delta, `None` when the result leaves the grid.
    pub fn offset(self, dr: i64, dc: i64) -> Option<Pos> {
        let row = i64::from(self.row) + dr;
        let col = i64::from(self.col) + dc;
        let p = Pos::new(u32::try_from(row).ok()?, u32::try_from(col).ok()?);
        p.in_bounds().then_some(p)
    }

    pub fn to_a1(self) -> String {
        format!("{}{}", col_to_letters(self.col), self.row)
    }
}

impl fmt::Display for Pos {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{}", col_to_letters(self.col), self.row)
    }
}

impl FromStr for Pos {
    type Err = AddrError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_a1(s).ok_or_else(|| AddrError(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("invalid cell address `{0}`")]
pub struct AddrError(pub String);

/// Column number (1-based) to letters: 1 → A, 27 → AA.
pub fn col_to_letters(mut col: u32) -> String {
    let mut buf = Vec::new();
    while col > 0 {
        let rem = (col - 1) % 26;
        buf.push(b'A' + rem as u8);
        col = (col - 1) / 26;
    }
    buf.reverse();
    String::from_utf8(buf).expect("ascii")
}

/// Letters to column number; `None` if empty, non-alphabetic or out of range.
pub fn letters_to_col(s: &str) -> Option<u32> {
    if s.is_empty() || s.len() > 3 {
        return None;
    }
    let mut col: u32 = 0;
    for b in s.bytes() {
        if !b.is_ascii_alphabetic() {
            return None;
        }
        col = col * 26 + u32::from(b.to_ascii_uppercase() - b'A' + 1);
    }
    (col <= MAX_COL).then_some(col)
}

/// Parse plain A1 (no `$`, no sheet).
pub fn parse_a1(s: &str) -> Option<Pos> {
    let split = s.find(|c: char| c.is_ascii_digit())?;
    let (letters, digits) = s.split_at(split);
    let col = letters_to_col(letters)?;
    if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) || digits.starts_with('0') {
        return None;
    }
    let row: u32 = digits.parse().ok()?;
    let p = Pos::new(row, col);
    p.in_bounds().then_some(p)
}

/// True when a sheet name can be written without quotes in a formula.
pub fn is_bare_sheet_name(name: &str) -> bool {
    let mut chars = name.chars();
    let Some(first) = chars.next() else {
        return false;
    };
    if !(first.is_ascii_alphabetic() || first == '_') {
        return false;
    }
    if !name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '.') {
        return false;
    }
    let upper = name.to_ascii_uppercase();
    if upper == "TRUE" || upper == "FALSE" {
        return false;
    }
    // Names that read as a cell reference (e.g. "AB12") or R1C1 tokens must be quoted.
    if parse_a1(name).is_some() {
        return false;
    }
    let r1c1 = upper.starts_with('R') || upper.starts_with('C');
    !(r1c1 && upper[1..].chars().all(|c| c.is_ascii_digit() || c == 'C'))
}

/// Sheet name as it appears before `!`, quoted when needed.
pub fn quote_sheet(name: &str) -> String {
    if is_bare_sheet_name(name) {
        name.to_string()
    } else {
        format!("'{}'", name.replace('\'', "''"))
    }
}

/// Split a `Sheet!Rest` or `'Quoted'!Rest` prefix. Returns (sheet, rest).
pub fn split_sheet_prefix(s: &str) -> Option<(String, &str)> {
    if let Some(body) = s.strip_prefix('\'') {
        let mut name = String::new();
        let mut chars = body.char_indices().peekable();
        while let Some((i, c)) = chars.next() {
            if c == '\'' {
                if let Some(&(_, '\'')) = chars.peek() {
                    chars.next();
                    name.push('\'');
                    continue;
                }
                let rest = &body[i + 1..];
                return rest.strip_prefix('!').map(|r| (name, r));
            }
            name.push(c);
        }
        None
    } else {
        let idx = s.rfind('!')?;
        Some((s[..idx].to_string(), &s[idx + 1..]))
    }
}

/// A cell inside a named sheet.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CellAddr {
    pub sheet: String,
    pub pos: Pos,
}

impl CellAddr {
    pub fn new(sheet: impl Into<String>, row: u32, col: u32) -> Self {
        CellAddr { sheet: sheet.into(), pos: Pos::new(row, col) }
    }

    pub fn at(sheet: impl Into<String>, pos: Pos) -> Self {
        CellAddr { sheet: sheet.into(), pos }
    }

    pub fn row(&self) -> u32 {
        self.pos.row
    }

    pub fn col(&self) -> u32 {
        self.pos.col
    }
}

impl fmt::Display for CellAddr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}!{}", quote_sheet(&self.sheet), self.pos)
    }
}

impl FromStr for CellAddr {
    type Err = AddrError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = || AddrError(s.to_string());
        let (sheet, rest) = split_sheet_prefix(s).ok_or_else(err)?;
        let pos = parse_a1(rest).ok_or_else(err)?;
        Ok(CellAddr { sheet, pos })
    }
}

impl Serialize for CellAddr {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for CellAddr {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Inclusive rectangle of positions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Rect {
    pub top: u32,
    pub left: u32,
    pub bottom: u32,
    pub right: u32,
}

impl Rect {
    /// Normalizes the corners so that top ≤ bottom and left ≤ right.
    pub fn new(a: Pos, b: Pos) -> Self {
        Rect {
            top: a.row.min(b.row),
            left: a.col.min(b.col),
            bottom: a.row.max(b.row),
            right: a.col.max(b.col),
        }
    }

    pub fn single(p: Pos) -> Self {
        Rect::new(p, p)
    }

    pub fn height(&self) -> u32 {
        self.bottom - self.top + 1
    }

    pub fn width(&self) -> u32 {
        self.right - self.left + 1
    }

    pub fn area(&self) -> u64 {
        u64::from(self.height()) * u64::from(self.width())
    }

    pub fn contains(&self, p: Pos) -> bool {
        (self.top..=self.bottom).contains(&p.row) && (self.left..=self.right).contains(&p.col)
    }

    pub fn intersects(&self, other: &Rect) -> bool {
        self.left <= other.right
            && other.left <= self.right
            && self.top <= other.bottom
            && other.top <= self.bottom
    }

    pub fn top_left(&self) -> Pos {
        Pos::new(self.top, self.left)
    }

    pub fn bottom_right(&self) -> Pos {
        Pos::new(self.bottom, self.right)
    }

    /// Row-major iteration over every position.
    pub fn positions(&self) -> impl Iterator<Item = Pos> + '_ {
        (self.top..=self.bottom)
            .flat_map(move |r| (self.left..=self.right).map(move |c| Pos::new(r, c)))
    }
}

impl fmt::Display for Rect {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.top == self.bottom && self.left == self.right {
            write!(f, "{}", self.top_left())
        } else {
            write!(f, "{}:{}", self.top_left(), self.bottom_right())
        }
    }
}

impl FromStr for Rect {
    type Err = AddrError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = || AddrError(s.to_string());
        match s.split_once(':') {
            Some((a, b)) => Ok(Rect::new(parse_a1(a).ok_or_else(err)?, parse_a1(b).ok_or_else(err)?)),
            None => Ok(Rect::single(parse_a1(s).ok_or_else(err)?)),
        }
    }
}

impl Serialize for Rect {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Rect {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}
