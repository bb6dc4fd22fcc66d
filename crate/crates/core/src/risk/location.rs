use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::model::{split_sheet_prefix, AddrError, CellAddr, Rect, Workbook};

/// Where a finding points: one cell, a rectangle on one sheet, or a list of
/// cells (always at least two).
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Location {
    Cell(CellAddr),
    Range { sheet: String, rect: Rect },
    List(Vec<CellAddr>),
}

impl Location {
    pub fn range(sheet: impl Into<String>, rect: Rect) -> Location {
        let sheet = sheet.into();
        if rect.area() == 1 {
            Location::Cell(CellAddr::at(sheet, rect.top_left()))
        } else {
            Location::Range { sheet, rect }
        }
    }

    /// A list location, collapsed to a single cell when there is only one.
    pub fn list(mut cells: Vec<CellAddr>) -> Location {
        cells.dedup();
        if cells.len() == 1 {
            Location::Cell(cells.remove(0))
        } else {
            Location::List(cells)
        }
    }

    pub fn contains(&self, cell: &CellAddr) -> bool {
        match self {
            Location::Cell(c) => c.sheet.eq_ignore_ascii_case(&cell.sheet) && c.pos == cell.pos,
            Location::Range { sheet, rect } => sheet.eq_ignore_ascii_case(&cell.sheet) && rect.contains(cell.pos),
            Location::List(cells) => cells.iter().any(|c| c.sheet.eq_ignore_ascii_case(&cell.sheet) && c.pos == cell.pos),
        }
    }

    /// True when every cell of `self` lies inside `other`.
    pub fn within(&self, other: &Location) -> bool {
        match self {
            Location::Cell(c) => other.contains(c),
            Location::Range { sheet, rect } => match other {
                Location::Range { sheet: s2, rect: r2 } => {
                    s2.eq_ignore_ascii_case(sheet) && r2.contains(rect.top_left()) && r2.contains(rect.bottom_right())
                }
                _ => rect.positions().all(|p| other.contains(&CellAddr::at(sheet.clone(), p))),
            },
            Location::List(cells) => cells.iter().all(|c| other.contains(c)),
        }
    }

    /// Sheets touched, in order of appearance.
    pub fn sheets(&self) -> Vec<&str> {
        let names: Vec<&str> = match self {
            Location::Cell(c) => vec![c.sheet.as_str()],
            Location::Range { sheet, .. } => vec![sheet.as_str()],
            Location::List(cells) => cells.iter().map(|c| c.sheet.as_str()).collect(),
        };
        let mut out: Vec<&str> = Vec::new();
        for n in names {
            if !out.iter().any(|o| o.eq_ignore_ascii_case(n)) {
                out.push(n);
            }
        }
        out
    }

    pub fn on_sheet(&self, sheet: &str) -> bool {
        match self {
            Location::Cell(c) => c.sheet.eq_ignore_ascii_case(sheet),
            Location::Range { sheet: s, .. } => s.eq_ignore_ascii_case(sheet),
            Location::List(cells) => cells.iter().any(|c| c.sheet.eq_ignore_ascii_case(sheet)),
        }
    }

    /// The earliest cell in workbook order; used as the sort anchor.
    pub fn anchor(&self, wb: &Workbook) -> (usize, u32, u32) {
        let key = |c: &CellAddr| (wb.sheet_index(&c.sheet).unwrap_or(usize::MAX), c.pos.row, c.pos.col);
        match self {
            Location::Cell(c) => key(c),
            Location::Range { sheet, rect } => {
                (wb.sheet_index(sheet).unwrap_or(usize::MAX), rect.top, rect.left)
            }
            Location::List(cells) => cells.iter().map(key).min().unwrap_or((usize::MAX, 0, 0)),
        }
    }

    /// Every cell on `sheet` covered by this location.
    pub fn cells_on<'a>(&'a self, sheet: &'a str) -> Box<dyn Iterator<Item = crate::model::Pos> + 'a> {
        match self {
            Location::Cell(c) if c.sheet.eq_ignore_ascii_case(sheet) => Box::new(std::iter::once(c.pos)),
            Location::Range { sheet: s, rect } if s.eq_ignore_ascii_case(sheet) => Box::new(rect.positions()),
            Location::List(cells) => {
                Box::new(cells.iter().filter(move |c| c.sheet.eq_ignore_ascii_case(sheet)).map(|c| c.pos))
            }
            _ => Box::new(std::iter::empty()),
        }
    }
}

impl fmt::Display for Location {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Location::Cell(c) => write!(f, "{c}"),
            Location::Range { sheet, rect } => write!(f, "{}!{rect}", crate::model::quote_sheet(sheet)),
            Location::List(cells) => {
                for (i, c) in cells.iter().enumerate() {
                    if i > 0 {
                        f.write_str("; ")?;
                    }
                    write!(f, "{c}")?;
                }
                Ok(())
            }
        }
    }
}

impl FromStr for Location {
    type Err = AddrError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts = split_list(s);
        if parts.len() > 1 {
            return parts.iter().map(|p| p.parse()).collect::<Result<Vec<CellAddr>, _>>().map(Location::List);
        }
        let (sheet, rest) = split_sheet_prefix(s).ok_or_else(|| AddrError(s.to_string()))?;
        if rest.contains(':') {
            let rect: Rect = rest.parse()?;
            Ok(Location::Range { sheet, rect })
        } else {
            s.parse().map(Location::Cell)
        }
    }
}

/// Splits on `; ` outside quoted sheet names.
fn split_list(s: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut quoted = false;
    let mut start = 0;
    let bytes = s.as_bytes();
    for (i, &b) in bytes.iter().enumerate() {
        match b {
            b'\'' => quoted = !quoted,
            b';' if !quoted && bytes.get(i + 1) == Some(&b' ') => {
                out.push(&s[start..i]);
                start = i + 2;
            }
            _ => {}
        }
    }
    out.push(&s[start..]);
    out
}

impl Serialize for Location {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Location {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}
