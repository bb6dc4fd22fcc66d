//! Random generators and brute-force oracles shared by the property suites
//! and the acceptance target.

use std::collections::{BTreeMap, BTreeSet};

use cellguard::formula::{BinaryOp, CellRef, Expr, RefSpan, UnaryOp};
use cellguard::graph::{build_cell_graph, find_cycles, Node};
use cellguard::model::{col_to_letters, CellAddr, Content, ErrorCode, ExternalCell, Pos, Rect, Sheet, Value, Workbook};
use cellguard::structure::find_consistent_ranges;
use proptest::prelude::*;

pub fn cell_ref() -> impl Strategy<Value = CellRef> {
    (1u32..300, 1u32..60, any::<bool>(), any::<bool>())
        .prop_map(|(row, col, row_abs, col_abs)| CellRef { col, row, col_abs, row_abs })
}

pub fn qualifier() -> impl Strategy<Value = (Option<String>, Option<String>)> {
    prop_oneof![
        4 => Just((None, None)),
        1 => Just((Some("Data".to_string()), None)),
        1 => Just((Some("My Sheet".to_string()), None)),
        1 => Just((Some("O'Brien".to_string()), None)),
        1 => Just((Some("Rates".to_string()), Some("Book.xlsx".to_string()))),
    ]
}

pub fn span(range: bool) -> impl Strategy<Value = RefSpan> {
    (cell_ref(), cell_ref(), qualifier()).prop_map(move |(a, b, (sheet, book))| {
        let mut s = if range { RefSpan::range(a, b) } else { RefSpan::cell(a) };
        s.sheet = sheet;
        s.external_book = book;
        s
    })
}

pub fn leaf() -> impl Strategy<Value = Expr> {
    prop_oneof![
        (0u32..100_000).prop_map(|n| Expr::number(f64::from(n))),
        (0u32..4000).prop_map(|n| Expr::number(f64::from(n) / 8.0)),
        "[a-zA-Z \"]{0,6}".prop_map(|s| Expr::Literal(Value::Text(s))),
        any::<bool>().prop_map(|b| Expr::Literal(Value::Bool(b))),
        prop::sample::select(vec![ErrorCode::Div0, ErrorCode::Na, ErrorCode::Ref, ErrorCode::Value])
            .prop_map(|e| Expr::Literal(Value::Error(e))),
        span(false).prop_map(Expr::Ref),
        span(true).prop_map(Expr::Range),
    ]
}

pub const BINARY: [BinaryOp; 12] = [
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

pub fn ast() -> impl Strategy<Value = Expr> {
    leaf().prop_recursive(5, 40, 4, |inner| {
        prop_oneof![
            (prop::sample::select(BINARY.to_vec()), inner.clone(), inner.clone())
                .prop_map(|(op, a, b)| Expr::binary(op, a, b)),
            (prop::sample::select(vec![UnaryOp::Minus, UnaryOp::Plus, UnaryOp::Percent]), inner.clone())
                .prop_map(|(op, e)| Expr::unary(op, e)),
            (
                prop::sample::select(vec!["SUM", "IF", "MAX", "ROUND", "AVERAGE", "NOW"]),
                prop::collection::vec(prop_oneof![4 => inner.clone(), 1 => Just(Expr::Literal(Value::Blank))], 0..4),
            )
                .prop_map(|(name, mut args)| {
                    // An omitted argument only exists between separators.
                    if args.len() == 1 && args[0] == Expr::Literal(Value::Blank) {
                        args.clear();
                    }
                    Expr::function(name, args)
                }),
        ]
    })
}

pub const NAMES: [&str; 5] = ["Alpha", "Beta", "Gamma", "Delta", "Omega"];

/// One reference in a generated formula.
#[derive(Debug, Clone)]
pub enum RefDesc {
    /// Sheet index (None = home), lower-case spelling, top-left, size.
    Local { sheet: Option<usize>, lower: bool, at: (u32, u32), size: (u32, u32) },
    External { at: (u32, u32) },
}

#[derive(Debug, Clone)]
pub enum CellDesc {
    Number(u32),
    Formula(Vec<RefDesc>),
}

pub fn ref_desc(sheets: usize) -> impl Strategy<Value = RefDesc> {
    prop_oneof![
        6 => (prop::option::of(0..sheets), any::<bool>(), (1u32..=8, 1u32..=6), (1u32..=3, 1u32..=2))
            .prop_map(|(sheet, lower, at, size)| RefDesc::Local { sheet, lower, at, size }),
        1 => (1u32..=5, 1u32..=3).prop_map(|at| RefDesc::External { at }),
    ]
}

pub fn cell_desc(sheets: usize) -> impl Strategy<Value = CellDesc> {
    prop_oneof![
        1 => (0u32..100).prop_map(CellDesc::Number),
        2 => prop::collection::vec(ref_desc(sheets), 1..4).prop_map(CellDesc::Formula),
    ]
}

pub type Book = Vec<BTreeMap<(u32, u32), CellDesc>>;

pub fn book() -> impl Strategy<Value = Book> {
    (1usize..=5).prop_flat_map(|n| {
        prop::collection::vec(prop::collection::btree_map((1u32..=8, 1u32..=6), cell_desc(n), 0..=8), n)
    })
}

pub fn a1(r: u32, c: u32) -> String {
    format!("{}{r}", col_to_letters(c))
}

pub fn ref_text(d: &RefDesc) -> String {
    match d {
        RefDesc::Local { sheet, lower, at, size } => {
            let prefix = match sheet {
                None => String::new(),
                Some(i) if *lower => format!("{}!", NAMES[*i].to_lowercase()),
                Some(i) => format!("{}!", NAMES[*i]),
            };
            let (r2, c2) = (at.0 + size.0 - 1, at.1 + size.1 - 1);
            if size == &(1, 1) {
                format!("{prefix}{}", a1(at.0, at.1))
            } else {
                format!("{prefix}{}:{}", a1(at.0, at.1), a1(r2, c2))
            }
        }
        RefDesc::External { at } => format!("[Ext.xlsx]X!{}", a1(at.0, at.1)),
    }
}

pub fn workbook(b: &Book) -> Workbook {
    let sheets = b
        .iter()
        .enumerate()
        .map(|(i, cells)| {
            let mut s = Sheet::new(NAMES[i]);
            for (&(r, c), d) in cells {
                let content = match d {
                    CellDesc::Number(n) => Content::Number(f64::from(*n)),
                    CellDesc::Formula(refs) => {
                        let parts: Vec<String> = refs.iter().map(ref_text).collect();
                        Content::formula(format!("=SUM({})", parts.join(",")), None)
                    }
                };
                s.set(Pos::new(r, c), content).unwrap();
            }
            s
        })
        .collect();
    Workbook::new("g", sheets).unwrap()
}

/// Edges read straight off the description.
pub fn expected_edges(b: &Book) -> BTreeSet<(Node, Node)> {
    let mut out = BTreeSet::new();
    for (i, cells) in b.iter().enumerate() {
        for (&(r, c), d) in cells {
            let CellDesc::Formula(refs) = d else { continue };
            let host = Node::Cell(CellAddr::new(NAMES[i], r, c));
            for rd in refs {
                match rd {
                    RefDesc::Local { sheet, at, size, .. } => {
                        let name = NAMES[sheet.unwrap_or(i)];
                        for dr in 0..size.0 {
                            for dc in 0..size.1 {
                                let p = Node::Cell(CellAddr::new(name, at.0 + dr, at.1 + dc));
                                out.insert((p, host.clone()));
                            }
                        }
                    }
                    RefDesc::External { at } => {
                        let e = ExternalCell { book: "Ext.xlsx".into(), sheet: "X".into(), pos: Pos::new(at.0, at.1) };
                        out.insert((Node::External(e), host.clone()));
                    }
                }
            }
        }
    }
    out
}

/// Up to 12 cells on one sheet, each referencing a subset of the others.
pub fn small_graph() -> impl Strategy<Value = Vec<Option<Vec<usize>>>> {
    (2usize..=12).prop_flat_map(|n| {
        prop::collection::vec(prop::option::weighted(0.75, prop::collection::vec(0..n, 0..3)), n)
    })
}

pub fn small_workbook(spec: &[Option<Vec<usize>>]) -> Workbook {
    let mut s = Sheet::new("S");
    for (i, refs) in spec.iter().enumerate() {
        let content = match refs {
            Some(r) if !r.is_empty() => {
                let parts: Vec<String> = r.iter().map(|j| format!("A{}", j + 1)).collect();
                Content::formula(format!("={}", parts.join("+")), None)
            }
            _ => Content::Number(i as f64),
        };
        s.set(Pos::new(i as u32 + 1, 1), content).unwrap();
    }
    Workbook::new("c", vec![s]).unwrap()
}

/// Adjacency from precedent to dependent.
pub fn adjacency(spec: &[Option<Vec<usize>>]) -> Vec<BTreeSet<usize>> {
    let mut adj = vec![BTreeSet::new(); spec.len()];
    for (i, refs) in spec.iter().enumerate() {
        for &j in refs.iter().flatten() {
            adj[j].insert(i);
        }
    }
    adj
}

/// Every simple cycle, each found from its smallest member.
pub fn simple_cycles(adj: &[BTreeSet<usize>]) -> Vec<Vec<usize>> {
    fn walk(start: usize, at: usize, adj: &[BTreeSet<usize>], path: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        for &next in &adj[at] {
            if next == start {
                out.push(path.clone());
            } else if next > start && !path.contains(&next) {
                path.push(next);
                walk(start, next, adj, path, out);
                path.pop();
            }
        }
    }
    let mut out = Vec::new();
    for s in 0..adj.len() {
        walk(s, s, adj, &mut vec![s], &mut out);
    }
    out
}

pub fn find(parent: &mut [usize], x: usize) -> usize {
    if parent[x] != x {
        parent[x] = find(parent, parent[x]);
    }
    parent[x]
}

pub fn oracle_cycles(adj: &[BTreeSet<usize>]) -> BTreeSet<BTreeSet<usize>> {
    let cycles = simple_cycles(adj);
    let mut parent: Vec<usize> = (0..adj.len()).collect();
    let mut on_cycle = BTreeSet::new();
    for c in &cycles {
        on_cycle.extend(c.iter().copied());
        for w in c.windows(2) {
            let (a, b) = (find(&mut parent, w[0]), find(&mut parent, w[1]));
            parent[a] = b;
        }
    }
    let mut groups: BTreeMap<usize, BTreeSet<usize>> = BTreeMap::new();
    for v in on_cycle {
        let root = find(&mut parent, v);
        groups.entry(root).or_default().insert(v);
    }
    groups.into_values().collect()
}

/// Longest incoming path length, or None when a cycle reaches the node.
pub fn oracle_depth(spec: &[Option<Vec<usize>>], v: usize, seen: &mut Vec<usize>) -> Option<usize> {
    if seen.contains(&v) {
        return None;
    }
    let preds: BTreeSet<usize> = spec[v].iter().flatten().copied().collect();
    seen.push(v);
    let mut best = Some(0);
    for p in preds {
        best = match (best, oracle_depth(spec, p, seen)) {
            (Some(b), Some(d)) => Some(b.max(d + 1)),
            _ => None,
        };
    }
    seen.pop();
    best
}

pub const N: u32 = 12;

/// Cell kinds on a generated grid: blank, a number, or one of three formula templates.
pub type Grid = Vec<Vec<u8>>;

pub fn grid() -> impl Strategy<Value = Grid> {
    let cell = prop_oneof![2 => Just(0u8), 1 => Just(1u8), 3 => Just(2u8), 2 => Just(3u8), 1 => Just(4u8)];
    (2u32..=N, 2u32..=N).prop_flat_map(move |(h, w)| {
        prop::collection::vec(prop::collection::vec(cell.clone(), w as usize), h as usize)
    })
}

/// Template `k` refers to the cell 20 rows down and 20 columns right, scaled by `k`.
pub fn template(k: u8, p: Pos) -> String {
    match k {
        2 => format!("={}{}*2", col_to_letters(p.col + 20), p.row + 20),
        3 => format!("={}{}+$A$1", col_to_letters(p.col + 20), p.row + 20),
        _ => format!("=SUM({}{}:{}{})", col_to_letters(p.col + 1), p.row + 20, col_to_letters(p.col + 3), p.row + 20),
    }
}

pub fn sheet(g: &Grid) -> Sheet {
    let mut s = Sheet::new("S");
    for (r, row) in g.iter().enumerate() {
        for (c, &k) in row.iter().enumerate() {
            let p = Pos::new(r as u32 + 1, c as u32 + 1);
            match k {
                0 => {}
                1 => s.set(p, Content::Number((r * 31 + c) as f64)).unwrap(),
                _ => s.set(p, Content::formula(template(k, p), None)).unwrap(),
            }
        }
    }
    s
}

pub fn kind_at(g: &Grid, p: Pos) -> Option<u8> {
    g.get(p.row as usize - 1)?.get(p.col as usize - 1).copied()
}

/// Maximal all-same-template rectangles of area at least two, by enumeration.
pub fn oracle_ranges(g: &Grid) -> BTreeSet<(u8, Rect)> {
    let h = g.len() as u32;
    let w = g[0].len() as u32;
    let uniform = |r: &Rect, k: u8| r.positions().all(|p| kind_at(g, p) == Some(k));
    let mut all = Vec::new();
    for k in 2..=4u8 {
        for top in 1..=h {
            for left in 1..=w {
                for bottom in top..=h {
                    for right in left..=w {
                        let r = Rect { top, left, bottom, right };
                        if uniform(&r, k) {
                            all.push((k, r));
                        }
                    }
                }
            }
        }
    }
    let inside = |a: &Rect, b: &Rect| a != b && b.top <= a.top && b.left <= a.left && a.bottom <= b.bottom && a.right <= b.right;
    all.iter()
        .filter(|(k, r)| r.area() >= 2 && !all.iter().any(|(k2, r2)| k2 == k && inside(r, r2)))
        .copied()
        .collect()
}

pub fn tagged(g: &Grid, s: &Sheet) -> BTreeSet<(u8, Rect)> {
    find_consistent_ranges(s)
        .into_iter()
        .map(|cr| (kind_at(g, cr.rect.top_left()).unwrap(), cr.rect))
        .collect()
}


/// Cycle groups reported by the implementation, as row indices.
pub fn found_cycles(spec: &[Option<Vec<usize>>]) -> BTreeSet<BTreeSet<usize>> {
    let g = build_cell_graph(&small_workbook(spec));
    find_cycles(&g).into_iter().map(|c| c.iter().map(|a| a.row() as usize - 1).collect()).collect()
}
