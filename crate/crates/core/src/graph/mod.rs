//! Cell-level dependency graphs and their sheet-level aggregation.
//!
//! Edges run precedent → dependent. Range references expand to one node per
//! member cell (blank members included) unless the range has more cells than
//! the expansion cap, in which case the whole range becomes one aggregate node.

mod cycles;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use crate::formula::{self, Expr, Locale, RefSpan};
use crate::model::{quote_sheet, CellAddr, ExternalCell, Pos, Rect, Value, Visibility, Workbook};
use crate::par::{self, Execution};
use crate::risk::RiskColor;

pub use cycles::{dependency_depth, find_cycles, DepthTable};

pub const DEFAULT_EXPANSION_CAP: u64 = 10_000;

/// A range too large to expand, kept as a single node.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RangeNode {
    pub book: Option<String>,
    pub sheet: String,
    pub rect: Rect,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Node {
    Cell(CellAddr),
    External(ExternalCell),
    Aggregate(RangeNode),
}

impl Node {
    pub fn as_cell(&self) -> Option<&CellAddr> {
        match self {
            Node::Cell(c) => Some(c),
            _ => None,
        }
    }

    /// The sheet-graph node this belongs to.
    pub fn sheet_key(&self) -> SheetKey {
        match self {
            Node::Cell(c) => SheetKey::Sheet(c.sheet.clone()),
            Node::External(e) => SheetKey::External(e.book.clone()),
            Node::Aggregate(RangeNode { book: Some(b), .. }) => SheetKey::External(b.clone()),
            Node::Aggregate(RangeNode { sheet, .. }) => SheetKey::Sheet(sheet.clone()),
        }
    }
}

impl fmt::Display for Node {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Node::Cell(c) => write!(f, "{c}"),
            Node::External(e) => write!(f, "{e}"),
            Node::Aggregate(RangeNode { book: Some(b), sheet, rect }) => write!(f, "[{b}]{sheet}!{rect}"),
            Node::Aggregate(RangeNode { book: None, sheet, rect }) => write!(f, "{}!{rect}", quote_sheet(sheet)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SheetKey {
    Sheet(String),
    External(String),
}

/// A formula that could not be analysed; the cell is skipped.
#[derive(Debug, Clone, PartialEq)]
pub struct AnalysisWarning {
    pub cell: CellAddr,
    pub message: String,
}

impl fmt::Display for AnalysisWarning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.cell, self.message)
    }
}

/// Parsed formulas, one map per sheet in workbook order.
#[derive(Debug, Clone, Default)]
pub struct ParsedFormulas {
    pub per_sheet: Vec<BTreeMap<Pos, Expr>>,
    pub warnings: Vec<AnalysisWarning>,
}

impl ParsedFormulas {
    pub fn parse(wb: &Workbook, exec: Execution) -> Self {
        let parsed = par::map(exec, &wb.sheets, |sheet| {
            let mut ok = BTreeMap::new();
            let mut warnings = Vec::new();
            for (pos, content) in sheet.cells() {
                let Some(text) = content.formula_text() else { continue };
                match formula::parse(text, Locale::Point) {
                    Ok(ast) => {
                        ok.insert(pos, ast);
                    }
                    Err(e) => warnings.push(AnalysisWarning {
                        cell: CellAddr::at(sheet.name.clone(), pos),
                        message: format!("formula `{text}` skipped: {e}"),
                    }),
                }
            }
            (ok, warnings)
        });
        let mut out = ParsedFormulas::default();
        for (map, warnings) in parsed {
            out.per_sheet.push(map);
            out.warnings.extend(warnings);
        }
        out
    }

    pub fn get(&self, sheet_index: usize, pos: Pos) -> Option<&Expr> {
        self.per_sheet.get(sheet_index)?.get(&pos)
    }
}

/// Nodes a reference reads from, with sheet names canonicalized.
pub fn reference_targets(wb: &Workbook, span: &RefSpan, home_sheet: &str, cap: u64) -> Vec<Node> {
    let sheet = span.sheet.as_deref().unwrap_or(home_sheet);
    let rect = span.rect();
    match &span.external_book {
        Some(book) => {
            if rect.area() > cap {
                return vec![Node::Aggregate(RangeNode { book: Some(book.clone()), sheet: sheet.to_string(), rect })];
            }
            rect.positions()
                .map(|pos| Node::External(ExternalCell { book: book.clone(), sheet: sheet.to_string(), pos }))
                .collect()
        }
        None => {
            let sheet = wb.canonical_sheet_name(sheet).unwrap_or(sheet).to_string();
            if rect.area() > cap {
                return vec![Node::Aggregate(RangeNode { book: None, sheet, rect })];
            }
            rect.positions().map(|pos| Node::Cell(CellAddr::at(sheet.clone(), pos))).collect()
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct DependencyGraph {
    nodes: Vec<Node>,
    index: HashMap<Node, usize>,
    preds: Vec<Vec<usize>>,
    succs: Vec<Vec<usize>>,
    edge_count: usize,
    pub warnings: Vec<AnalysisWarning>,
}

impl DependencyGraph {
    fn intern(&mut self, node: Node) -> usize {
        if let Some(&i) = self.index.get(&node) {
            return i;
        }
        let i = self.nodes.len();
        self.index.insert(node.clone(), i);
        self.nodes.push(node);
        self.preds.push(Vec::new());
        self.succs.push(Vec::new());
        i
    }

    fn finish(&mut self) {
        for list in self.preds.iter_mut().chain(self.succs.iter_mut()) {
            list.sort_unstable();
            list.dedup();
        }
        self.edge_count = self.succs.iter().map(Vec::len).sum();
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edge_count
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn node(&self, i: usize) -> &Node {
        &self.nodes[i]
    }

    pub fn index_of(&self, node: &Node) -> Option<usize> {
        self.index.get(node).copied()
    }

    pub fn cell_index(&self, cell: &CellAddr) -> Option<usize> {
        self.index.get(&Node::Cell(cell.clone())).copied()
    }

    pub(crate) fn preds_of(&self, i: usize) -> &[usize] {
        &self.preds[i]
    }

    pub(crate) fn succs_of(&self, i: usize) -> &[usize] {
        &self.succs[i]
    }

    pub fn precedents(&self, cell: &CellAddr) -> Vec<&Node> {
        self.cell_index(cell).map_or_else(Vec::new, |i| self.preds[i].iter().map(|&p| &self.nodes[p]).collect())
    }

    pub fn dependents(&self, node: &Node) -> Vec<&Node> {
        self.index_of(node).map_or_else(Vec::new, |i| self.succs[i].iter().map(|&s| &self.nodes[s]).collect())
    }

    pub fn has_dependents(&self, node: &Node) -> bool {
        self.index_of(node).is_some_and(|i| !self.succs[i].is_empty())
    }

    /// Every edge as (precedent, dependent), in node-index order.
    pub fn edges(&self) -> impl Iterator<Item = (&Node, &Node)> + '_ {
        self.succs.iter().enumerate().flat_map(move |(p, ss)| ss.iter().map(move |&d| (&self.nodes[p], &self.nodes[d])))
    }

    pub fn edge_set(&self) -> BTreeSet<(Node, Node)> {
        self.edges().map(|(a, b)| (a.clone(), b.clone())).collect()
    }
}

pub fn build_cell_graph(wb: &Workbook) -> DependencyGraph {
    let parsed = ParsedFormulas::parse(wb, Execution::default());
    build_cell_graph_with(wb, &parsed, DEFAULT_EXPANSION_CAP, Execution::default())
}

pub fn build_cell_graph_with(wb: &Workbook, parsed: &ParsedFormulas, cap: u64, exec: Execution) -> DependencyGraph {
    let indices: Vec<usize> = (0..wb.sheets.len()).collect();
    let per_sheet = par::map(exec, &indices, |&si| {
        let sheet = &wb.sheets[si];
        parsed.per_sheet[si]
            .iter()
            .map(|(&pos, ast)| {
                let targets: Vec<Node> = formula::extract_refs(ast, &sheet.name)
                    .iter()
                    .flat_map(|span| reference_targets(wb, span, &sheet.name, cap))
                    .collect();
                (CellAddr::at(sheet.name.clone(), pos), targets)
            })
            .collect::<Vec<_>>()
    });
    let mut g = DependencyGraph { warnings: parsed.warnings.clone(), ..DependencyGraph::default() };
    for (cell, targets) in per_sheet.into_iter().flatten() {
        let d = g.intern(Node::Cell(cell));
        for t in targets {
            let p = g.intern(t);
            g.succs[p].push(d);
            g.preds[d].push(p);
        }
    }
    g.finish();
    g
}

#[derive(Debug, Clone, PartialEq)]
pub struct SheetNode {
    pub name: String,
    pub visibility: Visibility,
    pub is_external: bool,
    pub risk_color: Option<RiskColor>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SheetEdge {
    pub from: usize,
    pub to: usize,
    pub weight: usize,
}

/// Sheets (workbook order) then external sources (by name), with weighted
/// cross-sheet edges sorted by endpoint indices.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SheetGraph {
    pub nodes: Vec<SheetNode>,
    pub edges: Vec<SheetEdge>,
}

impl SheetGraph {
    pub fn node_index(&self, name: &str, external: bool) -> Option<usize> {
        self.nodes.iter().position(|n| n.name == name && n.is_external == external)
    }

    pub fn weight(&self, from: &str, to: &str) -> usize {
        self.edges
            .iter()
            .find(|e| self.nodes[e.from].name == from && self.nodes[e.to].name == to)
            .map_or(0, |e| e.weight)
    }
}

pub fn aggregate_sheet_graph(g: &DependencyGraph, wb: &Workbook) -> SheetGraph {
    let mut weights: BTreeMap<(SheetKey, SheetKey), usize> = BTreeMap::new();
    let mut keys: BTreeSet<SheetKey> = BTreeSet::new();
    for (p, d) in g.edges() {
        let (a, b) = (p.sheet_key(), d.sheet_key());
        keys.insert(a.clone());
        if a != b {
            *weights.entry((a, b)).or_default() += 1;
        }
    }
    for s in &wb.external_sources {
        keys.insert(SheetKey::External(s.name.clone()));
    }

    let mut out = SheetGraph::default();
    let mut position: HashMap<SheetKey, usize> = HashMap::new();
    for sheet in &wb.sheets {
        position.insert(SheetKey::Sheet(sheet.name.clone()), out.nodes.len());
        out.nodes.push(SheetNode {
            name: sheet.name.clone(),
            visibility: sheet.visibility,
            is_external: false,
            risk_color: None,
        });
    }
    // Sheets referenced but absent from the workbook, then external books.
    for key in keys.iter().filter(|k| matches!(k, SheetKey::Sheet(_))).chain(keys.iter().filter(|k| matches!(k, SheetKey::External(_)))) {
        if position.contains_key(key) {
            continue;
        }
        let (name, is_external) = match key {
            SheetKey::Sheet(s) => (s.clone(), false),
            SheetKey::External(b) => (b.clone(), true),
        };
        position.insert(key.clone(), out.nodes.len());
        out.nodes.push(SheetNode { name, visibility: Visibility::Visible, is_external, risk_color: None });
    }
    out.edges = weights
        .into_iter()
        .map(|((a, b), weight)| SheetEdge { from: position[&a], to: position[&b], weight })
        .collect();
    out.edges.sort_by_key(|e| (e.from, e.to));
    out
}

/// (formula cell, empty target) for every reference to a blank cell or to an
/// external cell without a known value. Aggregate nodes are not inspected.
pub fn empty_references(wb: &Workbook, g: &DependencyGraph) -> Vec<(CellAddr, Node)> {
    let mut out: Vec<(CellAddr, Node)> = g
        .edges()
        .filter_map(|(p, d)| {
            let empty = match p {
                Node::Cell(c) => wb.content(c).is_blank(),
                Node::External(e) => wb.external_value(e).is_none_or(Value::is_blank),
                Node::Aggregate(_) => false,
            };
            empty.then(|| Some((d.as_cell()?.clone(), p.clone()))).flatten()
        })
        .collect();
    out.sort_by(|a, b| {
        let ka = (wb.sheet_index(&a.0.sheet), a.0.pos);
        let kb = (wb.sheet_index(&b.0.sheet), b.0.pos);
        ka.cmp(&kb).then_with(|| a.1.cmp(&b.1))
    });
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Content, Sheet};

    fn f(text: &str) -> Content {
        Content::formula(text, None)
    }

    fn cell(s: &str) -> Node {
        Node::Cell(s.parse().unwrap())
    }

    #[test]
    fn single_edge() {
        let wb = Workbook::new("t", vec![Sheet::new("S").with("A1", Content::Number(1.0)).with("A2", f("=A1"))]).unwrap();
        let g = build_cell_graph(&wb);
        assert_eq!(g.edge_set(), BTreeSet::from([(cell("S!A1"), cell("S!A2"))]));
    }

    #[test]
    fn cross_sheet_edges_and_weights() {
        let london = (4..=10).fold(Sheet::new("London"), |s, r| s.with(&format!("B{r}"), Content::Number(r as f64)));
        let wb = Workbook::new(
            "t",
            vec![
                Sheet::new("Sao Paolo").with(
                    "C12",
                    f("=London!B4+London!B5+London!B6+London!B7+London!B8+London!B9+London!B10"),
                ),
                london,
            ],
        )
        .unwrap();
        let g = build_cell_graph(&wb);
        assert!(g.edge_set().contains(&(cell("London!B4"), cell("'Sao Paolo'!C12"))));
        assert_eq!(g.edge_count(), 7);
        let sg = aggregate_sheet_graph(&g, &wb);
        assert_eq!(sg.edges.len(), 1);
        assert_eq!(sg.weight("London", "Sao Paolo"), 7);
    }

    #[test]
    fn external_node_and_weight() {
        let wb = Workbook::new(
            "t",
            vec![Sheet::new("S").with("A1", f("='[Budget.xlsx]Q1'!A1")).with("A2", f("='[Budget.xlsx]Q1'!A1*2"))],
        )
        .unwrap();
        let sg = aggregate_sheet_graph(&build_cell_graph(&wb), &wb);
        let ext = sg.node_index("Budget.xlsx", true).unwrap();
        assert_eq!(sg.edges, vec![SheetEdge { from: ext, to: 0, weight: 2 }]);
    }

    #[test]
    fn no_cross_sheet_refs() {
        let wb = Workbook::new("t", vec![Sheet::new("S").with("A2", f("=A1")), Sheet::new("T")]).unwrap();
        assert!(aggregate_sheet_graph(&build_cell_graph(&wb), &wb).edges.is_empty());
    }

    #[test]
    fn range_expansion_and_cap() {
        let wb = Workbook::new("t", vec![Sheet::new("S").with("C1", f("=SUM(A1:B3)"))]).unwrap();
        let g = build_cell_graph(&wb);
        assert_eq!(g.edge_count(), 6);
        let parsed = ParsedFormulas::parse(&wb, Execution::Sequential);
        let g = build_cell_graph_with(&wb, &parsed, 5, Execution::Sequential);
        assert_eq!(g.edge_count(), 1);
        assert!(matches!(g.edges().next().unwrap().0, Node::Aggregate(_)));
    }

    #[test]
    fn empty_targets() {
        let wb = Workbook::new(
            "t",
            vec![
                Sheet::new("Mexico City").with("J3", Content::Number(510.0)).with("J4", f("=J3+'New York'!G34")),
                Sheet::new("New York"),
            ],
        )
        .unwrap();
        let g = build_cell_graph(&wb);
        assert_eq!(empty_references(&wb, &g), vec![("'Mexico City'!J4".parse().unwrap(), cell("'New York'!G34"))]);

        let wb = Workbook::new(
            "t",
            vec![Sheet::new("S")
                .with("A1", Content::Number(1.0))
                .with("A3", Content::Number(1.0))
                .with("A5", Content::Number(1.0))
                .with("B1", f("=SUM(A1:A5)"))],
        )
        .unwrap();
        assert_eq!(empty_references(&wb, &build_cell_graph(&wb)).len(), 2);
    }

    #[test]
    fn unparseable_formula_is_a_warning() {
        let wb = Workbook::new("t", vec![Sheet::new("S").with("A1", f("=1+")).with("A2", f("=A1"))]).unwrap();
        let g = build_cell_graph(&wb);
        assert_eq!(g.warnings.len(), 1);
        assert_eq!(g.edge_count(), 1);
    }
}
