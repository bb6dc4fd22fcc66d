use crate::model::CellAddr;

use super::{DependencyGraph, Node};

/// Members of every strongly connected component with at least two nodes,
/// plus nodes with a literal self-reference. Members are sorted; cycles are
/// ordered by their smallest member.
pub fn find_cycles(g: &DependencyGraph) -> Vec<Vec<CellAddr>> {
    let mut cycles: Vec<Vec<CellAddr>> = tarjan(g)
        .into_iter()
        .filter(|scc| scc.len() > 1 || g.succs_of(scc[0]).contains(&scc[0]))
        .map(|scc| {
            let mut members: Vec<CellAddr> = scc.iter().filter_map(|&i| g.node(i).as_cell().cloned()).collect();
            members.sort();
            members
        })
        .collect();
    cycles.sort();
    cycles
}

/// Iterative Tarjan; returns components in completion order.
fn tarjan(g: &DependencyGraph) -> Vec<Vec<usize>> {
    const UNSEEN: usize = usize::MAX;
    let n = g.node_count();
    let mut index = vec![UNSEEN; n];
    let mut low = vec![0; n];
    let mut on_stack = vec![false; n];
    let mut stack = Vec::new();
    let mut out = Vec::new();
    let mut next = 0;
    // (node, position of the next successor to visit)
    let mut call: Vec<(usize, usize)> = Vec::new();

    for root in 0..n {
        if index[root] != UNSEEN {
            continue;
        }
        call.push((root, 0));
        index[root] = next;
        low[root] = next;
        next += 1;
        stack.push(root);
        on_stack[root] = true;
        while let Some(top) = call.last_mut() {
            let (v, k) = *top;
            let succs = g.succs_of(v);
            if k < succs.len() {
                let w = succs[k];
                top.1 += 1;
                if index[w] == UNSEEN {
                    index[w] = next;
                    low[w] = next;
                    next += 1;
                    stack.push(w);
                    on_stack[w] = true;
                    call.push((w, 0));
                } else if on_stack[w] {
                    low[v] = low[v].min(index[w]);
                }
                continue;
            }
            call.pop();
            if let Some(&(parent, _)) = call.last() {
                low[parent] = low[parent].min(low[v]);
            }
            if low[v] == index[v] {
                let mut scc = Vec::new();
                loop {
                    let w = stack.pop().expect("tarjan stack");
                    on_stack[w] = false;
                    scc.push(w);
                    if w == v {
                        break;
                    }
                }
                out.push(scc);
            }
        }
    }
    out
}

/// Longest precedent path ending at each node. `None` marks nodes inside a
/// cycle or downstream of one.
#[derive(Debug, Clone)]
pub struct DepthTable {
    depth: Vec<Option<usize>>,
    via: Vec<Option<usize>>,
}

impl DepthTable {
    pub fn new(g: &DependencyGraph) -> Self {
        let n = g.node_count();
        let mut indegree: Vec<usize> = (0..n).map(|i| g.preds_of(i).len()).collect();
        let mut depth = vec![None; n];
        let mut via = vec![None; n];
        let mut ready: Vec<usize> = (0..n).filter(|&i| indegree[i] == 0).collect();
        for &i in &ready {
            depth[i] = Some(0);
        }
        while let Some(v) = ready.pop() {
            for &w in g.succs_of(v) {
                indegree[w] -= 1;
                if indegree[w] == 0 {
                    let best = g
                        .preds_of(w)
                        .iter()
                        .map(|&p| (depth[p].expect("all predecessors settled"), p))
                        .max_by(|a, b| a.0.cmp(&b.0).then_with(|| g.node(b.1).cmp(g.node(a.1))));
                    if let Some((d, p)) = best {
                        depth[w] = Some(d + 1);
                        via[w] = Some(p);
                    }
                    ready.push(w);
                }
            }
        }
        DepthTable { depth, via }
    }

    pub fn depth(&self, i: usize) -> Option<usize> {
        self.depth[i]
    }

    /// Start of the longest path ending at node `i` (ties go to the smallest node).
    pub fn source(&self, i: usize) -> usize {
        let mut at = i;
        while let Some(p) = self.via[at] {
            at = p;
        }
        at
    }

    pub fn path(&self, i: usize) -> Vec<usize> {
        let mut out = vec![i];
        let mut at = i;
        while let Some(p) = self.via[at] {
            out.push(p);
            at = p;
        }
        out.reverse();
        out
    }
}

/// Depth of a cell: 0 for inputs and cells outside the graph, `None` inside
/// or downstream of a cycle.
pub fn dependency_depth(g: &DependencyGraph, cell: &CellAddr) -> Option<usize> {
    match g.index_of(&Node::Cell(cell.clone())) {
        Some(i) => DepthTable::new(g).depth(i),
        None => Some(0),
    }
}

#[cfg(test)]
mod tests {
    use super::super::build_cell_graph;
    use super::*;
    use crate::model::{Content, Sheet, Workbook};

    fn f(text: &str) -> Content {
        Content::formula(text, None)
    }

    fn wb(sheets: Vec<Sheet>) -> Workbook {
        Workbook::new("t", sheets).unwrap()
    }

    #[test]
    fn two_cycle() {
        let g = build_cell_graph(&wb(vec![Sheet::new("S").with("A1", f("=A2")).with("A2", f("=A1"))]));
        let expected: Vec<CellAddr> = vec!["S!A1".parse().unwrap(), "S!A2".parse().unwrap()];
        assert_eq!(find_cycles(&g), vec![expected]);
    }

    #[test]
    fn acyclic_chain() {
        let sheet = (2..=10).fold(Sheet::new("S").with("A1", Content::Number(1.0)), |s, r| {
            s.with(&format!("A{r}"), f(&format!("=A{}+1", r - 1)))
        });
        let g = build_cell_graph(&wb(vec![sheet]));
        assert!(find_cycles(&g).is_empty());
        assert_eq!(dependency_depth(&g, &"S!A10".parse().unwrap()), Some(9));
        assert_eq!(dependency_depth(&g, &"S!A1".parse().unwrap()), Some(0));
    }

    #[test]
    fn self_loop_and_downstream_depth() {
        let g = build_cell_graph(&wb(vec![Sheet::new("S").with("A1", f("=A1+1")).with("A2", f("=A1"))]));
        assert_eq!(find_cycles(&g).len(), 1);
        assert_eq!(dependency_depth(&g, &"S!A1".parse().unwrap()), None);
        assert_eq!(dependency_depth(&g, &"S!A2".parse().unwrap()), None);
    }

    #[test]
    fn cross_sheet_three_cycle() {
        let g = build_cell_graph(&wb(vec![
            Sheet::new("Mumbai").with("G5", f("='New York'!T45")),
            Sheet::new("Mexico City").with("H2", f("=Mumbai!G5")),
            Sheet::new("New York").with("T45", f("='Mexico City'!H2")),
        ]));
        let cycles = find_cycles(&g);
        assert_eq!(cycles.len(), 1);
        assert_eq!(cycles[0].len(), 3);
        assert_eq!(cycles[0][0].sheet, "Mexico City");
    }

    #[test]
    fn path_reconstruction() {
        let g = build_cell_graph(&wb(vec![Sheet::new("S")
            .with("A1", Content::Number(1.0))
            .with("A2", f("=A1"))
            .with("A3", f("=A2+B1"))]));
        let t = DepthTable::new(&g);
        let sink = g.cell_index(&"S!A3".parse().unwrap()).unwrap();
        assert_eq!(t.depth(sink), Some(2));
        assert_eq!(g.node(t.source(sink)), &Node::Cell("S!A1".parse().unwrap()));
        assert_eq!(t.path(sink).len(), 3);
    }
}
