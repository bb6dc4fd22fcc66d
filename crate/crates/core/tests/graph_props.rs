mod common;

use cellguard::graph::{aggregate_sheet_graph, build_cell_graph, dependency_depth};
use cellguard::model::CellAddr;
use common::oracle::{
    adjacency, book, expected_edges, found_cycles, oracle_cycles, oracle_depth, small_graph, small_workbook, workbook,
};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn edges_match_description(b in book()) {
        let wb = workbook(&b);
        let g = build_cell_graph(&wb);
        prop_assert_eq!(g.edge_set(), expected_edges(&b));
    }

    #[test]
    fn sheet_weights_count_cross_sheet_edges(b in book()) {
        let wb = workbook(&b);
        let g = build_cell_graph(&wb);
        let sg = aggregate_sheet_graph(&g, &wb);
        let cross = expected_edges(&b).iter().filter(|(p, d)| p.sheet_key() != d.sheet_key()).count();
        prop_assert_eq!(sg.edges.iter().map(|e| e.weight).sum::<usize>(), cross);
        for e in &sg.edges {
            prop_assert!(e.weight > 0 && e.from != e.to);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn cycles_match_exhaustive_search(spec in small_graph()) {
        prop_assert_eq!(found_cycles(&spec), oracle_cycles(&adjacency(&spec)));
    }

    #[test]
    fn depth_is_longest_precedent_path(spec in small_graph()) {
        let wb = small_workbook(&spec);
        let g = build_cell_graph(&wb);
        for v in 0..spec.len() {
            let addr = CellAddr::new("S", v as u32 + 1, 1);
            let depth = dependency_depth(&g, &addr);
            prop_assert_eq!(depth, oracle_depth(&spec, v, &mut Vec::new()), "A{}", v + 1);
            prop_assert_eq!(depth == Some(0), g.precedents(&addr).is_empty());
        }
    }
}
