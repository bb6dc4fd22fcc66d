mod common;

use cellguard::graph::{aggregate_sheet_graph, build_cell_graph};
use cellguard::model::{CellAddr, Content, ErrorCode, Pos, Rect, Sheet, Value, Visibility, Workbook};
use cellguard::par::Execution;
use cellguard::report::{
    emit_findings, emit_heatmap, emit_workbook_graph, parse_findings_json, risk_sheet_graph, sheet_classes, value_text,
    DotOptions, FindingsFormat, ReportBundle, FINDING_COLUMNS,
};
use cellguard::risk::{run_all, AnalyzerConfig, DetectorKind, ErrorCategory, Location, RiskDegree, RiskFinding};
use cellguard::structure::find_consistent_ranges;
use proptest::prelude::*;

fn addr() -> impl Strategy<Value = CellAddr> {
    (prop::sample::select(vec!["Main", "Sao Paolo", "O'Brien", "x1"]), 1u32..500, 1u32..60)
        .prop_map(|(s, r, c)| CellAddr::new(s, r, c))
}

fn location() -> impl Strategy<Value = Location> {
    prop_oneof![
        addr().prop_map(Location::Cell),
        (addr(), 1u32..10, 1u32..10).prop_map(|(a, h, w)| {
            let rect = Rect::new(a.pos, Pos::new(a.row() + h, a.col() + w));
            Location::range(a.sheet, rect)
        }),
        prop::collection::btree_set(addr(), 2..5).prop_map(|s| Location::list(s.into_iter().collect())),
    ]
}

fn finding() -> impl Strategy<Value = RiskFinding> {
    (
        prop::sample::select(DetectorKind::ALL.to_vec()),
        prop::sample::select(vec![RiskDegree::Low, RiskDegree::Medium, RiskDegree::High]),
        location(),
        "[ -~]{0,20}",
        prop::option::of(prop_oneof![
            (-1e9f64..1e9).prop_map(Value::Number),
            "[a-z,\"]{0,6}".prop_map(Value::Text),
            any::<bool>().prop_map(Value::Bool),
            Just(Value::Error(ErrorCode::Div0)),
        ]),
        "[ -~]{0,20}",
        prop::sample::select(vec![
            ErrorCategory::Reference,
            ErrorCategory::Interface,
            ErrorCategory::Input,
            ErrorCategory::ExcelLogic,
            ErrorCategory::UserRelated,
            ErrorCategory::ControlEnvironment,
        ]),
    )
        .prop_map(|(kind, degree, location, details, current_value, suggestion, category)| RiskFinding {
            kind,
            degree,
            location,
            details,
            current_value,
            suggestion,
            category,
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn json_round_trip(findings in prop::collection::vec(finding(), 0..6)) {
        let text = emit_findings(&findings, FindingsFormat::Json);
        prop_assert_eq!(parse_findings_json(&text).unwrap(), findings);
    }

    #[test]
    fn csv_has_one_record_per_finding(findings in prop::collection::vec(finding(), 0..6)) {
        let text = emit_findings(&findings, FindingsFormat::Csv);
        let mut reader = csv::Reader::from_reader(text.as_bytes());
        let header: Vec<String> = reader.headers().unwrap().iter().map(String::from).collect();
        prop_assert_eq!(header, FINDING_COLUMNS.to_vec());
        let rows: Vec<csv::StringRecord> = reader.records().map(Result::unwrap).collect();
        prop_assert_eq!(rows.len(), findings.len());
        for (row, f) in rows.iter().zip(&findings) {
            prop_assert_eq!(&row[0], f.kind.label());
            prop_assert_eq!(&row[1], f.degree.label());
            prop_assert_eq!(row[2].to_string(), f.location.to_string());
            prop_assert_eq!(&row[3], f.details.as_str());
            prop_assert_eq!(row[4].to_string(), f.current_value.as_ref().map(value_text).unwrap_or_default());
            prop_assert_eq!(&row[5], f.suggestion.as_str());
        }
    }

    #[test]
    fn html_escapes_everything(findings in prop::collection::vec(finding(), 0..6)) {
        let html = emit_findings(&findings, FindingsFormat::Html);
        let escape = |t: &str| t.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;").replace('\'', "&#39;");
        for f in &findings {
            prop_assert!(html.contains(&format!("<td>{}</td>", escape(&f.details))), "{}", f.details);
        }
        prop_assert_eq!(html.matches("<tr").count(), findings.len() + 1);
        prop_assert_eq!(html.matches("<td>").count(), findings.len() * FINDING_COLUMNS.len());
    }

    #[test]
    fn dot_is_well_formed(
        refs in prop::collection::vec((0usize..4, 0usize..4, 1u32..30), 0..12),
        legacy in any::<bool>(),
    ) {
        let names = ["Main", "Sao \"Q\" Paolo", "Back\\slash", "Other"];
        let mut sheets: Vec<Sheet> = names.iter().map(|n| Sheet::new(*n)).collect();
        for (i, &(from, to, row)) in refs.iter().enumerate() {
            let text = format!("='{}'!A{row}+[Ext.xlsx]P!B{row}", names[from].replace('\'', "''"));
            sheets[to].set(Pos::new(i as u32 + 1, 5), Content::formula(text, None)).unwrap();
        }
        let wb = Workbook::new("d", sheets).unwrap();
        let sg = aggregate_sheet_graph(&build_cell_graph(&wb), &wb);
        let dot = emit_workbook_graph(&sg, DotOptions { legacy_arrow_colors: legacy });
        common::check_dot(&dot).map_err(TestCaseError::fail)?;
        prop_assert_eq!(dot.matches(" -> ").count(), sg.edges.len());
    }
}

#[test]
fn figure4_dot_is_valid_and_coloured() {
    let wb = common::figure4();
    let cfg = AnalyzerConfig::default();
    let findings = run_all(&wb, &cfg);
    let dot = emit_workbook_graph(&risk_sheet_graph(&wb, &findings, &cfg), DotOptions::default());
    common::check_dot(&dot).unwrap();
    for (name, colour) in [
        ("Sao Paolo", "orange"),
        ("Mexico City", "red"),
        ("London", "green"),
        ("Manilla", "green"),
        ("Mumbai", "red"),
        ("New York", "red"),
    ] {
        let line = format!("[label=\"{name}\", fillcolor={colour}, shape=box, class=sheet];");
        assert!(dot.contains(&line), "{name}: {dot}");
    }
}

fn visual_fixture() -> Workbook {
    let mut main = Sheet::new("Main");
    let mut row = 1;
    let mut add = |s: &mut Sheet, text: String| {
        s.set(Pos::new(row, 1), Content::formula(text, None)).unwrap();
        row += 1;
    };
    add(&mut main, "=Secret!A1".into());
    for i in 1..=5 {
        add(&mut main, format!("=Vault!A{i}"));
    }
    for i in 1..=20 {
        add(&mut main, format!("=[Ext.xlsx]Rates!B{i}"));
    }
    let secret = Sheet::new("Secret").with_visibility(Visibility::Hidden).with("A1", Content::Number(1.0));
    let mut vault = Sheet::new("Vault").with_visibility(Visibility::VeryHidden);
    for i in 1..=5 {
        vault.set(Pos::new(i, 1), Content::Number(f64::from(i))).unwrap();
    }
    Workbook::new("v", vec![main, secret, vault]).unwrap()
}

#[test]
fn visualization_marks_visibility_and_weight() {
    let wb = visual_fixture();
    let sg = aggregate_sheet_graph(&build_cell_graph(&wb), &wb);
    assert_eq!(sg.weight("Secret", "Main"), 1);
    assert_eq!(sg.weight("Vault", "Main"), 5);
    assert_eq!(sg.weight("Ext.xlsx", "Main"), 20);
    let dot = emit_workbook_graph(&sg, DotOptions::default());
    common::check_dot(&dot).unwrap();
    assert!(dot.contains("n1 [label=\"Secret\", fillcolor=lightblue, shape=box, class=hidden];"), "{dot}");
    assert!(dot.contains("n2 [label=\"Vault\", fillcolor=grey, shape=box, class=very_hidden];"), "{dot}");
    assert!(dot.contains("n3 [label=\"Ext.xlsx\", fillcolor=orange, shape=folder, class=external];"), "{dot}");
    let width = |w: f64| format!("penwidth={:.3}, label=\"{w}\"", 1.0 + (1.0 + w).ln());
    assert!(dot.contains(&format!("n1 -> n0 [{}]", width(1.0))), "{dot}");
    assert!(dot.contains(&format!("n2 -> n0 [{}]", width(5.0))), "{dot}");
    assert!(dot.contains(&format!("n3 -> n0 [{}]", width(20.0))), "{dot}");
    assert!(dot.contains("penwidth=1.693") && dot.contains("penwidth=2.792") && dot.contains("penwidth=4.045"));
}

#[test]
fn legacy_arrow_colours() {
    let wb = visual_fixture();
    let sg = aggregate_sheet_graph(&build_cell_graph(&wb), &wb);
    let dot = emit_workbook_graph(&sg, DotOptions { legacy_arrow_colors: true });
    assert!(dot.contains("n1 -> n0 [penwidth=1.693, label=\"1\", color=purple];"), "{dot}");
    let wb = Workbook::new(
        "l",
        vec![Sheet::new("A").with("A1", Content::Number(1.0)), Sheet::new("B").with("A1", Content::formula("=A!A1", None))],
    )
    .unwrap();
    let sg = aggregate_sheet_graph(&build_cell_graph(&wb), &wb);
    let dot = emit_workbook_graph(&sg, DotOptions { legacy_arrow_colors: true });
    assert!(dot.contains("n0 -> n1 [penwidth=1.693, label=\"1\", color=grey];"), "{dot}");
}

#[test]
fn seven_refs_give_weight_seven() {
    let mut london = Sheet::new("London");
    for r in 4..=10 {
        london.set(Pos::new(r, 2), Content::Number(f64::from(r))).unwrap();
    }
    let sao = Sheet::new("Sao Paolo").with(
        "C12",
        Content::formula("=London!B4+London!B5+London!B6+London!B7+London!B8+London!B9+London!B10", None),
    );
    let wb = Workbook::new("w", vec![sao, london]).unwrap();
    let sg = aggregate_sheet_graph(&build_cell_graph(&wb), &wb);
    assert_eq!(sg.edges.len(), 1);
    assert_eq!(sg.weight("London", "Sao Paolo"), 7);
}

#[test]
fn heatmap_layers() {
    let wb = common::figure4();
    let findings = run_all(&wb, &AnalyzerConfig::default());
    let sheet = wb.sheet("Sao Paolo").unwrap();
    let html = emit_heatmap(sheet, &sheet_classes(sheet), &find_consistent_ranges(sheet), &findings);
    assert!(html.contains("id=\"layer-classes\""));
    assert!(html.contains("id=\"layer-risk\""));
    assert!(html.contains("title=\"=1.5*J3\""));
    assert!(html.contains("c-formula"));
    assert!(html.contains("r-low"));
    assert!(html.contains("r-medium"));
    assert!(html.contains("cr-t"));
}

#[test]
fn bundles_are_deterministic() {
    let wb = common::figure4();
    let cfg = AnalyzerConfig::default();
    let findings = run_all(&wb, &cfg);
    for format in [FindingsFormat::Json, FindingsFormat::Csv, FindingsFormat::Html] {
        let a = ReportBundle::build(&wb, &findings, &cfg, format, None, Execution::Sequential);
        let b = ReportBundle::build(&wb, &findings, &cfg, format, None, Execution::Parallel);
        assert_eq!(a, b);
        assert_eq!(a.heatmaps.len(), wb.sheets.len());
    }
}
