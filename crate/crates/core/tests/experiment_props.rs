mod common;

use std::collections::BTreeMap;

use cellguard::experiment::{
    apply_injection, parse_mix, plan_injection, run_experiment, ExperimentError, InjectionPlan, MIN_TARGET_SPACING,
};
use cellguard::model::{Content, Value};
use cellguard::par::Execution;
use cellguard::risk::{run_all, AnalyzerConfig, ErrorCategory};
use proptest::prelude::*;

fn detectable_mix() -> BTreeMap<ErrorCategory, usize> {
    parse_mix("cat1=2,cat4=2,cat6=2,cat7=2").unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn plans_are_reproducible_and_spaced(seed in any::<u64>()) {
        let wb = common::reference();
        let mix = parse_mix("cat1=1,cat2=1,cat3=1,cat4=1,cat5=1,cat6=1,cat7=1").unwrap();
        let plan = plan_injection(&wb, &mix, seed).unwrap();
        prop_assert_eq!(plan.to_json(), plan_injection(&wb, &mix, seed).unwrap().to_json());
        prop_assert_eq!(&InjectionPlan::from_json(&plan.to_json()).unwrap(), &plan);
        prop_assert_eq!(plan.entries.len(), 7);
        for (i, a) in plan.entries.iter().enumerate() {
            prop_assert_eq!(wb.content(&a.target), &a.original);
            prop_assert!(a.mutated != a.original);
            for b in &plan.entries[i + 1..] {
                let close = a.target.sheet == b.target.sheet
                    && a.target.row().abs_diff(b.target.row()) < MIN_TARGET_SPACING
                    && a.target.col().abs_diff(b.target.col()) < MIN_TARGET_SPACING;
                prop_assert!(!close, "{} and {}", a.target, b.target);
            }
        }
    }

    /// Only targets change what they hold; other cells may change only their cached value.
    #[test]
    fn injection_touches_only_targets(seed in 0u64..1000) {
        let wb = common::reference();
        let plan = plan_injection(&wb, &detectable_mix(), seed).unwrap();
        let mutated = apply_injection(&wb, &plan).unwrap();
        for sheet in &wb.sheets {
            let after = mutated.sheet(&sheet.name).unwrap();
            for (pos, before) in sheet.cells() {
                let addr = cellguard::model::CellAddr::at(sheet.name.clone(), pos);
                let now = after.content(pos);
                match plan.entries.iter().find(|e| e.target == addr) {
                    Some(e) => prop_assert_eq!(now.formula_text(), e.mutated.formula_text()),
                    None => match (before, now) {
                        (Content::Formula { text: a, .. }, Content::Formula { text: b, .. }) => prop_assert_eq!(a, b),
                        (a, b) => prop_assert_eq!(a, b),
                    },
                }
            }
        }
    }
}

#[test]
fn different_seeds_give_different_plans() {
    let wb = common::reference();
    let plans: Vec<String> = (0..5).map(|s| plan_injection(&wb, &detectable_mix(), s).unwrap().to_json()).collect();
    for i in 0..plans.len() {
        for j in i + 1..plans.len() {
            assert_ne!(plans[i], plans[j]);
        }
    }
}

#[test]
fn stale_plans_are_rejected() {
    let wb = common::reference();
    let mut plan = plan_injection(&wb, &detectable_mix(), 7).unwrap();
    plan.entries[0].original = Content::Number(-12345.0);
    assert!(matches!(apply_injection(&wb, &plan), Err(ExperimentError::PlanMismatch { .. })));
}

#[test]
fn oversized_mix_is_an_error() {
    let wb = common::reference();
    let err = plan_injection(&wb, &parse_mix("cat4=1000").unwrap(), 1).unwrap_err();
    assert!(matches!(err, ExperimentError::InsufficientTargets { category: ErrorCategory::Interface, .. }));
}

#[test]
fn pristine_reference_has_no_findings() {
    let wb = common::reference();
    assert!(run_all(&wb, &AnalyzerConfig::default()).is_empty());
    let summary = run_experiment(&wb, &BTreeMap::new(), 0..3, &AnalyzerConfig::default(), Execution::default()).unwrap();
    assert_eq!(summary.total.false_pos, 0);
    assert_eq!(summary.total.true_pos, 0);
}

#[test]
fn detectable_categories_are_found() {
    let wb = common::reference();
    let summary = run_experiment(&wb, &detectable_mix(), 0..10, &AnalyzerConfig::default(), Execution::default()).unwrap();
    assert_eq!(summary.runs.len(), 10);
    assert_eq!(summary.total.false_pos, 0);
    for (cat, stats) in &summary.total.per_category {
        assert_eq!(stats.injected, 20, "{cat:?}");
        assert_eq!(stats.recall, 1.0, "{cat:?}");
    }
}

#[test]
fn cached_values_follow_injection() {
    let wb = common::reference();
    let plan = plan_injection(&wb, &parse_mix("cat7=1").unwrap(), 11).unwrap();
    let mutated = apply_injection(&wb, &plan).unwrap();
    let e = &plan.entries[0];
    let Content::Number(n) = mutated.content(&e.target) else { panic!("cat7 writes a number") };
    assert!((1.0..=999.0).contains(n));
    let dependents: Vec<_> = cellguard::graph::build_cell_graph(&mutated)
        .dependents(&cellguard::graph::Node::Cell(e.target.clone()))
        .into_iter()
        .filter_map(|n| n.as_cell().cloned())
        .collect();
    for d in dependents {
        let fresh = cellguard::model::eval::evaluate_cell(&mutated, &d).unwrap();
        let cached = mutated.content(&d).value();
        assert!(cached.approx_eq(&fresh) || matches!(fresh, Value::Error(_)), "{d}: {cached:?} vs {fresh:?}");
    }
}
