//! Seeded error injection and detector scoring.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::formula::{self, BinaryOp, Expr, Locale};
use crate::graph::{self, Node, ParsedFormulas};
use crate::model::eval::Evaluator;
use crate::model::{CellAddr, Content, Value, Workbook};
use crate::par::Execution;
use crate::risk::{self, AnalyzerConfig, ErrorCategory, RiskFinding};
use crate::structure;

/// Targets closer than this (Chebyshev distance, same sheet) are not both picked.
pub const MIN_TARGET_SPACING: u32 = 3;

/// Sibling used when substituting a function name.
pub const FUNCTION_SIBLINGS: [(&str, &str); 12] = [
    ("SUM", "AVERAGE"),
    ("AVERAGE", "SUM"),
    ("MIN", "MAX"),
    ("MAX", "MIN"),
    ("COUNT", "COUNTA"),
    ("COUNTA", "COUNT"),
    ("IRR", "XIRR"),
    ("NPV", "XNPV"),
    ("AND", "OR"),
    ("OR", "AND"),
    ("ROUNDUP", "ROUNDDOWN"),
    ("ROUNDDOWN", "ROUNDUP"),
];

/// Book name given to retargeted external references.
pub const MISSING_BOOK: &str = "missing.xlsx";

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ExperimentError {
    #[error("not enough targets for {category}: wanted {wanted}, found {available}")]
    InsufficientTargets { category: ErrorCategory, wanted: usize, available: usize },
    #[error("plan does not match workbook at {target}")]
    PlanMismatch { target: CellAddr },
    #[error("invalid plan: {0}")]
    InvalidPlan(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InjectionEntry {
    pub category: ErrorCategory,
    pub target: CellAddr,
    pub mutation: String,
    #[serde(with = "content_serde")]
    pub original: Content,
    #[serde(with = "content_serde")]
    pub mutated: Content,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InjectionPlan {
    pub seed: u64,
    pub entries: Vec<InjectionEntry>,
}

impl InjectionPlan {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plan serializes") + "\n"
    }

    pub fn from_json(text: &str) -> Result<Self, ExperimentError> {
        let plan: InjectionPlan = serde_json::from_str(text).map_err(|e| ExperimentError::InvalidPlan(e.to_string()))?;
        let mut seen = BTreeSet::new();
        for e in &plan.entries {
            if !seen.insert(&e.target) {
                return Err(ExperimentError::InvalidPlan(format!("duplicate target {}", e.target)));
            }
        }
        Ok(plan)
    }
}

mod content_serde {
    use serde::{Deserialize, Deserializer, Serializer};
    use serde_json::Value as Json;

    use crate::model::interchange::{content_from_json, content_to_json};
    use crate::model::{Content, IngestConfig};

    pub fn serialize<S: Serializer>(c: &Content, s: S) -> Result<S::Ok, S::Error> {
        serde::Serialize::serialize(&content_to_json(c), s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Content, D::Error> {
        let json = Json::deserialize(d)?;
        content_from_json(&json, IngestConfig::default()).map_err(serde::de::Error::custom)
    }
}

/// Parses `cat1=2,cat7=1` (category numbers or ids) into a mix.
pub fn parse_mix(text: &str) -> Result<BTreeMap<ErrorCategory, usize>, String> {
    let mut mix = BTreeMap::new();
    for part in text.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let (key, count) = part.split_once('=').ok_or_else(|| format!("expected `cat<k>=<n>`, got `{part}`"))?;
        let key = key.trim();
        let category = match key.strip_prefix("cat").and_then(|n| n.parse::<u8>().ok()) {
            Some(n) => ErrorCategory::from_number(n).ok_or_else(|| format!("no category {n}"))?,
            None => key.parse()?,
        };
        let count: usize = count.trim().parse().map_err(|_| format!("bad count in `{part}`"))?;
        *mix.entry(category).or_default() += count;
    }
    Ok(mix)
}

struct Candidate {
    target: CellAddr,
    mutation: String,
    mutated: Content,
}

fn formula_mutation(text: &str, new: Expr, cached: &Option<Value>) -> (String, Content) {
    let printed = formula::print(&new, Locale::Point);
    let mutation = format!("{text} -> {printed}");
    (mutation, Content::formula(printed, cached.clone()))
}

/// Pre-order list of range operands.
fn ranges(ast: &Expr) -> Vec<formula::RefSpan> {
    let mut out = Vec::new();
    ast.walk(&mut |e| {
        if let Expr::Range(span) = e {
            out.push(span.clone());
        }
    });
    out
}

fn shrink_or_grow(span: &formula::RefSpan) -> formula::RefSpan {
    let mut s = span.clone();
    let end = s.end.as_mut().expect("range has an end");
    if end.row > s.start.row {
        end.row -= 1;
    } else if end.col > s.start.col {
        end.col -= 1;
    } else {
        end.row += 1;
    }
    s
}

fn replace_nth<F>(ast: &Expr, n: usize, pred: impl Fn(&Expr) -> bool, f: F) -> Expr
where
    F: Fn(&mut Expr),
{
    let mut out = ast.clone();
    let mut seen = 0;
    out.walk_mut(&mut |e| {
        if pred(e) {
            if seen == n {
                f(e);
            }
            seen += 1;
        }
    });
    out
}

fn is_arith(e: &Expr) -> bool {
    matches!(e, Expr::Binary { op: BinaryOp::Add | BinaryOp::Sub | BinaryOp::Mul | BinaryOp::Div, .. })
}

fn sibling(name: &str) -> Option<&'static str> {
    FUNCTION_SIBLINGS.iter().find(|(a, _)| *a == name).map(|(_, b)| *b)
}

fn has_sibling(e: &Expr) -> bool {
    matches!(e, Expr::Function { name, .. } if sibling(name).is_some())
}

fn has_external(e: &Expr) -> bool {
    matches!(e, Expr::Ref(s) | Expr::Range(s) if s.external_book.is_some())
}

/// Swaps two adjacent distinct digits; `None` when the number has no such pair.
fn transpose_digits(n: f64, rng: &mut ChaCha8Rng) -> Option<f64> {
    let text = format!("{n}");
    let bytes = text.as_bytes();
    let pairs: Vec<usize> = (0..bytes.len().saturating_sub(1))
        .filter(|&i| bytes[i].is_ascii_digit() && bytes[i + 1].is_ascii_digit() && bytes[i] != bytes[i + 1])
        .filter(|&i| !(i == 0 && bytes[1] == b'0'))
        .collect();
    if pairs.is_empty() {
        return None;
    }
    let i = pairs[rng.random_range(0..pairs.len())];
    let mut out = bytes.to_vec();
    out.swap(i, i + 1);
    String::from_utf8(out).ok()?.parse().ok()
}

fn candidates(
    wb: &Workbook,
    parsed: &ParsedFormulas,
    in_ranges: &BTreeSet<CellAddr>,
    category: ErrorCategory,
    rng: &mut ChaCha8Rng,
) -> Vec<Candidate> {
    let any_external = parsed.per_sheet.iter().flat_map(|m| m.values()).any(|ast| {
        let mut found = false;
        ast.walk(&mut |e| found |= has_external(e));
        found
    });
    let mut out = Vec::new();
    for (si, sheet) in wb.sheets.iter().enumerate() {
        for (pos, content) in sheet.cells() {
            let target = CellAddr::at(sheet.name.clone(), pos);
            let made = match (category, content) {
                (ErrorCategory::Input, Content::Number(n)) => transpose_digits(*n, rng)
                    .map(|m| (format!("{n} -> {m}"), Content::Number(m))),
                (ErrorCategory::UserRelated, Content::Formula { cached: Some(v), .. })
                    if in_ranges.contains(&target) && !v.is_blank() =>
                {
                    Some((format!("formula replaced by its value {}", content_value_text(v)), Content::from_value(v.clone())))
                }
                (ErrorCategory::ControlEnvironment, Content::Formula { cached, .. }) if in_ranges.contains(&target) => {
                    let mut n = f64::from(rng.random_range(1..=999u32));
                    if matches!(cached, Some(Value::Number(c)) if *c == n) {
                        n += 1.0;
                    }
                    Some((format!("formula overwritten by {n}"), Content::Number(n)))
                }
                (_, Content::Formula { text, cached }) => {
                    let Some(ast) = parsed.get(si, pos) else { continue };
                    formula_candidate(category, text, ast, cached, any_external, rng)
                }
                _ => None,
            };
            if let Some((mutation, mutated)) = made {
                out.push(Candidate { target, mutation, mutated });
            }
        }
    }
    out
}

fn content_value_text(v: &Value) -> String {
    match v {
        Value::Number(n) => format!("{n}"),
        Value::Text(s) => format!("{s:?}"),
        Value::Bool(b) => b.to_string().to_uppercase(),
        Value::Error(e) => e.excel().to_string(),
        Value::Blank => String::new(),
    }
}

fn count(ast: &Expr, pred: impl Fn(&Expr) -> bool) -> usize {
    let mut n = 0;
    ast.walk(&mut |e| n += usize::from(pred(e)));
    n
}

fn formula_candidate(
    category: ErrorCategory,
    text: &str,
    ast: &Expr,
    cached: &Option<Value>,
    any_external: bool,
    rng: &mut ChaCha8Rng,
) -> Option<(String, Content)> {
    let new = match category {
        ErrorCategory::Reference => {
            let spans = ranges(ast);
            if spans.is_empty() {
                return None;
            }
            let pick = spans[rng.random_range(0..spans.len())].clone();
            let moved = shrink_or_grow(&pick);
            let mut done = false;
            let mut out = ast.clone();
            out.walk_mut(&mut |e| {
                if let Expr::Range(s) = e {
                    if !done && *s == pick {
                        *s = moved.clone();
                        done = true;
                    }
                }
            });
            out
        }
        ErrorCategory::FinancialFormula => {
            let n = count(ast, is_arith);
            if n == 0 {
                return None;
            }
            replace_nth(ast, rng.random_range(0..n), is_arith, |e| {
                if let Expr::Binary { op, .. } = e {
                    *op = match op {
                        BinaryOp::Add => BinaryOp::Sub,
                        BinaryOp::Sub => BinaryOp::Add,
                        BinaryOp::Mul => BinaryOp::Div,
                        _ => BinaryOp::Mul,
                    };
                }
            })
        }
        ErrorCategory::ExcelLogic => {
            let n = count(ast, has_sibling);
            if n == 0 {
                return None;
            }
            replace_nth(ast, rng.random_range(0..n), has_sibling, |e| {
                if let Expr::Function { name, .. } = e {
                    *name = sibling(name).expect("filtered").to_string();
                }
            })
        }
        ErrorCategory::Interface if any_external => {
            let n = count(ast, has_external);
            if n == 0 {
                return None;
            }
            replace_nth(ast, rng.random_range(0..n), has_external, |e| {
                if let Expr::Ref(s) | Expr::Range(s) = e {
                    s.external_book = Some(MISSING_BOOK.to_string());
                }
            })
        }
        ErrorCategory::Interface => {
            let mut span = formula::RefSpan::cell(formula::CellRef::relative(1, 1)).on_sheet("Sheet1");
            span = span.in_book(MISSING_BOOK);
            Expr::binary(BinaryOp::Add, ast.clone(), Expr::Ref(span))
        }
        _ => return None,
    };
    Some(formula_mutation(text, new, cached))
}

fn near(a: &CellAddr, b: &CellAddr) -> bool {
    a.sheet.eq_ignore_ascii_case(&b.sheet)
        && a.pos.row.abs_diff(b.pos.row) < MIN_TARGET_SPACING
        && a.pos.col.abs_diff(b.pos.col) < MIN_TARGET_SPACING
}

/// Builds a plan from `(wb, mix, seed)` alone. Categories are filled in
/// taxonomy order; candidates are shuffled and taken first-fit subject to the
/// spacing rule.
pub fn plan_injection(
    wb: &Workbook,
    mix: &BTreeMap<ErrorCategory, usize>,
    seed: u64,
) -> Result<InjectionPlan, ExperimentError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let parsed = ParsedFormulas::parse(wb, Execution::Sequential);
    let needs_ranges = mix.iter().any(|(c, n)| {
        *n > 0 && matches!(c, ErrorCategory::UserRelated | ErrorCategory::ControlEnvironment)
    });
    let mut in_ranges = BTreeSet::new();
    if needs_ranges {
        for sheet in &wb.sheets {
            for r in structure::find_consistent_ranges(sheet) {
                in_ranges.extend(r.rect.positions().map(|p| CellAddr::at(sheet.name.clone(), p)));
            }
        }
    }
    let mut entries: Vec<InjectionEntry> = Vec::new();
    for category in ErrorCategory::ALL {
        let wanted = mix.get(&category).copied().unwrap_or(0);
        if wanted == 0 {
            continue;
        }
        let mut pool = candidates(wb, &parsed, &in_ranges, category, &mut rng);
        pool.shuffle(&mut rng);
        let mut taken = 0;
        for c in pool {
            if taken == wanted {
                break;
            }
            if entries.iter().any(|e| near(&e.target, &c.target)) {
                continue;
            }
            entries.push(InjectionEntry {
                category,
                original: wb.content(&c.target).clone(),
                target: c.target,
                mutation: c.mutation,
                mutated: c.mutated,
            });
            taken += 1;
        }
        if taken < wanted {
            return Err(ExperimentError::InsufficientTargets { category, wanted, available: taken });
        }
    }
    Ok(InjectionPlan { seed, entries })
}

/// Applies the plan and refreshes cached values of the targets and
/// everything downstream of them. Cells the evaluator cannot compute lose
/// their cached value.
pub fn apply_injection(wb: &Workbook, plan: &InjectionPlan) -> Result<Workbook, ExperimentError> {
    let mut out = wb.clone();
    if plan.entries.is_empty() {
        return Ok(out);
    }
    for e in &plan.entries {
        if wb.sheet(&e.target.sheet).is_none() || *wb.content(&e.target) != e.original {
            return Err(ExperimentError::PlanMismatch { target: e.target.clone() });
        }
        out.set(&e.target, e.mutated.clone()).map_err(|_| ExperimentError::PlanMismatch { target: e.target.clone() })?;
    }
    out.refresh_external_sources();

    let g = graph::build_cell_graph(&out);
    let mut stale: BTreeSet<CellAddr> = BTreeSet::new();
    let mut queue: VecDeque<Node> = plan.entries.iter().map(|e| Node::Cell(e.target.clone())).collect();
    while let Some(node) = queue.pop_front() {
        if let Node::Cell(c) = &node {
            if !stale.insert(c.clone()) {
                continue;
            }
        }
        queue.extend(g.dependents(&node).into_iter().cloned());
    }
    let updates: Vec<(CellAddr, Option<Value>)> = {
        let mut ev = Evaluator::new(&out);
        stale
            .into_iter()
            .filter(|c| out.content(c).is_formula())
            .map(|c| {
                let v = ev.cell(&c).ok();
                (c, v)
            })
            .collect()
    };
    for (cell, value) in updates {
        if let Content::Formula { text, .. } = out.content(&cell).clone() {
            out.set(&cell, Content::formula(text, value)).expect("cell exists");
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CategoryStats {
    pub injected: usize,
    pub detected: usize,
    pub recall: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub per_category: BTreeMap<ErrorCategory, CategoryStats>,
    pub true_pos: usize,
    pub false_pos: usize,
    pub false_neg: usize,
    pub precision: f64,
    pub recall: f64,
    pub wall_time_seconds: f64,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        1.0
    } else {
        num as f64 / den as f64
    }
}

impl EvalReport {
    fn from_counts(per: BTreeMap<ErrorCategory, (usize, usize)>, false_pos: usize, wall: f64) -> EvalReport {
        let per_category: BTreeMap<ErrorCategory, CategoryStats> = per
            .into_iter()
            .map(|(c, (injected, detected))| (c, CategoryStats { injected, detected, recall: ratio(detected, injected) }))
            .collect();
        let injected: usize = per_category.values().map(|s| s.injected).sum();
        let true_pos: usize = per_category.values().map(|s| s.detected).sum();
        EvalReport {
            per_category,
            true_pos,
            false_pos,
            false_neg: injected - true_pos,
            precision: ratio(true_pos, true_pos + false_pos),
            recall: ratio(true_pos, injected),
            wall_time_seconds: wall,
        }
    }

    /// Pools counts across runs; the wall time is summed.
    pub fn combine(reports: &[EvalReport]) -> EvalReport {
        let mut per: BTreeMap<ErrorCategory, (usize, usize)> = BTreeMap::new();
        for r in reports {
            for (c, s) in &r.per_category {
                let e = per.entry(*c).or_default();
                e.0 += s.injected;
                e.1 += s.detected;
            }
        }
        let fp = reports.iter().map(|r| r.false_pos).sum();
        EvalReport::from_counts(per, fp, reports.iter().map(|r| r.wall_time_seconds).sum())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }
}

/// True when `f` was already reported before injection: a baseline finding
/// of the same kind covers its location.
fn in_baseline(f: &RiskFinding, baseline: &[RiskFinding]) -> bool {
    baseline.iter().any(|b| b.kind == f.kind && f.location.within(&b.location))
}

/// Scores findings on a mutated workbook. An entry is detected when some
/// finding's location contains its target. Findings touching no target are
/// false positives unless covered by the baseline.
pub fn evaluate_detectors(findings: &[RiskFinding], plan: &InjectionPlan, baseline: &[RiskFinding]) -> EvalReport {
    let mut per: BTreeMap<ErrorCategory, (usize, usize)> = BTreeMap::new();
    for e in &plan.entries {
        let stats = per.entry(e.category).or_default();
        stats.0 += 1;
        if findings.iter().any(|f| f.location.contains(&e.target)) {
            stats.1 += 1;
        }
    }
    let false_pos = findings
        .iter()
        .filter(|f| !plan.entries.iter().any(|e| f.location.contains(&e.target)))
        .filter(|f| !in_baseline(f, baseline))
        .count();
    EvalReport::from_counts(per, false_pos, 0.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedRun {
    pub seed: u64,
    pub report: EvalReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSummary {
    pub runs: Vec<SeedRun>,
    pub total: EvalReport,
}

/// Plans, injects, audits and scores once per seed. The wall time of each
/// run covers only the audit of the mutated workbook.
pub fn run_experiment(
    wb: &Workbook,
    mix: &BTreeMap<ErrorCategory, usize>,
    seeds: impl IntoIterator<Item = u64>,
    cfg: &AnalyzerConfig,
    exec: Execution,
) -> Result<ExperimentSummary, ExperimentError> {
    let baseline = risk::run_all_with(wb, cfg, exec);
    let mut runs = Vec::new();
    for seed in seeds {
        let plan = plan_injection(wb, mix, seed)?;
        let mutated = apply_injection(wb, &plan)?;
        let start = Instant::now();
        let findings = risk::run_all_with(&mutated, cfg, exec);
        let wall = start.elapsed().as_secs_f64();
        let mut report = evaluate_detectors(&findings, &plan, &baseline);
        report.wall_time_seconds = wall;
        runs.push(SeedRun { seed, report });
    }
    let reports: Vec<EvalReport> = runs.iter().map(|r| r.report.clone()).collect();
    Ok(ExperimentSummary { total: EvalReport::combine(&reports), runs })
}
