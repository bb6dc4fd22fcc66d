//! Risk detectors, findings and sheet scoring.

mod config;
mod detectors;
mod location;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::graph::{self, DependencyGraph, DepthTable, ParsedFormulas};
use crate::model::{Sheet, Value, Workbook};
use crate::par::{self, Execution};
use crate::structure::{self, ConsistentRange, Inconsistency, SheetForms, StructureConfig};

pub use config::{AnalyzerConfig, ConfigError};
pub use detectors::{
    detect_circle_chain, detect_copy_paste, detect_empty_reference, detect_excel_errors, detect_fixed_numbers,
    detect_jealousy, detect_long_chain, detect_many_ref_groups, detect_multi_function, detect_unusual_ranges,
};
pub use location::Location;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DetectorKind {
    FixedNumbers,
    UnusualRange,
    Jealousy,
    MultiFunction,
    ManyRefGroups,
    LongChain,
    CopyPaste,
    EmptyReference,
    ExcelError,
    CircleChain,
}

impl DetectorKind {
    pub const ALL: [DetectorKind; 10] = [
        DetectorKind::FixedNumbers,
        DetectorKind::UnusualRange,
        DetectorKind::Jealousy,
        DetectorKind::MultiFunction,
        DetectorKind::ManyRefGroups,
        DetectorKind::LongChain,
        DetectorKind::CopyPaste,
        DetectorKind::EmptyReference,
        DetectorKind::ExcelError,
        DetectorKind::CircleChain,
    ];

    pub fn id(self) -> &'static str {
        match self {
            DetectorKind::FixedNumbers => "fixed-numbers",
            DetectorKind::UnusualRange => "unusual-range",
            DetectorKind::Jealousy => "jealousy",
            DetectorKind::MultiFunction => "multi-function",
            DetectorKind::ManyRefGroups => "many-ref-groups",
            DetectorKind::LongChain => "long-chain",
            DetectorKind::CopyPaste => "copy-paste",
            DetectorKind::EmptyReference => "empty-reference",
            DetectorKind::ExcelError => "excel-error",
            DetectorKind::CircleChain => "circle-chain",
        }
    }

    /// Column text used in tabular reports.
    pub fn label(self) -> &'static str {
        match self {
            DetectorKind::FixedNumbers => "Containing Fixed Numbers",
            DetectorKind::UnusualRange => "Unusual range",
            DetectorKind::Jealousy => "Jealousy detected",
            DetectorKind::MultiFunction => "Multiple functions in one formula",
            DetectorKind::ManyRefGroups => "Referencing many different cell groups",
            DetectorKind::LongChain => "Long chain of formulas",
            DetectorKind::CopyPaste => "Copy-pasting",
            DetectorKind::EmptyReference => "Empty reference",
            DetectorKind::ExcelError => "Excel error",
            DetectorKind::CircleChain => "Circle Chain",
        }
    }

    pub fn default_degree(self) -> RiskDegree {
        match self {
            DetectorKind::FixedNumbers | DetectorKind::EmptyReference => RiskDegree::Low,
            DetectorKind::ManyRefGroups | DetectorKind::CircleChain => RiskDegree::High,
            _ => RiskDegree::Medium,
        }
    }
}

impl fmt::Display for DetectorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for DetectorKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        DetectorKind::ALL
            .into_iter()
            .find(|k| k.id() == s || k.label().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown detector `{s}`"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RiskDegree {
    Low,
    Medium,
    High,
}

impl RiskDegree {
    pub fn weight(self) -> f64 {
        match self {
            RiskDegree::Low => 1.0,
            RiskDegree::Medium => 3.0,
            RiskDegree::High => 9.0,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            RiskDegree::Low => "Low",
            RiskDegree::Medium => "Medium",
            RiskDegree::High => "High",
        }
    }
}

impl FromStr for RiskDegree {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "low" => Ok(RiskDegree::Low),
            "medium" => Ok(RiskDegree::Medium),
            "high" => Ok(RiskDegree::High),
            _ => Err(format!("unknown risk degree `{s}`")),
        }
    }
}

/// The seven error categories, numbered as in the taxonomy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ErrorCategory {
    Reference,
    FinancialFormula,
    ExcelLogic,
    Interface,
    Input,
    UserRelated,
    ControlEnvironment,
}

impl ErrorCategory {
    pub const ALL: [ErrorCategory; 7] = [
        ErrorCategory::Reference,
        ErrorCategory::FinancialFormula,
        ErrorCategory::ExcelLogic,
        ErrorCategory::Interface,
        ErrorCategory::Input,
        ErrorCategory::UserRelated,
        ErrorCategory::ControlEnvironment,
    ];

    pub fn number(self) -> u8 {
        ErrorCategory::ALL.iter().position(|c| *c == self).expect("listed") as u8 + 1
    }

    pub fn from_number(n: u8) -> Option<ErrorCategory> {
        ErrorCategory::ALL.get(usize::from(n).checked_sub(1)?).copied()
    }

    pub fn id(self) -> &'static str {
        match self {
            ErrorCategory::Reference => "reference",
            ErrorCategory::FinancialFormula => "financial-formula",
            ErrorCategory::ExcelLogic => "excel-logic",
            ErrorCategory::Interface => "interface",
            ErrorCategory::Input => "input",
            ErrorCategory::UserRelated => "user-related",
            ErrorCategory::ControlEnvironment => "control-environment",
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            ErrorCategory::Reference => "Reference",
            ErrorCategory::FinancialFormula => "Financial formula",
            ErrorCategory::ExcelLogic => "Excel logic",
            ErrorCategory::Interface => "Interface",
            ErrorCategory::Input => "Input",
            ErrorCategory::UserRelated => "User related",
            ErrorCategory::ControlEnvironment => "Control environment",
        }
    }
}

impl fmt::Display for ErrorCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for ErrorCategory {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ErrorCategory::ALL
            .into_iter()
            .find(|c| c.id() == s || c.label().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown error category `{s}`"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RiskFinding {
    pub kind: DetectorKind,
    pub degree: RiskDegree,
    pub location: Location,
    pub details: String,
    #[serde(with = "value_serde")]
    pub current_value: Option<Value>,
    pub suggestion: String,
    pub category: ErrorCategory,
}

mod value_serde {
    use serde::{Deserialize, Deserializer, Serializer};
    use serde_json::Value as Json;

    use crate::model::interchange::{value_from_json, value_to_json};
    use crate::model::Value;

    pub fn serialize<S: Serializer>(v: &Option<Value>, s: S) -> Result<S::Ok, S::Error> {
        match v {
            Some(v) => s.serialize_some(&value_to_json(v)),
            None => s.serialize_none(),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<Value>, D::Error> {
        match Json::deserialize(d)? {
            Json::Null => Ok(None),
            other => value_from_json(&other)
                .map(Some)
                .ok_or_else(|| serde::de::Error::custom(format!("not a cell value: {other}"))),
        }
    }
}

/// Prefix of the details text of an `UnusualRange` finding for a literal
/// overwrite; the taxonomy mapping keys on it.
pub(crate) const LITERAL_OVERWRITE: &str = "literal overwrite";
/// Prefix of the suggestion of an `EmptyReference` finding.
pub(crate) const REMOVE_REFERENCE: &str = "Remove reference to ";

/// Taxonomy category of a finding. `UnusualRange` and `EmptyReference` look
/// at their sub-type, which is recorded in the details and suggestion text.
pub fn map_finding_to_category(f: &RiskFinding) -> ErrorCategory {
    match f.kind {
        DetectorKind::UnusualRange if f.details.starts_with(LITERAL_OVERWRITE) => ErrorCategory::ControlEnvironment,
        DetectorKind::UnusualRange => ErrorCategory::Reference,
        DetectorKind::EmptyReference => {
            let target = f.suggestion.strip_prefix(REMOVE_REFERENCE).unwrap_or_default();
            if target.starts_with('[') || target.starts_with("'[") {
                ErrorCategory::Interface
            } else {
                ErrorCategory::Reference
            }
        }
        DetectorKind::FixedNumbers => ErrorCategory::Input,
        DetectorKind::CopyPaste => ErrorCategory::UserRelated,
        DetectorKind::Jealousy
        | DetectorKind::LongChain
        | DetectorKind::MultiFunction
        | DetectorKind::ManyRefGroups
        | DetectorKind::ExcelError
        | DetectorKind::CircleChain => ErrorCategory::ExcelLogic,
    }
}

/// Everything the detectors share, computed once per workbook.
pub struct AnalysisContext<'a> {
    pub wb: &'a Workbook,
    pub cfg: &'a AnalyzerConfig,
    pub exec: Execution,
    pub parsed: ParsedFormulas,
    pub graph: DependencyGraph,
    pub depths: DepthTable,
    /// Per sheet, in workbook order.
    pub forms: Vec<SheetForms>,
    pub ranges: Vec<Vec<ConsistentRange>>,
    pub inconsistencies: Vec<Vec<Inconsistency>>,
}

impl<'a> AnalysisContext<'a> {
    pub fn new(wb: &'a Workbook, cfg: &'a AnalyzerConfig, exec: Execution) -> Self {
        let parsed = ParsedFormulas::parse(wb, exec);
        let graph = graph::build_cell_graph_with(wb, &parsed, cfg.expansion_cap, exec);
        let depths = DepthTable::new(&graph);
        let scfg = cfg.structure();
        let per_sheet = par::map(exec, &wb.sheets, |sheet| {
            let forms = structure::sheet_forms(sheet);
            let ranges = structure::consistent_ranges(&sheet.name, &forms, &scfg);
            let inc = structure::inconsistencies(sheet, &forms, &ranges, &scfg);
            (forms, ranges, inc)
        });
        let mut ctx = AnalysisContext {
            wb,
            cfg,
            exec,
            parsed,
            graph,
            depths,
            forms: Vec::new(),
            ranges: Vec::new(),
            inconsistencies: Vec::new(),
        };
        for (f, r, i) in per_sheet {
            ctx.forms.push(f);
            ctx.ranges.push(r);
            ctx.inconsistencies.push(i);
        }
        ctx
    }

    pub(crate) fn finding(
        &self,
        kind: DetectorKind,
        degree: RiskDegree,
        location: Location,
        details: String,
        current_value: Option<Value>,
        suggestion: String,
    ) -> RiskFinding {
        let degree = self.cfg.degree_overrides.get(&kind).copied().unwrap_or(degree);
        let current_value = current_value.filter(|v| !v.is_blank());
        let mut f = RiskFinding {
            kind,
            degree,
            location,
            details,
            current_value,
            suggestion,
            category: ErrorCategory::Reference,
        };
        f.category = map_finding_to_category(&f);
        f
    }
}

type Detector = fn(&AnalysisContext<'_>) -> Vec<RiskFinding>;

const DETECTORS: [Detector; 10] = [
    detectors::fixed_numbers,
    detectors::unusual_ranges,
    detectors::jealousy,
    detectors::multi_function,
    detectors::many_ref_groups,
    detectors::long_chain,
    detectors::copy_paste,
    detectors::empty_reference,
    detectors::excel_errors,
    detectors::circle_chain,
];

pub fn run_all(wb: &Workbook, cfg: &AnalyzerConfig) -> Vec<RiskFinding> {
    run_all_with(wb, cfg, Execution::default())
}

pub fn run_all_with(wb: &Workbook, cfg: &AnalyzerConfig, exec: Execution) -> Vec<RiskFinding> {
    let ctx = AnalysisContext::new(wb, cfg, exec);
    run_detectors(&ctx)
}

pub fn run_detectors(ctx: &AnalysisContext<'_>) -> Vec<RiskFinding> {
    let mut all: Vec<RiskFinding> = par::map(ctx.exec, &DETECTORS, |d| d(ctx)).into_iter().flatten().collect();
    sort_findings(ctx.wb, &mut all);
    all
}

/// Canonical order: anchor cell (sheet index, row, column), then detector,
/// then the text columns.
pub fn sort_findings(wb: &Workbook, findings: &mut [RiskFinding]) {
    findings.sort_by_cached_key(|f| {
        (f.location.anchor(wb), f.kind, f.location.to_string(), f.details.clone(), f.suggestion.clone())
    });
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RiskColor {
    Green,
    Orange,
    Red,
}

impl RiskColor {
    pub fn as_str(self) -> &'static str {
        match self {
            RiskColor::Green => "green",
            RiskColor::Orange => "orange",
            RiskColor::Red => "red",
        }
    }
}

/// Score = summed degree weights of findings touching the sheet divided by
/// its non-empty cell count (at least 1).
pub fn sheet_risk(findings: &[RiskFinding], sheet: &Sheet, cfg: &AnalyzerConfig) -> (f64, RiskColor) {
    let relevant: Vec<&RiskFinding> = findings.iter().filter(|f| f.location.on_sheet(&sheet.name)).collect();
    let total: f64 = relevant.iter().map(|f| f.degree.weight()).sum();
    let score = total / sheet.len().max(1) as f64;
    let max = relevant.iter().map(|f| f.degree).max();
    let color = if max == Some(RiskDegree::High) || score >= cfg.red_score {
        RiskColor::Red
    } else if max == Some(RiskDegree::Medium) || score >= cfg.orange_score {
        RiskColor::Orange
    } else {
        RiskColor::Green
    };
    (score, color)
}

impl AnalyzerConfig {
    pub fn structure(&self) -> StructureConfig {
        StructureConfig { min_run: self.min_run, min_range: self.min_range, exact_limit: self.exact_rectangle_limit }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identifiers() {
        for k in DetectorKind::ALL {
            assert_eq!(k.id().parse::<DetectorKind>().unwrap(), k);
            assert_eq!(serde_json::to_string(&k).unwrap(), format!("\"{}\"", k.id()));
        }
        for c in ErrorCategory::ALL {
            assert_eq!(ErrorCategory::from_number(c.number()), Some(c));
            assert_eq!(serde_json::to_string(&c).unwrap(), format!("\"{}\"", c.id()));
        }
        assert!(RiskDegree::Low < RiskDegree::Medium && RiskDegree::Medium < RiskDegree::High);
    }

    fn finding(kind: DetectorKind, degree: RiskDegree, loc: &str) -> RiskFinding {
        let mut f = RiskFinding {
            kind,
            degree,
            location: loc.parse().unwrap(),
            details: String::new(),
            current_value: None,
            suggestion: "x".into(),
            category: ErrorCategory::Reference,
        };
        f.category = map_finding_to_category(&f);
        f
    }

    #[test]
    fn category_table() {
        assert_eq!(finding(DetectorKind::FixedNumbers, RiskDegree::Low, "S!A1").category, ErrorCategory::Input);
        assert_eq!(finding(DetectorKind::CopyPaste, RiskDegree::Medium, "S!A1").category, ErrorCategory::UserRelated);
        let mut ext = finding(DetectorKind::EmptyReference, RiskDegree::Low, "S!A1");
        ext.suggestion = format!("{REMOVE_REFERENCE}[Budget.xlsx]Q1!A1; Add a value to [Budget.xlsx]Q1!A1");
        assert_eq!(map_finding_to_category(&ext), ErrorCategory::Interface);
        ext.suggestion = format!("{REMOVE_REFERENCE}'New York'!G34; Add a value to 'New York'!G34");
        assert_eq!(map_finding_to_category(&ext), ErrorCategory::Reference);
        let mut ur = finding(DetectorKind::UnusualRange, RiskDegree::Medium, "S!A1");
        ur.details = format!("{LITERAL_OVERWRITE}: expected RC[-1]");
        assert_eq!(map_finding_to_category(&ur), ErrorCategory::ControlEnvironment);
    }

    #[test]
    fn sheet_colors() {
        let cfg = AnalyzerConfig::default();
        let big = (1..=100).fold(Sheet::new("S"), |s, r| s.with(&format!("A{r}"), crate::model::Content::Number(1.0)));
        assert_eq!(sheet_risk(&[], &big, &cfg), (0.0, RiskColor::Green));
        let high = [finding(DetectorKind::CircleChain, RiskDegree::High, "S!A1")];
        assert_eq!(sheet_risk(&high, &big, &cfg).1, RiskColor::Red);
        let low = [finding(DetectorKind::FixedNumbers, RiskDegree::Low, "S!A1")];
        assert_eq!(sheet_risk(&low, &big, &cfg), (0.01, RiskColor::Green));
        let small = Sheet::new("S").with("A1", crate::model::Content::Number(1.0));
        assert_eq!(sheet_risk(&low, &small, &cfg).1, RiskColor::Red);
        let medium = [finding(DetectorKind::LongChain, RiskDegree::Medium, "S!A1")];
        assert_eq!(sheet_risk(&medium, &big, &cfg).1, RiskColor::Orange);
        assert_eq!(sheet_risk(&medium, &Sheet::new("T"), &cfg).1, RiskColor::Green);
    }
}
