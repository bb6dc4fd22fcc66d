use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use cellguard::experiment::{self, InjectionPlan};
use cellguard::model::interchange::{load_interchange, save_interchange};
use cellguard::model::xlsx::{load_xlsx, save_xlsx};
use cellguard::model::{IngestConfig, Workbook};
use cellguard::par::Execution;
use cellguard::report::{self, DotOptions, FindingsFormat, ReportBundle};
use cellguard::risk::{self, AnalysisContext, AnalyzerConfig};
use cellguard::structure;
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "cellguard", version, about = "Static risk analysis for spreadsheets")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct Common {
    /// Analyzer configuration file (.toml or .json).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override one configuration key, as key=value. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    set: Vec<String>,
    /// Worker threads for analysis; 1 runs sequentially.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Read numbers and formulas written with a decimal comma.
    #[arg(long, global = true)]
    decimal_comma: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Run every detector and print the findings.
    Audit {
        file: PathBuf,
        #[arg(long, default_value = "json")]
        format: FindingsFormat,
        /// Also write a full report bundle into this directory.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Exit with status 1 when the analysis produced warnings.
        #[arg(long)]
        strict: bool,
        /// Leave the timestamp out of the bundle metadata.
        #[arg(long)]
        no_timestamp: bool,
    },
    /// Emit the sheet dependency graph as DOT.
    Graph {
        file: PathBuf,
        #[arg(short = 'o', long = "output")]
        output: Option<PathBuf>,
        #[arg(long)]
        legacy_arrow_colors: bool,
    },
    /// Emit an HTML view of one sheet.
    Heatmap {
        file: PathBuf,
        #[arg(long)]
        sheet: String,
        #[arg(short = 'o', long = "output")]
        output: Option<PathBuf>,
    },
    /// Seed errors into a workbook.
    Inject {
        file: PathBuf,
        /// Errors per category, e.g. cat1=2,cat7=1.
        #[arg(long)]
        mix: String,
        #[arg(long)]
        seed: u64,
        /// Mutated workbook (.json or .xlsx).
        #[arg(long)]
        out: PathBuf,
        /// Injection plan (JSON).
        #[arg(long)]
        plan: PathBuf,
    },
    /// Score findings against an injection plan.
    Evaluate {
        #[arg(long)]
        plan: PathBuf,
        #[arg(long)]
        findings: PathBuf,
        /// Findings on the pristine workbook; these never count as false positives.
        #[arg(long)]
        baseline: Option<PathBuf>,
    },
}

enum Status {
    Ok,
    Warnings,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(Status::Ok) => ExitCode::SUCCESS,
        Ok(Status::Warnings) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn is_xlsx(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("xlsx") || e.eq_ignore_ascii_case("xlsm"))
}

fn load(path: &Path, ingest: IngestConfig) -> Result<Workbook> {
    if is_xlsx(path) {
        return load_xlsx(path, ingest).with_context(|| format!("reading {}", path.display()));
    }
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    load_interchange(&text, ingest).with_context(|| format!("reading {}", path.display()))
}

fn save(wb: &Workbook, path: &Path) -> Result<()> {
    if is_xlsx(path) {
        save_xlsx(wb, path).with_context(|| format!("writing {}", path.display()))
    } else {
        write_file(path, &save_interchange(wb))
    }
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn emit(output: Option<&Path>, text: &str) -> Result<()> {
    match output {
        Some(p) => write_file(p, text),
        None => {
            std::io::stdout().lock().write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

fn config(common: &Common) -> Result<AnalyzerConfig> {
    let mut cfg = match &common.config {
        None => AnalyzerConfig::default(),
        Some(path) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            let cfg = if path.extension().is_some_and(|e| e == "json") {
                AnalyzerConfig::from_json(&text)?
            } else {
                toml::from_str::<AnalyzerConfig>(&text).with_context(|| format!("parsing {}", path.display()))?
            };
            cfg.validate()?;
            cfg
        }
    };
    for kv in &common.set {
        let Some((k, v)) = kv.split_once('=') else { bail!("--set expects KEY=VALUE, got `{kv}`") };
        cfg.set(k.trim(), v.trim())?;
    }
    Ok(cfg)
}

fn execution(common: &Common) -> Result<Execution> {
    match common.jobs {
        Some(0) => bail!("--jobs must be at least 1"),
        Some(1) => Ok(Execution::Sequential),
        #[cfg(feature = "parallel")]
        Some(n) => {
            rayon::ThreadPoolBuilder::new().num_threads(n).build_global().context("starting worker pool")?;
            Ok(Execution::Parallel)
        }
        #[cfg(not(feature = "parallel"))]
        Some(_) => Ok(Execution::Sequential),
        None => Ok(Execution::default()),
    }
}

fn run(cli: Cli) -> Result<Status> {
    let common = &cli.common;
    let ingest = if common.decimal_comma { IngestConfig::comma() } else { IngestConfig::default() };
    let exec = execution(common)?;
    match cli.command {
        Command::Audit { file, format, out, strict, no_timestamp } => {
            let cfg = config(common)?;
            let wb = load(&file, ingest)?;
            let ctx = AnalysisContext::new(&wb, &cfg, exec);
            let findings = risk::run_detectors(&ctx);
            let mut warnings: Vec<String> = ctx.graph.warnings.iter().map(ToString::to_string).collect();
            warnings.dedup();
            for w in &warnings {
                eprintln!("warning: {w}");
            }
            emit(None, &report::emit_findings(&findings, format))?;
            if let Some(dir) = out {
                let stamp = (!no_timestamp).then(|| chrono::Utc::now().to_rfc3339());
                let bundle = ReportBundle::build(&wb, &findings, &cfg, format, stamp, exec);
                bundle.write_to(&dir, format).with_context(|| format!("writing {}", dir.display()))?;
            }
            Ok(if strict && !warnings.is_empty() { Status::Warnings } else { Status::Ok })
        }
        Command::Graph { file, output, legacy_arrow_colors } => {
            let cfg = config(common)?;
            let wb = load(&file, ingest)?;
            let findings = risk::run_all_with(&wb, &cfg, exec);
            let sg = report::risk_sheet_graph(&wb, &findings, &cfg);
            emit(output.as_deref(), &report::emit_workbook_graph(&sg, DotOptions { legacy_arrow_colors }))?;
            Ok(Status::Ok)
        }
        Command::Heatmap { file, sheet, output } => {
            let cfg = config(common)?;
            let wb = load(&file, ingest)?;
            let Some(s) = wb.sheet(&sheet) else { bail!("no sheet named `{sheet}` in {}", file.display()) };
            let findings = risk::run_all_with(&wb, &cfg, exec);
            let ranges = structure::consistent_ranges(&s.name, &structure::sheet_forms(s), &cfg.structure());
            let html = report::emit_heatmap(s, &report::sheet_classes(s), &ranges, &findings);
            emit(output.as_deref(), &html)?;
            Ok(Status::Ok)
        }
        Command::Inject { file, mix, seed, out, plan } => {
            let wb = load(&file, ingest)?;
            let mix: BTreeMap<_, _> = experiment::parse_mix(&mix).map_err(anyhow::Error::msg)?;
            let p = experiment::plan_injection(&wb, &mix, seed)?;
            let mutated = experiment::apply_injection(&wb, &p)?;
            save(&mutated, &out)?;
            write_file(&plan, &p.to_json())?;
            Ok(Status::Ok)
        }
        Command::Evaluate { plan, findings, baseline } => {
            let read = |p: &Path| std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()));
            let plan = InjectionPlan::from_json(&read(&plan)?)?;
            let found = report::parse_findings_json(&read(&findings)?).context("parsing findings")?;
            let base = match baseline {
                Some(b) => report::parse_findings_json(&read(&b)?).context("parsing baseline")?,
                None => Vec::new(),
            };
            emit(None, &experiment::evaluate_detectors(&found, &plan, &base).to_json())?;
            Ok(Status::Ok)
        }
    }
}
