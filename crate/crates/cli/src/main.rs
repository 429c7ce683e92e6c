//! `mirage`: audit unlearned models from embedding exports, or run the
//! federated sandbox end to end.
//!
//! Exit codes: 0 when every audited model certifies, 2 when any fails
//! certification, 1 on usage or execution errors.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Parser, Subcommand};

use mirage_core::audit::{
    emit_report, emit_scatter, run_audit, AuditConfig, AuditReport, ModelTriple, PerModel,
};
use mirage_core::ingest::{mef, read_embedding_set, EmbeddingSet};
use mirage_core::sandbox::{read_export, run_scenario, Scenario};
use mirage_core::stats::{mean, sample_std};
use mirage_core::ForgetSpec;

const THREADS_ENV: &str = "MIRAGE_THREADS";
const REPORT_FILE: &str = "report.json";

#[derive(Debug, Parser)]
#[command(
    name = "mirage",
    version,
    about = "Representation-level audits of machine unlearning"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Audit an unlearned model against its original and a retrained reference.
    Audit(AuditArgs),
    /// Train, unlearn and audit the models described by a scenario file.
    Sandbox {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Collect `(y_u, delta_lpr)` points from report files into one CSV.
    Scatter {
        /// Glob pattern matching report JSON files.
        #[arg(long)]
        reports: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print metadata and summary statistics of an embedding export.
    Inspect {
        #[arg(long)]
        dir: PathBuf,
    },
}

#[derive(Debug, clap::Args)]
struct AuditArgs {
    /// Export directory of the original model (one subdirectory per layer).
    #[arg(long)]
    original: PathBuf,
    #[arg(long)]
    unlearned: PathBuf,
    #[arg(long)]
    retrained: PathBuf,
    /// Forget specification file.
    #[arg(long)]
    forget: PathBuf,
    /// Audit configuration (TOML); defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Number of probe seeds, overriding the configuration.
    #[arg(long)]
    probe_seeds: Option<u64>,
    #[arg(long, default_value = "unlearned")]
    method: String,
    #[arg(long, default_value = "unnamed")]
    dataset: String,
}

/// Whether every audited model certified.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Outcome {
    Certified,
    Rejected,
}

impl Outcome {
    fn from_passed(passed: bool) -> Self {
        if passed {
            Outcome::Certified
        } else {
            Outcome::Rejected
        }
    }

    fn exit_code(self) -> ExitCode {
        match self {
            Outcome::Certified => ExitCode::SUCCESS,
            Outcome::Rejected => ExitCode::from(2),
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match configure_threads().and_then(|()| execute(cli.command)) {
        Ok(outcome) => outcome.exit_code(),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn configure_threads() -> Result<()> {
    let Ok(raw) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .map_err(|_| anyhow!("{THREADS_ENV} must be a non-negative integer, got {raw:?}"))?;
    if n > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring the thread pool")?;
    }
    Ok(())
}

fn execute(command: Command) -> Result<Outcome> {
    match command {
        Command::Audit(args) => cmd_audit(&args),
        Command::Sandbox { scenario, out } => cmd_sandbox(&scenario, &out),
        Command::Scatter { reports, out } => {
            cmd_scatter(&reports, &out).map(|()| Outcome::Certified)
        }
        Command::Inspect { dir } => cmd_inspect(&dir).map(|()| Outcome::Certified),
    }
}

fn cmd_audit(args: &AuditArgs) -> Result<Outcome> {
    let mut config = match &args.config {
        Some(path) => AuditConfig::read(path)?,
        None => AuditConfig::default(),
    };
    if let Some(n) = args.probe_seeds {
        if n == 0 {
            bail!("--probe-seeds must be at least 1");
        }
        config.seeds = (0..n).collect();
    }
    let spec = ForgetSpec::read(&args.forget)?;

    let load = |dir: &Path, name: &str| {
        read_export(dir).with_context(|| format!("reading the {name} export {}", dir.display()))
    };
    let (original, pred_o) = load(&args.original, "original")?;
    let (unlearned, pred_u) = load(&args.unlearned, "unlearned")?;
    let (retrained, pred_r) = load(&args.retrained, "retrained")?;

    let mut triple = ModelTriple::new(original, unlearned, retrained)?;
    if let (Some(original), Some(unlearned), Some(retrained)) = (pred_o, pred_u, pred_r) {
        triple = triple.with_predictions(PerModel {
            original,
            unlearned,
            retrained,
        })?;
    }

    let mut report = run_audit(&triple, &spec, &config)?;
    report.context.method = args.method.clone();
    report.context.dataset = args.dataset.clone();

    std::fs::create_dir_all(&args.out)
        .with_context(|| format!("creating {}", args.out.display()))?;
    let path = args.out.join(REPORT_FILE);
    emit_report(&report, &path)?;
    print_verdict(&report);
    Ok(Outcome::from_passed(report.certification.passed))
}

fn print_verdict(report: &AuditReport) {
    let verdict = if report.certification.passed {
        "certified"
    } else {
        "not certified"
    };
    let y_u = report
        .output
        .as_ref()
        .map_or_else(|| "n/a".to_string(), |o| format!("{:.4}", o.unlearned.y_u));
    println!(
        "{} on {}: delta_lpr={:+.4} y_u={} cka_o={:.4} cka_r={:.4} -> {verdict}",
        report.context.method,
        report.context.dataset,
        report.delta_lpr,
        y_u,
        report.cka_unlearned_vs_original,
        report.cka_unlearned_vs_retrained,
    );
    for v in report.certification.verdicts.iter().filter(|v| !v.passed) {
        println!(
            "  {} |{:.4} - {:.4}| = {:.4} > {:.4}",
            v.diagnostic, v.unlearned, v.retrained, v.difference, v.threshold
        );
    }
}

fn cmd_sandbox(scenario_path: &Path, out: &Path) -> Result<Outcome> {
    let scenario = Scenario::read(scenario_path)?;
    let outcome = run_scenario(&scenario, out)
        .with_context(|| format!("running scenario {}", scenario.name))?;
    for report in &outcome.reports {
        let seed = report
            .context
            .train_seed
            .map_or_else(String::new, |s| format!(" seed {s}"));
        let verdict = if report.certification.passed {
            "certified"
        } else {
            "not certified"
        };
        let y_u = report.output.as_ref().map_or(f64::NAN, |o| o.unlearned.y_u);
        println!(
            "{}{seed}: delta_lpr={:+.4} y_u={y_u:.4} -> {verdict}",
            report.context.method, report.delta_lpr
        );
    }
    Ok(Outcome::from_passed(outcome.all_certified()))
}

fn cmd_scatter(pattern: &str, out: &Path) -> Result<()> {
    let mut paths: Vec<PathBuf> = glob::glob(pattern)
        .with_context(|| format!("bad glob pattern {pattern:?}"))?
        .collect::<std::result::Result<_, _>>()?;
    if paths.is_empty() {
        bail!("no reports match {pattern:?}");
    }
    paths.sort();
    let reports = paths
        .iter()
        .map(|p| AuditReport::read(p))
        .collect::<mirage_core::Result<Vec<_>>>()?;
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)
            .with_context(|| format!("creating {}", parent.display()))?;
    }
    emit_scatter(&reports, out)?;
    println!("{} rows -> {}", reports.len(), out.display());
    Ok(())
}

fn cmd_inspect(dir: &Path) -> Result<()> {
    if dir.join(mef::META_FILE).is_file() {
        let set = read_embedding_set(dir)?;
        print_set(&set);
        return Ok(());
    }
    let (layers, predictions) = read_export(dir)?;
    if layers.is_empty() {
        bail!("{} holds no embedding sets", dir.display());
    }
    for set in layers.values() {
        print_set(set);
    }
    if let Some(p) = predictions {
        println!("predictions={}", p.len());
    }
    Ok(())
}

fn print_set(set: &EmbeddingSet) {
    println!("layer={} model={}", set.layer_tag, set.model_tag);
    println!("rows={} cols={}", set.len(), set.dim());
    for (k, v) in &set.source_meta {
        println!("  {k}={v}");
    }
    let mut counts = std::collections::BTreeMap::<u32, usize>::new();
    for &l in set.labels.iter() {
        *counts.entry(l).or_default() += 1;
    }
    let counts: Vec<String> = counts.iter().map(|(l, n)| format!("{l}:{n}")).collect();
    println!("  labels {}", counts.join(" "));

    let values = set.features.data();
    if values.is_empty() {
        return;
    }
    let norms: Vec<f64> = (0..set.len())
        .map(|r| {
            set.features
                .row(r)
                .iter()
                .map(|v| v * v)
                .sum::<f64>()
                .sqrt()
        })
        .collect();
    let (lo, hi) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    println!(
        "  values mean={:.6} sd={:.6} min={lo:.6} max={hi:.6}; row norm mean={:.6}",
        mean(values),
        sample_std(values),
        mean(&norms)
    );
}
