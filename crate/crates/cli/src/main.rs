use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Duration;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;
use storypoint_core::dataset::{load_project, summarize, DataFormat};
use storypoint_core::harness::{
    emit_curve, emit_report, run_experiment, sweep_k, ExperimentConfig, ExperimentReport, ProjectError, ReportFormat,
};
use storypoint_service::{router, Service, ServiceConfig};

#[derive(Parser)]
#[command(name = "storypoint", version, about = "Story point estimation from comparative judgments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Markdown,
    Both,
}

#[derive(clap::Args)]
struct ExperimentArgs {
    /// Experiment config (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Comma-separated project names to keep from the config.
    #[arg(long, value_delimiter = ',')]
    projects: Vec<String>,
    /// Override the config's base seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Add published reference columns to the tables.
    #[arg(long)]
    reference: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment and write report.json, report.csv and report.md.
    Run(ExperimentArgs),
    /// Run the comparative models over the config's k values and write sweep.csv.
    SweepK(ExperimentArgs),
    /// Render tables from a saved report.json.
    Report {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[arg(long, value_enum, default_value = "both")]
        format: FormatArg,
        #[arg(long)]
        reference: bool,
    },
    /// Print size and story point range of datasets as JSON.
    Summarize { datasets: Vec<PathBuf> },
    /// Serve the annotation API.
    Serve {
        #[arg(long, default_value = "127.0.0.1:8080")]
        listen: String,
        /// Backlog files to offer.
        #[arg(long = "dataset", required = true)]
        datasets: Vec<PathBuf>,
        /// Journal directory; sessions are in-memory without it.
        #[arg(long)]
        journal: Option<PathBuf>,
        #[arg(long, default_value_t = 60)]
        train_timeout_secs: u64,
    },
}

#[derive(Serialize)]
struct Failure {
    code: &'static str,
    message: String,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    failed_projects: Vec<ProjectError>,
}

impl Failure {
    fn new(code: &'static str, e: impl std::fmt::Display) -> Self {
        Failure {
            code,
            message: e.to_string(),
            failed_projects: Vec::new(),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            let text = serde_json::to_string(&serde_json::json!({ "error": failure })).expect("failure serializes");
            eprintln!("{text}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch(command: Command) -> Result<(), Failure> {
    match command {
        Command::Run(args) => {
            let config = load_config(&args)?;
            let report = run_experiment(&config).map_err(|e| Failure::new("experiment", e))?;
            write_report(&report, &args.out, FormatArg::Both, args.reference)?;
            finish(&report, &args.out)
        }
        Command::SweepK(args) => {
            let config = load_config(&args)?;
            let (report, curve) = sweep_k(&config).map_err(|e| Failure::new("experiment", e))?;
            write_report(&report, &args.out, FormatArg::Both, args.reference)?;
            emit_curve(&curve, args.out.join("sweep.csv")).map_err(|e| Failure::new("io", e))?;
            finish(&report, &args.out)
        }
        Command::Report {
            input,
            out,
            format,
            reference,
        } => {
            let text = std::fs::read_to_string(&input).map_err(|e| Failure::new("io", format!("{}: {e}", input.display())))?;
            let report = ExperimentReport::from_json(&text).map_err(|e| Failure::new("invalid_report", e))?;
            if report.is_empty() {
                return Err(Failure::new("empty_report", "report has no rows"));
            }
            create_dir(&out)?;
            render(&report, &out, format, reference)
        }
        Command::Summarize { datasets } => {
            let mut out = serde_json::Map::new();
            for path in datasets {
                let ds = load_project(&path, DataFormat::from_path(&path)).map_err(|e| Failure::new("dataset", e))?;
                let summary = summarize(&ds).map_err(|e| Failure::new("dataset", e))?;
                out.insert(
                    ds.name().to_string(),
                    serde_json::to_value(summary).expect("summary serializes"),
                );
            }
            println!("{}", serde_json::to_string_pretty(&out).expect("summary serializes"));
            Ok(())
        }
        Command::Serve {
            listen,
            datasets,
            journal,
            train_timeout_secs,
        } => {
            let config = ServiceConfig {
                datasets,
                journal_dir: journal,
                train_timeout: Duration::from_secs(train_timeout_secs),
                ..Default::default()
            };
            let service = Service::open(&config).map_err(|e| Failure::new("service", e))?;
            serve(&listen, service).map_err(|e| Failure::new("service", e))
        }
    }
}

fn load_config(args: &ExperimentArgs) -> Result<ExperimentConfig, Failure> {
    let mut config = ExperimentConfig::load(&args.config).map_err(|e| Failure::new("config", e))?;
    if !args.projects.is_empty() {
        config
            .select_projects(&args.projects)
            .map_err(|e| Failure::new("config", e))?;
    }
    if let Some(seed) = args.seed {
        config.base_seed = seed;
    }
    Ok(config)
}

fn create_dir(out: &Path) -> Result<(), Failure> {
    std::fs::create_dir_all(out).map_err(|e| Failure::new("io", format!("{}: {e}", out.display())))
}

fn render(report: &ExperimentReport, out: &Path, format: FormatArg, reference: bool) -> Result<(), Failure> {
    let formats: &[ReportFormat] = match format {
        FormatArg::Csv => &[ReportFormat::DelimitedTable],
        FormatArg::Markdown => &[ReportFormat::Markdown],
        FormatArg::Both => &[ReportFormat::DelimitedTable, ReportFormat::Markdown],
    };
    for &f in formats {
        let path = out.join(format!("report.{}", f.extension()));
        emit_report(report, f, &path, reference).map_err(|e| Failure::new("io", e))?;
    }
    Ok(())
}

fn write_report(report: &ExperimentReport, out: &Path, format: FormatArg, reference: bool) -> Result<(), Failure> {
    create_dir(out)?;
    let json = report.to_json().map_err(|e| Failure::new("io", e))?;
    let path = out.join("report.json");
    std::fs::write(&path, json).map_err(|e| Failure::new("io", format!("{}: {e}", path.display())))?;
    if !report.is_empty() {
        render(report, out, format, reference)?;
    }
    Ok(())
}

/// Print averages; fail if any project failed.
fn finish(report: &ExperimentReport, out: &Path) -> Result<(), Failure> {
    for avg in &report.averages {
        let k = avg.k.map(|k| format!(" k={k}")).unwrap_or_default();
        let fmt = |v: Option<f64>| v.map(|v| format!("{v:.4}")).unwrap_or_else(|| "n/a".into());
        println!(
            "{}{k}: pearson {} spearman {} over {} projects",
            avg.model,
            fmt(avg.pearson),
            fmt(avg.spearman),
            avg.projects
        );
    }
    println!("wrote {}", out.display());
    if report.errors.is_empty() {
        return Ok(());
    }
    Err(Failure {
        code: "project_failures",
        message: format!("{} project(s) failed", report.errors.len()),
        failed_projects: report.errors.clone(),
    })
}

fn serve(listen: &str, service: Service) -> std::io::Result<()> {
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(async {
        let listener = tokio::net::TcpListener::bind(listen).await?;
        eprintln!("listening on {}", listener.local_addr()?);
        axum::serve(listener, router(Arc::new(service)))
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await
    })
}
