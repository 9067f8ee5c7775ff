use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::ModelKind;
use super::run::{CurvePoint, ExperimentReport};
use crate::error::{Error, Result};
use crate::reference::{self, PublishedResult, AVERAGE_ROW};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReportFormat {
    DelimitedTable,
    Markdown,
}

impl ReportFormat {
    pub fn extension(self) -> &'static str {
        match self {
            ReportFormat::DelimitedTable => "csv",
            ReportFormat::Markdown => "md",
        }
    }
}

/// Published numbers comparable to a row: regression rows and k = 1 rows
/// of the comparative models.
pub fn published_for(project: &str, model: ModelKind, k: Option<usize>) -> Option<&'static PublishedResult> {
    match k {
        None | Some(1) => reference::lookup(project, model.as_str()),
        _ => None,
    }
}

/// Published figures for an average row: the published average when the
/// report covers every published project, the mean over the report's
/// projects when each has published numbers, and nothing otherwise.
fn published_average(report: &ExperimentReport, model: ModelKind, k: Option<usize>) -> Option<[Option<f64>; 3]> {
    let projects: Vec<&str> = report
        .rows
        .iter()
        .filter(|r| r.model == model && r.k == k)
        .map(|r| r.project.as_str())
        .collect();
    let found: Vec<&PublishedResult> = projects
        .iter()
        .map(|p| published_for(p, model, k))
        .collect::<Option<Vec<_>>>()?;
    if found.is_empty() {
        return None;
    }
    let all_published = reference::project_shapes()
        .iter()
        .all(|shape| projects.contains(&shape.project.as_str()));
    if all_published {
        let avg = published_for(AVERAGE_ROW, model, k)?;
        return Some([Some(avg.pearson), Some(avg.spearman), avg.mae]);
    }
    let n = found.len() as f64;
    let mae: Option<Vec<f64>> = found.iter().map(|r| r.mae).collect();
    Some([
        Some(found.iter().map(|r| r.pearson).sum::<f64>() / n),
        Some(found.iter().map(|r| r.spearman).sum::<f64>() / n),
        mae.map(|m| m.iter().sum::<f64>() / n),
    ])
}

fn num(v: Option<f64>) -> String {
    v.map(|v| format!("{v:.4}")).unwrap_or_default()
}

fn k_cell(k: Option<usize>) -> String {
    k.map(|k| k.to_string()).unwrap_or_default()
}

/// One line per (project, model, k) followed by one average line per
/// (model, k).
pub fn render_delimited(report: &ExperimentReport, with_reference: bool) -> Result<String> {
    let mut out = csv::Writer::from_writer(Vec::new());
    let mut header = vec![
        "project",
        "model",
        "k",
        "repeats",
        "pearson",
        "spearman",
        "mae",
        "pearson_undefined",
        "spearman_undefined",
    ];
    if with_reference {
        header.extend(["published_pearson", "published_spearman", "published_mae"]);
    }
    let csv_err = |e: csv::Error| Error::Validation(format!("delimited output: {e}"));
    out.write_record(&header).map_err(csv_err)?;

    let reference_cells = |project: &str, model: ModelKind, k: Option<usize>| -> Vec<String> {
        match published_for(project, model, k) {
            Some(p) => vec![num(Some(p.pearson)), num(Some(p.spearman)), num(p.mae)],
            None => vec![String::new(); 3],
        }
    };
    for row in &report.rows {
        let mut record = vec![
            row.project.clone(),
            row.model.to_string(),
            k_cell(row.k),
            row.repeats.len().to_string(),
            num(row.pearson.mean),
            num(row.spearman.mean),
            num(row.mae.as_ref().and_then(|m| m.mean)),
            row.pearson.undefined.to_string(),
            row.spearman.undefined.to_string(),
        ];
        if with_reference {
            record.extend(reference_cells(&row.project, row.model, row.k));
        }
        out.write_record(&record).map_err(csv_err)?;
    }
    for avg in &report.averages {
        let mut record = vec![
            AVERAGE_ROW.to_string(),
            avg.model.to_string(),
            k_cell(avg.k),
            String::new(),
            num(avg.pearson),
            num(avg.spearman),
            num(avg.mae),
            String::new(),
            String::new(),
        ];
        if with_reference {
            let published = published_average(report, avg.model, avg.k).unwrap_or([None; 3]);
            record.extend(published.iter().map(|v| num(*v)));
        }
        out.write_record(&record).map_err(csv_err)?;
    }
    let bytes = out.into_inner().map_err(|e| Error::Validation(format!("delimited output: {e}")))?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}

/// Projects as rows, one column group per (model, k), averages last.
pub fn render_markdown(report: &ExperimentReport, with_reference: bool) -> Result<String> {
    let groups: Vec<(ModelKind, Option<usize>)> = report.averages.iter().map(|a| (a.model, a.k)).collect();
    let mut projects: Vec<&str> = Vec::new();
    for row in &report.rows {
        if !projects.contains(&row.project.as_str()) {
            projects.push(&row.project);
        }
    }

    let mut header = vec!["Project".to_string()];
    for &(model, k) in &groups {
        let name = match k {
            Some(k) => format!("{} k={k}", model.label()),
            None => model.label().to_string(),
        };
        let mut metrics = vec!["ρ", "r_s"];
        if model == ModelKind::Regression {
            metrics.push("MAE");
        }
        for metric in metrics {
            header.push(format!("{name} {metric}"));
            if with_reference {
                header.push(format!("{name} {metric} (published)"));
            }
        }
    }

    let cells = |model: ModelKind, values: [Option<f64>; 3], reference: [Option<f64>; 3]| -> Vec<String> {
        let width = if model == ModelKind::Regression { 3 } else { 2 };
        let mut out = Vec::new();
        for i in 0..width {
            out.push(values[i].map(|v| format!("{v:.4}")).unwrap_or_else(|| "n/a".into()));
            if with_reference {
                out.push(num(reference[i]));
            }
        }
        out
    };

    let mut lines = vec![header.clone(), vec!["---".to_string(); header.len()]];
    for project in &projects {
        let mut line = vec![project.to_string()];
        for &(model, k) in &groups {
            let published = published_for(project, model, k);
            let reference = [
                published.map(|p| p.pearson),
                published.map(|p| p.spearman),
                published.and_then(|p| p.mae),
            ];
            match report.row(project, model, k) {
                Some(row) => line.extend(cells(
                    model,
                    [row.pearson.mean, row.spearman.mean, row.mae.as_ref().and_then(|m| m.mean)],
                    reference,
                )),
                None => line.extend(cells(model, [None; 3], reference).into_iter().map(|_| String::new())),
            }
        }
        lines.push(line);
    }
    let mut line = vec![format!("**{AVERAGE_ROW}**")];
    for avg in &report.averages {
        let reference = published_average(report, avg.model, avg.k).unwrap_or([None; 3]);
        line.extend(cells(avg.model, [avg.pearson, avg.spearman, avg.mae], reference));
    }
    lines.push(line);

    let mut text = String::from("# Experiment report\n\n");
    for line in lines {
        let _ = writeln!(text, "| {} |", line.join(" | "));
    }

    let undefined: usize = report
        .rows
        .iter()
        .map(|r| r.pearson.undefined + r.spearman.undefined)
        .sum();
    text.push_str("\nMeans are over repeats. Spearman uses average ranks for ties. MAE compares raw regression outputs with story points.");
    if undefined > 0 {
        let _ = write!(text, " {undefined} undefined correlation values were skipped.");
    }
    text.push('\n');

    if let Some(check) = &report.replication {
        let _ = writeln!(
            text,
            "\n## Replication check\n\nComparative (no validation) k=1 average r_s over {} projects: {:.4}. Published: {:.2} ± {:.2} over 16 projects with the original sentence embeddings. {}. This check is informational.",
            check.projects,
            check.spearman,
            check.published,
            check.band,
            if check.within_band { "Within band" } else { "Outside band" }
        );
    }

    if with_reference {
        let baselines: Vec<(&str, &str)> = vec![("fasttext-svm", "FastText-SVM"), ("gpt2sp", "GPT2SP")];
        let _ = writeln!(
            text,
            "\n## Published baselines\n\n| Project | {} |\n| --- | {} |",
            baselines
                .iter()
                .map(|(_, label)| format!("{label} ρ | {label} r_s | {label} MAE"))
                .collect::<Vec<_>>()
                .join(" | "),
            vec!["---"; baselines.len() * 3].join(" | ")
        );
        for project in projects.iter().copied().chain([AVERAGE_ROW]) {
            let mut line = vec![project.to_string()];
            for (model, _) in &baselines {
                let r = reference::lookup(project, model);
                line.push(num(r.map(|r| r.pearson)));
                line.push(num(r.map(|r| r.spearman)));
                line.push(num(r.and_then(|r| r.mae)));
            }
            let _ = writeln!(text, "| {} |", line.join(" | "));
        }
    }

    if !report.errors.is_empty() {
        text.push_str("\n## Failed projects\n\n");
        for e in &report.errors {
            let _ = writeln!(text, "- {}: {}", e.project, e.message);
        }
    }
    Ok(text)
}

pub fn render_report(report: &ExperimentReport, format: ReportFormat, with_reference: bool) -> Result<String> {
    if report.is_empty() {
        return Err(Error::InvalidArgument("report has no rows".into()));
    }
    match format {
        ReportFormat::DelimitedTable => render_delimited(report, with_reference),
        ReportFormat::Markdown => render_markdown(report, with_reference),
    }
}

pub fn emit_report(
    report: &ExperimentReport,
    format: ReportFormat,
    path: impl AsRef<Path>,
    with_reference: bool,
) -> Result<()> {
    let path = path.as_ref();
    let text = render_report(report, format, with_reference)?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn render_curve(curve: &[CurvePoint]) -> String {
    let mut text = String::from("model,k,mean_spearman,values,undefined\n");
    for p in curve {
        let _ = writeln!(
            text,
            "{},{},{},{},{}",
            p.model,
            p.k,
            num(p.mean_spearman),
            p.values,
            p.undefined
        );
    }
    text
}

pub fn emit_curve(curve: &[CurvePoint], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, render_curve(curve)).map_err(|e| Error::io(path, e))
}
