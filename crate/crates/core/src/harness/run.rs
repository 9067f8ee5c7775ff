use std::collections::HashSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, FeatureSource, ModelKind, ProjectSource};
use crate::dataset::{item_text, load_project, BacklogItem, DataFormat, ProjectDataset, Split};
use crate::error::{Error, Result};
use crate::features::{fit_hashed_tfidf, load_embeddings, EmbeddingMatrix};
use crate::metrics::evaluate;
use crate::models::{predict_scores, train_comparative, train_regression, train_svm_comparative, TrainedModel};
use crate::pairing::{simulate_pairs, ComparativePair, PairSet};
use crate::reference::{PUBLISHED_NOVAL_AVERAGE_SPEARMAN, REPLICATION_BAND};
use crate::rng::derive_seed;

/// Tag mixed into the repeat seed for validation pair sampling.
pub const VALIDATION_PAIR_TAG: u64 = 0x7661_6c69_6461_7465;

/// A project ready to train on: backlog plus a vector for every item.
#[derive(Debug, Clone)]
pub struct PreparedProject {
    pub name: String,
    pub dataset: ProjectDataset,
    pub embeddings: EmbeddingMatrix,
}

/// Load a project's backlog and features and check the run preconditions.
pub fn prepare_project(source: &ProjectSource, config: &ExperimentConfig) -> Result<PreparedProject> {
    let path = source.dataset();
    let dataset = load_project(path, DataFormat::from_path(path))?;
    let embeddings = match config.feature_source {
        FeatureSource::EmbeddingFiles => {
            let emb = load_embeddings(source.embeddings())?;
            let missing = emb.missing(dataset.items().iter().map(|i| i.id.as_str()));
            if !missing.is_empty() {
                return Err(Error::Validation(format!(
                    "{} items have no embedding, first {:?}",
                    missing.len(),
                    missing[0]
                )));
            }
            emb
        }
        FeatureSource::BuiltInTfidf => {
            let corpus: Vec<String> = dataset
                .in_splits(&[Split::Train, Split::Validation])
                .map(item_text)
                .collect();
            let model = fit_hashed_tfidf(&corpus, config.tfidf_dim, true)?;
            model.embed_all(dataset.items().iter().map(|i| (i.id.as_str(), item_text(i))))?
        }
    };
    if dataset.labeled_in(&[Split::Test]).is_empty() {
        return Err(Error::Validation("no labeled test items".into()));
    }
    Ok(PreparedProject {
        name: source.name(),
        dataset,
        embeddings,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RepeatOutcome {
    pub repeat: usize,
    pub seed: u64,
    pub pearson: Option<f64>,
    pub spearman: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mae: Option<f64>,
    /// Training pairs, or labeled items for regression.
    pub train_examples: usize,
    #[serde(default)]
    pub validation_examples: usize,
    /// Pairs lost to exhausted anchors (training and validation).
    #[serde(default)]
    pub shortfall: usize,
    pub epochs_run: usize,
    pub best_epoch: usize,
}

/// Mean over the defined per-repeat values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub mean: Option<f64>,
    pub values: Vec<Option<f64>>,
    pub undefined: usize,
}

impl MetricSummary {
    pub fn from_values(values: Vec<Option<f64>>) -> Self {
        let defined: Vec<f64> = values.iter().flatten().copied().collect();
        MetricSummary {
            mean: mean(&defined),
            undefined: values.len() - defined.len(),
            values,
        }
    }

    pub fn defined(&self) -> impl Iterator<Item = f64> + '_ {
        self.values.iter().flatten().copied()
    }
}

pub(crate) fn mean(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        None
    } else {
        Some(values.iter().sum::<f64>() / values.len() as f64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub project: String,
    pub model: ModelKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    pub test_items: usize,
    pub pearson: MetricSummary,
    pub spearman: MetricSummary,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mae: Option<MetricSummary>,
    pub repeats: Vec<RepeatOutcome>,
}

/// Per (model, k): the mean of the per-project means.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AverageRow {
    pub model: ModelKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    pub projects: usize,
    pub pearson: Option<f64>,
    pub spearman: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mae: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProjectError {
    pub project: String,
    pub message: String,
}

/// Overall comparative-noval (k = 1) average Spearman against the published
/// figure.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReplicationCheck {
    pub projects: usize,
    pub spearman: f64,
    pub published: f64,
    pub band: f64,
    pub within_band: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub rows: Vec<ReportRow>,
    pub averages: Vec<AverageRow>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub replication: Option<ReplicationCheck>,
    #[serde(default)]
    pub errors: Vec<ProjectError>,
}

impl ExperimentReport {
    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn row(&self, project: &str, model: ModelKind, k: Option<usize>) -> Option<&ReportRow> {
        self.rows
            .iter()
            .find(|r| r.project == project && r.model == model && r.k == k)
    }

    pub fn average(&self, model: ModelKind, k: Option<usize>) -> Option<&AverageRow> {
        self.averages.iter().find(|a| a.model == model && a.k == k)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// Recompute averages and the replication check from `rows`.
    pub fn assemble(rows: Vec<ReportRow>, errors: Vec<ProjectError>) -> Self {
        let mut keys: Vec<(ModelKind, Option<usize>)> = Vec::new();
        for row in &rows {
            if !keys.contains(&(row.model, row.k)) {
                keys.push((row.model, row.k));
            }
        }
        let averages = keys
            .into_iter()
            .map(|(model, k)| {
                let group: Vec<&ReportRow> = rows.iter().filter(|r| r.model == model && r.k == k).collect();
                let over = |f: &dyn Fn(&ReportRow) -> Option<f64>| {
                    mean(&group.iter().filter_map(|r| f(r)).collect::<Vec<_>>())
                };
                AverageRow {
                    model,
                    k,
                    projects: group.len(),
                    pearson: over(&|r| r.pearson.mean),
                    spearman: over(&|r| r.spearman.mean),
                    mae: over(&|r| r.mae.as_ref().and_then(|m| m.mean)),
                }
            })
            .collect::<Vec<_>>();
        let replication = averages
            .iter()
            .find(|a| a.model == ModelKind::ComparativeNoval && a.k == Some(1))
            .and_then(|a| {
                a.spearman.map(|spearman| ReplicationCheck {
                    projects: a.projects,
                    spearman,
                    published: PUBLISHED_NOVAL_AVERAGE_SPEARMAN,
                    band: REPLICATION_BAND,
                    within_band: (spearman - PUBLISHED_NOVAL_AVERAGE_SPEARMAN).abs() <= REPLICATION_BAND,
                })
            });
        ExperimentReport {
            rows,
            averages,
            replication,
            errors,
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Job {
    project: usize,
    model: ModelKind,
    k: Option<usize>,
    repeat: usize,
}

/// Training data of one repeat, before fitting.
#[derive(Debug, Clone)]
pub enum TrainingSet {
    Items(Vec<BacklogItem>),
    Pairs {
        train: PairSet,
        validation: Option<PairSet>,
    },
}

/// Build the training set for one repeat. Only train and validation items
/// are ever drawn from.
pub fn training_set(project: &PreparedProject, model: ModelKind, k: Option<usize>, seed: u64) -> Result<TrainingSet> {
    let ds = &project.dataset;
    let k = || k.ok_or_else(|| Error::InvalidArgument(format!("{model} needs k")));
    Ok(match model {
        ModelKind::Regression => TrainingSet::Items(ds.labeled_in(&[Split::Train, Split::Validation])),
        ModelKind::ComparativeNoval | ModelKind::SvmComparative => TrainingSet::Pairs {
            train: simulate_pairs(&ds.labeled_in(&[Split::Train, Split::Validation]), k()?, seed)?,
            validation: None,
        },
        ModelKind::ComparativeVal => TrainingSet::Pairs {
            train: simulate_pairs(&ds.labeled_in(&[Split::Train]), k()?, seed)?,
            validation: Some(simulate_pairs(
                &ds.labeled_in(&[Split::Validation]),
                k()?,
                derive_seed(seed, VALIDATION_PAIR_TAG),
            )?),
        },
    })
}

/// Fail if any test item feeds training.
pub fn check_hygiene(dataset: &ProjectDataset, set: &TrainingSet) -> Result<()> {
    let test: HashSet<&str> = dataset.in_splits(&[Split::Test]).map(|i| i.id.as_str()).collect();
    let leak = |id: &str| -> Result<()> {
        if test.contains(id) {
            return Err(Error::Validation(format!("test item {id:?} reached a training set")));
        }
        Ok(())
    };
    let check_pairs = |pairs: &[ComparativePair]| pairs.iter().try_for_each(|p| leak(&p.a).and(leak(&p.b)));
    match set {
        TrainingSet::Items(items) => items.iter().try_for_each(|i| leak(&i.id)),
        TrainingSet::Pairs { train, validation } => {
            check_pairs(&train.pairs)?;
            validation.as_ref().map_or(Ok(()), |v| check_pairs(&v.pairs))
        }
    }
}

fn run_job(project: &PreparedProject, config: &ExperimentConfig, job: Job) -> Result<RepeatOutcome> {
    let seed = config.base_seed.wrapping_add(job.repeat as u64);
    let train_config = config.train_config(job.model, seed);
    let set = training_set(project, job.model, job.k, seed)?;
    check_hygiene(&project.dataset, &set)?;

    let emb = &project.embeddings;
    let (model, train_examples, validation_examples, shortfall): (TrainedModel, _, _, _) = match &set {
        TrainingSet::Items(items) => (train_regression(items, emb, &train_config)?, items.len(), 0, 0),
        TrainingSet::Pairs { train, validation } => {
            let model = match job.model {
                ModelKind::SvmComparative => train_svm_comparative(&train.pairs, emb, &train_config)?,
                _ => train_comparative(
                    &train.pairs,
                    emb,
                    validation.as_ref().map(|v| v.pairs.as_slice()),
                    &train_config,
                )?,
            };
            let val_len = validation.as_ref().map_or(0, |v| v.len());
            let val_short = validation.as_ref().map_or(0, |v| v.shortfall);
            (model, train.len(), val_len, train.shortfall + val_short)
        }
    };

    let test = project.dataset.labeled_in(&[Split::Test]);
    let ids: Vec<&str> = test.iter().map(|i| i.id.as_str()).collect();
    let truth: Vec<f64> = test.iter().filter_map(BacklogItem::sp).collect();
    let pred = predict_scores(&model, emb, &ids)?;
    let metrics = evaluate(&pred, &truth, job.model == ModelKind::Regression)?;
    Ok(RepeatOutcome {
        repeat: job.repeat,
        seed,
        pearson: metrics.pearson,
        spearman: metrics.spearman,
        mae: metrics.mae,
        train_examples,
        validation_examples,
        shortfall,
        epochs_run: model.history.len(),
        best_epoch: model.best_epoch,
    })
}

/// Run every (project, model, k, repeat) job and aggregate.
///
/// Jobs run in parallel but are collected in a fixed order, so the report
/// depends only on the config. A project whose loading or any job fails is
/// left out of the rows and listed under `errors`.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentReport> {
    config.validate()?;
    if config.models.is_empty() {
        return Ok(ExperimentReport::default());
    }
    let prepared: Vec<Result<PreparedProject>> = config
        .projects
        .par_iter()
        .map(|source| prepare_project(source, config))
        .collect();

    let mut jobs = Vec::new();
    for (p, project) in prepared.iter().enumerate() {
        if project.is_err() {
            continue;
        }
        for &model in &config.models {
            for k in config.ks(model) {
                for repeat in 0..config.repeats(model) {
                    jobs.push(Job {
                        project: p,
                        model,
                        k,
                        repeat,
                    });
                }
            }
        }
    }
    let outcomes: Vec<Result<RepeatOutcome>> = jobs
        .par_iter()
        .map(|job| {
            let project = prepared[job.project].as_ref().expect("jobs only reference loaded projects");
            run_job(project, config, *job)
        })
        .collect();

    let mut rows = Vec::new();
    let mut errors = Vec::new();
    for (p, project) in prepared.iter().enumerate() {
        let name = config.projects[p].name();
        let project = match project {
            Ok(project) => project,
            Err(e) => {
                errors.push(ProjectError {
                    project: name,
                    message: e.to_string(),
                });
                continue;
            }
        };
        let mine: Vec<(&Job, &Result<RepeatOutcome>)> =
            jobs.iter().zip(&outcomes).filter(|(j, _)| j.project == p).collect();
        if let Some((job, Err(e))) = mine.iter().find(|(_, o)| o.is_err()) {
            errors.push(ProjectError {
                project: name,
                message: format!("{} k={:?} repeat {}: {e}", job.model, job.k, job.repeat),
            });
            continue;
        }
        let test_items = project.dataset.labeled_in(&[Split::Test]).len();
        for &model in &config.models {
            for k in config.ks(model) {
                let repeats: Vec<RepeatOutcome> = mine
                    .iter()
                    .filter(|(j, _)| j.model == model && j.k == k)
                    .filter_map(|(_, o)| o.as_ref().ok().copied())
                    .collect();
                rows.push(ReportRow {
                    project: name.clone(),
                    model,
                    k,
                    test_items,
                    pearson: MetricSummary::from_values(repeats.iter().map(|r| r.pearson).collect()),
                    spearman: MetricSummary::from_values(repeats.iter().map(|r| r.spearman).collect()),
                    mae: (model == ModelKind::Regression)
                        .then(|| MetricSummary::from_values(repeats.iter().map(|r| r.mae).collect())),
                    repeats,
                });
            }
        }
    }
    Ok(ExperimentReport::assemble(rows, errors))
}

/// One point of the k-sweep curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub model: ModelKind,
    pub k: usize,
    /// Mean Spearman over all defined (project, repeat) values.
    pub mean_spearman: Option<f64>,
    pub values: usize,
    pub undefined: usize,
}

/// Run the comparative models of `config` and reduce to one mean Spearman
/// per (model, k).
pub fn sweep_k(config: &ExperimentConfig) -> Result<(ExperimentReport, Vec<CurvePoint>)> {
    let mut config = config.clone();
    config.models.retain(|m| m.is_comparative());
    if config.models.is_empty() {
        return Err(Error::InvalidArgument("sweep-k needs at least one comparative model".into()));
    }
    let report = run_experiment(&config)?;
    let curve = curve_from_report(&report);
    Ok((report, curve))
}

pub fn curve_from_report(report: &ExperimentReport) -> Vec<CurvePoint> {
    let mut curve: Vec<CurvePoint> = Vec::new();
    for row in &report.rows {
        let Some(k) = row.k else { continue };
        if curve.iter().any(|c| c.model == row.model && c.k == k) {
            continue;
        }
        let group = report.rows.iter().filter(|r| r.model == row.model && r.k == row.k);
        let mut values = Vec::new();
        let mut undefined = 0;
        for r in group {
            values.extend(r.spearman.defined());
            undefined += r.spearman.undefined;
        }
        curve.push(CurvePoint {
            model: row.model,
            k,
            mean_spearman: mean(&values),
            values: values.len(),
            undefined,
        });
    }
    curve
}
