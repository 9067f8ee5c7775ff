use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::DEFAULT_DIM;
use crate::models::{EarlyStopping, OptimizerKind, TrainConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    Regression,
    ComparativeNoval,
    ComparativeVal,
    SvmComparative,
}

impl ModelKind {
    pub const ALL: [ModelKind; 4] = [
        ModelKind::Regression,
        ModelKind::ComparativeNoval,
        ModelKind::ComparativeVal,
        ModelKind::SvmComparative,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Regression => "regression",
            ModelKind::ComparativeNoval => "comparative-noval",
            ModelKind::ComparativeVal => "comparative-val",
            ModelKind::SvmComparative => "svm-comparative",
        }
    }

    /// Column heading used in markdown tables.
    pub fn label(self) -> &'static str {
        match self {
            ModelKind::Regression => "Regression",
            ModelKind::ComparativeNoval => "Comparative (no validation)",
            ModelKind::ComparativeVal => "Comparative (validation)",
            ModelKind::SvmComparative => "LinearSVM-Comparative",
        }
    }

    pub fn is_comparative(self) -> bool {
        self != ModelKind::Regression
    }

    pub fn default_train_config(self) -> TrainConfig {
        match self {
            ModelKind::Regression => TrainConfig::regression(),
            ModelKind::ComparativeNoval => TrainConfig::comparative_no_validation(),
            ModelKind::ComparativeVal => TrainConfig::comparative_with_validation(),
            ModelKind::SvmComparative => TrainConfig::svm_comparative(),
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ModelKind::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown model {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FeatureSource {
    /// Precomputed vectors next to each dataset.
    EmbeddingFiles,
    /// Hashed TF-IDF fitted on the project's train and validation texts.
    #[default]
    BuiltInTfidf,
}

/// A dataset path, optionally with an explicit embedding file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ProjectSource {
    Path(PathBuf),
    Detailed {
        dataset: PathBuf,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        embeddings: Option<PathBuf>,
    },
}

impl ProjectSource {
    pub fn dataset(&self) -> &Path {
        match self {
            ProjectSource::Path(p) | ProjectSource::Detailed { dataset: p, .. } => p,
        }
    }

    /// Explicit embedding path, or `<stem>.embeddings.jsonl` beside the dataset.
    pub fn embeddings(&self) -> PathBuf {
        match self {
            ProjectSource::Detailed {
                embeddings: Some(e), ..
            } => e.clone(),
            _ => {
                let dataset = self.dataset();
                dataset.with_file_name(format!("{}.embeddings.jsonl", project_name(dataset)))
            }
        }
    }

    pub fn name(&self) -> String {
        project_name(self.dataset())
    }

    fn resolve(&mut self, base: &Path) {
        let join = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        match self {
            ProjectSource::Path(p) => join(p),
            ProjectSource::Detailed { dataset, embeddings } => {
                join(dataset);
                if let Some(e) = embeddings {
                    join(e);
                }
            }
        }
    }
}

/// Project name: the dataset file stem.
pub fn project_name(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}

/// Partial training settings layered over a model's defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainOverrides {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_epochs: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lr_start: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lr_end: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub batch_size: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub optimizer: Option<OptimizerKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub l2_penalty: Option<f64>,
    /// Only applies to configs that already early-stop.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub patience: Option<usize>,
}

impl TrainOverrides {
    pub fn apply(&self, mut config: TrainConfig) -> TrainConfig {
        if let Some(v) = self.max_epochs {
            config.max_epochs = v;
        }
        if let Some(v) = self.lr_start {
            config.lr_start = v;
        }
        if let Some(v) = self.lr_end {
            config.lr_end = v;
        }
        if let Some(v) = self.batch_size {
            config.batch_size = v;
        }
        if let Some(v) = self.optimizer {
            config.optimizer = v;
        }
        if let Some(v) = self.l2_penalty {
            config.l2_penalty = v;
        }
        if let (Some(patience), Some(_)) = (self.patience, config.early_stopping) {
            config.early_stopping = Some(EarlyStopping { patience });
        }
        config
    }
}

fn default_repeats_regression() -> usize {
    20
}

fn default_repeats_comparative() -> usize {
    10
}

fn default_tfidf_dim() -> usize {
    DEFAULT_DIM
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub projects: Vec<ProjectSource>,
    #[serde(default)]
    pub feature_source: FeatureSource,
    #[serde(default = "default_tfidf_dim")]
    pub tfidf_dim: usize,
    #[serde(default)]
    pub models: Vec<ModelKind>,
    #[serde(default)]
    pub k_values: Vec<usize>,
    #[serde(default = "default_repeats_regression")]
    pub repeats_regression: usize,
    #[serde(default = "default_repeats_comparative")]
    pub repeats_comparative: usize,
    #[serde(default)]
    pub base_seed: u64,
    /// Applied to every model.
    #[serde(default)]
    pub train: TrainOverrides,
    /// Applied after `train`, per model.
    #[serde(default)]
    pub model_train: BTreeMap<ModelKind, TrainOverrides>,
}

impl ExperimentConfig {
    pub fn new(projects: Vec<ProjectSource>, models: Vec<ModelKind>, k_values: Vec<usize>) -> Self {
        ExperimentConfig {
            projects,
            feature_source: FeatureSource::default(),
            tfidf_dim: DEFAULT_DIM,
            models,
            k_values,
            repeats_regression: default_repeats_regression(),
            repeats_comparative: default_repeats_comparative(),
            base_seed: 0,
            train: TrainOverrides::default(),
            model_train: BTreeMap::new(),
        }
    }

    /// Parse a JSON config; relative paths are taken from the file's directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut config: ExperimentConfig = serde_json::from_str(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        for project in &mut config.projects {
            project.resolve(base);
        }
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.models.iter().any(|m| m.is_comparative()) && self.k_values.is_empty() {
            return bad("k_values must be non-empty when a comparative model is selected".into());
        }
        if self.k_values.contains(&0) {
            return bad("k values must be positive".into());
        }
        if self.tfidf_dim == 0 {
            return bad("tfidf_dim must be positive".into());
        }
        let mut seen = std::collections::HashSet::new();
        for p in &self.projects {
            if !seen.insert(p.name()) {
                return bad(format!("project {:?} is listed twice", p.name()));
            }
        }
        for model in &self.models {
            self.train_config(*model, 0).validate()?;
        }
        Ok(())
    }

    /// Effective training config for one model and seed.
    pub fn train_config(&self, model: ModelKind, seed: u64) -> TrainConfig {
        let config = self.train.apply(model.default_train_config());
        let config = match self.model_train.get(&model) {
            Some(o) => o.apply(config),
            None => config,
        };
        config.with_seed(seed)
    }

    /// Keep only the named projects, in config order.
    pub fn select_projects(&mut self, names: &[String]) -> Result<()> {
        for name in names {
            if !self.projects.iter().any(|p| &p.name() == name) {
                return Err(Error::InvalidArgument(format!("no project named {name:?} in config")));
            }
        }
        self.projects.retain(|p| names.contains(&p.name()));
        Ok(())
    }

    pub fn repeats(&self, model: ModelKind) -> usize {
        if model.is_comparative() {
            self.repeats_comparative
        } else {
            self.repeats_regression
        }
    }

    /// `k` values a model runs with: `[None]` for regression.
    pub fn ks(&self, model: ModelKind) -> Vec<Option<usize>> {
        if model.is_comparative() {
            self.k_values.iter().map(|&k| Some(k)).collect()
        } else {
            vec![None]
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::LossKind;

    #[test]
    fn parses_with_defaults() {
        let config: ExperimentConfig = serde_json::from_str(
            r#"{"projects": ["data/a.csv", {"dataset": "b.jsonl", "embeddings": "vec/b.jsonl"}],
                "models": ["regression", "comparative-val"], "k_values": [1, 5]}"#,
        )
        .unwrap();
        assert_eq!(config.repeats_regression, 20);
        assert_eq!(config.repeats_comparative, 10);
        assert_eq!(config.feature_source, FeatureSource::BuiltInTfidf);
        assert_eq!(config.projects[0].name(), "a");
        assert_eq!(config.projects[0].embeddings(), Path::new("data/a.embeddings.jsonl"));
        assert_eq!(config.projects[1].embeddings(), Path::new("vec/b.jsonl"));
        assert!(config.validate().is_ok());
    }

    #[test]
    fn rejects_unknown_fields_and_empty_k() {
        assert!(serde_json::from_str::<ExperimentConfig>(r#"{"projects": [], "modles": []}"#).is_err());
        let config = ExperimentConfig::new(vec![], vec![ModelKind::ComparativeNoval], vec![]);
        assert!(config.validate().is_err());
        let config = ExperimentConfig::new(vec![], vec![ModelKind::Regression], vec![]);
        assert!(config.validate().is_ok());
        let config = ExperimentConfig::new(vec![], vec![ModelKind::ComparativeNoval], vec![0]);
        assert!(config.validate().is_err());
    }

    #[test]
    fn overrides_layer_in_order() {
        let mut config = ExperimentConfig::new(vec![], ModelKind::ALL.to_vec(), vec![1]);
        config.train.max_epochs = Some(7);
        config.train.patience = Some(3);
        config.model_train.insert(
            ModelKind::Regression,
            TrainOverrides {
                max_epochs: Some(9),
                ..Default::default()
            },
        );
        let reg = config.train_config(ModelKind::Regression, 4);
        assert_eq!((reg.loss, reg.max_epochs, reg.seed, reg.early_stopping), (LossKind::MaeRegression, 9, 4, None));
        let val = config.train_config(ModelKind::ComparativeVal, 0);
        assert_eq!((val.max_epochs, val.early_stopping), (7, Some(EarlyStopping { patience: 3 })));
        assert_eq!(config.train_config(ModelKind::SvmComparative, 0).l2_penalty, 1e-4);
    }

    #[test]
    fn load_resolves_relative_paths() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("exp.json");
        std::fs::write(&path, r#"{"projects": ["p.csv", "/abs/q.csv"]}"#).unwrap();
        let config = ExperimentConfig::load(&path).unwrap();
        assert_eq!(config.projects[0].dataset(), dir.path().join("p.csv"));
        assert_eq!(config.projects[1].dataset(), Path::new("/abs/q.csv"));
    }

    #[test]
    fn select_projects_filters_and_checks_names() {
        let mut config = ExperimentConfig::new(
            vec![ProjectSource::Path("x/a.csv".into()), ProjectSource::Path("x/b.csv".into())],
            vec![],
            vec![],
        );
        assert!(config.select_projects(&["c".into()]).is_err());
        config.select_projects(&["b".into()]).unwrap();
        assert_eq!(config.projects.len(), 1);
        assert_eq!(config.projects[0].name(), "b");
    }

    #[test]
    fn model_names_round_trip() {
        for m in ModelKind::ALL {
            assert_eq!(m.as_str().parse::<ModelKind>().unwrap(), m);
            assert_eq!(serde_json::to_value(m).unwrap(), m.as_str());
        }
    }
}
