//! The linear scoring head and its three training procedures.
//!
//! All three share one minibatch loop ([`train`]) and differ only in the
//! [`Objective`] they minimize:
//!
//! | loss                     | examples                  | bias    |
//! |--------------------------|---------------------------|---------|
//! | `hinge-comparative`      | judged pairs `(a, b, y)`  | frozen  |
//! | `mae-regression`         | labeled items `(x, sp)`   | trained |
//! | `hinge-svm-difference`   | `d = x_a - x_b` with `y`  | fixed 0 |

pub mod objective;
pub mod optim;
mod train;

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::EmbeddingMatrix;

pub use objective::{ComparativeHinge, MaeRegression, Objective, SvmDifference};
pub use optim::{learning_rate, Optimizer};
pub use train::{train, train_comparative, train_regression, train_svm_comparative};

/// Affine map `x -> w·x + b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoringHead {
    pub w: Vec<f64>,
    pub b: f64,
}

impl ScoringHead {
    pub fn zeros(dim: usize) -> Self {
        ScoringHead { w: vec![0.0; dim], b: 0.0 }
    }

    pub fn dim(&self) -> usize {
        self.w.len()
    }

    pub fn is_finite(&self) -> bool {
        self.b.is_finite() && self.w.iter().all(|v| v.is_finite())
    }

    fn check(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.w.len() {
            return Err(Error::DimensionMismatch {
                expected: self.w.len(),
                got: x.len(),
            });
        }
        Ok(())
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn score(head: &ScoringHead, x: &[f64]) -> Result<f64> {
    head.check(x)?;
    Ok(dot(&head.w, x) + head.b)
}

/// `score(a) - score(b)`; the bias cancels.
pub fn comparative_forward(head: &ScoringHead, x_a: &[f64], x_b: &[f64]) -> Result<f64> {
    Ok(score(head, x_a)? - score(head, x_b)?)
}

/// `max(0, 1 - y·ŷ)` for `y` in `{+1, -1}`.
pub fn hinge_loss(y: f64, y_hat: f64) -> f64 {
    (1.0 - y * y_hat).max(0.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LossKind {
    HingeComparative,
    MaeRegression,
    HingeSvmDifference,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Adam,
    Sgd,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EarlyStopping {
    pub patience: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub loss: LossKind,
    pub max_epochs: usize,
    pub lr_start: f64,
    pub lr_end: f64,
    pub batch_size: usize,
    pub optimizer: OptimizerKind,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_epsilon: f64,
    pub l2_penalty: f64,
    pub early_stopping: Option<EarlyStopping>,
    pub seed: u64,
}

pub const LR_START: f64 = 1e-3;
pub const LR_END: f64 = 1e-6;
pub const BATCH_SIZE: usize = 32;
pub const DEFAULT_PATIENCE: usize = 20;
pub const DEFAULT_SVM_L2: f64 = 1e-4;

impl TrainConfig {
    fn base(loss: LossKind, max_epochs: usize) -> Self {
        TrainConfig {
            loss,
            max_epochs,
            lr_start: LR_START,
            lr_end: LR_END,
            batch_size: BATCH_SIZE,
            optimizer: OptimizerKind::Adam,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_epsilon: 1e-8,
            l2_penalty: 0.0,
            early_stopping: None,
            seed: 0,
        }
    }

    /// Regression on train ∪ validation, MAE loss, 600 epochs.
    pub fn regression() -> Self {
        Self::base(LossKind::MaeRegression, 600)
    }

    /// Comparative learning without a validation set, 100 epochs.
    pub fn comparative_no_validation() -> Self {
        Self::base(LossKind::HingeComparative, 100)
    }

    /// Comparative learning with validation early stopping, up to 300 epochs.
    pub fn comparative_with_validation() -> Self {
        TrainConfig {
            early_stopping: Some(EarlyStopping {
                patience: DEFAULT_PATIENCE,
            }),
            ..Self::base(LossKind::HingeComparative, 300)
        }
    }

    pub fn svm_comparative() -> Self {
        TrainConfig {
            l2_penalty: DEFAULT_SVM_L2,
            ..Self::base(LossKind::HingeSvmDifference, 100)
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_max_epochs(mut self, max_epochs: usize) -> Self {
        self.max_epochs = max_epochs;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(m.to_string()));
        if !(self.lr_start > 0.0 && self.lr_end > 0.0) {
            return bad("learning rates must be positive");
        }
        if self.lr_end > self.lr_start {
            return bad("lr_end must not exceed lr_start");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive");
        }
        if !(self.l2_penalty >= 0.0) {
            return bad("l2_penalty must be non-negative");
        }
        if !(0.0..1.0).contains(&self.adam_beta1) || !(0.0..1.0).contains(&self.adam_beta2) {
            return bad("adam betas must lie in [0, 1)");
        }
        if !(self.adam_epsilon > 0.0) {
            return bad("adam_epsilon must be positive");
        }
        if matches!(self.early_stopping, Some(EarlyStopping { patience: 0 })) {
            return bad("early stopping patience must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub val_loss: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub head: ScoringHead,
    pub config: TrainConfig,
    pub history: Vec<EpochRecord>,
    /// Number of epochs behind the returned head (0 = initialization).
    pub best_epoch: usize,
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    dim: usize,
    w: Vec<f64>,
    b: f64,
    config: TrainConfig,
    best_epoch: usize,
    history: Vec<EpochRecord>,
}

impl TrainedModel {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&ModelFile {
            dim: self.head.dim(),
            w: self.head.w.clone(),
            b: self.head.b,
            config: self.config.clone(),
            best_epoch: self.best_epoch,
            history: self.history.clone(),
        })?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: ModelFile = serde_json::from_str(text)?;
        if file.w.len() != file.dim {
            return Err(Error::DimensionMismatch {
                expected: file.dim,
                got: file.w.len(),
            });
        }
        let head = ScoringHead { w: file.w, b: file.b };
        if !head.is_finite() {
            return Err(Error::Validation("model weights are not finite".into()));
        }
        Ok(TrainedModel {
            head,
            config: file.config,
            history: file.history,
            best_epoch: file.best_epoch,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

pub fn predict_scores<S: AsRef<str>>(model: &TrainedModel, emb: &EmbeddingMatrix, ids: &[S]) -> Result<Vec<f64>> {
    ids.iter()
        .map(|id| score(&model.head, emb.require(id.as_ref())?))
        .collect()
}
