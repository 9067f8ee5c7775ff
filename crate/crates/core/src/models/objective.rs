//! Training objectives: mean loss over a minibatch and its (sub)gradient.
//!
//! Subgradients at the hinge and absolute-value kinks are taken as 0.

use std::collections::HashMap;

use super::{dot, hinge_loss, ScoringHead};
use crate::dataset::BacklogItem;
use crate::error::{Error, Result};
use crate::features::EmbeddingMatrix;
use crate::pairing::ComparativePair;

pub trait Objective: Sync {
    fn dim(&self) -> usize;

    /// Number of training examples.
    fn len(&self) -> usize;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Whether the bias receives gradient.
    fn trains_bias(&self) -> bool;

    /// Mean loss over `batch`. With `grad`, also writes the gradient of that
    /// mean into `(grad_w, grad_b)` (overwriting).
    fn batch(&self, head: &ScoringHead, batch: &[usize], grad: Option<(&mut [f64], &mut f64)>) -> f64;

    fn batch_loss(&self, head: &ScoringHead, batch: &[usize]) -> f64 {
        self.batch(head, batch, None)
    }

    /// Mean loss over every example (0 when there are none).
    fn mean_loss(&self, head: &ScoringHead) -> f64 {
        if self.is_empty() {
            return 0.0;
        }
        let all: Vec<usize> = (0..self.len()).collect();
        self.batch_loss(head, &all)
    }
}

fn reset(grad: &mut Option<(&mut [f64], &mut f64)>) {
    if let Some((gw, gb)) = grad {
        gw.iter_mut().for_each(|g| *g = 0.0);
        **gb = 0.0;
    }
}

fn scale(grad: &mut Option<(&mut [f64], &mut f64)>, factor: f64) {
    if let Some((gw, gb)) = grad {
        gw.iter_mut().for_each(|g| *g *= factor);
        **gb *= factor;
    }
}

/// Hinge loss on score differences of judged pairs.
#[derive(Debug, Clone)]
pub struct ComparativeHinge {
    dim: usize,
    features: Vec<Vec<f64>>,
    /// (index of a, index of b, y)
    pairs: Vec<(usize, usize, f64)>,
}

/// Collect the vectors behind `ids`, de-duplicated, with their local indices.
fn gather<'a>(
    emb: &EmbeddingMatrix,
    ids: impl IntoIterator<Item = &'a str>,
) -> Result<(Vec<Vec<f64>>, HashMap<&'a str, usize>)> {
    let mut features = Vec::new();
    let mut index = HashMap::new();
    for id in ids {
        if !index.contains_key(id) {
            index.insert(id, features.len());
            features.push(emb.require(id)?.to_vec());
        }
    }
    Ok((features, index))
}

impl ComparativeHinge {
    pub fn new(pairs: &[ComparativePair], emb: &EmbeddingMatrix) -> Result<Self> {
        let (features, index) = gather(emb, pairs.iter().flat_map(|p| [p.a.as_str(), p.b.as_str()]))?;
        let pairs = pairs
            .iter()
            .map(|p| (index[p.a.as_str()], index[p.b.as_str()], p.y.as_f64()))
            .collect();
        Ok(ComparativeHinge {
            dim: emb.dim(),
            features,
            pairs,
        })
    }

    /// Build from raw vectors and `(a, b, y)` index triples.
    pub fn from_raw(features: Vec<Vec<f64>>, pairs: Vec<(usize, usize, f64)>) -> Result<Self> {
        let dim = check_raw(&features)?;
        for &(a, b, y) in &pairs {
            if a >= features.len() || b >= features.len() {
                return Err(Error::InvalidArgument("pair index out of range".into()));
            }
            if y != 1.0 && y != -1.0 {
                return Err(Error::InvalidArgument("pair label must be +1 or -1".into()));
            }
        }
        Ok(ComparativeHinge { dim, features, pairs })
    }

    /// `(y, ŷ)` for pair `i` under `head`; the bias cancels and is not added.
    pub fn margin_inputs(&self, head: &ScoringHead, i: usize) -> (f64, f64) {
        let (a, b, y) = self.pairs[i];
        (y, dot(&head.w, &self.features[a]) - dot(&head.w, &self.features[b]))
    }
}

fn check_raw(features: &[Vec<f64>]) -> Result<usize> {
    let dim = features.first().map(Vec::len).unwrap_or(0);
    if features.iter().any(|f| f.len() != dim) {
        return Err(Error::InvalidArgument("ragged feature vectors".into()));
    }
    Ok(dim)
}

impl Objective for ComparativeHinge {
    fn dim(&self) -> usize {
        self.dim
    }

    fn len(&self) -> usize {
        self.pairs.len()
    }

    fn trains_bias(&self) -> bool {
        false
    }

    fn batch(&self, head: &ScoringHead, batch: &[usize], mut grad: Option<(&mut [f64], &mut f64)>) -> f64 {
        reset(&mut grad);
        if batch.is_empty() {
            return 0.0;
        }
        let mut total = 0.0;
        for &i in batch {
            let (y, y_hat) = self.margin_inputs(head, i);
            let loss = hinge_loss(y, y_hat);
            total += loss;
            if let (Some((gw, _)), true) = (&mut grad, 1.0 - y * y_hat > 0.0) {
                let (a, b, _) = self.pairs[i];
                for ((g, xa), xb) in gw.iter_mut().zip(&self.features[a]).zip(&self.features[b]) {
                    *g -= y * (xa - xb);
                }
            }
        }
        let inv = 1.0 / batch.len() as f64;
        scale(&mut grad, inv);
        total * inv
    }
}

/// Mean absolute error against story points.
#[derive(Debug, Clone)]
pub struct MaeRegression {
    dim: usize,
    features: Vec<Vec<f64>>,
    targets: Vec<f64>,
}

impl MaeRegression {
    pub fn new(items: &[BacklogItem], emb: &EmbeddingMatrix) -> Result<Self> {
        let mut features = Vec::with_capacity(items.len());
        let mut targets = Vec::with_capacity(items.len());
        for item in items {
            let sp = item
                .sp()
                .ok_or_else(|| Error::Validation(format!("item {:?} has no story point", item.id)))?;
            features.push(emb.require(&item.id)?.to_vec());
            targets.push(sp);
        }
        Ok(MaeRegression {
            dim: emb.dim(),
            features,
            targets,
        })
    }

    pub fn from_raw(features: Vec<Vec<f64>>, targets: Vec<f64>) -> Result<Self> {
        let dim = check_raw(&features)?;
        if features.len() != targets.len() {
            return Err(Error::DimensionMismatch {
                expected: features.len(),
                got: targets.len(),
            });
        }
        Ok(MaeRegression { dim, features, targets })
    }

    pub fn residual(&self, head: &ScoringHead, i: usize) -> f64 {
        self.targets[i] - (dot(&head.w, &self.features[i]) + head.b)
    }
}

impl Objective for MaeRegression {
    fn dim(&self) -> usize {
        self.dim
    }

    fn len(&self) -> usize {
        self.targets.len()
    }

    fn trains_bias(&self) -> bool {
        true
    }

    fn batch(&self, head: &ScoringHead, batch: &[usize], mut grad: Option<(&mut [f64], &mut f64)>) -> f64 {
        reset(&mut grad);
        if batch.is_empty() {
            return 0.0;
        }
        let mut total = 0.0;
        for &i in batch {
            let r = self.residual(head, i);
            total += r.abs();
            let sign = if r > 0.0 {
                1.0
            } else if r < 0.0 {
                -1.0
            } else {
                0.0
            };
            if let (Some((gw, gb)), true) = (&mut grad, sign != 0.0) {
                for (g, x) in gw.iter_mut().zip(&self.features[i]) {
                    *g -= sign * x;
                }
                **gb -= sign;
            }
        }
        let inv = 1.0 / batch.len() as f64;
        scale(&mut grad, inv);
        total * inv
    }
}

/// Linear SVM on difference features `d = x_a - x_b`, with penalty
/// `l2·‖w‖²` added to every batch mean. No bias.
#[derive(Debug, Clone)]
pub struct SvmDifference {
    dim: usize,
    diffs: Vec<Vec<f64>>,
    labels: Vec<f64>,
    l2: f64,
}

impl SvmDifference {
    pub fn new(pairs: &[ComparativePair], emb: &EmbeddingMatrix, l2: f64) -> Result<Self> {
        let mut diffs = Vec::with_capacity(pairs.len());
        let mut labels = Vec::with_capacity(pairs.len());
        for p in pairs {
            let (a, b) = (emb.require(&p.a)?, emb.require(&p.b)?);
            diffs.push(a.iter().zip(b).map(|(x, y)| x - y).collect());
            labels.push(p.y.as_f64());
        }
        Ok(SvmDifference {
            dim: emb.dim(),
            diffs,
            labels,
            l2,
        })
    }

    pub fn from_raw(diffs: Vec<Vec<f64>>, labels: Vec<f64>, l2: f64) -> Result<Self> {
        let dim = check_raw(&diffs)?;
        if diffs.len() != labels.len() {
            return Err(Error::DimensionMismatch {
                expected: diffs.len(),
                got: labels.len(),
            });
        }
        Ok(SvmDifference { dim, diffs, labels, l2 })
    }
}

impl Objective for SvmDifference {
    fn dim(&self) -> usize {
        self.dim
    }

    fn len(&self) -> usize {
        self.labels.len()
    }

    fn trains_bias(&self) -> bool {
        false
    }

    fn batch(&self, head: &ScoringHead, batch: &[usize], mut grad: Option<(&mut [f64], &mut f64)>) -> f64 {
        reset(&mut grad);
        let mut total = 0.0;
        for &i in batch {
            let y = self.labels[i];
            let d = &self.diffs[i];
            let margin = y * dot(&head.w, d);
            total += (1.0 - margin).max(0.0);
            if let (Some((gw, _)), true) = (&mut grad, margin < 1.0) {
                for (g, x) in gw.iter_mut().zip(d) {
                    *g -= y * x;
                }
            }
        }
        let mean = if batch.is_empty() {
            0.0
        } else {
            let inv = 1.0 / batch.len() as f64;
            scale(&mut grad, inv);
            total * inv
        };
        if let Some((gw, _)) = &mut grad {
            for (g, w) in gw.iter_mut().zip(&head.w) {
                *g += 2.0 * self.l2 * w;
            }
        }
        mean + self.l2 * dot(&head.w, &head.w)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn comparative_subgradient_by_hand() {
        let obj = ComparativeHinge::from_raw(
            vec![vec![1.0, 0.0], vec![0.0, 2.0]],
            vec![(0, 1, 1.0), (1, 0, 1.0)],
        )
        .unwrap();
        let head = ScoringHead { w: vec![0.5, 0.0], b: 3.0 };
        let mut gw = vec![9.0; 2];
        let mut gb = 9.0;
        // pair 0: ŷ = 0.5 → loss 0.5, grad -(1,-2); pair 1: ŷ = -0.5 → loss 1.5, grad -(-1,2)
        let loss = obj.batch(&head, &[0, 1], Some((&mut gw, &mut gb)));
        assert_eq!(loss, 1.0);
        assert_eq!(gw, [0.0, 0.0]);
        assert_eq!(gb, 0.0);
        let loss = obj.batch(&head, &[0], Some((&mut gw, &mut gb)));
        assert_eq!((loss, gw.as_slice()), (0.5, [-1.0, 2.0].as_slice()));
    }

    #[test]
    fn satisfied_margin_has_zero_gradient() {
        let obj = ComparativeHinge::from_raw(vec![vec![2.0], vec![0.0]], vec![(0, 1, 1.0)]).unwrap();
        let head = ScoringHead { w: vec![1.0], b: 0.0 };
        let mut gw = vec![0.0];
        let mut gb = 0.0;
        assert_eq!(obj.batch(&head, &[0], Some((&mut gw, &mut gb))), 0.0);
        assert_eq!(gw, [0.0]);
    }

    #[test]
    fn mae_subgradient_by_hand() {
        let obj = MaeRegression::from_raw(vec![vec![1.0], vec![2.0]], vec![3.0, 0.0]).unwrap();
        let head = ScoringHead { w: vec![1.0], b: 0.0 };
        let mut gw = vec![0.0];
        let mut gb = 0.0;
        // residuals 2 and -2
        let loss = obj.batch(&head, &[0, 1], Some((&mut gw, &mut gb)));
        assert_eq!(loss, 2.0);
        assert_eq!(gw, [(-1.0 + 2.0) / 2.0]);
        assert_eq!(gb, 0.0);
        // at the kink the subgradient is 0
        let obj = MaeRegression::from_raw(vec![vec![1.0]], vec![1.0]).unwrap();
        assert_eq!(obj.batch(&head, &[0], Some((&mut gw, &mut gb))), 0.0);
        assert_eq!((gw[0], gb), (0.0, 0.0));
    }

    #[test]
    fn svm_zero_difference_and_reversal() {
        let obj = SvmDifference::from_raw(vec![vec![0.0, 0.0]], vec![1.0], 0.0).unwrap();
        let head = ScoringHead { w: vec![0.7, -0.2], b: 0.0 };
        let mut gw = vec![0.0; 2];
        let mut gb = 0.0;
        assert_eq!(obj.batch(&head, &[0], Some((&mut gw, &mut gb))), 1.0);
        assert_eq!(gw, [0.0, 0.0]);

        let fwd = SvmDifference::from_raw(vec![vec![0.3, 1.0]], vec![1.0], 0.0).unwrap();
        let rev = SvmDifference::from_raw(vec![vec![-0.3, -1.0]], vec![-1.0], 0.0).unwrap();
        assert_eq!(fwd.mean_loss(&head), rev.mean_loss(&head));
    }

    #[test]
    fn svm_penalty_enters_loss_and_gradient() {
        let obj = SvmDifference::from_raw(vec![vec![10.0]], vec![1.0], 0.5).unwrap();
        let head = ScoringHead { w: vec![2.0], b: 0.0 };
        let mut gw = vec![0.0];
        let mut gb = 0.0;
        let loss = obj.batch(&head, &[0], Some((&mut gw, &mut gb)));
        assert_eq!(loss, 0.5 * 4.0);
        assert_eq!(gw, [2.0 * 0.5 * 2.0]);
    }

    #[test]
    fn constructors_check_inputs() {
        assert!(ComparativeHinge::from_raw(vec![vec![1.0]], vec![(0, 3, 1.0)]).is_err());
        assert!(ComparativeHinge::from_raw(vec![vec![1.0], vec![2.0]], vec![(0, 1, 0.0)]).is_err());
        assert!(MaeRegression::from_raw(vec![vec![1.0], vec![1.0, 2.0]], vec![1.0, 2.0]).is_err());
        assert!(SvmDifference::from_raw(vec![vec![1.0]], vec![], 0.0).is_err());
    }
}
