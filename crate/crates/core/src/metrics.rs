//! Pearson, Spearman (tie-corrected) and MAE.
//!
//! Spearman is computed as the Pearson correlation of average ranks. Without
//! ties this equals `1 - 6 Σd² / (n(n² - 1))`; with ties it is the standard
//! correction, which matters here because story points tie heavily.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvaluationResult {
    pub pearson: Option<f64>,
    pub spearman: Option<f64>,
    pub mae: Option<f64>,
    pub n: usize,
}

/// Average ranks, 1-based, smallest value first. Ties share the mean of the
/// positions they occupy.
pub fn fractional_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&i, &j| values[i].total_cmp(&values[j]));
    let mut ranks = vec![0.0; values.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && values[order[end]] == values[order[start]] {
            end += 1;
        }
        // positions start+1 ..= end
        let rank = (start + 1 + end) as f64 / 2.0;
        for &i in &order[start..end] {
            ranks[i] = rank;
        }
        start = end;
    }
    ranks
}

fn check_pair(pred: &[f64], truth: &[f64], min_len: usize) -> Result<()> {
    if pred.len() != truth.len() {
        return Err(Error::DimensionMismatch {
            expected: truth.len(),
            got: pred.len(),
        });
    }
    if pred.len() < min_len {
        return Err(Error::InvalidArgument(format!(
            "need at least {min_len} values, got {}",
            pred.len()
        )));
    }
    Ok(())
}

fn is_constant(values: &[f64]) -> bool {
    values.iter().all(|&v| v == values[0])
}

pub fn pearson(pred: &[f64], truth: &[f64]) -> Result<f64> {
    check_pair(pred, truth, 2)?;
    if is_constant(pred) {
        return Err(Error::UndefinedCorrelation("predictions have zero variance"));
    }
    if is_constant(truth) {
        return Err(Error::UndefinedCorrelation("ground truth has zero variance"));
    }
    let n = pred.len() as f64;
    let mean_p = pred.iter().sum::<f64>() / n;
    let mean_t = truth.iter().sum::<f64>() / n;
    let (mut cov, mut var_p, mut var_t) = (0.0, 0.0, 0.0);
    for (&p, &t) in pred.iter().zip(truth) {
        let dp = p - mean_p;
        let dt = t - mean_t;
        cov += dp * dt;
        var_p += dp * dp;
        var_t += dt * dt;
    }
    let r = cov / (var_p * var_t).sqrt();
    Ok(r.clamp(-1.0, 1.0))
}

pub fn spearman(pred: &[f64], truth: &[f64]) -> Result<f64> {
    check_pair(pred, truth, 2)?;
    pearson(&fractional_ranks(pred), &fractional_ranks(truth))
}

pub fn mae(pred: &[f64], truth: &[f64]) -> Result<f64> {
    check_pair(pred, truth, 1)?;
    let total: f64 = pred.iter().zip(truth).map(|(p, t)| (t - p).abs()).sum();
    Ok(total / pred.len() as f64)
}

/// All three metrics; an undefined correlation becomes `None`.
pub fn evaluate(pred: &[f64], truth: &[f64], with_mae: bool) -> Result<EvaluationResult> {
    check_pair(pred, truth, 1)?;
    let undefined_ok = |r: Result<f64>| match r {
        Ok(v) => Ok(Some(v)),
        Err(Error::UndefinedCorrelation(_)) | Err(Error::InvalidArgument(_)) => Ok(None),
        Err(e) => Err(e),
    };
    Ok(EvaluationResult {
        pearson: undefined_ok(pearson(pred, truth))?,
        spearman: undefined_ok(spearman(pred, truth))?,
        mae: if with_mae { Some(mae(pred, truth)?) } else { None },
        n: pred.len(),
    })
}
