use super::objective::{ComparativeHinge, MaeRegression, Objective, SvmDifference};
use super::optim::{learning_rate, Optimizer};
use super::{EpochRecord, LossKind, ScoringHead, TrainConfig, TrainedModel};
use crate::dataset::BacklogItem;
use crate::error::{Error, Result};
use crate::features::EmbeddingMatrix;
use crate::pairing::ComparativePair;
use crate::rng::SeededRng;

/// Minibatch training from a zero head.
///
/// Each epoch shuffles the examples with the config seed, steps once per
/// batch (the last batch may be short) and then records the full training
/// loss. With early stopping, `validation` is scored after every epoch and
/// after initialization; training stops once `patience` epochs pass without
/// a strict improvement, and the head with the lowest validation loss is
/// returned.
pub fn train(
    objective: &dyn Objective,
    validation: Option<&dyn Objective>,
    config: &TrainConfig,
) -> Result<TrainedModel> {
    config.validate()?;
    if config.early_stopping.is_some() && validation.is_none() {
        return Err(Error::InvalidArgument(
            "early stopping needs a validation set".into(),
        ));
    }
    if let Some(val) = validation {
        if val.dim() != objective.dim() {
            return Err(Error::DimensionMismatch {
                expected: objective.dim(),
                got: val.dim(),
            });
        }
    }

    let dim = objective.dim();
    let mut head = ScoringHead::zeros(dim);
    let mut optimizer = Optimizer::new(config, dim);
    let mut rng = SeededRng::new(config.seed);
    let mut order: Vec<usize> = (0..objective.len()).collect();
    let mut grad_w = vec![0.0; dim];
    let mut grad_b = 0.0;
    let mut history = Vec::with_capacity(config.max_epochs);

    let monitor = config.early_stopping.and(validation);
    let mut best = monitor.map(|val| (val.mean_loss(&head), head.clone(), 0usize));
    let mut stale = 0usize;

    for epoch in 0..config.max_epochs {
        let lr = learning_rate(config, epoch);
        rng.shuffle(&mut order);
        for batch in order.chunks(config.batch_size) {
            objective.batch(&head, batch, Some((&mut grad_w, &mut grad_b)));
            optimizer.step(&mut head, &grad_w, grad_b, lr, objective.trains_bias());
        }
        let train_loss = objective.mean_loss(&head);
        let val_loss = validation.map(|val| val.mean_loss(&head));
        history.push(EpochRecord {
            epoch: epoch + 1,
            lr,
            train_loss,
            val_loss,
        });

        if let (Some((best_loss, best_head, best_epoch)), Some(loss)) = (&mut best, val_loss) {
            if loss < *best_loss {
                *best_loss = loss;
                *best_head = head.clone();
                *best_epoch = epoch + 1;
                stale = 0;
            } else {
                stale += 1;
                let patience = config.early_stopping.map(|e| e.patience).unwrap_or(usize::MAX);
                if stale >= patience {
                    break;
                }
            }
        }
    }

    let (head, best_epoch) = match best {
        Some((_, best_head, best_epoch)) => (best_head, best_epoch),
        None => (head, history.len()),
    };
    if !head.is_finite() {
        return Err(Error::Validation("training diverged to non-finite weights".into()));
    }
    Ok(TrainedModel {
        head,
        config: config.clone(),
        history,
        best_epoch,
    })
}

fn expect_loss(config: &TrainConfig, loss: LossKind) -> Result<()> {
    if config.loss != loss {
        return Err(Error::InvalidArgument(format!(
            "config loss is {:?}, expected {:?}",
            config.loss, loss
        )));
    }
    Ok(())
}

/// Comparative learning on judged pairs, optionally early-stopped on
/// validation pairs.
pub fn train_comparative(
    pairs: &[ComparativePair],
    emb: &EmbeddingMatrix,
    val_pairs: Option<&[ComparativePair]>,
    config: &TrainConfig,
) -> Result<TrainedModel> {
    expect_loss(config, LossKind::HingeComparative)?;
    if config.early_stopping.is_some() && val_pairs.is_none() {
        return Err(Error::InvalidArgument(
            "early stopping needs validation pairs".into(),
        ));
    }
    let objective = ComparativeHinge::new(pairs, emb)?;
    let validation = val_pairs.map(|v| ComparativeHinge::new(v, emb)).transpose()?;
    train(&objective, validation.as_ref().map(|v| v as &dyn Objective), config)
}

/// MAE regression on story points; every item must be labeled.
pub fn train_regression(items: &[BacklogItem], emb: &EmbeddingMatrix, config: &TrainConfig) -> Result<TrainedModel> {
    expect_loss(config, LossKind::MaeRegression)?;
    let objective = MaeRegression::new(items, emb)?;
    train(&objective, None, config)
}

/// Linear SVM on pair differences. Item scores are `w·x` because
/// `w·(x_a - x_b) = w·x_a - w·x_b`.
pub fn train_svm_comparative(
    pairs: &[ComparativePair],
    emb: &EmbeddingMatrix,
    config: &TrainConfig,
) -> Result<TrainedModel> {
    expect_loss(config, LossKind::HingeSvmDifference)?;
    if config.early_stopping.is_some() {
        return Err(Error::InvalidArgument(
            "the difference SVM trains without a validation set".into(),
        ));
    }
    let objective = SvmDifference::new(pairs, emb, config.l2_penalty)?;
    train(&objective, None, config)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{Split, StoryPoint};
    use crate::models::{score, OptimizerKind};
    use crate::pairing::{simulate_pairs, Judgment};

    fn one_d(values: &[f64]) -> (Vec<BacklogItem>, EmbeddingMatrix) {
        let mut emb = EmbeddingMatrix::new(1).unwrap();
        let items = values
            .iter()
            .enumerate()
            .map(|(i, &v)| {
                let id = format!("i{i}");
                emb.insert(&id, vec![v]).unwrap();
                BacklogItem {
                    id,
                    title: String::new(),
                    description: String::new(),
                    story_point: Some(StoryPoint::integer(i as i64 + 1)),
                    split: Split::Train,
                }
            })
            .collect();
        (items, emb)
    }

    #[test]
    fn zero_epochs_returns_initialization() {
        let (items, emb) = one_d(&[0.1, 0.2, 0.3]);
        let pairs = simulate_pairs(&items, 1, 0).unwrap().pairs;
        let config = TrainConfig::comparative_no_validation().with_max_epochs(0);
        let model = train_comparative(&pairs, &emb, None, &config).unwrap();
        assert_eq!(model.head, ScoringHead::zeros(1));
        assert!(model.history.is_empty());
        assert_eq!(model.best_epoch, 0);
        let model = train_regression(&items, &emb, &TrainConfig::regression().with_max_epochs(0)).unwrap();
        assert_eq!(model.head, ScoringHead::zeros(1));
    }

    #[test]
    fn separable_one_dimensional_pairs_reach_zero_hinge() {
        // true score s_i = x_i, spaced 0.1 apart
        let xs: Vec<f64> = (0..20).map(|i| i as f64 * 0.1).collect();
        let (items, emb) = one_d(&xs);
        let pairs = simulate_pairs(&items, 2, 5).unwrap().pairs;
        let objective = ComparativeHinge::new(&pairs, &emb).unwrap();
        // oracle: with w* = 11 every |Δx| ≥ 0.1 gives margin ≥ 1.1
        let star = ScoringHead { w: vec![11.0], b: 0.0 };
        assert_eq!(objective.mean_loss(&star), 0.0);

        let mut config = TrainConfig::comparative_no_validation();
        config.lr_start = 1.0;
        config.lr_end = 0.01;
        let model = train_comparative(&pairs, &emb, None, &config).unwrap();
        assert!(model.history.len() <= 100);
        let final_loss = model.history.last().unwrap().train_loss;
        assert!(final_loss < 0.01, "final loss {final_loss}");
        assert_eq!(model.head.b, 0.0);
    }

    #[test]
    fn bias_is_frozen_for_comparative_training() {
        let xs: Vec<f64> = (0..30).map(|i| ((i * 37) % 11) as f64 / 7.0).collect();
        let (items, emb) = one_d(&xs);
        let pairs = simulate_pairs(&items, 3, 1).unwrap().pairs;
        for optimizer in [OptimizerKind::Adam, OptimizerKind::Sgd] {
            let mut config = TrainConfig::comparative_no_validation().with_seed(4);
            config.optimizer = optimizer;
            let model = train_comparative(&pairs, &emb, None, &config).unwrap();
            assert_eq!(model.head.b.to_bits(), 0.0f64.to_bits());
        }
    }

    #[test]
    fn regression_moves_bias_to_lone_target() {
        // zero feature: only b matters and loss |sp - b| is minimized at b = sp
        let mut emb = EmbeddingMatrix::new(3).unwrap();
        emb.insert("only", vec![0.0; 3]).unwrap();
        let items = vec![BacklogItem {
            id: "only".into(),
            title: String::new(),
            description: String::new(),
            story_point: Some(StoryPoint::integer(3)),
            split: Split::Train,
        }];
        let objective = MaeRegression::new(&items, &emb).unwrap();
        let line_search = (0..=600)
            .map(|i| i as f64 * 0.01)
            .min_by(|a, b| {
                let la = objective.mean_loss(&ScoringHead { w: vec![0.0; 3], b: *a });
                let lb = objective.mean_loss(&ScoringHead { w: vec![0.0; 3], b: *b });
                la.total_cmp(&lb)
            })
            .unwrap();
        assert!((line_search - 3.0).abs() < 1e-9);

        let mut config = TrainConfig::regression();
        config.lr_start = 0.05;
        config.lr_end = 0.001;
        let model = train_regression(&items, &emb, &config).unwrap();
        assert!((model.head.b - 3.0).abs() < 0.1, "b = {}", model.head.b);
        assert_eq!(model.head.w, [0.0; 3]);
    }

    #[test]
    fn constant_targets_are_fit() {
        let mut emb = EmbeddingMatrix::new(2).unwrap();
        let mut items = Vec::new();
        for i in 0..12 {
            let id = format!("c{i}");
            emb.insert(&id, vec![(i as f64 * 0.7).sin(), (i as f64 * 1.3).cos()]).unwrap();
            items.push(BacklogItem {
                id,
                title: String::new(),
                description: String::new(),
                story_point: Some(StoryPoint::integer(5)),
                split: Split::Train,
            });
        }
        let objective = MaeRegression::new(&items, &emb).unwrap();
        assert_eq!(objective.mean_loss(&ScoringHead { w: vec![0.0; 2], b: 5.0 }), 0.0);
        let mut config = TrainConfig::regression();
        config.lr_start = 0.05;
        config.lr_end = 0.01;
        let model = train_regression(&items, &emb, &config).unwrap();
        for item in &items {
            let pred = score(&model.head, emb.get(&item.id).unwrap()).unwrap();
            assert!((pred - 5.0).abs() < 0.2, "{pred}");
        }
    }

    #[test]
    fn svm_separates_two_dimensional_pairs() {
        let mut emb = EmbeddingMatrix::new(2).unwrap();
        let w_star = [1.0, -2.0];
        let mut items = Vec::new();
        for i in 0..16 {
            let x = vec![(i % 4) as f64, (i / 4) as f64 * 0.3];
            let s = w_star[0] * x[0] + w_star[1] * x[1];
            let id = format!("s{i}");
            emb.insert(&id, x).unwrap();
            items.push((id, s));
        }
        let mut pairs = Vec::new();
        for (i, (a, sa)) in items.iter().enumerate() {
            for (b, sb) in items.iter().skip(i + 1) {
                if sa != sb {
                    let y = if sa > sb { Judgment::AMore } else { Judgment::BMore };
                    pairs.push(ComparativePair::new(a.clone(), b.clone(), y).unwrap());
                }
            }
        }
        // |s_a - s_b| ≥ 0.2 on distinct pairs, so 6·w* has margins ≥ 1.2
        let objective = SvmDifference::new(&pairs, &emb, 0.0).unwrap();
        let star = ScoringHead { w: w_star.iter().map(|w| w * 6.0).collect(), b: 0.0 };
        assert_eq!(objective.mean_loss(&star), 0.0);

        let mut config = TrainConfig::svm_comparative();
        config.l2_penalty = 0.0;
        config.lr_start = 0.2;
        config.lr_end = 0.01;
        config.max_epochs = 200;
        let model = train_svm_comparative(&pairs, &emb, &config).unwrap();
        let final_loss = model.history.last().unwrap().train_loss;
        assert!(final_loss < 0.01, "{final_loss}");
        assert_eq!(model.head.b, 0.0);
    }

    #[test]
    fn early_stopping_needs_validation_and_restores_best() {
        let xs: Vec<f64> = (0..40).map(|i| (i as f64 * 0.37).sin()).collect();
        let (items, emb) = one_d(&xs);
        let pairs = simulate_pairs(&items[..30], 1, 2).unwrap().pairs;
        let val = simulate_pairs(&items[30..], 2, 3).unwrap().pairs;
        let config = TrainConfig::comparative_with_validation();
        assert!(train_comparative(&pairs, &emb, None, &config).is_err());

        let model = train_comparative(&pairs, &emb, Some(&val), &config).unwrap();
        assert!(model.history.len() <= 300);
        let best = model
            .history
            .iter()
            .filter_map(|r| r.val_loss)
            .fold(f64::INFINITY, f64::min);
        if model.best_epoch > 0 {
            assert_eq!(model.history[model.best_epoch - 1].val_loss, Some(best));
            assert!(model.history.len() >= model.best_epoch);
        }
    }

    #[test]
    fn wrong_loss_kind_is_rejected() {
        let (items, emb) = one_d(&[0.0, 1.0]);
        assert!(train_regression(&items, &emb, &TrainConfig::comparative_no_validation()).is_err());
        let pairs = simulate_pairs(&items, 1, 0).unwrap().pairs;
        assert!(train_comparative(&pairs, &emb, None, &TrainConfig::regression()).is_err());
    }

    #[test]
    fn missing_embedding_and_unlabeled_are_errors() {
        let (mut items, emb) = one_d(&[0.0, 1.0]);
        let pairs = vec![ComparativePair::new("i0", "ghost", Judgment::AMore).unwrap()];
        assert!(matches!(
            train_comparative(&pairs, &emb, None, &TrainConfig::comparative_no_validation()),
            Err(Error::MissingEmbedding(_))
        ));
        items[0].story_point = None;
        assert!(train_regression(&items, &emb, &TrainConfig::regression()).is_err());
    }

    #[test]
    fn training_is_deterministic() {
        let xs: Vec<f64> = (0..50).map(|i| (i as f64 * 1.7).cos()).collect();
        let (items, emb) = one_d(&xs);
        let pairs = simulate_pairs(&items, 2, 8).unwrap().pairs;
        let config = TrainConfig::comparative_no_validation().with_seed(3);
        let a = train_comparative(&pairs, &emb, None, &config).unwrap();
        let b = train_comparative(&pairs, &emb, None, &config).unwrap();
        assert_eq!(a, b);
        let first = a.history[0].train_loss;
        let best = a.history.iter().map(|r| r.train_loss).fold(f64::INFINITY, f64::min);
        assert!(best <= first);
    }
}
