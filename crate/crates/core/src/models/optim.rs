use super::{OptimizerKind, ScoringHead, TrainConfig};

/// Per-epoch exponential interpolation from `lr_start` (first epoch) to
/// `lr_end` (last epoch).
pub fn learning_rate(config: &TrainConfig, epoch: usize) -> f64 {
    if config.max_epochs <= 1 {
        return config.lr_start;
    }
    let t = epoch as f64 / (config.max_epochs - 1) as f64;
    config.lr_start * (config.lr_end / config.lr_start).powf(t)
}

#[derive(Debug, Clone)]
pub enum Optimizer {
    Sgd,
    Adam {
        beta1: f64,
        beta2: f64,
        epsilon: f64,
        step: i32,
        m: Vec<f64>,
        v: Vec<f64>,
    },
}

impl Optimizer {
    /// State for `dim` weights plus the bias.
    pub fn new(config: &TrainConfig, dim: usize) -> Self {
        match config.optimizer {
            OptimizerKind::Sgd => Optimizer::Sgd,
            OptimizerKind::Adam => Optimizer::Adam {
                beta1: config.adam_beta1,
                beta2: config.adam_beta2,
                epsilon: config.adam_epsilon,
                step: 0,
                m: vec![0.0; dim + 1],
                v: vec![0.0; dim + 1],
            },
        }
    }

    /// Apply one update. The bias is left untouched unless `update_bias`.
    pub fn step(&mut self, head: &mut ScoringHead, grad_w: &[f64], grad_b: f64, lr: f64, update_bias: bool) {
        match self {
            Optimizer::Sgd => {
                for (w, g) in head.w.iter_mut().zip(grad_w) {
                    *w -= lr * g;
                }
                if update_bias {
                    head.b -= lr * grad_b;
                }
            }
            Optimizer::Adam {
                beta1,
                beta2,
                epsilon,
                step,
                m,
                v,
            } => {
                *step += 1;
                let c1 = 1.0 - beta1.powi(*step);
                let c2 = 1.0 - beta2.powi(*step);
                let dim = head.w.len();
                let params = head.w.iter_mut().chain(update_bias.then_some(&mut head.b));
                let grads = grad_w.iter().copied().chain(std::iter::once(grad_b));
                for (i, (p, g)) in params.zip(grads).enumerate() {
                    m[i] = *beta1 * m[i] + (1.0 - *beta1) * g;
                    v[i] = *beta2 * v[i] + (1.0 - *beta2) * g * g;
                    let m_hat = m[i] / c1;
                    let v_hat = v[i] / c2;
                    *p -= lr * m_hat / (v_hat.sqrt() + *epsilon);
                }
                debug_assert!(m.len() == dim + 1);
            }
        }
    }
}
