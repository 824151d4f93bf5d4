//! Mini-batch training, evaluation and finite-difference gradient checking.

mod gradcheck;
mod optimizer;

use std::time::Instant;

pub use gradcheck::{
    grad_check, grad_check_model, GradCheckInstance, GradCheckOptions, GradCheckReport, GroupError,
    GRAD_CHECK_STEP, GRAD_CHECK_TOLERANCE,
};
pub use optimizer::{optimizer_step, Optimizer, OptimizerState};

use crate::data::{make_batches, Batch, Example};
use crate::error::{Error, Result};
use crate::metrics::{example_logloss, EvalMetrics, MetricAccumulator};
use crate::models::{CtrModel, Gradients};
use crate::numeric::{sigmoid, SeededRng};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub optimizer: Optimizer,
    pub l2: f64,
    pub seed: u64,
    /// Epochs without validation improvement before stopping; 0 disables.
    pub early_stop_patience: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            epochs: 10,
            batch_size: 256,
            optimizer: Optimizer::adam_default(),
            l2: 1e-6,
            seed: 42,
            early_stop_patience: 2,
        }
    }
}

impl TrainConfig {
    // Negated comparisons deliberately reject NaN as well as out-of-range values.
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidConfig("learning rate must be finite and non-negative".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidConfig("batch size must be at least 1".into()));
        }
        if !(self.l2 >= 0.0) {
            return Err(Error::InvalidConfig("l2 must be non-negative".into()));
        }
        if let Optimizer::Adam { beta1, beta2, eps } = self.optimizer {
            if !(0.0..1.0).contains(&beta1) || !(0.0..1.0).contains(&beta2) || !(eps > 0.0) {
                return Err(Error::InvalidConfig("adam needs 0 <= beta < 1 and eps > 0".into()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_logloss: f64,
    pub valid_logloss: f64,
    pub valid_auc: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub epochs: Vec<EpochRecord>,
    /// Index into `epochs` of the parameters that were returned.
    pub best_epoch: usize,
    pub wall_seconds: f64,
}

impl TrainReport {
    pub fn best(&self) -> &EpochRecord {
        &self.epochs[self.best_epoch]
    }
}

/// Probability and label for every example.
pub fn evaluate<M: CtrModel>(model: &M, examples: &[Example]) -> Result<EvalMetrics> {
    let mut acc = MetricAccumulator::with_capacity(examples.len());
    for ex in examples {
        acc.push(model.probability(ex)?, ex.label);
    }
    acc.finish()
}

/// Mean logloss over `batch` and its gradient, accumulated into `grads`.
pub fn batch_gradient<M: CtrModel>(
    model: &M,
    examples: &[Example],
    batch: &Batch,
    grads: &mut Gradients,
) -> Result<f64> {
    grads.clear();
    let scale = 1.0 / batch.len() as f64;
    let mut loss = 0.0;
    for &i in &batch.indices {
        let ex = &examples[i];
        let trace = model.forward(ex)?;
        let p = sigmoid(M::trace_logit(&trace));
        loss += example_logloss(p, ex.label);
        model.backward(ex, &trace, (p - f64::from(ex.label)) * scale, grads)?;
    }
    Ok(loss * scale)
}

/// Trains `model` in place and leaves it holding the best-validation parameters.
pub fn fit<M: CtrModel>(
    model: &mut M,
    train: &[Example],
    valid: &[Example],
    config: &TrainConfig,
) -> Result<TrainReport> {
    config.validate()?;
    if train.is_empty() || valid.is_empty() {
        return Err(Error::EmptyDataset);
    }
    for ex in train.iter().chain(valid) {
        ex.check_schema(model.schema())?;
    }
    let start = Instant::now();
    let layout = model.layout();
    let mut state = OptimizerState::new(&config.optimizer, &layout);
    let mut grads = Gradients::zeros(&layout);
    let mut shuffle_rng = SeededRng::new(config.seed).fork();

    let mut epochs = Vec::with_capacity(config.epochs);
    let mut best: Option<(usize, f64, M)> = None;
    let mut since_best = 0;

    for epoch in 0..config.epochs {
        for (b, batch) in make_batches(train.len(), config.batch_size, &mut shuffle_rng, true)?
            .iter()
            .enumerate()
        {
            let loss = batch_gradient(model, train, batch, &mut grads)?;
            if !loss.is_finite() {
                return Err(Error::Diverged { epoch, batch: b });
            }
            let mut params = model.slots_mut();
            optimizer_step(
                &mut params,
                &layout,
                &grads,
                &mut state,
                &config.optimizer,
                config.learning_rate,
                config.l2,
            )
            .map_err(|e| match e {
                Error::NonFiniteGradient { .. } => Error::Diverged { epoch, batch: b },
                other => other,
            })?;
        }

        let train_metrics = evaluate(model, train)?;
        let valid_metrics = evaluate(model, valid)?;
        if !train_metrics.logloss.is_finite() || !valid_metrics.logloss.is_finite() {
            return Err(Error::Diverged {
                epoch,
                batch: usize::MAX,
            });
        }
        epochs.push(EpochRecord {
            epoch,
            train_logloss: train_metrics.logloss,
            valid_logloss: valid_metrics.logloss,
            valid_auc: valid_metrics.auc,
        });

        let improved = best
            .as_ref()
            .is_none_or(|(_, loss, _)| valid_metrics.logloss < *loss);
        if improved {
            best = Some((epochs.len() - 1, valid_metrics.logloss, model.clone()));
            since_best = 0;
        } else {
            since_best += 1;
            if config.early_stop_patience > 0 && since_best >= config.early_stop_patience {
                break;
            }
        }
    }

    let best_epoch = match best {
        Some((idx, _, params)) => {
            *model = params;
            idx
        }
        None => {
            return Err(Error::InvalidConfig("training needs at least one epoch".into()));
        }
    };
    Ok(TrainReport {
        epochs,
        best_epoch,
        wall_seconds: start.elapsed().as_secs_f64(),
    })
}
