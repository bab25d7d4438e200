use ndarray::{s, Array1, Array3, ArrayView3, Axis};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{huber_loss, AdamConfig, AdamState, LstmRegressor, Pooling, DEFAULT_FC_DIM, DEFAULT_HIDDEN_DIM};
use crate::dataset::pearson;
use crate::error::{invalid, Error, Result};
use crate::rng::{derive_seed, stream};

/// Rows per forward pass when only predictions are needed.
const PREDICT_CHUNK: usize = 500;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub huber_delta: f64,
    pub adam: AdamConfig,
    pub hidden_dim: usize,
    pub fc_dim: usize,
    pub pooling: Pooling,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 200,
            batch_size: 1000,
            huber_delta: 1.0,
            adam: AdamConfig::default(),
            hidden_dim: DEFAULT_HIDDEN_DIM,
            fc_dim: DEFAULT_FC_DIM,
            pooling: Pooling::Concat,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self, train_len: usize) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 || self.hidden_dim == 0 || self.fc_dim == 0 {
            return Err(invalid("epochs, batch size and layer widths must be positive"));
        }
        if !(self.huber_delta > 0.0) || !(self.adam.lr > 0.0) {
            return Err(invalid("huber delta and learning rate must be positive"));
        }
        if self.batch_size > train_len {
            return Err(invalid(format!(
                "batch size {} exceeds the {train_len} training examples",
                self.batch_size
            )));
        }
        Ok(())
    }
}

/// Encoded feature sequences (`N × T × input_dim`) with their targets.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSet {
    pub features: Array3<f64>,
    pub targets: Array1<f64>,
}

impl TrainingSet {
    pub fn new(features: Array3<f64>, targets: Array1<f64>) -> Result<Self> {
        if features.len_of(Axis(0)) != targets.len() {
            return Err(Error::Shape(format!(
                "{} feature rows for {} targets",
                features.len_of(Axis(0)),
                targets.len()
            )));
        }
        Ok(TrainingSet { features, targets })
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochStats {
    /// Mean per-example Huber loss, each batch evaluated before its update.
    pub mean_loss: f64,
    pub steps: usize,
    /// The same pre-update predictions, in dataset order.
    pub predictions: Vec<f64>,
}

/// One pass over `data` in a shuffled order seeded by `(config.seed, epoch)`,
/// one Adam step per batch of mean Huber loss. The last batch may be short.
pub fn train_epoch(
    model: &mut LstmRegressor,
    adam: &mut AdamState,
    data: &TrainingSet,
    config: &TrainConfig,
    epoch: usize,
) -> Result<EpochStats> {
    if data.is_empty() {
        return Err(invalid("no training examples"));
    }
    if config.batch_size == 0 {
        return Err(invalid("batch size must be positive"));
    }
    let mut order: Vec<usize> = (0..data.len()).collect();
    order.shuffle(&mut stream(derive_seed(config.seed, epoch as u64)));

    let mut predictions = vec![0.0; data.len()];
    let mut loss_sum = 0.0;
    let mut steps = 0;
    for batch in order.chunks(config.batch_size) {
        let x = data.features.select(Axis(0), batch);
        let (y, cache) = model.forward_batch(x.view())?;
        let scale = 1.0 / batch.len() as f64;
        let mut dloss = Vec::with_capacity(batch.len());
        for (&idx, &pred) in batch.iter().zip(y.iter()) {
            let (loss, grad) = huber_loss(pred, data.targets[idx], config.huber_delta);
            loss_sum += loss;
            dloss.push(grad * scale);
            predictions[idx] = pred;
        }
        let grads = model.backward(&cache, &dloss)?;
        adam.step(model, &grads)?;
        steps += 1;
    }
    Ok(EpochStats {
        mean_loss: loss_sum / data.len() as f64,
        steps,
        predictions,
    })
}

/// Raw model outputs plus the same values clamped to `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Predictions {
    pub raw: Vec<f64>,
    pub clamped: Vec<f64>,
}

pub fn predict_batch(model: &LstmRegressor, features: ArrayView3<f64>) -> Result<Predictions> {
    let n = features.len_of(Axis(0));
    let mut raw = Vec::with_capacity(n);
    let mut start = 0;
    while start < n {
        let end = (start + PREDICT_CHUNK).min(n);
        raw.extend(model.predict(features.slice(s![start..end, .., ..]))?);
        start = end;
    }
    let clamped = raw.iter().map(|v| v.clamp(0.0, 1.0)).collect();
    Ok(Predictions { raw, clamped })
}

/// Mean Huber loss of raw predictions.
pub fn mean_huber(predictions: &[f64], targets: &[f64], delta: f64) -> f64 {
    predictions
        .iter()
        .zip(targets)
        .map(|(&p, &t)| huber_loss(p, t, delta).0)
        .sum::<f64>()
        / predictions.len() as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub eval_loss: f64,
    /// NaN when the correlation is undefined (constant predictions).
    pub train_pc: f64,
    pub eval_pc: f64,
}

#[derive(Debug, Clone)]
pub struct FitResult {
    pub best: LstmRegressor,
    pub best_epoch: usize,
    pub best_eval_loss: f64,
    pub log: Vec<EpochLog>,
}

/// Runs `config.epochs` epochs and keeps the parameters with the lowest
/// `eval` loss (earliest epoch on ties). `on_epoch` sees each log row and
/// the parameters after that epoch.
pub fn fit(
    mut model: LstmRegressor,
    train: &TrainingSet,
    eval: &TrainingSet,
    config: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochLog, &LstmRegressor),
) -> Result<FitResult> {
    config.validate(train.len())?;
    if eval.is_empty() {
        return Err(invalid("no evaluation examples"));
    }
    let mut adam = AdamState::new(&model, config.adam);
    let train_targets = train.targets.to_vec();
    let eval_targets = eval.targets.to_vec();
    let mut best: Option<(LstmRegressor, usize, f64)> = None;
    let mut log = Vec::with_capacity(config.epochs);
    for epoch in 1..=config.epochs {
        let stats = train_epoch(&mut model, &mut adam, train, config, epoch)?;
        let eval_pred = predict_batch(&model, eval.features.view())?;
        let eval_loss = mean_huber(&eval_pred.raw, &eval_targets, config.huber_delta);
        let row = EpochLog {
            epoch,
            train_loss: stats.mean_loss,
            eval_loss,
            train_pc: pearson(&train_targets, &stats.predictions).unwrap_or(f64::NAN),
            eval_pc: pearson(&eval_targets, &eval_pred.raw).unwrap_or(f64::NAN),
        };
        on_epoch(&row, &model);
        log.push(row);
        if best.as_ref().is_none_or(|(_, _, l)| eval_loss < *l) {
            best = Some((model.clone(), epoch, eval_loss));
        }
    }
    let (best, best_epoch, best_eval_loss) = best.expect("at least one epoch");
    Ok(FitResult {
        best,
        best_epoch,
        best_eval_loss,
        log,
    })
}
