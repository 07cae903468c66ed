//! Mini-batch SGD with L2 regularization, learning-rate halving when the
//! dev score drops, and best-on-dev model selection.

mod gradcheck;

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::Sentence;
use crate::crf::LabelSequence;
use crate::error::{Error, Result};
use crate::evaluation::{evaluate_predictions, MetricsReport};
use crate::model::{self, ModelParams, QueryInput};
use crate::querygen::{QuerySet, Setup};

pub use gradcheck::{
    check_gradients, grad_check, grad_check_model, Differentiable, GradCheckConfig, GradCheckReport, TensorCheck,
};

/// Learning rates below this end training.
pub const MIN_LR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub lr: f64,
    pub l2: f64,
    pub max_epochs: usize,
    pub seed: u64,
    /// Probability of keeping a negative query in train/dev (setups 2, 3).
    pub keep_prob: f64,
    /// Restrict CRF decoding to entity classes at entity positions.
    pub masked_decode: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 10,
            lr: 0.1,
            l2: 1e-3,
            max_epochs: 20,
            seed: 1,
            keep_prob: 0.3,
            masked_decode: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!("lr must be positive, got {}", self.lr)));
        }
        if !(self.l2 >= 0.0 && self.l2.is_finite()) {
            return Err(Error::Config(format!("l2 must be non-negative, got {}", self.l2)));
        }
        if !(self.keep_prob > 0.0 && self.keep_prob <= 1.0) {
            return Err(Error::Config(format!("keep_prob must lie in (0, 1], got {}", self.keep_prob)));
        }
        Ok(())
    }
}

/// Token ids for every sentence plus the queries cut from them.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub token_ids: Vec<Vec<usize>>,
    pub set: QuerySet,
}

impl Dataset {
    pub fn new(params: &ModelParams, sentences: &[Sentence], set: QuerySet) -> Self {
        Dataset {
            token_ids: sentences.iter().map(|s| params.encode(s)).collect(),
            set,
        }
    }

    /// All queries of `setup`, or with negatives subsampled when
    /// `keep_prob < 1` and the setup is table-based.
    pub fn build(params: &ModelParams, sentences: &[Sentence], setup: Setup, keep_prob: f64, seed: u64) -> Result<Self> {
        let mut set = crate::querygen::generate(setup, sentences);
        if setup != Setup::EntityPairs && keep_prob < 1.0 {
            set.queries = crate::querygen::subsample_negatives(&set.queries, keep_prob, seed)?;
        }
        Ok(Self::new(params, sentences, set))
    }

    pub fn len(&self) -> usize {
        self.set.queries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.set.queries.is_empty()
    }

    pub fn input(&self, i: usize) -> Result<QueryInput<'_>> {
        let q = &self.set.queries[i];
        QueryInput::new(&self.token_ids[q.sentence], q)
    }
}

/// Decodes every query of `data`.
pub fn predict_all(params: &ModelParams, data: &Dataset, masked: bool) -> Result<Vec<LabelSequence>> {
    (0..data.len())
        .map(|i| Ok(model::predict(params, &data.input(i)?, masked)?.labels))
        .collect()
}

pub fn evaluate(params: &ModelParams, data: &Dataset, masked: bool, omit_other: bool) -> Result<MetricsReport> {
    let preds = predict_all(params, data, masked)?;
    evaluate_predictions(&data.set, &preds, omit_other)
}

/// `theta <- theta - lr (g + l2 theta)` on every trainable tensor, with
/// `g` the tensor's gradient buffer.
pub fn sgd_step(params: &mut ModelParams, lr: f64, l2: f64) -> Result<()> {
    for slot in 0..params.tensors.len() {
        if !params.is_trainable(slot) {
            continue;
        }
        let t = &params.tensors[slot];
        if !t.grad.is_finite() {
            return Err(Error::NonFinite(t.name.clone()));
        }
    }
    for slot in 0..params.tensors.len() {
        if !params.is_trainable(slot) {
            continue;
        }
        let t = &mut params.tensors[slot];
        for (v, g) in t.value.as_mut_slice().iter_mut().zip(t.grad.as_slice()) {
            *v -= lr * (g + l2 * *v);
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainState {
    pub epoch: usize,
    pub lr: f64,
    pub best_metric: f64,
    pub best_epoch: usize,
    pub epochs_since_improvement: usize,
}

/// One line of the training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Rate used during this epoch.
    pub lr: f64,
    pub train_loss: f64,
    pub dev_avg_ec: f64,
    pub dev_avg_re: f64,
    pub dev_avg_ec_re: f64,
    /// The dev score dropped, so the next epoch runs at half the rate.
    pub halved: bool,
    pub best: bool,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub best: ModelParams,
    pub last: ModelParams,
    pub log: Vec<EpochRecord>,
    pub state: TrainState,
}

/// JSON lines, one record per epoch.
pub fn log_to_string(log: &[EpochRecord]) -> Result<String> {
    let mut out = String::new();
    for r in log {
        writeln!(out, "{}", serde_json::to_string(r)?).expect("writing to a String");
    }
    Ok(out)
}

/// Runs one epoch of shuffled mini-batches; returns the mean query loss.
pub fn train_epoch(params: &mut ModelParams, train: &Dataset, config: &TrainConfig, lr: f64, rng: &mut ChaCha8Rng) -> Result<f64> {
    let mut order: Vec<usize> = (0..train.len()).collect();
    order.shuffle(rng);
    let mut total = 0.0;
    for batch in order.chunks(config.batch_size) {
        params.zero_grads();
        for &i in batch {
            let q = &train.set.queries[i];
            total += model::accumulate_gradients(params, &train.input(i)?, &q.gold_sequence())?;
        }
        let scale = 1.0 / batch.len() as f64;
        params.tensors.iter_mut().for_each(|t| t.grad.scale(scale));
        sgd_step(params, lr, config.l2)?;
    }
    Ok(total / train.len() as f64)
}

/// Trains from `params`, keeping the parameters with the best dev
/// Avg EC+RE. Identical inputs give identical logs and parameters.
pub fn train_loop(params: ModelParams, train: &Dataset, dev: &Dataset, config: &TrainConfig) -> Result<TrainOutcome> {
    config.validate()?;
    if train.is_empty() {
        return Err(Error::Config("training set has no queries".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut state = TrainState {
        epoch: 0,
        lr: config.lr,
        best_metric: f64::NEG_INFINITY,
        best_epoch: 0,
        epochs_since_improvement: 0,
    };
    let mut best = params.clone();
    let mut current = params;
    let mut log = Vec::new();
    let mut previous: Option<f64> = None;

    while state.epoch < config.max_epochs && state.lr >= MIN_LR {
        state.epoch += 1;
        let lr = state.lr;
        let train_loss = train_epoch(&mut current, train, config, lr, &mut rng)?;
        let report = evaluate(&current, dev, config.masked_decode, false)?;
        let metric = report.avg_ec_re();

        let halved = previous.is_some_and(|p| metric < p);
        if halved {
            state.lr /= 2.0;
        }
        previous = Some(metric);
        let improved = metric > state.best_metric;
        if improved {
            state.best_metric = metric;
            state.best_epoch = state.epoch;
            state.epochs_since_improvement = 0;
            best = current.clone();
        } else {
            state.epochs_since_improvement += 1;
        }
        log.push(EpochRecord {
            epoch: state.epoch,
            lr,
            train_loss,
            dev_avg_ec: report.avg_ec(),
            dev_avg_re: report.avg_re(),
            dev_avg_ec_re: metric,
            halved,
            best: improved,
        });
    }
    best.zero_grads();
    current.zero_grads();
    Ok(TrainOutcome {
        best,
        last: current,
        log,
        state,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::EmbeddingTable;
    use crate::model::{init_params, HyperParams, OutputLayer};

    fn tiny_params() -> ModelParams {
        let hyper = HyperParams {
            nk_c: 2,
            nk_e: 2,
            h_c: 2,
            h_e: 2,
            k: 2,
            emb_dim: 3,
            context_width: 3,
            entity_width: 2,
            output: OutputLayer::Crf,
        };
        init_params(hyper, EmbeddingTable::random(&["a", "b"], 3, 0.5, 0), 5).unwrap()
    }

    #[test]
    fn zero_grads_without_decay_change_nothing() {
        let mut p = tiny_params();
        let before = p.clone();
        sgd_step(&mut p, 0.1, 0.0).unwrap();
        assert_eq!(p, before);
    }

    #[test]
    fn decay_alone_shrinks() {
        let mut p = tiny_params();
        let before = p.clone();
        sgd_step(&mut p, 0.1, 1e-3).unwrap();
        for (a, b) in p.tensors.iter().zip(&before.tensors) {
            for (x, y) in a.value.as_slice().iter().zip(b.value.as_slice()) {
                assert!((x - y * (1.0 - 0.1 * 1e-3)).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn non_finite_gradient_names_tensor() {
        let mut p = tiny_params();
        p.tensors[3].grad.as_mut_slice()[0] = f64::NAN;
        match sgd_step(&mut p, 0.1, 0.0) {
            Err(Error::NonFinite(name)) => assert_eq!(name, "entity_filters"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn frozen_embeddings_do_not_move() {
        let mut p = tiny_params();
        p.embeddings_trainable = false;
        p.tensors[0].grad.fill(1.0);
        let before = p.tensors[0].value.clone();
        sgd_step(&mut p, 0.1, 1e-3).unwrap();
        assert_eq!(p.tensors[0].value, before);
    }
}
