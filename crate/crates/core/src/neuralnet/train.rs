use std::collections::BTreeSet;

use log::warn;
use rand::seq::index;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::encoder::{EncoderParams, LstmParams};
use super::matrix::Matrix;
use super::model::{AnswerTypeModel, Params, TrainingSample, UNK_TOKEN};
use super::typeembed::{init_type_embedding, RANDOM_INIT_BOUND};
use super::{NnError, Result};
use crate::answerprep::{AnswerType, AugmentedExample};
use crate::embedstore::EmbeddingStore;
use crate::text::tokenize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

impl std::str::FromStr for OptimizerKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "sgd" => Ok(OptimizerKind::Sgd),
            "adam" => Ok(OptimizerKind::Adam),
            other => Err(format!(
                "unknown optimizer `{other}` (expected sgd or adam)"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    /// LSTM hidden size `D`; `2D` must equal the word-vector dimension.
    pub hidden: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    /// Negatives sampled per example; a value at least the number of
    /// non-target types gives the full softmax.
    pub negatives: usize,
    pub seed: u64,
    pub optimizer: OptimizerKind,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            hidden: 50,
            learning_rate: 1e-3,
            epochs: 10,
            batch_size: 16,
            negatives: 20,
            seed: 42,
            optimizer: OptimizerKind::Adam,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self, word_dim: usize) -> Result<()> {
        let bad = |m: &str| Err(NnError::Config(m.to_string()));
        if self.hidden == 0 {
            return bad("hidden must be positive");
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return bad("learning_rate must be positive");
        }
        if self.epochs == 0 {
            return bad("epochs must be positive");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive");
        }
        if 2 * self.hidden != word_dim {
            return Err(NnError::Config(format!(
                "2 * hidden = {} but word vectors have dimension {word_dim}",
                2 * self.hidden
            )));
        }
        Ok(())
    }
}

/// Bound for the uniform initialization of LSTM weights.
fn lstm_init_bound(hidden: usize) -> f64 {
    1.0 / (hidden as f64).sqrt()
}

/// Sorted, de-duplicated question tokens with the unknown token first.
pub fn build_token_vocab(examples: &[AugmentedExample]) -> Vec<String> {
    let set: BTreeSet<String> = examples
        .iter()
        .flat_map(|ex| tokenize(&ex.question))
        .filter(|t| t != UNK_TOKEN)
        .collect();
    std::iter::once(UNK_TOKEN.to_string()).chain(set).collect()
}

/// Fresh model: type rows from the word vectors, token rows from the
/// word vectors where known, everything else uniform random.
pub fn init_model(
    store: &EmbeddingStore,
    types: &[AnswerType],
    tokens: Vec<String>,
    cfg: &TrainConfig,
) -> Result<AnswerTypeModel> {
    cfg.validate(store.dim())?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let type_rows = init_type_embedding(store, types, &mut rng);

    let din = store.dim();
    let mut token_embedding = Matrix::zeros(tokens.len(), din);
    for (r, tok) in tokens.iter().enumerate() {
        let row = token_embedding.row_mut(r);
        match store.get(tok).filter(|_| r > 0) {
            Some(v) => row.copy_from_slice(v),
            None => row
                .iter_mut()
                .for_each(|x| *x = rng.gen_range(-RANDOM_INIT_BOUND..RANDOM_INIT_BOUND)),
        }
    }
    let bound = lstm_init_bound(cfg.hidden);
    let encoder = EncoderParams {
        token_embedding,
        forward: LstmParams::uniform(din, cfg.hidden, bound, &mut rng),
        backward: LstmParams::uniform(din, cfg.hidden, bound, &mut rng),
        att: Matrix::uniform(2 * cfg.hidden, 1, RANDOM_INIT_BOUND, &mut rng),
    };
    let params = Params {
        encoder,
        type_embedding: type_rows.matrix,
    };
    AnswerTypeModel::new(
        types.to_vec(),
        tokens,
        params,
        type_rows.provenance,
        cfg.seed,
    )
}

/// Maps examples to token ids and type indices. Examples whose question
/// has no tokens are skipped.
pub fn to_samples(
    model: &AnswerTypeModel,
    examples: &[AugmentedExample],
) -> Result<Vec<TrainingSample>> {
    let mut out = Vec::with_capacity(examples.len());
    for (i, ex) in examples.iter().enumerate() {
        let tokens = model.token_ids(&ex.question);
        if tokens.is_empty() {
            warn!("example {i}: question has no tokens, skipped");
            continue;
        }
        let targets = ex
            .types
            .entries()
            .iter()
            .map(|(t, w)| {
                model
                    .type_index(t)
                    .map(|idx| (idx, *w))
                    .ok_or_else(|| NnError::UnknownType(t.to_string()))
            })
            .collect::<Result<Vec<_>>>()?;
        out.push(TrainingSample { tokens, targets });
    }
    Ok(out)
}

/// Target indices plus `m` distinct non-target indices drawn uniformly,
/// sorted ascending. All indices when `m` covers every non-target.
pub fn sample_candidates<R: Rng>(
    num_types: usize,
    targets: &[(usize, f64)],
    m: usize,
    rng: &mut R,
) -> Vec<usize> {
    let target_set: BTreeSet<usize> = targets.iter().map(|&(t, _)| t).collect();
    let pool: Vec<usize> = (0..num_types).filter(|i| !target_set.contains(i)).collect();
    let mut out: Vec<usize> = target_set.into_iter().collect();
    if m >= pool.len() {
        out.extend(pool);
    } else {
        out.extend(
            index::sample(rng, pool.len(), m)
                .into_iter()
                .map(|i| pool[i]),
        );
    }
    out.sort_unstable();
    out
}

enum Optimizer {
    Sgd,
    Adam {
        m: Box<Params>,
        v: Box<Params>,
        step: i32,
    },
}

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

impl Optimizer {
    fn new(kind: OptimizerKind, like: &Params) -> Self {
        match kind {
            OptimizerKind::Sgd => Optimizer::Sgd,
            OptimizerKind::Adam => Optimizer::Adam {
                m: Box::new(Params::zeros_like(like)),
                v: Box::new(Params::zeros_like(like)),
                step: 0,
            },
        }
    }

    fn step(&mut self, params: &mut Params, grads: &Params, lr: f64) {
        match self {
            Optimizer::Sgd => {
                for (p, g) in params.tensors_mut().into_iter().zip(grads.tensors()) {
                    p.as_mut_slice()
                        .iter_mut()
                        .zip(g.as_slice())
                        .for_each(|(p, g)| *p -= lr * g);
                }
            }
            Optimizer::Adam { m, v, step } => {
                *step += 1;
                let c1 = 1.0 - ADAM_BETA1.powi(*step);
                let c2 = 1.0 - ADAM_BETA2.powi(*step);
                let tensors = params
                    .tensors_mut()
                    .into_iter()
                    .zip(grads.tensors())
                    .zip(m.tensors_mut().into_iter().zip(v.tensors_mut()));
                for ((p, g), (m, v)) in tensors {
                    let it = p
                        .as_mut_slice()
                        .iter_mut()
                        .zip(g.as_slice())
                        .zip(m.as_mut_slice().iter_mut().zip(v.as_mut_slice()));
                    for ((p, &g), (m, v)) in it {
                        *m = ADAM_BETA1 * *m + (1.0 - ADAM_BETA1) * g;
                        *v = ADAM_BETA2 * *v + (1.0 - ADAM_BETA2) * g * g;
                        *p -= lr * (*m / c1) / ((*v / c2).sqrt() + ADAM_EPS);
                    }
                }
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: AnswerTypeModel,
    pub epoch_losses: Vec<f64>,
}

/// Builds a model for `types` from `store` and trains it on `examples`.
/// `on_epoch` receives each epoch's mean loss.
pub fn train<F>(
    examples: &[AugmentedExample],
    types: &[AnswerType],
    store: &EmbeddingStore,
    cfg: &TrainConfig,
    on_epoch: F,
) -> Result<TrainOutcome>
where
    F: FnMut(usize, f64),
{
    if examples.is_empty() {
        return Err(NnError::EmptyDataset);
    }
    let model = init_model(store, types, build_token_vocab(examples), cfg)?;
    train_model(model, examples, cfg, on_epoch)
}

/// Trains an existing model in place of its parameters.
pub fn train_model<F>(
    mut model: AnswerTypeModel,
    examples: &[AugmentedExample],
    cfg: &TrainConfig,
    mut on_epoch: F,
) -> Result<TrainOutcome>
where
    F: FnMut(usize, f64),
{
    let samples = to_samples(&model, examples)?;
    if samples.is_empty() {
        return Err(NnError::EmptyDataset);
    }
    // separate stream from initialization so data order does not depend on
    // how many random rows the vocabulary needed
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed_5eed_5eed_5eed);
    let mut optimizer = Optimizer::new(cfg.optimizer, &model.params);
    let mut grads = Params::zeros_like(&model.params);
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            grads.fill(0.0);
            for &i in batch {
                let sample = &samples[i];
                let cands =
                    sample_candidates(model.num_types(), &sample.targets, cfg.negatives, &mut rng);
                let loss = model.loss_and_grad(sample, &cands, Some(&mut grads))?;
                if !loss.is_finite() {
                    return Err(NnError::NonFiniteLoss { epoch, example: i });
                }
                total += loss;
            }
            let scale = 1.0 / batch.len() as f64;
            for g in grads.tensors_mut() {
                g.scale(scale);
            }
            optimizer.step(&mut model.params, &grads, cfg.learning_rate);
            if !model.params.is_finite() {
                return Err(NnError::NonFiniteLoss {
                    epoch,
                    example: batch[batch.len() - 1],
                });
            }
        }
        let mean = total / samples.len() as f64;
        on_epoch(epoch, mean);
        epoch_losses.push(mean);
    }
    model.seed = cfg.seed;
    Ok(TrainOutcome {
        model,
        epoch_losses,
    })
}

/// Fraction of examples whose highest-weight target is ranked first.
pub fn top1_accuracy(model: &AnswerTypeModel, examples: &[AugmentedExample]) -> Result<f64> {
    let samples = to_samples(model, examples)?;
    if samples.is_empty() {
        return Ok(0.0);
    }
    let mut hits = 0usize;
    for s in &samples {
        let gold = s
            .targets
            .iter()
            .max_by(|a, b| a.1.total_cmp(&b.1).then(b.0.cmp(&a.0)))
            .map(|&(t, _)| t);
        let pred = model.predict_tokens(&s.tokens)?;
        if pred.ranking.first().copied() == gold {
            hits += 1;
        }
    }
    Ok(hits as f64 / samples.len() as f64)
}

/// Mean full-softmax weighted cross-entropy over the examples.
pub fn mean_full_loss(model: &AnswerTypeModel, examples: &[AugmentedExample]) -> Result<f64> {
    let samples = to_samples(model, examples)?;
    let all: Vec<usize> = (0..model.num_types()).collect();
    let mut total = 0.0;
    for s in &samples {
        total += model.loss_and_grad(s, &all, None)?;
    }
    Ok(total / samples.len().max(1) as f64)
}
