use std::collections::HashMap;

use rand::Rng;

use super::encoder::{EncoderParams, EncoderTrace, LstmParams, QuestionEncoding};
use super::matrix::{axpy, dot, Matrix};
use super::typeembed::RowProvenance;
use super::{NnError, Result};
use crate::answerprep::AnswerType;
use crate::text::tokenize;

/// Probabilities below this are clamped before taking the log.
pub const LOG_CLAMP: f64 = 1e-12;

pub const UNK_TOKEN: &str = "<unk>";

/// All trainable tensors. The same struct holds gradients and optimizer
/// moments.
#[derive(Debug, Clone, PartialEq)]
pub struct Params {
    pub encoder: EncoderParams,
    /// `|types| x 2D`
    pub type_embedding: Matrix,
}

pub const TENSOR_NAMES: [&str; 9] = [
    "token_embedding",
    "fwd.w_input",
    "fwd.w_hidden",
    "fwd.bias",
    "bwd.w_input",
    "bwd.w_hidden",
    "bwd.bias",
    "att",
    "type_embedding",
];

impl Params {
    pub fn zeros_like(other: &Params) -> Self {
        let e = &other.encoder;
        Self {
            encoder: EncoderParams::zeros(
                e.token_embedding.rows(),
                e.token_embedding.cols(),
                e.hidden(),
            ),
            type_embedding: Matrix::zeros(other.type_embedding.rows(), other.type_embedding.cols()),
        }
    }

    /// Tensors in [`TENSOR_NAMES`] order.
    pub fn tensors(&self) -> [&Matrix; 9] {
        let e = &self.encoder;
        [
            &e.token_embedding,
            &e.forward.w_input,
            &e.forward.w_hidden,
            &e.forward.bias,
            &e.backward.w_input,
            &e.backward.w_hidden,
            &e.backward.bias,
            &e.att,
            &self.type_embedding,
        ]
    }

    pub fn tensors_mut(&mut self) -> [&mut Matrix; 9] {
        let e = &mut self.encoder;
        [
            &mut e.token_embedding,
            &mut e.forward.w_input,
            &mut e.forward.w_hidden,
            &mut e.forward.bias,
            &mut e.backward.w_input,
            &mut e.backward.w_hidden,
            &mut e.backward.bias,
            &mut e.att,
            &mut self.type_embedding,
        ]
    }

    pub fn fill(&mut self, v: f64) {
        for t in self.tensors_mut() {
            t.fill(v);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.is_finite())
    }

    /// Shapes must satisfy `2D = d` and consistent LSTM dimensions.
    pub fn validate(&self) -> Result<()> {
        let e = &self.encoder;
        let (d, din) = (e.hidden(), e.token_embedding.cols());
        let lstm_ok = |l: &LstmParams| {
            l.w_input.shape() == [4 * d, din]
                && l.w_hidden.shape() == [4 * d, d]
                && l.bias.shape() == [4 * d, 1]
        };
        if d == 0 || e.token_embedding.rows() == 0 || !lstm_ok(&e.forward) || !lstm_ok(&e.backward)
        {
            return Err(NnError::Shape("inconsistent LSTM tensor shapes".into()));
        }
        if e.att.shape() != [2 * d, 1] {
            return Err(NnError::Shape(format!("att must be {}x1", 2 * d)));
        }
        if self.type_embedding.cols() != 2 * d {
            return Err(NnError::DimensionMismatch {
                expected: 2 * d,
                found: self.type_embedding.cols(),
            });
        }
        Ok(())
    }
}

/// One supervised question: token ids and `(type index, weight)` targets.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSample {
    pub tokens: Vec<usize>,
    pub targets: Vec<(usize, f64)>,
}

/// Scores against the full vocabulary, with the ranking used for display.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionList {
    pub logits: Vec<f64>,
    pub scores: Vec<f64>,
    /// Type indices by descending logit, ties by index.
    pub ranking: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnswerTypeModel {
    pub types: Vec<AnswerType>,
    /// Token strings by row of the token table; row 0 is [`UNK_TOKEN`].
    pub tokens: Vec<String>,
    pub params: Params,
    pub provenance: Vec<RowProvenance>,
    pub seed: u64,
    token_index: HashMap<String, usize>,
}

impl AnswerTypeModel {
    pub fn new(
        types: Vec<AnswerType>,
        tokens: Vec<String>,
        params: Params,
        provenance: Vec<RowProvenance>,
        seed: u64,
    ) -> Result<Self> {
        params.validate()?;
        if types.len() != params.type_embedding.rows() || provenance.len() != types.len() {
            return Err(NnError::Shape(format!(
                "{} types but type_embedding has {} rows",
                types.len(),
                params.type_embedding.rows()
            )));
        }
        if tokens.len() != params.encoder.token_embedding.rows()
            || tokens.first().map(String::as_str) != Some(UNK_TOKEN)
        {
            return Err(NnError::Shape(
                "token list must start with the unknown token and match the token table".into(),
            ));
        }
        let token_index = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        Ok(Self {
            types,
            tokens,
            params,
            provenance,
            seed,
            token_index,
        })
    }

    /// Small random model for tests and gradient checks.
    pub fn random<R: Rng>(
        types: usize,
        vocab: usize,
        input_dim: usize,
        hidden: usize,
        bound: f64,
        rng: &mut R,
    ) -> Self {
        let encoder = EncoderParams {
            token_embedding: Matrix::uniform(vocab, input_dim, bound, rng),
            forward: LstmParams::uniform(input_dim, hidden, bound, rng),
            backward: LstmParams::uniform(input_dim, hidden, bound, rng),
            att: Matrix::uniform(2 * hidden, 1, bound, rng),
        };
        let params = Params {
            encoder,
            type_embedding: Matrix::uniform(types, 2 * hidden, bound, rng),
        };
        let tokens = std::iter::once(UNK_TOKEN.to_string())
            .chain((1..vocab).map(|i| format!("tok{i}")))
            .collect();
        let type_labels = (0..types)
            .map(|i| AnswerType::Kg(crate::typestore::TypeId::new(format!("t:{i}"))))
            .collect();
        Self::new(
            type_labels,
            tokens,
            params,
            vec![RowProvenance::Random; types],
            0,
        )
        .expect("consistent shapes")
    }

    pub fn num_types(&self) -> usize {
        self.types.len()
    }

    pub fn hidden(&self) -> usize {
        self.params.encoder.hidden()
    }

    pub fn token_id(&self, token: &str) -> usize {
        self.token_index.get(token).copied().unwrap_or(0)
    }

    /// Tokenizes with the label normalizer; unknown tokens map to row 0.
    pub fn token_ids(&self, question: &str) -> Vec<usize> {
        tokenize(question)
            .iter()
            .map(|t| self.token_id(t))
            .collect()
    }

    pub fn type_index(&self, t: &AnswerType) -> Option<usize> {
        self.types.iter().position(|x| x == t)
    }

    pub fn encode_question(&self, tokens: &[usize]) -> Result<QuestionEncoding> {
        self.check_tokens(tokens)?;
        Ok(self.params.encoder.encode(tokens).encoding)
    }

    fn check_tokens(&self, tokens: &[usize]) -> Result<()> {
        if tokens.is_empty() {
            return Err(NnError::EmptyQuestion);
        }
        let n = self.tokens.len();
        if let Some(&bad) = tokens.iter().find(|&&t| t >= n) {
            return Err(NnError::UnknownIndex(bad));
        }
        Ok(())
    }

    /// Full-vocabulary scores for a question.
    pub fn predict(&self, question: &str) -> Result<PredictionList> {
        let ids = self.token_ids(question);
        self.predict_tokens(&ids)
    }

    pub fn predict_tokens(&self, tokens: &[usize]) -> Result<PredictionList> {
        let enc = self.encode_question(tokens)?;
        let logits = score_types_nn(&enc.qvec, &self.params.type_embedding)?;
        let scores = softmax(&logits);
        let ranking = rank_desc(&logits);
        Ok(PredictionList {
            logits,
            scores,
            ranking,
        })
    }

    /// Weighted cross-entropy under a softmax restricted to `candidates`,
    /// which must contain every target index. When `grads` is given the
    /// gradient of the loss is added to it.
    pub fn loss_and_grad(
        &self,
        sample: &TrainingSample,
        candidates: &[usize],
        grads: Option<&mut Params>,
    ) -> Result<f64> {
        self.check_tokens(&sample.tokens)?;
        let s = &self.params.type_embedding;
        if let Some(&bad) = candidates.iter().find(|&&c| c >= s.rows()) {
            return Err(NnError::UnknownIndex(bad));
        }
        let trace: EncoderTrace = self.params.encoder.encode(&sample.tokens);
        let qvec = &trace.encoding.qvec;
        let logits: Vec<f64> = candidates.iter().map(|&r| dot(s.row(r), qvec)).collect();
        let probs = softmax(&logits);

        let mut loss = 0.0;
        // weight on each candidate, plus the total weight of unclamped terms
        let mut weights = vec![0.0; candidates.len()];
        let mut active = 0.0;
        for &(t, w) in &sample.targets {
            let pos = candidates
                .iter()
                .position(|&c| c == t)
                .ok_or(NnError::UnknownIndex(t))?;
            let p = probs[pos];
            if p < LOG_CLAMP {
                loss -= w * LOG_CLAMP.ln();
            } else {
                loss -= w * p.ln();
                weights[pos] += w;
                active += w;
            }
        }

        if let Some(grads) = grads {
            let mut dqvec = vec![0.0; qvec.len()];
            for (pos, &r) in candidates.iter().enumerate() {
                let dl = active * probs[pos] - weights[pos];
                if dl != 0.0 {
                    axpy(dl, qvec, grads.type_embedding.row_mut(r));
                    axpy(dl, s.row(r), &mut dqvec);
                }
            }
            self.params
                .encoder
                .backprop(&trace, &dqvec, &mut grads.encoder);
        }
        Ok(loss)
    }
}

/// `logit_r = S_r . qvec` for every row of `S`.
pub fn score_types_nn(qvec: &[f64], s: &Matrix) -> Result<Vec<f64>> {
    if qvec.len() != s.cols() {
        return Err(NnError::DimensionMismatch {
            expected: s.cols(),
            found: qvec.len(),
        });
    }
    let mut out = vec![0.0; s.rows()];
    s.gemv_acc(qvec, &mut out);
    Ok(out)
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let z: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / z).collect()
}

/// Indices sorted by descending value, ties by ascending index.
pub fn rank_desc(values: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    idx
}

/// `-sum_j s_j ln max(P[t_j], 1e-12)` over full-vocabulary probabilities.
pub fn weighted_ce_loss(probs: &[f64], targets: &[(usize, f64)]) -> Result<f64> {
    targets.iter().try_fold(0.0, |acc, &(t, w)| {
        let p = *probs.get(t).ok_or(NnError::UnknownIndex(t))?;
        Ok(acc - w * p.max(LOG_CLAMP).ln())
    })
}
