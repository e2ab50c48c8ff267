//! Central finite-difference check of the analytic gradients.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::model::{AnswerTypeModel, Params, TrainingSample, TENSOR_NAMES};
use super::Result;

pub const STEP: f64 = 1e-5;
pub const TOLERANCE: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    /// `(tensor name, relative error)` in [`TENSOR_NAMES`] order.
    pub per_tensor: Vec<(&'static str, f64)>,
    pub max_relative_error: f64,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.max_relative_error < TOLERANCE
    }
}

/// `|a - n| / (|a| + |n|)` over a whole tensor, zero when both vanish.
pub fn relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let diff = analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n) * (a - n))
        .sum::<f64>()
        .sqrt();
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let denom = norm(analytic) + norm(numeric);
    if denom < 1e-12 {
        0.0
    } else {
        diff / denom
    }
}

/// Compares analytic gradients against central differences over every
/// parameter of every tensor, using the full softmax. `corrupt_att`
/// doubles the analytic attention gradient (a detector sanity check).
pub fn gradient_check(
    model: &AnswerTypeModel,
    sample: &TrainingSample,
    corrupt_att: bool,
) -> Result<GradCheckReport> {
    let all: Vec<usize> = (0..model.num_types()).collect();
    let mut analytic = Params::zeros_like(&model.params);
    model.loss_and_grad(sample, &all, Some(&mut analytic))?;
    if corrupt_att {
        analytic.encoder.att.scale(2.0);
    }

    let mut probe = model.clone();
    let mut per_tensor = Vec::with_capacity(TENSOR_NAMES.len());
    for (k, name) in TENSOR_NAMES.iter().enumerate() {
        let len = probe.params.tensors()[k].as_slice().len();
        let mut numeric = vec![0.0; len];
        for (i, slot) in numeric.iter_mut().enumerate() {
            let orig = probe.params.tensors()[k].as_slice()[i];
            probe.params.tensors_mut()[k].as_mut_slice()[i] = orig + STEP;
            let plus = probe.loss_and_grad(sample, &all, None)?;
            probe.params.tensors_mut()[k].as_mut_slice()[i] = orig - STEP;
            let minus = probe.loss_and_grad(sample, &all, None)?;
            probe.params.tensors_mut()[k].as_mut_slice()[i] = orig;
            *slot = (plus - minus) / (2.0 * STEP);
        }
        let err = relative_error(analytic.tensors()[k].as_slice(), &numeric);
        per_tensor.push((*name, err));
    }
    let max_relative_error = per_tensor.iter().map(|(_, e)| *e).fold(0.0, f64::max);
    Ok(GradCheckReport {
        per_tensor,
        max_relative_error,
    })
}

/// A seeded random model within `D <= 4, |T| <= 6, |q| <= 5` and a
/// sample with one to three weighted targets.
pub fn random_case(seed: u64) -> (AnswerTypeModel, TrainingSample) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let hidden = rng.gen_range(1..=4);
    let input_dim = rng.gen_range(1..=4);
    let types = rng.gen_range(2..=6);
    let vocab = rng.gen_range(2..=6);
    let len = rng.gen_range(1..=5);
    let model = AnswerTypeModel::random(types, vocab, input_dim, hidden, 0.8, &mut rng);
    let tokens = (0..len).map(|_| rng.gen_range(0..vocab)).collect();
    let n_targets = rng.gen_range(1..=types.min(3));
    let picked = rand::seq::index::sample(&mut rng, types, n_targets).into_vec();
    let raw: Vec<f64> = picked.iter().map(|_| rng.gen_range(0.1..1.0)).collect();
    let total: f64 = raw.iter().sum();
    let targets = picked
        .into_iter()
        .zip(raw)
        .map(|(t, w)| (t, w / total))
        .collect();
    (model, TrainingSample { tokens, targets })
}
