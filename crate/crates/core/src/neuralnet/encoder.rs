//! Bidirectional LSTM question encoder with attention-weighted row
//! aggregation, forward and backward.
//!
//! Per direction and step, with gates packed as `[i; f; g; o]`:
//!
//! ```text
//! z   = W x_t + U h_{t-1} + b
//! i, f, o = sigmoid(z_i), sigmoid(z_f), sigmoid(z_o);  g = tanh(z_g)
//! c_t = f * c_{t-1} + i * g
//! h_t = o * tanh(c_t)
//! ```
//!
//! Row `t` of `Q` is `[h_fwd_t; h_bwd_t]`. Aggregation computes
//! `u = Q att`, `psi = u / |u|` (zero when `|u| < 1e-12`) and
//! `qvec = sum_t psi_t Q_t`.

use rand::Rng;

use super::matrix::{axpy, dot, sigmoid, Matrix};

pub const PSI_NORM_EPS: f64 = 1e-12;

/// Weights of one LSTM direction.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmParams {
    /// `4D x d_in`
    pub w_input: Matrix,
    /// `4D x D`
    pub w_hidden: Matrix,
    /// `4D x 1`
    pub bias: Matrix,
}

impl LstmParams {
    pub fn zeros(input_dim: usize, hidden: usize) -> Self {
        Self {
            w_input: Matrix::zeros(4 * hidden, input_dim),
            w_hidden: Matrix::zeros(4 * hidden, hidden),
            bias: Matrix::zeros(4 * hidden, 1),
        }
    }

    pub fn uniform<R: Rng>(input_dim: usize, hidden: usize, bound: f64, rng: &mut R) -> Self {
        Self {
            w_input: Matrix::uniform(4 * hidden, input_dim, bound, rng),
            w_hidden: Matrix::uniform(4 * hidden, hidden, bound, rng),
            bias: Matrix::uniform(4 * hidden, 1, bound, rng),
        }
    }

    pub fn hidden(&self) -> usize {
        self.w_hidden.cols()
    }

    pub fn input_dim(&self) -> usize {
        self.w_input.cols()
    }
}

struct Step {
    h_prev: Vec<f64>,
    c_prev: Vec<f64>,
    /// post-activation gates `[i; f; g; o]`
    gates: Vec<f64>,
    tanh_c: Vec<f64>,
}

/// Forward trace of one direction, in processing order.
pub struct LstmTrace {
    steps: Vec<Step>,
    pub hidden: Vec<Vec<f64>>,
}

impl LstmParams {
    pub fn forward(&self, inputs: &[&[f64]]) -> LstmTrace {
        let d = self.hidden();
        let mut h = vec![0.0; d];
        let mut c = vec![0.0; d];
        let mut steps = Vec::with_capacity(inputs.len());
        let mut hidden = Vec::with_capacity(inputs.len());
        for x in inputs {
            let mut z = self.bias.as_slice().to_vec();
            self.w_input.gemv_acc(x, &mut z);
            self.w_hidden.gemv_acc(&h, &mut z);
            for (k, zk) in z.iter_mut().enumerate() {
                *zk = if (2 * d..3 * d).contains(&k) {
                    zk.tanh()
                } else {
                    sigmoid(*zk)
                };
            }
            let (i, f, g, o) = (&z[..d], &z[d..2 * d], &z[2 * d..3 * d], &z[3 * d..]);
            let c_new: Vec<f64> = (0..d).map(|j| f[j] * c[j] + i[j] * g[j]).collect();
            let tanh_c: Vec<f64> = c_new.iter().map(|x| x.tanh()).collect();
            let h_new: Vec<f64> = (0..d).map(|j| o[j] * tanh_c[j]).collect();
            steps.push(Step {
                h_prev: std::mem::replace(&mut h, h_new.clone()),
                c_prev: std::mem::replace(&mut c, c_new),
                gates: z,
                tanh_c,
            });
            hidden.push(h_new);
        }
        LstmTrace { steps, hidden }
    }

    /// Back-propagation through time. `dh[t]` is the loss gradient with
    /// respect to the output at processing step `t`. Parameter gradients
    /// are accumulated into `grads`; input gradients are returned per step.
    pub fn backward(
        &self,
        inputs: &[&[f64]],
        trace: &LstmTrace,
        dh: &[Vec<f64>],
        grads: &mut LstmParams,
    ) -> Vec<Vec<f64>> {
        let d = self.hidden();
        let mut dx = vec![vec![0.0; self.input_dim()]; inputs.len()];
        let mut dh_next = vec![0.0; d];
        let mut dc_next = vec![0.0; d];
        for t in (0..inputs.len()).rev() {
            let s = &trace.steps[t];
            let (i, f, g, o) = (
                &s.gates[..d],
                &s.gates[d..2 * d],
                &s.gates[2 * d..3 * d],
                &s.gates[3 * d..],
            );
            let mut dz = vec![0.0; 4 * d];
            for j in 0..d {
                let dhj = dh[t][j] + dh_next[j];
                let dc = dhj * o[j] * (1.0 - s.tanh_c[j] * s.tanh_c[j]) + dc_next[j];
                let d_o = dhj * s.tanh_c[j];
                let d_i = dc * g[j];
                let d_g = dc * i[j];
                let d_f = dc * s.c_prev[j];
                dc_next[j] = dc * f[j];
                dz[j] = d_i * i[j] * (1.0 - i[j]);
                dz[d + j] = d_f * f[j] * (1.0 - f[j]);
                dz[2 * d + j] = d_g * (1.0 - g[j] * g[j]);
                dz[3 * d + j] = d_o * o[j] * (1.0 - o[j]);
            }
            grads.w_input.outer_acc(&dz, inputs[t]);
            grads.w_hidden.outer_acc(&dz, &s.h_prev);
            axpy(1.0, &dz, grads.bias.as_mut_slice());
            self.w_input.gemv_t_acc(&dz, &mut dx[t]);
            dh_next.fill(0.0);
            self.w_hidden.gemv_t_acc(&dz, &mut dh_next);
        }
        dx
    }
}

/// Encoder weights: token table, both directions, attention vector.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams {
    /// `|tokens| x d_in`, row 0 is the unknown-token row
    pub token_embedding: Matrix,
    pub forward: LstmParams,
    pub backward: LstmParams,
    /// `2D x 1`
    pub att: Matrix,
}

impl EncoderParams {
    pub fn zeros(vocab: usize, input_dim: usize, hidden: usize) -> Self {
        Self {
            token_embedding: Matrix::zeros(vocab, input_dim),
            forward: LstmParams::zeros(input_dim, hidden),
            backward: LstmParams::zeros(input_dim, hidden),
            att: Matrix::zeros(2 * hidden, 1),
        }
    }

    pub fn hidden(&self) -> usize {
        self.forward.hidden()
    }

    pub fn output_dim(&self) -> usize {
        2 * self.hidden()
    }
}

/// Encoder output for one question.
#[derive(Debug, Clone, PartialEq)]
pub struct QuestionEncoding {
    /// `|q|` rows of length `2D`
    pub q: Vec<Vec<f64>>,
    pub psi: Vec<f64>,
    pub qvec: Vec<f64>,
}

/// Everything the backward pass needs.
pub struct EncoderTrace {
    tokens: Vec<usize>,
    fwd: LstmTrace,
    bwd: LstmTrace,
    /// `|u|` before normalization
    u_norm: f64,
    pub encoding: QuestionEncoding,
}

impl EncoderParams {
    /// Runs both directions and the aggregation. `tokens` must be
    /// non-empty and index rows of the token table.
    pub fn encode(&self, tokens: &[usize]) -> EncoderTrace {
        assert!(!tokens.is_empty(), "empty question");
        let d = self.hidden();
        let n = tokens.len();
        let inputs: Vec<&[f64]> = tokens
            .iter()
            .map(|&t| self.token_embedding.row(t))
            .collect();
        let reversed: Vec<&[f64]> = inputs.iter().rev().copied().collect();
        let fwd = self.forward.forward(&inputs);
        let bwd = self.backward.forward(&reversed);

        let q: Vec<Vec<f64>> = (0..n)
            .map(|t| {
                let mut row = Vec::with_capacity(2 * d);
                row.extend_from_slice(&fwd.hidden[t]);
                row.extend_from_slice(&bwd.hidden[n - 1 - t]);
                row
            })
            .collect();
        let u: Vec<f64> = q.iter().map(|row| dot(row, self.att.as_slice())).collect();
        let u_norm = u.iter().map(|x| x * x).sum::<f64>().sqrt();
        let psi: Vec<f64> = if u_norm < PSI_NORM_EPS {
            vec![0.0; n]
        } else {
            u.iter().map(|x| x / u_norm).collect()
        };
        let mut qvec = vec![0.0; 2 * d];
        for (row, &p) in q.iter().zip(&psi) {
            axpy(p, row, &mut qvec);
        }
        EncoderTrace {
            tokens: tokens.to_vec(),
            fwd,
            bwd,
            u_norm,
            encoding: QuestionEncoding { q, psi, qvec },
        }
    }

    /// Accumulates parameter gradients given `dqvec`, the loss gradient
    /// with respect to the question vector.
    pub fn backprop(&self, trace: &EncoderTrace, dqvec: &[f64], grads: &mut EncoderParams) {
        let d = self.hidden();
        let enc = &trace.encoding;
        let n = enc.q.len();

        let mut dq: Vec<Vec<f64>> = enc
            .psi
            .iter()
            .map(|&p| dqvec.iter().map(|g| p * g).collect())
            .collect();
        if trace.u_norm >= PSI_NORM_EPS {
            let dpsi: Vec<f64> = enc.q.iter().map(|row| dot(row, dqvec)).collect();
            let proj = dot(&enc.psi, &dpsi);
            let du: Vec<f64> = dpsi
                .iter()
                .zip(&enc.psi)
                .map(|(dp, p)| (dp - p * proj) / trace.u_norm)
                .collect();
            for t in 0..n {
                axpy(du[t], &enc.q[t], grads.att.as_mut_slice());
                axpy(du[t], self.att.as_slice(), &mut dq[t]);
            }
        }

        let inputs: Vec<&[f64]> = trace
            .tokens
            .iter()
            .map(|&t| self.token_embedding.row(t))
            .collect();
        let reversed: Vec<&[f64]> = inputs.iter().rev().copied().collect();
        let dh_fwd: Vec<Vec<f64>> = dq.iter().map(|row| row[..d].to_vec()).collect();
        let dh_bwd: Vec<Vec<f64>> = (0..n).map(|s| dq[n - 1 - s][d..].to_vec()).collect();

        let dx_fwd = self
            .forward
            .backward(&inputs, &trace.fwd, &dh_fwd, &mut grads.forward);
        let dx_bwd = self
            .backward
            .backward(&reversed, &trace.bwd, &dh_bwd, &mut grads.backward);
        for (t, &tok) in trace.tokens.iter().enumerate() {
            let row = grads.token_embedding.row_mut(tok);
            axpy(1.0, &dx_fwd[t], row);
            axpy(1.0, &dx_bwd[n - 1 - t], row);
        }
    }
}

#[cfg(test)]
mod tests {
    // reference computations are written index-style on purpose
    #![allow(clippy::needless_range_loop)]

    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Independent scalar reference: explicit loops over every gate, no
    /// shared helpers with the implementation.
    fn reference_encode(p: &EncoderParams, tokens: &[usize]) -> (Vec<f64>, Vec<f64>) {
        fn run(l: &LstmParams, xs: &[Vec<f64>]) -> Vec<Vec<f64>> {
            let dh = l.hidden();
            let din = l.input_dim();
            let w = l.w_input.as_slice();
            let u = l.w_hidden.as_slice();
            let b = l.bias.as_slice();
            let mut h = vec![0.0f64; dh];
            let mut c = vec![0.0f64; dh];
            let mut out = Vec::new();
            for x in xs {
                let mut pre = [vec![0.0; dh], vec![0.0; dh], vec![0.0; dh], vec![0.0; dh]];
                for (gate, pg) in pre.iter_mut().enumerate() {
                    for j in 0..dh {
                        let r = gate * dh + j;
                        let mut s = b[r];
                        for k in 0..din {
                            s += w[r * din + k] * x[k];
                        }
                        for k in 0..dh {
                            s += u[r * dh + k] * h[k];
                        }
                        pg[j] = s;
                    }
                }
                let mut nh = vec![0.0; dh];
                for j in 0..dh {
                    let ig = 1.0 / (1.0 + (-pre[0][j]).exp());
                    let fg = 1.0 / (1.0 + (-pre[1][j]).exp());
                    let gg = pre[2][j].tanh();
                    let og = 1.0 / (1.0 + (-pre[3][j]).exp());
                    c[j] = fg * c[j] + ig * gg;
                    nh[j] = og * c[j].tanh();
                }
                h = nh;
                out.push(h.clone());
            }
            out
        }
        let xs: Vec<Vec<f64>> = tokens
            .iter()
            .map(|&t| p.token_embedding.row(t).to_vec())
            .collect();
        let rev: Vec<Vec<f64>> = xs.iter().rev().cloned().collect();
        let hf = run(&p.forward, &xs);
        let hb = run(&p.backward, &rev);
        let n = tokens.len();
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|t| hf[t].iter().chain(hb[n - 1 - t].iter()).copied().collect())
            .collect();
        let att = p.att.as_slice();
        let u: Vec<f64> = rows
            .iter()
            .map(|r| r.iter().zip(att).map(|(a, b)| a * b).sum())
            .collect();
        let norm = u.iter().map(|x| x * x).sum::<f64>().sqrt();
        let psi: Vec<f64> = u
            .iter()
            .map(|x| if norm < 1e-12 { 0.0 } else { x / norm })
            .collect();
        let mut qvec = vec![0.0; rows[0].len()];
        for t in 0..n {
            for k in 0..qvec.len() {
                qvec[k] += rows[t][k] * psi[t];
            }
        }
        (psi, qvec)
    }

    fn random_params(seed: u64, vocab: usize, din: usize, d: usize) -> EncoderParams {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        EncoderParams {
            token_embedding: Matrix::uniform(vocab, din, 1.0, &mut rng),
            forward: LstmParams::uniform(din, d, 0.8, &mut rng),
            backward: LstmParams::uniform(din, d, 0.8, &mut rng),
            att: Matrix::uniform(2 * d, 1, 1.0, &mut rng),
        }
    }

    #[test]
    fn zero_weights_give_zero_encoding() {
        let p = EncoderParams::zeros(3, 2, 2);
        let enc = p.encode(&[0, 1, 2]).encoding;
        assert!(enc.q.iter().flatten().all(|&x| x == 0.0));
        assert_eq!(enc.psi, vec![0.0; 3]);
        assert_eq!(enc.qvec, vec![0.0; 4]);
    }

    #[test]
    fn single_token_psi_is_unit() {
        let p = random_params(3, 2, 3, 2);
        let enc = p.encode(&[1]).encoding;
        assert!((enc.psi[0].abs() - 1.0).abs() < 1e-15);
        for (a, b) in enc.qvec.iter().zip(&enc.q[0]) {
            assert!((a - enc.psi[0] * b).abs() < 1e-15);
        }
    }

    #[test]
    fn matches_scalar_reference() {
        // D = 2, 3 tokens
        let p = random_params(11, 4, 3, 2);
        let tokens = [2, 0, 3];
        let enc = p.encode(&tokens).encoding;
        let (psi, qvec) = reference_encode(&p, &tokens);
        for (a, b) in enc.qvec.iter().zip(&qvec) {
            assert!((a - b).abs() < 1e-10);
        }
        for (a, b) in enc.psi.iter().zip(&psi) {
            assert!((a - b).abs() < 1e-10);
        }
        let norm: f64 = enc.psi.iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!((norm - 1.0).abs() < 1e-9);
    }

    #[test]
    fn matches_reference_across_seeds() {
        for seed in 0..20 {
            let p = random_params(
                100 + seed,
                5,
                1 + (seed as usize % 4),
                1 + (seed as usize % 3),
            );
            let tokens: Vec<usize> = (0..1 + seed as usize % 5)
                .map(|i| (i * 7 + seed as usize) % 5)
                .collect();
            let enc = p.encode(&tokens).encoding;
            let (_, qvec) = reference_encode(&p, &tokens);
            for (a, b) in enc.qvec.iter().zip(&qvec) {
                assert!((a - b).abs() < 1e-10);
            }
        }
    }
}
