//! Recurrent scorers over the turn window: a plain LSTM read out at the
//! last step, and a variant that pools hidden states through additive
//! attention. Both run full backprop through time on the shared SGD loop.

use alloc::vec::Vec;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::nn::{gradient_check, train_arch, uniform_fan_in, Arch};
use super::{EncodedInput, ModelError, NeuralParams};
use crate::math::{exp, sigmoid, tanh, Digest};

/// Gate weights for one LSTM layer. Rows of W and U stack the four gates
/// as [input, forget, cell, output], each block `hidden` rows tall.
struct LstmCore {
    dim: usize,
    hidden: usize,
}

/// Per-step activations kept for backprop; all arrays index as t*hidden+j.
struct CoreStates {
    i: Vec<f64>,
    f: Vec<f64>,
    g: Vec<f64>,
    o: Vec<f64>,
    c: Vec<f64>,
    tc: Vec<f64>,
    h: Vec<f64>,
}

impl LstmCore {
    fn off_w(&self) -> usize {
        0
    }
    fn off_u(&self) -> usize {
        4 * self.hidden * self.dim
    }
    fn off_b(&self) -> usize {
        self.off_u() + 4 * self.hidden * self.hidden
    }
    fn n_params(&self) -> usize {
        self.off_b() + 4 * self.hidden
    }

    fn init(&self, params: &mut [f64], rng: &mut ChaCha8Rng) {
        for j in 0..4 * self.hidden * self.dim {
            params[self.off_w() + j] = uniform_fan_in(rng, self.dim);
        }
        for j in 0..4 * self.hidden * self.hidden {
            params[self.off_u() + j] = uniform_fan_in(rng, self.hidden);
        }
    }

    fn forward(&self, params: &[f64], x: &EncodedInput) -> CoreStates {
        let (t_max, hd) = (x.window, self.hidden);
        let mut st = CoreStates {
            i: vec![0.0; t_max * hd],
            f: vec![0.0; t_max * hd],
            g: vec![0.0; t_max * hd],
            o: vec![0.0; t_max * hd],
            c: vec![0.0; t_max * hd],
            tc: vec![0.0; t_max * hd],
            h: vec![0.0; t_max * hd],
        };
        let mut z = vec![0.0f64; 4 * hd];
        for t in 0..t_max {
            let xt = x.row(t);
            for r in 0..4 * hd {
                let mut acc = params[self.off_b() + r];
                let wrow = &params[self.off_w() + r * self.dim..self.off_w() + (r + 1) * self.dim];
                for (w, v) in wrow.iter().zip(xt) {
                    acc += w * v;
                }
                if t > 0 {
                    let urow =
                        &params[self.off_u() + r * hd..self.off_u() + (r + 1) * hd];
                    let hp = &st.h[(t - 1) * hd..t * hd];
                    for (u, v) in urow.iter().zip(hp) {
                        acc += u * v;
                    }
                }
                z[r] = acc;
            }
            for j in 0..hd {
                let at = t * hd + j;
                st.i[at] = sigmoid(z[j]);
                st.f[at] = sigmoid(z[hd + j]);
                st.g[at] = tanh(z[2 * hd + j]);
                st.o[at] = sigmoid(z[3 * hd + j]);
                let c_prev = if t > 0 { st.c[(t - 1) * hd + j] } else { 0.0 };
                st.c[at] = st.f[at] * c_prev + st.i[at] * st.g[at];
                st.tc[at] = tanh(st.c[at]);
                st.h[at] = st.o[at] * st.tc[at];
            }
        }
        st
    }

    /// Backprop through time. `dh_ext[t*hidden+j]` carries gradient flowing
    /// into h_t from outside the recurrence (readout or attention).
    fn backward(
        &self,
        params: &[f64],
        x: &EncodedInput,
        st: &CoreStates,
        dh_ext: &[f64],
        grad: &mut [f64],
    ) {
        let (t_max, hd) = (x.window, self.hidden);
        let mut dh = vec![0.0f64; hd];
        let mut dc = vec![0.0f64; hd];
        let mut dz = vec![0.0f64; 4 * hd];
        for t in (0..t_max).rev() {
            let xt = x.row(t);
            for j in 0..hd {
                let at = t * hd + j;
                let dht = dh[j] + dh_ext[at];
                let do_ = dht * st.tc[at];
                let dct = dc[j] + dht * st.o[at] * (1.0 - st.tc[at] * st.tc[at]);
                let c_prev = if t > 0 { st.c[(t - 1) * hd + j] } else { 0.0 };
                dz[j] = dct * st.g[at] * st.i[at] * (1.0 - st.i[at]);
                dz[hd + j] = dct * c_prev * st.f[at] * (1.0 - st.f[at]);
                dz[2 * hd + j] = dct * st.i[at] * (1.0 - st.g[at] * st.g[at]);
                dz[3 * hd + j] = do_ * st.o[at] * (1.0 - st.o[at]);
                dc[j] = dct * st.f[at];
            }
            for r in 0..4 * hd {
                grad[self.off_b() + r] += dz[r];
                let wrow = self.off_w() + r * self.dim;
                for (k, &v) in xt.iter().enumerate() {
                    grad[wrow + k] += dz[r] * v;
                }
                if t > 0 {
                    let urow = self.off_u() + r * hd;
                    let hp = &st.h[(t - 1) * hd..t * hd];
                    for (k, &v) in hp.iter().enumerate() {
                        grad[urow + k] += dz[r] * v;
                    }
                }
            }
            dh.iter_mut().for_each(|v| *v = 0.0);
            if t > 0 {
                for r in 0..4 * hd {
                    let urow = self.off_u() + r * hd;
                    for (k, item) in dh.iter_mut().enumerate() {
                        *item += params[urow + k] * dz[r];
                    }
                }
            }
        }
    }
}

/// LSTM with a linear readout on the final hidden state.
struct LstmArch {
    core: LstmCore,
}

impl LstmArch {
    fn off_wout(&self) -> usize {
        self.core.n_params()
    }
    fn off_bout(&self) -> usize {
        self.off_wout() + self.core.hidden
    }
}

impl Arch for LstmArch {
    fn n_params(&self) -> usize {
        self.off_bout() + 1
    }

    fn init(&self, params: &mut [f64], rng: &mut ChaCha8Rng) {
        self.core.init(params, rng);
        for j in 0..self.core.hidden {
            params[self.off_wout() + j] = uniform_fan_in(rng, self.core.hidden);
        }
    }

    fn logit(&self, params: &[f64], x: &EncodedInput) -> f64 {
        let st = self.core.forward(params, x);
        let hd = self.core.hidden;
        let last = &st.h[(x.window - 1) * hd..x.window * hd];
        let mut logit = params[self.off_bout()];
        for (j, &h) in last.iter().enumerate() {
            logit += params[self.off_wout() + j] * h;
        }
        logit
    }

    fn accumulate_grad(&self, params: &[f64], x: &EncodedInput, dlogit: f64, grad: &mut [f64]) {
        let st = self.core.forward(params, x);
        let hd = self.core.hidden;
        let last_at = (x.window - 1) * hd;
        grad[self.off_bout()] += dlogit;
        let mut dh_ext = vec![0.0f64; x.window * hd];
        for j in 0..hd {
            grad[self.off_wout() + j] += dlogit * st.h[last_at + j];
            dh_ext[last_at + j] = dlogit * params[self.off_wout() + j];
        }
        self.core.backward(params, x, &st, &dh_ext, grad);
    }
}

/// LSTM whose hidden states are pooled by additive attention:
/// e_t = v . tanh(W_a h_t + b_a), alpha = softmax(e), context = sum alpha_t h_t.
struct AttnArch {
    core: LstmCore,
    attn: usize,
}

struct AttnStates {
    /// tanh(W_a h_t + b_a), indexed t*attn+j.
    a: Vec<f64>,
    alpha: Vec<f64>,
    context: Vec<f64>,
}

impl AttnArch {
    fn off_wa(&self) -> usize {
        self.core.n_params()
    }
    fn off_ba(&self) -> usize {
        self.off_wa() + self.attn * self.core.hidden
    }
    fn off_v(&self) -> usize {
        self.off_ba() + self.attn
    }
    fn off_wout(&self) -> usize {
        self.off_v() + self.attn
    }
    fn off_bout(&self) -> usize {
        self.off_wout() + self.core.hidden
    }

    fn attend(&self, params: &[f64], st: &CoreStates, t_max: usize) -> AttnStates {
        let (hd, ad) = (self.core.hidden, self.attn);
        let mut a = vec![0.0f64; t_max * ad];
        let mut e = vec![0.0f64; t_max];
        for t in 0..t_max {
            let ht = &st.h[t * hd..(t + 1) * hd];
            let mut et = 0.0;
            for j in 0..ad {
                let row = &params[self.off_wa() + j * hd..self.off_wa() + (j + 1) * hd];
                let mut z = params[self.off_ba() + j];
                for (w, v) in row.iter().zip(ht) {
                    z += w * v;
                }
                let aj = tanh(z);
                a[t * ad + j] = aj;
                et += params[self.off_v() + j] * aj;
            }
            e[t] = et;
        }
        let peak = e.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut alpha: Vec<f64> = e.iter().map(|&et| exp(et - peak)).collect();
        let norm: f64 = alpha.iter().sum();
        alpha.iter_mut().for_each(|w| *w /= norm);
        let mut context = vec![0.0f64; hd];
        for t in 0..t_max {
            for (j, item) in context.iter_mut().enumerate() {
                *item += alpha[t] * st.h[t * hd + j];
            }
        }
        AttnStates { a, alpha, context }
    }
}

impl Arch for AttnArch {
    fn n_params(&self) -> usize {
        self.off_bout() + 1
    }

    fn init(&self, params: &mut [f64], rng: &mut ChaCha8Rng) {
        self.core.init(params, rng);
        for j in 0..self.attn * self.core.hidden {
            params[self.off_wa() + j] = uniform_fan_in(rng, self.core.hidden);
        }
        for j in 0..self.attn {
            params[self.off_v() + j] = uniform_fan_in(rng, self.attn);
        }
        for j in 0..self.core.hidden {
            params[self.off_wout() + j] = uniform_fan_in(rng, self.core.hidden);
        }
    }

    fn logit(&self, params: &[f64], x: &EncodedInput) -> f64 {
        let st = self.core.forward(params, x);
        let at = self.attend(params, &st, x.window);
        let mut logit = params[self.off_bout()];
        for (j, &c) in at.context.iter().enumerate() {
            logit += params[self.off_wout() + j] * c;
        }
        logit
    }

    fn accumulate_grad(&self, params: &[f64], x: &EncodedInput, dlogit: f64, grad: &mut [f64]) {
        let (hd, ad, t_max) = (self.core.hidden, self.attn, x.window);
        let st = self.core.forward(params, x);
        let at = self.attend(params, &st, t_max);

        grad[self.off_bout()] += dlogit;
        let mut dctx = vec![0.0f64; hd];
        for j in 0..hd {
            grad[self.off_wout() + j] += dlogit * at.context[j];
            dctx[j] = dlogit * params[self.off_wout() + j];
        }

        // context = sum_t alpha_t h_t.
        let mut dalpha = vec![0.0f64; t_max];
        let mut dh_ext = vec![0.0f64; t_max * hd];
        for t in 0..t_max {
            for j in 0..hd {
                dalpha[t] += dctx[j] * st.h[t * hd + j];
                dh_ext[t * hd + j] += at.alpha[t] * dctx[j];
            }
        }
        // Softmax: de_t = alpha_t (dalpha_t - sum_s alpha_s dalpha_s).
        let pull: f64 = at.alpha.iter().zip(&dalpha).map(|(a, d)| a * d).sum();
        for t in 0..t_max {
            let de = at.alpha[t] * (dalpha[t] - pull);
            for j in 0..ad {
                let aj = at.a[t * ad + j];
                grad[self.off_v() + j] += de * aj;
                let dz = de * params[self.off_v() + j] * (1.0 - aj * aj);
                grad[self.off_ba() + j] += dz;
                let row = self.off_wa() + j * hd;
                for k in 0..hd {
                    grad[row + k] += dz * st.h[t * hd + k];
                    dh_ext[t * hd + k] += dz * params[row + k];
                }
            }
        }
        self.core.backward(params, x, &st, &dh_ext, grad);
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LstmModel {
    dim: usize,
    hidden: usize,
    params: Vec<f64>,
    epoch_losses: Vec<f64>,
}

impl LstmModel {
    fn arch(&self) -> LstmArch {
        LstmArch {
            core: LstmCore {
                dim: self.dim,
                hidden: self.hidden,
            },
        }
    }

    pub fn predict_proba(&self, x: &EncodedInput) -> f64 {
        sigmoid(self.arch().logit(&self.params, x))
    }

    pub fn epoch_losses(&self) -> &[f64] {
        &self.epoch_losses
    }

    pub(super) fn digest(&self, d: Digest) -> Digest {
        d.u64(self.dim as u64).u64(self.hidden as u64).f64s(&self.params)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttnLstmModel {
    dim: usize,
    hidden: usize,
    attn_dim: usize,
    params: Vec<f64>,
    epoch_losses: Vec<f64>,
}

impl AttnLstmModel {
    fn arch(&self) -> AttnArch {
        AttnArch {
            core: LstmCore {
                dim: self.dim,
                hidden: self.hidden,
            },
            attn: self.attn_dim,
        }
    }

    pub fn predict_proba(&self, x: &EncodedInput) -> f64 {
        sigmoid(self.arch().logit(&self.params, x))
    }

    /// Softmax attention over window positions, oldest turn first.
    pub fn attention_weights(&self, x: &EncodedInput) -> Vec<f64> {
        let arch = self.arch();
        let st = arch.core.forward(&self.params, x);
        arch.attend(&self.params, &st, x.window).alpha
    }

    pub fn epoch_losses(&self) -> &[f64] {
        &self.epoch_losses
    }

    pub(super) fn digest(&self, d: Digest) -> Digest {
        d.u64(self.dim as u64)
            .u64(self.hidden as u64)
            .u64(self.attn_dim as u64)
            .f64s(&self.params)
    }
}

pub(super) fn train_lstm(
    hp: &NeuralParams,
    xs: &[EncodedInput],
    ys: &[bool],
    seed: u64,
) -> Result<LstmModel, ModelError> {
    let dim = xs[0].dim;
    let arch = LstmArch {
        core: LstmCore {
            dim,
            hidden: hp.lstm_hidden,
        },
    };
    let (params, epoch_losses) = train_arch(&arch, hp, xs, ys, seed)?;
    Ok(LstmModel {
        dim,
        hidden: hp.lstm_hidden,
        params,
        epoch_losses,
    })
}

pub(super) fn train_attn_lstm(
    hp: &NeuralParams,
    xs: &[EncodedInput],
    ys: &[bool],
    seed: u64,
) -> Result<AttnLstmModel, ModelError> {
    let dim = xs[0].dim;
    let arch = AttnArch {
        core: LstmCore {
            dim,
            hidden: hp.lstm_hidden,
        },
        attn: hp.attn_dim,
    };
    let (params, epoch_losses) = train_arch(&arch, hp, xs, ys, seed)?;
    Ok(AttnLstmModel {
        dim,
        hidden: hp.lstm_hidden,
        attn_dim: hp.attn_dim,
        params,
        epoch_losses,
    })
}

pub(super) fn gradient_check_lstm(
    hp: &NeuralParams,
    _window: usize,
    dim: usize,
    xs: &[EncodedInput],
    ys: &[bool],
    pos_weight: f64,
    seed: u64,
) -> Result<f64, ModelError> {
    let arch = LstmArch {
        core: LstmCore {
            dim,
            hidden: hp.lstm_hidden,
        },
    };
    gradient_check(&arch, xs, ys, pos_weight, seed)
}

pub(super) fn gradient_check_attn(
    hp: &NeuralParams,
    _window: usize,
    dim: usize,
    xs: &[EncodedInput],
    ys: &[bool],
    pos_weight: f64,
    seed: u64,
) -> Result<f64, ModelError> {
    let arch = AttnArch {
        core: LstmCore {
            dim,
            hidden: hp.lstm_hidden,
        },
        attn: hp.attn_dim,
    };
    gradient_check(&arch, xs, ys, pos_weight, seed)
}

#[cfg(test)]
mod tests {
    use super::super::test_support::toy_batch;
    use super::super::{fit, numeric_gradient_check, ModelKind, TrainConfig};
    use super::*;

    fn seq_cfg(kind: ModelKind) -> TrainConfig {
        let mut cfg = TrainConfig::for_kind(kind);
        cfg.neural.lstm_hidden = 6;
        cfg.neural.attn_dim = 4;
        cfg.neural.epochs = 60;
        cfg.neural.batch = 16;
        cfg.neural.learning_rate = 0.08;
        cfg
    }

    #[test]
    fn lstm_gradients_match_finite_differences() {
        let (xs, ys) = toy_batch(5, 3, 4, 21);
        let mut cfg = seq_cfg(ModelKind::Lstm);
        cfg.neural.lstm_hidden = 4;
        let err = numeric_gradient_check(&cfg, &xs, &ys).unwrap();
        assert!(err < 1e-4, "max relative gradient error {err}");
    }

    #[test]
    fn attention_gradients_match_finite_differences() {
        let (xs, ys) = toy_batch(5, 3, 4, 22);
        let mut cfg = seq_cfg(ModelKind::AttnLstm);
        cfg.neural.lstm_hidden = 4;
        cfg.neural.attn_dim = 3;
        let err = numeric_gradient_check(&cfg, &xs, &ys).unwrap();
        assert!(err < 1e-4, "max relative gradient error {err}");
    }

    #[test]
    fn lstm_learns_the_toy_signal() {
        let (xs, ys) = toy_batch(250, 3, 4, 31);
        let model = fit(&seq_cfg(ModelKind::Lstm), &xs, &ys, 4).unwrap();
        let mut correct = 0;
        for (x, &y) in xs.iter().zip(&ys) {
            if model.predict(x, 0.5).unwrap() == y {
                correct += 1;
            }
        }
        assert!(correct as f64 / xs.len() as f64 > 0.8, "train accuracy {correct}/250");
    }

    #[test]
    fn attention_weights_form_a_distribution() {
        let (xs, ys) = toy_batch(60, 4, 3, 17);
        let model = fit(&seq_cfg(ModelKind::AttnLstm), &xs, &ys, 2).unwrap();
        for x in xs.iter().take(10) {
            let alpha = model.attention_weights(x).unwrap().unwrap();
            assert_eq!(alpha.len(), 4);
            assert!(alpha.iter().all(|&a| a >= 0.0));
            let total: f64 = alpha.iter().sum();
            assert!((total - 1.0).abs() < 1e-12, "attention sums to {total}");
        }
        let plain = fit(&seq_cfg(ModelKind::Lstm), &xs, &ys, 2).unwrap();
        assert!(plain.attention_weights(&xs[0]).unwrap().is_none());
    }

    #[test]
    fn sequence_order_changes_the_lstm_score() {
        let (xs, ys) = toy_batch(120, 3, 4, 13);
        let model = fit(&seq_cfg(ModelKind::Lstm), &xs, &ys, 5).unwrap();
        let x = &xs[0];
        let mut reversed = Vec::with_capacity(x.flat().len());
        for t in (0..x.window).rev() {
            reversed.extend_from_slice(x.row(t));
        }
        let swapped = EncodedInput::new(x.window, x.dim, reversed).unwrap();
        let p_fwd = model.predict_proba(x).unwrap();
        let p_rev = model.predict_proba(&swapped).unwrap();
        assert!((p_fwd - p_rev).abs() > 1e-9, "order-insensitive: {p_fwd} vs {p_rev}");
    }

    #[test]
    fn seeded_training_is_reproducible() {
        let (xs, ys) = toy_batch(50, 2, 3, 7);
        let mut cfg = seq_cfg(ModelKind::AttnLstm);
        cfg.neural.epochs = 3;
        let a = fit(&cfg, &xs, &ys, 11).unwrap();
        let b = fit(&cfg, &xs, &ys, 11).unwrap();
        assert_eq!(a.param_digest(), b.param_digest());
    }
}
