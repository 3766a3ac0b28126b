//! Feedforward net plus the training loop shared by every backprop model.
//! Parameters live in one flat vector so optimizers, serialization, and
//! finite-difference checks never care about layer shapes.

use alloc::vec::Vec;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{effective_pos_weight, EncodedInput, ModelError, NeuralParams};
use crate::math::{derive_seed, ln, sigmoid, sqrt, Digest};

/// A differentiable scorer over encoded windows. `logit` and
/// `accumulate_grad` must describe the same function; the finite-difference
/// check enforces that.
pub(super) trait Arch {
    fn n_params(&self) -> usize;
    /// Fills `params` in place. Weights uniform in +-1/sqrt(fan_in), biases 0.
    fn init(&self, params: &mut [f64], rng: &mut ChaCha8Rng);
    fn logit(&self, params: &[f64], x: &EncodedInput) -> f64;
    /// Adds d(logit)/d(params) scaled by `dlogit` into `grad`.
    fn accumulate_grad(&self, params: &[f64], x: &EncodedInput, dlogit: f64, grad: &mut [f64]);
}

pub(super) fn uniform_fan_in(rng: &mut ChaCha8Rng, fan_in: usize) -> f64 {
    let bound = 1.0 / sqrt(fan_in.max(1) as f64);
    rng.gen_range(-bound..bound)
}

fn bce(p: f64, y: bool) -> f64 {
    let p = p.clamp(1e-15, 1.0 - 1e-15);
    if y {
        -ln(p)
    } else {
        -ln(1.0 - p)
    }
}

/// Weighted-mean batch objective and its gradient in one pass.
/// loss = sum_i w_i * bce_i / sum_i w_i, d loss / d logit_i = w_i (p_i - y_i) / sum w.
fn batch_objective<A: Arch>(
    arch: &A,
    params: &[f64],
    xs: &[EncodedInput],
    ys: &[bool],
    idx: &[usize],
    pos_weight: f64,
    grad: Option<&mut [f64]>,
) -> f64 {
    let wsum: f64 = idx
        .iter()
        .map(|&i| if ys[i] { pos_weight } else { 1.0 })
        .sum();
    let mut loss = 0.0;
    if let Some(grad) = grad {
        grad.iter_mut().for_each(|g| *g = 0.0);
        for &i in idx {
            let w = if ys[i] { pos_weight } else { 1.0 };
            let p = sigmoid(arch.logit(params, &xs[i]));
            loss += w * bce(p, ys[i]);
            let dlogit = w * (p - ys[i] as u8 as f64) / wsum;
            arch.accumulate_grad(params, &xs[i], dlogit, grad);
        }
    } else {
        for &i in idx {
            let w = if ys[i] { pos_weight } else { 1.0 };
            let p = sigmoid(arch.logit(params, &xs[i]));
            loss += w * bce(p, ys[i]);
        }
    }
    loss / wsum
}

/// Minibatch SGD over shuffled epochs. Returns the parameters and the
/// weighted mean loss per epoch.
pub(super) fn train_arch<A: Arch>(
    arch: &A,
    hp: &NeuralParams,
    xs: &[EncodedInput],
    ys: &[bool],
    seed: u64,
) -> Result<(Vec<f64>, Vec<f64>), ModelError> {
    let mut params = vec![0.0f64; arch.n_params()];
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "nn-init", 0));
    arch.init(&mut params, &mut rng);

    let pos_weight = effective_pos_weight(hp.pos_weight, ys);
    let mut grad = vec![0.0f64; params.len()];
    let mut order: Vec<usize> = (0..xs.len()).collect();
    let mut epoch_losses = Vec::with_capacity(hp.epochs);

    for epoch in 0..hp.epochs {
        let mut shuffle_rng =
            ChaCha8Rng::seed_from_u64(derive_seed(seed, "nn-shuffle", epoch as u64));
        order.shuffle(&mut shuffle_rng);

        let mut epoch_loss = 0.0;
        let mut epoch_wsum = 0.0;
        for (batch_no, batch) in order.chunks(hp.batch).enumerate() {
            let loss = batch_objective(arch, &params, xs, ys, batch, pos_weight, Some(&mut grad));
            if !loss.is_finite() {
                return Err(ModelError::NanLoss {
                    epoch,
                    batch: batch_no,
                });
            }
            for (p, g) in params.iter_mut().zip(&grad) {
                *p -= hp.learning_rate * g;
            }
            let bw: f64 = batch
                .iter()
                .map(|&i| if ys[i] { pos_weight } else { 1.0 })
                .sum();
            epoch_loss += loss * bw;
            epoch_wsum += bw;
        }
        epoch_losses.push(epoch_loss / epoch_wsum);
    }
    Ok((params, epoch_losses))
}

/// Max relative error between analytic and central finite-difference
/// gradients of the batch objective at a fresh init.
pub(super) fn gradient_check<A: Arch>(
    arch: &A,
    xs: &[EncodedInput],
    ys: &[bool],
    pos_weight: f64,
    seed: u64,
) -> Result<f64, ModelError> {
    if xs.is_empty() || xs.len() != ys.len() {
        return Err(ModelError::EmptyData);
    }
    let mut params = vec![0.0f64; arch.n_params()];
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "nn-init", 0));
    arch.init(&mut params, &mut rng);

    let idx: Vec<usize> = (0..xs.len()).collect();
    let mut analytic = vec![0.0f64; params.len()];
    batch_objective(arch, &params, xs, ys, &idx, pos_weight, Some(&mut analytic));

    const H: f64 = 1e-5;
    let mut worst = 0.0f64;
    for j in 0..params.len() {
        let keep = params[j];
        params[j] = keep + H;
        let up = batch_objective(arch, &params, xs, ys, &idx, pos_weight, None);
        params[j] = keep - H;
        let down = batch_objective(arch, &params, xs, ys, &idx, pos_weight, None);
        params[j] = keep;
        let numeric = (up - down) / (2.0 * H);
        let rel = (analytic[j] - numeric).abs() / (analytic[j].abs() + numeric.abs()).max(1e-8);
        if rel > worst {
            worst = rel;
        }
    }
    Ok(worst)
}

/// Two hidden ReLU layers and a linear readout.
struct MlpArch {
    input_dim: usize,
    h1: usize,
    h2: usize,
}

impl MlpArch {
    // Layout: W1 [h1 x input] | b1 [h1] | W2 [h2 x h1] | b2 [h2] | w3 [h2] | b3.
    fn w1(&self) -> usize {
        0
    }
    fn b1(&self) -> usize {
        self.w1() + self.h1 * self.input_dim
    }
    fn w2(&self) -> usize {
        self.b1() + self.h1
    }
    fn b2(&self) -> usize {
        self.w2() + self.h2 * self.h1
    }
    fn w3(&self) -> usize {
        self.b2() + self.h2
    }
    fn b3(&self) -> usize {
        self.w3() + self.h2
    }

    fn forward(&self, params: &[f64], x: &[f64], a1: &mut [f64], a2: &mut [f64]) -> f64 {
        for i in 0..self.h1 {
            let row = &params[self.w1() + i * self.input_dim..self.w1() + (i + 1) * self.input_dim];
            let mut z = params[self.b1() + i];
            for (w, v) in row.iter().zip(x) {
                z += w * v;
            }
            a1[i] = z.max(0.0);
        }
        for i in 0..self.h2 {
            let row = &params[self.w2() + i * self.h1..self.w2() + (i + 1) * self.h1];
            let mut z = params[self.b2() + i];
            for (w, v) in row.iter().zip(a1.iter()) {
                z += w * v;
            }
            a2[i] = z.max(0.0);
        }
        let mut logit = params[self.b3()];
        for i in 0..self.h2 {
            logit += params[self.w3() + i] * a2[i];
        }
        logit
    }
}

impl Arch for MlpArch {
    fn n_params(&self) -> usize {
        self.b3() + 1
    }

    fn init(&self, params: &mut [f64], rng: &mut ChaCha8Rng) {
        for j in 0..self.h1 * self.input_dim {
            params[self.w1() + j] = uniform_fan_in(rng, self.input_dim);
        }
        for j in 0..self.h2 * self.h1 {
            params[self.w2() + j] = uniform_fan_in(rng, self.h1);
        }
        for j in 0..self.h2 {
            params[self.w3() + j] = uniform_fan_in(rng, self.h2);
        }
        // Biases stay zero.
    }

    fn logit(&self, params: &[f64], x: &EncodedInput) -> f64 {
        let mut a1 = vec![0.0; self.h1];
        let mut a2 = vec![0.0; self.h2];
        self.forward(params, x.flat(), &mut a1, &mut a2)
    }

    fn accumulate_grad(&self, params: &[f64], x: &EncodedInput, dlogit: f64, grad: &mut [f64]) {
        let xf = x.flat();
        let mut a1 = vec![0.0; self.h1];
        let mut a2 = vec![0.0; self.h2];
        self.forward(params, xf, &mut a1, &mut a2);

        grad[self.b3()] += dlogit;
        let mut da2 = vec![0.0; self.h2];
        for i in 0..self.h2 {
            grad[self.w3() + i] += dlogit * a2[i];
            da2[i] = dlogit * params[self.w3() + i];
        }
        let mut da1 = vec![0.0; self.h1];
        for i in 0..self.h2 {
            if a2[i] <= 0.0 {
                continue;
            }
            let dz = da2[i];
            grad[self.b2() + i] += dz;
            let row = self.w2() + i * self.h1;
            for j in 0..self.h1 {
                grad[row + j] += dz * a1[j];
                da1[j] += dz * params[row + j];
            }
        }
        for i in 0..self.h1 {
            if a1[i] <= 0.0 {
                continue;
            }
            let dz = da1[i];
            grad[self.b1() + i] += dz;
            let row = self.w1() + i * self.input_dim;
            for (j, &v) in xf.iter().enumerate() {
                grad[row + j] += dz * v;
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MlpModel {
    input_dim: usize,
    hidden: (usize, usize),
    params: Vec<f64>,
    epoch_losses: Vec<f64>,
}

impl MlpModel {
    fn arch(&self) -> MlpArch {
        MlpArch {
            input_dim: self.input_dim,
            h1: self.hidden.0,
            h2: self.hidden.1,
        }
    }

    pub fn predict_proba(&self, x: &[f64]) -> f64 {
        let arch = self.arch();
        let mut a1 = vec![0.0; arch.h1];
        let mut a2 = vec![0.0; arch.h2];
        sigmoid(arch.forward(&self.params, x, &mut a1, &mut a2))
    }

    pub fn epoch_losses(&self) -> &[f64] {
        &self.epoch_losses
    }

    pub(super) fn digest(&self, d: Digest) -> Digest {
        d.u64(self.input_dim as u64)
            .u64(self.hidden.0 as u64)
            .u64(self.hidden.1 as u64)
            .f64s(&self.params)
    }
}

pub(super) fn train_mlp(
    hp: &NeuralParams,
    xs: &[EncodedInput],
    ys: &[bool],
    seed: u64,
) -> Result<MlpModel, ModelError> {
    let input_dim = xs[0].window * xs[0].dim;
    let arch = MlpArch {
        input_dim,
        h1: hp.mlp_hidden.0,
        h2: hp.mlp_hidden.1,
    };
    let (params, epoch_losses) = train_arch(&arch, hp, xs, ys, seed)?;
    Ok(MlpModel {
        input_dim,
        hidden: hp.mlp_hidden,
        params,
        epoch_losses,
    })
}

pub(super) fn gradient_check_mlp(
    hp: &NeuralParams,
    input_dim: usize,
    xs: &[EncodedInput],
    ys: &[bool],
    pos_weight: f64,
    seed: u64,
) -> Result<f64, ModelError> {
    let arch = MlpArch {
        input_dim,
        h1: hp.mlp_hidden.0,
        h2: hp.mlp_hidden.1,
    };
    gradient_check(&arch, xs, ys, pos_weight, seed)
}

#[cfg(test)]
mod tests {
    use super::super::test_support::toy_batch;
    use super::super::{fit, numeric_gradient_check, ModelKind, TrainConfig};
    use super::*;

    fn small_cfg() -> TrainConfig {
        let mut cfg = TrainConfig::for_kind(ModelKind::Mlp);
        cfg.neural.mlp_hidden = (8, 4);
        cfg.neural.epochs = 40;
        cfg.neural.batch = 16;
        cfg.neural.learning_rate = 0.05;
        cfg
    }

    #[test]
    fn gradients_match_finite_differences() {
        let (xs, ys) = toy_batch(6, 2, 3, 11);
        let mut cfg = small_cfg();
        cfg.neural.mlp_hidden = (5, 3);
        let err = numeric_gradient_check(&cfg, &xs, &ys).unwrap();
        assert!(err < 1e-4, "max relative gradient error {err}");
    }

    #[test]
    fn learns_the_toy_signal() {
        let (xs, ys) = toy_batch(300, 2, 4, 3);
        let model = fit(&small_cfg(), &xs, &ys, 9).unwrap();
        let mut correct = 0;
        for (x, &y) in xs.iter().zip(&ys) {
            if model.predict(x, 0.5).unwrap() == y {
                correct += 1;
            }
        }
        assert!(correct as f64 / xs.len() as f64 > 0.8, "train accuracy {correct}/300");
    }

    #[test]
    fn untrained_balanced_loss_starts_near_ln2() {
        let (xs, ys) = toy_batch(64, 1, 3, 5);
        let mut hp = NeuralParams::default();
        hp.mlp_hidden = (8, 4);
        hp.epochs = 1;
        hp.learning_rate = 1e-9;
        hp.pos_weight = Some(1.0);
        let model = train_mlp(&hp, &xs, &ys, 0).unwrap();
        let first = model.epoch_losses()[0];
        // Small random init keeps logits near zero, so loss sits near ln 2.
        assert!((first - core::f64::consts::LN_2).abs() < 0.05, "first epoch loss {first}");
    }

    #[test]
    fn seeded_training_is_reproducible() {
        let (xs, ys) = toy_batch(80, 2, 3, 8);
        let mut cfg = small_cfg();
        cfg.neural.epochs = 5;
        cfg.seed = 42;
        let a = fit(&cfg, &xs, &ys, 0).unwrap();
        let b = fit(&cfg, &xs, &ys, 0).unwrap();
        assert_eq!(a.param_digest(), b.param_digest());
        let mut other = cfg.clone();
        other.seed = 43;
        let c = fit(&other, &xs, &ys, 0).unwrap();
        assert_ne!(a.param_digest(), c.param_digest());
    }
}
