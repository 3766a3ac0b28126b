//! Binary hedge classifiers under one contract: fit on encoded windows,
//! emit a probability per input, round-trip through serialization without
//! changing a single prediction bit.

mod dummy;
mod gbdt;
mod lstm;
mod nn;

pub use dummy::DummyModel;
pub use gbdt::GbdtModel;
pub use lstm::{AttnLstmModel, LstmModel};
pub use nn::MlpModel;

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use serde::{Deserialize, Serialize};

use crate::math::Digest;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Gbdt,
    Mlp,
    Lstm,
    AttnLstm,
    Dummy,
}

impl ModelKind {
    pub const ALL: [ModelKind; 5] = [
        ModelKind::Gbdt,
        ModelKind::Mlp,
        ModelKind::Lstm,
        ModelKind::AttnLstm,
        ModelKind::Dummy,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Gbdt => "gbdt",
            ModelKind::Mlp => "mlp",
            ModelKind::Lstm => "lstm",
            ModelKind::AttnLstm => "attn_lstm",
            ModelKind::Dummy => "dummy",
        }
    }

    pub fn from_name(name: &str) -> Result<Self, ModelError> {
        ModelKind::ALL
            .into_iter()
            .find(|k| k.as_str() == name)
            .ok_or_else(|| ModelError::BadConfig(format!("unknown model kind \"{name}\"")))
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One encoded instance: `window` rows of `dim` masked-in coordinates,
/// row-major, oldest turn first. Tree and feedforward models read it
/// flattened; recurrent models read it row by row.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EncodedInput {
    pub window: usize,
    pub dim: usize,
    values: Vec<f64>,
}

impl EncodedInput {
    pub fn new(window: usize, dim: usize, values: Vec<f64>) -> Result<Self, ModelError> {
        if values.len() != window * dim {
            return Err(ModelError::ShapeMismatch {
                expected_window: window,
                expected_dim: dim,
                got: values.len(),
            });
        }
        Ok(EncodedInput { window, dim, values })
    }

    pub fn flat(&self) -> &[f64] {
        &self.values
    }

    pub fn flat_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn row(&self, t: usize) -> &[f64] {
        &self.values[t * self.dim..(t + 1) * self.dim]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GbdtParams {
    pub trees: usize,
    pub depth: usize,
    pub learning_rate: f64,
    pub min_leaf: usize,
    pub feature_bins: usize,
    pub reg_lambda: f64,
}

impl Default for GbdtParams {
    fn default() -> Self {
        GbdtParams {
            trees: 100,
            depth: 6,
            learning_rate: 0.1,
            min_leaf: 5,
            feature_bins: 64,
            reg_lambda: 1.0,
        }
    }
}

impl GbdtParams {
    /// Shallow-binned preset in the style of histogram boosters.
    pub fn lightgbm_like() -> Self {
        GbdtParams::default()
    }

    /// Deeper-binned, shallower-tree preset.
    pub fn xgboost_like() -> Self {
        GbdtParams {
            depth: 4,
            feature_bins: 256,
            ..GbdtParams::default()
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NeuralParams {
    pub mlp_hidden: (usize, usize),
    pub lstm_hidden: usize,
    pub attn_dim: usize,
    pub epochs: usize,
    pub batch: usize,
    pub learning_rate: f64,
    /// Positive-class loss weight; `None` means N_neg/N_pos from the
    /// training labels. Skipped when absent so the config round-trips
    /// through formats without a null representation.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pos_weight: Option<f64>,
}

impl Default for NeuralParams {
    fn default() -> Self {
        NeuralParams {
            mlp_hidden: (256, 64),
            lstm_hidden: 128,
            attn_dim: 64,
            epochs: 30,
            batch: 32,
            learning_rate: 1e-3,
            pos_weight: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub kind: ModelKind,
    pub gbdt: GbdtParams,
    pub neural: NeuralParams,
    pub threshold: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            kind: ModelKind::Gbdt,
            gbdt: GbdtParams::default(),
            neural: NeuralParams::default(),
            threshold: 0.5,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn for_kind(kind: ModelKind) -> Self {
        TrainConfig {
            kind,
            ..TrainConfig::default()
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: &str| Err(ModelError::BadConfig(String::from(m)));
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(ModelError::BadConfig(format!(
                "threshold {} outside (0,1)",
                self.threshold
            )));
        }
        match self.kind {
            ModelKind::Gbdt => {
                let g = &self.gbdt;
                if g.depth == 0 || g.min_leaf == 0 || g.feature_bins < 2 {
                    return bad("gbdt depth/min_leaf/feature_bins must be positive (bins >= 2)");
                }
                if !(g.learning_rate > 0.0) || !(g.reg_lambda >= 0.0) {
                    return bad("gbdt learning_rate must be positive, reg_lambda nonnegative");
                }
            }
            ModelKind::Mlp | ModelKind::Lstm | ModelKind::AttnLstm => {
                let n = &self.neural;
                if n.epochs == 0 || n.batch == 0 {
                    return bad("neural epochs and batch must be positive");
                }
                if !(n.learning_rate > 0.0) {
                    return bad("neural learning_rate must be positive");
                }
                if self.kind == ModelKind::Mlp && (n.mlp_hidden.0 == 0 || n.mlp_hidden.1 == 0) {
                    return bad("mlp hidden sizes must be positive");
                }
                if matches!(self.kind, ModelKind::Lstm | ModelKind::AttnLstm) && n.lstm_hidden == 0 {
                    return bad("lstm hidden size must be positive");
                }
                if self.kind == ModelKind::AttnLstm && n.attn_dim == 0 {
                    return bad("attention dim must be positive");
                }
                if let Some(w) = n.pos_weight {
                    if !(w > 0.0) {
                        return bad("pos_weight must be positive");
                    }
                }
            }
            ModelKind::Dummy => {}
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ModelError {
    ShapeMismatch {
        expected_window: usize,
        expected_dim: usize,
        got: usize,
    },
    FingerprintMismatch {
        expected: u64,
        got: u64,
    },
    EmptyData,
    SingleClass,
    NanLoss {
        epoch: usize,
        batch: usize,
    },
    BadConfig(String),
}

impl fmt::Display for ModelError {
    fn fmt(&self, f: &mut fmt::Formatter) -> fmt::Result {
        match self {
            ModelError::ShapeMismatch {
                expected_window,
                expected_dim,
                got,
            } => write!(
                f,
                "input shape mismatch: expected {expected_window}x{expected_dim}, got {got} values"
            ),
            ModelError::FingerprintMismatch { expected, got } => write!(
                f,
                "schema fingerprint mismatch: model {expected:#018x}, input {got:#018x}"
            ),
            ModelError::EmptyData => write!(f, "training data is empty"),
            ModelError::SingleClass => {
                write!(f, "training data contains a single class; need both labels")
            }
            ModelError::NanLoss { epoch, batch } => {
                write!(f, "loss became non-finite at epoch {epoch}, batch {batch}")
            }
            ModelError::BadConfig(m) => write!(f, "invalid model config: {m}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum Params {
    Gbdt(GbdtModel),
    Mlp(MlpModel),
    Lstm(LstmModel),
    AttnLstm(AttnLstmModel),
    Dummy(DummyModel),
}

/// A fitted classifier plus the input contract it was trained under.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub kind: ModelKind,
    pub window: usize,
    pub dim: usize,
    pub fingerprint: u64,
    pub seed: u64,
    pub threshold: f64,
    params: Params,
}

/// Effective positive-class weight: the explicit value, or N_neg/N_pos.
pub fn effective_pos_weight(explicit: Option<f64>, ys: &[bool]) -> f64 {
    if let Some(w) = explicit {
        return w;
    }
    let pos = ys.iter().filter(|&&y| y).count();
    let neg = ys.len() - pos;
    if pos == 0 {
        1.0
    } else {
        neg as f64 / pos as f64
    }
}

fn check_both_classes(ys: &[bool]) -> Result<(), ModelError> {
    if ys.is_empty() {
        return Err(ModelError::EmptyData);
    }
    let pos = ys.iter().filter(|&&y| y).count();
    if pos == 0 || pos == ys.len() {
        return Err(ModelError::SingleClass);
    }
    Ok(())
}

fn check_uniform_shape(xs: &[EncodedInput]) -> Result<(usize, usize), ModelError> {
    let first = xs.first().ok_or(ModelError::EmptyData)?;
    for x in xs {
        if x.window != first.window || x.dim != first.dim {
            return Err(ModelError::ShapeMismatch {
                expected_window: first.window,
                expected_dim: first.dim,
                got: x.flat().len(),
            });
        }
    }
    Ok((first.window, first.dim))
}

/// Fits the classifier named by `config.kind`. Deterministic given
/// (config, data order).
pub fn fit(
    config: &TrainConfig,
    xs: &[EncodedInput],
    ys: &[bool],
    fingerprint: u64,
) -> Result<TrainedModel, ModelError> {
    config.validate()?;
    if xs.len() != ys.len() {
        return Err(ModelError::BadConfig(format!(
            "inputs ({}) and labels ({}) differ in length",
            xs.len(),
            ys.len()
        )));
    }
    let (window, dim) = check_uniform_shape(xs)?;
    if config.kind != ModelKind::Dummy {
        check_both_classes(ys)?;
    } else if ys.is_empty() {
        return Err(ModelError::EmptyData);
    }

    let params = match config.kind {
        ModelKind::Gbdt => Params::Gbdt(gbdt::train(&config.gbdt, xs, ys, config.seed)?),
        ModelKind::Mlp => Params::Mlp(nn::train_mlp(&config.neural, xs, ys, config.seed)?),
        ModelKind::Lstm => Params::Lstm(lstm::train_lstm(&config.neural, xs, ys, config.seed)?),
        ModelKind::AttnLstm => {
            Params::AttnLstm(lstm::train_attn_lstm(&config.neural, xs, ys, config.seed)?)
        }
        ModelKind::Dummy => Params::Dummy(dummy::train(ys)),
    };

    Ok(TrainedModel {
        kind: config.kind,
        window,
        dim,
        fingerprint,
        seed: config.seed,
        threshold: config.threshold,
        params,
    })
}

impl TrainedModel {
    fn check_shape(&self, x: &EncodedInput) -> Result<(), ModelError> {
        if x.window != self.window || x.dim != self.dim {
            return Err(ModelError::ShapeMismatch {
                expected_window: self.window,
                expected_dim: self.dim,
                got: x.flat().len(),
            });
        }
        Ok(())
    }

    pub fn verify_fingerprint(&self, fingerprint: u64) -> Result<(), ModelError> {
        if self.fingerprint != fingerprint {
            return Err(ModelError::FingerprintMismatch {
                expected: self.fingerprint,
                got: fingerprint,
            });
        }
        Ok(())
    }

    /// Hedge probability for one input. Pure; repeated calls agree bit for
    /// bit. The dummy baseline ignores the input entirely.
    pub fn predict_proba(&self, x: &EncodedInput) -> Result<f64, ModelError> {
        self.check_shape(x)?;
        Ok(match &self.params {
            Params::Gbdt(m) => m.predict_proba(x.flat()),
            Params::Mlp(m) => m.predict_proba(x.flat()),
            Params::Lstm(m) => m.predict_proba(x),
            Params::AttnLstm(m) => m.predict_proba(x),
            Params::Dummy(m) => m.draws(self.seed, 1)[0],
        })
    }

    /// Probabilities for a batch. For the dummy baseline the i-th output is
    /// the i-th draw of its seeded class stream, so a whole evaluation set
    /// gets stratified guesses in one call.
    pub fn predict_proba_seq(&self, xs: &[EncodedInput]) -> Result<Vec<f64>, ModelError> {
        for x in xs {
            self.check_shape(x)?;
        }
        if let Params::Dummy(m) = &self.params {
            return Ok(m.draws(self.seed, xs.len()));
        }
        xs.iter().map(|x| self.predict_proba(x)).collect()
    }

    /// Thresholded prediction; the boundary counts as positive.
    pub fn predict(&self, x: &EncodedInput, threshold: f64) -> Result<bool, ModelError> {
        Ok(self.predict_proba(x)? >= threshold)
    }

    /// Digest of every fitted parameter; changes iff training changed.
    pub fn param_digest(&self) -> u64 {
        let d = Digest::new().str(self.kind.as_str());
        match &self.params {
            Params::Gbdt(m) => m.digest(d),
            Params::Mlp(m) => m.digest(d),
            Params::Lstm(m) => m.digest(d),
            Params::AttnLstm(m) => m.digest(d),
            Params::Dummy(m) => m.digest(d),
        }
        .finish()
    }

    /// Per-round weighted training loss, available for boosted models.
    pub fn boosting_losses(&self) -> Option<&[f64]> {
        match &self.params {
            Params::Gbdt(m) => Some(m.round_losses()),
            _ => None,
        }
    }

    /// Attention distribution over the window, available for the attention
    /// model. Nonnegative, sums to 1.
    pub fn attention_weights(&self, x: &EncodedInput) -> Result<Option<Vec<f64>>, ModelError> {
        self.check_shape(x)?;
        Ok(match &self.params {
            Params::AttnLstm(m) => Some(m.attention_weights(x)),
            _ => None,
        })
    }
}

/// Maximum relative error between analytic and central finite-difference
/// gradients on the given batch. Meant for small shapes.
pub fn numeric_gradient_check(
    config: &TrainConfig,
    xs: &[EncodedInput],
    ys: &[bool],
) -> Result<f64, ModelError> {
    config.validate()?;
    let (window, dim) = check_uniform_shape(xs)?;
    let pos_weight = effective_pos_weight(config.neural.pos_weight, ys);
    match config.kind {
        ModelKind::Mlp => nn::gradient_check_mlp(&config.neural, window * dim, xs, ys, pos_weight, config.seed),
        ModelKind::Lstm => lstm::gradient_check_lstm(&config.neural, window, dim, xs, ys, pos_weight, config.seed),
        ModelKind::AttnLstm => {
            lstm::gradient_check_attn(&config.neural, window, dim, xs, ys, pos_weight, config.seed)
        }
        _ => Err(ModelError::BadConfig(
            "gradient check applies to backprop models only".into(),
        )),
    }
}

#[cfg(test)]
pub(crate) mod test_support {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Random batch with a linearly separable-ish signal on coordinate 0.
    pub fn toy_batch(
        n: usize,
        window: usize,
        dim: usize,
        seed: u64,
    ) -> (Vec<EncodedInput>, Vec<bool>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut xs = Vec::with_capacity(n);
        let mut ys = Vec::with_capacity(n);
        for _ in 0..n {
            let label = rng.gen_range(0.0..1.0) < 0.4;
            let mut v = Vec::with_capacity(window * dim);
            for _ in 0..window {
                for j in 0..dim {
                    let base: f64 = rng.gen_range(0.0..1.0);
                    let bump = if label && j == 0 { 0.6 } else { 0.0 };
                    v.push((base + bump).min(1.0));
                }
            }
            xs.push(EncodedInput::new(window, dim, v).unwrap());
            ys.push(label);
        }
        ys[0] = true;
        ys[1] = false;
        (xs, ys)
    }
}
