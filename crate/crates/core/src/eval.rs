//! Stratified k-fold cross-validation. Each fold fits its own problem-id
//! normalization and oversampling on training instances only, so nothing
//! about a test fold can leak into the trained model.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{extract_instances, Corpus};
use crate::encoding::{
    default_backchannel_lexicon, flatten, EmbeddingProvider, EncodeError, EncodeOptions,
    FeatureMask, FeatureSchema, NormStats,
};
use crate::math::{derive_seed, mean, sample_std, sqrt, student_t_quantile, Digest};
use crate::models::{
    fit, EncodedInput, ModelError, ModelKind, TrainConfig, TrainedModel,
};
use crate::resample::{smote, ResampleConfig, ResampleError};

use alloc::collections::BTreeSet;

/// Confusion counts and the rates derived from them. Positive class =
/// hedge. Zero denominators yield zero rates.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub true_pos: usize,
    pub false_pos: usize,
    pub false_neg: usize,
    pub true_neg: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl Metrics {
    pub fn from_counts(tp: usize, fp: usize, fn_: usize, tn: usize) -> Self {
        let precision = if tp + fp == 0 {
            0.0
        } else {
            tp as f64 / (tp + fp) as f64
        };
        let recall = if tp + fn_ == 0 {
            0.0
        } else {
            tp as f64 / (tp + fn_) as f64
        };
        let f1 = harmonic_f1(precision, recall);
        Metrics {
            true_pos: tp,
            false_pos: fp,
            false_neg: fn_,
            true_neg: tn,
            precision,
            recall,
            f1,
        }
    }
}

pub fn harmonic_f1(precision: f64, recall: f64) -> f64 {
    if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    }
}

pub fn compute_metrics(predictions: &[bool], labels: &[bool]) -> Result<Metrics, EvalError> {
    if predictions.len() != labels.len() {
        return Err(EvalError::LengthMismatch {
            predictions: predictions.len(),
            labels: labels.len(),
        });
    }
    if predictions.is_empty() {
        return Err(EvalError::Empty);
    }
    let (mut tp, mut fp, mut fn_, mut tn) = (0, 0, 0, 0);
    for (&p, &y) in predictions.iter().zip(labels) {
        match (p, y) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => tn += 1,
        }
    }
    Ok(Metrics::from_counts(tp, fp, fn_, tn))
}

/// Expected F1 of a stratified random guesser that predicts positive at
/// rate g against a test base rate b: precision -> b, recall -> g.
pub fn dummy_f1_expectation(guess_rate: f64, base_rate: f64) -> f64 {
    harmonic_f1(base_rate, guess_rate)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldIndices {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// Shuffles each class separately, then deals indices round-robin so
/// per-fold positive counts differ by at most one.
pub fn stratified_kfold(
    labels: &[bool],
    k: usize,
    seed: u64,
) -> Result<Vec<FoldIndices>, EvalError> {
    if k < 2 {
        return Err(EvalError::BadConfig(String::from("k must be at least 2")));
    }
    let mut pos: Vec<usize> = (0..labels.len()).filter(|&i| labels[i]).collect();
    let mut neg: Vec<usize> = (0..labels.len()).filter(|&i| !labels[i]).collect();
    for class in [&mut pos, &mut neg] {
        if class.len() < k {
            return Err(EvalError::ClassTooSmall {
                size: class.len(),
                k,
            });
        }
    }
    pos.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(seed, "kfold-pos", 0)));
    neg.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(seed, "kfold-neg", 0)));

    let mut test_sets: Vec<Vec<usize>> = vec![Vec::new(); k];
    for (i, &idx) in pos.iter().chain(neg.iter()).enumerate() {
        test_sets[i % k].push(idx);
    }
    let mut folds = Vec::with_capacity(k);
    for f in 0..k {
        let in_test: BTreeSet<usize> = test_sets[f].iter().copied().collect();
        let mut test: Vec<usize> = test_sets[f].clone();
        test.sort_unstable();
        let train: Vec<usize> = (0..labels.len()).filter(|i| !in_test.contains(i)).collect();
        folds.push(FoldIndices { train, test });
    }
    Ok(folds)
}

/// A metric's center and confidence half-width at alpha = 0.05.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ci {
    pub mean: f64,
    pub half_width: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum CiMethod {
    /// Student-t interval across fold-level metric values.
    TInterval,
    /// Percentile bootstrap over pooled test predictions; the center stays
    /// the pooled metric.
    Bootstrap { resamples: usize },
}

impl Default for CiMethod {
    fn default() -> Self {
        CiMethod::TInterval
    }
}

/// mean +- t(0.975, n-1) * s / sqrt(n). A single value gets width zero.
pub fn t_ci(values: &[f64]) -> Ci {
    let m = mean(values);
    if values.len() < 2 {
        return Ci {
            mean: m,
            half_width: 0.0,
        };
    }
    let s = sample_std(values);
    let t = student_t_quantile(0.975, (values.len() - 1) as f64);
    Ci {
        mean: m,
        half_width: t * s / sqrt(values.len() as f64),
    }
}

/// Interpolated percentile of sorted values, rank h = (n-1)q.
fn percentile_sorted(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n - 1) as f64 * q;
    let lo = h as usize;
    let frac = h - lo as f64;
    if lo + 1 >= n {
        sorted[n - 1]
    } else {
        sorted[lo] + frac * (sorted[lo + 1] - sorted[lo])
    }
}

/// Percentile-bootstrap half-width for one metric over pooled predictions.
/// The returned mean is the pooled (non-resampled) metric.
pub fn bootstrap_ci(
    predictions: &[bool],
    labels: &[bool],
    resamples: usize,
    seed: u64,
    metric: impl Fn(&Metrics) -> f64,
) -> Result<Ci, EvalError> {
    let pooled = metric(&compute_metrics(predictions, labels)?);
    if resamples == 0 {
        return Err(EvalError::BadConfig(String::from(
            "bootstrap needs at least 1 resample",
        )));
    }
    let n = predictions.len();
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "bootstrap", 0));
    let mut stats = Vec::with_capacity(resamples);
    let mut p = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    for _ in 0..resamples {
        p.clear();
        y.clear();
        for _ in 0..n {
            let i = rng.gen_range(0..n);
            p.push(predictions[i]);
            y.push(labels[i]);
        }
        stats.push(metric(&compute_metrics(&p, &y)?));
    }
    stats.sort_by(|a, b| a.total_cmp(b));
    let half = 0.5 * (percentile_sorted(&stats, 0.975) - percentile_sorted(&stats, 0.025));
    Ok(Ci {
        mean: pooled,
        half_width: half,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    pub k: usize,
    pub seed: u64,
    pub window: usize,
    pub ci: CiMethod,
    /// Training-fold oversampling; `None` disables it for every model.
    pub smote: Option<ResampleConfig>,
    pub backchannel_cap: u32,
    pub backchannel_lexicon: BTreeSet<String>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            k: 5,
            seed: 0,
            window: 4,
            ci: CiMethod::TInterval,
            smote: Some(ResampleConfig::default()),
            backchannel_cap: 10,
            backchannel_lexicon: default_backchannel_lexicon(),
        }
    }
}

/// One fold's encoded data, ready to train. Everything downstream of this
/// struct is a pure function of it, which is what makes the leakage tests
/// meaningful: poisoning `test` must leave training artifacts unchanged.
#[derive(Clone, Debug)]
pub struct PreparedFold {
    pub fold: usize,
    pub seed: u64,
    pub smote: Option<ResampleConfig>,
    pub fingerprint: u64,
    pub train: Vec<EncodedInput>,
    pub train_y: Vec<bool>,
    pub test: Vec<EncodedInput>,
    pub test_y: Vec<bool>,
}

/// Encodes every fold of the stratified split. Normalization statistics are
/// fitted per fold on its training instances only.
pub fn cv_plan(
    corpus: &Corpus,
    schema: &FeatureSchema,
    mask: &FeatureMask,
    provider: &dyn EmbeddingProvider,
    eval: &EvalConfig,
) -> Result<Vec<PreparedFold>, EvalError> {
    let instances = extract_instances(corpus, eval.window);
    if instances.is_empty() {
        return Err(EvalError::Empty);
    }
    let labels: Vec<bool> = instances.iter().map(|i| i.label).collect();
    let folds = stratified_kfold(&labels, eval.k, eval.seed)?;
    let fingerprint = schema.fingerprint(mask, eval.window);
    let dim = schema.included_width(mask);

    let mut prepared = Vec::with_capacity(folds.len());
    for (f, fold) in folds.iter().enumerate() {
        let train_insts: Vec<_> = fold.train.iter().map(|&i| instances[i]).collect();
        let stats = NormStats::fit(corpus, &train_insts);
        let opts = EncodeOptions {
            stats,
            backchannel_cap: eval.backchannel_cap,
            backchannel_lexicon: eval.backchannel_lexicon.clone(),
        };
        let encode = |idx: &[usize]| -> Result<(Vec<EncodedInput>, Vec<bool>), EvalError> {
            let mut xs = Vec::with_capacity(idx.len());
            let mut ys = Vec::with_capacity(idx.len());
            for &i in idx {
                let tensor = crate::encoding::encode_instance(
                    &instances[i],
                    corpus,
                    schema,
                    provider,
                    mask,
                    &opts,
                )?;
                xs.push(EncodedInput::new(eval.window, dim, flatten(&tensor, schema, mask))?);
                ys.push(instances[i].label);
            }
            Ok((xs, ys))
        };
        let (train, train_y) = encode(&fold.train)?;
        let (test, test_y) = encode(&fold.test)?;
        prepared.push(PreparedFold {
            fold: f,
            seed: derive_seed(eval.seed, "fold", f as u64),
            smote: eval.smote,
            fingerprint,
            train,
            train_y,
            test,
            test_y,
        });
    }
    Ok(prepared)
}

#[derive(Clone, Debug)]
pub struct FoldOutcome {
    pub fold: usize,
    pub metrics: Metrics,
    pub model: TrainedModel,
    /// Digest of the exact training matrix the model saw (after any
    /// oversampling), plus its labels.
    pub train_digest: u64,
    pub probas: Vec<f64>,
    pub predictions: Vec<bool>,
    pub test_y: Vec<bool>,
}

fn digest_training_set(xs: &[EncodedInput], ys: &[bool]) -> u64 {
    let mut d = Digest::new().u64(xs.len() as u64);
    for (x, &y) in xs.iter().zip(ys) {
        d = d.f64s(x.flat()).u64(y as u64);
    }
    d.finish()
}

/// Trains and scores one fold. The baseline guesser trains on the raw fold
/// labels (no oversampling) so its guess rate matches the true base rate;
/// everything else sees the oversampled training set.
pub fn run_prepared(fold: &PreparedFold, train: &TrainConfig) -> Result<FoldOutcome, EvalError> {
    let mut cfg = train.clone();
    cfg.seed = derive_seed(fold.seed, "fit", 0);

    let (xs, ys): (Vec<EncodedInput>, Vec<bool>) = match (&fold.smote, cfg.kind) {
        (Some(sc), kind) if kind != ModelKind::Dummy => {
            let flat: Vec<Vec<f64>> = fold.train.iter().map(|x| x.flat().to_vec()).collect();
            let sc = ResampleConfig {
                seed: derive_seed(fold.seed, "smote", 0),
                ..*sc
            };
            let (rx, ry) = smote(&flat, &fold.train_y, &sc)?;
            let window = fold.train[0].window;
            let dim = fold.train[0].dim;
            let xs = rx
                .into_iter()
                .map(|v| EncodedInput::new(window, dim, v))
                .collect::<Result<Vec<_>, _>>()?;
            (xs, ry)
        }
        _ => (fold.train.clone(), fold.train_y.clone()),
    };

    let train_digest = digest_training_set(&xs, &ys);
    let model = fit(&cfg, &xs, &ys, fold.fingerprint)?;
    let probas = model.predict_proba_seq(&fold.test)?;
    let predictions: Vec<bool> = probas.iter().map(|&p| p >= model.threshold).collect();
    let metrics = compute_metrics(&predictions, &fold.test_y)?;
    Ok(FoldOutcome {
        fold: fold.fold,
        metrics,
        model,
        train_digest,
        probas,
        predictions,
        test_y: fold.test_y.clone(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub kind: ModelKind,
    pub mask: String,
    pub k: usize,
    pub folds: Vec<Metrics>,
    pub precision: Ci,
    pub recall: Ci,
    pub f1: Ci,
}

pub fn assemble_report(
    kind: ModelKind,
    mask: String,
    outcomes: &[FoldOutcome],
    ci: CiMethod,
    seed: u64,
) -> Result<CvReport, EvalError> {
    if outcomes.is_empty() {
        return Err(EvalError::Empty);
    }
    let folds: Vec<Metrics> = outcomes.iter().map(|o| o.metrics).collect();
    let (precision, recall, f1) = match ci {
        CiMethod::TInterval => {
            let collect = |get: fn(&Metrics) -> f64| -> Ci {
                let vals: Vec<f64> = folds.iter().map(get).collect();
                t_ci(&vals)
            };
            (
                collect(|m| m.precision),
                collect(|m| m.recall),
                collect(|m| m.f1),
            )
        }
        CiMethod::Bootstrap { resamples } => {
            let mut preds = Vec::new();
            let mut labels = Vec::new();
            for o in outcomes {
                preds.extend_from_slice(&o.predictions);
                labels.extend_from_slice(&o.test_y);
            }
            (
                bootstrap_ci(&preds, &labels, resamples, seed, |m| m.precision)?,
                bootstrap_ci(&preds, &labels, resamples, seed, |m| m.recall)?,
                bootstrap_ci(&preds, &labels, resamples, seed, |m| m.f1)?,
            )
        }
    };
    Ok(CvReport {
        kind,
        mask,
        k: outcomes.len(),
        folds,
        precision,
        recall,
        f1,
    })
}

/// Full pipeline for one (model, mask) cell: stratified split, per-fold
/// encoding and oversampling, training, scoring, CI assembly.
pub fn cross_validate(
    corpus: &Corpus,
    schema: &FeatureSchema,
    mask: &FeatureMask,
    provider: &dyn EmbeddingProvider,
    train: &TrainConfig,
    eval: &EvalConfig,
) -> Result<CvReport, EvalError> {
    let plan = cv_plan(corpus, schema, mask, provider, eval)?;
    let mut outcomes = Vec::with_capacity(plan.len());
    for fold in &plan {
        outcomes.push(run_prepared(fold, train)?);
    }
    assemble_report(train.kind, mask.name(), &outcomes, eval.ci, eval.seed)
}

#[derive(Debug, Clone, PartialEq)]
pub enum EvalError {
    LengthMismatch { predictions: usize, labels: usize },
    Empty,
    ClassTooSmall { size: usize, k: usize },
    BadConfig(String),
    Encode(EncodeError),
    Model(ModelError),
    Resample(ResampleError),
}

impl fmt::Display for EvalError {
    fn fmt(&self, f: &mut fmt::Formatter) -> fmt::Result {
        match self {
            EvalError::LengthMismatch {
                predictions,
                labels,
            } => write!(f, "{predictions} predictions against {labels} labels"),
            EvalError::Empty => write!(f, "nothing to evaluate"),
            EvalError::ClassTooSmall { size, k } => {
                write!(f, "a class has {size} members; stratified {k}-fold needs at least {k}")
            }
            EvalError::BadConfig(m) => write!(f, "invalid eval config: {m}"),
            EvalError::Encode(e) => write!(f, "{e}"),
            EvalError::Model(e) => write!(f, "{e}"),
            EvalError::Resample(e) => write!(f, "{e}"),
        }
    }
}

impl From<EncodeError> for EvalError {
    fn from(e: EncodeError) -> Self {
        EvalError::Encode(e)
    }
}

impl From<ModelError> for EvalError {
    fn from(e: ModelError) -> Self {
        EvalError::Model(e)
    }
}

impl From<ResampleError> for EvalError {
    fn from(e: ResampleError) -> Self {
        EvalError::Resample(e)
    }
}
