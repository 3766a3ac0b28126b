//! Stratified random baseline: remembers the training positive rate and
//! emits seeded 0/1 guesses at that rate, ignoring inputs entirely.

use alloc::vec::Vec;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::math::{derive_seed, Digest};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DummyModel {
    positive_rate: f64,
}

impl DummyModel {
    pub fn positive_rate(&self) -> f64 {
        self.positive_rate
    }

    /// The first n guesses of the seeded stream; guess i is 1.0 with
    /// probability `positive_rate`. Same seed, same stream.
    pub fn draws(&self, seed: u64, n: usize) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "dummy", 0));
        (0..n)
            .map(|_| {
                if rng.gen_range(0.0..1.0) < self.positive_rate {
                    1.0
                } else {
                    0.0
                }
            })
            .collect()
    }

    pub(super) fn digest(&self, d: Digest) -> Digest {
        d.f64(self.positive_rate)
    }
}

pub(super) fn train(ys: &[bool]) -> DummyModel {
    let pos = ys.iter().filter(|&&y| y).count();
    DummyModel {
        positive_rate: pos as f64 / ys.len() as f64,
    }
}

#[cfg(test)]
mod tests {
    use super::super::test_support::toy_batch;
    use super::super::{fit, ModelKind, TrainConfig};
    use super::*;

    #[test]
    fn guesses_track_the_training_rate() {
        let model = train(&[true, false, false, false]);
        assert_eq!(model.positive_rate(), 0.25);
        let draws = model.draws(3, 4000);
        assert!(draws.iter().all(|&d| d == 0.0 || d == 1.0));
        let rate = draws.iter().sum::<f64>() / draws.len() as f64;
        assert!((rate - 0.25).abs() < 0.03, "empirical rate {rate}");
    }

    #[test]
    fn streams_are_seeded_and_positional() {
        let model = train(&[true, true, false, false]);
        assert_eq!(model.draws(1, 100), model.draws(1, 100));
        assert_ne!(model.draws(1, 100), model.draws(2, 100));
        // A longer request extends the same stream.
        assert_eq!(model.draws(1, 100)[..50], model.draws(1, 50));
    }

    #[test]
    fn ignores_inputs_and_trains_on_single_class() {
        let (xs, _) = toy_batch(10, 2, 3, 0);
        let cfg = TrainConfig::for_kind(ModelKind::Dummy);
        let model = fit(&cfg, &xs, &[true; 10], 0).unwrap();
        for x in &xs {
            assert_eq!(model.predict_proba(x).unwrap(), 1.0);
        }
        let seq = model.predict_proba_seq(&xs).unwrap();
        assert_eq!(seq, vec![1.0; 10]);
    }
}
