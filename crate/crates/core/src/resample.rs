//! Minority oversampling by interpolation between nearest minority
//! neighbors. Applied to training folds only; every synthetic point lies on
//! the closed segment between two original minority points.

use alloc::vec::Vec;
use core::fmt;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::math::euclidean;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ResampleConfig {
    pub k_neighbors: usize,
    /// Desired minority/majority count ratio after resampling.
    pub target_ratio: f64,
    pub seed: u64,
}

impl Default for ResampleConfig {
    fn default() -> Self {
        ResampleConfig {
            k_neighbors: 5,
            target_ratio: 1.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ResampleError {
    EmptyClass,
    MinorityTooSmall { minority: usize, k: usize },
    BadConfig(&'static str),
    UnevenLengths,
}

impl fmt::Display for ResampleError {
    fn fmt(&self, f: &mut fmt::Formatter) -> fmt::Result {
        match self {
            ResampleError::EmptyClass => write!(f, "both classes must be present"),
            ResampleError::MinorityTooSmall { minority, k } => write!(
                f,
                "minority class has {minority} members, need at least k+1 = {}",
                k + 1
            ),
            ResampleError::BadConfig(m) => write!(f, "invalid resample config: {m}"),
            ResampleError::UnevenLengths => write!(f, "input vectors must share one length"),
        }
    }
}

/// Oversamples the minority class until minority/majority reaches the target
/// ratio (within one point). Originals are preserved in order; synthetics
/// follow in generation order. Deterministic for fixed (input, config).
pub fn smote(
    x: &[Vec<f64>],
    y: &[bool],
    config: &ResampleConfig,
) -> Result<(Vec<Vec<f64>>, Vec<bool>), ResampleError> {
    if config.k_neighbors == 0 {
        return Err(ResampleError::BadConfig("k_neighbors must be at least 1"));
    }
    if !(config.target_ratio > 0.0 && config.target_ratio <= 1.0) {
        return Err(ResampleError::BadConfig("target_ratio must lie in (0,1]"));
    }
    if x.len() != y.len() {
        return Err(ResampleError::UnevenLengths);
    }
    let dim = x.first().map(|v| v.len()).unwrap_or(0);
    if x.iter().any(|v| v.len() != dim) {
        return Err(ResampleError::UnevenLengths);
    }

    let pos: Vec<usize> = (0..y.len()).filter(|&i| y[i]).collect();
    let neg: Vec<usize> = (0..y.len()).filter(|&i| !y[i]).collect();
    if pos.is_empty() || neg.is_empty() {
        return Err(ResampleError::EmptyClass);
    }
    let (minority, majority, minority_label) = if pos.len() <= neg.len() {
        (pos, neg.len(), true)
    } else {
        (neg, pos.len(), false)
    };

    let mut out_x: Vec<Vec<f64>> = x.to_vec();
    let mut out_y: Vec<bool> = y.to_vec();

    let target = libm::round(config.target_ratio * majority as f64) as usize;
    if target <= minority.len() {
        return Ok((out_x, out_y));
    }
    let n_synth = target - minority.len();

    let k = config.k_neighbors;
    if minority.len() < k + 1 {
        return Err(ResampleError::MinorityTooSmall {
            minority: minority.len(),
            k,
        });
    }

    // k nearest minority neighbors per minority point, self excluded,
    // ties broken by index for determinism.
    let neighbors: Vec<Vec<usize>> = minority
        .iter()
        .map(|&i| {
            let mut dists: Vec<(f64, usize)> = minority
                .iter()
                .filter(|&&j| j != i)
                .map(|&j| (euclidean(&x[i], &x[j]), j))
                .collect();
            dists.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            dists.truncate(k);
            dists.into_iter().map(|(_, j)| j).collect()
        })
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    for _ in 0..n_synth {
        let m = rng.gen_range(0..minority.len());
        let p = &x[minority[m]];
        let q = &x[neighbors[m][rng.gen_range(0..k)]];
        let lambda: f64 = rng.gen_range(0.0..1.0);
        let s: Vec<f64> = p.iter().zip(q).map(|(a, b)| a + lambda * (b - a)).collect();
        out_x.push(s);
        out_y.push(minority_label);
    }

    Ok((out_x, out_y))
}
