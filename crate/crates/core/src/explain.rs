//! Shapley attribution over a fitted scorer. Players are groups of
//! flattened coordinates; the value function swaps a coalition's
//! coordinates from the explained instance into background references.
//! Exact mode enumerates every coalition; sampling mode averages marginal
//! contributions over seeded permutations.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::encoding::{FeatureMask, FeatureSchema};
use crate::math::{derive_seed, mean, pearson, sqrt};
use crate::models::EncodedInput;

/// Full coalition enumeration is 2^G value-function rows; this cap keeps it
/// to at most 4096.
pub const MAX_EXACT_PLAYERS: usize = 12;

/// A named set of coordinates in the flattened input that moves as one unit.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Player {
    pub name: String,
    pub coords: Vec<usize>,
}

/// One player per included feature group, spanning every window row.
pub fn group_players(schema: &FeatureSchema, mask: &FeatureMask, window: usize) -> Vec<Player> {
    let included = schema.included_indices(mask);
    let width = included.len();
    let mut position = alloc::collections::BTreeMap::new();
    for (pos, &idx) in included.iter().enumerate() {
        position.insert(idx, pos);
    }
    mask.groups()
        .map(|g| {
            let (off, span) = schema.group_span(g);
            let mut coords = Vec::with_capacity(span * window);
            for k in 0..window {
                for idx in off..off + span {
                    coords.push(k * width + position[&idx]);
                }
            }
            Player {
                name: String::from(g.as_str()),
                coords,
            }
        })
        .collect()
}

/// One player per flattened coordinate, named like the flattened columns.
pub fn feature_players(schema: &FeatureSchema, mask: &FeatureMask, window: usize) -> Vec<Player> {
    crate::encoding::flatten_names(schema, mask, window)
        .into_iter()
        .enumerate()
        .map(|(i, name)| Player {
            name,
            coords: vec![i],
        })
        .collect()
}

/// Seeded background sample. Takes the whole pool when it is small enough,
/// otherwise a without-replacement sample in ascending pool order.
pub fn sample_background(
    pool: &[EncodedInput],
    size: usize,
    seed: u64,
) -> Result<Vec<EncodedInput>, ExplainError> {
    if pool.is_empty() || size == 0 {
        return Err(ExplainError::EmptyBackground);
    }
    if pool.len() <= size {
        return Ok(pool.to_vec());
    }
    let mut idx: Vec<usize> = (0..pool.len()).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(
        seed,
        "background",
        0,
    )));
    idx.truncate(size);
    idx.sort_unstable();
    Ok(idx.into_iter().map(|i| pool[i].clone()).collect())
}

/// Attribution for one explained instance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InstanceExplanation {
    /// Mean score over the background with nothing taken from x.
    pub base: f64,
    /// Score of the explained instance itself.
    pub fx: f64,
    /// Per-player attribution, aligned with the player list.
    pub phi: Vec<f64>,
    /// Monte-Carlo standard errors; sampling mode only.
    pub std_err: Option<Vec<f64>>,
    /// fx - base - sum(phi). Exact mode keeps this within 1e-6.
    pub residual: f64,
}

fn check_shapes(x: &EncodedInput, background: &[EncodedInput]) -> Result<(), ExplainError> {
    if background.is_empty() {
        return Err(ExplainError::EmptyBackground);
    }
    for b in background {
        if b.window != x.window || b.dim != x.dim {
            return Err(ExplainError::ShapeMismatch {
                expected: (x.window, x.dim),
                got: (b.window, b.dim),
            });
        }
    }
    Ok(())
}

fn factorials() -> [f64; MAX_EXACT_PLAYERS + 1] {
    let mut f = [1.0; MAX_EXACT_PLAYERS + 1];
    for i in 1..=MAX_EXACT_PLAYERS {
        f[i] = f[i - 1] * i as f64;
    }
    f
}

/// Exact Shapley values by full coalition enumeration.
pub fn shapley_exact(
    score: &dyn Fn(&EncodedInput) -> f64,
    x: &EncodedInput,
    background: &[EncodedInput],
    players: &[Player],
) -> Result<InstanceExplanation, ExplainError> {
    check_shapes(x, background)?;
    let g_count = players.len();
    if g_count == 0 {
        return Err(ExplainError::NoPlayers);
    }
    if g_count > MAX_EXACT_PLAYERS {
        return Err(ExplainError::TooManyPlayers {
            got: g_count,
            max: MAX_EXACT_PLAYERS,
        });
    }

    let rows = 1usize << g_count;
    let mut v = vec![0.0f64; rows];
    let mut z = background[0].clone();
    for coalition in 0..rows {
        let mut total = 0.0;
        for b in background {
            z.flat_mut().copy_from_slice(b.flat());
            for (g, player) in players.iter().enumerate() {
                if coalition & (1 << g) != 0 {
                    for &c in &player.coords {
                        z.flat_mut()[c] = x.flat()[c];
                    }
                }
            }
            total += score(&z);
        }
        v[coalition] = total / background.len() as f64;
    }

    let fact = factorials();
    let mut phi = vec![0.0f64; g_count];
    for coalition in 0..rows {
        let s = coalition.count_ones() as usize;
        if s == g_count {
            continue;
        }
        let weight = fact[s] * fact[g_count - s - 1] / fact[g_count];
        for (g, phi_g) in phi.iter_mut().enumerate() {
            if coalition & (1 << g) == 0 {
                *phi_g += weight * (v[coalition | (1 << g)] - v[coalition]);
            }
        }
    }

    let base = v[0];
    let fx = score(x);
    let residual = fx - base - phi.iter().sum::<f64>();
    Ok(InstanceExplanation {
        base,
        fx,
        phi,
        std_err: None,
        residual,
    })
}

/// Monte-Carlo Shapley: each sample draws one background reference and one
/// player permutation, then telescopes marginal contributions along it.
pub fn shapley_sampling(
    score: &dyn Fn(&EncodedInput) -> f64,
    x: &EncodedInput,
    background: &[EncodedInput],
    players: &[Player],
    samples: usize,
    seed: u64,
) -> Result<InstanceExplanation, ExplainError> {
    check_shapes(x, background)?;
    if players.is_empty() {
        return Err(ExplainError::NoPlayers);
    }
    if samples == 0 {
        return Err(ExplainError::BadConfig("samples must be at least 1"));
    }

    let g_count = players.len();
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "shap-perm", 0));
    let mut perm: Vec<usize> = (0..g_count).collect();
    let mut sums = vec![0.0f64; g_count];
    let mut sumsq = vec![0.0f64; g_count];
    let mut z = background[0].clone();

    for _ in 0..samples {
        let b = &background[rng.gen_range(0..background.len())];
        perm.shuffle(&mut rng);
        z.flat_mut().copy_from_slice(b.flat());
        let mut prev = score(&z);
        for &g in &perm {
            for &c in &players[g].coords {
                z.flat_mut()[c] = x.flat()[c];
            }
            let cur = score(&z);
            sums[g] += cur - prev;
            sumsq[g] += (cur - prev) * (cur - prev);
            prev = cur;
        }
    }

    let m = samples as f64;
    let phi: Vec<f64> = sums.iter().map(|s| s / m).collect();
    let std_err: Vec<f64> = if samples < 2 {
        vec![0.0; g_count]
    } else {
        sumsq
            .iter()
            .zip(&phi)
            .map(|(&sq, &p)| {
                let var = ((sq - m * p * p) / (m - 1.0)).max(0.0);
                sqrt(var / m)
            })
            .collect()
    };

    let base_scores: Vec<f64> = background.iter().map(|b| score(b)).collect();
    let base = mean(&base_scores);
    let fx = score(x);
    let residual = fx - base - phi.iter().sum::<f64>();
    Ok(InstanceExplanation {
        base,
        fx,
        phi,
        std_err: Some(std_err),
        residual,
    })
}

/// Mean of a player's coordinates in one instance; the "input value" whose
/// correlation with phi defines the valence.
pub fn player_input_value(x: &EncodedInput, player: &Player) -> f64 {
    if player.coords.is_empty() {
        return 0.0;
    }
    player.coords.iter().map(|&c| x.flat()[c]).sum::<f64>() / player.coords.len() as f64
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValenceRow {
    pub player: String,
    /// +1, -1, or 0 when the correlation is too weak or degenerate.
    pub valence: i8,
    pub mean_abs_phi: f64,
    /// 1-based position after sorting by mean |phi| descending.
    pub rank: usize,
}

/// Correlation threshold below which a player's valence reads as neutral.
pub const VALENCE_MIN_CORRELATION: f64 = 0.05;

/// Cross-instance summary: per player, the sign of corr(input value, phi)
/// and the mean |phi|, ranked by the latter.
pub fn valence_summary(
    players: &[Player],
    explanations: &[InstanceExplanation],
    inputs: &[EncodedInput],
) -> Result<Vec<ValenceRow>, ExplainError> {
    if explanations.len() < 2 {
        return Err(ExplainError::TooFewInstances {
            got: explanations.len(),
        });
    }
    if explanations.len() != inputs.len() {
        return Err(ExplainError::BadConfig(
            "one explanation per input required",
        ));
    }
    for e in explanations {
        if e.phi.len() != players.len() {
            return Err(ExplainError::BadConfig(
                "explanation width does not match player count",
            ));
        }
    }

    let mut rows: Vec<ValenceRow> = players
        .iter()
        .enumerate()
        .map(|(g, player)| {
            let values: Vec<f64> = inputs.iter().map(|x| player_input_value(x, player)).collect();
            let phis: Vec<f64> = explanations.iter().map(|e| e.phi[g]).collect();
            let r = pearson(&values, &phis);
            let valence = if r > VALENCE_MIN_CORRELATION {
                1
            } else if r < -VALENCE_MIN_CORRELATION {
                -1
            } else {
                0
            };
            let mean_abs = mean(&phis.iter().map(|p| p.abs()).collect::<Vec<_>>());
            ValenceRow {
                player: player.name.clone(),
                valence,
                mean_abs_phi: mean_abs,
                rank: 0,
            }
        })
        .collect();
    rows.sort_by(|a, b| {
        b.mean_abs_phi
            .total_cmp(&a.mean_abs_phi)
            .then_with(|| a.player.cmp(&b.player))
    });
    for (i, row) in rows.iter_mut().enumerate() {
        row.rank = i + 1;
    }
    Ok(rows)
}

/// Players present in every table's top `depth` ranks, sorted by name.
pub fn consensus_players(tables: &[Vec<ValenceRow>], depth: usize) -> Vec<String> {
    let mut names: Vec<String> = Vec::new();
    let Some(first) = tables.first() else {
        return names;
    };
    for row in first.iter().filter(|r| r.rank <= depth) {
        let everywhere = tables[1..]
            .iter()
            .all(|t| t.iter().any(|r| r.rank <= depth && r.player == row.player));
        if everywhere {
            names.push(row.player.clone());
        }
    }
    names.sort();
    names
}

#[derive(Debug, Clone, PartialEq)]
pub enum ExplainError {
    TooManyPlayers { got: usize, max: usize },
    NoPlayers,
    EmptyBackground,
    ShapeMismatch {
        expected: (usize, usize),
        got: (usize, usize),
    },
    TooFewInstances { got: usize },
    BadConfig(&'static str),
}

impl fmt::Display for ExplainError {
    fn fmt(&self, f: &mut fmt::Formatter) -> fmt::Result {
        match self {
            ExplainError::TooManyPlayers { got, max } => {
                write!(f, "{got} players exceed the exact-enumeration cap of {max}")
            }
            ExplainError::NoPlayers => write!(f, "at least one player is required"),
            ExplainError::EmptyBackground => write!(f, "background set is empty"),
            ExplainError::ShapeMismatch { expected, got } => write!(
                f,
                "background shape {}x{} does not match instance {}x{}",
                got.0, got.1, expected.0, expected.1
            ),
            ExplainError::TooFewInstances { got } => {
                write!(f, "valence summary needs at least 2 instances, got {got}")
            }
            ExplainError::BadConfig(m) => write!(f, "invalid explain config: {m}"),
        }
    }
}
