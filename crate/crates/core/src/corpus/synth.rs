//! Seeded synthetic corpus generator with a planted logistic hedge signal.
//!
//! Tutor-turn hedge labels are drawn from a logistic model over annotations
//! of the preceding turns, one coefficient per driving feature, plus a
//! session-rapport term. The intercept is solved numerically so the expected
//! positive rate equals the configured base rate exactly; the realized rate
//! differs only by binomial noise. Everything is a pure function of
//! (config, seed).

use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{
    slice_index_at, ConvStrategies, Corpus, DialogueAct, DyadProfile, GazeTarget, Nonverbal,
    RapportSlice, Speaker, Turn, TurnContext, TutStrategies,
};
use crate::math::{derive_seed, sigmoid};

/// Logistic coefficients, one per feature group, each acting through a
/// single driving feature of the turns preceding a tutor turn. A zero
/// coefficient makes that group pure noise.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GroupCoeffs {
    pub cs_praise: f64,
    pub ts_deep_question: f64,
    pub dialact_backchannel: f64,
    pub nb_tutee_gaze_partner: f64,
    pub rapport: f64,
    pub coninfo_correctness: f64,
}

impl Default for GroupCoeffs {
    fn default() -> Self {
        GroupCoeffs {
            cs_praise: -1.0,
            ts_deep_question: -0.8,
            dialact_backchannel: 0.0,
            nb_tutee_gaze_partner: -1.2,
            rapport: -1.5,
            coninfo_correctness: 1.5,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeneratorConfig {
    pub dyads: usize,
    pub sessions_per_dyad: u8,
    pub turns_per_session: usize,
    pub base_hedge_rate: f64,
    /// How many preceding turns feed the planted signal.
    pub window: usize,
    /// Recency weights for those turns, oldest first; normalized internally.
    pub recency_weights: Vec<f64>,
    pub coeffs: GroupCoeffs,
    /// Phrases inserted into hedging turns, whitespace-split into tokens.
    pub hedge_phrases: Vec<String>,
    /// Hedge rate for tutee turns (not driven by the planted model).
    pub tutee_hedge_rate: f64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            dyads: 6,
            sessions_per_dyad: 2,
            turns_per_session: 160,
            base_hedge_rate: 0.11,
            window: 4,
            recency_weights: vec![0.125, 0.25, 0.5, 1.0],
            coeffs: GroupCoeffs::default(),
            hedge_phrases: vec![
                "sort of".to_string(),
                "i guess".to_string(),
                "i'm sorry".to_string(),
                "maybe".to_string(),
                "probably".to_string(),
            ],
            tutee_hedge_rate: 0.12,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SynthError {
    Config(String),
    Internal(String),
}

impl fmt::Display for SynthError {
    fn fmt(&self, f: &mut fmt::Formatter) -> fmt::Result {
        match self {
            SynthError::Config(m) => write!(f, "invalid generator config: {m}"),
            SynthError::Internal(m) => write!(f, "generator internal error: {m}"),
        }
    }
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<(), SynthError> {
        let err = |m: String| Err(SynthError::Config(m));
        if self.dyads == 0 {
            return err("dyads must be positive".into());
        }
        if !(1..=2).contains(&self.sessions_per_dyad) {
            return err("sessions_per_dyad must be 1 or 2".into());
        }
        if self.turns_per_session == 0 {
            return err("turns_per_session must be positive".into());
        }
        if !(self.base_hedge_rate > 0.0 && self.base_hedge_rate < 1.0) {
            return err(format!(
                "base_hedge_rate {} outside (0,1)",
                self.base_hedge_rate
            ));
        }
        if self.window == 0 {
            return err("window must be at least 1".into());
        }
        if self.recency_weights.len() != self.window {
            return err(format!(
                "recency_weights length {} must equal window {}",
                self.recency_weights.len(),
                self.window
            ));
        }
        let sum: f64 = self.recency_weights.iter().sum();
        if self.recency_weights.iter().any(|w| *w < 0.0 || !w.is_finite()) || sum <= 0.0 {
            return err("recency_weights must be nonnegative with positive sum".into());
        }
        if self.hedge_phrases.is_empty() {
            return err("hedge_phrases must not be empty".into());
        }
        if !(0.0..1.0).contains(&self.tutee_hedge_rate) {
            return err(format!(
                "tutee_hedge_rate {} outside [0,1)",
                self.tutee_hedge_rate
            ));
        }
        Ok(())
    }
}

const NEUTRAL_VOCAB: [&str; 20] = [
    "we", "the", "this", "that", "problem", "answer", "number", "equals", "look", "see", "think",
    "write", "line", "part", "try", "then", "because", "fraction", "divide", "plus",
];

const BACKCHANNEL_TOKENS: [&str; 8] = ["um", "uh", "hhm", "mhm", "oh", "yeah", "okay", "right"];

const TURNS_PER_PROBLEM: usize = 12;

struct SessionDraft {
    dyad: String,
    session: u8,
    turns: Vec<Turn>,
    rapport: Vec<u8>,
    /// (turn index, intercept-free logit) per tutor turn.
    signals: Vec<(usize, f64)>,
}

fn pick<'a, R: Rng>(rng: &mut R, items: &[&'a str]) -> &'a str {
    items[rng.gen_range(0..items.len())]
}

fn gaze_from(u: f64, weights: [f64; 4]) -> GazeTarget {
    let total: f64 = weights.iter().sum();
    let mut acc = 0.0;
    for (g, w) in GazeTarget::ALL.iter().zip(weights) {
        acc += w / total;
        if u < acc {
            return *g;
        }
    }
    GazeTarget::Elsewhere
}

fn dialogue_act_from(u: f64) -> DialogueAct {
    let weights = [0.04, 0.14, 0.04, 0.12, 0.44, 0.22];
    let mut acc = 0.0;
    for (da, w) in DialogueAct::ALL.iter().zip(weights) {
        acc += w;
        if u < acc {
            return *da;
        }
    }
    DialogueAct::StatementOpinion
}

fn draft_session(cfg: &GeneratorConfig, seed: u64, dyad_idx: usize, session: u8) -> SessionDraft {
    let dyad = format!("d{dyad_idx:02}");
    let stream = (dyad_idx as u64) * 4 + session as u64;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "turns", stream));

    let n = cfg.turns_per_session;
    let mut turns: Vec<Turn> = Vec::with_capacity(n);
    let mut clock = 0.0f64;
    let mut correct = true;
    for i in 0..n {
        let speaker = if i % 2 == 0 { Speaker::Tutee } else { Speaker::Tutor };
        let duration = rng.gen_range(2.0..6.0);
        let start = clock;
        clock += duration;
        if i % TURNS_PER_PROBLEM == 0 {
            correct = rng.gen_range(0.0..1.0) < 0.6;
        }
        let cs = ConvStrategies {
            self_disclosure: rng.gen_range(0.0..1.0) < 0.06,
            praise: rng.gen_range(0.0..1.0) < 0.10,
            norm_violation: rng.gen_range(0.0..1.0) < 0.04,
            // Tutor hedges are assigned later from the planted model.
            hedge: speaker == Speaker::Tutee && rng.gen_range(0.0..1.0) < cfg.tutee_hedge_rate,
        };
        let ts = TutStrategies {
            deep_question: rng.gen_range(0.0..1.0) < 0.12,
            shallow_question: rng.gen_range(0.0..1.0) < 0.15,
            metacomm: rng.gen_range(0.0..1.0) < 0.08,
            knowledge_building: rng.gen_range(0.0..1.0) < 0.12,
            knowledge_telling: rng.gen_range(0.0..1.0) < 0.20,
        };
        let da = dialogue_act_from(rng.gen_range(0.0..1.0));
        let nb = Nonverbal {
            tutor_nod: rng.gen_range(0.0..1.0) < 0.20,
            tutee_nod: rng.gen_range(0.0..1.0) < 0.20,
            tutor_smile: rng.gen_range(0.0..1.0) < 0.15,
            tutee_smile: rng.gen_range(0.0..1.0) < 0.15,
            tutor_gaze: gaze_from(rng.gen_range(0.0..1.0), [0.10, 0.30, 0.45, 0.15]),
            tutee_gaze: gaze_from(rng.gen_range(0.0..1.0), [0.12, 0.28, 0.45, 0.15]),
        };
        let period = if i < n / 2 { 1 } else { 2 };
        turns.push(Turn {
            dyad_id: dyad.clone(),
            session,
            period,
            index: i,
            speaker,
            tokens: Vec::new(),
            start_s: start,
            end_s: clock,
            cs,
            ts,
            da,
            nb,
            ctx: TurnContext {
                problem_id: (i / TURNS_PER_PROBLEM) as u32,
                correctness: correct,
                session,
                period,
            },
        });
    }

    let n_slices = slice_index_at(clock) + 1;
    let mut rap_rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "rapport", stream));
    let mut rapport = Vec::with_capacity(n_slices);
    let mut level: i8 = rap_rng.gen_range(1..=7);
    for _ in 0..n_slices {
        rapport.push(level as u8);
        let step = match rap_rng.gen_range(0.0..1.0) {
            u if u < 0.25 => -1,
            u if u < 0.75 => 0,
            _ => 1,
        };
        level = (level + step).clamp(1, 7);
    }

    let weight_sum: f64 = cfg.recency_weights.iter().sum();
    let c = &cfg.coeffs;
    let mut signals = Vec::new();
    for i in 0..n {
        if turns[i].speaker != Speaker::Tutor {
            continue;
        }
        let mut s = 0.0;
        for (k, w) in cfg.recency_weights.iter().enumerate() {
            let back = cfg.window - k;
            if i < back {
                continue;
            }
            let t = &turns[i - back];
            let mut term = 0.0;
            term += c.cs_praise * t.cs.praise as u8 as f64;
            term += c.ts_deep_question * t.ts.deep_question as u8 as f64;
            term += c.dialact_backchannel * (t.da == DialogueAct::Backchannel) as u8 as f64;
            term += c.nb_tutee_gaze_partner * (t.nb.tutee_gaze == GazeTarget::Partner) as u8 as f64;
            term += c.coninfo_correctness * (t.ctx.correctness as u8 as f64 - 0.5);
            s += w / weight_sum * term;
        }
        let slice = slice_index_at(turns[i].midpoint_s()).min(rapport.len() - 1);
        let r_norm = (rapport[slice] - 1) as f64 / 6.0;
        s += c.rapport * 2.0 * (r_norm - 0.5);
        signals.push((i, s));
    }

    SessionDraft {
        dyad,
        session,
        turns,
        rapport,
        signals,
    }
}

/// Solves mean(sigmoid(b0 + s_i)) = target for b0 by bisection; the mean is
/// strictly increasing in b0.
fn solve_intercept(signals: &[f64], target: f64) -> f64 {
    let rate = |b0: f64| -> f64 {
        signals.iter().map(|s| sigmoid(b0 + s)).sum::<f64>() / signals.len() as f64
    };
    let mut lo = -30.0;
    let mut hi = 30.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if rate(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-13 {
            break;
        }
    }
    0.5 * (lo + hi)
}

fn decorate_tokens(cfg: &GeneratorConfig, seed: u64, stream: u64, turns: &mut [Turn]) {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "tokens", stream));
    for t in turns.iter_mut() {
        let n_base = rng.gen_range(3..9);
        let mut tokens: Vec<String> = (0..n_base)
            .map(|_| pick(&mut rng, &NEUTRAL_VOCAB).to_string())
            .collect();
        if matches!(t.da, DialogueAct::Backchannel | DialogueAct::BackchannelQuestion) {
            let extra = rng.gen_range(1..3);
            for _ in 0..extra {
                tokens.insert(0, pick(&mut rng, &BACKCHANNEL_TOKENS).to_string());
            }
        }
        if t.cs.hedge {
            let phrase = &cfg.hedge_phrases[rng.gen_range(0..cfg.hedge_phrases.len())];
            let at = rng.gen_range(0..=tokens.len());
            for (j, w) in phrase.split_whitespace().enumerate() {
                tokens.insert(at + j, w.to_string());
            }
        }
        t.tokens = tokens;
    }
}

/// Deterministic synthetic corpus with a planted, recoverable hedge signal.
pub fn generate_synthetic(cfg: &GeneratorConfig, seed: u64) -> Result<Corpus, SynthError> {
    cfg.validate()?;

    let mut drafts = Vec::new();
    for dyad_idx in 0..cfg.dyads {
        for session in 1..=cfg.sessions_per_dyad {
            drafts.push(draft_session(cfg, seed, dyad_idx, session));
        }
    }

    let all_signals: Vec<f64> = drafts
        .iter()
        .flat_map(|d| d.signals.iter().map(|&(_, s)| s))
        .collect();
    if all_signals.is_empty() {
        return Err(SynthError::Config(
            "no tutor turns generated; increase turns_per_session".into(),
        ));
    }
    let b0 = solve_intercept(&all_signals, cfg.base_hedge_rate);

    let mut profile_rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "profiles", 0));
    let profiles: Vec<DyadProfile> = (0..cfg.dyads)
        .map(|i| DyadProfile {
            dyad_id: format!("d{i:02}"),
            tutor_pretest: profile_rng.gen_range(0.0..=1.0),
            tutee_pretest: profile_rng.gen_range(0.0..=1.0),
        })
        .collect();

    let mut dialogues = Vec::with_capacity(drafts.len());
    let mut rapport = Vec::new();
    for (d, draft) in drafts.into_iter().enumerate() {
        let SessionDraft {
            dyad,
            session,
            mut turns,
            rapport: scores,
            signals,
        } = draft;
        let stream = d as u64;
        let mut label_rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "labels", stream));
        for (idx, s) in signals {
            turns[idx].cs.hedge = label_rng.gen_range(0.0..1.0) < sigmoid(b0 + s);
        }
        decorate_tokens(cfg, seed, stream, &mut turns);
        for (i, &score) in scores.iter().enumerate() {
            rapport.push(RapportSlice {
                dyad_id: dyad.clone(),
                session,
                slice_index: i,
                score,
            });
        }
        dialogues.push(turns);
    }

    Corpus::new(dialogues, rapport, profiles)
        .map_err(|e| SynthError::Internal(format!("generated corpus failed validation: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::extract_instances;

    fn small() -> GeneratorConfig {
        GeneratorConfig {
            dyads: 2,
            turns_per_session: 80,
            ..GeneratorConfig::default()
        }
    }

    #[test]
    fn same_seed_same_corpus() {
        let a = generate_synthetic(&small(), 7).unwrap();
        let b = generate_synthetic(&small(), 7).unwrap();
        assert_eq!(a.dialogues(), b.dialogues());
        assert_eq!(a.rapport_slices(), b.rapport_slices());
        assert_eq!(a.profiles(), b.profiles());
        let c = generate_synthetic(&small(), 8).unwrap();
        assert_ne!(a.dialogues(), c.dialogues());
    }

    #[test]
    fn positive_rate_tracks_base_rate() {
        // Ten seeds, roughly 10k tutor turns total.
        let cfg = GeneratorConfig {
            dyads: 4,
            turns_per_session: 320,
            ..GeneratorConfig::default()
        };
        let mut rates = Vec::new();
        for seed in 0..10u64 {
            let corpus = generate_synthetic(&cfg, seed).unwrap();
            let instances = extract_instances(&corpus, 4);
            let pos = instances.iter().filter(|i| i.label).count();
            rates.push(pos as f64 / instances.len() as f64);
        }
        let mean = rates.iter().sum::<f64>() / rates.len() as f64;
        assert!(
            (mean - 0.11).abs() < 0.02,
            "mean positive rate {mean} drifted from 0.11"
        );
    }

    #[test]
    fn negative_rapport_coefficient_lowers_hedge_rate_at_high_rapport() {
        let cfg = GeneratorConfig {
            dyads: 6,
            turns_per_session: 300,
            ..GeneratorConfig::default()
        };
        assert!(cfg.coeffs.rapport < 0.0);
        let mut low = (0usize, 0usize);
        let mut high = (0usize, 0usize);
        for seed in 0..3u64 {
            let corpus = generate_synthetic(&cfg, seed).unwrap();
            for turns in corpus.dialogues() {
                let first = &turns[0];
                let scores = corpus.scores_for(&first.dyad_id, first.session).unwrap();
                for t in turns {
                    if t.speaker != Speaker::Tutor {
                        continue;
                    }
                    let slice = slice_index_at(t.midpoint_s()).min(scores.len() - 1);
                    let r = scores[slice];
                    if r <= 3 {
                        low.0 += t.cs.hedge as usize;
                        low.1 += 1;
                    } else if r >= 5 {
                        high.0 += t.cs.hedge as usize;
                        high.1 += 1;
                    }
                }
            }
        }
        assert!(low.1 > 50 && high.1 > 50, "rapport walk never left the midrange");
        let p_low = low.0 as f64 / low.1 as f64;
        let p_high = high.0 as f64 / high.1 as f64;
        assert!(
            p_low > p_high,
            "hedge rate at low rapport {p_low} should exceed high rapport {p_high}"
        );
    }

    #[test]
    fn hedge_turns_carry_hedge_phrase_tokens() {
        let cfg = small();
        let corpus = generate_synthetic(&cfg, 3).unwrap();
        let phrase_heads: Vec<&str> = cfg
            .hedge_phrases
            .iter()
            .map(|p| p.split_whitespace().next().unwrap())
            .collect();
        let mut hedges = 0;
        for turns in corpus.dialogues() {
            for t in turns {
                if t.cs.hedge {
                    hedges += 1;
                    assert!(
                        t.tokens.iter().any(|tok| phrase_heads.contains(&tok.as_str())),
                        "hedge turn without hedge token: {:?}",
                        t.tokens
                    );
                }
            }
        }
        assert!(hedges > 0);
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let mut cfg = small();
        cfg.base_hedge_rate = 0.0;
        assert!(matches!(generate_synthetic(&cfg, 1), Err(SynthError::Config(_))));
        let mut cfg = small();
        cfg.dyads = 0;
        assert!(generate_synthetic(&cfg, 1).is_err());
        let mut cfg = small();
        cfg.recency_weights = vec![1.0; 3];
        assert!(generate_synthetic(&cfg, 1).is_err());
    }
}
