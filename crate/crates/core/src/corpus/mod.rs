//! Dialogue corpus model: annotated turns, rapport slices, dyad profiles,
//! instance extraction, and rapport lookup for turn histories.
//!
//! A corpus is immutable once constructed; every invariant (index contiguity,
//! timestamp ordering, rapport coverage, profile coverage, value ranges) is
//! checked in the constructor so downstream stages never re-validate.

pub mod synth;

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use serde::de::{self, Deserializer, Visitor};
use serde::ser::Serializer;
use serde::{Deserialize, Serialize};

/// Rapport annotations live on fixed 30-second slices of each session.
pub const SLICE_SECONDS: f64 = 30.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Speaker {
    Tutor,
    Tutee,
}

impl Speaker {
    pub fn as_str(self) -> &'static str {
        match self {
            Speaker::Tutor => "tutor",
            Speaker::Tutee => "tutee",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GazeTarget {
    None,
    Partner,
    Worksheet,
    Elsewhere,
}

impl GazeTarget {
    pub const ALL: [GazeTarget; 4] = [
        GazeTarget::None,
        GazeTarget::Partner,
        GazeTarget::Worksheet,
        GazeTarget::Elsewhere,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            GazeTarget::None => "none",
            GazeTarget::Partner => "partner",
            GazeTarget::Worksheet => "worksheet",
            GazeTarget::Elsewhere => "elsewhere",
        }
    }

    /// Position in the one-hot encoding; order is fixed and part of the
    /// on-disk format.
    pub fn one_hot_index(self) -> usize {
        match self {
            GazeTarget::None => 0,
            GazeTarget::Partner => 1,
            GazeTarget::Worksheet => 2,
            GazeTarget::Elsewhere => 3,
        }
    }
}

/// The six dialogue-act tags that occur in this corpus, with their
/// conventional short labels.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DialogueAct {
    Abandoned,
    Backchannel,
    BackchannelQuestion,
    YesNoQuestion,
    StatementNonOpinion,
    StatementOpinion,
}

impl DialogueAct {
    pub const ALL: [DialogueAct; 6] = [
        DialogueAct::Abandoned,
        DialogueAct::Backchannel,
        DialogueAct::BackchannelQuestion,
        DialogueAct::YesNoQuestion,
        DialogueAct::StatementNonOpinion,
        DialogueAct::StatementOpinion,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            DialogueAct::Abandoned => "%",
            DialogueAct::Backchannel => "b",
            DialogueAct::BackchannelQuestion => "bh",
            DialogueAct::YesNoQuestion => "qy",
            DialogueAct::StatementNonOpinion => "sd",
            DialogueAct::StatementOpinion => "sv",
        }
    }

    pub fn one_hot_index(self) -> usize {
        match self {
            DialogueAct::Abandoned => 0,
            DialogueAct::Backchannel => 1,
            DialogueAct::BackchannelQuestion => 2,
            DialogueAct::YesNoQuestion => 3,
            DialogueAct::StatementNonOpinion => 4,
            DialogueAct::StatementOpinion => 5,
        }
    }
}

macro_rules! string_enum_serde {
    ($ty:ident, $what:expr, [$(($variant:ident, $label:expr)),+ $(,)?]) => {
        impl Serialize for $ty {
            fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
                s.serialize_str(self.as_str())
            }
        }

        impl<'de> Deserialize<'de> for $ty {
            fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
                struct V;
                impl<'de> Visitor<'de> for V {
                    type Value = $ty;
                    fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                        write!(f, "a {} label", $what)
                    }
                    fn visit_str<E: de::Error>(self, v: &str) -> Result<$ty, E> {
                        match v {
                            $($label => Ok($ty::$variant),)+
                            other => Err(E::custom(format!(
                                "unknown {} \"{}\"", $what, other
                            ))),
                        }
                    }
                }
                d.deserialize_str(V)
            }
        }
    };
}

string_enum_serde!(Speaker, "speaker", [(Tutor, "tutor"), (Tutee, "tutee")]);
string_enum_serde!(
    GazeTarget,
    "gaze target",
    [
        (None, "none"),
        (Partner, "partner"),
        (Worksheet, "worksheet"),
        (Elsewhere, "elsewhere"),
    ]
);
string_enum_serde!(
    DialogueAct,
    "dialogue act",
    [
        (Abandoned, "%"),
        (Backchannel, "b"),
        (BackchannelQuestion, "bh"),
        (YesNoQuestion, "qy"),
        (StatementNonOpinion, "sd"),
        (StatementOpinion, "sv"),
    ]
);

/// Social conversational strategies of the turn holder. Independent flags.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvStrategies {
    pub self_disclosure: bool,
    pub praise: bool,
    pub norm_violation: bool,
    pub hedge: bool,
}

/// Pedagogical tutoring strategies of the turn holder. Independent flags.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TutStrategies {
    pub deep_question: bool,
    pub shallow_question: bool,
    pub metacomm: bool,
    pub knowledge_building: bool,
    pub knowledge_telling: bool,
}

/// Nonverbal behavior of both participants during one turn.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Nonverbal {
    pub tutor_nod: bool,
    pub tutee_nod: bool,
    pub tutor_smile: bool,
    pub tutee_smile: bool,
    pub tutor_gaze: GazeTarget,
    pub tutee_gaze: GazeTarget,
}

impl Default for Nonverbal {
    fn default() -> Self {
        Nonverbal {
            tutor_nod: false,
            tutee_nod: false,
            tutor_smile: false,
            tutee_smile: false,
            tutor_gaze: GazeTarget::None,
            tutee_gaze: GazeTarget::None,
        }
    }
}

/// Task context at the time of the turn.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TurnContext {
    pub problem_id: u32,
    pub correctness: bool,
    pub session: u8,
    pub period: u8,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Turn {
    pub dyad_id: String,
    pub session: u8,
    pub period: u8,
    pub index: usize,
    pub speaker: Speaker,
    pub tokens: Vec<String>,
    pub start_s: f64,
    pub end_s: f64,
    pub cs: ConvStrategies,
    pub ts: TutStrategies,
    pub da: DialogueAct,
    pub nb: Nonverbal,
    pub ctx: TurnContext,
}

impl Turn {
    pub fn midpoint_s(&self) -> f64 {
        0.5 * (self.start_s + self.end_s)
    }

    fn record_label(&self) -> String {
        format!("turn {}/s{}#{}", self.dyad_id, self.session, self.index)
    }
}

/// One 30-second rapport annotation; the slice covers
/// [30·slice_index, 30·(slice_index+1)).
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RapportSlice {
    pub dyad_id: String,
    pub session: u8,
    pub slice_index: usize,
    pub score: u8,
}

impl RapportSlice {
    pub fn start_s(&self) -> f64 {
        SLICE_SECONDS * self.slice_index as f64
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DyadProfile {
    pub dyad_id: String,
    pub tutor_pretest: f64,
    pub tutee_pretest: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum CorpusError {
    Invalid {
        record: String,
        field: String,
        message: String,
    },
    MissingRapport {
        dyad: String,
        session: u8,
    },
    MissingProfile {
        dyad: String,
    },
    NoCoveringSlice {
        dyad: String,
        session: u8,
        midpoint_s: f64,
    },
    EmptyHistory,
}

impl CorpusError {
    fn invalid(record: impl Into<String>, field: &str, message: impl Into<String>) -> Self {
        CorpusError::Invalid {
            record: record.into(),
            field: String::from(field),
            message: message.into(),
        }
    }
}

impl fmt::Display for CorpusError {
    fn fmt(&self, f: &mut fmt::Formatter) -> fmt::Result {
        match self {
            CorpusError::Invalid {
                record,
                field,
                message,
            } => write!(f, "{record}: field {field}: {message}"),
            CorpusError::MissingRapport { dyad, session } => {
                write!(f, "no rapport slices for dialogue {dyad}/s{session}")
            }
            CorpusError::MissingProfile { dyad } => {
                write!(f, "no profile for dyad {dyad}")
            }
            CorpusError::NoCoveringSlice {
                dyad,
                session,
                midpoint_s,
            } => write!(
                f,
                "no rapport slice covers {dyad}/s{session} at {midpoint_s:.1}s"
            ),
            CorpusError::EmptyHistory => write!(f, "history contains no real turns"),
        }
    }
}

/// Index of the 30-second slice containing time `t`.
pub fn slice_index_at(t: f64) -> usize {
    let idx = libm::floor(t / SLICE_SECONDS);
    if idx < 0.0 {
        0
    } else {
        idx as usize
    }
}

/// Validated, immutable collection of dialogues with their rapport and
/// profile annotations.
#[derive(Debug, Clone)]
pub struct Corpus {
    dialogues: Vec<Vec<Turn>>,
    rapport: Vec<RapportSlice>,
    profiles: Vec<DyadProfile>,
    slice_scores: BTreeMap<(String, u8), Vec<u8>>,
    profile_index: BTreeMap<String, usize>,
}

impl Corpus {
    pub fn new(
        dialogues: Vec<Vec<Turn>>,
        rapport: Vec<RapportSlice>,
        profiles: Vec<DyadProfile>,
    ) -> Result<Self, CorpusError> {
        let mut profile_index = BTreeMap::new();
        for (i, p) in profiles.iter().enumerate() {
            let rec = format!("profile {}", p.dyad_id);
            for (field, v) in [("tutor_pretest", p.tutor_pretest), ("tutee_pretest", p.tutee_pretest)] {
                if !(0.0..=1.0).contains(&v) || !v.is_finite() {
                    return Err(CorpusError::invalid(
                        rec.clone(),
                        field,
                        format!("pre-test score {v} outside [0,1]"),
                    ));
                }
            }
            if profile_index.insert(p.dyad_id.clone(), i).is_some() {
                return Err(CorpusError::invalid(rec, "dyad_id", "duplicate profile"));
            }
        }

        let mut slice_scores: BTreeMap<(String, u8), Vec<(usize, u8)>> = BTreeMap::new();
        for s in &rapport {
            let rec = format!("rapport {}/s{} slice {}", s.dyad_id, s.session, s.slice_index);
            if !(1..=7).contains(&s.score) {
                return Err(CorpusError::invalid(
                    rec,
                    "score",
                    format!("rapport out of range [1,7]: {}", s.score),
                ));
            }
            slice_scores
                .entry((s.dyad_id.clone(), s.session))
                .or_default()
                .push((s.slice_index, s.score));
        }
        let mut compact: BTreeMap<(String, u8), Vec<u8>> = BTreeMap::new();
        for ((dyad, session), mut entries) in slice_scores {
            entries.sort_by_key(|&(idx, _)| idx);
            let mut scores = Vec::with_capacity(entries.len());
            for (pos, (idx, score)) in entries.iter().enumerate() {
                if *idx != pos {
                    let rec = format!("rapport {dyad}/s{session} slice {idx}");
                    let msg = if *idx < pos {
                        "duplicate slice index"
                    } else {
                        "slice indices must be contiguous from 0"
                    };
                    return Err(CorpusError::invalid(rec, "slice_index", msg));
                }
                scores.push(*score);
            }
            compact.insert((dyad, session), scores);
        }

        let mut seen_keys: BTreeMap<(String, u8), ()> = BTreeMap::new();
        for (d, turns) in dialogues.iter().enumerate() {
            let first = turns
                .first()
                .ok_or_else(|| CorpusError::invalid(format!("dialogue #{d}"), "turns", "empty dialogue"))?;
            let key = (first.dyad_id.clone(), first.session);
            if seen_keys.insert(key.clone(), ()).is_some() {
                return Err(CorpusError::invalid(
                    format!("dialogue #{d}"),
                    "dyad_id/session",
                    format!("duplicate dialogue {}/s{}", first.dyad_id, first.session),
                ));
            }
            let scores = compact.get(&key).ok_or_else(|| CorpusError::MissingRapport {
                dyad: first.dyad_id.clone(),
                session: first.session,
            })?;
            if !profile_index.contains_key(&first.dyad_id) {
                return Err(CorpusError::MissingProfile {
                    dyad: first.dyad_id.clone(),
                });
            }
            let mut prev_start = 0.0f64;
            for (i, t) in turns.iter().enumerate() {
                let rec = t.record_label();
                if t.dyad_id != first.dyad_id || t.session != first.session {
                    return Err(CorpusError::invalid(
                        rec,
                        "dyad_id/session",
                        "all turns of a dialogue must share one (dyad, session)",
                    ));
                }
                if t.index != i {
                    return Err(CorpusError::invalid(
                        rec,
                        "index",
                        format!("indices must be contiguous from 0, expected {i}"),
                    ));
                }
                if !(1..=2).contains(&t.session) {
                    return Err(CorpusError::invalid(rec, "session", "session must be 1 or 2"));
                }
                if !(1..=2).contains(&t.period) {
                    return Err(CorpusError::invalid(rec, "period", "period must be 1 or 2"));
                }
                if t.ctx.session != t.session || t.ctx.period != t.period {
                    return Err(CorpusError::invalid(
                        rec,
                        "ctx",
                        "ctx session/period must match the turn's",
                    ));
                }
                if !t.start_s.is_finite() || !t.end_s.is_finite() || t.start_s < 0.0 || t.end_s < t.start_s {
                    return Err(CorpusError::invalid(
                        rec,
                        "start_s/end_s",
                        "need 0 <= start_s <= end_s",
                    ));
                }
                if t.start_s < prev_start {
                    return Err(CorpusError::invalid(
                        rec,
                        "start_s",
                        "turn start times must be non-decreasing",
                    ));
                }
                prev_start = t.start_s;
                if slice_index_at(t.midpoint_s()) >= scores.len() {
                    return Err(CorpusError::NoCoveringSlice {
                        dyad: t.dyad_id.clone(),
                        session: t.session,
                        midpoint_s: t.midpoint_s(),
                    });
                }
            }
        }

        Ok(Corpus {
            dialogues,
            rapport,
            profiles,
            slice_scores: compact,
            profile_index,
        })
    }

    /// Groups a flat turn stream into dialogues by consecutive
    /// (dyad, session) runs, then validates.
    pub fn from_turns(
        turns: Vec<Turn>,
        rapport: Vec<RapportSlice>,
        profiles: Vec<DyadProfile>,
    ) -> Result<Self, CorpusError> {
        let mut dialogues: Vec<Vec<Turn>> = Vec::new();
        for t in turns {
            match dialogues.last_mut() {
                Some(d) if d[0].dyad_id == t.dyad_id && d[0].session == t.session => d.push(t),
                _ => dialogues.push(vec![t]),
            }
        }
        Corpus::new(dialogues, rapport, profiles)
    }

    pub fn dialogues(&self) -> &[Vec<Turn>] {
        &self.dialogues
    }

    pub fn rapport_slices(&self) -> &[RapportSlice] {
        &self.rapport
    }

    pub fn profiles(&self) -> &[DyadProfile] {
        &self.profiles
    }

    pub fn scores_for(&self, dyad: &str, session: u8) -> Option<&[u8]> {
        self.slice_scores
            .get(&(String::from(dyad), session))
            .map(|v| v.as_slice())
    }

    pub fn profile_for(&self, dyad: &str) -> Option<&DyadProfile> {
        self.profile_index.get(dyad).map(|&i| &self.profiles[i])
    }

    pub fn turn_count(&self) -> usize {
        self.dialogues.iter().map(|d| d.len()).sum()
    }
}

/// One prediction case: the window of turns before a tutor turn, labeled by
/// whether that tutor turn hedges. Stored as corpus indices so instances
/// stay cheap to copy and the corpus stays the single owner of turn data.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Instance {
    pub dialogue: usize,
    pub target: usize,
    pub window: usize,
    pub label: bool,
}

impl Instance {
    pub fn target_turn<'c>(&self, corpus: &'c Corpus) -> &'c Turn {
        &corpus.dialogues()[self.dialogue][self.target]
    }

    /// The `window` turns immediately preceding the target, oldest first.
    /// `None` marks left padding where the dialogue starts too late.
    pub fn history<'c>(&self, corpus: &'c Corpus) -> Vec<Option<&'c Turn>> {
        let turns = &corpus.dialogues()[self.dialogue];
        (0..self.window)
            .map(|k| {
                let back = self.window - k;
                if self.target >= back {
                    Some(&turns[self.target - back])
                } else {
                    None
                }
            })
            .collect()
    }
}

/// One instance per tutor turn, in dialogue order then turn order.
pub fn extract_instances(corpus: &Corpus, window: usize) -> Vec<Instance> {
    assert!(window >= 1, "window must be at least 1");
    let mut out = Vec::new();
    for (d, turns) in corpus.dialogues().iter().enumerate() {
        for t in turns {
            if t.speaker == Speaker::Tutor {
                out.push(Instance {
                    dialogue: d,
                    target: t.index,
                    window,
                    label: t.cs.hedge,
                });
            }
        }
    }
    out
}

/// Rapport score for a history: the score of the slice holding the most
/// turn midpoints, ties broken toward the later slice.
pub fn rapport_for_history(
    corpus: &Corpus,
    history: &[Option<&Turn>],
) -> Result<u8, CorpusError> {
    let real: Vec<&Turn> = history.iter().filter_map(|t| *t).collect();
    let first = real.first().ok_or(CorpusError::EmptyHistory)?;
    let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
    for t in &real {
        *counts.entry(slice_index_at(t.midpoint_s())).or_insert(0) += 1;
    }
    let mut best = (0usize, 0usize);
    for (&slice, &count) in &counts {
        if count >= best.1 {
            best = (slice, count);
        }
    }
    let scores = corpus
        .scores_for(&first.dyad_id, first.session)
        .ok_or_else(|| CorpusError::MissingRapport {
            dyad: first.dyad_id.clone(),
            session: first.session,
        })?;
    scores
        .get(best.0)
        .copied()
        .ok_or_else(|| CorpusError::NoCoveringSlice {
            dyad: first.dyad_id.clone(),
            session: first.session,
            midpoint_s: SLICE_SECONDS * best.0 as f64,
        })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::ToString;

    pub(crate) fn basic_turn(dyad: &str, session: u8, index: usize, speaker: Speaker) -> Turn {
        let start = 4.0 * index as f64;
        Turn {
            dyad_id: dyad.to_string(),
            session,
            period: 1,
            index,
            speaker,
            tokens: vec!["we".to_string(), "see".to_string()],
            start_s: start,
            end_s: start + 3.0,
            cs: ConvStrategies::default(),
            ts: TutStrategies::default(),
            da: DialogueAct::StatementNonOpinion,
            nb: Nonverbal::default(),
            ctx: TurnContext {
                problem_id: 0,
                correctness: true,
                session,
                period: 1,
            },
        }
    }

    fn slices(dyad: &str, session: u8, scores: &[u8]) -> Vec<RapportSlice> {
        scores
            .iter()
            .enumerate()
            .map(|(i, &score)| RapportSlice {
                dyad_id: dyad.to_string(),
                session,
                slice_index: i,
                score,
            })
            .collect()
    }

    fn profile(dyad: &str) -> DyadProfile {
        DyadProfile {
            dyad_id: dyad.to_string(),
            tutor_pretest: 0.5,
            tutee_pretest: 0.5,
        }
    }

    fn tiny_corpus(n_turns: usize) -> Corpus {
        let turns: Vec<Turn> = (0..n_turns)
            .map(|i| {
                let speaker = if i % 2 == 0 { Speaker::Tutee } else { Speaker::Tutor };
                basic_turn("d0", 1, i, speaker)
            })
            .collect();
        let n_slices = slice_index_at(4.0 * n_turns as f64) + 1;
        Corpus::from_turns(turns, slices("d0", 1, &vec![4; n_slices]), vec![profile("d0")]).unwrap()
    }

    #[test]
    fn alternating_dialogue_yields_one_instance_per_tutor_turn() {
        let corpus = tiny_corpus(6);
        let instances = extract_instances(&corpus, 4);
        assert_eq!(instances.len(), 3);
        for inst in &instances {
            assert_eq!(inst.target_turn(&corpus).speaker, Speaker::Tutor);
            assert_eq!(inst.label, inst.target_turn(&corpus).cs.hedge);
        }
    }

    #[test]
    fn early_target_history_is_left_padded() {
        let mut turns = vec![basic_turn("d0", 1, 0, Speaker::Tutor)];
        turns.push(basic_turn("d0", 1, 1, Speaker::Tutee));
        let corpus =
            Corpus::from_turns(turns, slices("d0", 1, &[3]), vec![profile("d0")]).unwrap();
        let instances = extract_instances(&corpus, 4);
        assert_eq!(instances.len(), 1);
        let hist = instances[0].history(&corpus);
        assert_eq!(hist.len(), 4);
        assert!(hist.iter().all(|t| t.is_none()));
    }

    #[test]
    fn history_is_strictly_earlier_and_oldest_first() {
        let corpus = tiny_corpus(12);
        for inst in extract_instances(&corpus, 4) {
            let hist = inst.history(&corpus);
            let mut prev = None;
            for t in hist.into_iter().flatten() {
                assert!(t.index < inst.target);
                if let Some(p) = prev {
                    assert!(t.index > p);
                }
                prev = Some(t.index);
            }
        }
    }

    #[test]
    fn extraction_is_deterministic() {
        let corpus = tiny_corpus(20);
        assert_eq!(extract_instances(&corpus, 4), extract_instances(&corpus, 4));
    }

    #[test]
    fn rapport_single_slice_and_majority_and_tie() {
        // Four turns with controllable midpoints.
        let turns: Vec<Turn> = (0..4)
            .map(|i| basic_turn("d0", 1, i, Speaker::Tutee))
            .collect();
        let corpus_for = |mids: [f64; 4], scores: &[u8]| {
            let mut ts = turns.clone();
            for (t, m) in ts.iter_mut().zip(mids) {
                t.start_s = m - 1.0;
                t.end_s = m + 1.0;
            }
            Corpus::from_turns(ts, slices("d0", 1, scores), vec![profile("d0")]).unwrap()
        };

        let all_in_slice_2 = corpus_for([62.0, 65.0, 70.0, 80.0], &[2, 2, 5]);
        let hist: Vec<Option<&Turn>> =
            all_in_slice_2.dialogues()[0].iter().map(Some).collect();
        assert_eq!(rapport_for_history(&all_in_slice_2, &hist).unwrap(), 5);

        let majority = corpus_for([25.0, 33.0, 41.0, 55.0], &[2, 6]);
        let hist: Vec<Option<&Turn>> = majority.dialogues()[0].iter().map(Some).collect();
        assert_eq!(rapport_for_history(&majority, &hist).unwrap(), 6);

        let tied = corpus_for([10.0, 20.0, 40.0, 50.0], &[3, 4]);
        let hist: Vec<Option<&Turn>> = tied.dialogues()[0].iter().map(Some).collect();
        assert_eq!(rapport_for_history(&tied, &hist).unwrap(), 4);

        // Never interpolated: the result is always some slice's score.
        for c in [&all_in_slice_2, &majority, &tied] {
            let hist: Vec<Option<&Turn>> = c.dialogues()[0].iter().map(Some).collect();
            let got = rapport_for_history(c, &hist).unwrap();
            assert!(c.rapport_slices().iter().any(|s| s.score == got));
        }

        // Padding entries do not contribute to the count.
        let mut hist: Vec<Option<&Turn>> = majority.dialogues()[0].iter().map(Some).collect();
        hist[0] = None;
        assert_eq!(rapport_for_history(&majority, &hist).unwrap(), 6);
    }

    #[test]
    fn rapport_score_out_of_range_is_rejected() {
        let turns = vec![basic_turn("d0", 1, 0, Speaker::Tutee)];
        let err = Corpus::from_turns(turns, slices("d0", 1, &[9]), vec![profile("d0")])
            .unwrap_err();
        let msg = format!("{err}");
        assert!(msg.contains("rapport out of range [1,7]"), "{msg}");
    }

    #[test]
    fn unknown_gaze_target_is_rejected_at_parse() {
        let err = serde_json::from_str::<GazeTarget>("\"window\"").unwrap_err();
        assert!(format!("{err}").contains("unknown gaze target"));
    }

    #[test]
    fn dialogue_act_labels_round_trip() {
        for da in DialogueAct::ALL {
            let json = serde_json::to_string(&da).unwrap();
            let back: DialogueAct = serde_json::from_str(&json).unwrap();
            assert_eq!(da, back);
        }
        assert_eq!(serde_json::to_string(&DialogueAct::Abandoned).unwrap(), "\"%\"");
        assert_eq!(serde_json::to_string(&DialogueAct::StatementNonOpinion).unwrap(), "\"sd\"");
    }

    #[test]
    fn validation_rejects_broken_indices_and_times() {
        let mut turns = vec![
            basic_turn("d0", 1, 0, Speaker::Tutee),
            basic_turn("d0", 1, 1, Speaker::Tutor),
        ];
        turns[1].index = 3;
        let err = Corpus::from_turns(turns, slices("d0", 1, &[4]), vec![profile("d0")])
            .unwrap_err();
        assert!(format!("{err}").contains("contiguous"));

        let mut turns = vec![
            basic_turn("d0", 1, 0, Speaker::Tutee),
            basic_turn("d0", 1, 1, Speaker::Tutor),
        ];
        turns[1].start_s = 0.0;
        turns[1].end_s = 1.0;
        turns[0].start_s = 5.0;
        turns[0].end_s = 8.0;
        let err = Corpus::from_turns(turns, slices("d0", 1, &[4]), vec![profile("d0")])
            .unwrap_err();
        assert!(format!("{err}").contains("non-decreasing"));
    }

    #[test]
    fn missing_rapport_or_profile_is_rejected() {
        let turns = vec![basic_turn("d0", 1, 0, Speaker::Tutee)];
        let err = Corpus::from_turns(turns.clone(), vec![], vec![profile("d0")]).unwrap_err();
        assert!(matches!(err, CorpusError::MissingRapport { .. }));

        let err = Corpus::from_turns(turns, slices("d0", 1, &[4]), vec![]).unwrap_err();
        assert!(matches!(err, CorpusError::MissingProfile { .. }));
    }

    #[test]
    fn turn_round_trips_through_json() {
        let turn = basic_turn("d7", 2, 3, Speaker::Tutor);
        let json = serde_json::to_string(&turn).unwrap();
        let back: Turn = serde_json::from_str(&json).unwrap();
        assert_eq!(turn, back);
    }
}
