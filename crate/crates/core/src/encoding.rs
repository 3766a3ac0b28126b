//! Turn and history encoding: a named, ordered feature layout shared by
//! every pipeline stage, embedding providers, group masking, and flattening.
//!
//! The schema is the single source of truth for vector indexing. All
//! non-embedding coordinates land in [0,1]; padding rows are all zero, so
//! one-hot blocks sum to 1 on real rows and 0 on padding.

use alloc::boxed::Box;
use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;
use serde::{Deserialize, Serialize};

use crate::corpus::{
    rapport_for_history, Corpus, CorpusError, DyadProfile, GazeTarget, Instance, Speaker, Turn,
};
use crate::math::{sqrt, Digest};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureGroup {
    Embedding,
    CS,
    TS,
    DialAct,
    NB,
    Rapport,
    ConInfo,
}

impl FeatureGroup {
    pub const ALL: [FeatureGroup; 7] = [
        FeatureGroup::Embedding,
        FeatureGroup::CS,
        FeatureGroup::TS,
        FeatureGroup::DialAct,
        FeatureGroup::NB,
        FeatureGroup::Rapport,
        FeatureGroup::ConInfo,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            FeatureGroup::Embedding => "embedding",
            FeatureGroup::CS => "cs",
            FeatureGroup::TS => "ts",
            FeatureGroup::DialAct => "dialact",
            FeatureGroup::NB => "nb",
            FeatureGroup::Rapport => "rapport",
            FeatureGroup::ConInfo => "coninfo",
        }
    }

    pub fn from_name(name: &str) -> Result<Self, EncodeError> {
        FeatureGroup::ALL
            .into_iter()
            .find(|g| g.as_str() == name)
            .ok_or_else(|| EncodeError::UnknownGroup(name.to_string()))
    }
}

impl fmt::Display for FeatureGroup {
    fn fmt(&self, f: &mut fmt::Formatter) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SchemaEntry {
    pub group: FeatureGroup,
    pub name: String,
    pub offset: usize,
    pub width: usize,
}

/// Ordered coordinate layout of one encoded turn.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureSchema {
    entries: Vec<SchemaEntry>,
    total: usize,
}

impl FeatureSchema {
    pub fn entries(&self) -> &[SchemaEntry] {
        &self.entries
    }

    pub fn total_dim(&self) -> usize {
        self.total
    }

    /// Contiguous (offset, width) span of a group; zero-width when absent.
    pub fn group_span(&self, group: FeatureGroup) -> (usize, usize) {
        let mut start = None;
        let mut width = 0;
        for e in &self.entries {
            if e.group == group {
                if start.is_none() {
                    start = Some(e.offset);
                }
                width += e.width;
            }
        }
        (start.unwrap_or(0), width)
    }

    pub fn included_width(&self, mask: &FeatureMask) -> usize {
        self.entries
            .iter()
            .filter(|e| mask.includes(e.group))
            .map(|e| e.width)
            .sum()
    }

    /// Per-row coordinate indices that survive the mask, in schema order.
    pub fn included_indices(&self, mask: &FeatureMask) -> Vec<usize> {
        let mut idx = Vec::with_capacity(self.included_width(mask));
        for e in &self.entries {
            if mask.includes(e.group) {
                idx.extend(e.offset..e.offset + e.width);
            }
        }
        idx
    }

    /// Digest over the layout, mask, and window; models refuse inputs
    /// prepared under a different fingerprint.
    pub fn fingerprint(&self, mask: &FeatureMask, window: usize) -> u64 {
        let mut d = Digest::new().str("turn-schema-v1").u64(self.total as u64).u64(window as u64);
        for e in &self.entries {
            if mask.includes(e.group) {
                d = d.str(e.group.as_str()).str(&e.name).u64(e.offset as u64);
            }
        }
        d.finish()
    }
}

/// Standard layout. Embedding first, then per-turn annotations:
/// CS flags of the turn holder plus a speaker-role bit; TS flags; dialogue
/// act one-hot; nonverbal block with both participants' gaze one-hots;
/// normalized rapport; context block with normalized problem id, pre-tests,
/// and the capped backchannel count.
pub fn default_schema(embedding_dim: usize) -> FeatureSchema {
    let mut entries = Vec::new();
    let mut offset = 0;
    let mut push = |entries: &mut Vec<SchemaEntry>, group, name: String| {
        entries.push(SchemaEntry {
            group,
            name,
            offset,
            width: 1,
        });
        offset += 1;
    };

    for i in 0..embedding_dim {
        push(&mut entries, FeatureGroup::Embedding, format!("emb_{i:03}"));
    }
    for name in [
        "cs_self_disclosure",
        "cs_praise",
        "cs_norm_violation",
        "cs_hedge",
        "cs_speaker_is_tutor",
    ] {
        push(&mut entries, FeatureGroup::CS, name.to_string());
    }
    for name in [
        "ts_deep_question",
        "ts_shallow_question",
        "ts_metacomm",
        "ts_knowledge_building",
        "ts_knowledge_telling",
    ] {
        push(&mut entries, FeatureGroup::TS, name.to_string());
    }
    for name in [
        "da_abandoned",
        "da_backchannel",
        "da_backchannel_question",
        "da_yes_no_question",
        "da_statement_non_opinion",
        "da_statement_opinion",
    ] {
        push(&mut entries, FeatureGroup::DialAct, name.to_string());
    }
    let mut nb_names: Vec<String> = vec![
        "nb_tutor_nod".to_string(),
        "nb_tutee_nod".to_string(),
        "nb_tutor_smile".to_string(),
        "nb_tutee_smile".to_string(),
    ];
    for side in ["tutor", "tutee"] {
        for g in GazeTarget::ALL {
            nb_names.push(format!("nb_{side}_gaze_{}", g.as_str()));
        }
    }
    for name in nb_names {
        push(&mut entries, FeatureGroup::NB, name);
    }
    push(&mut entries, FeatureGroup::Rapport, "rapport".to_string());
    for name in [
        "ci_session",
        "ci_period",
        "ci_problem_id",
        "ci_correctness",
        "ci_tutor_pretest",
        "ci_tutee_pretest",
        "ci_backchannel_count",
    ] {
        push(&mut entries, FeatureGroup::ConInfo, name.to_string());
    }

    FeatureSchema {
        entries,
        total: offset,
    }
}

/// Nonempty set of feature groups kept in the encoded input.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureMask {
    included: BTreeSet<FeatureGroup>,
}

impl FeatureMask {
    pub fn new(groups: &[FeatureGroup]) -> Result<Self, EncodeError> {
        if groups.is_empty() {
            return Err(EncodeError::EmptyMask);
        }
        Ok(FeatureMask {
            included: groups.iter().copied().collect(),
        })
    }

    pub fn all() -> Self {
        FeatureMask {
            included: FeatureGroup::ALL.into_iter().collect(),
        }
    }

    /// Named masks: "all", "wo_emb" (annotations only), "only_emb".
    pub fn from_name(name: &str) -> Result<Self, EncodeError> {
        match name {
            "all" => Ok(FeatureMask::all()),
            "wo_emb" => FeatureMask::all().without(FeatureGroup::Embedding),
            "only_emb" => FeatureMask::new(&[FeatureGroup::Embedding]),
            other => {
                // Custom masks spell out groups joined by '+'.
                let groups: Result<Vec<FeatureGroup>, EncodeError> =
                    other.split('+').map(FeatureGroup::from_name).collect();
                FeatureMask::new(&groups.map_err(|_| EncodeError::UnknownMask(other.to_string()))?)
            }
        }
    }

    pub fn name(&self) -> String {
        let all = FeatureMask::all();
        if self.included == all.included {
            return "all".to_string();
        }
        if self.includes(FeatureGroup::Embedding) && self.included.len() == 1 {
            return "only_emb".to_string();
        }
        let wo_emb: BTreeSet<FeatureGroup> = FeatureGroup::ALL
            .into_iter()
            .filter(|g| *g != FeatureGroup::Embedding)
            .collect();
        if self.included == wo_emb {
            return "wo_emb".to_string();
        }
        let names: Vec<&str> = FeatureGroup::ALL
            .into_iter()
            .filter(|g| self.includes(*g))
            .map(|g| g.as_str())
            .collect();
        names.join("+")
    }

    pub fn includes(&self, group: FeatureGroup) -> bool {
        self.included.contains(&group)
    }

    pub fn groups(&self) -> impl Iterator<Item = FeatureGroup> + '_ {
        FeatureGroup::ALL.into_iter().filter(|g| self.includes(*g))
    }

    pub fn without(&self, group: FeatureGroup) -> Result<Self, EncodeError> {
        let mut included = self.included.clone();
        included.remove(&group);
        if included.is_empty() {
            return Err(EncodeError::EmptyMask);
        }
        Ok(FeatureMask { included })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum EncodeError {
    DimMismatch { expected: usize, got: usize },
    MissingEmbedding { dyad: String, session: u8, index: usize },
    InconsistentEmbeddingWidths { first: usize, other: usize },
    MissingProfile { dyad: String },
    EmptyMask,
    UnknownMask(String),
    UnknownGroup(String),
    Corpus(CorpusError),
}

impl fmt::Display for EncodeError {
    fn fmt(&self, f: &mut fmt::Formatter) -> fmt::Result {
        match self {
            EncodeError::DimMismatch { expected, got } => {
                write!(f, "embedding width {got} does not match schema width {expected}")
            }
            EncodeError::MissingEmbedding { dyad, session, index } => {
                write!(f, "no embedding for turn {dyad}/s{session}#{index}")
            }
            EncodeError::InconsistentEmbeddingWidths { first, other } => {
                write!(f, "embedding rows disagree on width: {first} vs {other}")
            }
            EncodeError::MissingProfile { dyad } => write!(f, "no profile for dyad {dyad}"),
            EncodeError::EmptyMask => write!(f, "feature mask must keep at least one group"),
            EncodeError::UnknownMask(name) => write!(f, "unknown mask name \"{name}\""),
            EncodeError::UnknownGroup(name) => write!(f, "unknown feature group \"{name}\""),
            EncodeError::Corpus(e) => write!(f, "{e}"),
        }
    }
}

impl From<CorpusError> for EncodeError {
    fn from(e: CorpusError) -> Self {
        EncodeError::Corpus(e)
    }
}

/// Per-turn embedding source. Implementations must be deterministic.
pub trait EmbeddingProvider: Sync {
    fn dim(&self) -> usize;
    fn embed_turn(&self, turn: &Turn) -> Result<Vec<f64>, EncodeError>;
}

/// Feature-hashing bag of tokens: each token lands on a hashed coordinate
/// with a hashed sign, then the vector is L2-normalized. A deterministic
/// stand-in for precomputed sentence embeddings.
#[derive(Clone, Debug)]
pub struct HashingEmbedder {
    dim: usize,
    seed: u64,
}

impl HashingEmbedder {
    pub fn new(dim: usize, seed: u64) -> Self {
        assert!(dim >= 1, "embedding dim must be at least 1");
        HashingEmbedder { dim, seed }
    }

    pub fn embed_tokens(&self, tokens: &[String]) -> Vec<f64> {
        let mut v = vec![0.0; self.dim];
        for tok in tokens {
            let h = Digest::new().u64(self.seed).str(tok).finish();
            let idx = (h % self.dim as u64) as usize;
            let sign = if h >> 63 == 1 { -1.0 } else { 1.0 };
            v[idx] += sign;
        }
        let norm = sqrt(v.iter().map(|x| x * x).sum());
        if norm > 0.0 {
            for x in v.iter_mut() {
                *x /= norm;
            }
        }
        v
    }
}

impl EmbeddingProvider for HashingEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed_turn(&self, turn: &Turn) -> Result<Vec<f64>, EncodeError> {
        Ok(self.embed_tokens(&turn.tokens))
    }
}

/// Precomputed embeddings keyed by (dyad, session, turn index).
pub struct TableEmbedder {
    dim: usize,
    rows: BTreeMap<(String, u8, usize), Vec<f64>>,
}

impl TableEmbedder {
    pub fn from_rows(
        rows: impl IntoIterator<Item = ((String, u8, usize), Vec<f64>)>,
    ) -> Result<Self, EncodeError> {
        let mut map = BTreeMap::new();
        let mut dim = None;
        for (key, v) in rows {
            match dim {
                None => dim = Some(v.len()),
                Some(d) if d != v.len() => {
                    return Err(EncodeError::InconsistentEmbeddingWidths {
                        first: d,
                        other: v.len(),
                    })
                }
                _ => {}
            }
            map.insert(key, v);
        }
        Ok(TableEmbedder {
            dim: dim.unwrap_or(0),
            rows: map,
        })
    }
}

impl EmbeddingProvider for TableEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed_turn(&self, turn: &Turn) -> Result<Vec<f64>, EncodeError> {
        self.rows
            .get(&(turn.dyad_id.clone(), turn.session, turn.index))
            .cloned()
            .ok_or_else(|| EncodeError::MissingEmbedding {
                dyad: turn.dyad_id.clone(),
                session: turn.session,
                index: turn.index,
            })
    }
}

pub fn default_backchannel_lexicon() -> BTreeSet<String> {
    ["um", "uh", "hhm", "mhm", "oh", "yeah", "okay", "right"]
        .into_iter()
        .map(String::from)
        .collect()
}

/// Tokens from the history that belong to the backchannel lexicon.
pub fn count_backchannels(history: &[&Turn], lexicon: &BTreeSet<String>) -> usize {
    history
        .iter()
        .flat_map(|t| t.tokens.iter())
        .filter(|tok| lexicon.contains(*tok))
        .count()
}

/// Problem-id normalization bounds. Fitted on training data only; values
/// outside the fitted range clamp to [0,1].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub problem_min: f64,
    pub problem_max: f64,
}

impl Default for NormStats {
    fn default() -> Self {
        NormStats {
            problem_min: 0.0,
            problem_max: 0.0,
        }
    }
}

impl NormStats {
    /// Bounds over every turn visible to the given instances: history turns
    /// and targets.
    pub fn fit(corpus: &Corpus, instances: &[Instance]) -> Self {
        let mut min = f64::INFINITY;
        let mut max = f64::NEG_INFINITY;
        let mut saw = false;
        for inst in instances {
            let turns = &corpus.dialogues()[inst.dialogue];
            let lo = inst.target.saturating_sub(inst.window);
            for t in &turns[lo..=inst.target] {
                let pid = t.ctx.problem_id as f64;
                min = min.min(pid);
                max = max.max(pid);
                saw = true;
            }
        }
        if saw {
            NormStats {
                problem_min: min,
                problem_max: max,
            }
        } else {
            NormStats::default()
        }
    }

    pub fn normalize_problem_id(&self, pid: u32) -> f64 {
        let span = self.problem_max - self.problem_min;
        if span <= 0.0 {
            return 0.0;
        }
        ((pid as f64 - self.problem_min) / span).clamp(0.0, 1.0)
    }
}

#[derive(Clone, Debug)]
pub struct EncodeOptions {
    pub stats: NormStats,
    pub backchannel_cap: u32,
    pub backchannel_lexicon: BTreeSet<String>,
}

impl Default for EncodeOptions {
    fn default() -> Self {
        EncodeOptions {
            stats: NormStats::default(),
            backchannel_cap: 10,
            backchannel_lexicon: default_backchannel_lexicon(),
        }
    }
}

impl EncodeOptions {
    pub fn with_stats(stats: NormStats) -> Self {
        EncodeOptions {
            stats,
            ..EncodeOptions::default()
        }
    }
}

/// Fixed window of encoded turns, oldest first, row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HistoryTensor {
    pub window: usize,
    pub dim: usize,
    values: Vec<f64>,
}

impl HistoryTensor {
    pub fn zero(window: usize, dim: usize) -> Self {
        HistoryTensor {
            window,
            dim,
            values: vec![0.0; window * dim],
        }
    }

    pub fn row(&self, k: usize) -> &[f64] {
        &self.values[k * self.dim..(k + 1) * self.dim]
    }

    pub fn row_mut(&mut self, k: usize) -> &mut [f64] {
        &mut self.values[k * self.dim..(k + 1) * self.dim]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// Encodes one turn into the schema layout. `None` is the padding sentinel
/// and encodes to the zero vector.
pub fn encode_turn(
    turn: Option<&Turn>,
    rapport_score: u8,
    backchannel_count: usize,
    profile: Option<&DyadProfile>,
    schema: &FeatureSchema,
    provider: &dyn EmbeddingProvider,
    opts: &EncodeOptions,
) -> Result<Vec<f64>, EncodeError> {
    let mut v = vec![0.0; schema.total_dim()];
    let turn = match turn {
        Some(t) => t,
        None => return Ok(v),
    };

    let (emb_off, emb_width) = schema.group_span(FeatureGroup::Embedding);
    if emb_width > 0 {
        if provider.dim() != emb_width {
            return Err(EncodeError::DimMismatch {
                expected: emb_width,
                got: provider.dim(),
            });
        }
        let emb = provider.embed_turn(turn)?;
        if emb.len() != emb_width {
            return Err(EncodeError::DimMismatch {
                expected: emb_width,
                got: emb.len(),
            });
        }
        v[emb_off..emb_off + emb_width].copy_from_slice(&emb);
    }

    let (cs_off, _) = schema.group_span(FeatureGroup::CS);
    v[cs_off] = turn.cs.self_disclosure as u8 as f64;
    v[cs_off + 1] = turn.cs.praise as u8 as f64;
    v[cs_off + 2] = turn.cs.norm_violation as u8 as f64;
    v[cs_off + 3] = turn.cs.hedge as u8 as f64;
    v[cs_off + 4] = (turn.speaker == Speaker::Tutor) as u8 as f64;

    let (ts_off, _) = schema.group_span(FeatureGroup::TS);
    v[ts_off] = turn.ts.deep_question as u8 as f64;
    v[ts_off + 1] = turn.ts.shallow_question as u8 as f64;
    v[ts_off + 2] = turn.ts.metacomm as u8 as f64;
    v[ts_off + 3] = turn.ts.knowledge_building as u8 as f64;
    v[ts_off + 4] = turn.ts.knowledge_telling as u8 as f64;

    let (da_off, _) = schema.group_span(FeatureGroup::DialAct);
    v[da_off + turn.da.one_hot_index()] = 1.0;

    let (nb_off, _) = schema.group_span(FeatureGroup::NB);
    v[nb_off] = turn.nb.tutor_nod as u8 as f64;
    v[nb_off + 1] = turn.nb.tutee_nod as u8 as f64;
    v[nb_off + 2] = turn.nb.tutor_smile as u8 as f64;
    v[nb_off + 3] = turn.nb.tutee_smile as u8 as f64;
    v[nb_off + 4 + turn.nb.tutor_gaze.one_hot_index()] = 1.0;
    v[nb_off + 8 + turn.nb.tutee_gaze.one_hot_index()] = 1.0;

    let (rap_off, _) = schema.group_span(FeatureGroup::Rapport);
    v[rap_off] = (rapport_score.clamp(1, 7) - 1) as f64 / 6.0;

    let profile = profile.ok_or_else(|| EncodeError::MissingProfile {
        dyad: turn.dyad_id.clone(),
    })?;
    let (ci_off, _) = schema.group_span(FeatureGroup::ConInfo);
    v[ci_off] = (turn.session - 1) as f64;
    v[ci_off + 1] = (turn.period - 1) as f64;
    v[ci_off + 2] = opts.stats.normalize_problem_id(turn.ctx.problem_id);
    v[ci_off + 3] = turn.ctx.correctness as u8 as f64;
    v[ci_off + 4] = profile.tutor_pretest;
    v[ci_off + 5] = profile.tutee_pretest;
    let cap = opts.backchannel_cap.max(1) as f64;
    v[ci_off + 6] = (backchannel_count as f64).min(cap) / cap;

    Ok(v)
}

/// Encodes an instance's history window. One rapport score serves the whole
/// window; each row's backchannel count covers that turn's own previous
/// four turns. Masked-out groups are zeroed in place.
pub fn encode_instance(
    instance: &Instance,
    corpus: &Corpus,
    schema: &FeatureSchema,
    provider: &dyn EmbeddingProvider,
    mask: &FeatureMask,
    opts: &EncodeOptions,
) -> Result<HistoryTensor, EncodeError> {
    let history = instance.history(corpus);
    let any_real = history.iter().any(|t| t.is_some());
    let rapport = if any_real {
        rapport_for_history(corpus, &history)?
    } else {
        1
    };

    let turns = &corpus.dialogues()[instance.dialogue];
    let mut tensor = HistoryTensor::zero(instance.window, schema.total_dim());
    for (k, turn) in history.iter().enumerate() {
        let row = match turn {
            Some(t) => {
                let j = t.index;
                let prev: Vec<&Turn> = turns[j.saturating_sub(4)..j].iter().collect();
                let bc = count_backchannels(&prev, &opts.backchannel_lexicon);
                let profile = corpus.profile_for(&t.dyad_id);
                encode_turn(Some(t), rapport, bc, profile, schema, provider, opts)?
            }
            None => vec![0.0; schema.total_dim()],
        };
        tensor.row_mut(k).copy_from_slice(&row);
    }

    for g in FeatureGroup::ALL {
        if !mask.includes(g) {
            let (off, width) = schema.group_span(g);
            for k in 0..tensor.window {
                for x in &mut tensor.row_mut(k)[off..off + width] {
                    *x = 0.0;
                }
            }
        }
    }
    Ok(tensor)
}

/// Row-major concatenation of the masked-in coordinates.
pub fn flatten(tensor: &HistoryTensor, schema: &FeatureSchema, mask: &FeatureMask) -> Vec<f64> {
    let idx = schema.included_indices(mask);
    let mut out = Vec::with_capacity(tensor.window * idx.len());
    for k in 0..tensor.window {
        let row = tensor.row(k);
        out.extend(idx.iter().map(|&i| row[i]));
    }
    out
}

/// Names aligned with [`flatten`] output: "t-k/group/name", oldest row
/// first, so row 0 of a window of 4 is t-4.
pub fn flatten_names(schema: &FeatureSchema, mask: &FeatureMask, window: usize) -> Vec<String> {
    let mut out = Vec::new();
    for k in 0..window {
        let back = window - k;
        for e in schema.entries() {
            if mask.includes(e.group) {
                out.push(format!("t-{back}/{}/{}", e.group, e.name));
            }
        }
    }
    out
}

/// Boxes the provider choice for callers configured by name.
pub fn boxed_hashing_provider(dim: usize, seed: u64) -> Box<dyn EmbeddingProvider> {
    Box::new(HashingEmbedder::new(dim, seed))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::synth::{generate_synthetic, GeneratorConfig};
    use crate::corpus::{extract_instances, DialogueAct};

    fn test_corpus() -> Corpus {
        generate_synthetic(
            &GeneratorConfig {
                dyads: 2,
                turns_per_session: 60,
                ..GeneratorConfig::default()
            },
            11,
        )
        .unwrap()
    }

    #[test]
    fn default_schema_widths() {
        let s = default_schema(384);
        assert_eq!(s.total_dim(), 420);
        assert_eq!(s.group_span(FeatureGroup::Embedding), (0, 384));
        assert_eq!(s.group_span(FeatureGroup::CS).1, 5);
        assert_eq!(s.group_span(FeatureGroup::TS).1, 5);
        assert_eq!(s.group_span(FeatureGroup::DialAct).1, 6);
        assert_eq!(s.group_span(FeatureGroup::NB).1, 12);
        assert_eq!(s.group_span(FeatureGroup::Rapport).1, 1);
        assert_eq!(s.group_span(FeatureGroup::ConInfo).1, 7);

        let bare = default_schema(0);
        assert_eq!(bare.total_dim(), 36);
        assert_eq!(bare.group_span(FeatureGroup::Embedding).1, 0);
        assert!(bare.entries().iter().all(|e| e.group != FeatureGroup::Embedding));
    }

    #[test]
    fn schema_offsets_are_contiguous_and_names_unique() {
        let s = default_schema(16);
        let mut expected = 0;
        let mut names = BTreeSet::new();
        for e in s.entries() {
            assert_eq!(e.offset, expected);
            expected += e.width;
            assert!(names.insert(e.name.clone()), "duplicate name {}", e.name);
        }
        assert_eq!(expected, s.total_dim());
        let flat = flatten_names(&s, &FeatureMask::all(), 4);
        let unique: BTreeSet<&String> = flat.iter().collect();
        assert_eq!(unique.len(), flat.len());
        assert_eq!(flat.len(), 4 * s.total_dim());
        assert!(flat[0].starts_with("t-4/"));
    }

    #[test]
    fn encode_turn_blocks_behave() {
        let corpus = test_corpus();
        let schema = default_schema(8);
        let provider = HashingEmbedder::new(8, 0);
        let opts = EncodeOptions::default();
        let turn = &corpus.dialogues()[0][5];
        let profile = corpus.profile_for(&turn.dyad_id);

        let v = encode_turn(Some(turn), 7, 3, profile, &schema, &provider, &opts).unwrap();
        let (rap_off, _) = schema.group_span(FeatureGroup::Rapport);
        assert_eq!(v[rap_off], 1.0);
        let v1 = encode_turn(Some(turn), 1, 3, profile, &schema, &provider, &opts).unwrap();
        assert_eq!(v1[rap_off], 0.0);

        let (da_off, da_w) = schema.group_span(FeatureGroup::DialAct);
        let da_block = &v[da_off..da_off + da_w];
        assert_eq!(da_block.iter().sum::<f64>(), 1.0);
        assert_eq!(da_block[turn.da.one_hot_index()], 1.0);

        let padding = encode_turn(None, 4, 0, None, &schema, &provider, &opts).unwrap();
        assert!(padding.iter().all(|&x| x == 0.0));
        assert_eq!(padding.len(), schema.total_dim());
    }

    #[test]
    fn yes_no_question_one_hot_position() {
        assert_eq!(DialogueAct::YesNoQuestion.one_hot_index(), 3);
        let corpus = test_corpus();
        let schema = default_schema(0);
        let provider = HashingEmbedder::new(1, 0);
        let opts = EncodeOptions::default();
        let mut turn = corpus.dialogues()[0][5].clone();
        turn.da = DialogueAct::YesNoQuestion;
        let v = encode_turn(
            Some(&turn),
            4,
            0,
            corpus.profile_for(&turn.dyad_id),
            &schema,
            &provider,
            &opts,
        )
        .unwrap();
        let (off, _) = schema.group_span(FeatureGroup::DialAct);
        assert_eq!(&v[off..off + 6], &[0.0, 0.0, 0.0, 1.0, 0.0, 0.0]);
    }

    #[test]
    fn backchannel_counting() {
        let lex = default_backchannel_lexicon();
        assert_eq!(count_backchannels(&[], &lex), 0);

        let corpus = test_corpus();
        let mut turn = corpus.dialogues()[0][0].clone();
        turn.tokens = ["oh", "i", "see", "um"].iter().map(|s| s.to_string()).collect();
        assert_eq!(count_backchannels(&[&turn], &lex), 2);
        assert_eq!(count_backchannels(&[&turn], &BTreeSet::new()), 0);
    }

    #[test]
    fn encode_instance_is_deterministic_and_respects_mask() {
        let corpus = test_corpus();
        let schema = default_schema(8);
        let provider = HashingEmbedder::new(8, 0);
        let instances = extract_instances(&corpus, 4);
        let opts = EncodeOptions::with_stats(NormStats::fit(&corpus, &instances));
        let inst = instances[4];

        let all = FeatureMask::all();
        let a = encode_instance(&inst, &corpus, &schema, &provider, &all, &opts).unwrap();
        let b = encode_instance(&inst, &corpus, &schema, &provider, &all, &opts).unwrap();
        assert_eq!(a, b);

        let only_emb = FeatureMask::from_name("only_emb").unwrap();
        let m = encode_instance(&inst, &corpus, &schema, &provider, &only_emb, &opts).unwrap();
        let (emb_off, emb_w) = schema.group_span(FeatureGroup::Embedding);
        for k in 0..m.window {
            for (i, &x) in m.row(k).iter().enumerate() {
                if !(emb_off..emb_off + emb_w).contains(&i) {
                    assert_eq!(x, 0.0);
                }
            }
        }

        // Masking is idempotent and the all-mask is the identity.
        let wo = FeatureMask::from_name("wo_emb").unwrap();
        let m1 = encode_instance(&inst, &corpus, &schema, &provider, &wo, &opts).unwrap();
        let flat_once = flatten(&m1, &schema, &wo);
        let m2 = encode_instance(&inst, &corpus, &schema, &provider, &wo, &opts).unwrap();
        assert_eq!(flatten(&m2, &schema, &wo), flat_once);
        assert_eq!(flat_once.len(), 4 * 36);
        assert_eq!(flatten(&a, &schema, &all).len(), 4 * (8 + 36));
    }

    #[test]
    fn non_embedding_coordinates_stay_in_unit_range() {
        let corpus = test_corpus();
        let schema = default_schema(0);
        let provider = HashingEmbedder::new(1, 0);
        let instances = extract_instances(&corpus, 4);
        let opts = EncodeOptions::with_stats(NormStats::fit(&corpus, &instances));
        for inst in instances.iter().take(40) {
            let t = encode_instance(&inst, &corpus, &schema, &provider, &FeatureMask::all(), &opts)
                .unwrap();
            for k in 0..t.window {
                for &x in t.row(k) {
                    assert!((0.0..=1.0).contains(&x), "coordinate {x} outside [0,1]");
                }
            }
        }
    }

    #[test]
    fn full_padding_instance_encodes_to_zero() {
        // A dialogue that opens with a tutor turn yields an all-padding history.
        let corpus = test_corpus();
        let schema = default_schema(4);
        let provider = HashingEmbedder::new(4, 0);
        let opts = EncodeOptions::default();
        let inst = Instance {
            dialogue: 0,
            target: 1,
            window: 4,
            label: false,
        };
        // Window 4 with target 1 leaves rows 0..3 padded.
        let t = encode_instance(&inst, &corpus, &schema, &provider, &FeatureMask::all(), &opts)
            .unwrap();
        for k in 0..3 {
            assert!(t.row(k).iter().all(|&x| x == 0.0));
        }
    }

    #[test]
    fn hashing_embedder_contract() {
        let e = HashingEmbedder::new(32, 5);
        assert!(e.embed_tokens(&[]).iter().all(|&x| x == 0.0));
        let toks: Vec<String> = ["sort", "of"].iter().map(|s| s.to_string()).collect();
        let a = e.embed_tokens(&toks);
        let b = e.embed_tokens(&toks);
        assert_eq!(a, b);
        let norm: f64 = a.iter().map(|x| x * x).sum::<f64>();
        assert!((norm - 1.0).abs() < 1e-12, "norm^2 {norm}");
    }

    #[test]
    fn table_embedder_contract() {
        let rows = vec![
            (("d00".to_string(), 1u8, 0usize), vec![1.0, 2.0]),
            (("d00".to_string(), 1u8, 1usize), vec![3.0, 4.0]),
        ];
        let table = TableEmbedder::from_rows(rows).unwrap();
        assert_eq!(table.dim(), 2);

        let corpus = test_corpus();
        let mut turn = corpus.dialogues()[0][0].clone();
        turn.dyad_id = "d00".to_string();
        turn.session = 1;
        turn.index = 0;
        assert_eq!(table.embed_turn(&turn).unwrap(), vec![1.0, 2.0]);
        turn.index = 99;
        let err = table.embed_turn(&turn).unwrap_err();
        assert!(format!("{err}").contains("no embedding for turn"));

        let bad = TableEmbedder::from_rows(vec![
            (("a".to_string(), 1u8, 0usize), vec![1.0]),
            (("a".to_string(), 1u8, 1usize), vec![1.0, 2.0]),
        ]);
        assert!(bad.is_err());
    }

    #[test]
    fn mask_names_round_trip() {
        for name in ["all", "wo_emb", "only_emb"] {
            assert_eq!(FeatureMask::from_name(name).unwrap().name(), name);
        }
        assert!(FeatureMask::from_name("embeddings_only").is_err());
        let custom = FeatureMask::from_name("cs+rapport").unwrap();
        assert!(custom.includes(FeatureGroup::CS));
        assert!(!custom.includes(FeatureGroup::NB));
        let empty = FeatureMask::new(&[]);
        assert!(matches!(empty, Err(EncodeError::EmptyMask)));
    }

    #[test]
    fn fingerprint_distinguishes_mask_and_window() {
        let s = default_schema(8);
        let all = FeatureMask::all();
        let wo = FeatureMask::from_name("wo_emb").unwrap();
        assert_ne!(s.fingerprint(&all, 4), s.fingerprint(&wo, 4));
        assert_ne!(s.fingerprint(&all, 4), s.fingerprint(&all, 2));
        assert_eq!(s.fingerprint(&all, 4), default_schema(8).fingerprint(&FeatureMask::all(), 4));
    }
}
