//! On-disk formats: line-delimited JSON for turns and embedding tables,
//! small CSVs for rapport/profile annotations and result tables, and the
//! versioned model file. Writers are pure string builders so commands can
//! stage every output in memory and flush only on success; floats are
//! written in shortest round-trip form, which keeps reruns byte-identical.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use hedgecast_core::ablation::AblationMatrix;
use hedgecast_core::corpus::{Corpus, DyadProfile, Instance, RapportSlice, Turn};
use hedgecast_core::encoding::{FeatureGroup, FeatureMask, FeatureSchema, TableEmbedder};
use hedgecast_core::eval::{Ci, CvReport};
use hedgecast_core::explain::{InstanceExplanation, Player, ValenceRow};
use hedgecast_core::models::{ModelKind, TrainConfig, TrainedModel};

use crate::config::ProviderKind;
use crate::error::{internal, io_err, user, AppError};

/// Shortest round-trip float form; the same bits always print the same way.
fn ff(x: f64) -> String {
    format!("{x}")
}

fn ci_cell(ci: &Ci) -> String {
    format!("{:.3} ± {:.3}", ci.mean, ci.half_width)
}

// ---------------------------------------------------------------- corpus --

pub fn turns_jsonl(corpus: &Corpus) -> String {
    let mut out = String::new();
    for turns in corpus.dialogues() {
        for t in turns {
            out.push_str(&serde_json::to_string(t).expect("turn serializes"));
            out.push('\n');
        }
    }
    out
}

pub fn rapport_csv(corpus: &Corpus) -> String {
    let mut out = String::from("dyad_id,session,slice_index,score\n");
    for s in corpus.rapport_slices() {
        let _ = writeln!(out, "{},{},{},{}", s.dyad_id, s.session, s.slice_index, s.score);
    }
    out
}

pub fn profiles_csv(corpus: &Corpus) -> String {
    let mut out = String::from("dyad_id,tutor_pretest,tutee_pretest\n");
    for p in corpus.profiles() {
        let _ = writeln!(out, "{},{},{}", p.dyad_id, ff(p.tutor_pretest), ff(p.tutee_pretest));
    }
    out
}

fn read_lines(path: &Path) -> Result<Vec<(usize, String)>, AppError> {
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    Ok(text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.to_string()))
        .filter(|(_, l)| !l.trim().is_empty())
        .collect())
}

fn read_turns(path: &Path) -> Result<Vec<Turn>, AppError> {
    let mut turns = Vec::new();
    for (n, line) in read_lines(path)? {
        let t: Turn = serde_json::from_str(&line)
            .map_err(|e| user(format!("{}:{n}: {e}", path.display())))?;
        turns.push(t);
    }
    Ok(turns)
}

/// Splits one CSV line into exactly `want` trimmed fields.
fn csv_fields<'a>(
    path: &Path,
    n: usize,
    line: &'a str,
    want: usize,
) -> Result<Vec<&'a str>, AppError> {
    let fields: Vec<&str> = line.split(',').map(str::trim).collect();
    if fields.len() != want {
        return Err(user(format!(
            "{}:{n}: expected {want} comma-separated fields, got {}",
            path.display(),
            fields.len()
        )));
    }
    Ok(fields)
}

fn parse_field<T: std::str::FromStr>(
    path: &Path,
    n: usize,
    name: &str,
    raw: &str,
) -> Result<T, AppError>
where
    T::Err: std::fmt::Display,
{
    raw.parse()
        .map_err(|e| user(format!("{}:{n}: field {name}: {e}", path.display())))
}

fn read_rapport(path: &Path) -> Result<Vec<RapportSlice>, AppError> {
    let mut rows = Vec::new();
    for (n, line) in read_lines(path)? {
        if n == 1 && line.starts_with("dyad_id,") {
            continue;
        }
        let f = csv_fields(path, n, &line, 4)?;
        rows.push(RapportSlice {
            dyad_id: f[0].to_string(),
            session: parse_field(path, n, "session", f[1])?,
            slice_index: parse_field(path, n, "slice_index", f[2])?,
            score: parse_field(path, n, "score", f[3])?,
        });
    }
    Ok(rows)
}

fn read_profiles(path: &Path) -> Result<Vec<DyadProfile>, AppError> {
    let mut rows = Vec::new();
    for (n, line) in read_lines(path)? {
        if n == 1 && line.starts_with("dyad_id,") {
            continue;
        }
        let f = csv_fields(path, n, &line, 3)?;
        rows.push(DyadProfile {
            dyad_id: f[0].to_string(),
            tutor_pretest: parse_field(path, n, "tutor_pretest", f[1])?,
            tutee_pretest: parse_field(path, n, "tutee_pretest", f[2])?,
        });
    }
    Ok(rows)
}

pub fn read_corpus(turns: &Path, rapport: &Path, profiles: &Path) -> Result<Corpus, AppError> {
    let turns = read_turns(turns)?;
    let rapport = read_rapport(rapport)?;
    let profiles = read_profiles(profiles)?;
    Ok(Corpus::from_turns(turns, rapport, profiles)?)
}

// ------------------------------------------------------- embedding table --

#[derive(Serialize, Deserialize)]
struct EmbeddingRow {
    dyad_id: String,
    session: u8,
    index: usize,
    vector: Vec<f64>,
}

/// Precomputed embeddings, one JSON object per line keyed by
/// (dyad_id, session, index).
pub fn read_embedding_table(path: &Path) -> Result<TableEmbedder, AppError> {
    let mut rows = Vec::new();
    for (n, line) in read_lines(path)? {
        let r: EmbeddingRow = serde_json::from_str(&line)
            .map_err(|e| user(format!("{}:{n}: {e}", path.display())))?;
        rows.push(((r.dyad_id, r.session, r.index), r.vector));
    }
    Ok(TableEmbedder::from_rows(rows)?)
}

// ----------------------------------------------------------- model files --

pub const MODEL_FORMAT: &str = "hedgecast-model-v1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingSpec {
    pub provider: ProviderKind,
    pub dim: usize,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub table_path: Option<PathBuf>,
}

/// Everything needed to rebuild the model's input pipeline and score new
/// instances: the mask and embedding spec pin the feature layout (guarded
/// by the model's schema fingerprint), the encode knobs pin context-info
/// values, and `train` records the fitted configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub format: String,
    pub mask: String,
    pub embedding: EmbeddingSpec,
    pub backchannel_cap: u32,
    pub backchannel_lexicon: Vec<String>,
    pub train: TrainConfig,
    pub model: TrainedModel,
}

pub fn model_json(file: &ModelFile) -> Result<String, AppError> {
    let mut s = serde_json::to_string_pretty(file)
        .map_err(|e| internal(format!("model serialization failed: {e}")))?;
    s.push('\n');
    Ok(s)
}

pub fn read_model(path: &Path) -> Result<ModelFile, AppError> {
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let file: ModelFile = serde_json::from_str(&text)
        .map_err(|e| user(format!("{}: {e}", path.display())))?;
    if file.format != MODEL_FORMAT {
        return Err(user(format!(
            "{}: unsupported model format \"{}\" (expected \"{MODEL_FORMAT}\")",
            path.display(),
            file.format
        )));
    }
    Ok(file)
}

// -------------------------------------------------------------- reports --

pub fn reports_csv(reports: &[CvReport]) -> String {
    let mut out = String::from(
        "model,mask,k,precision,precision_ci,recall,recall_ci,f1,f1_ci\n",
    );
    for r in reports {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            r.kind,
            r.mask,
            r.k,
            ff(r.precision.mean),
            ff(r.precision.half_width),
            ff(r.recall.mean),
            ff(r.recall.half_width),
            ff(r.f1.mean),
            ff(r.f1.half_width),
        );
    }
    out
}

pub fn reports_txt(reports: &[CvReport]) -> String {
    let mask_w = reports.iter().map(|r| r.mask.len()).max().unwrap_or(4).max(4);
    let mut out = format!(
        "{:<10} {:<mask_w$} {:>15} {:>15} {:>15}\n",
        "model", "mask", "F1", "precision", "recall"
    );
    for r in reports {
        let _ = writeln!(
            out,
            "{:<10} {:<mask_w$} {:>15} {:>15} {:>15}",
            r.kind.as_str(),
            r.mask,
            ci_cell(&r.f1),
            ci_cell(&r.precision),
            ci_cell(&r.recall),
        );
    }
    out
}

pub fn folds_csv(reports: &[CvReport]) -> String {
    let mut out = String::from(
        "model,mask,fold,true_pos,false_pos,false_neg,true_neg,precision,recall,f1\n",
    );
    for r in reports {
        for (i, m) in r.folds.iter().enumerate() {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{}",
                r.kind,
                r.mask,
                i,
                m.true_pos,
                m.false_pos,
                m.false_neg,
                m.true_neg,
                ff(m.precision),
                ff(m.recall),
                ff(m.f1),
            );
        }
    }
    out
}

// -------------------------------------------------------------- ablation --

/// Report-column label for a removal; `None` is the no-removal baseline.
pub fn removal_label(removed: Option<FeatureGroup>) -> &'static str {
    match removed {
        None => "N/A",
        Some(FeatureGroup::Rapport) => "Rapport",
        Some(FeatureGroup::CS) => "CS",
        Some(FeatureGroup::TS) => "TS",
        Some(FeatureGroup::NB) => "NB",
        Some(FeatureGroup::ConInfo) => "ConInfo",
        Some(FeatureGroup::DialAct) => "DialAct",
        Some(FeatureGroup::Embedding) => "Emb",
    }
}

pub fn ablation_csv(kinds: &[ModelKind], matrix: &AblationMatrix) -> String {
    let mut out = String::from(
        "model,removed,f1,f1_ci,precision,precision_ci,recall,recall_ci,worst\n",
    );
    for (r, row) in matrix.rows.iter().enumerate() {
        for (c, cell) in row.cells.iter().enumerate() {
            let removed = match matrix.removals[c] {
                None => "n/a".to_string(),
                Some(g) => g.as_str().to_string(),
            };
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{}",
                kinds[r],
                removed,
                ff(cell.f1.mean),
                ff(cell.f1.half_width),
                ff(cell.precision.mean),
                ff(cell.precision.half_width),
                ff(cell.recall.mean),
                ff(cell.recall.half_width),
                (row.worst == Some(c)) as u8,
            );
        }
    }
    out
}

pub fn ablation_txt(kinds: &[ModelKind], matrix: &AblationMatrix) -> String {
    let mut out = format!("{:<10}", "model");
    for &removed in &matrix.removals {
        let _ = write!(out, " {:>16}", removal_label(removed));
    }
    out.push('\n');
    for (r, row) in matrix.rows.iter().enumerate() {
        let _ = write!(out, "{:<10}", kinds[r].as_str());
        for (c, cell) in row.cells.iter().enumerate() {
            let mark = if row.worst == Some(c) { "*" } else { "" };
            let _ = write!(out, " {:>16}", format!("{}{}", ci_cell(&cell.f1), mark));
        }
        out.push('\n');
    }
    out.push_str("* lowest mean F1 among removals for that model\n");
    out
}

// ------------------------------------------------------------ explanation --

/// Long-form per-instance group attributions. `instance` indexes the
/// corpus-order instance list; dialogue/target locate the predicted turn.
pub fn phi_groups_csv(
    picked: &[usize],
    instances: &[Instance],
    players: &[Player],
    inputs: &[hedgecast_core::models::EncodedInput],
    explanations: &[InstanceExplanation],
) -> String {
    let mut out = String::from("instance,dialogue,target,label,player,value,phi\n");
    for ((&idx, x), e) in picked.iter().zip(inputs).zip(explanations) {
        let inst = &instances[idx];
        for (p, &phi) in players.iter().zip(&e.phi) {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{}",
                idx,
                inst.dialogue,
                inst.target,
                inst.label as u8,
                p.name,
                ff(hedgecast_core::explain::player_input_value(x, p)),
                ff(phi),
            );
        }
    }
    out
}

pub fn instances_csv(
    picked: &[usize],
    instances: &[Instance],
    explanations: &[InstanceExplanation],
) -> String {
    let mut out = String::from("instance,dialogue,target,label,base,fx,residual\n");
    for (&idx, e) in picked.iter().zip(explanations) {
        let inst = &instances[idx];
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            idx,
            inst.dialogue,
            inst.target,
            inst.label as u8,
            ff(e.base),
            ff(e.fx),
            ff(e.residual),
        );
    }
    out
}

pub fn phi_features_csv(
    picked: &[usize],
    players: &[Player],
    explanations: &[InstanceExplanation],
) -> String {
    let mut out = String::from("instance,player,phi,std_err\n");
    for (&idx, e) in picked.iter().zip(explanations) {
        let se = e.std_err.as_deref().unwrap_or(&[]);
        for (j, p) in players.iter().enumerate() {
            let _ = writeln!(
                out,
                "{},{},{},{}",
                idx,
                p.name,
                ff(e.phi[j]),
                se.get(j).map(|&s| ff(s)).unwrap_or_default(),
            );
        }
    }
    out
}

pub fn valence_csv(rows: &[ValenceRow]) -> String {
    let mut out = String::from("player,valence,mean_abs_phi,rank\n");
    for r in rows {
        let _ = writeln!(out, "{},{},{},{}", r.player, r.valence, ff(r.mean_abs_phi), r.rank);
    }
    out
}

pub fn valence_txt(title: &str, rows: &[ValenceRow], limit: usize) -> String {
    let name_w = rows
        .iter()
        .take(limit)
        .map(|r| r.player.len())
        .max()
        .unwrap_or(6)
        .max(6);
    let mut out = format!("{title}\n{:<4} {:<name_w$} {:>8} {:>12}\n", "rank", "player", "valence", "mean|phi|");
    for r in rows.iter().take(limit) {
        let sign = match r.valence {
            1 => "+",
            -1 => "-",
            _ => "0",
        };
        let _ = writeln!(out, "{:<4} {:<name_w$} {:>8} {:>12.4}", r.rank, r.player, sign, r.mean_abs_phi);
    }
    out
}

pub fn consensus_csv(names: &[String]) -> String {
    let mut out = String::from("player\n");
    for n in names {
        out.push_str(n);
        out.push('\n');
    }
    out
}

// ---------------------------------------------------------------- schema --

/// Included coordinates of one encoded turn, with offsets in the
/// masked (flattened) space.
pub fn schema_csv(schema: &FeatureSchema, mask: &FeatureMask) -> String {
    let mut out = String::from("offset,group,name\n");
    let mut off = 0;
    for e in schema.entries() {
        if mask.includes(e.group) {
            let _ = writeln!(out, "{},{},{}", off, e.group.as_str(), e.name);
            off += e.width;
        }
    }
    out
}
