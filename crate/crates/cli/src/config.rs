//! Run configuration: one TOML document describing the corpus source, the
//! feature schema, evaluation setup, model roster, and explanation options.
//! CLI flags override config keys. The resolved form is echoed into the
//! output directory; the echo deliberately omits the output path and the
//! jobs count so reruns into different directories stay byte-identical.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use hedgecast_core::corpus::synth::GeneratorConfig;
use hedgecast_core::eval::{CiMethod, EvalConfig};
use hedgecast_core::models::{GbdtParams, ModelKind, NeuralParams, TrainConfig};
use hedgecast_core::resample::ResampleConfig;

use crate::error::{io_err, user, AppError};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Output directory; `--out` overrides it. Never echoed, so a rerun into
    /// a different directory produces the same resolved_config.toml.
    #[serde(skip_serializing)]
    pub out: Option<PathBuf>,
    pub corpus: CorpusSection,
    pub schema: SchemaSection,
    pub eval: EvalSection,
    pub models: ModelsSection,
    pub explain: ExplainSection,
}

/// Exactly one of `files` and `generate` may be set.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub files: Option<CorpusFiles>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub generate: Option<GeneratorConfig>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusFiles {
    pub turns: PathBuf,
    pub rapport: PathBuf,
    pub profiles: PathBuf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProviderKind {
    Hashing,
    Table,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SchemaSection {
    pub embedding_dim: usize,
    pub embedding_seed: u64,
    pub provider: ProviderKind,
    /// Embedding table (JSONL), required when provider = "table".
    #[serde(skip_serializing_if = "Option::is_none")]
    pub table_path: Option<PathBuf>,
    pub mask: String,
}

impl Default for SchemaSection {
    fn default() -> Self {
        SchemaSection {
            embedding_dim: 16,
            embedding_seed: 0,
            provider: ProviderKind::Hashing,
            table_path: None,
            mask: "all".to_string(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CiName {
    TInterval,
    Bootstrap,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SmoteSection {
    pub enabled: bool,
    /// Minority nearest-neighbor count.
    pub k: usize,
    /// Target minority/majority ratio in (0, 1].
    pub ratio: f64,
}

impl Default for SmoteSection {
    fn default() -> Self {
        SmoteSection {
            enabled: true,
            k: 5,
            ratio: 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub k: usize,
    pub window: usize,
    pub ci: CiName,
    pub bootstrap_resamples: usize,
    pub smote: SmoteSection,
    pub backchannel_cap: u32,
    pub backchannel_lexicon: Vec<String>,
}

impl Default for EvalSection {
    fn default() -> Self {
        EvalSection {
            k: 5,
            window: 4,
            ci: CiName::TInterval,
            bootstrap_resamples: 1000,
            smote: SmoteSection::default(),
            backchannel_cap: 10,
            backchannel_lexicon: hedgecast_core::encoding::default_backchannel_lexicon()
                .into_iter()
                .collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelsSection {
    pub kinds: Vec<ModelKind>,
    pub threshold: f64,
    pub gbdt: GbdtParams,
    pub neural: NeuralParams,
}

impl Default for ModelsSection {
    fn default() -> Self {
        ModelsSection {
            kinds: ModelKind::ALL.to_vec(),
            threshold: 0.5,
            gbdt: GbdtParams::default(),
            neural: NeuralParams::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExplainSection {
    /// How many instances to explain (seeded pick from the corpus).
    pub instances: usize,
    /// Background sample size for the value function.
    pub background: usize,
    /// Also estimate per-feature attributions by permutation sampling.
    pub features: bool,
    /// Permutations per instance in feature mode.
    pub samples: usize,
}

impl Default for ExplainSection {
    fn default() -> Self {
        ExplainSection {
            instances: 40,
            background: 100,
            features: true,
            samples: 500,
        }
    }
}

/// A config with its seed pinned and its base directory for resolving
/// relative paths (the config file's parent, or the working directory).
#[derive(Debug)]
pub struct Resolved {
    pub cfg: RunConfig,
    pub seed: u64,
    pub base: PathBuf,
}

pub fn load_config(path: Option<&Path>) -> Result<(RunConfig, PathBuf), AppError> {
    match path {
        None => Ok((RunConfig::default(), PathBuf::from("."))),
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| io_err(p, e))?;
            let cfg: RunConfig = toml::from_str(&text)
                .map_err(|e| user(format!("{}: {e}", p.display())))?;
            let base = p.parent().map(Path::to_path_buf).unwrap_or_else(|| PathBuf::from("."));
            Ok((cfg, base))
        }
    }
}

pub fn resolve(
    mut cfg: RunConfig,
    base: PathBuf,
    seed_flag: Option<u64>,
) -> Result<Resolved, AppError> {
    let seed = seed_flag
        .or(cfg.seed)
        .ok_or_else(|| user("a seed is required: set `seed = ...` in the config or pass --seed"))?;
    cfg.seed = Some(seed);
    if cfg.corpus.files.is_some() && cfg.corpus.generate.is_some() {
        return Err(user(
            "config sets both [corpus.files] and [corpus.generate]; pick one source",
        ));
    }
    if cfg.schema.embedding_dim == 0 {
        return Err(user("schema.embedding_dim must be at least 1"));
    }
    if cfg.schema.provider == ProviderKind::Table && cfg.schema.table_path.is_none() {
        return Err(user("schema.provider = \"table\" needs schema.table_path"));
    }
    if cfg.eval.ci == CiName::Bootstrap && cfg.eval.bootstrap_resamples == 0 {
        return Err(user("eval.bootstrap_resamples must be at least 1"));
    }
    if cfg.models.kinds.is_empty() {
        return Err(user("models.kinds must list at least one model"));
    }
    Ok(Resolved { cfg, seed, base })
}

impl Resolved {
    /// Resolves a configured path against the config file's directory.
    pub fn path(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base.join(p)
        }
    }

    pub fn eval_config(&self) -> EvalConfig {
        let e = &self.cfg.eval;
        EvalConfig {
            k: e.k,
            seed: self.seed,
            window: e.window,
            ci: match e.ci {
                CiName::TInterval => CiMethod::TInterval,
                CiName::Bootstrap => CiMethod::Bootstrap {
                    resamples: e.bootstrap_resamples,
                },
            },
            smote: e.smote.enabled.then(|| ResampleConfig {
                k_neighbors: e.smote.k,
                target_ratio: e.smote.ratio,
                // Replaced with a fold- or fit-derived seed at use.
                seed: 0,
            }),
            backchannel_cap: e.backchannel_cap,
            backchannel_lexicon: self.lexicon(),
        }
    }

    pub fn lexicon(&self) -> BTreeSet<String> {
        self.cfg.eval.backchannel_lexicon.iter().cloned().collect()
    }

    /// Model roster in config order, deduplicated. The stratified-guess
    /// baseline is always appended so every report carries its row.
    pub fn kinds_with_baseline(&self) -> Vec<ModelKind> {
        let mut kinds: Vec<ModelKind> = Vec::new();
        for &k in &self.cfg.models.kinds {
            if !kinds.contains(&k) {
                kinds.push(k);
            }
        }
        if !kinds.contains(&ModelKind::Dummy) {
            kinds.push(ModelKind::Dummy);
        }
        kinds
    }

    /// Roster exactly as configured (deduplicated, no forced baseline).
    pub fn kinds_as_configured(&self) -> Vec<ModelKind> {
        let mut kinds: Vec<ModelKind> = Vec::new();
        for &k in &self.cfg.models.kinds {
            if !kinds.contains(&k) {
                kinds.push(k);
            }
        }
        kinds
    }

    pub fn train_config(&self, kind: ModelKind) -> TrainConfig {
        TrainConfig {
            kind,
            gbdt: self.cfg.models.gbdt,
            neural: self.cfg.models.neural.clone(),
            threshold: self.cfg.models.threshold,
            // Replaced with a derived seed at every fit site.
            seed: 0,
        }
    }

}

/// Serializes a config for the resolved_config.toml echo. The `out` path is
/// skipped at the field level, so the text is rerun-stable by construction.
pub fn echo_toml(cfg: &RunConfig) -> Result<String, AppError> {
    toml::to_string_pretty(cfg)
        .map_err(|e| crate::error::internal(format!("config echo failed: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn resolved(toml_text: &str, seed_flag: Option<u64>) -> Result<Resolved, AppError> {
        let cfg: RunConfig = toml::from_str(toml_text).expect("parse");
        resolve(cfg, PathBuf::from("."), seed_flag)
    }

    #[test]
    fn defaults_parse_and_need_only_a_seed() {
        let err = resolved("", None).unwrap_err();
        assert!(err.to_string().contains("seed"));
        let r = resolved("", Some(9)).unwrap();
        assert_eq!(r.seed, 9);
        assert_eq!(r.cfg.eval.k, 5);
        assert_eq!(r.cfg.schema.mask, "all");
        assert_eq!(r.kinds_with_baseline().len(), 5);
    }

    #[test]
    fn seed_flag_overrides_config_key() {
        let r = resolved("seed = 3", Some(11)).unwrap();
        assert_eq!(r.seed, 11);
        let r = resolved("seed = 3", None).unwrap();
        assert_eq!(r.seed, 3);
    }

    #[test]
    fn corpus_sources_are_exclusive() {
        let text = r#"
seed = 1
[corpus.files]
turns = "t.jsonl"
rapport = "r.csv"
profiles = "p.csv"
[corpus.generate]
dyads = 2
"#;
        let err = resolved(text, None).unwrap_err();
        assert!(err.to_string().contains("pick one source"));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err: Result<RunConfig, _> = toml::from_str("sede = 1");
        assert!(err.is_err());
    }

    #[test]
    fn echo_omits_the_output_path_and_round_trips() {
        let text = r#"
seed = 5
out = "runs/x"
[models]
kinds = ["gbdt", "dummy"]
[eval.smote]
enabled = false
"#;
        let r = resolved(text, None).unwrap();
        assert_eq!(r.cfg.out.as_deref(), Some(Path::new("runs/x")));
        let echo = echo_toml(&r.cfg).unwrap();
        assert!(!echo.contains("out ="), "echo must not carry the out path:\n{echo}");
        assert!(echo.contains("seed = 5"));
        let back: RunConfig = toml::from_str(&echo).unwrap();
        assert_eq!(back.models.kinds, vec![ModelKind::Gbdt, ModelKind::Dummy]);
        assert!(!back.eval.smote.enabled);
        // A second serialization of the round-tripped config is identical.
        let again = echo_toml(&back).unwrap();
        assert_eq!(echo, again);
    }

    #[test]
    fn smote_section_maps_to_resampler_keys() {
        let r = resolved("seed = 1\n[eval.smote]\nk = 3\nratio = 0.5\n", None).unwrap();
        let ec = r.eval_config();
        let sc = ec.smote.unwrap();
        assert_eq!(sc.k_neighbors, 3);
        assert_eq!(sc.target_ratio, 0.5);
        let r = resolved("seed = 1\n[eval.smote]\nenabled = false\n", None).unwrap();
        assert!(r.eval_config().smote.is_none());
    }

    #[test]
    fn baseline_is_always_on_the_roster() {
        let r = resolved("seed = 1\n[models]\nkinds = [\"gbdt\", \"gbdt\", \"mlp\"]\n", None).unwrap();
        assert_eq!(
            r.kinds_with_baseline(),
            vec![ModelKind::Gbdt, ModelKind::Mlp, ModelKind::Dummy]
        );
        assert_eq!(r.kinds_as_configured(), vec![ModelKind::Gbdt, ModelKind::Mlp]);
    }
}
