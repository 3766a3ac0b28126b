//! The five subcommands. Each one computes everything in memory first and
//! flushes files only on success, so a failing run never leaves partial
//! tables behind. Every output byte is a pure function of (config, seed):
//! worker counts only change scheduling, never results.

use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use hedgecast_core::ablation::{AblationGrid, AblationMatrix, AblationRow, run_cell};
use hedgecast_core::corpus::synth::{generate_synthetic, GeneratorConfig};
use hedgecast_core::corpus::{extract_instances, Corpus, Instance, Speaker};
use hedgecast_core::encoding::{
    boxed_hashing_provider, default_schema, encode_instance, flatten, EmbeddingProvider,
    EncodeOptions, FeatureMask, FeatureSchema, NormStats,
};
use hedgecast_core::eval::{assemble_report, cv_plan, run_prepared, CvReport, FoldOutcome};
use hedgecast_core::explain::{
    feature_players, group_players, sample_background, shapley_exact, shapley_sampling,
    valence_summary, consensus_players, InstanceExplanation, ValenceRow,
};
use hedgecast_core::math::derive_seed;
use hedgecast_core::models::{fit, EncodedInput, ModelKind, TrainedModel};
use hedgecast_core::resample::{smote, ResampleConfig};

use crate::config::{echo_toml, ProviderKind, Resolved, RunConfig};
use crate::error::{io_err, user, AppError};
use crate::formats;
use crate::formats::{EmbeddingSpec, ModelFile};
use crate::runner::parallel_map;

pub struct Ctx {
    pub r: Resolved,
    pub out: Option<PathBuf>,
    pub jobs: usize,
}

impl Ctx {
    fn out_dir(&self) -> Result<PathBuf, AppError> {
        if let Some(o) = &self.out {
            return Ok(o.clone());
        }
        if let Some(o) = &self.r.cfg.out {
            return Ok(self.r.path(o));
        }
        Err(user("an output directory is required: pass --out or set `out = ...`"))
    }
}

/// In-memory output set, flushed atomically-enough: nothing is written
/// until every byte of every file has been produced.
#[derive(Default)]
struct Staged {
    files: Vec<(String, String)>,
}

impl Staged {
    fn add(&mut self, name: impl Into<String>, content: String) {
        self.files.push((name.into(), content));
    }

    fn flush(&self, dir: &Path) -> Result<(), AppError> {
        std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
        for (name, content) in &self.files {
            let path = dir.join(name);
            std::fs::write(&path, content).map_err(|e| io_err(&path, e))?;
        }
        Ok(())
    }
}

fn corpus_from(r: &Resolved) -> Result<Corpus, AppError> {
    match (&r.cfg.corpus.files, &r.cfg.corpus.generate) {
        (Some(f), None) => formats::read_corpus(
            &r.path(&f.turns),
            &r.path(&f.rapport),
            &r.path(&f.profiles),
        ),
        (None, Some(g)) => synthesize(g, r.seed),
        (None, None) => Err(user(
            "this command needs a corpus: set [corpus.files] or [corpus.generate]",
        )),
        (Some(_), Some(_)) => unreachable!("rejected at resolve"),
    }
}

fn synthesize(g: &GeneratorConfig, seed: u64) -> Result<Corpus, AppError> {
    g.validate()?;
    Ok(generate_synthetic(g, derive_seed(seed, "corpus", 0))?)
}

fn build_provider(r: &Resolved) -> Result<Box<dyn EmbeddingProvider>, AppError> {
    let s = &r.cfg.schema;
    provider_from_spec(
        &EmbeddingSpec {
            provider: s.provider,
            dim: s.embedding_dim,
            seed: s.embedding_seed,
            table_path: s.table_path.as_ref().map(|p| r.path(p)),
        },
        None,
    )
}

/// `base` resolves a relative table path for an embedding read out of a
/// model file; config-derived embeddings arrive already resolved.
fn provider_from_spec(
    spec: &EmbeddingSpec,
    base: Option<&Path>,
) -> Result<Box<dyn EmbeddingProvider>, AppError> {
    match spec.provider {
        ProviderKind::Hashing => Ok(boxed_hashing_provider(spec.dim, spec.seed)),
        ProviderKind::Table => {
            let p = spec
                .table_path
                .as_ref()
                .ok_or_else(|| user("table provider without a table path"))?;
            let p = match base {
                Some(b) if p.is_relative() => b.join(p),
                _ => p.clone(),
            };
            let table = formats::read_embedding_table(&p)?;
            if table.dim() != spec.dim {
                return Err(user(format!(
                    "{}: table embedding width {} does not match the configured dim {}",
                    p.display(),
                    table.dim(),
                    spec.dim
                )));
            }
            Ok(Box::new(table))
        }
    }
}

/// Extracts and encodes every instance, with normalization fitted on the
/// whole corpus. Fold-wise training uses the leakage-safe per-fold path in
/// the evaluation pipeline instead; this is for final fits and explanation.
fn encode_all(
    corpus: &Corpus,
    schema: &FeatureSchema,
    mask: &FeatureMask,
    provider: &dyn EmbeddingProvider,
    window: usize,
    backchannel_cap: u32,
    backchannel_lexicon: std::collections::BTreeSet<String>,
) -> Result<(Vec<Instance>, Vec<EncodedInput>, Vec<bool>), AppError> {
    let instances = extract_instances(corpus, window);
    if instances.is_empty() {
        return Err(user(format!("corpus yields no instances at window {window}")));
    }
    let opts = EncodeOptions {
        stats: NormStats::fit(corpus, &instances),
        backchannel_cap,
        backchannel_lexicon,
    };
    let dim = schema.included_width(mask);
    let mut xs = Vec::with_capacity(instances.len());
    let mut ys = Vec::with_capacity(instances.len());
    for inst in &instances {
        let tensor = encode_instance(inst, corpus, schema, provider, mask, &opts)?;
        xs.push(EncodedInput::new(window, dim, flatten(&tensor, schema, mask))?);
        ys.push(inst.label);
    }
    Ok((instances, xs, ys))
}

// -------------------------------------------------------------- generate --

pub fn cmd_generate(ctx: &Ctx) -> Result<(), AppError> {
    let out = ctx.out_dir()?;
    let r = &ctx.r;
    let gen = match (&r.cfg.corpus.files, &r.cfg.corpus.generate) {
        (Some(_), _) => {
            return Err(user(
                "generate builds a synthetic corpus; [corpus.files] does not apply here",
            ))
        }
        (None, Some(g)) => g.clone(),
        (None, None) => GeneratorConfig::default(),
    };
    let corpus = synthesize(&gen, r.seed)?;

    let mut echo_cfg: RunConfig = r.cfg.clone();
    echo_cfg.corpus.generate = Some(gen);

    let mut staged = Staged::default();
    staged.add("turns.jsonl", formats::turns_jsonl(&corpus));
    staged.add("rapport.csv", formats::rapport_csv(&corpus));
    staged.add("profiles.csv", formats::profiles_csv(&corpus));
    staged.add("resolved_config.toml", echo_toml(&echo_cfg)?);
    staged.flush(&out)?;

    let turns = corpus.turn_count();
    let (mut tutor_turns, mut hedges) = (0usize, 0usize);
    for d in corpus.dialogues() {
        for t in d {
            if t.speaker == Speaker::Tutor {
                tutor_turns += 1;
                hedges += t.cs.hedge as usize;
            }
        }
    }
    println!(
        "dialogues={} turns={} tutor_turns={} tutor_hedges={} hedge_rate={:.4}",
        corpus.dialogues().len(),
        turns,
        tutor_turns,
        hedges,
        hedges as f64 / tutor_turns.max(1) as f64
    );
    println!("wrote corpus files to {}", out.display());
    Ok(())
}

// ------------------------------------------------------------ train-eval --

/// Position of a kind in the fixed roster; keeps fit seeds independent of
/// the configured ordering.
fn kind_index(kind: ModelKind) -> u64 {
    ModelKind::ALL.iter().position(|&k| k == kind).unwrap() as u64
}

fn fit_final(
    r: &Resolved,
    kind: ModelKind,
    xs: &[EncodedInput],
    ys: &[bool],
    fingerprint: u64,
) -> Result<TrainedModel, AppError> {
    let mut tc = r.train_config(kind);
    tc.seed = derive_seed(r.seed, "final-fit", kind_index(kind));
    let smote_cfg = r.eval_config().smote;
    let (xs2, ys2): (Vec<EncodedInput>, Vec<bool>) = match (smote_cfg, kind) {
        (Some(sc), k) if k != ModelKind::Dummy => {
            let flat: Vec<Vec<f64>> = xs.iter().map(|x| x.flat().to_vec()).collect();
            let sc = ResampleConfig {
                seed: derive_seed(r.seed, "final-smote", kind_index(kind)),
                ..sc
            };
            let (rx, ry) = smote(&flat, ys, &sc)?;
            let (window, dim) = (xs[0].window, xs[0].dim);
            let rx = rx
                .into_iter()
                .map(|v| EncodedInput::new(window, dim, v))
                .collect::<Result<Vec<_>, _>>()?;
            (rx, ry)
        }
        _ => (xs.to_vec(), ys.to_vec()),
    };
    Ok(fit(&tc, &xs2, &ys2, fingerprint)?)
}

pub fn cmd_train_eval(ctx: &Ctx) -> Result<(), AppError> {
    let out = ctx.out_dir()?;
    let r = &ctx.r;
    let corpus = corpus_from(r)?;
    let schema = default_schema(r.cfg.schema.embedding_dim);
    let mask = FeatureMask::from_name(&r.cfg.schema.mask)?;
    let provider = build_provider(r)?;
    let eval = r.eval_config();
    let kinds = r.kinds_with_baseline();
    let trains: Vec<_> = kinds.iter().map(|&k| r.train_config(k)).collect();
    for t in &trains {
        t.validate()?;
    }

    let plan = cv_plan(&corpus, &schema, &mask, provider.as_ref(), &eval)?;
    let items: Vec<(usize, usize)> = (0..kinds.len())
        .flat_map(|ki| (0..plan.len()).map(move |fi| (ki, fi)))
        .collect();
    let results = parallel_map(ctx.jobs, &items, |&(ki, fi)| {
        run_prepared(&plan[fi], &trains[ki])
    });

    let mut reports: Vec<CvReport> = Vec::with_capacity(kinds.len());
    let mut it = results.into_iter();
    for &kind in &kinds {
        let outcomes: Vec<FoldOutcome> = (0..plan.len())
            .map(|_| it.next().expect("one result per work item"))
            .collect::<Result<_, _>>()?;
        reports.push(assemble_report(kind, mask.name(), &outcomes, eval.ci, eval.seed)?);
    }

    let (_, xs, ys) = encode_all(
        &corpus,
        &schema,
        &mask,
        provider.as_ref(),
        eval.window,
        eval.backchannel_cap,
        eval.backchannel_lexicon.clone(),
    )?;
    let fingerprint = schema.fingerprint(&mask, eval.window);
    let finals = parallel_map(ctx.jobs, &kinds, |&kind| {
        fit_final(r, kind, &xs, &ys, fingerprint)
    });

    let mut staged = Staged::default();
    staged.add("reports.csv", formats::reports_csv(&reports));
    staged.add("reports.txt", formats::reports_txt(&reports));
    staged.add("folds.csv", formats::folds_csv(&reports));
    for (&kind, model) in kinds.iter().zip(finals) {
        let file = ModelFile {
            format: formats::MODEL_FORMAT.to_string(),
            mask: mask.name(),
            embedding: EmbeddingSpec {
                provider: r.cfg.schema.provider,
                dim: r.cfg.schema.embedding_dim,
                seed: r.cfg.schema.embedding_seed,
                table_path: r.cfg.schema.table_path.as_ref().map(|p| r.path(p)),
            },
            backchannel_cap: eval.backchannel_cap,
            backchannel_lexicon: eval.backchannel_lexicon.iter().cloned().collect(),
            train: {
                let mut tc = r.train_config(kind);
                tc.seed = derive_seed(r.seed, "final-fit", kind_index(kind));
                tc
            },
            model: model?,
        };
        staged.add(format!("model_{kind}.json"), formats::model_json(&file)?);
    }
    staged.add("resolved_config.toml", echo_toml(&r.cfg)?);
    staged.flush(&out)?;

    print!("{}", formats::reports_txt(&reports));
    println!("wrote reports and {} model files to {}", kinds.len(), out.display());
    Ok(())
}

// ---------------------------------------------------------------- explain --

fn pick_instances(n: usize, want: usize, seed: u64) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "explain-pick", 0));
    idx.shuffle(&mut rng);
    idx.truncate(want.min(n));
    idx.sort_unstable();
    idx
}

pub fn cmd_explain(ctx: &Ctx, model_paths: &[PathBuf]) -> Result<(), AppError> {
    let out = ctx.out_dir()?;
    let r = &ctx.r;
    let ex = &r.cfg.explain;
    if ex.instances < 2 {
        return Err(user("explain.instances must be at least 2 for the valence summary"));
    }
    if ex.background == 0 {
        return Err(user("explain.background must be at least 1"));
    }
    let corpus = corpus_from(r)?;

    let mut staged = Staged::default();
    let mut txt = String::new();
    let mut consensus_tables: Vec<Vec<ValenceRow>> = Vec::new();

    for (mi, path) in model_paths.iter().enumerate() {
        let mf = formats::read_model(path)?;
        let mask = FeatureMask::from_name(&mf.mask)?;
        let schema = default_schema(mf.embedding.dim);
        let provider = provider_from_spec(&mf.embedding, path.parent())?;
        let window = mf.model.window;
        mf.model.verify_fingerprint(schema.fingerprint(&mask, window))?;

        let (instances, xs, _ys) = encode_all(
            &corpus,
            &schema,
            &mask,
            provider.as_ref(),
            window,
            mf.backchannel_cap,
            mf.backchannel_lexicon.iter().cloned().collect(),
        )?;
        let background = sample_background(&xs, ex.background, r.seed)?;
        let picked = pick_instances(xs.len(), ex.instances, r.seed);
        if picked.len() < 2 {
            return Err(user(format!(
                "corpus yields only {} instances; explanation needs at least 2",
                picked.len()
            )));
        }
        let picked_inputs: Vec<EncodedInput> = picked.iter().map(|&i| xs[i].clone()).collect();
        let model = &mf.model;
        let score = |x: &EncodedInput| model.predict_proba(x).expect("shape checked above");
        let prefix = format!("m{mi}_{}", model.kind);

        let gplayers = group_players(&schema, &mask, window);
        let gexpl: Vec<InstanceExplanation> = parallel_map(ctx.jobs, &picked, |&i| {
            shapley_exact(&score, &xs[i], &background, &gplayers)
        })
        .into_iter()
        .collect::<Result<_, _>>()?;
        let gval = valence_summary(&gplayers, &gexpl, &picked_inputs)?;

        staged.add(
            format!("{prefix}_instances.csv"),
            formats::instances_csv(&picked, &instances, &gexpl),
        );
        staged.add(
            format!("{prefix}_phi_groups.csv"),
            formats::phi_groups_csv(&picked, &instances, &gplayers, &picked_inputs, &gexpl),
        );
        staged.add(format!("{prefix}_valence_groups.csv"), formats::valence_csv(&gval));
        txt.push_str(&formats::valence_txt(
            &format!("{} (mask {}): group attributions, exact", model.kind, mf.mask),
            &gval,
            12,
        ));
        txt.push('\n');

        if ex.features && ex.samples > 0 {
            let fplayers = feature_players(&schema, &mask, window);
            let fexpl: Vec<InstanceExplanation> = parallel_map(ctx.jobs, &picked, |&i| {
                shapley_sampling(
                    &score,
                    &xs[i],
                    &background,
                    &fplayers,
                    ex.samples,
                    derive_seed(r.seed, "explain-feat", i as u64),
                )
            })
            .into_iter()
            .collect::<Result<_, _>>()?;
            let fval = valence_summary(&fplayers, &fexpl, &picked_inputs)?;
            staged.add(
                format!("{prefix}_phi_features.csv"),
                formats::phi_features_csv(&picked, &fplayers, &fexpl),
            );
            staged.add(format!("{prefix}_valence_features.csv"), formats::valence_csv(&fval));
            txt.push_str(&formats::valence_txt(
                &format!(
                    "{} (mask {}): feature attributions, {} permutations",
                    model.kind, mf.mask, ex.samples
                ),
                &fval,
                15,
            ));
            txt.push('\n');
            consensus_tables.push(fval);
        } else {
            consensus_tables.push(gval);
        }
    }

    if model_paths.len() >= 2 {
        let shared = consensus_players(&consensus_tables, 10);
        staged.add("consensus.csv", formats::consensus_csv(&shared));
        txt.push_str("players in every model's top-10 by mean |phi|:\n");
        for name in &shared {
            txt.push_str("  ");
            txt.push_str(name);
            txt.push('\n');
        }
    }

    staged.add("explain.txt", txt.clone());
    staged.add("resolved_config.toml", echo_toml(&r.cfg)?);
    staged.flush(&out)?;
    print!("{txt}");
    println!("wrote explanation tables to {}", out.display());
    Ok(())
}

// ----------------------------------------------------------------- ablate --

pub fn cmd_ablate(ctx: &Ctx) -> Result<(), AppError> {
    let out = ctx.out_dir()?;
    let r = &ctx.r;
    let corpus = corpus_from(r)?;
    let schema = default_schema(r.cfg.schema.embedding_dim);
    let mask = FeatureMask::from_name(&r.cfg.schema.mask)?;
    let provider = build_provider(r)?;
    let eval = r.eval_config();
    let kinds = r.kinds_as_configured();
    let trains: Vec<_> = kinds.iter().map(|&k| r.train_config(k)).collect();
    for t in &trains {
        t.validate()?;
    }
    let grid = AblationGrid::standard(trains.clone());
    grid.validate()?;

    let items: Vec<(usize, usize)> = (0..kinds.len())
        .flat_map(|ki| (0..grid.removals.len()).map(move |ci| (ki, ci)))
        .collect();
    let cells = parallel_map(ctx.jobs, &items, |&(ki, ci)| {
        run_cell(
            &corpus,
            &schema,
            &mask,
            provider.as_ref(),
            &trains[ki],
            &eval,
            grid.removals[ci],
        )
    });

    // Row assembly mirrors the serial harness exactly, including the
    // first-wins tie rule for the worst removal.
    let mut rows: Vec<AblationRow> = Vec::with_capacity(kinds.len());
    let mut it = cells.into_iter();
    for _ in &kinds {
        let cells: Vec<CvReport> = (0..grid.removals.len())
            .map(|_| it.next().expect("one cell per work item"))
            .collect::<Result<_, _>>()?;
        let worst = grid
            .removals
            .iter()
            .enumerate()
            .filter(|(_, rm)| rm.is_some())
            .min_by(|(i, _), (j, _)| cells[*i].f1.mean.total_cmp(&cells[*j].f1.mean))
            .map(|(i, _)| i);
        rows.push(AblationRow { cells, worst });
    }
    let matrix = AblationMatrix {
        removals: grid.removals.clone(),
        rows,
    };

    let mut staged = Staged::default();
    staged.add("ablation.csv", formats::ablation_csv(&kinds, &matrix));
    staged.add("ablation.txt", formats::ablation_txt(&kinds, &matrix));
    staged.add("resolved_config.toml", echo_toml(&r.cfg)?);
    staged.flush(&out)?;

    print!("{}", formats::ablation_txt(&kinds, &matrix));
    println!("wrote ablation matrix to {}", out.display());
    Ok(())
}

// ------------------------------------------------------------ schema-dump --

pub fn cmd_schema_dump(ctx: &Ctx) -> Result<(), AppError> {
    let r = &ctx.r;
    let schema = default_schema(r.cfg.schema.embedding_dim);
    let mask = FeatureMask::from_name(&r.cfg.schema.mask)?;
    let window = r.cfg.eval.window;
    let csv = formats::schema_csv(&schema, &mask);
    println!(
        "mask={} window={} dim={} total_dim={} fingerprint={:#018x}",
        mask.name(),
        window,
        schema.included_width(&mask),
        schema.total_dim(),
        schema.fingerprint(&mask, window)
    );
    print!("{csv}");
    if let Ok(out) = ctx.out_dir() {
        let mut staged = Staged::default();
        staged.add("schema.csv", csv);
        staged.add("resolved_config.toml", echo_toml(&r.cfg)?);
        staged.flush(&out)?;
    }
    Ok(())
}
