//! Group-removal ablation: rerun the full cross-validation once per
//! (model, removed group) cell under one fixed seed, so cell deltas
//! measure the removal and nothing else. Removal means the group is
//! masked out and dropped from the flattened input entirely.

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::corpus::Corpus;
use crate::encoding::{EmbeddingProvider, FeatureGroup, FeatureMask, FeatureSchema};
use crate::eval::{cross_validate, CvReport, EvalConfig, EvalError};
use crate::models::TrainConfig;

/// The experiment grid. `removals` holds `None` for the no-removal
/// baseline column, which must always be present.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationGrid {
    pub configs: Vec<TrainConfig>,
    pub removals: Vec<Option<FeatureGroup>>,
}

impl AblationGrid {
    /// Baseline plus the six non-embedding groups, in report column order.
    pub fn standard_removals() -> Vec<Option<FeatureGroup>> {
        vec![
            None,
            Some(FeatureGroup::Rapport),
            Some(FeatureGroup::CS),
            Some(FeatureGroup::TS),
            Some(FeatureGroup::NB),
            Some(FeatureGroup::ConInfo),
            Some(FeatureGroup::DialAct),
        ]
    }

    pub fn standard(configs: Vec<TrainConfig>) -> Self {
        AblationGrid {
            configs,
            removals: Self::standard_removals(),
        }
    }

    pub fn validate(&self) -> Result<(), EvalError> {
        if self.configs.is_empty() {
            return Err(EvalError::BadConfig(String::from(
                "ablation grid needs at least one model",
            )));
        }
        if !self.removals.contains(&None) {
            return Err(EvalError::BadConfig(String::from(
                "ablation grid must keep the no-removal baseline column",
            )));
        }
        Ok(())
    }
}

/// One model's row across every removal column.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub cells: Vec<CvReport>,
    /// Index into the removal columns of the lowest mean F1 among actual
    /// removals (the boldface analog); `None` when the grid has no removals.
    pub worst: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationMatrix {
    pub removals: Vec<Option<FeatureGroup>>,
    pub rows: Vec<AblationRow>,
}

/// One cell: cross-validate with the group removed. Removing a group the
/// mask already excludes leaves the mask unchanged, so the cell reproduces
/// the baseline bit for bit.
pub fn run_cell(
    corpus: &Corpus,
    schema: &FeatureSchema,
    mask: &FeatureMask,
    provider: &dyn EmbeddingProvider,
    train: &TrainConfig,
    eval: &EvalConfig,
    removed: Option<FeatureGroup>,
) -> Result<CvReport, EvalError> {
    let cell_mask = match removed {
        None => mask.clone(),
        Some(g) => mask.without(g)?,
    };
    cross_validate(corpus, schema, &cell_mask, provider, train, eval)
}

pub fn run_ablation(
    corpus: &Corpus,
    schema: &FeatureSchema,
    mask: &FeatureMask,
    provider: &dyn EmbeddingProvider,
    grid: &AblationGrid,
    eval: &EvalConfig,
) -> Result<AblationMatrix, EvalError> {
    grid.validate()?;
    let mut rows = Vec::with_capacity(grid.configs.len());
    for train in &grid.configs {
        let mut cells = Vec::with_capacity(grid.removals.len());
        for &removed in &grid.removals {
            cells.push(run_cell(corpus, schema, mask, provider, train, eval, removed)?);
        }
        let worst = grid
            .removals
            .iter()
            .enumerate()
            .filter(|(_, r)| r.is_some())
            .min_by(|(i, _), (j, _)| cells[*i].f1.mean.total_cmp(&cells[*j].f1.mean))
            .map(|(i, _)| i);
        rows.push(AblationRow { cells, worst });
    }
    Ok(AblationMatrix {
        removals: grid.removals.clone(),
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::synth::{generate_synthetic, GeneratorConfig};
    use crate::encoding::{default_schema, HashingEmbedder};
    use crate::models::{GbdtParams, ModelKind};

    fn setup() -> (Corpus, FeatureSchema, HashingEmbedder, EvalConfig, TrainConfig) {
        let cfg = GeneratorConfig {
            dyads: 2,
            sessions_per_dyad: 1,
            turns_per_session: 120,
            base_hedge_rate: 0.2,
            ..GeneratorConfig::default()
        };
        let corpus = generate_synthetic(&cfg, 17).unwrap();
        let schema = default_schema(6);
        let provider = HashingEmbedder::new(6, 1);
        let eval = EvalConfig {
            k: 3,
            seed: 5,
            ..EvalConfig::default()
        };
        let train = TrainConfig {
            kind: ModelKind::Gbdt,
            gbdt: GbdtParams {
                trees: 6,
                depth: 3,
                ..GbdtParams::default()
            },
            ..TrainConfig::default()
        };
        (corpus, schema, provider, eval, train)
    }

    #[test]
    fn baseline_column_equals_standalone_run() {
        let (corpus, schema, provider, eval, train) = setup();
        let mask = FeatureMask::all();
        let grid = AblationGrid {
            configs: vec![train.clone()],
            removals: vec![None, Some(FeatureGroup::Rapport)],
        };
        let matrix = run_ablation(&corpus, &schema, &mask, &provider, &grid, &eval).unwrap();
        let standalone =
            cross_validate(&corpus, &schema, &mask, &provider, &train, &eval).unwrap();
        assert_eq!(matrix.rows[0].cells[0], standalone);
        assert_eq!(matrix.rows[0].worst, Some(1));
    }

    #[test]
    fn removing_an_absent_group_is_a_no_op() {
        let (corpus, schema, provider, eval, train) = setup();
        let mask = FeatureMask::from_name("wo_emb").unwrap();
        let baseline =
            run_cell(&corpus, &schema, &mask, &provider, &train, &eval, None).unwrap();
        let removed = run_cell(
            &corpus,
            &schema,
            &mask,
            &provider,
            &train,
            &eval,
            Some(FeatureGroup::Embedding),
        )
        .unwrap();
        assert_eq!(removed, baseline);
    }

    #[test]
    fn grid_must_keep_the_baseline() {
        let (_, _, _, _, train) = setup();
        let grid = AblationGrid {
            configs: vec![train],
            removals: vec![Some(FeatureGroup::CS)],
        };
        assert!(matches!(grid.validate(), Err(EvalError::BadConfig(_))));
        assert!(AblationGrid::standard(vec![]).validate().is_err());
        assert_eq!(AblationGrid::standard_removals().len(), 7);
    }

    #[test]
    fn matrix_covers_the_full_grid() {
        let (corpus, schema, provider, eval, train) = setup();
        let mut eval = eval;
        eval.k = 2;
        let mask = FeatureMask::all();
        let grid = AblationGrid {
            configs: vec![train.clone(), TrainConfig::for_kind(ModelKind::Dummy)],
            removals: vec![None, Some(FeatureGroup::CS), Some(FeatureGroup::NB)],
        };
        let matrix = run_ablation(&corpus, &schema, &mask, &provider, &grid, &eval).unwrap();
        assert_eq!(matrix.rows.len(), 2);
        for row in &matrix.rows {
            assert_eq!(row.cells.len(), 3);
            for cell in &row.cells {
                assert!(cell.f1.half_width >= 0.0);
                assert_eq!(cell.folds.len(), 2);
            }
        }
    }
}
