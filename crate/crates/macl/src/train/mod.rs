//! Training: data preparation, the epoch loop with joint supervision,
//! validation-based model selection, and checkpointing.

pub mod checkpoint;
mod config;
mod step;

pub use config::TrainConfig;
pub use step::{
    build_step, plan_step, step_loss_value, LegacyItemPlan, StepGraph, StepPlan,
    LEGACY_EMBED_DROPOUT,
};

use crate::augment::NeighborIndex;
use crate::autodiff::AdamState;
use crate::data::{
    chronological_split, filter_corpus, item_counts, make_batches, BatchMode, Catalog,
    DatasetSplit, ItemId, Session,
};
use crate::embed::FeatureSpace;
use crate::error::{Error, Result};
use crate::eval::evaluate;
use crate::loss::LossBreakdown;
use crate::model::ModelState;
use crate::rng::stream_seed;
use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

/// Everything a training or evaluation run needs beyond the raw files:
/// the filtered catalog, splits, feature space, and neighbor index.
#[derive(Debug, Clone)]
pub struct PreparedData {
    pub catalog: Catalog,
    pub split: DatasetSplit,
    pub fspace: FeatureSpace,
    pub neighbors: NeighborIndex,
    pub train_counts: BTreeMap<ItemId, u64>,
}

/// Filter, split, fit the feature space, and build the neighbor index.
/// Projectors fit on the full filtered catalog: features carry no labels,
/// and the paper's pipeline fits dimensionality reduction once.
pub fn prepare_data(
    catalog: &Catalog,
    sessions: &[Session],
    cfg: &TrainConfig,
) -> Result<PreparedData> {
    prepare_data_with_features(catalog, sessions, cfg, None, None)
}

/// As [`prepare_data`], with optional precomputed native features (keyed
/// by the post-filter dense item index) that bypass the extractors.
pub fn prepare_data_with_features(
    catalog: &Catalog,
    sessions: &[Session],
    cfg: &TrainConfig,
    imported_image: Option<&BTreeMap<ItemId, Vec<f64>>>,
    imported_text: Option<&BTreeMap<ItemId, Vec<f64>>>,
) -> Result<PreparedData> {
    cfg.validate()?;
    let (sessions, catalog) =
        filter_corpus(sessions, catalog, cfg.min_item_count, cfg.keep_unpopular)?;
    let split = chronological_split(&sessions)?;
    let fspace = FeatureSpace::build(
        &catalog,
        cfg.d,
        cfg.projector,
        cfg.seed,
        cfg.text_native_dim,
        imported_image,
        imported_text,
    )?;
    let neighbors =
        NeighborIndex::build(&catalog.vocabulary(), &fspace.text_extractor, cfg.neighbor_k);
    let train_counts = item_counts(&split.train);
    Ok(PreparedData { catalog, split, fspace, neighbors, train_counts })
}

/// One loss-log line per optimization step.
#[derive(Debug, Clone, Copy)]
pub struct LossLogRow {
    pub epoch: usize,
    pub step: usize,
    pub breakdown: LossBreakdown,
}

#[derive(Debug, Clone)]
pub struct TrainOutput {
    /// The checkpointed model with the best validation precision.
    pub model: ModelState,
    pub best_epoch: usize,
    pub best_val_precision: f64,
    pub selection_k: usize,
    pub loss_log: Vec<LossLogRow>,
    pub val_history: Vec<f64>,
}

/// Run the joint training loop: per batch, fuse, encode, build signal
/// sets, take one Adam step on the joint loss; per epoch, evaluate on
/// validation and retain the best checkpoint, with early stopping.
pub fn train(cfg: &TrainConfig, data: &PreparedData) -> Result<TrainOutput> {
    cfg.validate()?;
    let dims = cfg.model_dims(data.catalog.len());
    let mut model = ModelState::init(dims, cfg.seed)?;
    let mut adam = AdamState::new(cfg.learning_rate);
    // Model selection on Prec@20 when 20 is evaluated, else the largest k.
    let selection_k =
        if cfg.k_list.contains(&20) { 20 } else { *cfg.k_list.last().expect("validated") };

    let mut loss_log = Vec::new();
    let mut val_history = Vec::new();
    let mut best: Option<(f64, ModelState, usize)> = None;
    let mut strikes = 0usize;

    for epoch in 0..cfg.epochs {
        let shuffle_seed = stream_seed(cfg.seed, "epoch-shuffle", &[epoch as u64]);
        let batches = make_batches(
            &data.split.train,
            cfg.batch_size,
            cfg.max_len,
            shuffle_seed,
            BatchMode::Train,
        )?;
        if batches.is_empty() {
            return Err(Error::Config(format!(
                "training set ({} sessions) smaller than one batch ({})",
                data.split.train.len(),
                cfg.batch_size
            )));
        }
        for (step_idx, batch) in batches.into_iter().enumerate() {
            let plan = plan_step(
                cfg,
                &data.catalog,
                &data.fspace,
                &data.neighbors,
                batch,
                epoch,
                step_idx,
            )?;
            let mut graph = build_step(&model, &data.catalog, &data.fspace, cfg, &plan)?;
            if !graph.breakdown.total.is_finite() {
                return Err(Error::TrainingDivergence(format!(
                    "non-finite loss at epoch {epoch} step {step_idx}"
                )));
            }
            graph.tape.backward(graph.total)?;
            graph.bound.harvest(&graph.tape, &mut model)?;
            adam.step(model.named_params_mut())?;
            loss_log.push(LossLogRow { epoch, step: step_idx, breakdown: graph.breakdown });
        }

        let report = evaluate(
            &model,
            &data.catalog,
            &data.fspace,
            &data.split.validation,
            &[selection_k],
        )?;
        let prec = report.precision_at(selection_k).expect("selection k evaluated");
        val_history.push(prec);
        match &best {
            Some((best_prec, _, _)) if prec <= *best_prec => {
                strikes += 1;
                if strikes >= cfg.patience {
                    break;
                }
            }
            _ => {
                best = Some((prec, model.clone(), epoch));
                strikes = 0;
            }
        }
    }

    let (best_val_precision, model, best_epoch) =
        best.ok_or_else(|| Error::Contract("training ran zero epochs".into()))?;
    Ok(TrainOutput {
        model,
        best_epoch,
        best_val_precision,
        selection_k,
        loss_log,
        val_history,
    })
}

/// Write `loss_log.csv`: epoch, step, rec, item_con, sess_con, total,
/// mean_alpha, mean_beta.
pub fn write_loss_log_csv(path: &Path, rows: &[LossLogRow]) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    writeln!(f, "epoch,step,rec,item_con,sess_con,total,mean_alpha,mean_beta")?;
    for row in rows {
        let b = row.breakdown;
        writeln!(
            f,
            "{},{},{:.9},{:.9},{:.9},{:.9},{:.9},{:.9}",
            row.epoch, row.step, b.rec, b.item_con, b.sess_con, b.total, b.mean_alpha,
            b.mean_beta
        )?;
    }
    Ok(())
}
