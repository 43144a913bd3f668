//! One training step: plan every random choice up front (augmented views,
//! negative draws, dropout masks), then build the loss graph as a pure
//! function of (parameters, plan). Finite-difference verification and
//! bitwise reproducibility both hang on that purity.

use crate::augment::{
    plan_item_signal_set, plan_session_signal_sets, AugmentParams, NeighborIndex,
    PlannedItemSet, PlannedSessionSet, SessionNegatives,
};
use crate::autodiff::{NodeId, Tape};
use crate::data::{item_of_slot, Batch, Catalog, ItemId};
use crate::embed::FeatureSpace;
use crate::error::{Error, Result};
use crate::loss::{
    adaptive_contrastive, base_contrastive, joint_loss, rec_loss, rec_probabilities,
    total_contrastive, legacy_augment, LegacyOp, LossBreakdown, SignalLevel,
    SignalSetNodes,
};
use crate::model::{
    encode_session, BlockDropout, BoundModel, EncoderContext, fuse_item, FusionInputs,
    ModelState,
};
use crate::rng::stream_rng;
use crate::train::TrainConfig;
use rand::seq::index::sample;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeSet;

/// Legacy (embedding-dropout) item signal plan: masks are pre-scaled by
/// `1/(1-rate)` with zeroed dropped entries.
#[derive(Debug, Clone)]
pub struct LegacyItemPlan {
    pub item: ItemId,
    pub positive_mask: Vec<f64>,
    pub negative_items: Vec<ItemId>,
    pub negative_masks: Vec<Vec<f64>>,
}

pub const LEGACY_EMBED_DROPOUT: f64 = 0.2;

/// Every random decision of one training step, fixed ahead of the graph.
#[derive(Debug, Clone)]
pub struct StepPlan {
    pub batch: Batch,
    pub item_sets: Vec<PlannedItemSet>,
    pub sess_sets: Vec<Option<PlannedSessionSet>>,
    pub legacy_items: Vec<LegacyItemPlan>,
    /// Per batch session: the legacy-augmented prefix in slot space.
    pub legacy_sessions: Vec<Option<Vec<u32>>>,
    pub dropout_seed: Option<u64>,
}

fn dropout_mask(rng: &mut ChaCha8Rng, len: usize, rate: f64) -> Vec<f64> {
    let keep = 1.0 - rate;
    (0..len)
        .map(|t| {
            let _ = t;
            if rng.random_range(0.0..1.0) < keep {
                1.0 / keep
            } else {
                0.0
            }
        })
        .collect()
}

/// Unique non-padding items of the batch (prefixes and labels), ascending.
fn unique_batch_items(batch: &Batch) -> Vec<ItemId> {
    let mut set = BTreeSet::new();
    for i in 0..batch.len() {
        for &slot in batch.true_prefix(i) {
            if let Some(id) = item_of_slot(slot) {
                set.insert(id);
            }
        }
        if let Some(id) = item_of_slot(batch.labels[i]) {
            set.insert(id);
        }
    }
    set.into_iter().collect()
}

/// Draw all randomness for one step.
pub fn plan_step(
    cfg: &TrainConfig,
    catalog: &Catalog,
    fspace: &FeatureSpace,
    neighbors: &NeighborIndex,
    batch: Batch,
    epoch: usize,
    step: usize,
) -> Result<StepPlan> {
    let mut rng = stream_rng(cfg.seed, "step-plan", &[epoch as u64, step as u64]);
    let params: AugmentParams = cfg.augment_params();
    let n_items = catalog.len();

    let mut item_sets = Vec::new();
    let mut legacy_items = Vec::new();
    if !cfg.no_item_cl {
        let uniques = unique_batch_items(&batch);
        if cfg.legacy_aug {
            for item in uniques {
                if n_items <= cfg.m_negatives {
                    return Err(Error::Sampling(format!(
                        "need more than {} items for {} legacy negatives",
                        n_items, cfg.m_negatives
                    )));
                }
                let candidates: Vec<ItemId> =
                    (0..n_items as ItemId).filter(|&i| i != item).collect();
                let negative_items: Vec<ItemId> = sample(&mut rng, candidates.len(), cfg.m_negatives)
                    .into_iter()
                    .map(|ci| candidates[ci])
                    .collect();
                let positive_mask = dropout_mask(&mut rng, cfg.d, LEGACY_EMBED_DROPOUT);
                let negative_masks = (0..cfg.m_negatives)
                    .map(|_| dropout_mask(&mut rng, cfg.d, LEGACY_EMBED_DROPOUT))
                    .collect();
                legacy_items.push(LegacyItemPlan {
                    item,
                    positive_mask,
                    negative_items,
                    negative_masks,
                });
            }
        } else {
            for item in uniques {
                // Negatives re-sample every step by default; the fixed
                // mode pins each item's negative set via a per-item
                // stream.
                let mut fixed_rng = cfg
                    .fixed_negatives
                    .then(|| stream_rng(cfg.seed, "fixed-negatives", &[item as u64]));
                match plan_item_signal_set(
                    item,
                    catalog,
                    fspace,
                    cfg.m_negatives,
                    &params,
                    neighbors,
                    &mut rng,
                    fixed_rng.as_mut(),
                ) {
                    Ok(set) => item_sets.push(set),
                    // Items with no augmentable modality contribute the
                    // recommendation loss only.
                    Err(Error::AugmentationUnavailable(_)) => {}
                    Err(e) => return Err(e),
                }
            }
        }
    }

    let mut sess_sets: Vec<Option<PlannedSessionSet>> = vec![None; batch.len()];
    let mut legacy_sessions: Vec<Option<Vec<u32>>> = vec![None; batch.len()];
    if !cfg.no_sess_cl {
        if cfg.legacy_aug {
            for i in 0..batch.len() {
                let prefix = batch.true_prefix(i);
                if prefix.len() < 2 {
                    continue;
                }
                let op = LegacyOp::ALL[rng.random_range(0..LegacyOp::ALL.len())];
                legacy_sessions[i] = Some(legacy_augment(prefix, op, &mut rng)?);
            }
        } else {
            let prefixes: Vec<Vec<ItemId>> = (0..batch.len())
                .map(|i| {
                    batch
                        .true_prefix(i)
                        .iter()
                        .filter_map(|&s| item_of_slot(s))
                        .collect()
                })
                .collect();
            sess_sets = plan_session_signal_sets(
                &prefixes,
                catalog,
                fspace,
                cfg.session_negative_mode,
                &params,
                neighbors,
                &mut rng,
            )?;
        }
    }

    let dropout_seed = if cfg.dropout > 0.0 { Some(rng.random()) } else { None };
    Ok(StepPlan { batch, item_sets, sess_sets, legacy_items, legacy_sessions, dropout_seed })
}

/// The assembled step graph plus its loss readout.
pub struct StepGraph {
    pub tape: Tape,
    pub bound: BoundModel,
    pub total: NodeId,
    pub breakdown: LossBreakdown,
}

struct DropoutFactory {
    seed: Option<u64>,
    rate: f64,
    n_blocks: usize,
    d: usize,
    d_ff: usize,
    counter: u64,
}

impl DropoutFactory {
    fn masks(&mut self, len: usize) -> Option<Vec<BlockDropout>> {
        let seed = self.seed?;
        self.counter += 1;
        let mut rng = stream_rng(seed, "dropout-masks", &[self.counter]);
        Some(
            (0..self.n_blocks)
                .map(|_| BlockDropout {
                    attn: dropout_mask(&mut rng, len * self.d, self.rate),
                    ff: dropout_mask(&mut rng, len * self.d_ff, self.rate),
                })
                .collect(),
        )
    }
}

/// Build the loss graph for a planned step. Pure in `state`: identical
/// (state, plan) pairs produce bitwise-identical losses and gradients.
pub fn build_step(
    state: &ModelState,
    catalog: &Catalog,
    fspace: &FeatureSpace,
    cfg: &TrainConfig,
    plan: &StepPlan,
) -> Result<StepGraph> {
    let n = catalog.len();
    let d = state.dims.d;
    let mut tape = Tape::new();
    let bound = BoundModel::bind(&mut tape, state);
    let mut dropout = DropoutFactory {
        seed: plan.dropout_seed,
        rate: cfg.dropout,
        n_blocks: state.dims.n_blocks,
        d,
        d_ff: state.dims.d_ff,
        counter: 0,
    };

    // Fused embeddings of every item, shared by every consumer this step.
    let mut fused_of_item: Vec<NodeId> = Vec::with_capacity(n);
    for item in catalog.items() {
        let e_id = tape.row(bound.id_table, (item.id + 1) as usize)?;
        let e_img = match fspace.img_embed(item.id) {
            Ok(v) => Some(tape.constant_vector(v)),
            Err(Error::ModalityAbsent { .. }) => None,
            Err(e) => return Err(e),
        };
        let e_txt = match fspace.txt_embed(item.id) {
            Ok(v) => Some(tape.constant_vector(v)),
            Err(Error::ModalityAbsent { .. }) => None,
            Err(e) => return Err(e),
        };
        fused_of_item.push(fuse_item(
            &mut tape,
            &bound.fusion,
            FusionInputs { e_id, e_img, e_txt },
        )?);
    }
    let fused_items = tape.stack_rows(&fused_of_item)?;
    let zero_row = tape.constant_vector(&vec![0.0; d]);
    let mut padded_parts = vec![zero_row];
    padded_parts.extend_from_slice(&fused_of_item);
    let fused_padded = tape.stack_rows(&padded_parts)?;

    let ctx = EncoderContext {
        blocks: &bound.blocks,
        positions: bound.positions,
        n_heads: state.dims.n_heads,
        max_len: state.dims.max_len,
    };

    let encode_slots = |tape: &mut Tape,
                        dropout: &mut DropoutFactory,
                        slots: &[u32]|
     -> Result<NodeId> {
        let rows: Vec<NodeId> = slots
            .iter()
            .map(|&s| tape.row(fused_padded, s as usize))
            .collect::<Result<_>>()?;
        let masks = dropout.masks(rows.len());
        encode_session(tape, &ctx, &rows, masks.as_deref())
    };

    // Recommendation loss, averaged over the batch.
    let mut session_nodes = Vec::with_capacity(plan.batch.len());
    let mut rec_losses = Vec::with_capacity(plan.batch.len());
    for i in 0..plan.batch.len() {
        let s_i = encode_slots(&mut tape, &mut dropout, plan.batch.true_prefix(i))?;
        session_nodes.push(s_i);
        let probs = rec_probabilities(&mut tape, fused_items, s_i)?;
        let label_slot = plan.batch.labels[i];
        let target_row = item_of_slot(label_slot).ok_or_else(|| {
            Error::Contract("padding is not a legal prediction target".into())
        })? as usize;
        rec_losses.push(rec_loss(&mut tape, probs, target_row, cfg.ce_mode)?);
    }
    let rec_cat = tape.concat(&rec_losses)?;
    let rec_sum = tape.sum_all(rec_cat);
    let rec = tape.scale(rec_sum, 1.0 / plan.batch.len() as f64);

    // Item-level contrastive loss.
    let mut item_signal_nodes: Vec<SignalSetNodes> = Vec::new();
    for set in &plan.item_sets {
        let anchor = fused_of_item[set.item as usize];
        let positive = tape.constant_vector(&set.positive);
        let negatives =
            set.negatives.iter().map(|v| tape.constant_vector(v)).collect();
        item_signal_nodes.push(SignalSetNodes { anchor, positive, negatives });
    }
    for plan_set in &plan.legacy_items {
        let anchor = fused_of_item[plan_set.item as usize];
        let pos_mask = tape.constant_vector(&plan_set.positive_mask);
        let positive = tape.mul(anchor, pos_mask)?;
        let mut negatives = Vec::with_capacity(plan_set.negative_items.len());
        for (neg_item, mask) in
            plan_set.negative_items.iter().zip(&plan_set.negative_masks)
        {
            let m = tape.constant_vector(mask);
            negatives.push(tape.mul(fused_of_item[*neg_item as usize], m)?);
        }
        item_signal_nodes.push(SignalSetNodes { anchor, positive, negatives });
    }
    let (item_loss, mean_alpha) = if item_signal_nodes.is_empty() {
        (None, 1.0)
    } else if cfg.no_adaptive {
        (
            Some(base_contrastive(&mut tape, &item_signal_nodes, cfg.temperature)?),
            1.0,
        )
    } else {
        let (node, weights) = adaptive_contrastive(
            &mut tape,
            &item_signal_nodes,
            &bound.wnet_item,
            cfg.temperature,
            SignalLevel::Item,
        )?;
        let mean = weights.iter().sum::<f64>() / weights.len() as f64;
        (Some(node), mean)
    };

    // Session-level contrastive loss.
    let mut sess_signal_nodes: Vec<SignalSetNodes> = Vec::new();
    if !cfg.legacy_aug {
        // Encode every planned positive once; shared-mode negatives reuse
        // these nodes (true in-batch negatives).
        let mut positive_nodes: Vec<Option<NodeId>> = vec![None; plan.batch.len()];
        for set in plan.sess_sets.iter().flatten() {
            let item_nodes: Vec<NodeId> =
                set.positive_items.iter().map(|v| tape.constant_vector(v)).collect();
            let masks = dropout.masks(item_nodes.len());
            positive_nodes[set.session_index] =
                Some(encode_session(&mut tape, &ctx, &item_nodes, masks.as_deref())?);
        }
        for set in plan.sess_sets.iter().flatten() {
            let i = set.session_index;
            let positive = positive_nodes[i].expect("positive encoded above");
            let negatives: Vec<NodeId> = match &set.negatives {
                SessionNegatives::Shared => positive_nodes
                    .iter()
                    .enumerate()
                    .filter(|(j, p)| *j != i && p.is_some())
                    .map(|(_, p)| p.unwrap())
                    .collect(),
                SessionNegatives::Reaugmented(pairs) => {
                    let mut out = Vec::with_capacity(pairs.len());
                    for (_, items) in pairs {
                        let nodes: Vec<NodeId> =
                            items.iter().map(|v| tape.constant_vector(v)).collect();
                        let masks = dropout.masks(nodes.len());
                        out.push(encode_session(&mut tape, &ctx, &nodes, masks.as_deref())?);
                    }
                    out
                }
            };
            if negatives.is_empty() {
                continue;
            }
            sess_signal_nodes.push(SignalSetNodes {
                anchor: session_nodes[i],
                positive,
                negatives,
            });
        }
    } else {
        let mut positive_nodes: Vec<Option<NodeId>> = vec![None; plan.batch.len()];
        for (i, aug) in plan.legacy_sessions.iter().enumerate() {
            if let Some(slots) = aug {
                positive_nodes[i] = Some(encode_slots(&mut tape, &mut dropout, slots)?);
            }
        }
        for (i, pos) in positive_nodes.iter().enumerate() {
            let Some(positive) = *pos else { continue };
            let negatives: Vec<NodeId> = positive_nodes
                .iter()
                .enumerate()
                .filter(|(j, p)| *j != i && p.is_some())
                .map(|(_, p)| p.unwrap())
                .collect();
            if negatives.is_empty() {
                continue;
            }
            sess_signal_nodes.push(SignalSetNodes {
                anchor: session_nodes[i],
                positive,
                negatives,
            });
        }
    }
    let (sess_loss, mean_beta) = if sess_signal_nodes.is_empty() {
        (None, 1.0)
    } else if cfg.no_adaptive {
        (
            Some(base_contrastive(&mut tape, &sess_signal_nodes, cfg.temperature)?),
            1.0,
        )
    } else {
        let (node, weights) = adaptive_contrastive(
            &mut tape,
            &sess_signal_nodes,
            &bound.wnet_sess,
            cfg.temperature,
            SignalLevel::Session,
        )?;
        let mean = weights.iter().sum::<f64>() / weights.len() as f64;
        (Some(node), mean)
    };

    let con = total_contrastive(&mut tape, item_loss, sess_loss)?;
    let total = joint_loss(&mut tape, rec, con, cfg.lambda)?;

    let breakdown = LossBreakdown {
        rec: tape.value(rec)[0],
        item_con: item_loss.map_or(0.0, |n| tape.value(n)[0]),
        sess_con: sess_loss.map_or(0.0, |n| tape.value(n)[0]),
        total: tape.value(total)[0],
        mean_alpha,
        mean_beta,
    };
    Ok(StepGraph { tape, bound, total, breakdown })
}

/// Convenience used by tests and the gradient-integrity suite: total
/// joint loss as a pure scalar function of the parameter tensors.
pub fn step_loss_value(
    state: &ModelState,
    catalog: &Catalog,
    fspace: &FeatureSpace,
    cfg: &TrainConfig,
    plan: &StepPlan,
) -> Result<f64> {
    Ok(build_step(state, catalog, fspace, cfg, plan)?.breakdown.total)
}
