//! Inference and evaluation: top-k recommendation, Prec@k / MRR@k, and
//! stratified breakdowns by session length or target popularity.
//!
//! Scoring reuses the training-time graph builders (fusion, encoder) on a
//! gradient-free tape, so train and inference can never drift apart.
//! Evaluation shards sessions across worker threads (capped by
//! MACL_THREADS) and merges deterministically by shard order.

use crate::autodiff::{NodeId, Tape};
use crate::data::{
    slot_of, Catalog, ItemId, Session, Stratum, StratifyAxis,
};
use crate::embed::FeatureSpace;
use crate::error::{Error, Result};
use crate::loss::rec_probabilities;
use crate::model::{encode_session, fuse_item, BoundModel, EncoderContext, FusionInputs, ModelState};
use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

/// Precision and MRR at each requested k, over `count` sessions.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub k_list: Vec<usize>,
    pub precision: Vec<f64>,
    pub mrr: Vec<f64>,
    pub count: usize,
}

impl MetricsReport {
    pub fn precision_at(&self, k: usize) -> Option<f64> {
        self.k_list.iter().position(|&x| x == k).map(|i| self.precision[i])
    }

    pub fn mrr_at(&self, k: usize) -> Option<f64> {
        self.k_list.iter().position(|&x| x == k).map(|i| self.mrr[i])
    }
}

/// Worker-thread cap: MACL_THREADS when set, available cores otherwise.
pub fn worker_threads() -> usize {
    std::env::var("MACL_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&n| n >= 1)
        .unwrap_or_else(|| {
            std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
        })
}

/// Gradient-free forward pass: fused item table on a fresh tape.
fn build_inference_tables(
    tape: &mut Tape,
    state: &ModelState,
    catalog: &Catalog,
    fspace: &FeatureSpace,
) -> Result<(BoundModel, NodeId, NodeId)> {
    // Bind a non-trainable copy: leaves of a constant state.
    let mut frozen = state.clone();
    frozen.zero_grads();
    let bound = BoundModel::bind(tape, &frozen);
    let mut fused = Vec::with_capacity(catalog.len());
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
        fused.push(fuse_item(tape, &bound.fusion, FusionInputs { e_id, e_img, e_txt })?);
    }
    let fused_items = tape.stack_rows(&fused)?;
    let d = state.dims.d;
    let zero = tape.constant_vector(&vec![0.0; d]);
    let mut parts = vec![zero];
    parts.extend_from_slice(&fused);
    let fused_padded = tape.stack_rows(&parts)?;
    Ok((bound, fused_items, fused_padded))
}

/// Interaction probabilities for one prefix (dense-item order).
fn probabilities_for_prefix(
    tape: &mut Tape,
    bound: &BoundModel,
    state: &ModelState,
    fused_items: NodeId,
    fused_padded: NodeId,
    prefix_slots: &[u32],
) -> Result<Vec<f64>> {
    let ctx = EncoderContext {
        blocks: &bound.blocks,
        positions: bound.positions,
        n_heads: state.dims.n_heads,
        max_len: state.dims.max_len,
    };
    let keep = prefix_slots.len().min(state.dims.max_len);
    let recent = &prefix_slots[prefix_slots.len() - keep..];
    let rows: Vec<NodeId> =
        recent.iter().map(|&s| tape.row(fused_padded, s as usize)).collect::<Result<_>>()?;
    let s = encode_session(tape, &ctx, &rows, None)?;
    let probs = rec_probabilities(tape, fused_items, s)?;
    Ok(tape.value(probs).to_vec())
}

/// Rank of `target` (1-based) under descending probability with ties
/// broken by ascending item id.
fn rank_of(probs: &[f64], target: ItemId) -> usize {
    let pt = probs[target as usize];
    let mut rank = 1;
    for (i, &p) in probs.iter().enumerate() {
        if p > pt || (p == pt && (i as ItemId) < target) {
            rank += 1;
        }
    }
    rank
}

/// Top-k items by probability, ties broken by ascending dense item id.
/// Items already in the prefix stay eligible unless `exclude_seen`.
pub fn recommend(
    state: &ModelState,
    catalog: &Catalog,
    fspace: &FeatureSpace,
    prefix_items: &[ItemId],
    k: usize,
    exclude_seen: bool,
) -> Result<Vec<(ItemId, f64)>> {
    if prefix_items.is_empty() {
        return Err(Error::Contract("cannot recommend from an empty prefix".into()));
    }
    for &i in prefix_items {
        if catalog.get(i).is_none() {
            return Err(Error::Lookup(format!("prefix item {i} not in catalog")));
        }
    }
    let mut tape = Tape::new();
    let (bound, fused_items, fused_padded) =
        build_inference_tables(&mut tape, state, catalog, fspace)?;
    let slots: Vec<u32> = prefix_items.iter().map(|&i| slot_of(i)).collect();
    let probs = probabilities_for_prefix(
        &mut tape,
        &bound,
        state,
        fused_items,
        fused_padded,
        &slots,
    )?;
    let mut order: Vec<ItemId> = (0..catalog.len() as ItemId)
        .filter(|i| !exclude_seen || !prefix_items.contains(i))
        .collect();
    order.sort_by(|&a, &b| {
        probs[b as usize]
            .partial_cmp(&probs[a as usize])
            .expect("probabilities are finite")
            .then(a.cmp(&b))
    });
    order.truncate(k);
    Ok(order.into_iter().map(|i| (i, probs[i as usize])).collect())
}

/// Resolve a session into (prefix slots, target), last-item protocol.
fn eval_pair(session: &Session) -> (Vec<u32>, ItemId) {
    let (prefix, label) = session.split_label();
    (prefix.iter().map(|&i| slot_of(i)).collect(), label)
}

/// Ranks of every session's target, computed in shards.
fn target_ranks(
    state: &ModelState,
    catalog: &Catalog,
    fspace: &FeatureSpace,
    sessions: &[Session],
) -> Result<Vec<usize>> {
    let threads = worker_threads().min(sessions.len()).max(1);
    let chunk = sessions.len().div_ceil(threads);
    let shards: Vec<&[Session]> = sessions.chunks(chunk).collect();
    let results: Vec<Result<Vec<usize>>> = std::thread::scope(|scope| {
        let handles: Vec<_> = shards
            .iter()
            .map(|shard| {
                scope.spawn(move || -> Result<Vec<usize>> {
                    let mut tape = Tape::new();
                    let (bound, fused_items, fused_padded) =
                        build_inference_tables(&mut tape, state, catalog, fspace)?;
                    let mut ranks = Vec::with_capacity(shard.len());
                    for session in *shard {
                        let (slots, target) = eval_pair(session);
                        let probs = probabilities_for_prefix(
                            &mut tape,
                            &bound,
                            state,
                            fused_items,
                            fused_padded,
                            &slots,
                        )?;
                        ranks.push(rank_of(&probs, target));
                    }
                    Ok(ranks)
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("eval worker panicked")).collect()
    });
    let mut ranks = Vec::with_capacity(sessions.len());
    for r in results {
        ranks.extend(r?);
    }
    Ok(ranks)
}

fn report_from_ranks(ranks: &[usize], k_list: &[usize]) -> MetricsReport {
    let n = ranks.len() as f64;
    let mut precision = Vec::with_capacity(k_list.len());
    let mut mrr = Vec::with_capacity(k_list.len());
    for &k in k_list {
        let hits = ranks.iter().filter(|&&r| r <= k).count() as f64;
        let rr: f64 = ranks.iter().map(|&r| if r <= k { 1.0 / r as f64 } else { 0.0 }).sum();
        precision.push(hits / n);
        mrr.push(rr / n);
    }
    MetricsReport { k_list: k_list.to_vec(), precision, mrr, count: ranks.len() }
}

/// Prec@k and MRR@k over sessions under the last-item protocol.
pub fn evaluate(
    state: &ModelState,
    catalog: &Catalog,
    fspace: &FeatureSpace,
    sessions: &[Session],
    k_list: &[usize],
) -> Result<MetricsReport> {
    if sessions.is_empty() {
        return Err(Error::EmptyEvaluation);
    }
    let ranks = target_ranks(state, catalog, fspace, sessions)?;
    Ok(report_from_ranks(&ranks, k_list))
}

/// Per-stratum metrics plus group sizes. Empty strata report count 0 and
/// no metrics.
pub fn stratified_evaluate(
    state: &ModelState,
    catalog: &Catalog,
    fspace: &FeatureSpace,
    sessions: &[Session],
    axis: StratifyAxis,
    boundaries: &[u64],
    train_counts: &BTreeMap<ItemId, u64>,
    k_list: &[usize],
) -> Result<Vec<(Stratum<Session>, Option<MetricsReport>)>> {
    if sessions.is_empty() {
        return Err(Error::EmptyEvaluation);
    }
    let strata = match axis {
        StratifyAxis::SessionLength => {
            crate::data::stratify_sessions_by_length(sessions, boundaries)?
        }
        StratifyAxis::ItemPopularity => crate::data::stratify_sessions_by_target_popularity(
            sessions,
            train_counts,
            boundaries,
        )?,
    };
    let mut out = Vec::with_capacity(strata.len());
    for stratum in strata {
        let report = if stratum.members.is_empty() {
            None
        } else {
            Some(evaluate(state, catalog, fspace, &stratum.members, k_list)?)
        };
        out.push((stratum, report));
    }
    Ok(out)
}

/// Write `metrics.csv`: split, group, k, precision, mrr, count.
pub fn write_metrics_csv(
    path: &Path,
    rows: &[(String, String, MetricsReport)],
) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    writeln!(f, "split,group,k,precision,mrr,count")?;
    for (split, group, report) in rows {
        for (i, &k) in report.k_list.iter().enumerate() {
            writeln!(
                f,
                "{split},{group},{k},{:.6},{:.6},{}",
                report.precision[i], report.mrr[i], report.count
            )?;
        }
    }
    Ok(())
}
