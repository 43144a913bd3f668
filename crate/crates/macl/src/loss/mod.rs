//! Objectives: next-item recommendation loss, the base contrastive loss,
//! its adaptively reweighted form, the combined objective, and the
//! ID-sequence augmentations used by the legacy-augmentation ablation.
//!
//! A contrastive signal set contributes the ratio
//! `exp(cos(anchor, positive)/tau) / sum_k exp(cos(anchor, neg_k)/tau)`;
//! the loss is minus the (optionally weighted) sum of ratios. Similarities
//! pass through `exp(./tau)` before the ratio so the denominator stays
//! positive for any geometry; tau defaults to 1.

use crate::autodiff::{NodeId, Tape};
use crate::data::PADDING_SLOT;
use crate::error::{Error, Result};
use crate::model::BoundWeightNet;
use rand::Rng;

/// Probability clamp for the cross-entropy logs.
pub const PROB_CLAMP: f64 = 1e-12;

/// Which cross-entropy form the recommendation loss uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CeMode {
    /// The full form: `-log y_t - sum_{i != t} log(1 - y_i)`.
    Full,
    /// Plain negative log likelihood of the target.
    Standard,
}

impl std::str::FromStr for CeMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(CeMode::Full),
            "standard" => Ok(CeMode::Standard),
            other => Err(Error::Config(format!("unknown ce_mode {other:?}"))),
        }
    }
}

/// Interaction probabilities over all items: softmax of the inner products
/// between every fused item embedding (rows of `fused_table`, one per
/// non-padding item) and the session embedding.
pub fn rec_probabilities(tape: &mut Tape, fused_table: NodeId, session: NodeId) -> Result<NodeId> {
    let logits = tape.matmul(fused_table, session)?;
    tape.softmax_rows(logits)
}

/// Cross-entropy of the probability vector against a one-hot target.
/// `target_row` indexes the probability vector (item slot minus one).
pub fn rec_loss(tape: &mut Tape, probs: NodeId, target_row: usize, mode: CeMode) -> Result<NodeId> {
    let n = tape.shape(probs).numel();
    if target_row >= n {
        return Err(Error::Contract(format!(
            "target row {target_row} out of range for {n} items (padding is not a legal target)"
        )));
    }
    let clamped = tape.clamp(probs, PROB_CLAMP, 1.0 - PROB_CLAMP);
    let mut onehot = vec![0.0; n];
    onehot[target_row] = 1.0;
    let p = tape.constant_vector(&onehot);
    let log_y = tape.ln(clamped)?;
    let hit = tape.mul(p, log_y)?;
    let hit_term = tape.sum_all(hit);
    match mode {
        CeMode::Standard => Ok(tape.neg(hit_term)),
        CeMode::Full => {
            let ones = tape.constant_vector(&vec![1.0; n]);
            let inv = tape.sub(ones, clamped)?;
            let log_inv = tape.ln(inv)?;
            let q: Vec<f64> = onehot.iter().map(|v| 1.0 - v).collect();
            let qn = tape.constant_vector(&q);
            let miss = tape.mul(qn, log_inv)?;
            let miss_term = tape.sum_all(miss);
            let total = tape.add(hit_term, miss_term)?;
            Ok(tape.neg(total))
        }
    }
}

/// A contrastive signal set already wired into the graph.
#[derive(Debug, Clone)]
pub struct SignalSetNodes {
    pub anchor: NodeId,
    pub positive: NodeId,
    pub negatives: Vec<NodeId>,
}

/// `exp(cos(anchor, positive)/tau) / sum_k exp(cos(anchor, neg_k)/tau)`.
fn signal_ratio(tape: &mut Tape, set: &SignalSetNodes, tau: f64) -> Result<NodeId> {
    if set.negatives.is_empty() {
        return Err(Error::Contract("signal set without negatives".into()));
    }
    let sim_pos = tape.cosine_similarity(set.anchor, set.positive)?;
    let scaled_pos = tape.scale(sim_pos, 1.0 / tau);
    let numer = tape.exp(scaled_pos);
    let mut terms = Vec::with_capacity(set.negatives.len());
    for &neg in &set.negatives {
        let sim = tape.cosine_similarity(set.anchor, neg)?;
        let scaled = tape.scale(sim, 1.0 / tau);
        terms.push(tape.exp(scaled));
    }
    let denom = tape.add_n(&terms)?;
    tape.div(numer, denom)
}

/// Non-adaptive contrastive loss: minus the sum of signal ratios.
pub fn base_contrastive(tape: &mut Tape, sets: &[SignalSetNodes], tau: f64) -> Result<NodeId> {
    if sets.is_empty() {
        return Err(Error::Contract("no signal sets".into()));
    }
    let ratios: Vec<NodeId> =
        sets.iter().map(|s| signal_ratio(tape, s, tau)).collect::<Result<_>>()?;
    let cat = tape.concat(&ratios)?;
    let total = tape.sum_all(cat);
    Ok(tape.neg(total))
}

/// Normalize raw utility scores into per-set weights: softmax over the
/// batch times the batch size, so the weights are positive and average
/// exactly one.
pub fn batch_weights(tape: &mut Tape, raw_scores: &[NodeId]) -> Result<NodeId> {
    let cat = tape.concat(raw_scores)?;
    let soft = tape.softmax_rows(cat)?;
    Ok(tape.scale(soft, raw_scores.len() as f64))
}

fn weight_net_score(
    tape: &mut Tape,
    net: &BoundWeightNet,
    set: &SignalSetNodes,
) -> Result<NodeId> {
    // The scorer reads the embeddings but does not steer them: its input
    // is a detached snapshot, so signal sets cannot warp themselves into
    // looking more up-weightable. Only the net's own parameters train
    // through this path.
    let anchor_v = tape.value(set.anchor).to_vec();
    let anchor = tape.constant_vector(&anchor_v);
    let positive_v = tape.value(set.positive).to_vec();
    let positive = tape.constant_vector(&positive_v);
    let negatives: Vec<NodeId> = set
        .negatives
        .iter()
        .map(|&n| {
            let v = tape.value(n).to_vec();
            tape.constant_vector(&v)
        })
        .collect();
    let mean_neg = tape.mean_of(&negatives)?;
    let cat = tape.concat(&[anchor, positive, mean_neg])?;
    let a1 = tape.matmul(net.w1, cat)?;
    let z1 = tape.add(a1, net.b1)?;
    let h1 = tape.tanh(z1);
    let a2 = tape.matmul(net.w2, h1)?;
    let z2 = tape.add(a2, net.b2)?;
    let h2 = tape.tanh(z2);
    let a3 = tape.matmul(net.w3, h2)?;
    tape.add(a3, net.b3)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SignalLevel {
    Item,
    Session,
}

/// Adaptive contrastive loss: each signal set is scored by the weight
/// net on `[anchor; positive; mean-of-negatives]`, scores are normalized
/// into batch weights, and the loss is minus the weighted sum of ratios.
/// Returns the loss node and the weights for logging.
pub fn adaptive_contrastive(
    tape: &mut Tape,
    sets: &[SignalSetNodes],
    net: &BoundWeightNet,
    tau: f64,
    level: SignalLevel,
) -> Result<(NodeId, Vec<f64>)> {
    if sets.is_empty() {
        return Err(Error::Contract("no signal sets".into()));
    }
    if level == SignalLevel::Session && sets.len() < 2 {
        return Err(Error::Contract(
            "session-level weighting over a single set is uninformative".into(),
        ));
    }
    let scores: Vec<NodeId> =
        sets.iter().map(|s| weight_net_score(tape, net, s)).collect::<Result<_>>()?;
    let weights = batch_weights(tape, &scores)?;
    let ratios: Vec<NodeId> =
        sets.iter().map(|s| signal_ratio(tape, s, tau)).collect::<Result<_>>()?;
    let ratio_vec = tape.concat(&ratios)?;
    let weighted = tape.mul(weights, ratio_vec)?;
    let total = tape.sum_all(weighted);
    let loss = tape.neg(total);
    let w = tape.value(weights).to_vec();
    Ok((loss, w))
}

/// Sum of the item- and session-level contrastive losses; a disabled
/// level contributes an exact zero.
pub fn total_contrastive(
    tape: &mut Tape,
    item: Option<NodeId>,
    sess: Option<NodeId>,
) -> Result<NodeId> {
    match (item, sess) {
        (Some(a), Some(b)) => tape.add(a, b),
        (Some(a), None) => Ok(a),
        (None, Some(b)) => Ok(b),
        (None, None) => Ok(tape.constant_scalar(0.0)),
    }
}

/// Joint objective: recommendation loss plus `lambda` times the
/// contrastive loss.
pub fn joint_loss(tape: &mut Tape, rec: NodeId, con: NodeId, lambda: f64) -> Result<NodeId> {
    if lambda < 0.0 {
        return Err(Error::Config(format!("lambda must be non-negative, got {lambda}")));
    }
    let scaled = tape.scale(con, lambda);
    tape.add(rec, scaled)
}

/// Per-step loss readout for logging and invariants.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossBreakdown {
    pub rec: f64,
    pub item_con: f64,
    pub sess_con: f64,
    pub total: f64,
    pub mean_alpha: f64,
    pub mean_beta: f64,
}

/// ID-sequence augmentation for the legacy ablation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LegacyOp {
    Crop,
    Mask,
    Reorder,
}

impl LegacyOp {
    pub const ALL: [LegacyOp; 3] = [LegacyOp::Crop, LegacyOp::Mask, LegacyOp::Reorder];
}

pub const LEGACY_CROP_KEEP: f64 = 0.7;
pub const LEGACY_MASK_RATIO: f64 = 0.3;
pub const LEGACY_REORDER_RATIO: f64 = 0.3;

/// Augment an ID sequence: crop keeps a random contiguous window, mask
/// replaces positions with the padding slot, reorder shuffles a random
/// contiguous segment.
pub fn legacy_augment(
    sequence: &[u32],
    op: LegacyOp,
    rng: &mut impl Rng,
) -> Result<Vec<u32>> {
    legacy_augment_with(sequence, op, LEGACY_CROP_KEEP, LEGACY_MASK_RATIO, LEGACY_REORDER_RATIO, rng)
}

pub fn legacy_augment_with(
    sequence: &[u32],
    op: LegacyOp,
    crop_keep: f64,
    mask_ratio: f64,
    reorder_ratio: f64,
    rng: &mut impl Rng,
) -> Result<Vec<u32>> {
    let len = sequence.len();
    if len < 2 {
        return Err(Error::DegenerateInput(format!(
            "legacy augmentation needs a sequence of length >= 2, got {len}"
        )));
    }
    match op {
        LegacyOp::Crop => {
            let window = ((crop_keep * len as f64).round() as usize).clamp(1, len);
            let start = rng.random_range(0..=len - window);
            Ok(sequence[start..start + window].to_vec())
        }
        LegacyOp::Mask => {
            let k = ((mask_ratio * len as f64).round() as usize).min(len);
            let mut out = sequence.to_vec();
            for i in rand::seq::index::sample(rng, len, k).into_iter() {
                out[i] = PADDING_SLOT;
            }
            Ok(out)
        }
        LegacyOp::Reorder => {
            let seg = ((reorder_ratio * len as f64).round() as usize).min(len);
            let mut out = sequence.to_vec();
            if seg >= 2 {
                let start = rng.random_range(0..=len - seg);
                use rand::seq::SliceRandom;
                out[start..start + seg].shuffle(rng);
            }
            Ok(out)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::{Shape, Tape};
    use crate::model::{ModelDims, ModelState, BoundModel};
    use crate::rng::stream_rng;

    #[test]
    fn identical_item_embeddings_give_a_uniform_distribution() {
        let mut tape = Tape::new();
        let table = tape
            .constant(Shape::Matrix(4, 2), vec![0.3, -0.1].repeat(4))
            .unwrap();
        let s = tape.constant_vector(&[1.0, 2.0]);
        let y = rec_probabilities(&mut tape, table, s).unwrap();
        for &v in tape.value(y) {
            assert!((v - 0.25).abs() < 1e-12);
        }
    }

    #[test]
    fn closed_form_softmax_probabilities() {
        // logits [0, ln2, ln4] -> [1/7, 2/7, 4/7]
        let mut tape = Tape::new();
        let table = tape
            .constant(
                Shape::Matrix(3, 1),
                vec![0.0, 2.0f64.ln(), 4.0f64.ln()],
            )
            .unwrap();
        let s = tape.constant_vector(&[1.0]);
        let y = rec_probabilities(&mut tape, table, s).unwrap();
        let v = tape.value(y);
        assert!((v[0] - 1.0 / 7.0).abs() < 1e-12);
        assert!((v[1] - 2.0 / 7.0).abs() < 1e-12);
        assert!((v[2] - 4.0 / 7.0).abs() < 1e-12);
    }

    #[test]
    fn rescaling_the_session_embedding_preserves_the_ranking() {
        let mut rng = stream_rng(3, "rescale", &[]);
        let mut tape = Tape::new();
        let values: Vec<f64> = (0..12).map(|_| rng.random_range(-1.0..1.0)).collect();
        let table = tape.constant(Shape::Matrix(4, 3), values).unwrap();
        let sv: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
        let s1 = tape.constant_vector(&sv);
        let s2 = tape.constant_vector(&sv.iter().map(|v| v * 7.5).collect::<Vec<_>>());
        let y1 = rec_probabilities(&mut tape, table, s1).unwrap();
        let y2 = rec_probabilities(&mut tape, table, s2).unwrap();
        let rank = |v: &[f64]| {
            let mut idx: Vec<usize> = (0..v.len()).collect();
            idx.sort_by(|&a, &b| v[b].partial_cmp(&v[a]).unwrap().then(a.cmp(&b)));
            idx
        };
        assert_ne!(tape.value(y1), tape.value(y2));
        assert_eq!(rank(tape.value(y1)), rank(tape.value(y2)));
    }

    #[test]
    fn rec_loss_closed_forms() {
        // n=2, y=[0.5,0.5], target 0: full form 2 ln 2, standard ln 2.
        let mut tape = Tape::new();
        let y = tape.constant_vector(&[0.5, 0.5]);
        let full = rec_loss(&mut tape, y, 0, CeMode::Full).unwrap();
        assert!((tape.value(full)[0] - 2.0 * 2.0f64.ln()).abs() < 1e-12);
        let std = rec_loss(&mut tape, y, 0, CeMode::Standard).unwrap();
        assert!((tape.value(std)[0] - 2.0f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn perfect_prediction_drives_the_loss_to_zero() {
        let mut tape = Tape::new();
        let y = tape.constant_vector(&[1.0 - 1e-9, 0.5e-9, 0.5e-9]);
        let loss = rec_loss(&mut tape, y, 0, CeMode::Full).unwrap();
        assert!(tape.value(loss)[0] < 1e-8, "{}", tape.value(loss)[0]);
    }

    #[test]
    fn rec_loss_rejects_out_of_range_targets() {
        let mut tape = Tape::new();
        let y = tape.constant_vector(&[0.5, 0.5]);
        assert!(rec_loss(&mut tape, y, 2, CeMode::Full).is_err());
    }

    fn set_of(
        tape: &mut Tape,
        anchor: &[f64],
        positive: &[f64],
        negatives: &[&[f64]],
    ) -> SignalSetNodes {
        SignalSetNodes {
            anchor: tape.constant_vector(anchor),
            positive: tape.constant_vector(positive),
            negatives: negatives.iter().map(|n| tape.constant_vector(n)).collect(),
        }
    }

    #[test]
    fn base_contrastive_closed_form() {
        // positive == anchor (cos 1), one orthogonal negative (cos 0),
        // tau = 1: ratio e/1, loss -e.
        let mut tape = Tape::new();
        let set = set_of(&mut tape, &[2.0, 0.0], &[2.0, 0.0], &[&[0.0, 3.0]]);
        let loss = base_contrastive(&mut tape, &[set], 1.0).unwrap();
        assert!((tape.value(loss)[0] + std::f64::consts::E).abs() < 1e-12);
    }

    #[test]
    fn identical_positive_and_negatives_give_ratio_one_over_m() {
        let v = [0.4, -0.7, 0.1];
        for m in [1usize, 4, 9] {
            let mut tape = Tape::new();
            let negs: Vec<&[f64]> = (0..m).map(|_| &v[..]).collect();
            let set = set_of(&mut tape, &[1.0, 1.0, 1.0], &v, &negs);
            let loss = base_contrastive(&mut tape, &[set], 1.0).unwrap();
            assert!(
                (tape.value(loss)[0] + 1.0 / m as f64).abs() < 1e-12,
                "m={m}: {}",
                tape.value(loss)[0]
            );
        }
    }

    #[test]
    fn loss_decreaseses_as_the_positive_aligns() {
        let negs: [&[f64]; 2] = [&[0.0, 1.0], &[-1.0, 0.5]];
        let eval = |pos: &[f64]| {
            let mut tape = Tape::new();
            let set = set_of(&mut tape, &[1.0, 0.0], pos, &negs);
            let loss = base_contrastive(&mut tape, &[set], 1.0).unwrap();
            tape.value(loss)[0]
        };
        let aligned = eval(&[1.0, 0.1]);
        let oblique = eval(&[0.5, 0.8]);
        let opposed = eval(&[-1.0, 0.2]);
        assert!(aligned < oblique && oblique < opposed);
    }

    #[test]
    fn zero_norm_embeddings_are_rejected() {
        let mut tape = Tape::new();
        let set = set_of(&mut tape, &[1.0, 0.0], &[0.0, 0.0], &[&[0.0, 1.0]]);
        assert!(base_contrastive(&mut tape, &[set], 1.0).is_err());
    }

    #[test]
    fn batch_weights_normalize_to_the_batch_size() {
        // Raw (1, 0, 0): 3 * softmax = 3*(e, 1, 1)/(e + 2).
        let mut tape = Tape::new();
        let raw: Vec<NodeId> =
            [1.0, 0.0, 0.0].iter().map(|&v| tape.constant_scalar(v)).collect();
        let w = batch_weights(&mut tape, &raw).unwrap();
        let v = tape.value(w);
        let e = std::f64::consts::E;
        let expect = [3.0 * e / (e + 2.0), 3.0 / (e + 2.0), 3.0 / (e + 2.0)];
        for (a, b) in v.iter().zip(&expect) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
        let sum: f64 = v.iter().sum();
        assert!((sum - 3.0).abs() < 1e-9);

        // Equal raw scores normalize to exactly one each.
        let mut tape = Tape::new();
        let raw: Vec<NodeId> =
            [0.37, 0.37].iter().map(|&v| tape.constant_scalar(v)).collect();
        let w = batch_weights(&mut tape, &raw).unwrap();
        assert_eq!(tape.value(w), &[1.0, 1.0]);
    }

    fn random_sets(tape: &mut Tape, count: usize, d: usize, seed: u64) -> Vec<SignalSetNodes> {
        let mut rng = stream_rng(seed, "loss-sets", &[]);
        (0..count)
            .map(|_| {
                let vec = |rng: &mut rand_chacha::ChaCha8Rng| -> Vec<f64> {
                    (0..d).map(|_| rng.random_range(-1.0..1.0) + 0.01).collect()
                };
                let anchor = vec(&mut rng);
                let positive = vec(&mut rng);
                let negatives: Vec<Vec<f64>> = (0..4).map(|_| vec(&mut rng)).collect();
                SignalSetNodes {
                    anchor: tape.constant_vector(&anchor),
                    positive: tape.constant_vector(&positive),
                    negatives: negatives.iter().map(|n| tape.constant_vector(n)).collect(),
                }
            })
            .collect()
    }

    #[test]
    fn frozen_weight_net_reduces_adaptive_to_base() {
        let dims = ModelDims { n_items: 3, d: 6, n_heads: 2, n_blocks: 1, d_ff: 12, max_len: 4 };
        let mut state = ModelState::init(dims, 5).unwrap();
        state.wnet_item.freeze_constant(0.42);
        for trial in 0..100u64 {
            let mut tape = Tape::new();
            let bound = BoundModel::bind(&mut tape, &state);
            let sets = random_sets(&mut tape, 8, 6, trial);
            let (adaptive, weights) = adaptive_contrastive(
                &mut tape,
                &sets,
                &bound.wnet_item,
                1.0,
                SignalLevel::Item,
            )
            .unwrap();
            let base = base_contrastive(&mut tape, &sets, 1.0).unwrap();
            let diff = (tape.value(adaptive)[0] - tape.value(base)[0]).abs();
            assert!(diff < 1e-12, "trial {trial}: diff {diff}");
            assert!(weights.iter().all(|&w| (w - 1.0).abs() < 1e-12));
        }
    }

    #[test]
    fn adaptive_weights_sum_to_batch_size_and_stay_positive() {
        let dims = ModelDims { n_items: 3, d: 6, n_heads: 2, n_blocks: 1, d_ff: 12, max_len: 4 };
        let state = ModelState::init(dims, 11).unwrap();
        let mut tape = Tape::new();
        let bound = BoundModel::bind(&mut tape, &state);
        let sets = random_sets(&mut tape, 10, 6, 3);
        let (_, weights) =
            adaptive_contrastive(&mut tape, &sets, &bound.wnet_item, 1.0, SignalLevel::Item)
                .unwrap();
        let sum: f64 = weights.iter().sum();
        assert!((sum - 10.0).abs() < 1e-9);
        assert!(weights.iter().all(|&w| w > 0.0));
    }

    #[test]
    fn single_session_set_is_a_contract_error() {
        let dims = ModelDims { n_items: 3, d: 6, n_heads: 2, n_blocks: 1, d_ff: 12, max_len: 4 };
        let state = ModelState::init(dims, 11).unwrap();
        let mut tape = Tape::new();
        let bound = BoundModel::bind(&mut tape, &state);
        let sets = random_sets(&mut tape, 1, 6, 3);
        assert!(adaptive_contrastive(
            &mut tape,
            &sets,
            &bound.wnet_sess,
            1.0,
            SignalLevel::Session
        )
        .is_err());
        // Item level accepts a single set.
        assert!(adaptive_contrastive(
            &mut tape,
            &sets,
            &bound.wnet_item,
            1.0,
            SignalLevel::Item
        )
        .is_ok());
    }

    #[test]
    fn total_and_joint_compose() {
        let mut tape = Tape::new();
        let item = tape.constant_scalar(-2.0);
        let sess = tape.constant_scalar(-1.0);
        let both = total_contrastive(&mut tape, Some(item), Some(sess)).unwrap();
        assert_eq!(tape.value(both)[0], -3.0);
        let only_sess = total_contrastive(&mut tape, None, Some(sess)).unwrap();
        assert_eq!(tape.value(only_sess)[0], -1.0);
        let neither = total_contrastive(&mut tape, None, None).unwrap();
        assert_eq!(tape.value(neither)[0], 0.0);

        let rec = tape.constant_scalar(1.0);
        let con = tape.constant_scalar(2.0);
        let j = joint_loss(&mut tape, rec, con, 0.5).unwrap();
        assert_eq!(tape.value(j)[0], 2.0);
        let j0 = joint_loss(&mut tape, rec, con, 0.0).unwrap();
        assert_eq!(tape.value(j0)[0], 1.0);
        assert!(joint_loss(&mut tape, rec, con, -0.1).is_err());
    }

    #[test]
    fn legacy_crop_full_keep_is_identity() {
        let seq = vec![5, 6, 7, 8];
        let mut rng = stream_rng(1, "crop", &[]);
        let out =
            legacy_augment_with(&seq, LegacyOp::Crop, 1.0, 0.3, 0.3, &mut rng).unwrap();
        assert_eq!(out, seq);
    }

    #[test]
    fn legacy_mask_hits_the_exact_count() {
        let seq: Vec<u32> = (1..=10).collect();
        let mut rng = stream_rng(2, "mask", &[]);
        let out = legacy_augment(&seq, LegacyOp::Mask, &mut rng).unwrap();
        let masked = out.iter().filter(|&&s| s == PADDING_SLOT).count();
        assert_eq!(masked, 3);
        assert_eq!(out.len(), 10);
    }

    #[test]
    fn legacy_reorder_preserves_the_multiset() {
        let seq: Vec<u32> = (1..=12).collect();
        let mut rng = stream_rng(3, "reorder", &[]);
        let out = legacy_augment(&seq, LegacyOp::Reorder, &mut rng).unwrap();
        let mut a = seq.clone();
        let mut b = out.clone();
        a.sort();
        b.sort();
        assert_eq!(a, b);
    }

    #[test]
    fn legacy_rejects_length_one() {
        let mut rng = stream_rng(4, "short", &[]);
        assert!(legacy_augment(&[3], LegacyOp::Crop, &mut rng).is_err());
    }
}
