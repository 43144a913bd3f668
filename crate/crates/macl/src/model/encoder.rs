//! Self-attention session encoder: learned positions, causal multi-head
//! attention, position-wise feed-forward, residuals with post-norm.
//! The session embedding is the hidden state at the last true position.
//!
//! Padding never enters the encoder: callers pass only the true prefix
//! embeddings, so padded slots cannot influence the result.

use super::params::BoundBlock;
use crate::autodiff::{NodeId, Tape};
use crate::error::{Error, Result};

pub const LAYER_NORM_EPS: f64 = 1e-8;

/// Bound encoder weights plus the head layout.
pub struct EncoderContext<'a> {
    pub blocks: &'a [BoundBlock],
    pub positions: NodeId,
    pub n_heads: usize,
    pub max_len: usize,
}

/// Per-block dropout masks (already scaled by 1/(1-rate)); empty when
/// dropout is disabled.
#[derive(Debug, Clone, Default)]
pub struct BlockDropout {
    /// Mask over the attention output, length L*d.
    pub attn: Vec<f64>,
    /// Mask over the feed-forward hidden, length L*d_ff.
    pub ff: Vec<f64>,
}

fn layer_norm(
    tape: &mut Tape,
    x: NodeId,
    gain: NodeId,
    bias: NodeId,
) -> Result<NodeId> {
    let normed = tape.normalize_rows(x, LAYER_NORM_EPS)?;
    let scaled = tape.mul_row_broadcast(normed, gain)?;
    tape.add_row_broadcast(scaled, bias)
}

/// Encode one session prefix; returns the full hidden matrix `[L x d]`.
pub fn encode_session_full(
    tape: &mut Tape,
    ctx: &EncoderContext,
    item_embs: &[NodeId],
    dropout: Option<&[BlockDropout]>,
) -> Result<NodeId> {
    let len = item_embs.len();
    if len == 0 {
        return Err(Error::Contract("cannot encode an empty prefix".into()));
    }
    if len > ctx.max_len {
        return Err(Error::Contract(format!(
            "prefix length {len} exceeds max_len {}; truncation is ingestion's job",
            ctx.max_len
        )));
    }
    let d = tape.shape(item_embs[0]).numel();
    if d % ctx.n_heads != 0 {
        return Err(Error::Config(format!(
            "head count {} must divide d {d}",
            ctx.n_heads
        )));
    }
    let head_dim = d / ctx.n_heads;
    let inv_sqrt = 1.0 / (head_dim as f64).sqrt();

    let stacked = tape.stack_rows(item_embs)?;
    let pos_idx: Vec<usize> = (0..len).collect();
    let pos = tape.gather_rows(ctx.positions, &pos_idx)?;
    let mut hidden = tape.add(stacked, pos)?;

    // Causal mask: position i attends to positions <= i.
    let mut allowed = vec![false; len * len];
    for i in 0..len {
        for j in 0..=i {
            allowed[i * len + j] = true;
        }
    }

    for (bi, block) in ctx.blocks.iter().enumerate() {
        let q = tape.matmul(hidden, block.wq)?;
        let k = tape.matmul(hidden, block.wk)?;
        let v = tape.matmul(hidden, block.wv)?;
        let mut head_outputs = Vec::with_capacity(ctx.n_heads);
        for h in 0..ctx.n_heads {
            let off = h * head_dim;
            let qh = tape.slice_cols(q, off, head_dim)?;
            let kh = tape.slice_cols(k, off, head_dim)?;
            let vh = tape.slice_cols(v, off, head_dim)?;
            let kt = tape.transpose(kh)?;
            let scores_raw = tape.matmul(qh, kt)?;
            let scores = tape.scale(scores_raw, inv_sqrt);
            let attn = tape.masked_softmax_rows(scores, &allowed)?;
            head_outputs.push(tape.matmul(attn, vh)?);
        }
        let ctx_heads = if head_outputs.len() == 1 {
            head_outputs[0]
        } else {
            tape.concat_cols(&head_outputs)?
        };
        let mut attn_out = tape.matmul(ctx_heads, block.wo)?;
        if let Some(masks) = dropout {
            let shape = tape.shape(attn_out);
            let mask = tape.constant(shape, masks[bi].attn.clone())?;
            attn_out = tape.mul(attn_out, mask)?;
        }
        let res1 = tape.add(hidden, attn_out)?;
        hidden = layer_norm(tape, res1, block.ln1_gain, block.ln1_bias)?;

        let ff_pre = tape.matmul(hidden, block.ff1)?;
        let ff_b = tape.add_row_broadcast(ff_pre, block.ffb1)?;
        let mut ff_act = tape.relu(ff_b);
        if let Some(masks) = dropout {
            let shape = tape.shape(ff_act);
            let mask = tape.constant(shape, masks[bi].ff.clone())?;
            ff_act = tape.mul(ff_act, mask)?;
        }
        let ff_out_raw = tape.matmul(ff_act, block.ff2)?;
        let ff_out = tape.add_row_broadcast(ff_out_raw, block.ffb2)?;
        let res2 = tape.add(hidden, ff_out)?;
        hidden = layer_norm(tape, res2, block.ln2_gain, block.ln2_bias)?;
    }
    Ok(hidden)
}

/// Encode one session prefix to its embedding: the hidden state at the
/// last true position.
pub fn encode_session(
    tape: &mut Tape,
    ctx: &EncoderContext,
    item_embs: &[NodeId],
    dropout: Option<&[BlockDropout]>,
) -> Result<NodeId> {
    let hidden = encode_session_full(tape, ctx, item_embs, dropout)?;
    tape.row(hidden, item_embs.len() - 1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::gradcheck::{central_difference_gradients, max_relative_error};
    use crate::autodiff::{Shape, Tensor};
    use crate::model::params::{BoundModel, ModelDims, ModelState};
    use crate::rng::stream_rng;
    use rand::Rng;

    fn dims(d: usize) -> ModelDims {
        ModelDims { n_items: 6, d, n_heads: 2, n_blocks: 1, d_ff: d * 4, max_len: 8 }
    }

    fn rand_vecs(n: usize, d: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = stream_rng(seed, "encoder-test", &[]);
        (0..n).map(|_| (0..d).map(|_| rng.random_range(-1.0..1.0)).collect()).collect()
    }

    fn encode_values(state: &ModelState, embs: &[Vec<f64>]) -> Vec<f64> {
        let mut tape = Tape::new();
        let bound = BoundModel::bind(&mut tape, state);
        let ctx = EncoderContext {
            blocks: &bound.blocks,
            positions: bound.positions,
            n_heads: state.dims.n_heads,
            max_len: state.dims.max_len,
        };
        let nodes: Vec<_> = embs.iter().map(|e| tape.constant_vector(e)).collect();
        let s = encode_session(&mut tape, &ctx, &nodes, None).unwrap();
        tape.value(s).to_vec()
    }

    #[test]
    fn single_item_session_encodes() {
        let state = ModelState::init(dims(8), 3).unwrap();
        let embs = rand_vecs(1, 8, 0);
        let s = encode_values(&state, &embs);
        assert_eq!(s.len(), 8);
        assert!(s.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn item_order_changes_the_session_embedding() {
        let state = ModelState::init(dims(8), 3).unwrap();
        let embs = rand_vecs(3, 8, 1);
        let reversed: Vec<Vec<f64>> = embs.iter().rev().cloned().collect();
        let a = encode_values(&state, &embs);
        let b = encode_values(&state, &reversed);
        let max_diff =
            a.iter().zip(&b).map(|(x, y)| (x - y).abs()).fold(0.0f64, f64::max);
        assert!(max_diff > 1e-6, "position table failed to break order invariance");
    }

    #[test]
    fn causality_later_items_cannot_affect_earlier_hiddens() {
        let state = ModelState::init(dims(8), 5).unwrap();
        let embs = rand_vecs(4, 8, 2);
        let full = |es: &[Vec<f64>]| -> Vec<f64> {
            let mut tape = Tape::new();
            let bound = BoundModel::bind(&mut tape, &state);
            let ctx = EncoderContext {
                blocks: &bound.blocks,
                positions: bound.positions,
                n_heads: 2,
                max_len: 8,
            };
            let nodes: Vec<_> = es.iter().map(|e| tape.constant_vector(e)).collect();
            let h = encode_session_full(&mut tape, &ctx, &nodes, None).unwrap();
            tape.value(h).to_vec()
        };
        let base = full(&embs);
        let mut bumped = embs.clone();
        for v in bumped[3].iter_mut() {
            *v += 0.37;
        }
        let changed = full(&bumped);
        // Rows 0..3 (positions before the change) are bitwise identical.
        assert_eq!(&base[..3 * 8], &changed[..3 * 8]);
        // The changed position itself moves.
        assert!(base[3 * 8..]
            .iter()
            .zip(&changed[3 * 8..])
            .any(|(a, b)| (a - b).abs() > 1e-9));
    }

    #[test]
    fn prefix_longer_than_max_len_is_a_contract_error() {
        let state = ModelState::init(dims(8), 3).unwrap();
        let embs = rand_vecs(9, 8, 3);
        let mut tape = Tape::new();
        let bound = BoundModel::bind(&mut tape, &state);
        let ctx = EncoderContext {
            blocks: &bound.blocks,
            positions: bound.positions,
            n_heads: 2,
            max_len: 8,
        };
        let nodes: Vec<_> = embs.iter().map(|e| tape.constant_vector(e)).collect();
        assert!(matches!(
            encode_session(&mut tape, &ctx, &nodes, None),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn causality_gradient_check_on_a_four_step_sequence() {
        // d(hidden at position i)/d(input at j) = 0 for j > i, checked by
        // finite differences on the earliest hidden row.
        let d = 6;
        let state = ModelState::init(
            ModelDims { n_items: 4, d, n_heads: 2, n_blocks: 1, d_ff: 4 * d, max_len: 8 },
            11,
        )
        .unwrap();
        let embs = rand_vecs(4, d, 4);
        let params: Vec<Tensor> = embs
            .iter()
            .map(|e| Tensor::from_vec(Shape::Vector(d), e.clone()).unwrap().trainable())
            .collect();
        let numeric = central_difference_gradients(
            |ps: &[Tensor]| {
                let mut tape = Tape::new();
                let bound = BoundModel::bind(&mut tape, &state);
                let ctx = EncoderContext {
                    blocks: &bound.blocks,
                    positions: bound.positions,
                    n_heads: 2,
                    max_len: 8,
                };
                let nodes: Vec<_> = ps.iter().map(|p| tape.leaf(p)).collect();
                let h = encode_session_full(&mut tape, &ctx, &nodes, None)?;
                let first_row = tape.row(h, 0)?;
                // A plain sum of squares of a layer-normed row is constant
                // (unit variance); weight the entries to get a real loss.
                let w = tape.constant_vector(
                    &(1..=d).map(|i| i as f64 * 0.3).collect::<Vec<_>>(),
                );
                let weighted = tape.mul(first_row, w)?;
                let cube = tape.mul(weighted, first_row)?;
                let loss = tape.sum_all(cube);
                Ok(tape.value(loss)[0])
            },
            &params,
            1e-5,
        )
        .unwrap();
        // Inputs at positions 1..3 have zero influence on hidden row 0.
        for later in &numeric[1..] {
            for &g in later {
                assert!(g.abs() < 1e-7, "causality leak: numeric gradient {g}");
            }
        }
        // Position 0 influences its own hidden state.
        assert!(numeric[0].iter().any(|&g| g.abs() > 1e-6));
    }

    #[test]
    fn encoder_gradients_match_finite_differences() {
        let d = 6;
        let state = ModelState::init(
            ModelDims { n_items: 4, d, n_heads: 2, n_blocks: 1, d_ff: 2 * d, max_len: 6 },
            13,
        )
        .unwrap();
        let embs = rand_vecs(3, d, 8);
        let build = |tape: &mut Tape, s: &ModelState| -> crate::error::Result<(BoundModel, crate::autodiff::NodeId)> {
            let bound = BoundModel::bind(tape, s);
            let ctx = EncoderContext {
                blocks: &bound.blocks,
                positions: bound.positions,
                n_heads: 2,
                max_len: 6,
            };
            let nodes: Vec<_> = embs.iter().map(|e| tape.constant_vector(e)).collect();
            let out = encode_session(tape, &ctx, &nodes, None)?;
            // Weighted cubic readout; a raw sum of squares of a layer-normed
            // row is constant and would make the check vacuous.
            let w = tape.constant_vector(&(1..=d).map(|i| i as f64 * 0.4 - 1.0).collect::<Vec<_>>());
            let weighted = tape.mul(out, w)?;
            let cube = tape.mul(weighted, out)?;
            let loss = tape.sum_all(cube);
            Ok((bound, loss))
        };
        let params: Vec<Tensor> =
            state.named_params().into_iter().map(|(_, t)| t.clone()).collect();
        let numeric = central_difference_gradients(
            |ps: &[Tensor]| {
                let s = state.with_param_values(ps)?;
                let mut tape = Tape::new();
                let (_, loss) = build(&mut tape, &s)?;
                Ok(tape.value(loss)[0])
            },
            &params,
            1e-5,
        )
        .unwrap();

        let mut tape = Tape::new();
        let (bound, loss) = build(&mut tape, &state).unwrap();
        tape.backward(loss).unwrap();

        let names: Vec<String> = state.named_params().into_iter().map(|(n, _)| n).collect();
        for ((id, num), name) in bound.flat_ids().iter().zip(&numeric).zip(&names) {
            let zero = vec![0.0; num.len()];
            let analytic = tape.grad(*id).unwrap_or(&zero);
            let err = max_relative_error(analytic, num, 1e-3);
            assert!(err < 1e-4, "{name}: gradient error {err}");
        }
    }

    #[test]
    fn dropout_masks_change_the_output_and_zero_rate_is_identity() {
        let d = 6;
        let state = ModelState::init(dims(d), 17).unwrap();
        let embs = rand_vecs(3, d, 9);
        let run = |masks: Option<Vec<BlockDropout>>| -> Vec<f64> {
            let mut tape = Tape::new();
            let bound = BoundModel::bind(&mut tape, &state);
            let ctx = EncoderContext {
                blocks: &bound.blocks,
                positions: bound.positions,
                n_heads: 2,
                max_len: 8,
            };
            let nodes: Vec<_> = embs.iter().map(|e| tape.constant_vector(e)).collect();
            let s = encode_session(&mut tape, &ctx, &nodes, masks.as_deref()).unwrap();
            tape.value(s).to_vec()
        };
        let plain = run(None);
        let all_ones = run(Some(vec![BlockDropout {
            attn: vec![1.0; 3 * d],
            ff: vec![1.0; 3 * 4 * d],
        }]));
        assert_eq!(plain, all_ones);
        let mut attn = vec![2.0; 3 * d];
        attn[0] = 0.0;
        let dropped = run(Some(vec![BlockDropout { attn, ff: vec![1.0; 3 * 4 * d] }]));
        assert_ne!(plain, dropped);
    }
}
