//! Learnable parameters: ID table, fusion weights, encoder blocks, and
//! the two adaptive-weight MLPs, plus tape binding and gradient harvest.

use crate::autodiff::{NodeId, Shape, Tape, Tensor};
use crate::embed::init_id_table;
use crate::error::{Error, Result};
use crate::rng::stream_rng;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelDims {
    pub n_items: usize,
    pub d: usize,
    pub n_heads: usize,
    pub n_blocks: usize,
    pub d_ff: usize,
    pub max_len: usize,
}

impl ModelDims {
    pub fn validate(&self) -> Result<()> {
        if self.d == 0 || self.n_heads == 0 || self.n_blocks == 0 || self.max_len == 0 {
            return Err(Error::Config("model dimensions must be positive".into()));
        }
        if self.d % self.n_heads != 0 {
            return Err(Error::Config(format!(
                "head count {} must divide embedding size {}",
                self.n_heads, self.d
            )));
        }
        Ok(())
    }
}

fn xavier(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Tensor {
    let bound = (6.0 / (rows + cols) as f64).sqrt();
    let values: Vec<f64> = (0..rows * cols).map(|_| rng.random_range(-bound..bound)).collect();
    Tensor::from_vec(Shape::Matrix(rows, cols), values).unwrap().trainable()
}

fn zeros_vec(n: usize) -> Tensor {
    Tensor::zeros(Shape::Vector(n)).trainable()
}

fn ones_vec(n: usize) -> Tensor {
    Tensor::from_vec(Shape::Vector(n), vec![1.0; n]).unwrap().trainable()
}

/// Gated fusion weights: one d x 3d mixer and four d x d gate projections.
#[derive(Debug, Clone)]
pub struct FusionParams {
    pub w: Tensor,
    pub w1: Tensor,
    pub w2: Tensor,
    pub w3: Tensor,
    pub w4: Tensor,
}

impl FusionParams {
    fn init(d: usize, rng: &mut ChaCha8Rng) -> Self {
        FusionParams {
            w: xavier(d, 3 * d, rng),
            w1: xavier(d, d, rng),
            w2: xavier(d, d, rng),
            w3: xavier(d, d, rng),
            w4: xavier(d, d, rng),
        }
    }
}

/// One encoder block: multi-head causal self-attention plus a position-wise
/// feed-forward, both with residuals and post-norm. Weights right-multiply
/// row-major hidden states.
#[derive(Debug, Clone)]
pub struct EncoderBlock {
    pub wq: Tensor,
    pub wk: Tensor,
    pub wv: Tensor,
    pub wo: Tensor,
    pub ff1: Tensor,
    pub ffb1: Tensor,
    pub ff2: Tensor,
    pub ffb2: Tensor,
    pub ln1_gain: Tensor,
    pub ln1_bias: Tensor,
    pub ln2_gain: Tensor,
    pub ln2_bias: Tensor,
}

impl EncoderBlock {
    fn init(d: usize, d_ff: usize, rng: &mut ChaCha8Rng) -> Self {
        EncoderBlock {
            wq: xavier(d, d, rng),
            wk: xavier(d, d, rng),
            wv: xavier(d, d, rng),
            wo: xavier(d, d, rng),
            ff1: xavier(d, d_ff, rng),
            ffb1: zeros_vec(d_ff),
            ff2: xavier(d_ff, d, rng),
            ffb2: zeros_vec(d),
            ln1_gain: ones_vec(d),
            ln1_bias: zeros_vec(d),
            ln2_gain: ones_vec(d),
            ln2_bias: zeros_vec(d),
        }
    }
}

#[derive(Debug, Clone)]
pub struct EncoderParams {
    pub blocks: Vec<EncoderBlock>,
    /// Learned position table, `max_len x d`.
    pub positions: Tensor,
}

/// Feed-forward scorer with two tanh hidden layers: 3d -> d -> d -> 1.
#[derive(Debug, Clone)]
pub struct WeightNet {
    pub w1: Tensor,
    pub b1: Tensor,
    pub w2: Tensor,
    pub b2: Tensor,
    pub w3: Tensor,
    pub b3: Tensor,
}

impl WeightNet {
    fn init(d: usize, rng: &mut ChaCha8Rng) -> Self {
        // The output projection starts at zero: every signal set then
        // opens with weight exactly 1 (softmax of equal scores), and the
        // net departs from uniform weighting only as evidence accumulates.
        WeightNet {
            w1: xavier(d, 3 * d, rng),
            b1: zeros_vec(d),
            w2: xavier(d, d, rng),
            b2: zeros_vec(d),
            w3: Tensor::zeros(Shape::Matrix(1, d)).trainable(),
            b3: zeros_vec(1),
        }
    }

    /// Freeze to a constant output: zero the output projection and set its
    /// bias. Softmax of equal scores then yields weight 1 for every set.
    pub fn freeze_constant(&mut self, c: f64) {
        for v in self.w3.values_mut() {
            *v = 0.0;
        }
        self.b3.values_mut()[0] = c;
    }
}

/// All learnable state of the recommender.
#[derive(Debug, Clone)]
pub struct ModelState {
    pub dims: ModelDims,
    pub id_table: Tensor,
    pub fusion: FusionParams,
    pub encoder: EncoderParams,
    pub wnet_item: WeightNet,
    pub wnet_sess: WeightNet,
}

impl ModelState {
    pub fn init(dims: ModelDims, seed: u64) -> Result<Self> {
        dims.validate()?;
        let mut rng = stream_rng(seed, "init-params", &[]);
        let blocks =
            (0..dims.n_blocks).map(|_| EncoderBlock::init(dims.d, dims.d_ff, &mut rng)).collect();
        let scale = 1.0 / (dims.d as f64).sqrt();
        let pos_values: Vec<f64> =
            (0..dims.max_len * dims.d).map(|_| rng.random_range(-scale..scale)).collect();
        Ok(ModelState {
            dims,
            id_table: init_id_table(dims.n_items, dims.d, seed),
            fusion: FusionParams::init(dims.d, &mut rng),
            encoder: EncoderParams {
                blocks,
                positions: Tensor::from_vec(
                    Shape::Matrix(dims.max_len, dims.d),
                    pos_values,
                )?
                .trainable(),
            },
            wnet_item: WeightNet::init(dims.d, &mut rng),
            wnet_sess: WeightNet::init(dims.d, &mut rng),
        })
    }

    /// Stable-ordered view of every parameter tensor. The order is part of
    /// the checkpoint and optimizer-state contract.
    pub fn named_params(&self) -> Vec<(String, &Tensor)> {
        let mut out: Vec<(String, &Tensor)> = vec![
            ("id_table".into(), &self.id_table),
            ("fusion.w".into(), &self.fusion.w),
            ("fusion.w1".into(), &self.fusion.w1),
            ("fusion.w2".into(), &self.fusion.w2),
            ("fusion.w3".into(), &self.fusion.w3),
            ("fusion.w4".into(), &self.fusion.w4),
            ("encoder.positions".into(), &self.encoder.positions),
        ];
        for (i, b) in self.encoder.blocks.iter().enumerate() {
            for (name, t) in [
                ("wq", &b.wq),
                ("wk", &b.wk),
                ("wv", &b.wv),
                ("wo", &b.wo),
                ("ff1", &b.ff1),
                ("ffb1", &b.ffb1),
                ("ff2", &b.ff2),
                ("ffb2", &b.ffb2),
                ("ln1_gain", &b.ln1_gain),
                ("ln1_bias", &b.ln1_bias),
                ("ln2_gain", &b.ln2_gain),
                ("ln2_bias", &b.ln2_bias),
            ] {
                out.push((format!("encoder.block{i}.{name}"), t));
            }
        }
        for (prefix, net) in [("wnet_item", &self.wnet_item), ("wnet_sess", &self.wnet_sess)] {
            for (name, t) in [
                ("w1", &net.w1),
                ("b1", &net.b1),
                ("w2", &net.w2),
                ("b2", &net.b2),
                ("w3", &net.w3),
                ("b3", &net.b3),
            ] {
                out.push((format!("{prefix}.{name}"), t));
            }
        }
        out
    }

    pub fn named_params_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        let mut out: Vec<(String, &mut Tensor)> = vec![
            ("id_table".into(), &mut self.id_table),
            ("fusion.w".into(), &mut self.fusion.w),
            ("fusion.w1".into(), &mut self.fusion.w1),
            ("fusion.w2".into(), &mut self.fusion.w2),
            ("fusion.w3".into(), &mut self.fusion.w3),
            ("fusion.w4".into(), &mut self.fusion.w4),
            ("encoder.positions".into(), &mut self.encoder.positions),
        ];
        for (i, b) in self.encoder.blocks.iter_mut().enumerate() {
            for (name, t) in [
                ("wq", &mut b.wq),
                ("wk", &mut b.wk),
                ("wv", &mut b.wv),
                ("wo", &mut b.wo),
                ("ff1", &mut b.ff1),
                ("ffb1", &mut b.ffb1),
                ("ff2", &mut b.ff2),
                ("ffb2", &mut b.ffb2),
                ("ln1_gain", &mut b.ln1_gain),
                ("ln1_bias", &mut b.ln1_bias),
                ("ln2_gain", &mut b.ln2_gain),
                ("ln2_bias", &mut b.ln2_bias),
            ] {
                out.push((format!("encoder.block{i}.{name}"), t));
            }
        }
        for (prefix, net) in
            [("wnet_item", &mut self.wnet_item), ("wnet_sess", &mut self.wnet_sess)]
        {
            for (name, t) in [
                ("w1", &mut net.w1),
                ("b1", &mut net.b1),
                ("w2", &mut net.w2),
                ("b2", &mut net.b2),
                ("w3", &mut net.w3),
                ("b3", &mut net.b3),
            ] {
                out.push((format!("{prefix}.{name}"), t));
            }
        }
        out
    }

    /// Clone of this state with parameter values replaced from `tensors`,
    /// in `named_params` order. Used by finite-difference verification.
    pub fn with_param_values(&self, tensors: &[Tensor]) -> Result<ModelState> {
        let mut clone = self.clone();
        let params = clone.named_params_mut();
        if params.len() != tensors.len() {
            return Err(Error::Contract(format!(
                "expected {} parameter tensors, got {}",
                params.len(),
                tensors.len()
            )));
        }
        for ((_, dst), src) in params.into_iter().zip(tensors) {
            if dst.shape() != src.shape() {
                return Err(Error::Shape("parameter shape mismatch".into()));
            }
            dst.values_mut().copy_from_slice(src.values());
        }
        Ok(clone)
    }

    pub fn zero_grads(&mut self) {
        for (_, t) in self.named_params_mut() {
            t.zero_grad();
        }
    }
}

/// Tape leaves of the fusion weights.
#[derive(Debug, Clone, Copy)]
pub struct BoundFusion {
    pub w: NodeId,
    pub w1: NodeId,
    pub w2: NodeId,
    pub w3: NodeId,
    pub w4: NodeId,
}

#[derive(Debug, Clone, Copy)]
pub struct BoundBlock {
    pub wq: NodeId,
    pub wk: NodeId,
    pub wv: NodeId,
    pub wo: NodeId,
    pub ff1: NodeId,
    pub ffb1: NodeId,
    pub ff2: NodeId,
    pub ffb2: NodeId,
    pub ln1_gain: NodeId,
    pub ln1_bias: NodeId,
    pub ln2_gain: NodeId,
    pub ln2_bias: NodeId,
}

#[derive(Debug, Clone, Copy)]
pub struct BoundWeightNet {
    pub w1: NodeId,
    pub b1: NodeId,
    pub w2: NodeId,
    pub b2: NodeId,
    pub w3: NodeId,
    pub b3: NodeId,
}

/// Tape leaves of every parameter of the model, mirroring [`ModelState`].
/// Binding and harvesting follow the `named_params` order exactly.
pub struct BoundModel {
    pub id_table: NodeId,
    pub fusion: BoundFusion,
    pub positions: NodeId,
    pub blocks: Vec<BoundBlock>,
    pub wnet_item: BoundWeightNet,
    pub wnet_sess: BoundWeightNet,
}

impl BoundModel {
    pub fn bind(tape: &mut Tape, state: &ModelState) -> BoundModel {
        let fusion = BoundFusion {
            w: tape.leaf(&state.fusion.w),
            w1: tape.leaf(&state.fusion.w1),
            w2: tape.leaf(&state.fusion.w2),
            w3: tape.leaf(&state.fusion.w3),
            w4: tape.leaf(&state.fusion.w4),
        };
        let id_table = tape.leaf(&state.id_table);
        let positions = tape.leaf(&state.encoder.positions);
        let blocks = state
            .encoder
            .blocks
            .iter()
            .map(|b| BoundBlock {
                wq: tape.leaf(&b.wq),
                wk: tape.leaf(&b.wk),
                wv: tape.leaf(&b.wv),
                wo: tape.leaf(&b.wo),
                ff1: tape.leaf(&b.ff1),
                ffb1: tape.leaf(&b.ffb1),
                ff2: tape.leaf(&b.ff2),
                ffb2: tape.leaf(&b.ffb2),
                ln1_gain: tape.leaf(&b.ln1_gain),
                ln1_bias: tape.leaf(&b.ln1_bias),
                ln2_gain: tape.leaf(&b.ln2_gain),
                ln2_bias: tape.leaf(&b.ln2_bias),
            })
            .collect();
        let bind_net = |tape: &mut Tape, net: &WeightNet| BoundWeightNet {
            w1: tape.leaf(&net.w1),
            b1: tape.leaf(&net.b1),
            w2: tape.leaf(&net.w2),
            b2: tape.leaf(&net.b2),
            w3: tape.leaf(&net.w3),
            b3: tape.leaf(&net.b3),
        };
        let wnet_item = bind_net(tape, &state.wnet_item);
        let wnet_sess = bind_net(tape, &state.wnet_sess);
        BoundModel { id_table, fusion, positions, blocks, wnet_item, wnet_sess }
    }

    /// Bound leaves in `named_params` order.
    pub fn flat_ids(&self) -> Vec<NodeId> {
        let mut out = vec![
            self.id_table,
            self.fusion.w,
            self.fusion.w1,
            self.fusion.w2,
            self.fusion.w3,
            self.fusion.w4,
            self.positions,
        ];
        for b in &self.blocks {
            out.extend([
                b.wq, b.wk, b.wv, b.wo, b.ff1, b.ffb1, b.ff2, b.ffb2, b.ln1_gain, b.ln1_bias,
                b.ln2_gain, b.ln2_bias,
            ]);
        }
        for net in [&self.wnet_item, &self.wnet_sess] {
            out.extend([net.w1, net.b1, net.w2, net.b2, net.w3, net.b3]);
        }
        out
    }

    /// Accumulate tape gradients back into the state tensors. The padding
    /// row of the ID table stays frozen: its gradient is dropped.
    pub fn harvest(&self, tape: &Tape, state: &mut ModelState) -> Result<()> {
        let d = state.dims.d;
        let ids = self.flat_ids();
        let params = state.named_params_mut();
        if ids.len() != params.len() {
            return Err(Error::Contract(format!(
                "bound {} parameters but the model has {}",
                ids.len(),
                params.len()
            )));
        }
        for (id, (name, tensor)) in ids.into_iter().zip(params) {
            if let Some(g) = tape.grad(id) {
                if name == "id_table" {
                    let mut g = g.to_vec();
                    for v in g.iter_mut().take(d) {
                        *v = 0.0;
                    }
                    tensor.accumulate_grad(&g)?;
                } else {
                    tensor.accumulate_grad(g)?;
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dims() -> ModelDims {
        ModelDims { n_items: 5, d: 8, n_heads: 2, n_blocks: 1, d_ff: 32, max_len: 6 }
    }

    #[test]
    fn init_is_seed_deterministic() {
        let a = ModelState::init(dims(), 3).unwrap();
        let b = ModelState::init(dims(), 3).unwrap();
        for ((na, ta), (_, tb)) in a.named_params().iter().zip(b.named_params()) {
            assert_eq!(ta.values(), tb.values(), "{na}");
        }
        let c = ModelState::init(dims(), 4).unwrap();
        assert_ne!(a.fusion.w.values(), c.fusion.w.values());
    }

    #[test]
    fn heads_must_divide_d() {
        let bad = ModelDims { n_heads: 3, ..dims() };
        assert!(ModelState::init(bad, 0).is_err());
    }

    #[test]
    fn named_params_cover_both_accessors_consistently() {
        let mut s = ModelState::init(dims(), 0).unwrap();
        let names: Vec<String> = s.named_params().into_iter().map(|(n, _)| n).collect();
        let names_mut: Vec<String> =
            s.named_params_mut().into_iter().map(|(n, _)| n).collect();
        assert_eq!(names, names_mut);
        // 7 top-level + 12 per block + 2 * 6 weight-net tensors
        assert_eq!(names.len(), 7 + 12 + 12);
    }

    #[test]
    fn harvest_freezes_the_padding_row() {
        let mut s = ModelState::init(dims(), 0).unwrap();
        let mut tape = Tape::new();
        let bound = BoundModel::bind(&mut tape, &s);
        let loss = tape.sum_all(bound.id_table);
        tape.backward(loss).unwrap();
        bound.harvest(&tape, &mut s).unwrap();
        let g = s.id_table.grad().unwrap();
        assert!(g[..8].iter().all(|&v| v == 0.0));
        assert!(g[8..].iter().all(|&v| v == 1.0));
    }

    #[test]
    fn bound_ids_align_with_named_params() {
        let s = ModelState::init(dims(), 0).unwrap();
        let mut tape = Tape::new();
        let bound = BoundModel::bind(&mut tape, &s);
        let ids = bound.flat_ids();
        let params = s.named_params();
        assert_eq!(ids.len(), params.len());
        for (id, (name, t)) in ids.iter().zip(params) {
            assert_eq!(tape.value(*id), t.values(), "misaligned parameter {name}");
        }
    }
}
