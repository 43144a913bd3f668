//! Gated multi-modal fusion: one comprehensive item embedding from the
//! ID, image, and text embeddings. Two tanh gates modulate how much of
//! each feature modality flows into the result; a modality the item does
//! not carry contributes exactly zero (its gated term is skipped).

use super::params::BoundFusion;
use crate::autodiff::{NodeId, Tape};
use crate::error::Result;

/// Inputs to fusion for one item: the trainable ID embedding node plus
/// optional constant feature embeddings.
#[derive(Debug, Clone, Copy)]
pub struct FusionInputs {
    pub e_id: NodeId,
    pub e_img: Option<NodeId>,
    pub e_txt: Option<NodeId>,
}

/// Fuse one item: mix = W [e_id; e_img; e_txt], gates g1/g2 from the mix
/// and each modality, output e_id + g1 * e_img + g2 * e_txt.
pub fn fuse_item(tape: &mut Tape, weights: &BoundFusion, inputs: FusionInputs) -> Result<NodeId> {
    let d = tape.shape(inputs.e_id).numel();
    let zero = |tape: &mut Tape| tape.constant_vector(&vec![0.0; d]);

    let img_in = match inputs.e_img {
        Some(n) => n,
        None => zero(tape),
    };
    let txt_in = match inputs.e_txt {
        Some(n) => n,
        None => zero(tape),
    };
    let cat = tape.concat(&[inputs.e_id, img_in, txt_in])?;
    let mix = tape.matmul(weights.w, cat)?;

    let mut out = inputs.e_id;
    if let Some(e_img) = inputs.e_img {
        let a = tape.matmul(weights.w1, mix)?;
        let b = tape.matmul(weights.w2, e_img)?;
        let pre = tape.add(a, b)?;
        let g1 = tape.tanh(pre);
        let gated = tape.mul(g1, e_img)?;
        out = tape.add(out, gated)?;
    }
    if let Some(e_txt) = inputs.e_txt {
        let a = tape.matmul(weights.w3, mix)?;
        let b = tape.matmul(weights.w4, e_txt)?;
        let pre = tape.add(a, b)?;
        let g2 = tape.tanh(pre);
        let gated = tape.mul(g2, e_txt)?;
        out = tape.add(out, gated)?;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::gradcheck::{central_difference_gradients, max_relative_error};
    use crate::autodiff::Tensor;
    use crate::model::params::{BoundModel, ModelDims, ModelState};
    use crate::rng::stream_rng;
    use rand::Rng;

    fn dims(d: usize) -> ModelDims {
        ModelDims { n_items: 3, d, n_heads: 1, n_blocks: 1, d_ff: d * 4, max_len: 4 }
    }

    fn rand_vec(d: usize, rng: &mut impl Rng) -> Vec<f64> {
        (0..d).map(|_| rng.random_range(-1.0..1.0)).collect()
    }

    #[test]
    fn zero_weights_pass_the_id_embedding_through() {
        let d = 6;
        let mut state = ModelState::init(dims(d), 1).unwrap();
        for t in [
            &mut state.fusion.w,
            &mut state.fusion.w1,
            &mut state.fusion.w2,
            &mut state.fusion.w3,
            &mut state.fusion.w4,
        ] {
            for v in t.values_mut() {
                *v = 0.0;
            }
        }
        let mut rng = stream_rng(2, "fusion-zero", &[]);
        let mut tape = Tape::new();
        let bound = BoundModel::bind(&mut tape, &state);
        let e_id_v = rand_vec(d, &mut rng);
        let e_id = tape.constant_vector(&e_id_v);
        let e_img = tape.constant_vector(&rand_vec(d, &mut rng));
        let e_txt = tape.constant_vector(&rand_vec(d, &mut rng));
        let out = fuse_item(
            &mut tape,
            &bound.fusion,
            FusionInputs { e_id, e_img: Some(e_img), e_txt: Some(e_txt) },
        )
        .unwrap();
        assert_eq!(tape.value(out), &e_id_v[..]);
    }

    #[test]
    fn missing_modalities_leave_only_the_id_embedding() {
        let d = 6;
        let state = ModelState::init(dims(d), 1).unwrap();
        let mut tape = Tape::new();
        let bound = BoundModel::bind(&mut tape, &state);
        let e_id_v: Vec<f64> = (0..d).map(|i| i as f64 * 0.1 - 0.2).collect();
        let e_id = tape.constant_vector(&e_id_v);
        let out = fuse_item(
            &mut tape,
            &bound.fusion,
            FusionInputs { e_id, e_img: None, e_txt: None },
        )
        .unwrap();
        assert_eq!(tape.value(out), &e_id_v[..]);
    }

    /// Straight-line reimplementation of the fusion equations, independent
    /// of the tape.
    fn fuse_reference(
        w: &[f64],
        w1: &[f64],
        w2: &[f64],
        w3: &[f64],
        w4: &[f64],
        e_id: &[f64],
        e_img: &[f64],
        e_txt: &[f64],
        d: usize,
    ) -> Vec<f64> {
        let matvec = |m: &[f64], x: &[f64], rows: usize, cols: usize| -> Vec<f64> {
            (0..rows)
                .map(|i| (0..cols).map(|j| m[i * cols + j] * x[j]).sum())
                .collect()
        };
        let mut cat = e_id.to_vec();
        cat.extend_from_slice(e_img);
        cat.extend_from_slice(e_txt);
        let mix = matvec(w, &cat, d, 3 * d);
        let g1: Vec<f64> = matvec(w1, &mix, d, d)
            .iter()
            .zip(matvec(w2, e_img, d, d))
            .map(|(a, b)| (a + b).tanh())
            .collect();
        let g2: Vec<f64> = matvec(w3, &mix, d, d)
            .iter()
            .zip(matvec(w4, e_txt, d, d))
            .map(|(a, b)| (a + b).tanh())
            .collect();
        (0..d).map(|i| e_id[i] + g1[i] * e_img[i] + g2[i] * e_txt[i]).collect()
    }

    #[test]
    fn fusion_matches_a_straight_line_reference() {
        let d = 4;
        let state = ModelState::init(dims(d), 9).unwrap();
        let mut rng = stream_rng(9, "fusion-ref", &[]);
        let e_id_v = rand_vec(d, &mut rng);
        let e_img_v = rand_vec(d, &mut rng);
        let e_txt_v = rand_vec(d, &mut rng);

        let mut tape = Tape::new();
        let bound = BoundModel::bind(&mut tape, &state);
        let e_id = tape.constant_vector(&e_id_v);
        let e_img = tape.constant_vector(&e_img_v);
        let e_txt = tape.constant_vector(&e_txt_v);
        let out = fuse_item(
            &mut tape,
            &bound.fusion,
            FusionInputs { e_id, e_img: Some(e_img), e_txt: Some(e_txt) },
        )
        .unwrap();

        let expected = fuse_reference(
            state.fusion.w.values(),
            state.fusion.w1.values(),
            state.fusion.w2.values(),
            state.fusion.w3.values(),
            state.fusion.w4.values(),
            &e_id_v,
            &e_img_v,
            &e_txt_v,
            d,
        );
        for (a, b) in tape.value(out).iter().zip(&expected) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }

    #[test]
    fn gated_terms_are_bounded_by_the_modality_embedding() {
        let d = 8;
        let state = ModelState::init(dims(d), 4).unwrap();
        let mut rng = stream_rng(4, "fusion-bound", &[]);
        for _ in 0..20 {
            let e_id_v = rand_vec(d, &mut rng);
            let e_img_v = rand_vec(d, &mut rng);
            let mut tape = Tape::new();
            let bound = BoundModel::bind(&mut tape, &state);
            let e_id = tape.constant_vector(&e_id_v);
            let e_img = tape.constant_vector(&e_img_v);
            let out = fuse_item(
                &mut tape,
                &bound.fusion,
                FusionInputs { e_id, e_img: Some(e_img), e_txt: None },
            )
            .unwrap();
            // |out - e_id| = |g1 * e_img| <= |e_img| componentwise.
            for ((o, id), img) in tape.value(out).iter().zip(&e_id_v).zip(&e_img_v) {
                assert!((o - id).abs() <= img.abs() + 1e-12);
            }
        }
    }

    #[test]
    fn fusion_gradients_match_finite_differences() {
        let d = 4;
        let state = ModelState::init(dims(d), 7).unwrap();
        let mut rng = stream_rng(7, "fusion-grad", &[]);
        let e_img_v = rand_vec(d, &mut rng);
        let e_txt_v = rand_vec(d, &mut rng);
        let slot = 2usize;

        let loss_of = |s: &ModelState| -> crate::error::Result<(Tape, BoundModel, NodeId)> {
            let mut tape = Tape::new();
            let bound = BoundModel::bind(&mut tape, s);
            let e_id = tape.row(bound.id_table, slot)?;
            let e_img = tape.constant_vector(&e_img_v);
            let e_txt = tape.constant_vector(&e_txt_v);
            let fused = fuse_item(
                &mut tape,
                &bound.fusion,
                FusionInputs { e_id, e_img: Some(e_img), e_txt: Some(e_txt) },
            )?;
            let sq = tape.mul(fused, fused)?;
            let loss = tape.sum_all(sq);
            Ok((tape, bound, loss))
        };

        let params: Vec<Tensor> =
            state.named_params().into_iter().map(|(_, t)| t.clone()).collect();
        let numeric = central_difference_gradients(
            |ps: &[Tensor]| {
                let s = state.with_param_values(ps)?;
                let (tape, _, loss) = loss_of(&s)?;
                Ok(tape.value(loss)[0])
            },
            &params,
            1e-5,
        )
        .unwrap();

        let (mut tape, bound, loss) = loss_of(&state).unwrap();
        tape.backward(loss).unwrap();
        let ids = bound.flat_ids();
        let names: Vec<String> = state.named_params().into_iter().map(|(n, _)| n).collect();
        for ((id, num), name) in ids.iter().zip(&numeric).zip(&names) {
            let zero = vec![0.0; num.len()];
            let analytic = tape.grad(*id).unwrap_or(&zero);
            // Padding-row freezing happens at harvest; compare raw tape
            // gradients here.
            let err = max_relative_error(analytic, num, 1e-3);
            assert!(err < 1e-4, "{name}: gradient error {err}");
        }
    }
}
