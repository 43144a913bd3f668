//! Stratified evaluation: break test metrics down by session length and
//! by the training-set popularity of the target item.
//!
//!     cargo run --release --example evaluate_stratified

use macl::data::StratifyAxis;
use macl::embed::ProjectorMode;
use macl::eval::stratified_evaluate;
use macl::synth::{generate, SyntheticSpec};
use macl::train::{prepare_data, train, TrainConfig};

fn main() -> macl::Result<()> {
    let corpus = generate(&SyntheticSpec {
        n_items: 80,
        n_groups: 8,
        n_sessions: 1200,
        session_len_min: 2,
        session_len_max: 9,
        seed: 3,
        image_size: 16,
        ..SyntheticSpec::default()
    })?;
    let cfg = TrainConfig {
        d: 24,
        m_negatives: 10,
        batch_size: 32,
        learning_rate: 0.003,
        epochs: 5,
        patience: 3,
        max_len: 10,
        n_heads: 2,
        d_ff_multiple: 2,
        text_native_dim: 64,
        projector: ProjectorMode::Pca,
        min_item_count: 2,
        keep_unpopular: true,
        seed: 5,
        ..TrainConfig::default()
    };
    let data = prepare_data(&corpus.catalog, &corpus.sessions, &cfg)?;
    let out = train(&cfg, &data)?;

    for (axis, boundaries, title) in [
        (StratifyAxis::SessionLength, vec![4], "by session length"),
        (StratifyAxis::ItemPopularity, vec![10, 40], "by target training popularity"),
    ] {
        println!("--- {title} ---");
        let strata = stratified_evaluate(
            &out.model,
            &data.catalog,
            &data.fspace,
            &data.split.test,
            axis,
            &boundaries,
            &data.train_counts,
            &[10, 20],
        )?;
        for (stratum, report) in strata {
            match report {
                Some(r) => println!(
                    "{:<12} n = {:<4} Prec@20 = {:.4}  MRR@20 = {:.4}",
                    stratum.label,
                    r.count,
                    r.precision_at(20).unwrap(),
                    r.mrr_at(20).unwrap()
                ),
                None => println!("{:<12} empty", stratum.label),
            }
        }
    }
    Ok(())
}
