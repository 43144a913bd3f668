//! End-to-end quickstart: synthesize a small corpus, train with the
//! joint objective, and report test metrics.
//!
//!     cargo run --release --example train_quickstart

use macl::embed::ProjectorMode;
use macl::eval::evaluate;
use macl::synth::{generate, SyntheticSpec};
use macl::train::{prepare_data, train, TrainConfig};

fn main() -> macl::Result<()> {
    let corpus = generate(&SyntheticSpec {
        n_items: 60,
        n_groups: 6,
        n_sessions: 800,
        seed: 7,
        image_size: 16,
        ..SyntheticSpec::default()
    })?;

    let cfg = TrainConfig {
        d: 24,
        m_negatives: 10,
        batch_size: 32,
        learning_rate: 0.003,
        lambda: 0.05,
        epochs: 6,
        patience: 3,
        max_len: 10,
        n_heads: 2,
        d_ff_multiple: 2,
        text_native_dim: 64,
        projector: ProjectorMode::Pca,
        min_item_count: 2,
        seed: 11,
        ..TrainConfig::default()
    };

    let data = prepare_data(&corpus.catalog, &corpus.sessions, &cfg)?;
    println!(
        "training on {} sessions over {} items (validation {}, test {})",
        data.split.train.len(),
        data.catalog.len(),
        data.split.validation.len(),
        data.split.test.len()
    );

    let out = train(&cfg, &data)?;
    for (epoch, prec) in out.val_history.iter().enumerate() {
        println!("epoch {epoch}: validation Prec@{} = {prec:.4}", out.selection_k);
    }
    println!("selected epoch {}", out.best_epoch);

    let report = evaluate(&out.model, &data.catalog, &data.fspace, &data.split.test, &[10, 20])?;
    for (i, &k) in report.k_list.iter().enumerate() {
        println!(
            "test Prec@{k} = {:.4}, MRR@{k} = {:.4} (n = {})",
            report.precision[i], report.mrr[i], report.count
        );
    }
    Ok(())
}
