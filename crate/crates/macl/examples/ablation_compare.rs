//! Train the full model and its ablations on one small corpus and print
//! the test metrics side by side: no item-level contrastive learning, no
//! session-level contrastive learning, no adaptive weighting, and the
//! legacy ID-sequence augmentation.
//!
//!     cargo run --release --example ablation_compare

use macl::embed::ProjectorMode;
use macl::eval::evaluate;
use macl::synth::{generate, SyntheticSpec};
use macl::train::{prepare_data, train, TrainConfig};

fn main() -> macl::Result<()> {
    let corpus = generate(&SyntheticSpec {
        n_items: 60,
        n_groups: 6,
        n_sessions: 800,
        popularity_drift: 0.5,
        seed: 13,
        image_size: 16,
        ..SyntheticSpec::default()
    })?;
    let base = TrainConfig {
        d: 24,
        m_negatives: 10,
        batch_size: 32,
        learning_rate: 0.003,
        lambda: 0.05,
        epochs: 4,
        patience: 99,
        max_len: 10,
        n_heads: 2,
        d_ff_multiple: 2,
        text_native_dim: 64,
        projector: ProjectorMode::Pca,
        min_item_count: 1,
        keep_unpopular: true,
        seed: 2,
        ..TrainConfig::default()
    };

    let variants: [(&str, fn(&mut TrainConfig)); 5] = [
        ("full model", |_| {}),
        ("no item-level CL", |c| c.no_item_cl = true),
        ("no session-level CL", |c| c.no_sess_cl = true),
        ("no adaptive weighting", |c| c.no_adaptive = true),
        ("legacy ID augmentation", |c| c.legacy_aug = true),
    ];

    println!("{:<24} {:>8} {:>8}", "variant", "Prec@20", "MRR@20");
    for (name, tweak) in variants {
        let mut cfg = base.clone();
        tweak(&mut cfg);
        let data = prepare_data(&corpus.catalog, &corpus.sessions, &cfg)?;
        let out = train(&cfg, &data)?;
        let report =
            evaluate(&out.model, &data.catalog, &data.fspace, &data.split.test, &[20])?;
        println!(
            "{:<24} {:>8.4} {:>8.4}",
            name,
            report.precision_at(20).unwrap(),
            report.mrr_at(20).unwrap()
        );
    }
    Ok(())
}
