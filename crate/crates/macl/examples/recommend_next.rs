//! Train briefly, then produce top-k recommendations for a session
//! prefix, with and without excluding already-seen items.
//!
//!     cargo run --release --example recommend_next

use macl::embed::ProjectorMode;
use macl::eval::recommend;
use macl::synth::{generate, SyntheticSpec};
use macl::train::{prepare_data, train, TrainConfig};

fn main() -> macl::Result<()> {
    let corpus = generate(&SyntheticSpec {
        n_items: 40,
        n_groups: 4,
        n_sessions: 400,
        seed: 9,
        image_size: 16,
        ..SyntheticSpec::default()
    })?;
    let cfg = TrainConfig {
        d: 16,
        m_negatives: 8,
        batch_size: 16,
        learning_rate: 0.003,
        epochs: 4,
        patience: 4,
        max_len: 10,
        n_heads: 2,
        d_ff_multiple: 2,
        text_native_dim: 64,
        projector: ProjectorMode::Pca,
        min_item_count: 2,
        seed: 1,
        ..TrainConfig::default()
    };
    let data = prepare_data(&corpus.catalog, &corpus.sessions, &cfg)?;
    let out = train(&cfg, &data)?;

    // Take a test session's prefix as the query.
    let session = &data.split.test[0];
    let (prefix, actual_next) = session.split_label();
    let names: Vec<&str> = prefix
        .iter()
        .map(|&i| data.catalog.get(i).unwrap().external_id.as_str())
        .collect();
    println!("prefix: {names:?}");
    println!(
        "actual next: {}",
        data.catalog.get(actual_next).unwrap().external_id
    );

    for exclude_seen in [false, true] {
        let ranked =
            recommend(&out.model, &data.catalog, &data.fspace, prefix, 5, exclude_seen)?;
        println!("top-5 (exclude_seen = {exclude_seen}):");
        for (rank, (item, score)) in ranked.iter().enumerate() {
            println!(
                "  {}. {} ({score:.4})",
                rank + 1,
                data.catalog.get(*item).unwrap().external_id
            );
        }
    }
    Ok(())
}
