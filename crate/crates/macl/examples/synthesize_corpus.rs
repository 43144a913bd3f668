//! Generate a synthetic catalog and session log, write them as JSONL,
//! and print corpus statistics.
//!
//!     cargo run --release --example synthesize_corpus [OUT_DIR]

use macl::data::item_counts;
use macl::synth::{generate, write_jsonl, SyntheticSpec};
use std::path::PathBuf;

fn main() -> macl::Result<()> {
    let out: PathBuf = std::env::args()
        .nth(1)
        .unwrap_or_else(|| "target/synth-demo".to_string())
        .into();
    let spec = SyntheticSpec {
        n_items: 60,
        n_groups: 6,
        n_sessions: 500,
        seed: 42,
        ..SyntheticSpec::default()
    };
    let corpus = generate(&spec)?;
    let (catalog_path, sessions_path) = write_jsonl(&corpus, &out)?;

    let counts = item_counts(&corpus.sessions);
    let mut sorted: Vec<u64> = counts.values().copied().collect();
    sorted.sort_unstable_by(|a, b| b.cmp(a));
    let total: u64 = sorted.iter().sum();
    let head10: u64 = sorted.iter().take(spec.n_items / 10).sum();
    let lengths: Vec<usize> = corpus.sessions.iter().map(|s| s.items.len()).collect();

    println!("catalog:  {}", catalog_path.display());
    println!("sessions: {}", sessions_path.display());
    println!(
        "{} items in {} groups, {} sessions, {} interactions",
        spec.n_items,
        spec.n_groups,
        corpus.sessions.len(),
        total
    );
    println!(
        "top 10% of items hold {:.1}% of interactions",
        100.0 * head10 as f64 / total as f64
    );
    println!(
        "session lengths: min {} max {} mean {:.2}",
        lengths.iter().min().unwrap(),
        lengths.iter().max().unwrap(),
        lengths.iter().sum::<usize>() as f64 / lengths.len() as f64
    );
    Ok(())
}
