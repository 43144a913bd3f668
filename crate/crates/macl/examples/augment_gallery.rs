//! Apply every augmentation technique to a synthetic catalog and report
//! the semantic-consistency proxy: mean cosine similarity between each
//! item's projected features and its augmented view's projected features.

use macl::augment::{embed_augmented_view, AugmentParams, Modality, NeighborIndex, Technique};
use macl::embed::{FeatureSpace, ProjectorMode};
use macl::rng::stream_rng;
use macl::synth::{generate, SyntheticSpec};

fn main() -> macl::Result<()> {
    let spec = SyntheticSpec { n_items: 100, n_groups: 10, n_sessions: 10, ..Default::default() };
    let corpus = generate(&spec)?;
    let fspace = FeatureSpace::build(&corpus.catalog, 50, ProjectorMode::Pca, 0, 256, None, None)?;
    let neighbors =
        NeighborIndex::build(&corpus.catalog.vocabulary(), &fspace.text_extractor, 5);
    let params = AugmentParams::default();
    let cos = |a: &[f64], b: &[f64]| {
        let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
        let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
        let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
        dot / (na * nb)
    };

    println!("technique         mean_cosine  min_cosine");
    for technique in Technique::ALL {
        let mut sims = Vec::new();
        let mut rng = stream_rng(7, "gallery", &[]);
        for item in corpus.catalog.items() {
            let anchor = match technique.modality() {
                Modality::Image => fspace.img_embed(item.id)?.to_vec(),
                Modality::Text => fspace.txt_embed(item.id)?.to_vec(),
            };
            let view = embed_augmented_view(
                &corpus.catalog,
                &fspace,
                item.id,
                technique,
                &params,
                &neighbors,
                &mut rng,
            )?;
            sims.push(cos(&anchor, &view));
        }
        let mean = sims.iter().sum::<f64>() / sims.len() as f64;
        let min = sims.iter().cloned().fold(f64::INFINITY, f64::min);
        println!("{:<18}{mean:>10.4}{min:>12.4}", technique.name());
    }
    Ok(())
}
