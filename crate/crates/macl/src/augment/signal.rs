//! Signal-set construction: for every anchor, a positive view and a set
//! of negatives, all produced under one technique so they share a space.
//!
//! Planning happens outside the computation graph: every augmented view
//! is reduced to a constant d-vector here, and the loss layer later wires
//! anchors (which carry gradients) against these constants.

use super::image_aug::augment_image;
use super::technique::{sample_technique, AugmentParams, Modality, Technique};
use super::text_aug::{augment_text, NeighborIndex};
use crate::data::{Catalog, ItemId};
use crate::embed::FeatureSpace;
use crate::error::{Error, Result};
use rand::seq::index::sample;
use rand::Rng;

/// One item-level signal set, fully planned: the anchor is referenced by
/// item id (its fused embedding is built in-graph), the positive and the
/// M negatives are constant embeddings of augmented views.
#[derive(Debug, Clone)]
pub struct PlannedItemSet {
    pub item: ItemId,
    pub technique: Technique,
    pub positive: Vec<f64>,
    pub negative_items: Vec<ItemId>,
    pub negatives: Vec<Vec<f64>>,
}

/// How a session's negatives are produced.
#[derive(Debug, Clone)]
pub enum SessionNegatives {
    /// The other sessions' positive views double as negatives; everyone
    /// shares one batch-wide technique.
    Shared,
    /// Each other session re-augmented under this session's technique:
    /// (batch index, per-item view embeddings).
    Reaugmented(Vec<(usize, Vec<Vec<f64>>)>),
}

/// One session-level signal set: the anchor session is referenced by its
/// batch index, the positive is the per-item view embedding sequence to
/// run through the encoder.
#[derive(Debug, Clone)]
pub struct PlannedSessionSet {
    pub session_index: usize,
    pub technique: Technique,
    pub positive_items: Vec<Vec<f64>>,
    pub negatives: SessionNegatives,
}

/// Augment one item's asset under `technique` and embed it through the
/// matching modality pathway.
pub fn embed_augmented_view(
    catalog: &Catalog,
    fspace: &FeatureSpace,
    item: ItemId,
    technique: Technique,
    params: &AugmentParams,
    neighbors: &NeighborIndex,
    rng: &mut impl Rng,
) -> Result<Vec<f64>> {
    let entry = catalog
        .get(item)
        .ok_or_else(|| Error::Lookup(format!("item {item} not in catalog")))?;
    match technique.modality() {
        Modality::Image => {
            let img = entry
                .image
                .as_ref()
                .ok_or(Error::ModalityAbsent { item, modality: "image" })?;
            let view = augment_image(img, technique, params, rng)?;
            fspace.embed_image_view(&view)
        }
        Modality::Text => {
            let txt = entry
                .text
                .as_ref()
                .ok_or(Error::ModalityAbsent { item, modality: "text" })?;
            let view = augment_text(txt, technique, params, neighbors, rng)?;
            fspace.embed_text_view(&view)
        }
    }
}

/// Plan an item-level signal set: draw a technique admissible for the
/// anchor, embed its augmented view as the positive, then draw M distinct
/// negative items carrying the same modality and embed views of them
/// under the same technique.
///
/// Negative items are drawn from `neg_rng` when given (a stable per-item
/// stream pins the negative set across steps); augmentation randomness
/// always comes from `rng`.
pub fn plan_item_signal_set(
    item: ItemId,
    catalog: &Catalog,
    fspace: &FeatureSpace,
    m_negatives: usize,
    params: &AugmentParams,
    neighbors: &NeighborIndex,
    rng: &mut impl Rng,
    neg_rng: Option<&mut impl Rng>,
) -> Result<PlannedItemSet> {
    let technique = sample_technique(
        &Technique::ALL,
        fspace.image_augmentable(catalog, item),
        fspace.text_augmentable(catalog, item),
        rng,
    )?;
    let positive =
        embed_augmented_view(catalog, fspace, item, technique, params, neighbors, rng)?;

    let candidates: Vec<ItemId> = catalog
        .items()
        .iter()
        .map(|i| i.id)
        .filter(|&id| {
            id != item
                && match technique.modality() {
                    Modality::Image => fspace.image_augmentable(catalog, id),
                    Modality::Text => fspace.text_augmentable(catalog, id),
                }
        })
        .collect();
    if candidates.len() < m_negatives {
        return Err(Error::Sampling(format!(
            "need {m_negatives} negative candidates with a {} asset, found {}",
            match technique.modality() {
                Modality::Image => "image",
                Modality::Text => "text",
            },
            candidates.len()
        )));
    }
    let chosen = match neg_rng {
        Some(r) => sample(r, candidates.len(), m_negatives),
        None => sample(rng, candidates.len(), m_negatives),
    };
    let negative_items: Vec<ItemId> = chosen.into_iter().map(|ci| candidates[ci]).collect();
    let mut negatives = Vec::with_capacity(m_negatives);
    for &neg in &negative_items {
        negatives.push(embed_augmented_view(
            catalog, fspace, neg, technique, params, neighbors, rng,
        )?);
    }
    Ok(PlannedItemSet { item, technique, positive, negative_items, negatives })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SessionNegativeMode {
    /// One technique per batch; in-batch views are shared as negatives.
    Shared,
    /// One technique per session; negatives re-augmented to match it.
    Reaugment,
}

impl std::str::FromStr for SessionNegativeMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "shared" => Ok(SessionNegativeMode::Shared),
            "reaugment" => Ok(SessionNegativeMode::Reaugment),
            other => Err(Error::Config(format!("unknown session negative mode {other:?}"))),
        }
    }
}

/// Techniques admissible for every item of the prefix.
fn common_techniques(
    prefix: &[ItemId],
    catalog: &Catalog,
    fspace: &FeatureSpace,
) -> Vec<Technique> {
    Technique::ALL
        .iter()
        .filter(|t| {
            prefix.iter().all(|&id| match t.modality() {
                Modality::Image => fspace.image_augmentable(catalog, id),
                Modality::Text => fspace.text_augmentable(catalog, id),
            })
        })
        .copied()
        .collect()
}

/// Plan session-level signal sets for a batch of prefixes. A session with
/// no technique admissible for all of its items contributes no signal
/// this step (`None`).
pub fn plan_session_signal_sets(
    prefixes: &[Vec<ItemId>],
    catalog: &Catalog,
    fspace: &FeatureSpace,
    mode: SessionNegativeMode,
    params: &AugmentParams,
    neighbors: &NeighborIndex,
    rng: &mut impl Rng,
) -> Result<Vec<Option<PlannedSessionSet>>> {
    if prefixes.len() < 2 {
        return Err(Error::Config(format!(
            "session-level contrastive learning needs a batch of at least 2, got {}",
            prefixes.len()
        )));
    }
    // Techniques admissible for every item of every session; negatives can
    // then always be produced in the anchor's space.
    let batch_common: Vec<Technique> = Technique::ALL
        .iter()
        .filter(|t| {
            prefixes.iter().all(|p| {
                p.iter().all(|&id| match t.modality() {
                    Modality::Image => fspace.image_augmentable(catalog, id),
                    Modality::Text => fspace.text_augmentable(catalog, id),
                })
            })
        })
        .copied()
        .collect();
    if batch_common.is_empty() {
        return Ok(vec![None; prefixes.len()]);
    }

    fn embed_prefix<R: Rng>(
        prefix: &[ItemId],
        technique: Technique,
        catalog: &Catalog,
        fspace: &FeatureSpace,
        params: &AugmentParams,
        neighbors: &NeighborIndex,
        rng: &mut R,
    ) -> Result<Vec<Vec<f64>>> {
        prefix
            .iter()
            .map(|&id| {
                embed_augmented_view(catalog, fspace, id, technique, params, neighbors, rng)
            })
            .collect()
    }

    match mode {
        SessionNegativeMode::Shared => {
            let technique = batch_common[rng.random_range(0..batch_common.len())];
            let mut out = Vec::with_capacity(prefixes.len());
            for (i, prefix) in prefixes.iter().enumerate() {
                out.push(Some(PlannedSessionSet {
                    session_index: i,
                    technique,
                    positive_items: embed_prefix(prefix, technique, catalog, fspace, params, neighbors, rng)?,
                    negatives: SessionNegatives::Shared,
                }));
            }
            Ok(out)
        }
        SessionNegativeMode::Reaugment => {
            let mut out = Vec::with_capacity(prefixes.len());
            for (i, prefix) in prefixes.iter().enumerate() {
                // Own technique from the session's admissible set, but
                // constrained to the batch-common pool so every other
                // session can be re-augmented to match.
                let own = common_techniques(prefix, catalog, fspace);
                let admissible: Vec<Technique> =
                    own.into_iter().filter(|t| batch_common.contains(t)).collect();
                if admissible.is_empty() {
                    out.push(None);
                    continue;
                }
                let technique = admissible[rng.random_range(0..admissible.len())];
                let positive_items = embed_prefix(prefix, technique, catalog, fspace, params, neighbors, rng)?;
                let mut negs = Vec::with_capacity(prefixes.len() - 1);
                for (j, other) in prefixes.iter().enumerate() {
                    if j == i {
                        continue;
                    }
                    negs.push((j, embed_prefix(other, technique, catalog, fspace, params, neighbors, rng)?));
                }
                out.push(Some(PlannedSessionSet {
                    session_index: i,
                    technique,
                    positive_items,
                    negatives: SessionNegatives::Reaugmented(negs),
                }));
            }
            Ok(out)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{RasterImage, TokenText};
    use crate::embed::ProjectorMode;
    use crate::rng::stream_rng;

    fn catalog_with_both_modalities(n: usize) -> Catalog {
        Catalog::from_parts((0..n).map(|i| {
            let pixels: Vec<u8> =
                (0..16 * 16 * 3).map(|p| ((p * (i + 3)) % 251) as u8).collect();
            (
                format!("item{i}"),
                Some(RasterImage::new(16, 16, 3, pixels).unwrap()),
                TokenText::tokenize(&format!(
                    "thing number {i} with sturdy finish and spare parts kit"
                )),
            )
        }))
        .unwrap()
    }

    fn space_for(catalog: &Catalog) -> (FeatureSpace, NeighborIndex) {
        let fs = FeatureSpace::build(catalog, 6, ProjectorMode::FixedRandom, 3, 64, None, None)
            .unwrap();
        let idx = NeighborIndex::build(&catalog.vocabulary(), &fs.text_extractor, 5);
        (fs, idx)
    }

    #[test]
    fn item_set_has_m_distinct_negatives_excluding_anchor() {
        let catalog = catalog_with_both_modalities(12);
        let (fs, idx) = space_for(&catalog);
        let params = AugmentParams::default();
        let mut rng = stream_rng(5, "itemset", &[]);
        let set =
            plan_item_signal_set(3, &catalog, &fs, 8, &params, &idx, &mut rng, None::<&mut rand_chacha::ChaCha8Rng>).unwrap();
        assert_eq!(set.negatives.len(), 8);
        assert_eq!(set.positive.len(), 6);
        for n in &set.negatives {
            assert_eq!(n.len(), 6);
        }
    }

    #[test]
    fn insufficient_candidates_is_a_sampling_error() {
        let catalog = catalog_with_both_modalities(4);
        let (fs, idx) = space_for(&catalog);
        let mut rng = stream_rng(5, "few", &[]);
        assert!(matches!(
            plan_item_signal_set(0, &catalog, &fs, 10, &AugmentParams::default(), &idx, &mut rng, None::<&mut rand_chacha::ChaCha8Rng>),
            Err(Error::Sampling(_))
        ));
    }

    #[test]
    fn text_only_items_route_through_the_text_pathway() {
        let catalog = Catalog::from_parts((0..6).map(|i| {
            (
                format!("t{i}"),
                None,
                TokenText::tokenize(&format!("plain text item {i} alpha beta gamma")),
            )
        }))
        .unwrap();
        let (fs, idx) = space_for(&catalog);
        let mut rng = stream_rng(8, "textonly", &[]);
        for _ in 0..20 {
            let set = plan_item_signal_set(
                1,
                &catalog,
                &fs,
                3,
                &AugmentParams::default(),
                &idx,
                &mut rng,
                None::<&mut rand_chacha::ChaCha8Rng>,
            )
            .unwrap();
            assert_eq!(set.technique.modality(), Modality::Text);
        }
    }

    #[test]
    fn shared_mode_uses_one_technique_per_batch() {
        let catalog = catalog_with_both_modalities(8);
        let (fs, idx) = space_for(&catalog);
        let prefixes: Vec<Vec<ItemId>> = vec![vec![0, 1], vec![2, 3], vec![4, 5]];
        let mut rng = stream_rng(9, "shared", &[]);
        let sets = plan_session_signal_sets(
            &prefixes,
            &catalog,
            &fs,
            SessionNegativeMode::Shared,
            &AugmentParams::default(),
            &idx,
            &mut rng,
        )
        .unwrap();
        let techs: Vec<Technique> =
            sets.iter().map(|s| s.as_ref().unwrap().technique).collect();
        assert!(techs.windows(2).all(|w| w[0] == w[1]));
        for (i, s) in sets.iter().enumerate() {
            let s = s.as_ref().unwrap();
            assert_eq!(s.session_index, i);
            assert_eq!(s.positive_items.len(), prefixes[i].len());
            assert!(matches!(s.negatives, SessionNegatives::Shared));
        }
    }

    #[test]
    fn reaugment_mode_builds_n_minus_one_negatives_under_the_anchor_technique() {
        let catalog = catalog_with_both_modalities(8);
        let (fs, idx) = space_for(&catalog);
        let prefixes: Vec<Vec<ItemId>> = vec![vec![0, 1, 2], vec![3, 4], vec![5, 6, 7]];
        let mut rng = stream_rng(10, "reaug", &[]);
        let sets = plan_session_signal_sets(
            &prefixes,
            &catalog,
            &fs,
            SessionNegativeMode::Reaugment,
            &AugmentParams::default(),
            &idx,
            &mut rng,
        )
        .unwrap();
        for (i, s) in sets.iter().enumerate() {
            let s = s.as_ref().unwrap();
            match &s.negatives {
                SessionNegatives::Reaugmented(negs) => {
                    assert_eq!(negs.len(), 2);
                    for (j, items) in negs {
                        assert_ne!(*j, i);
                        assert_eq!(items.len(), prefixes[*j].len());
                    }
                }
                SessionNegatives::Shared => panic!("expected reaugmented negatives"),
            }
        }
    }

    #[test]
    fn batch_below_two_is_a_configuration_error() {
        let catalog = catalog_with_both_modalities(4);
        let (fs, idx) = space_for(&catalog);
        let mut rng = stream_rng(1, "tiny", &[]);
        assert!(plan_session_signal_sets(
            &[vec![0, 1]],
            &catalog,
            &fs,
            SessionNegativeMode::Shared,
            &AugmentParams::default(),
            &idx,
            &mut rng,
        )
        .is_err());
    }

    #[test]
    fn id_only_items_block_session_signals() {
        let mut parts: Vec<(String, Option<RasterImage>, Option<TokenText>)> = (0..4)
            .map(|i| {
                (
                    format!("t{i}"),
                    None,
                    TokenText::tokenize(&format!("text for item {i} extra words")),
                )
            })
            .collect();
        parts.push(("bare".to_string(), None, None));
        let catalog = Catalog::from_parts(parts).unwrap();
        let (fs, idx) = space_for(&catalog);
        // Session 0 contains the ID-only item 4: no technique fits.
        let prefixes: Vec<Vec<ItemId>> = vec![vec![0, 4], vec![1, 2]];
        let mut rng = stream_rng(2, "blocked", &[]);
        let sets = plan_session_signal_sets(
            &prefixes,
            &catalog,
            &fs,
            SessionNegativeMode::Shared,
            &AugmentParams::default(),
            &idx,
            &mut rng,
        )
        .unwrap();
        // Shared mode needs a batch-wide admissible technique; item 4
        // blocks every technique, so the whole batch yields no signal.
        assert!(sets.iter().all(|s| s.is_none()));
    }
}
