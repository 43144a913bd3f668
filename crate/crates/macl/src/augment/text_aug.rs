//! Text augmentation: swap, deletion, similarity-guided substitution and
//! insertion. Substitution and insertion draw replacements from each
//! token's nearest neighbors under the text extractor's embedding cosine.

use super::technique::{AugmentParams, Technique};
use crate::data::TokenText;
use crate::embed::TextExtractor;
use crate::error::{Error, Result};
use rand::seq::index::sample;
use rand::Rng;
use std::collections::BTreeMap;

/// Top-k nearest vocabulary tokens per token, by cosine similarity of the
/// extractor's token vectors; ties break by token string ascending so the
/// index is deterministic.
#[derive(Debug, Clone, Default)]
pub struct NeighborIndex {
    pub k: usize,
    map: BTreeMap<String, Vec<String>>,
}

impl NeighborIndex {
    pub fn build(vocab: &[String], extractor: &TextExtractor, k: usize) -> NeighborIndex {
        let vectors: Vec<Vec<f64>> =
            vocab.iter().map(|t| extractor.token_vector(t)).collect();
        let cosine = |a: &[f64], b: &[f64]| -> f64 {
            let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
            let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
            let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
            dot / (na * nb)
        };
        let mut map = BTreeMap::new();
        for (i, tok) in vocab.iter().enumerate() {
            let mut scored: Vec<(f64, &String)> = vocab
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != i)
                .map(|(j, other)| (cosine(&vectors[i], &vectors[j]), other))
                .collect();
            scored.sort_by(|a, b| {
                b.0.partial_cmp(&a.0).unwrap().then_with(|| a.1.cmp(b.1))
            });
            map.insert(
                tok.clone(),
                scored.into_iter().take(k).map(|(_, t)| t.clone()).collect(),
            );
        }
        NeighborIndex { k, map }
    }

    pub fn neighbors(&self, token: &str) -> Option<&[String]> {
        self.map.get(token).map(|v| v.as_slice())
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }
}

fn change_count(ratio: f64, len: usize) -> usize {
    (ratio * len as f64).ceil() as usize
}

pub fn augment_text(
    txt: &TokenText,
    technique: Technique,
    params: &AugmentParams,
    neighbors: &NeighborIndex,
    rng: &mut impl Rng,
) -> Result<TokenText> {
    if txt.is_empty() {
        return Err(Error::DegenerateInput("cannot augment empty text".into()));
    }
    let len = txt.len();
    let mut tokens = txt.tokens.clone();
    match technique {
        Technique::Swap => {
            let pairs = change_count(params.swap_ratio, len);
            if len >= 2 {
                for _ in 0..pairs {
                    let i = rng.random_range(0..len);
                    let mut j = rng.random_range(0..len);
                    while j == i {
                        j = rng.random_range(0..len);
                    }
                    tokens.swap(i, j);
                }
            }
        }
        Technique::Deletion => {
            // Never empty the text: at most len - 1 deletions.
            let k = change_count(params.delete_ratio, len).min(len - 1);
            if k > 0 {
                let mut idx: Vec<usize> = sample(rng, len, k).into_vec();
                idx.sort_unstable_by(|a, b| b.cmp(a));
                for i in idx {
                    tokens.remove(i);
                }
            }
        }
        Technique::Substitution => {
            let k = change_count(params.substitute_ratio, len).min(len);
            if k > 0 {
                let idx = sample(rng, len, k).into_vec();
                for i in idx {
                    if let Some(ns) = neighbors.neighbors(&tokens[i]) {
                        if !ns.is_empty() {
                            tokens[i] = ns[rng.random_range(0..ns.len())].clone();
                        }
                    }
                }
            }
        }
        Technique::Insertion => {
            let k = change_count(params.insert_ratio, len);
            for _ in 0..k {
                let src = rng.random_range(0..tokens.len());
                if let Some(ns) = neighbors.neighbors(&tokens[src]) {
                    if !ns.is_empty() {
                        let tok = ns[rng.random_range(0..ns.len())].clone();
                        let pos = rng.random_range(0..=tokens.len());
                        tokens.insert(pos, tok);
                    }
                }
            }
        }
        other => {
            return Err(Error::Contract(format!("{other} is not a text technique")));
        }
    }
    Ok(TokenText { tokens })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;

    fn text(words: &[&str]) -> TokenText {
        TokenText { tokens: words.iter().map(|s| s.to_string()).collect() }
    }

    fn zero_params() -> AugmentParams {
        AugmentParams {
            swap_ratio: 0.0,
            delete_ratio: 0.0,
            substitute_ratio: 0.0,
            insert_ratio: 0.0,
            ..Default::default()
        }
    }

    #[test]
    fn zero_ratio_text_ops_are_identities() {
        let t = text(&["red", "phone", "case", "durable"]);
        let extractor = TextExtractor::new(32, 3);
        let idx = NeighborIndex::build(&t.tokens, &extractor, 5);
        let p = zero_params();
        for tech in [
            Technique::Swap,
            Technique::Deletion,
            Technique::Substitution,
            Technique::Insertion,
        ] {
            let mut rng = stream_rng(5, "zero", &[]);
            let out = augment_text(&t, tech, &p, &idx, &mut rng).unwrap();
            assert_eq!(out, t, "{tech}");
        }
    }

    #[test]
    fn deletion_keeps_at_least_one_token() {
        let t = text(&["a", "b"]);
        let idx = NeighborIndex::default();
        let p = AugmentParams { delete_ratio: 0.5, ..Default::default() };
        let mut rng = stream_rng(5, "del", &[]);
        let out = augment_text(&t, Technique::Deletion, &p, &idx, &mut rng).unwrap();
        assert_eq!(out.len(), 1);

        let p_full = AugmentParams { delete_ratio: 1.0, ..Default::default() };
        let mut rng = stream_rng(5, "del-all", &[]);
        let out = augment_text(&t, Technique::Deletion, &p_full, &idx, &mut rng).unwrap();
        assert_eq!(out.len(), 1);
    }

    #[test]
    fn swap_preserves_the_token_multiset() {
        let t = text(&["a", "b", "c", "d", "e", "f"]);
        let idx = NeighborIndex::default();
        let p = AugmentParams { swap_ratio: 0.5, ..Default::default() };
        let mut rng = stream_rng(6, "swap", &[]);
        let out = augment_text(&t, Technique::Swap, &p, &idx, &mut rng).unwrap();
        let mut a = t.tokens.clone();
        let mut b = out.tokens.clone();
        a.sort();
        b.sort();
        assert_eq!(a, b);
    }

    #[test]
    fn insertion_grows_by_the_expected_count() {
        let t = text(&["a", "b", "c", "d", "e", "f", "g", "h", "i", "j"]);
        let extractor = TextExtractor::new(16, 1);
        let idx = NeighborIndex::build(&t.tokens, &extractor, 5);
        let p = AugmentParams { insert_ratio: 0.3, ..Default::default() };
        let mut rng = stream_rng(7, "ins", &[]);
        let out = augment_text(&t, Technique::Insertion, &p, &idx, &mut rng).unwrap();
        assert_eq!(out.len(), 13); // ceil(0.3 * 10) = 3 insertions
    }

    #[test]
    fn substitution_draws_only_from_top_k_neighbors() {
        // Exhaustive oracle on a 50-token vocabulary: recompute every
        // cosine from explicit token vectors and the same tie rule.
        let vocab: Vec<String> = (0..50).map(|i| format!("tok{i:02}")).collect();
        let extractor = TextExtractor::new(16, 11);
        let idx = NeighborIndex::build(&vocab, &extractor, 5);

        let mut oracle: BTreeMap<String, Vec<String>> = BTreeMap::new();
        for a in &vocab {
            let va = extractor.token_vector(a);
            let mut scored: Vec<(f64, String)> = vocab
                .iter()
                .filter(|b| *b != a)
                .map(|b| {
                    let vb = extractor.token_vector(b);
                    let dot: f64 = va.iter().zip(&vb).map(|(x, y)| x * y).sum();
                    let na = va.iter().map(|x| x * x).sum::<f64>().sqrt();
                    let nb = vb.iter().map(|x| x * x).sum::<f64>().sqrt();
                    (dot / (na * nb), b.clone())
                })
                .collect();
            scored.sort_by(|x, y| y.0.partial_cmp(&x.0).unwrap().then_with(|| x.1.cmp(&y.1)));
            oracle.insert(a.clone(), scored.into_iter().take(5).map(|(_, t)| t).collect());
        }
        for tok in &vocab {
            assert_eq!(idx.neighbors(tok).unwrap(), &oracle[tok][..], "{tok}");
        }

        // Every substituted token is one of the source's oracle neighbors.
        let t = TokenText { tokens: vocab[..20].to_vec() };
        let p = AugmentParams { substitute_ratio: 0.4, ..Default::default() };
        for s in 0..30 {
            let mut rng = stream_rng(s, "sub", &[]);
            let out = augment_text(&t, Technique::Substitution, &p, &idx, &mut rng).unwrap();
            assert_eq!(out.len(), t.len());
            for (orig, new) in t.tokens.iter().zip(&out.tokens) {
                if orig != new {
                    assert!(
                        oracle[orig].contains(new),
                        "{new} is not a top-5 neighbor of {orig}"
                    );
                }
            }
        }
    }

    #[test]
    fn empty_text_is_degenerate() {
        let idx = NeighborIndex::default();
        let mut rng = stream_rng(0, "empty", &[]);
        assert!(augment_text(
            &TokenText { tokens: vec![] },
            Technique::Swap,
            &AugmentParams::default(),
            &idx,
            &mut rng
        )
        .is_err());
    }
}
