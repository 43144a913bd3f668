//! Corpus preprocessing: popularity filtering to a fixed point and the
//! chronological 7:2:1 split.

use super::catalog::{Catalog, ItemId};
use super::session::Session;
use crate::error::{Error, Result};
use std::collections::BTreeMap;

pub const DEFAULT_MIN_ITEM_COUNT: usize = 5;

/// Occurrence count of every item over the given sessions.
pub fn item_counts(sessions: &[Session]) -> BTreeMap<ItemId, u64> {
    let mut counts = BTreeMap::new();
    for s in sessions {
        for &i in &s.items {
            *counts.entry(i).or_insert(0) += 1;
        }
    }
    counts
}

/// Remove unpopular items (global count below `min_item_count`, unless
/// `keep_unpopular`) and length-1 sessions, iterating to a fixed point:
/// dropping items can shorten sessions below 2 and dropping sessions can
/// push items under the threshold, so one pass is not enough.
///
/// The surviving catalog is re-indexed densely; returned sessions refer
/// to the new indices.
pub fn filter_corpus(
    sessions: &[Session],
    catalog: &Catalog,
    min_item_count: usize,
    keep_unpopular: bool,
) -> Result<(Vec<Session>, Catalog)> {
    if min_item_count < 1 {
        return Err(Error::Config("min_item_count must be at least 1".into()));
    }
    let mut sessions: Vec<Session> =
        sessions.iter().filter(|s| s.items.len() >= 2).cloned().collect();

    loop {
        let mut changed = false;
        if !keep_unpopular {
            let counts = item_counts(&sessions);
            let keep = |id: ItemId| counts.get(&id).copied().unwrap_or(0) >= min_item_count as u64;
            for s in sessions.iter_mut() {
                let before = s.items.len();
                s.items.retain(|&i| keep(i));
                changed |= s.items.len() != before;
            }
        }
        let before = sessions.len();
        sessions.retain(|s| s.items.len() >= 2);
        changed |= sessions.len() != before;
        if !changed {
            break;
        }
    }

    if sessions.is_empty() {
        return Err(Error::EmptyCorpus);
    }

    // Decide which catalog items survive, then compact indices.
    let counts = item_counts(&sessions);
    let mut remap: BTreeMap<ItemId, ItemId> = BTreeMap::new();
    let mut parts = Vec::new();
    for item in catalog.items() {
        let count = counts.get(&item.id).copied().unwrap_or(0);
        let retained = if keep_unpopular { true } else { count >= min_item_count as u64 };
        if retained {
            remap.insert(item.id, parts.len() as ItemId);
            parts.push((item.external_id.clone(), item.image.clone(), item.text.clone()));
        }
    }
    if parts.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let new_catalog = Catalog::from_parts(parts)?;
    for s in sessions.iter_mut() {
        for it in s.items.iter_mut() {
            *it = remap[it];
        }
    }
    Ok((sessions, new_catalog))
}

/// The chronological train/validation/test partition.
#[derive(Debug, Clone)]
pub struct DatasetSplit {
    pub train: Vec<Session>,
    pub validation: Vec<Session>,
    pub test: Vec<Session>,
}

/// Sort sessions by ascending timestamp (ties by session id) and cut at
/// the 70% and 90% boundaries.
pub fn chronological_split(sessions: &[Session]) -> Result<DatasetSplit> {
    let n = sessions.len();
    if n < 10 {
        return Err(Error::Split(format!(
            "need at least 10 sessions for a 7:2:1 split, got {n}"
        )));
    }
    let mut sorted = sessions.to_vec();
    sorted.sort_by(|a, b| {
        a.timestamp.cmp(&b.timestamp).then_with(|| a.session_id.cmp(&b.session_id))
    });
    let cut1 = n * 7 / 10;
    let cut2 = n * 9 / 10;
    let test = sorted.split_off(cut2);
    let validation = sorted.split_off(cut1);
    Ok(DatasetSplit { train: sorted, validation, test })
}
