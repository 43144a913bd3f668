//! Partitioning sessions or items into labeled strata for breakdowns by
//! session length or item popularity.

use super::catalog::ItemId;
use super::session::Session;
use crate::error::{Error, Result};
use std::collections::BTreeMap;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StratifyAxis {
    SessionLength,
    ItemPopularity,
}

impl std::str::FromStr for StratifyAxis {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "session_length" => Ok(StratifyAxis::SessionLength),
            "item_popularity" => Ok(StratifyAxis::ItemPopularity),
            other => Err(Error::Config(format!("unknown stratification axis {other:?}"))),
        }
    }
}

/// One stratum: half-open value range `(lo, hi]` and its members.
#[derive(Debug, Clone)]
pub struct Stratum<T> {
    pub label: String,
    pub lo: Option<u64>,
    pub hi: Option<u64>,
    pub members: Vec<T>,
}

impl<T> Stratum<T> {
    pub fn count(&self) -> usize {
        self.members.len()
    }
}

/// Partition elements by a per-element value against strictly increasing
/// boundaries: groups are `(-inf, b1], (b1, b2], ..., (bk, +inf)`.
pub fn partition_by_value<T>(
    elements: Vec<T>,
    values: &[u64],
    boundaries: &[u64],
) -> Result<Vec<Stratum<T>>> {
    if boundaries.is_empty() {
        return Err(Error::Config("stratification needs at least one boundary".into()));
    }
    if boundaries.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Config("boundaries must be strictly increasing".into()));
    }
    if elements.len() != values.len() {
        return Err(Error::Contract(format!(
            "{} elements but {} values",
            elements.len(),
            values.len()
        )));
    }
    let mut strata: Vec<Stratum<T>> = Vec::with_capacity(boundaries.len() + 1);
    for (gi, _) in boundaries.iter().enumerate() {
        let lo = if gi == 0 { None } else { Some(boundaries[gi - 1]) };
        let hi = Some(boundaries[gi]);
        let label = match lo {
            None => format!("<={}", boundaries[gi]),
            Some(l) => format!("{}<..<={}", l, boundaries[gi]),
        };
        strata.push(Stratum { label, lo, hi, members: Vec::new() });
    }
    strata.push(Stratum {
        label: format!(">{}", boundaries[boundaries.len() - 1]),
        lo: Some(boundaries[boundaries.len() - 1]),
        hi: None,
        members: Vec::new(),
    });

    for (el, &v) in elements.into_iter().zip(values) {
        let gi = boundaries.iter().position(|&b| v <= b).unwrap_or(boundaries.len());
        strata[gi].members.push(el);
    }
    Ok(strata)
}

/// Group sessions by their full length.
pub fn stratify_sessions_by_length(
    sessions: &[Session],
    boundaries: &[u64],
) -> Result<Vec<Stratum<Session>>> {
    let values: Vec<u64> = sessions.iter().map(|s| s.items.len() as u64).collect();
    partition_by_value(sessions.to_vec(), &values, boundaries)
}

/// Group sessions by the training-set frequency of their target item;
/// targets never seen in training count as zero and land in the lowest
/// stratum.
pub fn stratify_sessions_by_target_popularity(
    sessions: &[Session],
    train_counts: &BTreeMap<ItemId, u64>,
    boundaries: &[u64],
) -> Result<Vec<Stratum<Session>>> {
    let values: Vec<u64> = sessions
        .iter()
        .map(|s| {
            let (_, target) = s.split_label();
            train_counts.get(&target).copied().unwrap_or(0)
        })
        .collect();
    partition_by_value(sessions.to_vec(), &values, boundaries)
}

/// Group items by their own occurrence count.
pub fn stratify_items_by_popularity(
    items: &[ItemId],
    counts: &BTreeMap<ItemId, u64>,
    boundaries: &[u64],
) -> Result<Vec<Stratum<ItemId>>> {
    let values: Vec<u64> =
        items.iter().map(|i| counts.get(i).copied().unwrap_or(0)).collect();
    partition_by_value(items.to_vec(), &values, boundaries)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn session(id: &str, len: usize) -> Session {
        Session { session_id: id.to_string(), items: vec![0; len], timestamp: 0 }
    }

    #[test]
    fn lengths_split_at_boundary() {
        let sessions = vec![session("a", 2), session("b", 3), session("c", 6)];
        let strata = stratify_sessions_by_length(&sessions, &[5]).unwrap();
        assert_eq!(strata.len(), 2);
        assert_eq!(strata[0].label, "<=5");
        assert_eq!(strata[0].count(), 2);
        assert_eq!(strata[1].label, ">5");
        assert_eq!(strata[1].count(), 1);
        assert_eq!(strata[1].members[0].session_id, "c");
    }

    #[test]
    fn popularity_split_at_boundary() {
        let counts: BTreeMap<ItemId, u64> = [(0, 3), (1, 50)].into_iter().collect();
        let strata = stratify_items_by_popularity(&[0, 1], &counts, &[5]).unwrap();
        assert_eq!(strata[0].members, vec![0]);
        assert_eq!(strata[1].members, vec![1]);
    }

    #[test]
    fn degenerate_corpus_fills_one_group() {
        let sessions = vec![session("a", 3), session("b", 3), session("c", 3)];
        let strata = stratify_sessions_by_length(&sessions, &[2, 5]).unwrap();
        assert_eq!(strata.len(), 3);
        assert_eq!(strata[0].count(), 0);
        assert_eq!(strata[1].count(), 3);
        assert_eq!(strata[2].count(), 0);
    }

    #[test]
    fn every_element_lands_in_exactly_one_group() {
        let sessions: Vec<Session> =
            (0..50).map(|i| session(&format!("s{i}"), 2 + (i % 9))).collect();
        let strata = stratify_sessions_by_length(&sessions, &[3, 6]).unwrap();
        let total: usize = strata.iter().map(|s| s.count()).sum();
        assert_eq!(total, 50);
    }

    #[test]
    fn bad_boundaries_are_config_errors() {
        let sessions = vec![session("a", 2)];
        assert!(stratify_sessions_by_length(&sessions, &[]).is_err());
        assert!(stratify_sessions_by_length(&sessions, &[5, 5]).is_err());
        assert!(stratify_sessions_by_length(&sessions, &[5, 3]).is_err());
    }
}
