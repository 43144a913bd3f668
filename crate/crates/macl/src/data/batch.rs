//! Mini-batch assembly: truncation to the most recent items, left
//! padding, seed-deterministic shuffling.

use super::catalog::{slot_of, PADDING_SLOT};
use super::session::Session;
use crate::error::{Error, Result};
use crate::rng::stream_rng;
use rand::seq::SliceRandom;

/// A batch of (input prefix, label) pairs in embedding-slot space:
/// slot 0 is padding, slot i+1 is item i.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Batch {
    /// Left-padded prefixes, each exactly `max_len` slots.
    pub inputs: Vec<Vec<u32>>,
    /// True (post-truncation) prefix lengths.
    pub lengths: Vec<usize>,
    /// Ground-truth labels, never the padding slot.
    pub labels: Vec<u32>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// The non-padding slots of prefix `i`, oldest first.
    pub fn true_prefix(&self, i: usize) -> &[u32] {
        let l = self.lengths[i];
        let row = &self.inputs[i];
        &row[row.len() - l..]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BatchMode {
    /// Shuffle seed-deterministically; drop the final short batch.
    Train,
    /// Keep session order; keep the final short batch.
    Eval,
}

pub fn make_batches(
    sessions: &[Session],
    batch_size: usize,
    max_len: usize,
    seed: u64,
    mode: BatchMode,
) -> Result<Vec<Batch>> {
    if batch_size < 2 {
        return Err(Error::Config(format!(
            "batch size must be at least 2 for in-batch negatives, got {batch_size}"
        )));
    }
    if max_len == 0 {
        return Err(Error::Config("max_len must be positive".into()));
    }
    let mut order: Vec<usize> = (0..sessions.len()).collect();
    if mode == BatchMode::Train {
        let mut rng = stream_rng(seed, "batch-shuffle", &[]);
        order.shuffle(&mut rng);
    }

    let mut batches = Vec::new();
    for chunk in order.chunks(batch_size) {
        if mode == BatchMode::Train && chunk.len() < batch_size {
            break;
        }
        let mut batch = Batch {
            inputs: Vec::with_capacity(chunk.len()),
            lengths: Vec::with_capacity(chunk.len()),
            labels: Vec::with_capacity(chunk.len()),
        };
        for &si in chunk {
            let s = &sessions[si];
            if s.items.len() < 2 {
                return Err(Error::Contract(format!(
                    "session {} has length {}, expected >= 2 after filtering",
                    s.session_id,
                    s.items.len()
                )));
            }
            let (prefix, label) = s.split_label();
            let keep = prefix.len().min(max_len);
            let recent = &prefix[prefix.len() - keep..];
            let mut row = vec![PADDING_SLOT; max_len - keep];
            row.extend(recent.iter().map(|&i| slot_of(i)));
            batch.inputs.push(row);
            batch.lengths.push(keep);
            batch.labels.push(slot_of(label));
        }
        batches.push(batch);
    }
    Ok(batches)
}
