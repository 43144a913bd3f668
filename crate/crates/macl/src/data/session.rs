//! Interaction sessions and the `sessions.jsonl` container.

use super::catalog::{Catalog, ItemId};
use crate::error::{Error, Result};
use serde::Deserialize;
use std::io::{BufRead, BufReader};
use std::path::Path;

/// An ordered interaction sequence. During training and evaluation the
/// last item is the prediction target, the rest is the model input.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Session {
    pub session_id: String,
    pub items: Vec<ItemId>,
    pub timestamp: i64,
}

impl Session {
    /// (input prefix, ground-truth label) per the last-item protocol.
    pub fn split_label(&self) -> (&[ItemId], ItemId) {
        let n = self.items.len();
        (&self.items[..n - 1], self.items[n - 1])
    }
}

#[derive(Deserialize)]
struct SessionLine {
    session_id: String,
    items: Vec<String>,
    ts: i64,
}

/// Load `sessions.jsonl`, resolving external item ids through the catalog.
pub fn load_sessions_jsonl(path: &Path, catalog: &Catalog) -> Result<Vec<Session>> {
    let file = std::fs::File::open(path)
        .map_err(|e| Error::Ingest(format!("cannot open {}: {e}", path.display())))?;
    let mut out = Vec::new();
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let lineno = lineno + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: SessionLine = serde_json::from_str(&line)
            .map_err(|e| Error::Ingest(format!("line {lineno}: {e}")))?;
        if rec.items.is_empty() {
            return Err(Error::Ingest(format!("line {lineno}: session has no items")));
        }
        let mut items = Vec::with_capacity(rec.items.len());
        for ext in &rec.items {
            let item = catalog.by_external(ext).ok_or_else(|| {
                Error::Ingest(format!("line {lineno}: unknown item {ext:?}"))
            })?;
            items.push(item.id);
        }
        out.push(Session { session_id: rec.session_id, items, timestamp: rec.ts });
    }
    Ok(out)
}
