//! Item catalogs: JSON-Lines ingestion, dense re-indexing, id-map
//! persistence.

use super::image::RasterImage;
use super::text::TokenText;
use crate::error::{Error, Result};
use base64::Engine;
use serde::Deserialize;
use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

/// Dense 0-based catalog index, assigned in ingestion order.
pub type ItemId = u32;

/// Reserved sequence-padding slot. Slot `i + 1` belongs to item `i`.
pub const PADDING_SLOT: u32 = 0;

#[inline]
pub fn slot_of(id: ItemId) -> u32 {
    id + 1
}

#[inline]
pub fn item_of_slot(slot: u32) -> Option<ItemId> {
    slot.checked_sub(1)
}

/// A catalog entry. Items may carry an image, a text, both, or neither
/// (ID-only items never participate in feature fusion or augmentation).
#[derive(Debug, Clone)]
pub struct Item {
    pub id: ItemId,
    pub external_id: String,
    pub image: Option<RasterImage>,
    pub text: Option<TokenText>,
}

impl Item {
    pub fn id_only(&self) -> bool {
        self.image.is_none() && self.text.is_none()
    }
}

#[derive(Debug, Clone, Default)]
pub struct Catalog {
    items: Vec<Item>,
    index: BTreeMap<String, ItemId>,
}

#[derive(Deserialize)]
struct CatalogLine {
    item_id: String,
    image_path: Option<String>,
    image_b64: Option<String>,
    text: Option<String>,
}

impl Catalog {
    pub fn from_parts(
        parts: impl IntoIterator<Item = (String, Option<RasterImage>, Option<TokenText>)>,
    ) -> Result<Catalog> {
        let mut cat = Catalog::default();
        for (ext, image, text) in parts {
            cat.push(ext, image, text, None)?;
        }
        Ok(cat)
    }

    fn push(
        &mut self,
        external_id: String,
        image: Option<RasterImage>,
        text: Option<TokenText>,
        line: Option<usize>,
    ) -> Result<ItemId> {
        if let Some(&prev) = self.index.get(&external_id) {
            return Err(Error::DuplicateId {
                id: external_id,
                first_line: prev as usize + 1,
                second_line: line.unwrap_or(self.items.len() + 1),
            });
        }
        let id = self.items.len() as ItemId;
        self.index.insert(external_id.clone(), id);
        self.items.push(Item { id, external_id, image, text });
        Ok(id)
    }

    /// Load a `catalog.jsonl` file: one JSON object per line with fields
    /// `item_id`, optional `image_path` (PGM/PPM, relative to the catalog
    /// file) or `image_b64` (base64 of the same container), optional
    /// `text`. Dense ids follow line order.
    pub fn load_jsonl(path: &Path) -> Result<Catalog> {
        let file = std::fs::File::open(path)
            .map_err(|e| Error::Ingest(format!("cannot open {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        let mut cat = Catalog::default();
        let mut line_of: BTreeMap<String, usize> = BTreeMap::new();
        for (lineno, line) in BufReader::new(file).lines().enumerate() {
            let lineno = lineno + 1;
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: CatalogLine = serde_json::from_str(&line)
                .map_err(|e| Error::Ingest(format!("line {lineno}: {e}")))?;
            if let Some(&first) = line_of.get(&rec.item_id) {
                return Err(Error::DuplicateId {
                    id: rec.item_id,
                    first_line: first,
                    second_line: lineno,
                });
            }
            line_of.insert(rec.item_id.clone(), lineno);
            let image = match (&rec.image_path, &rec.image_b64) {
                (Some(p), _) => Some(RasterImage::read_pnm(&base.join(p)).map_err(|e| {
                    Error::Ingest(format!("line {lineno}: unreadable image {p:?}: {e}"))
                })?),
                (None, Some(b64)) => {
                    let bytes = base64::engine::general_purpose::STANDARD
                        .decode(b64)
                        .map_err(|e| Error::Ingest(format!("line {lineno}: bad base64: {e}")))?;
                    Some(RasterImage::from_pnm_bytes(&bytes).map_err(|e| {
                        Error::Ingest(format!("line {lineno}: unreadable inline image: {e}"))
                    })?)
                }
                (None, None) => None,
            };
            let text = rec.text.as_deref().and_then(TokenText::tokenize);
            cat.push(rec.item_id, image, text, Some(lineno))?;
        }
        Ok(cat)
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn get(&self, id: ItemId) -> Option<&Item> {
        self.items.get(id as usize)
    }

    pub fn by_external(&self, external_id: &str) -> Option<&Item> {
        self.index.get(external_id).map(|&id| &self.items[id as usize])
    }

    pub fn items(&self) -> &[Item] {
        &self.items
    }

    /// Sorted union of all text tokens in the catalog.
    pub fn vocabulary(&self) -> Vec<String> {
        let mut vocab = std::collections::BTreeSet::new();
        for item in &self.items {
            if let Some(t) = &item.text {
                for tok in &t.tokens {
                    vocab.insert(tok.clone());
                }
            }
        }
        vocab.into_iter().collect()
    }

    /// Persist the external-id to dense-index mapping as CSV.
    pub fn write_id_map(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path)?;
        writeln!(f, "external_id,dense_index")?;
        for item in &self.items {
            writeln!(f, "{},{}", item.external_id, item.id)?;
        }
        Ok(())
    }

    pub fn read_id_map(path: &Path) -> Result<Vec<(String, ItemId)>> {
        let content = std::fs::read_to_string(path)?;
        let mut lines = content.lines();
        match lines.next() {
            Some("external_id,dense_index") => {}
            other => {
                return Err(Error::Format(format!("bad id_map header: {other:?}")));
            }
        }
        let mut out = Vec::new();
        for (i, line) in lines.enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let (ext, idx) = line
                .rsplit_once(',')
                .ok_or_else(|| Error::Format(format!("id_map line {}: no comma", i + 2)))?;
            let idx: ItemId = idx
                .parse()
                .map_err(|_| Error::Format(format!("id_map line {}: bad index", i + 2)))?;
            out.push((ext.to_string(), idx));
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_lines(dir: &Path, name: &str, lines: &[&str]) -> std::path::PathBuf {
        let p = dir.join(name);
        let mut f = std::fs::File::create(&p).unwrap();
        for l in lines {
            writeln!(f, "{l}").unwrap();
        }
        p
    }

    #[test]
    fn load_assigns_dense_ids_in_line_order() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_lines(
            dir.path(),
            "catalog.jsonl",
            &[
                r#"{"item_id": "b07", "text": "Red Phone Case"}"#,
                r#"{"item_id": "b08", "text": "usb hub"}"#,
                r#"{"item_id": "b09"}"#,
            ],
        );
        let cat = Catalog::load_jsonl(&p).unwrap();
        assert_eq!(cat.len(), 3);
        let ids: Vec<ItemId> = cat.items().iter().map(|i| i.id).collect();
        assert_eq!(ids, vec![0, 1, 2]);
        assert_eq!(cat.by_external("b08").unwrap().id, 1);
        assert_eq!(
            cat.get(0).unwrap().text.as_ref().unwrap().tokens,
            vec!["red", "phone", "case"]
        );
        assert!(cat.get(2).unwrap().id_only());
    }

    #[test]
    fn duplicate_external_id_cites_both_lines() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_lines(
            dir.path(),
            "catalog.jsonl",
            &[
                r#"{"item_id": "x"}"#,
                r#"{"item_id": "y"}"#,
                r#"{"item_id": "x"}"#,
            ],
        );
        let err = Catalog::load_jsonl(&p).unwrap_err().to_string();
        assert!(err.contains("lines 1 and 3"), "{err}");
    }

    #[test]
    fn unreadable_image_names_the_line() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_lines(
            dir.path(),
            "catalog.jsonl",
            &[r#"{"item_id": "x", "image_path": "missing.pgm"}"#],
        );
        let err = Catalog::load_jsonl(&p).unwrap_err().to_string();
        assert!(err.contains("line 1"), "{err}");
    }

    #[test]
    fn inline_base64_image_round_trips() {
        let img = RasterImage::new(4, 4, 1, (0..16).collect()).unwrap();
        let b64 = base64::engine::general_purpose::STANDARD.encode(img.to_pnm_bytes());
        let dir = tempfile::tempdir().unwrap();
        let line = format!(r#"{{"item_id": "x", "image_b64": "{b64}"}}"#);
        let p = write_lines(dir.path(), "catalog.jsonl", &[&line]);
        let cat = Catalog::load_jsonl(&p).unwrap();
        assert_eq!(cat.get(0).unwrap().image.as_ref().unwrap(), &img);
    }

    #[test]
    fn id_map_round_trips() {
        let cat = Catalog::from_parts([
            ("alpha".to_string(), None, None),
            ("beta".to_string(), None, None),
        ])
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("id_map.csv");
        cat.write_id_map(&p).unwrap();
        let map = Catalog::read_id_map(&p).unwrap();
        assert_eq!(map, vec![("alpha".to_string(), 0), ("beta".to_string(), 1)]);
    }
}
