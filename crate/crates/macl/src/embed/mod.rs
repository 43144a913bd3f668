//! Per-item representations: ID embedding table initialization and the
//! image/text feature pathway (extract, optionally import precomputed
//! features, reduce to d dimensions, cache anchors).

mod extract;
mod pca;

pub use extract::{
    read_features, toy_image_extract, write_features, FeatureKind, TextExtractor, IMAGE_GRID,
    IMAGE_NATIVE_DIM,
};
pub use pca::{fit_projector, symmetric_eigen, Projector, ProjectorMode};

use crate::autodiff::{Shape, Tensor};
use crate::data::{Catalog, ItemId, RasterImage, TokenText};
use crate::error::{Error, Result};
use crate::rng::stream_rng;
use rand::Rng;
use std::collections::BTreeMap;

/// Default native feature length of the hashed bag-of-tokens extractor.
pub const DEFAULT_TEXT_NATIVE_DIM: usize = 256;

/// ID embedding table: `n + 1` rows of size d, row 0 reserved for padding
/// and frozen at zero. Initialization is uniform in `[-1/sqrt(d), 1/sqrt(d)]`.
pub fn init_id_table(n_items: usize, d: usize, seed: u64) -> Tensor {
    let mut rng = stream_rng(seed, "init-id-table", &[]);
    let bound = 1.0 / (d as f64).sqrt();
    let mut values = vec![0.0; (n_items + 1) * d];
    for v in values.iter_mut().skip(d) {
        *v = rng.random_range(-bound..bound);
    }
    Tensor::from_vec(Shape::Matrix(n_items + 1, d), values)
        .expect("table shape is consistent by construction")
        .trainable()
}

/// The frozen feature pathway for one modality: projector plus cached
/// projected anchor embeddings per item.
#[derive(Debug, Clone)]
pub struct ModalitySpace {
    pub projector: Projector,
    anchors: Vec<Option<Vec<f64>>>,
    /// Items whose native features came from a raw asset (augmentable)
    /// rather than an imported feature file.
    from_asset: Vec<bool>,
}

impl ModalitySpace {
    pub fn anchor(&self, id: ItemId) -> Option<&[f64]> {
        self.anchors.get(id as usize).and_then(|a| a.as_deref())
    }
}

/// Everything needed to turn raw item assets into d-dimensional constant
/// embeddings: the stand-in extractors, fitted projectors, and anchor
/// caches. Built once per run; deterministic given (catalog, seed).
#[derive(Debug, Clone)]
pub struct FeatureSpace {
    pub d: usize,
    pub text_extractor: TextExtractor,
    pub image: Option<ModalitySpace>,
    pub text: Option<ModalitySpace>,
}

impl FeatureSpace {
    /// Extract (or import) native features for every item, fit one
    /// projector per modality on the full catalog, and cache projected
    /// anchors. Catalogs without a modality simply skip it.
    pub fn build(
        catalog: &Catalog,
        d: usize,
        mode: ProjectorMode,
        seed: u64,
        text_native_dim: usize,
        imported_image: Option<&BTreeMap<ItemId, Vec<f64>>>,
        imported_text: Option<&BTreeMap<ItemId, Vec<f64>>>,
    ) -> Result<FeatureSpace> {
        Self::assemble(
            catalog,
            d,
            TextExtractor::new(text_native_dim, seed),
            Projectors::Fit { mode, seed },
            imported_image,
            imported_text,
        )
    }

    /// Rebuild a feature space around already-fitted projectors (loaded
    /// from a checkpoint). Anchors are recomputed from the catalog assets
    /// and projected identically to training time.
    pub fn with_projectors(
        catalog: &Catalog,
        d: usize,
        text_extractor: TextExtractor,
        image_projector: Option<Projector>,
        text_projector: Option<Projector>,
        imported_image: Option<&BTreeMap<ItemId, Vec<f64>>>,
        imported_text: Option<&BTreeMap<ItemId, Vec<f64>>>,
    ) -> Result<FeatureSpace> {
        Self::assemble(
            catalog,
            d,
            text_extractor,
            Projectors::Given { image: image_projector, text: text_projector },
            imported_image,
            imported_text,
        )
    }

    fn assemble(
        catalog: &Catalog,
        d: usize,
        text_extractor: TextExtractor,
        projectors: Projectors,
        imported_image: Option<&BTreeMap<ItemId, Vec<f64>>>,
        imported_text: Option<&BTreeMap<ItemId, Vec<f64>>>,
    ) -> Result<FeatureSpace> {
        let n = catalog.len();

        let mut image_native: Vec<Option<Vec<f64>>> = vec![None; n];
        let mut image_from_asset = vec![false; n];
        let mut text_native: Vec<Option<Vec<f64>>> = vec![None; n];
        let mut text_from_asset = vec![false; n];

        for item in catalog.items() {
            let i = item.id as usize;
            if let Some(v) = imported_image.and_then(|m| m.get(&item.id)) {
                image_native[i] = Some(v.clone());
            } else if let Some(img) = &item.image {
                image_native[i] = Some(toy_image_extract(img)?);
                image_from_asset[i] = true;
            }
            if let Some(v) = imported_text.and_then(|m| m.get(&item.id)) {
                text_native[i] = Some(v.clone());
            } else if let Some(txt) = &item.text {
                text_native[i] = Some(text_extractor.extract(txt)?);
                text_from_asset[i] = true;
            }
        }

        let build_space = |native: Vec<Option<Vec<f64>>>,
                           from_asset: Vec<bool>,
                           given: Option<Projector>,
                           stream: &str|
         -> Result<Option<ModalitySpace>> {
            let present: Vec<Vec<f64>> =
                native.iter().flatten().cloned().collect();
            if present.is_empty() {
                return Ok(None);
            }
            let projector = match (&projectors, given) {
                (Projectors::Fit { mode, seed }, _) => {
                    fit_projector(&present, *mode, d, stream_seed_of(*seed, stream))?
                }
                (Projectors::Given { .. }, Some(p)) => {
                    if p.d != d {
                        return Err(Error::IncompatibleCheckpoint(format!(
                            "{stream} projector outputs d = {}, expected {d}",
                            p.d
                        )));
                    }
                    p
                }
                (Projectors::Given { .. }, None) => {
                    return Err(Error::IncompatibleCheckpoint(format!(
                        "catalog carries {stream} features but the checkpoint has no projector for them"
                    )));
                }
            };
            let mut anchors = Vec::with_capacity(native.len());
            for nat in &native {
                anchors.push(match nat {
                    Some(v) => Some(unit_normalize(projector.project(v)?)),
                    None => None,
                });
            }
            Ok(Some(ModalitySpace { projector, anchors, from_asset }))
        };

        let (given_image, given_text) = match &projectors {
            Projectors::Fit { .. } => (None, None),
            Projectors::Given { image, text } => (image.clone(), text.clone()),
        };
        Ok(FeatureSpace {
            d,
            text_extractor,
            image: build_space(image_native, image_from_asset, given_image, "projector-image")?,
            text: build_space(text_native, text_from_asset, given_text, "projector-text")?,
        })
    }

    /// Projected anchor image embedding of an item.
    pub fn img_embed(&self, id: ItemId) -> Result<&[f64]> {
        self.image
            .as_ref()
            .and_then(|s| s.anchor(id))
            .ok_or(Error::ModalityAbsent { item: id, modality: "image" })
    }

    /// Projected anchor text embedding of an item.
    pub fn txt_embed(&self, id: ItemId) -> Result<&[f64]> {
        self.text
            .as_ref()
            .and_then(|s| s.anchor(id))
            .ok_or(Error::ModalityAbsent { item: id, modality: "text" })
    }

    /// Whether the item's image can be augmented (raw asset available).
    pub fn image_augmentable(&self, catalog: &Catalog, id: ItemId) -> bool {
        self.image
            .as_ref()
            .map(|s| s.from_asset.get(id as usize).copied().unwrap_or(false))
            .unwrap_or(false)
            && catalog.get(id).map(|i| i.image.is_some()).unwrap_or(false)
    }

    /// Whether the item's text can be augmented (raw asset available).
    pub fn text_augmentable(&self, catalog: &Catalog, id: ItemId) -> bool {
        self.text
            .as_ref()
            .map(|s| s.from_asset.get(id as usize).copied().unwrap_or(false))
            .unwrap_or(false)
            && catalog.get(id).map(|i| i.text.is_some()).unwrap_or(false)
    }

    /// Embed an augmented image view: extract, project, normalize.
    pub fn embed_image_view(&self, img: &RasterImage) -> Result<Vec<f64>> {
        let space = self
            .image
            .as_ref()
            .ok_or_else(|| Error::Contract("no image pathway in this feature space".into()))?;
        Ok(unit_normalize(space.projector.project(&toy_image_extract(img)?)?))
    }

    /// Embed an augmented text view: extract, project, normalize.
    pub fn embed_text_view(&self, txt: &TokenText) -> Result<Vec<f64>> {
        let space = self
            .text
            .as_ref()
            .ok_or_else(|| Error::Contract("no text pathway in this feature space".into()))?;
        Ok(unit_normalize(space.projector.project(&self.text_extractor.extract(txt)?)?))
    }
}

/// Projected feature embeddings are L2-normalized: the pretrained-encoder
/// stand-ins produce arbitrary scales, and the fusion gates and inner-
/// product logits need O(1) inputs. Near-zero vectors stay as they are.
pub fn unit_normalize(mut v: Vec<f64>) -> Vec<f64> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 1e-12 {
        for x in v.iter_mut() {
            *x /= norm;
        }
    }
    v
}

enum Projectors {
    Fit { mode: ProjectorMode, seed: u64 },
    Given { image: Option<Projector>, text: Option<Projector> },
}

fn stream_seed_of(seed: u64, name: &str) -> u64 {
    crate::rng::stream_seed(seed, name, &[])
}
