//! Synthetic benchmark generator: items partition into groups that drive
//! both feature generation (group-characteristic image patterns, group
//! token pools) and session transitions (Markov walks that stay within
//! the group with probability `p_stay`), with a power-law popularity skew
//! injecting long-tail structure.

use crate::data::{Catalog, ItemId, RasterImage, Session, TokenText};
use crate::error::{Error, Result};
use crate::rng::stream_rng;
use base64::Engine;
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::Normal;
use std::io::Write;
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SynthModalities {
    Both,
    ImageOnly,
    TextOnly,
}

impl std::str::FromStr for SynthModalities {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "both" => Ok(SynthModalities::Both),
            "image" => Ok(SynthModalities::ImageOnly),
            "text" => Ok(SynthModalities::TextOnly),
            other => Err(Error::Config(format!("unknown modality set {other:?}"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticSpec {
    pub n_items: usize,
    pub n_groups: usize,
    pub n_sessions: usize,
    pub session_len_min: usize,
    pub session_len_max: usize,
    pub p_stay: f64,
    pub zipf_exponent: f64,
    /// Fraction of the popularity ranking that rotates across the
    /// timeline. Popularity stays power-law at every instant, but items
    /// trend and fade the way live catalogs do, so the chronological test
    /// period queries items that were sparse during training.
    pub popularity_drift: f64,
    pub image_size: usize,
    pub text_len: usize,
    pub modalities: SynthModalities,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            n_items: 200,
            n_groups: 10,
            n_sessions: 5000,
            session_len_min: 3,
            session_len_max: 8,
            p_stay: 0.8,
            zipf_exponent: 1.2,
            popularity_drift: 0.0,
            image_size: 32,
            text_len: 20,
            modalities: SynthModalities::Both,
            seed: 0,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_groups == 0 || self.n_items == 0 {
            return Err(Error::Config("need at least one group and one item".into()));
        }
        if self.n_items % self.n_groups != 0 {
            return Err(Error::Config(format!(
                "{} items do not partition evenly into {} groups",
                self.n_items, self.n_groups
            )));
        }
        if self.session_len_min < 2 || self.session_len_max < self.session_len_min {
            return Err(Error::Config("session length range must satisfy 2 <= min <= max".into()));
        }
        if !(0.0..=1.0).contains(&self.p_stay) {
            return Err(Error::Config("p_stay must lie in [0, 1]".into()));
        }
        if !(0.0..=1.0).contains(&self.popularity_drift) {
            return Err(Error::Config("popularity_drift must lie in [0, 1]".into()));
        }
        if self.image_size < 8 {
            return Err(Error::Config("image_size must be at least 8".into()));
        }
        if self.text_len < 2 {
            return Err(Error::Config("text_len must be at least 2".into()));
        }
        Ok(())
    }
}

/// A smooth, horizontally symmetric per-group pattern: a mirrored 4x4
/// control grid per channel, bilinearly upsampled. Symmetry keeps the
/// flip augmentation close in feature space, the way product photos are.
fn group_template(group: usize, size: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let _ = group;
    let mut ctrl = [[[0.0f64; 4]; 4]; 3];
    for ch in ctrl.iter_mut() {
        for row in ch.iter_mut() {
            for x in 0..2 {
                let v = rng.random_range(48.0..208.0);
                row[x] = v;
                row[3 - x] = v;
            }
        }
    }
    let mut out = vec![0.0; size * size * 3];
    let scale = 3.0 / (size - 1) as f64;
    for y in 0..size {
        let fy = y as f64 * scale;
        let (y0, ty) = (fy.floor() as usize, fy.fract());
        let y1 = (y0 + 1).min(3);
        for x in 0..size {
            let fx = x as f64 * scale;
            let (x0, tx) = (fx.floor() as usize, fx.fract());
            let x1 = (x0 + 1).min(3);
            for c in 0..3 {
                let g = &ctrl[c];
                let top = g[y0][x0] * (1.0 - tx) + g[y0][x1] * tx;
                let bot = g[y1][x0] * (1.0 - tx) + g[y1][x1] * tx;
                out[(y * size + x) * 3 + c] = top * (1.0 - ty) + bot * ty;
            }
        }
    }
    out
}

/// Per-item latent position inside its group, in [0.2, 0.8]^2. It shows
/// up in the item's assets (highlight placement, token mix) and steers
/// within-group transitions toward feature-similar items, so features
/// carry information a sparse ID co-occurrence table cannot.
type Latent = (f64, f64);

fn item_image(
    template: &[f64],
    size: usize,
    latent: Latent,
    rng: &mut ChaCha8Rng,
) -> RasterImage {
    // Per-item identity on top of the group template: a brightness shift,
    // a smooth highlight patch at the latent position, and pixel noise.
    // Items of one group stay mutually closer than cross-group pairs
    // while remaining individually distinguishable in feature space.
    let noise = Normal::new(0.0, 10.0).expect("positive sigma");
    let shift: f64 = rng.random_range(-20.0..20.0);
    let cx = latent.0 * size as f64;
    let cy = latent.1 * size as f64;
    let amp: f64 = if rng.random_range(0.0..1.0) < 0.5 { 45.0 } else { -45.0 };
    let radius = size as f64 * 0.35;
    let mut pixels = Vec::with_capacity(size * size * 3);
    for y in 0..size {
        for x in 0..size {
            let dist2 = ((x as f64 - cx).powi(2) + (y as f64 - cy).powi(2)) / (radius * radius);
            let highlight = amp * (-dist2).exp();
            for c in 0..3 {
                let v = template[(y * size + x) * 3 + c] + shift + highlight + noise.sample(rng);
                pixels.push(v.round().clamp(0.0, 255.0) as u8);
            }
        }
    }
    RasterImage::new(size, size, 3, pixels).expect("dims are consistent")
}

fn item_text(
    text_len: usize,
    latent: Latent,
    group_pool: &[String],
    shared_pool: &[String],
    rng: &mut ChaCha8Rng,
) -> TokenText {
    // The group pool splits into two halves; the latent x coordinate sets
    // the mixing ratio, so latent-similar items share vocabulary.
    let n_shared = (text_len as f64 * 0.2).round() as usize;
    let n_group = text_len - n_shared;
    let half = group_pool.len() / 2;
    let p_first = (latent.0 - 0.2) / 0.6;
    let mut tokens = Vec::with_capacity(text_len);
    for _ in 0..n_group {
        let pool = if rng.random_range(0.0..1.0) < p_first {
            &group_pool[..half]
        } else {
            &group_pool[half..]
        };
        tokens.push(pool[rng.random_range(0..pool.len())].clone());
    }
    for _ in 0..n_shared {
        tokens.push(shared_pool[rng.random_range(0..shared_pool.len())].clone());
    }
    tokens.shuffle(rng);
    TokenText { tokens }
}

/// Generated corpus plus the ground-truth group labels and the
/// start-of-timeline popularity weights (handy for tests; not part of
/// the serialized artifacts).
#[derive(Debug, Clone)]
pub struct SyntheticCorpus {
    pub catalog: Catalog,
    pub sessions: Vec<Session>,
    pub group_of: Vec<usize>,
    pub popularity_weight: Vec<f64>,
}

pub fn generate(spec: &SyntheticSpec) -> Result<SyntheticCorpus> {
    spec.validate()?;
    let per_group = spec.n_items / spec.n_groups;
    let group_of: Vec<usize> = (0..spec.n_items).map(|i| i / per_group).collect();

    // Popularity: a seeded shuffle assigns ranks, weight = (rank+1)^-s.
    let mut rank_rng = stream_rng(spec.seed, "synth-popularity", &[]);
    let mut ranks: Vec<usize> = (0..spec.n_items).collect();
    ranks.shuffle(&mut rank_rng);
    let mut popularity_weight = vec![0.0; spec.n_items];
    for (item, &rank) in ranks.iter().enumerate() {
        popularity_weight[item] = 1.0 / ((rank + 1) as f64).powf(spec.zipf_exponent);
    }

    // Token pools.
    let shared_pool: Vec<String> = (0..40).map(|k| format!("common{k:02}")).collect();
    let group_pools: Vec<Vec<String>> = (0..spec.n_groups)
        .map(|g| (0..30).map(|k| format!("g{g:02}w{k:02}")).collect())
        .collect();

    // Items.
    let mut feat_rng = stream_rng(spec.seed, "synth-features", &[]);
    let templates: Vec<Vec<f64>> = (0..spec.n_groups)
        .map(|g| group_template(g, spec.image_size, &mut feat_rng))
        .collect();
    let mut parts = Vec::with_capacity(spec.n_items);
    let mut latents: Vec<Latent> = Vec::with_capacity(spec.n_items);
    for item in 0..spec.n_items {
        let g = group_of[item];
        let latent: Latent =
            (feat_rng.random_range(0.2..0.8), feat_rng.random_range(0.2..0.8));
        latents.push(latent);
        let image = match spec.modalities {
            SynthModalities::Both | SynthModalities::ImageOnly => Some(item_image(
                &templates[g],
                spec.image_size,
                latent,
                &mut feat_rng,
            )),
            SynthModalities::TextOnly => None,
        };
        let text = match spec.modalities {
            SynthModalities::Both | SynthModalities::TextOnly => Some(item_text(
                spec.text_len,
                latent,
                &group_pools[g],
                &shared_pool,
                &mut feat_rng,
            )),
            SynthModalities::ImageOnly => None,
        };
        parts.push((format!("item{item:04}"), image, text));
    }
    let catalog = Catalog::from_parts(parts)?;

    // Sessions: popularity-weighted Markov walks over groups. Popularity
    // rotates through the ranking as the timeline advances (piecewise
    // stationary over blocks), so a chronological split faces items whose
    // training exposure understates their test-time demand.
    let group_members: Vec<Vec<ItemId>> = (0..spec.n_groups)
        .map(|g| {
            (0..spec.n_items)
                .filter(|&i| group_of[i] == g)
                .map(|i| i as ItemId)
                .collect()
        })
        .collect();
    let n_blocks = 20usize.min(spec.n_sessions.max(1));
    let block_size = spec.n_sessions.div_ceil(n_blocks).max(1);
    // Drift rotates popularity within each group: the group-level mass and
    // the global power-law profile stay put, but which members carry the
    // head ranks changes over the timeline, so late (test-period) demand
    // lands on items that were cold during the training period.
    let weights_at = |block: usize| -> Vec<f64> {
        let progress = if n_blocks <= 1 { 0.0 } else { block as f64 / (n_blocks - 1) as f64 };
        let mut weights = vec![0.0; spec.n_items];
        for members in &group_members {
            let base: Vec<f64> = members
                .iter()
                .map(|&m| 1.0 / ((ranks[m as usize] + 1) as f64).powf(spec.zipf_exponent))
                .collect();
            let shift = (spec.popularity_drift * progress * members.len() as f64).round()
                as usize
                % members.len();
            for (p, &m) in members.iter().enumerate() {
                weights[m as usize] = base[(p + shift) % members.len()];
            }
        }
        weights
    };

    let mut walk_rng = stream_rng(spec.seed, "synth-sessions", &[]);
    let mut sessions = Vec::with_capacity(spec.n_sessions);
    let mut current_block = usize::MAX;
    let mut global_dist: Option<WeightedIndex<f64>> = None;
    let mut block_weights: Vec<f64> = Vec::new();
    for si in 0..spec.n_sessions {
        let block = si / block_size;
        if block != current_block {
            current_block = block;
            block_weights = weights_at(block);
            global_dist = Some(
                WeightedIndex::new(&block_weights)
                    .map_err(|e| Error::Config(format!("bad popularity weights: {e}")))?,
            );
        }
        let len = walk_rng.random_range(spec.session_len_min..=spec.session_len_max);
        let mut items = Vec::with_capacity(len);
        let mut current =
            global_dist.as_ref().expect("built above").sample(&mut walk_rng) as ItemId;
        items.push(current);
        for _ in 1..len {
            let g = group_of[current as usize];
            // Escapes follow a fixed ring over groups, so the escape mass
            // is predictable structure rather than irreducible noise.
            let next_group = if walk_rng.random_range(0.0..1.0) < spec.p_stay
                || spec.n_groups == 1
            {
                g
            } else {
                (g + 1) % spec.n_groups
            };
            // Within the group, users prefer items whose assets look like
            // what they just interacted with: popularity times latent
            // proximity.
            let (lx, ly) = latents[current as usize];
            let members = &group_members[next_group];
            let mut cumulative = Vec::with_capacity(members.len());
            let mut total = 0.0;
            for &m in members {
                let (mx, my) = latents[m as usize];
                let d2 = (mx - lx) * (mx - lx) + (my - ly) * (my - ly);
                let w = block_weights[m as usize] * (-d2 / (2.0 * 0.15 * 0.15)).exp();
                total += w;
                cumulative.push(total);
            }
            let draw = walk_rng.random_range(0.0..total);
            let pick = cumulative.partition_point(|&c| c <= draw).min(members.len() - 1);
            current = members[pick];
            items.push(current);
        }
        sessions.push(Session {
            session_id: format!("s{si:06}"),
            items,
            timestamp: 1_000_000 + si as i64,
        });
    }

    Ok(SyntheticCorpus { catalog, sessions, group_of, popularity_weight })
}

/// Serialize the corpus as `catalog.jsonl` (inline base64 images) and
/// `sessions.jsonl` under `dir`.
pub fn write_jsonl(corpus: &SyntheticCorpus, dir: &Path) -> Result<(PathBuf, PathBuf)> {
    std::fs::create_dir_all(dir)?;
    let catalog_path = dir.join("catalog.jsonl");
    let mut cf = std::io::BufWriter::new(std::fs::File::create(&catalog_path)?);
    for item in corpus.catalog.items() {
        let mut obj = serde_json::Map::new();
        obj.insert("item_id".into(), item.external_id.clone().into());
        if let Some(img) = &item.image {
            let b64 = base64::engine::general_purpose::STANDARD.encode(img.to_pnm_bytes());
            obj.insert("image_b64".into(), b64.into());
        }
        if let Some(txt) = &item.text {
            obj.insert("text".into(), txt.to_line().into());
        }
        writeln!(cf, "{}", serde_json::Value::Object(obj))?;
    }
    drop(cf);

    let sessions_path = dir.join("sessions.jsonl");
    let mut sf = std::io::BufWriter::new(std::fs::File::create(&sessions_path)?);
    for s in &corpus.sessions {
        let items: Vec<String> = s
            .items
            .iter()
            .map(|&i| corpus.catalog.get(i).expect("generated id resolves").external_id.clone())
            .collect();
        let line = serde_json::json!({
            "session_id": s.session_id,
            "items": items,
            "ts": s.timestamp,
        });
        writeln!(sf, "{line}")?;
    }
    Ok((catalog_path, sessions_path))
}
