//! Training configuration: a flat key=value file holding exactly the
//! tunable surface of the trainer. Unknown keys are hard errors; a typo
//! in a hyperparameter must never pass silently.

use crate::augment::{AugmentParams, SessionNegativeMode};
use crate::embed::ProjectorMode;
use crate::error::{Error, Result};
use crate::loss::CeMode;
use crate::model::ModelDims;
use std::path::Path;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub d: usize,
    pub lambda: f64,
    pub m_negatives: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub seed: u64,
    pub max_len: usize,
    pub temperature: f64,
    pub k_list: Vec<usize>,
    pub n_heads: usize,
    pub n_blocks: usize,
    pub d_ff_multiple: usize,
    pub dropout: f64,
    pub min_item_count: usize,
    pub keep_unpopular: bool,
    pub no_item_cl: bool,
    pub no_sess_cl: bool,
    pub no_adaptive: bool,
    pub legacy_aug: bool,
    /// Pin each item's negative set across steps instead of re-sampling.
    pub fixed_negatives: bool,
    pub ce_mode: CeMode,
    pub session_negative_mode: SessionNegativeMode,
    pub patience: usize,
    pub exclude_seen: bool,
    pub projector: ProjectorMode,
    pub text_native_dim: usize,
    pub crop_ratio: f64,
    pub noise_ratio: f64,
    pub blur_sigma: f64,
    pub pool_size: usize,
    pub swap_ratio: f64,
    pub delete_ratio: f64,
    pub substitute_ratio: f64,
    pub insert_ratio: f64,
    pub neighbor_k: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let aug = AugmentParams::default();
        TrainConfig {
            d: 100,
            lambda: 0.01,
            m_negatives: 100,
            batch_size: 100,
            learning_rate: 0.001,
            epochs: 30,
            seed: 0,
            max_len: 50,
            temperature: 1.0,
            k_list: vec![10, 20],
            n_heads: 2,
            n_blocks: 1,
            d_ff_multiple: 4,
            dropout: 0.0,
            min_item_count: 5,
            keep_unpopular: false,
            no_item_cl: false,
            no_sess_cl: false,
            no_adaptive: false,
            legacy_aug: false,
            fixed_negatives: false,
            ce_mode: CeMode::Full,
            session_negative_mode: SessionNegativeMode::Reaugment,
            patience: 10,
            exclude_seen: false,
            projector: ProjectorMode::Pca,
            text_native_dim: 256,
            crop_ratio: aug.crop_ratio,
            noise_ratio: aug.noise_ratio,
            blur_sigma: aug.blur_sigma,
            pool_size: aug.pool_size,
            swap_ratio: aug.swap_ratio,
            delete_ratio: aug.delete_ratio,
            substitute_ratio: aug.substitute_ratio,
            insert_ratio: aug.insert_ratio,
            neighbor_k: aug.neighbor_k,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.lambda < 0.0 {
            return Err(Error::Config("lambda must be non-negative".into()));
        }
        if self.batch_size < 2 {
            return Err(Error::Config("batch_size must be at least 2".into()));
        }
        if self.m_negatives == 0 {
            return Err(Error::Config("m_negatives must be positive".into()));
        }
        if self.learning_rate <= 0.0 {
            return Err(Error::Config("learning_rate must be positive".into()));
        }
        if self.temperature <= 0.0 {
            return Err(Error::Config("temperature must be positive".into()));
        }
        if self.k_list.is_empty() || self.k_list.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config("k_list must be non-empty and strictly increasing".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config("dropout must lie in [0, 1)".into()));
        }
        self.augment_params().validate()?;
        Ok(())
    }

    pub fn augment_params(&self) -> AugmentParams {
        AugmentParams {
            crop_ratio: self.crop_ratio,
            noise_ratio: self.noise_ratio,
            blur_sigma: self.blur_sigma,
            pool_size: self.pool_size,
            swap_ratio: self.swap_ratio,
            delete_ratio: self.delete_ratio,
            substitute_ratio: self.substitute_ratio,
            insert_ratio: self.insert_ratio,
            neighbor_k: self.neighbor_k,
        }
    }

    pub fn model_dims(&self, n_items: usize) -> ModelDims {
        ModelDims {
            n_items,
            d: self.d,
            n_heads: self.n_heads,
            n_blocks: self.n_blocks,
            d_ff: self.d * self.d_ff_multiple,
            max_len: self.max_len,
        }
    }

    /// Serialize as the flat key=value text format, keys in fixed order.
    pub fn to_key_values(&self) -> String {
        let k_list =
            self.k_list.iter().map(|k| k.to_string()).collect::<Vec<_>>().join(",");
        let ce = match self.ce_mode {
            CeMode::Full => "full",
            CeMode::Standard => "standard",
        };
        let snm = match self.session_negative_mode {
            SessionNegativeMode::Shared => "shared",
            SessionNegativeMode::Reaugment => "reaugment",
        };
        let proj = match self.projector {
            ProjectorMode::Pca => "pca",
            ProjectorMode::FixedRandom => "fixed_random",
        };
        format!(
            "d = {}\nlambda = {}\nm_negatives = {}\nbatch_size = {}\nlearning_rate = {}\n\
             epochs = {}\nseed = {}\nmax_len = {}\ntemperature = {}\nk_list = {}\n\
             n_heads = {}\nn_blocks = {}\nd_ff_multiple = {}\ndropout = {}\n\
             min_item_count = {}\nkeep_unpopular = {}\nno_item_cl = {}\nno_sess_cl = {}\n\
             no_adaptive = {}\nlegacy_aug = {}\nfixed_negatives = {}\nce_mode = {}\nsession_negative_mode = {}\n\
             patience = {}\nexclude_seen = {}\nprojector = {}\ntext_native_dim = {}\n\
             crop_ratio = {}\nnoise_ratio = {}\nblur_sigma = {}\npool_size = {}\n\
             swap_ratio = {}\ndelete_ratio = {}\nsubstitute_ratio = {}\ninsert_ratio = {}\n\
             neighbor_k = {}\n",
            self.d,
            self.lambda,
            self.m_negatives,
            self.batch_size,
            self.learning_rate,
            self.epochs,
            self.seed,
            self.max_len,
            self.temperature,
            k_list,
            self.n_heads,
            self.n_blocks,
            self.d_ff_multiple,
            self.dropout,
            self.min_item_count,
            self.keep_unpopular,
            self.no_item_cl,
            self.no_sess_cl,
            self.no_adaptive,
            self.legacy_aug,
            self.fixed_negatives,
            ce,
            snm,
            self.patience,
            self.exclude_seen,
            proj,
            self.text_native_dim,
            self.crop_ratio,
            self.noise_ratio,
            self.blur_sigma,
            self.pool_size,
            self.swap_ratio,
            self.delete_ratio,
            self.substitute_ratio,
            self.insert_ratio,
            self.neighbor_k,
        )
    }

    /// Parse the key=value format. Lines may be blank or `#` comments.
    /// Unknown keys and malformed values are configuration errors.
    pub fn from_key_values(text: &str) -> Result<TrainConfig> {
        let mut cfg = TrainConfig::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {}: expected key = value, got {raw:?}", lineno + 1))
            })?;
            let key = key.trim();
            let value = value.trim();
            cfg.set(key, value).map_err(|e| {
                Error::Config(format!("line {}: {e}", lineno + 1))
            })?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<TrainConfig> {
        Self::from_key_values(&std::fs::read_to_string(path)?)
    }

    /// Set one field from its textual form.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
            value
                .parse()
                .map_err(|_| Error::Config(format!("bad value {value:?} for {key}")))
        }
        match key {
            "d" => self.d = parse(key, value)?,
            "lambda" => self.lambda = parse(key, value)?,
            "m_negatives" => self.m_negatives = parse(key, value)?,
            "batch_size" => self.batch_size = parse(key, value)?,
            "learning_rate" => self.learning_rate = parse(key, value)?,
            "epochs" => self.epochs = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "max_len" => self.max_len = parse(key, value)?,
            "temperature" => self.temperature = parse(key, value)?,
            "k_list" => {
                self.k_list = value
                    .split(',')
                    .map(|t| parse("k_list", t.trim()))
                    .collect::<Result<Vec<usize>>>()?;
            }
            "n_heads" => self.n_heads = parse(key, value)?,
            "n_blocks" => self.n_blocks = parse(key, value)?,
            "d_ff_multiple" => self.d_ff_multiple = parse(key, value)?,
            "dropout" => self.dropout = parse(key, value)?,
            "min_item_count" => self.min_item_count = parse(key, value)?,
            "keep_unpopular" => self.keep_unpopular = parse(key, value)?,
            "no_item_cl" => self.no_item_cl = parse(key, value)?,
            "no_sess_cl" => self.no_sess_cl = parse(key, value)?,
            "no_adaptive" => self.no_adaptive = parse(key, value)?,
            "legacy_aug" => self.legacy_aug = parse(key, value)?,
            "fixed_negatives" => self.fixed_negatives = parse(key, value)?,
            "ce_mode" => self.ce_mode = value.parse()?,
            "session_negative_mode" => self.session_negative_mode = value.parse()?,
            "patience" => self.patience = parse(key, value)?,
            "exclude_seen" => self.exclude_seen = parse(key, value)?,
            "projector" => self.projector = value.parse()?,
            "text_native_dim" => self.text_native_dim = parse(key, value)?,
            "crop_ratio" => self.crop_ratio = parse(key, value)?,
            "noise_ratio" => self.noise_ratio = parse(key, value)?,
            "blur_sigma" => self.blur_sigma = parse(key, value)?,
            "pool_size" => self.pool_size = parse(key, value)?,
            "swap_ratio" => self.swap_ratio = parse(key, value)?,
            "delete_ratio" => self.delete_ratio = parse(key, value)?,
            "substitute_ratio" => self.substitute_ratio = parse(key, value)?,
            "insert_ratio" => self.insert_ratio = parse(key, value)?,
            "neighbor_k" => self.neighbor_k = parse(key, value)?,
            other => {
                return Err(Error::Config(format!("unknown configuration key {other:?}")));
            }
        }
        Ok(())
    }
}
