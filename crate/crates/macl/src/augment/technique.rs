//! The augmentation pool: five image techniques and four text techniques,
//! all chosen to perturb an asset while preserving what it depicts.

use crate::error::{Error, Result};
use rand::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Modality {
    Image,
    Text,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Technique {
    Hflip,
    Cropping,
    GaussianNoise,
    GaussianBlur,
    MaxPooling,
    Swap,
    Deletion,
    Substitution,
    Insertion,
}

impl Technique {
    pub const ALL: [Technique; 9] = [
        Technique::Hflip,
        Technique::Cropping,
        Technique::GaussianNoise,
        Technique::GaussianBlur,
        Technique::MaxPooling,
        Technique::Swap,
        Technique::Deletion,
        Technique::Substitution,
        Technique::Insertion,
    ];

    pub fn modality(&self) -> Modality {
        match self {
            Technique::Hflip
            | Technique::Cropping
            | Technique::GaussianNoise
            | Technique::GaussianBlur
            | Technique::MaxPooling => Modality::Image,
            Technique::Swap
            | Technique::Deletion
            | Technique::Substitution
            | Technique::Insertion => Modality::Text,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Technique::Hflip => "hflip",
            Technique::Cropping => "cropping",
            Technique::GaussianNoise => "gaussian_noise",
            Technique::GaussianBlur => "gaussian_blur",
            Technique::MaxPooling => "max_pooling",
            Technique::Swap => "swap",
            Technique::Deletion => "deletion",
            Technique::Substitution => "substitution",
            Technique::Insertion => "insertion",
        }
    }
}

impl std::str::FromStr for Technique {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Technique::ALL
            .iter()
            .find(|t| t.name() == s)
            .copied()
            .ok_or_else(|| Error::Config(format!("unknown technique {s:?}")))
    }
}

impl std::fmt::Display for Technique {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Technique strengths. Defaults keep the mean anchor/view cosine above
/// the 0.7 semantic-consistency floor on the synthetic benchmark.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentParams {
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

impl Default for AugmentParams {
    fn default() -> Self {
        AugmentParams {
            crop_ratio: 0.2,
            noise_ratio: 0.05,
            blur_sigma: 1.0,
            pool_size: 2,
            swap_ratio: 0.1,
            delete_ratio: 0.1,
            substitute_ratio: 0.1,
            insert_ratio: 0.1,
            neighbor_k: 5,
        }
    }
}

impl AugmentParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("crop_ratio", self.crop_ratio),
            ("noise_ratio", self.noise_ratio),
            ("swap_ratio", self.swap_ratio),
            ("delete_ratio", self.delete_ratio),
            ("substitute_ratio", self.substitute_ratio),
            ("insert_ratio", self.insert_ratio),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Config(format!("{name} must lie in [0, 1], got {v}")));
            }
        }
        if self.blur_sigma <= 0.0 {
            return Err(Error::Config("blur_sigma must be positive".into()));
        }
        if self.pool_size < 2 {
            return Err(Error::Config("pool_size must be at least 2".into()));
        }
        if self.neighbor_k == 0 {
            return Err(Error::Config("neighbor_k must be positive".into()));
        }
        Ok(())
    }
}

/// Uniform draw over the techniques admissible for the available
/// modalities. Errors when nothing is admissible; the caller must then
/// exclude the element from contrastive learning instead.
pub fn sample_technique(
    pool: &[Technique],
    has_image: bool,
    has_text: bool,
    rng: &mut impl Rng,
) -> Result<Technique> {
    let admissible: Vec<Technique> = pool
        .iter()
        .filter(|t| match t.modality() {
            Modality::Image => has_image,
            Modality::Text => has_text,
        })
        .copied()
        .collect();
    if admissible.is_empty() {
        return Err(Error::AugmentationUnavailable(
            "no technique is admissible for the available modalities".into(),
        ));
    }
    Ok(admissible[rng.random_range(0..admissible.len())])
}
