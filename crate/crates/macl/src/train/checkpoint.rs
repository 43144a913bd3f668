//! Binary checkpoints: named, shape-tagged parameter records plus the
//! fitted projectors, configuration snapshot, seed, epoch, and the
//! id-map digest. Little-endian f64 throughout; load(save(m)) is bitwise.

use crate::autodiff::{Shape, Tensor};
use crate::embed::{Projector, ProjectorMode, TextExtractor};
use crate::error::{Error, Result};
use crate::model::ModelState;
use crate::train::TrainConfig;
use std::io::{Read, Write};
use std::path::Path;

const MAGIC: &[u8; 8] = b"MACLCKP1";

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub config: TrainConfig,
    pub seed: u64,
    pub epoch: u32,
    pub n_items: u32,
    pub id_map_digest: u64,
    pub image_projector: Option<Projector>,
    pub text_projector: Option<Projector>,
    pub text_extractor_dim: u32,
    pub text_extractor_seed: u64,
    pub params: Vec<(String, Tensor)>,
}

fn write_u32(w: &mut impl Write, v: u32) -> Result<()> {
    Ok(w.write_all(&v.to_le_bytes())?)
}

fn write_u64(w: &mut impl Write, v: u64) -> Result<()> {
    Ok(w.write_all(&v.to_le_bytes())?)
}

fn write_f64s(w: &mut impl Write, vs: &[f64]) -> Result<()> {
    for &v in vs {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64(r: &mut impl Read) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_f64s(r: &mut impl Read, n: usize) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(n);
    let mut b = [0u8; 8];
    for _ in 0..n {
        r.read_exact(&mut b)?;
        out.push(f64::from_le_bytes(b));
    }
    Ok(out)
}

fn write_projector(w: &mut impl Write, p: &Projector) -> Result<()> {
    w.write_all(&[match p.mode {
        ProjectorMode::Pca => 0u8,
        ProjectorMode::FixedRandom => 1u8,
    }])?;
    write_u32(w, p.native_dim as u32)?;
    write_u32(w, p.d as u32)?;
    write_f64s(w, &p.matrix)?;
    write_f64s(w, &p.mean)?;
    write_u32(w, p.eigenvalues.len() as u32)?;
    write_f64s(w, &p.eigenvalues)?;
    Ok(())
}

fn read_projector(r: &mut impl Read) -> Result<Projector> {
    let mut mode_b = [0u8; 1];
    r.read_exact(&mut mode_b)?;
    let mode = match mode_b[0] {
        0 => ProjectorMode::Pca,
        1 => ProjectorMode::FixedRandom,
        m => return Err(Error::Format(format!("unknown projector mode byte {m}"))),
    };
    let native_dim = read_u32(r)? as usize;
    let d = read_u32(r)? as usize;
    let matrix = read_f64s(r, d * native_dim)?;
    let mean = read_f64s(r, native_dim)?;
    let n_eigen = read_u32(r)? as usize;
    let eigenvalues = read_f64s(r, n_eigen)?;
    Ok(Projector { mode, native_dim, d, matrix, mean, eigenvalues })
}

pub fn save(
    path: &Path,
    state: &ModelState,
    config: &TrainConfig,
    epoch: u32,
    id_map_digest: u64,
    image_projector: Option<&Projector>,
    text_projector: Option<&Projector>,
    text_extractor: &TextExtractor,
) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    w.write_all(MAGIC)?;
    let cfg_text = config.to_key_values();
    write_u32(&mut w, cfg_text.len() as u32)?;
    w.write_all(cfg_text.as_bytes())?;
    write_u64(&mut w, config.seed)?;
    write_u32(&mut w, epoch)?;
    write_u32(&mut w, state.dims.n_items as u32)?;
    write_u64(&mut w, id_map_digest)?;
    w.write_all(&[image_projector.is_some() as u8, text_projector.is_some() as u8])?;
    if let Some(p) = image_projector {
        write_projector(&mut w, p)?;
    }
    if let Some(p) = text_projector {
        write_projector(&mut w, p)?;
    }
    write_u32(&mut w, text_extractor.native_dim as u32)?;
    write_u64(&mut w, text_extractor.seed)?;

    let params = state.named_params();
    write_u32(&mut w, params.len() as u32)?;
    for (name, tensor) in params {
        let bytes = name.as_bytes();
        write_u32(&mut w, bytes.len() as u32)?;
        w.write_all(bytes)?;
        let dims = tensor.shape().dims();
        w.write_all(&[dims.len() as u8])?;
        for d in &dims {
            write_u32(&mut w, *d as u32)?;
        }
        write_f64s(&mut w, tensor.values())?;
    }
    Ok(())
}

pub fn load(path: &Path) -> Result<Checkpoint> {
    let mut r = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Format("not a checkpoint file (bad magic)".into()));
    }
    let cfg_len = read_u32(&mut r)? as usize;
    let mut cfg_bytes = vec![0u8; cfg_len];
    r.read_exact(&mut cfg_bytes)?;
    let config = TrainConfig::from_key_values(
        std::str::from_utf8(&cfg_bytes)
            .map_err(|_| Error::Format("checkpoint config is not UTF-8".into()))?,
    )?;
    let seed = read_u64(&mut r)?;
    let epoch = read_u32(&mut r)?;
    let n_items = read_u32(&mut r)?;
    let id_map_digest = read_u64(&mut r)?;
    let mut flags = [0u8; 2];
    r.read_exact(&mut flags)?;
    let image_projector = if flags[0] == 1 { Some(read_projector(&mut r)?) } else { None };
    let text_projector = if flags[1] == 1 { Some(read_projector(&mut r)?) } else { None };
    let text_extractor_dim = read_u32(&mut r)?;
    let text_extractor_seed = read_u64(&mut r)?;

    let n_params = read_u32(&mut r)? as usize;
    let mut params = Vec::with_capacity(n_params);
    for _ in 0..n_params {
        let name_len = read_u32(&mut r)? as usize;
        let mut name_bytes = vec![0u8; name_len];
        r.read_exact(&mut name_bytes)?;
        let name = String::from_utf8(name_bytes)
            .map_err(|_| Error::Format("parameter name is not UTF-8".into()))?;
        let mut ndim = [0u8; 1];
        r.read_exact(&mut ndim)?;
        let shape = match ndim[0] {
            1 => Shape::Vector(read_u32(&mut r)? as usize),
            2 => {
                let rows = read_u32(&mut r)? as usize;
                let cols = read_u32(&mut r)? as usize;
                Shape::Matrix(rows, cols)
            }
            n => return Err(Error::Format(format!("unsupported tensor rank {n}"))),
        };
        let values = read_f64s(&mut r, shape.numel())?;
        params.push((name, Tensor::from_vec(shape, values)?));
    }
    Ok(Checkpoint {
        config,
        seed,
        epoch,
        n_items: n_items as u32,
        id_map_digest,
        image_projector,
        text_projector,
        text_extractor_dim,
        text_extractor_seed,
        params,
    })
}

impl Checkpoint {
    /// Rebuild the model state, verifying every parameter shape against
    /// the stored configuration.
    pub fn restore_model(&self) -> Result<ModelState> {
        let dims = self.config.model_dims(self.n_items as usize);
        let mut state = ModelState::init(dims, self.config.seed)?;
        let expected: Vec<String> =
            state.named_params().into_iter().map(|(n, _)| n).collect();
        let stored: Vec<&String> = self.params.iter().map(|(n, _)| n).collect();
        if expected.len() != stored.len()
            || expected.iter().zip(&stored).any(|(a, b)| &a != b)
        {
            return Err(Error::IncompatibleCheckpoint(
                "parameter inventory does not match the configuration".into(),
            ));
        }
        for ((_, dst), (name, src)) in
            state.named_params_mut().into_iter().zip(&self.params)
        {
            if dst.shape() != src.shape() {
                return Err(Error::IncompatibleCheckpoint(format!(
                    "parameter {name} has shape {} in the checkpoint but {} in the configuration",
                    src.shape(),
                    dst.shape()
                )));
            }
            dst.values_mut().copy_from_slice(src.values());
        }
        Ok(state)
    }

    /// Guard against evaluating a checkpoint over the wrong catalog.
    pub fn verify_id_map_digest(&self, digest: u64) -> Result<()> {
        if digest != self.id_map_digest {
            return Err(Error::IncompatibleCheckpoint(format!(
                "id map digest {digest:016x} does not match checkpoint {:016x}",
                self.id_map_digest
            )));
        }
        Ok(())
    }
}
