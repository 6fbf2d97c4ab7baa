//! Checkpoint directory: `params.bin` holds the raw parameter vector,
//! `meta.toml` holds config, feature layout, normalizer and a digest of the
//! blob.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{build_model, Model, ModelConfig};
use crate::error::{Error, Result};
use crate::features::Normalizer;

/// `major.minor`; loaders reject other majors.
pub const CHECKPOINT_FORMAT: (u32, u32) = (1, 0);

const MAGIC: &[u8; 8] = b"ENGAGEP\x01";
const PARAMS_FILE: &str = "params.bin";
const META_FILE: &str = "meta.toml";

#[derive(Debug, Serialize, Deserialize)]
struct Meta {
    format_major: u32,
    format_minor: u32,
    layout: String,
    seed: u64,
    param_count: usize,
    params_sha256: String,
    config: ModelConfig,
    normalizer: Option<Normalizer>,
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn save_checkpoint(model: &Model, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(format!("creating {}", dir.display()), e))?;
    let mut blob = Vec::with_capacity(24 + 8 * model.params.len());
    blob.extend_from_slice(MAGIC);
    blob.extend_from_slice(&CHECKPOINT_FORMAT.0.to_le_bytes());
    blob.extend_from_slice(&CHECKPOINT_FORMAT.1.to_le_bytes());
    blob.extend_from_slice(&(model.params.len() as u64).to_le_bytes());
    for p in &model.params {
        blob.extend_from_slice(&p.to_le_bytes());
    }
    let meta = Meta {
        format_major: CHECKPOINT_FORMAT.0,
        format_minor: CHECKPOINT_FORMAT.1,
        layout: model.config.mode.layout().to_string(),
        seed: model.config.seed,
        param_count: model.params.len(),
        params_sha256: hex(&Sha256::digest(&blob)),
        config: model.config.clone(),
        normalizer: model.normalizer.clone(),
    };
    let text = toml::to_string(&meta).map_err(|e| Error::InvalidConfig(e.to_string()))?;
    let write = |name: &str, bytes: &[u8]| {
        let p = dir.join(name);
        fs::write(&p, bytes).map_err(|e| Error::io(format!("writing {}", p.display()), e))
    };
    write(PARAMS_FILE, &blob)?;
    write(META_FILE, text.as_bytes())
}

/// Loads a checkpoint saved by [`save_checkpoint`].
pub fn load_checkpoint(dir: impl AsRef<Path>) -> Result<Model> {
    load(dir.as_ref(), None)
}

/// Like [`load_checkpoint`], but also requires the stored feature layout
/// to equal `layout`.
pub fn load_checkpoint_expecting(dir: impl AsRef<Path>, layout: &str) -> Result<Model> {
    load(dir.as_ref(), Some(layout))
}

fn load(dir: &Path, expected_layout: Option<&str>) -> Result<Model> {
    let corrupt = |reason: String| Error::CorruptCheckpoint {
        path: dir.to_path_buf(),
        reason,
    };
    let meta_path = dir.join(META_FILE);
    let params_path = dir.join(PARAMS_FILE);
    if !meta_path.is_file() || !params_path.is_file() {
        return Err(Error::MissingCheckpoint(dir.to_path_buf()));
    }
    let text = fs::read_to_string(&meta_path)
        .map_err(|e| Error::io(format!("reading {}", meta_path.display()), e))?;
    let meta: Meta = toml::from_str(&text).map_err(|e| corrupt(format!("metadata: {e}")))?;
    if meta.format_major != CHECKPOINT_FORMAT.0 {
        return Err(Error::VersionMismatch(format!(
            "checkpoint format {}.{}, this build reads {}.x",
            meta.format_major, meta.format_minor, CHECKPOINT_FORMAT.0
        )));
    }
    if let Some(expected) = expected_layout {
        if meta.layout != expected {
            return Err(Error::VersionMismatch(format!(
                "feature layout `{}`, expected `{expected}`",
                meta.layout
            )));
        }
    }
    if meta.layout != meta.config.mode.layout() {
        return Err(corrupt(format!(
            "layout `{}` does not match configured input mode",
            meta.layout
        )));
    }

    let blob = fs::read(&params_path)
        .map_err(|e| Error::io(format!("reading {}", params_path.display()), e))?;
    if blob.len() < 24 || &blob[..8] != MAGIC {
        return Err(corrupt("bad parameter blob header".into()));
    }
    let major = u32::from_le_bytes(blob[8..12].try_into().expect("4 bytes"));
    if major != CHECKPOINT_FORMAT.0 {
        return Err(Error::VersionMismatch(format!(
            "parameter blob format {major}"
        )));
    }
    let count = u64::from_le_bytes(blob[16..24].try_into().expect("8 bytes")) as usize;
    if blob.len() != 24 + 8 * count {
        return Err(corrupt(format!(
            "parameter blob holds {} bytes, header announces {count} values",
            blob.len()
        )));
    }
    if hex(&Sha256::digest(&blob)) != meta.params_sha256 {
        return Err(corrupt("parameter digest mismatch".into()));
    }

    let mut model = build_model(meta.config)?;
    if count != model.params.len() || count != meta.param_count {
        return Err(corrupt(format!(
            "{count} stored parameters, configuration needs {}",
            model.params.len()
        )));
    }
    for (dst, chunk) in model.params.iter_mut().zip(blob[24..].chunks_exact(8)) {
        *dst = f64::from_le_bytes(chunk.try_into().expect("8 bytes"));
    }
    model.normalizer = meta.normalizer;
    Ok(model)
}
