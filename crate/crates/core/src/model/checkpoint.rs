//! Versioned binary checkpoint: magic, format version, a JSON manifest with
//! the model config and vocabulary, then the flat parameters as little-endian
//! f64.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::network::{ModelConfig, TinyGenModel};
use super::vocab::Vocab;
use crate::binio;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"DSICKPT\x01";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointManifest {
    pub version: u32,
    pub config: ModelConfig,
    pub n_params: usize,
    pub vocab: Vocab,
}

pub fn write<W: Write>(model: &TinyGenModel, mut w: W) -> Result<()> {
    let manifest = CheckpointManifest {
        version: VERSION,
        config: model.config,
        n_params: model.n_params(),
        vocab: model.vocab.clone(),
    };
    let json = serde_json::to_vec(&manifest)?;
    w.write_all(MAGIC)?;
    binio::write_u32(&mut w, VERSION)?;
    binio::write_u64(&mut w, json.len() as u64)?;
    w.write_all(&json)?;
    binio::write_u64(&mut w, model.params.len() as u64)?;
    binio::write_f64s(&mut w, &model.params)?;
    w.flush()?;
    Ok(())
}

pub fn read<R: Read>(mut r: R) -> std::io::Result<(CheckpointManifest, Vec<f64>)> {
    use std::io::{Error as IoError, ErrorKind};
    binio::expect_magic(&mut r, MAGIC)?;
    let version = binio::read_u32(&mut r)?;
    if version != VERSION {
        return Err(IoError::new(
            ErrorKind::InvalidData,
            format!("checkpoint version {version}, expected {VERSION}"),
        ));
    }
    let len = binio::read_u64(&mut r)? as usize;
    let mut json = vec![0u8; len];
    r.read_exact(&mut json)?;
    let manifest: CheckpointManifest = serde_json::from_slice(&json)
        .map_err(|e| IoError::new(ErrorKind::InvalidData, e))?;
    let n = binio::read_u64(&mut r)? as usize;
    if n != manifest.n_params {
        return Err(IoError::new(ErrorKind::InvalidData, "parameter count mismatch"));
    }
    let params = binio::read_f64s(&mut r, n)?;
    Ok((manifest, params))
}

pub fn save(model: &TinyGenModel, path: &Path) -> Result<()> {
    write(model, BufWriter::new(File::create(path)?))
}

pub fn load(path: &Path) -> Result<TinyGenModel> {
    if !path.exists() {
        return Err(Error::MissingArtifact(path.to_path_buf()));
    }
    let (manifest, params) = read(BufReader::new(File::open(path)?)).map_err(|e| Error::Format {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    TinyGenModel::from_parts(manifest.config, manifest.vocab, params)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::text::TokenizerConfig;

    #[test]
    fn roundtrip_and_corruption() {
        let vocab = Vocab::new(TokenizerConfig::default(), ["x", "y"]);
        let m = TinyGenModel::new(ModelConfig { d: 4, h: 5, max_positions: 6, embedding_std: 1.0 }, vocab, 3)
            .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("model.ckpt");
        save(&m, &p).unwrap();
        assert_eq!(load(&p).unwrap(), m);

        let mut bytes = std::fs::read(&p).unwrap();
        bytes[0] = b'X';
        std::fs::write(&p, &bytes).unwrap();
        assert!(matches!(load(&p), Err(Error::Format { .. })));
        assert!(matches!(load(&dir.path().join("none")), Err(Error::MissingArtifact(_))));
    }
}
