//! Binary checkpoint container.
//!
//! Layout: the 8-byte magic `PMACKPT\0`, a little-endian `u32` format
//! version, a little-endian `u64` header length, a UTF-8 JSON header
//! (configuration, vocabularies, operator set, tensor manifest, training
//! history) and finally every tensor's values as little-endian `f64` in
//! manifest order.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::params::{Params, Tensors};
use super::{ModelConfig, TrainedModel};
use crate::error::{Error, Result};
use crate::preprocess::Vocabulary;

const MAGIC: &[u8; 8] = b"PMACKPT\0";
const VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Header {
    config: ModelConfig,
    names_vocab: Vocabulary,
    code_vocab: Vocabulary,
    operator_set: Vec<String>,
    history: Vec<f64>,
    tensors: Vec<TensorEntry>,
}

#[derive(Serialize, Deserialize, PartialEq, Debug)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
}

pub fn write_model(model: &TrainedModel) -> Vec<u8> {
    let header = Header {
        config: model.config.clone(),
        names_vocab: model.names_vocab.clone(),
        code_vocab: model.code_vocab.clone(),
        operator_set: model.operator_set.clone(),
        history: model.history.clone(),
        tensors: model
            .params
            .tensors()
            .into_iter()
            .map(|(name, t)| TensorEntry {
                name,
                shape: t.shape().to_vec(),
            })
            .collect(),
    };
    let json = serde_json::to_vec(&header).expect("header serialises");
    let mut out = Vec::with_capacity(json.len() + 8 * model.params.count() + 20);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    for (_, t) in model.params.tensors() {
        for &x in t.iter() {
            out.extend_from_slice(&x.to_le_bytes());
        }
    }
    out
}

fn corrupt(msg: impl Into<String>) -> Error {
    Error::Checkpoint(msg.into())
}

pub fn read_model(bytes: &[u8]) -> Result<TrainedModel> {
    if bytes.len() < 20 || &bytes[..8] != MAGIC {
        return Err(corrupt("not a checkpoint file"));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    if version != VERSION {
        return Err(corrupt(format!("unsupported checkpoint version {version}")));
    }
    let hlen = u64::from_le_bytes(bytes[12..20].try_into().unwrap()) as usize;
    let body = &bytes[20..];
    if body.len() < hlen {
        return Err(corrupt("truncated header"));
    }
    let header: Header = serde_json::from_slice(&body[..hlen]).map_err(|e| corrupt(format!("bad header: {e}")))?;
    let mut params = Params::zeros(&header.config, header.names_vocab.len(), header.code_vocab.len());
    let manifest: Vec<TensorEntry> = params
        .tensors()
        .into_iter()
        .map(|(name, t)| TensorEntry {
            name,
            shape: t.shape().to_vec(),
        })
        .collect();
    if manifest != header.tensors {
        return Err(corrupt("tensor manifest does not match the configuration"));
    }
    let mut data = body[hlen..].chunks_exact(8);
    let expected = params.count();
    if data.len() != expected || !data.remainder().is_empty() {
        return Err(corrupt(format!("expected {expected} values, found {} bytes", body.len() - hlen)));
    }
    for (_, mut t) in params.tensors_mut() {
        for x in t.iter_mut() {
            *x = f64::from_le_bytes(data.next().unwrap().try_into().unwrap());
        }
    }
    TrainedModel::from_parts(header.config, header.names_vocab, header.code_vocab, header.operator_set, params)
        .map(|m| m.with_history(header.history))
}

pub fn save_model(model: &TrainedModel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, write_model(model)).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<TrainedModel> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    read_model(&bytes)
}

#[cfg(test)]
mod tests {
    use super::super::testing::{tiny_dataset, tiny_model};
    use super::*;

    #[test]
    fn round_trip_reproduces_predictions() {
        let m = tiny_model(true).with_history(vec![0.7, 0.5]);
        let bytes = write_model(&m);
        let back = read_model(&bytes).unwrap();
        assert_eq!(back, m);
        let probe = tiny_dataset(16);
        assert_eq!(m.predict_proba(&probe).unwrap(), back.predict_proba(&probe).unwrap());
        assert_eq!(write_model(&back), bytes);
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        let m = tiny_model(false);
        save_model(&m, &path).unwrap();
        assert_eq!(load_model(&path).unwrap(), m);
        assert_eq!(load_model(dir.path().join("missing")).unwrap_err().exit_code(), 2);
    }

    #[test]
    fn corruption_is_detected() {
        let bytes = write_model(&tiny_model(true));
        assert!(read_model(&bytes[..bytes.len() - 3]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(read_model(&bad).is_err());
        let mut bad = bytes;
        bad[8] = 9;
        assert!(read_model(&bad).is_err());
    }
}
