use std::path::Path;

use crate::error::{Error, Result};
use crate::io::{file_sha256, read_tensor_header, TensorFile};
use crate::linalg::{Precision, Real};

use super::{ModelConfig, ModelWeights};

const KIND: &str = "model_weights";

fn to_file<T: Real>(w: &ModelWeights<T>) -> Result<TensorFile<T>> {
    let mut f = TensorFile::new(KIND, serde_json::json!({ "config": w.config }));
    for ((name, shape), data) in ModelWeights::<T>::manifest(&w.config)
        .into_iter()
        .zip(w.tensors())
    {
        f.push(name, shape, data.clone());
    }
    Ok(f)
}

fn from_file<T: Real>(f: TensorFile<T>) -> Result<ModelWeights<T>> {
    if f.kind != KIND {
        return Err(Error::CorruptFile(format!(
            "expected {KIND}, found {}",
            f.kind
        )));
    }
    let config: ModelConfig = serde_json::from_value(
        f.metadata
            .get("config")
            .cloned()
            .ok_or_else(|| Error::CorruptFile("missing config".into()))?,
    )
    .map_err(|e| Error::CorruptFile(format!("bad config: {e}")))?;
    config
        .validate()
        .map_err(|e| Error::CorruptFile(e.to_string()))?;
    let manifest = ModelWeights::<T>::manifest(&config);
    if manifest.len() != f.tensors.len() {
        return Err(Error::CorruptFile(format!(
            "expected {} tensors, found {}",
            manifest.len(),
            f.tensors.len()
        )));
    }
    let mut w = ModelWeights::<T>::zeros(&config);
    for ((slot, (name, shape)), t) in w.tensors_mut().into_iter().zip(manifest).zip(f.tensors) {
        if t.name != name || t.shape != shape {
            return Err(Error::CorruptFile(format!(
                "tensor {} {:?} does not match expected {} {:?}",
                t.name, t.shape, name, shape
            )));
        }
        *slot = t.data;
    }
    if !w.all_finite() {
        return Err(Error::CorruptFile("non-finite weights".into()));
    }
    Ok(w)
}

pub fn save_weights<T: Real>(w: &ModelWeights<T>, path: &Path) -> Result<()> {
    to_file(w)?.save(path)
}

/// Loads a weight file whose stored precision equals `T`.
pub fn load_weights<T: Real>(path: &Path) -> Result<ModelWeights<T>> {
    from_file(TensorFile::<T>::load(path)?)
}

/// Loads a weight file of either precision and converts it to `T`.
pub fn load_weights_as<T: Real>(path: &Path) -> Result<ModelWeights<T>> {
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let bytes = std::fs::read(path)?;
    match read_tensor_header(&bytes)?.precision {
        Precision::F64 => Ok(from_file(TensorFile::<f64>::decode(&bytes)?)?.cast()),
        Precision::F32 => Ok(from_file(TensorFile::<f32>::decode(&bytes)?)?.cast()),
    }
}

pub(crate) fn encode_weights<T: Real>(w: &ModelWeights<T>) -> Result<Vec<u8>> {
    to_file(w)?.encode()
}

/// SHA-256 of the serialized weights, identical to hashing the saved file.
pub fn weights_file_hash<T: Real>(w: &ModelWeights<T>) -> Result<String> {
    Ok(crate::io::sha256_hex(&encode_weights(w)?))
}

pub fn hash_weights_file(path: &Path) -> Result<String> {
    file_sha256(path)
}

#[cfg(test)]
mod tests {
    use super::super::{init_weights, tiny_config};
    use super::*;
    use crate::io::{TensorHeader, TENSOR_FORMAT_VERSION};

    #[test]
    fn save_load_roundtrip_and_hash() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("w.bin");
        let w = init_weights::<f64>(&tiny_config(10), 1).unwrap();
        save_weights(&w, &p).unwrap();
        let back: ModelWeights<f64> = load_weights(&p).unwrap();
        assert_eq!(back, w);
        assert_eq!(
            hash_weights_file(&p).unwrap(),
            weights_file_hash(&w).unwrap()
        );
        let as32: ModelWeights<f32> = load_weights_as(&p).unwrap();
        assert_eq!(as32.config.precision, Precision::F32);
        assert!(load_weights::<f32>(&p).is_err());
    }

    #[test]
    fn truncated_file_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("w.bin");
        let w = init_weights::<f64>(&tiny_config(10), 1).unwrap();
        save_weights(&w, &p).unwrap();
        let bytes = std::fs::read(&p).unwrap();
        std::fs::write(&p, &bytes[..bytes.len() - 100]).unwrap();
        assert!(matches!(
            load_weights::<f64>(&p),
            Err(Error::CorruptFile(_))
        ));
    }

    #[test]
    fn header_vocab_mismatch_is_rejected() {
        let w = init_weights::<f64>(&tiny_config(10), 1).unwrap();
        let bytes = encode_weights(&w).unwrap();
        let hlen = u64::from_le_bytes(bytes[..8].try_into().unwrap()) as usize;
        let mut header: TensorHeader = serde_json::from_slice(&bytes[8..8 + hlen]).unwrap();
        assert_eq!(header.format_version, TENSOR_FORMAT_VERSION);
        header.metadata["config"]["vocab_size"] = serde_json::json!(11);
        let new_header = serde_json::to_vec(&header).unwrap();
        let mut out = (new_header.len() as u64).to_le_bytes().to_vec();
        out.extend_from_slice(&new_header);
        out.extend_from_slice(&bytes[8 + hlen..]);
        assert!(from_file(TensorFile::<f64>::decode(&out).unwrap()).is_err());
    }
}
