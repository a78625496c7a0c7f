//! File helpers: atomic writes, JSONL, content hashes, and the header+blob
//! tensor container shared by model weights, latents and projections.
//!
//! Tensor container layout:
//!
//! ```text
//! u64 LE  header length N
//! N bytes JSON header {format_version, kind, precision, metadata, tensors:[{name, shape, offset, len}]}
//! blob    little-endian floats, tensors in manifest order, offsets in bytes from blob start
//! ```

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::linalg::{Precision, Real};

pub const TENSOR_FORMAT_VERSION: u32 = 1;

/// Write to `path.tmp` and rename over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)?;
        }
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = std::path::PathBuf::from(tmp);
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn write_json<S: Serialize>(path: &Path, value: &S) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    write_atomic(path, s.as_bytes())
}

pub fn read_json<D: DeserializeOwned>(path: &Path) -> Result<D> {
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
}

pub fn to_jsonl<S: Serialize>(records: &[S]) -> Result<String> {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r)?);
        out.push('\n');
    }
    Ok(out)
}

pub fn write_jsonl<S: Serialize>(path: &Path, records: &[S]) -> Result<()> {
    write_atomic(path, to_jsonl(records)?.as_bytes())
}

/// Reads every complete line; a trailing partial line (interrupted append) is
/// ignored.
pub fn read_jsonl<D: DeserializeOwned>(path: &Path) -> Result<Vec<D>> {
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let reader = BufReader::new(fs::File::open(path)?);
    let mut out = Vec::new();
    let mut lines = reader.lines().peekable();
    while let Some(line) = lines.next() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str(&line) {
            Ok(v) => out.push(v),
            Err(_) if lines.peek().is_none() => break,
            Err(e) => return Err(e.into()),
        }
    }
    Ok(out)
}

pub fn append_jsonl<S: Serialize>(file: &mut fs::File, record: &S) -> Result<()> {
    let mut line = serde_json::to_string(record)?;
    line.push('\n');
    file.write_all(line.as_bytes())?;
    file.flush()?;
    Ok(())
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn file_sha256(path: &Path) -> Result<String> {
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    Ok(sha256_hex(&fs::read(path)?))
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct TensorManifestEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
    pub len: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TensorHeader {
    pub format_version: u32,
    pub kind: String,
    pub precision: Precision,
    #[serde(default)]
    pub metadata: serde_json::Value,
    pub tensors: Vec<TensorManifestEntry>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T> {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<T>,
}

#[derive(Debug, Clone)]
pub struct TensorFile<T> {
    pub kind: String,
    pub metadata: serde_json::Value,
    pub tensors: Vec<Tensor<T>>,
}

impl<T: Real> TensorFile<T> {
    pub fn new(kind: impl Into<String>, metadata: serde_json::Value) -> Self {
        Self {
            kind: kind.into(),
            metadata,
            tensors: Vec::new(),
        }
    }

    pub fn push(&mut self, name: impl Into<String>, shape: Vec<usize>, data: Vec<T>) {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        self.tensors.push(Tensor {
            name: name.into(),
            shape,
            data,
        });
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<T>> {
        self.tensors.iter().find(|t| t.name == name)
    }

    pub fn encode(&self) -> Result<Vec<u8>> {
        let mut manifest = Vec::with_capacity(self.tensors.len());
        let mut offset = 0;
        for t in &self.tensors {
            manifest.push(TensorManifestEntry {
                name: t.name.clone(),
                shape: t.shape.clone(),
                offset,
                len: t.data.len(),
            });
            offset += t.data.len() * T::BYTES;
        }
        let header = TensorHeader {
            format_version: TENSOR_FORMAT_VERSION,
            kind: self.kind.clone(),
            precision: T::PRECISION,
            metadata: self.metadata.clone(),
            tensors: manifest,
        };
        let header = serde_json::to_vec(&header)?;
        let mut out = Vec::with_capacity(8 + header.len() + offset);
        out.extend_from_slice(&(header.len() as u64).to_le_bytes());
        out.extend_from_slice(&header);
        for t in &self.tensors {
            for &v in &t.data {
                v.write_le(&mut out);
            }
        }
        Ok(out)
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let header = read_tensor_header(bytes)?;
        if header.precision != T::PRECISION {
            return Err(Error::CorruptFile(format!(
                "file precision {} does not match requested {}",
                header.precision,
                T::PRECISION
            )));
        }
        let header_len = u64::from_le_bytes(bytes[..8].try_into().unwrap()) as usize;
        let blob = &bytes[8 + header_len..];
        let mut expected = 0;
        let mut tensors = Vec::with_capacity(header.tensors.len());
        for e in &header.tensors {
            if e.shape.iter().product::<usize>() != e.len {
                return Err(Error::CorruptFile(format!(
                    "tensor {} shape {:?} does not match length {}",
                    e.name, e.shape, e.len
                )));
            }
            if e.offset != expected {
                return Err(Error::CorruptFile(format!(
                    "tensor {} offset {} out of order",
                    e.name, e.offset
                )));
            }
            let end = e.offset + e.len * T::BYTES;
            if end > blob.len() {
                return Err(Error::CorruptFile(format!(
                    "tensor {} extends past end of blob ({} > {})",
                    e.name,
                    end,
                    blob.len()
                )));
            }
            let data = blob[e.offset..end]
                .chunks_exact(T::BYTES)
                .map(T::read_le)
                .collect();
            tensors.push(Tensor {
                name: e.name.clone(),
                shape: e.shape.clone(),
                data,
            });
            expected = end;
        }
        if expected != blob.len() {
            return Err(Error::CorruptFile(format!(
                "blob length {} does not match manifest total {}",
                blob.len(),
                expected
            )));
        }
        Ok(Self {
            kind: header.kind,
            metadata: header.metadata,
            tensors,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.encode()?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::MissingFile(path.to_path_buf()));
        }
        Self::decode(&fs::read(path)?)
    }
}

pub fn read_tensor_header(bytes: &[u8]) -> Result<TensorHeader> {
    if bytes.len() < 8 {
        return Err(Error::CorruptFile("file shorter than header prefix".into()));
    }
    let header_len = u64::from_le_bytes(bytes[..8].try_into().unwrap()) as usize;
    if header_len > bytes.len() - 8 {
        return Err(Error::CorruptFile(format!(
            "header length {header_len} exceeds file size"
        )));
    }
    let header: TensorHeader = serde_json::from_slice(&bytes[8..8 + header_len])
        .map_err(|e| Error::CorruptFile(format!("bad header: {e}")))?;
    if header.format_version != TENSOR_FORMAT_VERSION {
        return Err(Error::CorruptFile(format!(
            "unsupported format version {}",
            header.format_version
        )));
    }
    Ok(header)
}
