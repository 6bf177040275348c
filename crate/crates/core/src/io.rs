//! Binary tensor dumps and the content-addressed result cache.
//!
//! Tensor layout: the magic `NFT1`, a little-endian u32 rank, one u64 per
//! axis, then interleaved little-endian f64 real and imaginary parts.

use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

const TENSOR_MAGIC: &[u8; 4] = b"NFT1";
const CACHE_MAGIC: &[u8; 4] = b"NFC1";

fn encode_tensor(shape: &[usize], data: &[Complex64]) -> Result<Vec<u8>> {
    let expected: usize = shape.iter().product();
    crate::error::check_len(expected, data.len())?;
    let mut buf = Vec::with_capacity(8 + 8 * shape.len() + 16 * data.len());
    buf.extend_from_slice(TENSOR_MAGIC);
    buf.extend_from_slice(&(shape.len() as u32).to_le_bytes());
    for n in shape {
        buf.extend_from_slice(&(*n as u64).to_le_bytes());
    }
    for z in data {
        buf.extend_from_slice(&z.re.to_le_bytes());
        buf.extend_from_slice(&z.im.to_le_bytes());
    }
    Ok(buf)
}

fn take<'a>(bytes: &mut &'a [u8], n: usize) -> Result<&'a [u8]> {
    if bytes.len() < n {
        return Err(Error::Cache("truncated binary record".into()));
    }
    let (head, rest) = bytes.split_at(n);
    *bytes = rest;
    Ok(head)
}

fn decode_tensor(mut bytes: &[u8]) -> Result<(Vec<usize>, Vec<Complex64>)> {
    if take(&mut bytes, 4)? != TENSOR_MAGIC {
        return Err(Error::Cache("not a tensor dump".into()));
    }
    let rank = u32::from_le_bytes(take(&mut bytes, 4)?.try_into().expect("4 bytes")) as usize;
    let mut shape = Vec::with_capacity(rank);
    for _ in 0..rank {
        shape.push(u64::from_le_bytes(take(&mut bytes, 8)?.try_into().expect("8 bytes")) as usize);
    }
    let len: usize = shape.iter().product();
    if bytes.len() != 16 * len {
        return Err(Error::Cache(format!("tensor payload holds {} bytes, expected {}", bytes.len(), 16 * len)));
    }
    let data = bytes
        .chunks_exact(16)
        .map(|c| {
            Complex64::new(
                f64::from_le_bytes(c[..8].try_into().expect("8 bytes")),
                f64::from_le_bytes(c[8..].try_into().expect("8 bytes")),
            )
        })
        .collect();
    Ok((shape, data))
}

/// Writes `bytes` to a sibling temporary file and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir)?;
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("out");
    let tmp = dir.join(format!(".{name}.{}.tmp", std::process::id()));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn write_tensor(path: &Path, shape: &[usize], data: &[Complex64]) -> Result<()> {
    write_atomic(path, &encode_tensor(shape, data)?)
}

pub fn read_tensor(path: &Path) -> Result<(Vec<usize>, Vec<Complex64>)> {
    let mut bytes = Vec::new();
    fs::File::open(path)?.read_to_end(&mut bytes)?;
    decode_tensor(&bytes)
}

/// Hex SHA-256 of the JSON encoding of `material`.
pub fn content_key<T: Serialize>(material: &T) -> Result<String> {
    let json = serde_json::to_vec(material)?;
    Ok(hex::encode(Sha256::digest(&json)))
}

/// Directory of cached complex arrays with JSON metadata, keyed by content hash.
#[derive(Clone, Debug)]
pub struct Cache {
    dir: PathBuf,
}

impl Cache {
    pub fn new(dir: impl Into<PathBuf>) -> Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir)?;
        Ok(Self { dir })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn path(&self, kind: &str, key: &str) -> PathBuf {
        self.dir.join(format!("{kind}-{key}.bin"))
    }

    pub fn load(&self, kind: &str, key: &str) -> Result<Option<(serde_json::Value, Vec<Complex64>)>> {
        let path = self.path(kind, key);
        if !path.exists() {
            return Ok(None);
        }
        let mut bytes = Vec::new();
        fs::File::open(&path)?.read_to_end(&mut bytes)?;
        let mut rest = bytes.as_slice();
        if take(&mut rest, 4)? != CACHE_MAGIC {
            return Err(Error::Cache(format!("{} is not a cache record", path.display())));
        }
        let meta_len = u64::from_le_bytes(take(&mut rest, 8)?.try_into().expect("8 bytes")) as usize;
        let meta: serde_json::Value = serde_json::from_slice(take(&mut rest, meta_len)?)?;
        let (_, data) = decode_tensor(rest)?;
        Ok(Some((meta, data)))
    }

    pub fn store(&self, kind: &str, key: &str, meta: &serde_json::Value, data: &[Complex64]) -> Result<()> {
        let meta_bytes = serde_json::to_vec(meta)?;
        let mut buf = Vec::new();
        buf.extend_from_slice(CACHE_MAGIC);
        buf.extend_from_slice(&(meta_bytes.len() as u64).to_le_bytes());
        buf.extend_from_slice(&meta_bytes);
        buf.extend_from_slice(&encode_tensor(&[data.len()], data)?);
        write_atomic(&self.path(kind, key), &buf)
    }
}
