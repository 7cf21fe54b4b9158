//! On-disk containers: a directory holding a `manifest` of `key = value`
//! lines and little-endian binary arrays.
//!
//! Array layout: 8-byte magic naming the element type, `u64` rank, one `u64`
//! per axis, then the row-major elements.

use std::fs;
use std::io::Write;
use std::path::Path;

use ndarray::{ArrayD, IxDyn};

use crate::error::{Error, Result};

pub const MAGIC_F32: &[u8; 8] = b"OAMRF32\n";
pub const MAGIC_F64: &[u8; 8] = b"OAMRF64\n";
pub const MAGIC_U64: &[u8; 8] = b"OAMRU64\n";

/// Element types storable in an array file.
pub trait Element: Copy + Default {
    const MAGIC: &'static [u8; 8];
    const SIZE: usize;
    fn put(self, out: &mut Vec<u8>);
    fn get(bytes: &[u8]) -> Self;
}

impl Element for f32 {
    const MAGIC: &'static [u8; 8] = MAGIC_F32;
    const SIZE: usize = 4;
    fn put(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }
    fn get(bytes: &[u8]) -> Self {
        f32::from_le_bytes(bytes.try_into().expect("4 bytes"))
    }
}

impl Element for f64 {
    const MAGIC: &'static [u8; 8] = MAGIC_F64;
    const SIZE: usize = 8;
    fn put(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }
    fn get(bytes: &[u8]) -> Self {
        f64::from_le_bytes(bytes.try_into().expect("8 bytes"))
    }
}

impl Element for u64 {
    const MAGIC: &'static [u8; 8] = MAGIC_U64;
    const SIZE: usize = 8;
    fn put(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }
    fn get(bytes: &[u8]) -> Self {
        u64::from_le_bytes(bytes.try_into().expect("8 bytes"))
    }
}

pub fn encode_array<T: Element>(shape: &[usize], data: &[T]) -> Result<Vec<u8>> {
    let count: usize = shape.iter().product();
    if count != data.len() {
        return Err(Error::DimensionMismatch {
            expected: count,
            got: data.len(),
        });
    }
    let mut out = Vec::with_capacity(16 + 8 * shape.len() + T::SIZE * data.len());
    out.extend_from_slice(T::MAGIC);
    out.extend_from_slice(&(shape.len() as u64).to_le_bytes());
    for &s in shape {
        out.extend_from_slice(&(s as u64).to_le_bytes());
    }
    for &x in data {
        x.put(&mut out);
    }
    Ok(out)
}

pub fn decode_array<T: Element>(bytes: &[u8], what: &str) -> Result<ArrayD<T>> {
    let bad = |detail: &str| Error::format(what, detail);
    if bytes.len() < 16 {
        return Err(bad("truncated header"));
    }
    if &bytes[..8] != T::MAGIC {
        return Err(bad("wrong magic or element type"));
    }
    let word = |i: usize| u64::from_le_bytes(bytes[i..i + 8].try_into().expect("8 bytes"));
    let rank = word(8) as usize;
    if rank > 8 || bytes.len() < 16 + 8 * rank {
        return Err(bad("bad rank"));
    }
    let shape: Vec<usize> = (0..rank).map(|a| word(16 + 8 * a) as usize).collect();
    let count = shape
        .iter()
        .try_fold(1usize, |acc, &s| acc.checked_mul(s))
        .ok_or_else(|| bad("shape overflows"))?;
    let body = &bytes[16 + 8 * rank..];
    if body.len() != count * T::SIZE {
        return Err(bad(&format!(
            "expected {} data bytes, found {}",
            count * T::SIZE,
            body.len()
        )));
    }
    let data = body.chunks_exact(T::SIZE).map(T::get).collect();
    ArrayD::from_shape_vec(IxDyn(&shape), data).map_err(|e| bad(&e.to_string()))
}

pub fn write_array<T: Element>(path: &Path, shape: &[usize], data: &[T]) -> Result<()> {
    let bytes = encode_array(shape, data)?;
    write_file(path, &bytes)
}

pub fn read_array<T: Element>(path: &Path) -> Result<ArrayD<T>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_array(&bytes, &path.display().to_string())
}

pub fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(bytes).map_err(|e| Error::io(path, e))
}

/// Ordered `key = value` text. Keys are unique; `#` starts a comment line.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Manifest {
    entries: Vec<(String, String)>,
}

impl Manifest {
    pub fn new() -> Self {
        Self::default()
    }

    /// Sets `key`, replacing any earlier value in place.
    pub fn set(&mut self, key: &str, value: impl ToString) -> &mut Self {
        let value = value.to_string();
        assert!(
            !key.contains(['=', '\n']) && !value.contains('\n'),
            "manifest entries are single-line"
        );
        match self.entries.iter_mut().find(|(k, _)| k == key) {
            Some(slot) => slot.1 = value,
            None => self.entries.push((key.to_string(), value)),
        }
        self
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn require(&self, key: &str) -> Result<&str> {
        self.get(key)
            .ok_or_else(|| Error::format("manifest", format!("missing key {key:?}")))
    }

    pub fn parse_value<T: std::str::FromStr>(&self, key: &str) -> Result<T> {
        let raw = self.require(key)?;
        raw.parse()
            .map_err(|_| Error::format("manifest", format!("bad value {raw:?} for {key:?}")))
    }

    pub fn entries(&self) -> &[(String, String)] {
        &self.entries
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (k, v) in &self.entries {
            s.push_str(k);
            s.push_str(" = ");
            s.push_str(v);
            s.push('\n');
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut m = Manifest::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                Error::format("manifest", format!("line {} has no '='", n + 1))
            })?;
            let k = k.trim();
            if k.is_empty() || m.get(k).is_some() {
                return Err(Error::format(
                    "manifest",
                    format!("line {}: empty or repeated key", n + 1),
                ));
            }
            m.entries.push((k.to_string(), v.trim().to_string()));
        }
        Ok(m)
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        write_file(&dir.join("manifest"), self.to_text().as_bytes())
    }

    pub fn read(dir: &Path) -> Result<Self> {
        let path = dir.join("manifest");
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        Self::parse(&text)
    }
}
