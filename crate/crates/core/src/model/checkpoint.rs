//! Binary checkpoint container.
//!
//! ```text
//! magic      4 bytes  "UQHW"
//! version    u32 LE   1 for weights (posterior files use their own version)
//! arch_len   u64 LE   length of the architecture JSON
//! arch       arch_len bytes of UTF-8 JSON
//! count      u64 LE   parameter count P
//! values     P x f64 LE
//! ```

use std::fs;
use std::path::Path;

use super::{Architecture, ParamVector};
use crate::error::{Error, Result};
use crate::scalar::Real;

pub const MAGIC: &[u8; 4] = b"UQHW";
pub const CHECKPOINT_VERSION: u32 = 1;

pub(crate) struct Encoder {
    buf: Vec<u8>,
}

impl Encoder {
    pub(crate) fn new(version: u32, arch: &Architecture) -> Result<Self> {
        let mut enc = Self { buf: Vec::new() };
        enc.buf.extend_from_slice(MAGIC);
        enc.buf.extend_from_slice(&version.to_le_bytes());
        let json = serde_json::to_vec(arch).map_err(|e| Error::format(e.to_string()))?;
        enc.u64(json.len() as u64);
        enc.buf.extend_from_slice(&json);
        Ok(enc)
    }

    pub(crate) fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub(crate) fn f64(&mut self, v: f64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    /// Length-prefixed run of values.
    pub(crate) fn section<T: Real>(&mut self, values: &[T]) {
        self.u64(values.len() as u64);
        for v in values {
            self.f64(v.as_f64());
        }
    }

    pub(crate) fn finish(self) -> Vec<u8> {
        self.buf
    }
}

pub(crate) struct Decoder<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Decoder<'a> {
    /// Checks magic and version, returns the decoder positioned after the
    /// architecture descriptor.
    pub(crate) fn open(bytes: &'a [u8], version: u32) -> Result<(Self, Architecture)> {
        let mut dec = Self { bytes, pos: 0 };
        if dec.take(4)? != MAGIC {
            return Err(Error::format("bad magic bytes"));
        }
        let found = u32::from_le_bytes(dec.take(4)?.try_into().expect("4 bytes"));
        if found != version {
            return Err(Error::format(format!("unsupported version {found}, expected {version}")));
        }
        let len = dec.u64()? as usize;
        let json = dec.take(len)?;
        let arch: Architecture =
            serde_json::from_slice(json).map_err(|e| Error::format(format!("architecture descriptor: {e}")))?;
        arch.validate()
            .map_err(|e| Error::format(format!("architecture descriptor: {e}")))?;
        Ok((dec, arch))
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::format(format!("truncated file at byte {}", self.pos)))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    pub(crate) fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    pub(crate) fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    pub(crate) fn section<T: Real>(&mut self, expected: Option<usize>) -> Result<Vec<T>> {
        let n = self.u64()? as usize;
        if let Some(e) = expected {
            if n != e {
                return Err(Error::format(format!("section holds {n} values, expected {e}")));
            }
        }
        if n > (self.bytes.len() - self.pos) / 8 {
            return Err(Error::format(format!("truncated file at byte {}", self.pos)));
        }
        (0..n).map(|_| self.f64().map(T::lit)).collect()
    }

    pub(crate) fn finish(self) -> Result<()> {
        if self.pos != self.bytes.len() {
            return Err(Error::format(format!("{} trailing bytes", self.bytes.len() - self.pos)));
        }
        Ok(())
    }
}

pub fn encode_checkpoint<T: Real>(params: &ParamVector<T>, arch: &Architecture) -> Result<Vec<u8>> {
    let expected = arch.param_count()?;
    if params.len() != expected {
        return Err(Error::invalid(format!(
            "parameter vector has {} entries, architecture needs {expected}",
            params.len()
        )));
    }
    let mut enc = Encoder::new(CHECKPOINT_VERSION, arch)?;
    enc.section(params.as_slice());
    Ok(enc.finish())
}

pub fn decode_checkpoint<T: Real>(bytes: &[u8]) -> Result<(Architecture, ParamVector<T>)> {
    let (mut dec, arch) = Decoder::open(bytes, CHECKPOINT_VERSION)?;
    let values = dec.section(Some(arch.param_count()?))?;
    dec.finish()?;
    Ok((arch, ParamVector::new(values)))
}

pub fn save_checkpoint<T: Real>(params: &ParamVector<T>, arch: &Architecture, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_checkpoint(params, arch)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint<T: Real>(path: impl AsRef<Path>) -> Result<(Architecture, ParamVector<T>)> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes)
}

/// Loads a checkpoint that must fit `expected`; a different parameter
/// count is a format error.
pub fn load_checkpoint_expecting<T: Real>(path: impl AsRef<Path>, expected: &Architecture) -> Result<ParamVector<T>> {
    let (arch, params) = load_checkpoint(path)?;
    let want = expected.param_count()?;
    if params.len() != want {
        return Err(Error::format(format!(
            "checkpoint holds {} parameters, architecture needs {want}",
            params.len()
        )));
    }
    if arch != *expected {
        log::warn!("checkpoint architecture differs from the requested one but has the same size");
    }
    Ok(params)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::init_params;
    use crate::rng::seeded_stream;

    fn sample() -> (Architecture, ParamVector<f64>) {
        let arch = Architecture::desk(5);
        let p = init_params(&arch, &mut seeded_stream(8)).unwrap();
        (arch, p)
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let (arch, p) = sample();
        let bytes = encode_checkpoint(&p, &arch).unwrap();
        let (arch2, p2) = decode_checkpoint::<f64>(&bytes).unwrap();
        assert_eq!(arch2, arch);
        assert!(p.as_slice().iter().zip(p2.as_slice()).all(|(a, b)| a.to_bits() == b.to_bits()));
    }

    #[test]
    fn header_layout() {
        let (arch, p) = sample();
        let bytes = encode_checkpoint(&p, &arch).unwrap();
        assert_eq!(&bytes[..4], b"UQHW");
        assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), 1);
        let len = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
        let json: Architecture = serde_json::from_slice(&bytes[16..16 + len]).unwrap();
        assert_eq!(json, arch);
        let count = u64::from_le_bytes(bytes[16 + len..24 + len].try_into().unwrap()) as usize;
        assert_eq!(count, p.len());
        assert_eq!(bytes.len(), 24 + len + 8 * count);
    }

    #[test]
    fn corrupt_magic_and_truncation() {
        let (arch, p) = sample();
        let mut bytes = encode_checkpoint(&p, &arch).unwrap();
        let truncated = &bytes[..bytes.len() - 3];
        assert!(matches!(decode_checkpoint::<f64>(truncated), Err(Error::Format(_))));
        bytes[0] = b'X';
        assert!(matches!(decode_checkpoint::<f64>(&bytes), Err(Error::Format(_))));
    }

    #[test]
    fn size_mismatch_with_other_arch() {
        let (arch, p) = sample();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.ckpt");
        save_checkpoint(&p, &arch, &path).unwrap();
        let other = Architecture::desk(7);
        assert!(matches!(load_checkpoint_expecting::<f64>(&path, &other), Err(Error::Format(_))));
        assert_eq!(load_checkpoint_expecting::<f64>(&path, &arch).unwrap(), p);
    }
}
