//! Binary checkpoint format.
//!
//! Little-endian layout:
//!
//! ```text
//! magic      8 bytes   "COBRAMDL"
//! version    u32       1
//! count      u32       number of tensors
//! per tensor:
//!   name_len u16, name (UTF-8), rows u32, cols u32, rows*cols f64 (row-major)
//! ```
//!
//! Values are always stored as `f64`, so an `f32` model round-trips exactly
//! and an `f64` model round-trips bit-for-bit. Trailing bytes are rejected.

use std::fs;
use std::path::Path;

use super::{ClassifierHead, CobraModel};
use crate::error::{Error, Result};
use crate::numeric::{Matrix, Scalar};

pub const MAGIC: &[u8; 8] = b"COBRAMDL";
pub const VERSION: u32 = 1;

pub fn encode_tensors(tensors: &[(String, Matrix<f64>)]) -> Result<Vec<u8>> {
    let payload: usize = tensors
        .iter()
        .map(|(n, m)| 2 + n.len() + 8 + 8 * m.as_slice().len())
        .sum();
    let mut out = Vec::with_capacity(16 + payload);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
    for (name, m) in tensors {
        let len = u16::try_from(name.len())
            .map_err(|_| Error::Parameter(format!("tensor name too long: {name}")))?;
        out.extend_from_slice(&len.to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(m.rows() as u32).to_le_bytes());
        out.extend_from_slice(&(m.cols() as u32).to_le_bytes());
        for v in m.as_slice() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(Error::Format {
                offset: self.pos as u64,
                msg: format!("truncated while reading {what}"),
            });
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u16(&mut self, what: &str) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().unwrap()))
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }
}

pub fn decode_tensors(buf: &[u8]) -> Result<Vec<(String, Matrix<f64>)>> {
    let mut r = Reader { buf, pos: 0 };
    if r.take(8, "magic")? != MAGIC {
        return Err(Error::Format {
            offset: 0,
            msg: "bad magic (expected COBRAMDL)".into(),
        });
    }
    let version = r.u32("version")?;
    if version != VERSION {
        return Err(Error::UnsupportedVersion {
            found: version,
            expected: VERSION,
        });
    }
    let count = r.u32("tensor count")?;
    let mut out = Vec::with_capacity(count.min(1024) as usize);
    for _ in 0..count {
        let name_at = r.pos;
        let len = r.u16("name length")? as usize;
        let name = std::str::from_utf8(r.take(len, "name")?)
            .map_err(|_| Error::Format {
                offset: name_at as u64 + 2,
                msg: "tensor name is not UTF-8".into(),
            })?
            .to_owned();
        let rows = r.u32("rows")? as usize;
        let cols = r.u32("cols")? as usize;
        let n = rows.checked_mul(cols).and_then(|n| n.checked_mul(8)).ok_or(Error::Format {
            offset: r.pos as u64,
            msg: format!("tensor `{name}` shape overflows"),
        })?;
        let bytes = r.take(n, &format!("values of `{name}`"))?;
        let data = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        out.push((name, Matrix::from_vec(rows, cols, data)?));
    }
    if r.pos != buf.len() {
        return Err(Error::Format {
            offset: r.pos as u64,
            msg: format!("{} trailing bytes after last tensor", buf.len() - r.pos),
        });
    }
    Ok(out)
}

pub fn write_tensors(path: &Path, tensors: &[(String, Matrix<f64>)]) -> Result<()> {
    let bytes = encode_tensors(tensors)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_tensors(path: &Path) -> Result<Vec<(String, Matrix<f64>)>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_tensors(&bytes)
}

pub fn save_checkpoint<T: Scalar>(model: &CobraModel<T>, path: &Path) -> Result<()> {
    write_tensors(path, &model.to_tensors())
}

pub fn load_checkpoint<T: Scalar>(path: &Path) -> Result<CobraModel<T>> {
    CobraModel::from_tensors(read_tensors(path)?)
}

pub fn save_head<T: Scalar>(head: &ClassifierHead<T>, path: &Path) -> Result<()> {
    write_tensors(path, &head.to_tensors())
}

pub fn load_head<T: Scalar>(path: &Path) -> Result<ClassifierHead<T>> {
    ClassifierHead::from_tensors(read_tensors(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Vec<(String, Matrix<f64>)> {
        vec![
            ("a".into(), Matrix::from_fn(2, 3, |r, c| r as f64 - c as f64 * 0.1)),
            ("bb".into(), Matrix::filled(1, 1, f64::MIN_POSITIVE)),
        ]
    }

    #[test]
    fn header_layout() {
        let bytes = encode_tensors(&sample()).unwrap();
        assert_eq!(&bytes[..8], b"COBRAMDL");
        assert_eq!(&bytes[8..12], &1u32.to_le_bytes());
        assert_eq!(&bytes[12..16], &2u32.to_le_bytes());
        assert_eq!(&bytes[16..18], &1u16.to_le_bytes());
        assert_eq!(bytes[18], b'a');
        assert_eq!(bytes.len(), 16 + (2 + 1 + 8 + 48) + (2 + 2 + 8 + 8));
    }

    #[test]
    fn corrupted_magic() {
        let mut bytes = encode_tensors(&sample()).unwrap();
        bytes[0] = b'X';
        assert!(matches!(decode_tensors(&bytes), Err(Error::Format { offset: 0, .. })));
    }

    #[test]
    fn version_mismatch() {
        let mut bytes = encode_tensors(&sample()).unwrap();
        bytes[8..12].copy_from_slice(&2u32.to_le_bytes());
        assert!(matches!(
            decode_tensors(&bytes),
            Err(Error::UnsupportedVersion { found: 2, expected: 1 })
        ));
    }

    #[test]
    fn truncation_reports_offset() {
        let bytes = encode_tensors(&sample()).unwrap();
        let cut = &bytes[..bytes.len() - 3];
        match decode_tensors(cut) {
            Err(Error::Format { offset, .. }) => assert_eq!(offset as usize, bytes.len() - 8),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn trailing_bytes_rejected() {
        let mut bytes = encode_tensors(&sample()).unwrap();
        let end = bytes.len();
        bytes.push(0);
        match decode_tensors(&bytes) {
            Err(Error::Format { offset, .. }) => assert_eq!(offset as usize, end),
            other => panic!("{other:?}"),
        }
    }
}
