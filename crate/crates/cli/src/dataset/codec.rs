//! Binary sample records and shard files.
//!
//! Record layout, all integers little-endian:
//!
//! | bytes | field |
//! |---|---|
//! | 4 | magic `WSR1` |
//! | 2 | format version |
//! | 1 | shape family (0 circle, 1 square, 2 triangle, 3 ring) |
//! | 1 | unit (0 linear power, 1 dB) |
//! | 8 | sample id |
//! | 2 + 2 | measurement rows, columns |
//! | 2 + 2 | mask height, width |
//! | 4 rows cols | measurement, f32 row-major |
//! | h ceil(w/8) | mask, one bit per pixel, MSB first, rows byte-aligned |
//! | 8 | first 8 bytes of SHA-256 over everything above |
//!
//! A shard is a 16-byte header (`WSPS`, version u16, reserved u16, record
//! size u32, record count u32) followed by equal-size records.

use std::io::Write;
use std::path::Path;

use ndarray::Array2;
use sha2::{Digest, Sha256};
use thiserror::Error;
use wisp_core::em::PowerUnit;
use wisp_core::scene::ShapeKind;

pub const RECORD_MAGIC: [u8; 4] = *b"WSR1";
pub const SHARD_MAGIC: [u8; 4] = *b"WSPS";
pub const FORMAT_VERSION: u16 = 1;
pub const RECORD_HEADER_LEN: usize = 24;
pub const SHARD_HEADER_LEN: usize = 16;
const CHECKSUM_LEN: usize = 8;

/// Malformed or unsupported stored data; `offset` is the byte position of
/// the offending record or header within its file.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum FormatError {
    #[error("bad magic at byte {offset}: expected {expected:?}, found {found:?}")]
    Magic {
        offset: u64,
        expected: [u8; 4],
        found: Vec<u8>,
    },
    #[error("unsupported format version {found} at byte {offset} (this build reads version {supported})")]
    Version {
        offset: u64,
        found: u16,
        supported: u16,
    },
    #[error("truncated data at byte {offset}: need {needed} bytes, {available} available")]
    Truncated {
        offset: u64,
        needed: usize,
        available: usize,
    },
    #[error("checksum mismatch in record {id} at byte {offset}")]
    Checksum { offset: u64, id: u64 },
    #[error("SHA-256 of shard {file} does not match the manifest")]
    ShardDigest { file: String },
    #[error("invalid record at byte {offset}: {reason}")]
    Invalid { offset: u64, reason: String },
}

/// One stored training pair.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplePair {
    pub id: u64,
    pub shape: ShapeKind,
    pub unit: PowerUnit,
    /// `(M-1) x M`, column per transmitter.
    pub measurement: Array2<f32>,
    /// 1 marks object pixels, row 0 at `y = 0`.
    pub mask: Array2<u8>,
}

fn mask_row_bytes(w: usize) -> usize {
    w.div_ceil(8)
}

/// Encoded size of a record with the given dimensions.
pub fn record_len(meas: (usize, usize), mask: (usize, usize)) -> usize {
    RECORD_HEADER_LEN + 4 * meas.0 * meas.1 + mask.0 * mask_row_bytes(mask.1) + CHECKSUM_LEN
}

fn unit_code(u: PowerUnit) -> u8 {
    match u {
        PowerUnit::LinearPower => 0,
        PowerUnit::Db => 1,
    }
}

fn checksum(bytes: &[u8]) -> u64 {
    let d = Sha256::digest(bytes);
    u64::from_le_bytes(d[..8].try_into().expect("8 bytes"))
}

fn dim_u16(v: usize, what: &str) -> Result<u16, FormatError> {
    u16::try_from(v).map_err(|_| FormatError::Invalid {
        offset: 0,
        reason: format!("{what} {v} exceeds 65535"),
    })
}

/// Serializes `s`. Mask values other than 0 and 1 are rejected.
pub fn encode_record(s: &SamplePair) -> Result<Vec<u8>, FormatError> {
    let (rows, cols) = s.measurement.dim();
    let (h, w) = s.mask.dim();
    if s.mask.iter().any(|&p| p > 1) {
        return Err(FormatError::Invalid {
            offset: 0,
            reason: format!("mask of sample {} is not binary", s.id),
        });
    }
    let mut out = Vec::with_capacity(record_len((rows, cols), (h, w)));
    out.extend_from_slice(&RECORD_MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.push(s.shape.index() as u8);
    out.push(unit_code(s.unit));
    out.extend_from_slice(&s.id.to_le_bytes());
    for (v, what) in [
        (rows, "rows"),
        (cols, "columns"),
        (h, "mask height"),
        (w, "mask width"),
    ] {
        out.extend_from_slice(&dim_u16(v, what)?.to_le_bytes());
    }
    for v in s.measurement.iter() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for row in s.mask.rows() {
        let mut packed = vec![0u8; mask_row_bytes(w)];
        for (x, &p) in row.iter().enumerate() {
            if p == 1 {
                packed[x / 8] |= 0x80 >> (x % 8);
            }
        }
        out.extend_from_slice(&packed);
    }
    let sum = checksum(&out);
    out.extend_from_slice(&sum.to_le_bytes());
    Ok(out)
}

fn u16_at(b: &[u8], i: usize) -> u16 {
    u16::from_le_bytes([b[i], b[i + 1]])
}

fn need(bytes: &[u8], n: usize, offset: u64) -> Result<(), FormatError> {
    if bytes.len() < n {
        return Err(FormatError::Truncated {
            offset,
            needed: n,
            available: bytes.len(),
        });
    }
    Ok(())
}

/// Parses the record at the start of `bytes`, which sits at `offset` in its
/// file. Returns the sample and the number of bytes consumed. Nothing past
/// the version field is read unless the version is supported.
pub fn decode_record(bytes: &[u8], offset: u64) -> Result<(SamplePair, usize), FormatError> {
    need(bytes, 6, offset)?;
    if bytes[..4] != RECORD_MAGIC {
        return Err(FormatError::Magic {
            offset,
            expected: RECORD_MAGIC,
            found: bytes[..4].to_vec(),
        });
    }
    let version = u16_at(bytes, 4);
    if version != FORMAT_VERSION {
        return Err(FormatError::Version {
            offset,
            found: version,
            supported: FORMAT_VERSION,
        });
    }
    need(bytes, RECORD_HEADER_LEN, offset)?;
    let id = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes"));
    let (rows, cols) = (u16_at(bytes, 16) as usize, u16_at(bytes, 18) as usize);
    let (h, w) = (u16_at(bytes, 20) as usize, u16_at(bytes, 22) as usize);
    let len = record_len((rows, cols), (h, w));
    need(bytes, len, offset)?;
    let body = len - CHECKSUM_LEN;
    let stored = u64::from_le_bytes(bytes[body..len].try_into().expect("8 bytes"));
    if checksum(&bytes[..body]) != stored {
        return Err(FormatError::Checksum { offset, id });
    }
    let invalid = |reason: String| FormatError::Invalid { offset, reason };
    let shape = ShapeKind::from_index(bytes[6] as usize)
        .ok_or_else(|| invalid(format!("unknown shape code {}", bytes[6])))?;
    let unit = match bytes[7] {
        0 => PowerUnit::LinearPower,
        1 => PowerUnit::Db,
        c => return Err(invalid(format!("unknown unit code {c}"))),
    };
    let mut p = RECORD_HEADER_LEN;
    let mut values = Vec::with_capacity(rows * cols);
    for _ in 0..rows * cols {
        values.push(f32::from_le_bytes(
            bytes[p..p + 4].try_into().expect("4 bytes"),
        ));
        p += 4;
    }
    let measurement = Array2::from_shape_vec((rows, cols), values).expect("length matches");
    let stride = mask_row_bytes(w);
    let mask = Array2::from_shape_fn((h, w), |(y, x)| {
        (bytes[p + y * stride + x / 8] >> (7 - x % 8)) & 1
    });
    Ok((
        SamplePair {
            id,
            shape,
            unit,
            measurement,
            mask,
        },
        len,
    ))
}

/// Shard file contents for `records`, which must all encode to one size.
pub fn encode_shard(records: &[SamplePair]) -> Result<Vec<u8>, FormatError> {
    let encoded: Vec<Vec<u8>> = records
        .iter()
        .map(encode_record)
        .collect::<Result<_, _>>()?;
    let size = encoded.first().map_or(0, Vec::len);
    if encoded.iter().any(|r| r.len() != size) {
        return Err(FormatError::Invalid {
            offset: 0,
            reason: "records in one shard must share dimensions".into(),
        });
    }
    let too_big = |what: &str| FormatError::Invalid {
        offset: 0,
        reason: format!("{what} does not fit in 32 bits"),
    };
    let mut out = Vec::with_capacity(SHARD_HEADER_LEN + size * encoded.len());
    out.extend_from_slice(&SHARD_MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&0u16.to_le_bytes());
    out.extend_from_slice(
        &u32::try_from(size)
            .map_err(|_| too_big("record size"))?
            .to_le_bytes(),
    );
    out.extend_from_slice(
        &u32::try_from(encoded.len())
            .map_err(|_| too_big("record count"))?
            .to_le_bytes(),
    );
    for r in encoded {
        out.extend_from_slice(&r);
    }
    Ok(out)
}

/// Parsed shard header.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ShardHeader {
    pub record_size: usize,
    pub record_count: usize,
}

impl ShardHeader {
    /// Byte offset of record `i`.
    pub fn offset_of(&self, i: usize) -> u64 {
        (SHARD_HEADER_LEN + i * self.record_size) as u64
    }
}

pub fn decode_shard_header(bytes: &[u8]) -> Result<ShardHeader, FormatError> {
    need(bytes, 6, 0)?;
    if bytes[..4] != SHARD_MAGIC {
        return Err(FormatError::Magic {
            offset: 0,
            expected: SHARD_MAGIC,
            found: bytes[..4].to_vec(),
        });
    }
    let version = u16_at(bytes, 4);
    if version != FORMAT_VERSION {
        return Err(FormatError::Version {
            offset: 0,
            found: version,
            supported: FORMAT_VERSION,
        });
    }
    need(bytes, SHARD_HEADER_LEN, 0)?;
    let u32_at =
        |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().expect("4 bytes")) as usize;
    Ok(ShardHeader {
        record_size: u32_at(8),
        record_count: u32_at(12),
    })
}

/// Decodes every record of a shard held in memory.
pub fn decode_shard(bytes: &[u8]) -> Result<Vec<SamplePair>, FormatError> {
    let header = decode_shard_header(bytes)?;
    let total = SHARD_HEADER_LEN + header.record_size * header.record_count;
    need(bytes, total, 0)?;
    (0..header.record_count)
        .map(|i| {
            let off = header.offset_of(i);
            let (s, used) = decode_record(&bytes[off as usize..total], off)?;
            if used != header.record_size {
                return Err(FormatError::Invalid {
                    offset: off,
                    reason: format!(
                        "record size {used} differs from shard header {}",
                        header.record_size
                    ),
                });
            }
            Ok(s)
        })
        .collect()
}

pub fn write_shard(path: &Path, records: &[SamplePair]) -> Result<Vec<u8>, crate::error::CliError> {
    let bytes = encode_shard(records)?;
    let mut f = std::fs::File::create(path)
        .map_err(|e| crate::error::CliError::io(path.display().to_string(), e))?;
    f.write_all(&bytes)
        .and_then(|_| f.sync_all())
        .map_err(|e| crate::error::CliError::io(path.display().to_string(), e))?;
    Ok(bytes)
}

pub fn read_shard(path: &Path) -> Result<Vec<SamplePair>, crate::error::CliError> {
    let bytes = std::fs::read(path)
        .map_err(|e| crate::error::CliError::io(path.display().to_string(), e))?;
    Ok(decode_shard(&bytes)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> SamplePair {
        SamplePair {
            id: 42,
            shape: ShapeKind::Triangle,
            unit: PowerUnit::Db,
            measurement: Array2::from_shape_fn((19, 20), |(r, c)| r as f32 - 0.5 * c as f32),
            mask: Array2::from_shape_fn((256, 256), |(y, x)| ((x * 7 + y * 3) % 5 == 0) as u8),
        }
    }

    #[test]
    fn default_record_is_9744_bytes() {
        assert_eq!(record_len((19, 20), (256, 256)), 9744);
        assert_eq!(encode_record(&sample()).unwrap().len(), 9744);
    }

    #[test]
    fn header_fields_sit_at_fixed_offsets() {
        let b = encode_record(&sample()).unwrap();
        assert_eq!(&b[..4], b"WSR1");
        assert_eq!(u16_at(&b, 4), 1);
        assert_eq!(b[6], 2);
        assert_eq!(b[7], 1);
        assert_eq!(u64::from_le_bytes(b[8..16].try_into().unwrap()), 42);
        assert_eq!((u16_at(&b, 16), u16_at(&b, 18)), (19, 20));
        assert_eq!((u16_at(&b, 20), u16_at(&b, 22)), (256, 256));
    }

    #[test]
    fn mask_bits_are_msb_first_with_padded_rows() {
        let s = SamplePair {
            measurement: Array2::zeros((2, 3)),
            mask: Array2::from_shape_vec(
                (2, 9),
                vec![1, 0, 0, 0, 0, 0, 0, 1, 1, 0, 1, 0, 0, 0, 0, 0, 0, 0],
            )
            .unwrap(),
            ..sample()
        };
        let b = encode_record(&s).unwrap();
        let p = RECORD_HEADER_LEN + 4 * 6;
        assert_eq!(&b[p..p + 4], &[0b1000_0001, 0b1000_0000, 0b0100_0000, 0]);
        assert_eq!(decode_record(&b, 0).unwrap().0, s);
    }

    #[test]
    fn non_binary_mask_is_rejected() {
        let mut s = sample();
        s.mask[[0, 0]] = 2;
        assert!(encode_record(&s).is_err());
    }
}
