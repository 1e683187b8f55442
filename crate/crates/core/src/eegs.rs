//! The `.eegs` segment-dataset container.
//!
//! Fixed little-endian layout, 32-byte header:
//!
//! ```text
//! offset  size  field
//! 0       4     magic "EEGS"
//! 4       4     version (u32, currently 1)
//! 8       4     n_segments (u32)
//! 12      4     seg_len (u32)
//! 16      4     channels (u32)
//! 20      4     n_classes (u32)
//! 24      1     precision: bytes per scalar, 4 or 8
//! 25      7     reserved, must be zero
//! ```
//!
//! followed by `n_segments` records of `label: u32` plus
//! `seg_len * channels` scalars in time-major order (all samples of step 0,
//! then step 1, ...). Encode/decode are exact inverses at matching
//! precision, so write-then-read round-trips bit-for-bit. Decoding errors
//! carry the byte offset at which the data stopped making sense.

use std::path::Path;

use crate::error::{Error, Result};
use crate::real::Real;
use crate::signal::SegmentDataset;

pub const EEGS_MAGIC: [u8; 4] = *b"EEGS";
pub const EEGS_VERSION: u32 = 1;
const HEADER_LEN: usize = 32;

/// Serialize a dataset at `T`'s native scalar width.
pub fn encode_segments<T: Real>(ds: &SegmentDataset<T>) -> Result<Vec<u8>> {
    ds.validate()?;
    let per_seg = 4 + ds.seg_len * ds.channels * T::BYTES as usize;
    let mut out = Vec::with_capacity(HEADER_LEN + ds.len() * per_seg);
    out.extend_from_slice(&EEGS_MAGIC);
    out.extend_from_slice(&EEGS_VERSION.to_le_bytes());
    out.extend_from_slice(&(ds.len() as u32).to_le_bytes());
    out.extend_from_slice(&(ds.seg_len as u32).to_le_bytes());
    out.extend_from_slice(&(ds.channels as u32).to_le_bytes());
    out.extend_from_slice(&ds.n_classes.to_le_bytes());
    out.push(T::BYTES);
    out.extend_from_slice(&[0u8; 7]);
    for (seg, &label) in ds.segments.iter().zip(&ds.labels) {
        out.extend_from_slice(&label.to_le_bytes());
        for v in seg {
            v.write_le(&mut out);
        }
    }
    Ok(out)
}

/// Parse a dataset, converting scalars to `T` if the stored precision
/// differs (widening is exact; narrowing rounds).
pub fn decode_segments<T: Real>(bytes: &[u8]) -> Result<SegmentDataset<T>> {
    let mut cur = Cursor { bytes, pos: 0 };
    let magic = cur.take(4, "magic")?;
    if magic != EEGS_MAGIC {
        return Err(Error::Format {
            offset: 0,
            msg: format!("bad magic {:?}, expected \"EEGS\"", &magic[..4.min(magic.len())]),
        });
    }
    let version = cur.u32("version")?;
    if version != EEGS_VERSION {
        return Err(Error::Format {
            offset: 4,
            msg: format!("unsupported version {version}"),
        });
    }
    let n_segments = cur.u32("segment count")? as usize;
    let seg_len = cur.u32("segment length")? as usize;
    let channels = cur.u32("channel count")? as usize;
    let n_classes = cur.u32("class count")?;
    let precision = cur.take(1, "precision")?[0];
    if precision != 4 && precision != 8 {
        return Err(Error::Format {
            offset: 24,
            msg: format!("precision byte must be 4 or 8, got {precision}"),
        });
    }
    let reserved = cur.take(7, "reserved bytes")?;
    if reserved.iter().any(|b| *b != 0) {
        return Err(Error::Format {
            offset: 25,
            msg: "reserved bytes must be zero".into(),
        });
    }

    let scalars = seg_len.checked_mul(channels).ok_or_else(|| Error::Format {
        offset: 12,
        msg: format!("extent overflow: {seg_len} x {channels}"),
    })?;
    let seg_bytes = scalars
        .checked_mul(precision as usize)
        .and_then(|b| b.checked_add(4))
        .ok_or_else(|| Error::Format {
            offset: 12,
            msg: "extent overflow: segment byte size".into(),
        })?;
    let payload = n_segments.checked_mul(seg_bytes).ok_or_else(|| Error::Format {
        offset: 8,
        msg: format!("extent overflow: {n_segments} segments of {seg_bytes} bytes"),
    })?;
    if bytes.len() != HEADER_LEN + payload {
        let msg = if bytes.len() < HEADER_LEN + payload {
            format!(
                "truncated payload: have {} bytes, header promises {}",
                bytes.len(),
                HEADER_LEN + payload
            )
        } else {
            format!(
                "trailing bytes: have {} bytes, header promises {}",
                bytes.len(),
                HEADER_LEN + payload
            )
        };
        return Err(Error::Format {
            offset: bytes.len().min(HEADER_LEN + payload) as u64,
            msg,
        });
    }

    let mut segments = Vec::with_capacity(n_segments);
    let mut labels = Vec::with_capacity(n_segments);
    for i in 0..n_segments {
        let label_offset = cur.pos;
        let label = cur.u32("segment label")?;
        if label >= n_classes {
            return Err(Error::Format {
                offset: label_offset as u64,
                msg: format!("segment {i} labeled {label}, dataset has {n_classes} classes"),
            });
        }
        labels.push(label);
        let mut seg = Vec::with_capacity(scalars);
        if precision == T::BYTES {
            for _ in 0..scalars {
                let raw = cur.take(T::BYTES as usize, "sample")?;
                seg.push(T::read_le(raw));
            }
        } else if precision == 8 {
            for _ in 0..scalars {
                let raw = cur.take(8, "sample")?;
                seg.push(T::from_f64(f64::read_le(raw)));
            }
        } else {
            for _ in 0..scalars {
                let raw = cur.take(4, "sample")?;
                seg.push(T::from_f64(f32::read_le(raw) as f64));
            }
        }
        segments.push(seg);
    }

    Ok(SegmentDataset {
        segments,
        labels,
        n_classes,
        seg_len,
        channels,
    })
}

pub fn write_segments<T: Real>(ds: &SegmentDataset<T>, path: &Path) -> Result<()> {
    let bytes = encode_segments(ds)?;
    std::fs::write(path, bytes)?;
    Ok(())
}

pub fn read_segments<T: Real>(path: &Path) -> Result<SegmentDataset<T>> {
    let bytes = std::fs::read(path)?;
    decode_segments(&bytes)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::Format {
                offset: self.bytes.len() as u64,
                msg: format!(
                    "truncated: needed {n} bytes for {what} at offset {}, file ends at {}",
                    self.pos,
                    self.bytes.len()
                ),
            });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}
