//! The `.msim` checkpoint container: every trainable tensor of one model,
//! plus its architecture config, as named binary entries.
//!
//! Little-endian layout:
//!
//! ```text
//! magic "MSIM" (4 bytes), version u32 (currently 1), count u32,
//! then `count` entries:
//!   name_len u16, name bytes (UTF-8),
//!   rank u8, extents u32 x rank,
//!   precision u8 (bytes per scalar, 4 or 8),
//!   raw scalars (product of extents; rank 0 means one scalar)
//! ```
//!
//! The architecture config is stored first as rank-0 entries named
//! `cfg.*` (booleans as 0/1), followed by the tensors in the canonical
//! order of [`ModelParams::named_tensors`]. All entries are written at the
//! model's working precision, so write-then-read at the same precision is
//! bit-exact; reading at a different precision converts through 64-bit.

use std::path::Path;

use crate::error::{Error, Result};
use crate::model::{ModelConfig, ModelParams};
use crate::real::Real;

pub const MSIM_MAGIC: [u8; 4] = *b"MSIM";
pub const MSIM_VERSION: u32 = 1;

/// `cfg.*` entry names, in their fixed on-disk order.
const CFG_KEYS: [&str; 10] = [
    "cfg.seg_len",
    "cfg.channels",
    "cfg.n_classes",
    "cfg.d_model",
    "cfg.num_layers",
    "cfg.top_k",
    "cfg.use_mstb",
    "cfg.use_inverted",
    "cfg.use_mamba",
    "cfg.selective",
];

fn cfg_values(cfg: &ModelConfig) -> [f64; 10] {
    [
        cfg.seg_len as f64,
        cfg.channels as f64,
        cfg.n_classes as f64,
        cfg.d_model as f64,
        cfg.num_layers as f64,
        cfg.top_k as f64,
        cfg.use_mstb as u8 as f64,
        cfg.use_inverted as u8 as f64,
        cfg.use_mamba as u8 as f64,
        cfg.selective as u8 as f64,
    ]
}

// ── Encoding ────────────────────────────────────────────────────────────

fn write_entry<T: Real>(out: &mut Vec<u8>, name: &str, extents: &[usize], values: &[T]) {
    out.extend_from_slice(&(name.len() as u16).to_le_bytes());
    out.extend_from_slice(name.as_bytes());
    out.push(extents.len() as u8);
    for e in extents {
        out.extend_from_slice(&(*e as u32).to_le_bytes());
    }
    out.push(T::BYTES);
    for v in values {
        v.write_le(out);
    }
}

/// Serialize a model at `T`'s native scalar width.
pub fn encode_params<T: Real>(params: &ModelParams<T>) -> Result<Vec<u8>> {
    params.config.validate()?;
    let named = params.named_tensors();
    let mut out = Vec::new();
    out.extend_from_slice(&MSIM_MAGIC);
    out.extend_from_slice(&MSIM_VERSION.to_le_bytes());
    out.extend_from_slice(&((CFG_KEYS.len() + named.len()) as u32).to_le_bytes());
    for (key, val) in CFG_KEYS.iter().zip(cfg_values(&params.config)) {
        write_entry::<T>(&mut out, key, &[], &[T::from_f64(val)]);
    }
    for (name, values, extents) in named {
        write_entry::<T>(&mut out, &name, &extents, values);
    }
    Ok(out)
}

pub fn write_params<T: Real>(path: &Path, params: &ModelParams<T>) -> Result<()> {
    Ok(std::fs::write(path, encode_params(params)?)?)
}

// ── Decoding ────────────────────────────────────────────────────────────

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

    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    fn u16(&mut self, what: &str) -> Result<u16> {
        let b = self.take(2, what)?;
        Ok(u16::from_le_bytes([b[0], b[1]]))
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}

struct Entry {
    name: String,
    extents: Vec<usize>,
    /// Scalars widened to 64-bit (exact when stored narrower).
    values: Vec<f64>,
    offset: u64,
}

fn read_entry(cur: &mut Cursor) -> Result<Entry> {
    let offset = cur.pos as u64;
    let name_len = cur.u16("entry name length")? as usize;
    let name_bytes = cur.take(name_len, "entry name")?;
    let name = std::str::from_utf8(name_bytes)
        .map_err(|_| Error::Format {
            offset,
            msg: "entry name is not UTF-8".into(),
        })?
        .to_string();
    let rank = cur.u8("entry rank")? as usize;
    let mut extents = Vec::with_capacity(rank);
    let mut numel: usize = 1;
    for i in 0..rank {
        let e = cur.u32(&format!("extent {i} of {name}"))? as usize;
        numel = numel.checked_mul(e).ok_or_else(|| Error::Format {
            offset,
            msg: format!("extents of {name} overflow"),
        })?;
        extents.push(e);
    }
    let precision = cur.u8("entry precision")?;
    if precision != 4 && precision != 8 {
        return Err(Error::Format {
            offset: (cur.pos - 1) as u64,
            msg: format!("precision byte of {name} is {precision}, expected 4 or 8"),
        });
    }
    let raw = cur.take(numel * precision as usize, &format!("scalars of {name}"))?;
    let values = raw
        .chunks_exact(precision as usize)
        .map(|c| {
            if precision == 4 {
                f32::read_le(c) as f64
            } else {
                f64::read_le(c)
            }
        })
        .collect();
    Ok(Entry {
        name,
        extents,
        values,
        offset,
    })
}

fn cfg_usize(e: &Entry) -> Result<usize> {
    let v = e.values[0];
    if v < 0.0 || v.fract() != 0.0 || !v.is_finite() {
        return Err(Error::Format {
            offset: e.offset,
            msg: format!("{} holds {v}, expected a non-negative integer", e.name),
        });
    }
    Ok(v as usize)
}

fn cfg_bool(e: &Entry) -> Result<bool> {
    let v = e.values[0];
    if v == 0.0 {
        Ok(false)
    } else if v == 1.0 {
        Ok(true)
    } else {
        Err(Error::Format {
            offset: e.offset,
            msg: format!("{} holds {v}, expected 0 or 1", e.name),
        })
    }
}

/// Parse a checkpoint, converting scalars to `T` if the stored precision
/// differs (widening is exact; narrowing rounds).
pub fn decode_params<T: Real>(bytes: &[u8]) -> Result<ModelParams<T>> {
    let mut cur = Cursor { bytes, pos: 0 };
    let magic = cur.take(4, "magic")?;
    if magic != MSIM_MAGIC {
        return Err(Error::Format {
            offset: 0,
            msg: format!("bad magic {magic:?}, expected \"MSIM\""),
        });
    }
    let version = cur.u32("version")?;
    if version != MSIM_VERSION {
        return Err(Error::Format {
            offset: 4,
            msg: format!("unsupported version {version}"),
        });
    }
    let count = cur.u32("entry count")? as usize;
    if count < CFG_KEYS.len() {
        return Err(Error::Format {
            offset: 8,
            msg: format!("{count} entries cannot hold the {} config keys", CFG_KEYS.len()),
        });
    }
    let mut entries = Vec::with_capacity(count);
    for _ in 0..count {
        entries.push(read_entry(&mut cur)?);
    }
    if cur.pos != bytes.len() {
        return Err(Error::Format {
            offset: cur.pos as u64,
            msg: format!("{} trailing bytes after the last entry", bytes.len() - cur.pos),
        });
    }

    for (key, e) in CFG_KEYS.iter().zip(&entries) {
        if e.name != *key || !e.extents.is_empty() {
            return Err(Error::Format {
                offset: e.offset,
                msg: format!("expected config entry {key}, found {} (rank {})", e.name, e.extents.len()),
            });
        }
    }
    let cfg = ModelConfig {
        seg_len: cfg_usize(&entries[0])?,
        channels: cfg_usize(&entries[1])?,
        n_classes: cfg_usize(&entries[2])?,
        d_model: cfg_usize(&entries[3])?,
        num_layers: cfg_usize(&entries[4])?,
        top_k: cfg_usize(&entries[5])?,
        use_mstb: cfg_bool(&entries[6])?,
        use_inverted: cfg_bool(&entries[7])?,
        use_mamba: cfg_bool(&entries[8])?,
        selective: cfg_bool(&entries[9])?,
    };
    cfg.validate().map_err(|e| Error::Format {
        offset: 12,
        msg: format!("stored config is invalid: {e}"),
    })?;

    let mut params = ModelParams::<T>::zeros(&cfg)?;
    {
        let expected: Vec<(String, Vec<usize>)> = params
            .named_tensors()
            .into_iter()
            .map(|(n, _, e)| (n, e))
            .collect();
        let stored = &entries[CFG_KEYS.len()..];
        if stored.len() != expected.len() {
            return Err(Error::Format {
                offset: 8,
                msg: format!(
                    "config implies {} tensors, file stores {}",
                    expected.len(),
                    stored.len()
                ),
            });
        }
        let slots = params.named_tensors_mut();
        for ((slot, (name, extents)), entry) in slots.into_iter().zip(expected).zip(stored) {
            if entry.name != name {
                return Err(Error::Format {
                    offset: entry.offset,
                    msg: format!("expected tensor {name}, found {}", entry.name),
                });
            }
            if entry.extents != extents {
                return Err(Error::Format {
                    offset: entry.offset,
                    msg: format!("{name}: extents {:?}, expected {extents:?}", entry.extents),
                });
            }
            debug_assert_eq!(slot.1.len(), entry.values.len());
            for (dst, v) in slot.1.iter_mut().zip(&entry.values) {
                *dst = T::from_f64(*v);
            }
        }
    }
    Ok(params)
}

pub fn read_params<T: Real>(path: &Path) -> Result<ModelParams<T>> {
    decode_params(&std::fs::read(path)?)
}

/// The scalar width (4 or 8) a checkpoint was written at, read from its
/// first entry without parsing the rest.
pub fn checkpoint_precision(bytes: &[u8]) -> Result<u8> {
    let mut cur = Cursor { bytes, pos: 0 };
    let magic = cur.take(4, "magic")?;
    if magic != MSIM_MAGIC {
        return Err(Error::Format {
            offset: 0,
            msg: format!("bad magic {magic:?}, expected \"MSIM\""),
        });
    }
    cur.u32("version")?;
    cur.u32("entry count")?;
    let name_len = cur.u16("entry name length")? as usize;
    cur.take(name_len, "entry name")?;
    let rank = cur.u8("entry rank")? as usize;
    cur.take(rank * 4, "entry extents")?;
    cur.u8("entry precision")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_config() -> ModelConfig {
        ModelConfig {
            seg_len: 16,
            channels: 3,
            n_classes: 2,
            d_model: 4,
            num_layers: 2,
            top_k: 2,
            use_mstb: true,
            use_inverted: true,
            use_mamba: true,
            selective: false,
        }
    }

    #[test]
    fn round_trip_is_bit_exact_both_precisions() {
        let p32 = ModelParams::<f32>::init(&sample_config(), 11).unwrap();
        let b32 = encode_params(&p32).unwrap();
        let back32 = decode_params::<f32>(&b32).unwrap();
        assert_eq!(p32, back32);
        assert_eq!(encode_params(&back32).unwrap(), b32, "re-encode must be identical");

        let p64 = ModelParams::<f64>::init(&sample_config(), 11).unwrap();
        let b64 = encode_params(&p64).unwrap();
        let back64 = decode_params::<f64>(&b64).unwrap();
        assert_eq!(p64, back64);
        assert_eq!(encode_params(&back64).unwrap(), b64);
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.msim");
        let p = ModelParams::<f32>::init(&sample_config(), 5).unwrap();
        write_params(&path, &p).unwrap();
        let back = read_params::<f32>(&path).unwrap();
        assert_eq!(p, back);
    }

    #[test]
    fn widening_read_preserves_values() {
        let p32 = ModelParams::<f32>::init(&sample_config(), 3).unwrap();
        let bytes = encode_params(&p32).unwrap();
        assert_eq!(checkpoint_precision(&bytes).unwrap(), 4);
        let p64 = decode_params::<f64>(&bytes).unwrap();
        for ((_, a, _), (_, b, _)) in p32.named_tensors().iter().zip(p64.named_tensors()) {
            for (x, y) in a.iter().zip(b) {
                assert_eq!(*x as f64, *y);
            }
        }
    }

    #[test]
    fn config_flags_survive_the_trip() {
        for (use_mstb, use_inverted, use_mamba) in
            [(false, false, true), (true, false, false), (false, true, true)]
        {
            let cfg = ModelConfig {
                use_mstb,
                use_inverted,
                use_mamba,
                ..sample_config()
            };
            let p = ModelParams::<f32>::init(&cfg, 1).unwrap();
            let back = decode_params::<f32>(&encode_params(&p).unwrap()).unwrap();
            assert_eq!(back.config, cfg);
        }
    }

    #[test]
    fn bad_magic_and_version_are_rejected_with_offsets() {
        let p = ModelParams::<f32>::init(&sample_config(), 0).unwrap();
        let mut bytes = encode_params(&p).unwrap();
        bytes[0] = b'X';
        match decode_params::<f32>(&bytes) {
            Err(Error::Format { offset: 0, .. }) => {}
            other => panic!("expected format error at offset 0, got {other:?}"),
        }
        let mut bytes = encode_params(&p).unwrap();
        bytes[4] = 99;
        match decode_params::<f32>(&bytes) {
            Err(Error::Format { offset: 4, .. }) => {}
            other => panic!("expected version error at offset 4, got {other:?}"),
        }
    }

    #[test]
    fn truncation_and_trailing_bytes_are_rejected() {
        let p = ModelParams::<f32>::init(&sample_config(), 0).unwrap();
        let bytes = encode_params(&p).unwrap();
        let cut = &bytes[..bytes.len() - 3];
        assert!(matches!(decode_params::<f32>(cut), Err(Error::Format { .. })));
        let mut extended = bytes.clone();
        extended.extend_from_slice(&[0, 0]);
        match decode_params::<f32>(&extended) {
            Err(Error::Format { offset, msg }) => {
                assert_eq!(offset, bytes.len() as u64);
                assert!(msg.contains("trailing"), "{msg}");
            }
            other => panic!("expected trailing-bytes error, got {other:?}"),
        }
    }

    #[test]
    fn tampered_tensor_name_is_rejected_by_name() {
        let p = ModelParams::<f32>::init(&sample_config(), 0).unwrap();
        let mut bytes = encode_params(&p).unwrap();
        // Corrupt one byte inside the "embed.w" name.
        let pos = bytes
            .windows(7)
            .position(|w| w == b"embed.w")
            .expect("name present");
        bytes[pos] = b'Z';
        match decode_params::<f32>(&bytes) {
            Err(Error::Format { msg, .. }) => assert!(msg.contains("embed.w"), "{msg}"),
            other => panic!("expected name mismatch, got {other:?}"),
        }
    }

    #[test]
    fn precision_sniffing() {
        let p64 = ModelParams::<f64>::init(&sample_config(), 2).unwrap();
        let bytes = encode_params(&p64).unwrap();
        assert_eq!(checkpoint_precision(&bytes).unwrap(), 8);
    }
}
