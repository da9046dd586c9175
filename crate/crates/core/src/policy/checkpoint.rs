//! Flat binary weight checkpoints.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic      8 bytes  "COAPOLCY"
//! version    u32      1
//! config     u32 length + UTF-8 JSON of PolicyConfig
//! hash       64 bytes lowercase hex SHA-256 of the canonical config JSON
//! steps      u64      optimizer steps taken
//! count      u32      number of arrays
//! per array: u32 name length, name, u32 rows, u32 cols, rows*cols f32
//! ```

use std::path::Path;

use sha2::{Digest, Sha256};

use crate::nn::Mat;

use super::model::Policy;
use super::{PolicyConfig, PolicyError};

pub const MAGIC: &[u8; 8] = b"COAPOLCY";
pub const VERSION: u32 = 1;

/// SHA-256 of the config serialized with sorted keys. The seed is left out
/// so a checkpoint can be evaluated under any run seed.
pub fn config_hash(cfg: &PolicyConfig) -> String {
    let value = serde_json::to_value(PolicyConfig { seed: 0, ..cfg.clone() }).expect("config serializes");
    hex::encode(Sha256::digest(value.to_string().as_bytes()))
}

pub fn encode(policy: &Policy) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    let json = serde_json::to_value(&policy.cfg).expect("config serializes").to_string();
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(json.as_bytes());
    out.extend_from_slice(config_hash(&policy.cfg).as_bytes());
    out.extend_from_slice(&policy.steps_trained.to_le_bytes());
    let p = &policy.params;
    out.extend_from_slice(&(p.values.len() as u32).to_le_bytes());
    for (name, v) in p.names.iter().zip(&p.values) {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(v.nrows() as u32).to_le_bytes());
        out.extend_from_slice(&(v.ncols() as u32).to_le_bytes());
        for x in v.iter() {
            out.extend_from_slice(&(*x as f32).to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], String> {
        let end = self.pos.checked_add(n).filter(|e| *e <= self.buf.len()).ok_or("truncated file")?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, String> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64, String> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn string(&mut self, n: usize) -> Result<String, String> {
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| "invalid UTF-8".to_string())
    }
}

/// Parses a checkpoint. With `expected_hash`, a different stored config
/// hash is a [`PolicyError::CheckpointMismatch`].
pub fn decode(bytes: &[u8], path: &str, expected_hash: Option<&str>) -> Result<Policy, PolicyError> {
    let fail = |message: String| PolicyError::Checkpoint { path: path.to_string(), message };
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.take(8).map_err(fail)? != MAGIC {
        return Err(fail("bad magic".into()));
    }
    let version = r.u32().map_err(fail)?;
    if version != VERSION {
        return Err(fail(format!("unsupported version {version}")));
    }
    let len = r.u32().map_err(fail)? as usize;
    let json = r.string(len).map_err(fail)?;
    let cfg: PolicyConfig = serde_json::from_str(&json).map_err(|e| fail(format!("config: {e}")))?;
    let stored = r.string(64).map_err(fail)?;
    if stored != config_hash(&cfg) {
        return Err(fail("config hash does not match stored config".into()));
    }
    if let Some(expected) = expected_hash {
        if expected != stored {
            return Err(PolicyError::CheckpointMismatch { expected: expected.to_string(), found: stored });
        }
    }
    let steps = r.u64().map_err(fail)?;
    let mut policy = Policy::new(cfg)?;
    policy.steps_trained = steps;
    let count = r.u32().map_err(fail)? as usize;
    if count != policy.params.values.len() {
        return Err(fail(format!("{count} arrays, expected {}", policy.params.values.len())));
    }
    for i in 0..count {
        let n = r.u32().map_err(fail)? as usize;
        let name = r.string(n).map_err(fail)?;
        if name != policy.params.names[i] {
            return Err(fail(format!("array {i} is {name}, expected {}", policy.params.names[i])));
        }
        let rows = r.u32().map_err(fail)? as usize;
        let cols = r.u32().map_err(fail)? as usize;
        if (rows, cols) != policy.params.values[i].dim() {
            return Err(fail(format!("array {name} has shape {rows}x{cols}")));
        }
        let raw = r.take(rows * cols * 4).map_err(fail)?;
        let data = raw.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64).collect();
        policy.params.values[i] = Mat::from_shape_vec((rows, cols), data).expect("shape checked");
    }
    if r.pos != bytes.len() {
        return Err(fail("trailing bytes".into()));
    }
    Ok(policy)
}

pub fn save(policy: &Policy, path: &Path) -> Result<(), PolicyError> {
    std::fs::write(path, encode(policy)).map_err(|source| PolicyError::Io { path: path.display().to_string(), source })
}

pub fn load(path: &Path, expected_hash: Option<&str>) -> Result<Policy, PolicyError> {
    let bytes = std::fs::read(path).map_err(|source| PolicyError::Io { path: path.display().to_string(), source })?;
    decode(&bytes, &path.display().to_string(), expected_hash)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> Policy {
        let cfg = PolicyConfig { resolution: 16, patch: 8, width: 8, ff_hidden: 8, denoiser_hidden: 8, ..Default::default() };
        let mut p = Policy::new(cfg).unwrap();
        p.steps_trained = 17;
        p
    }

    #[test]
    fn roundtrip_rounds_to_f32() {
        let p = small();
        let bytes = encode(&p);
        let q = decode(&bytes, "mem", Some(&config_hash(&p.cfg))).unwrap();
        assert_eq!(q.steps_trained, 17);
        assert_eq!(q.cfg, p.cfg);
        for (a, b) in p.params.values.iter().zip(&q.params.values) {
            for (x, y) in a.iter().zip(b.iter()) {
                assert_eq!(*x as f32 as f64, *y);
            }
        }
        // Re-encoding a decoded checkpoint is byte-stable.
        assert_eq!(encode(&q), bytes);
    }

    #[test]
    fn hash_mismatch_and_corruption_are_reported() {
        let p = small();
        let bytes = encode(&p);
        assert!(matches!(decode(&bytes, "m", Some("00")), Err(PolicyError::CheckpointMismatch { .. })));
        assert!(matches!(decode(&bytes[..bytes.len() - 1], "m", None), Err(PolicyError::Checkpoint { .. })));
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(decode(&bad, "m", None), Err(PolicyError::Checkpoint { .. })));
    }

    #[test]
    fn hash_ignores_field_order() {
        let cfg = PolicyConfig::default();
        let mut v = serde_json::to_value(&cfg).unwrap();
        let obj = v.as_object_mut().unwrap();
        let reversed: serde_json::Map<_, _> = obj.clone().into_iter().rev().collect();
        let back: PolicyConfig = serde_json::from_value(serde_json::Value::Object(reversed)).unwrap();
        assert_eq!(config_hash(&back), config_hash(&cfg));
        assert_eq!(config_hash(&PolicyConfig { seed: 1, ..cfg.clone() }), config_hash(&cfg));
        assert_ne!(config_hash(&PolicyConfig { horizon: 6, ..cfg.clone() }), config_hash(&cfg));
    }

    #[test]
    fn missing_file_names_path() {
        let err = load(Path::new("/nonexistent/ckpt.bin"), None).unwrap_err();
        assert!(err.to_string().contains("/nonexistent/ckpt.bin"));
    }
}
