//! Versioned binary checkpoint container.
//!
//! Layout (little-endian): magic `IONH1`, u16 version, u64 spec hash,
//! u64 trajectory count, then one length-prefixed record per trajectory.

use std::path::Path;

use sha2::{Digest, Sha256};

use crate::binio::{Reader, Writer};
use crate::{Error, Result};

pub const MAGIC: &[u8; 5] = b"IONH1";
pub const VERSION: u16 = 1;

/// First eight bytes of the SHA-256 of `bytes`, little-endian.
pub fn hash64(bytes: &[u8]) -> u64 {
    let d = Sha256::digest(bytes);
    let mut b = [0u8; 8];
    b.copy_from_slice(&d[..8]);
    u64::from_le_bytes(b)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Checkpoint {
    pub spec_hash: u64,
    /// Opaque per-trajectory payloads in index order.
    pub records: Vec<Vec<u8>>,
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.bytes(MAGIC);
        w.u16(VERSION);
        w.u64(self.spec_hash);
        w.u64(self.records.len() as u64);
        for r in &self.records {
            w.record(r);
        }
        w.into_bytes()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes);
        if r.take(MAGIC.len())? != MAGIC {
            return Err(Error::Checkpoint("bad magic".into()));
        }
        let v = r.u16()?;
        if v != VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {v}")));
        }
        let spec_hash = r.u64()?;
        let n = r.u64()? as usize;
        let mut records = Vec::with_capacity(n.min(1 << 20));
        for _ in 0..n {
            let mut rec = r.record()?;
            records.push(rec.take(rec.remaining())?.to_vec());
        }
        if !r.is_empty() {
            return Err(Error::Checkpoint("trailing bytes".into()));
        }
        Ok(Self { spec_hash, records })
    }

    /// Writes atomically through a temporary sibling file.
    pub fn save(&self, path: &Path) -> Result<()> {
        let tmp = path.with_extension("tmp");
        std::fs::write(&tmp, self.to_bytes())?;
        std::fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_and_rejects_garbage() {
        let c = Checkpoint {
            spec_hash: 0xdead_beef,
            records: vec![vec![1, 2, 3], vec![], vec![9; 100]],
        };
        let b = c.to_bytes();
        assert_eq!(&b[..5], b"IONH1");
        assert_eq!(Checkpoint::from_bytes(&b).unwrap(), c);
        assert!(Checkpoint::from_bytes(&b[..b.len() - 1]).is_err());
        let mut bad = b.clone();
        bad[0] = b'X';
        assert!(Checkpoint::from_bytes(&bad).is_err());
        let mut bad = b;
        bad[5] = 9;
        assert!(Checkpoint::from_bytes(&bad).is_err());
    }

    #[test]
    fn hash_is_stable() {
        assert_eq!(hash64(b"abc"), hash64(b"abc"));
        assert_ne!(hash64(b"abc"), hash64(b"abd"));
    }
}
