//! Toy encoder checkpoints.
//!
//! ```text
//! "AGRE" | version u32 | vocab u32 | d_in u32 | dim u32 | params (f32, flat [E | P | M])
//! ```

use std::fs;
use std::path::Path;

use agrame_core::trainer::ToyEncoder;

use crate::storage::{Result, StorageError};

pub const MAGIC: &[u8; 4] = b"AGRE";
pub const VERSION: u32 = 1;

pub fn encode(enc: &ToyEncoder) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(20 + 4 * enc.param_count());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    for n in [enc.vocab(), enc.d_in(), enc.dim()] {
        let n = u32::try_from(n).map_err(|_| StorageError::TooLarge(format!("encoder size {n}")))?;
        out.extend_from_slice(&n.to_le_bytes());
    }
    for &p in enc.params() {
        out.extend_from_slice(&(p as f32).to_le_bytes());
    }
    Ok(out)
}

pub fn decode(bytes: &[u8]) -> Result<ToyEncoder> {
    if bytes.len() < 4 || &bytes[..4] != MAGIC {
        return Err(StorageError::Corrupt("not an encoder checkpoint".into()));
    }
    if bytes.len() < 20 {
        return Err(StorageError::Corrupt("truncated checkpoint header".into()));
    }
    let word = |i: usize| u32::from_le_bytes(bytes[4 + 4 * i..8 + 4 * i].try_into().unwrap());
    if word(0) != VERSION {
        return Err(StorageError::UnsupportedVersion(word(0)));
    }
    let (vocab, d_in, dim) = (word(1) as usize, word(2) as usize, word(3) as usize);
    let n = ToyEncoder::param_count_for(vocab, d_in, dim);
    let body = &bytes[20..];
    if Some(body.len()) != n.checked_mul(4) {
        return Err(StorageError::Corrupt(format!(
            "checkpoint holds {} bytes of parameters, expected {n} values",
            body.len()
        )));
    }
    let params = body.chunks_exact(4).map(|b| f32::from_le_bytes(b.try_into().unwrap()) as f64).collect();
    ToyEncoder::from_params(vocab, d_in, dim, params).map_err(|source| StorageError::Invalid {
        id: "checkpoint".into(),
        source,
    })
}

pub fn save(path: &Path, enc: &ToyEncoder) -> Result<()> {
    fs::write(path, encode(enc)?).map_err(|source| StorageError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn load(path: &Path) -> Result<ToyEncoder> {
    let bytes = fs::read(path).map_err(|source| StorageError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    decode(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn round_trip_is_f32_exact() {
        let enc = ToyEncoder::random(10, 4, 3, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let bytes = encode(&enc).unwrap();
        let back = decode(&bytes).unwrap();
        assert_eq!((back.vocab(), back.d_in(), back.dim()), (10, 4, 3));
        for (a, b) in back.params().iter().zip(enc.params()) {
            assert_eq!(*a, *b as f32 as f64);
        }
        assert_eq!(encode(&back).unwrap(), bytes);
        assert!(decode(&bytes[..bytes.len() - 2]).is_err());
        assert!(decode(b"AGRV").is_err());
    }
}
