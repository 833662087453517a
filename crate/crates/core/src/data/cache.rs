//! Binary pool cache: `UPALPOOL1` magic, then `n` and `d` as little-endian
//! u64, `n` labels and the `n x d` points in row-major order, all f64 LE.

use std::io::{Read, Write};

use nalgebra::DMatrix;

use crate::error::{Result, UpalError};
use crate::pool::LabeledPool;

pub const CACHE_MAGIC: &[u8; 9] = b"UPALPOOL1";

pub fn write_cache<W: Write>(pool: &LabeledPool, mut out: W) -> Result<()> {
    out.write_all(CACHE_MAGIC)?;
    out.write_all(&(pool.len() as u64).to_le_bytes())?;
    out.write_all(&(pool.dim() as u64).to_le_bytes())?;
    for y in pool.labels() {
        out.write_all(&y.to_le_bytes())?;
    }
    for i in 0..pool.len() {
        for v in pool.points().row(i).iter() {
            out.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn read_cache<R: Read>(mut input: R) -> Result<LabeledPool> {
    let mut magic = [0u8; 9];
    input.read_exact(&mut magic)?;
    if &magic != CACHE_MAGIC {
        return Err(UpalError::InvalidPool("not a UPALPOOL1 cache".into()));
    }
    let mut word = [0u8; 8];
    let mut next_u64 = |r: &mut R| -> Result<u64> {
        r.read_exact(&mut word)?;
        Ok(u64::from_le_bytes(word))
    };
    let n = next_u64(&mut input)? as usize;
    let d = next_u64(&mut input)? as usize;
    let mut buf = vec![0u8; 8 * n * (d + 1)];
    input.read_exact(&mut buf)?;
    let vals: Vec<f64> = buf
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    let (labels, points) = vals.split_at(n);
    let points = DMatrix::from_row_slice(n, d, points);
    LabeledPool::regression(points, labels.to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_and_magic() {
        let pool = LabeledPool::from_rows(&[vec![1.5, -2.0], vec![0.0, 3.25]], vec![1.0, -1.0]).unwrap();
        let mut bytes = Vec::new();
        write_cache(&pool, &mut bytes).unwrap();
        assert!(bytes.starts_with(b"UPALPOOL1"));
        assert_eq!(read_cache(bytes.as_slice()).unwrap(), pool);
        bytes[0] = b'X';
        assert!(read_cache(bytes.as_slice()).is_err());
    }
}
