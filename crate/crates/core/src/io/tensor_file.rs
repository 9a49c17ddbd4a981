//! Raw tensor container: magic `GGEVTNSR`, u32 LE rank, rank u32 LE dims,
//! then `product(dims)` f32 LE values. Readers reject wrong magic, NaN/Inf
//! payloads, truncated files, and trailing bytes.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 8] = b"GGEVTNSR";

pub fn write_tensor(t: &Tensor, path: &Path) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    f.write_all(MAGIC)?;
    f.write_all(&(t.rank() as u32).to_le_bytes())?;
    for &d in t.shape() {
        f.write_all(&(d as u32).to_le_bytes())?;
    }
    let mut buf = Vec::with_capacity(t.len() * 4);
    for v in t.data() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    f.write_all(&buf)?;
    Ok(())
}

pub fn read_tensor(path: &Path) -> Result<Tensor> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    parse_tensor(&bytes).map_err(|e| match e {
        Error::Format(msg) => Error::Format(format!("{}: {msg}", path.display())),
        other => other,
    })
}

pub fn parse_tensor(bytes: &[u8]) -> Result<Tensor> {
    if bytes.len() < 12 {
        return Err(Error::Format("truncated tensor header".into()));
    }
    if &bytes[..8] != MAGIC {
        return Err(Error::Format(format!(
            "bad magic {:?}, expected {:?}",
            &bytes[..8],
            MAGIC
        )));
    }
    let rank = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    if !(1..=4).contains(&rank) {
        return Err(Error::Format(format!("tensor rank {rank} out of 1..=4")));
    }
    if bytes.len() < 12 + 4 * rank {
        return Err(Error::Format("truncated dimension list".into()));
    }
    let mut shape = Vec::with_capacity(rank);
    let mut count = 1usize;
    for i in 0..rank {
        let d = u32::from_le_bytes(bytes[12 + 4 * i..16 + 4 * i].try_into().unwrap()) as usize;
        if d == 0 {
            return Err(Error::Format("zero dimension in tensor header".into()));
        }
        count = count
            .checked_mul(d)
            .ok_or_else(|| Error::Format("dimension overflow".into()))?;
        shape.push(d);
    }
    let payload = &bytes[12 + 4 * rank..];
    if payload.len() < count * 4 {
        return Err(Error::Format(format!(
            "truncated payload: expected {} values, found {} bytes",
            count,
            payload.len()
        )));
    }
    if payload.len() > count * 4 {
        return Err(Error::Format("trailing bytes after tensor payload".into()));
    }
    let mut data = Vec::with_capacity(count);
    for chunk in payload.chunks_exact(4) {
        let v = f32::from_le_bytes(chunk.try_into().unwrap());
        if !v.is_finite() {
            return Err(Error::Format(format!("non-finite payload value {v}")));
        }
        data.push(v);
    }
    Tensor::new(&shape, data)
}
