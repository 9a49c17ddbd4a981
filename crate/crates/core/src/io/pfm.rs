//! PFM disparity maps per the Middlebury convention: grayscale `Pf` header,
//! width/height, a scale whose sign selects endianness (negative =
//! little-endian), rows stored bottom-up. `+Inf` marks invalid pixels; NaN
//! payloads are rejected.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::refine::{DisparityMap, Mask, Resolution};
use crate::tensor::Tensor;

pub fn write_pfm(map: &DisparityMap, path: &Path) -> Result<()> {
    let (h, w) = (map.height(), map.width());
    let mut out = Vec::with_capacity(h * w * 4 + 32);
    out.extend_from_slice(format!("Pf\n{w} {h}\n-1.0\n").as_bytes());
    for y in (0..h).rev() {
        for x in 0..w {
            let v = if map.valid.get(y, x) {
                map.values.at3(0, y, x)
            } else {
                f32::INFINITY
            };
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    std::fs::File::create(path)?.write_all(&out)?;
    Ok(())
}

pub fn read_pfm(path: &Path, resolution: Resolution) -> Result<DisparityMap> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    parse_pfm(&bytes, resolution).map_err(|e| match e {
        Error::Format(msg) => Error::Format(format!("{}: {msg}", path.display())),
        other => other,
    })
}

pub fn parse_pfm(bytes: &[u8], resolution: Resolution) -> Result<DisparityMap> {
    let mut pos = 0usize;
    let magic = next_token(bytes, &mut pos)?;
    if magic == b"PF" {
        return Err(Error::Format(
            "color PFM ('PF') is not a disparity map; expected grayscale 'Pf'".into(),
        ));
    }
    if magic != b"Pf" {
        return Err(Error::Format(format!(
            "bad magic {:?}, expected 'Pf'",
            String::from_utf8_lossy(magic)
        )));
    }
    let w = parse_dim(next_token(bytes, &mut pos)?)?;
    let h = parse_dim(next_token(bytes, &mut pos)?)?;
    let scale: f32 = std::str::from_utf8(next_token(bytes, &mut pos)?)
        .ok()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| Error::Format("unparseable scale field".into()))?;
    if scale == 0.0 || !scale.is_finite() {
        return Err(Error::Format(format!("scale must be finite nonzero, got {scale}")));
    }
    let little_endian = scale < 0.0;
    // exactly one whitespace byte separates the header from the payload
    let payload = &bytes[pos..];
    let expected = w
        .checked_mul(h)
        .and_then(|n| n.checked_mul(4))
        .ok_or_else(|| Error::Format("dimension overflow".into()))?;
    if payload.len() < expected {
        return Err(Error::Format(format!(
            "truncated payload: expected {expected} bytes, found {}",
            payload.len()
        )));
    }
    if payload.len() > expected {
        return Err(Error::Format("trailing bytes after PFM payload".into()));
    }

    let mut values = vec![0.0f32; h * w];
    let mut valid = vec![true; h * w];
    for (i, chunk) in payload.chunks_exact(4).enumerate() {
        let raw: [u8; 4] = chunk.try_into().unwrap();
        let v = if little_endian {
            f32::from_le_bytes(raw)
        } else {
            f32::from_be_bytes(raw)
        };
        if v.is_nan() {
            return Err(Error::Format("NaN payload value".into()));
        }
        // bottom-up row order
        let y = h - 1 - i / w;
        let x = i % w;
        if v.is_infinite() {
            valid[y * w + x] = false;
            values[y * w + x] = f32::INFINITY;
        } else {
            values[y * w + x] = v;
        }
    }
    DisparityMap::from_values(
        Tensor::from_parts(vec![1, h, w], values),
        Mask { h, w, data: valid },
        resolution,
    )
}

fn parse_dim(tok: &[u8]) -> Result<usize> {
    let s =
        std::str::from_utf8(tok).map_err(|_| Error::Format("non-utf8 dimension".into()))?;
    let v: i64 = s
        .parse()
        .map_err(|_| Error::Format(format!("unparseable dimension '{s}'")))?;
    if v <= 0 || v > u32::MAX as i64 {
        return Err(Error::Format(format!("dimension {v} out of range")));
    }
    Ok(v as usize)
}

fn next_token<'a>(bytes: &'a [u8], pos: &mut usize) -> Result<&'a [u8]> {
    while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    let start = *pos;
    while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    if start == *pos {
        return Err(Error::Format("truncated header".into()));
    }
    let end = *pos;
    // consume the single whitespace delimiter
    if *pos < bytes.len() {
        *pos += 1;
    }
    Ok(&bytes[start..end])
}
