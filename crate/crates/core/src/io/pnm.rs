//! Binary PNM images: P5 grayscale and P6 RGB, maxval 255 only. Values are
//! scaled to `[0,1]` on read and quantized back with rounding on write, so
//! byte round trips are exact.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::refine::Mask;
use crate::tensor::Tensor;

/// Reads a P5/P6 image as `[1,H,W]` or `[3,H,W]` with values in `[0,1]`.
pub fn read_pnm(path: &Path) -> Result<Tensor> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    parse_pnm(&bytes).map_err(|e| match e {
        Error::Format(msg) => Error::Format(format!("{}: {msg}", path.display())),
        other => other,
    })
}

/// Like `read_pnm` but grayscale images are replicated to three channels.
pub fn read_pnm_rgb(path: &Path) -> Result<Tensor> {
    let t = read_pnm(path)?;
    if t.shape()[0] == 3 {
        return Ok(t);
    }
    let (h, w) = (t.shape()[1], t.shape()[2]);
    let mut data = Vec::with_capacity(3 * h * w);
    for _ in 0..3 {
        data.extend_from_slice(t.data());
    }
    Ok(Tensor::from_parts(vec![3, h, w], data))
}

pub fn parse_pnm(bytes: &[u8]) -> Result<Tensor> {
    let mut pos = 0usize;
    let magic = header_token(bytes, &mut pos)?;
    let channels = match magic {
        b"P5" => 1usize,
        b"P6" => 3usize,
        other => {
            return Err(Error::Format(format!(
                "bad magic {:?}, expected P5 or P6",
                String::from_utf8_lossy(other)
            )))
        }
    };
    let w = parse_usize(header_token(bytes, &mut pos)?)?;
    let h = parse_usize(header_token(bytes, &mut pos)?)?;
    let maxval = parse_usize(header_token(bytes, &mut pos)?)?;
    if maxval != 255 {
        return Err(Error::Format(format!("maxval must be 255, got {maxval}")));
    }
    if w == 0 || h == 0 {
        return Err(Error::Format("zero image dimension".into()));
    }
    let payload = &bytes[pos..];
    let expected = channels * w * h;
    if payload.len() < expected {
        return Err(Error::Format(format!(
            "truncated payload: expected {expected} bytes, found {}",
            payload.len()
        )));
    }
    if payload.len() > expected {
        return Err(Error::Format("trailing bytes after PNM payload".into()));
    }
    // interleaved bytes -> channel-major floats
    let mut data = vec![0.0f32; channels * h * w];
    for (i, px) in payload.chunks_exact(channels).enumerate() {
        for (c, &b) in px.iter().enumerate() {
            data[c * h * w + i] = b as f32 / 255.0;
        }
    }
    Ok(Tensor::from_parts(vec![channels, h, w], data))
}

/// Writes `[1,H,W]` as P5 or `[3,H,W]` as P6, quantizing `[0,1]` values.
pub fn write_pnm(t: &Tensor, path: &Path) -> Result<()> {
    if t.rank() != 3 || (t.shape()[0] != 1 && t.shape()[0] != 3) {
        return Err(Error::Dimension(format!(
            "write_pnm expects [1,H,W] or [3,H,W], got {:?}",
            t.shape()
        )));
    }
    let (c, h, w) = (t.shape()[0], t.shape()[1], t.shape()[2]);
    let magic = if c == 1 { "P5" } else { "P6" };
    let mut out = Vec::with_capacity(c * h * w + 32);
    out.extend_from_slice(format!("{magic}\n{w} {h}\n255\n").as_bytes());
    for i in 0..h * w {
        for ci in 0..c {
            let v = t.data()[ci * h * w + i];
            out.push((v.clamp(0.0, 1.0) * 255.0).round() as u8);
        }
    }
    std::fs::File::create(path)?.write_all(&out)?;
    Ok(())
}

/// Writes a boolean mask as P5 (255 = true).
pub fn write_mask(mask: &Mask, path: &Path) -> Result<()> {
    let mut out = Vec::with_capacity(mask.h * mask.w + 32);
    out.extend_from_slice(format!("P5\n{} {}\n255\n", mask.w, mask.h).as_bytes());
    out.extend(mask.data.iter().map(|&b| if b { 255u8 } else { 0 }));
    std::fs::File::create(path)?.write_all(&out)?;
    Ok(())
}

/// Reads a P5 mask; any nonzero byte is true.
pub fn read_mask(path: &Path) -> Result<Mask> {
    let t = read_pnm(path)?;
    if t.shape()[0] != 1 {
        return Err(Error::Format(format!(
            "{}: masks must be grayscale P5",
            path.display()
        )));
    }
    let (h, w) = (t.shape()[1], t.shape()[2]);
    Ok(Mask {
        h,
        w,
        data: t.data().iter().map(|&v| v > 0.0).collect(),
    })
}

/// Header tokens with `#` comment support.
fn header_token<'a>(bytes: &'a [u8], pos: &mut usize) -> Result<&'a [u8]> {
    loop {
        while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        if *pos < bytes.len() && bytes[*pos] == b'#' {
            while *pos < bytes.len() && bytes[*pos] != b'\n' {
                *pos += 1;
            }
            continue;
        }
        break;
    }
    let start = *pos;
    while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    if start == *pos {
        return Err(Error::Format("truncated header".into()));
    }
    let end = *pos;
    if *pos < bytes.len() {
        *pos += 1;
    }
    Ok(&bytes[start..end])
}

fn parse_usize(tok: &[u8]) -> Result<usize> {
    std::str::from_utf8(tok)
        .ok()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| Error::Format(format!("unparseable header field {:?}", String::from_utf8_lossy(tok))))
}
