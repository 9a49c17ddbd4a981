//! Disparity visualization: min-max normalization through a fixed 256-entry
//! color table, written as P6. Invalid pixels are black.
//!
//! The table is the classic piecewise-linear blue-to-red ramp
//! `channel(t) = clamp(1.5 - |4t - c0|)` with `c0 = 3, 2, 1` for r, g, b,
//! sampled at `t = i/255`.

use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::refine::DisparityMap;

pub fn color_table() -> [[u8; 3]; 256] {
    let mut table = [[0u8; 3]; 256];
    for (i, entry) in table.iter_mut().enumerate() {
        let t = i as f64 / 255.0;
        for (c, center) in [3.0, 2.0, 1.0].iter().enumerate() {
            let v = (1.5 - (4.0 * t - center).abs()).clamp(0.0, 1.0);
            entry[c] = (v * 255.0).round() as u8;
        }
    }
    table
}

pub fn write_colormap(map: &DisparityMap, path: &Path) -> Result<()> {
    let (h, w) = (map.height(), map.width());
    let mut lo = f32::INFINITY;
    let mut hi = f32::NEG_INFINITY;
    let mut any = false;
    for y in 0..h {
        for x in 0..w {
            if map.valid.get(y, x) {
                let v = map.values.at3(0, y, x);
                lo = lo.min(v);
                hi = hi.max(v);
                any = true;
            }
        }
    }
    if !any {
        return Err(Error::Format(
            "cannot colormap a disparity map with no valid pixels".into(),
        ));
    }
    let table = color_table();
    let span = hi - lo;
    let mut out = Vec::with_capacity(3 * h * w + 32);
    out.extend_from_slice(format!("P6\n{w} {h}\n255\n").as_bytes());
    for y in 0..h {
        for x in 0..w {
            if map.valid.get(y, x) {
                let v = map.values.at3(0, y, x);
                let t = if span > 0.0 { (v - lo) / span } else { 0.0 };
                let idx = (t * 255.0).round().clamp(0.0, 255.0) as usize;
                out.extend_from_slice(&table[idx]);
            } else {
                out.extend_from_slice(&[0, 0, 0]);
            }
        }
    }
    std::fs::File::create(path)?.write_all(&out)?;
    Ok(())
}
