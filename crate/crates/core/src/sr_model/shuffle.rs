use crate::error::{Error, Result};
use crate::frame::CHANNELS;

use super::tensor::Map;

/// Depth-to-space: an `H`×`W`×`3k²` map becomes `kH`×`kW`×3.
///
/// Output pixel (y, x, c) reads input (y / k, x / k, c·k² + (y mod k)·k + (x mod k)).
pub fn pixel_shuffle(input: &Map, scale: usize) -> Result<Map> {
    let k = scale;
    if k == 0 || input.channels != CHANNELS * k * k {
        return Err(Error::invalid(format!(
            "pixel shuffle by {k} needs {} channels, got {}",
            CHANNELS * k * k,
            input.channels
        )));
    }
    let mut out = Map::zeros(input.height * k, input.width * k, CHANNELS);
    for y in 0..out.height {
        for x in 0..out.width {
            let src = input.pixel(y / k, x / k);
            let sub = (y % k) * k + x % k;
            let dst = out.pixel_mut(y, x);
            for (c, d) in dst.iter_mut().enumerate() {
                *d = src[c * k * k + sub];
            }
        }
    }
    Ok(out)
}

/// Space-to-depth, the inverse of [`pixel_shuffle`].
pub fn pixel_unshuffle(input: &Map, scale: usize) -> Result<Map> {
    let k = scale;
    if k == 0 || input.channels != CHANNELS || input.height % k != 0 || input.width % k != 0 {
        return Err(Error::invalid(format!(
            "cannot unshuffle a {}x{}x{} map by {k}",
            input.height, input.width, input.channels
        )));
    }
    let mut out = Map::zeros(input.height / k, input.width / k, CHANNELS * k * k);
    for y in 0..input.height {
        for x in 0..input.width {
            let sub = (y % k) * k + x % k;
            let src = input.pixel(y, x);
            let i = out.index(y / k, x / k);
            for (c, &v) in src.iter().enumerate() {
                out.data[i + c * k * k + sub] = v;
            }
        }
    }
    Ok(out)
}
