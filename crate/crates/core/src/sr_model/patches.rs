use crate::error::{Error, Result};

use super::tensor::Map;

/// Non-overlapping `P`×`P` tiles of a map, in row-major grid order.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchGrid {
    pub patch_size: usize,
    pub patches: Vec<Map>,
    pub grid_rows: usize,
    pub grid_cols: usize,
    pub pad_bottom: usize,
    pub pad_right: usize,
}

/// Splits `map` into `patch_size` tiles, extending the bottom and right edges
/// by replication when the dimensions are not multiples of the patch size.
pub fn space_to_batch(map: &Map, patch_size: usize) -> Result<PatchGrid> {
    if patch_size == 0 {
        return Err(Error::invalid("patch size must be positive"));
    }
    let p = patch_size;
    let (rows, cols) = (map.height.div_ceil(p), map.width.div_ceil(p));
    let mut patches = Vec::with_capacity(rows * cols);
    for gy in 0..rows {
        for gx in 0..cols {
            let mut tile = Map::zeros(p, p, map.channels);
            for y in 0..p {
                let sy = (gy * p + y).min(map.height - 1);
                for x in 0..p {
                    let sx = (gx * p + x).min(map.width - 1);
                    tile.pixel_mut(y, x).copy_from_slice(map.pixel(sy, sx));
                }
            }
            patches.push(tile);
        }
    }
    Ok(PatchGrid {
        patch_size: p,
        patches,
        grid_rows: rows,
        grid_cols: cols,
        pad_bottom: rows * p - map.height,
        pad_right: cols * p - map.width,
    })
}

/// Reassembles tiles into a map of `height`×`width`, dropping the padding.
pub fn batch_to_space(grid: &PatchGrid, height: usize, width: usize) -> Result<Map> {
    let p = grid.patch_size;
    if grid.grid_rows * p < height || grid.grid_cols * p < width {
        return Err(Error::invalid(format!(
            "patch grid {}x{} of size {p} cannot cover {height}x{width}",
            grid.grid_rows, grid.grid_cols
        )));
    }
    let channels = grid.patches.first().map_or(0, |t| t.channels);
    let mut out = Map::zeros(height, width, channels);
    for y in 0..height {
        for x in 0..width {
            let tile = &grid.patches[(y / p) * grid.grid_cols + x / p];
            out.pixel_mut(y, x).copy_from_slice(tile.pixel(y % p, x % p));
        }
    }
    Ok(out)
}

/// Scatters a full-size gradient map back into per-tile gradients; padded
/// positions receive zero.
pub(crate) fn split_gradient(map: &Map, grid_rows: usize, grid_cols: usize, p: usize) -> Vec<Map> {
    let mut tiles = vec![Map::zeros(p, p, map.channels); grid_rows * grid_cols];
    for y in 0..map.height {
        for x in 0..map.width {
            tiles[(y / p) * grid_cols + x / p]
                .pixel_mut(y % p, x % p)
                .copy_from_slice(map.pixel(y, x));
        }
    }
    tiles
}
