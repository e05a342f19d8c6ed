//! Dense HWC feature maps and "same"-padded 2-D convolution.
//!
//! Convolution weights are held in tap-major order `[ky][kx][cin][cout]` so the
//! innermost loop runs over contiguous output channels.

use crate::frame::{Frame, CHANNELS};

#[derive(Debug, Clone, PartialEq)]
pub struct Map {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub data: Vec<f64>,
}

impl Map {
    pub fn zeros(height: usize, width: usize, channels: usize) -> Self {
        Map { height, width, channels, data: vec![0.0; height * width * channels] }
    }

    pub fn from_frame(frame: &Frame) -> Self {
        Map {
            height: frame.height(),
            width: frame.width(),
            channels: CHANNELS,
            data: frame.data().iter().map(|&v| f64::from(v)).collect(),
        }
    }

    #[inline]
    pub fn index(&self, y: usize, x: usize) -> usize {
        (y * self.width + x) * self.channels
    }

    #[inline]
    pub fn pixel(&self, y: usize, x: usize) -> &[f64] {
        let i = self.index(y, x);
        &self.data[i..i + self.channels]
    }

    #[inline]
    pub fn pixel_mut(&mut self, y: usize, x: usize) -> &mut [f64] {
        let i = self.index(y, x);
        &mut self.data[i..i + self.channels]
    }

    pub fn relu_in_place(&mut self) {
        for v in &mut self.data {
            if *v < 0.0 {
                *v = 0.0;
            }
        }
    }
}

/// Reorders an OIHW weight tensor into tap-major `[ky][kx][cin][cout]`.
pub fn oihw_to_taps(oihw: &[f32], cout: usize, cin: usize, k: usize) -> Vec<f64> {
    let mut taps = vec![0.0; oihw.len()];
    for co in 0..cout {
        for ci in 0..cin {
            for ky in 0..k {
                for kx in 0..k {
                    taps[((ky * k + kx) * cin + ci) * cout + co] =
                        f64::from(oihw[((co * cin + ci) * k + ky) * k + kx]);
                }
            }
        }
    }
    taps
}

/// Inverse of [`oihw_to_taps`], accumulating into `oihw`.
pub fn taps_to_oihw(taps: &[f64], cout: usize, cin: usize, k: usize, oihw: &mut [f64]) {
    for co in 0..cout {
        for ci in 0..cin {
            for ky in 0..k {
                for kx in 0..k {
                    oihw[((co * cin + ci) * k + ky) * k + kx] +=
                        taps[((ky * k + kx) * cin + ci) * cout + co];
                }
            }
        }
    }
}

/// Zero-padded, stride-1 convolution with an odd `k`×`k` kernel.
pub fn conv_forward(input: &Map, taps: &[f64], bias: Option<&[f64]>, k: usize, cout: usize) -> Map {
    let cin = input.channels;
    debug_assert_eq!(taps.len(), k * k * cin * cout);
    let pad = (k / 2) as isize;
    let mut out = Map::zeros(input.height, input.width, cout);
    for y in 0..input.height {
        for x in 0..input.width {
            let o = out.index(y, x);
            let acc = &mut out.data[o..o + cout];
            if let Some(b) = bias {
                acc.copy_from_slice(b);
            }
            for ky in 0..k {
                let iy = y as isize + ky as isize - pad;
                if iy < 0 || iy >= input.height as isize {
                    continue;
                }
                for kx in 0..k {
                    let ix = x as isize + kx as isize - pad;
                    if ix < 0 || ix >= input.width as isize {
                        continue;
                    }
                    let inp = input.pixel(iy as usize, ix as usize);
                    let tap = &taps[(ky * k + kx) * cin * cout..(ky * k + kx + 1) * cin * cout];
                    for (ci, &a) in inp.iter().enumerate() {
                        if a == 0.0 {
                            continue;
                        }
                        let row = &tap[ci * cout..(ci + 1) * cout];
                        for (acc, &w) in acc.iter_mut().zip(row) {
                            *acc += a * w;
                        }
                    }
                }
            }
        }
    }
    out
}

/// Backward pass of [`conv_forward`]: accumulates weight, bias and (optionally)
/// input gradients for the output gradient `grad_out`.
pub fn conv_backward(
    input: &Map,
    taps: &[f64],
    k: usize,
    grad_out: &Map,
    mut grad_in: Option<&mut Map>,
    grad_taps: &mut [f64],
    mut grad_bias: Option<&mut [f64]>,
) {
    let cin = input.channels;
    let cout = grad_out.channels;
    let pad = (k / 2) as isize;
    for y in 0..input.height {
        for x in 0..input.width {
            let g = grad_out.pixel(y, x);
            if g.iter().all(|&v| v == 0.0) {
                continue;
            }
            if let Some(gb) = grad_bias.as_deref_mut() {
                for (b, &v) in gb.iter_mut().zip(g) {
                    *b += v;
                }
            }
            for ky in 0..k {
                let iy = y as isize + ky as isize - pad;
                if iy < 0 || iy >= input.height as isize {
                    continue;
                }
                for kx in 0..k {
                    let ix = x as isize + kx as isize - pad;
                    if ix < 0 || ix >= input.width as isize {
                        continue;
                    }
                    let (iy, ix) = (iy as usize, ix as usize);
                    let base = (ky * k + kx) * cin * cout;
                    let ii = input.index(iy, ix);
                    for ci in 0..cin {
                        let a = input.data[ii + ci];
                        let row = base + ci * cout;
                        if a != 0.0 {
                            for (gw, &v) in grad_taps[row..row + cout].iter_mut().zip(g) {
                                *gw += a * v;
                            }
                        }
                        if let Some(gin) = grad_in.as_deref_mut() {
                            let w = &taps[row..row + cout];
                            let s: f64 = w.iter().zip(g).map(|(w, v)| w * v).sum();
                            gin.data[ii + ci] += s;
                        }
                    }
                }
            }
        }
    }
}
