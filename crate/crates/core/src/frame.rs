//! Raster frames and frame sequences.
//!
//! Pixels are stored interleaved (row-major, RGB triplets) as `f32` in the
//! unit interval. Conversion to 8-bit rounds half away from zero, so a round
//! trip through 8 bits moves no sample by more than 1/510.

use crate::error::{Error, Result};

pub const CHANNELS: usize = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    height: usize,
    width: usize,
    data: Vec<f32>,
}

impl Frame {
    /// Builds a frame from interleaved RGB samples. Samples are clamped into [0, 1].
    pub fn from_data(height: usize, width: usize, mut data: Vec<f32>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::invalid(format!(
                "frame dimensions must be positive, got {height}x{width}"
            )));
        }
        if data.len() != height * width * CHANNELS {
            return Err(Error::invalid(format!(
                "frame data length {} does not match {height}x{width}x{CHANNELS}",
                data.len()
            )));
        }
        for v in &mut data {
            if !v.is_finite() {
                return Err(Error::invalid("frame samples must be finite"));
            }
            *v = v.clamp(0.0, 1.0);
        }
        Ok(Frame { height, width, data })
    }

    pub fn filled(height: usize, width: usize, value: f32) -> Result<Self> {
        Self::from_data(height, width, vec![value; height * width * CHANNELS])
    }

    pub fn from_fn(
        height: usize,
        width: usize,
        mut f: impl FnMut(usize, usize, usize) -> f32,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(height * width * CHANNELS);
        for y in 0..height {
            for x in 0..width {
                for c in 0..CHANNELS {
                    data.push(f(y, x, c));
                }
            }
        }
        Self::from_data(height, width, data)
    }

    pub fn from_rgb8(height: usize, width: usize, bytes: &[u8]) -> Result<Self> {
        let data = bytes.iter().map(|&b| b as f32 / 255.0).collect();
        Self::from_data(height, width, data)
    }

    pub fn to_rgb8(&self) -> Vec<u8> {
        self.data.iter().map(|&v| to_u8(v)).collect()
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize, c: usize) -> f32 {
        self.data[(y * self.width + x) * CHANNELS + c]
    }

    /// Copies the `height`×`width` window whose top-left corner is (`y0`, `x0`).
    pub fn crop(&self, y0: usize, x0: usize, height: usize, width: usize) -> Result<Frame> {
        if y0 + height > self.height || x0 + width > self.width {
            return Err(Error::invalid(format!(
                "crop {height}x{width}@({y0},{x0}) exceeds {}x{}",
                self.height, self.width
            )));
        }
        let mut data = Vec::with_capacity(height * width * CHANNELS);
        for y in y0..y0 + height {
            let start = (y * self.width + x0) * CHANNELS;
            data.extend_from_slice(&self.data[start..start + width * CHANNELS]);
        }
        Frame::from_data(height, width, data)
    }

    /// Extends the frame to `height`×`width` by replicating the last row and column.
    pub fn pad_edge(&self, height: usize, width: usize) -> Result<Frame> {
        if height < self.height || width < self.width {
            return Err(Error::invalid("padding target smaller than frame"));
        }
        Frame::from_fn(height, width, |y, x, c| {
            self.get(y.min(self.height - 1), x.min(self.width - 1), c)
        })
    }
}

/// 8-bit quantization with round-half-away-from-zero.
#[inline]
pub fn to_u8(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

#[derive(Debug, Clone, PartialEq)]
pub struct VideoSequence {
    frames: Vec<Frame>,
    fps: f64,
}

impl VideoSequence {
    pub fn new(frames: Vec<Frame>, fps: f64) -> Result<Self> {
        if !(fps.is_finite() && fps > 0.0) {
            return Err(Error::invalid(format!("fps must be positive, got {fps}")));
        }
        if let Some(first) = frames.first() {
            if frames.iter().any(|f| f.dims() != first.dims()) {
                return Err(Error::invalid("all frames must share dimensions"));
            }
        }
        Ok(VideoSequence { frames, fps })
    }

    pub fn frames(&self) -> &[Frame] {
        &self.frames
    }

    pub fn into_frames(self) -> Vec<Frame> {
        self.frames
    }

    pub fn fps(&self) -> f64 {
        self.fps
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// (height, width) of the frames, `None` for an empty sequence.
    pub fn dims(&self) -> Option<(usize, usize)> {
        self.frames.first().map(Frame::dims)
    }

    pub fn slice(&self, start: usize, end: usize) -> Result<VideoSequence> {
        if start > end || end > self.frames.len() {
            return Err(Error::invalid(format!(
                "frame range {start}..{end} out of bounds for {} frames",
                self.frames.len()
            )));
        }
        VideoSequence::new(self.frames[start..end].to_vec(), self.fps)
    }
}
