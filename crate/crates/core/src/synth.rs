//! Deterministic synthetic test clips.

use crate::error::Result;
use crate::frame::{Frame, VideoSequence};

/// A hard-edged texture translating at constant velocity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Texture {
    /// Diagonal stripes: period in pixels and angle in radians.
    Stripes { period: f64, angle: f64 },
    /// Checkerboard with square cells of the given side.
    Checker { cell: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scene {
    pub texture: Texture,
    pub colors: [[f32; 3]; 2],
    /// Pixels per frame along (y, x).
    pub velocity: (f64, f64),
}

impl Scene {
    pub fn stripes() -> Self {
        Scene {
            texture: Texture::Stripes { period: 12.0, angle: 0.6 },
            colors: [[0.9, 0.75, 0.2], [0.1, 0.2, 0.45]],
            velocity: (0.35, 0.8),
        }
    }

    pub fn checker() -> Self {
        Scene {
            texture: Texture::Checker { cell: 10.0 },
            colors: [[0.15, 0.7, 0.3], [0.95, 0.9, 0.85]],
            velocity: (-0.6, 0.45),
        }
    }

    fn sample(&self, y: f64, x: f64) -> [f32; 3] {
        let on = match self.texture {
            Texture::Stripes { period, angle } => {
                let u = x * angle.cos() + y * angle.sin();
                u.rem_euclid(period) < period / 2.0
            }
            Texture::Checker { cell } => {
                ((y / cell).floor() as i64 + (x / cell).floor() as i64).rem_euclid(2) == 0
            }
        };
        self.colors[usize::from(on)]
    }

    pub fn render(&self, height: usize, width: usize, t: usize) -> Result<Frame> {
        let (dy, dx) = (self.velocity.0 * t as f64, self.velocity.1 * t as f64);
        Frame::from_fn(height, width, |y, x, c| self.sample(y as f64 + 0.5 - dy, x as f64 + 0.5 - dx)[c])
    }
}

/// Renders `frames` frames of `scenes`, switching scene at equal intervals.
pub fn moving_texture(
    height: usize,
    width: usize,
    frames: usize,
    fps: f64,
    scenes: &[Scene],
) -> Result<VideoSequence> {
    let per_scene = frames.div_ceil(scenes.len().max(1)).max(1);
    let out = (0..frames)
        .map(|t| scenes[(t / per_scene).min(scenes.len() - 1)].render(height, width, t))
        .collect::<Result<Vec<_>>>()?;
    VideoSequence::new(out, fps)
}
