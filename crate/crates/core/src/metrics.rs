//! PSNR, SSIM and bicubic resampling.

use crate::error::{Error, Result};
use crate::frame::{Frame, VideoSequence, CHANNELS};

/// Reported PSNR when the error is exactly zero.
pub const PSNR_CAP_DB: f64 = 99.0;

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;

#[derive(Debug, Clone, PartialEq)]
pub struct QualityReport {
    /// PSNR of the MSE pooled over every pixel of every frame.
    pub aggregate_psnr: f64,
    pub mean_ssim: f64,
    pub per_frame_psnr: Vec<f64>,
    pub per_frame_ssim: Vec<f64>,
}

fn check_same(a: &Frame, b: &Frame) -> Result<()> {
    if a.dims() != b.dims() {
        return Err(Error::invalid(format!(
            "frame dimensions differ: {:?} vs {:?}",
            a.dims(),
            b.dims()
        )));
    }
    Ok(())
}

fn check_videos(a: &VideoSequence, b: &VideoSequence) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::invalid(format!("frame counts differ: {} vs {}", a.len(), b.len())));
    }
    if a.is_empty() {
        return Err(Error::invalid("cannot compare empty videos"));
    }
    a.frames().iter().zip(b.frames()).try_for_each(|(x, y)| check_same(x, y))
}

/// Mean squared error over all samples (pixels × channels).
pub fn frame_mse(reference: &Frame, test: &Frame) -> Result<f64> {
    check_same(reference, test)?;
    let sum: f64 = reference
        .data()
        .iter()
        .zip(test.data())
        .map(|(&a, &b)| {
            let d = f64::from(a) - f64::from(b);
            d * d
        })
        .sum();
    Ok(sum / reference.data().len() as f64)
}

/// PSNR for unit-range samples, capped at [`PSNR_CAP_DB`].
pub fn psnr_from_mse(mse: f64) -> f64 {
    if mse <= 0.0 {
        PSNR_CAP_DB
    } else {
        (10.0 * (1.0 / mse).log10()).min(PSNR_CAP_DB)
    }
}

/// Aggregate PSNR over pooled MSE, and the per-frame values.
pub fn psnr(reference: &VideoSequence, test: &VideoSequence) -> Result<(f64, Vec<f64>)> {
    check_videos(reference, test)?;
    let mses = reference
        .frames()
        .iter()
        .zip(test.frames())
        .map(|(a, b)| frame_mse(a, b))
        .collect::<Result<Vec<_>>>()?;
    let pooled = mses.iter().sum::<f64>() / mses.len() as f64;
    Ok((psnr_from_mse(pooled), mses.into_iter().map(psnr_from_mse).collect()))
}

fn gaussian_window() -> [f64; SSIM_WINDOW] {
    let mut w = [0.0; SSIM_WINDOW];
    let c = (SSIM_WINDOW / 2) as f64;
    for (i, v) in w.iter_mut().enumerate() {
        let d = i as f64 - c;
        *v = (-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
    }
    let s: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= s);
    w
}

/// Gaussian-weighted sums over every fully contained window ("valid" filtering).
fn filter_valid(plane: &[f64], h: usize, w: usize, win: &[f64; SSIM_WINDOW]) -> Vec<f64> {
    let n = SSIM_WINDOW;
    let (oh, ow) = (h - n + 1, w - n + 1);
    let mut rows = vec![0.0; h * ow];
    for y in 0..h {
        for x in 0..ow {
            rows[y * ow + x] = (0..n).map(|i| win[i] * plane[y * w + x + i]).sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = (0..n).map(|i| win[i] * rows[(y + i) * ow + x]).sum();
        }
    }
    out
}

/// Structural similarity with an 11×11 Gaussian window (σ = 1.5), averaged over
/// RGB channels. Inputs use a dynamic range of 1.
pub fn ssim(reference: &Frame, test: &Frame) -> Result<f64> {
    check_same(reference, test)?;
    let (h, w) = reference.dims();
    if h < SSIM_WINDOW || w < SSIM_WINDOW {
        return Err(Error::invalid(format!(
            "SSIM needs frames of at least {SSIM_WINDOW}x{SSIM_WINDOW}, got {h}x{w}"
        )));
    }
    let win = gaussian_window();
    let c1 = (SSIM_K1 * 1.0).powi(2);
    let c2 = (SSIM_K2 * 1.0).powi(2);
    let mut total = 0.0;
    for c in 0..CHANNELS {
        let plane = |f: &Frame| -> Vec<f64> {
            f.data().iter().skip(c).step_by(CHANNELS).map(|&v| f64::from(v)).collect()
        };
        let (x, y) = (plane(reference), plane(test));
        let xx: Vec<f64> = x.iter().map(|v| v * v).collect();
        let yy: Vec<f64> = y.iter().map(|v| v * v).collect();
        let xy: Vec<f64> = x.iter().zip(&y).map(|(a, b)| a * b).collect();
        let mx = filter_valid(&x, h, w, &win);
        let my = filter_valid(&y, h, w, &win);
        let sxx = filter_valid(&xx, h, w, &win);
        let syy = filter_valid(&yy, h, w, &win);
        let sxy = filter_valid(&xy, h, w, &win);
        let mut sum = 0.0;
        for i in 0..mx.len() {
            let (ux, uy) = (mx[i], my[i]);
            let vx = sxx[i] - ux * ux;
            let vy = syy[i] - uy * uy;
            let cov = sxy[i] - ux * uy;
            sum += ((2.0 * ux * uy + c1) * (2.0 * cov + c2))
                / ((ux * ux + uy * uy + c1) * (vx + vy + c2));
        }
        total += sum / mx.len() as f64;
    }
    Ok(total / CHANNELS as f64)
}

pub fn mean_ssim(reference: &VideoSequence, test: &VideoSequence) -> Result<(f64, Vec<f64>)> {
    check_videos(reference, test)?;
    let values = reference
        .frames()
        .iter()
        .zip(test.frames())
        .map(|(a, b)| ssim(a, b))
        .collect::<Result<Vec<_>>>()?;
    Ok((values.iter().sum::<f64>() / values.len() as f64, values))
}

pub fn quality_report(reference: &VideoSequence, test: &VideoSequence) -> Result<QualityReport> {
    let (aggregate_psnr, per_frame_psnr) = psnr(reference, test)?;
    let (mean_ssim, per_frame_ssim) = mean_ssim(reference, test)?;
    Ok(QualityReport { aggregate_psnr, mean_ssim, per_frame_psnr, per_frame_ssim })
}

/// Catmull-Rom cubic (a = −0.5).
pub fn cubic_weight(t: f64) -> f64 {
    const A: f64 = -0.5;
    let t = t.abs();
    if t <= 1.0 {
        ((A + 2.0) * t - (A + 3.0)) * t * t + 1.0
    } else if t < 2.0 {
        ((A * t - 5.0 * A) * t + 8.0 * A) * t - 4.0 * A
    } else {
        0.0
    }
}

/// Source taps and weights for each output coordinate (pixel-center aligned, edge clamped).
fn axis_taps(src: usize, dst: usize) -> Vec<([usize; 4], [f64; 4])> {
    let ratio = src as f64 / dst as f64;
    (0..dst)
        .map(|o| {
            let s = (o as f64 + 0.5) * ratio - 0.5;
            let base = s.floor();
            let t = s - base;
            let mut idx = [0usize; 4];
            let mut w = [0f64; 4];
            for j in 0..4 {
                let p = base as i64 + j as i64 - 1;
                idx[j] = p.clamp(0, src as i64 - 1) as usize;
                w[j] = cubic_weight(t - (j as f64 - 1.0));
            }
            (idx, w)
        })
        .collect()
}

/// Bicubic resize to `height`×`width`; output is clamped to [0, 1].
pub fn bicubic_resize(frame: &Frame, height: usize, width: usize) -> Result<Frame> {
    if height == 0 || width == 0 {
        return Err(Error::invalid("resize target must be non-empty"));
    }
    let (h, w) = frame.dims();
    let xs = axis_taps(w, width);
    let ys = axis_taps(h, height);
    let mut rows = vec![0f64; h * width * CHANNELS];
    for y in 0..h {
        for (ox, (idx, wt)) in xs.iter().enumerate() {
            for c in 0..CHANNELS {
                rows[(y * width + ox) * CHANNELS + c] =
                    (0..4).map(|j| wt[j] * f64::from(frame.get(y, idx[j], c))).sum();
            }
        }
    }
    let mut data = Vec::with_capacity(height * width * CHANNELS);
    for (idx, wt) in &ys {
        for ox in 0..width {
            for c in 0..CHANNELS {
                let v: f64 = (0..4).map(|j| wt[j] * rows[(idx[j] * width + ox) * CHANNELS + c]).sum();
                data.push(v.clamp(0.0, 1.0) as f32);
            }
        }
    }
    Frame::from_data(height, width, data)
}

/// Bicubic upsampling of every frame of a video.
pub fn bicubic_video(video: &VideoSequence, height: usize, width: usize) -> Result<VideoSequence> {
    let frames = video
        .frames()
        .iter()
        .map(|f| bicubic_resize(f, height, width))
        .collect::<Result<Vec<_>>>()?;
    VideoSequence::new(frames, video.fps())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn video(frames: Vec<Frame>) -> VideoSequence {
        VideoSequence::new(frames, 1.0).unwrap()
    }

    #[test]
    fn identical_videos_hit_cap() {
        let f = Frame::from_fn(4, 4, |y, x, c| ((y + x + c) % 3) as f32 / 2.0).unwrap();
        let (agg, per) = psnr(&video(vec![f.clone()]), &video(vec![f])).unwrap();
        assert_eq!(agg, 99.0);
        assert_eq!(per, vec![99.0]);
    }

    #[test]
    fn uniform_error_of_sixteen_levels() {
        let a = Frame::from_rgb8(4, 4, &[100u8; 48]).unwrap();
        let b = Frame::from_rgb8(4, 4, &[116u8; 48]).unwrap();
        let (agg, _) = psnr(&video(vec![a]), &video(vec![b])).unwrap();
        let want = 10.0 * (255.0f64 * 255.0 / 256.0).log10();
        assert!((agg - want).abs() < 1e-3, "{agg} vs {want}");
        assert!((agg - 24.05).abs() < 1e-2);
    }

    #[test]
    fn aggregate_pools_mse() {
        let r = Frame::filled(2, 2, 0.5).unwrap();
        let t1 = Frame::filled(2, 2, 0.6).unwrap();
        let t2 = Frame::filled(2, 2, 0.8).unwrap();
        let (agg, per) = psnr(&video(vec![r.clone(), r.clone()]), &video(vec![t1.clone(), t2.clone()])).unwrap();
        let m1 = frame_mse(&r, &t1).unwrap();
        let m2 = frame_mse(&r, &t2).unwrap();
        assert!((agg - psnr_from_mse((m1 + m2) / 2.0)).abs() < 1e-12);
        assert!((agg - (per[0] + per[1]) / 2.0).abs() > 0.1);
    }

    #[test]
    fn psnr_dimension_mismatch() {
        let a = video(vec![Frame::filled(2, 2, 0.0).unwrap()]);
        let b = video(vec![Frame::filled(2, 3, 0.0).unwrap()]);
        assert!(psnr(&a, &b).is_err());
    }

    #[test]
    fn ssim_identical_and_constant() {
        let f = Frame::from_fn(16, 16, |y, x, c| ((y * 3 + x * 5 + c) % 7) as f32 / 7.0).unwrap();
        assert!((ssim(&f, &f).unwrap() - 1.0).abs() < 1e-12);
        let a = Frame::filled(12, 12, 0.5).unwrap();
        let b = Frame::filled(12, 12, 0.6).unwrap();
        let c1 = 1e-4;
        let (ua, ub) = (0.5f32 as f64, 0.6f32 as f64);
        let want = (2.0 * ua * ub + c1) / (ua * ua + ub * ub + c1);
        assert!((ssim(&a, &b).unwrap() - want).abs() < 1e-9);
        assert!((want - 0.9837).abs() < 1e-4);
    }

    #[test]
    fn ssim_rejects_small_frames() {
        let f = Frame::filled(10, 20, 0.0).unwrap();
        assert!(ssim(&f, &f).is_err());
    }

    #[test]
    fn bicubic_constant_and_ramp() {
        let c = Frame::filled(5, 6, 0.3).unwrap();
        let up = bicubic_resize(&c, 10, 12).unwrap();
        assert!(up.data().iter().all(|&v| (v - 0.3).abs() < 1e-6));

        let ramp = Frame::from_fn(4, 12, |_, x, _| x as f32 / 16.0).unwrap();
        let up = bicubic_resize(&ramp, 8, 24).unwrap();
        // interior samples sit at source coordinate (x + 0.5) / 2 - 0.5
        for x in 4..20 {
            let s = (x as f64 + 0.5) / 2.0 - 0.5;
            assert!((f64::from(up.get(3, x, 0)) - s / 16.0).abs() < 1e-6, "x={x}");
        }
    }
}
