#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use srvc_core::adaptation::{segment_loss, segment_loss_gradient, SegmentData, TrainingConfig};
use srvc_core::pipeline::EncodeJob;
use srvc_core::sr_model::{ModelConfig, ParameterVector};
use srvc_core::synth::{moving_texture, Scene};
use srvc_core::{Frame, VideoSequence};

/// About 50k parameters: small enough to train on a laptop CPU in seconds.
pub fn tiny_config() -> ModelConfig {
    ModelConfig { feature_channels: 8, patch_size: 4, scale: 4, generator_width: 20, regular_width: 16 }
}

/// A very small config for property tests.
pub fn micro_config() -> ModelConfig {
    ModelConfig { feature_channels: 2, patch_size: 2, scale: 2, generator_width: 3, regular_width: 3 }
}

pub fn clip(frames: usize, size: usize, fps: f64) -> VideoSequence {
    moving_texture(size, size, frames, fps, &[Scene::stripes()]).unwrap()
}

pub fn scene_change_clip(frames: usize, size: usize, fps: f64) -> VideoSequence {
    moving_texture(size, size, frames, fps, &[Scene::stripes(), Scene::checker()]).unwrap()
}

/// Job settings used for the quality experiments on tiny clips.
pub fn tiny_job(tau: f64, eta: f64) -> EncodeJob {
    EncodeJob {
        model: tiny_config(),
        tau,
        training: TrainingConfig { learning_rate: 1e-3, eta, epochs_per_segment: 16, ..TrainingConfig::default() },
        initial_epochs: 20,
        initial_learning_rate: 1e-3,
        codec_id: "lossless".into(),
        quality: 0,
        init_seed: 7,
    }
}

pub fn random_frame(rng: &mut ChaCha8Rng, h: usize, w: usize) -> Frame {
    Frame::from_fn(h, w, |_, _, _| rng.gen::<f32>()).unwrap()
}

/// Zero-padded "same" convolution with OIHW weights, HWC maps.
pub fn naive_conv(
    input: &[f64],
    h: usize,
    w: usize,
    cin: usize,
    weights: &[f32],
    bias: Option<&[f32]>,
    cout: usize,
    k: usize,
) -> Vec<f64> {
    let r = (k / 2) as isize;
    let mut out = vec![0.0; h * w * cout];
    for y in 0..h {
        for x in 0..w {
            for o in 0..cout {
                let mut acc = bias.map_or(0.0, |b| f64::from(b[o]));
                for i in 0..cin {
                    for ky in 0..k {
                        for kx in 0..k {
                            let sy = y as isize + ky as isize - r;
                            let sx = x as isize + kx as isize - r;
                            if sy < 0 || sx < 0 || sy >= h as isize || sx >= w as isize {
                                continue;
                            }
                            let wv = weights[((o * cin + i) * k + ky) * k + kx];
                            acc += f64::from(wv) * input[(sy as usize * w + sx as usize) * cin + i];
                        }
                    }
                }
                out[(y * w + x) * cout + o] = acc;
            }
        }
    }
    out
}

fn relu(v: &mut [f64]) {
    v.iter_mut().for_each(|x| *x = x.max(0.0));
}

/// Straight-line forward pass (before the output clamp), written from the layer
/// definitions without sharing code with the library.
pub fn naive_forward(lr: &Frame, params: &ParameterVector, c: &ModelConfig) -> (usize, usize, Vec<f64>) {
    let (h, w) = lr.dims();
    let (p, f, cg, cr, k) = (c.patch_size, c.feature_channels, c.generator_width, c.regular_width, c.scale);
    let v = params.values();
    let mut off = 0;
    let mut take = |n: usize| {
        let s = &v[off..off + n];
        off += n;
        s
    };
    let g1w = take(cg * 3 * 9);
    let g1b = take(cg);
    let g2w = take(27 * f * cg * 9);
    let g2b = take(27 * f);
    let r1w = take(cr * f * 25);
    let r1b = take(cr);
    let r2w = take(3 * k * k * cr * 9);
    let r2b = take(3 * k * k);

    let (ph, pw) = (h.div_ceil(p) * p, w.div_ceil(p) * p);
    let src = |y: usize, x: usize, ch: usize| f64::from(lr.get(y.min(h - 1), x.min(w - 1), ch));
    let mut feats = vec![0.0; ph * pw * f];
    for by in (0..ph).step_by(p) {
        for bx in (0..pw).step_by(p) {
            let mut patch = vec![0.0; p * p * 3];
            for y in 0..p {
                for x in 0..p {
                    for ch in 0..3 {
                        patch[(y * p + x) * 3 + ch] = src(by + y, bx + x, ch);
                    }
                }
            }
            let mut hidden = naive_conv(&patch, p, p, 3, g1w, Some(g1b), cg, 3);
            relu(&mut hidden);
            let full = naive_conv(&hidden, p, p, cg, g2w, Some(g2b), 27 * f, 3);
            let kernel64: Vec<f64> = (0..27 * f)
                .map(|j| (0..p * p).map(|q| full[q * 27 * f + j]).sum::<f64>() / (p * p) as f64)
                .collect();
            let mut out = vec![0.0; p * p * f];
            for y in 0..p {
                for x in 0..p {
                    for o in 0..f {
                        let mut acc = 0.0;
                        for ch in 0..3 {
                            for ky in 0..3 {
                                for kx in 0..3 {
                                    let sy = y as isize + ky as isize - 1;
                                    let sx = x as isize + kx as isize - 1;
                                    if sy < 0 || sx < 0 || sy >= p as isize || sx >= p as isize {
                                        continue;
                                    }
                                    acc += kernel64[((o * 3 + ch) * 3 + ky) * 3 + kx]
                                        * patch[(sy as usize * p + sx as usize) * 3 + ch];
                                }
                            }
                        }
                        out[(y * p + x) * f + o] = acc.max(0.0);
                    }
                }
            }
            for y in 0..p {
                for x in 0..p {
                    for o in 0..f {
                        feats[((by + y) * pw + bx + x) * f + o] = out[(y * p + x) * f + o];
                    }
                }
            }
        }
    }
    let mut cropped = vec![0.0; h * w * f];
    for y in 0..h {
        for x in 0..w {
            for o in 0..f {
                cropped[(y * w + x) * f + o] = feats[(y * pw + x) * f + o];
            }
        }
    }
    let mut reg = naive_conv(&cropped, h, w, f, r1w, Some(r1b), cr, 5);
    relu(&mut reg);
    let pre = naive_conv(&reg, h, w, cr, r2w, Some(r2b), 3 * k * k, 3);
    let (oh, ow) = (h * k, w * k);
    let mut out = vec![0.0; oh * ow * 3];
    for y in 0..oh {
        for x in 0..ow {
            for ch in 0..3 {
                let src_c = ch * k * k + (y % k) * k + x % k;
                out[(y * ow + x) * 3 + ch] = pre[((y / k) * w + x / k) * 3 * k * k + src_c];
            }
        }
    }
    (oh, ow, out)
}

/// Result of comparing analytic and central-difference gradients.
pub struct GradientCheck {
    pub worst_relative_error: f64,
    pub coordinates: usize,
}

/// Central differences of the segment loss on `count` random coordinates.
///
/// The step is applied in f32 parameter space, and the difference quotient uses
/// the step that was actually representable.
pub fn gradient_check(
    params: &ParameterVector,
    config: &ModelConfig,
    data: SegmentData<'_>,
    count: usize,
    step: f32,
    seed: u64,
) -> GradientCheck {
    let (_, analytic) = segment_loss_gradient(params, config, data).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..count {
        let i = rng.gen_range(0..params.len());
        let base = params.values()[i];
        let (up, down) = (base + step, base - step);
        let mut plus = params.clone();
        plus.values_mut()[i] = up;
        let mut minus = params.clone();
        minus.values_mut()[i] = down;
        let lp = segment_loss(&plus, config, data).unwrap();
        let lm = segment_loss(&minus, config, data).unwrap();
        let numeric = (lp - lm) / f64::from(up - down);
        let a = analytic[i];
        let scale = a.abs().max(numeric.abs()).max(1e-7);
        worst = worst.max((a - numeric).abs() / scale);
    }
    GradientCheck { worst_relative_error: worst, coordinates: count }
}
