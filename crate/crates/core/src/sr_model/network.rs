//! Forward and backward passes of the SR network.

use crate::error::{Error, Result};
use crate::frame::{Frame, CHANNELS};

use super::patches::{batch_to_space, space_to_batch, split_gradient, PatchGrid};
use super::shuffle::{pixel_shuffle, pixel_unshuffle};
use super::tensor::{conv_backward, conv_forward, oihw_to_taps, taps_to_oihw, Map};
use super::{ConvSpec, ModelConfig, ParamLayout, ParameterVector};

struct ConvWeights {
    spec: ConvSpec,
    taps: Vec<f64>,
    bias: Vec<f64>,
}

impl ConvWeights {
    fn load(spec: ConvSpec, values: &[f32]) -> Self {
        ConvWeights {
            spec,
            taps: oihw_to_taps(&values[spec.weights()], spec.cout, spec.cin, spec.kernel),
            bias: values[spec.bias()].iter().map(|&v| f64::from(v)).collect(),
        }
    }

    fn forward(&self, input: &Map) -> Map {
        conv_forward(input, &self.taps, Some(&self.bias), self.spec.kernel, self.spec.cout)
    }
}

/// Gradient buffers in tap-major layout, one per convolution.
struct ConvGrad {
    taps: Vec<f64>,
    bias: Vec<f64>,
}

impl ConvGrad {
    fn zeros(spec: &ConvSpec) -> Self {
        ConvGrad { taps: vec![0.0; spec.weight_len()], bias: vec![0.0; spec.cout] }
    }

    fn write_flat(&self, spec: &ConvSpec, flat: &mut [f64]) {
        taps_to_oihw(&self.taps, spec.cout, spec.cin, spec.kernel, &mut flat[spec.weights()]);
        for (dst, &g) in flat[spec.bias()].iter_mut().zip(&self.bias) {
            *dst += g;
        }
    }
}

/// Intermediate values of one patch through the adaptive block.
#[derive(Debug, Clone)]
pub struct PatchActivations {
    pub input: Map,
    /// Rectified output of the generator's first conv.
    pub hidden: Map,
    /// Mean over the patch of each 3×3 input window of `hidden`, `[tap][channel]`.
    pub windows: Vec<f64>,
    /// Generated kernel, tap-major `[ky][kx][c][f]`.
    pub kernel_taps: Vec<f64>,
    /// Rectified adaptive-conv output.
    pub features: Map,
}

/// Everything the backward pass needs from a forward evaluation.
#[derive(Debug, Clone)]
pub struct Activations {
    pub grid_rows: usize,
    pub grid_cols: usize,
    pub patches: Vec<PatchActivations>,
    pub features: Map,
    /// Rectified output of the regular block's first conv.
    pub regular: Map,
    /// Shuffled output before clamping to [0, 1].
    pub output: Map,
}

impl Activations {
    pub fn to_frame(&self) -> Frame {
        let data = self.output.data.iter().map(|&v| v.clamp(0.0, 1.0) as f32).collect();
        Frame::from_data(self.output.height, self.output.width, data)
            .expect("network output has valid dimensions")
    }
}

/// A parameter snapshot unpacked for evaluation.
pub struct Network {
    config: ModelConfig,
    layout: ParamLayout,
    gen1: ConvWeights,
    gen2: ConvWeights,
    reg1: ConvWeights,
    reg2: ConvWeights,
}

fn kernel_oihw_to_taps(oihw: &[f64], features: usize) -> Vec<f64> {
    let mut taps = vec![0.0; oihw.len()];
    for f in 0..features {
        for c in 0..CHANNELS {
            for t in 0..9 {
                taps[(t * CHANNELS + c) * features + f] = oihw[(f * CHANNELS + c) * 9 + t];
            }
        }
    }
    taps
}

fn kernel_taps_to_oihw(taps: &[f64], features: usize) -> Vec<f64> {
    let mut oihw = vec![0.0; taps.len()];
    for f in 0..features {
        for c in 0..CHANNELS {
            for t in 0..9 {
                oihw[(f * CHANNELS + c) * 9 + t] = taps[(t * CHANNELS + c) * features + f];
            }
        }
    }
    oihw
}

/// Valid source rows (or columns) of a 3×3 tap offset inside a patch of side `p`.
#[inline]
fn tap_range(offset: usize, p: usize) -> std::ops::Range<usize> {
    offset.saturating_sub(1)..(p + offset).saturating_sub(1).min(p)
}

impl Network {
    pub fn new(config: &ModelConfig, params: &ParameterVector) -> Result<Self> {
        config.validate()?;
        params.check(config)?;
        let layout = config.layout();
        let v = params.values();
        Ok(Network {
            config: *config,
            layout,
            gen1: ConvWeights::load(layout.gen1, v),
            gen2: ConvWeights::load(layout.gen2, v),
            reg1: ConvWeights::load(layout.reg1, v),
            reg2: ConvWeights::load(layout.reg2, v),
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    fn check_patch(&self, patch: &Map) -> Result<()> {
        let p = self.config.patch_size;
        if patch.height != p || patch.width != p || patch.channels != CHANNELS {
            return Err(Error::invalid(format!(
                "patch must be {p}x{p}x{CHANNELS}, got {}x{}x{}",
                patch.height, patch.width, patch.channels
            )));
        }
        Ok(())
    }

    /// Returns (rectified hidden map, pooled windows, generated kernel in OIHW order).
    fn generate(&self, patch: &Map) -> (Map, Vec<f64>, Vec<f64>) {
        let p = self.config.patch_size;
        let cg = self.config.generator_width;
        let mut hidden = self.gen1.forward(patch);
        hidden.relu_in_place();

        let norm = 1.0 / (p * p) as f64;
        let mut windows = vec![0.0; 9 * cg];
        for ky in 0..3 {
            for kx in 0..3 {
                let w = &mut windows[(ky * 3 + kx) * cg..(ky * 3 + kx + 1) * cg];
                for iy in tap_range(ky, p) {
                    for ix in tap_range(kx, p) {
                        for (acc, &h) in w.iter_mut().zip(hidden.pixel(iy, ix)) {
                            *acc += h;
                        }
                    }
                }
                for acc in w.iter_mut() {
                    *acc *= norm;
                }
            }
        }

        // The pooled kernel is the bias plus the window means times the weights.
        let klen = self.config.kernel_len();
        let mut kernel = self.gen2.bias.clone();
        for (r, &s) in windows.iter().enumerate() {
            if s == 0.0 {
                continue;
            }
            let row = &self.gen2.taps[r * klen..(r + 1) * klen];
            for (k, &w) in kernel.iter_mut().zip(row) {
                *k += s * w;
            }
        }
        (hidden, windows, kernel)
    }

    /// The 27·F kernel generated for a `P`×`P`×3 patch, in OIHW order.
    pub fn generate_kernel(&self, patch: &Map) -> Result<Vec<f64>> {
        self.check_patch(patch)?;
        Ok(self.generate(patch).2)
    }

    fn adaptive(&self, patch: &Map) -> PatchActivations {
        let f = self.config.feature_channels;
        let (hidden, windows, kernel) = self.generate(patch);
        let kernel_taps = kernel_oihw_to_taps(&kernel, f);
        let mut features = conv_forward(patch, &kernel_taps, None, 3, f);
        features.relu_in_place();
        PatchActivations { input: patch.clone(), hidden, windows, kernel_taps, features }
    }

    /// Rectified per-patch convolution of `patch` with its own generated kernel.
    pub fn adaptive_conv_block(&self, patch: &Map) -> Result<Map> {
        self.check_patch(patch)?;
        Ok(self.adaptive(patch).features)
    }

    pub fn activations(&self, lr: &Frame) -> Result<Activations> {
        let input = Map::from_frame(lr);
        let grid = space_to_batch(&input, self.config.patch_size)?;
        let patches: Vec<PatchActivations> = grid.patches.iter().map(|t| self.adaptive(t)).collect();
        let feature_grid = PatchGrid {
            patches: patches.iter().map(|p| p.features.clone()).collect(),
            ..grid
        };
        let features = batch_to_space(&feature_grid, input.height, input.width)?;
        let mut regular = self.reg1.forward(&features);
        regular.relu_in_place();
        let output = pixel_shuffle(&self.reg2.forward(&regular), self.config.scale)?;
        Ok(Activations {
            grid_rows: feature_grid.grid_rows,
            grid_cols: feature_grid.grid_cols,
            patches,
            features,
            regular,
            output,
        })
    }

    /// Upscaled frame, clamped to [0, 1].
    pub fn upscale(&self, lr: &Frame) -> Result<Frame> {
        Ok(self.activations(lr)?.to_frame())
    }

    fn check_pair(&self, lr: &Frame, hr: &Frame) -> Result<()> {
        let k = self.config.scale;
        if hr.dims() != (lr.height() * k, lr.width() * k) {
            return Err(Error::invalid(format!(
                "target {}x{} is not {k}x the input {}x{}",
                hr.height(),
                hr.width(),
                lr.height(),
                lr.width()
            )));
        }
        Ok(())
    }

    /// Mean over output pixels of the squared RGB error norm.
    pub fn frame_loss(&self, lr: &Frame, hr: &Frame) -> Result<f64> {
        self.check_pair(lr, hr)?;
        let out = self.activations(lr)?.output;
        let n = (out.height * out.width) as f64;
        let sum: f64 = out
            .data
            .iter()
            .zip(hr.data())
            .map(|(&o, &t)| {
                let d = o.clamp(0.0, 1.0) - f64::from(t);
                d * d
            })
            .sum();
        Ok(sum / n)
    }

    /// Frame loss and its gradient with respect to every parameter, in canonical order.
    pub fn loss_and_gradient(&self, lr: &Frame, hr: &Frame) -> Result<(f64, Vec<f64>)> {
        self.check_pair(lr, hr)?;
        let acts = self.activations(lr)?;
        let out = &acts.output;
        let n = (out.height * out.width) as f64;
        let mut loss = 0.0;
        let mut grad_out = Map::zeros(out.height, out.width, CHANNELS);
        for ((g, &o), &t) in grad_out.data.iter_mut().zip(&out.data).zip(hr.data()) {
            let d = o.clamp(0.0, 1.0) - f64::from(t);
            loss += d * d;
            if (0.0..=1.0).contains(&o) {
                *g = 2.0 * d / n;
            }
        }
        loss /= n;

        let mut g_gen1 = ConvGrad::zeros(&self.layout.gen1);
        let mut g_gen2 = ConvGrad::zeros(&self.layout.gen2);
        let mut g_reg1 = ConvGrad::zeros(&self.layout.reg1);
        let mut g_reg2 = ConvGrad::zeros(&self.layout.reg2);

        let grad_shuffled = pixel_unshuffle(&grad_out, self.config.scale)?;
        let mut grad_regular = Map::zeros(acts.regular.height, acts.regular.width, acts.regular.channels);
        conv_backward(
            &acts.regular,
            &self.reg2.taps,
            3,
            &grad_shuffled,
            Some(&mut grad_regular),
            &mut g_reg2.taps,
            Some(&mut g_reg2.bias),
        );
        for (g, &a) in grad_regular.data.iter_mut().zip(&acts.regular.data) {
            if a <= 0.0 {
                *g = 0.0;
            }
        }
        let mut grad_features =
            Map::zeros(acts.features.height, acts.features.width, acts.features.channels);
        conv_backward(
            &acts.features,
            &self.reg1.taps,
            5,
            &grad_regular,
            Some(&mut grad_features),
            &mut g_reg1.taps,
            Some(&mut g_reg1.bias),
        );

        let p = self.config.patch_size;
        let tiles = split_gradient(&grad_features, acts.grid_rows, acts.grid_cols, p);
        for (patch, grad) in acts.patches.iter().zip(tiles) {
            self.patch_backward(patch, grad, &mut g_gen1, &mut g_gen2);
        }

        let mut flat = vec![0.0; self.layout.total()];
        g_gen1.write_flat(&self.layout.gen1, &mut flat);
        g_gen2.write_flat(&self.layout.gen2, &mut flat);
        g_reg1.write_flat(&self.layout.reg1, &mut flat);
        g_reg2.write_flat(&self.layout.reg2, &mut flat);
        Ok((loss, flat))
    }

    fn patch_backward(
        &self,
        patch: &PatchActivations,
        mut grad_features: Map,
        g_gen1: &mut ConvGrad,
        g_gen2: &mut ConvGrad,
    ) {
        for (g, &a) in grad_features.data.iter_mut().zip(&patch.features.data) {
            if a <= 0.0 {
                *g = 0.0;
            }
        }
        if grad_features.data.iter().all(|&g| g == 0.0) {
            return;
        }
        let f = self.config.feature_channels;
        let cg = self.config.generator_width;
        let p = self.config.patch_size;
        let klen = self.config.kernel_len();

        let mut grad_kernel_taps = vec![0.0; patch.kernel_taps.len()];
        conv_backward(&patch.input, &patch.kernel_taps, 3, &grad_features, None, &mut grad_kernel_taps, None);
        let grad_kernel = kernel_taps_to_oihw(&grad_kernel_taps, f);

        for (b, &g) in g_gen2.bias.iter_mut().zip(&grad_kernel) {
            *b += g;
        }
        let mut grad_windows = vec![0.0; 9 * cg];
        for (r, (&s, gw)) in patch.windows.iter().zip(grad_windows.iter_mut()).enumerate() {
            let w_row = &self.gen2.taps[r * klen..(r + 1) * klen];
            let g_row = &mut g_gen2.taps[r * klen..(r + 1) * klen];
            let mut acc = 0.0;
            for ((gw_out, &w), &gk) in g_row.iter_mut().zip(w_row).zip(&grad_kernel) {
                *gw_out += s * gk;
                acc += w * gk;
            }
            *gw = acc;
        }

        let norm = 1.0 / (p * p) as f64;
        let mut grad_hidden = Map::zeros(p, p, cg);
        for ky in 0..3 {
            for kx in 0..3 {
                let gw = &grad_windows[(ky * 3 + kx) * cg..(ky * 3 + kx + 1) * cg];
                for iy in tap_range(ky, p) {
                    for ix in tap_range(kx, p) {
                        for (h, &g) in grad_hidden.pixel_mut(iy, ix).iter_mut().zip(gw) {
                            *h += g * norm;
                        }
                    }
                }
            }
        }
        for (g, &a) in grad_hidden.data.iter_mut().zip(&patch.hidden.data) {
            if a <= 0.0 {
                *g = 0.0;
            }
        }
        conv_backward(&patch.input, &self.gen1.taps, 3, &grad_hidden, None, &mut g_gen1.taps, Some(&mut g_gen1.bias));
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> ModelConfig {
        ModelConfig { feature_channels: 4, patch_size: 4, scale: 2, generator_width: 8, regular_width: 8 }
    }

    fn frame(h: usize, w: usize, seed: usize) -> Frame {
        Frame::from_fn(h, w, |y, x, c| (((y * 31 + x * 17 + c * 7 + seed) * 2654435761usize) % 1000) as f32 / 1000.0)
            .unwrap()
    }

    #[test]
    fn tap_ranges() {
        assert_eq!(tap_range(0, 4), 0..3);
        assert_eq!(tap_range(1, 4), 0..4);
        assert_eq!(tap_range(2, 4), 1..4);
        assert_eq!(tap_range(0, 1), 0..0);
        assert_eq!(tap_range(1, 1), 0..1);
        assert_eq!(tap_range(2, 1), 1..1);
    }

    #[test]
    fn output_shape_is_scaled() {
        let c = ModelConfig { scale: 4, ..tiny() };
        let net = Network::new(&c, &ParameterVector::initialize(&c, 1)).unwrap();
        let out = net.upscale(&frame(20, 20, 0)).unwrap();
        assert_eq!(out.dims(), (80, 80));
        let odd = net.upscale(&frame(7, 5, 0)).unwrap();
        assert_eq!(odd.dims(), (28, 20));
    }

    #[test]
    fn zero_parameters_give_black_frame() {
        let c = tiny();
        let net = Network::new(&c, &ParameterVector::zeros(&c)).unwrap();
        let out = net.upscale(&frame(8, 8, 3)).unwrap();
        assert!(out.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn zero_generator_gives_zero_kernel_and_features() {
        let c = tiny();
        let mut params = ParameterVector::initialize(&c, 5);
        let l = c.layout();
        for v in &mut params.values_mut()[l.gen1.offset..l.gen2.bias().end] {
            *v = 0.0;
        }
        let net = Network::new(&c, &params).unwrap();
        let patch = Map::from_frame(&frame(4, 4, 1));
        let k = net.generate_kernel(&patch).unwrap();
        assert_eq!(k.len(), 27 * 4);
        assert!(k.iter().all(|&v| v == 0.0));
        assert!(net.adaptive_conv_block(&patch).unwrap().data.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn kernels_adapt_to_content() {
        let c = tiny();
        let net = Network::new(&c, &ParameterVector::initialize(&c, 7)).unwrap();
        let a = net.generate_kernel(&Map::from_frame(&frame(4, 4, 1))).unwrap();
        let b = net.generate_kernel(&Map::from_frame(&frame(4, 4, 99))).unwrap();
        let diff = a.iter().zip(&b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        assert!(diff > 0.0);
    }

    #[test]
    fn single_pixel_patch_uses_center_taps() {
        let c = ModelConfig { patch_size: 1, ..tiny() };
        let net = Network::new(&c, &ParameterVector::initialize(&c, 3)).unwrap();
        let patch = Map::from_frame(&frame(1, 1, 4));
        let kernel = net.generate_kernel(&patch).unwrap();
        let feats = net.adaptive_conv_block(&patch).unwrap();
        for f in 0..4 {
            let dot: f64 = (0..3).map(|ch| kernel[(f * 3 + ch) * 9 + 4] * patch.data[ch]).sum();
            assert!((feats.data[f] - dot.max(0.0)).abs() < 1e-12);
        }
    }

    #[test]
    fn wrong_patch_shape_rejected() {
        let c = tiny();
        let net = Network::new(&c, &ParameterVector::zeros(&c)).unwrap();
        assert!(net.generate_kernel(&Map::zeros(3, 4, 3)).is_err());
    }

    #[test]
    fn forward_is_deterministic() {
        let c = tiny();
        let params = ParameterVector::initialize(&c, 11);
        let a = forward_bits(&c, &params);
        let b = forward_bits(&c, &params);
        assert_eq!(a, b);
    }

    fn forward_bits(c: &ModelConfig, p: &ParameterVector) -> Vec<u32> {
        super::super::forward(&frame(9, 6, 2), p, c)
            .unwrap()
            .data()
            .iter()
            .map(|v| v.to_bits())
            .collect()
    }

    #[test]
    fn mismatched_target_rejected() {
        let c = tiny();
        let net = Network::new(&c, &ParameterVector::zeros(&c)).unwrap();
        assert!(net.frame_loss(&frame(4, 4, 0), &frame(8, 7, 0)).is_err());
    }

    #[test]
    fn loss_of_gradient_call_matches_frame_loss() {
        let c = tiny();
        let net = Network::new(&c, &ParameterVector::initialize(&c, 2)).unwrap();
        let (lr, hr) = (frame(6, 6, 1), frame(12, 12, 5));
        let (l, g) = net.loss_and_gradient(&lr, &hr).unwrap();
        assert_eq!(l, net.frame_loss(&lr, &hr).unwrap());
        assert_eq!(g.len(), super::super::param_count(&c));
    }
}
