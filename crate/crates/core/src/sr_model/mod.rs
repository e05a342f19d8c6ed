//! Lightweight spatially-adaptive super-resolution network.
//!
//! A frame is cut into `P`×`P` patches. For each patch a two-layer CNN
//! (3×3 conv + ReLU, 3×3 conv, mean pool) generates a 3×3 kernel with 3 input
//! and `F` output channels, which is applied to the same patch and rectified.
//! The patch features are reassembled and passed through a 5×5 conv + ReLU and
//! a 3×3 conv producing `3k²` channels, which a pixel shuffle turns into a
//! `k`× larger RGB frame. All layers before the shuffle run at input resolution.

mod network;
mod patches;
mod shuffle;
pub mod tensor;

pub use network::{Activations, Network};
pub use patches::{batch_to_space, space_to_batch, PatchGrid};
pub use shuffle::{pixel_shuffle, pixel_unshuffle};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::frame::{Frame, CHANNELS};

/// Entries in one generated per-patch kernel per output feature (3×3×3).
pub const KERNEL_TAPS: usize = 27;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ModelConfig {
    /// Output channels of the adaptive block (`F`).
    pub feature_channels: usize,
    /// Patch side in pixels (`P`).
    pub patch_size: usize,
    /// Integer upscale factor (`k`).
    pub scale: usize,
    /// Hidden width of the kernel generator.
    pub generator_width: usize,
    /// Hidden width of the regular block.
    pub regular_width: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            feature_channels: 32,
            patch_size: 5,
            scale: 4,
            generator_width: 256,
            regular_width: 128,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("feature_channels", self.feature_channels),
            ("patch_size", self.patch_size),
            ("scale", self.scale),
            ("generator_width", self.generator_width),
            ("regular_width", self.regular_width),
        ];
        for (name, v) in fields {
            if v == 0 {
                return Err(Error::invalid(format!("model {name} must be positive")));
            }
        }
        Ok(())
    }

    /// Channels fed to the pixel shuffle.
    pub fn shuffle_channels(&self) -> usize {
        CHANNELS * self.scale * self.scale
    }

    pub fn kernel_len(&self) -> usize {
        KERNEL_TAPS * self.feature_channels
    }

    pub fn layout(&self) -> ParamLayout {
        ParamLayout::new(self)
    }
}

/// Total number of trainable parameters.
pub fn param_count(config: &ModelConfig) -> usize {
    config.layout().total()
}

/// One convolution of the network inside the flat parameter vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvSpec {
    pub name: &'static str,
    pub cout: usize,
    pub cin: usize,
    pub kernel: usize,
    /// Offset of the OIHW weight tensor; the bias follows immediately.
    pub offset: usize,
}

impl ConvSpec {
    pub fn weight_len(&self) -> usize {
        self.cout * self.cin * self.kernel * self.kernel
    }

    pub fn weights(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.weight_len()
    }

    pub fn bias(&self) -> std::ops::Range<usize> {
        let start = self.offset + self.weight_len();
        start..start + self.cout
    }

    pub fn len(&self) -> usize {
        self.weight_len() + self.cout
    }
}

/// Canonical flat ordering of the parameters.
///
/// Tensors appear in network order: generator conv 1, generator conv 2,
/// regular conv 1, regular conv 2, each as an OIHW weight tensor
/// (`[out][in][ky][kx]`, row-major) followed by its bias. The generator's
/// second conv emits the kernel in OIHW order too: generated value
/// `((f * 3 + c) * 3 + ky) * 3 + kx` is the weight from input channel `c` to
/// feature `f` at tap (`ky`, `kx`).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamLayout {
    pub gen1: ConvSpec,
    pub gen2: ConvSpec,
    pub reg1: ConvSpec,
    pub reg2: ConvSpec,
}

impl ParamLayout {
    fn new(c: &ModelConfig) -> Self {
        let gen1 = ConvSpec { name: "generator.0", cout: c.generator_width, cin: CHANNELS, kernel: 3, offset: 0 };
        let gen2 = ConvSpec {
            name: "generator.1",
            cout: c.kernel_len(),
            cin: c.generator_width,
            kernel: 3,
            offset: gen1.offset + gen1.len(),
        };
        let reg1 = ConvSpec {
            name: "regular.0",
            cout: c.regular_width,
            cin: c.feature_channels,
            kernel: 5,
            offset: gen2.offset + gen2.len(),
        };
        let reg2 = ConvSpec {
            name: "regular.1",
            cout: c.shuffle_channels(),
            cin: c.regular_width,
            kernel: 3,
            offset: reg1.offset + reg1.len(),
        };
        ParamLayout { gen1, gen2, reg1, reg2 }
    }

    pub fn convs(&self) -> [ConvSpec; 4] {
        [self.gen1, self.gen2, self.reg1, self.reg2]
    }

    pub fn total(&self) -> usize {
        self.reg2.offset + self.reg2.len()
    }
}

/// Flat `f32` parameter vector in canonical order.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterVector {
    values: Vec<f32>,
}

impl ParameterVector {
    pub fn new(values: Vec<f32>) -> Self {
        ParameterVector { values }
    }

    pub fn zeros(config: &ModelConfig) -> Self {
        ParameterVector { values: vec![0.0; param_count(config)] }
    }

    /// He-style uniform initialization: weights ~ U(−√(6/fan_in), √(6/fan_in)), biases zero.
    pub fn initialize(config: &ModelConfig, seed: u64) -> Self {
        let layout = config.layout();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut values = vec![0.0f32; layout.total()];
        for conv in layout.convs() {
            let fan_in = (conv.cin * conv.kernel * conv.kernel) as f32;
            let bound = (6.0 / fan_in).sqrt();
            for v in &mut values[conv.weights()] {
                *v = rng.gen_range(-bound..bound);
            }
        }
        ParameterVector { values }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f32] {
        &mut self.values
    }

    pub fn check(&self, config: &ModelConfig) -> Result<()> {
        let m = param_count(config);
        if self.values.len() != m {
            return Err(Error::invalid(format!(
                "parameter vector has {} entries, config needs {m}",
                self.values.len()
            )));
        }
        Ok(())
    }

    /// SHA-256 over the little-endian bit patterns, hex encoded.
    pub fn digest(&self) -> String {
        let mut hasher = Sha256::new();
        for v in &self.values {
            hasher.update(v.to_bits().to_le_bytes());
        }
        hasher.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Rounds every entry to the nearest IEEE binary16 value.
    pub fn to_half_precision(&self) -> ParameterVector {
        ParameterVector {
            values: self
                .values
                .iter()
                .map(|&v| half::f16::from_f32(v).to_f32())
                .collect(),
        }
    }
}

/// Runs the network on one frame, returning a frame `k` times larger.
pub fn forward(lr: &Frame, params: &ParameterVector, config: &ModelConfig) -> Result<Frame> {
    Network::new(config, params)?.upscale(lr)
}
