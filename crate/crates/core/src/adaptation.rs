//! Per-segment adaptation of the SR model.
//!
//! A segment is trained in two phases. A probe pass runs one epoch of Adam
//! over every parameter from a saved copy and records how far each parameter
//! moved; the `ceil(eta * M)` largest movers are selected and the model is
//! restored. The main phase then trains only the selected parameters. The
//! transmitted update is the half-precision difference on those indices, and
//! the next segment starts from the state the decoder will reconstruct.

use half::f16;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::frame::Frame;
use crate::model_stream::apply_update;
use crate::sr_model::{ModelConfig, Network, ParameterVector};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainingConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Fraction of parameters updated per segment.
    pub eta: f64,
    pub epochs_per_segment: usize,
    /// Train on random half-size crops instead of full frames.
    pub crop: bool,
    pub seed: u64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            learning_rate: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            eta: 0.01,
            epochs_per_segment: 16,
            crop: true,
            seed: 0,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.eta > 0.0 && self.eta <= 1.0) {
            return Err(Error::invalid(format!("eta must be in (0, 1], got {}", self.eta)));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid("learning rate must be positive"));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(Error::invalid(format!("{name} must be in [0, 1), got {b}")));
            }
        }
        if !(self.epsilon >= 0.0) {
            return Err(Error::invalid("epsilon must be non-negative"));
        }
        Ok(())
    }
}

/// One segment's model delta.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseUpdate {
    pub segment_index: u32,
    /// Strictly increasing parameter indices.
    pub indices: Vec<u32>,
    /// Half-precision change for each index.
    pub deltas: Vec<f16>,
}

impl SparseUpdate {
    pub fn empty(segment_index: u32) -> Self {
        SparseUpdate { segment_index, indices: Vec::new(), deltas: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SegmentTrainReport {
    pub segment_index: u32,
    pub loss_before: f64,
    pub loss_after: f64,
    pub selected_count: usize,
    pub epochs_run: usize,
}

/// `ceil(eta * m)`, tolerant of binary rounding in the product (0.07 · 100 selects 7, not 8).
pub fn selection_count(eta: f64, m: usize) -> usize {
    let x = eta * m as f64;
    let nearest = x.round();
    let count = if (x - nearest).abs() <= 1e-9 * x.max(1.0) { nearest } else { x.ceil() };
    (count as usize).min(m)
}

/// Adam moments, reset at every segment boundary.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step: u32,
}

impl AdamState {
    pub fn new(len: usize) -> Self {
        AdamState { m: vec![0.0; len], v: vec![0.0; len], step: 0 }
    }
}

/// Which parameters an optimizer step may touch.
#[derive(Debug, Clone, Copy)]
pub enum Mask<'a> {
    All,
    /// Strictly increasing indices.
    Indices(&'a [u32]),
}

/// Adam with bias correction, applied only to masked parameters.
///
/// Unmasked parameters and their moments are left untouched.
pub fn masked_adam_step(
    params: &mut ParameterVector,
    grads: &[f64],
    mask: Mask<'_>,
    state: &mut AdamState,
    cfg: &TrainingConfig,
) -> Result<()> {
    let n = params.len();
    if grads.len() != n || state.m.len() != n {
        return Err(Error::invalid("gradient, parameter and optimizer sizes differ"));
    }
    if let Some(i) = grads.iter().position(|g| !g.is_finite()) {
        return Err(Error::Training(format!(
            "non-finite gradient {} at parameter {i} (step {})",
            grads[i],
            state.step + 1
        )));
    }
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - cfg.beta1.powi(t);
    let bc2 = 1.0 - cfg.beta2.powi(t);
    let values = params.values_mut();
    let mut update = |i: usize| {
        let g = grads[i];
        let m = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * g;
        let v = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * g * g;
        state.m[i] = m;
        state.v[i] = v;
        let step = cfg.learning_rate * (m / bc1) / ((v / bc2).sqrt() + cfg.epsilon);
        values[i] = (f64::from(values[i]) - step) as f32;
    };
    match mask {
        Mask::All => (0..n).for_each(&mut update),
        Mask::Indices(idx) => {
            if let Some(&bad) = idx.iter().find(|&&i| i as usize >= n) {
                return Err(Error::invalid(format!("mask index {bad} out of range {n}")));
            }
            idx.iter().for_each(|&i| update(i as usize));
        }
    }
    Ok(())
}

/// Aligned random crops at half the LR size in each dimension.
///
/// The offset is drawn on the LR grid and scaled by `scale` for the HR crop.
pub fn random_half_crop(
    hr: &Frame,
    lr: &Frame,
    scale: usize,
    rng: &mut impl Rng,
) -> Result<(Frame, Frame)> {
    let (h, w) = lr.dims();
    if hr.dims() != (h * scale, w * scale) {
        return Err(Error::invalid("HR frame is not scale× the LR frame"));
    }
    if h < 2 || w < 2 {
        return Err(Error::invalid(format!("{h}x{w} frame too small for a half-size crop")));
    }
    let (ch, cw) = (h / 2, w / 2);
    let y0 = rng.gen_range(0..=h - ch);
    let x0 = rng.gen_range(0..=w - cw);
    let lr_crop = lr.crop(y0, x0, ch, cw)?;
    let hr_crop = hr.crop(y0 * scale, x0 * scale, ch * scale, cw * scale)?;
    Ok((lr_crop, hr_crop))
}

/// LR/HR frame pairs of one segment.
#[derive(Debug, Clone, Copy)]
pub struct SegmentData<'a> {
    pub lr: &'a [Frame],
    pub hr: &'a [Frame],
}

impl<'a> SegmentData<'a> {
    pub fn new(lr: &'a [Frame], hr: &'a [Frame]) -> Result<Self> {
        if lr.is_empty() {
            return Err(Error::invalid("segment has no frames"));
        }
        if lr.len() != hr.len() {
            return Err(Error::invalid(format!(
                "segment has {} LR frames but {} HR frames",
                lr.len(),
                hr.len()
            )));
        }
        Ok(SegmentData { lr, hr })
    }
}

/// Mean per-pixel squared RGB error norm over all frames of a segment.
pub fn segment_loss(params: &ParameterVector, config: &ModelConfig, data: SegmentData<'_>) -> Result<f64> {
    let net = Network::new(config, params)?;
    let mut total = 0.0;
    for (lr, hr) in data.lr.iter().zip(data.hr) {
        total += net.frame_loss(lr, hr)?;
    }
    Ok(total / data.lr.len() as f64)
}

/// Gradient of [`segment_loss`] with respect to every parameter.
pub fn segment_loss_gradient(
    params: &ParameterVector,
    config: &ModelConfig,
    data: SegmentData<'_>,
) -> Result<(f64, Vec<f64>)> {
    let net = Network::new(config, params)?;
    let mut total = 0.0;
    let mut grad = vec![0.0; params.len()];
    for (lr, hr) in data.lr.iter().zip(data.hr) {
        let (l, g) = net.loss_and_gradient(lr, hr)?;
        total += l;
        for (a, b) in grad.iter_mut().zip(g) {
            *a += b;
        }
    }
    let n = data.lr.len() as f64;
    grad.iter_mut().for_each(|g| *g /= n);
    Ok((total / n, grad))
}

/// One pass over the segment in frame order with one optimizer step per frame.
/// Returns the mean training loss of the pass.
pub fn train_epoch(
    params: &mut ParameterVector,
    config: &ModelConfig,
    data: SegmentData<'_>,
    mask: Mask<'_>,
    state: &mut AdamState,
    cfg: &TrainingConfig,
    rng: &mut ChaCha8Rng,
) -> Result<f64> {
    let mut total = 0.0;
    for (lr, hr) in data.lr.iter().zip(data.hr) {
        let net = Network::new(config, params)?;
        let (loss, grad) = if cfg.crop {
            let (lr_c, hr_c) = random_half_crop(hr, lr, config.scale, rng)?;
            net.loss_and_gradient(&lr_c, &hr_c)?
        } else {
            net.loss_and_gradient(lr, hr)?
        };
        total += loss;
        masked_adam_step(params, &grad, mask, state, cfg)?;
    }
    Ok(total / data.lr.len() as f64)
}

/// Trains every parameter for `epochs` passes with a fresh optimizer.
pub fn train_full(
    params: &mut ParameterVector,
    config: &ModelConfig,
    data: SegmentData<'_>,
    epochs: usize,
    cfg: &TrainingConfig,
) -> Result<f64> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut state = AdamState::new(params.len());
    let mut last = f64::NAN;
    for _ in 0..epochs {
        last = train_epoch(params, config, data, Mask::All, &mut state, cfg, &mut rng)?;
    }
    Ok(last)
}

/// Indices of the `count` largest magnitudes, ties to the lower index, ascending.
pub fn top_indices(changes: &[f64], count: usize) -> Vec<u32> {
    let mut order: Vec<u32> = (0..changes.len() as u32).collect();
    let count = count.min(order.len());
    let by_rank = |a: &u32, b: &u32| {
        let (ca, cb) = (changes[*a as usize].abs(), changes[*b as usize].abs());
        cb.total_cmp(&ca).then(a.cmp(b))
    };
    if count < order.len() && count > 0 {
        order.select_nth_unstable_by(count - 1, by_rank);
    }
    order.truncate(count);
    order.sort_unstable();
    order
}

/// Runs one full-parameter epoch from `params` and returns the indices that
/// moved most. `params` and `rng` are not modified.
pub fn probe_and_select(
    params: &ParameterVector,
    config: &ModelConfig,
    data: SegmentData<'_>,
    cfg: &TrainingConfig,
    rng: &ChaCha8Rng,
) -> Result<Vec<u32>> {
    cfg.validate()?;
    let mut probe = params.clone();
    let mut probe_rng = rng.clone();
    let mut state = AdamState::new(params.len());
    train_epoch(&mut probe, config, data, Mask::All, &mut state, cfg, &mut probe_rng)?;
    let changes: Vec<f64> = probe
        .values()
        .iter()
        .zip(params.values())
        .map(|(&a, &b)| f64::from(a) - f64::from(b))
        .collect();
    Ok(top_indices(&changes, selection_count(cfg.eta, params.len())))
}

/// Result of adapting the model to one segment.
#[derive(Debug, Clone)]
pub struct SegmentOutcome {
    pub update: SparseUpdate,
    /// State after applying `update`, identical to what the decoder reconstructs.
    pub params: ParameterVector,
    pub report: SegmentTrainReport,
}

fn segment_rng(seed: u64, segment_index: u32) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(u64::from(segment_index));
    rng
}

/// Adapts the transmitted state `previous` to one segment and returns the
/// sparse update together with the next transmitted state.
pub fn adapt_segment(
    previous: &ParameterVector,
    config: &ModelConfig,
    data: SegmentData<'_>,
    cfg: &TrainingConfig,
    segment_index: u32,
) -> Result<SegmentOutcome> {
    cfg.validate()?;
    previous.check(config)?;
    let mut rng = segment_rng(cfg.seed, segment_index);
    let loss_before = segment_loss(previous, config, data)?;

    let indices = probe_and_select(previous, config, data, cfg, &rng)?;
    let mut trained = previous.clone();
    let mut state = AdamState::new(previous.len());
    for _ in 0..cfg.epochs_per_segment {
        train_epoch(&mut trained, config, data, Mask::Indices(&indices), &mut state, cfg, &mut rng)?;
    }

    let mut deltas = Vec::with_capacity(indices.len());
    for &i in &indices {
        let i = i as usize;
        let d = f16::from_f32(trained.values()[i] - previous.values()[i]);
        if !d.is_finite() {
            return Err(Error::Training(format!(
                "parameter {i} moved by {} which overflows half precision",
                trained.values()[i] - previous.values()[i]
            )));
        }
        deltas.push(d);
    }
    let update = SparseUpdate { segment_index, indices, deltas };
    let mut next = previous.clone();
    apply_update(&mut next, &update)?;
    let loss_after = segment_loss(&next, config, data)?;
    let report = SegmentTrainReport {
        segment_index,
        loss_before,
        loss_after,
        selected_count: update.len(),
        epochs_run: cfg.epochs_per_segment,
    };
    Ok(SegmentOutcome { update, params: next, report })
}
