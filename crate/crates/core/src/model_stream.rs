//! Model stream serialization.
//!
//! Layout (all integers big-endian):
//!
//! ```text
//! header (30 bytes)
//!   magic        4  "SRVC"
//!   version      1
//!   param_count  4  M
//!   F            2
//!   P            1
//!   k            1
//!   C_g          2
//!   C_r          2
//!   tau_ms       4  u32::MAX for an unbounded interval
//!   init_seed    8
//!   index_bits   1  ceil(log2 M), at least 1
//! initial model  M × binary16
//! update records, until end of file
//!   segment      4
//!   count        4
//!   indices      count × index_bits, MSB-first, zero-padded to a byte
//!   deltas       count × binary16
//! ```

use half::f16;

use crate::adaptation::{selection_count, SparseUpdate};
use crate::bits::{packed_len, BitReader, BitWriter};
use crate::error::{Error, Result, StreamLocation};
use crate::sr_model::{param_count, ModelConfig, ParameterVector};

pub const MAGIC: [u8; 4] = *b"SRVC";
pub const VERSION: u8 = 1;
pub const HEADER_LEN: usize = 30;
/// Fixed bytes of an update record before its index block.
pub const RECORD_PREFIX_LEN: usize = 8;
pub const UNBOUNDED_TAU_MS: u32 = u32::MAX;

/// Bits per stored index: `ceil(log2 m)`, never below one.
pub fn index_bits(m: usize) -> u32 {
    if m <= 2 {
        1
    } else {
        usize::BITS - (m - 1).leading_zeros()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StreamHeader {
    pub version: u8,
    pub param_count: u32,
    pub feature_channels: u16,
    pub patch_size: u8,
    pub scale: u8,
    pub generator_width: u16,
    pub regular_width: u16,
    pub tau_ms: u32,
    pub init_seed: u64,
    pub index_bits: u8,
}

fn narrow<T: TryFrom<usize>>(name: &str, v: usize) -> Result<T> {
    T::try_from(v).map_err(|_| Error::invalid(format!("{name} = {v} does not fit the stream header")))
}

/// Interval in whole milliseconds, with `u32::MAX` standing for infinity.
pub fn tau_to_ms(tau: f64) -> Result<u32> {
    if tau == f64::INFINITY {
        return Ok(UNBOUNDED_TAU_MS);
    }
    let ms = (tau * 1000.0).round();
    if !(ms >= 1.0 && ms < f64::from(UNBOUNDED_TAU_MS)) {
        return Err(Error::invalid(format!("interval {tau} s not representable in milliseconds")));
    }
    Ok(ms as u32)
}

impl StreamHeader {
    pub fn new(config: &ModelConfig, tau: f64, init_seed: u64) -> Result<Self> {
        config.validate()?;
        let m = param_count(config);
        Ok(StreamHeader {
            version: VERSION,
            param_count: narrow("param_count", m)?,
            feature_channels: narrow("feature_channels", config.feature_channels)?,
            patch_size: narrow("patch_size", config.patch_size)?,
            scale: narrow("scale", config.scale)?,
            generator_width: narrow("generator_width", config.generator_width)?,
            regular_width: narrow("regular_width", config.regular_width)?,
            tau_ms: tau_to_ms(tau)?,
            init_seed,
            index_bits: index_bits(m) as u8,
        })
    }

    pub fn model_config(&self) -> ModelConfig {
        ModelConfig {
            feature_channels: self.feature_channels.into(),
            patch_size: self.patch_size.into(),
            scale: self.scale.into(),
            generator_width: self.generator_width.into(),
            regular_width: self.regular_width.into(),
        }
    }

    /// Update interval in seconds; infinite in one-shot mode.
    pub fn tau_seconds(&self) -> f64 {
        if self.tau_ms == UNBOUNDED_TAU_MS {
            f64::INFINITY
        } else {
            f64::from(self.tau_ms) / 1000.0
        }
    }

    fn write(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(&MAGIC);
        out.push(self.version);
        out.extend_from_slice(&self.param_count.to_be_bytes());
        out.extend_from_slice(&self.feature_channels.to_be_bytes());
        out.push(self.patch_size);
        out.push(self.scale);
        out.extend_from_slice(&self.generator_width.to_be_bytes());
        out.extend_from_slice(&self.regular_width.to_be_bytes());
        out.extend_from_slice(&self.tau_ms.to_be_bytes());
        out.extend_from_slice(&self.init_seed.to_be_bytes());
        out.push(self.index_bits);
    }

    fn read(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < HEADER_LEN {
            if bytes.len() >= 4 && bytes[..4] != MAGIC {
                return Err(Error::Format("bad magic".into()));
            }
            return Err(Error::Truncated {
                location: StreamLocation::Header,
                detail: format!("{} of {HEADER_LEN} header bytes", bytes.len()),
            });
        }
        if bytes[..4] != MAGIC {
            return Err(Error::Format("bad magic".into()));
        }
        if bytes[4] != VERSION {
            return Err(Error::Format(format!("unsupported version {}", bytes[4])));
        }
        let be16 = |i: usize| u16::from_be_bytes([bytes[i], bytes[i + 1]]);
        let be32 = |i: usize| u32::from_be_bytes(bytes[i..i + 4].try_into().unwrap());
        let header = StreamHeader {
            version: bytes[4],
            param_count: be32(5),
            feature_channels: be16(9),
            patch_size: bytes[11],
            scale: bytes[12],
            generator_width: be16(13),
            regular_width: be16(15),
            tau_ms: be32(17),
            init_seed: u64::from_be_bytes(bytes[21..29].try_into().unwrap()),
            index_bits: bytes[29],
        };
        let config = header.model_config();
        config
            .validate()
            .map_err(|e| Error::Format(format!("header model config: {e}")))?;
        let m = param_count(&config);
        if m != header.param_count as usize {
            return Err(Error::Format(format!(
                "header declares {} parameters, model config has {m}",
                header.param_count
            )));
        }
        if u32::from(header.index_bits) != index_bits(m) {
            return Err(Error::Format(format!(
                "index width {} does not match ceil(log2 {m})",
                header.index_bits
            )));
        }
        Ok(header)
    }
}

/// Bytes of one serialized update record.
pub fn record_len(count: usize, index_bits: u32) -> usize {
    RECORD_PREFIX_LEN + packed_len(count, index_bits) + 2 * count
}

/// Record size in bits before byte-alignment padding.
pub fn record_bits_unpadded(count: usize, index_bits: u32) -> u64 {
    8 * RECORD_PREFIX_LEN as u64 + count as u64 * (u64::from(index_bits) + 16)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelStreamFile {
    pub header: StreamHeader,
    pub initial_model: Vec<f16>,
    pub updates: Vec<SparseUpdate>,
}

impl ModelStreamFile {
    /// Stream for `initial` (rounded to half precision) with no updates yet.
    pub fn new(header: StreamHeader, initial: &ParameterVector) -> Self {
        ModelStreamFile {
            header,
            initial_model: initial.values().iter().map(|&v| f16::from_f32(v)).collect(),
            updates: Vec::new(),
        }
    }

    pub fn initial_params(&self) -> ParameterVector {
        ParameterVector::new(self.initial_model.iter().map(|v| v.to_f32()).collect())
    }

    /// Parameter states after 0, 1, ..., N updates.
    pub fn replay(&self) -> Result<Vec<ParameterVector>> {
        let mut states = Vec::with_capacity(self.updates.len() + 1);
        let mut current = self.initial_params();
        states.push(current.clone());
        for update in &self.updates {
            apply_update(&mut current, update)?;
            states.push(current.clone());
        }
        Ok(states)
    }

    /// Serialized size computed from the format definition.
    pub fn analytic_len(&self) -> usize {
        let bits = u32::from(self.header.index_bits);
        HEADER_LEN
            + 2 * self.initial_model.len()
            + self.updates.iter().map(|u| record_len(u.len(), bits)).sum::<usize>()
    }

    fn validate(&self) -> Result<()> {
        let m = self.header.param_count as usize;
        if self.initial_model.len() != m {
            return Err(Error::invalid(format!(
                "initial model has {} values, header declares {m}",
                self.initial_model.len()
            )));
        }
        let mut last_segment = 0u32;
        for (r, u) in self.updates.iter().enumerate() {
            let location = StreamLocation::Record(r);
            check_update(u, m, location)?;
            if u.segment_index <= last_segment {
                return Err(Error::Corruption {
                    location,
                    detail: format!("segment index {} not above {last_segment}", u.segment_index),
                });
            }
            last_segment = u.segment_index;
        }
        Ok(())
    }
}

fn check_update(u: &SparseUpdate, m: usize, location: StreamLocation) -> Result<()> {
    if u.indices.len() != u.deltas.len() {
        return Err(Error::Corruption {
            location,
            detail: format!("{} indices but {} deltas", u.indices.len(), u.deltas.len()),
        });
    }
    let mut prev: Option<u32> = None;
    for &i in &u.indices {
        if i as usize >= m {
            return Err(Error::Corruption { location, detail: format!("index {i} out of range {m}") });
        }
        if prev.is_some_and(|p| p >= i) {
            return Err(Error::Corruption { location, detail: "indices not strictly increasing".into() });
        }
        prev = Some(i);
    }
    Ok(())
}

pub fn encode_stream(file: &ModelStreamFile) -> Result<Vec<u8>> {
    file.validate()?;
    let bits = u32::from(file.header.index_bits);
    let mut out = Vec::with_capacity(file.analytic_len());
    file.header.write(&mut out);
    for v in &file.initial_model {
        out.extend_from_slice(&v.to_be_bytes());
    }
    for u in &file.updates {
        out.extend_from_slice(&u.segment_index.to_be_bytes());
        out.extend_from_slice(&(u.indices.len() as u32).to_be_bytes());
        let mut w = BitWriter::new();
        for &i in &u.indices {
            w.write(i, bits);
        }
        out.extend_from_slice(&w.finish());
        for d in &u.deltas {
            out.extend_from_slice(&d.to_be_bytes());
        }
    }
    Ok(out)
}

pub fn decode_stream(bytes: &[u8]) -> Result<ModelStreamFile> {
    let header = StreamHeader::read(bytes)?;
    let m = header.param_count as usize;
    let bits = u32::from(header.index_bits);
    let mut pos = HEADER_LEN;
    let model_end = pos + 2 * m;
    if bytes.len() < model_end {
        return Err(Error::Truncated {
            location: StreamLocation::InitialModel,
            detail: format!("{} of {} bytes", bytes.len() - pos, 2 * m),
        });
    }
    let initial_model = bytes[pos..model_end]
        .chunks_exact(2)
        .map(|b| f16::from_be_bytes([b[0], b[1]]))
        .collect();
    pos = model_end;

    let mut updates: Vec<SparseUpdate> = Vec::new();
    while pos < bytes.len() {
        let location = StreamLocation::Record(updates.len());
        let truncated = |detail: String| Error::Truncated { location, detail };
        if bytes.len() - pos < RECORD_PREFIX_LEN {
            return Err(truncated("record prefix cut short".into()));
        }
        let segment_index = u32::from_be_bytes(bytes[pos..pos + 4].try_into().unwrap());
        let count = u32::from_be_bytes(bytes[pos + 4..pos + 8].try_into().unwrap()) as usize;
        pos += RECORD_PREFIX_LEN;
        if count > m {
            return Err(Error::Corruption { location, detail: format!("count {count} exceeds {m}") });
        }
        let index_len = packed_len(count, bits);
        let need = index_len + 2 * count;
        if bytes.len() - pos < need {
            return Err(truncated(format!("{} of {need} payload bytes", bytes.len() - pos)));
        }
        let mut r = BitReader::new(&bytes[pos..pos + index_len]);
        let indices = (0..count)
            .map(|_| r.read(bits).expect("index block length checked"))
            .collect();
        pos += index_len;
        let deltas = bytes[pos..pos + 2 * count]
            .chunks_exact(2)
            .map(|b| f16::from_be_bytes([b[0], b[1]]))
            .collect();
        pos += 2 * count;
        let update = SparseUpdate { segment_index, indices, deltas };
        check_update(&update, m, location)?;
        let floor = updates.last().map_or(0, |u| u.segment_index);
        if segment_index <= floor {
            return Err(Error::Corruption {
                location,
                detail: format!("segment index {segment_index} not above {floor}"),
            });
        }
        updates.push(update);
    }
    Ok(ModelStreamFile { header, initial_model, updates })
}

/// `theta[i] += delta` for each index, with the delta widened to `f32`.
///
/// Indices are validated before anything is written.
pub fn apply_update(params: &mut ParameterVector, update: &SparseUpdate) -> Result<()> {
    check_update(update, params.len(), StreamLocation::Record(update.segment_index as usize))?;
    let values = params.values_mut();
    for (&i, d) in update.indices.iter().zip(&update.deltas) {
        values[i as usize] += d.to_f32();
    }
    Ok(())
}

/// Upper bound on the model-stream bitrate in bits per second:
/// `(16 + ceil(log2 M)) · ceil(eta · M) / tau`.
pub fn model_bitrate(m: usize, eta: f64, tau: f64) -> Result<f64> {
    if m == 0 {
        return Err(Error::invalid("model must have parameters"));
    }
    if !(0.0..=1.0).contains(&eta) {
        return Err(Error::invalid(format!("eta must be in [0, 1], got {eta}")));
    }
    if !(tau > 0.0) {
        return Err(Error::invalid(format!("interval must be positive, got {tau}")));
    }
    let per_update = (16 + index_bits(m)) as f64 * selection_count(eta, m) as f64;
    Ok(per_update / tau)
}
