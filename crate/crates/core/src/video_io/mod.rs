//! Frame ingestion, area downsampling, segmentation and content-stream codecs.

mod codec;
pub(crate) mod raw;

pub use codec::{
    codec_by_id, ContentCodec, ContentStream, ExternalCodec, LosslessCodec, QuantizingCodec,
    ENCODER_BIN_ENV,
};
pub use raw::{
    load_video, read_png_sequence, read_raw_video, write_png_sequence, write_raw_video,
    RawVideoHeader,
};

use crate::error::{Error, Result};
use crate::frame::{Frame, VideoSequence, CHANNELS};

/// Block-mean downsampling by an integer factor.
///
/// Dimensions that are not multiples of `factor` are first extended by edge
/// replication, so the output is `ceil(h / factor)` × `ceil(w / factor)`.
pub fn area_downsample(frame: &Frame, factor: usize) -> Result<Frame> {
    if factor == 0 {
        return Err(Error::invalid("downsample factor must be positive"));
    }
    let (h, w) = frame.dims();
    let (oh, ow) = (h.div_ceil(factor), w.div_ceil(factor));
    let norm = 1.0 / (factor * factor) as f64;
    let mut data = Vec::with_capacity(oh * ow * CHANNELS);
    for oy in 0..oh {
        for ox in 0..ow {
            let mut acc = [0f64; CHANNELS];
            for dy in 0..factor {
                let y = (oy * factor + dy).min(h - 1);
                for dx in 0..factor {
                    let x = (ox * factor + dx).min(w - 1);
                    for (c, a) in acc.iter_mut().enumerate() {
                        *a += f64::from(frame.get(y, x, c));
                    }
                }
            }
            data.extend(acc.iter().map(|a| (a * norm) as f32));
        }
    }
    Frame::from_data(oh, ow, data)
}

pub fn downsample_video(video: &VideoSequence, factor: usize) -> Result<VideoSequence> {
    let frames = video
        .frames()
        .iter()
        .map(|f| area_downsample(f, factor))
        .collect::<Result<Vec<_>>>()?;
    VideoSequence::new(frames, video.fps())
}

/// Partition of a video's frames into consecutive segments of `tau` seconds.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentPlan {
    /// Segment length in seconds; `f64::INFINITY` for one-shot mode.
    pub tau: f64,
    /// Half-open frame ranges, in order.
    pub boundaries: Vec<(usize, usize)>,
}

impl SegmentPlan {
    pub fn len(&self) -> usize {
        self.boundaries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.boundaries.is_empty()
    }

    /// Index of the segment that contains `frame`.
    pub fn segment_of(&self, frame: usize) -> Option<usize> {
        self.boundaries
            .iter()
            .position(|&(start, end)| (start..end).contains(&frame))
    }
}

/// Frames per segment for a given interval, or `None` for an unbounded interval.
pub fn segment_length(tau: f64, fps: f64) -> Result<Option<usize>> {
    if tau == f64::INFINITY {
        return Ok(None);
    }
    if !(tau.is_finite() && tau > 0.0) {
        return Err(Error::invalid(format!(
            "segment interval must be positive or infinite, got {tau}"
        )));
    }
    Ok(Some(((tau * fps).round() as usize).max(1)))
}

pub fn plan_segments(video: &VideoSequence, tau: f64) -> Result<SegmentPlan> {
    plan_segments_for(video.len(), video.fps(), tau)
}

pub fn plan_segments_for(frame_count: usize, fps: f64, tau: f64) -> Result<SegmentPlan> {
    if frame_count == 0 {
        return Err(Error::invalid("cannot segment an empty video"));
    }
    let len = segment_length(tau, fps)?.unwrap_or(frame_count);
    let boundaries = (0..frame_count)
        .step_by(len)
        .map(|start| (start, (start + len).min(frame_count)))
        .collect();
    Ok(SegmentPlan { tau, boundaries })
}
