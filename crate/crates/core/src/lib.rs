//! Content-adaptive super-resolution video compression.
//!
//! Video is encoded as a low-resolution content stream produced by a
//! conventional codec plus a model stream carrying an initial SR network and
//! sparse per-segment parameter updates. Decoding replays the updates and
//! upsamples every decoded frame with the model of its segment.

mod bits;
pub mod adaptation;
pub mod error;
pub mod frame;
pub mod metrics;
pub mod model_stream;
pub mod pipeline;
pub mod sr_model;
pub mod sweep;
pub mod synth;
pub mod video_io;

pub use error::{Error, Result};
pub use frame::{Frame, VideoSequence};
