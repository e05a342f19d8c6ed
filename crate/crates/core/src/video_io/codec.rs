//! Content-stream codecs.
//!
//! Two deterministic in-process codecs ship for testing: a lossless one that
//! stores raw `f32` samples and a uniform quantizer. Real codecs run as an
//! external subprocess driven by command templates.

use std::fs;
use std::process::Command;

use crate::bits::{BitReader, BitWriter};
use crate::error::{Error, Result};
use crate::frame::{Frame, VideoSequence, CHANNELS};

use super::raw::{read_raw_planar, write_raw_video};

/// Environment variable naming the external encoder/decoder binary.
pub const ENCODER_BIN_ENV: &str = "SRVC_ENCODER";

#[derive(Debug, Clone, PartialEq)]
pub struct ContentStream {
    pub codec_id: String,
    pub quality: u32,
    pub payload: Vec<u8>,
    pub lr_height: usize,
    pub lr_width: usize,
    pub frame_count: usize,
    pub fps: f64,
}

impl ContentStream {
    pub fn byte_count(&self) -> usize {
        self.payload.len()
    }

    pub fn bits(&self) -> u64 {
        8 * self.payload.len() as u64
    }

    /// Average content bitrate in bits per second.
    pub fn bitrate(&self) -> f64 {
        8.0 * self.payload.len() as f64 * self.fps / self.frame_count as f64
    }
}

pub trait ContentCodec: Send + Sync {
    fn id(&self) -> &str;
    fn encode(&self, video: &VideoSequence, quality: u32) -> Result<ContentStream>;
    fn decode(&self, stream: &ContentStream) -> Result<VideoSequence>;
}

/// Looks up one of the built-in codecs. `external` uses the default ffmpeg templates.
pub fn codec_by_id(id: &str) -> Result<Box<dyn ContentCodec>> {
    match id {
        LosslessCodec::ID => Ok(Box::new(LosslessCodec)),
        QuantizingCodec::ID => Ok(Box::new(QuantizingCodec)),
        ExternalCodec::ID => Ok(Box::new(ExternalCodec::default())),
        other => Err(Error::CodecUnavailable {
            codec: other.to_string(),
            diagnostics: "no such codec registered".into(),
        }),
    }
}

fn check_input(video: &VideoSequence) -> Result<(usize, usize)> {
    video
        .dims()
        .ok_or_else(|| Error::invalid("cannot encode an empty video"))
}

fn stream_for(id: &str, quality: u32, video: &VideoSequence, payload: Vec<u8>) -> ContentStream {
    let (h, w) = video.dims().unwrap_or((0, 0));
    ContentStream {
        codec_id: id.to_string(),
        quality,
        payload,
        lr_height: h,
        lr_width: w,
        frame_count: video.len(),
        fps: video.fps(),
    }
}

fn check_codec(stream: &ContentStream, id: &str) -> Result<()> {
    if stream.codec_id != id {
        return Err(Error::ContentDecode(format!(
            "stream codec `{}` given to `{id}` decoder",
            stream.codec_id
        )));
    }
    if stream.lr_height == 0 || stream.lr_width == 0 || stream.frame_count == 0 {
        return Err(Error::ContentDecode("stream geometry is empty".into()));
    }
    Ok(())
}

/// Stores every sample as a little-endian `f32`; decodes bit-exactly.
#[derive(Debug, Clone, Copy, Default)]
pub struct LosslessCodec;

impl LosslessCodec {
    pub const ID: &'static str = "lossless";
}

impl ContentCodec for LosslessCodec {
    fn id(&self) -> &str {
        Self::ID
    }

    fn encode(&self, video: &VideoSequence, quality: u32) -> Result<ContentStream> {
        check_input(video)?;
        let payload = video
            .frames()
            .iter()
            .flat_map(|f| f.data().iter().flat_map(|v| v.to_le_bytes()))
            .collect();
        Ok(stream_for(Self::ID, quality, video, payload))
    }

    fn decode(&self, stream: &ContentStream) -> Result<VideoSequence> {
        check_codec(stream, Self::ID)?;
        let samples = stream.lr_height * stream.lr_width * CHANNELS;
        if stream.payload.len() != 4 * samples * stream.frame_count {
            return Err(Error::ContentDecode(format!(
                "lossless payload has {} bytes, expected {}",
                stream.payload.len(),
                4 * samples * stream.frame_count
            )));
        }
        let frames = stream
            .payload
            .chunks_exact(4 * samples)
            .map(|chunk| {
                let data = chunk
                    .chunks_exact(4)
                    .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
                    .collect();
                Frame::from_data(stream.lr_height, stream.lr_width, data)
                    .map_err(|e| Error::ContentDecode(e.to_string()))
            })
            .collect::<Result<Vec<_>>>()?;
        VideoSequence::new(frames, stream.fps)
    }
}

/// Uniform scalar quantizer with `quality` steps over [0, 1].
///
/// Each sample maps to the code `round(v * quality)`, which is bit-packed at
/// `ceil(log2(quality + 1))` bits, so the payload size tracks the setting.
#[derive(Debug, Clone, Copy, Default)]
pub struct QuantizingCodec;

impl QuantizingCodec {
    pub const ID: &'static str = "quant";

    pub fn code_bits(levels: u32) -> u32 {
        32 - levels.leading_zeros()
    }

    pub fn quantize(v: f32, levels: u32) -> u32 {
        (v.clamp(0.0, 1.0) * levels as f32).round() as u32
    }
}

impl ContentCodec for QuantizingCodec {
    fn id(&self) -> &str {
        Self::ID
    }

    fn encode(&self, video: &VideoSequence, quality: u32) -> Result<ContentStream> {
        check_input(video)?;
        if quality == 0 || quality > 65535 {
            return Err(Error::invalid(format!(
                "quantizer levels must be in 1..=65535, got {quality}"
            )));
        }
        let width = Self::code_bits(quality);
        let mut w = BitWriter::new();
        for frame in video.frames() {
            for &v in frame.data() {
                w.write(Self::quantize(v, quality), width);
            }
        }
        Ok(stream_for(Self::ID, quality, video, w.finish()))
    }

    fn decode(&self, stream: &ContentStream) -> Result<VideoSequence> {
        check_codec(stream, Self::ID)?;
        let levels = stream.quality;
        if levels == 0 {
            return Err(Error::ContentDecode("quantizer levels are zero".into()));
        }
        let width = Self::code_bits(levels);
        let samples = stream.lr_height * stream.lr_width * CHANNELS;
        let mut r = BitReader::new(&stream.payload);
        let mut frames = Vec::with_capacity(stream.frame_count);
        for _ in 0..stream.frame_count {
            let mut data = Vec::with_capacity(samples);
            for _ in 0..samples {
                let code = r
                    .read(width)
                    .ok_or_else(|| Error::ContentDecode("quantized payload truncated".into()))?;
                if code > levels {
                    return Err(Error::ContentDecode(format!("code {code} exceeds {levels}")));
                }
                data.push(code as f32 / levels as f32);
            }
            frames.push(Frame::from_data(stream.lr_height, stream.lr_width, data)?);
        }
        VideoSequence::new(frames, stream.fps)
    }
}

/// Runs an external encoder and decoder as subprocesses.
///
/// Templates are whitespace-separated argument lists. The placeholders
/// `{bin}`, `{input}`, `{output}`, `{width}`, `{height}`, `{fps}`,
/// `{frames}` and `{quality}` are substituted per invocation. Frames are
/// exchanged as planar 8-bit RGB with a `.hdr` sidecar (see [`write_raw_video`]).
#[derive(Debug, Clone)]
pub struct ExternalCodec {
    pub binary: String,
    pub encode_template: String,
    pub decode_template: String,
}

impl ExternalCodec {
    pub const ID: &'static str = "external";

    /// ffmpeg reads planar input as `gbrp`; `shuffleplanes` reorders R,G,B planes to G,B,R and back.
    pub const DEFAULT_ENCODE: &'static str = "{bin} -y -loglevel error -f rawvideo -pix_fmt gbrp \
        -s {width}x{height} -r {fps} -i {input} -vf shuffleplanes=1:2:0 -c:v libx265 \
        -preset slow -crf {quality} -f matroska {output}";
    pub const DEFAULT_DECODE: &'static str = "{bin} -y -loglevel error -i {input} \
        -vf shuffleplanes=2:0:1 -f rawvideo -pix_fmt gbrp {output}";

    pub fn new(binary: impl Into<String>, encode: impl Into<String>, decode: impl Into<String>) -> Self {
        ExternalCodec {
            binary: binary.into(),
            encode_template: encode.into(),
            decode_template: decode.into(),
        }
    }

    fn run(&self, template: &str, vars: &[(&str, String)]) -> Result<()> {
        let mut args = template.split_whitespace().map(|tok| {
            let mut s = tok.replace("{bin}", &self.binary);
            for (k, v) in vars {
                s = s.replace(&format!("{{{k}}}"), v);
            }
            s
        });
        let program = args.next().ok_or_else(|| Error::CodecUnavailable {
            codec: Self::ID.into(),
            diagnostics: "empty command template".into(),
        })?;
        let output = Command::new(&program)
            .args(args)
            .output()
            .map_err(|e| Error::CodecUnavailable {
                codec: Self::ID.into(),
                diagnostics: format!("failed to spawn `{program}`: {e}"),
            })?;
        if !output.status.success() {
            return Err(Error::CodecUnavailable {
                codec: Self::ID.into(),
                diagnostics: format!(
                    "`{program}` exited with {}: {}",
                    output.status,
                    String::from_utf8_lossy(&output.stderr).trim()
                ),
            });
        }
        Ok(())
    }
}

impl Default for ExternalCodec {
    fn default() -> Self {
        let binary = std::env::var(ENCODER_BIN_ENV).unwrap_or_else(|_| "ffmpeg".into());
        ExternalCodec::new(binary, Self::DEFAULT_ENCODE, Self::DEFAULT_DECODE)
    }
}

impl ContentCodec for ExternalCodec {
    fn id(&self) -> &str {
        Self::ID
    }

    fn encode(&self, video: &VideoSequence, quality: u32) -> Result<ContentStream> {
        let (h, w) = check_input(video)?;
        let dir = tempfile::tempdir()?;
        let input = dir.path().join("input.rgbp");
        let output = dir.path().join("output.bin");
        write_raw_video(&input, video)?;
        self.run(
            &self.encode_template,
            &[
                ("input", input.display().to_string()),
                ("output", output.display().to_string()),
                ("width", w.to_string()),
                ("height", h.to_string()),
                ("fps", video.fps().to_string()),
                ("frames", video.len().to_string()),
                ("quality", quality.to_string()),
            ],
        )?;
        let payload = fs::read(&output).map_err(|e| Error::CodecUnavailable {
            codec: Self::ID.into(),
            diagnostics: format!("encoder produced no output file: {e}"),
        })?;
        Ok(stream_for(Self::ID, quality, video, payload))
    }

    fn decode(&self, stream: &ContentStream) -> Result<VideoSequence> {
        check_codec(stream, Self::ID)?;
        let dir = tempfile::tempdir()?;
        let input = dir.path().join("input.bin");
        let output = dir.path().join("output.rgbp");
        fs::write(&input, &stream.payload)?;
        self.run(
            &self.decode_template,
            &[
                ("input", input.display().to_string()),
                ("output", output.display().to_string()),
                ("width", stream.lr_width.to_string()),
                ("height", stream.lr_height.to_string()),
                ("fps", stream.fps.to_string()),
                ("frames", stream.frame_count.to_string()),
                ("quality", stream.quality.to_string()),
            ],
        )?;
        let bytes = fs::read(&output)
            .map_err(|e| Error::ContentDecode(format!("decoder produced no output: {e}")))?;
        let frames = read_raw_planar(&bytes, stream.lr_height, stream.lr_width)
            .map_err(|e| Error::ContentDecode(e.to_string()))?;
        if frames.len() != stream.frame_count {
            return Err(Error::ContentDecode(format!(
                "decoder produced {} frames, expected {}",
                frames.len(),
                stream.frame_count
            )));
        }
        VideoSequence::new(frames, stream.fps)
    }
}
