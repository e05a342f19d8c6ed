//! End-to-end encode/decode of a video into a content stream plus a model stream.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::adaptation::{adapt_segment, train_full, SegmentData, SegmentTrainReport, TrainingConfig};
use crate::error::{Error, Result};
use crate::frame::{Frame, VideoSequence};
use crate::model_stream::{decode_stream, encode_stream, tau_to_ms, ModelStreamFile, StreamHeader};
use crate::sr_model::{ModelConfig, Network, ParameterVector};
use crate::video_io::raw::parse_key_values;
use crate::video_io::{codec_by_id, downsample_video, plan_segments, ContentStream, LosslessCodec};

pub const CONTENT_FILE: &str = "content.bin";
pub const MODEL_FILE: &str = "model.srvc";
pub const MANIFEST_FILE: &str = "manifest.txt";
const CHECKPOINT_FILE: &str = "checkpoint.srvc";
const CHECKPOINT_TAG_FILE: &str = "checkpoint.txt";
const CHECKPOINT_VERSION: u32 = 1;

/// Everything that determines an encode besides the source frames.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodeJob {
    pub model: ModelConfig,
    /// Update interval in seconds; `f64::INFINITY` selects one-shot mode.
    pub tau: f64,
    /// Per-segment training; `eta` and `seed` live here.
    pub training: TrainingConfig,
    /// Full-parameter epochs over the whole video that produce the initial model.
    pub initial_epochs: usize,
    pub initial_learning_rate: f64,
    pub codec_id: String,
    pub quality: u32,
    /// Seed for the initial model's weights.
    pub init_seed: u64,
}

impl Default for EncodeJob {
    fn default() -> Self {
        EncodeJob {
            model: ModelConfig::default(),
            tau: 10.0,
            training: TrainingConfig::default(),
            initial_epochs: 16,
            initial_learning_rate: TrainingConfig::default().learning_rate,
            codec_id: LosslessCodec::ID.to_string(),
            quality: 0,
            init_seed: 0,
        }
    }
}

impl EncodeJob {
    pub fn is_one_shot(&self) -> bool {
        self.tau == f64::INFINITY
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.training.validate()?;
        tau_to_ms(self.tau)?;
        if !(self.initial_learning_rate.is_finite() && self.initial_learning_rate > 0.0) {
            return Err(Error::invalid("initial learning rate must be positive"));
        }
        Ok(())
    }

    fn initial_training(&self) -> TrainingConfig {
        TrainingConfig { learning_rate: self.initial_learning_rate, ..self.training.clone() }
    }
}

/// Side information that binds the two streams together.
#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    pub fps: f64,
    pub frames: usize,
    pub hr_width: usize,
    pub hr_height: usize,
    pub lr_width: usize,
    pub lr_height: usize,
    pub scale: usize,
    pub tau_ms: u32,
    pub codec_id: String,
    pub quality: u32,
    /// Half-open frame ranges; segment `t` is decoded with the state after update `t + 1`.
    pub segments: Vec<(usize, usize)>,
}

impl Manifest {
    pub fn to_text(&self) -> String {
        let segments: Vec<String> = self.segments.iter().map(|(a, b)| format!("{a}-{b}")).collect();
        let mut s = String::new();
        let _ = writeln!(s, "fps={}", self.fps);
        let _ = writeln!(s, "frames={}", self.frames);
        let _ = writeln!(s, "hr_w={}", self.hr_width);
        let _ = writeln!(s, "hr_h={}", self.hr_height);
        let _ = writeln!(s, "lr_w={}", self.lr_width);
        let _ = writeln!(s, "lr_h={}", self.lr_height);
        let _ = writeln!(s, "k={}", self.scale);
        let _ = writeln!(s, "tau_ms={}", self.tau_ms);
        let _ = writeln!(s, "codec_id={}", self.codec_id);
        let _ = writeln!(s, "quality={}", self.quality);
        let _ = writeln!(s, "segments={}", segments.join(","));
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        let map = parse_key_values(text);
        let get = |key: &str| {
            map.get(key)
                .ok_or_else(|| Error::Format(format!("manifest is missing `{key}`")))
        };
        fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
            v.parse()
                .map_err(|_| Error::Format(format!("manifest `{key}` has invalid value `{v}`")))
        }
        let segments = get("segments")?
            .split(',')
            .map(|r| {
                let (a, b) = r
                    .split_once('-')
                    .ok_or_else(|| Error::Format(format!("bad segment range `{r}`")))?;
                Ok((num("segments", a)?, num("segments", b)?))
            })
            .collect::<Result<Vec<(usize, usize)>>>()?;
        let manifest = Manifest {
            fps: num("fps", get("fps")?)?,
            frames: num("frames", get("frames")?)?,
            hr_width: num("hr_w", get("hr_w")?)?,
            hr_height: num("hr_h", get("hr_h")?)?,
            lr_width: num("lr_w", get("lr_w")?)?,
            lr_height: num("lr_h", get("lr_h")?)?,
            scale: num("k", get("k")?)?,
            tau_ms: num("tau_ms", get("tau_ms")?)?,
            codec_id: get("codec_id")?.clone(),
            quality: num("quality", get("quality")?)?,
            segments,
        };
        manifest.validate()?;
        Ok(manifest)
    }

    fn validate(&self) -> Result<()> {
        if self.frames == 0 || !(self.fps.is_finite() && self.fps > 0.0) {
            return Err(Error::Format("manifest declares an empty video".into()));
        }
        if self.scale == 0
            || self.lr_height * self.scale < self.hr_height
            || self.lr_width * self.scale < self.hr_width
        {
            return Err(Error::Format("manifest dimensions are inconsistent with k".into()));
        }
        let mut next = 0;
        for &(a, b) in &self.segments {
            if a != next || b <= a {
                return Err(Error::Format("manifest segments do not tile the video".into()));
            }
            next = b;
        }
        if next != self.frames {
            return Err(Error::Format("manifest segments do not cover every frame".into()));
        }
        Ok(())
    }
}

/// The two bitstreams plus their manifest.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedVideo {
    pub content: ContentStream,
    /// Serialized model stream.
    pub model: Vec<u8>,
    pub manifest: Manifest,
}

impl EncodedVideo {
    pub fn content_bits(&self) -> u64 {
        self.content.bits()
    }

    pub fn model_bits(&self) -> u64 {
        8 * self.model.len() as u64
    }

    /// Combined bits per output pixel.
    pub fn bits_per_pixel(&self) -> Result<f64> {
        bits_per_pixel(
            self.content_bits(),
            self.model_bits(),
            self.manifest.frames,
            self.manifest.hr_height,
            self.manifest.hr_width,
        )
    }

    /// Writes the three files into `dir`, replacing any previous contents atomically.
    pub fn save(&self, dir: &Path) -> Result<()> {
        let staging = sibling(dir, "partial");
        if staging.exists() {
            fs::remove_dir_all(&staging)?;
        }
        fs::create_dir_all(&staging)?;
        fs::write(staging.join(CONTENT_FILE), &self.content.payload)?;
        fs::write(staging.join(MODEL_FILE), &self.model)?;
        fs::write(staging.join(MANIFEST_FILE), self.manifest.to_text())?;
        if dir.exists() {
            let old = sibling(dir, "old");
            if old.exists() {
                fs::remove_dir_all(&old)?;
            }
            fs::rename(dir, &old)?;
            fs::rename(&staging, dir)?;
            fs::remove_dir_all(&old)?;
        } else {
            fs::rename(&staging, dir)?;
        }
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let manifest = Manifest::parse(&fs::read_to_string(dir.join(MANIFEST_FILE))?)?;
        let payload = fs::read(dir.join(CONTENT_FILE))?;
        let model = fs::read(dir.join(MODEL_FILE))?;
        let content = ContentStream {
            codec_id: manifest.codec_id.clone(),
            quality: manifest.quality,
            payload,
            lr_height: manifest.lr_height,
            lr_width: manifest.lr_width,
            frame_count: manifest.frames,
            fps: manifest.fps,
        };
        Ok(EncodedVideo { content, model, manifest })
    }
}

fn sibling(dir: &Path, suffix: &str) -> PathBuf {
    let name = dir.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    dir.with_file_name(format!(".{name}.{suffix}"))
}

/// `(content_bits + model_bits) / (frames · height · width)`.
pub fn bits_per_pixel(
    content_bits: u64,
    model_bits: u64,
    frames: usize,
    height: usize,
    width: usize,
) -> Result<f64> {
    let pixels = frames * height * width;
    if pixels == 0 {
        return Err(Error::invalid("bits per pixel needs a non-empty video"));
    }
    Ok((content_bits + model_bits) as f64 / pixels as f64)
}

/// Encoder-side by-products that the bitstreams do not carry.
#[derive(Debug, Clone)]
pub struct EncodeOutcome {
    pub encoded: EncodedVideo,
    /// Transmitted parameter states: the initial model, then one per update.
    pub states: Vec<ParameterVector>,
    pub reports: Vec<SegmentTrainReport>,
}

/// Options that change how an encode runs but not its result.
#[derive(Debug, Clone, Default)]
pub struct EncodeOptions<'a> {
    /// Reuse this initial model instead of training one.
    pub initial_model: Option<&'a ParameterVector>,
    /// Directory for a resumable checkpoint written after every segment.
    pub checkpoint_dir: Option<&'a Path>,
}

pub fn encode(source: &VideoSequence, job: &EncodeJob) -> Result<EncodedVideo> {
    Ok(encode_with(source, job, &EncodeOptions::default())?.encoded)
}

/// Trains the initial model: He initialization, `initial_epochs` full passes over
/// the whole video, then rounding to half precision as transmitted.
pub fn train_initial_model(source: &VideoSequence, job: &EncodeJob) -> Result<ParameterVector> {
    job.validate()?;
    let (lr, _) = compress(source, job)?;
    let hr = pad_targets(source, &lr, job.model.scale)?;
    fit_initial(lr.frames(), &hr, job)
}

fn fit_initial(lr: &[Frame], hr: &[Frame], job: &EncodeJob) -> Result<ParameterVector> {
    let mut params = ParameterVector::initialize(&job.model, job.init_seed);
    train_full(&mut params, &job.model, SegmentData::new(lr, hr)?, job.initial_epochs, &job.initial_training())?;
    Ok(params.to_half_precision())
}

fn compress(source: &VideoSequence, job: &EncodeJob) -> Result<(VideoSequence, ContentStream)> {
    let codec = codec_by_id(&job.codec_id)?;
    let lr = downsample_video(source, job.model.scale)?;
    let content = codec.encode(&lr, job.quality)?;
    let decoded = codec.decode(&content)?;
    if decoded.len() != lr.len() || decoded.dims() != lr.dims() {
        return Err(Error::ContentDecode(format!(
            "codec `{}` returned {} frames of {:?}, expected {} of {:?}",
            job.codec_id,
            decoded.len(),
            decoded.dims(),
            lr.len(),
            lr.dims()
        )));
    }
    Ok((decoded, content))
}

fn pad_targets(source: &VideoSequence, lr: &VideoSequence, scale: usize) -> Result<Vec<Frame>> {
    let (lh, lw) = lr.dims().unwrap_or((0, 0));
    source.frames().iter().map(|f| f.pad_edge(lh * scale, lw * scale)).collect()
}

/// Full encode returning the transmitted states and per-segment training reports.
pub fn encode_with(source: &VideoSequence, job: &EncodeJob, options: &EncodeOptions<'_>) -> Result<EncodeOutcome> {
    job.validate()?;
    let (hr_h, hr_w) = source
        .dims()
        .ok_or_else(|| Error::invalid("source video has no frames"))?;
    let (lr, content) = compress(source, job)?;
    let hr = pad_targets(source, &lr, job.model.scale)?;
    let lr = lr.into_frames();
    let plan = plan_segments(source, job.tau)?;

    let header = StreamHeader::new(&job.model, job.tau, job.init_seed)?;
    let fingerprint = job_fingerprint(source, job);
    let resumed = match options.checkpoint_dir {
        Some(dir) => load_checkpoint(dir, &fingerprint)?,
        None => None,
    };
    let mut stream = match resumed {
        Some(stream) => stream,
        None => {
            let initial = match options.initial_model {
                Some(p) => {
                    p.check(&job.model)?;
                    p.to_half_precision()
                }
                None => fit_initial(&lr, &hr, job)?,
            };
            let stream = ModelStreamFile::new(header.clone(), &initial);
            if let Some(dir) = options.checkpoint_dir {
                save_checkpoint(dir, &fingerprint, &stream)?;
            }
            stream
        }
    };
    if stream.header != header {
        return Err(Error::Format("checkpoint header does not match the job".into()));
    }

    let mut states = stream.replay()?;
    let mut reports = Vec::new();
    if !job.is_one_shot() {
        for (t, &(start, end)) in plan.boundaries.iter().enumerate().skip(stream.updates.len()) {
            let data = SegmentData::new(&lr[start..end], &hr[start..end])?;
            let previous = states.last().expect("states start with the initial model");
            let outcome = adapt_segment(previous, &job.model, data, &job.training, t as u32 + 1)?;
            stream.updates.push(outcome.update);
            states.push(outcome.params);
            reports.push(outcome.report);
            if let Some(dir) = options.checkpoint_dir {
                save_checkpoint(dir, &fingerprint, &stream)?;
            }
        }
    }

    let lr_dims = lr[0].dims();
    let manifest = Manifest {
        fps: source.fps(),
        frames: source.len(),
        hr_width: hr_w,
        hr_height: hr_h,
        lr_width: lr_dims.1,
        lr_height: lr_dims.0,
        scale: job.model.scale,
        tau_ms: header.tau_ms,
        codec_id: job.codec_id.clone(),
        quality: job.quality,
        segments: plan.boundaries,
    };
    let encoded = EncodedVideo { content, model: encode_stream(&stream)?, manifest };
    if let Some(dir) = options.checkpoint_dir {
        clear_checkpoint(dir)?;
    }
    Ok(EncodeOutcome { encoded, states, reports })
}

/// Parses the model stream and returns the parameter state used for each segment.
pub fn segment_states(encoded: &EncodedVideo) -> Result<Vec<ParameterVector>> {
    let stream = decode_stream(&encoded.model)?;
    let manifest = &encoded.manifest;
    if usize::from(stream.header.scale) != manifest.scale {
        return Err(Error::Format(format!(
            "model stream scale {} disagrees with manifest k={}",
            stream.header.scale, manifest.scale
        )));
    }
    let segments = manifest.segments.len();
    let states = stream.replay()?;
    if stream.updates.is_empty() {
        return Ok(vec![states[0].clone(); segments]);
    }
    if stream.updates.len() != segments {
        return Err(Error::Format(format!(
            "model stream has {} updates for {segments} segments",
            stream.updates.len()
        )));
    }
    Ok(states.into_iter().skip(1).collect())
}

pub fn decode(encoded: &EncodedVideo) -> Result<VideoSequence> {
    decode_range(encoded, 0, encoded.manifest.frames)
}

/// Decodes frames `start..end` only.
pub fn decode_range(encoded: &EncodedVideo, start: usize, end: usize) -> Result<VideoSequence> {
    let manifest = &encoded.manifest;
    if start >= end || end > manifest.frames {
        return Err(Error::invalid(format!(
            "frame range {start}:{end} is outside 0:{}",
            manifest.frames
        )));
    }
    let states = segment_states(encoded)?;
    let config = decode_stream(&encoded.model)?.header.model_config();
    let lr = codec_by_id(&manifest.codec_id)?.decode(&encoded.content)?;
    if lr.len() != manifest.frames || lr.dims() != Some((manifest.lr_height, manifest.lr_width)) {
        return Err(Error::ContentDecode(
            "content stream does not match the manifest's frame count or dimensions".into(),
        ));
    }
    let networks = states
        .iter()
        .map(|p| Network::new(&config, p))
        .collect::<Result<Vec<_>>>()?;
    let segment_of = |i: usize| {
        manifest
            .segments
            .iter()
            .position(|&(a, b)| (a..b).contains(&i))
            .expect("manifest segments tile the video")
    };
    let frames = (start..end)
        .into_par_iter()
        .map(|i| {
            let up = networks[segment_of(i)].upscale(&lr.frames()[i])?;
            up.crop(0, 0, manifest.hr_height, manifest.hr_width)
        })
        .collect::<Result<Vec<_>>>()?;
    VideoSequence::new(frames, manifest.fps)
}

fn job_fingerprint(source: &VideoSequence, job: &EncodeJob) -> String {
    let mut hasher = Sha256::new();
    hasher.update(format!("{CHECKPOINT_VERSION} {job:?} {}", source.fps()).as_bytes());
    for frame in source.frames() {
        hasher.update((frame.height() as u64).to_le_bytes());
        hasher.update((frame.width() as u64).to_le_bytes());
        for v in frame.data() {
            hasher.update(v.to_le_bytes());
        }
    }
    hasher
        .finalize()
        .iter()
        .fold(String::new(), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        })
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

fn save_checkpoint(dir: &Path, fingerprint: &str, stream: &ModelStreamFile) -> Result<()> {
    fs::create_dir_all(dir)?;
    write_atomic(&dir.join(CHECKPOINT_FILE), &encode_stream(stream)?)?;
    let tag = format!("version={CHECKPOINT_VERSION}\njob={fingerprint}\nsegments_done={}\n", stream.updates.len());
    write_atomic(&dir.join(CHECKPOINT_TAG_FILE), tag.as_bytes())
}

/// Returns the saved partial stream if it belongs to this exact job.
fn load_checkpoint(dir: &Path, fingerprint: &str) -> Result<Option<ModelStreamFile>> {
    let (tag_path, data_path) = (dir.join(CHECKPOINT_TAG_FILE), dir.join(CHECKPOINT_FILE));
    if !tag_path.exists() || !data_path.exists() {
        return Ok(None);
    }
    let tag = parse_key_values(&fs::read_to_string(tag_path)?);
    let matches = tag.get("version").map(String::as_str) == Some(&CHECKPOINT_VERSION.to_string())
        && tag.get("job").map(String::as_str) == Some(fingerprint);
    if !matches {
        return Ok(None);
    }
    Ok(Some(decode_stream(&fs::read(data_path)?)?))
}

fn clear_checkpoint(dir: &Path) -> Result<()> {
    for name in [CHECKPOINT_FILE, CHECKPOINT_TAG_FILE] {
        let path = dir.join(name);
        if path.exists() {
            fs::remove_file(path)?;
        }
    }
    Ok(())
}
