//! Raw planar RGB interchange and PNG image sequences.
//!
//! A raw video is a file of frame-major planar 8-bit RGB (all R samples of a
//! frame, then G, then B) plus a sidecar `<file>.hdr` holding `key=value`
//! lines for `width`, `height`, `fps` and `frames`.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::frame::{Frame, VideoSequence, CHANNELS};

#[derive(Debug, Clone, PartialEq)]
pub struct RawVideoHeader {
    pub width: usize,
    pub height: usize,
    pub fps: f64,
    pub frames: usize,
}

impl RawVideoHeader {
    pub fn to_text(&self) -> String {
        format!(
            "format=rgb-planar-8\nwidth={}\nheight={}\nfps={}\nframes={}\n",
            self.width, self.height, self.fps, self.frames
        )
    }

    pub fn parse(text: &str) -> Result<Self> {
        let map = parse_key_values(text);
        let get = |key: &str| {
            map.get(key)
                .ok_or_else(|| Error::invalid(format!("raw header missing `{key}`")))
        };
        let num = |key: &str| -> Result<usize> {
            get(key)?
                .parse()
                .map_err(|_| Error::invalid(format!("raw header `{key}` is not an integer")))
        };
        if let Some(fmt) = map.get("format") {
            if fmt != "rgb-planar-8" {
                return Err(Error::invalid(format!("unsupported raw format `{fmt}`")));
            }
        }
        Ok(RawVideoHeader {
            width: num("width")?,
            height: num("height")?,
            frames: num("frames")?,
            fps: get("fps")?
                .parse()
                .map_err(|_| Error::invalid("raw header `fps` is not a number"))?,
        })
    }
}

/// Parses `key=value` lines; blank lines and `#` comments are skipped.
pub(crate) fn parse_key_values(text: &str) -> BTreeMap<String, String> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .filter_map(|l| l.split_once('='))
        .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
        .collect()
}

fn sidecar(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".hdr");
    PathBuf::from(s)
}

fn planar_bytes(frame: &Frame) -> Vec<u8> {
    let rgb = frame.to_rgb8();
    (0..CHANNELS)
        .flat_map(|c| rgb.iter().skip(c).step_by(CHANNELS).copied().collect::<Vec<_>>())
        .collect()
}

pub(crate) fn read_raw_planar(bytes: &[u8], height: usize, width: usize) -> Result<Vec<Frame>> {
    let plane = height * width;
    let frame_len = plane * CHANNELS;
    if frame_len == 0 || bytes.len() % frame_len != 0 {
        return Err(Error::invalid(format!(
            "raw data of {} bytes is not a whole number of {height}x{width} frames",
            bytes.len()
        )));
    }
    bytes
        .chunks_exact(frame_len)
        .map(|chunk| {
            let mut rgb = vec![0u8; frame_len];
            for c in 0..CHANNELS {
                for (i, &b) in chunk[c * plane..(c + 1) * plane].iter().enumerate() {
                    rgb[i * CHANNELS + c] = b;
                }
            }
            Frame::from_rgb8(height, width, &rgb)
        })
        .collect()
}

pub fn write_raw_video(path: &Path, video: &VideoSequence) -> Result<()> {
    let (height, width) = video
        .dims()
        .ok_or_else(|| Error::invalid("cannot write an empty video"))?;
    let bytes: Vec<u8> = video.frames().iter().flat_map(planar_bytes).collect();
    fs::write(path, bytes)?;
    let header = RawVideoHeader { width, height, fps: video.fps(), frames: video.len() };
    fs::write(sidecar(path), header.to_text())?;
    Ok(())
}

pub fn read_raw_video(path: &Path) -> Result<VideoSequence> {
    let header = RawVideoHeader::parse(&fs::read_to_string(sidecar(path))?)?;
    let frames = read_raw_planar(&fs::read(path)?, header.height, header.width)?;
    if frames.len() != header.frames {
        return Err(Error::invalid(format!(
            "raw file holds {} frames, header says {}",
            frames.len(),
            header.frames
        )));
    }
    VideoSequence::new(frames, header.fps)
}

/// Writes `frame_00000.png`, `frame_00001.png`, ... into `dir`.
pub fn write_png_sequence(dir: &Path, video: &VideoSequence) -> Result<()> {
    fs::create_dir_all(dir)?;
    for (i, frame) in video.frames().iter().enumerate() {
        let img = image::RgbImage::from_raw(
            frame.width() as u32,
            frame.height() as u32,
            frame.to_rgb8(),
        )
        .expect("buffer length matches frame dimensions");
        img.save(dir.join(format!("frame_{i:05}.png")))?;
    }
    Ok(())
}

/// Reads every `.png` in `dir` in lexicographic filename order.
pub fn read_png_sequence(dir: &Path, fps: f64) -> Result<VideoSequence> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e.eq_ignore_ascii_case("png")))
        .collect();
    paths.sort();
    let frames = paths
        .iter()
        .map(|p| {
            let img = image::open(p)?.to_rgb8();
            Frame::from_rgb8(img.height() as usize, img.width() as usize, img.as_raw())
        })
        .collect::<Result<Vec<_>>>()?;
    VideoSequence::new(frames, fps)
}

/// Loads a raw video file (with sidecar), a directory holding `video.rgbp`,
/// or a directory of PNG frames played at `fps`.
pub fn load_video(path: &Path, fps: f64) -> Result<VideoSequence> {
    if path.is_file() {
        return read_raw_video(path);
    }
    let raw = path.join("video.rgbp");
    if raw.is_file() {
        return read_raw_video(&raw);
    }
    let video = read_png_sequence(path, fps)?;
    if video.is_empty() {
        return Err(Error::invalid(format!("no frames found in {}", path.display())));
    }
    Ok(video)
}
