//! Rate-distortion sweeps, per-frame CDF output, plots and inference timing.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io;
use std::time::Instant;

use rayon::prelude::*;

use crate::adaptation::SegmentTrainReport;
use crate::error::{Error, Result};
use crate::frame::{Frame, VideoSequence};
use crate::metrics::{bicubic_video, quality_report, QualityReport};
use crate::pipeline::{
    bits_per_pixel, decode, encode_with, train_initial_model, EncodeJob, EncodeOptions,
};
use crate::sr_model::{ModelConfig, Network, ParameterVector};
use crate::video_io::{codec_by_id, downsample_video};

/// Axes of a sweep. Cells are visited with quality outermost, then F, eta and tau.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepGrid {
    pub qualities: Vec<u32>,
    pub etas: Vec<f64>,
    pub taus: Vec<f64>,
    pub feature_channels: Vec<usize>,
}

impl SweepGrid {
    pub fn validate(&self) -> Result<()> {
        if self.qualities.is_empty()
            || self.etas.is_empty()
            || self.taus.is_empty()
            || self.feature_channels.is_empty()
        {
            return Err(Error::invalid("every sweep axis needs at least one value"));
        }
        Ok(())
    }

    pub fn cells(&self) -> Vec<SweepCell> {
        let mut cells = Vec::new();
        for &quality in &self.qualities {
            for &feature_channels in &self.feature_channels {
                for &eta in &self.etas {
                    for &tau in &self.taus {
                        cells.push(SweepCell { quality, feature_channels, eta, tau });
                    }
                }
            }
        }
        cells
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepCell {
    pub quality: u32,
    pub feature_channels: usize,
    pub eta: f64,
    pub tau: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Srvc,
    OneShot,
    Bicubic,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Srvc, Method::OneShot, Method::Bicubic];

    pub fn name(self) -> &'static str {
        match self {
            Method::Srvc => "srvc",
            Method::OneShot => "one_shot",
            Method::Bicubic => "bicubic",
        }
    }
}

/// One measured point of the rate-distortion plane.
#[derive(Debug, Clone, PartialEq)]
pub struct RdPoint {
    pub method: Method,
    pub cell: SweepCell,
    pub bpp: f64,
    pub psnr_db: f64,
    pub ssim: f64,
    pub content_bits: u64,
    pub model_bits: u64,
    pub per_frame_psnr: Vec<f64>,
    pub per_frame_ssim: Vec<f64>,
    pub error: Option<String>,
}

impl RdPoint {
    fn measured(method: Method, cell: SweepCell, content_bits: u64, model_bits: u64, bpp: f64, q: QualityReport) -> Self {
        RdPoint {
            method,
            cell,
            bpp,
            psnr_db: q.aggregate_psnr,
            ssim: q.mean_ssim,
            content_bits,
            model_bits,
            per_frame_psnr: q.per_frame_psnr,
            per_frame_ssim: q.per_frame_ssim,
            error: None,
        }
    }

    fn failed(method: Method, cell: SweepCell, error: String) -> Self {
        RdPoint {
            method,
            cell,
            bpp: f64::NAN,
            psnr_db: f64::NAN,
            ssim: f64::NAN,
            content_bits: 0,
            model_bits: 0,
            per_frame_psnr: Vec::new(),
            per_frame_ssim: Vec::new(),
            error: Some(error),
        }
    }

    /// Update interval in milliseconds as written to CSV; one-shot rows report `inf`.
    fn tau_ms_text(&self) -> String {
        let tau = if self.method == Method::OneShot { f64::INFINITY } else { self.cell.tau };
        if tau.is_finite() {
            format!("{}", (tau * 1000.0).round() as u64)
        } else {
            "inf".into()
        }
    }
}

struct Shared {
    initial: std::result::Result<ParameterVector, String>,
    one_shot: std::result::Result<RdPoint, String>,
    bicubic: std::result::Result<RdPoint, String>,
}

fn cell_job(base: &EncodeJob, cell: &SweepCell) -> EncodeJob {
    let mut job = base.clone();
    job.quality = cell.quality;
    job.model.feature_channels = cell.feature_channels;
    job.training.eta = cell.eta;
    job.tau = cell.tau;
    job
}

fn measure_encode(
    video: &VideoSequence,
    job: &EncodeJob,
    initial: &ParameterVector,
    method: Method,
    cell: SweepCell,
) -> Result<RdPoint> {
    let options = EncodeOptions { initial_model: Some(initial), checkpoint_dir: None };
    let encoded = encode_with(video, job, &options)?.encoded;
    let decoded = decode(&encoded)?;
    let q = quality_report(video, &decoded)?;
    let bpp = encoded.bits_per_pixel()?;
    Ok(RdPoint::measured(method, cell, encoded.content_bits(), encoded.model_bits(), bpp, q))
}

fn measure_bicubic(video: &VideoSequence, job: &EncodeJob, cell: SweepCell) -> Result<RdPoint> {
    let (h, w) = video.dims().ok_or_else(|| Error::invalid("empty video"))?;
    let codec = codec_by_id(&job.codec_id)?;
    let content = codec.encode(&downsample_video(video, job.model.scale)?, job.quality)?;
    let up = bicubic_video(&codec.decode(&content)?, h, w)?;
    let q = quality_report(video, &up)?;
    let bpp = bits_per_pixel(content.bits(), 0, video.len(), h, w)?;
    Ok(RdPoint::measured(Method::Bicubic, cell, content.bits(), 0, bpp, q))
}

/// Runs SRVC, one-shot and bicubic for every grid cell.
///
/// The initial model depends only on quality and F, so it is trained once per
/// such pair and shared by the SRVC and one-shot rows. Cell failures become
/// rows with an error message. Rows come back in grid order × method order
/// regardless of `workers`.
pub fn run_sweep(video: &VideoSequence, grid: &SweepGrid, base: &EncodeJob, workers: usize) -> Result<Vec<RdPoint>> {
    grid.validate()?;
    base.validate()?;
    if video.is_empty() {
        return Err(Error::invalid("cannot sweep an empty video"));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::invalid(format!("cannot start worker pool: {e}")))?;
    let cells = grid.cells();

    let mut shared_keys: Vec<(u32, usize)> = Vec::new();
    for c in &cells {
        if !shared_keys.contains(&(c.quality, c.feature_channels)) {
            shared_keys.push((c.quality, c.feature_channels));
        }
    }
    // per (quality, F): the initial model plus the one-shot and bicubic rows
    let shared: Vec<Shared> = pool.install(|| {
        shared_keys
            .par_iter()
            .map(|&(quality, feature_channels)| {
                let cell = cells
                    .iter()
                    .find(|c| c.quality == quality && c.feature_channels == feature_channels)
                    .copied()
                    .expect("key comes from the cells");
                let mut job = cell_job(base, &cell);
                job.tau = f64::INFINITY;
                let initial = train_initial_model(video, &job).map_err(|e| e.to_string());
                let one_shot = initial.clone().and_then(|p| {
                    measure_encode(video, &job, &p, Method::OneShot, cell).map_err(|e| e.to_string())
                });
                let bicubic = measure_bicubic(video, &job, cell).map_err(|e| e.to_string());
                Shared { initial, one_shot, bicubic }
            })
            .collect()
    });
    let lookup: BTreeMap<(u32, usize), &Shared> = shared_keys.iter().copied().zip(shared.iter()).collect();

    let srvc: Vec<RdPoint> = pool.install(|| {
        cells
            .par_iter()
            .map(|cell| {
                let job = cell_job(base, cell);
                lookup[&(cell.quality, cell.feature_channels)]
                    .initial
                    .clone()
                    .and_then(|p| measure_encode(video, &job, &p, Method::Srvc, *cell).map_err(|e| e.to_string()))
                    .unwrap_or_else(|e| RdPoint::failed(Method::Srvc, *cell, e))
            })
            .collect()
    });

    let mut rows = Vec::with_capacity(cells.len() * 3);
    for (cell, point) in cells.iter().zip(srvc) {
        let shared = lookup[&(cell.quality, cell.feature_channels)];
        rows.push(point);
        for (method, row) in [(Method::OneShot, &shared.one_shot), (Method::Bicubic, &shared.bicubic)] {
            rows.push(match row {
                Ok(p) => RdPoint { cell: *cell, ..p.clone() },
                Err(e) => RdPoint::failed(method, *cell, e.clone()),
            });
        }
    }
    Ok(rows)
}

pub const RD_COLUMNS: [&str; 11] = [
    "method", "eta", "tau_ms", "quality", "F", "bpp", "psnr_db", "ssim", "content_bits", "model_bits", "error",
];

fn num(v: f64) -> String {
    if v.is_nan() {
        String::new()
    } else {
        format!("{v}")
    }
}

pub fn write_rd_csv(points: &[RdPoint], out: impl io::Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(RD_COLUMNS)?;
    for p in points {
        w.write_record([
            p.method.name().to_string(),
            format!("{}", p.cell.eta),
            p.tau_ms_text(),
            p.cell.quality.to_string(),
            p.cell.feature_channels.to_string(),
            num(p.bpp),
            num(p.psnr_db),
            num(p.ssim),
            p.content_bits.to_string(),
            p.model_bits.to_string(),
            p.error.clone().unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Per-frame quality of every row, for CDF plots.
pub fn write_cdf_csv(points: &[RdPoint], out: impl io::Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["method", "eta", "tau_ms", "quality", "F", "frame_index", "psnr_db", "ssim"])?;
    for p in points {
        for (i, (psnr, ssim)) in p.per_frame_psnr.iter().zip(&p.per_frame_ssim).enumerate() {
            w.write_record([
                p.method.name().to_string(),
                format!("{}", p.cell.eta),
                p.tau_ms_text(),
                p.cell.quality.to_string(),
                p.cell.feature_channels.to_string(),
                i.to_string(),
                num(*psnr),
                num(*ssim),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Per-frame PSNR and SSIM of one comparison.
pub fn write_quality_csv(report: &QualityReport, out: impl io::Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["frame_index", "psnr_db", "ssim"])?;
    for (i, (psnr, ssim)) in report.per_frame_psnr.iter().zip(&report.per_frame_ssim).enumerate() {
        w.write_record([i.to_string(), num(*psnr), num(*ssim)])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_reports_csv(reports: &[SegmentTrainReport], out: impl io::Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["segment_index", "loss_before", "loss_after", "selected_count", "epochs_run"])?;
    for r in reports {
        w.write_record([
            r.segment_index.to_string(),
            format!("{}", r.loss_before),
            format!("{}", r.loss_after),
            r.selected_count.to_string(),
            r.epochs_run.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Renders PSNR against bpp, one series per method, from an RD CSV.
pub fn render_rd_svg(csv_text: &str) -> Result<String> {
    let mut reader = csv::Reader::from_reader(csv_text.as_bytes());
    let headers = reader.headers()?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::invalid(format!("CSV has no `{name}` column")))
    };
    let (mcol, bcol, pcol) = (col("method")?, col("bpp")?, col("psnr_db")?);
    let mut series: BTreeMap<String, Vec<(f64, f64)>> = BTreeMap::new();
    for record in reader.records() {
        let record = record?;
        let (Ok(bpp), Ok(psnr)) = (record[bcol].parse::<f64>(), record[pcol].parse::<f64>()) else {
            continue;
        };
        series.entry(record[mcol].to_string()).or_default().push((bpp, psnr));
    }
    let all: Vec<(f64, f64)> = series.values().flatten().copied().collect();
    let span = |f: fn(&(f64, f64)) -> f64| {
        let lo = all.iter().map(f).fold(f64::INFINITY, f64::min);
        let hi = all.iter().map(f).fold(f64::NEG_INFINITY, f64::max);
        if all.is_empty() {
            (0.0, 1.0)
        } else if hi > lo {
            (lo, hi)
        } else {
            (lo - 0.5, hi + 0.5)
        }
    };
    let ((x0, x1), (y0, y1)) = (span(|p| p.0), span(|p| p.1));
    let (w, h, m) = (640.0, 420.0, 50.0);
    let px = |x: f64| m + (x - x0) / (x1 - x0) * (w - 2.0 * m);
    let py = |y: f64| h - m - (y - y0) / (y1 - y0) * (h - 2.0 * m);
    let colors = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e"];

    let mut svg = String::new();
    let _ = writeln!(svg, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" font-family="sans-serif" font-size="12">"#);
    let _ = writeln!(svg, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(svg, r#"<line x1="{m}" y1="{}" x2="{}" y2="{}" stroke="black"/>"#, h - m, w - m, h - m);
    let _ = writeln!(svg, r#"<line x1="{m}" y1="{m}" x2="{m}" y2="{}" stroke="black"/>"#, h - m);
    let _ = writeln!(svg, r#"<text x="{}" y="{}" text-anchor="middle">bits per pixel</text>"#, w / 2.0, h - 12.0);
    let _ = writeln!(svg, r#"<text x="14" y="{}" transform="rotate(-90 14 {})" text-anchor="middle">PSNR (dB)</text>"#, h / 2.0, h / 2.0);
    let _ = writeln!(svg, r#"<text x="{m}" y="{}" text-anchor="middle">{x0:.4}</text>"#, h - m + 16.0);
    let _ = writeln!(svg, r#"<text x="{}" y="{}" text-anchor="middle">{x1:.4}</text>"#, w - m, h - m + 16.0);
    let _ = writeln!(svg, r#"<text x="{}" y="{}" text-anchor="end">{y0:.2}</text>"#, m - 4.0, h - m);
    let _ = writeln!(svg, r#"<text x="{}" y="{}" text-anchor="end">{y1:.2}</text>"#, m - 4.0, m + 4.0);
    for (i, (name, pts)) in series.iter_mut().enumerate() {
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
        let color = colors[i % colors.len()];
        let path: Vec<String> = pts.iter().map(|&(x, y)| format!("{:.1},{:.1}", px(x), py(y))).collect();
        let _ = writeln!(svg, r#"<polyline fill="none" stroke="{color}" points="{}"/>"#, path.join(" "));
        for &(x, y) in pts.iter() {
            let _ = writeln!(svg, r#"<circle cx="{:.1}" cy="{:.1}" r="3" fill="{color}"/>"#, px(x), py(y));
        }
        let _ = writeln!(svg, r#"<text x="{}" y="{}" fill="{color}">{name}</text>"#, w - m - 80.0, m + 16.0 * i as f64);
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

/// Median wall-clock milliseconds of one forward pass on a `height`×`width` LR frame.
/// Two warmup passes are excluded.
pub fn benchmark_inference(config: &ModelConfig, height: usize, width: usize, repetitions: usize) -> Result<f64> {
    if repetitions < 10 {
        return Err(Error::invalid("benchmark needs at least 10 repetitions"));
    }
    let params = ParameterVector::initialize(config, 0);
    let net = Network::new(config, &params)?;
    let frame = Frame::from_fn(height, width, |y, x, c| ((y * 7 + x * 3 + c * 5) % 11) as f32 / 10.0)?;
    for _ in 0..2 {
        net.upscale(&frame)?;
    }
    let mut times = Vec::with_capacity(repetitions);
    for _ in 0..repetitions {
        let start = Instant::now();
        std::hint::black_box(net.upscale(std::hint::black_box(&frame))?);
        times.push(start.elapsed().as_secs_f64() * 1e3);
    }
    times.sort_by(f64::total_cmp);
    Ok(times[repetitions / 2])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cell_order() {
        let grid = SweepGrid { qualities: vec![1, 2], etas: vec![0.1, 0.2], taus: vec![1.0], feature_channels: vec![4] };
        let cells = grid.cells();
        assert_eq!(cells.len(), 4);
        assert_eq!((cells[1].quality, cells[1].eta), (1, 0.2));
        assert_eq!((cells[2].quality, cells[2].eta), (2, 0.1));
        assert!(SweepGrid { etas: vec![], ..grid }.validate().is_err());
    }

    #[test]
    fn svg_from_csv() {
        let csv = "method,bpp,psnr_db\nsrvc,0.1,30\nsrvc,0.2,32\nbicubic,0.1,25\nbicubic,x,\n";
        let svg = render_rd_svg(csv).unwrap();
        assert_eq!(svg.matches("<circle").count(), 3);
        assert!(svg.contains(">bicubic<") && svg.contains(">srvc<"));
        assert!(render_rd_svg("a,b\n1,2\n").is_err());
    }

    #[test]
    fn reports_csv() {
        let r = SegmentTrainReport { segment_index: 1, loss_before: 0.5, loss_after: 0.25, selected_count: 3, epochs_run: 2 };
        let mut out = Vec::new();
        write_reports_csv(&[r], &mut out).unwrap();
        assert_eq!(
            String::from_utf8(out).unwrap(),
            "segment_index,loss_before,loss_after,selected_count,epochs_run\n1,0.5,0.25,3,2\n"
        );
    }

    #[test]
    fn benchmark_requires_ten_reps() {
        assert!(benchmark_inference(&ModelConfig::default(), 8, 8, 9).is_err());
    }
}
