use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use srvc_core::metrics::{psnr, quality_report, QualityReport};
use srvc_core::model_stream::decode_stream;
use srvc_core::pipeline::{self, EncodeOptions, EncodedVideo, MODEL_FILE};
use srvc_core::sweep::{self, SweepGrid};
use srvc_core::synth::{moving_texture, Scene};
use srvc_core::video_io::{load_video, write_png_sequence, write_raw_video};

use crate::args::{BenchArgs, DecodeArgs, EncodeArgs, EvalArgs, InspectArgs, SweepArgs, SynthArgs};

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(file))
}

pub fn encode(args: &EncodeArgs, verbose: u8) -> Result<()> {
    let job = args.job.job();
    let source = load_video(&args.input, args.fps)
        .with_context(|| format!("loading {}", args.input.display()))?;
    if verbose > 0 {
        eprintln!(
            "encoding {} frames of {:?} with {} parameters",
            source.len(),
            source.dims().unwrap_or_default(),
            srvc_core::sr_model::param_count(&job.model)
        );
    }
    let options = EncodeOptions { initial_model: None, checkpoint_dir: args.checkpoint.as_deref() };
    let outcome = pipeline::encode_with(&source, &job, &options)?;
    if verbose > 0 {
        for r in &outcome.reports {
            eprintln!(
                "segment {}: loss {:.6} -> {:.6}, {} parameters updated",
                r.segment_index, r.loss_before, r.loss_after, r.selected_count
            );
        }
    }
    let encoded = &outcome.encoded;
    encoded
        .save(&args.output)
        .with_context(|| format!("writing {}", args.output.display()))?;
    if let Some(path) = &args.report {
        sweep::write_reports_csv(&outcome.reports, create(path)?)?;
    }
    println!("frames:        {}", encoded.manifest.frames);
    println!("segments:      {}", encoded.manifest.segments.len());
    println!("updates:       {}", outcome.reports.len());
    println!("content bytes: {}", encoded.content.byte_count());
    println!("model bytes:   {}", encoded.model.len());
    println!("bits/pixel:    {:.6}", encoded.bits_per_pixel()?);
    Ok(())
}

pub fn decode(args: &DecodeArgs) -> Result<()> {
    let encoded = EncodedVideo::load(&args.input)
        .with_context(|| format!("reading {}", args.input.display()))?;
    let (start, end) = args.frames.unwrap_or((0, encoded.manifest.frames));
    let video = pipeline::decode_range(&encoded, start, end)?;
    write_png_sequence(&args.output, &video)
        .with_context(|| format!("writing {}", args.output.display()))?;
    println!("decoded {} frames to {}", video.len(), args.output.display());
    Ok(())
}

fn print_quality(report: &QualityReport) {
    println!("aggregate psnr: {:.4} dB", report.aggregate_psnr);
    println!("mean ssim:      {:.6}", report.mean_ssim);
}

pub fn eval(args: &EvalArgs) -> Result<()> {
    let reference = load_video(&args.reference, args.fps)
        .with_context(|| format!("loading {}", args.reference.display()))?;
    let test = load_video(&args.test, args.fps)
        .with_context(|| format!("loading {}", args.test.display()))?;
    let report = match quality_report(&reference, &test) {
        Ok(r) => r,
        Err(e @ srvc_core::Error::InvalidArgument(_)) if psnr(&reference, &test).is_ok() => {
            // frames too small for SSIM still get PSNR
            eprintln!("ssim unavailable: {e}");
            let (aggregate_psnr, per_frame_psnr) = psnr(&reference, &test)?;
            QualityReport {
                aggregate_psnr,
                mean_ssim: f64::NAN,
                per_frame_ssim: vec![f64::NAN; per_frame_psnr.len()],
                per_frame_psnr,
            }
        }
        Err(e) => return Err(e.into()),
    };
    print_quality(&report);
    if let Some(path) = &args.csv {
        sweep::write_quality_csv(&report, create(path)?)?;
    }
    Ok(())
}

pub fn sweep(args: &SweepArgs, workers: usize) -> Result<()> {
    let video = load_video(&args.input, args.fps)
        .with_context(|| format!("loading {}", args.input.display()))?;
    let base = args.job.job();
    let or_default = |v: &Vec<f64>, d: f64| if v.is_empty() { vec![d] } else { v.clone() };
    let grid = SweepGrid {
        qualities: args.qualities.clone(),
        etas: or_default(&args.etas, base.training.eta),
        taus: or_default(&args.taus, base.tau),
        feature_channels: if args.feature_values.is_empty() {
            vec![base.model.feature_channels]
        } else {
            args.feature_values.clone()
        },
    };
    let workers = if workers == 0 { rayon::current_num_threads() } else { workers };
    let points = sweep::run_sweep(&video, &grid, &base, workers)?;
    let mut csv = Vec::new();
    sweep::write_rd_csv(&points, &mut csv)?;
    fs::write(&args.csv, &csv).with_context(|| format!("writing {}", args.csv.display()))?;
    if let Some(path) = &args.cdf {
        sweep::write_cdf_csv(&points, create(path)?)?;
    }
    if let Some(path) = &args.plot {
        let svg = sweep::render_rd_svg(&String::from_utf8_lossy(&csv))?;
        fs::write(path, svg).with_context(|| format!("writing {}", path.display()))?;
    }
    let failed = points.iter().filter(|p| p.error.is_some()).count();
    println!("{} rows written to {} ({failed} failed)", points.len(), args.csv.display());
    Ok(())
}

pub fn inspect(args: &InspectArgs) -> Result<()> {
    let path: PathBuf = if args.input.is_dir() { args.input.join(MODEL_FILE) } else { args.input.clone() };
    let bytes = fs::read(&path).with_context(|| format!("reading {}", path.display()))?;
    let stream = decode_stream(&bytes)?;
    let h = &stream.header;
    let tau = if h.tau_seconds().is_finite() { format!("{} s", h.tau_seconds()) } else { "inf".into() };
    println!("version:          {}", h.version);
    println!("parameters:       {}", h.param_count);
    println!("feature channels: {}", h.feature_channels);
    println!("patch size:       {}", h.patch_size);
    println!("scale:            {}", h.scale);
    println!("generator width:  {}", h.generator_width);
    println!("regular width:    {}", h.regular_width);
    println!("tau:              {tau}");
    println!("init seed:        {}", h.init_seed);
    println!("index bits:       {}", h.index_bits);
    println!("file bytes:       {}", bytes.len());
    println!("updates:          {}", stream.updates.len());
    if !stream.updates.is_empty() {
        println!("{:>8} {:>8} {:>10} {:>14} {:>14}", "segment", "count", "bytes", "mean|delta|", "max|delta|");
    }
    for u in &stream.updates {
        let abs: Vec<f64> = u.deltas.iter().map(|d| f64::from(d.to_f32().abs())).collect();
        let mean = if abs.is_empty() { 0.0 } else { abs.iter().sum::<f64>() / abs.len() as f64 };
        let max = abs.iter().copied().fold(0.0, f64::max);
        let bytes = srvc_core::model_stream::record_len(u.len(), u32::from(h.index_bits));
        println!("{:>8} {:>8} {:>10} {:>14.6e} {:>14.6e}", u.segment_index, u.len(), bytes, mean, max);
    }
    Ok(())
}

pub fn synth(args: &SynthArgs) -> Result<()> {
    let scenes = if args.scene_change { vec![Scene::stripes(), Scene::checker()] } else { vec![Scene::stripes()] };
    let video = moving_texture(args.height, args.width, args.frames, args.fps, &scenes)?;
    if args.output.extension().is_some_and(|e| e == "rgbp") {
        if let Some(parent) = args.output.parent().filter(|p| !p.as_os_str().is_empty()) {
            fs::create_dir_all(parent)?;
        }
        write_raw_video(&args.output, &video)?;
    } else {
        write_png_sequence(&args.output, &video)?;
    }
    println!("wrote {} frames of {}x{} to {}", video.len(), args.width, args.height, args.output.display());
    Ok(())
}

pub fn bench(args: &BenchArgs) -> Result<()> {
    let config = args.model.config();
    let ms = sweep::benchmark_inference(&config, args.height, args.width, args.repetitions)?;
    println!(
        "median forward time: {ms:.3} ms for a {}x{} input ({} parameters)",
        args.width,
        args.height,
        srvc_core::sr_model::param_count(&config)
    );
    Ok(())
}
