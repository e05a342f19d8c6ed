mod common;

use srvc_core::adaptation::{selection_count, TrainingConfig};
use srvc_core::metrics::psnr;
use srvc_core::model_stream::{decode_stream, record_bits_unpadded, HEADER_LEN};
use srvc_core::pipeline::{
    bits_per_pixel, decode, decode_range, encode, encode_with, segment_states, EncodeJob, EncodeOptions,
    EncodedVideo,
};
use srvc_core::sr_model::{forward, param_count, ModelConfig};
use srvc_core::synth::{moving_texture, Scene};
use srvc_core::{Error, VideoSequence};

use common::{clip, micro_config};

fn quick_job(model: ModelConfig, tau: f64, eta: f64) -> EncodeJob {
    EncodeJob {
        model,
        tau,
        training: TrainingConfig { learning_rate: 2e-3, eta, epochs_per_segment: 2, ..TrainingConfig::default() },
        initial_epochs: 2,
        initial_learning_rate: 2e-3,
        codec_id: "lossless".into(),
        quality: 0,
        init_seed: 3,
    }
}

/// 16×16 LR (64×64 HR) at 4 fps.
fn four_segment_setup() -> (VideoSequence, EncodeJob) {
    let model = ModelConfig { feature_channels: 4, patch_size: 4, scale: 4, generator_width: 6, regular_width: 6 };
    (clip(8, 64, 4.0), quick_job(model, 0.5, 0.02))
}

#[test]
fn decoder_states_match_encoder_states() {
    let (video, job) = four_segment_setup();
    let outcome = encode_with(&video, &job, &EncodeOptions::default()).unwrap();
    assert_eq!(outcome.encoded.manifest.segments.len(), 4);
    assert_eq!(outcome.states.len(), 5);
    let decoded_states = segment_states(&outcome.encoded).unwrap();
    for (t, state) in decoded_states.iter().enumerate() {
        assert_eq!(state.digest(), outcome.states[t + 1].digest(), "segment {t}");
    }
    let initial = decode_stream(&outcome.encoded.model).unwrap().initial_params();
    assert_eq!(initial.digest(), outcome.states[0].digest());
}

#[test]
fn decode_equals_encoder_side_reconstruction() {
    let (video, job) = four_segment_setup();
    let outcome = encode_with(&video, &job, &EncodeOptions::default()).unwrap();
    let lr = srvc_core::video_io::downsample_video(&video, job.model.scale).unwrap();
    let decoded = decode(&outcome.encoded).unwrap();
    for (t, &(start, end)) in outcome.encoded.manifest.segments.iter().enumerate() {
        for i in start..end {
            let expected = forward(&lr.frames()[i], &outcome.states[t + 1], &job.model).unwrap();
            assert_eq!(decoded.frames()[i], expected, "frame {i}");
        }
    }
}

#[test]
fn encode_and_decode_are_deterministic() {
    let (video, job) = four_segment_setup();
    let a = encode(&video, &job).unwrap();
    let b = encode(&video, &job).unwrap();
    assert_eq!(a, b);
    assert_eq!(decode(&a).unwrap(), decode(&b).unwrap());
}

#[test]
fn one_shot_has_no_updates_and_initial_model_accounting() {
    let model = micro_config();
    let video = clip(6, 16, 2.0);
    let encoded = encode(&video, &quick_job(model, f64::INFINITY, 0.1)).unwrap();
    let stream = decode_stream(&encoded.model).unwrap();
    assert!(stream.updates.is_empty());
    assert_eq!(encoded.manifest.segments, vec![(0, 6)]);
    let m = param_count(&model) as u64;
    let pixels = (6 * 16 * 16) as f64;
    let content_bpp = encoded.content_bits() as f64 / pixels;
    let want = content_bpp + (16 * m + 8 * HEADER_LEN as u64) as f64 / pixels;
    assert!((encoded.bits_per_pixel().unwrap() - want).abs() < 1e-12);
    // a zero-update stream decodes every segment with the initial model
    let states = segment_states(&encoded).unwrap();
    assert_eq!(states.len(), 1);
    assert_eq!(states[0], stream.initial_params());
}

#[test]
fn two_segments_at_half_eta_select_half_the_parameters() {
    // F=1, Cg=3, Cr=3, k=1 gives 1002 parameters, the nearest layout to 1000
    let model = ModelConfig { feature_channels: 1, patch_size: 2, scale: 1, generator_width: 3, regular_width: 3 };
    let m = param_count(&model);
    assert_eq!(m, 1002);
    let encoded = encode(&clip(4, 8, 2.0), &quick_job(model, 1.0, 0.5)).unwrap();
    let stream = decode_stream(&encoded.model).unwrap();
    assert_eq!(stream.updates.len(), 2);
    for (i, u) in stream.updates.iter().enumerate() {
        assert_eq!(u.segment_index, i as u32 + 1);
        assert_eq!(u.len(), selection_count(0.5, m));
        assert_eq!(u.len(), 501);
    }
}

#[test]
fn bpp_from_formula_matches_serialized_sizes() {
    let (video, job) = four_segment_setup();
    let encoded = encode(&video, &job).unwrap();
    let stream = decode_stream(&encoded.model).unwrap();
    let m = stream.header.param_count as u64;
    let bits = u32::from(stream.header.index_bits);
    let formula_bits: u64 = 8 * HEADER_LEN as u64
        + 16 * m
        + stream.updates.iter().map(|u| record_bits_unpadded(u.len(), bits)).sum::<u64>();
    let (h, w) = video.dims().unwrap();
    let from_formula = bits_per_pixel(encoded.content_bits(), formula_bits, video.len(), h, w).unwrap();
    let from_bytes = encoded.bits_per_pixel().unwrap();
    let slack = 8.0 * stream.updates.len() as f64 / (video.len() * h * w) as f64;
    assert!(from_bytes >= from_formula && from_bytes - from_formula <= slack + 1e-15);
}

#[test]
fn larger_eta_costs_more_model_bits() {
    let model = micro_config();
    let video = clip(4, 16, 2.0);
    let mut last = 0;
    for eta in [0.01, 0.05, 0.2, 0.8] {
        let bits = encode(&video, &quick_job(model, 1.0, eta)).unwrap().model_bits();
        assert!(bits > last, "eta {eta}");
        last = bits;
    }
}

#[test]
fn halving_update_frequency_halves_update_bits() {
    let model = micro_config();
    let video = clip(40, 16, 2.0);
    let update_bits = |tau: f64| {
        let e = encode(&video, &quick_job(model, tau, 0.05)).unwrap();
        let header_and_initial = 8 * (HEADER_LEN + 2 * param_count(&model)) as u64;
        (e.model_bits() - header_and_initial) as f64
    };
    let (five, ten) = (update_bits(5.0), update_bits(10.0));
    assert!((five / ten - 2.0).abs() <= 0.04, "{five} / {ten}");
}

#[test]
fn training_improves_each_segment_of_a_static_scene() {
    let scene = Scene { velocity: (0.0, 0.0), ..Scene::stripes() };
    let video = moving_texture(32, 32, 6, 2.0, &[scene]).unwrap();
    let model = ModelConfig { feature_channels: 4, patch_size: 4, scale: 4, generator_width: 6, regular_width: 6 };
    let mut job = quick_job(model, 1.5, 0.1);
    job.training.crop = false;
    job.training.epochs_per_segment = 4;
    job.training.learning_rate = 5e-4;
    let outcome = encode_with(&video, &job, &EncodeOptions::default()).unwrap();
    let lr = srvc_core::video_io::downsample_video(&video, 4).unwrap();
    for (t, &(start, end)) in outcome.encoded.manifest.segments.iter().enumerate() {
        let report = &outcome.reports[t];
        assert!(report.loss_after <= report.loss_before, "segment {t}: {report:?}");
        let hr = video.slice(start, end).unwrap();
        let run = |state: usize| {
            let frames = lr.frames()[start..end]
                .iter()
                .map(|f| forward(f, &outcome.states[state], &model).unwrap())
                .collect();
            VideoSequence::new(frames, video.fps()).unwrap()
        };
        let (_, before) = psnr(&hr, &run(t)).unwrap();
        let (_, after) = psnr(&hr, &run(t + 1)).unwrap();
        for (b, a) in before.iter().zip(&after) {
            assert!(a >= b, "segment {t}: {a} < {b}");
        }
    }
}

#[test]
fn non_divisible_frames_decode_to_source_dims() {
    let video = moving_texture(18, 22, 3, 1.0, &[Scene::checker()]).unwrap();
    let model = ModelConfig { scale: 4, ..micro_config() };
    let encoded = encode(&video, &quick_job(model, 2.0, 0.1)).unwrap();
    assert_eq!((encoded.manifest.lr_height, encoded.manifest.lr_width), (5, 6));
    let decoded = decode(&encoded).unwrap();
    assert_eq!(decoded.len(), 3);
    assert_eq!(decoded.dims(), Some((18, 22)));
}

#[test]
fn save_load_round_trip_and_overwrite() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("enc");
    let video = clip(4, 16, 2.0);
    let a = encode(&video, &quick_job(micro_config(), 1.0, 0.1)).unwrap();
    a.save(&out).unwrap();
    assert_eq!(EncodedVideo::load(&out).unwrap(), a);
    let b = encode(&video, &quick_job(micro_config(), f64::INFINITY, 0.1)).unwrap();
    b.save(&out).unwrap();
    assert_eq!(EncodedVideo::load(&out).unwrap(), b);
    let names: Vec<_> = std::fs::read_dir(dir.path()).unwrap().map(|e| e.unwrap().file_name()).collect();
    assert_eq!(names, vec![std::ffi::OsString::from("enc")]);
}

#[test]
fn decode_range_returns_requested_frames() {
    let video = clip(6, 16, 2.0);
    let encoded = encode(&video, &quick_job(micro_config(), 1.0, 0.1)).unwrap();
    let full = decode(&encoded).unwrap();
    let part = decode_range(&encoded, 2, 5).unwrap();
    assert_eq!(part.frames(), &full.frames()[2..5]);
}

#[test]
fn corrupted_record_names_its_position() {
    let video = clip(6, 16, 2.0);
    let mut encoded = encode(&video, &quick_job(micro_config(), 1.0, 0.1)).unwrap();
    let stream = decode_stream(&encoded.model).unwrap();
    let first_record = HEADER_LEN + 2 * stream.initial_model.len();
    // segment index of the first record becomes 0, which no record may carry
    encoded.model[first_record..first_record + 4].copy_from_slice(&[0, 0, 0, 0]);
    let err = decode(&encoded).unwrap_err();
    assert!(err.is_stream_corruption(), "{err}");
    assert!(err.to_string().contains("record 0"), "{err}");

    encoded.model.truncate(encoded.model.len() - 1);
    assert!(matches!(decode(&encoded), Err(Error::Truncated { .. } | Error::Corruption { .. })));
}

#[test]
fn invalid_jobs_are_rejected_up_front() {
    let video = clip(2, 16, 2.0);
    let mut job = quick_job(micro_config(), 1.0, 0.1);
    job.training.eta = 0.0;
    assert!(matches!(encode(&video, &job), Err(Error::InvalidArgument(_))));
    let mut job = quick_job(micro_config(), -1.0, 0.1);
    assert!(encode(&video, &job).is_err());
    job.tau = 1.0;
    job.codec_id = "nope".into();
    assert!(matches!(encode(&video, &job), Err(Error::CodecUnavailable { .. })));
}
