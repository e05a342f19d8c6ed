mod common;

use srvc_core::adaptation::TrainingConfig;
use srvc_core::pipeline::{bits_per_pixel, encode_with, train_initial_model, EncodeJob, EncodeOptions};
use srvc_core::sweep::{run_sweep, write_cdf_csv, write_rd_csv, Method, SweepGrid, RD_COLUMNS};

use common::{clip, micro_config};

fn base_job() -> EncodeJob {
    EncodeJob {
        model: micro_config(),
        tau: 1.0,
        training: TrainingConfig { learning_rate: 1e-3, eta: 0.1, epochs_per_segment: 1, ..TrainingConfig::default() },
        initial_epochs: 1,
        initial_learning_rate: 1e-3,
        codec_id: "quant".into(),
        quality: 16,
        init_seed: 1,
    }
}

fn grid(qualities: Vec<u32>, etas: Vec<f64>) -> SweepGrid {
    SweepGrid { qualities, etas, taus: vec![1.0], feature_channels: vec![2] }
}

fn csv_text(points: &[srvc_core::sweep::RdPoint]) -> String {
    let mut out = Vec::new();
    write_rd_csv(points, &mut out).unwrap();
    String::from_utf8(out).unwrap()
}

#[test]
fn one_cell_gives_three_methods() {
    let video = clip(4, 24, 2.0);
    let rows = run_sweep(&video, &grid(vec![16], vec![0.1]), &base_job(), 1).unwrap();
    let methods: Vec<_> = rows.iter().map(|r| r.method).collect();
    assert_eq!(methods, Method::ALL.to_vec());
    assert!(rows.iter().all(|r| r.error.is_none()));
    let bicubic = &rows[2];
    assert_eq!(bicubic.model_bits, 0);
    for r in &rows {
        let bpp = bits_per_pixel(r.content_bits, r.model_bits, 4, 24, 24).unwrap();
        assert_eq!(r.bpp, bpp);
        assert_eq!(r.per_frame_psnr.len(), 4);
    }
    assert!(rows[0].model_bits > rows[1].model_bits, "updates add bits on top of the initial model");
    assert_eq!(rows[0].content_bits, rows[2].content_bits);
}

#[test]
fn srvc_row_matches_an_independent_encode() {
    let video = clip(4, 24, 2.0);
    let job = base_job();
    let rows = run_sweep(&video, &grid(vec![16], vec![0.1]), &job, 1).unwrap();
    let initial = train_initial_model(&video, &EncodeJob { tau: f64::INFINITY, ..job.clone() }).unwrap();
    let options = EncodeOptions { initial_model: Some(&initial), checkpoint_dir: None };
    let encoded = encode_with(&video, &job, &options).unwrap().encoded;
    assert_eq!(rows[0].model_bits, encoded.model_bits());
    assert_eq!(rows[0].content_bits, encoded.content_bits());
    assert_eq!(rows[0].bpp, encoded.bits_per_pixel().unwrap());
}

#[test]
fn grid_arithmetic_and_column_layout() {
    let video = clip(4, 24, 2.0);
    let rows = run_sweep(&video, &grid(vec![8, 16], vec![0.05, 0.2]), &base_job(), 2).unwrap();
    assert_eq!(rows.len(), 12);
    assert_eq!(rows.iter().filter(|r| r.method == Method::Srvc).count(), 4);
    let text = csv_text(&rows);
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), RD_COLUMNS.join(","));
    let first: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(&first[..5], &["srvc", "0.05", "1000", "8", "2"]);
    let one_shot: Vec<&str> = text.lines().nth(2).unwrap().split(',').collect();
    assert_eq!(one_shot[0], "one_shot");
    assert_eq!(one_shot[2], "inf");
}

#[test]
fn output_is_independent_of_worker_count() {
    let video = clip(4, 24, 2.0);
    let g = SweepGrid { qualities: vec![8, 16], etas: vec![0.1], taus: vec![1.0, 2.0], feature_channels: vec![1, 2] };
    let a = csv_text(&run_sweep(&video, &g, &base_job(), 1).unwrap());
    let b = csv_text(&run_sweep(&video, &g, &base_job(), 3).unwrap());
    assert_eq!(a, b);
}

#[test]
fn failing_cells_are_recorded_not_fatal() {
    let video = clip(4, 24, 2.0);
    // quality 0 is not a valid level count for the quantizing codec
    let rows = run_sweep(&video, &grid(vec![0, 16], vec![0.1]), &base_job(), 1).unwrap();
    assert_eq!(rows.len(), 6);
    assert!(rows[..3].iter().all(|r| r.error.is_some()));
    assert!(rows[3..].iter().all(|r| r.error.is_none()));
    let text = csv_text(&rows);
    let failed = text.lines().nth(1).unwrap();
    assert!(failed.starts_with("srvc,0.1,1000,0,2,,,,"), "{failed}");
    assert!(failed.contains("invalid argument"), "{failed}");
}

#[test]
fn cdf_rows_cover_every_frame_of_every_method() {
    let video = clip(5, 24, 2.0);
    let rows = run_sweep(&video, &grid(vec![16], vec![0.1]), &base_job(), 1).unwrap();
    let mut out = Vec::new();
    write_cdf_csv(&rows, &mut out).unwrap();
    let text = String::from_utf8(out).unwrap();
    assert_eq!(text.lines().count(), 1 + 3 * 5);
    assert!(text.lines().next().unwrap().contains("frame_index,psnr_db,ssim"));
}
