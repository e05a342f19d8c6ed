use proptest::prelude::*;
use srvc_core::metrics::{bicubic_resize, cubic_weight, psnr, ssim};
use srvc_core::video_io::area_downsample;
use srvc_core::{Frame, VideoSequence};

/// Direct evaluation of the separable Catmull-Rom kernel over every source
/// sample, with out-of-range samples replaced by the nearest edge sample.
fn brute_force_bicubic(src: &Frame, h: usize, w: usize) -> Vec<f64> {
    let (sh, sw) = src.dims();
    let mut out = Vec::with_capacity(h * w * 3);
    for y in 0..h {
        for x in 0..w {
            let sy = (y as f64 + 0.5) * sh as f64 / h as f64 - 0.5;
            let sx = (x as f64 + 0.5) * sw as f64 / w as f64 - 0.5;
            for c in 0..3 {
                let mut acc = 0.0;
                for m in -8..sh as i64 + 8 {
                    let wy = cubic_weight(sy - m as f64);
                    if wy == 0.0 {
                        continue;
                    }
                    for n in -8..sw as i64 + 8 {
                        let wx = cubic_weight(sx - n as f64);
                        let (cy, cx) = (m.clamp(0, sh as i64 - 1) as usize, n.clamp(0, sw as i64 - 1) as usize);
                        acc += wy * wx * f64::from(src.get(cy, cx, c));
                    }
                }
                out.push(acc.clamp(0.0, 1.0));
            }
        }
    }
    out
}

fn frame_strategy(max: usize) -> impl Strategy<Value = Frame> {
    (1..=max, 1..=max).prop_flat_map(|(h, w)| {
        proptest::collection::vec(0.0f32..=1.0, h * w * 3).prop_map(move |d| Frame::from_data(h, w, d).unwrap())
    })
}

#[test]
fn bicubic_two_by_two_to_four_by_four_matches_oracle() {
    let src = Frame::from_data(2, 2, vec![0.0, 0.2, 0.4, 1.0, 0.8, 0.6, 0.3, 0.9, 0.1, 0.5, 0.5, 0.5]).unwrap();
    let got = bicubic_resize(&src, 4, 4).unwrap();
    let want = brute_force_bicubic(&src, 4, 4);
    for (g, w) in got.data().iter().zip(&want) {
        assert!((f64::from(*g) - w).abs() <= 1e-6, "{g} vs {w}");
    }
}

#[test]
fn bicubic_is_exact_on_linear_images_away_from_border() {
    let src = Frame::from_fn(10, 12, |y, x, c| (0.02 * y as f32 + 0.03 * x as f32 + 0.1 * c as f32) / 1.5).unwrap();
    for (h, w) in [(20, 24), (40, 48), (30, 36)] {
        let up = bicubic_resize(&src, h, w).unwrap();
        let (fy, fx) = (h / 10, w / 12);
        for y in 2 * fy..h - 2 * fy {
            for x in 2 * fx..w - 2 * fx {
                let sy = (y as f64 + 0.5) / fy as f64 - 0.5;
                let sx = (x as f64 + 0.5) / fx as f64 - 0.5;
                for c in 0..3 {
                    let want = (0.02 * sy + 0.03 * sx + 0.1 * c as f64) / 1.5;
                    assert!((f64::from(up.get(y, x, c)) - want).abs() <= 1e-6, "({y},{x},{c})");
                }
            }
        }
    }
}

#[test]
fn psnr_strictly_decreases_with_noise_scale() {
    let reference = Frame::filled(16, 16, 0.5).unwrap();
    let pattern: Vec<f32> = (0..16 * 16 * 3).map(|i| ((i * 7919 % 201) as f32 - 100.0) / 100.0).collect();
    let mut last = f64::INFINITY;
    for sigma in [0.01f32, 0.02, 0.05, 0.1, 0.2, 0.4] {
        let noisy = Frame::from_data(16, 16, pattern.iter().map(|n| 0.5 + sigma * n).collect()).unwrap();
        let a = VideoSequence::new(vec![reference.clone()], 1.0).unwrap();
        let b = VideoSequence::new(vec![noisy], 1.0).unwrap();
        let (p, _) = psnr(&a, &b).unwrap();
        assert!(p < last, "sigma {sigma}: {p} !< {last}");
        last = p;
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn bicubic_matches_oracle_on_random_frames(src in frame_strategy(5), fy in 1usize..4, fx in 1usize..4) {
        let (h, w) = (src.height() * fy + 1, src.width() * fx);
        let got = bicubic_resize(&src, h, w).unwrap();
        let want = brute_force_bicubic(&src, h, w);
        for (g, w) in got.data().iter().zip(&want) {
            prop_assert!((f64::from(*g) - w).abs() <= 1e-6);
        }
    }

    #[test]
    fn ssim_symmetric_bounded_and_one_only_for_identity(
        a in proptest::collection::vec(0.0f32..=1.0, 12 * 13 * 3),
        b in proptest::collection::vec(0.0f32..=1.0, 12 * 13 * 3),
    ) {
        let fa = Frame::from_data(12, 13, a).unwrap();
        let fb = Frame::from_data(12, 13, b).unwrap();
        let ab = ssim(&fa, &fb).unwrap();
        let ba = ssim(&fb, &fa).unwrap();
        prop_assert!((ab - ba).abs() < 1e-12);
        prop_assert!((-1.0..=1.0).contains(&ab));
        prop_assert!((ssim(&fa, &fa).unwrap() - 1.0).abs() < 1e-9);
        if fa != fb {
            prop_assert!(ab < 1.0 - 1e-9);
        }
    }

    #[test]
    fn area_downsample_preserves_mean(src in frame_strategy(4), k in 1usize..4) {
        let (h, w) = (src.height() * k, src.width() * k);
        let big = Frame::from_fn(h, w, |y, x, c| src.get(y / k, x / k, c)).unwrap();
        let tiled = Frame::from_fn(h, w, |y, x, c| big.get(h - 1 - y, x, c) * 0.5 + 0.25).unwrap();
        for f in [&big, &tiled] {
            let small = area_downsample(f, k).unwrap();
            let mean = |fr: &Frame| fr.data().iter().map(|&v| f64::from(v)).sum::<f64>() / fr.data().len() as f64;
            prop_assert!((mean(f) - mean(&small)).abs() < 1e-5);
        }
        prop_assert_eq!(area_downsample(&big, k).unwrap(), src.clone());
    }
}
