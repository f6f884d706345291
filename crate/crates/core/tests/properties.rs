use proptest::prelude::*;

use cornercase::detector::{
    error_map, run_detector, weighted_error_score, DetectorConfig, DetectorInput, ErrorMap,
    NormalizationMode,
};
use cornercase::imaging::{gaussian_blur, BlurConfig, Frame, RealImage};
use cornercase::prediction::{
    default_indices, evaluate_predictor, predict_next, FrameWindow, PredictorKind,
};
use cornercase::segmentation::{ClassMask, CAR, PERSON};
use cornercase::synth::{background_frame, generate_scenario, BackgroundSpec, ScenarioSpec, SpriteSpec};

fn frame_strategy(h: usize, w: usize) -> impl Strategy<Value = Frame> {
    prop::collection::vec(any::<u8>(), h * w).prop_map(move |d| Frame::new(h, w, 1, d).unwrap())
}

fn sized_frames(count: usize) -> impl Strategy<Value = Vec<Frame>> {
    (2usize..24, 2usize..24)
        .prop_flat_map(move |(h, w)| prop::collection::vec(frame_strategy(h, w), count))
}

#[test]
fn blur_impulse_response_is_the_anchored_kernel() {
    for (k, sigma) in [(10, 2.0), (5, 1.0), (4, 0.8), (1, 1.0)] {
        let cfg = BlurConfig::new(k, sigma).unwrap();
        let (h, w, cy, cx) = (41, 43, 20, 21);
        let mut data = vec![0.0; h * w];
        data[cy * w + cx] = 1.0;
        let out = gaussian_blur(&RealImage::new(h, w, 1, data).unwrap(), &cfg);

        let kernel = cfg.kernel_2d();
        let a = cfg.anchor() as isize;
        let mut total = 0.0;
        for y in 0..h {
            for x in 0..w {
                let (ky, kx) = (y as isize - cy as isize + a, x as isize - cx as isize + a);
                let expected = if (0..k as isize).contains(&ky) && (0..k as isize).contains(&kx) {
                    kernel[ky as usize * k + kx as usize]
                } else {
                    0.0
                };
                let got = out.get(y, x, 0);
                assert!((got - expected).abs() < 1e-12, "k={k} at ({y},{x}): {got} vs {expected}");
                total += got;
            }
        }
        assert!((total - 1.0).abs() < 1e-12);
        assert!((kernel.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}

#[test]
fn blur_suppresses_error_from_a_one_pixel_checkerboard_shift() {
    let (h, w) = (64, 64);
    let board = |shift: usize| {
        let data = (0..h * w)
            .map(|i| if (i / w + i % w + shift) % 2 == 0 { 200 } else { 50 })
            .collect();
        Frame::new(h, w, 1, data).unwrap()
    };
    let (a, b) = (board(0), board(1));
    let raw = error_map(&a.to_real(), &b, None).unwrap().mean();
    let blurred = error_map(&a.to_real(), &b, Some(&BlurConfig::default())).unwrap().mean();
    assert!(raw > 1000.0);
    assert!(blurred < 0.01 * raw, "blurred {blurred} vs raw {raw}");
}

#[test]
fn synthetic_background_shows_through_outside_sprites() {
    let spec = ScenarioSpec {
        height: 40,
        width: 60,
        frames: 6,
        seed: 5,
        background: BackgroundSpec {
            amplitude: 30.0,
            tile: (4, 4),
            jitter: 0.4,
            ..BackgroundSpec::default()
        },
        sprites: vec![SpriteSpec {
            class_id: CAR,
            height: 8,
            width: 10,
            row: 5.0,
            col: 3.0,
            velocity: (1.0, 2.0),
            intensity: 240,
            edge_ramp: 2,
        }],
        ..ScenarioSpec::default()
    };
    let s = generate_scenario(&spec).unwrap();
    for t in 1..=spec.frames {
        let bg = background_frame(&spec, t).unwrap();
        let (frame, mask) = (&s.frames[t - 1], &s.masks[t - 1]);
        let mut sprite_pixels = 0;
        for y in 0..spec.height {
            for x in 0..spec.width {
                if mask.get(y, x) == CAR {
                    sprite_pixels += 1;
                } else {
                    assert_eq!(frame.get(y, x, 0), bg.get(y, x, 0));
                }
            }
        }
        assert_eq!(sprite_pixels, 80);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn linear_prediction_stays_in_range(frames in sized_frames(2)) {
        let window = FrameWindow::new(&frames).unwrap();
        let pred = predict_next(&window, &PredictorKind::LinearExtrapolation, 3).unwrap();
        prop_assert!(pred.data().iter().all(|&v| (0.0..=255.0).contains(&v)));
    }

    #[test]
    fn static_sequences_have_zero_prediction_error(frame in frame_strategy(12, 12), len in 3usize..8) {
        let frames = vec![frame; len];
        for kind in [PredictorKind::Persistence, PredictorKind::LinearExtrapolation] {
            let p = cornercase::prediction::Predictor::new(kind, 2).unwrap();
            let r = evaluate_predictor(&frames, &default_indices(len), &p).unwrap();
            prop_assert!(r.rows.iter().all(|row| row.mse == 0.0));
        }
    }

    #[test]
    fn scores_do_not_depend_on_future_frames(
        frames in sized_frames(8),
        replacement in any::<u8>(),
        t in 3usize..8,
    ) {
        let (h, w) = (frames[0].height(), frames[0].width());
        let masks = vec![ClassMask::filled(h, w, PERSON).unwrap(); frames.len()];
        let cfg = DetectorConfig {
            normalization: NormalizationMode::OnlineRunning,
            patch_size: Some(4),
            ..DetectorConfig::default()
        };
        let base = run_detector(&DetectorInput::from_frames(frames.clone(), masks.clone()), &cfg, 1).unwrap();
        let mut altered = frames;
        for f in &mut altered[t..] {
            *f = Frame::filled(h, w, 1, replacement).unwrap();
        }
        let changed = run_detector(&DetectorInput::from_frames(altered, masks), &cfg, 1).unwrap();
        for (a, b) in base.series.records[..t].iter().zip(&changed.series.records[..t]) {
            prop_assert_eq!(a, b);
        }
    }

    #[test]
    fn lower_errors_weigh_more(
        h in 3usize..40,
        w in 1usize..20,
        row in 0usize..38,
        value in 0.1f64..1e4,
    ) {
        let row = row % (h - 1);
        let blob = |r: usize| {
            let mut v = vec![0.0; h * w];
            v[r * w..(r + 1) * w].iter_mut().for_each(|x| *x = value);
            weighted_error_score(&ErrorMap::new(h, w, v).unwrap()).unwrap()
        };
        prop_assert!(blob(row + 1) > blob(row));
    }
}
