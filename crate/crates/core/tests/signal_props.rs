use proptest::prelude::*;
use warpbci_core::signal::{
    artifact_signal, epoch, mean_center, moving_average, parse_trials, preprocess, write_trials, Annotation, EegTrial,
    TrialFormat,
};
use warpbci_core::{ArtifactClass, FilterSpec};

fn trial(channels: usize, min_len: usize, max_len: usize) -> impl Strategy<Value = EegTrial> {
    (min_len..=max_len).prop_flat_map(move |n| {
        prop::collection::vec(prop::collection::vec(-200.0f64..200.0, n), channels)
            .prop_map(|data| EegTrial::new(250.0, data).unwrap())
    })
}

fn rel_close(x: f64, y: f64, tol: f64) -> bool {
    (x - y).abs() <= tol * (1.0 + x.abs().max(y.abs()))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn processing_keeps_channel_count_and_order(t in (1usize..5).prop_flat_map(|c| trial(c, 40, 300))) {
        let filtered = preprocess(&t, &FilterSpec::default()).unwrap();
        prop_assert_eq!(filtered.channels(), t.channels());
        prop_assert_eq!(filtered.len(), t.len());
        let centered = mean_center(&t);
        for c in 0..t.channels() {
            // centering only shifts, so channel c stays channel c
            let shift = t.channel(c)[0] - centered.channel(c)[0];
            for (x, y) in t.channel(c).iter().zip(centered.channel(c)) {
                prop_assert!((x - y - shift).abs() < 1e-9);
            }
        }
        let cut = epoch(&t, 5, 0.1).unwrap();
        prop_assert_eq!(cut.channels(), t.channels());
    }

    #[test]
    fn mean_center_is_idempotent(t in trial(3, 1, 200)) {
        let once = mean_center(&t);
        let twice = mean_center(&once);
        for c in 0..t.channels() {
            let mean = once.channel(c).iter().sum::<f64>() / once.len() as f64;
            prop_assert!(mean.abs() < 1e-9);
            for (x, y) in once.channel(c).iter().zip(twice.channel(c)) {
                prop_assert!(rel_close(*x, *y, 1e-9));
            }
        }
    }

    #[test]
    fn moving_average_is_monotone(
        (xs, bump) in (1usize..120).prop_flat_map(|n| (
            prop::collection::vec(-1e3f64..1e3, n),
            prop::collection::vec(0.0f64..1e3, n),
        )),
        m in 1usize..40,
    ) {
        let ys: Vec<f64> = xs.iter().zip(&bump).map(|(x, b)| x + b).collect();
        let lo = moving_average(&xs, m).unwrap();
        let hi = moving_average(&ys, m).unwrap();
        prop_assert!(lo.iter().zip(&hi).all(|(a, b)| a <= b));
    }

    #[test]
    fn moving_average_matches_window_mean(xs in prop::collection::vec(-1e3f64..1e3, 1..100), m in 1usize..30) {
        let out = moving_average(&xs, m).unwrap();
        for (i, y) in out.iter().enumerate() {
            let lo = (i + 1).saturating_sub(m);
            let want = xs[lo..=i].iter().sum::<f64>() / (i + 1 - lo) as f64;
            prop_assert!(rel_close(*y, want, 1e-12));
        }
    }

    #[test]
    fn artifact_signal_ignores_sign(t in trial(4, 1, 300)) {
        let flipped = EegTrial::new(t.sample_rate(), t.data().iter().map(|c| c.iter().map(|x| -x).collect()).collect()).unwrap();
        prop_assert_eq!(artifact_signal(&t, None).unwrap(), artifact_signal(&flipped, None).unwrap());
    }

    #[test]
    fn re_epoching_a_window_is_identity(t in trial(2, 300, 600), start in 0usize..100) {
        let first = epoch(&t, start, 0.8).unwrap();
        let again = epoch(&first, 0, 0.8).unwrap();
        prop_assert_eq!(first, again);
    }

    #[test]
    fn files_round_trip(
        t in trial(3, 1, 60),
        ids in ("[a-z][a-z0-9]{0,5}", "[0-9]{1,3}"),
        labelled in any::<bool>(),
        jsonl in any::<bool>(),
    ) {
        let n = t.len();
        let t = t
            .with_label(labelled.then_some(ArtifactClass::HeadNod))
            .with_ids(ids.0, ids.1)
            .unwrap()
            .with_annotations(vec![Annotation { start: 0, end: n, class: ArtifactClass::EyeBlink }])
            .unwrap();
        let format = if jsonl { TrialFormat::Jsonl } else { TrialFormat::Csv };
        let mut buf = Vec::new();
        write_trials(&mut buf, std::slice::from_ref(&t), format).unwrap();
        let back = parse_trials(std::str::from_utf8(&buf).unwrap(), format).unwrap();
        prop_assert_eq!(back, vec![t]);
    }
}

#[test]
fn full_size_epoch_shape() {
    let t = EegTrial::new(250.0, vec![vec![0.0; 2000]; 128]).unwrap();
    let e = epoch(&t, 100, 3.0).unwrap();
    assert_eq!((e.channels(), e.len()), (128, 750));
}

#[test]
fn csv_files_on_disk() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("trials.csv");
    let t = EegTrial::new(500.0, vec![vec![1.0, 2.5], vec![-3.0, 0.125]])
        .unwrap()
        .with_label(Some(ArtifactClass::JawMovement));
    warpbci_core::signal::save_trials(&path, std::slice::from_ref(&t), TrialFormat::from_path(&path)).unwrap();
    let back = warpbci_core::signal::load_trials(&path, TrialFormat::Csv).unwrap();
    assert_eq!(back, vec![t]);
    assert!(warpbci_core::signal::load_trials(dir.path().join("missing.csv"), TrialFormat::Csv).is_err());
}
