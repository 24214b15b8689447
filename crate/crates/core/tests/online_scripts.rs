use proptest::prelude::*;
use warpbci_core::online::{
    calibrate_offline, replay, ArtifactEvent, EngineMode, EventKind, OnlineEngine, ScriptSuite, StreamConfig, StreamFeature,
};
use warpbci_core::synth::{blink_demo_stream, gen_templates, gesture_demo_stream, GenSpec};

fn suite() -> ScriptSuite {
    let text = include_str!("../data/blink_scripts.json");
    ScriptSuite::from_json(text).unwrap()
}

fn traced() -> StreamConfig {
    suite().config
}

fn run(config: StreamConfig, xs: &[f64]) -> Vec<ArtifactEvent> {
    let mut e = OnlineEngine::new(config, EngineMode::BlinkOnly, None).unwrap();
    let mut out = Vec::new();
    for &x in xs {
        out.extend(e.feed(&[x]).unwrap());
    }
    out.extend(e.finish().unwrap());
    out
}

#[test]
fn scripted_suite_matches_hand_traces() {
    let suite = suite();
    assert!(suite.scripts.len() >= 10);
    for script in &suite.scripts {
        assert_eq!(suite.run(script).unwrap(), script.expected, "{}", script.name);
    }
}

#[test]
fn scripted_suite_is_bit_identical_across_runs() {
    let suite = suite();
    let log = |s: &ScriptSuite| -> String {
        s.scripts.iter().map(|x| serde_json::to_string(&s.run(x).unwrap()).unwrap() + "\n").collect()
    };
    assert_eq!(log(&suite), log(&suite));
}

#[test]
fn straddling_pulse_shifts_the_threshold_as_traced() {
    // calibration is 0,1,... with samples 97..99 replaced by 10
    let suite = suite();
    let script = suite.scripts.iter().find(|s| s.name.contains("straddling")).unwrap();
    let xs = suite.render(script);
    let cal = calibrate_offline(&xs[..100], 2.0).unwrap();
    let (mu, var) = (0.78, 3.48 - 0.78 * 0.78);
    assert!((cal.mu - mu).abs() < 1e-12);
    assert!((cal.threshold - (mu + 2.0 * f64::sqrt(var))).abs() < 1e-9);
    assert!(xs[99] > cal.threshold, "the sample before the first live one is already above");
}

#[test]
fn malformed_suites_are_rejected() {
    assert!(ScriptSuite::from_json("{").is_err());
    let mut bad = suite();
    bad.scripts[0].pulses[0].at = bad.scripts[0].len;
    assert!(ScriptSuite::from_json(&serde_json::to_string(&bad).unwrap()).is_err());
    let mut bad = suite();
    bad.calibration_pattern.clear();
    assert!(ScriptSuite::from_json(&serde_json::to_string(&bad).unwrap()).is_err());
}

#[test]
fn blink_demo_yields_two_double_blinks() {
    let trial = blink_demo_stream(7).unwrap();
    let events = replay(&trial, StreamConfig::single_electrode(), EngineMode::BlinkOnly, None).unwrap();
    assert_eq!(events, vec![ArtifactEvent::blink(2).at(23457), ArtifactEvent::blink(2).at(27458)]);
}

#[test]
fn gesture_demo_yields_double_blink_and_double_clench() {
    let trial = gesture_demo_stream(7).unwrap();
    let bank = gen_templates(&GenSpec { sample_rate: 500.0, ..GenSpec::default() }).unwrap();
    let events = replay(&trial, StreamConfig::four_electrode(), EngineMode::BlinkAndJaw, Some(&bank)).unwrap();
    let kinds: Vec<EventKind> = events.iter().map(|e| e.kind.clone()).collect();
    assert_eq!(kinds, vec![EventKind::Blink { count: 2 }, EventKind::JawClench { count: 2 }]);
    assert!(events.iter().all(|e| e.confidence.is_some() && !e.padded));
    assert!(events[0].t_ms >= 22_700 && events[1].t_ms >= 26_900);
}

#[test]
fn chunk_cut_by_end_of_stream_is_padded() {
    let trial = gesture_demo_stream(7).unwrap();
    // stop 100 ms after the second clench begins
    let cut = warpbci_core::EegTrial::new(trial.sample_rate(), (0..trial.channels()).map(|c| trial.channel(c)[..13_500].to_vec()).collect()).unwrap();
    let bank = gen_templates(&GenSpec { sample_rate: 500.0, ..GenSpec::default() }).unwrap();
    let events = replay(&cut, StreamConfig::four_electrode(), EngineMode::BlinkAndJaw, Some(&bank)).unwrap();
    let last = events.last().unwrap();
    assert!(last.padded, "{events:?}");
}

fn stream_strategy() -> impl Strategy<Value = Vec<f64>> {
    (prop::collection::vec(0.0f64..1.0, 300..700), prop::collection::vec((100usize..600, 1usize..30, 2.0f64..20.0), 0..8))
        .prop_map(|(mut xs, bursts)| {
            for (at, w, h) in bursts {
                let end = (at + w).min(xs.len());
                xs[at.min(end)..end].iter_mut().for_each(|x| *x += h);
            }
            xs
        })
}

fn smoothed_config() -> StreamConfig {
    StreamConfig { smoothing: 3, ..traced() }
}

proptest! {
    #[test]
    fn power_of_two_scaling_leaves_events_unchanged(xs in stream_strategy(), k in -6i32..6) {
        let c = 2f64.powi(k);
        let scaled: Vec<f64> = xs.iter().map(|x| x * c).collect();
        prop_assert_eq!(run(smoothed_config(), &xs), run(smoothed_config(), &scaled));
    }

    #[test]
    fn scaling_scripted_pulses_leaves_events_unchanged(c in 0.01f64..1000.0) {
        let suite = suite();
        // an exact tie with the threshold only survives exact (power-of-two) scaling
        let cal = calibrate_offline(&suite.render(&suite.scripts[0])[..100], 2.0).unwrap();
        for script in suite.scripts.iter().filter(|s| s.pulses.iter().all(|p| p.height != cal.threshold)) {
            let xs: Vec<f64> = suite.render(script).iter().map(|x| x * c).collect();
            prop_assert_eq!(&run(suite.config, &xs), &script.expected, "{}", script.name);
        }
    }

    #[test]
    fn timing_invariants(xs in stream_strategy()) {
        let config = smoothed_config();
        let events = run(config, &xs);
        let cal_ms = (config.calibration_s * 1000.0) as u64;
        prop_assert!(events.iter().all(|e| e.t_ms >= cal_ms + config.blink_window_ms as u64));
        prop_assert!(events.windows(2).all(|w| w[0].t_ms <= w[1].t_ms));
        prop_assert!(events.windows(2).all(|w| w[1].t_ms - w[0].t_ms >= config.blink_window_ms as u64));
        let counted = |e: &ArtifactEvent| matches!(e.kind, EventKind::Blink { count } if count >= 1);
        prop_assert!(events.iter().all(counted));
        prop_assert_eq!(run(config, &xs), events);
    }

    #[test]
    fn engine_moved_across_threads_mid_stream(xs in stream_strategy(), split in 1usize..300) {
        let config = StreamConfig { feature: StreamFeature::MeanEnergy, ..smoothed_config() };
        let frames: Vec<[f64; 2]> = xs.iter().map(|&x| [x, -x]).collect();
        let whole = {
            let mut e = OnlineEngine::new(config, EngineMode::BlinkOnly, None).unwrap();
            frames.iter().flat_map(|f| e.feed(f).unwrap()).collect::<Vec<_>>()
        };
        let (head, tail) = frames.split_at(split.min(frames.len()));
        let mut e = OnlineEngine::new(config, EngineMode::BlinkOnly, None).unwrap();
        let mut events: Vec<ArtifactEvent> = head.iter().flat_map(|f| e.feed(f).unwrap()).collect();
        let tail = tail.to_vec();
        events.extend(std::thread::spawn(move || tail.iter().flat_map(|f| e.feed(f).unwrap()).collect::<Vec<_>>()).join().unwrap());
        prop_assert_eq!(whole, events);
    }
}
