use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use warpbci_core::classify::{featurize, FeatureConfig};
use warpbci_core::synth::{gen_dataset, gen_stream, random_schedule, GenSpec};
use warpbci_core::warp::{distance, Method, WarpVariant};
use warpbci_core::ArtifactClass;

#[test]
fn default_classes_are_separated() {
    let trials = gen_dataset(&GenSpec::default(), 1, 1, 12, &ArtifactClass::OFFLINE).unwrap();
    let feats: Vec<_> = trials.iter().map(|t| featurize(t, &FeatureConfig::default()).unwrap()).collect();
    let labels: Vec<_> = trials.iter().map(|t| t.label().unwrap()).collect();
    let v = WarpVariant::new(Method::NormalizedDtw);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let (mut good, samples) = (0, 400);
    for _ in 0..samples {
        let a = rng.random_range(0..trials.len());
        let same: Vec<usize> = (0..trials.len()).filter(|&i| i != a && labels[i] == labels[a]).collect();
        let other: Vec<usize> = (0..trials.len()).filter(|&i| labels[i] != labels[a]).collect();
        let b = same[rng.random_range(0..same.len())];
        let c = other[rng.random_range(0..other.len())];
        let intra = distance(&feats[a], &feats[b], &v).unwrap().distance;
        let inter = distance(&feats[a], &feats[c], &v).unwrap().distance;
        good += usize::from(intra < inter);
    }
    assert!(good as f64 >= 0.95 * samples as f64, "{good}/{samples}");
}

#[test]
fn annotations_stay_inside_their_trials() {
    for seed in 0..5 {
        let spec = GenSpec { seed, ..GenSpec::default() };
        for t in gen_dataset(&spec, 2, 2, 3, &ArtifactClass::ALL).unwrap() {
            assert!(t.annotations().iter().all(|a| a.start < a.end && a.end <= t.len()));
            assert_eq!(t.annotations()[0].class, t.label().unwrap());
        }
        let schedule = random_schedule(&spec, 60.0, 8, &ArtifactClass::ALL, seed).unwrap();
        let s = gen_stream(&spec, 60.0, &schedule).unwrap();
        assert_eq!(s.annotations().len(), 8);
        assert!(s.annotations().iter().all(|a| a.end <= s.len()));
        assert!(s.annotations().windows(2).all(|w| w[0].end <= w[1].start));
    }
}

#[test]
fn subjects_and_sessions_are_distinct_and_deterministic() {
    let spec = GenSpec::default();
    let a = gen_dataset(&spec, 2, 2, 1, &ArtifactClass::OFFLINE).unwrap();
    assert_eq!(a, gen_dataset(&spec, 2, 2, 1, &ArtifactClass::OFFLINE).unwrap());
    let ids: Vec<(String, String)> = a.iter().map(|t| (t.subject_id().into(), t.session_id().into())).collect();
    assert_eq!(ids.iter().collect::<std::collections::BTreeSet<_>>().len(), 4);
    assert_ne!(a[0].data(), a[4].data());
}

#[test]
fn bad_specs_are_rejected() {
    let bad = GenSpec { channels: 0, ..GenSpec::default() };
    assert!(gen_dataset(&bad, 1, 1, 1, &ArtifactClass::OFFLINE).is_err());
    let mut bad = GenSpec::default();
    bad.blink.duration_ms = (0.0, 100.0);
    assert!(gen_stream(&bad, 10.0, &[]).is_err());
}
