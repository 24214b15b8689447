//! Energy-threshold artifact detection.
//!
//! A sample of the artifact signal is "active" when it lies strictly above
//! `mean + eta * sigma` of the signal (population sigma). In an epoch the
//! first and last active samples bound the artifact; in a continuous
//! recording maximal active runs are events, merged across short gaps.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::signal::{artifact_signal, Annotation, ArtifactSignal, EegTrial};
use crate::stats::RunningMoments;
use crate::{Error, Result};

/// Threshold hyper-parameter `eta`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdSpec {
    pub eta: f64,
}

impl ThresholdSpec {
    /// Tuned for fixed 3 s epochs.
    pub const EPOCHED: ThresholdSpec = ThresholdSpec { eta: -1.0 };
    /// Tuned for whole recordings.
    pub const CONTINUOUS: ThresholdSpec = ThresholdSpec { eta: 0.8 };

    pub fn new(eta: f64) -> Result<Self> {
        if !eta.is_finite() {
            return Err(Error::Arg(format!("eta {eta} must be finite")));
        }
        Ok(ThresholdSpec { eta })
    }
}

/// An artifact located in a signal; `offset` is inclusive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectedEvent {
    pub onset: usize,
    pub offset: usize,
    pub peak_energy: f64,
    pub trial: Option<String>,
}

impl DetectedEvent {
    pub fn len(&self) -> usize {
        self.offset - self.onset + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

pub fn threshold(sig: &ArtifactSignal, spec: ThresholdSpec) -> f64 {
    let m: RunningMoments = sig.samples().iter().copied().collect();
    m.mean() + spec.eta * m.population_std()
}

pub fn detect_in_epoch(sig: &ArtifactSignal, spec: ThresholdSpec) -> Option<DetectedEvent> {
    let th = threshold(sig, spec);
    let xs = sig.samples();
    let onset = xs.iter().position(|&x| x > th)?;
    let offset = xs.iter().rposition(|&x| x > th)?;
    let peak_energy = xs[onset..=offset].iter().copied().fold(f64::MIN, f64::max);
    Some(DetectedEvent { onset, offset, peak_energy, trial: None })
}

/// Parameters of whole-recording detection.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContinuousConfig {
    pub threshold: ThresholdSpec,
    /// Artifact-signal smoothing; `None` means 0.4 s at the trial's rate.
    pub smooth_len: Option<usize>,
    /// Active runs separated by fewer samples than this many seconds merge.
    pub merge_gap_s: f64,
}

impl Default for ContinuousConfig {
    fn default() -> Self {
        ContinuousConfig {
            threshold: ThresholdSpec::CONTINUOUS,
            smooth_len: None,
            merge_gap_s: 0.2,
        }
    }
}

fn trial_tag(trial: &EegTrial) -> String {
    format!("{}/{}", trial.subject_id(), trial.session_id())
}

/// Maximal runs strictly above `th`, merging runs whose gap is `< merge_gap`.
fn active_runs(xs: &[f64], th: f64, merge_gap: usize) -> Vec<(usize, usize, f64)> {
    let mut runs: Vec<(usize, usize, f64)> = Vec::new();
    let mut i = 0;
    while i < xs.len() {
        if xs[i] <= th {
            i += 1;
            continue;
        }
        let start = i;
        let mut peak = xs[i];
        while i < xs.len() && xs[i] > th {
            peak = peak.max(xs[i]);
            i += 1;
        }
        let end = i - 1;
        match runs.last_mut() {
            Some(last) if start - last.1 - 1 < merge_gap => {
                last.1 = end;
                last.2 = last.2.max(peak);
            }
            _ => runs.push((start, end, peak)),
        }
    }
    runs
}

fn events_from_signal(sig: &ArtifactSignal, trial: &EegTrial, spec: ThresholdSpec, merge_gap_s: f64) -> Vec<DetectedEvent> {
    let th = threshold(sig, spec);
    let gap = (merge_gap_s * sig.sample_rate()).round() as usize;
    let tag = trial_tag(trial);
    active_runs(sig.samples(), th, gap)
        .into_iter()
        .map(|(onset, offset, peak_energy)| DetectedEvent {
            onset,
            offset,
            peak_energy,
            trial: Some(tag.clone()),
        })
        .collect()
}

pub fn detect_continuous(trial: &EegTrial, config: &ContinuousConfig) -> Result<Vec<DetectedEvent>> {
    let sig = artifact_signal(trial, config.smooth_len)?;
    Ok(events_from_signal(&sig, trial, config.threshold, config.merge_gap_s))
}

/// Detection outcome counts.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchCounts {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl MatchCounts {
    /// `2tp / (2tp + fp + fn)`; 1.0 when there is nothing to find and nothing found.
    pub fn f1(&self) -> f64 {
        let denom = 2 * self.tp + self.fp + self.fn_;
        if denom == 0 {
            1.0
        } else {
            2.0 * self.tp as f64 / denom as f64
        }
    }
}

impl std::ops::AddAssign for MatchCounts {
    fn add_assign(&mut self, o: MatchCounts) {
        self.tp += o.tp;
        self.fp += o.fp;
        self.fn_ += o.fn_;
    }
}

/// Fraction of the truth window covered by the detection.
fn truth_coverage(d: &DetectedEvent, t: &Annotation) -> f64 {
    let lo = d.onset.max(t.start);
    let hi = (d.offset + 1).min(t.end);
    hi.saturating_sub(lo) as f64 / t.len() as f64
}

/// Greedy matching: detections in onset order take the earliest unmatched
/// truth window they cover by at least `overlap_min`.
pub fn match_events(detected: &[DetectedEvent], truth: &[Annotation], overlap_min: f64) -> Result<MatchCounts> {
    if !(overlap_min > 0.0 && overlap_min <= 1.0) {
        return Err(Error::Arg(format!("overlap_min {overlap_min} must lie in (0, 1]")));
    }
    let mut order: Vec<&DetectedEvent> = detected.iter().collect();
    order.sort_by_key(|d| (d.onset, d.offset));
    let mut truths: Vec<&Annotation> = truth.iter().collect();
    truths.sort_by_key(|a| (a.start, a.end));

    let mut taken = vec![false; truths.len()];
    let mut counts = MatchCounts::default();
    for d in order {
        let hit = truths
            .iter()
            .enumerate()
            .find(|(i, t)| !taken[*i] && truth_coverage(d, t) >= overlap_min);
        match hit {
            Some((i, _)) => {
                taken[i] = true;
                counts.tp += 1;
            }
            None => counts.fp += 1,
        }
    }
    counts.fn_ = taken.iter().filter(|t| !**t).count();
    Ok(counts)
}

/// Default truth-coverage fraction for a true positive.
pub const OVERLAP_MIN: f64 = 0.6;

/// One row of an eta sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub eta: f64,
    pub counts: MatchCounts,
    pub f1: f64,
}

/// Aggregated F1 per `eta` over all trials, sorted by `eta`.
///
/// `config.threshold` is ignored; every eta of `etas` is used instead.
pub fn f1_sweep(trials: &[EegTrial], etas: &[f64], config: &ContinuousConfig, overlap_min: f64) -> Result<Vec<SweepRow>> {
    if trials.is_empty() || etas.is_empty() {
        return Err(Error::EmptyInput("f1 sweep needs trials and eta values".into()));
    }
    if trials.iter().all(|t| t.annotations().is_empty()) {
        return Err(Error::EmptyInput("no trial carries ground-truth annotations".into()));
    }
    let mut etas: Vec<ThresholdSpec> = etas.iter().map(|&e| ThresholdSpec::new(e)).collect::<Result<_>>()?;
    etas.sort_by(|a, b| a.eta.total_cmp(&b.eta));

    let per_trial: Vec<Vec<MatchCounts>> = trials
        .par_iter()
        .map(|trial| {
            let sig = artifact_signal(trial, config.smooth_len)?;
            etas.iter()
                .map(|&spec| {
                    let events = events_from_signal(&sig, trial, spec, config.merge_gap_s);
                    match_events(&events, trial.annotations(), overlap_min)
                })
                .collect()
        })
        .collect::<Result<_>>()?;

    Ok(etas
        .iter()
        .enumerate()
        .map(|(k, spec)| {
            let mut counts = MatchCounts::default();
            for row in &per_trial {
                counts += row[k];
            }
            SweepRow { eta: spec.eta, counts, f1: counts.f1() }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ArtifactClass;

    fn sig(xs: &[f64]) -> ArtifactSignal {
        ArtifactSignal::new(xs.to_vec(), 250.0).unwrap()
    }

    fn ev(onset: usize, offset: usize) -> DetectedEvent {
        DetectedEvent { onset, offset, peak_energy: 1.0, trial: None }
    }

    fn ann(start: usize, end: usize) -> Annotation {
        Annotation { start, end, class: ArtifactClass::EyeBlink }
    }

    #[test]
    fn threshold_examples() {
        // mean 10, population sigma 2
        let s = sig(&[8.0, 12.0, 8.0, 12.0]);
        assert_eq!(threshold(&s, ThresholdSpec::EPOCHED), 8.0);
        let c = sig(&[3.25; 7]);
        for eta in [-1.0, 0.0, 0.8, 5.0] {
            assert_eq!(threshold(&c, ThresholdSpec { eta }), 3.25);
        }
    }

    #[test]
    fn epoch_detection_examples() {
        let s = sig(&[0.0, 0.0, 5.0, 6.0, 5.0, 0.0, 0.0]);
        // mean 16/7, sigma ~2.6; eta chosen so the threshold lands near 3
        let th_eta = (3.0 - 16.0 / 7.0) / {
            let m: RunningMoments = s.samples().iter().copied().collect();
            m.population_std()
        };
        let e = detect_in_epoch(&s, ThresholdSpec { eta: th_eta }).unwrap();
        assert_eq!((e.onset, e.offset), (2, 4));
        assert_eq!(e.peak_energy, 6.0);

        assert!(detect_in_epoch(&sig(&[1.0; 5]), ThresholdSpec { eta: 0.0 }).is_none());

        let all = detect_in_epoch(&sig(&[1.0, 2.0, 3.0]), ThresholdSpec { eta: -10.0 }).unwrap();
        assert_eq!((all.onset, all.offset), (0, 2));
    }

    #[test]
    fn runs_merge_across_short_gaps() {
        let xs = [0.0, 5.0, 5.0, 0.0, 5.0, 0.0, 0.0, 0.0, 5.0];
        assert_eq!(active_runs(&xs, 1.0, 0), vec![(1, 2, 5.0), (4, 4, 5.0), (8, 8, 5.0)]);
        assert_eq!(active_runs(&xs, 1.0, 2), vec![(1, 4, 5.0), (8, 8, 5.0)]);
        assert_eq!(active_runs(&xs, 1.0, 4), vec![(1, 8, 5.0)]);
        assert!(active_runs(&[0.0; 4], 0.0, 3).is_empty());
    }

    #[test]
    fn matching_examples() {
        let exact = match_events(&[ev(10, 19)], &[ann(10, 20)], OVERLAP_MIN).unwrap();
        assert_eq!(exact, MatchCounts { tp: 1, fp: 0, fn_: 0 });

        let half = match_events(&[ev(10, 14)], &[ann(10, 20)], OVERLAP_MIN).unwrap();
        assert_eq!(half, MatchCounts { tp: 0, fp: 1, fn_: 1 });

        let two = match_events(&[ev(0, 9)], &[ann(0, 10), ann(50, 60)], OVERLAP_MIN).unwrap();
        assert_eq!(two, MatchCounts { tp: 1, fp: 0, fn_: 1 });

        // one detection spanning two truths matches only the earliest
        let wide = match_events(&[ev(0, 59)], &[ann(50, 60), ann(0, 10)], OVERLAP_MIN).unwrap();
        assert_eq!(wide, MatchCounts { tp: 1, fp: 0, fn_: 1 });

        assert!(match_events(&[], &[], 0.0).is_err());
        assert!(match_events(&[], &[], 1.5).is_err());
    }

    #[test]
    fn f1_formula() {
        assert_eq!(MatchCounts { tp: 3, fp: 1, fn_: 1 }.f1(), 0.75);
        assert_eq!(MatchCounts { tp: 0, fp: 0, fn_: 4 }.f1(), 0.0);
    }

    #[test]
    fn sweep_rejects_empty_inputs() {
        let t = EegTrial::new(250.0, vec![vec![0.0; 10]]).unwrap();
        let cfg = ContinuousConfig::default();
        assert!(matches!(f1_sweep(&[], &[0.8], &cfg, OVERLAP_MIN), Err(Error::EmptyInput(_))));
        assert!(matches!(f1_sweep(&[t], &[0.8], &cfg, OVERLAP_MIN), Err(Error::EmptyInput(_))));
    }

    #[test]
    fn flat_baseline_has_no_events() {
        let t = EegTrial::new(250.0, vec![vec![2.0; 2500]; 2]).unwrap();
        assert!(detect_continuous(&t, &ContinuousConfig::default()).unwrap().is_empty());
    }
}
