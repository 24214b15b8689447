//! Trial containers and the preprocessing chain.
//!
//! The offline pipeline is: band-pass + notch filtering, per-channel mean
//! centering, epoching, and finally the *artifact signal*: per-sample energy
//! averaged across channels and smoothed by a trailing moving average.

mod filter;
mod io;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub use filter::{bandpass_notch, FilterSpec};
pub use io::{load_trials, parse_trials, save_trials, write_trials, TrialFormat};

/// Smoothing duration of the artifact signal, in seconds.
pub const ARTIFACT_SMOOTH_S: f64 = 0.4;

/// Artifact classes produced by voluntary muscular movements.
///
/// `JawClench` is the four-electrode name of the jaw artifact; it is kept
/// distinct so streaming templates and offline tables can both be labeled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ArtifactClass {
    JawMovement,
    HeadNod,
    HeadTurn,
    EyeBlink,
    JawClench,
}

impl ArtifactClass {
    pub const ALL: [ArtifactClass; 5] = [
        ArtifactClass::JawMovement,
        ArtifactClass::HeadNod,
        ArtifactClass::HeadTurn,
        ArtifactClass::EyeBlink,
        ArtifactClass::JawClench,
    ];

    /// The four classes of the 128-electrode recordings.
    pub const OFFLINE: [ArtifactClass; 4] = [
        ArtifactClass::JawMovement,
        ArtifactClass::HeadNod,
        ArtifactClass::HeadTurn,
        ArtifactClass::EyeBlink,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ArtifactClass::JawMovement => "JawMovement",
            ArtifactClass::HeadNod => "HeadNod",
            ArtifactClass::HeadTurn => "HeadTurn",
            ArtifactClass::EyeBlink => "EyeBlink",
            ArtifactClass::JawClench => "JawClench",
        }
    }

    /// True for both jaw spellings.
    pub fn is_jaw(self) -> bool {
        matches!(self, ArtifactClass::JawMovement | ArtifactClass::JawClench)
    }
}

impl fmt::Display for ArtifactClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ArtifactClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let folded: String = s
            .chars()
            .filter(|c| *c != '_' && *c != '-')
            .flat_map(char::to_lowercase)
            .collect();
        ArtifactClass::ALL
            .into_iter()
            .find(|c| c.name().to_lowercase() == folded)
            .ok_or_else(|| Error::Arg(format!("unknown artifact class {s:?}")))
    }
}

/// Ground-truth artifact window, half-open `[start, end)` in samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Annotation {
    pub start: usize,
    pub end: usize,
    pub class: ArtifactClass,
}

impl Annotation {
    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }
}

/// A multi-channel EEG recording or epoch.
///
/// Samples are stored channel-major. All channels have the same nonzero
/// length, and every annotation lies inside the recording.
#[derive(Debug, Clone, PartialEq)]
pub struct EegTrial {
    sample_rate: f64,
    data: Vec<Vec<f64>>,
    label: Option<ArtifactClass>,
    subject_id: String,
    session_id: String,
    annotations: Vec<Annotation>,
}

fn check_id(kind: &str, id: &str) -> Result<()> {
    if id.is_empty() || id.chars().any(char::is_whitespace) {
        return Err(Error::InvalidTrial(format!(
            "{kind} id {id:?} must be nonempty and free of whitespace"
        )));
    }
    Ok(())
}

impl EegTrial {
    pub fn new(sample_rate: f64, data: Vec<Vec<f64>>) -> Result<Self> {
        if !(sample_rate.is_finite() && sample_rate > 0.0) {
            return Err(Error::InvalidTrial(format!("sample rate {sample_rate} must be positive")));
        }
        let len = data.first().map(Vec::len).unwrap_or(0);
        if data.is_empty() || len == 0 {
            return Err(Error::InvalidTrial("trial needs at least one channel and one sample".into()));
        }
        if let Some((i, ch)) = data.iter().enumerate().find(|(_, ch)| ch.len() != len) {
            return Err(Error::InvalidTrial(format!(
                "channel {i} has {} samples, channel 0 has {len}",
                ch.len()
            )));
        }
        Ok(EegTrial {
            sample_rate,
            data,
            label: None,
            subject_id: "s0".into(),
            session_id: "0".into(),
            annotations: Vec::new(),
        })
    }

    pub fn with_label(mut self, label: Option<ArtifactClass>) -> Self {
        self.label = label;
        self
    }

    pub fn with_ids(mut self, subject_id: impl Into<String>, session_id: impl Into<String>) -> Result<Self> {
        let (subject_id, session_id) = (subject_id.into(), session_id.into());
        check_id("subject", &subject_id)?;
        check_id("session", &session_id)?;
        self.subject_id = subject_id;
        self.session_id = session_id;
        Ok(self)
    }

    pub fn with_annotations(mut self, annotations: Vec<Annotation>) -> Result<Self> {
        let len = self.len();
        if let Some(a) = annotations.iter().find(|a| a.start >= a.end || a.end > len) {
            return Err(Error::InvalidTrial(format!(
                "annotation [{}, {}) outside trial of length {len}",
                a.start, a.end
            )));
        }
        self.annotations = annotations;
        Ok(self)
    }

    pub fn sample_rate(&self) -> f64 {
        self.sample_rate
    }

    pub fn channels(&self) -> usize {
        self.data.len()
    }

    /// Samples per channel.
    pub fn len(&self) -> usize {
        self.data[0].len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn duration_s(&self) -> f64 {
        self.len() as f64 / self.sample_rate
    }

    pub fn channel(&self, i: usize) -> &[f64] {
        &self.data[i]
    }

    pub fn data(&self) -> &[Vec<f64>] {
        &self.data
    }

    /// Values of every channel at sample `t`.
    pub fn frame(&self, t: usize) -> Vec<f64> {
        self.data.iter().map(|ch| ch[t]).collect()
    }

    pub fn label(&self) -> Option<ArtifactClass> {
        self.label
    }

    pub fn subject_id(&self) -> &str {
        &self.subject_id
    }

    pub fn session_id(&self) -> &str {
        &self.session_id
    }

    pub fn annotations(&self) -> &[Annotation] {
        &self.annotations
    }

    /// Same metadata, new per-channel data of identical shape.
    fn map_channels(&self, f: impl Fn(&[f64]) -> Vec<f64>) -> EegTrial {
        EegTrial {
            data: self.data.iter().map(|ch| f(ch)).collect(),
            ..self.clone()
        }
    }
}

/// Zero-phase band-pass and notch filtering followed by mean centering.
pub fn preprocess(trial: &EegTrial, spec: &FilterSpec) -> Result<EegTrial> {
    Ok(mean_center(&bandpass_notch(trial, spec)?))
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Subtracts each channel's sample mean.
pub fn mean_center(trial: &EegTrial) -> EegTrial {
    trial.map_channels(|ch| {
        let mu = mean(ch);
        let mut out: Vec<f64> = ch.iter().map(|x| x - mu).collect();
        // second pass removes the rounding residue of the first
        let residue = mean(&out);
        if residue != 0.0 {
            out.iter_mut().for_each(|x| *x -= residue);
        }
        out
    })
}

/// Cuts `round(duration_s * rate)` samples starting at `start_sample`.
///
/// Annotations are clipped to the window and shifted; those falling
/// entirely outside are dropped.
pub fn epoch(trial: &EegTrial, start_sample: usize, duration_s: f64) -> Result<EegTrial> {
    if !(duration_s.is_finite() && duration_s > 0.0) {
        return Err(Error::Range(format!("epoch duration {duration_s} s must be positive")));
    }
    let len = (duration_s * trial.sample_rate).round() as usize;
    if len == 0 {
        return Err(Error::Range(format!(
            "epoch of {duration_s} s is shorter than one sample at {} Hz",
            trial.sample_rate
        )));
    }
    let end = start_sample
        .checked_add(len)
        .filter(|&e| e <= trial.len())
        .ok_or_else(|| {
            Error::Range(format!(
                "window [{start_sample}, {start_sample}+{len}) exceeds trial length {}",
                trial.len()
            ))
        })?;
    let annotations = trial
        .annotations
        .iter()
        .filter_map(|a| {
            let s = a.start.max(start_sample);
            let e = a.end.min(end);
            (s < e).then(|| Annotation {
                start: s - start_sample,
                end: e - start_sample,
                class: a.class,
            })
        })
        .collect();
    Ok(EegTrial {
        data: trial.data.iter().map(|ch| ch[start_sample..end].to_vec()).collect(),
        annotations,
        ..trial.clone()
    })
}

/// Trailing moving average with a prefix policy.
///
/// Output `n` is the mean of the last `min(m, n + 1)` inputs. Each window is
/// summed directly, oldest sample first, so the filter is exactly monotone
/// in its input.
#[derive(Debug, Clone)]
pub struct MovingAverage {
    window: std::collections::VecDeque<f64>,
    m: usize,
}

impl MovingAverage {
    pub fn new(m: usize) -> Result<Self> {
        if m == 0 {
            return Err(Error::Arg("moving average window must be at least 1".into()));
        }
        Ok(MovingAverage {
            window: std::collections::VecDeque::with_capacity(m),
            m,
        })
    }

    pub fn push(&mut self, x: f64) -> f64 {
        if self.window.len() == self.m {
            self.window.pop_front();
        }
        self.window.push_back(x);
        self.window.iter().sum::<f64>() / self.window.len() as f64
    }
}

pub fn moving_average(samples: &[f64], m: usize) -> Result<Vec<f64>> {
    let mut ma = MovingAverage::new(m)?;
    Ok(samples.iter().map(|&x| ma.push(x)).collect())
}

/// Default artifact-signal smoothing length: 0.4 s worth of samples.
pub fn default_smooth_len(sample_rate: f64) -> usize {
    ((ARTIFACT_SMOOTH_S * sample_rate).round() as usize).max(1)
}

/// Smoothed mean energy across channels: the artifact's 1-D signature.
#[derive(Debug, Clone, PartialEq)]
pub struct ArtifactSignal {
    samples: Vec<f64>,
    sample_rate: f64,
    source_window: (usize, usize),
}

impl ArtifactSignal {
    pub fn new(samples: Vec<f64>, sample_rate: f64) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::EmptyInput("artifact signal has no samples".into()));
        }
        if let Some(x) = samples.iter().find(|x| !(x.is_finite() && **x >= 0.0)) {
            return Err(Error::Arg(format!("artifact signal sample {x} is not a finite energy")));
        }
        let n = samples.len();
        Ok(ArtifactSignal {
            samples,
            sample_rate,
            source_window: (0, n),
        })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn sample_rate(&self) -> f64 {
        self.sample_rate
    }

    /// Half-open window of the parent trial this signal covers.
    pub fn source_window(&self) -> (usize, usize) {
        self.source_window
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Sub-signal over `[start, end)`, relative to this signal.
    pub fn slice(&self, start: usize, end: usize) -> Result<ArtifactSignal> {
        if start >= end || end > self.samples.len() {
            return Err(Error::Range(format!(
                "slice [{start}, {end}) of artifact signal of length {}",
                self.samples.len()
            )));
        }
        Ok(ArtifactSignal {
            samples: self.samples[start..end].to_vec(),
            sample_rate: self.sample_rate,
            source_window: (self.source_window.0 + start, self.source_window.0 + end),
        })
    }
}

/// Per-sample mean of squared amplitudes across channels.
pub fn mean_energy(trial: &EegTrial) -> Vec<f64> {
    let k = trial.channels() as f64;
    (0..trial.len())
        .map(|t| trial.data.iter().map(|ch| ch[t] * ch[t]).sum::<f64>() / k)
        .collect()
}

/// Builds the artifact signal of `epoch`. `smooth_len` defaults to 0.4 s.
pub fn artifact_signal(epoch: &EegTrial, smooth_len: Option<usize>) -> Result<ArtifactSignal> {
    let m = smooth_len.unwrap_or_else(|| default_smooth_len(epoch.sample_rate));
    let smoothed = moving_average(&mean_energy(epoch), m)?;
    ArtifactSignal::new(smoothed, epoch.sample_rate)
}
