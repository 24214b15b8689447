//! Streaming artifact engine.
//!
//! Frames arrive one at a time. Each frame is reduced to a scalar (the
//! amplitude for single-electrode blink counting, or the mean energy across
//! channels), smoothed by a trailing moving average, and the first
//! `calibration_s` seconds fix a personal threshold `P_t = mu + 2 sigma` of
//! the smoothed values.
//!
//! After calibration, every upward crossing of `P_t` (previous value at or
//! below, current value above) counts. In blink mode each crossing adds one
//! blink and restarts a 1000 ms window; when the window lapses without a
//! crossing the accumulated count is emitted. In blink-and-jaw mode each
//! crossing instead captures 500 ms of the smoothed signal, classifies it
//! against a template bank with normalized DTW, and counts per class, each
//! class with its own window.
//!
//! Time is sample-count driven: the window is `rate` samples per second and
//! timestamps are `floor(index * 1000 / rate)` milliseconds.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::signal::{moving_average, ArtifactClass, EegTrial, MovingAverage};
use crate::stats::RunningMoments;
use crate::warp::{distance, Method, Series, WarpVariant};
use crate::{Error, Result};

/// How a multi-channel frame becomes the detector's scalar.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StreamFeature {
    /// Mean amplitude across channels.
    Amplitude,
    /// Mean squared amplitude across channels.
    MeanEnergy,
}

impl StreamFeature {
    fn reduce(self, frame: &[f64]) -> f64 {
        let k = frame.len() as f64;
        match self {
            StreamFeature::Amplitude => frame.iter().sum::<f64>() / k,
            StreamFeature::MeanEnergy => frame.iter().map(|x| x * x).sum::<f64>() / k,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StreamConfig {
    pub sample_rate: f64,
    /// Moving-average length in samples.
    pub smoothing: usize,
    pub calibration_s: f64,
    pub blink_window_ms: f64,
    pub chunk_ms: f64,
    pub sigma_mult: f64,
    pub feature: StreamFeature,
}

impl StreamConfig {
    /// Single frontal electrode at 512 Hz, counting blinks on amplitude.
    pub fn single_electrode() -> Self {
        StreamConfig {
            sample_rate: 512.0,
            smoothing: 50,
            calibration_s: 20.0,
            blink_window_ms: 1000.0,
            chunk_ms: 500.0,
            sigma_mult: 2.0,
            feature: StreamFeature::Amplitude,
        }
    }

    /// Four electrodes at 500 Hz, detecting on mean energy.
    pub fn four_electrode() -> Self {
        StreamConfig {
            sample_rate: 500.0,
            feature: StreamFeature::MeanEnergy,
            ..StreamConfig::single_electrode()
        }
    }

    fn ms_to_samples(&self, ms: f64) -> usize {
        (ms * self.sample_rate / 1000.0).round() as usize
    }

    pub fn calibration_samples(&self) -> usize {
        (self.calibration_s * self.sample_rate).round() as usize
    }

    pub fn window_samples(&self) -> usize {
        self.ms_to_samples(self.blink_window_ms)
    }

    pub fn chunk_samples(&self) -> usize {
        self.ms_to_samples(self.chunk_ms)
    }

    pub fn t_ms(&self, index: usize) -> u64 {
        (index as f64 * 1000.0 / self.sample_rate).floor() as u64
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("sample_rate", self.sample_rate),
            ("calibration_s", self.calibration_s),
            ("blink_window_ms", self.blink_window_ms),
            ("chunk_ms", self.chunk_ms),
            ("sigma_mult", self.sigma_mult),
        ];
        if let Some((name, v)) = positive.iter().find(|(_, v)| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::Arg(format!("{name} = {v} must be positive")));
        }
        if self.smoothing == 0 {
            return Err(Error::Arg("smoothing must be at least 1 sample".into()));
        }
        if self.calibration_samples() < 2 {
            return Err(Error::Arg("calibration must cover at least 2 samples".into()));
        }
        if self.window_samples() == 0 || self.chunk_samples() == 0 {
            return Err(Error::Arg("blink window and chunk must each span at least one sample".into()));
        }
        Ok(())
    }
}

impl Default for StreamConfig {
    fn default() -> Self {
        StreamConfig::single_electrode()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationState {
    pub mu: f64,
    pub sigma: f64,
    /// `mu + sigma_mult * sigma`.
    pub threshold: f64,
    pub samples_seen: usize,
}

impl CalibrationState {
    fn from_moments(m: &RunningMoments, sigma_mult: f64) -> Self {
        let (mu, sigma) = (m.mean(), m.population_std());
        CalibrationState {
            mu,
            sigma,
            threshold: mu + sigma_mult * sigma,
            samples_seen: m.count() as usize,
        }
    }
}

/// Personal threshold from an already smoothed calibration sequence.
pub fn calibrate_offline(smoothed: &[f64], sigma_mult: f64) -> Result<CalibrationState> {
    if smoothed.len() < 2 {
        return Err(Error::Arg("calibration needs at least 2 samples".into()));
    }
    let m: RunningMoments = smoothed.iter().copied().collect();
    Ok(CalibrationState::from_moments(&m, sigma_mult))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum EventKind {
    Blink { count: u32 },
    JawClench { count: u32 },
    Unknown,
}

/// A counted gesture, serialized as `{"t_ms":..,"kind":"Blink","count":2}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArtifactEvent {
    #[serde(default)]
    pub t_ms: u64,
    #[serde(flatten)]
    pub kind: EventKind,
    /// Smallest nearest-template margin among the counted chunks.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub confidence: Option<f64>,
    /// A chunk was cut short by the end of the stream and zero-padded.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub padded: bool,
}

impl ArtifactEvent {
    pub fn blink(count: u32) -> Self {
        ArtifactEvent { t_ms: 0, kind: EventKind::Blink { count }, confidence: None, padded: false }
    }

    pub fn jaw_clench(count: u32) -> Self {
        ArtifactEvent { t_ms: 0, kind: EventKind::JawClench { count }, confidence: None, padded: false }
    }

    pub fn at(mut self, t_ms: u64) -> Self {
        self.t_ms = t_ms;
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Template {
    pub class: ArtifactClass,
    pub series: Series,
}

/// Reference gestures for chunk classification.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TemplateBank {
    pub templates: Vec<Template>,
}

impl TemplateBank {
    pub fn new(templates: Vec<Template>) -> Self {
        TemplateBank { templates }
    }

    pub fn is_empty(&self) -> bool {
        self.templates.is_empty()
    }

    pub fn classes(&self) -> Vec<ArtifactClass> {
        let mut c: Vec<ArtifactClass> = self.templates.iter().map(|t| t.class).collect();
        c.sort();
        c.dedup();
        c
    }

    /// Maps raw 1-D waveforms into the engine's smoothed feature domain:
    /// reduce, smooth, then keep one chunk starting where the smoothed
    /// template first reaches a tenth of its peak.
    pub fn to_stream_features(&self, config: &StreamConfig) -> Result<TemplateBank> {
        let chunk = config.chunk_samples();
        let templates = self
            .templates
            .iter()
            .map(|t| {
                let reduced: Vec<f64> = t.series.frames().map(|f| config.feature.reduce(f)).collect();
                let smooth = moving_average(&reduced, config.smoothing)?;
                let peak = smooth.iter().copied().fold(f64::MIN, f64::max);
                let start = smooth.iter().position(|&x| x >= 0.1 * peak).unwrap_or(0);
                let mut cut: Vec<f64> = smooth[start..].iter().copied().take(chunk).collect();
                cut.resize(chunk, 0.0);
                Ok(Template { class: t.class, series: Series::univariate(cut)? })
            })
            .collect::<Result<_>>()?;
        Ok(TemplateBank { templates })
    }
}

/// Nearest template under normalized DTW.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChunkClass {
    pub class: ArtifactClass,
    pub distance: f64,
    /// Distance gap to the nearest template of another class; infinite when
    /// the bank has a single class.
    pub margin: f64,
}

pub fn classify_chunk(chunk: &Series, bank: &TemplateBank) -> Result<ChunkClass> {
    if bank.is_empty() {
        return Err(Error::EmptyBank);
    }
    let variant = WarpVariant::new(Method::NormalizedDtw);
    let mut best: BTreeMap<ArtifactClass, f64> = BTreeMap::new();
    for t in &bank.templates {
        let d = distance(&t.series, chunk, &variant)?.distance;
        let e = best.entry(t.class).or_insert(f64::INFINITY);
        *e = e.min(d);
    }
    let mut ranked: Vec<(ArtifactClass, f64)> = best.into_iter().collect();
    ranked.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
    let (class, distance) = ranked[0];
    let margin = ranked.get(1).map_or(f64::INFINITY, |r| r.1 - distance);
    Ok(ChunkClass { class, distance, margin })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EngineMode {
    BlinkOnly,
    BlinkAndJaw,
}

/// Per-class pending count.
#[derive(Debug, Clone, Copy)]
struct Pending {
    count: u32,
    /// Sample index at which the window lapses.
    deadline: usize,
    confidence: Option<f64>,
    padded: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum CountKey {
    Blink,
    Jaw,
    Other,
}

impl CountKey {
    fn of(class: ArtifactClass) -> Self {
        match class {
            ArtifactClass::EyeBlink => CountKey::Blink,
            c if c.is_jaw() => CountKey::Jaw,
            _ => CountKey::Other,
        }
    }

    fn kind(self, count: u32) -> EventKind {
        match self {
            CountKey::Blink => EventKind::Blink { count },
            CountKey::Jaw => EventKind::JawClench { count },
            CountKey::Other => EventKind::Unknown,
        }
    }
}

#[derive(Debug, Clone)]
struct Capture {
    crossing: usize,
    samples: Vec<f64>,
}

/// Single-owner streaming state machine.
#[derive(Debug, Clone)]
pub struct OnlineEngine {
    config: StreamConfig,
    mode: EngineMode,
    bank: TemplateBank,
    smoother: MovingAverage,
    moments: RunningMoments,
    calibration: Option<CalibrationState>,
    index: usize,
    previous: f64,
    capture: Option<Capture>,
    pending: BTreeMap<CountKey, Pending>,
    last_emit_ms: u64,
}

impl OnlineEngine {
    /// `bank` holds raw 1-D waveforms and is required in blink-and-jaw mode.
    pub fn new(config: StreamConfig, mode: EngineMode, bank: Option<&TemplateBank>) -> Result<Self> {
        config.validate()?;
        let bank = match (mode, bank) {
            (EngineMode::BlinkOnly, _) => TemplateBank::default(),
            (EngineMode::BlinkAndJaw, Some(b)) if !b.is_empty() => {
                if config.chunk_samples() >= config.window_samples() {
                    return Err(Error::Arg("chunk must be shorter than the blink window".into()));
                }
                b.to_stream_features(&config)?
            }
            (EngineMode::BlinkAndJaw, _) => return Err(Error::EmptyBank),
        };
        Ok(OnlineEngine {
            smoother: MovingAverage::new(config.smoothing)?,
            config,
            mode,
            bank,
            moments: RunningMoments::default(),
            calibration: None,
            index: 0,
            previous: 0.0,
            capture: None,
            pending: BTreeMap::new(),
            last_emit_ms: 0,
        })
    }

    pub fn config(&self) -> &StreamConfig {
        &self.config
    }

    pub fn calibration(&self) -> Option<&CalibrationState> {
        self.calibration.as_ref()
    }

    pub fn samples_seen(&self) -> usize {
        self.index
    }

    fn emit(&mut self, key: CountKey, p: Pending, at: usize, out: &mut Vec<ArtifactEvent>) {
        let t_ms = self.config.t_ms(at).max(self.last_emit_ms);
        self.last_emit_ms = t_ms;
        out.push(ArtifactEvent {
            t_ms,
            kind: key.kind(p.count),
            confidence: p.confidence,
            padded: p.padded,
        });
        self.pending.remove(&key);
    }

    fn count(&mut self, key: CountKey, crossing: usize, confidence: Option<f64>, padded: bool) {
        let deadline = crossing + self.config.window_samples();
        let p = self.pending.entry(key).or_insert(Pending {
            count: 0,
            deadline,
            confidence: None,
            padded: false,
        });
        p.count += 1;
        p.deadline = deadline;
        p.confidence = match (p.confidence, confidence) {
            (Some(a), Some(b)) => Some(a.min(b)),
            (a, b) => a.or(b),
        };
        p.padded |= padded;
    }

    fn close_capture(&mut self, mut cap: Capture) -> Result<()> {
        let padded = cap.samples.len() < self.config.chunk_samples();
        cap.samples.resize(self.config.chunk_samples(), 0.0);
        let label = classify_chunk(&Series::univariate(cap.samples)?, &self.bank)?;
        self.count(CountKey::of(label.class), cap.crossing, Some(label.margin), padded);
        Ok(())
    }

    /// Consumes one frame and returns the events it completes.
    pub fn feed(&mut self, frame: &[f64]) -> Result<Vec<ArtifactEvent>> {
        if frame.is_empty() {
            return Err(Error::Arg("frame has no channels".into()));
        }
        let n = self.index;
        self.index += 1;
        let value = self.smoother.push(self.config.feature.reduce(frame));

        let Some(cal) = self.calibration else {
            self.moments.push(value);
            if self.index == self.config.calibration_samples() {
                self.calibration = Some(CalibrationState::from_moments(&self.moments, self.config.sigma_mult));
            }
            self.previous = value;
            return Ok(Vec::new());
        };

        let mut out = Vec::new();
        // a capture that began inside a window may still extend that window
        let held_from = self.capture.as_ref().map_or(usize::MAX, |c| c.crossing);
        let due: Vec<(CountKey, Pending)> = self
            .pending
            .iter()
            .filter(|(_, p)| p.deadline <= n && held_from >= p.deadline)
            .map(|(k, p)| (*k, *p))
            .collect();
        for (key, p) in due {
            self.emit(key, p, n, &mut out);
        }

        if let Some(cap) = self.capture.as_mut() {
            cap.samples.push(value);
            if cap.samples.len() == self.config.chunk_samples() {
                let cap = self.capture.take().expect("capture in progress");
                self.close_capture(cap)?;
            }
        }

        if self.previous <= cal.threshold && value > cal.threshold {
            match self.mode {
                EngineMode::BlinkOnly => self.count(CountKey::Blink, n, None, false),
                EngineMode::BlinkAndJaw if self.capture.is_none() => {
                    let cap = Capture { crossing: n, samples: vec![value] };
                    if self.config.chunk_samples() == 1 {
                        self.close_capture(cap)?;
                    } else {
                        self.capture = Some(cap);
                    }
                }
                // crossings inside a capture belong to the gesture being captured
                EngineMode::BlinkAndJaw => {}
            }
        }
        self.previous = value;
        Ok(out)
    }

    /// Ends the stream: pads an open capture and emits every pending count
    /// at its deadline.
    pub fn finish(&mut self) -> Result<Vec<ArtifactEvent>> {
        if let Some(cap) = self.capture.take() {
            self.close_capture(cap)?;
        }
        let mut due: Vec<(CountKey, Pending)> = self.pending.iter().map(|(k, p)| (*k, *p)).collect();
        due.sort_by_key(|(k, p)| (p.deadline, *k));
        let mut out = Vec::new();
        for (key, p) in due {
            self.emit(key, p, p.deadline, &mut out);
        }
        Ok(out)
    }
}

/// Streams every frame of `trial` through a fresh engine.
pub fn replay(trial: &EegTrial, config: StreamConfig, mode: EngineMode, bank: Option<&TemplateBank>) -> Result<Vec<ArtifactEvent>> {
    let config = StreamConfig { sample_rate: trial.sample_rate(), ..config };
    let mut engine = OnlineEngine::new(config, mode, bank)?;
    let mut events = Vec::new();
    for t in 0..trial.len() {
        events.extend(engine.feed(&trial.frame(t))?);
    }
    events.extend(engine.finish()?);
    Ok(events)
}

/// A rectangular burst in a scripted stream.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pulse {
    pub at: usize,
    #[serde(default = "Pulse::default_width")]
    pub width: usize,
    #[serde(default = "Pulse::default_height")]
    pub height: f64,
}

impl Pulse {
    fn default_width() -> usize {
        5
    }

    fn default_height() -> f64 {
        10.0
    }
}

/// A hand-built single-channel stream and the events it must produce.
/// The calibration period repeats `calibration_pattern`; everything after
/// it is zero. Pulses overwrite the baseline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamScript {
    pub name: String,
    pub len: usize,
    #[serde(default)]
    pub pulses: Vec<Pulse>,
    pub expected: Vec<ArtifactEvent>,
}

/// A set of scripts sharing one engine configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScriptSuite {
    pub config: StreamConfig,
    pub calibration_pattern: Vec<f64>,
    pub scripts: Vec<StreamScript>,
}

impl ScriptSuite {
    pub fn from_json(text: &str) -> Result<Self> {
        let suite: ScriptSuite = serde_json::from_str(text).map_err(|e| Error::Format { line: e.line(), reason: e.to_string() })?;
        suite.config.validate()?;
        if suite.calibration_pattern.is_empty() {
            return Err(Error::Arg("calibration pattern is empty".into()));
        }
        for s in &suite.scripts {
            if let Some(p) = s.pulses.iter().find(|p| p.at + p.width > s.len) {
                return Err(Error::Arg(format!("script {:?}: pulse at {} overruns length {}", s.name, p.at, s.len)));
            }
        }
        Ok(suite)
    }

    pub fn render(&self, script: &StreamScript) -> Vec<f64> {
        let cal = self.config.calibration_samples().min(script.len);
        let mut xs: Vec<f64> = self.calibration_pattern.iter().copied().cycle().take(cal).collect();
        xs.resize(script.len, 0.0);
        for p in &script.pulses {
            xs[p.at..p.at + p.width].iter_mut().for_each(|x| *x = p.height);
        }
        xs
    }

    /// Feeds the rendered stream sample by sample, then finishes.
    pub fn run(&self, script: &StreamScript) -> Result<Vec<ArtifactEvent>> {
        let mut engine = OnlineEngine::new(self.config, EngineMode::BlinkOnly, None)?;
        let mut events = Vec::new();
        for x in self.render(script) {
            events.extend(engine.feed(&[x])?);
        }
        events.extend(engine.finish()?);
        Ok(events)
    }
}
