//! Synthetic EEG with embedded artifacts.
//!
//! Baseline is white Gaussian noise on every channel. Each artifact class
//! has its own waveform family and scalp topography:
//!
//! * eye blink: one biphasic pulse, strongest frontally;
//! * jaw movement: a sustained 25-45 Hz burst, strongest temporally;
//! * jaw clench: the same burst, shorter;
//! * head nod: two opposite slow lobes separated by a pause, nearly uniform;
//! * head turn: a fast-rise, slow-decay swell, lateralized with opposite
//!   polarity on the two sides.
//!
//! Durations and amplitudes are drawn uniformly from per-class ranges. All
//! randomness flows from `GenSpec::seed`.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::online::{Template, TemplateBank};
use crate::signal::{Annotation, ArtifactClass, EegTrial};
use crate::warp::Series;
use crate::{Error, Result};

/// Length of a generated classification trial.
pub const EPOCH_S: f64 = 3.0;

/// Quiet kept between an artifact and the epoch edges; at least the
/// default smoothing length so the energy bump is never clipped.
const MARGIN_S: f64 = 0.4;

/// Silence padded around each template.
const TEMPLATE_PAD_S: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassShape {
    pub duration_ms: (f64, f64),
    pub amplitude: (f64, f64),
}

impl ClassShape {
    fn validate(&self, class: ArtifactClass) -> Result<()> {
        let (d0, d1) = self.duration_ms;
        let (a0, a1) = self.amplitude;
        if !(d0 > 0.0 && d0 <= d1 && d1.is_finite() && a0 >= 0.0 && a0 <= a1 && a1.is_finite()) {
            return Err(Error::Arg(format!("bad {class} shape {self:?}")));
        }
        Ok(())
    }

    fn mid_duration_ms(&self) -> f64 {
        0.5 * (self.duration_ms.0 + self.duration_ms.1)
    }

    fn mid_amplitude(&self) -> f64 {
        0.5 * (self.amplitude.0 + self.amplitude.1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenSpec {
    pub sample_rate: f64,
    pub channels: usize,
    pub noise_sigma: f64,
    pub blink: ClassShape,
    pub jaw: ClassShape,
    pub jaw_clench: ClassShape,
    pub head_nod: ClassShape,
    pub head_turn: ClassShape,
    pub seed: u64,
}

impl Default for GenSpec {
    fn default() -> Self {
        GenSpec {
            sample_rate: 250.0,
            channels: 4,
            noise_sigma: 10.0,
            blink: ClassShape { duration_ms: (200.0, 400.0), amplitude: (80.0, 150.0) },
            jaw: ClassShape { duration_ms: (900.0, 1400.0), amplitude: (40.0, 70.0) },
            jaw_clench: ClassShape { duration_ms: (550.0, 650.0), amplitude: (80.0, 120.0) },
            head_nod: ClassShape { duration_ms: (1000.0, 1400.0), amplitude: (60.0, 120.0) },
            head_turn: ClassShape { duration_ms: (1000.0, 1500.0), amplitude: (60.0, 120.0) },
            seed: 7,
        }
    }
}

impl GenSpec {
    pub fn shape(&self, class: ArtifactClass) -> &ClassShape {
        match class {
            ArtifactClass::EyeBlink => &self.blink,
            ArtifactClass::JawMovement => &self.jaw,
            ArtifactClass::JawClench => &self.jaw_clench,
            ArtifactClass::HeadNod => &self.head_nod,
            ArtifactClass::HeadTurn => &self.head_turn,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sample_rate.is_finite() && self.sample_rate > 0.0) {
            return Err(Error::Arg(format!("sample rate {} must be positive", self.sample_rate)));
        }
        if self.channels == 0 {
            return Err(Error::Arg("need at least one channel".into()));
        }
        if !(self.noise_sigma.is_finite() && self.noise_sigma >= 0.0) {
            return Err(Error::Arg(format!("noise sigma {} must be nonnegative", self.noise_sigma)));
        }
        if self.sample_rate < 100.0 {
            return Err(Error::Arg("jaw bursts need a sample rate of at least 100 Hz".into()));
        }
        for class in ArtifactClass::ALL {
            self.shape(class).validate(class)?;
        }
        Ok(())
    }

    fn samples(&self, seconds: f64) -> usize {
        (seconds * self.sample_rate).round() as usize
    }

    fn rng(&self, stream: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(stream);
        rng
    }
}

/// Relative strength of a class on channel `c` of `channels`.
fn topography(class: ArtifactClass, c: usize, channels: usize) -> f64 {
    let p = if channels == 1 { 0.0 } else { c as f64 / (channels - 1) as f64 };
    match class {
        ArtifactClass::EyeBlink => 1.0 - 0.7 * p,
        ArtifactClass::JawMovement | ArtifactClass::JawClench => 0.6 + 0.4 * (PI * p).sin(),
        ArtifactClass::HeadNod => 0.8 + 0.2 * p,
        ArtifactClass::HeadTurn => 1.0 - 2.0 * p,
    }
}

/// Unit-amplitude waveform for one channel. Jaw bursts draw their carrier
/// frequency and phase from `rng`; the other families are deterministic.
fn waveform<R: Rng>(class: ArtifactClass, len: usize, rate: f64, rng: &mut R) -> Vec<f64> {
    let u = |i: usize| i as f64 / len as f64;
    match class {
        ArtifactClass::EyeBlink => (0..len).map(|i| (2.0 * PI * u(i)).sin()).collect(),
        ArtifactClass::JawMovement | ArtifactClass::JawClench => {
            let (f, ph) = (rng.random_range(25.0..45.0), rng.random_range(0.0..2.0 * PI));
            let ramp = (0.04 * rate).max(1.0);
            (0..len)
                .map(|i| {
                    let edge = (i as f64 / ramp).min((len - i) as f64 / ramp).min(1.0);
                    edge * (2.0 * PI * f * i as f64 / rate + ph).sin()
                })
                .collect()
        }
        ArtifactClass::HeadNod => (0..len)
            .map(|i| match u(i) {
                x if x < 0.35 => (PI * x / 0.35).sin(),
                x if x >= 0.65 => -(PI * (x - 0.65) / 0.35).sin(),
                _ => 0.0,
            })
            .collect(),
        ArtifactClass::HeadTurn => (0..len)
            .map(|i| {
                let r = u(i) / 0.15;
                r * (1.0 - r).exp()
            })
            .collect(),
    }
}

fn noise<R: Rng>(spec: &GenSpec, len: usize, rng: &mut R) -> Vec<Vec<f64>> {
    if spec.noise_sigma == 0.0 {
        return vec![vec![0.0; len]; spec.channels];
    }
    let normal = Normal::new(0.0, spec.noise_sigma).expect("sigma validated");
    (0..spec.channels).map(|_| (0..len).map(|_| normal.sample(rng)).collect()).collect()
}

/// Draws a duration (in samples) for one artifact of `class`.
fn draw_len<R: Rng>(spec: &GenSpec, class: ArtifactClass, rng: &mut R) -> usize {
    let (d0, d1) = spec.shape(class).duration_ms;
    let ms = if d0 < d1 { rng.random_range(d0..=d1) } else { d0 };
    spec.samples(ms / 1000.0).max(2)
}

/// Adds one artifact of `len` samples at `start` to every channel.
fn embed<R: Rng>(spec: &GenSpec, data: &mut [Vec<f64>], class: ArtifactClass, start: usize, len: usize, rng: &mut R) {
    let (a0, a1) = spec.shape(class).amplitude;
    let amp = if a0 < a1 { rng.random_range(a0..=a1) } else { a0 };
    let shared = waveform(class, len, spec.sample_rate, rng);
    let channels = data.len();
    for (c, channel) in data.iter_mut().enumerate() {
        let own;
        let wave = if class.is_jaw() && c > 0 {
            own = waveform(class, len, spec.sample_rate, rng);
            &own
        } else {
            &shared
        };
        let g = amp * topography(class, c, channels);
        for (x, w) in channel[start..start + len].iter_mut().zip(wave) {
            *x += g * w;
        }
    }
}

fn one_trial<R: Rng>(spec: &GenSpec, class: ArtifactClass, rng: &mut R) -> Result<EegTrial> {
    let n = spec.samples(EPOCH_S);
    let margin = spec.samples(MARGIN_S);
    let len = draw_len(spec, class, rng).min(n - 2 * margin);
    let start = rng.random_range(margin..=n - margin - len);
    let mut data = noise(spec, n, rng);
    embed(spec, &mut data, class, start, len, rng);
    EegTrial::new(spec.sample_rate, data)?
        .with_label(Some(class))
        .with_annotations(vec![Annotation { start, end: start + len, class }])
}

/// `per_class` labeled 3 s epochs of each class, interleaved by class, for
/// subject `s1` session `1`.
pub fn gen_trials(spec: &GenSpec, per_class: usize, classes: &[ArtifactClass]) -> Result<Vec<EegTrial>> {
    session_trials(spec, 1, 1, per_class, classes)
}

fn session_trials(
    spec: &GenSpec,
    subject: u64,
    session: u64,
    per_class: usize,
    classes: &[ArtifactClass],
) -> Result<Vec<EegTrial>> {
    spec.validate()?;
    if per_class == 0 || classes.is_empty() {
        return Err(Error::Arg("need at least one class and one trial per class".into()));
    }
    let mut rng = spec.rng(subject << 32 | session);
    let mut trials = Vec::with_capacity(per_class * classes.len());
    for _ in 0..per_class {
        for &class in classes {
            trials.push(one_trial(spec, class, &mut rng)?.with_ids(format!("s{subject}"), session.to_string())?);
        }
    }
    Ok(trials)
}

/// Labeled epochs for `subjects` x `sessions`, ids `s1..` and `1..`.
pub fn gen_dataset(
    spec: &GenSpec,
    subjects: usize,
    sessions: usize,
    per_class: usize,
    classes: &[ArtifactClass],
) -> Result<Vec<EegTrial>> {
    let mut all = Vec::new();
    for subject in 1..=subjects as u64 {
        for session in 1..=sessions as u64 {
            all.extend(session_trials(spec, subject, session, per_class, classes)?);
        }
    }
    Ok(all)
}

/// Continuous recording with artifacts starting at the given times.
pub fn gen_stream(spec: &GenSpec, duration_s: f64, events: &[(f64, ArtifactClass)]) -> Result<EegTrial> {
    gen_stream_on(spec, duration_s, events, 0)
}

/// As `gen_stream`, with an independent random stream per `stream` index.
pub fn gen_stream_on(spec: &GenSpec, duration_s: f64, events: &[(f64, ArtifactClass)], stream: u64) -> Result<EegTrial> {
    spec.validate()?;
    if !(duration_s.is_finite() && duration_s > 0.0) {
        return Err(Error::Arg(format!("duration {duration_s} must be positive")));
    }
    let n = spec.samples(duration_s);
    let mut rng = spec.rng(u64::MAX - stream);
    let mut sorted = events.to_vec();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut placed: Vec<Annotation> = Vec::with_capacity(sorted.len());
    for &(t, class) in &sorted {
        if !(t.is_finite() && t >= 0.0) {
            return Err(Error::Range(format!("event time {t} s")));
        }
        let start = spec.samples(t);
        let end = start + draw_len(spec, class, &mut rng);
        if end > n {
            return Err(Error::Range(format!("{class} at {t} s runs past the {duration_s} s stream")));
        }
        if let Some(prev) = placed.last() {
            if start < prev.end {
                return Err(Error::Overlap { second_s: t });
            }
        }
        placed.push(Annotation { start, end, class });
    }
    let mut data = noise(spec, n, &mut rng);
    for a in &placed {
        embed(spec, &mut data, a.class, a.start, a.len(), &mut rng);
    }
    EegTrial::new(spec.sample_rate, data)?
        .with_ids(format!("stream{stream}"), "1")?
        .with_annotations(placed)
}

/// `count` events spread over `duration_s`, one per equal slot, each fitting
/// inside its slot with at least a second of quiet on either side.
pub fn random_schedule(
    spec: &GenSpec,
    duration_s: f64,
    count: usize,
    classes: &[ArtifactClass],
    seed: u64,
) -> Result<Vec<(f64, ArtifactClass)>> {
    if count == 0 {
        return Ok(Vec::new());
    }
    if classes.is_empty() {
        return Err(Error::Arg("no classes to schedule".into()));
    }
    let slot = duration_s / count as f64;
    let longest = classes.iter().map(|&c| spec.shape(c).duration_ms.1 / 1000.0).fold(0.0, f64::max);
    let room = slot - longest - 2.0;
    if room < 0.0 {
        return Err(Error::Range(format!("{count} events do not fit in {duration_s} s")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..count)
        .map(|i| {
            let t = i as f64 * slot + 1.0 + rng.random_range(0.0..=room);
            (t, classes[rng.random_range(0..classes.len())])
        })
        .collect())
}

/// Noise-free single-channel reference gestures: one blink and one jaw
/// clench at mid-range duration and amplitude, each padded with silence.
pub fn gen_templates(spec: &GenSpec) -> Result<TemplateBank> {
    spec.validate()?;
    let mut rng = spec.rng(u64::MAX / 2);
    let pad = spec.samples(TEMPLATE_PAD_S);
    let templates = [ArtifactClass::EyeBlink, ArtifactClass::JawClench]
        .into_iter()
        .map(|class| {
            let shape = spec.shape(class);
            let len = spec.samples(shape.mid_duration_ms() / 1000.0).max(2);
            let mut values = vec![0.0; pad];
            values.extend(waveform(class, len, spec.sample_rate, &mut rng).iter().map(|w| w * shape.mid_amplitude()));
            values.resize(len + 2 * pad, 0.0);
            Ok(Template { class, series: Series::univariate(values)? })
        })
        .collect::<Result<_>>()?;
    Ok(TemplateBank::new(templates))
}

/// Single frontal channel at 512 Hz for the blink counter: 30 s with a
/// few spontaneous blinks inside the 20 s calibration period, then two
/// double blinks at 22 s and 26 s.
pub fn blink_demo_stream(seed: u64) -> Result<EegTrial> {
    let spec = GenSpec {
        sample_rate: 512.0,
        channels: 1,
        blink: ClassShape { duration_ms: (300.0, 300.0), amplitude: (120.0, 120.0) },
        seed,
        ..GenSpec::default()
    };
    let blink = ArtifactClass::EyeBlink;
    let events = [2.5, 6.0, 9.5, 13.0, 16.5, 22.0, 22.4, 26.0, 26.4].map(|t| (t, blink));
    gen_stream(&spec, 30.0, &events)
}

/// Four channels at 500 Hz for the blink-and-jaw engine: one spontaneous
/// blink during calibration, then a double blink at 22 s and a double jaw
/// clench at 26 s.
pub fn gesture_demo_stream(seed: u64) -> Result<EegTrial> {
    let spec = GenSpec { sample_rate: 500.0, seed, ..GenSpec::default() };
    let (b, j) = (ArtifactClass::EyeBlink, ArtifactClass::JawClench);
    gen_stream(&spec, 30.0, &[(9.0, b), (22.0, b), (22.7, b), (26.0, j), (26.9, j)])
}
