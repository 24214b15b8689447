//! Butterworth band-pass plus notch, applied forward and backward.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::EegTrial;
use crate::{Error, Result};

/// Quality factor of the line-noise notch.
const NOTCH_Q: f64 = 30.0;

/// Band edges and line-noise notch.
///
/// `order` is the Butterworth order of each band edge (so the band-pass has
/// `2 * order` poles before the forward-backward pass doubles it again).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FilterSpec {
    pub band_low: f64,
    pub band_high: f64,
    pub notch: Option<f64>,
    pub order: usize,
}

impl Default for FilterSpec {
    fn default() -> Self {
        FilterSpec {
            band_low: 0.3,
            band_high: 60.0,
            notch: Some(50.0),
            order: 4,
        }
    }
}

impl FilterSpec {
    pub fn validate(&self, sample_rate: f64) -> Result<()> {
        let nyquist = sample_rate / 2.0;
        if !(self.band_low > 0.0 && self.band_low < self.band_high && self.band_high < nyquist) {
            return Err(Error::FilterSpec(format!(
                "need 0 < {} < {} < {nyquist} (Nyquist)",
                self.band_low, self.band_high
            )));
        }
        if let Some(f) = self.notch {
            if !(f > self.band_low && f < self.band_high) {
                return Err(Error::FilterSpec(format!(
                    "notch {f} Hz outside the pass band ({}, {})",
                    self.band_low, self.band_high
                )));
            }
        }
        if self.order == 0 {
            return Err(Error::FilterSpec("filter order must be at least 1".into()));
        }
        Ok(())
    }
}

/// One second-order section in transposed direct form II, `a0 = 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Biquad {
    b: [f64; 3],
    a: [f64; 2],
}

impl Biquad {
    fn normalized(b: [f64; 3], a: [f64; 3]) -> Self {
        Biquad {
            b: [b[0] / a[0], b[1] / a[0], b[2] / a[0]],
            a: [a[1] / a[0], a[2] / a[0]],
        }
    }

    fn dc_gain(&self) -> f64 {
        (self.b[0] + self.b[1] + self.b[2]) / (1.0 + self.a[0] + self.a[1])
    }

    /// State that makes a constant input `u` pass through without transient.
    fn steady_state(&self, u: f64) -> [f64; 2] {
        let y = self.dc_gain() * u;
        let s2 = self.b[2] * u - self.a[1] * y;
        let s1 = self.b[1] * u - self.a[0] * y + s2;
        [s1, s2]
    }

    /// Largest pole magnitude.
    fn pole_radius(&self) -> f64 {
        let [a1, a2] = self.a;
        let disc = a1 * a1 - 4.0 * a2;
        if disc < 0.0 {
            a2.sqrt()
        } else {
            let r = disc.sqrt();
            ((-a1 + r) / 2.0).abs().max(((-a1 - r) / 2.0).abs())
        }
    }

    fn run(&self, xs: &mut [f64], mut state: [f64; 2]) {
        for x in xs.iter_mut() {
            let input = *x;
            let y = self.b[0] * input + state[0];
            state[0] = self.b[1] * input - self.a[0] * y + state[1];
            state[1] = self.b[2] * input - self.a[1] * y;
            *x = y;
        }
    }
}

#[derive(Clone, Copy)]
enum Edge {
    Low,
    High,
}

fn first_order(edge: Edge, cutoff: f64, rate: f64) -> Biquad {
    let k = (PI * cutoff / rate).tan();
    let a = [1.0 + k, k - 1.0, 0.0];
    match edge {
        Edge::Low => Biquad::normalized([k, k, 0.0], a),
        Edge::High => Biquad::normalized([1.0, -1.0, 0.0], a),
    }
}

fn second_order(edge: Edge, cutoff: f64, q: f64, rate: f64) -> Biquad {
    let w0 = 2.0 * PI * cutoff / rate;
    let (sin, cos) = w0.sin_cos();
    let alpha = sin / (2.0 * q);
    let a = [1.0 + alpha, -2.0 * cos, 1.0 - alpha];
    match edge {
        Edge::Low => Biquad::normalized([(1.0 - cos) / 2.0, 1.0 - cos, (1.0 - cos) / 2.0], a),
        Edge::High => Biquad::normalized([(1.0 + cos) / 2.0, -(1.0 + cos), (1.0 + cos) / 2.0], a),
    }
}

/// Bilinear Butterworth of the given order as cascaded sections.
fn butterworth(edge: Edge, order: usize, cutoff: f64, rate: f64) -> Vec<Biquad> {
    let mut sections: Vec<Biquad> = (0..order / 2)
        .map(|k| {
            let q = 1.0 / (2.0 * ((2 * k + 1) as f64 * PI / (2 * order) as f64).sin());
            second_order(edge, cutoff, q, rate)
        })
        .collect();
    if order % 2 == 1 {
        sections.push(first_order(edge, cutoff, rate));
    }
    sections
}

fn notch(freq: f64, rate: f64) -> Biquad {
    let w0 = 2.0 * PI * freq / rate;
    let (sin, cos) = w0.sin_cos();
    let alpha = sin / (2.0 * NOTCH_Q);
    Biquad::normalized([1.0, -2.0 * cos, 1.0], [1.0 + alpha, -2.0 * cos, 1.0 - alpha])
}

fn design(spec: &FilterSpec, rate: f64) -> Vec<Biquad> {
    let mut sections = butterworth(Edge::High, spec.order, spec.band_low, rate);
    sections.extend(butterworth(Edge::Low, spec.order, spec.band_high, rate));
    if let Some(f) = spec.notch {
        sections.push(notch(f, rate));
    }
    sections
}

fn run_cascade(sections: &[Biquad], xs: &mut [f64]) {
    let mut u = xs[0];
    for s in sections {
        s.run(xs, s.steady_state(u));
        u *= s.dc_gain();
    }
}

/// Order of the autoregressive model used to extend the edges.
const EXTEND_ORDER: usize = 16;

/// Burg estimate of AR coefficients `a` (with `a[0] = 1`) so that
/// `x[t] ~ -sum(a[k] x[t-k])`. Stops early once the residual vanishes.
fn burg(x: &[f64], order: usize) -> Vec<f64> {
    let n = x.len();
    let energy: f64 = x.iter().map(|v| v * v).sum();
    let mut a = vec![1.0];
    let mut f = x.to_vec();
    let mut b = x.to_vec();
    for m in 0..order.min(n.saturating_sub(1)) {
        let (mut num, mut den) = (0.0, 0.0);
        for t in m + 1..n {
            num -= 2.0 * f[t] * b[t - 1];
            den += f[t] * f[t] + b[t - 1] * b[t - 1];
        }
        if den <= 1e-20 * energy || den == 0.0 {
            break;
        }
        let k = num / den;
        a.push(0.0);
        let prev = a.clone();
        for i in 1..a.len() {
            a[i] = prev[i] + k * prev[a.len() - 1 - i];
        }
        for t in (m + 1..n).rev() {
            let ft = f[t] + k * b[t - 1];
            b[t] = b[t - 1] + k * f[t];
            f[t] = ft;
        }
    }
    a
}

/// Continues `x` by `len` samples of its own AR prediction about the mean.
fn predict(x: &[f64], a: &[f64], mean: f64, len: usize) -> Vec<f64> {
    let p = a.len() - 1;
    let mut hist: Vec<f64> = x[x.len() - p..].iter().map(|v| v - mean).collect();
    (0..len)
        .map(|_| {
            let t = hist.len();
            let next = -(1..=p).map(|k| a[k] * hist[t - k]).sum::<f64>();
            hist.push(next);
            next + mean
        })
        .collect()
}

/// Samples for the slowest pole to decay by 60 dB.
fn settle_len(sections: &[Biquad]) -> usize {
    let r = sections.iter().map(Biquad::pole_radius).fold(0.0, f64::max);
    if r <= 0.0 {
        return 0;
    }
    (1000f64.ln() / -r.ln()).ceil() as usize
}

/// Both ends of `x` extended by `pad` samples. Long enough inputs are
/// continued by linear prediction; short ones are mirrored.
fn extend(x: &[f64], pad: usize) -> Vec<f64> {
    let n = x.len();
    let mut ext = Vec::with_capacity(n + 2 * pad);
    if n > 4 * EXTEND_ORDER {
        let mean = x.iter().sum::<f64>() / n as f64;
        let centered: Vec<f64> = x.iter().map(|v| v - mean).collect();
        let a = burg(&centered, EXTEND_ORDER);
        let reversed: Vec<f64> = x.iter().rev().copied().collect();
        ext.extend(predict(&reversed, &a, mean, pad).into_iter().rev());
        ext.extend_from_slice(x);
        ext.extend(predict(x, &a, mean, pad));
    } else {
        let pad = pad.min(n - 1);
        ext.extend((1..=pad).rev().map(|i| x[i]));
        ext.extend_from_slice(x);
        ext.extend((1..=pad).map(|i| x[n - 1 - i]));
    }
    ext
}

/// Zero-phase filtering: forward then backward over the extended signal,
/// each pass started in steady state for its first sample. The extension is
/// long enough for edge transients to settle before the signal proper.
fn filtfilt(sections: &[Biquad], x: &[f64]) -> Vec<f64> {
    let n = x.len();
    let wanted = (3 * (2 * sections.len() + 1)).max(settle_len(sections));
    let mut ext = extend(x, wanted);
    let pad = (ext.len() - n) / 2;
    run_cascade(sections, &mut ext);
    ext.reverse();
    run_cascade(sections, &mut ext);
    ext.reverse();
    ext[pad..pad + n].to_vec()
}

/// Applies the band-pass and notch of `spec` to every channel, zero phase.
pub fn bandpass_notch(trial: &EegTrial, spec: &FilterSpec) -> Result<EegTrial> {
    spec.validate(trial.sample_rate())?;
    let sections = design(spec, trial.sample_rate());
    Ok(trial.map_channels(|ch| filtfilt(&sections, ch)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sine(freq: f64, rate: f64, secs: f64) -> Vec<f64> {
        let n = (rate * secs) as usize;
        (0..n).map(|i| (2.0 * PI * freq * i as f64 / rate).sin()).collect()
    }

    fn rms(xs: &[f64]) -> f64 {
        (xs.iter().map(|x| x * x).sum::<f64>() / xs.len() as f64).sqrt()
    }

    fn filtered_rms_ratio(freq: f64) -> f64 {
        let x = sine(freq, 250.0, 10.0);
        let t = EegTrial::new(250.0, vec![x.clone()]).unwrap();
        let y = bandpass_notch(&t, &FilterSpec::default()).unwrap();
        rms(y.channel(0)) / rms(&x)
    }

    /// |H(e^{jw})| of the cascade, evaluated directly.
    fn magnitude(sections: &[Biquad], freq: f64, rate: f64) -> f64 {
        let w = 2.0 * PI * freq / rate;
        sections
            .iter()
            .map(|s| {
                let z1 = (w.cos(), -w.sin());
                let z2 = ((2.0 * w).cos(), -(2.0 * w).sin());
                let num = (s.b[0] + s.b[1] * z1.0 + s.b[2] * z2.0, s.b[1] * z1.1 + s.b[2] * z2.1);
                let den = (1.0 + s.a[0] * z1.0 + s.a[1] * z2.0, s.a[0] * z1.1 + s.a[1] * z2.1);
                (num.0.hypot(num.1)) / (den.0.hypot(den.1))
            })
            .product()
    }

    #[test]
    fn notch_removes_line_noise() {
        let r = filtered_rms_ratio(50.0);
        assert!(r <= 0.1, "50 Hz ratio {r}");
        for phase in [0.4, 1.3, 2.7] {
            for n in [750, 751, 2503] {
                let x: Vec<f64> = (0..n).map(|i| (2.0 * PI * 0.2 * i as f64 + phase).sin()).collect();
                let y = bandpass_notch(&EegTrial::new(250.0, vec![x.clone()]).unwrap(), &FilterSpec::default()).unwrap();
                let r = rms(y.channel(0)) / rms(&x);
                assert!(r <= 0.1, "phase {phase} n {n} ratio {r}");
            }
        }
    }

    #[test]
    fn noisy_offset_input_stays_bounded() {
        use rand::SeedableRng;
        use rand_distr::{Distribution, Normal};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let normal = Normal::new(30.0, 10.0).unwrap();
        let x: Vec<f64> = (0..750).map(|_| normal.sample(&mut rng)).collect();
        let y = bandpass_notch(&EegTrial::new(250.0, vec![x]).unwrap(), &FilterSpec::default()).unwrap();
        let y = y.channel(0);
        let mean = y.iter().sum::<f64>() / y.len() as f64;
        assert!(mean.abs() < 3.0, "mean {mean}");
        assert!(y.iter().all(|v| v.abs() < 60.0));
    }

    #[test]
    fn passband_is_preserved() {
        let r = filtered_rms_ratio(10.0);
        assert!(r >= 0.9, "10 Hz ratio {r}");
    }

    #[test]
    fn notch_attenuation_at_least_20_db() {
        let spec = FilterSpec::default();
        let sections = design(&spec, 250.0);
        // forward-backward squares the single-pass magnitude
        let pass = magnitude(&sections, 10.0, 250.0).powi(2);
        let stop = magnitude(&sections, 50.0, 250.0).powi(2);
        assert!(20.0 * (pass / stop).log10() >= 20.0);
    }

    #[test]
    fn butterworth_half_power_at_cutoff() {
        for order in 1..=5 {
            let lp = butterworth(Edge::Low, order, 30.0, 250.0);
            let g = magnitude(&lp, 30.0, 250.0);
            assert!((g - 0.5f64.sqrt()).abs() < 1e-9, "order {order}: {g}");
            assert!((magnitude(&lp, 0.0, 250.0) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_in_zero_out() {
        let t = EegTrial::new(250.0, vec![vec![0.0; 500]; 3]).unwrap();
        let y = bandpass_notch(&t, &FilterSpec::default()).unwrap();
        assert_eq!(y, t);
    }

    #[test]
    fn rejects_band_above_nyquist() {
        let t = EegTrial::new(100.0, vec![vec![0.0; 10]]).unwrap();
        assert!(matches!(bandpass_notch(&t, &FilterSpec::default()), Err(Error::FilterSpec(_))));
        let bad_notch = FilterSpec { notch: Some(70.0), ..FilterSpec::default() };
        assert!(bad_notch.validate(250.0).is_err());
        assert!(FilterSpec { notch: None, ..FilterSpec::default() }.validate(250.0).is_ok());
    }

    #[test]
    fn zero_phase_keeps_pulse_centered() {
        let n = 1001;
        let mut x = vec![0.0; n];
        for (i, v) in x.iter_mut().enumerate() {
            let t = (i as f64 - 500.0) / 10.0;
            *v = (-t * t).exp();
        }
        let t = EegTrial::new(250.0, vec![x]).unwrap();
        let y = bandpass_notch(&t, &FilterSpec::default()).unwrap();
        let peak = y
            .channel(0)
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .unwrap()
            .0;
        assert_eq!(peak, 500);
    }

    #[test]
    fn short_inputs_do_not_panic() {
        for n in 1..4 {
            let t = EegTrial::new(250.0, vec![vec![1.0; n]]).unwrap();
            let y = bandpass_notch(&t, &FilterSpec::default()).unwrap();
            assert_eq!(y.len(), n);
        }
    }
}
