use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::simulator::{Channel, RevolutionTrace};

/// One second-order section, transposed direct form II, a0 normalized to 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Biquad {
    pub b: [f64; 3],
    pub a: [f64; 2],
}

impl Biquad {
    fn run(&self, x: &mut [f64]) {
        let Some(&first) = x.first() else { return };
        // Steady state for a constant input equal to the first sample.
        let mut z2 = (self.b[2] - self.a[1]) * first;
        let mut z1 = (1.0 - self.b[0]) * first;
        for v in x.iter_mut() {
            let input = *v;
            let y = self.b[0] * input + z1;
            z1 = self.b[1] * input - self.a[0] * y + z2;
            z2 = self.b[2] * input - self.a[1] * y;
            *v = y;
        }
    }

    fn response(&self, w: f64) -> f64 {
        // |H(e^{jw})|
        let (c1, s1) = (w.cos(), w.sin());
        let (c2, s2) = ((2.0 * w).cos(), (2.0 * w).sin());
        let num_re = self.b[0] + self.b[1] * c1 + self.b[2] * c2;
        let num_im = -(self.b[1] * s1 + self.b[2] * s2);
        let den_re = 1.0 + self.a[0] * c1 + self.a[1] * c2;
        let den_im = -(self.a[0] * s1 + self.a[1] * s2);
        (num_re.hypot(num_im)) / (den_re.hypot(den_im))
    }
}

/// Digital Butterworth low-pass as a cascade of sections, designed by the
/// bilinear transform with the cutoff prewarped.
#[derive(Debug, Clone, PartialEq)]
pub struct Butterworth {
    pub sections: Vec<Biquad>,
    pub cutoff_hz: f64,
    pub sample_rate: f64,
}

impl Butterworth {
    pub fn lowpass(order: usize, cutoff_hz: f64, sample_rate: f64) -> Result<Self> {
        if order == 0 {
            return Err(Error::invalid("filter order must be >= 1"));
        }
        if !(cutoff_hz > 0.0 && cutoff_hz < sample_rate / 2.0) {
            return Err(Error::invalid(format!(
                "cutoff {cutoff_hz} Hz must lie in (0, {}) Hz",
                sample_rate / 2.0
            )));
        }
        let w0 = 2.0 * PI * cutoff_hz / sample_rate;
        let (sin_w, cos_w) = w0.sin_cos();
        let mut sections = Vec::with_capacity(order.div_ceil(2));
        for k in 1..=order / 2 {
            let theta = PI * (2 * k - 1) as f64 / (2 * order) as f64;
            let q = 1.0 / (2.0 * theta.cos());
            let alpha = sin_w / (2.0 * q);
            let a0 = 1.0 + alpha;
            let b0 = (1.0 - cos_w) / 2.0 / a0;
            sections.push(Biquad {
                b: [b0, 2.0 * b0, b0],
                a: [-2.0 * cos_w / a0, (1.0 - alpha) / a0],
            });
        }
        if order % 2 == 1 {
            let k = (w0 / 2.0).tan();
            let g = k / (1.0 + k);
            sections.push(Biquad {
                b: [g, g, 0.0],
                a: [(k - 1.0) / (k + 1.0), 0.0],
            });
        }
        Ok(Self {
            sections,
            cutoff_hz,
            sample_rate,
        })
    }

    /// Single-pass magnitude response at `freq_hz`.
    pub fn magnitude(&self, freq_hz: f64) -> f64 {
        let w = 2.0 * PI * freq_hz / self.sample_rate;
        self.sections.iter().map(|s| s.response(w)).product()
    }

    fn run(&self, x: &mut [f64]) {
        for s in &self.sections {
            s.run(x);
        }
    }

    /// Forward-backward filtering of one period of a periodic signal. The
    /// record is extended circularly on both sides before filtering.
    pub fn filtfilt_periodic(&self, x: &[f64]) -> Vec<f64> {
        let n = x.len();
        if n == 0 {
            return Vec::new();
        }
        let settle = 6 * (self.sample_rate / self.cutoff_hz).ceil() as usize * self.sections.len();
        let pad = settle.min(4 * n);
        let mut ext: Vec<f64> = (0..n + 2 * pad)
            .map(|i| x[(i + n * (pad / n + 1) - pad) % n])
            .collect();
        self.run(&mut ext);
        ext.reverse();
        self.run(&mut ext);
        ext.reverse();
        ext[pad..pad + n].to_vec()
    }
}

/// Zero-phase low-pass filtering of all three channels.
pub fn lowpass_filter(
    trace: &RevolutionTrace,
    cutoff_hz: f64,
    order: usize,
) -> Result<RevolutionTrace> {
    let filter = Butterworth::lowpass(order, cutoff_hz, trace.sample_rate)?;
    let mut out = trace.clone();
    for c in Channel::ALL {
        let filtered = filter.filtfilt_periodic(trace.channel(c));
        *out.channel_mut(c) = filtered;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tone(freq: f64, n: usize, fs: f64) -> Vec<f64> {
        (0..n).map(|i| (2.0 * PI * freq * i as f64 / fs).sin()).collect()
    }

    fn amplitude(x: &[f64]) -> f64 {
        // Middle half only.
        let n = x.len();
        x[n / 4..3 * n / 4].iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    #[test]
    fn dc_passes_unchanged() {
        let f = Butterworth::lowpass(4, 400.0, 10_000.0).unwrap();
        let y = f.filtfilt_periodic(&vec![3.25; 1000]);
        assert!(y.iter().all(|v| (v - 3.25).abs() < 1e-12));
        assert!((f.magnitude(0.0) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn magnitude_matches_prewarped_butterworth() {
        let fs = 10_000.0;
        let f = Butterworth::lowpass(4, 400.0, fs).unwrap();
        let wc = (PI * 400.0 / fs).tan();
        for freq in [50.0, 400.0, 1000.0, 2000.0] {
            let ratio = (PI * freq / fs).tan() / wc;
            let expected = 1.0 / (1.0 + ratio.powi(8)).sqrt();
            assert!((f.magnitude(freq) - expected).abs() < 1e-9, "{freq}");
        }
        assert!((f.magnitude(400.0) - 0.5f64.sqrt()).abs() < 1e-9);
    }

    #[test]
    fn attenuates_two_kilohertz() {
        let fs = 10_000.0;
        let f = Butterworth::lowpass(4, 400.0, fs).unwrap();
        // 2 kHz over an integer number of periods so the record is periodic.
        let y = f.filtfilt_periodic(&tone(2000.0, 2000, fs));
        assert!(amplitude(&y) < 0.05);
        assert!(f.magnitude(2000.0).powi(2) < 0.05);
    }

    #[test]
    fn passes_fifty_hertz() {
        let fs = 10_000.0;
        let f = Butterworth::lowpass(4, 400.0, fs).unwrap();
        let y = f.filtfilt_periodic(&tone(50.0, 2000, fs));
        assert!((amplitude(&y) - 1.0).abs() < 0.02);
    }

    #[test]
    fn zero_phase() {
        let fs = 10_000.0;
        let f = Butterworth::lowpass(4, 400.0, fs).unwrap();
        let x = tone(100.0, 1000, fs);
        let y = f.filtfilt_periodic(&x);
        let gain = f.magnitude(100.0).powi(2);
        for (a, b) in x.iter().zip(&y) {
            assert!((a * gain - b).abs() < 1e-6);
        }
    }

    #[test]
    fn odd_order_and_bad_cutoff() {
        let f = Butterworth::lowpass(3, 400.0, 10_000.0).unwrap();
        assert_eq!(f.sections.len(), 2);
        assert!((f.magnitude(0.0) - 1.0).abs() < 1e-12);
        assert!(Butterworth::lowpass(4, 5000.0, 10_000.0).is_err());
        assert!(Butterworth::lowpass(4, 6000.0, 10_000.0).is_err());
        assert!(Butterworth::lowpass(0, 400.0, 10_000.0).is_err());
    }
}
