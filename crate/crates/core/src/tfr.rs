//! Gaussian-window STFT sampled on a `frame × bin` lattice, its spectrogram,
//! and the closed-form two-tone spectrogram used as a test oracle.

use std::f64::consts::PI;

use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::linalg::C64;
use crate::signalgen::SampledSignal;

pub const DEFAULT_BINS: usize = 512;

/// Window `h_σ(t) = exp(-π t²/σ²)` truncated at `|t| ≤ truncation_radius`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WindowParams {
    pub sigma: f64,
    pub truncation_radius: f64,
}

impl WindowParams {
    /// Window with the default `5σ` support radius.
    pub fn new(sigma: f64) -> Self {
        Self {
            sigma,
            truncation_radius: 5.0 * sigma,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0) || !self.sigma.is_finite() {
            return Err(Error::Config(format!("window sigma {} must be positive", self.sigma)));
        }
        if !(self.truncation_radius >= 4.0 * self.sigma) {
            return Err(Error::Config(format!(
                "truncation radius {} is below 4σ = {}",
                self.truncation_radius,
                4.0 * self.sigma
            )));
        }
        Ok(())
    }

    pub fn value(&self, t: f64) -> f64 {
        (-PI * t * t / (self.sigma * self.sigma)).exp()
    }

    /// Half-width of the discrete support, in samples.
    pub fn radius_samples(&self, sample_rate: f64) -> usize {
        (self.truncation_radius * sample_rate + 1e-9).floor() as usize
    }
}

/// STFT values `V[n][k] ≈ V_f^h(n/F_s, k F_s/K)`, row-major.
#[derive(Debug, Clone)]
pub struct Stft {
    pub values: Vec<C64>,
    pub frames: usize,
    pub bins: usize,
    pub sample_rate: f64,
    pub window: WindowParams,
}

impl Stft {
    pub fn get(&self, n: usize, k: usize) -> C64 {
        self.values[n * self.bins + k]
    }
}

/// Real nonnegative lattice `s[n][k]` with frame times `n/F_s` and bin
/// frequencies `k F_s / K`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectrogramGrid {
    pub values: Vec<f64>,
    pub frames: usize,
    pub bins: usize,
    pub sample_rate: f64,
    pub window: WindowParams,
}

impl SpectrogramGrid {
    pub fn row(&self, n: usize) -> &[f64] {
        &self.values[n * self.bins..(n + 1) * self.bins]
    }

    pub fn get(&self, n: usize, k: usize) -> f64 {
        self.values[n * self.bins + k]
    }

    pub fn frame_time(&self, n: usize) -> f64 {
        n as f64 / self.sample_rate
    }

    pub fn bin_freq(&self, k: usize) -> f64 {
        k as f64 / self.bins as f64 * self.sample_rate
    }

    pub fn frame_times(&self) -> Vec<f64> {
        (0..self.frames).map(|n| self.frame_time(n)).collect()
    }

    pub fn bin_freqs(&self) -> Vec<f64> {
        (0..self.bins).map(|k| self.bin_freq(k)).collect()
    }
}

/// Riemann-sum STFT with hop 1 and zero padding outside the signal:
///
/// `V[n][k] = (1/F_s) Σ_j f[n+j] h(j/F_s) exp(-2iπ k j / K)`, `|j| ≤ R`.
///
/// Each frame's windowed segment is folded modulo `K` and transformed with
/// one length-`K` FFT, which evaluates that sum exactly for any `R`.
pub fn stft(signal: &SampledSignal, window: WindowParams, bins: usize) -> Result<Stft> {
    window.validate()?;
    if bins < 2 {
        return Err(Error::Config(format!("bin count {bins} must be at least 2")));
    }
    let fs = signal.sample_rate;
    let n_frames = signal.len();
    let radius = window.radius_samples(fs) as isize;
    let taps: Vec<f64> = (-radius..=radius)
        .map(|j| window.value(j as f64 / fs) / fs)
        .collect();
    let fft = FftPlanner::<f64>::new().plan_fft_forward(bins);
    let mut values = vec![C64::new(0.0, 0.0); n_frames * bins];
    let mut scratch = vec![C64::new(0.0, 0.0); fft.get_inplace_scratch_len()];
    let k = bins as isize;
    for (n, frame) in values.chunks_mut(bins).enumerate() {
        for (offset, tap) in taps.iter().enumerate() {
            let j = offset as isize - radius;
            let idx = n as isize + j;
            if idx < 0 || idx >= n_frames as isize {
                continue;
            }
            frame[j.rem_euclid(k) as usize] += signal.samples[idx as usize] * *tap;
        }
        fft.process_with_scratch(frame, &mut scratch);
    }
    Ok(Stft {
        values,
        frames: n_frames,
        bins,
        sample_rate: fs,
        window,
    })
}

/// Elementwise squared modulus.
pub fn spectrogram(stft: &Stft) -> SpectrogramGrid {
    SpectrogramGrid {
        values: stft.values.iter().map(|v| v.norm_sqr()).collect(),
        frames: stft.frames,
        bins: stft.bins,
        sample_rate: stft.sample_rate,
        window: stft.window,
    }
}

/// Closed-form spectrogram of `A e^{2iπω₁t} + e^{2iπω₂t}`:
///
/// `σ²[A² g(η-ω₁) + g(η-ω₂) + 2A e^{-πσ²((η-ω₁)²+(η-ω₂)²)} cos(2π(ω₂-ω₁)t)]`
/// with `g(x) = e^{-2πσ²x²}`.
pub fn analytic_two_tone(
    amplitude: f64,
    omega1: f64,
    omega2: f64,
    window: WindowParams,
    frames: usize,
    bins: usize,
    sample_rate: f64,
) -> SpectrogramGrid {
    let s2 = window.sigma * window.sigma;
    let mut values = Vec::with_capacity(frames * bins);
    for n in 0..frames {
        let t = n as f64 / sample_rate;
        let interference = (2.0 * PI * (omega2 - omega1) * t).cos();
        for k in 0..bins {
            let eta = k as f64 / bins as f64 * sample_rate;
            let d1 = eta - omega1;
            let d2 = eta - omega2;
            let modes = amplitude * amplitude * (-2.0 * PI * s2 * d1 * d1).exp()
                + (-2.0 * PI * s2 * d2 * d2).exp();
            let cross = 2.0 * amplitude * (-PI * s2 * (d1 * d1 + d2 * d2)).exp() * interference;
            values.push(s2 * (modes + cross));
        }
    }
    SpectrogramGrid {
        values,
        frames,
        bins,
        sample_rate,
        window,
    }
}

/// Largest per-frame deviation between two grids over `frame_range`,
/// normalised by each frame's peak of `reference`.
pub fn max_relative_deviation(
    computed: &SpectrogramGrid,
    reference: &SpectrogramGrid,
    frame_range: std::ops::Range<usize>,
) -> f64 {
    let mut worst = 0.0f64;
    for n in frame_range {
        let a = computed.row(n);
        let b = reference.row(n);
        let peak = b.iter().copied().fold(0.0, f64::max);
        if peak == 0.0 {
            continue;
        }
        let dev = a
            .iter()
            .zip(b)
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max);
        worst = worst.max(dev / peak);
    }
    worst
}
