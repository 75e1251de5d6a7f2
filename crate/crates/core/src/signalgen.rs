//! Synthetic multicomponent AM/FM signals on `[0, 1]` and exact-SNR noise.

use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::linalg::C64;

pub type TimeFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// One mode `A(t)·exp(2iπ φ(t))` with its instantaneous frequency `φ'(t)`
/// stored alongside as ground truth.
#[derive(Clone)]
pub struct ModeSpec {
    amplitude_fn: TimeFn,
    phase_fn: TimeFn,
    if_fn: TimeFn,
}

impl fmt::Debug for ModeSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ModeSpec")
            .field("amplitude(0)", &self.amplitude(0.0))
            .field("if(0)", &self.inst_freq(0.0))
            .field("if(1)", &self.inst_freq(1.0))
            .finish()
    }
}

impl ModeSpec {
    /// `phase` is in cycles, `inst_freq` in Hz.
    pub fn new(amplitude: TimeFn, phase: TimeFn, inst_freq: TimeFn) -> Self {
        Self {
            amplitude_fn: amplitude,
            phase_fn: phase,
            if_fn: inst_freq,
        }
    }

    /// Constant amplitude with a polynomial instantaneous frequency
    /// `c₀ + c₁t + c₂t² + …` Hz; the phase is its exact antiderivative.
    pub fn polynomial(amplitude: f64, if_coeffs: &[f64], phase0: f64) -> Self {
        let coeffs: Arc<[f64]> = if_coeffs.into();
        let phase_coeffs = coeffs.clone();
        Self {
            amplitude_fn: Arc::new(move |_| amplitude),
            phase_fn: Arc::new(move |t| {
                phase0
                    + phase_coeffs
                        .iter()
                        .enumerate()
                        .rev()
                        .fold(0.0, |acc, (k, c)| acc * t + c / (k + 1) as f64)
                        * t
            }),
            if_fn: Arc::new(move |t| coeffs.iter().rev().fold(0.0, |acc, c| acc * t + c)),
        }
    }

    pub fn tone(amplitude: f64, freq_hz: f64) -> Self {
        Self::polynomial(amplitude, &[freq_hz], 0.0)
    }

    pub fn amplitude(&self, t: f64) -> f64 {
        (self.amplitude_fn)(t)
    }

    pub fn phase(&self, t: f64) -> f64 {
        (self.phase_fn)(t)
    }

    pub fn inst_freq(&self, t: f64) -> f64 {
        (self.if_fn)(t)
    }

    /// Largest relative gap between a central difference of the phase and
    /// the stored instantaneous frequency over `n + 1` grid points.
    pub fn phase_consistency_error(&self, n: usize) -> f64 {
        let h = 1e-4;
        (0..=n)
            .map(|i| {
                let t = i as f64 / n as f64;
                let numeric = (self.phase(t + h) - self.phase(t - h)) / (2.0 * h);
                let exact = self.inst_freq(t);
                (numeric - exact).abs() / exact.abs().max(f64::MIN_POSITIVE)
            })
            .fold(0.0, f64::max)
    }
}

/// Modes sampled on `[0, 1]` at `N` points, so `F_s = N` Hz.
#[derive(Debug, Clone)]
pub struct SignalSpec {
    pub modes: Vec<ModeSpec>,
    pub sample_count: usize,
}

impl SignalSpec {
    pub fn new(modes: Vec<ModeSpec>, sample_count: usize) -> Self {
        Self {
            modes,
            sample_count,
        }
    }

    pub fn sample_rate(&self) -> f64 {
        self.sample_count as f64
    }

    pub fn mode_count(&self) -> usize {
        self.modes.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.modes.is_empty() {
            return Err(Error::InvalidSignal("at least one mode is required".into()));
        }
        if self.sample_count < 2 {
            return Err(Error::InvalidSignal("sample_count must be at least 2".into()));
        }
        let n = self.sample_count;
        let nyquist = self.sample_rate() / 2.0;
        for (p, mode) in self.modes.iter().enumerate() {
            for i in 0..=n {
                let t = i as f64 / n as f64;
                let a = mode.amplitude(t);
                if !(a > 0.0) {
                    return Err(Error::InvalidSignal(format!(
                        "mode {p}: amplitude {a} at t={t} is not positive"
                    )));
                }
                let f = mode.inst_freq(t);
                if !(f > 0.0) {
                    return Err(Error::InvalidSignal(format!(
                        "mode {p}: instantaneous frequency {f} Hz at t={t} is not positive"
                    )));
                }
                if f >= nyquist {
                    return Err(Error::InvalidSignal(format!(
                        "mode {p}: instantaneous frequency {f} Hz at t={t} aliases (F_s/2 = {nyquist} Hz)"
                    )));
                }
            }
            let mismatch = mode.phase_consistency_error(n);
            if mismatch >= 1e-6 {
                return Err(Error::InvalidSignal(format!(
                    "mode {p}: phase derivative disagrees with the instantaneous frequency (relative error {mismatch:e})"
                )));
            }
        }
        Ok(())
    }

    /// Ground-truth instantaneous frequency of each mode at `n / N`.
    pub fn true_ifs(&self) -> Vec<Vec<f64>> {
        let n = self.sample_count;
        self.modes
            .iter()
            .map(|m| (0..n).map(|i| m.inst_freq(i as f64 / n as f64)).collect())
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampledSignal {
    pub samples: Vec<C64>,
    pub sample_rate: f64,
}

impl SampledSignal {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn energy(&self) -> f64 {
        self.samples.iter().map(|s| s.norm_sqr()).sum()
    }

    pub fn mean_power(&self) -> f64 {
        self.energy() / self.samples.len() as f64
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            samples: self.samples.iter().map(|s| s * c).collect(),
            sample_rate: self.sample_rate,
        }
    }
}

/// Samples `Σ_p A_p(n/N)·exp(2iπ φ_p(n/N))`.
pub fn synthesize(spec: &SignalSpec) -> Result<SampledSignal> {
    spec.validate()?;
    let n = spec.sample_count;
    let samples = (0..n)
        .map(|i| {
            let t = i as f64 / n as f64;
            spec.modes.iter().fold(C64::new(0.0, 0.0), |acc, m| {
                acc + C64::from_polar(m.amplitude(t), 2.0 * std::f64::consts::PI * m.phase(t))
            })
        })
        .collect();
    Ok(SampledSignal {
        samples,
        sample_rate: spec.sample_rate(),
    })
}

/// Adds circular complex Gaussian noise rescaled so the realised SNR,
/// `10·log₁₀(‖f‖² / ‖ε‖²)`, equals `target_snr_db`. `+∞` returns the input.
pub fn add_noise(signal: &SampledSignal, target_snr_db: f64, seed: u64) -> Result<SampledSignal> {
    if target_snr_db.is_nan() {
        return Err(Error::Config("target SNR is NaN".into()));
    }
    let energy = signal.energy();
    if !(energy > 0.0) {
        return Err(Error::InvalidSignal(
            "SNR is undefined for a zero signal".into(),
        ));
    }
    if target_snr_db == f64::INFINITY {
        return Ok(signal.clone());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise: Vec<C64> = (0..signal.len())
        .map(|_| {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            C64::new(re, im)
        })
        .collect();
    let drawn: f64 = noise.iter().map(|e| e.norm_sqr()).sum();
    let wanted = energy * 10f64.powf(-target_snr_db / 10.0);
    let scale = (wanted / drawn).sqrt();
    Ok(SampledSignal {
        samples: signal
            .samples
            .iter()
            .zip(&noise)
            .map(|(s, e)| s + e * scale)
            .collect(),
        sample_rate: signal.sample_rate,
    })
}

/// Realised SNR in dB of `noisy` relative to the clean `signal`.
pub fn realized_snr_db(signal: &SampledSignal, noisy: &SampledSignal) -> f64 {
    let noise: f64 = signal
        .samples
        .iter()
        .zip(&noisy.samples)
        .map(|(s, y)| (y - s).norm_sqr())
        .sum();
    10.0 * (signal.energy() / noise).log10()
}

/// Built-in test signals, all at `N = 1024`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scenario {
    /// Two unit tones at 220.5 and 240.5 Hz.
    Tones,
    /// Two parallel linear chirps 20 Hz apart.
    ParallelChirps,
    /// Two nonlinear chirps that only interfere over part of `[0, 1]`.
    PartialChirps,
}

pub const DEFAULT_SAMPLE_COUNT: usize = 1024;

impl Scenario {
    pub const ALL: [Scenario; 3] = [Scenario::Tones, Scenario::ParallelChirps, Scenario::PartialChirps];

    pub fn name(self) -> &'static str {
        match self {
            Scenario::Tones => "tones",
            Scenario::ParallelChirps => "parallel-chirps",
            Scenario::PartialChirps => "partial-chirps",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|s| s.name() == name)
    }

    /// Polynomial IF coefficients (Hz) of each mode, lowest mode first.
    pub fn if_coefficients(self) -> Vec<Vec<f64>> {
        match self {
            Scenario::Tones => vec![vec![220.5], vec![240.5]],
            Scenario::ParallelChirps => vec![vec![200.0, 80.0], vec![220.0, 80.0]],
            Scenario::PartialChirps => vec![vec![170.0, 30.0, 20.0], vec![270.0, -40.0, 10.0]],
        }
    }

    pub fn spec(self) -> SignalSpec {
        let modes = self
            .if_coefficients()
            .iter()
            .map(|c| ModeSpec::polynomial(1.0, c, 0.0))
            .collect();
        SignalSpec::new(modes, DEFAULT_SAMPLE_COUNT)
    }
}

pub fn builtin_scenarios() -> Vec<SignalSpec> {
    Scenario::ALL.iter().map(|s| s.spec()).collect()
}
