//! Per-frame Prony estimation on the spectrogram.
//!
//! A spectrogram row is modelled as a sum of Gaussians `Σ_p a_p g(η - η_p)`,
//! whose truncated Fourier series has coefficients `c_m(g)·l_m` with
//! `l_m = Σ_p a_p e^{-2iπ m η_p / F_s}`. Inverting the row yields `l`; the
//! annihilating filter of `l` has roots `e^{-2iπ η_p / F_s}`.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::linalg::{self, C64};
use crate::refine::IFTrack;
use crate::tfr::WindowParams;

/// Relative weight floor `ĝ(M₀/F_s)/ĝ(0)` used to pick the default `M₀`.
pub const DEFAULT_WEIGHT_FLOOR: f64 = 1e-8;
/// Below this weight ratio the diagonal inverse is considered unusable.
pub const MIN_WEIGHT_RATIO: f64 = 1e-14;
/// Yule-Walker systems above this condition number are flagged degenerate.
pub const MAX_CONDITION: f64 = 1e12;

/// `ĝ(ξ)` for `g(x) = e^{-2πσ²x²}` with `ĝ(ξ) = ∫ g(x) e^{-2iπξx} dx`.
pub fn gaussian_hat(sigma: f64, xi: f64) -> f64 {
    let s2 = sigma * sigma;
    (2.0 * s2).powf(-0.5) * (-PI * xi * xi / (2.0 * s2)).exp()
}

/// Largest `M₀ ≤ ⌊(K-1)/2⌋` whose weight ratio stays above `floor`.
pub fn default_m0(window: WindowParams, sample_rate: f64, bins: usize, floor: f64) -> usize {
    let sf = window.sigma * sample_rate;
    // e^{-π m² / (2 σ² F_s²)} > floor
    let limit = (2.0 * sf * sf * (-floor.ln()) / PI).sqrt();
    let mut m = limit.floor() as usize;
    if m as f64 == limit && m > 0 {
        m -= 1;
    }
    m.min((bins.saturating_sub(1)) / 2)
}

/// Map from a spectrogram row to its coefficient sequence `l_{-M₀..M₀}`.
#[derive(Clone)]
pub struct InversionOperator {
    pub m0: usize,
    pub bins: usize,
    pub sample_rate: f64,
    pub window: WindowParams,
    /// `c_m(g)` for `m = -M₀..=M₀`.
    pub fourier_weights: Vec<f64>,
    fft: Arc<dyn Fft<f64>>,
}

impl fmt::Debug for InversionOperator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("InversionOperator")
            .field("m0", &self.m0)
            .field("bins", &self.bins)
            .field("sample_rate", &self.sample_rate)
            .field("sigma", &self.window.sigma)
            .finish()
    }
}

impl InversionOperator {
    pub fn weight(&self, m: isize) -> f64 {
        self.fourier_weights[(m + self.m0 as isize) as usize]
    }

    /// `V[k][m] = e^{2iπ m k / K}` for `m = -M₀..=M₀`.
    pub fn vandermonde(&self) -> DMatrix<C64> {
        let k = self.bins;
        let m0 = self.m0 as isize;
        DMatrix::from_fn(k, 2 * self.m0 + 1, |row, col| {
            let m = col as isize - m0;
            let phase = 2.0 * PI * ((m * row as isize).rem_euclid(k as isize)) as f64 / k as f64;
            C64::from_polar(1.0, phase)
        })
    }

    /// `(1/K) V^H`, exact left inverse when `K ≥ 2M₀ + 1`.
    pub fn left_inverse(&self) -> DMatrix<C64> {
        self.vandermonde().adjoint() / C64::new(self.bins as f64, 0.0)
    }
}

pub fn build_inversion(
    window: WindowParams,
    sample_rate: f64,
    bins: usize,
    m0: usize,
) -> Result<InversionOperator> {
    window.validate()?;
    if bins < 2 * m0 + 1 {
        return Err(Error::Config(format!(
            "bin count K = {bins} must be at least 2·M₀ + 1 = {}",
            2 * m0 + 1
        )));
    }
    let ratio = gaussian_hat(window.sigma, m0 as f64 / sample_rate) / gaussian_hat(window.sigma, 0.0);
    if !(ratio > MIN_WEIGHT_RATIO) {
        return Err(Error::Config(format!(
            "M₀ = {m0} is too large for σ = {}: weight ratio {ratio:e} underflows, shrink M₀",
            window.sigma
        )));
    }
    let m0i = m0 as isize;
    let fourier_weights = (-m0i..=m0i)
        .map(|m| gaussian_hat(window.sigma, m as f64 / sample_rate) / sample_rate)
        .collect();
    Ok(InversionOperator {
        m0,
        bins,
        sample_rate,
        window,
        fourier_weights,
        fft: FftPlanner::new().plan_fft_forward(bins),
    })
}

/// The sequence `l_{n,m}`, `m = -M₀..=M₀`, of one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientFrame {
    pub values: Vec<C64>,
    pub m0: usize,
    pub frame_index: usize,
}

impl CoefficientFrame {
    pub fn new(values: Vec<C64>, frame_index: usize) -> Self {
        assert!(values.len() % 2 == 1, "coefficient frames have odd length");
        let m0 = values.len() / 2;
        Self {
            values,
            m0,
            frame_index,
        }
    }

    /// Forward model `l_m = Σ_p a_p e^{-2iπ m η_p / F_s}`.
    pub fn from_exponentials(amps: &[f64], freqs: &[f64], sample_rate: f64, m0: usize) -> Self {
        let values = (-(m0 as isize)..=m0 as isize)
            .map(|m| {
                amps.iter().zip(freqs).fold(C64::new(0.0, 0.0), |acc, (a, f)| {
                    acc + C64::from_polar(*a, -2.0 * PI * m as f64 * f / sample_rate)
                })
            })
            .collect();
        Self::new(values, 0)
    }

    #[inline]
    pub fn get(&self, m: isize) -> C64 {
        self.values[(m + self.m0 as isize) as usize]
    }

    pub fn set(&mut self, m: isize, v: C64) {
        let m0 = self.m0 as isize;
        self.values[(m + m0) as usize] = v;
    }

    pub fn scale(&self) -> f64 {
        self.values.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    /// Largest `|l_{-m} - conj(l_m)|` relative to the frame scale.
    pub fn hermitian_defect(&self) -> f64 {
        let scale = self.scale();
        if scale == 0.0 {
            return 0.0;
        }
        (1..=self.m0 as isize)
            .map(|m| (self.get(-m) - self.get(m).conj()).norm())
            .fold(0.0, f64::max)
            / scale
    }
}

/// `l = D_g⁻¹ (1/K) V^H s` for one real spectrogram row.
pub fn invert_slice(op: &InversionOperator, row: &[f64], frame_index: usize) -> Result<CoefficientFrame> {
    if row.len() != op.bins {
        return Err(Error::Config(format!(
            "spectrogram row has {} bins, operator expects {}",
            row.len(),
            op.bins
        )));
    }
    let mut buf: Vec<C64> = row.iter().map(|&v| C64::new(v, 0.0)).collect();
    op.fft.process(&mut buf);
    let k = op.bins as f64;
    let m0 = op.m0;
    let mut values = vec![C64::new(0.0, 0.0); 2 * m0 + 1];
    values[m0] = C64::new(buf[0].re / (k * op.weight(0)), 0.0);
    for m in 1..=m0 {
        let v = buf[m] / (k * op.weight(m as isize));
        values[m0 + m] = v;
        // a real row has a Hermitian coefficient sequence
        values[m0 - m] = v.conj();
    }
    Ok(CoefficientFrame::new(values, frame_index))
}

/// Filter `h = (1, h₁, …, h_P)` whose Z-transform annihilates a frame.
#[derive(Debug, Clone, PartialEq)]
pub struct AnnihilatingFilter {
    /// `h₁..h_P`; `h₀ = 1` is implicit.
    pub coeffs: Vec<C64>,
    /// Unit-norm `(h₀, …, h_P)` before normalisation (total least squares only).
    pub unit_norm: Option<Vec<C64>>,
    pub condition: f64,
    pub degenerate: bool,
}

impl AnnihilatingFilter {
    pub fn order(&self) -> usize {
        self.coeffs.len()
    }

    fn degenerate(order: usize, condition: f64) -> Self {
        Self {
            coeffs: vec![C64::new(0.0, 0.0); order],
            unit_norm: None,
            condition,
            degenerate: true,
        }
    }

    /// `(l * h)_j = l_j + Σ_k h_k l_{j-k}` for the `j` where all terms exist.
    pub fn annihilation_residual(&self, frame: &CoefficientFrame) -> Vec<C64> {
        let p = self.order() as isize;
        let m0 = frame.m0 as isize;
        (-m0 + p..=m0)
            .map(|j| {
                self.coeffs
                    .iter()
                    .enumerate()
                    .fold(frame.get(j), |acc, (k, h)| acc + h * frame.get(j - k as isize - 1))
            })
            .collect()
    }
}

/// Solves the square Toeplitz system `A h = -(l₁..l_P)` with `A[j][k] = l_{j-k}`.
pub fn yule_walker(frame: &CoefficientFrame, order: usize) -> Result<AnnihilatingFilter> {
    if order == 0 {
        return Err(Error::Config("model order P must be at least 1".into()));
    }
    if frame.m0 < order {
        return Err(Error::Config(format!(
            "M₀ = {} is too small for P = {order}",
            frame.m0
        )));
    }
    let p = order;
    let a = DMatrix::from_fn(p, p, |j, k| frame.get(j as isize - k as isize));
    let rhs = DVector::from_fn(p, |j, _| -frame.get(j as isize + 1));
    let condition = linalg::condition_number(&a);
    if !(condition <= MAX_CONDITION) {
        return Ok(AnnihilatingFilter::degenerate(p, condition));
    }
    match linalg::solve(a, rhs) {
        Some(h) if h.iter().all(|v| v.re.is_finite() && v.im.is_finite()) => Ok(AnnihilatingFilter {
            coeffs: h.iter().copied().collect(),
            unit_norm: None,
            condition,
            degenerate: false,
        }),
        _ => Ok(AnnihilatingFilter::degenerate(p, condition)),
    }
}

/// Root-derived frequencies of one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct RootFrequencies {
    /// Ascending, in `[0, F_s)`.
    pub freqs: Vec<f64>,
    /// Largest `|1 - |z_p||` over the roots.
    pub max_radius_deviation: f64,
    pub degenerate: bool,
}

/// `η_p = -(F_s / 2π)·arg(z_p) mod F_s` for the roots of
/// `z^P + h₁ z^{P-1} + … + h_P`.
pub fn roots_to_freqs(filter: &AnnihilatingFilter, sample_rate: f64) -> RootFrequencies {
    let p = filter.order();
    let scale = filter.coeffs.iter().map(|c| c.norm()).fold(1.0, f64::max);
    let last = filter.coeffs.last().map_or(0.0, |c| c.norm());
    if filter.degenerate || p == 0 || !(last > 1e-14 * scale) {
        return RootFrequencies {
            freqs: vec![f64::NAN; p],
            max_radius_deviation: f64::NAN,
            degenerate: true,
        };
    }
    let roots = linalg::monic_roots(&filter.coeffs);
    let finite = roots.iter().all(|z| z.re.is_finite() && z.im.is_finite() && z.norm() > 0.0);
    if !finite || roots.len() != p {
        return RootFrequencies {
            freqs: vec![f64::NAN; p],
            max_radius_deviation: f64::NAN,
            degenerate: true,
        };
    }
    let mut freqs: Vec<f64> = roots
        .iter()
        .map(|z| (-sample_rate / (2.0 * PI) * z.arg()).rem_euclid(sample_rate))
        .map(|f| if f >= sample_rate { 0.0 } else { f })
        .collect();
    freqs.sort_by(f64::total_cmp);
    RootFrequencies {
        freqs,
        max_radius_deviation: roots.iter().map(|z| (1.0 - z.norm()).abs()).fold(0.0, f64::max),
        degenerate: false,
    }
}

/// Real amplitudes `a_p` minimising `Σ_m |l_m - Σ_p a_p e^{-2iπ m η_p/F_s}|²`;
/// small negatives are clamped to zero.
pub fn estimate_amplitudes(frame: &CoefficientFrame, freqs: &[f64], sample_rate: f64) -> Result<Vec<f64>> {
    let p = freqs.len();
    for i in 0..p {
        for j in i + 1..p {
            if !((freqs[i] - freqs[j]).abs() > sample_rate * 1e-9) {
                return Err(Error::Numerical(format!(
                    "coincident frequencies {} and {} Hz",
                    freqs[i], freqs[j]
                )));
            }
        }
    }
    let m0 = frame.m0 as isize;
    let rows = 2 * frame.m0 + 1;
    // stack real and imaginary parts of the complex model
    let design = DMatrix::from_fn(2 * rows, p, |r, c| {
        let m = (r % rows) as isize - m0;
        let z = C64::from_polar(1.0, -2.0 * PI * m as f64 * freqs[c] / sample_rate);
        if r < rows {
            z.re
        } else {
            z.im
        }
    });
    let target = DVector::from_fn(2 * rows, |r, _| {
        let v = frame.values[r % rows];
        if r < rows {
            v.re
        } else {
            v.im
        }
    });
    let svd = design.svd(true, true);
    let sol = svd
        .solve(&target, 1e-12)
        .map_err(|e| Error::Numerical(format!("amplitude least squares failed: {e}")))?;
    Ok(sol.iter().map(|&a| a.max(0.0)).collect())
}

/// Diagnostics attached to a frame estimate.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct FrameFlags {
    pub degenerate: bool,
    pub max_radius_deviation: f64,
    pub condition: f64,
    /// `false` when Cadzow hit its iteration cap.
    pub denoise_converged: bool,
}

/// Frequencies (ascending) and amplitudes recovered for one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameEstimate {
    pub freqs: Vec<f64>,
    pub amps: Vec<f64>,
    pub flags: FrameFlags,
}

impl FrameEstimate {
    pub fn degenerate(order: usize) -> Self {
        Self {
            freqs: vec![f64::NAN; order],
            amps: vec![f64::NAN; order],
            flags: FrameFlags {
                degenerate: true,
                max_radius_deviation: f64::NAN,
                condition: f64::INFINITY,
                denoise_converged: true,
            },
        }
    }
}

/// Frequency and amplitude estimate of a frame from its annihilating filter.
pub fn frame_estimate(frame: &CoefficientFrame, filter: &AnnihilatingFilter, sample_rate: f64) -> FrameEstimate {
    let order = filter.order();
    let roots = roots_to_freqs(filter, sample_rate);
    if roots.degenerate {
        let mut est = FrameEstimate::degenerate(order);
        est.flags.condition = filter.condition;
        return est;
    }
    // coincident roots keep their (finite) frequencies but are flagged
    let (amps, degenerate) = match estimate_amplitudes(frame, &roots.freqs, sample_rate) {
        Ok(a) => (a, false),
        Err(_) => (vec![f64::NAN; order], true),
    };
    FrameEstimate {
        freqs: roots.freqs,
        amps,
        flags: FrameFlags {
            degenerate,
            max_radius_deviation: roots.max_radius_deviation,
            condition: filter.condition,
            denoise_converged: true,
        },
    }
}

/// Permutations of `0..n` in lexicographic order.
fn permutations(n: usize) -> Vec<Vec<usize>> {
    fn rec(prefix: &mut Vec<usize>, used: &mut [bool], out: &mut Vec<Vec<usize>>) {
        if prefix.len() == used.len() {
            out.push(prefix.clone());
            return;
        }
        for i in 0..used.len() {
            if !used[i] {
                used[i] = true;
                prefix.push(i);
                rec(prefix, used, out);
                prefix.pop();
                used[i] = false;
            }
        }
    }
    let mut out = Vec::new();
    rec(&mut Vec::with_capacity(n), &mut vec![false; n], &mut out);
    out
}

/// Assignment `slot -> frame-local index` minimising total displacement
/// from `reference`; the identity wins ties.
pub fn best_assignment(reference: &[f64], freqs: &[f64]) -> Vec<usize> {
    let p = freqs.len();
    if p > 7 {
        // greedy fallback: ascending order
        return (0..p).collect();
    }
    let mut best: Option<(f64, Vec<usize>)> = None;
    for perm in permutations(p) {
        let cost: f64 = perm
            .iter()
            .enumerate()
            .map(|(slot, &j)| (freqs[j] - reference[slot]).abs())
            .sum();
        match &best {
            Some((c, _)) if cost >= *c => {}
            _ => best = Some((cost, perm)),
        }
    }
    best.map(|b| b.1).unwrap_or_default()
}

/// Links per-frame estimates into `P` continuous tracks. Labels are set by
/// ascending order at the first usable frame, then carried by minimal-
/// displacement matching against the last usable frame.
pub fn track_modes(per_frame: &[FrameEstimate], order: usize) -> Vec<IFTrack> {
    let frames = per_frame.len();
    let mut tracks: Vec<IFTrack> = (0..order).map(|p| IFTrack::empty(p, frames)).collect();
    let mut reference: Option<Vec<f64>> = None;
    for (n, est) in per_frame.iter().enumerate() {
        let finite = est.freqs.len() == order && est.freqs.iter().all(|f| f.is_finite());
        if !finite || est.flags.degenerate {
            for t in tracks.iter_mut() {
                t.outlier_mask[n] = true;
                t.degenerate[n] = true;
            }
        }
        if !finite {
            continue;
        }
        let assignment = match &reference {
            None => (0..order).collect(),
            Some(r) => best_assignment(r, &est.freqs),
        };
        let mut assigned = vec![0.0; order];
        for (slot, &j) in assignment.iter().enumerate() {
            assigned[slot] = est.freqs[j];
            tracks[slot].values[n] = est.freqs[j];
            tracks[slot].amplitudes[n] = est.amps.get(j).copied().unwrap_or(f64::NAN);
        }
        // flagged frames are recorded but never anchor the labelling
        if !est.flags.degenerate {
            reference = Some(assigned);
        }
    }
    tracks
}

#[cfg(test)]
mod tests {
    use super::*;

    fn op(sigma: f64, bins: usize, m0: usize) -> InversionOperator {
        build_inversion(WindowParams::new(sigma), 1024.0, bins, m0).unwrap()
    }

    /// Trapezoidal quadrature of `∫ g(x) e^{-2iπξx} dx` over `[-F_s/2, F_s/2]`.
    fn quadrature_hat(sigma: f64, xi: f64, fs: f64) -> f64 {
        let steps = 200_000;
        let h = fs / steps as f64;
        let mut acc = 0.0;
        for i in 0..=steps {
            let x = -fs / 2.0 + i as f64 * h;
            let w = if i == 0 || i == steps { 0.5 } else { 1.0 };
            acc += w * (-2.0 * PI * sigma * sigma * x * x).exp() * (2.0 * PI * xi * x).cos();
        }
        acc * h
    }

    #[test]
    fn fourier_weights_match_quadrature() {
        let o = op(0.02, 512, 60);
        let c0 = o.weight(0);
        let oracle = quadrature_hat(0.02, 0.0, 1024.0) / 1024.0;
        assert!((c0 - oracle).abs() / oracle < 1e-9);
        assert!((c0 - (2.0f64 * 0.0004).powf(-0.5) / 1024.0).abs() < 1e-15);
        for m in [1isize, 7, 30, 60] {
            assert_eq!(o.weight(m), o.weight(-m));
            assert!(o.weight(m) > 0.0);
            let q = quadrature_hat(0.02, m as f64 / 1024.0, 1024.0) / 1024.0;
            assert!((o.weight(m) - q).abs() / q < 1e-8, "m={m}");
        }
    }

    #[test]
    fn left_inverse_is_exact() {
        let o = op(0.02, 64, 31);
        let prod = o.left_inverse() * o.vandermonde();
        let n = prod.nrows();
        let mut worst = 0.0f64;
        for i in 0..n {
            for j in 0..n {
                let want = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((prod[(i, j)] - C64::new(want, 0.0)).norm());
            }
        }
        assert!(worst < 1e-12, "{worst}");
    }

    #[test]
    fn inversion_rejects_bad_orders() {
        assert!(build_inversion(WindowParams::new(0.02), 1024.0, 20, 10).is_err());
        // σF_s = 2: weight ratio at m = 20 is e^{-π 400 / 8} ≈ 1e-68
        assert!(build_inversion(WindowParams::new(2.0 / 1024.0), 1024.0, 64, 20).is_err());
    }

    #[test]
    fn default_m0_respects_both_bounds() {
        let w = WindowParams::new(0.02);
        let m0 = default_m0(w, 1024.0, 512, DEFAULT_WEIGHT_FLOOR);
        let ratio = |m: usize| gaussian_hat(0.02, m as f64 / 1024.0) / gaussian_hat(0.02, 0.0);
        assert!(ratio(m0) > 1e-8);
        assert!(ratio(m0 + 1) <= 1e-8);
        assert_eq!(default_m0(w, 1024.0, 64, DEFAULT_WEIGHT_FLOOR), 31);
    }

    #[test]
    fn synthetic_slice_round_trip() {
        let o = op(0.02, 256, 40);
        let m0 = 40isize;
        // pick a Hermitian l so that the row is real
        let l0: Vec<C64> = (-m0..=m0)
            .map(|m| {
                let base = C64::new((m as f64 * 0.3).cos() + 1.5, (m as f64 * 0.7).sin());
                if m < 0 {
                    C64::new((-m as f64 * 0.3).cos() + 1.5, (-m as f64 * 0.7).sin()).conj()
                } else if m == 0 {
                    C64::new(base.re, 0.0)
                } else {
                    base
                }
            })
            .collect();
        let row: Vec<f64> = (0..256)
            .map(|k| {
                (-m0..=m0)
                    .map(|m| {
                        o.weight(m)
                            * l0[(m + m0) as usize]
                            * C64::from_polar(1.0, 2.0 * PI * (m * k).rem_euclid(256) as f64 / 256.0)
                    })
                    .sum::<C64>()
                    .re
            })
            .collect();
        let l = invert_slice(&o, &row, 0).unwrap();
        for (a, b) in l.values.iter().zip(&l0) {
            assert!((a - b).norm() < 1e-10 * b.norm().max(1.0));
        }
        let zero = invert_slice(&o, &vec![0.0; 256], 3).unwrap();
        assert!(zero.values.iter().all(|v| v.norm() == 0.0));
        assert_eq!(zero.frame_index, 3);
        assert!(invert_slice(&o, &[0.0; 10], 0).is_err());
    }

    #[test]
    fn single_tone_slice_has_unit_modulus_ratios() {
        use crate::signalgen::{synthesize, ModeSpec, SignalSpec};
        use crate::tfr::{spectrogram, stft};
        let w = WindowParams::new(0.02);
        let sig = synthesize(&SignalSpec::new(vec![ModeSpec::tone(1.0, 220.5)], 1024)).unwrap();
        let s = spectrogram(&stft(&sig, w, 512).unwrap());
        let m0 = default_m0(w, 1024.0, 512, DEFAULT_WEIGHT_FLOOR);
        let o = build_inversion(w, 1024.0, 512, m0).unwrap();
        let l = invert_slice(&o, s.row(512), 512).unwrap();
        assert!(l.hermitian_defect() == 0.0);
        for m in 1..=20isize {
            let ratio = l.get(m) / l.get(0);
            let want = C64::from_polar(1.0, -2.0 * PI * m as f64 * 220.5 / 1024.0);
            assert!((ratio - want).norm() < 1e-6, "m={m}");
        }
        // a ≈ σ² at the zero-frequency coefficient
        assert!((l.get(0).re - 0.0004).abs() / 0.0004 < 1e-6);
    }

    #[test]
    fn first_order_filter_is_a_single_division() {
        let frame = CoefficientFrame::from_exponentials(&[2.0], &[220.5], 1024.0, 3);
        let h = yule_walker(&frame, 1).unwrap();
        let want = -frame.get(1) / frame.get(0);
        assert!((h.coeffs[0] - want).norm() < 1e-15);
        let r = roots_to_freqs(&h, 1024.0);
        assert!((r.freqs[0] - 220.5).abs() < 1e-9);
    }

    #[test]
    fn two_tone_filter_annihilates_and_recovers_frequencies() {
        let frame = CoefficientFrame::from_exponentials(&[1.0, 0.7], &[220.5, 240.5], 1024.0, 20);
        let h = yule_walker(&frame, 2).unwrap();
        assert!(!h.degenerate);
        let worst = h
            .annihilation_residual(&frame)
            .iter()
            .map(|v| v.norm())
            .fold(0.0, f64::max);
        assert!(worst < 1e-8 * frame.get(0).norm(), "{worst}");
        let roots = linalg::monic_roots(&h.coeffs);
        for f in [220.5, 240.5] {
            let z = C64::from_polar(1.0, -2.0 * PI * f / 1024.0);
            assert!(roots.iter().any(|r| (r - z).norm() < 1e-9));
        }
        let r = roots_to_freqs(&h, 1024.0);
        assert!((r.freqs[0] - 220.5).abs() < 1e-6 && (r.freqs[1] - 240.5).abs() < 1e-6);
        assert!(r.max_radius_deviation < 1e-9);
    }

    #[test]
    fn zero_frame_is_degenerate() {
        let frame = CoefficientFrame::new(vec![C64::new(0.0, 0.0); 9], 0);
        let h = yule_walker(&frame, 2).unwrap();
        assert!(h.degenerate);
        assert!(roots_to_freqs(&h, 1024.0).degenerate);
        assert!(yule_walker(&frame, 5).is_err());
    }

    #[test]
    fn radial_root_scaling_keeps_frequency() {
        let z = C64::from_polar(1.0, -2.0 * PI * 220.5 / 1024.0);
        for rho in [0.5, 1.0, 1.7] {
            let h = AnnihilatingFilter {
                coeffs: vec![-(z * rho)],
                unit_norm: None,
                condition: 1.0,
                degenerate: false,
            };
            let r = roots_to_freqs(&h, 1024.0);
            assert!((r.freqs[0] - 220.5).abs() < 1e-9);
            assert!((r.max_radius_deviation - (1.0 - rho).abs()).abs() < 1e-12);
        }
    }

    #[test]
    fn amplitudes_from_forward_construction() {
        let frame = CoefficientFrame::from_exponentials(&[4.0, 1.0], &[200.0, 260.0], 1024.0, 30);
        let a = estimate_amplitudes(&frame, &[200.0, 260.0], 1024.0).unwrap();
        assert!((a[0] - 4.0).abs() < 1e-8 && (a[1] - 1.0).abs() < 1e-8);
        let single = CoefficientFrame::from_exponentials(&[0.0004], &[220.5], 1024.0, 10);
        let a1 = estimate_amplitudes(&single, &[220.5], 1024.0).unwrap();
        assert!((a1[0] - single.get(0).re).abs() < 1e-15);
        assert!(estimate_amplitudes(&frame, &[200.0, 200.0], 1024.0).is_err());
    }

    fn est(freqs: &[f64]) -> FrameEstimate {
        FrameEstimate {
            freqs: freqs.to_vec(),
            amps: vec![1.0; freqs.len()],
            flags: FrameFlags::default(),
        }
    }

    #[test]
    fn tracking_constant_tones() {
        let frames: Vec<_> = (0..10).map(|_| est(&[220.5, 240.5])).collect();
        let t = track_modes(&frames, 2);
        assert!(t[0].values.iter().all(|&v| v == 220.5));
        assert!(t[1].values.iter().all(|&v| v == 240.5));
    }

    #[test]
    fn tracking_prefers_minimal_displacement() {
        // frame-local sorting puts the estimates in ascending order, but a
        // mode labelled 0 may sit above mode 1 after a near-crossing
        let reference = [230.0, 229.0];
        assert_eq!(best_assignment(&reference, &[228.9, 230.2]), vec![1, 0]);
        // brute-force check against all permutations on a 3-mode frame
        let reference = [100.0, 300.0, 200.0];
        let freqs = [105.0, 198.0, 297.0];
        let chosen = best_assignment(&reference, &freqs);
        let cost = |p: &[usize]| -> f64 { p.iter().enumerate().map(|(s, &j)| (freqs[j] - reference[s]).abs()).sum() };
        for perm in permutations(3) {
            assert!(cost(&chosen) <= cost(&perm));
        }
        assert_eq!(chosen, vec![0, 2, 1]);
        // exact tie keeps ascending order
        assert_eq!(best_assignment(&[1.0, 1.0], &[0.0, 2.0]), vec![0, 1]);
    }

    #[test]
    fn degenerate_prefix_defers_labelling() {
        let mut frames = vec![FrameEstimate::degenerate(2); 3];
        frames.push(est(&[10.0, 20.0]));
        frames.push(est(&[11.0, 19.0]));
        let t = track_modes(&frames, 2);
        assert!(t[0].outlier_mask[..3].iter().all(|&m| m));
        assert_eq!(t[0].values[3], 10.0);
        assert_eq!(t[1].values[4], 19.0);
        assert!(!t[0].outlier_mask[3]);
    }
}
