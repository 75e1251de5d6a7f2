//! Oscillation removal on IF tracks: outlier masking, monotone gap filling,
//! interference-free point detection and penalised cubic spline fitting.

use crate::error::{Error, Result};
use crate::linalg;

pub const DEFAULT_OUTLIER_C: f64 = 8.0;
pub const DEFAULT_CELLS: usize = 10;
pub const DEFAULT_INFLECTION_WIDTH: usize = 5;
pub const DEFAULT_PENALTY: f64 = 1.0 - 1e-4;

/// Per-mode frequency sequence in Hz. Masked entries carry no information.
#[derive(Debug, Clone, PartialEq)]
pub struct IFTrack {
    pub mode_index: usize,
    pub values: Vec<f64>,
    pub outlier_mask: Vec<bool>,
    /// Frames flagged by the Prony stage, a subset of `outlier_mask`.
    pub degenerate: Vec<bool>,
    pub amplitudes: Vec<f64>,
}

impl IFTrack {
    pub fn empty(mode_index: usize, frames: usize) -> Self {
        Self {
            mode_index,
            values: vec![f64::NAN; frames],
            outlier_mask: vec![false; frames],
            degenerate: vec![false; frames],
            amplitudes: vec![f64::NAN; frames],
        }
    }

    pub fn from_values(mode_index: usize, values: Vec<f64>) -> Self {
        let n = values.len();
        let mut t = Self::empty(mode_index, n);
        t.outlier_mask = values.iter().map(|v| !v.is_finite()).collect();
        t.degenerate = t.outlier_mask.clone();
        t.values = values;
        t
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn masked_count(&self) -> usize {
        self.outlier_mask.iter().filter(|m| **m).count()
    }
}

fn median(mut v: Vec<f64>) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Jump threshold `τ = c · median |η_{n+1} − η_n|` over adjacent usable
/// frames, floored at `1e-9 · mean |η|`.
pub fn jump_threshold(track: &IFTrack, c: f64) -> f64 {
    let usable = |n: usize| !track.outlier_mask[n] && track.values[n].is_finite();
    let diffs: Vec<f64> = (1..track.len())
        .filter(|&n| usable(n) && usable(n - 1))
        .map(|n| (track.values[n] - track.values[n - 1]).abs())
        .collect();
    let live: Vec<f64> = (0..track.len()).filter(|&n| usable(n)).map(|n| track.values[n].abs()).collect();
    let mean = if live.is_empty() { 0.0 } else { live.iter().sum::<f64>() / live.len() as f64 };
    (c * median(diffs)).max(1e-9 * mean)
}

/// Masks frames that jump by more than `τ` per elapsed frame from the last
/// retained value. The scan runs outward in both directions from an anchor:
/// the usable frame closest to the track median whose neighbour agrees
/// with it. Existing masks are kept.
pub fn reject_outliers(track: &IFTrack, c: f64) -> Result<IFTrack> {
    if track.is_empty() {
        return Err(Error::InvalidSignal("empty IF track".into()));
    }
    if !(c > 0.0) {
        return Err(Error::Config(format!("outlier constant c = {c} must be positive")));
    }
    let tau = jump_threshold(track, c);
    let mut out = track.clone();
    let n_total = out.len();
    for n in 0..n_total {
        if !out.values[n].is_finite() {
            out.outlier_mask[n] = true;
        }
    }
    let usable: Vec<usize> = (0..n_total).filter(|&n| !out.outlier_mask[n]).collect();
    let center = median(usable.iter().map(|&n| out.values[n]).collect());
    let agrees = |a: usize, b: usize| (out.values[b] - out.values[a]).abs() <= tau * a.abs_diff(b) as f64;
    let mut candidates: Vec<usize> = (0..usable.len())
        .filter(|&i| {
            (i + 1 < usable.len() && agrees(usable[i], usable[i + 1])) || (i > 0 && agrees(usable[i - 1], usable[i]))
        })
        .collect();
    candidates.sort_by(|&a, &b| {
        (out.values[usable[a]] - center)
            .abs()
            .total_cmp(&(out.values[usable[b]] - center).abs())
            .then(a.cmp(&b))
    });
    match candidates.first() {
        None => {
            for &n in &usable {
                out.outlier_mask[n] = true;
            }
        }
        Some(&anchor) => {
            let mut scan = |order: &mut dyn Iterator<Item = usize>| {
                let mut reference = usable[anchor];
                for n in order {
                    let allowed = tau * n.abs_diff(reference) as f64;
                    if (out.values[n] - out.values[reference]).abs() > allowed {
                        out.outlier_mask[n] = true;
                    } else {
                        reference = n;
                    }
                }
            };
            scan(&mut usable[anchor + 1..].iter().copied());
            scan(&mut usable[..anchor].iter().rev().copied());
        }
    }
    let masked = out.masked_count();
    if 2 * masked > n_total {
        return Err(Error::TrackQuality {
            mode: track.mode_index,
            masked,
            total: n_total,
        });
    }
    Ok(out)
}

/// Fritsch–Carlson slopes with the three-point shape-preserving end rule.
fn pchip_slopes(x: &[f64], y: &[f64]) -> Vec<f64> {
    let n = x.len();
    let h: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).collect();
    let delta: Vec<f64> = (0..n - 1).map(|i| (y[i + 1] - y[i]) / h[i]).collect();
    let mut d = vec![0.0; n];
    if n == 2 {
        d[0] = delta[0];
        d[1] = delta[0];
        return d;
    }
    for i in 1..n - 1 {
        let (a, b) = (delta[i - 1], delta[i]);
        if a * b > 0.0 {
            let w1 = 2.0 * h[i] + h[i - 1];
            let w2 = h[i] + 2.0 * h[i - 1];
            d[i] = (w1 + w2) / (w1 / a + w2 / b);
        }
    }
    let end = |h0: f64, h1: f64, d0: f64, d1: f64| {
        let s = ((2.0 * h0 + h1) * d0 - h0 * d1) / (h0 + h1);
        if s * d0 <= 0.0 {
            0.0
        } else if d0 * d1 < 0.0 && s.abs() > 3.0 * d0.abs() {
            3.0 * d0
        } else {
            s
        }
    };
    d[0] = end(h[0], h[1], delta[0], delta[1]);
    d[n - 1] = end(h[n - 2], h[n - 3], delta[n - 2], delta[n - 3]);
    d
}

/// Monotone cubic Hermite interpolation through the unmasked frames,
/// held constant beyond the first and last of them.
pub fn pchip_fill(track: &IFTrack) -> Result<Vec<f64>> {
    let keep: Vec<usize> = (0..track.len())
        .filter(|&n| !track.outlier_mask[n] && track.values[n].is_finite())
        .collect();
    if keep.len() < 2 {
        return Err(Error::TrackQuality {
            mode: track.mode_index,
            masked: track.len() - keep.len(),
            total: track.len(),
        });
    }
    let x: Vec<f64> = keep.iter().map(|&n| n as f64).collect();
    let y: Vec<f64> = keep.iter().map(|&n| track.values[n]).collect();
    let d = pchip_slopes(&x, &y);
    let mut out = track.values.clone();
    let (first, last) = (keep[0], keep[keep.len() - 1]);
    for v in out.iter_mut().take(first) {
        *v = y[0];
    }
    for v in out.iter_mut().skip(last + 1) {
        *v = y[y.len() - 1];
    }
    for seg in 0..keep.len() - 1 {
        let (a, b) = (keep[seg], keep[seg + 1]);
        let h = x[seg + 1] - x[seg];
        for (n, slot) in out.iter_mut().enumerate().take(b).skip(a + 1) {
            let s = (n as f64 - x[seg]) / h;
            let s2 = s * s;
            let s3 = s2 * s;
            *slot = (2.0 * s3 - 3.0 * s2 + 1.0) * y[seg]
                + (s3 - 2.0 * s2 + s) * h * d[seg]
                + (-2.0 * s3 + 3.0 * s2) * y[seg + 1]
                + (s3 - s2) * h * d[seg + 1];
        }
    }
    Ok(out)
}

/// Strict local minima and maxima. Runs of equal values count as one
/// point at their midpoint; runs touching either end are skipped.
pub fn detect_extrema(series: &[f64]) -> (Vec<usize>, Vec<usize>) {
    let mut runs: Vec<(usize, usize)> = Vec::new();
    for (n, v) in series.iter().enumerate() {
        match runs.last_mut() {
            Some(r) if series[r.0] == *v => r.1 = n,
            _ => runs.push((n, n)),
        }
    }
    let (mut mins, mut maxs) = (Vec::new(), Vec::new());
    for k in 1..runs.len().saturating_sub(1) {
        let v = series[runs[k].0];
        let prev = series[runs[k - 1].0];
        let next = series[runs[k + 1].0];
        let mid = (runs[k].0 + runs[k].1) / 2;
        if v > prev && v > next {
            maxs.push(mid);
        } else if v < prev && v < next {
            mins.push(mid);
        }
    }
    (mins, maxs)
}

/// Nearest-integer midpoints of consecutive entries of the ranked union
/// of minima and maxima, halves rounded up.
pub fn build_i_if(i_min: &[usize], i_max: &[usize]) -> Vec<usize> {
    let mut all: Vec<usize> = i_min.iter().chain(i_max).copied().collect();
    all.sort_unstable();
    all.dedup();
    let mut out: Vec<usize> = all.windows(2).map(|w| (w[0] + w[1]).div_ceil(2)).collect();
    out.dedup();
    out
}

/// Centred moving average; indices without a full window are absent.
/// Returns `(first_index, smoothed)`.
fn moving_average(series: &[f64], width: usize) -> (usize, Vec<f64>) {
    let w = width.max(1);
    if series.len() < w {
        return (0, Vec::new());
    }
    let out = series.windows(w).map(|win| win.iter().sum::<f64>() / w as f64).collect();
    (w / 2, out)
}

/// Sign changes of the second difference of the smoothed series. Values
/// with `|Δ²| ≤ 1e-12 · max|series|` have no sign.
pub fn detect_inflections(series: &[f64], width: usize) -> Vec<usize> {
    let (offset, s) = moving_average(series, width);
    if s.len() < 3 {
        return Vec::new();
    }
    let scale = series.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let tol = 1e-12 * scale;
    let mut out = Vec::new();
    let mut last: Option<(usize, f64)> = None;
    for i in 1..s.len() - 1 {
        let d2 = s[i + 1] - 2.0 * s[i] + s[i - 1];
        if d2.abs() <= tol {
            continue;
        }
        let sign = d2.signum();
        if let Some((j, prev)) = last {
            if prev != sign {
                out.push(offset + (i + j).div_ceil(2));
            }
        }
        last = Some((i, sign));
    }
    out
}

/// Which rule supplied a cell's contribution to `i_fin`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FinBranch {
    InterferenceFree,
    Inflection,
    Midpoint,
}

impl FinBranch {
    pub fn name(self) -> &'static str {
        match self {
            FinBranch::InterferenceFree => "if",
            FinBranch::Inflection => "inf",
            FinBranch::Midpoint => "mid",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PointSets {
    pub i_min: Vec<usize>,
    pub i_max: Vec<usize>,
    pub i_if: Vec<usize>,
    pub i_inf: Vec<usize>,
    pub i_fin: Vec<usize>,
    /// Half-open cells `[lo, hi)`.
    pub q_intervals: Vec<(usize, usize)>,
    pub branches: Vec<FinBranch>,
}

/// `Q` equal cells over `[start, end)`, boundaries rounded down.
pub fn partition(start: usize, end: usize, q: usize) -> Result<Vec<(usize, usize)>> {
    let len = end.saturating_sub(start);
    if q == 0 || len < q {
        return Err(Error::Config(format!(
            "cannot split {len} frames into Q = {q} nonempty cells"
        )));
    }
    Ok((0..q).map(|k| (start + k * len / q, start + (k + 1) * len / q)).collect())
}

/// Per cell: its interference-free points if any, else its inflections if
/// any, else its middle index.
pub fn build_i_fin(i_if: &[usize], i_inf: &[usize], cells: &[(usize, usize)]) -> (Vec<usize>, Vec<FinBranch>) {
    let mut out = Vec::new();
    let mut branches = Vec::with_capacity(cells.len());
    for &(lo, hi) in cells {
        let inside = |set: &[usize]| -> Vec<usize> { set.iter().copied().filter(|n| (lo..hi).contains(n)).collect() };
        let a = inside(i_if);
        if !a.is_empty() {
            out.extend(a);
            branches.push(FinBranch::InterferenceFree);
            continue;
        }
        let b = inside(i_inf);
        if !b.is_empty() {
            out.extend(b);
            branches.push(FinBranch::Inflection);
            continue;
        }
        out.push((lo + hi) / 2);
        branches.push(FinBranch::Midpoint);
    }
    out.sort_unstable();
    out.dedup();
    (out, branches)
}

/// Detection of every point set on `series[start..end]`, indices global.
pub fn point_sets(series: &[f64], start: usize, end: usize, q: usize, width: usize) -> Result<PointSets> {
    if end > series.len() || end < start + 4 {
        return Err(Error::Config(format!(
            "detection range [{start}, {end}) invalid for {} frames",
            series.len()
        )));
    }
    let window = &series[start..end];
    let shift = |v: Vec<usize>| v.into_iter().map(|n| n + start).collect::<Vec<_>>();
    let (mins, maxs) = detect_extrema(window);
    let i_min = shift(mins);
    let i_max = shift(maxs);
    let i_if = build_i_if(&i_min, &i_max);
    let i_inf = shift(detect_inflections(window, width));
    let cells = partition(start, end, q)?;
    let (i_fin, branches) = build_i_fin(&i_if, &i_inf, &cells);
    Ok(PointSets {
        i_min,
        i_max,
        i_if,
        i_inf,
        i_fin,
        q_intervals: cells,
        branches,
    })
}

/// Natural cubic spline in value/second-derivative form.
#[derive(Debug, Clone, PartialEq)]
pub struct SplineModel {
    pub knots: Vec<f64>,
    pub values: Vec<f64>,
    /// Second derivatives at the knots; zero at both ends.
    pub second_derivs: Vec<f64>,
    pub penalty: f64,
}

/// Tridiagonal `R` of size `(n-2)`: diagonal `(h_{i-1}+h_i)/3`, off `h_i/6`.
fn r_band(h: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let m = h.len() - 1;
    let diag = (0..m).map(|i| (h[i] + h[i + 1]) / 3.0).collect();
    let off = (0..m.saturating_sub(1)).map(|i| h[i + 1] / 6.0).collect();
    (diag, off)
}

/// `Qᵀ y`: second divided differences scaled by interval widths.
fn qt_times(h: &[f64], y: &[f64]) -> Vec<f64> {
    (0..h.len() - 1)
        .map(|i| (y[i + 2] - y[i + 1]) / h[i + 1] - (y[i + 1] - y[i]) / h[i])
        .collect()
}

/// `Q γ` for interior second derivatives `γ` (length `n-2`).
fn q_times(h: &[f64], gamma: &[f64]) -> Vec<f64> {
    let n = h.len() + 1;
    let mut out = vec![0.0; n];
    for (j, g) in gamma.iter().enumerate() {
        out[j] += g / h[j];
        out[j + 1] -= g * (1.0 / h[j] + 1.0 / h[j + 1]);
        out[j + 2] += g / h[j + 1];
    }
    out
}

fn knot_gaps(knots: &[f64]) -> Result<Vec<f64>> {
    let h: Vec<f64> = knots.windows(2).map(|w| w[1] - w[0]).collect();
    if h.iter().any(|d| !(*d > 0.0)) {
        return Err(Error::InvalidSignal("spline knots must be strictly increasing".into()));
    }
    Ok(h)
}

/// Interior second derivatives of the natural interpolating spline through
/// `(knots, values)`: solves `R γ = Qᵀ g`.
pub fn natural_second_derivs(knots: &[f64], values: &[f64]) -> Result<Vec<f64>> {
    let h = knot_gaps(knots)?;
    if h.len() < 2 {
        return Ok(vec![0.0; knots.len()]);
    }
    let (diag, off) = r_band(&h);
    let rhs = qt_times(&h, values);
    let gamma = linalg::solve_spd_banded(&[diag, off], &rhs)
        .ok_or_else(|| Error::Numerical("natural spline system is not positive definite".into()))?;
    let mut out = Vec::with_capacity(knots.len());
    out.push(0.0);
    out.extend(gamma);
    out.push(0.0);
    Ok(out)
}

/// `∫ φ''²` of a natural cubic spline, exact: `Σ h_i/3 (γ_i² + γ_iγ_{i+1} + γ_{i+1}²)`.
pub fn curvature_energy(knots: &[f64], second_derivs: &[f64]) -> f64 {
    knots
        .windows(2)
        .zip(second_derivs.windows(2))
        .map(|(k, g)| (k[1] - k[0]) / 3.0 * (g[0] * g[0] + g[0] * g[1] + g[1] * g[1]))
        .sum()
}

/// `Σ (y_i − g_i)² + r ∫ φ''²` for the natural spline with knot values `g`.
pub fn objective(knots: &[f64], data: &[f64], values: &[f64], r: f64) -> Result<f64> {
    let gamma = natural_second_derivs(knots, values)?;
    let misfit: f64 = data.iter().zip(values).map(|(y, g)| (y - g).powi(2)).sum();
    Ok(misfit + r * curvature_energy(knots, &gamma))
}

/// Minimiser of `Σ_{n ∈ i_fin} (series[n] − φ(n/N))² + r ∫ φ''²` over
/// natural cubic splines with knots `n/N`, by the Reinsch system
/// `(R + r QᵀQ) γ = Qᵀ y`, `g = y − r Q γ`.
pub fn fit_spline(series: &[f64], i_fin: &[usize], r: f64, n_frames: usize) -> Result<SplineModel> {
    if !(0.0..1.0).contains(&r) {
        return Err(Error::Config(format!("spline penalty r = {r} must lie in [0, 1)")));
    }
    if i_fin.len() < 2 {
        return Err(Error::InvalidSignal(format!(
            "spline fit needs at least 2 points, got {}",
            i_fin.len()
        )));
    }
    if n_frames == 0 || i_fin.iter().any(|&n| n >= series.len()) {
        return Err(Error::InvalidSignal("spline abscissae outside the series".into()));
    }
    let knots: Vec<f64> = i_fin.iter().map(|&n| n as f64 / n_frames as f64).collect();
    let y: Vec<f64> = i_fin.iter().map(|&n| series[n]).collect();
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("spline data contain non-finite values".into()));
    }
    let h = knot_gaps(&knots)?;
    if h.len() < 2 {
        return Ok(SplineModel {
            knots,
            values: y,
            second_derivs: vec![0.0; 2],
            penalty: r,
        });
    }
    let m = h.len() - 1;
    let (rd, ro) = r_band(&h);
    // QᵀQ is pentadiagonal; column j of Q has entries at rows j, j+1, j+2.
    let qcol = |j: usize| [1.0 / h[j], -(1.0 / h[j] + 1.0 / h[j + 1]), 1.0 / h[j + 1]];
    let mut band = vec![vec![0.0; m], vec![0.0; m.saturating_sub(1)], vec![0.0; m.saturating_sub(2)]];
    for i in 0..m {
        let a = qcol(i);
        band[0][i] = rd[i] + r * a.iter().map(|v| v * v).sum::<f64>();
        if i + 1 < m {
            let b = qcol(i + 1);
            band[1][i] = ro[i] + r * (a[1] * b[0] + a[2] * b[1]);
        }
        if i + 2 < m {
            let b = qcol(i + 2);
            band[2][i] = r * a[2] * b[0];
        }
    }
    let rhs = qt_times(&h, &y);
    let gamma = linalg::solve_spd_banded(&band, &rhs)
        .ok_or_else(|| Error::Numerical("smoothing spline system is not positive definite".into()))?;
    let qg = q_times(&h, &gamma);
    let values: Vec<f64> = y.iter().zip(&qg).map(|(yi, q)| yi - r * q).collect();
    let mut second_derivs = Vec::with_capacity(m + 2);
    second_derivs.push(0.0);
    second_derivs.extend(gamma);
    second_derivs.push(0.0);
    Ok(SplineModel {
        knots,
        values,
        second_derivs,
        penalty: r,
    })
}

impl SplineModel {
    pub fn eval(&self, t: f64) -> f64 {
        let k = &self.knots;
        let g = &self.values;
        let c = &self.second_derivs;
        let n = k.len();
        if t <= k[0] {
            let h = k[1] - k[0];
            let slope = (g[1] - g[0]) / h - h / 6.0 * (2.0 * c[0] + c[1]);
            return g[0] + slope * (t - k[0]);
        }
        if t >= k[n - 1] {
            let h = k[n - 1] - k[n - 2];
            let slope = (g[n - 1] - g[n - 2]) / h + h / 6.0 * (c[n - 2] + 2.0 * c[n - 1]);
            return g[n - 1] + slope * (t - k[n - 1]);
        }
        let i = k.partition_point(|x| *x <= t).min(n - 1) - 1;
        let h = k[i + 1] - k[i];
        let a = t - k[i];
        let b = k[i + 1] - t;
        (a * g[i + 1] + b * g[i]) / h - a * b / 6.0 * ((1.0 + a / h) * c[i + 1] + (1.0 + b / h) * c[i])
    }

    pub fn second_derivative(&self, t: f64) -> f64 {
        let k = &self.knots;
        let n = k.len();
        if t <= k[0] || t >= k[n - 1] {
            return 0.0;
        }
        let i = k.partition_point(|x| *x <= t).min(n - 1) - 1;
        let h = k[i + 1] - k[i];
        ((t - k[i]) * self.second_derivs[i + 1] + (k[i + 1] - t) * self.second_derivs[i]) / h
    }
}

pub fn eval_spline(model: &SplineModel, t_grid: &[f64]) -> Vec<f64> {
    t_grid.iter().map(|&t| model.eval(t)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RefineConfig {
    pub cells: usize,
    pub penalty: f64,
    pub outlier_c: f64,
    pub inflection_width: usize,
}

impl Default for RefineConfig {
    fn default() -> Self {
        Self {
            cells: DEFAULT_CELLS,
            penalty: DEFAULT_PENALTY,
            outlier_c: DEFAULT_OUTLIER_C,
            inflection_width: DEFAULT_INFLECTION_WIDTH,
        }
    }
}

impl RefineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.cells == 0 {
            return Err(Error::Config("Q must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.penalty) {
            return Err(Error::Config(format!("spline penalty r = {} must lie in [0, 1)", self.penalty)));
        }
        if !(self.outlier_c > 0.0) {
            return Err(Error::Config(format!("outlier constant c = {} must be positive", self.outlier_c)));
        }
        if self.inflection_width == 0 {
            return Err(Error::Config("inflection smoothing width must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RefinedTrack {
    pub cleaned: IFTrack,
    pub filled: Vec<f64>,
    pub points: PointSets,
    pub model: SplineModel,
    /// `ψ(n/N)` on every frame.
    pub psi: Vec<f64>,
}

/// Outlier masking, gap filling, detection on `[start, end)`, spline fit
/// and evaluation on the full frame grid.
pub fn refine_track(track: &IFTrack, cfg: &RefineConfig, start: usize, end: usize) -> Result<RefinedTrack> {
    cfg.validate()?;
    let cleaned = reject_outliers(track, cfg.outlier_c)?;
    let filled = pchip_fill(&cleaned)?;
    let n = filled.len();
    let points = point_sets(&filled, start, end, cfg.cells, cfg.inflection_width)?;
    let model = fit_spline(&filled, &points.i_fin, cfg.penalty, n)?;
    let grid: Vec<f64> = (0..n).map(|k| k as f64 / n as f64).collect();
    let psi = eval_spline(&model, &grid);
    Ok(RefinedTrack {
        cleaned,
        filled,
        points,
        model,
        psi,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    #[test]
    fn constant_track_keeps_everything() {
        let t = IFTrack::from_values(0, vec![220.5; 50]);
        let out = reject_outliers(&t, 8.0).unwrap();
        assert_eq!(out.masked_count(), 0);
    }

    #[test]
    fn spike_is_masked() {
        let mut v: Vec<f64> = (0..100).map(|n| 200.0 + 0.3 * (n as f64 * 0.7).sin()).collect();
        v[40] += 256.0;
        let t = IFTrack::from_values(1, v);
        let tau = jump_threshold(&t, 8.0);
        assert!(256.0 > tau);
        let out = reject_outliers(&t, 8.0).unwrap();
        assert!(out.outlier_mask[40]);
        assert_eq!(out.masked_count(), 1);
    }

    #[test]
    fn chirp_has_no_outliers() {
        let t = IFTrack::from_values(0, (0..200).map(|n| 200.0 + 0.08 * n as f64).collect());
        assert!((jump_threshold(&t, 8.0) - 0.64).abs() < 1e-9);
        assert_eq!(reject_outliers(&t, 8.0).unwrap().masked_count(), 0);
    }

    #[test]
    fn upstream_masks_survive_and_quality_error() {
        let mut t = IFTrack::from_values(0, vec![100.0; 10]);
        t.outlier_mask[3] = true;
        t.degenerate[3] = true;
        assert!(reject_outliers(&t, 8.0).unwrap().outlier_mask[3]);
        for n in 0..6 {
            t.outlier_mask[n] = true;
        }
        assert!(matches!(reject_outliers(&t, 8.0), Err(Error::TrackQuality { masked: 6, .. })));
    }

    #[test]
    fn pchip_identity_without_masks() {
        let v: Vec<f64> = (0..30).map(|n| (n as f64 * 0.3).sin() * 5.0 + 100.0).collect();
        let t = IFTrack::from_values(0, v.clone());
        assert_eq!(pchip_fill(&t).unwrap(), v);
    }

    #[test]
    fn pchip_matches_reference_values() {
        // reference: scipy.interpolate.PchipInterpolator on the kept points
        let y = [
            0.0, 0.5, 2.0, 2.0, 2.0, 3.0, 7.0, 7.5, 8.0, 10.0, 13.0, 13.2, 14.0, 20.0, 21.0, 21.0, 22.0, 25.0, 26.0, 30.0,
        ];
        let expected = [
            0.0,
            0.5,
            2.0,
            2.371241719837723,
            2.5579260008807188,
            3.0,
            7.0,
            9.230102040816327,
            11.046938775510206,
            12.340306122448979,
            13.0,
            13.2,
            14.0,
            20.0,
            20.58164005805515,
            21.0,
            22.0,
            25.0,
            26.0,
            30.0,
        ];
        let mut t = IFTrack::from_values(0, y.to_vec());
        for n in [3, 4, 7, 8, 9, 14] {
            t.outlier_mask[n] = true;
        }
        let out = pchip_fill(&t).unwrap();
        for (a, b) in out.iter().zip(expected) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
        for w in out.windows(2) {
            assert!(w[1] >= w[0]);
        }
    }

    #[test]
    fn pchip_constant_extrapolation_and_too_few_points() {
        let mut t = IFTrack::from_values(0, vec![1.0, 2.0, 3.0, 4.0, 5.0]);
        t.outlier_mask[0] = true;
        t.outlier_mask[4] = true;
        let out = pchip_fill(&t).unwrap();
        assert_eq!(out[0], 2.0);
        assert_eq!(out[4], 4.0);
        t.outlier_mask[1] = true;
        t.outlier_mask[2] = true;
        assert!(pchip_fill(&t).is_err());
    }

    #[test]
    fn sine_extrema() {
        let n = 1000;
        let s: Vec<f64> = (0..n).map(|k| (2.0 * PI * 10.0 * k as f64 / n as f64).sin()).collect();
        let (mins, maxs) = detect_extrema(&s);
        assert_eq!(mins.len(), 10);
        assert_eq!(maxs.len(), 10);
        for q in 0..10 {
            assert!(maxs[q] < mins[q]);
            assert!((maxs[q] as f64 - (q as f64 + 0.25) * 100.0).abs() <= 1.0);
        }
        let mono: Vec<f64> = (0..50).map(|k| k as f64).collect();
        assert_eq!(detect_extrema(&mono), (vec![], vec![]));
    }

    #[test]
    fn plateau_midpoint_and_endpoints() {
        let s = [3.0, 1.0, 2.0, 5.0, 5.0, 5.0, 5.0, 2.0, 0.0];
        let (mins, maxs) = detect_extrema(&s);
        assert_eq!(mins, vec![1]);
        assert_eq!(maxs, vec![4]);
    }

    #[test]
    fn i_if_arithmetic() {
        assert_eq!(build_i_if(&[100, 300], &[200]), vec![150, 250]);
        assert_eq!(build_i_if(&[7], &[]), Vec::<usize>::new());
        assert_eq!(build_i_if(&[1], &[2]), vec![2]);
    }

    #[test]
    fn cubic_has_one_inflection() {
        let n = 400;
        let s: Vec<f64> = (0..n).map(|k| (k as f64 / n as f64 - 0.5).powi(3)).collect();
        let inf = detect_inflections(&s, 5);
        assert_eq!(inf.len(), 1);
        assert!((inf[0] as f64 - 200.0).abs() <= 5.0);
        let lin: Vec<f64> = (0..100).map(|k| 3.0 + 0.5 * k as f64).collect();
        assert!(detect_inflections(&lin, 5).is_empty());
    }

    #[test]
    fn sine_inflections_at_zero_crossings() {
        let n = 1000;
        let s: Vec<f64> = (0..n).map(|k| (2.0 * PI * 4.0 * k as f64 / n as f64).sin()).collect();
        let inf = detect_inflections(&s, 5);
        let zeros: Vec<f64> = (1..8).map(|j| j as f64 * 125.0).collect();
        assert_eq!(inf.len(), zeros.len());
        for (a, b) in inf.iter().zip(&zeros) {
            assert!((*a as f64 - b).abs() <= 5.0);
        }
    }

    #[test]
    fn i_fin_branches() {
        let cells = partition(0, 80, 8).unwrap();
        let i_if = [2, 5, 13, 27, 33];
        let i_inf = [45, 52, 70, 3];
        let (fin, br) = build_i_fin(&i_if, &i_inf, &cells);
        use FinBranch::*;
        assert_eq!(br, vec![InterferenceFree, InterferenceFree, InterferenceFree, InterferenceFree, Inflection, Inflection, Midpoint, Inflection]);
        assert_eq!(fin, vec![2, 5, 13, 27, 33, 45, 52, 65, 70]);
        let (fin, br) = build_i_fin(&[], &[], &cells);
        assert!(br.iter().all(|b| *b == Midpoint));
        assert_eq!(fin, vec![5, 15, 25, 35, 45, 55, 65, 75]);
        let every: Vec<usize> = (0..80).step_by(7).collect();
        assert_eq!(build_i_fin(&every, &i_inf, &cells).0, every);
        assert!(partition(0, 5, 8).is_err());
    }

    #[test]
    fn spline_interpolates_at_zero_penalty() {
        let series: Vec<f64> = (0..100).map(|k| (k as f64 * 0.11).sin() * 3.0).collect();
        let fin = [3, 10, 22, 40, 41, 70, 95];
        let m = fit_spline(&series, &fin, 0.0, 100).unwrap();
        for &n in &fin {
            assert!((m.eval(n as f64 / 100.0) - series[n]).abs() < 1e-8);
        }
    }

    #[test]
    fn stiff_spline_reproduces_a_line() {
        let series: Vec<f64> = (0..200).map(|k| 150.0 + 40.0 * k as f64 / 200.0).collect();
        let fin = [5, 30, 31, 77, 120, 160, 199];
        let m = fit_spline(&series, &fin, 1.0 - 1e-9, 200).unwrap();
        for k in 0..200 {
            assert!((m.eval(k as f64 / 200.0) - series[k]).abs() < 1e-6);
        }
        let mid = 0.5 * (m.knots[2] + m.knots[3]);
        assert!((m.eval(mid) - (150.0 + 40.0 * mid)).abs() < 1e-6);
    }

    #[test]
    fn natural_boundary_and_continuity() {
        let series: Vec<f64> = (0..60).map(|k| (k as f64 * 0.2).cos() * 4.0 + k as f64 * 0.1).collect();
        let fin = [0, 6, 15, 21, 33, 44, 59];
        let m = fit_spline(&series, &fin, 0.3, 60).unwrap();
        let (a, b) = (m.knots[0], m.knots[6]);
        assert!(m.second_derivative(a + 1e-12).abs() < 1e-8);
        assert!(m.second_derivative(b - 1e-12).abs() < 1e-8);
        for &k in &m.knots[1..6] {
            let e = 1e-9;
            assert!((m.eval(k - e) - m.eval(k + e)).abs() < 1e-6);
            assert!((m.second_derivative(k - e) - m.second_derivative(k + e)).abs() < 1e-4);
        }
        // linear extension is C¹ at the ends
        let h = 1e-7;
        let left = (m.eval(a) - m.eval(a - h)) / h;
        let right = (m.eval(a + h) - m.eval(a)) / h;
        assert!((left - right).abs() < 1e-4 * left.abs().max(1.0));
    }

    #[test]
    fn fit_errors() {
        let s = vec![1.0; 10];
        assert!(fit_spline(&s, &[3], 0.5, 10).is_err());
        assert!(matches!(fit_spline(&s, &[1, 3], 1.0, 10), Err(Error::Config(_))));
        assert!(matches!(fit_spline(&s, &[1, 3], -0.1, 10), Err(Error::Config(_))));
    }

    #[test]
    fn fitted_spline_is_first_order_optimal() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let series: Vec<f64> = (0..300).map(|k| 200.0 + 5.0 * (k as f64 * 0.05).sin() + rng.random::<f64>()).collect();
        let fin: Vec<usize> = (2..300).step_by(13).collect();
        for r in [0.0, 0.2, 0.9999] {
            let m = fit_spline(&series, &fin, r, 300).unwrap();
            let y: Vec<f64> = fin.iter().map(|&n| series[n]).collect();
            let base = objective(&m.knots, &y, &m.values, r).unwrap();
            for _ in 0..200 {
                let g: Vec<f64> = m.values.iter().map(|v| v + 1e-4 * (rng.random::<f64>() - 0.5)).collect();
                let o = objective(&m.knots, &y, &g, r).unwrap();
                assert!(o >= base - 1e-9 * base, "r={r}: {o} < {base}");
            }
        }
    }

    fn brute_if(i_min: &[usize], i_max: &[usize]) -> Vec<usize> {
        let mut merged: Vec<usize> = Vec::new();
        for n in 0..=i_min.iter().chain(i_max).copied().max().unwrap_or(0) {
            if i_min.contains(&n) || i_max.contains(&n) {
                merged.push(n);
            }
        }
        let mut out = Vec::new();
        for k in 0..merged.len().saturating_sub(1) {
            let m = ((merged[k] + merged[k + 1]) as f64 / 2.0 + 0.5).floor() as usize;
            if !out.contains(&m) {
                out.push(m);
            }
        }
        out
    }

    fn brute_fin(i_if: &[usize], i_inf: &[usize], lo: usize, hi: usize, q: usize) -> Vec<usize> {
        let mut out = Vec::new();
        for k in 0..q {
            let a = lo + k * (hi - lo) / q;
            let b = lo + (k + 1) * (hi - lo) / q;
            let from_if: Vec<usize> = (a..b).filter(|n| i_if.contains(n)).collect();
            let from_inf: Vec<usize> = (a..b).filter(|n| i_inf.contains(n)).collect();
            if !from_if.is_empty() {
                out.extend(from_if);
            } else if !from_inf.is_empty() {
                out.extend(from_inf);
            } else {
                out.push((a + b) / 2);
            }
        }
        out.sort_unstable();
        out.dedup();
        out
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn i_if_matches_brute_force(
            mins in proptest::collection::btree_set(0usize..500, 0..30),
            maxs in proptest::collection::btree_set(0usize..500, 0..30),
        ) {
            let a: Vec<usize> = mins.into_iter().collect();
            let b: Vec<usize> = maxs.into_iter().collect();
            prop_assert_eq!(build_i_if(&a, &b), brute_if(&a, &b));
        }

        #[test]
        fn i_fin_matches_brute_force(
            i_if in proptest::collection::btree_set(0usize..400, 0..25),
            i_inf in proptest::collection::btree_set(0usize..400, 0..25),
            lo in 0usize..50,
            len in 20usize..350,
            q in 1usize..20,
        ) {
            let a: Vec<usize> = i_if.into_iter().collect();
            let b: Vec<usize> = i_inf.into_iter().collect();
            let cells = partition(lo, lo + len, q).unwrap();
            let (fin, br) = build_i_fin(&a, &b, &cells);
            prop_assert_eq!(fin, brute_fin(&a, &b, lo, lo + len, q));
            prop_assert_eq!(br.len(), q);
        }

        #[test]
        fn pchip_never_overshoots(
            steps in proptest::collection::vec(0.0f64..5.0, 8..40),
            mask in proptest::collection::vec(any::<bool>(), 40),
        ) {
            let mut acc = 100.0;
            let v: Vec<f64> = steps.iter().map(|s| { acc += s; acc }).collect();
            let mut t = IFTrack::from_values(0, v.clone());
            let n = v.len();
            for k in 1..n - 1 {
                t.outlier_mask[k] = mask[k];
            }
            let out = pchip_fill(&t).unwrap();
            let keep: Vec<usize> = (0..n).filter(|&k| !t.outlier_mask[k]).collect();
            for w in keep.windows(2) {
                for k in w[0]..=w[1] {
                    prop_assert!(out[k] >= v[w[0]] - 1e-9 && out[k] <= v[w[1]] + 1e-9);
                }
            }
        }
    }
}
