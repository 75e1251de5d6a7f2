//! Cadzow structured low-rank denoising of coefficient frames and the
//! total-least-squares annihilating filter.

use nalgebra::DMatrix;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::linalg::{self, SquareMatrix, ToeplitzOperator, C64};
use crate::prony::{AnnihilatingFilter, CoefficientFrame};

pub const DEFAULT_SV_RATIO_STOP: f64 = 1e-3;
pub const DEFAULT_MAX_ITERS: usize = 30;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CadzowConfig {
    /// Toeplitz order `T`; the matrix is `(T+1)×(T+1)`.
    pub order_t: usize,
    /// Stop once `σ_{P+1} / σ_P` drops below this.
    pub sv_ratio_stop: f64,
    pub max_iters: usize,
}

impl CadzowConfig {
    /// `T = M₀`, ratio `1e-3`, 30 iterations.
    pub fn with_defaults(m0: usize) -> Self {
        Self {
            order_t: m0,
            sv_ratio_stop: DEFAULT_SV_RATIO_STOP,
            max_iters: DEFAULT_MAX_ITERS,
        }
    }

    pub fn validate(&self, order: usize, m0: usize) -> Result<()> {
        if !(order <= self.order_t && self.order_t <= m0) {
            return Err(Error::Config(format!(
                "Cadzow order T = {} must satisfy P = {order} ≤ T ≤ M₀ = {m0}",
                self.order_t
            )));
        }
        if !(self.sv_ratio_stop > 0.0 && self.sv_ratio_stop < 1.0) {
            return Err(Error::Config(format!(
                "singular value stop ratio {} must lie in (0, 1)",
                self.sv_ratio_stop
            )));
        }
        if self.max_iters == 0 {
            return Err(Error::Config("Cadzow needs at least one iteration".into()));
        }
        Ok(())
    }
}

/// `B[i][j] = l_{i-j}` for `i, j = 0..=T`.
pub fn toeplitz_matrix(frame: &CoefficientFrame, order_t: usize) -> SquareMatrix {
    let n = order_t + 1;
    let mut b = SquareMatrix::zeros(n);
    for i in 0..n {
        for j in 0..n {
            b.set(i, j, frame.get(i as isize - j as isize));
        }
    }
    b
}

/// Mean of each diagonal `d = i - j`, returned for `d = -T..=T`.
pub fn diagonal_average(m: &SquareMatrix) -> Vec<C64> {
    let n = m.n as isize;
    (-(n - 1)..n)
        .map(|d| {
            let mut acc = C64::new(0.0, 0.0);
            let mut count = 0usize;
            for j in 0..n {
                let i = j + d;
                if (0..n).contains(&i) {
                    acc += m.get(i as usize, j as usize);
                    count += 1;
                }
            }
            acc / count as f64
        })
        .collect()
}

/// Best rank-`p` approximation by truncated SVD, with all singular values.
pub fn rank_truncate(m: &SquareMatrix, p: usize) -> (SquareMatrix, Vec<f64>) {
    let svd = linalg::thin_svd(m.to_dmatrix());
    let n = m.n;
    let mut out = SquareMatrix::zeros(n);
    for k in 0..p.min(svd.singular_values.len()) {
        let s = svd.singular_values[k];
        for i in 0..n {
            let ui = svd.u[(i, k)] * s;
            for j in 0..n {
                out.data[i * n + j] += ui * svd.v[(j, k)].conj();
            }
        }
    }
    (out, svd.singular_values)
}

/// One stage of the Cadzow loop, for diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct ToeplitzSnapshot {
    pub matrix: SquareMatrix,
    /// Descending; the leading `P+1` are always present.
    pub singular_values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CadzowResult {
    pub frame: CoefficientFrame,
    /// Number of SVDs computed.
    pub iterations: usize,
    pub converged: bool,
    /// Leading singular values at each iteration.
    pub sv_history: Vec<Vec<f64>>,
}

fn ratio_reached(sv: &[f64], order: usize, stop: f64) -> bool {
    let lead = sv[order - 1];
    let next = sv.get(order).copied().unwrap_or(0.0);
    lead == 0.0 || next / lead < stop
}

/// Alternates rank-`P` truncation and diagonal averaging on the Toeplitz
/// matrix built from `l_{-T..T}` until `σ_{P+1}/σ_P < sv_ratio_stop`.
/// Entries with `|m| > T` pass through unchanged.
pub fn cadzow(frame: &CoefficientFrame, order: usize, cfg: &CadzowConfig) -> Result<CadzowResult> {
    if order == 0 {
        return Err(Error::Config("model order P must be at least 1".into()));
    }
    cfg.validate(order, frame.m0)?;
    let t = cfg.order_t as isize;
    let hermitian = frame.hermitian_defect() <= 1e-14;
    let mut current = frame.clone();
    let mut history = Vec::new();
    let mut converged = false;
    let mut warm: Option<Vec<Vec<C64>>> = None;
    let mut planner = FftPlanner::new();

    for _ in 0..cfg.max_iters {
        let averaged = if hermitian {
            let diagonals = (-t..=t).map(|d| current.get(d)).collect();
            let op = ToeplitzOperator::new(diagonals, &mut planner);
            let eig = linalg::dominant_hermitian_eigs(&op, order, warm.as_deref());
            let sv = eig.singular_values();
            history.push(sv.clone());
            if ratio_reached(&sv, order, cfg.sv_ratio_stop) {
                converged = true;
                break;
            }
            let averaged = hermitian_low_rank_diagonals(&eig.values[..order], &eig.vectors[..order]);
            warm = Some(eig.vectors);
            averaged
        } else {
            let b = toeplitz_matrix(&current, cfg.order_t);
            let (low, sv) = rank_truncate(&b, order);
            history.push(sv.clone());
            if ratio_reached(&sv, order, cfg.sv_ratio_stop) {
                converged = true;
                break;
            }
            diagonal_average(&low)
        };
        for d in -t..=t {
            current.set(d, averaged[(d + t) as usize]);
        }
    }

    Ok(CadzowResult {
        frame: current,
        iterations: history.len(),
        converged,
        sv_history: history,
    })
}

/// Diagonal means of `Σ_k λ_k v_k v_kᴴ`, for `d = -T..=T`.
fn hermitian_low_rank_diagonals(values: &[f64], vectors: &[Vec<C64>]) -> Vec<C64> {
    let n = vectors[0].len();
    let mut upper = vec![C64::new(0.0, 0.0); n];
    for (lambda, v) in values.iter().zip(vectors) {
        for (d, slot) in upper.iter_mut().enumerate() {
            let mut acc = C64::new(0.0, 0.0);
            for j in 0..n - d {
                acc += v[j + d] * v[j].conj();
            }
            *slot += acc * *lambda;
        }
    }
    for (d, slot) in upper.iter_mut().enumerate() {
        *slot /= (n - d) as f64;
    }
    upper[0] = C64::new(upper[0].re, 0.0);
    let mut out = Vec::with_capacity(2 * n - 1);
    out.extend(upper[1..].iter().rev().map(|v| v.conj()));
    out.extend(upper.iter().copied());
    out
}

/// `(2T-P+1)×(P+1)` matrix with rows `(l_k, l_{k-1}, …, l_{k-P})`,
/// `k = -T+P..=T`.
pub fn tlsa_matrix(frame: &CoefficientFrame, order: usize, order_t: usize) -> DMatrix<C64> {
    let rows = 2 * order_t - order + 1;
    let t = order_t as isize;
    let p = order as isize;
    DMatrix::from_fn(rows, order + 1, |i, c| frame.get(-t + p + i as isize - c as isize))
}

/// Unit-norm minimiser of `‖A_T h‖²`: the right singular vector of the
/// smallest singular value, then rescaled so `h₀ = 1`.
pub fn tlsa_filter(frame: &CoefficientFrame, order: usize, order_t: usize) -> Result<AnnihilatingFilter> {
    if order == 0 {
        return Err(Error::Config("model order P must be at least 1".into()));
    }
    if !(order <= order_t && order_t <= frame.m0) {
        return Err(Error::Config(format!(
            "TLSA order T = {order_t} must satisfy P = {order} ≤ T ≤ M₀ = {}",
            frame.m0
        )));
    }
    let svd = linalg::thin_svd(tlsa_matrix(frame, order, order_t));
    let sv = &svd.singular_values;
    let last = sv.len() - 1;
    let smax = sv[0];
    let smin = sv[last];
    let condition = if sv[last - 1] > 0.0 { smax / sv[last - 1] } else { f64::INFINITY };
    let ambiguous = sv.len() > 1 && (sv[last - 1] - smin) <= 1e-12 * smax;
    let unit: Vec<C64> = svd.v.column(last).iter().copied().collect();
    let lead = unit[0];
    if ambiguous || !(lead.norm() > 1e-14) {
        return Ok(AnnihilatingFilter {
            coeffs: vec![C64::new(0.0, 0.0); order],
            unit_norm: Some(unit),
            condition,
            degenerate: true,
        });
    }
    Ok(AnnihilatingFilter {
        coeffs: unit[1..].iter().map(|h| h / lead).collect(),
        unit_norm: Some(unit),
        condition,
        degenerate: false,
    })
}
