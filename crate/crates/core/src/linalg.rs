//! Small dense complex linear algebra used by the Prony and Cadzow stages.
//!
//! Dense decompositions are delegated to `nalgebra`. The one hand-written
//! solver is a warm-startable block subspace iteration for the dominant
//! eigenpairs of a Hermitian matrix, which is what the Cadzow loop calls
//! once per iteration per frame.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector, Schur, SymmetricEigen, SVD};
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

pub type C64 = Complex64;

/// Eigenpairs of a Hermitian matrix, ordered by decreasing `|value|`.
#[derive(Debug, Clone)]
pub struct HermitianEigs {
    pub values: Vec<f64>,
    pub vectors: Vec<Vec<C64>>,
}

impl HermitianEigs {
    /// Singular values implied by the eigenvalues (`|λ|`, descending).
    pub fn singular_values(&self) -> Vec<f64> {
        self.values.iter().map(|v| v.abs()).collect()
    }
}

/// Row-major dense square matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SquareMatrix {
    pub n: usize,
    pub data: Vec<C64>,
}

impl SquareMatrix {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![C64::new(0.0, 0.0); n * n],
        }
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> C64 {
        self.data[i * self.n + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: C64) {
        self.data[i * self.n + j] = v;
    }

    pub fn matvec(&self, x: &[C64], out: &mut [C64]) {
        let n = self.n;
        for (i, o) in out.iter_mut().enumerate() {
            let row = &self.data[i * n..(i + 1) * n];
            let mut acc = C64::new(0.0, 0.0);
            for (a, b) in row.iter().zip(x) {
                acc += a * b;
            }
            *o = acc;
        }
    }

    pub fn to_dmatrix(&self) -> DMatrix<C64> {
        DMatrix::from_row_slice(self.n, self.n, &self.data)
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn is_hermitian(&self, rel_tol: f64) -> bool {
        let scale = self.data.iter().map(|v| v.norm()).fold(0.0, f64::max);
        let tol = rel_tol * scale;
        for i in 0..self.n {
            for j in i..self.n {
                if (self.get(i, j) - self.get(j, i).conj()).norm() > tol {
                    return false;
                }
            }
        }
        true
    }
}

/// A Hermitian matrix accessed through products.
pub trait HermitianOperator {
    fn dim(&self) -> usize;
    fn apply(&self, x: &[C64], out: &mut [C64]);
    fn dense(&self) -> SquareMatrix;
    fn frobenius_norm(&self) -> f64;
}

impl HermitianOperator for SquareMatrix {
    fn dim(&self) -> usize {
        self.n
    }

    fn apply(&self, x: &[C64], out: &mut [C64]) {
        self.matvec(x, out);
    }

    fn dense(&self) -> SquareMatrix {
        self.clone()
    }

    fn frobenius_norm(&self) -> f64 {
        SquareMatrix::frobenius_norm(self)
    }
}

/// Smallest `2^a 3^b ≥ min_len`.
fn smooth_length(min_len: usize) -> usize {
    let mut best = min_len.next_power_of_two();
    let mut three = 1;
    while three < best {
        let mut v = three;
        while v < min_len {
            v *= 2;
        }
        best = best.min(v);
        three *= 3;
    }
    best
}

/// Square Toeplitz matrix `B[i][j] = t_{i-j}`, applied by circulant
/// embedding and FFT.
pub struct ToeplitzOperator {
    n: usize,
    /// `t_{-(n-1)}..=t_{n-1}`.
    diagonals: Vec<C64>,
    spectrum: Vec<C64>,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl ToeplitzOperator {
    /// `diagonals[d + n - 1] = t_d` for `d = -(n-1)..=n-1`.
    pub fn new(diagonals: Vec<C64>, planner: &mut FftPlanner<f64>) -> Self {
        let n = diagonals.len().div_ceil(2);
        let len = smooth_length(2 * n - 1);
        let forward = planner.plan_fft_forward(len);
        let inverse = planner.plan_fft_inverse(len);
        let mut spectrum = vec![C64::new(0.0, 0.0); len];
        for d in 0..n {
            spectrum[d] = diagonals[n - 1 + d];
        }
        for d in 1..n {
            spectrum[len - d] = diagonals[n - 1 - d];
        }
        forward.process(&mut spectrum);
        let scale = 1.0 / len as f64;
        for v in spectrum.iter_mut() {
            *v *= scale;
        }
        Self {
            n,
            diagonals,
            spectrum,
            forward,
            inverse,
        }
    }

    pub fn get(&self, i: usize, j: usize) -> C64 {
        self.diagonals[self.n - 1 + i - j]
    }
}

impl HermitianOperator for ToeplitzOperator {
    fn dim(&self) -> usize {
        self.n
    }

    fn apply(&self, x: &[C64], out: &mut [C64]) {
        let mut buf = vec![C64::new(0.0, 0.0); self.spectrum.len()];
        buf[..self.n].copy_from_slice(x);
        self.forward.process(&mut buf);
        for (b, s) in buf.iter_mut().zip(&self.spectrum) {
            *b *= s;
        }
        self.inverse.process(&mut buf);
        out.copy_from_slice(&buf[..self.n]);
    }

    fn dense(&self) -> SquareMatrix {
        let mut m = SquareMatrix::zeros(self.n);
        for i in 0..self.n {
            for j in 0..self.n {
                m.set(i, j, self.get(i, j));
            }
        }
        m
    }

    fn frobenius_norm(&self) -> f64 {
        let n = self.n as isize;
        (-(n - 1)..n)
            .map(|d| (n - d.abs()) as f64 * self.diagonals[(d + n - 1) as usize].norm_sqr())
            .sum::<f64>()
            .sqrt()
    }
}

fn dot(a: &[C64], b: &[C64]) -> C64 {
    // a^H b
    a.iter()
        .zip(b)
        .fold(C64::new(0.0, 0.0), |acc, (x, y)| acc + x.conj() * y)
}

fn norm(a: &[C64]) -> f64 {
    a.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
}

/// Modified Gram-Schmidt with one reorthogonalisation pass. Columns that
/// collapse numerically are replaced by deterministic fill vectors.
fn orthonormalize(cols: &mut [Vec<C64>], fill_seed: &mut u64) {
    let n = cols.first().map_or(0, Vec::len);
    for j in 0..cols.len() {
        let mut attempts = 0;
        loop {
            let original = norm(&cols[j]).max(f64::MIN_POSITIVE);
            for _ in 0..2 {
                for i in 0..j {
                    let (head, tail) = cols.split_at_mut(j);
                    let proj = dot(&head[i], &tail[0]);
                    for (t, q) in tail[0].iter_mut().zip(&head[i]) {
                        *t -= proj * q;
                    }
                }
            }
            let nrm = norm(&cols[j]);
            if nrm > 1e-10 * original && nrm > 0.0 {
                for v in cols[j].iter_mut() {
                    *v /= nrm;
                }
                break;
            }
            attempts += 1;
            cols[j] = pseudo_random_vector(n, fill_seed);
            if attempts > 8 {
                break;
            }
        }
    }
}

fn pseudo_random_vector(n: usize, state: &mut u64) -> Vec<C64> {
    let mut next = || {
        // xorshift64*
        *state ^= *state >> 12;
        *state ^= *state << 25;
        *state ^= *state >> 27;
        let bits = state.wrapping_mul(0x2545_F491_4F6C_DD1D);
        (bits >> 11) as f64 / (1u64 << 53) as f64 - 0.5
    };
    (0..n).map(|_| C64::new(next(), next())).collect()
}

/// Full eigendecomposition of a Hermitian matrix.
pub fn hermitian_eigs(a: &SquareMatrix) -> HermitianEigs {
    let eig = SymmetricEigen::new(a.to_dmatrix());
    let mut order: Vec<usize> = (0..a.n).collect();
    order.sort_by(|&x, &y| {
        eig.eigenvalues[y]
            .abs()
            .total_cmp(&eig.eigenvalues[x].abs())
            .then(x.cmp(&y))
    });
    HermitianEigs {
        values: order.iter().map(|&k| eig.eigenvalues[k]).collect(),
        vectors: order
            .iter()
            .map(|&k| eig.eigenvectors.column(k).iter().copied().collect())
            .collect(),
    }
}

/// Dominant eigenpairs of a Hermitian matrix by magnitude.
///
/// The leading `vectors` pairs are converged to a residual of `1e-13·|λ₁|`;
/// one further eigenvalue is estimated until it stabilises, with its vector
/// returned as-is. This is what the Cadzow loop needs: an accurate rank-P
/// projector plus the (P+1)-th singular value for its stopping rule.
///
/// Block subspace iteration with Rayleigh-Ritz extraction. `warm` seeds the
/// block (typically with the previous Cadzow iterate's vectors). Falls back
/// to a full decomposition when the matrix is small or the iteration stalls.
pub fn dominant_hermitian_eigs<A: HermitianOperator + ?Sized>(
    a: &A,
    vectors: usize,
    warm: Option<&[Vec<C64>]>,
) -> HermitianEigs {
    let n = a.dim();
    let k = (vectors + 1).min(n);
    let block = (k + 3).min(n);
    let truncated = |mut full: HermitianEigs| {
        full.values.truncate(k);
        full.vectors.truncate(k);
        full
    };
    if n <= 12 || block >= n {
        return truncated(hermitian_eigs(&a.dense()));
    }

    let mut seed = 0x9E37_79B9_7F4A_7C15u64;
    let mut x: Vec<Vec<C64>> = Vec::with_capacity(block);
    if let Some(w) = warm {
        x.extend(w.iter().take(block).filter(|v| v.len() == n).cloned());
    }
    while x.len() < block {
        x.push(pseudo_random_vector(n, &mut seed));
    }
    orthonormalize(&mut x, &mut seed);

    let scale = a.frobenius_norm();
    if scale == 0.0 {
        return HermitianEigs {
            values: vec![0.0; k],
            vectors: x.into_iter().take(k).collect(),
        };
    }

    let mut z = vec![vec![C64::new(0.0, 0.0); n]; block];
    let mut prev_extra = f64::NAN;
    for _ in 0..80 {
        for (xi, zi) in x.iter().zip(z.iter_mut()) {
            a.apply(xi, zi);
        }
        let mut h = DMatrix::<C64>::zeros(block, block);
        for i in 0..block {
            for j in i..block {
                let v = dot(&x[i], &z[j]);
                h[(i, j)] = v;
                h[(j, i)] = v.conj();
            }
            h[(i, i)] = C64::new(h[(i, i)].re, 0.0);
        }
        let small = SymmetricEigen::new(h);
        let mut order: Vec<usize> = (0..block).collect();
        order.sort_by(|&p, &q| {
            small.eigenvalues[q]
                .abs()
                .total_cmp(&small.eigenvalues[p].abs())
                .then(p.cmp(&q))
        });

        // Ritz vectors and their images.
        let mut ritz = vec![vec![C64::new(0.0, 0.0); n]; block];
        let mut image = vec![vec![C64::new(0.0, 0.0); n]; block];
        for (slot, &col) in order.iter().enumerate() {
            for j in 0..block {
                let w = small.eigenvectors[(j, col)];
                if w == C64::new(0.0, 0.0) {
                    continue;
                }
                for r in 0..n {
                    ritz[slot][r] += x[j][r] * w;
                    image[slot][r] += z[j][r] * w;
                }
            }
        }
        let values: Vec<f64> = order.iter().map(|&c| small.eigenvalues[c]).collect();

        let lead = values[0].abs();
        let vectors_done = (0..k.min(vectors)).all(|s| {
            let res: f64 = image[s]
                .iter()
                .zip(&ritz[s])
                .map(|(zi, xi)| (zi - xi * values[s]).norm_sqr())
                .sum::<f64>()
                .sqrt();
            res <= 1e-13 * lead
        });
        let extra = values[k - 1].abs();
        let extra_done =
            k == vectors || (prev_extra.is_finite() && (extra - prev_extra).abs() <= 1e-9 * lead);
        if vectors_done && extra_done {
            return HermitianEigs {
                values: values[..k].to_vec(),
                vectors: ritz.into_iter().take(k).collect(),
            };
        }
        prev_extra = extra;

        x = image;
        orthonormalize(&mut x, &mut seed);
    }

    truncated(hermitian_eigs(&a.dense()))
}

/// Thin SVD `A = U diag(s) V^H` with singular values sorted descending.
pub struct ThinSvd {
    pub u: DMatrix<C64>,
    pub singular_values: Vec<f64>,
    /// Columns are right singular vectors.
    pub v: DMatrix<C64>,
}

pub fn thin_svd(a: DMatrix<C64>) -> ThinSvd {
    let svd = SVD::new(a, true, true);
    let u = svd.u.expect("u requested");
    let v_t = svd.v_t.expect("v_t requested");
    let count = svd.singular_values.len();
    let mut order: Vec<usize> = (0..count).collect();
    order.sort_by(|&p, &q| {
        svd.singular_values[q]
            .total_cmp(&svd.singular_values[p])
            .then(p.cmp(&q))
    });
    let u_sorted = DMatrix::from_fn(u.nrows(), count, |r, c| u[(r, order[c])]);
    let v_sorted = DMatrix::from_fn(v_t.ncols(), count, |r, c| v_t[(order[c], r)].conj());
    ThinSvd {
        u: u_sorted,
        singular_values: order.iter().map(|&i| svd.singular_values[i]).collect(),
        v: v_sorted,
    }
}

/// 2-norm condition number of a square matrix; infinite when singular.
pub fn condition_number(a: &DMatrix<C64>) -> f64 {
    let s = SVD::new(a.clone(), false, false).singular_values;
    let max = s.iter().copied().fold(0.0, f64::max);
    let min = s.iter().copied().fold(f64::INFINITY, f64::min);
    if min <= 0.0 || !min.is_finite() {
        f64::INFINITY
    } else {
        max / min
    }
}

pub fn solve(a: DMatrix<C64>, b: DVector<C64>) -> Option<DVector<C64>> {
    a.lu().solve(&b)
}

/// Roots of the monic polynomial `z^P + c[0] z^(P-1) + ... + c[P-1]`.
///
/// Companion-matrix eigenvalues, each polished by a few Newton steps.
pub fn monic_roots(c: &[C64]) -> Vec<C64> {
    let p = c.len();
    match p {
        0 => return Vec::new(),
        1 => return vec![-c[0]],
        _ => {}
    }
    let companion = DMatrix::from_fn(p, p, |i, j| {
        if i == 0 {
            -c[j]
        } else if i == j + 1 {
            C64::new(1.0, 0.0)
        } else {
            C64::new(0.0, 0.0)
        }
    });
    let eig = Schur::try_new(companion.clone(), 1e-15, 10_000)
        .and_then(|s| s.eigenvalues())
        .map(|v| v.iter().copied().collect::<Vec<_>>());
    let mut roots = match eig {
        Some(r) => r,
        None => return vec![C64::new(f64::NAN, f64::NAN); p],
    };
    for z in roots.iter_mut() {
        for _ in 0..3 {
            let (val, der) = eval_monic(c, *z);
            if der.norm() == 0.0 {
                break;
            }
            let step = val / der;
            if !step.re.is_finite() || !step.im.is_finite() {
                break;
            }
            let candidate = *z - step;
            if eval_monic(c, candidate).0.norm() < val.norm() {
                *z = candidate;
            } else {
                break;
            }
        }
    }
    roots
}

fn eval_monic(c: &[C64], z: C64) -> (C64, C64) {
    let mut val = C64::new(1.0, 0.0);
    let mut der = C64::new(0.0, 0.0);
    for &ci in c {
        der = der * z + val;
        val = val * z + ci;
    }
    (val, der)
}

/// Cholesky factorisation and solve for a symmetric positive definite band
/// matrix stored by diagonals: `band[d][i] = A[i][i + d]`.
pub fn solve_spd_banded(band: &[Vec<f64>], rhs: &[f64]) -> Option<Vec<f64>> {
    let n = rhs.len();
    let w = band.len() - 1;
    // l[d][i] = L[i + d][i]
    let mut l = vec![vec![0.0; n]; w + 1];
    for j in 0..n {
        let mut diag = band[0][j];
        for k in 1..=w.min(j) {
            diag -= l[k][j - k] * l[k][j - k];
        }
        if diag <= 0.0 || !diag.is_finite() {
            return None;
        }
        let ljj = diag.sqrt();
        l[0][j] = ljj;
        for d in 1..=w {
            let i = j + d;
            if i >= n {
                break;
            }
            let mut v = band[d][j];
            for k in 1..=w {
                if k > j || d + k > w {
                    break;
                }
                v -= l[d + k][j - k] * l[k][j - k];
            }
            l[d][j] = v / ljj;
        }
    }
    let mut y = rhs.to_vec();
    for i in 0..n {
        let mut v = y[i];
        for d in 1..=w.min(i) {
            v -= l[d][i - d] * y[i - d];
        }
        y[i] = v / l[0][i];
    }
    for i in (0..n).rev() {
        let mut v = y[i];
        for d in 1..=w {
            if i + d >= n {
                break;
            }
            v -= l[d][i] * y[i + d];
        }
        y[i] = v / l[0][i];
    }
    Some(y)
}
