//! Complex linear algebra, dominant eigenpairs, and seeded random streams.

use std::ops::{Index, IndexMut};

use num_complex::Complex64;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{validation, Error, Result};

pub type C64 = Complex64;

/// Iteration cap for [`top_eigpair`].
pub const EIG_MAX_ITERS: usize = 10_000;

/// Dense complex vector with a length fixed at construction.
#[derive(Clone, Debug, PartialEq)]
pub struct CVec(Vec<C64>);

impl CVec {
    pub fn new(entries: Vec<C64>) -> Self {
        CVec(entries)
    }

    pub fn zeros(n: usize) -> Self {
        CVec(vec![C64::new(0.0, 0.0); n])
    }

    pub fn from_real(values: &[f64]) -> Self {
        CVec(values.iter().map(|&x| C64::new(x, 0.0)).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[C64] {
        &self.0
    }

    pub fn as_mut_slice(&mut self) -> &mut [C64] {
        &mut self.0
    }

    pub fn iter(&self) -> std::slice::Iter<'_, C64> {
        self.0.iter()
    }

    pub fn into_inner(self) -> Vec<C64> {
        self.0
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    pub fn norm_sqr(&self) -> f64 {
        self.0.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    /// Hermitian inner product `selfᴴ · other`.
    pub fn dot(&self, other: &CVec) -> C64 {
        debug_assert_eq!(self.len(), other.len());
        self.0
            .iter()
            .zip(other.0.iter())
            .map(|(a, b)| a.conj() * b)
            .sum()
    }

    pub fn scaled(&self, s: C64) -> CVec {
        CVec(self.0.iter().map(|z| z * s).collect())
    }

    pub fn scaled_re(&self, s: f64) -> CVec {
        CVec(self.0.iter().map(|z| z * s).collect())
    }

    pub fn sub(&self, other: &CVec) -> CVec {
        CVec(self.0.iter().zip(other.0.iter()).map(|(a, b)| a - b).collect())
    }

    pub fn add(&self, other: &CVec) -> CVec {
        CVec(self.0.iter().zip(other.0.iter()).map(|(a, b)| a + b).collect())
    }

    /// Unit-norm copy, or `None` for the zero vector.
    pub fn normalized(&self) -> Option<CVec> {
        let n = self.norm();
        (n > 0.0).then(|| self.scaled_re(1.0 / n))
    }
}

impl Index<usize> for CVec {
    type Output = C64;
    fn index(&self, i: usize) -> &C64 {
        &self.0[i]
    }
}

impl IndexMut<usize> for CVec {
    fn index_mut(&mut self, i: usize) -> &mut C64 {
        &mut self.0[i]
    }
}

impl FromIterator<C64> for CVec {
    fn from_iter<I: IntoIterator<Item = C64>>(iter: I) -> Self {
        CVec(iter.into_iter().collect())
    }
}

/// Dense complex matrix stored row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct CMat {
    rows: usize,
    cols: usize,
    data: Vec<C64>,
}

impl CMat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        CMat {
            rows,
            cols,
            data: vec![C64::new(0.0, 0.0); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = CMat::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = C64::new(1.0, 0.0);
        }
        m
    }

    pub fn from_row_major(rows: usize, cols: usize, data: Vec<C64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(validation(format!(
                "matrix data length {} does not match {rows}x{cols}",
                data.len()
            )));
        }
        Ok(CMat { rows, cols, data })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> C64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        CMat { rows, cols, data }
    }

    pub fn diag_real(values: &[f64]) -> Self {
        let mut m = CMat::zeros(values.len(), values.len());
        for (i, &v) in values.iter().enumerate() {
            m[(i, i)] = C64::new(v, 0.0);
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn as_slice(&self) -> &[C64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [C64] {
        &mut self.data
    }

    pub fn row(&self, i: usize) -> &[C64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    /// Entrywise (Frobenius) squared norm.
    pub fn norm_sqr(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn trace(&self) -> C64 {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).sum()
    }

    pub fn mul_vec(&self, v: &CVec) -> CVec {
        debug_assert_eq!(self.cols, v.len());
        (0..self.rows)
            .map(|i| {
                self.row(i)
                    .iter()
                    .zip(v.iter())
                    .map(|(a, b)| a * b)
                    .sum()
            })
            .collect()
    }

    /// `selfᴴ · v`.
    pub fn adjoint_mul_vec(&self, v: &CVec) -> CVec {
        debug_assert_eq!(self.rows, v.len());
        let mut out = CVec::zeros(self.cols);
        for i in 0..self.rows {
            let vi = v[i];
            for (j, a) in self.row(i).iter().enumerate() {
                out[j] += a.conj() * vi;
            }
        }
        out
    }

    pub fn mul(&self, other: &CMat) -> CMat {
        debug_assert_eq!(self.cols, other.rows);
        let mut out = CMat::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == C64::new(0.0, 0.0) {
                    continue;
                }
                let orow = other.row(k);
                let dst = &mut out.data[i * other.cols..(i + 1) * other.cols];
                for (d, b) in dst.iter_mut().zip(orow) {
                    *d += a * b;
                }
            }
        }
        out
    }

    /// Gram matrix `selfᴴ · self` (cols × cols, hermitian PSD).
    pub fn gram(&self) -> CMat {
        let n = self.cols;
        let mut out = CMat::zeros(n, n);
        for r in 0..self.rows {
            let row = self.row(r);
            for i in 0..n {
                let ci = row[i].conj();
                for j in i..n {
                    out.data[i * n + j] += ci * row[j];
                }
            }
        }
        for i in 0..n {
            out.data[i * n + i].im = 0.0;
            for j in (i + 1)..n {
                out.data[j * n + i] = out.data[i * n + j].conj();
            }
        }
        out
    }

    /// Rank-one hermitian outer product `v vᴴ`.
    pub fn outer(v: &CVec) -> CMat {
        CMat::from_fn(v.len(), v.len(), |i, j| v[i] * v[j].conj())
    }

    pub fn scaled_re(&self, s: f64) -> CMat {
        CMat {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|z| z * s).collect(),
        }
    }

    /// `a·self + b·other` for real weights.
    pub fn lin_comb(&self, a: f64, other: &CMat, b: f64) -> CMat {
        debug_assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        CMat {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(other.data.iter())
                .map(|(x, y)| x * a + y * b)
                .collect(),
        }
    }

    /// Hermitian quadratic form `vᴴ · self · v` (real part).
    pub fn quad_form(&self, v: &CVec) -> f64 {
        v.dot(&self.mul_vec(v)).re
    }

    pub fn is_hermitian(&self, rel_tol: f64) -> bool {
        if self.rows != self.cols {
            return false;
        }
        let scale = self.max_abs();
        let n = self.rows;
        for i in 0..n {
            for j in i..n {
                if (self[(i, j)] - self[(j, i)].conj()).norm() > rel_tol * scale {
                    return false;
                }
            }
        }
        true
    }
}

impl Index<(usize, usize)> for CMat {
    type Output = C64;
    fn index(&self, (i, j): (usize, usize)) -> &C64 {
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for CMat {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut C64 {
        &mut self.data[i * self.cols + j]
    }
}

/// Dominant eigenvalue and its unit eigenvector.
#[derive(Clone, Debug)]
pub struct EigPair {
    pub value: f64,
    pub vector: CVec,
}

/// Top eigenpair of a hermitian PSD matrix by power iteration.
///
/// Converged when `‖Av − λv‖ ≤ tol·λ` with λ the Rayleigh quotient. Every 50
/// stalled iterations the iteration matrix is squared, which squares the
/// eigenvalue ratio that governs the contraction rate. The returned vector
/// has unit norm and its first non-negligible entry is real-positive.
pub fn top_eigpair(a: &CMat, tol: f64) -> Result<EigPair> {
    top_eigpair_from(a, tol, None)
}

/// [`top_eigpair`] with an optional warm-start vector.
pub fn top_eigpair_from(a: &CMat, tol: f64, start: Option<&CVec>) -> Result<EigPair> {
    let n = a.rows();
    if n == 0 || a.cols() != n {
        return Err(validation(format!(
            "top_eigpair needs a non-empty square matrix, got {}x{}",
            a.rows(),
            a.cols()
        )));
    }
    if !a.is_finite() {
        return Err(validation("top_eigpair: non-finite matrix entry"));
    }
    if !a.is_hermitian(1e-10) {
        return Err(validation("top_eigpair: matrix is not hermitian"));
    }
    let scale = a.max_abs();
    if scale == 0.0 {
        let mut v = CVec::zeros(n);
        v[0] = C64::new(1.0, 0.0);
        return Ok(EigPair { value: 0.0, vector: v });
    }

    let mut v = match start.and_then(|s| (s.len() == n).then(|| s.normalized()).flatten()) {
        Some(s) => s,
        None => initial_vector(a),
    };
    let mut iter_mat = a.scaled_re(1.0 / scale);
    let mut since_square = 0usize;
    let mut residual = f64::INFINITY;

    for _ in 0..EIG_MAX_ITERS {
        let av = a.mul_vec(&v);
        let lambda = v.dot(&av).re;
        residual = av.sub(&v.scaled_re(lambda)).norm();
        if residual <= tol * lambda.max(0.0) || residual == 0.0 {
            return Ok(EigPair {
                value: lambda.max(0.0),
                vector: canonical_phase(v),
            });
        }

        let next = iter_mat.mul_vec(&v);
        v = match next.normalized() {
            Some(x) => x,
            // v landed in the null space of the (squared) iterate; restart
            None => initial_vector(a),
        };

        since_square += 1;
        if since_square >= 50 {
            let sq = iter_mat.mul(&iter_mat);
            let m = sq.max_abs();
            if m > 0.0 && m.is_finite() {
                iter_mat = hermitize(sq.scaled_re(1.0 / m));
            }
            since_square = 0;
        }
    }
    Err(Error::Convergence {
        iterations: EIG_MAX_ITERS,
        residual,
    })
}

fn hermitize(mut m: CMat) -> CMat {
    let n = m.rows();
    for i in 0..n {
        m[(i, i)].im = 0.0;
        for j in (i + 1)..n {
            let avg = (m[(i, j)] + m[(j, i)].conj()) * 0.5;
            m[(i, j)] = avg;
            m[(j, i)] = avg.conj();
        }
    }
    m
}

/// Deterministic dense start: `A·x` for a fixed generic `x`, which has a
/// nonzero component along every range direction of `A` except on a
/// measure-zero set.
fn initial_vector(a: &CMat) -> CVec {
    let n = a.rows();
    let x: CVec = (0..n)
        .map(|k| {
            let phase = 0.7548776662466927 * (k as f64 + 1.0) * std::f64::consts::TAU;
            C64::from_polar(1.0 + 0.5 * ((k as f64 + 0.5) / n as f64), phase)
        })
        .collect();
    a.mul_vec(&x).normalized().unwrap_or_else(|| x.normalized().unwrap())
}

/// Rotate `v` so its first non-negligible entry is real-positive.
pub fn canonical_phase(v: CVec) -> CVec {
    let peak = v.iter().map(|z| z.norm()).fold(0.0, f64::max);
    if peak == 0.0 {
        return v;
    }
    match v.iter().find(|z| z.norm() > 1e-9 * peak) {
        Some(z) => {
            let rot = z.conj() / z.norm();
            v.scaled(rot)
        }
        None => v,
    }
}

/// Seeded random stream. Identical `(seed, stream)` pairs replay identical
/// sequences; distinct stream ids select independent ChaCha streams.
#[derive(Clone, Debug)]
pub struct RngStream {
    seed: u64,
    stream: u64,
    rng: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        RngStream { seed, stream, rng }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream
    }

    /// A child stream keyed off this stream's seed.
    pub fn derive(&self, stream: u64) -> RngStream {
        RngStream::new(self.seed, stream)
    }

    pub fn normal(&mut self) -> f64 {
        self.rng.sample(StandardNormal)
    }

    pub fn uniform(&mut self) -> f64 {
        self.rng.random::<f64>()
    }

    pub fn below(&mut self, n: usize) -> usize {
        self.rng.random_range(0..n)
    }

    /// One circularly-symmetric complex Gaussian draw, `CN(0, 1)`.
    pub fn cn(&mut self) -> C64 {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        C64::new(self.normal() * s, self.normal() * s)
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.rng.fill_bytes(dst)
    }
}

/// `n` i.i.d. `CN(0, 1)` entries.
pub fn sample_cn(rng: &mut RngStream, n: usize) -> CVec {
    (0..n).map(|_| rng.cn()).collect()
}

/// Wrap an angle into `[0, 2π)`.
pub fn wrap_phase(theta: f64) -> f64 {
    let tau = std::f64::consts::TAU;
    let w = theta.rem_euclid(tau);
    if w >= tau {
        0.0
    } else {
        w
    }
}
