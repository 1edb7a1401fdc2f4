//! Shifted Fourier operators, the Dirichlet kernel and grid decompositions.
//!
//! Times and frequency bins are both indexed over `0..N`. The shifted
//! Fourier matrix is `(F_ν)_{tk} = exp(-i 2π (k + ν) t / N)`, and `F_{ν,𝒯}`
//! keeps only the rows `t ∈ 𝒯`.

use std::sync::Arc;

use num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::real::Real;

/// `x - 2·round(x/2)`, so that `sin(π x)` and `cos(π x)` are evaluated on a
/// reduced argument in `[-1, 1]`.
#[inline]
fn reduce_half_turns<T: Real>(x: T) -> T {
    let two = T::lit(2.0);
    x - two * (x / two).round()
}

/// `sin(π x)` with argument reduction.
#[inline]
pub fn sin_pi<T: Real>(x: T) -> T {
    (T::PI() * reduce_half_turns(x)).sin()
}

/// `cos(π x)` with argument reduction.
#[inline]
pub fn cos_pi<T: Real>(x: T) -> T {
    (T::PI() * reduce_half_turns(x)).cos()
}

/// `exp(-i 2π x)`.
#[inline]
fn unit_phase<T: Real>(x: T) -> Complex<T> {
    let two = T::lit(2.0);
    Complex::new(cos_pi(two * x), -sin_pi(two * x))
}

/// Normalized Dirichlet kernel `D_N(v) = sin(π v) / (N sin(π v / N))`, with
/// `D_N(0) = 1`.
///
/// At nonzero multiples `v = mN` the removable singularity is filled with its
/// limit `(-1)^{m(N-1)}`.
pub fn dirichlet<T: Real>(n: usize, v: T) -> T {
    if v == T::zero() {
        return T::one();
    }
    let nf = T::from_usize_lossy(n);
    let ratio = v / nf;
    if v.fract() == T::zero() && ratio.fract() == T::zero() {
        let m = ratio.to_i64().unwrap_or(0);
        let odd = (m.rem_euclid(2) == 1) && ((n as i64 - 1).rem_euclid(2) == 1);
        return if odd { -T::one() } else { T::one() };
    }
    sin_pi(v) / (nf * sin_pi(ratio))
}

/// The shifted Fourier operator `F_ν`, optionally restricted to a row set.
#[derive(Clone)]
pub struct ShiftedFourierOp<T: Real> {
    n: usize,
    nu: T,
    rows: Option<Vec<usize>>,
    twiddle: Arc<Vec<Complex<T>>>,
}

impl<T: Real> std::fmt::Debug for ShiftedFourierOp<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ShiftedFourierOp")
            .field("n", &self.n)
            .field("nu", &self.nu)
            .field("rows", &self.rows.as_ref().map(|r| r.len()))
            .finish()
    }
}

fn twiddles<T: Real>(n: usize) -> Vec<Complex<T>> {
    let nf = T::from_usize_lossy(n);
    (0..n).map(|j| unit_phase(T::from_usize_lossy(j) / nf)).collect()
}

impl<T: Real> ShiftedFourierOp<T> {
    /// Full `N × N` operator.
    pub fn new(n: usize, nu: T) -> Result<Self> {
        if n == 0 {
            return Err(Error::contract("signal length must be positive"));
        }
        Ok(ShiftedFourierOp { n, nu, rows: None, twiddle: Arc::new(twiddles(n)) })
    }

    /// `F_{ν,𝒯} = 𝒫_𝒯 F_ν`. Rows must be strictly increasing and `< n`.
    pub fn with_rows(n: usize, nu: T, rows: Vec<usize>) -> Result<Self> {
        if rows.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::contract("row indices must be strictly increasing"));
        }
        if rows.last().is_some_and(|&r| r >= n) {
            return Err(Error::contract(format!("row index out of range for N={n}")));
        }
        let mut op = Self::new(n, nu)?;
        op.rows = Some(rows);
        Ok(op)
    }

    /// Same operator with a different shift, sharing the twiddle table.
    pub fn reshifted(&self, nu: T) -> Self {
        ShiftedFourierOp { n: self.n, nu, rows: self.rows.clone(), twiddle: Arc::clone(&self.twiddle) }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn nu(&self) -> T {
        self.nu
    }

    pub fn rows(&self) -> Option<&[usize]> {
        self.rows.as_deref()
    }

    /// Number of output rows.
    pub fn n_rows(&self) -> usize {
        self.rows.as_ref().map_or(self.n, Vec::len)
    }

    /// Time index of output row `i`.
    #[inline]
    fn time_of(&self, i: usize) -> usize {
        self.rows.as_ref().map_or(i, |r| r[i])
    }

    /// `exp(-i 2π ν t / N)`.
    #[inline]
    fn row_phase(&self, t: usize) -> Complex<T> {
        unit_phase(self.nu * T::from_usize_lossy(t) / T::from_usize_lossy(self.n))
    }

    /// Matrix entry `(F_ν)_{tk}`.
    #[inline]
    pub fn entry(&self, t: usize, k: usize) -> Complex<T> {
        self.twiddle[(t * k) % self.n] * self.row_phase(t)
    }

    /// `F_ν s` (restricted to the row set when present) for real `s`.
    pub fn apply(&self, s: &[T]) -> Result<Vec<Complex<T>>> {
        let v: Vec<Complex<T>> = s.iter().map(|&x| Complex::new(x, T::zero())).collect();
        self.apply_complex(&v)
    }

    /// `F_ν v` for complex `v`.
    pub fn apply_complex(&self, v: &[Complex<T>]) -> Result<Vec<Complex<T>>> {
        if v.len() != self.n {
            return Err(Error::contract(format!("operator has {} columns, vector has length {}", self.n, v.len())));
        }
        match &self.rows {
            Some(rows) if rows.len() * 8 < self.n => Ok(rows
                .iter()
                .map(|&t| {
                    let mut acc = Complex::new(T::zero(), T::zero());
                    for (k, &vk) in v.iter().enumerate() {
                        acc += vk * self.twiddle[(t * k) % self.n];
                    }
                    acc * self.row_phase(t)
                })
                .collect()),
            _ => {
                let mut buf = v.to_vec();
                FftPlanner::new().plan_fft_forward(self.n).process(&mut buf);
                Ok((0..self.n_rows())
                    .map(|i| {
                        let t = self.time_of(i);
                        buf[t] * self.row_phase(t)
                    })
                    .collect())
            }
        }
    }

    /// `F_ν† w`, where `w` holds one value per output row.
    pub fn adjoint(&self, w: &[Complex<T>]) -> Result<Vec<Complex<T>>> {
        if w.len() != self.n_rows() {
            return Err(Error::contract(format!("adjoint expects {} values, got {}", self.n_rows(), w.len())));
        }
        match &self.rows {
            Some(rows) if rows.len() * 8 < self.n => {
                let mut out = vec![Complex::new(T::zero(), T::zero()); self.n];
                for (&t, &wt) in rows.iter().zip(w) {
                    let a = wt * self.row_phase(t).conj();
                    for (k, o) in out.iter_mut().enumerate() {
                        *o += a * self.twiddle[(t * k) % self.n].conj();
                    }
                }
                Ok(out)
            }
            _ => {
                let mut buf = vec![Complex::new(T::zero(), T::zero()); self.n];
                for (i, &wt) in w.iter().enumerate() {
                    let t = self.time_of(i);
                    buf[t] = wt * self.row_phase(t).conj();
                }
                FftPlanner::new().plan_fft_inverse(self.n).process(&mut buf);
                Ok(buf)
            }
        }
    }

    /// Real `2m × N` matrix `[Re F; Im F]` in row-major order, `m = n_rows()`.
    pub fn stacked_real(&self) -> Vec<T> {
        let m = self.n_rows();
        let mut a = vec![T::zero(); 2 * m * self.n];
        for i in 0..m {
            let t = self.time_of(i);
            let phase = self.row_phase(t);
            for k in 0..self.n {
                let e = self.twiddle[(t * k) % self.n] * phase;
                a[i * self.n + k] = e.re;
                a[(m + i) * self.n + k] = e.im;
            }
        }
        a
    }
}

/// `y = F_ν (x_re + i x_im)` with both parts real.
#[derive(Clone, Debug, PartialEq)]
pub struct GridDecomposition<T> {
    pub nu: T,
    pub x_re: Vec<T>,
    pub x_im: Vec<T>,
}

impl<T: Real> GridDecomposition<T> {
    /// `F_ν (x_re + i x_im)`.
    pub fn reconstruct(&self) -> Result<Vec<Complex<T>>> {
        let op = ShiftedFourierOp::new(self.x_re.len(), self.nu)?;
        let v: Vec<Complex<T>> = self.x_re.iter().zip(&self.x_im).map(|(&a, &b)| Complex::new(a, b)).collect();
        op.apply_complex(&v)
    }

    /// `‖x_im‖₂`, the size of the off-grid part.
    pub fn off_grid_norm(&self) -> T {
        l2(&self.x_im)
    }
}

fn l2<T: Real>(v: &[T]) -> T {
    v.iter().map(|&x| x * x).sum::<T>().sqrt()
}

/// Reusable transform for `x(ν) = (1/N) F_ν† y` over many shifts.
struct Decomposer<T: Real> {
    y: Vec<Complex<T>>,
    fft: Arc<dyn Fft<T>>,
    scratch: Vec<Complex<T>>,
    buf: Vec<Complex<T>>,
}

impl<T: Real> Decomposer<T> {
    fn new(y: &[Complex<T>]) -> Self {
        let n = y.len();
        let fft = FftPlanner::new().plan_fft_inverse(n);
        let scratch = vec![Complex::new(T::zero(), T::zero()); fft.get_inplace_scratch_len()];
        Decomposer { y: y.to_vec(), fft, scratch, buf: vec![Complex::new(T::zero(), T::zero()); n] }
    }

    /// Fills `buf` with `(1/N) F_ν† y`.
    fn run(&mut self, nu: T) -> &[Complex<T>] {
        let n = self.y.len();
        let nf = T::from_usize_lossy(n);
        for (t, (b, &yt)) in self.buf.iter_mut().zip(&self.y).enumerate() {
            *b = yt * unit_phase(nu * T::from_usize_lossy(t) / nf).conj();
        }
        self.fft.process_with_scratch(&mut self.buf, &mut self.scratch);
        let inv = T::one() / nf;
        for b in self.buf.iter_mut() {
            *b *= inv;
        }
        &self.buf
    }

    fn off_grid_norm(&mut self, nu: T) -> T {
        self.run(nu).iter().map(|c| c.im * c.im).sum::<T>().sqrt()
    }
}

/// Grid decomposition of `y` at shift `nu`: `x = (1/N) F_ν† y`, split into
/// real and imaginary parts.
pub fn grid_decompose<T: Real>(y: &[Complex<T>], nu: T) -> Result<GridDecomposition<T>> {
    if y.len() < 2 {
        return Err(Error::contract("grid decomposition needs N >= 2"));
    }
    let mut dec = Decomposer::new(y);
    let x = dec.run(nu);
    Ok(GridDecomposition { nu, x_re: x.iter().map(|c| c.re).collect(), x_im: x.iter().map(|c| c.im).collect() })
}

/// The optimal grid shift `𝔲 = argmin_ν ‖F_ν x_im(ν)‖₂` over `[-1/2, 1/2]`.
///
/// `‖F_ν x_im‖₂ = √N ‖x_im‖₂`, so the scan minimizes `‖x_im(ν)‖₂`. A coarse
/// scan over `grid_points + 1` equispaced shifts picks a bracket, which a
/// golden-section search then narrows to `refine_tol`.
pub fn optimal_grid_shift<T: Real>(
    y: &[Complex<T>],
    grid_points: usize,
    refine_tol: T,
) -> Result<(T, GridDecomposition<T>)> {
    if grid_points < 8 {
        return Err(Error::config("optimal_grid_shift needs at least 8 grid points"));
    }
    if y.len() < 2 {
        return Err(Error::contract("grid decomposition needs N >= 2"));
    }
    let mut dec = Decomposer::new(y);
    let half = T::lit(0.5);
    let step = T::one() / T::from_usize_lossy(grid_points);
    let nu_at = |i: usize| -half + T::from_usize_lossy(i) * step;

    let mut best = (0usize, T::infinity());
    for i in 0..=grid_points {
        let g = dec.off_grid_norm(nu_at(i));
        if g < best.1 {
            best = (i, g);
        }
    }
    let (i0, _) = best;
    let mut lo = if i0 == 0 { nu_at(0) } else { nu_at(i0 - 1) };
    let mut hi = if i0 == grid_points { nu_at(grid_points) } else { nu_at(i0 + 1) };

    let inv_phi = T::lit((5f64.sqrt() - 1.0) / 2.0);
    let mut a = hi - inv_phi * (hi - lo);
    let mut b = lo + inv_phi * (hi - lo);
    let mut ga = dec.off_grid_norm(a);
    let mut gb = dec.off_grid_norm(b);
    let tol = refine_tol.max(T::epsilon());
    while hi - lo > tol {
        if ga <= gb {
            hi = b;
            b = a;
            gb = ga;
            a = hi - inv_phi * (hi - lo);
            ga = dec.off_grid_norm(a);
        } else {
            lo = a;
            a = b;
            ga = gb;
            b = lo + inv_phi * (hi - lo);
            gb = dec.off_grid_norm(b);
        }
    }
    // The bracket endpoints from the coarse scan are candidates too.
    let mut u = (lo + hi) * half;
    let mut gu = dec.off_grid_norm(u);
    if best.1 < gu {
        u = nu_at(i0);
        gu = best.1;
    }
    let _ = gu;
    let x = dec.run(u);
    let out =
        GridDecomposition { nu: u, x_re: x.iter().map(|c| c.re).collect(), x_im: x.iter().map(|c| c.im).collect() };
    Ok((u, out))
}

/// `C[x] = [(4 + 2π²/N)‖x‖₂² − 2π²‖x‖₁²/N]^{1/2}`, with the bracket clamped at
/// zero before the square root.
pub fn cx_bound<T: Real>(x: &[T]) -> T {
    let n = T::from_usize_lossy(x.len().max(1));
    let pi2 = T::PI() * T::PI();
    let two = T::lit(2.0);
    let l2sq: T = x.iter().map(|&v| v * v).sum();
    let l1: T = x.iter().map(|v| v.abs()).sum();
    let bracket = (T::lit(4.0) + two * pi2 / n) * l2sq - two * pi2 * l1 * l1 / n;
    bracket.max(T::zero()).sqrt()
}

/// The vectors `c_ν, s_ν ∈ ℝ^N` with `c_{ν,k} = cos[π_N(k+ν)] D_N(k+ν)` and
/// `s_{ν,k} = sin[π_N(k+ν)] D_N(k+ν)`, `π_N = π(1 − 1/N)`.
///
/// They are the real and imaginary parts of the decomposition of the on-grid
/// spike `δ₀` at shift `ν`.
pub fn cs_vectors<T: Real>(n: usize, nu: T) -> Result<(Vec<T>, Vec<T>)> {
    if n < 2 {
        return Err(Error::contract("cs_vectors needs N >= 2"));
    }
    let nf = T::from_usize_lossy(n);
    let mut c = Vec::with_capacity(n);
    let mut s = Vec::with_capacity(n);
    for k in 0..n {
        let v = T::from_usize_lossy(k) + nu;
        let d = dirichlet(n, v);
        let arg = v - v / nf;
        c.push(cos_pi(arg) * d);
        s.push(sin_pi(arg) * d);
    }
    Ok((c, s))
}
