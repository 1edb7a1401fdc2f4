//! Basis pursuit denoising over real coefficients with complex data:
//! `min ‖s‖₁  s.t.  ‖F_{ν,𝒯} s − y‖₂ ≤ b`.
//!
//! Real unknowns against complex rows are handled by stacking, so the
//! working matrix is `A = [Re F_{ν,𝒯}; Im F_{ν,𝒯}] ∈ ℝ^{2m×N}`.
//!
//! Dual convention used throughout: `λ = μ (y − A s)` for the ball
//! multiplier `μ ≥ 0`. The dual problem is
//! `max ⟨y, λ⟩ − b‖λ‖₂  s.t.  ‖Aᵀλ‖∞ ≤ 1` (`max Aᵀλ ≤ 1` in the
//! nonnegative variant), so any `λ` gives a lower bound on the objective.

use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fourier::ShiftedFourierOp;
use crate::real::Real;

/// `min ‖s‖₁ s.t. ‖F_{ν,𝒯} s − y_𝒯‖₂ ≤ radius`.
#[derive(Clone, Debug)]
pub struct BpdnProblem<T: Real> {
    op: ShiftedFourierOp<T>,
    y: Vec<Complex<T>>,
    radius: T,
}

impl<T: Real> BpdnProblem<T> {
    pub fn new(op: ShiftedFourierOp<T>, y: Vec<Complex<T>>, radius: T) -> Result<Self> {
        if y.is_empty() {
            return Err(Error::contract("BPDN needs at least one measurement"));
        }
        if y.len() != op.n_rows() {
            return Err(Error::contract(format!(
                "operator has {} rows but {} measurements were given",
                op.n_rows(),
                y.len()
            )));
        }
        if !(radius >= T::zero()) || !radius.is_finite() {
            return Err(Error::contract("radius must be finite and nonnegative"));
        }
        Ok(BpdnProblem { op, y, radius })
    }

    pub fn op(&self) -> &ShiftedFourierOp<T> {
        &self.op
    }

    pub fn y(&self) -> &[Complex<T>] {
        &self.y
    }

    pub fn radius(&self) -> T {
        self.radius
    }

    /// `‖F s − y‖₂`.
    pub fn residual_norm(&self, s: &[T]) -> Result<T> {
        let fs = self.op.apply(s)?;
        Ok(fs.iter().zip(&self.y).map(|(a, b)| (a - b).norm_sqr()).sum::<T>().sqrt())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverOptions<T> {
    pub max_iter: usize,
    pub abs_tol: T,
    pub rel_tol: T,
    /// Initial ADMM penalty `ρ`; adapted by residual balancing.
    pub penalty: T,
    /// Restrict to `s ≥ 0`.
    pub nonnegative: bool,
    /// Try to finish on a fixed support with an exact dual certificate.
    pub polish: bool,
}

impl<T: Real> Default for SolverOptions<T> {
    fn default() -> Self {
        SolverOptions {
            max_iter: 5000,
            abs_tol: T::lit(1e-8),
            rel_tol: T::lit(1e-6),
            penalty: T::one(),
            nonnegative: false,
            polish: true,
        }
    }
}

impl<T: Real> SolverOptions<T> {
    pub fn validate(&self) -> Result<()> {
        if self.max_iter == 0 {
            return Err(Error::config("solver.max_iter must be positive"));
        }
        for (name, v) in [("abs_tol", self.abs_tol), ("rel_tol", self.rel_tol), ("penalty", self.penalty)] {
            if !(v > T::zero()) || !v.is_finite() {
                return Err(Error::config(format!("solver.{name} must be positive")));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Optimal,
    /// The ball around `y` misses the range of `A`.
    Infeasible,
    MaxIter,
}

/// Iteration counts and convergence measures of one solve.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub iterations: usize,
    pub primal_residual: f64,
    pub dual_residual: f64,
    /// Objective minus the best dual bound found.
    pub dual_gap: f64,
    /// True when the returned point carries an exact support certificate.
    pub certified: bool,
    pub final_penalty: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BpdnSolution<T> {
    pub s: Vec<T>,
    pub objective: T,
    pub residual_norm: T,
    pub status: SolveStatus,
    pub diagnostics: Diagnostics,
}

/// Dense row-major real matrix.
#[derive(Clone, Debug)]
struct Dense<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Real> Dense<T> {
    fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    /// `out = A x`.
    fn mul(&self, x: &[T], out: &mut [T]) {
        for (i, o) in out.iter_mut().enumerate() {
            *o = dot(self.row(i), x);
        }
    }

    /// `out = Aᵀ v`.
    fn tmul(&self, v: &[T], out: &mut [T]) {
        out.iter_mut().for_each(|o| *o = T::zero());
        for (i, &vi) in v.iter().enumerate() {
            if vi != T::zero() {
                for (o, &a) in out.iter_mut().zip(self.row(i)) {
                    *o += vi * a;
                }
            }
        }
    }

    /// `A Aᵀ`, `rows × rows`.
    fn gram_rows(&self) -> Vec<T> {
        let m = self.rows;
        let mut g = vec![T::zero(); m * m];
        for i in 0..m {
            for j in 0..=i {
                let v = dot(self.row(i), self.row(j));
                g[i * m + j] = v;
                g[j * m + i] = v;
            }
        }
        g
    }

    /// `AᵀA`, `cols × cols`.
    fn gram_cols(&self) -> Vec<T> {
        let n = self.cols;
        let mut g = vec![T::zero(); n * n];
        for i in 0..self.rows {
            let r = self.row(i);
            for j in 0..n {
                let rj = r[j];
                if rj != T::zero() {
                    for k in 0..=j {
                        g[j * n + k] += rj * r[k];
                    }
                }
            }
        }
        for j in 0..n {
            for k in 0..j {
                g[k * n + j] = g[j * n + k];
            }
        }
        g
    }
}

#[inline]
fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

#[inline]
fn norm2<T: Real>(a: &[T]) -> T {
    dot(a, a).sqrt()
}

/// Dense Cholesky factor `L` with `M = L Lᵀ`.
struct Cholesky<T> {
    n: usize,
    l: Vec<T>,
}

impl<T: Real> Cholesky<T> {
    /// `None` if `m` is not numerically positive definite.
    fn factor(mut m: Vec<T>, n: usize) -> Option<Self> {
        for j in 0..n {
            let mut d = m[j * n + j];
            for k in 0..j {
                d -= m[j * n + k] * m[j * n + k];
            }
            if !(d > T::zero()) {
                return None;
            }
            let d = d.sqrt();
            m[j * n + j] = d;
            for i in j + 1..n {
                let mut v = m[i * n + j];
                for k in 0..j {
                    v -= m[i * n + k] * m[j * n + k];
                }
                m[i * n + j] = v / d;
            }
        }
        Some(Cholesky { n, l: m })
    }

    fn solve(&self, b: &mut [T]) {
        let n = self.n;
        for i in 0..n {
            let mut v = b[i];
            for k in 0..i {
                v -= self.l[i * n + k] * b[k];
            }
            b[i] = v / self.l[i * n + i];
        }
        for i in (0..n).rev() {
            let mut v = b[i];
            for k in i + 1..n {
                v -= self.l[k * n + i] * b[k];
            }
            b[i] = v / self.l[i * n + i];
        }
    }
}

/// The stacked real system of a problem.
struct Stacked<T: Real> {
    a: Dense<T>,
    y: Vec<T>,
    radius: T,
    y_norm: T,
}

impl<T: Real> Stacked<T> {
    fn new(p: &BpdnProblem<T>) -> Self {
        let m = p.y.len();
        let n = p.op.n();
        let mut y = vec![T::zero(); 2 * m];
        for (i, v) in p.y.iter().enumerate() {
            y[i] = v.re;
            y[m + i] = v.im;
        }
        let y_norm = norm2(&y);
        Stacked { a: Dense { rows: 2 * m, cols: n, data: p.op.stacked_real() }, y, radius: p.radius, y_norm }
    }

    /// Absolute slack added to the radius when judging feasibility.
    fn floor(&self) -> T {
        T::lit(1e-10) * self.y_norm.max(T::one())
    }

    fn residual(&self, s: &[T]) -> T {
        let mut as_ = vec![T::zero(); self.a.rows];
        self.a.mul(s, &mut as_);
        as_.iter().zip(&self.y).map(|(&a, &b)| (a - b) * (a - b)).sum::<T>().sqrt()
    }

    fn feasible(&self, residual: T) -> bool {
        residual <= self.radius * T::lit(1.0 + 1e-6) + self.floor()
    }

    /// Dual feasibility scale of `Aᵀλ`: the factor `λ` must be divided by.
    fn dual_scale(&self, atl: &[T], nonnegative: bool) -> T {
        let c = if nonnegative {
            atl.iter().fold(T::neg_infinity(), |m, &v| m.max(v))
        } else {
            atl.iter().fold(T::zero(), |m, &v| m.max(v.abs()))
        };
        c.max(T::one())
    }

    /// Objective minus the dual bound of `λ` after scaling it feasible.
    fn gap(&self, s: &[T], lambda: &[T], nonnegative: bool) -> T {
        let mut atl = vec![T::zero(); self.a.cols];
        self.a.tmul(lambda, &mut atl);
        let c = self.dual_scale(&atl, nonnegative);
        let dual = (dot(&self.y, lambda) - self.radius * norm2(lambda)) / c;
        l1(s) - dual
    }

    /// Distance from `y` to the range of `A`, via a rank-revealing SVD.
    fn range_distance(&self) -> f64 {
        let a = nalgebra::DMatrix::<f64>::from_fn(self.a.rows, self.a.cols, |i, j| {
            self.a.data[i * self.a.cols + j].to_f64_lossy()
        });
        let y = nalgebra::DVector::<f64>::from_iterator(self.y.len(), self.y.iter().map(|v| v.to_f64_lossy()));
        let svd = a.svd(true, false);
        let u = svd.u.expect("U requested");
        let smax = svd.singular_values.max();
        let tol = smax * 1e-10 * self.a.rows.max(self.a.cols) as f64;
        let mut proj = nalgebra::DVector::<f64>::zeros(self.y.len());
        for (k, &sv) in svd.singular_values.iter().enumerate() {
            if sv > tol {
                let col = u.column(k);
                proj += col * col.dot(&y);
            }
        }
        (y - proj).norm()
    }

    /// True when no `s` satisfies the constraint.
    fn infeasible(&self) -> bool {
        if self.y_norm <= self.radius {
            return false;
        }
        self.range_distance() > self.radius.to_f64_lossy() + 1e-9
    }

    fn zero_solution(&self, n: usize) -> BpdnSolution<T> {
        BpdnSolution {
            s: vec![T::zero(); n],
            objective: T::zero(),
            residual_norm: self.y_norm,
            status: SolveStatus::Optimal,
            diagnostics: Diagnostics { certified: true, ..Diagnostics::default() },
        }
    }

    fn infeasible_solution(&self, n: usize) -> BpdnSolution<T> {
        BpdnSolution {
            s: vec![T::zero(); n],
            objective: T::zero(),
            residual_norm: T::lit(self.range_distance()),
            status: SolveStatus::Infeasible,
            diagnostics: Diagnostics::default(),
        }
    }
}

fn l1<T: Real>(s: &[T]) -> T {
    s.iter().map(|v| v.abs()).sum()
}

#[inline]
fn soft<T: Real>(v: T, k: T, nonnegative: bool) -> T {
    if nonnegative {
        (v - k).max(T::zero())
    } else if v > k {
        v - k
    } else if v < -k {
        v + k
    } else {
        T::zero()
    }
}

/// Projection of `v` onto the ball of radius `r` at the origin.
fn project_ball<T: Real>(v: &mut [T], r: T) {
    let n = norm2(v);
    if n > r {
        let f = if n > T::zero() { r / n } else { T::zero() };
        v.iter_mut().for_each(|x| *x *= f);
    }
}

/// Relative duality gap a polished point must certify.
const POLISH_GAP: f64 = 1e-9;

/// ADMM over-relaxation factor.
const RELAX: f64 = 1.6;

/// A point with an exact optimality certificate on a fixed support.
struct Polished<T> {
    s: Vec<T>,
    gap: T,
}

/// Solves the KKT system on `support` with the given signs, assuming the
/// ball constraint is active:
/// `s_S = G⁻¹(A_Sᵀy − sign/μ)`, `G = A_SᵀA_S`, with `μ` fixed by
/// `‖A s − y‖ = b`. Returns a point only if its signs are consistent and
/// `λ = μ(y − As)` is dual feasible.
fn polish<T: Real>(st: &Stacked<T>, support: &[usize], signs: &[T], nonnegative: bool) -> Option<Polished<T>> {
    let rows = st.a.rows;
    let n = st.a.cols;
    let mut support = support.to_vec();
    let mut signs = signs.to_vec();
    for round in 0..4 {
        let k = support.len();
        if k == 0 || k > rows {
            return None;
        }
        // A_S stored column-major: column j is a_s[j*rows..].
        let mut a_s = vec![T::zero(); k * rows];
        for (j, &col) in support.iter().enumerate() {
            for i in 0..rows {
                a_s[j * rows + i] = st.a.data[i * n + col];
            }
        }
        let colj = |j: usize| &a_s[j * rows..(j + 1) * rows];
        let mut g = vec![T::zero(); k * k];
        for i in 0..k {
            for j in 0..=i {
                let v = dot(colj(i), colj(j));
                g[i * k + j] = v;
                g[j * k + i] = v;
            }
        }
        let chol = Cholesky::factor(g, k)?;
        let mut x_ls: Vec<T> = (0..k).map(|j| dot(colj(j), &st.y)).collect();
        chol.solve(&mut x_ls);
        let mut v = signs.clone();
        chol.solve(&mut v);
        let apply = |x: &[T]| {
            let mut out = vec![T::zero(); rows];
            for (j, &xj) in x.iter().enumerate() {
                for (o, &a) in out.iter_mut().zip(colj(j)) {
                    *o += xj * a;
                }
            }
            out
        };
        let a_xls = apply(&x_ls);
        // Residual of the support least squares, re-orthogonalized against
        // the support columns so that A_Sᵀλ hits the signs exactly below.
        let mut r_ls: Vec<T> = st.y.iter().zip(&a_xls).map(|(&a, &b)| a - b).collect();
        let mut corr: Vec<T> = (0..k).map(|j| dot(colj(j), &r_ls)).collect();
        chol.solve(&mut corr);
        for (r, c) in r_ls.iter_mut().zip(apply(&corr)) {
            *r -= c;
        }
        let rp2 = dot(&r_ls, &r_ls);
        let a_v = apply(&v);
        let av2 = dot(&a_v, &a_v);
        let b2 = st.radius * st.radius;
        if rp2 > b2 * T::lit(1.0 + 1e-9) + st.floor() * st.floor() || !(av2 > T::zero()) {
            return None;
        }
        let slack = (b2 - rp2).max(T::zero());
        let inv_mu = (slack / av2).sqrt();
        let s_s: Vec<T> = x_ls.iter().zip(&v).map(|(&x, &w)| x - inv_mu * w).collect();

        let wrong: Vec<usize> = (0..k).filter(|&j| !(s_s[j] * signs[j] > T::zero())).collect();
        // A square support fits y exactly whatever the signs, so take them
        // from the solution and let the dual test decide.
        if !wrong.is_empty() && k == rows && round == 0 {
            for &j in &wrong {
                signs[j] = -signs[j];
            }
            continue;
        }
        if !wrong.is_empty() {
            let keep: Vec<usize> = (0..k).filter(|j| !wrong.contains(j)).collect();
            support = keep.iter().map(|&j| support[j]).collect();
            signs = keep.iter().map(|&j| signs[j]).collect();
            continue;
        }

        let mut s = vec![T::zero(); n];
        for (j, &col) in support.iter().enumerate() {
            s[col] = s_s[j];
        }
        // y − As = r_ls + A v/μ, so λ = μ r_ls + A v. With no slack the
        // constraint is an equality and λ = A v, the least-norm solution of
        // A_Sᵀλ = sign.
        let lambda: Vec<T> =
            if inv_mu > T::zero() { r_ls.iter().zip(&a_v).map(|(&r, &av)| r / inv_mu + av).collect() } else { a_v };
        let mut atl = vec![T::zero(); n];
        st.a.tmul(&lambda, &mut atl);
        let c = st.dual_scale(&atl, nonnegative);
        if c > T::lit(1.0 + 1e-7) {
            return None;
        }
        // Ill-conditioned supports can pass the sign and dual tests with a
        // point that is not actually optimal; the gap catches those.
        let gap = st.gap(&s, &lambda, nonnegative);
        if !st.feasible(st.residual(&s)) || gap > T::lit(POLISH_GAP) * (T::one() + l1(&s)) {
            return None;
        }
        return Some(Polished { s, gap });
    }
    None
}

/// The `s`-update `(I + AᵀA) s = rhs`, factored once per problem.
enum Factor<T> {
    /// `(I + AᵀA)⁻¹ = I − Aᵀ(I + AAᵀ)⁻¹A`, used when `2m < N`.
    Woodbury {
        chol: Cholesky<T>,
        gram: Vec<T>,
    },
    Direct {
        chol: Cholesky<T>,
    },
}

impl<T: Real> Factor<T> {
    fn new(a: &Dense<T>) -> Result<Self> {
        if a.rows < a.cols {
            let gram = a.gram_rows();
            let mut m = gram.clone();
            for i in 0..a.rows {
                m[i * a.rows + i] += T::one();
            }
            let chol = Cholesky::factor(m, a.rows)
                .ok_or_else(|| Error::Numerical("I + AAᵀ is not positive definite".into()))?;
            Ok(Factor::Woodbury { chol, gram })
        } else {
            let mut m = a.gram_cols();
            for i in 0..a.cols {
                m[i * a.cols + i] += T::one();
            }
            let chol = Cholesky::factor(m, a.cols)
                .ok_or_else(|| Error::Numerical("I + AᵀA is not positive definite".into()))?;
            Ok(Factor::Direct { chol })
        }
    }

    /// Writes the solution to `s` and `A s` to `as_`.
    fn solve(&self, a: &Dense<T>, rhs: &[T], s: &mut [T], as_: &mut [T]) {
        match self {
            Factor::Woodbury { chol, gram } => {
                let mut arhs = vec![T::zero(); a.rows];
                a.mul(rhs, &mut arhs);
                let mut q = arhs.clone();
                chol.solve(&mut q);
                let mut atq = vec![T::zero(); a.cols];
                a.tmul(&q, &mut atq);
                for ((si, &r), &t) in s.iter_mut().zip(rhs).zip(&atq) {
                    *si = r - t;
                }
                let m = a.rows;
                for i in 0..m {
                    as_[i] = arhs[i] - dot(&gram[i * m..(i + 1) * m], &q);
                }
            }
            Factor::Direct { chol } => {
                s.copy_from_slice(rhs);
                chol.solve(s);
                a.mul(s, as_);
            }
        }
    }
}

/// Support and signs of a sparse iterate.
fn support_of<T: Real>(w: &[T]) -> (Vec<usize>, Vec<T>) {
    let idx: Vec<usize> = (0..w.len()).filter(|&j| w[j] != T::zero()).collect();
    let signs = idx.iter().map(|&j| w[j].signum()).collect();
    (idx, signs)
}

/// The support of `w` cut or filled to `k` entries. Kept entries are the
/// largest of `w`; added ones are the largest of `dual` elsewhere, signed by it.
fn complete_support<T: Real>(w: &[T], dual: &[T], k: usize) -> (Vec<usize>, Vec<T>) {
    let by_magnitude = |v: &[T], idx: &mut Vec<usize>| {
        idx.sort_by(|&a, &b| v[b].abs().partial_cmp(&v[a].abs()).unwrap_or(std::cmp::Ordering::Equal).then(a.cmp(&b)));
    };
    let mut kept: Vec<usize> = (0..w.len()).filter(|&j| w[j] != T::zero()).collect();
    by_magnitude(w, &mut kept);
    kept.truncate(k);
    let mut extra: Vec<usize> = (0..w.len()).filter(|&j| w[j] == T::zero() && dual[j] != T::zero()).collect();
    by_magnitude(dual, &mut extra);
    extra.truncate(k - kept.len());
    let mut picked: Vec<(usize, T)> = kept.iter().map(|&j| (j, w[j].signum())).collect();
    picked.extend(extra.iter().map(|&j| (j, dual[j].signum())));
    picked.sort_unstable_by_key(|p| p.0);
    picked.into_iter().unzip()
}

/// Simplex pivots for `min ‖s‖₁ s.t. A s = y` from the basis `start`
/// (`rows` columns). Any nonsingular basis is feasible once each column
/// takes the sign of its coefficient, so no phase one is needed. Returns the
/// optimal basis and signs, or `None` on a singular basis or pivot limit.
fn pivot_to_vertex<T: Real>(st: &Stacked<T>, start: &[usize], max_pivots: usize) -> Option<(Vec<usize>, Vec<T>)> {
    use nalgebra::{DMatrix, DVector};
    let (m, n) = (st.a.rows, st.a.cols);
    if start.len() != m {
        return None;
    }
    let a = DMatrix::<f64>::from_fn(m, n, |i, j| st.a.data[i * n + j].to_f64_lossy());
    let y = DVector::<f64>::from_iterator(m, st.y.iter().map(|v| v.to_f64_lossy()));
    let mut basis = start.to_vec();
    let mut in_basis = vec![false; n];
    basis.iter().for_each(|&j| in_basis[j] = true);
    for _ in 0..=max_pivots {
        let b = a.select_columns(basis.iter());
        let lu = b.clone().lu();
        let x = lu.solve(&y)?;
        let signs: DVector<f64> = x.map(|v| if v < 0.0 { -1.0 } else { 1.0 });
        let lambda = b.transpose().lu().solve(&signs)?;
        let c = a.tr_mul(&lambda);
        let (enter, ce) =
            (0..n).filter(|&j| !in_basis[j]).map(|j| (j, c[j])).max_by(|p, q| p.1.abs().total_cmp(&q.1.abs()))?;
        if ce.abs() <= 1.0 + 1e-9 {
            let mut out: Vec<(usize, T)> = basis.iter().zip(signs.iter()).map(|(&j, &g)| (j, T::lit(g))).collect();
            out.sort_unstable_by_key(|p| p.0);
            return Some(out.into_iter().unzip());
        }
        // Moving along the entering column at rate sign(c) shrinks each basic
        // magnitude |x_i| at rate sign(x_i) d_i; the first to reach zero leaves.
        let d = lu.solve(&(a.column(enter) * ce.signum()))?;
        let leave = (0..m)
            .filter(|&i| signs[i] * d[i] > 1e-12)
            .map(|i| (i, x[i].abs() / (signs[i] * d[i])))
            .min_by(|p, q| p.1.total_cmp(&q.1).then(p.0.cmp(&q.0)))?
            .0;
        in_basis[basis[leave]] = false;
        in_basis[enter] = true;
        basis[leave] = enter;
    }
    None
}

/// ADMM on `min ‖w‖₁ s.t. s = w, A s − y = z, ‖z‖ ≤ b`.
///
/// Per iteration: one cached solve with `I + AᵀA`, over-relaxation, a soft
/// threshold for `w`, a ball projection for `z` and scaled dual updates. The
/// penalty is rebalanced when one residual dominates the other by 10×; the
/// `s`-system does not depend on it, so nothing is refactored.
///
/// Every 10 iterations a polish step tries to certify optimality exactly on
/// the support of `w`. Tiny balls make the problem a degenerate linear
/// program that ADMM approaches slowly, so polish also tries a full-rank
/// basis guessed from the duals and, failing that, simplex pivots from it.
/// If the stopping tolerances are met by a point outside the ball, they are
/// tightened tenfold and the iteration continues.
pub fn solve_bpdn<T: Real>(p: &BpdnProblem<T>, opts: &SolverOptions<T>) -> Result<BpdnSolution<T>> {
    opts.validate()?;
    let st = Stacked::new(p);
    let n = st.a.cols;
    let rows = st.a.rows;
    if st.y_norm <= st.radius {
        return Ok(st.zero_solution(n));
    }
    if st.infeasible() {
        return Ok(st.infeasible_solution(n));
    }
    let nonneg = opts.nonnegative;
    let factor = Factor::new(&st.a)?;

    let mut s = vec![T::zero(); n];
    let mut as_ = vec![T::zero(); rows];
    let mut w = vec![T::zero(); n];
    let mut z = vec![T::zero(); rows];
    let mut u1 = vec![T::zero(); n];
    let mut u2 = vec![T::zero(); rows];
    let mut rhs = vec![T::zero(); n];
    let mut tmp = vec![T::zero(); rows];
    let mut atv = vec![T::zero(); n];
    let mut s_hat = vec![T::zero(); n];
    let mut as_hat = vec![T::zero(); rows];
    let mut rho = opts.penalty;
    let relax = T::lit(RELAX);

    let sqrt_dim = T::from_usize_lossy(n + rows).sqrt();
    let sqrt_n = T::from_usize_lossy(n).sqrt();
    let mut last_support: Option<Vec<usize>> = None;
    let mut diag = Diagnostics::default();
    let mut converged = false;
    let mut iter = 0;
    // Tightened whenever the tolerances are met by an infeasible iterate.
    let mut tighten = T::one();
    let mut next_pivot = 50;
    let near_bp = !nonneg && st.radius <= T::lit(1e-6) * st.y_norm;

    while iter < opts.max_iter {
        iter += 1;
        for i in 0..rows {
            tmp[i] = st.y[i] + z[i] - u2[i];
        }
        st.a.tmul(&tmp, &mut atv);
        for j in 0..n {
            rhs[j] = w[j] - u1[j] + atv[j];
        }
        factor.solve(&st.a, &rhs, &mut s, &mut as_);

        let w_prev = w.clone();
        let z_prev = z.clone();
        // Over-relaxed copies of s and As − y.
        for j in 0..n {
            s_hat[j] = relax * s[j] + (T::one() - relax) * w_prev[j];
        }
        for i in 0..rows {
            as_hat[i] = relax * (as_[i] - st.y[i]) + (T::one() - relax) * z_prev[i];
        }
        let k = T::one() / rho;
        for j in 0..n {
            w[j] = soft(s_hat[j] + u1[j], k, nonneg);
        }
        for i in 0..rows {
            z[i] = as_hat[i] + u2[i];
        }
        project_ball(&mut z, st.radius);

        let mut r_pri2 = T::zero();
        for j in 0..n {
            u1[j] += s_hat[j] - w[j];
            let r = s[j] - w[j];
            r_pri2 += r * r;
        }
        for i in 0..rows {
            u2[i] += as_hat[i] - z[i];
            let r = as_[i] - st.y[i] - z[i];
            r_pri2 += r * r;
        }
        let r_pri = r_pri2.sqrt();
        for i in 0..rows {
            tmp[i] = z[i] - z_prev[i];
        }
        st.a.tmul(&tmp, &mut atv);
        let r_dual = rho
            * (0..n)
                .map(|j| {
                    let d = w[j] - w_prev[j] + atv[j];
                    d * d
                })
                .sum::<T>()
                .sqrt();

        let primal_scale = norm2(&s).max(norm2(&as_)).max(norm2(&w)).max(norm2(&z)).max(st.y_norm);
        st.a.tmul(&u2, &mut atv);
        let dual_scale = rho * (0..n).map(|j| (u1[j] + atv[j]) * (u1[j] + atv[j])).sum::<T>().sqrt();
        let eps_pri = tighten * (sqrt_dim * opts.abs_tol + opts.rel_tol * primal_scale);
        let eps_dual = tighten * (sqrt_n * opts.abs_tol + opts.rel_tol * dual_scale);
        diag.primal_residual = r_pri.to_f64_lossy();
        diag.dual_residual = r_dual.to_f64_lossy();

        if r_pri <= eps_pri && r_dual <= eps_dual {
            converged = true;
        }

        if opts.polish && (converged || iter % 10 == 0) {
            let (support, signs) = support_of(&w);
            let changed = last_support.as_ref() != Some(&support);
            let mut found = if changed || converged { polish(&st, &support, &signs, nonneg) } else { None };
            // Near a vertex the support of w lags behind the basis. The
            // scaled dual u1 approaches a subgradient of ‖w‖₁, so its largest
            // entries off the support are the likely missing columns. If that
            // guess is not optimal, simplex pivots from it usually are; they
            // run on a doubling schedule since each costs two LU factors, and
            // only when the ball is so small that the optimum is a perturbed
            // basis pursuit vertex.
            if found.is_none() && iter % 50 == 0 && support.len() != rows {
                let (guess, guess_signs) = complete_support(&w, &u1, rows);
                found = polish(&st, &guess, &guess_signs, nonneg);
                if found.is_none() && near_bp && iter >= next_pivot {
                    next_pivot *= 2;
                    if let Some((vertex, vertex_signs)) = pivot_to_vertex(&st, &guess, 4 * rows) {
                        found = polish(&st, &vertex, &vertex_signs, nonneg);
                    }
                }
            }
            if let Some(pol) = found {
                diag.iterations = iter;
                diag.dual_gap = pol.gap.to_f64_lossy();
                diag.certified = true;
                diag.final_penalty = rho.to_f64_lossy();
                let residual = st.residual(&pol.s);
                return Ok(BpdnSolution {
                    objective: l1(&pol.s),
                    residual_norm: residual,
                    status: SolveStatus::Optimal,
                    s: pol.s,
                    diagnostics: diag,
                });
            }
            last_support = Some(support);
        }
        if converged {
            if st.feasible(st.residual(&w)) || st.feasible(st.residual(&s)) || tighten < T::lit(1e-6) {
                break;
            }
            converged = false;
            tighten /= T::lit(10.0);
        }

        let ten = T::lit(10.0);
        let two = T::lit(2.0);
        if r_pri > ten * r_dual {
            rho *= two;
            u1.iter_mut().for_each(|u| *u /= two);
            u2.iter_mut().for_each(|u| *u /= two);
        } else if r_dual > ten * r_pri {
            rho /= two;
            u1.iter_mut().for_each(|u| *u *= two);
            u2.iter_mut().for_each(|u| *u *= two);
        }
    }

    // No certificate: return the more feasible of s and its sparse copy w.
    let res_s = st.residual(&s);
    let res_w = st.residual(&w);
    let (best, residual) = if res_w <= res_s || st.feasible(res_w) { (w, res_w) } else { (s, res_s) };
    let lambda: Vec<T> = u2.iter().map(|&u| -rho * u).collect();
    diag.iterations = iter;
    diag.dual_gap = st.gap(&best, &lambda, nonneg).to_f64_lossy();
    diag.final_penalty = rho.to_f64_lossy();
    let status = if converged && st.feasible(residual) { SolveStatus::Optimal } else { SolveStatus::MaxIter };
    Ok(BpdnSolution { objective: l1(&best), residual_norm: residual, status, s: best, diagnostics: diag })
}

/// Independent cross-check: diagonally preconditioned primal-dual hybrid
/// gradient (Chambolle–Pock) without any polishing.
///
/// Primal steps `T_j = 1/Σ_i|A_ij|`, scalar dual step
/// `σ = min_i 1/Σ_j|A_ij|`. Stops when the iterate is feasible to `tol`
/// and its dual gap is below `tol·(1 + ‖s‖₁)`.
pub fn reference_solve_bpdn<T: Real>(p: &BpdnProblem<T>, tol: T, max_iter: usize) -> Result<BpdnSolution<T>> {
    reference_solve(p, tol, max_iter, false)
}

/// [`reference_solve_bpdn`] with the nonnegativity constraint.
pub fn reference_solve_bpdn_nonneg<T: Real>(p: &BpdnProblem<T>, tol: T, max_iter: usize) -> Result<BpdnSolution<T>> {
    reference_solve(p, tol, max_iter, true)
}

fn reference_solve<T: Real>(p: &BpdnProblem<T>, tol: T, max_iter: usize, nonneg: bool) -> Result<BpdnSolution<T>> {
    if !(tol > T::zero()) {
        return Err(Error::config("reference tolerance must be positive"));
    }
    let st = Stacked::new(p);
    let n = st.a.cols;
    let rows = st.a.rows;
    if st.y_norm <= st.radius {
        return Ok(st.zero_solution(n));
    }
    if st.infeasible() {
        return Ok(st.infeasible_solution(n));
    }
    let mut col_abs = vec![T::zero(); n];
    let mut sigma = T::infinity();
    for i in 0..rows {
        let row = st.a.row(i);
        let row_abs: T = row.iter().map(|v| v.abs()).sum();
        if row_abs > T::zero() {
            sigma = sigma.min(T::one() / row_abs);
        }
        for (c, &v) in col_abs.iter_mut().zip(row) {
            *c += v.abs();
        }
    }
    let steps: Vec<T> = col_abs.iter().map(|&c| if c > T::zero() { T::one() / c } else { T::one() }).collect();

    let mut s = vec![T::zero(); n];
    let mut s_bar = vec![T::zero(); n];
    // PDHG multiplier ξ; in this module's convention λ = −ξ.
    let mut xi = vec![T::zero(); rows];
    let mut atx = vec![T::zero(); n];
    let mut a_sbar = vec![T::zero(); rows];
    let mut v = vec![T::zero(); rows];
    let mut diag = Diagnostics::default();
    let two = T::lit(2.0);

    for iter in 1..=max_iter {
        st.a.tmul(&xi, &mut atx);
        for j in 0..n {
            let next = soft(s[j] - steps[j] * atx[j], steps[j], nonneg);
            s_bar[j] = two * next - s[j];
            s[j] = next;
        }
        st.a.mul(&s_bar, &mut a_sbar);
        for i in 0..rows {
            v[i] = xi[i] + sigma * a_sbar[i] - sigma * st.y[i];
        }
        let nv = norm2(&v);
        let shrink = if nv > sigma * st.radius { T::one() - sigma * st.radius / nv } else { T::zero() };
        for i in 0..rows {
            xi[i] = v[i] * shrink;
        }

        if iter % 50 == 0 || iter == max_iter {
            let residual = st.residual(&s);
            let lambda: Vec<T> = xi.iter().map(|&x| -x).collect();
            let gap = st.gap(&s, &lambda, nonneg);
            let obj = l1(&s);
            let feasible = residual <= st.radius + tol * st.y_norm.max(T::one());
            diag.iterations = iter;
            diag.dual_gap = gap.to_f64_lossy();
            diag.primal_residual = (residual - st.radius).max(T::zero()).to_f64_lossy();
            if feasible && gap.abs() <= tol * (T::one() + obj) {
                return Ok(BpdnSolution {
                    objective: obj,
                    residual_norm: residual,
                    status: SolveStatus::Optimal,
                    s,
                    diagnostics: diag,
                });
            }
        }
    }
    let residual = st.residual(&s);
    Ok(BpdnSolution { objective: l1(&s), residual_norm: residual, status: SolveStatus::MaxIter, s, diagnostics: diag })
}

/// Dual gap of an arbitrary point against the best scaling of the
/// multiplier `μ(y − As)` that makes it dual feasible. Used by tests and
/// reports to certify solutions independently of the solver that made them.
pub fn certificate_gap<T: Real>(p: &BpdnProblem<T>, s: &[T], nonnegative: bool) -> T {
    let st = Stacked::new(p);
    let mut as_ = vec![T::zero(); st.a.rows];
    st.a.mul(s, &mut as_);
    let lambda: Vec<T> = st.y.iter().zip(&as_).map(|(&y, &a)| y - a).collect();
    let mut atl = vec![T::zero(); st.a.cols];
    st.a.tmul(&lambda, &mut atl);
    let c = if nonnegative {
        atl.iter().fold(T::zero(), |m, &v| m.max(v))
    } else {
        atl.iter().fold(T::zero(), |m, &v| m.max(v.abs()))
    };
    if !(c > T::zero()) {
        return l1(s);
    }
    // The best multiple of a fixed direction d has value ⟨y,d⟩ − b‖d‖ ≥ 0
    // scaled up to the dual boundary.
    let value = (dot(&st.y, &lambda) - st.radius * norm2(&lambda)) / c;
    l1(s) - value.max(T::zero())
}
