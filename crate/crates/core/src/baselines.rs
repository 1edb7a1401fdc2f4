//! Reimplementations of three comparison estimators: ML-QCELS, MM-QCELS
//! and QMEGS. They follow the published cost functions; sampling schedules
//! and optimizer details are this crate's choices and are documented on
//! each function.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::{domain, Seed};
use crate::signal::{Channel, RuntimeLedger, SignalSource};

/// Energy window searched by every baseline. The normalized models live in
/// `[π/4, 3π/4]`.
pub const DEFAULT_SEARCH: (f64, f64) = (0.0, PI);

fn default_search() -> (f64, f64) {
    DEFAULT_SEARCH
}

/// `⌊4 ln T_n⌋`, the level count of the multi-level baselines.
pub fn default_levels(t_n: f64) -> usize {
    ((4.0 * t_n.ln()).floor() as usize).max(1)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MlQcelsParams {
    /// Maximal evolution time `T_n`.
    pub t_max: f64,
    /// Times per level `N₀`.
    #[serde(default = "MlQcelsParams::default_n0")]
    pub n0: usize,
    /// Shots per time `N_s`.
    #[serde(default = "MlQcelsParams::default_ns")]
    pub ns: u64,
    /// Level count `J`; `⌊4 ln T_n⌋` when absent.
    #[serde(default)]
    pub levels: Option<usize>,
    /// Step of the first level.
    #[serde(default = "one")]
    pub tau: f64,
    #[serde(default = "default_search")]
    pub search: (f64, f64),
}

fn one() -> f64 {
    1.0
}

impl MlQcelsParams {
    fn default_n0() -> usize {
        8
    }
    fn default_ns() -> u64 {
        50
    }

    /// `N₀ = 8`, `N_s = 50`, `J = ⌊4 ln T_n⌋`.
    pub fn comparison_defaults(t_n: f64) -> Self {
        MlQcelsParams { t_max: t_n, n0: 8, ns: 50, levels: None, tau: 1.0, search: DEFAULT_SEARCH }
    }

    pub fn level_count(&self) -> usize {
        self.levels.unwrap_or_else(|| default_levels(self.t_max))
    }

    /// Step `τ_j = τ q^j` with `q` chosen so the last level ends at `T_n`.
    pub fn steps(&self) -> Vec<f64> {
        let j = self.level_count();
        if j == 1 {
            return vec![self.t_max / self.n0 as f64];
        }
        let ratio = (self.t_max / (self.n0 as f64 * self.tau)).max(1.0);
        let q = ratio.powf(1.0 / (j - 1) as f64);
        (0..j).map(|l| self.tau * q.powi(l as i32)).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MmQcelsParams {
    pub t_max: f64,
    /// Number of modeled frequencies `K`.
    #[serde(default = "MmQcelsParams::default_k")]
    pub k: usize,
    /// Times per level `N_T`.
    #[serde(default = "MmQcelsParams::default_nt")]
    pub n_t: usize,
    /// Time-window scale `γ`.
    #[serde(default = "one")]
    pub gamma: f64,
    #[serde(default = "MmQcelsParams::default_ns")]
    pub ns: u64,
    #[serde(default)]
    pub levels: Option<usize>,
    /// Local minimizations per level.
    #[serde(default = "MmQcelsParams::default_starts")]
    pub starts: usize,
    #[serde(default = "default_search")]
    pub search: (f64, f64),
}

impl MmQcelsParams {
    fn default_k() -> usize {
        2
    }
    fn default_nt() -> usize {
        30
    }
    fn default_ns() -> u64 {
        100
    }
    fn default_starts() -> usize {
        8
    }

    /// `K = 2`, `N_T = 30`, `γ = 1`, `N_s = 100`, `J = ⌊4 ln T_n⌋`.
    pub fn comparison_defaults(t_n: f64) -> Self {
        MmQcelsParams {
            t_max: t_n,
            k: 2,
            n_t: 30,
            gamma: 1.0,
            ns: 100,
            levels: None,
            starts: 8,
            search: DEFAULT_SEARCH,
        }
    }

    pub fn level_count(&self) -> usize {
        self.levels.unwrap_or_else(|| default_levels(self.t_max))
    }

    /// Window lengths `T_j`, geometric from `min(T_n, 8)` up to `T_n`.
    pub fn windows(&self) -> Vec<f64> {
        geometric(self.t_max.min(8.0), self.t_max, self.level_count())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QmegsParams {
    pub t_max: f64,
    /// Peaks to extract `K`.
    #[serde(default = "QmegsParams::default_k")]
    pub k: usize,
    /// Grid spacing of the energy scan.
    #[serde(default = "QmegsParams::default_dx")]
    pub dx: f64,
    /// Gaussian width parameter: `σ_t = T_n/α`.
    #[serde(default = "QmegsParams::default_alpha")]
    pub alpha: f64,
    /// Number of single-shot samples; `10 + 2⌊ln(2T_n)⌋` when absent.
    #[serde(default)]
    pub n_samples: Option<usize>,
    #[serde(default = "default_search")]
    pub search: (f64, f64),
}

impl QmegsParams {
    fn default_k() -> usize {
        10
    }
    fn default_dx() -> f64 {
        1e-4
    }
    fn default_alpha() -> f64 {
        5.0
    }

    /// `K = 10`, `dx = 10⁻⁴`, `α = 5`, `N = 10 + 2⌊ln(2T_n)⌋`.
    pub fn comparison_defaults(t_n: f64) -> Self {
        QmegsParams { t_max: t_n, k: 10, dx: 1e-4, alpha: 5.0, n_samples: None, search: DEFAULT_SEARCH }
    }

    pub fn sample_count(&self) -> usize {
        self.n_samples.unwrap_or(10 + 2 * (2.0 * self.t_max).ln().floor().max(0.0) as usize)
    }
}

/// A baseline and its parameters, tagged by `"algorithm"` in JSON.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "algorithm", rename_all = "snake_case")]
pub enum BaselineConfig {
    MlQcels(MlQcelsParams),
    MmQcels(MmQcelsParams),
    Qmegs(QmegsParams),
}

impl BaselineConfig {
    pub fn name(&self) -> &'static str {
        match self {
            BaselineConfig::MlQcels(_) => "ml_qcels",
            BaselineConfig::MmQcels(_) => "mm_qcels",
            BaselineConfig::Qmegs(_) => "qmegs",
        }
    }

    /// Comparison parameters for a named baseline at maximal time `t_n`.
    pub fn comparison_defaults(name: &str, t_n: f64) -> Result<Self> {
        match name {
            "ml_qcels" => Ok(BaselineConfig::MlQcels(MlQcelsParams::comparison_defaults(t_n))),
            "mm_qcels" => Ok(BaselineConfig::MmQcels(MmQcelsParams::comparison_defaults(t_n))),
            "qmegs" => Ok(BaselineConfig::Qmegs(QmegsParams::comparison_defaults(t_n))),
            other => Err(Error::config(format!("unknown baseline {other:?}"))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let pos = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::config(format!("{name} must be positive")))
            }
        };
        let search = |s: (f64, f64)| {
            if s.0.is_finite() && s.1.is_finite() && s.0 < s.1 {
                Ok(())
            } else {
                Err(Error::config("search must be an increasing finite pair"))
            }
        };
        match self {
            BaselineConfig::MlQcels(p) => {
                pos("t_max", p.t_max)?;
                pos("tau", p.tau)?;
                search(p.search)?;
                if p.n0 == 0 || p.ns == 0 || p.level_count() == 0 {
                    return Err(Error::config("ml_qcels counts must be positive"));
                }
            }
            BaselineConfig::MmQcels(p) => {
                pos("t_max", p.t_max)?;
                pos("gamma", p.gamma)?;
                search(p.search)?;
                if p.k == 0 || p.n_t == 0 || p.ns == 0 || p.starts == 0 || p.level_count() == 0 {
                    return Err(Error::config("mm_qcels counts must be positive"));
                }
                if p.n_t < p.k {
                    return Err(Error::config("mm_qcels needs n_t >= k"));
                }
            }
            BaselineConfig::Qmegs(p) => {
                pos("t_max", p.t_max)?;
                pos("dx", p.dx)?;
                pos("alpha", p.alpha)?;
                search(p.search)?;
                if p.k == 0 || p.sample_count() == 0 {
                    return Err(Error::config("qmegs counts must be positive"));
                }
            }
        }
        Ok(())
    }
}

/// Output of one baseline run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaselineResult {
    pub algorithm: String,
    /// Ground-energy estimate.
    pub estimate: f64,
    /// `(amplitude, energy)` pairs; amplitude is `NaN` where not modeled.
    pub components: Vec<(f64, f64)>,
    pub ledger: RuntimeLedger,
    pub warnings: Vec<String>,
}

/// Runs the configured baseline. The source supplies the spectrum, noise
/// model and seed; Hadamard sources are re-shot with the baseline's own
/// per-time shot count.
pub fn run_baseline(cfg: &BaselineConfig, source: &SignalSource) -> Result<BaselineResult> {
    cfg.validate()?;
    let source = source.with_seed(source_seed(source));
    match cfg {
        BaselineConfig::MlQcels(p) => ml_qcels(&source, p),
        BaselineConfig::MmQcels(p) => mm_qcels(&source, p),
        BaselineConfig::Qmegs(p) => qmegs(&source, p),
    }
}

fn source_seed(source: &SignalSource) -> Seed {
    source.seed().child(domain::BASELINE)
}

fn reshot(source: &SignalSource, shots: u64) -> SignalSource {
    match source.channel() {
        Channel::Exact => source.clone(),
        Channel::Hadamard(_) => source.with_channel(Channel::Hadamard(shots)),
    }
}

/// `lo, …, hi` in `count` geometric steps.
fn geometric(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if count == 1 {
        return vec![hi];
    }
    let q = (hi / lo).max(1.0).powf(1.0 / (count - 1) as f64);
    (0..count).map(|j| if j + 1 == count { hi } else { lo * q.powi(j as i32) }).collect()
}

/// `|Σ_n y_n e^{i E t_n}|²`.
fn matched_power(times: &[f64], ys: &[Complex64], e: f64) -> f64 {
    times.iter().zip(ys).map(|(&t, &y)| y * Complex64::from_polar(1.0, e * t)).sum::<Complex64>().norm_sqr()
}

/// Golden-section maximization of a unimodal function on `[a, b]`.
fn golden_max(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> f64 {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while b - a > tol {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
    }
    (a + b) / 2.0
}

/// Grid scan then golden refinement around the best grid point.
fn scan_max(f: impl Fn(f64) -> f64, lo: f64, hi: f64, points: usize) -> f64 {
    let step = (hi - lo) / points as f64;
    let mut best = (lo, f64::NEG_INFINITY);
    for i in 0..=points {
        let e = lo + i as f64 * step;
        let v = f(e);
        if v > best.1 {
            best = (e, v);
        }
    }
    let a = (best.0 - step).max(lo);
    let b = (best.0 + step).min(hi);
    golden_max(&f, a, b, 1e-13 * (1.0 + best.0.abs()))
}

/// Multi-level single-frequency fit.
///
/// Level `j` measures `y(n τ_j)` for `n = 1..N₀` with `N_s` shots each and
/// maximizes `|Σ_n y_n e^{iEnτ_j}|²`, which is the same as minimizing
/// `min_r (1/N₀) Σ_n |r e^{−iEnτ_j} − y_n|²`. Level 0 scans the whole search
/// window; later levels search `±π/(2τ_j)` around the previous estimate, a
/// strict subset of one alias period. Steps grow geometrically so that the
/// last level reaches `T_n` and all `N₀ J` times are distinct.
pub fn ml_qcels(source: &SignalSource, p: &MlQcelsParams) -> Result<BaselineResult> {
    let source = reshot(source, p.ns);
    let mut all_times = Vec::new();
    let mut estimate = 0.5 * (p.search.0 + p.search.1);
    let mut amplitude = f64::NAN;
    for (level, &step) in p.steps().iter().enumerate() {
        let times: Vec<f64> = (1..=p.n0).map(|n| n as f64 * step).collect();
        let ys: Vec<Complex64> =
            times.iter().enumerate().map(|(i, &t)| source.measure(t, level as u64, i as u64)).collect();
        let (lo, hi) = if level == 0 {
            p.search
        } else {
            let half = PI / (2.0 * step);
            (estimate - half, estimate + half)
        };
        let f = |e: f64| matched_power(&times, &ys, e);
        estimate = scan_max(f, lo, hi, 16 * p.n0.max(8));
        amplitude = f(estimate).sqrt() / p.n0 as f64;
        all_times.extend(times);
    }
    Ok(BaselineResult {
        algorithm: "ml_qcels".into(),
        estimate,
        components: vec![(amplitude, estimate)],
        ledger: RuntimeLedger::from_times(&all_times, source.channel().charged_shots()),
        warnings: Vec::new(),
    })
}

/// Least-squares amplitudes and residual of `Σ_k r_k e^{−iE_k t}` against `y`.
fn projected_fit(times: &[f64], ys: &[Complex64], energies: &[f64]) -> (Vec<Complex64>, f64) {
    let phi = DMatrix::from_fn(times.len(), energies.len(), |i, k| Complex64::from_polar(1.0, -energies[k] * times[i]));
    let y = DVector::from_column_slice(ys);
    let svd = phi.clone().svd(true, true);
    let r = svd.solve(&y, 1e-12).unwrap_or_else(|_| DVector::zeros(energies.len()));
    let res = (phi * &r - y).norm_squared() / times.len() as f64;
    (r.iter().copied().collect(), res)
}

/// Nelder–Mead minimization from `x0` with initial simplex size `scale`.
fn nelder_mead(f: &dyn Fn(&[f64]) -> f64, x0: &[f64], scale: f64, max_eval: usize, tol: f64) -> (Vec<f64>, f64) {
    let d = x0.len();
    let mut simplex: Vec<Vec<f64>> = vec![x0.to_vec()];
    for i in 0..d {
        let mut v = x0.to_vec();
        v[i] += scale;
        simplex.push(v);
    }
    let mut vals: Vec<f64> = simplex.iter().map(|v| f(v)).collect();
    let mut evals = d + 1;
    while evals < max_eval {
        let mut order: Vec<usize> = (0..=d).collect();
        order.sort_by(|&a, &b| vals[a].total_cmp(&vals[b]));
        simplex = order.iter().map(|&i| simplex[i].clone()).collect();
        vals = order.iter().map(|&i| vals[i]).collect();
        let size = simplex[1..]
            .iter()
            .map(|v| v.iter().zip(&simplex[0]).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
            .fold(0.0, f64::max);
        if size < tol {
            break;
        }
        let centroid: Vec<f64> = (0..d).map(|i| simplex[..d].iter().map(|v| v[i]).sum::<f64>() / d as f64).collect();
        let along = |t: f64| -> Vec<f64> { (0..d).map(|i| centroid[i] + t * (simplex[d][i] - centroid[i])).collect() };
        let xr = along(-1.0);
        let fr = f(&xr);
        evals += 1;
        if fr < vals[0] {
            let xe = along(-2.0);
            let fe = f(&xe);
            evals += 1;
            if fe < fr {
                simplex[d] = xe;
                vals[d] = fe;
            } else {
                simplex[d] = xr;
                vals[d] = fr;
            }
        } else if fr < vals[d - 1] {
            simplex[d] = xr;
            vals[d] = fr;
        } else {
            let (xc, fc) = if fr < vals[d] {
                let x = along(-0.5);
                let v = f(&x);
                (x, v)
            } else {
                let x = along(0.5);
                let v = f(&x);
                (x, v)
            };
            evals += 1;
            if fc < vals[d].min(fr) {
                simplex[d] = xc;
                vals[d] = fc;
            } else {
                for i in 1..=d {
                    simplex[i] = (0..d).map(|k| simplex[0][k] + 0.5 * (simplex[i][k] - simplex[0][k])).collect();
                    vals[i] = f(&simplex[i]);
                }
                evals += d;
            }
        }
    }
    let best = (0..=d).min_by(|&a, &b| vals[a].total_cmp(&vals[b])).unwrap_or(0);
    (simplex[best].clone(), vals[best])
}

/// Indices of the `k` largest local maxima of `values`, at least `gap`
/// grid points apart.
fn top_peaks(values: &[f64], k: usize, gap: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]));
    let mut picked: Vec<usize> = Vec::new();
    for i in order {
        if picked.len() == k {
            break;
        }
        if picked.iter().all(|&p| p.abs_diff(i) > gap) {
            picked.push(i);
        }
    }
    picked
}

/// Multi-modal fit of `K` frequencies.
///
/// Level `j` draws `N_T` times uniformly in `[0, γT_j]` with window
/// lengths growing geometrically to `T_n`, and minimizes
/// `(1/N_T) Σ_t |Σ_k r_k e^{−iE_k t} − y(t)|²` by variable projection: the
/// amplitudes are solved exactly for each candidate energy vector, and the
/// energies are refined by Nelder–Mead from `starts` starting points (the
/// previous estimate plus seeded perturbations of size `π/T_j`). Level 0
/// starts from the largest periodogram peaks. The estimate is the energy of
/// the largest-amplitude component.
pub fn mm_qcels(source: &SignalSource, p: &MmQcelsParams) -> Result<BaselineResult> {
    let source = reshot(source, p.ns);
    let mut rng = source.seed().child(0x4d4d).rng();
    let mut all_times = Vec::new();
    let mut energies: Vec<f64> = Vec::new();
    let mut amps: Vec<Complex64> = Vec::new();
    let mut warnings = Vec::new();
    for (level, &window) in p.windows().iter().enumerate() {
        let span = p.gamma * window;
        let times: Vec<f64> = (0..p.n_t).map(|_| rng.random::<f64>() * span).collect();
        let ys: Vec<Complex64> =
            times.iter().enumerate().map(|(i, &t)| source.measure(t, level as u64, i as u64)).collect();
        if level == 0 {
            let points = 2048;
            let step = (p.search.1 - p.search.0) / points as f64;
            let grid: Vec<f64> =
                (0..=points).map(|i| matched_power(&times, &ys, p.search.0 + i as f64 * step)).collect();
            let gap = ((PI / span) / step).ceil() as usize;
            let mut peaks: Vec<f64> =
                top_peaks(&grid, p.k, gap).iter().map(|&i| p.search.0 + i as f64 * step).collect();
            while peaks.len() < p.k {
                peaks.push(p.search.0 + (p.search.1 - p.search.0) * (peaks.len() as f64 + 0.5) / p.k as f64);
            }
            energies = peaks;
        }
        let cost = |e: &[f64]| projected_fit(&times, &ys, e).1;
        let scale = PI / span;
        let mut best = (energies.clone(), cost(&energies));
        for start in 0..p.starts {
            let x0: Vec<f64> = if start == 0 {
                energies.clone()
            } else {
                energies.iter().map(|&e| e + scale * rng.random_range(-1.0..1.0)).collect()
            };
            let (x, v) = nelder_mead(&cost, &x0, 0.25 * scale, 400 * p.k, 1e-12);
            if v < best.1 {
                best = (x, v);
            }
        }
        if best.1.is_nan() {
            warnings.push(format!("level {level}: optimizer returned NaN cost"));
        }
        energies = best.0;
        amps = projected_fit(&times, &ys, &energies).0;
        all_times.extend(times);
    }
    let mut components: Vec<(f64, f64)> = amps.iter().map(|a| a.norm()).zip(energies.iter().copied()).collect();
    components.sort_by(|a, b| a.1.total_cmp(&b.1));
    let estimate =
        components.iter().fold((f64::NEG_INFINITY, f64::NAN), |acc, &(a, e)| if a > acc.0 { (a, e) } else { acc }).1;
    Ok(BaselineResult {
        algorithm: "mm_qcels".into(),
        estimate,
        components,
        ledger: RuntimeLedger::from_times(&all_times, source.channel().charged_shots()),
        warnings,
    })
}

/// Gaussian-filtered matched filter.
///
/// Draws `N` times from a Gaussian of width `T_n/α` truncated to
/// `|t| ≤ T_n`, measures each with a single shot per part, then finds the
/// argmax of `|Σ_t y(t) e^{iEt}|²` on a grid of spacing `dx`. Each found
/// peak excludes `|E − E_k| < 5/T_max` from later searches; `K` peaks are
/// extracted and the first is the estimate.
pub fn qmegs(source: &SignalSource, p: &QmegsParams) -> Result<BaselineResult> {
    let source = reshot(source, 1);
    let mut rng = source.seed().child(0x514d).rng();
    let normal = Normal::new(0.0, p.t_max / p.alpha).map_err(|e| Error::config(e.to_string()))?;
    let n = p.sample_count();
    let mut times = Vec::with_capacity(n);
    while times.len() < n {
        let t: f64 = normal.sample(&mut rng);
        if t.abs() <= p.t_max {
            times.push(t);
        }
    }
    let ys: Vec<Complex64> = times.iter().enumerate().map(|(i, &t)| source.measure(t, 0, i as u64)).collect();
    let t_max = times.iter().fold(0.0f64, |m, t| m.max(t.abs()));
    let exclusion = if t_max > 0.0 { 5.0 / t_max } else { f64::INFINITY };

    let points = ((p.search.1 - p.search.0) / p.dx).ceil() as usize;
    let profile: Vec<f64> = (0..=points).map(|i| matched_power(&times, &ys, p.search.0 + i as f64 * p.dx)).collect();
    let mut found: Vec<f64> = Vec::new();
    for _ in 0..p.k {
        let mut best: Option<(f64, f64)> = None;
        for (i, &v) in profile.iter().enumerate() {
            let e = p.search.0 + i as f64 * p.dx;
            if found.iter().any(|&f| (e - f).abs() < exclusion) {
                continue;
            }
            if best.is_none_or(|b| v > b.1) {
                best = Some((e, v));
            }
        }
        match best {
            Some((e, _)) => found.push(e),
            None => break,
        }
    }
    let estimate = *found.first().ok_or_else(|| Error::Numerical("empty QMEGS search window".into()))?;
    let norm = (n * n) as f64;
    let components = found.iter().map(|&e| ((matched_power(&times, &ys, e) / norm).sqrt(), e)).collect();
    Ok(BaselineResult {
        algorithm: "qmegs".into(),
        estimate,
        components,
        ledger: RuntimeLedger::from_times(&times, source.channel().charged_shots()),
        warnings: Vec::new(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hamiltonians::Spectrum;

    fn single(e: f64) -> SignalSource {
        SignalSource::exact(Spectrum::new(vec![e], vec![1.0]).unwrap())
    }

    #[test]
    fn ml_qcels_exact_single_frequency() {
        let p = MlQcelsParams { levels: Some(10), ..MlQcelsParams::comparison_defaults(200.0) };
        let e = 1.2345;
        let r = ml_qcels(&single(e), &p).unwrap();
        assert!((r.estimate - e).abs() <= 1e-6, "{}", r.estimate);
        assert_eq!(r.ledger.n_distinct_times, 80);
        assert!((r.ledger.t_max - 200.0).abs() < 1e-9);
    }

    #[test]
    fn ml_qcels_comparison_counts() {
        let p = MlQcelsParams::comparison_defaults(537.0);
        assert_eq!(p.level_count(), 25);
        let r = ml_qcels(&single(1.0), &p).unwrap();
        assert_eq!(r.ledger.n_distinct_times, 200);
        let steps = p.steps();
        assert!((steps[24] * 8.0 - 537.0).abs() < 1e-9);
    }

    #[test]
    fn ml_qcels_two_frequencies_biased() {
        // Population cost: the bias with a second level exceeds the clean case.
        let two = SignalSource::exact(Spectrum::new(vec![1.0, 1.4], vec![0.6, 0.4]).unwrap());
        let p = MlQcelsParams { levels: Some(6), ..MlQcelsParams::comparison_defaults(60.0) };
        let biased = (ml_qcels(&two, &p).unwrap().estimate - 1.0).abs();
        let clean = (ml_qcels(&single(1.0), &p).unwrap().estimate - 1.0).abs();
        assert!(biased > clean);
        assert!(biased < 0.1);
    }

    #[test]
    fn mm_qcels_single_and_double() {
        let p = MmQcelsParams { k: 1, levels: Some(6), ..MmQcelsParams::comparison_defaults(100.0) };
        let r = mm_qcels(&single(0.9), &p).unwrap();
        assert!((r.estimate - 0.9).abs() <= 1e-6);
        assert!((r.components[0].0 - 1.0).abs() <= 1e-6);

        let two = SignalSource::exact(Spectrum::new(vec![1.0, 1.8], vec![0.7, 0.3]).unwrap());
        let p = MmQcelsParams { levels: Some(6), ..MmQcelsParams::comparison_defaults(100.0) };
        let r = mm_qcels(&two, &p).unwrap();
        assert!((r.components[0].1 - 1.0).abs() <= 1e-4, "{:?}", r.components);
        assert!((r.components[1].1 - 1.8).abs() <= 1e-4, "{:?}", r.components);
        assert!((r.estimate - 1.0).abs() <= 1e-4);
    }

    #[test]
    fn qmegs_finds_peaks() {
        let p = QmegsParams { n_samples: Some(200), ..QmegsParams::comparison_defaults(500.0) };
        let r = qmegs(&single(1.1), &p).unwrap();
        assert!((r.estimate - 1.1).abs() <= 1e-4);
        let two = SignalSource::exact(Spectrum::new(vec![0.9, 1.9], vec![0.6, 0.4]).unwrap());
        let r = qmegs(&two, &p).unwrap();
        let mut first_two: Vec<f64> = r.components.iter().take(2).map(|c| c.1).collect();
        first_two.sort_by(f64::total_cmp);
        assert!((first_two[0] - 0.9).abs() <= 1e-3);
        assert!((first_two[1] - 1.9).abs() <= 1e-3);
        assert_eq!(p.sample_count(), 200);
        assert_eq!(QmegsParams::comparison_defaults(537.0).sample_count(), 10 + 2 * 6);
    }

    #[test]
    fn baselines_are_deterministic_under_noise() {
        let spec = Spectrum::new(vec![1.0, 1.5], vec![0.88, 0.12]).unwrap();
        let src = SignalSource::new(spec, Channel::Hadamard(1), Seed::new(5));
        for name in ["ml_qcels", "mm_qcels", "qmegs"] {
            let cfg = BaselineConfig::comparison_defaults(name, 140.0).unwrap();
            let a = run_baseline(&cfg, &src).unwrap();
            let b = run_baseline(&cfg, &src).unwrap();
            assert_eq!(a, b, "{name}");
            assert!((a.estimate - 1.0).abs() < 0.2, "{name}: {}", a.estimate);
        }
    }

    #[test]
    fn config_json_and_validation() {
        let cfg: BaselineConfig = serde_json::from_str(r#"{"algorithm": "qmegs", "t_max": 100}"#).unwrap();
        assert_eq!(cfg.name(), "qmegs");
        assert!(serde_json::from_str::<BaselineConfig>(r#"{"algorithm": "nope", "t_max": 1}"#).is_err());
        assert!(BaselineConfig::comparison_defaults("nope", 1.0).unwrap_err().is_config());
        let bad = BaselineConfig::Qmegs(QmegsParams { dx: 0.0, ..QmegsParams::comparison_defaults(10.0) });
        assert!(bad.validate().unwrap_err().is_config());
    }
}
