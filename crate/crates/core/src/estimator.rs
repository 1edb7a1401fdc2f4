//! The grid-shift sweep estimator and its hold-out test.
//!
//! One run draws a random time set `𝒯`, acquires `y` on it, and solves one
//! basis pursuit denoising problem per shift `ν_j = −1/2 + j/J`. A second
//! set `𝒯₂` is acquired for the hold-out test. The shift whose solution has
//! the smallest ℓ1 norm among those passing the test wins, and the energy
//! is read off its leading coefficient.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::fourier::ShiftedFourierOp;
use crate::hamiltonians::Spectrum;
use crate::seed::{domain, Seed};
use crate::signal::{acquire, acquire_with, shots_for, Channel, RuntimeLedger, SignalSource, TimeSeries};
use crate::solver::{solve_bpdn, BpdnProblem, SolveStatus, SolverOptions};

/// Distinct sorted time indices in `0..n`, drawn at Bernoulli rate `ratio`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleSet {
    n: usize,
    indices: Vec<usize>,
    ratio: f64,
}

/// Redraws allowed before giving up on an empty Bernoulli sample.
const MAX_REDRAWS: u64 = 1000;

impl SampleSet {
    pub fn from_indices(n: usize, indices: Vec<usize>, ratio: f64) -> Result<Self> {
        if indices.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::contract("sample indices must be strictly increasing"));
        }
        if indices.last().is_some_and(|&t| t >= n) {
            return Err(Error::contract(format!("sample index out of range for N={n}")));
        }
        Ok(SampleSet { n, indices, ratio })
    }

    /// Each index kept independently with probability `r`. An empty draw
    /// is replaced by a draw from the next substream.
    pub fn draw(n: usize, r: f64, seed: Seed) -> Result<Self> {
        if n == 0 {
            return Err(Error::config("signal length must be positive"));
        }
        if !(r > 0.0 && r <= 1.0) {
            return Err(Error::config(format!("sampling ratio must lie in (0, 1], got {r}")));
        }
        for attempt in 0..MAX_REDRAWS {
            let mut rng = seed.child(attempt).rng();
            let indices: Vec<usize> = (0..n).filter(|_| r >= 1.0 || rng.random::<f64>() < r).collect();
            if !indices.is_empty() {
                if attempt > 0 {
                    log::debug!("sample set redrawn {attempt} time(s) after empty draws");
                }
                return Ok(SampleSet { n, indices, ratio: r });
            }
        }
        Err(Error::Numerical(format!("{MAX_REDRAWS} consecutive empty sample draws")))
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn ratio(&self) -> f64 {
        self.ratio
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

/// Threshold of the hold-out test.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SigmaTest {
    /// Every shift passes.
    Off,
    Value(f64),
    /// Derived from `σ`, `S`, `N` and the configured `η` and `C₀`.
    Auto,
}

impl Serialize for SigmaTest {
    fn serialize<S: Serializer>(&self, ser: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            SigmaTest::Off => ser.serialize_str("off"),
            SigmaTest::Auto => ser.serialize_str("auto"),
            SigmaTest::Value(v) => ser.serialize_f64(*v),
        }
    }
}

impl<'de> Deserialize<'de> for SigmaTest {
    fn deserialize<D: Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Name(String),
        }
        match Raw::deserialize(de)? {
            Raw::Num(v) if v >= 0.0 && v.is_finite() => Ok(SigmaTest::Value(v)),
            Raw::Num(v) => Err(serde::de::Error::custom(format!("sigma_test must be nonnegative, got {v}"))),
            Raw::Name(s) if s == "off" => Ok(SigmaTest::Off),
            Raw::Name(s) if s == "auto" => Ok(SigmaTest::Auto),
            Raw::Name(s) => {
                Err(serde::de::Error::custom(format!("sigma_test must be a number, \"off\" or \"auto\", got {s:?}")))
            }
        }
    }
}

/// How the index set `𝒦` is read off the winning solution.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KRule {
    /// `{argmax_k s_k}`.
    Argmax,
    /// `{k : s_k ≥ p_min}`.
    Threshold,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimatorConfig {
    /// Signal length `N`.
    pub n: usize,
    /// Sparsity `S` of the dominant part.
    pub s_sparsity: usize,
    /// Bernoulli sampling ratio `r`.
    pub r: f64,
    pub tau: f64,
    /// Target Hadamard-test accuracy `σ_H`, used when no shot override is set.
    pub sigma_h: f64,
    /// Noise level `σ`; the constraint radius is `√|𝒯| σ`.
    pub sigma: f64,
    pub sigma_test: SigmaTest,
    pub delta: f64,
    /// Number of shifts `J`.
    pub j_trials: usize,
    pub p_min: f64,
    pub m_h_override: Option<u64>,
    pub k_rule: KRule,
    /// RIP constant estimate for the automatic test threshold.
    pub eta: f64,
    /// `C₀ = (σ_off + σ_H)/σ` for the automatic test threshold.
    pub c0: f64,
    /// Sample `y⁰` exactly instead of through Hadamard tests.
    pub noiseless: bool,
    pub solver: SolverOptions<f64>,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        EstimatorConfig {
            n: 256,
            s_sparsity: 1,
            r: 0.1,
            tau: 1.0,
            sigma_h: 0.1,
            sigma: 0.1,
            sigma_test: SigmaTest::Off,
            delta: 0.01,
            j_trials: 100,
            p_min: 0.1,
            m_h_override: None,
            k_rule: KRule::Threshold,
            eta: 0.2,
            c0: 1.0,
            noiseless: false,
            solver: SolverOptions::default(),
        }
    }
}

impl EstimatorConfig {
    /// The configuration used for the runtime comparison at length `t_n`:
    /// `S = 1`, `r = 2.3 ln T_n / T_n`, `τ = 1`, `σ = 0.2 √(2.3 ln T_n)`,
    /// `J = 100`, `M_H = 100`, argmax index rule, test off.
    pub fn comparison_defaults(t_n: usize) -> Self {
        let l = 2.3 * (t_n as f64).ln();
        EstimatorConfig {
            n: t_n,
            s_sparsity: 1,
            r: (l / t_n as f64).min(1.0),
            tau: 1.0,
            sigma: 0.2 * l.sqrt(),
            j_trials: 100,
            m_h_override: Some(100),
            k_rule: KRule::Argmax,
            sigma_test: SigmaTest::Off,
            ..EstimatorConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::config(format!("{name} must be positive, got {v}")))
            }
        };
        if self.n < 2 {
            return Err(Error::config("n must be at least 2"));
        }
        if self.s_sparsity == 0 {
            return Err(Error::config("s_sparsity must be positive"));
        }
        if !(self.r > 0.0 && self.r <= 1.0) {
            return Err(Error::config(format!("r must lie in (0, 1], got {}", self.r)));
        }
        positive("tau", self.tau)?;
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return Err(Error::config("sigma must be nonnegative"));
        }
        if self.j_trials == 0 {
            return Err(Error::config("j_trials must be at least 1"));
        }
        if !self.p_min.is_finite() {
            return Err(Error::config("p_min must be finite"));
        }
        if self.m_h_override == Some(0) {
            return Err(Error::config("m_h_override must be positive"));
        }
        if self.m_h_override.is_none() && !self.noiseless {
            positive("sigma_h", self.sigma_h)?;
            if !(self.delta > 0.0 && self.delta < 1.0) {
                return Err(Error::config("delta must lie in (0, 1)"));
            }
        }
        if self.sigma_test == SigmaTest::Auto {
            rip_constants(self.eta)?;
        }
        self.solver.validate()
    }

    /// Shift lattice `ν_j = −1/2 + j/J`, covering `[−1/2, 1/2)`.
    pub fn shifts(&self) -> Vec<f64> {
        (0..self.j_trials).map(|j| -0.5 + j as f64 / self.j_trials as f64).collect()
    }

    /// Resolved hold-out threshold; `None` means the test is off.
    pub fn sigma_test_value(&self) -> Result<Option<f64>> {
        match self.sigma_test {
            SigmaTest::Off => Ok(None),
            SigmaTest::Value(v) => Ok(Some(v)),
            SigmaTest::Auto => auto_sigma_test(self.sigma, self.s_sparsity, self.n, self.c0, self.eta).map(Some),
        }
    }
}

/// `(C₁, C₂)` of the stable recovery bound for an RIP constant
/// `η ∈ (0, √2 − 1)`.
pub fn rip_constants(eta: f64) -> Result<(f64, f64)> {
    let limit = 2f64.sqrt() - 1.0;
    if !(eta > 0.0 && eta < limit) {
        return Err(Error::config(format!("eta must lie in (0, {limit:.6}), got {eta}")));
    }
    let denom = 1.0 - (2f64.sqrt() + 1.0) * eta;
    let c1 = (2.0 + 2.0 * (2f64.sqrt() - 1.0) * eta) / denom;
    let c2 = 4.0 * (1.0 + eta).sqrt() / denom;
    Ok((c1, c2))
}

/// `σ_test = 1.1 √(3/2) [(C₃² + 8π²S/(3 ln²N))^{1/2} + C₀] σ` with
/// `C₃ = 2C₁ + πC₂ + (2π/ln N)√(S/3)`, taking `ln N` directly.
pub fn auto_sigma_test_ln(sigma: f64, s_sparsity: usize, ln_n: f64, c0: f64, eta: f64) -> Result<f64> {
    let (c1, c2) = rip_constants(eta)?;
    if !(ln_n > 0.0) {
        return Err(Error::config("ln N must be positive"));
    }
    let s = s_sparsity as f64;
    let c3 = 2.0 * c1 + c2 * PI + (2.0 * PI / ln_n) * (s / 3.0).sqrt();
    let inner = (c3 * c3 + 8.0 * PI * PI * s / (3.0 * ln_n * ln_n)).sqrt();
    Ok(1.1 * 1.5f64.sqrt() * (inner + c0) * sigma)
}

/// [`auto_sigma_test_ln`] at `ln N` for an integer length.
pub fn auto_sigma_test(sigma: f64, s_sparsity: usize, n: usize, c0: f64, eta: f64) -> Result<f64> {
    auto_sigma_test_ln(sigma, s_sparsity, (n as f64).ln(), c0, eta)
}

/// Hold-out residual `ℰ = Σ_{m∈𝒯₂} |(F_ν s)_m − y_m|²`.
pub fn holdout_residual(nu: f64, s: &[f64], y2: &TimeSeries) -> Result<f64> {
    if y2.is_empty() {
        return Err(Error::contract("hold-out series is empty"));
    }
    if s.len() != y2.n() {
        return Err(Error::contract("coefficient length differs from the series length"));
    }
    let op = ShiftedFourierOp::with_rows(y2.n(), nu, y2.times())?;
    let fs = op.apply(s)?;
    Ok(fs.iter().zip(y2.values()).map(|(a, b)| (a - b).norm_sqr()).sum())
}

/// The hold-out test: passes unless `ℰ ≥ |𝒯₂| σ_test²`.
pub fn test_another_sampling(nu: f64, s: &[f64], y2: &TimeSeries, sigma_test: f64) -> Result<bool> {
    let e = holdout_residual(nu, s, y2)?;
    Ok(e < y2.len() as f64 * sigma_test * sigma_test)
}

/// Per-shift record of a sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub j: usize,
    pub nu: f64,
    pub l1_norm: f64,
    pub solver_status: SolveStatus,
    pub iterations: usize,
    /// Hold-out test passed (always true when the test is off).
    pub test_passed: bool,
    /// `ℓ_j`: the ℓ1 norm, or `N + 1` on a failed test.
    pub score: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimateStatus {
    Ok,
    /// The index set `𝒦` came out empty.
    EmptyIndexSet,
    /// Every shift failed the hold-out test.
    AllTestsFailed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub status: EstimateStatus,
    pub j_star: usize,
    pub nu_star: f64,
    pub s_star: Vec<f64>,
    pub k_set: Vec<usize>,
    /// `2π(min 𝒦 + ν*)/(Nτ)`; absent unless the status is ok.
    pub e_star: Option<f64>,
    pub trial_log: Vec<TrialRecord>,
    /// Both acquisitions together.
    pub ledger: RuntimeLedger,
    pub n_samples: usize,
    pub n_holdout: usize,
    pub shots_per_point: u64,
    pub radius: f64,
    pub sigma_test: Option<f64>,
    pub warnings: Vec<String>,
}

/// The sample set `𝒯` and hold-out set `𝒯₂` a run with this seed uses.
pub fn planned_sets(cfg: &EstimatorConfig, seed: Seed) -> Result<(SampleSet, SampleSet)> {
    let sets = seed.child(domain::SAMPLE_SET);
    Ok((SampleSet::draw(cfg.n, cfg.r, sets.child(0))?, SampleSet::draw(cfg.n, cfg.r, sets.child(1))?))
}

/// Runtime ledger of a run with this seed, computed without acquiring or
/// solving anything. Matches the `ledger` field of [`run_cs_qpe`].
pub fn planned_ledger(cfg: &EstimatorConfig, seed: Seed) -> Result<RuntimeLedger> {
    cfg.validate()?;
    let (samples, holdout) = planned_sets(cfg, seed)?;
    let series = |set: &SampleSet| -> Result<TimeSeries> {
        let shots = if cfg.noiseless {
            0
        } else {
            match cfg.m_h_override {
                Some(m) => m,
                None => shots_for(cfg.sigma_h, cfg.delta, set.len())?,
            }
        };
        let mut ts = TimeSeries::new(cfg.n, cfg.tau, shots);
        for &t in set.indices() {
            ts.insert(t, Complex64::new(0.0, 0.0))?;
        }
        Ok(ts)
    };
    Ok(RuntimeLedger::combine(&[&series(&samples)?, &series(&holdout)?]))
}

/// One full estimator run on a spectrum.
pub fn run_cs_qpe(cfg: &EstimatorConfig, spectrum: &Spectrum, seed: Seed) -> Result<EstimateReport> {
    cfg.validate()?;
    let (samples, holdout) = planned_sets(cfg, seed)?;
    let (y, y2) = if cfg.noiseless {
        let source = SignalSource::new(spectrum.clone(), Channel::Exact, seed);
        (acquire_with(&samples, cfg.tau, &source)?.0, acquire_with(&holdout, cfg.tau, &source)?.0)
    } else {
        let acq = |set: &SampleSet, tag: u64| {
            acquire(set, cfg.tau, spectrum, cfg.sigma_h, cfg.delta, cfg.m_h_override, seed.child(tag)).map(|a| a.0)
        };
        (acq(&samples, domain::ACQUIRE)?, acq(&holdout, domain::HOLDOUT)?)
    };
    estimate_from_series(cfg, &y, &y2)
}

/// The sweep and selection on already acquired data.
pub fn estimate_from_series(cfg: &EstimatorConfig, y: &TimeSeries, y2: &TimeSeries) -> Result<EstimateReport> {
    cfg.validate()?;
    if y.is_empty() || y2.is_empty() {
        return Err(Error::config("both acquisitions must be nonempty"));
    }
    if y.n() != cfg.n || y2.n() != cfg.n {
        return Err(Error::config("series length differs from the configured n"));
    }
    let n = cfg.n;
    let sigma_test = cfg.sigma_test_value()?;
    let mut warnings = Vec::new();
    let s = cfg.s_sparsity as f64;
    if 4.0 * PI * s.sqrt() >= 3f64.sqrt() * (n as f64).ln() {
        warnings.push(format!(
            "4π√S ≥ √3 ln N at S={}, N={n}: outside the regime of the accuracy guarantee",
            cfg.s_sparsity
        ));
    }

    let times = y.times();
    let values: Vec<Complex64> = y.values();
    let radius = (times.len() as f64).sqrt() * cfg.sigma;
    let base = ShiftedFourierOp::with_rows(n, 0.0, times)?;

    let solved: Vec<Result<(Vec<f64>, TrialRecord)>> = cfg
        .shifts()
        .into_par_iter()
        .enumerate()
        .map(|(j, nu)| {
            let problem = BpdnProblem::new(base.reshifted(nu), values.clone(), radius)?;
            let sol = solve_bpdn(&problem, &cfg.solver)?;
            let s = if sol.status == SolveStatus::Infeasible { vec![1.0; n] } else { sol.s };
            let l1: f64 = s.iter().map(|v| v.abs()).sum();
            let passed = match sigma_test {
                None => true,
                Some(st) => test_another_sampling(nu, &s, y2, st)?,
            };
            let record = TrialRecord {
                j,
                nu,
                l1_norm: l1,
                solver_status: sol.status,
                iterations: sol.diagnostics.iterations,
                test_passed: passed,
                score: if passed { l1 } else { n as f64 + 1.0 },
            };
            Ok((s, record))
        })
        .collect();
    let mut solutions = Vec::with_capacity(solved.len());
    let mut trial_log = Vec::with_capacity(solved.len());
    for item in solved {
        let (s, rec) = item?;
        solutions.push(s);
        trial_log.push(rec);
    }

    // Strict comparison keeps the smallest j on ties.
    let mut j_star = 0;
    for (j, rec) in trial_log.iter().enumerate() {
        if rec.score < trial_log[j_star].score {
            j_star = j;
        }
    }
    let nu_star = trial_log[j_star].nu;
    let s_star = solutions.swap_remove(j_star);
    let k_set: Vec<usize> = match cfg.k_rule {
        KRule::Threshold => (0..n).filter(|&k| s_star[k] >= cfg.p_min).collect(),
        KRule::Argmax => {
            let mut best = 0;
            for k in 1..n {
                if s_star[k] > s_star[best] {
                    best = k;
                }
            }
            vec![best]
        }
    };
    let any_passed = trial_log.iter().any(|r| r.test_passed);
    let (status, e_star) = if !any_passed {
        (EstimateStatus::AllTestsFailed, None)
    } else if let Some(&k0) = k_set.first() {
        (EstimateStatus::Ok, Some(2.0 * PI * (k0 as f64 + nu_star) / (n as f64 * cfg.tau)))
    } else {
        (EstimateStatus::EmptyIndexSet, None)
    };

    Ok(EstimateReport {
        status,
        j_star,
        nu_star,
        s_star,
        k_set,
        e_star,
        trial_log,
        ledger: RuntimeLedger::combine(&[y, y2]),
        n_samples: y.len(),
        n_holdout: y2.len(),
        shots_per_point: y.shots_per_point(),
        radius,
        sigma_test,
        warnings,
    })
}
