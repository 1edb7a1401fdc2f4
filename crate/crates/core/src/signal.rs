//! Exact time signals, the Hadamard-test channel and runtime accounting.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::SampleSet;
use crate::hamiltonians::Spectrum;
use crate::seed::Seed;

/// `Σ_ℓ p_ℓ exp(-i E_ℓ time)` at a physical evolution time.
pub fn exact_signal_at(spectrum: &Spectrum, time: f64) -> Complex64 {
    spectrum.support().map(|(e, p)| Complex64::from_polar(p, -e * time)).sum()
}

/// `y⁰(t) = Σ_ℓ p_ℓ exp(-i E_ℓ τ t)`.
pub fn exact_signal(spectrum: &Spectrum, tau: f64, t: i64) -> Complex64 {
    exact_signal_at(spectrum, tau * t as f64)
}

/// Mean of `shots` outcomes `±1` with `Pr[+1] = (1 + mean) / 2`.
fn pm_one_mean<R: Rng + ?Sized>(mean: f64, shots: u64, rng: &mut R) -> f64 {
    let p = ((1.0 + mean) / 2.0).clamp(0.0, 1.0);
    let ups = Binomial::new(shots, p).expect("p in [0, 1]").sample(rng);
    (2.0 * ups as f64 - shots as f64) / shots as f64
}

/// Hadamard-test estimate at a physical time: `shots` draws for the real
/// part, then `shots` for the imaginary part.
pub fn hadamard_sample_at<R: Rng + ?Sized>(
    spectrum: &Spectrum,
    time: f64,
    shots: u64,
    rng: &mut R,
) -> Result<Complex64> {
    if shots == 0 {
        return Err(Error::config("shot count must be positive"));
    }
    let exact = exact_signal_at(spectrum, time);
    let re = pm_one_mean(exact.re, shots, rng);
    let im = pm_one_mean(exact.im, shots, rng);
    Ok(Complex64::new(re, im))
}

/// Hadamard-test estimate of `y⁰(t)` from `m_h` shots per part.
pub fn hadamard_sample<R: Rng + ?Sized>(
    spectrum: &Spectrum,
    tau: f64,
    t: i64,
    m_h: u64,
    rng: &mut R,
) -> Result<Complex64> {
    hadamard_sample_at(spectrum, tau * t as f64, m_h, rng)
}

/// `M_H = ⌈ln(2|𝒯|/δ) / σ_H²⌉`.
pub fn shots_for(sigma_h: f64, delta: f64, n_times: usize) -> Result<u64> {
    if !(sigma_h > 0.0) {
        return Err(Error::config("sigma_h must be positive"));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::config("delta must lie in (0, 1)"));
    }
    if n_times == 0 {
        return Err(Error::config("sample set is empty"));
    }
    let m = ((2.0 * n_times as f64 / delta).ln() / (sigma_h * sigma_h)).ceil();
    Ok(m.max(1.0) as u64)
}

/// How samples are produced.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Channel {
    /// Noiseless values of `y⁰`.
    Exact,
    /// Hadamard tests with this many shots per part.
    Hadamard(u64),
}

impl Channel {
    /// Shots charged per time point in the ledger. Exact sampling is
    /// charged one shot so that runtimes stay comparable.
    pub fn charged_shots(self) -> u64 {
        match self {
            Channel::Exact => 1,
            Channel::Hadamard(m) => m,
        }
    }
}

/// A spectrum plus a channel and master seed: anything that can be asked
/// for `y(time)` deterministically.
#[derive(Clone, Debug)]
pub struct SignalSource {
    spectrum: Spectrum,
    channel: Channel,
    seed: Seed,
}

impl SignalSource {
    pub fn new(spectrum: Spectrum, channel: Channel, seed: Seed) -> Self {
        SignalSource { spectrum, channel, seed }
    }

    pub fn exact(spectrum: Spectrum) -> Self {
        SignalSource::new(spectrum, Channel::Exact, Seed::new(0))
    }

    pub fn spectrum(&self) -> &Spectrum {
        &self.spectrum
    }

    pub fn channel(&self) -> Channel {
        self.channel
    }

    pub fn seed(&self) -> Seed {
        self.seed
    }

    pub fn with_channel(&self, channel: Channel) -> Self {
        SignalSource { channel, ..self.clone() }
    }

    pub fn with_seed(&self, seed: Seed) -> Self {
        SignalSource { seed, ..self.clone() }
    }

    /// One estimate of `y` at physical time `time`. The random stream is
    /// keyed by `(stream, draw)` so results never depend on call order.
    pub fn measure(&self, time: f64, stream: u64, draw: u64) -> Complex64 {
        match self.channel {
            Channel::Exact => exact_signal_at(&self.spectrum, time),
            Channel::Hadamard(m) => {
                let mut rng = self.seed.child2(stream, draw).rng();
                hadamard_sample_at(&self.spectrum, time, m, &mut rng).expect("positive shots")
            }
        }
    }
}

/// Signal samples on integer times `t ∈ {0, …, N-1}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeSeries {
    n: usize,
    tau: f64,
    /// Shots per part per point; 0 marks noiseless samples.
    shots_per_point: u64,
    values: BTreeMap<usize, Complex64>,
}

impl TimeSeries {
    pub fn new(n: usize, tau: f64, shots_per_point: u64) -> Self {
        TimeSeries { n, tau, shots_per_point, values: BTreeMap::new() }
    }

    /// Inserts a sample. Components must lie in `[-1, 1]`.
    pub fn insert(&mut self, t: usize, v: Complex64) -> Result<()> {
        if t >= self.n {
            return Err(Error::contract(format!("time {t} outside 0..{}", self.n)));
        }
        if !(v.re.abs() <= 1.0 + 1e-12 && v.im.abs() <= 1.0 + 1e-12) {
            return Err(Error::contract(format!("sample {v} outside the unit square")));
        }
        self.values.insert(t, v);
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn shots_per_point(&self) -> u64 {
        self.shots_per_point
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, t: usize) -> Option<Complex64> {
        self.values.get(&t).copied()
    }

    /// Sorted sample times.
    pub fn times(&self) -> Vec<usize> {
        self.values.keys().copied().collect()
    }

    /// Values in time order.
    pub fn values(&self) -> Vec<Complex64> {
        self.values.values().copied().collect()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, Complex64)> + '_ {
        self.values.iter().map(|(&t, &v)| (t, v))
    }

    /// Text table, one `t,re,im,shots` line per sample, 17 significant digits.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (t, v) in self.iter() {
            writeln!(out, "{t},{:.16e},{:.16e},{}", v.re, v.im, self.shots_per_point).expect("write to String");
        }
        out
    }

    /// Inverse of [`TimeSeries::to_text`] for a known `n` and `tau`.
    pub fn from_text(text: &str, n: usize, tau: f64) -> Result<Self> {
        let mut ts = TimeSeries::new(n, tau, 0);
        let mut shots = None;
        for (lineno, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            let bad = || Error::config(format!("line {}: expected t,re,im,shots", lineno + 1));
            if fields.len() != 4 {
                return Err(bad());
            }
            let t: usize = fields[0].parse().map_err(|_| bad())?;
            let re: f64 = fields[1].parse().map_err(|_| bad())?;
            let im: f64 = fields[2].parse().map_err(|_| bad())?;
            let m: u64 = fields[3].parse().map_err(|_| bad())?;
            if shots.is_some_and(|s| s != m) {
                return Err(Error::config("mixed shot counts in one series"));
            }
            shots = Some(m);
            ts.insert(t, Complex64::new(re, im))?;
        }
        ts.shots_per_point = shots.unwrap_or(0);
        Ok(ts)
    }
}

/// Total and maximal evolution time of an experiment.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RuntimeLedger {
    /// `Σ_{t∈𝒯} M_H |t| τ`.
    pub t_total: f64,
    /// `max_{t∈𝒯} |t| τ`.
    pub t_max: f64,
    pub n_distinct_times: usize,
}

impl RuntimeLedger {
    /// Ledger for evolution times `times` (already multiplied by τ), each
    /// run `shots` times. Repeated times count once toward the distinct total.
    pub fn from_times(times: &[f64], shots: u64) -> Self {
        let distinct: BTreeSet<u64> = times.iter().map(|t| t.abs().to_bits()).collect();
        RuntimeLedger {
            t_total: times.iter().map(|t| shots as f64 * t.abs()).sum(),
            t_max: times.iter().fold(0.0, |m, t| m.max(t.abs())),
            n_distinct_times: distinct.len(),
        }
    }

    /// Ledger of several acquisitions together; shared times count once
    /// toward the distinct total but every run adds to `t_total`.
    pub fn combine(series: &[&TimeSeries]) -> Self {
        let mut distinct = BTreeSet::new();
        let mut ledger = RuntimeLedger::default();
        for ts in series {
            let shots = Channel::charged(ts.shots_per_point);
            for t in ts.times() {
                let time = t as f64 * ts.tau;
                ledger.t_total += shots as f64 * time;
                ledger.t_max = ledger.t_max.max(time);
                distinct.insert(time.to_bits());
            }
        }
        ledger.n_distinct_times = distinct.len();
        ledger
    }
}

impl Channel {
    fn charged(shots_per_point: u64) -> u64 {
        if shots_per_point == 0 {
            Channel::Exact.charged_shots()
        } else {
            shots_per_point
        }
    }
}

/// Signal estimation on a sample set by Hadamard tests.
///
/// Shots per point are `m_h_override` when given, else
/// `⌈ln(2|𝒯|/δ)/σ_H²⌉`. Point `t` draws from the stream `seed.child(t)`, so
/// the result does not depend on evaluation order.
pub fn acquire(
    sample_set: &SampleSet,
    tau: f64,
    spectrum: &Spectrum,
    sigma_h: f64,
    delta: f64,
    m_h_override: Option<u64>,
    seed: Seed,
) -> Result<(TimeSeries, RuntimeLedger)> {
    if sample_set.is_empty() {
        return Err(Error::config("sample set is empty"));
    }
    let shots = match m_h_override {
        Some(0) => return Err(Error::config("M_H override must be positive")),
        Some(m) => m,
        None => shots_for(sigma_h, delta, sample_set.len())?,
    };
    acquire_with(sample_set, tau, &SignalSource::new(spectrum.clone(), Channel::Hadamard(shots), seed))
}

/// Acquisition through an arbitrary [`SignalSource`].
pub fn acquire_with(sample_set: &SampleSet, tau: f64, source: &SignalSource) -> Result<(TimeSeries, RuntimeLedger)> {
    if sample_set.is_empty() {
        return Err(Error::config("sample set is empty"));
    }
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(Error::config("tau must be positive"));
    }
    let values: Vec<Complex64> =
        sample_set.indices().par_iter().map(|&t| source.measure(tau * t as f64, t as u64, 0)).collect();
    let shots = match source.channel() {
        Channel::Exact => 0,
        Channel::Hadamard(m) => m,
    };
    let mut ts = TimeSeries::new(sample_set.n(), tau, shots);
    for (&t, v) in sample_set.indices().iter().zip(values) {
        ts.insert(t, v)?;
    }
    let ledger = RuntimeLedger::combine(&[&ts]);
    Ok((ts, ledger))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn two_level() -> Spectrum {
        Spectrum::new(vec![0.9, 1.7], vec![0.5, 0.5]).unwrap()
    }

    #[test]
    fn exact_signal_basics() {
        let s = two_level();
        assert_abs_diff_eq!((exact_signal(&s, 0.5, 0) - Complex64::new(1.0, 0.0)).norm(), 0.0, epsilon = 1e-15);
        let one = Spectrum::new(vec![1.3], vec![1.0]).unwrap();
        let v = exact_signal(&one, 0.7, 5);
        let ang = -1.3 * 0.7 * 5.0;
        assert_abs_diff_eq!(v.re, f64::cos(ang), epsilon = 1e-15);
        assert_abs_diff_eq!(v.im, f64::sin(ang), epsilon = 1e-15);
    }

    #[test]
    fn exact_signal_two_levels_against_direct_sum() {
        // (E₂ - E₁) τ t = π at τ = 1, t = π / 0.8 is not an integer, so pick
        // τ to make it one at t = 4.
        let s = two_level();
        let tau = std::f64::consts::PI / (0.8 * 4.0);
        let v = exact_signal(&s, tau, 4);
        let direct = 0.5 * Complex64::new((-0.9 * tau * 4.0f64).cos(), (-0.9 * tau * 4.0f64).sin())
            + 0.5 * Complex64::new((-1.7 * tau * 4.0f64).cos(), (-1.7 * tau * 4.0f64).sin());
        assert_abs_diff_eq!((v - direct).norm(), 0.0, epsilon = 1e-15);
        // Opposite phases cancel: modulus |cos(π/2)| = 0.
        assert_abs_diff_eq!(v.norm(), 0.0, epsilon = 1e-14);
    }

    #[test]
    fn hadamard_at_zero_has_exact_real_part() {
        let one = Spectrum::new(vec![1.0], vec![1.0]).unwrap();
        let mut rng = Seed::new(1).rng();
        let v = hadamard_sample(&one, 1.0, 0, 37, &mut rng).unwrap();
        assert_eq!(v.re, 1.0);
        assert!(v.im.abs() <= 1.0);
    }

    #[test]
    fn hadamard_is_deterministic() {
        let s = two_level();
        let a = hadamard_sample(&s, 1.0, 3, 100, &mut Seed::new(9).rng()).unwrap();
        let b = hadamard_sample(&s, 1.0, 3, 100, &mut Seed::new(9).rng()).unwrap();
        assert_eq!(a.re.to_bits(), b.re.to_bits());
        assert_eq!(a.im.to_bits(), b.im.to_bits());
        assert!(hadamard_sample(&s, 1.0, 3, 0, &mut Seed::new(9).rng()).is_err());
    }

    #[test]
    fn shot_formula() {
        assert_eq!(shots_for(0.1, 0.01, 10).unwrap(), 761);
        assert!(shots_for(0.0, 0.01, 10).is_err());
        assert!(shots_for(0.1, 0.01, 0).is_err());
    }

    #[test]
    fn acquire_origin_only() {
        let set = SampleSet::from_indices(16, vec![0], 1.0).unwrap();
        let (ts, ledger) = acquire(&set, 1.0, &two_level(), 0.1, 0.01, Some(100), Seed::new(3)).unwrap();
        assert_eq!(ts.len(), 1);
        assert_eq!(ledger.t_total, 0.0);
        assert_eq!(ledger.n_distinct_times, 1);
        assert_eq!(ts.shots_per_point(), 100);
        assert!(acquire(&set, 1.0, &two_level(), 0.1, 0.01, Some(0), Seed::new(3)).is_err());
    }

    #[test]
    fn acquire_uses_formula_and_is_reproducible() {
        let set = SampleSet::from_indices(64, (0..10).map(|i| 3 * i).collect(), 0.15).unwrap();
        let (a, la) = acquire(&set, 0.5, &two_level(), 0.1, 0.01, None, Seed::new(4)).unwrap();
        let (b, _) = acquire(&set, 0.5, &two_level(), 0.1, 0.01, None, Seed::new(4)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.shots_per_point(), 761);
        let expect: f64 = set.indices().iter().map(|&t| 761.0 * t as f64 * 0.5).sum();
        assert_abs_diff_eq!(la.t_total, expect, epsilon = 1e-9);
        assert_eq!(la.t_max, 27.0 * 0.5);
    }

    #[test]
    fn ledger_is_additive_over_disjoint_sets() {
        let s1 = SampleSet::from_indices(32, vec![1, 5, 9], 0.1).unwrap();
        let s2 = SampleSet::from_indices(32, vec![2, 20], 0.1).unwrap();
        let all = SampleSet::from_indices(32, vec![1, 2, 5, 9, 20], 0.1).unwrap();
        let run = |s: &SampleSet| acquire(s, 1.0, &two_level(), 0.1, 0.01, Some(50), Seed::new(5)).unwrap();
        let (t1, l1) = run(&s1);
        let (t2, l2) = run(&s2);
        let (_, l) = run(&all);
        assert_abs_diff_eq!(l.t_total, l1.t_total + l2.t_total, epsilon = 1e-12);
        let both = RuntimeLedger::combine(&[&t1, &t2]);
        assert_eq!(both, l);
        assert!(l.t_total >= l.n_distinct_times as f64 * 50.0 * 1.0);
    }

    #[test]
    fn text_round_trip_is_exact() {
        let set = SampleSet::from_indices(64, vec![0, 7, 33, 63], 0.1).unwrap();
        let (ts, _) = acquire(&set, 0.25, &two_level(), 0.1, 0.01, Some(7), Seed::new(6)).unwrap();
        let text = ts.to_text();
        assert_eq!(text.lines().count(), 4);
        let back = TimeSeries::from_text(&text, 64, 0.25).unwrap();
        assert_eq!(back, ts);
        assert!(TimeSeries::from_text("1,2,3\n", 64, 1.0).is_err());
    }

    #[test]
    fn exact_source_matches_exact_signal() {
        let set = SampleSet::from_indices(16, vec![2, 3], 0.2).unwrap();
        let (ts, ledger) = acquire_with(&set, 1.0, &SignalSource::exact(two_level())).unwrap();
        assert_eq!(ts.get(3).unwrap(), exact_signal(&two_level(), 1.0, 3));
        assert_eq!(ts.shots_per_point(), 0);
        assert_eq!(ledger.t_total, 5.0);
    }
}
