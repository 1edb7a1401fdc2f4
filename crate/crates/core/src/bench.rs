//! Parameter sweeps over signal length, initial state, model and algorithm.
//!
//! Every trial gets a seed derived from the sweep seed, the cell key and the
//! trial index. Trials are collected in a fixed order, so the output does not
//! depend on the thread count.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{run_baseline, BaselineConfig};
use crate::config::{ModelSpec, PreparedModel};
use crate::error::{Error, Result};
use crate::estimator::{planned_ledger, run_cs_qpe, EstimateStatus, EstimatorConfig};
use crate::seed::{domain, Seed};
use crate::signal::{Channel, RuntimeLedger, SignalSource};

/// Algorithm names accepted in a sweep.
pub const ALGORITHMS: &[&str] = &["cs_qpe", "ml_qcels", "mm_qcels", "qmegs"];

/// Error charged to a trial that produced no estimate: one full alias
/// period `2π/τ` at `τ = 1`.
pub const FAILED_TRIAL_ERROR: f64 = 2.0 * PI;

/// `⌊100 · 1.4ⁿ⌋` for `n = 1..=count`, in integer arithmetic so that
/// `100 · 1.4² = 196` exactly.
pub fn default_t_grid(count: u32) -> Vec<usize> {
    (1..=count).map(|n| (100 * 14u128.pow(n) / 10u128.pow(n)) as usize).collect()
}

/// A sweep specification document.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSpec {
    /// Signal lengths `N`, which are also the maximal times `T_n` at `τ = 1`.
    pub t_grid: Vec<usize>,
    pub alphas: Vec<f64>,
    pub models: Vec<String>,
    pub algorithms: Vec<String>,
    pub trials_per_cell: usize,
    pub seed: u64,
    /// Eigenstates in the initial state.
    pub levels: usize,
    /// Overrides the estimator's shift count `J`.
    pub j_trials: Option<usize>,
    /// Exact signal instead of Hadamard tests, for every algorithm.
    pub noiseless: bool,
}

impl Default for SweepSpec {
    fn default() -> Self {
        SweepSpec {
            t_grid: default_t_grid(5),
            alphas: vec![0.125, 0.25, 0.5],
            models: vec!["tfi8".into(), "fh4".into()],
            algorithms: vec!["cs_qpe".into()],
            trials_per_cell: 20,
            seed: 0,
            levels: 10,
            j_trials: None,
            noiseless: false,
        }
    }
}

impl SweepSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        let spec: SweepSpec = serde_json::from_str(text)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        SweepSpec::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.t_grid.is_empty() || self.alphas.is_empty() || self.models.is_empty() || self.algorithms.is_empty() {
            return Err(Error::config("t_grid, alphas, models and algorithms must be nonempty"));
        }
        if self.trials_per_cell == 0 {
            return Err(Error::config("trials_per_cell must be at least 1"));
        }
        if self.levels == 0 {
            return Err(Error::config("levels must be positive"));
        }
        if self.j_trials == Some(0) {
            return Err(Error::config("j_trials must be positive"));
        }
        for a in &self.algorithms {
            if !ALGORITHMS.contains(&a.as_str()) {
                return Err(Error::config(format!("unknown algorithm {a:?}; expected one of {ALGORITHMS:?}")));
            }
        }
        for &n in &self.t_grid {
            if n < 4 {
                return Err(Error::config(format!("t_grid entries must be at least 4, got {n}")));
            }
        }
        for &a in &self.alphas {
            if !(a > 0.0 && a < 1.0) {
                return Err(Error::config(format!("alpha must lie in (0, 1), got {a}")));
            }
        }
        for m in &self.models {
            if m == "custom" {
                return Err(Error::config("custom models are not supported in sweeps"));
            }
            ModelSpec::parse(m, None)?;
        }
        Ok(())
    }

    fn cells(&self) -> Vec<CellKey> {
        let mut out = Vec::new();
        for model in &self.models {
            for &alpha in &self.alphas {
                for algorithm in &self.algorithms {
                    for &n in &self.t_grid {
                        out.push(CellKey { model: model.clone(), alpha, algorithm: algorithm.clone(), n });
                    }
                }
            }
        }
        out
    }

    fn estimator_config(&self, n: usize) -> EstimatorConfig {
        let mut cfg = EstimatorConfig::comparison_defaults(n);
        if let Some(j) = self.j_trials {
            cfg.j_trials = j;
        }
        cfg.noiseless = self.noiseless;
        cfg
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellKey {
    pub model: String,
    pub alpha: f64,
    pub algorithm: String,
    pub n: usize,
}

impl CellKey {
    fn tag(&self) -> String {
        format!("{}|{}|{}|{}", self.model, self.alpha, self.algorithm, self.n)
    }

    fn seed(&self, sweep: u64) -> Seed {
        Seed::new(sweep).child(domain::BENCH).child_str(&self.tag())
    }

    fn file_stem(&self) -> String {
        format!("{}_a{}_{}_N{}", self.model, self.alpha, self.algorithm, self.n)
    }
}

/// One trial of a cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub trial: usize,
    pub estimate: Option<f64>,
    /// `|E* − E₀|` in normalized units; [`FAILED_TRIAL_ERROR`] on failure.
    pub abs_error: f64,
    /// The same error in the units of the original Hamiltonian.
    pub abs_error_original: f64,
    /// `"ok"`, an estimator status, or the error message of a failed run.
    pub status: String,
    pub ledger: RuntimeLedger,
}

impl TrialResult {
    fn failed(&self) -> bool {
        self.status != "ok"
    }
}

/// Aggregates of one cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    #[serde(flatten)]
    pub key: CellKey,
    pub trials: usize,
    pub mean_abs_error: f64,
    pub median_abs_error: f64,
    pub mean_abs_error_original: f64,
    pub median_abs_error_original: f64,
    pub failure_count: usize,
    pub mean_t_total: f64,
    /// Largest `T_max` over the trials.
    pub t_max: f64,
    /// Mean number of distinct evolution times.
    pub mean_n_samples: f64,
    /// `"reimplementation"` for the baselines.
    pub label: String,
    pub detail: Vec<TrialResult>,
}

pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, count) = values.fold((0.0, 0usize), |(s, c), v| (s + v, c + 1));
    if count == 0 {
        f64::NAN
    } else {
        sum / count as f64
    }
}

fn prepare_models(spec: &SweepSpec) -> Result<BTreeMap<(String, u64), PreparedModel>> {
    let mut keys = Vec::new();
    for m in &spec.models {
        for &a in &spec.alphas {
            keys.push((m.clone(), a));
        }
    }
    keys.par_iter()
        .map(|(m, a)| {
            let model = PreparedModel::new(&ModelSpec::parse(m, None)?, *a, spec.levels)?;
            Ok(((m.clone(), a.to_bits()), model))
        })
        .collect()
}

fn run_trial(spec: &SweepSpec, key: &CellKey, model: &PreparedModel, trial: usize) -> TrialResult {
    let seed = key.seed(spec.seed).child(trial as u64);
    let outcome: Result<(Option<f64>, String, RuntimeLedger)> = if key.algorithm == "cs_qpe" {
        run_cs_qpe(&spec.estimator_config(key.n), &model.spectrum, seed).map(|r| {
            let status = match r.status {
                EstimateStatus::Ok => "ok".to_string(),
                other => {
                    serde_json::to_value(other).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default()
                }
            };
            (r.e_star, status, r.ledger)
        })
    } else {
        let channel = if spec.noiseless { Channel::Exact } else { Channel::Hadamard(1) };
        BaselineConfig::comparison_defaults(&key.algorithm, key.n as f64)
            .and_then(|cfg| run_baseline(&cfg, &SignalSource::new(model.spectrum.clone(), channel, seed)))
            .map(|r| (Some(r.estimate), "ok".to_string(), r.ledger))
    };
    let map = model.energy_map();
    match outcome {
        Ok((Some(e), status, ledger)) if status == "ok" => {
            let err = (e - model.ground_energy).abs();
            TrialResult {
                trial,
                estimate: Some(e),
                abs_error: err,
                abs_error_original: map.inverse_delta(err).abs(),
                status,
                ledger,
            }
        }
        Ok((estimate, status, ledger)) => TrialResult {
            trial,
            estimate,
            abs_error: FAILED_TRIAL_ERROR,
            abs_error_original: map.inverse_delta(FAILED_TRIAL_ERROR).abs(),
            status,
            ledger,
        },
        Err(e) => TrialResult {
            trial,
            estimate: None,
            abs_error: FAILED_TRIAL_ERROR,
            abs_error_original: map.inverse_delta(FAILED_TRIAL_ERROR).abs(),
            status: format!("error: {e}"),
            ledger: RuntimeLedger::default(),
        },
    }
}

/// Runs every cell of the sweep.
pub fn run_sweep(spec: &SweepSpec) -> Result<Vec<CellResult>> {
    spec.validate()?;
    let models = prepare_models(spec)?;
    let cells = spec.cells();
    let jobs: Vec<(usize, usize)> =
        (0..cells.len()).flat_map(|c| (0..spec.trials_per_cell).map(move |t| (c, t))).collect();
    let results: Vec<TrialResult> = jobs
        .par_iter()
        .map(|&(c, t)| {
            let key = &cells[c];
            run_trial(spec, key, &models[&(key.model.clone(), key.alpha.to_bits())], t)
        })
        .collect();
    let mut out = Vec::with_capacity(cells.len());
    for (c, key) in cells.into_iter().enumerate() {
        let detail: Vec<TrialResult> = results[c * spec.trials_per_cell..(c + 1) * spec.trials_per_cell].to_vec();
        out.push(aggregate(key, detail));
    }
    Ok(out)
}

fn aggregate(key: CellKey, detail: Vec<TrialResult>) -> CellResult {
    let errors: Vec<f64> = detail.iter().map(|t| t.abs_error).collect();
    let original: Vec<f64> = detail.iter().map(|t| t.abs_error_original).collect();
    let label = if key.algorithm == "cs_qpe" { "primary" } else { "reimplementation" };
    CellResult {
        trials: detail.len(),
        mean_abs_error: mean(errors.iter().copied()),
        median_abs_error: median(&errors),
        mean_abs_error_original: mean(original.iter().copied()),
        median_abs_error_original: median(&original),
        failure_count: detail.iter().filter(|t| t.failed()).count(),
        mean_t_total: mean(detail.iter().map(|t| t.ledger.t_total)),
        t_max: detail.iter().map(|t| t.ledger.t_max).fold(0.0, f64::max),
        mean_n_samples: mean(detail.iter().map(|t| t.ledger.n_distinct_times as f64)),
        label: label.into(),
        key,
        detail,
    }
}

/// Header of `results.csv`.
pub const CSV_HEADER: &str = "model,alpha,algorithm,N,trials,mean_err,median_err,fail,mean_t_total,t_max,mean_samples";

/// One row per cell in the fixed schema. Reals use 12-digit scientific
/// notation so the bytes depend only on the values.
pub fn to_csv(cells: &[CellResult]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for c in cells {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{:.12e},{:.12e},{},{:.12e},{:.12e},{:.12e}",
            c.key.model,
            c.key.alpha,
            c.key.algorithm,
            c.key.n,
            c.trials,
            c.mean_abs_error,
            c.median_abs_error,
            c.failure_count,
            c.mean_t_total,
            c.t_max,
            c.mean_n_samples
        );
    }
    out
}

/// Writes `results.csv`, `results.json` and `plots/` into `dir`.
///
/// Each cell gets `plots/<cell>.dat` with per-trial `t_total abs_error`
/// columns; each (model, alpha, algorithm) series gets `plots/<series>.dat`
/// with one row per `N`: `N t_max mean_t_total mean_err median_err mean_samples`.
pub fn write_outputs(spec: &SweepSpec, cells: &[CellResult], dir: &Path) -> Result<()> {
    let io = |p: &Path, e| Error::io(p.display().to_string(), e);
    let plots = dir.join("plots");
    std::fs::create_dir_all(&plots).map_err(|e| io(&plots, e))?;
    let csv = dir.join("results.csv");
    std::fs::write(&csv, to_csv(cells)).map_err(|e| io(&csv, e))?;
    #[derive(Serialize)]
    struct Doc<'a> {
        spec: &'a SweepSpec,
        cells: &'a [CellResult],
    }
    let json = dir.join("results.json");
    let text = serde_json::to_string_pretty(&Doc { spec, cells })?;
    std::fs::write(&json, text + "\n").map_err(|e| io(&json, e))?;

    let mut series: BTreeMap<String, String> = BTreeMap::new();
    for c in cells {
        let mut body = String::from("# t_total abs_error\n");
        for t in &c.detail {
            let _ = writeln!(body, "{:.12e} {:.12e}", t.ledger.t_total, t.abs_error);
        }
        let path = plots.join(format!("{}.dat", c.key.file_stem()));
        std::fs::write(&path, body).map_err(|e| io(&path, e))?;
        let name = format!("{}_a{}_{}", c.key.model, c.key.alpha, c.key.algorithm);
        let rows =
            series.entry(name).or_insert_with(|| "# N t_max mean_t_total mean_err median_err mean_samples\n".into());
        let _ = writeln!(
            rows,
            "{} {:.12e} {:.12e} {:.12e} {:.12e} {:.12e}",
            c.key.n, c.t_max, c.mean_t_total, c.mean_abs_error, c.median_abs_error, c.mean_n_samples
        );
    }
    for (name, body) in series {
        let path = plots.join(format!("{name}.dat"));
        std::fs::write(&path, body).map_err(|e| io(&path, e))?;
    }
    Ok(())
}

/// Runtime quantities of one cell without estimating anything.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProfileRow {
    #[serde(flatten)]
    pub key: CellKey,
    pub mean_n_distinct: f64,
    pub mean_t_total: f64,
    pub mean_t_max: f64,
}

/// Distinct time count, `T_total` and `T_max` per cell, averaged over the
/// sweep's trials with the same seeds [`run_sweep`] uses. The primary
/// estimator's ledger is computed from its sample sets alone; baselines
/// are run, since their times are chosen along the way.
pub fn sample_count_profile(spec: &SweepSpec) -> Result<Vec<ProfileRow>> {
    spec.validate()?;
    let models = prepare_models(spec)?;
    spec.cells()
        .par_iter()
        .map(|key| {
            let ledgers: Vec<RuntimeLedger> = (0..spec.trials_per_cell)
                .map(|t| {
                    let seed = key.seed(spec.seed).child(t as u64);
                    if key.algorithm == "cs_qpe" {
                        planned_ledger(&spec.estimator_config(key.n), seed)
                    } else {
                        let model = &models[&(key.model.clone(), key.alpha.to_bits())];
                        let channel = if spec.noiseless { Channel::Exact } else { Channel::Hadamard(1) };
                        let cfg = BaselineConfig::comparison_defaults(&key.algorithm, key.n as f64)?;
                        run_baseline(&cfg, &SignalSource::new(model.spectrum.clone(), channel, seed)).map(|r| r.ledger)
                    }
                })
                .collect::<Result<_>>()?;
            Ok(ProfileRow {
                key: key.clone(),
                mean_n_distinct: mean(ledgers.iter().map(|l| l.n_distinct_times as f64)),
                mean_t_total: mean(ledgers.iter().map(|l| l.t_total)),
                mean_t_max: mean(ledgers.iter().map(|l| l.t_max)),
            })
        })
        .collect()
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn log_log_slope(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::contract("slope needs two or more paired points"));
    }
    if x.iter().chain(y).any(|v| !(*v > 0.0)) {
        return Err(Error::contract("slope needs positive values"));
    }
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let mx = mean(lx.iter().copied());
    let my = mean(ly.iter().copied());
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    if sxx == 0.0 {
        return Err(Error::DivisionByZero("all x values are equal".into()));
    }
    Ok(sxy / sxx)
}
