//! Seeded Monte-Carlo experiments: every estimator sees the same simulated
//! spectra, replication `i` always draws from stream `i`, and results are
//! reduced in replication order.

use std::io::Write;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::calibration::{
    calibrate_ridge, estimate_sigma2, py_constant, CalibrationCache, CalibrationKey,
    CalibrationResult, RidgeKind, DEFAULT_REPS,
};
use crate::error::{Error, Result};
use crate::estimators::{
    default_kappa, lwy_estimator, py_estimator, tvacle, vacle, wy_estimator, EstimatorConfig,
    Method, PyIndexing, RatioTrace, Sigma2Mode, DEFAULT_L,
};
use crate::exec::Execution;
use crate::rng::{domain, domain_with, stream};
use crate::spectra::{Family, ModelSpec, Spectrum};

/// Number of `q̂` buckets: `0..=19` plus one for `q̂ ≥ 20`.
pub const BUCKETS: usize = 21;

/// One `(p, n, T)` combination. `n` is unused for auto-covariance models and
/// `t` for population models.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridPoint {
    pub p: usize,
    #[serde(default)]
    pub n: Option<usize>,
    #[serde(default, rename = "T", alias = "t")]
    pub t: Option<usize>,
}

/// An estimator and its overrides. Unset values come from the family
/// defaults and the pure-noise calibration of the grid point.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimatorEntry {
    pub method: Option<Method>,
    /// Column label; defaults to the method name.
    pub label: Option<String>,
    pub tau: Option<f64>,
    #[serde(rename = "L")]
    pub l: Option<usize>,
    /// Which calibrated ridge to use.
    pub ridge: Option<RidgeKind>,
    /// Fixed ridge, bypassing calibration.
    pub c_n: Option<f64>,
    pub kappa: Option<f64>,
    pub k1: Option<f64>,
    pub k2: Option<f64>,
    pub edge: Option<f64>,
    /// PY constant `C`; defaults to the tabulated value for `c = p/n`.
    pub py_c: Option<f64>,
    pub py_indexing: Option<PyIndexing>,
    /// LWY cutoff; defaults to the calibrated one.
    pub lwy_d: Option<f64>,
    /// WY margin; defaults to `log log p · p^(−2/3)`.
    pub wy_d: Option<f64>,
}

impl EstimatorEntry {
    pub fn new(method: Method) -> Self {
        Self { method: Some(method), ..Self::default() }
    }

    pub fn method(&self) -> Result<Method> {
        self.method.ok_or_else(|| Error::config("estimator entry without a method"))
    }

    pub fn label(&self) -> Result<String> {
        Ok(match &self.label {
            Some(l) => l.clone(),
            None => self.method()?.name().to_string(),
        })
    }

    fn needs_calibration(&self) -> Result<bool> {
        Ok(match self.method()? {
            Method::Vacle | Method::Tvacle => self.c_n.is_none(),
            Method::Lwy => self.lwy_d.is_none(),
            Method::Py | Method::Wy => false,
        })
    }
}

/// Calibrated ridge used by default for a family and method: `c1` for
/// VACLE and `c2` for TVACLE on covariance and auto-covariance spectra,
/// `c3a` for Fisher spectra.
pub fn default_ridge(family: Family, method: Method) -> RidgeKind {
    match (family, method) {
        (Family::Fisher, _) => RidgeKind::C3a,
        (_, Method::Tvacle) => RidgeKind::C2,
        _ => RidgeKind::C1,
    }
}

fn default_calibration_reps() -> usize {
    DEFAULT_REPS
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model_id: String,
    /// Model template; its dimensions are replaced by each grid point.
    pub model: ModelSpec,
    pub grid: Vec<GridPoint>,
    pub estimators: Vec<EstimatorEntry>,
    pub reps: usize,
    pub seed: u64,
    #[serde(default)]
    pub sigma2: Sigma2Mode,
    #[serde(default = "default_calibration_reps")]
    pub calibration_reps: usize,
    #[serde(default)]
    pub execution: Execution,
    /// Keep every replication's ratio trace in the report.
    #[serde(default)]
    pub keep_traces: bool,
    /// Record wall-clock time; off by default so output is reproducible.
    #[serde(default)]
    pub timing: bool,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.reps < 1 {
            return Err(Error::config("reps must be at least 1"));
        }
        if self.grid.is_empty() {
            return Err(Error::config("the grid is empty"));
        }
        if self.estimators.is_empty() {
            return Err(Error::config("no estimators configured"));
        }
        let mut labels = Vec::new();
        for e in &self.estimators {
            let label = e.label()?;
            if labels.contains(&label) {
                return Err(Error::config(format!("duplicate estimator label '{label}'")));
            }
            labels.push(label);
        }
        if let Sigma2Mode::Estimated = self.sigma2 {
            if self.model.family() != Family::Population {
                return Err(Error::config("sigma2 estimation is only available for population models"));
            }
        }
        for g in &self.grid {
            self.model.with_dims(g.p, g.n, g.t)?.validate()?;
        }
        Ok(())
    }
}

/// Mean and mean squared error of `σ̂²` across replications.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sigma2Summary {
    pub mean: f64,
    pub mse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationReport {
    pub model_id: String,
    pub family: Family,
    pub p: usize,
    pub n: Option<usize>,
    #[serde(rename = "T")]
    pub t: Option<usize>,
    pub estimator: String,
    pub method: Method,
    /// Completed replications.
    pub reps: usize,
    pub true_q: usize,
    pub mean: f64,
    pub mse: f64,
    pub misest_rate: f64,
    /// Proportions of `q̂ = 0..=19` and `q̂ ≥ 20`.
    pub distribution: Vec<f64>,
    /// Replications whose stopping rule never fired.
    pub exhausted: usize,
    pub seed: u64,
    pub runtime_s: Option<f64>,
    /// Ridge used by VACLE/TVACLE (or cutoff by LWY), when it is fixed per grid point.
    pub tuning: Option<f64>,
    pub ridge_clamped: bool,
    pub sigma2: Option<Sigma2Summary>,
    pub partial: bool,
    pub diagnostic: Option<String>,
    /// FNV-1a digest of each replication's spectrum, shared by all
    /// estimators of a grid point.
    pub spectrum_digests: Vec<u64>,
    pub q_hats: Vec<usize>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub traces: Option<Vec<RatioTrace>>,
}

impl SimulationReport {
    /// Mean and MSE recomputed from the bucket proportions.
    pub fn moments_from_distribution(&self) -> (f64, f64) {
        let q = self.true_q as f64;
        let mut mean = 0.0;
        let mut mse = 0.0;
        for (k, &w) in self.distribution.iter().enumerate() {
            mean += w * k as f64;
            mse += w * (k as f64 - q).powi(2);
        }
        (mean, mse)
    }
}

/// Reports of a whole experiment and the first failure, if any. A failed
/// grid point still contributes reports flagged `partial`, built from the
/// replications before the first failing one.
#[derive(Debug)]
pub struct ExperimentRun {
    pub reports: Vec<SimulationReport>,
    pub failure: Option<Error>,
}

struct Resolved {
    entry: EstimatorEntry,
    method: Method,
    label: String,
    tuning: Option<f64>,
    clamped: bool,
}

struct Replication {
    digest: u64,
    sigma2: Option<f64>,
    outcomes: Vec<(usize, bool, Option<RatioTrace>)>,
}

fn resolve(
    entries: &[EstimatorEntry],
    family: Family,
    calibration: Option<&CalibrationResult>,
) -> Result<Vec<Resolved>> {
    entries
        .iter()
        .map(|e| {
            let method = e.method()?;
            let (tuning, clamped) = match method {
                Method::Vacle | Method::Tvacle => match e.c_n {
                    Some(c) => (Some(c), false),
                    None => {
                        let cal = calibration.expect("calibration computed when needed");
                        let kind = e.ridge.unwrap_or_else(|| default_ridge(family, method));
                        (Some(cal.ridges.get(kind)), cal.clamped.contains(&kind))
                    }
                },
                Method::Lwy => (
                    Some(e.lwy_d.unwrap_or_else(|| {
                        calibration.expect("calibration computed when needed").lwy_d
                    })),
                    false,
                ),
                Method::Py | Method::Wy => (None, false),
            };
            Ok(Resolved { entry: e.clone(), method, label: e.label()?, tuning, clamped })
        })
        .collect()
}

fn run_estimator(r: &Resolved, spec: &Spectrum, sigma2: f64) -> Result<(usize, bool, Option<RatioTrace>)> {
    let e = &r.entry;
    let l = e.l.unwrap_or(DEFAULT_L);
    let est = match r.method {
        Method::Vacle | Method::Tvacle => {
            let mut cfg = EstimatorConfig::for_family(spec.family, r.tuning.expect("ridge resolved"));
            cfg.l = l;
            cfg.sigma2 = Sigma2Mode::Known(sigma2);
            cfg.tau = e.tau.unwrap_or(cfg.tau);
            cfg.kappa = e.kappa;
            cfg.edge = e.edge;
            cfg.k1 = e.k1.unwrap_or(cfg.k1);
            cfg.k2 = e.k2.unwrap_or(cfg.k2);
            if r.method == Method::Vacle {
                vacle(spec, &cfg)?
            } else {
                tvacle(spec, &cfg)?
            }
        }
        Method::Py => {
            let c = match e.py_c {
                Some(c) => c,
                None => py_constant(spec.p as f64 / spec.n as f64)?.value,
            };
            py_estimator(spec, sigma2, c, l, e.py_indexing.unwrap_or_default())?
        }
        Method::Lwy => lwy_estimator(spec, r.tuning.expect("cutoff resolved"), l)?,
        Method::Wy => {
            let edge = match e.edge {
                Some(x) => x,
                None => spec.bulk_edge()?,
            };
            let d = e.wy_d.unwrap_or_else(|| default_kappa(spec.p));
            wy_estimator(spec, sigma2, edge, d, l)?
        }
    };
    Ok((est.q_hat, est.exhausted, est.trace))
}

fn replicate(
    model: &ModelSpec,
    resolved: &[Resolved],
    sigma2_mode: Sigma2Mode,
    seed: u64,
    dom: u64,
    index: usize,
    keep_traces: bool,
) -> Result<Replication> {
    let mut rng = stream(seed, dom, index as u64);
    let spec = model.simulate(&mut rng)?;
    let (sigma2, estimated) = match sigma2_mode {
        Sigma2Mode::Known(s) => (s, None),
        Sigma2Mode::Estimated => {
            let s = estimate_sigma2(&spec, spec.p as f64 / spec.n as f64)?;
            (s, Some(s))
        }
    };
    let outcomes = resolved
        .iter()
        .map(|r| {
            let (q, ex, trace) = run_estimator(r, &spec, sigma2)?;
            Ok((q, ex, if keep_traces { trace } else { None }))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Replication { digest: spec.digest(), sigma2: estimated, outcomes })
}

/// Random-stream domain of a grid point: depends on the dimensions only, so
/// models compared at the same size share their noise draws.
fn grid_domain(model: &ModelSpec) -> u64 {
    domain_with(
        domain::SIMULATION,
        &[model.p() as u64, model.n() as u64, model.t().map_or(0, |t| t as u64 + 1)],
    )
}

fn calibration_for(
    cfg: &ExperimentConfig,
    model: &ModelSpec,
    cache: Option<&CalibrationCache>,
) -> Result<Option<CalibrationResult>> {
    let mut needed = false;
    for e in &cfg.estimators {
        needed |= e.needs_calibration()?;
    }
    if !needed {
        return Ok(None);
    }
    let key = CalibrationKey {
        family: model.family(),
        p: model.p(),
        n: model.n(),
        t: model.t(),
        reps: cfg.calibration_reps,
        seed: cfg.seed,
    };
    Ok(Some(match cache {
        Some(c) => c.get_or_compute(&key, false, cfg.execution)?.0,
        None => calibrate_ridge(&key, cfg.execution)?,
    }))
}

/// Runs every grid point: calibrate once, simulate `reps` spectra, apply all
/// estimators to each spectrum, aggregate.
pub fn run_experiment(cfg: &ExperimentConfig, cache: Option<&CalibrationCache>) -> Result<ExperimentRun> {
    cfg.validate()?;
    let mut reports = Vec::new();
    let mut failure = None;
    for g in &cfg.grid {
        let started = Instant::now();
        let model = cfg.model.with_dims(g.p, g.n, g.t)?;
        let true_q = model.true_order()?;
        let calibration = calibration_for(cfg, &model, cache)?;
        let resolved = resolve(&cfg.estimators, model.family(), calibration.as_ref())?;
        let dom = grid_domain(&model);
        let results = cfg.execution.map_indexed(cfg.reps, |i| {
            replicate(&model, &resolved, cfg.sigma2, cfg.seed, dom, i, cfg.keep_traces)
        });
        let mut done = Vec::with_capacity(cfg.reps);
        let mut diagnostic = None;
        for (i, r) in results.into_iter().enumerate() {
            match r {
                Ok(rep) => done.push(rep),
                Err(e) => {
                    let msg = format!("replication {i} failed: {e}");
                    log::error!("{} p={} {msg}", cfg.model_id, g.p);
                    diagnostic = Some(msg);
                    failure.get_or_insert(e);
                    break;
                }
            }
        }
        let runtime = cfg.timing.then(|| started.elapsed().as_secs_f64());
        let true_sigma2 = model.sigma2();
        for (k, r) in resolved.iter().enumerate() {
            reports.push(aggregate(
                cfg, &model, g, r, k, true_q, &done, runtime, true_sigma2, diagnostic.clone(),
            ));
        }
    }
    Ok(ExperimentRun { reports, failure })
}

#[allow(clippy::too_many_arguments)]
fn aggregate(
    cfg: &ExperimentConfig,
    model: &ModelSpec,
    g: &GridPoint,
    r: &Resolved,
    k: usize,
    true_q: usize,
    done: &[Replication],
    runtime: Option<f64>,
    true_sigma2: f64,
    diagnostic: Option<String>,
) -> SimulationReport {
    let reps = done.len();
    let q_hats: Vec<usize> = done.iter().map(|d| d.outcomes[k].0).collect();
    let exhausted = done.iter().filter(|d| d.outcomes[k].1).count();
    let mut counts = [0usize; BUCKETS];
    for &q in &q_hats {
        counts[q.min(BUCKETS - 1)] += 1;
    }
    let denom = reps.max(1) as f64;
    let tq = true_q as f64;
    let mean = q_hats.iter().map(|&q| q as f64).sum::<f64>() / denom;
    let mse = q_hats.iter().map(|&q| (q as f64 - tq).powi(2)).sum::<f64>() / denom;
    let misest = q_hats.iter().filter(|&&q| q != true_q).count() as f64 / denom;
    let sigma2 = match cfg.sigma2 {
        Sigma2Mode::Estimated if reps > 0 => {
            let s: Vec<f64> = done.iter().filter_map(|d| d.sigma2).collect();
            Some(Sigma2Summary {
                mean: s.iter().sum::<f64>() / denom,
                mse: s.iter().map(|v| (v - true_sigma2).powi(2)).sum::<f64>() / denom,
            })
        }
        _ => None,
    };
    let traces = cfg.keep_traces.then(|| {
        done.iter().filter_map(|d| d.outcomes[k].2.clone()).collect::<Vec<_>>()
    });
    SimulationReport {
        model_id: cfg.model_id.clone(),
        family: model.family(),
        p: g.p,
        n: (model.family() != Family::Autocov).then(|| model.n()),
        t: match model.family() {
            Family::Population => None,
            Family::Fisher => model.t(),
            Family::Autocov => Some(model.n()),
        },
        estimator: r.label.clone(),
        method: r.method,
        reps,
        true_q,
        mean,
        mse,
        misest_rate: misest,
        distribution: counts.iter().map(|&c| c as f64 / denom).collect(),
        exhausted,
        seed: cfg.seed,
        runtime_s: runtime,
        tuning: r.tuning,
        ridge_clamped: r.clamped,
        sigma2,
        partial: diagnostic.is_some(),
        diagnostic,
        spectrum_digests: done.iter().map(|d| d.digest).collect(),
        q_hats,
        traces,
    }
}

pub const CSV_HEADER_PREFIX: [&str; 9] =
    ["model_id", "p", "n", "T", "estimator", "R", "mean", "mse", "misest_rate"];

fn csv_header() -> Vec<String> {
    let mut h: Vec<String> = CSV_HEADER_PREFIX.iter().map(|s| s.to_string()).collect();
    h.extend((0..BUCKETS - 1).map(|i| format!("d{i}")));
    h.push(format!("d_ge_{}", BUCKETS - 1));
    h.push("seed".into());
    h.push("runtime_s".into());
    h
}

fn opt(v: Option<usize>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}

/// Writes one CSV row per report, in report order (estimators of a grid
/// point are adjacent). An empty slice yields the header alone.
pub fn summarize<W: Write>(reports: &[SimulationReport], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(csv_header())?;
    for r in reports {
        let mut row = vec![
            r.model_id.clone(),
            r.p.to_string(),
            opt(r.n),
            opt(r.t),
            r.estimator.clone(),
            r.reps.to_string(),
            r.mean.to_string(),
            r.mse.to_string(),
            r.misest_rate.to_string(),
        ];
        row.extend(r.distribution.iter().map(|d| d.to_string()));
        row.push(r.seed.to_string());
        row.push(r.runtime_s.map_or_else(String::new, |t| format!("{t:.3}")));
        w.write_record(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn summarize_to_string(reports: &[SimulationReport]) -> Result<String> {
    let mut buf = Vec::new();
    summarize(reports, &mut buf)?;
    Ok(String::from_utf8(buf).expect("csv output is UTF-8"))
}
