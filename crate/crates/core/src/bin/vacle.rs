use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use vacle::calibration::{py_constant, CalibrationCache, CalibrationKey, RidgeKind, DEFAULT_REPS};
use vacle::config::CliConfig;
use vacle::estimators::{
    default_kappa, lwy_estimator, py_estimator, transform_for, tvacle, vacle as vacle_estimate,
    wy_estimator, Estimate, EstimatorConfig, Method, PyIndexing, Sigma2Mode, DEFAULT_L,
};
use vacle::harness::{default_ridge, run_experiment, summarize, SimulationReport};
use vacle::rmt::{
    autocov_factor_limit, fisher_spike_map, pop_spike_map, pop_threshold, AutocovLaw,
    FactorSignature, FisherLaw, MpLaw,
};
use vacle::spectra::{ingest_spectrum, Family, IngestOptions};
use vacle::{Error, Execution, Result};

const CACHE_ENV: &str = "VACLE_CACHE_DIR";
const DEFAULT_CACHE_DIR: &str = ".vacle-cache";

#[derive(Parser)]
#[command(name = "vacle", version, about = "Valley-cliff order determination for spiked models")]
struct Cli {
    /// Print one JSON object per line instead of text.
    #[arg(long, global = true)]
    json: bool,
    /// Calibration cache directory [env: VACLE_CACHE_DIR, default: .vacle-cache]
    #[arg(long, global = true)]
    cache_dir: Option<PathBuf>,
    /// Run replications on one thread.
    #[arg(long, global = true)]
    sequential: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
#[allow(clippy::large_enum_variant)]
enum Command {
    /// Pure-noise calibration of the ridges and the LWY cutoff.
    Calibrate(CalibrateArgs),
    /// Estimate the order of an eigenvalue file.
    Estimate(EstimateArgs),
    /// Run a Monte-Carlo experiment from a config file.
    Simulate(SimulateArgs),
    /// Render a JSON report file as CSV or JSON lines.
    Report(ReportArgs),
    /// Print edges, thresholds and spike limits.
    Limits(LimitsArgs),
}

#[derive(Args)]
struct CalibrateArgs {
    #[arg(long, value_parser = parse_family)]
    kind: Family,
    #[arg(long)]
    p: usize,
    /// Sample size. Auto-covariance takes T instead.
    #[arg(long)]
    n: Option<usize>,
    /// Noise sample size of a Fisher matrix, or the series length.
    #[arg(long = "T", alias = "t")]
    t: Option<usize>,
    #[arg(long, default_value_t = DEFAULT_REPS)]
    reps: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Recompute even when the cache has an entry.
    #[arg(long)]
    force: bool,
}

#[derive(Args)]
struct EstimateArgs {
    /// Eigenvalue file: one value per line, or CSV with --column.
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    column: Option<String>,
    #[arg(long, value_parser = parse_family)]
    family: Family,
    #[arg(long, value_parser = parse_method)]
    method: Method,
    /// Sample size. Auto-covariance takes T instead.
    #[arg(long)]
    n: Option<usize>,
    #[arg(long = "T", alias = "t")]
    t: Option<usize>,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long = "L", alias = "l", default_value_t = DEFAULT_L)]
    l: usize,
    /// Fixed ridge; otherwise the calibrated one is used.
    #[arg(long)]
    c_n: Option<f64>,
    #[arg(long, value_parser = parse_ridge)]
    ridge: Option<RidgeKind>,
    /// Known noise variance.
    #[arg(long, conflicts_with = "estimate_sigma2")]
    sigma2: Option<f64>,
    /// Estimate the noise variance from the spectrum (population only).
    #[arg(long)]
    estimate_sigma2: bool,
    #[arg(long)]
    kappa: Option<f64>,
    #[arg(long)]
    k1: Option<f64>,
    #[arg(long)]
    k2: Option<f64>,
    #[arg(long)]
    edge: Option<f64>,
    #[arg(long)]
    py_c: Option<f64>,
    #[arg(long)]
    py_one_based: bool,
    #[arg(long)]
    lwy_d: Option<f64>,
    #[arg(long)]
    wy_d: Option<f64>,
    /// Replications for calibration when it is needed.
    #[arg(long, default_value_t = DEFAULT_REPS)]
    calibration_reps: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Write the ratio trace as JSON.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Write (i, ratio) pairs and the threshold line as CSV.
    #[arg(long)]
    plot_data: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    reps: Option<usize>,
    #[arg(long)]
    csv: Option<PathBuf>,
    /// JSON mirror of the reports.
    #[arg(long = "json-out")]
    json_out: Option<PathBuf>,
    /// Keep every replication's ratio trace in the JSON mirror.
    #[arg(long)]
    trace: bool,
    /// Record wall-clock time in the runtime_s column.
    #[arg(long)]
    timing: bool,
}

#[derive(Args)]
struct ReportArgs {
    /// JSON report file written by `simulate`.
    #[arg(long)]
    input: PathBuf,
    /// Output CSV path; stdout when omitted.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct LimitsArgs {
    #[arg(long, value_parser = parse_family)]
    family: Family,
    /// p/n.
    #[arg(long)]
    c: Option<f64>,
    /// p/T.
    #[arg(long)]
    y: Option<f64>,
    #[arg(long, default_value_t = 1.0)]
    sigma2: f64,
    /// Population spikes to map (population and Fisher).
    #[arg(long, value_delimiter = ',')]
    spike: Vec<f64>,
    /// AR(1) coefficients of the factors (auto-covariance).
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    theta: Vec<f64>,
    /// Innovation variance of the AR(1) factors.
    #[arg(long, default_value_t = 2.0)]
    innovation_var: f64,
}

fn parse_family(s: &str) -> std::result::Result<Family, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_method(s: &str) -> std::result::Result<Method, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_ridge(s: &str) -> std::result::Result<RidgeKind, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

struct Ctx {
    json: bool,
    cache: CalibrationCache,
    exec: Execution,
}

impl Ctx {
    fn emit(&self, value: serde_json::Value, text: impl FnOnce() -> String) -> Result<()> {
        let mut out = io::stdout().lock();
        if self.json {
            writeln!(out, "{value}")?;
        } else {
            writeln!(out, "{}", text())?;
        }
        Ok(())
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let cache_dir = cli
        .cache_dir
        .clone()
        .or_else(|| std::env::var_os(CACHE_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_CACHE_DIR));
    let ctx = Ctx {
        json: cli.json,
        cache: CalibrationCache::new(cache_dir),
        exec: if cli.sequential { Execution::Sequential } else { Execution::Parallel },
    };
    let result = match cli.command {
        Command::Calibrate(a) => cmd_calibrate(&ctx, a),
        Command::Estimate(a) => cmd_estimate(&ctx, a),
        Command::Simulate(a) => cmd_simulate(&ctx, a),
        Command::Report(a) => cmd_report(&ctx, a),
        Command::Limits(a) => cmd_limits(&ctx, a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            if cli.json {
                println!("{}", json!({ "error": e.to_string(), "exit_code": e.exit_code() }));
            }
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

/// Auto-covariance spectra carry the series length in `n`.
fn sample_sizes(family: Family, n: Option<usize>, t: Option<usize>) -> Result<(usize, Option<usize>)> {
    match (family, n, t) {
        (Family::Autocov, Some(n), Some(t)) if n != t => Err(Error::Config(format!(
            "auto-covariance takes a single sample size, got --n {n} and --T {t}"
        ))),
        (Family::Autocov, Some(v), _) | (Family::Autocov, None, Some(v)) => Ok((v, None)),
        (Family::Autocov, None, None) => Err(Error::Config("auto-covariance needs --T".into())),
        (_, Some(n), t) => Ok((n, t)),
        (_, None, _) => Err(Error::Config("--n is required".into())),
    }
}

fn cmd_calibrate(ctx: &Ctx, a: CalibrateArgs) -> Result<()> {
    let (n, t) = sample_sizes(a.kind, a.n, a.t)?;
    let key = CalibrationKey { family: a.kind, p: a.p, n, t, reps: a.reps, seed: a.seed };
    let (res, hit) = ctx.cache.get_or_compute(&key, a.force, ctx.exec)?;
    let path = ctx.cache.path_for(&key);
    let mut value = serde_json::to_value(&res)?;
    value["cache_hit"] = json!(hit);
    value["path"] = json!(path.display().to_string());
    ctx.emit(value, || {
        let mut s = format!(
            "{} p={} n={}{} R={} seed={} ({})\n",
            key.family.name(),
            key.p,
            key.n,
            key.t.map_or_else(String::new, |t| format!(" T={t}")),
            key.reps,
            key.seed,
            if hit { "cache hit" } else { "computed" }
        );
        s += &format!("mean gap  {:.6e}\n", res.mean_gap);
        for k in RidgeKind::ALL {
            let flag = if res.clamped.contains(&k) { "  (clamped)" } else { "" };
            s += &format!("{:<9} {:.6e}{flag}\n", k.name(), res.ridges.get(k));
        }
        s += &format!("lwy_d     {:.6e}\n", res.lwy_d);
        s += &format!("cache     {}", path.display());
        s
    })
}

fn cmd_estimate(ctx: &Ctx, a: EstimateArgs) -> Result<()> {
    let (n, t) = sample_sizes(a.family, a.n, a.t)?;
    let spec = ingest_spectrum(
        &a.input,
        &IngestOptions { family: a.family, n, t, p: None, column: a.column.clone() },
    )?;
    let sigma2_mode = if a.estimate_sigma2 {
        Sigma2Mode::Estimated
    } else {
        Sigma2Mode::Known(a.sigma2.unwrap_or(1.0))
    };
    let calibration = |need: bool| -> Result<Option<vacle::calibration::CalibrationResult>> {
        if !need {
            return Ok(None);
        }
        let key = CalibrationKey {
            family: spec.family,
            p: spec.p,
            n: spec.n,
            t: spec.t,
            reps: a.calibration_reps,
            seed: a.seed,
        };
        Ok(Some(ctx.cache.get_or_compute(&key, false, ctx.exec)?.0))
    };
    let known_sigma2 = || -> Result<f64> {
        match sigma2_mode {
            Sigma2Mode::Known(s) => Ok(s),
            Sigma2Mode::Estimated => {
                if spec.family != Family::Population {
                    return Err(Error::Config(
                        "sigma2 estimation is only available for population spectra".into(),
                    ));
                }
                vacle::calibration::estimate_sigma2(&spec, spec.p as f64 / spec.n as f64)
            }
        }
    };
    let est: Estimate = match a.method {
        Method::Vacle | Method::Tvacle => {
            if a.l > spec.len() {
                // Checked before calibrating so the error is immediate.
                return Err(Error::Config(format!(
                    "L + 1 exceeds p: the search bound L = {} needs at least L eigenvalues, got p = {}",
                    a.l,
                    spec.len()
                )));
            }
            let c_n = match a.c_n {
                Some(c) => c,
                None => {
                    let cal = calibration(true)?.expect("requested");
                    cal.ridges.get(a.ridge.unwrap_or_else(|| default_ridge(spec.family, a.method)))
                }
            };
            let mut cfg = EstimatorConfig::for_family(spec.family, c_n);
            cfg.l = a.l;
            cfg.tau = a.tau.unwrap_or(cfg.tau);
            cfg.sigma2 = sigma2_mode;
            cfg.kappa = a.kappa;
            cfg.edge = a.edge;
            cfg.k1 = a.k1.unwrap_or(cfg.k1);
            cfg.k2 = a.k2.unwrap_or(cfg.k2);
            if a.method == Method::Vacle {
                vacle_estimate(&spec, &cfg)?
            } else {
                let f = transform_for(&spec, &cfg)?;
                log::info!("transform e = {} kappa = {}", f.e, f.kappa);
                tvacle(&spec, &cfg)?
            }
        }
        Method::Py => {
            let c = match a.py_c {
                Some(c) => c,
                None => py_constant(spec.p as f64 / spec.n as f64)?.value,
            };
            let idx = if a.py_one_based { PyIndexing::OneBased } else { PyIndexing::ZeroBased };
            py_estimator(&spec, known_sigma2()?, c, a.l, idx)?
        }
        Method::Lwy => {
            let d = match a.lwy_d {
                Some(d) => d,
                None => calibration(true)?.expect("requested").lwy_d,
            };
            lwy_estimator(&spec, d, a.l)?
        }
        Method::Wy => {
            let edge = match a.edge {
                Some(e) => e,
                None => spec.bulk_edge()?,
            };
            let d = a.wy_d.unwrap_or_else(|| default_kappa(spec.p));
            wy_estimator(&spec, known_sigma2()?, edge, d, a.l)?
        }
    };
    if let Some(path) = &a.trace {
        let trace = est.trace.as_ref().ok_or_else(|| {
            Error::Config(format!("{} produces no ratio trace", a.method))
        })?;
        write_atomic(path, &(serde_json::to_string_pretty(trace)? + "\n"))?;
    }
    if let Some(path) = &a.plot_data {
        let trace = est.trace.as_ref().ok_or_else(|| {
            Error::Config(format!("{} produces no ratios to plot", a.method))
        })?;
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["i", "ratio", "tau"])?;
        for (i, r) in trace.ratios.iter().enumerate() {
            w.write_record([(i + 1).to_string(), r.to_string(), trace.tau.to_string()])?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        write_atomic(path, &String::from_utf8(bytes).expect("csv output is UTF-8"))?;
    }
    let value = json!({
        "method": est.method,
        "q_hat": est.q_hat,
        "exhausted": est.exhausted,
        "sigma2": est.sigma2,
        "p": spec.p,
    });
    ctx.emit(value, || {
        let mut s = format!("{} q_hat = {}", est.method, est.q_hat);
        if est.exhausted {
            s += " (search bound reached)";
        }
        s
    })
}

fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    let dir = path.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let tmp = dir.join(format!(".{name}.{}.tmp", std::process::id()));
    fs::write(&tmp, contents)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

fn cmd_simulate(ctx: &Ctx, a: SimulateArgs) -> Result<()> {
    let cfg_file = CliConfig::load(&a.config)?;
    let mut exp = cfg_file.experiment();
    if let Some(seed) = a.seed {
        exp.seed = seed;
    }
    if let Some(reps) = a.reps {
        exp.reps = reps;
    }
    exp.keep_traces |= a.trace;
    exp.timing |= a.timing;
    if ctx.exec == Execution::Sequential {
        exp.execution = Execution::Sequential;
    }
    let cache = match &cfg_file.io.cache_dir {
        Some(dir) => CalibrationCache::new(dir),
        None => ctx.cache.clone(),
    };
    let run = run_experiment(&exp, Some(&cache))?;
    let csv_path = a.csv.or(cfg_file.io.csv.clone());
    let json_path = a.json_out.or(cfg_file.io.json.clone());
    if let Some(path) = &csv_path {
        let mut buf = Vec::new();
        summarize(&run.reports, &mut buf)?;
        write_atomic(path, &String::from_utf8(buf).expect("csv output is UTF-8"))?;
    }
    if let Some(path) = &json_path {
        write_atomic(path, &(serde_json::to_string_pretty(&run.reports)? + "\n"))?;
    }
    if csv_path.is_none() && !ctx.json {
        summarize(&run.reports, io::stdout().lock())?;
    } else {
        for r in &run.reports {
            ctx.emit(report_line(r), || {
                format!(
                    "{} p={} {}: mean {:.3} mse {:.3} misest {:.3}{}",
                    r.model_id,
                    r.p,
                    r.estimator,
                    r.mean,
                    r.mse,
                    r.misest_rate,
                    if r.partial { " (partial)" } else { "" }
                )
            })?;
        }
    }
    match run.failure {
        Some(e) => Err(e),
        None => Ok(()),
    }
}

fn report_line(r: &SimulationReport) -> serde_json::Value {
    json!({
        "model_id": r.model_id,
        "p": r.p,
        "n": r.n,
        "T": r.t,
        "estimator": r.estimator,
        "R": r.reps,
        "true_q": r.true_q,
        "mean": r.mean,
        "mse": r.mse,
        "misest_rate": r.misest_rate,
        "distribution": r.distribution,
        "seed": r.seed,
        "runtime_s": r.runtime_s,
        "sigma2": r.sigma2,
        "partial": r.partial,
    })
}

fn cmd_report(ctx: &Ctx, a: ReportArgs) -> Result<()> {
    let text = fs::read_to_string(&a.input)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", a.input.display())))?;
    let reports: Vec<SimulationReport> = serde_json::from_str(&text)
        .map_err(|e| Error::Ingest { path: a.input.clone(), line: e.line(), message: e.to_string() })?;
    if ctx.json {
        for r in &reports {
            ctx.emit(report_line(r), String::new)?;
        }
        return Ok(());
    }
    match &a.output {
        Some(path) => {
            let mut buf = Vec::new();
            summarize(&reports, &mut buf)?;
            write_atomic(path, &String::from_utf8(buf).expect("csv output is UTF-8"))
        }
        None => summarize(&reports, io::stdout().lock()),
    }
}

fn need(v: Option<f64>, name: &str, family: Family) -> Result<f64> {
    v.ok_or_else(|| Error::Config(format!("--{name} is required for the {} family", family.name())))
}

fn cmd_limits(ctx: &Ctx, a: LimitsArgs) -> Result<()> {
    match a.family {
        Family::Population => {
            let c = need(a.c, "c", a.family)?;
            let law = MpLaw::new(c, a.sigma2)?;
            let threshold = pop_threshold(c, a.sigma2);
            let mut maps = Vec::new();
            for &s in &a.spike {
                maps.push((s, pop_spike_map(s, c, a.sigma2).ok()));
            }
            let value = json!({
                "family": "population", "c": c, "sigma2": a.sigma2,
                "lower_edge": law.lower_edge(), "upper_edge": law.upper_edge(),
                "spike_threshold": threshold, "atom_mass": law.atom_mass(),
                "spike_limits": maps.iter().map(|(s, m)| json!({"spike": s, "limit": m})).collect::<Vec<_>>(),
            });
            ctx.emit(value, || {
                let mut s = format!(
                    "lower edge       {:.6}\nupper edge       {:.6}\nspike threshold  {:.6}",
                    law.lower_edge(),
                    law.upper_edge(),
                    threshold
                );
                for (sp, m) in &maps {
                    s += &format!("\nspike {sp} -> {}", fmt_limit(*m));
                }
                s
            })
        }
        Family::Fisher => {
            let c = need(a.c, "c", a.family)?;
            let y = need(a.y, "y", a.family)?;
            let law = FisherLaw::new(c, y, a.sigma2)?;
            let mut maps = Vec::new();
            for &s in &a.spike {
                maps.push((s, fisher_spike_map(s, &law).ok()));
            }
            let value = json!({
                "family": "fisher", "c": c, "y": y, "sigma2": a.sigma2,
                "spike_threshold": law.spike_threshold(),
                "lower_edge": law.lower_edge(), "upper_edge": law.upper_edge(),
                "spike_limits": maps.iter().map(|(s, m)| json!({"spike": s, "limit": m})).collect::<Vec<_>>(),
            });
            ctx.emit(value, || {
                let mut s = format!(
                    "spike threshold U  {:.6}\nlower edge         {:.6}\nupper edge         {:.6}",
                    law.spike_threshold(),
                    law.lower_edge(),
                    law.upper_edge()
                );
                for (sp, m) in &maps {
                    s += &format!("\nspike {sp} -> {}", fmt_limit(*m));
                }
                s
            })
        }
        Family::Autocov => {
            let y = need(a.y, "y", a.family)?;
            let law = AutocovLaw::new(y, a.sigma2)?;
            let edge = law.t_at_edge()?;
            let mut factors = Vec::new();
            for &th in &a.theta {
                let sig = FactorSignature::ar1(th, a.innovation_var)?;
                factors.push((th, autocov_factor_limit(&sig, &law)?));
            }
            let value = json!({
                "family": "autocov", "y": y, "sigma2": a.sigma2,
                "a1": law.a1(), "b1": law.b1(),
                "t_edge": edge.value, "t_edge_sensitivity": edge.sensitivity,
                "factors": factors.iter().map(|(th, f)| json!({
                    "theta": th, "t1": f.t1, "limit": f.value, "identifiable": f.identifiable
                })).collect::<Vec<_>>(),
            });
            ctx.emit(value, || {
                let mut s = format!(
                    "a1                {:.6}\nb1                {:.6}\nT(b1+)            {:.6} (offset 1e-5: {:.6})",
                    law.a1(),
                    law.b1(),
                    edge.value,
                    edge.sensitivity
                );
                for (th, f) in &factors {
                    let tag = if f.identifiable { "" } else { " (sticks to b1)" };
                    s += &format!("\ntheta {th:>6}: T1 {:.6}  limit {:.6}{tag}", f.t1, f.value);
                }
                s
            })
        }
    }
}

fn fmt_limit(m: Option<f64>) -> String {
    m.map_or_else(|| "subcritical".to_string(), |v| format!("{v:.6}"))
}
