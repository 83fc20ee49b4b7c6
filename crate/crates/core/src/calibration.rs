//! Pure-noise calibration of the ridges and the LWY cutoff, the one-step
//! quantile estimator of `σ²`, and the PY constant table.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::rmt::mp_quantile;
use crate::rng::{domain, domain_with, stream};
use crate::spectra::{Family, ModelSpec, Spectrum};

pub const SCHEMA: u32 = 1;
pub const DEFAULT_REPS: usize = 500;
pub const RIDGE_FLOOR: f64 = 1e-8;
/// Fraction of noise runs in which the LWY rule must stop at `i = 1`.
pub const LWY_COVERAGE: f64 = 0.99;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RidgeKind {
    C1,
    C2,
    C3a,
    C3b,
}

impl RidgeKind {
    pub const ALL: [RidgeKind; 4] = [RidgeKind::C1, RidgeKind::C2, RidgeKind::C3a, RidgeKind::C3b];

    pub fn name(self) -> &'static str {
        match self {
            RidgeKind::C1 => "c1",
            RidgeKind::C2 => "c2",
            RidgeKind::C3a => "c3a",
            RidgeKind::C3b => "c3b",
        }
    }
}

impl std::str::FromStr for RidgeKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        RidgeKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::config(format!("unknown ridge '{s}' (expected c1, c2, c3a or c3b)")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ridges {
    pub c1: f64,
    pub c2: f64,
    pub c3a: f64,
    pub c3b: f64,
}

impl Ridges {
    pub fn get(&self, kind: RidgeKind) -> f64 {
        match kind {
            RidgeKind::C1 => self.c1,
            RidgeKind::C2 => self.c2,
            RidgeKind::C3a => self.c3a,
            RidgeKind::C3b => self.c3b,
        }
    }
}

/// Empirical quantiles of the noise top gap `λ₁ − λ₂`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GapQuantiles {
    pub q01: f64,
    pub q05: f64,
    pub q80: f64,
    pub q95: f64,
    pub q99: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CalibrationKey {
    pub family: Family,
    pub p: usize,
    /// Sample size (`T` for auto-covariance).
    pub n: usize,
    /// Fisher noise sample size.
    pub t: Option<usize>,
    pub reps: usize,
    pub seed: u64,
}

impl CalibrationKey {
    pub fn file_name(&self) -> String {
        let t = self.t.map_or_else(|| "-".to_string(), |t| t.to_string());
        format!(
            "{}_p{}_n{}_t{}_r{}_s{}.json",
            self.family.name(),
            self.p,
            self.n,
            t,
            self.reps,
            self.seed
        )
    }

    fn stream_domain(&self) -> u64 {
        let fam = match self.family {
            Family::Population => 1,
            Family::Fisher => 2,
            Family::Autocov => 3,
        };
        domain_with(
            domain::CALIBRATION,
            &[fam, self.p as u64, self.n as u64, self.t.map_or(0, |t| t as u64 + 1)],
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationResult {
    pub schema: u32,
    #[serde(flatten)]
    pub key: CalibrationKey,
    /// Mean of the noise top gap.
    pub mean_gap: f64,
    pub quantiles: GapQuantiles,
    /// Ridges as computed, possibly nonpositive.
    pub raw: Ridges,
    /// Ridges floored at [`RIDGE_FLOOR`]; these are the ones to use.
    pub ridges: Ridges,
    pub clamped: Vec<RidgeKind>,
    /// Smallest LWY cutoff that stops at `i = 1` in at least 99% of the runs.
    pub lwy_d: f64,
}

/// Order statistic at rank `⌈Rα⌉` (1-based) of an ascending sample.
pub fn order_statistic(sorted: &[f64], alpha: f64) -> f64 {
    let r = sorted.len();
    // The small slack keeps products like 500 · 0.95 from rounding up a rank.
    let rank = ((r as f64 * alpha) - 1e-9).ceil().clamp(1.0, r as f64) as usize;
    sorted[rank - 1]
}

/// Ridges from the noise gap statistics; `n` is `T` for auto-covariance.
pub fn derive_ridges(mean_gap: f64, q: &GapQuantiles, p: usize, n: usize) -> Ridges {
    let lln = (n as f64).ln().ln();
    let llp = (p as f64).ln().ln();
    let spread = q.q95 - q.q05;
    Ridges {
        c1: lln * spread - mean_gap,
        c2: lln.sqrt() * spread - mean_gap,
        c3a: llp.sqrt() * spread - mean_gap,
        c3b: llp.sqrt() * (q.q80 - q.q05) - mean_gap,
    }
}

/// Assembles a result from per-run noise statistics: the top gap and the
/// LWY statistic `max(1 − λ₂/λ₁, 1 − λ₃/λ₂)`.
pub fn summarize_noise(key: CalibrationKey, gaps: &[f64], lwy_stats: &[f64]) -> Result<CalibrationResult> {
    if gaps.len() < 2 || gaps.len() != lwy_stats.len() {
        return Err(Error::config(format!("calibration needs R >= 2 runs, got {}", gaps.len())));
    }
    let mean_gap = gaps.iter().sum::<f64>() / gaps.len() as f64;
    let mut sorted = gaps.to_vec();
    sorted.sort_by(f64::total_cmp);
    let quantiles = GapQuantiles {
        q01: order_statistic(&sorted, 0.01),
        q05: order_statistic(&sorted, 0.05),
        q80: order_statistic(&sorted, 0.80),
        q95: order_statistic(&sorted, 0.95),
        q99: order_statistic(&sorted, 0.99),
    };
    let raw = derive_ridges(mean_gap, &quantiles, key.p, key.n);
    let mut clamped = Vec::new();
    let mut floor = |kind: RidgeKind, v: f64| {
        if v > RIDGE_FLOOR {
            v
        } else {
            log::warn!("ridge {} = {v:.3e} is not positive; clamped to {RIDGE_FLOOR:e}", kind.name());
            clamped.push(kind);
            RIDGE_FLOOR
        }
    };
    let ridges = Ridges {
        c1: floor(RidgeKind::C1, raw.c1),
        c2: floor(RidgeKind::C2, raw.c2),
        c3a: floor(RidgeKind::C3a, raw.c3a),
        c3b: floor(RidgeKind::C3b, raw.c3b),
    };
    let mut lwy = lwy_stats.to_vec();
    lwy.sort_by(f64::total_cmp);
    let lwy_d = order_statistic(&lwy, LWY_COVERAGE).next_up().clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON);
    Ok(CalibrationResult {
        schema: SCHEMA,
        key,
        mean_gap,
        quantiles,
        raw,
        ridges,
        clamped,
        lwy_d,
    })
}

fn lwy_statistic(values: &[f64]) -> f64 {
    let ratio = |num: f64, den: f64| if den == 0.0 { 1.0 } else { num / den };
    (1.0 - ratio(values[1], values[0])).max(1.0 - ratio(values[2], values[1]))
}

/// Runs `R` pure-noise simulations of the family at the given dimensions.
/// Run `i` uses its own random stream, so the result does not depend on the
/// execution mode or the number of threads.
pub fn calibrate_ridge(key: &CalibrationKey, exec: Execution) -> Result<CalibrationResult> {
    if key.reps < 2 {
        return Err(Error::config(format!("calibration needs R >= 2 replications, got {}", key.reps)));
    }
    if key.n < 3 {
        return Err(Error::config(format!("calibration needs n >= 3, got {}", key.n)));
    }
    if key.p < 3 {
        return Err(Error::config(format!("calibration needs p >= 3, got {}", key.p)));
    }
    let model = ModelSpec::pure_noise(key.family, key.p, key.n, key.t)?;
    model.validate()?;
    let dom = key.stream_domain();
    let runs = exec.map_indexed(key.reps, |i| -> Result<(f64, f64)> {
        let mut rng = stream(key.seed, dom, i as u64);
        let s = model.simulate(&mut rng)?;
        Ok((s.values[0] - s.values[1], lwy_statistic(&s.values)))
    });
    let mut gaps = Vec::with_capacity(key.reps);
    let mut lwy = Vec::with_capacity(key.reps);
    for r in runs {
        let (g, l) = r?;
        gaps.push(g);
        lwy.push(l);
    }
    summarize_noise(key.clone(), &gaps, &lwy)
}

/// `α = 1 − 1/(2·max(1, c))`, the ESD level read off by [`estimate_sigma2`].
pub fn sigma2_level(c: f64) -> f64 {
    1.0 - 1.0 / (2.0 * c.max(1.0))
}

/// `λ̂_{p−⌊pα⌋} / ξ_{c,1}(α)`: matches an empirical quantile of the spectrum
/// to the unit-scale Marchenko-Pastur quantile.
pub fn estimate_sigma2(spec: &Spectrum, c: f64) -> Result<f64> {
    let p = spec.len();
    if p < 4 {
        return Err(Error::config(format!("sigma2 estimation needs p >= 4, got {p}")));
    }
    let alpha = sigma2_level(c);
    let idx = (p as i64 - (p as f64 * alpha).floor() as i64).clamp(1, p as i64) as usize;
    let xi = spec.values[idx - 1];
    let est = xi / mp_quantile(alpha, c)?;
    if !(est > 0.0 && est.is_finite()) {
        return Err(Error::Numerical(format!("sigma2 estimate {est} is not positive")));
    }
    Ok(est)
}

/// Tabulated PY constants `(c, C)`.
pub const PY_TABLE: [(f64, f64); 3] = [(0.25, 5.5226), (1.0, 6.3424), (2.0, 7.6257)];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PyConstant {
    pub value: f64,
    /// `c` is not a table entry: the value was interpolated (linear in
    /// `log c`) or held flat beyond the table.
    pub interpolated: bool,
}

pub fn py_constant(c: f64) -> Result<PyConstant> {
    if !(c > 0.0 && c.is_finite()) {
        return Err(Error::config(format!("c must be positive, got {c}")));
    }
    if let Some(&(_, v)) = PY_TABLE.iter().find(|(tc, _)| *tc == c) {
        return Ok(PyConstant { value: v, interpolated: false });
    }
    let (first, last) = (PY_TABLE[0], PY_TABLE[PY_TABLE.len() - 1]);
    let value = if c <= first.0 {
        first.1
    } else if c >= last.0 {
        last.1
    } else {
        let w = PY_TABLE.windows(2).find(|w| c < w[1].0).expect("c lies inside the table");
        let (lo, hi) = (w[0], w[1]);
        let t = (c.ln() - lo.0.ln()) / (hi.0.ln() - lo.0.ln());
        lo.1 + t * (hi.1 - lo.1)
    };
    Ok(PyConstant { value, interpolated: true })
}

/// Directory of cached calibration results, one JSON file per key.
#[derive(Debug, Clone)]
pub struct CalibrationCache {
    dir: PathBuf,
}

impl CalibrationCache {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn path_for(&self, key: &CalibrationKey) -> PathBuf {
        self.dir.join(key.file_name())
    }

    /// `None` when there is no entry or the entry has another schema version.
    pub fn load(&self, key: &CalibrationKey) -> Result<Option<CalibrationResult>> {
        let path = self.path_for(key);
        let text = match fs::read_to_string(&path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
            Err(e) => return Err(e.into()),
        };
        let value: serde_json::Value = serde_json::from_str(&text)?;
        if value.get("schema").and_then(|s| s.as_u64()) != Some(SCHEMA as u64) {
            log::warn!("ignoring {}: unsupported schema", path.display());
            return Ok(None);
        }
        let result: CalibrationResult = serde_json::from_value(value)?;
        Ok((result.key == *key).then_some(result))
    }

    /// Writes to a temporary file in the cache directory and renames it into
    /// place, so readers never see a partial entry.
    pub fn store(&self, result: &CalibrationResult) -> Result<PathBuf> {
        fs::create_dir_all(&self.dir)?;
        let path = self.path_for(&result.key);
        let tmp = self.dir.join(format!(
            ".{}.{}.tmp",
            result.key.file_name(),
            std::process::id()
        ));
        fs::write(&tmp, serde_json::to_string_pretty(result)? + "\n")?;
        fs::rename(&tmp, &path)?;
        Ok(path)
    }

    /// Cached result for `key`, computing and storing it on a miss or when
    /// `force` is set. The flag reports whether the cache was hit.
    pub fn get_or_compute(
        &self,
        key: &CalibrationKey,
        force: bool,
        exec: Execution,
    ) -> Result<(CalibrationResult, bool)> {
        if !force {
            if let Some(hit) = self.load(key)? {
                return Ok((hit, true));
            }
        }
        let result = calibrate_ridge(key, exec)?;
        self.store(&result)?;
        Ok((result, false))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectra::Provenance;

    fn key(reps: usize) -> CalibrationKey {
        CalibrationKey { family: Family::Population, p: 40, n: 60, t: None, reps, seed: 3 }
    }

    #[test]
    fn order_statistic_ranks() {
        let s: Vec<f64> = (1..=500).map(f64::from).collect();
        assert_eq!(order_statistic(&s, 0.95), 475.0);
        assert_eq!(order_statistic(&s, 0.05), 25.0);
        assert_eq!(order_statistic(&s, 0.01), 5.0);
        assert_eq!(order_statistic(&[1.0, 2.0], 0.01), 1.0);
        assert_eq!(order_statistic(&[1.0, 2.0], 0.99), 2.0);
    }

    #[test]
    fn identical_gaps_clamp_every_ridge() {
        let r = summarize_noise(key(2), &[0.3, 0.3], &[0.1, 0.1]).unwrap();
        assert_eq!(r.quantiles.q01, 0.3);
        assert_eq!(r.quantiles.q99, 0.3);
        assert_eq!(r.raw.c1, -0.3);
        assert_eq!(r.ridges.c1, RIDGE_FLOOR);
        assert_eq!(r.clamped, RidgeKind::ALL.to_vec());
        assert!(r.lwy_d > 0.1);
    }

    #[test]
    fn too_few_reps_is_config_error() {
        assert!(matches!(calibrate_ridge(&key(1), Execution::Sequential), Err(Error::Config(_))));
    }

    #[test]
    fn calibration_is_deterministic_across_modes() {
        let a = calibrate_ridge(&key(24), Execution::Sequential).unwrap();
        let b = calibrate_ridge(&key(24), Execution::Parallel).unwrap();
        assert_eq!(a, b);
        assert!(a.quantiles.q01 <= a.quantiles.q05 && a.quantiles.q95 <= a.quantiles.q99);
    }

    #[test]
    fn lwy_cutoff_covers_the_noise_runs() {
        let stats: Vec<f64> = (0..200).map(|i| i as f64 / 1000.0).collect();
        let r = summarize_noise(key(200), &vec![0.1; 200], &stats).unwrap();
        let fired = stats.iter().filter(|&&s| s < r.lwy_d).count();
        assert!(fired as f64 >= 0.99 * 200.0);
        assert!(stats.iter().filter(|&&s| s < r.lwy_d - 1e-12).count() < 198);
    }

    #[test]
    fn py_constant_table_and_interpolation() {
        for (c, v) in PY_TABLE {
            let k = py_constant(c).unwrap();
            assert_eq!((k.value, k.interpolated), (v, false));
        }
        let mid = py_constant(0.5).unwrap();
        assert!(mid.interpolated && mid.value > 5.5226 && mid.value < 6.3424);
        // Halfway between 0.25 and 1 in log scale.
        assert!((mid.value - 0.5 * (5.5226 + 6.3424)).abs() < 1e-12);
        assert_eq!(py_constant(0.1).unwrap().value, 5.5226);
        assert_eq!(py_constant(8.0).unwrap().value, 7.6257);
        assert!(py_constant(0.0).is_err());
    }

    #[test]
    fn sigma2_level_rule() {
        assert_eq!(sigma2_level(0.25), 0.5);
        assert_eq!(sigma2_level(2.0), 0.75);
        // c = 2, p = 8: index 8 − ⌊6⌋ = 2.
        let s = Spectrum::new(
            vec![8.0, 7.0, 6.0, 5.0, 4.0, 3.0, 2.0, 1.0],
            4,
            None,
            Family::Population,
            Provenance::Ingested,
        )
        .unwrap();
        let est = estimate_sigma2(&s, 2.0).unwrap();
        assert_eq!(est, 7.0 / mp_quantile(0.75, 2.0).unwrap());
    }

    #[test]
    fn cache_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let cache = CalibrationCache::new(dir.path());
        let k = key(8);
        let (first, hit) = cache.get_or_compute(&k, false, Execution::Sequential).unwrap();
        assert!(!hit);
        let (second, hit) = cache.get_or_compute(&k, false, Execution::Sequential).unwrap();
        assert!(hit);
        assert_eq!(first, second);
        let text = fs::read_to_string(cache.path_for(&k)).unwrap();
        assert!(text.contains("\"schema\": 1"));
        let back: CalibrationResult = serde_json::from_str(&text).unwrap();
        assert_eq!(back, first);
    }
}
