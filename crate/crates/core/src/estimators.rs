//! Order-determination criteria.
//!
//! All ratio-based criteria work on eigenvalues normalized by `σ̃`, which is
//! `σ²` for covariance and Fisher spectra and `σ⁴` for auto-covariance ones
//! (see [`Spectrum::scale_power`]).

use serde::{Deserialize, Serialize};

use crate::calibration::estimate_sigma2;
use crate::error::{Error, Result};
use crate::spectra::{Family, Spectrum};

pub const DEFAULT_TAU: f64 = 0.5;
pub const DEFAULT_FISHER_TAU: f64 = 0.8;
pub const DEFAULT_L: usize = 20;
pub const DEFAULT_K: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Vacle,
    Tvacle,
    Py,
    Lwy,
    Wy,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Vacle => "vacle",
            Method::Tvacle => "tvacle",
            Method::Py => "py",
            Method::Lwy => "lwy",
            Method::Wy => "wy",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "vacle" => Ok(Method::Vacle),
            "tvacle" => Ok(Method::Tvacle),
            "py" => Ok(Method::Py),
            "lwy" => Ok(Method::Lwy),
            "wy" => Ok(Method::Wy),
            other => Err(Error::config(format!(
                "unknown method '{other}' (expected vacle, tvacle, py, lwy or wy)"
            ))),
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sigma2Mode {
    Known(f64),
    /// One-step quantile estimator; population spectra only.
    Estimated,
}

impl Default for Sigma2Mode {
    fn default() -> Self {
        Sigma2Mode::Known(1.0)
    }
}

/// Settings shared by VACLE and TVACLE. `edge` and `kappa` default to the
/// family's bulk edge and `log log p · p^(−2/3)` when left unset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorConfig {
    pub tau: f64,
    pub l: usize,
    pub c_n: f64,
    pub sigma2: Sigma2Mode,
    pub edge: Option<f64>,
    pub kappa: Option<f64>,
    pub k1: f64,
    pub k2: f64,
}

impl EstimatorConfig {
    /// Defaults for a family: `τ = 0.5` (0.8 for Fisher), `L = 20`,
    /// `k₁ = k₂ = 5`, known `σ² = 1`.
    pub fn for_family(family: Family, c_n: f64) -> Self {
        Self {
            tau: if family == Family::Fisher { DEFAULT_FISHER_TAU } else { DEFAULT_TAU },
            l: DEFAULT_L,
            c_n,
            sigma2: Sigma2Mode::default(),
            edge: None,
            kappa: None,
            k1: DEFAULT_K,
            k2: DEFAULT_K,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0 && self.tau < 1.0) {
            return Err(Error::config(format!("tau must lie in (0, 1), got {}", self.tau)));
        }
        if self.l < 3 {
            return Err(Error::config(format!("L must be at least 3, got {}", self.l)));
        }
        if !(self.c_n > 0.0 && self.c_n.is_finite()) {
            return Err(Error::config(format!("ridge c_n must be positive, got {}", self.c_n)));
        }
        if let Some(k) = self.kappa {
            if !(k > 0.0 && k.is_finite()) {
                return Err(Error::config(format!("kappa must be positive, got {k}")));
            }
        }
        if !(self.k1 >= 0.0 && self.k2 >= 0.0 && self.k1.is_finite() && self.k2.is_finite()) {
            return Err(Error::config("k1 and k2 must be nonnegative"));
        }
        if let Sigma2Mode::Known(s) = self.sigma2 {
            if !(s > 0.0 && s.is_finite()) {
                return Err(Error::config(format!("sigma2 must be positive, got {s}")));
            }
        }
        Ok(())
    }
}

/// Gaps, ratios and the selected index of one ratio criterion run.
/// `deltas[i]` is `δ_{i+1}` and `ratios[i]` is `r_{i+1}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioTrace {
    pub deltas: Vec<f64>,
    pub ratios: Vec<f64>,
    pub tau: f64,
    pub c_n: f64,
    pub q_hat: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub method: Method,
    pub q_hat: usize,
    /// The stopping rule never fired within the search bound; `q_hat = L`.
    pub exhausted: bool,
    pub sigma2: Option<f64>,
    pub trace: Option<RatioTrace>,
}

/// The piecewise-quadratic map: flat far below `e − κ`, identity on
/// `[e − κ, e + κ)`, steepening above. `k = 0` makes a side the identity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Transform {
    pub e: f64,
    pub kappa: f64,
    pub k1: f64,
    pub k2: f64,
}

impl Transform {
    pub fn left(&self) -> f64 {
        self.e - self.kappa
    }

    pub fn right(&self) -> f64 {
        self.e + self.kappa
    }

    pub fn apply(&self, x: f64) -> f64 {
        fn_transform(x, self.e, self.kappa, self.k1, self.k2)
    }

    pub fn derivative(&self, x: f64) -> f64 {
        let (l, r) = (self.left(), self.right());
        if x < l {
            if self.k1 == 0.0 {
                1.0
            } else if x < l - 1.0 / self.k1 {
                0.0
            } else {
                // Rounds to a tiny negative at the outer knot otherwise.
                (1.0 + self.k1 * (x - l)).max(0.0)
            }
        } else if x < r || self.k2 == 0.0 {
            1.0
        } else {
            1.0 + self.k2 * (x - r)
        }
    }
}

pub fn fn_transform(x: f64, e: f64, kappa: f64, k1: f64, k2: f64) -> f64 {
    let (l, r) = (e - kappa, e + kappa);
    if x < l {
        if k1 == 0.0 {
            x
        } else if x < l - 1.0 / k1 {
            l - 0.5 / k1
        } else {
            x + 0.5 * k1 * (x - l) * (x - l)
        }
    } else if x < r || k2 == 0.0 {
        x
    } else {
        x + 0.5 * k2 * (x - r) * (x - r)
    }
}

/// `log log p · p^(−2/3)`, the default half-width of the identity window
/// and the default WY margin.
pub fn default_kappa(p: usize) -> f64 {
    let p = p as f64;
    p.ln().ln() * p.powf(-2.0 / 3.0)
}

fn check_search_bound(spec: &Spectrum, l: usize) -> Result<()> {
    if l > spec.len() {
        return Err(Error::config(format!(
            "L + 1 exceeds p: the search bound L = {l} needs at least L eigenvalues, got p = {}",
            spec.len()
        )));
    }
    Ok(())
}

fn resolve_sigma2(spec: &Spectrum, mode: Sigma2Mode) -> Result<f64> {
    match mode {
        Sigma2Mode::Known(s) => Ok(s),
        Sigma2Mode::Estimated => {
            if spec.family != Family::Population {
                return Err(Error::config(format!(
                    "sigma2 estimation is only available for population spectra, not {}",
                    spec.family.name()
                )));
            }
            estimate_sigma2(spec, spec.p as f64 / spec.n as f64)
        }
    }
}

fn trace_from(z: &[f64], tau: f64, c_n: f64) -> RatioTrace {
    let deltas: Vec<f64> = z.windows(2).map(|w| w[0] - w[1]).collect();
    let ratios: Vec<f64> = deltas.windows(2).map(|d| (d[1] + c_n) / (d[0] + c_n)).collect();
    let q_hat = ratios.iter().rposition(|&r| r <= tau).map_or(0, |i| i + 1);
    RatioTrace { deltas, ratios, tau, c_n, q_hat }
}

/// Ridge ratios `(δ_{i+1} + c_n)/(δ_i + c_n)` for `i = 1..L−2` of the
/// normalized spectrum, with `q_hat` set by the `τ` rule.
pub fn ridge_ratios(spec: &Spectrum, sigma2: f64, cfg: &EstimatorConfig) -> Result<RatioTrace> {
    cfg.validate()?;
    check_search_bound(spec, cfg.l)?;
    let s = spec.normalizer(sigma2);
    let z: Vec<f64> = spec.values[..cfg.l].iter().map(|v| v / s).collect();
    Ok(trace_from(&z, cfg.tau, cfg.c_n))
}

/// Largest `i ≤ L − 2` with `r_i ≤ τ`, or 0 when no ratio is that small.
pub fn vacle(spec: &Spectrum, cfg: &EstimatorConfig) -> Result<Estimate> {
    cfg.validate()?;
    let sigma2 = resolve_sigma2(spec, cfg.sigma2)?;
    let trace = ridge_ratios(spec, sigma2, cfg)?;
    Ok(Estimate {
        method: Method::Vacle,
        q_hat: trace.q_hat,
        exhausted: false,
        sigma2: Some(sigma2),
        trace: Some(trace),
    })
}

/// The transform used by [`tvacle`] for this spectrum and configuration.
pub fn transform_for(spec: &Spectrum, cfg: &EstimatorConfig) -> Result<Transform> {
    let e = match cfg.edge {
        Some(e) => e,
        None => spec.bulk_edge()?,
    };
    Ok(Transform {
        e,
        kappa: cfg.kappa.unwrap_or_else(|| default_kappa(spec.len())),
        k1: cfg.k1,
        k2: cfg.k2,
    })
}

/// VACLE on gaps of the transformed normalized eigenvalues.
pub fn tvacle(spec: &Spectrum, cfg: &EstimatorConfig) -> Result<Estimate> {
    cfg.validate()?;
    check_search_bound(spec, cfg.l)?;
    let sigma2 = resolve_sigma2(spec, cfg.sigma2)?;
    let f = transform_for(spec, cfg)?;
    let s = spec.normalizer(sigma2);
    let z: Vec<f64> = spec.values[..cfg.l].iter().map(|v| f.apply(v / s)).collect();
    let trace = trace_from(&z, cfg.tau, cfg.c_n);
    Ok(Estimate {
        method: Method::Tvacle,
        q_hat: trace.q_hat,
        exhausted: false,
        sigma2: Some(sigma2),
        trace: Some(trace),
    })
}

/// Where the PY scan starts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PyIndexing {
    /// `i = 0, 1, …`: a spectrum with no separated eigenvalue yields 0.
    #[default]
    ZeroBased,
    /// `i = 1, 2, …`: never returns 0.
    OneBased,
}

/// `C · n^(−2/3) · √(2 log log n)`.
pub fn py_threshold(c_const: f64, n: usize) -> Result<f64> {
    if n < 3 {
        return Err(Error::config(format!("PY needs n >= 3, got {n}")));
    }
    let n = n as f64;
    Ok(c_const * n.powf(-2.0 / 3.0) * (2.0 * n.ln().ln()).sqrt())
}

/// First `i` followed by two normalized gaps below `d_n`.
pub fn py_estimator(
    spec: &Spectrum,
    sigma2: f64,
    c_const: f64,
    l: usize,
    indexing: PyIndexing,
) -> Result<Estimate> {
    let d_n = py_threshold(c_const, spec.n)?;
    Ok(py_with_threshold(spec, sigma2, d_n, l, indexing))
}

pub fn py_with_threshold(
    spec: &Spectrum,
    sigma2: f64,
    d_n: f64,
    l: usize,
    indexing: PyIndexing,
) -> Estimate {
    let s = spec.normalizer(sigma2);
    let v = &spec.values;
    // δ_j on the normalized scale, 1-based; None past the end of the spectrum.
    let delta = |j: usize| (j < v.len()).then(|| (v[j - 1] - v[j]) / s);
    let start = match indexing {
        PyIndexing::ZeroBased => 0,
        PyIndexing::OneBased => 1,
    };
    let mut found = None;
    for i in start..=l {
        match (delta(i + 1), delta(i + 2)) {
            (Some(a), Some(b)) => {
                if a < d_n && b < d_n {
                    found = Some(i);
                    break;
                }
            }
            _ => break,
        }
    }
    Estimate {
        method: Method::Py,
        q_hat: found.unwrap_or(l),
        exhausted: found.is_none(),
        sigma2: Some(sigma2),
        trace: None,
    }
}

/// `min{i ≥ 1 : λ_{i+1}/λ_i > 1 − d and λ_{i+2}/λ_{i+1} > 1 − d} − 1`,
/// scanning `i ≤ L`. Ratios of raw eigenvalues, so no `σ²` is needed.
pub fn lwy_estimator(spec: &Spectrum, d_t: f64, l: usize) -> Result<Estimate> {
    if !(d_t > 0.0 && d_t < 1.0) {
        return Err(Error::config(format!("d_T must lie in (0, 1), got {d_t}")));
    }
    if spec.len() < 3 {
        return Err(Error::config("LWY needs at least 3 eigenvalues"));
    }
    let v = &spec.values;
    let ratio = |i: usize| {
        let (num, den) = (v[i], v[i - 1]);
        if den == 0.0 {
            1.0
        } else {
            num / den
        }
    };
    let cut = 1.0 - d_t;
    let mut found = None;
    for i in 1..=l {
        if i + 2 > v.len() {
            break;
        }
        if ratio(i) > cut && ratio(i + 1) > cut {
            found = Some(i - 1);
            break;
        }
    }
    Ok(Estimate {
        method: Method::Lwy,
        q_hat: found.unwrap_or(l),
        exhausted: found.is_none(),
        sigma2: None,
        trace: None,
    })
}

/// Number of normalized eigenvalues at or above `edge + d_n`, capped at `L`.
pub fn wy_estimator(spec: &Spectrum, sigma2: f64, edge: f64, d_n: f64, l: usize) -> Result<Estimate> {
    if !(d_n > 0.0) {
        return Err(Error::config(format!("WY margin d_n must be positive, got {d_n}")));
    }
    let s = spec.normalizer(sigma2);
    let count = spec.values.iter().take_while(|&&v| v / s >= edge + d_n).count();
    Ok(Estimate {
        method: Method::Wy,
        q_hat: count.min(l),
        exhausted: count > l,
        sigma2: Some(sigma2),
        trace: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectra::Provenance;

    fn spectrum(values: &[f64], family: Family) -> Spectrum {
        let t = (family == Family::Fisher).then_some(1000);
        Spectrum::new(values.to_vec(), 100, t, family, Provenance::Ingested).unwrap()
    }

    fn cfg(c_n: f64, l: usize) -> EstimatorConfig {
        EstimatorConfig { l, ..EstimatorConfig::for_family(Family::Population, c_n) }
    }

    #[test]
    fn hand_computed_ratios() {
        let s = spectrum(&[9.0, 5.0, 1.2, 1.1, 1.05, 1.0], Family::Population);
        let t = ridge_ratios(&s, 1.0, &cfg(0.1, 6)).unwrap();
        let want = [3.9 / 4.1, 0.2 / 3.9, 0.75, 1.0];
        assert_eq!(t.ratios.len(), 4);
        for (g, w) in t.ratios.iter().zip(want) {
            assert!((g - w).abs() < 1e-12, "{:?}", t.ratios);
        }
        assert!((t.ratios[0] - 0.951).abs() < 1e-3 && (t.ratios[1] - 0.0513).abs() < 1e-4);
        assert_eq!(vacle(&s, &cfg(0.1, 6)).unwrap().q_hat, 2);
    }

    #[test]
    fn flat_spectrum_gives_unit_ratios_and_zero() {
        let s = spectrum(&[1.0; 8], Family::Population);
        let e = vacle(&s, &cfg(0.01, 8)).unwrap();
        assert!(e.trace.unwrap().ratios.iter().all(|&r| r == 1.0));
        assert_eq!(e.q_hat, 0);
    }

    #[test]
    fn search_bound_beyond_p_is_rejected() {
        let s = spectrum(&[3.0, 2.0, 1.0], Family::Population);
        let err = tvacle(&s, &cfg(0.1, 20)).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
        assert!(err.to_string().contains("L + 1 exceeds p"));
    }

    #[test]
    fn transform_knots() {
        let f = Transform { e: 4.0, kappa: 0.1, k1: 5.0, k2: 5.0 };
        let knot = f.left() - 1.0 / f.k1;
        assert!((f.apply(knot) - (f.left() - 0.1)).abs() < 1e-15);
        assert_eq!(f.apply(4.0), 4.0);
        assert_eq!(f.apply(f.left()), f.left());
        assert_eq!(f.derivative(knot - 1e-9), 0.0);
        assert!(f.derivative(knot).abs() < 1e-12);
        let id = Transform { k1: 0.0, k2: 0.0, ..f };
        for x in [-3.0, 0.0, 3.9, 4.05, 7.0, 100.0] {
            assert_eq!(id.apply(x), x);
        }
    }

    #[test]
    fn py_example() {
        // Normalized gaps (6, 3, 0.001, 0.0005, ...).
        let s = spectrum(&[12.0, 6.0, 3.0, 2.999, 2.9985, 2.998, 2.9975], Family::Population);
        let e = py_with_threshold(&s, 1.0, 0.01, 4, PyIndexing::ZeroBased);
        assert_eq!((e.q_hat, e.exhausted), (2, false));
        let flat = spectrum(&[1.0; 6], Family::Population);
        assert_eq!(py_with_threshold(&flat, 1.0, 0.01, 4, PyIndexing::ZeroBased).q_hat, 0);
        assert_eq!(py_with_threshold(&flat, 1.0, 0.01, 4, PyIndexing::OneBased).q_hat, 1);
        let spread = spectrum(&[64.0, 32.0, 16.0, 8.0, 4.0, 2.0], Family::Population);
        let ex = py_with_threshold(&spread, 1.0, 0.01, 4, PyIndexing::ZeroBased);
        assert_eq!((ex.q_hat, ex.exhausted), (4, true));
        assert!(py_threshold(5.0, 2).is_err());
    }

    #[test]
    fn lwy_examples() {
        let s = spectrum(&[10.0, 5.0, 1.0, 0.99, 0.98], Family::Autocov);
        assert_eq!(lwy_estimator(&s, 0.05, 20).unwrap().q_hat, 2);
        let flat = spectrum(&[2.0; 5], Family::Autocov);
        assert_eq!(lwy_estimator(&flat, 0.05, 20).unwrap().q_hat, 0);
        let zeros = spectrum(&[0.0; 5], Family::Autocov);
        assert_eq!(lwy_estimator(&zeros, 0.05, 20).unwrap().q_hat, 0);
        let geo: Vec<f64> = (0..30).map(|i| 0.9_f64.powi(i)).collect();
        let e = lwy_estimator(&spectrum(&geo, Family::Autocov), 0.05, 20).unwrap();
        assert_eq!((e.q_hat, e.exhausted), (20, true));
    }

    #[test]
    fn wy_counts() {
        let edge = 3.0;
        let d = 0.1;
        let s = spectrum(&[30.0, 20.0, edge + 2.0 * d, edge - d, 1.0], Family::Fisher);
        assert_eq!(wy_estimator(&s, 1.0, edge, d, 20).unwrap().q_hat, 3);
        let low = spectrum(&[2.0, 1.0, 0.5], Family::Fisher);
        assert_eq!(wy_estimator(&low, 1.0, edge, d, 20).unwrap().q_hat, 0);
    }

    #[test]
    fn estimated_sigma2_rejected_outside_population() {
        let s = spectrum(&[5.0, 4.0, 3.0, 2.0, 1.0], Family::Autocov);
        let c = EstimatorConfig { sigma2: Sigma2Mode::Estimated, ..cfg(0.1, 4) };
        assert!(matches!(vacle(&s, &c), Err(Error::Config(_))));
    }

    #[test]
    fn method_round_trip() {
        for m in [Method::Vacle, Method::Tvacle, Method::Py, Method::Lwy, Method::Wy] {
            assert_eq!(m.name().parse::<Method>().unwrap(), m);
        }
        assert!("ladle".parse::<Method>().is_err());
    }
}
