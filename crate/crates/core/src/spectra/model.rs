use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::linalg::{fisher_eigenvalues, lag1_spectrum, symmetric_eigenvalues_desc};
use super::{Family, Provenance, Spectrum};
use crate::error::{Error, Result};
use crate::rmt::{
    autocov_identifiable_count, fisher_identifiable_count, pop_identifiable_count, AutocovLaw,
    FactorSignature, FisherLaw,
};

pub const DEFAULT_BURN_IN: usize = 1000;

fn one() -> f64 {
    1.0
}

fn default_burn_in() -> usize {
    DEFAULT_BURN_IN
}

/// Population covariance `diag(spikes, σ², …, σ²)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PopulationModel {
    pub spikes: Vec<f64>,
    #[serde(default = "one")]
    pub sigma2: f64,
    #[serde(default)]
    pub p: usize,
    #[serde(default)]
    pub n: usize,
}

/// Diagonal noise covariance `Σ₂` of a Fisher model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum NoiseCovariance {
    Identity,
    /// `low` on the first `⌊p/2⌋` coordinates, `high` on the rest.
    Split { low: f64, high: f64 },
}

impl Default for NoiseCovariance {
    fn default() -> Self {
        NoiseCovariance::Split { low: 1.0, high: 2.0 }
    }
}

impl NoiseCovariance {
    pub fn diagonal(&self, p: usize) -> Vec<f64> {
        match *self {
            NoiseCovariance::Identity => vec![1.0; p],
            NoiseCovariance::Split { low, high } => {
                (0..p).map(|i| if i < p / 2 { low } else { high }).collect()
            }
        }
    }
}

/// Signal `x = Au + ε` with `u ~ N(0, I)` and `ε ~ N(0, σ²Σ₂)`, noise sample
/// from `N(0, Σ₂)`.
///
/// Column 0 of `A` is `√α₀·e₀`. Later entries come in pairs sharing two
/// coordinates: `√(α/2)(e_r + e_{r+1})` then `√(α/2)(e_r − e_{r+1})`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FisherModel {
    pub alpha: Vec<f64>,
    #[serde(default)]
    pub noise: NoiseCovariance,
    #[serde(default = "one")]
    pub sigma2: f64,
    #[serde(default)]
    pub p: usize,
    #[serde(default)]
    pub n: usize,
    #[serde(default)]
    pub t: usize,
}

/// `y_t = A x_t + ε_t` with `A = (I_q, O)ᵀ`, `ε_t ~ N(0, σ²I_p)` and the
/// diagonal VAR(1) `x_t = Θx_{t−1} + e_t`, `e_t ~ N(0, Γ)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AutocovModel {
    pub theta: Vec<f64>,
    /// Innovation variances, one per factor.
    pub gamma: Vec<f64>,
    #[serde(default = "one")]
    pub sigma2: f64,
    #[serde(default)]
    pub p: usize,
    #[serde(default)]
    pub t: usize,
    #[serde(default = "default_burn_in")]
    pub burn_in: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelSpec {
    SpikedPopulation(PopulationModel),
    SpikedFisher(FisherModel),
    AutocovFactor(AutocovModel),
}

fn check_sigma2(sigma2: f64) -> Result<()> {
    if !(sigma2 > 0.0 && sigma2.is_finite()) {
        return Err(Error::config(format!("sigma2 must be positive, got {sigma2}")));
    }
    Ok(())
}

fn normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.sample(StandardNormal)
}

/// `rows × cols` matrix of iid `N(0, scale[row])` entries, drawn column by
/// column (one observation at a time).
fn gaussian_columns<R: Rng + ?Sized>(scale_sd: &[f64], cols: usize, rng: &mut R) -> DMatrix<f64> {
    let rows = scale_sd.len();
    let mut m = DMatrix::zeros(rows, cols);
    for j in 0..cols {
        for i in 0..rows {
            m[(i, j)] = scale_sd[i] * normal(rng);
        }
    }
    m
}

impl ModelSpec {
    /// Pure-noise model of a family at the given dimensions, `σ² = 1`.
    pub fn pure_noise(family: Family, p: usize, n: usize, t: Option<usize>) -> Result<Self> {
        let need_t = || t.ok_or_else(|| Error::config(format!("{} noise needs T", family.name())));
        Ok(match family {
            Family::Population => ModelSpec::SpikedPopulation(PopulationModel {
                spikes: vec![],
                sigma2: 1.0,
                p,
                n,
            }),
            Family::Fisher => ModelSpec::SpikedFisher(FisherModel {
                alpha: vec![],
                noise: NoiseCovariance::Identity,
                sigma2: 1.0,
                p,
                n,
                t: need_t()?,
            }),
            Family::Autocov => ModelSpec::AutocovFactor(AutocovModel {
                theta: vec![],
                gamma: vec![],
                sigma2: 1.0,
                p,
                t: n,
                burn_in: DEFAULT_BURN_IN,
            }),
        })
    }

    pub fn family(&self) -> Family {
        match self {
            ModelSpec::SpikedPopulation(_) => Family::Population,
            ModelSpec::SpikedFisher(_) => Family::Fisher,
            ModelSpec::AutocovFactor(_) => Family::Autocov,
        }
    }

    pub fn sigma2(&self) -> f64 {
        match self {
            ModelSpec::SpikedPopulation(m) => m.sigma2,
            ModelSpec::SpikedFisher(m) => m.sigma2,
            ModelSpec::AutocovFactor(m) => m.sigma2,
        }
    }

    pub fn p(&self) -> usize {
        match self {
            ModelSpec::SpikedPopulation(m) => m.p,
            ModelSpec::SpikedFisher(m) => m.p,
            ModelSpec::AutocovFactor(m) => m.p,
        }
    }

    /// Sample size behind the spectrum: `n`, or `T` for auto-covariance.
    pub fn n(&self) -> usize {
        match self {
            ModelSpec::SpikedPopulation(m) => m.n,
            ModelSpec::SpikedFisher(m) => m.n,
            ModelSpec::AutocovFactor(m) => m.t,
        }
    }

    /// Noise sample size of a Fisher model.
    pub fn t(&self) -> Option<usize> {
        match self {
            ModelSpec::SpikedFisher(m) => Some(m.t),
            _ => None,
        }
    }

    /// Copy with new dimensions. `n` is ignored for auto-covariance models,
    /// `t` for population models.
    pub fn with_dims(&self, p: usize, n: Option<usize>, t: Option<usize>) -> Result<Self> {
        let missing = |what: &str| Error::config(format!("{} model needs {what}", self.family().name()));
        let mut out = self.clone();
        match &mut out {
            ModelSpec::SpikedPopulation(m) => {
                m.p = p;
                m.n = n.ok_or_else(|| missing("n"))?;
            }
            ModelSpec::SpikedFisher(m) => {
                m.p = p;
                m.n = n.ok_or_else(|| missing("n"))?;
                m.t = t.ok_or_else(|| missing("T"))?;
            }
            ModelSpec::AutocovFactor(m) => {
                m.p = p;
                m.t = t.ok_or_else(|| missing("T"))?;
            }
        }
        Ok(out)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            ModelSpec::SpikedPopulation(m) => {
                check_sigma2(m.sigma2)?;
                if m.n < 2 {
                    return Err(Error::config(format!("n must be at least 2, got {}", m.n)));
                }
                if m.p < m.spikes.len() + 2 {
                    return Err(Error::config(format!(
                        "p = {} is too small for {} spikes",
                        m.p,
                        m.spikes.len()
                    )));
                }
                if m.spikes.windows(2).any(|w| w[0] < w[1]) {
                    return Err(Error::config("spikes must be in descending order"));
                }
                if let Some(s) = m.spikes.iter().find(|&&s| !(s > m.sigma2 && s.is_finite())) {
                    return Err(Error::config(format!(
                        "spike {s} must exceed sigma2 = {}",
                        m.sigma2
                    )));
                }
            }
            ModelSpec::SpikedFisher(m) => {
                check_sigma2(m.sigma2)?;
                if m.n < 2 {
                    return Err(Error::config(format!("n must be at least 2, got {}", m.n)));
                }
                if m.t <= m.p {
                    return Err(Error::config(format!(
                        "T must exceed p for an invertible noise covariance (p = {}, T = {})",
                        m.p, m.t
                    )));
                }
                if fisher_rows(m.alpha.len()) + 2 > m.p {
                    return Err(Error::config(format!(
                        "p = {} is too small for {} loadings",
                        m.p,
                        m.alpha.len()
                    )));
                }
                if let Some(a) = m.alpha.iter().find(|&&a| !(a >= 0.0 && a.is_finite())) {
                    return Err(Error::config(format!("loading strength {a} must be nonnegative")));
                }
                if let NoiseCovariance::Split { low, high } = m.noise {
                    if !(low > 0.0 && high > 0.0 && low.is_finite() && high.is_finite()) {
                        return Err(Error::config("noise covariance must be positive definite"));
                    }
                }
            }
            ModelSpec::AutocovFactor(m) => {
                check_sigma2(m.sigma2)?;
                if m.t < 3 {
                    return Err(Error::config(format!("T must be at least 3, got {}", m.t)));
                }
                if m.theta.len() != m.gamma.len() {
                    return Err(Error::config(format!(
                        "theta has {} entries but gamma has {}",
                        m.theta.len(),
                        m.gamma.len()
                    )));
                }
                if m.p < m.theta.len() + 2 {
                    return Err(Error::config(format!(
                        "p = {} is too small for {} factors",
                        m.p,
                        m.theta.len()
                    )));
                }
                if let Some(th) = m.theta.iter().find(|&&th| !(th.abs() < 1.0)) {
                    return Err(Error::config(format!("theta entries must satisfy |theta| < 1, got {th}")));
                }
                if let Some(g) = m.gamma.iter().find(|&&g| !(g > 0.0 && g.is_finite())) {
                    return Err(Error::config(format!("innovation variances must be positive, got {g}")));
                }
            }
        }
        Ok(())
    }

    /// Population spikes on the scale where the bulk sits at `σ²`: the
    /// eigenvalues of `Σ₁Σ₂⁻¹` for Fisher models. Empty for auto-covariance.
    pub fn population_spikes(&self) -> Result<Vec<f64>> {
        match self {
            ModelSpec::SpikedPopulation(m) => Ok(m.spikes.clone()),
            ModelSpec::SpikedFisher(m) => fisher_population_spikes(m),
            ModelSpec::AutocovFactor(_) => Ok(vec![]),
        }
    }

    /// Largest identifiable order according to the limiting theory.
    pub fn true_order(&self) -> Result<usize> {
        self.validate()?;
        match self {
            ModelSpec::SpikedPopulation(m) => Ok(pop_identifiable_count(
                &m.spikes,
                m.p as f64 / m.n as f64,
                m.sigma2,
            )),
            ModelSpec::SpikedFisher(m) => {
                let law = FisherLaw::new(m.p as f64 / m.n as f64, m.p as f64 / m.t as f64, m.sigma2)?;
                Ok(fisher_identifiable_count(&fisher_population_spikes(m)?, &law))
            }
            ModelSpec::AutocovFactor(m) => {
                let law = AutocovLaw::new(m.p as f64 / m.t as f64, m.sigma2)?;
                let sigs = m
                    .theta
                    .iter()
                    .zip(&m.gamma)
                    .map(|(&th, &g)| FactorSignature::ar1(th, g))
                    .collect::<Result<Vec<_>>>()?;
                autocov_identifiable_count(&sigs, &law)
            }
        }
    }

    pub fn simulate<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Spectrum> {
        self.validate()?;
        match self {
            ModelSpec::SpikedPopulation(m) => simulate_population(m, rng),
            ModelSpec::SpikedFisher(m) => simulate_fisher(m, rng),
            ModelSpec::AutocovFactor(m) => simulate_autocov(m, rng),
        }
    }
}

/// Coordinates touched by the loading matrix.
fn fisher_rows(k: usize) -> usize {
    if k == 0 {
        0
    } else {
        1 + 2 * (k - 1).div_ceil(2)
    }
}

fn fisher_loading(m: &FisherModel) -> DMatrix<f64> {
    let k = m.alpha.len();
    let mut a = DMatrix::zeros(m.p, k);
    for (j, &alpha) in m.alpha.iter().enumerate() {
        if j == 0 {
            a[(0, 0)] = alpha.sqrt();
        } else {
            let r = 1 + 2 * ((j - 1) / 2);
            let s = (alpha / 2.0).sqrt();
            let sign = if (j - 1) % 2 == 0 { 1.0 } else { -1.0 };
            a[(r, j)] = s;
            a[(r + 1, j)] = sign * s;
        }
    }
    a
}

/// `σ² + eig(AᵀΣ₂⁻¹A)`, the nontrivial eigenvalues of `Σ₁Σ₂⁻¹`.
fn fisher_population_spikes(m: &FisherModel) -> Result<Vec<f64>> {
    if m.alpha.is_empty() {
        return Ok(vec![]);
    }
    let a = fisher_loading(m);
    let inv = DVector::from_vec(m.noise.diagonal(m.p).iter().map(|d| 1.0 / d).collect());
    let scaled = DMatrix::from_diagonal(&inv) * &a;
    let gram = a.transpose() * scaled;
    Ok(symmetric_eigenvalues_desc(gram)?
        .into_iter()
        .map(|mu| m.sigma2 + mu.max(0.0))
        .collect())
}

fn simulate_population<R: Rng + ?Sized>(m: &PopulationModel, rng: &mut R) -> Result<Spectrum> {
    let sd: Vec<f64> = (0..m.p)
        .map(|i| m.spikes.get(i).copied().unwrap_or(m.sigma2).sqrt())
        .collect();
    let x = gaussian_columns(&sd, m.n, rng);
    let inv_n = 1.0 / m.n as f64;
    let mut values = if m.p <= m.n {
        symmetric_eigenvalues_desc(&x * x.transpose() * inv_n)?
    } else {
        // The nonzero spectrum of XXᵀ/n is that of the smaller Gram matrix.
        let mut v = symmetric_eigenvalues_desc(x.transpose() * &x * inv_n)?;
        v.resize(m.p, 0.0);
        v
    };
    clamp_roundoff(&mut values);
    Spectrum::new(values, m.n, None, Family::Population, Provenance::Simulated)
}

fn simulate_fisher<R: Rng + ?Sized>(m: &FisherModel, rng: &mut R) -> Result<Spectrum> {
    let diag = m.noise.diagonal(m.p);
    let noise_sd: Vec<f64> = diag.iter().map(|d| (m.sigma2 * d).sqrt()).collect();
    let a = fisher_loading(m);
    let mut x = gaussian_columns(&noise_sd, m.n, rng);
    if !m.alpha.is_empty() {
        let u = gaussian_columns(&vec![1.0; m.alpha.len()], m.n, rng);
        x += &a * u;
    }
    let e = gaussian_columns(&diag.iter().map(|d| d.sqrt()).collect::<Vec<_>>(), m.t, rng);
    let s1 = &x * x.transpose() / m.n as f64;
    let s2 = &e * e.transpose() / m.t as f64;
    let mut values = fisher_eigenvalues(&s1, s2)?;
    clamp_roundoff(&mut values);
    Spectrum::new(values, m.n, Some(m.t), Family::Fisher, Provenance::Simulated)
}

fn simulate_autocov<R: Rng + ?Sized>(m: &AutocovModel, rng: &mut R) -> Result<Spectrum> {
    let q = m.theta.len();
    let gsd: Vec<f64> = m.gamma.iter().map(|g| g.sqrt()).collect();
    let mut factor = vec![0.0; q];
    let step = |factor: &mut Vec<f64>, rng: &mut R| {
        for i in 0..q {
            factor[i] = m.theta[i] * factor[i] + gsd[i] * normal(rng);
        }
    };
    for _ in 0..m.burn_in {
        step(&mut factor, rng);
    }
    let sd = m.sigma2.sqrt();
    let mut y = DMatrix::zeros(m.p, m.t + 1);
    for col in 0..=m.t {
        step(&mut factor, rng);
        for i in 0..m.p {
            let f = if i < q { factor[i] } else { 0.0 };
            y[(i, col)] = f + sd * normal(rng);
        }
    }
    let mut values = lag1_spectrum(&y)?;
    clamp_roundoff(&mut values);
    Spectrum::new(values, m.t, None, Family::Autocov, Provenance::Simulated)
}

/// Eigenvalues of PSD matrices can come back as tiny negatives.
fn clamp_roundoff(values: &mut [f64]) {
    for v in values.iter_mut() {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
}
