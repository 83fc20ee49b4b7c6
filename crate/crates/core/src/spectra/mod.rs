//! Sample spectra: the three generative model families and ingestion of
//! externally computed eigenvalues.

mod ingest;
mod linalg;
mod model;

use serde::{Deserialize, Serialize};

pub use ingest::{ingest_spectrum, IngestOptions};
pub use linalg::{fisher_eigenvalues, lag1_spectrum, symmetric_eigenvalues_desc};
pub use model::{
    AutocovModel, FisherModel, ModelSpec, NoiseCovariance, PopulationModel, DEFAULT_BURN_IN,
};

use crate::error::{Error, Result};
use crate::rmt::{AutocovLaw, FisherLaw, MpLaw};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Population,
    Fisher,
    Autocov,
}

impl Family {
    /// Power of σ² that normalizes the eigenvalues: σ² for covariance and
    /// Fisher eigenvalues, σ⁴ for eigenvalues of `Σ̂Σ̂ᵀ`.
    pub fn scale_power(self) -> i32 {
        match self {
            Family::Population | Family::Fisher => 1,
            Family::Autocov => 2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Family::Population => "population",
            Family::Fisher => "fisher",
            Family::Autocov => "autocov",
        }
    }
}

impl std::str::FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "population" => Ok(Family::Population),
            "fisher" => Ok(Family::Fisher),
            "autocov" => Ok(Family::Autocov),
            other => Err(Error::config(format!(
                "unknown family '{other}' (expected population, fisher or autocov)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Simulated,
    Ingested,
}

/// Descending sample eigenvalues with the dimensions needed to normalize
/// them and to locate the bulk edge.
///
/// `n` is the sample size driving the matrix: observations for population
/// and Fisher signal samples, `T` for auto-covariance. `t` is the noise
/// sample size of a Fisher matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Spectrum {
    pub values: Vec<f64>,
    pub p: usize,
    pub n: usize,
    pub t: Option<usize>,
    pub family: Family,
    pub scale_power: i32,
    pub provenance: Provenance,
}

impl Spectrum {
    pub fn new(
        values: Vec<f64>,
        n: usize,
        t: Option<usize>,
        family: Family,
        provenance: Provenance,
    ) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("spectrum contains non-finite values".into()));
        }
        if values.windows(2).any(|w| w[0] < w[1]) {
            return Err(Error::config("spectrum must be sorted in descending order"));
        }
        if family == Family::Fisher && t.is_none() {
            return Err(Error::config("a Fisher spectrum needs the noise sample size T"));
        }
        Ok(Self {
            p: values.len(),
            values,
            n,
            t,
            family,
            scale_power: family.scale_power(),
            provenance,
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// `σ^(2·scale_power)`.
    pub fn normalizer(&self, sigma2: f64) -> f64 {
        sigma2.powi(self.scale_power)
    }

    pub fn normalized(&self, sigma2: f64) -> Vec<f64> {
        let s = self.normalizer(sigma2);
        self.values.iter().map(|v| v / s).collect()
    }

    /// Right edge of the noise bulk on the normalized scale: `(1 + √(p/n))²`
    /// for covariance, the eigenvalue-scale Fisher edge, or `b₁(p/T)`.
    pub fn bulk_edge(&self) -> Result<f64> {
        let p = self.p as f64;
        match self.family {
            Family::Population => Ok(MpLaw::new(p / self.n as f64, 1.0)?.upper_edge()),
            Family::Fisher => {
                let t = self.t.ok_or_else(|| Error::config("Fisher spectrum without T"))?;
                Ok(FisherLaw::new(p / self.n as f64, p / t as f64, 1.0)?.upper_edge())
            }
            Family::Autocov => Ok(AutocovLaw::new(p / self.n as f64, 1.0)?.b1()),
        }
    }

    /// 64-bit FNV-1a digest of the eigenvalue bit patterns.
    pub fn digest(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for v in &self.values {
            for b in v.to_bits().to_le_bytes() {
                h ^= b as u64;
                h = h.wrapping_mul(0x0000_0100_0000_01b3);
            }
        }
        h
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_unsorted_and_nonfinite() {
        assert!(Spectrum::new(vec![1.0, 2.0], 10, None, Family::Population, Provenance::Ingested).is_err());
        assert!(Spectrum::new(vec![f64::NAN, 1.0], 10, None, Family::Population, Provenance::Ingested).is_err());
        assert!(Spectrum::new(vec![2.0, 1.0], 10, None, Family::Fisher, Provenance::Ingested).is_err());
    }

    #[test]
    fn bulk_edges() {
        let s = Spectrum::new(vec![1.0; 50], 200, None, Family::Population, Provenance::Simulated).unwrap();
        assert!((s.bulk_edge().unwrap() - 2.25).abs() < 1e-12);
        let a = Spectrum::new(vec![1.0; 300], 600, None, Family::Autocov, Provenance::Simulated).unwrap();
        assert!((a.bulk_edge().unwrap() - 2.7725).abs() < 1e-4);
        assert_eq!(a.normalizer(2.0), 4.0);
    }
}
