use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::quad;
use crate::error::{Error, Result};

pub(crate) const DENSITY_TOL: f64 = 1e-10;
pub(crate) const CDF_TOL: f64 = 1e-8;

/// Marchenko-Pastur law with aspect ratio `c = p/n` and scale `sigma2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MpLaw {
    pub c: f64,
    pub sigma2: f64,
}

impl MpLaw {
    pub fn new(c: f64, sigma2: f64) -> Result<Self> {
        if !(c > 0.0 && c.is_finite()) {
            return Err(Error::config(format!("aspect ratio c must be positive, got {c}")));
        }
        if !(sigma2 > 0.0 && sigma2.is_finite()) {
            return Err(Error::config(format!("sigma2 must be positive, got {sigma2}")));
        }
        Ok(Self { c, sigma2 })
    }

    /// Lower support edge `σ²(1 − √c)²`.
    pub fn lower_edge(&self) -> f64 {
        self.sigma2 * (1.0 - self.c.sqrt()).powi(2)
    }

    /// Upper support edge `σ²(1 + √c)²`.
    pub fn upper_edge(&self) -> f64 {
        self.sigma2 * (1.0 + self.c.sqrt()).powi(2)
    }

    /// Mass of the atom at 0 (nonzero only when c > 1).
    pub fn atom_mass(&self) -> f64 {
        if self.c > 1.0 {
            1.0 - 1.0 / self.c
        } else {
            0.0
        }
    }

    /// Density of the continuous part; zero outside the open support.
    pub fn density(&self, x: f64) -> f64 {
        let (a, b) = (self.lower_edge(), self.upper_edge());
        if x <= a || x >= b {
            return 0.0;
        }
        ((b - x) * (x - a)).sqrt() / (2.0 * PI * x * self.c * self.sigma2)
    }

    /// Density after the substitution `x = a + (b − a) sin²θ`, including the
    /// Jacobian. Smooth on `[0, π/2]` even though the density has square-root
    /// edges.
    fn substituted(&self, theta: f64) -> f64 {
        let (a, b) = (self.lower_edge(), self.upper_edge());
        let (s, co) = theta.sin_cos();
        let x = a + (b - a) * s * s;
        (b - a).powi(2) * s * s * co * co / (PI * x * self.c * self.sigma2)
    }

    fn theta_of(&self, x: f64) -> f64 {
        let (a, b) = (self.lower_edge(), self.upper_edge());
        ((x - a) / (b - a)).clamp(0.0, 1.0).sqrt().asin()
    }

    /// Mass of the continuous part, by quadrature.
    pub fn continuous_mass(&self) -> Result<f64> {
        quad::integrate(|t| self.substituted(t), 0.0, PI / 2.0, DENSITY_TOL)
    }

    /// Distribution function, including the atom at 0 when c > 1.
    pub fn cdf(&self, x: f64) -> Result<f64> {
        if x < 0.0 {
            return Ok(0.0);
        }
        let atom = self.atom_mass();
        if x <= self.lower_edge() {
            return Ok(atom);
        }
        if x >= self.upper_edge() {
            return Ok(1.0);
        }
        let part = quad::integrate(|t| self.substituted(t), 0.0, self.theta_of(x), CDF_TOL * 1e-2)?;
        Ok((atom + part).min(1.0))
    }

    /// α-quantile `inf{x : F(x) ≥ α}` of this law.
    pub fn quantile(&self, alpha: f64) -> Result<f64> {
        Ok(self.sigma2 * mp_quantile(alpha, self.c)?)
    }
}

/// α-quantile of the unit-scale Marchenko-Pastur law `F_{c,1}`, by bisection
/// over the quadrature CDF.
pub fn mp_quantile(alpha: f64, c: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Domain(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    let law = MpLaw::new(c, 1.0)?;
    let atom = law.atom_mass();
    if alpha <= atom {
        return Err(Error::QuantileInAtom { alpha, mass: atom });
    }
    // Bisect in the substituted angle: the CDF is monotone in θ as well.
    let target = alpha - atom;
    let (mut lo, mut hi) = (0.0_f64, PI / 2.0);
    let mut acc_lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let part = acc_lo
            + quad::integrate(|t| law.substituted(t), lo, mid, CDF_TOL * 1e-4)?;
        if part < target {
            lo = mid;
            acc_lo = part;
        } else {
            hi = mid;
        }
        if (part - target).abs() < 1e-13 {
            lo = mid;
            hi = mid;
            break;
        }
    }
    let theta = 0.5 * (lo + hi);
    let (a, b) = (law.lower_edge(), law.upper_edge());
    Ok(a + (b - a) * theta.sin().powi(2))
}

/// Limit of a supercritical sample eigenvalue, `σ²φ(λ/σ²)` with
/// `φ(x) = x + cx/(x − 1)`.
pub fn pop_spike_map(lambda: f64, c: f64, sigma2: f64) -> Result<f64> {
    let threshold = pop_threshold(c, sigma2);
    if !(lambda > threshold) {
        return Err(Error::SubcriticalSpike { value: lambda, threshold });
    }
    let x = lambda / sigma2;
    Ok(sigma2 * (x + c * x / (x - 1.0)))
}

/// Phase-transition threshold `σ²(1 + √c)` for population spikes.
pub fn pop_threshold(c: f64, sigma2: f64) -> f64 {
    sigma2 * (1.0 + c.sqrt())
}

/// Number of spikes strictly above the phase-transition threshold.
pub fn pop_identifiable_count(spikes: &[f64], c: f64, sigma2: f64) -> usize {
    let threshold = pop_threshold(c, sigma2);
    spikes.iter().filter(|&&s| s > threshold).count()
}
