use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::marchenko_pastur::{CDF_TOL, DENSITY_TOL};
use super::quad;
use crate::error::{Error, Result};

/// Limiting law of a spiked Fisher matrix `S₁S₂⁻¹`, with `c = p/n` for the
/// signal sample and `y = p/T` for the noise sample.
///
/// Two thresholds are easy to confuse here. [`FisherLaw::spike_threshold`] is
/// `U = σ²γ(1 + h)` on the *population spike* scale, with `h = √(c + y − cy)`
/// and `γ = 1/(1 − y)`; spikes at or below it are not identifiable.
/// [`FisherLaw::upper_edge`] is `σ²((1 + h)/(1 − y))²`, the right edge of the
/// *sample eigenvalue* support, which is where `U` lands under the spike map.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FisherLaw {
    pub c: f64,
    pub y: f64,
    pub sigma2: f64,
}

impl FisherLaw {
    pub fn new(c: f64, y: f64, sigma2: f64) -> Result<Self> {
        if !(c > 0.0 && c.is_finite()) {
            return Err(Error::config(format!("c must be positive, got {c}")));
        }
        if !(y > 0.0 && y < 1.0) {
            return Err(Error::config(format!("y must lie in (0, 1), got {y}")));
        }
        if !(sigma2 > 0.0 && sigma2.is_finite()) {
            return Err(Error::config(format!("sigma2 must be positive, got {sigma2}")));
        }
        Ok(Self { c, y, sigma2 })
    }

    pub fn gamma(&self) -> f64 {
        1.0 / (1.0 - self.y)
    }

    fn h(&self) -> f64 {
        (self.c + self.y - self.c * self.y).sqrt()
    }

    pub fn spike_threshold(&self) -> f64 {
        self.sigma2 * self.gamma() * (1.0 + self.h())
    }

    pub fn lower_edge(&self) -> f64 {
        self.sigma2 * ((1.0 - self.h()) / (1.0 - self.y)).powi(2)
    }

    pub fn upper_edge(&self) -> f64 {
        self.sigma2 * ((1.0 + self.h()) / (1.0 - self.y)).powi(2)
    }

    pub fn atom_mass(&self) -> f64 {
        if self.c > 1.0 {
            1.0 - 1.0 / self.c
        } else {
            0.0
        }
    }

    /// Density of the continuous part on the eigenvalue scale.
    pub fn density(&self, x: f64) -> f64 {
        let (a, b) = (self.lower_edge(), self.upper_edge());
        if x <= a || x >= b {
            return 0.0;
        }
        let u = x / self.sigma2;
        let (a1, b1) = (a / self.sigma2, b / self.sigma2);
        (1.0 - self.y) * ((b1 - u) * (u - a1)).sqrt()
            / (2.0 * PI * u * (self.c + u * self.y))
            / self.sigma2
    }

    fn substituted(&self, theta: f64) -> f64 {
        let (a, b) = (self.lower_edge(), self.upper_edge());
        let (s, co) = theta.sin_cos();
        let x = a + (b - a) * s * s;
        let u = x / self.sigma2;
        // sqrt((b−x)(x−a)) · dx/dθ = 2 (b−a)² sin²θ cos²θ
        (1.0 - self.y) * (b - a).powi(2) * s * s * co * co
            / (PI * u * (self.c + u * self.y))
            / (self.sigma2 * self.sigma2)
    }

    pub fn continuous_mass(&self) -> Result<f64> {
        quad::integrate(|t| self.substituted(t), 0.0, PI / 2.0, DENSITY_TOL)
    }

    pub fn cdf(&self, x: f64) -> Result<f64> {
        if x < 0.0 {
            return Ok(0.0);
        }
        let (a, b) = (self.lower_edge(), self.upper_edge());
        if x <= a {
            return Ok(self.atom_mass());
        }
        if x >= b {
            return Ok(1.0);
        }
        let theta = ((x - a) / (b - a)).sqrt().asin();
        let part = quad::integrate(|t| self.substituted(t), 0.0, theta, CDF_TOL * 1e-2)?;
        Ok((self.atom_mass() + part).min(1.0))
    }
}

/// Limit `σ²ψ(λ/σ²)` of a supercritical Fisher eigenvalue, with
/// `ψ(x) = γx(x − 1 + c)/(x − γ)`.
pub fn fisher_spike_map(lambda: f64, law: &FisherLaw) -> Result<f64> {
    let threshold = law.spike_threshold();
    if !(lambda > threshold) {
        return Err(Error::SubcriticalSpike { value: lambda, threshold });
    }
    let g = law.gamma();
    let x = lambda / law.sigma2;
    Ok(law.sigma2 * g * x * (x - 1.0 + law.c) / (x - g))
}

pub fn fisher_identifiable_count(spikes: &[f64], law: &FisherLaw) -> usize {
    let threshold = law.spike_threshold();
    spikes.iter().filter(|&&s| s > threshold).count()
}
