//! Limiting spectrum of `M̂ = Σ̂Σ̂ᵀ/σ⁴` for the lag-1 sample auto-covariance
//! `Σ̂` of white noise, and the spike limits of factors riding on it.
//!
//! The Stieltjes transform `S` solves
//! `z²S³ − 2z(y − 1)S² + ((y − 1)² − z)S − 1 = 0`. This `S` belongs to the
//! `T × T` companion `Σ̂ᵀΣ̂`, whose nonzero eigenvalues coincide with those of
//! `Σ̂Σ̂ᵀ` but are counted out of `T` instead of `p`. Hence `Im S/π` carries
//! mass `y` times the p-normalized continuous mass, and the T-transform that
//! locates factor limits is the one of the companion measure,
//! `T(z) = −1 − zS(z)`.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::marchenko_pastur::DENSITY_TOL;
use super::quad;
use crate::error::{Error, Result};

/// Imaginary offset used to read the boundary value of `S` on the real axis.
const ETA: f64 = 1e-9;
/// Relative offset above `b₁` standing in for the limit `T(b₁+)`.
pub const EDGE_OFFSET: f64 = 1e-6;
pub const EDGE_OFFSET_SENSITIVITY: f64 = 1e-5;
const T_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AutocovLaw {
    /// `p/T`.
    pub y: f64,
    pub sigma2: f64,
}

/// Variance and lag-1 auto-covariance of one common factor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FactorSignature {
    pub gamma0: f64,
    pub gamma1: f64,
}

impl FactorSignature {
    pub fn new(gamma0: f64, gamma1: f64) -> Result<Self> {
        if !(gamma0 > 0.0) || !(gamma1.abs() < gamma0) {
            return Err(Error::DegenerateSignature(format!(
                "need gamma0 > 0 and |gamma1| < gamma0, got ({gamma0}, {gamma1})"
            )));
        }
        Ok(Self { gamma0, gamma1 })
    }

    /// Stationary AR(1) factor `x_t = θx_{t−1} + e_t` with `Var e_t = v`.
    pub fn ar1(theta: f64, innovation_var: f64) -> Result<Self> {
        if !(theta.abs() < 1.0) {
            return Err(Error::config(format!("AR(1) coefficient must satisfy |theta| < 1, got {theta}")));
        }
        let gamma0 = innovation_var / (1.0 - theta * theta);
        Self::new(gamma0, theta * gamma0)
    }
}

/// Outcome of locating a factor's eigenvalue limit on the `M̂/σ⁴` scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FactorLimit {
    /// The limit `β`, or `b₁` when the factor sticks to the bulk edge.
    pub value: f64,
    pub identifiable: bool,
    pub t1: f64,
}

/// `T(b₁+)` at the primary offset and at the coarser sensitivity offset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EdgeTransform {
    pub value: f64,
    pub sensitivity: f64,
}

impl AutocovLaw {
    pub fn new(y: f64, sigma2: f64) -> Result<Self> {
        if !(y > 0.0 && y.is_finite()) {
            return Err(Error::config(format!("y must be positive, got {y}")));
        }
        if !(sigma2 > 0.0 && sigma2.is_finite()) {
            return Err(Error::config(format!("sigma2 must be positive, got {sigma2}")));
        }
        Ok(Self { y, sigma2 })
    }

    /// `a₁ = (−1 + 20y + 8y² − (1 + 8y)^{3/2})/8`; negative for y < 1.
    pub fn a1(&self) -> f64 {
        let y = self.y;
        (-1.0 + 20.0 * y + 8.0 * y * y - (1.0 + 8.0 * y).powf(1.5)) / 8.0
    }

    /// `b₁ = (−1 + 20y + 8y² + (1 + 8y)^{3/2})/8`.
    pub fn b1(&self) -> f64 {
        let y = self.y;
        (-1.0 + 20.0 * y + 8.0 * y * y + (1.0 + 8.0 * y).powf(1.5)) / 8.0
    }

    /// Left end of the continuous support.
    pub fn lower_edge(&self) -> f64 {
        if self.y >= 1.0 {
            self.a1().max(0.0)
        } else {
            0.0
        }
    }

    /// Mass of the continuous part of the p-normalized law.
    pub fn continuous_mass_exact(&self) -> f64 {
        f64::min(1.0, 1.0 / self.y)
    }

    /// Root of the Stieltjes cubic at `z = x + iη` with the largest imaginary
    /// part.
    fn boundary_root(&self, x: f64) -> Complex64 {
        let z = Complex64::new(x, ETA);
        let ym1 = self.y - 1.0;
        let coeffs = [
            z * z,
            -2.0 * z * ym1,
            Complex64::new(ym1 * ym1, 0.0) - z,
            Complex64::new(-1.0, 0.0),
        ];
        cubic_roots(coeffs)
            .into_iter()
            .max_by(|a, b| a.im.total_cmp(&b.im))
            .expect("three roots")
    }

    /// Density of the p-normalized limiting spectral distribution of
    /// `M̂/σ⁴`, continuous part only.
    pub fn density(&self, x: f64) -> Result<f64> {
        let (lo, hi) = (self.lower_edge(), self.b1());
        if x <= lo || x >= hi {
            return Ok(0.0);
        }
        let mut im = self.boundary_root(x).im;
        if self.y < 1.0 {
            // The companion carries an atom of mass 1 − y at 0, which shows
            // up at z = x + iη as a Lorentzian (1 − y)η/(x² + η²).
            im -= (1.0 - self.y) * ETA / (x * x + ETA * ETA);
        }
        if im < 1e-12 {
            let gap = (x - lo).min(hi - x);
            if gap > 1e-8 * hi {
                return Err(Error::Numerical(format!(
                    "no Stieltjes root with positive imaginary part at x = {x} (y = {})",
                    self.y
                )));
            }
            return Ok(0.0);
        }
        Ok(im / (PI * self.y))
    }

    /// Integrates `g(t)·f(t)` over the support with `t = lo + (b₁ − lo) sin²θ`.
    fn integrate_against<G: Fn(f64) -> f64>(&self, g: G, tol: f64) -> Result<f64> {
        let (lo, hi) = (self.lower_edge(), self.b1());
        let width = hi - lo;
        let failure = std::cell::RefCell::new(None);
        let value = quad::integrate(
            |theta| {
                let (s, co) = theta.sin_cos();
                let t = lo + width * s * s;
                match self.density(t) {
                    Ok(d) => g(t) * d * 2.0 * width * s * co,
                    Err(e) => {
                        failure.borrow_mut().get_or_insert(e.to_string());
                        0.0
                    }
                }
            },
            0.0,
            PI / 2.0,
            tol,
        )?;
        match failure.into_inner() {
            Some(msg) => Err(Error::Numerical(msg)),
            None => Ok(value),
        }
    }

    pub fn continuous_mass(&self) -> Result<f64> {
        self.integrate_against(|_| 1.0, DENSITY_TOL)
    }

    /// T-transform `∫ t/(z − t) dμ(t)` of the companion measure, `z > b₁`.
    pub fn t_transform(&self, z: f64) -> Result<f64> {
        let b1 = self.b1();
        if !(z > b1) {
            return Err(Error::Domain(format!("T-transform needs z > b1 = {b1}, got {z}")));
        }
        let v = self.integrate_against(|t| t / (z - t), T_TOL)?;
        Ok(self.y * v)
    }

    /// `T(b₁+)`, the identifiability cutoff for factors.
    pub fn t_at_edge(&self) -> Result<EdgeTransform> {
        let b1 = self.b1();
        Ok(EdgeTransform {
            value: self.t_transform(b1 * (1.0 + EDGE_OFFSET))?,
            sensitivity: self.t_transform(b1 * (1.0 + EDGE_OFFSET_SENSITIVITY))?,
        })
    }
}

/// `T₁ = (A − √(A² − 4y²σ⁴(γ₀² − γ₁²))) / (2γ₀² − 2γ₁²)` with
/// `A = 2yσ²γ₀ + γ₁²`.
pub fn autocov_t1(sig: &FactorSignature, law: &AutocovLaw) -> Result<f64> {
    let (g0, g1) = (sig.gamma0, sig.gamma1);
    let denom = 2.0 * g0 * g0 - 2.0 * g1 * g1;
    if denom == 0.0 {
        return Err(Error::DegenerateSignature(format!(
            "gamma0^2 = gamma1^2 ({g0}, {g1})"
        )));
    }
    let (y, s2) = (law.y, law.sigma2);
    let a = 2.0 * y * s2 * g0 + g1 * g1;
    let disc = a * a - 4.0 * y * y * s2 * s2 * (g0 * g0 - g1 * g1);
    if disc < 0.0 {
        return Err(Error::DegenerateSignature(format!(
            "negative discriminant {disc} for ({g0}, {g1})"
        )));
    }
    Ok((a - disc.sqrt()) / denom)
}

/// Almost-sure limit of the factor's eigenvalue of `M̂/σ⁴`: the root of
/// `T(β) = T₁` above `b₁`, or `b₁` itself when `T₁ ≥ T(b₁+)`.
pub fn autocov_factor_limit(sig: &FactorSignature, law: &AutocovLaw) -> Result<FactorLimit> {
    let edge = law.t_at_edge()?.value;
    factor_limit_with_edge(sig, law, edge)
}

pub(crate) fn factor_limit_with_edge(
    sig: &FactorSignature,
    law: &AutocovLaw,
    t_edge: f64,
) -> Result<FactorLimit> {
    let t1 = autocov_t1(sig, law)?;
    let b1 = law.b1();
    if t1 >= t_edge {
        return Ok(FactorLimit { value: b1, identifiable: false, t1 });
    }
    let mut lo = b1 * (1.0 + EDGE_OFFSET);
    let mut hi = 2.0 * b1 + 1.0;
    let mut grow = 0;
    while law.t_transform(hi)? > t1 {
        lo = hi;
        hi *= 2.0;
        grow += 1;
        if grow > 60 {
            return Err(Error::Numerical(format!("cannot bracket T(beta) = {t1}")));
        }
    }
    if law.t_transform(lo)? < t1 {
        return Err(Error::Numerical(format!("T(beta) = {t1} not bracketed on [{lo}, {hi}]")));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi || hi - lo < 1e-13 * hi {
            break;
        }
        if law.t_transform(mid)? > t1 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(FactorLimit { value: 0.5 * (lo + hi), identifiable: true, t1 })
}

/// Number of factors whose `T₁` falls below the edge cutoff `T(b₁+)`.
pub fn autocov_identifiable_count(sigs: &[FactorSignature], law: &AutocovLaw) -> Result<usize> {
    let edge = law.t_at_edge()?.value;
    let mut count = 0;
    for s in sigs {
        if autocov_t1(s, law)? < edge {
            count += 1;
        }
    }
    Ok(count)
}

/// Roots of `c[0]S³ + c[1]S² + c[2]S + c[3]` by Cardano's formula, each
/// polished with a few Newton steps on the original polynomial.
pub(crate) fn cubic_roots(c: [Complex64; 4]) -> [Complex64; 3] {
    let b = c[1] / c[0];
    let cc = c[2] / c[0];
    let d = c[3] / c[0];
    let p = cc - b * b / 3.0;
    let q = 2.0 * b * b * b / 27.0 - b * cc / 3.0 + d;
    let disc = (q * q / 4.0 + p * p * p / 27.0).sqrt();
    let mut u3 = -q / 2.0 + disc;
    if u3.norm() < (-q / 2.0 - disc).norm() {
        u3 = -q / 2.0 - disc;
    }
    let u = u3.powf(1.0 / 3.0);
    let omega = Complex64::new(-0.5, 3f64.sqrt() / 2.0);
    let mut roots = [Complex64::new(0.0, 0.0); 3];
    let mut w = Complex64::new(1.0, 0.0);
    for r in roots.iter_mut() {
        let uk = u * w;
        let t = if uk.norm() == 0.0 { uk } else { uk - p / (3.0 * uk) };
        *r = t - b / 3.0;
        w *= omega;
    }
    let poly = |s: Complex64| ((c[0] * s + c[1]) * s + c[2]) * s + c[3];
    let deriv = |s: Complex64| (3.0 * c[0] * s + 2.0 * c[1]) * s + c[2];
    for r in roots.iter_mut() {
        for _ in 0..3 {
            let dv = deriv(*r);
            if dv.norm() == 0.0 {
                break;
            }
            let step = poly(*r) / dv;
            if !step.is_finite() {
                break;
            }
            *r -= step;
        }
    }
    roots
}
