//! Closed forms for the limiting blow-up profiles.
//!
//! The singular bubble is `φ₀(r) = −ln(1 + a r^{2(1−β)}) / (4π(1−β))` with
//! `a = π/(1−β)`. Its truncated mass and energy on `B_R` depend on `R` only
//! through `T = a R^{2−2β}`.

use std::f64::consts::PI;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BubbleProfile {
    pub beta: f64,
    pub a: f64,
}

impl BubbleProfile {
    pub fn new(beta: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&beta) {
            return Err(Error::InvalidParameter(format!("beta = {beta} must lie in [0, 1)")));
        }
        Ok(Self { beta, a: PI / (1.0 - beta) })
    }

    fn k(&self) -> f64 {
        4.0 * PI * (1.0 - self.beta)
    }

    pub fn t_of(&self, r: f64) -> f64 {
        self.a * r.powf(2.0 - 2.0 * self.beta)
    }

    pub fn phi0(&self, r: f64) -> f64 {
        -self.t_of(r).ln_1p() / self.k()
    }

    /// `|φ₀'(r)|`.
    pub fn phi0_slope(&self, r: f64) -> f64 {
        let t = self.t_of(r);
        if r == 0.0 {
            return 0.0;
        }
        (2.0 - 2.0 * self.beta) * t / (r * (1.0 + t)) / self.k()
    }

    /// `∫_{B_R} |x|^{-2β} e^{8π(1−β)φ₀} dx = T/(1+T)`, and 1 at `R = ∞`.
    pub fn mass(&self, r: f64) -> f64 {
        if r.is_infinite() {
            return 1.0;
        }
        let t = self.t_of(r);
        t / (1.0 + t)
    }

    /// Radial density of the mass: `r^{-2β} e^{8π(1−β)φ₀(r)} · 2πr`.
    pub fn mass_density(&self, r: f64) -> f64 {
        let t = self.t_of(r);
        2.0 * PI * r.powf(1.0 - 2.0 * self.beta) / (1.0 + t).powi(2)
    }

    /// `∫_{B_R} |∇φ₀|² = (ln(1+T) − T/(1+T)) / (4π(1−β))`.
    pub fn energy(&self, r: f64) -> f64 {
        if r.is_infinite() {
            return f64::INFINITY;
        }
        let t = self.t_of(r);
        let core = if t < 1e-3 {
            // ln(1+T) − T/(1+T) = T²/2 − 2T³/3 + 3T⁴/4 − …
            t * t * (0.5 - t * (2.0 / 3.0 - 0.75 * t))
        } else {
            t.ln_1p() - t / (1.0 + t)
        };
        core / self.k()
    }

    /// Radial density of the energy: `|φ₀'(r)|² · 2πr`.
    pub fn energy_density(&self, r: f64) -> f64 {
        2.0 * PI * r * self.phi0_slope(r).powi(2)
    }

    /// Large-R expansion `(1/2π) ln R + ln(a)/(4π(1−β)) − 1/(4π(1−β))`.
    pub fn energy_asymptotic(&self, r: f64) -> f64 {
        r.ln() / (2.0 * PI) + self.a.ln() / self.k() - 1.0 / self.k()
    }
}

pub fn phi0(r: f64, beta: f64) -> Result<f64> {
    if r < 0.0 {
        return Err(Error::InvalidParameter(format!("radius {r} must be nonnegative")));
    }
    Ok(BubbleProfile::new(beta)?.phi0(r))
}

pub fn bubble_mass(r: f64, beta: f64) -> Result<f64> {
    if !(r > 0.0) {
        return Err(Error::InvalidParameter(format!("radius {r} must be positive")));
    }
    Ok(BubbleProfile::new(beta)?.mass(r))
}

pub fn bubble_energy(r: f64, beta: f64) -> Result<f64> {
    if !(r > 0.0) {
        return Err(Error::InvalidParameter(format!("radius {r} must be positive")));
    }
    Ok(BubbleProfile::new(beta)?.energy(r))
}

/// Total mass `1/(1−β)` of the radial solutions of `−Δv = e^{8π(1−β)v}`.
pub fn liouville_mass(beta: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&beta) {
        return Err(Error::InvalidParameter(format!("beta = {beta} must lie in [0, 1)")));
    }
    Ok(1.0 / (1.0 - beta))
}

/// The explicit radial Liouville solution
/// `v(r) = ln(8μ² / (k(1+μ²r²)²)) / k`, `k = 8π(1−β)`.
pub fn liouville_profile(r: f64, mu: f64, beta: f64) -> f64 {
    let k = 8.0 * PI * (1.0 - beta);
    (8.0 * mu * mu / (k * (1.0 + mu * mu * r * r).powi(2))).ln() / k
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn profile_values() {
        assert_eq!(phi0(0.0, 0.5).unwrap(), 0.0);
        let want = -(1.0 + 2.0 * PI).ln() / (2.0 * PI);
        assert!((phi0(1.0, 0.5).unwrap() - want).abs() < 1e-15);
        let b = BubbleProfile::new(0.3).unwrap();
        let mut prev = 0.0;
        for k in 1..100 {
            let v = b.phi0(k as f64 * 0.1);
            assert!(v < prev);
            prev = v;
        }
    }

    #[test]
    fn mass_values() {
        for beta in [0.1, 0.25, 0.5, 0.75] {
            assert_eq!(bubble_mass(f64::INFINITY, beta).unwrap(), 1.0);
            assert!(bubble_mass(1e-30, beta).unwrap() < 1e-6);
        }
        let want = 1.0 - 1.0 / (1.0 + 2.0 * PI);
        assert!((bubble_mass(1.0, 0.5).unwrap() - want).abs() < 1e-15);
        assert!((want - 0.862_697).abs() < 1e-6);
    }

    #[test]
    fn dependence_through_t_only() {
        // β = 1/2, R = 2 and β = 3/4, R' with (π/0.25) R'^{0.5} = 2π·2.
        let b1 = BubbleProfile::new(0.5).unwrap();
        let b2 = BubbleProfile::new(0.75).unwrap();
        let r2 = (b1.t_of(2.0) / b2.a).powi(2);
        assert!((b1.mass(2.0) - b2.mass(r2)).abs() < 1e-14);
        assert!((b1.energy(2.0) * b1.k() - b2.energy(r2) * b2.k()).abs() < 1e-13);
    }

    #[test]
    fn small_t_series_is_continuous() {
        let b = BubbleProfile::new(0.5).unwrap();
        let r = 1e-3 / b.a;
        let below = b.energy(r * (1.0 - 1e-9));
        let above = b.energy(r * (1.0 + 1e-9));
        assert!((below - above).abs() <= 1e-8 * above);
        assert!(b.energy(1e-9) > 0.0 && b.energy(1e-9) < 1e-15);
    }

    #[test]
    fn liouville_constants() {
        assert_eq!(liouville_mass(0.5).unwrap(), 2.0);
        assert!((liouville_mass(1e-12).unwrap() - 1.0).abs() < 1e-11);
        for beta in [0.01, 0.3, 0.9] {
            assert!(liouville_mass(beta).unwrap() > 1.0);
        }
    }
}
