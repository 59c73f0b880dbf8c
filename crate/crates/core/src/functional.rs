//! The singular Trudinger–Moser functional at the nodal level.
//!
//! Nonlinear terms are evaluated at the nodes and integrated against the
//! weighted node integrals `W_j = ∫|x|^{-2β}φ_j`, so
//! `tm_value(u) = Σ W_j e^{γu_j²}` and the load `W_i u_i e^{γu_i²}` is exactly
//! `(1/2γ)` times its gradient.

use std::f64::consts::PI;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sparse::dot;
use crate::spectral::{FeSpace, Field, NodeWeights, Subspace};

/// Exponents above this are capped and flagged.
pub const EXPONENT_CAP: f64 = 700.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TmParams {
    pub beta: f64,
    pub alpha: f64,
    pub eps: f64,
    /// Exponent coefficient, `4π(1−β−ε)` unless overridden.
    pub gamma: f64,
}

impl TmParams {
    pub fn new(beta: f64, alpha: f64, eps: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&beta) {
            return Err(Error::InvalidParameter(format!("beta = {beta} must lie in [0, 1)")));
        }
        if !(0.0..1.0 - beta).contains(&eps) {
            return Err(Error::InvalidParameter(format!("eps = {eps} must lie in [0, 1 - beta)")));
        }
        if !alpha.is_finite() {
            return Err(Error::InvalidParameter("alpha must be finite".into()));
        }
        Ok(Self { beta, alpha, eps, gamma: 4.0 * PI * (1.0 - beta - eps) })
    }

    /// The critical exponent `4π(1−β)`.
    pub fn critical(beta: f64, alpha: f64) -> Result<Self> {
        Self::new(beta, alpha, 0.0)
    }

    pub fn with_gamma(mut self, gamma: f64) -> Self {
        self.gamma = gamma;
        self
    }

    pub fn with_eps(self, eps: f64) -> Result<Self> {
        Self::new(self.beta, self.alpha, eps)
    }
}

/// A scalar with the overflow flag raised when any exponent was capped.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Guarded {
    pub value: f64,
    pub overflow: bool,
}

#[inline]
fn capped_exp(x: f64, overflow: &mut bool) -> f64 {
    if x > EXPONENT_CAP {
        *overflow = true;
        EXPONENT_CAP.exp()
    } else {
        x.exp()
    }
}

/// The functional bound to one finite-element space and parameter set.
#[derive(Clone)]
pub struct Functional<'a> {
    pub space: &'a FeSpace,
    pub params: TmParams,
    weights: Arc<NodeWeights>,
}

impl<'a> Functional<'a> {
    pub fn new(space: &'a FeSpace, params: TmParams) -> Result<Self> {
        let weights = space.node_weights(params.beta)?;
        Ok(Self { space, params, weights })
    }

    pub fn weights(&self) -> &NodeWeights {
        &self.weights
    }

    /// `∫_Ω |x|^{-2β} dx`.
    pub fn weighted_volume(&self) -> f64 {
        self.weights.volume()
    }

    fn check(&self, u: &[f64]) -> Result<()> {
        if u.len() != self.space.n_dofs() {
            return Err(Error::DimensionMismatch { expected: self.space.n_dofs(), got: u.len() });
        }
        Ok(())
    }

    /// `∫|x|^{-2β} e^{γu²}`.
    pub fn tm_value(&self, u: &[f64]) -> Result<Guarded> {
        self.check(u)?;
        let mut overflow = false;
        let g = self.params.gamma;
        let interior: f64 = self.weights.interior.iter().sum();
        let mut value = self.weighted_volume() - interior;
        for (w, &x) in self.weights.interior.iter().zip(u) {
            value += w * capped_exp(g * x * x, &mut overflow);
        }
        Ok(Guarded { value, overflow })
    }

    /// `λ = ∫|x|^{-2β} u² e^{γu²}`.
    pub fn lambda_eps(&self, u: &[f64]) -> Result<Guarded> {
        self.check(u)?;
        let mut overflow = false;
        let g = self.params.gamma;
        let value = self
            .weights
            .interior
            .iter()
            .zip(u)
            .map(|(w, &x)| w * x * x * capped_exp(g * x * x, &mut overflow))
            .sum();
        Ok(Guarded { value, overflow })
    }

    /// Nodal load `W_i u_i e^{γu_i²}` over interior DOFs.
    pub fn load(&self, u: &[f64]) -> Result<(Vec<f64>, bool)> {
        self.check(u)?;
        let mut overflow = false;
        let g = self.params.gamma;
        let v = self
            .weights
            .interior
            .iter()
            .zip(u)
            .map(|(w, &x)| w * x * capped_exp(g * x * x, &mut overflow))
            .collect();
        Ok((v, overflow))
    }

    /// Riesz representative of the load in the `(1,α)` inner product:
    /// `(K − αM) d = load(u) / λ`.
    pub fn ascent_direction(&self, u: &[f64]) -> Result<Field> {
        let lambda = self.lambda_eps(u)?.value;
        if lambda == 0.0 {
            return Ok(vec![0.0; u.len()]);
        }
        let (load, _) = self.load(u)?;
        let f = self.space.factor(self.params.alpha, true)?;
        let rhs: Vec<f64> = load.iter().map(|l| l / lambda).collect();
        Ok(f.solve(&rhs))
    }

    /// Residual of the discrete Euler–Lagrange system in the `K^{-1}` dual
    /// norm; with a subspace the multipliers `γ_i = ∫ψ_i·load` are removed.
    pub fn el_residual(&self, u: &[f64], basis: Option<&Subspace>) -> Result<f64> {
        let lambda = self.lambda_eps(u)?.value;
        let (load, _) = self.load(u)?;
        let mut r = self.space.shifted(self.params.alpha).matvec(u);
        if lambda > 0.0 {
            for (ri, li) in r.iter_mut().zip(&load) {
                *ri -= li / lambda;
            }
            if let Some(sub) = basis {
                for psi in &sub.basis {
                    let gi = dot(psi, &load);
                    let mpsi = self.space.mass.matvec(psi);
                    for (ri, mi) in r.iter_mut().zip(&mpsi) {
                        *ri += gi / lambda * mi;
                    }
                }
            }
        }
        let k = self.space.factor(0.0, false)?;
        let z = k.solve(&r);
        Ok(dot(&r, &z).max(0.0).sqrt())
    }
}
