//! Green's function of `−Δ − α` with pole at the origin, by subtracting the
//! fundamental solution `s(x) = −(1/2π) ln|x|`.
//!
//! The regular part `w = G − s` solves `−Δw − αw = αs` with `w = −s` on the
//! boundary. In subspace mode the right-hand side gains `−Σ μ_i ψ_i`, with the
//! multipliers fixed so that `∫Gψ_i = 0` holds exactly at the discrete level
//! (continuously `μ_i = ψ_i(0)`; the discrete values are reported).

use std::f64::consts::PI;
use std::io::Write;

use faer::linalg::solvers::Solve;
use faer::Mat;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::mesh::{norm, Locator, Point};
use crate::quadrature::SingularQuadrature;
use crate::sparse::dot;
use crate::spectral::{FeSpace, Subspace};

/// `−(1/2π) ln|x|`.
pub fn fundamental(p: Point) -> f64 {
    -norm(p).ln() / (2.0 * PI)
}

#[derive(Clone, Debug, Serialize)]
pub struct GreenFunction {
    pub alpha: f64,
    /// Regular part at every mesh node.
    #[serde(skip)]
    pub w: Vec<f64>,
    /// `w(0)`.
    pub a0: f64,
    /// Sink multipliers actually used (subspace mode).
    pub multipliers: Vec<f64>,
    /// `ψ_i(0)` for comparison with the multipliers.
    pub sink_values: Vec<f64>,
    /// `∫ G ψ_i` after the solve.
    pub orthogonality: Vec<f64>,
}

impl GreenFunction {
    /// `G(p)`, interpolating the regular part.
    pub fn eval(&self, locator: &Locator<'_>, p: Point) -> Result<f64> {
        Ok(fundamental(p) + locator.interpolate(&self.w, p)?)
    }

    /// `G` at every mesh node except the origin, which holds `+∞`.
    pub fn nodal(&self, space: &FeSpace) -> Vec<f64> {
        space
            .mesh
            .nodes
            .iter()
            .zip(&self.w)
            .map(|(&p, w)| if norm(p) == 0.0 { f64::INFINITY } else { fundamental(p) + w })
            .collect()
    }

    /// Mesh text dump of the regular part, with `A₀` in a header comment.
    pub fn write_dump<W: Write>(&self, space: &FeSpace, mut w: W) -> Result<()> {
        writeln!(w, "# green alpha {:.17e} a0 {:.17e}", self.alpha, self.a0)?;
        space.mesh.write_text(w, Some(&self.w))
    }
}

/// Solve the Green's-function problem; `basis` switches to subspace mode.
pub fn solve_green(space: &FeSpace, alpha: f64, basis: Option<&Subspace>) -> Result<GreenFunction> {
    let mesh = &space.mesh;
    let n = mesh.n_dofs();
    let fac = match basis {
        None => space.factor(alpha, false).map_err(|e| match e {
            Error::Resonance { .. } => Error::Resonance { alpha, eigenvalue: f64::NAN },
            other => other,
        })?,
        Some(sub) => {
            for &lam in sub.distinct.iter().chain(std::iter::once(&sub.lambda_next)) {
                if (alpha - lam).abs() <= 1e-6 * lam.abs() {
                    return Err(Error::Resonance { alpha, eigenvalue: lam });
                }
            }
            if alpha >= sub.lambda_next {
                return Err(Error::Resonance { alpha, eigenvalue: sub.lambda_next });
            }
            space.factor(alpha, true)?
        }
    };

    // Boundary data and the regular-part load α ∫ s φ_j.
    let g_boundary: Vec<f64> =
        mesh.nodes.iter().zip(&mesh.boundary).map(|(&p, &b)| if b { -fundamental(p) } else { 0.0 }).collect();
    let quad = SingularQuadrature::new(0.0)?;
    let s_integrals = quad.node_integrals(mesh, &fundamental);
    let s_interior = mesh.restrict(&s_integrals);
    let shifted_full = space.stiffness_full.combine(1.0, &space.mass_full, -alpha);
    let lift = shifted_full.matvec(&g_boundary);
    let mass_lift = space.mass_full.matvec(&g_boundary);
    let rhs: Vec<f64> = (0..n).map(|d| alpha * s_interior[d] - lift[mesh.node_of_dof(d)]).collect();
    let mut w_int = fac.solve(&rhs);

    let mut multipliers = Vec::new();
    let mut sink_values = Vec::new();
    if let Some(sub) = basis {
        let m = sub.basis.len();
        let mpsi: Vec<Vec<f64>> = sub.basis.iter().map(|p| space.mass.matvec(p)).collect();
        let z = fac.solve_block(&mpsi);
        // ∫ G ψ_i = ψ_iᵀ S + ψ_iᵀ M w  (w includes boundary values).
        let pairing = |w: &[f64], i: usize| {
            let bd: f64 = (0..n).map(|d| sub.basis[i][d] * mass_lift[mesh.node_of_dof(d)]).sum();
            dot(&sub.basis[i], &s_interior) + dot(&mpsi[i], w) + bd
        };
        let a = Mat::<f64>::from_fn(m, m, |i, j| dot(&mpsi[i], &z[j]));
        let b = Mat::<f64>::from_fn(m, 1, |i, _| pairing(&w_int, i));
        let mu = a.partial_piv_lu().solve(&b);
        for j in 0..m {
            for d in 0..n {
                w_int[d] -= mu[(j, 0)] * z[j][d];
            }
            multipliers.push(mu[(j, 0)]);
            sink_values.push(mesh.dof(0).map_or(0.0, |d| sub.basis[j][d]));
        }
    }

    let mut w = g_boundary;
    for d in 0..n {
        w[mesh.node_of_dof(d)] = w_int[d];
    }
    let orthogonality = match basis {
        Some(sub) => sub
            .basis
            .iter()
            .map(|psi| {
                let psi_nodal = mesh.expand(psi);
                dot(&psi_nodal, &s_integrals) + space.mass_full.form(&psi_nodal, &w)
            })
            .collect(),
        None => Vec::new(),
    };
    Ok(GreenFunction { alpha, a0: w[0], w, multipliers, sink_values, orthogonality })
}

/// `A₀ = w(0)`.
pub fn a0(g: &GreenFunction) -> f64 {
    g.a0
}

/// `∫_Ω |x|^{-2β} G² dx` with the logarithm integrated exactly on elements
/// at the origin and the regular part interpolated per element.
pub fn weighted_g_squared(space: &FeSpace, g: &GreenFunction, beta: f64) -> Result<f64> {
    let quad = SingularQuadrature::new(beta)?;
    let mesh = &space.mesh;
    let mut total = 0.0;
    for (t, tri) in mesh.triangles.iter().enumerate() {
        let wv = [g.w[tri[0]], g.w[tri[1]], g.w[tri[2]]];
        quad.visit_element(mesh, t, &mut |p, b, wt| {
            let val = fundamental(p) + b[0] * wv[0] + b[1] * wv[1] + b[2] * wv[2];
            total += wt * val * val;
        });
    }
    Ok(total)
}
