//! Subcritical maximizers by a normalized fixed-point iteration.
//!
//! One step maps `u` to `normalize((1−τ)u + τ d(u))`, where `d(u)` is the
//! `(1,α)` Riesz representative of the load. With `τ = 1` the step maximizes
//! the linearization of the (convex) nodal functional over the unit sphere,
//! so the functional value cannot decrease; `τ` is halved if it ever does.
//! An Anderson-mixed candidate built from recent full steps is tried first
//! and kept only when it does not lower the functional.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::functional::{Functional, TmParams};
use crate::mesh::Point;
use faer::linalg::solvers::Solve;
use faer::Mat;

use crate::sparse::dot;
use crate::spectral::{EigenOptions, FeSpace, Field, Subspace};

#[derive(Clone, Debug)]
pub enum Init {
    /// `ψ_1`, or `ψ_{ℓ+1}` in subspace mode.
    Eigenfunction,
    Field(Field),
}

#[derive(Clone, Debug)]
pub struct MaximizeOptions {
    /// Stop once the Euler–Lagrange residual is below this.
    pub tol: f64,
    pub max_iter: usize,
    /// Smallest damping before the iteration is declared stalled.
    pub min_tau: f64,
    pub init: Init,
    /// Extra randomized starts; the best converged result wins.
    pub restarts: usize,
    pub seed: u64,
    /// Anderson mixing depth; 0 gives the plain damped iteration.
    pub anderson: usize,
}

impl Default for MaximizeOptions {
    fn default() -> Self {
        Self { tol: 1e-7, max_iter: 10_000, min_tau: 1e-6, init: Init::Eigenfunction, restarts: 0, seed: 0, anderson: 5 }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct Flags {
    pub converged: bool,
    pub overflow: bool,
    /// Backtracking could not find an ascent step.
    pub stalled: bool,
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct IterRecord {
    pub iteration: usize,
    pub value: f64,
    pub residual: f64,
    pub tau: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct MaximizerResult {
    pub params: TmParams,
    #[serde(skip)]
    pub u: Field,
    /// Functional value `Λ_{β,ε}` at the maximizer.
    pub value: f64,
    pub c: f64,
    pub x: Point,
    pub x_node: usize,
    /// `λ_ε = ∫|x|^{-2β}u² e^{γu²}`.
    pub lambda: f64,
    pub norm: f64,
    pub iterations: usize,
    pub residual: f64,
    pub flags: Flags,
    #[serde(skip)]
    pub log: Vec<IterRecord>,
}

impl MaximizerResult {
    /// Nodal field over all mesh nodes.
    pub fn nodal(&self, space: &FeSpace) -> Vec<f64> {
        space.mesh.expand(&self.u)
    }
}

/// Node (lowest index among ties) and value of the nodal maximum.
pub fn argmax(space: &FeSpace, u: &[f64]) -> (usize, f64) {
    let mut best = (0usize, f64::NEG_INFINITY);
    for node in 0..space.mesh.n_nodes() {
        let v = space.mesh.dof(node).map_or(0.0, |d| u[d]);
        if v > best.1 {
            best = (node, v);
        }
    }
    best
}

struct Problem<'a> {
    f: Functional<'a>,
    sub: Option<&'a Subspace>,
    mpsi: Vec<Vec<f64>>,
}

impl Problem<'_> {
    fn space(&self) -> &FeSpace {
        self.f.space
    }

    /// Feasible point closest in spirit to `v`: projected (subspace mode) or
    /// absolute-valued (full mode), then normalized.
    fn admissible(&self, v: &[f64]) -> Result<Field> {
        let alpha = self.f.params.alpha;
        let mut w = match self.sub {
            Some(s) => self.space().project_perp(v, &s.basis),
            None => v.iter().map(|x| x.abs()).collect(),
        };
        let n = self.space().norm_1alpha(&w, alpha)?;
        if n == 0.0 {
            return Err(Error::InvalidParameter("iterate vanished after projection".into()));
        }
        w.iter_mut().for_each(|x| *x /= n);
        if self.sub.is_some() {
            // Make the largest |u| positive.
            let (mut hi, mut lo) = (f64::NEG_INFINITY, f64::INFINITY);
            for &x in &w {
                hi = hi.max(x);
                lo = lo.min(x);
            }
            if -lo > hi {
                w.iter_mut().for_each(|x| *x = -*x);
            }
        }
        Ok(w)
    }

    fn direction(&self, u: &[f64]) -> Result<Field> {
        let lambda = self.f.lambda_eps(u)?.value;
        let (mut load, _) = self.f.load(u)?;
        if let Some(s) = self.sub {
            for (psi, mpsi) in s.basis.iter().zip(&self.mpsi) {
                let g = dot(psi, &load);
                for (l, m) in load.iter_mut().zip(mpsi) {
                    *l -= g * m;
                }
            }
        }
        let fac = self.space().factor(self.f.params.alpha, self.sub.is_some())?;
        let rhs: Vec<f64> = load.iter().map(|l| l / lambda).collect();
        Ok(fac.solve(&rhs))
    }

    fn run(&self, start: &[f64], opts: &MaximizeOptions) -> Result<MaximizerResult> {
        let mut u = self.admissible(start)?;
        let mut value = self.f.tm_value(&u)?;
        let mut residual = self.f.el_residual(&u, self.sub)?;
        let mut flags = Flags { overflow: value.overflow, ..Flags::default() };
        let mut log = vec![IterRecord { iteration: 0, value: value.value, residual, tau: 0.0 }];
        let mut tau: f64 = 1.0;
        let mut iterations = 0;
        let mut history: Vec<(Field, Field)> = Vec::new();
        while iterations < opts.max_iter && !flags.overflow {
            if residual <= opts.tol {
                flags.converged = true;
                break;
            }
            iterations += 1;
            let d = self.direction(&u)?;
            let full = self.admissible(&d)?;
            let f: Field = full.iter().zip(&u).map(|(a, b)| a - b).collect();
            history.push((u.clone(), f));
            if history.len() > opts.anderson + 1 {
                history.remove(0);
            }
            let mut accepted = false;
            if let Some(mixed) = anderson_candidate(&history) {
                let cand = self.admissible(&mixed)?;
                let cv = self.f.tm_value(&cand)?;
                if cv.value >= value.value && !cv.overflow {
                    u = cand;
                    value = cv;
                    tau = 1.0;
                    accepted = true;
                } else {
                    history.clear();
                }
            }
            if !accepted {
                tau = (2.0 * tau).min(1.0);
                loop {
                    let cand = if tau == 1.0 {
                        full.clone()
                    } else {
                        let trial: Vec<f64> = u.iter().zip(&d).map(|(a, b)| (1.0 - tau) * a + tau * b).collect();
                        self.admissible(&trial)?
                    };
                    let cv = self.f.tm_value(&cand)?;
                    // Allow round-off sized decreases.
                    if cv.value >= value.value * (1.0 - 1e-14) || tau <= opts.min_tau {
                        if cv.value < value.value * (1.0 - 1e-14) {
                            flags.stalled = true;
                        }
                        u = cand;
                        value = cv;
                        break;
                    }
                    tau *= 0.5;
                }
            }
            flags.overflow = value.overflow;
            residual = self.f.el_residual(&u, self.sub)?;
            log.push(IterRecord { iteration: iterations, value: value.value, residual, tau });
            if flags.stalled {
                break;
            }
        }
        if residual <= opts.tol {
            flags.converged = true;
        }
        let (x_node, c) = argmax(self.space(), &u);
        let lambda = self.f.lambda_eps(&u)?.value;
        let norm = self.space().norm_1alpha(&u, self.f.params.alpha)?;
        Ok(MaximizerResult {
            params: self.f.params,
            x: self.space().mesh.nodes[x_node],
            u,
            value: value.value,
            c,
            x_node,
            lambda,
            norm,
            iterations,
            residual,
            flags,
            log,
        })
    }
}

/// `u_k + f_k − Σ γ_j (Δu_j + Δf_j)` with `γ` minimizing `‖f_k − Σ γ_j Δf_j‖`.
fn anderson_candidate(history: &[(Field, Field)]) -> Option<Field> {
    if history.len() < 2 {
        return None;
    }
    let m = history.len() - 1;
    let (u, f) = history.last().unwrap();
    let du: Vec<Field> = history.windows(2).map(|w| w[1].0.iter().zip(&w[0].0).map(|(a, b)| a - b).collect()).collect();
    let df: Vec<Field> = history.windows(2).map(|w| w[1].1.iter().zip(&w[0].1).map(|(a, b)| a - b).collect()).collect();
    let scale = (0..m).map(|i| dot(&df[i], &df[i])).fold(0.0, f64::max);
    if !(scale > 0.0) {
        return None;
    }
    let a = Mat::<f64>::from_fn(m, m, |i, j| dot(&df[i], &df[j]) + if i == j { 1e-12 * scale } else { 0.0 });
    let b = Mat::<f64>::from_fn(m, 1, |i, _| dot(&df[i], f));
    let gamma = a.partial_piv_lu().solve(&b);
    let mut out: Field = u.iter().zip(f).map(|(a, b)| a + b).collect();
    for j in 0..m {
        let g = gamma[(j, 0)];
        if !g.is_finite() {
            return None;
        }
        for (o, (x, y)) in out.iter_mut().zip(du[j].iter().zip(&df[j])) {
            *o -= g * (x + y);
        }
    }
    Some(out)
}

fn initial_field(space: &FeSpace, sub: Option<&Subspace>, init: &Init) -> Result<Field> {
    match (init, sub) {
        (Init::Field(u), _) => {
            if u.len() != space.n_dofs() {
                return Err(Error::DimensionMismatch { expected: space.n_dofs(), got: u.len() });
            }
            Ok(u.clone())
        }
        (Init::Eigenfunction, Some(s)) => Ok(s.next.clone()),
        (Init::Eigenfunction, None) => Ok(space.eigenpairs(1, &EigenOptions::default())?.vectors.remove(0)),
    }
}

fn perturbed(u: &[f64], seed: u64) -> Field {
    let mut state = seed ^ 0xD1B5_4A32_D192_ED03;
    let scale = u.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    u.iter()
        .map(|x| {
            state = state.wrapping_mul(6_364_136_223_846_793_005).wrapping_add(1_442_695_040_888_963_407);
            x + 0.5 * scale * ((state >> 11) as f64 / (1u64 << 53) as f64 - 0.5)
        })
        .collect()
}

/// Maximize the subcritical functional on the `(1,α)` unit sphere
/// (intersected with `E_ℓ^⊥` when a subspace is given).
pub fn maximize_subcritical(
    space: &FeSpace,
    params: TmParams,
    subspace: Option<&Subspace>,
    opts: &MaximizeOptions,
) -> Result<MaximizerResult> {
    if params.eps <= 0.0 {
        return Err(Error::InvalidParameter("the subcritical problem needs eps > 0".into()));
    }
    if let Some(s) = subspace {
        if params.alpha >= s.lambda_next {
            return Err(Error::Resonance { alpha: params.alpha, eigenvalue: s.lambda_next });
        }
    }
    let f = Functional::new(space, params)?;
    if subspace.is_none() {
        // Cholesky of K − αM fails exactly when α ≥ discrete λ_1.
        space.factor(params.alpha, false)?;
    }
    let mpsi = subspace.map_or(Vec::new(), |s| s.basis.iter().map(|p| space.mass.matvec(p)).collect());
    let problem = Problem { f, sub: subspace, mpsi };
    let start = initial_field(space, subspace, &opts.init)?;
    let mut best = problem.run(&start, opts)?;
    for k in 0..opts.restarts {
        let r = problem.run(&perturbed(&start, opts.seed.wrapping_add(k as u64)), opts)?;
        if r.flags.converged && (!best.flags.converged || r.value > best.value) {
            best = r;
        }
    }
    Ok(best)
}

#[derive(Clone, Debug, Serialize)]
pub struct SweepOutcome {
    pub results: Vec<MaximizerResult>,
    /// First ε whose solve raised the overflow flag, if the sweep stopped early.
    pub stopped_at: Option<f64>,
}

/// Warm-started maximizers along a strictly decreasing ε schedule.
pub fn continuation_sweep(
    space: &FeSpace,
    template: TmParams,
    schedule: &[f64],
    subspace: Option<&Subspace>,
    opts: &MaximizeOptions,
) -> Result<SweepOutcome> {
    if schedule.windows(2).any(|w| w[1] >= w[0]) || schedule.iter().any(|&e| e <= 0.0) {
        return Err(Error::InvalidParameter("eps schedule must be positive and strictly decreasing".into()));
    }
    let mut results: Vec<MaximizerResult> = Vec::with_capacity(schedule.len());
    let mut opts = opts.clone();
    for &eps in schedule {
        let params = template.with_eps(eps)?;
        if let Some(prev) = results.last() {
            opts.init = Init::Field(prev.u.clone());
        }
        let r = maximize_subcritical(space, params, subspace, &opts)?;
        if r.flags.overflow {
            return Ok(SweepOutcome { results, stopped_at: Some(eps) });
        }
        results.push(r);
    }
    Ok(SweepOutcome { results, stopped_at: None })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_mesh, DomainSpec};

    fn space(h: f64) -> FeSpace {
        FeSpace::new(build_mesh(&DomainSpec::unit_disk(), h).unwrap())
    }

    #[test]
    fn full_space_contract() {
        let s = space(1.0 / 16.0);
        let params = TmParams::new(0.5, 0.0, 0.1).unwrap();
        let r = maximize_subcritical(&s, params, None, &MaximizeOptions::default()).unwrap();
        assert!(r.flags.converged, "{:?} after {} iterations", r.residual, r.iterations);
        assert!((r.norm - 1.0).abs() < 1e-8);
        assert!(r.u.iter().all(|&x| x >= 0.0));
        let f = Functional::new(&s, params).unwrap();
        assert!(r.value >= f.weighted_volume());
        assert!(r.log.windows(2).all(|w| w[1].value >= w[0].value * (1.0 - 1e-14)));
        // Radial maximizer peaks at the origin.
        assert_eq!(r.x_node, 0);
    }

    #[test]
    fn value_decreases_with_eps() {
        let s = space(1.0 / 16.0);
        let template = TmParams::new(0.5, 0.0, 0.1).unwrap();
        let out = continuation_sweep(&s, template, &[0.2, 0.1, 0.05], None, &MaximizeOptions::default()).unwrap();
        assert_eq!(out.results.len(), 3);
        for w in out.results.windows(2) {
            assert!(w[1].value >= w[0].value);
            assert!(w[1].c >= w[0].c);
        }
    }

    #[test]
    fn subspace_mode_stays_orthogonal() {
        let s = space(1.0 / 16.0);
        let data = s.eigenpairs(4, &EigenOptions::default()).unwrap();
        let sub = data.subspace(1).unwrap();
        let alpha = 0.5 * (data.values[0] + data.values[1]);
        let params = TmParams::new(0.5, alpha, 0.1).unwrap();
        let r = maximize_subcritical(&s, params, Some(&sub), &MaximizeOptions::default()).unwrap();
        assert!(r.flags.converged, "{:?}", r.residual);
        assert!(s.l2_pairing(&r.u, &sub.basis[0]).abs() < 1e-10);
        assert!((r.norm - 1.0).abs() < 1e-8);
        assert!(r.c > 0.0);
    }

    #[test]
    fn resonant_alpha_is_rejected() {
        let s = space(0.25);
        let data = s.eigenpairs(1, &EigenOptions::default()).unwrap();
        let params = TmParams::new(0.5, data.values[0] * 1.01, 0.1).unwrap();
        assert!(maximize_subcritical(&s, params, None, &MaximizeOptions::default()).is_err());
    }
}
