//! The upper-bound constant, the capacity energy of the neck annulus, and the
//! bubble-glued-to-Green test family that exceeds the bound for small `ε`.

use std::f64::consts::PI;
use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::functional::{Functional, TmParams};
use crate::green::{fundamental, solve_green, weighted_g_squared, GreenFunction};
use crate::mesh::{build_mesh_with, norm, DomainSpec, Mesh, MeshOptions, Point};
use crate::quadrature::SingularQuadrature;
use crate::spectral::{EigenOptions, FeSpace, Field, Subspace};

/// `∫_Ω |x|^{-2β} + (π/(1−β)) e^{1 + 4π(1−β)A₀}` for `β ∈ [0, 1)`.
pub fn upper_bound(beta: f64, a0: f64, weighted_volume: f64) -> f64 {
    weighted_volume + PI / (1.0 - beta) * (1.0 + 4.0 * PI * (1.0 - beta) * a0).exp()
}

/// Dirichlet energy `2π(s−i)² / (ln δ − ln(R r^{1/(1−β)}))` of the radial
/// harmonic function equal to `s` on the inner and `i` on the outer circle.
pub fn capacity_energy(s: f64, i: f64, delta: f64, r_big: f64, r_eps: f64, beta: f64) -> Result<f64> {
    let inner = r_big * r_eps.powf(1.0 / (1.0 - beta));
    if !(inner > 0.0 && delta > inner) {
        return Err(Error::InvalidParameter(format!("degenerate annulus: inner radius {inner}, outer radius {delta}")));
    }
    Ok(2.0 * PI * (s - i).powi(2) / (delta.ln() - inner.ln()))
}

/// `R = (−ln ε)^{1/(1−β)}`.
pub fn neck_factor(eps: f64, beta: f64) -> f64 {
    (-eps.ln()).powf(1.0 / (1.0 - beta))
}

#[derive(Clone, Debug, Serialize)]
pub struct TestFunction {
    pub eps: f64,
    pub beta: f64,
    pub alpha: f64,
    pub r_big: f64,
    /// Inner gluing radius `Rε`; the cutoff vanishes beyond `2Rε`.
    pub inner_radius: f64,
    pub a0: f64,
    pub b: f64,
    /// `c²` from exact continuity at `|x| = Rε` with `b = 1/(4π(1−β))`.
    pub c2: f64,
    /// `−(1/2π)ln ε + A₀ − 1/(4π(1−β)) + ln(π/(1−β))/(4π(1−β))`.
    pub c2_leading: f64,
    /// `(c2 − c2_leading)·R^{2−2β}`, bounded as `ε → 0`.
    pub order_term_ratio: f64,
    /// Computed `‖φ_ε‖_{1,α}` before any normalization.
    pub norm: f64,
    /// Largest jump between neighbouring pieces at nodes of the rings
    /// closest to the gluing circles.
    pub continuity_mismatch: f64,
    #[serde(skip)]
    pub nodal: Vec<f64>,
}

impl TestFunction {
    pub fn c(&self) -> f64 {
        self.c2.sqrt()
    }

    fn k(&self) -> f64 {
        4.0 * PI * (1.0 - self.beta)
    }

    fn bubble_piece(&self, r: f64) -> f64 {
        let a = PI / (1.0 - self.beta);
        let c = self.c();
        c + (-(a * (r / self.eps).powf(2.0 - 2.0 * self.beta)).ln_1p() / self.k() + self.b) / c
    }

    fn cutoff(&self, r: f64) -> f64 {
        ((2.0 * self.inner_radius - r) / self.inner_radius).clamp(0.0, 1.0)
    }

    /// `(G − ηψ)/c` with `ψ = w − A₀`, given the regular part `w` at `p`.
    fn neck_piece(&self, p: Point, w: f64) -> f64 {
        let eta = self.cutoff(norm(p));
        (fundamental(p) + self.a0 + (1.0 - eta) * (w - self.a0)) / self.c()
    }

    /// The three-piece definition at `p`, given the regular part `w(p)`.
    pub fn eval_with(&self, p: Point, w: f64) -> f64 {
        let r = norm(p);
        if r <= self.inner_radius {
            self.bubble_piece(r)
        } else if r < 2.0 * self.inner_radius {
            self.neck_piece(p, w)
        } else {
            (fundamental(p) + w) / self.c()
        }
    }
}

/// Distance from the origin to the outer boundary polygon of the mesh.
pub fn mesh_inradius(mesh: &Mesh) -> f64 {
    let ring = *mesh.rings.last().expect("mesh has rings");
    (0..ring.len)
        .map(|j| {
            let a = mesh.nodes[ring.first_node + j];
            let b = mesh.nodes[ring.first_node + (j + 1) % ring.len];
            let d = [b[0] - a[0], b[1] - a[1]];
            let t = (-(a[0] * d[0] + a[1] * d[1]) / (d[0] * d[0] + d[1] * d[1])).clamp(0.0, 1.0);
            norm([a[0] + t * d[0], a[1] + t * d[1]])
        })
        .fold(f64::INFINITY, f64::min)
}

/// Assemble the nodal test function from a Green's function on `space`.
pub fn build_test_function(space: &FeSpace, g: &GreenFunction, beta: f64, eps: f64) -> Result<TestFunction> {
    if !(0.0..1.0).contains(&beta) || !(eps > 0.0 && eps < 1.0) {
        return Err(Error::InvalidParameter(format!("need beta in [0, 1) and eps in (0, 1), got {beta}, {eps}")));
    }
    let mesh = &space.mesh;
    let r_big = neck_factor(eps, beta);
    let inner_radius = r_big * eps;
    let reach = mesh_inradius(mesh);
    if 2.0 * inner_radius >= reach {
        return Err(Error::InvalidParameter(format!(
            "cutoff ball of radius {} does not fit inside the domain (inradius {reach})",
            2.0 * inner_radius
        )));
    }
    let k = 4.0 * PI * (1.0 - beta);
    let a = PI / (1.0 - beta);
    let t = a * r_big.powf(2.0 - 2.0 * beta);
    let b = 1.0 / k;
    let c2 = -inner_radius.ln() / (2.0 * PI) + g.a0 + t.ln_1p() / k - b;
    let c2_leading = -eps.ln() / (2.0 * PI) + g.a0 - 1.0 / k + a.ln() / k;
    if !(c2 > 0.0) {
        return Err(Error::InvalidParameter(format!("c^2 = {c2} is not positive")));
    }
    let mut tf = TestFunction {
        eps,
        beta,
        alpha: g.alpha,
        r_big,
        inner_radius,
        a0: g.a0,
        b,
        c2,
        c2_leading,
        order_term_ratio: (c2 - c2_leading) * r_big.powf(2.0 - 2.0 * beta),
        norm: f64::NAN,
        continuity_mismatch: 0.0,
        nodal: Vec::new(),
    };
    tf.nodal = mesh
        .nodes
        .iter()
        .zip(&g.w)
        .zip(&mesh.boundary)
        .map(|((&p, &w), &bd)| if bd { 0.0 } else { tf.eval_with(p, w) })
        .collect();

    let mut mismatch: f64 = 0.0;
    for (radius, inner) in [(inner_radius, true), (2.0 * inner_radius, false)] {
        if let Some(ring) = mesh.nearest_ring(radius / mesh_scale_ref(mesh)) {
            for j in ring.first_node..ring.first_node + ring.len {
                let p = mesh.nodes[j];
                let (lhs, rhs) = if inner {
                    (tf.bubble_piece(norm(p)), tf.neck_piece(p, g.w[j]))
                } else {
                    (tf.neck_piece(p, g.w[j]), (fundamental(p) + g.w[j]) / tf.c())
                };
                mismatch = mismatch.max((lhs - rhs).abs());
            }
        }
    }
    tf.continuity_mismatch = mismatch;
    tf.norm = space.norm_1alpha(&mesh.restrict(&tf.nodal), g.alpha)?;
    Ok(tf)
}

/// Ring scales are relative to the radius of the outermost ring node.
fn mesh_scale_ref(mesh: &Mesh) -> f64 {
    let ring = *mesh.rings.last().expect("mesh has rings");
    let scale = ring.scale;
    mesh.nodes[ring.first_node..ring.first_node + ring.len].iter().map(|&p| norm(p)).fold(0.0, f64::max) / scale
}

/// Mesh resolution for one member of the family.
#[derive(Clone, Debug, Serialize)]
pub struct BoundOptions {
    pub h: f64,
    /// Innermost ring radius as a multiple of `ε`.
    pub r_min_factor: f64,
    pub ratio: f64,
}

impl Default for BoundOptions {
    fn default() -> Self {
        Self { h: 1.0 / 32.0, r_min_factor: 0.01, ratio: 1.15 }
    }
}

/// Graded mesh with rings placed on both gluing circles.
pub fn test_function_mesh(spec: &DomainSpec, opts: &BoundOptions, eps: f64, beta: f64) -> Result<Mesh> {
    let inner = neck_factor(eps, beta) * eps;
    let r_min = (opts.r_min_factor * eps).min(0.5 * opts.h);
    build_mesh_with(spec, &MeshOptions::graded(opts.h, r_min, opts.ratio).with_snap_radii([inner, 2.0 * inner]))
}

/// Element-quadrature value of `∫|x|^{-2β} e^{γ φ_h²}` for the P1 field,
/// an independent check on the nodal functional.
pub fn tm_elementwise(mesh: &Mesh, nodal: &[f64], beta: f64, gamma: f64) -> Result<f64> {
    let quad = SingularQuadrature::new(beta)?;
    let mut total = 0.0;
    for (t, tri) in mesh.triangles.iter().enumerate() {
        let v = [nodal[tri[0]], nodal[tri[1]], nodal[tri[2]]];
        quad.visit_element(mesh, t, &mut |_, l, wt| {
            let u = l[0] * v[0] + l[1] * v[1] + l[2] * v[2];
            total += wt * (gamma * u * u).exp();
        });
    }
    Ok(total)
}

#[derive(Clone, Debug, Serialize)]
pub struct BoundRow {
    pub eps: f64,
    pub c2: f64,
    pub norm: f64,
    pub continuity_mismatch: f64,
    pub a0: f64,
    pub weighted_volume: f64,
    pub bound: f64,
    /// `tm(φ_ε/‖φ_ε‖)` at `γ = 4π(1−β)`.
    pub tm: f64,
    /// `|tm − element-quadrature tm|`.
    pub error_bar: f64,
    pub weighted_g2: f64,
    /// `(4π(1−β)/c²) ∫|x|^{-2β}G²`.
    pub gap_term: f64,
    pub excess: f64,
    /// `excess · c² / (4π(1−β)∫|x|^{-2β}G²)`.
    pub excess_ratio: f64,
    /// Pairings `(φ_ε, ψ_i)` before projection (subspace mode only).
    pub pairings: Vec<f64>,
    /// `|∫φ*ψ_i|` after projection (subspace mode only).
    pub orthogonality: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct BoundReport {
    pub beta: f64,
    pub alpha: f64,
    pub subspace_level: Option<usize>,
    pub a0: f64,
    pub weighted_volume: f64,
    pub bound: f64,
    pub rows: Vec<BoundRow>,
}

impl BoundReport {
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record([
            "eps",
            "c2",
            "norm",
            "continuity_mismatch",
            "bound",
            "tm",
            "error_bar",
            "gap_term",
            "excess",
            "excess_ratio",
            "max_pairing",
            "orthogonality",
        ])?;
        for r in &self.rows {
            let pairing = r.pairings.iter().fold(0.0f64, |m, p| m.max(p.abs()));
            wr.write_record([
                format!("{:.6e}", r.eps),
                format!("{:.12e}", r.c2),
                format!("{:.12e}", r.norm),
                format!("{:.3e}", r.continuity_mismatch),
                format!("{:.12e}", r.bound),
                format!("{:.12e}", r.tm),
                format!("{:.3e}", r.error_bar),
                format!("{:.9e}", r.gap_term),
                format!("{:.9e}", r.excess),
                format!("{:.6e}", r.excess_ratio),
                format!("{pairing:.6e}"),
                format!("{:.3e}", r.orthogonality),
            ])?;
        }
        wr.flush()?;
        Ok(())
    }

    /// Gnuplot script plotting excess and gap term against `ε` on log axes.
    pub fn plot_script(&self, csv_name: &str) -> String {
        format!(
            "set datafile separator ','\nset logscale x\nset xlabel 'eps'\nset ylabel 'excess over bound'\n\
             set key top right\nplot '{csv_name}' every ::1 using 1:9 with linespoints title 'excess', \\\n     \
             '{csv_name}' every ::1 using 1:8 with linespoints title 'gap term'\n"
        )
    }
}

/// One member of the family on its own mesh: build, optionally project onto
/// `E_ℓ^⊥`, normalize, evaluate.
fn bound_row(spec: &DomainSpec, opts: &BoundOptions, beta: f64, alpha: f64, level: Option<usize>, eps: f64) -> Result<BoundRow> {
    let space = FeSpace::new(test_function_mesh(spec, opts, eps, beta)?);
    let sub = match level {
        Some(l) => Some(subspace_for(&space, l)?),
        None => None,
    };
    let g = solve_green(&space, alpha, sub.as_ref())?;
    let tf = build_test_function(&space, &g, beta, eps)?;
    let (field, norm, pairings, orthogonality) = match &sub {
        Some(s) => {
            let p = project_test_function(&space, &tf, &g, s)?;
            let orth = s.basis.iter().map(|psi| space.l2_pairing(&p.field, psi).abs()).fold(0.0, f64::max);
            (p.field, tf.norm, p.pairings, orth)
        }
        None => {
            let u = space.mesh.restrict(&tf.nodal);
            (u.iter().map(|v| v / tf.norm).collect(), tf.norm, Vec::new(), 0.0)
        }
    };
    let params = TmParams::critical(beta, alpha)?;
    let functional = Functional::new(&space, params)?;
    let tm = functional.tm_value(&field)?;
    if tm.overflow {
        return Err(Error::InvalidParameter(format!("exponent overflow evaluating the test function at eps = {eps}")));
    }
    let alt = tm_elementwise(&space.mesh, &space.mesh.expand(&field), beta, params.gamma)?;
    let volume = functional.weighted_volume();
    let bound = upper_bound(beta, g.a0, volume);
    let wg2 = weighted_g_squared(&space, &g, beta)?;
    let k = 4.0 * PI * (1.0 - beta);
    let excess = tm.value - bound;
    Ok(BoundRow {
        eps,
        c2: tf.c2,
        norm,
        continuity_mismatch: tf.continuity_mismatch,
        a0: g.a0,
        weighted_volume: volume,
        bound,
        tm: tm.value,
        error_bar: (tm.value - alt).abs(),
        weighted_g2: wg2,
        gap_term: k * wg2 / tf.c2,
        excess,
        excess_ratio: excess * tf.c2 / (k * wg2),
        pairings,
        orthogonality,
    })
}

fn subspace_for(space: &FeSpace, level: usize) -> Result<Subspace> {
    let mut count = 4 * level + 4;
    loop {
        let data = space.eigenpairs(count, &EigenOptions::default())?;
        if data.n_groups() > level {
            return data.subspace(level);
        }
        count *= 2;
    }
}

/// Compare the test family with the upper bound along `eps_list`. With
/// `level = Some(ℓ)` the members are projected onto `E_ℓ^⊥` and the Green's
/// function carries the matching sinks. The ladder runs in parallel; rows
/// keep the order of `eps_list`.
pub fn verify_exceeds(
    spec: &DomainSpec,
    opts: &BoundOptions,
    beta: f64,
    alpha: f64,
    level: Option<usize>,
    eps_list: &[f64],
) -> Result<BoundReport> {
    let base = FeSpace::new(build_mesh_with(spec, &MeshOptions::uniform(opts.h))?);
    let sub = match level {
        Some(l) => Some(subspace_for(&base, l)?),
        None => None,
    };
    let g = solve_green(&base, alpha, sub.as_ref())?;
    let volume = base.node_weights(beta)?.volume();
    let rows = eps_list
        .par_iter()
        .map(|&eps| bound_row(spec, opts, beta, alpha, level, eps))
        .collect::<Result<Vec<_>>>()?;
    Ok(BoundReport {
        beta,
        alpha,
        subspace_level: level,
        a0: g.a0,
        weighted_volume: volume,
        bound: upper_bound(beta, g.a0, volume),
        rows,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct ProjectedTestFunction {
    /// `φ*_ε` on the interior dofs, `‖φ*_ε‖_{1,α} = 1`.
    #[serde(skip)]
    pub field: Field,
    /// `(φ_ε, ψ_i)` with the pieces integrated by quadrature.
    pub pairings: Vec<f64>,
    /// The same pairings from the P1 mass matrix (used for the projection).
    pub discrete_pairings: Vec<f64>,
    /// `‖φ̃_ε‖_{1,α}` before normalization.
    pub projected_norm: f64,
}

/// `φ*_ε = φ̃_ε / ‖φ̃_ε‖_{1,α}` with `φ̃_ε = φ_ε − Σ(φ_ε, ψ_i)ψ_i`.
///
/// Outside `B_{2Rε}` the test function is `G/c`, whose pairings vanish by
/// construction of the Green's function; the reported pairing is that
/// residual plus the quadrature of `(φ_ε − G/c)ψ_i` over `B_{2Rε}`.
pub fn project_test_function(space: &FeSpace, tf: &TestFunction, g: &GreenFunction, sub: &Subspace) -> Result<ProjectedTestFunction> {
    let mesh = &space.mesh;
    let quad = SingularQuadrature::new(0.0)?;
    let reach = 2.0 * tf.inner_radius;
    let c = tf.c();
    let mut pairings = Vec::with_capacity(sub.basis.len());
    for (i, psi) in sub.basis.iter().enumerate() {
        let psi_nodal = mesh.expand(psi);
        let mut inside = 0.0;
        for (t, tri) in mesh.triangles.iter().enumerate() {
            let [p, q, r] = mesh.vertices(t);
            if norm(p).max(norm(q)).max(norm(r)) > reach * (1.0 + 1e-9) {
                continue;
            }
            let wv = [g.w[tri[0]], g.w[tri[1]], g.w[tri[2]]];
            let pv = [psi_nodal[tri[0]], psi_nodal[tri[1]], psi_nodal[tri[2]]];
            quad.visit_element(mesh, t, &mut |x, l, wt| {
                let w = l[0] * wv[0] + l[1] * wv[1] + l[2] * wv[2];
                let ps = l[0] * pv[0] + l[1] * pv[1] + l[2] * pv[2];
                inside += wt * (tf.eval_with(x, w) - (fundamental(x) + w) / c) * ps;
            });
        }
        let outside = g.orthogonality.get(i).copied().unwrap_or(0.0) / c;
        pairings.push(inside + outside);
    }
    let u = mesh.restrict(&tf.nodal);
    let discrete_pairings: Vec<f64> = sub.basis.iter().map(|psi| space.l2_pairing(&u, psi)).collect();
    let projected = space.project_perp(&u, &sub.basis);
    let projected_norm = space.norm_1alpha(&projected, tf.alpha)?;
    if !(projected_norm > 0.0) {
        return Err(Error::NotANorm(projected_norm));
    }
    let field = projected.iter().map(|v| v / projected_norm).collect();
    Ok(ProjectedTestFunction { field, pairings, discrete_pairings, projected_norm })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::build_mesh;

    #[test]
    fn bound_constant() {
        let want = 2.0 * PI + 2.0 * PI * 1f64.exp();
        assert!((upper_bound(0.5, 0.0, 2.0 * PI) - want).abs() < 1e-12);
        assert!((want - 23.362_654).abs() < 1e-6);
        assert!((upper_bound(0.0, 0.0, PI) - (PI + PI * 1f64.exp())).abs() < 1e-12);
        let t = 0.1;
        let shifted = upper_bound(0.5, t, 0.0) / upper_bound(0.5, 0.0, 0.0);
        assert!((shifted - (2.0 * PI * t).exp()).abs() < 1e-12);
    }

    #[test]
    fn capacity_matches_fem_energy() {
        let (s, i) = (1.0, 0.0);
        assert!((capacity_energy(s, i, (2.0 * PI).exp(), 1.0, 1.0, 0.5).unwrap() - 1.0).abs() < 1e-14);
        assert!(capacity_energy(1.0, 0.0, 0.1, 1.0, 0.5, 0.5).is_err());
        let a = capacity_energy(1.0, 0.0, 0.5, 1.0, 0.01, 0.5).unwrap();
        let b = capacity_energy(1.0, 0.0, 1.0, 1.0, 0.01, 0.5).unwrap();
        assert!(b < a);
        // r_ε = 0.01, β = 1/2: inner radius 1e-4; harmonic annulus to δ = 1.
        let inner: f64 = 1e-4;
        let mesh = build_mesh_with(&DomainSpec::unit_disk(), &MeshOptions::graded(1.0 / 16.0, 1e-5, 1.1).with_snap_radii([inner])).unwrap();
        let h = mesh.interpolate(|p| {
            let r = norm(p).max(inner);
            i + (s - i) * (r.ln() / inner.ln())
        });
        let space = FeSpace::new(mesh);
        let fem = space.dirichlet(&space.mesh.restrict(&h));
        let exact = capacity_energy(s, i, 1.0, 1.0, 0.01, 0.5).unwrap();
        assert!((fem / exact - 1.0).abs() < 0.01, "{fem} vs {exact}");
    }

    #[test]
    fn test_function_structure() {
        let (beta, eps) = (0.5, 1e-2);
        let space = FeSpace::new(test_function_mesh(&DomainSpec::unit_disk(), &BoundOptions::default(), eps, beta).unwrap());
        let g = solve_green(&space, 0.0, None).unwrap();
        let tf = build_test_function(&space, &g, beta, eps).unwrap();
        assert!((tf.inner_radius - 0.2120).abs() < 1e-3);
        assert!((tf.nodal[0] - (tf.c() + tf.b / tf.c())).abs() < 1e-14);
        assert!(tf.continuity_mismatch < 1e-12, "{}", tf.continuity_mismatch);
        assert!(tf.nodal.iter().all(|v| v.is_finite() && *v >= 0.0));
        // Ball of radius 2Rε must fit.
        let small = FeSpace::new(build_mesh(&DomainSpec::disk(0.3), 0.3 / 16.0).unwrap());
        let g_small = solve_green(&small, 0.0, None).unwrap();
        assert!(build_test_function(&small, &g_small, beta, eps).is_err());
    }
}
