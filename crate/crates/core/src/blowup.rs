//! Diagnostics comparing computed maximizers with the blow-up picture:
//! concentration scale, rescaled profile against the bubble, truncation
//! energies and the weak limit `c_ε u_ε → G`.

use std::f64::consts::PI;
use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use crate::bubble::BubbleProfile;
use crate::error::{Error, Result};
use crate::functional::Functional;
use crate::green::{fundamental, GreenFunction};
use crate::maximizer::MaximizerResult;
use crate::mesh::{norm, sub, Locator, Mesh, Point};
use crate::quadrature::SingularQuadrature;
use crate::spectral::FeSpace;

/// `ln r_ε = ½ ln λ − ln c − 2π(1−β−ε)c²`.
pub fn log_blowup_scale(c: f64, lambda: f64, beta: f64, eps: f64) -> f64 {
    0.5 * lambda.ln() - c.ln() - 2.0 * PI * (1.0 - beta - eps) * c * c
}

/// `r_ε = √λ c⁻¹ e^{−2π(1−β−ε)c²}`.
pub fn blowup_scale(c: f64, lambda: f64, beta: f64, eps: f64) -> Result<f64> {
    if !(c > 0.0 && lambda > 0.0) {
        return Err(Error::InvalidParameter(format!("need c > 0 and lambda > 0, got c = {c}, lambda = {lambda}")));
    }
    Ok(log_blowup_scale(c, lambda, beta, eps).exp())
}

fn element_energy(mesh: &Mesh, t: usize, nodal: &[f64]) -> f64 {
    let g = mesh.gradient(t, nodal);
    mesh.triangle_area(t) * (g[0] * g[0] + g[1] * g[1])
}

fn centroid(mesh: &Mesh, t: usize) -> Point {
    let [a, b, c] = mesh.vertices(t);
    [(a[0] + b[0] + c[0]) / 3.0, (a[1] + b[1] + c[1]) / 3.0]
}

/// Nodal argmax (lowest index among ties).
pub fn nodal_argmax(nodal: &[f64]) -> (usize, f64) {
    let mut best = (0, f64::NEG_INFINITY);
    for (k, &v) in nodal.iter().enumerate() {
        if v > best.1 {
            best = (k, v);
        }
    }
    best
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct ConcentrationReport {
    pub x_node: usize,
    pub x: Point,
    pub c: f64,
    /// `∫_{B_δ(x_ε)} |∇u|² / ∫_Ω |∇u|²`, elements assigned by centroid.
    pub energy_fraction: f64,
}

pub fn concentration_report(mesh: &Mesh, nodal: &[f64], delta: f64) -> Result<ConcentrationReport> {
    if nodal.len() != mesh.n_nodes() {
        return Err(Error::DimensionMismatch { expected: mesh.n_nodes(), got: nodal.len() });
    }
    let (x_node, c) = nodal_argmax(nodal);
    let x = mesh.nodes[x_node];
    let (mut inside, mut total) = (0.0, 0.0);
    for t in 0..mesh.triangles.len() {
        let e = element_energy(mesh, t, nodal);
        total += e;
        if norm(sub(centroid(mesh, t), x)) < delta {
            inside += e;
        }
    }
    let energy_fraction = if total > 0.0 { inside / total } else { 0.0 };
    Ok(ConcentrationReport { x_node, x, c, energy_fraction })
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct ProfileSample {
    /// Rescaled coordinate `y`.
    pub y: Point,
    pub phi: f64,
    pub bubble: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct ProfileReport {
    /// `r_ε^{1/(1−β)}`.
    pub scale: f64,
    pub samples: Vec<ProfileSample>,
    /// `sup_{|y|≤R} |φ_ε(y) − φ₀(y)|` over the samples.
    pub deviation: f64,
    /// Estimated P1 interpolation error of `φ_ε` at the samples.
    pub interpolation_error: f64,
}

/// Node-patch Hessian proxy: largest gradient jump to elements sharing a
/// vertex, divided by the centroid distance.
fn hessian_proxy(mesh: &Mesh, nodal: &[f64], t: usize, patches: &[Vec<usize>]) -> f64 {
    let g = mesh.gradient(t, nodal);
    let ct = centroid(mesh, t);
    let mut worst: f64 = 0.0;
    for &k in &mesh.triangles[t] {
        for &s in &patches[k] {
            if s == t {
                continue;
            }
            let gs = mesh.gradient(s, nodal);
            let d = norm(sub(centroid(mesh, s), ct));
            worst = worst.max(norm(sub(gs, g)) / d);
        }
    }
    worst
}

fn node_patches(mesh: &Mesh) -> Vec<Vec<usize>> {
    let mut patches = vec![Vec::new(); mesh.n_nodes()];
    for (t, tri) in mesh.triangles.iter().enumerate() {
        for &k in tri {
            patches[k].push(t);
        }
    }
    patches
}

/// Sample `φ_ε(y) = c(u(x_ε + r_ε^{1/(1−β)} y) − c)` on `|y| ≤ R` (radial
/// grid of `n_radii` radii × `n_angles` rays) and compare with `φ₀`.
#[allow(clippy::too_many_arguments)]
pub fn rescaled_profile(
    locator: &Locator<'_>,
    mesh: &Mesh,
    nodal: &[f64],
    x: Point,
    c: f64,
    r_eps: f64,
    beta: f64,
    radius: f64,
    n_radii: usize,
    n_angles: usize,
) -> Result<ProfileReport> {
    let bubble = BubbleProfile::new(beta)?;
    let scale = r_eps.powf(1.0 / (1.0 - beta));
    let patches = node_patches(mesh);
    let mut samples = Vec::with_capacity(1 + n_radii * n_angles);
    let mut deviation: f64 = 0.0;
    let mut interp: f64 = 0.0;
    let mut visit = |y: Point| -> Result<()> {
        let p = [x[0] + scale * y[0], x[1] + scale * y[1]];
        let (t, l) = locator
            .locate(p)
            .ok_or_else(|| Error::InvalidParameter(format!("rescaled ball of radius {} leaves the domain", scale * radius)))?;
        let tri = mesh.triangles[t];
        let u = l[0] * nodal[tri[0]] + l[1] * nodal[tri[1]] + l[2] * nodal[tri[2]];
        let phi = c * (u - c);
        let b = bubble.phi0(norm(y));
        deviation = deviation.max((phi - b).abs());
        // A sample at a mesh node is exact; otherwise h²|D²u|/8 scaled by c.
        if l.iter().all(|&v| v < 1.0 - 1e-12) {
            let h = (0..3).map(|e| norm(sub(mesh.nodes[tri[(e + 1) % 3]], mesh.nodes[tri[e]]))).fold(0.0, f64::max);
            interp = interp.max(c * h * h * hessian_proxy(mesh, nodal, t, &patches) / 8.0);
        }
        samples.push(ProfileSample { y, phi, bubble: b });
        Ok(())
    };
    visit([0.0, 0.0])?;
    for i in 1..=n_radii {
        let rho = radius * i as f64 / n_radii as f64;
        for j in 0..n_angles {
            let th = 2.0 * PI * j as f64 / n_angles as f64;
            visit([rho * th.cos(), rho * th.sin()])?;
        }
    }
    Ok(ProfileReport { scale, samples, deviation, interpolation_error: interp })
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct TruncationReport {
    pub gamma: f64,
    /// `∫|∇ min(u, γc)|²`.
    pub lower: f64,
    /// `∫|∇ (u − γc)⁺|²`.
    pub upper: f64,
    pub total: f64,
    /// `|lower + upper − total|` summed over elements not crossing the level.
    pub noncrossing_mismatch: f64,
    /// `total − lower − upper` on elements crossing the level.
    pub crossing_defect: f64,
}

impl TruncationReport {
    pub fn lower_fraction(&self) -> f64 {
        self.lower / self.total
    }
}

/// Energies of the nodal truncations at level `γc`.
pub fn truncation_energy(mesh: &Mesh, nodal: &[f64], gamma: f64, c: f64) -> Result<TruncationReport> {
    if !(gamma > 0.0 && gamma <= 1.0) {
        return Err(Error::InvalidParameter(format!("truncation level {gamma} must lie in (0, 1]")));
    }
    let level = gamma * c;
    let low: Vec<f64> = nodal.iter().map(|&u| u.min(level)).collect();
    let high: Vec<f64> = nodal.iter().map(|&u| (u - level).max(0.0)).collect();
    let mut r = TruncationReport {
        gamma,
        lower: 0.0,
        upper: 0.0,
        total: 0.0,
        noncrossing_mismatch: 0.0,
        crossing_defect: 0.0,
    };
    for (t, tri) in mesh.triangles.iter().enumerate() {
        let (el, eh, et) = (element_energy(mesh, t, &low), element_energy(mesh, t, &high), element_energy(mesh, t, nodal));
        r.lower += el;
        r.upper += eh;
        r.total += et;
        let below = tri.iter().all(|&k| nodal[k] <= level);
        let above = tri.iter().all(|&k| nodal[k] >= level);
        if below || above {
            r.noncrossing_mismatch += (el + eh - et).abs();
        } else {
            r.crossing_defect += et - el - eh;
        }
    }
    Ok(r)
}

/// `sup |(u − γc)⁺ / ((1−γ)c) − 1|` over nodes within `radius` of `x`.
pub fn plateau_deviation(mesh: &Mesh, nodal: &[f64], x: Point, radius: f64, gamma: f64, c: f64) -> f64 {
    let level = gamma * c;
    mesh.nodes
        .iter()
        .zip(nodal)
        .filter(|(p, _)| norm(sub(**p, x)) <= radius)
        .map(|(_, &u)| ((u - level).max(0.0) / ((1.0 - gamma) * c) - 1.0).abs())
        .fold(0.0, f64::max)
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct Annulus {
    pub inner: f64,
    pub outer: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct WeakLimitReport {
    /// `sup |c u − G|` over nodes in the annulus.
    pub sup_deviation: f64,
    /// `(∫_annulus (c u − G)²)^{1/2}`, elements assigned by centroid.
    pub l2_deviation: f64,
    pub lambda_over_c2: f64,
    /// `(θ, λ/c^θ)` for a few `θ < 2`.
    pub lambda_over_c_theta: Vec<(f64, f64)>,
    /// Both sides of `tm(u) ≤ Σ W e^{γ min(u, tc)²} + λ/(t²c²)`.
    pub lemma_lhs: f64,
    pub lemma_rhs: f64,
    pub lemma_truncation: f64,
}

/// Compare `c·u` with `G` on an annulus around the origin and evaluate the
/// companion scalars built from `λ`.
pub fn weak_limit_compare(
    functional: &Functional<'_>,
    nodal: &[f64],
    c: f64,
    green: &GreenFunction,
    annulus: Annulus,
    truncation: f64,
) -> Result<WeakLimitReport> {
    let space: &FeSpace = functional.space;
    let mesh = &space.mesh;
    if !(annulus.inner > 0.0 && annulus.outer > annulus.inner) {
        return Err(Error::InvalidParameter("annulus needs 0 < inner < outer".into()));
    }
    let in_annulus = |p: Point| {
        let r = norm(p);
        r >= annulus.inner && r <= annulus.outer
    };
    let mut sup_deviation: f64 = 0.0;
    for (k, &p) in mesh.nodes.iter().enumerate() {
        if in_annulus(p) {
            sup_deviation = sup_deviation.max((c * nodal[k] - fundamental(p) - green.w[k]).abs());
        }
    }
    let quad = SingularQuadrature::new(0.0)?;
    let mut l2 = 0.0;
    for (t, tri) in mesh.triangles.iter().enumerate() {
        if !in_annulus(centroid(mesh, t)) {
            continue;
        }
        let uv = [nodal[tri[0]], nodal[tri[1]], nodal[tri[2]]];
        let wv = [green.w[tri[0]], green.w[tri[1]], green.w[tri[2]]];
        quad.visit_element(mesh, t, &mut |p, b, wt| {
            let cu = c * (b[0] * uv[0] + b[1] * uv[1] + b[2] * uv[2]);
            let g = fundamental(p) + b[0] * wv[0] + b[1] * wv[1] + b[2] * wv[2];
            l2 += wt * (cu - g).powi(2);
        });
    }
    let u = mesh.restrict(nodal);
    let lambda = functional.lambda_eps(&u)?.value;
    let lhs = functional.tm_value(&u)?.value;
    let level = truncation * c;
    let truncated: Vec<f64> = u.iter().map(|&x| x.min(level)).collect();
    let rhs = functional.tm_value(&truncated)?.value + lambda / (level * level);
    Ok(WeakLimitReport {
        sup_deviation,
        l2_deviation: l2.sqrt(),
        lambda_over_c2: lambda / (c * c),
        lambda_over_c_theta: [1.0, 1.5, 1.9].iter().map(|&th| (th, lambda / c.powf(th))).collect(),
        lemma_lhs: lhs,
        lemma_rhs: rhs,
        lemma_truncation: truncation,
    })
}

#[derive(Clone, Debug)]
pub struct DiagnoseOptions {
    /// Radius of the energy-concentration ball.
    pub delta: f64,
    /// Radius `R` of the rescaled-profile ball.
    pub profile_radius: f64,
    pub n_radii: usize,
    pub n_angles: usize,
    pub gammas: Vec<f64>,
}

impl Default for DiagnoseOptions {
    fn default() -> Self {
        Self { delta: 0.1, profile_radius: 5.0, n_radii: 25, n_angles: 8, gammas: vec![0.25, 0.5, 0.75] }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct DiagnosticRow {
    pub eps: f64,
    pub c: f64,
    pub lambda: f64,
    pub r_eps: f64,
    pub x_norm: f64,
    /// `|x_ε|^{1−β} / r_ε`, reported only.
    pub case_ratio: f64,
    pub energy_fraction: f64,
    /// NaN when the rescaled ball leaves the domain.
    pub profile_deviation: f64,
    pub profile_interpolation_error: f64,
    /// `(γ, truncated energy / total energy)`.
    pub truncation: Vec<(f64, f64)>,
    pub noncrossing_mismatch: f64,
}

/// One diagnostics row per maximizer of a sweep.
pub fn diagnose_sweep(space: &FeSpace, results: &[MaximizerResult], opts: &DiagnoseOptions) -> Result<Vec<DiagnosticRow>> {
    let mesh = &space.mesh;
    let locator = Locator::new(mesh);
    results
        .par_iter()
        .map(|r| {
            let nodal = r.nodal(space);
            let beta = r.params.beta;
            let conc = concentration_report(mesh, &nodal, opts.delta)?;
            let r_eps = blowup_scale(conc.c, r.lambda, beta, r.params.eps)?;
            let x_norm = norm(conc.x);
            let (profile_deviation, profile_interpolation_error) = match rescaled_profile(
                &locator,
                mesh,
                &nodal,
                conc.x,
                conc.c,
                r_eps,
                beta,
                opts.profile_radius,
                opts.n_radii,
                opts.n_angles,
            ) {
                Ok(p) => (p.deviation, p.interpolation_error),
                Err(_) => (f64::NAN, f64::NAN),
            };
            let mut truncation = Vec::new();
            let mut mismatch: f64 = 0.0;
            for &g in &opts.gammas {
                let t = truncation_energy(mesh, &nodal, g, conc.c)?;
                mismatch = mismatch.max(t.noncrossing_mismatch);
                truncation.push((g, t.lower_fraction()));
            }
            Ok(DiagnosticRow {
                eps: r.params.eps,
                c: conc.c,
                lambda: r.lambda,
                r_eps,
                x_norm,
                case_ratio: x_norm.powf(1.0 - beta) / r_eps,
                energy_fraction: conc.energy_fraction,
                profile_deviation,
                profile_interpolation_error,
                truncation,
                noncrossing_mismatch: mismatch,
            })
        })
        .collect()
}

/// CSV with one row per sweep step; truncation columns are `trunc_<γ>`.
pub fn write_diagnostics_csv<W: Write>(rows: &[DiagnosticRow], w: W) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    let mut header: Vec<String> = [
        "eps",
        "c",
        "lambda",
        "r_eps",
        "x_norm",
        "case_ratio",
        "energy_fraction",
        "profile_deviation",
        "profile_interp_error",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    if let Some(first) = rows.first() {
        header.extend(first.truncation.iter().map(|(g, _)| format!("trunc_{g}")));
    }
    wr.write_record(&header)?;
    for r in rows {
        let mut rec = vec![
            format!("{:.6e}", r.eps),
            format!("{:.12e}", r.c),
            format!("{:.12e}", r.lambda),
            format!("{:.6e}", r.r_eps),
            format!("{:.6e}", r.x_norm),
            format!("{:.6e}", r.case_ratio),
            format!("{:.9e}", r.energy_fraction),
            format!("{:.6e}", r.profile_deviation),
            format!("{:.3e}", r.profile_interpolation_error),
        ];
        rec.extend(r.truncation.iter().map(|(_, v)| format!("{v:.9e}")));
        wr.write_record(&rec)?;
    }
    wr.flush()?;
    Ok(())
}
