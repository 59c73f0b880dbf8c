//! Quadrature for integrands carrying the weight `|x|^{-2β}`.
//!
//! Triangles incident to the origin are mapped to polar-like coordinates
//! `x = s·(A + t(B − A))`, in which the weight factors as `s^{-2β}` times a
//! smooth function of `t`. Products of the weight with P1 basis functions are
//! then integrated exactly in `s`. Everything else uses a degree-4 symmetric
//! rule, recursively subdivided while an element is large compared to its
//! distance from the origin.

use std::num::NonZeroUsize;

use gauss_quad::legendre::GaussLegendre;

use crate::error::{Error, Result};
use crate::mesh::{cross, norm, Mesh, Point};

/// Six-point degree-4 rule: (barycentric coordinates, weight / area).
const SYMMETRIC_RULE: [([f64; 3], f64); 6] = {
    const A: f64 = 0.445_948_490_915_965;
    const WA: f64 = 0.223_381_589_678_011;
    const B: f64 = 0.091_576_213_509_771;
    const WB: f64 = 0.109_951_743_655_322;
    [
        ([A, A, 1.0 - 2.0 * A], WA),
        ([A, 1.0 - 2.0 * A, A], WA),
        ([1.0 - 2.0 * A, A, A], WA),
        ([B, B, 1.0 - 2.0 * B], WB),
        ([B, 1.0 - 2.0 * B, B], WB),
        ([1.0 - 2.0 * B, B, B], WB),
    ]
};

/// Subdivide a non-origin element while `diameter > SEPARATION · distance`.
const SEPARATION: f64 = 0.2;

/// Ratio between consecutive radial panels on origin-incident elements.
const PANEL_RATIO: f64 = 0.25;

#[derive(Clone, Debug)]
pub struct SingularQuadrature {
    pub beta: f64,
    /// Gauss points per direction on origin-incident elements.
    pub order: usize,
    /// Number of geometric radial panels (callables) and the maximum
    /// subdivision depth of non-origin elements.
    pub depth: usize,
    gauss: Vec<(f64, f64)>,
    radial: Vec<(f64, f64)>,
}

fn gauss_unit(n: usize) -> Vec<(f64, f64)> {
    let rule = GaussLegendre::new(NonZeroUsize::new(n.max(1)).unwrap());
    rule.as_node_weight_pairs().iter().map(|&(x, w)| (0.5 * (x + 1.0), 0.5 * w)).collect()
}

/// What `integrate_singular` integrates against the weight.
pub enum Integrand<'a> {
    /// Nodal values of a P1 field (all mesh nodes).
    Nodal(&'a [f64]),
    Callable(&'a dyn Fn(Point) -> f64),
}

/// `∫_Ω |x|^{-2β} f dx`.
pub fn integrate_singular(mesh: &Mesh, f: Integrand<'_>, beta: f64) -> Result<f64> {
    let q = SingularQuadrature::new(beta)?;
    match f {
        Integrand::Nodal(v) => {
            if v.len() != mesh.n_nodes() {
                return Err(Error::DimensionMismatch { expected: mesh.n_nodes(), got: v.len() });
            }
            Ok(q.node_weights(mesh).iter().zip(v).map(|(w, f)| w * f).sum())
        }
        Integrand::Callable(f) => Ok(q.integrate_fn(mesh, f)),
    }
}

impl SingularQuadrature {
    pub fn new(beta: f64) -> Result<Self> {
        Self::with_refinement(beta, 20, 12)
    }

    pub fn with_refinement(beta: f64, order: usize, depth: usize) -> Result<Self> {
        if !(0.0..1.0).contains(&beta) {
            return Err(Error::InvalidParameter(format!("weight exponent beta = {beta} must lie in [0, 1)")));
        }
        if order == 0 || depth == 0 {
            return Err(Error::InvalidParameter("quadrature order and refinement depth must be >= 1".into()));
        }
        Ok(Self { beta, order, depth, gauss: gauss_unit(order), radial: gauss_unit(8) })
    }

    fn weight(&self, p: Point) -> f64 {
        if self.beta == 0.0 {
            1.0
        } else {
            (p[0] * p[0] + p[1] * p[1]).powf(-self.beta)
        }
    }

    /// `W_j = ∫ |x|^{-2β} φ_j dx` for every node, so that the weighted
    /// integral of a P1 field is `Σ W_j f_j`.
    pub fn node_weights(&self, mesh: &Mesh) -> Vec<f64> {
        let mut w = vec![0.0; mesh.n_nodes()];
        for (t, tri) in mesh.triangles.iter().enumerate() {
            let local = self.element_weights(mesh, t);
            for k in 0..3 {
                w[tri[k]] += local[k];
            }
        }
        w
    }

    /// Weighted integrals of the three local basis functions of element `t`.
    pub fn element_weights(&self, mesh: &Mesh, t: usize) -> [f64; 3] {
        let tri = mesh.triangles[t];
        let verts = mesh.vertices(t);
        if let Some(k) = origin_corner(mesh, tri) {
            let a = verts[(k + 1) % 3];
            let b = verts[(k + 2) % 3];
            let [wo, wa, wb] = self.origin_basis_weights(a, b);
            let mut out = [0.0; 3];
            out[k] = wo;
            out[(k + 1) % 3] = wa;
            out[(k + 2) % 3] = wb;
            out
        } else {
            let mut out = [0.0; 3];
            self.subdivided(verts, IDENTITY, 0, &mut |p, bary, w| {
                let ww = w * self.weight(p);
                for k in 0..3 {
                    out[k] += ww * bary[k];
                }
            });
            out
        }
    }

    /// Exact-in-radius weights on the element (0, A, B).
    fn origin_basis_weights(&self, a: Point, b: Point) -> [f64; 3] {
        let two_area = cross(a, b);
        let e = 2.0 - 2.0 * self.beta;
        // ∫ s^{1-2β}(1-s) ds and ∫ s^{2-2β} ds.
        let s_origin = 1.0 / e - 1.0 / (e + 1.0);
        let s_edge = 1.0 / (e + 1.0);
        let (mut i0, mut i1, mut i2) = (0.0, 0.0, 0.0);
        for &(t, w) in &self.gauss {
            let p = [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])];
            let g = w * self.weight(p);
            i0 += g;
            i1 += g * (1.0 - t);
            i2 += g * t;
        }
        [two_area * s_origin * i0, two_area * s_edge * i1, two_area * s_edge * i2]
    }

    /// `∫_Ω |x|^{-2β} f dx` for a callable `f`, which may carry an integrable
    /// logarithmic singularity at the origin.
    pub fn integrate_fn(&self, mesh: &Mesh, f: &dyn Fn(Point) -> f64) -> f64 {
        (0..mesh.triangles.len()).map(|t| self.integrate_fn_on(mesh, t, f)).sum()
    }

    pub fn integrate_fn_on(&self, mesh: &Mesh, t: usize, f: &dyn Fn(Point) -> f64) -> f64 {
        let mut acc = 0.0;
        self.visit_element(mesh, t, &mut |p, _, w| acc += w * f(p));
        acc
    }

    /// `∫_Ω |x|^{-2β} f φ_j dx` for every node `j`.
    pub fn node_integrals(&self, mesh: &Mesh, f: &dyn Fn(Point) -> f64) -> Vec<f64> {
        let mut out = vec![0.0; mesh.n_nodes()];
        for (t, tri) in mesh.triangles.iter().enumerate() {
            self.visit_element(mesh, t, &mut |p, bary, w| {
                let v = w * f(p);
                for k in 0..3 {
                    out[tri[k]] += v * bary[k];
                }
            });
        }
        out
    }

    /// Visit the quadrature points of element `t` with their barycentric
    /// coordinates and weights that already include `|x|^{-2β}`.
    pub fn visit_element(&self, mesh: &Mesh, t: usize, visit: &mut dyn FnMut(Point, [f64; 3], f64)) {
        let tri = mesh.triangles[t];
        let verts = mesh.vertices(t);
        if let Some(k) = origin_corner(mesh, tri) {
            let (ka, kb) = ((k + 1) % 3, (k + 2) % 3);
            self.visit_origin(verts[ka], verts[kb], &mut |p, local, w| {
                let mut bary = [0.0; 3];
                bary[k] = local[0];
                bary[ka] = local[1];
                bary[kb] = local[2];
                visit(p, bary, w);
            });
        } else {
            self.subdivided(verts, IDENTITY, 0, &mut |p, bary, w| visit(p, bary, w * self.weight(p)));
        }
    }

    /// Points on (0, A, B) in `x = s(A + t(B − A))` with geometric radial
    /// panels; barycentric order is (origin, A, B).
    fn visit_origin(&self, a: Point, b: Point, visit: &mut dyn FnMut(Point, [f64; 3], f64)) {
        let two_area = cross(a, b);
        let e = 2.0 - 2.0 * self.beta;
        let inner = PANEL_RATIO.powi(self.depth as i32);
        for &(t, wt) in &self.gauss {
            let p = [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])];
            let angular = two_area * wt * self.weight(p);
            let mut emit = |s: f64, w: f64| visit([s * p[0], s * p[1]], [1.0 - s, s * (1.0 - t), s * t], angular * w);
            let mut hi = 1.0;
            for _ in 0..self.depth {
                let lo = hi * PANEL_RATIO;
                for &(x, w) in &self.radial {
                    let s = lo + (hi - lo) * x;
                    emit(s, (hi - lo) * w * s.powf(1.0 - 2.0 * self.beta));
                }
                hi = lo;
            }
            // Innermost panel with s = δ σ^{1/(2-2β)} absorbing the weight.
            for &(x, w) in &self.radial {
                emit(inner * x.powf(1.0 / e), inner.powf(e) / e * w);
            }
        }
    }

    /// Visit quadrature points of the (recursively subdivided) element with
    /// corners `verts`; `bary` maps sub-element corners to barycentric
    /// coordinates of the original element.
    fn subdivided(
        &self,
        verts: [Point; 3],
        bary: [[f64; 3]; 3],
        level: usize,
        visit: &mut dyn FnMut(Point, [f64; 3], f64),
    ) {
        let area = 0.5 * cross(sub(verts[1], verts[0]), sub(verts[2], verts[0]));
        let diam = (0..3).map(|e| norm(sub(verts[(e + 1) % 3], verts[e]))).fold(0.0, f64::max);
        let dist = (0..3)
            .map(|e| segment_distance_to_origin(verts[e], verts[(e + 1) % 3]))
            .fold(f64::INFINITY, f64::min);
        if self.beta > 0.0 && level < self.depth && diam > SEPARATION * dist {
            let mid = |i: usize, j: usize| {
                (
                    [0.5 * (verts[i][0] + verts[j][0]), 0.5 * (verts[i][1] + verts[j][1])],
                    [
                        0.5 * (bary[i][0] + bary[j][0]),
                        0.5 * (bary[i][1] + bary[j][1]),
                        0.5 * (bary[i][2] + bary[j][2]),
                    ],
                )
            };
            let (m01, b01) = mid(0, 1);
            let (m12, b12) = mid(1, 2);
            let (m20, b20) = mid(2, 0);
            self.subdivided([verts[0], m01, m20], [bary[0], b01, b20], level + 1, visit);
            self.subdivided([m01, verts[1], m12], [b01, bary[1], b12], level + 1, visit);
            self.subdivided([m20, m12, verts[2]], [b20, b12, bary[2]], level + 1, visit);
            self.subdivided([m12, m20, m01], [b12, b20, b01], level + 1, visit);
            return;
        }
        for (l, w) in SYMMETRIC_RULE {
            let p = [
                l[0] * verts[0][0] + l[1] * verts[1][0] + l[2] * verts[2][0],
                l[0] * verts[0][1] + l[1] * verts[1][1] + l[2] * verts[2][1],
            ];
            let mut b = [0.0; 3];
            for k in 0..3 {
                b[k] = l[0] * bary[0][k] + l[1] * bary[1][k] + l[2] * bary[2][k];
            }
            visit(p, b, w * area);
        }
    }
}

const IDENTITY: [[f64; 3]; 3] = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];

fn sub(a: Point, b: Point) -> Point {
    [a[0] - b[0], a[1] - b[1]]
}

fn segment_distance_to_origin(a: Point, b: Point) -> f64 {
    let ab = sub(b, a);
    let len2 = ab[0] * ab[0] + ab[1] * ab[1];
    let t = if len2 > 0.0 { (-(a[0] * ab[0] + a[1] * ab[1]) / len2).clamp(0.0, 1.0) } else { 0.0 };
    norm([a[0] + t * ab[0], a[1] + t * ab[1]])
}

/// Local index of the origin node in `tri`, if present.
fn origin_corner(mesh: &Mesh, tri: [usize; 3]) -> Option<usize> {
    (0..3).find(|&k| {
        let p = mesh.nodes[tri[k]];
        p[0] == 0.0 && p[1] == 0.0
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_mesh, DomainSpec};
    use std::f64::consts::PI;

    #[test]
    fn constant_on_unit_disk_matches_radial_integral() {
        // Radial oracle: 2π ∫_0^1 r^{1-2β} dr = π/(1-β); the mesh area defect is O(h²).
        let mesh = build_mesh(&DomainSpec::unit_disk(), 1.0 / 128.0).unwrap();
        let ones = vec![1.0; mesh.n_nodes()];
        for beta in [0.1, 0.25, 0.5, 0.75] {
            let exact = PI / (1.0 - beta);
            let nodal = integrate_singular(&mesh, Integrand::Nodal(&ones), beta).unwrap();
            let callable = integrate_singular(&mesh, Integrand::Callable(&|_| 1.0), beta).unwrap();
            assert!((nodal - exact).abs() / exact < 1e-4, "beta {beta}: {nodal} vs {exact}");
            assert!((callable - nodal).abs() / exact < 1e-9, "beta {beta}: {callable} vs {nodal}");
        }
    }

    #[test]
    fn weight_free_and_cancelled_cases() {
        let square = build_mesh(&DomainSpec::square(1.0), 0.25).unwrap();
        let ones = vec![1.0; square.n_nodes()];
        let area = integrate_singular(&square, Integrand::Nodal(&ones), 0.0).unwrap();
        assert!((area - 4.0).abs() < 1e-12);

        let disk = build_mesh(&DomainSpec::unit_disk(), 1.0 / 64.0).unwrap();
        let cancel = |p: Point| norm(p).powf(1.0);
        let v = integrate_singular(&disk, Integrand::Callable(&cancel), 0.5).unwrap();
        assert!((v - disk.area()).abs() < 1e-10);
    }

    #[test]
    fn beta_outside_range_is_rejected() {
        let mesh = build_mesh(&DomainSpec::unit_disk(), 0.5).unwrap();
        assert!(integrate_singular(&mesh, Integrand::Callable(&|_| 1.0), 1.0).is_err());
        assert!(integrate_singular(&mesh, Integrand::Callable(&|_| 1.0), -0.1).is_err());
    }

    #[test]
    fn origin_element_weights_match_substituted_gauss_rule() {
        // Independent route: σ = s^{2-2β} absorbs the radial weight, then a
        // plain tensor Gauss rule in (σ, t).
        let q = SingularQuadrature::new(0.5).unwrap();
        let a = [0.3, -0.05];
        let b = [0.1, 0.25];
        let w = q.origin_basis_weights(a, b);
        let beta: f64 = 0.5;
        let e = 2.0 - 2.0 * beta;
        let g = gauss_unit(40);
        let mut oracle = [0.0; 3];
        for &(sig, ws) in &g {
            let s = sig.powf(1.0 / e);
            for &(t, wt) in &g {
                let r = norm([a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])]);
                // ds s^{1-2β} = dσ / e; weight |x|^{-2β} = s^{-2β} r^{-2β}.
                let base = cross(a, b) * ws * wt / e * r.powf(-2.0 * beta);
                oracle[0] += base * (1.0 - s);
                oracle[1] += base * s * (1.0 - t);
                oracle[2] += base * s * t;
            }
        }
        for k in 0..3 {
            assert!((w[k] - oracle[k]).abs() < 1e-12 * oracle[0].abs(), "{w:?} vs {oracle:?}");
        }
    }

    #[test]
    fn logarithmic_integrand_on_unit_disk() {
        // ∫_{B_1} |x|^{-1} log²|x| dx = 2π ∫_0^1 log² r dr = 4π.
        let mesh = build_mesh(&DomainSpec::unit_disk(), 1.0 / 64.0).unwrap();
        let q = SingularQuadrature::new(0.5).unwrap();
        let v = q.integrate_fn(&mesh, &|p| norm(p).ln().powi(2));
        assert!((v - 4.0 * PI).abs() / (4.0 * PI) < 1e-3, "{v}");
    }

    #[test]
    fn node_integrals_of_one_are_node_weights() {
        let mesh = build_mesh(&DomainSpec::disk_at([0.2, 0.1], 1.0), 0.1).unwrap();
        let q = SingularQuadrature::new(0.3).unwrap();
        let a = q.node_weights(&mesh);
        let b = q.node_integrals(&mesh, &|_| 1.0);
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-8 * x.abs().max(1e-3), "{x} vs {y}");
        }
    }
}
