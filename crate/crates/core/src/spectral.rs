//! P1 stiffness/mass operators, Dirichlet eigenpairs, the `(1,α)` norm and
//! projection onto the orthogonal complement of the leading eigenspaces.

use std::io::Write;
use std::sync::{Arc, Mutex};

use faer::{Mat, Side};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::mesh::Mesh;
use crate::quadrature::SingularQuadrature;
use crate::sparse::{axpy, dot, CsrMatrix, Factorization};

/// Coefficients over the interior degrees of freedom of a mesh.
pub type Field = Vec<f64>;

/// Weighted node integrals `∫|x|^{-2β}φ_j` for one β.
#[derive(Debug)]
pub struct NodeWeights {
    pub beta: f64,
    /// Indexed by mesh node.
    pub nodal: Vec<f64>,
    /// Indexed by interior DOF.
    pub interior: Vec<f64>,
}

impl NodeWeights {
    /// `∫_Ω |x|^{-2β} dx` over the mesh.
    pub fn volume(&self) -> f64 {
        self.nodal.iter().sum()
    }
}

/// A mesh with its assembled operators and cached factorizations.
pub struct FeSpace {
    pub mesh: Mesh,
    /// Interior-DOF stiffness matrix.
    pub stiffness: CsrMatrix,
    /// Interior-DOF consistent mass matrix.
    pub mass: CsrMatrix,
    /// All-node stiffness and mass (needed for boundary liftings).
    pub stiffness_full: CsrMatrix,
    pub mass_full: CsrMatrix,
    weights: Mutex<Vec<Arc<NodeWeights>>>,
    factors: Mutex<Vec<(f64, Arc<Factorization>)>>,
}

impl std::fmt::Debug for FeSpace {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FeSpace")
            .field("nodes", &self.mesh.n_nodes())
            .field("dofs", &self.mesh.n_dofs())
            .finish()
    }
}

/// Full-node stiffness and mass matrices sharing one sparsity pattern.
pub fn assemble_full(mesh: &Mesh) -> (CsrMatrix, CsrMatrix) {
    let mut kt = Vec::with_capacity(9 * mesh.triangles.len());
    let mut mt = Vec::with_capacity(9 * mesh.triangles.len());
    for (t, tri) in mesh.triangles.iter().enumerate() {
        let area = mesh.triangle_area(t);
        let g = mesh.basis_gradients(t);
        for a in 0..3 {
            for b in 0..3 {
                let k = area * (g[a][0] * g[b][0] + g[a][1] * g[b][1]);
                let m = area / 12.0 * if a == b { 2.0 } else { 1.0 };
                kt.push((tri[a], tri[b], k));
                mt.push((tri[a], tri[b], m));
            }
        }
    }
    let n = mesh.n_nodes();
    (CsrMatrix::from_triplets(n, kt), CsrMatrix::from_triplets(n, mt))
}

fn restrict_to_interior(mesh: &Mesh, a: &CsrMatrix) -> CsrMatrix {
    let map: Vec<Option<usize>> = (0..mesh.n_nodes()).map(|k| mesh.dof(k)).collect();
    let rows = a.submatrix(&map, mesh.n_dofs(), &map);
    let triplets = rows.into_iter().enumerate().flat_map(|(i, r)| r.into_iter().map(move |(j, v)| (i, j, v))).collect();
    CsrMatrix::from_triplets(mesh.n_dofs(), triplets)
}

/// Interior-DOF stiffness `K` and mass `M`.
pub fn assemble(mesh: &Mesh) -> (CsrMatrix, CsrMatrix) {
    let (k, m) = assemble_full(mesh);
    (restrict_to_interior(mesh, &k), restrict_to_interior(mesh, &m))
}

impl FeSpace {
    pub fn new(mesh: Mesh) -> Self {
        let (stiffness_full, mass_full) = assemble_full(&mesh);
        let stiffness = restrict_to_interior(&mesh, &stiffness_full);
        let mass = restrict_to_interior(&mesh, &mass_full);
        FeSpace {
            mesh,
            stiffness,
            mass,
            stiffness_full,
            mass_full,
            weights: Mutex::new(Vec::new()),
            factors: Mutex::new(Vec::new()),
        }
    }

    pub fn n_dofs(&self) -> usize {
        self.mesh.n_dofs()
    }

    pub fn node_weights(&self, beta: f64) -> Result<Arc<NodeWeights>> {
        let mut cache = self.weights.lock().unwrap();
        if let Some(w) = cache.iter().find(|w| w.beta == beta) {
            return Ok(w.clone());
        }
        let nodal = SingularQuadrature::new(beta)?.node_weights(&self.mesh);
        let interior = self.mesh.restrict(&nodal);
        let w = Arc::new(NodeWeights { beta, nodal, interior });
        cache.push(w.clone());
        Ok(w)
    }

    /// `K − αM`.
    pub fn shifted(&self, alpha: f64) -> CsrMatrix {
        self.stiffness.combine(1.0, &self.mass, -alpha)
    }

    /// Factorization of `K − αM`: Cholesky when positive definite, LU when
    /// `allow_indefinite` is set, otherwise a resonance error.
    pub fn factor(&self, alpha: f64, allow_indefinite: bool) -> Result<Arc<Factorization>> {
        {
            let cache = self.factors.lock().unwrap();
            if let Some((_, f)) = cache.iter().find(|(a, f)| *a == alpha && (allow_indefinite || f.is_cholesky())) {
                return Ok(f.clone());
            }
        }
        let a = self.shifted(alpha);
        let f = match Factorization::cholesky(&a) {
            Ok(f) => f,
            Err(_) if allow_indefinite => Factorization::lu(&a)?,
            Err(_) => return Err(Error::Resonance { alpha, eigenvalue: f64::NAN }),
        };
        let f = Arc::new(f);
        let mut cache = self.factors.lock().unwrap();
        if cache.len() > 4 {
            cache.remove(0);
        }
        cache.push((alpha, f.clone()));
        Ok(f)
    }

    /// `∫|∇u|²`.
    pub fn dirichlet(&self, u: &[f64]) -> f64 {
        self.stiffness.form(u, u)
    }

    /// `∫ u v`.
    pub fn l2_pairing(&self, u: &[f64], v: &[f64]) -> f64 {
        self.mass.form(u, v)
    }

    /// `‖u‖_{1,α}² = uᵀKu − α uᵀMu`, allowed to be negative.
    pub fn norm_1alpha_squared(&self, u: &[f64], alpha: f64) -> f64 {
        self.dirichlet(u) - alpha * self.l2_pairing(u, u)
    }

    pub fn norm_1alpha(&self, u: &[f64], alpha: f64) -> Result<f64> {
        norm_1alpha(&self.stiffness, &self.mass, u, alpha)
    }

    /// `u − Σ (∫uψ_i) ψ_i`.
    pub fn project_perp(&self, u: &[f64], basis: &[Field]) -> Field {
        let mu = self.mass.matvec(u);
        let mut out = u.to_vec();
        for psi in basis {
            axpy(&mut out, -dot(psi, &mu), psi);
        }
        out
    }

    pub fn eigenpairs(&self, count: usize, opts: &EigenOptions) -> Result<SpectralData> {
        let k = self.factor(0.0, false)?;
        eigenpairs_with(&self.stiffness, &self.mass, &k, count, opts)
    }
}

pub fn norm_1alpha(k: &CsrMatrix, m: &CsrMatrix, u: &[f64], alpha: f64) -> Result<f64> {
    let sq = k.form(u, u) - alpha * m.form(u, u);
    if sq < 0.0 {
        return Err(Error::NotANorm(sq));
    }
    Ok(sq.sqrt())
}

#[derive(Clone, Debug, PartialEq)]
pub struct EigenOptions {
    /// Target for `‖Kψ − λMψ‖ / ‖ψ‖`.
    pub tol: f64,
    pub max_iter: usize,
    /// Guard vectors carried beyond the requested count.
    pub guard: usize,
    /// Relative gap below which eigenvalues share an eigenspace.
    pub group_gap: f64,
}

impl Default for EigenOptions {
    fn default() -> Self {
        Self { tol: 1e-10, max_iter: 2000, guard: 8, group_gap: 1e-6 }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SpectralData {
    /// Ascending generalized eigenvalues.
    pub values: Vec<f64>,
    /// M-orthonormal eigenvectors.
    #[serde(skip)]
    pub vectors: Vec<Field>,
    pub residuals: Vec<f64>,
    /// Eigenspace id of each eigenvalue (0-based, ascending).
    pub groups: Vec<usize>,
    pub iterations: usize,
}

/// Span of the first ℓ eigenspaces and the next distinct eigenvalue.
#[derive(Clone, Debug)]
pub struct Subspace {
    pub basis: Vec<Field>,
    /// Distinct eigenvalues λ_1 < … < λ_ℓ.
    pub distinct: Vec<f64>,
    pub lambda_next: f64,
    /// An eigenvector for `λ_{ℓ+1}`.
    pub next: Field,
}

impl Subspace {
    pub fn dim(&self) -> usize {
        self.basis.len()
    }
}

impl SpectralData {
    pub fn n_groups(&self) -> usize {
        self.groups.last().map_or(0, |g| g + 1)
    }

    /// Distinct eigenvalues (first member of each group).
    pub fn distinct(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for (k, &g) in self.groups.iter().enumerate() {
            if out.len() == g {
                out.push(self.values[k]);
            }
        }
        out
    }

    pub fn multiplicity(&self, group: usize) -> usize {
        self.groups.iter().filter(|&&g| g == group).count()
    }

    /// `E_ℓ` basis and `λ_{ℓ+1}`; needs at least ℓ+1 computed eigenspaces.
    pub fn subspace(&self, l: usize) -> Result<Subspace> {
        if self.n_groups() < l + 1 {
            return Err(Error::InvalidParameter(format!(
                "need {} distinct eigenvalues, only {} computed",
                l + 1,
                self.n_groups()
            )));
        }
        let basis = self.groups.iter().zip(&self.vectors).filter(|(g, _)| **g < l).map(|(_, v)| v.clone()).collect();
        let distinct = self.distinct();
        let first_next = self.groups.iter().position(|&g| g == l).unwrap();
        Ok(Subspace {
            basis,
            distinct: distinct[..l].to_vec(),
            lambda_next: distinct[l],
            next: self.vectors[first_next].clone(),
        })
    }

    /// CSV columns: index, lambda, group, residual.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["index", "lambda", "group", "residual"])?;
        for k in 0..self.values.len() {
            wr.write_record([
                (k + 1).to_string(),
                format!("{:.15e}", self.values[k]),
                self.groups[k].to_string(),
                format!("{:.3e}", self.residuals[k]),
            ])?;
        }
        wr.flush()?;
        Ok(())
    }
}

/// Lowest `count` generalized eigenpairs `Kψ = λMψ`.
pub fn eigenpairs(k: &CsrMatrix, m: &CsrMatrix, count: usize, opts: &EigenOptions) -> Result<SpectralData> {
    let fk = Factorization::cholesky(k)?;
    eigenpairs_with(k, m, &fk, count, opts)
}

/// Deterministic, well-mixed starting vectors.
fn start_vector(n: usize, seed: usize) -> Vec<f64> {
    let mut state = 0x9E37_79B9_7F4A_7C15u64 ^ (seed as u64).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    (0..n)
        .map(|_| {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        })
        .collect()
}

/// M-orthonormalize in place by twice-repeated modified Gram–Schmidt.
fn m_orthonormalize(m: &CsrMatrix, x: &mut [Vec<f64>]) {
    for _ in 0..2 {
        for j in 0..x.len() {
            for i in 0..j {
                let mi = m.matvec(&x[i]);
                let c = dot(&mi, &x[j]);
                let (head, tail) = x.split_at_mut(j);
                axpy(&mut tail[0], -c, &head[i]);
            }
            let nrm = m.form(&x[j], &x[j]).sqrt();
            for v in x[j].iter_mut() {
                *v /= nrm;
            }
        }
    }
}

/// Shift-invert block subspace iteration with Rayleigh–Ritz, reusing a
/// Cholesky factorization of `K`.
pub fn eigenpairs_with(
    k: &CsrMatrix,
    m: &CsrMatrix,
    fk: &Factorization,
    count: usize,
    opts: &EigenOptions,
) -> Result<SpectralData> {
    let n = k.n;
    if count == 0 {
        return Err(Error::InvalidParameter("eigenpair count must be >= 1".into()));
    }
    if count > n {
        return Err(Error::InvalidParameter(format!("requested {count} eigenpairs from {n} unknowns")));
    }
    let p = (count + opts.guard.max(count / 2)).min(n);
    let mut x: Vec<Vec<f64>> = (0..p).map(|j| start_vector(n, j)).collect();
    m_orthonormalize(m, &mut x);
    let mut values = vec![0.0; p];
    let mut residuals = vec![f64::INFINITY; p];
    let mut iterations = 0;
    while iterations < opts.max_iter {
        iterations += 1;
        let mx: Vec<Vec<f64>> = x.iter().map(|v| m.matvec(v)).collect();
        let mut y = fk.solve_block(&mx);
        m_orthonormalize(m, &mut y);
        let ky: Vec<Vec<f64>> = y.iter().map(|v| k.matvec(v)).collect();
        let reduced = Mat::<f64>::from_fn(p, p, |i, j| 0.5 * (dot(&y[i], &ky[j]) + dot(&y[j], &ky[i])));
        let eig = reduced
            .self_adjoint_eigen(Side::Lower)
            .map_err(|e| Error::Factorization(format!("dense eigensolver failed: {e:?}")))?;
        let s = eig.S().column_vector();
        let u = eig.U();
        let mut order: Vec<usize> = (0..p).collect();
        order.sort_by(|&a, &b| s[a].total_cmp(&s[b]));
        x = order
            .iter()
            .map(|&c| {
                let mut v = vec![0.0; n];
                for (i, yi) in y.iter().enumerate() {
                    axpy(&mut v, u[(i, c)], yi);
                }
                v
            })
            .collect();
        for (slot, &c) in order.iter().enumerate() {
            values[slot] = s[c];
        }
        for j in 0..count {
            let kx = k.matvec(&x[j]);
            let mx = m.matvec(&x[j]);
            let r: f64 = kx.iter().zip(&mx).map(|(a, b)| (a - values[j] * b).powi(2)).sum::<f64>().sqrt();
            residuals[j] = r / dot(&x[j], &x[j]).sqrt();
        }
        if residuals[..count].iter().all(|&r| r <= opts.tol) {
            break;
        }
    }
    let worst = residuals[..count].iter().copied().fold(0.0, f64::max);
    if worst > opts.tol {
        return Err(Error::EigenNonConvergence { iterations, residual: worst });
    }
    x.truncate(count);
    values.truncate(count);
    residuals.truncate(count);
    // Rayleigh quotients of the final vectors.
    for j in 0..count {
        values[j] = k.form(&x[j], &x[j]) / m.form(&x[j], &x[j]);
    }
    let mut groups = vec![0; count];
    for j in 1..count {
        let gap = (values[j] - values[j - 1]) / values[j - 1].abs().max(f64::MIN_POSITIVE);
        groups[j] = groups[j - 1] + usize::from(gap > opts.group_gap);
    }
    Ok(SpectralData { values, vectors: x, residuals, groups, iterations })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_mesh, DomainSpec};

    fn disk(h: f64) -> FeSpace {
        FeSpace::new(build_mesh(&DomainSpec::unit_disk(), h).unwrap())
    }

    #[test]
    fn operators_reproduce_exact_integrals() {
        // u = x on the square [-1,1]^2 restricted to interior nodes is not
        // in H^1_0, so use the full-node matrices: ∫|∇x|² = 4, ∫x² = 4/3.
        let space = FeSpace::new(build_mesh(&DomainSpec::square(1.0), 0.25).unwrap());
        let u = space.mesh.interpolate(|p| p[0]);
        assert!((space.stiffness_full.form(&u, &u) - 4.0).abs() < 1e-12);
        let ones = vec![1.0; space.mesh.n_nodes()];
        assert!((space.mass_full.form(&ones, &ones) - 4.0).abs() < 1e-12);
        let one = vec![1.0; space.n_dofs()];
        assert!(space.dirichlet(&one) > 0.0);
    }

    #[test]
    fn disk_eigenvalues_and_identities() {
        let space = disk(1.0 / 16.0);
        let data = space.eigenpairs(4, &EigenOptions::default()).unwrap();
        let j01_sq = 5.783_185_962_946_784;
        let j11_sq = 14.681_970_642_123_89;
        assert!(data.values[0] > j01_sq && (data.values[0] - j01_sq) / j01_sq < 0.03);
        assert_eq!(data.multiplicity(1), 2);
        assert!((data.distinct()[1] - j11_sq) / j11_sq < 0.03);
        for i in 0..4 {
            let psi = &data.vectors[i];
            let rq = space.dirichlet(psi) / space.l2_pairing(psi, psi);
            assert!((rq - data.values[i]).abs() <= 1e-10 * data.values[i]);
            for j in 0..4 {
                let mij = space.l2_pairing(psi, &data.vectors[j]);
                assert!((mij - f64::from(u8::from(i == j))).abs() < 1e-8);
            }
        }
        let sub = data.subspace(1).unwrap();
        assert_eq!(sub.dim(), 1);
        assert!((sub.lambda_next - data.values[1]).abs() < 1e-12);
        let p = space.project_perp(&data.vectors[0], &sub.basis);
        assert!(p.iter().all(|v| v.abs() < 1e-10));
    }

    #[test]
    fn norm_rejects_negative_radicand() {
        let space = disk(0.25);
        let data = space.eigenpairs(1, &EigenOptions::default()).unwrap();
        let psi = &data.vectors[0];
        let l1 = data.values[0];
        let near = space.norm_1alpha(psi, l1 * (1.0 - 1e-9)).unwrap();
        assert!(near < 1e-4);
        assert!(matches!(space.norm_1alpha(psi, l1 * 1.01), Err(Error::NotANorm(_))));
    }

    #[test]
    fn csv_report_has_header() {
        let space = disk(0.25);
        let data = space.eigenpairs(3, &EigenOptions::default()).unwrap();
        let mut buf = Vec::new();
        data.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("index,lambda,group,residual\n1,"));
        assert_eq!(text.lines().count(), 4);
    }
}
