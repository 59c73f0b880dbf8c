//! Dirichlet eigenvalues of the unit disk against Bessel zeros, with
//! multiplicity grouping and the subspace `E_ℓ`.

use tm_extremal::mesh::{build_mesh, DomainSpec};
use tm_extremal::spectral::{EigenOptions, FeSpace};

const J01_SQ: f64 = 5.783_185_962_946_784;
const J11_SQ: f64 = 14.681_970_642_123_89;

fn main() -> tm_extremal::Result<()> {
    for n in [8, 16, 32, 64] {
        let space = FeSpace::new(build_mesh(&DomainSpec::unit_disk(), 1.0 / n as f64)?);
        let data = space.eigenpairs(6, &EigenOptions::default())?;
        let d = data.distinct();
        println!(
            "h = 1/{n:<3} lambda1 = {:.6} ({:+.2e})  lambda2 = {:.6} ({:+.2e})  multiplicities {:?}",
            d[0],
            d[0] / J01_SQ - 1.0,
            d[1],
            d[1] / J11_SQ - 1.0,
            (0..data.n_groups()).map(|g| data.multiplicity(g)).collect::<Vec<_>>()
        );
    }
    let space = FeSpace::new(build_mesh(&DomainSpec::unit_disk(), 1.0 / 32.0)?);
    let sub = space.eigenpairs(6, &EigenOptions::default())?.subspace(2)?;
    println!("\nE_2 has dimension {}, next eigenvalue {:.6}", sub.dim(), sub.lambda_next);
    Ok(())
}
