//! Everything restricted to the orthogonal complement of the first
//! eigenspace, with `α` between the first two eigenvalues.

use tm_extremal::bounds::{verify_exceeds, BoundOptions};
use tm_extremal::functional::TmParams;
use tm_extremal::maximizer::{maximize_subcritical, MaximizeOptions};
use tm_extremal::mesh::{build_mesh, DomainSpec};
use tm_extremal::spectral::{EigenOptions, FeSpace};

fn main() -> tm_extremal::Result<()> {
    let space = FeSpace::new(build_mesh(&DomainSpec::unit_disk(), 1.0 / 32.0)?);
    let data = space.eigenpairs(6, &EigenOptions::default())?;
    let sub = data.subspace(1)?;
    let alpha = 0.5 * (data.values[0] + sub.lambda_next);
    println!("alpha = {alpha:.6} between {:.6} and {:.6}", data.values[0], sub.lambda_next);

    for eps in [0.1, 0.05, 0.02] {
        let r = maximize_subcritical(&space, TmParams::new(0.5, alpha, eps)?, Some(&sub), &MaximizeOptions::default())?;
        let pairing = space.l2_pairing(&r.u, &sub.basis[0]);
        println!("eps {eps:5.3}: value {:.6}, c {:.6}, (u, psi1) = {pairing:+.1e}", r.value, r.c);
    }

    let report = verify_exceeds(&DomainSpec::unit_disk(), &BoundOptions::default(), 0.5, alpha, Some(1), &[1e-2, 1e-3, 1e-4])?;
    println!("\nbound {:.6} (A0 = {:.6})", report.bound, report.a0);
    for row in &report.rows {
        let log2 = row.eps.ln().powi(2);
        println!(
            "eps {:.0e}: excess {:+.4}, (phi, psi1) = {:+.3e}, times log^2 eps = {:.3e}",
            row.eps, row.excess, row.pairings[0], row.pairings[0].abs() * log2
        );
    }
    Ok(())
}
