//! Green's function constants `A₀` against the method of images, and the
//! sink-corrected variant orthogonal to the first eigenspace.

use std::f64::consts::PI;

use tm_extremal::green::{solve_green, weighted_g_squared};
use tm_extremal::mesh::{build_mesh, DomainSpec};
use tm_extremal::spectral::{EigenOptions, FeSpace};

fn main() -> tm_extremal::Result<()> {
    for (name, spec, exact) in [
        ("unit disk", DomainSpec::unit_disk(), 0.0),
        ("disk rho=1/2", DomainSpec::disk(0.5), 0.5f64.ln() / (2.0 * PI)),
        ("disk rho=2", DomainSpec::disk(2.0), 2f64.ln() / (2.0 * PI)),
        ("pole off center", DomainSpec::disk_at([-0.3, 0.0], 1.0), (1.0 - 0.09f64).ln() / (2.0 * PI)),
    ] {
        let h = spec.diameter() / 64.0;
        let space = FeSpace::new(build_mesh(&spec, h)?);
        let g = solve_green(&space, 0.0, None)?;
        println!("{name:>16}: A0 = {:+.8} (images {exact:+.8})", g.a0);
    }

    let space = FeSpace::new(build_mesh(&DomainSpec::unit_disk(), 1.0 / 32.0)?);
    let g = solve_green(&space, 0.0, None)?;
    println!("\nint |x|^-1 G^2 = {:.6} (exact 1/pi = {:.6})", weighted_g_squared(&space, &g, 0.5)?, 1.0 / PI);

    let data = space.eigenpairs(4, &EigenOptions::default())?;
    let alpha = 0.5 * (data.values[0] + data.distinct()[1]);
    let sub = data.subspace(1)?;
    let gs = solve_green(&space, alpha, Some(&sub))?;
    println!(
        "subspace mode, alpha = {alpha:.4}: A0 = {:.6}, multiplier {:.6} vs psi1(0) {:.6}, int G psi1 = {:.1e}",
        gs.a0, gs.multipliers[0], gs.sink_values[0], gs.orthogonality[0]
    );
    Ok(())
}
