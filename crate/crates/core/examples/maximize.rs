//! Subcritical maximizers on the unit disk for a few `(α, ε)`.

use tm_extremal::functional::{Functional, TmParams};
use tm_extremal::maximizer::{maximize_subcritical, MaximizeOptions};
use tm_extremal::mesh::{build_mesh, DomainSpec};
use tm_extremal::spectral::{EigenOptions, FeSpace};

fn main() -> tm_extremal::Result<()> {
    let space = FeSpace::new(build_mesh(&DomainSpec::unit_disk(), 1.0 / 32.0)?);
    let lambda1 = space.eigenpairs(1, &EigenOptions::default())?.values[0];
    println!("{:>8} {:>6} {:>12} {:>9} {:>11} {:>9} {:>6}", "alpha", "eps", "value", "c", "lambda", "residual", "iters");
    for alpha in [0.0, 0.5 * lambda1] {
        for eps in [0.1, 0.05, 0.02] {
            let params = TmParams::new(0.5, alpha, eps)?;
            let r = maximize_subcritical(&space, params, None, &MaximizeOptions::default())?;
            let el = Functional::new(&space, params)?.el_residual(&r.u, None)?;
            println!(
                "{alpha:8.4} {eps:6.3} {:12.6} {:9.6} {:11.6} {el:9.1e} {:6}",
                r.value, r.c, r.lambda, r.iterations
            );
        }
    }
    Ok(())
}
