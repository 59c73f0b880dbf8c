//! The upper-bound constant and the glued test family that exceeds it.

use tm_extremal::bounds::{verify_exceeds, BoundOptions};
use tm_extremal::mesh::DomainSpec;

fn main() -> tm_extremal::Result<()> {
    let report = verify_exceeds(&DomainSpec::unit_disk(), &BoundOptions::default(), 0.5, 0.0, None, &[1e-2, 1e-3, 1e-4])?;
    println!("A0 = {:.3e}, weighted volume {:.6}, bound {:.6}", report.a0, report.weighted_volume, report.bound);
    report.write_csv(std::io::stdout())?;
    Ok(())
}
