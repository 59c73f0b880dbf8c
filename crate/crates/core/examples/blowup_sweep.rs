//! Continuation in `ε` with the blow-up diagnostics for every step.

use tm_extremal::blowup::{diagnose_sweep, write_diagnostics_csv, DiagnoseOptions};
use tm_extremal::functional::TmParams;
use tm_extremal::maximizer::{continuation_sweep, MaximizeOptions};
use tm_extremal::mesh::{build_mesh, DomainSpec};
use tm_extremal::spectral::FeSpace;

fn main() -> tm_extremal::Result<()> {
    let space = FeSpace::new(build_mesh(&DomainSpec::unit_disk(), 1.0 / 32.0)?);
    let schedule = [0.1, 0.05, 0.02, 0.01, 0.005, 0.002];
    let sweep = continuation_sweep(&space, TmParams::new(0.5, 0.0, 0.1)?, &schedule, None, &MaximizeOptions::default())?;
    if let Some(eps) = sweep.stopped_at {
        println!("stopped at eps = {eps} (exponent overflow)");
    }
    let rows = diagnose_sweep(&space, &sweep.results, &DiagnoseOptions::default())?;
    write_diagnostics_csv(&rows, std::io::stdout())?;
    Ok(())
}
