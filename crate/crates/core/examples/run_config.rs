//! Drive a subcommand programmatically from a flat config string.

use tm_extremal::config::RunConfig;
use tm_extremal::run::{run, Command};

fn main() -> tm_extremal::Result<()> {
    let dir = std::env::temp_dir().join("tmx-example");
    let cfg = RunConfig::builder("beta = 0.5\nh = 0.0625\neps_schedule = [0.1, 0.05]\n")?
        .set_value("output", dir.to_string_lossy().into_owned())
        .build()?;
    for cmd in [Command::Eigs, Command::Bound, Command::Sweep] {
        let summary = run(cmd, &cfg)?;
        println!("{cmd}: {:?}, config {}", summary.outcome, &summary.config_sha256[..12]);
        for a in &summary.artifacts {
            println!("  {}", a.display());
        }
    }
    Ok(())
}
