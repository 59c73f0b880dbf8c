use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, ValueEnum};
use tm_extremal::config::RunConfig;
use tm_extremal::run::{error_exit_code, exit_code, run, Command};

#[derive(Parser)]
#[command(name = "tmx", about = "Singular Trudinger-Moser extremal experiments")]
struct Cli {
    #[arg(value_enum)]
    command: Cmd,
    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Clone, Copy, ValueEnum)]
enum Cmd {
    Mesh,
    Eigs,
    Maximize,
    Sweep,
    Green,
    Bubble,
    Bound,
    Verify,
    Diagnose,
}

impl From<Cmd> for Command {
    fn from(c: Cmd) -> Self {
        match c {
            Cmd::Mesh => Command::Mesh,
            Cmd::Eigs => Command::Eigs,
            Cmd::Maximize => Command::Maximize,
            Cmd::Sweep => Command::Sweep,
            Cmd::Green => Command::Green,
            Cmd::Bubble => Command::Bubble,
            Cmd::Bound => Command::Bound,
            Cmd::Verify => Command::Verify,
            Cmd::Diagnose => Command::Diagnose,
        }
    }
}

#[derive(Args)]
struct Overrides {
    /// Flat key = value config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Centered disk of this radius.
    #[arg(long)]
    disk: Option<f64>,
    #[arg(long)]
    h: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long)]
    level: Option<usize>,
    /// Ball radius for `bubble` (`inf` allowed).
    #[arg(long = "R")]
    bubble_radius: Option<String>,
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long)]
    jobs: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Any other config key, as `key=value`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

fn resolve(o: &Overrides) -> tm_extremal::Result<RunConfig> {
    let mut b = match &o.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::builder("")?,
    };
    if let Some(r) = o.disk {
        b = b.set_value("domain", "disk").set_value("radius", r).set_value("center", toml::Value::Array(vec![0.0.into(), 0.0.into()]));
    }
    for (key, v) in [("h", o.h), ("alpha", o.alpha), ("beta", o.beta), ("eps", o.eps)] {
        if let Some(v) = v {
            b = b.set_value(key, v);
        }
    }
    if let Some(l) = o.level {
        b = b.set_value("level", l as i64);
    }
    if let Some(r) = &o.bubble_radius {
        b = b.set("bubble_radius", r)?;
    }
    if let Some(p) = &o.output {
        b = b.set_value("output", p.to_string_lossy().into_owned());
    }
    if let Some(j) = o.jobs {
        b = b.set_value("jobs", j as i64);
    }
    if let Some(s) = o.seed {
        b = b.set_value("seed", s as i64);
    }
    for kv in &o.set {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| tm_extremal::Error::Parse(format!("`--set {kv}` is not KEY=VALUE")))?;
        b = b.set(k.trim(), v.trim())?;
    }
    b.build()
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let cfg = match resolve(&cli.overrides) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("tmx: {e}");
            return ExitCode::from(error_exit_code(&e) as u8);
        }
    };
    let result = run(cli.command.into(), &cfg);
    match &result {
        Ok(s) => {
            for a in &s.artifacts {
                println!("{}", a.display());
            }
            if s.outcome != tm_extremal::run::Outcome::Ok {
                eprintln!("tmx: {} finished with outcome {:?}", s.command, s.outcome);
            }
        }
        Err(e) => eprintln!("tmx: {e}"),
    }
    ExitCode::from(exit_code(&result) as u8)
}
