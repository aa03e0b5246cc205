mod artifacts;
mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use artifacts::Artifacts;
use commands::Command;
use config::ExperimentConfig;

/// Orbit-ratio experiments on finite-dimensional sections of sequence spaces.
///
/// Exit codes: 0 when every check passes, 1 on a failed check or a
/// numerical error, 2 on a configuration error (no artifacts written).
#[derive(Debug, Parser)]
#[command(name = "orbitlab", version)]
struct Cli {
    #[arg(value_enum)]
    command: Command,
    /// JSON experiment configuration.
    #[arg(long)]
    config: PathBuf,
    /// Dotted override, e.g. `--set space.p=1.5`; the value is parsed as JSON when possible.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Output directory; overrides `out` in the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Base seed; overrides `seed` in the config.
    #[arg(long)]
    seed: Option<u64>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let mut overrides = cli.set.clone();
    if let Some(s) = cli.seed {
        overrides.push(format!("seed={s}"));
    }
    let mut cfg = match ExperimentConfig::load(&cli.config, &overrides) {
        Ok(c) => c,
        Err(e) => return config_error(e),
    };
    if let Some(out) = cli.out {
        cfg.out = out;
    }
    let t = match cfg.resolve_operator() {
        Ok(t) => t,
        Err(e) => return config_error(anyhow::anyhow!("{e}").context(format!("operator error [{}]", e.code()))),
    };
    if let Err(e) = commands::resolve(cli.command, &mut cfg) {
        return config_error(e);
    }

    let out = match Artifacts::create(&cfg.out) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(1);
        }
    };
    if let Err(e) = out.provenance(cli.command.name(), &cfg, commands::seeds(cli.command, &cfg)) {
        eprintln!("error: {e:#}");
        return ExitCode::from(1);
    }
    match commands::run(cli.command, &cfg, &t, &out) {
        Ok(o) => {
            let status = if o.passed { "pass" } else { "FAIL" };
            println!("{} [{status}] {}", cli.command.name(), o.summary);
            println!("artifacts: {}", out.dir().display());
            if o.passed {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("error [{}]: {e}", e.code());
            let body = serde_json::json!({ "code": e.code(), "message": e.to_string() });
            if let Err(w) = out.json("error.json", &body) {
                eprintln!("error: {w:#}");
            }
            ExitCode::from(1)
        }
    }
}

fn config_error(e: anyhow::Error) -> ExitCode {
    eprintln!("config error: {e:#}");
    ExitCode::from(2)
}
