use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use nwn_core::experiment::{run_experiment, ExperimentConfig, ExperimentKind, SweepRow};
use nwn_core::Error;

/// Overrides the output directory (`--out` still wins).
const OUT_DIR_ENV: &str = "NWN_OUT_DIR";

#[derive(Parser)]
#[command(name = "nwn", version, about = "Memristive nanowire network reservoir experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Single-node DC pulse: activity and conductance timeline.
    Pulse(Common),
    /// Fourier square-wave modes in, readout diversity out.
    IoMap(Common),
    /// Teacher-forced Lorenz training followed by autonomous forecasting.
    Forecast(Common),
    /// Forecast time over a grid of densities and realizations.
    Sweep(Common),
}

#[derive(Args)]
struct Common {
    /// TOML experiment config; every key is optional.
    #[arg(long)]
    config: PathBuf,
    /// Base seed, replaces `base_seed` from the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write SVG plots.
    #[arg(long)]
    plots: bool,
    /// Worker threads for sweeps.
    #[arg(long)]
    jobs: Option<usize>,
}

fn error_line(command: &str, err: &Error) -> String {
    serde_json::json!({
        "status": "error",
        "command": command,
        "kind": err.kind(),
        "message": err.to_string(),
    })
    .to_string()
}

fn resolve(common: &Common) -> Result<ExperimentConfig, Error> {
    let mut cfg = ExperimentConfig::load(&common.config)?;
    if let Some(seed) = common.seed {
        cfg.base_seed = seed;
    }
    if let Some(jobs) = common.jobs {
        cfg.jobs = jobs;
    }
    if common.plots {
        cfg.output.plots = true;
    }
    if let Some(out) = &common.out {
        cfg.output.dir = out.clone();
    } else if let Some(env) = std::env::var_os(OUT_DIR_ENV).filter(|v| !v.is_empty()) {
        cfg.output.dir = PathBuf::from(env);
    }
    Ok(cfg)
}

fn progress(row: &SweepRow, resumed: bool) {
    eprintln!(
        "{} density={:.4} realization={} t_f={:.3} activity={:.3}",
        if resumed { "resumed" } else { "done" },
        row.density,
        row.realization,
        row.t_f_lyapunov,
        row.mean_activity
    );
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (kind, common) = match &cli.command {
        Command::Pulse(c) => (ExperimentKind::Pulse, c),
        Command::IoMap(c) => (ExperimentKind::IoMap, c),
        Command::Forecast(c) => (ExperimentKind::Forecast, c),
        Command::Sweep(c) => (ExperimentKind::Sweep, c),
    };
    let result = resolve(common).and_then(|cfg| {
        cfg.validate(kind)?;
        println!("# resolved configuration\n{}", cfg.to_toml());
        let summary = run_experiment(kind, &cfg, &cfg.output.dir, &progress)?;
        Ok((cfg, summary))
    });
    match result {
        Ok((cfg, summary)) => {
            for (key, value) in summary {
                println!("{key} = {value}");
            }
            println!("output = {}", cfg.output.dir.display());
            ExitCode::SUCCESS
        }
        Err(err) => {
            eprintln!("{}", error_line(kind.name(), &err));
            ExitCode::from(if err.kind() == "validation" || err.kind() == "parse" { 2 } else { 1 })
        }
    }
}
