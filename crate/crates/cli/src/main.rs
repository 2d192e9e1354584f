//! `hscluster`: sample equilibrium hard-sphere gases, run them, and tabulate
//! their collisional clusters next to the wild-tree predictions.

mod commands;
mod settings;

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use clap::{CommandFactory, Parser, Subcommand};

use hscluster::harness::{RunManifest, Software, WallClock};

use commands::{Failure, Outcome};
use settings::Settings;

#[derive(Debug, Parser)]
#[command(
    name = "hscluster",
    version,
    about = "Collisional clusters of a hard-sphere gas on the 3-torus"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    #[command(flatten)]
    settings: Settings,

    /// Read settings from a TOML file or an earlier run's manifest.toml;
    /// flags given on the command line take precedence.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Output directory.
    #[arg(
        long,
        global = true,
        env = "HSCLUSTER_OUT",
        default_value = "hscluster-out"
    )]
    out: PathBuf,

    /// Worker threads for trajectories; 0 uses every core. Results do not
    /// depend on it.
    #[arg(long, global = true, default_value_t = 0)]
    workers: usize,
}

#[derive(Debug, Clone, Copy, Subcommand)]
enum Command {
    /// Sample one equilibrium configuration and write its collision log.
    Simulate,
    /// Backward cluster size histograms and tree census on a time grid.
    Clusters,
    /// Wild-sum law and tail-bound tables (no simulation).
    Theory,
    /// Largest dynamical cluster on a time grid.
    Percolation,
    /// Measured mean free time against kinetic theory.
    Mfp,
    /// Rebuild random backwards flows by forward simulation.
    IbfRoundtrip,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Clusters => "clusters",
            Command::Theory => "theory",
            Command::Percolation => "percolation",
            Command::Mfp => "mfp",
            Command::IbfRoundtrip => "ibf-roundtrip",
        }
    }
}

fn run(cli: &Cli) -> Result<Outcome, Failure> {
    let base = match &cli.config {
        Some(path) => Settings::load(path).map_err(Failure::Usage)?,
        None => Settings::default(),
    };
    let settings = cli.settings.clone().or(base);
    std::fs::create_dir_all(&cli.out).map_err(|e| {
        Failure::Runtime(hscluster::Error::Io {
            path: cli.out.clone(),
            source: e,
        })
    })?;
    let out = &cli.out;
    match cli.command {
        Command::Simulate => commands::simulate(&settings, out),
        Command::Clusters => commands::clusters(&settings, out, cli.workers),
        Command::Theory => commands::theory(&settings, out),
        Command::Percolation => commands::percolation(&settings, out, cli.workers),
        Command::Mfp => commands::mfp(&settings, out, cli.workers),
        Command::IbfRoundtrip => commands::ibf_roundtrip(&settings, out),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => e.exit(),
    };
    let started = SystemTime::now();
    let clock = Instant::now();
    let outcome = match run(&cli) {
        Ok(outcome) => outcome,
        Err(Failure::Usage(msg)) => {
            let mut cmd = Cli::command();
            cmd.error(clap::error::ErrorKind::ValueValidation, msg)
                .exit();
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("hscluster {}: {e}", cli.command.name());
            return ExitCode::from(1);
        }
    };

    let manifest = RunManifest {
        command: cli.command.name().to_string(),
        settings: outcome.settings.to_table(),
        summary: outcome.summary,
        software: Software::default(),
        wall_clock: WallClock {
            started_unix_seconds: started
                .duration_since(UNIX_EPOCH)
                .map_or(0, |d| d.as_secs()),
            elapsed_seconds: clock.elapsed().as_secs_f64(),
        },
    };
    let manifest_path = cli.out.join("manifest.toml");
    if let Err(e) = manifest.save(&manifest_path) {
        eprintln!("hscluster {}: {e}", cli.command.name());
        return ExitCode::from(1);
    }
    // A closed stdout (say, piped into `head`) must not turn a finished run
    // into a failure.
    let mut stdout = std::io::stdout().lock();
    for line in &outcome.report {
        let _ = writeln!(stdout, "{line}");
    }
    for file in outcome.files.iter().chain([&manifest_path]) {
        let _ = writeln!(stdout, "wrote {}", file.display());
    }
    match outcome.check_failed {
        Some(msg) => {
            eprintln!("hscluster {}: {msg}", cli.command.name());
            ExitCode::from(1)
        }
        None => ExitCode::SUCCESS,
    }
}
