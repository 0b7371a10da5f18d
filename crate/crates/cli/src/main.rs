//! `photostat`: photon-number statistics experiments from the command line.
//!
//! Every run writes its artifacts and a `manifest.json` into the output
//! directory and echoes the manifest on stdout. Feeding a manifest back with
//! `--config` repeats the run.
//!
//! Exit codes: 0 success, 1 I/O failure, 2 invalid input or configuration,
//! 3 an accuracy check did not hold.

mod commands;
mod config;
mod table;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context as _;
use clap::{Args, Parser};

use commands::{Command, Ctx};
use config::{config_error, ConfigError, Format, Manifest, RunFile, DEFAULT_OUT, DEFAULT_SEED};

#[derive(Parser, Debug)]
#[command(name = "photostat", version, about = "Photon-number statistics of plasmonic and thermal light")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

/// Flags take precedence over the config file, which takes precedence over defaults.
#[derive(Args, Debug)]
struct Global {
    /// JSON run file; a previous `manifest.json` works.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads; 0 uses every core.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
}

fn exit_code(e: &anyhow::Error) -> u8 {
    for cause in e.chain() {
        if cause.is::<ConfigError>() {
            return 2;
        }
        if let Some(err) = cause.downcast_ref::<photostat::Error>() {
            return match err {
                photostat::Error::Accuracy(_) => 3,
                photostat::Error::Io(_) => 1,
                _ => 2,
            };
        }
    }
    1
}

fn run(cli: Cli) -> anyhow::Result<ExitCode> {
    let name = cli.command.name();
    let rf = match &cli.global.config {
        Some(path) => RunFile::load(path)?,
        None => RunFile::default(),
    };
    if let Some(sub) = &rf.subcommand {
        if sub != name {
            return Err(config_error(format!("config is for {sub:?} but the subcommand is {name:?}")));
        }
    }
    let g = cli.global;
    let seed = g.seed.or(rf.seed).unwrap_or(DEFAULT_SEED);
    let format = g.format.or(rf.format).unwrap_or_default();
    let threads = g.threads.or(rf.threads).unwrap_or(0);
    let out = g.out.or_else(|| rf.output_dir.clone()).unwrap_or_else(|| PathBuf::from(DEFAULT_OUT));

    if threads > 0 {
        rayon::ThreadPoolBuilder::new().num_threads(threads).build_global().context("configuring the thread pool")?;
    }
    std::fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    eprintln!("photostat {name}: seed {seed}, output {}", out.display());

    let ctx = Ctx { out: out.clone(), seed, format };
    let outcome = cli.command.run(&rf, &ctx)?;

    let mut artifacts = outcome.artifacts;
    artifacts.push("manifest.json".to_owned());
    let manifest = Manifest {
        subcommand: name.to_owned(),
        seed,
        format,
        threads,
        output_dir: out.clone(),
        config: outcome.config,
        artifacts,
        summary: outcome.summary,
    };
    let text = serde_json::to_string_pretty(&manifest)? + "\n";
    let path = out.join("manifest.json");
    std::fs::write(&path, &text).with_context(|| format!("writing {}", path.display()))?;
    print!("{text}");

    Ok(match outcome.failure {
        Some(msg) => {
            eprintln!("error: {msg}");
            ExitCode::from(3)
        }
        None => ExitCode::SUCCESS,
    })
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
