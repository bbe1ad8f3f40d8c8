use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use roadcheck_cli::{cmd_batch, cmd_report, cmd_synth, cmd_validate, FrameList, RunConfig};

/// Validate road segmentation masks against street-map geometry.
#[derive(Parser)]
#[command(name = "roadcheck", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Validate a single frame.
    Validate {
        #[arg(long)]
        frame: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Validate every frame of a frame list and write summary.json.
    Batch {
        #[arg(long)]
        frames: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Worker threads; overrides `parallelism` from the config.
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Write mask, metadata and map of a built-in synthetic scenario.
    Synth {
        #[arg(long)]
        scenario: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Regenerate summary.json from the reports in a directory.
    Report {
        #[arg(long)]
        summary: PathBuf,
    },
}

fn load_config(path: Option<&Path>) -> Result<RunConfig, String> {
    path.map_or_else(|| Ok(RunConfig::default()), RunConfig::load)
}

fn run(cli: Cli) -> Result<u8, String> {
    match cli.command {
        Command::Validate { frame, config, out } => {
            let config = load_config(config.as_deref())?;
            let report = cmd_validate(&frame, &config, &out).map_err(|e| e.to_string())?;
            println!(
                "{}: {} FP region(s), {} FN region(s)",
                report.frame_id,
                report.fp_regions.len(),
                report.fn_regions.len()
            );
            Ok(report.exit_code())
        }
        Command::Batch {
            frames,
            config,
            out,
            jobs,
        } => {
            let mut config = load_config(config.as_deref())?;
            if let Some(jobs) = jobs {
                if jobs == 0 {
                    return Err("--jobs must be at least 1".into());
                }
                config.parallelism = jobs;
            }
            let paths = FrameList::load(&frames)?;
            let summary = cmd_batch(&paths, &config, &out)?;
            for f in &summary.failures {
                eprintln!("error: {}: stage {}: {}", f.source, f.stage, f.message);
            }
            println!(
                "{} frame(s): {} with findings, {} failed",
                summary.frames_total, summary.frames_with_findings, summary.frames_failed
            );
            Ok(summary.exit_code())
        }
        Command::Synth {
            scenario,
            out,
            config,
        } => {
            let config = load_config(config.as_deref())?;
            let files = cmd_synth(&scenario, &config.pipeline, &out)?;
            println!("{}", files.meta.display());
            Ok(0)
        }
        Command::Report { summary } => {
            let s = cmd_report(&summary)?;
            println!(
                "{} frame(s): {} with findings, {} failed",
                s.frames_total, s.frames_with_findings, s.frames_failed
            );
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
