use std::path::PathBuf;
use std::process::ExitCode;

use adasample_core::experiment::{self, ExperimentConfig, Preset};
use adasample_core::synth::{generate, SynthConfig};
use adasample_core::Execution;
use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "adasample",
    version,
    about = "Budget-constrained adaptive sampling experiments"
)]
struct Cli {
    /// Run everything on one thread.
    #[arg(long, global = true)]
    sequential: bool,

    #[command(subcommand)]
    cmd: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train the configured stages, evaluate on the test split, write artifacts.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Base values that the config file overrides.
        #[arg(long, default_value = "full")]
        preset: String,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Override the data path from the config file.
        #[arg(long)]
        data: Option<PathBuf>,
        /// Extra `key=value` overrides, applied last.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
    },
    /// Side-by-side metrics of finished runs, deltas relative to the first.
    Compare {
        #[arg(required = true, num_args = 1..)]
        dirs: Vec<PathBuf>,
    },
    /// Plot-ready CSV for one test episode of a run.
    Plot {
        #[arg(long)]
        run: PathBuf,
        #[arg(long)]
        episode: usize,
        /// Write here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write a synthetic hourly occupancy CSV.
    Generate {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 80)]
        locations: usize,
        /// Series length in hours.
        #[arg(long, default_value_t = 216 * 8)]
        hours: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn resolve_config(
    path: &PathBuf,
    preset: &str,
    seed: Option<u64>,
    out: Option<PathBuf>,
    data: Option<PathBuf>,
    set: &[String],
) -> Result<ExperimentConfig> {
    let preset: Preset = preset.parse()?;
    let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    let mut cfg = ExperimentConfig::from_text(&text, preset)?;
    for kv in set {
        cfg.apply_text(kv)?;
    }
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(o) = out {
        cfg.out = o;
    }
    if let Some(d) = data {
        cfg.data = d;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<()> {
    let exec = if cli.sequential {
        Execution::Sequential
    } else {
        Execution::Parallel
    };
    match cli.cmd {
        Command::Run {
            config,
            preset,
            seed,
            out,
            data,
            set,
        } => {
            let cfg = resolve_config(&config, &preset, seed, out, data, &set)?;
            let summary = experiment::run(&cfg, exec)?;
            println!("{}", summary.report.to_csv_row(&summary.name));
            println!("artifacts in {}", summary.out.display());
        }
        Command::Compare { dirs } => print!("{}", experiment::compare(&dirs)?),
        Command::Plot { run, episode, out } => {
            let csv = experiment::plot(&run, episode)?;
            match out {
                Some(p) => std::fs::write(&p, csv).with_context(|| format!("writing {}", p.display()))?,
                None => print!("{csv}"),
            }
        }
        Command::Generate {
            out,
            locations,
            hours,
            seed,
        } => {
            let ds = generate(&SynthConfig {
                locations,
                hours,
                seed,
                ..Default::default()
            })?;
            let file = std::fs::File::create(&out).with_context(|| format!("creating {}", out.display()))?;
            ds.write_csv(std::io::BufWriter::new(file))?;
        }
    }
    Ok(())
}

/// Exit code per error category.
fn exit_code(err: &anyhow::Error) -> (u8, &'static str) {
    if let Some(e) = err.downcast_ref::<adasample_core::Error>() {
        return match e.category() {
            "config" => (2, "config"),
            "data" => (3, "data"),
            "io" => (4, "io"),
            "numeric" => (5, "numeric"),
            "shape" => (6, "shape"),
            other => (1, other),
        };
    }
    if err.downcast_ref::<std::io::Error>().is_some() {
        return (4, "io");
    }
    (1, "error")
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let (code, cat) = exit_code(&e);
            eprintln!("error [{cat}]: {e:#}");
            ExitCode::from(code)
        }
    }
}
