use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use naifs::NaifsError;

mod config;
mod report;
mod run;

use config::ConfigError;

/// Topological entropy and pressure experiments for non-autonomous iterated
/// function systems.
#[derive(Parser, Debug)]
#[command(name = "naifs", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run the experiment described by a TOML config.
    Run {
        config: PathBuf,
        /// Output directory (overrides the config).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Worker threads; never changes results.
        #[arg(long, env = "NAIFS_THREADS")]
        threads: Option<usize>,
        /// Word budget per ensemble (overrides the config).
        #[arg(long)]
        budget: Option<usize>,
    },
    /// Merge the manifests under a directory into summary.csv and
    /// plot_data.json.
    Report { dir: PathBuf },
}

fn exit_code(err: &anyhow::Error) -> u8 {
    if err.chain().any(|e| e.downcast_ref::<ConfigError>().is_some()) {
        return 1;
    }
    match err.chain().find_map(|e| e.downcast_ref::<NaifsError>()) {
        Some(NaifsError::Precondition(_) | NaifsError::NotExact(_) | NaifsError::NotExpansive(_)) => 2,
        Some(NaifsError::Saturation(_) | NaifsError::Resolution(_) | NaifsError::ComplexityGuard { .. }) => 3,
        _ => 1,
    }
}

fn run_command(threads: Option<usize>, config: PathBuf, overrides: run::Overrides) -> Result<()> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(t) = threads {
        builder = builder.num_threads(t);
    }
    let pool = builder.build().context("building the worker pool")?;
    let m = pool.install(|| run::run(&config, &overrides))?;
    let mut line = format!("{} {}:", m.kind, m.system_hash);
    match (m.summary.value, m.summary.uncertainty) {
        (Some(v), Some(u)) => line.push_str(&format!(" {v:.4} ± {u:.4}")),
        (Some(v), None) => line.push_str(&format!(" {v:.4}")),
        _ => {}
    }
    if let Some(v) = &m.summary.verdict {
        line.push_str(&format!(" [{v}]"));
    }
    if !m.warnings.is_empty() {
        line.push_str(&format!(" ({} warnings)", m.warnings.len()));
    }
    println!("{line}");
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run {
            config,
            out,
            threads,
            budget,
        } => run_command(threads, config, run::Overrides { out, budget }),
        Command::Report { dir } => report::report(&dir).map(|r| {
            println!(
                "{} runs merged, {} skipped: {}",
                r.runs,
                r.skipped.len(),
                r.files.iter().map(|f| f.display().to_string()).collect::<Vec<_>>().join(", ")
            );
        }),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
