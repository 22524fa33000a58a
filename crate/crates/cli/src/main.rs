use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};
use vkflow_cli::{commands, parse_manifest, CliError, Manifest};
use vkflow_core::verify::Effort;

#[derive(Parser)]
#[command(name = "vkflow", version, about = "Clamped von Karman plate in subsonic flow")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one trajectory and write its records and final snapshot.
    Simulate {
        manifest: PathBuf,
        /// Output directory; overrides `output.dir`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Build the equilibrium catalog from the Newton starts.
    Stationary {
        manifest: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run every cell of the sweep axes concurrently.
    Sweep {
        manifest: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Worker threads (defaults to the number of cores).
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Run the oracle suites.
    Verify {
        /// Small grids and sample counts.
        #[arg(long)]
        quick: bool,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        /// Also write the reports as JSON.
        #[arg(long)]
        json: Option<PathBuf>,
    },
}

fn load(path: &PathBuf) -> anyhow::Result<Manifest> {
    let text = fs::read_to_string(path)
        .map_err(CliError::Io)
        .with_context(|| format!("reading {}", path.display()))?;
    Ok(parse_manifest(&text)?)
}

fn out_dir(m: &Manifest, out: Option<PathBuf>) -> PathBuf {
    out.unwrap_or_else(|| PathBuf::from(&m.output.dir))
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Simulate { manifest, out } => {
            let m = load(&manifest)?;
            let s = commands::simulate(&m, &out_dir(&m, out))?;
            println!("{} records to t = {}; {:?}", s.records, s.t_final, s.verdict);
            for f in s.files {
                println!("wrote {}", f.display());
            }
        }
        Command::Stationary { manifest, out } => {
            let m = load(&manifest)?;
            let s = commands::stationary(&m, &out_dir(&m, out))?;
            println!("{} equilibria ({} failed starts)", s.members, s.failed_starts);
            println!("wrote {}", s.catalog.display());
        }
        Command::Sweep { manifest, out, jobs } => {
            let m = load(&manifest)?;
            if let Some(n) = jobs {
                rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
            }
            let s = commands::sweep(&m, &out_dir(&m, out))?;
            println!("{} cells", s.cells.len());
            println!("wrote {}", s.summary.display());
        }
        Command::Verify { quick, seed, json } => {
            let effort = if quick { Effort::Quick } else { Effort::Full };
            let (reports, status) = commands::verify(effort, seed);
            for r in &reports {
                println!("{r}");
            }
            if let Some(p) = json {
                fs::write(&p, serde_json::to_string_pretty(&reports)?).map_err(CliError::Io)?;
            }
            status?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            let cli = err.downcast_ref::<CliError>();
            let code = cli.map_or(1, CliError::exit_code);
            let mut report = serde_json::json!({
                "error": cli.map_or("internal", CliError::kind),
                "exit_code": code,
                "message": format!("{err:#}"),
            });
            if let Some(CliError::Verification(failed)) = cli {
                report["failures"] = serde_json::to_value(failed).unwrap_or_default();
            }
            eprintln!("{report}");
            ExitCode::from(code)
        }
    }
}
