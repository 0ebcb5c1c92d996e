use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use edgeorch_core::sim::results::ResultSet;
use edgeorch_core::sim::{bundled, report, run_scenario, Profile, RunOptions, ScenarioConfig};

#[derive(Parser)]
#[command(name = "edgeorch", version, about = "Run edge orchestration scenarios and summarize their results")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario file or a bundled scenario by name.
    Run {
        scenario: String,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        reps: Option<u32>,
        /// Output directory; defaults to results/<scenario name>.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = ProfileArg::Paper)]
        profile: ProfileArg,
        /// Parallel repetitions; 0 uses every core.
        #[arg(long, default_value_t = 0)]
        jobs: usize,
    },
    /// List bundled scenarios.
    List,
    /// Compare arms of a finished run from its CSV files.
    Report { dir: PathBuf },
}

#[derive(Clone, Copy, ValueEnum)]
enum ProfileArg {
    Paper,
    Ci,
}

/// Exit 2: bad input. Exit 1: failure while running or reporting.
enum Failure {
    Input(String),
    Runtime(String),
}

fn load_scenario(arg: &str) -> Result<ScenarioConfig, Failure> {
    let path = Path::new(arg);
    if path.is_file() {
        let text = std::fs::read_to_string(path).map_err(|e| Failure::Input(format!("{arg}: {e}")))?;
        return ScenarioConfig::from_toml(&text).map_err(|e| Failure::Input(format!("{arg}: {e}")));
    }
    match bundled::find(arg) {
        Some(b) => b.load().map_err(|e| Failure::Input(format!("{arg}: {e}"))),
        None => Err(Failure::Input(format!(
            "{arg}: no such file or bundled scenario (see `edgeorch list`)"
        ))),
    }
}

fn run(
    scenario: &str,
    seed: Option<u64>,
    reps: Option<u32>,
    out: Option<PathBuf>,
    profile: ProfileArg,
    jobs: usize,
) -> Result<(), Failure> {
    let cfg = load_scenario(scenario)?;
    let opts = RunOptions {
        seed,
        repetitions: reps,
        profile: match profile {
            ProfileArg::Paper => Profile::Paper,
            ProfileArg::Ci => Profile::Ci,
        },
        jobs,
    };
    let out = out.unwrap_or_else(|| PathBuf::from("results").join(&cfg.name));
    let started = std::time::Instant::now();
    let results = run_scenario(&cfg, &opts).map_err(|e| Failure::Runtime(e.to_string()))?;
    log::info!("{} finished in {:.2?}", cfg.name, started.elapsed());
    results.write_dir(&out).map_err(|e| Failure::Runtime(e.to_string()))?;
    // The summary is rebuilt from the files just written.
    let reread = ResultSet::read_dir(&out).map_err(|e| Failure::Runtime(e.to_string()))?;
    let summary = report::summary(&reread);
    std::fs::write(out.join("summary.txt"), &summary).map_err(|e| Failure::Runtime(e.to_string()))?;
    print!("{summary}");
    println!("results written to {}", out.display());
    Ok(())
}

fn report_dir(dir: &Path) -> Result<(), Failure> {
    let rs = ResultSet::read_dir(dir).map_err(|e| Failure::Runtime(e.to_string()))?;
    if rs.arms().is_empty() {
        return Err(Failure::Runtime(format!("{}: no result rows", dir.display())));
    }
    print!("{}", report::comparison(&rs));
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run {
            scenario,
            seed,
            reps,
            out,
            profile,
            jobs,
        } => run(&scenario, seed, reps, out, profile, jobs),
        Command::List => {
            for b in bundled::BUNDLED {
                println!("{:<20} {}", b.name, b.description());
            }
            Ok(())
        }
        Command::Report { dir } => report_dir(&dir),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Input(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
