use clap::{Parser, Subcommand};
use parhom_cli::config::Config;
use parhom_cli::{run, verify, CliError};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "parhom",
    version = run::VERSION,
    about = "Numerical laboratory for fully nonlinear parabolic equations in space-time random media"
)]
struct Cli {
    /// Worker threads (0 = one per core); 1 reproduces any N byte-for-byte
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    /// Output directory for CSV/JSON reports
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment from a config file
    Run {
        /// Path to the TOML experiment config
        #[arg(long)]
        config: PathBuf,
        /// Master seed override
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run the shipped verification suite (all criteria, or a subset)
    Verify {
        /// Criterion numbers to run (default: all)
        #[arg(long)]
        only: Vec<usize>,
        /// List criteria without running them
        #[arg(long)]
        list: bool,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if cli.threads > 0 {
        if let Err(e) =
            rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build_global()
        {
            eprintln!("error: --threads: {e}");
            return ExitCode::from(1);
        }
    }
    let code = match cli.command {
        Command::Run { config, seed } => run_one(&config, seed, &cli.out),
        Command::Verify { only, list } => verify_cmd(&only, list, &cli.out),
    };
    ExitCode::from(code)
}

fn run_one(config_path: &PathBuf, seed: Option<u64>, out_dir: &PathBuf) -> u8 {
    let text = match std::fs::read_to_string(config_path) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: --config: cannot read {}: {e}", config_path.display());
            return 1;
        }
    };
    let cfg = match Config::parse(&text) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return 1;
        }
    };
    let output = match run::run_config(&cfg, seed) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("error: {e}");
            return e.exit_code() as u8;
        }
    };
    if let Err(e) = write_output(&cfg, &output, out_dir) {
        eprintln!("error: {e}");
        return 1;
    }
    if output.failures.is_empty() {
        0
    } else {
        for f in &output.failures {
            eprintln!("FAIL: {f}");
        }
        2
    }
}

fn write_output(
    cfg: &Config,
    output: &run::RunOutput,
    out_dir: &PathBuf,
) -> Result<(), CliError> {
    let label = cfg
        .experiment
        .label
        .clone()
        .unwrap_or_else(|| cfg.experiment.kind.label().to_string());
    let dir = out_dir.join(&label);
    std::fs::create_dir_all(&dir)
        .map_err(|e| CliError::Config(format!("--out: cannot create {}: {e}", dir.display())))?;
    for (name, bytes) in &output.files {
        std::fs::write(dir.join(name), bytes)
            .map_err(|e| CliError::Config(format!("--out: cannot write {name}: {e}")))?;
    }
    let summary = serde_json::to_vec_pretty(&output.summary)
        .map_err(|e| CliError::Config(e.to_string()))?;
    std::fs::write(dir.join("summary.json"), summary)
        .map_err(|e| CliError::Config(format!("--out: cannot write summary.json: {e}")))?;
    println!("wrote {} report files to {}", output.files.len() + 1, dir.display());
    Ok(())
}

fn verify_cmd(only: &[usize], list: bool, out_dir: &PathBuf) -> u8 {
    let catalog = verify::catalog();
    if list {
        for c in &catalog {
            println!("{:2}  {}", c.id, c.title);
        }
        return 0;
    }
    let selected: Vec<_> = catalog
        .into_iter()
        .filter(|c| only.is_empty() || only.contains(&c.id))
        .collect();
    if selected.is_empty() {
        eprintln!("error: --only: no matching criteria");
        return 1;
    }
    let mut all_pass = true;
    for c in selected {
        let started = std::time::Instant::now();
        let outcome = (c.run)(out_dir);
        let elapsed = started.elapsed();
        match outcome {
            Ok(details) => {
                println!("criterion {:2}: PASS  {} [{elapsed:.1?}]", c.id, c.title);
                for line in details {
                    println!("              {line}");
                }
            }
            Err(e) => {
                all_pass = false;
                println!("criterion {:2}: FAIL  {} [{elapsed:.1?}]", c.id, c.title);
                println!("              {e}");
            }
        }
    }
    if all_pass {
        0
    } else {
        2
    }
}
