use std::path::PathBuf;
use std::process::ExitCode;

use bbmmi_cli::commands::{cmd_bench, cmd_lambda, cmd_oracle, cmd_simulate, cmd_table, TableOptions};
use bbmmi_cli::config::ExperimentConfig;
use bbmmi_cli::CliError;
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "bbmmi",
    version,
    about = "Branching particle systems with Moran interactions"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Experiment configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    workers: Option<usize>,
    /// Output directory; overrides BBMMI_OUT_DIR and the config.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    replicas: Option<u64>,
    /// Allow models whose branching rate is unbounded.
    #[arg(long)]
    unbounded_ok: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate replicas and write snapshot CSV.
    Simulate(Common),
    /// Compare growth-rate estimators with the oracle.
    Lambda(Common),
    /// Print the exact leading eigentriple.
    Oracle(Common),
    /// Measure simulation throughput.
    Bench(Common),
    /// Reproduce a benchmark table (table1 or table2).
    Table {
        preset: String,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        workers: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        replicas: Option<u64>,
        #[arg(long)]
        horizon: Option<f64>,
        /// Comma-separated state caps; "inf" for unbounded.
        #[arg(long, value_delimiter = ',')]
        caps: Option<Vec<String>>,
        #[arg(long)]
        unbounded_ok: bool,
    },
}

fn load(common: &Common) -> Result<ExperimentConfig, CliError> {
    let mut config = ExperimentConfig::load(&common.config)?;
    if let Some(s) = common.seed {
        config.run.seed = s;
    }
    if let Some(w) = common.workers {
        config.run.workers = w;
    }
    if let Some(r) = common.replicas {
        config.run.replicas = r;
    }
    config.validate()?;
    Ok(config)
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Simulate(c) => {
            let config = load(&c)?;
            let out = cmd_simulate(&config, &config.out_dir(c.out.as_deref()), c.unbounded_ok)?;
            println!("{}", out.snapshots.display());
            if let Some(e) = out.events {
                println!("{}", e.display());
            }
        }
        Command::Lambda(c) => {
            let config = load(&c)?;
            let rows = cmd_lambda(&config, &config.out_dir(c.out.as_deref()), c.unbounded_ok)?;
            for r in rows {
                println!(
                    "{},{},{}",
                    r.estimator,
                    r.value,
                    r.stderr.map_or(String::new(), |s| s.to_string())
                );
            }
        }
        Command::Oracle(c) => {
            let config = load(&c)?;
            print!(
                "{}",
                cmd_oracle(&config, &config.out_dir(c.out.as_deref()), c.unbounded_ok)?
            );
        }
        Command::Bench(c) => {
            let config = load(&c)?;
            print!("{}", cmd_bench(&config, c.unbounded_ok)?);
        }
        Command::Table {
            preset,
            seed,
            workers,
            out,
            replicas,
            horizon,
            caps,
            unbounded_ok,
        } => {
            let mut opts = TableOptions::preset(&preset)?;
            if let Some(s) = seed {
                opts.seed = s;
            }
            if let Some(w) = workers {
                opts.workers = w.max(1);
            }
            if let Some(r) = replicas {
                opts.replicas = r.max(1);
            }
            if let Some(h) = horizon {
                opts.horizon = h;
            }
            if let Some(list) = caps {
                opts.caps = list
                    .iter()
                    .map(|s| match s.trim() {
                        "inf" => Ok(None),
                        v => v
                            .parse()
                            .map(Some)
                            .map_err(|_| CliError::Config(format!("bad cap {v:?}"))),
                    })
                    .collect::<Result<_, _>>()?;
            }
            opts.unbounded_ok = unbounded_ok;
            let dir = out
                .or_else(|| std::env::var_os(bbmmi_cli::config::OUT_DIR_ENV).map(PathBuf::from))
                .unwrap_or_else(|| PathBuf::from("."));
            println!("{}", cmd_table(&preset, &opts, &dir)?.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
