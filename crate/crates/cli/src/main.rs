use std::io::{BufReader, Write as _};
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use groundmem_core::environment::external::{serve, EchoWorld, ECHO};
use groundmem_core::environment::minihouse::{MiniHouse, STEP_BUDGET};
use groundmem_core::environment::{Environment, MINIHOUSE};
use groundmem_core::fixtures::{collection_script, evaluation_script, pipeline_script, ScriptOptions};
use groundmem_core::gateway::script_to_string;
use groundmem_core::harness::{report, EXIT_FATAL, EXIT_OK, EXIT_TASK_FAILURES};
use groundmem_core::{Gateway, RunConfig, Runner, ScriptedBackend};

#[derive(Parser)]
#[command(name = "groundmem", version, about = "Collect experience, distill tips and evaluate memory-grounded agents")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    /// Run configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config's `jobs`.
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Collect training experience and write the pool.
    Collect {
        #[command(flatten)]
        common: Common,
        /// Fold direction whose training half is collected (0 or 1).
        #[arg(long, default_value_t = 0)]
        direction: usize,
        /// Output directory; defaults to <output_dir>/direction-<d>.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Distill a tips dictionary from a pool.
    Tips {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        pool: PathBuf,
        /// Output directory; defaults to the pool's directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate on the held-out half. Without --pool this is plain ReAct;
    /// without --tips retrieved tips are left out.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 0)]
        direction: usize,
        #[arg(long)]
        pool: Option<PathBuf>,
        #[arg(long)]
        tips: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Collect, tips and eval for both fold directions, then report.
    Run {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Aggregate metrics.json files under a directory.
    Report {
        #[arg(long)]
        runs: PathBuf,
    },
    /// Rewrite a tips dictionary for another environment.
    AlignTips {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        tips: PathBuf,
        #[arg(long)]
        target_env: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write a playback script that solves the configured MiniHouse tasks
    /// with oracle actions.
    MakeScript {
        #[command(flatten)]
        common: Common,
        /// Only this fold direction; both directions in run order otherwise.
        #[arg(long)]
        direction: Option<usize>,
        /// Training tasks whose first trial fails on purpose.
        #[arg(long, default_value_t = 0)]
        fail_first: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Serve a built-in environment over the line protocol.
    ServeEnv {
        #[arg(long, default_value = MINIHOUSE)]
        env: String,
        /// Listen on a TCP address instead of stdin/stdout.
        #[arg(long)]
        listen: Option<String>,
    },
}

fn load(common: &Common) -> Result<RunConfig> {
    let mut cfg = RunConfig::load(&common.config)?;
    if let Some(jobs) = common.jobs {
        cfg.jobs = jobs;
    }
    Ok(cfg)
}

fn runner(common: &Common) -> Result<Runner> {
    Ok(Runner::new(load(common)?)?)
}

fn direction_dir(cfg: &RunConfig, direction: usize) -> PathBuf {
    cfg.output_dir.join(format!("direction-{direction}"))
}

fn make_env(name: &str) -> Result<Box<dyn Environment>> {
    match name {
        MINIHOUSE => Ok(Box::new(MiniHouse::new())),
        ECHO => Ok(Box::new(EchoWorld::default())),
        other => bail!("no built-in environment named {other:?}"),
    }
}

fn run(cli: Cli) -> Result<i32> {
    match cli.command {
        Command::Collect { common, direction, out } => {
            let r = runner(&common)?;
            let out = out.unwrap_or_else(|| direction_dir(r.config(), direction));
            let s = r.collect(direction, &out)?;
            println!(
                "collected {} tasks: {} solved, {} trials, {} reflections -> {}",
                s.tasks,
                s.solved,
                s.trials,
                s.reflections,
                out.join("pool.json").display()
            );
        }
        Command::Tips { common, pool, out } => {
            let r = runner(&common)?;
            let out = out.unwrap_or_else(|| pool.parent().unwrap_or(Path::new(".")).to_path_buf());
            let s = r.tips(&pool, &out)?;
            println!(
                "tips for {} tasks ({} tips, {} warnings) -> {}",
                s.entries,
                s.tips,
                s.warnings,
                out.join("tips.json").display()
            );
        }
        Command::Eval {
            common,
            direction,
            pool,
            tips,
            out,
        } => {
            let r = runner(&common)?;
            let out = out.unwrap_or_else(|| direction_dir(r.config(), direction));
            let m = r.eval(direction, pool.as_deref(), tips.as_deref(), &out)?;
            print!("{}", m.summary());
            if m.succeeded < m.episodes {
                return Ok(EXIT_TASK_FAILURES);
            }
        }
        Command::Run { common, out } => {
            let r = runner(&common)?;
            let out = out.unwrap_or_else(|| r.config().output_dir.clone());
            let agg = r.run_all(&out)?;
            print!("{}", agg.summary());
            if agg.success_rate < 1.0 {
                return Ok(EXIT_TASK_FAILURES);
            }
        }
        Command::Report { runs } => {
            let agg = report(&runs)?;
            print!("{}", agg.summary());
        }
        Command::AlignTips {
            common,
            tips,
            target_env,
            out,
        } => {
            let r = runner(&common)?;
            let s = r.align(&tips, &target_env, &out)?;
            println!(
                "aligned {} entries for {target_env} ({} warnings) -> {}",
                s.entries,
                s.warnings,
                out.display()
            );
        }
        Command::MakeScript {
            common,
            direction,
            fail_first,
            out,
        } => {
            let cfg = load(&common)?;
            let budget = cfg.step_budget.unwrap_or(STEP_BUDGET);
            let opts = ScriptOptions {
                step_budget: budget,
                max_retries: cfg.collect.max_retries,
                fail_first,
            };
            // the script being written may not exist yet
            let r = Runner::with_gateway(cfg, Gateway::new(Box::new(ScriptedBackend::new(Vec::new()))))?;
            let entries = match direction {
                Some(d) => {
                    let (train, eval) = r.split(d)?;
                    let mut e = collection_script(&train, opts)?;
                    e.extend(evaluation_script(&eval, budget)?);
                    e
                }
                None => pipeline_script(&[r.split(0)?, r.split(1)?], opts)?,
            };
            std::fs::write(&out, script_to_string(&entries)).with_context(|| format!("writing {}", out.display()))?;
            println!("wrote {} script entries -> {}", entries.len(), out.display());
        }
        Command::ServeEnv { env, listen } => match listen {
            None => {
                let mut e = make_env(&env)?;
                let stdin = std::io::stdin().lock();
                serve(e.as_mut(), stdin, std::io::stdout().lock())?;
            }
            Some(addr) => {
                let listener = TcpListener::bind(&addr).with_context(|| format!("binding {addr}"))?;
                eprintln!("serving {env} on {}", listener.local_addr()?);
                std::io::stderr().flush()?;
                for stream in listener.incoming() {
                    let stream = stream?;
                    let mut e = make_env(&env)?;
                    let reader = BufReader::new(stream.try_clone()?);
                    if let Err(err) = serve(e.as_mut(), reader, stream) {
                        eprintln!("warning: connection closed: {err}");
                    }
                }
            }
        },
    }
    Ok(EXIT_OK)
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env()
                .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("warn")),
        )
        .with_writer(std::io::stderr)
        .init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_FATAL as u8)
        }
    }
}
