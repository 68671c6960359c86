//! `hmai` command line.

pub mod ops;
mod output;

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::config::Config;
use crate::envgen::Area;
use crate::error::{Error, Result};
use crate::sched::SCHEDULERS;

pub use ops::{cmd_brake, cmd_compare, cmd_gen, cmd_train, load_queue, RunManifest};

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
    Text,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum AreaArg {
    Ub,
    Uhw,
    Hw,
}

impl From<AreaArg> for Area {
    fn from(a: AreaArg) -> Area {
        match a {
            AreaArg::Ub => Area::UB,
            AreaArg::Uhw => Area::UHW,
            AreaArg::Hw => Area::HW,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "hmai", version, about = "Heterogeneous accelerator scheduling simulator")]
pub struct Cli {
    /// TOML configuration file (or a JSON manifest with an embedded config)
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Seed for queue generation, search heuristics and agent initialisation
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true, value_enum)]
    pub area: Option<AreaArg>,
    #[arg(long, global = true, value_enum, default_value = "text")]
    pub format: Format,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct QueueArgs {
    /// Task queue in JSON lines, as written by `gen`
    #[arg(long)]
    pub queue: PathBuf,
    #[arg(long)]
    pub weights: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a route and its task queue
    Gen {
        #[arg(long)]
        out: PathBuf,
        /// Route length in metres
        #[arg(long)]
        distance: Option<f64>,
    },
    /// Train the scheduling agent
    Train {
        #[arg(long)]
        episodes: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run one scheduler on a queue
    Run {
        #[command(flatten)]
        q: QueueArgs,
        #[arg(long, default_value = "minmin")]
        scheduler: String,
        /// Platform preset; defaults to the configured platform
        #[arg(long)]
        platform: Option<String>,
    },
    /// Run several schedulers (and platforms) on the same queue
    Compare {
        #[command(flatten)]
        q: QueueArgs,
        /// Comma-separated scheduler names
        #[arg(long = "scheduler", value_delimiter = ',', default_value = "minmin,ata,ga,sa,worst")]
        schedulers: Vec<String>,
        /// Comma-separated platform presets
        #[arg(long = "platform", value_delimiter = ',', default_value = "config")]
        platforms: Vec<String>,
    },
    /// Braking-distance breakdown for an obstacle seen at the trigger frame
    Brake {
        #[command(flatten)]
        q: QueueArgs,
        #[arg(long = "scheduler", value_delimiter = ',', default_value = "minmin,ata,ga,sa,worst")]
        schedulers: Vec<String>,
    },
    /// Print the effective configuration
    Config,
}

fn load_config(cli: &Cli) -> Result<Config> {
    let mut cfg = match &cli.config {
        Some(p) => Config::load(p)?,
        None => Config::from_env()?,
    };
    if let Some(seed) = cli.seed {
        cfg.env.seed = seed;
        cfg.sched.seed = seed;
        cfg.agent.seed = seed;
        cfg.train.seed = seed.wrapping_mul(1000);
    }
    if let Some(a) = cli.area {
        cfg.env.area = a.into();
    }
    Ok(cfg)
}

fn emit(text: &str, out: Option<&Path>) -> Result<()> {
    match out {
        Some(p) => std::fs::write(p, text).map_err(|e| Error::io(p, e)),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

pub fn run(cli: Cli) -> Result<()> {
    let cfg = load_config(&cli)?;
    let area = cfg.env.area;
    match &cli.command {
        Command::Config => emit(&cfg.to_toml(), None),
        Command::Gen { out, distance } => {
            let mut cfg = cfg.clone();
            if let Some(d) = distance {
                cfg.env.distance = *d;
            }
            let g = cmd_gen(&cfg, area, out)?;
            eprintln!(
                "{} tasks over {:.3} s ({} segments) -> {}",
                g.tasks.len(),
                g.route.duration(),
                g.schedule.len(),
                out.display()
            );
            Ok(())
        }
        Command::Train { episodes, out } => {
            let episodes = episodes.unwrap_or(cfg.train.episodes);
            let t = cmd_train(&cfg, area, episodes, out)?;
            eprintln!(
                "{} episodes, {} learning steps -> {}",
                episodes,
                t.losses.len(),
                out.display()
            );
            Ok(())
        }
        Command::Run { q, scheduler, platform } => {
            let weights = ops::load_weights_opt(q.weights.as_deref())?;
            let queue = load_queue(&q.queue)?;
            ops::check_schedulers(std::slice::from_ref(scheduler), weights.as_ref())?;
            let mut p = cfg.platform.build(platform.as_deref())?;
            let norm = ops::normalization(&cfg, &queue.tasks, &queue.schedule, &mut p)?;
            let (report, wall) = ops::run_one(
                scheduler,
                &cfg,
                &queue.tasks,
                &queue.schedule,
                &p,
                norm,
                weights.as_ref(),
            )?;
            let mut artifacts: Vec<&Path> = vec![&q.queue];
            if let Some(w) = &q.weights {
                artifacts.push(w);
            }
            let manifest = RunManifest::new("run", &cfg, &artifacts);
            if let Some(out) = &q.out {
                ops::write_json(
                    &ops::sidecar(out, "timing.json"),
                    &[ops::TimingRow {
                        scheduler: scheduler.clone(),
                        platform: platform.clone().unwrap_or_else(|| "config".into()),
                        wall_seconds: wall,
                        per_task_seconds: wall / report.summary.tasks.max(1) as f64,
                    }],
                )?;
            }
            emit(&output::run_report(&report, &manifest, cli.format)?, q.out.as_deref())
        }
        Command::Compare {
            q,
            schedulers,
            platforms,
        } => {
            let weights = ops::load_weights_opt(q.weights.as_deref())?;
            let queue = load_queue(&q.queue)?;
            let (cmp, _, timing) = cmd_compare(&cfg, &queue, platforms, schedulers, weights.as_ref())?;
            let mut artifacts: Vec<&Path> = vec![&q.queue];
            if let Some(w) = &q.weights {
                artifacts.push(w);
            }
            let manifest = RunManifest::new("compare", &cfg, &artifacts);
            if let Some(out) = &q.out {
                ops::write_json(&ops::sidecar(out, "timing.json"), &timing)?;
            }
            emit(&output::comparison(&cmp, &manifest, cli.format)?, q.out.as_deref())
        }
        Command::Brake { q, schedulers } => {
            let weights = ops::load_weights_opt(q.weights.as_deref())?;
            let queue = load_queue(&q.queue)?;
            let rows = cmd_brake(&cfg, &queue, schedulers, weights.as_ref())?;
            let mut artifacts: Vec<&Path> = vec![&q.queue];
            if let Some(w) = &q.weights {
                artifacts.push(w);
            }
            let manifest = RunManifest::new("brake", &cfg, &artifacts);
            emit(&output::braking(&rows, &manifest, cli.format)?, q.out.as_deref())
        }
    }
}

/// Parse arguments, run, and map the outcome to a process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            return code;
        }
    };
    if let Command::Run { scheduler, .. } = &cli.command {
        if !SCHEDULERS.contains(&scheduler.as_str()) {
            eprintln!("error: {}", Error::UnknownScheduler(scheduler.clone()));
            return Error::UnknownScheduler(String::new()).exit_code();
        }
    }
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
