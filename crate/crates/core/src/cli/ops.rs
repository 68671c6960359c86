//! Command implementations, independent of argument parsing.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{Config, GeneratedQueue, NormalizationMode};
use crate::criteria::NormalizationScales;
use crate::envgen::{read_queue, write_queue, Area, RouteConfig, SafetyTimes, ScenarioSegment, TaskRecord};
use crate::error::{Error, Result};
use crate::flexai::{
    load_weights, save_weights, state_len, train_agent, EpisodeSpec, EpisodeStats, FlexAi, LossPoint, WeightsFile,
};
use crate::platform::Platform;
use crate::sched::{
    Ata, GeneticScheduler, MinMin, Scheduler, SimulatedAnnealing, Table7, WithOverhead, WorstCase, SCHEDULERS,
};
use crate::sim::{
    braking_report, calibrate_normalization, find_trigger, run_episode, BrakingReport, EpisodeReport, EpisodeSummary,
    SimConfig,
};

pub const TOOL: &str = env!("CARGO_PKG_NAME");
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Everything needed to reproduce an artifact.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub config: Config,
    pub seeds: Seeds,
    /// File names relative to the manifest's directory.
    pub artifacts: Vec<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Seeds {
    pub env: u64,
    pub sched: u64,
    pub agent: u64,
    pub train: u64,
}

impl RunManifest {
    pub fn new(command: &str, config: &Config, artifacts: &[&Path]) -> Self {
        RunManifest {
            tool: TOOL.into(),
            version: VERSION.into(),
            command: command.into(),
            config: config.clone(),
            seeds: Seeds {
                env: config.env.seed,
                sched: config.sched.seed,
                agent: config.agent.seed,
                train: config.train.seed,
            },
            artifacts: artifacts.iter().map(|p| basename(p)).collect(),
        }
    }
}

pub fn basename(p: &Path) -> String {
    p.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default()
}

/// `queue.jsonl` → `queue.jsonl.<suffix>`.
pub fn sidecar(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".");
    s.push(suffix);
    PathBuf::from(s)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| Error::Malformed {
        path: path.into(),
        message: e.to_string(),
    })?;
    w.write_all(b"\n")
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_reader(BufReader::new(file)).map_err(|e| Error::Malformed {
        path: path.into(),
        message: e.to_string(),
    })
}

/// Sidecar written next to a generated queue.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QueueManifest {
    #[serde(flatten)]
    pub manifest: RunManifest,
    pub route: RouteConfig,
    pub schedule: Vec<ScenarioSegment>,
    pub safety: SafetyTimes,
    pub tasks: usize,
}

/// A queue loaded from disk with whatever its sidecar says about the route.
#[derive(Clone, Debug)]
pub struct LoadedQueue {
    pub tasks: Vec<TaskRecord>,
    pub schedule: Vec<ScenarioSegment>,
    pub route: Option<RouteConfig>,
    pub name: String,
}

pub fn cmd_gen(cfg: &Config, area: Area, out: &Path) -> Result<GeneratedQueue> {
    let generated = cfg.env.generate(area, cfg.env.distance, cfg.env.seed, &cfg.rss)?;
    let file = File::create(out).map_err(|e| Error::io(out, e))?;
    write_queue(&generated.tasks, BufWriter::new(file)).map_err(|e| Error::io(out, e))?;
    let manifest_path = sidecar(out, "manifest.json");
    let mut effective = cfg.clone();
    effective.env.area = area;
    let manifest = QueueManifest {
        manifest: RunManifest::new("gen", &effective, &[out]),
        route: generated.route,
        schedule: generated.schedule.clone(),
        safety: generated.safety.clone(),
        tasks: generated.tasks.len(),
    };
    write_json(&manifest_path, &manifest)?;
    Ok(generated)
}

pub fn load_queue(path: &Path) -> Result<LoadedQueue> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let tasks = read_queue(BufReader::new(file)).map_err(|message| Error::Malformed {
        path: path.into(),
        message,
    })?;
    let manifest_path = sidecar(path, "manifest.json");
    let (schedule, route) = if manifest_path.exists() {
        let m: QueueManifest = read_json(&manifest_path)?;
        (m.schedule, Some(m.route))
    } else {
        (Vec::new(), None)
    };
    Ok(LoadedQueue {
        tasks,
        schedule,
        route,
        name: basename(path),
    })
}

pub fn normalization(
    cfg: &Config,
    tasks: &[TaskRecord],
    schedule: &[ScenarioSegment],
    platform: &mut Platform,
) -> Result<NormalizationScales> {
    match cfg.criteria.normalization {
        NormalizationMode::Unit => Ok(NormalizationScales::UNIT),
        NormalizationMode::WorstCase => calibrate_normalization(tasks, schedule, platform, cfg.criteria.r_balance_mode),
    }
}

pub fn make_scheduler(
    name: &str,
    cfg: &Config,
    platform: &Platform,
    weights: Option<&WeightsFile>,
) -> Result<Box<dyn Scheduler>> {
    let overhead = cfg.sched.overheads.get(name);
    let s = &cfg.sched;
    let inner: Box<dyn Scheduler> = match name {
        "minmin" => Box::new(WithOverhead {
            inner: MinMin,
            overhead,
        }),
        "ata" => Box::new(WithOverhead { inner: Ata, overhead }),
        "worst" => Box::new(WithOverhead {
            inner: WorstCase::new(platform)?,
            overhead,
        }),
        "table7" => Box::new(WithOverhead {
            inner: Table7::new(&s.table7, platform)?,
            overhead,
        }),
        "ga" => Box::new(WithOverhead {
            inner: GeneticScheduler::new(s.ga, s.window, s.seed),
            overhead,
        }),
        "sa" => Box::new(WithOverhead {
            inner: SimulatedAnnealing::new(s.sa, s.window, s.seed),
            overhead,
        }),
        "flexai" => {
            let w = weights.ok_or(Error::MissingWeights)?;
            let mut agent = FlexAi::new(w.network()?, w.normalization, platform.len())?;
            agent.overhead = overhead;
            Box::new(agent)
        }
        other => return Err(Error::UnknownScheduler(other.to_string())),
    };
    Ok(inner)
}

/// Validate names up front so a typo fails before any simulation runs.
pub fn check_schedulers(names: &[String], weights: Option<&WeightsFile>) -> Result<()> {
    for n in names {
        if !SCHEDULERS.contains(&n.as_str()) {
            return Err(Error::UnknownScheduler(n.clone()));
        }
        if n == "flexai" && weights.is_none() {
            return Err(Error::MissingWeights);
        }
    }
    Ok(())
}

pub fn run_one(
    name: &str,
    cfg: &Config,
    tasks: &[TaskRecord],
    schedule: &[ScenarioSegment],
    platform: &Platform,
    norm: NormalizationScales,
    weights: Option<&WeightsFile>,
) -> Result<(EpisodeReport, f64)> {
    let mut platform = platform.clone();
    let mut scheduler = make_scheduler(name, cfg, &platform, weights)?;
    let sim = SimConfig {
        r_balance_mode: cfg.criteria.r_balance_mode,
        normalization: norm,
    };
    let t0 = Instant::now();
    let mut report = run_episode(tasks, schedule, &mut platform, scheduler.as_mut(), &sim)?;
    let wall = t0.elapsed().as_secs_f64();
    report.seed = cfg.sched.seed;
    Ok((report, wall))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub scheduler: String,
    pub platform: String,
    pub summary: EpisodeSummary,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub queue: String,
    pub normalization: Vec<(String, NormalizationScales)>,
    pub rows: Vec<ComparisonRow>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimingRow {
    pub scheduler: String,
    pub platform: String,
    pub wall_seconds: f64,
    pub per_task_seconds: f64,
}

/// One report per (platform, scheduler) on the same queue. Schedulers run
/// in parallel; rows come back in request order.
pub fn cmd_compare(
    cfg: &Config,
    queue: &LoadedQueue,
    platforms: &[String],
    schedulers: &[String],
    weights: Option<&WeightsFile>,
) -> Result<(Comparison, Vec<EpisodeReport>, Vec<TimingRow>)> {
    check_schedulers(schedulers, weights)?;
    let mut norms = Vec::new();
    let mut jobs = Vec::new();
    for p in platforms {
        let preset = if p == "config" { None } else { Some(p.as_str()) };
        let mut platform = cfg.platform.build(preset)?;
        let norm = normalization(cfg, &queue.tasks, &queue.schedule, &mut platform)?;
        norms.push((p.clone(), norm));
        for s in schedulers {
            jobs.push((p.clone(), s.clone(), platform.clone(), norm));
        }
    }
    let results: Vec<Result<(EpisodeReport, f64)>> = jobs
        .par_iter()
        .map(|(_, s, platform, norm)| run_one(s, cfg, &queue.tasks, &queue.schedule, platform, *norm, weights))
        .collect();
    let mut rows = Vec::new();
    let mut reports = Vec::new();
    let mut timing = Vec::new();
    for ((p, s, _, _), res) in jobs.into_iter().zip(results) {
        let (report, wall) = res?;
        timing.push(TimingRow {
            scheduler: s.clone(),
            platform: p.clone(),
            wall_seconds: wall,
            per_task_seconds: wall / report.summary.tasks.max(1) as f64,
        });
        rows.push(ComparisonRow {
            scheduler: s,
            platform: p,
            summary: report.summary.clone(),
        });
        reports.push(report);
    }
    Ok((
        Comparison {
            queue: queue.name.clone(),
            normalization: norms,
            rows,
        },
        reports,
        timing,
    ))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BrakingRow {
    pub scheduler: String,
    pub report: BrakingReport,
    /// Range of the camera group that sees the obstacle, metres.
    pub camera_range: f64,
    pub safe: bool,
}

pub fn cmd_brake(
    cfg: &Config,
    queue: &LoadedQueue,
    schedulers: &[String],
    weights: Option<&WeightsFile>,
) -> Result<Vec<BrakingRow>> {
    check_schedulers(schedulers, weights)?;
    let brake = cfg.brake.brake();
    let velocity = queue.route.map(|r| r.velocity).unwrap_or(brake.velocity);
    let trigger_time = cfg.brake.trigger_distance / velocity;
    let trigger = find_trigger(&queue.tasks, cfg.brake.trigger_group, trigger_time)?;
    let range = cfg
        .env
        .cameras
        .iter()
        .find(|g| g.kind == cfg.brake.trigger_group)
        .map(|g| g.max_distance)
        .unwrap_or(f64::INFINITY);
    let mut platform = cfg.platform.build(None)?;
    let norm = normalization(cfg, &queue.tasks, &queue.schedule, &mut platform)?;
    let reports: Vec<Result<(EpisodeReport, f64)>> = schedulers
        .par_iter()
        .map(|s| run_one(s, cfg, &queue.tasks, &queue.schedule, &platform, norm, weights))
        .collect();
    let mut rows = Vec::new();
    for (s, res) in schedulers.iter().zip(reports) {
        let (report, _) = res?;
        let b = braking_report(&report, &brake, cfg.sched.overheads.get(s), trigger)?;
        rows.push(BrakingRow {
            scheduler: s.clone(),
            safe: b.is_safe(range),
            report: b,
            camera_range: range,
        });
    }
    Ok(rows)
}

/// Training queues: route length uniform in the configured range, queue
/// seed `train.seed + episode`.
pub fn training_episode(cfg: &Config, area: Area, index: usize, platform: &mut Platform) -> Result<EpisodeSpec> {
    let seed = cfg.train.seed + index as u64;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let distance = if cfg.train.route_max > cfg.train.route_min {
        rng.gen_range(cfg.train.route_min..=cfg.train.route_max)
    } else {
        cfg.train.route_min
    };
    let q = cfg.env.generate(area, distance, seed, &cfg.rss)?;
    let norm = normalization(cfg, &q.tasks, &q.schedule, platform)?;
    Ok(EpisodeSpec {
        tasks: q.tasks,
        schedule: q.schedule,
        normalization: norm,
    })
}

pub struct Trained {
    pub weights: WeightsFile,
    pub losses: Vec<LossPoint>,
    pub stats: Vec<EpisodeStats>,
}

pub fn train(cfg: &Config, area: Area, episodes: usize, progress: impl FnMut(&EpisodeStats)) -> Result<Trained> {
    let mut platform = cfg.platform.build(None)?;
    let mut source = |k: usize, p: &mut Platform| training_episode(cfg, area, k, p);
    let out = train_agent(
        &mut source,
        &mut platform,
        &cfg.agent,
        cfg.state,
        cfg.criteria.r_balance_mode,
        episodes,
        progress,
    )?;
    debug_assert_eq!(out.agent.eval.input_len(), state_len(platform.len()));
    Ok(Trained {
        weights: WeightsFile::new(area, &out.agent.eval, cfg.state, &cfg.agent),
        losses: out.losses,
        stats: out.stats,
    })
}

pub fn cmd_train(cfg: &Config, area: Area, episodes: usize, out: &Path) -> Result<Trained> {
    let trained = train(cfg, area, episodes, |s| {
        log::info!(
            "episode {} tasks {} reward {:.3} stm {:.4} eps {:.3}",
            s.episode,
            s.tasks,
            s.total_reward,
            s.stm_rate,
            s.epsilon
        )
    })?;
    save_weights(&trained.weights, out)?;
    let loss_path = sidecar(out, "loss.csv");
    let mut w = csv::Writer::from_path(&loss_path).map_err(|e| csv_err(&loss_path, e))?;
    for p in &trained.losses {
        w.serialize(p).map_err(|e| csv_err(&loss_path, e))?;
    }
    w.flush().map_err(|e| Error::io(&loss_path, e))?;
    let stats_path = sidecar(out, "episodes.csv");
    let mut w = csv::Writer::from_path(&stats_path).map_err(|e| csv_err(&stats_path, e))?;
    for s in &trained.stats {
        w.serialize(s).map_err(|e| csv_err(&stats_path, e))?;
    }
    w.flush().map_err(|e| Error::io(&stats_path, e))?;
    let mut effective = cfg.clone();
    effective.env.area = area;
    effective.train.episodes = episodes;
    write_json(
        &sidecar(out, "manifest.json"),
        &RunManifest::new("train", &effective, &[out, &loss_path, &stats_path]),
    )?;
    Ok(trained)
}

pub fn csv_err(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Malformed {
            path: path.into(),
            message: format!("{other:?}"),
        },
    }
}

pub fn load_weights_opt(path: Option<&Path>) -> Result<Option<WeightsFile>> {
    path.map(load_weights).transpose()
}
