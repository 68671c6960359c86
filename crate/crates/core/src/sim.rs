//! Discrete-event replay of a task queue on a platform under a scheduler.
//!
//! Decisions are taken at release instants (or at window close for windowed
//! schedulers). The outcome of a dispatch is fully determined at that moment
//! because accelerators run their FIFO without preemption, so the engine
//! keeps two views of HW-Info: the committed ledger, advanced at dispatch and
//! used for rewards, and the per-accelerator info on the platform, advanced
//! when tasks actually complete. Both end up identical.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap, VecDeque};

use serde::{Deserialize, Serialize};

use crate::criteria::{
    matching_score_det, matching_score_tra, reward_unchecked, update_hw_info, NormalizationScales, PlatformSummary,
    RBalanceMode, TaskCost,
};
use crate::envgen::{scenario_at, ScenarioKind, ScenarioSegment, TaskKind, TaskRecord};
use crate::error::{Error, Result};
use crate::platform::{utilization_rate, HwInfo, Platform};
use crate::sched::{PlatformView, Scheduler};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub r_balance_mode: RBalanceMode,
    pub normalization: NormalizationScales,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            r_balance_mode: RBalanceMode::default(),
            normalization: NormalizationScales::UNIT,
        }
    }
}

/// What dispatching one task to one accelerator would do.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Outcome {
    pub accelerator: usize,
    pub dispatch: f64,
    pub start: f64,
    pub completion: f64,
    pub response: f64,
    pub cost: TaskCost,
}

/// Dispatch-time bookkeeping: FIFO tails and committed HW-Info.
#[derive(Clone, Debug, PartialEq)]
pub struct Ledger {
    pub busy_until: Vec<f64>,
    pub committed: Vec<HwInfo>,
    pub mode: RBalanceMode,
}

impl Ledger {
    pub fn new(n: usize, mode: RBalanceMode) -> Self {
        Ledger {
            busy_until: vec![0.0; n],
            committed: vec![HwInfo::default(); n],
            mode,
        }
    }

    pub fn len(&self) -> usize {
        self.busy_until.len()
    }

    pub fn is_empty(&self) -> bool {
        self.busy_until.is_empty()
    }

    pub fn summary(&self) -> PlatformSummary {
        PlatformSummary::from_infos(&self.committed)
    }

    pub fn busy_count(&self, now: f64) -> usize {
        self.busy_until.iter().filter(|&&b| b > now).count()
    }

    pub fn preview(
        &self,
        platform: &Platform,
        task: &TaskRecord,
        dispatch: f64,
        overhead: f64,
        accel: usize,
    ) -> Outcome {
        let t = platform.exec_time(task.model, accel);
        let start = (dispatch + overhead).max(self.busy_until[accel]);
        let completion = start + t;
        let response = completion - task.capture_time;
        let ms = match task.task_kind {
            TaskKind::DET => matching_score_det(response, task.safety_time),
            TaskKind::TRA => matching_score_tra(response, task.safety_time),
        };
        let mut busy = self.busy_count(dispatch);
        if self.busy_until[accel] <= dispatch {
            busy += 1;
        }
        Outcome {
            accelerator: accel,
            dispatch,
            start,
            completion,
            response,
            cost: TaskCost {
                energy: platform.exec_energy(task.amount, accel),
                time: t,
                ms,
                r: busy as f64 / self.len() as f64,
            },
        }
    }

    /// Commit an outcome and return its reward.
    pub fn apply(&mut self, outcome: &Outcome, norm: &NormalizationScales) -> f64 {
        let before = self.summary();
        let a = outcome.accelerator;
        self.busy_until[a] = outcome.completion;
        self.committed[a] = update_hw_info(&self.committed[a], &outcome.cost, self.mode);
        reward_unchecked(&before, &self.summary(), norm)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskResult {
    pub id: u64,
    pub accelerator: usize,
    pub task_kind: TaskKind,
    pub capture_time: f64,
    pub release: f64,
    pub dispatch: f64,
    pub start: f64,
    pub completion: f64,
    pub response: f64,
    pub safety_time: f64,
    pub ms: f64,
    pub e: f64,
    pub t: f64,
    pub r: f64,
    pub reward: f64,
}

impl TaskResult {
    pub fn met_deadline(&self) -> bool {
        self.response <= self.safety_time
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AcceleratorReport {
    pub index: usize,
    pub kind: String,
    pub info: HwInfo,
    pub busy_time: f64,
    pub idle_energy: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EpisodeSummary {
    pub tasks: usize,
    /// Task energy, joules.
    pub energy: f64,
    /// Largest accumulated busy time over accelerators, seconds.
    pub time: f64,
    pub r_balance: f64,
    pub ms: f64,
    pub gvalue: f64,
    /// First release to last completion.
    pub makespan: f64,
    pub utilization: f64,
    pub stm_rate: f64,
    /// Idle power integrated over each accelerator's idle share of the makespan.
    pub idle_energy: f64,
    pub total_energy: f64,
    pub total_reward: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeReport {
    pub scheduler: String,
    pub seed: u64,
    pub normalization: NormalizationScales,
    pub r_balance_mode: RBalanceMode,
    pub summary: EpisodeSummary,
    pub accelerators: Vec<AcceleratorReport>,
    pub records: Vec<TaskResult>,
}

impl EpisodeReport {
    pub fn record(&self, id: u64) -> Result<&TaskResult> {
        self.records.iter().find(|r| r.id == id).ok_or(Error::UnknownTask(id))
    }
}

/// Fraction of tasks answered within their safety time.
pub fn stm_rate(report: &EpisodeReport) -> Result<f64> {
    if report.records.is_empty() {
        return Err(Error::EmptyReport);
    }
    let met = report.records.iter().filter(|r| r.met_deadline()).count();
    Ok(met as f64 / report.records.len() as f64)
}

#[derive(Clone, Copy, Debug)]
struct Pending {
    release: f64,
    index: usize,
    id: u64,
}

impl PartialEq for Pending {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Pending {}

impl PartialOrd for Pending {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Pending {
    // Reversed: BinaryHeap is a max-heap and we want the earliest release.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .release
            .total_cmp(&self.release)
            .then_with(|| other.id.cmp(&self.id))
    }
}

struct Engine<'a> {
    tasks: &'a [TaskRecord],
    schedule: &'a [ScenarioSegment],
    platform: &'a mut Platform,
    ledger: Ledger,
    cfg: SimConfig,
    overhead: f64,
    /// Per accelerator: (completion, task cost) of dispatched, unfinished tasks.
    in_flight: Vec<VecDeque<(f64, TaskCost)>>,
    children: HashMap<u64, Vec<usize>>,
    heap: BinaryHeap<Pending>,
    results: Vec<TaskResult>,
}

impl<'a> Engine<'a> {
    fn complete_until(&mut self, now: f64) {
        for (a, queue) in self.in_flight.iter_mut().enumerate() {
            let state = &mut self.platform.accelerators[a];
            while let Some(&(done, cost)) = queue.front() {
                if done > now {
                    break;
                }
                queue.pop_front();
                state.fifo.pop_front();
                state.info = update_hw_info(&state.info, &cost, self.cfg.r_balance_mode);
            }
        }
    }

    fn scenario(&self, t: f64) -> Option<ScenarioKind> {
        scenario_at(self.schedule, t)
    }

    fn view(&self, now: f64, scenario: Option<ScenarioKind>) -> PlatformView<'_> {
        PlatformView {
            now,
            platform: self.platform,
            ledger: &self.ledger,
            scenario,
            normalization: self.cfg.normalization,
            overhead: self.overhead,
        }
    }

    fn dispatch(&mut self, p: Pending, accel: usize, now: f64, scheduler: &mut dyn Scheduler) -> Result<()> {
        let n = self.platform.len();
        if accel >= n {
            return Err(Error::BadDecision { index: accel, n });
        }
        let task = &self.tasks[p.index];
        let outcome = self.ledger.preview(self.platform, task, now, self.overhead, accel);
        let reward = self.ledger.apply(&outcome, &self.cfg.normalization);
        let state = &mut self.platform.accelerators[accel];
        state.busy_until = outcome.completion;
        state.fifo.push_back(task.id);
        self.in_flight[accel].push_back((outcome.completion, outcome.cost));

        let result = TaskResult {
            id: task.id,
            accelerator: accel,
            task_kind: task.task_kind,
            capture_time: task.capture_time,
            release: p.release,
            dispatch: now,
            start: outcome.start,
            completion: outcome.completion,
            response: outcome.response,
            safety_time: task.safety_time,
            ms: outcome.cost.ms,
            e: outcome.cost.energy,
            t: outcome.cost.time,
            r: outcome.cost.r,
            reward,
        };
        scheduler.observe(&result);
        self.results.push(result);

        if let Some(kids) = self.children.remove(&task.id) {
            for k in kids {
                let child = &self.tasks[k];
                self.heap.push(Pending {
                    release: child.capture_time.max(outcome.completion),
                    index: k,
                    id: child.id,
                });
            }
        }
        Ok(())
    }
}

/// Replay `tasks` on `platform` (reset first) under `scheduler`.
pub fn run_episode(
    tasks: &[TaskRecord],
    schedule: &[ScenarioSegment],
    platform: &mut Platform,
    scheduler: &mut dyn Scheduler,
    cfg: &SimConfig,
) -> Result<EpisodeReport> {
    cfg.normalization.validate()?;
    platform.reset();
    let n = platform.len();
    if n == 0 {
        return Err(Error::EmptyPlatform);
    }

    let index_of: HashMap<u64, usize> = tasks.iter().enumerate().map(|(i, t)| (t.id, i)).collect();
    let mut children: HashMap<u64, Vec<usize>> = HashMap::new();
    let mut heap = BinaryHeap::with_capacity(tasks.len());
    for (i, task) in tasks.iter().enumerate() {
        match task.depends_on {
            Some(parent) => {
                let &pi = index_of.get(&parent).ok_or(Error::Dependency(task.id))?;
                if tasks[pi].depends_on.is_some() || pi == i {
                    return Err(Error::Dependency(task.id));
                }
                children.entry(parent).or_default().push(i);
            }
            None => heap.push(Pending {
                release: task.capture_time,
                index: i,
                id: task.id,
            }),
        }
    }

    let mut engine = Engine {
        tasks,
        schedule,
        platform,
        ledger: Ledger::new(n, cfg.r_balance_mode),
        cfg: *cfg,
        overhead: scheduler.overhead(),
        in_flight: vec![VecDeque::new(); n],
        children,
        heap,
        results: Vec::with_capacity(tasks.len()),
    };

    match scheduler.window() {
        None => {
            while let Some(p) = engine.heap.pop() {
                let now = p.release;
                engine.complete_until(now);
                let task = &tasks[p.index];
                let scenario = engine.scenario(task.capture_time);
                let accel = scheduler.decide(task, &engine.view(now, scenario))?;
                engine.dispatch(p, accel, now, scheduler)?;
            }
        }
        Some(width) => {
            while let Some(first) = engine.heap.pop() {
                let close = first.release + width;
                let mut batch = vec![first];
                while engine.heap.peek().is_some_and(|p| p.release <= close) {
                    batch.push(engine.heap.pop().unwrap());
                }
                engine.complete_until(close);
                let refs: Vec<&TaskRecord> = batch.iter().map(|p| &tasks[p.index]).collect();
                let scenario = engine.scenario(tasks[first.index].capture_time);
                let choice = scheduler.decide_window(&refs, &engine.view(close, scenario))?;
                if choice.len() != batch.len() {
                    return Err(Error::BadDecision {
                        index: choice.len(),
                        n: batch.len(),
                    });
                }
                for (p, accel) in batch.into_iter().zip(choice) {
                    engine.dispatch(p, accel, close, scheduler)?;
                }
            }
        }
    }
    if !engine.children.is_empty() {
        let id = engine.children.keys().min().copied().unwrap_or_default();
        return Err(Error::Dependency(id));
    }
    engine.complete_until(f64::INFINITY);
    scheduler.finish();

    let Engine { results, ledger, .. } = engine;
    debug_assert!(platform
        .accelerators
        .iter()
        .zip(&ledger.committed)
        .all(|(a, c)| a.info == *c));
    Ok(build_report(scheduler.name(), results, platform, cfg))
}

fn build_report(name: &str, mut records: Vec<TaskResult>, platform: &Platform, cfg: &SimConfig) -> EpisodeReport {
    records.sort_by_key(|r| r.id);
    let infos: Vec<HwInfo> = platform.accelerators.iter().map(|a| a.info).collect();
    let ps = PlatformSummary::from_infos(&infos);
    let first = records.iter().map(|r| r.release).fold(f64::INFINITY, f64::min);
    let last = records.iter().map(|r| r.completion).fold(f64::NEG_INFINITY, f64::max);
    let makespan = if records.is_empty() { 0.0 } else { last - first };

    let mut busy = vec![0.0; platform.len()];
    for r in &records {
        busy[r.accelerator] += r.t;
    }
    let accelerators: Vec<AcceleratorReport> = platform
        .accelerators
        .iter()
        .map(|a| {
            let kind = platform.kind_of(a.index);
            let idle = (makespan - busy[a.index]).max(0.0);
            AcceleratorReport {
                index: a.index,
                kind: kind.name.clone(),
                info: a.info,
                busy_time: busy[a.index],
                idle_energy: kind.idle_power * idle,
            }
        })
        .collect();
    let idle_energy: f64 = accelerators.iter().map(|a| a.idle_energy).sum();
    let met = records.iter().filter(|r| r.met_deadline()).count();
    let summary = EpisodeSummary {
        tasks: records.len(),
        energy: ps.energy,
        time: ps.time,
        r_balance: ps.r_balance,
        ms: ps.ms,
        gvalue: crate::criteria::gvalue_unchecked(&ps, &cfg.normalization),
        makespan,
        utilization: if makespan > 0.0 {
            utilization_rate(&busy, makespan)
        } else {
            0.0
        },
        stm_rate: if records.is_empty() {
            0.0
        } else {
            met as f64 / records.len() as f64
        },
        idle_energy,
        total_energy: ps.energy + idle_energy,
        total_reward: records.iter().map(|r| r.reward).sum(),
    };
    EpisodeReport {
        scheduler: name.to_string(),
        seed: 0,
        normalization: cfg.normalization,
        r_balance_mode: cfg.r_balance_mode,
        summary,
        accelerators,
        records,
    }
}

/// Energy and time scales from a run of the static best-fit mapping, which
/// piles every model onto a single accelerator.
pub fn calibrate_normalization(
    tasks: &[TaskRecord],
    schedule: &[ScenarioSegment],
    platform: &mut Platform,
    mode: RBalanceMode,
) -> Result<NormalizationScales> {
    let mut worst = crate::sched::WorstCase::new(platform)?;
    let cfg = SimConfig {
        r_balance_mode: mode,
        normalization: NormalizationScales::UNIT,
    };
    let report = run_episode(tasks, schedule, platform, &mut worst, &cfg)?;
    let pick = |x: f64| if x > 0.0 { x } else { 1.0 };
    Ok(NormalizationScales {
        energy: pick(report.summary.energy),
        time: pick(report.summary.time),
    })
}

/// Vehicle and actuation parameters of the braking experiment.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BrakeConfig {
    /// m/s
    pub velocity: f64,
    /// m/s²
    pub a_brake: f64,
    /// Data transmission to the actuator, seconds.
    pub t_data: f64,
    /// Mechanical reaction of the brake, seconds.
    pub t_mech: f64,
}

impl Default for BrakeConfig {
    fn default() -> Self {
        BrakeConfig {
            velocity: 60.0 * crate::criteria::KMH,
            a_brake: 6.2,
            t_data: 0.001,
            t_mech: 0.019,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BrakingReport {
    pub trigger_task: u64,
    pub t_wait: f64,
    pub t_schedule: f64,
    pub t_compute: f64,
    pub t_data: f64,
    pub t_mech: f64,
    pub total_braking_time: f64,
    pub braking_distance: f64,
}

impl BrakingReport {
    pub fn is_safe(&self, range: f64) -> bool {
        self.braking_distance < range
    }
}

pub fn braking_distance(total_time: f64, velocity: f64, a_brake: f64) -> f64 {
    if velocity <= 0.0 {
        return 0.0;
    }
    velocity * total_time + velocity * velocity / (2.0 * a_brake)
}

/// Time and distance to stop when `trigger` is the frame that reveals the
/// obstacle. Waiting excludes the scheduler overhead, which is reported on
/// its own.
pub fn braking_report(report: &EpisodeReport, cfg: &BrakeConfig, overhead: f64, trigger: u64) -> Result<BrakingReport> {
    let rec = report.record(trigger)?;
    let t_schedule = overhead;
    let t_wait = (rec.start - rec.release - t_schedule).max(0.0);
    let t_compute = rec.t;
    let total = t_wait + t_schedule + t_compute + cfg.t_data + cfg.t_mech;
    Ok(BrakingReport {
        trigger_task: trigger,
        t_wait,
        t_schedule,
        t_compute,
        t_data: cfg.t_data,
        t_mech: cfg.t_mech,
        total_braking_time: total,
        braking_distance: braking_distance(total, cfg.velocity, cfg.a_brake),
    })
}

/// First detection task of a camera group captured at or after `time`.
pub fn find_trigger(tasks: &[TaskRecord], group: crate::envgen::CameraKind, time: f64) -> Result<u64> {
    tasks
        .iter()
        .filter(|t| t.task_kind == TaskKind::DET && t.group == group && t.capture_time >= time - 1e-9)
        .min_by(|a, b| a.capture_time.total_cmp(&b.capture_time).then(a.id.cmp(&b.id)))
        .map(|t| t.id)
        .ok_or_else(|| Error::TriggerNotFound(format!("no {group:?} detection at or after {time:.3} s")))
}
