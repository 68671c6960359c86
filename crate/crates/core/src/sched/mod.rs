//! Scheduling policies behind one decision interface.

mod meta;
mod table7;

pub use meta::{anneal, evolve, window_fitness, GaParams, GeneticScheduler, SaParams, SaTrace, SimulatedAnnealing};
pub use table7::{Table7, Table7Config};

use serde::{Deserialize, Serialize};

use crate::criteria::NormalizationScales;
use crate::envgen::{ScenarioKind, TaskRecord};
use crate::error::{Error, Result};
use crate::platform::{ModelKind, Platform};
use crate::sim::{Ledger, Outcome, TaskResult};

/// What a scheduler may look at when deciding.
pub struct PlatformView<'a> {
    pub now: f64,
    pub platform: &'a Platform,
    /// HW-Info including every task dispatched so far.
    pub ledger: &'a Ledger,
    /// Scenario at the capture time of the task being decided.
    pub scenario: Option<ScenarioKind>,
    pub normalization: NormalizationScales,
    /// The deciding scheduler's own overhead.
    pub overhead: f64,
}

impl PlatformView<'_> {
    pub fn len(&self) -> usize {
        self.platform.len()
    }

    pub fn is_empty(&self) -> bool {
        self.platform.is_empty()
    }

    pub fn predicted_completion(&self, task: &TaskRecord, accel: usize) -> f64 {
        (self.now + self.overhead).max(self.ledger.busy_until[accel]) + self.platform.exec_time(task.model, accel)
    }

    pub fn preview(&self, task: &TaskRecord, accel: usize) -> Outcome {
        self.ledger.preview(self.platform, task, self.now, self.overhead, accel)
    }
}

pub trait Scheduler {
    fn name(&self) -> &str;

    /// Simulated scheduling latency charged before a task may start.
    fn overhead(&self) -> f64 {
        0.0
    }

    /// Width of the batching window; `None` decides each task on release.
    fn window(&self) -> Option<f64> {
        None
    }

    fn decide(&mut self, task: &TaskRecord, view: &PlatformView<'_>) -> Result<usize>;

    fn decide_window(&mut self, tasks: &[&TaskRecord], view: &PlatformView<'_>) -> Result<Vec<usize>> {
        tasks.iter().map(|t| self.decide(t, view)).collect()
    }

    /// Called after every dispatch with its settled outcome.
    fn observe(&mut self, _result: &TaskResult) {}

    /// Called once when the queue is exhausted.
    fn finish(&mut self) {}
}

/// Earliest predicted completion; ties go to the lowest index.
pub fn minmin_choose(task: &TaskRecord, view: &PlatformView<'_>) -> usize {
    let mut best = 0;
    let mut best_t = f64::INFINITY;
    for a in 0..view.len() {
        let c = view.predicted_completion(task, a);
        if c < best_t {
            best_t = c;
            best = a;
        }
    }
    best
}

/// Cheapest accelerator that still meets the deadline, else Min-Min.
pub fn ata_choose(task: &TaskRecord, view: &PlatformView<'_>) -> usize {
    let mut best: Option<(usize, f64)> = None;
    for a in 0..view.len() {
        let response = view.predicted_completion(task, a) - task.capture_time;
        if response > task.safety_time {
            continue;
        }
        let e = view.platform.exec_energy(task.amount, a);
        if best.is_none_or(|(_, be)| e < be) {
            best = Some((a, e));
        }
    }
    match best {
        Some((a, _)) => a,
        None => minmin_choose(task, view),
    }
}

#[derive(Clone, Copy, Debug, Default)]
pub struct MinMin;

impl Scheduler for MinMin {
    fn name(&self) -> &str {
        "minmin"
    }

    fn decide(&mut self, task: &TaskRecord, view: &PlatformView<'_>) -> Result<usize> {
        Ok(minmin_choose(task, view))
    }
}

#[derive(Clone, Copy, Debug, Default)]
pub struct Ata;

impl Scheduler for Ata {
    fn name(&self) -> &str {
        "ata"
    }

    fn decide(&mut self, task: &TaskRecord, view: &PlatformView<'_>) -> Result<usize> {
        Ok(ata_choose(task, view))
    }
}

/// Every model always goes to the first instance of its fastest kind.
#[derive(Clone, Debug)]
pub struct WorstCase {
    target: [usize; 3],
}

impl WorstCase {
    pub fn new(platform: &Platform) -> Result<Self> {
        if platform.is_empty() {
            return Err(Error::EmptyPlatform);
        }
        let mut target = [0; 3];
        for (slot, model) in ModelKind::ALL.into_iter().enumerate() {
            let mut best = 0;
            for a in 1..platform.len() {
                if platform.exec_time(model, a) < platform.exec_time(model, best) {
                    best = a;
                }
            }
            // first instance of that kind
            let kind = platform.accelerators[best].kind;
            target[slot] = platform
                .accelerators
                .iter()
                .position(|s| s.kind == kind)
                .unwrap_or(best);
        }
        Ok(WorstCase { target })
    }

    pub fn target(&self, model: ModelKind) -> usize {
        self.target[crate::platform::model_slot(model)]
    }
}

impl Scheduler for WorstCase {
    fn name(&self) -> &str {
        "worst"
    }

    fn decide(&mut self, task: &TaskRecord, _view: &PlatformView<'_>) -> Result<usize> {
        Ok(self.target(task.model))
    }
}

/// Scheduler names accepted on the command line, baselines first.
pub const SCHEDULERS: [&str; 7] = ["minmin", "ata", "ga", "sa", "worst", "table7", "flexai"];

/// Simulated overheads per scheduler, seconds.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Overheads {
    pub minmin: f64,
    pub ata: f64,
    pub ga: f64,
    pub sa: f64,
    pub worst: f64,
    pub table7: f64,
    pub flexai: f64,
}

impl Overheads {
    pub fn get(&self, name: &str) -> f64 {
        match name {
            "minmin" => self.minmin,
            "ata" => self.ata,
            "ga" => self.ga,
            "sa" => self.sa,
            "worst" => self.worst,
            "table7" => self.table7,
            "flexai" => self.flexai,
            _ => 0.0,
        }
    }
}

/// Wraps a scheduler with a fixed simulated overhead.
pub struct WithOverhead<S> {
    pub inner: S,
    pub overhead: f64,
}

impl<S: Scheduler> Scheduler for WithOverhead<S> {
    fn name(&self) -> &str {
        self.inner.name()
    }
    fn overhead(&self) -> f64 {
        self.overhead
    }
    fn window(&self) -> Option<f64> {
        self.inner.window()
    }
    fn decide(&mut self, task: &TaskRecord, view: &PlatformView<'_>) -> Result<usize> {
        self.inner.decide(task, view)
    }
    fn decide_window(&mut self, tasks: &[&TaskRecord], view: &PlatformView<'_>) -> Result<Vec<usize>> {
        self.inner.decide_window(tasks, view)
    }
    fn observe(&mut self, result: &TaskResult) {
        self.inner.observe(result)
    }
    fn finish(&mut self) {
        self.inner.finish()
    }
}
