#![allow(dead_code)]

use std::collections::BTreeMap;

use hmai::criteria::{NormalizationScales, RBalanceMode};
use hmai::envgen::{CameraKind, ScenarioKind, ScenarioSegment, TaskKind, TaskRecord};
use hmai::platform::{
    build_platform, AcceleratorKind, DataStyle, ModelKind, Platform, PlatformConfig, PlatformEntry, Propagation,
    Register,
};
use hmai::sched::{PlatformView, Scheduler};
use hmai::sim::{run_episode, EpisodeReport, SimConfig};
use hmai::Result;

pub fn kind(name: &str, rates: [f64; 3], energy_per_gmac: f64) -> AcceleratorKind {
    AcceleratorKind {
        name: name.to_string(),
        style: DataStyle::Sconv,
        propagation: Propagation::OP,
        register: Register::DR,
        fps: ModelKind::ALL.iter().copied().zip(rates).collect::<BTreeMap<_, _>>(),
        energy_per_gmac,
        idle_power: 0.0,
    }
}

pub fn platform_of(kinds: &[AcceleratorKind], counts: &[usize]) -> Platform {
    let cfg = PlatformConfig {
        instances: kinds
            .iter()
            .zip(counts)
            .map(|(k, &count)| PlatformEntry {
                kind: k.name.clone(),
                count,
            })
            .collect(),
    };
    build_platform(&cfg, kinds).unwrap()
}

pub fn hmai_platform() -> Platform {
    build_platform(&PlatformConfig::hmai(), &AcceleratorKind::defaults()).unwrap()
}

pub fn det(id: u64, model: ModelKind, capture: f64, st: f64) -> TaskRecord {
    TaskRecord {
        id,
        camera_id: 0,
        group: CameraKind::FC,
        capture_time: capture,
        task_kind: TaskKind::DET,
        model,
        amount: model.amount(),
        layer_num: model.layer_num(),
        safety_time: st,
        depends_on: None,
    }
}

pub fn straight(duration: f64) -> Vec<ScenarioSegment> {
    vec![ScenarioSegment {
        kind: ScenarioKind::GoStraight,
        start: 0.0,
        duration,
    }]
}

/// Two kinds, each ten times faster than the other on one detection model.
pub fn toy_platform() -> Platform {
    let a = kind("FastYolo", [100.0, 10.0, 100.0], 0.002);
    let b = kind("FastSsd", [10.0, 100.0, 100.0], 0.002);
    platform_of(&[a, b], &[1, 1])
}

pub const TOY_ST: f64 = 0.05;
pub const TOY_GAP: f64 = 0.2;

/// Alternating YOLO/SSD detections spaced so that no task ever queues.
pub fn toy_queue(n: usize, phase: usize) -> Vec<TaskRecord> {
    (0..n)
        .map(|i| {
            let model = if (i + phase).is_multiple_of(2) {
                ModelKind::Yolo
            } else {
                ModelKind::Ssd
            };
            det(i as u64, model, i as f64 * TOY_GAP, TOY_ST)
        })
        .collect()
}

/// Fixed mapping from model to accelerator.
pub struct Mapping(pub [usize; 2]);

impl Scheduler for Mapping {
    fn name(&self) -> &str {
        "mapping"
    }
    fn decide(&mut self, task: &TaskRecord, _view: &PlatformView<'_>) -> Result<usize> {
        Ok(match task.model {
            ModelKind::Yolo => self.0[0],
            _ => self.0[1],
        })
    }
}

pub fn unit_sim(mode: RBalanceMode) -> SimConfig {
    SimConfig {
        r_balance_mode: mode,
        normalization: NormalizationScales::UNIT,
    }
}

/// Every model-to-accelerator mapping on the toy queue, ranked by total reward.
pub fn toy_policy_oracle(tasks: &[TaskRecord]) -> Vec<([usize; 2], f64)> {
    let mut p = toy_platform();
    let sched = straight(tasks.len() as f64 * TOY_GAP + 1.0);
    let mut out = Vec::new();
    for y in 0..2 {
        for s in 0..2 {
            let r = run_episode(
                tasks,
                &sched,
                &mut p,
                &mut Mapping([y, s]),
                &unit_sim(RBalanceMode::ArithmeticMean),
            )
            .unwrap();
            out.push(([y, s], r.summary.total_reward));
        }
    }
    out.sort_by(|a, b| b.1.total_cmp(&a.1));
    out
}

pub fn run(tasks: &[TaskRecord], platform: &mut Platform, s: &mut dyn Scheduler) -> EpisodeReport {
    let end = tasks.iter().map(|t| t.capture_time).fold(0.0, f64::max) + 1.0;
    run_episode(
        tasks,
        &straight(end),
        platform,
        s,
        &unit_sim(RBalanceMode::PaperLiteral),
    )
    .unwrap()
}
