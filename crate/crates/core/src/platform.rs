//! Accelerator kinds, platform compositions and per-accelerator runtime state.
//!
//! Throughput comes from a per-kind frame-rate table; a task's execution time
//! on a kind is the reciprocal of that rate. Energy is proportional to the
//! task's MAC count with a per-kind coefficient, plus an idle draw that is
//! only charged in platform-level energy totals.

use std::collections::{BTreeMap, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// CNN model run by a perception task.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ModelKind {
    #[serde(rename = "YOLO")]
    Yolo,
    #[serde(rename = "SSD")]
    Ssd,
    #[serde(rename = "GOTURN")]
    Goturn,
}

impl ModelKind {
    pub const ALL: [ModelKind; 3] = [ModelKind::Yolo, ModelKind::Ssd, ModelKind::Goturn];

    /// Computation amount in giga-MACs.
    pub fn amount(self) -> f64 {
        match self {
            ModelKind::Ssd => 26.0,
            ModelKind::Yolo => 16.0,
            ModelKind::Goturn => 11.0,
        }
    }

    pub fn layer_num(self) -> u32 {
        match self {
            ModelKind::Ssd => 53,
            ModelKind::Yolo => 101,
            ModelKind::Goturn => 11,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Yolo => "YOLO",
            ModelKind::Ssd => "SSD",
            ModelKind::Goturn => "GOTURN",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Data-processing style: whole 2D convolution, partial 2D convolution, or
/// several 2D convolutions per iteration.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DataStyle {
    Sconv,
    SSconv,
    Mconv,
}

/// How data moves between processing elements.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Propagation {
    /// Ofmaps propagation.
    OP,
    /// Ifmaps propagation.
    IP,
    /// Multiple propagation.
    MP,
}

/// Dispersive (per-PE) or concentrated register allocation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Register {
    DR,
    CR,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AcceleratorKind {
    pub name: String,
    pub style: DataStyle,
    pub propagation: Propagation,
    pub register: Register,
    /// Frames per second for each model.
    pub fps: BTreeMap<ModelKind, f64>,
    /// Joules per giga-MAC while executing.
    pub energy_per_gmac: f64,
    /// Watts drawn while idle.
    pub idle_power: f64,
}

pub const SCONV_OD: &str = "SconvOD";
pub const SCONV_IC: &str = "SconvIC";
pub const MCONV_MC: &str = "MconvMC";

impl AcceleratorKind {
    fn with_rates(name: &str, tags: (DataStyle, Propagation, Register), rates: [f64; 3], energy_per_gmac: f64) -> Self {
        AcceleratorKind {
            name: name.to_string(),
            style: tags.0,
            propagation: tags.1,
            register: tags.2,
            fps: ModelKind::ALL.iter().copied().zip(rates).collect(),
            energy_per_gmac,
            idle_power: DEFAULT_IDLE_POWER,
        }
    }

    pub fn sconv_od() -> Self {
        Self::with_rates(
            SCONV_OD,
            (DataStyle::Sconv, Propagation::OP, Register::DR),
            [170.37, 74.99, 352.69],
            0.00200,
        )
    }

    pub fn sconv_ic() -> Self {
        Self::with_rates(
            SCONV_IC,
            (DataStyle::SSconv, Propagation::IP, Register::CR),
            [132.54, 82.94, 350.34],
            0.00190,
        )
    }

    pub fn mconv_mc() -> Self {
        Self::with_rates(
            MCONV_MC,
            (DataStyle::Mconv, Propagation::MP, Register::CR),
            [149.32, 82.57, 500.54],
            0.00195,
        )
    }

    /// The three kinds instantiated by the default platform.
    pub fn defaults() -> Vec<AcceleratorKind> {
        vec![Self::sconv_od(), Self::sconv_ic(), Self::mconv_mc()]
    }

    pub fn fps_of(&self, model: ModelKind) -> Result<f64> {
        match self.fps.get(&model) {
            Some(&fps) if fps > 0.0 => Ok(fps),
            _ => Err(Error::UnknownModel {
                kind: self.name.clone(),
                model,
            }),
        }
    }
}

/// Idle draw per accelerator in watts.
pub const DEFAULT_IDLE_POWER: f64 = 1.5;

/// Seconds to run one frame of `model` on `kind`.
pub fn exec_time(model: ModelKind, kind: &AcceleratorKind) -> Result<f64> {
    Ok(1.0 / kind.fps_of(model)?)
}

/// Joules spent executing `amount` giga-MACs on `kind`.
pub fn exec_energy(amount: f64, kind: &AcceleratorKind) -> f64 {
    amount * kind.energy_per_gmac
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlatformEntry {
    pub kind: String,
    pub count: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlatformConfig {
    pub instances: Vec<PlatformEntry>,
}

impl PlatformConfig {
    pub const PRESETS: [&'static str; 4] = ["hmai", "homo-sconvod", "homo-sconvic", "homo-mconvmc"];

    fn of(entries: &[(&str, usize)]) -> Self {
        PlatformConfig {
            instances: entries
                .iter()
                .map(|&(kind, count)| PlatformEntry {
                    kind: kind.to_string(),
                    count,
                })
                .collect(),
        }
    }

    /// 4 SconvOD, 4 SconvIC, 3 MconvMC.
    pub fn hmai() -> Self {
        Self::of(&[(SCONV_OD, 4), (SCONV_IC, 4), (MCONV_MC, 3)])
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "hmai" => Ok(Self::hmai()),
            "homo-sconvod" => Ok(Self::of(&[(SCONV_OD, 13)])),
            "homo-sconvic" => Ok(Self::of(&[(SCONV_IC, 13)])),
            "homo-mconvmc" => Ok(Self::of(&[(MCONV_MC, 12)])),
            other => Err(Error::Config(format!(
                "unknown platform preset {other:?} (expected one of {})",
                Self::PRESETS.join(", ")
            ))),
        }
    }

    pub fn total(&self) -> usize {
        self.instances.iter().map(|e| e.count).sum()
    }
}

/// Live HW-Info of one accelerator.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct HwInfo {
    pub energy: f64,
    pub time: f64,
    pub r_balance: f64,
    pub ms: f64,
    pub num_executed: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AcceleratorState {
    pub index: usize,
    /// Position of this accelerator's kind in [`Platform::kinds`].
    pub kind: usize,
    pub busy_until: f64,
    /// Dispatched task ids not yet completed, in execution order.
    pub fifo: VecDeque<u64>,
    /// Updated when a task completes.
    pub info: HwInfo,
}

impl AcceleratorState {
    pub fn is_busy_at(&self, now: f64) -> bool {
        self.busy_until > now
    }
}

/// A built platform: the kind catalog plus one state per accelerator.
#[derive(Clone, Debug)]
pub struct Platform {
    pub kinds: Vec<AcceleratorKind>,
    pub accelerators: Vec<AcceleratorState>,
    /// `exec[a][m]`: execution time of model `m` on accelerator `a`.
    exec: Vec<[f64; 3]>,
}

impl Platform {
    pub fn len(&self) -> usize {
        self.accelerators.len()
    }

    pub fn is_empty(&self) -> bool {
        self.accelerators.is_empty()
    }

    pub fn kind_of(&self, accel: usize) -> &AcceleratorKind {
        &self.kinds[self.accelerators[accel].kind]
    }

    /// Execution time on accelerator `accel`. Only models present in every
    /// kind's table are admitted by [`build_platform`].
    pub fn exec_time(&self, model: ModelKind, accel: usize) -> f64 {
        self.exec[accel][model_slot(model)]
    }

    pub fn exec_energy(&self, amount: f64, accel: usize) -> f64 {
        exec_energy(amount, self.kind_of(accel))
    }

    /// Zero all runtime state, keeping the composition.
    pub fn reset(&mut self) {
        for a in &mut self.accelerators {
            a.busy_until = 0.0;
            a.fifo.clear();
            a.info = HwInfo::default();
        }
    }
}

pub(crate) fn model_slot(model: ModelKind) -> usize {
    match model {
        ModelKind::Yolo => 0,
        ModelKind::Ssd => 1,
        ModelKind::Goturn => 2,
    }
}

/// Instantiate `config` against the kind catalog. States are zeroed and
/// indexed in configuration order.
pub fn build_platform(config: &PlatformConfig, catalog: &[AcceleratorKind]) -> Result<Platform> {
    if config.total() == 0 {
        return Err(Error::EmptyPlatform);
    }
    let mut kinds: Vec<AcceleratorKind> = Vec::new();
    let mut accelerators = Vec::with_capacity(config.total());
    let mut exec = Vec::with_capacity(config.total());
    for entry in &config.instances {
        let kind = catalog
            .iter()
            .find(|k| k.name == entry.kind)
            .ok_or_else(|| Error::UnknownKind(entry.kind.clone()))?;
        let mut times = [0.0; 3];
        for model in ModelKind::ALL {
            times[model_slot(model)] = exec_time(model, kind)?;
        }
        let slot = match kinds.iter().position(|k| k.name == kind.name) {
            Some(slot) => slot,
            None => {
                kinds.push(kind.clone());
                kinds.len() - 1
            }
        };
        for _ in 0..entry.count {
            accelerators.push(AcceleratorState {
                index: accelerators.len(),
                kind: slot,
                busy_until: 0.0,
                fifo: VecDeque::new(),
                info: HwInfo::default(),
            });
            exec.push(times);
        }
    }
    Ok(Platform {
        kinds,
        accelerators,
        exec,
    })
}

/// Fraction of accelerator-time spent executing: sum of busy time over
/// `busy.len() * makespan`.
pub fn utilization_rate(busy: &[f64], makespan: f64) -> f64 {
    if busy.is_empty() || makespan <= 0.0 {
        return 0.0;
    }
    let total: f64 = busy.iter().sum();
    (total / (busy.len() as f64 * makespan)).clamp(0.0, 1.0)
}
