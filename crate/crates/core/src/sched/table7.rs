use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{PlatformView, Scheduler};
use crate::envgen::{ScenarioKind, TaskRecord};
use crate::error::{Error, Result};
use crate::platform::{ModelKind, Platform, MCONV_MC, SCONV_IC, SCONV_OD};

/// Instance counts per kind reserved for each (scenario, model) stream.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Table7Config {
    /// Weight each instance by its throughput on the model instead of
    /// cycling uniformly.
    pub weighted: bool,
    pub allocation: BTreeMap<ScenarioKind, BTreeMap<ModelKind, BTreeMap<String, u32>>>,
}

impl Default for Table7Config {
    fn default() -> Self {
        let row = |entries: &[(ModelKind, &[(&str, u32)])]| -> BTreeMap<ModelKind, BTreeMap<String, u32>> {
            entries
                .iter()
                .map(|(m, kinds)| (*m, kinds.iter().map(|(k, c)| (k.to_string(), *c)).collect()))
                .collect()
        };
        let (so, si, mm) = (SCONV_OD, SCONV_IC, MCONV_MC);
        let mut allocation = BTreeMap::new();
        allocation.insert(
            ScenarioKind::GoStraight,
            row(&[
                (ModelKind::Yolo, &[(so, 1), (si, 2)]),
                (ModelKind::Ssd, &[(so, 3), (si, 1), (mm, 2)]),
                (ModelKind::Goturn, &[(si, 1), (mm, 1)]),
            ]),
        );
        allocation.insert(
            ScenarioKind::Turn,
            row(&[
                (ModelKind::Yolo, &[(so, 2), (mm, 1)]),
                (ModelKind::Ssd, &[(so, 2), (si, 4)]),
                (ModelKind::Goturn, &[(mm, 2)]),
            ]),
        );
        allocation.insert(
            ScenarioKind::Reverse,
            row(&[
                (ModelKind::Yolo, &[(si, 3)]),
                (ModelKind::Ssd, &[(so, 2), (mm, 3)]),
                (ModelKind::Goturn, &[(so, 2), (si, 1)]),
            ]),
        );
        Table7Config {
            weighted: true,
            allocation,
        }
    }
}

#[derive(Clone, Debug)]
struct Stream {
    members: Vec<usize>,
    weights: Vec<f64>,
    current: Vec<f64>,
}

impl Stream {
    /// Smooth weighted round robin; with equal weights this is plain
    /// round robin.
    fn next(&mut self) -> usize {
        let total: f64 = self.weights.iter().sum();
        let mut best = 0;
        for i in 0..self.members.len() {
            self.current[i] += self.weights[i];
            if self.current[i] > self.current[best] {
                best = i;
            }
        }
        self.current[best] -= total;
        self.members[best]
    }
}

/// Static per-scenario allocation: each (scenario, model) stream cycles over
/// its own subset of accelerators.
#[derive(Clone, Debug)]
pub struct Table7 {
    streams: BTreeMap<(ScenarioKind, ModelKind), Stream>,
}

impl Table7 {
    /// Within each scenario, subsets are carved from the platform in model
    /// order, taking the next unused instances of each kind.
    pub fn new(cfg: &Table7Config, platform: &Platform) -> Result<Self> {
        let mut streams = BTreeMap::new();
        for (&scenario, models) in &cfg.allocation {
            let mut used = vec![false; platform.len()];
            for model in ModelKind::ALL {
                let Some(kinds) = models.get(&model) else { continue };
                let mut members = Vec::new();
                for (kind, &count) in kinds {
                    let mut free = (0..platform.len()).filter(|&a| !used[a] && platform.kind_of(a).name == *kind);
                    for _ in 0..count {
                        let a = free.next().ok_or_else(|| {
                            Error::Config(format!(
                                "table7 allocation for {scenario:?}/{model} needs more {kind} instances than the platform has"
                            ))
                        })?;
                        members.push(a);
                    }
                    for &a in &members {
                        used[a] = true;
                    }
                }
                if members.is_empty() {
                    continue;
                }
                members.sort_unstable();
                let weights = members
                    .iter()
                    .map(|&a| {
                        if cfg.weighted {
                            1.0 / platform.exec_time(model, a)
                        } else {
                            1.0
                        }
                    })
                    .collect();
                streams.insert(
                    (scenario, model),
                    Stream {
                        current: vec![0.0; members.len()],
                        members,
                        weights,
                    },
                );
            }
        }
        Ok(Table7 { streams })
    }

    pub fn choose(&mut self, model: ModelKind, scenario: Option<ScenarioKind>) -> Result<usize> {
        let scenario = scenario.unwrap_or(ScenarioKind::GoStraight);
        self.streams
            .get_mut(&(scenario, model))
            .map(Stream::next)
            .ok_or(Error::MissingAllocation { scenario, model })
    }

    pub fn members(&self, scenario: ScenarioKind, model: ModelKind) -> Option<&[usize]> {
        self.streams.get(&(scenario, model)).map(|s| s.members.as_slice())
    }
}

impl Scheduler for Table7 {
    fn name(&self) -> &str {
        "table7"
    }

    fn decide(&mut self, task: &TaskRecord, view: &PlatformView<'_>) -> Result<usize> {
        self.choose(task.model, view.scenario)
    }
}
