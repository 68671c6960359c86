//! Agent observation: three task features plus four per accelerator.
//!
//! Raw HW-Info totals grow without bound over an episode, so the per-accelerator
//! features are the parts of HW-Info that describe the present: energy and
//! busy time committed but not yet executed, the balance rate, and the mean
//! matching score per executed task.

use serde::{Deserialize, Serialize};

use crate::envgen::TaskRecord;
use crate::sched::PlatformView;

pub const TASK_FEATURES: usize = 3;
pub const ACCEL_FEATURES: usize = 4;

pub fn state_len(accelerators: usize) -> usize {
    TASK_FEATURES + ACCEL_FEATURES * accelerators
}

/// Reference constants dividing each raw feature.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StateScales {
    /// giga-MACs
    pub amount: f64,
    pub layers: f64,
    /// seconds, for safety time
    pub safety_time: f64,
    /// joules, for committed-but-unexecuted energy
    pub energy: f64,
    /// seconds, for remaining committed busy time
    pub backlog: f64,
}

impl Default for StateScales {
    fn default() -> Self {
        StateScales {
            amount: 26.0,
            layers: 101.0,
            safety_time: 1.0,
            energy: 0.05,
            backlog: 0.02,
        }
    }
}

pub fn encode_state(task: &TaskRecord, view: &PlatformView<'_>, scales: &StateScales, out: &mut Vec<f64>) {
    out.clear();
    out.push(task.amount / scales.amount);
    out.push(task.layer_num as f64 / scales.layers);
    out.push(task.safety_time / scales.safety_time);
    for (a, committed) in view.ledger.committed.iter().enumerate() {
        let done = &view.platform.accelerators[a].info;
        out.push((committed.energy - done.energy).max(0.0) / scales.energy);
        out.push((view.ledger.busy_until[a] - view.now).max(0.0) / scales.backlog);
        out.push(committed.r_balance);
        out.push(if committed.num_executed > 0 {
            committed.ms / committed.num_executed as f64
        } else {
            0.0
        });
    }
}
