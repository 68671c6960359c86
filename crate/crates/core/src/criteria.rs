//! Safety and platform criteria: the minimal safe distance between two
//! vehicles closing on each other, its inversion into a per-camera safety
//! time, the matching score of a task response, the global state value and
//! the per-task reward.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::platform::HwInfo;

pub const KMH: f64 = 1.0 / 3.6;

/// Kinematic parameters of the minimal safe distance.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RssParams {
    /// Ego velocity, m/s.
    pub v1: f64,
    /// Oncoming velocity magnitude, m/s.
    pub v2: f64,
    pub a_max_accel: f64,
    pub a_min_brake_correct: f64,
    pub a_min_brake: f64,
}

impl RssParams {
    pub const A_MAX_ACCEL: f64 = 8.382;
    pub const A_MIN_BRAKE: f64 = 6.2;

    /// Both vehicles at `v` m/s with the default accelerations.
    pub fn symmetric(v: f64) -> Self {
        RssParams {
            v1: v,
            v2: v,
            a_max_accel: Self::A_MAX_ACCEL,
            a_min_brake_correct: Self::A_MIN_BRAKE,
            a_min_brake: Self::A_MIN_BRAKE,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.a_max_accel > 0.0 && self.a_min_brake_correct > 0.0 && self.a_min_brake > 0.0 {
            Ok(())
        } else {
            Err(Error::Config(format!("accelerations must be positive: {self:?}")))
        }
    }
}

/// Minimal safe distance for a response delay of `rho` seconds.
pub fn rss_min_distance(rho: f64, p: &RssParams) -> Result<f64> {
    if rho < 0.0 || rho.is_nan() {
        return Err(Error::NegativeRho(rho));
    }
    p.validate()?;
    Ok(distance_unchecked(rho, p))
}

fn distance_unchecked(rho: f64, p: &RssParams) -> f64 {
    let v2 = p.v2.abs();
    let v1_rho = p.v1 + rho * p.a_max_accel;
    let v2_rho = v2 + rho * p.a_max_accel;
    (p.v1 + v1_rho) / 2.0 * rho
        + v1_rho * v1_rho / (2.0 * p.a_min_brake_correct)
        + (v2 + v2_rho) / 2.0 * rho
        + v2_rho * v2_rho / (2.0 * p.a_min_brake)
}

/// Absolute tolerance of [`safety_time`].
pub const SAFETY_TIME_TOL: f64 = 1e-9;

/// The delay at which the minimal safe distance equals `d_min`, by bisection.
pub fn safety_time(d_min: f64, p: &RssParams) -> Result<f64> {
    p.validate()?;
    let floor = distance_unchecked(0.0, p);
    if !(d_min > floor) {
        if d_min == floor {
            return Ok(0.0);
        }
        return Err(Error::RangeInsufficient { d_min, floor });
    }
    let mut lo = 0.0;
    let mut hi = 1.0;
    while distance_unchecked(hi, p) < d_min {
        lo = hi;
        hi *= 2.0;
    }
    while hi - lo > SAFETY_TIME_TOL / 8.0 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if distance_unchecked(mid, p) < d_min {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Detection score: rises linearly from 0 at zero response to 1 at the
/// safety time, and is -1 past it.
pub fn matching_score_det(response: f64, st: f64) -> f64 {
    if response <= st {
        response / st
    } else {
        -1.0
    }
}

/// Tracking score: +1 within the safety time, -1 past it.
pub fn matching_score_tra(response: f64, st: f64) -> f64 {
    if response <= st {
        1.0
    } else {
        -1.0
    }
}

/// Reference magnitudes used to normalize energy and time in the global
/// state value.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormalizationScales {
    pub energy: f64,
    pub time: f64,
}

impl NormalizationScales {
    pub const UNIT: NormalizationScales = NormalizationScales { energy: 1.0, time: 1.0 };

    pub fn new(energy: f64, time: f64) -> Result<Self> {
        let s = NormalizationScales { energy, time };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.energy > 0.0 && self.time > 0.0 && self.energy.is_finite() && self.time.is_finite() {
            Ok(())
        } else {
            Err(Error::ZeroScale {
                energy: self.energy,
                time: self.time,
            })
        }
    }
}

/// Platform-level aggregate of per-accelerator HW-Info.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PlatformSummary {
    /// Sum of accelerator energies.
    pub energy: f64,
    /// Maximum accelerator busy time.
    pub time: f64,
    /// Mean accelerator balance rate.
    pub r_balance: f64,
    /// Sum of accelerator matching scores.
    pub ms: f64,
}

impl PlatformSummary {
    pub fn from_infos<'a>(infos: impl IntoIterator<Item = &'a HwInfo>) -> Self {
        let mut s = PlatformSummary::default();
        let mut n = 0usize;
        for info in infos {
            s.energy += info.energy;
            s.time = s.time.max(info.time);
            s.r_balance += info.r_balance;
            s.ms += info.ms;
            n += 1;
        }
        if n > 0 {
            s.r_balance /= n as f64;
        }
        s
    }
}

pub fn gvalue(s: &PlatformSummary, norm: &NormalizationScales) -> Result<f64> {
    norm.validate()?;
    Ok(gvalue_unchecked(s, norm))
}

pub(crate) fn gvalue_unchecked(s: &PlatformSummary, norm: &NormalizationScales) -> f64 {
    (-s.energy / norm.energy - s.time / norm.time + s.r_balance) / 3.0
}

/// Change in global state value plus change in accumulated matching score.
pub fn reward(before: &PlatformSummary, after: &PlatformSummary, norm: &NormalizationScales) -> Result<f64> {
    norm.validate()?;
    Ok(reward_unchecked(before, after, norm))
}

pub(crate) fn reward_unchecked(before: &PlatformSummary, after: &PlatformSummary, norm: &NormalizationScales) -> f64 {
    gvalue_unchecked(after, norm) - gvalue_unchecked(before, norm) + (after.ms - before.ms)
}

/// How an accelerator's balance rate folds in a new sample.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RBalanceMode {
    /// `R <- (r + R) / num`.
    #[default]
    PaperLiteral,
    /// Running mean of all samples.
    ArithmeticMean,
}

/// Per-task contribution folded into an accelerator's HW-Info.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskCost {
    pub energy: f64,
    pub time: f64,
    pub ms: f64,
    pub r: f64,
}

pub fn update_hw_info(info: &HwInfo, cost: &TaskCost, mode: RBalanceMode) -> HwInfo {
    let num = info.num_executed + 1;
    let r_balance = match mode {
        RBalanceMode::PaperLiteral => (cost.r + info.r_balance) / num as f64,
        RBalanceMode::ArithmeticMean => info.r_balance + (cost.r - info.r_balance) / num as f64,
    };
    HwInfo {
        energy: info.energy + cost.energy,
        time: info.time + cost.time,
        r_balance,
        ms: info.ms + cost.ms,
        num_executed: num,
    }
}
