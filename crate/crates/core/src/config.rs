//! Configuration file handling.
//!
//! A user file is merged over the serialized defaults. Keys that do not exist
//! in the defaults are rejected by name, except inside tables whose keys are
//! data (per-camera overrides, frame-rate matrix, allocation table).
//! Environment variables `HMAI__SECTION__KEY=value` override single keys
//! after the file is applied.

use std::collections::BTreeMap;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use toml::{Table, Value};

use crate::criteria::{RBalanceMode, RssParams, KMH};
use crate::envgen::{
    build_scenario_schedule, generate_task_queue, Area, CameraGroup, CameraKind, DrivingArea, FrameRateMatrix,
    RouteConfig, SafetyInputs, SafetyTimes, ScenarioSegment, ScheduleLimits, TaskRecord,
};
use crate::error::{Error, Result};
use crate::flexai::{AgentConfig, StateScales};
use crate::platform::{build_platform, AcceleratorKind, Platform, PlatformConfig, PlatformEntry};
use crate::sched::{GaParams, Overheads, SaParams, Table7Config};
use crate::sim::BrakeConfig;

pub const ENV_PREFIX: &str = "HMAI__";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AreaParams {
    pub max_velocity_kmh: f64,
    pub max_times_turn: u32,
    pub max_times_reverse: u32,
    /// seconds
    pub max_duration_turn: f64,
    pub max_duration_reverse: f64,
    pub frame_rate_scale: f64,
    /// Ego speed assumed during reverse segments; 0 uses the area limit.
    pub reverse_velocity_kmh: f64,
    /// Per camera group, replaces the computed safety time.
    pub safety_time: BTreeMap<CameraKind, f64>,
}

impl AreaParams {
    fn defaults(area: Area) -> Self {
        AreaParams {
            max_velocity_kmh: area.default_max_velocity() / KMH,
            max_times_turn: 10,
            max_times_reverse: if area.reverse_allowed() { 10 } else { 0 },
            max_duration_turn: 10.0,
            max_duration_reverse: 20.0,
            frame_rate_scale: 1.0,
            reverse_velocity_kmh: 0.0,
            safety_time: BTreeMap::new(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvConfig {
    pub area: Area,
    /// metres
    pub distance: f64,
    /// Route speed; 0 drives at the area limit.
    pub velocity_kmh: f64,
    pub turn_velocity_kmh: f64,
    pub seed: u64,
    /// seconds
    pub min_segment: f64,
    pub max_event_fraction: f64,
    /// Used where a camera's range is shorter than the zero-delay stopping
    /// distance at the area speed.
    pub fallback_safety_time: f64,
    pub areas: BTreeMap<Area, AreaParams>,
    pub cameras: Vec<CameraGroup>,
    pub frame_rates: FrameRateMatrix,
}

impl Default for EnvConfig {
    fn default() -> Self {
        EnvConfig {
            area: Area::UB,
            distance: 1000.0,
            velocity_kmh: 0.0,
            turn_velocity_kmh: 50.0,
            seed: 1,
            min_segment: ScheduleLimits::default().min_segment,
            max_event_fraction: ScheduleLimits::default().max_event_fraction,
            fallback_safety_time: 0.05,
            areas: Area::ALL.into_iter().map(|a| (a, AreaParams::defaults(a))).collect(),
            cameras: CameraGroup::defaults(),
            frame_rates: FrameRateMatrix::default_matrix(),
        }
    }
}

/// A generated route and its task queue.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneratedQueue {
    pub route: RouteConfig,
    pub schedule: Vec<ScenarioSegment>,
    pub safety: SafetyTimes,
    #[serde(skip)]
    pub tasks: Vec<TaskRecord>,
}

impl EnvConfig {
    pub fn area_params(&self, area: Area) -> Result<&AreaParams> {
        self.areas
            .get(&area)
            .ok_or_else(|| Error::Config(format!("no parameters for area {area}")))
    }

    pub fn driving_area(&self, area: Area) -> Result<DrivingArea> {
        let p = self.area_params(area)?;
        Ok(DrivingArea::with_velocity(area, p.max_velocity_kmh * KMH))
    }

    pub fn route(&self, area: Area, distance: f64, seed: u64) -> Result<RouteConfig> {
        let p = self.area_params(area)?;
        let driving = self.driving_area(area)?;
        let velocity = if self.velocity_kmh > 0.0 {
            self.velocity_kmh * KMH
        } else {
            driving.max_velocity
        };
        let route = RouteConfig {
            area: driving,
            distance,
            velocity,
            max_times_turn: p.max_times_turn,
            max_times_reverse: p.max_times_reverse,
            max_duration_turn: p.max_duration_turn,
            max_duration_reverse: p.max_duration_reverse,
            seed,
        };
        route.validate()?;
        Ok(route)
    }

    pub fn safety_times(&self, area: Area, rss: &RssSection) -> Result<SafetyTimes> {
        let p = self.area_params(area)?;
        let driving = self.driving_area(area)?;
        let reverse = if p.reverse_velocity_kmh > 0.0 {
            p.reverse_velocity_kmh * KMH
        } else {
            driving.max_velocity
        };
        SafetyTimes::compute(&SafetyInputs {
            area: driving,
            cameras: &self.cameras,
            accelerations: rss.params(),
            turn_velocity: self.turn_velocity_kmh * KMH,
            reverse_velocity: reverse,
            fallback: self.fallback_safety_time,
            overrides: &p.safety_time,
        })
    }

    pub fn limits(&self) -> ScheduleLimits {
        ScheduleLimits {
            min_segment: self.min_segment,
            max_event_fraction: self.max_event_fraction,
        }
    }

    pub fn generate(&self, area: Area, distance: f64, seed: u64, rss: &RssSection) -> Result<GeneratedQueue> {
        let route = self.route(area, distance, seed)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let schedule = build_scenario_schedule(&route, &self.limits(), &mut rng)?;
        self.queue_for(route, schedule, rss)
    }

    /// Task queue for an explicit schedule.
    pub fn queue_for(
        &self,
        route: RouteConfig,
        schedule: Vec<ScenarioSegment>,
        rss: &RssSection,
    ) -> Result<GeneratedQueue> {
        let area = route.area.kind;
        let safety = self.safety_times(area, rss)?;
        let scale = self.area_params(area)?.frame_rate_scale;
        let tasks = generate_task_queue(area, &self.cameras, &self.frame_rates, scale, &safety, &schedule)?;
        Ok(GeneratedQueue {
            route,
            schedule,
            safety,
            tasks,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RssSection {
    pub a_max_accel: f64,
    pub a_min_brake_correct: f64,
    pub a_min_brake: f64,
}

impl Default for RssSection {
    fn default() -> Self {
        RssSection {
            a_max_accel: RssParams::A_MAX_ACCEL,
            a_min_brake_correct: RssParams::A_MIN_BRAKE,
            a_min_brake: RssParams::A_MIN_BRAKE,
        }
    }
}

impl RssSection {
    /// Accelerations only; velocities are filled in per scenario.
    pub fn params(&self) -> RssParams {
        RssParams {
            v1: 0.0,
            v2: 0.0,
            a_max_accel: self.a_max_accel,
            a_min_brake_correct: self.a_min_brake_correct,
            a_min_brake: self.a_min_brake,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NormalizationMode {
    /// Scales from a static best-fit run on the same queue.
    #[default]
    WorstCase,
    /// No scaling.
    Unit,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CriteriaSection {
    pub r_balance_mode: RBalanceMode,
    pub normalization: NormalizationMode,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlatformSection {
    /// `hmai`, `homo-sconvod`, `homo-sconvic` or `homo-mconvmc`; ignored when
    /// `instances` is non-empty.
    pub preset: String,
    pub instances: Vec<PlatformEntry>,
    pub kinds: Vec<AcceleratorKind>,
}

impl Default for PlatformSection {
    fn default() -> Self {
        PlatformSection {
            preset: "hmai".into(),
            instances: Vec::new(),
            kinds: AcceleratorKind::defaults(),
        }
    }
}

impl PlatformSection {
    pub fn composition(&self, preset: Option<&str>) -> Result<PlatformConfig> {
        match preset {
            Some(p) => PlatformConfig::preset(p),
            None if !self.instances.is_empty() => Ok(PlatformConfig {
                instances: self.instances.clone(),
            }),
            None => PlatformConfig::preset(&self.preset),
        }
    }

    pub fn build(&self, preset: Option<&str>) -> Result<Platform> {
        build_platform(&self.composition(preset)?, &self.kinds)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchedSection {
    /// Batching window of the metaheuristics, seconds.
    pub window: f64,
    pub seed: u64,
    pub ga: GaParams,
    pub sa: SaParams,
    pub table7: Table7Config,
    pub overheads: Overheads,
}

impl Default for SchedSection {
    fn default() -> Self {
        SchedSection {
            window: 0.05,
            seed: 1,
            ga: GaParams::default(),
            sa: SaParams::default(),
            table7: Table7Config::default(),
            overheads: Overheads::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    pub episodes: usize,
    /// Training routes draw their length uniformly from this range, metres.
    pub route_min: f64,
    pub route_max: f64,
    /// Episode `k` uses queue seed `seed + k`.
    pub seed: u64,
}

impl Default for TrainSection {
    fn default() -> Self {
        TrainSection {
            episodes: 200,
            route_min: 100.0,
            route_max: 150.0,
            seed: 1000,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BrakeSection {
    pub velocity_kmh: f64,
    /// m/s²
    pub a_brake: f64,
    /// seconds
    pub t_data: f64,
    pub t_mech: f64,
    /// The obstacle appears when the vehicle has covered this distance.
    pub trigger_distance: f64,
    pub trigger_group: CameraKind,
}

impl Default for BrakeSection {
    fn default() -> Self {
        let b = BrakeConfig::default();
        BrakeSection {
            velocity_kmh: b.velocity / KMH,
            a_brake: b.a_brake,
            t_data: b.t_data,
            t_mech: b.t_mech,
            trigger_distance: 1000.0,
            trigger_group: CameraKind::FC,
        }
    }
}

impl BrakeSection {
    pub fn brake(&self) -> BrakeConfig {
        BrakeConfig {
            velocity: self.velocity_kmh * KMH,
            a_brake: self.a_brake,
            t_data: self.t_data,
            t_mech: self.t_mech,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub env: EnvConfig,
    pub rss: RssSection,
    pub criteria: CriteriaSection,
    pub platform: PlatformSection,
    pub sched: SchedSection,
    pub agent: AgentConfig,
    pub state: StateScales,
    pub train: TrainSection,
    pub brake: BrakeSection,
}

/// Tables whose keys are data rather than schema.
fn is_open_table(path: &[String]) -> bool {
    matches!(
        path.iter().map(String::as_str).collect::<Vec<_>>().as_slice(),
        ["env", "frame_rates", ..] | ["env", "areas", _, "safety_time", ..] | ["sched", "table7", "allocation", ..]
    ) || matches!(path, [a, b] if a == "env" && b == "areas")
}

fn merge(base: &mut Table, user: &Table, path: &mut Vec<String>, unknown: &mut Vec<String>) {
    for (k, v) in user {
        path.push(k.clone());
        match (base.get_mut(k), v) {
            (Some(Value::Table(b)), Value::Table(u)) => merge(b, u, path, unknown),
            (Some(slot), _) => *slot = v.clone(),
            (None, _) => {
                if is_open_table(&path[..path.len() - 1]) {
                    base.insert(k.clone(), v.clone());
                } else {
                    unknown.push(path.join("."));
                }
            }
        }
        path.pop();
    }
}

fn default_table() -> Table {
    match Value::try_from(Config::default()) {
        Ok(Value::Table(t)) => t,
        _ => unreachable!("default configuration serializes to a table"),
    }
}

fn parse_env_value(raw: &str) -> Value {
    toml::from_str::<Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(raw.to_string()))
}

impl Config {
    /// Merge a parsed user table over the defaults.
    pub fn from_table(user: &Table) -> Result<Self> {
        Self::from_table_with_env(user, std::iter::empty::<(String, String)>())
    }

    pub fn from_table_with_env<I>(user: &Table, env: I) -> Result<Self>
    where
        I: IntoIterator<Item = (String, String)>,
    {
        let mut base = default_table();
        let mut unknown = Vec::new();
        merge(&mut base, user, &mut Vec::new(), &mut unknown);

        let mut overrides: Vec<(String, String)> = env.into_iter().filter(|(k, _)| k.starts_with(ENV_PREFIX)).collect();
        overrides.sort();
        for (key, raw) in overrides {
            let parts: Vec<&str> = key[ENV_PREFIX.len()..].split("__").collect();
            if !apply_override(&mut base, &parts, parse_env_value(&raw)) {
                unknown.push(key);
            }
        }
        if !unknown.is_empty() {
            return Err(Error::UnknownConfigKeys(unknown));
        }
        let cfg: Config = Value::Table(base)
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let user: Table = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        Self::from_table_with_env(&user, std::env::vars())
    }

    /// Load a TOML file, or a JSON manifest carrying a `config` object.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        if path.extension().is_some_and(|e| e == "json") {
            let value: serde_json::Value = serde_json::from_str(&text).map_err(|e| Error::Malformed {
                path: path.into(),
                message: e.to_string(),
            })?;
            let inner = value.get("config").cloned().unwrap_or(value);
            let cfg: Config = serde_json::from_value(inner).map_err(|e| Error::Config(e.to_string()))?;
            cfg.validate()?;
            return Ok(cfg);
        }
        Self::from_toml_str(&text)
    }

    /// Defaults plus environment overrides.
    pub fn from_env() -> Result<Self> {
        Self::from_table_with_env(&Table::new(), std::env::vars())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).unwrap_or_default()
    }

    pub fn validate(&self) -> Result<()> {
        let e = &self.env;
        if !(e.distance > 0.0) || !(e.min_segment > 0.0) || !(e.turn_velocity_kmh > 0.0) {
            return Err(Error::Config(
                "env.distance, env.min_segment and env.turn_velocity_kmh must be positive".into(),
            ));
        }
        if !(0.0..=1.0).contains(&e.max_event_fraction) || !(e.fallback_safety_time > 0.0) {
            return Err(Error::Config(
                "env.max_event_fraction must lie in [0, 1] and env.fallback_safety_time be positive".into(),
            ));
        }
        for (area, p) in &e.areas {
            if !(p.max_velocity_kmh > 0.0) || !(p.frame_rate_scale > 0.0) {
                return Err(Error::Config(format!(
                    "env.areas.{area}: velocity and frame_rate_scale must be positive"
                )));
            }
            if !area.reverse_allowed() && p.max_times_reverse > 0 {
                return Err(Error::InvalidRoute(format!(
                    "reversing is not allowed in {area} but max_times_reverse = {}",
                    p.max_times_reverse
                )));
            }
        }
        let r = &self.rss;
        if !(r.a_max_accel > 0.0 && r.a_min_brake > 0.0 && r.a_min_brake_correct > 0.0) {
            return Err(Error::Config("rss accelerations must be positive".into()));
        }
        if !(self.sched.window > 0.0) {
            return Err(Error::Config("sched.window must be positive".into()));
        }
        if !(self.train.route_min > 0.0) || self.train.route_max < self.train.route_min {
            return Err(Error::Config(
                "train.route_min must be positive and ≤ train.route_max".into(),
            ));
        }
        if !(self.brake.a_brake > 0.0) || self.brake.velocity_kmh < 0.0 {
            return Err(Error::Config(
                "brake.a_brake must be positive and velocity non-negative".into(),
            ));
        }
        self.agent.validate()
    }
}

/// Set `path` (matched case-insensitively) to `value`; false if absent.
fn apply_override(table: &mut Table, path: &[&str], value: Value) -> bool {
    let Some((head, rest)) = path.split_first() else {
        return false;
    };
    let Some(key) = table.keys().find(|k| k.eq_ignore_ascii_case(head)).cloned() else {
        return false;
    };
    if rest.is_empty() {
        table.insert(key, value);
        return true;
    }
    match table.get_mut(&key) {
        Some(Value::Table(inner)) => apply_override(inner, rest, value),
        _ => false,
    }
}
