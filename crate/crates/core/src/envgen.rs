//! Driving-route and task-queue generation.
//!
//! A route is a straight drive of `distance` metres at `velocity`, split into
//! go-straight, turn and reverse segments. Every camera emits frames at the
//! rate its group requires for the current area and scenario; each frame
//! becomes a detection task and, except for rear cameras outside reverse
//! segments, a tracking task that depends on it.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{BufRead, Write};

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize, Serializer};

use crate::criteria::{safety_time, RssParams, KMH};
use crate::error::{Error, Result};
use crate::platform::ModelKind;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Area {
    UB,
    UHW,
    HW,
}

impl Area {
    pub const ALL: [Area; 3] = [Area::UB, Area::UHW, Area::HW];

    pub fn parse(s: &str) -> Result<Area> {
        match s.to_ascii_lowercase().as_str() {
            "ub" => Ok(Area::UB),
            "uhw" => Ok(Area::UHW),
            "hw" => Ok(Area::HW),
            _ => Err(Error::Config(format!("unknown area {s:?} (expected ub, uhw or hw)"))),
        }
    }

    pub fn default_max_velocity(self) -> f64 {
        match self {
            Area::UB => 60.0 * KMH,
            Area::UHW => 80.0 * KMH,
            Area::HW => 120.0 * KMH,
        }
    }

    pub fn reverse_allowed(self) -> bool {
        self != Area::HW
    }
}

impl fmt::Display for Area {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DrivingArea {
    pub kind: Area,
    /// m/s
    pub max_velocity: f64,
    pub reverse_allowed: bool,
}

impl DrivingArea {
    pub fn new(kind: Area) -> Self {
        DrivingArea {
            kind,
            max_velocity: kind.default_max_velocity(),
            reverse_allowed: kind.reverse_allowed(),
        }
    }

    pub fn with_velocity(kind: Area, max_velocity: f64) -> Self {
        DrivingArea {
            max_velocity,
            ..DrivingArea::new(kind)
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum CameraKind {
    FC,
    FLSC,
    RLSC,
    FRSC,
    RRSC,
    RC,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Facing {
    Forward,
    Side,
    Rear,
}

impl CameraKind {
    pub const ALL: [CameraKind; 6] = [
        CameraKind::FC,
        CameraKind::FLSC,
        CameraKind::RLSC,
        CameraKind::FRSC,
        CameraKind::RRSC,
        CameraKind::RC,
    ];

    pub fn facing(self) -> Facing {
        match self {
            CameraKind::FC => Facing::Forward,
            CameraKind::RC => Facing::Rear,
            _ => Facing::Side,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraGroup {
    pub kind: CameraKind,
    pub count: u32,
    /// metres
    pub max_distance: f64,
    pub facing: Facing,
}

impl CameraGroup {
    pub fn new(kind: CameraKind, count: u32) -> Self {
        let facing = kind.facing();
        let max_distance = match facing {
            Facing::Forward => 250.0,
            Facing::Side => 80.0,
            Facing::Rear => 100.0,
        };
        CameraGroup {
            kind,
            count,
            max_distance,
            facing,
        }
    }

    /// 11 FC, 4 of each side group, 3 RC.
    pub fn defaults() -> Vec<CameraGroup> {
        [11, 4, 4, 4, 4, 3]
            .into_iter()
            .zip(CameraKind::ALL)
            .map(|(count, kind)| CameraGroup::new(kind, count))
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ScenarioKind {
    GoStraight,
    Turn,
    Reverse,
}

impl ScenarioKind {
    pub const ALL: [ScenarioKind; 3] = [ScenarioKind::GoStraight, ScenarioKind::Turn, ScenarioKind::Reverse];
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSegment {
    pub kind: ScenarioKind,
    pub start: f64,
    pub duration: f64,
}

impl ScenarioSegment {
    pub fn end(&self) -> f64 {
        self.start + self.duration
    }
}

/// Scenario in effect at time `t`; the last segment also covers its end.
pub fn scenario_at(schedule: &[ScenarioSegment], t: f64) -> Option<ScenarioKind> {
    let idx = schedule.partition_point(|s| s.start <= t);
    if idx == 0 {
        return None;
    }
    let seg = &schedule[idx - 1];
    if t < seg.end() || (idx == schedule.len() && t <= seg.end() + 1e-9) {
        Some(seg.kind)
    } else {
        None
    }
}

/// Frames per second by area, scenario and camera group.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FrameRateMatrix {
    pub fps: BTreeMap<Area, BTreeMap<ScenarioKind, BTreeMap<CameraKind, f64>>>,
}

impl FrameRateMatrix {
    /// Urban rates; the other areas reuse them, with reverse dropped on the
    /// highway.
    pub fn default_matrix() -> Self {
        let rows: [(ScenarioKind, [f64; 6]); 3] = [
            (ScenarioKind::GoStraight, [40.0, 30.0, 20.0, 30.0, 20.0, 10.0]),
            (ScenarioKind::Turn, [40.0, 40.0, 30.0, 30.0, 20.0, 10.0]),
            (ScenarioKind::Reverse, [20.0, 20.0, 30.0, 20.0, 30.0, 40.0]),
        ];
        let mut fps = BTreeMap::new();
        for area in Area::ALL {
            let mut by_scenario = BTreeMap::new();
            for (scenario, rates) in rows {
                if scenario == ScenarioKind::Reverse && !area.reverse_allowed() {
                    continue;
                }
                by_scenario.insert(scenario, CameraKind::ALL.into_iter().zip(rates).collect());
            }
            fps.insert(area, by_scenario);
        }
        FrameRateMatrix { fps }
    }

    pub fn frame_rate(&self, area: Area, scenario: ScenarioKind, camera: CameraKind) -> Result<f64> {
        self.fps
            .get(&area)
            .and_then(|m| m.get(&scenario))
            .and_then(|m| m.get(&camera))
            .copied()
            .filter(|fps| *fps > 0.0)
            .ok_or(Error::InvalidScenario { area, scenario, camera })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RouteConfig {
    pub area: DrivingArea,
    /// metres
    pub distance: f64,
    /// m/s
    pub velocity: f64,
    pub max_times_turn: u32,
    pub max_times_reverse: u32,
    /// seconds
    pub max_duration_turn: f64,
    pub max_duration_reverse: f64,
    pub seed: u64,
}

impl RouteConfig {
    pub fn duration(&self) -> f64 {
        self.distance / self.velocity
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.distance > 0.0) || !(self.velocity > 0.0) {
            return Err(Error::InvalidRoute(format!(
                "distance {} m and velocity {} m/s must be positive",
                self.distance, self.velocity
            )));
        }
        if !self.area.reverse_allowed && self.max_times_reverse > 0 {
            return Err(Error::InvalidRoute(format!(
                "reversing is not allowed in {} but max_times_reverse = {}",
                self.area.kind, self.max_times_reverse
            )));
        }
        if self.max_duration_turn < 0.0 || self.max_duration_reverse < 0.0 {
            return Err(Error::InvalidRoute("event durations must be non-negative".into()));
        }
        Ok(())
    }
}

/// Knobs of event placement that are not route parameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleLimits {
    /// Shortest route and shortest event, seconds.
    pub min_segment: f64,
    /// Turn and reverse time together never exceed this share of the route.
    pub max_event_fraction: f64,
}

impl Default for ScheduleLimits {
    fn default() -> Self {
        ScheduleLimits {
            min_segment: 0.1,
            max_event_fraction: 0.5,
        }
    }
}

/// Draw turn and reverse events and place them at random, non-overlapping
/// positions. Gaps between events are go-straight segments.
pub fn build_scenario_schedule<R: Rng>(
    route: &RouteConfig,
    limits: &ScheduleLimits,
    rng: &mut R,
) -> Result<Vec<ScenarioSegment>> {
    route.validate()?;
    let duration = route.duration();
    if duration < limits.min_segment {
        return Err(Error::InvalidRoute(format!(
            "route lasts {duration} s, shorter than the {} s minimal segment",
            limits.min_segment
        )));
    }
    let n_turn = rng.gen_range(0..=route.max_times_turn);
    let n_reverse = if route.area.reverse_allowed {
        rng.gen_range(0..=route.max_times_reverse)
    } else {
        0
    };
    let mut events = Vec::with_capacity((n_turn + n_reverse) as usize);
    for (kind, count, max) in [
        (ScenarioKind::Turn, n_turn, route.max_duration_turn),
        (ScenarioKind::Reverse, n_reverse, route.max_duration_reverse),
    ] {
        for _ in 0..count {
            // (0, max]
            let d = max * (1.0 - rng.gen::<f64>());
            events.push((kind, d.max(limits.min_segment.min(max))));
        }
    }
    events.retain(|(_, d)| *d > 0.0);
    events.shuffle(rng);
    place_events(duration, events, limits, rng)
}

/// Tile `[0, duration]` with the given events, in the given order, separated
/// by go-straight gaps drawn uniformly.
pub fn place_events<R: Rng>(
    duration: f64,
    mut events: Vec<(ScenarioKind, f64)>,
    limits: &ScheduleLimits,
    rng: &mut R,
) -> Result<Vec<ScenarioSegment>> {
    if duration < limits.min_segment {
        return Err(Error::InvalidRoute(format!(
            "route lasts {duration} s, shorter than the {} s minimal segment",
            limits.min_segment
        )));
    }
    let cap = limits.max_event_fraction.clamp(0.0, 1.0) * duration;
    let total: f64 = events.iter().map(|(_, d)| d).sum();
    if total > cap {
        let scale = cap / total;
        for e in &mut events {
            e.1 *= scale;
        }
    }
    let busy: f64 = events.iter().map(|(_, d)| d).sum();
    let free = (duration - busy).max(0.0);
    let mut cuts: Vec<f64> = (0..events.len()).map(|_| rng.gen::<f64>() * free).collect();
    cuts.sort_by(f64::total_cmp);

    let mut segments = Vec::with_capacity(2 * events.len() + 1);
    let mut t = 0.0;
    let mut prev_cut = 0.0;
    for ((kind, d), cut) in events.into_iter().zip(cuts) {
        let gap = cut - prev_cut;
        prev_cut = cut;
        if gap > 0.0 {
            segments.push(ScenarioSegment {
                kind: ScenarioKind::GoStraight,
                start: t,
                duration: gap,
            });
            t += gap;
        }
        segments.push(ScenarioSegment {
            kind,
            start: t,
            duration: d,
        });
        t += d;
    }
    if duration - t > 0.0 {
        segments.push(ScenarioSegment {
            kind: ScenarioKind::GoStraight,
            start: t,
            duration: duration - t,
        });
    } else if let Some(last) = segments.last_mut() {
        last.duration = duration - last.start;
    }
    Ok(segments)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum TaskKind {
    DET,
    TRA,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskRecord {
    pub id: u64,
    pub camera_id: u32,
    pub group: CameraKind,
    #[serde(serialize_with = "fixed_seconds")]
    pub capture_time: f64,
    pub task_kind: TaskKind,
    pub model: ModelKind,
    /// giga-MACs
    pub amount: f64,
    pub layer_num: u32,
    pub safety_time: f64,
    pub depends_on: Option<u64>,
}

fn fixed_seconds<S: Serializer>(t: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    let raw = serde_json::value::RawValue::from_string(format!("{t:.9}")).map_err(serde::ser::Error::custom)?;
    raw.serialize(s)
}

/// Per-scenario, per-camera safety time of one area.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SafetyTimes {
    pub table: BTreeMap<ScenarioKind, BTreeMap<CameraKind, f64>>,
    /// Cells whose range was below the zero-delay stopping distance and
    /// therefore use the fallback value.
    pub fallbacks: Vec<(ScenarioKind, CameraKind)>,
}

/// Inputs to the safety-time table of an area.
#[derive(Clone, Debug, PartialEq)]
pub struct SafetyInputs<'a> {
    pub area: DrivingArea,
    pub cameras: &'a [CameraGroup],
    pub accelerations: RssParams,
    /// m/s, used during turns when below the area velocity.
    pub turn_velocity: f64,
    /// m/s, used during reverse segments.
    pub reverse_velocity: f64,
    pub fallback: f64,
    pub overrides: &'a BTreeMap<CameraKind, f64>,
}

impl SafetyTimes {
    pub fn compute(inputs: &SafetyInputs<'_>) -> Result<Self> {
        let mut out = SafetyTimes::default();
        for scenario in ScenarioKind::ALL {
            if scenario == ScenarioKind::Reverse && !inputs.area.reverse_allowed {
                continue;
            }
            let v = match scenario {
                ScenarioKind::GoStraight => inputs.area.max_velocity,
                ScenarioKind::Turn => inputs.turn_velocity.min(inputs.area.max_velocity),
                ScenarioKind::Reverse => inputs.reverse_velocity,
            };
            let params = RssParams {
                v1: v,
                v2: v,
                ..inputs.accelerations
            };
            let mut row = BTreeMap::new();
            for group in inputs.cameras {
                let st = if let Some(&st) = inputs.overrides.get(&group.kind) {
                    st
                } else {
                    match safety_time(group.max_distance, &params) {
                        Ok(st) if st > 0.0 => st,
                        Ok(_) | Err(Error::RangeInsufficient { .. }) => {
                            out.fallbacks.push((scenario, group.kind));
                            inputs.fallback
                        }
                        Err(e) => return Err(e),
                    }
                };
                row.insert(group.kind, st);
            }
            out.table.insert(scenario, row);
        }
        Ok(out)
    }

    pub fn get(&self, scenario: ScenarioKind, camera: CameraKind) -> Option<f64> {
        self.table.get(&scenario)?.get(&camera).copied()
    }
}

/// Emit frames for every camera over every segment and turn them into a
/// capture-ordered task queue.
pub fn generate_task_queue(
    area: Area,
    cameras: &[CameraGroup],
    matrix: &FrameRateMatrix,
    frame_rate_scale: f64,
    safety: &SafetyTimes,
    schedule: &[ScenarioSegment],
) -> Result<Vec<TaskRecord>> {
    struct Stream {
        camera_id: u32,
        group: CameraKind,
        next_is_yolo: bool,
    }
    let mut streams = Vec::new();
    for group in cameras {
        for _ in 0..group.count {
            streams.push(Stream {
                camera_id: streams.len() as u32,
                group: group.kind,
                next_is_yolo: true,
            });
        }
    }

    let mut tasks: Vec<TaskRecord> = Vec::new();
    for seg in schedule {
        for stream in &mut streams {
            let fps = matrix.frame_rate(area, seg.kind, stream.group)? * frame_rate_scale;
            let st = safety.get(seg.kind, stream.group).ok_or(Error::InvalidScenario {
                area,
                scenario: seg.kind,
                camera: stream.group,
            })?;
            let with_tracking = stream.group.facing() != Facing::Rear || seg.kind == ScenarioKind::Reverse;
            let mut k = 0u64;
            loop {
                let offset = k as f64 / fps;
                if offset >= seg.duration - 1e-9 {
                    break;
                }
                let t = seg.start + offset;
                let model = if stream.next_is_yolo {
                    ModelKind::Yolo
                } else {
                    ModelKind::Ssd
                };
                stream.next_is_yolo = !stream.next_is_yolo;
                tasks.push(TaskRecord {
                    id: 0,
                    camera_id: stream.camera_id,
                    group: stream.group,
                    capture_time: t,
                    task_kind: TaskKind::DET,
                    model,
                    amount: model.amount(),
                    layer_num: model.layer_num(),
                    safety_time: st,
                    depends_on: None,
                });
                if with_tracking {
                    tasks.push(TaskRecord {
                        id: 0,
                        camera_id: stream.camera_id,
                        group: stream.group,
                        capture_time: t,
                        task_kind: TaskKind::TRA,
                        model: ModelKind::Goturn,
                        amount: ModelKind::Goturn.amount(),
                        layer_num: ModelKind::Goturn.layer_num(),
                        safety_time: st,
                        depends_on: None,
                    });
                }
                k += 1;
            }
        }
    }

    tasks.sort_by(|a, b| {
        a.capture_time
            .total_cmp(&b.capture_time)
            .then(a.camera_id.cmp(&b.camera_id))
            .then(a.task_kind.cmp(&b.task_kind))
    });
    for (i, task) in tasks.iter_mut().enumerate() {
        task.id = i as u64;
    }
    // A tracking task sorts directly after the detection of the same frame.
    for i in 1..tasks.len() {
        if tasks[i].task_kind == TaskKind::TRA {
            debug_assert_eq!(tasks[i - 1].camera_id, tasks[i].camera_id);
            debug_assert_eq!(tasks[i - 1].task_kind, TaskKind::DET);
            tasks[i].depends_on = Some(tasks[i - 1].id);
        }
    }
    Ok(tasks)
}

pub fn write_queue<W: Write>(tasks: &[TaskRecord], mut out: W) -> std::io::Result<()> {
    for task in tasks {
        serde_json::to_writer(&mut out, task)?;
        out.write_all(b"\n")?;
    }
    out.flush()
}

pub fn read_queue<R: BufRead>(input: R) -> std::result::Result<Vec<TaskRecord>, String> {
    let mut tasks = Vec::new();
    for (n, line) in input.lines().enumerate() {
        let line = line.map_err(|e| e.to_string())?;
        if line.trim().is_empty() {
            continue;
        }
        let task: TaskRecord = serde_json::from_str(&line).map_err(|e| format!("line {}: {e}", n + 1))?;
        tasks.push(task);
    }
    Ok(tasks)
}
