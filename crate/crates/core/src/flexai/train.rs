use serde::{Deserialize, Serialize};

use super::agent::{argmax, boltzmann_action, select_action, Agent, AgentConfig, Exploration, Transition};
use super::net::QNetwork;
use super::state::{encode_state, state_len, StateScales};
use crate::criteria::{NormalizationScales, RBalanceMode};
use crate::envgen::{ScenarioSegment, TaskRecord};
use crate::error::{Error, Result};
use crate::platform::Platform;
use crate::sched::{PlatformView, Scheduler};
use crate::sim::{run_episode, SimConfig, TaskResult};

/// Greedy inference with a frozen network.
#[derive(Clone, Debug)]
pub struct FlexAi {
    pub net: QNetwork,
    pub scales: StateScales,
    pub overhead: f64,
    buf: Vec<f64>,
}

impl FlexAi {
    pub fn new(net: QNetwork, scales: StateScales, accelerators: usize) -> Result<Self> {
        net.validate()?;
        if net.output_len() != accelerators || net.input_len() != state_len(accelerators) {
            return Err(Error::ShapeMismatch(format!(
                "network maps {} inputs to {} actions; the platform needs {} to {}",
                net.input_len(),
                net.output_len(),
                state_len(accelerators),
                accelerators
            )));
        }
        Ok(FlexAi {
            net,
            scales,
            overhead: 0.0,
            buf: Vec::new(),
        })
    }
}

impl Scheduler for FlexAi {
    fn name(&self) -> &str {
        "flexai"
    }

    fn overhead(&self) -> f64 {
        self.overhead
    }

    fn decide(&mut self, task: &TaskRecord, view: &PlatformView<'_>) -> Result<usize> {
        encode_state(task, view, &self.scales, &mut self.buf);
        Ok(argmax(&self.net.forward(&self.buf)?))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossPoint {
    pub episode: usize,
    pub iteration: usize,
    pub loss: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeStats {
    pub episode: usize,
    pub tasks: usize,
    pub total_reward: f64,
    pub stm_rate: f64,
    pub r_balance: f64,
    pub epsilon: f64,
}

/// Acting-and-learning wrapper used while training.
struct Trainer<'a> {
    agent: &'a mut Agent,
    scales: StateScales,
    episode: usize,
    episodes: usize,
    queue_len: usize,
    decisions: u64,
    seen: usize,
    prev: Option<(Vec<f64>, usize)>,
    reward: f64,
    epsilon: f64,
    iteration: usize,
    losses: &'a mut Vec<LossPoint>,
}

impl Scheduler for Trainer<'_> {
    fn name(&self) -> &str {
        "flexai"
    }

    fn decide(&mut self, task: &TaskRecord, view: &PlatformView<'_>) -> Result<usize> {
        let mut state = Vec::with_capacity(self.agent.eval.input_len());
        encode_state(task, view, &self.scales, &mut state);
        if let Some((s, a)) = self.prev.take() {
            self.agent.memory.push(Transition {
                state: s,
                action: a,
                reward: self.reward,
                next_state: state.clone(),
                terminal: false,
            });
        }
        let progress = (self.episode as f64 + self.seen as f64 / self.queue_len.max(1) as f64) / self.episodes as f64;
        self.epsilon = self.agent.cfg.epsilon(progress);
        let q = self.agent.eval.forward(&state)?;
        let action = match self.agent.cfg.exploration {
            Exploration::EpsilonGreedy => select_action(&q, self.epsilon, &mut self.agent.rng),
            Exploration::Boltzmann => boltzmann_action(&q, self.agent.cfg.temperature, &mut self.agent.rng),
        };
        self.prev = Some((state, action));
        self.seen += 1;
        self.decisions += 1;
        if self.decisions.is_multiple_of(self.agent.cfg.train_interval) {
            if let Some(loss) = self.agent.learn() {
                self.losses.push(LossPoint {
                    episode: self.episode,
                    iteration: self.iteration,
                    loss,
                });
                self.iteration += 1;
            }
        }
        Ok(action)
    }

    fn observe(&mut self, result: &TaskResult) {
        self.reward = result.reward;
    }

    fn finish(&mut self) {
        if let Some((s, a)) = self.prev.take() {
            let next = vec![0.0; s.len()];
            self.agent.memory.push(Transition {
                state: s,
                action: a,
                reward: self.reward,
                next_state: next,
                terminal: true,
            });
        }
    }
}

/// One training queue with its schedule and reward scales.
#[derive(Clone, Debug)]
pub struct EpisodeSpec {
    pub tasks: Vec<TaskRecord>,
    pub schedule: Vec<ScenarioSegment>,
    pub normalization: NormalizationScales,
}

pub trait EpisodeSource {
    fn episode(&mut self, index: usize, platform: &mut Platform) -> Result<EpisodeSpec>;
}

impl<F> EpisodeSource for F
where
    F: FnMut(usize, &mut Platform) -> Result<EpisodeSpec>,
{
    fn episode(&mut self, index: usize, platform: &mut Platform) -> Result<EpisodeSpec> {
        self(index, platform)
    }
}

pub struct TrainOutcome {
    pub agent: Agent,
    pub losses: Vec<LossPoint>,
    pub stats: Vec<EpisodeStats>,
}

/// Run `episodes` queues through the simulator while exploring,
/// storing transitions and learning every `train_interval` decisions.
pub fn train_agent(
    source: &mut dyn EpisodeSource,
    platform: &mut Platform,
    cfg: &AgentConfig,
    scales: StateScales,
    mode: RBalanceMode,
    episodes: usize,
    mut progress: impl FnMut(&EpisodeStats),
) -> Result<TrainOutcome> {
    let n = platform.len();
    let mut agent = Agent::new(cfg.clone(), state_len(n), n)?;
    let mut losses = Vec::new();
    let mut stats = Vec::with_capacity(episodes);
    for ep in 0..episodes {
        let spec = source.episode(ep, platform)?;
        let sim = SimConfig {
            r_balance_mode: mode,
            normalization: spec.normalization,
        };
        let mut trainer = Trainer {
            agent: &mut agent,
            scales,
            episode: ep,
            episodes,
            queue_len: spec.tasks.len(),
            decisions: 0,
            seen: 0,
            prev: None,
            reward: 0.0,
            epsilon: cfg.epsilon_start,
            iteration: 0,
            losses: &mut losses,
        };
        let report = run_episode(&spec.tasks, &spec.schedule, platform, &mut trainer, &sim)?;
        let s = EpisodeStats {
            episode: ep,
            tasks: report.summary.tasks,
            total_reward: report.summary.total_reward,
            stm_rate: report.summary.stm_rate,
            r_balance: report.summary.r_balance,
            epsilon: trainer.epsilon,
        };
        progress(&s);
        stats.push(s);
    }
    Ok(TrainOutcome { agent, losses, stats })
}
