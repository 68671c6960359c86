use std::collections::VecDeque;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::net::QNetwork;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossMode {
    /// Regress Q(s, a) for the action taken.
    #[default]
    StandardSa,
    /// Regress max_a Q(s, a), whichever action that is.
    PaperLiteralMax,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Exploration {
    /// Uniform random action with probability ε.
    #[default]
    EpsilonGreedy,
    /// Sample from softmax(Q / temperature).
    Boltzmann,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AgentConfig {
    pub hidden: Vec<usize>,
    pub gamma: f64,
    pub learning_rate: f64,
    pub memory_size: usize,
    pub batch_size: usize,
    /// Learning steps between target-network copies.
    pub target_sync_interval: u64,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    /// Share of training progress over which ε decays linearly.
    pub epsilon_decay_fraction: f64,
    pub loss_mode: LossMode,
    pub exploration: Exploration,
    /// Softmax temperature for Boltzmann exploration.
    pub temperature: f64,
    /// Decisions between learning steps.
    pub train_interval: u64,
    /// Transitions stored before learning begins, capped at `memory_size`.
    pub learn_start: usize,
    /// Rescale each update so its global L2 norm is at most this; 0 disables.
    pub max_grad_norm: f64,
    pub seed: u64,
}

impl Default for AgentConfig {
    fn default() -> Self {
        AgentConfig {
            hidden: vec![256, 64],
            gamma: 0.9,
            learning_rate: 0.01,
            memory_size: 10_000,
            batch_size: 32,
            target_sync_interval: 300,
            epsilon_start: 1.0,
            epsilon_end: 0.05,
            epsilon_decay_fraction: 0.2,
            loss_mode: LossMode::StandardSa,
            exploration: Exploration::EpsilonGreedy,
            temperature: 0.1,
            train_interval: 1,
            learn_start: 10_000,
            max_grad_norm: 10.0,
            seed: 0,
        }
    }
}

impl AgentConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(Error::Config(format!("gamma {} outside [0, 1)", self.gamma)));
        }
        if !(self.learning_rate > 0.0) || self.batch_size == 0 || self.memory_size < self.batch_size {
            return Err(Error::Config(
                "learning_rate must be positive and memory_size ≥ batch_size > 0".into(),
            ));
        }
        if !(self.max_grad_norm >= 0.0) {
            return Err(Error::Config(format!(
                "max_grad_norm {} must be ≥ 0",
                self.max_grad_norm
            )));
        }
        if self.exploration == Exploration::Boltzmann && !(self.temperature > 0.0) {
            return Err(Error::Config(format!(
                "temperature {} must be positive",
                self.temperature
            )));
        }
        if self.train_interval == 0 || self.target_sync_interval == 0 {
            return Err(Error::Config(
                "train_interval and target_sync_interval must be ≥ 1".into(),
            ));
        }
        Ok(())
    }

    pub fn learn_start(&self) -> usize {
        self.learn_start.min(self.memory_size)
    }

    /// ε after the given share of training.
    pub fn epsilon(&self, progress: f64) -> f64 {
        let frac = if self.epsilon_decay_fraction > 0.0 {
            (progress / self.epsilon_decay_fraction).clamp(0.0, 1.0)
        } else {
            1.0
        };
        self.epsilon_start + (self.epsilon_end - self.epsilon_start) * frac
    }

    pub fn layer_sizes(&self, inputs: usize, outputs: usize) -> Vec<usize> {
        let mut sizes = vec![inputs];
        sizes.extend(&self.hidden);
        sizes.push(outputs);
        sizes
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Transition {
    pub state: Vec<f64>,
    pub action: usize,
    pub reward: f64,
    pub next_state: Vec<f64>,
    pub terminal: bool,
}

/// Bounded replay memory; the oldest transition is evicted first.
#[derive(Clone, Debug)]
pub struct ReplayMemory {
    capacity: usize,
    items: VecDeque<Transition>,
}

impl ReplayMemory {
    pub fn new(capacity: usize) -> Self {
        ReplayMemory {
            capacity: capacity.max(1),
            items: VecDeque::with_capacity(capacity.max(1)),
        }
    }

    pub fn push(&mut self, t: Transition) {
        if self.items.len() == self.capacity {
            self.items.pop_front();
        }
        self.items.push_back(t);
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn get(&self, i: usize) -> &Transition {
        &self.items[i]
    }

    /// Uniform sample with replacement.
    pub fn sample<'a, R: Rng>(&'a self, n: usize, rng: &mut R) -> Vec<&'a Transition> {
        (0..n)
            .map(|_| &self.items[rng.gen_range(0..self.items.len())])
            .collect()
    }
}

/// Greedy with probability 1 − ε (ties to the lowest index), else uniform.
pub fn select_action<R: Rng>(q: &[f64], epsilon: f64, rng: &mut R) -> usize {
    if epsilon > 0.0 && rng.gen::<f64>() < epsilon {
        return rng.gen_range(0..q.len());
    }
    argmax(q)
}

/// Sample an action with probability proportional to exp(q / temperature).
pub fn boltzmann_action<R: Rng>(q: &[f64], temperature: f64, rng: &mut R) -> usize {
    let top = q[argmax(q)];
    let weights: Vec<f64> = q.iter().map(|v| ((v - top) / temperature).exp()).collect();
    let mut u = rng.gen::<f64>() * weights.iter().sum::<f64>();
    for (i, w) in weights.iter().enumerate() {
        if u < *w {
            return i;
        }
        u -= w;
    }
    argmax(q)
}

pub fn argmax(q: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in q.iter().enumerate() {
        if v > q[best] {
            best = i;
        }
    }
    best
}

/// Evaluation and target networks plus replay memory.
#[derive(Clone, Debug)]
pub struct Agent {
    pub cfg: AgentConfig,
    pub eval: QNetwork,
    pub target: QNetwork,
    pub memory: ReplayMemory,
    pub rng: ChaCha8Rng,
    pub learn_steps: u64,
    pub syncs: u64,
}

impl Agent {
    /// Both networks are drawn independently from the seeded source.
    pub fn new(cfg: AgentConfig, inputs: usize, outputs: usize) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let sizes = cfg.layer_sizes(inputs, outputs);
        let eval = QNetwork::new(&sizes, &mut rng)?;
        let target = QNetwork::new(&sizes, &mut rng)?;
        Ok(Agent {
            memory: ReplayMemory::new(cfg.memory_size),
            cfg,
            eval,
            target,
            rng,
            learn_steps: 0,
            syncs: 0,
        })
    }

    pub fn sync_target(&mut self) {
        self.target.clone_from(&self.eval);
        self.syncs += 1;
    }

    /// One SGD step on `batch`; returns the mean squared error before the
    /// update.
    pub fn train_step(&mut self, batch: &[&Transition]) -> f64 {
        let b = batch.len();
        let n_in = self.eval.input_len();
        let n_out = self.eval.output_len();
        let mut states = Vec::with_capacity(b * n_in);
        let mut next = Vec::with_capacity(b * n_in);
        for t in batch {
            states.extend_from_slice(&t.state);
            next.extend_from_slice(&t.next_state);
        }
        let target_q = self.target.forward_batch(&next, b);
        let cache = self.eval.forward_batch(&states, b);
        let q = cache.output();
        let mut d_out = vec![0.0; b * n_out];
        let mut loss = 0.0;
        for (k, t) in batch.iter().enumerate() {
            let y = if t.terminal {
                t.reward
            } else {
                let row = &target_q.output()[k * n_out..(k + 1) * n_out];
                t.reward + self.cfg.gamma * row.iter().copied().fold(f64::NEG_INFINITY, f64::max)
            };
            let row = &q[k * n_out..(k + 1) * n_out];
            let slot = match self.cfg.loss_mode {
                LossMode::StandardSa => t.action,
                LossMode::PaperLiteralMax => argmax(row),
            };
            let err = row[slot] - y;
            loss += err * err;
            d_out[k * n_out + slot] = 2.0 * err / b as f64;
        }
        let grads = self.eval.backward(&cache, &d_out);
        let mut lr = self.cfg.learning_rate;
        if self.cfg.max_grad_norm > 0.0 {
            let norm = grads
                .iter()
                .flat_map(|l| l.weights.iter().chain(&l.biases))
                .map(|g| g * g)
                .sum::<f64>()
                .sqrt();
            if norm > self.cfg.max_grad_norm {
                lr *= self.cfg.max_grad_norm / norm;
            }
        }
        self.eval.sgd_step(&grads, lr);
        self.learn_steps += 1;
        if self.learn_steps.is_multiple_of(self.cfg.target_sync_interval) {
            self.sync_target();
        }
        loss / b as f64
    }

    /// Sample a batch and learn, if enough transitions are stored.
    pub fn learn(&mut self) -> Option<f64> {
        if self.memory.len() < self.cfg.learn_start().max(self.cfg.batch_size) {
            return None;
        }
        let mut rng = self.rng.clone();
        let batch: Vec<Transition> = self
            .memory
            .sample(self.cfg.batch_size, &mut rng)
            .into_iter()
            .cloned()
            .collect();
        self.rng = rng;
        let refs: Vec<&Transition> = batch.iter().collect();
        Some(self.train_step(&refs))
    }
}
