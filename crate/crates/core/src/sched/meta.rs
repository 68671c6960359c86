//! Windowed metaheuristics. Both search over assignment vectors for the
//! tasks released in one window and score a candidate by replaying it on a
//! scratch copy of the ledger.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{PlatformView, Scheduler};
use crate::envgen::TaskRecord;
use crate::error::Result;

/// Sum of rewards obtained by dispatching `tasks` in order with the given
/// assignment at the view's instant.
pub fn window_fitness(tasks: &[&TaskRecord], assignment: &[usize], view: &PlatformView<'_>) -> f64 {
    let mut ledger = view.ledger.clone();
    let mut total = 0.0;
    for (task, &a) in tasks.iter().zip(assignment) {
        let outcome = ledger.preview(view.platform, task, view.now, view.overhead, a);
        total += ledger.apply(&outcome, &view.normalization);
    }
    total
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaParams {
    pub population: usize,
    pub generations: usize,
    pub mutation_rate: f64,
    pub elitism: usize,
    pub tournament: usize,
}

impl Default for GaParams {
    fn default() -> Self {
        GaParams {
            population: 50,
            generations: 100,
            mutation_rate: 0.05,
            elitism: 2,
            tournament: 3,
        }
    }
}

/// Genetic search. The initial population holds every uniform assignment
/// (all tasks on accelerator k) that fits, topped up with random vectors.
pub fn evolve<R: Rng>(tasks: &[&TaskRecord], view: &PlatformView<'_>, params: &GaParams, rng: &mut R) -> Vec<usize> {
    let n = view.len();
    let len = tasks.len();
    if len == 0 {
        return Vec::new();
    }
    let size = params.population.max(1);
    let mut pop: Vec<Vec<usize>> = (0..n.min(size)).map(|k| vec![k; len]).collect();
    while pop.len() < size {
        pop.push((0..len).map(|_| rng.gen_range(0..n)).collect());
    }
    let mut fit: Vec<f64> = pop.iter().map(|c| window_fitness(tasks, c, view)).collect();

    for _ in 0..params.generations {
        let mut order: Vec<usize> = (0..pop.len()).collect();
        order.sort_by(|&a, &b| fit[b].total_cmp(&fit[a]).then(a.cmp(&b)));
        let mut next: Vec<Vec<usize>> = order
            .iter()
            .take(params.elitism.min(size))
            .map(|&i| pop[i].clone())
            .collect();
        let mut next_fit: Vec<f64> = order.iter().take(next.len()).map(|&i| fit[i]).collect();
        while next.len() < size {
            let p1 = tournament(&fit, params.tournament, rng);
            let p2 = tournament(&fit, params.tournament, rng);
            let cut = if len > 1 { rng.gen_range(1..len) } else { len };
            let mut child: Vec<usize> = pop[p1][..cut].iter().chain(&pop[p2][cut..]).copied().collect();
            for g in &mut child {
                if rng.gen::<f64>() < params.mutation_rate {
                    *g = rng.gen_range(0..n);
                }
            }
            next_fit.push(window_fitness(tasks, &child, view));
            next.push(child);
        }
        pop = next;
        fit = next_fit;
    }
    let best = (0..pop.len())
        .max_by(|&a, &b| fit[a].total_cmp(&fit[b]).then(b.cmp(&a)))
        .unwrap_or(0);
    pop.swap_remove(best)
}

fn tournament<R: Rng>(fit: &[f64], k: usize, rng: &mut R) -> usize {
    let mut best = rng.gen_range(0..fit.len());
    for _ in 1..k.max(1) {
        let c = rng.gen_range(0..fit.len());
        if fit[c] > fit[best] {
            best = c;
        }
    }
    best
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SaParams {
    pub iterations: usize,
    /// Geometric cooling factor applied before each iteration.
    pub alpha: f64,
    /// Random assignments sampled to set the initial temperature.
    pub temperature_samples: usize,
}

impl Default for SaParams {
    fn default() -> Self {
        SaParams {
            iterations: 2000,
            alpha: 0.95,
            temperature_samples: 20,
        }
    }
}

/// Cost of the current solution after each iteration.
pub type SaTrace = Vec<f64>;

/// Simulated annealing on cost = −fitness. Returns the best assignment
/// evaluated.
pub fn anneal<R: Rng>(
    tasks: &[&TaskRecord],
    view: &PlatformView<'_>,
    params: &SaParams,
    rng: &mut R,
    mut trace: Option<&mut SaTrace>,
) -> Vec<usize> {
    let n = view.len();
    let len = tasks.len();
    if len == 0 {
        return Vec::new();
    }
    let cost = |a: &[usize]| -window_fitness(tasks, a, view);
    let random = |rng: &mut R| -> Vec<usize> { (0..len).map(|_| rng.gen_range(0..n)).collect() };

    let samples: Vec<f64> = (0..params.temperature_samples.max(1))
        .map(|_| cost(&random(rng)))
        .collect();
    let mean = samples.iter().sum::<f64>() / samples.len() as f64;
    let var = samples.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / samples.len() as f64;
    let mut temp = var.sqrt();

    let mut current = random(rng);
    let mut current_cost = cost(&current);
    let mut best = current.clone();
    let mut best_cost = current_cost;
    if n < 2 {
        return best;
    }
    for _ in 0..params.iterations {
        temp *= params.alpha;
        let i = rng.gen_range(0..len);
        let old = current[i];
        let mut new = rng.gen_range(0..n - 1);
        if new >= old {
            new += 1;
        }
        current[i] = new;
        let c = cost(&current);
        if c < best_cost {
            best_cost = c;
            best = current.clone();
        }
        let delta = c - current_cost;
        let accept = delta <= 0.0 || (temp > 0.0 && rng.gen::<f64>() < (-delta / temp).exp());
        if accept {
            current_cost = c;
        } else {
            current[i] = old;
        }
        if let Some(t) = trace.as_deref_mut() {
            t.push(current_cost);
        }
    }
    best
}

pub struct GeneticScheduler {
    pub params: GaParams,
    pub window: f64,
    rng: ChaCha8Rng,
}

impl GeneticScheduler {
    pub fn new(params: GaParams, window: f64, seed: u64) -> Self {
        GeneticScheduler {
            params,
            window,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }
}

impl Scheduler for GeneticScheduler {
    fn name(&self) -> &str {
        "ga"
    }

    fn window(&self) -> Option<f64> {
        Some(self.window)
    }

    fn decide(&mut self, task: &TaskRecord, view: &PlatformView<'_>) -> Result<usize> {
        Ok(evolve(&[task], view, &self.params, &mut self.rng)[0])
    }

    fn decide_window(&mut self, tasks: &[&TaskRecord], view: &PlatformView<'_>) -> Result<Vec<usize>> {
        Ok(evolve(tasks, view, &self.params, &mut self.rng))
    }
}

pub struct SimulatedAnnealing {
    pub params: SaParams,
    pub window: f64,
    rng: ChaCha8Rng,
}

impl SimulatedAnnealing {
    pub fn new(params: SaParams, window: f64, seed: u64) -> Self {
        SimulatedAnnealing {
            params,
            window,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }
}

impl Scheduler for SimulatedAnnealing {
    fn name(&self) -> &str {
        "sa"
    }

    fn window(&self) -> Option<f64> {
        Some(self.window)
    }

    fn decide(&mut self, task: &TaskRecord, view: &PlatformView<'_>) -> Result<usize> {
        Ok(anneal(&[task], view, &self.params, &mut self.rng, None)[0])
    }

    fn decide_window(&mut self, tasks: &[&TaskRecord], view: &PlatformView<'_>) -> Result<Vec<usize>> {
        Ok(anneal(tasks, view, &self.params, &mut self.rng, None))
    }
}
