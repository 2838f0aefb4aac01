//! Expected response and expected step cost of a policy on a task.
//!
//! Policies without a `WRITE` word never act and are scored in closed form.
//! Policies without a `RAND` word are run once. Otherwise the distribution
//! over machine states is propagated exactly, one instruction at a time,
//! merging identical states; register arithmetic modulo `2^c` keeps that
//! state space finite. Only when the propagation exceeds its work cap does
//! the engine fall back to Monte Carlo with a Hoeffding interval.
//!
//! Non-emitting interaction steps score 0 (except on heaven) and are charged
//! the full step budget.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::Task;
use crate::refmachine::{
    run_body_step, step_instruction, Instruction, MachineState, Opcode, Program, RandomTape, Word,
};

pub const DEFAULT_MC_SAMPLES: u32 = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResponseEstimate {
    pub mean: f64,
    pub exact: bool,
    pub ci_low: f64,
    pub ci_high: f64,
    /// Monte Carlo episodes; 0 for exact estimates.
    pub samples: u32,
}

impl ResponseEstimate {
    pub fn exact(mean: f64) -> Self {
        ResponseEstimate {
            mean,
            exact: true,
            ci_low: mean,
            ci_high: mean,
            samples: 0,
        }
    }

    /// Interval from a sample mean; clamped into `[0, 1]`.
    pub fn sampled(mean: f64, samples: u32, confidence: f64) -> Self {
        let half = hoeffding_half_width(samples, confidence);
        ResponseEstimate {
            mean,
            exact: false,
            ci_low: (mean - half).max(0.0),
            ci_high: (mean + half).min(1.0),
            samples,
        }
    }
}

/// Two-sided Hoeffding half-width for means of `[0, 1]` variables.
pub fn hoeffding_half_width(samples: u32, confidence: f64) -> f64 {
    let delta = 1.0 - confidence;
    ((2.0 / delta).ln() / (2.0 * samples as f64)).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalOptions {
    pub mc_samples: u32,
    pub confidence: f64,
    /// Maximum state visits for exact propagation before sampling.
    pub work_cap: u64,
    /// Mixed into every Monte Carlo seed.
    pub seed: u64,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            mc_samples: DEFAULT_MC_SAMPLES,
            confidence: 0.99,
            work_cap: 4_000_000,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalPath {
    Silent,
    Deterministic,
    Propagated,
    MonteCarlo,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub response: ResponseEstimate,
    /// Expected instructions over the whole episode.
    pub expected_steps: f64,
    /// Probability that the final step is rewarded.
    pub final_hit: f64,
    pub path: EvalPath,
}

pub fn expected_response(pi: &Program, task: &Task, opts: &EvalOptions) -> ResponseEstimate {
    evaluate(pi, task, opts).response
}

pub fn evaluate(pi: &Program, task: &Task, opts: &EvalOptions) -> Evaluation {
    let body = pi.body();
    let tau = task.tau() as usize;
    if !body.contains(&Opcode::Write.word()) {
        return silent(task);
    }
    if !body.contains(&Opcode::Rand.word()) {
        let mut tape = NoTape;
        let run = run_episode(body, task, &mut tape);
        return Evaluation {
            response: ResponseEstimate::exact(run.reward / tau as f64),
            expected_steps: run.steps as f64,
            final_hit: run.final_reward,
            path: EvalPath::Deterministic,
        };
    }
    if let Some(ev) = propagate(body, task, opts.work_cap) {
        return ev;
    }
    monte_carlo(pi, task, opts)
}

fn silent(task: &Task) -> Evaluation {
    let tau = task.tau() as usize;
    let reward: f64 = (0..tau).map(|t| task.reward(t, None)).sum();
    Evaluation {
        response: ResponseEstimate::exact(reward / tau as f64),
        expected_steps: tau as f64 * task.machine().step_budget as f64,
        final_hit: task.reward(tau - 1, None),
        path: EvalPath::Silent,
    }
}

struct NoTape;

impl RandomTape for NoTape {
    fn next_word(&mut self, _cfg: &crate::refmachine::MachineConfig) -> Word {
        0
    }
}

struct EpisodeRun {
    reward: f64,
    steps: u64,
    final_reward: f64,
}

fn run_episode(body: &[Word], task: &Task, tape: &mut dyn RandomTape) -> EpisodeRun {
    let cfg = task.machine();
    let tau = task.tau() as usize;
    let mut state = MachineState::default();
    let mut reward = 0.0;
    let mut steps = 0u64;
    let mut final_reward = 0.0;
    for t in 0..tau {
        let (res, next) = run_body_step(body, task.observation(t), &state, cfg, tape);
        let r = task.reward(t, res.action);
        reward += r;
        steps += if res.halted {
            res.steps_used as u64
        } else {
            cfg.step_budget as u64
        };
        if t + 1 == tau {
            final_reward = r;
        }
        state = next;
    }
    EpisodeRun {
        reward,
        steps,
        final_reward,
    }
}

const STOPPED: u64 = u64::MAX;

fn propagate(body: &[Word], task: &Task, work_cap: u64) -> Option<Evaluation> {
    let cfg = task.machine();
    let tau = task.tau() as usize;
    let budget = cfg.step_budget;
    let branch = cfg.alphabet() as u64;
    let branch_p = 1.0 / branch as f64;
    let mut work = 0u64;

    let mut states: BTreeMap<u64, f64> = BTreeMap::new();
    states.insert(MachineState::default().key(), 1.0);
    let mut reward = 0.0;
    let mut steps = 0.0;
    let mut final_hit = 0.0;

    for t in 0..tau {
        let obs = task.observation(t);
        let silent_reward = task.reward(t, None);
        let mut next: BTreeMap<u64, f64> = BTreeMap::new();
        let mut step_reward = 0.0;
        let mut layer: Vec<(u64, f64)> = Vec::new();
        for (&key, &p) in &states {
            if key == STOPPED {
                step_reward += p * silent_reward;
                steps += p * budget as f64;
                *next.entry(STOPPED).or_insert(0.0) += p;
            } else {
                layer.push((key, p));
            }
        }
        let mut executed = 0u32;
        while !layer.is_empty() && executed < budget {
            executed += 1;
            let mut new_layer: BTreeMap<u64, f64> = BTreeMap::new();
            for &(key, p) in &layer {
                work += 1;
                if work > work_cap {
                    return None;
                }
                let s = MachineState::from_key(key);
                match step_instruction(body, &s, obs, cfg) {
                    Instruction::Continue(n) => *new_layer.entry(n.key()).or_insert(0.0) += p,
                    Instruction::Emit(n, action) => {
                        step_reward += p * task.reward(t, Some(action));
                        steps += p * executed as f64;
                        *next.entry(n.key()).or_insert(0.0) += p;
                    }
                    Instruction::Random(n) => {
                        work += branch;
                        for v in 0..branch {
                            let m = MachineState { a: v as Word, ..n };
                            *new_layer.entry(m.key()).or_insert(0.0) += p * branch_p;
                        }
                    }
                    Instruction::Stop => {
                        step_reward += p * silent_reward;
                        steps += p * budget as f64;
                        *next.entry(STOPPED).or_insert(0.0) += p;
                    }
                }
            }
            layer = new_layer.into_iter().collect();
        }
        for (key, p) in layer {
            step_reward += p * silent_reward;
            steps += p * budget as f64;
            *next.entry(key).or_insert(0.0) += p;
        }
        reward += step_reward;
        if t + 1 == tau {
            final_hit = step_reward;
        }
        states = next;
    }
    let mean = (reward / tau as f64).clamp(0.0, 1.0);
    Some(Evaluation {
        response: ResponseEstimate::exact(mean),
        expected_steps: steps,
        final_hit,
        path: EvalPath::Propagated,
    })
}

/// Seed for the agent tape, derived from the policy, task and base seed so
/// evaluation order never matters.
pub(crate) fn derive_seed(pi: &Program, task: &Task, base: u64) -> u64 {
    let mut h = Sha256::new();
    h.update(pi.to_hex().as_bytes());
    h.update(b"|");
    h.update(task.id().as_bytes());
    h.update(base.to_le_bytes());
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().expect("digest has 32 bytes"))
}

pub(crate) fn monte_carlo(pi: &Program, task: &Task, opts: &EvalOptions) -> Evaluation {
    let tau = task.tau() as f64;
    let n = opts.mc_samples.max(1);
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(pi, task, opts.seed));
    let mut reward = 0.0;
    let mut steps = 0.0;
    let mut final_hit = 0.0;
    for _ in 0..n {
        let run = run_episode(pi.body(), task, &mut rng);
        reward += run.reward / tau;
        steps += run.steps as f64;
        final_hit += run.final_reward;
    }
    let n_f = n as f64;
    Evaluation {
        response: ResponseEstimate::sampled(reward / n_f, n, opts.confidence),
        expected_steps: steps / n_f,
        final_hit: final_hit / n_f,
        path: EvalPath::MonteCarlo,
    }
}
