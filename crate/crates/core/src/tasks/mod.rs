//! Finite-horizon interactive tasks.
//!
//! A *track* task is generated by a program run on the reference machine:
//! the generator's first `tau + 1` emitted symbols form the stream
//! `s_0 .. s_tau`. At step `t` (0-based) the agent observes `s_t` and is
//! rewarded 1 when its action equals `s_{t+1}`, so step 0 carries a single
//! symbol of context and no history. The episode response is the plain mean
//! of the per-step rewards. *Heaven* and *hell* ignore the agent and reward
//! every step with 1 and 0 respectively; both observe a constant 0.

mod complexity;
mod oracle;
mod response;

pub use complexity::{estimate_task_complexity, ComplexityEstimate};
pub use oracle::{max_achievable_response, max_response_by_action_search, ACTION_SEARCH_LIMIT};
pub use response::{
    evaluate, expected_response, hoeffding_half_width, EvalOptions, EvalPath, Evaluation,
    ResponseEstimate, DEFAULT_MC_SAMPLES,
};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::refmachine::{run_body_step, MachineConfig, MachineState, Program, ProgramError, Word};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TaskError {
    #[error("generator emitted {emitted} of {needed} symbols before stalling")]
    GeneratorStalls { emitted: usize, needed: usize },
    #[error("horizon must be at least 1")]
    ZeroHorizon,
    #[error("track task has no generator")]
    MissingGenerator,
    #[error("action search over {0} sequences exceeds the enumeration limit")]
    SearchSpaceTooLarge(u128),
    #[error("task id {stored} does not match its content digest {computed}")]
    IdMismatch { stored: String, computed: String },
    #[error(transparent)]
    Program(#[from] ProgramError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Track,
    Heaven,
    Hell,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Degenerate {
    Heaven,
    Hell,
}

/// Serialized task description: `{family, generator_hex, tau, seed, id}`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TaskSpec {
    pub family: Family,
    pub generator_hex: Option<String>,
    pub tau: u32,
    pub seed: u64,
    pub id: String,
}

impl TaskSpec {
    fn new(family: Family, generator: Option<&Program>, tau: u32, seed: u64) -> TaskSpec {
        let generator_hex = generator.map(Program::to_hex);
        let id = task_digest(family, generator_hex.as_deref(), tau, seed);
        TaskSpec {
            family,
            generator_hex,
            tau,
            seed,
            id,
        }
    }
}

fn task_digest(family: Family, generator_hex: Option<&str>, tau: u32, seed: u64) -> String {
    let mut h = Sha256::new();
    h.update(format!(
        "{family:?}|{}|{tau}|{seed}",
        generator_hex.unwrap_or("-")
    ));
    hex::encode(&h.finalize()[..8])
}

/// A task ready for evaluation: its `TaskSpec` plus the materialized stream.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Task {
    spec: TaskSpec,
    generator: Option<Program>,
    stream: Vec<Word>,
    machine: MachineConfig,
}

/// Runs a generator as a continuous process and collects `count` symbols.
/// Each symbol must appear within one step budget; `RAND` reads a tape
/// seeded by `env_seed`.
pub fn generate_stream(
    generator: &Program,
    count: usize,
    env_seed: u64,
    cfg: &MachineConfig,
) -> Result<Vec<Word>, TaskError> {
    let mut tape = ChaCha8Rng::seed_from_u64(env_seed);
    let mut state = MachineState::default();
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let (res, next) = run_body_step(generator.body(), 0, &state, cfg, &mut tape);
        match res.action {
            Some(symbol) => out.push(symbol),
            None => {
                return Err(TaskError::GeneratorStalls {
                    emitted: out.len(),
                    needed: count,
                })
            }
        }
        state = next;
    }
    Ok(out)
}

/// Builds a stream-prediction task over the generator's first `tau + 1`
/// symbols.
pub fn make_track_task(
    generator: &Program,
    tau: u32,
    env_seed: u64,
    cfg: &MachineConfig,
) -> Result<Task, TaskError> {
    if tau == 0 {
        return Err(TaskError::ZeroHorizon);
    }
    let stream = generate_stream(generator, tau as usize + 1, env_seed, cfg)?;
    Ok(Task {
        spec: TaskSpec::new(Family::Track, Some(generator), tau, env_seed),
        generator: Some(generator.clone()),
        stream,
        machine: *cfg,
    })
}

pub fn make_degenerate(kind: Degenerate, tau: u32, cfg: &MachineConfig) -> Result<Task, TaskError> {
    if tau == 0 {
        return Err(TaskError::ZeroHorizon);
    }
    let family = match kind {
        Degenerate::Heaven => Family::Heaven,
        Degenerate::Hell => Family::Hell,
    };
    Ok(Task {
        spec: TaskSpec::new(family, None, tau, 0),
        generator: None,
        stream: Vec::new(),
        machine: *cfg,
    })
}

impl Task {
    /// Rebuilds a task from its serialized spec, checking the id.
    pub fn from_spec(spec: &TaskSpec, cfg: &MachineConfig) -> Result<Task, TaskError> {
        let task = match spec.family {
            Family::Track => {
                let hex = spec
                    .generator_hex
                    .as_deref()
                    .ok_or(TaskError::MissingGenerator)?;
                let generator = Program::from_hex(hex, cfg)?;
                make_track_task(&generator, spec.tau, spec.seed, cfg)?
            }
            Family::Heaven => make_degenerate(Degenerate::Heaven, spec.tau, cfg)?,
            Family::Hell => make_degenerate(Degenerate::Hell, spec.tau, cfg)?,
        };
        if task.spec.id != spec.id {
            return Err(TaskError::IdMismatch {
                stored: spec.id.clone(),
                computed: task.spec.id,
            });
        }
        Ok(task)
    }

    pub fn spec(&self) -> &TaskSpec {
        &self.spec
    }

    pub fn id(&self) -> &str {
        &self.spec.id
    }

    pub fn family(&self) -> Family {
        self.spec.family
    }

    pub fn tau(&self) -> u32 {
        self.spec.tau
    }

    pub fn generator(&self) -> Option<&Program> {
        self.generator.as_ref()
    }

    pub fn machine(&self) -> &MachineConfig {
        &self.machine
    }

    /// The `tau + 1` generated symbols; empty for degenerate tasks.
    pub fn stream(&self) -> &[Word] {
        &self.stream
    }

    /// What the agent sees at 0-based step `t`.
    #[inline]
    pub fn observation(&self, t: usize) -> Word {
        self.stream.get(t).copied().unwrap_or(0)
    }

    /// Reward for acting `action` at 0-based step `t`.
    #[inline]
    pub fn reward(&self, t: usize, action: Option<Word>) -> f64 {
        match self.spec.family {
            Family::Heaven => 1.0,
            Family::Hell => 0.0,
            Family::Track => {
                if action.is_some() && action == self.stream.get(t + 1).copied() {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

/// Renders symbols as letters (`a` = 0) when the alphabet allows it.
pub fn render_stream(symbols: &[Word]) -> String {
    symbols
        .iter()
        .map(|&s| {
            if s < 26 {
                ((b'a' + s as u8) as char).to_string()
            } else {
                format!("<{s}>")
            }
        })
        .collect::<Vec<_>>()
        .join(",")
}
