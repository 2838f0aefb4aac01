use rand::RngCore;
use serde::{Deserialize, Serialize};

use super::{MachineConfig, Opcode, Program, Word};

/// Registers and program counter carried between interaction steps.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct MachineState {
    pub pc: u32,
    pub a: Word,
    pub b: Word,
    /// Set once `HALT` executes; the process never runs again.
    pub stopped: bool,
}

impl MachineState {
    /// Dense key used by the exact expectation engine.
    pub fn key(&self) -> u64 {
        if self.stopped {
            u64::MAX
        } else {
            ((self.pc as u64) << 32) | ((self.a as u64) << 16) | self.b as u64
        }
    }

    pub fn from_key(key: u64) -> MachineState {
        if key == u64::MAX {
            MachineState {
                stopped: true,
                ..MachineState::default()
            }
        } else {
            MachineState {
                pc: (key >> 32) as u32,
                a: (key >> 16) as Word,
                b: key as Word,
                stopped: false,
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Trap {
    /// The step used its whole instruction budget without emitting.
    BudgetExhausted,
    /// `HALT` ran, now or in an earlier step.
    Stopped,
    /// The program has no body to execute.
    EmptyBody,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExecutionResult {
    /// True iff the step ended by emitting an action.
    pub halted: bool,
    pub action: Option<Word>,
    pub steps_used: u32,
    pub trap: Option<Trap>,
}

/// Outcome of executing a single instruction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Instruction {
    Continue(MachineState),
    /// `WRITE` ran; the state has already advanced past it.
    Emit(MachineState, Word),
    /// `RAND` ran; the caller supplies `A` from the tape. `pc` is advanced.
    Random(MachineState),
    /// `HALT` ran.
    Stop,
}

/// Source of agent randomness read by `RAND`.
pub trait RandomTape {
    fn next_word(&mut self, cfg: &MachineConfig) -> Word;
}

/// A fixed tape; reads past its end yield 0.
#[derive(Debug, Clone, Default)]
pub struct SliceTape<'a> {
    words: &'a [Word],
    pos: usize,
}

impl<'a> SliceTape<'a> {
    pub fn new(words: &'a [Word]) -> Self {
        SliceTape { words, pos: 0 }
    }

    pub fn consumed(&self) -> usize {
        self.pos
    }
}

impl RandomTape for SliceTape<'_> {
    fn next_word(&mut self, _cfg: &MachineConfig) -> Word {
        let w = self.words.get(self.pos).copied().unwrap_or(0);
        self.pos += 1;
        w
    }
}

impl<R: RngCore> RandomTape for R {
    fn next_word(&mut self, cfg: &MachineConfig) -> Word {
        (self.next_u32() & cfg.mask() as u32) as Word
    }
}

/// Executes the instruction at `state.pc`. `body` must be non-empty and
/// `state` must not be stopped.
#[inline]
pub fn step_instruction(
    body: &[Word],
    state: &MachineState,
    observation: Word,
    cfg: &MachineConfig,
) -> Instruction {
    debug_assert!(!body.is_empty() && !state.stopped);
    let len = body.len() as i64;
    let mask = cfg.mask();
    let pc = state.pc as usize;
    let op = cfg.opcode(body[pc]);
    let mut next = *state;
    let advance = |by: i64| ((pc as i64 + by).rem_euclid(len)) as u32;
    next.pc = advance(1);
    match op {
        Opcode::Nop | Opcode::Reserved1 | Opcode::Reserved2 => {}
        Opcode::Read => next.a = observation & mask,
        Opcode::Write => return Instruction::Emit(next, state.a),
        Opcode::Inc => next.a = state.a.wrapping_add(1) & mask,
        Opcode::Dec => next.a = state.a.wrapping_sub(1) & mask,
        Opcode::Swap => {
            next.a = state.b;
            next.b = state.a;
        }
        Opcode::Add => next.a = state.a.wrapping_add(state.b) & mask,
        Opcode::Sub => next.a = state.a.wrapping_sub(state.b) & mask,
        Opcode::Load | Opcode::Jmp | Opcode::Jz => {
            // A missing trailing immediate reads as 0 and occupies no word.
            let (imm, width) = match body.get(pc + 1) {
                Some(&w) => (w, 2),
                None => (0, 1),
            };
            next.pc = advance(width);
            match op {
                Opcode::Load => next.a = imm,
                Opcode::Jmp => next.pc = advance(width + cfg.signed_offset(imm)),
                _ => {
                    if state.a == 0 {
                        next.pc = advance(width + cfg.signed_offset(imm));
                    }
                }
            }
        }
        Opcode::Rand => return Instruction::Random(next),
        Opcode::Halt => return Instruction::Stop,
    }
    Instruction::Continue(next)
}

/// Runs one interaction step: executes until `WRITE`, `HALT` or the step
/// budget is spent. Non-emitting outcomes are reported as non-halting.
pub fn run_step(
    program: &Program,
    observation: Word,
    state: &MachineState,
    cfg: &MachineConfig,
    tape: &mut dyn RandomTape,
) -> (ExecutionResult, MachineState) {
    run_body_step(program.body(), observation, state, cfg, tape)
}

pub(crate) fn run_body_step(
    body: &[Word],
    observation: Word,
    state: &MachineState,
    cfg: &MachineConfig,
    tape: &mut dyn RandomTape,
) -> (ExecutionResult, MachineState) {
    let silent = |steps_used, trap| ExecutionResult {
        halted: false,
        action: None,
        steps_used,
        trap: Some(trap),
    };
    if state.stopped {
        return (silent(0, Trap::Stopped), *state);
    }
    if body.is_empty() {
        return (silent(0, Trap::EmptyBody), *state);
    }
    let mut cur = *state;
    let mut steps = 0u32;
    while steps < cfg.step_budget {
        steps += 1;
        match step_instruction(body, &cur, observation, cfg) {
            Instruction::Continue(s) => cur = s,
            Instruction::Emit(s, action) => {
                return (
                    ExecutionResult {
                        halted: true,
                        action: Some(action),
                        steps_used: steps,
                        trap: None,
                    },
                    s,
                );
            }
            Instruction::Random(mut s) => {
                s.a = tape.next_word(cfg) & cfg.mask();
                cur = s;
            }
            Instruction::Stop => {
                let stopped = MachineState {
                    stopped: true,
                    ..cur
                };
                return (silent(steps, Trap::Stopped), stopped);
            }
        }
    }
    (silent(steps, Trap::BudgetExhausted), cur)
}
