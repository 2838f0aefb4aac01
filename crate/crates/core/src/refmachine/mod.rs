//! Prefix-coded reference machine.
//!
//! Programs are strings of `c`-bit words terminated by a single reserved END
//! word (`2^c - 1`). Every word string with exactly one END, in last
//! position, is a valid program, so there are `(2^c - 1)^(h/c - 1)` programs
//! of length `h` bits. The same machine runs policies (one interaction step
//! at a time) and task generators (a continuous symbol stream).
//!
//! # Opcode table
//!
//! | word | mnemonic | semantics                                            |
//! |------|----------|------------------------------------------------------|
//! | 0    | `NOP`    | no effect                                            |
//! | 1    | `READ`   | `A <- observation`                                   |
//! | 2    | `WRITE`  | emit `A` as the action; ends the interaction step    |
//! | 3    | `INC`    | `A <- A + 1 (mod 2^c)`                               |
//! | 4    | `DEC`    | `A <- A - 1 (mod 2^c)`                               |
//! | 5    | `SWAP`   | exchange `A` and `B`                                 |
//! | 6    | `ADD`    | `A <- A + B (mod 2^c)`                               |
//! | 7    | `SUB`    | `A <- A - B (mod 2^c)`                               |
//! | 8    | `LOAD k` | `A <- k`, `k` is the next word                       |
//! | 9    | `JMP o`  | jump by signed offset `o` (next word)                |
//! | 10   | `JZ o`   | jump by `o` when `A = 0`                             |
//! | 11   | `RAND`   | `A <-` next word of the agent's random tape          |
//! | 12   | `HALT`   | stop the process; no further actions are emitted     |
//! | 13   | `RSV1`   | reserved, executes as `NOP`                          |
//! | 14   | `RSV2`   | reserved, executes as `NOP`                          |
//! | 2^c-1| `END`    | program delimiter, never executed                    |
//!
//! For `c > 4` the words `15 ..= 2^c - 2` execute as `NOP`; for `c < 4` only
//! the opcodes whose value fits below END exist.
//!
//! Control flow: after the last body word the program counter wraps to 0, so
//! a body is an implicit loop. Offsets are `c`-bit two's complement and are
//! relative to the address following the immediate; targets wrap modulo the
//! body length (`JMP -2` is a self-loop). An immediate that would fall on
//! END reads as 0. Every executed instruction costs one step.

mod coding;
mod enumerate;
mod program;
mod vm;

pub use coding::{
    approx_base, approx_normalizer, coding_pmf, coding_pmf_approx, coding_table, count_programs,
    count_programs_f64, CodingRow,
};
pub use enumerate::{enumerate_programs, program_at, programs_up_to, ProgramIter};
pub use program::{validate_program, Program, ProgramError};
pub(crate) use vm::run_body_step;
pub use vm::{
    run_step, step_instruction, ExecutionResult, Instruction, MachineState, RandomTape, SliceTape,
    Trap,
};

use serde::{Deserialize, Serialize};

/// A machine word. `c <= 16` always fits.
pub type Word = u16;

/// Default per-interaction-step instruction budget.
pub const DEFAULT_STEP_BUDGET: u32 = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Opcode {
    Nop,
    Read,
    Write,
    Inc,
    Dec,
    Swap,
    Add,
    Sub,
    Load,
    Jmp,
    Jz,
    Rand,
    Halt,
    Reserved1,
    Reserved2,
}

impl Opcode {
    pub const ALL: [Opcode; 15] = [
        Opcode::Nop,
        Opcode::Read,
        Opcode::Write,
        Opcode::Inc,
        Opcode::Dec,
        Opcode::Swap,
        Opcode::Add,
        Opcode::Sub,
        Opcode::Load,
        Opcode::Jmp,
        Opcode::Jz,
        Opcode::Rand,
        Opcode::Halt,
        Opcode::Reserved1,
        Opcode::Reserved2,
    ];

    pub fn word(self) -> Word {
        self as Word
    }

    pub fn mnemonic(self) -> &'static str {
        match self {
            Opcode::Nop => "NOP",
            Opcode::Read => "READ",
            Opcode::Write => "WRITE",
            Opcode::Inc => "INC",
            Opcode::Dec => "DEC",
            Opcode::Swap => "SWAP",
            Opcode::Add => "ADD",
            Opcode::Sub => "SUB",
            Opcode::Load => "LOAD",
            Opcode::Jmp => "JMP",
            Opcode::Jz => "JZ",
            Opcode::Rand => "RAND",
            Opcode::Halt => "HALT",
            Opcode::Reserved1 => "RSV1",
            Opcode::Reserved2 => "RSV2",
        }
    }

    /// Whether the opcode consumes the following word as an immediate.
    pub fn takes_immediate(self) -> bool {
        matches!(self, Opcode::Load | Opcode::Jmp | Opcode::Jz)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MachineConfig {
    /// Bits per word (`c`). Registers have the same width.
    pub word_bits: u8,
    /// Maximum instructions per interaction step.
    pub step_budget: u32,
}

impl Default for MachineConfig {
    fn default() -> Self {
        MachineConfig {
            word_bits: 4,
            step_budget: DEFAULT_STEP_BUDGET,
        }
    }
}

impl MachineConfig {
    pub fn new(word_bits: u8, step_budget: u32) -> Result<Self, ProgramError> {
        if !(1..=16).contains(&word_bits) {
            return Err(ProgramError::UnsupportedWordSize(word_bits));
        }
        if step_budget == 0 {
            return Err(ProgramError::ZeroBudget);
        }
        Ok(MachineConfig {
            word_bits,
            step_budget,
        })
    }

    pub fn with_word_bits(word_bits: u8) -> Result<Self, ProgramError> {
        Self::new(word_bits, DEFAULT_STEP_BUDGET)
    }

    /// Number of distinct word values, `2^c`.
    pub fn alphabet(&self) -> u32 {
        1u32 << self.word_bits
    }

    /// Number of usable (non-END) word values, `2^c - 1`.
    pub fn usable_words(&self) -> u32 {
        self.alphabet() - 1
    }

    pub fn end_word(&self) -> Word {
        (self.alphabet() - 1) as Word
    }

    pub fn mask(&self) -> Word {
        self.end_word()
    }

    /// Register width in bits; equal to the word size.
    pub fn register_width(&self) -> u8 {
        self.word_bits
    }

    /// Decodes a non-END word. Values past the table execute as `NOP`.
    pub fn opcode(&self, word: Word) -> Opcode {
        Opcode::ALL
            .get(word as usize)
            .copied()
            .unwrap_or(Opcode::Nop)
    }

    /// Interprets an immediate as a `c`-bit two's complement offset.
    pub fn signed_offset(&self, word: Word) -> i64 {
        let w = word as i64;
        let half = 1i64 << (self.word_bits - 1);
        if w >= half {
            w - self.alphabet() as i64
        } else {
            w
        }
    }

    /// Hex digits per encoded word.
    pub fn hex_width(&self) -> usize {
        (self.word_bits as usize).div_ceil(4)
    }
}
