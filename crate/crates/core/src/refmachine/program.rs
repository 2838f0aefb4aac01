use std::fmt;

use thiserror::Error;

use super::{MachineConfig, Word};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ProgramError {
    #[error("empty word sequence")]
    EmptyInput,
    #[error("program is not terminated by END")]
    MissingEnd,
    #[error("END word at position {0} before the final word")]
    InteriorEnd(usize),
    #[error("word {word} at position {position} exceeds the {bits}-bit word size")]
    WordOutOfRange {
        position: usize,
        word: u32,
        bits: u8,
    },
    #[error("malformed hex program: {0}")]
    BadHex(String),
    #[error("unsupported word size {0} (expected 1..=16)")]
    UnsupportedWordSize(u8),
    #[error("step budget must be positive")]
    ZeroBudget,
}

/// A valid prefix-coded program: body words followed by exactly one END.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Program {
    words: Vec<Word>,
    word_bits: u8,
}

/// Checks the prefix-code rules and wraps the words as a [`Program`].
pub fn validate_program(words: &[Word], cfg: &MachineConfig) -> Result<Program, ProgramError> {
    let (last, body) = words.split_last().ok_or(ProgramError::EmptyInput)?;
    let end = cfg.end_word();
    for (position, &word) in words.iter().enumerate() {
        if word > end {
            return Err(ProgramError::WordOutOfRange {
                position,
                word: word as u32,
                bits: cfg.word_bits,
            });
        }
    }
    if let Some(position) = body.iter().position(|&w| w == end) {
        return Err(ProgramError::InteriorEnd(position));
    }
    if *last != end {
        return Err(ProgramError::MissingEnd);
    }
    Ok(Program {
        words: words.to_vec(),
        word_bits: cfg.word_bits,
    })
}

impl Program {
    /// Builds a program from body words, appending END.
    pub fn from_body(body: &[Word], cfg: &MachineConfig) -> Result<Program, ProgramError> {
        let mut words = body.to_vec();
        words.push(cfg.end_word());
        validate_program(&words, cfg)
    }

    /// The shortest program: END alone.
    pub fn empty(cfg: &MachineConfig) -> Program {
        Program {
            words: vec![cfg.end_word()],
            word_bits: cfg.word_bits,
        }
    }

    pub(crate) fn from_body_unchecked(body: &[Word], word_bits: u8) -> Program {
        let mut words = Vec::with_capacity(body.len() + 1);
        words.extend_from_slice(body);
        words.push(((1u32 << word_bits) - 1) as Word);
        Program { words, word_bits }
    }

    /// All words including the terminating END.
    pub fn words(&self) -> &[Word] {
        &self.words
    }

    /// Executable words (everything before END).
    pub fn body(&self) -> &[Word] {
        &self.words[..self.words.len() - 1]
    }

    pub fn word_bits(&self) -> u8 {
        self.word_bits
    }

    /// Encoded length in bits, END included.
    pub fn length_bits(&self) -> u32 {
        self.words.len() as u32 * self.word_bits as u32
    }

    /// Lowercase hex, `ceil(c/4)` digits per word.
    pub fn to_hex(&self) -> String {
        let width = (self.word_bits as usize).div_ceil(4);
        let mut out = String::with_capacity(self.words.len() * width);
        for w in &self.words {
            out.push_str(&format!("{:0width$x}", w, width = width));
        }
        out
    }

    pub fn from_hex(hex: &str, cfg: &MachineConfig) -> Result<Program, ProgramError> {
        let width = cfg.hex_width();
        let hex = hex.trim();
        if hex.is_empty() {
            return Err(ProgramError::EmptyInput);
        }
        if !hex.len().is_multiple_of(width) || !hex.is_ascii() {
            return Err(ProgramError::BadHex(hex.to_string()));
        }
        let words = (0..hex.len() / width)
            .map(|i| {
                let chunk = &hex[i * width..(i + 1) * width];
                u32::from_str_radix(chunk, 16)
                    .map_err(|_| ProgramError::BadHex(hex.to_string()))
                    .and_then(|v| {
                        if v > cfg.end_word() as u32 {
                            Err(ProgramError::WordOutOfRange {
                                position: i,
                                word: v,
                                bits: cfg.word_bits,
                            })
                        } else {
                            Ok(v as Word)
                        }
                    })
            })
            .collect::<Result<Vec<_>, _>>()?;
        validate_program(&words, cfg)
    }

    /// Human-readable disassembly, e.g. `LOAD 3; WRITE; END`.
    pub fn disassemble(&self, cfg: &MachineConfig) -> String {
        let body = self.body();
        let mut parts = Vec::new();
        let mut i = 0;
        while i < body.len() {
            let op = cfg.opcode(body[i]);
            if op.takes_immediate() {
                let imm = body.get(i + 1).copied().unwrap_or(0);
                parts.push(format!("{} {}", op.mnemonic(), imm));
                i += 2;
            } else {
                parts.push(op.mnemonic().to_string());
                i += 1;
            }
        }
        parts.push("END".to_string());
        parts.join("; ")
    }
}

impl fmt::Debug for Program {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Program({})", self.to_hex())
    }
}

impl fmt::Display for Program {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}
