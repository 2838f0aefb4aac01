use super::{MachineConfig, Program, Word};

/// All valid programs of exactly `h` bits, lexicographic in body words.
/// Empty when `h` is not a positive multiple of the word size.
pub fn enumerate_programs(h: u32, cfg: &MachineConfig) -> ProgramIter {
    let c = cfg.word_bits as u32;
    let body_len = if h >= c && h.is_multiple_of(c) {
        Some((h / c - 1) as usize)
    } else {
        None
    };
    ProgramIter {
        body: body_len.map(|n| vec![0; n]),
        radix: cfg.usable_words() as Word,
        word_bits: cfg.word_bits,
    }
}

/// Programs of every length `c, 2c, ..` up to `max_bits`, shortest first.
pub fn programs_up_to(max_bits: u32, cfg: &MachineConfig) -> impl Iterator<Item = Program> {
    let cfg = *cfg;
    let c = cfg.word_bits as u32;
    (1..=max_bits / c).flat_map(move |k| enumerate_programs(k * c, &cfg))
}

/// The `index`-th program of length `h` in enumeration order, if any.
/// Lets callers split a length stratum into independent ranges.
pub fn program_at(h: u32, index: u128, cfg: &MachineConfig) -> Option<Program> {
    let c = cfg.word_bits as u32;
    if h < c || !h.is_multiple_of(c) {
        return None;
    }
    let n = (h / c - 1) as usize;
    let radix = cfg.usable_words() as u128;
    let mut rest = index;
    let mut body = vec![0 as Word; n];
    for slot in body.iter_mut().rev() {
        *slot = (rest % radix) as Word;
        rest /= radix;
    }
    if rest != 0 {
        return None;
    }
    Some(Program::from_body_unchecked(&body, cfg.word_bits))
}

/// Odometer over body words; yields each program once.
#[derive(Debug, Clone)]
pub struct ProgramIter {
    body: Option<Vec<Word>>,
    radix: Word,
    word_bits: u8,
}

impl ProgramIter {
    /// Starts the odometer at `start` instead of the first program.
    pub fn starting_at(start: &Program, cfg: &MachineConfig) -> ProgramIter {
        ProgramIter {
            body: Some(start.body().to_vec()),
            radix: cfg.usable_words() as Word,
            word_bits: cfg.word_bits,
        }
    }
}

impl Iterator for ProgramIter {
    type Item = Program;

    fn next(&mut self) -> Option<Program> {
        let body = self.body.as_mut()?;
        let out = Program::from_body_unchecked(body, self.word_bits);
        let mut carry = true;
        for slot in body.iter_mut().rev() {
            *slot += 1;
            if *slot < self.radix {
                carry = false;
                break;
            }
            *slot = 0;
        }
        if carry {
            self.body = None;
        }
        Some(out)
    }
}
