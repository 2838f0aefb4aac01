use serde::{Deserialize, Serialize};

use super::{generate_stream, Family, Task};
use crate::refmachine::programs_up_to;

/// Upper bound `K^` on a task's generator complexity.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComplexityEstimate {
    pub k_hat: u32,
    /// Hex of the shortest generator found (or the task's own generator
    /// when censored); absent for degenerate tasks.
    pub witness_hex: Option<String>,
    /// No generator within the search bound reproduces the stream.
    pub censored: bool,
}

/// Shortest generator, in length-then-lexicographic order up to `l_max`
/// bits, that reproduces the task's `tau + 1` symbols under its seed.
///
/// The result bounds the true complexity from above. Degenerate tasks are
/// not generator-encoded and get the fixed value `2c`.
pub fn estimate_task_complexity(task: &Task, l_max: u32) -> ComplexityEstimate {
    let cfg = task.machine();
    if task.family() != Family::Track {
        return ComplexityEstimate {
            k_hat: 2 * cfg.word_bits as u32,
            witness_hex: None,
            censored: false,
        };
    }
    let target = task.stream();
    let seed = task.spec().seed;
    for g in programs_up_to(l_max, cfg) {
        if generate_stream(&g, target.len(), seed, cfg).as_deref() == Ok(target) {
            return ComplexityEstimate {
                k_hat: g.length_bits(),
                witness_hex: Some(g.to_hex()),
                censored: false,
            };
        }
    }
    let own = task.generator().expect("track tasks carry a generator");
    ComplexityEstimate {
        k_hat: own.length_bits(),
        witness_hex: Some(own.to_hex()),
        censored: true,
    }
}
