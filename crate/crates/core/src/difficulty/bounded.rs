//! Strong boundedness check: no policy may be acceptable on a task whose
//! recorded difficulty exceeds the policy's length.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{Acceptance, DifficultyRecord, ToleranceConfig};
use crate::refmachine::Program;
use crate::tasks::{EvalOptions, Task};

use super::acceptable;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub policy_hex: String,
    pub policy_bits: u32,
    pub task_id: String,
    pub recorded: Option<f64>,
    /// `Yes` for a proved violation, `Undecided` when sampling could not
    /// rule one out.
    pub acceptance: Acceptance,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BoundednessReport {
    /// Policy/task pairs whose acceptability was evaluated.
    pub pairs_checked: u64,
    pub violations: Vec<Violation>,
    pub undecided: Vec<Violation>,
}

impl BoundednessReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks every `(policy, task)` with recorded difficulty above the
/// policy's length. Infinite records count as above every length.
pub fn check_strong_boundedness(
    policies: &[Program],
    tasks: &[(&Task, &DifficultyRecord)],
    tol: &ToleranceConfig,
    opts: &EvalOptions,
) -> BoundednessReport {
    let per_policy: Vec<BoundednessReport> = policies
        .par_iter()
        .map(|pi| {
            let bits = pi.length_bits();
            let mut rep = BoundednessReport::default();
            for (task, rec) in tasks {
                if rec.value_or_inf() <= bits as f64 {
                    continue;
                }
                rep.pairs_checked += 1;
                let a = acceptable(pi, task, tol, opts);
                if a == Acceptance::No {
                    continue;
                }
                let v = Violation {
                    policy_hex: pi.to_hex(),
                    policy_bits: bits,
                    task_id: task.id().to_string(),
                    recorded: rec.value,
                    acceptance: a,
                };
                match a {
                    Acceptance::Yes => rep.violations.push(v),
                    _ => rep.undecided.push(v),
                }
            }
            rep
        })
        .collect();
    per_policy
        .into_iter()
        .fold(BoundednessReport::default(), |mut acc, r| {
            acc.pairs_checked += r.pairs_checked;
            acc.violations.extend(r.violations);
            acc.undecided.extend(r.undecided);
            acc
        })
}
