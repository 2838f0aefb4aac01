//! Acceptability and difficulty functions.
//!
//! A policy is ε-acceptable on a task when its expected response reaches
//! `1 - ε`. The min-length difficulty of a task is the length of its
//! shortest acceptable policy. Variants weight every acceptable policy by
//! `2^-2L` ([`DifficultyKind::Multi`]) or add the binary log of expected
//! execution steps ([`DifficultyKind::Ls`]). Three baselines (random-agent
//! response, length/response ratio, shortest maximal policy) are computed
//! from the same enumeration.

mod bounded;
mod search;

pub use bounded::{check_strong_boundedness, BoundednessReport, Violation};
pub use search::{
    difficulty, difficulty_baselines, difficulty_ls, difficulty_min_length, difficulty_multi,
    difficulty_profile, SearchConfig,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::refmachine::{count_programs_f64, MachineConfig, Program};
use crate::tasks::{evaluate, EvalOptions, ResponseEstimate, Task, TaskError};

pub const DEFAULT_EPSILON: f64 = 0.1;

/// Slack for comparing exact expectations against the threshold.
pub const EXACT_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DifficultyError {
    #[error("epsilon must lie in (0, 1), got {0}")]
    InvalidEpsilon(f64),
    #[error("search bound {l_max} is shorter than one word ({word_bits} bits)")]
    LengthBelowWord { l_max: u32, word_bits: u8 },
    #[error("acceptability of {policy_hex} ({length} bits) is undecided; raise the sample budget")]
    UndecidedAtFrontier { length: u32, policy_hex: String },
    #[error(transparent)]
    Task(#[from] TaskError),
}

/// How a Monte Carlo interval is compared with the threshold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecisionRule {
    /// Decide only when the whole interval lies on one side.
    #[default]
    Interval,
    /// Compare the point estimate and never report undecided.
    PointEstimate,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ToleranceConfig {
    pub epsilon: f64,
    pub decision_rule: DecisionRule,
}

impl Default for ToleranceConfig {
    fn default() -> Self {
        ToleranceConfig {
            epsilon: DEFAULT_EPSILON,
            decision_rule: DecisionRule::Interval,
        }
    }
}

impl ToleranceConfig {
    pub fn new(epsilon: f64) -> Result<Self, DifficultyError> {
        let tol = ToleranceConfig {
            epsilon,
            ..Default::default()
        };
        tol.validate()?;
        Ok(tol)
    }

    pub fn validate(&self) -> Result<(), DifficultyError> {
        if self.epsilon > 0.0 && self.epsilon < 1.0 {
            Ok(())
        } else {
            Err(DifficultyError::InvalidEpsilon(self.epsilon))
        }
    }

    pub fn threshold(&self) -> f64 {
        1.0 - self.epsilon
    }

    pub fn classify(&self, est: &ResponseEstimate) -> Acceptance {
        let th = self.threshold();
        if est.exact || self.decision_rule == DecisionRule::PointEstimate {
            return if est.mean >= th - EXACT_SLACK {
                Acceptance::Yes
            } else {
                Acceptance::No
            };
        }
        if est.ci_low >= th {
            Acceptance::Yes
        } else if est.ci_high < th {
            Acceptance::No
        } else {
            Acceptance::Undecided
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Acceptance {
    Yes,
    No,
    Undecided,
}

impl Acceptance {
    /// 1 / 0, or `None` when undecided.
    pub fn as_indicator(self) -> Option<f64> {
        match self {
            Acceptance::Yes => Some(1.0),
            Acceptance::No => Some(0.0),
            Acceptance::Undecided => None,
        }
    }
}

pub fn acceptable(
    pi: &Program,
    task: &Task,
    tol: &ToleranceConfig,
    opts: &EvalOptions,
) -> Acceptance {
    tol.classify(&evaluate(pi, task, opts).response)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DifficultyKind {
    MinLength,
    Multi,
    Ls,
    RandBaseline,
    Ratio,
    MaxResponse,
}

impl DifficultyKind {
    pub const ALL: [DifficultyKind; 6] = [
        DifficultyKind::MinLength,
        DifficultyKind::Multi,
        DifficultyKind::Ls,
        DifficultyKind::RandBaseline,
        DifficultyKind::Ratio,
        DifficultyKind::MaxResponse,
    ];

    pub fn name(self) -> &'static str {
        match self {
            DifficultyKind::MinLength => "min_length",
            DifficultyKind::Multi => "multi",
            DifficultyKind::Ls => "ls",
            DifficultyKind::RandBaseline => "rand_baseline",
            DifficultyKind::Ratio => "ratio",
            DifficultyKind::MaxResponse => "max_response",
        }
    }

    pub fn parse(s: &str) -> Option<DifficultyKind> {
        DifficultyKind::ALL.into_iter().find(|k| k.name() == s)
    }
}

/// Censoring status of a record.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Exact,
    /// The search up to the given bound found nothing; `value` is a lower
    /// bound.
    LowerBound(u32),
    /// The best candidate within the bound may be beaten by a longer one;
    /// `value` is an upper bound and `value_low` a lower bound.
    UpperBound(u32),
    /// Proved unreachable: no behavior attains the threshold.
    Infinite,
}

/// One difficulty value for one task. `value` is `None` exactly when the
/// status is infinite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DifficultyRecord {
    pub task_id: String,
    pub kind: DifficultyKind,
    pub epsilon: f64,
    pub tau: u32,
    pub l_max: u32,
    pub value: Option<f64>,
    /// Lower end of the uncertainty interval when the value is not sharp.
    pub value_low: Option<f64>,
    pub witness_hex: Option<String>,
    pub status: Status,
}

impl DifficultyRecord {
    pub fn is_exact(&self) -> bool {
        self.status == Status::Exact
    }

    /// The value, with infinite records mapped to `f64::INFINITY`.
    pub fn value_or_inf(&self) -> f64 {
        self.value.unwrap_or(f64::INFINITY)
    }

    pub fn witness(&self, cfg: &MachineConfig) -> Option<Program> {
        self.witness_hex
            .as_deref()
            .and_then(|h| Program::from_hex(h, cfg).ok())
    }
}

/// `-0.5 log2 sum 2^-2L` over the given policy lengths.
pub fn multi_value(lengths: &[u32]) -> f64 {
    -0.5 * lengths
        .iter()
        .map(|&l| 2f64.powi(-2 * l as i32))
        .sum::<f64>()
        .log2()
}

/// `-0.5 log2 sum count 2^-2L` over `(length, count)` pairs.
pub fn multi_value_from_counts<I: IntoIterator<Item = (u32, f64)>>(counts: I) -> f64 {
    -0.5 * counts
        .into_iter()
        .map(|(l, n)| n * 2f64.powi(-2 * l as i32))
        .sum::<f64>()
        .log2()
}

/// Mass `sum_{n > l_max} N(n) 2^-2n` of all programs longer than `l_max`:
/// a geometric series with ratio `(2^c - 1) / 4^c`.
pub fn multi_tail_mass(l_max: u32, cfg: &MachineConfig) -> f64 {
    let c = cfg.word_bits as u32;
    let first = (l_max / c + 1) * c;
    let ratio = cfg.usable_words() as f64 / (cfg.alphabet() as f64).powi(2);
    let lead = (count_programs_f64(first, cfg).log2() - 2.0 * first as f64).exp2();
    lead / (1.0 - ratio)
}

/// Multi-policy difficulty when every valid program is acceptable, from
/// the closed-form sum `2^-2c / (1 - (2^c - 1) / 4^c)`.
pub fn multi_all_acceptable(cfg: &MachineConfig) -> f64 {
    -0.5 * multi_tail_mass(0, cfg).log2()
}

/// Length-plus-log-steps score of one policy.
pub fn ls_score(length: u32, expected_steps: f64) -> f64 {
    length as f64 + expected_steps.log2()
}

/// Length/response ratio of one policy; infinite at zero response.
pub fn ratio_score(length: u32, response: f64) -> f64 {
    if response > 0.0 {
        length as f64 / response
    } else {
        f64::INFINITY
    }
}
