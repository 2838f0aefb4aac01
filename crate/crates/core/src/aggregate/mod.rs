//! Aggregation of responses over a task class.
//!
//! Tasks are grouped into difficulty strata. The expected result `psi` of an
//! agent is a `p(mu)`-weighted mean of its responses and decomposes into
//! per-stratum slices weighted by `p(h)`. Binarized slices replace the
//! response by ε-acceptability and are combined with a weight `w(h)`.
//! Task probabilities are either uniform or `2^-K̂(mu)`, where `K̂` is the
//! length of the shortest generator found for the task.

mod ops;
mod report;

pub use ops::{
    ctest_score, decompose_check, psi, psi_at_h, psi_pairs, psi_weighted, response_curve,
    AggregateReport, CTestItem, CTestReport, CTestRow, CurvePoint, Pair, PairsTable, PerStratum,
    ResponseCurve, SliceMode, DEFAULT_CURVE_MAX_H,
};
pub use report::{curve_csv, curve_svg, line_chart_svg, Series};

use std::collections::BTreeMap;

use ordered_float::OrderedFloat;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::difficulty::{DifficultyKind, DifficultyRecord, Status};
use crate::tasks::Task;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AggregateError {
    #[error("distribution does not match the bank: {0}")]
    DistributionMismatch(String),
    #[error("no task has difficulty {0}")]
    EmptyStratum(f64),
    #[error("acceptability of the agent on task {0} is undecided")]
    UndecidedPresent(String),
    #[error("unit weights with a difficulty that is not strongly bounded need a max-h cutoff")]
    UnboundedAggregation,
    #[error("invalid weight scheme: {0}")]
    InvalidWeights(String),
    #[error("the pairs table is empty")]
    EmptyPairs,
    #[error("difficulty strata hold different item counts: {0:?}")]
    RaggedStrata(Vec<(u32, usize)>),
    #[error("no items")]
    NoItems,
}

/// One task as seen by the aggregations.
#[derive(Debug, Clone, Copy)]
pub struct Item<'a> {
    pub task: &'a Task,
    /// Length of the shortest known generator.
    pub k_hat: u32,
    pub difficulty: &'a DifficultyRecord,
}

/// Difficulty stratum. Censored and infinite records get their own
/// strata, ordered after every finite value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stratum {
    Finite(OrderedFloat<f64>),
    Censored,
    Infinite,
}

impl Stratum {
    pub fn of(rec: &DifficultyRecord) -> Stratum {
        match (rec.status, rec.value) {
            (Status::Exact, Some(v)) => Stratum::Finite(OrderedFloat(v)),
            (Status::Infinite, _) => Stratum::Infinite,
            _ => Stratum::Censored,
        }
    }

    pub fn finite(h: f64) -> Stratum {
        Stratum::Finite(OrderedFloat(h))
    }

    pub fn value(self) -> Option<f64> {
        match self {
            Stratum::Finite(v) => Some(v.0),
            _ => None,
        }
    }
}

/// How tasks are weighted inside the class (or inside a stratum).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskProb {
    #[default]
    Uniform,
    /// `2^-K̂(mu)`, normalized.
    TwoPowMinusKhat,
}

impl TaskProb {
    /// Normalized weights for `items`; `None` when empty.
    fn weights(self, items: &[Item]) -> Option<Vec<f64>> {
        if items.is_empty() {
            return None;
        }
        let raw: Vec<f64> = match self {
            TaskProb::Uniform => vec![1.0; items.len()],
            TaskProb::TwoPowMinusKhat => {
                let min = items.iter().map(|i| i.k_hat).min().unwrap_or(0);
                items
                    .iter()
                    .map(|i| 2f64.powi(-((i.k_hat - min) as i32)))
                    .collect()
            }
        };
        let total: f64 = raw.iter().sum();
        Some(raw.into_iter().map(|w| w / total).collect())
    }
}

/// `w(h)`. Unit weights are a measure, not a probability.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum WeightScheme {
    One,
    /// `1 / (floor(b) - ceil(a) + 1)` on `[a, b]`, 0 elsewhere: uniform over
    /// the integer difficulties in the interval.
    UniformInterval {
        a: f64,
        b: f64,
    },
    /// `base^-h`.
    Geometric {
        base: f64,
    },
    /// Explicit `(h, w)` entries; 0 for absent `h`.
    Table {
        entries: Vec<(f64, f64)>,
    },
}

impl WeightScheme {
    pub fn validate(&self) -> Result<(), AggregateError> {
        let bad = |m: &str| Err(AggregateError::InvalidWeights(m.to_string()));
        match self {
            WeightScheme::One => Ok(()),
            WeightScheme::UniformInterval { a, b } => {
                if a.is_nan() || b.is_nan() || a > b || b.floor() < a.ceil() {
                    bad("uniform interval needs a <= b with an integer inside")
                } else {
                    Ok(())
                }
            }
            WeightScheme::Geometric { base } => {
                if *base > 1.0 {
                    Ok(())
                } else {
                    bad("geometric base must exceed 1")
                }
            }
            WeightScheme::Table { entries } => {
                if entries.iter().all(|(_, w)| *w >= 0.0) {
                    Ok(())
                } else {
                    bad("table weights must be nonnegative")
                }
            }
        }
    }

    pub fn weight(&self, h: f64) -> f64 {
        match self {
            WeightScheme::One => 1.0,
            WeightScheme::UniformInterval { a, b } => {
                if h >= *a && h <= *b {
                    1.0 / (b.floor() - a.ceil() + 1.0)
                } else {
                    0.0
                }
            }
            WeightScheme::Geometric { base } => base.powf(-h),
            WeightScheme::Table { entries } => entries
                .iter()
                .find(|(k, _)| *k == h)
                .map_or(0.0, |(_, w)| *w),
        }
    }

    /// Parses `one`, `uniform:a:b`, `geometric:base` or `table:h=w,h=w`.
    pub fn parse(s: &str) -> Result<WeightScheme, AggregateError> {
        let err = || AggregateError::InvalidWeights(format!("cannot parse {s:?}"));
        let num = |x: &str| x.trim().parse::<f64>().map_err(|_| err());
        let mut parts = s.splitn(2, ':');
        let head = parts.next().unwrap_or("");
        let rest = parts.next();
        let w = match (head, rest) {
            ("one", None) => WeightScheme::One,
            ("uniform", Some(r)) => {
                let (a, b) = r.split_once(':').ok_or_else(err)?;
                WeightScheme::UniformInterval {
                    a: num(a)?,
                    b: num(b)?,
                }
            }
            ("geometric", Some(r)) => WeightScheme::Geometric { base: num(r)? },
            ("table", Some(r)) => WeightScheme::Table {
                entries: r
                    .split(',')
                    .map(|kv| {
                        let (k, v) = kv.split_once('=').ok_or_else(err)?;
                        Ok((num(k)?, num(v)?))
                    })
                    .collect::<Result<_, AggregateError>>()?,
            },
            _ => return Err(err()),
        };
        w.validate()?;
        Ok(w)
    }
}

/// `p(mu)`, the induced `p(h)` and the conditionals `p(mu | h)`.
#[derive(Debug, Clone, PartialEq)]
pub struct BankDistribution {
    p: Vec<f64>,
    strata: BTreeMap<Stratum, Vec<usize>>,
    p_h: BTreeMap<Stratum, f64>,
}

impl BankDistribution {
    pub fn new(items: &[Item], prob: TaskProb) -> Result<Self, AggregateError> {
        let p = prob.weights(items).ok_or(AggregateError::NoItems)?;
        Self::from_weights(items, p)
    }

    /// Uses explicit per-task probabilities, which must sum to 1.
    pub fn from_weights(items: &[Item], p: Vec<f64>) -> Result<Self, AggregateError> {
        if p.len() != items.len() {
            return Err(AggregateError::DistributionMismatch(format!(
                "{} probabilities for {} tasks",
                p.len(),
                items.len()
            )));
        }
        if p.iter().any(|&x| x.is_nan() || x < 0.0) {
            return Err(AggregateError::DistributionMismatch(
                "negative probability".into(),
            ));
        }
        let total: f64 = p.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(AggregateError::DistributionMismatch(format!(
                "probabilities sum to {total}"
            )));
        }
        let mut strata: BTreeMap<Stratum, Vec<usize>> = BTreeMap::new();
        for (i, it) in items.iter().enumerate() {
            strata
                .entry(Stratum::of(it.difficulty))
                .or_default()
                .push(i);
        }
        let p_h = strata
            .iter()
            .map(|(s, idx)| (*s, idx.iter().map(|&i| p[i]).sum()))
            .collect();
        Ok(BankDistribution { p, strata, p_h })
    }

    pub fn len(&self) -> usize {
        self.p.len()
    }

    pub fn is_empty(&self) -> bool {
        self.p.is_empty()
    }

    pub fn p(&self, i: usize) -> f64 {
        self.p[i]
    }

    pub fn p_h(&self, h: Stratum) -> f64 {
        self.p_h.get(&h).copied().unwrap_or(0.0)
    }

    /// `p(mu | h)` for the task at index `i`.
    pub fn conditional(&self, i: usize, h: Stratum) -> f64 {
        self.p[i] / self.p_h(h)
    }

    pub fn strata(&self) -> impl Iterator<Item = (Stratum, &[usize])> {
        self.strata.iter().map(|(s, v)| (*s, v.as_slice()))
    }

    pub fn members(&self, h: Stratum) -> &[usize] {
        self.strata.get(&h).map_or(&[], |v| v.as_slice())
    }
}

/// Whether unit weights over `kind` need a cutoff to stay finite.
pub fn is_strongly_bounded(kind: DifficultyKind) -> bool {
    !matches!(kind, DifficultyKind::Ls)
}
