use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    is_strongly_bounded, AggregateError, BankDistribution, Item, Stratum, TaskProb, WeightScheme,
};
use crate::difficulty::{Acceptance, ToleranceConfig};
use crate::refmachine::Program;
use crate::tasks::{evaluate, EvalOptions, Evaluation, Task};

/// Default upper end of response curves, in bits.
pub const DEFAULT_CURVE_MAX_H: f64 = 200.0;

fn evaluate_all(pi: &Program, tasks: &[&Task], opts: &EvalOptions) -> Vec<Evaluation> {
    tasks.par_iter().map(|t| evaluate(pi, t, opts)).collect()
}

fn evaluate_items(pi: &Program, items: &[Item], opts: &EvalOptions) -> Vec<Evaluation> {
    let tasks: Vec<&Task> = items.iter().map(|i| i.task).collect();
    evaluate_all(pi, &tasks, opts)
}

fn check_dist(items: &[Item], dist: &BankDistribution) -> Result<(), AggregateError> {
    if dist.len() != items.len() {
        return Err(AggregateError::DistributionMismatch(format!(
            "distribution over {} tasks, bank has {}",
            dist.len(),
            items.len()
        )));
    }
    Ok(())
}

/// Raw expected response or ε-acceptability.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SliceMode {
    Raw,
    Binarized(ToleranceConfig),
}

/// `sum_mu p(mu) E[R(pi, mu)]`.
pub fn psi(
    pi: &Program,
    items: &[Item],
    dist: &BankDistribution,
    opts: &EvalOptions,
) -> Result<f64, AggregateError> {
    check_dist(items, dist)?;
    let evs = evaluate_items(pi, items, opts);
    Ok(evs
        .iter()
        .enumerate()
        .map(|(i, e)| dist.p(i) * e.response.mean)
        .sum())
}

fn slice_value(
    evs: &[Evaluation],
    items: &[Item],
    dist: &BankDistribution,
    h: Stratum,
    mode: SliceMode,
) -> Result<f64, AggregateError> {
    let members = dist.members(h);
    if members.is_empty() {
        return Err(AggregateError::EmptyStratum(
            h.value().unwrap_or(f64::INFINITY),
        ));
    }
    let mut total = 0.0;
    for &i in members {
        let x = match mode {
            SliceMode::Raw => evs[i].response.mean,
            SliceMode::Binarized(tol) => tol
                .classify(&evs[i].response)
                .as_indicator()
                .ok_or_else(|| AggregateError::UndecidedPresent(items[i].task.id().into()))?,
        };
        total += dist.conditional(i, h) * x;
    }
    Ok(total)
}

/// `sum_{mu in h} p(mu | h) X(pi, mu)`.
pub fn psi_at_h(
    pi: &Program,
    items: &[Item],
    dist: &BankDistribution,
    h: Stratum,
    mode: SliceMode,
    opts: &EvalOptions,
) -> Result<f64, AggregateError> {
    check_dist(items, dist)?;
    let members: Vec<&Task> = dist.members(h).iter().map(|&i| items[i].task).collect();
    if members.is_empty() {
        return Err(AggregateError::EmptyStratum(
            h.value().unwrap_or(f64::INFINITY),
        ));
    }
    let mut evs = vec![None; items.len()];
    for (&i, ev) in dist.members(h).iter().zip(evaluate_all(pi, &members, opts)) {
        evs[i] = Some(ev);
    }
    let mut total = 0.0;
    for &i in dist.members(h) {
        let ev = evs[i].as_ref().expect("member evaluated");
        let x = match mode {
            SliceMode::Raw => ev.response.mean,
            SliceMode::Binarized(tol) => tol
                .classify(&ev.response)
                .as_indicator()
                .ok_or_else(|| AggregateError::UndecidedPresent(items[i].task.id().into()))?,
        };
        total += dist.conditional(i, h) * x;
    }
    Ok(total)
}

/// `|psi - sum_h p(h) psi_h|` over raw responses.
pub fn decompose_check(
    pi: &Program,
    items: &[Item],
    dist: &BankDistribution,
    opts: &EvalOptions,
) -> Result<f64, AggregateError> {
    check_dist(items, dist)?;
    let evs = evaluate_items(pi, items, opts);
    let whole: f64 = evs
        .iter()
        .enumerate()
        .map(|(i, e)| dist.p(i) * e.response.mean)
        .sum();
    let mut parts = 0.0;
    for (h, _) in dist.strata() {
        parts += dist.p_h(h) * slice_value(&evs, items, dist, h, SliceMode::Raw)?;
    }
    Ok((whole - parts).abs())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerStratum {
    pub h: f64,
    pub weight: f64,
    pub psi_h: f64,
    pub n_tasks: usize,
    pub n_undecided: usize,
}

/// Weighted aggregate with its per-stratum breakdown. Probabilities
/// labelled `two_pow_minus_khat` use the generator-search bound `K̂`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateReport {
    pub agent_id: String,
    pub epsilon: f64,
    pub weight_scheme: WeightScheme,
    pub task_prob: TaskProb,
    pub value: f64,
    pub per_h: Vec<PerStratum>,
    /// Tasks left out because their difficulty is censored.
    pub n_censored: usize,
    pub n_infinite: usize,
}

/// `sum_h w(h) psi_h` over binarized slices of exact strata up to `max_h`.
/// Refuses unit weights over step-weighted difficulty without a cutoff.
pub fn psi_weighted(
    pi: &Program,
    items: &[Item],
    tol: &ToleranceConfig,
    w: &WeightScheme,
    task_prob: TaskProb,
    max_h: Option<f64>,
    opts: &EvalOptions,
) -> Result<AggregateReport, AggregateError> {
    w.validate()?;
    let unbounded = items
        .iter()
        .any(|i| !is_strongly_bounded(i.difficulty.kind));
    if *w == WeightScheme::One && unbounded && max_h.is_none() {
        return Err(AggregateError::UnboundedAggregation);
    }
    let evs = evaluate_items(pi, items, opts);
    let mut strata: BTreeMap<Stratum, Vec<usize>> = BTreeMap::new();
    for (i, it) in items.iter().enumerate() {
        strata
            .entry(Stratum::of(it.difficulty))
            .or_default()
            .push(i);
    }
    let mut report = AggregateReport {
        agent_id: pi.to_hex(),
        epsilon: tol.epsilon,
        weight_scheme: w.clone(),
        task_prob,
        value: 0.0,
        per_h: Vec::new(),
        n_censored: strata.get(&Stratum::Censored).map_or(0, Vec::len),
        n_infinite: strata.get(&Stratum::Infinite).map_or(0, Vec::len),
    };
    for (s, members) in &strata {
        let Some(h) = s.value() else { continue };
        if max_h.is_some_and(|m| h > m) {
            continue;
        }
        let sub: Vec<Item> = members.iter().map(|&i| items[i]).collect();
        let cond = task_prob.weights(&sub).expect("nonempty stratum");
        let mut psi_h = 0.0;
        for (&i, c) in members.iter().zip(&cond) {
            let a = tol
                .classify(&evs[i].response)
                .as_indicator()
                .ok_or_else(|| AggregateError::UndecidedPresent(items[i].task.id().into()))?;
            psi_h += c * a;
        }
        let weight = w.weight(h);
        report.value += weight * psi_h;
        report.per_h.push(PerStratum {
            h,
            weight,
            psi_h,
            n_tasks: members.len(),
            n_undecided: 0,
        });
    }
    Ok(report)
}

/// An acceptable `(task, policy)` pair; `task_index` points into the item
/// list the table was built from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Pair {
    pub task_index: usize,
    pub policy_hex: String,
    pub policy_bits: u32,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairsTable {
    pub pairs: Vec<Pair>,
}

impl PairsTable {
    /// Tasks paired with each policy, grouped by policy length.
    pub fn by_length(&self) -> BTreeMap<u32, BTreeMap<String, Vec<usize>>> {
        let mut out: BTreeMap<u32, BTreeMap<String, Vec<usize>>> = BTreeMap::new();
        for p in &self.pairs {
            let tasks = out
                .entry(p.policy_bits)
                .or_default()
                .entry(p.policy_hex.clone())
                .or_default();
            if !tasks.contains(&p.task_index) {
                tasks.push(p.task_index);
            }
        }
        out
    }
}

/// Pairs-based aggregate: every length `h` averages, over the `N(h)`
/// paired policies of that length, the `2^-K̂`-weighted acceptability of
/// `pi` on the tasks each policy solves.
pub fn psi_pairs(
    pi: &Program,
    items: &[Item],
    pairs: &PairsTable,
    tol: &ToleranceConfig,
    w: &WeightScheme,
    opts: &EvalOptions,
) -> Result<AggregateReport, AggregateError> {
    w.validate()?;
    if pairs.pairs.is_empty() {
        return Err(AggregateError::EmptyPairs);
    }
    if let Some(p) = pairs.pairs.iter().find(|p| p.task_index >= items.len()) {
        return Err(AggregateError::DistributionMismatch(format!(
            "pair refers to task {} of {}",
            p.task_index,
            items.len()
        )));
    }
    let grouped = pairs.by_length();
    let mut used: Vec<usize> = grouped
        .values()
        .flat_map(|m| m.values().flatten().copied())
        .collect();
    used.sort_unstable();
    used.dedup();
    let tasks: Vec<&Task> = used.iter().map(|&i| items[i].task).collect();
    let mut acc: BTreeMap<usize, f64> = BTreeMap::new();
    for (&i, ev) in used.iter().zip(evaluate_all(pi, &tasks, opts)) {
        let a = tol
            .classify(&ev.response)
            .as_indicator()
            .ok_or_else(|| AggregateError::UndecidedPresent(items[i].task.id().into()))?;
        acc.insert(i, a);
    }

    let mut report = AggregateReport {
        agent_id: pi.to_hex(),
        epsilon: tol.epsilon,
        weight_scheme: w.clone(),
        task_prob: TaskProb::TwoPowMinusKhat,
        value: 0.0,
        per_h: Vec::new(),
        n_censored: 0,
        n_infinite: 0,
    };
    for (&bits, policies) in &grouped {
        let mut total = 0.0;
        let mut n_tasks = 0;
        for members in policies.values() {
            let sub: Vec<Item> = members.iter().map(|&i| items[i]).collect();
            let cond = TaskProb::TwoPowMinusKhat
                .weights(&sub)
                .expect("policy has at least one pair");
            total += members
                .iter()
                .zip(&cond)
                .map(|(i, c)| c * acc[i])
                .sum::<f64>();
            n_tasks += members.len();
        }
        let h = bits as f64;
        let psi_h = total / policies.len() as f64;
        let weight = w.weight(h);
        report.value += weight * psi_h;
        report.per_h.push(PerStratum {
            h,
            weight,
            psi_h,
            n_tasks,
            n_undecided: 0,
        });
    }
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub h: f64,
    pub psi_h: f64,
    pub n_tasks: usize,
    /// Undecided acceptabilities, counted as 0 in `psi_h`.
    pub n_undecided: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseCurve {
    pub agent_id: String,
    pub epsilon: f64,
    pub points: Vec<CurvePoint>,
    pub n_censored: usize,
    pub n_infinite: usize,
}

/// Binarized slice value for every exact stratum up to `max_h`.
pub fn response_curve(
    pi: &Program,
    items: &[Item],
    tol: &ToleranceConfig,
    task_prob: TaskProb,
    max_h: f64,
    opts: &EvalOptions,
) -> ResponseCurve {
    let mut strata: BTreeMap<Stratum, Vec<usize>> = BTreeMap::new();
    for (i, it) in items.iter().enumerate() {
        strata
            .entry(Stratum::of(it.difficulty))
            .or_default()
            .push(i);
    }
    let mut curve = ResponseCurve {
        agent_id: pi.to_hex(),
        epsilon: tol.epsilon,
        points: Vec::new(),
        n_censored: strata.get(&Stratum::Censored).map_or(0, Vec::len),
        n_infinite: strata.get(&Stratum::Infinite).map_or(0, Vec::len),
    };
    let in_range: Vec<usize> = strata
        .iter()
        .filter(|(s, _)| s.value().is_some_and(|h| h <= max_h))
        .flat_map(|(_, m)| m.iter().copied())
        .collect();
    let tasks: Vec<&Task> = in_range.iter().map(|&i| items[i].task).collect();
    let mut verdict = vec![Acceptance::No; items.len()];
    for (&i, ev) in in_range.iter().zip(evaluate_all(pi, &tasks, opts)) {
        verdict[i] = tol.classify(&ev.response);
    }
    for (s, members) in &strata {
        let Some(h) = s.value().filter(|&h| h <= max_h) else {
            continue;
        };
        let sub: Vec<Item> = members.iter().map(|&i| items[i]).collect();
        let cond = task_prob.weights(&sub).expect("nonempty stratum");
        let mut psi_h = 0.0;
        let mut n_undecided = 0;
        for (&i, c) in members.iter().zip(&cond) {
            match verdict[i] {
                Acceptance::Yes => psi_h += c,
                Acceptance::Undecided => n_undecided += 1,
                Acceptance::No => {}
            }
        }
        curve.points.push(CurvePoint {
            h,
            psi_h,
            n_tasks: members.len(),
            n_undecided,
        });
    }
    curve
}

/// A sequence-continuation item with its assigned difficulty.
#[derive(Debug, Clone, Copy)]
pub struct CTestItem<'a> {
    pub task: &'a Task,
    pub h: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CTestRow {
    pub h: u32,
    pub n_items: usize,
    pub hit_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CTestReport {
    pub agent_id: String,
    pub exponent: f64,
    pub value: f64,
    pub rows: Vec<CTestRow>,
}

/// `I(pi) = sum_h h^e HitRatio(pi, h)`. A hit is a correct final
/// prediction; stochastic agents contribute its probability.
pub fn ctest_score(
    pi: &Program,
    items: &[CTestItem],
    e: f64,
    opts: &EvalOptions,
) -> Result<CTestReport, AggregateError> {
    if items.is_empty() {
        return Err(AggregateError::NoItems);
    }
    let mut strata: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
    for (i, it) in items.iter().enumerate() {
        strata.entry(it.h).or_default().push(i);
    }
    let counts: Vec<(u32, usize)> = strata.iter().map(|(h, v)| (*h, v.len())).collect();
    if counts.iter().any(|(_, n)| *n != counts[0].1) {
        return Err(AggregateError::RaggedStrata(counts));
    }
    let tasks: Vec<&Task> = items.iter().map(|i| i.task).collect();
    let evs = evaluate_all(pi, &tasks, opts);
    let mut report = CTestReport {
        agent_id: pi.to_hex(),
        exponent: e,
        value: 0.0,
        rows: Vec::new(),
    };
    for (h, members) in &strata {
        let n = members.len() as f64;
        let hit_ratio: f64 = members.iter().map(|&i| evs[i].final_hit / n).sum();
        report.value += (*h as f64).powf(e) * hit_ratio;
        report.rows.push(CTestRow {
            h: *h,
            n_items: members.len(),
            hit_ratio,
        });
    }
    Ok(report)
}
