//! End-to-end property checks over a built bank.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::TaskBank;
use crate::aggregate::{BankDistribution, TaskProb};
use crate::difficulty::{
    acceptable, check_strong_boundedness, difficulty_profile, Acceptance, DifficultyKind,
    DifficultyRecord, Status,
};
use crate::refmachine::{programs_up_to, Program};
use crate::tasks::{max_response_by_action_search, Task, TaskError};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub digest: String,
    pub checks: Vec<CheckResult>,
    pub warnings: Vec<String>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

fn check(name: &str, failures: Vec<String>, checked: usize) -> CheckResult {
    let passed = failures.is_empty();
    let detail = if passed {
        format!("{checked} checked")
    } else {
        let shown: Vec<&str> = failures.iter().take(5).map(String::as_str).collect();
        format!("{} failures: {}", failures.len(), shown.join("; "))
    };
    CheckResult {
        name: name.to_string(),
        passed,
        detail,
    }
}

/// Runs witness minimality, strong boundedness, multi-policy bounds, LS
/// dominance, infinite-status soundness, normalization and cache
/// coherence. An empty bank passes vacuously with a warning.
pub fn verify_bank(bank: &TaskBank) -> VerifyReport {
    let cfg = &bank.config;
    let m = cfg.machine;
    let tol = cfg.tolerance();
    let opts = cfg.eval_options();
    let mut warnings = Vec::new();
    if bank.is_empty() {
        warnings.push("bank is empty; every check passes vacuously".to_string());
    }
    let rows: Vec<(&Task, &DifficultyRecord)> = bank
        .tasks()
        .iter()
        .zip(&bank.records)
        .filter_map(|(t, r)| r.difficulty(DifficultyKind::MinLength).map(|d| (t, d)))
        .collect();
    let mut checks = Vec::new();

    let missing: Vec<String> = bank
        .records
        .iter()
        .filter(|r| r.difficulty(DifficultyKind::MinLength).is_none())
        .map(|r| r.spec.id.clone())
        .collect();
    checks.push(check("min_length_present", missing, bank.len()));

    let digest_ok = bank.compute_digest() == bank.digest();
    checks.push(CheckResult {
        name: "digest".into(),
        passed: digest_ok,
        detail: bank.digest().to_string(),
    });

    let policies: Vec<Program> = programs_up_to(cfg.l_max_policy, &m).collect();

    // Witness minimality: the witness is acceptable and has the recorded
    // length; nothing shorter is.
    let failures: Vec<String> = rows
        .par_iter()
        .flat_map_iter(|(t, d)| {
            let mut f = Vec::new();
            let bound = d.value_or_inf();
            if d.status == Status::Exact {
                match d.witness(&m) {
                    Some(w) if w.length_bits() as f64 == bound => {
                        if acceptable(&w, t, &tol, &opts) != Acceptance::Yes {
                            f.push(format!("{}: witness not acceptable", t.id()));
                        }
                    }
                    _ => f.push(format!("{}: witness missing or wrong length", t.id())),
                }
            }
            if d.status != Status::Infinite {
                for p in policies.iter().filter(|p| (p.length_bits() as f64) < bound) {
                    if acceptable(p, t, &tol, &opts) != Acceptance::No {
                        f.push(format!(
                            "{}: shorter policy {} accepted",
                            t.id(),
                            p.to_hex()
                        ));
                        break;
                    }
                }
            }
            f
        })
        .collect();
    checks.push(check("witness_minimality", failures, rows.len()));

    let rep = check_strong_boundedness(&policies, &rows, &tol, &opts);
    let failures = rep
        .violations
        .iter()
        .map(|v| {
            format!(
                "{} acceptable on {} (recorded {:?})",
                v.policy_hex, v.task_id, v.recorded
            )
        })
        .collect();
    checks.push(check(
        "strong_boundedness",
        failures,
        rep.pairs_checked as usize,
    ));
    if !rep.undecided.is_empty() {
        warnings.push(format!(
            "{} policy/task pairs undecided in the boundedness check",
            rep.undecided.len()
        ));
    }

    let mut failures = Vec::new();
    let mut n = 0;
    for r in &bank.records {
        let (Some(min), Some(multi)) = (
            r.difficulty(DifficultyKind::MinLength),
            r.difficulty(DifficultyKind::Multi),
        ) else {
            continue;
        };
        if min.status != Status::Exact {
            continue;
        }
        n += 1;
        let k = min.value_or_inf();
        let hi = multi.value_or_inf();
        let lo = multi.value_low.unwrap_or(hi);
        if !(lo >= 0.5 * (k - 1.0) - 1e-12 && hi <= k + 1e-12 && lo <= hi) {
            failures.push(format!(
                "{}: [{lo}, {hi}] outside [{}, {k}]",
                r.spec.id,
                0.5 * (k - 1.0)
            ));
        }
    }
    checks.push(check("multi_bounds", failures, n));

    let mut failures = Vec::new();
    for r in &bank.records {
        if let (Some(min), Some(ls)) = (
            r.difficulty(DifficultyKind::MinLength),
            r.difficulty(DifficultyKind::Ls),
        ) {
            if ls.value_or_inf() < min.value_or_inf() {
                failures.push(format!(
                    "{}: ls {:?} < min {:?}",
                    r.spec.id, ls.value, min.value
                ));
            }
        }
    }
    checks.push(check("ls_dominance", failures, bank.len()));

    let mut failures = Vec::new();
    let mut n = 0;
    for (t, d) in &rows {
        if d.status != Status::Infinite {
            continue;
        }
        n += 1;
        match max_response_by_action_search(t) {
            Ok(best) if best < tol.threshold() => {}
            Ok(best) => failures.push(format!("{}: action search reaches {best}", t.id())),
            Err(TaskError::SearchSpaceTooLarge(_)) => warnings.push(format!(
                "{}: horizon too long for the action search",
                t.id()
            )),
            Err(e) => failures.push(format!("{}: {e}", t.id())),
        }
    }
    checks.push(check("infinite_soundness", failures, n));

    let mut failures = Vec::new();
    for kind in [DifficultyKind::MinLength] {
        let items = bank.items(kind);
        if items.is_empty() {
            continue;
        }
        for prob in [TaskProb::Uniform, TaskProb::TwoPowMinusKhat] {
            match BankDistribution::new(&items, prob) {
                Ok(d) => {
                    for (s, members) in d.strata() {
                        let total: f64 = members.iter().map(|&i| d.conditional(i, s)).sum();
                        if (total - 1.0).abs() > 1e-12 {
                            failures.push(format!("{prob:?} {s:?}: conditional sums to {total}"));
                        }
                    }
                }
                Err(e) => failures.push(format!("{prob:?}: {e}")),
            }
        }
    }
    checks.push(check("normalization", failures, bank.len()));

    let search = cfg.search();
    let failures: Vec<String> = bank
        .tasks()
        .par_iter()
        .zip(&bank.records)
        .filter_map(|(t, r)| match difficulty_profile(t, &search) {
            Ok(p) if p == r.difficulties => None,
            Ok(_) => Some(format!("{}: recomputed records differ", t.id())),
            Err(e) => Some(format!("{}: {e}", t.id())),
        })
        .collect();
    checks.push(check("cache_coherence", failures, bank.len()));

    VerifyReport {
        digest: bank.digest().to_string(),
        checks,
        warnings,
    }
}
