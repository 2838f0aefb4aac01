//! Task bank construction, persistence and verification.
//!
//! A build enumerates generators shortest first, keeps the first generator
//! of every distinct stream, adds the degenerate tasks, computes all
//! difficulty kinds per task and keeps the requested strata. The result is
//! a pure function of the configuration.

mod config;
mod io;
mod verify;

pub use config::BankConfig;
pub use io::{bank_to_jsonl, load_bank, parse_bank, save_bank, write_atomic, BANK_VERSION};
pub use verify::{verify_bank, CheckResult, VerifyReport};

use std::collections::{BTreeMap, HashMap};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::aggregate::{Item, Pair, PairsTable, Stratum};
use crate::difficulty::{
    difficulty_profile, Acceptance, DifficultyError, DifficultyKind, DifficultyRecord,
};
use crate::refmachine::{count_programs, programs_up_to, Program};
use crate::tasks::{
    evaluate, make_degenerate, make_track_task, ComplexityEstimate, Degenerate, Family, Task,
    TaskError, TaskSpec,
};

#[derive(Debug, Error)]
pub enum BankError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error(
        "evaluation budget exceeded: {needed} evaluations needed, {budget} allowed ({progress})"
    )]
    BudgetExceeded {
        needed: u128,
        budget: u64,
        progress: String,
    },
    #[error("corrupt bank: {0}")]
    CorruptBank(String),
    #[error("bank schema version {found} is not supported (expected {supported})")]
    VersionMismatch { found: u32, supported: u32 },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Task(#[from] TaskError),
    #[error(transparent)]
    Difficulty(#[from] DifficultyError),
}

/// Serialized form of one banked task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskRecord {
    pub spec: TaskSpec,
    pub complexity: ComplexityEstimate,
    /// One record per kind, in [`DifficultyKind::ALL`] order.
    pub difficulties: Vec<DifficultyRecord>,
}

impl TaskRecord {
    pub fn difficulty(&self, kind: DifficultyKind) -> Option<&DifficultyRecord> {
        self.difficulties.iter().find(|r| r.kind == kind)
    }
}

#[derive(Debug, Clone)]
pub struct TaskBank {
    pub config: BankConfig,
    pub records: Vec<TaskRecord>,
    tasks: Vec<Task>,
    digest: String,
}

impl TaskBank {
    fn assemble(config: BankConfig, records: Vec<TaskRecord>, tasks: Vec<Task>) -> TaskBank {
        let mut bank = TaskBank {
            config,
            records,
            tasks,
            digest: String::new(),
        };
        bank.digest = bank.compute_digest();
        bank
    }

    pub fn digest(&self) -> &str {
        &self.digest
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn tasks(&self) -> &[Task] {
        &self.tasks
    }

    /// SHA-256 over the canonical JSON of the version, config and records.
    pub fn compute_digest(&self) -> String {
        let mut h = Sha256::new();
        h.update(BANK_VERSION.to_le_bytes());
        h.update(serde_json::to_vec(&self.config).expect("config serializes"));
        for r in &self.records {
            h.update(b"\n");
            h.update(serde_json::to_vec(r).expect("record serializes"));
        }
        hex::encode(h.finalize())
    }

    /// Recomputes the digest after the records were edited in place.
    pub fn refresh_digest(&mut self) {
        self.digest = self.compute_digest();
    }

    /// Aggregation view under one difficulty kind.
    pub fn items(&self, kind: DifficultyKind) -> Vec<Item<'_>> {
        self.records
            .iter()
            .zip(&self.tasks)
            .filter_map(|(r, t)| {
                r.difficulty(kind).map(|d| Item {
                    task: t,
                    k_hat: r.complexity.k_hat,
                    difficulty: d,
                })
            })
            .collect()
    }

    /// Task count per min-length stratum.
    pub fn strata(&self) -> BTreeMap<Stratum, usize> {
        let mut out = BTreeMap::new();
        for r in &self.records {
            if let Some(d) = r.difficulty(DifficultyKind::MinLength) {
                *out.entry(Stratum::of(d)).or_insert(0) += 1;
            }
        }
        out
    }
}

fn progress(generators: u128, tasks: usize) -> String {
    format!("{generators} generators enumerated, {tasks} distinct tasks found")
}

fn policy_count(l_max: u32, cfg: &crate::refmachine::MachineConfig) -> u128 {
    let c = cfg.word_bits as u32;
    (1..=l_max / c)
        .map(|k| u128::try_from(count_programs(k * c, cfg)).unwrap_or(u128::MAX))
        .fold(0u128, u128::saturating_add)
}

/// Builds the bank described by `cfg`.
pub fn build_bank(cfg: &BankConfig) -> Result<TaskBank, BankError> {
    cfg.validate()?;
    let m = cfg.machine;
    let budget = cfg.max_evaluations;
    let gen_count = if cfg.has_family(Family::Track) {
        policy_count(cfg.l_max_generator, &m)
    } else {
        0
    };
    if gen_count > budget as u128 {
        return Err(BankError::BudgetExceeded {
            needed: gen_count,
            budget,
            progress: progress(0, 0),
        });
    }

    let mut tasks: Vec<(Task, ComplexityEstimate)> = Vec::new();
    let degenerate_k = 2 * m.word_bits as u32;
    for (fam, kind) in [
        (Family::Heaven, Degenerate::Heaven),
        (Family::Hell, Degenerate::Hell),
    ] {
        if cfg.has_family(fam) {
            let t = make_degenerate(kind, cfg.tau, &m)?;
            let est = ComplexityEstimate {
                k_hat: degenerate_k,
                witness_hex: None,
                censored: false,
            };
            tasks.push((t, est));
        }
    }
    if cfg.has_family(Family::Track) {
        let mut seen: HashMap<Vec<u16>, ()> = HashMap::new();
        for g in programs_up_to(cfg.l_max_generator, &m) {
            let Ok(t) = make_track_task(&g, cfg.tau, cfg.seed, &m) else {
                continue;
            };
            if seen.insert(t.stream().to_vec(), ()).is_none() {
                let est = ComplexityEstimate {
                    k_hat: g.length_bits(),
                    witness_hex: Some(g.to_hex()),
                    censored: false,
                };
                tasks.push((t, est));
            }
        }
    }

    let needed = gen_count
        .saturating_add((tasks.len() as u128).saturating_mul(policy_count(cfg.l_max_policy, &m)));
    if needed > budget as u128 {
        return Err(BankError::BudgetExceeded {
            needed,
            budget,
            progress: progress(gen_count, tasks.len()),
        });
    }

    let search = cfg.search();
    let profiles: Vec<Result<Vec<DifficultyRecord>, DifficultyError>> = tasks
        .par_iter()
        .map(|(t, _)| difficulty_profile(t, &search))
        .collect();

    let mut rows: Vec<(TaskRecord, Task)> = Vec::with_capacity(tasks.len());
    for ((t, est), prof) in tasks.into_iter().zip(profiles) {
        let rec = TaskRecord {
            spec: t.spec().clone(),
            complexity: est,
            difficulties: prof?,
        };
        rows.push((rec, t));
    }

    let keep = |r: &TaskRecord| -> bool {
        let d = r
            .difficulty(DifficultyKind::MinLength)
            .expect("profile has min-length");
        match Stratum::of(d) {
            Stratum::Finite(h) => h.0 >= cfg.h_min as f64 && h.0 <= cfg.h_max as f64,
            Stratum::Infinite => true,
            Stratum::Censored => cfg.keep_censored,
        }
    };
    rows.retain(|(r, _)| keep(r));

    if cfg.stratum_cap > 0 {
        let mut by: BTreeMap<Stratum, Vec<usize>> = BTreeMap::new();
        for (i, (r, _)) in rows.iter().enumerate() {
            let d = r.difficulty(DifficultyKind::MinLength).expect("min-length");
            by.entry(Stratum::of(d)).or_default().push(i);
        }
        let mut chosen = vec![false; rows.len()];
        for (k, (_, members)) in by.iter().enumerate() {
            let picked = sample_indices(members.len(), cfg.stratum_cap, cfg.seed, k as u64);
            for p in picked {
                chosen[members[p]] = true;
            }
        }
        let mut it = chosen.into_iter();
        rows.retain(|_| it.next().expect("one flag per row"));
    }
    if cfg.sample_size > 0 {
        let picked = sample_indices(rows.len(), cfg.sample_size, cfg.seed, u64::MAX);
        let mut chosen = vec![false; rows.len()];
        for p in picked {
            chosen[p] = true;
        }
        let mut it = chosen.into_iter();
        rows.retain(|_| it.next().expect("one flag per row"));
    }

    let (records, tasks): (Vec<_>, Vec<_>) = rows.into_iter().unzip();
    Ok(TaskBank::assemble(cfg.clone(), records, tasks))
}

/// Up to `k` of `0..n`, uniformly, in increasing order.
fn sample_indices(n: usize, k: usize, seed: u64, stream: u64) -> Vec<usize> {
    if n <= k {
        return (0..n).collect();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    let mut v = rand::seq::index::sample(&mut rng, n, k).into_vec();
    v.sort_unstable();
    v
}

/// Every `(task, policy)` with the policy acceptable, policies up to the
/// configured bound.
pub fn materialize_pairs(bank: &TaskBank) -> Result<PairsTable, BankError> {
    let cfg = &bank.config;
    let m = cfg.machine;
    let needed = (bank.len() as u128).saturating_mul(policy_count(cfg.l_max_policy, &m));
    if needed > cfg.max_evaluations as u128 {
        return Err(BankError::BudgetExceeded {
            needed,
            budget: cfg.max_evaluations,
            progress: format!("0 of {} tasks paired", bank.len()),
        });
    }
    let policies: Vec<Program> = programs_up_to(cfg.l_max_policy, &m).collect();
    let tol = cfg.tolerance();
    let opts = cfg.eval_options();
    let mut pairs = Vec::new();
    for (i, t) in bank.tasks().iter().enumerate() {
        let accepted: Vec<bool> = policies
            .par_iter()
            .map(|p| tol.classify(&evaluate(p, t, &opts).response) == Acceptance::Yes)
            .collect();
        for (p, ok) in policies.iter().zip(accepted) {
            if ok {
                pairs.push(Pair {
                    task_index: i,
                    policy_hex: p.to_hex(),
                    policy_bits: p.length_bits(),
                });
            }
        }
    }
    Ok(PairsTable { pairs })
}
