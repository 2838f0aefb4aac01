//! Bank configuration and its plain `key = value` file format.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::BankError;
use crate::difficulty::{SearchConfig, ToleranceConfig};
use crate::refmachine::MachineConfig;
use crate::tasks::{EvalOptions, Family};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BankConfig {
    pub machine: MachineConfig,
    pub tau: u32,
    pub epsilon: f64,
    /// Longest policy searched for difficulties, in bits.
    pub l_max_policy: u32,
    /// Longest generator enumerated, in bits.
    pub l_max_generator: u32,
    pub families: Vec<Family>,
    /// Exact min-length strata kept, inclusive.
    pub h_min: u32,
    pub h_max: u32,
    /// Keep tasks whose difficulty exceeds the search bound.
    pub keep_censored: bool,
    /// Maximum tasks per stratum; 0 keeps all.
    pub stratum_cap: usize,
    /// Size of a uniform subsample of the final bank; 0 keeps all.
    pub sample_size: usize,
    pub seed: u64,
    pub mc_samples: u32,
    pub confidence: f64,
    pub work_cap: u64,
    /// Upper bound on program evaluations a build may perform.
    pub max_evaluations: u64,
}

impl Default for BankConfig {
    fn default() -> Self {
        let eval = EvalOptions::default();
        BankConfig {
            machine: MachineConfig::default(),
            tau: 4,
            epsilon: 0.1,
            l_max_policy: 16,
            l_max_generator: 12,
            families: vec![Family::Track, Family::Heaven, Family::Hell],
            h_min: 4,
            h_max: 16,
            keep_censored: true,
            stratum_cap: 0,
            sample_size: 0,
            seed: 0,
            mc_samples: eval.mc_samples,
            confidence: eval.confidence,
            work_cap: eval.work_cap,
            max_evaluations: 10_000_000,
        }
    }
}

const KEYS: [&str; 17] = [
    "word_bits",
    "step_budget",
    "tau",
    "epsilon",
    "l_max_policy",
    "l_max_generator",
    "families",
    "h_min",
    "h_max",
    "keep_censored",
    "stratum_cap",
    "sample_size",
    "seed",
    "mc_samples",
    "confidence",
    "work_cap",
    "max_evaluations",
];

fn family_name(f: Family) -> &'static str {
    match f {
        Family::Track => "track",
        Family::Heaven => "heaven",
        Family::Hell => "hell",
    }
}

impl BankConfig {
    pub fn validate(&self) -> Result<(), BankError> {
        let err = |m: String| Err(BankError::Config(m));
        MachineConfig::new(self.machine.word_bits, self.machine.step_budget)
            .map_err(|e| BankError::Config(e.to_string()))?;
        let c = self.machine.word_bits as u32;
        if self.tau == 0 {
            return err("tau must be positive".into());
        }
        if let Err(e) = ToleranceConfig::new(self.epsilon) {
            return err(e.to_string());
        }
        if self.l_max_policy < c || self.l_max_generator < c {
            return err(format!("search bounds must be at least {c} bits"));
        }
        if self.h_min > self.h_max || self.h_min < c || self.h_max > self.l_max_policy {
            return err(format!(
                "h range [{}, {}] must lie within [{c}, {}]",
                self.h_min, self.h_max, self.l_max_policy
            ));
        }
        if !(self.confidence > 0.0 && self.confidence < 1.0) {
            return err("confidence must lie in (0, 1)".into());
        }
        if self.mc_samples == 0 || self.work_cap == 0 || self.max_evaluations == 0 {
            return err("sample, work and evaluation budgets must be positive".into());
        }
        let mut fams = self.families.clone();
        fams.sort();
        fams.dedup();
        if fams.len() != self.families.len() {
            return err("families listed twice".into());
        }
        Ok(())
    }

    pub fn eval_options(&self) -> EvalOptions {
        EvalOptions {
            mc_samples: self.mc_samples,
            confidence: self.confidence,
            work_cap: self.work_cap,
            seed: self.seed,
        }
    }

    pub fn tolerance(&self) -> ToleranceConfig {
        ToleranceConfig {
            epsilon: self.epsilon,
            ..Default::default()
        }
    }

    pub fn search(&self) -> SearchConfig {
        SearchConfig {
            tolerance: self.tolerance(),
            l_max: self.l_max_policy,
            eval: self.eval_options(),
        }
    }

    pub fn has_family(&self, f: Family) -> bool {
        self.families.contains(&f)
    }

    /// Every key with its current value, one per line.
    pub fn to_kv(&self) -> String {
        let mut s = String::new();
        for key in KEYS {
            let _ = writeln!(s, "{key} = {}", self.get(key));
        }
        s
    }

    fn get(&self, key: &str) -> String {
        match key {
            "word_bits" => self.machine.word_bits.to_string(),
            "step_budget" => self.machine.step_budget.to_string(),
            "tau" => self.tau.to_string(),
            "epsilon" => self.epsilon.to_string(),
            "l_max_policy" => self.l_max_policy.to_string(),
            "l_max_generator" => self.l_max_generator.to_string(),
            "families" => self
                .families
                .iter()
                .map(|&f| family_name(f))
                .collect::<Vec<_>>()
                .join(","),
            "h_min" => self.h_min.to_string(),
            "h_max" => self.h_max.to_string(),
            "keep_censored" => self.keep_censored.to_string(),
            "stratum_cap" => self.stratum_cap.to_string(),
            "sample_size" => self.sample_size.to_string(),
            "seed" => self.seed.to_string(),
            "mc_samples" => self.mc_samples.to_string(),
            "confidence" => self.confidence.to_string(),
            "work_cap" => self.work_cap.to_string(),
            "max_evaluations" => self.max_evaluations.to_string(),
            _ => unreachable!("unknown key {key}"),
        }
    }

    /// Sets one key from its text form.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), BankError> {
        fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T, BankError> {
            v.parse()
                .map_err(|_| BankError::Config(format!("{key}: cannot parse {v:?}")))
        }
        let v = value.trim();
        match key {
            "word_bits" => self.machine.word_bits = num(key, v)?,
            "step_budget" => self.machine.step_budget = num(key, v)?,
            "tau" => self.tau = num(key, v)?,
            "epsilon" => self.epsilon = num(key, v)?,
            "l_max_policy" => self.l_max_policy = num(key, v)?,
            "l_max_generator" => self.l_max_generator = num(key, v)?,
            "families" => {
                self.families = v
                    .split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(|s| match s {
                        "track" => Ok(Family::Track),
                        "heaven" => Ok(Family::Heaven),
                        "hell" => Ok(Family::Hell),
                        other => Err(BankError::Config(format!("unknown family {other:?}"))),
                    })
                    .collect::<Result<_, _>>()?
            }
            "h_min" => self.h_min = num(key, v)?,
            "h_max" => self.h_max = num(key, v)?,
            "keep_censored" => self.keep_censored = num(key, v)?,
            "stratum_cap" => self.stratum_cap = num(key, v)?,
            "sample_size" => self.sample_size = num(key, v)?,
            "seed" => self.seed = num(key, v)?,
            "mc_samples" => self.mc_samples = num(key, v)?,
            "confidence" => self.confidence = num(key, v)?,
            "work_cap" => self.work_cap = num(key, v)?,
            "max_evaluations" => self.max_evaluations = num(key, v)?,
            other => return Err(BankError::Config(format!("unknown key {other:?}"))),
        }
        Ok(())
    }

    /// Parses `key = value` lines over the defaults. `#` starts a comment.
    pub fn from_kv(text: &str) -> Result<BankConfig, BankError> {
        let mut cfg = BankConfig::default();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                BankError::Config(format!("line {}: expected key = value", n + 1))
            })?;
            cfg.set(k.trim(), v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}
