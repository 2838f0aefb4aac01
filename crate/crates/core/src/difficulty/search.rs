//! Length-ordered policy enumeration shared by every difficulty kind.
//!
//! Each length stratum is split into fixed-size chunks of consecutive
//! programs. Chunks are evaluated in parallel and their summaries merged in
//! enumeration order, so results never depend on the thread count. The
//! standalone operations stop as soon as no longer policy can change their
//! answer; [`difficulty_profile`] scans the whole range once and yields the
//! same records.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    ls_score, multi_tail_mass, ratio_score, Acceptance, DifficultyError, DifficultyKind,
    DifficultyRecord, Status, ToleranceConfig, EXACT_SLACK,
};
use crate::refmachine::{count_programs, program_at, MachineConfig, Opcode, Program, ProgramIter};
use crate::tasks::{evaluate, max_achievable_response, EvalOptions, Family, Task};

const CHUNK: u128 = 256;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchConfig {
    pub tolerance: ToleranceConfig,
    /// Longest policy considered, in bits.
    pub l_max: u32,
    pub eval: EvalOptions,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            tolerance: ToleranceConfig::default(),
            l_max: 20,
            eval: EvalOptions::default(),
        }
    }
}

impl SearchConfig {
    pub fn validate(&self, cfg: &MachineConfig) -> Result<(), DifficultyError> {
        self.tolerance.validate()?;
        if self.l_max < cfg.word_bits as u32 {
            return Err(DifficultyError::LengthBelowWord {
                l_max: self.l_max,
                word_bits: cfg.word_bits,
            });
        }
        Ok(())
    }
}

/// Summary of a run of consecutive programs of one length.
#[derive(Debug, Clone, Default)]
struct Stats {
    first_yes: Option<u128>,
    first_undecided: Option<u128>,
    yes: u64,
    undecided: u64,
    ls_best: Option<(f64, u128)>,
    ls_undecided: Option<f64>,
    ratio_best: Option<(f64, u128)>,
    first_max: Option<u128>,
}

fn keep_smaller(a: Option<(f64, u128)>, b: Option<(f64, u128)>) -> Option<(f64, u128)> {
    match (a, b) {
        (Some(x), Some(y)) if y.0 < x.0 => Some(y),
        (Some(x), _) => Some(x),
        (None, y) => y,
    }
}

impl Stats {
    /// Appends `later`, which follows `self` in enumeration order.
    fn merge(mut self, later: Stats) -> Stats {
        self.first_yes = self.first_yes.or(later.first_yes);
        self.first_undecided = self.first_undecided.or(later.first_undecided);
        self.yes += later.yes;
        self.undecided += later.undecided;
        self.ls_best = keep_smaller(self.ls_best, later.ls_best);
        self.ls_undecided = match (self.ls_undecided, later.ls_undecided) {
            (Some(a), Some(b)) => Some(a.min(b)),
            (a, b) => a.or(b),
        };
        self.ratio_best = keep_smaller(self.ratio_best, later.ratio_best);
        self.first_max = self.first_max.or(later.first_max);
        self
    }
}

struct Scan<'a> {
    task: &'a Task,
    search: &'a SearchConfig,
    r_max: f64,
}

impl Scan<'_> {
    fn chunk(&self, h: u32, start: u128, len: u128) -> Stats {
        let cfg = self.task.machine();
        let mut st = Stats::default();
        let Some(first) = program_at(h, start, cfg) else {
            return st;
        };
        for (i, pi) in ProgramIter::starting_at(&first, cfg)
            .take(len as usize)
            .enumerate()
        {
            let idx = start + i as u128;
            let ev = evaluate(&pi, self.task, &self.search.eval);
            let resp = &ev.response;
            match self.search.tolerance.classify(resp) {
                Acceptance::Yes => {
                    st.yes += 1;
                    st.first_yes.get_or_insert(idx);
                    let s = ls_score(h, ev.expected_steps);
                    st.ls_best = keep_smaller(st.ls_best, Some((s, idx)));
                }
                Acceptance::Undecided => {
                    st.undecided += 1;
                    st.first_undecided.get_or_insert(idx);
                    let s = ls_score(h, ev.expected_steps);
                    st.ls_undecided = Some(st.ls_undecided.map_or(s, |u: f64| u.min(s)));
                }
                Acceptance::No => {}
            }
            st.ratio_best = keep_smaller(st.ratio_best, Some((ratio_score(h, resp.mean), idx)))
                .filter(|b| b.0.is_finite());
            if st.first_max.is_none() && resp.exact && (resp.mean - self.r_max).abs() <= EXACT_SLACK
            {
                st.first_max = Some(idx);
            }
        }
        st
    }

    fn length(&self, h: u32) -> Stats {
        let n = stratum_size(h, self.task.machine());
        let chunks = n.div_ceil(CHUNK);
        let parts: Vec<Stats> = (0..chunks)
            .into_par_iter()
            .map(|ci| {
                let start = ci * CHUNK;
                self.chunk(h, start, CHUNK.min(n - start))
            })
            .collect();
        parts.into_iter().fold(Stats::default(), Stats::merge)
    }
}

fn stratum_size(h: u32, cfg: &MachineConfig) -> u128 {
    let n = count_programs(h, cfg);
    u128::try_from(n).unwrap_or(u128::MAX)
}

/// Everything the record builders need about one task.
struct Outcome {
    /// `(length, stats)` for every scanned length, shortest first.
    lengths: Vec<(u32, Stats)>,
    r_max: f64,
    unreachable: bool,
}

fn log2_tau(task: &Task) -> f64 {
    (task.tau() as f64).log2()
}

/// Whether scanning lengths `>= h` can still change the record of `kind`.
fn still_open(kind: DifficultyKind, out: &Outcome, h: u32, task: &Task) -> bool {
    let seen = |f: &dyn Fn(&Stats) -> bool| out.lengths.iter().any(|(_, s)| f(s));
    match kind {
        DifficultyKind::RandBaseline => false,
        DifficultyKind::MinLength => {
            !out.unreachable && !seen(&|s| s.first_yes.is_some() || s.first_undecided.is_some())
        }
        DifficultyKind::Multi => !out.unreachable,
        DifficultyKind::Ls => {
            if out.unreachable {
                return false;
            }
            match best_ls(out) {
                Some((b, _, _)) => (h as f64 + log2_tau(task)) < b,
                None => true,
            }
        }
        DifficultyKind::Ratio => {
            if out.r_max <= 0.0 {
                return false;
            }
            match best_ratio(out) {
                Some((b, _, _)) => (h as f64) < b,
                None => true,
            }
        }
        DifficultyKind::MaxResponse => !seen(&|s| s.first_max.is_some()),
    }
}

fn run(
    task: &Task,
    search: &SearchConfig,
    kinds: &[DifficultyKind],
) -> Result<Outcome, DifficultyError> {
    let cfg = task.machine();
    search.validate(cfg)?;
    let r_max = max_achievable_response(task)?;
    let th = search.tolerance.threshold();
    let mut out = Outcome {
        lengths: Vec::new(),
        r_max,
        unreachable: r_max < th - EXACT_SLACK,
    };
    let scan = Scan {
        task,
        search,
        r_max,
    };
    let c = cfg.word_bits as u32;
    let mut h = c;
    while h <= search.l_max {
        if !kinds.iter().any(|&k| still_open(k, &out, h, task)) {
            break;
        }
        let st = scan.length(h);
        out.lengths.push((h, st));
        h += c;
    }
    Ok(out)
}

fn best_ls(out: &Outcome) -> Option<(f64, u32, u128)> {
    let mut best: Option<(f64, u32, u128)> = None;
    for (h, s) in &out.lengths {
        if let Some((v, i)) = s.ls_best {
            if best.is_none_or(|b| v < b.0) {
                best = Some((v, *h, i));
            }
        }
    }
    best
}

fn best_ratio(out: &Outcome) -> Option<(f64, u32, u128)> {
    let mut best: Option<(f64, u32, u128)> = None;
    for (h, s) in &out.lengths {
        if let Some((v, i)) = s.ratio_best {
            if best.is_none_or(|b| v < b.0) {
                best = Some((v, *h, i));
            }
        }
    }
    best
}

fn hex_at(h: u32, idx: u128, cfg: &MachineConfig) -> String {
    program_at(h, idx, cfg)
        .expect("index inside its stratum")
        .to_hex()
}

struct Builder<'a> {
    task: &'a Task,
    search: &'a SearchConfig,
    out: &'a Outcome,
}

impl Builder<'_> {
    fn record(
        &self,
        kind: DifficultyKind,
        value: Option<f64>,
        value_low: Option<f64>,
        witness_hex: Option<String>,
        status: Status,
    ) -> DifficultyRecord {
        DifficultyRecord {
            task_id: self.task.id().to_string(),
            kind,
            epsilon: self.search.tolerance.epsilon,
            tau: self.task.tau(),
            l_max: self.search.l_max,
            value,
            value_low,
            witness_hex,
            status,
        }
    }

    fn cfg(&self) -> &MachineConfig {
        self.task.machine()
    }

    fn c(&self) -> u32 {
        self.cfg().word_bits as u32
    }

    fn infinite(&self, kind: DifficultyKind) -> DifficultyRecord {
        self.record(kind, None, None, None, Status::Infinite)
    }

    fn min_length(&self) -> Result<DifficultyRecord, DifficultyError> {
        let kind = DifficultyKind::MinLength;
        if self.out.unreachable {
            return Ok(self.infinite(kind));
        }
        for (h, s) in &self.out.lengths {
            if let Some(u) = s.first_undecided {
                if s.first_yes.is_none_or(|y| u < y) {
                    return Err(DifficultyError::UndecidedAtFrontier {
                        length: *h,
                        policy_hex: hex_at(*h, u, self.cfg()),
                    });
                }
            }
            if let Some(y) = s.first_yes {
                let w = hex_at(*h, y, self.cfg());
                return Ok(self.record(kind, Some(*h as f64), None, Some(w), Status::Exact));
            }
        }
        let l = self.search.l_max;
        let bound = (l / self.c() + 1) * self.c();
        Ok(self.record(kind, Some(bound as f64), None, None, Status::LowerBound(l)))
    }

    fn multi(&self) -> Result<DifficultyRecord, DifficultyError> {
        let kind = DifficultyKind::Multi;
        if self.out.unreachable {
            return Ok(self.infinite(kind));
        }
        let mut accepted = 0.0;
        let mut undecided = 0.0;
        let mut witness = None;
        for (h, s) in &self.out.lengths {
            let w = 2f64.powi(-2 * *h as i32);
            accepted += s.yes as f64 * w;
            undecided += s.undecided as f64 * w;
            if witness.is_none() {
                witness = s.first_yes.map(|y| hex_at(*h, y, self.cfg()));
            }
        }
        let l = self.search.l_max;
        let tail = multi_tail_mass(l, self.cfg());
        let low = -0.5 * (accepted + undecided + tail).log2();
        if accepted > 0.0 {
            let v = -0.5 * accepted.log2();
            Ok(self.record(kind, Some(v), Some(low), witness, Status::Exact))
        } else {
            Ok(self.record(kind, Some(low), Some(low), None, Status::LowerBound(l)))
        }
    }

    fn ls(&self) -> Result<DifficultyRecord, DifficultyError> {
        let kind = DifficultyKind::Ls;
        if self.out.unreachable {
            return Ok(self.infinite(kind));
        }
        let l = self.search.l_max;
        let floor = ((l / self.c() + 1) * self.c()) as f64 + log2_tau(self.task);
        let best = best_ls(self.out);
        for (h, s) in &self.out.lengths {
            if let Some(u) = s.ls_undecided {
                if best.is_none_or(|b| u < b.0) {
                    let idx = s.first_undecided.expect("undecided score implies an index");
                    return Err(DifficultyError::UndecidedAtFrontier {
                        length: *h,
                        policy_hex: hex_at(*h, idx, self.cfg()),
                    });
                }
            }
        }
        Ok(match best {
            Some((v, h, i)) => {
                let w = Some(hex_at(h, i, self.cfg()));
                if v <= floor {
                    self.record(kind, Some(v), None, w, Status::Exact)
                } else {
                    self.record(kind, Some(v), Some(floor), w, Status::UpperBound(l))
                }
            }
            None => self.record(kind, Some(floor), None, None, Status::LowerBound(l)),
        })
    }

    fn rand_baseline(&self) -> DifficultyRecord {
        let value = match self.task.family() {
            Family::Heaven => 1.0,
            Family::Hell => 0.0,
            Family::Track => 1.0 / self.cfg().alphabet() as f64,
        };
        let w = Program::from_body(&[Opcode::Rand.word(), Opcode::Write.word()], self.cfg())
            .ok()
            .map(|p| p.to_hex());
        self.record(
            DifficultyKind::RandBaseline,
            Some(value),
            None,
            w,
            Status::Exact,
        )
    }

    fn ratio(&self) -> DifficultyRecord {
        let kind = DifficultyKind::Ratio;
        if self.out.r_max <= 0.0 {
            return self.infinite(kind);
        }
        let l = self.search.l_max;
        let floor = ((l / self.c() + 1) * self.c()) as f64;
        match best_ratio(self.out) {
            Some((v, h, i)) => {
                let w = Some(hex_at(h, i, self.cfg()));
                if v <= floor {
                    self.record(kind, Some(v), None, w, Status::Exact)
                } else {
                    self.record(kind, Some(v), Some(floor), w, Status::UpperBound(l))
                }
            }
            None => self.record(kind, Some(floor), None, None, Status::LowerBound(l)),
        }
    }

    fn max_response(&self) -> DifficultyRecord {
        let kind = DifficultyKind::MaxResponse;
        for (h, s) in &self.out.lengths {
            if let Some(i) = s.first_max {
                let w = Some(hex_at(*h, i, self.cfg()));
                return self.record(kind, Some(*h as f64), None, w, Status::Exact);
            }
        }
        let l = self.search.l_max;
        let bound = (l / self.c() + 1) * self.c();
        self.record(kind, Some(bound as f64), None, None, Status::LowerBound(l))
    }

    fn build(&self, kind: DifficultyKind) -> Result<DifficultyRecord, DifficultyError> {
        match kind {
            DifficultyKind::MinLength => self.min_length(),
            DifficultyKind::Multi => self.multi(),
            DifficultyKind::Ls => self.ls(),
            DifficultyKind::RandBaseline => Ok(self.rand_baseline()),
            DifficultyKind::Ratio => Ok(self.ratio()),
            DifficultyKind::MaxResponse => Ok(self.max_response()),
        }
    }
}

fn records(
    task: &Task,
    search: &SearchConfig,
    kinds: &[DifficultyKind],
) -> Result<Vec<DifficultyRecord>, DifficultyError> {
    let out = run(task, search, kinds)?;
    let b = Builder {
        task,
        search,
        out: &out,
    };
    kinds.iter().map(|&k| b.build(k)).collect()
}

/// One difficulty kind for one task.
pub fn difficulty(
    task: &Task,
    search: &SearchConfig,
    kind: DifficultyKind,
) -> Result<DifficultyRecord, DifficultyError> {
    Ok(records(task, search, &[kind])?.remove(0))
}

/// Length of the shortest acceptable policy; ties go to the
/// lexicographically smallest encoding.
pub fn difficulty_min_length(
    task: &Task,
    search: &SearchConfig,
) -> Result<DifficultyRecord, DifficultyError> {
    difficulty(task, search, DifficultyKind::MinLength)
}

/// `-0.5 log2 sum 2^-2L(pi)` over acceptable policies up to `l_max`.
/// `value_low` accounts for every longer program and every undecided one.
pub fn difficulty_multi(
    task: &Task,
    search: &SearchConfig,
) -> Result<DifficultyRecord, DifficultyError> {
    difficulty(task, search, DifficultyKind::Multi)
}

/// Minimum of `L(pi) + log2 E[steps]` over acceptable policies.
pub fn difficulty_ls(
    task: &Task,
    search: &SearchConfig,
) -> Result<DifficultyRecord, DifficultyError> {
    difficulty(task, search, DifficultyKind::Ls)
}

/// Random-agent response, length/response ratio and shortest maximal
/// policy, in that order.
pub fn difficulty_baselines(
    task: &Task,
    search: &SearchConfig,
) -> Result<[DifficultyRecord; 3], DifficultyError> {
    let mut v = records(
        task,
        search,
        &[
            DifficultyKind::RandBaseline,
            DifficultyKind::Ratio,
            DifficultyKind::MaxResponse,
        ],
    )?
    .into_iter();
    Ok([
        v.next().expect("three records"),
        v.next().expect("three records"),
        v.next().expect("three records"),
    ])
}

/// Every kind in [`DifficultyKind::ALL`] order from a single enumeration.
pub fn difficulty_profile(
    task: &Task,
    search: &SearchConfig,
) -> Result<Vec<DifficultyRecord>, DifficultyError> {
    records(task, search, &DifficultyKind::ALL)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::refmachine::Opcode::*;
    use crate::tasks::{make_degenerate, make_track_task, Degenerate};

    fn cfg() -> MachineConfig {
        MachineConfig::default()
    }

    fn search(l_max: u32) -> SearchConfig {
        SearchConfig {
            l_max,
            ..Default::default()
        }
    }

    fn track(ops: &[u16]) -> Task {
        let g = Program::from_body(ops, &cfg()).unwrap();
        make_track_task(&g, 4, 0, &cfg()).unwrap()
    }

    #[test]
    fn heaven_is_the_empty_program() {
        let t = make_degenerate(Degenerate::Heaven, 4, &cfg()).unwrap();
        let r = difficulty_min_length(&t, &search(12)).unwrap();
        assert_eq!(r.value, Some(4.0));
        assert_eq!(r.status, Status::Exact);
        assert_eq!(r.witness_hex.as_deref(), Some("f"));
    }

    #[test]
    fn hell_is_infinite_without_search() {
        let t = make_degenerate(Degenerate::Hell, 4, &cfg()).unwrap();
        let prof = difficulty_profile(&t, &search(20)).unwrap();
        for r in &prof[..3] {
            assert_eq!(r.status, Status::Infinite);
            assert_eq!(r.value, None);
        }
        assert_eq!(prof[3].value, Some(0.0));
        assert_eq!(prof[4].status, Status::Infinite);
        assert_eq!(prof[5].value, Some(4.0));
    }

    #[test]
    fn constant_stream_needs_one_write() {
        let t = track(&[Write.word()]);
        let r = difficulty_min_length(&t, &search(16)).unwrap();
        assert_eq!(r.value, Some(8.0));
        assert_eq!(r.witness_hex.as_deref(), Some("2f"));
    }

    #[test]
    fn exhausted_search_is_a_lower_bound() {
        let t = track(&[Write.word(), Inc.word(), Inc.word(), Inc.word(), Inc.word()]);
        let r = difficulty_min_length(&t, &search(8)).unwrap();
        assert_eq!(r.status, Status::LowerBound(8));
        assert_eq!(r.value, Some(12.0));
        assert_eq!(r.witness_hex, None);
    }

    #[test]
    fn heaven_multi_matches_closed_form() {
        let t = make_degenerate(Degenerate::Heaven, 4, &cfg()).unwrap();
        let r = difficulty_multi(&t, &search(12)).unwrap();
        let closed = 0.5 * 241f64.log2();
        let (v, low) = (r.value.unwrap(), r.value_low.unwrap());
        assert!(
            low <= closed + 1e-12 && closed <= v + 1e-12,
            "{low} {closed} {v}"
        );
        assert!((low - closed).abs() < 1e-12);
        assert!(v <= 4.0 && low >= 1.5);
    }

    #[test]
    fn heaven_ls_prefers_writing_over_idling() {
        let t = make_degenerate(Degenerate::Heaven, 4, &cfg()).unwrap();
        let r = difficulty_ls(&t, &search(12)).unwrap();
        // [WRITE] spends 1 step per interaction: 8 + log2 4.
        assert_eq!(r.value, Some(10.0));
        assert_eq!(r.witness_hex.as_deref(), Some("2f"));
        assert_eq!(r.status, Status::Exact);
        // The END-only program alone would score 4 + log2(4 * 256).
        assert_eq!(ls_score(4, 4.0 * 256.0), 14.0);
    }

    #[test]
    fn profile_matches_standalone_operations() {
        for t in [
            track(&[Write.word(), Inc.word(), Inc.word(), Inc.word()]),
            track(&[Write.word(), Inc.word()]),
            make_degenerate(Degenerate::Heaven, 4, &cfg()).unwrap(),
            make_degenerate(Degenerate::Hell, 4, &cfg()).unwrap(),
        ] {
            let s = search(16);
            let prof = difficulty_profile(&t, &s).unwrap();
            for (k, r) in DifficultyKind::ALL.iter().zip(&prof) {
                assert_eq!(&difficulty(&t, &s, *k).unwrap(), r, "{k:?}");
            }
            let base = difficulty_baselines(&t, &s).unwrap();
            assert_eq!(base.to_vec(), prof[3..].to_vec());
        }
    }

    #[test]
    fn thread_count_does_not_change_records() {
        let t = track(&[Write.word(), Inc.word(), Inc.word()]);
        let s = search(16);
        let one = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap();
        let four = rayon::ThreadPoolBuilder::new()
            .num_threads(4)
            .build()
            .unwrap();
        let a = one.install(|| difficulty_profile(&t, &s)).unwrap();
        let b = four.install(|| difficulty_profile(&t, &s)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn larger_epsilon_never_raises_difficulty() {
        let t = track(&[Write.word(), Inc.word(), Inc.word(), Inc.word()]);
        let mut prev = f64::INFINITY;
        for eps in [0.05, 0.3, 0.55, 0.8] {
            let s = SearchConfig {
                tolerance: ToleranceConfig::new(eps).unwrap(),
                l_max: 16,
                ..Default::default()
            };
            let v = difficulty_min_length(&t, &s).unwrap().value.unwrap();
            assert!(v <= prev);
            prev = v;
        }
    }

    #[test]
    fn ratio_and_max_response_baselines() {
        let heaven = make_degenerate(Degenerate::Heaven, 4, &cfg()).unwrap();
        let [rb, ratio, maxr] = difficulty_baselines(&heaven, &search(8)).unwrap();
        assert_eq!(rb.value, Some(1.0));
        assert_eq!(ratio.value, Some(4.0));
        assert_eq!(maxr.value, Some(4.0));
        let t = track(&[Write.word()]);
        let [rb, ratio, maxr] = difficulty_baselines(&t, &search(12)).unwrap();
        assert_eq!(rb.value, Some(1.0 / 16.0));
        assert_eq!(rb.witness_hex.as_deref(), Some("b2f"));
        assert_eq!(ratio.value, Some(8.0));
        assert_eq!(ratio.status, Status::Exact);
        assert_eq!(maxr.value, Some(8.0));
    }

    #[test]
    fn bad_configuration_is_rejected() {
        let t = track(&[Write.word()]);
        assert!(matches!(
            difficulty_min_length(&t, &search(3)),
            Err(DifficultyError::LengthBelowWord { .. })
        ));
    }
}
