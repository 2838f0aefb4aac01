//! Independent brute-force reference used by the integration tests.
//!
//! Deliberately shares no code with the library: its own interpreter
//! (forward propagation of the register distribution, one instruction at
//! a time), its own program listing (plain nested loops) and its own
//! searches. Fixed to `c = 4`.
#![allow(dead_code)]

use std::collections::HashMap;

pub const C: u32 = 4;
pub const END: u16 = 15;
pub const BUDGET: u32 = 256;

const NOP: u16 = 0;
const READ: u16 = 1;
const WRITE: u16 = 2;
const INC: u16 = 3;
const DEC: u16 = 4;
const SWAP: u16 = 5;
const ADD: u16 = 6;
const SUB: u16 = 7;
const LOAD: u16 = 8;
const JMP: u16 = 9;
const JZ: u16 = 10;
const RAND: u16 = 11;
const HALT: u16 = 12;

#[derive(Clone, Debug, PartialEq)]
pub enum OracleTask {
    /// Observations `s_0..s_{tau-1}`, targets `s_1..s_tau`.
    Track(Vec<u16>),
    Heaven(u32),
    Hell(u32),
}

impl OracleTask {
    pub fn tau(&self) -> u32 {
        match self {
            OracleTask::Track(s) => s.len() as u32 - 1,
            OracleTask::Heaven(t) | OracleTask::Hell(t) => *t,
        }
    }

    fn obs(&self, t: usize) -> u16 {
        match self {
            OracleTask::Track(s) => s[t],
            _ => 0,
        }
    }

    fn reward(&self, t: usize, action: Option<u16>) -> f64 {
        match self {
            OracleTask::Heaven(_) => 1.0,
            OracleTask::Hell(_) => 0.0,
            OracleTask::Track(s) => {
                if action == Some(s[t + 1]) {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

/// Every program body of at most `max_words` words (END excluded), shortest
/// first and lexicographic within a length. Written as nested loops.
pub fn bodies_up_to(max_words: usize) -> Vec<Vec<u16>> {
    assert!(max_words <= 4);
    let mut out = vec![vec![]];
    if max_words >= 1 {
        for a in 0..15 {
            out.push(vec![a]);
        }
    }
    if max_words >= 2 {
        for a in 0..15 {
            for b in 0..15 {
                out.push(vec![a, b]);
            }
        }
    }
    if max_words >= 3 {
        for a in 0..15 {
            for b in 0..15 {
                for c in 0..15 {
                    out.push(vec![a, b, c]);
                }
            }
        }
    }
    if max_words >= 4 {
        for a in 0..15 {
            for b in 0..15 {
                for c in 0..15 {
                    for d in 0..15 {
                        out.push(vec![a, b, c, d]);
                    }
                }
            }
        }
    }
    out
}

pub fn bits(body: &[u16]) -> u32 {
    (body.len() as u32 + 1) * C
}

pub fn hex(body: &[u16]) -> String {
    let mut s: String = body.iter().map(|w| format!("{w:x}")).collect();
    s.push('f');
    s
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
struct Regs {
    pc: usize,
    a: u16,
    b: u16,
    dead: bool,
}

fn signed(w: u16) -> i64 {
    if w >= 8 {
        w as i64 - 16
    } else {
        w as i64
    }
}

/// What one instruction does to one register state.
enum Tick {
    Emit(u16, Regs),
    Halt(Regs),
    Branch(Regs),
    Go(Regs),
}

fn tick(body: &[u16], obs: u16, r: Regs) -> Tick {
    let n = body.len() as i64;
    let wrap = |x: i64| x.rem_euclid(n) as usize;
    let op = body[r.pc];
    let mut s = r;
    s.pc = wrap(r.pc as i64 + 1);
    match op {
        WRITE => return Tick::Emit(r.a, s),
        HALT => {
            s.dead = true;
            return Tick::Halt(s);
        }
        RAND => return Tick::Branch(s),
        READ => s.a = obs,
        INC => s.a = (r.a + 1) % 16,
        DEC => s.a = (r.a + 15) % 16,
        SWAP => {
            s.a = r.b;
            s.b = r.a;
        }
        ADD => s.a = (r.a + r.b) % 16,
        SUB => s.a = (r.a + 16 - r.b) % 16,
        LOAD | JMP | JZ => {
            let has_imm = r.pc + 1 < body.len();
            let imm = if has_imm { body[r.pc + 1] } else { 0 };
            let after = r.pc as i64 + if has_imm { 2 } else { 1 };
            s.pc = wrap(after);
            if op == LOAD {
                s.a = imm;
            } else if op == JMP || r.a == 0 {
                s.pc = wrap(after + signed(imm));
            }
        }
        _ => {}
    }
    Tick::Go(s)
}

/// Live register states indexed densely by `(pc, a, b)`.
struct Frontier {
    mass: Vec<f64>,
    listed: Vec<bool>,
    live: Vec<usize>,
}

impl Frontier {
    fn new(len: usize) -> Self {
        Frontier {
            mass: vec![0.0; len * 256],
            listed: vec![false; len * 256],
            live: Vec::new(),
        }
    }

    fn add(&mut self, r: Regs, p: f64) {
        let i = (r.pc * 16 + r.a as usize) * 16 + r.b as usize;
        if !self.listed[i] {
            self.listed[i] = true;
            self.live.push(i);
        }
        self.mass[i] += p;
    }

    fn drain(&mut self) -> Vec<(Regs, f64)> {
        let mut live = std::mem::take(&mut self.live);
        live.sort_unstable();
        live.into_iter()
            .map(|i| {
                let p = std::mem::take(&mut self.mass[i]);
                self.listed[i] = false;
                let r = Regs {
                    pc: i / 256,
                    a: ((i / 16) % 16) as u16,
                    b: (i % 16) as u16,
                    dead: false,
                };
                (r, p)
            })
            .collect()
    }
}

/// Distribution over (action, registers afterwards, charged instructions)
/// for one step started from `start`, pushed forward one instruction at a
/// time.
fn step(body: &[u16], obs: u16, start: Vec<(Regs, f64)>) -> Vec<(Option<u16>, Regs, u32, f64)> {
    let mut out = Vec::new();
    let mut running = Vec::new();
    for (r, p) in start {
        if r.dead || body.is_empty() {
            out.push((None, r, BUDGET, p));
        } else {
            running.push((r, p));
        }
    }
    let mut next = Frontier::new(body.len().max(1));
    for used in 0..BUDGET {
        if running.is_empty() {
            break;
        }
        for (r, p) in running {
            match tick(body, obs, r) {
                Tick::Emit(a, s) => out.push((Some(a), s, used + 1, p)),
                Tick::Halt(s) => out.push((None, s, BUDGET, p)),
                Tick::Go(s) => next.add(s, p),
                Tick::Branch(s) => {
                    for v in 0..16u16 {
                        next.add(Regs { a: v, ..s }, p / 16.0);
                    }
                }
            }
        }
        running = next.drain();
    }
    for (r, p) in running {
        out.push((None, r, BUDGET, p));
    }
    out
}

/// Exact (mean response, expected total instructions).
pub fn score(body: &[u16], task: &OracleTask) -> (f64, f64) {
    run(body, task, None)
}

/// Rolls the episode forward. With a `target` total reward, gives up as
/// soon as even perfect remaining steps cannot reach it.
fn run(body: &[u16], task: &OracleTask, target: Option<f64>) -> (f64, f64) {
    let tau = task.tau() as usize;
    let mut dist: Vec<(Regs, f64)> = vec![(
        Regs {
            pc: 0,
            a: 0,
            b: 0,
            dead: false,
        },
        1.0,
    )];
    let mut reward = 0.0;
    let mut steps = 0.0;
    for t in 0..tau {
        if let Some(goal) = target {
            if reward + ((tau - t) as f64) < goal {
                return (reward / tau as f64, f64::NAN);
            }
        }
        let mut next: HashMap<Regs, f64> = HashMap::new();
        for (act, end, cost, q) in step(body, task.obs(t), dist) {
            reward += q * task.reward(t, act);
            steps += q * cost as f64;
            *next.entry(end).or_insert(0.0) += q;
        }
        let mut v: Vec<_> = next.into_iter().collect();
        v.sort_by_key(|(r, _)| (r.dead, r.pc, r.a, r.b));
        dist = v;
    }
    (reward / tau as f64, steps)
}

pub fn acceptable(body: &[u16], task: &OracleTask, epsilon: f64) -> bool {
    let goal = (1.0 - epsilon - 1e-12) * task.tau() as f64;
    run(body, task, Some(goal)).0 * task.tau() as f64 >= goal
}

/// Shortest acceptable body (lexicographic tie-break) within `max_words`.
pub fn shortest_acceptable(task: &OracleTask, epsilon: f64, max_words: usize) -> Option<Vec<u16>> {
    bodies_up_to(max_words)
        .into_iter()
        .find(|b| acceptable(b, task, epsilon))
}

/// Symbols emitted by a deterministic generator, or `None` if it stalls or
/// uses `RAND`.
pub fn generate(body: &[u16], count: usize) -> Option<Vec<u16>> {
    if body.contains(&RAND) {
        return None;
    }
    let mut r = Regs {
        pc: 0,
        a: 0,
        b: 0,
        dead: false,
    };
    let mut out = Vec::new();
    while out.len() < count {
        let outs = step(body, 0, vec![(r, 1.0)]);
        let (act, end, _, _) = outs[0];
        out.push(act?);
        r = end;
    }
    Some(out)
}

/// Shortest generator reproducing `stream` within `max_words`.
pub fn shortest_generator(stream: &[u16], max_words: usize) -> Option<Vec<u16>> {
    bodies_up_to(max_words)
        .into_iter()
        .find(|b| generate(b, stream.len()).as_deref() == Some(stream))
}

/// Actions of a `RAND`-free policy over the whole episode.
pub fn rollout(body: &[u16], task: &OracleTask) -> Option<Vec<Option<u16>>> {
    if body.contains(&RAND) {
        return None;
    }
    let mut r = Regs {
        pc: 0,
        a: 0,
        b: 0,
        dead: false,
    };
    let mut acts = Vec::new();
    for t in 0..task.tau() as usize {
        let (act, end, _, _) = step(body, task.obs(t), vec![(r, 1.0)])[0];
        acts.push(act);
        r = end;
    }
    Some(acts)
}
