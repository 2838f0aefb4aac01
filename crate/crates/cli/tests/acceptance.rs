//! Acceptance suite: one PASS/FAIL line per criterion on standard output.
//!
//! Run with `cargo test -p pdiff-cli --test acceptance -- --nocapture` to
//! see the lines interleaved with cargo's output; they are written straight
//! to stdout and appear either way.

#[path = "../../core/tests/oracle/mod.rs"]
mod oracle;

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use pdiff_core::aggregate::{
    ctest_score, decompose_check, psi_weighted, response_curve, AggregateError, BankDistribution,
    CTestItem, TaskProb, WeightScheme,
};
use pdiff_core::bank::{build_bank, BankConfig, TaskBank};
use pdiff_core::difficulty::{
    check_strong_boundedness, difficulty_min_length, DifficultyKind, DifficultyRecord,
    SearchConfig, Status,
};
use pdiff_core::refmachine::{
    approx_base, coding_table, count_programs, programs_up_to, MachineConfig, Program,
};
use pdiff_core::tasks::{
    estimate_task_complexity, evaluate, make_degenerate, make_track_task, max_achievable_response,
    render_stream, Degenerate, EvalOptions, Family, Task,
};

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if $cond {
        } else {
            return Err(format!($($fmt)+));
        }
    };
}

fn m() -> MachineConfig {
    MachineConfig::default()
}

fn oracle_task(t: &Task) -> oracle::OracleTask {
    match t.family() {
        Family::Track => oracle::OracleTask::Track(t.stream().to_vec()),
        Family::Heaven => oracle::OracleTask::Heaven(t.tau()),
        Family::Hell => oracle::OracleTask::Hell(t.tau()),
    }
}

/// The 50-task bank shared by several criteria: exact difficulties up to
/// 20 bits.
fn shared_bank() -> &'static TaskBank {
    static BANK: OnceLock<TaskBank> = OnceLock::new();
    BANK.get_or_init(|| {
        build_bank(&BankConfig {
            l_max_generator: 16,
            l_max_policy: 20,
            h_max: 20,
            sample_size: 50,
            ..Default::default()
        })
        .expect("shared bank builds")
    })
}

fn coding() -> Outcome {
    let mut checked = 0;
    for (c, printed) in [(4u8, "1.0625"), (12, "1.000244")] {
        let cfg = MachineConfig::with_word_bits(c).unwrap();
        let rows = coding_table(128, &cfg);
        ensure!(rows.len() == 128, "c={c}: {} rows", rows.len());
        let q = 1.0 - 2f64.powi(-(c as i32));
        for r in &rows {
            let h = r.h;
            let expect = if h % c as u32 == 0 {
                let words = (h / c as u32 - 1) as i32;
                (((1u64 << c) - 1) as f64).powi(words) * 2f64.powi(-(h as i32))
            } else {
                0.0
            };
            ensure!(
                (r.exact - expect).abs() <= 1e-12 * expect.max(f64::MIN_POSITIVE),
                "c={c} h={h}: p={} expected {expect}",
                r.exact
            );
            let n = count_programs(h, &cfg);
            ensure!(n.to_string() == r.count, "c={c} h={h}: count mismatch");
        }
        for w in rows.windows(c as usize + 1) {
            let (a, b) = (&w[0], &w[c as usize]);
            if a.exact > 0.0 {
                let ratio = b.exact / a.exact;
                ensure!(
                    (ratio - q).abs() <= 1e-12,
                    "c={c} h={}: ratio {ratio} vs {q}",
                    a.h
                );
                checked += 1;
            }
        }
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("coding.csv");
        let cs = c.to_string();
        pdiff_cli::run([
            "pdiff",
            "coding",
            "--c",
            &cs,
            "--hmax",
            "128",
            "--out",
            out.to_str().unwrap(),
        ])
        .map_err(|e| e.to_string())?;
        let text = fs::read_to_string(&out).unwrap();
        let b_col: Vec<&str> = text
            .lines()
            .skip(1)
            .map(|l| l.rsplit(',').next().unwrap())
            .collect();
        ensure!(
            b_col.iter().all(|b| *b == printed),
            "c={c}: b printed as {:?}, raw {}",
            b_col.first(),
            approx_base(&cfg)
        );
    }
    Ok(format!(
        "{checked} decay ratios within 1e-12; b = 1.0625 and 1.000244"
    ))
}

fn decomposition() -> Outcome {
    let agents = ["f", "2f", "32f", "b2f", "12f", "b32f", "1332f"];
    let opts = EvalOptions::default();
    let mut worst: f64 = 0.0;
    let mut cases = 0;
    let mut sizes = Vec::new();
    for seed in 0..20u64 {
        let bank = build_bank(&BankConfig {
            l_max_generator: 20,
            l_max_policy: 12,
            h_max: 12,
            sample_size: 120,
            seed,
            ..Default::default()
        })
        .map_err(|e| e.to_string())?;
        ensure!(bank.len() >= 100, "seed {seed}: only {} tasks", bank.len());
        sizes.push(bank.len());
        let items = bank.items(DifficultyKind::MinLength);
        for prob in [TaskProb::Uniform, TaskProb::TwoPowMinusKhat] {
            let dist = BankDistribution::new(&items, prob).map_err(|e| e.to_string())?;
            for a in agents {
                let pi = Program::from_hex(a, &m()).unwrap();
                let gap = decompose_check(&pi, &items, &dist, &opts).map_err(|e| e.to_string())?;
                ensure!(gap <= 1e-12, "seed {seed} {prob:?} agent {a}: gap {gap}");
                worst = worst.max(gap);
                cases += 1;
            }
        }
    }
    Ok(format!(
        "{cases} cases over 20 banks of {}..{} tasks, max gap {worst:e}",
        sizes.iter().min().unwrap(),
        sizes.iter().max().unwrap()
    ))
}

fn boundedness() -> Outcome {
    let bank = shared_bank();
    let cfg = &bank.config;
    let rows: Vec<(&Task, &DifficultyRecord)> = bank
        .tasks()
        .iter()
        .zip(&bank.records)
        .map(|(t, r)| (t, r.difficulty(DifficultyKind::MinLength).unwrap()))
        .collect();
    let exact = rows
        .iter()
        .filter(|(_, d)| d.status == Status::Exact)
        .count();
    ensure!(exact > 0, "no exact records");
    ensure!(
        rows.iter()
            .all(|(_, d)| d.status != Status::Exact || d.value_or_inf() <= 20.0),
        "exact record above 20 bits"
    );
    let policies: Vec<Program> = programs_up_to(20, &m()).collect();
    let rep = check_strong_boundedness(&policies, &rows, &cfg.tolerance(), &cfg.eval_options());
    ensure!(
        rep.violations.is_empty(),
        "{} violations, first {:?}",
        rep.violations.len(),
        rep.violations.first()
    );
    ensure!(
        rep.undecided.is_empty(),
        "{} undecided pairs",
        rep.undecided.len()
    );

    let i = rows
        .iter()
        .position(|(t, d)| d.status == Status::Exact && t.family() == Family::Track)
        .ok_or("no exact track record")?;
    let mut corrupted = rows[i].1.clone();
    corrupted.value = corrupted.value.map(|v| v + 4.0);
    let mutant = vec![(rows[i].0, &corrupted)];
    let bad = check_strong_boundedness(&policies, &mutant, &cfg.tolerance(), &cfg.eval_options());
    ensure!(!bad.violations.is_empty(), "mutation not detected");
    Ok(format!(
        "{} policies x {} tasks, {} pairs checked, 0 violations; mutant gives {}",
        policies.len(),
        rows.len(),
        rep.pairs_checked,
        bad.violations.len()
    ))
}

fn multi_bounds() -> Outcome {
    let bank = shared_bank();
    let mut n = 0;
    for r in &bank.records {
        let min = r.difficulty(DifficultyKind::MinLength).unwrap();
        let multi = r.difficulty(DifficultyKind::Multi).ok_or("multi missing")?;
        if min.status != Status::Exact {
            continue;
        }
        let k = min.value.unwrap();
        let hi = multi.value.ok_or("multi has no value")?;
        let lo = multi.value_low.unwrap_or(hi);
        ensure!(
            0.5 * (k - 1.0) <= lo + 1e-12 && lo <= hi && hi <= k + 1e-12,
            "{}: k={k}, multi in [{lo}, {hi}]",
            r.spec.id
        );
        n += 1;
    }
    ensure!(n > 0, "no exact records");
    Ok(format!(
        "{n} exact tasks satisfy 0.5(k-1) <= [low, value] <= k"
    ))
}

fn endpoints() -> Outcome {
    let heaven = make_degenerate(Degenerate::Heaven, 4, &m()).unwrap();
    let hell = make_degenerate(Degenerate::Hell, 4, &m()).unwrap();
    let h = difficulty_min_length(&heaven, &SearchConfig::default()).map_err(|e| e.to_string())?;
    ensure!(
        h.status == Status::Exact && h.value == Some(4.0),
        "heaven: {:?} {:?}",
        h.status,
        h.value
    );
    ensure!(
        max_achievable_response(&hell) == Ok(0.0),
        "hell optimum not 0"
    );
    // A bound no enumeration could ever exhaust: the answer must come from
    // the optimum, not from the search.
    let huge = SearchConfig {
        l_max: 4000,
        ..Default::default()
    };
    let t0 = Instant::now();
    let d = difficulty_min_length(&hell, &huge).map_err(|e| e.to_string())?;
    ensure!(
        d.status == Status::Infinite && d.value.is_none(),
        "hell: {:?}",
        d.status
    );
    ensure!(
        t0.elapsed() < Duration::from_millis(100),
        "hell took {:?}",
        t0.elapsed()
    );
    Ok("heaven = 4 bits (exact, witness f); hell infinite at l_max 4000".into())
}

fn witness_oracle() -> Outcome {
    let bank = shared_bank();
    ensure!(bank.len() == 50, "bank has {} tasks", bank.len());
    let eps = bank.config.epsilon;
    let (mut found, mut none) = (0, 0);
    for (t, r) in bank.tasks().iter().zip(&bank.records) {
        let d = r.difficulty(DifficultyKind::MinLength).unwrap();
        match oracle::shortest_acceptable(&oracle_task(t), eps, 4) {
            Some(body) => {
                ensure!(
                    d.status == Status::Exact
                        && d.value == Some(oracle::bits(&body) as f64)
                        && d.witness_hex.as_deref() == Some(oracle::hex(&body).as_str()),
                    "{}: oracle {} ({} bits), record {:?} {:?} {:?}",
                    t.id(),
                    oracle::hex(&body),
                    oracle::bits(&body),
                    d.status,
                    d.value,
                    d.witness_hex
                );
                found += 1;
            }
            None => {
                ensure!(
                    d.status != Status::Exact,
                    "{}: oracle finds nothing, record exact {:?}",
                    t.id(),
                    d.value
                );
                none += 1;
            }
        }
    }
    Ok(format!(
        "{found} witnesses identical, {none} tasks with no policy <= 20 bits on both sides"
    ))
}

fn ctest() -> Outcome {
    let opts = EvalOptions::default();
    let gens: [&[u16]; 8] = [
        &[2],
        &[2, 2],
        &[2, 3],
        &[2, 4],
        &[2, 3, 3, 3],
        &[2, 4, 4, 4],
        &[3, 2, 3, 3],
        &[3, 3, 2, 3],
    ];
    let mut tasks = Vec::new();
    for g in gens {
        let t = make_track_task(&Program::from_body(g, &m()).unwrap(), 4, 0, &m()).unwrap();
        let k = estimate_task_complexity(&t, 20).k_hat;
        tasks.push((t, k));
    }
    let mut by_h: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
    for (i, (_, k)) in tasks.iter().enumerate() {
        by_h.entry(*k).or_default().push(i);
    }
    let per = by_h.values().map(Vec::len).min().unwrap();
    let items: Vec<CTestItem> = by_h
        .iter()
        .flat_map(|(h, v)| {
            v.iter().take(per).map(|&i| CTestItem {
                task: &tasks[i].0,
                h: *h,
            })
        })
        .collect();
    ensure!(by_h.len() >= 2, "only {} strata", by_h.len());

    for agent in ["2f", "32f", "12f", "1312f", "f"] {
        let pi = Program::from_hex(agent, &m()).unwrap();
        let rep = ctest_score(&pi, &items, 0.0, &opts).map_err(|e| e.to_string())?;
        let mut expect = 0.0;
        for h in by_h.keys() {
            let members: Vec<&CTestItem> = items.iter().filter(|i| i.h == *h).collect();
            let hits: f64 = members
                .iter()
                .map(|i| evaluate(&pi, i.task, &opts).final_hit)
                .sum();
            expect += hits / members.len() as f64;
        }
        ensure!(
            rep.value == expect,
            "agent {agent}: {} vs {expect}",
            rep.value
        );
        let rows: f64 = rep.rows.iter().map(|r| r.hit_ratio).sum();
        ensure!(rep.value == rows, "agent {agent}: rows sum {rows}");
    }

    // a, d, g, j -> m.
    let g = Program::from_body(&[2, 3, 3, 3], &m()).unwrap();
    let t = make_track_task(&g, 4, 0, &m()).unwrap();
    ensure!(
        render_stream(t.stream()) == "a,d,g,j,m",
        "stream {}",
        render_stream(t.stream())
    );
    let d = difficulty_min_length(&t, &SearchConfig::default()).map_err(|e| e.to_string())?;
    let w = d.witness(&m()).ok_or("no witness")?;
    let acts = oracle::rollout(w.body(), &oracle_task(&t)).ok_or("witness uses RAND")?;
    let last = acts.last().copied().flatten();
    ensure!(last == Some(12), "final answer {last:?}");
    Ok(format!(
        "e=0 equals sum of hit ratios over {} strata x {per}; witness {} ({} bits) answers m",
        by_h.len(),
        w.to_hex(),
        w.length_bits()
    ))
}

fn ls_dominance() -> Outcome {
    let bank = shared_bank();
    for r in &bank.records {
        let min = r.difficulty(DifficultyKind::MinLength).unwrap();
        let ls = r.difficulty(DifficultyKind::Ls).ok_or("ls missing")?;
        ensure!(
            ls.value_or_inf() >= min.value_or_inf(),
            "{}: ls {:?} < min {:?}",
            r.spec.id,
            ls.value,
            min.value
        );
        if let Some(low) = ls.value_low {
            ensure!(
                low >= min.value_or_inf() || min.status != Status::Exact,
                "{}: ls low {low}",
                r.spec.id
            );
        }
    }
    let items = bank.items(DifficultyKind::Ls);
    let pi = Program::from_hex("2f", &m()).unwrap();
    let tol = bank.config.tolerance();
    let opts = bank.config.eval_options();
    let refused = psi_weighted(
        &pi,
        &items,
        &tol,
        &WeightScheme::One,
        TaskProb::Uniform,
        None,
        &opts,
    );
    ensure!(
        matches!(refused, Err(AggregateError::UnboundedAggregation)),
        "not refused: {refused:?}"
    );
    let capped = psi_weighted(
        &pi,
        &items,
        &tol,
        &WeightScheme::One,
        TaskProb::Uniform,
        Some(40.0),
        &opts,
    );
    ensure!(capped.is_ok(), "capped aggregation failed: {capped:?}");
    Ok(format!(
        "{} tasks dominated; uncapped LS sum refused",
        bank.len()
    ))
}

fn curve_tail() -> Outcome {
    let bank = shared_bank();
    let items = bank.items(DifficultyKind::MinLength);
    let tol = bank.config.tolerance();
    let opts = bank.config.eval_options();
    let agents = [
        "f", "2f", "12f", "32f", "b2f", "132f", "2332f", "1262f", "b132f", "12632f",
    ];
    let mut zeros = 0;
    for a in agents {
        let pi = Program::from_hex(a, &m()).unwrap();
        let len = pi.length_bits() as f64;
        let c = response_curve(&pi, &items, &tol, TaskProb::Uniform, 200.0, &opts);
        for p in &c.points {
            if p.h > len {
                ensure!(
                    p.psi_h == 0.0 && p.n_undecided == 0,
                    "agent {a} ({len} bits): psi at h={} is {} ({} undecided)",
                    p.h,
                    p.psi_h,
                    p.n_undecided
                );
                zeros += 1;
            }
        }
    }
    Ok(format!(
        "10 agents, {zeros} strata above the agent length all zero"
    ))
}

fn pipeline(threads: &str, dir: &std::path::Path) -> Result<Vec<(String, Vec<u8>)>, String> {
    let p = |n: &str| dir.join(n).to_str().unwrap().to_string();
    let cfg = p("bank.kv");
    fs::write(
        &cfg,
        "l_max_generator = 16\nl_max_policy = 16\nh_max = 16\nsample_size = 40\nseed = 7\n",
    )
    .unwrap();
    let bank = p("bank.jsonl");
    let runs: Vec<Vec<String>> = vec![
        vec![
            "build".into(),
            "--config".into(),
            cfg.clone(),
            "--out".into(),
            bank.clone(),
        ],
        vec![
            "verify".into(),
            "--bank".into(),
            bank.clone(),
            "--out".into(),
            p("verify.json"),
        ],
        vec![
            "difficulty".into(),
            "--bank".into(),
            bank.clone(),
            "--out".into(),
            p("difficulty.csv"),
        ],
        vec![
            "curve".into(),
            "--bank".into(),
            bank.clone(),
            "--agent".into(),
            "32f".into(),
            "--out".into(),
            p("curve.csv"),
        ],
        vec![
            "curve".into(),
            "--bank".into(),
            bank.clone(),
            "--agent".into(),
            "b2f".into(),
            "--format".into(),
            "svg".into(),
            "--out".into(),
            p("curve.svg"),
        ],
        vec![
            "aggregate".into(),
            "--bank".into(),
            bank.clone(),
            "--agent".into(),
            "32f".into(),
            "--weights".into(),
            "geometric:2".into(),
            "--out".into(),
            p("aggregate.json"),
        ],
        vec![
            "ctest".into(),
            "--bank".into(),
            bank.clone(),
            "--agent".into(),
            "32f".into(),
            "--out".into(),
            p("ctest.csv"),
        ],
        vec![
            "pairs".into(),
            "--bank".into(),
            bank.clone(),
            "--agent".into(),
            "2f".into(),
            "--out".into(),
            p("pairs.json"),
        ],
    ];
    for args in runs {
        let mut full = vec!["pdiff".to_string(), "--threads".into(), threads.into()];
        full.extend(args.iter().cloned());
        pdiff_cli::run(full).map_err(|e| format!("{}: {e}", args[0]))?;
    }
    let mut files: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap())
        .map(|e| {
            (
                e.file_name().to_string_lossy().into_owned(),
                fs::read(e.path()).unwrap(),
            )
        })
        .collect();
    files.sort();
    Ok(files)
}

fn determinism() -> Outcome {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let one = pipeline("1", a.path())?;
    let eight = pipeline("8", b.path())?;
    ensure!(one.len() == eight.len(), "different artifact sets");
    for ((n1, b1), (n2, b2)) in one.iter().zip(&eight) {
        ensure!(n1 == n2, "artifact {n1} vs {n2}");
        ensure!(b1 == b2, "{n1} differs between --threads 1 and 8");
    }
    let bank =
        pdiff_core::bank::load_bank(&a.path().join("bank.jsonl")).map_err(|e| e.to_string())?;
    Ok(format!(
        "{} artifacts byte-identical, digest {}",
        one.len(),
        &bank.digest()[..16]
    ))
}

struct Criterion {
    id: u32,
    name: &'static str,
    limit: Duration,
    run: fn() -> Outcome,
}

#[test]
fn acceptance_criteria() {
    let criteria = [
        Criterion {
            id: 1,
            name: "coding distribution",
            limit: Duration::from_secs(1),
            run: coding,
        },
        Criterion {
            id: 2,
            name: "decomposition identity",
            limit: Duration::from_secs(60),
            run: decomposition,
        },
        Criterion {
            id: 3,
            name: "strong boundedness",
            limit: Duration::from_secs(300),
            run: boundedness,
        },
        Criterion {
            id: 4,
            name: "multi-policy bounds",
            limit: Duration::from_secs(60),
            run: multi_bounds,
        },
        Criterion {
            id: 5,
            name: "difficulty endpoints",
            limit: Duration::from_secs(1),
            run: endpoints,
        },
        Criterion {
            id: 6,
            name: "witness minimality oracle",
            limit: Duration::from_secs(600),
            run: witness_oracle,
        },
        Criterion {
            id: 7,
            name: "c-test semantics",
            limit: Duration::from_secs(60),
            run: ctest,
        },
        Criterion {
            id: 8,
            name: "ls dominance and refusal",
            limit: Duration::from_secs(60),
            run: ls_dominance,
        },
        Criterion {
            id: 9,
            name: "curve tail",
            limit: Duration::from_secs(60),
            run: curve_tail,
        },
        Criterion {
            id: 10,
            name: "determinism",
            limit: Duration::from_secs(900),
            run: determinism,
        },
    ];
    let suite = Instant::now();
    let mut out = std::io::stdout();
    // Built once up front so its cost is not charged to whichever
    // criterion happens to touch it first.
    let t0 = Instant::now();
    let bank = shared_bank();
    let _ = writeln!(
        out,
        "acceptance: shared bank of {} tasks built in {:.1} s",
        bank.len(),
        t0.elapsed().as_secs_f64()
    );
    let mut failed = Vec::new();
    for c in &criteria {
        let t = Instant::now();
        let res = catch_unwind(AssertUnwindSafe(c.run)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        let took = t.elapsed();
        let res = match res {
            Ok(d) if took > c.limit => Err(format!("{d}; over the {:?} limit", c.limit)),
            r => r,
        };
        let (tag, detail) = match &res {
            Ok(d) => ("PASS", d.clone()),
            Err(e) => ("FAIL", e.clone()),
        };
        let _ = writeln!(
            out,
            "criterion {:>2} {tag} {} ({:.2} s): {detail}",
            c.id,
            c.name,
            took.as_secs_f64()
        );
        if res.is_err() {
            failed.push(c.id);
        }
    }
    let total = suite.elapsed();
    let _ = writeln!(
        out,
        "acceptance: {}/{} passed in {:.1} s",
        criteria.len() - failed.len(),
        criteria.len(),
        total.as_secs_f64()
    );
    assert!(total < Duration::from_secs(900), "suite took {total:?}");
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
