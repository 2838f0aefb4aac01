use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::Path;

use serde::Serialize;

use pdiff_core::aggregate::{
    ctest_score, curve_csv, curve_svg, line_chart_svg, psi_pairs, psi_weighted, response_curve,
    AggregateReport, CTestItem, Series, TaskProb, WeightScheme,
};
use pdiff_core::bank::{
    build_bank, load_bank, materialize_pairs, verify_bank, write_atomic, BankConfig, TaskBank,
};
use pdiff_core::difficulty::{difficulty_profile, DifficultyKind, DifficultyRecord, Status};
use pdiff_core::refmachine::{coding_table, MachineConfig, Program};
use pdiff_core::tasks::{EvalOptions, Family};

use crate::{Cli, CliError, Command, Format, OutputArgs, ProbArg};

pub(crate) fn dispatch(cli: &Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Build {
            config,
            set,
            print_config,
            output,
        } => build(cli, config.as_deref(), set, *print_config, output),
        Command::Verify { bank, output } => verify(&bank.bank, output),
        Command::Difficulty {
            bank,
            kind,
            recompute,
            output,
        } => difficulty(cli, &bank.bank, kind, *recompute, output),
        Command::Curve {
            bank,
            agent,
            max_h,
            task_prob,
            output,
        } => curve(cli, &bank.bank, agent, *max_h, *task_prob, output),
        Command::Aggregate {
            bank,
            agent,
            weights,
            kind,
            task_prob,
            max_h,
            output,
        } => aggregate(
            cli, &bank.bank, agent, weights, kind, *task_prob, *max_h, output,
        ),
        Command::Ctest {
            bank,
            agent,
            exponent,
            items_per_h,
            output,
        } => ctest(cli, &bank.bank, agent, *exponent, *items_per_h, output),
        Command::Coding {
            word_bits,
            hmax,
            output,
        } => coding(*word_bits, *hmax, output),
        Command::Pairs {
            bank,
            agent,
            weights,
            output,
        } => pairs(cli, &bank.bank, agent, weights, output),
    }
}

/// Picks the format, checks it is allowed and writes the rendering.
fn emit(
    output: &OutputArgs,
    allowed: &[Format],
    render: impl FnOnce(Format) -> Result<String, CliError>,
) -> Result<(), CliError> {
    let format = output.format.unwrap_or(allowed[0]);
    if !allowed.contains(&format) {
        return Err(CliError::Config(format!(
            "format {format:?} is not available for this command"
        )));
    }
    let text = render(format)?;
    match &output.out {
        Some(path) => write_atomic(path, text.as_bytes())?,
        None => std::io::stdout().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn json<T: Serialize>(v: &T) -> Result<String, CliError> {
    let mut s = serde_json::to_string_pretty(v).map_err(|e| CliError::Config(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

fn open(path: &Path) -> Result<TaskBank, CliError> {
    if !path.exists() {
        return Err(CliError::Config(format!(
            "bank {} not found",
            path.display()
        )));
    }
    Ok(load_bank(path)?)
}

fn agent(hex: &str, m: &MachineConfig) -> Result<Program, CliError> {
    Program::from_hex(hex, m).map_err(|e| CliError::Config(format!("agent {hex:?}: {e}")))
}

fn eval_opts(cli: &Cli, bank: &TaskBank) -> EvalOptions {
    let mut o = bank.config.eval_options();
    if let Some(s) = cli.seed {
        o.seed = s;
    }
    o
}

fn task_prob(p: ProbArg) -> TaskProb {
    match p {
        ProbArg::Uniform => TaskProb::Uniform,
        ProbArg::Khat => TaskProb::TwoPowMinusKhat,
    }
}

fn kind(name: &str) -> Result<DifficultyKind, CliError> {
    DifficultyKind::parse(name).ok_or_else(|| CliError::Config(format!("unknown kind {name:?}")))
}

fn build(
    cli: &Cli,
    config: Option<&Path>,
    set: &[String],
    print_config: bool,
    output: &OutputArgs,
) -> Result<(), CliError> {
    let mut cfg = match config {
        Some(p) => {
            let text = fs::read_to_string(p)
                .map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?;
            BankConfig::from_kv(&text)?
        }
        None => BankConfig::default(),
    };
    for kv in set {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("--set expects key=value, got {kv:?}")))?;
        cfg.set(k.trim(), v)?;
    }
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    if print_config {
        return emit(output, &[Format::Csv], |_| Ok(cfg.to_kv()));
    }
    let bank = build_bank(&cfg)?;
    eprintln!("built {} tasks, digest {}", bank.len(), bank.digest());
    emit(output, &[Format::Json], |_| {
        Ok(pdiff_core::bank::bank_to_jsonl(&bank))
    })
}

fn verify(path: &Path, output: &OutputArgs) -> Result<(), CliError> {
    let bank = open(path)?;
    let rep = verify_bank(&bank);
    emit(output, &[Format::Json, Format::Csv], |f| match f {
        Format::Csv => {
            let mut s = String::from("check,passed,detail\n");
            for c in &rep.checks {
                let _ = writeln!(
                    s,
                    "{},{},\"{}\"",
                    c.name,
                    c.passed,
                    c.detail.replace('"', "'")
                );
            }
            Ok(s)
        }
        _ => json(&rep),
    })?;
    if rep.passed() {
        Ok(())
    } else {
        let failed: Vec<&str> = rep
            .checks
            .iter()
            .filter(|c| !c.passed)
            .map(|c| c.name.as_str())
            .collect();
        Err(CliError::Verification(failed.join(", ")))
    }
}

fn status_text(s: Status) -> String {
    match s {
        Status::Exact => "exact".into(),
        Status::LowerBound(l) => format!("lower_bound({l})"),
        Status::UpperBound(l) => format!("upper_bound({l})"),
        Status::Infinite => "infinite".into(),
    }
}

fn opt(v: Option<f64>) -> String {
    v.map_or(String::new(), |x| x.to_string())
}

fn difficulty(
    cli: &Cli,
    path: &Path,
    kind_name: &str,
    recompute: bool,
    output: &OutputArgs,
) -> Result<(), CliError> {
    let bank = open(path)?;
    let wanted: Vec<DifficultyKind> = if kind_name == "all" {
        DifficultyKind::ALL.to_vec()
    } else {
        vec![kind(kind_name)?]
    };
    let mut search = bank.config.search();
    search.eval = eval_opts(cli, &bank);
    let mut records: Vec<DifficultyRecord> = Vec::new();
    for (t, r) in bank.tasks().iter().zip(&bank.records) {
        let all = if recompute {
            difficulty_profile(t, &search)?
        } else {
            r.difficulties.clone()
        };
        records.extend(all.into_iter().filter(|d| wanted.contains(&d.kind)));
    }
    emit(output, &[Format::Csv, Format::Json], |f| match f {
        Format::Json => {
            let mut s = String::new();
            for r in &records {
                s.push_str(&serde_json::to_string(r).map_err(|e| CliError::Config(e.to_string()))?);
                s.push('\n');
            }
            Ok(s)
        }
        _ => {
            let mut s =
                String::from("task_id,kind,epsilon,tau,l_max,value,value_low,witness_hex,status\n");
            for r in &records {
                let _ = writeln!(
                    s,
                    "{},{},{},{},{},{},{},{},{}",
                    r.task_id,
                    r.kind.name(),
                    r.epsilon,
                    r.tau,
                    r.l_max,
                    opt(r.value),
                    opt(r.value_low),
                    r.witness_hex.as_deref().unwrap_or(""),
                    status_text(r.status)
                );
            }
            Ok(s)
        }
    })
}

fn curve(
    cli: &Cli,
    path: &Path,
    agent_hex: &str,
    max_h: f64,
    prob: ProbArg,
    output: &OutputArgs,
) -> Result<(), CliError> {
    let bank = open(path)?;
    let pi = agent(agent_hex, &bank.config.machine)?;
    let items = bank.items(DifficultyKind::MinLength);
    let c = response_curve(
        &pi,
        &items,
        &bank.config.tolerance(),
        task_prob(prob),
        max_h,
        &eval_opts(cli, &bank),
    );
    emit(
        output,
        &[Format::Csv, Format::Json, Format::Svg],
        |f| match f {
            Format::Csv => Ok(curve_csv(&c)),
            Format::Svg => Ok(curve_svg(&c)),
            Format::Json => json(&c),
        },
    )
}

fn report_csv(r: &AggregateReport) -> String {
    let mut s = String::from("h,weight,psi_h,n_tasks\n");
    for p in &r.per_h {
        let _ = writeln!(s, "{},{},{},{}", p.h, p.weight, p.psi_h, p.n_tasks);
    }
    let _ = writeln!(s, "total,,{},", r.value);
    s
}

#[allow(clippy::too_many_arguments)]
fn aggregate(
    cli: &Cli,
    path: &Path,
    agent_hex: &str,
    weights: &str,
    kind_name: &str,
    prob: ProbArg,
    max_h: Option<f64>,
    output: &OutputArgs,
) -> Result<(), CliError> {
    let bank = open(path)?;
    let pi = agent(agent_hex, &bank.config.machine)?;
    let w = WeightScheme::parse(weights)?;
    let items = bank.items(kind(kind_name)?);
    let rep = psi_weighted(
        &pi,
        &items,
        &bank.config.tolerance(),
        &w,
        task_prob(prob),
        max_h,
        &eval_opts(cli, &bank),
    )?;
    emit(output, &[Format::Json, Format::Csv], |f| match f {
        Format::Csv => Ok(report_csv(&rep)),
        _ => json(&rep),
    })
}

fn ctest(
    cli: &Cli,
    path: &Path,
    agent_hex: &str,
    exponent: f64,
    items_per_h: Option<usize>,
    output: &OutputArgs,
) -> Result<(), CliError> {
    let bank = open(path)?;
    let pi = agent(agent_hex, &bank.config.machine)?;
    let mut by_h: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
    for (i, r) in bank.records.iter().enumerate() {
        if r.spec.family == Family::Track {
            by_h.entry(r.complexity.k_hat).or_default().push(i);
        }
    }
    let n = items_per_h
        .or_else(|| by_h.values().map(Vec::len).min())
        .ok_or_else(|| CliError::Config("bank has no track tasks".into()))?;
    let tasks = bank.tasks();
    let items: Vec<CTestItem> = by_h
        .iter()
        .flat_map(|(h, idx)| {
            idx.iter().take(n).map(move |&i| CTestItem {
                task: &tasks[i],
                h: *h,
            })
        })
        .collect();
    let rep = ctest_score(&pi, &items, exponent, &eval_opts(cli, &bank))?;
    emit(output, &[Format::Csv, Format::Json], |f| match f {
        Format::Json => json(&rep),
        _ => {
            let mut s = String::from("h,n_items,hit_ratio\n");
            for r in &rep.rows {
                let _ = writeln!(s, "{},{},{}", r.h, r.n_items, r.hit_ratio);
            }
            let _ = writeln!(s, "total,,{}", rep.value);
            Ok(s)
        }
    })
}

/// `b` as printed in tables: six decimals, trailing zeros dropped.
pub fn format_base(b: f64) -> String {
    let s = format!("{b:.6}");
    s.trim_end_matches('0').trim_end_matches('.').to_string()
}

#[derive(Serialize)]
struct CodingReport {
    word_bits: u8,
    b: String,
    rows: Vec<pdiff_core::refmachine::CodingRow>,
}

fn coding(word_bits: u8, hmax: u32, output: &OutputArgs) -> Result<(), CliError> {
    let m =
        MachineConfig::with_word_bits(word_bits).map_err(|e| CliError::Config(e.to_string()))?;
    let rows = coding_table(hmax, &m);
    let b = format_base(pdiff_core::refmachine::approx_base(&m));
    emit(
        output,
        &[Format::Csv, Format::Json, Format::Svg],
        |f| match f {
            Format::Csv => {
                let mut s = String::from("h,count,exact,approx,rel_deviation,b\n");
                for r in &rows {
                    let _ = writeln!(
                        s,
                        "{},{},{},{},{},{}",
                        r.h,
                        r.count,
                        r.exact,
                        opt(r.approx),
                        opt(r.rel_deviation),
                        b
                    );
                }
                Ok(s)
            }
            Format::Json => json(&CodingReport {
                word_bits,
                b: b.clone(),
                rows: rows.clone(),
            }),
            Format::Svg => {
                let valid: Vec<_> = rows.iter().filter(|r| r.approx.is_some()).collect();
                let exact = Series {
                    name: "exact p(h)".into(),
                    points: valid.iter().map(|r| (r.h as f64, r.exact)).collect(),
                };
                let approx = Series {
                    name: format!("approximation, b = {b}"),
                    points: valid
                        .iter()
                        .map(|r| (r.h as f64, r.approx.unwrap_or(0.0)))
                        .collect(),
                };
                Ok(line_chart_svg(
                    &format!("Program length distribution, c = {word_bits}"),
                    "h (bits)",
                    "p(h)",
                    &[exact, approx],
                ))
            }
        },
    )
}

#[derive(Serialize)]
struct PairsReport {
    n_pairs: usize,
    n_policies: usize,
    report: AggregateReport,
}

fn pairs(
    cli: &Cli,
    path: &Path,
    agent_hex: &str,
    weights: &str,
    output: &OutputArgs,
) -> Result<(), CliError> {
    let bank = open(path)?;
    let pi = agent(agent_hex, &bank.config.machine)?;
    let w = WeightScheme::parse(weights)?;
    let table = materialize_pairs(&bank)?;
    let items = bank.items(DifficultyKind::MinLength);
    let rep = psi_pairs(
        &pi,
        &items,
        &table,
        &bank.config.tolerance(),
        &w,
        &eval_opts(cli, &bank),
    )?;
    let n_policies = table.by_length().values().map(BTreeMap::len).sum();
    emit(output, &[Format::Json, Format::Csv], |f| match f {
        Format::Csv => Ok(report_csv(&rep)),
        _ => json(&PairsReport {
            n_pairs: table.pairs.len(),
            n_policies,
            report: rep.clone(),
        }),
    })
}
