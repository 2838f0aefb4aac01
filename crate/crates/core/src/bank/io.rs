//! JSONL persistence: a header line `{version, config, digest}` followed by
//! one task record per line.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{BankConfig, BankError, TaskBank, TaskRecord};
use crate::tasks::Task;

pub const BANK_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    version: u32,
    config: BankConfig,
    digest: String,
}

/// Writes `bytes` to a temporary file next to `path`, then renames it.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), BankError> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| BankError::Io(e.error))?;
    Ok(())
}

pub fn bank_to_jsonl(bank: &TaskBank) -> String {
    let header = Header {
        version: BANK_VERSION,
        config: bank.config.clone(),
        digest: bank.digest().to_string(),
    };
    let mut out = serde_json::to_string(&header).expect("header serializes");
    out.push('\n');
    for r in &bank.records {
        out.push_str(&serde_json::to_string(r).expect("record serializes"));
        out.push('\n');
    }
    out
}

pub fn save_bank(bank: &TaskBank, path: &Path) -> Result<(), BankError> {
    write_atomic(path, bank_to_jsonl(bank).as_bytes())
}

pub fn load_bank(path: &Path) -> Result<TaskBank, BankError> {
    let text = fs::read_to_string(path)?;
    parse_bank(&text)
}

pub fn parse_bank(text: &str) -> Result<TaskBank, BankError> {
    let corrupt = |m: String| BankError::CorruptBank(m);
    let mut lines = text.lines();
    let first = lines.next().ok_or_else(|| corrupt("empty file".into()))?;
    let raw: serde_json::Value =
        serde_json::from_str(first).map_err(|e| corrupt(format!("header: {e}")))?;
    let version = raw
        .get("version")
        .and_then(|v| v.as_u64())
        .ok_or_else(|| corrupt("header has no version".into()))? as u32;
    if version != BANK_VERSION {
        return Err(BankError::VersionMismatch {
            found: version,
            supported: BANK_VERSION,
        });
    }
    let header: Header =
        serde_json::from_value(raw).map_err(|e| corrupt(format!("header: {e}")))?;
    header
        .config
        .validate()
        .map_err(|e| corrupt(format!("header config: {e}")))?;
    let mut records = Vec::new();
    for (n, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let r: TaskRecord =
            serde_json::from_str(line).map_err(|e| corrupt(format!("line {}: {e}", n + 2)))?;
        records.push(r);
    }
    let m = header.config.machine;
    let tasks = records
        .iter()
        .map(|r| Task::from_spec(&r.spec, &m))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| corrupt(e.to_string()))?;
    let bank = TaskBank::assemble(header.config, records, tasks);
    if bank.digest() != header.digest {
        return Err(corrupt(format!(
            "digest {} does not match content {}",
            header.digest,
            bank.digest()
        )));
    }
    Ok(bank)
}
