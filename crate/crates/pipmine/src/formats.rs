//! Text and binary artifact formats.
//!
//! - Dataset: header `dim=<d>`, then one `<i,j,k>;<value>` line per entry
//!   (the index list may be empty). The value is the true relative risk, or
//!   the observed reward for mined samples.
//! - Patterns: the same line format without a header line.
//! - Snapshot: little-endian binary, see [`write_snapshot`].
//! - Trace: CSV `step,recommended_combo,played_combo,reward` with drug
//!   lists separated by spaces.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use pipmine_core::bandit::DesignMatrixDiag;
use pipmine_core::claims::{DrugCombination, HistoricalDataset, MiningSample};
use pipmine_core::miner::{Snapshot, TraceRow};
use pipmine_core::neuralnet::Mlp;
use pipmine_core::simgen::DangerousPattern;

use crate::error::{CliError, Result};

/// Writes `contents` next to `path` and renames it into place.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let dir = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| CliError::io(dir, e))?;
    tmp.write_all(contents).map_err(|e| CliError::io(path, e))?;
    tmp.persist(path).map_err(|e| CliError::io(path, e.error))?;
    Ok(())
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

fn data_err(path: &Path, line: usize, msg: impl std::fmt::Display) -> CliError {
    CliError::Data(format!("{}:{}: {}", path.display(), line, msg))
}

pub fn format_drugs(combo: &DrugCombination, sep: &str) -> String {
    let parts: Vec<String> = combo.drugs().iter().map(u32::to_string).collect();
    parts.join(sep)
}

fn parse_drugs(dim: usize, text: &str, sep: char) -> std::result::Result<DrugCombination, String> {
    let text = text.trim();
    let drugs = if text.is_empty() {
        Vec::new()
    } else {
        text.split(sep)
            .map(|t| {
                t.trim()
                    .parse::<u32>()
                    .map_err(|e| format!("bad drug index {t:?}: {e}"))
            })
            .collect::<std::result::Result<Vec<_>, _>>()?
    };
    DrugCombination::new(dim, drugs).map_err(|e| e.to_string())
}

fn parse_entry(dim: usize, line: &str) -> std::result::Result<(DrugCombination, f64), String> {
    let (drugs, value) = line.split_once(';').ok_or("expected `<indices>;<value>`")?;
    let combo = parse_drugs(dim, drugs, ',')?;
    let value = value
        .trim()
        .parse::<f64>()
        .map_err(|e| format!("bad value {value:?}: {e}"))?;
    Ok((combo, value))
}

fn entry_line(out: &mut String, combo: &DrugCombination, value: f64) {
    let _ = writeln!(out, "{};{}", format_drugs(combo, ","), value);
}

fn parse_header(path: &Path, text: &str) -> Result<usize> {
    let header = text
        .lines()
        .next()
        .ok_or_else(|| data_err(path, 1, "missing `dim=<d>` header"))?;
    header
        .trim()
        .strip_prefix("dim=")
        .and_then(|d| d.parse::<usize>().ok())
        .ok_or_else(|| data_err(path, 1, format!("expected `dim=<d>` header, found {header:?}")))
}

fn parse_entries(path: &Path, text: &str, dim: usize, skip: usize) -> Result<Vec<(DrugCombination, f64)>> {
    text.lines()
        .enumerate()
        .skip(skip)
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| parse_entry(dim, l).map_err(|e| data_err(path, i + 1, e)))
        .collect()
}

pub fn render_dataset(data: &HistoricalDataset) -> String {
    let mut out = format!("dim={}\n", data.dim());
    for (combo, rr) in data.entries() {
        entry_line(&mut out, combo, *rr);
    }
    out
}

pub fn parse_dataset(path: &Path, text: &str) -> Result<HistoricalDataset> {
    let dim = parse_header(path, text)?;
    let entries = parse_entries(path, text, dim, 1)?;
    HistoricalDataset::new(dim, entries).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

pub fn read_dataset(path: &Path) -> Result<HistoricalDataset> {
    parse_dataset(path, &read(path)?)
}

pub fn write_dataset(path: &Path, data: &HistoricalDataset) -> Result<()> {
    write_atomic(path, render_dataset(data).as_bytes())
}

/// Mined samples in the dataset format; duplicates are allowed.
pub fn render_samples(dim: usize, samples: &[MiningSample]) -> String {
    let mut out = format!("dim={dim}\n");
    for s in samples {
        entry_line(&mut out, &s.combination, s.observed_reward);
    }
    out
}

pub fn read_samples(path: &Path) -> Result<Vec<MiningSample>> {
    let text = read(path)?;
    let dim = parse_header(path, &text)?;
    Ok(parse_entries(path, &text, dim, 1)?
        .into_iter()
        .map(|(combination, observed_reward)| MiningSample {
            combination,
            observed_reward,
        })
        .collect())
}

pub fn render_patterns(patterns: &[DangerousPattern]) -> String {
    let mut out = String::new();
    for p in patterns {
        entry_line(&mut out, &p.combination, p.pattern_rr);
    }
    out
}

pub fn read_patterns(path: &Path, dim: usize) -> Result<Vec<DangerousPattern>> {
    let text = read(path)?;
    Ok(parse_entries(path, &text, dim, 0)?
        .into_iter()
        .map(|(combination, pattern_rr)| DangerousPattern {
            combination,
            pattern_rr,
        })
        .collect())
}

pub fn render_trace(rows: &[TraceRow]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["step", "recommended_combo", "played_combo", "reward"])?;
    for r in rows {
        w.write_record([
            r.step.to_string(),
            format_drugs(&r.recommended, " "),
            format_drugs(&r.played, " "),
            r.reward.to_string(),
        ])?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::Runtime(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

pub fn read_trace(path: &Path, dim: usize) -> Result<Vec<TraceRow>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    let mut rows = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| data_err(path, i + 2, e))?;
        let field = |k: usize| rec.get(k).ok_or_else(|| data_err(path, i + 2, "missing column"));
        rows.push(TraceRow {
            step: field(0)?.parse().map_err(|e| data_err(path, i + 2, e))?,
            recommended: parse_drugs(dim, field(1)?, ' ').map_err(|e| data_err(path, i + 2, e))?,
            played: parse_drugs(dim, field(2)?, ' ').map_err(|e| data_err(path, i + 2, e))?,
            reward: field(3)?.parse().map_err(|e| data_err(path, i + 2, e))?,
        });
    }
    Ok(rows)
}

const SNAPSHOT_MAGIC: &[u8; 8] = b"PIPSNAP1";

/// Snapshot layout (all little-endian):
///
/// ```text
/// magic "PIPSNAP1"
/// u64 step
/// f64 lambda
/// u64 L, then L x u64 layer_dims
/// u64 m, then m x f64 theta (network parameter order)
/// m x f64 design diagonal
/// ```
pub fn encode_snapshot(s: &Snapshot) -> Vec<u8> {
    let dims = s.network.layer_dims();
    let theta = s.network.parameters();
    let mut out = Vec::with_capacity(8 * (5 + dims.len() + 2 * theta.len()));
    out.extend_from_slice(SNAPSHOT_MAGIC);
    out.extend_from_slice(&(s.step as u64).to_le_bytes());
    out.extend_from_slice(&s.design.lambda().to_le_bytes());
    out.extend_from_slice(&(dims.len() as u64).to_le_bytes());
    for &d in dims {
        out.extend_from_slice(&(d as u64).to_le_bytes());
    }
    out.extend_from_slice(&(theta.len() as u64).to_le_bytes());
    for t in theta {
        out.extend_from_slice(&t.to_le_bytes());
    }
    for u in s.design.diag() {
        out.extend_from_slice(&u.to_le_bytes());
    }
    out
}

pub fn decode_snapshot(bytes: &[u8]) -> std::result::Result<Snapshot, String> {
    let mut pos = 0usize;
    let mut word = || -> std::result::Result<[u8; 8], String> {
        let w = bytes.get(pos..pos + 8).ok_or("truncated snapshot")?;
        pos += 8;
        Ok(w.try_into().unwrap())
    };
    if &word()? != SNAPSHOT_MAGIC {
        return Err("not a snapshot file".into());
    }
    let step = u64::from_le_bytes(word()?) as usize;
    let lambda = f64::from_le_bytes(word()?);
    let n_dims = u64::from_le_bytes(word()?) as usize;
    if n_dims > 64 {
        return Err(format!("implausible layer count {n_dims}"));
    }
    let dims = (0..n_dims)
        .map(|_| word().map(|w| u64::from_le_bytes(w) as usize))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    let m = u64::from_le_bytes(word()?) as usize;
    if bytes.len() != 8 * (5 + n_dims) + 16 * m {
        return Err(format!("snapshot length {} does not match m = {m}", bytes.len()));
    }
    let theta = (0..m)
        .map(|_| word().map(f64::from_le_bytes))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    let diag = (0..m)
        .map(|_| word().map(f64::from_le_bytes))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    Ok(Snapshot {
        step,
        network: Mlp::from_parameters(&dims, theta).map_err(|e| e.to_string())?,
        design: DesignMatrixDiag::from_parts(diag, lambda).map_err(|e| e.to_string())?,
    })
}

pub fn snapshot_file_name(index: usize, step: usize) -> String {
    format!("member-{index:05}-step-{step}.snap")
}

pub fn write_ensemble(dir: &Path, members: &[Snapshot]) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    for (i, s) in members.iter().enumerate() {
        write_atomic(&dir.join(snapshot_file_name(i, s.step)), &encode_snapshot(s))?;
    }
    Ok(())
}

/// Loads every `*.snap` file in `dir`, ordered by snapshot step.
pub fn read_ensemble(dir: &Path) -> Result<Vec<Snapshot>> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| CliError::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "snap"))
        .collect();
    paths.sort();
    let mut members = paths
        .iter()
        .map(|p| {
            let bytes = fs::read(p).map_err(|e| CliError::io(p, e))?;
            decode_snapshot(&bytes).map_err(|e| CliError::Data(format!("{}: {e}", p.display())))
        })
        .collect::<Result<Vec<_>>>()?;
    members.sort_by_key(|s| s.step);
    if members.is_empty() {
        return Err(CliError::Data(format!("{}: no snapshot files", dir.display())));
    }
    Ok(members)
}
