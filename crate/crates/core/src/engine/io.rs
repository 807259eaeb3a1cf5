//! Snapshot CSV and line-delimited event output.
//!
//! Snapshot columns: `replica,time,N,A,B,C,beta,logPiA,logPiB,occ_f,occ_1`,
//! where `A`, `B`, `C` count resamplings, selections and interaction events
//! (branchings plus killings), and `beta` counts branchings. Lines starting
//! with `#` are comments. Floats are written with the shortest round-trip
//! representation so output is deterministic.

use std::io::{self, Write};

use super::state::{EventRecord, Snapshot};

pub const SNAPSHOT_COLUMNS: [&str; 11] = [
    "replica", "time", "N", "A", "B", "C", "beta", "logPiA", "logPiB", "occ_f", "occ_1",
];

pub fn write_comment<W: Write>(out: &mut W, text: &str) -> io::Result<()> {
    for line in text.lines() {
        writeln!(out, "# {line}")?;
    }
    Ok(())
}

pub fn write_snapshot_header<W: Write>(out: &mut W) -> io::Result<()> {
    writeln!(out, "{}", SNAPSHOT_COLUMNS.join(","))
}

pub fn write_snapshot<W: Write>(out: &mut W, replica: u64, s: &Snapshot) -> io::Result<()> {
    writeln!(
        out,
        "{},{:?},{},{},{},{},{},{:?},{:?},{:?},{:?}",
        replica,
        s.time,
        s.size,
        s.resamples,
        s.selections,
        s.events,
        s.branches,
        s.log_pi_a,
        s.log_pi_b,
        s.occ_f,
        s.occ_1
    )
}

pub fn write_snapshots<W: Write>(out: &mut W, replica: u64, snapshots: &[Snapshot]) -> io::Result<()> {
    snapshots.iter().try_for_each(|s| write_snapshot(out, replica, s))
}

/// One JSON object per line, tagged with the replica index.
pub fn write_events<W: Write>(out: &mut W, replica: u64, events: &[EventRecord]) -> io::Result<()> {
    for e in events {
        let mut value = serde_json::to_value(e).map_err(io::Error::other)?;
        value["replica"] = replica.into();
        serde_json::to_writer(&mut *out, &value).map_err(io::Error::other)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

/// Parses a snapshot body produced by [`write_snapshot`], skipping comments
/// and the header.
pub fn read_snapshots(text: &str) -> Result<Vec<(u64, Snapshot)>, String> {
    let mut rows = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.starts_with('#') || line.starts_with("replica") || line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != SNAPSHOT_COLUMNS.len() {
            return Err(format!(
                "line {}: expected {} fields",
                lineno + 1,
                SNAPSHOT_COLUMNS.len()
            ));
        }
        let bad = |i: usize| format!("line {}: bad field {}", lineno + 1, SNAPSHOT_COLUMNS[i]);
        let int = |i: usize| fields[i].parse::<u64>().map_err(|_| bad(i));
        let real = |i: usize| fields[i].parse::<f64>().map_err(|_| bad(i));
        rows.push((
            int(0)?,
            Snapshot {
                time: real(1)?,
                size: int(2)? as usize,
                resamples: int(3)?,
                selections: int(4)?,
                events: int(5)?,
                branches: int(6)?,
                log_pi_a: real(7)?,
                log_pi_b: real(8)?,
                occ_f: real(9)?,
                occ_1: real(10)?,
            },
        ));
    }
    Ok(rows)
}
