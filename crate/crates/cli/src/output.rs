//! Output headers and files.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use bbmmi_core::engine::io::write_comment;
use bbmmi_core::rng::RNG_ALGORITHM;

use crate::error::CliError;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Per-replica status lines for the header.
#[derive(Debug, Clone, Default)]
pub struct RunStatus {
    pub replicas: u64,
    /// Replicas stopped by the explosion guard, with the message.
    pub tripped: Vec<(u64, String)>,
    /// Replicas that resolved simultaneous hard kills, with the count.
    pub ties: Vec<(u64, u64)>,
}

impl RunStatus {
    fn lines(&self) -> String {
        let mut out = String::new();
        if self.tripped.is_empty() {
            out.push_str(&format!("explosion guard: ok ({} replicas)\n", self.replicas));
        } else {
            out.push_str(&format!(
                "explosion guard: tripped in {} of {} replicas\n",
                self.tripped.len(),
                self.replicas
            ));
            for (r, msg) in &self.tripped {
                out.push_str(&format!("  replica {r}: {msg}\n"));
            }
        }
        if self.ties.is_empty() {
            out.push_str("hard-kill ties: none\n");
        } else {
            for (r, n) in &self.ties {
                out.push_str(&format!("hard-kill ties: replica {r}: {n}\n"));
            }
        }
        out
    }
}

/// Header text: version, RNG algorithm, command, config echo and status.
pub fn header(command: &str, config_echo: &str, status: Option<&RunStatus>) -> String {
    let mut text = format!("bbmmi {VERSION}\nrng: {RNG_ALGORITHM}\ncommand: {command}\nconfig:\n");
    for line in config_echo.lines().filter(|l| !l.is_empty()) {
        text.push_str("  ");
        text.push_str(line);
        text.push('\n');
    }
    if let Some(s) = status {
        text.push_str(&s.lines());
    }
    text
}

/// Creates `dir/name` and writes the header as `#` comments.
pub fn create(dir: &Path, name: &str, header_text: &str) -> Result<(PathBuf, BufWriter<File>), CliError> {
    fs::create_dir_all(dir)?;
    let path = dir.join(name);
    let mut out = BufWriter::new(File::create(&path)?);
    write_comment(&mut out, header_text)?;
    Ok((path, out))
}

/// Writes a CSV table with the given header comment.
pub fn write_table(
    dir: &Path,
    name: &str,
    header_text: &str,
    columns: &[&str],
    rows: &[Vec<String>],
) -> Result<PathBuf, CliError> {
    let (path, mut out) = create(dir, name, header_text)?;
    writeln!(out, "{}", columns.join(","))?;
    for row in rows {
        writeln!(out, "{}", row.join(","))?;
    }
    out.flush()?;
    Ok(path)
}

/// Shortest round-trip decimal form.
pub fn num(x: f64) -> String {
    format!("{x:?}")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_lists_tripped_replicas() {
        let status = RunStatus {
            replicas: 4,
            tripped: vec![(2, "boom".into())],
            ties: vec![(1, 3)],
        };
        let h = header("simulate", "a = 1\n", Some(&status));
        assert!(h.contains("rng: chacha8"));
        assert!(h.contains("  a = 1"));
        assert!(h.contains("tripped in 1 of 4"));
        assert!(h.contains("replica 1: 3"));
    }
}
