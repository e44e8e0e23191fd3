//! `report`: index every artifact under the output directory into a single
//! `report_index.md` with stable ordering, so a run's outputs are
//! discoverable at a glance.

use crate::{io_err, textio, Result};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

#[derive(Debug)]
pub struct ReportSummary {
    pub files: usize,
    pub index_path: PathBuf,
    pub empty: bool,
}

pub fn run(out: &Path) -> Result<ReportSummary> {
    let mut files: Vec<(String, u64)> = Vec::new();
    if out.exists() {
        collect(out, out, &mut files)?;
    }
    files.sort();

    let mut s = String::new();
    let _ = writeln!(s, "# Run artifacts\n");
    if files.is_empty() {
        let _ = writeln!(s, "No artifacts found. Run gen-data, train, fit, and analyze first.");
    } else {
        let _ = writeln!(s, "{} files.\n", files.len());
        let mut section = String::new();
        for (rel, bytes) in &files {
            let top = rel.split('/').next().unwrap_or("").to_string();
            let label = if rel.contains('/') { top.clone() } else { "top level".to_string() };
            if label != section {
                let _ = writeln!(s, "\n## {label}\n");
                let _ = writeln!(s, "| file | bytes |");
                let _ = writeln!(s, "|---|---|");
                section = label;
            }
            let _ = writeln!(s, "| {rel} | {bytes} |");
        }
    }

    let index_path = out.join("report_index.md");
    textio::atomic_write(&index_path, &s)?;
    Ok(ReportSummary { files: files.len(), index_path, empty: files.is_empty() })
}

fn collect(root: &Path, dir: &Path, files: &mut Vec<(String, u64)>) -> Result<()> {
    let entries = std::fs::read_dir(dir).map_err(|e| io_err(dir, e))?;
    for entry in entries {
        let entry = entry.map_err(|e| io_err(dir, e))?;
        let path = entry.path();
        let meta = entry.metadata().map_err(|e| io_err(&path, e))?;
        if meta.is_dir() {
            collect(root, &path, files)?;
            continue;
        }
        let rel = path
            .strip_prefix(root)
            .expect("walked path is under root")
            .components()
            .map(|c| c.as_os_str().to_string_lossy())
            .collect::<Vec<_>>()
            .join("/");
        // the index never lists itself or abandoned temp files
        if rel == "report_index.md" || rel.ends_with(".tmp") {
            continue;
        }
        files.push((rel, meta.len()));
    }
    Ok(())
}
