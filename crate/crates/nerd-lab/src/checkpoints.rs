//! Checkpoint and training-log persistence. One directory per
//! subject/family pair holds `checkpoint_<epoch>.txt` files plus a
//! `log.csv`; loading a checkpoint restores parameters and generator state
//! bit-for-bit, which is what makes resumed runs indistinguishable from
//! uninterrupted ones.

use crate::textio::{atomic_write, fmt_f64, read_to_string, LineReader};
use crate::{io_err, LabError, Result};
use nerd_core::policy::PolicyParams;
use nerd_core::training::{Checkpoint, EpochLog, Family};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

const HEADER: &str = "nerd-lab checkpoint 1";
const FLOATS_PER_LINE: usize = 8;

pub fn parse_family(s: &str) -> Result<Family> {
    match s {
        "nerd" => Ok(Family::Nerd),
        "control" => Ok(Family::Control),
        other => Err(LabError::Config(format!(
            "family must be `nerd` or `control`, found `{other}`"
        ))),
    }
}

/// Directory that holds one model's artifacts.
pub fn model_dir(out: &Path, subject_id: &str, family: Family) -> PathBuf {
    out.join("models").join(subject_id).join(family.label())
}

pub fn checkpoint_path(dir: &Path, epoch: usize) -> PathBuf {
    dir.join(format!("checkpoint_{epoch:06}.txt"))
}

pub fn save_checkpoint(
    dir: &Path,
    subject_id: &str,
    family: Family,
    ck: &Checkpoint,
) -> Result<()> {
    let mut out = String::new();
    let _ = writeln!(out, "{HEADER}");
    let _ = writeln!(out, "subject {subject_id}");
    let _ = writeln!(out, "family {}", family.label());
    let _ = writeln!(out, "epoch {}", ck.epoch);
    let _ = writeln!(out, "config_hash {}", ck.config_hash);
    let _ = writeln!(out, "rng_seed {}", ck.rng_seed);
    let _ = writeln!(
        out,
        "rng_state {} {} {} {}",
        ck.rng_state[0], ck.rng_state[1], ck.rng_state[2], ck.rng_state[3]
    );
    let _ = writeln!(out, "v {}", ck.params.n_voxels());
    let _ = writeln!(out, "hidden {}", ck.params.hidden_size());
    let _ = writeln!(out, "sigma_min {}", fmt_f64(ck.params.sigma_min()));
    let flat = ck.params.flatten();
    let _ = writeln!(out, "params {}", flat.len());
    for chunk in flat.chunks(FLOATS_PER_LINE) {
        let joined = chunk.iter().map(|x| fmt_f64(*x)).collect::<Vec<_>>().join(" ");
        let _ = writeln!(out, "{joined}");
    }
    atomic_write(&checkpoint_path(dir, ck.epoch), &out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct StoredCheckpoint {
    pub subject_id: String,
    pub family: Family,
    pub checkpoint: Checkpoint,
}

pub fn load_checkpoint(path: &Path) -> Result<StoredCheckpoint> {
    let text = read_to_string(path)?;
    let mut r = LineReader::new(path, &text);
    r.expect_line(HEADER)?;
    let subject_id = r.keyed_line("subject")?.trim().to_string();
    let family_at = r.line_number();
    let family_str = r.keyed_line("family")?.trim().to_string();
    let family = parse_family(&family_str).map_err(|_| LabError::Parse {
        path: path.display().to_string(),
        line: family_at,
        msg: format!("unknown family `{family_str}`"),
    })?;
    let epoch = r.keyed_usize("epoch")?;
    let config_hash = r.keyed_u64("config_hash")?;
    let rng_seed = r.keyed_u64("rng_seed")?;
    let state_at = r.line_number();
    let state_line = r.keyed_line("rng_state")?;
    let state_vals: Vec<u64> = state_line
        .split_whitespace()
        .map(|s| s.parse::<u64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| LabError::Parse {
            path: path.display().to_string(),
            line: state_at,
            msg: "rng_state must hold four integers".into(),
        })?;
    if state_vals.len() != 4 {
        return Err(LabError::Parse {
            path: path.display().to_string(),
            line: state_at,
            msg: format!("rng_state must hold four integers, found {}", state_vals.len()),
        });
    }
    let v = r.keyed_usize("v")?;
    let hidden = r.keyed_usize("hidden")?;
    let sigma_min = r.keyed_f64("sigma_min")?;
    let count = r.keyed_usize("params")?;
    let mut flat = Vec::with_capacity(count);
    while flat.len() < count {
        let at = r.line_number();
        let line = r.next_line()?;
        for tok in line.split_whitespace() {
            let x: f64 = tok.parse().map_err(|_| LabError::Parse {
                path: path.display().to_string(),
                line: at,
                msg: format!("malformed parameter value `{tok}`"),
            })?;
            flat.push(x);
        }
    }
    if flat.len() != count {
        return Err(LabError::Parse {
            path: path.display().to_string(),
            line: r.line_number(),
            msg: format!("expected {count} parameters, found {}", flat.len()),
        });
    }
    r.expect_end()?;
    let params = PolicyParams::from_flat(v, hidden, sigma_min, &flat)?;
    Ok(StoredCheckpoint {
        subject_id,
        family,
        checkpoint: Checkpoint {
            epoch,
            params,
            config_hash,
            rng_seed,
            rng_state: [state_vals[0], state_vals[1], state_vals[2], state_vals[3]],
        },
    })
}

/// Checkpoint epochs present in a model directory, sorted ascending.
pub fn list_checkpoint_epochs(dir: &Path) -> Result<Vec<usize>> {
    let mut epochs = Vec::new();
    let entries = std::fs::read_dir(dir).map_err(|e| io_err(dir, e))?;
    for entry in entries {
        let entry = entry.map_err(|e| io_err(dir, e))?;
        let name = entry.file_name().to_string_lossy().into_owned();
        if let Some(num) = name.strip_prefix("checkpoint_").and_then(|s| s.strip_suffix(".txt")) {
            if let Ok(epoch) = num.parse::<usize>() {
                epochs.push(epoch);
            }
        }
    }
    epochs.sort_unstable();
    Ok(epochs)
}

/// Write the per-epoch training log as CSV.
pub fn save_log(dir: &Path, logs: &[EpochLog]) -> Result<()> {
    let mut csv = crate::csvout::Csv::new(&[
        "epoch",
        "mean_loss",
        "mean_reward",
        "mean_return",
        "grad_norm_pre_clip",
    ]);
    for l in logs {
        csv.row(&[
            l.epoch.to_string(),
            fmt_f64(l.mean_loss),
            fmt_f64(l.mean_reward),
            fmt_f64(l.mean_return),
            fmt_f64(l.grad_norm_pre_clip),
        ]);
    }
    atomic_write(&dir.join("log.csv"), &csv.render())
}

pub fn load_log(dir: &Path) -> Result<Vec<EpochLog>> {
    let path = dir.join("log.csv");
    let text = read_to_string(&path)?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if i == 0 {
            continue; // header
        }
        let cells: Vec<&str> = line.split(',').collect();
        let fail = |msg: String| LabError::Parse {
            path: path.display().to_string(),
            line: i + 1,
            msg,
        };
        if cells.len() != 5 {
            return Err(fail(format!("expected 5 columns, found {}", cells.len())));
        }
        let epoch = cells[0].parse::<usize>().map_err(|_| fail("bad epoch".into()))?;
        let nums: std::result::Result<Vec<f64>, _> =
            cells[1..].iter().map(|c| c.parse::<f64>()).collect();
        let nums = nums.map_err(|_| fail("bad float".into()))?;
        out.push(EpochLog {
            epoch,
            mean_loss: nums[0],
            mean_reward: nums[1],
            mean_return: nums[2],
            grad_norm_pre_clip: nums[3],
        });
    }
    Ok(out)
}

/// Append new epochs to an existing log (used by resumed runs).
pub fn extend_log(dir: &Path, new_logs: &[EpochLog]) -> Result<()> {
    let mut logs = if dir.join("log.csv").exists() { load_log(dir)? } else { Vec::new() };
    logs.extend_from_slice(new_logs);
    save_log(dir, &logs)
}
