//! Versioned plain-text persistence for synthetic cohorts. The format is
//! line-oriented and fully self-describing; floats are stored at 17
//! significant digits so a save/load round trip is bit-exact.

use crate::textio::{atomic_write, fmt_f64, read_to_string, LineReader};
use crate::{LabError, Result};
use nerd_core::envsim::{Dataset, DecoderSpec, SyntheticSubject, TrialRecord};
use std::fmt::Write as _;
use std::path::Path;

const HEADER: &str = "nerd-lab dataset 1";

pub fn save_dataset(path: &Path, ds: &Dataset) -> Result<()> {
    let mut out = String::new();
    let _ = writeln!(out, "{HEADER}");
    let _ = writeln!(out, "cohort_seed {}", ds.cohort_seed);
    let _ = writeln!(out, "v {}", ds.v);
    let _ = writeln!(out, "reward_scale {}", fmt_f64(ds.reward_scale));
    let _ = writeln!(out, "subjects {}", ds.subjects.len());
    for s in &ds.subjects {
        let _ = writeln!(out, "subject {}", s.id);
        let _ = writeln!(out, "index {}", s.index);
        let _ = writeln!(out, "proficiency {}", fmt_f64(s.proficiency));
        let _ = writeln!(out, "noise_scale {}", fmt_f64(s.noise_scale));
        let _ = writeln!(out, "decoder_bias {}", fmt_f64(s.decoder.bias));
        let _ = writeln!(out, "decoder_weights {}", join_floats(&s.decoder.weights));
        let _ = writeln!(out, "trials {}", s.trials.len());
        for t in &s.trials {
            let _ = writeln!(out, "trial {} {}", t.trial_id, fmt_f64(t.achieved_reward));
            let _ = writeln!(out, "baseline {}", join_floats(&t.baseline_state));
            let _ = writeln!(out, "achieved {}", join_floats(&t.achieved_state));
        }
    }
    atomic_write(path, &out)
}

pub fn load_dataset(path: &Path) -> Result<Dataset> {
    let text = read_to_string(path)?;
    let mut r = LineReader::new(path, &text);
    r.expect_line(HEADER)?;
    let cohort_seed = r.keyed_u64("cohort_seed")?;
    let v = r.keyed_usize("v")?;
    let reward_scale = r.keyed_f64("reward_scale")?;
    let n_subjects = r.keyed_usize("subjects")?;

    let mut subjects = Vec::with_capacity(n_subjects);
    for _ in 0..n_subjects {
        let id = r.keyed_line("subject")?.trim().to_string();
        if id.is_empty() {
            return Err(LabError::Parse {
                path: path.display().to_string(),
                line: r.line_number() - 1,
                msg: "subject id is empty".into(),
            });
        }
        let index = r.keyed_usize("index")?;
        let proficiency = r.keyed_f64("proficiency")?;
        let noise_scale = r.keyed_f64("noise_scale")?;
        let bias = r.keyed_f64("decoder_bias")?;
        let weights = r.keyed_f64_list("decoder_weights", v)?;
        let decoder = DecoderSpec { weights, bias };
        let n_trials = r.keyed_usize("trials")?;
        let mut trials = Vec::with_capacity(n_trials);
        for _ in 0..n_trials {
            let at = r.line_number();
            let rest = r.keyed_line("trial")?;
            let (trial_id, achieved_reward) = parse_trial_line(path, at, rest)?;
            let baseline_state = r.keyed_f64_list("baseline", v)?;
            let achieved_state = r.keyed_f64_list("achieved", v)?;
            // the stored reward must be the decoder's own read-out of the
            // achieved state; a mismatch means the file was edited or mixed
            let recomputed = decoder.raw_reward(&achieved_state);
            if (recomputed - achieved_reward).abs() > 1e-9 * (1.0 + achieved_reward.abs()) {
                return Err(LabError::Parse {
                    path: path.display().to_string(),
                    line: at,
                    msg: format!(
                        "trial {trial_id}: stored reward {achieved_reward} disagrees with the decoder ({recomputed})"
                    ),
                });
            }
            trials.push(TrialRecord { trial_id, baseline_state, achieved_state, achieved_reward });
        }
        subjects.push(SyntheticSubject { id, index, proficiency, noise_scale, decoder, trials });
    }
    r.expect_end()?;
    Ok(Dataset { cohort_seed, v, reward_scale, subjects })
}

fn parse_trial_line(path: &Path, line: usize, rest: &str) -> Result<(usize, f64)> {
    let mut parts = rest.split_whitespace();
    let fail = |msg: &str| LabError::Parse {
        path: path.display().to_string(),
        line,
        msg: msg.into(),
    };
    let id = parts
        .next()
        .and_then(|s| s.parse::<usize>().ok())
        .ok_or_else(|| fail("expected `trial <id> <reward>`"))?;
    let reward = parts
        .next()
        .and_then(|s| s.parse::<f64>().ok())
        .ok_or_else(|| fail("expected `trial <id> <reward>`"))?;
    if parts.next().is_some() {
        return Err(fail("trailing tokens on trial line"));
    }
    Ok((id, reward))
}

fn join_floats(xs: &[f64]) -> String {
    xs.iter().map(|x| fmt_f64(*x)).collect::<Vec<_>>().join(" ")
}

#[cfg(test)]
mod tests {
    use super::*;
    use nerd_core::envsim::{generate_cohort, SubjectConfig};

    fn small_cohort() -> Dataset {
        let cfg = SubjectConfig { v: 4, n_trials: 3, ..SubjectConfig::default() };
        generate_cohort(99, 2, &cfg).unwrap()
    }

    #[test]
    fn save_load_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("dataset.txt");
        let ds = small_cohort();
        save_dataset(&path, &ds).unwrap();
        let back = load_dataset(&path).unwrap();
        assert_eq!(back, ds);
    }

    #[test]
    fn saving_twice_is_byte_identical() {
        let dir = tempfile::tempdir().unwrap();
        let a = dir.path().join("a.txt");
        let b = dir.path().join("b.txt");
        let ds = small_cohort();
        save_dataset(&a, &ds).unwrap();
        save_dataset(&b, &ds).unwrap();
        assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    }

    #[test]
    fn tampered_rewards_are_caught_with_a_line_number() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("dataset.txt");
        let ds = small_cohort();
        save_dataset(&path, &ds).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        // corrupt the first trial's stored reward
        let tampered: Vec<String> = text
            .lines()
            .map(|l| {
                if l.starts_with("trial 0 ") {
                    "trial 0 4.2e1".to_string()
                } else {
                    l.to_string()
                }
            })
            .collect();
        std::fs::write(&path, tampered.join("\n")).unwrap();
        let err = load_dataset(&path).unwrap_err().to_string();
        assert!(err.contains("disagrees with the decoder"), "{err}");
        assert!(err.contains(':'), "parse errors carry path:line context: {err}");
    }

    #[test]
    fn truncated_files_report_the_end() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("dataset.txt");
        let ds = small_cohort();
        save_dataset(&path, &ds).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        std::fs::write(&path, lines[..lines.len() - 2].join("\n")).unwrap();
        assert!(load_dataset(&path).is_err());
    }

    #[test]
    fn wrong_header_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("dataset.txt");
        std::fs::write(&path, "nerd-lab dataset 9000\n").unwrap();
        let err = load_dataset(&path).unwrap_err().to_string();
        assert!(err.contains("nerd-lab dataset 1"), "{err}");
    }
}
