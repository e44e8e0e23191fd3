//! `fit`: score every retained checkpoint against the subject's recorded
//! trials, pick the best epoch per (subject, family), and compare the two
//! families with a paired t-test on their best scores.

use crate::commands::{load_dataset_required, resolve_subjects, FamilyChoice};
use crate::config::RunConfig;
use crate::csvout::Csv;
use crate::{checkpoints, textio, workers, LabError, Result};
use nerd_core::envsim::Dataset;
use nerd_core::fitting::{fit_subject, FitResult};
use nerd_core::numerics::paired_t_test;
use nerd_core::training::Family;
use std::collections::BTreeMap;
use std::path::Path;

#[derive(Debug, Clone)]
pub struct FitOptions {
    pub subjects: Option<Vec<String>>,
    pub family: FamilyChoice,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions { subjects: None, family: FamilyChoice::Both }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairedSummary {
    pub n: usize,
    /// Mean of (nerd best NLL - control best NLL); negative favours nerd.
    pub mean_diff: f64,
    pub t_stat: f64,
    pub p_value: f64,
}

#[derive(Debug)]
pub struct FitReport {
    pub fits: Vec<FitResult>,
    pub paired: Option<PairedSummary>,
}

pub fn run(cfg: &RunConfig, out: &Path, opts: &FitOptions) -> Result<FitReport> {
    let ds = load_dataset_required(out)?;
    let picked = resolve_subjects(&ds, opts.subjects.as_deref())?;
    let units: Vec<(usize, Family)> = picked
        .iter()
        .flat_map(|i| opts.family.families().into_iter().map(move |f| (*i, f)))
        .collect();

    let results = workers::run_parallel(&units, cfg.jobs, |_, (idx, family)| {
        fit_unit(cfg, out, &ds, *idx, *family)
            .map_err(|e| (format!("{}/{}: {e}", ds.subjects[*idx].id, family.label()), e))
    });

    let mut fits = Vec::new();
    let mut failures = Vec::new();
    for r in results {
        match r {
            Ok(f) => fits.push(f),
            Err(pair) => failures.push(pair),
        }
    }
    if !failures.is_empty() {
        return Err(combine_failures(failures));
    }

    let fit_dir = out.join("fit");
    for family in opts.family.families() {
        write_nll_table(&fit_dir, family, &fits)?;
    }
    let estar = write_estar_table(&fit_dir, &fits)?;
    let paired = write_paired_tables(&fit_dir, &estar)?;

    Ok(FitReport { fits, paired })
}

/// Keep the most severe error class: any numeric failure outranks a plain
/// user error, so the exit code reflects the worst thing that happened.
fn combine_failures(failures: Vec<(String, LabError)>) -> LabError {
    let numeric = failures.iter().any(|(_, e)| e.exit_code() == 2);
    let joined: Vec<String> = failures.into_iter().map(|(msg, _)| msg).collect();
    if numeric {
        LabError::Core(nerd_core::Error::NumericFailure {
            step: 0,
            detail: format!("fit failed: {}", joined.join("; ")),
        })
    } else {
        LabError::Config(format!("fit failed: {}", joined.join("; ")))
    }
}

fn fit_unit(
    cfg: &RunConfig,
    out: &Path,
    ds: &Dataset,
    idx: usize,
    family: Family,
) -> Result<FitResult> {
    let subject = &ds.subjects[idx];
    let tc = cfg.train_config(family, ds.reward_scale)?;
    let dir = checkpoints::model_dir(out, &subject.id, family);
    let missing = || {
        LabError::Config(format!(
            "no checkpoints for {}/{} under {}; run train first",
            subject.id,
            family.label(),
            dir.display()
        ))
    };
    if !dir.exists() {
        return Err(missing());
    }
    let epochs = checkpoints::list_checkpoint_epochs(&dir)?;
    if epochs.is_empty() {
        return Err(missing());
    }

    let mut cks = Vec::with_capacity(epochs.len());
    for epoch in &epochs {
        let stored = checkpoints::load_checkpoint(&checkpoints::checkpoint_path(&dir, *epoch))?;
        if stored.checkpoint.config_hash != tc.content_hash() {
            return Err(LabError::Config(format!(
                "checkpoints in {} were trained under different settings; \
                 refit with the original config",
                dir.display()
            )));
        }
        cks.push(stored.checkpoint);
    }

    let schedule = tc.schedule()?;
    let reward = ds.training_reward(idx)?;
    let fc = cfg.fit_config()?;
    Ok(fit_subject(subject, family, &cks, &schedule, &reward, &fc, cfg.seed)?)
}

/// Merge this run's per-epoch scores for one family into `nll_<family>.csv`,
/// replacing rows for refitted subjects and keeping everyone else's.
fn write_nll_table(fit_dir: &Path, family: Family, fits: &[FitResult]) -> Result<()> {
    let path = fit_dir.join(format!("nll_{}.csv", family.label()));
    let mut rows: BTreeMap<(String, usize), String> = BTreeMap::new();
    if path.exists() {
        let content = textio::read_to_string(&path)?;
        for (lineno, line) in content.lines().enumerate().skip(1) {
            let cells: Vec<&str> = line.split(',').collect();
            if cells.len() != 3 {
                return Err(LabError::Parse {
                    path: path.display().to_string(),
                    line: lineno + 1,
                    msg: format!("expected 3 columns, found {}", cells.len()),
                });
            }
            let epoch = cells[1].parse::<usize>().map_err(|e| LabError::Parse {
                path: path.display().to_string(),
                line: lineno + 1,
                msg: format!("bad epoch: {e}"),
            })?;
            rows.insert((cells[0].to_string(), epoch), cells[2].to_string());
        }
    }
    let mut touched = false;
    for fit in fits.iter().filter(|f| f.family == family) {
        touched = true;
        rows.retain(|(subject, _), _| subject != &fit.subject_id);
        for (epoch, nll) in fit.checkpoint_epochs.iter().zip(&fit.per_epoch_mean_nll) {
            rows.insert((fit.subject_id.clone(), *epoch), textio::fmt_f64(*nll));
        }
    }
    if !touched && !path.exists() {
        return Ok(());
    }
    let mut csv = Csv::new(&["subject", "epoch", "mean_nll"]);
    for ((subject, epoch), nll) in &rows {
        csv.row(&[subject.as_str(), &epoch.to_string(), nll]);
    }
    textio::atomic_write(&path, &csv.render())
}

type EstarTable = BTreeMap<(String, String), (usize, f64)>;

/// Merge best-epoch rows into `estar.csv`, keyed by (subject, family), and
/// return the full merged table.
fn write_estar_table(fit_dir: &Path, fits: &[FitResult]) -> Result<EstarTable> {
    let path = fit_dir.join("estar.csv");
    let mut rows: EstarTable = BTreeMap::new();
    if path.exists() {
        let content = textio::read_to_string(&path)?;
        for (lineno, line) in content.lines().enumerate().skip(1) {
            let cells: Vec<&str> = line.split(',').collect();
            let parse_err = |msg: String| LabError::Parse {
                path: path.display().to_string(),
                line: lineno + 1,
                msg,
            };
            if cells.len() != 4 {
                return Err(parse_err(format!("expected 4 columns, found {}", cells.len())));
            }
            let e_star =
                cells[2].parse::<usize>().map_err(|e| parse_err(format!("bad e_star: {e}")))?;
            let min_nll =
                cells[3].parse::<f64>().map_err(|e| parse_err(format!("bad min_nll: {e}")))?;
            rows.insert((cells[0].to_string(), cells[1].to_string()), (e_star, min_nll));
        }
    }
    for fit in fits {
        rows.insert(
            (fit.subject_id.clone(), fit.family.label().to_string()),
            (fit.e_star, fit.min_nll),
        );
    }
    let mut csv = Csv::new(&["subject", "family", "e_star", "min_nll"]);
    for ((subject, family), (e_star, min_nll)) in &rows {
        csv.row(&[subject.as_str(), family, &e_star.to_string(), &textio::fmt_f64(*min_nll)]);
    }
    textio::atomic_write(&path, &csv.render())?;
    Ok(rows)
}

/// Subjects fitted under both families get a per-subject comparison table
/// and, when the paired t-test is defined, an overall test summary.
fn write_paired_tables(fit_dir: &Path, estar: &EstarTable) -> Result<Option<PairedSummary>> {
    let mut nerd = Vec::new();
    let mut control = Vec::new();
    let mut subjects = Vec::new();
    for ((subject, family), (_, min_nll)) in estar {
        if family == "nerd" {
            if let Some((_, c)) = estar.get(&(subject.clone(), "control".to_string())) {
                subjects.push(subject.clone());
                nerd.push(*min_nll);
                control.push(*c);
            }
        }
    }
    if subjects.is_empty() {
        return Ok(None);
    }

    let mut csv = Csv::new(&["subject", "nerd_min_nll", "control_min_nll", "diff"]);
    for (i, subject) in subjects.iter().enumerate() {
        csv.row(&[
            subject.as_str(),
            &textio::fmt_f64(nerd[i]),
            &textio::fmt_f64(control[i]),
            &textio::fmt_f64(nerd[i] - control[i]),
        ]);
    }
    textio::atomic_write(&fit_dir.join("paired_nll.csv"), &csv.render())?;

    if subjects.len() < 2 {
        return Ok(None);
    }
    let summary = match paired_t_test(&nerd, &control) {
        Ok((t_stat, p_value)) => {
            let mean_diff = nerd
                .iter()
                .zip(&control)
                .map(|(a, b)| a - b)
                .sum::<f64>()
                / subjects.len() as f64;
            Some(PairedSummary { n: subjects.len(), mean_diff, t_stat, p_value })
        }
        // a defined test needs spread in the differences; without it the
        // comparison table stands on its own
        Err(_) => None,
    };
    if let Some(s) = &summary {
        let mut csv = Csv::new(&["n", "mean_diff", "t_stat", "p_value"]);
        csv.row(&[
            s.n.to_string(),
            textio::fmt_f64(s.mean_diff),
            textio::fmt_f64(s.t_stat),
            textio::fmt_f64(s.p_value),
        ]);
        textio::atomic_write(&fit_dir.join("paired_test.csv"), &csv.render())?;
    }
    Ok(summary)
}
