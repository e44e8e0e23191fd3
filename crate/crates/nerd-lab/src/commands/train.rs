//! `train`: fit both model families for every requested subject, with
//! checkpointing, crash-safe resume, and an idempotent skip when a run is
//! already complete.

use crate::commands::{load_dataset_required, resolve_subjects, FamilyChoice};
use crate::config::RunConfig;
use crate::{checkpoints, workers, LabError, Result};
use nerd_core::training::{
    resume_training, train_control, train_nerd, Family, TrainOutput,
};
use std::path::Path;

#[derive(Debug, Clone)]
pub struct TrainOptions {
    /// Subject ids to train; `None` trains the whole cohort.
    pub subjects: Option<Vec<String>>,
    pub family: FamilyChoice,
}

impl Default for TrainOptions {
    fn default() -> Self {
        TrainOptions { subjects: None, family: FamilyChoice::Both }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnitAction {
    Fresh,
    Resumed,
    Skipped,
}

/// One (subject, family) cell of the training grid.
#[derive(Debug)]
pub struct UnitSummary {
    pub subject_id: String,
    pub family: Family,
    pub action: UnitAction,
    /// Epochs actually run by this invocation.
    pub new_epochs: usize,
    pub final_epoch: usize,
    /// (mean_loss, mean_reward) of the last logged epoch, when any exists.
    pub last_log: Option<(f64, f64)>,
}

pub fn run(cfg: &RunConfig, out: &Path, opts: &TrainOptions) -> Result<Vec<UnitSummary>> {
    let ds = load_dataset_required(out)?;
    let picked = resolve_subjects(&ds, opts.subjects.as_deref())?;
    let units: Vec<(usize, Family)> = picked
        .iter()
        .flat_map(|i| opts.family.families().into_iter().map(move |f| (*i, f)))
        .collect();

    let results = workers::run_parallel(&units, cfg.jobs, |_, (idx, family)| {
        train_unit(cfg, out, &ds, *idx, *family)
            .map_err(|e| format!("{}/{}: {e}", ds.subjects[*idx].id, family.label()))
    });

    let mut summaries = Vec::new();
    let mut failures = Vec::new();
    for r in results {
        match r {
            Ok(s) => summaries.push(s),
            Err(msg) => failures.push(msg),
        }
    }
    if !failures.is_empty() {
        return Err(LabError::Training(failures));
    }
    Ok(summaries)
}

fn train_unit(
    cfg: &RunConfig,
    out: &Path,
    ds: &nerd_core::envsim::Dataset,
    idx: usize,
    family: Family,
) -> Result<UnitSummary> {
    let subject = &ds.subjects[idx];
    let tc = cfg.train_config(family, ds.reward_scale)?;
    let dir = checkpoints::model_dir(out, &subject.id, family);

    let existing = if dir.exists() { checkpoints::list_checkpoint_epochs(&dir)? } else { Vec::new() };

    if existing.is_empty() {
        let output = match family {
            Family::Nerd => train_nerd(subject, &tc),
            Family::Control => train_control(subject, &tc),
        }?;
        persist(&dir, subject, family, &output, &[])?;
        fail_if_aborted(&output)?;
        return Ok(UnitSummary {
            subject_id: subject.id.clone(),
            family,
            action: UnitAction::Fresh,
            new_epochs: output.logs.len(),
            final_epoch: output.checkpoints.last().map(|c| c.epoch).unwrap_or(0),
            last_log: output.logs.last().map(|l| (l.mean_loss, l.mean_reward)),
        });
    }

    let latest = *existing.last().expect("nonempty");
    let stored = checkpoints::load_checkpoint(&checkpoints::checkpoint_path(&dir, latest))?;
    if stored.subject_id != subject.id || stored.family != family {
        return Err(LabError::Config(format!(
            "checkpoint directory {} belongs to {}/{}",
            dir.display(),
            stored.subject_id,
            stored.family.label()
        )));
    }
    if stored.checkpoint.config_hash != tc.content_hash() {
        return Err(LabError::Config(format!(
            "existing checkpoints in {} were trained under different settings; \
             use a fresh --out or restore the original config",
            dir.display()
        )));
    }

    if stored.checkpoint.epoch >= tc.n_epochs {
        let logs = checkpoints::load_log(&dir).unwrap_or_default();
        return Ok(UnitSummary {
            subject_id: subject.id.clone(),
            family,
            action: UnitAction::Skipped,
            new_epochs: 0,
            final_epoch: stored.checkpoint.epoch,
            last_log: logs.last().map(|l| (l.mean_loss, l.mean_reward)),
        });
    }

    // an interrupted run: continue from the newest checkpoint, bit-for-bit
    let prior_logs: Vec<_> = checkpoints::load_log(&dir)
        .unwrap_or_default()
        .into_iter()
        .filter(|l| l.epoch <= stored.checkpoint.epoch)
        .collect();
    let output = resume_training(subject, &tc, family, &stored.checkpoint)?;
    persist(&dir, subject, family, &output, &prior_logs)?;
    fail_if_aborted(&output)?;
    Ok(UnitSummary {
        subject_id: subject.id.clone(),
        family,
        action: UnitAction::Resumed,
        new_epochs: output.logs.len(),
        final_epoch: output.checkpoints.last().map(|c| c.epoch).unwrap_or(latest),
        last_log: output.logs.last().map(|l| (l.mean_loss, l.mean_reward)),
    })
}

/// Write everything the run produced before reporting any numeric abort, so
/// a failure still leaves the last good state on disk.
fn persist(
    dir: &Path,
    subject: &nerd_core::envsim::SyntheticSubject,
    family: Family,
    output: &TrainOutput,
    prior_logs: &[nerd_core::training::EpochLog],
) -> Result<()> {
    for ck in &output.checkpoints {
        checkpoints::save_checkpoint(dir, &subject.id, family, ck)?;
    }
    let mut logs = prior_logs.to_vec();
    logs.extend(output.logs.iter().cloned());
    checkpoints::save_log(dir, &logs)?;
    Ok(())
}

fn fail_if_aborted(output: &TrainOutput) -> Result<()> {
    match &output.aborted {
        Some(err) => Err(LabError::Core(err.clone())),
        None => Ok(()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::commands::gen_data;

    fn micro_cfg() -> RunConfig {
        let mut cfg = RunConfig::default();
        cfg.seed = 52;
        cfg.dataset.subjects = 2;
        cfg.dataset.v = 4;
        cfg.dataset.trials = 3;
        cfg.train.hidden = 4;
        cfg.train.steps = 4;
        cfg.train.batch_episodes = 2;
        cfg.train.checkpoint_stride = 1;
        cfg.train.nerd.epochs = 3;
        cfg.train.control.epochs = 2;
        cfg
    }

    #[test]
    fn fresh_run_writes_checkpoints_then_skips_on_rerun() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = micro_cfg();
        gen_data::run(&cfg, dir.path()).unwrap();

        let first = run(&cfg, dir.path(), &TrainOptions::default()).unwrap();
        assert_eq!(first.len(), 4);
        assert!(first.iter().all(|u| u.action == UnitAction::Fresh));
        let nerd = first.iter().find(|u| u.family == Family::Nerd).unwrap();
        assert_eq!(nerd.final_epoch, 3);
        let mdir = checkpoints::model_dir(dir.path(), &nerd.subject_id, Family::Nerd);
        assert_eq!(checkpoints::list_checkpoint_epochs(&mdir).unwrap(), vec![0, 1, 2, 3]);
        assert_eq!(checkpoints::load_log(&mdir).unwrap().len(), 3);

        let second = run(&cfg, dir.path(), &TrainOptions::default()).unwrap();
        assert!(second.iter().all(|u| u.action == UnitAction::Skipped));
        assert_eq!(second.iter().find(|u| u.family == Family::Nerd).unwrap().final_epoch, 3);
    }

    #[test]
    fn interrupted_run_resumes_to_identical_bytes() {
        let dir_full = tempfile::tempdir().unwrap();
        let dir_cut = tempfile::tempdir().unwrap();
        let cfg = micro_cfg();
        let opts =
            TrainOptions { subjects: None, family: FamilyChoice::Nerd };

        gen_data::run(&cfg, dir_full.path()).unwrap();
        gen_data::run(&cfg, dir_cut.path()).unwrap();
        run(&cfg, dir_full.path(), &opts).unwrap();
        run(&cfg, dir_cut.path(), &opts).unwrap();

        // simulate a crash after epoch 1: drop the later checkpoints
        let subject_id = {
            let ds = crate::dataset::load_dataset(&dir_cut.path().join("dataset.txt")).unwrap();
            ds.subjects[0].id.clone()
        };
        let mdir = checkpoints::model_dir(dir_cut.path(), &subject_id, Family::Nerd);
        for epoch in [2usize, 3] {
            std::fs::remove_file(checkpoints::checkpoint_path(&mdir, epoch)).unwrap();
        }

        let resumed = run(&cfg, dir_cut.path(), &opts).unwrap();
        let unit = resumed.iter().find(|u| u.subject_id == subject_id).unwrap();
        assert_eq!(unit.action, UnitAction::Resumed);
        assert_eq!(unit.new_epochs, 2);

        let full_dir = checkpoints::model_dir(dir_full.path(), &subject_id, Family::Nerd);
        for epoch in [0usize, 1, 2, 3] {
            let a = std::fs::read(checkpoints::checkpoint_path(&full_dir, epoch)).unwrap();
            let b = std::fs::read(checkpoints::checkpoint_path(&mdir, epoch)).unwrap();
            assert_eq!(a, b, "checkpoint {epoch} diverged after resume");
        }
        let log_a = std::fs::read(full_dir.join("log.csv")).unwrap();
        let log_b = std::fs::read(mdir.join("log.csv")).unwrap();
        assert_eq!(log_a, log_b);
    }

    #[test]
    fn changed_settings_are_refused() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = micro_cfg();
        gen_data::run(&cfg, dir.path()).unwrap();
        let opts = TrainOptions { subjects: None, family: FamilyChoice::Nerd };
        run(&cfg, dir.path(), &opts).unwrap();

        let mut changed = micro_cfg();
        changed.train.alpha = 5e-3;
        let err = run(&changed, dir.path(), &opts).unwrap_err();
        match err {
            LabError::Training(msgs) => {
                assert!(msgs.iter().all(|m| m.contains("different settings")));
            }
            other => panic!("expected a training failure, got {other:?}"),
        }
    }

    #[test]
    fn subject_filter_trains_only_the_named_subject() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = micro_cfg();
        gen_data::run(&cfg, dir.path()).unwrap();
        let ds = crate::dataset::load_dataset(&dir.path().join("dataset.txt")).unwrap();
        let only = ds.subjects[1].id.clone();
        let opts = TrainOptions {
            subjects: Some(vec![only.clone()]),
            family: FamilyChoice::Control,
        };
        let units = run(&cfg, dir.path(), &opts).unwrap();
        assert_eq!(units.len(), 1);
        assert_eq!(units[0].subject_id, only);
        assert!(!checkpoints::model_dir(dir.path(), &ds.subjects[0].id, Family::Control).exists());
    }
}
