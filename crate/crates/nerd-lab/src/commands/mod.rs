//! The five pipeline commands. Each is a plain function over a resolved
//! config and an output directory, so the whole pipeline is drivable from
//! tests without spawning processes.

pub mod analyze;
pub mod fit;
pub mod gen_data;
pub mod report;
pub mod train;

use crate::{dataset, LabError, Result};
use nerd_core::envsim::Dataset;
use nerd_core::training::Family;
use std::path::Path;

/// Which model families a command should touch.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FamilyChoice {
    Nerd,
    Control,
    Both,
}

impl FamilyChoice {
    pub fn families(self) -> Vec<Family> {
        match self {
            FamilyChoice::Nerd => vec![Family::Nerd],
            FamilyChoice::Control => vec![Family::Control],
            FamilyChoice::Both => vec![Family::Nerd, Family::Control],
        }
    }

    pub fn parse(s: &str) -> Result<FamilyChoice> {
        match s {
            "nerd" => Ok(FamilyChoice::Nerd),
            "control" => Ok(FamilyChoice::Control),
            "both" => Ok(FamilyChoice::Both),
            other => Err(LabError::Config(format!(
                "unknown family '{other}' (expected nerd, control, or both)"
            ))),
        }
    }
}

pub(crate) fn dataset_path(out: &Path) -> std::path::PathBuf {
    out.join("dataset.txt")
}

/// Load the cohort a previous `gen-data` run wrote, with a pointed message
/// when it is not there yet.
pub(crate) fn load_dataset_required(out: &Path) -> Result<Dataset> {
    let path = dataset_path(out);
    if !path.exists() {
        return Err(LabError::Config(format!(
            "no dataset at {}; run gen-data first",
            path.display()
        )));
    }
    dataset::load_dataset(&path)
}

/// Resolve an optional subject-id filter to subject indices, in dataset
/// order. `None` means every subject.
pub(crate) fn resolve_subjects(ds: &Dataset, filter: Option<&[String]>) -> Result<Vec<usize>> {
    match filter {
        None => Ok((0..ds.subjects.len()).collect()),
        Some(ids) => {
            let mut picked = Vec::new();
            for id in ids {
                match ds.subjects.iter().position(|s| &s.id == id) {
                    Some(i) => picked.push(i),
                    None => {
                        return Err(LabError::Config(format!(
                            "subject '{id}' is not in the dataset"
                        )))
                    }
                }
            }
            picked.sort_unstable();
            picked.dedup();
            Ok(picked)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nerd_core::envsim::{generate_cohort, SubjectConfig};

    fn tiny() -> Dataset {
        let cfg = SubjectConfig { v: 4, n_trials: 3, ..SubjectConfig::default() };
        generate_cohort(11, 3, &cfg).unwrap()
    }

    #[test]
    fn family_choice_parses_and_expands() {
        assert_eq!(FamilyChoice::parse("both").unwrap().families().len(), 2);
        assert_eq!(FamilyChoice::parse("nerd").unwrap().families(), vec![Family::Nerd]);
        assert!(FamilyChoice::parse("fancy").is_err());
    }

    #[test]
    fn subject_filter_resolves_sorts_and_rejects() {
        let ds = tiny();
        let all = resolve_subjects(&ds, None).unwrap();
        assert_eq!(all, vec![0, 1, 2]);
        let ids = vec![ds.subjects[2].id.clone(), ds.subjects[0].id.clone()];
        assert_eq!(resolve_subjects(&ds, Some(&ids)).unwrap(), vec![0, 2]);
        let bad = vec!["nobody".to_string()];
        assert!(resolve_subjects(&ds, Some(&bad)).is_err());
    }
}
