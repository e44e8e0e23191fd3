//! Layered run configuration: built-in defaults, then a TOML file, then
//! command-line overrides. The fully resolved tree is echoed into the
//! output directory so every run carries its own provenance.

use crate::{LabError, Result};
use nerd_core::diffusion::{EpisodeStart, ScheduleKind};
use nerd_core::envsim::SubjectConfig;
use nerd_core::fitting::FitConfig;
use nerd_core::numerics::Linkage;
use nerd_core::training::{Family, TrainConfig};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Global seed; every stream in the pipeline derives from it.
    pub seed: u64,
    /// Output directory; flags and the NERD_LAB_OUT variable can override.
    pub out: Option<String>,
    /// Worker threads for subject-level fan-out.
    pub jobs: usize,
    pub dataset: DatasetSection,
    pub train: TrainSection,
    pub fit: FitSection,
    pub analysis: AnalysisSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetSection {
    pub subjects: usize,
    pub v: usize,
    pub trials: usize,
    pub sparsity: f64,
    pub amplitude: f64,
    pub proficiency: (f64, f64),
    pub noise_scale: (f64, f64),
    pub bias: (f64, f64),
    pub weight_norm: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub lambda: f64,
    pub gamma: f64,
    pub alpha: f64,
    pub clip_norm: f64,
    pub batch_episodes: usize,
    pub hidden: usize,
    pub sigma_min: f64,
    pub steps: usize,
    pub beta_min: f64,
    pub beta_max: f64,
    /// `linear` or `constant`.
    pub schedule: String,
    /// Episode start mode: `forward`, `noise`, or `raw`.
    pub start: String,
    pub checkpoint_stride: usize,
    pub nerd: FamilySection,
    pub control: FamilySection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FamilySection {
    pub epochs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitSection {
    pub samples: usize,
    pub variance_floor: f64,
    pub stochastic: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisSection {
    /// Episodes aggregated when extracting noise trajectories.
    pub episodes: usize,
    /// Trials included in trial-pair dissimilarity matrices and the MDS
    /// scatter (caps artifact size).
    pub trialpair_trials: usize,
    pub voxel_k: usize,
    pub subject_k: usize,
    pub kmeans_restarts: usize,
    /// `average` or `complete`; `ward` is accepted with a warning and runs
    /// as `average`.
    pub linkage: String,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 7,
            out: None,
            jobs: 1,
            dataset: DatasetSection::default(),
            train: TrainSection::default(),
            fit: FitSection::default(),
            analysis: AnalysisSection::default(),
        }
    }
}

impl Default for DatasetSection {
    fn default() -> Self {
        DatasetSection {
            subjects: 24,
            v: 30,
            trials: 150,
            sparsity: 0.5,
            amplitude: 2.0,
            proficiency: (0.2, 0.9),
            noise_scale: (0.3, 0.8),
            bias: (-0.5, 0.5),
            weight_norm: None,
        }
    }
}

impl Default for TrainSection {
    fn default() -> Self {
        TrainSection {
            lambda: 0.1,
            gamma: 0.99,
            alpha: 1e-3,
            clip_norm: 5.0,
            batch_episodes: 32,
            hidden: 128,
            sigma_min: 1e-3,
            steps: 40,
            beta_min: 1e-4,
            beta_max: 0.02,
            schedule: "linear".into(),
            start: "forward".into(),
            checkpoint_stride: 10,
            nerd: FamilySection { epochs: 300 },
            control: FamilySection { epochs: 100 },
        }
    }
}

impl Default for FamilySection {
    fn default() -> Self {
        FamilySection { epochs: 100 }
    }
}

impl Default for FitSection {
    fn default() -> Self {
        FitSection { samples: 30, variance_floor: 1e-4, stochastic: true }
    }
}

impl Default for AnalysisSection {
    fn default() -> Self {
        AnalysisSection {
            episodes: 30,
            trialpair_trials: 16,
            voxel_k: 4,
            subject_k: 4,
            kmeans_restarts: 8,
            linkage: "average".into(),
        }
    }
}

/// Command-line values that override the file layer.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<String>,
    pub jobs: Option<usize>,
    pub checkpoint_stride: Option<usize>,
}

impl RunConfig {
    /// Defaults, optionally overlaid by a TOML file.
    pub fn load(path: Option<&Path>) -> Result<RunConfig> {
        match path {
            None => Ok(RunConfig::default()),
            Some(p) => {
                let text = crate::textio::read_to_string(p)?;
                toml::from_str(&text)
                    .map_err(|e| LabError::Config(format!("{}: {e}", p.display())))
            }
        }
    }

    pub fn apply(&mut self, over: &Overrides) {
        if let Some(seed) = over.seed {
            self.seed = seed;
        }
        if let Some(out) = &over.out {
            self.out = Some(out.clone());
        }
        if let Some(jobs) = over.jobs {
            self.jobs = jobs;
        }
        if let Some(stride) = over.checkpoint_stride {
            self.train.checkpoint_stride = stride;
        }
    }

    /// Rewrite soft-deprecated values in place; returns human-readable
    /// warnings for anything that was adjusted.
    pub fn normalize(&mut self) -> Vec<String> {
        let mut warnings = Vec::new();
        if self.analysis.linkage == "ward" {
            warnings.push(
                "linkage `ward` is not supported on plain dissimilarities; using `average`"
                    .to_string(),
            );
            self.analysis.linkage = "average".into();
        }
        warnings
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(LabError::Config(msg));
        if self.jobs == 0 {
            return bad("jobs must be at least 1".into());
        }
        let d = &self.dataset;
        if d.subjects == 0 || d.v == 0 || d.trials == 0 {
            return bad("dataset.subjects, dataset.v, and dataset.trials must be positive".into());
        }
        for (name, (lo, hi)) in [
            ("proficiency", d.proficiency),
            ("noise_scale", d.noise_scale),
        ] {
            if !(lo.is_finite() && hi.is_finite()) || lo > hi {
                return bad(format!("dataset.{name} range is invalid"));
            }
        }
        if !(d.bias.0.is_finite() && d.bias.1.is_finite()) || d.bias.0 > d.bias.1 {
            return bad("dataset.bias range is invalid".into());
        }
        if !d.sparsity.is_finite() || !(0.0..=1.0).contains(&d.sparsity) {
            return bad("dataset.sparsity must lie in [0, 1]".into());
        }
        if !d.amplitude.is_finite() || d.amplitude <= 0.0 {
            return bad("dataset.amplitude must be positive".into());
        }
        self.schedule_kind()?;
        self.start_mode()?;
        self.linkage()?;
        // delegate hyperparameter checks to the core's own validation
        self.train_config(Family::Nerd, 1.0)?.validate()?;
        self.train_config(Family::Control, 1.0)?.validate()?;
        self.fit_config()?.validate()?;
        let a = &self.analysis;
        if a.episodes < 2 || a.trialpair_trials < 2 {
            return bad("analysis.episodes and analysis.trialpair_trials must be at least 2".into());
        }
        if a.voxel_k == 0 || a.subject_k == 0 || a.kmeans_restarts == 0 {
            return bad("analysis cluster counts and restarts must be positive".into());
        }
        Ok(())
    }

    pub fn schedule_kind(&self) -> Result<ScheduleKind> {
        match self.train.schedule.as_str() {
            "linear" => Ok(ScheduleKind::Linear),
            "constant" => Ok(ScheduleKind::Constant),
            other => Err(LabError::Config(format!(
                "train.schedule must be `linear` or `constant`, found `{other}`"
            ))),
        }
    }

    pub fn start_mode(&self) -> Result<EpisodeStart> {
        match self.train.start.as_str() {
            "forward" => Ok(EpisodeStart::ForwardNoised),
            "noise" => Ok(EpisodeStart::PureNoise),
            "raw" => Ok(EpisodeStart::RawPattern),
            other => Err(LabError::Config(format!(
                "train.start must be `forward`, `noise`, or `raw`, found `{other}`"
            ))),
        }
    }

    pub fn linkage(&self) -> Result<Linkage> {
        match self.analysis.linkage.as_str() {
            "average" => Ok(Linkage::Average),
            "complete" => Ok(Linkage::Complete),
            other => Err(LabError::Config(format!(
                "analysis.linkage must be `average` or `complete`, found `{other}`"
            ))),
        }
    }

    /// Resolve the output directory: flag/file value first, then the
    /// NERD_LAB_OUT variable, then `./out`.
    pub fn out_dir(&self, env_out: Option<&str>) -> PathBuf {
        match (&self.out, env_out) {
            (Some(out), _) => PathBuf::from(out),
            (None, Some(env)) if !env.is_empty() => PathBuf::from(env),
            _ => PathBuf::from("out"),
        }
    }

    pub fn subject_config(&self) -> SubjectConfig {
        let d = &self.dataset;
        SubjectConfig {
            v: d.v,
            n_trials: d.trials,
            sparsity: d.sparsity,
            amplitude: d.amplitude,
            proficiency_range: d.proficiency,
            noise_scale_range: d.noise_scale,
            bias_range: d.bias,
            weight_norm: d.weight_norm,
        }
    }

    pub fn train_config(&self, family: Family, reward_scale: f64) -> Result<TrainConfig> {
        let t = &self.train;
        Ok(TrainConfig {
            lambda: t.lambda,
            gamma: t.gamma,
            alpha: t.alpha,
            clip_norm: t.clip_norm,
            batch_episodes: t.batch_episodes,
            n_epochs: match family {
                Family::Nerd => t.nerd.epochs,
                Family::Control => t.control.epochs,
            },
            hidden_size: t.hidden,
            sigma_min: t.sigma_min,
            schedule_kind: self.schedule_kind()?,
            num_steps: t.steps,
            beta_min: t.beta_min,
            beta_max: t.beta_max,
            start_mode: self.start_mode()?,
            reward_scale,
            seed: self.seed,
            checkpoint_stride: t.checkpoint_stride,
        })
    }

    pub fn fit_config(&self) -> Result<FitConfig> {
        Ok(FitConfig {
            n_samples: self.fit.samples,
            variance_floor: self.fit.variance_floor,
            stochastic: self.fit.stochastic,
            start_mode: self.start_mode()?,
        })
    }

    /// The fully resolved configuration as TOML, for the provenance echo.
    pub fn resolved_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_describe_the_reference_cohort() {
        let cfg = RunConfig::default();
        assert_eq!(cfg.dataset.subjects, 24);
        assert_eq!(cfg.dataset.v, 30);
        assert_eq!(cfg.dataset.trials, 150);
        assert_eq!(cfg.train.nerd.epochs, 300);
        assert_eq!(cfg.train.control.epochs, 100);
        assert_eq!(cfg.train.steps, 40);
        cfg.validate().unwrap();
    }

    #[test]
    fn file_layer_overrides_only_what_it_names() {
        let text = "seed = 99\n[dataset]\nsubjects = 2\n[train.nerd]\nepochs = 12\n";
        let cfg: RunConfig = toml::from_str(text).unwrap();
        assert_eq!(cfg.seed, 99);
        assert_eq!(cfg.dataset.subjects, 2);
        assert_eq!(cfg.dataset.v, 30, "unnamed fields keep their defaults");
        assert_eq!(cfg.train.nerd.epochs, 12);
        assert_eq!(cfg.train.control.epochs, 100);
    }

    #[test]
    fn flags_override_the_file_layer() {
        let mut cfg: RunConfig = toml::from_str("seed = 99\nout = \"from-file\"\n").unwrap();
        cfg.apply(&Overrides {
            seed: Some(123),
            out: Some("from-flag".into()),
            jobs: Some(3),
            checkpoint_stride: Some(4),
        });
        assert_eq!(cfg.seed, 123);
        assert_eq!(cfg.out_dir(Some("from-env")), PathBuf::from("from-flag"));
        assert_eq!(cfg.jobs, 3);
        assert_eq!(cfg.train.checkpoint_stride, 4);
    }

    #[test]
    fn out_dir_precedence_falls_back_to_env_then_default() {
        let cfg = RunConfig::default();
        assert_eq!(cfg.out_dir(Some("env-dir")), PathBuf::from("env-dir"));
        assert_eq!(cfg.out_dir(None), PathBuf::from("out"));
        assert_eq!(cfg.out_dir(Some("")), PathBuf::from("out"));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = toml::from_str::<RunConfig>("sede = 3\n").unwrap_err().to_string();
        assert!(err.contains("sede"), "{err}");
    }

    #[test]
    fn ward_linkage_degrades_with_a_warning() {
        let mut cfg: RunConfig = toml::from_str("[analysis]\nlinkage = \"ward\"\n").unwrap();
        let warnings = cfg.normalize();
        assert_eq!(warnings.len(), 1);
        assert_eq!(cfg.analysis.linkage, "average");
        assert!(cfg.normalize().is_empty(), "normalizing twice is quiet");
    }

    #[test]
    fn validation_rejects_bad_values() {
        let mut cfg = RunConfig::default();
        cfg.train.alpha = -1.0;
        assert!(cfg.validate().is_err());

        let mut cfg = RunConfig::default();
        cfg.dataset.subjects = 0;
        assert!(cfg.validate().is_err());

        let mut cfg = RunConfig::default();
        cfg.train.schedule = "cosine".into();
        assert!(cfg.validate().is_err());

        let mut cfg = RunConfig::default();
        cfg.dataset.sparsity = f64::NAN;
        assert!(cfg.validate().is_err());

        let mut cfg = RunConfig::default();
        cfg.analysis.linkage = "ward".into();
        assert!(cfg.validate().is_err(), "ward must be normalized before validate");
    }

    #[test]
    fn resolved_echo_round_trips() {
        let mut cfg = RunConfig::default();
        cfg.seed = 31337;
        cfg.out = Some("runs/demo".into());
        let text = cfg.resolved_toml();
        let back: RunConfig = toml::from_str(&text).unwrap();
        assert_eq!(back, cfg);
    }
}
