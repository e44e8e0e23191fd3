//! Simulated decoded-neurofeedback environment: linear decoders, squashed
//! training rewards, and synthetic subject cohorts.
//!
//! A synthetic subject owns a sparse linear decoder and a set of trials.
//! Each trial pairs a resting *baseline* voxel pattern with an *achieved*
//! pattern — the baseline shifted along the decoder's reward direction by an
//! amount controlled by the subject's proficiency, plus subject-specific
//! isotropic noise:
//!
//! ```text
//! achieved = baseline + proficiency * amplitude * W_hat + noise_scale * eps
//! ```
//!
//! Training never sees the decoder weights, only scalar rewards, mirroring
//! the closed-loop setting this simulates.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::diffusion::{DifferentiableReward, RewardFn};
use crate::error::{invalid, Result};
use crate::numerics::{logistic, sample_variance, RngStream};

/// A linear reward decoder: raw reward is `W . x + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct DecoderSpec {
    pub weights: Vec<f64>,
    pub bias: f64,
}

impl DecoderSpec {
    pub fn raw_reward(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.weights.len());
        self.weights.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + self.bias
    }
}

impl RewardFn for DecoderSpec {
    fn reward(&self, x: &[f64]) -> f64 {
        self.raw_reward(x)
    }
}

impl DifferentiableReward for DecoderSpec {
    fn reward_grad(&self, _x: &[f64]) -> Vec<f64> {
        self.weights.clone()
    }
}

/// The reward signal used for training: the raw decoder output centered on
/// its bias and squashed through a logistic,
/// `logistic((raw - b) / scale) = logistic(W . x / scale)`.
///
/// `scale` is the cohort-level standard deviation of baseline raw rewards
/// (see [`generate_cohort`]); it travels with the dataset so that training
/// runs see the same reward function the data were summarized under.
#[derive(Debug, Clone, PartialEq)]
pub struct SquashedReward {
    decoder: DecoderSpec,
    scale: f64,
}

impl SquashedReward {
    pub fn new(decoder: DecoderSpec, scale: f64) -> Result<Self> {
        if !(scale.is_finite() && scale > 0.0) {
            return Err(invalid("squash scale must be positive and finite"));
        }
        Ok(SquashedReward { decoder, scale })
    }

    pub fn decoder(&self) -> &DecoderSpec {
        &self.decoder
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }
}

impl RewardFn for SquashedReward {
    fn reward(&self, x: &[f64]) -> f64 {
        logistic((self.decoder.raw_reward(x) - self.decoder.bias) / self.scale)
    }
}

impl DifferentiableReward for SquashedReward {
    fn reward_grad(&self, x: &[f64]) -> Vec<f64> {
        let s = self.reward(x);
        let slope = s * (1.0 - s) / self.scale;
        self.decoder.weights.iter().map(|w| w * slope).collect()
    }
}

/// One closed-loop trial of a subject.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialRecord {
    pub trial_id: usize,
    pub baseline_state: Vec<f64>,
    pub achieved_state: Vec<f64>,
    /// Raw decoder reward of the achieved state.
    pub achieved_reward: f64,
}

/// A simulated participant.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSubject {
    pub id: String,
    pub index: usize,
    pub proficiency: f64,
    pub noise_scale: f64,
    pub decoder: DecoderSpec,
    pub trials: Vec<TrialRecord>,
}

impl SyntheticSubject {
    pub fn n_voxels(&self) -> usize {
        self.decoder.weights.len()
    }

    /// Mean raw reward over achieved states.
    pub fn mean_achieved_reward(&self) -> f64 {
        crate::numerics::mean(
            &self.trials.iter().map(|t| t.achieved_reward).collect::<Vec<_>>(),
        )
    }
}

/// Generator settings for one subject (and, via [`generate_cohort`], a whole
/// cohort drawing per-subject values from the configured ranges).
#[derive(Debug, Clone, PartialEq)]
pub struct SubjectConfig {
    pub v: usize,
    pub n_trials: usize,
    /// Probability that a voxel carries a nonzero decoder weight. At least
    /// one weight is always forced nonzero.
    pub sparsity: f64,
    /// Size of the reward-direction step at proficiency 1.
    pub amplitude: f64,
    pub proficiency_range: (f64, f64),
    pub noise_scale_range: (f64, f64),
    pub bias_range: (f64, f64),
    /// When set, the decoder weight vector is rescaled to this L2 norm,
    /// making reward magnitudes comparable across subjects.
    pub weight_norm: Option<f64>,
}

impl Default for SubjectConfig {
    fn default() -> Self {
        SubjectConfig {
            v: 10,
            n_trials: 40,
            sparsity: 0.5,
            amplitude: 2.0,
            proficiency_range: (0.2, 0.9),
            noise_scale_range: (0.3, 0.8),
            bias_range: (-0.5, 0.5),
            weight_norm: None,
        }
    }
}

fn validate_subject_config(cfg: &SubjectConfig) -> Result<()> {
    if cfg.v == 0 {
        return Err(invalid("subject needs at least one voxel"));
    }
    if cfg.n_trials == 0 {
        return Err(invalid("subject needs at least one trial"));
    }
    if !(cfg.sparsity > 0.0 && cfg.sparsity <= 1.0) {
        return Err(invalid("sparsity must lie in (0, 1]"));
    }
    if !(cfg.amplitude.is_finite() && cfg.amplitude >= 0.0) {
        return Err(invalid("amplitude must be finite and non-negative"));
    }
    let ranges = [
        ("proficiency_range", cfg.proficiency_range),
        ("noise_scale_range", cfg.noise_scale_range),
        ("bias_range", cfg.bias_range),
    ];
    for (name, (lo, hi)) in ranges {
        if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
            return Err(invalid(format!("{name} must be a finite (lo, hi) with lo <= hi")));
        }
    }
    if cfg.proficiency_range.0 < 0.0 {
        return Err(invalid("proficiency must be non-negative"));
    }
    if cfg.noise_scale_range.0 < 0.0 {
        return Err(invalid("noise_scale must be non-negative"));
    }
    if let Some(n) = cfg.weight_norm {
        if !(n.is_finite() && n > 0.0) {
            return Err(invalid("weight_norm must be positive and finite"));
        }
    }
    Ok(())
}

/// Generate one subject.
///
/// Draw order on `rng` is fixed (per-voxel weight gate + value, forced
/// weight if all gates missed, bias, proficiency, noise scale, then per
/// trial: baseline voxels followed by achieved-noise voxels). The noise
/// vector is drawn even when `noise_scale` is zero so that collapsing a
/// range does not shift any later draw.
pub fn generate_subject(
    rng: &mut RngStream,
    index: usize,
    cfg: &SubjectConfig,
) -> Result<SyntheticSubject> {
    validate_subject_config(cfg)?;
    let v = cfg.v;

    let mut weights = vec![0.0; v];
    let mut any = false;
    for w in weights.iter_mut() {
        if rng.uniform_01() < cfg.sparsity {
            *w = rng.normal();
            any = true;
        }
    }
    if !any {
        let j = rng.uniform_usize(v);
        let mut val = rng.normal();
        while val == 0.0 {
            val = rng.normal();
        }
        weights[j] = val;
    }
    if let Some(target) = cfg.weight_norm {
        let norm = libm::sqrt(weights.iter().map(|w| w * w).sum::<f64>());
        for w in weights.iter_mut() {
            *w *= target / norm;
        }
    }
    let bias = rng.uniform(cfg.bias_range.0, cfg.bias_range.1);
    let decoder = DecoderSpec { weights, bias };

    let proficiency = rng.uniform(cfg.proficiency_range.0, cfg.proficiency_range.1);
    let noise_scale = rng.uniform(cfg.noise_scale_range.0, cfg.noise_scale_range.1);

    let norm = libm::sqrt(decoder.weights.iter().map(|w| w * w).sum::<f64>());
    let direction: Vec<f64> = decoder.weights.iter().map(|w| w / norm).collect();

    let mut trials = Vec::with_capacity(cfg.n_trials);
    for trial_id in 0..cfg.n_trials {
        let baseline_state = rng.normal_vec(v);
        let mut achieved_state = Vec::with_capacity(v);
        for j in 0..v {
            achieved_state.push(
                baseline_state[j]
                    + proficiency * cfg.amplitude * direction[j]
                    + noise_scale * rng.normal(),
            );
        }
        let achieved_reward = decoder.raw_reward(&achieved_state);
        trials.push(TrialRecord {
            trial_id,
            baseline_state,
            achieved_state,
            achieved_reward,
        });
    }

    Ok(SyntheticSubject {
        id: format!("sub{:03}", index + 1),
        index,
        proficiency,
        noise_scale,
        decoder,
        trials,
    })
}

/// A generated cohort plus everything needed to reproduce and train on it.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub cohort_seed: u64,
    pub v: usize,
    /// Cohort std of baseline raw rewards; the squash scale for training.
    pub reward_scale: f64,
    pub subjects: Vec<SyntheticSubject>,
}

impl Dataset {
    /// The squashed training reward for one subject of this cohort.
    pub fn training_reward(&self, subject_index: usize) -> Result<SquashedReward> {
        let s = self
            .subjects
            .get(subject_index)
            .ok_or_else(|| invalid("subject index out of range"))?;
        SquashedReward::new(s.decoder.clone(), self.reward_scale)
    }
}

/// Generate `n_subjects` subjects from substreams of `seed` and compute the
/// cohort squash scale.
///
/// Subject i always sees substream (i, "subject") of the root seed, so a
/// cohort is reproducible subject-by-subject regardless of generation order.
/// The squash scale falls back to 1.0 if the cohort has fewer than two
/// baseline rewards or they are (numerically) constant.
pub fn generate_cohort(seed: u64, n_subjects: usize, cfg: &SubjectConfig) -> Result<Dataset> {
    if n_subjects == 0 {
        return Err(invalid("cohort needs at least one subject"));
    }
    let root = RngStream::new(seed);
    let mut subjects = Vec::with_capacity(n_subjects);
    for i in 0..n_subjects {
        let mut rng = root.substream(i as u64, "subject");
        subjects.push(generate_subject(&mut rng, i, cfg)?);
    }

    let baseline_rewards: Vec<f64> = subjects
        .iter()
        .flat_map(|s| s.trials.iter().map(|t| s.decoder.raw_reward(&t.baseline_state)))
        .collect();
    let var = sample_variance(&baseline_rewards);
    let reward_scale = if var.is_finite() && var > 1e-24 {
        libm::sqrt(var)
    } else {
        1.0
    };

    Ok(Dataset {
        cohort_seed: seed,
        v: cfg.v,
        reward_scale,
        subjects,
    })
}
