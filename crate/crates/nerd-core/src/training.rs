//! Training harnesses for the two model families.
//!
//! The stochastic policy is updated by REINFORCE with a per-step constant
//! baseline (the batch mean return at that step) plus a lambda-weighted
//! denoising regression term; the control model follows the reverse chain
//! deterministically and descends the exact gradient of the negated
//! terminal reward, obtained by backpropagating through every composed
//! step.
//!
//! Both families use plain gradient steps with global-norm clipping — no
//! momentum, no adaptive scaling. One *epoch* is one batch of episodes (or
//! chains) followed by one parameter step. Checkpoints snapshot the
//! parameters together with the RNG cursor, so a run resumed from its last
//! checkpoint replays the remaining epochs bit-for-bit.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::diffusion::{
    forward_pairs, make_schedule, make_start, run_episode, DenoisingEpisode, EpisodeStart,
    ForwardPair, NoiseSchedule, ScheduleKind,
};
use crate::envsim::{SquashedReward, SyntheticSubject};
use crate::error::{invalid, Error, Result};
use crate::numerics::RngStream;
use crate::policy::{
    backward_logprob, backward_mu_vjp, backward_reward_deterministic, init_params, policy_forward,
    Gradients, PolicyParams,
};

/// Which of the two model families a run trains.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Family {
    Nerd,
    Control,
}

impl Family {
    /// Substream tag, so the two families never share random draws.
    pub fn stream_tag(&self) -> &'static str {
        match self {
            Family::Nerd => "train-nerd",
            Family::Control => "train-control",
        }
    }

    /// Short lowercase name used in file paths and report tables.
    pub fn label(&self) -> &'static str {
        match self {
            Family::Nerd => "nerd",
            Family::Control => "control",
        }
    }
}

/// Hyperparameters and run controls shared by both families.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    /// Weight of the denoising regression term in the hybrid objective.
    pub lambda: f64,
    /// Per-step return discount.
    pub gamma: f64,
    /// Gradient step size.
    pub alpha: f64,
    /// Global-norm ceiling applied to each epoch's gradient.
    pub clip_norm: f64,
    /// Episodes (or control chains) per epoch.
    pub batch_episodes: usize,
    pub n_epochs: usize,
    pub hidden_size: usize,
    pub sigma_min: f64,
    pub schedule_kind: ScheduleKind,
    pub num_steps: usize,
    pub beta_min: f64,
    pub beta_max: f64,
    pub start_mode: EpisodeStart,
    /// Scale of the logistic squash applied to raw decoder rewards. Comes
    /// from the dataset the subject was drawn from, so every model trained
    /// on one cohort sees the same reward units.
    pub reward_scale: f64,
    pub seed: u64,
    /// Keep checkpoints for epochs divisible by this; epoch 0 and the final
    /// epoch are always kept.
    pub checkpoint_stride: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lambda: 0.1,
            gamma: 0.99,
            alpha: 1e-3,
            clip_norm: 5.0,
            batch_episodes: 32,
            n_epochs: 300,
            hidden_size: 128,
            sigma_min: 1e-3,
            schedule_kind: ScheduleKind::Linear,
            num_steps: 40,
            beta_min: 1e-4,
            beta_max: 0.02,
            start_mode: EpisodeStart::ForwardNoised,
            reward_scale: 1.0,
            seed: 0,
            checkpoint_stride: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(invalid("gamma must lie strictly inside (0, 1)"));
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(invalid("alpha must be positive and finite"));
        }
        if !(self.clip_norm > 0.0 && self.clip_norm.is_finite()) {
            return Err(invalid("clip_norm must be positive and finite"));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(invalid("lambda must be non-negative and finite"));
        }
        if self.batch_episodes == 0 {
            return Err(invalid("batch_episodes must be at least 1"));
        }
        if self.hidden_size == 0 {
            return Err(invalid("hidden_size must be at least 1"));
        }
        if !(self.sigma_min > 0.0 && self.sigma_min < 1.0) {
            return Err(invalid("sigma_min must lie in (0, 1)"));
        }
        if !(self.reward_scale > 0.0 && self.reward_scale.is_finite()) {
            return Err(invalid("reward_scale must be positive and finite"));
        }
        if self.checkpoint_stride == 0 {
            return Err(invalid("checkpoint_stride must be at least 1"));
        }
        self.schedule().map(|_| ())
    }

    /// Build the noise schedule this configuration describes.
    pub fn schedule(&self) -> Result<NoiseSchedule> {
        make_schedule(self.schedule_kind, self.num_steps, self.beta_min, self.beta_max)
    }

    /// Order-sensitive FNV-1a digest over every field, used to pair
    /// checkpoints with the exact configuration that produced them. Any
    /// field change — including seed, epoch budget, or stride — yields a
    /// different hash and therefore refuses to resume.
    pub fn content_hash(&self) -> u64 {
        let mut h = Fnv64::new();
        h.push_f64(self.lambda);
        h.push_f64(self.gamma);
        h.push_f64(self.alpha);
        h.push_f64(self.clip_norm);
        h.push_u64(self.batch_episodes as u64);
        h.push_u64(self.n_epochs as u64);
        h.push_u64(self.hidden_size as u64);
        h.push_f64(self.sigma_min);
        h.push_u64(match self.schedule_kind {
            ScheduleKind::Linear => 0,
            ScheduleKind::Constant => 1,
        });
        h.push_u64(self.num_steps as u64);
        h.push_f64(self.beta_min);
        h.push_f64(self.beta_max);
        h.push_u64(match self.start_mode {
            EpisodeStart::ForwardNoised => 0,
            EpisodeStart::PureNoise => 1,
            EpisodeStart::RawPattern => 2,
        });
        h.push_f64(self.reward_scale);
        h.push_u64(self.seed);
        h.push_u64(self.checkpoint_stride as u64);
        h.finish()
    }
}

struct Fnv64(u64);

impl Fnv64 {
    fn new() -> Self {
        Fnv64(0xcbf2_9ce4_8422_2325)
    }

    fn push_u64(&mut self, x: u64) {
        for byte in x.to_le_bytes() {
            self.0 ^= byte as u64;
            self.0 = self.0.wrapping_mul(0x0000_0100_0000_01b3);
        }
    }

    fn push_f64(&mut self, x: f64) {
        self.push_u64(x.to_bits());
    }

    fn finish(&self) -> u64 {
        self.0
    }
}

/// One row of the training log.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    /// Reported objective: denoising MSE minus lambda times the batch mean
    /// reward for the policy; minus the mean reward for the control model.
    pub mean_loss: f64,
    /// Batch mean terminal (squashed) reward.
    pub mean_reward: f64,
    /// Batch mean return from the first step.
    pub mean_return: f64,
    /// Gradient global norm before clipping.
    pub grad_norm_pre_clip: f64,
}

/// Everything needed to restart training after a given epoch, bit-for-bit.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub epoch: usize,
    pub params: PolicyParams,
    /// `TrainConfig::content_hash` of the run that wrote this.
    pub config_hash: u64,
    /// Creation seed of the training stream.
    pub rng_seed: u64,
    /// Stream cursor right after this epoch's draws.
    pub rng_state: [u64; 4],
}

/// Checkpoints and logs from one training run. `aborted` is `Some` when an
/// epoch failed numerically; everything up to the last good checkpoint is
/// retained so the caller can still persist and inspect the run.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutput {
    pub checkpoints: Vec<Checkpoint>,
    pub logs: Vec<EpochLog>,
    pub aborted: Option<Error>,
}

/// Discounted returns computed right-to-left in one pass, so that
/// `G[i] = rewards[i] + gamma * G[i + 1]` holds exactly.
pub fn compute_returns(rewards: &[f64], gamma: f64) -> Vec<f64> {
    let mut out = vec![0.0; rewards.len()];
    let mut acc = 0.0;
    for i in (0..rewards.len()).rev() {
        acc = rewards[i] + gamma * acc;
        out[i] = acc;
    }
    out
}

/// One supervised target for the denoising regression term: the network,
/// shown `state` at step `t`, should predict the state one step earlier.
#[derive(Debug, Clone, PartialEq)]
pub struct DenoisePair {
    pub t: usize,
    pub state: Vec<f64>,
    pub target_prev: Vec<f64>,
}

/// Turn a recorded forward trajectory into regression pairs; the clean
/// pattern `x0` itself is the target for the `t = 1` entry.
pub fn denoise_pairs_from_trajectory(x0: &[f64], traj: &[ForwardPair]) -> Vec<DenoisePair> {
    let mut out = Vec::with_capacity(traj.len());
    for (i, p) in traj.iter().enumerate() {
        let prev = if i == 0 { x0.to_vec() } else { traj[i - 1].state.clone() };
        out.push(DenoisePair { t: p.t, state: p.state.clone(), target_prev: prev });
    }
    out
}

/// The hybrid objective's reported value and the denoising term's
/// contribution to the ascent gradient.
///
/// The loss is the denoising MSE (averaged over every pair and voxel) minus
/// `lambda` times the batch mean terminal reward; the returned gradient is
/// the MSE gradient already scaled by `-lambda`, i.e. ready to add to an
/// ascent direction. The REINFORCE part of the gradient is not included
/// here — `reinforce_update` adds it. An empty pair list contributes zero
/// MSE and a zero gradient.
pub fn hybrid_loss(
    params: &PolicyParams,
    pairs: &[DenoisePair],
    episodes: &[DenoisingEpisode],
    lambda: f64,
    t_max: usize,
) -> Result<(f64, Gradients)> {
    let v = params.n_voxels();
    let mut g = Gradients::zeros_like(params);
    let mut mse = 0.0;
    if !pairs.is_empty() {
        let denom = (pairs.len() * v) as f64;
        for pair in pairs {
            if pair.target_prev.len() != v {
                return Err(invalid("denoise pair target has the wrong voxel count"));
            }
            let out = policy_forward(params, &pair.state, pair.t, t_max)?;
            let mut d_mu = vec![0.0; v];
            for j in 0..v {
                let diff = out.mu[j] - pair.target_prev[j];
                mse += diff * diff;
                d_mu[j] = 2.0 * diff / denom;
            }
            let (g_pair, _) = backward_mu_vjp(params, &out, &d_mu);
            g.add_scaled(&g_pair, 1.0);
        }
        mse /= denom;
    }
    g.scale(-lambda);
    let mean_reward = if episodes.is_empty() {
        0.0
    } else {
        episodes.iter().map(|e| e.final_reward).sum::<f64>() / episodes.len() as f64
    };
    Ok((mse - lambda * mean_reward, g))
}

/// One policy-gradient ascent step over a batch of episodes.
///
/// Returns are computed from the terminal reward only; at each step the
/// baseline is the batch mean return for that step, and every episode
/// contributes its advantage-weighted log-probability gradient, averaged
/// over the batch. The denoising term from [`hybrid_loss`] is added, the
/// total is clipped to `clip_norm`, and one ascent step of size `alpha` is
/// taken. The returned log row carries `epoch = 0`; the training loop
/// stamps the real number.
pub fn reinforce_update(
    params: &PolicyParams,
    episodes: &[DenoisingEpisode],
    pairs: &[DenoisePair],
    cfg: &TrainConfig,
) -> Result<(PolicyParams, EpochLog)> {
    if episodes.is_empty() {
        return Err(invalid("reinforce_update needs at least one episode"));
    }
    let t_max = episodes[0].num_steps();
    if t_max == 0 {
        return Err(invalid("episodes must have at least one step"));
    }
    if episodes.iter().any(|e| e.num_steps() != t_max) {
        return Err(invalid("episodes in a batch must share a step count"));
    }
    let b = episodes.len() as f64;

    let returns: Vec<Vec<f64>> = episodes
        .iter()
        .map(|ep| {
            let mut terminal = vec![0.0; t_max];
            terminal[t_max - 1] = ep.final_reward;
            compute_returns(&terminal, cfg.gamma)
        })
        .collect();
    let mut baseline = vec![0.0; t_max];
    for g in &returns {
        for (acc, gt) in baseline.iter_mut().zip(g) {
            *acc += gt;
        }
    }
    for acc in &mut baseline {
        *acc /= b;
    }

    let mut total = Gradients::zeros_like(params);
    for (ep, g_ep) in episodes.iter().zip(&returns) {
        for i in 0..t_max {
            let adv = g_ep[i] - baseline[i];
            if adv == 0.0 {
                continue;
            }
            let out = policy_forward(params, &ep.states[i], t_max - i, t_max)?;
            let g_step = backward_logprob(params, &out, &ep.states[i + 1]);
            total.add_scaled(&g_step, adv / b);
        }
    }

    let (loss, g_denoise) = hybrid_loss(params, pairs, episodes, cfg.lambda, t_max)?;
    total.add_scaled(&g_denoise, 1.0);

    let pre_norm = total.clip_to(cfg.clip_norm);
    if !pre_norm.is_finite() {
        return Err(Error::NumericFailure {
            step: 0,
            detail: String::from("non-finite gradient after clipping"),
        });
    }
    let mut next = params.clone();
    next.step_in_place(&total, cfg.alpha);
    if !next.is_finite() {
        return Err(Error::NumericFailure {
            step: 0,
            detail: String::from("non-finite parameters after the ascent step"),
        });
    }

    let mean_reward = episodes.iter().map(|e| e.final_reward).sum::<f64>() / b;
    let mean_return = returns.iter().map(|g| g[0]).sum::<f64>() / b;
    Ok((
        next,
        EpochLog { epoch: 0, mean_loss: loss, mean_reward, mean_return, grad_norm_pre_clip: pre_norm },
    ))
}

fn nerd_epoch(
    params: &PolicyParams,
    subject: &SyntheticSubject,
    reward: &SquashedReward,
    schedule: &NoiseSchedule,
    cfg: &TrainConfig,
    epoch: usize,
    rng: &mut RngStream,
) -> Result<(PolicyParams, EpochLog)> {
    let b = cfg.batch_episodes;
    let n_trials = subject.trials.len();
    // Cycle through the subject's trials across epochs so every baseline
    // pattern is visited, not just the first `batch_episodes` of them.
    let trial_for = |j: usize| &subject.trials[((epoch - 1) * b + j) % n_trials];

    let mut episodes = Vec::with_capacity(b);
    for j in 0..b {
        let start = make_start(cfg.start_mode, &trial_for(j).baseline_state, schedule, rng);
        episodes.push(run_episode(params, &start, schedule, reward, rng, true)?);
    }
    // The regression term anchors the network to the subject's *attained*
    // patterns — the states they actually produced under feedback — so the
    // learned reverse process carries the subject's own signature, not just
    // the resting baseline.
    let mut pairs = Vec::with_capacity(b * schedule.num_steps());
    for j in 0..b {
        let attained = &trial_for(j).achieved_state;
        let traj = forward_pairs(attained, schedule, rng);
        pairs.extend(denoise_pairs_from_trajectory(attained, &traj));
    }
    reinforce_update(params, &episodes, &pairs, cfg)
}

fn control_epoch(
    params: &PolicyParams,
    subject: &SyntheticSubject,
    reward: &SquashedReward,
    schedule: &NoiseSchedule,
    cfg: &TrainConfig,
    epoch: usize,
    rng: &mut RngStream,
) -> Result<(PolicyParams, EpochLog)> {
    let b = cfg.batch_episodes;
    let n_trials = subject.trials.len();
    let mut grad = Gradients::zeros_like(params);
    let mut reward_sum = 0.0;
    for j in 0..b {
        let trial = &subject.trials[((epoch - 1) * b + j) % n_trials];
        let start = make_start(cfg.start_mode, &trial.baseline_state, schedule, rng);
        let (g, r) = backward_reward_deterministic(params, &start, schedule.num_steps(), reward)?;
        grad.add_scaled(&g, 1.0 / b as f64);
        reward_sum += r;
    }
    // The chain backward pass produces the gradient of the loss -R; flip it
    // into ascent form so both families share the same stepping code.
    grad.scale(-1.0);
    let pre_norm = grad.clip_to(cfg.clip_norm);
    if !pre_norm.is_finite() {
        return Err(Error::NumericFailure {
            step: epoch,
            detail: String::from("non-finite gradient after clipping"),
        });
    }
    let mut next = params.clone();
    next.step_in_place(&grad, cfg.alpha);
    if !next.is_finite() {
        return Err(Error::NumericFailure {
            step: epoch,
            detail: String::from("non-finite parameters after the descent step"),
        });
    }
    let mean_reward = reward_sum / b as f64;
    Ok((
        next,
        EpochLog {
            epoch: 0,
            mean_loss: -mean_reward,
            mean_reward,
            mean_return: mean_reward,
            grad_norm_pre_clip: pre_norm,
        },
    ))
}

fn run_training(
    subject: &SyntheticSubject,
    cfg: &TrainConfig,
    family: Family,
    resume_from: Option<&Checkpoint>,
) -> Result<TrainOutput> {
    cfg.validate()?;
    let schedule = cfg.schedule()?;
    if subject.trials.is_empty() {
        return Err(invalid("subject has no trials to train on"));
    }
    let v = subject.n_voxels();
    let reward = SquashedReward::new(subject.decoder.clone(), cfg.reward_scale)?;
    let hash = cfg.content_hash();

    let mut checkpoints = Vec::new();
    let mut logs = Vec::new();

    let (mut params, mut rng, first_epoch) = match resume_from {
        Some(ck) => {
            if ck.config_hash != hash {
                return Err(invalid("checkpoint was written under a different configuration"));
            }
            if ck.params.n_voxels() != v || ck.params.hidden_size() != cfg.hidden_size {
                return Err(invalid("checkpoint shape does not match the subject and configuration"));
            }
            if ck.epoch > cfg.n_epochs {
                return Err(invalid("checkpoint lies beyond the configured epoch count"));
            }
            (ck.params.clone(), RngStream::restore(ck.rng_seed, ck.rng_state), ck.epoch + 1)
        }
        None => {
            let mut rng = RngStream::new(cfg.seed).substream(subject.index as u64, family.stream_tag());
            let params = init_params(&mut rng, v, cfg.hidden_size, cfg.sigma_min)?;
            checkpoints.push(Checkpoint {
                epoch: 0,
                params: params.clone(),
                config_hash: hash,
                rng_seed: rng.seed(),
                rng_state: rng.state(),
            });
            (params, rng, 1)
        }
    };

    for epoch in first_epoch..=cfg.n_epochs {
        let step = match family {
            Family::Nerd => nerd_epoch(&params, subject, &reward, &schedule, cfg, epoch, &mut rng),
            Family::Control => control_epoch(&params, subject, &reward, &schedule, cfg, epoch, &mut rng),
        };
        let (next, mut log) = match step {
            Ok(pair) => pair,
            Err(e) => {
                // Keep the run's artifacts: the caller still gets every
                // checkpoint and log row written before the failure.
                let aborted = match e {
                    Error::NumericFailure { detail, .. } => {
                        Error::NumericFailure { step: epoch, detail }
                    }
                    other => other,
                };
                return Ok(TrainOutput { checkpoints, logs, aborted: Some(aborted) });
            }
        };
        log.epoch = epoch;
        logs.push(log);
        params = next;
        if epoch % cfg.checkpoint_stride == 0 || epoch == cfg.n_epochs {
            checkpoints.push(Checkpoint {
                epoch,
                params: params.clone(),
                config_hash: hash,
                rng_seed: rng.seed(),
                rng_state: rng.state(),
            });
        }
    }

    Ok(TrainOutput { checkpoints, logs, aborted: None })
}

/// Train the stochastic policy for one subject from scratch.
pub fn train_nerd(subject: &SyntheticSubject, cfg: &TrainConfig) -> Result<TrainOutput> {
    run_training(subject, cfg, Family::Nerd, None)
}

/// Train the deterministic control model for one subject from scratch.
pub fn train_control(subject: &SyntheticSubject, cfg: &TrainConfig) -> Result<TrainOutput> {
    run_training(subject, cfg, Family::Control, None)
}

/// Continue a run from a checkpoint, bit-for-bit identical to a run that
/// never stopped. The output covers only the continued epochs; the resume
/// checkpoint itself is not repeated.
pub fn resume_training(
    subject: &SyntheticSubject,
    cfg: &TrainConfig,
    family: Family,
    from: &Checkpoint,
) -> Result<TrainOutput> {
    run_training(subject, cfg, family, Some(from))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envsim::{DecoderSpec, TrialRecord};
    use crate::numerics::logistic;
    use crate::policy::param_count;

    fn tiny_subject(v: usize, n_trials: usize, weights: Vec<f64>, bias: f64) -> SyntheticSubject {
        let trials = (0..n_trials)
            .map(|k| TrialRecord {
                trial_id: k,
                baseline_state: (0..v).map(|j| 0.1 * (j + 1) as f64 + 0.05 * k as f64).collect(),
                achieved_state: vec![0.0; v],
                achieved_reward: bias,
            })
            .collect();
        SyntheticSubject {
            id: String::from("sub901"),
            index: 900,
            proficiency: 0.5,
            noise_scale: 0.1,
            decoder: DecoderSpec { weights, bias },
            trials,
        }
    }

    fn small_cfg(v_steps: usize) -> TrainConfig {
        TrainConfig {
            batch_episodes: 3,
            n_epochs: 4,
            hidden_size: 4,
            num_steps: v_steps,
            alpha: 0.05,
            seed: 7,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn returns_match_terminal_fixture() {
        let g = compute_returns(&[0.0, 0.0, 1.0], 0.9);
        assert!((g[0] - 0.81).abs() < 1e-15);
        assert!((g[1] - 0.9).abs() < 1e-15);
        assert!((g[2] - 1.0).abs() < 1e-15);
        assert!(compute_returns(&[], 0.9).is_empty());
    }

    #[test]
    fn returns_flatten_as_gamma_approaches_one() {
        let g = compute_returns(&[0.0, 0.0, 0.0, 0.0, 0.7], 1.0 - 1e-13);
        for gt in &g {
            assert!((gt - 0.7).abs() < 1e-9);
        }
    }

    #[test]
    fn returns_satisfy_recursion_and_power_series() {
        let rewards = [0.3, -1.2, 0.05, 2.0, -0.4, 0.9, 0.11];
        let gamma = 0.37;
        let g = compute_returns(&rewards, gamma);
        for i in 0..rewards.len() - 1 {
            assert!((g[i] - (rewards[i] + gamma * g[i + 1])).abs() < 1e-15);
        }
        for i in 0..rewards.len() {
            let direct: f64 = (i..rewards.len())
                .map(|k| rewards[k] * gamma.powi((k - i) as i32))
                .sum();
            assert!((g[i] - direct).abs() < 1e-12);
        }
    }

    #[test]
    fn identical_episodes_leave_params_unchanged() {
        let sched = make_schedule(ScheduleKind::Linear, 4, 1e-3, 0.02).unwrap();
        let mut init_rng = RngStream::new(3);
        let params = init_params(&mut init_rng, 2, 3, 1e-3).unwrap();
        let reward = |x: &[f64]| x[0] - x[1];
        let episode = {
            let mut rng = RngStream::new(50);
            run_episode(&params, &[0.4, -0.6], &sched, &reward, &mut rng, true).unwrap()
        };
        // four copies: the batch mean of identical returns is then exact in
        // floating point, so every advantage is a true zero
        let episodes = vec![episode.clone(), episode.clone(), episode.clone(), episode];
        let cfg = TrainConfig { lambda: 0.0, ..TrainConfig::default() };
        let (next, log) = reinforce_update(&params, &episodes, &[], &cfg).unwrap();
        assert_eq!(next, params);
        assert_eq!(log.grad_norm_pre_clip, 0.0);
    }

    #[test]
    fn single_step_update_matches_hand_computation() {
        // A zero network with one voxel and one hidden unit on a one-step
        // chain: only the output biases can move, and their gradients have
        // short closed forms.
        let v = 1;
        let h = 1;
        let params = PolicyParams::from_flat(v, h, 1e-3, &vec![0.0; param_count(v, h)]).unwrap();
        let sched = make_schedule(ScheduleKind::Constant, 1, 0.5, 0.5).unwrap();
        let reward = |x: &[f64]| x[0];
        let mut rng = RngStream::new(88);
        let ep1 = run_episode(&params, &[0.3], &sched, &reward, &mut rng, true).unwrap();
        let ep2 = run_episode(&params, &[-0.1], &sched, &reward, &mut rng, true).unwrap();

        let cfg = TrainConfig {
            lambda: 0.0,
            alpha: 0.5,
            clip_norm: 1e9,
            ..TrainConfig::default()
        };
        let (next, log) =
            reinforce_update(&params, &[ep1.clone(), ep2.clone()], &[], &cfg).unwrap();

        let sigma = libm::log(2.0) + 1e-3; // softplus(0) plus the floor
        let a = [ep1.states[1][0], ep2.states[1][0]];
        let r = [ep1.final_reward, ep2.final_reward];
        let baseline = (r[0] + r[1]) / 2.0;
        let mut db2 = [0.0; 2];
        for e in 0..2 {
            let adv = r[e] - baseline;
            db2[0] += adv / 2.0 * (a[e] / (sigma * sigma));
            db2[1] += adv / 2.0
                * ((-1.0 / sigma + a[e] * a[e] / (sigma * sigma * sigma)) * logistic(0.0));
        }

        let flat = next.flatten();
        // layout: w1 (h*(v+1)), b1 (h), w2 (2v*h), b2 (2v)
        for value in &flat[..5] {
            assert_eq!(*value, 0.0);
        }
        assert!((flat[5] - cfg.alpha * db2[0]).abs() < 1e-12);
        assert!((flat[6] - cfg.alpha * db2[1]).abs() < 1e-12);
        assert!((log.mean_reward - baseline).abs() < 1e-15);
        assert!((log.mean_return - baseline).abs() < 1e-15);
        assert_eq!(log.mean_loss, 0.0);
    }

    #[test]
    fn tiny_clip_bounds_the_step() {
        let subject = tiny_subject(2, 3, vec![1.0, -0.5], 0.2);
        let sched = make_schedule(ScheduleKind::Linear, 3, 1e-3, 0.02).unwrap();
        let mut init_rng = RngStream::new(5);
        let params = init_params(&mut init_rng, 2, 4, 1e-3).unwrap();
        let reward = SquashedReward::new(subject.decoder.clone(), 1.0).unwrap();
        let cfg = TrainConfig {
            clip_norm: 1e-9,
            alpha: 1.0,
            num_steps: 3,
            hidden_size: 4,
            ..TrainConfig::default()
        };
        let mut rng = RngStream::new(21);
        let (next, _) =
            nerd_epoch(&params, &subject, &reward, &sched, &cfg, 1, &mut rng).unwrap();
        let before = params.flatten();
        let after = next.flatten();
        let delta: f64 = before
            .iter()
            .zip(&after)
            .map(|(x, y)| (y - x) * (y - x))
            .sum::<f64>()
            .sqrt();
        assert!(delta <= 1e-9 + 1e-18, "step moved {delta}");
    }

    #[test]
    fn hybrid_loss_zero_for_perfect_predictor() {
        let params = PolicyParams::from_flat(2, 3, 1e-3, &vec![0.0; param_count(2, 3)]).unwrap();
        // the zero network predicts the origin everywhere, so pairs whose
        // targets are the origin are fit perfectly
        let pairs = vec![
            DenoisePair { t: 1, state: vec![0.5, -0.5], target_prev: vec![0.0, 0.0] },
            DenoisePair { t: 2, state: vec![1.5, 0.25], target_prev: vec![0.0, 0.0] },
        ];
        let (loss, g) = hybrid_loss(&params, &pairs, &[], 0.3, 2).unwrap();
        assert_eq!(loss, 0.0);
        assert_eq!(g.global_norm(), 0.0);
    }

    #[test]
    fn hybrid_loss_matches_elementwise_mse() {
        let params = PolicyParams::from_flat(2, 3, 1e-3, &vec![0.0; param_count(2, 3)]).unwrap();
        let pairs = vec![
            DenoisePair { t: 1, state: vec![0.5, -0.5], target_prev: vec![0.2, -0.1] },
            DenoisePair { t: 2, state: vec![1.0, 2.0], target_prev: vec![-0.3, 0.4] },
        ];
        // mu is identically zero, so the MSE is the mean squared target
        let want: f64 =
            (0.04 + 0.01 + 0.09 + 0.16) / 4.0;
        let (loss, _) = hybrid_loss(&params, &pairs, &[], 0.0, 2).unwrap();
        assert!((loss - want).abs() < 1e-15);
        let bad = vec![DenoisePair { t: 1, state: vec![0.5, -0.5], target_prev: vec![0.2] }];
        assert!(hybrid_loss(&params, &bad, &[], 0.0, 2).is_err());
    }

    #[test]
    fn zero_epochs_yields_init_checkpoint_only() {
        let subject = tiny_subject(2, 2, vec![0.8, 0.3], 0.0);
        let cfg = TrainConfig { n_epochs: 0, ..small_cfg(3) };
        let out = train_nerd(&subject, &cfg).unwrap();
        assert!(out.logs.is_empty());
        assert!(out.aborted.is_none());
        assert_eq!(out.checkpoints.len(), 1);
        assert_eq!(out.checkpoints[0].epoch, 0);
        assert_eq!(out.checkpoints[0].config_hash, cfg.content_hash());
    }

    #[test]
    fn training_is_deterministic() {
        let subject = tiny_subject(2, 3, vec![1.1, -0.4], 0.1);
        let cfg = small_cfg(3);
        let a = train_nerd(&subject, &cfg).unwrap();
        let b = train_nerd(&subject, &cfg).unwrap();
        assert_eq!(a, b);
        let c = train_control(&subject, &cfg).unwrap();
        let d = train_control(&subject, &cfg).unwrap();
        assert_eq!(c, d);
        // the two families draw from distinct substreams
        assert_ne!(a.checkpoints[0].params, c.checkpoints[0].params);
    }

    #[test]
    fn resume_is_bit_exact() {
        let subject = tiny_subject(2, 3, vec![0.9, 0.5], -0.1);
        let cfg = small_cfg(3);
        for family in [Family::Nerd, Family::Control] {
            let full = run_training(&subject, &cfg, family, None).unwrap();
            let midpoint = full
                .checkpoints
                .iter()
                .find(|ck| ck.epoch == 2)
                .expect("stride 1 keeps epoch 2");
            let resumed = resume_training(&subject, &cfg, family, midpoint).unwrap();
            assert_eq!(resumed.checkpoints.last(), full.checkpoints.last());
            assert_eq!(resumed.logs, full.logs[2..].to_vec());
            assert!(resumed.aborted.is_none());
        }
    }

    #[test]
    fn resume_rejects_mismatched_config() {
        let subject = tiny_subject(2, 2, vec![0.9, 0.5], 0.0);
        let cfg = small_cfg(3);
        let full = train_nerd(&subject, &cfg).unwrap();
        let ck = full.checkpoints.last().unwrap();
        let other = TrainConfig { alpha: 0.06, ..cfg.clone() };
        assert!(resume_training(&subject, &other, Family::Nerd, ck).is_err());
    }

    #[test]
    fn checkpoint_stride_keeps_first_last_and_multiples() {
        let subject = tiny_subject(2, 2, vec![0.7, -0.2], 0.0);
        let cfg = TrainConfig { n_epochs: 12, checkpoint_stride: 5, ..small_cfg(2) };
        let out = train_control(&subject, &cfg).unwrap();
        let epochs: Vec<usize> = out.checkpoints.iter().map(|c| c.epoch).collect();
        assert_eq!(epochs, vec![0, 5, 10, 12]);
        assert_eq!(out.logs.len(), 12);
    }

    #[test]
    fn control_with_zero_decoder_stays_frozen() {
        let subject = tiny_subject(3, 2, vec![0.0, 0.0, 0.0], 0.4);
        let cfg = TrainConfig { n_epochs: 3, ..small_cfg(3) };
        let out = train_control(&subject, &cfg).unwrap();
        assert!(out.aborted.is_none());
        for log in &out.logs {
            assert_eq!(log.mean_loss, -0.5);
            assert_eq!(log.mean_reward, 0.5);
            assert_eq!(log.grad_norm_pre_clip, 0.0);
        }
        for ck in &out.checkpoints {
            assert_eq!(ck.params, out.checkpoints[0].params);
        }
    }

    #[test]
    fn numeric_blowup_aborts_but_keeps_artifacts() {
        let subject = tiny_subject(2, 2, vec![1.0, 1.0], 0.0);
        let cfg = TrainConfig { alpha: 1e308, n_epochs: 5, ..small_cfg(2) };
        let out = train_nerd(&subject, &cfg).unwrap();
        assert!(out.aborted.is_some());
        assert!(!out.checkpoints.is_empty());
        let last = out.checkpoints.last().unwrap();
        assert!(last.params.is_finite());
        assert_eq!(out.logs.len(), last.epoch);
    }

    #[test]
    fn config_hash_tracks_every_field() {
        let base = TrainConfig::default();
        assert_eq!(base.content_hash(), TrainConfig::default().content_hash());
        let variants = [
            TrainConfig { lambda: 0.2, ..base.clone() },
            TrainConfig { gamma: 0.95, ..base.clone() },
            TrainConfig { seed: 1, ..base.clone() },
            TrainConfig { n_epochs: 299, ..base.clone() },
            TrainConfig { checkpoint_stride: 2, ..base.clone() },
            TrainConfig { start_mode: EpisodeStart::PureNoise, ..base.clone() },
        ];
        for v in &variants {
            assert_ne!(v.content_hash(), base.content_hash());
        }
    }

    #[test]
    fn config_validation_rejects_bad_fields() {
        let good = TrainConfig::default();
        assert!(good.validate().is_ok());
        assert!(TrainConfig { gamma: 1.0, ..good.clone() }.validate().is_err());
        assert!(TrainConfig { gamma: 0.0, ..good.clone() }.validate().is_err());
        assert!(TrainConfig { alpha: 0.0, ..good.clone() }.validate().is_err());
        assert!(TrainConfig { clip_norm: 0.0, ..good.clone() }.validate().is_err());
        assert!(TrainConfig { lambda: -0.1, ..good.clone() }.validate().is_err());
        assert!(TrainConfig { batch_episodes: 0, ..good.clone() }.validate().is_err());
        assert!(TrainConfig { checkpoint_stride: 0, ..good.clone() }.validate().is_err());
        assert!(TrainConfig { beta_min: 0.0, ..good.clone() }.validate().is_err());
    }
}
