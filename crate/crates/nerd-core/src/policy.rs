//! The denoising policy network and its hand-derived gradients.
//!
//! The policy is a two-layer tanh MLP mapping a voxel state plus a
//! normalized step index to a diagonal Gaussian over the next state:
//!
//! ```text
//! input  = [x_1 .. x_V, t / t_max]            (V + 1)
//! hidden = tanh(W1 input + b1)                (H)
//! z      = W2 hidden + b2                     (2V)
//! mu     = z[0..V]
//! sigma  = softplus(z[V..2V]) + sigma_min
//! ```
//!
//! Everything downstream — REINFORCE, the deterministic-chain baseline, the
//! denoising MSE — consumes gradients from this module, so the reverse-mode
//! code here is the part of the crate most worth distrusting. It is checked
//! three ways: unit tests on analytically known cases, the finite-difference
//! harness in [`grad_check`], and an end-to-end acceptance run.

use alloc::vec;
use alloc::vec::Vec;

use crate::diffusion::DifferentiableReward;
use crate::error::{invalid, Error, Result};
use crate::numerics::{logistic, Mat, RngStream, LN_2PI};

/// Numerically stable softplus: ln(1 + e^r).
fn softplus(r: f64) -> f64 {
    if r > 0.0 {
        r + libm::log1p(libm::exp(-r))
    } else {
        libm::log1p(libm::exp(r))
    }
}


/// Weights of the policy MLP.
///
/// `sigma_min` travels with the weights because the same raw output decodes
/// to a different sigma under a different floor; checkpoints must restore
/// both together.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyParams {
    w1: Mat,
    b1: Vec<f64>,
    w2: Mat,
    b2: Vec<f64>,
    sigma_min: f64,
}

/// Total number of scalar parameters for a (v, h) policy.
pub fn param_count(v: usize, h: usize) -> usize {
    h * (v + 1) + h + 2 * v * h + 2 * v
}

impl PolicyParams {
    pub fn n_voxels(&self) -> usize {
        self.w2.rows() / 2
    }

    pub fn hidden_size(&self) -> usize {
        self.b1.len()
    }

    pub fn sigma_min(&self) -> f64 {
        self.sigma_min
    }

    /// Serialize in the fixed order: W1 row-major, b1, W2 row-major, b2.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(param_count(self.n_voxels(), self.hidden_size()));
        out.extend_from_slice(self.w1.data());
        out.extend_from_slice(&self.b1);
        out.extend_from_slice(self.w2.data());
        out.extend_from_slice(&self.b2);
        out
    }

    /// Rebuild from [`PolicyParams::flatten`] output.
    pub fn from_flat(v: usize, h: usize, sigma_min: f64, data: &[f64]) -> Result<Self> {
        if v == 0 || h == 0 {
            return Err(invalid("policy dimensions must be positive"));
        }
        if !(sigma_min.is_finite() && sigma_min > 0.0) {
            return Err(invalid("sigma_min must be positive and finite"));
        }
        if data.len() != param_count(v, h) {
            return Err(invalid(alloc::format!(
                "expected {} parameters, got {}",
                param_count(v, h),
                data.len()
            )));
        }
        let mut at = 0;
        let mut take = |n: usize| {
            let s = data[at..at + n].to_vec();
            at += n;
            s
        };
        let w1 = Mat::from_flat(h, v + 1, take(h * (v + 1)))?;
        let b1 = take(h);
        let w2 = Mat::from_flat(2 * v, h, take(2 * v * h))?;
        let b2 = take(2 * v);
        Ok(PolicyParams { w1, b1, w2, b2, sigma_min })
    }

    /// Gradient-ascent step: theta += step * g.
    pub fn step_in_place(&mut self, g: &Gradients, step: f64) {
        for r in 0..self.w1.rows() {
            for c in 0..self.w1.cols() {
                self.w1[(r, c)] += step * g.w1[(r, c)];
            }
        }
        for (b, gb) in self.b1.iter_mut().zip(&g.b1) {
            *b += step * gb;
        }
        for r in 0..self.w2.rows() {
            for c in 0..self.w2.cols() {
                self.w2[(r, c)] += step * g.w2[(r, c)];
            }
        }
        for (b, gb) in self.b2.iter_mut().zip(&g.b2) {
            *b += step * gb;
        }
    }

    /// Shift the sigma-head biases by `delta`. Mostly useful for driving the
    /// network into (or out of) the saturated small-sigma regime in tests
    /// and gradient checks.
    pub fn shift_sigma_bias(&mut self, delta: f64) {
        let v = self.n_voxels();
        for b in &mut self.b2[v..2 * v] {
            *b += delta;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.w1.is_finite()
            && self.w2.is_finite()
            && self.b1.iter().all(|x| x.is_finite())
            && self.b2.iter().all(|x| x.is_finite())
    }
}

/// Xavier-uniform initialization. Biases start at zero except the sigma
/// head, which is set so that sigma decodes to exactly 1.0 when the rest of
/// the network contributes nothing.
pub fn init_params(rng: &mut RngStream, v: usize, h: usize, sigma_min: f64) -> Result<PolicyParams> {
    if v == 0 || h == 0 {
        return Err(invalid("policy dimensions must be positive"));
    }
    if !(sigma_min.is_finite() && sigma_min > 0.0 && sigma_min < 1.0) {
        return Err(invalid("sigma_min must lie in (0, 1)"));
    }
    let lim1 = libm::sqrt(6.0 / ((v + 1 + h) as f64));
    let lim2 = libm::sqrt(6.0 / ((h + 2 * v) as f64));
    let mut w1 = Mat::zeros(h, v + 1);
    for r in 0..h {
        for c in 0..v + 1 {
            w1[(r, c)] = rng.uniform(-lim1, lim1);
        }
    }
    let mut w2 = Mat::zeros(2 * v, h);
    for r in 0..2 * v {
        for c in 0..h {
            w2[(r, c)] = rng.uniform(-lim2, lim2);
        }
    }
    let b1 = vec![0.0; h];
    let mut b2 = vec![0.0; 2 * v];
    // inverse softplus of (1 - sigma_min)
    let sigma_bias = libm::log(libm::expm1(1.0 - sigma_min));
    for b in &mut b2[v..2 * v] {
        *b = sigma_bias;
    }
    Ok(PolicyParams { w1, b1, w2, b2, sigma_min })
}

/// A forward pass with everything backprop needs retained.
#[derive(Debug, Clone)]
pub struct PolicyOutput {
    pub mu: Vec<f64>,
    pub sigma: Vec<f64>,
    /// The assembled network input, `[x, t / t_max]`.
    pub input: Vec<f64>,
    pub hidden_act: Vec<f64>,
    pub raw_sigma: Vec<f64>,
}

/// Evaluate the policy at state `x` and (1-based) step index `t`.
pub fn policy_forward(
    params: &PolicyParams,
    x: &[f64],
    t: usize,
    t_max: usize,
) -> Result<PolicyOutput> {
    let v = params.n_voxels();
    let h = params.hidden_size();
    if x.len() != v {
        return Err(invalid(alloc::format!(
            "state has {} voxels, policy expects {v}",
            x.len()
        )));
    }
    if t == 0 || t > t_max {
        return Err(invalid("step index must be in 1..=t_max"));
    }
    let mut input = Vec::with_capacity(v + 1);
    input.extend_from_slice(x);
    input.push(t as f64 / t_max as f64);

    let mut hidden_act = vec![0.0; h];
    for r in 0..h {
        let mut z = params.b1[r];
        for (c, inp) in input.iter().enumerate() {
            z += params.w1[(r, c)] * inp;
        }
        hidden_act[r] = libm::tanh(z);
    }

    let mut mu = vec![0.0; v];
    let mut raw_sigma = vec![0.0; v];
    let mut sigma = vec![0.0; v];
    for i in 0..2 * v {
        let mut z = params.b2[i];
        for (c, hval) in hidden_act.iter().enumerate() {
            z += params.w2[(i, c)] * hval;
        }
        if i < v {
            mu[i] = z;
        } else {
            raw_sigma[i - v] = z;
            sigma[i - v] = softplus(z) + params.sigma_min;
        }
    }
    if mu.iter().any(|m| !m.is_finite()) || sigma.iter().any(|s| !s.is_finite()) {
        return Err(Error::NumericFailure {
            step: t,
            detail: alloc::format!("non-finite policy output at step {t}"),
        });
    }
    Ok(PolicyOutput { mu, sigma, input, hidden_act, raw_sigma })
}

/// Log-density of `action` under the diagonal Gaussian (mu, sigma).
pub fn policy_logprob(mu: &[f64], sigma: &[f64], action: &[f64]) -> f64 {
    debug_assert_eq!(mu.len(), sigma.len());
    debug_assert_eq!(mu.len(), action.len());
    let mut lp = 0.0;
    for j in 0..mu.len() {
        let z = (action[j] - mu[j]) / sigma[j];
        lp += -0.5 * LN_2PI - libm::log(sigma[j]) - 0.5 * z * z;
    }
    lp
}

/// Parameter-shaped gradient accumulator.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    w1: Mat,
    b1: Vec<f64>,
    w2: Mat,
    b2: Vec<f64>,
}

impl Gradients {
    pub fn zeros_like(params: &PolicyParams) -> Self {
        Gradients {
            w1: Mat::zeros(params.w1.rows(), params.w1.cols()),
            b1: vec![0.0; params.b1.len()],
            w2: Mat::zeros(params.w2.rows(), params.w2.cols()),
            b2: vec![0.0; params.b2.len()],
        }
    }

    /// self += scale * other.
    pub fn add_scaled(&mut self, other: &Gradients, scale: f64) {
        for r in 0..self.w1.rows() {
            for c in 0..self.w1.cols() {
                self.w1[(r, c)] += scale * other.w1[(r, c)];
            }
        }
        for (a, b) in self.b1.iter_mut().zip(&other.b1) {
            *a += scale * b;
        }
        for r in 0..self.w2.rows() {
            for c in 0..self.w2.cols() {
                self.w2[(r, c)] += scale * other.w2[(r, c)];
            }
        }
        for (a, b) in self.b2.iter_mut().zip(&other.b2) {
            *a += scale * b;
        }
    }

    pub fn scale(&mut self, s: f64) {
        for r in 0..self.w1.rows() {
            for c in 0..self.w1.cols() {
                self.w1[(r, c)] *= s;
            }
        }
        for b in &mut self.b1 {
            *b *= s;
        }
        for r in 0..self.w2.rows() {
            for c in 0..self.w2.cols() {
                self.w2[(r, c)] *= s;
            }
        }
        for b in &mut self.b2 {
            *b *= s;
        }
    }

    /// Euclidean norm over every entry, the quantity gradient clipping caps.
    pub fn global_norm(&self) -> f64 {
        let mut s = 0.0;
        for x in self.flatten() {
            s += x * x;
        }
        libm::sqrt(s)
    }

    /// Rescale (if needed) so the global norm is at most `max_norm`.
    /// Returns the pre-clip norm.
    pub fn clip_to(&mut self, max_norm: f64) -> f64 {
        let norm = self.global_norm();
        if norm > max_norm && norm > 0.0 {
            self.scale(max_norm / norm);
        }
        norm
    }

    /// Same layout as [`PolicyParams::flatten`].
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        out.extend_from_slice(self.w1.data());
        out.extend_from_slice(&self.b1);
        out.extend_from_slice(self.w2.data());
        out.extend_from_slice(&self.b2);
        out
    }
}

/// Gradient of log pi(action | state) with respect to the parameters.
///
/// The Gaussian head gives d/dmu = (a - mu) / sigma^2 and
/// d/dsigma = -1/sigma + (a - mu)^2 / sigma^3; the sigma path then picks up
/// the softplus derivative logistic(raw) before entering the shared MLP
/// backprop.
pub fn backward_logprob(params: &PolicyParams, out: &PolicyOutput, action: &[f64]) -> Gradients {
    let v = params.n_voxels();
    debug_assert_eq!(action.len(), v);
    let mut dz2 = vec![0.0; 2 * v];
    for j in 0..v {
        let diff = action[j] - out.mu[j];
        let s = out.sigma[j];
        dz2[j] = diff / (s * s);
        let dsigma = -1.0 / s + diff * diff / (s * s * s);
        dz2[v + j] = dsigma * logistic(out.raw_sigma[j]);
    }
    backprop_from_z2(params, out, &dz2).0
}

/// Vector-Jacobian product through the mu head only: given an upstream
/// gradient on mu, return the parameter gradients and the gradient with
/// respect to the voxel part of the input. This is the building block for
/// both the deterministic-chain loss and the denoising MSE term.
pub fn backward_mu_vjp(
    params: &PolicyParams,
    out: &PolicyOutput,
    d_mu: &[f64],
) -> (Gradients, Vec<f64>) {
    let v = params.n_voxels();
    debug_assert_eq!(d_mu.len(), v);
    let mut dz2 = vec![0.0; 2 * v];
    dz2[..v].copy_from_slice(d_mu);
    backprop_from_z2(params, out, &dz2)
}

/// Shared tail of reverse mode: from a gradient on the output pre-activation
/// z2, fill in all parameter gradients and the input (voxel) gradient.
fn backprop_from_z2(
    params: &PolicyParams,
    out: &PolicyOutput,
    dz2: &[f64],
) -> (Gradients, Vec<f64>) {
    let v = params.n_voxels();
    let h = params.hidden_size();
    let mut g = Gradients::zeros_like(params);

    let mut dh = vec![0.0; h];
    for i in 0..2 * v {
        if dz2[i] == 0.0 {
            continue;
        }
        g.b2[i] = dz2[i];
        for j in 0..h {
            g.w2[(i, j)] = dz2[i] * out.hidden_act[j];
            dh[j] += params.w2[(i, j)] * dz2[i];
        }
    }

    let mut d_input = vec![0.0; v + 1];
    for r in 0..h {
        let act = out.hidden_act[r];
        let dz1 = dh[r] * (1.0 - act * act);
        g.b1[r] = dz1;
        for c in 0..v + 1 {
            g.w1[(r, c)] = dz1 * out.input[c];
            d_input[c] += params.w1[(r, c)] * dz1;
        }
    }
    d_input.truncate(v);
    (g, d_input)
}

/// Backpropagation through the full deterministic chain x_{t-1} = mu(x_t, t)
/// for t = t_max down to 1. Returns the gradient of the loss -R(x_0) and
/// the achieved reward R(x_0).
pub fn backward_reward_deterministic<R: DifferentiableReward + ?Sized>(
    params: &PolicyParams,
    x_start: &[f64],
    t_max: usize,
    reward: &R,
) -> Result<(Gradients, f64)> {
    if t_max == 0 {
        return Err(invalid("deterministic chain needs at least one step"));
    }
    let mut outputs = Vec::with_capacity(t_max);
    let mut x = x_start.to_vec();
    for i in 0..t_max {
        let t = t_max - i;
        let out = policy_forward(params, &x, t, t_max)?;
        x = out.mu.clone();
        outputs.push(out);
    }
    let r = reward.reward(&x);
    if !r.is_finite() {
        return Err(Error::NumericFailure {
            step: 0,
            detail: alloc::string::String::from("non-finite reward at chain end"),
        });
    }

    let mut grads = Gradients::zeros_like(params);
    // d(loss)/d(x_0), then walk the chain backwards
    let mut d_x: Vec<f64> = reward.reward_grad(&x).iter().map(|gx| -gx).collect();
    for out in outputs.iter().rev() {
        let (g_step, d_prev) = backward_mu_vjp(params, out, &d_x);
        grads.add_scaled(&g_step, 1.0);
        d_x = d_prev;
    }
    Ok((grads, r))
}

/// Settings for the finite-difference gradient check.
#[derive(Debug, Clone)]
pub struct GradCheckConfig {
    pub v: usize,
    pub h: usize,
    /// Steps in the deterministic-chain objective.
    pub chain_steps: usize,
    /// Parameter coordinates probed (split between the two objectives).
    pub n_probes: usize,
    /// Central-difference step size.
    pub fd_step: f64,
    pub seed: u64,
    /// Probes where both the analytic and numeric values fall below this
    /// magnitude are skipped: such gradients are dominated by roundoff in
    /// the difference quotient (e.g. a fully saturated sigma head) and a
    /// relative comparison there measures noise, not correctness.
    pub min_magnitude: f64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        GradCheckConfig {
            v: 6,
            h: 8,
            chain_steps: 5,
            n_probes: 120,
            fd_step: 1e-5,
            seed: 0x5EED_BA5E,
            min_magnitude: 1e-8,
        }
    }
}

/// Outcome of [`grad_check`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    pub probes_run: usize,
    pub probes_skipped: usize,
}

struct LinearProbeReward {
    w: Vec<f64>,
    b: f64,
}

impl crate::diffusion::RewardFn for LinearProbeReward {
    fn reward(&self, x: &[f64]) -> f64 {
        self.w.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + self.b
    }
}

impl DifferentiableReward for LinearProbeReward {
    fn reward_grad(&self, _x: &[f64]) -> Vec<f64> {
        self.w.clone()
    }
}

/// Compare the analytic gradients of two objectives — a sampled-action
/// log-density and a deterministic-chain reward — against central finite
/// differences at randomly probed parameter coordinates.
///
/// Returns the maximum symmetric relative error
/// |analytic - numeric| / (|analytic| + |numeric|) over all probes that
/// clear `min_magnitude` (see [`GradCheckConfig::min_magnitude`]).
pub fn grad_check(params: &PolicyParams, cfg: &GradCheckConfig) -> Result<GradCheckReport> {
    if params.n_voxels() != cfg.v || params.hidden_size() != cfg.h {
        return Err(invalid("grad check config does not match parameter shape"));
    }
    if cfg.chain_steps == 0 || cfg.n_probes == 0 || !(cfg.fd_step > 0.0) {
        return Err(invalid("grad check config must be positive"));
    }
    let mut rng = RngStream::new(cfg.seed);
    let x = rng.normal_vec(cfg.v);
    let t = 1 + rng.uniform_usize(cfg.chain_steps);

    // freeze one action drawn from the policy at the unperturbed parameters
    let base_out = policy_forward(params, &x, t, cfg.chain_steps)?;
    let mut action = vec![0.0; cfg.v];
    for j in 0..cfg.v {
        action[j] = base_out.mu[j] + base_out.sigma[j] * rng.normal();
    }

    let chain_start = rng.normal_vec(cfg.v);
    let reward = LinearProbeReward { w: rng.normal_vec(cfg.v), b: 0.3 };

    let analytic_lp = backward_logprob(params, &base_out, &action).flatten();
    let (analytic_chain, _) =
        backward_reward_deterministic(params, &chain_start, cfg.chain_steps, &reward)?;
    let analytic_chain = analytic_chain.flatten();

    let theta = params.flatten();
    let n_params = theta.len();
    let eval_lp = |flat: &[f64]| -> Result<f64> {
        let p = PolicyParams::from_flat(cfg.v, cfg.h, params.sigma_min, flat)?;
        let out = policy_forward(&p, &x, t, cfg.chain_steps)?;
        Ok(policy_logprob(&out.mu, &out.sigma, &action))
    };
    let eval_chain = |flat: &[f64]| -> Result<f64> {
        let p = PolicyParams::from_flat(cfg.v, cfg.h, params.sigma_min, flat)?;
        let mut xc = chain_start.clone();
        for i in 0..cfg.chain_steps {
            xc = policy_forward(&p, &xc, cfg.chain_steps - i, cfg.chain_steps)?.mu;
        }
        Ok(-crate::diffusion::RewardFn::reward(&reward, &xc))
    };

    let mut max_rel: f64 = 0.0;
    let mut run = 0;
    let mut skipped = 0;
    let mut perturbed = theta.clone();
    for probe in 0..cfg.n_probes {
        let idx = rng.uniform_usize(n_params);
        let use_chain = probe % 2 == 1;
        let analytic = if use_chain { analytic_chain[idx] } else { analytic_lp[idx] };

        perturbed[idx] = theta[idx] + cfg.fd_step;
        let f_plus = if use_chain { eval_chain(&perturbed)? } else { eval_lp(&perturbed)? };
        perturbed[idx] = theta[idx] - cfg.fd_step;
        let f_minus = if use_chain { eval_chain(&perturbed)? } else { eval_lp(&perturbed)? };
        perturbed[idx] = theta[idx];
        let numeric = (f_plus - f_minus) / (2.0 * cfg.fd_step);

        if libm::fabs(analytic) < cfg.min_magnitude && libm::fabs(numeric) < cfg.min_magnitude {
            skipped += 1;
            continue;
        }
        let rel = libm::fabs(analytic - numeric) / (libm::fabs(analytic) + libm::fabs(numeric));
        if rel > max_rel {
            max_rel = rel;
        }
        run += 1;
    }
    Ok(GradCheckReport {
        max_rel_err: max_rel,
        probes_run: run,
        probes_skipped: skipped,
    })
}
