//! Everything downstream of frozen models: reward trajectories,
//! representational dissimilarity matrices, MDS embeddings, learned-noise
//! trajectory extraction and clustering, two-stage PCA, and the regression
//! models relating model-predicted reward to the reward subjects actually
//! achieved.
//!
//! All functions here are pure over frozen checkpoints and datasets; any
//! randomness comes in through an explicit stream.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::diffusion::{make_start, run_episode, DenoisingEpisode, EpisodeStart, NoiseSchedule, RewardFn};
use crate::envsim::SyntheticSubject;
use crate::error::{invalid, Result};
use crate::numerics::{
    agglomerative_cluster, classical_mds, kmeans, ols_fit_named, pca, pearson, sample_variance,
    Linkage, LinearFit, Mat, RngStream,
};
use crate::policy::PolicyParams;
use crate::training::Family;

/// A labeled representational dissimilarity matrix.
///
/// Construction checks the defining invariants: square shape, symmetry
/// within 1e-12, zero diagonal, and non-negative entries.
#[derive(Debug, Clone, PartialEq)]
pub struct Rdm {
    labels: Vec<String>,
    dist: Mat,
}

impl Rdm {
    pub fn new(labels: Vec<String>, dist: Mat) -> Result<Self> {
        let n = dist.rows();
        if dist.cols() != n {
            return Err(invalid("dissimilarity matrix must be square"));
        }
        if labels.len() != n {
            return Err(invalid("label count must match the matrix size"));
        }
        for i in 0..n {
            if dist[(i, i)] != 0.0 {
                return Err(invalid("dissimilarity diagonal must be zero"));
            }
            for j in 0..n {
                let d = dist[(i, j)];
                if !d.is_finite() || d < 0.0 {
                    return Err(invalid("dissimilarities must be finite and non-negative"));
                }
                if (d - dist[(j, i)]).abs() > 1e-12 {
                    return Err(invalid("dissimilarity matrix must be symmetric"));
                }
            }
        }
        Ok(Rdm { labels, dist })
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn dist(&self) -> &Mat {
        &self.dist
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// Correlation distance between two patterns.
///
/// Identical patterns score 0 even when they are constant; otherwise a pair
/// involving a constant pattern (undefined correlation) is assigned the
/// maximal-ignorance value 1, and everything else is 1 - Pearson, clamped
/// at 0 against rounding.
fn correlation_dissimilarity(a: &[f64], b: &[f64]) -> f64 {
    if a == b {
        return 0.0;
    }
    match pearson(a, b) {
        Ok(r) => (1.0 - r).max(0.0),
        Err(_) => 1.0,
    }
}

fn dissimilarity_matrix(states: &[&[f64]]) -> Mat {
    let n = states.len();
    let mut dist = Mat::zeros(n, n);
    for i in 0..n {
        for j in i + 1..n {
            let d = correlation_dissimilarity(states[i], states[j]);
            dist[(i, j)] = d;
            dist[(j, i)] = d;
        }
    }
    dist
}

/// Roll `n_episodes` episodes for a subject, cycling through its trials'
/// baseline patterns as starting material.
fn roll_episodes<R: RewardFn + ?Sized>(
    params: &PolicyParams,
    subject: &SyntheticSubject,
    schedule: &NoiseSchedule,
    reward: &R,
    n_episodes: usize,
    start_mode: EpisodeStart,
    stochastic: bool,
    rng: &mut RngStream,
) -> Result<Vec<DenoisingEpisode>> {
    if n_episodes == 0 {
        return Err(invalid("need at least one episode"));
    }
    if subject.trials.is_empty() {
        return Err(invalid("subject has no trials"));
    }
    let mut out = Vec::with_capacity(n_episodes);
    for e in 0..n_episodes {
        let base = &subject.trials[e % subject.trials.len()].baseline_state;
        let start = make_start(start_mode, base, schedule, rng);
        out.push(run_episode(params, &start, schedule, reward, rng, stochastic)?);
    }
    Ok(out)
}

/// Per-step mean and sample standard deviation of the reward trace across
/// episodes.
#[allow(clippy::too_many_arguments)]
pub fn reward_trajectory<R: RewardFn + ?Sized>(
    params: &PolicyParams,
    subject: &SyntheticSubject,
    schedule: &NoiseSchedule,
    reward: &R,
    n_episodes: usize,
    start_mode: EpisodeStart,
    stochastic: bool,
    rng: &mut RngStream,
) -> Result<(Vec<f64>, Vec<f64>)> {
    if n_episodes < 2 {
        return Err(invalid("reward trajectory needs at least two episodes"));
    }
    let episodes =
        roll_episodes(params, subject, schedule, reward, n_episodes, start_mode, stochastic, rng)?;
    let t_max = episodes[0].num_steps();
    let mut means = Vec::with_capacity(t_max);
    let mut stds = Vec::with_capacity(t_max);
    for i in 0..t_max {
        let values: Vec<f64> = episodes.iter().map(|e| e.per_step_rewards[i]).collect();
        means.push(crate::numerics::mean(&values));
        stds.push(libm::sqrt(sample_variance(&values)));
    }
    Ok((means, stds))
}

/// Mean terminal reward over episodes: the model's reward prediction for
/// this subject.
#[allow(clippy::too_many_arguments)]
pub fn model_mean_reward<R: RewardFn + ?Sized>(
    params: &PolicyParams,
    subject: &SyntheticSubject,
    schedule: &NoiseSchedule,
    reward: &R,
    n_episodes: usize,
    start_mode: EpisodeStart,
    stochastic: bool,
    rng: &mut RngStream,
) -> Result<f64> {
    let episodes =
        roll_episodes(params, subject, schedule, reward, n_episodes, start_mode, stochastic, rng)?;
    Ok(episodes.iter().map(|e| e.final_reward).sum::<f64>() / episodes.len() as f64)
}

/// Dissimilarity between the states an episode visits, one row per state
/// from the noisy start (label `t{T}`) down to the final pattern (`t0`).
pub fn stepwise_rdm(episode: &DenoisingEpisode) -> Result<Rdm> {
    let t_max = episode.num_steps();
    let refs: Vec<&[f64]> = episode.states.iter().map(|s| s.as_slice()).collect();
    let labels = (0..=t_max).map(|i| alloc::format!("t{}", t_max - i)).collect();
    Rdm::new(labels, dissimilarity_matrix(&refs))
}

/// Dissimilarity across episodes of the state each had reached after
/// `step` transitions (0 = the starting state, T = the final pattern).
pub fn trialpair_rdm(episodes: &[DenoisingEpisode], step: usize) -> Result<Rdm> {
    if episodes.len() < 2 {
        return Err(invalid("trial-pair dissimilarity needs at least two episodes"));
    }
    let t_max = episodes[0].num_steps();
    if episodes.iter().any(|e| e.num_steps() != t_max) {
        return Err(invalid("episodes must share a step count"));
    }
    if step > t_max {
        return Err(invalid("step index lies beyond the episode"));
    }
    let refs: Vec<&[f64]> = episodes.iter().map(|e| e.states[step].as_slice()).collect();
    let labels = (0..episodes.len()).map(|i| alloc::format!("trial{i}")).collect();
    Rdm::new(labels, dissimilarity_matrix(&refs))
}

/// Classical MDS of a state collection under correlation distance, down to
/// two dimensions.
pub fn mds_embed(states: &[Vec<f64>]) -> Result<Mat> {
    if states.len() < 3 {
        return Err(invalid("MDS embedding needs at least three states"));
    }
    let refs: Vec<&[f64]> = states.iter().map(|s| s.as_slice()).collect();
    classical_mds(&dissimilarity_matrix(&refs), 2)
}

/// Learned noise distributions summarised over episodes: per voxel (rows)
/// and denoising step (columns, in visit order from t = T down to t = 1).
///
/// `mu` holds the state change `mu(x_t, t) - x_t`, i.e. the noise the
/// policy removes at each step; `mu_raw` keeps the untransformed network
/// output. `mu_star` / `sigma_star` are the per-voxel min-max normalized
/// copies used for clustering and display.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseTrajectorySet {
    pub subject_id: String,
    pub family: Family,
    pub mu: Mat,
    pub mu_raw: Mat,
    pub sigma: Mat,
    pub mu_star: Mat,
    pub sigma_star: Mat,
}

/// Min-max normalize each row to [0, 1]; a constant row maps to all zeros.
/// Applying this twice is the identity.
pub fn normalize_rows_unit_interval(m: &Mat) -> Mat {
    let mut out = Mat::zeros(m.rows(), m.cols());
    for i in 0..m.rows() {
        let row = m.row(i);
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for x in row {
            lo = lo.min(*x);
            hi = hi.max(*x);
        }
        if hi > lo {
            let span = hi - lo;
            for (j, x) in row.iter().enumerate() {
                out[(i, j)] = (x - lo) / span;
            }
        }
    }
    out
}

/// Aggregate the policy's per-step outputs over episodes into a
/// [`NoiseTrajectorySet`].
#[allow(clippy::too_many_arguments)]
pub fn extract_noise_trajectories<R: RewardFn + ?Sized>(
    params: &PolicyParams,
    subject: &SyntheticSubject,
    family: Family,
    schedule: &NoiseSchedule,
    reward: &R,
    n_episodes: usize,
    start_mode: EpisodeStart,
    stochastic: bool,
    rng: &mut RngStream,
) -> Result<NoiseTrajectorySet> {
    let episodes =
        roll_episodes(params, subject, schedule, reward, n_episodes, start_mode, stochastic, rng)?;
    let t_max = episodes[0].num_steps();
    let v = params.n_voxels();
    let scale = 1.0 / episodes.len() as f64;

    let mut mu = Mat::zeros(v, t_max);
    let mut mu_raw = Mat::zeros(v, t_max);
    let mut sigma = Mat::zeros(v, t_max);
    for ep in &episodes {
        for i in 0..t_max {
            for voxel in 0..v {
                let m = ep.step_mus[(i, voxel)];
                mu[(voxel, i)] += scale * (m - ep.states[i][voxel]);
                mu_raw[(voxel, i)] += scale * m;
                sigma[(voxel, i)] += scale * ep.step_sigmas[(i, voxel)];
            }
        }
    }

    let mu_star = normalize_rows_unit_interval(&mu);
    let sigma_star = normalize_rows_unit_interval(&sigma);
    Ok(NoiseTrajectorySet {
        subject_id: subject.id.clone(),
        family,
        mu,
        mu_raw,
        sigma,
        mu_star,
        sigma_star,
    })
}

/// Group voxels by the shape of their normalized (mu*, sigma*) trajectories.
pub fn cluster_voxels(
    ts: &NoiseTrajectorySet,
    k: usize,
    n_restarts: usize,
    rng: &mut RngStream,
) -> Result<Vec<usize>> {
    let v = ts.mu_star.rows();
    let t = ts.mu_star.cols();
    let mut features = Mat::zeros(v, 2 * t);
    for voxel in 0..v {
        features.row_mut(voxel)[..t].copy_from_slice(ts.mu_star.row(voxel));
        features.row_mut(voxel)[t..].copy_from_slice(ts.sigma_star.row(voxel));
    }
    Ok(kmeans(&features, k, n_restarts, rng)?.labels)
}

/// A subject's denoising trajectory through a shared low-dimensional space.
#[derive(Debug, Clone, PartialEq)]
pub struct SubjectTrajectory {
    pub subject_id: String,
    pub family: Family,
    /// T x 3 path of stage-2 principal-component scores over denoising
    /// steps; trailing columns are zero when fewer than three components
    /// exist.
    pub pc_path: Mat,
    /// Stage-2 explained variance ratios, padded to length 3.
    pub explained_variance_ratio: Vec<f64>,
    /// Stage-2 loading vectors (3 x V, zero-padded), kept for sign
    /// alignment across subjects.
    pub components: Mat,
}

/// Reduce a trajectory set to a three-component path in two PCA stages:
/// first each voxel's T x 2 (mu, sigma) series is collapsed to its leading
/// score series, then PCA over the resulting T x V score matrix yields the
/// path.
pub fn two_stage_pca(ts: &NoiseTrajectorySet) -> Result<SubjectTrajectory> {
    let v = ts.mu.rows();
    let t = ts.mu.cols();
    if v < 2 {
        return Err(invalid("two-stage PCA needs at least two voxels"));
    }
    if t < 3 {
        return Err(invalid("two-stage PCA needs at least three steps"));
    }
    if ts.sigma.rows() != v || ts.sigma.cols() != t {
        return Err(invalid("mu and sigma shapes disagree"));
    }

    let mut stage1 = Mat::zeros(t, v);
    for voxel in 0..v {
        let rows: Vec<Vec<f64>> =
            (0..t).map(|i| vec![ts.mu[(voxel, i)], ts.sigma[(voxel, i)]]).collect();
        let p = pca(&Mat::from_rows(&rows)?, 1)?;
        for i in 0..t {
            stage1[(i, voxel)] = p.scores[(i, 0)];
        }
    }

    let n_comp = core::cmp::min(3, v);
    let p2 = pca(&stage1, n_comp)?;
    let mut pc_path = Mat::zeros(t, 3);
    let mut components = Mat::zeros(3, v);
    let mut ratios = vec![0.0; 3];
    for c in 0..n_comp {
        for i in 0..t {
            pc_path[(i, c)] = p2.scores[(i, c)];
        }
        components.row_mut(c).copy_from_slice(p2.components.row(c));
        ratios[c] = p2.explained_variance_ratio[c];
    }

    Ok(SubjectTrajectory {
        subject_id: ts.subject_id.clone(),
        family: ts.family,
        pc_path,
        explained_variance_ratio: ratios,
        components,
    })
}

/// Fix each component's sign across subjects so its loading vector points
/// the same way as the cohort-mean loading.
///
/// PCA signs are arbitrary per subject; without alignment, Euclidean
/// distances between subject paths would mix genuine differences with sign
/// flips. The cohort mean is computed once from the incoming orientations;
/// a subject whose loading is anti-correlated with it (negative dot
/// product) has that component's loading and path column negated. A zero
/// dot product leaves the subject untouched.
pub fn align_trajectory_signs(trajs: &mut [SubjectTrajectory]) -> Result<()> {
    if trajs.is_empty() {
        return Ok(());
    }
    let v = trajs[0].components.cols();
    if trajs.iter().any(|s| s.components.cols() != v) {
        return Err(invalid("subject trajectories disagree on voxel count"));
    }
    for c in 0..3 {
        let mut mean_loading = vec![0.0; v];
        for s in trajs.iter() {
            for (m, x) in mean_loading.iter_mut().zip(s.components.row(c)) {
                *m += x;
            }
        }
        for s in trajs.iter_mut() {
            let dot: f64 = s.components.row(c).iter().zip(&mean_loading).map(|(a, b)| a * b).sum();
            if dot < 0.0 {
                for x in s.components.row_mut(c) {
                    *x = -*x;
                }
                for i in 0..s.pc_path.rows() {
                    s.pc_path[(i, c)] = -s.pc_path[(i, c)];
                }
            }
        }
    }
    Ok(())
}

/// Pairwise Euclidean (Frobenius) distances between subjects' component
/// paths. Align signs first; see [`align_trajectory_signs`].
pub fn subject_trajectory_rdm(trajs: &[SubjectTrajectory]) -> Result<Rdm> {
    if trajs.is_empty() {
        return Err(invalid("no trajectories to compare"));
    }
    let rows = trajs[0].pc_path.rows();
    if trajs.iter().any(|s| s.pc_path.rows() != rows || s.pc_path.cols() != 3) {
        return Err(invalid("trajectory paths must share their shape"));
    }
    let n = trajs.len();
    let mut dist = Mat::zeros(n, n);
    for i in 0..n {
        for j in i + 1..n {
            let mut ss = 0.0;
            for r in 0..rows {
                for c in 0..3 {
                    let d = trajs[i].pc_path[(r, c)] - trajs[j].pc_path[(r, c)];
                    ss += d * d;
                }
            }
            let d = libm::sqrt(ss);
            dist[(i, j)] = d;
            dist[(j, i)] = d;
        }
    }
    let labels = trajs.iter().map(|s| s.subject_id.clone()).collect();
    Rdm::new(labels, dist)
}

/// Average-linkage clustering of subjects from their trajectory RDM.
pub fn cluster_subjects(rdm: &Rdm, k: usize) -> Result<Vec<usize>> {
    agglomerative_cluster(rdm.dist(), k, Linkage::Average)
}

/// Fit achieved human reward against the model's predicted reward with an
/// intercept.
pub fn fit_reward_model(human: &[f64], model: &[f64]) -> Result<LinearFit> {
    if human.len() != model.len() {
        return Err(invalid("human and model reward vectors differ in length"));
    }
    if human.len() < 3 {
        return Err(invalid("reward regression needs at least three subjects"));
    }
    let rows: Vec<Vec<f64>> = model.iter().map(|m| vec![1.0, *m]).collect();
    ols_fit_named(&Mat::from_rows(&rows)?, human, &["Intercept", "ModelPredictedReward"])
}

/// Design matrix for the clustered interaction regression: intercept, one
/// dummy per non-reference cluster, the model reward, and one interaction
/// column per dummy. The reference cluster is the one with the smallest
/// label; display names number clusters from 1 in ascending label order.
pub fn build_cluster_design(model: &[f64], clusters: &[usize]) -> Result<(Mat, Vec<String>)> {
    if model.len() != clusters.len() {
        return Err(invalid("model rewards and cluster labels differ in length"));
    }
    if model.is_empty() {
        return Err(invalid("empty design"));
    }
    let mut unique: Vec<usize> = clusters.to_vec();
    unique.sort_unstable();
    unique.dedup();

    let mut names: Vec<String> = vec![String::from("Intercept")];
    for rank in 1..unique.len() {
        names.push(alloc::format!("Cluster{}", rank + 1));
    }
    names.push(String::from("ModelPredictedReward"));
    for rank in 1..unique.len() {
        names.push(alloc::format!("Cluster{}:ModelPredictedReward", rank + 1));
    }

    let k = unique.len();
    let mut rows = Vec::with_capacity(model.len());
    for (m, c) in model.iter().zip(clusters) {
        let rank = unique.iter().position(|u| u == c).expect("label in unique set");
        let mut row = vec![0.0; 2 * k];
        row[0] = 1.0;
        if rank > 0 {
            row[rank] = 1.0;
        }
        row[k] = *m;
        if rank > 0 {
            row[k + rank] = *m;
        }
        rows.push(row);
    }
    Ok((Mat::from_rows(&rows)?, names))
}

/// Outcome of the clustered interaction regression, along with the cluster
/// labels actually used (after singleton handling) and any adjustments
/// that were made.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusteredFit {
    pub fit: LinearFit,
    pub clusters_used: Vec<usize>,
    pub warnings: Vec<String>,
}

/// Interaction regression of achieved reward on model reward with cluster
/// dummies and cluster-by-reward interactions.
///
/// A cluster with a single member cannot support its own slope; it is
/// merged into the cluster with the nearest centroid in the (model reward,
/// human reward) plane, and the merge is reported in `warnings`. When only
/// one cluster remains the design collapses to the plain regression.
pub fn fit_reward_model_with_clusters(
    human: &[f64],
    model: &[f64],
    clusters: &[usize],
) -> Result<ClusteredFit> {
    if human.len() != model.len() || human.len() != clusters.len() {
        return Err(invalid("human, model, and cluster vectors differ in length"));
    }
    if human.len() < 3 {
        return Err(invalid("reward regression needs at least three subjects"));
    }

    let mut labels = clusters.to_vec();
    let mut warnings = Vec::new();
    loop {
        let mut unique: Vec<usize> = labels.clone();
        unique.sort_unstable();
        unique.dedup();
        if unique.len() < 2 {
            break;
        }
        let singleton = unique.iter().copied().find(|u| {
            labels.iter().filter(|c| *c == u).count() == 1
        });
        let Some(lone) = singleton else { break };
        let member = labels.iter().position(|c| *c == lone).expect("singleton member");
        let point = (model[member], human[member]);

        let mut best: Option<(usize, f64)> = None;
        for u in unique.iter().copied().filter(|u| *u != lone) {
            let mut cm = 0.0;
            let mut ch = 0.0;
            let mut count = 0.0;
            for i in 0..labels.len() {
                if labels[i] == u {
                    cm += model[i];
                    ch += human[i];
                    count += 1.0;
                }
            }
            let dm = point.0 - cm / count;
            let dh = point.1 - ch / count;
            let d2 = dm * dm + dh * dh;
            if best.map_or(true, |(_, bd)| d2 < bd) {
                best = Some((u, d2));
            }
        }
        let (target, _) = best.expect("at least one other cluster");
        warnings.push(alloc::format!(
            "cluster {} has a single member; merged into cluster {}",
            lone,
            target
        ));
        labels[member] = target;
    }

    let unique_count = {
        let mut u = labels.clone();
        u.sort_unstable();
        u.dedup();
        u.len()
    };
    let fit = if unique_count < 2 {
        fit_reward_model(human, model)?
    } else {
        let (design, names) = build_cluster_design(model, &labels)?;
        let name_refs: Vec<&str> = names.iter().map(|s| s.as_str()).collect();
        ols_fit_named(&design, human, &name_refs)?
    };
    Ok(ClusteredFit { fit, clusters_used: labels, warnings })
}
